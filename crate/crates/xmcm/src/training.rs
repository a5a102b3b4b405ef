//! Mini-batch training: joint Adam optimization of both towers and the
//! shared prototype, with one uniformly sampled negative music per pair.
//!
//! Everything is a deterministic function of (seed, dataset, config). The
//! random stream is consumed in a fixed order: one epoch shuffle, then one
//! negative draw per pair in batch order.

use crate::data::{DatasetManifest, FeatureStore, Split, StoreDims};
use crate::encoder::{EncoderGradients, EncoderParams, InputDims, TowerFeatures};
use crate::error::{Error, Result};
use crate::losses::{total_loss, LossConfig, SimilarityKind};
use crate::numerics::{Matrix, Rng, Vector};

/// All scalars of a training run. Defaults mirror the published full-scale
/// recipe; [`TrainConfig::desk_scale`] is the profile small synthetic runs
/// use.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub loss: LossConfig,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossConfig::default(),
            learning_rate: 1e-5,
            weight_decay: 0.002,
            batch_size: 128,
            epochs: 50,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    /// Profile for small synthetic datasets: the full-scale learning rate is
    /// far too low for a few thousand samples.
    pub fn desk_scale() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 200,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config(format!(
                "weight_decay must be >= 0, got {}",
                self.weight_decay
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must lie in (0, 1), got {b}")));
            }
        }
        if !self.adam_eps.is_finite() || self.adam_eps <= 0.0 {
            return Err(Error::Config(format!(
                "adam_eps must be positive, got {}",
                self.adam_eps
            )));
        }
        Ok(())
    }
}

/// Which feature blocks feed the music tower.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MusicInputs {
    /// Low-level and high-level blocks, fused by concatenation.
    Dual,
    /// High-level block only (the ablation without low-level features).
    HighOnly,
}

impl MusicInputs {
    /// Tower input dims implied by a music store.
    pub fn tower_input_dims(&self, store_dims: StoreDims) -> Result<InputDims> {
        match (self, store_dims) {
            (MusicInputs::Dual, StoreDims::Dual(a, b)) => Ok(InputDims::Two(a, b)),
            (MusicInputs::HighOnly, StoreDims::Dual(_, b)) => Ok(InputDims::One(b)),
            (MusicInputs::HighOnly, StoreDims::Single(d)) => Ok(InputDims::One(d)),
            (MusicInputs::Dual, StoreDims::Single(_)) => Err(Error::Config(
                "music store has a single block, cannot feed a dual-input tower".into(),
            )),
        }
    }

    /// Adapts one music store row to the tower input.
    pub fn extract(&self, row: &TowerFeatures) -> Result<TowerFeatures> {
        match (self, row) {
            (MusicInputs::Dual, TowerFeatures::Two(a, b)) => {
                Ok(TowerFeatures::Two(a.clone(), b.clone()))
            }
            (MusicInputs::HighOnly, TowerFeatures::Two(_, b)) => Ok(TowerFeatures::One(b.clone())),
            (MusicInputs::HighOnly, TowerFeatures::One(v)) => Ok(TowerFeatures::One(v.clone())),
            (MusicInputs::Dual, TowerFeatures::One(_)) => Err(Error::Config(
                "music row has a single block, cannot feed a dual-input tower".into(),
            )),
        }
    }

    /// Infers the configuration a trained music tower was built with.
    pub fn from_encoder(enc: &EncoderParams) -> MusicInputs {
        match enc.input_dims() {
            InputDims::Two(..) => MusicInputs::Dual,
            InputDims::One(_) => MusicInputs::HighOnly,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            MusicInputs::Dual => "dual",
            MusicInputs::HighOnly => "high_only",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "dual" => Some(MusicInputs::Dual),
            "high_only" => Some(MusicInputs::HighOnly),
            _ => None,
        }
    }
}

/// Both towers and the shared prototype: everything the optimizer touches.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub video_encoder: EncoderParams,
    pub music_encoder: EncoderParams,
    /// One row per training music class; doubles as the seen-set catalog.
    pub prototype: Matrix,
}

impl ModelState {
    /// Initializes both towers and the prototype. The prototype uses the
    /// same fan-in-scaled uniform rule as encoder layers. The random stream
    /// is consumed in the order video tower, music tower, prototype.
    pub fn init(
        video_dim: usize,
        music_dims: InputDims,
        hidden: &[usize],
        embedding_dim: usize,
        n_classes: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        if n_classes == 0 {
            return Err(Error::Config("need at least one training class".into()));
        }
        let video_encoder = EncoderParams::init(InputDims::One(video_dim), hidden, embedding_dim, rng)?;
        let music_encoder = EncoderParams::init(music_dims, hidden, embedding_dim, rng)?;
        let scale = 1.0 / (embedding_dim as f64).sqrt();
        let prototype = Matrix::from_fn(n_classes, embedding_dim, |_, _| rng.uniform(-scale, scale));
        Ok(Self {
            video_encoder,
            music_encoder,
            prototype,
        })
    }

    pub fn embedding_dim(&self) -> usize {
        self.video_encoder.output_dim()
    }

    pub fn n_classes(&self) -> usize {
        self.prototype.rows()
    }

    /// Structural sanity: both towers share the embedding dimension and the
    /// prototype matches it.
    pub fn validate_shapes(&self) -> Result<()> {
        let l = self.video_encoder.output_dim();
        if self.music_encoder.output_dim() != l {
            return Err(Error::DimMismatch(format!(
                "video tower outputs {l}, music tower outputs {}",
                self.music_encoder.output_dim()
            )));
        }
        if self.prototype.cols() != l {
            return Err(Error::DimMismatch(format!(
                "prototype has {} cols, embedding dim is {l}",
                self.prototype.cols()
            )));
        }
        Ok(())
    }

    /// Checks the model against a dataset's feature dimensions.
    pub fn validate_against(
        &self,
        video_store: &FeatureStore,
        music_store: &FeatureStore,
    ) -> Result<()> {
        self.validate_shapes()?;
        let StoreDims::Single(vd) = video_store.dims() else {
            return Err(Error::DimMismatch("video store must be single-block".into()));
        };
        if self.video_encoder.input_dims() != InputDims::One(vd) {
            return Err(Error::DimMismatch(format!(
                "video tower expects {:?}, store provides dim {vd}",
                self.video_encoder.input_dims()
            )));
        }
        let inputs = MusicInputs::from_encoder(&self.music_encoder);
        let expect = inputs.tower_input_dims(music_store.dims())?;
        if self.music_encoder.input_dims() != expect {
            return Err(Error::DimMismatch(format!(
                "music tower expects {:?}, store provides {:?}",
                self.music_encoder.input_dims(),
                expect
            )));
        }
        Ok(())
    }

    /// Every parameter tensor as a flat slice, in the fixed order: video
    /// tower layers (weight, bias each), music tower layers, prototype.
    /// This order is shared by [`ModelGradients`], [`AdamState`], and the
    /// checkpoint format.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for enc in [&self.video_encoder, &self.music_encoder] {
            for layer in enc.layers() {
                out.push(layer.weight.as_slice());
                out.push(layer.bias.as_slice());
            }
        }
        out.push(self.prototype.as_slice());
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for enc in [&mut self.video_encoder, &mut self.music_encoder] {
            for layer in enc.layers_mut() {
                out.push(layer.weight.as_mut_slice());
                out.push(layer.bias.as_mut_slice());
            }
        }
        out.push(self.prototype.as_mut_slice());
        out
    }
}

/// Gradients for every tensor of a [`ModelState`].
#[derive(Debug, Clone)]
pub struct ModelGradients {
    pub video: EncoderGradients,
    pub music: EncoderGradients,
    pub prototype: Matrix,
}

impl ModelGradients {
    pub fn zeros_like(model: &ModelState) -> Self {
        Self {
            video: EncoderGradients::zeros_like(&model.video_encoder),
            music: EncoderGradients::zeros_like(&model.music_encoder),
            prototype: Matrix::zeros(model.prototype.rows(), model.prototype.cols()),
        }
    }

    /// Same tensor order as [`ModelState::tensors`].
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for enc in [&self.video, &self.music] {
            for (w, b) in enc.weights.iter().zip(&enc.biases) {
                out.push(w.as_slice());
                out.push(b.as_slice());
            }
        }
        out.push(self.prototype.as_slice());
        out
    }
}

/// Adam moment accumulators, aligned with [`ModelState::tensors`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub(crate) m: Vec<Vec<f64>>,
    pub(crate) v: Vec<Vec<f64>>,
    pub(crate) t: u64,
}

impl AdamState {
    pub fn new(model: &ModelState) -> Self {
        let shapes: Vec<usize> = model.tensors().iter().map(|t| t.len()).collect();
        Self {
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    pub fn from_parts(m: Vec<Vec<f64>>, v: Vec<Vec<f64>>, t: u64, model: &ModelState) -> Result<Self> {
        let shapes: Vec<usize> = model.tensors().iter().map(|t| t.len()).collect();
        let ok = m.len() == shapes.len()
            && v.len() == shapes.len()
            && m.iter().zip(&shapes).all(|(a, &n)| a.len() == n)
            && v.iter().zip(&shapes).all(|(a, &n)| a.len() == n);
        if !ok {
            return Err(Error::DimMismatch(
                "optimizer moments do not match the model's tensor shapes".into(),
            ));
        }
        Ok(Self { m, v, t })
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// Bias-corrected Adam update of a single tensor. Weight decay enters as an
/// extra `decay * theta` term added to the gradient before the moment
/// updates (coupled form).
pub fn adam_update_tensor(
    param: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    cfg: &TrainConfig,
) {
    let bc1 = 1.0 - cfg.adam_beta1.powi(t as i32);
    let bc2 = 1.0 - cfg.adam_beta2.powi(t as i32);
    for i in 0..param.len() {
        let g = grad[i] + cfg.weight_decay * param[i];
        m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * g;
        v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        param[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_eps);
    }
}

/// One Adam step over every model tensor jointly.
pub fn adam_step(
    model: &mut ModelState,
    grads: &ModelGradients,
    state: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<()> {
    let grad_tensors = grads.tensors();
    let mut params = model.tensors_mut();
    if grad_tensors.len() != params.len()
        || state.m.len() != params.len()
        || grad_tensors
            .iter()
            .zip(params.iter())
            .any(|(g, p)| g.len() != p.len())
        || state
            .m
            .iter()
            .zip(params.iter())
            .any(|(m, p)| m.len() != p.len())
    {
        return Err(Error::DimMismatch(
            "gradient/optimizer shapes do not match the model".into(),
        ));
    }
    state.t += 1;
    for (i, param) in params.iter_mut().enumerate() {
        adam_update_tensor(
            param,
            grad_tensors[i],
            &mut state.m[i],
            &mut state.v[i],
            state.t,
            cfg,
        );
    }
    Ok(())
}

/// Draws a class index different from `y`, uniform over the remaining
/// classes.
pub fn sample_negative(rng: &mut Rng, n_classes: usize, y: usize) -> Result<usize> {
    rng.choice_excluding(n_classes, y)
}

/// One training pair with its sampled negative, ready for the objective.
pub struct BatchItem<'a> {
    pub video: &'a TowerFeatures,
    pub music_pos: &'a TowerFeatures,
    pub music_neg: &'a TowerFeatures,
    pub y: usize,
}

/// Batch-averaged combined objective and its gradients over every model
/// parameter. Pure in the model: this is the function the optimizer steps
/// on, and the function finite differences are taken against.
pub fn batch_objective(
    model: &ModelState,
    items: &[BatchItem<'_>],
    cfg: &LossConfig,
) -> Result<(f64, ModelGradients)> {
    if items.is_empty() {
        return Err(Error::Empty("batch is empty".into()));
    }
    let sim_active = cfg.beta != 0.0 && cfg.sim_kind != SimilarityKind::Off;
    let scale = 1.0 / items.len() as f64;
    let mut value = 0.0;
    let mut grads = ModelGradients::zeros_like(model);
    let zero_neg = Vector::zeros(model.embedding_dim());
    for item in items {
        if item.y >= model.n_classes() {
            return Err(Error::IndexOutOfRange(format!(
                "class {} not in [0, {})",
                item.y,
                model.n_classes()
            )));
        }
        let (v_emb, v_tape) = model.video_encoder.forward(item.video)?;
        let (m_emb, m_tape) = model.music_encoder.forward(item.music_pos)?;
        let neg = if sim_active {
            Some(model.music_encoder.forward(item.music_neg)?)
        } else {
            None
        };
        let neg_emb = neg.as_ref().map(|(e, _)| e).unwrap_or(&zero_neg);

        let loss = total_loss(&v_emb, &m_emb, neg_emb, item.y, &model.prototype, cfg)?;
        value += scale * loss.value;

        let v_grads = model.video_encoder.backward(&v_tape, &loss.d_video)?;
        grads.video.add_scaled(&v_grads, scale);
        let m_grads = model.music_encoder.backward(&m_tape, &loss.d_music_pos)?;
        grads.music.add_scaled(&m_grads, scale);
        if let Some((_, n_tape)) = &neg {
            let n_grads = model.music_encoder.backward(n_tape, &loss.d_music_neg)?;
            grads.music.add_scaled(&n_grads, scale);
        }
        grads.prototype.add_scaled(&loss.d_prototype, scale);
    }
    Ok((value, grads))
}

/// One video/class pair of a training or validation split.
#[derive(Debug, Clone)]
pub struct PairItem {
    pub video: TowerFeatures,
    pub y: usize,
}

/// Feature data reorganized for the training loop: train/val pairs plus the
/// per-class music features (one music item per training class).
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: Vec<PairItem>,
    pub val: Vec<PairItem>,
    pub music_by_class: Vec<TowerFeatures>,
    pub n_train_classes: usize,
}

impl PreparedData {
    pub fn build(
        video_store: &FeatureStore,
        music_store: &FeatureStore,
        manifest: &DatasetManifest,
        music_inputs: MusicInputs,
    ) -> Result<Self> {
        let n_train_classes = manifest.n_train_classes()?;
        let mut music_by_class = Vec::with_capacity(n_train_classes);
        for class in 0..n_train_classes {
            let id = crate::data::music_id(class);
            let row = music_store.get(&id).ok_or_else(|| {
                Error::Validation(format!("training class {class} has no music row {id}"))
            })?;
            music_by_class.push(music_inputs.extract(row)?);
        }
        let collect = |split: Split| -> Result<Vec<PairItem>> {
            manifest
                .entries_in(split)
                .map(|e| {
                    let row = video_store.get(&e.video_id).ok_or_else(|| {
                        Error::Validation(format!("video {} missing from store", e.video_id))
                    })?;
                    Ok(PairItem {
                        video: row.clone(),
                        y: e.class,
                    })
                })
                .collect()
        };
        Ok(Self {
            train: collect(Split::Train)?,
            val: collect(Split::Val)?,
            music_by_class,
            n_train_classes,
        })
    }
}

/// One optimization step over the given batch (indices into
/// `data.train`): forward both towers per pair, sample one negative music
/// per pair, average the combined objective, and apply one joint Adam step.
/// Returns the batch loss measured before the update.
pub fn train_step(
    model: &mut ModelState,
    adam: &mut AdamState,
    data: &PreparedData,
    batch: &[usize],
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Empty("batch is empty".into()));
    }
    let mut items = Vec::with_capacity(batch.len());
    for &idx in batch {
        let pair = &data.train[idx];
        let neg_class = sample_negative(rng, data.n_train_classes, pair.y)?;
        items.push(BatchItem {
            video: &pair.video,
            music_pos: &data.music_by_class[pair.y],
            music_neg: &data.music_by_class[neg_class],
            y: pair.y,
        });
    }
    let (loss, grads) = batch_objective(model, &items, &cfg.loss)?;
    adam_step(model, &grads, adam, cfg)?;
    Ok(loss)
}

/// Per-epoch training record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean per-sample loss over the epoch, measured before each update.
    pub loss: f64,
    /// Seen-style Recall@10 of the validation split against the prototype.
    pub val_recall10: f64,
}

/// Result of a full training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ModelState,
    pub adam: AdamState,
    pub history: Vec<EpochStats>,
    /// Epoch with the highest validation recall, if any epoch ran.
    pub best_val_epoch: Option<usize>,
}

/// Trains for `cfg.epochs` epochs: pairs are reshuffled each epoch with the
/// seeded generator, the final partial batch is kept, and validation
/// Recall@10 is evaluated after every epoch. Returns the final model (the
/// best-validation epoch is reported, not restored).
pub fn train(model: ModelState, data: &PreparedData, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    model.validate_shapes()?;
    if data.n_train_classes < 2 {
        return Err(Error::Config(format!(
            "training needs at least 2 classes, got {}",
            data.n_train_classes
        )));
    }
    if data.train.is_empty() {
        return Err(Error::Empty("train split is empty".into()));
    }
    if cfg.epochs > 0 && data.val.is_empty() {
        return Err(Error::Empty(
            "validation split is empty; per-epoch recall needs it".into(),
        ));
    }
    if model.n_classes() != data.n_train_classes {
        return Err(Error::DimMismatch(format!(
            "prototype has {} rows, dataset has {} training classes",
            model.n_classes(),
            data.n_train_classes
        )));
    }
    let mut model = model;
    let mut adam = AdamState::new(&model);
    let mut rng = Rng::new(cfg.seed);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..data.train.len()).collect();
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let loss = train_step(&mut model, &mut adam, data, chunk, cfg, &mut rng)?;
            loss_sum += loss * chunk.len() as f64;
        }
        let val_recall10 = validation_recall10(&model, data)?;
        history.push(EpochStats {
            epoch,
            loss: loss_sum / data.train.len() as f64,
            val_recall10,
        });
    }
    let best_val_epoch = history
        .iter()
        .max_by(|a, b| {
            a.val_recall10
                .partial_cmp(&b.val_recall10)
                .expect("recall values are finite")
        })
        .map(|e| e.epoch);
    Ok(TrainOutcome {
        model,
        adam,
        history,
        best_val_epoch,
    })
}

/// Seen-style Recall@10 of the validation pairs against the current
/// prototype rows.
fn validation_recall10(model: &ModelState, data: &PreparedData) -> Result<f64> {
    let catalog = crate::retrieval::build_seen_catalog(model)?;
    let mut results = Vec::with_capacity(data.val.len());
    let mut truths = Vec::with_capacity(data.val.len());
    for (i, pair) in data.val.iter().enumerate() {
        let result = crate::retrieval::match_video(
            model,
            &format!("val{i}"),
            &pair.video,
            &catalog,
            catalog.len(),
        )?;
        results.push(result);
        truths.push(crate::data::music_id(pair.y));
    }
    crate::retrieval::recall_at_k(&results, &truths, 10)
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use crate::data::synth::{generate, SynthSpec};
    use crate::losses::LiftKind;

    // Linear towers: a narrow ReLU layer can emit an exact-zero embedding,
    // which the angular losses reject.
    fn tiny_model(seed: u64) -> ModelState {
        let mut rng = Rng::new(seed);
        ModelState::init(5, InputDims::Two(2, 3), &[], 3, 4, &mut rng).unwrap()
    }

    fn hidden_model(seed: u64) -> ModelState {
        let mut rng = Rng::new(seed);
        ModelState::init(5, InputDims::Two(2, 3), &[8], 3, 4, &mut rng).unwrap()
    }

    fn tiny_data(seed: u64) -> PreparedData {
        let spec = SynthSpec {
            n_seen_classes: 4,
            n_unseen_classes: 2,
            vpm_train: 6,
            vpm_val: 2,
            vpm_seen_test: 2,
            vpm_unseen: 2,
            latent_dim: 3,
            video_dim: 5,
            music_low_dim: 2,
            music_high_dim: 3,
            noise_sigma: 0.05,
            min_center_angle_deg: 45.0,
            seed,
        };
        let ds = generate(&spec).unwrap();
        PreparedData::build(&ds.video_store, &ds.music_store, &ds.manifest, MusicInputs::Dual)
            .unwrap()
    }

    #[test]
    fn sample_negative_forced_and_deterministic() {
        let mut rng = Rng::new(1);
        assert_eq!(sample_negative(&mut rng, 2, 1).unwrap(), 0);
        let draw = |seed: u64| {
            let mut rng = Rng::new(seed);
            (0..50)
                .map(|_| sample_negative(&mut rng, 7, 3).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
        assert!(draw(9).iter().all(|&c| c != 3 && c < 7));
        assert!(sample_negative(&mut rng, 1, 0).is_err());
    }

    #[test]
    fn sample_negative_frequencies() {
        let mut rng = Rng::new(4);
        let mut counts = [0usize; 4];
        let n = 100_000;
        for _ in 0..n {
            counts[sample_negative(&mut rng, 4, 0).unwrap()] += 1;
        }
        assert_eq!(counts[0], 0);
        for k in 1..4 {
            let freq = counts[k] as f64 / n as f64;
            assert!((freq - 1.0 / 3.0).abs() < 0.02, "class {k}: {freq}");
        }
    }

    #[test]
    fn adam_zero_gradient_is_identity() {
        let mut model = tiny_model(2);
        let before = model.clone();
        let grads = ModelGradients::zeros_like(&model);
        let mut adam = AdamState::new(&model);
        let cfg = TrainConfig {
            weight_decay: 0.0,
            ..TrainConfig::desk_scale()
        };
        adam_step(&mut model, &grads, &mut adam, &cfg).unwrap();
        assert_eq!(model, before);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn adam_first_step_hand_computation() {
        // Scalar theta=1, g=0.5, lr=0.1: bias correction makes the first
        // update -lr * g/(|g| + eps) ~ -0.1.
        let cfg = TrainConfig {
            learning_rate: 0.1,
            weight_decay: 0.0,
            ..TrainConfig::default()
        };
        let mut param = [1.0];
        let mut m = [0.0];
        let mut v = [0.0];
        adam_update_tensor(&mut param, &[0.5], &mut m, &mut v, 1, &cfg);
        let expected = 1.0 - 0.1 * 0.5 / (0.5 + 1e-8);
        assert!((param[0] - expected).abs() < 1e-15, "{}", param[0]);
        assert!((param[0] - 0.9).abs() < 1e-8);
    }

    #[test]
    fn adam_is_deterministic() {
        let run = || {
            let mut model = tiny_model(3);
            let data = tiny_data(5);
            let mut adam = AdamState::new(&model);
            let mut rng = Rng::new(11);
            let cfg = TrainConfig::desk_scale();
            for _ in 0..5 {
                let batch: Vec<usize> = (0..8).collect();
                train_step(&mut model, &mut adam, &data, &batch, &cfg, &mut rng).unwrap();
            }
            model
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn adam_rejects_mismatched_shapes() {
        let mut model = tiny_model(2);
        let other = {
            let mut rng = Rng::new(1);
            ModelState::init(5, InputDims::Two(2, 3), &[6], 3, 4, &mut rng).unwrap()
        };
        let grads = ModelGradients::zeros_like(&other);
        let mut adam = AdamState::new(&model);
        let cfg = TrainConfig::desk_scale();
        assert!(adam_step(&mut model, &grads, &mut adam, &cfg).is_err());
    }

    #[test]
    fn disabled_terms_leave_music_tower_without_gradient() {
        let model = tiny_model(7);
        let data = tiny_data(8);
        let cfg = LossConfig {
            alpha: 0.0,
            beta: 0.0,
            ..LossConfig::default()
        };
        let items: Vec<BatchItem> = data.train[..4]
            .iter()
            .map(|p| BatchItem {
                video: &p.video,
                music_pos: &data.music_by_class[p.y],
                music_neg: &data.music_by_class[(p.y + 1) % data.n_train_classes],
                y: p.y,
            })
            .collect();
        let (_, grads) = batch_objective(&model, &items, &cfg).unwrap();
        for w in &grads.music.weights {
            assert!(w.as_slice().iter().all(|&g| g == 0.0));
        }
        for b in &grads.music.biases {
            assert!(b.iter().all(|&g| g == 0.0));
        }
        // the video tower still learns
        assert!(grads.video.weights[0].as_slice().iter().any(|&g| g != 0.0));
    }

    #[test]
    fn train_step_returns_pre_update_loss() {
        let mut model = tiny_model(9);
        let data = tiny_data(10);
        let cfg = TrainConfig::desk_scale();
        let mut adam = AdamState::new(&model);

        // Replay the negative sampling to rebuild the same batch, then
        // evaluate the objective at the pre-update parameters.
        let batch: Vec<usize> = (0..6).collect();
        let mut probe_rng = Rng::new(33);
        let mut items = Vec::new();
        for &idx in &batch {
            let pair = &data.train[idx];
            let neg = sample_negative(&mut probe_rng, data.n_train_classes, pair.y).unwrap();
            items.push(BatchItem {
                video: &pair.video,
                music_pos: &data.music_by_class[pair.y],
                music_neg: &data.music_by_class[neg],
                y: pair.y,
            });
        }
        let (expected, _) = batch_objective(&model, &items, &cfg.loss).unwrap();

        let mut rng = Rng::new(33);
        let got = train_step(&mut model, &mut adam, &data, &batch, &cfg, &mut rng).unwrap();
        assert_eq!(got, expected);
    }

    /// End-to-end gradient of the single-pair batch loss over every model
    /// parameter, against central finite differences.
    #[test]
    fn batch_objective_matches_finite_differences_end_to_end() {
        let data = tiny_data(21);
        for seed in 0..5u64 {
            let model = hidden_model(40 + seed);
            let pair = &data.train[seed as usize];
            let neg_class = (pair.y + 1) % data.n_train_classes;
            let items = vec![BatchItem {
                video: &pair.video,
                music_pos: &data.music_by_class[pair.y],
                music_neg: &data.music_by_class[neg_class],
                y: pair.y,
            }];
            let cfg = LossConfig {
                s: 4.0,
                lift_kind: if seed % 2 == 0 {
                    LiftKind::CosFace
                } else {
                    LiftKind::ArcFace
                },
                ..LossConfig::default()
            };
            let (_, grads) = batch_objective(&model, &items, &cfg).unwrap();
            let grad_tensors: Vec<Vec<f64>> =
                grads.tensors().iter().map(|t| t.to_vec()).collect();
            let h = 1e-5;
            for ti in 0..grad_tensors.len() {
                for i in 0..grad_tensors[ti].len() {
                    let eval = |delta: f64| {
                        let mut probe = model.clone();
                        probe.tensors_mut()[ti][i] += delta;
                        batch_objective(&probe, &items, &cfg).unwrap().0
                    };
                    let fd = (eval(h) - eval(-h)) / (2.0 * h);
                    let an = grad_tensors[ti][i];
                    // rel err < 1e-5 with an absolute floor for dead-ReLU zeros
                    assert!(
                        (an - fd).abs() < 1e-8 + 1e-5 * an.abs().max(fd.abs()),
                        "tensor {ti}[{i}]: {an} vs {fd}"
                    );
                }
            }
        }
    }

    #[test]
    fn train_zero_epochs_returns_initial_model() {
        let model = tiny_model(13);
        let data = tiny_data(14);
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::desk_scale()
        };
        let out = train(model.clone(), &data, &cfg).unwrap();
        assert_eq!(out.model, model);
        assert!(out.history.is_empty());
        assert_eq!(out.best_val_epoch, None);
    }

    #[test]
    fn train_same_seed_same_outcome() {
        let data = tiny_data(15);
        let cfg = TrainConfig {
            epochs: 3,
            ..TrainConfig::desk_scale()
        };
        let run = || train(tiny_model(16), &data, &cfg).unwrap();
        let (a, b) = (run(), run());
        assert_eq!(a.model, b.model);
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn training_loss_decreases_on_separable_data() {
        // Noiseless, well-separated classes: the epoch loss should fall
        // monotonically over the first epochs.
        let spec = SynthSpec {
            n_seen_classes: 4,
            n_unseen_classes: 2,
            vpm_train: 10,
            vpm_val: 2,
            vpm_seen_test: 2,
            vpm_unseen: 2,
            latent_dim: 4,
            video_dim: 6,
            music_low_dim: 3,
            music_high_dim: 4,
            noise_sigma: 0.0,
            min_center_angle_deg: 60.0,
            seed: 18,
        };
        let ds = generate(&spec).unwrap();
        let data =
            PreparedData::build(&ds.video_store, &ds.music_store, &ds.manifest, MusicInputs::Dual)
                .unwrap();
        let mut rng = Rng::new(19);
        let model = ModelState::init(6, InputDims::Two(3, 4), &[16], 8, 4, &mut rng).unwrap();
        let cfg = TrainConfig {
            epochs: 10,
            ..TrainConfig::desk_scale()
        };
        let out = train(model, &data, &cfg).unwrap();
        for pair in out.history.windows(2) {
            assert!(
                pair[1].loss < pair[0].loss,
                "loss rose between epoch {} ({}) and {} ({})",
                pair[0].epoch,
                pair[0].loss,
                pair[1].epoch,
                pair[1].loss
            );
        }
    }

    #[test]
    fn train_rejects_empty_split() {
        let data = PreparedData {
            train: vec![],
            val: vec![],
            music_by_class: vec![],
            n_train_classes: 2,
        };
        assert!(train(tiny_model(1), &data, &TrainConfig::desk_scale()).is_err());
    }
}
