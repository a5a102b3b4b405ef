//! Binary checkpoint format: bit-exact persistence of the model, the
//! optimizer moments, and the training configuration.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic           4 bytes  "XMCM"
//! version         u32      currently 1
//! config block             s, mu_lift, tau, alpha, beta        5 x f64
//!                          lift_kind, sim_kind                 2 x u64
//!                          learning_rate, weight_decay         2 x f64
//!                          batch_size, epochs, seed            3 x u64
//!                          adam_beta1, adam_beta2, adam_eps    3 x f64
//! video encoder   block    n_blocks u32, block dims (u64 each),
//!                          n_layers u32, then per layer:
//!                          activation u32 (0 relu, 1 identity),
//!                          weight tensor, bias tensor
//! music encoder   block    same layout
//! prototype       tensor
//! adam moments             per parameter tensor, in model tensor order:
//!                          first-moment tensor, second-moment tensor
//! step counter    u64
//! ```
//!
//! A tensor is `rank u32`, `dims (u64 each)`, then row-major f64 data. The
//! model tensor order is the one documented on `ModelState::tensors`.

use std::path::Path;

use crate::encoder::{Activation, EncoderParams, InputDims, LayerParams};
use crate::error::{Error, Result};
use crate::losses::{LiftKind, LossConfig, SimilarityKind};
use crate::numerics::{Matrix, Vector};
use crate::training::{AdamState, ModelState, TrainConfig};

const MAGIC: &[u8; 4] = b"XMCM";
const VERSION: u32 = 1;

fn lift_kind_code(kind: LiftKind) -> u64 {
    match kind {
        LiftKind::Softmax => 0,
        LiftKind::CosFace => 1,
        LiftKind::ArcFace => 2,
    }
}

fn lift_kind_from(code: u64) -> Result<LiftKind> {
    match code {
        0 => Ok(LiftKind::Softmax),
        1 => Ok(LiftKind::CosFace),
        2 => Ok(LiftKind::ArcFace),
        _ => Err(Error::Checkpoint(format!("unknown lift kind code {code}"))),
    }
}

fn sim_kind_code(kind: SimilarityKind) -> u64 {
    match kind {
        SimilarityKind::Difference => 0,
        SimilarityKind::Piecewise => 1,
        SimilarityKind::Off => 2,
    }
}

fn sim_kind_from(code: u64) -> Result<SimilarityKind> {
    match code {
        0 => Ok(SimilarityKind::Difference),
        1 => Ok(SimilarityKind::Piecewise),
        2 => Ok(SimilarityKind::Off),
        _ => Err(Error::Checkpoint(format!(
            "unknown similarity kind code {code}"
        ))),
    }
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn tensor(&mut self, dims: &[usize], data: &[f64]) {
        self.u32(dims.len() as u32);
        for &d in dims {
            self.u64(d as u64);
        }
        for &v in data {
            self.f64(v);
        }
    }
    fn encoder(&mut self, enc: &EncoderParams) {
        match enc.input_dims() {
            InputDims::One(d) => {
                self.u32(1);
                self.u64(d as u64);
            }
            InputDims::Two(a, b) => {
                self.u32(2);
                self.u64(a as u64);
                self.u64(b as u64);
            }
        }
        self.u32(enc.layers().len() as u32);
        for layer in enc.layers() {
            self.u32(match layer.activation {
                Activation::Relu => 0,
                Activation::Identity => 1,
            });
            self.tensor(
                &[layer.weight.rows(), layer.weight.cols()],
                layer.weight.as_slice(),
            );
            self.tensor(&[layer.bias.dim()], layer.bias.as_slice());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint("file truncated".into()));
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn usize64(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| Error::Checkpoint(format!("value {v} exceeds usize")))
    }
    fn tensor(&mut self, expect_rank: u32) -> Result<(Vec<usize>, Vec<f64>)> {
        let rank = self.u32()?;
        if rank != expect_rank {
            return Err(Error::Checkpoint(format!(
                "tensor rank {rank}, expected {expect_rank}"
            )));
        }
        let mut dims = Vec::with_capacity(rank as usize);
        for _ in 0..rank {
            dims.push(self.usize64()?);
        }
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&c| c <= (1 << 32))
            .ok_or_else(|| Error::Checkpoint(format!("tensor dims {dims:?} too large")))?;
        let mut data = Vec::with_capacity(count);
        for _ in 0..count {
            data.push(self.f64()?);
        }
        Ok((dims, data))
    }
    fn encoder(&mut self) -> Result<EncoderParams> {
        let n_blocks = self.u32()?;
        let input_dims = match n_blocks {
            1 => InputDims::One(self.usize64()?),
            2 => InputDims::Two(self.usize64()?, self.usize64()?),
            _ => {
                return Err(Error::Checkpoint(format!(
                    "encoder with {n_blocks} input blocks"
                )))
            }
        };
        let n_layers = self.u32()?;
        let mut layers = Vec::with_capacity(n_layers as usize);
        for _ in 0..n_layers {
            let activation = match self.u32()? {
                0 => Activation::Relu,
                1 => Activation::Identity,
                other => {
                    return Err(Error::Checkpoint(format!("unknown activation code {other}")))
                }
            };
            let (wdims, wdata) = self.tensor(2)?;
            let (bdims, bdata) = self.tensor(1)?;
            let weight = Matrix::new(wdims[0], wdims[1], wdata)
                .map_err(|e| Error::Checkpoint(e.to_string()))?;
            if bdims[0] != weight.rows() {
                return Err(Error::Checkpoint(format!(
                    "bias dim {} vs weight rows {}",
                    bdims[0],
                    weight.rows()
                )));
            }
            let bias = Vector::new(bdata).map_err(|e| Error::Checkpoint(e.to_string()))?;
            layers.push(LayerParams {
                weight,
                bias,
                activation,
            });
        }
        EncoderParams::from_layers(input_dims, layers)
            .map_err(|e| Error::Checkpoint(format!("inconsistent encoder: {e}")))
    }
}

/// Serializes model, optimizer state, and config. The round trip through
/// [`load_checkpoint`] is bit-exact.
pub fn save_checkpoint(
    path: &Path,
    model: &ModelState,
    adam: &AdamState,
    cfg: &TrainConfig,
) -> Result<()> {
    let mut w = Writer { buf: Vec::new() };
    w.buf.extend_from_slice(MAGIC);
    w.u32(VERSION);

    w.f64(cfg.loss.s);
    w.f64(cfg.loss.mu_lift);
    w.f64(cfg.loss.tau);
    w.f64(cfg.loss.alpha);
    w.f64(cfg.loss.beta);
    w.u64(lift_kind_code(cfg.loss.lift_kind));
    w.u64(sim_kind_code(cfg.loss.sim_kind));
    w.f64(cfg.learning_rate);
    w.f64(cfg.weight_decay);
    w.u64(cfg.batch_size as u64);
    w.u64(cfg.epochs as u64);
    w.u64(cfg.seed);
    w.f64(cfg.adam_beta1);
    w.f64(cfg.adam_beta2);
    w.f64(cfg.adam_eps);

    w.encoder(&model.video_encoder);
    w.encoder(&model.music_encoder);
    w.tensor(
        &[model.prototype.rows(), model.prototype.cols()],
        model.prototype.as_slice(),
    );

    for (m, v) in adam.m.iter().zip(&adam.v) {
        w.tensor(&[m.len()], m);
        w.tensor(&[v.len()], v);
    }
    w.u64(adam.t);

    std::fs::write(path, w.buf)?;
    Ok(())
}

/// Loads a checkpoint, validating the header, every shape, and that the
/// file is fully consumed. Returns an error (never partial state) on any
/// inconsistency.
pub fn load_checkpoint(path: &Path) -> Result<(ModelState, AdamState, TrainConfig)> {
    let buf = std::fs::read(path)?;
    let mut r = Reader { buf: &buf, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint(format!(
            "{} is not a checkpoint (bad magic)",
            path.display()
        )));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {version}"
        )));
    }

    let s = r.f64()?;
    let mu_lift = r.f64()?;
    let tau = r.f64()?;
    let alpha = r.f64()?;
    let beta = r.f64()?;
    let lift_kind = lift_kind_from(r.u64()?)?;
    let sim_kind = sim_kind_from(r.u64()?)?;
    let learning_rate = r.f64()?;
    let weight_decay = r.f64()?;
    let batch_size = r.usize64()?;
    let epochs = r.usize64()?;
    let seed = r.u64()?;
    let adam_beta1 = r.f64()?;
    let adam_beta2 = r.f64()?;
    let adam_eps = r.f64()?;
    let cfg = TrainConfig {
        loss: LossConfig {
            s,
            mu_lift,
            tau,
            alpha,
            beta,
            lift_kind,
            sim_kind,
        },
        learning_rate,
        weight_decay,
        batch_size,
        epochs,
        seed,
        adam_beta1,
        adam_beta2,
        adam_eps,
    };

    let video_encoder = r.encoder()?;
    let music_encoder = r.encoder()?;
    let (pdims, pdata) = r.tensor(2)?;
    let prototype =
        Matrix::new(pdims[0], pdims[1], pdata).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let model = ModelState {
        video_encoder,
        music_encoder,
        prototype,
    };
    model
        .validate_shapes()
        .map_err(|e| Error::Checkpoint(format!("inconsistent model: {e}")))?;

    let n_tensors = model.tensors().len();
    let mut m = Vec::with_capacity(n_tensors);
    let mut v = Vec::with_capacity(n_tensors);
    for _ in 0..n_tensors {
        m.push(r.tensor(1)?.1);
        v.push(r.tensor(1)?.1);
    }
    let t = r.u64()?;
    let adam = AdamState::from_parts(m, v, t, &model)
        .map_err(|e| Error::Checkpoint(format!("inconsistent optimizer state: {e}")))?;

    if r.pos != buf.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes after the step counter",
            buf.len() - r.pos
        )));
    }
    Ok((model, adam, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;
    use tempfile::tempdir;

    fn model_and_state(l: usize) -> (ModelState, AdamState, TrainConfig) {
        let mut rng = Rng::new(77);
        let model = ModelState::init(5, InputDims::Two(2, 3), &[4], l, 3, &mut rng).unwrap();
        let mut adam = AdamState::new(&model);
        // non-trivial moments so the round trip covers them
        for m in &mut adam.m {
            for (i, x) in m.iter_mut().enumerate() {
                *x = 0.01 * i as f64;
            }
        }
        adam.t = 17;
        (model, adam, TrainConfig::desk_scale())
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let (model, adam, cfg) = model_and_state(4);
        save_checkpoint(&path, &model, &adam, &cfg).unwrap();
        let (model2, adam2, cfg2) = load_checkpoint(&path).unwrap();
        assert_eq!(model, model2);
        assert_eq!(adam, adam2);
        assert_eq!(cfg, cfg2);
    }

    #[test]
    fn corrupted_magic_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let (model, adam, cfg) = model_and_state(4);
        save_checkpoint(&path, &model, &adam, &cfg).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'Y';
        std::fs::write(&path, bytes).unwrap();
        let err = load_checkpoint(&path).unwrap_err().to_string();
        assert!(err.contains("bad magic"), "{err}");
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let (model, adam, cfg) = model_and_state(4);
        save_checkpoint(&path, &model, &adam, &cfg).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(load_checkpoint(&path).is_err());
    }

    #[test]
    fn trailing_bytes_are_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let (model, adam, cfg) = model_and_state(4);
        save_checkpoint(&path, &model, &adam, &cfg).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.push(0);
        std::fs::write(&path, bytes).unwrap();
        let err = load_checkpoint(&path).unwrap_err().to_string();
        assert!(err.contains("trailing"), "{err}");
    }

    #[test]
    fn loaded_model_shape_mismatch_against_session_is_detected() {
        // a checkpoint trained at embedding dim 4 cannot serve a dataset
        // prepared for dim 8: the dimension check catches it
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let (model, adam, cfg) = model_and_state(4);
        save_checkpoint(&path, &model, &adam, &cfg).unwrap();
        let (loaded, _, _) = load_checkpoint(&path).unwrap();
        let mut rng = Rng::new(1);
        let bigger = ModelState::init(5, InputDims::Two(2, 3), &[4], 8, 3, &mut rng).unwrap();
        assert_eq!(loaded.embedding_dim(), 4);
        assert_ne!(loaded.embedding_dim(), bigger.embedding_dim());
        // direct structural check used by consumers before mixing states
        let err = AdamState::from_parts(
            vec![vec![0.0; 1]; loaded.tensors().len()],
            vec![vec![0.0; 1]; loaded.tensors().len()],
            0,
            &loaded,
        );
        assert!(err.is_err());
    }
}
