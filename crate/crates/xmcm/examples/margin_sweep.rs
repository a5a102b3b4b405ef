//! Margin sweep: train once per margin value for CosFace and ArcFace and
//! report seen-set recall@20 for each.
//!
//! Run with: cargo run --example margin_sweep

use xmcm::data::synth::{generate, SynthSpec};
use xmcm::data::Split;
use xmcm::losses::{LiftKind, LossConfig};
use xmcm::numerics::Rng;
use xmcm::retrieval::{evaluate, EvalMode};
use xmcm::training::{train, ModelState, MusicInputs, PreparedData, TrainConfig};

fn main() -> xmcm::Result<()> {
    // noisier than the easy profile so the sweep has something to show
    let spec = SynthSpec {
        noise_sigma: 0.5,
        ..SynthSpec::easy(5)
    };
    let ds = generate(&spec)?;
    let prepared = PreparedData::build(
        &ds.video_store,
        &ds.music_store,
        &ds.manifest,
        MusicInputs::Dual,
    )?;
    let music_dims = MusicInputs::Dual.tower_input_dims(ds.music_store.dims())?;

    println!("loss_kind\tmu\trecall@20");
    for kind in [LiftKind::CosFace, LiftKind::ArcFace] {
        for mu in [0.01, 0.05, 0.1, 0.15, 0.2] {
            let cfg = TrainConfig {
                epochs: 30,
                loss: LossConfig {
                    lift_kind: kind,
                    mu_lift: mu,
                    ..LossConfig::default()
                },
                ..TrainConfig::desk_scale()
            };
            let mut rng = Rng::new(cfg.seed);
            let model = ModelState::init(
                spec.video_dim,
                music_dims,
                &[64],
                16,
                prepared.n_train_classes,
                &mut rng,
            )?;
            let outcome = train(model, &prepared, &cfg)?;
            let report = evaluate(
                &outcome.model,
                &ds.video_store,
                &ds.music_store,
                &ds.manifest,
                Split::SeenTest,
                EvalMode::Seen,
                &[20],
            )?;
            println!("{}\t{mu}\t{:.4}", kind.as_str(), report.per_k[0].1);
        }
    }
    Ok(())
}
