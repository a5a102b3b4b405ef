//! Ablation grid: similarity loss on/off crossed with dual vs
//! high-level-only music inputs, each trained identically and evaluated on
//! both splits.
//!
//! Run with: cargo run --example ablation_grid

use xmcm::data::synth::{generate, SynthSpec};
use xmcm::data::Split;
use xmcm::losses::LossConfig;
use xmcm::numerics::Rng;
use xmcm::retrieval::{evaluate, EvalMode};
use xmcm::training::{train, ModelState, MusicInputs, PreparedData, TrainConfig};

fn main() -> xmcm::Result<()> {
    let spec = SynthSpec {
        noise_sigma: 0.4, // harder data so the ablations spread out
        ..SynthSpec::easy(9)
    };
    let ds = generate(&spec)?;

    println!("beta\tmusic_inputs\tseen_r@1\tseen_r@5\tunseen_r@1\tunseen_r@5");
    for beta in [2.0, 0.0] {
        for inputs in [MusicInputs::Dual, MusicInputs::HighOnly] {
            let prepared =
                PreparedData::build(&ds.video_store, &ds.music_store, &ds.manifest, inputs)?;
            let cfg = TrainConfig {
                epochs: 60,
                loss: LossConfig {
                    beta,
                    ..LossConfig::default()
                },
                ..TrainConfig::desk_scale()
            };
            let mut rng = Rng::new(cfg.seed);
            let music_dims = inputs.tower_input_dims(ds.music_store.dims())?;
            let model = ModelState::init(
                spec.video_dim,
                music_dims,
                &[64],
                16,
                prepared.n_train_classes,
                &mut rng,
            )?;
            let outcome = train(model, &prepared, &cfg)?;
            let recalls = |split, mode| -> xmcm::Result<(f64, f64)> {
                let report = evaluate(
                    &outcome.model,
                    &ds.video_store,
                    &ds.music_store,
                    &ds.manifest,
                    split,
                    mode,
                    &[1, 5],
                )?;
                Ok((report.per_k[0].1, report.per_k[1].1))
            };
            let (s1, s5) = recalls(Split::SeenTest, EvalMode::Seen)?;
            let (u1, u5) = recalls(Split::UnseenTest, EvalMode::Unseen)?;
            println!(
                "{beta}\t{}\t{s1:.4}\t{s5:.4}\t{u1:.4}\t{u5:.4}",
                inputs.as_str()
            );
        }
    }
    Ok(())
}
