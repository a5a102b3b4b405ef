//! End-to-end run: generate data, train both towers against the shared
//! prototype, then evaluate seen and unseen retrieval.
//!
//! Seen music is ranked against the trained prototype rows; unseen music is
//! ranked against music-encoder embeddings. Both modes report Recall@K.
//!
//! Run with: cargo run --example train_and_evaluate

use xmcm::data::synth::{generate, SynthSpec};
use xmcm::data::Split;
use xmcm::numerics::Rng;
use xmcm::retrieval::{evaluate, EvalMode};
use xmcm::training::{train, ModelState, MusicInputs, PreparedData, TrainConfig};

fn main() -> xmcm::Result<()> {
    let spec = SynthSpec::easy(42);
    let ds = generate(&spec)?;
    let prepared = PreparedData::build(
        &ds.video_store,
        &ds.music_store,
        &ds.manifest,
        MusicInputs::Dual,
    )?;

    let cfg = TrainConfig {
        epochs: 60,
        ..TrainConfig::desk_scale()
    };
    let mut rng = Rng::new(cfg.seed);
    let music_dims = MusicInputs::Dual.tower_input_dims(ds.music_store.dims())?;
    let model = ModelState::init(
        spec.video_dim,
        music_dims,
        &[64],
        16,
        prepared.n_train_classes,
        &mut rng,
    )?;

    println!("training {} pairs for {} epochs...", prepared.train.len(), cfg.epochs);
    let outcome = train(model, &prepared, &cfg)?;
    for e in outcome.history.iter().step_by(10) {
        println!("  epoch {:>3}  loss {:>8.4}  val recall@10 {:.4}", e.epoch, e.loss, e.val_recall10);
    }
    if let Some(best) = outcome.best_val_epoch {
        println!("best validation epoch: {best}");
    }

    for (split, mode) in [
        (Split::SeenTest, EvalMode::Seen),
        (Split::UnseenTest, EvalMode::Unseen),
    ] {
        let report = evaluate(
            &outcome.model,
            &ds.video_store,
            &ds.music_store,
            &ds.manifest,
            split,
            mode,
            &[1, 5, 10, 20],
        )?;
        println!("{} music:", mode.as_str());
        print!("{}", report.render());
    }

    // Oracle yardstick: the nearest-center classifier with access to the
    // generator's hidden centers.
    let oracle = ds
        .oracle
        .recall_at_1(&ds.video_store, &ds.manifest, Split::SeenTest)?;
    println!("oracle seen recall@1: {oracle:.4}");
    Ok(())
}
