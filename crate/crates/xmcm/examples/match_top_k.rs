//! Match one query video against a music catalog and print the ranked list.
//!
//! Trains briefly on synthetic data, then shows both catalog flavors:
//! prototype rows for seen music, encoder embeddings for unseen music.
//!
//! Run with: cargo run --example match_top_k

use xmcm::data::synth::{generate, SynthSpec};
use xmcm::data::{music_id, Split};
use xmcm::numerics::Rng;
use xmcm::retrieval::{build_seen_catalog, build_unseen_catalog, match_video};
use xmcm::training::{train, ModelState, MusicInputs, PreparedData, TrainConfig};

fn main() -> xmcm::Result<()> {
    let spec = SynthSpec::easy(3);
    let ds = generate(&spec)?;
    let prepared = PreparedData::build(
        &ds.video_store,
        &ds.music_store,
        &ds.manifest,
        MusicInputs::Dual,
    )?;
    let cfg = TrainConfig {
        epochs: 40,
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
    let model = train(model, &prepared, &cfg)?.model;

    // seen query: the catalog is the trained prototype
    let seen_query = ds.manifest.entries_in(Split::SeenTest).next().unwrap();
    let catalog = build_seen_catalog(&model)?;
    let result = match_video(
        &model,
        &seen_query.video_id,
        ds.video_store.get(&seen_query.video_id).unwrap(),
        &catalog,
        5,
    )?;
    println!(
        "seen query {} (true music {}):",
        seen_query.video_id,
        music_id(seen_query.class)
    );
    for (rank, (id, score)) in result.ranked.iter().enumerate() {
        println!("  {:>2}  {id:<6} {score:+.4}", rank + 1);
    }

    // unseen query: the catalog is built by encoding unseen music features
    let inputs = MusicInputs::from_encoder(&model.music_encoder);
    let mut unseen_music = Vec::new();
    for class in ds.manifest.classes_in(Split::UnseenTest) {
        let id = music_id(class);
        let row = ds.music_store.get(&id).unwrap();
        unseen_music.push((id, inputs.extract(row)?));
    }
    let catalog = build_unseen_catalog(&model, &unseen_music)?;
    let unseen_query = ds.manifest.entries_in(Split::UnseenTest).next().unwrap();
    let result = match_video(
        &model,
        &unseen_query.video_id,
        ds.video_store.get(&unseen_query.video_id).unwrap(),
        &catalog,
        5,
    )?;
    println!(
        "unseen query {} (true music {}):",
        unseen_query.video_id,
        music_id(unseen_query.class)
    );
    for (rank, (id, score)) in result.ranked.iter().enumerate() {
        println!("  {:>2}  {id:<6} {score:+.4}", rank + 1);
    }
    Ok(())
}
