//! Ingest externally extracted features through the text formats.
//!
//! The library never requires the synthetic generator: any pipeline that
//! writes the two feature files and a manifest can train and evaluate.
//! Music rows use the id convention `m<class>`; videos may use any ids.
//!
//! Run with: cargo run --example custom_features

use xmcm::data::{load_dir, music_id, Split};

fn main() -> xmcm::Result<()> {
    let dir = std::env::temp_dir().join("xmcm_custom_features");
    std::fs::create_dir_all(&dir)?;

    // A 2-class toy set, as an external extractor might emit it:
    // video features are 3-dimensional; music features have a 2-dim
    // low-level block and a 3-dim high-level block.
    std::fs::write(
        dir.join("video_features.txt"),
        "dim 3\n\
         clip_a 0.9 0.1 0.0\n\
         clip_b 0.8 0.2 0.1\n\
         clip_c 0.0 0.1 0.9\n\
         clip_d 0.1 0.0 0.95\n",
    )?;
    std::fs::write(
        dir.join("music_features.txt"),
        "dims 2 3\n\
         m0 0.5 0.5 1.0 0.0 0.0\n\
         m1 -0.5 0.5 0.0 0.0 1.0\n",
    )?;
    std::fs::write(
        dir.join("manifest.txt"),
        "# video_id class split\n\
         clip_a 0 train\n\
         clip_b 0 val\n\
         clip_c 1 train\n\
         clip_d 1 val\n",
    )?;

    let (video, music, manifest) = load_dir(&dir)?;
    println!(
        "loaded {} videos, {} music items, {} training classes",
        video.len(),
        music.len(),
        manifest.n_train_classes()?
    );
    for e in manifest.entries_in(Split::Train) {
        println!("  {} -> {} ({})", e.video_id, music_id(e.class), e.split.as_str());
    }

    // Malformed input is rejected with the offending location.
    std::fs::write(dir.join("broken.txt"), "dim 3\nrow_x 1 2\n")?;
    let err = xmcm::data::read_features(&dir.join("broken.txt")).unwrap_err();
    println!("malformed file rejected: {err}");
    Ok(())
}
