//! Two-tower cross-modal matching between videos and music.
//!
//! The library trains a video encoder and a music encoder into one shared
//! embedding space using margin-based angular losses (CosFace / ArcFace)
//! against a shared class-prototype head, plus a modality-to-modality
//! similarity loss with one sampled negative per pair. At test time, queries
//! are ranked by cosine similarity: seen music is matched against the trained
//! prototype rows, unseen music against encoder outputs, and quality is
//! reported as Recall@K.
//!
//! Start with the runnable programs under `examples/`, or the `xmcm` binary
//! (`gen`, `train`, `eval`, `match`, `sweep-margin`).
//!
//! ```
//! use xmcm::data::synth::{generate, SynthSpec};
//! use xmcm::data::Split;
//! use xmcm::numerics::Rng;
//! use xmcm::retrieval::{evaluate, EvalMode};
//! use xmcm::training::{train, ModelState, MusicInputs, PreparedData, TrainConfig};
//!
//! let spec = SynthSpec {
//!     n_seen_classes: 4,
//!     n_unseen_classes: 2,
//!     vpm_train: 6,
//!     vpm_val: 2,
//!     vpm_seen_test: 2,
//!     vpm_unseen: 2,
//!     latent_dim: 3,
//!     video_dim: 5,
//!     music_low_dim: 2,
//!     music_high_dim: 3,
//!     noise_sigma: 0.05,
//!     min_center_angle_deg: 45.0,
//!     seed: 7,
//! };
//! let ds = generate(&spec)?;
//! let prepared = PreparedData::build(
//!     &ds.video_store, &ds.music_store, &ds.manifest, MusicInputs::Dual,
//! )?;
//!
//! let cfg = TrainConfig { epochs: 20, ..TrainConfig::desk_scale() };
//! let music_dims = MusicInputs::Dual.tower_input_dims(ds.music_store.dims())?;
//! let model = ModelState::init(
//!     spec.video_dim, music_dims, &[16], 8, prepared.n_train_classes,
//!     &mut Rng::new(cfg.seed),
//! )?;
//! let outcome = train(model, &prepared, &cfg)?;
//!
//! let report = evaluate(
//!     &outcome.model, &ds.video_store, &ds.music_store, &ds.manifest,
//!     Split::SeenTest, EvalMode::Seen, &[1, 5],
//! )?;
//! assert!(report.per_k[1].1 >= report.per_k[0].1);
//! # Ok::<(), xmcm::Error>(())
//! ```

pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod encoder;
mod error;
pub mod losses;
pub mod numerics;
pub mod retrieval;
pub mod training;

pub use error::{Error, Result};
