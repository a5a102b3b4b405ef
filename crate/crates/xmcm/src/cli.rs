//! Command-line surface: `gen`, `train`, `eval`, `match`, `sweep-margin`.
//!
//! Every command reads an optional flat `key = value` config file
//! (`--config`), with command-line flags overriding file values and file
//! values overriding built-in defaults. The fully resolved configuration is
//! echoed to `effective.cfg` in the output directory, so each run is
//! self-describing and can be reproduced byte-for-byte by feeding the echo
//! back as `--config`.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::data::synth::{generate, SynthSpec};
use crate::data::{
    load_dir, music_id, read_features, Split, StoreDims, MANIFEST_FILE, MUSIC_FEATURES_FILE,
    VIDEO_FEATURES_FILE,
};
use crate::error::{Error, Result};
use crate::losses::{LiftKind, SimilarityKind};
use crate::numerics::Rng;
use crate::retrieval::{build_seen_catalog, build_unseen_catalog, evaluate, match_video, EvalMode};
use crate::training::{train, ModelState, MusicInputs, PreparedData, TrainConfig};

pub const EFFECTIVE_CONFIG_FILE: &str = "effective.cfg";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const HISTORY_FILE: &str = "history.tsv";
pub const SWEEP_FILE: &str = "sweep.tsv";
pub const MATCHES_FILE: &str = "matches.tsv";

impl LiftKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            LiftKind::Softmax => "softmax",
            LiftKind::CosFace => "cosface",
            LiftKind::ArcFace => "arcface",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "softmax" => Some(LiftKind::Softmax),
            "cosface" => Some(LiftKind::CosFace),
            "arcface" => Some(LiftKind::ArcFace),
            _ => None,
        }
    }
}

impl SimilarityKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SimilarityKind::Difference => "difference",
            SimilarityKind::Piecewise => "piecewise",
            SimilarityKind::Off => "off",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "difference" => Some(SimilarityKind::Difference),
            "piecewise" => Some(SimilarityKind::Piecewise),
            "off" => Some(SimilarityKind::Off),
            _ => None,
        }
    }
}

/// Base profile a training run starts from before overrides.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Profile {
    /// Full-scale defaults (embedding 256, learning rate 1e-5).
    Full,
    /// Small-data profile (embedding 16, learning rate 1e-3).
    Desk,
}

/// Every recognized configuration key, each optional until resolution time.
#[derive(Debug, Default, Clone)]
struct Settings {
    seed: Option<u64>,
    // synthetic data
    n_seen_classes: Option<usize>,
    n_unseen_classes: Option<usize>,
    vpm_train: Option<usize>,
    vpm_val: Option<usize>,
    vpm_seen_test: Option<usize>,
    vpm_unseen: Option<usize>,
    latent_dim: Option<usize>,
    video_dim: Option<usize>,
    music_low_dim: Option<usize>,
    music_high_dim: Option<usize>,
    noise_sigma: Option<f64>,
    min_center_angle: Option<f64>,
    // objective + optimizer
    profile: Option<Profile>,
    s: Option<f64>,
    mu: Option<f64>,
    tau: Option<f64>,
    alpha: Option<f64>,
    beta: Option<f64>,
    lift_kind: Option<LiftKind>,
    sim_kind: Option<SimilarityKind>,
    learning_rate: Option<f64>,
    weight_decay: Option<f64>,
    batch_size: Option<usize>,
    epochs: Option<usize>,
    adam_beta1: Option<f64>,
    adam_beta2: Option<f64>,
    adam_eps: Option<f64>,
    embedding_dim: Option<usize>,
    hidden_dims: Option<Vec<usize>>,
    music_inputs: Option<MusicInputs>,
    // paths and retrieval options
    data: Option<PathBuf>,
    out: Option<PathBuf>,
    checkpoint: Option<PathBuf>,
    mode: Option<EvalMode>,
    k: Option<Vec<usize>>,
    top_k: Option<usize>,
    video_id: Option<String>,
    features: Option<PathBuf>,
    mus: Option<Vec<f64>>,
}

fn bad_value(key: &str, value: &str) -> Error {
    Error::Config(format!("invalid value {value:?} for key {key}"))
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| bad_value(key, value))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse().map_err(|_| bad_value(key, value)))
        .collect()
}

impl Settings {
    /// Sets one key from its textual form; unknown keys are rejected.
    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "seed" => self.seed = Some(parse_num(key, value)?),
            "n_seen_classes" => self.n_seen_classes = Some(parse_num(key, value)?),
            "n_unseen_classes" => self.n_unseen_classes = Some(parse_num(key, value)?),
            "vpm_train" => self.vpm_train = Some(parse_num(key, value)?),
            "vpm_val" => self.vpm_val = Some(parse_num(key, value)?),
            "vpm_seen_test" => self.vpm_seen_test = Some(parse_num(key, value)?),
            "vpm_unseen" => self.vpm_unseen = Some(parse_num(key, value)?),
            "latent_dim" => self.latent_dim = Some(parse_num(key, value)?),
            "video_dim" => self.video_dim = Some(parse_num(key, value)?),
            "music_low_dim" => self.music_low_dim = Some(parse_num(key, value)?),
            "music_high_dim" => self.music_high_dim = Some(parse_num(key, value)?),
            "noise_sigma" => self.noise_sigma = Some(parse_num(key, value)?),
            "min_center_angle" => self.min_center_angle = Some(parse_num(key, value)?),
            "profile" => {
                self.profile = Some(match value {
                    "full" => Profile::Full,
                    "desk" => Profile::Desk,
                    _ => return Err(bad_value(key, value)),
                })
            }
            "s" => self.s = Some(parse_num(key, value)?),
            "mu" => self.mu = Some(parse_num(key, value)?),
            "tau" => self.tau = Some(parse_num(key, value)?),
            "alpha" => self.alpha = Some(parse_num(key, value)?),
            "beta" => self.beta = Some(parse_num(key, value)?),
            "lift_kind" => {
                self.lift_kind = Some(LiftKind::parse(value).ok_or_else(|| bad_value(key, value))?)
            }
            "sim_kind" => {
                self.sim_kind =
                    Some(SimilarityKind::parse(value).ok_or_else(|| bad_value(key, value))?)
            }
            "learning_rate" => self.learning_rate = Some(parse_num(key, value)?),
            "weight_decay" => self.weight_decay = Some(parse_num(key, value)?),
            "batch_size" => self.batch_size = Some(parse_num(key, value)?),
            "epochs" => self.epochs = Some(parse_num(key, value)?),
            "adam_beta1" => self.adam_beta1 = Some(parse_num(key, value)?),
            "adam_beta2" => self.adam_beta2 = Some(parse_num(key, value)?),
            "adam_eps" => self.adam_eps = Some(parse_num(key, value)?),
            "embedding_dim" => self.embedding_dim = Some(parse_num(key, value)?),
            "hidden_dims" => self.hidden_dims = Some(parse_list(key, value)?),
            "music_inputs" => {
                self.music_inputs =
                    Some(MusicInputs::parse(value).ok_or_else(|| bad_value(key, value))?)
            }
            "data" => self.data = Some(PathBuf::from(value)),
            "out" => self.out = Some(PathBuf::from(value)),
            "checkpoint" => self.checkpoint = Some(PathBuf::from(value)),
            "mode" => {
                self.mode = Some(EvalMode::parse(value).ok_or_else(|| bad_value(key, value))?)
            }
            "k" => self.k = Some(parse_list(key, value)?),
            "top_k" => self.top_k = Some(parse_num(key, value)?),
            "video_id" => self.video_id = Some(value.to_string()),
            "features" => self.features = Some(PathBuf::from(value)),
            "mus" => self.mus = Some(parse_list(key, value)?),
            _ => return Err(Error::Config(format!("unknown configuration key {key:?}"))),
        }
        Ok(())
    }

    /// Parses a flat `key = value` file; `#` lines are comments.
    fn load_file(path: &Path) -> Result<Settings> {
        let text = std::fs::read_to_string(path)?;
        let mut settings = Settings::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "{}:{}: expected `key = value`, got {raw:?}",
                    path.display(),
                    idx + 1
                )));
            };
            settings.set(key.trim(), value)?;
        }
        Ok(settings)
    }
}

fn require<T: Clone>(opt: &Option<T>, flag: &str) -> Result<T> {
    opt.clone()
        .ok_or_else(|| Error::Config(format!("missing required option --{flag}")))
}

/// Resolved synthetic-data spec; defaults are the easy profile.
fn resolve_synth(s: &Settings) -> Result<SynthSpec> {
    let mut spec = SynthSpec::easy(s.seed.unwrap_or(0));
    if let Some(v) = s.n_seen_classes {
        spec.n_seen_classes = v;
    }
    if let Some(v) = s.n_unseen_classes {
        spec.n_unseen_classes = v;
    }
    if let Some(v) = s.vpm_train {
        spec.vpm_train = v;
    }
    if let Some(v) = s.vpm_val {
        spec.vpm_val = v;
    }
    if let Some(v) = s.vpm_seen_test {
        spec.vpm_seen_test = v;
    }
    if let Some(v) = s.vpm_unseen {
        spec.vpm_unseen = v;
    }
    if let Some(v) = s.latent_dim {
        spec.latent_dim = v;
    }
    if let Some(v) = s.video_dim {
        spec.video_dim = v;
    }
    if let Some(v) = s.music_low_dim {
        spec.music_low_dim = v;
    }
    if let Some(v) = s.music_high_dim {
        spec.music_high_dim = v;
    }
    if let Some(v) = s.noise_sigma {
        spec.noise_sigma = v;
    }
    if let Some(v) = s.min_center_angle {
        spec.min_center_angle_deg = v;
    }
    spec.validate()?;
    Ok(spec)
}

/// Resolved training setup: optimizer config plus model architecture.
struct TrainSetup {
    cfg: TrainConfig,
    embedding_dim: usize,
    hidden_dims: Vec<usize>,
    music_inputs: MusicInputs,
}

fn resolve_train(s: &Settings) -> Result<TrainSetup> {
    let profile = s.profile.unwrap_or(Profile::Full);
    let (mut cfg, mut embedding_dim) = match profile {
        Profile::Full => (TrainConfig::default(), 256),
        Profile::Desk => (TrainConfig::desk_scale(), 16),
    };
    if let Some(v) = s.seed {
        cfg.seed = v;
    }
    if let Some(v) = s.s {
        cfg.loss.s = v;
    }
    if let Some(v) = s.mu {
        cfg.loss.mu_lift = v;
    }
    if let Some(v) = s.tau {
        cfg.loss.tau = v;
    }
    if let Some(v) = s.alpha {
        cfg.loss.alpha = v;
    }
    if let Some(v) = s.beta {
        cfg.loss.beta = v;
    }
    if let Some(v) = s.lift_kind {
        cfg.loss.lift_kind = v;
    }
    if let Some(v) = s.sim_kind {
        cfg.loss.sim_kind = v;
    }
    if let Some(v) = s.learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = s.weight_decay {
        cfg.weight_decay = v;
    }
    if let Some(v) = s.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = s.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = s.adam_beta1 {
        cfg.adam_beta1 = v;
    }
    if let Some(v) = s.adam_beta2 {
        cfg.adam_beta2 = v;
    }
    if let Some(v) = s.adam_eps {
        cfg.adam_eps = v;
    }
    if let Some(v) = s.embedding_dim {
        embedding_dim = v;
    }
    let hidden_dims = s.hidden_dims.clone().unwrap_or_else(|| vec![64]);
    let music_inputs = s.music_inputs.unwrap_or(MusicInputs::Dual);
    cfg.validate()?;
    if embedding_dim == 0 {
        return Err(Error::Config("embedding_dim must be positive".into()));
    }
    Ok(TrainSetup {
        cfg,
        embedding_dim,
        hidden_dims,
        music_inputs,
    })
}

fn fmt_list<T: std::fmt::Display>(xs: &[T]) -> String {
    xs.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn write_echo(out_dir: &Path, entries: &[(&str, String)]) -> Result<()> {
    let mut sorted: Vec<&(&str, String)> = entries.iter().collect();
    sorted.sort_by_key(|(k, _)| *k);
    let mut text = String::new();
    for (k, v) in sorted {
        let _ = writeln!(text, "{k} = {v}");
    }
    std::fs::write(out_dir.join(EFFECTIVE_CONFIG_FILE), text)?;
    Ok(())
}

fn train_echo_entries(setup: &TrainSetup, data: &Path, out: &Path) -> Vec<(&'static str, String)> {
    let cfg = &setup.cfg;
    vec![
        ("seed", cfg.seed.to_string()),
        ("s", cfg.loss.s.to_string()),
        ("mu", cfg.loss.mu_lift.to_string()),
        ("tau", cfg.loss.tau.to_string()),
        ("alpha", cfg.loss.alpha.to_string()),
        ("beta", cfg.loss.beta.to_string()),
        ("lift_kind", cfg.loss.lift_kind.as_str().to_string()),
        ("sim_kind", cfg.loss.sim_kind.as_str().to_string()),
        ("learning_rate", cfg.learning_rate.to_string()),
        ("weight_decay", cfg.weight_decay.to_string()),
        ("batch_size", cfg.batch_size.to_string()),
        ("epochs", cfg.epochs.to_string()),
        ("adam_beta1", cfg.adam_beta1.to_string()),
        ("adam_beta2", cfg.adam_beta2.to_string()),
        ("adam_eps", cfg.adam_eps.to_string()),
        ("embedding_dim", setup.embedding_dim.to_string()),
        ("hidden_dims", fmt_list(&setup.hidden_dims)),
        ("music_inputs", setup.music_inputs.as_str().to_string()),
        ("data", data.display().to_string()),
        ("out", out.display().to_string()),
    ]
}

fn cmd_gen(s: &Settings) -> Result<()> {
    let out = require(&s.out, "out")?;
    let spec = resolve_synth(s)?;
    let ds = generate(&spec)?;
    ds.write_to_dir(&out)?;
    write_echo(
        &out,
        &[
            ("seed", spec.seed.to_string()),
            ("n_seen_classes", spec.n_seen_classes.to_string()),
            ("n_unseen_classes", spec.n_unseen_classes.to_string()),
            ("vpm_train", spec.vpm_train.to_string()),
            ("vpm_val", spec.vpm_val.to_string()),
            ("vpm_seen_test", spec.vpm_seen_test.to_string()),
            ("vpm_unseen", spec.vpm_unseen.to_string()),
            ("latent_dim", spec.latent_dim.to_string()),
            ("video_dim", spec.video_dim.to_string()),
            ("music_low_dim", spec.music_low_dim.to_string()),
            ("music_high_dim", spec.music_high_dim.to_string()),
            ("noise_sigma", spec.noise_sigma.to_string()),
            ("min_center_angle", spec.min_center_angle_deg.to_string()),
            ("out", out.display().to_string()),
        ],
    )?;
    let count = |split: Split| ds.manifest.entries_in(split).count();
    println!("classes_seen\t{}", spec.n_seen_classes);
    println!("classes_unseen\t{}", spec.n_unseen_classes);
    println!("videos_train\t{}", count(Split::Train));
    println!("videos_val\t{}", count(Split::Val));
    println!("videos_seen_test\t{}", count(Split::SeenTest));
    println!("videos_unseen_test\t{}", count(Split::UnseenTest));
    eprintln!(
        "wrote {}, {}, {} to {}",
        VIDEO_FEATURES_FILE,
        MUSIC_FEATURES_FILE,
        MANIFEST_FILE,
        out.display()
    );
    Ok(())
}

fn cmd_train(s: &Settings) -> Result<()> {
    let data_dir = require(&s.data, "data")?;
    let out = require(&s.out, "out")?;
    let setup = resolve_train(s)?;
    std::fs::create_dir_all(&out)?;

    let (video, music, manifest) = load_dir(&data_dir)?;
    let prepared = PreparedData::build(&video, &music, &manifest, setup.music_inputs)?;
    let StoreDims::Single(video_dim) = video.dims() else {
        return Err(Error::DimMismatch("video store must be single-block".into()));
    };
    let music_dims = setup.music_inputs.tower_input_dims(music.dims())?;
    let mut rng = Rng::new(setup.cfg.seed);
    let model = ModelState::init(
        video_dim,
        music_dims,
        &setup.hidden_dims,
        setup.embedding_dim,
        prepared.n_train_classes,
        &mut rng,
    )?;

    let outcome = train(model, &prepared, &setup.cfg)?;

    write_echo(&out, &train_echo_entries(&setup, &data_dir, &out))?;
    let mut history = String::new();
    for e in &outcome.history {
        let line = format!("{}\t{}\t{:.4}", e.epoch, e.loss, e.val_recall10);
        println!("{line}");
        let _ = writeln!(history, "{line}");
    }
    std::fs::write(out.join(HISTORY_FILE), history)?;
    save_checkpoint(&out.join(CHECKPOINT_FILE), &outcome.model, &outcome.adam, &setup.cfg)?;
    if let Some(best) = outcome.best_val_epoch {
        eprintln!("best validation epoch: {best}");
    }
    eprintln!("checkpoint written to {}", out.join(CHECKPOINT_FILE).display());
    Ok(())
}

fn split_for(mode: EvalMode) -> Split {
    match mode {
        EvalMode::Seen => Split::SeenTest,
        EvalMode::Unseen => Split::UnseenTest,
    }
}

fn cmd_eval(s: &Settings) -> Result<()> {
    let checkpoint = require(&s.checkpoint, "checkpoint")?;
    let data_dir = require(&s.data, "data")?;
    let mode = s.mode.unwrap_or(EvalMode::Seen);
    let ks = s.k.clone().unwrap_or_else(|| vec![1, 5, 10, 20]);
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::Config("k values must be positive".into()));
    }

    let (model, _, _) = load_checkpoint(&checkpoint)?;
    let (video, music, manifest) = load_dir(&data_dir)?;
    model.validate_against(&video, &music)?;
    let report = evaluate(&model, &video, &music, &manifest, split_for(mode), mode, &ks)?;
    print!("{}", report.render());
    if let Some(out) = &s.out {
        std::fs::create_dir_all(out)?;
        std::fs::write(out.join(format!("report_{}.tsv", mode.as_str())), report.render())?;
        write_echo(
            out,
            &[
                ("checkpoint", checkpoint.display().to_string()),
                ("data", data_dir.display().to_string()),
                ("mode", mode.as_str().to_string()),
                ("k", fmt_list(&ks)),
                ("out", out.display().to_string()),
            ],
        )?;
    }
    Ok(())
}

fn cmd_match(s: &Settings) -> Result<()> {
    let checkpoint = require(&s.checkpoint, "checkpoint")?;
    let data_dir = require(&s.data, "data")?;
    let mode = s.mode.unwrap_or(EvalMode::Seen);
    let top_k = s.top_k.unwrap_or(20);
    if top_k == 0 {
        return Err(Error::Config("top_k must be positive".into()));
    }

    let (model, _, _) = load_checkpoint(&checkpoint)?;
    let (video, music, manifest) = load_dir(&data_dir)?;
    model.validate_against(&video, &music)?;

    let (query_id, query) = match (&s.video_id, &s.features) {
        (Some(id), None) => {
            let row = video.get(id).ok_or_else(|| {
                Error::Validation(format!("video id {id} not found in the video store"))
            })?;
            (id.clone(), row.clone())
        }
        (None, Some(path)) => {
            let store = read_features(path)?;
            if store.len() != 1 {
                return Err(Error::Validation(format!(
                    "query feature file must contain exactly one row, found {}",
                    store.len()
                )));
            }
            let (id, row) = store.iter().next().expect("one row");
            (id.clone(), row.clone())
        }
        _ => {
            return Err(Error::Config(
                "provide exactly one of --video-id or --features".into(),
            ))
        }
    };

    let catalog = match mode {
        EvalMode::Seen => build_seen_catalog(&model)?,
        EvalMode::Unseen => {
            let inputs = MusicInputs::from_encoder(&model.music_encoder);
            let mut rows = Vec::new();
            for class in manifest.classes_in(Split::UnseenTest) {
                let id = music_id(class);
                let row = music.get(&id).ok_or_else(|| {
                    Error::Validation(format!("class {class} has no music row {id}"))
                })?;
                rows.push((id, inputs.extract(row)?));
            }
            build_unseen_catalog(&model, &rows)?
        }
    };

    let result = match_video(&model, &query_id, &query, &catalog, top_k)?;
    let mut text = String::new();
    for (rank, (id, score)) in result.ranked.iter().enumerate() {
        let _ = writeln!(text, "{}\t{id}\t{score:.6}", rank + 1);
    }
    print!("{text}");
    if let Some(out) = &s.out {
        std::fs::create_dir_all(out)?;
        std::fs::write(out.join(MATCHES_FILE), &text)?;
        write_echo(
            out,
            &[
                ("checkpoint", checkpoint.display().to_string()),
                ("data", data_dir.display().to_string()),
                ("mode", mode.as_str().to_string()),
                ("top_k", top_k.to_string()),
                ("video_id", query_id),
                ("out", out.display().to_string()),
            ],
        )?;
    }
    Ok(())
}

fn cmd_sweep_margin(s: &Settings) -> Result<()> {
    let data_dir = require(&s.data, "data")?;
    let out = require(&s.out, "out")?;
    let setup = resolve_train(s)?;
    let mus = s.mus.clone().unwrap_or_else(|| vec![0.01, 0.05, 0.1, 0.15, 0.2]);
    if mus.is_empty() {
        return Err(Error::Config("mus must list at least one margin".into()));
    }
    std::fs::create_dir_all(&out)?;

    let (video, music, manifest) = load_dir(&data_dir)?;
    let prepared = PreparedData::build(&video, &music, &manifest, setup.music_inputs)?;
    let StoreDims::Single(video_dim) = video.dims() else {
        return Err(Error::DimMismatch("video store must be single-block".into()));
    };
    let music_dims = setup.music_inputs.tower_input_dims(music.dims())?;

    let mut lines = String::new();
    for kind in [LiftKind::CosFace, LiftKind::ArcFace] {
        for &mu in &mus {
            let mut cfg = setup.cfg;
            cfg.loss.lift_kind = kind;
            cfg.loss.mu_lift = mu;
            cfg.validate()?;
            let mut rng = Rng::new(cfg.seed);
            let model = ModelState::init(
                video_dim,
                music_dims,
                &setup.hidden_dims,
                setup.embedding_dim,
                prepared.n_train_classes,
                &mut rng,
            )?;
            let outcome = train(model, &prepared, &cfg)?;
            let report = evaluate(
                &outcome.model,
                &video,
                &music,
                &manifest,
                Split::SeenTest,
                EvalMode::Seen,
                &[20],
            )?;
            let recall20 = report.per_k[0].1;
            let line = format!("{}\t{mu}\t{recall20:.4}", kind.as_str());
            println!("{line}");
            let _ = writeln!(lines, "{line}");
        }
    }
    std::fs::write(out.join(SWEEP_FILE), &lines)?;
    let mut entries = train_echo_entries(&setup, &data_dir, &out);
    entries.retain(|(k, _)| *k != "mu");
    entries.push(("mus", fmt_list(&mus)));
    write_echo(&out, &entries)?;
    Ok(())
}

#[derive(Parser)]
#[command(
    name = "xmcm",
    version,
    about = "Two-tower cross-modal matching: train video/music encoders and evaluate retrieval"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

// Flags are collected as raw strings and funneled through the same parser
// as config-file values, so both paths validate identically.
#[derive(clap::Args, Default)]
struct KeyValueArgs {
    /// Flat `key = value` config file; flags override file values
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    checkpoint: Option<String>,
    /// seen | unseen
    #[arg(long)]
    mode: Option<String>,
    /// Comma-separated recall cutoffs, e.g. 1,5,10,20
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    top_k: Option<String>,
}

#[derive(clap::Args, Default)]
struct SynthArgs {
    #[arg(long)]
    n_seen_classes: Option<String>,
    #[arg(long)]
    n_unseen_classes: Option<String>,
    #[arg(long)]
    vpm_train: Option<String>,
    #[arg(long)]
    vpm_val: Option<String>,
    #[arg(long)]
    vpm_seen_test: Option<String>,
    #[arg(long)]
    vpm_unseen: Option<String>,
    #[arg(long)]
    latent_dim: Option<String>,
    #[arg(long)]
    video_dim: Option<String>,
    #[arg(long)]
    music_low_dim: Option<String>,
    #[arg(long)]
    music_high_dim: Option<String>,
    #[arg(long)]
    noise_sigma: Option<String>,
    #[arg(long)]
    min_center_angle: Option<String>,
}

#[derive(clap::Args, Default)]
struct TrainArgs {
    /// full | desk (base defaults before overrides)
    #[arg(long)]
    profile: Option<String>,
    #[arg(long)]
    s: Option<String>,
    #[arg(long)]
    mu: Option<String>,
    #[arg(long)]
    tau: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    beta: Option<String>,
    /// softmax | cosface | arcface
    #[arg(long)]
    lift_kind: Option<String>,
    /// difference | piecewise | off
    #[arg(long)]
    sim_kind: Option<String>,
    #[arg(long)]
    learning_rate: Option<String>,
    #[arg(long)]
    weight_decay: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    adam_beta1: Option<String>,
    #[arg(long)]
    adam_beta2: Option<String>,
    #[arg(long)]
    adam_eps: Option<String>,
    #[arg(long)]
    embedding_dim: Option<String>,
    /// Comma-separated hidden layer widths, e.g. 64 or 128,64
    #[arg(long)]
    hidden_dims: Option<String>,
    /// dual | high_only
    #[arg(long)]
    music_inputs: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset directory
    Gen {
        #[command(flatten)]
        common: KeyValueArgs,
        #[command(flatten)]
        synth: SynthArgs,
    },
    /// Train both towers and the shared prototype on a dataset directory
    Train {
        #[command(flatten)]
        common: KeyValueArgs,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Recall@K report for a trained checkpoint
    Eval {
        #[command(flatten)]
        common: KeyValueArgs,
    },
    /// Ranked top-k music list for one query video
    Match {
        #[command(flatten)]
        common: KeyValueArgs,
        /// Query by id from the dataset's video store
        #[arg(long)]
        video_id: Option<String>,
        /// Query from a single-row feature file
        #[arg(long)]
        features: Option<String>,
    },
    /// Train once per margin value for CosFace and ArcFace, report recall@20
    SweepMargin {
        #[command(flatten)]
        common: KeyValueArgs,
        #[command(flatten)]
        train: TrainArgs,
        /// Comma-separated margin values, e.g. 0.01,0.05,0.1,0.15,0.2
        #[arg(long)]
        mus: Option<String>,
    },
}

fn apply_flag(settings: &mut Settings, key: &str, value: &Option<String>) -> Result<()> {
    if let Some(v) = value {
        settings.set(key, v)?;
    }
    Ok(())
}

fn apply_common(settings: &mut Settings, a: &KeyValueArgs) -> Result<()> {
    apply_flag(settings, "seed", &a.seed)?;
    apply_flag(settings, "out", &a.out)?;
    apply_flag(settings, "data", &a.data)?;
    apply_flag(settings, "checkpoint", &a.checkpoint)?;
    apply_flag(settings, "mode", &a.mode)?;
    apply_flag(settings, "k", &a.k)?;
    apply_flag(settings, "top_k", &a.top_k)?;
    Ok(())
}

fn apply_synth(settings: &mut Settings, a: &SynthArgs) -> Result<()> {
    apply_flag(settings, "n_seen_classes", &a.n_seen_classes)?;
    apply_flag(settings, "n_unseen_classes", &a.n_unseen_classes)?;
    apply_flag(settings, "vpm_train", &a.vpm_train)?;
    apply_flag(settings, "vpm_val", &a.vpm_val)?;
    apply_flag(settings, "vpm_seen_test", &a.vpm_seen_test)?;
    apply_flag(settings, "vpm_unseen", &a.vpm_unseen)?;
    apply_flag(settings, "latent_dim", &a.latent_dim)?;
    apply_flag(settings, "video_dim", &a.video_dim)?;
    apply_flag(settings, "music_low_dim", &a.music_low_dim)?;
    apply_flag(settings, "music_high_dim", &a.music_high_dim)?;
    apply_flag(settings, "noise_sigma", &a.noise_sigma)?;
    apply_flag(settings, "min_center_angle", &a.min_center_angle)?;
    Ok(())
}

fn apply_train(settings: &mut Settings, a: &TrainArgs) -> Result<()> {
    apply_flag(settings, "profile", &a.profile)?;
    apply_flag(settings, "s", &a.s)?;
    apply_flag(settings, "mu", &a.mu)?;
    apply_flag(settings, "tau", &a.tau)?;
    apply_flag(settings, "alpha", &a.alpha)?;
    apply_flag(settings, "beta", &a.beta)?;
    apply_flag(settings, "lift_kind", &a.lift_kind)?;
    apply_flag(settings, "sim_kind", &a.sim_kind)?;
    apply_flag(settings, "learning_rate", &a.learning_rate)?;
    apply_flag(settings, "weight_decay", &a.weight_decay)?;
    apply_flag(settings, "batch_size", &a.batch_size)?;
    apply_flag(settings, "epochs", &a.epochs)?;
    apply_flag(settings, "adam_beta1", &a.adam_beta1)?;
    apply_flag(settings, "adam_beta2", &a.adam_beta2)?;
    apply_flag(settings, "adam_eps", &a.adam_eps)?;
    apply_flag(settings, "embedding_dim", &a.embedding_dim)?;
    apply_flag(settings, "hidden_dims", &a.hidden_dims)?;
    apply_flag(settings, "music_inputs", &a.music_inputs)?;
    Ok(())
}

fn base_settings(config: &Option<PathBuf>) -> Result<Settings> {
    match config {
        Some(path) => Settings::load_file(path),
        None => Ok(Settings::default()),
    }
}

fn dispatch(command: &Command) -> Result<()> {
    match command {
        Command::Gen { common, synth } => {
            let mut s = base_settings(&common.config)?;
            apply_common(&mut s, common)?;
            apply_synth(&mut s, synth)?;
            cmd_gen(&s)
        }
        Command::Train { common, train } => {
            let mut s = base_settings(&common.config)?;
            apply_common(&mut s, common)?;
            apply_train(&mut s, train)?;
            cmd_train(&s)
        }
        Command::Eval { common } => {
            let mut s = base_settings(&common.config)?;
            apply_common(&mut s, common)?;
            cmd_eval(&s)
        }
        Command::Match {
            common,
            video_id,
            features,
        } => {
            let mut s = base_settings(&common.config)?;
            apply_common(&mut s, common)?;
            apply_flag(&mut s, "video_id", video_id)?;
            apply_flag(&mut s, "features", features)?;
            cmd_match(&s)
        }
        Command::SweepMargin { common, train, mus } => {
            let mut s = base_settings(&common.config)?;
            apply_common(&mut s, common)?;
            apply_train(&mut s, train)?;
            apply_flag(&mut s, "mus", mus)?;
            cmd_sweep_margin(&s)
        }
    }
}

/// Parses and runs one invocation, returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.exit_code() == 0 { 0 } else { 2 };
        }
    };
    match dispatch(&cli.command) {
        Ok(()) => 0,
        Err(Error::Config(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
