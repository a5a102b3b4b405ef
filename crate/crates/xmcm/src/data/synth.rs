//! Deterministic synthetic datasets with the same many-to-one structure as
//! real video/music pairings.
//!
//! Each class owns one hidden unit-norm latent center. The single music item
//! of a class is produced by two fixed random linear maps of the center (the
//! low-level and high-level blocks); every video of the class is a third
//! fixed random linear map of the same center. All three maps get
//! per-coordinate Gaussian noise of width `noise_sigma`. Distinct maps per
//! modality create a real modality gap: towers must learn an alignment, they
//! cannot just copy inputs.
//!
//! Centers are drawn by rejection sampling until all pairwise angles reach
//! `min_center_angle_deg`, with a budget of 10^4 candidates per center.
//! Everything is a pure function of the seed.

use std::path::Path;

use super::{music_id, DatasetManifest, FeatureStore, ManifestEntry, Split, StoreDims};
use crate::encoder::TowerFeatures;
use crate::error::{Error, Result};
use crate::numerics::{cosine, l2_norm, matvec, Matrix, Rng, Vector};

const CENTER_RETRY_BUDGET: usize = 10_000;

/// Shape of a synthetic dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub n_seen_classes: usize,
    pub n_unseen_classes: usize,
    /// Videos per music class, per split.
    pub vpm_train: usize,
    pub vpm_val: usize,
    pub vpm_seen_test: usize,
    pub vpm_unseen: usize,
    pub latent_dim: usize,
    pub video_dim: usize,
    pub music_low_dim: usize,
    pub music_high_dim: usize,
    pub noise_sigma: f64,
    pub min_center_angle_deg: f64,
    pub seed: u64,
}

impl SynthSpec {
    /// Small, well-separated profile used by the examples and the
    /// acceptance runs: 30 seen + 10 unseen classes in an 8-dimensional
    /// latent space, centers at least 60 degrees apart, mild noise.
    pub fn easy(seed: u64) -> Self {
        Self {
            n_seen_classes: 30,
            n_unseen_classes: 10,
            vpm_train: 40,
            vpm_val: 4,
            vpm_seen_test: 8,
            vpm_unseen: 14,
            latent_dim: 8,
            video_dim: 24,
            music_low_dim: 10,
            music_high_dim: 14,
            noise_sigma: 0.05,
            min_center_angle_deg: 60.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_seen_classes + self.n_unseen_classes < 2 {
            return Err(Error::Config("need at least 2 classes in total".into()));
        }
        for (name, d) in [
            ("latent_dim", self.latent_dim),
            ("video_dim", self.video_dim),
            ("music_low_dim", self.music_low_dim),
            ("music_high_dim", self.music_high_dim),
        ] {
            if d == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.noise_sigma < 0.0 || !self.noise_sigma.is_finite() {
            return Err(Error::Config(format!(
                "noise_sigma must be finite and >= 0, got {}",
                self.noise_sigma
            )));
        }
        if !(0.0..180.0).contains(&self.min_center_angle_deg) {
            return Err(Error::Config(format!(
                "min_center_angle_deg must lie in [0, 180), got {}",
                self.min_center_angle_deg
            )));
        }
        Ok(())
    }

    pub fn n_classes(&self) -> usize {
        self.n_seen_classes + self.n_unseen_classes
    }
}

/// Nearest-center classifier with access to the generator's hidden state:
/// the latent class centers pushed through the video map. Used as a
/// performance yardstick a trained model is compared against.
#[derive(Debug, Clone)]
pub struct CenterOracle {
    video_centers: Vec<Vector>,
}

impl CenterOracle {
    /// Fraction of videos in `split` whose feature is closest (by cosine)
    /// to its own class's mapped center, among the candidate classes the
    /// retrieval protocol would rank for that split: the unseen-test split
    /// ranks its own classes, every other split ranks the training-side
    /// range.
    pub fn recall_at_1(
        &self,
        video_store: &FeatureStore,
        manifest: &DatasetManifest,
        split: Split,
    ) -> Result<f64> {
        let candidates: Vec<usize> = if split == Split::UnseenTest {
            manifest.classes_in(split).into_iter().collect()
        } else {
            (0..manifest.n_train_classes()?).collect()
        };
        if candidates.is_empty() {
            return Err(Error::Empty(format!("no classes for split {}", split.as_str())));
        }
        let mut hits = 0usize;
        let mut total = 0usize;
        for e in manifest.entries_in(split) {
            let Some(TowerFeatures::One(feat)) = video_store.get(&e.video_id) else {
                return Err(Error::Validation(format!(
                    "video {} missing from store",
                    e.video_id
                )));
            };
            let mut best = (f64::NEG_INFINITY, usize::MAX);
            for &k in &candidates {
                let c = cosine(feat, &self.video_centers[k])?;
                if c > best.0 {
                    best = (c, k);
                }
            }
            if best.1 == e.class {
                hits += 1;
            }
            total += 1;
        }
        if total == 0 {
            return Err(Error::Empty(format!("split {} has no videos", split.as_str())));
        }
        Ok(hits as f64 / total as f64)
    }
}

/// A generated dataset plus the oracle built from its hidden centers.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub video_store: FeatureStore,
    pub music_store: FeatureStore,
    pub manifest: DatasetManifest,
    pub oracle: CenterOracle,
}

impl SyntheticDataset {
    /// Writes the three dataset files into `dir` under their standard names.
    pub fn write_to_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        super::write_features(&self.video_store, &dir.join(super::VIDEO_FEATURES_FILE))?;
        super::write_features(&self.music_store, &dir.join(super::MUSIC_FEATURES_FILE))?;
        super::write_manifest(&self.manifest, &dir.join(super::MANIFEST_FILE))?;
        Ok(())
    }
}

fn unit_gaussian(rng: &mut Rng, dim: usize) -> Vector {
    loop {
        let v = Vector::from_fn(dim, |_| rng.gaussian());
        let n = l2_norm(&v);
        if n > 1e-9 {
            return v.scaled(1.0 / n);
        }
    }
}

fn draw_centers(rng: &mut Rng, n: usize, dim: usize, min_angle_deg: f64) -> Result<Vec<Vector>> {
    let max_cos = min_angle_deg.to_radians().cos();
    let mut centers: Vec<Vector> = Vec::with_capacity(n);
    for k in 0..n {
        let mut accepted = None;
        for _ in 0..CENTER_RETRY_BUDGET {
            let cand = unit_gaussian(rng, dim);
            let ok = centers
                .iter()
                .all(|c| crate::numerics::dot(c, &cand).unwrap() <= max_cos);
            if ok {
                accepted = Some(cand);
                break;
            }
        }
        match accepted {
            Some(c) => centers.push(c),
            None => {
                return Err(Error::Config(format!(
                    "could not place center {k} of {n} at >= {min_angle_deg} degrees \
                     in {dim} dimensions within {CENTER_RETRY_BUDGET} tries"
                )))
            }
        }
    }
    Ok(centers)
}

fn noisy_map(rng: &mut Rng, map: &Matrix, center: &Vector, sigma: f64) -> Vector {
    let mut out = matvec(map, center).expect("map dims fixed at construction");
    if sigma > 0.0 {
        for o in out.as_mut_slice() {
            *o += sigma * rng.gaussian();
        }
    }
    out
}

/// Generates the dataset described by `spec`. Identical specs produce
/// bitwise-identical stores and manifests.
pub fn generate(spec: &SynthSpec) -> Result<SyntheticDataset> {
    spec.validate()?;
    let mut rng = Rng::new(spec.seed);
    let n = spec.n_classes();
    let centers = draw_centers(&mut rng, n, spec.latent_dim, spec.min_center_angle_deg)?;

    let map_scale = 1.0 / (spec.latent_dim as f64).sqrt();
    let video_map =
        Matrix::from_fn(spec.video_dim, spec.latent_dim, |_, _| map_scale * rng.gaussian());
    let low_map = Matrix::from_fn(spec.music_low_dim, spec.latent_dim, |_, _| {
        map_scale * rng.gaussian()
    });
    let high_map = Matrix::from_fn(spec.music_high_dim, spec.latent_dim, |_, _| {
        map_scale * rng.gaussian()
    });

    let mut music_store =
        FeatureStore::new(StoreDims::Dual(spec.music_low_dim, spec.music_high_dim));
    for (k, center) in centers.iter().enumerate() {
        let low = noisy_map(&mut rng, &low_map, center, spec.noise_sigma);
        let high = noisy_map(&mut rng, &high_map, center, spec.noise_sigma);
        music_store.insert(music_id(k), TowerFeatures::Two(low, high))?;
    }

    let mut video_store = FeatureStore::new(StoreDims::Single(spec.video_dim));
    let mut entries = Vec::new();
    let mut next_video = 0usize;
    let mut emit = |rng: &mut Rng,
                    store: &mut FeatureStore,
                    entries: &mut Vec<ManifestEntry>,
                    class: usize,
                    split: Split,
                    count: usize|
     -> Result<()> {
        for _ in 0..count {
            let feat = noisy_map(rng, &video_map, &centers[class], spec.noise_sigma);
            let id = format!("v{next_video:06}");
            next_video += 1;
            store.insert(id.clone(), TowerFeatures::One(feat))?;
            entries.push(ManifestEntry {
                video_id: id,
                class,
                split,
            });
        }
        Ok(())
    };

    for class in 0..spec.n_seen_classes {
        emit(&mut rng, &mut video_store, &mut entries, class, Split::Train, spec.vpm_train)?;
        emit(&mut rng, &mut video_store, &mut entries, class, Split::Val, spec.vpm_val)?;
        emit(
            &mut rng,
            &mut video_store,
            &mut entries,
            class,
            Split::SeenTest,
            spec.vpm_seen_test,
        )?;
    }
    for class in spec.n_seen_classes..n {
        emit(
            &mut rng,
            &mut video_store,
            &mut entries,
            class,
            Split::UnseenTest,
            spec.vpm_unseen,
        )?;
    }

    let video_centers = centers
        .iter()
        .map(|c| matvec(&video_map, c).expect("dims fixed"))
        .collect();

    Ok(SyntheticDataset {
        video_store,
        music_store,
        manifest: DatasetManifest::new(entries)?,
        oracle: CenterOracle { video_centers },
    })
}
