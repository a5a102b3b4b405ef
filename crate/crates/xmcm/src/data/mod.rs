//! Dataset representation, text file formats, and validation.
//!
//! Two line-oriented UTF-8 formats cover both synthetic and externally
//! extracted features:
//!
//! * feature store — first line `dim <d>` (single-block stores) or
//!   `dims <d_low> <d_high>` (dual-block music stores); every following line
//!   is `<id> <v1> ... <vd>`. Values are printed as shortest round-trip
//!   decimals, so write -> read is bit-exact.
//! * manifest — one line per video: `<video_id> <class_index> <split>`, with
//!   split one of `train`, `val`, `seen_test`, `unseen_test`. Lines starting
//!   with `#` are comments.
//!
//! The music item of class `k` is stored under the id [`music_id`]`(k)`
//! (`m<k>`); that convention is what ties manifest class indices to music
//! feature rows, for generated and ingested data alike.

pub mod synth;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::encoder::TowerFeatures;
use crate::error::{Error, Result};
use crate::numerics::Vector;

/// Standard file names inside a dataset directory.
pub const VIDEO_FEATURES_FILE: &str = "video_features.txt";
pub const MUSIC_FEATURES_FILE: &str = "music_features.txt";
pub const MANIFEST_FILE: &str = "manifest.txt";

/// Canonical feature-store id of the music item for class `k`.
pub fn music_id(class: usize) -> String {
    format!("m{class}")
}

/// Loads and cross-validates the three standard files of a dataset directory.
pub fn load_dir(dir: &Path) -> Result<(FeatureStore, FeatureStore, DatasetManifest)> {
    let video = read_features(&dir.join(VIDEO_FEATURES_FILE))?;
    let music = read_features(&dir.join(MUSIC_FEATURES_FILE))?;
    let manifest = read_manifest(&dir.join(MANIFEST_FILE))?;
    validate_dataset(&video, &music, &manifest)?;
    Ok((video, music, manifest))
}

/// Dataset split of one video.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Split {
    Train,
    Val,
    SeenTest,
    UnseenTest,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::SeenTest => "seen_test",
            Split::UnseenTest => "unseen_test",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "seen_test" => Some(Split::SeenTest),
            "unseen_test" => Some(Split::UnseenTest),
            _ => None,
        }
    }

    pub const ALL: [Split; 4] = [Split::Train, Split::Val, Split::SeenTest, Split::UnseenTest];
}

/// Declared block dimensions of a feature store.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StoreDims {
    Single(usize),
    Dual(usize, usize),
}

impl StoreDims {
    pub fn total(&self) -> usize {
        match *self {
            StoreDims::Single(d) => d,
            StoreDims::Dual(a, b) => a + b,
        }
    }
}

/// Keyed feature rows; iteration order is the sorted id order, which makes
/// every derived artifact deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStore {
    dims: StoreDims,
    rows: BTreeMap<String, TowerFeatures>,
}

impl FeatureStore {
    pub fn new(dims: StoreDims) -> Self {
        Self {
            dims,
            rows: BTreeMap::new(),
        }
    }

    pub fn dims(&self) -> StoreDims {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn insert(&mut self, id: String, features: TowerFeatures) -> Result<()> {
        if id.is_empty() || id.contains(char::is_whitespace) || id.starts_with('#') {
            return Err(Error::Validation(format!(
                "feature id {id:?} must be non-empty, whitespace-free, and not start with '#'"
            )));
        }
        let ok = match (&self.dims, &features) {
            (StoreDims::Single(d), TowerFeatures::One(v)) => v.dim() == *d,
            (StoreDims::Dual(a, b), TowerFeatures::Two(low, high)) => {
                low.dim() == *a && high.dim() == *b
            }
            _ => false,
        };
        if !ok {
            return Err(Error::DimMismatch(format!(
                "row {id} does not match store dims {:?}",
                self.dims
            )));
        }
        if self.rows.contains_key(&id) {
            return Err(Error::Validation(format!("duplicate feature id {id}")));
        }
        self.rows.insert(id, features);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&TowerFeatures> {
        self.rows.get(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &TowerFeatures)> {
        self.rows.iter()
    }
}

/// One manifest line: a video, its music class, and its split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub video_id: String,
    pub class: usize,
    pub split: Split,
}

/// The many-to-one pairing of videos to music classes, plus the split
/// assignment.
///
/// Training-side classes (train/val/seen_test) must occupy the contiguous
/// range `0..n_train_classes()`; unseen-test classes must lie at or above it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        for e in &entries {
            if e.video_id.is_empty()
                || e.video_id.contains(char::is_whitespace)
                || e.video_id.starts_with('#')
            {
                return Err(Error::Validation(format!(
                    "video id {:?} must be non-empty, whitespace-free, and not start with '#'",
                    e.video_id
                )));
            }
            if !seen.insert(&e.video_id) {
                return Err(Error::Validation(format!(
                    "video id {} assigned to more than one manifest line",
                    e.video_id
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn entries_in(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    /// Number of training-side classes, derived as 1 + the largest class
    /// index used by the train/val/seen_test splits.
    pub fn n_train_classes(&self) -> Result<usize> {
        self.entries
            .iter()
            .filter(|e| e.split != Split::UnseenTest)
            .map(|e| e.class)
            .max()
            .map(|m| m + 1)
            .ok_or_else(|| Error::Validation("manifest has no training-side entries".into()))
    }

    /// All class indices referenced anywhere.
    pub fn all_classes(&self) -> std::collections::BTreeSet<usize> {
        self.entries.iter().map(|e| e.class).collect()
    }

    pub fn classes_in(&self, split: Split) -> std::collections::BTreeSet<usize> {
        self.entries_in(split).map(|e| e.class).collect()
    }
}

fn fmt_features(out: &mut String, f: &TowerFeatures) {
    let mut push = |v: &Vector| {
        for x in v.iter() {
            let _ = write!(out, " {x}");
        }
    };
    match f {
        TowerFeatures::One(v) => push(v),
        TowerFeatures::Two(a, b) => {
            push(a);
            push(b);
        }
    }
}

/// Writes a feature store; the result reads back bit-exactly.
pub fn write_features(store: &FeatureStore, path: &Path) -> Result<()> {
    let mut out = String::new();
    match store.dims {
        StoreDims::Single(d) => {
            let _ = writeln!(out, "dim {d}");
        }
        StoreDims::Dual(a, b) => {
            let _ = writeln!(out, "dims {a} {b}");
        }
    }
    for (id, f) in store.iter() {
        let _ = write!(out, "{id}");
        fmt_features(&mut out, f);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

fn parse_value(path: &Path, line_no: usize, tok: &str) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| parse_err(path, line_no, format!("cannot parse value {tok:?}")))?;
    if !v.is_finite() {
        return Err(parse_err(
            path,
            line_no,
            format!("non-finite value {tok:?}"),
        ));
    }
    Ok(v)
}

/// Reads a feature store written by [`write_features`] (or produced by an
/// external extractor following the same format).
pub fn read_features(path: &Path) -> Result<FeatureStore> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file, expected a dim header"))?;
    let toks: Vec<&str> = header.split_whitespace().collect();
    let dims = match toks.as_slice() {
        ["dim", d] => StoreDims::Single(
            d.parse()
                .map_err(|_| parse_err(path, 1, format!("bad dimension {d:?}")))?,
        ),
        ["dims", a, b] => StoreDims::Dual(
            a.parse()
                .map_err(|_| parse_err(path, 1, format!("bad dimension {a:?}")))?,
            b.parse()
                .map_err(|_| parse_err(path, 1, format!("bad dimension {b:?}")))?,
        ),
        _ => {
            return Err(parse_err(
                path,
                1,
                format!("expected `dim <d>` or `dims <a> <b>`, got {header:?}"),
            ))
        }
    };
    if dims.total() == 0 {
        return Err(parse_err(path, 1, "dimensions must be positive"));
    }
    let mut store = FeatureStore::new(dims);
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut toks = line.split_whitespace();
        let id = toks.next().unwrap().to_string();
        let values: Vec<&str> = toks.collect();
        if values.len() != dims.total() {
            return Err(parse_err(
                path,
                line_no,
                format!(
                    "row {id} has {} values, header declares {}",
                    values.len(),
                    dims.total()
                ),
            ));
        }
        let mut parsed = Vec::with_capacity(values.len());
        for tok in values {
            parsed.push(parse_value(path, line_no, tok)?);
        }
        let features = match dims {
            StoreDims::Single(_) => TowerFeatures::One(Vector::new(parsed)?),
            StoreDims::Dual(a, _) => {
                let high = parsed.split_off(a);
                TowerFeatures::Two(Vector::new(parsed)?, Vector::new(high)?)
            }
        };
        store
            .insert(id.clone(), features)
            .map_err(|e| parse_err(path, line_no, e.to_string()))?;
    }
    Ok(store)
}

pub fn write_manifest(manifest: &DatasetManifest, path: &Path) -> Result<()> {
    let mut out = String::new();
    for e in manifest.entries() {
        let _ = writeln!(out, "{} {} {}", e.video_id, e.class, e.split.as_str());
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path)?;
    let mut entries = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        let [video_id, class, split] = toks.as_slice() else {
            return Err(parse_err(
                path,
                line_no,
                format!("expected `<video_id> <class> <split>`, got {line:?}"),
            ));
        };
        let class: usize = class
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("bad class index {class:?}")))?;
        let split = Split::parse(split)
            .ok_or_else(|| parse_err(path, line_no, format!("unknown split {split:?}")))?;
        entries.push(ManifestEntry {
            video_id: video_id.to_string(),
            class,
            split,
        });
    }
    DatasetManifest::new(entries)
}

/// Cross-checks stores against the manifest:
/// every video id resolves, every referenced class has a music row, and the
/// unseen-test classes are disjoint from (and indexed above) the
/// training-side classes.
pub fn validate_dataset(
    video_store: &FeatureStore,
    music_store: &FeatureStore,
    manifest: &DatasetManifest,
) -> Result<()> {
    for e in manifest.entries() {
        if video_store.get(&e.video_id).is_none() {
            return Err(Error::Validation(format!(
                "manifest references video id {} missing from the video store",
                e.video_id
            )));
        }
    }
    for class in manifest.all_classes() {
        let id = music_id(class);
        if music_store.get(&id).is_none() {
            return Err(Error::Validation(format!(
                "class {class} has no music row {id} in the music store"
            )));
        }
    }
    let n_train = manifest.n_train_classes()?;
    let train_side: std::collections::BTreeSet<usize> = manifest
        .entries()
        .iter()
        .filter(|e| e.split != Split::UnseenTest)
        .map(|e| e.class)
        .collect();
    for e in manifest.entries_in(Split::UnseenTest) {
        if train_side.contains(&e.class) {
            return Err(Error::Validation(format!(
                "class leak: unseen-test video {} uses training-side class {}",
                e.video_id, e.class
            )));
        }
        if e.class < n_train {
            return Err(Error::Validation(format!(
                "unseen-test video {} uses class {} below the training range {n_train}",
                e.video_id, e.class
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn v(xs: &[f64]) -> Vector {
        Vector::new(xs.to_vec()).unwrap()
    }

    fn tiny_stores() -> (FeatureStore, FeatureStore, DatasetManifest) {
        let mut video = FeatureStore::new(StoreDims::Single(2));
        video
            .insert("v0".into(), TowerFeatures::One(v(&[1.0, 0.0])))
            .unwrap();
        video
            .insert("v1".into(), TowerFeatures::One(v(&[0.0, 1.0])))
            .unwrap();
        let mut music = FeatureStore::new(StoreDims::Dual(1, 2));
        music
            .insert(
                "m0".into(),
                TowerFeatures::Two(v(&[0.5]), v(&[1.0, 0.0])),
            )
            .unwrap();
        music
            .insert(
                "m1".into(),
                TowerFeatures::Two(v(&[-0.5]), v(&[0.0, 1.0])),
            )
            .unwrap();
        let manifest = DatasetManifest::new(vec![
            ManifestEntry {
                video_id: "v0".into(),
                class: 0,
                split: Split::Train,
            },
            ManifestEntry {
                video_id: "v1".into(),
                class: 1,
                split: Split::UnseenTest,
            },
        ])
        .unwrap();
        (video, music, manifest)
    }

    #[test]
    fn feature_roundtrip_is_bit_exact() {
        let dir = tempdir().unwrap();
        let (video, music, _) = tiny_stores();
        for (name, store) in [("v.txt", &video), ("m.txt", &music)] {
            let path = dir.path().join(name);
            write_features(store, &path).unwrap();
            let back = read_features(&path).unwrap();
            assert_eq!(*store, back);
        }
    }

    #[test]
    fn feature_read_rejects_wrong_value_count() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        std::fs::write(&path, "dim 4\nrow_a 1 2 3\n").unwrap();
        let err = read_features(&path).unwrap_err().to_string();
        assert!(err.contains(":2:") && err.contains("row_a"), "{err}");
    }

    #[test]
    fn feature_read_rejects_non_finite() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("inf.txt");
        std::fs::write(&path, "dim 1\na 1e400\n").unwrap();
        let err = read_features(&path).unwrap_err().to_string();
        assert!(err.contains("non-finite"), "{err}");
    }

    #[test]
    fn feature_read_rejects_duplicate_id() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("dup.txt");
        std::fs::write(&path, "dim 1\na 1\na 2\n").unwrap();
        let err = read_features(&path).unwrap_err().to_string();
        assert!(err.contains("duplicate"), "{err}");
    }

    #[test]
    fn manifest_roundtrip_and_comments() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("manifest.txt");
        std::fs::write(&path, "# comment\nv0 0 train\n\nv1 3 unseen_test\n").unwrap();
        let m = read_manifest(&path).unwrap();
        assert_eq!(m.entries().len(), 2);
        let path2 = dir.path().join("roundtrip.txt");
        write_manifest(&m, &path2).unwrap();
        assert_eq!(m, read_manifest(&path2).unwrap());
    }

    #[test]
    fn manifest_rejects_bad_split() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        std::fs::write(&path, "v0 0 testing\n").unwrap();
        assert!(read_manifest(&path).is_err());
    }

    #[test]
    fn manifest_rejects_duplicate_video() {
        let r = DatasetManifest::new(vec![
            ManifestEntry {
                video_id: "v0".into(),
                class: 0,
                split: Split::Train,
            },
            ManifestEntry {
                video_id: "v0".into(),
                class: 1,
                split: Split::Val,
            },
        ]);
        assert!(r.is_err());
    }

    #[test]
    fn validate_accepts_consistent_dataset() {
        let (video, music, manifest) = tiny_stores();
        validate_dataset(&video, &music, &manifest).unwrap();
    }

    #[test]
    fn validate_names_missing_video() {
        let (video, music, _) = tiny_stores();
        let manifest = DatasetManifest::new(vec![ManifestEntry {
            video_id: "ghost".into(),
            class: 0,
            split: Split::Train,
        }])
        .unwrap();
        let err = validate_dataset(&video, &music, &manifest)
            .unwrap_err()
            .to_string();
        assert!(err.contains("ghost"), "{err}");
    }

    #[test]
    fn validate_names_class_leak() {
        let (video, music, _) = tiny_stores();
        let manifest = DatasetManifest::new(vec![
            ManifestEntry {
                video_id: "v0".into(),
                class: 0,
                split: Split::Train,
            },
            ManifestEntry {
                video_id: "v1".into(),
                class: 0,
                split: Split::UnseenTest,
            },
        ])
        .unwrap();
        let err = validate_dataset(&video, &music, &manifest)
            .unwrap_err()
            .to_string();
        assert!(err.contains("class leak"), "{err}");
    }

    mod properties {
        use super::v;
        use crate::data::{read_features, write_features, FeatureStore, StoreDims};
        use crate::encoder::TowerFeatures;
        use proptest::prelude::*;
        use tempfile::tempdir;

        proptest! {
            #[test]
            fn feature_values_roundtrip_bitwise(
                xs in proptest::collection::vec(
                    prop_oneof![
                        -1e12f64..1e12,
                        -1.0f64..1.0,
                        Just(-0.0f64),
                        Just(1.0e-300f64),
                    ],
                    1..6,
                )
            ) {
                let dir = tempdir().unwrap();
                let path = dir.path().join("prop.txt");
                let mut store = FeatureStore::new(StoreDims::Single(xs.len()));
                store.insert("row".into(), TowerFeatures::One(v(&xs))).unwrap();
                write_features(&store, &path).unwrap();
                let back = read_features(&path).unwrap();
                let TowerFeatures::One(got) = back.get("row").unwrap() else { panic!() };
                for (a, b) in got.iter().zip(xs.iter()) {
                    prop_assert_eq!(a.to_bits(), b.to_bits());
                }
            }
        }
    }
}
