//! Sample records, manifests and the train/validation split.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::PerClass;
use crate::error::{Error, Result};
use crate::nnkit::rng::split_rng;

/// One manifest entry.
///
/// `mask` points at a trace mask on the un-warped paper. `corners` are the
/// paper corners on the photo (top-left, top-right, bottom-right,
/// bottom-left) when known. `rectified` marks images that are already
/// fronto-parallel paper crops, so loaders skip rectification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    pub id: String,
    pub image: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<PathBuf>,
    pub labels: PerClass<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corners: Option<[[f64; 2]; 4]>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub rectified: bool,
}

fn is_false(b: &bool) -> bool {
    !*b
}

impl SampleRecord {
    pub fn validate(&self) -> Result<()> {
        if let Some(v) = self.labels.iter().find(|&&v| v > 1) {
            return Err(Error::Data(format!(
                "sample '{}': label value {v} is not 0 or 1",
                self.id
            )));
        }
        Ok(())
    }

    /// Labels as `0.0 / 1.0`.
    pub fn targets(&self) -> [f32; super::NUM_CLASSES] {
        self.labels.0.map(f32::from)
    }
}

fn base_dir(manifest: &Path) -> PathBuf {
    manifest.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Parses a manifest from JSON text. Relative paths are resolved against
/// `base`.
pub fn parse_manifest(json: &str, base: &Path) -> Result<Vec<SampleRecord>> {
    let mut records: Vec<SampleRecord> = serde_json::from_str(json)?;
    for r in &mut records {
        r.validate()?;
        if r.image.is_relative() {
            r.image = base.join(&r.image);
        }
        if let Some(m) = r.mask.as_mut().filter(|m| m.is_relative()) {
            *m = base.join(&*m);
        }
    }
    Ok(records)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<SampleRecord>> {
    let path = path.as_ref();
    parse_manifest(&fs::read_to_string(path)?, &base_dir(path))
}

/// Serializes records, writing paths under `base` relative to it.
pub fn manifest_json(records: &[SampleRecord], base: &Path) -> String {
    let rel = |p: &Path| {
        p.strip_prefix(base)
            .map(Path::to_path_buf)
            .unwrap_or_else(|_| p.to_path_buf())
    };
    let out: Vec<SampleRecord> = records
        .iter()
        .map(|r| SampleRecord {
            image: rel(&r.image),
            mask: r.mask.as_deref().map(rel),
            ..r.clone()
        })
        .collect();
    let mut s = serde_json::to_string_pretty(&out).expect("records serialize");
    s.push('\n');
    s
}

pub fn save_manifest(path: impl AsRef<Path>, records: &[SampleRecord]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, manifest_json(records, &base_dir(path)))?;
    Ok(())
}

/// Seeded shuffle, then the first `round(train_frac * n)` records train and
/// the rest validate. Both halves keep at least one record when `n >= 2`.
pub fn split_dataset<T: Clone>(
    records: &[T],
    train_frac: f64,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>)> {
    if records.is_empty() {
        return Err(Error::Parameter("cannot split an empty dataset".into()));
    }
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::Parameter(format!(
            "train fraction must lie in (0, 1), got {train_frac}"
        )));
    }
    let n = records.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut split_rng(seed));
    let mut k = (train_frac * n as f64).round() as usize;
    if n >= 2 {
        k = k.clamp(1, n - 1);
    }
    let pick = |idx: &[usize]| idx.iter().map(|&i| records[i].clone()).collect::<Vec<_>>();
    Ok((pick(&order[..k]), pick(&order[k..])))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(i: usize) -> SampleRecord {
        SampleRecord {
            id: format!("s{i:04}"),
            image: PathBuf::from(format!("s{i:04}.ppm")),
            mask: (i % 2 == 0).then(|| PathBuf::from(format!("s{i:04}_mask.pgm"))),
            labels: PerClass([1, 0, 0, 1, (i % 2) as u8]),
            corners: None,
            rectified: false,
        }
    }

    #[test]
    fn split_examples() {
        let recs: Vec<_> = (0..100).map(record).collect();
        let (tr, va) = split_dataset(&recs, 0.9, 3).unwrap();
        assert_eq!((tr.len(), va.len()), (90, 10));
        assert_eq!(
            split_dataset(&recs, 0.9, 3).unwrap(),
            (tr.clone(), va.clone())
        );
        let mut ids: Vec<_> = tr.iter().chain(&va).map(|r| r.id.clone()).collect();
        ids.sort();
        assert_eq!(ids, recs.iter().map(|r| r.id.clone()).collect::<Vec<_>>());
        assert_ne!(split_dataset(&recs, 0.9, 4).unwrap().1, va);
        assert!(matches!(
            split_dataset::<SampleRecord>(&[], 0.9, 0),
            Err(Error::Parameter(_))
        ));
        assert!(split_dataset(&recs, 1.0, 0).is_err());
    }

    #[test]
    fn manifest_round_trip_resolves_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        let recs: Vec<_> = (0..3)
            .map(|i| {
                let mut r = record(i);
                r.image = dir.path().join(&r.image);
                r.mask = r.mask.map(|m| dir.path().join(m));
                r
            })
            .collect();
        save_manifest(&path, &recs).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"image\": \"s0000.ppm\""), "{text}");
        assert!(!text.contains("corners") && !text.contains("rectified"));
        assert_eq!(load_manifest(&path).unwrap(), recs);
    }

    #[test]
    fn manifest_rejects_bad_labels_and_fields() {
        let base = Path::new("/data");
        let ok = r#"[{"id":"a","image":"a.ppm","labels":{"MI":1,"STTC":0,"CD":0,"HYP":0,"AF":1}}]"#;
        let recs = parse_manifest(ok, base).unwrap();
        assert_eq!(recs[0].image, Path::new("/data/a.ppm"));
        assert_eq!(recs[0].targets(), [1.0, 0.0, 0.0, 0.0, 1.0]);
        let two = ok.replace("\"AF\":1", "\"AF\":2");
        assert!(matches!(parse_manifest(&two, base), Err(Error::Data(_))));
        let extra = ok.replace("\"id\":\"a\"", "\"id\":\"a\",\"colour\":1");
        assert!(matches!(
            parse_manifest(&extra, base),
            Err(Error::Format(_))
        ));
    }
}
