use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn ecgdx(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ecgdx"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = ecgdx(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    files
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

const QUICK_TRAIN: &str = r#"{"train": {"epochs": 3, "batch_size": 2, "lr0": 0.001, "lr_min": 0.0001},
  "dims": {"width": 32, "height": 16}}"#;

/// Generates a small dataset and a quick training config in `dir`.
fn small_dataset(dir: &Path, n: usize) {
    ok(dir, &["gen", "--n", &n.to_string(), "--seed", "11", "--out", "data"]);
    fs::write(dir.join("train.json"), QUICK_TRAIN).unwrap();
}

#[test]
fn gen_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        ok(tmp.path(), &["gen", "--n", "3", "--seed", "5", "--out", out]);
    }
    let (a, b) = (tree(&tmp.path().join("a")), tree(&tmp.path().join("b")));
    assert!(a.contains_key(Path::new("manifest.json")));
    assert!(a.contains_key(Path::new("run.json")));
    assert_eq!(a, b);
    ok(tmp.path(), &["gen", "--n", "3", "--seed", "6", "--out", "c"]);
    assert_ne!(a, tree(&tmp.path().join("c")));
}

#[test]
fn usage_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&ecgdx(tmp.path(), &["gen", "--n", "2"])), 2);
    assert_eq!(code(&ecgdx(tmp.path(), &["frobnicate"])), 2);

    let out = ecgdx(
        tmp.path(),
        &["explain", "--weights", "w", "--image", "i", "--class", "foo", "--out", "o"],
    );
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    for name in ["MI", "STTC", "CD", "HYP", "AF"] {
        assert!(err.contains(name), "{err}");
    }

    fs::write(tmp.path().join("bad.json"), r#"{"n": 2, "colour": "red"}"#).unwrap();
    let out = ecgdx(tmp.path(), &["gen", "--out", "d", "--config", "bad.json"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));

    fs::write(tmp.path().join("neg.json"), r#"{"train": {"lr0": -1.0}}"#).unwrap();
    fs::write(tmp.path().join("empty.json"), "[]").unwrap();
    let out = ecgdx(
        tmp.path(),
        &["train", "--stage", "masks", "--manifest", "empty.json", "--config", "neg.json", "--out", "w"],
    );
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn runtime_errors_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ecgdx(
        tmp.path(),
        &["preprocess", "--manifest", "missing.json", "--out", "p"],
    );
    assert_eq!(code(&out), 1);
    fs::write(tmp.path().join("garbage.ecgw"), b"not weights").unwrap();
    fs::write(tmp.path().join("empty.json"), "[]").unwrap();
    let out = ecgdx(
        tmp.path(),
        &["eval", "--weights", "garbage.ecgw", "--manifest", "empty.json", "--report", "r.json"],
    );
    assert_eq!(code(&out), 1);
}

#[test]
fn empty_manifest_preprocesses_to_empty() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("empty.json"), "[]").unwrap();
    ok(tmp.path(), &["preprocess", "--manifest", "empty.json", "--out", "p"]);
    assert_eq!(json(&tmp.path().join("p/manifest.json")), Value::Array(vec![]));
}

#[test]
fn preprocess_rectifies_and_marks_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["gen", "--n", "3", "--seed", "2", "--out", "d"]);
    ok(
        tmp.path(),
        &["preprocess", "--manifest", "d/manifest.json", "--out", "p", "--emit-gray-inverted"],
    );
    let m = json(&tmp.path().join("p/manifest.json"));
    let records = m.as_array().unwrap();
    assert_eq!(records.len(), 3);
    for r in records {
        assert_eq!(r["rectified"], Value::Bool(true));
        let id = r["id"].as_str().unwrap();
        assert!(tmp.path().join(format!("p/{id}.ppm")).exists());
        assert!(tmp.path().join(format!("p/{id}_gi.pgm")).exists());
    }
}

#[test]
fn preprocess_fails_when_too_many_samples_fail() {
    let tmp = tempfile::tempdir().unwrap();
    ok(tmp.path(), &["gen", "--n", "2", "--seed", "2", "--out", "d"]);
    let mut m = json(&tmp.path().join("d/manifest.json"));
    m[0]["image"] = Value::String("nowhere.ppm".into());
    fs::write(tmp.path().join("d/broken.json"), m.to_string()).unwrap();
    let out = ecgdx(tmp.path(), &["preprocess", "--manifest", "d/broken.json", "--out", "p"]);
    assert_eq!(code(&out), 1);
    assert_eq!(json(&tmp.path().join("p/manifest.json")).as_array().unwrap().len(), 1);
}

#[test]
fn training_logs_cosine_schedule_and_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    small_dataset(tmp.path(), 6);
    for out in ["a.ecgw", "b.ecgw"] {
        ok(
            tmp.path(),
            &["train", "--stage", "masks", "--manifest", "data/manifest.json", "--config", "train.json", "--out", out],
        );
    }
    let read = |f: &str| fs::read(tmp.path().join(f)).unwrap();
    assert_eq!(read("a.ecgw"), read("b.ecgw"));
    assert_eq!(read("a.ecgw.log.json"), read("b.ecgw.log.json"));
    assert_eq!(read("a.ecgw.run.json"), read("b.ecgw.run.json"));

    let log = json(&tmp.path().join("a.ecgw.log.json"));
    assert_eq!(log["config_hash"].as_str().unwrap().len(), 64);
    let epochs = log["epochs"].as_array().unwrap();
    assert_eq!(epochs.len(), 3);
    for (t, e) in epochs.iter().enumerate() {
        let want = 0.0001 + 0.5 * (0.001 - 0.0001) * (1.0 + (std::f64::consts::PI * t as f64 / 3.0).cos());
        assert!((e["lr"].as_f64().unwrap() - want).abs() < 1e-12);
    }
}

#[test]
fn curriculum_eval_thresholds_and_explain() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_dataset(dir, 8);
    let train = |stage: &str, manifest: &str, init: Option<&str>, out: &str| {
        let mut args = vec!["train", "--stage", stage, "--manifest", manifest, "--config", "train.json", "--out", out];
        if let Some(i) = init {
            args.extend(["--init", i]);
        }
        ok(dir, &args);
    };
    train("masks", "data/manifest.json", None, "s1.ecgw");
    train("images", "data/manifest.json", Some("s1.ecgw"), "s2.ecgw");
    train("images", "data/manifest.json", None, "fresh.ecgw");

    ok(dir, &["eval", "--weights", "s2.ecgw", "--manifest", "data/manifest.json", "--report", "one.json"]);
    let one = json(&dir.join("one.json"));
    assert_eq!(one["n_samples"], 8);
    assert!(one["macro_auroc"].is_number() || one["macro_auroc"].is_null());

    ok(
        dir,
        &["fit-thresholds", "--weights", "s2.ecgw,fresh.ecgw", "--manifest", "data/manifest.json", "--out", "t.json"],
    );
    ok(
        dir,
        &[
            "eval", "--weights", "s2.ecgw,fresh.ecgw", "--manifest", "data/manifest.json",
            "--thresholds", "t.json", "--report", "fitted.json",
        ],
    );
    ok(
        dir,
        &["eval", "--weights", "s2.ecgw,fresh.ecgw", "--manifest", "data/manifest.json", "--report", "half.json"],
    );
    let (fitted, half) = (json(&dir.join("fitted.json")), json(&dir.join("half.json")));
    for class in ["MI", "STTC", "CD", "HYP", "AF"] {
        let f = fitted["per_class_f1"][class].as_f64().unwrap();
        let h = half["per_class_f1"][class].as_f64().unwrap();
        assert!(f >= h, "{class}: fitted {f} < uniform {h}");
    }
    assert_ne!(fitted["config_hash"], half["config_hash"]);

    let image = json(&dir.join("data/manifest.json"))[0]["image"].as_str().unwrap().to_string();
    let image = format!("data/{image}");
    ok(
        dir,
        &["explain", "--weights", "s2.ecgw", "--image", &image, "--class", "STTC", "--out", "o.ppm", "--heatmap", "h.pgm"],
    );
    assert!(fs::read(dir.join("o.ppm")).unwrap().starts_with(b"P6"));
    assert!(fs::read(dir.join("h.pgm")).unwrap().starts_with(b"P5"));
    let out = ecgdx(
        dir,
        &["explain", "--weights", "s2.ecgw", "--image", &image, "--class", "MI", "--out", "x.ppm", "--alpha", "2"],
    );
    assert_eq!(code(&out), 2);
}

#[test]
fn mismatched_ensemble_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_dataset(dir, 4);
    ok(
        dir,
        &["train", "--stage", "masks", "--manifest", "data/manifest.json", "--config", "train.json", "--out", "a.ecgw"],
    );
    fs::write(
        dir.join("other.json"),
        r#"{"train": {"epochs": 1, "batch_size": 2}, "dims": {"width": 48, "height": 16}}"#,
    )
    .unwrap();
    ok(
        dir,
        &["train", "--stage", "masks", "--manifest", "data/manifest.json", "--config", "other.json", "--out", "b.ecgw"],
    );
    let out = ecgdx(
        dir,
        &["eval", "--weights", "a.ecgw,b.ecgw", "--manifest", "data/manifest.json", "--report", "r.json"],
    );
    assert_eq!(code(&out), 1, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!dir.join("r.json").exists());
}

#[test]
fn split_partitions_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    ok(dir, &["gen", "--n", "10", "--seed", "1", "--out", "d"]);
    ok(
        dir,
        &["split", "--manifest", "d/manifest.json", "--train-frac", "0.8", "--train-out", "d/train.json", "--val-out", "d/val.json"],
    );
    let ids = |f: &str| -> Vec<String> {
        json(&dir.join(f))
            .as_array()
            .unwrap()
            .iter()
            .map(|r| r["id"].as_str().unwrap().to_string())
            .collect()
    };
    let (train, val) = (ids("d/train.json"), ids("d/val.json"));
    assert_eq!((train.len(), val.len()), (8, 2));
    let mut all: Vec<_> = train.iter().chain(&val).cloned().collect();
    all.sort();
    assert_eq!(all, ids("d/manifest.json"));
    let out = ecgdx(
        dir,
        &["split", "--manifest", "d/manifest.json", "--train-frac", "1.5", "--train-out", "a", "--val-out", "b"],
    );
    assert_eq!(code(&out), 2);
}

#[test]
fn pseudo_label_fills_missing_masks() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    small_dataset(dir, 4);
    ok(
        dir,
        &["train", "--stage", "seg", "--manifest", "data/manifest.json", "--config", "train.json", "--out", "seg.ecgw"],
    );
    let mut m = json(&dir.join("data/manifest.json"));
    for r in m.as_array_mut().unwrap().iter_mut().skip(2) {
        r.as_object_mut().unwrap().remove("mask");
    }
    fs::write(dir.join("data/unlabeled.json"), m.to_string()).unwrap();
    fs::write(dir.join("pl.json"), r#"{"pseudo_label": {"count": 1}}"#).unwrap();
    ok(
        dir,
        &["pseudo-label", "--weights", "seg.ecgw", "--manifest", "data/unlabeled.json", "--out", "pl", "--config", "pl.json"],
    );
    let out = json(&dir.join("pl/manifest.json"));
    let masks: Vec<bool> = out.as_array().unwrap().iter().map(|r| r["mask"].is_string()).collect();
    assert_eq!(masks, vec![true, true, true, false]);
    let id = out[2]["id"].as_str().unwrap();
    assert!(dir.join(format!("pl/{id}_pseudo.pgm")).exists());
}
