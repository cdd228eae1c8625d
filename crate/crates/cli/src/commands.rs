use std::fs;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use ecgdx_core::explain::{overlay, xgradcam};
use ecgdx_core::geometry::rectify_detailed;
use ecgdx_core::nnkit::{load_weights, save_weights, ModelParams, Tensor};
use ecgdx_core::pipeline::{
    self, evaluate, image_input, load_manifest, predict_probs, prepare, save_manifest,
    split_dataset, train_classifier, train_segmenter, ClassName, EpochLog, InputDims, InputKind,
    MetricsReport, PerClass, SampleRecord, SegmentationSet,
};
use ecgdx_core::raster::{read_image, write_image};
use ecgdx_core::syngen::{gen_dataset, GenConfig};

use crate::config::{
    config_hash, file_hash, read_config, sidecar, write_json, write_run_record, CmdResult,
    Context, Failure, PreprocessConfig, PseudoLabelFile, TrainFile,
};
use crate::Stage;

/// Largest tolerated share of per-sample preprocessing failures.
const MAX_FAILURE_RATE: f64 = 0.01;

fn absolute(p: &Path) -> CmdResult<PathBuf> {
    std::path::absolute(p).at(p)
}

fn create_dir(dir: &Path) -> CmdResult<PathBuf> {
    fs::create_dir_all(dir).at(dir)?;
    absolute(dir)
}

fn read_manifest(path: &Path) -> CmdResult<Vec<SampleRecord>> {
    load_manifest(absolute(path)?).at(path)
}

/// Ids become file names, so they must be plain names.
fn file_stem(id: &str) -> Option<&str> {
    let plain = !id.is_empty()
        && id != "."
        && id != ".."
        && !id.contains(['/', '\\'])
        && Path::new(id).file_name().is_some();
    plain.then_some(id)
}

pub fn gen(n: Option<usize>, out: &Path, seed: Option<u64>, config: Option<&Path>) -> CmdResult {
    let mut cfg: GenConfig = read_config(config)?;
    if let Some(n) = n {
        cfg.n = n;
    }
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let dir = create_dir(out)?;
    let records = gen_dataset(&cfg, &dir).at(&dir)?;
    write_run_record(&dir.join("run.json"), "gen", &cfg)?;
    info!("generated {} samples", records.len());
    println!("{}", dir.join("manifest.json").display());
    Ok(())
}

pub fn preprocess(
    manifest: &Path,
    out: &Path,
    emit_gray_inverted: bool,
    config: Option<&Path>,
) -> CmdResult {
    let mut cfg: PreprocessConfig = read_config(config)?;
    cfg.emit_gray_inverted |= emit_gray_inverted;
    let records = read_manifest(manifest)?;
    let dir = create_dir(out)?;
    let mut kept = Vec::with_capacity(records.len());
    let mut failed = 0usize;
    for r in &records {
        match preprocess_one(r, &dir, &cfg) {
            Ok(rec) => kept.push(rec),
            Err(e) => {
                warn!("skipping sample '{}': {e}", r.id);
                failed += 1;
            }
        }
    }
    save_manifest(dir.join("manifest.json"), &kept).at(&dir)?;
    write_run_record(&dir.join("run.json"), "preprocess", &cfg)?;
    info!("rectified {} of {} samples", kept.len(), records.len());
    if failed as f64 > MAX_FAILURE_RATE * records.len() as f64 {
        return Err(Failure::runtime(format!(
            "{failed} of {} samples failed preprocessing (more than {}%)",
            records.len(),
            MAX_FAILURE_RATE * 100.0
        )));
    }
    println!("{}", dir.join("manifest.json").display());
    Ok(())
}

fn preprocess_one(r: &SampleRecord, dir: &Path, cfg: &PreprocessConfig) -> anyhow::Result<SampleRecord> {
    let stem = file_stem(&r.id).ok_or_else(|| anyhow::anyhow!("id is not a plain file name"))?;
    let img = read_image(&r.image)?;
    let page = if r.rectified {
        img
    } else {
        rectify_detailed(&img, &cfg.rectify)?.image
    };
    let image = dir.join(format!("{stem}.ppm"));
    write_image(&page, &image)?;
    if cfg.emit_gray_inverted {
        write_image(&page.to_grayscale().invert(), dir.join(format!("{stem}_gi.pgm")))?;
    }
    let mask = match &r.mask {
        Some(m) => {
            let dst = dir.join(format!("{stem}_mask.pgm"));
            fs::copy(m, &dst)?;
            Some(dst)
        }
        None => None,
    };
    Ok(SampleRecord {
        image,
        mask,
        corners: None,
        rectified: true,
        ..r.clone()
    })
}

/// What a training run depends on besides the data.
#[derive(Serialize)]
struct TrainRun<'a> {
    stage: &'a str,
    config: &'a TrainFile,
    /// SHA-256 of the initial weight file, if any.
    init: Option<String>,
}

#[derive(Serialize)]
struct TrainLog<'a> {
    config_hash: String,
    stage: &'a str,
    epochs: &'a [EpochLog],
}

pub fn train(
    stage: Stage,
    manifest: &Path,
    config: Option<&Path>,
    init: Option<&Path>,
    out: &Path,
) -> CmdResult {
    let file: TrainFile = read_config(config)?;
    let records = read_manifest(manifest)?;
    let init_params = init.map(|p| load_weights(p).at(p)).transpose()?;
    let stage_name = match stage {
        Stage::Masks => "masks",
        Stage::Images => "images",
        Stage::Seg => "seg",
    };
    let run = TrainRun {
        stage: stage_name,
        config: &file,
        init: init.map(file_hash).transpose()?,
    };
    let mut hook = |e: &EpochLog, _: &ModelParams| {
        info!("epoch {} loss {:.5} lr {:.6}", e.epoch, e.loss, e.lr);
        ControlFlow::Continue(())
    };
    let (params, log) = match stage {
        Stage::Masks | Stage::Images => {
            let kind = if stage == Stage::Masks {
                InputKind::Mask
            } else {
                InputKind::GrayscaleInverted
            };
            let data = prepare(&records, kind, file.dims).at(manifest)?;
            train_classifier(init_params.as_ref(), &data, &file.train, &mut hook)?
        }
        Stage::Seg => {
            let data = SegmentationSet::from_records(&records, file.dims).at(manifest)?;
            train_segmenter(init_params.as_ref(), &data, &file.train, &file.ftl, &mut hook)?
        }
    };
    save_weights(&params, out).at(out)?;
    let mut log_path = out.as_os_str().to_owned();
    log_path.push(".log.json");
    write_json(
        Path::new(&log_path),
        &TrainLog {
            config_hash: config_hash(&run),
            stage: stage_name,
            epochs: &log,
        },
    )?;
    write_run_record(&sidecar(out), "train", &run)
}

/// Per-class thresholds on disk, tagged with the run that fitted them.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ThresholdFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config_hash: Option<String>,
    thresholds: PerClass<f64>,
}

#[derive(Serialize)]
struct ReportFile<'a> {
    config_hash: String,
    #[serde(flatten)]
    report: &'a MetricsReport,
}

#[derive(Serialize)]
struct EnsembleRun<'a> {
    /// SHA-256 of each weight file, in command-line order.
    models: Vec<String>,
    thresholds: Option<&'a PerClass<f64>>,
}

fn load_models(paths: &[PathBuf]) -> CmdResult<(Vec<ModelParams>, Vec<String>)> {
    let models = paths
        .iter()
        .map(|p| load_weights(p).at(p))
        .collect::<CmdResult<Vec<_>>>()?;
    let hashes = paths.iter().map(|p| file_hash(p)).collect::<CmdResult<_>>()?;
    Ok((models, hashes))
}

fn model_dims(m: &ModelParams) -> InputDims {
    let (_, height, width) = m.arch().input_dims();
    InputDims { width, height }
}

fn read_thresholds(path: &Path) -> CmdResult<PerClass<f64>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::usage(format!("cannot read thresholds {}: {e}", path.display())))?;
    let file: ThresholdFile = serde_json::from_str(&text)
        .map_err(|e| Failure::usage(format!("thresholds {}: {e}", path.display())))?;
    if let Some(t) = file.thresholds.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Failure::usage(format!("threshold {t} is outside [0, 1]")));
    }
    Ok(file.thresholds)
}

pub fn eval(
    weights: &[PathBuf],
    manifest: &Path,
    thresholds: Option<&Path>,
    report: &Path,
) -> CmdResult {
    let (models, hashes) = load_models(weights)?;
    let t = thresholds.map(read_thresholds).transpose()?;
    let records = read_manifest(manifest)?;
    let data = prepare(&records, InputKind::GrayscaleInverted, model_dims(&models[0])).at(manifest)?;
    let t_used = t.unwrap_or(PerClass([0.5; pipeline::NUM_CLASSES]));
    let result = evaluate(&models, &data, &t_used)?;
    let run = EnsembleRun {
        models: hashes,
        thresholds: Some(&t_used),
    };
    write_json(
        report,
        &ReportFile {
            config_hash: config_hash(&run),
            report: &result,
        },
    )?;
    info!(
        "macro AUROC {:.4}, macro F1 {:.4} on {} samples",
        result.macro_auroc, result.macro_f1, result.n_samples
    );
    Ok(())
}

pub fn fit_thresholds(weights: &[PathBuf], manifest: &Path, out: &Path) -> CmdResult {
    let (models, hashes) = load_models(weights)?;
    let records = read_manifest(manifest)?;
    let data = prepare(&records, InputKind::GrayscaleInverted, model_dims(&models[0])).at(manifest)?;
    let probs = predict_probs(&models, &data)?;
    let t = pipeline::fit_thresholds(&probs, &data.labels())?;
    let run = EnsembleRun {
        models: hashes,
        thresholds: None,
    };
    write_json(
        out,
        &ThresholdFile {
            config_hash: Some(config_hash(&run)),
            thresholds: t,
        },
    )
}

pub struct ExplainRequest<'a> {
    pub weights: &'a Path,
    pub image: &'a Path,
    pub class: ClassName,
    pub out: &'a Path,
    pub alpha: f64,
    pub rectified: bool,
    pub heatmap: Option<&'a Path>,
}

#[derive(Serialize)]
struct ExplainRun {
    model: String,
    image: String,
    class: &'static str,
    alpha: f64,
    rectified: bool,
}

pub fn explain(req: &ExplainRequest<'_>) -> CmdResult {
    if !(0.0..=1.0).contains(&req.alpha) {
        return Err(Failure::usage(format!(
            "--alpha must lie in [0, 1], got {}",
            req.alpha
        )));
    }
    let model = load_weights(req.weights).at(req.weights)?;
    let dims = model_dims(&model);
    let img = read_image(req.image).at(req.image)?;
    let input = image_input(&img, req.rectified, dims).at(req.image)?;
    let x = Tensor::new(vec![1, 1, dims.height, dims.width], input.data().to_vec())?;
    let heat = xgradcam(&model, &x, req.class)?;
    // The network sees inverted pages; the overlay shows them upright.
    let shown = overlay(&input.invert(), &heat, req.alpha)?;
    write_image(&shown, req.out).at(req.out)?;
    if let Some(p) = req.heatmap {
        write_image(heat.raster(), p).at(p)?;
    }
    let run = ExplainRun {
        model: file_hash(req.weights)?,
        image: file_hash(req.image)?,
        class: req.class.as_str(),
        alpha: req.alpha,
        rectified: req.rectified,
    };
    write_run_record(&sidecar(req.out), "explain", &run)
}

#[derive(Serialize)]
struct SplitRun {
    train_frac: f64,
    seed: u64,
}

pub fn split(manifest: &Path, train_frac: f64, seed: u64, train_out: &Path, val_out: &Path) -> CmdResult {
    let records = read_manifest(manifest)?;
    let (train, val) = split_dataset(&records, train_frac, seed)?;
    for (path, part) in [(train_out, &train), (val_out, &val)] {
        save_manifest(absolute(path)?, part).at(path)?;
        write_run_record(&sidecar(path), "split", &SplitRun { train_frac, seed })?;
    }
    info!("{} train, {} validation", train.len(), val.len());
    Ok(())
}

#[derive(Serialize)]
struct PseudoLabelRun<'a> {
    model: String,
    config: &'a PseudoLabelFile,
}

pub fn pseudo_label(weights: &Path, manifest: &Path, out: &Path, config: Option<&Path>) -> CmdResult {
    let file: PseudoLabelFile = read_config(config)?;
    let cfg = &file.pseudo_label;
    let model = load_weights(weights).at(weights)?;
    let dims = model_dims(&model);
    let mut records = read_manifest(manifest)?;
    let dir = create_dir(out)?;
    let picked: Vec<usize> = records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.mask.is_none())
        .map(|(i, _)| i)
        .take(cfg.count)
        .collect();
    let mut images = Vec::with_capacity(picked.len());
    for &i in &picked {
        let r = &records[i];
        if file_stem(&r.id).is_none() {
            return Err(Failure::runtime(format!(
                "sample id '{}' is not a plain file name",
                r.id
            )));
        }
        let img = read_image(&r.image).at(&r.image)?;
        images.push(image_input(&img, r.rectified, dims).at(&r.image)?);
    }
    let pairs = pipeline::pseudo_label(&model, &images, cfg)?;
    for (&i, (_, mask)) in picked.iter().zip(&pairs) {
        let path = dir.join(format!("{}_pseudo.pgm", records[i].id));
        write_image(&mask.to_raster(), &path).at(&path)?;
        records[i].mask = Some(path);
    }
    save_manifest(dir.join("manifest.json"), &records).at(&dir)?;
    let run = PseudoLabelRun {
        model: file_hash(weights)?,
        config: &file,
    };
    write_run_record(&dir.join("run.json"), "pseudo-label", &run)?;
    info!("labeled {} samples", pairs.len());
    println!("{}", dir.join("manifest.json").display());
    Ok(())
}
