//! Strict JSON configs, config hashing and run records.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use ecgdx_core::geometry::RectifyParams;
use ecgdx_core::nnkit::{FtlParams, TrainConfig};
use ecgdx_core::pipeline::{InputDims, PseudoLabelConfig};

/// A failed command, split by exit code: usage and config problems exit 2,
/// everything else exits 1.
#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }

    pub fn usage(msg: impl fmt::Display) -> Self {
        Failure::Usage(anyhow::anyhow!("{msg}"))
    }

    pub fn runtime(msg: impl fmt::Display) -> Self {
        Failure::Runtime(anyhow::anyhow!("{msg}"))
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(e) | Failure::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<ecgdx_core::Error> for Failure {
    fn from(e: ecgdx_core::Error) -> Self {
        use ecgdx_core::Error::*;
        match e {
            Config(_) | Parameter(_) => Failure::Usage(e.into()),
            _ => Failure::Runtime(e.into()),
        }
    }
}

pub type CmdResult<T = ()> = Result<T, Failure>;

/// Adds a path to an error message while keeping its exit class.
pub trait Context<T> {
    fn at(self, path: &Path) -> CmdResult<T>;
}

impl<T> Context<T> for ecgdx_core::Result<T> {
    fn at(self, path: &Path) -> CmdResult<T> {
        self.map_err(|e| match Failure::from(e) {
            Failure::Usage(e) => Failure::Usage(e.context(path.display().to_string())),
            Failure::Runtime(e) => Failure::Runtime(e.context(path.display().to_string())),
        })
    }
}

impl<T> Context<T> for std::io::Result<T> {
    fn at(self, path: &Path) -> CmdResult<T> {
        self.map_err(|e| Failure::Runtime(anyhow::Error::new(e).context(path.display().to_string())))
    }
}

/// Reads a strict JSON config, or the defaults when no file is given.
/// Unreadable files, bad JSON and unknown keys are usage errors.
pub fn read_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> CmdResult<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Failure::usage(format!("config {}: {e}", path.display())))
}

/// Hex SHA-256 of the canonical JSON form of a config.
pub fn config_hash<T: Serialize>(cfg: &T) -> String {
    let bytes = serde_json::to_vec(cfg).expect("configs serialize");
    hex::encode(Sha256::digest(bytes))
}

/// Hex SHA-256 of a file's bytes; identifies weight files inside configs.
pub fn file_hash(path: &Path) -> CmdResult<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path).at(path)?)))
}

/// Sidecar describing how an artifact was made. It holds no paths or
/// times, so reruns with the same config write identical bytes.
#[derive(Debug, Serialize)]
struct RunRecord<'a, T> {
    command: &'a str,
    version: &'a str,
    config_hash: String,
    config: &'a T,
}

pub fn write_run_record<T: Serialize>(path: &Path, command: &str, cfg: &T) -> CmdResult {
    let rec = RunRecord {
        command,
        version: env!("CARGO_PKG_VERSION"),
        config_hash: config_hash(cfg),
        config: cfg,
    };
    write_json(path, &rec)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> CmdResult {
    let mut text = serde_json::to_string_pretty(value).expect("outputs serialize");
    text.push('\n');
    fs::write(path, text).at(path)
}

/// `<artifact>.run.json` next to a single-file artifact.
pub fn sidecar(artifact: &Path) -> PathBuf {
    let mut name = artifact.as_os_str().to_owned();
    name.push(".run.json");
    PathBuf::from(name)
}

/// Config file of `preprocess`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub rectify: RectifyParams,
    /// Also write grayscale, inverted copies of the rectified photos.
    pub emit_gray_inverted: bool,
}

/// Config file of `train`. `ftl` only matters for the segmenter stage.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainFile {
    pub train: TrainConfig,
    pub dims: InputDims,
    pub ftl: FtlParams,
}

/// Config file of `pseudo-label`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PseudoLabelFile {
    pub pseudo_label: PseudoLabelConfig,
}

/// Pretty JSON of a config's defaults, for `--help`.
pub fn defaults_json<T: Serialize + Default>() -> String {
    serde_json::to_string_pretty(&T::default()).expect("configs serialize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn unknown_keys_are_usage_errors() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        write!(f, r#"{{"train": {{"epochs": 3, "bogus": 1}}}}"#).unwrap();
        let err = read_config::<TrainFile>(Some(f.path())).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn partial_config_keeps_defaults() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        write!(f, r#"{{"train": {{"epochs": 3}}}}"#).unwrap();
        let cfg: TrainFile = read_config(Some(f.path())).unwrap();
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.lr0, TrainConfig::default().lr0);
        assert_eq!(cfg.dims, InputDims::default());
    }

    #[test]
    fn missing_config_is_a_usage_error() {
        let err = read_config::<TrainFile>(Some(Path::new("/no/such/config.json"))).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn hash_tracks_content() {
        let a = TrainFile::default();
        let mut b = a.clone();
        assert_eq!(config_hash(&a), config_hash(&b));
        b.train.seed = 1;
        assert_ne!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a).len(), 64);
    }

    #[test]
    fn sidecar_appends_suffix() {
        assert_eq!(sidecar(Path::new("w/m.ecgw")), PathBuf::from("w/m.ecgw.run.json"));
    }
}
