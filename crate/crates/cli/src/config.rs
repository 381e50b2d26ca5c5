//! Run configuration: a versioned JSON document aggregating the per-stage
//! configuration structs, plus the run manifest each subcommand writes next
//! to its outputs.

use std::path::{Path, PathBuf};

use hypack::{CongealSpec, DensitySpec, PackingSpec, SelectionSpec, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::{val, CliError};

pub const RUN_CONFIG_VERSION: u32 = 1;

/// Defaults shared across subcommands. Individual flags override fields; a
/// top-level `seed` overrides the per-stage seeds when those are absent.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub packing: Option<PackingSpec>,
    #[serde(default)]
    pub train: Option<TrainConfig>,
    #[serde(default)]
    pub density: Option<DensitySpec>,
    #[serde(default)]
    pub selection: Option<SelectionSpec>,
    #[serde(default)]
    pub congeal: Option<CongealSpec>,
    /// Dataset directory consumed by stages that read data.
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    /// Directory that anchors relative outputs.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let bytes = std::fs::read(path)
            .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
        let cfg: RunConfig = serde_json::from_slice(&bytes)
            .map_err(|e| CliError::Validation(format!("bad config {}: {e}", path.display())))?;
        if cfg.version != RUN_CONFIG_VERSION {
            return Err(CliError::Validation(format!(
                "config {} has version {}, this build reads version {RUN_CONFIG_VERSION}",
                path.display(),
                cfg.version
            )));
        }
        if let Some(dir) = &cfg.dataset {
            if !dir.exists() {
                return Err(CliError::Validation(format!(
                    "config dataset path {} does not exist",
                    dir.display()
                )));
            }
        }
        cfg.packing.as_ref().map(|p| p.validate().map_err(val)).transpose()?;
        cfg.train.as_ref().map(|t| t.validate().map_err(val)).transpose()?;
        cfg.selection.as_ref().map(|s| s.validate().map_err(val)).transpose()?;
        cfg.congeal.as_ref().map(|c| c.validate().map_err(val)).transpose()?;
        Ok(cfg)
    }

    /// Loads the config named by `--config`, or an empty default.
    pub fn resolve(path: Option<&PathBuf>) -> Result<Self, CliError> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(Self { version: RUN_CONFIG_VERSION, ..Self::default() }),
        }
    }
}

/// The record every run leaves behind: the resolved configuration, the seed
/// it ran with, and every file it wrote.
#[derive(Debug, Serialize)]
pub struct RunManifest<C: Serialize> {
    pub version: u32,
    pub subcommand: &'static str,
    pub seed: u64,
    pub config: C,
    pub outputs: Vec<String>,
}

impl<C: Serialize> RunManifest<C> {
    pub fn write(
        subcommand: &'static str,
        seed: u64,
        config: C,
        outputs: &[&Path],
        manifest_path: &Path,
    ) -> Result<(), CliError> {
        let doc = Self {
            version: RUN_CONFIG_VERSION,
            subcommand,
            seed,
            config,
            outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        };
        let mut body = serde_json::to_vec_pretty(&doc)
            .map_err(|e| CliError::Runtime(format!("cannot encode run manifest: {e}")))?;
        body.push(b'\n');
        std::fs::write(manifest_path, body).map_err(|e| {
            CliError::Runtime(format!("cannot write {}: {e}", manifest_path.display()))
        })?;
        Ok(())
    }
}

/// Manifest path for a single-file output: `<file>.run.json`.
pub fn manifest_for_file(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".run.json");
    out.with_file_name(name)
}

/// Manifest path for a directory output: `<dir>/run_manifest.json`.
pub fn manifest_for_dir(dir: &Path) -> PathBuf {
    dir.join("run_manifest.json")
}
