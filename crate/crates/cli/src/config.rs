//! Run configuration: an optional TOML file overridden by flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use rulecurve_core::hydrology::{StepLength, TimeGrid};
use rulecurve_core::reservoir::{eupen, load_spec, Backend};
use rulecurve_core::{Exec, ReservoirSpec};

/// Every key is optional; each command reads the ones it needs. Relative
/// paths are resolved against the directory holding the file.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub data: Option<PathBuf>,
    pub spec: Option<PathBuf>,
    pub grid: Option<String>,
    pub year_start_month: Option<u32>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub solver: Option<String>,

    pub model: Option<String>,
    pub generation: Option<String>,
    pub k: Option<usize>,
    pub mpc: Option<bool>,
    pub window_years: Option<usize>,
    pub level: Option<f64>,
    pub one_sided: Option<bool>,

    pub levels: Option<Vec<f64>>,
    pub current: Option<PathBuf>,
    pub curves: Option<Vec<PathBuf>>,

    pub seed: Option<u64>,
    pub years: Option<usize>,
    pub first_year: Option<i32>,
    pub preset: Option<String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: FileConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [&mut cfg.data, &mut cfg.spec, &mut cfg.out, &mut cfg.current]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        for p in cfg.curves.iter_mut().flatten() {
            fix(p);
        }
        Ok(cfg)
    }
}

/// Settings shared by the commands that read discharge data.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub data: PathBuf,
    pub spec_path: Option<PathBuf>,
    pub grid: TimeGrid,
    pub out: PathBuf,
    pub exec: Exec,
}

impl Inputs {
    pub fn spec(&self) -> Result<ReservoirSpec> {
        match &self.spec_path {
            Some(p) => load_spec(p, &self.grid)
                .with_context(|| format!("loading reservoir spec {}", p.display())),
            None => Ok(eupen(&self.grid)),
        }
    }
}

pub fn grid(step: &str, start_month: u32) -> Result<TimeGrid> {
    let step: StepLength = step.parse()?;
    Ok(TimeGrid::new(step, start_month)?)
}

pub fn backend(s: &str) -> Result<Backend> {
    Ok(s.parse()?)
}

pub fn require<T>(v: Option<T>, what: &str) -> Result<T> {
    match v {
        Some(v) => Ok(v),
        None => bail!("missing {what} (pass a flag or set it in --config)"),
    }
}

pub fn check_exists(p: &Path, what: &str) -> Result<()> {
    if !p.exists() {
        bail!("{what} {} does not exist", p.display());
    }
    Ok(())
}
