//! Receding-horizon construction of a year-long rule curve.
//!
//! For every step `t₁` of the year the uncertain model is solved on a window
//! of `window_years` years starting at `t₁`, cut out of longer scenarios, and
//! only the rule value at `t₁` is kept. Each kept value therefore carries the
//! full window as guarantee, and the assembled curve has no seam at the year
//! boundary.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::hydrology::{check_years, HydroYear, TimeGrid};
use crate::reservoir::ReservoirSpec;
use crate::robust::{ci_lower_bounds, solve_bound_scenario, ConfidenceSpec};
use crate::stochastic::{Envelope, GenKind, ScenarioGenMethod, ScenarioSet};

pub const SCHEMA_VERSION: u32 = 1;

/// The uncertain model solved in each window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum MpcModel {
    Stochastic { generation: GenKind },
    Robust { confidence: ConfidenceSpec },
}

impl fmt::Display for MpcModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MpcModel::Stochastic { generation } => {
                let g = match generation {
                    GenKind::Merging => "merge",
                    GenKind::Mixing => "mix",
                };
                write!(f, "stochastic/{g}")
            }
            MpcModel::Robust { confidence } => {
                let side = if confidence.one_sided {
                    "one-sided"
                } else {
                    "two-sided"
                };
                write!(f, "robust/{}/{side}", confidence.level)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpcConfig {
    /// Guarantee horizon of every window.
    pub window_years: usize,
    /// Length of the scenarios the windows are cut from.
    pub scenario_years: usize,
    pub model: MpcModel,
}

impl MpcConfig {
    pub fn new(model: MpcModel) -> Self {
        Self {
            window_years: 2,
            scenario_years: 3,
            model,
        }
    }

    pub fn validate(&self, grid: &TimeGrid) -> Result<()> {
        let spy = grid.steps_per_year();
        if self.window_years == 0 {
            return Err(Error::InvalidArgument(
                "window must span at least one year".into(),
            ));
        }
        if self.scenario_years * spy < spy - 1 + self.window_years * spy {
            return Err(Error::InvalidArgument(format!(
                "{}-year windows shifted over a year do not fit in {}-year scenarios",
                self.window_years, self.scenario_years
            )));
        }
        if let MpcModel::Robust { confidence } = self.model {
            confidence.validate()?;
        }
        Ok(())
    }

    pub fn scenario_method(&self) -> Option<ScenarioGenMethod> {
        match self.model {
            MpcModel::Stochastic { generation } => Some(ScenarioGenMethod {
                kind: generation,
                years_per_scenario: self.scenario_years,
            }),
            MpcModel::Robust { .. } => None,
        }
    }
}

/// Timing and outcome of one window solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub start: usize,
    pub scenario_count: usize,
    #[serde(with = "secs")]
    pub elapsed: Duration,
    pub rule_value: f64,
    /// Scenario attaining the first-step value, when stochastic.
    pub binding_scenario: Option<String>,
}

mod secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_secs_f64(f64::deserialize(d)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveMetadata {
    /// e.g. `mpc stochastic/merge` or `direct robust/0.95/two-sided`.
    pub model: String,
    pub guarantee_years: usize,
    pub scenario_years: usize,
    pub scenario_count: usize,
    pub historical_years: usize,
    pub reservoir: String,
    pub solver: String,
    pub data_fingerprint: String,
    pub generated_at: String,
}

/// Minimum storage per step of one year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleCurve {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
    pub metadata: CurveMetadata,
}

#[derive(Serialize, Deserialize)]
struct CurveFile {
    schema_version: u32,
    #[serde(flatten)]
    curve: RuleCurve,
}

impl RuleCurve {
    /// Checks the value count and the storage bounds.
    pub fn validate(&self, spec: &ReservoirSpec) -> Result<()> {
        check_continuity(self)?;
        let tol = 1e-6 * spec.max_storage.max(1.0);
        for (t, &v) in self.values.iter().enumerate() {
            if !(v >= spec.min_storage - tol && v <= spec.max_storage + tol) {
                return Err(Error::InvalidArgument(format!(
                    "rule value {v} at step {t} outside [{}, {}]",
                    spec.min_storage, spec.max_storage
                )));
            }
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_curve_csv(&self.values, out)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = CurveFile {
            schema_version: SCHEMA_VERSION,
            curve: self.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CurveFile = serde_json::from_str(text)?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema version {}",
                file.schema_version
            )));
        }
        Ok(file.curve)
    }
}

pub fn write_curve_csv<W: Write>(values: &[f64], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Config(format!("writing curve CSV: {e}"));
    w.write_record(["step", "storage_m3"]).map_err(err)?;
    for (t, v) in values.iter().enumerate() {
        w.write_record([t.to_string(), v.to_string()])
            .map_err(err)?;
    }
    w.flush()
        .map_err(|e| Error::Config(format!("writing curve CSV: {e}")))
}

/// Reads a `step,storage_m3` curve and checks it has one value per step of
/// `grid`.
pub fn read_curve_csv<R: Read>(input: R, grid: &TimeGrid) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_reader(input);
    let mut values = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec.map_err(|e| Error::MalformedRow {
            line,
            msg: e.to_string(),
        })?;
        if rec.len() != 2 {
            return Err(Error::MalformedRow {
                line,
                msg: format!("expected 2 fields, got {}", rec.len()),
            });
        }
        let step: usize = rec[0].trim().parse().map_err(|_| Error::MalformedRow {
            line,
            msg: format!("bad step '{}'", &rec[0]),
        })?;
        if step != values.len() {
            return Err(Error::MalformedRow {
                line,
                msg: format!("expected step {}, got {step}", values.len()),
            });
        }
        let v: f64 = rec[1].trim().parse().map_err(|_| Error::MalformedRow {
            line,
            msg: format!("bad storage '{}'", &rec[1]),
        })?;
        values.push(v);
    }
    if values.len() != grid.steps_per_year() {
        return Err(Error::GridMismatch(format!(
            "curve has {} steps, grid {grid} has {}",
            values.len(),
            grid.steps_per_year()
        )));
    }
    Ok(values)
}

pub fn load_curve_csv(path: impl AsRef<Path>, grid: &TimeGrid) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_curve_csv(f, grid)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuityReport {
    pub steps: usize,
    /// `|values[0] − values[last]|`.
    pub wrap_jump: f64,
    pub max_step_change: f64,
}

pub fn check_continuity(curve: &RuleCurve) -> Result<ContinuityReport> {
    let spy = curve.grid.steps_per_year();
    if curve.values.len() != spy {
        return Err(Error::IncompleteCurve(format!(
            "{} values for {spy} steps",
            curve.values.len()
        )));
    }
    if let Some(t) = curve.values.iter().position(|v| !v.is_finite()) {
        return Err(Error::IncompleteCurve(format!("step {t} has no value")));
    }
    let max_step_change = curve
        .values
        .windows(2)
        .map(|w| (w[1] - w[0]).abs())
        .fold(0.0, f64::max);
    Ok(ContinuityReport {
        steps: spy,
        wrap_jump: (curve.values[0] - curve.values[spy - 1]).abs(),
        max_step_change,
    })
}

/// SHA-256 over the year labels, river ids and raw volumes.
pub fn data_fingerprint(years: &[HydroYear]) -> String {
    let mut h = Sha256::new();
    for y in years {
        h.update(y.label.as_bytes());
        h.update([0]);
        for (river, v) in &y.flows {
            h.update(river.as_bytes());
            h.update([0]);
            for x in v {
                h.update(x.to_le_bytes());
            }
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// RFC 3339 timestamp, taken from `SOURCE_DATE_EPOCH` when set.
pub fn generation_timestamp() -> String {
    let now = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .and_then(|secs| chrono::DateTime::from_timestamp(secs, 0))
        .unwrap_or_else(chrono::Utc::now);
    now.to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcRun {
    pub curve: RuleCurve,
    pub windows: Vec<WindowRecord>,
}

/// Runs the receding-horizon loop over every step of the year.
///
/// `progress` is called once per finished window, possibly from worker
/// threads and out of order.
pub fn run_mpc(
    spec: &ReservoirSpec,
    years: &[HydroYear],
    cfg: &MpcConfig,
    exec: &Exec,
    progress: &(dyn Fn(&WindowRecord) + Sync),
) -> Result<MpcRun> {
    spec.validate()?;
    let grid = check_years(years)?;
    spec.grid.ensure_same(&grid)?;
    cfg.validate(&grid)?;
    let spy = grid.steps_per_year();
    let len = cfg.window_years * spy;

    let (records, scenario_count) = match cfg.model {
        MpcModel::Stochastic { .. } => {
            let set = ScenarioSet::new(years, cfg.scenario_method().expect("stochastic"))?;
            let n = set.len();
            let solver = exec.solver();
            let window = |t1: usize| -> Result<WindowRecord> {
                let started = Instant::now();
                let env = exec.map_reduce(
                    n,
                    Envelope::empty,
                    |mut env, i| {
                        let outcome = set
                            .window(i, t1, len)
                            .and_then(|s| solver.solve_scenario(spec, &s));
                        env.add_outcome(i, outcome);
                        env
                    },
                    Envelope::merge,
                );
                let env = env
                    .check(|i| set.label(i))
                    .map_err(|e| Error::InfeasibleWindow {
                        start: t1,
                        cause: Box::new(e),
                    })?;
                let rec = WindowRecord {
                    start: t1,
                    scenario_count: n,
                    elapsed: started.elapsed(),
                    rule_value: env.rule[0],
                    binding_scenario: Some(set.label(env.argmax[0])),
                };
                progress(&rec);
                Ok(rec)
            };
            (exec.install(|| exec.map(spy, window))?, n)
        }
        MpcModel::Robust { confidence } => {
            let worst = ci_lower_bounds(years, confidence)?;
            let window = |t1: usize| -> Result<WindowRecord> {
                let started = Instant::now();
                let tr = solve_bound_scenario(
                    spec,
                    &worst.window(t1, len),
                    confidence.level,
                    exec.backend,
                )
                .map_err(|e| Error::InfeasibleWindow {
                    start: t1,
                    cause: Box::new(e),
                })?;
                let rec = WindowRecord {
                    start: t1,
                    scenario_count: 1,
                    elapsed: started.elapsed(),
                    rule_value: tr.storages[0],
                    binding_scenario: None,
                };
                progress(&rec);
                Ok(rec)
            };
            (exec.install(|| exec.map(spy, window))?, 1)
        }
    };

    let windows = records.into_iter().collect::<Result<Vec<_>>>()?;
    let curve = RuleCurve {
        grid,
        values: windows.iter().map(|w| w.rule_value).collect(),
        metadata: CurveMetadata {
            model: format!("mpc {}", cfg.model),
            guarantee_years: cfg.window_years,
            scenario_years: cfg.scenario_years,
            scenario_count,
            historical_years: years.len(),
            reservoir: spec.name.clone(),
            solver: exec.solver().name().to_string(),
            data_fingerprint: data_fingerprint(years),
            generated_at: generation_timestamp(),
        },
    };
    curve.validate(spec)?;
    Ok(MpcRun { curve, windows })
}

/// Result of solving the uncertain model once over the whole horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectRun {
    /// `T + 1` rule storages.
    pub rule_storage: Vec<f64>,
    pub scenario_count: usize,
    pub curve: RuleCurve,
}

/// Solves the uncertain model over `horizon_years` without the receding
/// horizon. The curve holds the first year of the rule storages.
pub fn solve_direct(
    spec: &ReservoirSpec,
    years: &[HydroYear],
    model: MpcModel,
    horizon_years: usize,
    exec: &Exec,
) -> Result<DirectRun> {
    spec.validate()?;
    let grid = check_years(years)?;
    spec.grid.ensure_same(&grid)?;
    let (rule_storage, scenario_count) = match model {
        MpcModel::Stochastic { generation } => {
            let method = ScenarioGenMethod {
                kind: generation,
                years_per_scenario: horizon_years,
            };
            let scenarios: Vec<_> = ScenarioSet::new(years, method)?.iter().collect();
            let sol = crate::stochastic::solve_decoupled(spec, &scenarios, exec)?;
            (sol.rule_storage, scenarios.len())
        }
        MpcModel::Robust { confidence } => {
            let sol =
                crate::robust::solve_robust(spec, years, confidence, horizon_years, exec.backend)?;
            (sol.trajectory.storages, 1)
        }
    };
    let spy = grid.steps_per_year();
    let curve = RuleCurve {
        grid,
        values: rule_storage[..spy].to_vec(),
        metadata: CurveMetadata {
            model: format!("direct {model}"),
            guarantee_years: horizon_years,
            scenario_years: horizon_years,
            scenario_count,
            historical_years: years.len(),
            reservoir: spec.name.clone(),
            solver: exec.solver().name().to_string(),
            data_fingerprint: data_fingerprint(years),
            generated_at: generation_timestamp(),
        },
    };
    curve.validate(spec)?;
    Ok(DirectRun {
        rule_storage,
        scenario_count,
        curve,
    })
}
