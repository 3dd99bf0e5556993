//! Reservoir constants, inflow scenarios and the deterministic storage LP.
//!
//! For one scenario of horizon `T` the model has storages `s_0..s_T`,
//! releases `r_0..r_{T-1}` and diversion intakes `d_{t,r}`, linked by the
//! mass balance
//!
//! ```text
//! s_{t+1} = s_t − (drinking_t + envflow_t + r_t) + (Σ_trib flow_{t,r} + Σ_div d_{t,r})
//! ```
//!
//! with `min ≤ s_t ≤ max`, `0 ≤ r_t ≤ penstock + bottom outlet` and
//! `0 ≤ d_{t,r} ≤ min(maxDischarge_r, max(0, flow_{t,r} − envflow_r))`.
//! The objective minimises `Σ_t s_t`. Inputs and outputs are affine in the
//! other variables and are substituted out of the LP.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hydrology::{HydroYear, TimeGrid, SECONDS_PER_DAY};
use crate::lp::{Cmp, DenseSimplex, LpBuilder, LpProblem, LpSolution, LpSolver, Status, VarId};

/// A river partially routed into the reservoir through a tunnel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivertedRiverSpec {
    pub river: String,
    /// Tunnel capacity per step of the year (m³).
    pub max_discharge: Vec<f64>,
    /// Flow that must stay in the river, per step of the year (m³).
    pub environmental_flow: Vec<f64>,
}

/// Physical and operational constants of the dam, in m³ per grid step.
///
/// Per-step quantities are profiles over one year (`steps_per_year` long);
/// step `t` of a scenario uses entry `(start_step + t) % steps_per_year`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReservoirSpec {
    pub name: String,
    pub grid: TimeGrid,
    pub min_storage: f64,
    pub max_storage: f64,
    pub drinking_water: Vec<f64>,
    pub environmental_flow: Vec<f64>,
    pub penstock_capacity: Vec<f64>,
    pub bottom_outlet_capacity: Vec<f64>,
    pub tributaries: Vec<String>,
    pub diverted: Vec<DivertedRiverSpec>,
}

impl ReservoirSpec {
    /// A spec with constant per-step values, no rivers and no demand.
    pub fn constant(grid: TimeGrid, min_storage: f64, max_storage: f64) -> Self {
        let n = grid.steps_per_year();
        Self {
            name: "reservoir".into(),
            grid,
            min_storage,
            max_storage,
            drinking_water: vec![0.0; n],
            environmental_flow: vec![0.0; n],
            penstock_capacity: vec![0.0; n],
            bottom_outlet_capacity: vec![f64::INFINITY; n],
            tributaries: Vec::new(),
            diverted: Vec::new(),
        }
    }

    pub fn with_demand(mut self, drinking_water: f64, environmental_flow: f64) -> Self {
        let n = self.grid.steps_per_year();
        self.drinking_water = vec![drinking_water; n];
        self.environmental_flow = vec![environmental_flow; n];
        self
    }

    pub fn with_release_capacity(mut self, penstock: f64, bottom_outlet: f64) -> Self {
        let n = self.grid.steps_per_year();
        self.penstock_capacity = vec![penstock; n];
        self.bottom_outlet_capacity = vec![bottom_outlet; n];
        self
    }

    pub fn with_tributary(mut self, river: impl Into<String>) -> Self {
        self.tributaries.push(river.into());
        self
    }

    pub fn with_diverted(
        mut self,
        river: impl Into<String>,
        max_discharge: f64,
        environmental_flow: f64,
    ) -> Self {
        let n = self.grid.steps_per_year();
        self.diverted.push(DivertedRiverSpec {
            river: river.into(),
            max_discharge: vec![max_discharge; n],
            environmental_flow: vec![environmental_flow; n],
        });
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        if !(self.min_storage >= 0.0) || !(self.min_storage < self.max_storage) {
            return bad(format!(
                "need 0 ≤ min_storage < max_storage, got {} and {}",
                self.min_storage, self.max_storage
            ));
        }
        if !self.max_storage.is_finite() {
            return bad("max_storage must be finite".into());
        }
        let n = self.grid.steps_per_year();
        let mut profiles: Vec<(&str, &[f64])> = vec![
            ("drinking_water", &self.drinking_water),
            ("environmental_flow", &self.environmental_flow),
            ("penstock_capacity", &self.penstock_capacity),
            ("bottom_outlet_capacity", &self.bottom_outlet_capacity),
        ];
        for d in &self.diverted {
            profiles.push(("max_discharge", &d.max_discharge));
            profiles.push(("environmental_flow", &d.environmental_flow));
        }
        for (name, p) in profiles {
            if p.len() != n {
                return bad(format!(
                    "{name} has {} entries, grid has {n} steps",
                    p.len()
                ));
            }
            if let Some(v) = p.iter().find(|v| !(**v >= 0.0)) {
                return bad(format!("{name} has negative or NaN entry {v}"));
            }
        }
        let trib: BTreeSet<&str> = self.tributaries.iter().map(String::as_str).collect();
        if trib.len() != self.tributaries.len() {
            return bad("duplicate tributary".into());
        }
        let mut div = BTreeSet::new();
        for d in &self.diverted {
            if trib.contains(d.river.as_str()) {
                return bad(format!(
                    "river '{}' is both tributary and diverted",
                    d.river
                ));
            }
            if !div.insert(d.river.as_str()) {
                return bad(format!("duplicate diverted river '{}'", d.river));
            }
        }
        Ok(())
    }

    /// All river ids the model reads, tributaries first.
    pub fn rivers(&self) -> impl Iterator<Item = &str> {
        self.tributaries
            .iter()
            .map(String::as_str)
            .chain(self.diverted.iter().map(|d| d.river.as_str()))
    }

    /// Demand that leaves the reservoir regardless of decisions, at step of year `k`.
    pub fn fixed_outflow(&self, k: usize) -> f64 {
        self.drinking_water[k] + self.environmental_flow[k]
    }

    pub fn release_capacity(&self, k: usize) -> f64 {
        self.penstock_capacity[k] + self.bottom_outlet_capacity[k]
    }

    pub fn usable_capacity(&self) -> f64 {
        self.max_storage - self.min_storage
    }
}

/// A rate in the raw spec file: one value or one value per step of the year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RawRate {
    Constant(f64),
    Profile(Vec<f64>),
}

/// Reservoir spec as written in the config file, units encoded in key names.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawReservoirSpec {
    #[serde(default)]
    pub name: Option<String>,
    pub min_storage_m3: Option<f64>,
    pub min_storage_hm3: Option<f64>,
    pub max_storage_m3: Option<f64>,
    pub max_storage_hm3: Option<f64>,
    pub drinking_water_m3_per_day: Option<RawRate>,
    pub drinking_water_m3_per_s: Option<RawRate>,
    pub environmental_flow_m3_per_day: Option<RawRate>,
    pub environmental_flow_m3_per_s: Option<RawRate>,
    pub penstock_m3_per_s: Option<RawRate>,
    pub bottom_outlet_m3_per_s: Option<RawRate>,
    #[serde(default)]
    pub tributaries: Vec<String>,
    #[serde(default)]
    pub diverted: Vec<RawDivertedRiver>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawDivertedRiver {
    pub river: String,
    pub max_discharge_m3_per_s: Option<RawRate>,
    pub max_discharge_m3_per_day: Option<RawRate>,
    pub environmental_flow_m3_per_s: Option<RawRate>,
    pub environmental_flow_m3_per_day: Option<RawRate>,
}

impl RawReservoirSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }
}

enum RateUnit {
    PerDay,
    PerSecond,
}

fn volume(m3: Option<f64>, hm3: Option<f64>, key: &str) -> Result<f64> {
    let v = match (m3, hm3) {
        (Some(v), None) => v,
        (None, Some(v)) => v * 1e6,
        (Some(_), Some(_)) => {
            return Err(Error::InvalidSpec(format!(
                "both {key}_m3 and {key}_hm3 given"
            )))
        }
        (None, None) => return Err(Error::InvalidSpec(format!("missing {key}_m3"))),
    };
    if !(v >= 0.0) || !v.is_finite() {
        return Err(Error::InvalidSpec(format!("{key} is {v}")));
    }
    Ok(v)
}

fn rate_profile(
    per_day: Option<&RawRate>,
    per_s: Option<&RawRate>,
    key: &str,
    grid: &TimeGrid,
    default: Option<f64>,
) -> Result<Vec<f64>> {
    let (raw, unit) = match (per_day, per_s) {
        (Some(r), None) => (r.clone(), RateUnit::PerDay),
        (None, Some(r)) => (r.clone(), RateUnit::PerSecond),
        (Some(_), Some(_)) => {
            return Err(Error::InvalidSpec(format!(
                "both per-day and per-second values given for {key}"
            )))
        }
        (None, None) => match default {
            Some(v) => (RawRate::Constant(v), RateUnit::PerDay),
            None => return Err(Error::InvalidSpec(format!("missing {key}"))),
        },
    };
    let n = grid.steps_per_year();
    let rates = match raw {
        RawRate::Constant(v) => vec![v; n],
        RawRate::Profile(v) if v.len() == n => v,
        RawRate::Profile(v) => {
            return Err(Error::InvalidSpec(format!(
                "{key} profile has {} entries, grid has {n} steps",
                v.len()
            )))
        }
    };
    let per_day_factor = match unit {
        RateUnit::PerDay => 1.0,
        RateUnit::PerSecond => SECONDS_PER_DAY,
    };
    rates
        .iter()
        .enumerate()
        .map(|(k, &r)| {
            if !(r >= 0.0) || !r.is_finite() {
                Err(Error::InvalidSpec(format!("{key} has value {r}")))
            } else {
                Ok(r * per_day_factor * grid.step_days(k) as f64)
            }
        })
        .collect()
}

/// Converts config-file rates to volumes per grid step.
///
/// Per-day rates are multiplied by the number of days in each step, per-second
/// rates additionally by 86 400. Steps of unequal length (the 8-day last week,
/// calendar months) get proportionally larger volumes.
pub fn convert_spec_units(raw: &RawReservoirSpec, grid: &TimeGrid) -> Result<ReservoirSpec> {
    let mut diverted = Vec::new();
    for d in &raw.diverted {
        diverted.push(DivertedRiverSpec {
            river: d.river.clone(),
            max_discharge: rate_profile(
                d.max_discharge_m3_per_day.as_ref(),
                d.max_discharge_m3_per_s.as_ref(),
                &format!("{}.max_discharge", d.river),
                grid,
                None,
            )?,
            environmental_flow: rate_profile(
                d.environmental_flow_m3_per_day.as_ref(),
                d.environmental_flow_m3_per_s.as_ref(),
                &format!("{}.environmental_flow", d.river),
                grid,
                Some(0.0),
            )?,
        });
    }
    let spec = ReservoirSpec {
        name: raw.name.clone().unwrap_or_else(|| "reservoir".into()),
        grid: *grid,
        min_storage: volume(raw.min_storage_m3, raw.min_storage_hm3, "min_storage")?,
        max_storage: volume(raw.max_storage_m3, raw.max_storage_hm3, "max_storage")?,
        drinking_water: rate_profile(
            raw.drinking_water_m3_per_day.as_ref(),
            raw.drinking_water_m3_per_s.as_ref(),
            "drinking_water",
            grid,
            None,
        )?,
        environmental_flow: rate_profile(
            raw.environmental_flow_m3_per_day.as_ref(),
            raw.environmental_flow_m3_per_s.as_ref(),
            "environmental_flow",
            grid,
            Some(0.0),
        )?,
        penstock_capacity: rate_profile(
            None,
            raw.penstock_m3_per_s.as_ref(),
            "penstock",
            grid,
            Some(0.0),
        )?,
        bottom_outlet_capacity: rate_profile(
            None,
            raw.bottom_outlet_m3_per_s.as_ref(),
            "bottom_outlet",
            grid,
            Some(0.0),
        )?,
        tributaries: raw.tributaries.clone(),
        diverted,
    };
    spec.validate()?;
    Ok(spec)
}

pub fn load_spec(path: impl AsRef<Path>, grid: &TimeGrid) -> Result<ReservoirSpec> {
    convert_spec_units(&RawReservoirSpec::load(path)?, grid)
}

/// The Eupen (Vesdre) dam, as shipped in `eupen.toml`.
pub const EUPEN_TOML: &str = include_str!("../../../eupen.toml");

pub fn eupen(grid: &TimeGrid) -> ReservoirSpec {
    let raw = RawReservoirSpec::from_toml(EUPEN_TOML).expect("bundled spec parses");
    convert_spec_units(&raw, grid).expect("bundled spec is valid")
}

/// A multi-year inflow trajectory fed to one LP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub grid: TimeGrid,
    /// Step of the year at which the scenario begins.
    pub start_step: usize,
    /// River id → per-step volumes (m³).
    pub flows: BTreeMap<String, Vec<f64>>,
    /// Provenance, e.g. `1997+1998`.
    pub label: String,
    pub years: Vec<String>,
}

impl Scenario {
    /// Concatenates the given years.
    pub fn from_years(years: &[&HydroYear]) -> Result<Self> {
        let Some(first) = years.first() else {
            return Err(Error::InvalidScenario("no years".into()));
        };
        let mut flows: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for y in years {
            first.grid.ensure_same(&y.grid)?;
            if y.flows.len() != first.flows.len() {
                return Err(Error::InvalidScenario(format!(
                    "years {} and {} have different rivers",
                    first.label, y.label
                )));
            }
            for (river, v) in &y.flows {
                if !first.flows.contains_key(river) {
                    return Err(Error::InvalidScenario(format!(
                        "river '{river}' missing from year {}",
                        first.label
                    )));
                }
                flows.entry(river.clone()).or_default().extend_from_slice(v);
            }
        }
        let labels: Vec<String> = years.iter().map(|y| y.label.clone()).collect();
        Ok(Self {
            grid: first.grid,
            start_step: 0,
            flows,
            label: labels.join("+"),
            years: labels,
        })
    }

    pub fn horizon(&self) -> usize {
        self.flows.values().next().map_or(0, Vec::len)
    }

    pub fn step_of_year(&self, t: usize) -> usize {
        (self.start_step + t) % self.grid.steps_per_year()
    }

    /// Steps `[start, start + len)` as a new scenario.
    pub fn slice(&self, start: usize, len: usize) -> Result<Scenario> {
        if start + len > self.horizon() {
            return Err(Error::InvalidScenario(format!(
                "slice {start}..{} exceeds horizon {} of {}",
                start + len,
                self.horizon(),
                self.label
            )));
        }
        Ok(Scenario {
            grid: self.grid,
            start_step: (self.start_step + start) % self.grid.steps_per_year(),
            flows: self
                .flows
                .iter()
                .map(|(k, v)| (k.clone(), v[start..start + len].to_vec()))
                .collect(),
            label: self.label.clone(),
            years: self.years.clone(),
        })
    }

    /// Checks this scenario against `spec`: shared grid, every river present,
    /// equal lengths, nonnegative volumes.
    pub fn validate_for(&self, spec: &ReservoirSpec) -> Result<()> {
        spec.grid.ensure_same(&self.grid)?;
        let t = self.horizon();
        for river in spec.rivers() {
            let Some(v) = self.flows.get(river) else {
                return Err(Error::MissingRiver {
                    scenario: self.label.clone(),
                    river: river.to_string(),
                });
            };
            if v.len() != t {
                return Err(Error::InvalidScenario(format!(
                    "{}: river '{river}' has {} steps, expected {t}",
                    self.label,
                    v.len()
                )));
            }
            if let Some(x) = v.iter().find(|x| !(**x >= 0.0) || !x.is_finite()) {
                return Err(Error::InvalidScenario(format!(
                    "{}: river '{river}' has volume {x}",
                    self.label
                )));
            }
        }
        if t == 0 {
            return Err(Error::InvalidScenario(format!(
                "{}: empty horizon",
                self.label
            )));
        }
        Ok(())
    }

    pub fn total_inflow(&self, t: usize) -> f64 {
        self.flows.values().map(|v| v[t]).sum()
    }
}

/// Per-step inflow data of one scenario as the LP sees it.
#[derive(Debug, Clone)]
pub(crate) struct StepData {
    /// Σ tributary flow at t.
    pub tributary: Vec<f64>,
    /// Demand and dam environmental flow at t.
    pub fixed_out: Vec<f64>,
    pub release_cap: Vec<f64>,
    /// Per diverted river, the intake upper bound at t.
    pub diversion_cap: Vec<Vec<f64>>,
}

impl StepData {
    pub fn new(spec: &ReservoirSpec, scenario: &Scenario) -> Self {
        let t_len = scenario.horizon();
        let steps = || (0..t_len).map(|t| scenario.step_of_year(t));
        let tributary = (0..t_len)
            .map(|t| spec.tributaries.iter().map(|r| scenario.flows[r][t]).sum())
            .collect();
        let fixed_out = steps().map(|k| spec.fixed_outflow(k)).collect();
        let release_cap = steps().map(|k| spec.release_capacity(k)).collect();
        let diversion_cap = spec
            .diverted
            .iter()
            .map(|d| {
                let flow = &scenario.flows[&d.river];
                (0..t_len)
                    .map(|t| {
                        let k = scenario.step_of_year(t);
                        d.max_discharge[k].min((flow[t] - d.environmental_flow[k]).max(0.0))
                    })
                    .collect()
            })
            .collect();
        Self {
            tributary,
            fixed_out,
            release_cap,
            diversion_cap,
        }
    }

    pub fn horizon(&self) -> usize {
        self.tributary.len()
    }

    /// Right-hand side of the mass-balance row at t.
    pub fn net_fixed(&self, t: usize) -> f64 {
        self.tributary[t] - self.fixed_out[t]
    }
}

/// Column indices of one scenario block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockLayout {
    pub horizon: usize,
    pub diverted_rivers: usize,
    storage0: usize,
    release0: usize,
    diverted0: usize,
}

impl BlockLayout {
    pub fn storage(&self, t: usize) -> usize {
        self.storage0 + t
    }

    pub fn release(&self, t: usize) -> usize {
        self.release0 + t
    }

    pub fn diverted(&self, r: usize, t: usize) -> usize {
        self.diverted0 + r * self.horizon + t
    }
}

/// Adds one scenario's variables and mass-balance rows to `b`. Storage
/// variables get cost `storage_cost`.
pub(crate) fn add_block(
    b: &mut LpBuilder,
    spec: &ReservoirSpec,
    data: &StepData,
    prefix: &str,
    storage_cost: f64,
) -> Result<BlockLayout> {
    let t_len = data.horizon();
    let storage0 = b.num_vars();
    for t in 0..=t_len {
        b.add_variable(
            format!("{prefix}storage_{t}"),
            spec.min_storage,
            spec.max_storage,
            storage_cost,
        )?;
    }
    let release0 = b.num_vars();
    for t in 0..t_len {
        b.add_variable(
            format!("{prefix}release_{t}"),
            0.0,
            data.release_cap[t],
            0.0,
        )?;
    }
    let diverted0 = b.num_vars();
    for (r, d) in spec.diverted.iter().enumerate() {
        for t in 0..t_len {
            b.add_variable(
                format!("{prefix}diverted_{}_{t}", d.river),
                0.0,
                data.diversion_cap[r][t],
                0.0,
            )?;
        }
    }
    let layout = BlockLayout {
        horizon: t_len,
        diverted_rivers: spec.diverted.len(),
        storage0,
        release0,
        diverted0,
    };
    let mut terms = Vec::with_capacity(3 + spec.diverted.len());
    for t in 0..t_len {
        terms.clear();
        terms.push((VarId(layout.storage(t + 1)), 1.0));
        terms.push((VarId(layout.storage(t)), -1.0));
        terms.push((VarId(layout.release(t)), 1.0));
        for r in 0..spec.diverted.len() {
            terms.push((VarId(layout.diverted(r, t)), -1.0));
        }
        b.add_row(&terms, Cmp::Eq, data.net_fixed(t))?;
    }
    Ok(layout)
}

/// The deterministic LP of one scenario, with what is needed to read back
/// a [`StorageTrajectory`].
#[derive(Debug, Clone)]
pub struct DeterministicLp {
    pub problem: LpProblem,
    pub layout: BlockLayout,
    pub(crate) data: StepData,
    diverted_names: Vec<String>,
    pub label: String,
}

pub fn build_deterministic_lp(
    spec: &ReservoirSpec,
    scenario: &Scenario,
) -> Result<DeterministicLp> {
    spec.validate()?;
    scenario.validate_for(spec)?;
    let data = StepData::new(spec, scenario);
    let mut b = LpBuilder::new();
    let layout = add_block(&mut b, spec, &data, "", 1.0)?;
    Ok(DeterministicLp {
        problem: b.build()?,
        layout,
        data,
        diverted_names: spec.diverted.iter().map(|d| d.river.clone()).collect(),
        label: scenario.label.clone(),
    })
}

/// Storage path and flows of one solved scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageTrajectory {
    /// `T + 1` storages (m³).
    pub storages: Vec<f64>,
    pub releases: Vec<f64>,
    pub diverted: BTreeMap<String, Vec<f64>>,
    pub inputs: Vec<f64>,
    pub outputs: Vec<f64>,
}

impl StorageTrajectory {
    pub fn horizon(&self) -> usize {
        self.releases.len()
    }

    /// Largest relative residual of `s_{t+1} = s_t − out_t + in_t`, scaled by
    /// the largest magnitude among the four terms (at least 1 m³).
    pub fn mass_balance_residual(&self) -> f64 {
        (0..self.horizon())
            .map(|t| {
                let (a, b) = (self.storages[t], self.storages[t + 1]);
                let (i, o) = (self.inputs[t], self.outputs[t]);
                let scale = a.abs().max(b.abs()).max(i.abs()).max(o.abs()).max(1.0);
                (b - a + o - i).abs() / scale
            })
            .fold(0.0, f64::max)
    }

    pub fn total_storage(&self) -> f64 {
        self.storages.iter().sum()
    }
}

pub fn extract_trajectory(
    lp: &DeterministicLp,
    solution: &LpSolution,
) -> Result<StorageTrajectory> {
    if solution.status != Status::Optimal {
        return Err(Error::NotOptimal(solution.status));
    }
    Ok(read_block(
        &lp.layout,
        &lp.data,
        &lp.diverted_names,
        &solution.primal,
    ))
}

pub(crate) fn read_block(
    layout: &BlockLayout,
    data: &StepData,
    diverted_names: &[String],
    x: &[f64],
) -> StorageTrajectory {
    let t_len = layout.horizon;
    let storages: Vec<f64> = (0..=t_len).map(|t| x[layout.storage(t)]).collect();
    let releases: Vec<f64> = (0..t_len).map(|t| x[layout.release(t)]).collect();
    let diverted: BTreeMap<String, Vec<f64>> = diverted_names
        .iter()
        .enumerate()
        .map(|(r, name)| {
            (
                name.clone(),
                (0..t_len).map(|t| x[layout.diverted(r, t)]).collect(),
            )
        })
        .collect();
    let inputs = (0..t_len)
        .map(|t| data.tributary[t] + diverted.values().map(|v| v[t]).sum::<f64>())
        .collect();
    let outputs = (0..t_len)
        .map(|t| data.fixed_out[t] + releases[t])
        .collect();
    StorageTrajectory {
        storages,
        releases,
        diverted,
        inputs,
        outputs,
    }
}

/// Outcome of solving one scenario.
#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioOutcome {
    Optimal(StorageTrajectory),
    Infeasible,
}

/// Solves the deterministic model of a single scenario.
pub trait ScenarioSolver: Sync + Send {
    fn solve_scenario(&self, spec: &ReservoirSpec, scenario: &Scenario) -> Result<ScenarioOutcome>;

    fn name(&self) -> &'static str;
}

/// Builds the LP and hands it to an [`LpSolver`].
#[derive(Debug, Clone, Default)]
pub struct LpScenarioSolver<S = DenseSimplex> {
    pub solver: S,
}

impl<S: LpSolver + Send> ScenarioSolver for LpScenarioSolver<S> {
    fn solve_scenario(&self, spec: &ReservoirSpec, scenario: &Scenario) -> Result<ScenarioOutcome> {
        let lp = build_deterministic_lp(spec, scenario)?;
        let sol = self.solver.solve(&lp.problem);
        match sol.status {
            Status::Optimal => Ok(ScenarioOutcome::Optimal(extract_trajectory(&lp, &sol)?)),
            Status::Infeasible => Ok(ScenarioOutcome::Infeasible),
            s => Err(Error::Solver(format!(
                "scenario {}: status {s:?}",
                scenario.label
            ))),
        }
    }

    fn name(&self) -> &'static str {
        "simplex"
    }
}

/// Exact solver exploiting the chain structure of the single-reservoir LP.
///
/// Eliminating releases and intakes leaves difference bounds
/// `lo_t ≤ s_{t+1} − s_t ≤ hi_t` plus box bounds on every `s_t`. Such a
/// system has a pointwise-least feasible point, which is the unique
/// minimiser of `Σ s_t`. One backward sweep (`s_t ≥ s_{t+1} − hi_t`) and
/// one forward sweep (`s_{t+1} ≥ s_t + lo_t`) compute it.
#[derive(Debug, Clone, Copy, Default)]
pub struct ChainSolver;

impl ChainSolver {
    pub(crate) fn solve_data(
        spec: &ReservoirSpec,
        data: &StepData,
        diverted_names: &[String],
    ) -> Option<StorageTrajectory> {
        let t_len = data.horizon();
        let hi: Vec<f64> = (0..t_len)
            .map(|t| data.net_fixed(t) + data.diversion_cap.iter().map(|c| c[t]).sum::<f64>())
            .collect();
        let lo: Vec<f64> = (0..t_len)
            .map(|t| data.net_fixed(t) - data.release_cap[t])
            .collect();
        let mut s = vec![spec.min_storage; t_len + 1];
        for t in (0..t_len).rev() {
            s[t] = s[t].max(s[t + 1] - hi[t]);
        }
        for t in 0..t_len {
            s[t + 1] = s[t + 1].max(s[t] + lo[t]);
        }
        let tol = 1e-9 * spec.max_storage.max(1.0);
        if s.iter().any(|&v| v > spec.max_storage + tol) {
            return None;
        }
        for v in &mut s {
            *v = v.min(spec.max_storage);
        }

        let mut releases = vec![0.0; t_len];
        let mut intakes = vec![vec![0.0; t_len]; data.diversion_cap.len()];
        for t in 0..t_len {
            // intake − release needed to move from s_t to s_{t+1}
            let mut need = s[t + 1] - s[t] - data.net_fixed(t);
            if need >= 0.0 {
                for (r, cap) in data.diversion_cap.iter().enumerate() {
                    let take = need.min(cap[t]);
                    intakes[r][t] = take;
                    need -= take;
                }
            } else {
                releases[t] = (-need).min(data.release_cap[t]);
            }
        }
        let diverted: BTreeMap<String, Vec<f64>> =
            diverted_names.iter().cloned().zip(intakes).collect();
        let inputs = (0..t_len)
            .map(|t| data.tributary[t] + diverted.values().map(|v| v[t]).sum::<f64>())
            .collect();
        let outputs = (0..t_len)
            .map(|t| data.fixed_out[t] + releases[t])
            .collect();
        Some(StorageTrajectory {
            storages: s,
            releases,
            diverted,
            inputs,
            outputs,
        })
    }
}

impl ScenarioSolver for ChainSolver {
    fn solve_scenario(&self, spec: &ReservoirSpec, scenario: &Scenario) -> Result<ScenarioOutcome> {
        spec.validate()?;
        scenario.validate_for(spec)?;
        let data = StepData::new(spec, scenario);
        let names: Vec<String> = spec.diverted.iter().map(|d| d.river.clone()).collect();
        Ok(match Self::solve_data(spec, &data, &names) {
            Some(tr) => ScenarioOutcome::Optimal(tr),
            None => ScenarioOutcome::Infeasible,
        })
    }

    fn name(&self) -> &'static str {
        "chain"
    }
}

/// Whether `scenario` can be operated within bounds when starting from
/// `initial` storage. The reachable storages form an interval at every step,
/// so one forward pass decides it.
pub fn feasible_from(spec: &ReservoirSpec, scenario: &Scenario, initial: f64) -> Result<bool> {
    spec.validate()?;
    scenario.validate_for(spec)?;
    let tol = 1e-9 * spec.max_storage.max(1.0);
    if initial < spec.min_storage - tol || initial > spec.max_storage + tol {
        return Ok(false);
    }
    let data = StepData::new(spec, scenario);
    let (mut a, mut b) = (initial, initial);
    for t in 0..data.horizon() {
        let net = data.net_fixed(t);
        let hi = net + data.diversion_cap.iter().map(|c| c[t]).sum::<f64>();
        let lo = net - data.release_cap[t];
        a = (a + lo).max(spec.min_storage);
        b = (b + hi).min(spec.max_storage);
        if a > b + tol {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Selects the per-scenario solver used by the decoupled paths.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    #[default]
    Simplex,
    Chain,
}

impl std::str::FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simplex" => Ok(Backend::Simplex),
            "chain" => Ok(Backend::Chain),
            _ => Err(Error::InvalidArgument(format!(
                "unknown solver backend '{s}'"
            ))),
        }
    }
}

impl Backend {
    pub fn solver(self) -> Box<dyn ScenarioSolver> {
        match self {
            Backend::Simplex => Box::new(LpScenarioSolver::<DenseSimplex>::default()),
            Backend::Chain => Box::new(ChainSolver),
        }
    }
}

/// Solves one scenario with the given backend.
pub fn solve_deterministic(
    spec: &ReservoirSpec,
    scenario: &Scenario,
    backend: Backend,
) -> Result<ScenarioOutcome> {
    backend.solver().solve_scenario(spec, scenario)
}
