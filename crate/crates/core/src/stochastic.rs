//! Scenario generation and the stochastic envelope model.
//!
//! The rule curve must dominate the optimal storage path of every scenario,
//! so it is the pointwise maximum (upper envelope) of the per-scenario
//! optima. The monolithic LP couples all scenario blocks through
//! `storage^s_t ≤ rule_t`; since each block has a unique least storage path,
//! solving the blocks separately and taking the maximum gives the same
//! optimum. The decoupled path is the default; the monolithic one is kept
//! for validation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::hydrology::{check_years, HydroYear, TimeGrid};
use crate::lp::{Cmp, LpBuilder, LpProblem, LpSolver, Status, VarId};
use crate::reservoir::{
    add_block, read_block, BlockLayout, ReservoirSpec, Scenario, ScenarioOutcome, StepData,
    StorageTrajectory,
};

pub const DEFAULT_SUPPORT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GenKind {
    /// Consecutive historical years.
    Merging,
    /// Every ordered k-tuple of historical years.
    Mixing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScenarioGenMethod {
    pub kind: GenKind,
    pub years_per_scenario: usize,
}

impl ScenarioGenMethod {
    pub fn merging(k: usize) -> Self {
        Self {
            kind: GenKind::Merging,
            years_per_scenario: k,
        }
    }

    pub fn mixing(k: usize) -> Self {
        Self {
            kind: GenKind::Mixing,
            years_per_scenario: k,
        }
    }
}

impl fmt::Display for ScenarioGenMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            GenKind::Merging => "merge",
            GenKind::Mixing => "mix",
        };
        write!(f, "{kind}(k={})", self.years_per_scenario)
    }
}

/// Lazily indexed scenario set. Mixing sets hold `Nᵏ` scenarios, which are
/// only materialised on request.
#[derive(Debug, Clone)]
pub struct ScenarioSet<'a> {
    years: &'a [HydroYear],
    method: ScenarioGenMethod,
    grid: TimeGrid,
    /// Merging: start index of each run of k consecutive years.
    starts: Vec<usize>,
    count: usize,
}

impl<'a> ScenarioSet<'a> {
    pub fn new(years: &'a [HydroYear], method: ScenarioGenMethod) -> Result<Self> {
        let k = method.years_per_scenario;
        if k == 0 {
            return Err(Error::InvalidArgument(
                "years per scenario must be ≥ 1".into(),
            ));
        }
        if years.is_empty() {
            return Err(Error::InsufficientYears("no historical years".into()));
        }
        let grid = check_years(years)?;
        let (starts, count) = match method.kind {
            GenKind::Merging => {
                if years.len() < k {
                    return Err(Error::InsufficientYears(format!(
                        "merging {k} years needs at least {k}, got {}",
                        years.len()
                    )));
                }
                let starts: Vec<usize> = (0..=years.len() - k)
                    .filter(|&i| {
                        (1..k).all(|j| years[i + j].start_year == years[i + j - 1].start_year + 1)
                    })
                    .collect();
                if starts.is_empty() {
                    return Err(Error::InsufficientYears(format!(
                        "no run of {k} consecutive years"
                    )));
                }
                let n = starts.len();
                (starts, n)
            }
            GenKind::Mixing => {
                let count = u32::try_from(k)
                    .ok()
                    .and_then(|k| years.len().checked_pow(k))
                    .ok_or_else(|| {
                        Error::InvalidArgument(format!("{}^{k} scenarios overflow", years.len()))
                    })?;
                (Vec::new(), count)
            }
        };
        Ok(Self {
            years,
            method,
            grid,
            starts,
            count,
        })
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn method(&self) -> ScenarioGenMethod {
        self.method
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn horizon(&self) -> usize {
        self.method.years_per_scenario * self.grid.steps_per_year()
    }

    /// Indices (into the historical years) composing scenario `i`.
    pub fn composition(&self, i: usize) -> Vec<usize> {
        assert!(i < self.count, "scenario {i} out of {}", self.count);
        let k = self.method.years_per_scenario;
        match self.method.kind {
            GenKind::Merging => (self.starts[i]..self.starts[i] + k).collect(),
            GenKind::Mixing => {
                let n = self.years.len();
                let mut digits = vec![0; k];
                let mut rest = i;
                for d in digits.iter_mut().rev() {
                    *d = rest % n;
                    rest /= n;
                }
                digits
            }
        }
    }

    pub fn label(&self, i: usize) -> String {
        self.composition(i)
            .iter()
            .map(|&y| self.years[y].label.as_str())
            .collect::<Vec<_>>()
            .join("+")
    }

    pub fn scenario(&self, i: usize) -> Scenario {
        let years: Vec<&HydroYear> = self
            .composition(i)
            .iter()
            .map(|&y| &self.years[y])
            .collect();
        Scenario::from_years(&years).expect("years checked on construction")
    }

    /// Steps `[start, start + len)` of scenario `i`, built without
    /// materialising the whole scenario.
    pub fn window(&self, i: usize, start: usize, len: usize) -> Result<Scenario> {
        let spy = self.grid.steps_per_year();
        if start + len > self.horizon() {
            return Err(Error::InvalidScenario(format!(
                "window {start}..{} exceeds horizon {}",
                start + len,
                self.horizon()
            )));
        }
        let comp = self.composition(i);
        let mut flows: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for river in self.years[comp[0]].flows.keys() {
            let v: Vec<f64> = (start..start + len)
                .map(|t| self.years[comp[t / spy]].flows[river][t % spy])
                .collect();
            flows.insert(river.clone(), v);
        }
        let labels: Vec<String> = comp.iter().map(|&y| self.years[y].label.clone()).collect();
        Ok(Scenario {
            grid: self.grid,
            start_step: start % spy,
            flows,
            label: labels.join("+"),
            years: labels,
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = Scenario> + '_ {
        (0..self.count).map(|i| self.scenario(i))
    }
}

/// Materialises all scenarios for `method`.
pub fn generate_scenarios(years: &[HydroYear], method: ScenarioGenMethod) -> Result<Vec<Scenario>> {
    Ok(ScenarioSet::new(years, method)?.iter().collect())
}

/// Rule curve of the stochastic model with the per-scenario paths behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeSolution {
    /// `T + 1` rule storages, aligned with the scenario storages.
    pub rule_storage: Vec<f64>,
    pub per_scenario: BTreeMap<usize, StorageTrajectory>,
    pub support_ids: BTreeSet<usize>,
    pub labels: Vec<String>,
    pub min_storage: f64,
}

impl EnvelopeSolution {
    pub fn objective(&self) -> f64 {
        self.rule_storage.iter().sum()
    }

    /// Largest relative violation of `rule ≥ storage^s` and the largest
    /// relative distance between `rule_t` and `max_s storage^s_t`.
    pub fn envelope_errors(&self) -> (f64, f64) {
        let mut dominance: f64 = 0.0;
        let mut tightness: f64 = 0.0;
        for (t, &r) in self.rule_storage.iter().enumerate() {
            let scale = r.abs().max(1.0);
            let mut best = f64::NEG_INFINITY;
            for tr in self.per_scenario.values() {
                let s = tr.storages[t];
                dominance = dominance.max((s - r) / scale);
                best = best.max(s);
            }
            tightness = tightness.max((r - best).abs() / scale);
        }
        (dominance, tightness)
    }
}

/// Pointwise maximum of storage paths, remembering which scenario attains it.
/// Ties go to the lowest scenario id so the result does not depend on the
/// order of accumulation.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Envelope {
    pub rule: Vec<f64>,
    pub argmax: Vec<usize>,
    pub infeasible: Vec<usize>,
    pub error: Option<(usize, String)>,
}

impl Envelope {
    pub fn empty() -> Self {
        Self {
            rule: Vec::new(),
            argmax: Vec::new(),
            infeasible: Vec::new(),
            error: None,
        }
    }

    pub fn add(&mut self, id: usize, storages: &[f64]) {
        if self.rule.is_empty() {
            self.rule = storages.to_vec();
            self.argmax = vec![id; storages.len()];
            return;
        }
        for (t, &s) in storages.iter().enumerate() {
            if s > self.rule[t] || (s == self.rule[t] && id < self.argmax[t]) {
                self.rule[t] = s;
                self.argmax[t] = id;
            }
        }
    }

    pub fn add_outcome(&mut self, id: usize, outcome: Result<ScenarioOutcome>) {
        match outcome {
            Ok(ScenarioOutcome::Optimal(tr)) => self.add(id, &tr.storages),
            Ok(ScenarioOutcome::Infeasible) => self.infeasible.push(id),
            Err(e) => {
                if self.error.as_ref().is_none_or(|(j, _)| id < *j) {
                    self.error = Some((id, e.to_string()));
                }
            }
        }
    }

    pub fn merge(mut self, other: Envelope) -> Envelope {
        if !other.rule.is_empty() {
            if self.rule.is_empty() {
                self.rule = other.rule;
                self.argmax = other.argmax;
            } else {
                for t in 0..self.rule.len() {
                    let (s, id) = (other.rule[t], other.argmax[t]);
                    if s > self.rule[t] || (s == self.rule[t] && id < self.argmax[t]) {
                        self.rule[t] = s;
                        self.argmax[t] = id;
                    }
                }
            }
        }
        self.infeasible.extend(other.infeasible);
        if let Some((j, e)) = other.error {
            if self.error.as_ref().is_none_or(|(i, _)| j < *i) {
                self.error = Some((j, e));
            }
        }
        self
    }

    /// Converts failures into errors; `label` names scenario ids.
    pub fn check(mut self, label: impl Fn(usize) -> String) -> Result<Self> {
        if let Some((_, e)) = self.error.take() {
            return Err(Error::Solver(e));
        }
        if !self.infeasible.is_empty() {
            self.infeasible.sort_unstable();
            let labels = self.infeasible.iter().map(|&i| label(i)).collect();
            return Err(Error::InfeasibleScenarios {
                ids: self.infeasible,
                labels,
            });
        }
        Ok(self)
    }
}

fn check_scenarios(spec: &ReservoirSpec, scenarios: &[Scenario]) -> Result<()> {
    spec.validate()?;
    let Some(first) = scenarios.first() else {
        return Err(Error::InvalidScenario("no scenarios".into()));
    };
    for s in scenarios {
        s.validate_for(spec)?;
        if s.horizon() != first.horizon() {
            return Err(Error::InvalidScenario(format!(
                "horizon {} of {} differs from {} of {}",
                s.horizon(),
                s.label,
                first.horizon(),
                first.label
            )));
        }
        if s.start_step != first.start_step {
            return Err(Error::InvalidScenario(format!(
                "scenario {} starts at step {}, {} at {}",
                s.label, s.start_step, first.label, first.start_step
            )));
        }
    }
    Ok(())
}

/// Solves every scenario independently and takes the upper envelope.
pub fn solve_decoupled(
    spec: &ReservoirSpec,
    scenarios: &[Scenario],
    exec: &Exec,
) -> Result<EnvelopeSolution> {
    check_scenarios(spec, scenarios)?;
    let solver = exec.solver();
    let outcomes = exec.install(|| {
        exec.map(scenarios.len(), |i| {
            solver.solve_scenario(spec, &scenarios[i])
        })
    })?;

    let mut env = Envelope::empty();
    let mut per_scenario = BTreeMap::new();
    for (i, outcome) in outcomes.into_iter().enumerate() {
        if let Ok(ScenarioOutcome::Optimal(tr)) = &outcome {
            per_scenario.insert(i, tr.clone());
        }
        env.add_outcome(i, outcome);
    }
    let env = env.check(|i| scenarios[i].label.clone())?;
    let mut sol = EnvelopeSolution {
        rule_storage: env.rule,
        per_scenario,
        support_ids: BTreeSet::new(),
        labels: scenarios.iter().map(|s| s.label.clone()).collect(),
        min_storage: spec.min_storage,
    };
    sol.support_ids = identify_support(&sol, DEFAULT_SUPPORT_TOLERANCE);
    Ok(sol)
}

/// The monolithic stochastic LP with its block layout.
#[derive(Debug, Clone)]
pub struct StochasticLp {
    pub problem: LpProblem,
    pub blocks: Vec<BlockLayout>,
    rule0: usize,
    data: Vec<StepData>,
    diverted_names: Vec<String>,
}

impl StochasticLp {
    pub fn rule(&self, t: usize) -> usize {
        self.rule0 + t
    }
}

pub fn build_stochastic_lp(spec: &ReservoirSpec, scenarios: &[Scenario]) -> Result<StochasticLp> {
    check_scenarios(spec, scenarios)?;
    let t_len = scenarios[0].horizon();
    let mut b = LpBuilder::new();
    let mut blocks = Vec::with_capacity(scenarios.len());
    let mut data = Vec::with_capacity(scenarios.len());
    for (s, sc) in scenarios.iter().enumerate() {
        let d = StepData::new(spec, sc);
        blocks.push(add_block(&mut b, spec, &d, &format!("s{s}_"), 0.0)?);
        data.push(d);
    }
    let rule0 = b.num_vars();
    for t in 0..=t_len {
        b.add_variable(format!("rule_storage_{t}"), 0.0, f64::INFINITY, 1.0)?;
    }
    for block in &blocks {
        for t in 0..=t_len {
            b.add_row(
                &[(VarId(block.storage(t)), 1.0), (VarId(rule0 + t), -1.0)],
                Cmp::Le,
                0.0,
            )?;
        }
    }
    Ok(StochasticLp {
        problem: b.build()?,
        blocks,
        rule0,
        data,
        diverted_names: spec.diverted.iter().map(|d| d.river.clone()).collect(),
    })
}

/// Solves the coupled LP in one go. On infeasibility the offending scenarios
/// are located by solving them one at a time with the same solver.
pub fn solve_monolithic(
    spec: &ReservoirSpec,
    scenarios: &[Scenario],
    solver: &dyn LpSolver,
) -> Result<EnvelopeSolution> {
    let lp = build_stochastic_lp(spec, scenarios)?;
    let sol = solver.solve(&lp.problem);
    match sol.status {
        Status::Optimal => {}
        Status::Infeasible => {
            let mut ids = Vec::new();
            for (i, sc) in scenarios.iter().enumerate() {
                let single = build_stochastic_lp(spec, std::slice::from_ref(sc))?;
                if solver.solve(&single.problem).status == Status::Infeasible {
                    ids.push(i);
                }
            }
            let labels = ids.iter().map(|&i| scenarios[i].label.clone()).collect();
            return Err(Error::InfeasibleScenarios { ids, labels });
        }
        s => return Err(Error::Solver(format!("monolithic solve ended with {s:?}"))),
    }
    let t_len = scenarios[0].horizon();
    let per_scenario = lp
        .blocks
        .iter()
        .zip(&lp.data)
        .enumerate()
        .map(|(i, (layout, d))| (i, read_block(layout, d, &lp.diverted_names, &sol.primal)))
        .collect();
    let mut out = EnvelopeSolution {
        rule_storage: (0..=t_len).map(|t| sol.primal[lp.rule(t)]).collect(),
        per_scenario,
        support_ids: BTreeSet::new(),
        labels: scenarios.iter().map(|s| s.label.clone()).collect(),
        min_storage: spec.min_storage,
    };
    out.support_ids = identify_support(&out, DEFAULT_SUPPORT_TOLERANCE);
    Ok(out)
}

/// Scenarios whose optimal path touches the envelope.
///
/// Only steps where the envelope lies above the storage floor count: at the
/// floor every scenario touches it trivially (the last step always does).
/// When the envelope never leaves the floor, every scenario is returned.
pub fn identify_support(sol: &EnvelopeSolution, tolerance: f64) -> BTreeSet<usize> {
    let binding: Vec<usize> = sol
        .rule_storage
        .iter()
        .enumerate()
        .filter(|(_, &r)| r - sol.min_storage > tolerance * r.abs().max(1.0))
        .map(|(t, _)| t)
        .collect();
    if binding.is_empty() {
        return sol.per_scenario.keys().copied().collect();
    }
    sol.per_scenario
        .iter()
        .filter(|(_, tr)| {
            binding
                .iter()
                .any(|&t| tr.storages[t] >= sol.rule_storage[t] * (1.0 - tolerance))
        })
        .map(|(&id, _)| id)
        .collect()
}
