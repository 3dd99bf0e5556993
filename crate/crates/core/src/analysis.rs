//! Post-processing of computed rule curves.
//!
//! * period statistics of the scenarios that define a stochastic envelope,
//! * picking the robust confidence level whose curve is nearest a stochastic
//!   one,
//! * side-by-side comparison of curves.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hydrology::TimeGrid;
use crate::reservoir::Scenario;
use crate::stochastic::EnvelopeSolution;

pub const DEFAULT_LEVELS: [f64; 6] = [0.95, 0.965, 0.975, 0.98, 0.985, 0.99];

/// Part of each scenario over which discharge is averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PeriodDefinition {
    FullYear,
    /// October to April.
    WetSeason,
    /// May to September.
    DrySeason,
    /// The contiguous k months with the least average discharge.
    DriestKMonths(usize),
}

impl PeriodDefinition {
    /// The six periods of the standard support report, in row order.
    pub const STANDARD: [PeriodDefinition; 6] = [
        PeriodDefinition::FullYear,
        PeriodDefinition::WetSeason,
        PeriodDefinition::DrySeason,
        PeriodDefinition::DriestKMonths(6),
        PeriodDefinition::DriestKMonths(3),
        PeriodDefinition::DriestKMonths(1),
    ];

    /// Short identifier used for CSV columns.
    pub fn key(&self) -> String {
        match self {
            PeriodDefinition::FullYear => "year".into(),
            PeriodDefinition::WetSeason => "wet_season".into(),
            PeriodDefinition::DrySeason => "dry_season".into(),
            PeriodDefinition::DriestKMonths(k) => format!("driest_{k}_months"),
        }
    }

    fn includes_month(&self, month: u32) -> bool {
        match self {
            PeriodDefinition::WetSeason => !(5..=9).contains(&month),
            PeriodDefinition::DrySeason => (5..=9).contains(&month),
            _ => true,
        }
    }
}

impl fmt::Display for PeriodDefinition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PeriodDefinition::FullYear => f.write_str("Year"),
            PeriodDefinition::WetSeason => f.write_str("Wet season"),
            PeriodDefinition::DrySeason => f.write_str("Dry season"),
            PeriodDefinition::DriestKMonths(1) => f.write_str("Driest month"),
            PeriodDefinition::DriestKMonths(3) => f.write_str("Driest three months"),
            PeriodDefinition::DriestKMonths(6) => f.write_str("Driest six months"),
            PeriodDefinition::DriestKMonths(k) => write!(f, "Driest {k} months"),
        }
    }
}

/// Volume and day count of every month the scenario touches, in order.
/// Months that no step maps to (coarse grids) are present with zero days.
pub(crate) fn month_totals(scenario: &Scenario) -> Vec<(f64, f64)> {
    let grid = scenario.grid;
    let spy = grid.steps_per_year();
    let instance = |t: usize| {
        let abs = scenario.start_step + t;
        let month = grid.step_month(abs % spy) as usize;
        let pos = (month + 12 - grid.year_start_month as usize) % 12;
        (abs / spy) * 12 + pos
    };
    let t_len = scenario.horizon();
    if t_len == 0 {
        return Vec::new();
    }
    let first = instance(0);
    let mut out = vec![(0.0, 0.0); instance(t_len - 1) - first + 1];
    for t in 0..t_len {
        let slot = &mut out[instance(t) - first];
        slot.0 += scenario.total_inflow(t);
        slot.1 += grid.step_days(scenario.step_of_year(t)) as f64;
    }
    out
}

/// Average discharge over `period` in 10⁶ m³/day, summed over all rivers.
pub fn period_average(scenario: &Scenario, period: PeriodDefinition) -> Result<f64> {
    let grid = scenario.grid;
    match period {
        PeriodDefinition::DriestKMonths(k) => {
            if k == 0 {
                return Err(Error::InvalidArgument(
                    "driest period needs k ≥ 1 months".into(),
                ));
            }
            let months = month_totals(scenario);
            if months.len() < k {
                return Err(Error::InvalidArgument(format!(
                    "scenario {} spans {} months, fewer than {k}",
                    scenario.label,
                    months.len()
                )));
            }
            months
                .windows(k)
                .filter_map(|w| {
                    let days: f64 = w.iter().map(|m| m.1).sum();
                    (days > 0.0).then(|| w.iter().map(|m| m.0).sum::<f64>() / days / 1e6)
                })
                .min_by(f64::total_cmp)
                .ok_or_else(|| {
                    Error::InvalidArgument(format!(
                        "grid {grid} has no step inside any {k}-month window"
                    ))
                })
        }
        _ => {
            let (mut vol, mut days) = (0.0, 0.0);
            for t in 0..scenario.horizon() {
                let soy = scenario.step_of_year(t);
                if period.includes_month(grid.step_month(soy)) {
                    vol += scenario.total_inflow(t);
                    days += grid.step_days(soy) as f64;
                }
            }
            if days == 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "no step of {} falls in period '{period}'",
                    scenario.label
                )));
            }
            Ok(vol / days / 1e6)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub id: usize,
    pub label: String,
    pub is_support: bool,
    /// One entry per period, 10⁶ m³/day.
    pub averages: Vec<f64>,
    /// One entry per period, 1 = wettest.
    pub ranks: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub period: PeriodDefinition,
    pub support_mean_rank: Option<f64>,
    pub nonsupport_mean_rank: Option<f64>,
    pub support_mean_discharge: Option<f64>,
    pub nonsupport_mean_discharge: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportReport {
    pub periods: Vec<PeriodDefinition>,
    pub rows: Vec<ScenarioRow>,
    pub summary: Vec<GroupSummary>,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (n, s) = xs.fold((0usize, 0.0), |(n, s), x| (n + 1, s + x));
    (n > 0).then(|| s / n as f64)
}

/// Period statistics of every scenario, split by envelope support.
pub fn support_statistics(
    sol: &EnvelopeSolution,
    scenarios: &[Scenario],
    periods: &[PeriodDefinition],
) -> Result<SupportReport> {
    support_report(&sol.support_ids, scenarios, periods)
}

/// As [`support_statistics`] with an explicit support set.
pub fn support_report(
    support: &BTreeSet<usize>,
    scenarios: &[Scenario],
    periods: &[PeriodDefinition],
) -> Result<SupportReport> {
    let mut rows = Vec::with_capacity(scenarios.len());
    for (id, s) in scenarios.iter().enumerate() {
        let averages = periods
            .iter()
            .map(|&p| period_average(s, p))
            .collect::<Result<Vec<_>>>()?;
        rows.push(ScenarioRow {
            id,
            label: s.label.clone(),
            is_support: support.contains(&id),
            averages,
            ranks: vec![0; periods.len()],
        });
    }
    for p in 0..periods.len() {
        let mut order: Vec<usize> = (0..rows.len()).collect();
        order.sort_by(|&a, &b| {
            rows[b].averages[p]
                .total_cmp(&rows[a].averages[p])
                .then_with(|| rows[a].label.cmp(&rows[b].label))
                .then(a.cmp(&b))
        });
        for (rank, i) in order.into_iter().enumerate() {
            rows[i].ranks[p] = rank + 1;
        }
    }
    let summary = periods
        .iter()
        .enumerate()
        .map(|(p, &period)| {
            let group = |sup: bool| rows.iter().filter(move |r| r.is_support == sup);
            GroupSummary {
                period,
                support_mean_rank: mean(group(true).map(|r| r.ranks[p] as f64)),
                nonsupport_mean_rank: mean(group(false).map(|r| r.ranks[p] as f64)),
                support_mean_discharge: mean(group(true).map(|r| r.averages[p])),
                nonsupport_mean_discharge: mean(group(false).map(|r| r.averages[p])),
            }
        })
        .collect();
    Ok(SupportReport {
        periods: periods.to_vec(),
        rows,
        summary,
    })
}

fn opt(x: Option<f64>, prec: usize) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{v:.prec$}"))
}

impl SupportReport {
    /// One row per scenario with the average and rank for every period.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::Config(format!("writing support report: {e}"));
        let mut header = vec!["id".to_string(), "label".into(), "support".into()];
        for p in &self.periods {
            header.push(format!("{}_mean_1e6m3_per_day", p.key()));
            header.push(format!("{}_rank", p.key()));
        }
        w.write_record(&header).map_err(err)?;
        for r in &self.rows {
            let mut rec = vec![r.id.to_string(), r.label.clone(), r.is_support.to_string()];
            for (a, k) in r.averages.iter().zip(&r.ranks) {
                rec.push(a.to_string());
                rec.push(k.to_string());
            }
            w.write_record(&rec).map_err(err)?;
        }
        w.flush()
            .map_err(|e| Error::Config(format!("writing support report: {e}")))
    }

    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::Config(format!("writing support summary: {e}"));
        w.write_record([
            "period",
            "support_mean_rank",
            "nonsupport_mean_rank",
            "support_mean_1e6m3_per_day",
            "nonsupport_mean_1e6m3_per_day",
        ])
        .map_err(err)?;
        let cell = |x: Option<f64>| x.map_or_else(String::new, |v| v.to_string());
        for g in &self.summary {
            w.write_record([
                g.period.to_string(),
                cell(g.support_mean_rank),
                cell(g.nonsupport_mean_rank),
                cell(g.support_mean_discharge),
                cell(g.nonsupport_mean_discharge),
            ])
            .map_err(err)?;
        }
        w.flush()
            .map_err(|e| Error::Config(format!("writing support summary: {e}")))
    }

    /// Aligned text table of the group means.
    pub fn text_table(&self) -> String {
        let support = self.rows.iter().filter(|r| r.is_support).count();
        let head = [
            "Period".to_string(),
            format!("Rank support ({support})"),
            format!("Rank other ({})", self.rows.len() - support),
            "Q support".to_string(),
            "Q other".to_string(),
        ];
        let body: Vec<[String; 5]> = self
            .summary
            .iter()
            .map(|g| {
                [
                    g.period.to_string(),
                    opt(g.support_mean_rank, 3),
                    opt(g.nonsupport_mean_rank, 3),
                    opt(g.support_mean_discharge, 3),
                    opt(g.nonsupport_mean_discharge, 3),
                ]
            })
            .collect();
        let mut width = head.clone().map(|h| h.chars().count());
        for row in &body {
            for (w, c) in width.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let mut out = String::new();
        for row in std::iter::once(&head).chain(&body) {
            let _ = write!(out, "{:<w$}", row[0], w = width[0]);
            for (c, w) in row.iter().zip(&width).skip(1) {
                let _ = write!(out, "  {c:>w$}");
            }
            out.push('\n');
        }
        out.push_str("Q in 10^6 m3/day; rank 1 = wettest\n");
        out
    }
}

/// A curve with a display label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledCurve {
    pub label: String,
    pub grid: TimeGrid,
    pub values: Vec<f64>,
}

impl LabeledCurve {
    pub fn new(label: impl Into<String>, grid: TimeGrid, values: Vec<f64>) -> Self {
        Self {
            label: label.into(),
            grid,
            values,
        }
    }

    pub fn from_curve(label: impl Into<String>, curve: &crate::mpc::RuleCurve) -> Self {
        Self::new(label, curve.grid, curve.values.clone())
    }

    fn check_against(&self, other: &LabeledCurve) -> Result<()> {
        self.grid.ensure_same(&other.grid)?;
        if self.values.len() != other.values.len() {
            return Err(Error::GridMismatch(format!(
                "{} has {} steps, {} has {}",
                self.label,
                self.values.len(),
                other.label,
                other.values.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelMatch {
    pub level: f64,
    pub distance: f64,
    /// `(level, L¹ distance)` for every candidate, by increasing level.
    pub distances: Vec<(f64, f64)>,
}

/// Level whose robust curve is nearest (L¹) the stochastic curve. Ties go
/// to the lower level.
pub fn match_confidence_level(
    stochastic: &LabeledCurve,
    robust: &[(f64, LabeledCurve)],
) -> Result<LevelMatch> {
    if robust.is_empty() {
        return Err(Error::InvalidArgument(
            "no robust curves to match against".into(),
        ));
    }
    let mut distances = Vec::with_capacity(robust.len());
    for (level, curve) in robust {
        stochastic.check_against(curve)?;
        let d: f64 = stochastic
            .values
            .iter()
            .zip(&curve.values)
            .map(|(a, b)| (a - b).abs())
            .sum();
        distances.push((*level, d));
    }
    distances.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (level, distance) = distances
        .iter()
        .copied()
        .reduce(|best, c| if c.1 < best.1 { c } else { best })
        .expect("non-empty");
    Ok(LevelMatch {
        level,
        distance,
        distances,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSummary {
    pub a: String,
    pub b: String,
    /// `max_t (a_t − b_t)`.
    pub max_gap: f64,
    /// `min_t (a_t − b_t)`.
    pub min_gap: f64,
    pub steps_a_above: usize,
    pub steps_a_below: usize,
}

impl PairSummary {
    pub fn verdict(&self) -> &'static str {
        match (self.steps_a_above, self.steps_a_below) {
            (0, 0) => "identical",
            (_, 0) => "a above b throughout",
            (0, _) => "a below b throughout",
            _ => "curves cross",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub grid: TimeGrid,
    pub curves: Vec<LabeledCurve>,
    pub pairs: Vec<PairSummary>,
}

/// Compares every ordered pair of curves step by step.
pub fn compare_curves(curves: &[LabeledCurve]) -> Result<Comparison> {
    let Some(first) = curves.first() else {
        return Err(Error::InvalidArgument("no curves to compare".into()));
    };
    for c in curves {
        first.check_against(c)?;
    }
    let mut pairs = Vec::new();
    for (i, a) in curves.iter().enumerate() {
        for b in curves.iter().skip(i + 1) {
            let gaps: Vec<f64> = a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect();
            pairs.push(PairSummary {
                a: a.label.clone(),
                b: b.label.clone(),
                max_gap: gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                min_gap: gaps.iter().copied().fold(f64::INFINITY, f64::min),
                steps_a_above: gaps.iter().filter(|&&g| g > 0.0).count(),
                steps_a_below: gaps.iter().filter(|&&g| g < 0.0).count(),
            });
        }
    }
    Ok(Comparison {
        grid: first.grid,
        curves: curves.to_vec(),
        pairs,
    })
}

impl Comparison {
    /// Plot data: one row per step with every curve's value. With a
    /// reference curve, a `<label>_below_<reference>` flag is added per curve.
    pub fn write_steps_csv<W: Write>(&self, reference: Option<usize>, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::Config(format!("writing comparison: {e}"));
        let mut header = vec!["step".to_string(), "month".into()];
        header.extend(self.curves.iter().map(|c| c.label.clone()));
        let others: Vec<usize> = match reference {
            Some(r) => (0..self.curves.len()).filter(|&i| i != r).collect(),
            None => Vec::new(),
        };
        if let Some(r) = reference {
            for &i in &others {
                header.push(format!(
                    "{}_below_{}",
                    self.curves[i].label, self.curves[r].label
                ));
            }
        }
        w.write_record(&header).map_err(err)?;
        let n = self.curves[0].values.len();
        for t in 0..n {
            let mut rec = vec![t.to_string(), self.grid.step_month(t).to_string()];
            rec.extend(self.curves.iter().map(|c| c.values[t].to_string()));
            if let Some(r) = reference {
                let rv = self.curves[r].values[t];
                for &i in &others {
                    rec.push(u8::from(self.curves[i].values[t] < rv).to_string());
                }
            }
            w.write_record(&rec).map_err(err)?;
        }
        w.flush()
            .map_err(|e| Error::Config(format!("writing comparison: {e}")))
    }

    pub fn write_pairs_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::Config(format!("writing comparison: {e}"));
        w.write_record([
            "a",
            "b",
            "max_gap_m3",
            "min_gap_m3",
            "steps_a_above",
            "steps_a_below",
            "verdict",
        ])
        .map_err(err)?;
        for p in &self.pairs {
            w.write_record([
                p.a.clone(),
                p.b.clone(),
                p.max_gap.to_string(),
                p.min_gap.to_string(),
                p.steps_a_above.to_string(),
                p.steps_a_below.to_string(),
                p.verdict().to_string(),
            ])
            .map_err(err)?;
        }
        w.flush()
            .map_err(|e| Error::Config(format!("writing comparison: {e}")))
    }

    pub fn text_table(&self) -> String {
        let mut out = String::new();
        let wa = self
            .pairs
            .iter()
            .map(|p| p.a.len())
            .max()
            .unwrap_or(1)
            .max(1);
        let wb = self
            .pairs
            .iter()
            .map(|p| p.b.len())
            .max()
            .unwrap_or(1)
            .max(1);
        for p in &self.pairs {
            let _ = writeln!(
                out,
                "{:<wa$}  vs  {:<wb$}  max gap {:>14.1} m3  above {:>3}  below {:>3}  {}",
                p.a,
                p.b,
                p.max_gap,
                p.steps_a_above,
                p.steps_a_below,
                p.verdict()
            );
        }
        out
    }
}
