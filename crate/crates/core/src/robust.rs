//! Robust model against confidence-interval lower bounds of the inflows.
//!
//! For every step of the year and every river the historical volumes give a
//! Student-t confidence interval for the mean. Its lower limit, clamped at
//! zero, forms a single worst-case year which is tiled over the horizon and
//! solved deterministically.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hydrology::{check_years, volumes_to_daily, write_discharge_csv, HydroYear, TimeGrid};
use crate::reservoir::{Backend, ReservoirSpec, Scenario, ScenarioOutcome, StorageTrajectory};

/// Confidence level of the inflow interval. Two-sided unless `one_sided`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceSpec {
    pub level: f64,
    #[serde(default)]
    pub one_sided: bool,
}

impl ConfidenceSpec {
    pub fn two_sided(level: f64) -> Result<Self> {
        let c = Self {
            level,
            one_sided: false,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "confidence level {} not in (0, 1)",
                self.level
            )));
        }
        Ok(())
    }

    /// Probability whose t quantile bounds the interval from below.
    pub fn quantile_probability(&self) -> f64 {
        if self.one_sided {
            self.level
        } else {
            1.0 - (1.0 - self.level) / 2.0
        }
    }

    pub fn critical_value(&self, dof: usize) -> f64 {
        t_quantile(self.quantile_probability(), dof as f64)
    }
}

/// Natural log of the gamma function for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn inc_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_cf(x, a, b) / a
    } else {
        1.0 - ln_front.exp() * beta_cf(1.0 - x, b, a) / b
    }
}

// Modified Lentz evaluation of the incomplete beta continued fraction.
fn beta_cf(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut c = 1.0;
    let mut d = 1.0 - (a + b) * x / (a + 1.0);
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let num = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
        d = 1.0 + num * d;
        d = if d.abs() < TINY { TINY } else { d };
        c = 1.0 + num / c;
        c = if c.abs() < TINY { TINY } else { c };
        d = 1.0 / d;
        h *= d * c;
        let num = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
        d = 1.0 + num * d;
        d = if d.abs() < TINY { TINY } else { d };
        c = 1.0 + num / c;
        c = if c.abs() < TINY { TINY } else { c };
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h
}

pub fn t_pdf(x: f64, dof: f64) -> f64 {
    let ln = ln_gamma((dof + 1.0) / 2.0)
        - ln_gamma(dof / 2.0)
        - 0.5 * (dof * std::f64::consts::PI).ln()
        - (dof + 1.0) / 2.0 * (1.0 + x * x / dof).ln();
    ln.exp()
}

/// `P(T > x)` for `x ≥ 0`.
fn t_upper_tail(x: f64, dof: f64) -> f64 {
    0.5 * inc_beta(dof / (dof + x * x), dof / 2.0, 0.5)
}

pub fn t_cdf(x: f64, dof: f64) -> f64 {
    if x >= 0.0 {
        1.0 - t_upper_tail(x, dof)
    } else {
        t_upper_tail(-x, dof)
    }
}

/// Standard normal quantile (Acklam's rational approximation, ~1e-9).
pub fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    if p < 0.02425 {
        tail((-2.0 * p.ln()).sqrt())
    } else if p > 1.0 - 0.02425 {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

/// Quantile of Student's t distribution with `dof` degrees of freedom.
///
/// Safeguarded Newton iteration on the upper tail, started from the normal
/// quantile.
pub fn t_quantile(p: f64, dof: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "probability {p} not in (0, 1)");
    assert!(dof > 0.0, "degrees of freedom {dof} must be positive");
    if p < 0.5 {
        return -t_quantile(1.0 - p, dof);
    }
    if p == 0.5 {
        return 0.0;
    }
    let q = 1.0 - p;
    let mut lo = 0.0;
    let mut hi = normal_quantile(p).max(1.0);
    while t_upper_tail(hi, dof) > q {
        lo = hi;
        hi *= 2.0;
    }
    let mut x = normal_quantile(p).clamp(lo, hi);
    for _ in 0..200 {
        let f = t_upper_tail(x, dof) - q;
        if f > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let step = f / t_pdf(x, dof);
        let mut next = x + step;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * x.abs().max(1.0) {
            return next;
        }
        x = next;
    }
    x
}

/// Per-step inflow statistics and the clamped lower confidence bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCaseYear {
    pub grid: TimeGrid,
    pub confidence: ConfidenceSpec,
    pub num_years: usize,
    pub critical_value: f64,
    pub mean: BTreeMap<String, Vec<f64>>,
    pub std_dev: BTreeMap<String, Vec<f64>>,
    pub lower_bound: BTreeMap<String, Vec<f64>>,
}

/// Lower confidence bounds of the mean inflow, per river and step of year.
pub fn ci_lower_bounds(years: &[HydroYear], confidence: ConfidenceSpec) -> Result<WorstCaseYear> {
    confidence.validate()?;
    let grid = check_years(years)?;
    let n = years.len();
    if n < 2 {
        return Err(Error::InsufficientYears(format!(
            "confidence intervals need at least 2 years, got {n}"
        )));
    }
    let c = confidence.critical_value(n - 1);
    let spy = grid.steps_per_year();
    let mut mean = BTreeMap::new();
    let mut std_dev = BTreeMap::new();
    let mut lower_bound = BTreeMap::new();
    for river in years[0].flows.keys() {
        let mut m = vec![0.0; spy];
        let mut sd = vec![0.0; spy];
        let mut lb = vec![0.0; spy];
        for k in 0..spy {
            let xs: Vec<f64> = years.iter().map(|y| y.flows[river][k]).collect();
            let mu = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1) as f64;
            m[k] = mu;
            sd[k] = var.sqrt();
            lb[k] = (mu - c * sd[k] / (n as f64).sqrt()).max(0.0);
        }
        mean.insert(river.clone(), m);
        std_dev.insert(river.clone(), sd);
        lower_bound.insert(river.clone(), lb);
    }
    Ok(WorstCaseYear {
        grid,
        confidence,
        num_years: n,
        critical_value: c,
        mean,
        std_dev,
        lower_bound,
    })
}

impl WorstCaseYear {
    pub fn label(&self) -> String {
        format!("ci-lower@{}", self.confidence.level)
    }

    /// The bound profile repeated over `len` steps from step-of-year `start`.
    pub fn window(&self, start: usize, len: usize) -> Scenario {
        let spy = self.grid.steps_per_year();
        Scenario {
            grid: self.grid,
            start_step: start % spy,
            flows: self
                .lower_bound
                .iter()
                .map(|(r, v)| {
                    (
                        r.clone(),
                        (start..start + len).map(|t| v[t % spy]).collect(),
                    )
                })
                .collect(),
            label: self.label(),
            years: Vec::new(),
        }
    }

    /// `years` whole copies of the bound profile.
    pub fn scenario(&self, years: usize) -> Scenario {
        self.window(0, years * self.grid.steps_per_year())
    }

    /// One row per step: step, month, then mean, std and bound per river.
    pub fn write_stats_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Solver(format!("writing worst-case CSV: {e}"));
        let mut header = vec!["step".to_string(), "month".to_string()];
        for r in self.lower_bound.keys() {
            header.push(format!("{r}_mean_m3"));
            header.push(format!("{r}_std_m3"));
            header.push(format!("{r}_lower_m3"));
        }
        w.write_record(&header).map_err(io)?;
        for k in 0..self.grid.steps_per_year() {
            let mut row = vec![k.to_string(), self.grid.step_month(k).to_string()];
            for r in self.lower_bound.keys() {
                row.push(self.mean[r][k].to_string());
                row.push(self.std_dev[r][k].to_string());
                row.push(self.lower_bound[r][k].to_string());
            }
            w.write_record(&row).map_err(io)?;
        }
        w.flush()
            .map_err(|e| Error::Solver(format!("writing worst-case CSV: {e}")))
    }
    /// `years` copies of the bound in the daily ingestion format, dated
    /// from `first_year`, so the worst case can be re-ingested or replayed.
    pub fn write_discharge_csv<W: Write>(
        &self,
        first_year: i32,
        years: usize,
        out: W,
    ) -> Result<()> {
        let scenario = self.scenario(years);
        let records: Vec<_> = scenario
            .flows
            .iter()
            .flat_map(|(river, v)| volumes_to_daily(river, v, &self.grid, first_year))
            .collect();
        write_discharge_csv(&records, out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustSolution {
    pub worst_case: WorstCaseYear,
    pub trajectory: StorageTrajectory,
}

impl RobustSolution {
    pub fn rule_storage(&self) -> &[f64] {
        &self.trajectory.storages
    }
}

/// Solves `scenario` and reports infeasibility as [`Error::InfeasibleLevel`].
pub(crate) fn solve_bound_scenario(
    spec: &ReservoirSpec,
    scenario: &Scenario,
    level: f64,
    backend: Backend,
) -> Result<StorageTrajectory> {
    match backend.solver().solve_scenario(spec, scenario)? {
        ScenarioOutcome::Optimal(tr) => Ok(tr),
        ScenarioOutcome::Infeasible => Err(Error::InfeasibleLevel { level }),
    }
}

/// Robust model over `horizon_years` copies of the worst-case year.
pub fn solve_robust(
    spec: &ReservoirSpec,
    years: &[HydroYear],
    confidence: ConfidenceSpec,
    horizon_years: usize,
    backend: Backend,
) -> Result<RobustSolution> {
    if horizon_years == 0 {
        return Err(Error::InvalidArgument(
            "robust horizon must be ≥ 1 year".into(),
        ));
    }
    let worst_case = ci_lower_bounds(years, confidence)?;
    let scenario = worst_case.scenario(horizon_years);
    let trajectory = solve_bound_scenario(spec, &scenario, confidence.level, backend)?;
    Ok(RobustSolution {
        worst_case,
        trajectory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        // dof 1 is Cauchy, dof 2 has q = (2p−1)·sqrt(2 / (1 − (2p−1)²))
        for p in [0.6, 0.9, 0.975, 0.999] {
            let cauchy = (std::f64::consts::PI * (p - 0.5)).tan();
            assert!((t_quantile(p, 1.0) - cauchy).abs() < 1e-9 * cauchy.max(1.0));
            let a = 2.0 * p - 1.0;
            let two = a * (2.0 / (1.0 - a * a)).sqrt();
            assert!((t_quantile(p, 2.0) - two).abs() < 1e-10 * two.max(1.0));
        }
    }

    #[test]
    fn known_values() {
        assert!((t_quantile(0.975, 10.0) - 2.228_138_851_986_273).abs() < 1e-9);
        assert!((t_quantile(0.995, 22.0) - 2.818_756_060_596_369).abs() < 1e-9);
        assert!((t_quantile(0.025, 10.0) + 2.228_138_851_986_273).abs() < 1e-9);
        assert!((normal_quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-8);
        assert!((ln_gamma(5.0) - 24f64.ln()).abs() < 1e-13);
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-13);
    }

    #[test]
    fn cdf_inverts_quantile() {
        for dof in [1.0, 3.0, 7.5, 40.0, 1000.0] {
            for p in [0.51, 0.8, 0.95, 0.9999] {
                assert!((t_cdf(t_quantile(p, dof), dof) - p).abs() < 1e-12);
            }
        }
    }

    fn years(values: &[[f64; 2]]) -> Vec<HydroYear> {
        values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let flows = [("a".to_string(), v.to_vec())].into_iter().collect();
                HydroYear::new(2000 + i as i32, TimeGrid::custom(2), flows).unwrap()
            })
            .collect()
    }

    #[test]
    fn lower_bounds_by_hand() {
        let ys = years(&[[1.0, 10.0], [3.0, 10.0], [5.0, 10.0]]);
        let conf = ConfidenceSpec::two_sided(0.95).unwrap();
        let wc = ci_lower_bounds(&ys, conf).unwrap();
        let c = t_quantile(0.975, 2.0);
        assert_eq!(wc.mean["a"], vec![3.0, 10.0]);
        assert_eq!(wc.std_dev["a"], vec![2.0, 0.0]);
        let lb0 = (3.0 - c * 2.0 / 3f64.sqrt()).max(0.0);
        assert_eq!(wc.lower_bound["a"], vec![lb0, 10.0]);
        assert_eq!(lb0, 0.0);
        let one = ci_lower_bounds(
            &ys,
            ConfidenceSpec {
                level: 0.6,
                one_sided: true,
            },
        )
        .unwrap();
        let c1 = t_quantile(0.6, 2.0);
        assert!((one.lower_bound["a"][0] - (3.0 - c1 * 2.0 / 3f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn rejects_single_year_and_bad_level() {
        let ys = years(&[[1.0, 2.0]]);
        assert!(matches!(
            ci_lower_bounds(&ys, ConfidenceSpec::two_sided(0.9).unwrap()),
            Err(Error::InsufficientYears(_))
        ));
        assert!(ConfidenceSpec::two_sided(1.0).is_err());
        assert!(ConfidenceSpec::two_sided(0.0).is_err());
    }

    #[test]
    fn tiling_and_infeasible_level() {
        let ys = years(&[[4.0, 0.0], [6.0, 2.0], [5.0, 1.0]]);
        let conf = ConfidenceSpec::two_sided(0.5).unwrap();
        let wc = ci_lower_bounds(&ys, conf).unwrap();
        let s = wc.window(1, 3);
        assert_eq!(s.start_step, 1);
        let lb = &wc.lower_bound["a"];
        assert_eq!(s.flows["a"], vec![lb[1], lb[0], lb[1]]);

        let spec = ReservoirSpec::constant(TimeGrid::custom(2), 0.0, 100.0)
            .with_demand(3.0, 0.0)
            .with_tributary("a");
        let sol = solve_robust(&spec, &ys, conf, 2, Backend::Simplex).unwrap();
        assert_eq!(sol.rule_storage().len(), 5);
        assert!(sol.trajectory.mass_balance_residual() < 1e-9);
        let tight = ReservoirSpec {
            max_storage: 1.0,
            ..spec
        };
        match solve_robust(&tight, &ys, conf, 2, Backend::Chain) {
            Err(Error::InfeasibleLevel { level }) => assert_eq!(level, 0.5),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn csv_has_a_row_per_step() {
        let ys = years(&[[4.0, 0.0], [6.0, 2.0]]);
        let wc = ci_lower_bounds(&ys, ConfidenceSpec::two_sided(0.9).unwrap()).unwrap();
        let mut buf = Vec::new();
        wc.write_stats_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("step,month,a_mean_m3,a_std_m3,a_lower_m3"));
    }

    #[test]
    fn export_reingests() {
        let grid = TimeGrid::weekly();
        let ys: Vec<HydroYear> = (0..3)
            .map(|i| {
                let v = (0..52).map(|k| 1000.0 * (k + i) as f64).collect();
                HydroYear::new(
                    2000 + i,
                    grid,
                    [("a".to_string(), v)].into_iter().collect(),
                )
                .unwrap()
            })
            .collect();
        let wc = ci_lower_bounds(&ys, ConfidenceSpec::two_sided(0.9).unwrap()).unwrap();
        let mut buf = Vec::new();
        wc.write_discharge_csv(2010, 2, &mut buf).unwrap();
        let back = crate::hydrology::read_discharge_csv(&buf[..], &grid).unwrap();
        assert_eq!(back.years.len(), 2);
        for (a, b) in back.years[1].flows["a"].iter().zip(&wc.lower_bound["a"]) {
            assert!((a - b).abs() < 1e-6 * b.max(1.0), "{a} vs {b}");
        }
    }
}
