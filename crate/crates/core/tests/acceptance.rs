//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed. Criterion numbers given as arguments
//! restrict the run, e.g. `cargo test --test acceptance -- 6 7`.

#![allow(clippy::needless_range_loop)]

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{random_lp, toy_spec, toy_years, vertex_enumeration, Oracle};
use rulecurve_core::analysis::{support_statistics, PeriodDefinition};
use rulecurve_core::lp::{DenseSimplex, LpSolver};
use rulecurve_core::mpc::{check_continuity, run_mpc, solve_direct};
use rulecurve_core::reservoir::{eupen, solve_deterministic, Backend, ScenarioOutcome};
use rulecurve_core::robust::{solve_robust, t_quantile};
use rulecurve_core::stochastic::{
    generate_scenarios, identify_support, solve_decoupled, solve_monolithic, ScenarioSet,
    DEFAULT_SUPPORT_TOLERANCE,
};
use rulecurve_core::synth::{synthetic_years, Preset, SynthConfig};
use rulecurve_core::{
    ConfidenceSpec, Error, Exec, GenKind, HydroYear, MpcConfig, MpcModel, ReservoirSpec, Scenario,
    ScenarioGenMethod, TimeGrid,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn weekly_years(preset: Preset, seed: u64, years: usize) -> Vec<HydroYear> {
    let cfg = SynthConfig {
        seed,
        years,
        first_year: 1990,
        preset,
    };
    synthetic_years(&cfg, &TimeGrid::weekly()).expect("synthetic data")
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn scenario_counts() -> Outcome {
    let years = weekly_years(Preset::Default, 1, 23);
    let t0 = Instant::now();
    let merged =
        generate_scenarios(&years, ScenarioGenMethod::merging(2)).map_err(|e| e.to_string())?;
    let mixed =
        ScenarioSet::new(&years, ScenarioGenMethod::mixing(3)).map_err(|e| e.to_string())?;
    let last = mixed.scenario(mixed.len() - 1);
    let elapsed = t0.elapsed();
    ensure(merged.len() == 22, || {
        format!("merging gave {}", merged.len())
    })?;
    ensure(mixed.len() == 12_167, || {
        format!("mixing gave {}", mixed.len())
    })?;
    ensure(last.label == "2012+2012+2012", || {
        format!("last mix is {}", last.label)
    })?;
    ensure(elapsed < Duration::from_secs(1), || {
        format!("took {:.3} s", secs(elapsed))
    })?;
    Ok(format!("22 merged, 12167 mixed in {:.3} s", secs(elapsed)))
}

fn lp_vs_enumeration() -> Outcome {
    let t0 = Instant::now();
    let solver = DenseSimplex::default();
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let n = 200;
    for seed in 0..n {
        let p = random_lp(seed);
        let sol = solver.solve(&p);
        let oracle = vertex_enumeration(&p);
        ensure(sol.status == oracle.status(), || {
            format!(
                "seed {seed}: simplex {:?}, enumeration {oracle:?}",
                sol.status
            )
        })?;
        if let Oracle::Optimal(v) = oracle {
            ensure(
                (sol.objective_value - v).abs() <= 1e-7 * (1.0 + v.abs()),
                || format!("seed {seed}: {} vs {v}", sol.objective_value),
            )?;
        }
        *counts.entry(format!("{:?}", sol.status)).or_default() += 1;
    }
    let elapsed = t0.elapsed();
    ensure(elapsed < Duration::from_secs(10), || {
        format!("took {:.2} s", secs(elapsed))
    })?;
    ensure(counts.get("Optimal").copied().unwrap_or(0) >= 50, || {
        format!("{counts:?}")
    })?;
    Ok(format!("{n} LPs {counts:?} in {:.2} s", secs(elapsed)))
}

fn envelope_vs_monolithic() -> Outcome {
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for seed in 0..40u64 {
        let spy = 3 + (seed % 4) as usize;
        let spec = toy_spec(spy);
        let years = toy_years(spy, 3, seed);
        let method = if seed % 2 == 0 {
            ScenarioGenMethod::merging(2)
        } else {
            ScenarioGenMethod::mixing(2)
        };
        let sc = generate_scenarios(&years, method).unwrap();
        let dec = solve_decoupled(&spec, &sc, &Exec::sequential(Backend::Simplex));
        let mono = solve_monolithic(&spec, &sc, &DenseSimplex::default());
        let (dec, mono) = match (dec, mono) {
            (Ok(d), Ok(m)) => (d, m),
            (
                Err(Error::InfeasibleScenarios { ids: a, .. }),
                Err(Error::InfeasibleScenarios { ids: b, .. }),
            ) => {
                ensure(a == b, || {
                    format!("seed {seed}: infeasible sets {a:?} vs {b:?}")
                })?;
                continue;
            }
            (d, m) => return Err(format!("seed {seed}: {d:?} / {m:?}")),
        };
        // envelope of independent per-scenario solves
        let mut env = vec![f64::NEG_INFINITY; dec.rule_storage.len()];
        for s in &sc {
            match solve_deterministic(&spec, s, Backend::Simplex).map_err(|e| e.to_string())? {
                ScenarioOutcome::Optimal(tr) => {
                    for (e, v) in env.iter_mut().zip(&tr.storages) {
                        *e = e.max(*v);
                    }
                }
                ScenarioOutcome::Infeasible => return Err(format!("seed {seed}: {}", s.label)),
            }
        }
        for t in 0..env.len() {
            worst = worst
                .max((env[t] - dec.rule_storage[t]).abs())
                .max((mono.rule_storage[t] - dec.rule_storage[t]).abs());
        }
        worst = worst.max((dec.objective() - mono.objective()).abs());
        checked += 1;
    }
    ensure(worst <= 1e-6, || format!("max deviation {worst:e}"))?;
    ensure(checked >= 20, || {
        format!("only {checked} feasible fixtures")
    })?;
    Ok(format!("{checked} fixtures, max deviation {worst:.2e}"))
}

fn mass_balance() -> Outcome {
    let grid = TimeGrid::weekly();
    let spec = eupen(&grid);
    let years = weekly_years(Preset::Default, 1, 23);
    let exec = Exec::default();
    let mut worst: f64 = 0.0;
    let mut n = 0;
    for backend in [Backend::Simplex, Backend::Chain] {
        let one = Scenario::from_years(&[&years[0], &years[1]]).unwrap();
        match solve_deterministic(&spec, &one, backend).map_err(|e| e.to_string())? {
            ScenarioOutcome::Optimal(tr) => {
                worst = worst.max(tr.mass_balance_residual());
                n += 1;
            }
            ScenarioOutcome::Infeasible => return Err("deterministic scenario infeasible".into()),
        }
        let exec = Exec { backend, ..exec };
        let sc = generate_scenarios(&years, ScenarioGenMethod::merging(2)).unwrap();
        let sol = solve_decoupled(&spec, &sc, &exec).map_err(|e| e.to_string())?;
        for tr in sol.per_scenario.values() {
            worst = worst.max(tr.mass_balance_residual());
            n += 1;
        }
        let conf = ConfidenceSpec::two_sided(0.95).unwrap();
        let rob = solve_robust(&spec, &years, conf, 2, backend).map_err(|e| e.to_string())?;
        worst = worst.max(rob.trajectory.mass_balance_residual());
        n += 1;
    }
    let toy = toy_spec(4);
    let ty = toy_years(4, 3, 5);
    let sc = generate_scenarios(&ty, ScenarioGenMethod::mixing(2)).unwrap();
    if let Ok(sol) = solve_monolithic(&toy, &sc, &DenseSimplex::default()) {
        for tr in sol.per_scenario.values() {
            worst = worst.max(tr.mass_balance_residual());
            n += 1;
        }
    }
    ensure(worst < 1e-6, || format!("residual {worst:e}"))?;
    Ok(format!("{n} trajectories, max residual {worst:.2e}"))
}

fn robust_levels() -> Outcome {
    let grid = TimeGrid::weekly();
    let spec = eupen(&grid);
    let generous = weekly_years(Preset::Generous, 1, 23);
    let mut peaks = Vec::new();
    let mut prev: Option<Vec<f64>> = None;
    for level in [0.95, 0.965, 0.98, 0.985] {
        let conf = ConfidenceSpec::two_sided(level).unwrap();
        let sol = solve_robust(&spec, &generous, conf, 2, Backend::Simplex)
            .map_err(|e| format!("generous at {level}: {e}"))?;
        let curve = sol.rule_storage()[..52].to_vec();
        let total: f64 = curve.iter().sum();
        if let Some(p) = &prev {
            let ptotal: f64 = p.iter().sum();
            ensure(curve.iter().zip(p).all(|(a, b)| *a >= b - 1e-6), || {
                format!("curve at {level} dips below the previous level")
            })?;
            ensure(total > ptotal + 1.0, || {
                format!("curve at {level} not above previous")
            })?;
        }
        peaks.push(curve.iter().cloned().fold(0.0, f64::max));
        prev = Some(curve);
    }
    let marginal = weekly_years(Preset::Marginal, 1, 23);
    let conf = ConfidenceSpec::two_sided(0.95).unwrap();
    solve_robust(&spec, &marginal, conf, 2, Backend::Simplex)
        .map_err(|e| format!("marginal at 0.95: {e}"))?;
    let conf = ConfidenceSpec::two_sided(0.99).unwrap();
    match solve_robust(&spec, &marginal, conf, 2, Backend::Simplex) {
        Err(Error::InfeasibleLevel { level: 0.99 }) => {}
        other => return Err(format!("marginal at 0.99: {:?}", other.map(|_| ()))),
    }
    let hm3: Vec<String> = peaks.iter().map(|p| format!("{:.3}", p / 1e6)).collect();
    Ok(format!(
        "peaks {} hm3; marginal 0.99 infeasible",
        hm3.join(" < ")
    ))
}

/// Integrates the t density after `x = √ν tan θ`, which turns it
/// into `cos^(ν−1) θ` on (−π/2, π/2).
fn t_cdf_by_quadrature(x: f64, dof: f64) -> f64 {
    let f = |th: f64| th.cos().max(0.0).powf(dof - 1.0);
    let h = std::f64::consts::FRAC_PI_2;
    let total = adaptive_simpson(&f, -h, h, 1e-14, 50);
    let part = adaptive_simpson(&f, -h, (x / dof.sqrt()).atan(), 1e-14, 50);
    part / total
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
    }
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (l, r) = (simpson(f, a, m), simpson(f, m, b));
        if depth == 0 || (l + r - whole).abs() <= 15.0 * tol {
            l + r + (l + r - whole) / 15.0
        } else {
            rec(f, a, m, l, tol / 2.0, depth - 1) + rec(f, m, b, r, tol / 2.0, depth - 1)
        }
    }
    rec(f, a, b, simpson(f, a, b), tol, depth)
}

fn t_quantiles() -> Outcome {
    let mut worst: f64 = 0.0;
    for p in [0.9, 0.95, 0.975, 0.995] {
        for dof in [1.0, 2.0, 5.0, 10.0, 22.0, 100.0] {
            let (mut lo, mut hi) = (0.0, 200.0);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if t_cdf_by_quadrature(mid, dof) < p {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let oracle = 0.5 * (lo + hi);
            let got = t_quantile(p, dof);
            let err = (got - oracle).abs();
            worst = worst.max(err);
            ensure(err <= 1e-6, || {
                format!("p={p} dof={dof}: {got} vs {oracle}")
            })?;
        }
    }
    Ok(format!("24 quantiles, max error {worst:.2e}"))
}

fn mpc_stationarity() -> Outcome {
    let grid = TimeGrid::weekly();
    let spec = eupen(&grid);
    let years = weekly_years(Preset::Stationary, 1, 5);
    let exec = Exec::default();
    let mut notes = Vec::new();
    for model in [
        MpcModel::Stochastic {
            generation: GenKind::Merging,
        },
        MpcModel::Stochastic {
            generation: GenKind::Mixing,
        },
        MpcModel::Robust {
            confidence: ConfidenceSpec::two_sided(0.95).unwrap(),
        },
    ] {
        let run = run_mpc(&spec, &years, &MpcConfig::new(model), &exec, &|_| {})
            .map_err(|e| format!("{model}: {e}"))?;
        let direct = solve_direct(&spec, &years, model, 2, &exec).map_err(|e| e.to_string())?;
        let mut rel: f64 = 0.0;
        for (a, b) in run.curve.values.iter().zip(&direct.rule_storage) {
            rel = rel.max((a - b).abs() / b.abs().max(1.0));
        }
        ensure(rel <= 1e-6, || format!("{model}: relative gap {rel:e}"))?;
        let c = check_continuity(&run.curve).map_err(|e| e.to_string())?;
        let max = run.curve.values.iter().cloned().fold(0.0, f64::max);
        ensure(c.wrap_jump < 1e-6 * max, || {
            format!("{model}: wrap jump {}", c.wrap_jump)
        })?;
        notes.push(format!("{model} gap {rel:.1e}"));
    }
    Ok(notes.join(", "))
}

fn support_fixture() -> Outcome {
    let grid = TimeGrid::monthly();
    let spec = ReservoirSpec::constant(grid, 0.0, 100.0)
        .with_demand(10.0, 0.0)
        .with_tributary("a");
    let profile = |dry: &[(usize, f64)]| {
        let mut v = vec![20.0; 12];
        for &(m, q) in dry {
            v[m] = q;
        }
        v
    };
    let flows = [
        profile(&[]),
        profile(&[(5, 0.0), (6, 0.0), (7, 0.0)]),
        profile(&[]),
        profile(&[(5, 2.0), (6, 2.0)]),
        profile(&[(5, 0.0), (6, 0.0), (7, 0.0)]),
    ];
    let years: Vec<HydroYear> = flows
        .iter()
        .enumerate()
        .map(|(i, v)| {
            HydroYear::new(
                2000 + i as i32,
                grid,
                BTreeMap::from([("a".to_string(), v.clone())]),
            )
            .unwrap()
        })
        .collect();
    let sc = generate_scenarios(&years, ScenarioGenMethod::merging(1)).unwrap();
    let sol = solve_decoupled(&spec, &sc, &Exec::sequential(Backend::Simplex))
        .map_err(|e| e.to_string())?;
    let expected: BTreeSet<usize> = [1, 4].into();
    ensure(sol.support_ids == expected, || {
        format!("support {:?}", sol.support_ids)
    })?;
    ensure(
        identify_support(&sol, DEFAULT_SUPPORT_TOLERANCE) == expected,
        || "recompute".into(),
    )?;
    let want_rule = [0., 0., 0., 10., 20., 30., 20., 10., 0., 0., 0., 0., 0.];
    ensure(
        sol.rule_storage
            .iter()
            .zip(want_rule)
            .all(|(a, b)| (a - b).abs() < 1e-6),
        || format!("rule {:?}", sol.rule_storage),
    )?;
    let report = support_statistics(&sol, &sc, &[PeriodDefinition::DriestKMonths(1)])
        .map_err(|e| e.to_string())?;
    let s = &report.summary[0];
    let (a, b) = (
        s.support_mean_discharge.unwrap(),
        s.nonsupport_mean_discharge.unwrap(),
    );
    ensure(a < b, || format!("driest month means {a} vs {b}"))?;
    Ok(format!(
        "support {{1, 4}}; driest-month means {a:.2e} < {b:.2e}"
    ))
}

fn runtimes() -> Outcome {
    let grid = TimeGrid::weekly();
    let spec = eupen(&grid);
    let years = weekly_years(Preset::Default, 1, 23);
    let exec = Exec::default();
    let merge = MpcConfig::new(MpcModel::Stochastic {
        generation: GenKind::Merging,
    });
    let t0 = Instant::now();
    let run = run_mpc(&spec, &years, &merge, &exec, &|_| {}).map_err(|e| e.to_string())?;
    let t_merge = t0.elapsed();
    ensure(run.windows.len() == 52, || "window count".into())?;
    ensure(t_merge < Duration::from_secs(60), || {
        format!("merge took {:.1} s", secs(t_merge))
    })?;

    let mix = MpcConfig::new(MpcModel::Stochastic {
        generation: GenKind::Mixing,
    });
    let t0 = Instant::now();
    let run = run_mpc(&spec, &years, &mix, &exec, &|_| {}).map_err(|e| e.to_string())?;
    let t_mix = t0.elapsed();
    ensure(
        run.windows.iter().all(|w| w.scenario_count == 12_167),
        || "mix count".into(),
    )?;
    ensure(t_mix < Duration::from_secs(1800), || {
        format!("mix took {:.0} s", secs(t_mix))
    })?;
    Ok(format!(
        "merge {:.2} s, mix k=3 {:.1} s ({} backend, {} threads)",
        secs(t_merge),
        secs(t_mix),
        exec.solver().name(),
        std::thread::available_parallelism().map_or(1, |n| n.get())
    ))
}

fn reproducibility() -> Outcome {
    let grid = TimeGrid::weekly();
    let spec = eupen(&grid);
    let years = weekly_years(Preset::Default, 3, 6);
    let cfg = MpcConfig::new(MpcModel::Stochastic {
        generation: GenKind::Mixing,
    });
    let go = |jobs| {
        run_mpc(
            &spec,
            &years,
            &cfg,
            &Exec {
                backend: Backend::Simplex,
                jobs,
            },
            &|_| {},
        )
        .map_err(|e| e.to_string())
    };
    let a = go(1)?;
    let b = go(1)?;
    let c = go(4)?;
    let (ja, jb, jc) = (
        a.curve.to_json().unwrap(),
        b.curve.to_json().unwrap(),
        c.curve.to_json().unwrap(),
    );
    ensure(ja == jb, || "sequential runs differ".into())?;
    let mut ca = Vec::new();
    let mut cb = Vec::new();
    a.curve.write_csv(&mut ca).unwrap();
    b.curve.write_csv(&mut cb).unwrap();
    ensure(ca == cb, || "sequential CSVs differ".into())?;
    ensure(a.curve.values == c.curve.values, || {
        "parallel values differ".into()
    })?;
    ensure(ja == jc, || "parallel JSON differs".into())?;
    Ok("jobs=1 byte-identical, jobs=4 value-identical".into())
}

fn main() -> ExitCode {
    std::env::set_var("SOURCE_DATE_EPOCH", "1700000000");
    let criteria: [Criterion; 10] = [
        ("scenario counts", scenario_counts),
        ("LP vs vertex enumeration", lp_vs_enumeration),
        ("envelope equals monolithic", envelope_vs_monolithic),
        ("mass balance", mass_balance),
        ("robust level ordering", robust_levels),
        ("t quantiles", t_quantiles),
        ("MPC stationarity", mpc_stationarity),
        ("support fixture", support_fixture),
        ("runtimes", runtimes),
        ("reproducibility", reproducibility),
    ];
    let only: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    let mut ran = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if !only.is_empty() && !only.contains(&(i + 1)) {
            continue;
        }
        ran += 1;
        let t0 = Instant::now();
        let res = f();
        let dt = secs(t0.elapsed());
        match res {
            Ok(msg) => println!("PASS {:>2} {name}: {msg} [{dt:.1} s]", i + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {msg} [{dt:.1} s]", i + 1);
            }
        }
    }
    println!("{} of {ran} criteria passed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
