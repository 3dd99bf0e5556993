use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use log::{debug, info, warn};

use rulecurve_core::analysis::{
    compare_curves, match_confidence_level, support_statistics, LabeledCurve, PeriodDefinition,
    DEFAULT_LEVELS,
};
use rulecurve_core::hydrology::read_discharge_csv;
use rulecurve_core::mpc::{
    check_continuity, load_curve_csv, run_mpc, solve_direct, MpcConfig, MpcModel, RuleCurve,
    WindowRecord,
};
use rulecurve_core::robust::ci_lower_bounds;
use rulecurve_core::stochastic::{solve_decoupled, ScenarioGenMethod, ScenarioSet};
use rulecurve_core::synth::{write_synthetic_csv, SynthConfig};
use rulecurve_core::{ConfidenceSpec, Exec, GenKind, HydroYear, ReservoirSpec};

use crate::config::{self, check_exists, require, FileConfig, Inputs};
use crate::{AnalyzeArgs, CommonArgs, RunArgs, SynthArgs};

fn file_config(path: &Option<std::path::PathBuf>) -> Result<FileConfig> {
    match path {
        Some(p) => FileConfig::load(p),
        None => Ok(FileConfig::default()),
    }
}

fn inputs(a: &CommonArgs, f: &FileConfig) -> Result<Inputs> {
    let data = require(a.data.clone().or(f.data.clone()), "--data")?;
    check_exists(&data, "data file")?;
    let spec_path = a.spec.clone().or(f.spec.clone());
    if let Some(p) = &spec_path {
        check_exists(p, "reservoir spec")?;
    }
    let grid = config::grid(
        a.grid.as_deref().or(f.grid.as_deref()).unwrap_or("weekly"),
        a.year_start_month.or(f.year_start_month).unwrap_or(1),
    )?;
    let backend = config::backend(
        a.solver
            .as_deref()
            .or(f.solver.as_deref())
            .unwrap_or("simplex"),
    )?;
    Ok(Inputs {
        data,
        spec_path,
        grid,
        out: a
            .out
            .clone()
            .or(f.out.clone())
            .unwrap_or_else(|| "out".into()),
        exec: Exec {
            backend,
            jobs: a.jobs.or(f.jobs).unwrap_or(0),
        },
    })
}

fn load_years(inp: &Inputs) -> Result<Vec<HydroYear>> {
    let file = File::open(&inp.data).with_context(|| format!("opening {}", inp.data.display()))?;
    let ingested = read_discharge_csv(std::io::BufReader::new(file), &inp.grid)
        .with_context(|| format!("reading {}", inp.data.display()))?;
    let years = ingested.years;
    info!(
        "historical years: {} ({}..{}), {} dropped",
        years.len(),
        years[0].label,
        years[years.len() - 1].label,
        ingested.dropped.len()
    );
    Ok(years)
}

fn generation(s: &str) -> Result<GenKind> {
    match s {
        "merge" | "merging" => Ok(GenKind::Merging),
        "mix" | "mixing" => Ok(GenKind::Mixing),
        _ => bail!("unknown scenario generation '{s}' (merge or mix)"),
    }
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    f(&mut w)?;
    w.flush()
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn scenario_count(years: &[HydroYear], method: ScenarioGenMethod) -> Result<usize> {
    Ok(ScenarioSet::new(years, method)?.len())
}

pub fn run(a: &RunArgs) -> Result<()> {
    let f = file_config(&a.common.config)?;
    let inp = inputs(&a.common, &f)?;
    let mpc = a.mpc || f.mpc.unwrap_or(false);
    let model_name = a
        .model
        .clone()
        .or(f.model.clone())
        .unwrap_or_else(|| "stochastic".into());
    let model = match model_name.as_str() {
        "stochastic" => MpcModel::Stochastic {
            generation: generation(
                a.generation
                    .as_deref()
                    .or(f.generation.as_deref())
                    .unwrap_or("merge"),
            )?,
        },
        "robust" => MpcModel::Robust {
            confidence: ConfidenceSpec {
                level: a.level.or(f.level).unwrap_or(0.95),
                one_sided: a.one_sided || f.one_sided.unwrap_or(false),
            },
        },
        other => bail!("unknown model '{other}' (stochastic or robust)"),
    };
    if let MpcModel::Robust { confidence } = model {
        confidence.validate()?;
    }
    let window_years = a.window_years.or(f.window_years).unwrap_or(2);
    let k =
        a.k.or(f.k)
            .unwrap_or(if mpc { window_years + 1 } else { 2 });

    let spec = inp.spec()?;
    spec.validate()?;
    let years = load_years(&inp)?;
    fs::create_dir_all(&inp.out).with_context(|| format!("creating {}", inp.out.display()))?;

    let mut log = String::new();
    let _ = writeln!(log, "model: {} {model}", if mpc { "mpc" } else { "direct" });
    let _ = writeln!(log, "reservoir: {}", spec.name);
    let _ = writeln!(log, "grid: {}", inp.grid);
    let _ = writeln!(log, "solver: {}", inp.exec.solver().name());
    let _ = writeln!(
        log,
        "historical years: {} ({}..{})",
        years.len(),
        years[0].label,
        years[years.len() - 1].label
    );
    let count = match model {
        MpcModel::Stochastic { generation } => scenario_count(
            &years,
            ScenarioGenMethod {
                kind: generation,
                years_per_scenario: k,
            },
        )?,
        MpcModel::Robust { .. } => 1,
    };
    info!("scenarios: {count}");
    let _ = writeln!(log, "scenarios: {count}");
    let _ = writeln!(log, "scenario years: {k}");

    let started = Instant::now();
    let curve = if mpc {
        let cfg = MpcConfig {
            window_years,
            scenario_years: k,
            model,
        };
        let spy = inp.grid.steps_per_year();
        let done = AtomicUsize::new(0);
        let every = spy.div_ceil(10);
        let progress = |w: &WindowRecord| {
            let n = done.fetch_add(1, Ordering::Relaxed) + 1;
            debug!(
                "window {}: {} scenarios, {:.3} s",
                w.start,
                w.scenario_count,
                w.elapsed.as_secs_f64()
            );
            if n.is_multiple_of(every) || n == spy {
                info!(
                    "windows done: {n}/{spy} ({} scenarios each)",
                    w.scenario_count
                );
            }
        };
        let run = run_mpc(&spec, &years, &cfg, &inp.exec, &progress)?;
        let _ = writeln!(log, "windows: {}", run.windows.len());
        let _ = writeln!(log, "window years: {window_years}");
        for w in &run.windows {
            let _ = writeln!(
                log,
                "window start={} scenarios={} elapsed_s={:.6} rule_m3={}{}",
                w.start,
                w.scenario_count,
                w.elapsed.as_secs_f64(),
                w.rule_value,
                w.binding_scenario
                    .as_ref()
                    .map(|b| format!(" binding={b}"))
                    .unwrap_or_default()
            );
        }
        run.curve
    } else {
        solve_direct(&spec, &years, model, k, &inp.exec)?.curve
    };
    let wall = started.elapsed().as_secs_f64();
    let continuity = check_continuity(&curve)?;
    let _ = writeln!(log, "wrap jump m3: {}", continuity.wrap_jump);
    let _ = writeln!(log, "total wall time s: {wall:.3}");
    info!(
        "solved in {wall:.2} s, wrap jump {:.1} m3",
        continuity.wrap_jump
    );

    curve.validate(&spec)?;
    write_outputs(&inp.out, &curve, &log)?;
    if let MpcModel::Robust { confidence } = model {
        let wc = ci_lower_bounds(&years, confidence)?;
        write_file(&inp.out.join("worst_case.csv"), |w| {
            Ok(wc.write_discharge_csv(years[0].start_year, k, w)?)
        })?;
    }
    info!("wrote {}", inp.out.join("rulecurve.csv").display());
    Ok(())
}

fn write_outputs(out: &Path, curve: &RuleCurve, log: &str) -> Result<()> {
    write_file(&out.join("rulecurve.csv"), |w| Ok(curve.write_csv(w)?))?;
    write_file(&out.join("rulecurve.json"), |w| {
        w.write_all(curve.to_json()?.as_bytes())?;
        Ok(())
    })?;
    write_file(&out.join("run.log"), |w| {
        w.write_all(log.as_bytes())?;
        Ok(())
    })
}

/// Stochastic and robust curves, direct or receding-horizon.
fn curve_for(
    spec: &ReservoirSpec,
    years: &[HydroYear],
    model: MpcModel,
    k: usize,
    mpc: bool,
    exec: &Exec,
) -> rulecurve_core::Result<RuleCurve> {
    if mpc {
        let cfg = MpcConfig::new(model);
        Ok(run_mpc(spec, years, &cfg, exec, &|_| {})?.curve)
    } else {
        Ok(solve_direct(spec, years, model, k, exec)?.curve)
    }
}

pub fn analyze(a: &AnalyzeArgs) -> Result<()> {
    let f = file_config(&a.common.config)?;
    let inp = inputs(&a.common, &f)?;
    let gen = generation(
        a.generation
            .as_deref()
            .or(f.generation.as_deref())
            .unwrap_or("merge"),
    )?;
    let k = a.k.or(f.k).unwrap_or(2);
    let mpc = a.mpc || f.mpc.unwrap_or(false);
    let levels = a
        .levels
        .clone()
        .or(f.levels.clone())
        .unwrap_or_else(|| DEFAULT_LEVELS.to_vec());
    let current = a.current.clone().or(f.current.clone());
    let mut extra = a.curves.clone();
    if extra.is_empty() {
        extra = f.curves.clone().unwrap_or_default();
    }

    let spec = inp.spec()?;
    spec.validate()?;
    // Fail on unusable comparison inputs before any solving.
    let current = match &current {
        Some(p) => {
            check_exists(p, "current rule curve")?;
            Some(load_curve_csv(p, &inp.grid)?)
        }
        None => None,
    };
    let mut loaded = Vec::new();
    for p in &extra {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        let c = RuleCurve::from_json(&text).with_context(|| format!("parsing {}", p.display()))?;
        c.grid.ensure_same(&inp.grid)?;
        let label = p
            .parent()
            .and_then(|d| d.file_name())
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| c.metadata.model.clone());
        loaded.push(LabeledCurve::from_curve(label, &c));
    }

    let years = load_years(&inp)?;
    fs::create_dir_all(&inp.out).with_context(|| format!("creating {}", inp.out.display()))?;

    // Support statistics of the direct stochastic solve.
    let method = ScenarioGenMethod {
        kind: gen,
        years_per_scenario: k,
    };
    let scenarios: Vec<_> = ScenarioSet::new(&years, method)?.iter().collect();
    info!("scenarios: {}", scenarios.len());
    let sol = solve_decoupled(&spec, &scenarios, &inp.exec)?;
    let report = support_statistics(&sol, &scenarios, &PeriodDefinition::STANDARD)?;
    write_file(&inp.out.join("support_report.csv"), |w| {
        Ok(report.write_csv(w)?)
    })?;
    write_file(&inp.out.join("support_summary.csv"), |w| {
        Ok(report.write_summary_csv(w)?)
    })?;
    let table = report.text_table();
    write_file(&inp.out.join("support_table.txt"), |w| {
        w.write_all(table.as_bytes())?;
        Ok(())
    })?;
    println!(
        "support scenarios: {} of {}",
        sol.support_ids.len(),
        scenarios.len()
    );
    print!("{table}");

    // Robust level nearest the stochastic curve.
    let stochastic = if mpc {
        let c = curve_for(
            &spec,
            &years,
            MpcModel::Stochastic { generation: gen },
            k,
            true,
            &inp.exec,
        )?;
        LabeledCurve::from_curve("stochastic", &c)
    } else {
        let spy = inp.grid.steps_per_year();
        LabeledCurve::new("stochastic", inp.grid, sol.rule_storage[..spy].to_vec())
    };
    let mut robust = Vec::new();
    for &level in &levels {
        let confidence = ConfidenceSpec {
            level,
            one_sided: false,
        };
        confidence.validate()?;
        match curve_for(
            &spec,
            &years,
            MpcModel::Robust { confidence },
            k,
            mpc,
            &inp.exec,
        ) {
            Ok(c) => robust.push((
                level,
                LabeledCurve::from_curve(format!("robust_{level}"), &c),
            )),
            Err(e) if e.is_infeasible() => warn!("robust level {level}: {e}"),
            Err(e) => return Err(e.into()),
        }
    }
    let mut curves = vec![stochastic.clone()];
    if robust.is_empty() {
        warn!("no robust level is feasible; skipping confidence matching");
    } else {
        let m = match_confidence_level(&stochastic, &robust)?;
        let mut text = String::from("level,l1_distance_m3\n");
        for (l, d) in &m.distances {
            let _ = writeln!(text, "{l},{d}");
        }
        write_file(&inp.out.join("confidence_match.csv"), |w| {
            w.write_all(text.as_bytes())?;
            Ok(())
        })?;
        println!(
            "closest robust level: {} (L1 distance {:.1} m3)",
            m.level, m.distance
        );
        let matched = robust
            .iter()
            .find(|(l, _)| *l == m.level)
            .map(|(_, c)| c.clone())
            .expect("matched level is a candidate");
        curves.push(matched);
    }
    curves.extend(loaded);
    let reference = current.map(|values| {
        curves.push(LabeledCurve::new("current", inp.grid, values));
        curves.len() - 1
    });
    let cmp = compare_curves(&curves)?;
    write_file(&inp.out.join("comparison_steps.csv"), |w| {
        Ok(cmp.write_steps_csv(reference, w)?)
    })?;
    write_file(&inp.out.join("comparison_pairs.csv"), |w| {
        Ok(cmp.write_pairs_csv(w)?)
    })?;
    print!("{}", cmp.text_table());
    info!("wrote reports to {}", inp.out.display());
    Ok(())
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    let f = file_config(&a.config)?;
    let preset = a
        .preset
        .as_deref()
        .or(f.preset.as_deref())
        .unwrap_or("default");
    let cfg = SynthConfig {
        seed: a.seed.or(f.seed).unwrap_or(1),
        years: a.years.or(f.years).unwrap_or(23),
        first_year: a.first_year.or(f.first_year).unwrap_or(1990),
        preset: preset.parse()?,
    };
    let out = a
        .out
        .clone()
        .or(f.out.clone())
        .unwrap_or_else(|| "synthetic.csv".into());
    if out.as_os_str() == "-" {
        let stdout = std::io::stdout();
        write_synthetic_csv(&cfg, stdout.lock())?;
    } else {
        if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        write_file(&out, |w| Ok(write_synthetic_csv(&cfg, w)?))?;
        info!(
            "wrote {} years ({} preset, seed {}) to {}",
            cfg.years,
            cfg.preset,
            cfg.seed,
            out.display()
        );
    }
    Ok(())
}
