use std::fmt::Write as _;
use std::io::{self, Write};

use super::LpProblem;

/// Writes `problem` in CPLEX LP text format, readable by most external
/// solvers for cross-checking.
pub fn write_lp<W: Write>(problem: &LpProblem, mut out: W) -> io::Result<()> {
    let names: Vec<String> = (0..problem.num_vars()).map(|j| problem.name(j)).collect();

    writeln!(
        out,
        "\\ rulecurve LP: {} variables, {} rows",
        names.len(),
        problem.num_rows()
    )?;
    writeln!(out, "Minimize")?;
    writeln!(out, " obj: {}", linear(problem.cost(), &names))?;
    writeln!(out, "Subject To")?;
    for i in 0..problem.num_rows() {
        writeln!(
            out,
            " r{i}: {} = {}",
            linear(problem.row(i), &names),
            fmt_num(problem.rhs()[i])
        )?;
    }
    writeln!(out, "Bounds")?;
    for (j, name) in names.iter().enumerate() {
        let (l, u) = (problem.lower()[j], problem.upper()[j]);
        if u.is_infinite() {
            writeln!(out, " {name} >= {}", fmt_num(l))?;
        } else if l == u {
            writeln!(out, " {name} = {}", fmt_num(l))?;
        } else {
            writeln!(out, " {} <= {name} <= {}", fmt_num(l), fmt_num(u))?;
        }
    }
    writeln!(out, "End")
}

fn linear(coefs: &[f64], names: &[String]) -> String {
    let mut s = String::new();
    for (a, name) in coefs.iter().zip(names) {
        if *a == 0.0 {
            continue;
        }
        let sign = if *a < 0.0 { '-' } else { '+' };
        if s.is_empty() && sign == '+' {
            let _ = write!(s, "{} {name}", fmt_num(a.abs()));
        } else {
            let _ = write!(s, " {sign} {} {name}", fmt_num(a.abs()));
        }
    }
    if s.is_empty() {
        s.push('0');
    }
    s.trim_start().to_string()
}

fn fmt_num(v: f64) -> String {
    format!("{v:.17e}")
}
