#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rulecurve_core::lp::{Cmp, LpBuilder, LpProblem, Status};
use rulecurve_core::{HydroYear, ReservoirSpec, TimeGrid};

/// Small LP with integer data: 2 to 5 variables, 1 to 3 rows, a mix of
/// finite and infinite upper bounds.
pub fn random_lp(seed: u64) -> LpProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=5);
    let m = rng.gen_range(1..=3);
    let mut b = LpBuilder::new();
    let mut vars = Vec::new();
    for j in 0..n {
        let lo = rng.gen_range(-2..=2) as f64;
        let hi = if rng.gen_bool(0.7) {
            lo + rng.gen_range(1..=6) as f64
        } else {
            f64::INFINITY
        };
        let c = rng.gen_range(-5..=5) as f64;
        vars.push(b.add_variable(format!("x{j}"), lo, hi, c).unwrap());
    }
    for _ in 0..m {
        let terms: Vec<_> = vars
            .iter()
            .map(|&v| (v, rng.gen_range(-4..=4) as f64))
            .filter(|t| t.1 != 0.0)
            .collect();
        let cmp = match rng.gen_range(0..5) {
            0 => Cmp::Eq,
            1 | 2 => Cmp::Le,
            _ => Cmp::Ge,
        };
        let rhs = rng.gen_range(-6..=10) as f64;
        b.add_row(&terms, cmp, rhs).unwrap();
    }
    b.build().unwrap()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Oracle {
    Optimal(f64),
    Infeasible,
    Unbounded,
}

impl Oracle {
    pub fn status(&self) -> Status {
        match self {
            Oracle::Optimal(_) => Status::Optimal,
            Oracle::Infeasible => Status::Infeasible,
            Oracle::Unbounded => Status::Unbounded,
        }
    }
}

const BOX: f64 = 1e6;

/// Row-reduces `[A | b]`, dropping dependent rows. `None` if inconsistent.
fn reduce(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<(Vec<Vec<f64>>, Vec<f64>)> {
    let n = a.first().map_or(0, Vec::len);
    let mut r = 0;
    for c in 0..n {
        let Some(p) = (r..a.len()).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())) else {
            break;
        };
        if a[p][c].abs() < 1e-10 {
            continue;
        }
        a.swap(r, p);
        b.swap(r, p);
        for i in 0..a.len() {
            if i != r {
                let f = a[i][c] / a[r][c];
                if f != 0.0 {
                    for k in 0..n {
                        a[i][k] -= f * a[r][k];
                    }
                    b[i] -= f * b[r];
                }
            }
        }
        r += 1;
    }
    if b[r..].iter().any(|v| v.abs() > 1e-9) {
        return None;
    }
    a.truncate(r);
    b.truncate(r);
    Some((a, b))
}

fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[p][c].abs() < 1e-10 {
            return None;
        }
        a.swap(c, p);
        b.swap(c, p);
        for i in c + 1..n {
            let f = a[i][c] / a[c][c];
            for k in c..n {
                a[i][k] -= f * a[c][k];
            }
            b[i] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Some(x)
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    if n < k {
        return vec![];
    }
    let mut out = combinations(n - 1, k);
    for mut c in combinations(n - 1, k - 1) {
        c.push(n - 1);
        out.push(c);
    }
    out
}

/// Brute-force optimum over all basic solutions of `Ax = b, l ≤ x ≤ u`.
///
/// Infinite upper bounds are replaced by a large box. The problem is
/// unbounded iff some box-touching vertex beats every vertex that stays
/// clear of the box.
pub fn vertex_enumeration(p: &LpProblem) -> Oracle {
    let n = p.num_vars();
    let a: Vec<Vec<f64>> = (0..p.num_rows()).map(|i| p.row(i).to_vec()).collect();
    let Some((a, b)) = reduce(a, p.rhs().to_vec()) else {
        return Oracle::Infeasible;
    };
    let m = b.len();
    let lower = p.lower();
    let upper: Vec<f64> = p
        .upper()
        .iter()
        .map(|&u| if u.is_finite() { u } else { BOX })
        .collect();
    let boxed: Vec<bool> = p.upper().iter().map(|u| !u.is_finite()).collect();
    let cost = p.cost();

    let (mut best_all, mut best_clear) = (f64::INFINITY, f64::INFINITY);
    for basis in combinations(n, m) {
        let non: Vec<usize> = (0..n).filter(|j| !basis.contains(j)).collect();
        for mask in 0..(1u32 << non.len()) {
            let mut x = vec![0.0; n];
            for (k, &j) in non.iter().enumerate() {
                x[j] = if mask >> k & 1 == 1 {
                    upper[j]
                } else {
                    lower[j]
                };
            }
            let rhs: Vec<f64> = (0..m)
                .map(|i| b[i] - non.iter().map(|&j| a[i][j] * x[j]).sum::<f64>())
                .collect();
            let sq: Vec<Vec<f64>> = (0..m)
                .map(|i| basis.iter().map(|&j| a[i][j]).collect())
                .collect();
            let Some(xb) = solve_square(sq, rhs) else {
                continue;
            };
            for (k, &j) in basis.iter().enumerate() {
                x[j] = xb[k];
            }
            let tol = 1e-7;
            if (0..n).any(|j| x[j] < lower[j] - tol || x[j] > upper[j] + tol) {
                continue;
            }
            let obj: f64 = (0..n).map(|j| cost[j] * x[j]).sum();
            best_all = best_all.min(obj);
            let touches = (0..n).any(|j| boxed[j] && x[j] > BOX / 2.0);
            if !touches {
                best_clear = best_clear.min(obj);
            }
        }
    }
    if best_all == f64::INFINITY {
        Oracle::Infeasible
    } else if best_all < best_clear - 1e-6 * (1.0 + best_clear.abs()) {
        Oracle::Unbounded
    } else {
        Oracle::Optimal(best_clear)
    }
}

/// Grid with `spy` equal steps, rivers `a` (tributary) and `b` (diverted).
pub fn toy_years(spy: usize, n: usize, seed: u64) -> Vec<HydroYear> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = TimeGrid::custom(spy);
    (0..n)
        .map(|y| {
            let mut flows = BTreeMap::new();
            for r in ["a", "b"] {
                let v = (0..spy)
                    .map(|_| rng.gen_range(0.0..12.0f64).round())
                    .collect();
                flows.insert(r.to_string(), v);
            }
            HydroYear::new(2000 + y as i32, grid, flows).unwrap()
        })
        .collect()
}

pub fn toy_spec(spy: usize) -> ReservoirSpec {
    ReservoirSpec::constant(TimeGrid::custom(spy), 5.0, 60.0)
        .with_demand(4.0, 1.0)
        .with_release_capacity(6.0, 20.0)
        .with_tributary("a")
        .with_diverted("b", 5.0, 1.0)
}
