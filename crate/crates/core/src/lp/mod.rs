//! Dense linear programming.
//!
//! Problems are kept in equality standard form `min cᵀx  s.t. Ax = b, l ≤ x ≤ u`
//! with finite lower bounds and possibly infinite upper bounds. Inequality
//! rows are turned into equalities by [`LpBuilder`], which appends one slack
//! column per inequality.
//!
//! [`DenseSimplex`] is the bundled solver. Model builders only depend on the
//! [`LpSolver`] trait so another backend can be plugged in.

mod builder;
mod dump;
mod simplex;

pub use builder::{Cmp, LpBuilder, VarId};
pub use dump::write_lp;
pub use simplex::DenseSimplex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

/// An LP in equality standard form. Immutable once constructed.
#[derive(Debug, Clone)]
pub struct LpProblem {
    cost: Vec<f64>,
    // row-major, rows × cols
    matrix: Vec<f64>,
    rhs: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    names: Vec<String>,
}

impl LpProblem {
    /// Validates dimensions, finiteness and bounds.
    ///
    /// `names` may be empty, in which case variables are named `x{j}`.
    pub fn new(
        cost: Vec<f64>,
        matrix: Vec<f64>,
        rhs: Vec<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
        names: Vec<String>,
    ) -> Result<Self> {
        let n = cost.len();
        let m = rhs.len();
        if lower.len() != n || upper.len() != n {
            return Err(Error::InvalidLp(format!(
                "{} costs but {} lower / {} upper bounds",
                n,
                lower.len(),
                upper.len()
            )));
        }
        if matrix.len() != n * m {
            return Err(Error::InvalidLp(format!(
                "matrix has {} entries, expected {m}×{n}",
                matrix.len()
            )));
        }
        if !names.is_empty() && names.len() != n {
            return Err(Error::InvalidLp(format!(
                "{} names for {n} variables",
                names.len()
            )));
        }
        if let Some(v) = cost
            .iter()
            .chain(&matrix)
            .chain(&rhs)
            .find(|v| !v.is_finite())
        {
            return Err(Error::InvalidLp(format!("non-finite coefficient {v}")));
        }
        for j in 0..n {
            if !lower[j].is_finite() || upper[j].is_nan() || lower[j] > upper[j] {
                return Err(Error::InvalidLp(format!(
                    "variable {j} has bounds [{}, {}]",
                    lower[j], upper[j]
                )));
            }
        }
        Ok(Self {
            cost,
            matrix,
            rhs,
            lower,
            upper,
            names,
        })
    }

    pub fn num_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn cost(&self) -> &[f64] {
        &self.cost
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.num_vars();
        &self.matrix[i * n..(i + 1) * n]
    }

    pub fn coef(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.num_vars() + j]
    }

    pub fn name(&self, j: usize) -> String {
        match self.names.get(j) {
            Some(s) => s.clone(),
            None => format!("x{j}"),
        }
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.cost.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest absolute row residual `|A_i x − b_i|`.
    pub fn max_row_residual(&self, x: &[f64]) -> f64 {
        (0..self.num_rows())
            .map(|i| {
                let ax: f64 = self.row(i).iter().zip(x).map(|(a, v)| a * v).sum();
                (ax - self.rhs[i]).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Largest bound violation of `x`.
    pub fn max_bound_violation(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&v, (&l, &u))| (l - v).max(v - u).max(0.0))
            .fold(0.0, f64::max)
    }

    pub fn rhs_norm(&self) -> f64 {
        self.rhs.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Absolute tolerance on variable bounds.
    pub bound: f64,
    /// Row tolerance, relative to `1 + ‖b‖∞`.
    pub row: f64,
    /// Reduced-cost tolerance.
    pub optimality: f64,
    /// Smallest pivot magnitude accepted in the ratio test.
    pub pivot: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            bound: 1e-9,
            row: 1e-8,
            optimality: 1e-9,
            pivot: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub max_iterations: usize,
    /// Consecutive degenerate pivots after which Bland's rule takes over.
    pub degeneracy_streak: usize,
    pub tolerances: Tolerances,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_iterations: 1_000_000,
            degeneracy_streak: 50,
            tolerances: Tolerances::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: Status,
    /// Primal values, one per problem variable. For `Infeasible` this is the
    /// phase-one point, for `Unbounded` the last vertex visited.
    pub primal: Vec<f64>,
    pub objective_value: f64,
    pub iterations: usize,
    /// Row multipliers `y` with `cᵀ − yᵀA` equal to the reduced costs.
    /// Only meaningful when `status` is `Optimal`.
    pub duals: Vec<f64>,
    pub reduced_costs: Vec<f64>,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }
}

pub trait LpSolver: Sync {
    fn solve(&self, problem: &LpProblem) -> LpSolution;
}
