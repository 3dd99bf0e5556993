//! Two-phase bounded-variable primal simplex on a dense tableau.
//!
//! Every row carries an artificial column. The artificial block of the
//! tableau equals `B⁻¹·diag(sign)`, which is used to refresh the primal
//! values and to read the row multipliers at the end.

use super::{LpProblem, LpSolution, LpSolver, SolveOptions, Status};

#[derive(Debug, Clone, Default)]
pub struct DenseSimplex {
    pub options: SolveOptions,
}

impl DenseSimplex {
    pub fn new(options: SolveOptions) -> Self {
        Self { options }
    }
}

impl LpSolver for DenseSimplex {
    fn solve(&self, problem: &LpProblem) -> LpSolution {
        Tableau::new(problem, &self.options).run()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Basic,
    Lower,
    Upper,
}

enum Step {
    Moved,
    Unbounded,
}

const REFRESH_EVERY: usize = 100;
const DROP: f64 = 1e-14;

struct Tableau<'a> {
    p: &'a LpProblem,
    opts: &'a SolveOptions,
    m: usize,
    n: usize,
    cols: usize,
    t: Vec<f64>,
    d: Vec<f64>,
    cost: Vec<f64>,
    basis: Vec<usize>,
    state: Vec<State>,
    x: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    sign: Vec<f64>,
    iterations: usize,
    streak: usize,
    bland: bool,
    nz: Vec<usize>,
    pivot_row: Vec<f64>,
}

impl<'a> Tableau<'a> {
    fn new(p: &'a LpProblem, opts: &'a SolveOptions) -> Self {
        let m = p.num_rows();
        let n = p.num_vars();
        let cols = n + m;

        let mut lo = p.lower().to_vec();
        let mut hi = p.upper().to_vec();
        lo.extend(std::iter::repeat_n(0.0, m));
        hi.extend(std::iter::repeat_n(f64::INFINITY, m));

        let mut x = lo.clone();
        let mut state = vec![State::Lower; cols];

        let mut resid = p.rhs().to_vec();
        for (i, r) in resid.iter_mut().enumerate() {
            let row = p.row(i);
            for j in 0..n {
                *r -= row[j] * x[j];
            }
        }

        // Crash: a column with a single nonzero in row i can start basic in
        // that row when the value it has to take stays within its bounds.
        let mut crash: Vec<Option<(usize, f64)>> = vec![None; m];
        if m > 0 {
            for j in 0..n {
                if lo[j] == hi[j] {
                    continue;
                }
                let mut only = None;
                let mut count = 0;
                for i in 0..m {
                    let a = p.coef(i, j);
                    if a != 0.0 {
                        count += 1;
                        only = Some((i, a));
                        if count > 1 {
                            break;
                        }
                    }
                }
                if count != 1 {
                    continue;
                }
                let (i, a) = only.unwrap();
                if crash[i].is_some() || a.abs() < 1e-6 {
                    continue;
                }
                let v = lo[j] + resid[i] / a;
                if v >= lo[j] && v <= hi[j] {
                    crash[i] = Some((j, a));
                }
            }
        }

        let mut t = vec![0.0; m * cols];
        let mut sign = vec![1.0; m];
        let mut basis = Vec::with_capacity(m);
        for i in 0..m {
            let row = p.row(i);
            let tr = &mut t[i * cols..(i + 1) * cols];
            match crash[i] {
                Some((j, a)) => {
                    for k in 0..n {
                        tr[k] = row[k] / a;
                    }
                    tr[n + i] = 1.0 / a;
                    x[j] = lo[j] + resid[i] / a;
                    state[j] = State::Basic;
                    basis.push(j);
                }
                None => {
                    let s = if resid[i] >= 0.0 { 1.0 } else { -1.0 };
                    sign[i] = s;
                    for k in 0..n {
                        tr[k] = s * row[k];
                    }
                    tr[n + i] = 1.0;
                    x[n + i] = resid[i].abs();
                    state[n + i] = State::Basic;
                    basis.push(n + i);
                }
            }
        }

        Self {
            p,
            opts,
            m,
            n,
            cols,
            t,
            d: vec![0.0; cols],
            cost: vec![0.0; cols],
            basis,
            state,
            x,
            lo,
            hi,
            sign,
            iterations: 0,
            streak: 0,
            bland: false,
            nz: Vec::with_capacity(cols),
            pivot_row: Vec::with_capacity(cols),
        }
    }

    fn run(mut self) -> LpSolution {
        // phase one: minimise the sum of artificials
        let n = self.n;
        for j in 0..self.cols {
            self.cost[j] = if j >= n { 1.0 } else { 0.0 };
        }
        self.reprice();
        if let Some(status) = self.iterate() {
            // Unbounded cannot happen in phase one; only the iteration cap.
            return self.finish(status);
        }
        self.refresh_primal();
        let infeasibility: f64 = (n..self.cols).map(|j| self.x[j].max(0.0)).sum();
        let tol = self.opts.tolerances.row * (1.0 + self.p.rhs_norm());
        if infeasibility > tol {
            return self.finish(Status::Infeasible);
        }
        self.drive_out_artificials();

        // phase two
        for j in 0..self.cols {
            self.cost[j] = if j < n { self.p.cost()[j] } else { 0.0 };
        }
        self.reprice();
        self.streak = 0;
        self.bland = false;
        match self.iterate() {
            Some(status) => self.finish(status),
            None => self.finish(Status::Optimal),
        }
    }

    /// Runs pivots until optimal for the current cost. Returns a terminal
    /// status on unboundedness or the iteration cap.
    fn iterate(&mut self) -> Option<Status> {
        loop {
            let j = self.price()?;
            if self.iterations >= self.opts.max_iterations {
                return Some(Status::IterationLimit);
            }
            self.iterations += 1;
            if let Step::Unbounded = self.step(j) {
                return Some(Status::Unbounded);
            }
            if self.iterations.is_multiple_of(REFRESH_EVERY) {
                self.refresh_primal();
            }
        }
    }

    fn price(&self) -> Option<usize> {
        let tol = self.opts.tolerances.optimality;
        let mut best = None;
        let mut best_score = 0.0;
        for j in 0..self.n {
            let score = match self.state[j] {
                State::Basic => continue,
                _ if self.lo[j] == self.hi[j] => continue,
                State::Lower if self.d[j] < -tol => -self.d[j],
                State::Upper if self.d[j] > tol => self.d[j],
                _ => continue,
            };
            if self.bland {
                return Some(j);
            }
            if score > best_score {
                best_score = score;
                best = Some(j);
            }
        }
        best
    }

    fn step(&mut self, j: usize) -> Step {
        let cols = self.cols;
        let ptol = self.opts.tolerances.pivot;
        let dir = if self.state[j] == State::Lower {
            1.0
        } else {
            -1.0
        };

        let mut theta = self.hi[j] - self.lo[j];
        let mut leave: Option<(usize, bool)> = None;
        let mut leave_mag = 0.0;
        for i in 0..self.m {
            let a = self.t[i * cols + j];
            if a.abs() <= ptol {
                continue;
            }
            let delta = dir * a;
            let b = self.basis[i];
            let (limit, to_lower) = if delta > 0.0 {
                ((self.x[b] - self.lo[b]).max(0.0) / delta, true)
            } else if self.hi[b].is_finite() {
                ((self.hi[b] - self.x[b]).max(0.0) / -delta, false)
            } else {
                continue;
            };
            let tie = 1e-12 * (1.0 + limit.abs());
            let take = if limit < theta - tie {
                true
            } else if limit <= theta + tie {
                match leave {
                    None => false,
                    Some((r, _)) if self.bland => b < self.basis[r],
                    Some(_) => a.abs() > leave_mag,
                }
            } else {
                false
            };
            if take {
                theta = limit;
                leave = Some((i, to_lower));
                leave_mag = a.abs();
            }
        }

        if !theta.is_finite() {
            return Step::Unbounded;
        }

        if theta > 0.0 {
            self.x[j] += dir * theta;
            for i in 0..self.m {
                let a = self.t[i * cols + j];
                if a != 0.0 {
                    self.x[self.basis[i]] -= dir * theta * a;
                }
            }
        }

        if theta <= 1e-12 {
            self.streak += 1;
            if self.streak >= self.opts.degeneracy_streak {
                self.bland = true;
            }
        } else {
            self.streak = 0;
            self.bland = false;
        }

        match leave {
            None => {
                if dir > 0.0 {
                    self.state[j] = State::Upper;
                    self.x[j] = self.hi[j];
                } else {
                    self.state[j] = State::Lower;
                    self.x[j] = self.lo[j];
                }
            }
            Some((r, to_lower)) => {
                let b = self.basis[r];
                if to_lower {
                    self.state[b] = State::Lower;
                    self.x[b] = self.lo[b];
                } else {
                    self.state[b] = State::Upper;
                    self.x[b] = self.hi[b];
                }
                self.pivot(r, j);
            }
        }
        Step::Moved
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let cols = self.cols;
        let piv = self.t[r * cols + j];
        self.nz.clear();
        self.pivot_row.clear();
        {
            let row = &mut self.t[r * cols..(r + 1) * cols];
            for (k, v) in row.iter_mut().enumerate() {
                if *v != 0.0 {
                    *v /= piv;
                    if v.abs() < DROP {
                        *v = 0.0;
                    } else {
                        self.nz.push(k);
                        self.pivot_row.push(*v);
                    }
                }
            }
            row[j] = 1.0;
        }
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let row = &mut self.t[i * cols..(i + 1) * cols];
            let f = row[j];
            if f == 0.0 {
                continue;
            }
            for (&k, &v) in self.nz.iter().zip(&self.pivot_row) {
                let nv = row[k] - f * v;
                row[k] = if nv.abs() < DROP { 0.0 } else { nv };
            }
            row[j] = 0.0;
        }
        let f = self.d[j];
        if f != 0.0 {
            for (&k, &v) in self.nz.iter().zip(&self.pivot_row) {
                self.d[k] -= f * v;
            }
        }
        self.d[j] = 0.0;
        self.basis[r] = j;
        self.state[j] = State::Basic;
    }

    fn reprice(&mut self) {
        let cols = self.cols;
        self.d.copy_from_slice(&self.cost);
        for i in 0..self.m {
            let cb = self.cost[self.basis[i]];
            if cb == 0.0 {
                continue;
            }
            let row = &self.t[i * cols..(i + 1) * cols];
            for (dk, &v) in self.d.iter_mut().zip(row) {
                *dk -= cb * v;
            }
        }
        for i in 0..self.m {
            self.d[self.basis[i]] = 0.0;
        }
    }

    /// Recomputes basic values from the nonbasic ones: `x_B = B⁻¹(b − N x_N)`.
    fn refresh_primal(&mut self) {
        let (m, n, cols) = (self.m, self.n, self.cols);
        let mut resid = self.p.rhs().to_vec();
        for (i, r) in resid.iter_mut().enumerate() {
            let row = self.p.row(i);
            for j in 0..n {
                if self.state[j] != State::Basic && self.x[j] != 0.0 {
                    *r -= row[j] * self.x[j];
                }
            }
            let a = n + i;
            if self.state[a] != State::Basic && self.x[a] != 0.0 {
                *r -= self.sign[i] * self.x[a];
            }
        }
        for i in 0..m {
            let row = &self.t[i * cols..(i + 1) * cols];
            let v: f64 = (0..m).map(|k| row[n + k] * self.sign[k] * resid[k]).sum();
            self.x[self.basis[i]] = v;
        }
    }

    fn drive_out_artificials(&mut self) {
        let (n, cols) = (self.n, self.cols);
        for r in 0..self.m {
            let b = self.basis[r];
            if b < n {
                continue;
            }
            let row = &self.t[r * cols..(r + 1) * cols];
            let mut best = None;
            let mut mag = 1e-9;
            for k in 0..n {
                if self.state[k] != State::Basic && row[k].abs() > mag {
                    mag = row[k].abs();
                    best = Some(k);
                }
            }
            if let Some(k) = best {
                self.x[b] = 0.0;
                self.state[b] = State::Lower;
                self.pivot(r, k);
            } else {
                // redundant row: the artificial stays basic, pinned at zero
                self.x[b] = 0.0;
            }
        }
        for j in n..self.cols {
            self.hi[j] = 0.0;
            if self.state[j] != State::Basic {
                self.x[j] = 0.0;
                self.state[j] = State::Lower;
            }
        }
    }

    fn finish(mut self, status: Status) -> LpSolution {
        let n = self.n;
        if status != Status::Infeasible {
            self.refresh_primal();
        }
        let btol = self.opts.tolerances.bound;
        let mut primal = self.x[..n].to_vec();
        for (j, v) in primal.iter_mut().enumerate() {
            // snap rounding noise onto the bound
            if (*v - self.lo[j]).abs() <= btol {
                *v = self.lo[j];
            } else if (*v - self.hi[j]).abs() <= btol {
                *v = self.hi[j];
            }
        }
        let objective_value = self.p.objective_value(&primal);

        let (duals, reduced_costs) = if status == Status::Optimal {
            let duals: Vec<f64> = (0..self.m).map(|k| -self.sign[k] * self.d[n + k]).collect();
            let reduced = (0..n)
                .map(|j| {
                    let ya: f64 = (0..self.m).map(|i| duals[i] * self.p.coef(i, j)).sum();
                    self.p.cost()[j] - ya
                })
                .collect();
            (duals, reduced)
        } else {
            (Vec::new(), Vec::new())
        };

        LpSolution {
            status,
            primal,
            objective_value,
            iterations: self.iterations,
            duals,
            reduced_costs,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::{Cmp, LpBuilder, LpSolver};

    fn solve(b: LpBuilder) -> LpSolution {
        DenseSimplex::default().solve(&b.build().unwrap())
    }

    #[test]
    fn bound_only() {
        let mut b = LpBuilder::new();
        b.add_variable("x", 3.0, f64::INFINITY, 1.0).unwrap();
        let s = solve(b);
        assert_eq!(s.status, Status::Optimal);
        assert_eq!(s.primal, vec![3.0]);
    }

    #[test]
    fn symmetric_box() {
        let mut b = LpBuilder::new();
        let x = b.add_variable("x", 0.0, 1.0, -1.0).unwrap();
        let y = b.add_variable("y", 0.0, 1.0, -1.0).unwrap();
        b.add_row(&[(x, 1.0), (y, 1.0)], Cmp::Le, 1.0).unwrap();
        let s = solve(b);
        assert_eq!(s.status, Status::Optimal);
        assert!((s.objective_value + 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_problem() {
        let s = solve(LpBuilder::new());
        assert_eq!(s.status, Status::Optimal);
        assert_eq!(s.objective_value, 0.0);
    }

    #[test]
    fn detects_infeasible() {
        let mut b = LpBuilder::new();
        let x = b.add_variable("x", 0.0, 1.0, 1.0).unwrap();
        b.add_row(&[(x, 1.0)], Cmp::Ge, 2.0).unwrap();
        assert_eq!(solve(b).status, Status::Infeasible);
    }

    #[test]
    fn detects_unbounded() {
        let mut b = LpBuilder::new();
        let x = b.add_variable("x", 0.0, f64::INFINITY, -1.0).unwrap();
        let y = b.add_variable("y", 0.0, f64::INFINITY, 0.0).unwrap();
        b.add_row(&[(x, 1.0), (y, -1.0)], Cmp::Eq, 1.0).unwrap();
        assert_eq!(solve(b).status, Status::Unbounded);
    }

    #[test]
    fn redundant_rows() {
        let mut b = LpBuilder::new();
        let x = b.add_variable("x", 0.0, 10.0, 1.0).unwrap();
        let y = b.add_variable("y", 0.0, 10.0, 2.0).unwrap();
        b.add_row(&[(x, 1.0), (y, 1.0)], Cmp::Eq, 4.0).unwrap();
        b.add_row(&[(x, 2.0), (y, 2.0)], Cmp::Eq, 8.0).unwrap();
        let s = solve(b);
        assert_eq!(s.status, Status::Optimal);
        assert!((s.objective_value - 4.0).abs() < 1e-9);
    }

    #[test]
    fn iteration_limit() {
        let mut b = LpBuilder::new();
        let x = b.add_variable("x", 0.0, 10.0, -1.0).unwrap();
        let y = b.add_variable("y", 0.0, 10.0, -1.0).unwrap();
        b.add_row(&[(x, 1.0), (y, 2.0)], Cmp::Le, 12.0).unwrap();
        b.add_row(&[(x, 3.0), (y, 1.0)], Cmp::Le, 15.0).unwrap();
        let opts = SolveOptions {
            max_iterations: 0,
            ..SolveOptions::default()
        };
        let s = DenseSimplex::new(opts).solve(&b.build().unwrap());
        assert_eq!(s.status, Status::IterationLimit);
    }

    #[test]
    fn duals_certify_optimum() {
        // min 2x + 3y  s.t. x + y >= 4, x + 3y >= 6
        let mut b = LpBuilder::new();
        let x = b.add_variable("x", 0.0, f64::INFINITY, 2.0).unwrap();
        let y = b.add_variable("y", 0.0, f64::INFINITY, 3.0).unwrap();
        b.add_row(&[(x, 1.0), (y, 1.0)], Cmp::Ge, 4.0).unwrap();
        b.add_row(&[(x, 1.0), (y, 3.0)], Cmp::Ge, 6.0).unwrap();
        let p = b.build().unwrap();
        let s = DenseSimplex::default().solve(&p);
        assert_eq!(s.status, Status::Optimal);
        assert!((s.objective_value - 9.0).abs() < 1e-9);
        let by: f64 = p.rhs().iter().zip(&s.duals).map(|(b, y)| b * y).sum();
        assert!((by - 9.0).abs() < 1e-9);
    }
}
