use std::collections::HashMap;

use super::LpProblem;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cmp {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
struct Row {
    terms: Vec<(usize, f64)>,
    cmp: Cmp,
    rhs: f64,
}

/// Incremental LP construction. Inequalities become equalities with one slack
/// column each, appended after the declared variables on [`LpBuilder::build`].
///
/// The name index is only built once a row is added by name; duplicate names
/// are rejected at that point.
#[derive(Debug, Clone, Default)]
pub struct LpBuilder {
    names: Vec<String>,
    index: Option<HashMap<String, usize>>,
    cost: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    rows: Vec<Row>,
}

impl LpBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn add_variable(
        &mut self,
        name: impl Into<String>,
        lower: f64,
        upper: f64,
        cost: f64,
    ) -> Result<VarId> {
        let name = name.into();
        if !lower.is_finite() || upper.is_nan() || upper == f64::NEG_INFINITY || lower > upper {
            return Err(Error::InvalidLp(format!(
                "variable '{name}' has bounds [{lower}, {upper}]"
            )));
        }
        if !cost.is_finite() {
            return Err(Error::InvalidLp(format!(
                "variable '{name}' has cost {cost}"
            )));
        }
        let id = self.cost.len();
        if let Some(index) = &mut self.index {
            if index.insert(name.clone(), id).is_some() {
                return Err(Error::InvalidLp(format!("duplicate variable '{name}'")));
            }
        }
        self.names.push(name);
        self.cost.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        Ok(VarId(id))
    }

    pub fn var(&mut self, name: &str) -> Result<VarId> {
        if self.index.is_none() {
            let mut index = HashMap::with_capacity(self.names.len());
            for (j, n) in self.names.iter().enumerate() {
                if index.insert(n.clone(), j).is_some() {
                    return Err(Error::InvalidLp(format!("duplicate variable '{n}'")));
                }
            }
            self.index = Some(index);
        }
        self.index
            .as_ref()
            .and_then(|index| index.get(name))
            .map(|&j| VarId(j))
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn add_row(&mut self, terms: &[(VarId, f64)], cmp: Cmp, rhs: f64) -> Result<()> {
        let mut out = Vec::with_capacity(terms.len());
        for &(VarId(j), a) in terms {
            if j >= self.cost.len() {
                return Err(Error::UnknownVariable(format!("#{j}")));
            }
            if !a.is_finite() {
                return Err(Error::InvalidLp(format!(
                    "coefficient {a} on '{}'",
                    self.names[j]
                )));
            }
            out.push((j, a));
        }
        if !rhs.is_finite() {
            return Err(Error::InvalidLp(format!("right-hand side {rhs}")));
        }
        self.rows.push(Row {
            terms: out,
            cmp,
            rhs,
        });
        Ok(())
    }

    pub fn add_row_by_name(&mut self, terms: &[(&str, f64)], cmp: Cmp, rhs: f64) -> Result<()> {
        let mut ids = Vec::with_capacity(terms.len());
        for &(name, a) in terms {
            ids.push((self.var(name)?, a));
        }
        self.add_row(&ids, cmp, rhs)
    }

    pub fn build(self) -> Result<LpProblem> {
        let slacks = self.rows.iter().filter(|r| r.cmp != Cmp::Eq).count();
        let n = self.cost.len() + slacks;
        let m = self.rows.len();
        let mut names = self.names;
        let mut cost = self.cost;
        let mut lower = self.lower;
        let mut upper = self.upper;
        let mut matrix = vec![0.0; n * m];
        let mut rhs = Vec::with_capacity(m);
        let mut next_slack = cost.len();
        for (i, row) in self.rows.into_iter().enumerate() {
            for (j, a) in row.terms {
                matrix[i * n + j] += a;
            }
            let sign = match row.cmp {
                Cmp::Eq => None,
                Cmp::Le => Some(1.0),
                Cmp::Ge => Some(-1.0),
            };
            if let Some(s) = sign {
                matrix[i * n + next_slack] = s;
                names.push(format!("slack_{i}"));
                cost.push(0.0);
                lower.push(0.0);
                upper.push(f64::INFINITY);
                next_slack += 1;
            }
            rhs.push(row.rhs);
        }
        LpProblem::new(cost, matrix, rhs, lower, upper, names)
    }
}
