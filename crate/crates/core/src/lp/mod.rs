//! Linear and quadratic program types and solvers.

mod mps;
mod qp;
mod simplex;

pub use mps::write_mps;
pub use qp::{solve_qp, QpOptions, QpOutcome, QpSolution, QuadraticProgram};
pub use simplex::{solve_lp, solve_lp_with, LpOptions};

use crate::error::{Error, Result};

/// Sparse linear row `sum coeffs[k].1 * x[coeffs[k].0]` against `rhs`.
#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

impl Row {
    /// Builds a row, merging repeated indices and dropping exact zeros.
    pub fn new(mut coeffs: Vec<(usize, f64)>, rhs: f64) -> Self {
        coeffs.sort_by_key(|c| c.0);
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(coeffs.len());
        for (i, v) in coeffs {
            match out.last_mut() {
                Some(last) if last.0 == i => last.1 += v,
                _ => out.push((i, v)),
            }
        }
        out.retain(|c| c.1 != 0.0);
        Row { coeffs: out, rhs }
    }

    pub fn dot(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(i, v)| v * x[i]).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Min,
    Max,
}

/// `sense c'x` subject to `eq` rows (`= rhs`), `ineq` rows (`<= rhs`) and
/// variable bounds. Rows flagged `lazy` are enforced by row generation.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub sense: Sense,
    pub eq: Vec<Row>,
    pub ineq: Vec<Row>,
    pub lazy: Vec<bool>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LinearProgram {
    pub fn new(n: usize, sense: Sense) -> Self {
        LinearProgram {
            objective: vec![0.0; n],
            sense,
            eq: Vec::new(),
            ineq: Vec::new(),
            lazy: Vec::new(),
            lower: vec![0.0; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_eq(&mut self, row: Row) {
        self.eq.push(row);
    }

    pub fn add_le(&mut self, row: Row) {
        self.ineq.push(row);
        self.lazy.push(false);
    }

    /// Adds `row >= rhs` as `-row <= -rhs`.
    pub fn add_ge(&mut self, row: Row) {
        self.add_le(negate(&row));
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_vars();
        if self.lower.len() != n || self.upper.len() != n || self.lazy.len() != self.ineq.len() {
            return Err(Error::InvalidInput("inconsistent linear program dimensions".into()));
        }
        if self.objective.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("objective has non-finite coefficients".into()));
        }
        for (l, u) in self.lower.iter().zip(&self.upper) {
            if l.is_nan() || u.is_nan() || *l == f64::INFINITY || *u == f64::NEG_INFINITY {
                return Err(Error::InvalidInput("invalid variable bound".into()));
            }
        }
        for r in self.eq.iter().chain(&self.ineq) {
            if !r.rhs.is_finite() || r.coeffs.iter().any(|&(i, v)| i >= n || !v.is_finite()) {
                return Err(Error::InvalidInput("constraint row is malformed".into()));
            }
        }
        Ok(())
    }
}

pub(crate) fn negate(row: &Row) -> Row {
    Row { coeffs: row.coeffs.iter().map(|&(i, v)| (i, -v)).collect(), rhs: -row.rhs }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution {
    pub value: f64,
    pub x: Vec<f64>,
    /// Row multipliers of the minimization form (`c` negated for `Max`).
    pub duals_eq: Vec<f64>,
    pub duals_ineq: Vec<f64>,
    pub iterations: usize,
    /// Inequality rows that were active in the final program (all rows when none are lazy).
    pub rows_used: usize,
}

impl LpSolution {
    /// Lagrangian dual bound implied by the returned multipliers, in the
    /// caller's sense. Equals `value` at an optimal basis.
    pub fn dual_bound(&self, lp: &LinearProgram) -> f64 {
        let s = match lp.sense {
            Sense::Min => 1.0,
            Sense::Max => -1.0,
        };
        let mut d: Vec<f64> = lp.objective.iter().map(|c| s * c).collect();
        let mut val = 0.0;
        for (r, y) in lp.eq.iter().zip(&self.duals_eq) {
            val += y * r.rhs;
            for &(i, a) in &r.coeffs {
                d[i] -= y * a;
            }
        }
        for (r, y) in lp.ineq.iter().zip(&self.duals_ineq) {
            val += y * r.rhs;
            for &(i, a) in &r.coeffs {
                d[i] -= y * a;
            }
        }
        for (j, dj) in d.iter().enumerate() {
            if dj.abs() < 1e-9 {
                continue;
            }
            let bound = if *dj > 0.0 { lp.lower[j] } else { lp.upper[j] };
            val += dj * bound;
        }
        s * val
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome {
    Optimal(LpSolution),
    Infeasible,
    Unbounded,
}

impl LpOutcome {
    pub fn value(&self) -> Option<f64> {
        match self {
            LpOutcome::Optimal(s) => Some(s.value),
            _ => None,
        }
    }
}

/// Label attached to each constraint row, used for diagnostics and to split
/// data rows from structural rows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RowKind {
    SumToOne,
    Data,
    Shape,
    Logical,
    Invariance,
    Restriction,
}

/// Constraint rows without an objective: the feasible set shared by the bound
/// programs and the inference criterion.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintSystem {
    pub n_vars: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub eq: Vec<(RowKind, Row)>,
    /// `<=` rows.
    pub ineq: Vec<(RowKind, Row)>,
}

impl ConstraintSystem {
    pub fn new(n_vars: usize, lower: f64, upper: f64) -> Self {
        ConstraintSystem {
            n_vars,
            lower: vec![lower; n_vars],
            upper: vec![upper; n_vars],
            eq: Vec::new(),
            ineq: Vec::new(),
        }
    }

    pub fn push_eq(&mut self, kind: RowKind, row: Row) {
        self.eq.push((kind, row));
    }

    pub fn push_le(&mut self, kind: RowKind, row: Row) {
        self.ineq.push((kind, row));
    }

    pub fn push_ge(&mut self, kind: RowKind, row: Row) {
        self.ineq.push((kind, negate(&row)));
    }

    pub fn count(&self, kind: RowKind) -> usize {
        self.eq.iter().chain(&self.ineq).filter(|(k, _)| *k == kind).count()
    }

    /// Equality rows of the given kind, in insertion order.
    pub fn eq_rows(&self, kind: RowKind) -> Vec<Row> {
        self.eq.iter().filter(|(k, _)| *k == kind).map(|(_, r)| r.clone()).collect()
    }

    /// The system with the equality rows of `kind` removed.
    pub fn without_eq(&self, kind: RowKind) -> ConstraintSystem {
        let mut out = self.clone();
        out.eq.retain(|(k, _)| *k != kind);
        out
    }

    /// Linear program over this system; shape rows are generated lazily.
    pub fn to_lp(&self, objective: &[f64], sense: Sense) -> LinearProgram {
        LinearProgram {
            objective: objective.to_vec(),
            sense,
            eq: self.eq.iter().map(|(_, r)| r.clone()).collect(),
            ineq: self.ineq.iter().map(|(_, r)| r.clone()).collect(),
            lazy: self.ineq.iter().map(|(k, _)| *k == RowKind::Shape).collect(),
            lower: self.lower.clone(),
            upper: self.upper.clone(),
        }
    }

    /// Largest violation of any row or bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut v: f64 = 0.0;
        for (_, r) in &self.eq {
            v = v.max((r.dot(x) - r.rhs).abs());
        }
        for (_, r) in &self.ineq {
            v = v.max(r.dot(x) - r.rhs);
        }
        for (j, &xj) in x.iter().enumerate() {
            v = v.max(self.lower[j] - xj).max(xj - self.upper[j]);
        }
        v
    }
}
