//! Bound programs and their results, shared by the baseline and parametric
//! specifications.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lp::{solve_lp, ConstraintSystem, LinearProgram, LpOutcome, Row, RowKind, Sense};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "status")]
pub enum BoundStatus {
    Feasible { lower: f64, upper: f64 },
    Infeasible,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub n_vars: usize,
    pub n_eq: usize,
    pub n_ineq: usize,
    /// Simplex iterations of the min and max programs combined.
    pub iterations: usize,
    /// Largest constraint violation at either optimum.
    pub max_violation: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundResult {
    #[serde(flatten)]
    pub status: BoundStatus,
    pub diagnostics: Diagnostics,
}

impl BoundResult {
    pub fn interval(&self) -> Option<(f64, f64)> {
        match self.status {
            BoundStatus::Feasible { lower, upper } => Some((lower, upper)),
            BoundStatus::Infeasible => None,
        }
    }

    pub fn is_feasible(&self) -> bool {
        matches!(self.status, BoundStatus::Feasible { .. })
    }
}

/// A constraint system with a linear objective in dollars.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundProblem {
    pub system: ConstraintSystem,
    pub objective: Vec<f64>,
}

impl BoundProblem {
    pub fn lp(&self, sense: Sense) -> LinearProgram {
        self.system.to_lp(&self.objective, sense)
    }

    /// Data-moment rows in moment order `(P_{.|0}, P_{.|1})`.
    pub fn data_rows(&self) -> Vec<Row> {
        self.system.eq_rows(RowKind::Data)
    }

    pub fn solve(&self) -> Result<BoundResult> {
        let mut diag = Diagnostics {
            n_vars: self.system.n_vars,
            n_eq: self.system.eq.len(),
            n_ineq: self.system.ineq.len(),
            ..Diagnostics::default()
        };
        let mut ends = [0.0; 2];
        for (k, sense) in [Sense::Min, Sense::Max].into_iter().enumerate() {
            match solve_lp(&self.lp(sense))? {
                LpOutcome::Optimal(s) => {
                    diag.iterations += s.iterations;
                    diag.max_violation = diag.max_violation.max(self.system.max_violation(&s.x));
                    ends[k] = s.value;
                }
                LpOutcome::Infeasible => {
                    return Ok(BoundResult { status: BoundStatus::Infeasible, diagnostics: diag });
                }
                LpOutcome::Unbounded => {
                    return Err(Error::NumericalFailure("bound program is unbounded".into()));
                }
            }
        }
        let (lower, upper) = (ends[0], ends[1].max(ends[0]));
        Ok(BoundResult { status: BoundStatus::Feasible { lower, upper }, diagnostics: diag })
    }
}
