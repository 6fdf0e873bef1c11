//! Bounded-variable revised simplex with a dense basis inverse.
//!
//! Primal phases use Dantzig pricing with a Harris ratio test and fall back
//! to Bland's rule after a run of degenerate pivots. Lazy rows are appended to
//! an optimal basis and repaired with the dual simplex method.

use log::{debug, warn};
use nalgebra::DMatrix;

use super::{LinearProgram, LpOutcome, LpSolution, Sense};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LpOptions {
    pub feas_tol: f64,
    pub opt_tol: f64,
    /// Overrides the default cap of `10 * (rows + cols)^2` iterations.
    pub max_iter: Option<usize>,
    /// Lazy rows are only generated when there are more than this many.
    pub lazy_threshold: usize,
}

impl Default for LpOptions {
    fn default() -> Self {
        LpOptions { feas_tol: 1e-9, opt_tol: 1e-9, max_iter: None, lazy_threshold: 200 }
    }
}

const PIVOT_TOL: f64 = 1e-9;
const DEGENERATE_RUN: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum St {
    Basic,
    Lower,
    Upper,
    Zero,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum RowRef {
    Eq(usize),
    Ineq(usize),
}

struct Tableau {
    m: usize,
    cols: Vec<Vec<(usize, f64)>>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    cost: Vec<f64>,
    b: Vec<f64>,
    rows: Vec<RowRef>,
    basis: Vec<usize>,
    st: Vec<St>,
    x: Vec<f64>,
    binv: Vec<f64>,
    y: Vec<f64>,
    artificial: Vec<bool>,
    iterations: usize,
    max_iter: usize,
    since_refactor: usize,
    refactor_every: usize,
    bland: bool,
    degenerate: usize,
    feas_tol: f64,
    opt_tol: f64,
}

enum Ratio {
    Flip(f64),
    Pivot { r: usize, t: f64, to_upper: bool },
    Unbounded,
}

impl Tableau {
    fn new(lp: &LinearProgram, c: &[f64], eq_rows: &[usize], ineq_rows: &[usize], opts: &LpOptions, max_iter: usize) -> Self {
        let n = lp.n_vars();
        let mut rows = Vec::new();
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        let mut b = Vec::new();
        for &k in eq_rows {
            let i = rows.len();
            rows.push(RowRef::Eq(k));
            b.push(lp.eq[k].rhs);
            for &(j, a) in &lp.eq[k].coeffs {
                cols[j].push((i, a));
            }
        }
        for &k in ineq_rows {
            let i = rows.len();
            rows.push(RowRef::Ineq(k));
            b.push(lp.ineq[k].rhs);
            for &(j, a) in &lp.ineq[k].coeffs {
                cols[j].push((i, a));
            }
        }
        let m = rows.len();
        let mut t = Tableau {
            m,
            cols,
            lo: lp.lower.clone(),
            hi: lp.upper.clone(),
            cost: c.to_vec(),
            b,
            rows,
            basis: Vec::with_capacity(m),
            st: Vec::new(),
            x: Vec::new(),
            binv: Vec::new(),
            y: vec![0.0; m],
            artificial: vec![false; n],
            iterations: 0,
            max_iter,
            since_refactor: 0,
            refactor_every: 100.max(m / 2),
            bland: false,
            degenerate: 0,
            feas_tol: opts.feas_tol,
            opt_tol: opts.opt_tol,
        };
        for j in 0..n {
            let (s, v) = initial_state(t.lo[j], t.hi[j]);
            t.st.push(s);
            t.x.push(v);
        }
        let mut resid = t.b.clone();
        for j in 0..n {
            if t.x[j] != 0.0 {
                for &(i, a) in &t.cols[j] {
                    resid[i] -= a * t.x[j];
                }
            }
        }
        let mut diag = vec![1.0; m];
        for i in 0..m {
            let r = resid[i];
            let is_ineq = matches!(t.rows[i], RowRef::Ineq(_));
            if is_ineq {
                let s = t.push_col(vec![(i, 1.0)], 0.0, f64::INFINITY, 0.0, false);
                if r >= -t.feas_tol {
                    t.st[s] = St::Basic;
                    t.x[s] = r.max(0.0);
                    t.basis.push(s);
                    continue;
                }
                t.st[s] = St::Lower;
                t.x[s] = 0.0;
            }
            let sign = if r >= 0.0 { 1.0 } else { -1.0 };
            let a = t.push_col(vec![(i, sign)], 0.0, f64::INFINITY, 0.0, true);
            t.st[a] = St::Basic;
            t.x[a] = r.abs();
            t.basis.push(a);
            diag[i] = sign;
        }
        t.binv = vec![0.0; m * m];
        for i in 0..m {
            t.binv[i * m + i] = 1.0 / diag[i];
        }
        t
    }

    fn push_col(&mut self, col: Vec<(usize, f64)>, lo: f64, hi: f64, cost: f64, artificial: bool) -> usize {
        self.cols.push(col);
        self.lo.push(lo);
        self.hi.push(hi);
        self.cost.push(cost);
        self.st.push(St::Lower);
        self.x.push(0.0);
        self.artificial.push(artificial);
        self.cols.len() - 1
    }

    fn ncols(&self) -> usize {
        self.cols.len()
    }

    fn compute_y(&mut self) {
        let m = self.m;
        let mut y = vec![0.0; m];
        for r in 0..m {
            let cb = self.cost[self.basis[r]];
            if cb != 0.0 {
                let row = &self.binv[r * m..(r + 1) * m];
                for i in 0..m {
                    y[i] += cb * row[i];
                }
            }
        }
        self.y = y;
    }

    fn reduced_cost(&self, j: usize) -> f64 {
        let mut d = self.cost[j];
        for &(i, a) in &self.cols[j] {
            d -= self.y[i] * a;
        }
        d
    }

    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        let mut alpha = vec![0.0; m];
        for &(i, a) in &self.cols[j] {
            for r in 0..m {
                alpha[r] += self.binv[r * m + i] * a;
            }
        }
        alpha
    }

    fn row_alpha(&self, r: usize, j: usize) -> f64 {
        let m = self.m;
        self.cols[j].iter().map(|&(i, a)| self.binv[r * m + i] * a).sum()
    }

    /// Replaces the basic variable in row `r` by column `q`; `d_q` is the
    /// reduced cost of `q` before the pivot.
    fn pivot(&mut self, r: usize, q: usize, alpha: &[f64], d_q: f64) {
        let m = self.m;
        let pr = alpha[r];
        let (head, rest) = self.binv.split_at_mut(r * m);
        let (prow, tail) = rest.split_at_mut(m);
        for v in prow.iter_mut() {
            *v /= pr;
        }
        for (i, &ai) in alpha.iter().enumerate() {
            if i == r || ai == 0.0 {
                continue;
            }
            let row = if i < r {
                &mut head[i * m..(i + 1) * m]
            } else {
                &mut tail[(i - r - 1) * m..(i - r) * m]
            };
            for (v, p) in row.iter_mut().zip(prow.iter()) {
                *v -= ai * p;
            }
        }
        for (yi, p) in self.y.iter_mut().zip(prow.iter()) {
            *yi += d_q * p;
        }
        let leaving = self.basis[r];
        self.basis[r] = q;
        self.st[q] = St::Basic;
        debug_assert!(self.st[leaving] != St::Basic);
        self.since_refactor += 1;
    }

    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        self.since_refactor = 0;
        if m == 0 {
            return Ok(());
        }
        let mut bm = DMatrix::<f64>::zeros(m, m);
        for (r, &j) in self.basis.iter().enumerate() {
            for &(i, a) in &self.cols[j] {
                bm[(i, r)] = a;
            }
        }
        let inv = bm
            .try_inverse()
            .ok_or_else(|| Error::NumericalFailure("basis matrix became singular".into()))?;
        for r in 0..m {
            for i in 0..m {
                self.binv[r * m + i] = inv[(r, i)];
            }
        }
        let mut resid = self.b.clone();
        for j in 0..self.ncols() {
            if self.st[j] != St::Basic && self.x[j] != 0.0 {
                for &(i, a) in &self.cols[j] {
                    resid[i] -= a * self.x[j];
                }
            }
        }
        for r in 0..m {
            let row = &self.binv[r * m..(r + 1) * m];
            self.x[self.basis[r]] = row.iter().zip(&resid).map(|(p, q)| p * q).sum();
        }
        self.compute_y();
        Ok(())
    }

    fn tick(&mut self) -> Result<()> {
        self.iterations += 1;
        if self.iterations > self.max_iter {
            return Err(Error::NumericalFailure(format!(
                "simplex iteration cap of {} reached",
                self.max_iter
            )));
        }
        if self.since_refactor >= self.refactor_every {
            self.refactor()?;
        }
        Ok(())
    }

    fn note_step(&mut self, t: f64) {
        if t <= 1e-12 {
            self.degenerate += 1;
            if self.degenerate > DEGENERATE_RUN && !self.bland {
                debug!("switching to Bland's rule after {} degenerate pivots", self.degenerate);
                self.bland = true;
            }
        } else {
            self.degenerate = 0;
            self.bland = false;
        }
    }

    /// Entering column and direction (+1 increase, -1 decrease).
    fn price(&self) -> Option<(usize, f64, f64)> {
        let mut best: Option<(usize, f64, f64)> = None;
        for j in 0..self.ncols() {
            let s = self.st[j];
            if s == St::Basic || self.lo[j] == self.hi[j] {
                continue;
            }
            let d = self.reduced_cost(j);
            let dir = match s {
                St::Lower if d < -self.opt_tol => 1.0,
                St::Upper if d > self.opt_tol => -1.0,
                St::Zero if d.abs() > self.opt_tol => -d.signum(),
                _ => continue,
            };
            if self.bland {
                return Some((j, dir, d));
            }
            if best.is_none_or(|b| d.abs() > b.2.abs()) {
                best = Some((j, dir, d));
            }
        }
        best
    }

    fn ratio(&self, q: usize, dir: f64, alpha: &[f64]) -> Ratio {
        let tol = self.feas_tol;
        let flip = self.hi[q] - self.lo[q];
        let mut theta_max = f64::INFINITY;
        // pass 1: step allowed with bounds relaxed by the tolerance
        for r in 0..self.m {
            let delta = -dir * alpha[r];
            let j = self.basis[r];
            if delta < -PIVOT_TOL && self.lo[j].is_finite() {
                theta_max = theta_max.min((self.x[j] - self.lo[j] + tol) / -delta);
            } else if delta > PIVOT_TOL && self.hi[j].is_finite() {
                theta_max = theta_max.min((self.hi[j] - self.x[j] + tol) / delta);
            }
        }
        if flip.is_finite() && flip <= theta_max {
            return Ratio::Flip(flip);
        }
        if theta_max == f64::INFINITY {
            return Ratio::Unbounded;
        }
        let mut best: Option<(usize, f64, f64, bool)> = None;
        for r in 0..self.m {
            let delta = -dir * alpha[r];
            let j = self.basis[r];
            let (t, to_upper) = if delta < -PIVOT_TOL && self.lo[j].is_finite() {
                ((self.x[j] - self.lo[j]) / -delta, false)
            } else if delta > PIVOT_TOL && self.hi[j].is_finite() {
                ((self.hi[j] - self.x[j]) / delta, true)
            } else {
                continue;
            };
            if t > theta_max {
                continue;
            }
            let t = t.max(0.0);
            let better = match best {
                None => true,
                Some((br, bt, bd, _)) => {
                    if self.bland {
                        t < bt - 1e-12 || (t <= bt + 1e-12 && self.basis[r] < self.basis[br])
                    } else {
                        delta.abs() > bd
                    }
                }
            };
            if better {
                best = Some((r, t, delta.abs(), to_upper));
            }
        }
        match best {
            Some((r, t, _, to_upper)) => Ratio::Pivot { r, t, to_upper },
            None => Ratio::Unbounded,
        }
    }

    /// Primal simplex from a primal feasible basis. Returns `false` when unbounded.
    fn primal(&mut self) -> Result<bool> {
        self.compute_y();
        loop {
            let Some((q, dir, d_q)) = self.price() else {
                return Ok(true);
            };
            let alpha = self.ftran(q);
            match self.ratio(q, dir, &alpha) {
                Ratio::Unbounded => return Ok(false),
                Ratio::Flip(t) => {
                    self.step(q, dir, t, &alpha);
                    self.st[q] = if dir > 0.0 { St::Upper } else { St::Lower };
                    self.x[q] = if dir > 0.0 { self.hi[q] } else { self.lo[q] };
                    self.note_step(t);
                }
                Ratio::Pivot { r, t, to_upper } => {
                    self.step(q, dir, t, &alpha);
                    let leaving = self.basis[r];
                    self.st[leaving] = if to_upper { St::Upper } else { St::Lower };
                    self.x[leaving] = if to_upper { self.hi[leaving] } else { self.lo[leaving] };
                    self.pivot(r, q, &alpha, d_q);
                    self.note_step(t);
                }
            }
            self.tick()?;
        }
    }

    fn step(&mut self, q: usize, dir: f64, t: f64, alpha: &[f64]) {
        if t == 0.0 {
            return;
        }
        self.x[q] += dir * t;
        for r in 0..self.m {
            if alpha[r] != 0.0 {
                let j = self.basis[r];
                self.x[j] -= dir * t * alpha[r];
            }
        }
    }

    fn infeasibility(&self, j: usize) -> f64 {
        (self.lo[j] - self.x[j]).max(self.x[j] - self.hi[j]).max(0.0)
    }

    /// Dual simplex from a dual feasible basis. Returns `false` when the
    /// primal problem is infeasible.
    fn dual(&mut self) -> Result<bool> {
        self.compute_y();
        loop {
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.m {
                let v = self.infeasibility(self.basis[r]);
                if v > self.feas_tol {
                    let better = match leave {
                        None => true,
                        Some((br, bv)) => {
                            if self.bland {
                                self.basis[r] < self.basis[br]
                            } else {
                                v > bv
                            }
                        }
                    };
                    if better {
                        leave = Some((r, v));
                    }
                }
            }
            let Some((r, _)) = leave else {
                return Ok(true);
            };
            let jr = self.basis[r];
            let to_lower = self.x[jr] < self.lo[jr];
            let bound = if to_lower { self.lo[jr] } else { self.hi[jr] };
            let mut best: Option<(usize, f64, f64, f64)> = None;
            for j in 0..self.ncols() {
                let s = self.st[j];
                if s == St::Basic || self.lo[j] == self.hi[j] {
                    continue;
                }
                let a = self.row_alpha(r, j);
                if a.abs() <= PIVOT_TOL {
                    continue;
                }
                // x_r moves by -a per unit increase of x_j
                let ok = match s {
                    St::Lower => (to_lower && a < 0.0) || (!to_lower && a > 0.0),
                    St::Upper => (to_lower && a > 0.0) || (!to_lower && a < 0.0),
                    St::Zero => true,
                    St::Basic => false,
                };
                if !ok {
                    continue;
                }
                let d = self.reduced_cost(j);
                let ratio = (d / a).abs();
                let better = match best {
                    None => true,
                    Some((bj, br, ba, _)) => {
                        if self.bland {
                            ratio < br - 1e-12 || (ratio <= br + 1e-12 && j < bj)
                        } else {
                            ratio < br - 1e-12 || (ratio <= br + 1e-12 && a.abs() > ba)
                        }
                    }
                };
                if better {
                    best = Some((j, ratio, a.abs(), d));
                }
            }
            let Some((q, _, _, d_q)) = best else {
                return Ok(false);
            };
            let alpha = self.ftran(q);
            let dq = (self.x[jr] - bound) / alpha[r];
            self.x[q] += dq;
            for k in 0..self.m {
                if alpha[k] != 0.0 {
                    let j = self.basis[k];
                    self.x[j] -= alpha[k] * dq;
                }
            }
            self.x[jr] = bound;
            self.st[jr] = if to_lower { St::Lower } else { St::Upper };
            self.pivot(r, q, &alpha, d_q);
            self.note_step(dq.abs());
            self.tick()?;
        }
    }

    /// Appends `coeffs . x <= rhs` with its slack basic.
    fn add_row(&mut self, k: usize, coeffs: &[(usize, f64)], rhs: f64) {
        let m = self.m;
        let i = m;
        let mut rb = vec![0.0; m];
        let mut pos = vec![usize::MAX; self.ncols()];
        for (r, &j) in self.basis.iter().enumerate() {
            pos[j] = r;
        }
        let mut lhs = 0.0;
        for &(j, a) in coeffs {
            self.cols[j].push((i, a));
            lhs += a * self.x[j];
            if pos[j] != usize::MAX {
                rb[pos[j]] = a;
            }
        }
        let mut nb = vec![0.0; (m + 1) * (m + 1)];
        for r in 0..m {
            nb[r * (m + 1)..r * (m + 1) + m].copy_from_slice(&self.binv[r * m..(r + 1) * m]);
        }
        for r in 0..m {
            if rb[r] != 0.0 {
                for c in 0..m {
                    nb[m * (m + 1) + c] -= rb[r] * self.binv[r * m + c];
                }
            }
        }
        nb[m * (m + 1) + m] = 1.0;
        self.binv = nb;
        self.m += 1;
        self.b.push(rhs);
        self.rows.push(RowRef::Ineq(k));
        self.y.push(0.0);
        let s = self.push_col(vec![(i, 1.0)], 0.0, f64::INFINITY, 0.0, false);
        self.st[s] = St::Basic;
        self.x[s] = rhs - lhs;
        self.basis.push(s);
    }

    fn phase1_objective(&self) -> f64 {
        (0..self.ncols()).filter(|&j| self.artificial[j]).map(|j| self.x[j]).sum()
    }

    fn max_primal_infeasibility(&self) -> f64 {
        self.basis.iter().map(|&j| self.infeasibility(j)).fold(0.0, f64::max)
    }
}

fn initial_state(lo: f64, hi: f64) -> (St, f64) {
    if lo.is_finite() {
        (St::Lower, lo)
    } else if hi.is_finite() {
        (St::Upper, hi)
    } else {
        (St::Zero, 0.0)
    }
}

pub fn solve_lp(lp: &LinearProgram) -> Result<LpOutcome> {
    solve_lp_with(lp, &LpOptions::default())
}

pub fn solve_lp_with(lp: &LinearProgram, opts: &LpOptions) -> Result<LpOutcome> {
    lp.validate()?;
    let n = lp.n_vars();
    for j in 0..n {
        if lp.lower[j] > lp.upper[j] + opts.feas_tol {
            return Ok(LpOutcome::Infeasible);
        }
    }
    let mut eq_rows = Vec::new();
    for (k, r) in lp.eq.iter().enumerate() {
        if r.is_zero() {
            if r.rhs.abs() > opts.feas_tol {
                return Ok(LpOutcome::Infeasible);
            }
            warn!("dropping empty equality row {k}");
            continue;
        }
        eq_rows.push(k);
    }
    let mut active = Vec::new();
    let mut pending = Vec::new();
    let lazy_count = lp.lazy.iter().filter(|&&l| l).count();
    let use_lazy = lazy_count > opts.lazy_threshold;
    for (k, r) in lp.ineq.iter().enumerate() {
        if r.is_zero() {
            if r.rhs < -opts.feas_tol {
                return Ok(LpOutcome::Infeasible);
            }
            warn!("dropping empty inequality row {k}");
            continue;
        }
        if use_lazy && lp.lazy[k] {
            pending.push(k);
        } else {
            active.push(k);
        }
    }
    let sign = match lp.sense {
        Sense::Min => 1.0,
        Sense::Max => -1.0,
    };
    let c: Vec<f64> = lp.objective.iter().map(|v| sign * v).collect();
    let dim = eq_rows.len() + active.len() + pending.len() + n;
    let max_iter = opts.max_iter.unwrap_or_else(|| 10usize.saturating_mul(dim.saturating_mul(dim)).max(1000));

    let mut t = Tableau::new(lp, &c, &eq_rows, &active, opts, max_iter);
    let real_cost = t.cost.clone();
    // phase 1
    for j in 0..t.ncols() {
        t.cost[j] = if t.artificial[j] { 1.0 } else { 0.0 };
    }
    if t.artificial.iter().any(|&a| a) {
        if !t.primal()? {
            return Err(Error::NumericalFailure("phase 1 reported unbounded".into()));
        }
        t.refactor()?;
        let scale = 1.0f64.max(t.b.iter().fold(0.0, |a: f64, v| a.max(v.abs())));
        if t.phase1_objective() > opts.feas_tol.max(1e-8) * scale {
            return Ok(LpOutcome::Infeasible);
        }
    }
    for j in 0..t.ncols() {
        if t.artificial[j] {
            t.hi[j] = 0.0;
            t.cost[j] = 0.0;
            if t.st[j] != St::Basic {
                t.st[j] = St::Lower;
                t.x[j] = 0.0;
            }
        } else {
            t.cost[j] = real_cost.get(j).copied().unwrap_or(0.0);
        }
    }
    t.bland = false;
    t.degenerate = 0;
    if !t.primal()? {
        if pending.is_empty() {
            return Ok(LpOutcome::Unbounded);
        }
        debug!("relaxation unbounded; retrying with every row active");
        let mut all = LpOptions { ..*opts };
        all.lazy_threshold = usize::MAX;
        return solve_lp_with(lp, &all);
    }
    loop {
        t.refactor()?;
        if t.max_primal_infeasibility() > 1e-7 {
            if !t.dual()? {
                return Ok(LpOutcome::Infeasible);
            }
            if !t.primal()? {
                return Ok(LpOutcome::Unbounded);
            }
            continue;
        }
        let mut violated: Vec<(f64, usize)> = pending
            .iter()
            .filter_map(|&k| {
                let r = &lp.ineq[k];
                let v = r.dot(&t.x[..n]) - r.rhs;
                (v > opts.feas_tol * (1.0 + r.rhs.abs())).then_some((v, k))
            })
            .collect();
        if violated.is_empty() {
            break;
        }
        violated.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let batch = 50.max(t.m / 4);
        violated.truncate(batch);
        let mut added: Vec<usize> = violated.iter().map(|v| v.1).collect();
        added.sort_unstable();
        pending.retain(|k| added.binary_search(k).is_err());
        for &k in &added {
            t.add_row(k, &lp.ineq[k].coeffs, lp.ineq[k].rhs);
        }
        t.refactor_every = 100.max(t.m / 2);
        if !t.dual()? {
            return Ok(LpOutcome::Infeasible);
        }
        if !t.primal()? {
            return Ok(LpOutcome::Unbounded);
        }
    }
    let x: Vec<f64> = t.x[..n].to_vec();
    let value = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    let mut duals_eq = vec![0.0; lp.eq.len()];
    let mut duals_ineq = vec![0.0; lp.ineq.len()];
    for (i, r) in t.rows.iter().enumerate() {
        match *r {
            RowRef::Eq(k) => duals_eq[k] = t.y[i],
            RowRef::Ineq(k) => duals_ineq[k] = t.y[i],
        }
    }
    let rows_used = t.rows.iter().filter(|r| matches!(r, RowRef::Ineq(_))).count();
    Ok(LpOutcome::Optimal(LpSolution { value, x, duals_eq, duals_ineq, iterations: t.iterations, rows_used }))
}
