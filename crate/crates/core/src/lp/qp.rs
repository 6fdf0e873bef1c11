//! Least-squares over a polyhedron by operator splitting (ADMM) with a final
//! active-set polish.

use nalgebra::{Cholesky, DMatrix, DVector};

use super::{solve_lp, LinearProgram, LpOutcome, Row, Sense};
use crate::error::{Error, Result};

/// `min ||b - A x||^2` with `b` held in the `rhs` of each residual row.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticProgram {
    pub n_vars: usize,
    pub residuals: Vec<Row>,
    pub eq: Vec<Row>,
    /// `<=` rows.
    pub ineq: Vec<Row>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QpOptions {
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub max_iter: usize,
    pub rho: f64,
    pub sigma: f64,
    pub alpha: f64,
    /// Residual threshold under which `b` counts as attainable.
    pub zero_tol: f64,
}

impl Default for QpOptions {
    fn default() -> Self {
        QpOptions {
            eps_abs: 1e-8,
            eps_rel: 1e-8,
            max_iter: 50_000,
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            zero_tol: 1e-9,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QpSolution {
    pub value: f64,
    pub x: Vec<f64>,
    pub iterations: usize,
    /// The target was attainable and the value is exactly zero.
    pub exact_zero: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub enum QpOutcome {
    Optimal(QpSolution),
    Infeasible,
}

impl QuadraticProgram {
    fn feasibility_lp(&self, with_target: bool) -> LinearProgram {
        let mut lp = LinearProgram::new(self.n_vars, Sense::Min);
        lp.lower = self.lower.clone();
        lp.upper = self.upper.clone();
        lp.eq = self.eq.clone();
        if with_target {
            lp.eq.extend(self.residuals.iter().cloned());
        }
        lp.ineq = self.ineq.clone();
        lp.lazy = vec![true; self.ineq.len()];
        lp
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.residuals.iter().map(|r| (r.rhs - r.dot(x)).powi(2)).sum()
    }

    fn max_violation(&self, x: &[f64]) -> f64 {
        let mut v: f64 = 0.0;
        for r in &self.eq {
            v = v.max((r.dot(x) - r.rhs).abs());
        }
        for r in &self.ineq {
            v = v.max(r.dot(x) - r.rhs);
        }
        for (j, &xj) in x.iter().enumerate() {
            v = v.max(self.lower[j] - xj).max(xj - self.upper[j]);
        }
        v
    }
}

pub fn solve_qp(qp: &QuadraticProgram, opts: &QpOptions) -> Result<QpOutcome> {
    let n = qp.n_vars;
    if qp.lower.len() != n || qp.upper.len() != n {
        return Err(Error::InvalidInput("inconsistent quadratic program dimensions".into()));
    }
    if let LpOutcome::Optimal(s) = solve_lp(&qp.feasibility_lp(true))? {
        if qp.objective(&s.x) <= opts.zero_tol.max(1e-12) * 10.0 {
            return Ok(QpOutcome::Optimal(QpSolution { value: 0.0, x: s.x, iterations: s.iterations, exact_zero: true }));
        }
    }
    let start = match solve_lp(&qp.feasibility_lp(false))? {
        LpOutcome::Optimal(s) => s.x,
        LpOutcome::Infeasible => return Ok(QpOutcome::Infeasible),
        LpOutcome::Unbounded => return Err(Error::NumericalFailure("feasibility LP unbounded".into())),
    };
    Admm::new(qp, opts).run(start)
}

struct Admm<'a> {
    qp: &'a QuadraticProgram,
    opts: QpOptions,
    n: usize,
    c_rows: Vec<Vec<(usize, f64)>>,
    l: Vec<f64>,
    u: Vec<f64>,
    p: DMatrix<f64>,
    q: DVector<f64>,
}

impl<'a> Admm<'a> {
    fn new(qp: &'a QuadraticProgram, opts: &QpOptions) -> Self {
        let n = qp.n_vars;
        let mut p = DMatrix::<f64>::zeros(n, n);
        let mut q = DVector::<f64>::zeros(n);
        for r in &qp.residuals {
            for &(i, a) in &r.coeffs {
                q[i] -= 2.0 * a * r.rhs;
                for &(k, b) in &r.coeffs {
                    p[(i, k)] += 2.0 * a * b;
                }
            }
        }
        let mut c_rows = Vec::new();
        let mut l = Vec::new();
        let mut u = Vec::new();
        for r in &qp.eq {
            c_rows.push(r.coeffs.clone());
            l.push(r.rhs);
            u.push(r.rhs);
        }
        for r in &qp.ineq {
            c_rows.push(r.coeffs.clone());
            l.push(f64::NEG_INFINITY);
            u.push(r.rhs);
        }
        for j in 0..n {
            if qp.lower[j].is_finite() || qp.upper[j].is_finite() {
                c_rows.push(vec![(j, 1.0)]);
                l.push(qp.lower[j]);
                u.push(qp.upper[j]);
            }
        }
        Admm { qp, opts: *opts, n, c_rows, l, u, p, q }
    }

    fn c_mul(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.c_rows.len(), self.c_rows.iter().map(|r| r.iter().map(|&(j, a)| a * x[j]).sum()))
    }

    fn ct_mul(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::<f64>::zeros(self.n);
        for (i, r) in self.c_rows.iter().enumerate() {
            if y[i] != 0.0 {
                for &(j, a) in r {
                    out[j] += a * y[i];
                }
            }
        }
        out
    }

    fn factor(&self, rho: &[f64]) -> Result<Cholesky<f64, nalgebra::Dyn>> {
        let mut k = self.p.clone();
        for j in 0..self.n {
            k[(j, j)] += self.opts.sigma;
        }
        for (i, r) in self.c_rows.iter().enumerate() {
            for &(a, va) in r {
                for &(b, vb) in r {
                    k[(a, b)] += rho[i] * va * vb;
                }
            }
        }
        Cholesky::new(k).ok_or_else(|| Error::NumericalFailure("ADMM system is not positive definite".into()))
    }

    fn run(&self, start: Vec<f64>) -> Result<QpOutcome> {
        let mc = self.c_rows.len();
        let rho_for = |base: f64, i: usize| if self.l[i] == self.u[i] { 1e3 * base } else { base };
        let mut rho_base = self.opts.rho;
        let mut rho: Vec<f64> = (0..mc).map(|i| rho_for(rho_base, i)).collect();
        let mut chol = self.factor(&rho)?;
        let mut x = DVector::from_vec(start);
        let mut z = self.c_mul(&x);
        let mut y = DVector::<f64>::zeros(mc);
        let a = self.opts.alpha;
        let mut converged = false;
        let mut iter = 0;
        while iter < self.opts.max_iter {
            iter += 1;
            let mut w = DVector::<f64>::zeros(mc);
            for i in 0..mc {
                w[i] = rho[i] * z[i] - y[i];
            }
            let rhs = &x * self.opts.sigma - &self.q + self.ct_mul(&w);
            let xt = chol.solve(&rhs);
            let zt = self.c_mul(&xt);
            let x_new = &xt * a + &x * (1.0 - a);
            let mut z_new = DVector::<f64>::zeros(mc);
            for i in 0..mc {
                let zr = a * zt[i] + (1.0 - a) * z[i];
                z_new[i] = (zr + y[i] / rho[i]).clamp(self.l[i], self.u[i]);
                y[i] += rho[i] * (zr - z_new[i]);
            }
            x = x_new;
            z = z_new;
            if iter % 10 != 0 {
                continue;
            }
            let cx = self.c_mul(&x);
            let px = &self.p * &x;
            let cty = self.ct_mul(&y);
            let r_prim = (&cx - &z).amax();
            let r_dual = (&px + &self.q + &cty).amax();
            let n_prim = cx.amax().max(z.amax());
            let n_dual = px.amax().max(cty.amax()).max(self.q.amax());
            let eps_p = self.opts.eps_abs + self.opts.eps_rel * n_prim;
            let eps_d = self.opts.eps_abs + self.opts.eps_rel * n_dual;
            if r_prim <= eps_p && r_dual <= eps_d {
                converged = true;
                break;
            }
            if iter % 100 == 0 {
                if let Some(s) = self.polish(&x, &y, iter) {
                    return Ok(QpOutcome::Optimal(s));
                }
            }
            if iter % 50 == 0 {
                let ratio = ((r_prim / n_prim.max(1e-30)) / (r_dual / n_dual.max(1e-30)).max(1e-30)).sqrt();
                let new_base = (rho_base * ratio).clamp(1e-6, 1e6);
                if !(0.2..=5.0).contains(&(new_base / rho_base)) {
                    rho_base = new_base;
                    rho = (0..mc).map(|i| rho_for(rho_base, i)).collect();
                    chol = self.factor(&rho)?;
                }
            }
        }
        if let Some(s) = self.polish(&x, &y, iter) {
            return Ok(QpOutcome::Optimal(s));
        }
        if !converged {
            return Err(Error::NonConvergence(iter));
        }
        let xs: Vec<f64> = x.iter().copied().collect();
        let value = self.qp.objective(&xs);
        Ok(QpOutcome::Optimal(QpSolution { value, x: xs, iterations: iter, exact_zero: false }))
    }

    fn polish(&self, x: &DVector<f64>, y: &DVector<f64>, iter: usize) -> Option<QpSolution> {
        let n = self.n;
        let cx = self.c_mul(x);
        let tol = 1e-7;
        let mut active: Vec<(usize, f64)> = Vec::new();
        for i in 0..self.c_rows.len() {
            let at_lower = y[i] < -tol || (self.l[i].is_finite() && cx[i] - self.l[i] < tol && y[i] <= 0.0);
            if self.l[i] == self.u[i] || at_lower {
                active.push((i, self.l[i]));
            } else if y[i] > tol || (self.u[i].is_finite() && self.u[i] - cx[i] < tol && y[i] >= 0.0) {
                active.push((i, self.u[i]));
            }
        }
        let na = active.len();
        let dim = n + na;
        let delta = 1e-9;
        let mut k = DMatrix::<f64>::zeros(dim, dim);
        let mut kreg = DMatrix::<f64>::zeros(dim, dim);
        for i in 0..n {
            for j in 0..n {
                k[(i, j)] = self.p[(i, j)];
            }
        }
        for (r, &(i, _)) in active.iter().enumerate() {
            for &(j, a) in &self.c_rows[i] {
                k[(n + r, j)] = a;
                k[(j, n + r)] = a;
            }
        }
        kreg.copy_from(&k);
        for i in 0..n {
            kreg[(i, i)] += delta;
        }
        for r in 0..na {
            kreg[(n + r, n + r)] -= delta;
        }
        let mut rhs = DVector::<f64>::zeros(dim);
        for i in 0..n {
            rhs[i] = -self.q[i];
        }
        for (r, &(_, v)) in active.iter().enumerate() {
            rhs[n + r] = v;
        }
        let lu = kreg.lu();
        let mut sol = lu.solve(&rhs)?;
        for _ in 0..5 {
            let res = &rhs - &k * &sol;
            let corr = lu.solve(&res)?;
            sol += corr;
        }
        let xp: Vec<f64> = sol.rows(0, n).iter().copied().collect();
        if xp.iter().any(|v| !v.is_finite()) {
            return None;
        }
        // multipliers must have the right sign for the active side
        for (r, &(i, v)) in active.iter().enumerate() {
            let mu = sol[n + r];
            if self.l[i] != self.u[i] {
                let at_lower = v == self.l[i];
                if (at_lower && mu > 1e-7) || (!at_lower && mu < -1e-7) {
                    return None;
                }
            }
        }
        if self.qp.max_violation(&xp) > 1e-9 {
            return None;
        }
        let mut grad = &self.p * DVector::from_vec(xp.clone()) + &self.q;
        for (r, &(i, _)) in active.iter().enumerate() {
            for &(j, a) in &self.c_rows[i] {
                grad[j] += a * sol[n + r];
            }
        }
        if grad.amax() > 1e-8 * (1.0 + self.q.amax()) {
            return None;
        }
        let value = self.qp.objective(&xp);
        Some(QpSolution { value, x: xp, iterations: iter, exact_zero: false })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn qp(n: usize) -> QuadraticProgram {
        QuadraticProgram {
            n_vars: n,
            residuals: Vec::new(),
            eq: Vec::new(),
            ineq: Vec::new(),
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    #[test]
    fn perfect_fit_is_exactly_zero() {
        let mut p = qp(2);
        p.residuals = vec![Row::new(vec![(0, 1.0)], 1.0), Row::new(vec![(1, 1.0)], 0.0)];
        let QpOutcome::Optimal(s) = solve_qp(&p, &QpOptions::default()).unwrap() else { panic!() };
        assert_eq!(s.value, 0.0);
        assert!(s.exact_zero);
    }

    #[test]
    fn projection_on_halfline() {
        let mut p = qp(1);
        p.residuals = vec![Row::new(vec![(0, 1.0)], 1.0)];
        p.ineq = vec![Row::new(vec![(0, 1.0)], 0.0)];
        let QpOutcome::Optimal(s) = solve_qp(&p, &QpOptions::default()).unwrap() else { panic!() };
        assert!((s.value - 1.0).abs() < 1e-8, "{}", s.value);
        assert!(s.x[0].abs() < 1e-7);
    }

    #[test]
    fn one_dimensional_box() {
        let mut p = qp(1);
        p.residuals = vec![Row::new(vec![(0, 1.0)], 1.0), Row::new(vec![(0, 1.0)], 1.0)];
        p.lower = vec![0.0];
        p.upper = vec![1.0];
        let QpOutcome::Optimal(s) = solve_qp(&p, &QpOptions::default()).unwrap() else { panic!() };
        assert!(s.value.abs() < 1e-8);
        assert!((s.x[0] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn contradictory_constraints() {
        let mut p = qp(1);
        p.residuals = vec![Row::new(vec![(0, 1.0)], 1.0)];
        p.ineq = vec![Row::new(vec![(0, 1.0)], 0.0), Row::new(vec![(0, -1.0)], -1.0)];
        assert_eq!(solve_qp(&p, &QpOptions::default()).unwrap(), QpOutcome::Infeasible);
    }

    #[test]
    fn interior_optimum_with_box() {
        // min (x - 0.3)^2 + (y - 2)^2 + (x + y - 1)^2, 0 <= x, y <= 1
        let mut p = qp(2);
        p.residuals = vec![
            Row::new(vec![(0, 1.0)], 0.3),
            Row::new(vec![(1, 1.0)], 2.0),
            Row::new(vec![(0, 1.0), (1, 1.0)], 1.0),
        ];
        p.lower = vec![0.0, 0.0];
        p.upper = vec![1.0, 1.0];
        // y = 1 active; then x minimizes (x-.3)^2 + x^2 -> x = .15
        let want = 0.15f64.powi(2) + 1.0 + 0.15f64.powi(2);
        let QpOutcome::Optimal(s) = solve_qp(&p, &QpOptions::default()).unwrap() else { panic!() };
        assert!((s.value - want).abs() < 1e-8, "{} vs {want}", s.value);
    }
}
