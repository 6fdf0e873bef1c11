//! Polynomial demand specifications (own-price O, additively separable AS,
//! pairwise nonseparable NS) with restrictions imposed on a finite price grid.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{ConstraintSystem, Row, RowKind};
use crate::model::{
    apply_voucher, cost_prices, cost_schedule, integration_segments, school_index, EnrollmentShares, Part,
    ProgramConfig, Segment, WelfareTarget, GOV, NONPART,
};
use crate::money::Money;
use crate::result::{BoundProblem, BoundResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    O,
    AS,
    NS,
}

impl Family {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "o" => Some(Family::O),
            "as" => Some(Family::AS),
            "ns" => Some(Family::NS),
            _ => None,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::O => "O",
            Family::AS => "AS",
            Family::NS => "NS",
        })
    }
}

pub const DEFAULT_GRID: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParametricSpec {
    pub family: Family,
    pub degree: usize,
    pub grid_points: usize,
}

impl ParametricSpec {
    pub fn new(family: Family, degree: usize) -> Self {
        ParametricSpec { family, degree, grid_points: DEFAULT_GRID }
    }

    pub fn with_grid(mut self, l: usize) -> Self {
        self.grid_points = l;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.degree == 0 {
            return Err(Error::InvalidInput("polynomial degree must be at least 1".into()));
        }
        if self.grid_points == 0 {
            return Err(Error::InvalidInput("grid needs at least one interval".into()));
        }
        Ok(())
    }
}

/// One basis function of a demand index, in prices scaled to `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Basis {
    /// `p_m^k`
    Mono { m: usize, k: usize },
    /// `p_j^kj * p_m^km`
    Bi { j: usize, kj: usize, m: usize, km: usize },
}

impl Basis {
    fn eval(&self, p: &[f64]) -> f64 {
        match *self {
            Basis::Mono { m, k } => p[m].powi(k as i32),
            Basis::Bi { j, kj, m, km } => p[j].powi(kj as i32) * p[m].powi(km as i32),
        }
    }
}

/// Coefficient positions: alternative `i` owns `offsets[i]..offsets[i + 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AlphaLayout {
    pub offsets: Vec<usize>,
    pub basis: Vec<Basis>,
}

impl AlphaLayout {
    pub fn new(family: Family, n_schools: usize, degree: usize) -> Self {
        let mut offsets = vec![0];
        let mut basis = Vec::new();
        for i in 0..n_schools + 2 {
            let voucher = i >= 2;
            if family == Family::NS && voucher {
                let j = i - 2;
                for m in (0..n_schools).filter(|&m| m != j) {
                    for kj in 0..=degree {
                        for km in 0..=degree {
                            basis.push(Basis::Bi { j, kj, m, km });
                        }
                    }
                }
            } else {
                for m in 0..n_schools {
                    for k in 0..=degree {
                        basis.push(Basis::Mono { m, k });
                    }
                }
            }
            offsets.push(basis.len());
        }
        AlphaLayout { offsets, basis }
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn n_alternatives(&self) -> usize {
        self.offsets.len() - 1
    }

    /// `q_i(p)` as a linear form in alpha.
    pub fn demand_at(&self, i: usize, p: &[f64]) -> Vec<(usize, f64)> {
        (self.offsets[i]..self.offsets[i + 1]).map(|b| (b, self.basis[b].eval(p))).collect()
    }

    /// `q_i(p)` for a given coefficient vector.
    pub fn demand_value(&self, alpha: &[f64], i: usize, p: &[f64]) -> f64 {
        self.demand_at(i, p).into_iter().map(|(b, v)| alpha[b] * v).sum()
    }
}

/// Per-school grid `{0, p_j(0)/L, ..., p_j(0)}`, deduplicated.
pub fn price_grid(config: &ProgramConfig, l: usize) -> Vec<Vec<Money>> {
    config
        .base_prices()
        .into_iter()
        .map(|p| {
            let mut g: Vec<Money> = (0..=l as i64).map(|s| Money::from_cents(p.cents() * s / l as i64)).collect();
            g.dedup();
            g
        })
        .collect()
}

/// `int_{a_lo}^{a_hi} (p + a)^k da`
pub fn poly_segment_integral(p: f64, k: usize, a_lo: f64, a_hi: f64) -> f64 {
    let e = k as i32 + 1;
    ((p + a_hi).powi(e) - (p + a_lo).powi(e)) / e as f64
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `int_{a_lo}^{a_hi} (p1 + a)^k1 (p2 + a)^k2 da` by double binomial expansion.
pub fn bipoly_segment_integral(p1: f64, k1: usize, p2: f64, k2: usize, a_lo: f64, a_hi: f64) -> f64 {
    let mut s = 0.0;
    for l1 in 0..=k1 {
        for l2 in 0..=k2 {
            let e = (l1 + l2 + 1) as i32;
            s += binom(k1, l1)
                * binom(k2, l2)
                * p1.powi((k1 - l1) as i32)
                * p2.powi((k2 - l2) as i32)
                * (a_hi.powi(e) - a_lo.powi(e))
                / e as f64;
        }
    }
    s
}

fn scaled(p: &[Money], scale: f64) -> Vec<f64> {
    p.iter().map(|x| x.dollars() / scale).collect()
}

fn diff(hi: Vec<(usize, f64)>, lo: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    hi.into_iter().chain(lo.into_iter().map(|(b, v)| (b, -v))).collect()
}

/// Constraint set over the grid, free coefficients.
pub fn build_constraints(
    spec: &ParametricSpec,
    config: &ProgramConfig,
    shares: &EnrollmentShares,
) -> Result<ConstraintSystem> {
    spec.validate()?;
    shares.check_against(config)?;
    let n = config.n_schools();
    let n_alt = n + 2;
    let layout = AlphaLayout::new(spec.family, n, spec.degree);
    let scale = config.price_scale();
    let grid: Vec<Vec<f64>> = price_grid(config, spec.grid_points).iter().map(|g| scaled(g, scale)).collect();
    let mut sys = ConstraintSystem::new(layout.dim(), f64::NEG_INFINITY, f64::INFINITY);
    let zero = vec![0.0; n];
    let at = |m: usize, v: f64| {
        let mut p = zero.clone();
        p[m] = v;
        p
    };
    let total = |p: &[f64]| -> Vec<(usize, f64)> { (0..n_alt).flat_map(|i| layout.demand_at(i, p)).collect() };

    // positivity: voucher schools along their own grid, g and n at zero prices
    for j in 0..n {
        for &g in &grid[j] {
            sys.push_ge(RowKind::Logical, Row::new(layout.demand_at(school_index(j), &at(j, g)), 0.0));
        }
    }
    for i in [GOV, NONPART] {
        sys.push_ge(RowKind::Logical, Row::new(layout.demand_at(i, &zero), 0.0));
    }
    sys.push_eq(RowKind::SumToOne, Row::new(total(&zero), 1.0));

    // total demand does not move along any price axis
    for m in 0..n {
        for w in grid[m].windows(2) {
            sys.push_eq(RowKind::Invariance, Row::new(diff(total(&at(m, w[1])), total(&at(m, w[0]))), 0.0));
        }
    }
    if spec.family == Family::NS {
        for j in 0..n {
            for m in (j + 1)..n {
                for wj in grid[j].windows(2) {
                    for wm in grid[m].windows(2) {
                        let pt = |a: f64, b: f64| {
                            let mut p = zero.clone();
                            p[j] = a;
                            p[m] = b;
                            total(&p)
                        };
                        let coeffs = diff(
                            diff(pt(wj[1], wm[1]), pt(wj[0], wm[1])),
                            diff(pt(wj[1], wm[0]), pt(wj[0], wm[0])),
                        );
                        sys.push_eq(RowKind::Invariance, Row::new(coeffs, 0.0));
                    }
                }
            }
        }
    }

    // weak substitutes: demand rises in every other voucher price
    for i in 0..n_alt {
        for m in (0..n).filter(|&m| school_index(m) != i) {
            let own = (i >= 2 && spec.family == Family::NS).then(|| i - 2);
            let levels: Vec<f64> = own.map_or(vec![0.0], |j| grid[j].clone());
            for &pj in &levels {
                for w in grid[m].windows(2) {
                    let mut lo = at(m, w[0]);
                    let mut hi = at(m, w[1]);
                    if let Some(j) = own {
                        lo[j] = pj;
                        hi[j] = pj;
                    }
                    sys.push_ge(RowKind::Shape, Row::new(diff(layout.demand_at(i, &hi), layout.demand_at(i, &lo)), 0.0));
                }
            }
        }
    }

    if spec.family == Family::O {
        for i in (0..n_alt).filter(|&i| i != GOV) {
            for m in (0..n).filter(|&m| school_index(m) != i) {
                for w in grid[m].windows(2) {
                    let d = |p: &[f64]| diff(layout.demand_at(i, p), layout.demand_at(GOV, p));
                    sys.push_eq(RowKind::Restriction, Row::new(diff(d(&at(m, w[1])), d(&at(m, w[0]))), 0.0));
                }
            }
        }
    }

    let p0 = scaled(&apply_voucher(config, Money::ZERO), scale);
    let p1 = scaled(&apply_voucher(config, config.tau_sq), scale);
    for (p, obs) in [(&p0, &shares.without), (&p1, &shares.with)] {
        for (i, &v) in obs.iter().enumerate() {
            sys.push_eq(RowKind::Data, Row::new(layout.demand_at(i, p), v));
        }
    }
    Ok(sys)
}

fn basis_segment_integral(b: &Basis, seg: &Segment, base: &[f64], p_tau: &[f64], scale: f64) -> f64 {
    let (lo, hi) = (seg.a_lo.dollars() / scale, seg.a_hi.dollars() / scale);
    let factor = |m: usize| if m < seg.pinned { (false, base[m]) } else { (true, p_tau[m]) };
    let v = match *b {
        Basis::Mono { m, k } => match factor(m) {
            (true, p) => poly_segment_integral(p, k, lo, hi),
            (false, p) => p.powi(k as i32) * (hi - lo),
        },
        Basis::Bi { j, kj, m, km } => match (factor(j), factor(m)) {
            ((true, pj), (true, pm)) => bipoly_segment_integral(pj, kj, pm, km, lo, hi),
            ((true, pj), (false, pm)) => pm.powi(km as i32) * poly_segment_integral(pj, kj, lo, hi),
            ((false, pj), (true, pm)) => pj.powi(kj as i32) * poly_segment_integral(pm, km, lo, hi),
            ((false, pj), (false, pm)) => pj.powi(kj as i32) * pm.powi(km as i32) * (hi - lo),
        },
    };
    v * scale
}

/// Objective coefficients in dollars.
pub fn build_objective(spec: &ParametricSpec, target: &WelfareTarget, config: &ProgramConfig) -> Result<Vec<f64>> {
    spec.validate()?;
    target.validate(config)?;
    let n = config.n_schools();
    let layout = AlphaLayout::new(spec.family, n, spec.degree);
    let scale = config.price_scale();
    let base = scaled(&config.base_prices(), scale);
    let mut c = vec![0.0; layout.dim()];
    for comp in target.components(config) {
        match comp.part {
            Part::Benefit => {
                let p_tau = scaled(&apply_voucher(config, comp.tau), scale);
                for seg in integration_segments(config, comp.tau, comp.kappa) {
                    for j in seg.pinned..n {
                        let i = school_index(j);
                        for b in layout.offsets[i]..layout.offsets[i + 1] {
                            c[b] += comp.sign * basis_segment_integral(&layout.basis[b], &seg, &base, &p_tau, scale);
                        }
                    }
                }
            }
            Part::Cost => {
                let p1 = scaled(&cost_prices(config, comp.tau, comp.kappa), scale);
                let c1 = cost_schedule(config, comp.tau, comp.kappa);
                let c0 = cost_schedule(config, Money::ZERO, None);
                for i in 0..n + 2 {
                    for (b, v) in layout.demand_at(i, &p1) {
                        c[b] += comp.sign * c1[i].dollars() * v;
                    }
                    for (b, v) in layout.demand_at(i, &base) {
                        c[b] -= comp.sign * c0[i].dollars() * v;
                    }
                }
            }
        }
    }
    Ok(c)
}

pub fn problem(
    spec: &ParametricSpec,
    target: &WelfareTarget,
    shares: &EnrollmentShares,
    config: &ProgramConfig,
) -> Result<BoundProblem> {
    let system = build_constraints(spec, config, shares)?;
    let objective = build_objective(spec, target, config)?;
    Ok(BoundProblem { system, objective })
}

pub fn bounds(
    spec: &ParametricSpec,
    target: &WelfareTarget,
    shares: &EnrollmentShares,
    config: &ProgramConfig,
) -> Result<BoundResult> {
    problem(spec, target, shares, config)?.solve()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{average_cost_direct, WelfareKind};
    use crate::result::BoundStatus;

    fn m(d: i64) -> Money {
        Money::from_dollars_int(d)
    }

    fn desk2() -> ProgramConfig {
        ProgramConfig::from_dollars(&[2000, 6000], 4000, 5000, 200).unwrap()
    }

    fn desk2_shares() -> EnrollmentShares {
        EnrollmentShares::new(vec![0.90, 0.02, 0.05, 0.03], vec![0.30, 0.01, 0.40, 0.29], 100, 100).unwrap()
    }

    #[test]
    fn grid_examples() {
        let g = price_grid(&ProgramConfig::from_dollars(&[0, 2000], 0, 0, 0).unwrap(), 4);
        assert_eq!(g[0], vec![Money::ZERO]);
        assert_eq!(g[1], [0, 500, 1000, 1500, 2000].map(m).to_vec());
        assert_eq!(price_grid(&desk2(), 1)[1], vec![m(0), m(6000)]);
    }

    #[test]
    fn integrals() {
        assert_eq!(poly_segment_integral(2000.0, 1, 0.0, 2000.0), 6_000_000.0);
        assert_eq!(poly_segment_integral(3.0, 0, 1.0, 4.5), 3.5);
        assert_eq!(poly_segment_integral(3.0, 2, 1.5, 1.5), 0.0);
        assert!((bipoly_segment_integral(1.0, 1, 2.0, 1, 0.0, 1.0) - 23.0 / 6.0).abs() < 1e-12);
        assert_eq!(bipoly_segment_integral(1.0, 0, 2.0, 0, 0.25, 1.0), 0.75);
        let a = bipoly_segment_integral(0.3, 3, 0.9, 0, 0.1, 0.7);
        assert!((a - poly_segment_integral(0.3, 3, 0.1, 0.7)).abs() < 1e-14);
    }

    #[test]
    fn dimensions() {
        assert_eq!(AlphaLayout::new(Family::AS, 2, 1).dim(), 16);
        assert_eq!(AlphaLayout::new(Family::AS, 3, 2).dim(), 5 * 3 * 3);
        assert_eq!(AlphaLayout::new(Family::NS, 3, 2).dim(), 3 * 2 * 9 + 2 * 3 * 3);
    }

    fn constant_alpha(layout: &AlphaLayout, q: &[f64]) -> Vec<f64> {
        let mut a = vec![0.0; layout.dim()];
        for (i, &v) in q.iter().enumerate() {
            let b = (layout.offsets[i]..layout.offsets[i + 1])
                .find(|&b| match layout.basis[b] {
                    Basis::Mono { k, .. } => k == 0,
                    Basis::Bi { kj, km, .. } => kj == 0 && km == 0,
                })
                .unwrap();
            a[b] = v;
        }
        a
    }

    #[test]
    fn constant_demand_benefit() {
        let cfg = desk2();
        let t = WelfareTarget::new(WelfareKind::AB, m(4000), None);
        for fam in [Family::AS, Family::NS] {
            let spec = ParametricSpec::new(fam, 2);
            let c = build_objective(&spec, &t, &cfg).unwrap();
            let a = constant_alpha(&AlphaLayout::new(fam, 2, 2), &[0.4, 0.1, 0.3, 0.2]);
            let v: f64 = c.iter().zip(&a).map(|(x, y)| x * y).sum();
            assert!((v - 1400.0).abs() < 1e-9, "{fam} {v}");
        }
        let t0 = WelfareTarget::new(WelfareKind::AB, m(0), None);
        let c0 = build_objective(&ParametricSpec::new(Family::AS, 3), &t0, &cfg).unwrap();
        assert!(c0.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn own_price_family_rejects_desk2() {
        for k in 1..=3 {
            let t = WelfareTarget::new(WelfareKind::AB, m(4000), None);
            let r = bounds(&ParametricSpec::new(Family::O, k), &t, &desk2_shares(), &desk2()).unwrap();
            assert_eq!(r.status, BoundStatus::Infeasible, "K={k}");
        }
    }

    #[test]
    fn cost_point_identified() {
        let cfg = desk2();
        let t = WelfareTarget::new(WelfareKind::AC, m(4000), None);
        let direct = average_cost_direct(&desk2_shares(), &cfg, m(4000), None).unwrap();
        for fam in [Family::AS, Family::NS] {
            for k in 1..=2 {
                let (lo, hi) =
                    bounds(&ParametricSpec::new(fam, k), &t, &desk2_shares(), &cfg).unwrap().interval().unwrap();
                assert!((lo - direct).abs() < 1e-6 && (hi - direct).abs() < 1e-6, "{fam} {k}: {lo} {hi}");
            }
        }
    }

    #[test]
    fn nested_in_degree_and_family() {
        let cfg = desk2();
        let t = WelfareTarget::new(WelfareKind::AB, m(4000), None);
        let get = |f, k| bounds(&ParametricSpec::new(f, k), &t, &desk2_shares(), &cfg).unwrap().interval().unwrap();
        let (a1, a2, n1) = (get(Family::AS, 1), get(Family::AS, 2), get(Family::NS, 1));
        assert!(a2.0 <= a1.0 + 1e-6 && a1.1 <= a2.1 + 1e-6, "{a1:?} {a2:?}");
        assert!(n1.0 <= a1.0 + 1e-6 && a1.1 <= n1.1 + 1e-6, "{a1:?} {n1:?}");
        assert!(a1.0 >= -1e-6 && a2.1 <= 4000.0 + 1e-6);
    }
}
