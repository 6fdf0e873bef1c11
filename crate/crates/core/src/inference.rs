//! Recentered subsampling: test statistics, critical values, confidence
//! intervals by test inversion and specification-test p-values.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{solve_qp, ConstraintSystem, QpOptions, QpOutcome, QuadraticProgram, Row, RowKind};
use crate::model::EnrollmentShares;
use crate::money::Money;
use crate::result::{BoundProblem, BoundStatus};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferenceConfig {
    pub alpha: f64,
    pub n_subsamples: usize,
    /// Overrides the `round(8 sqrt(N))` rule.
    pub subsample_size: Option<usize>,
    /// Step of the theta grid; defaults to `tau_sq / 300`.
    pub grid_step: Option<Money>,
    pub seed: u64,
    /// Use the observation weights; otherwise every student counts once.
    pub weighted: bool,
    /// Outward scan stops after this many consecutive rejections.
    pub stop_after: usize,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            alpha: 0.05,
            n_subsamples: 200,
            subsample_size: None,
            grid_step: None,
            seed: 0,
            weighted: true,
            stop_after: 3,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidInput(format!("alpha {} outside (0, 1)", self.alpha)));
        }
        if self.n_subsamples == 0 {
            return Err(Error::InvalidInput("need at least one subsample".into()));
        }
        if matches!(self.grid_step, Some(s) if s <= Money::ZERO) {
            return Err(Error::InvalidInput("grid step must be positive".into()));
        }
        if self.stop_after == 0 {
            return Err(Error::InvalidInput("stop_after must be positive".into()));
        }
        Ok(())
    }

    /// `N_s`, clipped to `[J + 2, N - 1]`.
    pub fn subsample_size_for(&self, n: usize, n_alternatives: usize) -> Result<usize> {
        if n < 2 {
            return Err(Error::InvalidInput("subsampling needs at least two students".into()));
        }
        let ns = self.subsample_size.unwrap_or_else(|| (8.0 * (n as f64).sqrt()).round() as usize);
        Ok(ns.max(n_alternatives).min(n - 1).max(1))
    }
}

/// One row of the micro data; imputed students span several rows of one group.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub group: usize,
    pub voucher: bool,
    pub choice: usize,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MicroData {
    pub n_alternatives: usize,
    pub observations: Vec<Observation>,
}

#[derive(Clone, Debug, PartialEq)]
struct Group {
    voucher: bool,
    rows: Vec<(usize, f64)>,
}

impl MicroData {
    pub fn new(n_alternatives: usize, observations: Vec<Observation>) -> Result<Self> {
        let d = MicroData { n_alternatives, observations };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        let mut arms = [false; 2];
        for o in &self.observations {
            if o.choice >= self.n_alternatives {
                return Err(Error::InvalidInput(format!("choice index {} out of range", o.choice)));
            }
            if !(o.weight.is_finite() && o.weight >= 0.0) {
                return Err(Error::InvalidInput(format!("weight {} is not a nonnegative number", o.weight)));
            }
            arms[o.voucher as usize] = true;
        }
        if !(arms[0] && arms[1]) {
            return Err(Error::InvalidInput("both voucher arms need observations".into()));
        }
        Ok(())
    }

    /// Groups in a canonical order that does not depend on row order.
    fn groups(&self) -> Result<Vec<Group>> {
        let mut by_id: BTreeMap<usize, Group> = BTreeMap::new();
        for o in &self.observations {
            let g = by_id.entry(o.group).or_insert(Group { voucher: o.voucher, rows: Vec::new() });
            if g.voucher != o.voucher {
                return Err(Error::InvalidInput(format!("group {} spans both voucher arms", o.group)));
            }
            g.rows.push((o.choice, o.weight));
        }
        let mut groups: Vec<Group> = by_id.into_values().collect();
        for g in &mut groups {
            g.rows.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        }
        groups.sort_by(|a, b| {
            a.voucher.cmp(&b.voucher).then_with(|| {
                a.rows
                    .iter()
                    .zip(&b.rows)
                    .map(|(x, y)| x.0.cmp(&y.0).then(x.1.total_cmp(&y.1)))
                    .find(|o| o.is_ne())
                    .unwrap_or(a.rows.len().cmp(&b.rows.len()))
            })
        });
        Ok(groups)
    }

    /// One unit-weight student per count, with counts `n_without`, `n_with`
    /// split by largest remainder so each arm totals exactly.
    pub fn from_shares(shares: &EnrollmentShares) -> Result<Self> {
        shares.validate()?;
        let mut obs = Vec::new();
        for (voucher, p, n) in [(false, &shares.without, shares.n_without), (true, &shares.with, shares.n_with)] {
            if n == 0 {
                return Err(Error::InvalidInput("share counts are needed to rebuild micro data".into()));
            }
            let raw: Vec<f64> = p.iter().map(|x| x * n as f64).collect();
            let mut counts: Vec<u64> = raw.iter().map(|x| x.floor() as u64).collect();
            let mut order: Vec<usize> = (0..p.len()).collect();
            order.sort_by(|&a, &b| (raw[b] - raw[b].floor()).total_cmp(&(raw[a] - raw[a].floor())).then(a.cmp(&b)));
            let short = n.saturating_sub(counts.iter().sum());
            for &j in order.iter().take(short as usize) {
                counts[j] += 1;
            }
            for (j, &c) in counts.iter().enumerate() {
                for _ in 0..c {
                    obs.push(Observation { group: obs.len(), voucher, choice: j, weight: 1.0 });
                }
            }
        }
        MicroData::new(shares.without.len(), obs)
    }

    pub fn n_students(&self) -> usize {
        let mut ids: Vec<usize> = self.observations.iter().map(|o| o.group).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }

    pub fn shares(&self, weighted: bool) -> Result<EnrollmentShares> {
        let groups = self.groups()?;
        let (s, n) = arm_shares(self.n_alternatives, groups.iter(), weighted);
        match (s[0].clone(), s[1].clone()) {
            (Some(a), Some(b)) => EnrollmentShares::new(a, b, n[0], n[1]),
            _ => Err(Error::InvalidInput("both voucher arms need positive weight".into())),
        }
    }
}

fn arm_shares<'a>(
    n_alt: usize,
    groups: impl Iterator<Item = &'a Group>,
    weighted: bool,
) -> ([Option<Vec<f64>>; 2], [u64; 2]) {
    let mut mass = [vec![0.0; n_alt], vec![0.0; n_alt]];
    let mut count = [0u64; 2];
    for g in groups {
        let z = g.voucher as usize;
        count[z] += 1;
        let total: f64 = g.rows.iter().map(|r| r.1).sum();
        for &(j, w) in &g.rows {
            let w = if weighted {
                w
            } else if total > 0.0 {
                w / total
            } else {
                0.0
            };
            mass[z][j] += w;
        }
    }
    let norm = |v: &Vec<f64>| {
        let t: f64 = v.iter().sum();
        (t > 0.0).then(|| v.iter().map(|x| x / t).collect())
    };
    ([norm(&mass[0]), norm(&mass[1])], count)
}

/// Bound problem split into structural rows, moment rows `A_1` and objective.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentSystem {
    pub structural: ConstraintSystem,
    pub a1: Vec<Row>,
    pub objective: Vec<f64>,
}

impl MomentSystem {
    pub fn from_problem(p: &BoundProblem) -> Self {
        MomentSystem {
            structural: p.system.without_eq(RowKind::Data),
            a1: p.data_rows(),
            objective: p.objective.clone(),
        }
    }

    fn qp(&self, b: &[f64], theta: Option<f64>) -> QuadraticProgram {
        let mut eq: Vec<Row> = self.structural.eq.iter().map(|(_, r)| r.clone()).collect();
        if let Some(t) = theta {
            let s = self.objective.iter().fold(0.0f64, |m, c| m.max(c.abs())).max(1.0);
            let coeffs = self.objective.iter().enumerate().map(|(i, &c)| (i, c / s)).collect();
            eq.push(Row::new(coeffs, t / s));
        }
        QuadraticProgram {
            n_vars: self.structural.n_vars,
            residuals: self.a1.iter().zip(b).map(|(r, &v)| Row { coeffs: r.coeffs.clone(), rhs: v }).collect(),
            eq,
            ineq: self.structural.ineq.iter().map(|(_, r)| r.clone()).collect(),
            lower: self.structural.lower.clone(),
            upper: self.structural.upper.clone(),
        }
    }

    /// `min ||b - A_1 x||^2`, or `None` when the structural rows (with the
    /// theta row) admit no point.
    fn fit(&self, b: &[f64], theta: Option<f64>) -> Result<Option<(f64, Vec<f64>)>> {
        match solve_qp(&self.qp(b, theta), &QpOptions::default())? {
            QpOutcome::Optimal(s) => Ok(Some((s.value.max(0.0), s.x))),
            QpOutcome::Infeasible => Ok(None),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TestStatistic {
    /// `N` times the least-squares value; infinite when no structural point exists.
    pub value: f64,
    pub nu: Option<Vec<f64>>,
}

pub fn test_statistic(data: &MicroData, sys: &MomentSystem, theta0: Option<f64>, cfg: &InferenceConfig) -> Result<TestStatistic> {
    let b = data.shares(cfg.weighted)?.moments();
    let n = data.n_students() as f64;
    Ok(match sys.fit(&b, theta0)? {
        Some((v, x)) => TestStatistic { value: n * v, nu: Some(x) },
        None => TestStatistic { value: f64::INFINITY, nu: None },
    })
}

fn draw(n: usize, ns: usize, seed: u64, l: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(l as u64);
    let mut idx = rand::seq::index::sample(&mut rng, n, ns).into_vec();
    idx.sort_unstable();
    idx
}

/// Recentered statistics of the `B` subsamples.
pub fn subsample_statistics(
    data: &MicroData,
    sys: &MomentSystem,
    theta0: Option<f64>,
    nu: &[f64],
    cfg: &InferenceConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let groups = data.groups()?;
    let n = groups.len();
    let ns = cfg.subsample_size_for(n, data.n_alternatives)?;
    let full = data.shares(cfg.weighted)?;
    let fitted: Vec<f64> = sys.a1.iter().map(|r| r.dot(nu)).collect();
    let b_hat = full.moments();
    (0..cfg.n_subsamples)
        .into_par_iter()
        .map(|l| {
            let idx = draw(n, ns, cfg.seed, l);
            let (s, _) = arm_shares(data.n_alternatives, idx.iter().map(|&i| &groups[i]), cfg.weighted);
            let without = s[0].clone().unwrap_or_else(|| full.without.clone());
            let with = s[1].clone().unwrap_or_else(|| full.with.clone());
            let b: Vec<f64> = without
                .iter()
                .chain(&with)
                .zip(&b_hat)
                .zip(&fitted)
                .map(|((bl, bh), f)| bl - bh + f)
                .collect();
            Ok(match sys.fit(&b, theta0)? {
                Some((v, _)) => ns as f64 * v,
                None => f64::INFINITY,
            })
        })
        .collect()
}

/// Upper order statistic `ceil((1 - alpha) B)`.
pub fn critical_value(stats: &[f64], alpha: f64) -> f64 {
    let mut s = stats.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let k = (((1.0 - alpha) * s.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    s[k.min(s.len()) - 1]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GridPoint {
    pub theta: f64,
    pub statistic: f64,
    pub critical: f64,
    pub accepted: bool,
}

/// Test of `theta0`; a zero statistic is accepted without subsampling.
pub fn test_point(data: &MicroData, sys: &MomentSystem, theta0: f64, cfg: &InferenceConfig) -> Result<GridPoint> {
    let ts = test_statistic(data, sys, Some(theta0), cfg)?;
    let nu = match (&ts.nu, ts.value) {
        (_, v) if v == 0.0 => return Ok(GridPoint { theta: theta0, statistic: 0.0, critical: 0.0, accepted: true }),
        (None, v) => return Ok(GridPoint { theta: theta0, statistic: v, critical: f64::NAN, accepted: false }),
        (Some(nu), _) => nu,
    };
    let stats = subsample_statistics(data, sys, Some(theta0), nu, cfg)?;
    let c = critical_value(&stats, cfg.alpha);
    Ok(GridPoint { theta: theta0, statistic: ts.value, critical: c, accepted: ts.value <= c })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CiResult {
    pub ci: Option<(f64, f64)>,
    pub estimate: Option<(f64, f64)>,
    pub step: f64,
    pub n: usize,
    pub n_s: usize,
    pub b: usize,
    pub seed: u64,
    pub points: Vec<GridPoint>,
}

/// Grid step in dollars for a status-quo amount.
pub fn default_step(tau_sq: Money, cfg: &InferenceConfig) -> f64 {
    match cfg.grid_step {
        Some(s) => s.dollars(),
        None if tau_sq > Money::ZERO => tau_sq.dollars() / 300.0,
        None => 1.0,
    }
}

/// Confidence interval for `c'x` by test inversion on a grid anchored at the
/// estimated bounds. Points inside the estimate have a zero statistic; the
/// scan moves outward from each end and stops after `stop_after` consecutive
/// rejections or at the pad `max(tau / 2, 10 step)`.
pub fn confidence_interval(
    data: &MicroData,
    problem: &BoundProblem,
    tau: Money,
    tau_sq: Money,
    cfg: &InferenceConfig,
) -> Result<CiResult> {
    cfg.validate()?;
    let sys = MomentSystem::from_problem(problem);
    let step = default_step(tau_sq, cfg);
    let pad = (tau.dollars() / 2.0).max(10.0 * step);
    let estimate = problem.solve()?;
    let n = data.n_students();
    let n_s = cfg.subsample_size_for(n, data.n_alternatives)?;
    let (lo, hi) = match estimate.status {
        BoundStatus::Feasible { lower, upper } => (lower, upper),
        BoundStatus::Infeasible => {
            // no estimate: scan the structural range of c'x
            let range = BoundProblem { system: sys.structural.clone(), objective: sys.objective.clone() }.solve()?;
            match range.interval() {
                Some((a, b)) => {
                    let points = scan_all(data, &sys, a, b, step, cfg)?;
                    let acc: Vec<f64> = points.iter().filter(|p| p.accepted).map(|p| p.theta).collect();
                    let ci = (!acc.is_empty()).then(|| (acc[0], *acc.last().unwrap()));
                    return Ok(CiResult { ci, estimate: None, step, n, n_s, b: cfg.n_subsamples, seed: cfg.seed, points });
                }
                None => {
                    return Ok(CiResult { ci: None, estimate: None, step, n, n_s, b: cfg.n_subsamples, seed: cfg.seed, points: vec![] })
                }
            }
        }
    };
    let mut points = Vec::new();
    let inner_lo = (lo / step).ceil() * step;
    let inner_hi = (hi / step).floor() * step;
    let mut ci_lo = lo;
    let mut ci_hi = hi;
    if inner_lo <= inner_hi {
        ci_lo = ci_lo.min(inner_lo);
        ci_hi = ci_hi.max(inner_hi);
    }
    for dir in [-1.0, 1.0] {
        let start = if dir < 0.0 { (lo / step).ceil() - 1.0 } else { (hi / step).floor() + 1.0 };
        let mut misses = 0;
        let mut k = 0.0;
        loop {
            let theta = (start + dir * k) * step;
            if (dir < 0.0 && theta < lo - pad) || (dir > 0.0 && theta > hi + pad) {
                break;
            }
            let p = test_point(data, &sys, theta, cfg)?;
            points.push(p);
            if p.accepted {
                misses = 0;
                if dir < 0.0 {
                    ci_lo = ci_lo.min(theta);
                } else {
                    ci_hi = ci_hi.max(theta);
                }
            } else {
                misses += 1;
                if misses >= cfg.stop_after {
                    break;
                }
            }
            k += 1.0;
        }
    }
    points.sort_by(|a, b| a.theta.total_cmp(&b.theta));
    Ok(CiResult {
        ci: Some((ci_lo, ci_hi)),
        estimate: Some((lo, hi)),
        step,
        n,
        n_s,
        b: cfg.n_subsamples,
        seed: cfg.seed,
        points,
    })
}

fn scan_all(data: &MicroData, sys: &MomentSystem, a: f64, b: f64, step: f64, cfg: &InferenceConfig) -> Result<Vec<GridPoint>> {
    let first = (a / step).ceil() as i64;
    let last = (b / step).floor() as i64;
    (first..=last).map(|k| test_point(data, sys, k as f64 * step, cfg)).collect()
}

/// Whether a confidence set built as in [`confidence_interval`] would contain
/// `theta`: either `theta` is accepted or an accepted point lies beyond it.
pub fn ci_contains(data: &MicroData, problem: &BoundProblem, theta: f64, step: f64, cfg: &InferenceConfig) -> Result<bool> {
    let sys = MomentSystem::from_problem(problem);
    if test_point(data, &sys, theta, cfg)?.accepted {
        return Ok(true);
    }
    let Some((lo, hi)) = problem.solve()?.interval() else {
        return Ok(false);
    };
    if theta >= lo && theta <= hi {
        return Ok(true);
    }
    let dir = if theta > hi { 1.0 } else { -1.0 };
    let mut misses = 1;
    let mut t = theta;
    while misses < cfg.stop_after {
        t += dir * step;
        if test_point(data, &sys, t, cfg)?.accepted {
            return Ok(true);
        }
        misses += 1;
    }
    Ok(false)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpecTestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
    pub n_s: usize,
    pub b: usize,
    pub seed: u64,
}

/// p-value of the test that the data rows are attainable under the
/// structural rows of `problem`.
pub fn specification_pvalue(data: &MicroData, problem: &BoundProblem, cfg: &InferenceConfig) -> Result<SpecTestResult> {
    cfg.validate()?;
    let sys = MomentSystem::from_problem(problem);
    let n = data.n_students();
    let n_s = cfg.subsample_size_for(n, data.n_alternatives)?;
    let ts = test_statistic(data, &sys, None, cfg)?;
    let p_value = match (&ts.nu, ts.value) {
        (_, v) if v == 0.0 => 1.0,
        (None, _) => 0.0,
        (Some(nu), v) => {
            let stats = subsample_statistics(data, &sys, None, nu, cfg)?;
            stats.iter().filter(|&&s| s >= v).count() as f64 / stats.len() as f64
        }
    };
    Ok(SpecTestResult { statistic: ts.value, p_value, n, n_s, b: cfg.n_subsamples, seed: cfg.seed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subsample_size_rule() {
        let c = InferenceConfig::default();
        assert_eq!(c.subsample_size_for(1600, 4).unwrap(), 320);
        assert_eq!(c.subsample_size_for(10, 4).unwrap(), 9);
        assert_eq!(c.subsample_size_for(3, 6).unwrap(), 2);
    }

    #[test]
    fn order_statistic() {
        let s: Vec<f64> = (1..=200).map(f64::from).collect();
        assert_eq!(critical_value(&s, 0.05), 190.0);
        assert_eq!(critical_value(&s, 1e-9), 200.0);
        assert_eq!(critical_value(&[3.0], 0.05), 3.0);
    }

    #[test]
    fn draws_are_reproducible_and_distinct() {
        let a = draw(100, 30, 7, 3);
        assert_eq!(a, draw(100, 30, 7, 3));
        assert_ne!(a, draw(100, 30, 7, 4));
        let mut d = a.clone();
        d.dedup();
        assert_eq!(d.len(), 30);
    }

    #[test]
    fn micro_data_from_counts_reproduces_shares() {
        let s = EnrollmentShares::new(vec![0.333, 0.333, 0.334], vec![0.5, 0.25, 0.25], 10, 4).unwrap();
        let d = MicroData::from_shares(&s).unwrap();
        assert_eq!(d.n_students(), 14);
        let back = d.shares(true).unwrap();
        assert_eq!(back.with, vec![0.5, 0.25, 0.25]);
        assert_eq!((back.n_without, back.n_with), (10, 4));
        let no_counts = EnrollmentShares::new(s.without.clone(), s.with.clone(), 0, 4).unwrap();
        assert!(MicroData::from_shares(&no_counts).is_err());
    }

    #[test]
    fn shares_ignore_row_order_and_weight_scale() {
        let obs = |w: f64| {
            vec![
                Observation { group: 0, voucher: false, choice: 0, weight: w },
                Observation { group: 1, voucher: false, choice: 2, weight: 2.0 * w },
                Observation { group: 2, voucher: true, choice: 1, weight: w },
                Observation { group: 3, voucher: true, choice: 2, weight: w },
            ]
        };
        let a = MicroData::new(3, obs(1.0)).unwrap().shares(true).unwrap();
        let mut rev = obs(3.0);
        rev.reverse();
        let b = MicroData::new(3, rev).unwrap().shares(true).unwrap();
        for (x, y) in a.moments().iter().zip(b.moments()) {
            assert!((x - y).abs() < 1e-15);
        }
        assert!((a.without[2] - 2.0 / 3.0).abs() < 1e-15);
        let u = MicroData::new(3, obs(1.0)).unwrap().shares(false).unwrap();
        assert_eq!(u.without, vec![0.5, 0.0, 0.5]);
    }
}
