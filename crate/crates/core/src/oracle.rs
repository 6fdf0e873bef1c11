//! Random-utility populations with known welfare effects: simulation,
//! individual willingness to pay by bisection, true parameters from the
//! demand integral, and plain logit by maximum likelihood.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Gumbel, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::data_io::{SchoolKind, SchoolRecord, StudentRecord};
use crate::error::{Error, Result};
use crate::inference::{MicroData, Observation};
use crate::model::{
    apply_voucher, cost_prices, cost_schedule, integration_segments, school_index, Part, ProgramConfig,
    WelfareTarget, GOV, NONPART,
};
use crate::money::Money;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelFamily {
    L1,
    ML1,
    L2,
    ML2,
    Quasilinear,
}

impl ModelFamily {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Some(ModelFamily::L1),
            "ml1" => Some(ModelFamily::ML1),
            "l2" => Some(ModelFamily::L2),
            "ml2" => Some(ModelFamily::ML2),
            "quasilinear" | "ql" => Some(ModelFamily::Quasilinear),
            _ => None,
        }
    }

    fn has_covariates(self) -> bool {
        matches!(self, ModelFamily::L2 | ModelFamily::ML2)
    }

    fn is_mixed(self) -> bool {
        matches!(self, ModelFamily::ML1 | ModelFamily::ML2)
    }
}

/// married, full-time, income quartile 2, 3, 4
pub const N_COVARIATES: usize = 5;
const P_MARRIED: f64 = 0.4;
const P_FULLTIME: f64 = 0.5;

/// `U_ij = xi_j - gamma_i P_ij + eps_ij` with `xi_g = 0` and g, n unpriced.
/// For the quasilinear family `U_ij = xi_j / gamma0 + sigma Z_ij - P_ij`
/// with `U_ig = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilityModel {
    pub family: ModelFamily,
    pub xi_n: f64,
    /// One effect per voucher school.
    pub xi: Vec<f64>,
    /// Price coefficient per dollar.
    pub gamma0: f64,
    #[serde(default)]
    pub gamma1: [f64; N_COVARIATES],
    #[serde(default)]
    pub sigma: f64,
    #[serde(default = "default_nodes")]
    pub quadrature_nodes: usize,
}

fn default_nodes() -> usize {
    400
}

impl UtilityModel {
    pub fn logit(xi_n: f64, xi: Vec<f64>, gamma0: f64) -> Self {
        UtilityModel {
            family: ModelFamily::L1,
            xi_n,
            xi,
            gamma0,
            gamma1: [0.0; N_COVARIATES],
            sigma: 0.0,
            quadrature_nodes: default_nodes(),
        }
    }

    pub fn validate(&self, config: &ProgramConfig) -> Result<()> {
        if self.xi.len() != config.n_schools() {
            return Err(Error::InvalidInput(format!(
                "model has {} school effects for {} voucher schools",
                self.xi.len(),
                config.n_schools()
            )));
        }
        if !(self.gamma0 > 0.0) {
            return Err(Error::InvalidInput("mean price coefficient must be positive".into()));
        }
        if !(self.sigma >= 0.0) {
            return Err(Error::InvalidInput("sigma must be nonnegative".into()));
        }
        match self.family {
            ModelFamily::L1 | ModelFamily::L2 if self.sigma != 0.0 => {
                return Err(Error::InvalidInput("logit families take sigma = 0".into()))
            }
            ModelFamily::ML1 | ModelFamily::ML2 | ModelFamily::Quasilinear if self.sigma <= 0.0 => {
                return Err(Error::InvalidInput("mixed and quasilinear families need sigma > 0".into()))
            }
            _ => {}
        }
        if self.family == ModelFamily::L2 {
            for (_, x) in covariate_cells() {
                if self.mean_gamma(&x) <= 0.0 {
                    return Err(Error::InvalidInput("price coefficient is not positive in every covariate cell".into()));
                }
            }
        }
        if self.quadrature_nodes == 0 {
            return Err(Error::InvalidInput("need at least one quadrature node".into()));
        }
        Ok(())
    }

    fn mean_gamma(&self, x: &[f64; N_COVARIATES]) -> f64 {
        let mut g = self.gamma0;
        if self.family.has_covariates() {
            g += self.gamma1.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
        g
    }

    /// `(probability, price coefficient)` atoms of the logit mixture.
    fn mixture(&self) -> Vec<(f64, f64)> {
        let cells = if self.family.has_covariates() { covariate_cells() } else { vec![(1.0, [0.0; N_COVARIATES])] };
        let mut out = Vec::new();
        for (w, x) in cells {
            let mu = self.mean_gamma(&x);
            if self.family.is_mixed() {
                for g in truncated_quantiles(mu, self.sigma, self.quadrature_nodes) {
                    out.push((w / self.quadrature_nodes as f64, g));
                }
            } else {
                out.push((w, mu));
            }
        }
        out
    }
}

/// The 16 covariate cells with their probabilities.
pub fn covariate_cells() -> Vec<(f64, [f64; N_COVARIATES])> {
    let mut out = Vec::with_capacity(16);
    for married in [0.0, 1.0] {
        for full in [0.0, 1.0] {
            for q in 0..4 {
                let p = (if married == 1.0 { P_MARRIED } else { 1.0 - P_MARRIED })
                    * (if full == 1.0 { P_FULLTIME } else { 1.0 - P_FULLTIME })
                    * 0.25;
                let mut x = [married, full, 0.0, 0.0, 0.0];
                if q > 0 {
                    x[1 + q] = 1.0;
                }
                out.push((p, x));
            }
        }
    }
    out
}

/// Midpoint quantiles of `N(mu, sigma^2)` truncated to `(0, inf)`.
fn truncated_quantiles(mu: f64, sigma: f64, n: usize) -> Vec<f64> {
    let z = Normal::new(0.0, 1.0).expect("standard normal");
    let lo = z.cdf(-mu / sigma);
    (0..n)
        .map(|k| {
            let u = lo + (k as f64 + 0.5) / n as f64 * (1.0 - lo);
            mu + sigma * z.inverse_cdf(u)
        })
        .collect()
}

fn logit_probs(model: &UtilityModel, gamma: f64, p: &[f64], out: &mut [f64]) {
    out[GOV] = 0.0;
    out[NONPART] = model.xi_n;
    for (j, &pj) in p.iter().enumerate() {
        out[school_index(j)] = model.xi[j] - gamma * pj;
    }
    let m = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in out.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    for v in out.iter_mut() {
        *v /= s;
    }
}

/// Population demand at voucher-school prices `p` (dollars), indexed by alternative.
pub fn demand(model: &UtilityModel, p: &[f64]) -> Vec<f64> {
    let n_alt = p.len() + 2;
    if model.family == ModelFamily::Quasilinear {
        return quasilinear_demand(model, p);
    }
    let mut q = vec![0.0; n_alt];
    let mut tmp = vec![0.0; n_alt];
    for (w, g) in model.mixture() {
        logit_probs(model, g, p, &mut tmp);
        for (a, b) in q.iter_mut().zip(&tmp) {
            *a += w * b;
        }
    }
    q
}

fn quasilinear_demand(model: &UtilityModel, p: &[f64]) -> Vec<f64> {
    let n_alt = p.len() + 2;
    let s = model.sigma;
    // means of the random alternatives n, 1..J; g is fixed at zero
    let mut means = vec![model.xi_n / model.gamma0];
    means.extend(p.iter().enumerate().map(|(j, &pj)| model.xi[j] / model.gamma0 - pj));
    let z = Normal::new(0.0, 1.0).expect("standard normal");
    let mut q = vec![0.0; n_alt];
    q[GOV] = means.iter().map(|m| z.cdf(-m / s)).product();
    let lo = means.iter().cloned().fold(f64::INFINITY, f64::min) - 9.0 * s;
    let hi = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 9.0 * s;
    let lo = lo.max(0.0);
    if hi > lo {
        let nodes = 2 * model.quadrature_nodes.max(300);
        let h = (hi - lo) / nodes as f64;
        for k in 0..=nodes {
            let u = lo + k as f64 * h;
            let wt = if k == 0 || k == nodes { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 } * h / 3.0;
            let cdfs: Vec<f64> = means.iter().map(|m| z.cdf((u - m) / s)).collect();
            for (r, m) in means.iter().enumerate() {
                let others: f64 = cdfs.iter().enumerate().filter(|(t, _)| *t != r).map(|(_, c)| c).product();
                q[if r == 0 { NONPART } else { school_index(r - 1) }] += wt * z.pdf((u - m) / s) / s * others;
            }
        }
    }
    q
}

/// Demand integral of one benefit or cost component, midpoint rule with
/// `m` points per segment.
pub fn true_parameter(model: &UtilityModel, target: &WelfareTarget, config: &ProgramConfig, m: usize) -> Result<f64> {
    model.validate(config)?;
    target.validate(config)?;
    let base = config.base_prices();
    let mut total = 0.0;
    for comp in target.components(config) {
        let v = match comp.part {
            Part::Benefit => {
                let p_tau = apply_voucher(config, comp.tau);
                let segs = integration_segments(config, comp.tau, comp.kappa);
                let mut s = 0.0;
                for seg in segs {
                    let width = seg.width().dollars();
                    let d = width / m as f64;
                    let part: f64 = (0..m)
                        .into_par_iter()
                        .map(|k| {
                            let a = seg.a_lo.dollars() + (k as f64 + 0.5) * d;
                            let q = demand(model, &seg.prices_at(&base, &p_tau, a));
                            (seg.pinned..config.n_schools()).map(|j| q[school_index(j)]).sum::<f64>() * d
                        })
                        .sum();
                    s += part;
                }
                s
            }
            Part::Cost => {
                let p1: Vec<f64> = cost_prices(config, comp.tau, comp.kappa).iter().map(|x| x.dollars()).collect();
                let p0: Vec<f64> = base.iter().map(|x| x.dollars()).collect();
                let (q1, q0) = (demand(model, &p1), demand(model, &p0));
                let (c1, c0) = (cost_schedule(config, comp.tau, comp.kappa), cost_schedule(config, Money::ZERO, None));
                (0..q1.len()).map(|j| c1[j].dollars() * q1[j] - c0[j].dollars() * q0[j]).sum()
            }
        };
        total += comp.sign * v;
    }
    Ok(total)
}

/// Closed-form average benefit of the homogeneous logit.
pub fn logit_logsum_benefit(model: &UtilityModel, config: &ProgramConfig, tau: Money) -> f64 {
    let lse = |p: &[Money]| {
        let mut v = vec![0.0, model.xi_n];
        v.extend(p.iter().enumerate().map(|(j, pj)| model.xi[j] - model.gamma0 * pj.dollars()));
        let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
    };
    (lse(&apply_voucher(config, tau)) - lse(&apply_voucher(config, Money::ZERO))) / model.gamma0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub voucher: bool,
    pub covariates: [f64; N_COVARIATES],
    pub gamma: f64,
    /// Price-free utility per alternative.
    pub base: Vec<f64>,
}

impl Individual {
    fn value(&self, j: usize, p: &[f64]) -> f64 {
        if j >= 2 {
            self.base[j] - self.gamma * p[j - 2]
        } else {
            self.base[j]
        }
    }

    fn best(&self, p: &[f64]) -> (usize, f64) {
        (0..self.base.len())
            .map(|j| (j, self.value(j, p)))
            .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc })
    }

    pub fn choice(&self, p: &[f64]) -> usize {
        self.best(p).0
    }
}

fn dollars(p: &[Money]) -> Vec<f64> {
    p.iter().map(|x| x.dollars()).collect()
}

/// Willingness to pay for moving from `p(0)` to the voucher prices of
/// `(tau, kappa)`: the income reduction `B` in `[0, tau]` solving
/// `max_j U_j(p^kappa(tau), -B) = max_j U_j(p(0), 0)`.
pub fn wtp_bisection(ind: &Individual, config: &ProgramConfig, tau: Money, kappa: Option<Money>) -> f64 {
    let t = tau.dollars();
    if t <= 0.0 {
        return 0.0;
    }
    let p1 = dollars(&cost_prices(config, tau, kappa));
    let p0 = dollars(&config.base_prices());
    let v0 = ind.best(&p0).1;
    let v1 = ind.best(&p1).1;
    let f = |b: f64| v1 - ind.gamma * b - v0;
    let (mut lo, mut hi) = (0.0, t);
    if f(lo) <= 0.0 {
        return 0.0;
    }
    if f(hi) >= 0.0 {
        return t;
    }
    let tol = 1e-6 * t;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Simulation {
    pub individuals: Vec<Individual>,
    pub choices: Vec<usize>,
}

const BLOCK: usize = 4096;

fn draw_individual(model: &UtilityModel, n_alt: usize, rng: &mut ChaCha8Rng) -> Individual {
    let voucher = rng.random_bool(0.5);
    let mut x = [0.0; N_COVARIATES];
    if model.family.has_covariates() {
        x[0] = Bernoulli::new(P_MARRIED).expect("probability").sample(rng) as u8 as f64;
        x[1] = Bernoulli::new(P_FULLTIME).expect("probability").sample(rng) as u8 as f64;
        let q = rng.random_range(0..4usize);
        if q > 0 {
            x[1 + q] = 1.0;
        }
    }
    let mut base = vec![0.0; n_alt];
    let gamma = match model.family {
        ModelFamily::Quasilinear => {
            base[NONPART] = model.xi_n / model.gamma0 + model.sigma * rng.sample::<f64, _>(StandardNormal);
            for j in 0..n_alt - 2 {
                base[school_index(j)] = model.xi[j] / model.gamma0 + model.sigma * rng.sample::<f64, _>(StandardNormal);
            }
            return Individual { voucher, covariates: x, gamma: 1.0, base };
        }
        _ => {
            let mu = model.mean_gamma(&x);
            if model.family.is_mixed() {
                loop {
                    let g = mu + model.sigma * rng.sample::<f64, _>(StandardNormal);
                    if g > 0.0 {
                        break g;
                    }
                }
            } else {
                mu
            }
        }
    };
    let gumbel = Gumbel::new(0.0, 1.0).expect("gumbel");
    base[GOV] = gumbel.sample(rng);
    base[NONPART] = model.xi_n + gumbel.sample(rng);
    for j in 0..n_alt - 2 {
        base[school_index(j)] = model.xi[j] + gumbel.sample(rng);
    }
    Individual { voucher, covariates: x, gamma, base }
}

/// `n` individuals with voucher receipt drawn with probability one half.
/// Blocks of individuals use their own RNG streams, so the result does not
/// depend on the number of threads.
pub fn simulate(model: &UtilityModel, n: usize, config: &ProgramConfig, seed: u64) -> Result<Simulation> {
    model.validate(config)?;
    let n_alt = config.n_alternatives();
    let p0 = dollars(&config.base_prices());
    let p1 = dollars(&apply_voucher(config, config.tau_sq));
    let individuals: Vec<Individual> = (0..n.div_ceil(BLOCK))
        .into_par_iter()
        .flat_map_iter(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let len = BLOCK.min(n - b * BLOCK);
            (0..len).map(|_| draw_individual(model, n_alt, &mut rng)).collect::<Vec<_>>()
        })
        .collect();
    let choices = individuals.iter().map(|i| i.choice(if i.voucher { &p1 } else { &p0 })).collect();
    Ok(Simulation { individuals, choices })
}

/// Mean and standard error of willingness to pay over the individuals that
/// [`simulate`] would draw, without storing them.
pub fn mean_wtp_stream(
    model: &UtilityModel,
    n: usize,
    config: &ProgramConfig,
    seed: u64,
    tau: Money,
    kappa: Option<Money>,
) -> Result<(f64, f64)> {
    model.validate(config)?;
    let n_alt = config.n_alternatives();
    let (s, s2) = (0..n.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let len = BLOCK.min(n - b * BLOCK);
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..len {
                let w = wtp_bisection(&draw_individual(model, n_alt, &mut rng), config, tau, kappa);
                s += w;
                s2 += w * w;
            }
            (s, s2)
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let nf = n as f64;
    let mean = s / nf;
    let var = (s2 - nf * mean * mean) / (nf - 1.0).max(1.0);
    Ok((mean, (var.max(0.0) / nf).sqrt()))
}

impl Simulation {
    pub fn micro_data(&self, n_alternatives: usize) -> Result<MicroData> {
        let obs = self
            .individuals
            .iter()
            .zip(&self.choices)
            .enumerate()
            .map(|(i, (ind, &c))| Observation { group: i, voucher: ind.voucher, choice: c, weight: 1.0 })
            .collect();
        MicroData::new(n_alternatives, obs)
    }

    pub fn logit_sample(&self) -> Vec<ChoiceObs> {
        self.individuals
            .iter()
            .zip(&self.choices)
            .map(|(ind, &c)| ChoiceObs { voucher: ind.voucher, choice: c, covariates: ind.covariates, weight: 1.0 })
            .collect()
    }

    pub fn mean_wtp(&self, config: &ProgramConfig, tau: Money, kappa: Option<Money>) -> (f64, f64) {
        let b: Vec<f64> = self.individuals.par_iter().map(|i| wtp_bisection(i, config, tau, kappa)).collect();
        let n = b.len() as f64;
        let mean = b.iter().sum::<f64>() / n;
        let var = b.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        (mean, (var / n).sqrt())
    }

    /// Records in the loader's schema; g and n are single schools `G` and `N`.
    pub fn records(&self, config: &ProgramConfig) -> (Vec<StudentRecord>, Vec<SchoolRecord>) {
        let id = |c: usize| match c {
            GOV => "G".to_string(),
            NONPART => "N".to_string(),
            j => config.voucher_schools[j - 2].id.clone(),
        };
        let students = self
            .individuals
            .iter()
            .zip(&self.choices)
            .enumerate()
            .map(|(i, (ind, &c))| StudentRecord {
                student_id: (i + 1).to_string(),
                voucher: ind.voucher,
                school_id: Some(id(c)),
                weight: 1.0,
            })
            .collect();
        let mut schools = vec![
            SchoolRecord { school_id: "G".into(), kind: SchoolKind::Gov, tuition: None },
            SchoolRecord { school_id: "N".into(), kind: SchoolKind::PrivateNonparticipating, tuition: None },
        ];
        schools.extend(config.voucher_schools.iter().map(|s| SchoolRecord {
            school_id: s.id.clone(),
            kind: SchoolKind::PrivateParticipating,
            tuition: Some(s.tuition),
        }));
        (students, schools)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChoiceObs {
    pub voucher: bool,
    pub choice: usize,
    pub covariates: [f64; N_COVARIATES],
    pub weight: f64,
}

/// Logit estimates: `(xi_n, xi_1..xi_J, gamma0, gamma1...)` with standard errors.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LogitFit {
    pub xi_n: f64,
    pub xi: Vec<f64>,
    pub gamma0: f64,
    pub gamma1: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub iterations: usize,
    pub log_likelihood: f64,
}

struct LogitProblem<'a> {
    data: &'a [ChoiceObs],
    prices: [Vec<f64>; 2],
    n_alt: usize,
    dim: usize,
    covariates: bool,
}

impl LogitProblem<'_> {
    /// Feature vector of alternative `j` for observation `o`, prices scaled.
    fn features(&self, o: &ChoiceObs, j: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        if j == GOV {
            return;
        }
        out[j - 1] = 1.0;
        if j >= 2 {
            let p = self.prices[o.voucher as usize][j - 2];
            let g = self.n_alt - 1;
            out[g] = -p;
            if self.covariates {
                for (k, x) in o.covariates.iter().enumerate() {
                    out[g + 1 + k] = -p * x;
                }
            }
        }
    }

    /// Mean log likelihood, gradient and Hessian.
    fn eval(&self, theta: &[f64]) -> (f64, DVector<f64>, DMatrix<f64>) {
        let d = self.dim;
        let (ll, g, h, w) = self
            .data
            .par_iter()
            .fold(
                || (0.0, DVector::zeros(d), DMatrix::zeros(d, d), 0.0),
                |(mut ll, mut g, mut h, mut wsum), o| {
                    let mut x = vec![vec![0.0; d]; self.n_alt];
                    let mut v = vec![0.0; self.n_alt];
                    for j in 0..self.n_alt {
                        self.features(o, j, &mut x[j]);
                        v[j] = x[j].iter().zip(theta).map(|(a, b)| a * b).sum();
                    }
                    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let s: f64 = v.iter().map(|t| (t - m).exp()).sum();
                    let pr: Vec<f64> = v.iter().map(|t| (t - m).exp() / s).collect();
                    ll += o.weight * (v[o.choice] - m - s.ln());
                    let mut xbar = vec![0.0; d];
                    for j in 0..self.n_alt {
                        for k in 0..d {
                            xbar[k] += pr[j] * x[j][k];
                        }
                    }
                    for k in 0..d {
                        g[k] += o.weight * (x[o.choice][k] - xbar[k]);
                    }
                    for j in 0..self.n_alt {
                        for a in 0..d {
                            let da = x[j][a] - xbar[a];
                            if da == 0.0 {
                                continue;
                            }
                            for b in 0..d {
                                h[(a, b)] -= o.weight * pr[j] * da * (x[j][b] - xbar[b]);
                            }
                        }
                    }
                    wsum += o.weight;
                    (ll, g, h, wsum)
                },
            )
            .reduce(
                || (0.0, DVector::zeros(d), DMatrix::zeros(d, d), 0.0),
                |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2, a.3 + b.3),
            );
        (ll / w, g / w, h / w)
    }
}

/// Newton ascent on the mean log likelihood, stopping when the gradient
/// sup-norm falls under `1e-8`.
pub fn fit_logit(data: &[ChoiceObs], config: &ProgramConfig, covariates: bool) -> Result<LogitFit> {
    let n_alt = config.n_alternatives();
    if data.is_empty() {
        return Err(Error::InvalidInput("no observations".into()));
    }
    let mut counts = vec![0.0; n_alt];
    for o in data {
        if o.choice >= n_alt {
            return Err(Error::InvalidInput(format!("choice {} out of range", o.choice)));
        }
        counts[o.choice] += o.weight;
    }
    if let Some(j) = counts.iter().position(|&c| c <= 0.0) {
        return Err(Error::SeparationDetected(format!("alternative {j} is never chosen")));
    }
    let scale = config.price_scale();
    let prices = [
        config.base_prices().iter().map(|p| p.dollars() / scale).collect(),
        apply_voucher(config, config.tau_sq).iter().map(|p| p.dollars() / scale).collect(),
    ];
    let dim = n_alt + if covariates { N_COVARIATES } else { 0 };
    let prob = LogitProblem { data, prices, n_alt, dim, covariates };
    let mut theta = vec![0.0; dim];
    for j in 1..n_alt {
        theta[j - 1] = (counts[j] / counts[GOV]).ln();
    }
    let max_iter = 100;
    for it in 0..max_iter {
        let (ll, g, h) = prob.eval(&theta);
        let neg = -h.clone();
        let chol = neg.clone().cholesky().filter(|_| {
            let ev = neg.clone().symmetric_eigen().eigenvalues;
            let (mn, mx) = ev.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &e| (a.min(e), b.max(e.abs())));
            mn > 1e-10 * mx.max(1e-300)
        });
        let Some(chol) = chol else {
            return Err(Error::SeparationDetected("information matrix is singular".into()));
        };
        if g.amax() < 1e-8 {
            let inv = chol.inverse();
            let n: f64 = data.iter().map(|o| o.weight).sum();
            let mut se: Vec<f64> = (0..dim).map(|k| (inv[(k, k)] / n).sqrt()).collect();
            for v in se.iter_mut().skip(n_alt - 1) {
                *v /= scale;
            }
            return Ok(LogitFit {
                xi_n: theta[0],
                xi: theta[1..n_alt - 1].to_vec(),
                gamma0: theta[n_alt - 1] / scale,
                gamma1: theta[n_alt..].iter().map(|v| v / scale).collect(),
                std_errors: se,
                iterations: it,
                log_likelihood: ll,
            });
        }
        let step = chol.solve(&g);
        let mut t = 1.0;
        loop {
            let cand: Vec<f64> = theta.iter().zip(step.iter()).map(|(a, b)| a + t * b).collect();
            if prob.eval(&cand).0 >= ll - 1e-14 || t < 1e-10 {
                theta = cand;
                break;
            }
            t *= 0.5;
        }
    }
    Err(Error::NonConvergence(max_iter))
}

#[doc(hidden)]
pub fn logit_mean_loglik_and_grad(data: &[ChoiceObs], config: &ProgramConfig, covariates: bool, theta: &[f64]) -> (f64, Vec<f64>) {
    let scale = config.price_scale();
    let prob = LogitProblem {
        data,
        prices: [
            config.base_prices().iter().map(|p| p.dollars() / scale).collect(),
            apply_voucher(config, config.tau_sq).iter().map(|p| p.dollars() / scale).collect(),
        ],
        n_alt: config.n_alternatives(),
        dim: theta.len(),
        covariates,
    };
    let (ll, g, _) = prob.eval(theta);
    (ll, g.iter().copied().collect())
}
