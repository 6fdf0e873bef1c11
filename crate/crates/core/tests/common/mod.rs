#![allow(dead_code)]

pub mod dd;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use welfare_bounds::model::{apply_voucher, EnrollmentShares, ProgramConfig};
use welfare_bounds::oracle::{demand, UtilityModel};
use welfare_bounds::Money;

pub fn m(d: i64) -> Money {
    Money::from_dollars_int(d)
}

pub fn desk2() -> ProgramConfig {
    ProgramConfig::from_dollars(&[2000, 6000], 4000, 5000, 200).unwrap()
}

pub fn desk2_shares() -> EnrollmentShares {
    EnrollmentShares::new(vec![0.90, 0.02, 0.05, 0.03], vec![0.30, 0.01, 0.40, 0.29], 100, 100).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random tuitions in multiples of `step` and a status-quo amount.
pub fn random_config(r: &mut ChaCha8Rng, j: usize, step: i64, max_units: i64) -> ProgramConfig {
    let mut t: Vec<i64> = (0..j).map(|_| r.random_range(1..=max_units) * step).collect();
    t.sort_unstable();
    let tau = r.random_range(1..=max_units) * step;
    ProgramConfig::from_dollars(&t, tau, 4000 + r.random_range(0..4) * 500, r.random_range(0..3) * 100).unwrap()
}

pub fn random_logit(r: &mut ChaCha8Rng, j: usize) -> UtilityModel {
    let xi = (0..j).map(|_| r.random_range(-1.5..1.0)).collect();
    UtilityModel::logit(r.random_range(-3.0..-1.0), xi, r.random_range(2e-4..8e-4))
}

/// Exact population shares of `model` at `p(0)` and `p(tau_sq)`.
pub fn population_shares(model: &UtilityModel, config: &ProgramConfig) -> EnrollmentShares {
    let d = |p: Vec<Money>| demand(model, &p.iter().map(|x| x.dollars()).collect::<Vec<_>>());
    let mut a = d(config.base_prices());
    let mut b = d(apply_voucher(config, config.tau_sq));
    for v in [&mut a, &mut b] {
        let s: f64 = v.iter().sum();
        v.iter_mut().for_each(|x| *x /= s);
    }
    EnrollmentShares::new(a, b, 1_000_000, 1_000_000).unwrap()
}

/// Shares on a 1/1000 lattice: the largest share absorbs rounding.
pub fn lattice_shares(s: &EnrollmentShares) -> EnrollmentShares {
    let snap = |v: &[f64]| {
        let mut k: Vec<i64> = v.iter().map(|x| (x * 1000.0).round() as i64).collect();
        let top = (0..k.len()).max_by_key(|&i| k[i]).unwrap();
        k[top] += 1000 - k.iter().sum::<i64>();
        k.into_iter().map(|x| x as f64 / 1000.0).collect::<Vec<_>>()
    };
    EnrollmentShares::new(snap(&s.without), snap(&s.with), s.n_without, s.n_with).unwrap()
}

/// Aggregate shares of the program's first year with a per-school split of
/// the participating share.
pub fn table1_shares(split0: &[f64], split1: &[f64]) -> EnrollmentShares {
    let part = |total: f64, w: &[f64]| {
        let s: f64 = w.iter().sum();
        w.iter().map(|x| total * x / s).collect::<Vec<_>>()
    };
    let mut a = vec![0.901, 0.020];
    a.extend(part(0.079, split0));
    let mut b = vec![0.288, 0.014];
    b.extend(part(0.698, split1));
    EnrollmentShares::new(a, b, 910, 910).unwrap()
}
