//! Domain types and closed-form pieces of the welfare parameters.
//!
//! Demand indices follow a fixed layout: `0` is the government school group,
//! `1` the non-participating private group and `2 + j` the `j`-th voucher
//! school (zero based) in ascending base-tuition order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::money::Money;

pub const GOV: usize = 0;
pub const NONPART: usize = 1;

/// Demand index of the zero-based voucher school `j`.
pub const fn school_index(j: usize) -> usize {
    2 + j
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VoucherSchool {
    pub id: String,
    pub tuition: Money,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProgramConfig {
    pub voucher_schools: Vec<VoucherSchool>,
    pub tau_sq: Money,
    pub gov_cost: Money,
    pub admin_cost: Money,
    #[serde(default)]
    pub extra_offset: Money,
    #[serde(default)]
    pub rounding_step: Money,
}

impl ProgramConfig {
    pub fn new(
        voucher_schools: Vec<VoucherSchool>,
        tau_sq: Money,
        gov_cost: Money,
        admin_cost: Money,
    ) -> Result<Self> {
        let cfg = ProgramConfig {
            voucher_schools,
            tau_sq,
            gov_cost,
            admin_cost,
            extra_offset: Money::ZERO,
            rounding_step: Money::ZERO,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Convenience constructor from whole-dollar tuitions; school ids are `s1, s2, ...`.
    pub fn from_dollars(tuitions: &[i64], tau_sq: i64, gov_cost: i64, admin_cost: i64) -> Result<Self> {
        let schools = tuitions
            .iter()
            .enumerate()
            .map(|(i, &t)| VoucherSchool { id: format!("s{}", i + 1), tuition: Money::from_dollars_int(t) })
            .collect();
        Self::new(
            schools,
            Money::from_dollars_int(tau_sq),
            Money::from_dollars_int(gov_cost),
            Money::from_dollars_int(admin_cost),
        )
    }

    pub fn with_offset(mut self, delta: Money) -> Result<Self> {
        self.extra_offset = delta;
        self.validate()?;
        Ok(self)
    }

    pub fn with_rounding(mut self, step: Money) -> Result<Self> {
        self.rounding_step = step;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, m) in [
            ("tau_sq", self.tau_sq),
            ("gov_cost", self.gov_cost),
            ("admin_cost", self.admin_cost),
            ("extra_offset", self.extra_offset),
            ("rounding_step", self.rounding_step),
        ] {
            if m.is_negative() {
                return Err(Error::InvalidInput(format!("{name} must be nonnegative, got {m}")));
            }
        }
        for w in self.voucher_schools.windows(2) {
            if w[1].tuition < w[0].tuition {
                return Err(Error::InvalidInput(format!(
                    "voucher schools must be sorted by tuition: {} ({}) after {} ({})",
                    w[1].id, w[1].tuition, w[0].id, w[0].tuition
                )));
            }
        }
        if let Some(s) = self.voucher_schools.iter().find(|s| s.tuition.is_negative()) {
            return Err(Error::InvalidInput(format!("tuition of {} is negative", s.id)));
        }
        Ok(())
    }

    /// Number of voucher schools `J`.
    pub fn n_schools(&self) -> usize {
        self.voucher_schools.len()
    }

    /// Number of demand indices `J + 2`.
    pub fn n_alternatives(&self) -> usize {
        self.voucher_schools.len() + 2
    }

    /// Effective prices without the voucher: tuition plus the offset, then rounded.
    pub fn base_prices(&self) -> Vec<Money> {
        self.voucher_schools
            .iter()
            .map(|s| (s.tuition + self.extra_offset).round_half_up(self.rounding_step))
            .collect()
    }

    /// Largest effective base price in dollars, or 1 when every school is free.
    pub fn price_scale(&self) -> f64 {
        let m = self.base_prices().into_iter().max().unwrap_or(Money::ZERO);
        if m > Money::ZERO {
            m.dollars()
        } else {
            1.0
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnrollmentShares {
    /// `P_{j|0}` in demand-index order.
    pub without: Vec<f64>,
    /// `P_{j|1}` in demand-index order.
    pub with: Vec<f64>,
    #[serde(default)]
    pub n_without: u64,
    #[serde(default)]
    pub n_with: u64,
}

impl EnrollmentShares {
    pub fn new(without: Vec<f64>, with: Vec<f64>, n_without: u64, n_with: u64) -> Result<Self> {
        let s = EnrollmentShares { without, with, n_without, n_with };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.without.len() != self.with.len() || self.without.len() < 2 {
            return Err(Error::InvalidInput("share vectors must have equal length J+2".into()));
        }
        for (arm, v) in [("without", &self.without), ("with", &self.with)] {
            if v.iter().any(|p| !p.is_finite() || *p < 0.0 || *p > 1.0) {
                return Err(Error::InvalidInput(format!("{arm} shares must lie in [0,1]")));
            }
            let s: f64 = v.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidInput(format!("{arm} shares sum to {s}, not 1")));
            }
        }
        Ok(())
    }

    pub fn check_against(&self, config: &ProgramConfig) -> Result<()> {
        if self.without.len() != config.n_alternatives() {
            return Err(Error::InvalidInput(format!(
                "shares have {} entries but the program has {} demand indices",
                self.without.len(),
                config.n_alternatives()
            )));
        }
        Ok(())
    }

    /// Moment vector `(P_{.|0}, P_{.|1})`.
    pub fn moments(&self) -> Vec<f64> {
        self.without.iter().chain(self.with.iter()).copied().collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WelfareKind {
    AB,
    AC,
    AS,
    DeltaAB,
    DeltaAC,
    DeltaAS,
    ABKappa,
    ACKappa,
    ASKappa,
}

impl WelfareKind {
    pub const ALL: [WelfareKind; 9] = [
        WelfareKind::AB,
        WelfareKind::AC,
        WelfareKind::AS,
        WelfareKind::DeltaAB,
        WelfareKind::DeltaAC,
        WelfareKind::DeltaAS,
        WelfareKind::ABKappa,
        WelfareKind::ACKappa,
        WelfareKind::ASKappa,
    ];

    pub fn is_kappa(self) -> bool {
        matches!(self, WelfareKind::ABKappa | WelfareKind::ACKappa | WelfareKind::ASKappa)
    }

    pub fn is_delta(self) -> bool {
        matches!(self, WelfareKind::DeltaAB | WelfareKind::DeltaAC | WelfareKind::DeltaAS)
    }

    pub fn name(self) -> &'static str {
        match self {
            WelfareKind::AB => "AB",
            WelfareKind::AC => "AC",
            WelfareKind::AS => "AS",
            WelfareKind::DeltaAB => "dAB",
            WelfareKind::DeltaAC => "dAC",
            WelfareKind::DeltaAS => "dAS",
            WelfareKind::ABKappa => "ABk",
            WelfareKind::ACKappa => "ACk",
            WelfareKind::ASKappa => "ASk",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let k = match s.to_ascii_lowercase().as_str() {
            "ab" => WelfareKind::AB,
            "ac" => WelfareKind::AC,
            "as" => WelfareKind::AS,
            "dab" | "deltaab" | "delta-ab" => WelfareKind::DeltaAB,
            "dac" | "deltaac" | "delta-ac" => WelfareKind::DeltaAC,
            "das" | "deltaas" | "delta-as" => WelfareKind::DeltaAS,
            "abk" | "abkappa" | "ab-kappa" => WelfareKind::ABKappa,
            "ack" | "ackappa" | "ac-kappa" => WelfareKind::ACKappa,
            "ask" | "askappa" | "as-kappa" => WelfareKind::ASKappa,
            _ => return None,
        };
        Some(k)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WelfareTarget {
    pub kind: WelfareKind,
    pub tau: Money,
    pub kappa: Option<Money>,
}

/// Benefit or cost half of a welfare parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Part {
    Benefit,
    Cost,
}

/// One signed term of a target: `sign * AB(tau[, kappa])` or `sign * AC(tau[, kappa])`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Component {
    pub sign: f64,
    pub part: Part,
    pub tau: Money,
    pub kappa: Option<Money>,
}

impl WelfareTarget {
    pub fn new(kind: WelfareKind, tau: Money, kappa: Option<Money>) -> Self {
        WelfareTarget { kind, tau, kappa }
    }

    pub fn validate(&self, config: &ProgramConfig) -> Result<()> {
        if self.tau.is_negative() {
            return Err(Error::InvalidInput("tau must be nonnegative".into()));
        }
        if self.kind.is_kappa() != self.kappa.is_some() {
            return Err(Error::InvalidInput(format!(
                "kappa must be given exactly for the kappa kinds ({})",
                self.kind.name()
            )));
        }
        if let Some(k) = self.kappa {
            if k.is_negative() {
                return Err(Error::InvalidInput("kappa must be nonnegative".into()));
            }
            if self.tau != config.tau_sq {
                return Err(Error::InvalidInput("kappa kinds are evaluated at tau_sq".into()));
            }
        }
        Ok(())
    }

    /// The other voucher amount that needs a path in the partition, if any.
    pub fn counterfactual_tau(&self, config: &ProgramConfig) -> Option<Money> {
        if self.tau == config.tau_sq {
            None
        } else {
            Some(self.tau)
        }
    }

    pub fn components(&self, config: &ProgramConfig) -> Vec<Component> {
        let c = |sign: f64, part: Part, tau: Money, kappa: Option<Money>| Component { sign, part, tau, kappa };
        let t = self.tau;
        let sq = config.tau_sq;
        match self.kind {
            WelfareKind::AB => vec![c(1.0, Part::Benefit, t, None)],
            WelfareKind::AC => vec![c(1.0, Part::Cost, t, None)],
            WelfareKind::AS => vec![c(1.0, Part::Benefit, t, None), c(-1.0, Part::Cost, t, None)],
            WelfareKind::DeltaAB => vec![c(1.0, Part::Benefit, t, None), c(-1.0, Part::Benefit, sq, None)],
            WelfareKind::DeltaAC => vec![c(1.0, Part::Cost, t, None), c(-1.0, Part::Cost, sq, None)],
            WelfareKind::DeltaAS => vec![
                c(1.0, Part::Benefit, t, None),
                c(-1.0, Part::Cost, t, None),
                c(-1.0, Part::Benefit, sq, None),
                c(1.0, Part::Cost, sq, None),
            ],
            WelfareKind::ABKappa => vec![c(1.0, Part::Benefit, sq, self.kappa)],
            WelfareKind::ACKappa => vec![c(1.0, Part::Cost, sq, self.kappa)],
            WelfareKind::ASKappa => {
                vec![c(1.0, Part::Benefit, sq, self.kappa), c(-1.0, Part::Cost, sq, self.kappa)]
            }
        }
    }
}

/// `p(tau)` with `p_j(tau) = max(0, p_j(0) - tau)` on the effective base prices.
pub fn apply_voucher(config: &ProgramConfig, tau: Money) -> Vec<Money> {
    config.base_prices().into_iter().map(|p| p.sub_floor_zero(tau)).collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Breakpoints {
    /// `j(tau)`: number of schools whose base price is strictly below `tau`.
    pub j_tau: usize,
    /// `a_0, ..., a_{j(tau)+1}` before deduplication.
    pub a: Vec<Money>,
}

impl Breakpoints {
    /// Strictly increasing breakpoints.
    pub fn distinct(&self) -> Vec<Money> {
        let mut v = self.a.clone();
        v.dedup();
        v
    }
}

pub fn breakpoints(config: &ProgramConfig, tau: Money) -> Breakpoints {
    let base = config.base_prices();
    let j_tau = base.iter().filter(|&&p| p < tau).count();
    let mut a = Vec::with_capacity(j_tau + 2);
    a.push(Money::ZERO);
    a.extend(base[..j_tau].iter().copied());
    a.push(tau);
    Breakpoints { j_tau, a }
}

/// `j^kappa`: number of schools with base price at most `kappa`.
pub fn j_kappa(config: &ProgramConfig, kappa: Money) -> usize {
    config.base_prices().iter().filter(|&&p| p <= kappa).count()
}

/// `c_j(tau)` in demand-index order; schools priced at most `kappa` cost nothing.
pub fn cost_schedule(config: &ProgramConfig, tau: Money, kappa: Option<Money>) -> Vec<Money> {
    let mut c = Vec::with_capacity(config.n_alternatives());
    c.push(config.gov_cost);
    c.push(Money::ZERO);
    let admin = if tau > Money::ZERO { config.admin_cost } else { Money::ZERO };
    for p in config.base_prices() {
        if kappa.is_some_and(|k| p <= k) {
            c.push(Money::ZERO);
        } else {
            c.push(p.min(tau) + admin);
        }
    }
    c
}

/// Price vector at which the with-voucher cost is evaluated: `p(tau)`, or
/// `p^kappa(tau)` with removed schools back at their base price.
pub fn cost_prices(config: &ProgramConfig, tau: Money, kappa: Option<Money>) -> Vec<Money> {
    let base = config.base_prices();
    let jk = kappa.map_or(0, |k| j_kappa(config, k));
    base.iter()
        .enumerate()
        .map(|(j, &p)| if j < jk { p } else { p.sub_floor_zero(tau) })
        .collect()
}

/// AC(tau_sq) straight from the observed shares.
pub fn average_cost_direct(
    shares: &EnrollmentShares,
    config: &ProgramConfig,
    tau: Money,
    kappa: Option<Money>,
) -> Result<f64> {
    if tau != config.tau_sq {
        return Err(Error::InvalidInput(format!(
            "with-voucher demand is only observed at tau_sq = {}, not {tau}",
            config.tau_sq
        )));
    }
    if kappa.is_some() {
        return Err(Error::UnsupportedCombination(
            "demand at p^kappa(tau_sq) is not observed; use a bounds module".into(),
        ));
    }
    shares.check_against(config)?;
    let c1 = cost_schedule(config, tau, None);
    let c0 = cost_schedule(config, Money::ZERO, None);
    let with: f64 = c1.iter().zip(&shares.with).map(|(c, p)| c.dollars() * p).sum();
    let without: f64 = c0.iter().zip(&shares.without).map(|(c, p)| c.dollars() * p).sum();
    Ok(with - without)
}

/// An integration segment of the demand-integral representation of AB.
///
/// On `(a_lo, a_hi)` schools `0..pinned` sit at `p_j(0)`, the others at
/// `p_j(tau) + a`, and the integrand is the demand summed over schools
/// `pinned..J`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Segment {
    pub tau: Money,
    pub a_lo: Money,
    pub a_hi: Money,
    pub pinned: usize,
}

impl Segment {
    pub fn width(&self) -> Money {
        self.a_hi - self.a_lo
    }

    /// Price vector in dollars at offset `a` (dollars).
    pub fn prices_at(&self, base: &[Money], p_tau: &[Money], a: f64) -> Vec<f64> {
        (0..base.len())
            .map(|m| if m < self.pinned { base[m].dollars() } else { p_tau[m].dollars() + a })
            .collect()
    }
}

/// Segments of AB(tau), or of AB^kappa(tau) when `kappa` is given. Zero-width
/// segments are dropped.
pub fn integration_segments(config: &ProgramConfig, tau: Money, kappa: Option<Money>) -> Vec<Segment> {
    let bp = breakpoints(config, tau);
    let j_tau = bp.j_tau;
    let a_at = |l: usize| if l <= j_tau { bp.a[l] } else { tau };
    let jk = kappa.map_or(0, |k| j_kappa(config, k));
    let mut segs = vec![Segment { tau, a_lo: Money::ZERO, a_hi: a_at(jk + 1), pinned: jk }];
    for l in (jk + 1)..=j_tau {
        segs.push(Segment { tau, a_lo: bp.a[l], a_hi: a_at(l + 1), pinned: l });
    }
    segs.retain(|s| s.a_hi > s.a_lo);
    segs
}

/// `min(p(0), p(tau) + a)` coordinatewise.
pub fn path_point(config: &ProgramConfig, tau: Money, a: Money) -> Vec<Money> {
    config
        .base_prices()
        .into_iter()
        .map(|p| p.min(p.sub_floor_zero(tau) + a))
        .collect()
}
