//! Reduced nonparametric programs: demand masses `beta_j(w)` on the boxes of
//! `W^r`, restricted by box, adding-up, monotonicity and data rows.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{ConstraintSystem, Row, RowKind};
use crate::model::{
    apply_voucher, cost_prices, cost_schedule, integration_segments, school_index, EnrollmentShares, Part,
    ProgramConfig, WelfareTarget,
};
use crate::money::Money;
use crate::partition::{build_partition, reduced_index, AxisSet, PartitionU, ReducedIndex, Relation};
use crate::result::{BoundProblem, BoundResult};

/// Which subsets `J'` of the equal-coordinate set enter the pairwise shape rows.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapePolicy {
    /// The empty set, every singleton and the full equal set.
    #[default]
    Default,
    /// Every subset; refused when the equal set has more than 12 members.
    Full,
}

pub const FULL_POLICY_LIMIT: usize = 12;

/// Flat position of `beta_j(w)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BetaLayout {
    pub n_alternatives: usize,
    pub n_boxes: usize,
}

impl BetaLayout {
    pub fn index(&self, j: usize, w: usize) -> usize {
        w * self.n_alternatives + j
    }

    pub fn dim(&self) -> usize {
        self.n_alternatives * self.n_boxes
    }
}

/// Partition and index for a target. Paths are those of `tau_sq` and, when it
/// differs, of the target amount.
pub fn prepare_index(target: &WelfareTarget, config: &ProgramConfig) -> Result<(PartitionU, ReducedIndex)> {
    target.validate(config)?;
    let u = build_partition(config, config.tau_sq, target.counterfactual_tau(config))?;
    let w = reduced_index(config, &u, target.kappa);
    Ok((u, w))
}

fn subsets(eq: &[usize], policy: ShapePolicy) -> Result<Vec<Vec<usize>>> {
    match policy {
        ShapePolicy::Default => {
            let mut out = vec![Vec::new()];
            out.extend(eq.iter().map(|&j| vec![j]));
            if eq.len() > 1 {
                out.push(eq.to_vec());
            }
            Ok(out)
        }
        ShapePolicy::Full => {
            if eq.len() > FULL_POLICY_LIMIT {
                return Err(Error::InvalidInput(format!(
                    "full shape enumeration needs at most {FULL_POLICY_LIMIT} equal coordinates, got {}",
                    eq.len()
                )));
            }
            Ok((0u32..(1 << eq.len()))
                .map(|mask| (0..eq.len()).filter(|&i| mask & (1 << i) != 0).map(|i| eq[i]).collect())
                .collect())
        }
    }
}

/// Constraint set `B^r` over the boxes of `index`.
pub fn build_constraints(
    config: &ProgramConfig,
    index: &ReducedIndex,
    shares: &EnrollmentShares,
    policy: ShapePolicy,
) -> Result<ConstraintSystem> {
    shares.check_against(config)?;
    let n_alt = config.n_alternatives();
    let layout = BetaLayout { n_alternatives: n_alt, n_boxes: index.len() };
    let mut sys = ConstraintSystem::new(layout.dim(), 0.0, 1.0);
    for w in 0..index.len() {
        sys.push_eq(RowKind::SumToOne, Row::new((0..n_alt).map(|j| (layout.index(j, w), 1.0)).collect(), 1.0));
    }
    let w0 = index.require(&AxisSet::point(&apply_voucher(config, Money::ZERO)))?;
    let w1 = index.require(&AxisSet::point(&apply_voucher(config, config.tau_sq)))?;
    for (w, p) in [(w0, &shares.without), (w1, &shares.with)] {
        for (j, &v) in p.iter().enumerate() {
            sys.push_eq(RowKind::Data, Row::new(vec![(layout.index(j, w), 1.0)], v));
        }
    }
    let mut seen: HashSet<(usize, usize, Vec<usize>)> = HashSet::new();
    let boxes = &index.boxes;
    for wa in 0..boxes.len() {
        for wb in 0..boxes.len() {
            if wa == wb {
                continue;
            }
            // rows: sum_{S} beta(wa) >= sum_{S} beta(wb), S = {j : wb(j) > wa(j)} u J'
            let mut gt = Vec::new();
            let mut eq = vec![0, 1];
            for (j, (ca, cb)) in boxes[wa].0.iter().zip(&boxes[wb].0).enumerate() {
                match cb.relation(ca) {
                    Relation::Equal => eq.push(school_index(j)),
                    Relation::Above => gt.push(school_index(j)),
                    Relation::Below => {}
                    Relation::Overlap => {
                        return Err(Error::InternalInvariantViolation(format!(
                            "boxes {} and {} overlap partially",
                            boxes[wa], boxes[wb]
                        )))
                    }
                }
            }
            for extra in subsets(&eq, policy)? {
                let mut s: Vec<usize> = gt.iter().chain(extra.iter()).copied().collect();
                s.sort_unstable();
                if s.is_empty() || s.len() == n_alt {
                    continue;
                }
                let comp: Vec<usize> = (0..n_alt).filter(|j| s.binary_search(j).is_err()).collect();
                let key = if s.len() < comp.len() || (s.len() == comp.len() && wa < wb) {
                    (wa, wb, s)
                } else {
                    (wb, wa, comp)
                };
                if seen.contains(&key) {
                    continue;
                }
                let (hi_box, lo_box, set) = &key;
                let mut coeffs = Vec::with_capacity(2 * set.len());
                for &j in set {
                    coeffs.push((layout.index(j, *hi_box), 1.0));
                    coeffs.push((layout.index(j, *lo_box), -1.0));
                }
                sys.push_ge(RowKind::Shape, Row::new(coeffs, 0.0));
                seen.insert(key);
            }
        }
    }
    Ok(sys)
}

/// Objective coefficients of `target` over `beta`.
pub fn build_objective(
    target: &WelfareTarget,
    u: &PartitionU,
    index: &ReducedIndex,
    config: &ProgramConfig,
) -> Result<Vec<f64>> {
    let n_alt = config.n_alternatives();
    let layout = BetaLayout { n_alternatives: n_alt, n_boxes: index.len() };
    let base = config.base_prices();
    let mut c = vec![0.0; layout.dim()];
    for comp in target.components(config) {
        match comp.part {
            Part::Benefit => {
                let pieces = u.path_pieces(comp.tau);
                for seg in integration_segments(config, comp.tau, comp.kappa) {
                    let mut covered = Money::ZERO;
                    for &(a_lo, a_hi, e) in pieces.iter().filter(|p| p.0 >= seg.a_lo && p.1 <= seg.a_hi) {
                        let w = index.require(&u.elements[e].set.pinned(seg.pinned, &base))?;
                        let width = (a_hi - a_lo).dollars();
                        for j in seg.pinned..config.n_schools() {
                            c[layout.index(school_index(j), w)] += comp.sign * width;
                        }
                        covered += a_hi - a_lo;
                    }
                    if covered != seg.width() {
                        return Err(Error::MissingBox(format!(
                            "segment ({},{}) of tau {} is not tiled by the partition",
                            seg.a_lo, seg.a_hi, comp.tau
                        )));
                    }
                }
            }
            Part::Cost => {
                let w1 = index.require(&AxisSet::point(&cost_prices(config, comp.tau, comp.kappa)))?;
                let w0 = index.require(&AxisSet::point(&apply_voucher(config, Money::ZERO)))?;
                let c1 = cost_schedule(config, comp.tau, comp.kappa);
                let c0 = cost_schedule(config, Money::ZERO, None);
                for j in 0..n_alt {
                    c[layout.index(j, w1)] += comp.sign * c1[j].dollars();
                    c[layout.index(j, w0)] -= comp.sign * c0[j].dollars();
                }
            }
        }
    }
    Ok(c)
}

/// Full bound program for a target.
pub fn problem(
    target: &WelfareTarget,
    shares: &EnrollmentShares,
    config: &ProgramConfig,
    policy: ShapePolicy,
) -> Result<BoundProblem> {
    let (u, w) = prepare_index(target, config)?;
    let system = build_constraints(config, &w, shares, policy)?;
    let objective = build_objective(target, &u, &w, config)?;
    Ok(BoundProblem { system, objective })
}

pub fn bounds(
    target: &WelfareTarget,
    shares: &EnrollmentShares,
    config: &ProgramConfig,
    policy: ShapePolicy,
) -> Result<BoundResult> {
    problem(target, shares, config, policy)?.solve()
}
