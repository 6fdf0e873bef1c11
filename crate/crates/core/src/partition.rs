//! Finite partition of the relevant price set and the reduced box index.
//!
//! Each path `a -> min(p(0), p(tau) + a)` is cut at a closed set of
//! breakpoints so that, across all paths, the coordinate projections of any two
//! pieces are either equal or disjoint.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{apply_voucher, breakpoints, cost_prices, j_kappa, ProgramConfig};
use crate::money::Money;

/// Projection of a box on one voucher-school coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Coord {
    Point(Money),
    #[serde(rename = "interval")]
    Open(Money, Money),
}

/// Relative position of two coordinate projections.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Equal,
    /// Every element of `self` exceeds every element of `other`.
    Above,
    Below,
    Overlap,
}

impl Coord {
    pub fn lo(&self) -> Money {
        match *self {
            Coord::Point(t) => t,
            Coord::Open(lo, _) => lo,
        }
    }

    pub fn hi(&self) -> Money {
        match *self {
            Coord::Point(t) => t,
            Coord::Open(_, hi) => hi,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        match *self {
            Coord::Point(t) => x == t.dollars(),
            Coord::Open(lo, hi) => lo.dollars() < x && x < hi.dollars(),
        }
    }

    pub fn contains_money(&self, x: Money) -> bool {
        match *self {
            Coord::Point(t) => x == t,
            Coord::Open(lo, hi) => lo < x && x < hi,
        }
    }

    pub fn relation(&self, other: &Coord) -> Relation {
        if self == other {
            return Relation::Equal;
        }
        // sets are open at interval ends, so touching endpoints do not overlap
        // unless both sides contain the shared value
        let above = match (self, other) {
            (Coord::Point(a), Coord::Point(b)) => a > b,
            _ => self.lo() >= other.hi(),
        };
        let below = match (self, other) {
            (Coord::Point(a), Coord::Point(b)) => a < b,
            _ => self.hi() <= other.lo(),
        };
        if above {
            Relation::Above
        } else if below {
            Relation::Below
        } else {
            Relation::Overlap
        }
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coord::Point(t) => write!(f, "{t}"),
            Coord::Open(lo, hi) => write!(f, "({lo},{hi})"),
        }
    }
}

/// Product of per-coordinate points and open intervals.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct AxisSet(pub Vec<Coord>);

impl AxisSet {
    pub fn point(p: &[Money]) -> Self {
        AxisSet(p.iter().map(|&t| Coord::Point(t)).collect())
    }

    pub fn is_singleton(&self) -> bool {
        self.0.iter().all(|c| matches!(c, Coord::Point(_)))
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        self.0.len() == p.len() && self.0.iter().zip(p).all(|(c, &x)| c.contains(x))
    }

    pub fn contains_money(&self, p: &[Money]) -> bool {
        self.0.len() == p.len() && self.0.iter().zip(p).all(|(c, &x)| c.contains_money(x))
    }

    /// Equal-or-disjoint check on every coordinate.
    pub fn overlap_compatible(&self, other: &AxisSet) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a.relation(b) != Relation::Overlap)
    }

    /// Copy with the first `n` coordinates replaced by the given points.
    pub fn pinned(&self, n: usize, base: &[Money]) -> AxisSet {
        AxisSet(
            self.0
                .iter()
                .enumerate()
                .map(|(j, &c)| if j < n { Coord::Point(base[j]) } else { c })
                .collect(),
        )
    }
}

impl fmt::Display for AxisSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, " x ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, "]")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "origin", rename_all = "lowercase")]
pub enum Origin {
    Path { tau: Money, a_lo: Money, a_hi: Money },
    Singleton { tau: Money },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Element {
    pub set: AxisSet,
    pub origins: Vec<Origin>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PartitionU {
    pub tau_sq: Money,
    pub tau_c: Option<Money>,
    pub elements: Vec<Element>,
}

impl PartitionU {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn taus(&self) -> Vec<Money> {
        path_taus(self.tau_sq, self.tau_c)
    }

    /// Pieces of the path for `tau`, sorted by `a_lo`, as `(a_lo, a_hi, element)`.
    pub fn path_pieces(&self, tau: Money) -> Vec<(Money, Money, usize)> {
        let mut out: Vec<_> = self
            .elements
            .iter()
            .enumerate()
            .flat_map(|(i, e)| {
                e.origins.iter().filter_map(move |o| match *o {
                    Origin::Path { tau: t, a_lo, a_hi } if t == tau => Some((a_lo, a_hi, i)),
                    _ => None,
                })
            })
            .collect();
        out.sort();
        out
    }

    /// Indices of elements containing the point.
    pub fn covering(&self, p: &[f64]) -> Vec<usize> {
        (0..self.elements.len()).filter(|&i| self.elements[i].set.contains(p)).collect()
    }
}

fn path_taus(tau_sq: Money, tau_c: Option<Money>) -> Vec<Money> {
    let mut t = vec![tau_sq];
    if let Some(c) = tau_c {
        if c != tau_sq {
            t.push(c);
        }
    }
    t
}

const MAX_CLOSURE_ROUNDS: usize = 100_000;
const MAX_BREAKPOINTS: usize = 1_000_000;

/// Closed breakpoint sets of every path, returned in the order
/// `[tau_sq, tau_c]` (a single set when `tau_c` is absent or equal).
pub fn breakpoint_closure(config: &ProgramConfig, tau_sq: Money, tau_c: Option<Money>) -> Result<Vec<Vec<Money>>> {
    let taus = path_taus(tau_sq, tau_c);
    let base = config.base_prices();
    let p_tau: Vec<Vec<Money>> = taus.iter().map(|&t| apply_voucher(config, t)).collect();
    let mut sets: Vec<BTreeSet<Money>> = taus
        .iter()
        .map(|&t| breakpoints(config, t).a.into_iter().collect())
        .collect();
    let mut fresh: Vec<Vec<Money>> = sets.iter().map(|s| s.iter().copied().collect()).collect();
    let mut rounds = 0;
    while fresh.iter().any(|f| !f.is_empty()) {
        rounds += 1;
        if rounds > MAX_CLOSURE_ROUNDS {
            return Err(Error::InternalInvariantViolation("breakpoint closure did not terminate".into()));
        }
        let mut next = vec![Vec::new(); taus.len()];
        for (i, &tau) in taus.iter().enumerate() {
            let mut added = BTreeSet::new();
            for (k, new_k) in fresh.iter().enumerate() {
                if k == i {
                    continue;
                }
                for &a in new_k {
                    for j in 0..base.len() {
                        let v = base[j].min(a + p_tau[k][j]) - p_tau[i][j];
                        if v > Money::ZERO && v < tau && !sets[i].contains(&v) {
                            added.insert(v);
                        }
                    }
                }
            }
            next[i] = added.into_iter().collect();
        }
        for (i, n) in next.iter().enumerate() {
            sets[i].extend(n.iter().copied());
            if sets[i].len() > MAX_BREAKPOINTS {
                return Err(Error::InternalInvariantViolation("breakpoint closure exploded".into()));
            }
        }
        fresh = next;
    }
    Ok(sets.into_iter().map(|s| s.into_iter().collect()).collect())
}

fn piece_box(base: &[Money], p_tau: &[Money], a_lo: Money, a_hi: Money) -> Result<AxisSet> {
    let mut coords = Vec::with_capacity(base.len());
    for j in 0..base.len() {
        let lo = p_tau[j] + a_lo;
        let hi = p_tau[j] + a_hi;
        if lo >= base[j] {
            coords.push(Coord::Point(base[j]));
        } else if hi <= base[j] {
            coords.push(Coord::Open(lo, hi));
        } else {
            return Err(Error::InternalInvariantViolation(format!(
                "path piece ({a_lo},{a_hi}) crosses the kink of coordinate {j}"
            )));
        }
    }
    Ok(AxisSet(coords))
}

pub fn build_partition(config: &ProgramConfig, tau_sq: Money, tau_c: Option<Money>) -> Result<PartitionU> {
    let tau_c = tau_c.filter(|&c| c != tau_sq);
    let taus = path_taus(tau_sq, tau_c);
    let closure = breakpoint_closure(config, tau_sq, tau_c)?;
    let base = config.base_prices();
    let mut elements: Vec<Element> = Vec::new();
    let mut index: HashMap<AxisSet, usize> = HashMap::new();
    let mut add = |set: AxisSet, origin: Origin, elements: &mut Vec<Element>| {
        if let Some(&i) = index.get(&set) {
            elements[i].origins.push(origin);
        } else {
            index.insert(set.clone(), elements.len());
            elements.push(Element { set, origins: vec![origin] });
        }
    };
    for (&tau, a) in taus.iter().zip(&closure) {
        let p_tau = apply_voucher(config, tau);
        for w in a.windows(2) {
            let set = piece_box(&base, &p_tau, w[0], w[1])?;
            add(set, Origin::Path { tau, a_lo: w[0], a_hi: w[1] }, &mut elements);
        }
    }
    let mut singles = vec![Money::ZERO];
    singles.extend(taus.iter().copied());
    for tau in singles {
        add(AxisSet::point(&apply_voucher(config, tau)), Origin::Singleton { tau }, &mut elements);
    }
    for i in 0..elements.len() {
        for k in (i + 1)..elements.len() {
            if !elements[i].set.overlap_compatible(&elements[k].set) {
                return Err(Error::InternalInvariantViolation(format!(
                    "boxes {} and {} overlap partially",
                    elements[i].set, elements[k].set
                )));
            }
        }
    }
    Ok(PartitionU { tau_sq, tau_c, elements })
}

/// Ordered, deduplicated boxes `W^r` (or `W^{kappa,r}`).
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedIndex {
    pub boxes: Vec<AxisSet>,
    lookup: HashMap<AxisSet, usize>,
}

impl ReducedIndex {
    pub fn from_boxes(boxes: impl IntoIterator<Item = AxisSet>) -> Self {
        let mut out = ReducedIndex { boxes: Vec::new(), lookup: HashMap::new() };
        for b in boxes {
            out.insert(b);
        }
        out
    }

    fn insert(&mut self, b: AxisSet) -> usize {
        if let Some(&i) = self.lookup.get(&b) {
            return i;
        }
        self.lookup.insert(b.clone(), self.boxes.len());
        self.boxes.push(b);
        self.boxes.len() - 1
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn position(&self, b: &AxisSet) -> Option<usize> {
        self.lookup.get(b).copied()
    }

    pub fn require(&self, b: &AxisSet) -> Result<usize> {
        self.position(b).ok_or_else(|| Error::MissingBox(b.to_string()))
    }
}

/// `W^r = {h(u)}`; with `kappa`, also the pinned boxes `h^kappa(u)` of the
/// `tau_sq` path and the singleton `p^kappa(tau_sq)`.
pub fn reduced_index(config: &ProgramConfig, u: &PartitionU, kappa: Option<Money>) -> ReducedIndex {
    let mut idx = ReducedIndex::from_boxes(u.elements.iter().map(|e| e.set.clone()));
    if let Some(k) = kappa {
        let jk = j_kappa(config, k);
        let base = config.base_prices();
        for (_, _, e) in u.path_pieces(u.tau_sq) {
            idx.insert(u.elements[e].set.pinned(jk, &base));
        }
        idx.insert(AxisSet::point(&cost_prices(config, u.tau_sq, Some(k))));
    }
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::path_point;

    fn m(d: i64) -> Money {
        Money::from_dollars_int(d)
    }

    fn open(a: i64, b: i64) -> Coord {
        Coord::Open(m(a), m(b))
    }

    fn pt(a: i64) -> Coord {
        Coord::Point(m(a))
    }

    fn cfg() -> ProgramConfig {
        ProgramConfig::from_dollars(&[2000, 6000], 4000, 5000, 200).unwrap()
    }

    #[test]
    fn closure_two_paths() {
        let c = ProgramConfig::from_dollars(&[2000, 6000], 1500, 0, 0).unwrap();
        let a = breakpoint_closure(&c, m(1500), Some(m(4000))).unwrap();
        assert_eq!(a[0], vec![m(0), m(1500)]);
        assert_eq!(a[1], vec![m(0), m(500), m(2000), m(2500), m(4000)]);
    }

    #[test]
    fn closure_single_path() {
        let a = breakpoint_closure(&cfg(), m(4000), None).unwrap();
        assert_eq!(a, vec![vec![m(0), m(2000), m(4000)]]);
        assert_eq!(breakpoint_closure(&cfg(), m(4000), Some(m(4000))).unwrap(), a);
    }

    #[test]
    fn eight_element_example() {
        let c = ProgramConfig::from_dollars(&[2000, 6000], 1500, 0, 0).unwrap();
        let u = build_partition(&c, m(1500), Some(m(4000))).unwrap();
        assert_eq!(u.len(), 8);
        let sets: Vec<AxisSet> = u.elements.iter().map(|e| e.set.clone()).collect();
        for want in [
            AxisSet(vec![open(500, 2000), open(4500, 6000)]),
            AxisSet(vec![open(0, 500), open(2000, 2500)]),
            AxisSet(vec![open(500, 2000), open(2500, 4000)]),
            AxisSet(vec![pt(2000), open(4000, 4500)]),
            AxisSet(vec![pt(2000), open(4500, 6000)]),
            AxisSet(vec![pt(2000), pt(6000)]),
            AxisSet(vec![pt(500), pt(4500)]),
            AxisSet(vec![pt(0), pt(2000)]),
        ] {
            assert!(sets.contains(&want), "missing {want}");
        }
        assert_eq!(reduced_index(&c, &u, None).len(), 8);
    }

    #[test]
    fn single_tau_partition() {
        let u = build_partition(&cfg(), m(4000), None).unwrap();
        assert_eq!(u.len(), 4);
        assert_eq!(u.elements[0].set, AxisSet(vec![open(0, 2000), open(2000, 4000)]));
        assert_eq!(u.elements[1].set, AxisSet(vec![pt(2000), open(4000, 6000)]));
        assert_eq!(build_partition(&cfg(), m(4000), Some(m(4000))).unwrap(), u);
    }

    #[test]
    fn kappa_index() {
        let c = cfg();
        let u = build_partition(&c, m(4000), None).unwrap();
        let w = reduced_index(&c, &u, Some(m(2000)));
        assert_eq!(w.len(), 6);
        assert!(w.position(&AxisSet(vec![pt(2000), open(2000, 4000)])).is_some());
        assert!(w.position(&AxisSet(vec![pt(2000), pt(2000)])).is_some());
        assert_eq!(reduced_index(&c, &u, Some(m(0))), reduced_index(&c, &u, None));
    }

    #[test]
    fn membership_on_paths() {
        let c = ProgramConfig::from_dollars(&[2000, 6000], 1500, 0, 0).unwrap();
        let u = build_partition(&c, m(1500), Some(m(4000))).unwrap();
        for tau in [1500, 4000] {
            for step in 1..400 {
                let a = Money::from_cents(step * 1000 + 7);
                if a >= m(tau) {
                    break;
                }
                let p: Vec<f64> = path_point(&c, m(tau), a).iter().map(|x| x.dollars()).collect();
                assert_eq!(u.covering(&p).len(), 1, "tau {tau} a {a}");
            }
        }
    }

    #[test]
    fn relation_semantics() {
        assert_eq!(open(0, 500).relation(&pt(500)), Relation::Below);
        assert_eq!(pt(500).relation(&open(0, 500)), Relation::Above);
        assert_eq!(open(0, 500).relation(&open(500, 900)), Relation::Below);
        assert_eq!(open(0, 600).relation(&open(500, 900)), Relation::Overlap);
        assert_eq!(open(0, 600).relation(&pt(300)), Relation::Overlap);
    }
}
