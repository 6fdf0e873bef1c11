//! Exact vertex enumeration by double description over integer rays.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, ToPrimitive, Zero};

use welfare_bounds::lp::LinearProgram;

pub type Q = BigRational;

/// Inputs are decimal data, snapped to a 1e-9 lattice.
fn q(x: f64) -> Q {
    assert!(x.is_finite());
    Q::new(BigInt::from((x * 1e9).round() as i64), BigInt::from(1_000_000_000i64))
}

/// `{x : eq x = e, ineq x <= b}` with exact entries.
pub struct ExactPolytope {
    pub n: usize,
    pub eq: Vec<(Vec<Q>, Q)>,
    pub le: Vec<(Vec<Q>, Q)>,
}

impl ExactPolytope {
    /// All rows and finite bounds of `lp`, lazy rows included.
    pub fn from_lp(lp: &LinearProgram) -> Self {
        let n = lp.n_vars();
        let dense = |coeffs: &[(usize, f64)]| {
            let mut v = vec![Q::zero(); n];
            for &(j, a) in coeffs {
                v[j] += q(a);
            }
            v
        };
        let eq = lp.eq.iter().map(|r| (dense(&r.coeffs), q(r.rhs))).collect();
        let mut le: Vec<(Vec<Q>, Q)> = lp.ineq.iter().map(|r| (dense(&r.coeffs), q(r.rhs))).collect();
        for j in 0..n {
            let mut e = vec![Q::zero(); n];
            if lp.upper[j].is_finite() {
                e[j] = Q::one();
                le.push((e.clone(), q(lp.upper[j])));
            }
            if lp.lower[j].is_finite() {
                e[j] = -Q::one();
                le.push((e, -q(lp.lower[j])));
            }
        }
        ExactPolytope { n, eq, le }
    }

    /// Vertices, or `None` when empty. Panics on an unbounded set.
    pub fn vertices(&self) -> Option<Vec<Vec<Q>>> {
        let (x0, basis) = self.eliminate()?;
        let d = basis.len();
        // homogenized rows h . (y, t) >= 0
        let mut rows: Vec<Vec<BigInt>> = Vec::new();
        for (a, b) in &self.le {
            let mut h: Vec<Q> = basis.iter().map(|col| -dot(a, col)).collect();
            h.push(b - dot(a, &x0));
            if h[..d].iter().all(|v| v.is_zero()) {
                if h[d].is_negative() {
                    return None;
                }
                continue;
            }
            rows.push(integerize(&h));
        }
        let mut t = vec![BigInt::zero(); d + 1];
        t[d] = BigInt::one();
        rows.push(t);
        let rays = double_description(&rows, d + 1);
        let verts: Vec<Vec<Q>> = rays
            .iter()
            .filter(|r| r[d].is_positive())
            .map(|r| {
                let t = Q::from_integer(r[d].clone());
                let y: Vec<Q> = r[..d].iter().map(|v| Q::from_integer(v.clone()) / &t).collect();
                let mut x = x0.clone();
                for (yk, col) in y.iter().zip(&basis) {
                    for (xi, ci) in x.iter_mut().zip(col) {
                        *xi += yk * ci;
                    }
                }
                x
            })
            .collect();
        assert!(rays.iter().all(|r| !r[d].is_zero() || r.iter().all(|v| v.is_zero())), "unbounded polytope");
        (!verts.is_empty()).then_some(verts)
    }

    /// Particular solution and null-space basis of the equality rows.
    fn eliminate(&self) -> Option<(Vec<Q>, Vec<Vec<Q>>)> {
        let n = self.n;
        let mut m: Vec<Vec<Q>> = self
            .eq
            .iter()
            .map(|(a, b)| {
                let mut r = a.clone();
                r.push(b.clone());
                r
            })
            .collect();
        let mut pivots = Vec::new();
        let mut row = 0;
        for col in 0..n {
            let Some(p) = (row..m.len()).find(|&i| !m[i][col].is_zero()) else { continue };
            m.swap(row, p);
            let inv = Q::one() / &m[row][col];
            for v in m[row].iter_mut() {
                *v *= &inv;
            }
            for i in 0..m.len() {
                if i != row && !m[i][col].is_zero() {
                    let f = m[i][col].clone();
                    for k in 0..=n {
                        let s = &f * &m[row][k];
                        m[i][k] -= s;
                    }
                }
            }
            pivots.push(col);
            row += 1;
        }
        if m[row..].iter().any(|r| !r[n].is_zero()) {
            return None;
        }
        let mut x0 = vec![Q::zero(); n];
        for (i, &c) in pivots.iter().enumerate() {
            x0[c] = m[i][n].clone();
        }
        let free: Vec<usize> = (0..n).filter(|c| !pivots.contains(c)).collect();
        let basis = free
            .iter()
            .map(|&f| {
                let mut v = vec![Q::zero(); n];
                v[f] = Q::one();
                for (i, &c) in pivots.iter().enumerate() {
                    v[c] = -m[i][f].clone();
                }
                v
            })
            .collect();
        Some((x0, basis))
    }
}

fn dot(a: &[Q], b: &[Q]) -> Q {
    a.iter().zip(b).fold(Q::zero(), |s, (x, y)| s + x * y)
}

fn integerize(h: &[Q]) -> Vec<BigInt> {
    let l = h.iter().fold(BigInt::one(), |l, v| num::integer::lcm(l, v.denom().clone()));
    primitive(h.iter().map(|v| (v * Q::from_integer(l.clone())).to_integer()).collect())
}

fn primitive(v: Vec<BigInt>) -> Vec<BigInt> {
    let g = v.iter().fold(BigInt::zero(), |g, x| num::integer::gcd(g, x.clone()));
    if g.is_zero() || g.is_one() {
        v
    } else {
        v.into_iter().map(|x| x / &g).collect()
    }
}

fn idot(a: &[BigInt], b: &[BigInt]) -> BigInt {
    a.iter().zip(b).fold(BigInt::zero(), |s, (x, y)| s + x * y)
}

#[derive(Clone)]
struct Ray {
    v: Vec<BigInt>,
    tight: Vec<u64>,
}

fn set_bit(s: &mut Vec<u64>, i: usize) {
    if s.len() <= i / 64 {
        s.resize(i / 64 + 1, 0);
    }
    s[i / 64] |= 1 << (i % 64);
}

fn and(a: &[u64], b: &[u64]) -> Vec<u64> {
    a.iter().zip(b).map(|(x, y)| x & y).collect()
}

fn subset(a: &[u64], b: &[u64]) -> bool {
    a.iter().enumerate().all(|(i, x)| x & !b.get(i).copied().unwrap_or(0) == 0)
}

fn count(a: &[u64]) -> usize {
    a.iter().map(|x| x.count_ones() as usize).sum()
}

/// Extreme rays of `{z : rows z >= 0}`, assumed pointed.
fn double_description(rows: &[Vec<BigInt>], dim: usize) -> Vec<Vec<BigInt>> {
    // initial basis from independent rows
    let mut chosen = Vec::new();
    let mut echelon: Vec<Vec<Q>> = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        let mut v: Vec<Q> = r.iter().map(|x| Q::from_integer(x.clone())).collect();
        for e in &echelon {
            let p = e.iter().position(|x| !x.is_zero()).unwrap();
            if !v[p].is_zero() {
                let f = &v[p] / &e[p];
                for k in 0..dim {
                    let s = &f * &e[k];
                    v[k] -= s;
                }
            }
        }
        if v.iter().any(|x| !x.is_zero()) {
            echelon.push(v);
            chosen.push(i);
            if chosen.len() == dim {
                break;
            }
        }
    }
    assert_eq!(chosen.len(), dim, "constraint matrix lacks full column rank");
    // rays of the initial simplicial cone: columns of the inverse
    let h: Vec<Vec<Q>> = chosen.iter().map(|&i| rows[i].iter().map(|x| Q::from_integer(x.clone())).collect()).collect();
    let inv = invert(h);
    let words = rows.len().div_ceil(64);
    let mut rays: Vec<Ray> = (0..dim)
        .map(|c| {
            let col: Vec<Q> = (0..dim).map(|r| inv[r][c].clone()).collect();
            let v = integerize(&col);
            let mut tight = vec![0u64; words];
            for (k, &i) in chosen.iter().enumerate() {
                if k != c {
                    set_bit(&mut tight, i);
                }
            }
            Ray { v, tight }
        })
        .collect();
    for (i, r) in rows.iter().enumerate() {
        if chosen.contains(&i) {
            continue;
        }
        let vals: Vec<BigInt> = rays.iter().map(|ray| idot(r, &ray.v)).collect();
        let pos: Vec<usize> = (0..rays.len()).filter(|&k| vals[k].is_positive()).collect();
        let neg: Vec<usize> = (0..rays.len()).filter(|&k| vals[k].is_negative()).collect();
        if neg.is_empty() {
            for (k, ray) in rays.iter_mut().enumerate() {
                if vals[k].is_zero() {
                    set_bit(&mut ray.tight, i);
                }
            }
            continue;
        }
        let mut next: Vec<Ray> = Vec::new();
        for &a in &pos {
            for &b in &neg {
                let common = and(&rays[a].tight, &rays[b].tight);
                if count(&common) + 2 < dim {
                    continue;
                }
                let adjacent = (0..rays.len()).all(|k| k == a || k == b || !subset(&common, &rays[k].tight));
                if !adjacent {
                    continue;
                }
                let v: Vec<BigInt> = rays[b]
                    .v
                    .iter()
                    .zip(&rays[a].v)
                    .map(|(rb, ra)| &vals[a] * rb - &vals[b] * ra)
                    .collect();
                let mut tight = common;
                set_bit(&mut tight, i);
                next.push(Ray { v: primitive(v), tight });
            }
        }
        for (k, mut ray) in rays.into_iter().enumerate() {
            if vals[k].is_zero() {
                set_bit(&mut ray.tight, i);
                next.push(ray);
            } else if vals[k].is_positive() {
                next.push(ray);
            }
        }
        rays = next;
    }
    rays.into_iter().map(|r| r.v).collect()
}

fn invert(mut a: Vec<Vec<Q>>) -> Vec<Vec<Q>> {
    let n = a.len();
    let mut inv: Vec<Vec<Q>> = (0..n).map(|i| (0..n).map(|j| if i == j { Q::one() } else { Q::zero() }).collect()).collect();
    for c in 0..n {
        let p = (c..n).find(|&i| !a[i][c].is_zero()).expect("nonsingular");
        a.swap(c, p);
        inv.swap(c, p);
        let f = Q::one() / &a[c][c];
        for k in 0..n {
            a[c][k] *= &f;
            inv[c][k] *= &f;
        }
        for i in 0..n {
            if i != c && !a[i][c].is_zero() {
                let g = a[i][c].clone();
                for k in 0..n {
                    let s = &g * &a[c][k];
                    a[i][k] -= s;
                    let s = &g * &inv[c][k];
                    inv[i][k] -= s;
                }
            }
        }
    }
    inv
}

/// Exact `(min, max)` of the objective of `lp` over its feasible set.
pub fn exact_bounds(lp: &LinearProgram) -> Option<(f64, f64)> {
    let verts = ExactPolytope::from_lp(lp).vertices()?;
    let c: Vec<Q> = lp.objective.iter().map(|&v| q(v)).collect();
    let vals: Vec<Q> = verts.iter().map(|x| dot(&c, x)).collect();
    let lo = vals.iter().min().unwrap().to_f64().unwrap();
    let hi = vals.iter().max().unwrap().to_f64().unwrap();
    Some((lo, hi))
}
