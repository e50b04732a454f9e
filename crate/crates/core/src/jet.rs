//! Truncated multivariate Taylor expansions over exact rationals.
//!
//! A [`JetPoly`] is a polynomial in `num_vars` variables whose terms of total
//! degree above `order` have been discarded. Every coefficient function in the
//! crate (connection coefficients, tensor components, morphism jets) is one of
//! these. Binary operations truncate to the smaller of the two orders, so a
//! result never claims more precision than its least precise input.
//!
//! Jets are centred: the variables measure displacement from a fixed base
//! point, and [`compose`] / [`invert_jet`] require inner jets that vanish at
//! the origin.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::linalg;

/// Exact rational scalar, always in lowest terms with a positive denominator.
pub type Rational = BigRational;

/// Shorthand for an integer-valued rational.
pub fn int(v: i64) -> Rational {
    Rational::from_integer(BigInt::from(v))
}

/// Shorthand for `num / den`.
pub fn ratio(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

/// Formats a rational as `"num/den"`.
pub fn format_rational(r: &Rational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// Parses `"num/den"` or a bare integer.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let s = s.trim();
    let bad = || Error::Parse(format!("not a rational: {s:?}"));
    match s.split_once('/') {
        Some((n, d)) => {
            let n: BigInt = n.trim().parse().map_err(|_| bad())?;
            let d: BigInt = d.trim().parse().map_err(|_| bad())?;
            if d.is_zero() {
                return Err(Error::Parse(format!("zero denominator in {s:?}")));
            }
            Ok(Rational::new(n, d))
        }
        None => {
            let n: BigInt = s.parse().map_err(|_| bad())?;
            Ok(Rational::from_integer(n))
        }
    }
}

/// Exponent vector of a monomial.
///
/// Ordered graded-lexicographically: total degree first, then the exponent
/// vectors lexicographically.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct MultiIndex(SmallVec<[u8; 16]>);

impl MultiIndex {
    pub fn zero(num_vars: usize) -> Self {
        MultiIndex(SmallVec::from_elem(0, num_vars))
    }

    pub fn unit(num_vars: usize, var: usize) -> Self {
        let mut e = Self::zero(num_vars);
        e.0[var] = 1;
        e
    }

    pub fn from_exponents(exps: &[u32]) -> Result<Self> {
        let mut out = SmallVec::with_capacity(exps.len());
        for &e in exps {
            let e = u8::try_from(e).map_err(|_| Error::Invalid(format!("exponent {e} too large")))?;
            out.push(e);
        }
        Ok(MultiIndex(out))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn exponents(&self) -> &[u8] {
        &self.0
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().map(|&e| e as u32).sum()
    }

    fn plus(&self, other: &MultiIndex) -> MultiIndex {
        MultiIndex(self.0.iter().zip(other.0.iter()).map(|(a, b)| a + b).collect())
    }
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree().cmp(&other.degree()).then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A truncated polynomial with rational coefficients.
///
/// Invariants: every stored exponent vector has length `num_vars` and total
/// degree at most `order`, and no stored coefficient is zero. Equality
/// compares the variable count and the normalized term map.
#[derive(Clone, Debug)]
pub struct JetPoly {
    num_vars: usize,
    order: u32,
    terms: BTreeMap<MultiIndex, Rational>,
}

impl PartialEq for JetPoly {
    fn eq(&self, other: &Self) -> bool {
        self.num_vars == other.num_vars && self.terms == other.terms
    }
}

impl Eq for JetPoly {}

/// Serialized form of one term: `{exponents: [..], coeff: "num/den"}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermRecord {
    pub exponents: Vec<u32>,
    pub coeff: String,
}

impl JetPoly {
    pub fn zero(num_vars: usize, order: u32) -> Self {
        JetPoly {
            num_vars,
            order,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(num_vars: usize, order: u32, c: Rational) -> Self {
        let mut p = Self::zero(num_vars, order);
        if !c.is_zero() {
            p.terms.insert(MultiIndex::zero(num_vars), c);
        }
        p
    }

    pub fn one(num_vars: usize, order: u32) -> Self {
        Self::constant(num_vars, order, Rational::one())
    }

    /// The coordinate function `x_var`.
    pub fn var(num_vars: usize, order: u32, var: usize) -> Result<Self> {
        if var >= num_vars {
            return Err(Error::VarOutOfRange { var, nvars: num_vars });
        }
        let mut p = Self::zero(num_vars, order);
        if order >= 1 {
            p.terms.insert(MultiIndex::unit(num_vars, var), Rational::one());
        }
        Ok(p)
    }

    /// Builds a jet from raw terms, summing duplicates and dropping zero
    /// coefficients and terms above `order`.
    pub fn from_terms<I>(num_vars: usize, order: u32, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (MultiIndex, Rational)>,
    {
        let mut p = Self::zero(num_vars, order);
        for (e, c) in terms {
            if e.len() != num_vars {
                return Err(Error::VarCountMismatch {
                    left: num_vars,
                    right: e.len(),
                });
            }
            if e.degree() <= order {
                add_term(&mut p.terms, e, c);
            }
        }
        p.prune();
        Ok(p)
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, &Rational)> {
        self.terms.iter()
    }

    /// Number of stored terms.
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, e: &MultiIndex) -> Rational {
        self.terms.get(e).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn constant_term(&self) -> Rational {
        self.coeff(&MultiIndex::zero(self.num_vars))
    }

    /// Coefficient of `x_var` in the linear part.
    pub fn linear_coeff(&self, var: usize) -> Rational {
        self.coeff(&MultiIndex::unit(self.num_vars, var))
    }

    /// Highest total degree present (0 for the zero jet).
    pub fn degree(&self) -> u32 {
        self.terms.keys().next_back().map_or(0, MultiIndex::degree)
    }

    fn prune(&mut self) {
        self.terms.retain(|_, c| !c.is_zero());
    }

    /// Drops every term above `order`; the result has order `min(order, self.order)`.
    pub fn truncate(&self, order: u32) -> JetPoly {
        let order = order.min(self.order);
        JetPoly {
            num_vars: self.num_vars,
            order,
            terms: self
                .terms
                .iter()
                .filter(|(e, _)| e.degree() <= order)
                .map(|(e, c)| (e.clone(), c.clone()))
                .collect(),
        }
    }

    fn check_vars(&self, other: &JetPoly) -> Result<()> {
        if self.num_vars != other.num_vars {
            return Err(Error::VarCountMismatch {
                left: self.num_vars,
                right: other.num_vars,
            });
        }
        Ok(())
    }

    pub fn checked_add(&self, other: &JetPoly) -> Result<JetPoly> {
        self.check_vars(other)?;
        let mut out = self.truncate(other.order);
        for (e, c) in &other.terms {
            if e.degree() <= out.order {
                add_term(&mut out.terms, e.clone(), c.clone());
            }
        }
        out.prune();
        Ok(out)
    }

    pub fn checked_sub(&self, other: &JetPoly) -> Result<JetPoly> {
        self.checked_add(&other.neg())
    }

    pub fn checked_mul(&self, other: &JetPoly) -> Result<JetPoly> {
        self.check_vars(other)?;
        let order = self.order.min(other.order);
        let mut terms = BTreeMap::new();
        for (ea, ca) in &self.terms {
            let da = ea.degree();
            if da > order {
                break;
            }
            for (eb, cb) in &other.terms {
                if da + eb.degree() > order {
                    break;
                }
                add_term(&mut terms, ea.plus(eb), ca * cb);
            }
        }
        let mut out = JetPoly {
            num_vars: self.num_vars,
            order,
            terms,
        };
        out.prune();
        Ok(out)
    }

    pub fn neg(&self) -> JetPoly {
        JetPoly {
            num_vars: self.num_vars,
            order: self.order,
            terms: self.terms.iter().map(|(e, c)| (e.clone(), -c)).collect(),
        }
    }

    pub fn scale(&self, s: &Rational) -> JetPoly {
        if s.is_zero() {
            return JetPoly::zero(self.num_vars, self.order);
        }
        JetPoly {
            num_vars: self.num_vars,
            order: self.order,
            terms: self.terms.iter().map(|(e, c)| (e.clone(), c * s)).collect(),
        }
    }

    /// `self + s * other`, the workhorse of index-loop formulas.
    pub fn add_scaled(&self, s: &Rational, other: &JetPoly) -> JetPoly {
        if s.is_zero() {
            return self.truncate(other.order);
        }
        self.checked_add(&other.scale(s)).expect("variable count mismatch")
    }

    /// Formal partial derivative; the order drops by one.
    pub fn partial(&self, var: usize) -> Result<JetPoly> {
        if var >= self.num_vars {
            return Err(Error::VarOutOfRange {
                var,
                nvars: self.num_vars,
            });
        }
        if self.order == 0 {
            return Err(Error::InsufficientOrder {
                needed: 1,
                available: 0,
            });
        }
        let mut terms = BTreeMap::new();
        for (e, c) in &self.terms {
            let k = e.0[var];
            if k == 0 {
                continue;
            }
            let mut d = e.clone();
            d.0[var] -= 1;
            terms.insert(d, c * int(k as i64));
        }
        Ok(JetPoly {
            num_vars: self.num_vars,
            order: self.order - 1,
            terms,
        })
    }

    /// Exact value at a point.
    pub fn evaluate(&self, point: &[Rational]) -> Result<Rational> {
        if point.len() != self.num_vars {
            return Err(Error::PointLength {
                expected: self.num_vars,
                got: point.len(),
            });
        }
        let mut acc = Rational::zero();
        for (e, c) in &self.terms {
            let mut t = c.clone();
            for (x, &k) in point.iter().zip(e.0.iter()) {
                if k > 0 {
                    t *= num_traits::pow(x.clone(), k as usize);
                }
            }
            acc += t;
        }
        Ok(acc)
    }

    /// Re-expresses the jet in new variables: old variable `k` becomes new
    /// variable `map[k]`. The order is unchanged.
    pub fn embed(&self, num_vars: usize, map: &[usize]) -> JetPoly {
        assert_eq!(map.len(), self.num_vars, "embedding arity");
        let terms = self
            .terms
            .iter()
            .map(|(e, c)| {
                let mut ne = MultiIndex::zero(num_vars);
                for (k, &x) in e.0.iter().enumerate() {
                    ne.0[map[k]] += x;
                }
                (ne, c.clone())
            })
            .collect();
        JetPoly {
            num_vars,
            order: self.order,
            terms,
        }
    }

    /// Embeds into a space whose first `self.num_vars` variables are ours.
    pub fn embed_prefix(&self, num_vars: usize) -> JetPoly {
        let map: Vec<usize> = (0..self.num_vars).collect();
        self.embed(num_vars, &map)
    }

    /// Taylor re-expansion about `point`: returns `q(h) = p(point + h)`,
    /// truncated to the original order. Exact when `p` is a polynomial of
    /// degree at most its order.
    pub fn recenter(&self, point: &[Rational]) -> Result<JetPoly> {
        if point.len() != self.num_vars {
            return Err(Error::PointLength {
                expected: self.num_vars,
                got: point.len(),
            });
        }
        let shifted: Vec<JetPoly> = point
            .iter()
            .enumerate()
            .map(|(k, x0)| {
                let v = JetPoly::var(self.num_vars, self.order, k).expect("in range");
                v.checked_add(&JetPoly::constant(self.num_vars, self.order, x0.clone()))
                    .expect("same vars")
            })
            .collect();
        let mut acc = JetPoly::zero(self.num_vars, self.order);
        for (e, c) in &self.terms {
            let mut t = JetPoly::constant(self.num_vars, self.order, c.clone());
            for (k, &x) in e.0.iter().enumerate() {
                for _ in 0..x {
                    t = &t * &shifted[k];
                }
            }
            acc = &acc + &t;
        }
        Ok(acc)
    }

    pub fn to_records(&self) -> Vec<TermRecord> {
        self.terms
            .iter()
            .map(|(e, c)| TermRecord {
                exponents: e.0.iter().map(|&x| x as u32).collect(),
                coeff: format_rational(c),
            })
            .collect()
    }

    pub fn from_records(num_vars: usize, order: u32, records: &[TermRecord]) -> Result<JetPoly> {
        let mut terms = Vec::with_capacity(records.len());
        for r in records {
            if r.exponents.len() != num_vars {
                return Err(Error::VarCountMismatch {
                    left: num_vars,
                    right: r.exponents.len(),
                });
            }
            let e = MultiIndex::from_exponents(&r.exponents)?;
            if e.degree() > order {
                return Err(Error::Invalid(format!(
                    "term of degree {} exceeds truncation order {order}",
                    e.degree()
                )));
            }
            terms.push((e, parse_rational(&r.coeff)?));
        }
        JetPoly::from_terms(num_vars, order, terms)
    }
}

fn add_term(terms: &mut BTreeMap<MultiIndex, Rational>, e: MultiIndex, c: Rational) {
    match terms.entry(e) {
        std::collections::btree_map::Entry::Vacant(v) => {
            v.insert(c);
        }
        std::collections::btree_map::Entry::Occupied(mut o) => {
            *o.get_mut() += c;
        }
    }
}

impl<'a> std::ops::Add<&'a JetPoly> for &'a JetPoly {
    type Output = JetPoly;
    fn add(self, rhs: &'a JetPoly) -> JetPoly {
        self.checked_add(rhs).expect("variable count mismatch")
    }
}

impl<'a> std::ops::Sub<&'a JetPoly> for &'a JetPoly {
    type Output = JetPoly;
    fn sub(self, rhs: &'a JetPoly) -> JetPoly {
        self.checked_sub(rhs).expect("variable count mismatch")
    }
}

impl<'a> std::ops::Mul<&'a JetPoly> for &'a JetPoly {
    type Output = JetPoly;
    fn mul(self, rhs: &'a JetPoly) -> JetPoly {
        self.checked_mul(rhs).expect("variable count mismatch")
    }
}

impl std::ops::Neg for &JetPoly {
    type Output = JetPoly;
    fn neg(self) -> JetPoly {
        JetPoly::neg(self)
    }
}

impl fmt::Display for JetPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (n, (e, c)) in self.terms.iter().enumerate() {
            let neg = c.is_negative();
            let mag = c.abs();
            if n == 0 {
                if neg {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {} ", if neg { '-' } else { '+' })?;
            }
            let mono: Vec<String> =
                e.0.iter()
                    .enumerate()
                    .filter(|(_, &k)| k > 0)
                    .map(|(v, &k)| if k == 1 { format!("x{v}") } else { format!("x{v}^{k}") })
                    .collect();
            if mono.is_empty() {
                write!(f, "{mag}")?;
            } else if mag.is_one() {
                write!(f, "{}", mono.join("*"))?;
            } else {
                write!(f, "{mag}*{}", mono.join("*"))?;
            }
        }
        Ok(())
    }
}

/// Substitutes `inners` into `outer`.
///
/// Every inner jet must vanish at the origin and all inners must share a
/// variable count and order. The result has order
/// `min(outer.order, inner order)`.
pub fn compose(outer: &JetPoly, inners: &[JetPoly]) -> Result<JetPoly> {
    if inners.len() != outer.num_vars {
        return Err(Error::Arity {
            expected: outer.num_vars,
            got: inners.len(),
        });
    }
    let Some(first) = inners.first() else {
        // zero-variable outer: a constant
        return Ok(outer.clone());
    };
    let (nv, inner_order) = (first.num_vars, first.order);
    for (index, g) in inners.iter().enumerate() {
        if g.num_vars != nv {
            return Err(Error::VarCountMismatch {
                left: nv,
                right: g.num_vars,
            });
        }
        if g.order != inner_order {
            return Err(Error::Invalid(format!(
                "inner jets must share an order ({} vs {})",
                inner_order, g.order
            )));
        }
        if !g.constant_term().is_zero() {
            return Err(Error::NonCenteredJet { index });
        }
    }
    let order = outer.order.min(inner_order);
    let inners: Vec<JetPoly> = inners.iter().map(|g| g.truncate(order)).collect();

    // powers[k][e] = inners[k]^e, built lazily up to the largest exponent used
    let mut max_exp = vec![0u8; outer.num_vars];
    for e in outer.terms.keys() {
        for (k, &x) in e.0.iter().enumerate() {
            max_exp[k] = max_exp[k].max(x);
        }
    }
    let powers: Vec<Vec<JetPoly>> = inners
        .iter()
        .zip(max_exp.iter())
        .map(|(g, &top)| {
            let mut pw = vec![JetPoly::one(nv, order)];
            for e in 1..=top as usize {
                let next = &pw[e - 1] * g;
                pw.push(next);
            }
            pw
        })
        .collect();

    let mut acc = JetPoly::zero(nv, order);
    for (e, c) in &outer.terms {
        if e.degree() > order {
            break;
        }
        let mut t = JetPoly::constant(nv, order, c.clone());
        for (k, &x) in e.0.iter().enumerate() {
            if x > 0 {
                t = &t * &powers[k][x as usize];
            }
        }
        for (te, tc) in t.terms {
            add_term(&mut acc.terms, te, tc);
        }
    }
    acc.prune();
    Ok(acc)
}

/// Composes a vector of jets with `inners` componentwise.
pub fn compose_all(outers: &[JetPoly], inners: &[JetPoly]) -> Result<Vec<JetPoly>> {
    outers.iter().map(|p| compose(p, inners)).collect()
}

/// The identity jet `(x_0, ..., x_{n-1})`.
pub fn identity_jet(num_vars: usize, order: u32) -> Vec<JetPoly> {
    (0..num_vars)
        .map(|k| JetPoly::var(num_vars, order, k).expect("in range"))
        .collect()
}

/// Inverts a centred square system of jets with invertible linear part.
///
/// Uses the fixed-point iteration `g <- A^{-1} (x - N(g))` where `A` is the
/// linear part of `f` and `N` the remainder; each pass fixes one more degree.
pub fn invert_jet(f: &[JetPoly]) -> Result<Vec<JetPoly>> {
    let n = f.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let order = f.iter().map(JetPoly::order).min().unwrap_or(0);
    for (index, p) in f.iter().enumerate() {
        if p.num_vars != n {
            return Err(Error::Arity {
                expected: n,
                got: p.num_vars,
            });
        }
        if !p.constant_term().is_zero() {
            return Err(Error::NonCenteredJet { index });
        }
    }
    let f: Vec<JetPoly> = f.iter().map(|p| p.truncate(order)).collect();
    let lin: Vec<Vec<Rational>> = f.iter().map(|p| (0..n).map(|j| p.linear_coeff(j)).collect()).collect();
    let lin_inv = linalg::inverse(&lin).ok_or(Error::Singular)?;
    let nonlinear: Vec<JetPoly> = f
        .iter()
        .map(|p| {
            let mut q = p.clone();
            for j in 0..n {
                q.terms.remove(&MultiIndex::unit(n, j));
            }
            q
        })
        .collect();
    let x = identity_jet(n, order);
    let apply_lin_inv = |v: &[JetPoly]| -> Vec<JetPoly> {
        (0..n)
            .map(|k| {
                let mut acc = JetPoly::zero(n, order);
                for j in 0..n {
                    acc = acc.add_scaled(&lin_inv[k][j], &v[j]);
                }
                acc
            })
            .collect()
    };
    let mut g = apply_lin_inv(&x);
    for _ in 1..order.max(1) {
        let ng = compose_all(&nonlinear, &g)?;
        let rhs: Vec<JetPoly> = x.iter().zip(ng.iter()).map(|(a, b)| a - b).collect();
        g = apply_lin_inv(&rhs);
    }
    Ok(g)
}

/// Matrix of jets, stored row-major as nested vectors.
pub type JetMatrix = Vec<Vec<JetPoly>>;

pub fn jet_matmul(a: &[Vec<JetPoly>], b: &[Vec<JetPoly>]) -> JetMatrix {
    let rows = a.len();
    let inner = b.len();
    let cols = b.first().map_or(0, Vec::len);
    let nv = a[0][0].num_vars;
    let order = a
        .iter()
        .chain(b.iter())
        .flatten()
        .map(JetPoly::order)
        .min()
        .unwrap_or(0);
    (0..rows)
        .map(|i| {
            (0..cols)
                .map(|j| {
                    let mut acc = JetPoly::zero(nv, order);
                    for k in 0..inner {
                        acc = &acc + &(&a[i][k] * &b[k][j]);
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

/// Inverts a square matrix of jets whose constant part is invertible, via the
/// terminating Neumann series `sum_k (-C^{-1} N)^k C^{-1}`.
pub fn invert_jet_matrix(m: &[Vec<JetPoly>]) -> Result<JetMatrix> {
    let n = m.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let nv = m[0][0].num_vars;
    let order = m.iter().flatten().map(JetPoly::order).min().unwrap_or(0);
    let c: Vec<Vec<Rational>> = m
        .iter()
        .map(|row| row.iter().map(JetPoly::constant_term).collect())
        .collect();
    let c_inv = linalg::inverse(&c).ok_or(Error::Singular)?;
    let c_inv_jet: JetMatrix = c_inv
        .iter()
        .map(|row| row.iter().map(|v| JetPoly::constant(nv, order, v.clone())).collect())
        .collect();
    // step = -C^{-1} N, where N = M - C has no constant term
    let nil: JetMatrix = m
        .iter()
        .zip(c.iter())
        .map(|(row, crow)| {
            row.iter()
                .zip(crow.iter())
                .map(|(p, k)| (p - &JetPoly::constant(nv, order, k.clone())).truncate(order))
                .collect()
        })
        .collect();
    let step: JetMatrix = jet_matmul(&c_inv_jet, &nil)
        .into_iter()
        .map(|row| row.iter().map(JetPoly::neg).collect())
        .collect();
    let mut term = c_inv_jet.clone();
    let mut acc = c_inv_jet;
    for _ in 0..order {
        term = jet_matmul(&step, &term);
        if term.iter().flatten().all(JetPoly::is_zero) {
            break;
        }
        acc = acc
            .iter()
            .zip(term.iter())
            .map(|(ra, rt)| ra.iter().zip(rt.iter()).map(|(a, t)| a + t).collect())
            .collect();
    }
    Ok(acc)
}
