//! Bundle-morphism jets, their action on connections and tensors, naturality
//! checks, family ranks, and the weight equation.
//!
//! A [`MorphismJet`] is a fiber-linear map `(x, y) ↦ (f(x), a(x) y)` given by
//! jets at the origin of local coordinates, with `f(0) = 0`. Every transform
//! returns jets at the origin of the image coordinates.

use num_traits::Zero;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::connections::{ClassicalConnection, GeneralLinearConnection};
use crate::error::{Error, Result};
use crate::jet::{
    compose, compose_all, format_rational, int, invert_jet, invert_jet_matrix, jet_matmul, JetMatrix, JetPoly,
    MultiIndex, Rational,
};
use crate::linalg::{self, Matrix};
use crate::natural::{self, ClassicalConnectionOnE, ConnectionOnJ1E, Params14, Params15};
use crate::random;
use crate::tensor::{indices, IndexClass, SlotKind, Space, SpaceKind, TensorField};

/// Jet at a point of a local fiber-linear bundle automorphism.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MorphismJet {
    m: usize,
    n: usize,
    center: Vec<Rational>,
    base: Vec<JetPoly>,
    gauge: JetMatrix,
}

impl MorphismJet {
    /// `base` are `m` centred jets in `m` variables, `gauge` an `n × n` matrix
    /// of jets in the same variables. `center` only labels the point.
    pub fn new(center: Vec<Rational>, base: Vec<JetPoly>, gauge: JetMatrix) -> Result<Self> {
        let m = base.len();
        let n = gauge.len();
        if center.len() != m {
            return Err(Error::PointLength {
                expected: m,
                got: center.len(),
            });
        }
        if gauge.iter().any(|row| row.len() != n) {
            return Err(Error::Shape("gauge must be square".into()));
        }
        let order = base
            .iter()
            .chain(gauge.iter().flatten())
            .map(JetPoly::order)
            .min()
            .unwrap_or(0);
        if order < 2 {
            return Err(Error::InsufficientOrder {
                needed: 2,
                available: order,
            });
        }
        for (index, p) in base.iter().enumerate() {
            if p.num_vars() != m {
                return Err(Error::Arity {
                    expected: m,
                    got: p.num_vars(),
                });
            }
            if !p.constant_term().is_zero() {
                return Err(Error::NonCenteredJet { index });
            }
        }
        if gauge.iter().flatten().any(|p| p.num_vars() != m) {
            return Err(Error::Shape("gauge jets must live on the base".into()));
        }
        let lin: Matrix = base
            .iter()
            .map(|p| (0..m).map(|j| p.linear_coeff(j)).collect())
            .collect();
        let a0: Matrix = gauge
            .iter()
            .map(|r| r.iter().map(JetPoly::constant_term).collect())
            .collect();
        if linalg::inverse(&lin).is_none() || linalg::inverse(&a0).is_none() {
            return Err(Error::Singular);
        }
        let base = base.iter().map(|p| p.truncate(order)).collect();
        let gauge = gauge
            .iter()
            .map(|r| r.iter().map(|p| p.truncate(order)).collect())
            .collect();
        Ok(MorphismJet {
            m,
            n,
            center,
            base,
            gauge,
        })
    }

    pub fn identity(m: usize, n: usize, order: u32) -> Self {
        let base = crate::jet::identity_jet(m, order);
        let gauge = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| JetPoly::constant(m, order, int(i64::from(i == j))))
                    .collect()
            })
            .collect();
        MorphismJet::new(vec![Rational::zero(); m], base, gauge).expect("identity is regular")
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> u32 {
        self.base[0].order()
    }

    pub fn center(&self) -> &[Rational] {
        &self.center
    }

    pub fn base(&self) -> &[JetPoly] {
        &self.base
    }

    pub fn gauge(&self) -> &JetMatrix {
        &self.gauge
    }

    pub fn truncate(&self, order: u32) -> MorphismJet {
        MorphismJet {
            m: self.m,
            n: self.n,
            center: self.center.clone(),
            base: self.base.iter().map(|p| p.truncate(order)).collect(),
            gauge: self
                .gauge
                .iter()
                .map(|r| r.iter().map(|p| p.truncate(order)).collect())
                .collect(),
        }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &MorphismJet) -> Result<MorphismJet> {
        if self.m != other.m || self.n != other.n {
            return Err(Error::Shape("morphisms of different bundles".into()));
        }
        let base = compose_all(&self.base, &other.base)?;
        let outer_gauge: JetMatrix = self
            .gauge
            .iter()
            .map(|r| compose_all(r, &other.base))
            .collect::<Result<_>>()?;
        let gauge = jet_matmul(&outer_gauge, &other.gauge);
        MorphismJet::new(other.center.clone(), base, gauge)
    }

    pub fn inverse(&self) -> Result<MorphismJet> {
        let g = invert_jet(&self.base)?;
        let a_inv = invert_jet_matrix(&self.gauge)?;
        let gauge: JetMatrix = a_inv.iter().map(|r| compose_all(r, &g)).collect::<Result<_>>()?;
        MorphismJet::new(self.center.clone(), g, gauge)
    }

    /// `(a, ∂_λ a, ∂f)` at the origin.
    pub fn one_jet(&self) -> GroupElement11 {
        let (m, n) = (self.m, self.n);
        let a = self
            .gauge
            .iter()
            .map(|r| r.iter().map(JetPoly::constant_term).collect())
            .collect();
        let a1 = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| (0..m).map(|l| self.gauge[i][j].linear_coeff(l)).collect())
                    .collect()
            })
            .collect();
        let b = self
            .base
            .iter()
            .map(|p| (0..m).map(|j| p.linear_coeff(j)).collect())
            .collect();
        GroupElement11::new(a, a1, b).expect("regular morphism")
    }

    fn jacobian(&self) -> Result<JetMatrix> {
        self.base
            .iter()
            .map(|f| (0..self.m).map(|v| f.partial(v)).collect())
            .collect()
    }

    fn lift(&self, p: &JetPoly, space: Space) -> JetPoly {
        p.embed_prefix(space.num_vars())
    }

    /// The induced map on `E` in `E` coordinates.
    pub fn e_map(&self) -> Vec<JetPoly> {
        let space = Space::total(self.m, self.n);
        let order = self.order();
        let mut out: Vec<JetPoly> = self.base.iter().map(|p| self.lift(p, space)).collect();
        for i in 0..self.n {
            let mut acc = space.zero(order);
            for p in 0..self.n {
                acc = &acc + &(&self.lift(&self.gauge[i][p], space) * &space.y_poly(order, p));
            }
            out.push(acc);
        }
        out
    }

    /// `W^i_λ = (∂_ρ a^i_p y^p + a^i_p y^p_ρ) J̃^ρ_λ` as jets in `J¹E`
    /// coordinates, stored `[i][λ]`.
    fn w_components(&self) -> Result<Vec<Vec<JetPoly>>> {
        let space = Space::jet(self.m, self.n);
        let (m, n) = (self.m, self.n);
        let order = self.order() - 1;
        let jinv = invert_jet_matrix(&self.jacobian()?)?;
        let da: Vec<JetMatrix> = (0..m)
            .map(|r| {
                self.gauge
                    .iter()
                    .map(|row| row.iter().map(|p| p.partial(r)).collect())
                    .collect()
            })
            .collect::<Result<_>>()?;
        let mut out = vec![vec![space.zero(order); m]; n];
        for (i, row) in out.iter_mut().enumerate() {
            for rho in 0..m {
                let mut pre = space.zero(order);
                for p in 0..n {
                    pre = &pre + &(&self.lift(&da[rho][i][p], space) * &space.y_poly(order, p));
                    pre = &pre + &(&self.lift(&self.gauge[i][p], space) * &space.w_poly(order, p, rho));
                }
                for (lam, slot) in row.iter_mut().enumerate() {
                    *slot = &*slot + &(&pre * &self.lift(&jinv[rho][lam], space));
                }
            }
        }
        Ok(out)
    }

    /// The prolonged map on `J¹E` in `J¹E` coordinates.
    pub fn jet_map(&self) -> Result<Vec<JetPoly>> {
        let space = Space::jet(self.m, self.n);
        let order = self.order() - 1;
        let mut out: Vec<JetPoly> = self
            .e_map()
            .iter()
            .map(|p| p.embed_prefix(space.num_vars()).truncate(order))
            .collect();
        for row in self.w_components()? {
            out.extend(row);
        }
        Ok(out)
    }
}

/// Transition matrices of one morphism on one space, truncated to a working order.
struct Frame {
    space: Space,
    base_up: JetMatrix,
    base_down: JetMatrix,
    fiber_up: JetMatrix,
    fiber_down: JetMatrix,
    total_up: Option<JetMatrix>,
    total_down: Option<JetMatrix>,
    inverse_map: Vec<JetPoly>,
}

fn lift_matrix(mat: &JetMatrix, nv: usize, order: u32) -> JetMatrix {
    mat.iter()
        .map(|r| r.iter().map(|p| p.embed_prefix(nv).truncate(order)).collect())
        .collect()
}

impl Frame {
    fn new(phi: &MorphismJet, kind: SpaceKind, order: u32) -> Result<Frame> {
        let (m, n) = (phi.m, phi.n);
        let space = Space { kind, m, n };
        let nv = space.num_vars();
        // one extra order for the Jacobian and one for the jet prolongation
        let work = phi.truncate(phi.order().min(order + 2));
        let jac = work.jacobian()?;
        let jac_inv = invert_jet_matrix(&jac)?;
        let a_inv = invert_jet_matrix(&work.gauge)?;
        let (total_up, total_down) = if kind == SpaceKind::M {
            (None, None)
        } else {
            let e = Space::total(m, n);
            let emap = work.e_map();
            let je: JetMatrix = emap
                .iter()
                .map(|f| (0..e.num_vars()).map(|v| f.partial(v)).collect())
                .collect::<Result<_>>()?;
            let je_inv = invert_jet_matrix(&je)?;
            (Some(lift_matrix(&je, nv, order)), Some(lift_matrix(&je_inv, nv, order)))
        };
        let inv = work.inverse()?;
        let inverse_map = match kind {
            SpaceKind::M => inv.base.clone(),
            SpaceKind::E => inv.e_map(),
            SpaceKind::J1E => inv.jet_map()?,
        };
        Ok(Frame {
            space,
            base_up: lift_matrix(&jac, nv, order),
            base_down: lift_matrix(&jac_inv, nv, order),
            fiber_up: lift_matrix(&work.gauge, nv, order),
            fiber_down: lift_matrix(&a_inv, nv, order),
            total_up,
            total_down,
            inverse_map: inverse_map.iter().map(|p| p.truncate(order)).collect(),
        })
    }

    fn matrix(&self, kind: SlotKind) -> Result<&JetMatrix> {
        let up = kind.is_up();
        match (kind.class(), up) {
            (IndexClass::Base, true) => Ok(&self.base_up),
            (IndexClass::Base, false) => Ok(&self.base_down),
            (IndexClass::Fiber, true) => Ok(&self.fiber_up),
            (IndexClass::Fiber, false) => Ok(&self.fiber_down),
            (IndexClass::Total, true) => self.total_up.as_ref().ok_or(Error::WrongSpace {
                expected: SpaceKind::E,
                got: SpaceKind::M,
            }),
            (IndexClass::Total, false) => self.total_down.as_ref().ok_or(Error::WrongSpace {
                expected: SpaceKind::E,
                got: SpaceKind::M,
            }),
        }
    }

    /// Multiplies every slot by its transition matrix, without moving the point.
    fn apply_slots(&self, t: &TensorField) -> Result<TensorField> {
        let mut cur = t.clone();
        for (slot, &kind) in t.signature().iter().enumerate() {
            let mat = self.matrix(kind)?;
            let prev = cur.clone();
            let dim = kind.dim(self.space.m, self.space.n);
            let mut other = vec![0; t.rank()];
            cur = TensorField::from_fn(self.space, t.signature().to_vec(), t.order(), |idx| {
                other.copy_from_slice(idx);
                let mut acc = self.space.zero(t.order());
                for b in 0..dim {
                    other[slot] = b;
                    let c = if kind.is_up() {
                        &mat[idx[slot]][b]
                    } else {
                        &mat[b][idx[slot]]
                    };
                    if !c.is_zero() {
                        acc = &acc + &(c * prev.get(&other));
                    }
                }
                acc
            });
        }
        Ok(cur)
    }

    fn pull(&self, t: &TensorField) -> Result<TensorField> {
        let inv: Vec<JetPoly> = self.inverse_map.iter().map(|p| p.truncate(t.order())).collect();
        let comps = t
            .components()
            .iter()
            .map(|p| compose(p, &inv))
            .collect::<Result<Vec<_>>>()?;
        TensorField::from_components(self.space, t.signature().to_vec(), comps)
    }
}

/// Pushes a tensor field forward along `phi`.
pub fn transform_tensor(t: &TensorField, phi: &MorphismJet) -> Result<TensorField> {
    check_bundle(t.space(), phi)?;
    let frame = Frame::new(phi, t.space().kind, t.order())?;
    frame.pull(&frame.apply_slots(t)?)
}

fn check_bundle(space: Space, phi: &MorphismJet) -> Result<()> {
    if space.m != phi.m || space.n != phi.n {
        return Err(Error::Shape(format!(
            "morphism of ({}, {}) applied to a field on ({}, {})",
            phi.m, phi.n, space.m, space.n
        )));
    }
    Ok(())
}

/// `D'_B{}^A{}_C = (∂_C J^A_B + J^A_{A'} D_{B'}{}^{A'}{}_{C'}) J̃^{B'}_B J̃^{C'}_C`,
/// then moved to the image point. `coeffs` uses `[B][A][C]` storage and
/// `jac` / `jac_inv` are the (lifted) Jacobian and its inverse.
fn christoffel(frame: &Frame, coeffs: &TensorField, jac: &JetMatrix, map: &[JetPoly]) -> Result<TensorField> {
    let order = coeffs.order();
    let nv = frame.space.num_vars();
    let dim = jac.len();
    let second: Vec<Vec<Vec<JetPoly>>> = (0..dim)
        .map(|a| {
            (0..dim)
                .map(|b| (0..dim).map(|c| map[a].partial(b).and_then(|p| p.partial(c))).collect())
                .collect()
        })
        .collect::<Result<_>>()?;
    let second: Vec<Vec<Vec<JetPoly>>> = second
        .iter()
        .map(|x| {
            x.iter()
                .map(|y| y.iter().map(|p| p.embed_prefix(nv).truncate(order)).collect())
                .collect()
        })
        .collect();
    let sig = coeffs.signature().to_vec();
    let inhom = TensorField::from_fn(frame.space, sig.clone(), order, |idx| {
        // the inhomogeneous term has old indices; the slot pass converts them
        let (b, a, c) = (idx[0], idx[1], idx[2]);
        let mut acc = frame.space.zero(order);
        for ap in 0..dim {
            let inv = jac_inverse_entry(frame, &sig, a, ap);
            if !inv.is_zero() {
                acc = &acc + &(&inv * &second[ap][b][c]);
            }
        }
        acc
    });
    // J̃ (∂∂Φ) is a valid old-index tensor term, so one slot pass handles both
    let total = coeffs.checked_add(&inhom)?;
    frame.pull(&frame.apply_slots(&total)?)
}

fn jac_inverse_entry(frame: &Frame, sig: &[SlotKind], a: usize, ap: usize) -> JetPoly {
    let down = SlotKind::new(sig[1].class(), false);
    frame.matrix(down).expect("frame has the slot")[a][ap].clone()
}

/// Pushes a classical connection on `M` forward along `phi`.
pub fn transform_classical(l: &ClassicalConnection, phi: &MorphismJet) -> Result<ClassicalConnection> {
    check_bundle(Space::base(l.m(), l.n()), phi)?;
    need(l.order(), 1)?;
    let frame = Frame::new(phi, SpaceKind::M, l.order())?;
    let work = phi.truncate(phi.order().min(l.order() + 2));
    let as_dac = l.table().permute(&[1, 0, 2])?;
    let out = christoffel(&frame, &as_dac, &frame.base_up, &work.base)?;
    let table = out.permute(&[1, 0, 2])?;
    let symmetric = l.is_symmetric();
    ClassicalConnection::from_table(l.m(), l.n(), table.components().to_vec(), symmetric)
}

/// Pushes a classical connection on `E` forward along `phi`.
pub fn transform_connection_e(d: &ClassicalConnectionOnE, phi: &MorphismJet) -> Result<ClassicalConnectionOnE> {
    check_bundle(d.space(), phi)?;
    let frame = Frame::new(phi, SpaceKind::E, d.order())?;
    let work = phi.truncate(phi.order().min(d.order() + 2));
    let je = frame.total_up.clone().expect("E frame");
    let out = christoffel(&frame, d.as_tensor(), &je, &work.e_map())?;
    ClassicalConnectionOnE::from_tensor(out)
}

/// `K'^i_{kν} = (∂_γ a^i_j + a^i_p K^p_{jγ}) ã^j_k J̃^γ_ν`, moved to the image point.
pub fn transform_linear(k: &GeneralLinearConnection, phi: &MorphismJet) -> Result<GeneralLinearConnection> {
    check_bundle(Space::base(k.m(), k.n()), phi)?;
    let frame = Frame::new(phi, SpaceKind::M, k.order())?;
    let (m, n) = (k.m(), k.n());
    let order = k.order();
    let work = phi.truncate(phi.order().min(order + 2));
    let da: Vec<JetMatrix> = (0..m)
        .map(|g| {
            work.gauge
                .iter()
                .map(|r| r.iter().map(|p| p.partial(g).map(|q| q.truncate(order))).collect())
                .collect()
        })
        .collect::<Result<_>>()?;
    // ∂a ã + a K ã is the old-index combination with value i, argument k, form γ
    let inner = TensorField::from_fn(k.table().space(), k.table().signature().to_vec(), order, |idx| {
        let (i, kk, g) = (idx[0], idx[1], idx[2]);
        let mut acc = JetPoly::zero(m, order);
        for j in 0..n {
            let mut s = da[g][i][j].clone();
            for p in 0..n {
                s = &s + &(&frame.fiber_up[i][p] * k.get(p, j, g));
            }
            acc = &acc + &(&s * &frame.fiber_down[j][kk]);
        }
        acc
    });
    // only the form slot still needs J̃
    let mut out = inner.clone();
    for idx in indices(&[n, n, m]) {
        let mut acc = JetPoly::zero(m, order);
        for g in 0..m {
            acc = &acc + &(inner.get(&[idx[0], idx[1], g]) * &frame.base_down[g][idx[2]]);
        }
        out.set(&idx, acc);
    }
    let out = frame.pull(&out)?;
    GeneralLinearConnection::from_table(m, n, out.components().to_vec())
}

/// Pushes a connection on `J¹E → E` forward along the prolongation of `phi`:
/// `Γ'_B = (∂_A W + ∂_w W Γ_A^w) J̃^A_B`, moved to the image point.
pub fn transform_connection_j1e(g: &ConnectionOnJ1E, phi: &MorphismJet) -> Result<ConnectionOnJ1E> {
    check_bundle(g.space(), phi)?;
    let space = g.space();
    let (m, n) = (space.m, space.n);
    let e_dim = m + n;
    let order = g.order();
    let frame = Frame::new(phi, SpaceKind::J1E, order)?;
    let work = phi.truncate(phi.order().min(order + 2));
    let w = work.w_components()?;
    let jinv = frame.total_down.as_ref().expect("J1E frame");
    let pre = TensorField::from_fn(space, g.as_tensor().signature().to_vec(), order, |idx| {
        let (a, i, lam) = (idx[0], idx[1], idx[2]);
        let mut acc = w[i][lam].partial(a).expect("in range").truncate(order);
        for p in 0..n {
            for rho in 0..m {
                let dw = w[i][lam].partial(space.w(p, rho)).expect("in range").truncate(order);
                if !dw.is_zero() {
                    acc = &acc + &(&dw * g.get(a, p, rho));
                }
            }
        }
        acc
    });
    let mut out = pre.clone();
    for idx in indices(&[e_dim, n, m]) {
        let mut acc = space.zero(order);
        for a in 0..e_dim {
            acc = &acc + &(pre.get(&[a, idx[1], idx[2]]) * &jinv[a][idx[0]]);
        }
        out.set(&idx, acc);
    }
    ConnectionOnJ1E::from_tensor(frame.pull(&out)?)
}

fn need(order: u32, needed: u32) -> Result<()> {
    if order < needed {
        return Err(Error::InsufficientOrder {
            needed,
            available: order,
        });
    }
    Ok(())
}

/// Element of `W^{(1,1)}_{m,n}G`: `a^i_j`, `a^i_{jλ}`, `a^λ_μ`, with cached inverses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupElement11 {
    pub a: Matrix,
    /// `a1[i][j][λ] = a^i_{jλ}`.
    pub a1: Vec<Matrix>,
    pub b: Matrix,
    a_inv: Matrix,
    b_inv: Matrix,
    a1_inv: Vec<Matrix>,
}

impl GroupElement11 {
    pub fn new(a: Matrix, a1: Vec<Matrix>, b: Matrix) -> Result<Self> {
        let n = a.len();
        let m = b.len();
        let a_inv = linalg::inverse(&a).ok_or(Error::Singular)?;
        let b_inv = linalg::inverse(&b).ok_or(Error::Singular)?;
        if a1.len() != n || a1.iter().any(|r| r.len() != n || r.iter().any(|c| c.len() != m)) {
            return Err(Error::Shape("a1 must be n × n × m".into()));
        }
        // ã^i_{jμ} = -ã^i_p a^p_{qρ} ã^q_j b̃^ρ_μ
        let mut a1_inv = vec![vec![vec![Rational::zero(); m]; n]; n];
        for i in 0..n {
            for j in 0..n {
                for mu in 0..m {
                    let mut acc = Rational::zero();
                    for p in 0..n {
                        for q in 0..n {
                            for rho in 0..m {
                                acc -= &a_inv[i][p] * &a1[p][q][rho] * &a_inv[q][j] * &b_inv[rho][mu];
                            }
                        }
                    }
                    a1_inv[i][j][mu] = acc;
                }
            }
        }
        Ok(GroupElement11 {
            a,
            a1,
            b,
            a_inv,
            b_inv,
            a1_inv,
        })
    }

    pub fn identity(m: usize, n: usize) -> Self {
        GroupElement11::new(
            linalg::identity(n),
            vec![vec![vec![Rational::zero(); m]; n]; n],
            linalg::identity(m),
        )
        .expect("identity")
    }

    pub fn m(&self) -> usize {
        self.b.len()
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn a_inv(&self) -> &Matrix {
        &self.a_inv
    }

    pub fn b_inv(&self) -> &Matrix {
        &self.b_inv
    }

    pub fn a1_inv(&self) -> &[Matrix] {
        &self.a1_inv
    }

    /// `self · other`: act by `other` first.
    pub fn compose(&self, other: &GroupElement11) -> GroupElement11 {
        let (m, n) = (self.m(), self.n());
        let a = linalg::matmul(&self.a, &other.a);
        let b = linalg::matmul(&self.b, &other.b);
        let mut a1 = vec![vec![vec![Rational::zero(); m]; n]; n];
        for i in 0..n {
            for j in 0..n {
                for lam in 0..m {
                    let mut acc = Rational::zero();
                    for p in 0..n {
                        for rho in 0..m {
                            acc += &self.a1[i][p][rho] * &other.b[rho][lam] * &other.a[p][j];
                        }
                        acc += &self.a[i][p] * &other.a1[p][j][lam];
                    }
                    a1[i][j][lam] = acc;
                }
            }
        }
        GroupElement11::new(a, a1, b).expect("product of regular elements")
    }
}

/// Numeric `(1,2)`-tensor on the standard fiber, stored `[B][A][C]`.
pub type FiberTensor = Vec<Vec<Vec<Rational>>>;

/// The action on `ℝ^{(m+n)*} ⊗ ℝ^{m+n} ⊗ ℝ^{(m+n)*}` over the fiber point `y`,
/// written out block by block. Returns the new value and `ȳ = a y`.
pub fn action_2_1_to_2_8(g: &GroupElement11, phi: &FiberTensor, y: &[Rational]) -> (FiberTensor, Vec<Rational>) {
    let (m, n) = (g.m(), g.n());
    let a = &g.a;
    let at = &g.a_inv;
    let bm = &g.b;
    let bt = &g.b_inv;
    // a^i_{pρ} y^p
    let a1y = |i: usize, rho: usize| (0..n).fold(Rational::zero(), |s, p| s + &g.a1[i][p][rho] * &y[p]);
    // ã^s_{pμ} a^p_q y^q
    let aty = |s: usize, mu: usize| {
        let mut acc = Rational::zero();
        for p in 0..n {
            for q in 0..n {
                acc += &g.a1_inv[s][p][mu] * &a[p][q] * &y[q];
            }
        }
        acc
    };
    let f = |b: usize, a_: usize, c: usize| &phi[b][a_][c];
    let fib = |i: usize| m + i;
    let mut out = vec![vec![vec![Rational::zero(); m + n]; m + n]; m + n];

    // fiber argument, fiber value, fiber form
    for j in 0..n {
        for i in 0..n {
            for k in 0..n {
                let mut acc = Rational::zero();
                for s in 0..n {
                    for t in 0..n {
                        let w = &at[s][j] * &at[t][k];
                        for r in 0..n {
                            acc += &a[i][r] * f(fib(s), fib(r), fib(t)) * &w;
                        }
                        for rho in 0..m {
                            acc += a1y(i, rho) * f(fib(s), rho, fib(t)) * &w;
                        }
                    }
                }
                out[fib(j)][fib(i)][fib(k)] = acc;
            }
        }
    }
    // fiber argument, fiber value, base form
    for j in 0..n {
        for i in 0..n {
            for nu in 0..m {
                let mut acc = Rational::zero();
                for s in 0..n {
                    for r in 0..n {
                        for tau in 0..m {
                            acc += &a[i][r] * f(fib(s), fib(r), tau) * &at[s][j] * &bt[tau][nu];
                        }
                        for t in 0..n {
                            acc += &a[i][r] * f(fib(s), fib(r), fib(t)) * &at[s][j] * aty(t, nu);
                        }
                    }
                    for rho in 0..m {
                        for t in 0..n {
                            acc += a1y(i, rho) * f(fib(s), rho, fib(t)) * &at[s][j] * aty(t, nu);
                        }
                        for tau in 0..m {
                            acc += a1y(i, rho) * f(fib(s), rho, tau) * &at[s][j] * &bt[tau][nu];
                        }
                    }
                }
                out[fib(j)][fib(i)][nu] = acc;
            }
        }
    }
    // base argument, fiber value, fiber form
    for mu in 0..m {
        for i in 0..n {
            for k in 0..n {
                let mut acc = Rational::zero();
                for t in 0..n {
                    for r in 0..n {
                        for sigma in 0..m {
                            acc += &a[i][r] * f(sigma, fib(r), fib(t)) * &bt[sigma][mu] * &at[t][k];
                        }
                        for s in 0..n {
                            acc += &a[i][r] * f(fib(s), fib(r), fib(t)) * aty(s, mu) * &at[t][k];
                        }
                    }
                    for rho in 0..m {
                        for s in 0..n {
                            acc += a1y(i, rho) * f(fib(s), rho, fib(t)) * aty(s, mu) * &at[t][k];
                        }
                        for sigma in 0..m {
                            acc += a1y(i, rho) * f(sigma, rho, fib(t)) * &bt[sigma][mu] * &at[t][k];
                        }
                    }
                }
                out[mu][fib(i)][fib(k)] = acc;
            }
        }
    }
    // base argument, fiber value, base form; the fourth term carries a^q_m
    for mu in 0..m {
        for i in 0..n {
            for nu in 0..m {
                let mut acc = Rational::zero();
                for r in 0..n {
                    for sigma in 0..m {
                        for tau in 0..m {
                            acc += &a[i][r] * f(sigma, fib(r), tau) * &bt[sigma][mu] * &bt[tau][nu];
                        }
                        for t in 0..n {
                            acc += &a[i][r] * f(sigma, fib(r), fib(t)) * &bt[sigma][mu] * aty(t, nu);
                        }
                    }
                    for s in 0..n {
                        for tau in 0..m {
                            acc += &a[i][r] * f(fib(s), fib(r), tau) * aty(s, mu) * &bt[tau][nu];
                        }
                        for t in 0..n {
                            acc += &a[i][r] * f(fib(s), fib(r), fib(t)) * aty(s, mu) * aty(t, nu);
                        }
                    }
                }
                for rho in 0..m {
                    let c = a1y(i, rho);
                    if c.is_zero() {
                        continue;
                    }
                    for s in 0..n {
                        for t in 0..n {
                            acc += &c * f(fib(s), rho, fib(t)) * aty(s, mu) * aty(t, nu);
                        }
                        for tau in 0..m {
                            acc += &c * f(fib(s), rho, tau) * aty(s, mu) * &bt[tau][nu];
                        }
                    }
                    for sigma in 0..m {
                        for t in 0..n {
                            acc += &c * f(sigma, rho, fib(t)) * &bt[sigma][mu] * aty(t, nu);
                        }
                        for tau in 0..m {
                            acc += &c * f(sigma, rho, tau) * &bt[sigma][mu] * &bt[tau][nu];
                        }
                    }
                }
                out[mu][fib(i)][nu] = acc;
            }
        }
    }
    // fiber argument, base value, fiber form
    for j in 0..n {
        for lam in 0..m {
            for k in 0..n {
                let mut acc = Rational::zero();
                for rho in 0..m {
                    for s in 0..n {
                        for t in 0..n {
                            acc += &bm[lam][rho] * f(fib(s), rho, fib(t)) * &at[s][j] * &at[t][k];
                        }
                    }
                }
                out[fib(j)][lam][fib(k)] = acc;
            }
        }
    }
    // fiber argument, base value, base form
    for j in 0..n {
        for lam in 0..m {
            for nu in 0..m {
                let mut acc = Rational::zero();
                for rho in 0..m {
                    for s in 0..n {
                        for tau in 0..m {
                            acc += &bm[lam][rho] * f(fib(s), rho, tau) * &at[s][j] * &bt[tau][nu];
                        }
                        for t in 0..n {
                            acc += &bm[lam][rho] * f(fib(s), rho, fib(t)) * &at[s][j] * aty(t, nu);
                        }
                    }
                }
                out[fib(j)][lam][nu] = acc;
            }
        }
    }
    // (2.7)
    for mu in 0..m {
        for lam in 0..m {
            for k in 0..n {
                let mut acc = Rational::zero();
                for rho in 0..m {
                    for t in 0..n {
                        for sigma in 0..m {
                            acc += &bm[lam][rho] * f(sigma, rho, fib(t)) * &bt[sigma][mu] * &at[t][k];
                        }
                        for s in 0..n {
                            acc += &bm[lam][rho] * f(fib(s), rho, fib(t)) * aty(s, mu) * &at[t][k];
                        }
                    }
                }
                out[mu][lam][fib(k)] = acc;
            }
        }
    }
    // (2.8)
    for mu in 0..m {
        for lam in 0..m {
            for nu in 0..m {
                let mut acc = Rational::zero();
                for rho in 0..m {
                    for sigma in 0..m {
                        for tau in 0..m {
                            acc += &bm[lam][rho] * f(sigma, rho, tau) * &bt[sigma][mu] * &bt[tau][nu];
                        }
                        for t in 0..n {
                            acc += &bm[lam][rho] * f(sigma, rho, fib(t)) * &bt[sigma][mu] * aty(t, nu);
                        }
                    }
                    for s in 0..n {
                        for tau in 0..m {
                            acc += &bm[lam][rho] * f(fib(s), rho, tau) * aty(s, mu) * &bt[tau][nu];
                        }
                        for t in 0..n {
                            acc += &bm[lam][rho] * f(fib(s), rho, fib(t)) * aty(s, mu) * aty(t, nu);
                        }
                    }
                }
                out[mu][lam][nu] = acc;
            }
        }
    }
    let ybar = (0..n)
        .map(|i| (0..n).fold(Rational::zero(), |s, p| s + &a[i][p] * &y[p]))
        .collect();
    (out, ybar)
}

/// `ȳ^i = a^i_p y^p`, `ȳ^i_λ = (a^i_p y^p_ρ + a^i_{pρ} y^p) ã^ρ_λ`; `ylam[i][λ]`.
pub fn action_j1e(g: &GroupElement11, y: &[Rational], ylam: &Matrix) -> (Vec<Rational>, Matrix) {
    let (m, n) = (g.m(), g.n());
    let ybar = (0..n)
        .map(|i| (0..n).fold(Rational::zero(), |s, p| s + &g.a[i][p] * &y[p]))
        .collect();
    let ylam_bar = (0..n)
        .map(|i| {
            (0..m)
                .map(|lam| {
                    let mut acc = Rational::zero();
                    for rho in 0..m {
                        let mut inner = Rational::zero();
                        for p in 0..n {
                            inner += &g.a[i][p] * &ylam[p][rho] + &g.a1[i][p][rho] * &y[p];
                        }
                        acc += inner * &g.b_inv[rho][lam];
                    }
                    acc
                })
                .collect()
        })
        .collect();
    (ybar, ylam_bar)
}

fn invertible_matrix<R: Rng>(rng: &mut R, size: usize) -> Matrix {
    loop {
        let mat: Matrix = (0..size)
            .map(|i| {
                (0..size)
                    .map(|j| {
                        let r = random::rational(rng);
                        if i == j {
                            r + int(3)
                        } else {
                            r
                        }
                    })
                    .collect()
            })
            .collect();
        if linalg::inverse(&mat).is_some() {
            return mat;
        }
    }
}

/// Random morphism jet: linear-plus-quadratic base map, gauge of degree ≤ 2.
pub fn random_morphism<R: Rng>(rng: &mut R, m: usize, n: usize, order: u32) -> MorphismJet {
    let b = invertible_matrix(rng, m);
    let a0 = invertible_matrix(rng, n);
    let base = (0..m)
        .map(|lam| {
            let mut p = random::poly(rng, m, order, 2);
            for mu in 0..m {
                let e = MultiIndex::unit(m, mu);
                let shift = &b[lam][mu] - &p.coeff(&e);
                p = &p + &JetPoly::from_terms(m, order, [(e, shift)]).expect("linear term");
            }
            let c = p.constant_term();
            &p - &JetPoly::constant(m, order, c)
        })
        .collect();
    let gauge = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let p = random::poly(rng, m, order, 2);
                    let c = &a0[i][j] - &p.constant_term();
                    &p + &JetPoly::constant(m, order, c)
                })
                .collect()
        })
        .collect();
    MorphismJet::new(vec![Rational::zero(); m], base, gauge).expect("regular by construction")
}

/// Inputs of one naturality trial.
#[derive(Debug, Clone)]
pub struct TrialInput {
    pub lambda: ClassicalConnection,
    pub k: GeneralLinearConnection,
    pub params15: Params15,
    pub params14: Params14,
}

impl TrialInput {
    pub fn random<R: Rng>(rng: &mut R, m: usize, n: usize, order: u32) -> Self {
        TrialInput {
            lambda: random::classical(rng, m, n, order, false),
            k: random::general_linear(rng, m, n, order),
            params15: random::params15(rng),
            params14: random::params14(rng),
        }
    }

    pub fn transform(&self, phi: &MorphismJet) -> Result<Self> {
        Ok(TrialInput {
            lambda: transform_classical(&self.lambda, phi)?,
            k: transform_linear(&self.k, phi)?,
            params15: self.params15.clone(),
            params14: self.params14.clone(),
        })
    }
}

/// A construction whose naturality can be tested by transform/compute commutation.
pub trait NaturalOperator: Sync {
    fn name(&self) -> String;
    fn compute(&self, input: &TrialInput) -> Result<TensorField>;
    fn transform(&self, output: &TensorField, phi: &MorphismJet) -> Result<TensorField>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Constructor {
    InduceD,
    Phi15,
    InduceDTilde,
    InduceGamma,
    Phi14,
    InduceGammaTilde,
}

impl Constructor {
    pub const ALL: [Constructor; 6] = [
        Constructor::InduceD,
        Constructor::Phi15,
        Constructor::InduceDTilde,
        Constructor::InduceGamma,
        Constructor::Phi14,
        Constructor::InduceGammaTilde,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Constructor::InduceD => "induce_D",
            Constructor::Phi15 => "phi15",
            Constructor::InduceDTilde => "induce_D_tilde",
            Constructor::InduceGamma => "induce_Gamma",
            Constructor::Phi14 => "phi14",
            Constructor::InduceGammaTilde => "induce_Gamma_tilde",
        }
    }

    pub fn parse(s: &str) -> Option<Constructor> {
        Constructor::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

impl NaturalOperator for Constructor {
    fn name(&self) -> String {
        self.as_str().to_string()
    }

    fn compute(&self, t: &TrialInput) -> Result<TensorField> {
        let (l, k) = (&t.lambda, &t.k);
        Ok(match self {
            Constructor::InduceD => natural::induce_d(l, k)?.as_tensor().clone(),
            Constructor::Phi15 => natural::phi15(l, k, &t.params15)?,
            Constructor::InduceDTilde => natural::induce_d_tilde(l, k, &t.params15)?.as_tensor().clone(),
            Constructor::InduceGamma => natural::induce_gamma(l, k)?.as_tensor().clone(),
            Constructor::Phi14 => natural::phi14(l, k, &t.params14)?,
            Constructor::InduceGammaTilde => natural::induce_gamma_tilde(l, k, &t.params14)?.as_tensor().clone(),
        })
    }

    fn transform(&self, out: &TensorField, phi: &MorphismJet) -> Result<TensorField> {
        match self {
            Constructor::Phi15 | Constructor::Phi14 => transform_tensor(out, phi),
            Constructor::InduceD | Constructor::InduceDTilde => {
                let d = ClassicalConnectionOnE::from_tensor(out.clone())?;
                Ok(transform_connection_e(&d, phi)?.as_tensor().clone())
            }
            Constructor::InduceGamma | Constructor::InduceGammaTilde => {
                let g = ConnectionOnJ1E::from_tensor(out.clone())?;
                Ok(transform_connection_j1e(&g, phi)?.as_tensor().clone())
            }
        }
    }
}

/// `phi15` with the `h1` coefficient of the `d^j ⊗ ∂_i ⊗ d^ν` block shifted by
/// `shift` while its companion cross term is left alone. Not natural.
#[derive(Debug, Clone)]
pub struct PerturbedPhi15 {
    pub shift: Rational,
}

impl NaturalOperator for PerturbedPhi15 {
    fn name(&self) -> String {
        "phi15_perturbed".into()
    }

    fn compute(&self, t: &TrialInput) -> Result<TensorField> {
        let mut out = natural::phi15(&t.lambda, &t.k, &t.params15)?;
        let ing = natural::ingredients(&t.lambda, &t.k)?;
        let space = out.space();
        let (m, n) = (space.m, space.n);
        for j in 0..n {
            for nu in 0..m {
                let extra = ing.t_hat.get(&[nu]).embed_prefix(space.num_vars()).scale(&self.shift);
                let cur = out.get(&[m + j, m + j, nu]).clone();
                out.set(&[m + j, m + j, nu], &cur + &extra.truncate(out.order()));
            }
        }
        Ok(out)
    }

    fn transform(&self, out: &TensorField, phi: &MorphismJet) -> Result<TensorField> {
        transform_tensor(out, phi)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Failure {
    pub trial: usize,
    pub component_index: Vec<usize>,
    pub lhs: String,
    pub rhs: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NaturalityReport {
    pub suite: String,
    pub seed: u64,
    pub trials: usize,
    pub passes: usize,
    pub failures: Vec<Failure>,
}

impl NaturalityReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.passes == self.trials
    }
}

/// Input jets are generated at order 3 and morphisms at order 5.
pub const INPUT_ORDER: u32 = 3;
pub const MORPHISM_ORDER: u32 = 5;

/// Seed of trial `t` under the master seed.
pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(trial as u64 + 1)
}

/// Checks one trial; `None` on agreement, else the first differing component.
pub fn naturality_trial(
    op: &dyn NaturalOperator,
    input: &TrialInput,
    phi: &MorphismJet,
) -> Result<Option<(Vec<usize>, String, String)>> {
    naturality_check(op, input, &input.transform(phi)?, phi)
}

/// [`naturality_trial`] with the transformed input supplied.
pub fn naturality_check(
    op: &dyn NaturalOperator,
    input: &TrialInput,
    transformed: &TrialInput,
    phi: &MorphismJet,
) -> Result<Option<(Vec<usize>, String, String)>> {
    let lhs = op.transform(&op.compute(input)?, phi)?;
    let rhs = op.compute(transformed)?;
    let order = lhs.order().min(rhs.order());
    let (lhs, rhs) = (lhs.truncate(order), rhs.truncate(order));
    if lhs == rhs {
        return Ok(None);
    }
    let shape = lhs.shape();
    for idx in indices(&shape) {
        let (a, b) = (lhs.get(&idx), rhs.get(&idx));
        if a != b {
            return Ok(Some((idx, a.to_string(), b.to_string())));
        }
    }
    Err(Error::Invalid("signature changed under transformation".into()))
}

pub fn verify_naturality(
    op: &dyn NaturalOperator,
    m: usize,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<NaturalityReport> {
    Ok(verify_naturality_many(&[op], None, m, n, trials, seed)?.remove(0))
}

/// Like [`verify_naturality`] but on the given inputs, one random morphism each.
pub fn verify_naturality_on(op: &dyn NaturalOperator, inputs: &[TrialInput], seed: u64) -> Result<NaturalityReport> {
    let (m, n) = inputs.first().map_or((1, 1), |t| (t.k.m(), t.k.n()));
    Ok(verify_naturality_many(&[op], Some(inputs), m, n, inputs.len(), seed)?.remove(0))
}

/// Several operators over shared trials, transforming each input once.
///
/// Without `inputs`, trial `t` draws its input and then its morphism from
/// `trial_seed(seed, t)`; with `inputs`, only the morphism is drawn.
pub fn verify_naturality_many(
    ops: &[&dyn NaturalOperator],
    inputs: Option<&[TrialInput]>,
    m: usize,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<Vec<NaturalityReport>> {
    let trials = inputs.map_or(trials, <[TrialInput]>::len);
    let per_trial: Vec<Result<Vec<Option<Failure>>>> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = random::rng(trial_seed(seed, trial));
            let input = match inputs {
                Some(given) => given[trial].clone(),
                None => TrialInput::random(&mut rng, m, n, INPUT_ORDER),
            };
            let phi = random_morphism(&mut rng, input.k.m(), input.k.n(), MORPHISM_ORDER);
            let transformed = input.transform(&phi)?;
            ops.iter()
                .map(|op| {
                    Ok(
                        naturality_check(*op, &input, &transformed, &phi)?.map(|(component_index, lhs, rhs)| Failure {
                            trial,
                            component_index,
                            lhs,
                            rhs,
                        }),
                    )
                })
                .collect()
        })
        .collect();
    let mut failures: Vec<Vec<Failure>> = ops.iter().map(|_| Vec::new()).collect();
    for r in per_trial {
        for (slot, f) in failures.iter_mut().zip(r?) {
            slot.extend(f);
        }
    }
    Ok(ops
        .iter()
        .zip(failures)
        .map(|(op, failures)| NaturalityReport {
            suite: op.name(),
            seed,
            trials,
            passes: trials - failures.len(),
            failures,
        })
        .collect())
}

/// One non-negative solution of the weight equation.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct WeightSolution {
    pub a: Vec<u32>,
    pub b: Vec<u32>,
    pub c: u32,
    pub d: Vec<u32>,
}

impl WeightSolution {
    pub fn weight(&self) -> u64 {
        let a: u64 = self
            .a
            .iter()
            .enumerate()
            .map(|(i, &x)| (i as u64 + 1) * u64::from(x))
            .sum();
        let b: u64 = self
            .b
            .iter()
            .enumerate()
            .map(|(j, &x)| (j as u64 + 2) * u64::from(x))
            .sum();
        let d: u64 = self
            .d
            .iter()
            .enumerate()
            .map(|(k, &x)| (k as u64 + 2) * u64::from(x))
            .sum();
        a + b + u64::from(self.c) + d
    }
}

/// All `(a_0..a_s, b_0..b_{s-1}, c, d_0..d_{r-1}) ≥ 0` with
/// `Σ(i+1)a_i + Σ(j+2)b_j + c + Σ(k+2)d_k = -rhs`, sorted.
pub fn weight_solutions(s: usize, r: usize, rhs: i64) -> Vec<WeightSolution> {
    if rhs > 0 {
        return Vec::new();
    }
    let target = rhs.unsigned_abs();
    let mut weights: Vec<u64> = (0..=s).map(|i| i as u64 + 1).collect();
    weights.extend((0..s).map(|j| j as u64 + 2));
    weights.push(1);
    weights.extend((0..r).map(|k| k as u64 + 2));
    let mut out = Vec::new();
    let mut cur = vec![0u32; weights.len()];
    fill(&weights, 0, target, &mut cur, &mut |v| {
        let (a, rest) = v.split_at(s + 1);
        let (b, rest) = rest.split_at(s);
        out.push(WeightSolution {
            a: a.to_vec(),
            b: b.to_vec(),
            c: rest[0],
            d: rest[1..].to_vec(),
        });
    });
    out.sort();
    out
}

fn fill(weights: &[u64], pos: usize, left: u64, cur: &mut Vec<u32>, f: &mut impl FnMut(&[u32])) {
    if pos == weights.len() {
        if left == 0 {
            f(cur);
        }
        return;
    }
    let w = weights[pos];
    let mut k = 0u64;
    while k * w <= left {
        cur[pos] = k as u32;
        fill(weights, pos + 1, left - k * w, cur, f);
        k += 1;
    }
    cur[pos] = 0;
}

/// Exact rank of stacked flattened evaluations.
pub fn family_rank(basis: &[Vec<Rational>]) -> Result<usize> {
    if basis.is_empty() {
        return Err(Error::EmptyBasis);
    }
    Ok(linalg::rank(basis))
}

/// Which parameter family a rank computation stacks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// `Φ(Λ, K)` over `E`.
    Phi15,
    /// `φ(Λ, K)` over `J¹E`.
    Phi14,
    /// `χ̃(Φ(Λ, K))`, whose kernel is the kernel of the parameter map.
    ChiTildePhi15,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RankReport {
    pub rank: usize,
    pub params: usize,
    pub draws: usize,
    pub ranks_by_draw: Vec<usize>,
}

impl RankReport {
    pub fn kernel_dim(&self) -> usize {
        self.params - self.rank
    }
}

fn family_row(family: Family, input: &TrialInput, k: usize, point: &[Rational]) -> Result<Vec<Rational>> {
    let (l, kc) = (&input.lambda, &input.k);
    let t = match family {
        Family::Phi15 => natural::phi15(l, kc, &Params15::unit(k))?,
        Family::Phi14 => natural::phi14(l, kc, &Params14::unit(k))?,
        Family::ChiTildePhi15 => natural::chi_tilde(&natural::phi15(l, kc, &Params15::unit(k))?)?,
    };
    t.evaluate(&point[..t.space().num_vars()])
}

/// Stacked-evaluation rank of a parameter family on random inputs.
///
/// Each basis element is evaluated at `x = 0` and random fiber coordinates
/// for at least three draws; draws are added while the rank still grows.
pub fn family_rank_random(family: Family, m: usize, n: usize, symmetric: bool, seed: u64) -> Result<RankReport> {
    let params = match family {
        Family::Phi14 => Params14::NAMES.len(),
        _ => Params15::NAMES.len(),
    };
    let mut rng = random::rng(seed);
    let mut rows: Vec<Vec<Rational>> = vec![Vec::new(); params];
    let mut ranks = Vec::new();
    let order = 2;
    loop {
        let mut input = TrialInput::random(&mut rng, m, n, order);
        if symmetric {
            input.lambda = random::classical(&mut rng, m, n, order, true);
        }
        let space = Space::jet(m, n);
        let point: Vec<Rational> = (0..space.num_vars())
            .map(|v| {
                if v < m {
                    Rational::zero()
                } else {
                    random::rational(&mut rng)
                }
            })
            .collect();
        let new_rows: Vec<Vec<Rational>> = (0..params)
            .into_par_iter()
            .map(|k| family_row(family, &input, k, &point))
            .collect::<Result<_>>()?;
        for (row, add) in rows.iter_mut().zip(new_rows) {
            row.extend(add);
        }
        ranks.push(family_rank(&rows)?);
        let d = ranks.len();
        if d >= 3 && ranks[d - 1] == ranks[d - 2] {
            break;
        }
        if d >= 12 {
            break;
        }
    }
    Ok(RankReport {
        rank: *ranks.last().expect("at least one draw"),
        params,
        draws: ranks.len(),
        ranks_by_draw: ranks,
    })
}

/// Evaluates a [`FiberTensor`] from a `(1,2)`-field on `E` at `(0, y)`.
pub fn fiber_value(t: &TensorField, y: &[Rational]) -> Result<FiberTensor> {
    let space = t.space();
    let dim = space.m + space.n;
    let mut point = vec![Rational::zero(); space.m];
    point.extend(y.iter().cloned());
    let flat = t.evaluate(&point)?;
    Ok((0..dim)
        .map(|b| {
            (0..dim)
                .map(|a| (0..dim).map(|c| flat[(b * dim + a) * dim + c].clone()).collect())
                .collect()
        })
        .collect())
}

pub fn format_fiber_tensor(t: &FiberTensor) -> Vec<Vec<Vec<String>>> {
    t.iter()
        .map(|x| x.iter().map(|y| y.iter().map(format_rational).collect()).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connections::{curvature_k, curvature_lambda};
    use crate::jet::ratio;

    fn sol(a: &[u32], b: &[u32], c: u32, d: &[u32]) -> WeightSolution {
        WeightSolution {
            a: a.to_vec(),
            b: b.to_vec(),
            c,
            d: d.to_vec(),
        }
    }

    #[test]
    fn weight_counts() {
        let one = weight_solutions(1, 1, -1);
        assert_eq!(one.len(), 2);
        assert!(one.contains(&sol(&[1, 0], &[0], 0, &[0])));
        assert!(one.contains(&sol(&[0, 0], &[0], 1, &[0])));
        let two = weight_solutions(1, 1, -2);
        let want = [
            sol(&[2, 0], &[0], 0, &[0]),
            sol(&[0, 1], &[0], 0, &[0]),
            sol(&[1, 0], &[0], 1, &[0]),
            sol(&[0, 0], &[1], 0, &[0]),
            sol(&[0, 0], &[0], 2, &[0]),
            sol(&[0, 0], &[0], 0, &[1]),
        ];
        assert_eq!(two.len(), 6);
        for w in &want {
            assert!(two.contains(w), "{w:?}");
        }
        assert_eq!(weight_solutions(2, 2, 0).len(), 1);
        assert!(weight_solutions(2, 2, 0)[0].weight() == 0);
    }

    #[test]
    fn weight_solutions_match_brute_force() {
        for rhs in -4i64..=0 {
            let got = weight_solutions(2, 1, rhs);
            let mut brute = Vec::new();
            let bound = 5u32;
            for a0 in 0..bound {
                for a1 in 0..bound {
                    for a2 in 0..bound {
                        for b0 in 0..bound {
                            for b1 in 0..bound {
                                for c in 0..bound {
                                    for d0 in 0..bound {
                                        let s = sol(&[a0, a1, a2], &[b0, b1], c, &[d0]);
                                        if s.weight() == rhs.unsigned_abs() {
                                            brute.push(s);
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
            brute.sort();
            assert_eq!(got, brute, "rhs {rhs}");
        }
    }

    #[test]
    fn family_rank_edge_cases() {
        assert!(matches!(family_rank(&[]), Err(Error::EmptyBasis)));
        assert_eq!(family_rank(&vec![vec![Rational::zero(); 4]; 3]).unwrap(), 0);
    }

    #[test]
    fn identity_morphism_is_neutral() {
        let mut rng = random::rng(3);
        let l = random::classical(&mut rng, 2, 2, 3, false);
        let k = random::general_linear(&mut rng, 2, 2, 3);
        let id = MorphismJet::identity(2, 2, 5);
        assert_eq!(transform_classical(&l, &id).unwrap(), l);
        assert_eq!(transform_linear(&k, &id).unwrap(), k);
        let t = natural::phi15(&l, &k, &random::params15(&mut rng)).unwrap();
        assert_eq!(transform_tensor(&t, &id).unwrap(), t);
    }

    #[test]
    fn morphism_inverse_and_composition() {
        let mut rng = random::rng(4);
        let phi = random_morphism(&mut rng, 2, 2, 4);
        let psi = random_morphism(&mut rng, 2, 2, 4);
        let id = phi.compose(&phi.inverse().unwrap()).unwrap();
        assert_eq!(id, MorphismJet::identity(2, 2, 4));
        let g = phi.compose(&psi).unwrap().one_jet();
        assert_eq!(g, phi.one_jet().compose(&psi.one_jet()));
    }

    #[test]
    fn flat_connections_stay_flat() {
        let mut rng = random::rng(5);
        let phi = random_morphism(&mut rng, 2, 2, 5);
        let l = transform_classical(&ClassicalConnection::zero(2, 2, 3), &phi).unwrap();
        assert!(!l.table().is_zero());
        assert!(l.is_symmetric());
        assert!(curvature_lambda(&l).unwrap().is_zero());
        let k = transform_linear(&GeneralLinearConnection::zero(2, 2, 3), &phi).unwrap();
        assert!(!k.table().is_zero());
        assert!(curvature_k(&k).unwrap().is_zero());
    }

    #[test]
    fn constant_gauge_conjugates() {
        let a = vec![vec![int(2), int(1)], vec![int(1), int(1)]];
        let gauge: JetMatrix = a
            .iter()
            .map(|r| r.iter().map(|v| JetPoly::constant(2, 4, v.clone())).collect())
            .collect();
        let phi = MorphismJet::new(vec![int(0), int(0)], crate::jet::identity_jet(2, 4), gauge).unwrap();
        let mut rng = random::rng(6);
        let k = random::general_linear(&mut rng, 2, 2, 3);
        let kp = transform_linear(&k, &phi).unwrap();
        let a_inv = linalg::inverse(&a).unwrap();
        for lam in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    let mut want = JetPoly::zero(2, 3);
                    for p in 0..2 {
                        for q in 0..2 {
                            want = want.add_scaled(&(&a[i][p] * &a_inv[q][j]), k.get(p, q, lam));
                        }
                    }
                    assert_eq!(kp.get(i, j, lam), &want);
                }
            }
        }
    }

    #[test]
    fn kronecker_is_invariant() {
        let mut rng = random::rng(7);
        let phi = random_morphism(&mut rng, 2, 2, 4);
        for kind in [SpaceKind::M, SpaceKind::E] {
            let space = Space { kind, m: 2, n: 2 };
            for class in [IndexClass::Base, IndexClass::Fiber, IndexClass::Total] {
                if kind == SpaceKind::M && class == IndexClass::Total {
                    continue;
                }
                let d = crate::tensor::kronecker(space, class, 3);
                assert_eq!(transform_tensor(&d, &phi).unwrap(), d);
            }
        }
    }

    #[test]
    fn action_identity_and_homothety() {
        let mut rng = random::rng(8);
        let (m, n) = (2, 2);
        let phi: FiberTensor = (0..4)
            .map(|_| {
                (0..4)
                    .map(|_| (0..4).map(|_| random::rational(&mut rng)).collect())
                    .collect()
            })
            .collect();
        let y = vec![int(1), ratio(-2, 3)];
        let (same, ybar) = action_2_1_to_2_8(&GroupElement11::identity(m, n), &phi, &y);
        assert_eq!(same, phi);
        assert_eq!(ybar, y);
        let c = int(3);
        let hom = GroupElement11::new(
            vec![vec![c.clone(), int(0)], vec![int(0), c.clone()]],
            vec![vec![vec![int(0); m]; n]; n],
            linalg::identity(m),
        )
        .unwrap();
        let (out, _) = action_2_1_to_2_8(&hom, &phi, &y);
        for j in 0..n {
            for lam in 0..m {
                for k in 0..n {
                    assert_eq!(out[m + j][lam][m + k], &phi[m + j][lam][m + k] / (&c * &c));
                }
            }
        }
    }

    #[test]
    fn action_agrees_with_transform_and_composes() {
        let mut rng = random::rng(9);
        let (m, n) = (2, 2);
        let morph = random_morphism(&mut rng, m, n, 4);
        let l = random::classical(&mut rng, m, n, 3, false);
        let k = random::general_linear(&mut rng, m, n, 3);
        let field = natural::phi15(&l, &k, &random::params15(&mut rng)).unwrap();
        let y = vec![ratio(1, 2), int(-1)];
        let g = morph.one_jet();
        let (acted, ybar) = action_2_1_to_2_8(&g, &fiber_value(&field, &y).unwrap(), &y);
        let pushed = transform_tensor(&field, &morph).unwrap();
        assert_eq!(acted, fiber_value(&pushed, &ybar).unwrap());

        let h = random_morphism(&mut rng, m, n, 4).one_jet();
        let (once, y1) = action_2_1_to_2_8(&g, &acted, &ybar);
        let (twice, y2) = action_2_1_to_2_8(&g.compose(&g), &fiber_value(&field, &y).unwrap(), &y);
        assert_eq!((once, y1), (twice, y2));
        let ylam = vec![vec![int(1), int(0)], vec![ratio(2, 3), int(-1)]];
        let (ya, la) = action_j1e(&g, &y, &ylam);
        let (yb, lb) = action_j1e(&h, &ya, &la);
        assert_eq!((yb, lb), action_j1e(&h.compose(&g), &y, &ylam));
    }

    #[test]
    fn action_j1e_pure_derivative_part() {
        let (m, n) = (2, 1);
        let a1 = vec![vec![vec![int(2), int(-1)]]];
        let g = GroupElement11::new(vec![vec![int(1)]], a1, linalg::identity(m)).unwrap();
        let (ybar, ylam) = action_j1e(&g, &[int(3)], &vec![vec![int(0), int(0)]]);
        assert_eq!(ybar, vec![int(3)]);
        assert_eq!(ylam, vec![vec![int(6), int(-3)]]);
        let _ = n;
    }

    #[test]
    fn prolongation_matches_action_j1e() {
        let mut rng = random::rng(10);
        let morph = random_morphism(&mut rng, 2, 2, 4);
        let map = morph.jet_map().unwrap();
        let y = vec![int(1), ratio(1, 2)];
        let ylam = vec![vec![int(2), int(-1)], vec![int(0), ratio(1, 3)]];
        let mut point = vec![int(0), int(0)];
        point.extend(y.iter().cloned());
        for row in &ylam {
            point.extend(row.iter().cloned());
        }
        let vals: Vec<Rational> = map.iter().map(|p| p.evaluate(&point).unwrap()).collect();
        let (ybar, lbar) = action_j1e(&morph.one_jet(), &y, &ylam);
        assert_eq!(&vals[2..4], &ybar[..]);
        let flat: Vec<Rational> = lbar.into_iter().flatten().collect();
        assert_eq!(&vals[4..], &flat[..]);
    }
}
