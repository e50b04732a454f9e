//! Linear connections on `E`, classical connections on `M`, curvature and
//! covariant differentials.
//!
//! Sign conventions: `∇_ν s^i = ∂_ν s^i - K^i_{jν} s^j` on sections of `E`,
//! `∇_ν X^λ = ∂_ν X^λ - Λ^λ_{μν} X^μ` on vector fields. Dual slots pick up the
//! transposed coefficient with a plus sign. Curvatures are normalized so that
//! for symmetric `Λ`
//!
//! ```text
//! (∇_μ ∇_ν - ∇_ν ∇_μ) s^i = R^i_{jμν} s^j
//! ```
//!
//! which makes `R^i_{jμν} = -∂_μ K^i_{jν} + ∂_ν K^i_{jμ} + K^i_{pμ} K^p_{jν} - K^i_{pν} K^p_{jμ}`.

use crate::error::{Error, Result};
use crate::jet::{ratio, JetPoly};
use crate::tensor::{indices, IndexClass, SlotKind, Space, SpaceKind, TensorField};

use SlotKind::*;

/// Coefficients `K^i_{jλ}(x)` of a linear connection on `E`, stored `[i][j][λ]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneralLinearConnection {
    coeffs: TensorField,
}

impl GeneralLinearConnection {
    pub fn zero(m: usize, n: usize, order: u32) -> Self {
        GeneralLinearConnection {
            coeffs: TensorField::zeros(Space::base(m, n), vec![FiberUp, FiberDown, BaseDown], order),
        }
    }

    /// `f(i, j, λ)` gives `K^i_{jλ}` as a jet in the `m` base variables.
    pub fn from_fn<F>(m: usize, n: usize, order: u32, mut f: F) -> Self
    where
        F: FnMut(usize, usize, usize) -> JetPoly,
    {
        GeneralLinearConnection {
            coeffs: TensorField::from_fn(Space::base(m, n), vec![FiberUp, FiberDown, BaseDown], order, |idx| {
                f(idx[0], idx[1], idx[2])
            }),
        }
    }

    pub fn from_table(m: usize, n: usize, comps: Vec<JetPoly>) -> Result<Self> {
        Ok(GeneralLinearConnection {
            coeffs: TensorField::from_components(Space::base(m, n), vec![FiberUp, FiberDown, BaseDown], comps)?,
        })
    }

    pub fn m(&self) -> usize {
        self.coeffs.space().m
    }

    pub fn n(&self) -> usize {
        self.coeffs.space().n
    }

    pub fn order(&self) -> u32 {
        self.coeffs.order()
    }

    pub fn get(&self, i: usize, j: usize, lambda: usize) -> &JetPoly {
        self.coeffs.get(&[i, j, lambda])
    }

    pub fn table(&self) -> &TensorField {
        &self.coeffs
    }

    pub fn truncate(&self, order: u32) -> Self {
        GeneralLinearConnection {
            coeffs: self.coeffs.truncate(order),
        }
    }
}

/// Coefficients `Λ^λ_{μν}(x)` of a classical connection, stored `[λ][μ][ν]`
/// (value, argument, form). The fiber dimension `n` is carried along so that
/// derived tensors live on the same space as bundle data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassicalConnection {
    coeffs: TensorField,
    symmetric: bool,
}

impl ClassicalConnection {
    pub fn zero(m: usize, n: usize, order: u32) -> Self {
        ClassicalConnection {
            coeffs: TensorField::zeros(Space::base(m, n), vec![BaseUp, BaseDown, BaseDown], order),
            symmetric: true,
        }
    }

    /// `f(λ, μ, ν)` gives `Λ^λ_{μν}`. The symmetry flag is computed.
    pub fn from_fn<F>(m: usize, n: usize, order: u32, mut f: F) -> Self
    where
        F: FnMut(usize, usize, usize) -> JetPoly,
    {
        let coeffs = TensorField::from_fn(Space::base(m, n), vec![BaseUp, BaseDown, BaseDown], order, |idx| {
            f(idx[0], idx[1], idx[2])
        });
        let symmetric = is_symmetric(&coeffs);
        ClassicalConnection { coeffs, symmetric }
    }

    /// Builds from a flat table; a `symmetric` claim is checked exactly.
    pub fn from_table(m: usize, n: usize, comps: Vec<JetPoly>, symmetric: bool) -> Result<Self> {
        let coeffs = TensorField::from_components(Space::base(m, n), vec![BaseUp, BaseDown, BaseDown], comps)?;
        let actual = is_symmetric(&coeffs);
        if symmetric && !actual {
            return Err(Error::NotSymmetric);
        }
        Ok(ClassicalConnection {
            coeffs,
            symmetric: actual,
        })
    }

    pub fn m(&self) -> usize {
        self.coeffs.space().m
    }

    pub fn n(&self) -> usize {
        self.coeffs.space().n
    }

    pub fn order(&self) -> u32 {
        self.coeffs.order()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn get(&self, lambda: usize, mu: usize, nu: usize) -> &JetPoly {
        self.coeffs.get(&[lambda, mu, nu])
    }

    pub fn table(&self) -> &TensorField {
        &self.coeffs
    }

    pub fn truncate(&self, order: u32) -> Self {
        ClassicalConnection {
            coeffs: self.coeffs.truncate(order),
            symmetric: self.symmetric,
        }
    }
}

fn is_symmetric(coeffs: &TensorField) -> bool {
    indices(&coeffs.shape()).all(|idx| coeffs.get(&idx) == coeffs.get(&[idx[0], idx[2], idx[1]]))
}

fn check_dims(k: &GeneralLinearConnection, l: &ClassicalConnection) -> Result<()> {
    if k.m() != l.m() || k.n() != l.n() {
        return Err(Error::Shape(format!(
            "K has dims ({}, {}), Λ has dims ({}, {})",
            k.m(),
            k.n(),
            l.m(),
            l.n()
        )));
    }
    Ok(())
}

/// Splits `Λ` into its symmetric part and torsion.
///
/// The torsion is stored `[μ][λ][ν] = ½(Λ^λ_{μν} - Λ^λ_{νμ})`, i.e. with the
/// slot order `T_μ{}^λ{}_ν`.
pub fn torsion_split(l: &ClassicalConnection) -> (ClassicalConnection, TensorField) {
    let half = ratio(1, 2);
    let (m, n, order) = (l.m(), l.n(), l.order());
    let sym = ClassicalConnection::from_fn(m, n, order, |a, b, c| (l.get(a, b, c) + l.get(a, c, b)).scale(&half));
    let t = TensorField::from_fn(Space::base(m, n), vec![BaseDown, BaseUp, BaseDown], order, |idx| {
        let (mu, lambda, nu) = (idx[0], idx[1], idx[2]);
        (l.get(lambda, mu, nu) - l.get(lambda, nu, mu)).scale(&half)
    });
    (sym, t)
}

/// Torsion trace `T̂_ν = T_ρ{}^ρ{}_ν` as a `BaseDown` covector.
pub fn torsion_trace(t: &TensorField) -> TensorField {
    t.contract(1, 0).expect("torsion layout")
}

fn need_order(order: u32, needed: u32) -> Result<()> {
    if order < needed {
        return Err(Error::InsufficientOrder {
            needed,
            available: order,
        });
    }
    Ok(())
}

/// `R[K]` stored `[j][i][μ][ν] = R^i_{jμν}`.
pub fn curvature_k(k: &GeneralLinearConnection) -> Result<TensorField> {
    need_order(k.order(), 1)?;
    let (m, n) = (k.m(), k.n());
    let order = k.order() - 1;
    let dk = partial_table(k.table())?;
    Ok(TensorField::from_fn(
        Space::base(m, n),
        vec![FiberDown, FiberUp, BaseDown, BaseDown],
        order,
        |idx| {
            let (j, i, mu, nu) = (idx[0], idx[1], idx[2], idx[3]);
            let mut acc = &dk[nu].get(&[i, j, mu]).clone() - dk[mu].get(&[i, j, nu]);
            for p in 0..n {
                acc = &acc + &(k.get(i, p, mu) * k.get(p, j, nu));
                acc = &acc - &(k.get(i, p, nu) * k.get(p, j, mu));
            }
            acc
        },
    ))
}

/// `R[Λ]` stored `[ρ][λ][μ][ν] = R^λ_{ρμν}`, same normalization as [`curvature_k`].
pub fn curvature_lambda(l: &ClassicalConnection) -> Result<TensorField> {
    need_order(l.order(), 1)?;
    let (m, n) = (l.m(), l.n());
    let order = l.order() - 1;
    let dl = partial_table(l.table())?;
    Ok(TensorField::from_fn(
        Space::base(m, n),
        vec![BaseDown, BaseUp, BaseDown, BaseDown],
        order,
        |idx| {
            let (rho, lambda, mu, nu) = (idx[0], idx[1], idx[2], idx[3]);
            let mut acc = &dl[nu].get(&[lambda, rho, mu]).clone() - dl[mu].get(&[lambda, rho, nu]);
            for p in 0..m {
                acc = &acc + &(l.get(lambda, p, mu) * l.get(p, rho, nu));
                acc = &acc - &(l.get(lambda, p, nu) * l.get(p, rho, mu));
            }
            acc
        },
    ))
}

fn partial_table(t: &TensorField) -> Result<Vec<TensorField>> {
    (0..t.space().num_vars()).map(|v| t.partial(v)).collect()
}

/// Coefficient of `Φ^{J}` in the connection term of `∇_ν Φ^{I}` for one slot:
/// `∇_ν Φ^I = ∂_ν Φ^I - Σ C^I_{Jν} Φ^J`, where `I` and `J` differ only in that
/// slot (`I_k = a`, `J_k = b`).
fn slot_coefficient(
    kind: SlotKind,
    a: usize,
    b: usize,
    nu: usize,
    k: &GeneralLinearConnection,
    l: &ClassicalConnection,
) -> JetPoly {
    match kind {
        FiberUp => k.get(a, b, nu).clone(),
        FiberDown => k.get(b, a, nu).neg(),
        BaseUp => l.get(a, b, nu).clone(),
        BaseDown => l.get(b, a, nu).neg(),
        TotalUp | TotalDown => unreachable!("total slots rejected earlier"),
    }
}

/// Coefficient table of the tensor product connection `K^p_q ⊗ Λ^r_s` on
/// `E^{p,r}_{q,s}`, slots ordered `p` fiber-up, `q` fiber-down, `r` base-up,
/// `s` base-down.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProductConnection {
    signature: Vec<SlotKind>,
    dim: usize,
    m: usize,
    coeffs: Vec<JetPoly>,
}

impl ProductConnection {
    pub fn signature(&self) -> &[SlotKind] {
        &self.signature
    }

    /// Number of components of a section (`n^{p+q} m^{r+s}`).
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `C^I_{Jν}` with `I`, `J` row-major flat indices.
    pub fn get(&self, big_i: usize, big_j: usize, nu: usize) -> &JetPoly {
        &self.coeffs[(big_i * self.dim + big_j) * self.m + nu]
    }
}

pub fn tensor_product_connection(
    k: &GeneralLinearConnection,
    l: &ClassicalConnection,
    p: usize,
    q: usize,
    r: usize,
    s: usize,
) -> Result<ProductConnection> {
    check_dims(k, l)?;
    let (m, n) = (k.m(), k.n());
    let order = k.order().min(l.order());
    let mut signature = vec![FiberUp; p];
    signature.extend(std::iter::repeat(FiberDown).take(q));
    signature.extend(std::iter::repeat(BaseUp).take(r));
    signature.extend(std::iter::repeat(BaseDown).take(s));
    let shape: Vec<usize> = signature.iter().map(|sk| sk.dim(m, n)).collect();
    let dim: usize = shape.iter().product();
    let all: Vec<Vec<usize>> = indices(&shape).collect();
    let zero = JetPoly::zero(m, order);
    let mut coeffs = vec![zero.clone(); dim * dim * m];
    for (fi, big_i) in all.iter().enumerate() {
        for (fj, big_j) in all.iter().enumerate() {
            let differing: Vec<usize> = (0..signature.len()).filter(|&t| big_i[t] != big_j[t]).collect();
            let slots: Vec<usize> = match differing.len() {
                0 => (0..signature.len()).collect(),
                1 => differing,
                _ => continue,
            };
            for nu in 0..m {
                let mut acc = zero.clone();
                for &t in &slots {
                    acc = &acc + &slot_coefficient(signature[t], big_i[t], big_j[t], nu, k, l);
                }
                coeffs[(fi * dim + fj) * m + nu] = acc.truncate(order);
            }
        }
    }
    Ok(ProductConnection {
        signature,
        dim,
        m,
        coeffs,
    })
}

/// `∇^{(Λ,K)} Φ` for a field on `M` with base and fiber slots in any order.
/// A trailing `BaseDown` slot holds the derivative direction.
pub fn covariant_differential(
    phi: &TensorField,
    k: &GeneralLinearConnection,
    l: &ClassicalConnection,
) -> Result<TensorField> {
    check_dims(k, l)?;
    let space = phi.space();
    if space.kind != SpaceKind::M {
        return Err(Error::WrongSpace {
            expected: SpaceKind::M,
            got: space.kind,
        });
    }
    if space.m != k.m() || space.n != k.n() {
        return Err(Error::Shape("section and connection dimensions differ".into()));
    }
    if phi.signature().iter().any(|s| s.class() == IndexClass::Total) {
        return Err(Error::Signature("covariant differential needs base/fiber slots".into()));
    }
    need_order(phi.order(), 1)?;
    let (m, n) = (space.m, space.n);
    let order = (phi.order() - 1).min(k.order()).min(l.order());
    let dphi = partial_table(phi)?;
    let sig = phi.signature().to_vec();
    let mut out_sig = sig.clone();
    out_sig.push(BaseDown);
    let mut other = vec![0; sig.len()];
    Ok(TensorField::from_fn(space, out_sig, order, |idx| {
        let (big_i, nu) = (&idx[..sig.len()], idx[sig.len()]);
        let mut acc = dphi[nu].get(big_i).truncate(order);
        for (t, &kind) in sig.iter().enumerate() {
            other.copy_from_slice(big_i);
            for b in 0..kind.dim(m, n) {
                other[t] = b;
                let c = slot_coefficient(kind, big_i[t], b, nu, k, l);
                if !c.is_zero() {
                    acc = &acc - &(&c * phi.get(&other));
                }
            }
        }
        acc
    }))
}

/// `[Φ, ∇Φ, …, ∇^kΦ]`.
pub fn iterated_covariant_differential(
    phi: &TensorField,
    k: &GeneralLinearConnection,
    l: &ClassicalConnection,
    depth: usize,
) -> Result<Vec<TensorField>> {
    need_order(phi.order(), depth as u32)?;
    let mut out = vec![phi.clone()];
    for _ in 0..depth {
        let next = covariant_differential(out.last().expect("nonempty"), k, l)?;
        out.push(next);
    }
    Ok(out)
}

/// Curvature jets `(∇^j R[Λ])_{j≤i}` and `(∇^j R[K])_{j≤i}` for symmetric `Λ`.
pub fn curvature_jets(
    k: &GeneralLinearConnection,
    l: &ClassicalConnection,
    i: usize,
) -> Result<(Vec<TensorField>, Vec<TensorField>)> {
    check_dims(k, l)?;
    if !l.is_symmetric() {
        return Err(Error::NotSymmetric);
    }
    need_order(k.order().min(l.order()), i as u32 + 1)?;
    let rl = curvature_lambda(l)?;
    let rk = curvature_k(k)?;
    Ok((
        iterated_covariant_differential(&rl, k, l, i)?,
        iterated_covariant_differential(&rk, k, l, i)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jet::int;
    use crate::tensor::SymMode;

    fn x(m: usize, order: u32, v: usize) -> JetPoly {
        JetPoly::var(m, order, v).unwrap()
    }

    #[test]
    fn torsion_split_examples() {
        let l = ClassicalConnection::from_fn(2, 1, 2, |a, b, c| {
            if (a, b, c) == (0, 0, 1) {
                JetPoly::one(2, 2)
            } else {
                JetPoly::zero(2, 2)
            }
        });
        assert!(!l.is_symmetric());
        let (sym, t) = torsion_split(&l);
        assert_eq!(t.get(&[0, 0, 1]), &JetPoly::constant(2, 2, ratio(1, 2)));
        assert_eq!(t.get(&[1, 0, 0]), &JetPoly::constant(2, 2, ratio(-1, 2)));
        assert!(sym.is_symmetric());
        assert_eq!(sym.get(0, 1, 0), sym.get(0, 0, 1));

        let (sym2, t2) = torsion_split(&sym);
        assert!(t2.is_zero());
        assert_eq!(sym2, sym);
    }

    #[test]
    fn curvature_k_abelian_example() {
        // K^0_{0,0} = x^1: (∇_0∇_1 - ∇_1∇_0) s = R^0_{0,01} s gives +1
        let k = GeneralLinearConnection::from_fn(2, 1, 2, |i, j, lam| {
            if (i, j, lam) == (0, 0, 0) {
                x(2, 2, 1)
            } else {
                JetPoly::zero(2, 2)
            }
        });
        let r = curvature_k(&k).unwrap();
        assert_eq!(r.get(&[0, 0, 0, 1]), &JetPoly::constant(2, 1, int(1)));
        assert_eq!(r.get(&[0, 0, 1, 0]), &JetPoly::constant(2, 1, int(-1)));
        assert!(r.get(&[0, 0, 0, 0]).is_zero());
    }

    #[test]
    fn curvature_vanishes_for_m1_and_flat() {
        let k = GeneralLinearConnection::from_fn(1, 2, 2, |i, j, _| x(1, 2, 0).scale(&int((i + 2 * j) as i64)));
        assert!(curvature_k(&k).unwrap().is_zero());
        assert!(curvature_k(&GeneralLinearConnection::zero(2, 2, 2)).unwrap().is_zero());
        assert!(curvature_lambda(&ClassicalConnection::zero(3, 1, 2)).unwrap().is_zero());
        assert_eq!(
            curvature_k(&GeneralLinearConnection::zero(2, 2, 0)).unwrap_err(),
            Error::InsufficientOrder {
                needed: 1,
                available: 0
            }
        );
    }

    #[test]
    fn curvature_antisymmetric() {
        let l = ClassicalConnection::from_fn(2, 1, 2, |a, b, c| {
            &x(2, 2, a).scale(&int(b as i64 + 1)) + &JetPoly::constant(2, 2, int(c as i64 - a as i64))
        });
        let r = curvature_lambda(&l).unwrap();
        let anti = r.sym_antisym((2, 3), SymMode::Antisym).unwrap();
        assert_eq!(anti, r);
    }

    #[test]
    fn product_connection_reproduces_k_and_l() {
        let k = GeneralLinearConnection::from_fn(2, 2, 2, |i, j, lam| x(2, 2, lam).scale(&int((i * 2 + j) as i64)));
        let l = ClassicalConnection::from_fn(2, 2, 2, |a, b, c| JetPoly::constant(2, 2, int((a + b * c) as i64)));
        let pk = tensor_product_connection(&k, &l, 1, 0, 0, 0).unwrap();
        let pl = tensor_product_connection(&k, &l, 0, 0, 1, 0).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                for nu in 0..2 {
                    assert_eq!(pk.get(i, j, nu), k.get(i, j, nu));
                    assert_eq!(pl.get(i, j, nu), l.get(i, j, nu));
                }
            }
        }
    }

    #[test]
    fn identity_section_is_parallel() {
        let k = GeneralLinearConnection::from_fn(2, 2, 3, |i, j, lam| {
            &x(2, 3, (i + lam) % 2).scale(&int(j as i64 + 1)) + &JetPoly::constant(2, 3, int(i as i64))
        });
        let l = ClassicalConnection::zero(2, 2, 3);
        let space = Space::base(2, 2);
        let delta = crate::tensor::kronecker(space, IndexClass::Fiber, 3);
        assert!(covariant_differential(&delta, &k, &l).unwrap().is_zero());
        let table = tensor_product_connection(&k, &l, 1, 1, 0, 0).unwrap();
        // the same statement through the coefficient table
        for big_i in 0..4 {
            for nu in 0..2 {
                let mut acc = JetPoly::zero(2, 3);
                for big_j in [0, 3] {
                    acc = &acc + table.get(big_i, big_j, nu);
                }
                assert!(acc.is_zero());
            }
        }
    }

    #[test]
    fn scalar_and_flat_differentials() {
        let space = Space::base(2, 1);
        let f = &(&x(2, 3, 0) * &x(2, 3, 1)) + &x(2, 3, 0);
        let k = GeneralLinearConnection::zero(2, 1, 3);
        let l = ClassicalConnection::zero(2, 1, 3);
        let df = covariant_differential(&TensorField::scalar(space, f.clone()), &k, &l).unwrap();
        assert_eq!(df.get(&[0]), &f.partial(0).unwrap());
        assert_eq!(df.get(&[1]), &f.partial(1).unwrap());
        let chain = iterated_covariant_differential(&TensorField::scalar(space, f.clone()), &k, &l, 0).unwrap();
        assert_eq!(chain.len(), 1);
    }

    #[test]
    fn differential_rejects_total_space_fields() {
        let k = GeneralLinearConnection::zero(2, 1, 2);
        let l = ClassicalConnection::zero(2, 1, 2);
        let t = TensorField::zeros(Space::total(2, 1), vec![BaseUp], 2);
        assert!(matches!(
            covariant_differential(&t, &k, &l),
            Err(Error::WrongSpace { .. })
        ));
        let s = TensorField::zeros(Space::base(2, 1), vec![BaseUp], 1);
        assert!(iterated_covariant_differential(&s, &k, &l, 2).is_err());
    }

    #[test]
    fn curvature_jets_requires_symmetric() {
        let l = ClassicalConnection::from_fn(2, 1, 3, |a, b, _| JetPoly::constant(2, 3, int((a + 2 * b) as i64)));
        assert_eq!(
            curvature_jets(&GeneralLinearConnection::zero(2, 1, 3), &l, 1).unwrap_err(),
            Error::NotSymmetric
        );
        let (rl, rk) = curvature_jets(
            &GeneralLinearConnection::zero(2, 1, 3),
            &ClassicalConnection::zero(2, 1, 3),
            1,
        )
        .unwrap();
        assert!(rl.iter().chain(rk.iter()).all(TensorField::is_zero));
    }
}
