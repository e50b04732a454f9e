use bundleconn::connections::{covariant_differential, torsion_split, torsion_trace};
use bundleconn::jet::{int, Rational};
use bundleconn::linalg;
use bundleconn::natural::*;
use bundleconn::random;
use bundleconn::tensor::{SlotKind::*, Space, TensorField};
use bundleconn::Result;
use num_traits::Zero;

const ORDER: u32 = 3;

fn field<R: rand::Rng>(rng: &mut R, m: usize, n: usize, kind: bundleconn::tensor::SlotKind) -> TensorField {
    TensorField::from_fn(Space::base(m, n), vec![kind], ORDER, |_| random::poly(rng, m, ORDER, 2))
}

fn along(t: &TensorField, x: &TensorField) -> Result<TensorField> {
    let r = t.rank();
    t.tensor_product(x)?.contract(r, r - 1)
}

fn same(a: &TensorField, b: &TensorField) -> bool {
    let o = a.order().min(b.order());
    a.truncate(o) == b.truncate(o)
}

#[test]
fn lifts_satisfy_defining_identities() {
    for seed in 0..4 {
        let mut rng = random::rng(seed);
        let (m, n) = (2, 2);
        let l = random::classical(&mut rng, m, n, ORDER, false);
        let k = random::general_linear(&mut rng, m, n, ORDER);
        let d = induce_d(&l, &k).unwrap();
        let x = field(&mut rng, m, n, BaseUp);
        let y = field(&mut rng, m, n, BaseUp);
        let s = field(&mut rng, m, n, FiberUp);
        let sigma = field(&mut rng, m, n, FiberUp);
        let hx = horizontal_lift(&k, &x).unwrap();
        let hy = horizontal_lift(&k, &y).unwrap();
        let sv = vertical_lift(&s).unwrap();
        let sigv = vertical_lift(&sigma).unwrap();

        let lhs = covariant_derivative_on_e(&d, &hx, &hy).unwrap();
        let nxy = along(&covariant_differential(&y, &k, &l).unwrap(), &x).unwrap();
        assert!(same(&lhs, &horizontal_lift(&k, &nxy).unwrap()), "seed {seed}");

        let lhs = covariant_derivative_on_e(&d, &hx, &sv).unwrap();
        let nxs = along(&covariant_differential(&s, &k, &l).unwrap(), &x).unwrap();
        assert!(same(&lhs, &vertical_lift(&nxs).unwrap()), "seed {seed}");

        assert!(covariant_derivative_on_e(&d, &sv, &hx).unwrap().is_zero());
        assert!(covariant_derivative_on_e(&d, &sv, &sigv).unwrap().is_zero());
    }
}

#[test]
fn chi_of_d_is_gamma() {
    for seed in 0..4 {
        let mut rng = random::rng(100 + seed);
        let l = random::classical(&mut rng, 2, 2, ORDER, false);
        let k = random::general_linear(&mut rng, 2, 2, ORDER);
        let lhs = chi(&induce_d(&l, &k).unwrap()).unwrap();
        assert_eq!(lhs, induce_gamma(&l, &k).unwrap());
    }
}

#[test]
fn geometric_paths_match_coordinates() {
    for seed in 0..3 {
        let mut rng = random::rng(200 + seed);
        let (m, n) = if seed == 2 { (3, 1) } else { (2, 2) };
        let l = random::classical(&mut rng, m, n, ORDER, false);
        let k = random::general_linear(&mut rng, m, n, ORDER);
        let p = random::params15(&mut rng);
        assert_eq!(phi15(&l, &k, &p).unwrap(), phi15_geometric(&l, &k, &p).unwrap());
        let q = random::params14(&mut rng);
        assert_eq!(phi14(&l, &k, &q).unwrap(), phi14_geometric(&l, &k, &q).unwrap());
    }
}

#[test]
fn chi_is_affine_in_the_deformation() {
    let mut rng = random::rng(300);
    let l = random::classical(&mut rng, 2, 2, ORDER, false);
    let k = random::general_linear(&mut rng, 2, 2, ORDER);
    let p = random::params15(&mut rng);
    let d = induce_d(&l, &k).unwrap();
    let phi = phi15(&l, &k, &p).unwrap();
    let lhs = chi(&d.checked_add(&phi).unwrap())
        .unwrap()
        .as_tensor()
        .checked_sub(chi(&d).unwrap().as_tensor())
        .unwrap();
    let rhs = chi_tilde(&phi).unwrap().permute(&[0, 2, 1]).unwrap();
    assert!(same(&lhs, &rhs));
}

#[test]
fn params_map_intertwines() {
    for seed in 0..3 {
        let mut rng = random::rng(400 + seed);
        let l = random::classical(&mut rng, 2, 2, ORDER, false);
        let k = random::general_linear(&mut rng, 2, 2, ORDER);
        let p = random::params15(&mut rng);
        let lhs = chi(&induce_d_tilde(&l, &k, &p).unwrap()).unwrap();
        let rhs = induce_gamma_tilde(&l, &k, &params15_to_14(&p)).unwrap();
        assert!(same(lhs.as_tensor(), rhs.as_tensor()), "seed {seed}");
    }
}

fn flatten(t: &TensorField, point: &[Rational]) -> Vec<Rational> {
    t.evaluate(point).unwrap()
}

/// Solves `χ̃(Φ(e_k)) = Σ_r M[r][k] φ(e_r)` column by column on generic inputs.
#[test]
fn params_map_is_recovered_by_solving() {
    let mut rng = random::rng(500);
    let (m, n) = (3, 2);
    let mut rows14: Vec<Vec<Vec<Rational>>> = vec![Vec::new(); 14];
    let mut rows15: Vec<Vec<Vec<Rational>>> = vec![Vec::new(); 15];
    for _ in 0..2 {
        let l = random::classical(&mut rng, m, n, ORDER, false);
        let k = random::general_linear(&mut rng, m, n, ORDER);
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
        for (r, rows) in rows14.iter_mut().enumerate() {
            rows.push(flatten(&phi14(&l, &k, &Params14::unit(r)).unwrap(), &point));
        }
        for (c, rows) in rows15.iter_mut().enumerate() {
            let phi = phi15(&l, &k, &Params15::unit(c)).unwrap();
            rows.push(flatten(&chi_tilde(&phi).unwrap(), &point));
        }
    }
    let cat = |v: &Vec<Vec<Rational>>| v.concat();
    let basis14: Vec<Vec<Rational>> = rows14.iter().map(cat).collect();
    let len = basis14[0].len();
    // least squares is unnecessary: solve A q = b with A the 14 columns, via rref of [A | b]
    for c in 0..15 {
        let target = cat(&rows15[c]);
        let aug: Vec<Vec<Rational>> = (0..len)
            .map(|e| {
                basis14
                    .iter()
                    .map(|col| col[e].clone())
                    .chain(std::iter::once(target[e].clone()))
                    .collect()
            })
            .collect();
        let mut work = aug.clone();
        let pivots = linalg::rref(&mut work);
        assert_eq!(pivots.len(), 14, "column {c} not in the span or basis degenerate");
        let sol: Vec<Rational> = (0..14).map(|r| work[r][14].clone()).collect();
        let want: Vec<Rational> = PARAMS15_TO_14.iter().map(|row| int(row[c])).collect();
        assert_eq!(sol, want, "column {}", Params15::NAMES[c]);
    }
    let mat: Vec<Vec<Rational>> = PARAMS15_TO_14
        .iter()
        .map(|row| row.iter().map(|&v| int(v)).collect())
        .collect();
    let ker = linalg::kernel(&mat, 15);
    assert_eq!(ker.len(), 1);
    let k0 = &ker[0];
    assert_eq!(k0[2], k0[14]);
    assert!(k0.iter().enumerate().all(|(i, v)| i == 2 || i == 14 || v.is_zero()));
}

#[test]
fn chi_tilde_sends_a3_to_minus_h2() {
    let mut rng = random::rng(600);
    let (m, n) = (2, 2);
    let l = random::classical(&mut rng, m, n, ORDER, false);
    let k = random::general_linear(&mut rng, m, n, ORDER);
    let mut a3 = Params15::zero();
    a3.a3 = int(1);
    let mut h2 = Params15::zero();
    h2.h2 = int(1);
    let lhs = chi_tilde(&phi15(&l, &k, &a3).unwrap()).unwrap();
    let rhs = chi_tilde(&phi15(&l, &k, &h2).unwrap()).unwrap();
    assert!(!lhs.is_zero());
    assert_eq!(lhs, rhs.scale(&int(-1)));
}

#[test]
fn gamma_tilde_is_affine() {
    for seed in 0..3 {
        let mut rng = random::rng(700 + seed);
        let l = random::classical(&mut rng, 2, 2, ORDER, false);
        let k = random::general_linear(&mut rng, 2, 2, ORDER);
        let p = random::params14(&mut rng);
        assert!(is_affine(&induce_gamma_tilde(&l, &k, &p).unwrap()));
    }
}

#[test]
fn symmetric_flat_inputs_kill_torsion_and_k_terms() {
    let mut rng = random::rng(800);
    let l = random::classical(&mut rng, 2, 1, ORDER, true);
    let k = bundleconn::connections::GeneralLinearConnection::zero(2, 1, ORDER);
    let (_, t) = torsion_split(&l);
    assert!(t.is_zero() && torsion_trace(&t).is_zero());
    let mut p = random::params14(&mut rng);
    p.d1 = Rational::zero();
    p.d2 = Rational::zero();
    assert!(phi14(&l, &k, &p).unwrap().is_zero());
    let mut q = random::params15(&mut rng);
    q.d1 = Rational::zero();
    q.d2 = Rational::zero();
    assert!(phi15(&l, &k, &q).unwrap().is_zero());
}
