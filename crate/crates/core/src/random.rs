//! Seeded generators for random scenes.
//!
//! Coefficients are rationals `p/q` with `|p| ≤ 5`, `1 ≤ q ≤ 3`; polynomials
//! have degree at most two.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::connections::{ClassicalConnection, GeneralLinearConnection};
use crate::jet::{ratio, JetPoly, MultiIndex, Rational};
use crate::natural::{Params14, Params15};

pub type SceneRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SceneRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rational<R: Rng>(rng: &mut R) -> Rational {
    ratio(rng.gen_range(-5..=5), rng.gen_range(1..=3))
}

pub fn nonzero_rational<R: Rng>(rng: &mut R) -> Rational {
    loop {
        let r = rational(rng);
        if r != Rational::from_integer(0.into()) {
            return r;
        }
    }
}

/// Random polynomial of degree at most `degree.min(order)` in `num_vars` variables.
pub fn poly<R: Rng>(rng: &mut R, num_vars: usize, order: u32, degree: u32) -> JetPoly {
    let top = degree.min(order);
    let mut terms = Vec::new();
    let mut exps = vec![0u32; num_vars];
    monomials(&mut exps, 0, top, &mut |e| {
        terms.push((MultiIndex::from_exponents(e).expect("small"), rational(rng)));
    });
    JetPoly::from_terms(num_vars, order, terms).expect("degree within order")
}

fn monomials(exps: &mut Vec<u32>, var: usize, budget: u32, f: &mut impl FnMut(&[u32])) {
    if var == exps.len() {
        f(exps);
        return;
    }
    for d in 0..=budget {
        exps[var] = d;
        monomials(exps, var + 1, budget - d, f);
    }
    exps[var] = 0;
}

pub fn general_linear<R: Rng>(rng: &mut R, m: usize, n: usize, order: u32) -> GeneralLinearConnection {
    GeneralLinearConnection::from_fn(m, n, order, |_, _, _| poly(rng, m, order, 2))
}

/// Random classical connection; with `symmetric` the lower indices are symmetrized.
pub fn classical<R: Rng>(rng: &mut R, m: usize, n: usize, order: u32, symmetric: bool) -> ClassicalConnection {
    let raw: Vec<JetPoly> = (0..m * m * m).map(|_| poly(rng, m, order, 2)).collect();
    ClassicalConnection::from_fn(m, n, order, |lam, mu, nu| {
        let a = &raw[(lam * m + mu) * m + nu];
        if symmetric {
            let b = &raw[(lam * m + nu) * m + mu];
            (a + b).scale(&ratio(1, 2))
        } else {
            a.clone()
        }
    })
}

pub fn params15<R: Rng>(rng: &mut R) -> Params15 {
    let v: Vec<Rational> = (0..Params15::NAMES.len()).map(|_| rational(rng)).collect();
    Params15::from_slice(&v).expect("length")
}

pub fn params14<R: Rng>(rng: &mut R) -> Params14 {
    let v: Vec<Rational> = (0..Params14::NAMES.len()).map(|_| rational(rng)).collect();
    Params14::from_slice(&v).expect("length")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        let a = general_linear(&mut rng(7), 2, 2, 3);
        let b = general_linear(&mut rng(7), 2, 2, 3);
        assert_eq!(a, b);
        assert_ne!(a, general_linear(&mut rng(8), 2, 2, 3));
    }

    #[test]
    fn bounds_respected() {
        let mut r = rng(1);
        for _ in 0..50 {
            let p = poly(&mut r, 3, 4, 2);
            assert!(p.degree() <= 2);
            for (_, c) in p.terms() {
                assert!(c.numer().magnitude() <= &5u32.into());
                assert!(c.denom() <= &3.into());
            }
        }
        assert!(classical(&mut r, 2, 1, 3, true).is_symmetric());
    }
}
