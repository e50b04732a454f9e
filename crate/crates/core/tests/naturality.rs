use bundleconn::equivariance::*;
use bundleconn::jet::int;
use bundleconn::natural;
use bundleconn::tensor::TensorField;
use bundleconn::Result;

#[test]
fn every_constructor_is_natural() {
    for c in Constructor::ALL {
        let report = verify_naturality(&c, 2, 2, 3, 11).unwrap();
        assert!(report.passed(), "{}: {:?}", c.as_str(), report.failures.first());
    }
}

#[test]
fn natural_in_three_dimensions() {
    for c in [Constructor::Phi15, Constructor::InduceGamma] {
        let report = verify_naturality(&c, 3, 1, 2, 12).unwrap();
        assert!(report.passed(), "{}: {:?}", c.as_str(), report.failures.first());
    }
}

#[test]
fn perturbed_phi15_is_caught() {
    let report = verify_naturality(&PerturbedPhi15 { shift: int(1) }, 2, 2, 3, 11).unwrap();
    assert!(!report.passed());
    assert_eq!(report.failures.len(), 3);
    let f = &report.failures[0];
    assert_eq!(f.component_index.len(), 3);
    assert_ne!(f.lhs, f.rhs);
}

/// `Γ` without the `-y^i_ρ Λ^ρ_{μλ}` term.
struct GammaWithoutJetTerm;

impl NaturalOperator for GammaWithoutJetTerm {
    fn name(&self) -> String {
        "gamma_without_jet_term".into()
    }

    fn compute(&self, t: &TrialInput) -> Result<TensorField> {
        let mut g = natural::induce_gamma(&t.lambda, &t.k)?.as_tensor().clone();
        let space = g.space();
        let (m, n) = (space.m, space.n);
        for mu in 0..m {
            for i in 0..n {
                for lam in 0..m {
                    let mut acc = g.get(&[mu, i, lam]).clone();
                    for rho in 0..m {
                        let l = t.lambda.get(rho, mu, lam).embed_prefix(space.num_vars());
                        acc = &acc + &(&space.w_poly(g.order(), i, rho) * &l).truncate(g.order());
                    }
                    g.set(&[mu, i, lam], acc);
                }
            }
        }
        Ok(g)
    }

    fn transform(&self, out: &TensorField, phi: &MorphismJet) -> Result<TensorField> {
        Constructor::InduceGamma.transform(out, phi)
    }
}

#[test]
fn gamma_needs_the_jet_term() {
    let report = verify_naturality(&GammaWithoutJetTerm, 2, 2, 2, 13).unwrap();
    assert!(!report.passed());
}

/// `Φ` with the `a3` base block written with `T_μ{}^ρ{}_ρ = -T̂_μ` but the
/// cross term left in the `T̂` convention.
struct MixedTraceSign;

impl NaturalOperator for MixedTraceSign {
    fn name(&self) -> String {
        "phi15_mixed_trace_sign".into()
    }

    fn compute(&self, t: &TrialInput) -> Result<TensorField> {
        let mut p = natural::Params15::zero();
        p.a3 = int(1);
        let mut out = natural::phi15(&t.lambda, &t.k, &p)?;
        let ing = natural::ingredients(&t.lambda, &t.k)?;
        let space = out.space();
        let m = space.m;
        for mu in 0..m {
            for nu in 0..m {
                let th = ing
                    .t_hat
                    .get(&[mu])
                    .embed_prefix(space.num_vars())
                    .truncate(out.order());
                let cur = out.get(&[mu, nu, nu]).clone();
                out.set(&[mu, nu, nu], &cur - &th.scale(&int(2)));
            }
        }
        Ok(out)
    }

    fn transform(&self, out: &TensorField, phi: &MorphismJet) -> Result<TensorField> {
        transform_tensor(out, phi)
    }
}

#[test]
fn trace_sign_must_match_cross_term() {
    let report = verify_naturality(&MixedTraceSign, 2, 2, 2, 14).unwrap();
    assert!(!report.passed());
}
