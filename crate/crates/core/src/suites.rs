//! Verification suites shared by the command line and the test targets.
//!
//! Every suite returns a [`SuiteResult`]: a pass flag plus a JSON payload with
//! whatever was measured. Trials are seeded from `(seed, trial)` and merged in
//! trial order.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::connections::{
    covariant_differential, curvature_k, curvature_lambda, torsion_split, ClassicalConnection, GeneralLinearConnection,
};
use crate::equivariance::{
    family_rank_random, trial_seed, verify_naturality, verify_naturality_many, weight_solutions, Constructor, Family,
    NaturalOperator, NaturalityReport, PerturbedPhi15, TrialInput,
};
use crate::error::Result;
use crate::jet::{int, Rational};
use crate::linalg;
use crate::natural::{self, Params14, Params15, PARAMS15_TO_14};
use crate::random;
use crate::tensor::{SlotKind, Space, TensorField};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteResult {
    pub suite: String,
    pub passed: bool,
    pub details: Value,
}

impl SuiteResult {
    fn new(suite: &str, passed: bool, details: Value) -> Self {
        SuiteResult {
            suite: suite.to_string(),
            passed,
            details,
        }
    }
}

/// Input order for generated trials.
pub const TRIAL_ORDER: u32 = 3;

/// `count` random trial inputs; when `first` is given it replaces trial 0.
pub fn trial_inputs(m: usize, n: usize, count: usize, seed: u64, first: Option<TrialInput>) -> Vec<TrialInput> {
    let mut out: Vec<TrialInput> = (0..count)
        .map(|t| TrialInput::random(&mut random::rng(trial_seed(seed, t)), m, n, TRIAL_ORDER))
        .collect();
    if let (Some(f), Some(slot)) = (first, out.first_mut()) {
        *slot = f;
    }
    out
}

fn same(a: &TensorField, b: &TensorField) -> bool {
    let o = a.order().min(b.order());
    a.truncate(o) == b.truncate(o)
}

fn base_field<R: Rng>(rng: &mut R, m: usize, n: usize, order: u32, kind: SlotKind) -> TensorField {
    TensorField::from_fn(Space::base(m, n), vec![kind], order, |_| random::poly(rng, m, order, 2))
}

/// Contracts the trailing derivative slot of `t` with the vector field `x`.
fn along(t: &TensorField, x: &TensorField) -> Result<TensorField> {
    let r = t.rank();
    t.tensor_product(x)?.contract(r, r - 1)
}

/// The four defining identities of `D(Λ, K)` for random lifted fields.
pub fn defining_identities_trial(input: &TrialInput, seed: u64) -> Result<[bool; 4]> {
    let (l, k) = (&input.lambda, &input.k);
    let (m, n) = (k.m(), k.n());
    let order = l.order().min(k.order());
    let mut rng = random::rng(seed);
    let d = natural::induce_d(l, k)?;
    let x = base_field(&mut rng, m, n, order, SlotKind::BaseUp);
    let y = base_field(&mut rng, m, n, order, SlotKind::BaseUp);
    let s = base_field(&mut rng, m, n, order, SlotKind::FiberUp);
    let sigma = base_field(&mut rng, m, n, order, SlotKind::FiberUp);
    let hx = natural::horizontal_lift(k, &x)?;
    let hy = natural::horizontal_lift(k, &y)?;
    let sv = natural::vertical_lift(&s)?;
    let sigv = natural::vertical_lift(&sigma)?;

    let nxy = along(&covariant_differential(&y, k, l)?, &x)?;
    let one = same(
        &natural::covariant_derivative_on_e(&d, &hx, &hy)?,
        &natural::horizontal_lift(k, &nxy)?,
    );
    let nxs = along(&covariant_differential(&s, k, l)?, &x)?;
    let two = same(
        &natural::covariant_derivative_on_e(&d, &hx, &sv)?,
        &natural::vertical_lift(&nxs)?,
    );
    let three = natural::covariant_derivative_on_e(&d, &sv, &hx)?.is_zero();
    let four = natural::covariant_derivative_on_e(&d, &sv, &sigv)?.is_zero();
    Ok([one, two, three, four])
}

fn par_trials<T, F>(inputs: &[TrialInput], f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &TrialInput) -> Result<T> + Sync,
{
    inputs.par_iter().enumerate().map(|(t, input)| f(t, input)).collect()
}

pub fn defining_identities(inputs: &[TrialInput], seed: u64) -> Result<SuiteResult> {
    let results = par_trials(inputs, |t, input| {
        defining_identities_trial(input, trial_seed(seed ^ 0x21, t))
    })?;
    let failing: Vec<usize> = results
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.iter().all(|&b| b))
        .map(|(t, _)| t)
        .collect();
    Ok(SuiteResult::new(
        "prop21",
        failing.is_empty(),
        json!({ "trials": inputs.len(), "failing_trials": failing, "identities": results }),
    ))
}

/// `χ(D(Λ, K)) = Γ(Λ, K)`.
pub fn chi_consistency(inputs: &[TrialInput]) -> Result<SuiteResult> {
    let ok = par_trials(inputs, |_, input| {
        let lhs = natural::chi(&natural::induce_d(&input.lambda, &input.k)?)?;
        Ok(lhs == natural::induce_gamma(&input.lambda, &input.k)?)
    })?;
    Ok(trial_flags("chi", ok))
}

fn trial_flags(name: &str, ok: Vec<bool>) -> SuiteResult {
    let failing: Vec<usize> = ok.iter().enumerate().filter(|(_, &b)| !b).map(|(t, _)| t).collect();
    SuiteResult::new(
        name,
        failing.is_empty(),
        json!({ "trials": ok.len(), "failing_trials": failing }),
    )
}

/// Geometric assemblies against the coordinate formulas, for both families.
pub fn geometric(inputs: &[TrialInput]) -> Result<SuiteResult> {
    let ok = par_trials(inputs, |_, t| {
        let a =
            natural::phi15(&t.lambda, &t.k, &t.params15)? == natural::phi15_geometric(&t.lambda, &t.k, &t.params15)?;
        let b =
            natural::phi14(&t.lambda, &t.k, &t.params14)? == natural::phi14_geometric(&t.lambda, &t.k, &t.params14)?;
        Ok((a, b))
    })?;
    let all = ok.iter().all(|&(a, b)| a && b);
    Ok(SuiteResult::new(
        "geometric",
        all,
        json!({
            "trials": ok.len(),
            "phi15_failing": ok.iter().enumerate().filter(|(_, r)| !r.0).map(|(t, _)| t).collect::<Vec<_>>(),
            "phi14_failing": ok.iter().enumerate().filter(|(_, r)| !r.1).map(|(t, _)| t).collect::<Vec<_>>(),
        }),
    ))
}

/// Affineness of `Γ̃` in the jet coordinates.
pub fn affine(inputs: &[TrialInput]) -> Result<SuiteResult> {
    let ok = par_trials(inputs, |_, t| {
        Ok(natural::is_affine(&natural::induce_gamma_tilde(
            &t.lambda,
            &t.k,
            &t.params14,
        )?))
    })?;
    Ok(trial_flags("affine", ok))
}

/// `χ̃(h^K(T̂ ⊗ I)) = -χ̃(T̂ ⊗ ν_K)` on the given inputs.
pub fn a3_h2_identity(input: &TrialInput) -> Result<bool> {
    let mut a3 = Params15::zero();
    a3.a3 = int(1);
    let mut h2 = Params15::zero();
    h2.h2 = int(1);
    let lhs = natural::chi_tilde(&natural::phi15(&input.lambda, &input.k, &a3)?)?;
    let rhs = natural::chi_tilde(&natural::phi15(&input.lambda, &input.k, &h2)?)?;
    Ok(lhs == rhs.scale(&int(-1)))
}

/// `χ(D̃(p)) = Γ̃(params15_to_14(p))`.
pub fn intertwining_trial(input: &TrialInput) -> Result<bool> {
    let lhs = natural::chi(&natural::induce_d_tilde(&input.lambda, &input.k, &input.params15)?)?;
    let rhs = natural::induce_gamma_tilde(&input.lambda, &input.k, &natural::params15_to_14(&input.params15))?;
    Ok(same(lhs.as_tensor(), rhs.as_tensor()))
}

/// Kernel checks: the frozen parameter map, its lift to the realized
/// families (`rank Φ15 - rank χ̃Φ15`), the `χ̃` identity and the
/// intertwining relation on the inputs.
pub fn kernel(inputs: &[TrialInput], m: usize, n: usize, seed: u64) -> Result<SuiteResult> {
    let mat: Vec<Vec<Rational>> = PARAMS15_TO_14
        .iter()
        .map(|row| row.iter().map(|&v| int(v)).collect())
        .collect();
    let map_kernel = linalg::kernel(&mat, Params15::NAMES.len());
    let phi15 = family_rank_random(Family::Phi15, m, n, false, seed)?;
    let lifted = family_rank_random(Family::ChiTildePhi15, m, n, false, seed)?;
    let lifted_kernel = phi15.rank - lifted.rank;
    let identity = par_trials(inputs, |_, t| a3_h2_identity(t))?;
    let intertwines = par_trials(inputs, |_, t| intertwining_trial(t))?;
    let kernel_vector: Vec<String> = map_kernel
        .first()
        .map(|v| v.iter().map(crate::jet::format_rational).collect())
        .unwrap_or_default();
    let passed =
        map_kernel.len() == 1 && lifted_kernel == 1 && identity.iter().all(|&b| b) && intertwines.iter().all(|&b| b);
    Ok(SuiteResult::new(
        "kernel",
        passed,
        json!({
            "map_kernel_dim": map_kernel.len(),
            "map_kernel_vector": kernel_vector,
            "dims": [m, n],
            "phi15_rank": phi15.rank,
            "chi_tilde_phi15_rank": lifted.rank,
            "lifted_kernel_dim": lifted_kernel,
            "identity_trials": identity,
            "intertwining_trials": intertwines,
        }),
    ))
}

/// Stacked-evaluation ranks of both families, generic and symmetric.
pub fn rank(m: usize, n: usize, seed: u64) -> Result<SuiteResult> {
    let phi15 = family_rank_random(Family::Phi15, m, n, false, seed)?;
    let phi14 = family_rank_random(Family::Phi14, m, n, false, seed)?;
    let phi15_sym = family_rank_random(Family::Phi15, m, n, true, seed)?;
    let phi14_sym = family_rank_random(Family::Phi14, m, n, true, seed)?;
    let passed = phi15.rank == 15 && phi14.rank == 14 && phi15_sym.rank == 4 && phi14_sym.rank == 4;
    Ok(SuiteResult::new(
        "rank",
        passed,
        json!({
            "dims": [m, n],
            "phi15": phi15.rank,
            "phi14": phi14.rank,
            "phi15_symmetric": phi15_sym.rank,
            "phi14_symmetric": phi14_sym.rank,
            "expected": { "phi15": 15, "phi14": 14, "phi15_symmetric": 4, "phi14_symmetric": 4 },
            "draws": [phi15.ranks_by_draw, phi14.ranks_by_draw, phi15_sym.ranks_by_draw, phi14_sym.ranks_by_draw],
        }),
    ))
}

/// Solutions of the weight equation for right-hand sides -1 and -2.
pub fn weights() -> SuiteResult {
    let one = weight_solutions(1, 1, -1);
    let two = weight_solutions(1, 1, -2);
    SuiteResult::new(
        "weights",
        one.len() == 2 && two.len() == 6,
        json!({ "rhs_minus_1": one, "rhs_minus_2": two }),
    )
}

/// Naturality of all six constructors plus the mutant, which must fail.
///
/// With `inputs` the constructors are checked on those inputs; otherwise
/// `trials` random inputs are drawn. The mutant always runs on random inputs.
pub fn naturality(m: usize, n: usize, trials: usize, seed: u64, inputs: Option<&[TrialInput]>) -> Result<SuiteResult> {
    let ops: Vec<&dyn NaturalOperator> = Constructor::ALL.iter().map(|c| c as &dyn NaturalOperator).collect();
    let reports = verify_naturality_many(&ops, inputs, m, n, trials, seed)?;
    let passed = reports.iter().all(NaturalityReport::passed);
    let mutant = verify_naturality(&PerturbedPhi15 { shift: int(1) }, m, n, trials.max(1), seed)?;
    let caught = !mutant.passed();
    Ok(SuiteResult::new(
        "naturality",
        passed && caught,
        json!({ "constructors": reports, "mutant_caught": caught, "mutant": mutant }),
    ))
}

/// One trial of the calculus checks.
pub fn calculus_trial(input: &TrialInput, seed: u64) -> Result<[bool; 4]> {
    let (l, k) = (&input.lambda, &input.k);
    let (m, n) = (k.m(), k.n());
    let order = l.order().min(k.order());
    let mut rng = random::rng(seed);
    let (sym, t) = torsion_split(l);

    // Ricci identity: ∇²s_{μν} - ∇²s_{νμ} = -R[K]_{μν} s, ∇²X likewise with R[Λ̃]
    let s = base_field(&mut rng, m, n, order, SlotKind::FiberUp);
    let x = base_field(&mut rng, m, n, order, SlotKind::BaseUp);
    let ricci = |f: &TensorField, r: &TensorField| -> Result<bool> {
        let dd = covariant_differential(&covariant_differential(f, k, &sym)?, k, &sym)?;
        let anti = dd.checked_sub(&dd.permute(&[0, 2, 1])?)?;
        // r: [j][i][μ][ν]; contract the argument slot with f
        let rf = r.tensor_product(f)?.contract(4, 0)?.scale(&int(-1));
        Ok(same(&anti, &rf))
    };
    let ricci_ok = ricci(&s, &curvature_k(k)?)? && ricci(&x, &curvature_lambda(&sym)?)?;

    // Leibniz: ∇(s ⊗ X) = ∇s ⊗ X + s ⊗ ∇X
    let lhs = covariant_differential(&s.tensor_product(&x)?, k, l)?;
    let a = covariant_differential(&s, k, l)?
        .tensor_product(&x)?
        .permute(&[0, 2, 1])?;
    let b = s.tensor_product(&covariant_differential(&x, k, l)?)?;
    let leibniz_ok = same(&lhs, &a.checked_add(&b)?);

    // Λ = Λ̃ + T with T stored [μ][λ][ν]
    let rebuilt = sym.table().checked_add(&t.permute(&[1, 0, 2])?)?;
    let split_ok = &rebuilt == l.table() && sym.is_symmetric();

    let (d, theta) = natural::contact_maps(m, n, order);
    let contact_ok = d.tensor_product(&theta)?.contract(1, 2)?.is_zero();
    Ok([ricci_ok, leibniz_ok, split_ok, contact_ok])
}

pub fn calculus(inputs: &[TrialInput], seed: u64) -> Result<SuiteResult> {
    let results = par_trials(inputs, |t, input| calculus_trial(input, trial_seed(seed ^ 0xca1c, t)))?;
    let passed = results.iter().all(|r| r.iter().all(|&b| b));
    Ok(SuiteResult::new(
        "calculus",
        passed,
        json!({ "trials": results.len(), "checks": ["ricci", "leibniz", "torsion_split", "contact"], "results": results }),
    ))
}

/// Wraps scene connections as the first trial.
pub fn scene_trial(
    lambda: &ClassicalConnection,
    k: &GeneralLinearConnection,
    params15: Option<&Params15>,
    params14: Option<&Params14>,
    seed: u64,
) -> TrialInput {
    let mut rng = random::rng(seed);
    TrialInput {
        lambda: lambda.clone(),
        k: k.clone(),
        params15: params15.cloned().unwrap_or_else(|| random::params15(&mut rng)),
        params14: params14.cloned().unwrap_or_else(|| random::params14(&mut rng)),
    }
}

/// `true` when every input has room for second derivatives.
pub fn orders_sufficient(inputs: &[TrialInput]) -> bool {
    inputs.iter().all(|t| t.lambda.order().min(t.k.order()) >= 2)
}
