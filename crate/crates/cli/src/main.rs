use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use bundleconn::connections::{curvature_jets, curvature_k, curvature_lambda, torsion_split, torsion_trace};
use bundleconn::equivariance::{weight_solutions, TrialInput};
use bundleconn::jet::format_rational;
use bundleconn::natural;
use bundleconn::scene::{format_point, LoadedScene, Scene};
use bundleconn::suites::{self, SuiteResult};
use bundleconn::tensor::TensorField;
use bundleconn::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

const EXIT_VERIFY: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_ORDER: u8 = 3;

#[derive(Parser)]
#[command(
    name = "bundleconn",
    version,
    about = "Natural connections on a vector bundle and its first jet prolongation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scene file (JSON).
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Master seed; falls back to BUNDLECONN_SEED, then to the scene seed, then 0.
    #[arg(long, env = "BUNDLECONN_SEED")]
    seed: Option<u64>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Curvatures, torsion and covariant derivatives of the curvatures.
    Curvature {
        #[command(flatten)]
        common: Common,
        /// Number of covariant derivatives of R[K] and R[Λ̃].
        #[arg(long, default_value_t = 0)]
        depth: usize,
    },
    /// Coefficient table of an induced connection.
    Induce {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        target: Target,
    },
    /// Run a verification suite on the scene or on seeded random scenes.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "all")]
        suite: Suite,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        /// Base dimension of generated scenes.
        #[arg(long, default_value_t = 3)]
        m: usize,
        /// Fiber dimension of generated scenes.
        #[arg(long, default_value_t = 2)]
        n: usize,
    },
    /// Non-negative integer solutions of the weight equation.
    Weights {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1)]
        s: usize,
        #[arg(long, default_value_t = 1)]
        r: usize,
        #[arg(long, default_value_t = -2, allow_hyphen_values = true)]
        rhs: i64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Target {
    D,
    DTilde,
    Gamma,
    GammaTilde,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Suite {
    Prop21,
    Chi,
    Geometric,
    Naturality,
    Rank,
    Kernel,
    Affine,
    Calculus,
    Weights,
    All,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InsufficientOrder { .. } => EXIT_ORDER,
            _ => EXIT_INPUT,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn input_error(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_INPUT,
        message: message.into(),
    }
}

fn need_order(have: u32, needed: u32) -> Result<(), Failure> {
    if have < needed {
        return Err(Error::InsufficientOrder {
            needed,
            available: have,
        }
        .into());
    }
    Ok(())
}

struct Report {
    command: &'static str,
    scene_digest: Option<String>,
    seed: u64,
    results: Value,
    passed: bool,
    summary: Value,
}

impl Report {
    fn render(&self) -> String {
        let mut summary = self.summary.clone();
        summary["passed"] = Value::Bool(self.passed);
        let v = json!({
            "schema": 1,
            "command": self.command,
            "scene_digest": self.scene_digest,
            "seed": self.seed,
            "results": self.results,
            "summary": summary,
        });
        let mut s = serde_json::to_string_pretty(&v).expect("report serializes");
        s.push('\n');
        s
    }
}

fn read_scene(path: &PathBuf) -> Result<(Scene, LoadedScene), Failure> {
    let text = fs::read_to_string(path).map_err(|e| input_error(format!("{}: {e}", path.display())))?;
    let scene = Scene::from_json(&text)?;
    let loaded = scene.load()?;
    Ok((scene, loaded))
}

fn resolve_seed(common: &Common, scene: Option<&LoadedScene>) -> u64 {
    common.seed.or(scene.and_then(|s| s.seed)).unwrap_or(0)
}

fn require_scene(common: &Common) -> Result<(Scene, LoadedScene), Failure> {
    match &common.scene {
        Some(p) => read_scene(p),
        None => Err(input_error("--scene is required")),
    }
}

/// Component values at the scene point, nested like the table.
fn values(t: &TensorField) -> Value {
    fn go(shape: &[usize], comps: &[bundleconn::JetPoly]) -> Value {
        if shape.is_empty() {
            return Value::String(format_rational(&comps[0].constant_term()));
        }
        let stride = comps.len() / shape[0].max(1);
        Value::Array(
            (0..shape[0])
                .map(|k| go(&shape[1..], &comps[k * stride..(k + 1) * stride]))
                .collect(),
        )
    }
    go(&t.shape(), t.components())
}

fn field(t: &TensorField) -> Value {
    json!({ "at_point": values(t), "jet": t.to_record() })
}

fn curvature(common: &Common, depth: usize) -> Result<Report, Failure> {
    let (scene, s) = require_scene(common)?;
    need_order(s.order, 2.max(depth as u32 + 1))?;
    let (sym, t) = torsion_split(&s.lambda);
    let (jl, jk) = curvature_jets(&s.k, &sym, depth)?;
    let results = json!({
        "point": format_point(&s.point),
        "torsion": field(&t),
        "torsion_trace": field(&torsion_trace(&t)),
        "r_k": field(&curvature_k(&s.k)?),
        "r_lambda_sym": field(&curvature_lambda(&sym)?),
        "nabla_r_k": jk.iter().skip(1).map(field).collect::<Vec<_>>(),
        "nabla_r_lambda_sym": jl.iter().skip(1).map(field).collect::<Vec<_>>(),
    });
    Ok(Report {
        command: "curvature",
        scene_digest: Some(scene.digest()),
        seed: resolve_seed(common, Some(&s)),
        results,
        passed: true,
        summary: json!({ "depth": depth }),
    })
}

fn induce(common: &Common, target: Target) -> Result<Report, Failure> {
    let (scene, s) = require_scene(common)?;
    need_order(s.order, 1)?;
    let p15 = || {
        s.params15
            .as_ref()
            .ok_or_else(|| input_error("target d-tilde needs params15"))
    };
    let p14 = || {
        s.params14
            .as_ref()
            .ok_or_else(|| input_error("target gamma-tilde needs params14"))
    };
    let (name, table) = match target {
        Target::D => ("d", natural::induce_d(&s.lambda, &s.k)?.as_tensor().clone()),
        Target::DTilde => (
            "d-tilde",
            natural::induce_d_tilde(&s.lambda, &s.k, p15()?)?.as_tensor().clone(),
        ),
        Target::Gamma => ("gamma", natural::induce_gamma(&s.lambda, &s.k)?.as_tensor().clone()),
        Target::GammaTilde => (
            "gamma-tilde",
            natural::induce_gamma_tilde(&s.lambda, &s.k, p14()?)?
                .as_tensor()
                .clone(),
        ),
    };
    Ok(Report {
        command: "induce",
        scene_digest: Some(scene.digest()),
        seed: resolve_seed(common, Some(&s)),
        results: json!({ "target": name, "point": format_point(&s.point), "table": field(&table) }),
        passed: true,
        summary: json!({ "target": name }),
    })
}

fn verify(common: &Common, suite: Suite, trials: usize, m: usize, n: usize) -> Result<Report, Failure> {
    let scene = common.scene.as_ref().map(read_scene).transpose()?;
    let loaded = scene.as_ref().map(|(_, l)| l);
    let seed = resolve_seed(common, loaded);
    let (m, n) = loaded.map_or((m, n), |s| (s.m, s.n));
    if m == 0 || n == 0 {
        return Err(input_error("m and n must be positive"));
    }
    if trials == 0 {
        return Err(input_error("--trials must be positive"));
    }
    // with a scene every per-input suite runs on the scene alone
    let inputs: Vec<TrialInput> = match loaded {
        Some(s) => {
            need_order(s.order, 2)?;
            vec![suites::scene_trial(
                &s.lambda,
                &s.k,
                s.params15.as_ref(),
                s.params14.as_ref(),
                seed,
            )]
        }
        None => suites::trial_inputs(m, n, trials, seed, None),
    };
    let scene_inputs = loaded.map(|_| inputs.as_slice());
    let want = |x: Suite| suite == x || (suite == Suite::All && (x != Suite::Rank || loaded.is_none()));
    let mut results: Vec<SuiteResult> = Vec::new();
    if want(Suite::Weights) {
        results.push(suites::weights());
    }
    if want(Suite::Prop21) {
        results.push(suites::defining_identities(&inputs, seed)?);
    }
    if want(Suite::Chi) {
        results.push(suites::chi_consistency(&inputs)?);
    }
    if want(Suite::Geometric) {
        results.push(suites::geometric(&inputs)?);
    }
    if want(Suite::Affine) {
        results.push(suites::affine(&inputs)?);
    }
    if want(Suite::Calculus) {
        results.push(suites::calculus(&inputs, seed)?);
    }
    if want(Suite::Kernel) {
        results.push(suites::kernel(&inputs, m, n, seed)?);
    }
    if want(Suite::Naturality) {
        results.push(suites::naturality(m, n, trials, seed, scene_inputs)?);
    }
    if want(Suite::Rank) {
        results.push(suites::rank(m, n, seed)?);
    }
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.suite.as_str()).collect();
    let summary = json!({
        "suites": results.len(),
        "failed": failed,
        "dims": [m, n],
        "trials": inputs.len(),
    });
    Ok(Report {
        command: "verify",
        scene_digest: scene.as_ref().map(|(s, _)| s.digest()),
        seed,
        passed: failed.is_empty(),
        results: serde_json::to_value(&results).expect("results serialize"),
        summary,
    })
}

fn weights(common: &Common, s: usize, r: usize, rhs: i64) -> Report {
    let sols = weight_solutions(s, r, rhs);
    Report {
        command: "weights",
        scene_digest: None,
        seed: resolve_seed(common, None),
        results: json!({ "s": s, "r": r, "rhs": rhs, "solutions": sols }),
        passed: true,
        summary: json!({ "count": sols.len() }),
    }
}

fn run(cli: &Cli) -> Result<(Report, &Common), Failure> {
    Ok(match &cli.command {
        Command::Curvature { common, depth } => (curvature(common, *depth)?, common),
        Command::Induce { common, target } => (induce(common, *target)?, common),
        Command::Verify {
            common,
            suite,
            trials,
            m,
            n,
        } => (verify(common, *suite, *trials, *m, *n)?, common),
        Command::Weights { common, s, r, rhs } => (weights(common, *s, *r, *rhs), common),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok((report, common)) => {
            let text = report.render();
            match &common.out {
                Some(path) => {
                    if let Err(e) = fs::write(path, &text) {
                        eprintln!("error: {}: {e}", path.display());
                        return ExitCode::from(EXIT_INPUT);
                    }
                }
                None => print!("{text}"),
            }
            if report.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_VERIFY)
            }
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
