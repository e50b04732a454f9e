use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bundleconn::connections::{ClassicalConnection, GeneralLinearConnection};
use bundleconn::natural::{self, ClassicalConnectionOnE};
use bundleconn::random;
use bundleconn::scene::Scene;
use bundleconn::tensor::TensorRecord;
use bundleconn::JetPoly;
use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_bundleconn"));
    c.env_remove("BUNDLECONN_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stderr)))
}

fn write_scene(dir: &TempDir, name: &str, scene: &Scene) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, scene.to_json()).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn flat(m: usize, n: usize, order: u32) -> Scene {
    let mut rng = random::rng(0);
    let mut scene = Scene::from_parts(
        &ClassicalConnection::zero(m, n, order),
        &GeneralLinearConnection::zero(m, n, order),
        Some(&random::params15(&mut rng)),
        Some(&random::params14(&mut rng)),
        None,
    );
    scene.point = vec!["1/2".into(); m];
    scene
}

fn all_zero(v: &Value) -> bool {
    match v {
        Value::Array(a) => a.iter().all(all_zero),
        Value::String(s) => s == "0/1",
        _ => false,
    }
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

#[test]
fn weights_report() {
    let out = run(&["weights", "--seed", "5"]);
    assert_eq!(code(&out), 0);
    let r = report(&out);
    assert_eq!(r["schema"], 1);
    assert_eq!(r["seed"], 5);
    assert_eq!(r["summary"]["count"], 6);
    let out = run(&["weights", "--rhs", "-1"]);
    assert_eq!(report(&out)["summary"]["count"], 2);
}

#[test]
fn seed_falls_back_to_environment() {
    let out = bin().args(["weights"]).env("BUNDLECONN_SEED", "42").output().unwrap();
    assert_eq!(report(&out)["seed"], 42);
    let out = bin()
        .args(["weights", "--seed", "1"])
        .env("BUNDLECONN_SEED", "42")
        .output()
        .unwrap();
    assert_eq!(report(&out)["seed"], 1);
    let out = bin().args(["weights"]).env("BUNDLECONN_SEED", "x").output().unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn flat_scene_has_zero_curvature() {
    let dir = TempDir::new().unwrap();
    let p = write_scene(&dir, "flat.json", &flat(2, 2, 3));
    let out = run(&["curvature", "--scene", s(&p), "--depth", "1"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out)["results"].clone();
    for key in ["torsion", "r_k", "r_lambda_sym"] {
        assert!(all_zero(&r[key]["at_point"]), "{key}");
    }
    assert!(all_zero(&r["nabla_r_k"][0]["at_point"]));
}

#[test]
fn curvature_of_line_bundle_over_a_line_vanishes() {
    let dir = TempDir::new().unwrap();
    let mut rng = random::rng(3);
    let l = random::classical(&mut rng, 1, 1, 3, false);
    let k = random::general_linear(&mut rng, 1, 1, 3);
    let p = write_scene(&dir, "m1.json", &Scene::from_parts(&l, &k, None, None, None));
    let out = run(&["curvature", "--scene", s(&p)]);
    assert_eq!(code(&out), 0);
    assert!(all_zero(&report(&out)["results"]["r_k"]["at_point"]));
}

/// `K^0_{0,0} = x^1` on a line bundle over the plane: the commutator of
/// covariant derivatives acts by `+1` on the `(0, 1)` component.
#[test]
fn abelian_curvature_component() {
    let dir = TempDir::new().unwrap();
    let x1 = JetPoly::var(2, 3, 1).unwrap();
    let k = GeneralLinearConnection::from_fn(
        2,
        1,
        3,
        |_, _, lam| if lam == 0 { x1.clone() } else { JetPoly::zero(2, 3) },
    );
    let l = ClassicalConnection::zero(2, 1, 3);
    let p = write_scene(&dir, "abelian.json", &Scene::from_parts(&l, &k, None, None, None));
    let out = run(&["curvature", "--scene", s(&p)]);
    let rk = &report(&out)["results"]["r_k"]["at_point"];
    assert_eq!(rk[0][0][0][1], "1/1");
    assert_eq!(rk[0][0][1][0], "-1/1");
    assert_eq!(rk[0][0][0][0], "0/1");
}

fn table(r: &Value) -> bundleconn::tensor::TensorField {
    let rec: TensorRecord = serde_json::from_value(r["results"]["table"]["jet"].clone()).unwrap();
    rec.to_field().unwrap()
}

#[test]
fn induce_gamma_is_chi_of_induce_d() {
    let dir = TempDir::new().unwrap();
    let p = write_scene(&dir, "scene.json", &Scene::random(8, 2, 1, 3));
    let d = report(&run(&["induce", "--scene", s(&p), "--target", "d"]));
    let g = report(&run(&["induce", "--scene", s(&p), "--target", "gamma"]));
    let chi = natural::chi(&ClassicalConnectionOnE::from_tensor(table(&d)).unwrap()).unwrap();
    assert_eq!(chi.as_tensor(), &table(&g));
}

#[test]
fn induce_gamma_tilde_matches_chi_of_d_tilde() {
    let dir = TempDir::new().unwrap();
    let scene = Scene::random(9, 2, 2, 3);
    let loaded = scene.load().unwrap();
    let p15 = loaded.params15.clone().unwrap();
    let mut scene14 = scene.clone();
    scene14.params14 = Some(natural::params15_to_14(&p15).to_map());
    let p = write_scene(&dir, "a.json", &scene);
    let q = write_scene(&dir, "b.json", &scene14);
    let dt = report(&run(&["induce", "--scene", s(&p), "--target", "d-tilde"]));
    let gt = report(&run(&["induce", "--scene", s(&q), "--target", "gamma-tilde"]));
    let chi = natural::chi(&ClassicalConnectionOnE::from_tensor(table(&dt)).unwrap()).unwrap();
    let got = table(&gt);
    let o = got.order().min(chi.order());
    assert_eq!(chi.as_tensor().truncate(o), got.truncate(o));
}

#[test]
fn zero_scene_induces_zero_d() {
    let dir = TempDir::new().unwrap();
    let p = write_scene(&dir, "flat.json", &flat(2, 1, 2));
    let r = report(&run(&["induce", "--scene", s(&p), "--target", "d"]));
    assert!(all_zero(&r["results"]["table"]["at_point"]));
    assert!(table(&r).is_zero());
}

#[test]
fn input_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    let mut scene = flat(2, 1, 2);
    scene.params14 = None;
    let p = write_scene(&dir, "noparams.json", &scene);
    assert_eq!(code(&run(&["induce", "--scene", s(&p), "--target", "gamma-tilde"])), 2);
    assert_eq!(code(&run(&["induce", "--scene", s(&p), "--target", "gamma"])), 0);

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"m\": 2}").unwrap();
    assert_eq!(code(&run(&["curvature", "--scene", s(&bad)])), 2);
    assert_eq!(
        code(&run(&["curvature", "--scene", s(&dir.path().join("missing.json"))])),
        2
    );
    assert_eq!(code(&run(&["curvature"])), 2);
    assert_eq!(code(&run(&["verify", "--suite", "nope"])), 2);
}

#[test]
fn low_order_exits_three() {
    let dir = TempDir::new().unwrap();
    let p = write_scene(&dir, "o1.json", &flat(2, 1, 1));
    assert_eq!(code(&run(&["curvature", "--scene", s(&p)])), 3);
    assert_eq!(code(&run(&["verify", "--scene", s(&p), "--suite", "prop21"])), 3);
    let q = write_scene(&dir, "o2.json", &flat(2, 1, 2));
    assert_eq!(code(&run(&["curvature", "--scene", s(&q), "--depth", "2"])), 3);
}

#[test]
fn verify_all_on_flat_scene_passes() {
    let dir = TempDir::new().unwrap();
    let p = write_scene(&dir, "flat.json", &flat(2, 1, 2));
    let out = run(&["verify", "--scene", s(&p), "--trials", "2", "--seed", "3"]);
    let r = report(&out);
    assert_eq!(code(&out), 0, "{}", r["summary"]);
    let suites: Vec<&str> = r["results"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["suite"].as_str().unwrap())
        .collect();
    assert!(!suites.contains(&"rank"));
    assert!(suites.contains(&"naturality"));
    assert!(r["scene_digest"].is_string());
}

#[test]
fn reports_are_reproducible() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("r.json");
    let args = [
        "verify", "--suite", "prop21", "--trials", "3", "--m", "2", "--n", "1", "--seed", "9",
    ];
    let first = run(&args);
    assert_eq!(code(&first), 0);
    let second = run(&[&args[..], &["--out", s(&out)]].concat());
    assert!(second.stdout.is_empty());
    assert_eq!(std::fs::read(&out).unwrap(), first.stdout);
}

#[test]
fn surface_rank_is_reported_as_failure() {
    let out = run(&["verify", "--suite", "rank", "--m", "2", "--n", "2", "--seed", "1"]);
    assert_eq!(code(&out), 1);
    let r = report(&out);
    assert_eq!(r["results"][0]["details"]["phi15"], 11);
    assert_eq!(r["results"][0]["details"]["phi14"], 10);
    assert_eq!(r["summary"]["failed"][0], "rank");
}

#[test]
fn book_scene_runs() {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../book/src/scene.json");
    let out = run(&["curvature", "--scene", s(&p)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    assert_eq!(r["results"]["r_k"]["at_point"][0][0][0][1], "1/1");
    assert_eq!(r["results"]["point"][1], "1/2");
}
