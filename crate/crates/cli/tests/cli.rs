use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const A1: &str = r#"
[collision]
kernel = "constant"
k1 = 1.0

[fragmentation]
kernel = "powerlaw"
alpha = 0.0
beta = 0.5

[grid]
n = 8.0
cells_per_decade = 32

[time]
horizon = 0.5
output_times = [0.1, 0.25]
"#;

struct Sandbox {
    dir: tempfile::TempDir,
}

impl Sandbox {
    fn new() -> Self {
        Self { dir: tempfile::tempdir().unwrap() }
    }

    fn config(&self, name: &str, text: &str) -> PathBuf {
        let path = self.dir.path().join(name);
        std::fs::write(&path, text).unwrap();
        path
    }

    fn out(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

fn fragkin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fragkin")).args(args).env_remove("FRAGKIN_OUT").output().unwrap()
}

fn run_in(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    fragkin(&args)
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn zero_horizon_writes_a_single_row() {
    let s = Sandbox::new();
    let text = A1.replace("horizon = 0.5\noutput_times = [0.1, 0.25]", "horizon = 0.0");
    let cfg = s.config("t0.toml", &text);
    let out = s.out("t0");
    let o = run_in("run", &cfg, &out, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("time,"));
    assert_eq!(lines[0].split(',').count(), lines[1].split(',').count());
}

#[test]
fn constant_kernel_run_conserves_mass() {
    let s = Sandbox::new();
    let cfg = s.config("a1.toml", A1);
    let out = s.out("a1");
    let o = run_in("run", &cfg, &out, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let d = json(&out.join("diagnostics.json"));
    assert!(d["mass_drift"].as_f64().unwrap() <= 1e-6);
    assert_eq!(d["pass"], Value::Bool(true));
    let names: Vec<&str> = d["moment_bounds_check"].as_array().unwrap().iter().map(|r| r["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["mass-conservation", "energy-moment", "negative-moment", "number-moment"]);
    let moments = std::fs::read_to_string(out.join("moments.csv")).unwrap();
    assert_eq!(moments.lines().next().unwrap(), "time,N_-r,N_0,N_1,N_2");
    assert_eq!(moments.lines().count(), 5);
    assert!(json(&out.join("events.json"))["picard"]["slabs"].as_array().unwrap().len() > 1);
    let resolved = std::fs::read_to_string(out.join("scenario.toml")).unwrap();
    assert!(resolved.contains("cells_per_decade = 32"));
}

#[test]
fn cross_check_adds_the_twin_report() {
    let s = Sandbox::new();
    let text = A1.replace("cells_per_decade = 32", "cells_per_decade = 8") + "\n[solver]\ncross_check = true\n";
    let cfg = s.config("twin.toml", &text);
    let out = s.out("twin");
    assert_eq!(code(&run_in("run", &cfg, &out, &[])), 0);
    let d = json(&out.join("diagnostics.json"));
    assert_eq!(d["twin"]["pass"], Value::Bool(true));
    assert!(json(&out.join("events.json"))["rk4"]["rk4_steps"].as_u64().unwrap() > 0);
}

#[test]
fn sigma_out_of_range_is_a_config_error() {
    let s = Sandbox::new();
    let text = A1.replace("kernel = \"constant\"", "kernel = \"singular-product\"\nsigma = 0.7");
    let cfg = s.config("bad.toml", &text);
    let o = run_in("run", &cfg, &s.out("bad"), &[]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("sigma must lie in [0, 1/2]"), "{err}");
    assert!(err.contains("collision.sigma"), "{err}");
}

#[test]
fn malformed_toml_is_a_config_error() {
    let s = Sandbox::new();
    let cfg = s.config("broken.toml", "[collision\nkernel = 1");
    assert_eq!(code(&run_in("run", &cfg, &s.out("broken"), &[])), 2);
}

#[test]
fn non_converging_slab_is_a_solver_error() {
    let s = Sandbox::new();
    let text = A1.to_string() + "\n[solver]\nslab_policy = \"analytic-t0\"\npicard_max_iter = 1\n";
    let cfg = s.config("stall.toml", &text);
    let o = run_in("run", &cfg, &s.out("stall"), &[]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn unreadable_paths_are_io_errors() {
    let s = Sandbox::new();
    assert_eq!(code(&run_in("run", &s.out("missing.toml"), &s.out("x"), &[])), 4);
    let cfg = s.config("a1.toml", A1);
    let blocker = s.config("file", "");
    assert_eq!(code(&run_in("estimate", &cfg, &blocker.join("sub"), &[])), 4);
}

#[test]
fn zero_kernel_estimate_spans_the_horizon() {
    let s = Sandbox::new();
    let cfg = s.config("zero.toml", &A1.replace("k1 = 1.0", "k1 = 0.0"));
    let out = s.out("zero");
    assert_eq!(code(&run_in("estimate", &cfg, &out, &[])), 0);
    let e = &json(&out.join("estimate.json"))["estimate"];
    assert_eq!(e["t0"].as_f64().unwrap(), 0.5);
    assert_eq!(e["k"].as_f64().unwrap(), 0.0);
}

#[test]
fn constant_kernel_estimate_contracts_and_shrinks_with_n() {
    let s = Sandbox::new();
    let mut t0 = Vec::new();
    for n in [4.0, 8.0, 16.0] {
        let cfg = s.config(&format!("n{n}.toml"), &A1.replace("n = 8.0", &format!("n = {n:?}")));
        let out = s.out(&format!("n{n}"));
        assert_eq!(code(&run_in("estimate", &cfg, &out, &[])), 0);
        let e = &json(&out.join("estimate.json"))["estimate"];
        assert!(e["k"].as_f64().unwrap() < 1.0);
        t0.push(e["t0"].as_f64().unwrap());
    }
    assert!(t0.windows(2).all(|w| w[1] <= w[0]), "{t0:?}");
}

#[test]
fn refine_with_one_index_has_no_differences() {
    let s = Sandbox::new();
    let cfg = s.config("a1.toml", &A1.replace("cells_per_decade = 32", "cells_per_decade = 8"));
    let out = s.out("one");
    assert_eq!(code(&run_in("refine", &cfg, &out, &["--n-list", "8"])), 0);
    let table = json(&out.join("refine.json"));
    assert!(table["differences"].as_array().unwrap().is_empty());
    assert_eq!(table["cauchy"], Value::Bool(true));
}

#[test]
fn refine_constant_kernel_is_cauchy() {
    let s = Sandbox::new();
    let cfg = s.config("a1.toml", A1);
    let out = s.out("refine");
    let o = run_in("refine", &cfg, &out, &["--n-list", "4,8,16"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let table = json(&out.join("refine.json"));
    assert_eq!(table["differences"].as_array().unwrap().len(), 2);
    assert!(table["mass_spread"].as_f64().unwrap() <= 1e-6);
}

#[test]
fn coarse_refinement_still_writes_its_table() {
    let s = Sandbox::new();
    let cfg = s.config("coarse.toml", &A1.replace("cells_per_decade = 32", "cells_per_decade = 1"));
    let out = s.out("coarse");
    let o = run_in("refine", &cfg, &out, &["--n-list", "4,8,16"]);
    let table = json(&out.join("refine.json"));
    let cauchy = table["cauchy"].as_bool().unwrap();
    assert_eq!(code(&o), if cauchy { 0 } else { 1 });
}

#[test]
fn validate_passes_on_the_truncated_domain_only() {
    let s = Sandbox::new();
    let cfg = s.config("a1.toml", A1);
    let out = s.out("v");
    assert_eq!(code(&run_in("validate", &cfg, &out, &[])), 0);
    let o = run_in("validate", &cfg, &out, &["--untruncated"]);
    assert_eq!(code(&o), 1);
    let report = json(&out.join("validate.json"));
    let bound = report["checks"].as_array().unwrap().iter().find(|c| c["name"] == "fragmentation-bound").unwrap();
    assert_eq!(bound["status"], "fail");
    assert!(bound["note"].as_str().unwrap().contains("holds only on truncated domain"));
}

#[test]
fn asymmetric_custom_kernel_fails_with_witness() {
    let s = Sandbox::new();
    let text = A1.replace(
        "kernel = \"constant\"\nk1 = 1.0",
        "kernel = \"custom\"\nk1 = 1.0\nnu = 1.0\nx_exponent = 1.0\ny_exponent = 0.0",
    );
    let cfg = s.config("asym.toml", &text);
    let out = s.out("asym");
    assert_eq!(code(&run_in("validate", &cfg, &out, &[])), 1);
    let report = json(&out.join("validate.json"));
    let sym = report["checks"].as_array().unwrap().iter().find(|c| c["name"] == "collision-symmetry").unwrap();
    assert_eq!(sym["status"], "fail");
    assert_eq!(sym["witness"].as_array().unwrap().len(), 2);
}

#[test]
fn outputs_do_not_depend_on_the_thread_count() {
    let s = Sandbox::new();
    let cfg = s.config("a1.toml", A1);
    let (one, four) = (s.out("one"), s.out("four"));
    assert_eq!(code(&run_in("run", &cfg, &one, &["--threads", "1"])), 0);
    assert_eq!(code(&run_in("run", &cfg, &four, &["--threads", "4"])), 0);
    for name in ["trajectory.csv", "moments.csv", "events.json", "diagnostics.json"] {
        let a = std::fs::read(one.join(name)).unwrap();
        let b = std::fs::read(four.join(name)).unwrap();
        assert!(a == b, "{name} differs between thread counts");
    }
}

#[test]
fn environment_overrides_the_out_flag() {
    let s = Sandbox::new();
    let cfg = s.config("a1.toml", A1);
    let (flag, env) = (s.out("flag"), s.out("env"));
    let o = Command::new(env!("CARGO_BIN_EXE_fragkin"))
        .args(["estimate", "--config", cfg.to_str().unwrap(), "--out", flag.to_str().unwrap()])
        .env("FRAGKIN_OUT", &env)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(env.join("estimate.json").exists());
    assert!(!flag.exists());
}

#[test]
fn seed_is_accepted_and_ignored() {
    let s = Sandbox::new();
    let cfg = s.config("a1.toml", A1);
    assert_eq!(code(&run_in("estimate", &cfg, &s.out("seeded"), &["--seed", "7"])), 0);
}
