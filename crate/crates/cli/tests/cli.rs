use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_retire");

fn params(level: f64) -> String {
    format!(
        r#""params":{{"r":0.02,"mu":0.06,"sigma":0.2,"rho":0.03,"gamma":2,"delta":0.03,"y1":1,"y2":0,"support":{{"L":{level}}}}}"#
    )
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, format!("{{{body}}}")).unwrap();
    path
}

fn run(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args).env("SOURCE_DATE_EPOCH", "0").env_remove("SOLVER_THREADS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn retire(command: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![command, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args, &[])
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/solve_feasible")
}

#[test]
fn solve_matches_golden_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &format!(r#"{},"grid":{{"n":20}}"#, params(1.2)));
    let out = tmp.path().join("out");
    let o = retire("solve", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let golden = golden_dir();
    for name in ["policy.csv", "manifest.json"] {
        let got = fs::read_to_string(out.join(name)).unwrap();
        if std::env::var_os("UPDATE_GOLDEN").is_some() {
            fs::create_dir_all(&golden).unwrap();
            fs::write(golden.join(name), &got).unwrap();
        }
        let want = fs::read_to_string(golden.join(name)).unwrap();
        assert_eq!(got, want, "{name} differs from the golden copy");
    }
    let m = json(out.join("manifest.json"));
    assert_eq!(m["solution"]["regime"], "RetirementFeasible");
    assert_eq!(m["solution"]["z_bar"].as_f64(), Some(0.0213844289951));
    assert_eq!(m["solution"]["w_bar"].as_f64(), Some(103.897031833));
    assert_eq!(m["created"]["utc"], "1970-01-01T00:00:00Z");
}

#[test]
fn delay_forever_has_null_thresholds() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &params(0.5));
    let out = tmp.path().join("out");
    let o = retire("solve", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0));
    let m = json(out.join("manifest.json"));
    assert_eq!(m["solution"]["regime"], "DelayForever");
    for key in ["z_bar", "w_bar", "j"] {
        assert!(m["solution"][key].is_null(), "{key}");
    }
    let csv = fs::read_to_string(out.join("policy.csv")).unwrap();
    assert!(csv.lines().skip(2).all(|l| l.ends_with("PreRetirement,false")));
}

#[test]
fn missing_sigma_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &params(1.2).replace(r#""sigma":0.2,"#, ""));
    let o = retire("solve", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sigma"));
}

#[test]
fn invalid_parameters_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &params(1.2).replace(r#""gamma":2"#, r#""gamma":1"#));
    let o = retire("solve", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("gamma"));
    let o = run(&["solve", "--config", "/nonexistent/config.json"], &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn tie_delta_flag_resets_delta() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &params(1.2).replace(r#""delta":0.03"#, r#""delta":0.07"#));
    let out = tmp.path().join("out");
    assert_eq!(retire("solve", &cfg, &out, &[]).status.code(), Some(0));
    assert_eq!(json(out.join("manifest.json"))["params"]["delta_equals_k"], false);
    assert_eq!(retire("solve", &cfg, &out, &["--tie-delta-to-k", "--grid", "5"]).status.code(), Some(0));
    let m = json(out.join("manifest.json"));
    assert_eq!(m["params"]["delta"].as_f64(), Some(0.03));
    assert_eq!(m["params"]["delta_tied_to_k"], true);
    let csv = fs::read_to_string(out.join("policy.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2 + 10);
}

fn sweep_lines(out: &Path) -> Vec<String> {
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert!(csv.starts_with("# config_hash="));
    csv.lines().skip(1).map(str::to_string).collect()
}

#[test]
fn sweep_regime_flips_at_income_gap() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        &format!(r#"{},"sweep":[{{"param":"L","start":0.9,"stop":1.5,"step":0.1}}]"#, params(1.2)),
    );
    let out = tmp.path().join("out");
    assert_eq!(retire("sweep", &cfg, &out, &[]).status.code(), Some(0));
    let lines = sweep_lines(&out);
    assert_eq!(lines[0], "L,regime,z_bar,w_bar,j,error");
    let regimes: Vec<&str> = lines[1..].iter().map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(
        regimes,
        [
            "DelayForever",
            "KnifeEdge",
            "RetirementFeasible",
            "RetirementFeasible",
            "RetirementFeasible",
            "RetirementFeasible",
            "RetirementFeasible"
        ]
    );
    assert!(lines[2].starts_with("1,") && lines[3].starts_with("1.1,"));
}

#[test]
fn two_parameter_sweep_and_failed_points() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        &format!(
            r#"{},"sweep":[{{"param":"gamma","start":0.5,"stop":1.5,"step":0.5}},{{"param":"L","start":1.1,"stop":1.3,"step":0.1}}]"#,
            params(1.2)
        ),
    );
    let out = tmp.path().join("out");
    assert_eq!(retire("sweep", &cfg, &out, &[]).status.code(), Some(0));
    let lines = sweep_lines(&out);
    assert_eq!(lines.len(), 1 + 9);
    let keys: Vec<String> = lines[1..].iter().map(|l| l.split(',').take(2).collect::<Vec<_>>().join(",")).collect();
    assert_eq!(keys, ["0.5,1.1", "0.5,1.2", "0.5,1.3", "1,1.1", "1,1.2", "1,1.3", "1.5,1.1", "1.5,1.2", "1.5,1.3"]);
    // gamma = 1 is rejected per point; the run carries on.
    for l in &lines[4..7] {
        assert!(l.contains(",,,,") && l.contains("gamma"), "{l}");
    }
    assert!(lines[1].ends_with(','));
}

#[test]
fn empty_sweep_range_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        &format!(r#"{},"sweep":[{{"param":"L","start":1.5,"stop":0.9,"step":0.1}}]"#, params(1.2)),
    );
    let o = retire("sweep", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("empty range"));
}

fn sim_config(dir: &Path, level: f64, sim: &str) -> PathBuf {
    write_config(dir, &format!(r#"{},"simulation":{{{sim}}}"#, params(level)))
}

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn simulate_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = sim_config(
        tmp.path(),
        1.2,
        r#""n_paths":50,"horizon_years":10,"dt":0.08333333333333333,"master_seed":3,"w0":60,"overlay_disaster":true"#,
    );
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let c = tmp.path().join("c");
    assert_eq!(retire("simulate", &cfg, &a, &[]).status.code(), Some(0));
    let args = ["simulate", "--config", cfg.to_str().unwrap(), "--out", b.to_str().unwrap()];
    assert_eq!(run(&args, &[("SOLVER_THREADS", "3")]).status.code(), Some(0));
    let files = read_all(&a);
    assert_eq!(files.len(), 3);
    assert_eq!(files, read_all(&b));
    assert_eq!(retire("simulate", &cfg, &c, &["--seed", "4"]).status.code(), Some(0));
    assert_ne!(fs::read(a.join("paths.csv")).unwrap(), fs::read(c.join("paths.csv")).unwrap());

    let summary = json(a.join("summary.json"));
    for key in ["estimate", "std_error", "target", "tail_bound", "pass"] {
        assert!(!summary["budget"][key].is_null(), "{key}");
    }
    let paths = fs::read_to_string(a.join("paths.csv")).unwrap();
    assert!(paths.starts_with("# config_hash="));
    assert_eq!(paths.lines().count(), 2 + 50 * 121);
}

#[test]
fn simulate_rejects_bad_configs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = sim_config(tmp.path(), 1.2, r#""n_paths":0,"horizon_years":1,"z0":0.1"#);
    assert_eq!(retire("simulate", &cfg, &tmp.path().join("out"), &[]).status.code(), Some(2));
    let cfg = write_config(tmp.path(), &params(1.2));
    assert_eq!(retire("simulate", &cfg, &tmp.path().join("out"), &[]).status.code(), Some(2));
    let args = ["simulate", "--config", cfg.to_str().unwrap()];
    assert_eq!(run(&args, &[("SOLVER_THREADS", "zero")]).status.code(), Some(2));
}

#[test]
fn start_in_stopping_region_retires_at_once() {
    let tmp = tempfile::tempdir().unwrap();
    let z0 = 0.0213844289951 / 2.0;
    let cfg = sim_config(tmp.path(), 1.2, &format!(r#""n_paths":20,"horizon_years":1,"dt":0.1,"z0":{z0}"#));
    let out = tmp.path().join("out");
    assert_eq!(retire("simulate", &cfg, &out, &[]).status.code(), Some(0));
    let paths = fs::read_to_string(out.join("paths.csv")).unwrap();
    let first: Vec<&str> = paths.lines().skip(2).filter(|l| l.split(',').nth(1) == Some("0")).collect();
    assert_eq!(first.len(), 20);
    assert!(first.iter().all(|l| l.ends_with(",VoluntarilyRetired")));
    let summary = json(out.join("summary.json"));
    assert_eq!(summary["paths"]["voluntarily_retired"].as_f64(), Some(1.0));
    assert_eq!(summary["budget"]["form"], "post-retirement");
}

fn quick_verify(level: f64) -> String {
    format!(r#"{},"verify":{{"mc_paths":2000,"post_horizon_years":200,"post_dt":0.5,"pre_dt":0.02}}"#, params(level))
}

#[test]
fn verify_flags_perturbed_coefficient() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &quick_verify(1.2));
    let out = tmp.path().join("out");
    let o = retire("verify", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(json(out.join("verify.json"))["passed"], true);

    let o = retire("verify", &cfg, &out, &["--perturb-a", "1.01"]);
    assert_eq!(o.status.code(), Some(1));
    let report = json(out.join("verify.json"));
    let ode = report["checks"].as_array().unwrap().iter().find(|c| c["name"] == "ode_residual").unwrap();
    assert_eq!(ode["status"], "fail");
}

#[test]
fn verify_skips_boundary_checks_without_threshold() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &quick_verify(0.5));
    let out = tmp.path().join("out");
    assert_eq!(retire("verify", &cfg, &out, &[]).status.code(), Some(0));
    let report = json(out.join("verify.json"));
    let status = |name: &str| {
        report["checks"].as_array().unwrap().iter().find(|c| c["name"] == name).unwrap()["status"].clone()
    };
    for name in ["free_boundary", "boundary_smooth_fit", "phase_consistency"] {
        assert_eq!(status(name), "skipped", "{name}");
    }
    assert_eq!(status("ode_residual"), "pass");
}

#[test]
fn outputs_embed_config_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &params(1.2));
    let out = tmp.path().join("out");
    assert_eq!(retire("solve", &cfg, &out, &[]).status.code(), Some(0));
    let hash = json(out.join("manifest.json"))["config_hash"].as_str().unwrap().to_string();
    assert_eq!(hash.len(), 64);
    let csv = fs::read_to_string(out.join("policy.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), format!("# config_hash={hash}"));
    assert_eq!(retire("solve", &cfg, &out, &["--grid", "7"]).status.code(), Some(0));
    assert_ne!(json(out.join("manifest.json"))["config_hash"].as_str().unwrap(), hash);
}
