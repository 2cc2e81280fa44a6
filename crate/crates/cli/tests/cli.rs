use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn doeblin(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_doeblin"));
    cmd.args(args).env_remove("DOEBLIN_SEED");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn run(command: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![command, "--config", config.to_str().unwrap(), "--out-dir", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    doeblin(&args, &[])
}

fn manifest(out: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
}

fn write_config(dir: &TempDir, text: &str) -> PathBuf {
    let p = dir.path().join("run.toml");
    std::fs::write(&p, text).unwrap();
    p
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

#[test]
fn uniform_coupling_always_succeeds() {
    let tmp = TempDir::new().unwrap();
    let out = run("couple", &configs().join("couple_uniform.toml"), tmp.path(), &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&tmp.path().join("levels.csv"));
    assert!(!rows.is_empty());
    for r in rows {
        assert_eq!(r[5], "1");
    }
    let m = manifest(tmp.path());
    assert_eq!(m["status"], "ok");
    assert_eq!(m["seed"], 1);
    assert_eq!(m["seed_source"], "config");
    assert_eq!(m["config"]["g"]["kind"], "uniform");
    assert!(tmp.path().join("trace.jsonl").exists());
}

#[test]
fn coupling_traces_are_reproducible_across_workers() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let cfg = configs().join("couple_envelope.toml");
    assert!(run("couple", &cfg, a.path(), &["--workers", "1"]).status.success());
    assert!(run("couple", &cfg, b.path(), &["--workers", "4"]).status.success());
    for i in 0..8 {
        let name = format!("trace-{i:03}.jsonl");
        let (x, y) = (std::fs::read(a.path().join(&name)).unwrap(), std::fs::read(b.path().join(&name)).unwrap());
        assert!(!x.is_empty());
        assert_eq!(x, y, "{name}");
    }
    assert_eq!(std::fs::read(a.path().join("levels.csv")).unwrap(), std::fs::read(b.path().join("levels.csv")).unwrap());
    let m = manifest(a.path());
    assert_eq!(m["summary"]["K"], 3);
    assert_eq!(m["summary"]["levels_below_bound_3sigma"], Value::Array(vec![]));
}

#[test]
fn ychain_level_law_and_verdicts() {
    let tmp = TempDir::new().unwrap();
    assert!(run("ychain", &configs().join("ychain_critical.toml"), tmp.path(), &[]).status.success());
    for r in csv_rows(&tmp.path().join("renewals.csv")) {
        let (m, l): (u64, u32) = (r[2].parse().unwrap(), r[3].parse().unwrap());
        assert_eq!(m, 2u64.pow(l));
    }
    let n = 100_000.0;
    for r in csv_rows(&tmp.path().join("levels.csv")).iter().take(11) {
        let (l, f): (i32, f64) = (r[0].parse().unwrap(), r[1].parse().unwrap());
        let p = 0.5f64.powi(l + 1);
        assert!((f - p).abs() <= 3.0 * (p * (1.0 - p) / n).sqrt() + 1e-12, "level {l}: {f} vs {p}");
    }
    assert_eq!(manifest(tmp.path())["summary"]["kesten"]["verdict"], "diverging");
    let light = TempDir::new().unwrap();
    assert!(run("ychain", &configs().join("ychain_light.toml"), light.path(), &[]).status.success());
    assert_eq!(manifest(light.path())["summary"]["kesten"]["verdict"], "finite");
}

#[test]
fn invalid_success_probability_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, "seed = 1\n[ychain]\nk = 2\np = [0.7]\nexcursions = 10\n");
    let out = run("ychain", &cfg, &tmp.path().join("out"), &[]);
    assert_eq!(out.status.code(), Some(2));
    let m = manifest(&tmp.path().join("out"));
    assert_eq!(m["status"], "failed");
    assert_eq!(m["failure_stage"], "build");
}

#[test]
fn mixing_witness_and_controls() {
    let tmp = TempDir::new().unwrap();
    assert!(run("mixing", &configs().join("mixing_phase.toml"), tmp.path(), &["--workers", "4"]).status.success());
    let s = &manifest(tmp.path())["summary"];
    let tail = s["cesaro_tail"].as_f64().unwrap();
    assert!((0.2..=0.3).contains(&tail), "{tail}");
    assert!((s["even_lag_mean"].as_f64().unwrap() - 0.5).abs() <= 0.1);
    assert!(s["odd_lag_mean"].as_f64().unwrap() <= 0.1);

    let control = TempDir::new().unwrap();
    assert!(run("mixing", &configs().join("mixing_two_state.toml"), control.path(), &[]).status.success());
    assert!(manifest(control.path())["summary"]["cesaro_tail"].as_f64().unwrap() <= 0.01);

    let uniform = TempDir::new().unwrap();
    let cfg = write_config(
        &uniform,
        "seed = 2\n[g]\nkind = \"uniform\"\nalphabet = \"0123\"\n[mixing]\nmethod = \"simulated\"\na = { kind = \"spin_up\" }\nn_max = 64\nlength = 20000\n",
    );
    let out_dir = uniform.path().join("out");
    assert!(run("mixing", &cfg, &out_dir, &[]).status.success());
    assert!(manifest(&out_dir)["summary"]["cesaro_tail"].as_f64().unwrap() <= 0.01);
    let header = std::fs::read_to_string(out_dir.join("correlation.csv")).unwrap();
    assert!(header.starts_with("lag,estimate,stderr,cesaro_term\n"));
}

#[test]
fn exact_mixing_refuses_non_local_g() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        &tmp,
        "seed = 1\n[g]\nkind = \"envelope\"\nc = 1.0\nhorizon = 6\n[mixing]\nmethod = \"exact\"\na = { kind = \"spin_up\" }\nn_max = 4\n",
    );
    let out = run("mixing", &cfg, tmp.path(), &[]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(manifest(tmp.path())["failure_stage"], "run");
}

#[test]
fn budget_refusal_exits_three() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        &tmp,
        "seed = 1\n[g]\nkind = \"envelope\"\nc = 1.0\nhorizon = 6\n[budget]\nprefix = 4\n[tvprofile]\npairs = [[\"-|c-\", \"+|c+\"]]\nb_max = 5\n",
    );
    assert_eq!(run("tvprofile", &cfg, tmp.path(), &[]).status.code(), Some(3));
}

#[test]
fn small_exact_commands() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("var");
    assert!(run("varprofile", &configs().join("varprofile_two_state.toml"), &out, &[]).status.success());
    let rows = csv_rows(&out.join("varprofile.csv"));
    let a0: f64 = rows[0][3].parse().unwrap();
    assert!((a0 - (0.7f64 / 0.4).ln()).abs() < 1e-12);
    assert!((rows[0][1].parse::<f64>().unwrap() - 2f64.ln()).abs() < 1e-12);
    assert!(rows[1..].iter().all(|r| r[1] == "0"));

    let out = tmp.path().join("stat");
    assert!(run("stationary", &configs().join("stationary_two_state.toml"), &out, &[]).status.success());
    let rows = csv_rows(&out.join("stationary.csv"));
    assert!((rows[0][1].parse::<f64>().unwrap() - 4.0 / 7.0).abs() < 1e-10);
    assert!((rows[1][1].parse::<f64>().unwrap() - 3.0 / 7.0).abs() < 1e-10);

    let out = tmp.path().join("sym");
    assert!(run("symmetry", &configs().join("symmetry_bhs.toml"), &out, &[]).status.success());
    for r in csv_rows(&out.join("symmetry.csv")) {
        assert_eq!(r[1], "0", "{r:?}");
    }

    let out = tmp.path().join("tv");
    assert!(run("tvprofile", &configs().join("tvprofile_envelope.toml"), &out, &[]).status.success());
    for r in csv_rows(&out.join("tvprofile.csv")) {
        let v: Vec<f64> = r[3..9].iter().map(|x| x.parse().unwrap()).collect();
        let (one_minus, cs, half) = (v[2], v[3], v[4]);
        assert!(one_minus >= cs - 1e-12 && cs >= half - 1e-12, "{r:?}");
        assert!(one_minus >= r[8].parse::<f64>().unwrap() - 1e-10);
    }
}

#[test]
fn config_errors_exit_two_with_manifest() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, "seed = 1\nbogus = true\n[stationary]\n");
    let out = tmp.path().join("a");
    assert_eq!(run("stationary", &cfg, &out, &[]).status.code(), Some(2));
    let m = manifest(&out);
    assert_eq!(m["failure_stage"], "config");
    assert_eq!(m["exit_code"], 2);

    let cfg = write_config(&tmp, "[g]\nkind = \"two_state\"\n[stationary]\n");
    let out = tmp.path().join("b");
    assert_eq!(run("stationary", &cfg, &out, &[]).status.code(), Some(2));

    let cfg = write_config(&tmp, "experiment = \"couple\"\nseed = 1\n[g]\nkind = \"two_state\"\n[stationary]\n");
    assert_eq!(run("stationary", &cfg, &tmp.path().join("c"), &[]).status.code(), Some(2));
    assert_eq!(doeblin(&["couple"], &[]).status.code(), Some(2));
}

#[test]
fn seed_precedence() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(&tmp, "seed = 1\n[g]\nkind = \"two_state\"\n[stationary]\n");
    let c = cfg.to_str().unwrap();
    let out = tmp.path().join("env");
    let o = doeblin(&["stationary", "--config", c, "--out-dir", out.to_str().unwrap()], &[("DOEBLIN_SEED", "42")]);
    assert!(o.status.success());
    assert_eq!(manifest(&out)["seed"], 42);
    assert_eq!(manifest(&out)["seed_source"], "env");
    let out = tmp.path().join("flag");
    let o = doeblin(
        &["stationary", "--config", c, "--out-dir", out.to_str().unwrap(), "--seed", "5"],
        &[("DOEBLIN_SEED", "42")],
    );
    assert!(o.status.success());
    assert_eq!(manifest(&out)["seed"], 5);
    assert_eq!(manifest(&out)["seed_source"], "flag");
}
