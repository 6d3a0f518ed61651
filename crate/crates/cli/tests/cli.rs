use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_sgd-clt"));
    c.env_remove("SGD_CLT_THREADS");
    c
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn stdout_json(o: &Output) -> Value {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

fn quadratic(method: &str, extra: &str) -> String {
    format!(
        r#"
name = "q"
replicas = 64
n_steps = 3000
checkpoint_every = 500
master_seed = 11
[problem]
kind = "quadratic"
diag = [1.0, 1.0]
[noise]
kind = "gaussian"
diag = [1.0, 1.0]
[method]
{method}
[schedule]
kind = "power_law"
k = 0.1
a = 0.5
{extra}
"#
    )
}

fn w_star(v: &Value) -> Vec<Vec<f64>> {
    serde_json::from_value(v["w_star"].clone()).unwrap()
}

#[test]
fn wstar_vsgd_identity() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", &quadratic("kind = \"vsgd\"", ""));
    let v = stdout_json(&bin().args(["wstar"]).arg(&cfg).output().unwrap());
    assert_eq!(w_star(&v), vec![vec![0.5, 0.0], vec![0.0, 0.5]]);
    assert_eq!(v["d0_admissible"], true);
}

#[test]
fn wstar_msgd_identity() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", &quadratic("kind = \"msgd\"\nmu_tilde = 0.2", ""));
    let v = stdout_json(&bin().arg("wstar").arg(&cfg).output().unwrap());
    let w = w_star(&v);
    for (i, row) in w.iter().enumerate() {
        for (j, x) in row.iter().enumerate() {
            let want = if i == j { 2.5 } else { 0.0 };
            assert!((x - want).abs() < 1e-12, "{w:?}");
        }
    }
    assert!(v["lambda_d"].as_f64().unwrap() > 0.0);
}

#[test]
fn wstar_vanishing_noncommuting_is_numeric_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = quadratic("kind = \"msgd_vanishing\"", "[damping]\nkind = \"power_law\"\nk_mu = 1.0\nb = 0.15")
        .replace("diag = [1.0, 1.0]\n[noise]", "diag = [1.0, 2.0]\n[noise]")
        .replace("kind = \"gaussian\"\ndiag = [1.0, 1.0]", "kind = \"gaussian\"\nsigma = [[1.0, 0.5], [0.5, 1.0]]");
    let cfg = write(dir.path(), "c.toml", &text);
    let o = bin().arg("wstar").arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"], "numeric");
}

#[test]
fn certify_examples() {
    let dir = tempfile::tempdir().unwrap();
    let harmonic = write(dir.path(), "h.toml", &quadratic("kind = \"vsgd\"", "").replace("a = 0.5", "a = 1.0"));
    let v = stdout_json(&bin().arg("certify").arg(&harmonic).output().unwrap());
    assert!((v["certificate"]["d0_estimate"].as_f64().unwrap() - 10.0).abs() < 1e-3);

    let sqrt = write(dir.path(), "s.toml", &quadratic("kind = \"vsgd\"", ""));
    let v = stdout_json(&bin().arg("certify").arg(&sqrt).output().unwrap());
    assert_eq!(v["all_passed"], true);

    let geo = quadratic("kind = \"vsgd\"", "").replace("kind = \"power_law\"\nk = 0.1\na = 0.5", "kind = \"geometric\"\nk = 0.5\nr = 0.9");
    let geo = write(dir.path(), "g.toml", &geo);
    let v = stdout_json(&bin().args(["certify", "--horizon", "10000"]).arg(&geo).output().unwrap());
    assert_eq!(v["certificate"]["divergence_ok"], false);
}

#[test]
fn malformed_schedule_and_unknown_keys_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "b.toml", &quadratic("kind = \"vsgd\"", "").replace("a = 0.5", "a = 1.5"));
    assert_eq!(bin().arg("certify").arg(&bad).output().unwrap().status.code(), Some(2));
    let unknown = write(dir.path(), "u.toml", &quadratic("kind = \"vsgd\"", "mystery = 3"));
    let o = bin().arg("run").arg(&unknown).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("mystery"));
}

#[test]
fn missing_dataset_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"
name = "l"
[problem]
kind = "logistic"
dataset = "nope.csv"
[method]
kind = "vsgd"
[schedule]
kind = "power_law"
k = 0.1
a = 0.5
"#;
    let cfg = write(dir.path(), "c.toml", text);
    assert_eq!(bin().arg("wstar").arg(&cfg).output().unwrap().status.code(), Some(2));
}

#[test]
fn time_average_wrong_regime_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let text = quadratic("kind = \"vsgd\"", "[outputs.time_average]\ncheckpoints = [100]").replace("a = 0.5", "a = 0.75");
    let cfg = write(dir.path(), "c.toml", &text);
    let o = bin().arg("run").arg(&cfg).arg("--out").arg(dir.path().join("o")).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("1/2"));
}

#[test]
fn check_mode_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", &quadratic("kind = \"vsgd\"", "[check]\nmax_final_rel_err = 1e-9"));
    let out = dir.path().join("o");
    let o = bin().arg("run").arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert!(o.status.success());
    let o = bin().arg("run").arg(&cfg).arg("--check").arg("--out").arg(&out).output().unwrap();
    assert_eq!(o.status.code(), Some(4));
}

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn outputs_are_byte_identical_across_thread_counts_and_listed_in_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let extra = "[outputs]\nnormality = true\nlp_diagnostic = true\nhistogram_bins = 12\n[outputs.table1]\nreplicas = [32, 64]";
    let cfg = write(dir.path(), "c.toml", &quadratic("kind = \"nasgd\"\nmu_tilde = 0.3", extra));
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let o = bin().args(["--threads", "1", "run"]).arg(&cfg).arg("--out").arg(&a).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = bin().env("SGD_CLT_THREADS", "3").arg("run").arg(&cfg).arg("--out").arg(&b).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (fa, fb) = (read_all(&a), read_all(&b));
    assert_eq!(fa, fb);

    let names: Vec<&str> = fa.iter().map(|f| f.0.as_str()).collect();
    for want in ["trace.csv", "final.json", "normality.json", "histogram.csv", "lp_bound.json", "table1.csv", "manifest.json"] {
        assert!(names.contains(&want), "{names:?}");
    }
    let manifest: Value = serde_json::from_slice(&std::fs::read(a.join("manifest.json")).unwrap()).unwrap();
    let listed = manifest["files"].as_object().unwrap();
    assert_eq!(listed.len(), fa.len() - 1);
    for (name, bytes) in &fa {
        if name != "manifest.json" {
            assert_eq!(listed[name], hex::encode(Sha256::digest(bytes)), "{name}");
        }
    }
    assert_eq!(manifest["config_sha256"], hex::encode(Sha256::digest(std::fs::read(&cfg).unwrap())));

    let trace = String::from_utf8(std::fs::read(a.join("trace.csv")).unwrap()).unwrap();
    let mut lines = trace.lines();
    assert_eq!(lines.next(), Some("k,scale_k,rel_err,frob_Vk,mean_norm"));
    assert_eq!(lines.count(), 6);
    let hist = String::from_utf8(std::fs::read(a.join("histogram.csv")).unwrap()).unwrap();
    assert_eq!(hist.lines().count(), 13);
}

#[test]
fn logistic_dataset_from_csv() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("w_1,w_2,y\n");
    for i in 0..40 {
        let t = i as f64 / 10.0 - 2.0;
        csv.push_str(&format!("{t},{},{}\n", (i % 7) as f64 / 3.0 - 1.0, (i % 3 == 0) as u8));
    }
    write(dir.path(), "data.csv", &csv);
    let text = r#"
name = "l"
[problem]
kind = "logistic"
dataset = "data.csv"
beta = 0.1
[method]
kind = "vsgd"
[schedule]
kind = "power_law"
k = 0.1
a = 0.5
"#;
    let cfg = write(dir.path(), "c.toml", text);
    let v = stdout_json(&bin().arg("wstar").arg(&cfg).output().unwrap());
    assert_eq!(w_star(&v).len(), 2);
}
