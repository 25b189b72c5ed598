use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dielectric"))
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// The small cosine3d configuration with edits applied to its JSON.
fn variant(dir: &Path, name: &str, edit: impl FnOnce(&mut Value)) -> PathBuf {
    let mut cfg = read_json(&data("small.json"));
    edit(&mut cfg);
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

fn empty_lattice(cfg: &mut Value) {
    cfg["potential"] = serde_json::json!({"preset": {"name": "empty", "amplitude": 0.0}});
}

fn c(v: &Value) -> (f64, f64) {
    (v[0].as_f64().unwrap(), v[1].as_f64().unwrap())
}

#[test]
fn malformed_and_missing_configs_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"lattice\": [").unwrap();
    let o = run(&["bands", "--config", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("JSON"));

    let empty = dir.path().join("empty.json");
    std::fs::write(&empty, "").unwrap();
    assert_eq!(code(&run(&["verify", "--config", empty.to_str().unwrap()])), 2);
    assert_eq!(code(&run(&["verify"])), 2);
    assert_eq!(code(&run(&["epsilon", "--config", dir.path().join("nope.json").to_str().unwrap()])), 2);
    assert_eq!(code(&run(&["frobnicate"])), 2);

    let unknown = variant(dir.path(), "unknown.json", |c| c["ecutt"] = 3.into());
    assert_eq!(code(&run(&["bands", "--config", unknown.to_str().unwrap()])), 2);
    let dangling = variant(dir.path(), "dangling.json", |c| c["maxwell"]["sources"][0]["omega"] = 1.5.into());
    let o = run(&["maxwell", "--config", dangling.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("not among the sampled frequencies"));
}

#[test]
fn bands_match_oracle_golden() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["bands", "--config", data("small.json").to_str().unwrap(), "--output", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = read_json(&dir.path().join("bands.json"));
    let golden = read_json(&data("golden_bands.json"));
    let bands = out["data"]["bands"].as_array().unwrap();
    let golden = golden.as_array().unwrap();
    assert_eq!(bands.len(), golden.len());
    for (b, g) in bands.iter().zip(golden) {
        for key in ["k", "E"] {
            let (x, y) = (b[key].as_array().unwrap(), g[key].as_array().unwrap());
            assert_eq!(x.len(), y.len());
            for (p, q) in x.iter().zip(y) {
                assert!((p.as_f64().unwrap() - q.as_f64().unwrap()).abs() < 1e-8, "{key}: {p} vs {q}");
            }
        }
    }
    assert!(out["data"]["gap"]["gap"].as_f64().unwrap() > 0.0);
}

#[test]
fn maxwell_fields_match_oracle_golden() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["maxwell", "--config", data("small.json").to_str().unwrap(), "--output", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = read_json(&dir.path().join("fields.json"));
    let golden = read_json(&data("golden_fields.json"));
    let modes = out["data"].as_array().unwrap();
    assert_eq!(modes.len(), golden.as_array().unwrap().len());
    for (m, g) in modes.iter().zip(golden.as_array().unwrap()) {
        let close = |a: &Value, b: &Value| {
            let ((ar, ai), (br, bi)) = (c(a), c(b));
            assert!((ar - br).abs() < 1e-8 && (ai - bi).abs() < 1e-8, "{a} vs {b}");
        };
        close(&m["omega"], &g["omega"]);
        close(&m["U0"], &g["U0"]);
        for key in ["A0", "E", "B"] {
            for i in 0..3 {
                close(&m[key][i], &g[key][i]);
            }
        }
        let (ca, cb) = (m["condition"].as_f64().unwrap(), g["condition"].as_f64().unwrap());
        assert!((ca - cb).abs() < 1e-8 * cb);
        for r in ["gauss", "div_b", "faraday", "ampere"] {
            assert!(m["residuals"][r].as_f64().unwrap() < 1e-10, "{r}");
        }
    }
}

#[test]
fn single_plane_wave_gives_free_electron_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = variant(dir.path(), "free.json", |c| {
        empty_lattice(c);
        c["ecut"] = 10.0.into();
    });
    let o = run(&["bands", "--config", cfg.to_str().unwrap(), "--output", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = read_json(&dir.path().join("bands.json"));
    assert_eq!(out["data"]["basis_size"], 1);
    for b in out["data"]["bands"].as_array().unwrap() {
        let k: Vec<f64> = b["k"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
        let e = b["E"][0].as_f64().unwrap();
        assert!((e - 0.5 * k.iter().map(|x| x * x).sum::<f64>()).abs() < 1e-12);
    }
}

#[test]
fn empty_lattice_epsilon_is_identity_only_with_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = variant(dir.path(), "empty.json", |c| {
        empty_lattice(c);
        c["kgrid"]["dims"] = serde_json::json!([4, 4, 4]);
    });
    let o = run(&["epsilon", "--config", cfg.to_str().unwrap(), "--output", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));

    let o = run(&[
        "epsilon",
        "--config",
        cfg.to_str().unwrap(),
        "--output",
        dir.path().to_str().unwrap(),
        "--override-gap-check",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("epsilon.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(rows.len(), 2);
    for row in rows {
        let v: Vec<f64> = row.split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(v.len(), 20);
        for i in 0..3 {
            for j in 0..3 {
                let (re, im) = (v[2 + 2 * (3 * i + j)], v[3 + 2 * (3 * i + j)]);
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((re - target).abs() < 1e-10 && im.abs() < 1e-10);
            }
        }
    }
}

#[test]
fn unbroadened_frequency_on_a_transition_is_a_resonance() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["bands", "--config", data("small.json").to_str().unwrap(), "--output", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let bands = read_json(&dir.path().join("bands.json"));
    let e = &bands["data"]["bands"][0]["E"];
    let omega = e[3].as_f64().unwrap() - e[0].as_f64().unwrap();
    let cfg = variant(dir.path(), "res.json", |c| {
        c["frequencies"] = serde_json::json!({"list": {"values": [omega], "gamma": 0.05}});
        c.as_object_mut().unwrap().remove("maxwell");
    });
    let path = cfg.to_str().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(code(&run(&["epsilon", "--config", path, "--output", out])), 0);
    let o = run(&["epsilon", "--config", path, "--output", out, "--gamma", "0"]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(code(&run(&["epsilon", "--config", path, "--gamma", "-1"])), 2);
}

#[test]
fn source_on_the_light_cone_is_a_singular_mode() {
    let dir = tempfile::tempdir().unwrap();
    let tau = std::f64::consts::TAU;
    let cfg = variant(dir.path(), "cone.json", |c| {
        empty_lattice(c);
        c["frequencies"] = serde_json::json!({"list": {"values": [tau], "gamma": 0.0}});
        c["maxwell"] = serde_json::json!({"sources": [{"omega": tau, "q": [1, 0, 0], "a_ext": [[0, 0], [1, 0], [0, 0]]}]});
    });
    let o = run(&[
        "maxwell",
        "--config",
        cfg.to_str().unwrap(),
        "--output",
        dir.path().to_str().unwrap(),
        "--override-gap-check",
    ]);
    assert_eq!(code(&o), 5, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("dispersion surface"));
}

#[test]
fn epsilon_runs_are_byte_identical_and_carry_headers() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for (d, threads) in dirs.iter().zip(["1", "3"]) {
        let o = run(&[
            "epsilon",
            "--config",
            data("small.json").to_str().unwrap(),
            "--output",
            d.path().to_str().unwrap(),
            "--threads",
            threads,
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in ["epsilon.csv", "report.json"] {
        let a = std::fs::read(dirs[0].path().join(name)).unwrap();
        let b = std::fs::read(dirs[1].path().join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between runs");
    }
    let report = read_json(&dirs[0].path().join("report.json"));
    let h = &report["header"];
    assert_eq!(h["config_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(h["kgrid"], serde_json::json!([2, 2, 2]));
    assert_eq!(h["gamma"], 0.05);
    assert!(h["units"].as_str().unwrap().contains("hbar"));
    let freqs = report["data"]["frequencies"].as_array().unwrap();
    assert_eq!(freqs.len(), 2);
    for f in freqs {
        for (_, v) in f["relations"].as_object().unwrap() {
            assert!(v.as_f64().unwrap().is_finite());
        }
        assert!(f["condition"].as_f64().unwrap() >= 1.0);
    }
    assert!(report["data"]["gap"]["gap"].as_f64().unwrap() > 0.0);
    let csv = std::fs::read_to_string(dirs[0].path().join("epsilon.csv")).unwrap();
    assert!(csv.starts_with("# config_sha256: "));
    assert!(csv.contains(&format!("# config_sha256: {}", h["config_sha256"].as_str().unwrap())));
}

#[test]
fn gamma_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "epsilon",
        "--config",
        data("small.json").to_str().unwrap(),
        "--output",
        dir.path().to_str().unwrap(),
        "--gamma",
        "0.1",
    ]);
    assert_eq!(code(&o), 0);
    let report = read_json(&dir.path().join("report.json"));
    assert_eq!(report["header"]["gamma"], 0.1);
    assert_eq!(report["data"]["frequencies"][0]["gamma"], 0.1);
}

#[test]
fn kernels_command_writes_trace_and_cross_check() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = variant(dir.path(), "k.json", |c| {
        c["kernels"] = serde_json::json!({"ds": 0.02, "span": 60.0, "gamma": 0.2, "omegas": [1.0]});
    });
    let o = run(&["kernels", "--config", cfg.to_str().unwrap(), "--output", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("kernels.csv")).unwrap();
    let table: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(table[0], "s,f_x,f_y,f_z,g_x,g_y,g_z");
    assert_eq!(table.len(), 1 + 3001);
    let k = read_json(&dir.path().join("kernels.json"));
    let r = &k["data"]["residuals"][0];
    assert!(r["f"].as_f64().unwrap() < 1e-2 && r["g"].as_f64().unwrap() < 1e-2);

    let short = variant(dir.path(), "short.json", |c| {
        c["kernels"] = serde_json::json!({"ds": 0.02, "span": 10.0, "gamma": 0.2, "omegas": [1.0]});
    });
    assert_eq!(code(&run(&["kernels", "--config", short.to_str().unwrap(), "--output", dir.path().to_str().unwrap()])), 1);
}

#[test]
fn verify_flags_the_sign_mutation_on_the_kernel_check() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = variant(dir.path(), "mut.json", |c| {
        c["test_hooks"] = serde_json::json!({"flip_chi_second_term": true});
    });
    let o = run(&["verify", "--config", cfg.to_str().unwrap(), "--output", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let stdout = String::from_utf8_lossy(&o.stdout);
    let line = stdout.lines().find(|l| l.contains("kernel Fourier")).unwrap();
    assert!(line.starts_with("[FAIL]"), "{line}");
    let report = read_json(&dir.path().join("verify.json"));
    assert_eq!(report["data"].as_array().unwrap().len(), 12);
}
