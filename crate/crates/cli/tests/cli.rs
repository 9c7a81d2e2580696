use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ifenn::config::RunConfig;
use ifenn::fem::read_nodal_csv;
use ifenn::ifenn::{RunManifest, TrainedModel};
use serde_json::{json, Value};

fn ifenn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ifenn"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, name: &str, cfg: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    p
}

fn bar_bcs() -> Value {
    json!({
        "left": {"theta": 10, "displacement": [0, null]},
        "right": {"theta": 50, "displacement": [0, null]}
    })
}

fn fem_config(n_elements: usize) -> Value {
    json!({
        "mode": "fem",
        "problem": {"geometry": "bar_1d", "n_elements": n_elements},
        "bcs": bar_bcs(),
        "time": {"t_first": 0.965, "t_final": 990, "n_increments": 50}
    })
}

fn tiny_training() -> Value {
    json!({
        "network": {
            "architecture": {"kind": "tcn", "n_filters": 2, "kernel_size": 2, "dilations": [1, 2]},
            "rff": {"n_frequencies": 2, "sigma": 0.1, "seed": 4}
        },
        "optimizer": {"max_iterations": 4},
        "ansatz": {"lift": {"kind": "bar", "theta_left": 10, "theta_right": 50, "length": 1}, "output_scale": 10},
        "seed": 1
    })
}

fn tiny(mode: &str) -> Value {
    json!({
        "mode": mode,
        "problem": {"geometry": "bar_1d", "n_elements": 12},
        "bcs": bar_bcs(),
        "time": {"t_first": 1, "t_final": 1000, "n_increments": 8},
        "training": tiny_training(),
        "landscape": {"n_per_axis": 3, "seed": 5}
    })
}

fn run_ok(args: &[&str]) -> Output {
    let out = ifenn(args);
    assert!(
        out.status.success(),
        "ifenn {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn error_kind(out: &Output) -> String {
    assert!(!out.status.success());
    let line = String::from_utf8_lossy(&out.stderr)
        .lines()
        .last()
        .unwrap()
        .to_string();
    let v: Value = serde_json::from_str(&line).unwrap();
    v["error"]["kind"].as_str().unwrap().to_string()
}

fn manifest(dir: &Path) -> RunManifest {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn entry(m: &RunManifest, key: &str) -> f64 {
    m.errors.iter().find(|(k, _)| k == key).unwrap().1
}

#[test]
fn fem_writes_fields_with_configured_time_range() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "fem.json", &fem_config(20));
    let out = tmp.path().join("run");
    run_ok(&["fem", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    for f in ["theta.csv", "u_x.csv", "tr_eps_dot.csv", "timing.csv", "mesh.txt", "config.resolved.json", "manifest.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let theta = read_nodal_csv(&out.join("theta.csv")).unwrap();
    assert_eq!(theta.times.len(), 50);
    assert!((theta.times[0] - 0.965).abs() < 1e-12);
    assert!((theta.times[49] - 990.0).abs() < 1e-9);
    assert_eq!(theta.values[0].len(), 21);

    let resolved = RunConfig::load(&out.join("config.resolved.json")).unwrap();
    assert_eq!(resolved.output_dir.as_deref(), Some(out.as_path()));
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "fem.json", &fem_config(10));
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_ok(&["fem", "--config", cfg.to_str().unwrap(), "--out", a.to_str().unwrap()]);
    let resolved = a.join("config.resolved.json");
    run_ok(&["fem", "--config", resolved.to_str().unwrap(), "--out", b.to_str().unwrap()]);
    for f in ["theta.csv", "u_x.csv", "tr_eps_dot.csv", "mesh.txt"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn plate_fem_writes_both_displacement_components() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = json!({
        "mode": "fem",
        "problem": {"geometry": "plate_2d", "nx": 4, "ny": 4},
        "bcs": {
            "bottom": {"theta": 10},
            "top": {"theta": 50},
            "left": {"displacement": [0, 0], "flux": 0},
            "right": {"flux": 0}
        },
        "time": {"t_first": 1, "t_final": 100, "n_increments": 3}
    });
    let cfg = write_config(tmp.path(), "plate.json", &cfg);
    let out = tmp.path().join("run");
    run_ok(&["fem", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let uy = std::fs::read_to_string(out.join("u_y.csv")).unwrap();
    assert!(uy.starts_with("step,time,node_id,x,y,value\n"));
    assert_eq!(read_nodal_csv(&out.join("u_y.csv")).unwrap().values[2].len(), 25);
}

#[test]
fn negative_conductivity_fails_before_solving() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = fem_config(10);
    cfg["material"] = json!({"lambda": 40e9, "mu": 27e9, "rho": 2700, "alpha": 2.31e-5,
                             "c_eps": 910, "k": -237, "t_ref": 293});
    let cfg = write_config(tmp.path(), "bad.json", &cfg);
    let out = tmp.path().join("run");
    let o = ifenn(&["fem", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(error_kind(&o), "config");
    assert!(!out.join("theta.csv").exists());
}

#[test]
fn unknown_key_and_wrong_mode_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = fem_config(10);
    cfg["colour"] = json!("blue");
    let bad = write_config(tmp.path(), "bad.json", &cfg);
    assert_eq!(error_kind(&ifenn(&["fem", "--config", bad.to_str().unwrap()])), "config");

    let good = write_config(tmp.path(), "fem.json", &fem_config(10));
    let o = ifenn(&["train", "--config", good.to_str().unwrap(), "--out", tmp.path().join("x").to_str().unwrap()]);
    assert_eq!(error_kind(&o), "config");
}

#[test]
fn missing_config_file_is_an_io_error() {
    assert_eq!(error_kind(&ifenn(&["fem", "--config", "/nonexistent/cfg.json"])), "io");
}

#[test]
fn invalid_thread_count_rejected() {
    let o = Command::new(env!("CARGO_BIN_EXE_ifenn"))
        .args(["fem", "--config", "/nonexistent/cfg.json"])
        .env("IFENN_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(error_kind(&o), "config");
}

#[test]
fn compare_against_itself_is_zero_and_mismatch_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let ca = write_config(tmp.path(), "a.json", &fem_config(10));
    let cb = write_config(tmp.path(), "b.json", &fem_config(12));
    run_ok(&["fem", "--config", ca.to_str().unwrap(), "--out", a.to_str().unwrap()]);
    run_ok(&["fem", "--config", cb.to_str().unwrap(), "--out", b.to_str().unwrap()]);

    let rep = tmp.path().join("rep");
    run_ok(&["compare", a.to_str().unwrap(), a.to_str().unwrap(), "--out", rep.to_str().unwrap()]);
    let m = manifest(&rep);
    for key in ["theta.max_abs", "theta.max_rel_percent", "u_x.max_abs", "theta.aggregate"] {
        assert_eq!(entry(&m, key), 0.0, "{key}");
    }
    let summary = std::fs::read_to_string(rep.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    assert!(rep.join("theta_errors.csv").exists());

    let o = ifenn(&["compare", a.to_str().unwrap(), b.to_str().unwrap(), "--out", rep.to_str().unwrap()]);
    assert_eq!(error_kind(&o), "shape_mismatch");
}

#[test]
fn compare_reports_known_difference() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    std::fs::create_dir_all(&a).unwrap();
    std::fs::create_dir_all(&b).unwrap();
    let header = "step,time,node_id,x,value\n";
    std::fs::write(a.join("theta.csv"), format!("{header}0,1e0,0,0e0,1.1e1\n0,1e0,1,1e0,2e1\n")).unwrap();
    std::fs::write(b.join("theta.csv"), format!("{header}0,1e0,0,0e0,1e1\n0,1e0,1,1e0,2e1\n")).unwrap();
    let rep = tmp.path().join("rep");
    run_ok(&["compare", a.to_str().unwrap(), b.to_str().unwrap(), "--out", rep.to_str().unwrap()]);
    let m = manifest(&rep);
    assert_eq!(entry(&m, "theta.max_abs"), 1.0);
    assert!((entry(&m, "theta.max_rel_percent") - 10.0).abs() < 1e-12);
    // per-step error (1/N)·‖d‖² = 0.5, aggregated over one increment
    assert_eq!(entry(&m, "theta.aggregate"), 0.25);
}

#[test]
fn train_then_landscape_and_ifenn_from_saved_model() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "train.json", &tiny("train"));
    let out = tmp.path().join("train");
    run_ok(&["train", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    for f in ["model.json", "loss_history.csv", "training_report.json", "checkpoint.json", "fem/theta.csv"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let model = TrainedModel::load(&out.join("model.json")).unwrap();
    assert_eq!(model.training, serde_json::from_value(tiny_training()).unwrap());
    let notes = manifest(&out).notes.join("\n");
    assert!(notes.contains("deviates from the reference configuration"), "{notes}");
    let history = std::fs::read_to_string(out.join("loss_history.csv")).unwrap();
    assert!(history.starts_with("iter,L2_E,L2_T,L2_q,total,grad_norm\n"));

    let mut ls = tiny("landscape");
    ls["deploy"] = json!({"model": out.join("model.json")});
    let ls_cfg = write_config(tmp.path(), "landscape.json", &ls);
    let ls_out = tmp.path().join("landscape");
    run_ok(&["landscape", "--config", ls_cfg.to_str().unwrap(), "--out", ls_out.to_str().unwrap()]);
    let m = manifest(&ls_out);
    assert_eq!(entry(&m, "center_loss"), model.final_loss.total);
    assert_eq!(entry(&m, "final_training_loss"), model.final_loss.total);
    assert!(m.notes.iter().any(|n| n.starts_with("phi_sha256 ")));
    let csv = std::fs::read_to_string(ls_out.join("landscape.csv")).unwrap();
    assert_eq!(csv.lines().count(), 10);
    assert!(csv.starts_with("eps1,eps2,loss\n"));

    for source in ["replay", "lagged"] {
        let mut run = tiny("ifenn");
        run["deploy"] = json!({"model": out.join("model.json"), "strain_rate_source": source});
        let run_cfg = write_config(tmp.path(), &format!("{source}.json"), &run);
        let run_out = tmp.path().join(source);
        run_ok(&["ifenn", "--config", run_cfg.to_str().unwrap(), "--out", run_out.to_str().unwrap()]);
        assert_eq!(manifest(&run_out).strain_rate_source.as_deref(), Some(source));
        for f in ["fem/theta.csv", "ifenn/theta.csv", "ifenn/u_x.csv", "errors.csv", "timing_summary.csv"] {
            assert!(run_out.join(f).exists(), "{f} missing");
        }
    }
}

#[test]
fn oracle_ifenn_reproduces_coupled_displacements() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = tiny("ifenn");
    cfg.as_object_mut().unwrap().remove("training");
    cfg["deploy"] = json!({"oracle": true});
    let cfg = write_config(tmp.path(), "oracle.json", &cfg);
    let out = tmp.path().join("run");
    run_ok(&["ifenn", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let m = manifest(&out);
    assert_eq!(m.strain_rate_source.as_deref(), Some("oracle"));
    assert_eq!(entry(&m, "theta.max_abs"), 0.0);
    let scale = read_nodal_csv(&out.join("fem/u_x.csv"))
        .unwrap()
        .values
        .iter()
        .flatten()
        .fold(0.0f64, |a, v| a.max(v.abs()));
    assert!(entry(&m, "u_x.max_abs") <= 1e-10 * scale);
}

#[test]
fn seed_flag_overrides_every_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "train.json", &tiny("train"));
    let out = tmp.path().join("run");
    run_ok(&["train", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "77"]);
    let m = manifest(&out);
    assert!(m.seeds.iter().all(|(_, s)| *s == 77), "{:?}", m.seeds);
    let model = TrainedModel::load(&out.join("model.json")).unwrap();
    assert_eq!(model.training.seed, 77);
}

#[test]
fn shipped_presets_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for e in std::fs::read_dir(&dir).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "json") && p.file_name().unwrap() != "schema.json" {
            RunConfig::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            n += 1;
        }
    }
    assert!(n >= 6);
}
