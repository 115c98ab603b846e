use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const TINY: &str = r#"{
  "version": 1,
  "base_seed": 3,
  "data": {"generator": {
    "a": {"f1": 30, "f2": 20, "test_fraction": 0.3, "test_f1_share": 0.8},
    "b": {"f1": 15, "f2": 25, "test_fraction": 0.3, "test_f1_share": 0.3}}},
  "model": {"spec": {"input_side": 16, "stem_channels": 4, "blocks_per_stage": [1, 1]},
            "train": {"epochs": 2, "batch_size": 8, "learning_rate": 0.001}},
  "explain": {"samples_per_label": 1, "histogram_bins": 16}
}"#;

fn dcf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dcf"))
        .args(args)
        .env("DCF_THREADS", "2")
        .output()
        .expect("spawn dcf")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn setup(config: &str) -> (tempfile::TempDir, String) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, config).unwrap();
    (dir, cfg.to_string_lossy().into_owned())
}

fn only_run_dir(root: &Path) -> PathBuf {
    let mut dirs: Vec<_> = fs::read_dir(root.join("runs")).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(dirs.len(), 1);
    dirs.pop().unwrap()
}

fn read(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn unknown_config_key_exits_2() {
    let (_d, cfg) = setup(r#"{"version": 1, "model": {"spec": {"input_side": 16, "surprise": 1}}}"#);
    for cmd in ["gen-data", "psa", "tps"] {
        let o = dcf(&[cmd, "--config", &cfg]);
        assert_eq!(code(&o), 2, "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn wrong_version_and_missing_file_exit_2() {
    let (d, cfg) = setup(r#"{"version": 7}"#);
    assert_eq!(code(&dcf(&["psa", "--config", &cfg])), 2);
    let missing = d.path().join("absent.json");
    assert_eq!(code(&dcf(&["psa", "--config", missing.to_str().unwrap()])), 2);
}

#[test]
fn bad_thread_count_exits_2() {
    let (_d, cfg) = setup(TINY);
    let o = Command::new(env!("CARGO_BIN_EXE_dcf"))
        .args(["gen-data", "--config", &cfg])
        .env("DCF_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn missing_prerequisites_exit_3() {
    let (d, cfg) = setup(TINY);
    assert_eq!(code(&dcf(&["psa", "--config", &cfg])), 3);
    assert_eq!(code(&dcf(&["tps", "--config", &cfg])), 3);
    assert_eq!(code(&dcf(&["explain", "--config", &cfg, "--checkpoint", "nope.ckpt"])), 3);
    assert_eq!(code(&dcf(&["report", "--run-dir", d.path().to_str().unwrap()])), 3);
}

#[test]
fn gen_data_manifests_are_hash_equal_and_counted() {
    let (d, cfg) = setup(TINY);
    let one = d.path().join("one");
    let two = d.path().join("two");
    for out in [&one, &two] {
        let o = dcf(&["gen-data", "--config", &cfg, "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0);
    }
    for (name, f1, f2) in [("A", 30, 20), ("B", 15, 25)] {
        let a = fs::read(one.join(name).join("manifest.json")).unwrap();
        let b = fs::read(two.join(name).join("manifest.json")).unwrap();
        assert_eq!(a, b);
        let m: Value = serde_json::from_slice(&a).unwrap();
        let items = m["items"].as_array().unwrap();
        let count = |l: &str| items.iter().filter(|i| i["label"] == l).count();
        assert_eq!((count("F1"), count("F2")), (f1, f2));
        for i in items {
            let f = one.join(name).join(i["file"].as_str().unwrap());
            assert_eq!(fs::read(&f).unwrap(), fs::read(two.join(name).join(i["file"].as_str().unwrap())).unwrap());
        }
    }
    assert!(one.join("gen-data.log").exists());
}

#[test]
fn single_setting_reports_no_pathway() {
    let (_d, cfg) = setup(TINY);
    assert_eq!(code(&dcf(&["gen-data", "--config", &cfg])), 0);
    let o = dcf(&["tps", "--config", &cfg, "--settings", "1", "--scheme", "reflection"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.contains("chosen pathway: none"), "{out}");
    assert!(out.contains("padding: reflection"));
    assert!(!out.contains("S2"));
}

#[test]
fn full_pipeline_persists_reachable_artifacts() {
    let (d, cfg) = setup(TINY);
    assert_eq!(code(&dcf(&["gen-data", "--config", &cfg])), 0);

    let psa = dcf(&["psa", "--config", &cfg]);
    assert_eq!(code(&psa), 0, "{}", String::from_utf8_lossy(&psa.stderr));
    assert!(stdout(&psa).contains("chosen scheme: "));
    let tps = dcf(&["tps", "--config", &cfg]);
    assert_eq!(code(&tps), 0, "{}", String::from_utf8_lossy(&tps.stderr));
    assert!(stdout(&tps).contains("chosen pathway: S"));

    let run = only_run_dir(d.path());
    let psa_report = read(&run.join("psa/report.json"));
    let tps_report = read(&run.join("tps/report.json"));
    let chosen = psa_report["report"]["chosen_scheme"].as_str().unwrap().to_string();
    assert_eq!(tps_report["report"]["scheme"], chosen.as_str());
    assert_eq!(psa_report["report"]["schemes"].as_array().unwrap().len(), 6);

    let ckpt = tps_report["report"]["architectures"][0]["chosen_checkpoint"].as_str().unwrap().to_string();
    let ex = dcf(&["explain", "--config", &cfg, "--checkpoint", &ckpt]);
    assert_eq!(code(&ex), 0, "{}", String::from_utf8_lossy(&ex.stderr));
    assert!(stdout(&ex).contains(&format!("scheme: {chosen}")));

    // Every artifact listed in the manifest exists, and every file in the
    // run directory is either listed or is run bookkeeping.
    let manifest = read(&run.join("manifest.json"));
    let mut listed = vec!["manifest.json".to_string(), "config.json".into(), "run.log".into()];
    for (_, stage) in manifest["stages"].as_object().unwrap() {
        assert_eq!(stage["status"], "complete");
        for a in stage["artifacts"].as_array().unwrap() {
            let a = a.as_str().unwrap();
            assert!(run.join(a).is_file(), "missing {a}");
            listed.push(a.to_string());
        }
    }
    for entry in walk(&run) {
        let rel = entry.strip_prefix(&run).unwrap().to_string_lossy().into_owned();
        assert!(listed.contains(&rel), "unlisted artifact {rel}");
    }
    assert!(!run.join(".lock").exists());
    assert!(fs::read_to_string(run.join("run.log")).unwrap().contains("INFO"));
    assert!(!stdout(&psa).contains("INFO"));

    // report reprints the stored aggregates without touching images.
    fs::remove_dir_all(d.path().join("data")).unwrap();
    for f in walk(&run) {
        if matches!(f.extension().and_then(|e| e.to_str()), Some("ppm" | "pgm")) {
            fs::remove_file(f).unwrap();
        }
    }
    let rep = dcf(&["report", "--run-dir", run.to_str().unwrap()]);
    assert_eq!(code(&rep), 0, "{}", String::from_utf8_lossy(&rep.stderr));
    let text = stdout(&rep);
    for s in psa_report["report"]["schemes"].as_array().unwrap() {
        let agg = &s["aggregate"];
        let cell = format!(
            "{:.2} ± {:.2}",
            agg["mean_a"].as_f64().unwrap(),
            agg["std_a"].as_f64().unwrap()
        );
        assert!(text.contains(&cell), "{cell} not in report");
    }
    for s in tps_report["report"]["architectures"][0]["settings"].as_array().unwrap() {
        let agg = &s["aggregate"];
        let cell = format!(
            "{:.2} ± {:.2}",
            agg["mean_b"].as_f64().unwrap(),
            agg["std_b"].as_f64().unwrap()
        );
        assert!(text.contains(&cell), "{cell} not in report");
    }
    assert!(text.contains(&format!("chosen scheme: {chosen}")));
}

#[test]
fn identical_invocations_share_a_run_directory() {
    let (d, cfg) = setup(TINY);
    assert_eq!(code(&dcf(&["gen-data", "--config", &cfg])), 0);
    let first = dcf(&["tps", "--config", &cfg, "--settings", "1", "--scheme", "zero"]);
    let second = dcf(&["tps", "--config", &cfg, "--settings", "1", "--scheme", "zero"]);
    assert_eq!(code(&second), 0);
    assert_eq!(stdout(&first), stdout(&second));
    let run = only_run_dir(d.path());
    assert_eq!(read(&run.join("manifest.json"))["run_id"], run.file_name().unwrap().to_str().unwrap());
}

#[test]
fn held_lock_is_a_runtime_error() {
    let (d, cfg) = setup(TINY);
    assert_eq!(code(&dcf(&["gen-data", "--config", &cfg])), 0);
    assert_eq!(code(&dcf(&["tps", "--config", &cfg, "--settings", "1", "--scheme", "zero"])), 0);
    let run = only_run_dir(d.path());
    fs::write(run.join(".lock"), "").unwrap();
    let o = dcf(&["tps", "--config", &cfg, "--settings", "1", "--scheme", "zero"]);
    assert_eq!(code(&o), 1);
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}
