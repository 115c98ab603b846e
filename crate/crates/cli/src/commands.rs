use std::fs;
use std::path::{Path, PathBuf};

use dcf_core::explain::{gradcam_report, padding_profile, quant_table, write_profile_csv, write_quant_csv, Sample, TestSet};
use dcf_core::imaging::PaddingScheme;
use dcf_core::nn::{load_checkpoint, Label};
use dcf_core::pathways::{
    render_psa_table, render_tps_table, run_psa, run_tps, write_records_csv, Experiment, ExperimentData, PsaReport,
    RunRecord, Setting, TpsReport,
};
use dcf_core::synthdata::{generate, load_dataset, save_dataset, split, SplitSpec, MANIFEST_FILE};
use dcf_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::run::{init_logging, read_json, read_manifest, write_json, JsonLines, RunDir, StageEntry, Status};

/// A stage report as persisted: the effective config next to the results.
#[derive(Debug, Serialize, Deserialize)]
pub struct Persisted<R> {
    pub run_id: String,
    pub config: RunConfig,
    pub report: R,
}

pub const PSA_REPORT: &str = "psa/report.json";
pub const TPS_REPORT: &str = "tps/report.json";

pub fn gen_data(cfg: &RunConfig, out: Option<PathBuf>) -> Result<()> {
    let root = out.unwrap_or_else(|| cfg.data.root.clone());
    fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
    init_logging(&root.join("gen-data.log"))?;
    let (a, b) = generate(&cfg.data.generator)?;
    for ds in [&a, &b] {
        let m = save_dataset(ds, &root)?;
        tracing::info!(dataset = %ds.name, items = m.items.len(), "dataset written");
        println!(
            "dataset {}: {} items (F1 {}, F2 {}) -> {}",
            ds.name,
            ds.len(),
            ds.count(Label::F1),
            ds.count(Label::F2),
            root.join(&ds.name).join(MANIFEST_FILE).display()
        );
    }
    Ok(())
}

fn load_data(cfg: &RunConfig, run: &RunDir) -> Result<ExperimentData> {
    let root = &cfg.data.root;
    let mut sets = Vec::new();
    for name in ["A", "B"] {
        let manifest = root.join(name).join(MANIFEST_FILE);
        if !manifest.exists() {
            return Err(Error::MissingPrerequisite(format!(
                "dataset manifest {} not found; run gen-data first",
                manifest.display()
            )));
        }
        sets.push(load_dataset(root, name)?);
        run.update_manifest(|m| {
            m.datasets.insert(name.to_string(), manifest.clone());
        })?;
    }
    let (fa, fb) = cfg.test_fractions();
    let seed = cfg.data.split.shuffle_seed;
    Ok(ExperimentData {
        a: split(&sets[0], SplitSpec { test_fraction: fa, shuffle_seed: seed })?,
        b: split(&sets[1], SplitSpec { test_fraction: fb, shuffle_seed: seed })?,
    })
}

fn open_run(cfg: &RunConfig) -> Result<RunDir> {
    let run = RunDir::open(cfg)?;
    init_logging(&run.path.join(crate::run::LOG))?;
    tracing::info!(run_id = %run.id, "run directory {}", run.path.display());
    Ok(run)
}

/// Runs a training stage, streaming records to `records.jsonl` and
/// leaving a failure marker if it errors.
fn run_stage<R>(
    run: &RunDir,
    stage: &str,
    body: impl FnOnce(&mut dyn FnMut(&RunRecord) -> Result<()>) -> Result<R>,
) -> Result<(R, PathBuf)> {
    let dir = run.stage_dir(stage)?;
    let records_path = dir.join("records.jsonl");
    let mut lines = JsonLines::create(&records_path)?;
    let mut checkpoints = Vec::new();
    run.set_stage(
        stage,
        StageEntry {
            status: Status::Running,
            chosen: None,
            error: None,
            artifacts: vec![run.rel(&records_path)],
        },
    )?;
    let result = {
        let mut sink = |r: &RunRecord| -> Result<()> {
            if let Some(c) = &r.checkpoint {
                if !checkpoints.contains(c) {
                    checkpoints.push(c.clone());
                }
            }
            lines.push(r).map_err(|e| Error::io(&records_path, e))
        };
        body(&mut sink)
    };
    match result {
        Ok(r) => Ok((r, dir)),
        Err(e) => {
            tracing::error!(stage, error = %e, "stage failed");
            let mut artifacts = vec![run.rel(&records_path)];
            artifacts.extend(checkpoints);
            run.fail_stage(stage, &e, artifacts)?;
            Err(e)
        }
    }
}

fn checkpoint_list<'a>(records: impl Iterator<Item = &'a RunRecord>) -> Vec<String> {
    let mut v: Vec<String> = records.filter_map(|r| r.checkpoint.clone()).collect();
    v.sort();
    v.dedup();
    v
}

pub fn psa(cfg: &RunConfig) -> Result<()> {
    if !cfg.psa.enabled {
        return Err(Error::Config("psa is disabled in this config".into()));
    }
    let run = open_run(cfg)?;
    let data = load_data(cfg, &run)?;
    let exp = Experiment::new(&data, cfg.model.train.clone(), cfg.base_seed, cfg.objective, &run.path);
    let (report, dir) = run_stage(&run, "psa", |sink| run_psa(&exp, &cfg.model.spec, &cfg.psa_config(), sink))?;

    let json = dir.join("report.json");
    let csv = dir.join("runs.csv");
    write_json(&json, &Persisted { run_id: run.id.clone(), config: cfg.clone(), report: report.clone() })?;
    write_records_csv(&csv, report.records())?;
    let mut artifacts = vec![run.rel(&json), run.rel(&csv), run.rel(&dir.join("records.jsonl"))];
    artifacts.extend(checkpoint_list(report.records()));
    run.set_stage(
        "psa",
        StageEntry {
            status: Status::Complete,
            chosen: Some(report.chosen_scheme.to_string()),
            error: None,
            artifacts,
        },
    )?;
    print!("{}", render_psa_table(&report));
    println!("run: {}", run.path.display());
    Ok(())
}

pub fn tps(cfg: &RunConfig, settings: Option<Vec<Setting>>, forced: Option<PaddingScheme>) -> Result<()> {
    let run = open_run(cfg)?;
    let scheme = match forced.or(cfg.tps.scheme) {
        Some(s) => s,
        None => {
            let path = run.path.join(PSA_REPORT);
            if !path.exists() {
                return Err(Error::MissingPrerequisite(format!(
                    "no padding scheme: run psa first ({} missing) or pass --scheme",
                    path.display()
                )));
            }
            read_json::<Persisted<PsaReport>>(&path)?.report.chosen_scheme
        }
    };
    let data = load_data(cfg, &run)?;
    let exp = Experiment::new(&data, cfg.model.train.clone(), cfg.base_seed, cfg.objective, &run.path);
    let tps_cfg = cfg.tps_config(settings);
    let (report, dir) = run_stage(&run, "tps", |sink| run_tps(&exp, scheme, &tps_cfg, sink))?;

    let json = dir.join("report.json");
    write_json(&json, &Persisted { run_id: run.id.clone(), config: cfg.clone(), report: report.clone() })?;
    let mut artifacts = vec![run.rel(&json), run.rel(&dir.join("records.jsonl"))];
    for arch in &report.architectures {
        let csv = dir.join(format!("runs_{}.csv", arch.name));
        write_records_csv(&csv, arch.settings.iter().flat_map(|s| s.records.iter()))?;
        artifacts.push(run.rel(&csv));
    }
    artifacts.extend(checkpoint_list(report.records()));
    let chosen: Vec<String> = report
        .architectures
        .iter()
        .filter_map(|a| a.chosen.map(|c| format!("{}={c}", a.name)))
        .collect();
    run.set_stage(
        "tps",
        StageEntry {
            status: Status::Complete,
            chosen: (!chosen.is_empty()).then(|| chosen.join(",")),
            error: None,
            artifacts,
        },
    )?;
    print!("{}", render_tps_table(&report));
    println!("run: {}", run.path.display());
    Ok(())
}

fn resolve_checkpoint(run: &RunDir, given: &Path) -> Result<PathBuf> {
    if given.exists() {
        return Ok(given.to_path_buf());
    }
    let inside = run.path.join(given);
    if given.is_relative() && inside.exists() {
        return Ok(inside);
    }
    Err(Error::MissingPrerequisite(format!("checkpoint {} not found", given.display())))
}

/// Scheme the run settled on: TPS padding, else the PSA choice, else the
/// configured scheme, else zero.
fn run_scheme(run: &RunDir, cfg: &RunConfig) -> Result<PaddingScheme> {
    let tps = run.path.join(TPS_REPORT);
    if tps.exists() {
        return Ok(read_json::<Persisted<TpsReport>>(&tps)?.report.scheme);
    }
    let psa = run.path.join(PSA_REPORT);
    if psa.exists() {
        return Ok(read_json::<Persisted<PsaReport>>(&psa)?.report.chosen_scheme);
    }
    Ok(cfg.tps.scheme.unwrap_or(PaddingScheme::Zero))
}

pub fn explain(cfg: &RunConfig, checkpoint: &Path, forced: Option<PaddingScheme>) -> Result<()> {
    let run = open_run(cfg)?;
    let ckpt = resolve_checkpoint(&run, checkpoint)?;
    let state = load_checkpoint(&ckpt)?;
    let scheme = match forced {
        Some(s) => s,
        None => run_scheme(&run, cfg)?,
    };
    let data = load_data(cfg, &run)?;
    let stem = ckpt
        .strip_prefix(&run.path)
        .unwrap_or(&ckpt)
        .with_extension("")
        .to_string_lossy()
        .replace(['/', '\\'], "_");
    let stage = format!("explain/{stem}");
    let dir = run.stage_dir(&stage)?;
    let sets = [
        TestSet { name: "A", items: &data.a.test },
        TestSet { name: "B", items: &data.b.test },
    ];
    let result = (|| -> Result<Vec<PathBuf>> {
        let mut files = Vec::new();
        let rows = quant_table(&state, &sets, &cfg.psa.schemes)?;
        let quant_csv = dir.join("quant.csv");
        write_quant_csv(&quant_csv, &rows)?;
        let quant_json = dir.join("quant.json");
        write_json(&quant_json, &rows)?;
        files.extend([quant_csv, quant_json]);
        let prof_dir = dir.join("profiles");
        fs::create_dir_all(&prof_dir).map_err(|e| Error::io(&prof_dir, e))?;
        for set in &sets {
            for &s in &cfg.psa.schemes {
                let p = padding_profile(set.items, s, cfg.explain.histogram_bins)?;
                let path = prof_dir.join(format!("{}_{}.csv", set.name, s));
                write_profile_csv(&path, &p)?;
                files.push(path);
            }
        }
        let mut samples = Vec::new();
        for set in &sets {
            for label in Label::ALL {
                let picked = set.items.iter().filter(|i| i.label == label).take(cfg.explain.samples_per_label);
                for (k, item) in picked.enumerate() {
                    samples.push(Sample {
                        id: format!("{}_{label}_{k:03}", set.name),
                        image: &item.image,
                        label,
                    });
                }
            }
        }
        let cam_dir = dir.join("gradcam");
        let index = gradcam_report(&state, &samples, scheme, &cam_dir)?;
        files.push(cam_dir.join(dcf_core::explain::INDEX_FILE));
        for e in &index.entries {
            for f in [&e.input, &e.heatmap, &e.overlay] {
                files.push(cam_dir.join(f));
            }
        }

        println!("explained {} with padding {scheme}", run.rel(&ckpt));
        println!("{:<4} {:<11} {:<3} {:>9} {:>10} {:>8} {:>8}", "set", "scheme", "lbl", "avg p", "avg conf", "acc %", "correct");
        for r in &rows {
            let f = |v: Option<f64>, p: usize| v.map(|x| format!("{x:.prec$}", prec = p)).unwrap_or_else(|| "-".into());
            println!(
                "{:<4} {:<11} {:<3} {:>9} {:>10} {:>8.2} {:>4}/{:<3}",
                r.set,
                r.scheme.to_string(),
                r.label.to_string(),
                f(r.avg_mean_pixel, 3),
                f(r.avg_confidence, 3),
                r.accuracy,
                r.n_correct,
                r.n_total
            );
        }
        Ok(files)
    })();
    match result {
        Ok(files) => {
            run.set_stage(
                &stage,
                StageEntry {
                    status: Status::Complete,
                    chosen: Some(scheme.to_string()),
                    error: None,
                    artifacts: files.iter().map(|f| run.rel(f)).collect(),
                },
            )?;
            println!("scheme: {scheme}");
            println!("run: {}", run.path.display());
            Ok(())
        }
        Err(e) => {
            run.fail_stage(&stage, &e, Vec::new())?;
            Err(e)
        }
    }
}

/// Prints stored summaries; nothing is recomputed.
pub fn report(run_dir: &Path) -> Result<()> {
    if !run_dir.join(crate::run::MANIFEST).exists() {
        return Err(Error::MissingPrerequisite(format!("{} is not a run directory", run_dir.display())));
    }
    let manifest = read_manifest(run_dir)?;
    println!("run {}", manifest.run_id);
    let mut any = false;
    let psa = run_dir.join(PSA_REPORT);
    if psa.exists() {
        let r: Persisted<PsaReport> = read_json(&psa)?;
        println!("\n== padding schemes ==");
        print!("{}", render_psa_table(&r.report));
        any = true;
    }
    let tps = run_dir.join(TPS_REPORT);
    if tps.exists() {
        let r: Persisted<TpsReport> = read_json(&tps)?;
        println!("\n== training pathways ==");
        print!("{}", render_tps_table(&r.report));
        any = true;
    }
    for (name, stage) in &manifest.stages {
        if stage.status != Status::Complete {
            println!("stage {name}: {:?}{}", stage.status, stage.error.as_ref().map(|e| format!(" ({e})")).unwrap_or_default());
        }
    }
    if !any {
        return Err(Error::MissingPrerequisite(format!("no stage reports in {}", run_dir.display())));
    }
    Ok(())
}
