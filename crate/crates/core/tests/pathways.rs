use std::sync::OnceLock;

use dcf_core::imaging::PaddingScheme;
use dcf_core::nn::{ModelSpec, TrainConfig};
use dcf_core::pathways::{
    choose, leveraged_score, read_records_csv, run_psa, run_tps, write_records_csv, Architecture, Experiment,
    ExperimentData, Objective, PsaConfig, RunRecord, Setting, TpsConfig,
};
use dcf_core::synthdata::{generate, split, GenConfig, SplitSpec};
use dcf_core::Error;

fn data() -> &'static ExperimentData {
    static DATA: OnceLock<ExperimentData> = OnceLock::new();
    DATA.get_or_init(|| {
        let mut cfg = GenConfig::default();
        cfg.a.f1 = 16;
        cfg.a.f2 = 14;
        cfg.b.f1 = 12;
        cfg.b.f2 = 14;
        cfg.a.test_fraction = 0.3;
        cfg.b.test_fraction = 0.3;
        cfg.a.test_f1_share = 0.5;
        cfg.b.test_f1_share = 0.5;
        let (a, b) = generate(&cfg).unwrap();
        let spec = |f: f64| SplitSpec { test_fraction: f, shuffle_seed: 5 };
        ExperimentData {
            a: split(&a, spec(0.3)).unwrap(),
            b: split(&b, spec(0.3)).unwrap(),
        }
    })
}

fn tiny_model() -> ModelSpec {
    ModelSpec {
        input_side: 16,
        stem_channels: 4,
        stem_stride: 2,
        blocks_per_stage: vec![1, 1],
    }
}

fn train_cfg() -> TrainConfig {
    TrainConfig {
        epochs: 2,
        batch_size: 8,
        learning_rate: 1e-3,
        ..TrainConfig::default()
    }
}

fn tps_cfg(settings: &[Setting]) -> TpsConfig {
    TpsConfig {
        settings: settings.to_vec(),
        architectures: vec![Architecture { name: "tiny".into(), spec: tiny_model() }],
        ..TpsConfig::default()
    }
}

fn sink() -> impl FnMut(&RunRecord) -> dcf_core::Result<()> {
    |_| Ok(())
}

#[test]
fn psa_scores_every_scheme_and_picks_the_argmax() {
    let dir = tempfile::tempdir().unwrap();
    let exp = Experiment::new(data(), train_cfg(), 100, Objective::Sum, dir.path());
    let mut seen = 0;
    let mut count = |_: &RunRecord| {
        seen += 1;
        Ok(())
    };
    let report = run_psa(&exp, &tiny_model(), &PsaConfig::default(), &mut count).unwrap();
    assert_eq!(seen, 30);
    assert_eq!(report.schemes.len(), 6);
    // 6 schemes x 5 runs, each scored on two test sets
    assert_eq!(report.records().count() * 2, 60);
    let aggs: Vec<_> = report.schemes.iter().map(|s| s.aggregate).collect();
    let best = choose(&aggs, Objective::Sum).unwrap();
    assert_eq!(report.schemes[best].scheme, report.chosen_scheme);
    for s in &report.schemes {
        assert!(leveraged_score(&report.schemes[best].aggregate) >= leveraged_score(&s.aggregate));
    }
    assert_eq!(report.seeds, vec![101, 102, 103, 104, 105]);
    // one shared family: zero-padded checkpoints reused across schemes
    assert!(dir.path().join(&report.chosen_checkpoint).exists());
    let first = &report.schemes[0].records[0].checkpoint;
    assert!(report.schemes.iter().all(|s| &s.records[0].checkpoint == first));
    for r in report.records() {
        for s in [r.on_a, r.on_b] {
            assert!((s.balanced - (s.acc_f1 + s.acc_f2) / 2.0).abs() < 1e-9);
        }
    }
}

#[test]
fn psa_with_one_scheme_chooses_it() {
    let dir = tempfile::tempdir().unwrap();
    let exp = Experiment::new(data(), train_cfg(), 0, Objective::Sum, dir.path());
    let cfg = PsaConfig {
        schemes: vec![PaddingScheme::Grey],
        train_per_scheme: true,
    };
    let report = run_psa(&exp, &tiny_model(), &cfg, &mut sink()).unwrap();
    assert_eq!(report.chosen_scheme, PaddingScheme::Grey);
    assert!(dir.path().join("psa/grey/run1.ckpt").exists());
}

#[test]
fn tps_full_pathways_are_consistent_and_freeze_sound() {
    let dir = tempfile::tempdir().unwrap();
    let exp = Experiment::new(data(), train_cfg(), 7, Objective::Sum, dir.path());
    let report = run_tps(&exp, PaddingScheme::Reflection, &tps_cfg(&Setting::ALL), &mut sink()).unwrap();
    let arch = &report.architectures[0];
    let order: Vec<Setting> = arch.settings.iter().map(|s| s.setting).collect();
    assert_eq!(order, Setting::ALL.to_vec());
    let aggs: Vec<_> = arch.settings.iter().map(|s| s.aggregate).collect();
    assert_eq!(Some(arch.settings[choose(&aggs, Objective::Sum).unwrap()].setting), arch.chosen);
    for s in [Setting::S2, Setting::S5] {
        for r in &arch.setting(s).unwrap().records {
            assert!(r.frozen_before.is_some());
            assert_eq!(r.frozen_before, r.frozen_after, "{s} run {}", r.run);
        }
    }
    for s in [Setting::S1, Setting::S3, Setting::S4] {
        assert!(arch.setting(s).unwrap().records.iter().all(|r| r.frozen_before.is_none()));
    }

    // replay from the same inputs is bitwise identical, checkpoints included
    let dir2 = tempfile::tempdir().unwrap();
    let exp2 = Experiment::new(data(), train_cfg(), 7, Objective::Sum, dir2.path());
    let again = run_tps(&exp2, PaddingScheme::Reflection, &tps_cfg(&Setting::ALL), &mut sink()).unwrap();
    assert_eq!(report, again);
    for r in report.records() {
        let rel = r.checkpoint.as_ref().unwrap();
        assert_eq!(
            std::fs::read(dir.path().join(rel)).unwrap(),
            std::fs::read(dir2.path().join(rel)).unwrap()
        );
    }

    let csv = dir.path().join("runs.csv");
    write_records_csv(&csv, report.records()).unwrap();
    let back = read_records_csv(&csv).unwrap();
    let orig: Vec<&RunRecord> = report.records().collect();
    assert_eq!(back.len(), orig.len());
    for (b, o) in back.iter().zip(orig) {
        assert_eq!((&b.setting, b.run, b.on_a, b.on_b), (&o.setting, o.run, o.on_a, o.on_b));
    }
    let header = std::fs::read_to_string(&csv).unwrap();
    assert!(header.starts_with("setting,run,accF1_A,accF2_A,balanced_A,accF1_B,accF2_B,balanced_B\n"));
}

#[test]
fn single_setting_has_no_chosen_pathway() {
    let dir = tempfile::tempdir().unwrap();
    let exp = Experiment::new(data(), train_cfg(), 1, Objective::Sum, dir.path());
    let report = run_tps(&exp, PaddingScheme::Zero, &tps_cfg(&[Setting::S1]), &mut sink()).unwrap();
    assert_eq!(report.architectures[0].settings.len(), 1);
    assert_eq!(report.architectures[0].chosen, None);
}

#[test]
fn fine_tuning_without_its_prerequisite_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let exp = Experiment::new(data(), train_cfg(), 1, Objective::Sum, dir.path());
    for s in [Setting::S2, Setting::S5] {
        let err = run_tps(&exp, PaddingScheme::Zero, &tps_cfg(&[s, Setting::S3]), &mut sink()).unwrap_err();
        assert!(matches!(err, Error::MissingPrerequisite(_)), "{err}");
    }
    // nothing was trained
    assert!(!dir.path().join("tps").exists());
}

#[test]
fn setting_names_parse() {
    assert_eq!("S2".parse::<Setting>().unwrap(), Setting::S2);
    assert_eq!("5".parse::<Setting>().unwrap(), Setting::S5);
    assert!("6".parse::<Setting>().is_err());
    assert!("0".parse::<Setting>().is_err());
    assert_eq!(Setting::S4.to_string(), "S4");
}
