use dcf_core::imaging::ImageU8;
use dcf_core::nn::{
    adam_step, evaluate, load_checkpoint, save_checkpoint, train_run, Example, Label, ModelSpec,
    ModelState, Mode, Tensor, TrainConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn toy_spec(side: usize) -> ModelSpec {
    ModelSpec {
        input_side: side,
        stem_channels: 4,
        stem_stride: 1,
        blocks_per_stage: vec![1, 1],
    }
}

/// Constant images, dark for F1 and bright for F2, with per-image jitter.
fn separable(n: usize, side: usize, seed: u64) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let label = if i % 2 == 0 { Label::F1 } else { Label::F2 };
            let base: u8 = match label {
                Label::F1 => rng.random_range(20..70),
                Label::F2 => rng.random_range(180..230),
            };
            Example {
                image: ImageU8::filled(side, side, [base, base / 2, 255 - base]).unwrap(),
                label,
            }
        })
        .collect()
}

fn fast_cfg(epochs: usize) -> TrainConfig {
    TrainConfig {
        learning_rate: 1e-2,
        batch_size: 8,
        epochs,
        augment: true,
        ..TrainConfig::default()
    }
}

#[test]
fn separable_toy_reaches_full_validation_accuracy() {
    let train = separable(32, 8, 1);
    let val = separable(10, 8, 2);
    let init = ModelState::new(toy_spec(8), 5).unwrap();
    let out = train_run(init, &train, &val, &fast_cfg(20), 9).unwrap();
    assert_eq!(out.history.len(), 20);
    let best = out.history.iter().map(|h| h.val_balanced).fold(0.0, f64::max);
    assert_eq!(best, 100.0, "history: {:?}", out.history);
    let scores = evaluate(&out.best, &val).unwrap();
    assert_eq!(scores.balanced, 100.0);
}

#[test]
fn training_is_deterministic() {
    let train = separable(16, 8, 3);
    let val = separable(6, 8, 4);
    let run = || {
        let init = ModelState::new(toy_spec(8), 11).unwrap();
        train_run(init, &train, &val, &fast_cfg(3), 12).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.best, b.best);
    assert_eq!(a.history, b.history);
    let bits = |s: &ModelState| -> Vec<u64> {
        s.params().iter().flat_map(|p| p.value.iter().map(|v| v.to_bits())).collect()
    };
    assert_eq!(bits(&a.best), bits(&b.best));
}

#[test]
fn zero_epochs_returns_init() {
    let train = separable(4, 8, 3);
    let init = ModelState::new(toy_spec(8), 2).unwrap();
    let out = train_run(init.clone(), &train, &train, &fast_cfg(0), 7).unwrap();
    assert_eq!(out.best, init);
    assert!(out.history.is_empty());
    assert_eq!(out.best_epoch, None);
}

#[test]
fn empty_sets_rejected() {
    let train = separable(4, 8, 3);
    let init = ModelState::new(toy_spec(8), 2).unwrap();
    assert!(train_run(init.clone(), &[], &train, &fast_cfg(1), 0).is_err());
    assert!(train_run(init, &train, &[], &fast_cfg(1), 0).is_err());
}

#[test]
fn freeze_bounds_and_examples() {
    let mut s = ModelState::new(toy_spec(8), 1).unwrap();
    let depth = s.depth();
    assert_eq!(depth, 2);
    s.freeze(depth + 1).unwrap();
    assert!(s.frozen_mask().iter().all(|f| !f));
    s.freeze(1).unwrap();
    for (i, p) in s.params().iter().enumerate() {
        assert_eq!(s.is_param_frozen(i), !p.name.starts_with("head."), "{}", p.name);
    }
    assert!(s.freeze(0).is_err());
    assert!(s.freeze(depth + 2).is_err());
}

#[test]
fn training_leaves_frozen_parameters_bitwise_equal() {
    let train = separable(16, 8, 5);
    let val = separable(6, 8, 6);
    let pre = train_run(ModelState::new(toy_spec(8), 3).unwrap(), &train, &val, &fast_cfg(2), 1)
        .unwrap()
        .best;
    for tail in 1..=2 {
        let mut init = pre.clone();
        init.freeze(tail).unwrap();
        let before = init.frozen_checksum();
        let snapshot: Vec<_> = init.params().to_vec();
        let stats: Vec<_> = init.bn_stats().to_vec();
        let out = train_run(init, &train, &val, &fast_cfg(3), 2).unwrap();
        assert_eq!(out.best.frozen_checksum(), before);
        for (i, (old, new)) in snapshot.iter().zip(out.best.params()).enumerate() {
            if out.best.is_param_frozen(i) {
                assert_eq!(old, new, "{}", old.name);
            }
        }
        for (old, new) in stats.iter().zip(out.best.bn_stats()) {
            if new.name.starts_with("stem") || new.name.starts_with("stage0") {
                assert_eq!(old, new, "{}", old.name);
            }
        }
    }
}

#[test]
fn eval_forward_is_batch_independent() {
    let mut state = ModelState::new(toy_spec(8), 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let data: Vec<f64> = (0..4 * 3 * 64).map(|_| rng.random_range(-1.0..1.0)).collect();
    let batch = Tensor::from_vec(4, 3, 8, 8, data.clone());
    state.forward_train(&batch).unwrap();
    let all = state.forward(&batch, Mode::Eval).unwrap().logits;
    for i in 0..4 {
        let one = Tensor::from_vec(1, 3, 8, 8, data[i * 192..(i + 1) * 192].to_vec());
        let l = state.forward(&one, Mode::Eval).unwrap().logits;
        assert_eq!(&all[2 * i..2 * i + 2], &l[..]);
    }
}

#[test]
fn zeroed_head_gives_equal_logits() {
    let mut state = ModelState::new(toy_spec(8), 4).unwrap();
    for name in ["head.fc.weight", "head.fc.bias"] {
        let i = state.param_index(name).unwrap();
        state.param_values_mut(i).fill(0.0);
    }
    let x = Tensor::from_vec(2, 3, 8, 8, vec![0.3; 2 * 192]);
    let logits = state.forward(&x, Mode::Eval).unwrap().logits;
    assert!(logits.iter().all(|&l| l == 0.0));
}

#[test]
fn stale_cache_rejected() {
    let mut state = ModelState::new(toy_spec(8), 4).unwrap();
    let x = Tensor::from_vec(2, 3, 8, 8, vec![0.1; 2 * 192]);
    let pass = state.forward(&x, Mode::Train).unwrap();
    let grads = state.backward(&pass.cache, &[Label::F1, Label::F2]).unwrap();
    adam_step(&mut state, &grads, &TrainConfig::default());
    assert!(state.backward(&pass.cache, &[Label::F1, Label::F2]).is_err());
    let eval = state.forward(&x, Mode::Eval).unwrap();
    assert!(state.backward(&eval.cache, &[Label::F1, Label::F2]).is_err());
}

#[test]
fn checkpoint_resumes_bit_exact() {
    let train = separable(12, 8, 8);
    let val = separable(6, 8, 9);
    let cfg = fast_cfg(2);
    let first = train_run(ModelState::new(toy_spec(8), 3).unwrap(), &train, &val, &cfg, 1)
        .unwrap()
        .best;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&first, &path).unwrap();
    let loaded = load_checkpoint(&path).unwrap();
    assert_eq!(loaded, first);
    let a = train_run(first, &train, &val, &cfg, 4).unwrap().best;
    let b = train_run(loaded, &train, &val, &cfg, 4).unwrap().best;
    assert_eq!(a, b);
}
