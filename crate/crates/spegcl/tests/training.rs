//! End-to-end training-loop contracts: determinism, checkpoint resume,
//! convergence, and the downstream evaluation paths that need a trained
//! encoder.

use spegcl::encoder::EncoderKind;
use spegcl::eval::{embed_dataset, linear_probe, semi_supervised_finetune, FinetuneConfig};
use spegcl::graph::make_synthetic_sbm;
use spegcl::objective::LossMode;
use spegcl::trainer::{initial_checkpoint, train, train_from, Checkpoint, TrainConfig};

fn small_dataset(seed: u64) -> spegcl::graph::Dataset {
    make_synthetic_sbm(40, 12, 0.15, 0.45, 0.5, seed).unwrap()
}

fn small_config(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 8,
        batch_size: 8,
        hidden_dims: vec![12, 12],
        emb_dim: 8,
        seed,
        ..TrainConfig::default()
    }
}

#[test]
fn identical_runs_produce_identical_histories() {
    let ds = small_dataset(3);
    let cfg = small_config(5);
    let (cp1, stats1) = train(&ds, &cfg).unwrap();
    let (cp2, stats2) = train(&ds, &cfg).unwrap();
    assert_eq!(cp1.loss_history, cp2.loss_history);
    assert_eq!(cp1.params, cp2.params);
    for (a, b) in stats1.iter().zip(&stats2) {
        assert_eq!(a.mean_loss, b.mean_loss);
    }
}

#[test]
fn loss_history_is_finite_and_decreasing_overall() {
    let ds = small_dataset(4);
    let mut cfg = small_config(6);
    cfg.epochs = 30;
    let (cp, _) = train(&ds, &cfg).unwrap();
    assert!(cp.loss_history.iter().all(|l| l.is_finite()));
    let first = cp.loss_history.first().unwrap();
    let last = cp.loss_history.last().unwrap();
    assert!(
        last < &(first * 0.9),
        "expected >=10% loss reduction, got {first} -> {last}"
    );
}

#[test]
fn resume_matches_uninterrupted_run() {
    let ds = small_dataset(7);
    let mut cfg_short = small_config(9);
    cfg_short.epochs = 4;
    let (mid, _) = train(&ds, &cfg_short).unwrap();

    let mut cfg_full = cfg_short.clone();
    cfg_full.epochs = 8;
    let (resumed, _) = train_from(&ds, &cfg_full, Some(mid)).unwrap();
    let (straight, _) = train(&ds, &cfg_full).unwrap();
    assert_eq!(resumed.params, straight.params);
    assert_eq!(resumed.loss_history, straight.loss_history);
    assert_eq!(resumed.adam.m, straight.adam.m);
    assert_eq!(resumed.adam.v, straight.adam.v);
}

#[test]
fn checkpoint_roundtrips_through_disk() {
    let ds = small_dataset(11);
    let cfg = small_config(13);
    let (cp, _) = train(&ds, &cfg).unwrap();
    let dir = std::env::temp_dir().join(format!("spegcl-ckpt-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("test.bin");
    cp.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back.params, cp.params);
    assert_eq!(back.adam.m, cp.adam.m);
    assert_eq!(back.adam.v, cp.adam.v);
    assert_eq!(back.adam.step, cp.adam.step);
    assert_eq!(back.loss_history, cp.loss_history);
    assert_eq!(back.config_hash, cp.config_hash);
    assert_eq!(back.next_epoch, cp.next_epoch);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn resume_rejects_mismatched_config() {
    let ds = small_dataset(15);
    let cfg = small_config(17);
    let (cp, _) = train(&ds, &cfg).unwrap();
    let mut other = cfg.clone();
    other.learning_rate = 5e-4;
    other.epochs = 16;
    assert!(train_from(&ds, &other, Some(cp)).is_err());
}

#[test]
fn mismatched_batch_size_rejected() {
    let ds = small_dataset(19);
    let mut cfg = small_config(21);
    cfg.batch_size = ds.len() + 1;
    assert!(train(&ds, &cfg).is_err());
    cfg.batch_size = 1;
    assert!(train(&ds, &cfg).is_err());
}

#[test]
fn all_loss_modes_train() {
    let ds = small_dataset(23);
    for mode in [LossMode::NegOnly, LossMode::Nce, LossMode::AlignOnly] {
        let mut cfg = small_config(25);
        cfg.epochs = 3;
        cfg.loss.mode = mode;
        let (cp, _) = train(&ds, &cfg).unwrap();
        assert!(cp.loss_history.iter().all(|l| l.is_finite()), "{mode:?}");
    }
}

#[test]
fn gin_encoder_trains() {
    let ds = small_dataset(27);
    let mut cfg = small_config(29);
    cfg.epochs = 3;
    cfg.kind = EncoderKind::Gin;
    let (cp, _) = train(&ds, &cfg).unwrap();
    assert!(cp.loss_history.iter().all(|l| l.is_finite()));
}

#[test]
fn finetune_full_label_rate_is_supervised_boundary() {
    let ds = small_dataset(31);
    let cfg = small_config(33);
    let cp = initial_checkpoint(&ds, &cfg).unwrap();
    let fcfg = FinetuneConfig {
        epochs: 20,
        k_folds: 5,
        seed: 3,
        ..FinetuneConfig::default()
    };
    let report = semi_supervised_finetune(&ds, &cp, 1.0, &fcfg).unwrap();
    assert_eq!(report.effective_label_rate, 1.0);
    assert_eq!(report.fold_accuracies.len(), 5);
}

#[test]
fn finetune_label_rate_monotonicity_with_slack() {
    // More labels should not hurt (within desk-scale slack).
    let ds = make_synthetic_sbm(100, 20, 0.1, 0.4, 0.8, 41).unwrap();
    let mut cfg = small_config(43);
    cfg.epochs = 10;
    cfg.hidden_dims = vec![16, 16];
    let (cp, _) = train(&ds, &cfg).unwrap();
    let fcfg = FinetuneConfig {
        epochs: 40,
        k_folds: 5,
        seed: 5,
        ..FinetuneConfig::default()
    };
    let low = semi_supervised_finetune(&ds, &cp, 0.1, &fcfg).unwrap();
    let high = semi_supervised_finetune(&ds, &cp, 0.5, &fcfg).unwrap();
    assert!(
        high.mean >= low.mean - 0.03,
        "label rate 0.5 gave {:.4}, 0.1 gave {:.4}",
        high.mean,
        low.mean
    );
    assert!(low.effective_label_rate < 0.15);
    assert!((0.45..=0.55).contains(&high.effective_label_rate));
}

#[test]
fn finetune_pretrained_not_worse_than_random_init() {
    let ds = make_synthetic_sbm(100, 20, 0.1, 0.4, 0.8, 47).unwrap();
    let mut cfg = small_config(49);
    cfg.epochs = 15;
    cfg.hidden_dims = vec![16, 16];
    let (pretrained, _) = train(&ds, &cfg).unwrap();
    let random = initial_checkpoint(&ds, &cfg).unwrap();
    let fcfg = FinetuneConfig {
        epochs: 40,
        k_folds: 5,
        seed: 7,
        ..FinetuneConfig::default()
    };
    let with_pretrain = semi_supervised_finetune(&ds, &pretrained, 0.1, &fcfg).unwrap();
    let without = semi_supervised_finetune(&ds, &random, 0.1, &fcfg).unwrap();
    assert!(
        with_pretrain.mean >= without.mean - 0.02,
        "pretrained {:.4} vs random {:.4}",
        with_pretrain.mean,
        without.mean
    );
}

#[test]
fn probe_on_trained_embeddings_reproducible() {
    let ds = small_dataset(51);
    let cfg = small_config(53);
    let (cp, _) = train(&ds, &cfg).unwrap();
    let e1 = embed_dataset(&ds, &cp.params, 16).unwrap();
    let e2 = embed_dataset(&ds, &cp.params, 16).unwrap();
    assert_eq!(e1, e2);
    let r1 = linear_probe(&e1, &ds.labels(), 5, 9).unwrap();
    let r2 = linear_probe(&e2, &ds.labels(), 5, 9).unwrap();
    assert_eq!(r1.fold_accuracies, r2.fold_accuracies);
}
