//! Pilot measurements behind the desk-scale acceptance thresholds.
//! Run manually: `cargo test -p spegcl --release --test pilot -- --ignored --nocapture`

use spegcl::eval::{embed_dataset, linear_probe};
use spegcl::graph::make_synthetic_sbm;
use spegcl::trainer::{initial_checkpoint, train, TrainConfig};

#[test]
#[ignore]
fn pilot_trained_vs_untrained_probe() {
    let noise = 2.0;
    for ds_seed in [10u64, 11] {
        for train_seed in [1u64, 2, 3, 4, 5] {
            for probe_seed in [42u64, 43] {
                let ds = make_synthetic_sbm(200, 30, 0.1, 0.3, noise, ds_seed).unwrap();
                let cfg = TrainConfig { seed: train_seed, ..TrainConfig::default() };

                let untrained = initial_checkpoint(&ds, &cfg).unwrap();
                let e0 = embed_dataset(&ds, &untrained.params, 64).unwrap();
                let r0 = linear_probe(&e0, &ds.labels(), 10, probe_seed).unwrap();

                let (trained, _) = train(&ds, &cfg).unwrap();
                let e1 = embed_dataset(&ds, &trained.params, 64).unwrap();
                let r1 = linear_probe(&e1, &ds.labels(), 10, probe_seed).unwrap();

                let first = trained.loss_history.first().unwrap();
                let last = trained.loss_history.last().unwrap();
                println!(
                    "ds_seed={ds_seed} train_seed={train_seed} probe_seed={probe_seed}: untrained {:.4}  trained {:.4}  gap {:+.4}  loss {:.4}->{:.4}",
                    r0.mean, r1.mean, r1.mean - r0.mean, first, last
                );
            }
        }
    }
}
