//! Self-supervised training loop: augment, encode both views, take the
//! contrastive loss, backpropagate, Adam-update. Fully deterministic under
//! a fixed seed, and resumable: every stochastic choice is keyed by
//! (seed, epoch, index) substreams rather than consumed RNG state, so a
//! checkpointed run continues bit-exactly.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::augment::{make_view_pair, AugmentConfig};
use crate::encoder::{
    encode_backward, encode_with_cache, init_params, EncoderKind, EncoderParams,
};
use crate::error::{Error, Result};
use crate::graph::{batch_graphs, Dataset};
use crate::manifest::config_hash;
use crate::objective::{loss_and_grad, LossConfig};
use crate::rng::{self, domain};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
    pub seed: u64,
    pub augment: AugmentConfig,
    pub loss: LossConfig,
    /// Hidden layer widths; the input width comes from the dataset.
    pub hidden_dims: Vec<usize>,
    pub emb_dim: usize,
    pub kind: EncoderKind,
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 60,
            batch_size: 32,
            learning_rate: 1e-3,
            adam_betas: (0.9, 0.999),
            adam_eps: 1e-8,
            seed: 1,
            augment: AugmentConfig::default(),
            loss: LossConfig::default(),
            hidden_dims: vec![32, 32],
            emb_dim: 16,
            kind: EncoderKind::Fourier,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, dataset_len: usize) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Argument("epochs must be at least 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::Argument("batch_size must be at least 2".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Argument(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.hidden_dims.is_empty() {
            return Err(Error::Argument("at least one hidden layer is required".into()));
        }
        self.augment.validate()?;
        self.loss.validate()?;
        // Dataset-dependent constraint last, so scalar misconfigurations
        // are reported regardless of the dataset at hand.
        if dataset_len > 0 && self.batch_size > dataset_len {
            return Err(Error::Argument(format!(
                "batch_size {} exceeds dataset size {dataset_len}",
                self.batch_size
            )));
        }
        Ok(())
    }

    /// Hash of everything that pins the training trajectory per epoch.
    /// The horizon (`epochs`) and checkpoint cadence are excluded, so a
    /// checkpoint taken mid-run can be resumed toward a longer horizon.
    pub fn hash(&self) -> u64 {
        let mut normalized = self.clone();
        normalized.epochs = 0;
        normalized.checkpoint_every = 0;
        config_hash(&normalized)
    }
}

/// A checkpoint at epoch 0: freshly initialized parameters and empty
/// optimizer state. The untrained baseline for evaluation comparisons.
pub fn initial_checkpoint(dataset: &Dataset, cfg: &TrainConfig) -> Result<Checkpoint> {
    cfg.validate(dataset.len())?;
    let mut dims = Vec::with_capacity(cfg.hidden_dims.len() + 1);
    dims.push(dataset.feature_dim());
    dims.extend_from_slice(&cfg.hidden_dims);
    let params = init_params(&dims, cfg.emb_dim, cfg.kind, rng::derive(cfg.seed, &[domain::INIT]))?;
    let n = params.flat_len();
    Ok(Checkpoint {
        params,
        adam: AdamState::new(n),
        config_hash: cfg.hash(),
        base_seed: cfg.seed,
        next_epoch: 0,
        loss_history: Vec::new(),
    })
}

/// Adam first/second moments plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }
}

/// One bias-corrected Adam update applied elementwise. Complex filter
/// channels are plain entries of the flattened parameter vector. Rejects
/// non-finite gradients before touching any state.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    lr: f64,
    betas: (f64, f64),
    eps: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Argument(format!(
            "adam shape mismatch: {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numeric(
            "non-finite gradient; optimizer step aborted".into(),
        ));
    }
    let (b1, b2) = betas;
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - b1.powi(t);
    let bc2 = 1.0 - b2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub wall_ms: u128,
}

/// Resumable training state.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub params: EncoderParams,
    pub adam: AdamState,
    pub config_hash: u64,
    pub base_seed: u64,
    /// Epoch index the next step of training would run.
    pub next_epoch: usize,
    pub loss_history: Vec<f64>,
}

/// Train from scratch.
pub fn train(dataset: &Dataset, cfg: &TrainConfig) -> Result<(Checkpoint, Vec<EpochStats>)> {
    train_from(dataset, cfg, None)
}

/// Continue a checkpointed run (or start fresh with `None`) up to
/// `cfg.epochs`. Resuming replays exactly the epochs the uninterrupted run
/// would have executed, so the final state is bit-identical.
pub fn train_from(
    dataset: &Dataset,
    cfg: &TrainConfig,
    resume: Option<Checkpoint>,
) -> Result<(Checkpoint, Vec<EpochStats>)> {
    if dataset.is_empty() {
        return Err(Error::Argument("dataset is empty".into()));
    }
    cfg.validate(dataset.len())?;
    let cfg_hash = cfg.hash();

    let (mut params, mut adam, start_epoch, mut loss_history) = match resume {
        Some(cp) => {
            if cp.config_hash != cfg_hash {
                return Err(Error::Argument(
                    "checkpoint was produced under a different configuration".into(),
                ));
            }
            (cp.params, cp.adam, cp.next_epoch, cp.loss_history)
        }
        None => {
            let mut dims = Vec::with_capacity(cfg.hidden_dims.len() + 1);
            dims.push(dataset.feature_dim());
            dims.extend_from_slice(&cfg.hidden_dims);
            let params = init_params(&dims, cfg.emb_dim, cfg.kind, rng::derive(cfg.seed, &[domain::INIT]))?;
            let n = params.flat_len();
            (params, AdamState::new(n), 0, Vec::new())
        }
    };
    if start_epoch > cfg.epochs {
        return Err(Error::Argument(format!(
            "checkpoint is already at epoch {start_epoch}, beyond the requested {}",
            cfg.epochs
        )));
    }

    let mut stats = Vec::new();
    for epoch in start_epoch..cfg.epochs {
        let t0 = Instant::now();
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        shuffle(&mut order, rng::derive(cfg.seed, &[domain::SHUFFLE, epoch as u64]));

        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            // A trailing chunk of one graph has no negatives; skip it.
            if chunk.len() < 2 {
                continue;
            }
            let loss = train_step(dataset, cfg, &mut params, &mut adam, epoch, batch_idx, chunk)
                .map_err(|e| match e {
                    Error::Numeric(msg) => Error::Numeric(format!(
                        "epoch {epoch} batch {batch_idx}: {msg}"
                    )),
                    other => other,
                })?;
            loss_sum += loss;
            batches += 1;
        }
        let mean_loss = loss_sum / batches as f64;
        if !mean_loss.is_finite() {
            return Err(Error::Numeric(format!(
                "epoch {epoch}: mean loss is not finite"
            )));
        }
        loss_history.push(mean_loss);
        stats.push(EpochStats {
            epoch,
            mean_loss,
            wall_ms: t0.elapsed().as_millis(),
        });
    }

    Ok((
        Checkpoint {
            params,
            adam,
            config_hash: cfg_hash,
            base_seed: cfg.seed,
            next_epoch: cfg.epochs,
            loss_history,
        },
        stats,
    ))
}

fn train_step(
    dataset: &Dataset,
    cfg: &TrainConfig,
    params: &mut EncoderParams,
    adam: &mut AdamState,
    epoch: usize,
    batch_idx: usize,
    chunk: &[usize],
) -> Result<f64> {
    let mut views_a = Vec::with_capacity(chunk.len());
    let mut views_b = Vec::with_capacity(chunk.len());
    for &gi in chunk {
        let view_cfg = AugmentConfig {
            seed: rng::derive(cfg.augment.seed, &[epoch as u64, gi as u64]),
            ..cfg.augment
        };
        let (a, b) = make_view_pair(dataset.graph(gi), &view_cfg)?;
        views_a.push(a);
        views_b.push(b);
    }
    let batch_a = batch_graphs(views_a.iter())?;
    let batch_b = batch_graphs(views_b.iter())?;
    let (emb_a, cache_a) = encode_with_cache(&batch_a, params)?;
    let (emb_b, cache_b) = encode_with_cache(&batch_b, params)?;
    let step_seed = rng::derive(cfg.seed, &[domain::NEGATIVES, epoch as u64, batch_idx as u64]);
    let (loss, grad_a, grad_b) = loss_and_grad(&emb_a, &emb_b, &cfg.loss, step_seed)?;

    let mut grads = encode_backward(&batch_a, params, &cache_a, &grad_a)?;
    grads.add_assign(&encode_backward(&batch_b, params, &cache_b, &grad_b)?);

    let mut flat = params.flatten();
    adam_step(
        &mut flat,
        &grads.flatten(),
        adam,
        cfg.learning_rate,
        cfg.adam_betas,
        cfg.adam_eps,
    )?;
    params.unflatten(&flat)?;
    Ok(loss)
}

/// Fisher-Yates with a derived stream.
fn shuffle(indices: &mut [usize], seed: u64) {
    use rand::Rng;
    let mut rng = rng::stream(seed, &[]);
    for i in (1..indices.len()).rev() {
        let j = rng.random_range(0..=i);
        indices.swap(i, j);
    }
}

// ---------------------------------------------------------------------------
// Checkpoint serialization (versioned little-endian binary)
// ---------------------------------------------------------------------------

const CHECKPOINT_MAGIC: &[u8; 4] = b"SPGC";
const CHECKPOINT_VERSION: u32 = 1;

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        buf.extend_from_slice(&self.config_hash.to_le_bytes());
        buf.extend_from_slice(&self.base_seed.to_le_bytes());
        buf.extend_from_slice(&(self.next_epoch as u64).to_le_bytes());
        let kind: u8 = match self.params.kind {
            EncoderKind::Fourier => 0,
            EncoderKind::Gcn => 1,
            EncoderKind::Gin => 2,
        };
        buf.push(kind);
        buf.extend_from_slice(&(self.params.emb_dim as u64).to_le_bytes());
        buf.extend_from_slice(&self.params.init_seed.to_le_bytes());
        buf.extend_from_slice(&(self.params.layer_dims.len() as u64).to_le_bytes());
        for &d in &self.params.layer_dims {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        buf.extend_from_slice(&self.adam.step.to_le_bytes());
        let flat = self.params.flatten();
        buf.extend_from_slice(&(flat.len() as u64).to_le_bytes());
        for &x in flat.iter().chain(&self.adam.m).chain(&self.adam.v) {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        buf.extend_from_slice(&(self.loss_history.len() as u64).to_le_bytes());
        for &x in &self.loss_history {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        let mut f = fs::File::create(path)?;
        f.write_all(&buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let mut bytes = Vec::new();
        fs::File::open(path)
            .map_err(|e| Error::Ingest(format!("cannot open checkpoint {}: {e}", path.display())))?
            .read_to_end(&mut bytes)?;
        let mut pos = 0usize;
        let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
            if *pos + n > bytes.len() {
                return Err(Error::Format {
                    file: path.display().to_string(),
                    line: 0,
                    msg: "truncated checkpoint".into(),
                });
            }
            let s = &bytes[*pos..*pos + n];
            *pos += n;
            Ok(s)
        };
        let u64_at = |pos: &mut usize| -> Result<u64> {
            Ok(u64::from_le_bytes(take(pos, 8)?.try_into().unwrap()))
        };
        let f64_at = |pos: &mut usize| -> Result<f64> {
            Ok(f64::from_le_bytes(take(pos, 8)?.try_into().unwrap()))
        };

        if take(&mut pos, 4)? != CHECKPOINT_MAGIC {
            return Err(Error::Format {
                file: path.display().to_string(),
                line: 0,
                msg: "not a checkpoint file".into(),
            });
        }
        let version = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format {
                file: path.display().to_string(),
                line: 0,
                msg: format!("unsupported checkpoint version {version}"),
            });
        }
        let config_hash = u64_at(&mut pos)?;
        let base_seed = u64_at(&mut pos)?;
        let next_epoch = u64_at(&mut pos)? as usize;
        let kind = match take(&mut pos, 1)?[0] {
            0 => EncoderKind::Fourier,
            1 => EncoderKind::Gcn,
            2 => EncoderKind::Gin,
            k => {
                return Err(Error::Format {
                    file: path.display().to_string(),
                    line: 0,
                    msg: format!("unknown encoder kind tag {k}"),
                })
            }
        };
        let emb_dim = u64_at(&mut pos)? as usize;
        let init_seed = u64_at(&mut pos)?;
        let n_dims = u64_at(&mut pos)? as usize;
        let mut layer_dims = Vec::with_capacity(n_dims);
        for _ in 0..n_dims {
            layer_dims.push(u64_at(&mut pos)? as usize);
        }
        let adam_step_count = u64_at(&mut pos)?;
        let flat_len = u64_at(&mut pos)? as usize;

        let mut params = init_params(&layer_dims, emb_dim, kind, init_seed)?;
        if flat_len != params.flat_len() {
            return Err(Error::Format {
                file: path.display().to_string(),
                line: 0,
                msg: format!(
                    "parameter count {flat_len} does not match architecture ({})",
                    params.flat_len()
                ),
            });
        }
        let read_vec = |pos: &mut usize, n: usize| -> Result<Vec<f64>> {
            let mut v = Vec::with_capacity(n);
            for _ in 0..n {
                v.push(f64_at(pos)?);
            }
            Ok(v)
        };
        let flat = read_vec(&mut pos, flat_len)?;
        let m = read_vec(&mut pos, flat_len)?;
        let v = read_vec(&mut pos, flat_len)?;
        params.unflatten(&flat)?;
        let hist_len = u64_at(&mut pos)? as usize;
        let loss_history = read_vec(&mut pos, hist_len)?;

        Ok(Checkpoint {
            params,
            adam: AdamState {
                m,
                v,
                step: adam_step_count,
            },
            config_hash,
            base_seed,
            next_epoch,
            loss_history,
        })
    }
}

/// Write per-epoch statistics as CSV (`epoch,mean_loss`). Wall times are
/// deliberately not part of this artifact: numeric outputs must be
/// byte-identical across reruns, so timings live only in run manifests.
pub fn history_csv(stats: &[EpochStats]) -> String {
    let mut out = String::from("epoch,mean_loss\n");
    for s in stats {
        out.push_str(&format!("{},{:?}\n", s.epoch, s.mean_loss));
    }
    out
}
