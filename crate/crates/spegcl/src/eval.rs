//! Downstream evaluation of frozen or fine-tuned encoders.
//!
//! The probe is a softmax linear classifier trained by full-batch gradient
//! descent on frozen embeddings (500 steps, lr 0.1, L2 weight decay 1e-4)
//! under stratified k-fold cross-validation. It stands in for a kernel-SVM
//! protocol; every report carries a note saying so.
//!
//! `semi_supervised_finetune` continues training the encoder itself with a
//! linear head and cross-entropy on a stratified labeled subset, and
//! `ablation_run` maps the four ablation modes onto loss/encoder settings
//! and probes the resulting embeddings.

use serde::{Deserialize, Serialize};

use crate::encoder::{self, Embedding, EncoderKind};
use crate::error::{Error, Result};
use crate::graph::{batch, Dataset};
use crate::linalg::Matrix;
use crate::manifest::{config_hash, hash_hex};
use crate::objective::LossMode;
use crate::rng::{self, domain};
use crate::trainer::{adam_step, train, AdamState, Checkpoint, TrainConfig};

pub const PROBE_STEPS: usize = 500;
pub const PROBE_LR: f64 = 0.1;
pub const PROBE_WEIGHT_DECAY: f64 = 1e-4;

const PROBE_NOTE: &str =
    "classifier: softmax linear probe trained by full-batch gradient descent \
     (500 steps, lr 0.1, L2 weight decay 1e-4) on frozen embeddings; \
     stands in for a kernel-SVM evaluation";

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub mode: String,
    pub fold_accuracies: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub config_hash: String,
    pub effective_label_rate: f64,
    pub notes: Vec<String>,
}

impl EvalReport {
    fn from_folds(
        mode: &str,
        fold_accuracies: Vec<f64>,
        config_hash: String,
        effective_label_rate: f64,
        notes: Vec<String>,
    ) -> Self {
        let n = fold_accuracies.len() as f64;
        let mean = fold_accuracies.iter().sum::<f64>() / n;
        let var = if fold_accuracies.len() > 1 {
            fold_accuracies.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        EvalReport {
            mode: mode.to_string(),
            fold_accuracies,
            mean,
            std: var.sqrt(),
            config_hash,
            effective_label_rate,
            notes,
        }
    }
}

/// Stratified fold assignment: per class, shuffle then deal round-robin.
/// Every sample lands in exactly one fold and per-fold class counts differ
/// by at most one. Errors when any class has fewer samples than folds.
pub fn stratified_folds(labels: &[usize], k_folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k_folds < 2 {
        return Err(Error::Argument("k_folds must be at least 2".into()));
    }
    if labels.is_empty() {
        return Err(Error::Argument("no samples to fold".into()));
    }
    let num_classes = labels.iter().max().unwrap() + 1;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); k_folds];
    for (class, mut members) in by_class.into_iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        if members.len() < k_folds {
            return Err(Error::Stratification(format!(
                "class {class} has {} samples, fewer than {k_folds} folds",
                members.len()
            )));
        }
        let mut rng = rng::stream(seed, &[domain::FOLDS, class as u64]);
        fisher_yates(&mut members, &mut rng);
        for (pos, idx) in members.into_iter().enumerate() {
            folds[pos % k_folds].push(idx);
        }
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(folds)
}

fn fisher_yates(items: &mut [usize], rng: &mut impl rand::Rng) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}

/// Softmax classifier weights (one row per embedding dim, one column per
/// class) plus a bias row.
struct SoftmaxProbe {
    w: Matrix,
    b: Vec<f64>,
}

impl SoftmaxProbe {
    fn train(x: &Matrix, labels: &[usize], num_classes: usize) -> SoftmaxProbe {
        let (n, d) = (x.rows(), x.cols());
        let mut w = Matrix::zeros(d, num_classes);
        let mut b = vec![0.0; num_classes];
        for _ in 0..PROBE_STEPS {
            let mut grad_w = Matrix::zeros(d, num_classes);
            let mut grad_b = vec![0.0; num_classes];
            for i in 0..n {
                let p = softmax_row(x.row(i), &w, &b);
                for c in 0..num_classes {
                    let delta = p[c] - if labels[i] == c { 1.0 } else { 0.0 };
                    grad_b[c] += delta / n as f64;
                    for j in 0..d {
                        let g = grad_w.row_mut(j);
                        g[c] += delta * x.get(i, j) / n as f64;
                    }
                }
            }
            for j in 0..d {
                for c in 0..num_classes {
                    let g = grad_w.get(j, c) + PROBE_WEIGHT_DECAY * w.get(j, c);
                    w.set(j, c, w.get(j, c) - PROBE_LR * g);
                }
            }
            for c in 0..num_classes {
                b[c] -= PROBE_LR * grad_b[c];
            }
        }
        SoftmaxProbe { w, b }
    }

    fn predict(&self, row: &[f64]) -> usize {
        let scores = logits_row(row, &self.w, &self.b);
        let mut best = 0;
        for c in 1..scores.len() {
            if scores[c] > scores[best] {
                best = c;
            }
        }
        best
    }

    fn accuracy(&self, x: &Matrix, labels: &[usize]) -> f64 {
        let correct = (0..x.rows())
            .filter(|&i| self.predict(x.row(i)) == labels[i])
            .count();
        correct as f64 / x.rows() as f64
    }
}

fn logits_row(row: &[f64], w: &Matrix, b: &[f64]) -> Vec<f64> {
    let c = b.len();
    let mut out = b.to_vec();
    for (j, &xj) in row.iter().enumerate() {
        if xj == 0.0 {
            continue;
        }
        let wrow = w.row(j);
        for k in 0..c {
            out[k] += xj * wrow[k];
        }
    }
    out
}

fn softmax_row(row: &[f64], w: &Matrix, b: &[f64]) -> Vec<f64> {
    let mut s = logits_row(row, w, b);
    let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for v in s.iter_mut() {
        *v = (*v - m).exp();
        z += *v;
    }
    for v in s.iter_mut() {
        *v /= z;
    }
    s
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeOutcome {
    pub report: EvalReport,
    /// Mean accuracy on the training folds (sanity reference).
    pub train_mean: f64,
}

/// Frozen-embedding evaluation: stratified k-fold CV of a softmax linear
/// probe. Deterministic given the seed (fold assignment is the only
/// stochastic step; probe training starts from zeros).
pub fn linear_probe(
    embeddings: &[Embedding],
    labels: &[usize],
    k_folds: usize,
    seed: u64,
) -> Result<EvalReport> {
    linear_probe_detailed(embeddings, labels, k_folds, seed).map(|o| o.report)
}

pub fn linear_probe_detailed(
    embeddings: &[Embedding],
    labels: &[usize],
    k_folds: usize,
    seed: u64,
) -> Result<ProbeOutcome> {
    if embeddings.len() != labels.len() {
        return Err(Error::Argument(format!(
            "{} embeddings for {} labels",
            embeddings.len(),
            labels.len()
        )));
    }
    let folds = stratified_folds(labels, k_folds, seed)?;
    let num_classes = labels.iter().max().unwrap() + 1;
    let dim = embeddings[0].dim();
    let as_matrix = |idx: &[usize]| -> Matrix {
        let mut m = Matrix::zeros(idx.len(), dim);
        for (r, &i) in idx.iter().enumerate() {
            m.row_mut(r).copy_from_slice(embeddings[i].as_slice());
        }
        m
    };
    let pick = |idx: &[usize]| -> Vec<usize> { idx.iter().map(|&i| labels[i]).collect() };

    let mut fold_accuracies = Vec::with_capacity(k_folds);
    let mut train_accuracies = Vec::with_capacity(k_folds);
    for f in 0..k_folds {
        let test_idx = &folds[f];
        let train_idx: Vec<usize> = (0..k_folds)
            .filter(|&g| g != f)
            .flat_map(|g| folds[g].iter().copied())
            .collect();
        let probe = SoftmaxProbe::train(&as_matrix(&train_idx), &pick(&train_idx), num_classes);
        fold_accuracies.push(probe.accuracy(&as_matrix(test_idx), &pick(test_idx)));
        train_accuracies.push(probe.accuracy(&as_matrix(&train_idx), &pick(&train_idx)));
    }
    let train_mean = train_accuracies.iter().sum::<f64>() / k_folds as f64;
    let hash = hash_hex(config_hash(&(k_folds, seed, PROBE_STEPS)));
    Ok(ProbeOutcome {
        report: EvalReport::from_folds(
            "linear_probe",
            fold_accuracies,
            hash,
            1.0,
            vec![PROBE_NOTE.to_string()],
        ),
        train_mean,
    })
}

/// Encode a whole dataset in fixed-size chunks with frozen parameters.
pub fn embed_dataset(
    dataset: &Dataset,
    params: &crate::encoder::EncoderParams,
    chunk: usize,
) -> Result<Vec<Embedding>> {
    let chunk = chunk.max(1);
    let mut out = Vec::with_capacity(dataset.len());
    let indices: Vec<usize> = (0..dataset.len()).collect();
    for ids in indices.chunks(chunk) {
        let b = batch(dataset, ids)?;
        out.extend(encoder::encode(&b, params)?);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Semi-supervised fine-tuning
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FinetuneConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub adam_betas: (f64, f64),
    pub adam_eps: f64,
    pub k_folds: usize,
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig {
            epochs: 60,
            learning_rate: 1e-2,
            adam_betas: (0.9, 0.999),
            adam_eps: 1e-8,
            k_folds: 10,
            seed: 7,
        }
    }
}

/// Stratified subsample of `pool` at `rate`; errors if a class would end up
/// with no labeled sample.
fn stratified_subsample(
    pool: &[usize],
    labels: &[usize],
    rate: f64,
    seed: u64,
) -> Result<Vec<usize>> {
    let num_classes = pool.iter().map(|&i| labels[i]).max().unwrap() + 1;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for &i in pool {
        by_class[labels[i]].push(i);
    }
    let mut picked = Vec::new();
    for (class, mut members) in by_class.into_iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        let want = (members.len() as f64 * rate).round() as usize;
        if want == 0 {
            return Err(Error::Stratification(format!(
                "label rate {rate} leaves class {class} without labeled samples"
            )));
        }
        let mut rng = rng::stream(seed, &[domain::LABEL_SUBSET, class as u64]);
        fisher_yates(&mut members, &mut rng);
        picked.extend(members.into_iter().take(want));
    }
    picked.sort_unstable();
    Ok(picked)
}

/// Fine-tune the encoder plus a linear head with cross-entropy on a
/// stratified `label_rate` fraction of each fold's training split, then
/// report test accuracy under k-fold CV.
pub fn semi_supervised_finetune(
    dataset: &Dataset,
    checkpoint: &Checkpoint,
    label_rate: f64,
    cfg: &FinetuneConfig,
) -> Result<EvalReport> {
    if !(label_rate > 0.0 && label_rate <= 1.0) {
        return Err(Error::Argument(format!(
            "label_rate {label_rate} outside (0, 1]"
        )));
    }
    if checkpoint.params.layer_dims[0] != dataset.feature_dim() {
        return Err(Error::Argument(format!(
            "checkpoint expects {}-dimensional features, dataset has {}",
            checkpoint.params.layer_dims[0],
            dataset.feature_dim()
        )));
    }
    let labels = dataset.labels();
    let num_classes = dataset.num_classes();
    let folds = stratified_folds(&labels, cfg.k_folds, cfg.seed)?;

    let mut fold_accuracies = Vec::with_capacity(cfg.k_folds);
    let mut effective_rates = Vec::with_capacity(cfg.k_folds);
    for f in 0..cfg.k_folds {
        let test_idx = &folds[f];
        let pool: Vec<usize> = (0..cfg.k_folds)
            .filter(|&g| g != f)
            .flat_map(|g| folds[g].iter().copied())
            .collect();
        let labeled = stratified_subsample(
            &pool,
            &labels,
            label_rate,
            rng::derive(cfg.seed, &[f as u64]),
        )?;
        effective_rates.push(labeled.len() as f64 / pool.len() as f64);

        let mut params = checkpoint.params.clone();
        let emb_dim = params.emb_dim;
        let mut head_w = Matrix::zeros(emb_dim, num_classes);
        let mut head_b = vec![0.0; num_classes];
        let enc_len = params.flat_len();
        let total_len = enc_len + emb_dim * num_classes + num_classes;
        let mut adam = AdamState::new(total_len);

        for _epoch in 0..cfg.epochs {
            let b = batch(dataset, &labeled)?;
            let (embs, cache) = encoder::encode_with_cache(&b, &params)?;
            let n = labeled.len() as f64;

            // Cross-entropy over the labeled subset.
            let mut upstream = vec![vec![0.0; emb_dim]; labeled.len()];
            let mut grad_w = Matrix::zeros(emb_dim, num_classes);
            let mut grad_b = vec![0.0; num_classes];
            for (row, &gi) in labeled.iter().enumerate() {
                let p = softmax_row(embs[row].as_slice(), &head_w, &head_b);
                for c in 0..num_classes {
                    let delta = (p[c] - if labels[gi] == c { 1.0 } else { 0.0 }) / n;
                    grad_b[c] += delta;
                    for j in 0..emb_dim {
                        let g = grad_w.row_mut(j);
                        g[c] += delta * embs[row].as_slice()[j];
                        upstream[row][j] += delta * head_w.get(j, c);
                    }
                }
            }
            let enc_grads = encoder::encode_backward(&b, &params, &cache, &upstream)?;

            let mut flat = params.flatten();
            flat.extend_from_slice(head_w.data());
            flat.extend_from_slice(&head_b);
            let mut gflat = enc_grads.flatten();
            gflat.extend_from_slice(grad_w.data());
            gflat.extend_from_slice(&grad_b);
            adam_step(
                &mut flat,
                &gflat,
                &mut adam,
                cfg.learning_rate,
                cfg.adam_betas,
                cfg.adam_eps,
            )?;
            params.unflatten(&flat[..enc_len])?;
            head_w
                .data_mut()
                .copy_from_slice(&flat[enc_len..enc_len + emb_dim * num_classes]);
            head_b.copy_from_slice(&flat[enc_len + emb_dim * num_classes..]);
        }

        // Test accuracy with the fine-tuned encoder and head.
        let tb = batch(dataset, test_idx)?;
        let test_embs = encoder::encode(&tb, &params)?;
        let probe = SoftmaxProbe {
            w: head_w,
            b: head_b,
        };
        let correct = test_idx
            .iter()
            .enumerate()
            .filter(|&(row, &gi)| probe.predict(test_embs[row].as_slice()) == labels[gi])
            .count();
        fold_accuracies.push(correct as f64 / test_idx.len() as f64);
    }

    let effective = effective_rates.iter().sum::<f64>() / effective_rates.len() as f64;
    let hash = hash_hex(config_hash(&(cfg, label_rate)));
    Ok(EvalReport::from_folds(
        "semi_supervised_finetune",
        fold_accuracies,
        hash,
        effective,
        vec![format!(
            "encoder fine-tuned with cross-entropy on a stratified {:.1}% labeled subset",
            100.0 * label_rate
        )],
    ))
}

// ---------------------------------------------------------------------------
// Ablation harness
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationMode {
    PosAndNeg,
    NoNeg,
    NoPos,
    NoFourierGnn,
}

pub const ALL_ABLATION_MODES: [AblationMode; 4] = [
    AblationMode::PosAndNeg,
    AblationMode::NoNeg,
    AblationMode::NoPos,
    AblationMode::NoFourierGnn,
];

impl AblationMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            AblationMode::PosAndNeg => "pos_and_neg",
            AblationMode::NoNeg => "no_neg",
            AblationMode::NoPos => "no_pos",
            AblationMode::NoFourierGnn => "no_fouriergnn",
        }
    }

    /// Human row label for aggregate tables.
    pub fn label(&self) -> &'static str {
        match self {
            AblationMode::PosAndNeg => "w Pos/Neg",
            AblationMode::NoNeg => "w/o Neg",
            AblationMode::NoPos => "w/o Pos",
            AblationMode::NoFourierGnn => "w/o FourierGNN",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "pos_and_neg" => Ok(AblationMode::PosAndNeg),
            "no_neg" => Ok(AblationMode::NoNeg),
            "no_pos" => Ok(AblationMode::NoPos),
            "no_fouriergnn" => Ok(AblationMode::NoFourierGnn),
            other => Err(Error::Argument(format!("unknown ablation mode '{other}'"))),
        }
    }

    /// The loss/encoder settings this mode implies on top of a base config.
    pub fn apply(&self, base: &TrainConfig) -> TrainConfig {
        let mut cfg = base.clone();
        match self {
            AblationMode::PosAndNeg => cfg.loss.mode = LossMode::Nce,
            AblationMode::NoNeg => cfg.loss.mode = LossMode::AlignOnly,
            AblationMode::NoPos => cfg.loss.mode = LossMode::NegOnly,
            AblationMode::NoFourierGnn => {
                cfg.loss.mode = LossMode::NegOnly;
                cfg.kind = EncoderKind::Gin;
            }
        }
        cfg
    }
}

/// Everything one ablation run produces.
#[derive(Debug, Clone, Serialize)]
pub struct AblationOutcome {
    pub report: EvalReport,
    pub loss_history: Vec<f64>,
    /// Mean pairwise embedding similarity (collapse indicator).
    pub mean_pairwise_similarity: f64,
}

/// Train under one ablation mode and probe the resulting embeddings.
pub fn ablation_run(
    dataset: &Dataset,
    mode: AblationMode,
    base: &TrainConfig,
    probe_folds: usize,
    probe_seed: u64,
) -> Result<AblationOutcome> {
    let cfg = mode.apply(base);
    let (checkpoint, _) = train(dataset, &cfg)?;
    let embeddings = embed_dataset(dataset, &checkpoint.params, 64)?;
    let mut report = linear_probe(&embeddings, &dataset.labels(), probe_folds, probe_seed)?;
    report.mode = mode.as_str().to_string();
    let mut notes = vec![format!("ablation row: {}", mode.label())];
    notes.push("mode table: pos_and_neg='w Pos/Neg', no_neg='w/o Neg', no_pos='w/o Pos', no_fouriergnn='w/o FourierGNN'".to_string());
    notes.extend(report.notes);
    report.notes = notes;
    report.config_hash = hash_hex(cfg.hash());
    Ok(AblationOutcome {
        report,
        mean_pairwise_similarity: crate::objective::mean_pairwise_similarity(&embeddings),
        loss_history: checkpoint.loss_history,
    })
}
