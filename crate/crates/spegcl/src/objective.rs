//! Contrastive objectives over unit-norm embeddings.
//!
//! Two main losses share one softmax core:
//! - `info_nce`: the classic one-positive-many-negatives loss.
//! - `l_u`: the positive-free variant in which the positive-similarity term
//!   is replaced by its upper-bound constant `e^{1/tau}`; only negatives
//!   carry gradient. Since similarities of unit vectors never exceed 1,
//!   `l_u <= info_nce` holds for every single draw, and the gap is bounded
//!   by `(1/tau)(1 - aᵀp)`.
//!
//! `align_only` (attraction with no uniformity term) exists solely for the
//! ablation harness; training on it alone collapses embeddings, which is
//! the point of that ablation.
//!
//! Everything is computed with max-subtraction, so temperatures down to
//! 0.05 stay finite.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::encoder::Embedding;
use crate::error::{Error, Result};
use crate::rng::{self, domain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    /// One positive plus sampled negatives.
    Nce,
    /// Negatives only; the positive term is the constant bound.
    NegOnly,
    /// Attraction only (ablation; collapses on its own).
    AlignOnly,
}

impl LossMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            LossMode::Nce => "nce",
            LossMode::NegOnly => "neg_only",
            LossMode::AlignOnly => "align_only",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "nce" => Ok(LossMode::Nce),
            "neg_only" => Ok(LossMode::NegOnly),
            "align_only" => Ok(LossMode::AlignOnly),
            other => Err(Error::Argument(format!("unknown loss mode '{other}'"))),
        }
    }
}

/// Where negatives for an anchor come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativePolicy {
    /// Only the other view (the anchor's counterpart excluded).
    CrossView,
    /// Other view plus the anchor's own view (anchor and counterpart
    /// excluded).
    CrossAndInView,
}

impl NegativePolicy {
    pub fn as_str(&self) -> &'static str {
        match self {
            NegativePolicy::CrossView => "cross_view",
            NegativePolicy::CrossAndInView => "cross_and_in_view",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "cross_view" => Ok(NegativePolicy::CrossView),
            "cross_and_in_view" => Ok(NegativePolicy::CrossAndInView),
            other => Err(Error::Argument(format!("unknown negative policy '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub tau: f64,
    /// Requested negatives per anchor; truncated to the eligible pool.
    pub m_negatives: usize,
    pub mode: LossMode,
    pub policy: NegativePolicy,
    /// Average the A->B and B->A directions.
    pub symmetrize: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        // cross_and_in_view negatives by default: with cross-view only, a
        // weight-shared encoder can park the two views on antipodal
        // clusters and zero the loss without learning anything; in-view
        // repulsion closes that shortcut (observable in the pilot runs).
        LossConfig {
            tau: 0.2,
            m_negatives: 100,
            mode: LossMode::NegOnly,
            policy: NegativePolicy::CrossAndInView,
            symmetrize: true,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::Argument(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        if self.m_negatives == 0 {
            return Err(Error::Argument("m_negatives must be at least 1".into()));
        }
        Ok(())
    }
}

/// `log(sum_i exp(t_i))` with max-subtraction.
fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

fn validate_tau_negatives(tau: f64, negatives: usize) -> Result<()> {
    if !(tau > 0.0) {
        return Err(Error::Argument(format!("tau must be positive, got {tau}")));
    }
    if negatives == 0 {
        return Err(Error::Argument("at least one negative is required".into()));
    }
    Ok(())
}

/// Classic contrastive loss
/// `-log( e^{aᵀp/τ} / (e^{aᵀp/τ} + Σ_i e^{aᵀn_i/τ}) )`.
pub fn info_nce(
    anchor: &Embedding,
    positive: &Embedding,
    negatives: &[Embedding],
    tau: f64,
) -> Result<f64> {
    validate_tau_negatives(tau, negatives.len())?;
    let sp = anchor.dot(positive) / tau;
    let mut terms = Vec::with_capacity(negatives.len() + 1);
    terms.push(sp);
    for n in negatives {
        terms.push(anchor.dot(n) / tau);
    }
    Ok(log_sum_exp(&terms) - sp)
}

/// Positive-free loss
/// `-1/τ + log( e^{1/τ} + Σ_i e^{aᵀn_i/τ} )`.
///
/// No positive embedding is consumed: the alignment term is replaced by its
/// upper-bound constant.
pub fn l_u(anchor: &Embedding, negatives: &[Embedding], tau: f64) -> Result<f64> {
    validate_tau_negatives(tau, negatives.len())?;
    let mut terms = Vec::with_capacity(negatives.len() + 1);
    terms.push(1.0 / tau);
    for n in negatives {
        terms.push(anchor.dot(n) / tau);
    }
    Ok(log_sum_exp(&terms) - 1.0 / tau)
}

/// A sampled negative: which view it lives in and its index there.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NegativeRef {
    OtherView(usize),
    SameView(usize),
}

/// Sample up to `m` negatives for one anchor, uniformly without
/// replacement from the eligible pool. The anchor and its positive
/// counterpart are never eligible. If `m` exceeds the pool, the whole pool
/// is returned (documented truncation). Deterministic given the seed.
pub fn sample_negatives(
    batch_size: usize,
    anchor: usize,
    m: usize,
    policy: NegativePolicy,
    seed: u64,
) -> Result<Vec<NegativeRef>> {
    if batch_size < 2 {
        return Err(Error::Argument(
            "no negatives available: batch must contain at least 2 graphs".into(),
        ));
    }
    if anchor >= batch_size {
        return Err(Error::Argument(format!(
            "anchor {anchor} outside batch 0..{batch_size}"
        )));
    }
    let mut pool: Vec<NegativeRef> = Vec::new();
    for j in 0..batch_size {
        if j != anchor {
            pool.push(NegativeRef::OtherView(j));
        }
    }
    if policy == NegativePolicy::CrossAndInView {
        for j in 0..batch_size {
            if j != anchor {
                pool.push(NegativeRef::SameView(j));
            }
        }
    }
    if m >= pool.len() {
        return Ok(pool);
    }
    let mut rng = rng::stream(seed, &[domain::NEGATIVES, anchor as u64]);
    pool.shuffle(&mut rng);
    pool.truncate(m);
    Ok(pool)
}

/// Loss and analytic gradients over a pair of aligned views.
///
/// Anchors come from view A (and from view B too when `symmetrize`); the
/// positive counterpart of anchor `i` is index `i` in the other view.
/// Negatives are drawn per anchor by [`sample_negatives`] on substreams of
/// `step_seed`. Returns the mean loss and one gradient per embedding in
/// each view.
pub fn loss_and_grad(
    view_a: &[Embedding],
    view_b: &[Embedding],
    cfg: &LossConfig,
    step_seed: u64,
) -> Result<(f64, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    cfg.validate()?;
    if view_a.len() != view_b.len() {
        return Err(Error::Argument("views must have equal length".into()));
    }
    let b = view_a.len();
    if b < 2 {
        return Err(Error::Argument(
            "no negatives available: batch must contain at least 2 graphs".into(),
        ));
    }
    let dim = view_a[0].dim();
    let mut grad_a = vec![vec![0.0; dim]; b];
    let mut grad_b = vec![vec![0.0; dim]; b];
    let mut total = 0.0;

    let directions: &[bool] = if cfg.symmetrize { &[true, false] } else { &[true] };
    let dir_weight = 1.0 / directions.len() as f64;

    for &a_to_b in directions {
        let (anchors, others) = if a_to_b {
            (view_a, view_b)
        } else {
            (view_b, view_a)
        };
        let per_anchor = dir_weight / b as f64;
        for i in 0..b {
            let anchor = &anchors[i];
            let dir_tag = if a_to_b { 0u64 } else { 1u64 };
            let negs = sample_negatives(
                b,
                i,
                cfg.m_negatives,
                cfg.policy,
                rng::derive(step_seed, &[dir_tag]),
            )?;
            let resolve = |r: &NegativeRef| -> &Embedding {
                match *r {
                    NegativeRef::OtherView(j) => &others[j],
                    NegativeRef::SameView(j) => &anchors[j],
                }
            };

            // Per-similarity loss derivatives.
            let mut add_grad = |who: &NegativeRef, coef: f64, anchor_grad: &mut Vec<f64>| {
                // d(loss)/d(similarity) = coef; similarity = anchorᵀother.
                let other = resolve(who);
                for c in 0..dim {
                    anchor_grad[c] += coef * other.as_slice()[c];
                }
                let target = match (*who, a_to_b) {
                    (NegativeRef::OtherView(j), true) => &mut grad_b[j],
                    (NegativeRef::OtherView(j), false) => &mut grad_a[j],
                    (NegativeRef::SameView(j), true) => &mut grad_a[j],
                    (NegativeRef::SameView(j), false) => &mut grad_b[j],
                };
                for c in 0..dim {
                    target[c] += coef * anchor.as_slice()[c];
                }
            };

            let mut anchor_grad = vec![0.0; dim];
            match cfg.mode {
                LossMode::NegOnly => {
                    let head = 1.0 / cfg.tau;
                    let mut terms = Vec::with_capacity(negs.len() + 1);
                    terms.push(head);
                    for r in &negs {
                        terms.push(anchor.dot(resolve(r)) / cfg.tau);
                    }
                    let lse = log_sum_exp(&terms);
                    total += per_anchor * (lse - head);
                    for (k, r) in negs.iter().enumerate() {
                        let p = (terms[k + 1] - lse).exp();
                        add_grad(r, per_anchor * p / cfg.tau, &mut anchor_grad);
                    }
                }
                LossMode::Nce => {
                    let positive = &others[i];
                    let sp = anchor.dot(positive) / cfg.tau;
                    let mut terms = Vec::with_capacity(negs.len() + 1);
                    terms.push(sp);
                    for r in &negs {
                        terms.push(anchor.dot(resolve(r)) / cfg.tau);
                    }
                    let lse = log_sum_exp(&terms);
                    total += per_anchor * (lse - sp);
                    let p_pos = (sp - lse).exp();
                    let coef_pos = per_anchor * (p_pos - 1.0) / cfg.tau;
                    add_grad(&NegativeRef::OtherView(i), coef_pos, &mut anchor_grad);
                    for (k, r) in negs.iter().enumerate() {
                        let p = (terms[k + 1] - lse).exp();
                        add_grad(r, per_anchor * p / cfg.tau, &mut anchor_grad);
                    }
                }
                LossMode::AlignOnly => {
                    let positive = &others[i];
                    total += per_anchor * (-anchor.dot(positive) / cfg.tau);
                    add_grad(
                        &NegativeRef::OtherView(i),
                        -per_anchor / cfg.tau,
                        &mut anchor_grad,
                    );
                }
            }
            let anchor_target = if a_to_b { &mut grad_a[i] } else { &mut grad_b[i] };
            for c in 0..dim {
                anchor_target[c] += anchor_grad[c];
            }
        }
    }

    if !total.is_finite() {
        return Err(Error::Numeric(format!("loss is not finite: {total}")));
    }
    Ok((total, grad_a, grad_b))
}

/// Mean pairwise cosine similarity of a set of unit embeddings; the
/// collapse indicator used by the ablation harness.
pub fn mean_pairwise_similarity(embeddings: &[Embedding]) -> f64 {
    let n = embeddings.len();
    if n < 2 {
        return 1.0;
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..n {
        for j in (i + 1)..n {
            total += embeddings[i].dot(&embeddings[j]);
            count += 1;
        }
    }
    total / count as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::StandardNormal;
    use rand::Rng;

    fn unit(v: Vec<f64>) -> Embedding {
        Embedding::normalized(v).unwrap()
    }

    fn e(dim: usize, axis: usize) -> Embedding {
        let mut v = vec![0.0; dim];
        v[axis] = 1.0;
        Embedding::unit(v).unwrap()
    }

    fn random_unit(rng: &mut impl Rng, dim: usize) -> Embedding {
        loop {
            let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            if crate::linalg::norm(&v) > 1e-6 {
                return unit(v);
            }
        }
    }

    #[test]
    fn info_nce_direct_values() {
        // aᵀp = 1, one orthogonal negative, tau = 1:
        // -log(e / (e + 1)) = log(1 + e^{-1}).
        let a = e(2, 0);
        let p = e(2, 0);
        let n = e(2, 1);
        let v = info_nce(&a, &p, &[n], 1.0).unwrap();
        assert!((v - (1.0 + (-1.0f64).exp()).ln()).abs() < 1e-9);
        assert!((v - 0.313262).abs() < 1e-6);

        // aᵀp = aᵀn: log 2.
        let p2 = e(2, 1);
        let n2 = e(2, 1);
        let v2 = info_nce(&a, &p2, &[n2], 1.0).unwrap();
        assert!((v2 - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn info_nce_ten_orthogonal_negatives() {
        // tau = 0.2, a = p, 10 negatives orthogonal to a:
        // -log(e^5 / (e^5 + 10)).
        let dim = 12;
        let a = e(dim, 0);
        let negs: Vec<Embedding> = (1..=10).map(|i| e(dim, i)).collect();
        let v = info_nce(&a, &a, &negs, 0.2).unwrap();
        let expected = -(5f64.exp() / (5f64.exp() + 10.0)).ln();
        assert!((v - expected).abs() < 1e-9);
        assert!((v - 0.0652066).abs() < 1e-6);
    }

    #[test]
    fn l_u_direct_values() {
        let a = e(2, 0);
        let northo = e(2, 1);
        // tau = 1, one orthogonal negative: -1 + log(e + 1).
        let v = l_u(&a, &[northo], 1.0).unwrap();
        assert!((v - (-1.0 + (std::f64::consts::E + 1.0).ln())).abs() < 1e-12);
        assert!((v - 0.313262).abs() < 1e-6);

        // Worst-case negative aᵀn = 1: -1 + log(2e) = log 2.
        let v2 = l_u(&a, &[a.clone()], 1.0).unwrap();
        assert!((v2 - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn l_u_equals_info_nce_at_perfect_alignment() {
        let mut rng = crate::rng::stream(5, &[1]);
        for _ in 0..100 {
            let a = random_unit(&mut rng, 6);
            let negs: Vec<Embedding> = (0..5).map(|_| random_unit(&mut rng, 6)).collect();
            let tau = rng.random_range(0.1..2.0);
            let lu = l_u(&a, &negs, tau).unwrap();
            let nce = info_nce(&a, &a.clone(), &negs, tau).unwrap();
            assert!((lu - nce).abs() < 1e-12);
        }
    }

    #[test]
    fn prop1_sandwich_over_random_draws() {
        let mut rng = crate::rng::stream(17, &[2]);
        for trial in 0..10_000 {
            let dim = 8;
            let a = random_unit(&mut rng, dim);
            let p = random_unit(&mut rng, dim);
            let negs: Vec<Embedding> = (0..7).map(|_| random_unit(&mut rng, dim)).collect();
            let tau = [0.05, 0.2, 0.5, 1.0, 2.0][trial % 5];
            let lu = l_u(&a, &negs, tau).unwrap();
            let nce = info_nce(&a, &p, &negs, tau).unwrap();
            assert!(lu <= nce + 1e-12, "trial {trial}: {lu} > {nce}");
            let slack = (1.0 - a.dot(&p)) / tau;
            assert!(nce <= lu + slack + 1e-12, "trial {trial}");
        }
    }

    #[test]
    fn losses_decrease_when_negative_similarity_decreases() {
        let a = e(3, 0);
        let p = e(3, 1);
        let near = unit(vec![0.9, 0.1, 0.0]);
        let far = unit(vec![0.1, 0.9, 0.0]);
        for tau in [0.2, 1.0] {
            assert!(l_u(&a, &[far.clone()], tau).unwrap() < l_u(&a, &[near.clone()], tau).unwrap());
            assert!(
                info_nce(&a, &p, &[far.clone()], tau).unwrap()
                    < info_nce(&a, &p, &[near.clone()], tau).unwrap()
            );
        }
    }

    #[test]
    fn loss_invariant_to_negative_order() {
        let mut rng = crate::rng::stream(23, &[3]);
        let a = random_unit(&mut rng, 5);
        let mut negs: Vec<Embedding> = (0..6).map(|_| random_unit(&mut rng, 5)).collect();
        let v1 = l_u(&a, &negs, 0.5).unwrap();
        negs.reverse();
        let v2 = l_u(&a, &negs, 0.5).unwrap();
        assert!((v1 - v2).abs() < 1e-12);
    }

    #[test]
    fn no_overflow_at_low_tau() {
        let mut rng = crate::rng::stream(29, &[4]);
        for _ in 0..200 {
            let a = random_unit(&mut rng, 4);
            let p = random_unit(&mut rng, 4);
            let negs: Vec<Embedding> = (0..10).map(|_| random_unit(&mut rng, 4)).collect();
            assert!(l_u(&a, &negs, 0.05).unwrap().is_finite());
            assert!(info_nce(&a, &p, &negs, 0.05).unwrap().is_finite());
        }
    }

    #[test]
    fn argument_errors() {
        let a = e(2, 0);
        assert!(matches!(l_u(&a, &[], 1.0), Err(Error::Argument(_))));
        assert!(matches!(
            info_nce(&a, &a.clone(), &[a.clone()], 0.0),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn sample_negatives_forced_choice() {
        let negs = sample_negatives(2, 0, 5, NegativePolicy::CrossView, 1).unwrap();
        assert_eq!(negs, vec![NegativeRef::OtherView(1)]);
    }

    #[test]
    fn sample_negatives_truncates_to_pool() {
        let negs = sample_negatives(32, 3, 100, NegativePolicy::CrossView, 1).unwrap();
        assert_eq!(negs.len(), 31);
        let both = sample_negatives(32, 3, 100, NegativePolicy::CrossAndInView, 1).unwrap();
        assert_eq!(both.len(), 62);
    }

    #[test]
    fn sample_negatives_never_contains_anchor() {
        for seed in 0..10_000u64 {
            let negs = sample_negatives(8, 5, 3, NegativePolicy::CrossAndInView, seed).unwrap();
            assert_eq!(negs.len(), 3);
            for r in &negs {
                match *r {
                    NegativeRef::OtherView(j) | NegativeRef::SameView(j) => assert_ne!(j, 5),
                }
            }
        }
    }

    #[test]
    fn batch_of_two_neg_only_reduces_to_single_negative() {
        // Mutually orthogonal where distinct: anchor sees one orthogonal
        // negative, so each anchor term is -1 + log(e + 1).
        let dim = 8;
        let view_a = vec![e(dim, 0), e(dim, 1)];
        let view_b = vec![e(dim, 2), e(dim, 3)];
        let cfg = LossConfig {
            tau: 1.0,
            m_negatives: 10,
            mode: LossMode::NegOnly,
            policy: NegativePolicy::CrossView,
            symmetrize: false,
        };
        let (loss, _, _) = loss_and_grad(&view_a, &view_b, &cfg, 7).unwrap();
        let expected = -1.0 + (std::f64::consts::E + 1.0).ln();
        assert!((loss - expected).abs() < 1e-9, "loss {loss}");
    }

    #[test]
    fn neg_only_ignores_positive_counterpart() {
        let mut rng = crate::rng::stream(31, &[5]);
        let b = 4;
        let dim = 6;
        let view_a: Vec<Embedding> = (0..b).map(|_| random_unit(&mut rng, dim)).collect();
        let mut view_b: Vec<Embedding> = (0..b).map(|_| random_unit(&mut rng, dim)).collect();
        let cfg = LossConfig {
            tau: 0.5,
            m_negatives: 100,
            mode: LossMode::NegOnly,
            policy: NegativePolicy::CrossView,
            symmetrize: false,
        };
        let (loss1, grads_a, grads_b) = loss_and_grad(&view_a, &view_b, &cfg, 3).unwrap();
        // Perturb anchor 1's counterpart; with A->B only, b[1] is excluded
        // from anchor 1's negatives but serves as negative for anchors 0, 2, 3.
        // Check the pure exclusion instead: gradient of the counterpart from
        // anchor 1's own term is zero when it appears in no other pool.
        // Direct check: replace b[1] and verify anchor 1's contribution is
        // unchanged by recomputing with a 2-graph slice.
        let slice_a = vec![view_a[0].clone(), view_a[1].clone()];
        let mut slice_b = vec![view_b[0].clone(), view_b[1].clone()];
        let (l_before, _, _) = loss_and_grad(&slice_a, &slice_b, &cfg, 9).unwrap();
        // anchor 0's only negative is b[1]; anchor 1's only negative is b[0].
        // Replacing b[1] changes anchor 0's term but must not change anchor 1's.
        let term_anchor1_before = l_u(&slice_a[1], &[slice_b[0].clone()], cfg.tau).unwrap();
        slice_b[1] = random_unit(&mut rng, dim);
        let (l_after, _, _) = loss_and_grad(&slice_a, &slice_b, &cfg, 9).unwrap();
        let term_anchor1_after = l_u(&slice_a[1], &[slice_b[0].clone()], cfg.tau).unwrap();
        assert_eq!(term_anchor1_before, term_anchor1_after);
        // And the total moved only through anchor 0's term.
        let term_anchor0_before = l_u(&slice_a[0], &[view_b[1].clone()], cfg.tau).unwrap();
        let term_anchor0_after = l_u(&slice_a[0], &[slice_b[1].clone()], cfg.tau).unwrap();
        let predicted = l_before + 0.5 * (term_anchor0_after - term_anchor0_before);
        assert!((l_after - predicted).abs() < 1e-12);

        let _ = (loss1, grads_a, grads_b, view_b);
    }

    #[test]
    fn gradients_match_finite_differences_both_modes() {
        let mut rng = crate::rng::stream(37, &[6]);
        let b = 4;
        let dim = 5;
        // Raw (unnormalized) vectors; the loss is evaluated on normalized
        // copies so the FD perturbation stays on the sphere via re-normalization.
        let raw_a: Vec<Vec<f64>> = (0..b)
            .map(|_| (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let raw_b: Vec<Vec<f64>> = (0..b)
            .map(|_| (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();

        for mode in [LossMode::NegOnly, LossMode::Nce, LossMode::AlignOnly] {
            for symmetrize in [false, true] {
                let cfg = LossConfig {
                    tau: 0.4,
                    m_negatives: 2,
                    mode,
                    policy: NegativePolicy::CrossAndInView,
                    symmetrize,
                };
                let seed = 11;

                let eval = |ra: &[Vec<f64>], rb: &[Vec<f64>]| -> f64 {
                    let va: Vec<Embedding> =
                        ra.iter().map(|v| unit(v.clone())).collect();
                    let vb: Vec<Embedding> =
                        rb.iter().map(|v| unit(v.clone())).collect();
                    loss_and_grad(&va, &vb, &cfg, seed).unwrap().0
                };

                // Analytic gradients w.r.t. normalized embeddings, chained
                // through the normalization for the FD comparison.
                let va: Vec<Embedding> = raw_a.iter().map(|v| unit(v.clone())).collect();
                let vb: Vec<Embedding> = raw_b.iter().map(|v| unit(v.clone())).collect();
                let (_, ga, gb) = loss_and_grad(&va, &vb, &cfg, seed).unwrap();

                let chain = |raw: &[f64], g: &[f64], k: usize| -> f64 {
                    // d/d raw_k of L(raw/|raw|).
                    let n = crate::linalg::norm(raw);
                    let y: Vec<f64> = raw.iter().map(|x| x / n).collect();
                    let gy = crate::linalg::dot(g, &y);
                    (g[k] - gy * y[k]) / n
                };

                let step = 1e-6;
                let mut worst: f64 = 0.0;
                for i in 0..b {
                    for k in 0..dim {
                        let mut ra = raw_a.clone();
                        ra[i][k] += step;
                        let up = eval(&ra, &raw_b);
                        ra[i][k] -= 2.0 * step;
                        let down = eval(&ra, &raw_b);
                        let fd = (up - down) / (2.0 * step);
                        let an = chain(&raw_a[i], &ga[i], k);
                        let denom = an.abs().max(fd.abs()).max(1e-6);
                        worst = worst.max((an - fd).abs() / denom);

                        let mut rb = raw_b.clone();
                        rb[i][k] += step;
                        let up = eval(&raw_a, &rb);
                        rb[i][k] -= 2.0 * step;
                        let down = eval(&raw_a, &rb);
                        let fd = (up - down) / (2.0 * step);
                        let an = chain(&raw_b[i], &gb[i], k);
                        let denom = an.abs().max(fd.abs()).max(1e-6);
                        worst = worst.max((an - fd).abs() / denom);
                    }
                }
                assert!(
                    worst < 1e-5,
                    "{mode:?} symmetrize={symmetrize}: max relative error {worst}"
                );
            }
        }
    }

    #[test]
    fn batch_of_one_rejected() {
        let a = vec![e(2, 0)];
        let b = vec![e(2, 1)];
        assert!(matches!(
            loss_and_grad(&a, &b, &LossConfig::default(), 0),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn mean_similarity_collapse_indicator() {
        let collapsed = vec![e(3, 0), e(3, 0), e(3, 0)];
        let spread = vec![e(3, 0), e(3, 1), e(3, 2)];
        assert!(mean_pairwise_similarity(&collapsed) > 0.99);
        assert!(mean_pairwise_similarity(&spread) < 0.01);
    }
}
