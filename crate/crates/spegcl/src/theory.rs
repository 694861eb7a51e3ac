//! Monte-Carlo verification of the contrastive loss's asymptotics on
//! synthetic embedding distributions: the limit of `L(M) - log M`, the
//! decay rate of its deviation as the negative count `M` grows, and the
//! per-draw sandwich between the negative-only loss and the classic loss.
//!
//! Distributions are synthetic because the statements quantify over
//! arbitrary unit-norm encoders; closed-form-checkable laws give the
//! sharpest test. Two independent routes to the limit exist side by side:
//! a nested Monte-Carlo estimate with bootstrap error bars, and an analytic
//! value (exact for the two-point law, 1D quadrature for the uniform
//! sphere). The deviation curves measure against the analytic route; the
//! nested-MC route is compared to it as its own check.
//!
//! For isotropic negative laws the curve estimator subtracts the control
//! variate `(X̄ - mu)/mu` (X̄ = sample mean of `e^{s/tau}`, `mu` its exact
//! expectation), which removes the first-order sampling noise without
//! biasing the mean. Without that, the deviation at `M = 10^4` (about 1e-4)
//! would drown in sampling noise at any affordable trial count.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::encoder::Embedding;
use crate::error::{Error, Result};
use crate::linalg::{dot, norm};
use crate::objective::{self, LossMode};
use crate::rng::{self, domain};

/// Inner sample count for the nested limit estimate.
const INNER_SAMPLES: usize = 10_000;
const BOOTSTRAP_RESAMPLES: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DistributionKind {
    /// Anchors and negatives are `+e1` or `-e1` with equal probability,
    /// embedded in `dim >= 2` so non-trivial positives exist.
    TwoPoint { dim: usize },
    /// Uniform on the unit sphere in `dim` dimensions.
    UniformSphere { dim: usize },
    /// Concentrated near `e1`: normalize(concentration * e1 + N(0, I)).
    VmfLike { dim: usize, concentration: f64 },
}

impl DistributionKind {
    pub fn dim(&self) -> usize {
        match *self {
            DistributionKind::TwoPoint { dim }
            | DistributionKind::UniformSphere { dim }
            | DistributionKind::VmfLike { dim, .. } => dim,
        }
    }

    fn label(&self) -> String {
        match *self {
            DistributionKind::TwoPoint { dim } => format!("two_point({dim})"),
            DistributionKind::UniformSphere { dim } => format!("uniform_sphere({dim})"),
            DistributionKind::VmfLike { dim, concentration } => {
                format!("vmf_like({dim},{concentration})")
            }
        }
    }
}

/// How the positive of an anchor is produced (only the NCE curve and the
/// sandwich check consume positives).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PositiveRule {
    /// Positive equals the anchor (perfect alignment, similarity 1).
    Identical,
    /// Positive at exactly this similarity, random orthogonal residual.
    FixedSimilarity(f64),
}

impl PositiveRule {
    /// Expected anchor-positive similarity; exact per draw for both rules.
    pub fn expected_similarity(&self) -> f64 {
        match *self {
            PositiveRule::Identical => 1.0,
            PositiveRule::FixedSimilarity(s) => s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbeddingDistribution {
    pub kind: DistributionKind,
    pub positive: PositiveRule,
}

impl EmbeddingDistribution {
    pub fn new(kind: DistributionKind, positive: PositiveRule) -> Result<Self> {
        if kind.dim() < 2 {
            return Err(Error::Argument(
                "distribution dimension must be at least 2".into(),
            ));
        }
        if let DistributionKind::VmfLike { concentration, .. } = kind {
            if !(concentration >= 0.0) {
                return Err(Error::Argument(format!(
                    "concentration must be non-negative, got {concentration}"
                )));
            }
        }
        if let PositiveRule::FixedSimilarity(s) = positive {
            if !(-1.0..=1.0).contains(&s) {
                return Err(Error::Argument(format!(
                    "positive similarity {s} outside [-1, 1]"
                )));
            }
        }
        Ok(EmbeddingDistribution { kind, positive })
    }

    pub fn two_point() -> Self {
        EmbeddingDistribution {
            kind: DistributionKind::TwoPoint { dim: 2 },
            positive: PositiveRule::Identical,
        }
    }

    pub fn uniform_sphere(dim: usize) -> Self {
        EmbeddingDistribution {
            kind: DistributionKind::UniformSphere { dim },
            positive: PositiveRule::Identical,
        }
    }

    fn sample_point_into(&self, rng: &mut impl Rng, buf: &mut [f64]) {
        match self.kind {
            DistributionKind::TwoPoint { .. } => {
                buf.fill(0.0);
                buf[0] = if rng.random::<bool>() { 1.0 } else { -1.0 };
            }
            DistributionKind::UniformSphere { .. } => loop {
                for x in buf.iter_mut() {
                    *x = rng.sample(StandardNormal);
                }
                let n = norm(buf);
                if n > 1e-9 {
                    buf.iter_mut().for_each(|x| *x /= n);
                    return;
                }
            },
            DistributionKind::VmfLike { concentration, .. } => {
                for x in buf.iter_mut() {
                    *x = rng.sample(StandardNormal);
                }
                buf[0] += concentration;
                let n = norm(buf);
                buf.iter_mut().for_each(|x| *x /= n);
            }
        }
    }

    /// Draw one anchor.
    pub fn sample_anchor(&self, rng: &mut impl Rng) -> Vec<f64> {
        let mut buf = vec![0.0; self.kind.dim()];
        self.sample_point_into(rng, &mut buf);
        buf
    }

    /// Positive for an anchor, per the positive rule.
    pub fn sample_positive(&self, rng: &mut impl Rng, anchor: &[f64]) -> Vec<f64> {
        match self.positive {
            PositiveRule::Identical => anchor.to_vec(),
            PositiveRule::FixedSimilarity(s) => {
                // p = s*a + sqrt(1-s^2)*b with b a random unit vector
                // orthogonal to a; then aᵀp = s exactly.
                let d = anchor.len();
                let residual = (1.0 - s * s).max(0.0).sqrt();
                loop {
                    let mut b: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                    let proj = dot(&b, anchor);
                    for (x, &a) in b.iter_mut().zip(anchor) {
                        *x -= proj * a;
                    }
                    let n = norm(&b);
                    if n > 1e-9 {
                        return anchor
                            .iter()
                            .zip(&b)
                            .map(|(&a, &bb)| s * a + residual * bb / n)
                            .collect();
                    }
                }
            }
        }
    }

    /// Similarity of the anchor with one fresh negative. The two-point law
    /// avoids materializing the vector: the similarity is `±anchor[0]`.
    fn negative_similarity(&self, rng: &mut impl Rng, anchor: &[f64], scratch: &mut [f64]) -> f64 {
        match self.kind {
            DistributionKind::TwoPoint { .. } => {
                if rng.random::<bool>() {
                    anchor[0]
                } else {
                    -anchor[0]
                }
            }
            _ => {
                self.sample_point_into(rng, scratch);
                dot(anchor, scratch)
            }
        }
    }

    /// Exact `E[e^{s/tau}]` over one negative draw when the law is
    /// isotropic enough to admit one: closed form for the two-point law,
    /// 1D quadrature for the uniform sphere (dim >= 3).
    pub fn analytic_exp_moment(&self, tau: f64) -> Option<f64> {
        match self.kind {
            DistributionKind::TwoPoint { .. } => Some((1.0 / tau).cosh()),
            DistributionKind::UniformSphere { dim } if dim >= 3 => {
                Some(sphere_exp_moment(dim, tau))
            }
            _ => None,
        }
    }

    /// Analytic value of the limit functional
    /// `-E[aᵀp]/tau + E_x[log E_n[e^{xᵀn/tau}]]` where available.
    pub fn analytic_limit(&self, tau: f64) -> Option<f64> {
        self.analytic_exp_moment(tau)
            .map(|mu| -self.positive.expected_similarity() / tau + mu.ln())
    }
}

/// `E[e^{s/tau}]` for `s = xᵀn`, `n` uniform on the unit sphere in `dim`
/// dimensions: the density of s is proportional to `(1-s^2)^{(dim-3)/2}`.
/// Simpson quadrature on [-1, 1]; integrable for dim >= 3.
fn sphere_exp_moment(dim: usize, tau: f64) -> f64 {
    let steps = 4000usize; // even
    let h = 2.0 / steps as f64;
    let exponent = (dim as f64 - 3.0) / 2.0;
    let weight = |s: f64| (1.0 - s * s).max(0.0).powf(exponent);
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..=steps {
        let s = -1.0 + i as f64 * h;
        let c = if i == 0 || i == steps {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let w = c * weight(s);
        num += w * (s / tau).exp();
        den += w;
    }
    num / den
}

/// Closed-form limit for the two-point law.
pub fn two_point_closed_form_limit(tau: f64, expected_pos_similarity: f64) -> f64 {
    -expected_pos_similarity / tau + (1.0 / tau).cosh().ln()
}

/// Nested Monte-Carlo estimate of the limit functional with bootstrap
/// standard error.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LimitEstimate {
    pub value: f64,
    pub stderr: f64,
    pub trials: usize,
    pub inner_samples: usize,
}

pub fn limit_estimate(
    dist: &EmbeddingDistribution,
    tau: f64,
    trials: usize,
    seed: u64,
) -> Result<LimitEstimate> {
    if !(tau > 0.0) {
        return Err(Error::Argument(format!("tau must be positive, got {tau}")));
    }
    if trials < 1000 {
        return Err(Error::Argument(format!(
            "limit estimation needs at least 1000 trials, got {trials}"
        )));
    }
    let dim = dist.kind.dim();
    let mut values = Vec::with_capacity(trials);
    let mut scratch = vec![0.0; dim];
    for t in 0..trials {
        let mut rng = rng::stream(seed, &[domain::THEORY, 1, t as u64]);
        let anchor = dist.sample_anchor(&mut rng);
        let positive = dist.sample_positive(&mut rng, &anchor);
        let align = -dot(&anchor, &positive) / tau;
        let mut acc = 0.0;
        for _ in 0..INNER_SAMPLES {
            let s = dist.negative_similarity(&mut rng, &anchor, &mut scratch);
            acc += (s / tau).exp();
        }
        values.push(align + (acc / INNER_SAMPLES as f64).ln());
    }
    let mean = values.iter().sum::<f64>() / trials as f64;

    // Bootstrap the trial means.
    let mut boot = rng::stream(seed, &[domain::BOOTSTRAP]);
    let mut resampled = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    for _ in 0..BOOTSTRAP_RESAMPLES {
        let mut acc = 0.0;
        for _ in 0..trials {
            acc += values[boot.random_range(0..trials)];
        }
        resampled.push(acc / trials as f64);
    }
    let bmean = resampled.iter().sum::<f64>() / resampled.len() as f64;
    let var = resampled.iter().map(|v| (v - bmean) * (v - bmean)).sum::<f64>()
        / (resampled.len() - 1) as f64;
    Ok(LimitEstimate {
        value: mean,
        stderr: var.sqrt(),
        trials,
        inner_samples: INNER_SAMPLES,
    })
}

/// Deviation-vs-M curve of `E[L(M)] - log M` against the limit.
#[derive(Debug, Clone, Serialize)]
pub struct MCCurve {
    pub loss: String,
    pub tau: f64,
    pub m_values: Vec<usize>,
    /// Estimate of `E[L(M)] - log M` per point.
    pub raw_mean: Vec<f64>,
    /// `|raw_mean - limit|` per point.
    pub mean_dev: Vec<f64>,
    pub stderr: Vec<f64>,
    pub trials: Vec<usize>,
    pub limit: f64,
    /// 0 when the limit is analytic; bootstrap stderr when nested-MC.
    pub limit_stderr: f64,
}

impl MCCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("m,raw_mean,mean_dev,stderr,trials\n");
        for i in 0..self.m_values.len() {
            out.push_str(&format!(
                "{},{:?},{:?},{:?},{}\n",
                self.m_values[i], self.raw_mean[i], self.mean_dev[i], self.stderr[i],
                self.trials[i]
            ));
        }
        out
    }
}

/// Estimate `E[L(M)] - log M` for each `M` by fresh i.i.d. draws.
///
/// `base_trials` is the per-point floor; points with large `M` get more
/// trials (the deviation shrinks like 1/M, the noise only like 1/sqrt).
/// When the negative law admits an exact `E[e^{s/tau}]`, the control-variate
/// estimator is used and the limit is analytic; otherwise both come from
/// plain/nested Monte-Carlo.
pub fn mc_loss_curve(
    dist: &EmbeddingDistribution,
    tau: f64,
    m_values: &[usize],
    base_trials: usize,
    seed: u64,
    loss: LossMode,
) -> Result<MCCurve> {
    if !(tau > 0.0) {
        return Err(Error::Argument(format!("tau must be positive, got {tau}")));
    }
    if base_trials < 1000 {
        return Err(Error::Argument(format!(
            "curve estimation needs at least 1000 trials per point, got {base_trials}"
        )));
    }
    if m_values.is_empty() {
        return Err(Error::Argument("m_values is empty".into()));
    }
    for w in m_values.windows(2) {
        if w[0] >= w[1] {
            return Err(Error::Argument("m_values must be strictly increasing".into()));
        }
    }
    if m_values[0] < 1 || *m_values.last().unwrap() > 100_000 {
        return Err(Error::Argument("m_values must lie in [1, 100000]".into()));
    }
    let positive_sim = match loss {
        LossMode::NegOnly => None,
        LossMode::Nce => Some(dist.positive.expected_similarity()),
        LossMode::AlignOnly => {
            return Err(Error::Argument(
                "deviation curves are defined for nce and neg_only only".into(),
            ))
        }
    };

    let mu = dist.analytic_exp_moment(tau);
    let (limit, limit_stderr) = match dist.analytic_limit(tau) {
        Some(l) => {
            // The nce curve's limit uses the actual positive expectation;
            // neg_only replaces the alignment term by its bound constant,
            // and both limits coincide only at perfect alignment. Track the
            // right functional per mode.
            let l = match loss {
                LossMode::NegOnly => {
                    -1.0 / tau + (l + dist.positive.expected_similarity() / tau)
                }
                _ => l,
            };
            (l, 0.0)
        }
        None => {
            let est = limit_estimate(dist, tau, base_trials.max(1000), rng::derive(seed, &[9]))?;
            let l = match loss {
                LossMode::NegOnly => {
                    est.value + (dist.positive.expected_similarity() - 1.0) / tau
                }
                _ => est.value,
            };
            (l, est.stderr)
        }
    };

    let dim = dist.kind.dim();
    let mut raw_mean = Vec::with_capacity(m_values.len());
    let mut mean_dev = Vec::with_capacity(m_values.len());
    let mut stderr = Vec::with_capacity(m_values.len());
    let mut trials_used = Vec::with_capacity(m_values.len());
    let mut scratch = vec![0.0; dim];

    for (pi, &m) in m_values.iter().enumerate() {
        // With the control variate the noise already decays ~1/M; without
        // it, large-M points need proportionally more trials to resolve a
        // deviation that shrinks like 1/M.
        let trials = if mu.is_some() {
            base_trials
        } else {
            base_trials.max((3 * m).min(60_000))
        };
        let mut values = Vec::with_capacity(trials);
        for t in 0..trials {
            let mut rng = rng::stream(seed, &[domain::THEORY, 2, pi as u64, t as u64]);
            let anchor = dist.sample_anchor(&mut rng);
            let mut acc = 0.0;
            for _ in 0..m {
                let s = dist.negative_similarity(&mut rng, &anchor, &mut scratch);
                acc += (s / tau).exp();
            }
            let x_bar = acc / m as f64;
            // Head term: the positive for nce, the bound constant for L_U.
            let head = match positive_sim {
                Some(sp) => sp / tau,
                None => 1.0 / tau,
            };
            let mut v = -head + (x_bar + head.exp() / m as f64).ln();
            if let Some(mu) = mu {
                v -= (x_bar - mu) / mu;
            }
            values.push(v);
        }
        let mean = values.iter().sum::<f64>() / trials as f64;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / (trials as f64 - 1.0);
        raw_mean.push(mean);
        mean_dev.push((mean - limit).abs());
        stderr.push((var / trials as f64).sqrt());
        trials_used.push(trials);
    }

    Ok(MCCurve {
        loss: loss.as_str().to_string(),
        tau,
        m_values: m_values.to_vec(),
        raw_mean,
        mean_dev,
        stderr,
        trials: trials_used,
        limit,
        limit_stderr,
    })
}

/// Least-squares decay fit of `log(mean_dev)` against `log(M)`.
#[derive(Debug, Clone, Serialize)]
pub struct DecayFit {
    pub slope: f64,
    pub r_squared: f64,
    /// m-values that entered the fit.
    pub used: Vec<usize>,
    /// m-values excluded as noise-dominated (mean_dev <= 3 * stderr).
    pub excluded: Vec<usize>,
}

pub fn fit_decay_exponent(curve: &MCCurve) -> Result<DecayFit> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut used = Vec::new();
    let mut excluded = Vec::new();
    for i in 0..curve.m_values.len() {
        if curve.mean_dev[i] > 3.0 * curve.stderr[i] && curve.mean_dev[i] > 0.0 {
            xs.push((curve.m_values[i] as f64).ln());
            ys.push(curve.mean_dev[i].ln());
            used.push(curve.m_values[i]);
        } else {
            excluded.push(curve.m_values[i]);
        }
    }
    if used.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "decay fit needs at least 4 points with mean_dev > 3*stderr, have {} (excluded: {:?})",
            used.len(),
            excluded
        )));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(DecayFit {
        slope,
        r_squared,
        used,
        excluded,
    })
}

/// Per-draw verification of the sandwich
/// `l_u <= info_nce <= l_u + (1/tau)(1 - aᵀp)`.
#[derive(Debug, Clone, Serialize)]
pub struct Prop1Report {
    pub distribution: String,
    pub tau: f64,
    pub draws: usize,
    pub negatives_per_draw: usize,
    pub lower_violations: usize,
    pub upper_violations: usize,
    /// Largest observed `l_u - info_nce` (must stay <= ~1e-12).
    pub max_lower_gap: f64,
    /// Largest observed `info_nce - l_u - slack`.
    pub max_upper_gap: f64,
}

pub fn check_prop1(
    dist: &EmbeddingDistribution,
    tau: f64,
    draws: usize,
    negatives_per_draw: usize,
    seed: u64,
) -> Result<Prop1Report> {
    if draws < 10_000 {
        return Err(Error::Argument(format!(
            "the sandwich check needs at least 10000 draws, got {draws}"
        )));
    }
    if negatives_per_draw == 0 {
        return Err(Error::Argument("need at least one negative per draw".into()));
    }
    let mut lower_violations = 0;
    let mut upper_violations = 0;
    let mut max_lower_gap = f64::NEG_INFINITY;
    let mut max_upper_gap = f64::NEG_INFINITY;
    for t in 0..draws {
        let mut rng = rng::stream(seed, &[domain::THEORY, 3, t as u64]);
        let anchor_v = dist.sample_anchor(&mut rng);
        let positive_v = dist.sample_positive(&mut rng, &anchor_v);
        let anchor = Embedding::normalized(anchor_v)?;
        let positive = Embedding::normalized(positive_v)?;
        let negatives: Vec<Embedding> = (0..negatives_per_draw)
            .map(|_| Embedding::normalized(dist.sample_anchor(&mut rng)))
            .collect::<Result<_>>()?;
        let lu = objective::l_u(&anchor, &negatives, tau)?;
        let nce = objective::info_nce(&anchor, &positive, &negatives, tau)?;
        let slack = (1.0 - anchor.dot(&positive)) / tau;
        let lower_gap = lu - nce;
        let upper_gap = nce - lu - slack;
        max_lower_gap = max_lower_gap.max(lower_gap);
        max_upper_gap = max_upper_gap.max(upper_gap);
        if lower_gap > 1e-12 {
            lower_violations += 1;
        }
        if upper_gap > 1e-12 {
            upper_violations += 1;
        }
    }
    Ok(Prop1Report {
        distribution: dist.kind.label(),
        tau,
        draws,
        negatives_per_draw,
        lower_violations,
        upper_violations,
        max_lower_gap,
        max_upper_gap,
    })
}

// ---------------------------------------------------------------------------
// Aggregate verification (what the CLI's verify command runs)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct TheoryRunConfig {
    pub tau_curve: f64,
    pub m_values: Vec<usize>,
    pub curve_trials: usize,
    pub limit_trials: usize,
    pub prop1_draws: usize,
    pub prop1_taus: Vec<f64>,
    pub prop1_negatives: usize,
    pub seed: u64,
}

impl Default for TheoryRunConfig {
    fn default() -> Self {
        TheoryRunConfig {
            tau_curve: 1.0,
            m_values: vec![10, 100, 1000, 10_000],
            curve_trials: 2000,
            limit_trials: 1000,
            prop1_draws: 10_000,
            prop1_taus: vec![0.05, 0.2, 0.5, 1.0, 2.0],
            prop1_negatives: 8,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct CurveReport {
    pub curve: MCCurve,
    pub fit: Option<DecayFit>,
}

/// Everything the verification run produces, JSON-serializable.
#[derive(Debug, Clone, Serialize)]
pub struct TheoryReport {
    pub config: TheoryRunConfig,
    pub closed_form_limit: f64,
    pub mc_limit: LimitEstimate,
    pub curves: Vec<CurveReport>,
    pub prop1: Vec<Prop1Report>,
    pub checks: Vec<CheckResult>,
    pub pass: bool,
}

/// Does the nested-MC limit agree with the analytic one within 3 bootstrap
/// standard errors? Exposed separately so fault-injection tests can feed a
/// corrupted estimate through the same gate the CLI uses.
pub fn limit_matches_closed_form(mc: &LimitEstimate, closed_form: f64) -> bool {
    (mc.value - closed_form).abs() <= 3.0 * mc.stderr
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] > w[1])
}

/// Run the default verification grid: two-point curves for both losses,
/// the nested-MC limit against the closed form, and the sandwich check
/// across temperatures on the two-point and uniform-sphere laws.
pub fn run_verification(cfg: &TheoryRunConfig) -> Result<TheoryReport> {
    let two_point = EmbeddingDistribution::two_point();
    let closed_form = two_point_closed_form_limit(cfg.tau_curve, 1.0);

    let mc_limit = limit_estimate(
        &two_point,
        cfg.tau_curve,
        cfg.limit_trials,
        rng::derive(cfg.seed, &[1]),
    )?;

    let mut checks = Vec::new();
    checks.push(CheckResult {
        name: "limit_matches_closed_form".into(),
        pass: limit_matches_closed_form(&mc_limit, closed_form),
        detail: format!(
            "mc {:.6} +- {:.2e} vs closed form {:.6}",
            mc_limit.value, mc_limit.stderr, closed_form
        ),
    });

    let mut curves = Vec::new();
    let mut last_point: Vec<(f64, f64)> = Vec::new();
    for loss in [LossMode::NegOnly, LossMode::Nce] {
        let curve = mc_loss_curve(
            &two_point,
            cfg.tau_curve,
            &cfg.m_values,
            cfg.curve_trials,
            rng::derive(cfg.seed, &[2, loss as u64]),
            loss,
        )?;
        checks.push(CheckResult {
            name: format!("{}_deviation_strictly_decreasing", loss.as_str()),
            pass: strictly_decreasing(&curve.mean_dev),
            detail: format!("{:?}", curve.mean_dev),
        });
        let fit = fit_decay_exponent(&curve);
        match &fit {
            Ok(f) => checks.push(CheckResult {
                name: format!("{}_decay_slope", loss.as_str()),
                pass: f.slope <= -0.45,
                detail: format!("slope {:.4}, r2 {:.4}", f.slope, f.r_squared),
            }),
            Err(e) => checks.push(CheckResult {
                name: format!("{}_decay_slope", loss.as_str()),
                pass: false,
                detail: format!("fit failed: {e}"),
            }),
        }
        last_point.push((
            *curve.raw_mean.last().unwrap(),
            *curve.stderr.last().unwrap(),
        ));
        curves.push(CurveReport {
            curve,
            fit: fit.ok(),
        });
    }

    // Both losses converge to the same limit: compare the largest-M
    // estimates within 3x combined stderr.
    if let [(m1, s1), (m2, s2)] = last_point[..] {
        let combined = (s1 * s1 + s2 * s2).sqrt();
        checks.push(CheckResult {
            name: "nce_and_neg_only_share_limit".into(),
            pass: (m1 - m2).abs() <= 3.0 * combined,
            detail: format!(
                "neg_only {m1:.6} vs nce {m2:.6}, 3x combined stderr {:.2e}",
                3.0 * combined
            ),
        });
    }

    let mut prop1 = Vec::new();
    for &tau in &cfg.prop1_taus {
        for dist in [two_point, EmbeddingDistribution::uniform_sphere(8)] {
            let report = check_prop1(
                &dist,
                tau,
                cfg.prop1_draws,
                cfg.prop1_negatives,
                rng::derive(cfg.seed, &[3, tau.to_bits()]),
            )?;
            checks.push(CheckResult {
                name: format!("prop1_sandwich_{}_tau_{tau}", report.distribution),
                pass: report.lower_violations == 0 && report.upper_violations == 0,
                detail: format!(
                    "{} draws, {} lower / {} upper violations",
                    report.draws, report.lower_violations, report.upper_violations
                ),
            });
            prop1.push(report);
        }
    }

    let pass = checks.iter().all(|c| c.pass);
    Ok(TheoryReport {
        config: cfg.clone(),
        closed_form_limit: closed_form,
        mc_limit,
        curves,
        prop1,
        checks,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_closed_form_values() {
        // tau = 1, perfect alignment: -1 + log(cosh 1), with
        // cosh 1 = (e + 1/e)/2.
        let v = two_point_closed_form_limit(1.0, 1.0);
        let expected = -1.0 + ((std::f64::consts::E + (-1.0f64).exp()) / 2.0).ln();
        assert!((v - expected).abs() < 1e-12);
        assert!((v + 0.566219).abs() < 1e-6);
        // Expected positive similarity 0 drops the alignment term.
        let v0 = two_point_closed_form_limit(1.0, 0.0);
        assert!((v0 - 0.433781).abs() < 1e-6);
        // When every similarity is negligible against tau, the uniformity
        // term collapses to log(1) and only the alignment term remains.
        let tau = 1000.0;
        let v = two_point_closed_form_limit(tau, 1.0);
        assert!((v - (-1.0 / tau)).abs() < 1e-6);
    }

    #[test]
    fn limit_estimate_matches_closed_form_perfect_alignment() {
        let dist = EmbeddingDistribution::two_point();
        let est = limit_estimate(&dist, 1.0, 1000, 7).unwrap();
        let closed = two_point_closed_form_limit(1.0, 1.0);
        assert!(
            (est.value - closed).abs() <= 3.0 * est.stderr,
            "mc {} vs closed {closed}, stderr {}",
            est.value,
            est.stderr
        );
    }

    #[test]
    fn limit_estimate_zero_similarity_positive() {
        let dist = EmbeddingDistribution::new(
            DistributionKind::TwoPoint { dim: 2 },
            PositiveRule::FixedSimilarity(0.0),
        )
        .unwrap();
        let est = limit_estimate(&dist, 1.0, 1000, 8).unwrap();
        let closed = two_point_closed_form_limit(1.0, 0.0);
        assert!((est.value - closed).abs() <= 3.0 * est.stderr);
    }

    #[test]
    fn limit_estimate_requires_enough_trials() {
        let dist = EmbeddingDistribution::two_point();
        assert!(matches!(
            limit_estimate(&dist, 1.0, 10, 0),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn sphere_exp_moment_dim3_closed_form() {
        // For dim = 3 the similarity is uniform on [-1, 1], so
        // E[e^{s/tau}] = tau * sinh(1/tau).
        for tau in [0.5, 1.0, 2.0] {
            let q = sphere_exp_moment(3, tau);
            let exact = tau * (1.0 / tau).sinh();
            assert!((q - exact).abs() < 1e-9, "tau {tau}: {q} vs {exact}");
        }
    }

    #[test]
    fn curve_deviation_decreases_and_fits_steeply() {
        let dist = EmbeddingDistribution::two_point();
        let curve =
            mc_loss_curve(&dist, 1.0, &[10, 100, 1000], 2000, 3, LossMode::NegOnly).unwrap();
        assert!(strictly_decreasing(&curve.mean_dev), "{:?}", curve.mean_dev);
        // M=1 deviation dwarfs M=1000's.
        let wide = mc_loss_curve(&dist, 1.0, &[1, 1000], 2000, 4, LossMode::NegOnly).unwrap();
        assert!(wide.mean_dev[0] > 10.0 * wide.mean_dev[1]);
    }

    #[test]
    fn nce_and_neg_only_converge_together() {
        let dist = EmbeddingDistribution::two_point();
        let a = mc_loss_curve(&dist, 1.0, &[10_000], 2000, 5, LossMode::NegOnly).unwrap();
        let b = mc_loss_curve(&dist, 1.0, &[10_000], 2000, 6, LossMode::Nce).unwrap();
        let combined = (a.stderr[0] * a.stderr[0] + b.stderr[0] * b.stderr[0]).sqrt();
        assert!(
            (a.raw_mean[0] - b.raw_mean[0]).abs() <= 3.0 * combined,
            "{} vs {}",
            a.raw_mean[0],
            b.raw_mean[0]
        );
    }

    #[test]
    fn fit_recovers_synthetic_exponents() {
        let mk = |devs: Vec<f64>| MCCurve {
            loss: "neg_only".into(),
            tau: 1.0,
            m_values: vec![10, 100, 1000, 10000],
            raw_mean: devs.clone(),
            mean_dev: devs,
            stderr: vec![0.0; 4],
            trials: vec![1000; 4],
            limit: 0.0,
            limit_stderr: 0.0,
        };
        let curve = mk((0..4)
            .map(|i| (10f64.powi(i + 1)).powf(-2.0 / 3.0))
            .collect());
        let fit = fit_decay_exponent(&curve).unwrap();
        assert!((fit.slope + 2.0 / 3.0).abs() < 1e-6, "slope {}", fit.slope);
        assert!(fit.r_squared > 0.9999);

        let curve = mk((0..4).map(|i| 3.7 / 10f64.powi(i + 1)).collect());
        let fit = fit_decay_exponent(&curve).unwrap();
        assert!((fit.slope + 1.0).abs() < 1e-9);
    }

    #[test]
    fn fit_requires_four_usable_points() {
        let curve = MCCurve {
            loss: "neg_only".into(),
            tau: 1.0,
            m_values: vec![10, 100, 1000, 10000],
            raw_mean: vec![0.1, 0.01, 0.001, 0.0001],
            mean_dev: vec![0.1, 0.01, 0.001, 0.0001],
            // Last point noise-dominated.
            stderr: vec![0.0, 0.0, 0.0, 0.001],
            trials: vec![1000; 4],
            limit: 0.0,
            limit_stderr: 0.0,
        };
        match fit_decay_exponent(&curve) {
            Err(Error::InsufficientData(msg)) => assert!(msg.contains("10000")),
            other => panic!("expected insufficient data, got {other:?}"),
        }
    }

    #[test]
    fn real_curve_slope_is_steep_enough() {
        let dist = EmbeddingDistribution::two_point();
        let curve = mc_loss_curve(
            &dist,
            1.0,
            &[10, 100, 1000, 10_000],
            2000,
            11,
            LossMode::NegOnly,
        )
        .unwrap();
        let fit = fit_decay_exponent(&curve).unwrap();
        assert!(fit.slope <= -0.45, "slope {}", fit.slope);
        assert_eq!(fit.used.len(), 4);
    }

    #[test]
    fn sphere_curve_slope_is_steep_enough() {
        let dist = EmbeddingDistribution::uniform_sphere(8);
        for loss in [LossMode::NegOnly, LossMode::Nce] {
            let curve =
                mc_loss_curve(&dist, 1.0, &[10, 100, 1000, 10_000], 1500, 13, loss).unwrap();
            let fit = fit_decay_exponent(&curve).unwrap();
            assert!(fit.slope <= -0.45, "{loss:?}: slope {}", fit.slope);
        }
    }

    #[test]
    fn non_isotropic_law_uses_plain_estimator() {
        // vmf_like has no analytic exp-moment, so the curve runs the plain
        // estimator against the nested-MC limit; the deviation still drops.
        let dist = EmbeddingDistribution::new(
            DistributionKind::VmfLike { dim: 6, concentration: 4.0 },
            PositiveRule::Identical,
        )
        .unwrap();
        let curve = mc_loss_curve(&dist, 1.0, &[10, 200], 1000, 17, LossMode::NegOnly).unwrap();
        assert!(curve.limit_stderr > 0.0);
        assert!(curve.mean_dev[0] > curve.mean_dev[1], "{:?}", curve.mean_dev);
    }

    #[test]
    fn prop1_zero_violations_across_taus() {
        for &tau in &[0.05, 0.5, 2.0] {
            let dist = EmbeddingDistribution::uniform_sphere(8);
            let r = check_prop1(&dist, tau, 10_000, 6, 21).unwrap();
            assert_eq!(r.lower_violations, 0, "tau {tau}");
            assert_eq!(r.upper_violations, 0, "tau {tau}");
        }
    }

    #[test]
    fn prop1_equality_at_perfect_alignment() {
        let dist = EmbeddingDistribution::new(
            DistributionKind::UniformSphere { dim: 6 },
            PositiveRule::FixedSimilarity(1.0),
        )
        .unwrap();
        let r = check_prop1(&dist, 0.5, 10_000, 4, 22).unwrap();
        assert_eq!(r.lower_violations, 0);
        assert_eq!(r.upper_violations, 0);
        // slack is 0, so the sandwich pinches: max gaps ~ 0 on both sides.
        assert!(r.max_lower_gap.abs() < 1e-9);
        assert!(r.max_upper_gap.abs() < 1e-9);
    }

    #[test]
    fn fixed_similarity_positive_is_exact() {
        let mut rng = crate::rng::stream(31, &[1]);
        for &s in &[-0.5, 0.0, 0.3, 0.99] {
            let dist = EmbeddingDistribution::new(
                DistributionKind::UniformSphere { dim: 5 },
                PositiveRule::FixedSimilarity(s),
            )
            .unwrap();
            for _ in 0..50 {
                let a = dist.sample_anchor(&mut rng);
                let p = dist.sample_positive(&mut rng, &a);
                assert!((dot(&a, &p) - s).abs() < 1e-9);
                assert!((norm(&p) - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn fault_injection_trips_limit_gate() {
        // A negative-only loss implemented without its -1/tau shift would
        // converge to closed_form + 1/tau; the limit gate must catch it.
        let dist = EmbeddingDistribution::two_point();
        let good = limit_estimate(&dist, 1.0, 1000, 41).unwrap();
        let closed = two_point_closed_form_limit(1.0, 1.0);
        assert!(limit_matches_closed_form(&good, closed));
        let faulty = LimitEstimate {
            value: good.value + 1.0,
            ..good
        };
        assert!(!limit_matches_closed_form(&faulty, closed));
    }

    #[test]
    fn vmf_like_concentrates() {
        let dist = EmbeddingDistribution::new(
            DistributionKind::VmfLike { dim: 6, concentration: 20.0 },
            PositiveRule::Identical,
        )
        .unwrap();
        let mut rng = crate::rng::stream(51, &[1]);
        let mut mean_first = 0.0;
        for _ in 0..500 {
            let v = dist.sample_anchor(&mut rng);
            assert!((norm(&v) - 1.0).abs() < 1e-9);
            mean_first += v[0];
        }
        assert!(mean_first / 500.0 > 0.9);
    }
}
