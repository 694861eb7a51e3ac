//! View generation: Bernoulli node masking, Bernoulli edge dropping, and
//! the low-pass / high-pass frequency-split feature pipelines.
//!
//! A view pair shares one node-masked feature matrix; view A keeps the
//! original edges and one frequency band of those features, view B gets an
//! edge-perturbed structure and the complementary band. With the default
//! band assignment the two views' feature energies therefore partition the
//! masked signal exactly (Parseval).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::Matrix;
use crate::rng::{self, domain};
use crate::spectral::{self, FreqMask, MaskKind};
use rand::Rng;

/// Which frequency band a view's features carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Band {
    Low,
    High,
}

impl Band {
    fn mask_kind(self) -> MaskKind {
        match self {
            Band::Low => MaskKind::Low,
            Band::High => MaskKind::High,
        }
    }
}

/// Configuration for one augmentation pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    /// Per-node keep probability for feature masking.
    pub omega_node: f64,
    /// Per-edge keep probability for edge perturbation.
    pub omega_edge: f64,
    /// Low-frequency radius as a fraction of the maximal center distance.
    pub radius_ratio: f64,
    pub seed: u64,
    /// Band assignment; (Low, High) by default, switchable for ablations.
    pub band_a: Band,
    pub band_b: Band,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            omega_node: 0.9,
            omega_edge: 0.9,
            radius_ratio: 0.5,
            seed: 0,
            band_a: Band::Low,
            band_b: Band::High,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("omega_node", self.omega_node),
            ("omega_edge", self.omega_edge),
            ("radius_ratio", self.radius_ratio),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Argument(format!("{name} = {p} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Zero each node's feature row independently with probability `1 - omega`.
/// Edges are untouched. Deterministic given the seed.
pub fn node_mask_view(g: &Graph, omega: f64, seed: u64) -> Result<Graph> {
    if !(0.0..=1.0).contains(&omega) {
        return Err(Error::Argument(format!("omega = {omega} outside [0, 1]")));
    }
    let mut rng = rng::stream(seed, &[domain::NODE_MASK]);
    let mut features = g.features().clone();
    for i in 0..g.num_nodes() {
        let keep = rng.random::<f64>() < omega;
        if !keep {
            features.row_mut(i).fill(0.0);
        }
    }
    g.with_features(features)
}

/// Drop each undirected edge independently with probability `1 - omega`.
/// One draw per undirected edge keeps the adjacency symmetric. Features are
/// untouched. Deterministic given the seed.
pub fn edge_perturb_view(g: &Graph, omega: f64, seed: u64) -> Result<Graph> {
    if !(0.0..=1.0).contains(&omega) {
        return Err(Error::Argument(format!("omega = {omega} outside [0, 1]")));
    }
    let mut rng = rng::stream(seed, &[domain::EDGE_PERTURB]);
    let kept = g
        .edges()
        .iter()
        .copied()
        .filter(|_| rng.random::<f64>() < omega)
        .collect();
    g.with_edges(kept)
}

fn band_filter(x: &Matrix, radius_ratio: f64, band: Band) -> Result<Matrix> {
    if !(0.0..=1.0).contains(&radius_ratio) {
        return Err(Error::Argument(format!(
            "radius_ratio = {radius_ratio} outside [0, 1]"
        )));
    }
    let d_low = radius_ratio * FreqMask::max_radius(x.rows(), x.cols());
    let field = spectral::fshift(&spectral::dft2(x)?)?;
    let mask = spectral::build_mask(x.rows(), x.cols(), d_low, band.mask_kind())?;
    let masked = spectral::apply_mask(&field, &mask)?;
    spectral::idft2(&spectral::ifshift(&masked)?)
}

/// Keep only frequency cells within `r * R_max` of the spectrum center.
pub fn low_pass_features(x: &Matrix, radius_ratio: f64) -> Result<Matrix> {
    band_filter(x, radius_ratio, Band::Low)
}

/// Complement of [`low_pass_features`]; the two reconstructions sum back to
/// the input.
pub fn high_pass_features(x: &Matrix, radius_ratio: f64) -> Result<Matrix> {
    band_filter(x, radius_ratio, Band::High)
}

/// Produce the two contrastive views of a graph.
///
/// Pipeline: node-mask the features once, then
///   view A = band_a filter of the masked features over the original edges,
///   view B = band_b filter of the masked features over edge-perturbed
///            structure.
/// Node masking and edge perturbation draw from decorrelated substreams of
/// the seed, so the pair is a pure function of `(g, cfg)`.
pub fn make_view_pair(g: &Graph, cfg: &AugmentConfig) -> Result<(Graph, Graph)> {
    cfg.validate()?;
    let masked = node_mask_view(g, cfg.omega_node, rng::derive(cfg.seed, &[1]))?;
    let view_a = masked.with_features(band_filter(masked.features(), cfg.radius_ratio, cfg.band_a)?)?;
    let perturbed = edge_perturb_view(&masked, cfg.omega_edge, rng::derive(cfg.seed, &[2]))?;
    let view_b = perturbed.with_features(band_filter(masked.features(), cfg.radius_ratio, cfg.band_b)?)?;
    Ok((view_a, view_b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::make_synthetic_sbm;

    fn sample_graph(seed: u64) -> Graph {
        make_synthetic_sbm(2, 8, 0.5, 0.5, 0.4, seed).unwrap().graph(0).clone()
    }

    #[test]
    fn node_mask_extremes() {
        let g = sample_graph(1);
        let kept = node_mask_view(&g, 1.0, 3).unwrap();
        assert_eq!(kept.features().data(), g.features().data());
        let dropped = node_mask_view(&g, 0.0, 3).unwrap();
        assert!(dropped.features().data().iter().all(|&v| v == 0.0));
        assert_eq!(dropped.edges(), g.edges());
    }

    #[test]
    fn node_mask_keep_rate_within_binomial_band() {
        let ds = make_synthetic_sbm(2, 1000, 0.01, 0.01, 1.0, 5).unwrap();
        let g = ds.graph(0);
        let masked = node_mask_view(g, 0.5, 11).unwrap();
        let kept = (0..g.num_nodes())
            .filter(|&i| masked.features().row(i).iter().any(|&v| v != 0.0))
            .count();
        let frac = kept as f64 / 1000.0;
        // +-3 sigma of Bin(1000, 0.5).
        assert!((0.453..=0.547).contains(&frac), "kept fraction {frac}");
    }

    #[test]
    fn edge_perturb_extremes() {
        let g = sample_graph(2);
        let same = edge_perturb_view(&g, 1.0, 3).unwrap();
        assert_eq!(same.edges(), g.edges());
        let empty = edge_perturb_view(&g, 0.0, 3).unwrap();
        assert_eq!(empty.num_edges(), 0);
        assert_eq!(empty.features().data(), g.features().data());
    }

    #[test]
    fn edge_perturb_keep_rate_within_binomial_band() {
        // Complete graph on 64 nodes has 2016 edges.
        let ds = make_synthetic_sbm(2, 64, 1.0, 1.0, 0.0, 9).unwrap();
        let g = ds.graph(0);
        let total = g.num_edges() as f64;
        let kept = edge_perturb_view(g, 0.7, 21).unwrap().num_edges() as f64;
        let sigma = (total * 0.7 * 0.3).sqrt();
        assert!(
            (kept - total * 0.7).abs() <= 3.0 * sigma,
            "kept {kept} of {total}"
        );
    }

    #[test]
    fn edge_views_stay_symmetric_and_loop_free() {
        let g = sample_graph(4);
        let v = edge_perturb_view(&g, 0.5, 77).unwrap();
        for &(a, b) in v.edges() {
            assert!(a < b);
        }
        assert!(v.adjacency_dense().max_asymmetry().unwrap() == 0.0);
    }

    #[test]
    fn constant_matrix_is_pure_dc() {
        let x = Matrix::from_vec(6, 4, vec![2.5; 24]);
        for r in [0.0, 0.3, 0.8, 1.0] {
            let low = low_pass_features(&x, r).unwrap();
            assert!(low.max_abs_diff(&x) < 1e-9, "r = {r}");
            let high = high_pass_features(&x, r).unwrap();
            assert!(high.data().iter().all(|v| v.abs() < 1e-9), "r = {r}");
        }
    }

    #[test]
    fn band_split_reconstructs_input() {
        let g = sample_graph(6);
        for r in [0.0, 0.25, 0.5, 0.9, 1.0] {
            let low = low_pass_features(g.features(), r).unwrap();
            let mut sum = low.clone();
            sum.add_assign(&high_pass_features(g.features(), r).unwrap());
            assert!(sum.max_abs_diff(g.features()) < 1e-9, "r = {r}");
        }
    }

    #[test]
    fn view_pair_saturation_case() {
        let g = sample_graph(8);
        let cfg = AugmentConfig {
            omega_node: 1.0,
            omega_edge: 1.0,
            radius_ratio: 1.0,
            seed: 13,
            ..AugmentConfig::default()
        };
        let (a, b) = make_view_pair(&g, &cfg).unwrap();
        assert!(a.features().max_abs_diff(g.features()) < 1e-9);
        assert_eq!(a.edges(), g.edges());
        assert!(b.features().data().iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn view_pair_deterministic() {
        let g = sample_graph(9);
        let cfg = AugmentConfig { seed: 5, ..AugmentConfig::default() };
        let (a1, b1) = make_view_pair(&g, &cfg).unwrap();
        let (a2, b2) = make_view_pair(&g, &cfg).unwrap();
        assert_eq!(a1, a2);
        assert_eq!(b1, b2);
    }

    #[test]
    fn view_energies_partition_masked_energy() {
        let g = sample_graph(10);
        let cfg = AugmentConfig {
            omega_node: 0.6,
            radius_ratio: 0.5,
            seed: 3,
            ..AugmentConfig::default()
        };
        let masked = node_mask_view(&g, cfg.omega_node, crate::rng::derive(cfg.seed, &[1])).unwrap();
        let (a, b) = make_view_pair(&g, &cfg).unwrap();
        let lhs = a.features().energy() + b.features().energy();
        let rhs = masked.features().energy();
        assert!((lhs - rhs).abs() / rhs.max(1e-12) < 1e-9, "{lhs} vs {rhs}");
    }
}
