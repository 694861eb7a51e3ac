//! Graph and dataset data model: ingestion of the TUDataset text format,
//! synthetic dataset generation, block-diagonal batching, and adjacency
//! normalization.
//!
//! Node order is canonical (dataset file order). The 2D spectral pipeline
//! downstream is order-sensitive, so loaders never reorder nodes.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::{self, domain};

/// One undirected graph: an N×d feature matrix plus an undirected simple
/// edge set stored as canonical `(a, b)` pairs with `a < b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    features: Matrix,
    edges: Vec<(usize, usize)>,
    label: Option<usize>,
}

impl Graph {
    /// Build a graph, canonicalizing the edge list (order-normalized,
    /// sorted, deduplicated). Self-loops and out-of-range endpoints are
    /// rejected; normalization is the only step that adds self-loops.
    pub fn new(
        features: Matrix,
        edges: Vec<(usize, usize)>,
        label: Option<usize>,
    ) -> Result<Self> {
        let n = features.rows();
        if n == 0 {
            return Err(Error::Argument("graph must have at least one node".into()));
        }
        let mut canon = Vec::with_capacity(edges.len());
        for (u, v) in edges {
            if u == v {
                return Err(Error::Argument(format!("self-loop on node {u}")));
            }
            if u >= n || v >= n {
                return Err(Error::Argument(format!(
                    "edge ({u},{v}) outside node range 0..{n}"
                )));
            }
            canon.push((u.min(v), u.max(v)));
        }
        canon.sort_unstable();
        canon.dedup();
        Ok(Graph {
            features,
            edges: canon,
            label,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.features.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    /// Undirected edges as canonical `(a, b)` pairs, `a < b`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn label(&self) -> Option<usize> {
        self.label
    }

    pub fn degree(&self, node: usize) -> usize {
        self.edges
            .iter()
            .filter(|&&(a, b)| a == node || b == node)
            .count()
    }

    /// Dense symmetric 0/1 adjacency.
    pub fn adjacency_dense(&self) -> Matrix {
        let n = self.num_nodes();
        let mut a = Matrix::zeros(n, n);
        for &(u, v) in &self.edges {
            a.set(u, v, 1.0);
            a.set(v, u, 1.0);
        }
        a
    }

    /// Same structure and label, different feature matrix.
    pub fn with_features(&self, features: Matrix) -> Result<Graph> {
        if features.rows() != self.num_nodes() {
            return Err(Error::Argument(format!(
                "feature rows {} do not match node count {}",
                features.rows(),
                self.num_nodes()
            )));
        }
        Ok(Graph {
            features,
            edges: self.edges.clone(),
            label: self.label,
        })
    }

    /// Same features and label, different edge set.
    pub fn with_edges(&self, edges: Vec<(usize, usize)>) -> Result<Graph> {
        Graph::new(self.features.clone(), edges, self.label)
    }
}

/// An ordered collection of graphs sharing one feature dimensionality.
#[derive(Debug, Clone)]
pub struct Dataset {
    graphs: Vec<Graph>,
    num_classes: usize,
    feature_dim: usize,
}

impl Dataset {
    pub fn new(graphs: Vec<Graph>, num_classes: usize) -> Result<Self> {
        if graphs.is_empty() {
            return Err(Error::Argument("dataset must contain graphs".into()));
        }
        let feature_dim = graphs[0].feature_dim();
        for (i, g) in graphs.iter().enumerate() {
            if g.feature_dim() != feature_dim {
                return Err(Error::Argument(format!(
                    "graph {i} has feature dim {} but dataset uses {feature_dim}",
                    g.feature_dim()
                )));
            }
            if let Some(l) = g.label() {
                if l >= num_classes {
                    return Err(Error::Argument(format!(
                        "graph {i} label {l} outside 0..{num_classes}"
                    )));
                }
            }
        }
        Ok(Dataset {
            graphs,
            num_classes,
            feature_dim,
        })
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn graphs(&self) -> &[Graph] {
        &self.graphs
    }

    pub fn graph(&self, i: usize) -> &Graph {
        &self.graphs[i]
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn labels(&self) -> Vec<usize> {
        self.graphs.iter().map(|g| g.label().unwrap_or(0)).collect()
    }

    pub fn mean_node_count(&self) -> f64 {
        let total: usize = self.graphs.iter().map(|g| g.num_nodes()).sum();
        total as f64 / self.graphs.len() as f64
    }
}

/// Symmetric sparse operator with a fixed triplet order, used for the
/// normalized propagation `Â·H`. The deterministic entry order pins the
/// floating-point summation order across runs.
#[derive(Debug, Clone)]
pub struct SparseSym {
    n: usize,
    // (row, col, weight), sorted by (row, col), both edge directions plus
    // the diagonal present explicitly.
    triplets: Vec<(usize, usize, f64)>,
}

impl SparseSym {
    pub fn dim(&self) -> usize {
        self.n
    }

    /// `self * h` where `h` is n×d.
    pub fn apply(&self, h: &Matrix) -> Matrix {
        assert_eq!(h.rows(), self.n, "operator/matrix dim mismatch");
        let mut out = Matrix::zeros(self.n, h.cols());
        for &(i, j, w) in &self.triplets {
            let src = h.row(j);
            // Split borrows: copy the source row values through indexing.
            for c in 0..h.cols() {
                let v = w * src[c];
                let o = out.row_mut(i);
                o[c] += v;
            }
        }
        out
    }
}

/// Block-diagonal assembly of several graphs for one encoder pass.
#[derive(Debug, Clone)]
pub struct GraphBatch {
    features: Matrix,
    edges: Vec<(usize, usize)>,
    graph_index: Vec<usize>,
    node_offsets: Vec<usize>,
}

impl GraphBatch {
    pub fn batch_size(&self) -> usize {
        self.node_offsets.len() - 1
    }

    pub fn total_nodes(&self) -> usize {
        self.features.rows()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    /// Undirected block-diagonal edges with global node ids.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// For each stacked node row, the batch position of its source graph.
    pub fn graph_index(&self) -> &[usize] {
        &self.graph_index
    }

    /// Node-row range of graph `b` in the stacked matrices.
    pub fn node_range(&self, b: usize) -> std::ops::Range<usize> {
        self.node_offsets[b]..self.node_offsets[b + 1]
    }

    pub fn block_adjacency_dense(&self) -> Matrix {
        let n = self.total_nodes();
        let mut a = Matrix::zeros(n, n);
        for &(u, v) in &self.edges {
            a.set(u, v, 1.0);
            a.set(v, u, 1.0);
        }
        a
    }

    /// Symmetrically normalized propagation operator `D̃^{-1/2}(A+I)D̃^{-1/2}`
    /// over the block-diagonal adjacency.
    pub fn normalized_operator(&self) -> SparseSym {
        let n = self.total_nodes();
        let mut degree = vec![1.0f64; n]; // self-loop included
        for &(u, v) in &self.edges {
            degree[u] += 1.0;
            degree[v] += 1.0;
        }
        let inv_sqrt: Vec<f64> = degree.iter().map(|d| 1.0 / d.sqrt()).collect();
        let mut triplets = Vec::with_capacity(self.edges.len() * 2 + n);
        for i in 0..n {
            triplets.push((i, i, inv_sqrt[i] * inv_sqrt[i]));
        }
        for &(u, v) in &self.edges {
            let w = inv_sqrt[u] * inv_sqrt[v];
            triplets.push((u, v, w));
            triplets.push((v, u, w));
        }
        triplets.sort_unstable_by_key(|&(i, j, _)| (i, j));
        SparseSym { n, triplets }
    }

    /// Unnormalized neighbor-sum operator `A` (no self-loops), used by the
    /// sum-aggregation encoder kind.
    pub fn raw_adjacency_operator(&self) -> SparseSym {
        let n = self.total_nodes();
        let mut triplets = Vec::with_capacity(self.edges.len() * 2);
        for &(u, v) in &self.edges {
            triplets.push((u, v, 1.0));
            triplets.push((v, u, 1.0));
        }
        triplets.sort_unstable_by_key(|&(i, j, _)| (i, j));
        SparseSym { n, triplets }
    }
}

/// Assemble the graphs at `indices` into one block-diagonal batch,
/// preserving each graph's internal node order.
pub fn batch(dataset: &Dataset, indices: &[usize]) -> Result<GraphBatch> {
    if indices.is_empty() {
        return Err(Error::Argument("batch indices are empty".into()));
    }
    for &i in indices {
        if i >= dataset.len() {
            return Err(Error::Argument(format!(
                "batch index {i} out of range 0..{}",
                dataset.len()
            )));
        }
    }
    batch_graphs(indices.iter().map(|&i| dataset.graph(i)))
}

/// Batch assembly from owned/borrowed graph references (used for augmented
/// views that are not part of a dataset).
pub fn batch_graphs<'a>(graphs: impl IntoIterator<Item = &'a Graph>) -> Result<GraphBatch> {
    let graphs: Vec<&Graph> = graphs.into_iter().collect();
    if graphs.is_empty() {
        return Err(Error::Argument("batch is empty".into()));
    }
    let dim = graphs[0].feature_dim();
    let total: usize = graphs.iter().map(|g| g.num_nodes()).sum();
    let mut features = Matrix::zeros(total, dim);
    let mut edges = Vec::new();
    let mut graph_index = Vec::with_capacity(total);
    let mut node_offsets = Vec::with_capacity(graphs.len() + 1);
    node_offsets.push(0);
    let mut offset = 0;
    for (b, g) in graphs.iter().enumerate() {
        if g.feature_dim() != dim {
            return Err(Error::Argument("mixed feature dims in one batch".into()));
        }
        for i in 0..g.num_nodes() {
            features.row_mut(offset + i).copy_from_slice(g.features().row(i));
            graph_index.push(b);
        }
        for &(u, v) in g.edges() {
            edges.push((offset + u, offset + v));
        }
        offset += g.num_nodes();
        node_offsets.push(offset);
    }
    Ok(GraphBatch {
        features,
        edges,
        graph_index,
        node_offsets,
    })
}

/// Symmetric normalization with self-loops: `D̃^{-1/2}(A+I)D̃^{-1/2}`.
///
/// Input must be a symmetric 0/1 matrix. Isolated nodes are covered by the
/// added self-loop, so every input normalizes cleanly.
pub fn normalize_adjacency(adjacency: &Matrix) -> Result<Matrix> {
    let n = adjacency.rows();
    if n == 0 || adjacency.cols() != n {
        return Err(Error::Argument("adjacency must be square and non-empty".into()));
    }
    for i in 0..n {
        for j in 0..n {
            let v = adjacency.get(i, j);
            if v != 0.0 && v != 1.0 {
                return Err(Error::Argument(format!(
                    "adjacency entry ({i},{j}) = {v} is not binary"
                )));
            }
        }
    }
    if adjacency.max_asymmetry()? > 0.0 {
        return Err(Error::Argument("adjacency is not symmetric".into()));
    }
    let mut degree = vec![1.0f64; n];
    for i in 0..n {
        for j in 0..n {
            if i != j && adjacency.get(i, j) == 1.0 {
                degree[i] += 1.0;
            }
        }
    }
    let inv_sqrt: Vec<f64> = degree.iter().map(|d| 1.0 / d.sqrt()).collect();
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let a = if i == j { 1.0 } else { adjacency.get(i, j) };
            if a == 1.0 {
                out.set(i, j, inv_sqrt[i] * inv_sqrt[j]);
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// TUDataset ingestion
// ---------------------------------------------------------------------------

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| {
        Error::Ingest(format!("cannot read {}: {e}", path.display()))
    })?;
    Ok(text
        .lines()
        .map(|l| l.trim().to_string())
        .filter(|l| !l.is_empty())
        .collect())
}

fn parse_fields(line: &str) -> Vec<&str> {
    line.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .collect()
}

/// Load a dataset in the TUDataset raw text format from
/// `<root>/<name>_*.txt`.
///
/// Required files: `_A.txt` (1-indexed edge list), `_graph_indicator.txt`,
/// `_graph_labels.txt`. Node features come from `_node_attributes.txt` when
/// present, otherwise from a one-hot encoding of `_node_labels.txt`,
/// otherwise a single all-ones column. Graph labels are remapped to a
/// contiguous `0..C`.
pub fn load_tudataset(root_path: &Path, name: &str) -> Result<Dataset> {
    let file = |suffix: &str| root_path.join(format!("{name}_{suffix}.txt"));

    let indicator_path = file("graph_indicator");
    if !indicator_path.exists() {
        return Err(Error::Ingest(format!(
            "missing mandatory file {}",
            indicator_path.display()
        )));
    }
    let a_path = file("A");
    if !a_path.exists() {
        return Err(Error::Ingest(format!("missing mandatory file {}", a_path.display())));
    }
    let labels_path = file("graph_labels");
    if !labels_path.exists() {
        return Err(Error::Ingest(format!(
            "missing mandatory file {}",
            labels_path.display()
        )));
    }

    // graph_indicator: line k = graph id of global node k (both 1-indexed).
    let indicator_lines = read_lines(&indicator_path)?;
    let mut node_graph = Vec::with_capacity(indicator_lines.len());
    let mut num_graphs = 0usize;
    for (lineno, line) in indicator_lines.iter().enumerate() {
        let gid: usize = line.parse().map_err(|_| Error::Format {
            file: indicator_path.display().to_string(),
            line: lineno + 1,
            msg: format!("expected integer graph id, got '{line}'"),
        })?;
        if gid == 0 {
            return Err(Error::Format {
                file: indicator_path.display().to_string(),
                line: lineno + 1,
                msg: "graph ids are 1-indexed".into(),
            });
        }
        node_graph.push(gid - 1);
        num_graphs = num_graphs.max(gid);
    }
    let total_nodes = node_graph.len();
    if total_nodes == 0 {
        return Err(Error::Ingest(format!(
            "{} lists no nodes",
            indicator_path.display()
        )));
    }

    // Local node index within its graph, in file order.
    let mut node_local = vec![0usize; total_nodes];
    let mut graph_sizes = vec![0usize; num_graphs];
    for (node, &g) in node_graph.iter().enumerate() {
        node_local[node] = graph_sizes[g];
        graph_sizes[g] += 1;
    }
    if graph_sizes.iter().any(|&s| s == 0) {
        return Err(Error::Ingest(format!(
            "{} leaves at least one graph without nodes",
            indicator_path.display()
        )));
    }

    // Edges, converted to 0-indexed local pairs per graph.
    let mut graph_edges: Vec<Vec<(usize, usize)>> = vec![Vec::new(); num_graphs];
    let a_lines = read_lines(&a_path)?;
    for (lineno, line) in a_lines.iter().enumerate() {
        let fields = parse_fields(line);
        if fields.len() != 2 {
            return Err(Error::Format {
                file: a_path.display().to_string(),
                line: lineno + 1,
                msg: format!("expected two endpoints, got '{line}'"),
            });
        }
        let parse_endpoint = |s: &str| -> Result<usize> {
            let v: usize = s.parse().map_err(|_| Error::Format {
                file: a_path.display().to_string(),
                line: lineno + 1,
                msg: format!("invalid node id '{s}'"),
            })?;
            if v == 0 || v > total_nodes {
                return Err(Error::Format {
                    file: a_path.display().to_string(),
                    line: lineno + 1,
                    msg: format!("node id {v} outside 1..={total_nodes}"),
                });
            }
            Ok(v - 1)
        };
        let u = parse_endpoint(fields[0])?;
        let v = parse_endpoint(fields[1])?;
        if node_graph[u] != node_graph[v] {
            return Err(Error::Format {
                file: a_path.display().to_string(),
                line: lineno + 1,
                msg: format!(
                    "edge endpoint outside its graph's node range: nodes {} and {} belong to graphs {} and {}",
                    u + 1,
                    v + 1,
                    node_graph[u] + 1,
                    node_graph[v] + 1
                ),
            });
        }
        if u == v {
            return Err(Error::Format {
                file: a_path.display().to_string(),
                line: lineno + 1,
                msg: format!("self-loop on node {}", u + 1),
            });
        }
        graph_edges[node_graph[u]].push((node_local[u], node_local[v]));
    }

    // Graph labels remapped to contiguous 0..C.
    let label_lines = read_lines(&labels_path)?;
    if label_lines.len() != num_graphs {
        return Err(Error::Ingest(format!(
            "{} has {} labels for {} graphs",
            labels_path.display(),
            label_lines.len(),
            num_graphs
        )));
    }
    let mut raw_labels = Vec::with_capacity(num_graphs);
    for (lineno, line) in label_lines.iter().enumerate() {
        let v: i64 = line.parse().map_err(|_| Error::Format {
            file: labels_path.display().to_string(),
            line: lineno + 1,
            msg: format!("expected integer label, got '{line}'"),
        })?;
        raw_labels.push(v);
    }
    let mut distinct: Vec<i64> = raw_labels.clone();
    distinct.sort_unstable();
    distinct.dedup();
    let labels: Vec<usize> = raw_labels
        .iter()
        .map(|v| distinct.binary_search(v).unwrap())
        .collect();

    // Node features: attributes, else one-hot node labels, else all-ones.
    let attr_path = file("node_attributes");
    let nlabel_path = file("node_labels");
    let node_features: Vec<Vec<f64>> = if attr_path.exists() {
        let lines = read_lines(&attr_path)?;
        if lines.len() != total_nodes {
            return Err(Error::Ingest(format!(
                "{} has {} rows for {} nodes",
                attr_path.display(),
                lines.len(),
                total_nodes
            )));
        }
        let mut rows = Vec::with_capacity(total_nodes);
        let mut width = None;
        for (lineno, line) in lines.iter().enumerate() {
            let row: Vec<f64> = parse_fields(line)
                .iter()
                .map(|s| {
                    s.parse::<f64>().map_err(|_| Error::Format {
                        file: attr_path.display().to_string(),
                        line: lineno + 1,
                        msg: format!("invalid attribute '{s}'"),
                    })
                })
                .collect::<Result<_>>()?;
            if let Some(w) = width {
                if row.len() != w {
                    return Err(Error::Format {
                        file: attr_path.display().to_string(),
                        line: lineno + 1,
                        msg: format!("expected {w} attributes, got {}", row.len()),
                    });
                }
            } else {
                width = Some(row.len());
            }
            rows.push(row);
        }
        rows
    } else if nlabel_path.exists() {
        let lines = read_lines(&nlabel_path)?;
        if lines.len() != total_nodes {
            return Err(Error::Ingest(format!(
                "{} has {} rows for {} nodes",
                nlabel_path.display(),
                lines.len(),
                total_nodes
            )));
        }
        let mut raw = Vec::with_capacity(total_nodes);
        for (lineno, line) in lines.iter().enumerate() {
            // Some distributions put multiple labels per line; use the first.
            let fields = parse_fields(line);
            let v: i64 = fields
                .first()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Format {
                    file: nlabel_path.display().to_string(),
                    line: lineno + 1,
                    msg: format!("expected integer node label, got '{line}'"),
                })?;
            raw.push(v);
        }
        let mut distinct: Vec<i64> = raw.clone();
        distinct.sort_unstable();
        distinct.dedup();
        raw.iter()
            .map(|v| {
                let mut row = vec![0.0; distinct.len()];
                row[distinct.binary_search(v).unwrap()] = 1.0;
                row
            })
            .collect()
    } else {
        vec![vec![1.0]; total_nodes]
    };

    // Assemble per-graph feature matrices and graphs.
    let dim = node_features[0].len();
    let mut per_graph_rows: Vec<Vec<Vec<f64>>> =
        graph_sizes.iter().map(|&s| Vec::with_capacity(s)).collect();
    for (node, row) in node_features.into_iter().enumerate() {
        per_graph_rows[node_graph[node]].push(row);
    }
    let mut graphs = Vec::with_capacity(num_graphs);
    for (g, rows) in per_graph_rows.into_iter().enumerate() {
        debug_assert!(rows.iter().all(|r| r.len() == dim));
        let features = Matrix::from_rows(&rows);
        graphs.push(Graph::new(features, graph_edges[g].clone(), Some(labels[g]))?);
    }
    Dataset::new(graphs, distinct.len())
}

/// Write a dataset back out in the TUDataset text format (both edge
/// directions listed, 1-indexed, features as `_node_attributes.txt`).
pub fn save_tudataset(dataset: &Dataset, root_path: &Path, name: &str) -> Result<()> {
    fs::create_dir_all(root_path)?;
    let mut a = fs::File::create(root_path.join(format!("{name}_A.txt")))?;
    let mut indicator = fs::File::create(root_path.join(format!("{name}_graph_indicator.txt")))?;
    let mut labels = fs::File::create(root_path.join(format!("{name}_graph_labels.txt")))?;
    let mut attrs = fs::File::create(root_path.join(format!("{name}_node_attributes.txt")))?;

    let mut offset = 0usize;
    for (g, graph) in dataset.graphs().iter().enumerate() {
        for &(u, v) in graph.edges() {
            writeln!(a, "{}, {}", offset + u + 1, offset + v + 1)?;
            writeln!(a, "{}, {}", offset + v + 1, offset + u + 1)?;
        }
        for i in 0..graph.num_nodes() {
            writeln!(indicator, "{}", g + 1)?;
            let row: Vec<String> = graph
                .features()
                .row(i)
                .iter()
                .map(|v| format!("{v:?}"))
                .collect();
            writeln!(attrs, "{}", row.join(", "))?;
        }
        writeln!(labels, "{}", graph.label().unwrap_or(0))?;
        offset += graph.num_nodes();
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

/// Feature dimensionality produced by [`make_synthetic_sbm`].
pub const SBM_FEATURE_DIM: usize = 4;

/// Generate a two-class dataset of independent-edge graphs: class 0 at
/// within-graph edge density `p_in_class0`, class 1 at `p_in_class1`.
/// Classes alternate over graph index. Node features are degree-derived
/// statistics plus Gaussian noise of scale `feature_noise`.
pub fn make_synthetic_sbm(
    n_graphs: usize,
    nodes_per_graph: usize,
    p_in_class0: f64,
    p_in_class1: f64,
    feature_noise: f64,
    seed: u64,
) -> Result<Dataset> {
    if n_graphs == 0 || n_graphs % 2 != 0 {
        return Err(Error::Argument(format!(
            "n_graphs must be positive and even for balanced classes, got {n_graphs}"
        )));
    }
    if nodes_per_graph < 2 {
        return Err(Error::Argument(format!(
            "nodes_per_graph must be at least 2, got {nodes_per_graph}"
        )));
    }
    for (name, p) in [("p_in_class0", p_in_class0), ("p_in_class1", p_in_class1)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Argument(format!("{name} = {p} outside [0, 1]")));
        }
    }
    if !(feature_noise >= 0.0) {
        return Err(Error::Argument(format!(
            "feature_noise must be non-negative, got {feature_noise}"
        )));
    }

    let n = nodes_per_graph;
    let mut graphs = Vec::with_capacity(n_graphs);
    for g in 0..n_graphs {
        let class = g % 2;
        let p = if class == 0 { p_in_class0 } else { p_in_class1 };
        let mut rng = rng::stream(seed, &[domain::SBM, g as u64]);

        let mut edges = Vec::new();
        for u in 0..n {
            for v in (u + 1)..n {
                if rng.random::<f64>() < p {
                    edges.push((u, v));
                }
            }
        }

        let mut degree = vec![0usize; n];
        for &(u, v) in &edges {
            degree[u] += 1;
            degree[v] += 1;
        }
        let mut neighbor_deg_sum = vec![0usize; n];
        for &(u, v) in &edges {
            neighbor_deg_sum[u] += degree[v];
            neighbor_deg_sum[v] += degree[u];
        }

        let scale = (n - 1) as f64;
        let mut features = Matrix::zeros(n, SBM_FEATURE_DIM);
        for i in 0..n {
            let d = degree[i] as f64 / scale;
            let mean_nbr = if degree[i] > 0 {
                neighbor_deg_sum[i] as f64 / degree[i] as f64 / scale
            } else {
                0.0
            };
            let base = [d, d * d, mean_nbr, 1.0];
            for (c, &b) in base.iter().enumerate() {
                let noise: f64 = rng.sample(StandardNormal);
                features.set(i, c, b + feature_noise * noise);
            }
        }
        graphs.push(Graph::new(features, edges, Some(class))?);
    }
    Dataset::new(graphs, 2)
}
