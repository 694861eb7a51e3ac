//! Graph encoders and their hand-derived reverse-mode gradients.
//!
//! Three layer kinds share one parameter container:
//! - `Fourier`: propagate `Â·H·W`, transform each node's feature row to the
//!   frequency domain, multiply pointwise by a learnable complex filter
//!   `theta`, transform back, ReLU. With `theta = 1` the transform pair is
//!   the identity, so a fresh Fourier layer reproduces a GCN layer exactly;
//!   that equivalence is the permanent regression anchor for this code.
//! - `Gcn`: propagate `Â·H·W`, ReLU (the short-circuited `theta = 1` path).
//! - `Gin`: sum aggregation `(1+eps)·h_v + sum_{u in N(v)} h_u` followed by
//!   a two-layer MLP; used by the encoder ablation.
//!
//! Graph embeddings are mean-pooled node states pushed through a two-layer
//! projection head and L2-normalized, so all pairwise similarities live in
//! [-1, 1].
//!
//! The complex filter gradient treats real and imaginary parts as two real
//! channels; all losses downstream are real, so this split is exact.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{GraphBatch, SparseSym};
use crate::linalg::{norm, Matrix};
use crate::rng::{self, domain};
use crate::spectral::{fft_line, ifft_line_unnormalized};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    Fourier,
    Gcn,
    Gin,
}

impl EncoderKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EncoderKind::Fourier => "fourier",
            EncoderKind::Gcn => "gcn",
            EncoderKind::Gin => "gin",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "fourier" => Ok(EncoderKind::Fourier),
            "gcn" => Ok(EncoderKind::Gcn),
            "gin" => Ok(EncoderKind::Gin),
            other => Err(Error::Argument(format!("unknown encoder kind '{other}'"))),
        }
    }
}

/// One propagation layer: a real projection plus (per kind) a complex
/// frequency filter or a second MLP weight.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub w: Matrix,
    /// Complex frequency filter, one coefficient per output feature.
    /// Frozen at exactly 1+0i for `Gcn`; unused for `Gin`.
    pub theta: Vec<Complex64>,
    /// Second MLP weight, `Gin` only.
    pub w2: Option<Matrix>,
    /// Self-weight for sum aggregation, `Gin` only (fixed, not trained).
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub w: Matrix,
    pub b: Vec<f64>,
}

/// All trainable state of one encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub kind: EncoderKind,
    pub layers: Vec<LayerParams>,
    pub head1: DenseLayer,
    pub head2: DenseLayer,
    pub layer_dims: Vec<usize>,
    pub emb_dim: usize,
    pub init_seed: u64,
}

/// A unit-norm graph embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    /// Wrap an already-normalized vector; rejects anything off the sphere.
    pub fn unit(v: Vec<f64>) -> Result<Self> {
        let n = norm(&v);
        if (n - 1.0).abs() > 1e-6 {
            return Err(Error::Argument(format!("embedding norm {n} is not 1")));
        }
        Ok(Embedding(v))
    }

    /// Normalize and wrap. Fails on (near-)zero vectors.
    pub fn normalized(mut v: Vec<f64>) -> Result<Self> {
        let n = norm(&v);
        if n < 1e-12 || !n.is_finite() {
            return Err(Error::Numeric(format!(
                "cannot normalize embedding with norm {n}"
            )));
        }
        v.iter_mut().for_each(|x| *x /= n);
        Ok(Embedding(v))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn dot(&self, other: &Embedding) -> f64 {
        crate::linalg::dot(&self.0, &other.0)
    }
}

fn glorot(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-bound..bound))
        .collect();
    Matrix::from_vec(rows, cols, data)
}

/// Initialize encoder parameters.
///
/// `layer_dims` chains input and hidden widths, e.g. `[4, 32, 32]` for a
/// two-layer encoder over 4-dimensional features. Projection weights are
/// Glorot-uniform; every frequency filter starts at exactly 1+0i, so a
/// fresh `Fourier` encoder and a fresh `Gcn` encoder with the same seed
/// produce identical outputs. Weight draws use per-tensor substreams, which
/// keeps the shared tensors identical across kinds.
pub fn init_params(
    layer_dims: &[usize],
    emb_dim: usize,
    kind: EncoderKind,
    seed: u64,
) -> Result<EncoderParams> {
    if layer_dims.len() < 2 {
        return Err(Error::Argument(
            "layer_dims must chain at least input and one hidden width".into(),
        ));
    }
    if layer_dims.iter().any(|&d| d == 0) || emb_dim == 0 {
        return Err(Error::Argument("all dimensions must be positive".into()));
    }
    let mut layers = Vec::with_capacity(layer_dims.len() - 1);
    for l in 0..layer_dims.len() - 1 {
        let (d_in, d_out) = (layer_dims[l], layer_dims[l + 1]);
        let w = glorot(&mut rng::stream(seed, &[domain::INIT, l as u64]), d_in, d_out);
        let w2 = match kind {
            EncoderKind::Gin => Some(glorot(
                &mut rng::stream(seed, &[domain::INIT, 1000 + l as u64]),
                d_out,
                d_out,
            )),
            _ => None,
        };
        layers.push(LayerParams {
            w,
            theta: vec![Complex64::new(1.0, 0.0); d_out],
            w2,
            epsilon: 0.0,
        });
    }
    let d_last = *layer_dims.last().unwrap();
    // Small positive bias init keeps the head alive: a fully dead ReLU
    // layer (or an all-zero feature view) would otherwise emit an exactly
    // zero vector, which cannot be normalized onto the sphere.
    let head1 = DenseLayer {
        w: glorot(&mut rng::stream(seed, &[domain::INIT, 2000]), d_last, d_last),
        b: vec![0.01; d_last],
    };
    let head2 = DenseLayer {
        w: glorot(&mut rng::stream(seed, &[domain::INIT, 2001]), d_last, emb_dim),
        b: vec![0.01; emb_dim],
    };
    Ok(EncoderParams {
        kind,
        layers,
        head1,
        head2,
        layer_dims: layer_dims.to_vec(),
        emb_dim,
        init_seed: seed,
    })
}

impl EncoderParams {
    /// A same-shaped container of zeros (gradient accumulator).
    pub fn zeros_like(&self) -> EncoderParams {
        let mut out = self.clone();
        for layer in &mut out.layers {
            layer.w = Matrix::zeros(layer.w.rows(), layer.w.cols());
            layer.theta = vec![Complex64::new(0.0, 0.0); layer.theta.len()];
            if let Some(w2) = &layer.w2 {
                layer.w2 = Some(Matrix::zeros(w2.rows(), w2.cols()));
            }
        }
        out.head1.w = Matrix::zeros(out.head1.w.rows(), out.head1.w.cols());
        out.head1.b = vec![0.0; out.head1.b.len()];
        out.head2.w = Matrix::zeros(out.head2.w.rows(), out.head2.w.cols());
        out.head2.b = vec![0.0; out.head2.b.len()];
        out
    }

    pub fn add_assign(&mut self, other: &EncoderParams) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.w.add_assign(&b.w);
            for (x, y) in a.theta.iter_mut().zip(&b.theta) {
                *x += y;
            }
            if let (Some(x), Some(y)) = (a.w2.as_mut(), b.w2.as_ref()) {
                x.add_assign(y);
            }
        }
        self.head1.w.add_assign(&other.head1.w);
        for (x, y) in self.head1.b.iter_mut().zip(&other.head1.b) {
            *x += y;
        }
        self.head2.w.add_assign(&other.head2.w);
        for (x, y) in self.head2.b.iter_mut().zip(&other.head2.b) {
            *x += y;
        }
    }

    /// Number of scalars in the flattened layout.
    pub fn flat_len(&self) -> usize {
        let mut n = 0;
        for layer in &self.layers {
            n += layer.w.rows() * layer.w.cols();
            n += 2 * layer.theta.len();
            if let Some(w2) = &layer.w2 {
                n += w2.rows() * w2.cols();
            }
        }
        n += self.head1.w.rows() * self.head1.w.cols() + self.head1.b.len();
        n += self.head2.w.rows() * self.head2.w.cols() + self.head2.b.len();
        n
    }

    /// Flatten every trainable scalar into one vector. Complex filters are
    /// stored as interleaved (re, im) channels. The layout is the contract
    /// shared by `unflatten`, the optimizer state and checkpoints.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.flat_len());
        for layer in &self.layers {
            out.extend_from_slice(layer.w.data());
            for t in &layer.theta {
                out.push(t.re);
                out.push(t.im);
            }
            if let Some(w2) = &layer.w2 {
                out.extend_from_slice(w2.data());
            }
        }
        out.extend_from_slice(self.head1.w.data());
        out.extend_from_slice(&self.head1.b);
        out.extend_from_slice(self.head2.w.data());
        out.extend_from_slice(&self.head2.b);
        out
    }

    pub fn unflatten(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.flat_len() {
            return Err(Error::Argument(format!(
                "flat buffer of {} values does not match parameter count {}",
                flat.len(),
                self.flat_len()
            )));
        }
        let mut pos = 0;
        for layer in &mut self.layers {
            let wn = layer.w.rows() * layer.w.cols();
            layer.w.data_mut().copy_from_slice(&flat[pos..pos + wn]);
            pos += wn;
            for t in layer.theta.iter_mut() {
                *t = Complex64::new(flat[pos], flat[pos + 1]);
                pos += 2;
            }
            if let Some(w2) = layer.w2.as_mut() {
                let n2 = w2.rows() * w2.cols();
                w2.data_mut().copy_from_slice(&flat[pos..pos + n2]);
                pos += n2;
            }
        }
        let n1 = self.head1.w.rows() * self.head1.w.cols();
        self.head1.w.data_mut().copy_from_slice(&flat[pos..pos + n1]);
        pos += n1;
        let b1 = self.head1.b.len();
        self.head1.b.copy_from_slice(&flat[pos..pos + b1]);
        pos += b1;
        let n2 = self.head2.w.rows() * self.head2.w.cols();
        self.head2.w.data_mut().copy_from_slice(&flat[pos..pos + n2]);
        pos += n2;
        let b2 = self.head2.b.len();
        self.head2.b.copy_from_slice(&flat[pos..pos + b2]);
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

/// Propagation operator: dense for the public single-layer surface, sparse
/// inside batched training.
pub enum OpRef<'a> {
    Dense(&'a Matrix),
    Sparse(&'a SparseSym),
}

impl OpRef<'_> {
    fn apply(&self, h: &Matrix) -> Matrix {
        match self {
            OpRef::Dense(m) => m.matmul(h),
            OpRef::Sparse(s) => s.apply(h),
        }
    }
}

struct LayerCache {
    /// Propagated input (`Â·H`, or the GIN sum aggregation).
    p: Matrix,
    /// Pre-activation of the final ReLU of this layer.
    v: Matrix,
    /// Row spectra before the filter (Fourier only), row-major N×d_out.
    z: Option<Vec<Complex64>>,
    /// GIN MLP intermediates.
    t1: Option<Matrix>,
    u1: Option<Matrix>,
}

fn relu(m: &Matrix) -> Matrix {
    m.map(|x| if x > 0.0 { x } else { 0.0 })
}

fn relu_backward(pre: &Matrix, upstream: &Matrix) -> Matrix {
    let mut out = upstream.clone();
    for (o, &p) in out.data_mut().iter_mut().zip(pre.data()) {
        if p <= 0.0 {
            *o = 0.0;
        }
    }
    out
}

/// Apply the learnable frequency filter along each feature row:
/// `re(IDFT(DFT(row) ⊙ theta))`. Returns the filtered matrix and the cached
/// row spectra.
fn frequency_filter(u: &Matrix, theta: &[Complex64]) -> (Matrix, Vec<Complex64>) {
    let (n, d) = (u.rows(), u.cols());
    debug_assert_eq!(theta.len(), d);
    let mut z_cache = vec![Complex64::default(); n * d];
    let mut out = Matrix::zeros(n, d);
    let scale = 1.0 / d as f64;
    let mut buf = vec![Complex64::default(); d];
    for r in 0..n {
        for (c, &x) in u.row(r).iter().enumerate() {
            buf[c] = Complex64::new(x, 0.0);
        }
        fft_line(&mut buf);
        z_cache[r * d..(r + 1) * d].copy_from_slice(&buf);
        for (c, t) in theta.iter().enumerate() {
            buf[c] *= t;
        }
        ifft_line_unnormalized(&mut buf);
        for c in 0..d {
            out.set(r, c, buf[c].re * scale);
        }
    }
    (out, z_cache)
}

fn layer_forward_cached(
    op: &OpRef,
    h: &Matrix,
    layer: &LayerParams,
    kind: EncoderKind,
) -> Result<(Matrix, LayerCache)> {
    if h.cols() != layer.w.rows() {
        return Err(Error::Argument(format!(
            "input width {} does not match layer input dim {}",
            h.cols(),
            layer.w.rows()
        )));
    }
    let (out, cache) = match kind {
        EncoderKind::Fourier => {
            if layer.theta.len() != layer.w.cols() {
                return Err(Error::Argument(
                    "frequency filter length does not match layer output dim".into(),
                ));
            }
            let p = op.apply(h);
            let u = p.matmul(&layer.w);
            let (v, z) = frequency_filter(&u, &layer.theta);
            let out = relu(&v);
            (out, LayerCache { p, v, z: Some(z), t1: None, u1: None })
        }
        EncoderKind::Gcn => {
            let p = op.apply(h);
            let v = p.matmul(&layer.w);
            let out = relu(&v);
            (out, LayerCache { p, v, z: None, t1: None, u1: None })
        }
        EncoderKind::Gin => {
            let w2 = layer.w2.as_ref().ok_or_else(|| {
                Error::Argument("gin layer is missing its second MLP weight".into())
            })?;
            let mut agg = op.apply(h);
            let self_w = 1.0 + layer.epsilon;
            for (a, &x) in agg.data_mut().iter_mut().zip(h.data()) {
                *a += self_w * x;
            }
            let t1 = agg.matmul(&layer.w);
            let u1 = relu(&t1);
            let v = u1.matmul(w2);
            let out = relu(&v);
            (out, LayerCache { p: agg, v, z: None, t1: Some(t1), u1: Some(u1) })
        }
    };
    if !out.is_finite() {
        return Err(Error::Numeric("layer produced non-finite output".into()));
    }
    Ok((out, cache))
}

/// Single propagation layer on a dense operator.
///
/// For `Fourier`/`Gcn`, `a_op` is the normalized adjacency; for `Gin` it is
/// the raw binary adjacency (sum aggregation).
pub fn layer_forward(
    a_op: &Matrix,
    h: &Matrix,
    layer: &LayerParams,
    kind: EncoderKind,
) -> Result<Matrix> {
    let (out, _) = layer_forward_cached(&OpRef::Dense(a_op), h, layer, kind)?;
    Ok(out)
}

/// Gradients of one layer: same shapes as the layer's parameters.
#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub w: Matrix,
    pub theta: Vec<Complex64>,
    pub w2: Option<Matrix>,
}

fn layer_backward(
    op: &OpRef,
    layer: &LayerParams,
    kind: EncoderKind,
    cache: &LayerCache,
    d_out: &Matrix,
) -> (LayerGrads, Matrix) {
    match kind {
        EncoderKind::Fourier => {
            let dv = relu_backward(&cache.v, d_out);
            let z = cache.z.as_ref().expect("fourier cache has spectra");
            let (n, d) = (dv.rows(), dv.cols());
            let mut d_theta = vec![Complex64::new(0.0, 0.0); d];
            let mut du = Matrix::zeros(n, d);
            let scale = 1.0 / d as f64;
            let mut buf = vec![Complex64::default(); d];
            for r in 0..n {
                // Adjoint of re(IDFT(.)): w_hat = DFT(dv_row) / d.
                for (c, &g) in dv.row(r).iter().enumerate() {
                    buf[c] = Complex64::new(g, 0.0);
                }
                fft_line(&mut buf);
                for c in 0..d {
                    let w_hat = buf[c] * scale;
                    d_theta[c] += w_hat * z[r * d + c].conj();
                    // Adjoint of the pointwise product, then of the DFT.
                    buf[c] = w_hat * layer.theta[c].conj();
                }
                ifft_line_unnormalized(&mut buf);
                for c in 0..d {
                    du.set(r, c, buf[c].re);
                }
            }
            let dw = cache.p.transpose_matmul(&du);
            let dp = du.matmul_transpose(&layer.w);
            let dh = op.apply(&dp); // operator is symmetric
            (LayerGrads { w: dw, theta: d_theta, w2: None }, dh)
        }
        EncoderKind::Gcn => {
            let du = relu_backward(&cache.v, d_out);
            let dw = cache.p.transpose_matmul(&du);
            let dp = du.matmul_transpose(&layer.w);
            let dh = op.apply(&dp);
            (
                LayerGrads {
                    w: dw,
                    theta: vec![Complex64::new(0.0, 0.0); layer.theta.len()],
                    w2: None,
                },
                dh,
            )
        }
        EncoderKind::Gin => {
            let w2 = layer.w2.as_ref().expect("gin layer has w2");
            let t1 = cache.t1.as_ref().expect("gin cache has t1");
            let u1 = cache.u1.as_ref().expect("gin cache has u1");
            let dt2 = relu_backward(&cache.v, d_out);
            let dw2 = u1.transpose_matmul(&dt2);
            let du1 = dt2.matmul_transpose(w2);
            let dt1 = relu_backward(t1, &du1);
            let dw = cache.p.transpose_matmul(&dt1);
            let d_agg = dt1.matmul_transpose(&layer.w);
            let mut dh = op.apply(&d_agg);
            let self_w = 1.0 + layer.epsilon;
            for (a, &x) in dh.data_mut().iter_mut().zip(d_agg.data()) {
                *a += self_w * x;
            }
            (
                LayerGrads {
                    w: dw,
                    theta: vec![Complex64::new(0.0, 0.0); layer.theta.len()],
                    w2: Some(dw2),
                },
                dh,
            )
        }
    }
}

/// Gradients of a dense single-layer pass with respect to parameters and
/// input, for a scalar loss with upstream gradient `d_out`.
pub fn layer_gradients(
    a_op: &Matrix,
    h: &Matrix,
    layer: &LayerParams,
    kind: EncoderKind,
    d_out: &Matrix,
) -> Result<(LayerGrads, Matrix)> {
    let op = OpRef::Dense(a_op);
    let (_, cache) = layer_forward_cached(&op, h, layer, kind)?;
    Ok(layer_backward(&op, layer, kind, &cache, d_out))
}

/// Everything the backward pass needs from one forward pass.
pub struct EncodeCache {
    layer_caches: Vec<LayerCache>,
    pool: Matrix,
    t1: Matrix,
    h1: Matrix,
    /// Pre-normalization head output rows.
    t2: Matrix,
    norms: Vec<f64>,
}

fn propagation_operator(batch: &GraphBatch, kind: EncoderKind) -> SparseSym {
    match kind {
        EncoderKind::Gin => batch.raw_adjacency_operator(),
        _ => batch.normalized_operator(),
    }
}

/// Encode a batch: stacked layers, mean-pool per graph, projection head,
/// L2 normalization. Returns one embedding per graph in batch order.
pub fn encode(batch: &GraphBatch, params: &EncoderParams) -> Result<Vec<Embedding>> {
    encode_with_cache(batch, params).map(|(e, _)| e)
}

pub fn encode_with_cache(
    batch: &GraphBatch,
    params: &EncoderParams,
) -> Result<(Vec<Embedding>, EncodeCache)> {
    if batch.features().cols() != params.layer_dims[0] {
        return Err(Error::Argument(format!(
            "batch feature dim {} does not match encoder input dim {}",
            batch.features().cols(),
            params.layer_dims[0]
        )));
    }
    let op_store = propagation_operator(batch, params.kind);
    let op = OpRef::Sparse(&op_store);

    let mut layer_caches = Vec::with_capacity(params.layers.len());
    let mut h = batch.features().clone();
    for layer in &params.layers {
        let (next, cache) = layer_forward_cached(&op, &h, layer, params.kind)?;
        layer_caches.push(cache);
        h = next;
    }

    // Mean pooling per graph.
    let b = batch.batch_size();
    let d = h.cols();
    let mut pool = Matrix::zeros(b, d);
    for g in 0..b {
        let range = batch.node_range(g);
        let count = range.len() as f64;
        for i in range {
            for c in 0..d {
                let v = h.get(i, c);
                let prow = pool.row_mut(g);
                prow[c] += v;
            }
        }
        pool.row_mut(g).iter_mut().for_each(|x| *x /= count);
    }

    // Projection head with ReLU between the two dense layers.
    let mut t1 = pool.matmul(&params.head1.w);
    for r in 0..b {
        let row = t1.row_mut(r);
        for (x, &bias) in row.iter_mut().zip(&params.head1.b) {
            *x += bias;
        }
    }
    let h1 = relu(&t1);
    let mut t2 = h1.matmul(&params.head2.w);
    for r in 0..b {
        let row = t2.row_mut(r);
        for (x, &bias) in row.iter_mut().zip(&params.head2.b) {
            *x += bias;
        }
    }
    if !t2.is_finite() {
        return Err(Error::Numeric(
            "projection head produced non-finite output".into(),
        ));
    }

    let mut embeddings = Vec::with_capacity(b);
    let mut norms = Vec::with_capacity(b);
    for r in 0..b {
        let v = t2.row(r).to_vec();
        norms.push(norm(&v));
        embeddings.push(Embedding::normalized(v)?);
    }
    Ok((
        embeddings,
        EncodeCache {
            layer_caches,
            pool,
            t1,
            h1,
            t2,
            norms,
        },
    ))
}

/// Reverse-mode gradients of `encode` for a scalar loss, given the loss
/// gradient with respect to each (normalized) embedding.
///
/// Returns a parameter-shaped gradient container. For `Gcn` encoders the
/// frequency-filter gradients are exactly zero (frozen parameters).
pub fn encode_backward(
    batch: &GraphBatch,
    params: &EncoderParams,
    cache: &EncodeCache,
    upstream: &[Vec<f64>],
) -> Result<EncoderParams> {
    let b = batch.batch_size();
    if upstream.len() != b {
        return Err(Error::Argument(format!(
            "got {} upstream gradients for a batch of {b}",
            upstream.len()
        )));
    }
    for g in upstream {
        if g.len() != params.emb_dim {
            return Err(Error::Argument("upstream gradient dim mismatch".into()));
        }
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("non-finite upstream gradient".into()));
        }
    }

    let mut grads = params.zeros_like();

    // Through the L2 normalization: y = v/|v|, dv = (g - (g.y) y)/|v|.
    let mut dt2 = Matrix::zeros(b, params.emb_dim);
    for r in 0..b {
        let n = cache.norms[r];
        let v = cache.t2.row(r);
        let g = &upstream[r];
        let y: Vec<f64> = v.iter().map(|x| x / n).collect();
        let gy = crate::linalg::dot(g, &y);
        let row = dt2.row_mut(r);
        for c in 0..params.emb_dim {
            row[c] = (g[c] - gy * y[c]) / n;
        }
    }

    // Head layer 2.
    grads.head2.w = cache.h1.transpose_matmul(&dt2);
    for c in 0..params.emb_dim {
        grads.head2.b[c] = (0..b).map(|r| dt2.get(r, c)).sum();
    }
    let dh1 = dt2.matmul_transpose(&params.head2.w);
    let dt1 = relu_backward(&cache.t1, &dh1);

    // Head layer 1.
    grads.head1.w = cache.pool.transpose_matmul(&dt1);
    for c in 0..grads.head1.b.len() {
        grads.head1.b[c] = (0..b).map(|r| dt1.get(r, c)).sum();
    }
    let dpool = dt1.matmul_transpose(&params.head1.w);

    // Un-pool the mean.
    let d_last = dpool.cols();
    let total = batch.total_nodes();
    let mut dh = Matrix::zeros(total, d_last);
    for g in 0..b {
        let range = batch.node_range(g);
        let count = range.len() as f64;
        for i in range {
            for c in 0..d_last {
                let v = dpool.get(g, c) / count;
                dh.set(i, c, v);
            }
        }
    }

    // Layers in reverse.
    let op_store = propagation_operator(batch, params.kind);
    let op = OpRef::Sparse(&op_store);
    for l in (0..params.layers.len()).rev() {
        let (lg, dh_prev) = layer_backward(
            &op,
            &params.layers[l],
            params.kind,
            &cache.layer_caches[l],
            &dh,
        );
        grads.layers[l].w = lg.w;
        grads.layers[l].theta = lg.theta;
        grads.layers[l].w2 = lg.w2;
        dh = dh_prev;
    }

    if grads.flatten().iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite parameter gradient".into()));
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{batch, make_synthetic_sbm};

    fn sbm_batch(seed: u64, n_graphs: usize) -> GraphBatch {
        let ds = make_synthetic_sbm(((n_graphs + 1) / 2) * 2, 6, 0.4, 0.7, 0.5, seed).unwrap();
        let idx: Vec<usize> = (0..n_graphs).collect();
        batch(&ds, &idx).unwrap()
    }

    #[test]
    fn identity_propagation_through_relu() {
        // Single node, identity operator and weights, theta = 1.
        let a = Matrix::identity(1);
        let h = Matrix::from_rows(&[vec![0.5, 1.5, 0.0]]);
        let layer = LayerParams {
            w: Matrix::identity(3),
            theta: vec![Complex64::new(1.0, 0.0); 3],
            w2: None,
            epsilon: 0.0,
        };
        let out = layer_forward(&a, &h, &layer, EncoderKind::Fourier).unwrap();
        assert!(out.max_abs_diff(&h) < 1e-12);
    }

    #[test]
    fn unit_theta_fourier_equals_gcn() {
        let mut rng = crate::rng::stream(3, &[50]);
        let a_raw = Matrix::from_rows(&[
            vec![0.0, 1.0, 0.0, 1.0],
            vec![1.0, 0.0, 1.0, 0.0],
            vec![0.0, 1.0, 0.0, 1.0],
            vec![1.0, 0.0, 1.0, 0.0],
        ]);
        let a = crate::graph::normalize_adjacency(&a_raw).unwrap();
        let h = Matrix::from_vec(4, 5, (0..20).map(|_| rng.random_range(-1.0..1.0)).collect());
        let layer = LayerParams {
            w: glorot(&mut rng, 5, 7),
            theta: vec![Complex64::new(1.0, 0.0); 7],
            w2: None,
            epsilon: 0.0,
        };
        let f = layer_forward(&a, &h, &layer, EncoderKind::Fourier).unwrap();
        let g = layer_forward(&a, &h, &layer, EncoderKind::Gcn).unwrap();
        assert!(f.max_abs_diff(&g) < 1e-10);
    }

    #[test]
    fn init_deterministic_and_kind_shared() {
        let a = init_params(&[4, 8, 8], 6, EncoderKind::Fourier, 11).unwrap();
        let b = init_params(&[4, 8, 8], 6, EncoderKind::Fourier, 11).unwrap();
        assert_eq!(a, b);
        let g = init_params(&[4, 8, 8], 6, EncoderKind::Gcn, 11).unwrap();
        assert_eq!(a.layers[0].w, g.layers[0].w);
        assert_eq!(a.head1, g.head1);
        let gin = init_params(&[4, 8, 8], 6, EncoderKind::Gin, 11).unwrap();
        assert_eq!(a.layers[1].w, gin.layers[1].w);
        assert!(gin.layers[0].w2.is_some());
    }

    #[test]
    fn head_shape_contract() {
        let p = init_params(&[4, 32, 32], 16, EncoderKind::Fourier, 0).unwrap();
        assert_eq!(p.head1.w.rows(), 32);
        assert_eq!(p.head1.w.cols(), 32);
        assert_eq!(p.head2.w.rows(), 32);
        assert_eq!(p.head2.w.cols(), 16);
    }

    #[test]
    fn init_rejects_bad_dims() {
        assert!(init_params(&[4], 8, EncoderKind::Gcn, 0).is_err());
        assert!(init_params(&[4, 0], 8, EncoderKind::Gcn, 0).is_err());
        assert!(init_params(&[4, 8], 0, EncoderKind::Gcn, 0).is_err());
    }

    #[test]
    fn embeddings_are_unit_norm() {
        let b = sbm_batch(5, 4);
        let p = init_params(&[4, 16, 16], 8, EncoderKind::Fourier, 2).unwrap();
        for e in encode(&b, &p).unwrap() {
            assert!((norm(e.as_slice()) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn batch_order_independence() {
        let ds = make_synthetic_sbm(4, 6, 0.4, 0.7, 0.5, 8).unwrap();
        let p = init_params(&[4, 16, 16], 8, EncoderKind::Fourier, 3).unwrap();
        let fwd = encode(&batch(&ds, &[0, 1]).unwrap(), &p).unwrap();
        let rev = encode(&batch(&ds, &[1, 0]).unwrap(), &p).unwrap();
        for c in 0..8 {
            assert!((fwd[0].as_slice()[c] - rev[1].as_slice()[c]).abs() < 1e-10);
            assert!((fwd[1].as_slice()[c] - rev[0].as_slice()[c]).abs() < 1e-10);
        }
    }

    #[test]
    fn duplicate_graph_identical_embeddings() {
        let ds = make_synthetic_sbm(2, 6, 0.5, 0.5, 0.3, 9).unwrap();
        let p = init_params(&[4, 16, 16], 8, EncoderKind::Gcn, 4).unwrap();
        let e = encode(&batch(&ds, &[0, 0]).unwrap(), &p).unwrap();
        for c in 0..8 {
            assert!((e[0].as_slice()[c] - e[1].as_slice()[c]).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_upstream_gives_zero_grads() {
        let b = sbm_batch(6, 3);
        let p = init_params(&[4, 8, 8], 5, EncoderKind::Fourier, 5).unwrap();
        let (_, cache) = encode_with_cache(&b, &p).unwrap();
        let upstream = vec![vec![0.0; 5]; 3];
        let g = encode_backward(&b, &p, &cache, &upstream).unwrap();
        assert!(g.flatten().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn gcn_theta_grads_frozen_zero() {
        let b = sbm_batch(7, 3);
        let p = init_params(&[4, 8], 5, EncoderKind::Gcn, 6).unwrap();
        let (_, cache) = encode_with_cache(&b, &p).unwrap();
        let upstream = vec![vec![0.3; 5]; 3];
        let g = encode_backward(&b, &p, &cache, &upstream).unwrap();
        assert!(g.layers[0].theta.iter().all(|t| t.re == 0.0 && t.im == 0.0));
        assert!(g.layers[0].w.data().iter().any(|&x| x != 0.0));
    }

    #[test]
    fn flatten_roundtrip() {
        for kind in [EncoderKind::Fourier, EncoderKind::Gcn, EncoderKind::Gin] {
            let p = init_params(&[3, 6, 4], 5, kind, 7).unwrap();
            let flat = p.flatten();
            assert_eq!(flat.len(), p.flat_len());
            let mut q = p.clone();
            q.unflatten(&flat).unwrap();
            assert_eq!(p, q);
        }
    }

    /// Central finite differences over the flattened parameters for the
    /// scalar loss `sum_b upstream_b . emb_b`.
    fn fd_check(kind: EncoderKind, seed: u64, tol: f64) {
        let b = sbm_batch(seed, 3);
        let p = init_params(&[4, 6, 6], 4, kind, seed).unwrap();
        let mut rng = crate::rng::stream(seed, &[777]);
        let upstream: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();

        let loss = |flat: &[f64]| -> f64 {
            let mut q = p.clone();
            q.unflatten(flat).unwrap();
            let emb = encode(&b, &q).unwrap();
            emb.iter()
                .zip(&upstream)
                .map(|(e, u)| crate::linalg::dot(e.as_slice(), u))
                .sum()
        };

        let (_, cache) = encode_with_cache(&b, &p).unwrap();
        let analytic = encode_backward(&b, &p, &cache, &upstream).unwrap().flatten();
        let mut flat = p.flatten();
        let step = 1e-5;
        let mut worst: f64 = 0.0;
        for i in 0..flat.len() {
            let orig = flat[i];
            flat[i] = orig + step;
            let up = loss(&flat);
            flat[i] = orig - step;
            let down = loss(&flat);
            flat[i] = orig;
            let fd = (up - down) / (2.0 * step);
            let denom = analytic[i].abs().max(fd.abs()).max(1e-6);
            worst = worst.max((analytic[i] - fd).abs() / denom);
        }
        assert!(worst < tol, "{kind:?}: max relative gradient error {worst}");
    }

    #[test]
    fn fourier_gradients_match_finite_differences() {
        fd_check(EncoderKind::Fourier, 31, 1e-4);
    }

    #[test]
    fn gcn_gradients_match_finite_differences() {
        fd_check(EncoderKind::Gcn, 32, 1e-4);
    }

    #[test]
    fn gin_gradients_match_finite_differences() {
        fd_check(EncoderKind::Gin, 33, 1e-4);
    }

    #[test]
    fn layer_gradients_match_finite_differences() {
        // Dense single-layer check including the gradient w.r.t. the input.
        let mut rng = crate::rng::stream(41, &[1]);
        let a_raw = Matrix::from_rows(&[
            vec![0.0, 1.0, 1.0, 0.0],
            vec![1.0, 0.0, 0.0, 1.0],
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0, 0.0],
        ]);
        for kind in [EncoderKind::Fourier, EncoderKind::Gcn, EncoderKind::Gin] {
            let a = match kind {
                EncoderKind::Gin => a_raw.clone(),
                _ => crate::graph::normalize_adjacency(&a_raw).unwrap(),
            };
            let h = Matrix::from_vec(4, 3, (0..12).map(|_| rng.random_range(-1.0..1.0)).collect());
            let layer = LayerParams {
                w: glorot(&mut rng, 3, 5),
                theta: (0..5)
                    .map(|_| {
                        Complex64::new(rng.random_range(0.5..1.5), rng.random_range(-0.5..0.5))
                    })
                    .collect(),
                w2: if kind == EncoderKind::Gin {
                    Some(glorot(&mut rng, 5, 5))
                } else {
                    None
                },
                epsilon: 0.0,
            };
            // Upstream of all ones: plain sum of outputs.
            let d_out = Matrix::from_vec(4, 5, vec![1.0; 20]);
            let (grads, dh) = layer_gradients(&a, &h, &layer, kind, &d_out).unwrap();

            let loss = |layer: &LayerParams, h: &Matrix| -> f64 {
                layer_forward(&a, h, layer, kind).unwrap().data().iter().sum()
            };
            let step = 1e-5;
            let mut worst: f64 = 0.0;
            let mut check = |analytic: f64, fd: f64, worst: &mut f64| {
                let denom = analytic.abs().max(fd.abs()).max(1e-6);
                *worst = worst.max((analytic - fd).abs() / denom);
            };

            for i in 0..layer.w.rows() {
                for j in 0..layer.w.cols() {
                    let mut l2 = layer.clone();
                    l2.w.set(i, j, layer.w.get(i, j) + step);
                    let up = loss(&l2, &h);
                    l2.w.set(i, j, layer.w.get(i, j) - step);
                    let down = loss(&l2, &h);
                    check(grads.w.get(i, j), (up - down) / (2.0 * step), &mut worst);
                }
            }
            if kind == EncoderKind::Fourier {
                for k in 0..5 {
                    let mut l2 = layer.clone();
                    l2.theta[k].re += step;
                    let up = loss(&l2, &h);
                    l2.theta[k].re -= 2.0 * step;
                    let down = loss(&l2, &h);
                    check(grads.theta[k].re, (up - down) / (2.0 * step), &mut worst);

                    let mut l3 = layer.clone();
                    l3.theta[k].im += step;
                    let up = loss(&l3, &h);
                    l3.theta[k].im -= 2.0 * step;
                    let down = loss(&l3, &h);
                    check(grads.theta[k].im, (up - down) / (2.0 * step), &mut worst);
                }
            }
            if let Some(w2) = &layer.w2 {
                let g2 = grads.w2.as_ref().unwrap();
                for i in 0..w2.rows() {
                    for j in 0..w2.cols() {
                        let mut l2 = layer.clone();
                        l2.w2.as_mut().unwrap().set(i, j, w2.get(i, j) + step);
                        let up = loss(&l2, &h);
                        l2.w2.as_mut().unwrap().set(i, j, w2.get(i, j) - step);
                        let down = loss(&l2, &h);
                        check(g2.get(i, j), (up - down) / (2.0 * step), &mut worst);
                    }
                }
            }
            for i in 0..h.rows() {
                for j in 0..h.cols() {
                    let mut h2 = h.clone();
                    h2.set(i, j, h.get(i, j) + step);
                    let up = loss(&layer, &h2);
                    h2.set(i, j, h.get(i, j) - step);
                    let down = loss(&layer, &h2);
                    check(dh.get(i, j), (up - down) / (2.0 * step), &mut worst);
                }
            }
            assert!(worst < 1e-4, "{kind:?}: max relative error {worst}");
        }
    }
}
