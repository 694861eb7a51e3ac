//! Discrete Fourier machinery: 2D/1D transforms, center-shifting, radial
//! frequency masks, amplitude/phase extraction, and circular convolution.
//!
//! Convention, fixed once for the whole crate: the forward transform is
//! unnormalized and the inverse carries the full `1/(M*N)` factor. All
//! Parseval-style constants elsewhere assume exactly this pairing.
//!
//! The 2D transform acts on a (rows × cols) grid and is therefore sensitive
//! to row order. Callers that feed node-feature matrices must treat the node
//! ordering as canonical; permuting rows changes the spectrum.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

// Plans are cached per thread; re-planning tiny transforms on every call
// would dominate the encoder's inner loop.
thread_local! {
    static PLAN_CACHE: RefCell<HashMap<(usize, bool), Arc<dyn Fft<f64>>>> =
        RefCell::new(HashMap::new());
}

fn plan(len: usize, forward: bool) -> Arc<dyn Fft<f64>> {
    PLAN_CACHE.with(|cache| {
        cache
            .borrow_mut()
            .entry((len, forward))
            .or_insert_with(|| {
                let mut planner = FftPlanner::new();
                let dir = if forward {
                    FftDirection::Forward
                } else {
                    FftDirection::Inverse
                };
                planner.plan_fft(len, dir)
            })
            .clone()
    })
}

/// In-place unnormalized forward transform of one contiguous line.
pub(crate) fn fft_line(buf: &mut [Complex64]) {
    plan(buf.len(), true).process(buf);
}

/// In-place unnormalized inverse transform (no `1/L` factor applied).
pub(crate) fn ifft_line_unnormalized(buf: &mut [Complex64]) {
    plan(buf.len(), false).process(buf);
}

/// Complex frequency grid produced by [`dft2`].
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    rows: usize,
    cols: usize,
    values: Vec<Complex64>,
    shifted: bool,
}

impl SpectralField {
    pub fn from_parts(
        rows: usize,
        cols: usize,
        values: Vec<Complex64>,
        shifted: bool,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 || values.len() != rows * cols {
            return Err(Error::Argument(format!(
                "field buffer of {} values does not match {}x{}",
                values.len(),
                rows,
                cols
            )));
        }
        Ok(SpectralField {
            rows,
            cols,
            values,
            shifted,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// True iff the zero-frequency bin sits at the grid center.
    pub fn is_shifted(&self) -> bool {
        self.shifted
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, m: usize, n: usize) -> Complex64 {
        self.values[m * self.cols + n]
    }

    /// Total spectral energy `sum |F(m,n)|^2`.
    pub fn energy(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Pointwise sum; both fields must share shape and shift state.
    pub fn add(&self, other: &SpectralField) -> Result<SpectralField> {
        if (self.rows, self.cols) != (other.rows, other.cols) {
            return Err(Error::Argument("field shape mismatch".into()));
        }
        if self.shifted != other.shifted {
            return Err(Error::State("cannot add shifted to unshifted field".into()));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + b)
            .collect();
        Ok(SpectralField {
            rows: self.rows,
            cols: self.cols,
            values,
            shifted: self.shifted,
        })
    }
}

/// Forward 2D transform of a real matrix. Unnormalized, zero frequency at
/// the (0,0) corner. Fast path over rows then columns, any size.
pub fn dft2(x: &Matrix) -> Result<SpectralField> {
    let (m, n) = (x.rows(), x.cols());
    if m == 0 || n == 0 {
        return Err(Error::Argument("dft2 input is empty".into()));
    }
    let mut values: Vec<Complex64> = x
        .data()
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .collect();
    fft2_in_place(&mut values, m, n, true);
    SpectralField::from_parts(m, n, values, false)
}

fn fft2_in_place(values: &mut [Complex64], rows: usize, cols: usize, forward: bool) {
    for r in 0..rows {
        let line = &mut values[r * cols..(r + 1) * cols];
        if forward {
            fft_line(line);
        } else {
            ifft_line_unnormalized(line);
        }
    }
    let mut col_buf = vec![Complex64::default(); rows];
    for c in 0..cols {
        for r in 0..rows {
            col_buf[r] = values[r * cols + c];
        }
        if forward {
            fft_line(&mut col_buf);
        } else {
            ifft_line_unnormalized(&mut col_buf);
        }
        for r in 0..rows {
            values[r * cols + c] = col_buf[r];
        }
    }
}

/// Inverse 2D transform with `1/(M*N)` scaling, returning the real part.
///
/// The caller must un-shift first. If the reconstruction carries imaginary
/// residue above 1e-6 the field did not come from a real signal and a state
/// error is raised instead of silently discarding the imaginary part.
pub fn idft2(field: &SpectralField) -> Result<Matrix> {
    if field.shifted {
        return Err(Error::State(
            "idft2 requires an unshifted field; call ifshift first".into(),
        ));
    }
    let (m, n) = (field.rows, field.cols);
    let mut values = field.values.clone();
    fft2_in_place(&mut values, m, n, false);
    let scale = 1.0 / (m as f64 * n as f64);
    let mut max_imag: f64 = 0.0;
    let mut data = Vec::with_capacity(m * n);
    for z in &values {
        let re = z.re * scale;
        let im = z.im * scale;
        max_imag = max_imag.max(im.abs());
        data.push(re);
    }
    if max_imag > 1e-6 {
        return Err(Error::State(format!(
            "inverse transform left imaginary residue {max_imag:.3e}; \
             field is not the spectrum of a real signal"
        )));
    }
    Ok(Matrix::from_vec(m, n, data))
}

/// Move the zero-frequency bin to the grid center `(floor(M/2), floor(N/2))`.
pub fn fshift(field: &SpectralField) -> Result<SpectralField> {
    if field.shifted {
        return Err(Error::State("field is already shifted".into()));
    }
    Ok(cyclic_shift(field, field.rows / 2, field.cols / 2, true))
}

/// Exact inverse of [`fshift`].
pub fn ifshift(field: &SpectralField) -> Result<SpectralField> {
    if !field.shifted {
        return Err(Error::State("field is not shifted".into()));
    }
    let (m, n) = (field.rows, field.cols);
    Ok(cyclic_shift(field, m - m / 2, n - n / 2, false))
}

fn cyclic_shift(
    field: &SpectralField,
    by_rows: usize,
    by_cols: usize,
    shifted: bool,
) -> SpectralField {
    let (m, n) = (field.rows, field.cols);
    let mut values = vec![Complex64::default(); m * n];
    for r in 0..m {
        let dst_r = (r + by_rows) % m;
        for c in 0..n {
            let dst_c = (c + by_cols) % n;
            values[dst_r * n + dst_c] = field.values[r * n + c];
        }
    }
    SpectralField {
        rows: m,
        cols: n,
        values,
        shifted,
    }
}

/// Power, magnitude and phase grids of a field.
///
/// `power` is the squared form `Re^2 + Im^2`, `magnitude` its square root.
/// Both are exposed because downstream consumers disagree on which one they
/// mean by "amplitude". Phase is the full-quadrant `atan2(Im, Re)` and is
/// defined as 0 at the origin bin.
#[derive(Debug, Clone)]
pub struct Spectra {
    pub power: Matrix,
    pub magnitude: Matrix,
    pub phase: Matrix,
}

pub fn amplitude_phase(field: &SpectralField) -> Spectra {
    let (m, n) = (field.rows, field.cols);
    let mut power = Matrix::zeros(m, n);
    let mut magnitude = Matrix::zeros(m, n);
    let mut phase = Matrix::zeros(m, n);
    for r in 0..m {
        for c in 0..n {
            let z = field.get(r, c);
            let p = z.re * z.re + z.im * z.im;
            power.set(r, c, p);
            magnitude.set(r, c, p.sqrt());
            // atan2 with signed zeros can return pi at (-0.0, 0.0); pin the
            // degenerate bin to 0 explicitly.
            let ph = if z.re == 0.0 && z.im == 0.0 {
                0.0
            } else {
                z.im.atan2(z.re)
            };
            phase.set(r, c, ph);
        }
    }
    Spectra {
        power,
        magnitude,
        phase,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskKind {
    Low,
    High,
}

/// Binary radial selector over a *shifted* frequency grid.
///
/// A low mask keeps cells whose Euclidean distance from the center
/// `(floor(M/2), floor(N/2))` is at most `d_low` (inclusive boundary); the
/// high mask is its exact pointwise complement.
#[derive(Debug, Clone, PartialEq)]
pub struct FreqMask {
    rows: usize,
    cols: usize,
    d_low: f64,
    kind: MaskKind,
    grid: Vec<bool>,
}

impl FreqMask {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn kind(&self) -> MaskKind {
        self.kind
    }

    pub fn d_low(&self) -> f64 {
        self.d_low
    }

    #[inline]
    pub fn is_kept(&self, m: usize, z: usize) -> bool {
        self.grid[m * self.cols + z]
    }

    pub fn count_kept(&self) -> usize {
        self.grid.iter().filter(|&&b| b).count()
    }

    /// Grid center used for the radial distance.
    pub fn center(rows: usize, cols: usize) -> (usize, usize) {
        (rows / 2, cols / 2)
    }

    /// Largest possible center distance on a grid of this shape (attained at
    /// the (0,0) corner of the shifted grid).
    pub fn max_radius(rows: usize, cols: usize) -> f64 {
        let (cm, cn) = Self::center(rows, cols);
        ((cm * cm + cn * cn) as f64).sqrt()
    }
}

/// Distance of a frequency cell from the shifted-grid center.
pub fn center_distance(rows: usize, cols: usize, m: usize, z: usize) -> f64 {
    let (cm, cn) = FreqMask::center(rows, cols);
    let dm = m as f64 - cm as f64;
    let dz = z as f64 - cn as f64;
    (dm * dm + dz * dz).sqrt()
}

pub fn build_mask(m_rows: usize, n_cols: usize, d_low: f64, kind: MaskKind) -> Result<FreqMask> {
    if m_rows == 0 || n_cols == 0 {
        return Err(Error::Argument("mask dimensions must be positive".into()));
    }
    if !(d_low >= 0.0) {
        return Err(Error::Argument(format!(
            "low-frequency radius must be non-negative, got {d_low}"
        )));
    }
    let mut grid = vec![false; m_rows * n_cols];
    for m in 0..m_rows {
        for z in 0..n_cols {
            let low = center_distance(m_rows, n_cols, m, z) <= d_low;
            grid[m * n_cols + z] = match kind {
                MaskKind::Low => low,
                MaskKind::High => !low,
            };
        }
    }
    Ok(FreqMask {
        rows: m_rows,
        cols: n_cols,
        d_low,
        kind,
        grid,
    })
}

/// Pointwise product of a shifted field with a binary mask.
pub fn apply_mask(field: &SpectralField, mask: &FreqMask) -> Result<SpectralField> {
    if !field.shifted {
        return Err(Error::State(
            "apply_mask requires a shifted field; call fshift first".into(),
        ));
    }
    if (field.rows, field.cols) != (mask.rows, mask.cols) {
        return Err(Error::Argument(format!(
            "mask {}x{} does not match field {}x{}",
            mask.rows, mask.cols, field.rows, field.cols
        )));
    }
    let values = field
        .values
        .iter()
        .zip(&mask.grid)
        .map(|(&v, &keep)| if keep { v } else { Complex64::new(0.0, 0.0) })
        .collect();
    SpectralField::from_parts(field.rows, field.cols, values, true)
}

/// Forward 1D transform of a real vector (unnormalized).
pub fn dft1(x: &[f64]) -> Result<Vec<Complex64>> {
    if x.is_empty() {
        return Err(Error::Argument("dft1 input is empty".into()));
    }
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_line(&mut buf);
    Ok(buf)
}

/// Circular convolution `y[i] = sum_j x[j] * h[(i-j) mod L]`, computed as
/// forward transform, pointwise product, inverse transform.
pub fn circular_conv(x: &[f64], h: &[f64]) -> Result<Vec<f64>> {
    if x.len() != h.len() {
        return Err(Error::Argument(format!(
            "circular_conv length mismatch: {} vs {}",
            x.len(),
            h.len()
        )));
    }
    if x.is_empty() {
        return Err(Error::Argument("circular_conv inputs are empty".into()));
    }
    let mut fx = dft1(x)?;
    let fh = dft1(h)?;
    for (a, b) in fx.iter_mut().zip(&fh) {
        *a *= b;
    }
    ifft_line_unnormalized(&mut fx);
    let scale = 1.0 / x.len() as f64;
    Ok(fx.iter().map(|z| z.re * scale).collect())
}
