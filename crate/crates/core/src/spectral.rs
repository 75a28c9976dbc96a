//! Fourier transforms and spectral differential operators on the torus.
//!
//! Normalization: the forward transform is unnormalized and the inverse
//! divides by `nx * ny`. A field `f = sum_k a_k e^{i k.x}` therefore has raw
//! coefficient `nx * ny * a_k`; [`SpectralField::amplitude`] returns `a_k`.
//!
//! First-derivative symbols vanish at the Nyquist wavenumber so that odd
//! derivatives of real fields stay real. The dealiasing mask keeps
//! `|k1|, |k2| <= min(n, floor((N - 1) / 3))`, the Galerkin truncation
//! radius `n` capped by the 2/3 rule.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::{periodic_delta, ScalarField, TorusGrid, VectorField};
use crate::par;

/// Integer wavenumber of FFT bin `i` for a transform of length `n`.
pub fn wavenumber(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

fn bin(k: i64, n: usize) -> Option<usize> {
    let half = (n / 2) as i64;
    if k > half || k < -half {
        return None;
    }
    Some(if k >= 0 { k as usize } else { (k + n as i64) as usize })
}

/// Fourier coefficients of a grid function, raw (unnormalized) layout
/// matching the grid: bin `(i, j)` at `j * nx + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: TorusGrid,
    coeffs: Vec<Complex64>,
    /// Set when the coefficients come from a real field.
    pub hermitian: bool,
}

impl SpectralField {
    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Raw coefficient at wavevector `(k1, k2)`; zero outside the grid band.
    pub fn coeff(&self, k1: i64, k2: i64) -> Complex64 {
        match (bin(k1, self.grid.nx()), bin(k2, self.grid.ny())) {
            (Some(i), Some(j)) => self.coeffs[j * self.grid.nx() + i],
            _ => Complex64::new(0.0, 0.0),
        }
    }

    /// Normalized Fourier amplitude `a_k`.
    pub fn amplitude(&self, k1: i64, k2: i64) -> Complex64 {
        self.coeff(k1, k2) / self.grid.len() as f64
    }

    /// Largest violation of `c(-k) = conj(c(k))`, relative to the largest
    /// coefficient.
    pub fn hermitian_defect(&self) -> f64 {
        let (nx, ny) = (self.grid.nx(), self.grid.ny());
        let scale = self.coeffs.iter().fold(0.0f64, |m, c| m.max(c.norm()));
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for j in 0..ny {
            for i in 0..nx {
                let mi = (nx - i) % nx;
                let mj = (ny - j) % ny;
                let a = self.coeffs[j * nx + i];
                let b = self.coeffs[mj * nx + mi].conj();
                worst = worst.max((a - b).norm());
            }
        }
        worst / scale
    }

    fn map_symbol<F>(&self, f: F) -> Self
    where
        F: Fn(usize, usize, Complex64) -> Complex64,
    {
        let nx = self.grid.nx();
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(idx, c)| f(idx % nx, idx / nx, *c))
            .collect();
        Self {
            grid: self.grid,
            coeffs,
            hermitian: self.hermitian,
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect();
        Self {
            grid: self.grid,
            coeffs,
            hermitian: self.hermitian && other.hermitian,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect();
        Self {
            grid: self.grid,
            coeffs,
            hermitian: self.hermitian && other.hermitian,
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        self.map_symbol(|_, _, c| c * s)
    }

    /// Mean value of the underlying grid function.
    pub fn mean(&self) -> f64 {
        self.coeffs[0].re / self.grid.len() as f64
    }
}

/// Differential operators accepted by [`Spectral::apply_operator`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Operator {
    Gradient,
    Divergence,
    Laplacian,
    InverseLaplacianZeroMean,
}

#[derive(Debug, Clone, Copy)]
pub enum FieldRef<'a> {
    Scalar(&'a ScalarField),
    Vector(&'a VectorField),
}

#[derive(Debug, Clone, PartialEq)]
pub enum FieldValue {
    Scalar(ScalarField),
    Vector(VectorField),
}

impl FieldValue {
    pub fn into_scalar(self) -> Option<ScalarField> {
        match self {
            FieldValue::Scalar(s) => Some(s),
            FieldValue::Vector(_) => None,
        }
    }

    pub fn into_vector(self) -> Option<VectorField> {
        match self {
            FieldValue::Vector(v) => Some(v),
            FieldValue::Scalar(_) => None,
        }
    }
}

/// Result of an operator application; carries the discarded mean when the
/// inverse Laplacian was fed a field with non-negligible mean.
#[derive(Debug, Clone, PartialEq)]
pub struct Applied {
    pub value: FieldValue,
    pub discarded_mean: Option<f64>,
}

/// Mean magnitude above which the inverse Laplacian reports a warning.
pub const MEAN_TOLERANCE: f64 = 1e-10;

/// FFT plans, wavenumber tables and the dealiasing mask for one grid.
///
/// rustfft plans are immutable and thread-safe; scratch space is allocated
/// per worker task, so one `Spectral` can be shared across threads.
#[derive(Clone)]
pub struct Spectral {
    grid: TorusGrid,
    truncation: usize,
    fwd_x: Arc<dyn Fft<f64>>,
    inv_x: Arc<dyn Fft<f64>>,
    fwd_y: Arc<dyn Fft<f64>>,
    inv_y: Arc<dyn Fft<f64>>,
    // first-derivative symbols (Nyquist zeroed)
    kx: Vec<f64>,
    ky: Vec<f64>,
    // squared wavenumbers (Nyquist kept)
    kx2: Vec<f64>,
    ky2: Vec<f64>,
    keep_x: Vec<bool>,
    keep_y: Vec<bool>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral")
            .field("grid", &self.grid)
            .field("truncation", &self.truncation)
            .finish()
    }
}

impl Spectral {
    /// Operators for `grid` with Galerkin truncation radius `n`.
    pub fn new(grid: TorusGrid, n: usize) -> Result<Self> {
        if n == 0 || n > grid.max_truncation() {
            return Err(Error::key(
                "n",
                format!(
                    "truncation radius must lie in 1..={} for a {}x{} grid, got {n}",
                    grid.max_truncation(),
                    grid.nx(),
                    grid.ny()
                ),
            ));
        }
        let mut planner = FftPlanner::new();
        let (nx, ny) = (grid.nx(), grid.ny());
        let keep = n.min(grid.dealias_limit()) as i64;
        let first = |len: usize| -> Vec<f64> {
            (0..len)
                .map(|i| if i == len / 2 { 0.0 } else { wavenumber(i, len) as f64 })
                .collect()
        };
        let squared = |len: usize| -> Vec<f64> { (0..len).map(|i| (wavenumber(i, len) as f64).powi(2)).collect() };
        let mask = |len: usize| -> Vec<bool> {
            (0..len)
                .map(|i| wavenumber(i, len).abs() <= keep && i != len / 2)
                .collect()
        };
        Ok(Self {
            grid,
            truncation: n,
            fwd_x: planner.plan_fft_forward(nx),
            inv_x: planner.plan_fft_inverse(nx),
            fwd_y: planner.plan_fft_forward(ny),
            inv_y: planner.plan_fft_inverse(ny),
            kx: first(nx),
            ky: first(ny),
            kx2: squared(nx),
            ky2: squared(ny),
            keep_x: mask(nx),
            keep_y: mask(ny),
        })
    }

    /// Operators with the default truncation (the 2/3-rule limit).
    pub fn for_grid(grid: TorusGrid) -> Self {
        Self::new(grid, grid.dealias_limit()).expect("default truncation is admissible")
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    /// Radius actually retained after dealiasing.
    pub fn retained_radius(&self) -> usize {
        self.truncation.min(self.grid.dealias_limit())
    }

    fn check_grid(&self, grid: TorusGrid) -> Result<()> {
        if grid != self.grid {
            return Err(Error::Dimension {
                expected: format!("{}x{} grid", self.grid.nx(), self.grid.ny()),
                found: format!("{}x{} grid", grid.nx(), grid.ny()),
            });
        }
        Ok(())
    }

    fn transpose(src: &[Complex64], rows: usize, cols: usize) -> Vec<Complex64> {
        // src is rows x cols, output is cols x rows
        let mut out = vec![Complex64::new(0.0, 0.0); src.len()];
        par::chunks_indexed(&mut out, rows, |c, chunk| {
            for (r, v) in chunk.iter_mut().enumerate() {
                *v = src[r * cols + c];
            }
        });
        out
    }

    fn fft2(&self, data: &mut Vec<Complex64>, inverse: bool) {
        let (nx, ny) = (self.grid.nx(), self.grid.ny());
        let (px, py) = if inverse {
            (&self.inv_x, &self.inv_y)
        } else {
            (&self.fwd_x, &self.fwd_y)
        };
        let sx = px.get_inplace_scratch_len();
        par::chunks_with(
            data,
            nx,
            || vec![Complex64::new(0.0, 0.0); sx],
            |scratch, row| px.process_with_scratch(row, scratch),
        );
        let mut cols = Self::transpose(data, ny, nx);
        let sy = py.get_inplace_scratch_len();
        par::chunks_with(
            &mut cols,
            ny,
            || vec![Complex64::new(0.0, 0.0); sy],
            |scratch, col| py.process_with_scratch(col, scratch),
        );
        *data = Self::transpose(&cols, nx, ny);
    }

    /// Forward transform of a real field.
    pub fn forward(&self, f: &ScalarField) -> SpectralField {
        let mut data: Vec<Complex64> = f.values().iter().map(|v| Complex64::new(*v, 0.0)).collect();
        self.fft2(&mut data, false);
        SpectralField {
            grid: self.grid,
            coeffs: data,
            hermitian: true,
        }
    }

    /// Checked forward transform.
    pub fn transform(&self, f: &ScalarField) -> Result<SpectralField> {
        self.check_grid(f.grid())?;
        Ok(self.forward(f))
    }

    /// Forward transforms of two real fields for the price of one.
    pub fn forward_pair(&self, a: &ScalarField, b: &ScalarField) -> (SpectralField, SpectralField) {
        let (av, bv) = (a.values(), b.values());
        let mut z: Vec<Complex64> = av.iter().zip(bv).map(|(x, y)| Complex64::new(*x, *y)).collect();
        self.fft2(&mut z, false);
        let (nx, ny) = (self.grid.nx(), self.grid.ny());
        let mut ca = vec![Complex64::new(0.0, 0.0); z.len()];
        let mut cb = ca.clone();
        for j in 0..ny {
            let mj = (ny - j) % ny;
            for i in 0..nx {
                let mi = (nx - i) % nx;
                let zk = z[j * nx + i];
                let zm = z[mj * nx + mi].conj();
                ca[j * nx + i] = (zk + zm) * 0.5;
                cb[j * nx + i] = (zk - zm) * Complex64::new(0.0, -0.5);
            }
        }
        (
            SpectralField {
                grid: self.grid,
                coeffs: ca,
                hermitian: true,
            },
            SpectralField {
                grid: self.grid,
                coeffs: cb,
                hermitian: true,
            },
        )
    }

    /// Inverse transform; the imaginary part is discarded.
    pub fn inverse(&self, s: &SpectralField) -> ScalarField {
        let mut data = s.coeffs.clone();
        self.fft2(&mut data, true);
        let norm = 1.0 / self.grid.len() as f64;
        ScalarField::from_values(self.grid, data.iter().map(|c| c.re * norm).collect()).expect("grid length")
    }

    /// Inverse transforms of two Hermitian spectra at once.
    pub fn inverse_pair(&self, a: &SpectralField, b: &SpectralField) -> (ScalarField, ScalarField) {
        let mut z: Vec<Complex64> = a
            .coeffs
            .iter()
            .zip(&b.coeffs)
            .map(|(x, y)| x + Complex64::new(0.0, 1.0) * y)
            .collect();
        self.fft2(&mut z, true);
        let norm = 1.0 / self.grid.len() as f64;
        let re = z.iter().map(|c| c.re * norm).collect();
        let im = z.iter().map(|c| c.im * norm).collect();
        (
            ScalarField::from_values(self.grid, re).expect("grid length"),
            ScalarField::from_values(self.grid, im).expect("grid length"),
        )
    }

    /// Inverse transforms of a batch of Hermitian spectra.
    pub fn inverse_many(&self, specs: &[&SpectralField]) -> Vec<ScalarField> {
        let mut out = Vec::with_capacity(specs.len());
        let mut it = specs.chunks(2);
        for pair in &mut it {
            if pair.len() == 2 {
                let (a, b) = self.inverse_pair(pair[0], pair[1]);
                out.push(a);
                out.push(b);
            } else {
                out.push(self.inverse(pair[0]));
            }
        }
        out
    }

    /// Forward transforms of a batch of real fields.
    pub fn forward_many(&self, fields: &[&ScalarField]) -> Vec<SpectralField> {
        let mut out = Vec::with_capacity(fields.len());
        for pair in fields.chunks(2) {
            if pair.len() == 2 {
                let (a, b) = self.forward_pair(pair[0], pair[1]);
                out.push(a);
                out.push(b);
            } else {
                out.push(self.forward(pair[0]));
            }
        }
        out
    }

    pub fn dx(&self, s: &SpectralField) -> SpectralField {
        s.map_symbol(|i, _, c| c * Complex64::new(0.0, self.kx[i]))
    }

    pub fn dy(&self, s: &SpectralField) -> SpectralField {
        s.map_symbol(|_, j, c| c * Complex64::new(0.0, self.ky[j]))
    }

    pub fn laplacian_hat(&self, s: &SpectralField) -> SpectralField {
        s.map_symbol(|i, j, c| c * -(self.kx2[i] + self.ky2[j]))
    }

    /// `-1/|k|^2` with the mean mode set to zero.
    pub fn inverse_laplacian_hat(&self, s: &SpectralField) -> SpectralField {
        s.map_symbol(|i, j, c| {
            let k2 = self.kx2[i] + self.ky2[j];
            if k2 == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                c * (-1.0 / k2)
            }
        })
    }

    /// `|k|^2` of bin `(i, j)`.
    pub fn k_squared(&self, i: usize, j: usize) -> f64 {
        self.kx2[i] + self.ky2[j]
    }

    /// Zeroes all modes outside the retained band.
    pub fn dealias(&self, s: &mut SpectralField) {
        let nx = self.grid.nx();
        for (idx, c) in s.coeffs.iter_mut().enumerate() {
            if !(self.keep_x[idx % nx] && self.keep_y[idx / nx]) {
                *c = Complex64::new(0.0, 0.0);
            }
        }
    }

    pub fn dealiased(&self, s: &SpectralField) -> SpectralField {
        let mut out = s.clone();
        self.dealias(&mut out);
        out
    }

    /// Projects a real field onto the retained band.
    pub fn truncate(&self, f: &ScalarField) -> ScalarField {
        let mut s = self.forward(f);
        self.dealias(&mut s);
        self.inverse(&s)
    }

    /// Whether bin `(i, j)` survives dealiasing.
    pub fn is_retained(&self, i: usize, j: usize) -> bool {
        self.keep_x[i] && self.keep_y[j]
    }

    /// Applies an implicit diffusion solve `c / (1 + factor |k|^2)` mode-wise.
    pub fn implicit_diffusion(&self, s: &SpectralField, factor: f64) -> SpectralField {
        s.map_symbol(|i, j, c| c / (1.0 + factor * (self.kx2[i] + self.ky2[j])))
    }

    pub fn gradient(&self, f: &ScalarField) -> VectorField {
        let s = self.forward(f);
        let (gx, gy) = self.inverse_pair(&self.dx(&s), &self.dy(&s));
        VectorField::new(gx, gy)
    }

    pub fn divergence(&self, v: &VectorField) -> ScalarField {
        let (sx, sy) = self.forward_pair(&v.x, &v.y);
        self.inverse(&self.dx(&sx).add(&self.dy(&sy)))
    }

    pub fn laplacian(&self, f: &ScalarField) -> ScalarField {
        self.inverse(&self.laplacian_hat(&self.forward(f)))
    }

    /// Zero-mean solution of `Lap g = f - mean(f)`, and the discarded mean.
    pub fn inverse_laplacian_zero_mean(&self, f: &ScalarField) -> (ScalarField, f64) {
        let s = self.forward(f);
        let mean = s.mean();
        (self.inverse(&self.inverse_laplacian_hat(&s)), mean)
    }

    /// Dispatches one of the standard operators with shape checking.
    pub fn apply_operator(&self, field: FieldRef<'_>, op: Operator) -> Result<Applied> {
        let grid = match field {
            FieldRef::Scalar(s) => s.grid(),
            FieldRef::Vector(v) => v.grid(),
        };
        self.check_grid(grid)?;
        let mismatch = |what: &str| Error::Config(format!("operator {op:?} expects a {what} field"));
        let (value, discarded_mean) = match (op, field) {
            (Operator::Gradient, FieldRef::Scalar(s)) => (FieldValue::Vector(self.gradient(s)), None),
            (Operator::Divergence, FieldRef::Vector(v)) => (FieldValue::Scalar(self.divergence(v)), None),
            (Operator::Laplacian, FieldRef::Scalar(s)) => (FieldValue::Scalar(self.laplacian(s)), None),
            (Operator::Laplacian, FieldRef::Vector(v)) => {
                (FieldValue::Vector(v.map_components(|c| self.laplacian(c))), None)
            }
            (Operator::InverseLaplacianZeroMean, FieldRef::Scalar(s)) => {
                let (g, mean) = self.inverse_laplacian_zero_mean(s);
                let warn = (mean.abs() > MEAN_TOLERANCE * s.max_abs().max(1.0)).then_some(mean);
                (FieldValue::Scalar(g), warn)
            }
            (Operator::Gradient, _) | (Operator::InverseLaplacianZeroMean, _) => return Err(mismatch("scalar")),
            (Operator::Divergence, _) => return Err(mismatch("vector")),
        };
        Ok(Applied { value, discarded_mean })
    }

    /// Leray projection in spectral space: `v - k (k.v) / |k|^2`.
    pub fn leray_hat(&self, vx: &SpectralField, vy: &SpectralField) -> (SpectralField, SpectralField) {
        let nx = self.grid.nx();
        let mut px = vx.clone();
        let mut py = vy.clone();
        for idx in 0..vx.coeffs.len() {
            let (i, j) = (idx % nx, idx / nx);
            let (k1, k2) = (self.kx[i], self.ky[j]);
            let k2sum = k1 * k1 + k2 * k2;
            if k2sum == 0.0 {
                continue;
            }
            let a = vx.coeffs[idx];
            let b = vy.coeffs[idx];
            let dot = (a * k1 + b * k2) / k2sum;
            px.coeffs[idx] = a - dot * k1;
            py.coeffs[idx] = b - dot * k2;
        }
        (px, py)
    }

    pub fn leray_project(&self, v: &VectorField) -> VectorField {
        let (sx, sy) = self.forward_pair(&v.x, &v.y);
        let (px, py) = self.leray_hat(&sx, &sy);
        let (x, y) = self.inverse_pair(&px, &py);
        VectorField::new(x, y)
    }

    /// Spectral resampling (zero-padding or truncation) onto another grid.
    pub fn resample(&self, f: &ScalarField, target: &Spectral) -> ScalarField {
        if target.grid == self.grid {
            return f.clone();
        }
        let src = self.forward(f);
        let (tnx, tny) = (target.grid.nx(), target.grid.ny());
        let (snx, sny) = (self.grid.nx(), self.grid.ny());
        let half = |a: usize, b: usize| (a.min(b) / 2) as i64 - 1;
        let (hx, hy) = (half(tnx, snx), half(tny, sny));
        let scale = target.grid.len() as f64 / self.grid.len() as f64;
        let mut coeffs = vec![Complex64::new(0.0, 0.0); target.grid.len()];
        for k2 in -hy..=hy {
            for k1 in -hx..=hx {
                let (i, j) = (bin(k1, tnx).unwrap(), bin(k2, tny).unwrap());
                coeffs[j * tnx + i] = src.coeff(k1, k2) * scale;
            }
        }
        target.inverse(&SpectralField {
            grid: target.grid,
            coeffs,
            hermitian: true,
        })
    }

    /// Local integrals `g(x) ~ int_{B_r(x)} f(y) dy` at every node.
    ///
    /// The ball indicator is mollified by a cosine ramp two grid cells wide,
    /// centred on `r`, and the convolution is evaluated with FFTs. When `f`
    /// is nonnegative the result is clipped at zero to remove roundoff.
    pub fn ball_integrals(&self, f: &ScalarField, r: f64) -> Result<ScalarField> {
        self.check_grid(f.grid())?;
        let kernel = self.ball_kernel(r)?;
        let s = self.forward(f);
        let coeffs = s.coeffs.iter().zip(&kernel.coeffs).map(|(a, b)| a * b).collect();
        let g = self.inverse(&SpectralField {
            grid: self.grid,
            coeffs,
            hermitian: true,
        });
        let g = g.scaled(self.grid.cell_area());
        if f.min() >= 0.0 {
            Ok(g.map(|v| v.max(0.0)))
        } else {
            Ok(g)
        }
    }

    /// Smallest radius accepted by [`Spectral::ball_integrals`].
    pub fn min_ball_radius(&self) -> f64 {
        3.0 * self.grid.h()
    }

    fn ball_kernel(&self, r: f64) -> Result<SpectralField> {
        if !(r > 0.0 && r <= PI) {
            return Err(Error::Domain(format!("ball radius must lie in (0, pi], got {r}")));
        }
        let min_r = self.min_ball_radius();
        if r < min_r * (1.0 - 1e-12) {
            return Err(Error::Resolution(format!(
                "ball radius {r:.4} is below three grid cells ({min_r:.4})"
            )));
        }
        let w = self.grid.h();
        let grid = self.grid;
        let kernel = ScalarField::from_fn(grid, move |x, y| {
            // centred at the origin node, which is x = y = 0 shifted to index 0
            let dx = periodic_delta(x, -PI);
            let dy = periodic_delta(y, -PI);
            ball_weight((dx * dx + dy * dy).sqrt(), r, w)
        });
        Ok(self.forward(&kernel))
    }
}

/// Mollified indicator of `[0, r]`: one inside `r - w`, zero beyond `r + w`.
pub fn ball_weight(rho: f64, r: f64, w: f64) -> f64 {
    if rho <= r - w {
        1.0
    } else if rho >= r + w {
        0.0
    } else {
        let s = (rho - (r - w)) / (2.0 * w);
        0.5 * (1.0 + (PI * s).cos())
    }
}
