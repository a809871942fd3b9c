//! Grids, periodic fields, spectral differentiation and norms on the flat
//! complex torus T = C^n/(Z+iZ)^n.
//!
//! Every real axis has period 1 and is sampled uniformly at k/m, so the flat
//! background volume is exactly 1. Complex coordinates are z^j = x^j + i y^j
//! and the real axes are stored row-major in the order (x^1, y^1, x^2, y^2),
//! last axis contiguous. All differentiation is spectral: a field is
//! transformed once, a Fourier multiplier is applied, and the result is
//! transformed back. First-derivative multipliers vanish on the Nyquist mode
//! so that derivatives of real fields stay real and the conjugation symmetry
//! of holomorphic/antiholomorphic derivatives is exact.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

const PI: f64 = std::f64::consts::PI;

/// Uniform discretization of the torus with `m` points per real axis.
pub struct TorusGrid {
    n: usize,
    m: usize,
    axes: usize,
    len: usize,
    strides: [usize; 4],
    /// Signed integer frequency per spectral index, Nyquist kept as +m/2.
    ktab: Vec<f64>,
    /// Same table with the Nyquist entry zeroed (first derivatives).
    kdtab: Vec<f64>,
    fft_fwd: Arc<dyn Fft<f64>>,
    fft_inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for TorusGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TorusGrid(n={}, m={})", self.n, self.m)
    }
}

impl PartialEq for TorusGrid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.m == other.m
    }
}

impl TorusGrid {
    /// Builds a grid for complex dimension `n` with `m` samples per real axis.
    ///
    /// `m` must be even (Nyquist handling assumes it) and within
    /// 8..=512 for n = 1, 8..=48 for n = 2.
    pub fn new(n: usize, m: usize) -> Result<Arc<TorusGrid>> {
        let max = if n == 1 { 512 } else { 48 };
        if n == 1 || n == 2 {
            if m < 8 || m > max || m % 2 != 0 {
                return Err(Error::InvalidResolution { n, m, min: 8, max });
            }
        }
        Self::new_internal(n, m)
    }

    /// Grid constructor without the resolution caps, for internal
    /// supersampled scratch grids.
    pub(crate) fn new_internal(n: usize, m: usize) -> Result<Arc<TorusGrid>> {
        if n != 1 && n != 2 {
            return Err(Error::InvalidDimension(n));
        }
        if m < 8 || m % 2 != 0 {
            return Err(Error::InvalidResolution { n, m, min: 8, max: usize::MAX });
        }
        let axes = 2 * n;
        let len = m.pow(axes as u32);
        let mut strides = [0usize; 4];
        for a in 0..axes {
            strides[a] = m.pow((axes - 1 - a) as u32);
        }
        let mut ktab = vec![0.0; m];
        let mut kdtab = vec![0.0; m];
        for i in 0..m {
            let k = if i <= m / 2 { i as f64 } else { i as f64 - m as f64 };
            ktab[i] = k;
            kdtab[i] = if i == m / 2 { 0.0 } else { k };
        }
        let mut planner = FftPlanner::new();
        let fft_fwd = planner.plan_fft_forward(m);
        let fft_inv = planner.plan_fft_inverse(m);
        Ok(Arc::new(TorusGrid {
            n,
            m,
            axes,
            len,
            strides,
            ktab,
            kdtab,
            fft_fwd,
            fft_inv,
        }))
    }

    pub fn complex_dim(&self) -> usize {
        self.n
    }

    pub fn points_per_axis(&self) -> usize {
        self.m
    }

    /// Total number of grid points, m^(2n).
    pub fn num_points(&self) -> usize {
        self.len
    }

    /// Grid spacing per real axis, h = 1/m.
    pub fn spacing(&self) -> f64 {
        1.0 / self.m as f64
    }

    /// Cell volume h^(2n), the quadrature weight of one sample.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.axes as i32)
    }

    /// Real coordinates of the flat point index, order (x^1, y^1, x^2, y^2).
    /// Only the first 2n entries are meaningful.
    pub fn coords(&self, p: usize) -> [f64; 4] {
        let mut c = [0.0; 4];
        let h = self.spacing();
        let mut rest = p;
        for a in (0..self.axes).rev() {
            c[a] = (rest % self.m) as f64 * h;
            rest /= self.m;
        }
        c
    }

    fn same_grid(&self, other: &TorusGrid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{:?}", self), format!("{:?}", other)))
        }
    }

    // ---- spectral engine -------------------------------------------------

    fn fft_axis(&self, data: &mut [Complex64], axis: usize, inverse: bool) {
        let plan = if inverse { &self.fft_inv } else { &self.fft_fwd };
        let m = self.m;
        let stride = self.strides[axis];
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        if stride == 1 {
            for chunk in data.chunks_exact_mut(m) {
                plan.process_with_scratch(chunk, &mut scratch);
            }
        } else {
            let block = m * stride;
            let mut line = vec![Complex64::new(0.0, 0.0); m];
            for base in (0..self.len).step_by(block) {
                for inner in 0..stride {
                    let start = base + inner;
                    for (j, l) in line.iter_mut().enumerate() {
                        *l = data[start + j * stride];
                    }
                    plan.process_with_scratch(&mut line, &mut scratch);
                    for (j, l) in line.iter().enumerate() {
                        data[start + j * stride] = *l;
                    }
                }
            }
        }
    }

    pub(crate) fn fft(&self, data: &mut [Complex64]) {
        for a in 0..self.axes {
            self.fft_axis(data, a, false);
        }
    }

    pub(crate) fn ifft(&self, data: &mut [Complex64]) {
        for a in 0..self.axes {
            self.fft_axis(data, a, true);
        }
        let scale = 1.0 / self.len as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }

    /// Forward transform of a real field.
    pub(crate) fn spectrum(&self, values: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> =
            values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft(&mut data);
        data
    }

    /// Visits every spectral index with its signed frequencies. `k` keeps the
    /// Nyquist frequency, `kd` zeroes it (use `kd` for odd-order factors).
    pub(crate) fn for_each_freq(&self, mut visit: impl FnMut(usize, &[f64; 4], &[f64; 4])) {
        let mut idx = [0usize; 4];
        let mut k = [0.0f64; 4];
        let mut kd = [0.0f64; 4];
        for p in 0..self.len {
            for a in 0..self.axes {
                k[a] = self.ktab[idx[a]];
                kd[a] = self.kdtab[idx[a]];
            }
            visit(p, &k, &kd);
            // odometer over the axis indices, last axis fastest
            for a in (0..self.axes).rev() {
                idx[a] += 1;
                if idx[a] < self.m {
                    break;
                }
                idx[a] = 0;
            }
        }
    }

    /// Applies a Fourier multiplier to a spectrum and returns the new spectrum.
    pub(crate) fn multiplied(
        &self,
        spec: &[Complex64],
        mult: impl FnMut(&[f64; 4], &[f64; 4]) -> Complex64,
    ) -> Vec<Complex64> {
        let mut mult = mult;
        let mut out = vec![Complex64::new(0.0, 0.0); self.len];
        self.for_each_freq(|p, k, kd| {
            out[p] = spec[p] * mult(k, kd);
        });
        out
    }

    /// Inverse transform, keeping only the real part.
    pub(crate) fn inverse_real(&self, mut spec: Vec<Complex64>) -> Vec<f64> {
        self.ifft(&mut spec);
        spec.iter().map(|c| c.re).collect()
    }

    /// Inverse transform of a complex spectrum.
    pub(crate) fn inverse_complex(&self, mut spec: Vec<Complex64>) -> Vec<Complex64> {
        self.ifft(&mut spec);
        spec
    }

    /// Multiplier of the holomorphic derivative d/dz^j for a period-1 torus.
    pub(crate) fn dz_mult(j: usize, kd: &[f64; 4]) -> Complex64 {
        Complex64::new(PI * kd[2 * j + 1], PI * kd[2 * j])
    }

    /// Multiplier of the antiholomorphic derivative d/dzbar^j.
    pub(crate) fn dzbar_mult(j: usize, kd: &[f64; 4]) -> Complex64 {
        Complex64::new(-PI * kd[2 * j + 1], PI * kd[2 * j])
    }

    /// Multiplier of the mixed second derivative d^2/dz^i dzbar^j, the exact
    /// composition of the first-derivative multipliers. Every derivative in
    /// the crate shares the Nyquist-zeroed convention so that compositions
    /// (Hessians, divergence forms, third derivatives) stay consistent; on
    /// band-limited data it coincides with the full spectral symbol.
    pub(crate) fn hessian_mult(i: usize, j: usize, _k: &[f64; 4], kd: &[f64; 4]) -> Complex64 {
        if i == j {
            let kx = kd[2 * i];
            let ky = kd[2 * i + 1];
            Complex64::new(-PI * PI * (kx * kx + ky * ky), 0.0)
        } else {
            Self::dz_mult(i, kd) * Self::dzbar_mult(j, kd)
        }
    }
}

/// Real periodic function sampled on a [`TorusGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Arc<TorusGrid>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn constant(grid: &Arc<TorusGrid>, c: f64) -> ScalarField {
        ScalarField {
            grid: grid.clone(),
            values: vec![c; grid.num_points()],
        }
    }

    pub fn zeros(grid: &Arc<TorusGrid>) -> ScalarField {
        Self::constant(grid, 0.0)
    }

    /// Builds a field from a closure of the real coordinates (x^1, y^1, ...).
    pub fn from_fn(grid: &Arc<TorusGrid>, f: impl Fn(&[f64]) -> f64) -> ScalarField {
        let axes = 2 * grid.complex_dim();
        let values = (0..grid.num_points())
            .map(|p| {
                let c = grid.coords(p);
                f(&c[..axes])
            })
            .collect();
        ScalarField { grid: grid.clone(), values }
    }

    pub fn from_values(grid: &Arc<TorusGrid>, values: Vec<f64>) -> Result<ScalarField> {
        if values.len() != grid.num_points() {
            return Err(Error::InvalidConfig(format!(
                "field length {} does not match grid with {} points",
                values.len(),
                grid.num_points()
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("scalar field values"));
        }
        Ok(ScalarField { grid: grid.clone(), values })
    }

    pub fn grid(&self) -> &Arc<TorusGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        debug_assert_eq!(self.grid.as_ref(), other.grid.as_ref());
        ScalarField {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(other.values.iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn scaled(&self, s: f64) -> ScalarField {
        self.map(|v| s * v)
    }

    pub fn shifted(&self, c: f64) -> ScalarField {
        self.map(|v| v + c)
    }

    /// Energy fraction of the nonzero modes with max-norm frequency >= kmax.
    pub fn out_of_band_fraction(&self, kmax: f64) -> f64 {
        let spec = self.grid.spectrum(&self.values);
        let mut total = 0.0;
        let mut outside = 0.0;
        self.grid.for_each_freq(|p, k, _| {
            let e = spec[p].norm_sqr();
            let kmaxnorm = k.iter().fold(0.0f64, |acc, &x| acc.max(x.abs()));
            if kmaxnorm > 0.0 {
                total += e;
                if kmaxnorm >= kmax {
                    outside += e;
                }
            }
        });
        if total == 0.0 {
            0.0
        } else {
            outside / total
        }
    }
}

/// Holomorphic derivatives f_j = df/dz^j, one complex number per point and
/// complex coordinate. For real f the antiholomorphic derivative is the
/// conjugate, so only the holomorphic part is stored.
#[derive(Debug, Clone)]
pub struct ComplexGradient {
    grid: Arc<TorusGrid>,
    n: usize,
    /// Point-major layout: values[p * n + j].
    values: Vec<Complex64>,
}

impl ComplexGradient {
    pub fn grid(&self) -> &Arc<TorusGrid> {
        &self.grid
    }

    pub fn component(&self, p: usize, j: usize) -> Complex64 {
        self.values[p * self.n + j]
    }

    /// 2 sum_j |f_j|^2 with the identity metric; the flat squared gradient.
    pub fn flat_norm_sq(&self) -> ScalarField {
        let n = self.n;
        let values = (0..self.grid.num_points())
            .map(|p| {
                let mut s = 0.0;
                for j in 0..n {
                    s += self.values[p * n + j].norm_sqr();
                }
                2.0 * s
            })
            .collect();
        ScalarField { grid: self.grid.clone(), values }
    }
}

/// n x n complex Hermitian matrix per grid point, packed per point as
/// [h11] for n = 1 and [h11, h22, Re h12, Im h12] for n = 2. Hermiticity is
/// structural: the (2,1) entry is read as the conjugate of (1,2).
#[derive(Debug, Clone)]
pub struct HermitianField {
    grid: Arc<TorusGrid>,
    n: usize,
    values: Vec<f64>,
}

impl HermitianField {
    pub(crate) fn packed_stride(n: usize) -> usize {
        if n == 1 {
            1
        } else {
            4
        }
    }

    pub fn zeros(grid: &Arc<TorusGrid>) -> HermitianField {
        let n = grid.complex_dim();
        HermitianField {
            grid: grid.clone(),
            n,
            values: vec![0.0; grid.num_points() * Self::packed_stride(n)],
        }
    }

    /// Identity matrix at every point.
    pub fn identity(grid: &Arc<TorusGrid>) -> HermitianField {
        let n = grid.complex_dim();
        let stride = Self::packed_stride(n);
        let mut values = vec![0.0; grid.num_points() * stride];
        for p in 0..grid.num_points() {
            values[p * stride] = 1.0;
            if n == 2 {
                values[p * stride + 1] = 1.0;
            }
        }
        HermitianField { grid: grid.clone(), n, values }
    }

    pub(crate) fn from_packed(grid: &Arc<TorusGrid>, values: Vec<f64>) -> HermitianField {
        let n = grid.complex_dim();
        debug_assert_eq!(values.len(), grid.num_points() * Self::packed_stride(n));
        HermitianField { grid: grid.clone(), n, values }
    }

    pub fn grid(&self) -> &Arc<TorusGrid> {
        &self.grid
    }

    pub fn matrix_dim(&self) -> usize {
        self.n
    }

    pub(crate) fn packed_at(&self, p: usize) -> &[f64] {
        let s = Self::packed_stride(self.n);
        &self.values[p * s..(p + 1) * s]
    }

    pub fn entry(&self, p: usize, i: usize, j: usize) -> Complex64 {
        let v = self.packed_at(p);
        crate::linalg::entry(self.n, v, i, j)
    }

    /// Pointwise trace against the identity metric.
    pub fn trace(&self) -> ScalarField {
        let values = (0..self.grid.num_points())
            .map(|p| {
                let v = self.packed_at(p);
                if self.n == 1 {
                    v[0]
                } else {
                    v[0] + v[1]
                }
            })
            .collect();
        ScalarField { grid: self.grid.clone(), values }
    }

    /// Smallest eigenvalue over all grid points.
    pub fn min_eigenvalue(&self) -> f64 {
        (0..self.grid.num_points())
            .map(|p| crate::linalg::min_eig(self.n, self.packed_at(p)))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn zip_with(&self, other: &HermitianField, f: impl Fn(f64, f64) -> f64) -> HermitianField {
        debug_assert_eq!(self.grid.as_ref(), other.grid.as_ref());
        HermitianField {
            grid: self.grid.clone(),
            n: self.n,
            values: self
                .values
                .iter()
                .zip(other.values.iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }
}

/// Holomorphic gradient f_j = df/dz^j of a real field, evaluated spectrally.
pub fn holomorphic_gradient(f: &ScalarField) -> ComplexGradient {
    let grid = f.grid();
    let n = grid.complex_dim();
    let spec = grid.spectrum(f.values());
    let mut values = vec![Complex64::new(0.0, 0.0); grid.num_points() * n];
    for j in 0..n {
        let comp =
            grid.inverse_complex(grid.multiplied(&spec, |_, kd| TorusGrid::dz_mult(j, kd)));
        for (p, c) in comp.into_iter().enumerate() {
            values[p * n + j] = c;
        }
    }
    ComplexGradient { grid: grid.clone(), n, values }
}

/// Mixed Hessian f_{i jbar} = d^2 f / dz^i dzbar^j, evaluated spectrally.
/// Hermitian by packing; the diagonal entries keep only their real part.
pub fn mixed_hessian(f: &ScalarField) -> HermitianField {
    let grid = f.grid();
    let n = grid.complex_dim();
    let stride = HermitianField::packed_stride(n);
    let spec = grid.spectrum(f.values());
    let mut values = vec![0.0; grid.num_points() * stride];

    for i in 0..n {
        let diag =
            grid.inverse_real(grid.multiplied(&spec, |k, kd| TorusGrid::hessian_mult(i, i, k, kd)));
        for (p, v) in diag.into_iter().enumerate() {
            values[p * stride + i] = v;
        }
    }
    if n == 2 {
        let off =
            grid.inverse_complex(grid.multiplied(&spec, |k, kd| TorusGrid::hessian_mult(0, 1, k, kd)));
        for (p, c) in off.into_iter().enumerate() {
            values[p * stride + 2] = c.re;
            values[p * stride + 3] = c.im;
        }
    }
    HermitianField { grid: grid.clone(), n, values }
}

/// Zero-mean spectral inverse of the quarter Laplacian (the flat background
/// Laplacian d^2/dz dzbar summed over coordinates): returns the unique
/// zero-mean psi with trace(hessian(psi)) = f minus its mean. Exact on the
/// resolved modes; modes annihilated by the Nyquist-zeroed derivatives are
/// dropped.
pub fn inverse_quarter_laplacian(f: &ScalarField) -> ScalarField {
    let grid = f.grid();
    let n = grid.complex_dim();
    let spec = grid.spectrum(f.values());
    let inverted = grid.multiplied(&spec, |k, kd| {
        let mut symbol = Complex64::new(0.0, 0.0);
        for i in 0..n {
            symbol += TorusGrid::hessian_mult(i, i, k, kd);
        }
        if symbol.norm() == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            1.0 / symbol
        }
    });
    ScalarField::from_values(grid, grid.inverse_real(inverted)).expect("finite inverse")
}

/// Torus quadrature h^(2n) * sum f * weight; exact for band-limited integrands.
pub fn integrate(f: &ScalarField, weight: Option<&ScalarField>) -> f64 {
    let cell = f.grid().cell_volume();
    match weight {
        None => f.values().iter().sum::<f64>() * cell,
        Some(w) => {
            debug_assert_eq!(f.grid().as_ref(), w.grid().as_ref());
            f.values()
                .iter()
                .zip(w.values().iter())
                .map(|(&a, &b)| a * b)
                .sum::<f64>()
                * cell
        }
    }
}

/// L^p norm (int |f|^p weight)^(1/p); `p = f64::INFINITY` returns the grid max
/// of |f|. The optional weight is a volume form (nonnegative density).
pub fn lp_norm(f: &ScalarField, p: f64, weight: Option<&ScalarField>) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::InvalidExponent { got: p, constraint: "L^p norms need p >= 1" });
    }
    if p.is_infinite() {
        return Ok(f.max_abs());
    }
    let scale = f.max_abs();
    if scale == 0.0 {
        return Ok(0.0);
    }
    let cell = f.grid().cell_volume();
    let mut acc = 0.0;
    match weight {
        None => {
            for &v in f.values() {
                acc += (v.abs() / scale).powf(p);
            }
        }
        Some(w) => {
            debug_assert_eq!(f.grid().as_ref(), w.grid().as_ref());
            for (&v, &wv) in f.values().iter().zip(w.values().iter()) {
                acc += (v.abs() / scale).powf(p) * wv;
            }
        }
    }
    Ok(scale * (acc * cell).powf(1.0 / p))
}

/// Shortest distance on the flat torus between two points given by their
/// real coordinates (each axis has period 1).
pub fn torus_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for (&x, &y) in a.iter().zip(b.iter()) {
        let mut d = (x - y).rem_euclid(1.0);
        if d > 0.5 {
            d = 1.0 - d;
        }
        s += d * d;
    }
    s.sqrt()
}

/// Checks that two fields share a grid (public entry points use this instead
/// of the debug assertions on the arithmetic helpers).
pub fn check_same_grid(a: &TorusGrid, b: &TorusGrid) -> Result<()> {
    a.same_grid(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, m: usize) -> Arc<TorusGrid> {
        TorusGrid::new(n, m).unwrap()
    }

    #[test]
    fn grid_construction() {
        let g = grid(1, 256);
        assert_eq!(g.num_points(), 65536);
        assert!((g.spacing() - 1.0 / 256.0).abs() < 1e-15);
        let g = grid(2, 16);
        assert_eq!(g.num_points(), 65536);
        assert!(matches!(TorusGrid::new(3, 16), Err(Error::InvalidDimension(3))));
        assert!(matches!(TorusGrid::new(1, 9), Err(Error::InvalidResolution { .. })));
        assert!(matches!(TorusGrid::new(1, 4), Err(Error::InvalidResolution { .. })));
        assert!(matches!(TorusGrid::new(2, 64), Err(Error::InvalidResolution { .. })));
        // even but not a power of two is fine; the manufactured cases use m = 24
        assert!(TorusGrid::new(2, 24).is_ok());
    }

    #[test]
    fn gradient_of_constant_vanishes() {
        let g = grid(1, 16);
        let f = ScalarField::constant(&g, 3.25);
        let grad = holomorphic_gradient(&f);
        for p in 0..g.num_points() {
            assert!(grad.component(p, 0).norm() < 1e-13);
        }
    }

    #[test]
    fn gradient_of_cosine_matches_symbolic() {
        // d/dz = (d/dx - i d/dy)/2 applied to cos(2 pi x): -pi sin(2 pi x)
        let g = grid(1, 64);
        let f = ScalarField::from_fn(&g, |c| (2.0 * PI * c[0]).cos());
        let grad = holomorphic_gradient(&f);
        for p in 0..g.num_points() {
            let x = g.coords(p)[0];
            let expect = Complex64::new(-PI * (2.0 * PI * x).sin(), 0.0);
            assert!((grad.component(p, 0) - expect).norm() < 1e-11);
        }
    }

    #[test]
    fn gradient_of_sine_in_y_matches_symbolic() {
        // d/dz applied to sin(2 pi y): -i pi cos(2 pi y)
        let g = grid(1, 64);
        let f = ScalarField::from_fn(&g, |c| (2.0 * PI * c[1]).sin());
        let grad = holomorphic_gradient(&f);
        for p in 0..g.num_points() {
            let y = g.coords(p)[1];
            let expect = Complex64::new(0.0, -PI * (2.0 * PI * y).cos());
            assert!((grad.component(p, 0) - expect).norm() < 1e-11);
        }
    }

    #[test]
    fn hessian_of_cosine_matches_symbolic() {
        let g = grid(1, 64);
        let f = ScalarField::from_fn(&g, |c| (2.0 * PI * c[0]).cos());
        let h = mixed_hessian(&f);
        for p in 0..g.num_points() {
            let x = g.coords(p)[0];
            let expect = -PI * PI * (2.0 * PI * x).cos();
            assert!((h.entry(p, 0, 0).re - expect).abs() < 1e-10);
            assert!(h.entry(p, 0, 0).im.abs() < 1e-13);
        }
    }

    #[test]
    fn hessian_cross_term_matches_symbolic() {
        // f = sin(2 pi x1) sin(2 pi y2): f_{1 2bar} = i pi^2 cos(2 pi x1) sin -> cos(2 pi y2)
        let g = grid(2, 16);
        let f = ScalarField::from_fn(&g, |c| (2.0 * PI * c[0]).sin() * (2.0 * PI * c[3]).sin());
        let h = mixed_hessian(&f);
        for p in 0..g.num_points() {
            let c = g.coords(p);
            let expect = Complex64::new(0.0, PI * PI * (2.0 * PI * c[0]).cos() * (2.0 * PI * c[3]).cos());
            assert!((h.entry(p, 0, 1) - expect).norm() < 1e-10);
            // Hermitian pairing is structural
            assert!((h.entry(p, 1, 0) - expect.conj()).norm() < 1e-10);
        }
    }

    #[test]
    fn hessian_of_constant_is_zero() {
        let g = grid(2, 8);
        let h = mixed_hessian(&ScalarField::constant(&g, -7.0));
        for p in 0..g.num_points() {
            for i in 0..2 {
                for j in 0..2 {
                    assert!(h.entry(p, i, j).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn integrate_examples() {
        let g = grid(1, 32);
        assert!((integrate(&ScalarField::constant(&g, 1.0), None) - 1.0).abs() < 1e-14);
        let cosx = ScalarField::from_fn(&g, |c| (2.0 * PI * c[0]).cos());
        assert!(integrate(&cosx, None).abs() < 1e-14);
        let cos2 = cosx.map(|v| v * v);
        assert!((integrate(&cos2, None) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn lp_norm_examples() {
        let g = grid(1, 32);
        let two = ScalarField::constant(&g, 2.0);
        assert!((lp_norm(&two, 5.0, None).unwrap() - 2.0).abs() < 1e-13);
        let cosx = ScalarField::from_fn(&g, |c| (2.0 * PI * c[0]).cos());
        assert!((lp_norm(&cosx, f64::INFINITY, None).unwrap() - 1.0).abs() < 1e-14);
        assert!((lp_norm(&cosx, 2.0, None).unwrap() - 0.5f64.sqrt()).abs() < 1e-13);
        assert!(matches!(
            lp_norm(&cosx, 0.5, None),
            Err(Error::InvalidExponent { .. })
        ));
    }

    #[test]
    fn lp_norm_monotone_in_p_under_probability_weight() {
        let g = grid(1, 16);
        let f = ScalarField::from_fn(&g, |c| {
            (2.0 * PI * c[0]).cos() + 0.4 * (4.0 * PI * c[1]).sin() + 0.1
        });
        let mut last = 0.0;
        for &p in &[1.0, 2.0, 4.0, 8.0, f64::INFINITY] {
            let v = lp_norm(&f, p, None).unwrap();
            assert!(v + 1e-12 >= last, "p = {p}: {v} < {last}");
            last = v;
        }
    }

    #[test]
    fn spectral_derivative_of_pure_modes_is_exact() {
        let g = grid(1, 32);
        for kx in [1i32, 3, 7, 11] {
            let f = ScalarField::from_fn(&g, |c| (2.0 * PI * kx as f64 * c[0]).cos());
            let grad = holomorphic_gradient(&f);
            for p in (0..g.num_points()).step_by(37) {
                let x = g.coords(p)[0];
                let expect = -PI * kx as f64 * (2.0 * PI * kx as f64 * x).sin();
                let got = grad.component(p, 0);
                assert!((got.re - expect).abs() < 1e-12 * kx.abs() as f64);
                assert!(got.im.abs() < 1e-12 * kx.abs() as f64);
            }
        }
    }

    #[test]
    fn antiholomorphic_is_conjugate_of_holomorphic() {
        // computed through the multiplier tables directly
        let g = grid(2, 12);
        let f = ScalarField::from_fn(&g, |c| {
            (2.0 * PI * c[0]).cos() * (2.0 * PI * c[3]).sin() + (4.0 * PI * c[2]).cos()
        });
        let spec = g.spectrum(f.values());
        for j in 0..2 {
            let hol = g.inverse_complex(g.multiplied(&spec, |_, kd| TorusGrid::dz_mult(j, kd)));
            let anti = g.inverse_complex(g.multiplied(&spec, |_, kd| TorusGrid::dzbar_mult(j, kd)));
            for p in (0..g.num_points()).step_by(101) {
                assert!((anti[p] - hol[p].conj()).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn hessian_trace_is_quarter_laplacian() {
        let g = grid(2, 12);
        let f = ScalarField::from_fn(&g, |c| {
            (2.0 * PI * c[0]).cos() * (2.0 * PI * c[1]).sin() + 0.3 * (4.0 * PI * c[3]).cos()
        });
        let tr = mixed_hessian(&f).trace();
        // independent spectral evaluation of the full real Laplacian
        let spec = g.spectrum(f.values());
        let lap = g.inverse_real(g.multiplied(&spec, |k, _| {
            let ksq: f64 = k.iter().map(|&x| x * x).sum();
            Complex64::new(-4.0 * PI * PI * ksq, 0.0)
        }));
        for p in (0..g.num_points()).step_by(53) {
            assert!((tr.values()[p] - 0.25 * lap[p]).abs() < 1e-10);
        }
    }

    #[test]
    fn hessian_trace_integrates_to_zero() {
        let g = grid(2, 12);
        let f = ScalarField::from_fn(&g, |c| {
            (2.0 * PI * (c[0] + c[3])).cos() + 0.7 * (2.0 * PI * c[2]).sin()
        });
        let tr = mixed_hessian(&f).trace();
        assert!(integrate(&tr, None).abs() <= 1e-10 * f.max_abs().max(1.0));
    }

    #[test]
    fn torus_distance_wraps() {
        assert!((torus_distance(&[0.1, 0.0], &[0.9, 0.0]) - 0.2).abs() < 1e-15);
        assert!((torus_distance(&[0.0, 0.25], &[0.5, 0.25]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn out_of_band_fraction_flags_rough_fields() {
        let g = grid(1, 32);
        let smooth = ScalarField::from_fn(&g, |c| (2.0 * PI * c[0]).cos());
        assert!(smooth.out_of_band_fraction(8.0) < 1e-20);
        let rough = ScalarField::from_fn(&g, |c| (2.0 * PI * 12.0 * c[0]).cos());
        assert!(rough.out_of_band_fraction(8.0) > 0.99);
    }
}
