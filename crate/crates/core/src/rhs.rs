//! Generators for the right-hand side F: band-limited random fields, the
//! near-critical cusp family probing the W^{1,p} regularity threshold, and
//! manufactured data with a known solution. Every generator returns an F
//! already satisfying the compatibility normalization int exp(F) dvol_g = Vol.

use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{
    check_same_grid, lp_norm, mixed_hessian, torus_distance, HermitianField, ScalarField,
    TorusGrid,
};
use crate::linalg;
use crate::operator::{normalize_rhs, KahlerBackground};

/// Parameters of the mollified cusp profile
/// F = A chi(rho/r0) (rho^2 + delta^2)^(beta/2), rho the torus distance to
/// the center. The gradient scales like rho^(beta-1), so F stays bounded in
/// W^{1,p} uniformly in the mollification exactly when p (1-beta) < 2n.
#[derive(Debug, Clone, Serialize)]
pub struct CuspParams {
    /// Center on the torus, one coordinate per real axis.
    pub center: Vec<f64>,
    /// Cusp exponent, inside (0.05, 0.95).
    pub beta: f64,
    /// Cutoff radius r0 of the smooth compact support.
    pub cutoff_radius: f64,
    /// Mollification scale in grid units, delta = delta_over_h * h (>= 1).
    pub delta_over_h: f64,
}

impl Default for CuspParams {
    fn default() -> Self {
        CuspParams {
            center: vec![0.5, 0.5, 0.5, 0.5],
            beta: 0.6,
            cutoff_radius: 0.25,
            delta_over_h: 2.0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub enum RhsKind {
    /// Band-limited random trigonometric polynomial, modes up to `bandwidth`
    /// per axis.
    Smooth { bandwidth: usize },
    Cusp(CuspParams),
    /// F manufactured from the reference potential
    /// amplitude * (cos 2 pi x^1 [+ cos 2 pi y^n]).
    Manufactured { star_amplitude: f64 },
}

/// Smoothness class of a right-hand side. The pointwise differential
/// inequality checks need analytic data (third derivatives of the solution);
/// cusp data is declared rough and refused there by contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RhsClass {
    BandLimited,
    Rough,
}

impl RhsKind {
    pub fn class(&self) -> RhsClass {
        match self {
            RhsKind::Smooth { .. } | RhsKind::Manufactured { .. } => RhsClass::BandLimited,
            RhsKind::Cusp(_) => RhsClass::Rough,
        }
    }
}

/// Full description of one right-hand side instance.
#[derive(Debug, Clone, Serialize)]
pub struct RhsSpec {
    pub kind: RhsKind,
    pub seed: u64,
    pub amplitude: f64,
    /// Sobolev exponent of the family, must exceed 2n.
    pub p0: f64,
}

impl RhsSpec {
    pub fn validate(&self, grid: &TorusGrid) -> Result<()> {
        let n = grid.complex_dim();
        if self.p0 <= (2 * n) as f64 {
            return Err(Error::SubcriticalExponent { p0: self.p0, n });
        }
        if !self.amplitude.is_finite() || self.amplitude < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "amplitude must be finite and nonnegative, got {}",
                self.amplitude
            )));
        }
        match &self.kind {
            RhsKind::Smooth { bandwidth } => {
                if *bandwidth < 1 || *bandwidth >= grid.points_per_axis() / 2 {
                    return Err(Error::InvalidConfig(format!(
                        "bandwidth {} does not fit the grid (need 1 <= K < m/2 = {})",
                        bandwidth,
                        grid.points_per_axis() / 2
                    )));
                }
            }
            RhsKind::Cusp(c) => {
                if !(c.beta > 0.05 && c.beta < 0.95) {
                    return Err(Error::InvalidExponent {
                        got: c.beta,
                        constraint: "cusp exponent beta must lie in (0.05, 0.95)",
                    });
                }
                if c.center.len() != 2 * n {
                    return Err(Error::InvalidConfig(format!(
                        "cusp center needs {} coordinates, got {}",
                        2 * n,
                        c.center.len()
                    )));
                }
                if !(c.delta_over_h >= 1.0) {
                    return Err(Error::InvalidConfig(
                        "mollification must be at least one grid spacing (delta_over_h >= 1)"
                            .into(),
                    ));
                }
                if !(c.cutoff_radius > 0.0 && c.cutoff_radius <= 1.0) {
                    return Err(Error::InvalidConfig(
                        "cutoff radius must lie in (0, 1]".into(),
                    ));
                }
            }
            RhsKind::Manufactured { .. } => {}
        }
        Ok(())
    }

    /// Builds the normalized field on the given background.
    pub fn build(&self, grid: &Arc<TorusGrid>, bg: &KahlerBackground) -> Result<ScalarField> {
        self.validate(grid)?;
        match &self.kind {
            RhsKind::Smooth { bandwidth } => {
                Ok(smooth_random_rhs(grid, bg, self.seed, self.amplitude, *bandwidth))
            }
            RhsKind::Cusp(params) => cusp_rhs(grid, bg, params, self.amplitude),
            RhsKind::Manufactured { star_amplitude } => {
                let phi_star = manufactured_potential(grid, *star_amplitude);
                manufactured_rhs(&phi_star, bg)
            }
        }
    }

    pub fn label(&self) -> String {
        match &self.kind {
            RhsKind::Smooth { bandwidth } => {
                format!("smooth(seed={},A={},K={})", self.seed, self.amplitude, bandwidth)
            }
            RhsKind::Cusp(c) => format!(
                "cusp(A={},beta={},r0={},delta={}h)",
                self.amplitude, c.beta, c.cutoff_radius, c.delta_over_h
            ),
            RhsKind::Manufactured { star_amplitude } => {
                format!("manufactured(a={star_amplitude})")
            }
        }
    }
}

/// Band-limited random real field with grid sup-norm equal to `amplitude`,
/// then normalized. Coefficients are drawn in a fixed mode order independent
/// of the grid resolution, so refining the grid keeps the same continuum
/// field. Deterministic in the seed.
pub fn smooth_random_rhs(
    grid: &Arc<TorusGrid>,
    bg: &KahlerBackground,
    seed: u64,
    amplitude: f64,
    bandwidth: usize,
) -> ScalarField {
    if amplitude == 0.0 {
        return ScalarField::zeros(grid);
    }
    let raw = band_limited_noise(grid, seed, bandwidth);
    let sup = raw.max_abs();
    let scaled = if sup > 0.0 { raw.scaled(amplitude / sup) } else { raw };
    normalize_rhs(&scaled, bg)
}

/// The unnormalized random trigonometric polynomial shared by the rhs
/// generator and the Sobolev trial functions.
pub(crate) fn band_limited_noise(
    grid: &Arc<TorusGrid>,
    seed: u64,
    bandwidth: usize,
) -> ScalarField {
    let axes = 2 * grid.complex_dim();
    let m = grid.points_per_axis();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spec = vec![Complex64::new(0.0, 0.0); grid.num_points()];
    let k_range = bandwidth as i64;
    // odometer over the mode cube [-K, K]^axes in a fixed lexicographic order
    let mut mode = vec![-k_range; axes];
    loop {
        // two normals per mode, drawn whether or not the mode is kept, so the
        // stream is identical across grids
        let re = standard_normal(&mut rng);
        let im = standard_normal(&mut rng);
        if keep_half_space(&mode) {
            let coeff = Complex64::new(re, im);
            let mut idx_pos = 0usize;
            let mut idx_neg = 0usize;
            for &k in mode.iter() {
                let ip = if k >= 0 { k as usize } else { (k + m as i64) as usize };
                let ineg = if k <= 0 { (-k) as usize } else { m - k as usize };
                idx_pos = idx_pos * m + ip;
                idx_neg = idx_neg * m + ineg;
            }
            spec[idx_pos] += coeff;
            spec[idx_neg] += coeff.conj();
        }
        let mut carry = axes;
        for a in (0..axes).rev() {
            mode[a] += 1;
            if mode[a] <= k_range {
                carry = a;
                break;
            }
            mode[a] = -k_range;
        }
        if carry == axes {
            break;
        }
    }
    for v in spec.iter_mut() {
        *v *= grid.num_points() as f64;
    }
    let vals = grid.inverse_real(spec);
    ScalarField::from_values(grid, vals).expect("finite noise field")
}

/// Keeps exactly one of each (k, -k) pair: the first nonzero entry positive.
fn keep_half_space(mode: &[i64]) -> bool {
    for &k in mode {
        if k > 0 {
            return true;
        }
        if k < 0 {
            return false;
        }
    }
    false // the zero mode carries no randomness; the mean is fixed by normalization
}

/// Box-Muller standard normal from the uniform stream.
fn standard_normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// C^2 quintic cutoff: identically 1 on [0, 1/2], identically 0 from 1 on.
pub(crate) fn smooth_cutoff(t: f64) -> f64 {
    if t <= 0.5 {
        1.0
    } else if t >= 1.0 {
        0.0
    } else {
        let s = 2.0 * (t - 0.5);
        1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
    }
}

/// Mollified cusp field, normalized. W^{1,p}-bounded uniformly in the
/// mollification exactly when p < 2n/(1-beta).
///
/// The profile is evaluated on a supersampled scratch grid, smoothly
/// rolled off in frequency and projected onto the target grid, so the grid
/// samples carry no aliased content and spectral derivatives of the field
/// converge under refinement.
pub fn cusp_rhs(
    grid: &Arc<TorusGrid>,
    bg: &KahlerBackground,
    params: &CuspParams,
    amplitude: f64,
) -> Result<ScalarField> {
    if !(params.beta > 0.05 && params.beta < 0.95) {
        return Err(Error::InvalidExponent {
            got: params.beta,
            constraint: "cusp exponent beta must lie in (0.05, 0.95)",
        });
    }
    let delta = params.delta_over_h * grid.spacing();
    let profile = |c: &[f64]| {
        let rho = torus_distance(c, &params.center[..c.len()]);
        let chi = smooth_cutoff(rho / params.cutoff_radius);
        amplitude * chi * (rho * rho + delta * delta).powf(params.beta / 2.0)
    };

    let m = grid.points_per_axis();
    let n = grid.complex_dim();
    // keep the scratch grid below ~17M points
    let oversample_ok = if n == 1 { m <= 512 } else { m <= 32 };
    let raw = if oversample_ok {
        let fine = TorusGrid::new_internal(n, 2 * m)?;
        let fine_field = ScalarField::from_fn(&fine, profile);
        let fine_spec = fine.spectrum(fine_field.values());
        // gather target modes from the supersampled spectrum
        let scale = grid.num_points() as f64 / fine.num_points() as f64;
        let mut spec = vec![num_complex::Complex64::new(0.0, 0.0); grid.num_points()];
        grid.for_each_freq(|p, k, _| {
            let mut fine_index = 0usize;
            for &ka in k.iter().take(2 * n) {
                let fi = if ka >= 0.0 { ka as usize } else { (ka + 2.0 * m as f64) as usize };
                fine_index = fine_index * 2 * m + fi;
            }
            spec[p] = fine_spec[fine_index] * scale * spectral_rolloff(k, m);
        });
        ScalarField::from_values(grid, grid.inverse_real(spec))?
    } else {
        let sampled = ScalarField::from_fn(grid, profile);
        let spec = grid.spectrum(sampled.values());
        let filtered = grid.multiplied(&spec, |k, _| {
            num_complex::Complex64::new(spectral_rolloff(k, m), 0.0)
        });
        ScalarField::from_values(grid, grid.inverse_real(filtered))?
    };
    Ok(normalize_rhs(&raw, bg))
}

/// Smooth exponential roll-off reaching 1e-16 at the Nyquist frequency while
/// leaving modes below m/4 essentially untouched.
fn spectral_rolloff(k: &[f64; 4], m: usize) -> f64 {
    let kmax = k.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
    let x = kmax / (m as f64 / 2.0);
    (-36.84 * x.powi(16)).exp()
}

/// Reference potential for manufactured runs:
/// a cos(2 pi x^1) for n = 1, a (cos 2 pi x^1 + cos 2 pi y^2) for n = 2.
pub fn manufactured_potential(grid: &Arc<TorusGrid>, amplitude: f64) -> ScalarField {
    let two_pi = 2.0 * std::f64::consts::PI;
    match grid.complex_dim() {
        1 => ScalarField::from_fn(grid, |c| amplitude * (two_pi * c[0]).cos()),
        _ => ScalarField::from_fn(grid, |c| {
            amplitude * ((two_pi * c[0]).cos() + (two_pi * c[3]).cos())
        }),
    }
}

/// Reads the equation right to left: F = log det(g + hess phi*) - log det g,
/// renormalized. Fails unless g + hess(phi*) is positive definite.
pub fn manufactured_rhs(phi_star: &ScalarField, bg: &KahlerBackground) -> Result<ScalarField> {
    check_same_grid(bg.grid(), phi_star.grid())?;
    let grid = phi_star.grid();
    let n = grid.complex_dim();
    let stride = HermitianField::packed_stride(n);
    let hess = mixed_hessian(phi_star);
    let mut buf = [0.0; 4];
    let mut min_eig = f64::INFINITY;
    let mut values = vec![0.0; grid.num_points()];
    for p in 0..grid.num_points() {
        let h = hess.packed_at(p);
        match bg.metric_opt() {
            None => {
                buf[..stride].copy_from_slice(h);
                buf[0] += 1.0;
                if n == 2 {
                    buf[1] += 1.0;
                }
            }
            Some(g) => {
                let gp = g.packed_at(p);
                for (o, (a, b)) in buf.iter_mut().zip(gp.iter().zip(h.iter())) {
                    *o = a + b;
                }
            }
        }
        min_eig = min_eig.min(linalg::min_eig(n, &buf[..stride]));
        if min_eig <= 0.0 {
            return Err(Error::NotPositive { min_eig });
        }
        values[p] = linalg::det(n, &buf[..stride]).ln() - bg.det_metric_at(p).ln();
    }
    let raw = ScalarField::from_values(grid, values)?;
    Ok(normalize_rhs(&raw, bg))
}

/// Sobolev norm (||F||_p^p + || |grad F| ||_p^p)^(1/p) with the Riemannian
/// gradient convention |grad F|^2 = 2 g^{k lbar} F_k F_lbar; p = infinity
/// takes the larger of the two sup norms.
pub fn w1p_norm(f: &ScalarField, p: f64, bg: &KahlerBackground) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::InvalidExponent { got: p, constraint: "W^{1,p} norms need p >= 1" });
    }
    let grad = bg.gradient_norm_sq(f).map(f64::sqrt);
    if p.is_infinite() {
        return Ok(f.max_abs().max(grad.max_abs()));
    }
    let density = bg.volume_density();
    let a = lp_norm(f, p, Some(&density))?;
    let b = lp_norm(&grad, p, Some(&density))?;
    Ok((a.powf(p) + b.powf(p)).powf(1.0 / p))
}
