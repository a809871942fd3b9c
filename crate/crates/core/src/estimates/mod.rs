//! Barrier functions, pointwise inequality fits, Moser-iteration ladders,
//! Sobolev-constant probes and estimate sweeps.
//!
//! The differential inequalities behind the a priori estimates assert the
//! existence of constants; here the constants are fitted from grid data. The
//! coefficient of the superlinear term is pinned at half its sharp measured
//! candidate (mirroring the Young-absorption split of the derivations), the
//! compensating constant is then the smallest value making the inequality
//! hold at every grid point, and the worst signed margin is reported.

mod moser;
mod pointwise;
mod sobolev;
mod suite;
mod sweep;

pub use moser::{ladder_exponents, moser_track, LadderMode, MoserLadder};
pub use pointwise::{
    eigenvalue_amgm_margin, gradient_absorption_margin, sample_inequality, sos_identity,
    young_constant, InequalitySample, SosEvaluation,
};
pub use sobolev::{sobolev_probe, SobolevProbe, SobolevVariant, TrialClass};
pub use suite::{run_inequality_suites, InequalitySuiteSummary, SuiteReport};
pub use sweep::{sweep_estimates, SweepRow};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{mixed_hessian, HermitianField, ScalarField};
use crate::linalg;
use crate::operator::{KahlerBackground, PotentialState};
use crate::rhs::RhsClass;

/// Backstop on the measured spectral energy above the m/4 band limit for
/// data declared band-limited; analytic right-hand sides stay orders of
/// magnitude below this even when their harmonics decay slowly.
const ROUGH_ENERGY_FRACTION: f64 = 5e-2;

/// Configuration of the Laplacian barrier u = exp(-C1 phi)(n + lap phi).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LaplacianBarrierConfig {
    pub c1: f64,
}

impl LaplacianBarrierConfig {
    /// Default choice: 1 on flat backgrounds, 1 - inf_bisec + 0.1 on curved
    /// ones, keeping c1 + inf_bisec safely positive.
    pub fn for_background(bg: &KahlerBackground) -> LaplacianBarrierConfig {
        let c1 = if bg.is_flat() { 1.0 } else { 1.0 - bg.inf_bisectional() + 0.1 };
        LaplacianBarrierConfig { c1 }
    }

    pub fn validate(&self, bg: &KahlerBackground) -> Result<()> {
        if self.c1 + bg.inf_bisectional() < 0.1 {
            return Err(Error::InvalidConfig(format!(
                "barrier constant c1 = {} leaves c1 + inf_bisec = {} below 0.1",
                self.c1,
                self.c1 + bg.inf_bisectional()
            )));
        }
        Ok(())
    }
}

/// Configuration of the gradient barrier u = exp(-A(phi))(|grad phi|^2 + 1)
/// with A(t) = (B + 2) t - t^2 / (2 C0), C0 = 1 + sup|phi|.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GradientBarrierConfig {
    pub b: f64,
    pub c0: f64,
}

impl GradientBarrierConfig {
    pub fn for_state(state: &PotentialState, bg: &KahlerBackground) -> GradientBarrierConfig {
        GradientBarrierConfig { b: bg.b_lower(), c0: 1.0 + state.phi().max_abs() }
    }

    pub fn a(&self, t: f64) -> f64 {
        (self.b + 2.0) * t - t * t / (2.0 * self.c0)
    }

    pub fn a_prime(&self, t: f64) -> f64 {
        self.b + 2.0 - t / self.c0
    }

    pub fn a_second(&self) -> f64 {
        -1.0 / self.c0
    }
}

/// Fitted constants of a pointwise differential inequality: the pinned
/// superlinear coefficient, the smallest compensating constant, and the worst
/// signed margin of the inequality at that pair (nonnegative when the fit
/// closed).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct InequalityFit {
    pub coefficient: f64,
    pub offset: f64,
    pub worst_margin: f64,
}

/// u = exp(-C1 phi)(n + lap phi); strictly positive on valid states.
pub fn laplacian_barrier(
    state: &PotentialState,
    bg: &KahlerBackground,
    cfg: &LaplacianBarrierConfig,
) -> ScalarField {
    let n_plus_lap = state.n_plus_laplacian(bg);
    state
        .phi()
        .zip_with(&n_plus_lap, |phi, t| (-cfg.c1 * phi).exp() * t)
}

/// u = exp(-A(phi))(|grad phi|^2 + 1); bounded away from zero.
pub fn gradient_barrier(
    state: &PotentialState,
    bg: &KahlerBackground,
    cfg: &GradientBarrierConfig,
) -> ScalarField {
    let grad_sq = bg.gradient_norm_sq(state.phi());
    state
        .phi()
        .zip_with(&grad_sq, |phi, gs| (-cfg.a(phi)).exp() * (gs + 1.0))
}

/// Gate of the pointwise derivative checks: rough-class data is refused by
/// contract (no spectral statistic separates a mild cusp from analytic data
/// with slowly decaying harmonics at these resolutions), and declared
/// band-limited data must still pass a lenient measured backstop.
fn require_band_limited(rhs: &ScalarField, class: RhsClass) -> Result<()> {
    let kmax = rhs.grid().points_per_axis() as f64 / 4.0;
    let fraction = rhs.out_of_band_fraction(kmax);
    if class == RhsClass::Rough || fraction > ROUGH_ENERGY_FRACTION {
        return Err(Error::RoughInput { fraction });
    }
    Ok(())
}

/// Laplacian applied through the deformed metric, Delta_phi f, evaluated
/// spectrally at a state.
pub fn deformed_laplacian(
    state: &PotentialState,
    bg: &KahlerBackground,
    f: &ScalarField,
) -> ScalarField {
    let grid = state.grid();
    let n = grid.complex_dim();
    let stride = HermitianField::packed_stride(n);
    let hess = mixed_hessian(f);
    let mut buf = [0.0; 4];
    let values = (0..grid.num_points())
        .map(|p| {
            state.metric_phi_at(p, bg, &mut buf);
            linalg::trace_inv_pair(n, &buf[..stride], hess.packed_at(p))
        })
        .collect();
    ScalarField::from_values(grid, values).expect("finite deformed Laplacian")
}

/// Fits the Laplacian-barrier differential inequality
/// C2 (n + lap phi)^{n/(n-1)} + exp(-C1 phi) lap F - C3 <= Delta_phi u
/// on the grid. C2 is pinned at half the minimum of
/// (C1 + inf_bisec) exp(-C1 phi - F/(n-1)); C3 is the smallest nonnegative
/// constant closing the inequality. Needs n >= 2 and band-limited F.
pub fn fit_laplacian_inequality(
    state: &PotentialState,
    rhs: &ScalarField,
    class: RhsClass,
    bg: &KahlerBackground,
    cfg: &LaplacianBarrierConfig,
) -> Result<InequalityFit> {
    let grid = state.grid();
    let n = grid.complex_dim();
    if n < 2 {
        return Err(Error::InvalidDimension(n));
    }
    cfg.validate(bg)?;
    require_band_limited(rhs, class)?;

    let u = laplacian_barrier(state, bg, cfg);
    let lap_phi_u = deformed_laplacian(state, bg, &u);
    let lap_f = bg.laplacian(rhs);
    let n_plus_lap = state.n_plus_laplacian(bg);
    let phi = state.phi();

    let exponent = n as f64 / (n as f64 - 1.0);
    let inv_nm1 = 1.0 / (n as f64 - 1.0);
    let mut coeff_candidate = f64::INFINITY;
    for p in 0..grid.num_points() {
        let c = (-cfg.c1 * phi.values()[p] - rhs.values()[p] * inv_nm1).exp();
        coeff_candidate = coeff_candidate.min(c);
    }
    let c2 = 0.5 * (cfg.c1 + bg.inf_bisectional()) * coeff_candidate;
    debug_assert!(c2 > 0.0);

    let mut c3_needed = 0.0f64;
    for p in 0..grid.num_points() {
        let s = n_plus_lap.values()[p].powf(exponent);
        let e = (-cfg.c1 * phi.values()[p]).exp() * lap_f.values()[p];
        c3_needed = c3_needed.max(c2 * s + e - lap_phi_u.values()[p]);
    }
    let c3 = c3_needed.max(0.0);

    let mut worst = f64::INFINITY;
    for p in 0..grid.num_points() {
        let s = n_plus_lap.values()[p].powf(exponent);
        let e = (-cfg.c1 * phi.values()[p]).exp() * lap_f.values()[p];
        worst = worst.min(lap_phi_u.values()[p] - (c2 * s + e - c3));
    }
    Ok(InequalityFit { coefficient: c2, offset: c3, worst_margin: worst })
}

/// Fits the gradient-barrier differential inequality
/// Delta_phi u >= eps0 |grad phi|^{2 + 2/n} + exp(-A(phi))(n + lap phi)
///               - C |grad F| |grad phi| - C
/// on the grid. eps0 is pinned at half the sharp measured candidate from the
/// curvature-term lower bound; C is the smallest constant closing the
/// inequality. Needs band-limited F.
pub fn fit_gradient_inequality(
    state: &PotentialState,
    rhs: &ScalarField,
    class: RhsClass,
    bg: &KahlerBackground,
    cfg: &GradientBarrierConfig,
) -> Result<InequalityFit> {
    require_band_limited(rhs, class)?;
    let grid = state.grid();
    let n = grid.complex_dim();
    let nf = n as f64;
    let len = grid.num_points();

    let u = gradient_barrier(state, bg, cfg);
    let lap_phi_u = deformed_laplacian(state, bg, &u);
    let grad_sq = bg.gradient_norm_sq(state.phi());
    let grad_f = bg.gradient_norm_sq(rhs).map(f64::sqrt);
    let n_plus_lap = state.n_plus_laplacian(bg);
    let phi = state.phi();

    // deformed-metric quadratic form of the gradient, frame scalar of the
    // curvature-term bound
    let grad = crate::geometry::holomorphic_gradient(phi);
    let stride = HermitianField::packed_stride(n);
    let mut buf = [0.0; 4];
    let mut inv = [0.0; 4];
    let grad_sq_phi_metric: Vec<f64> = (0..len)
        .map(|p| {
            state.metric_phi_at(p, bg, &mut buf);
            linalg::invert(n, &buf[..stride], &mut inv[..stride]);
            let w: Vec<num_complex::Complex64> = (0..n).map(|j| grad.component(p, j)).collect();
            linalg::quadratic_form(n, &inv[..stride], &w)
        })
        .collect();

    // pinned coefficient: half the sharp candidate of the lower-bound chain
    let max_grad_sq = grad_sq.values().iter().cloned().fold(0.0f64, f64::max);
    let threshold = 1e-6 * max_grad_sq;
    let pow_a = 1.0 + 1.0 / nf; // |grad phi|^{2 + 2/n} = (grad_sq)^{1 + 1/n}
    let mut candidate = f64::INFINITY;
    for p in 0..len {
        let gs = grad_sq.values()[p];
        if gs <= threshold || gs == 0.0 {
            continue;
        }
        let bound_factor = if n >= 2 {
            n_plus_lap.values()[p].powf(1.0 / (nf - 1.0))
                * (-rhs.values()[p] / (nf - 1.0)).exp()
        } else {
            // n = 1: the trace of the inverse deformed metric is exactly e^{-F}
            (-rhs.values()[p]).exp()
        };
        let t = (-cfg.a(phi.values()[p])).exp()
            * gs
            * (grad_sq_phi_metric[p] / cfg.c0 + bound_factor);
        candidate = candidate.min(t / gs.powf(pow_a));
    }
    let eps0 = if candidate.is_finite() { 0.5 * candidate } else { 1.0 };

    let mut c_needed = 0.0f64;
    for p in 0..len {
        let a = grad_sq.values()[p].powf(pow_a);
        let gterm = (-cfg.a(phi.values()[p])).exp() * n_plus_lap.values()[p];
        let weight = 1.0 + grad_f.values()[p] * grad_sq.values()[p].sqrt();
        c_needed = c_needed.max((eps0 * a + gterm - lap_phi_u.values()[p]) / weight);
    }
    let c = c_needed.max(0.0);

    let mut worst = f64::INFINITY;
    for p in 0..len {
        let a = grad_sq.values()[p].powf(pow_a);
        let gterm = (-cfg.a(phi.values()[p])).exp() * n_plus_lap.values()[p];
        let weight = 1.0 + grad_f.values()[p] * grad_sq.values()[p].sqrt();
        worst = worst.min(lap_phi_u.values()[p] - eps0 * a - gterm + c * weight);
    }
    Ok(InequalityFit { coefficient: eps0, offset: c, worst_margin: worst })
}

/// Defect of the integration-by-parts identity
/// int g^{k lbar} phi_k phi_lbar dvol_g = -int phi lap phi dvol_g,
/// normalized by the Dirichlet energy (0 for constants).
pub fn integration_by_parts_defect(state: &PotentialState, bg: &KahlerBackground) -> f64 {
    let phi = state.phi();
    // undoubled Dirichlet pairing matches the Laplacian normalization
    let dirichlet = bg.gradient_norm_sq(phi).scaled(0.5);
    let lap = bg.laplacian(phi);
    let density = bg.volume_density();
    let lhs = crate::geometry::integrate(&dirichlet, Some(&density));
    let rhs = -crate::geometry::integrate(&phi.zip_with(&lap, |a, b| a * b), Some(&density));
    let scale = lhs.abs().max(1e-300);
    (lhs - rhs) / scale
}
