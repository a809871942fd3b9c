//! Damped Newton solver with continuation in the right-hand side amplitude.
//!
//! The path F_t = normalize(t F), t = k/S transports the trivial solution
//! phi = 0 at t = 0 to the target equation. Each stage runs Newton steps: the
//! linearized equation (Delta_phi + lambda) delta = -residual is solved
//! iteratively, then a line search halves the step until positivity
//! (min eigenvalue of g + hess >= damping floor) holds and the sup-norm
//! residual strictly decreases.
//!
//! For lambda in {0, -1} the Newton system is solved in divergence form,
//! det(g_phi) Delta_phi psi = sum_i d_i(det(g_phi) g_phi^{i jbar} d_jbar psi),
//! which is symmetric positive (semi)definite on the grid, by conjugate
//! gradients preconditioned with the constant-coefficient spectral inverse.
//! lambda = +1 makes the zero-order term indefinite, so that case runs
//! BiCGStab on the non-divergence form and may legitimately fail.

use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{mixed_hessian, HermitianField, ScalarField, TorusGrid};
use crate::linalg;
use crate::operator::{
    normalize_rhs, project_zero_mean, residual, KahlerBackground, Lambda, PotentialState,
};

/// Solver knobs; the defaults match the documented contract.
#[derive(Debug, Clone, Serialize)]
pub struct SolveConfig {
    /// Number of continuation stages t = k/S.
    pub continuation_steps: usize,
    /// Sup-norm residual target of the final stage.
    pub newton_tol: f64,
    /// Newton iteration cap per stage.
    pub max_newton: usize,
    /// Relative residual target of each linear solve.
    pub linear_tol: f64,
    /// Smallest admissible min eigenvalue of g + hess along the line search.
    pub damping_min_eig: f64,
    /// Cap on step halvings per Newton step.
    pub max_halvings: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            continuation_steps: 8,
            newton_tol: 1e-10,
            max_newton: 30,
            linear_tol: 1e-8,
            damping_min_eig: 0.05,
            max_halvings: 40,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.continuation_steps < 1 {
            return Err(Error::InvalidConfig("continuation_steps must be >= 1".into()));
        }
        if !(self.newton_tol > 0.0) || !(self.linear_tol > 0.0) {
            return Err(Error::InvalidConfig("tolerances must be positive".into()));
        }
        if !(self.damping_min_eig > 0.0 && self.damping_min_eig < 0.1) {
            return Err(Error::InvalidConfig(
                "damping_min_eig must lie in (0, 0.1)".into(),
            ));
        }
        Ok(())
    }
}

/// Convergence history of one continuation stage.
#[derive(Debug, Clone, Serialize)]
pub struct StageRecord {
    pub t: f64,
    /// Sup-norm residuals: entry 0 is the stage entry residual, then one per
    /// accepted Newton step.
    pub residuals: Vec<f64>,
    /// Accepted line-search factor per Newton step.
    pub dampings: Vec<f64>,
    /// Inner iterations of each linear solve.
    pub linear_iterations: Vec<usize>,
    /// Set when the stage stopped at its discrete floor instead of the
    /// stage tolerance and handed its state to the next stage.
    pub stalled: bool,
}

/// Outcome summary of one solve.
#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub stages: Vec<StageRecord>,
    pub final_residual: f64,
    pub final_min_eig: f64,
    pub sup_abs_phi: f64,
    pub sup_grad_phi: f64,
    pub sup_n_plus_laplacian: f64,
    /// L^{p} norm of the third-derivative tensor, p = 4n.
    pub w3p_seminorm: f64,
    pub w3p_exponent: f64,
    pub newton_steps: usize,
    pub retried: bool,
    /// Wall-clock time; excluded from serialized artifacts so identical
    /// configurations produce byte-identical reports.
    #[serde(skip)]
    pub wall_seconds: f64,
}

/// Diagnostics of a single Newton step.
#[derive(Debug, Clone)]
pub struct StepDiagnostics {
    pub residual_before: f64,
    pub residual_after: f64,
    pub damping: f64,
    pub linear_iterations: usize,
}

/// Internal line-search outcome: either an accepted damped step or a stall
/// (no damping decreased the residual; `positivity` records whether the
/// damping floor was the blocking constraint at some trial).
enum StepOutcome {
    Accepted(PotentialState, StepDiagnostics),
    Stalled { positivity: bool, best_min_eig: f64 },
}

/// How the Newton direction is computed. The symmetric divergence form is
/// the cheap default; the exact-Jacobian direction repairs cases where the
/// product-rule aliasing of the symmetric form grows large (badly resolved
/// deformations near the Nyquist scale).
#[derive(Clone, Copy, PartialEq)]
enum DirectionMode {
    Symmetric,
    SymmetricThenExact,
    Exact,
}

// ---------------------------------------------------------------------------
// linear solves
// ---------------------------------------------------------------------------

/// Pointwise data of the linearized operator at a state: the packed Hermitian
/// matrix D with v = D u realizing det(g_phi) g_phi^{i jbar} u_j, the volume
/// density det(g_phi), and mean coefficients for the preconditioner.
struct LinearContext {
    d_pack: Vec<f64>,
    det_phi: Vec<f64>,
    /// 1/sqrt(tr(D)/n), the symmetric diagonal scaling of the preconditioner.
    scale_half_inv: Vec<f64>,
    /// n/tr(g_phi^{-1}), the pointwise coefficient model of the
    /// non-divergence operator.
    nd_scale_inv: Vec<f64>,
    mean_lap_coeff: f64,
    mean_det: f64,
    /// mean of det(g_phi) relative to the local scale, the preconditioner
    /// mass coefficient.
    mean_scaled_det: f64,
}

fn build_linear_context(state: &PotentialState, bg: &KahlerBackground) -> LinearContext {
    let grid = state.grid();
    let n = grid.complex_dim();
    let stride = HermitianField::packed_stride(n);
    let len = grid.num_points();
    let mut d_pack = vec![0.0; len * stride];
    let mut det_phi = vec![0.0; len];
    let mut scale_half_inv = vec![0.0; len];
    let mut nd_scale_inv = vec![0.0; len];
    let mut buf = [0.0; 4];
    let mut inv = [0.0; 4];
    let mut tr_sum = 0.0;
    let mut det_sum = 0.0;
    let mut scaled_det_sum = 0.0;
    for p in 0..len {
        state.metric_phi_at(p, bg, &mut buf);
        let g = &buf[..stride];
        let det = linalg::det(n, g);
        linalg::invert(n, g, &mut inv[..stride]);
        let d = &mut d_pack[p * stride..(p + 1) * stride];
        // D = det * transpose(inverse); packed transpose flips the sign of Im h12
        d[0] = det * inv[0];
        if n == 2 {
            d[1] = det * inv[1];
            d[2] = det * inv[2];
            d[3] = -det * inv[3];
        }
        det_phi[p] = det;
        let local = linalg::trace(n, d) / n as f64;
        scale_half_inv[p] = 1.0 / local.sqrt();
        nd_scale_inv[p] = n as f64 / linalg::trace(n, &inv[..stride]);
        tr_sum += local;
        det_sum += det;
        scaled_det_sum += det / local;
    }
    LinearContext {
        d_pack,
        det_phi,
        scale_half_inv,
        nd_scale_inv,
        mean_lap_coeff: tr_sum / len as f64,
        mean_det: det_sum / len as f64,
        mean_scaled_det: scaled_det_sum / len as f64,
    }
}

impl LinearContext {
    /// -sum_i d_i (sum_j D_ij d_jbar psi), the negated divergence form; adds
    /// `mass_sign * det_phi * psi` for the zero-order term.
    fn apply(&self, grid: &Arc<TorusGrid>, psi: &[f64], mass_sign: f64) -> Vec<f64> {
        let n = grid.complex_dim();
        let stride = HermitianField::packed_stride(n);
        let len = grid.num_points();
        let spec = grid.spectrum(psi);
        let mut comps: Vec<Vec<Complex64>> = (0..n)
            .map(|j| grid.inverse_complex(grid.multiplied(&spec, |_, kd| TorusGrid::dzbar_mult(j, kd))))
            .collect();
        if n == 1 {
            let u = &mut comps[0];
            for (p, v) in u.iter_mut().enumerate() {
                *v *= self.d_pack[p];
            }
        } else {
            let (u0s, u1s) = comps.split_at_mut(1);
            let u0 = &mut u0s[0];
            let u1 = &mut u1s[0];
            for p in 0..len {
                let d = &self.d_pack[p * stride..(p + 1) * stride];
                let d12 = Complex64::new(d[2], d[3]);
                let a = u0[p];
                let b = u1[p];
                u0[p] = d[0] * a + d12 * b;
                u1[p] = d12.conj() * a + d[1] * b;
            }
        }
        let mut acc = vec![Complex64::new(0.0, 0.0); len];
        for (i, comp) in comps.into_iter().enumerate() {
            let mut cspec = comp;
            grid.fft(&mut cspec);
            let term = grid.multiplied(&cspec, |_, kd| TorusGrid::dz_mult(i, kd));
            for (a, t) in acc.iter_mut().zip(term.into_iter()) {
                *a += t;
            }
        }
        let div = grid.inverse_complex(acc);
        (0..len)
            .map(|p| -div[p].re + mass_sign * self.det_phi[p] * psi[p])
            .collect()
    }

    /// Symmetrically scaled spectral inverse of the constant-coefficient
    /// model: S^{-1/2} (-lap + mass)^{-1} S^{-1/2} with the pointwise scale
    /// S = tr(D)/n, which absorbs the scalar part of the coefficient
    /// variation. The symbol uses the Nyquist-zeroed frequencies to match the
    /// operator's derivative multipliers; for the singular lambda = 0 case
    /// the modes in the operator's null space are dropped.
    fn precondition(&self, grid: &Arc<TorusGrid>, r: &[f64], mass_sign: f64) -> Vec<f64> {
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        let mass = mass_sign * self.mean_scaled_det;
        let scaled: Vec<f64> = r
            .iter()
            .zip(self.scale_half_inv.iter())
            .map(|(&v, &s)| v * s)
            .collect();
        let spec = grid.spectrum(&scaled);
        let mut out = grid.inverse_real(grid.multiplied(&spec, |_, kd| {
            let ksq: f64 = kd.iter().map(|&x| x * x).sum();
            let denom = pi2 * ksq + mass;
            if denom.abs() < 1e-300 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(1.0 / denom, 0.0)
            }
        }));
        for (v, &s) in out.iter_mut().zip(self.scale_half_inv.iter()) {
            *v *= s;
        }
        out
    }
}

/// Removes the spectral modes annihilated by the Nyquist-zeroed first
/// derivatives (every axis frequency 0 or Nyquist); the divergence-form
/// operator is singular exactly there.
fn project_out_null_modes(grid: &Arc<TorusGrid>, v: &[f64]) -> Vec<f64> {
    let spec = grid.spectrum(v);
    let filtered = grid.multiplied(&spec, |k, kd| {
        let in_null = k
            .iter()
            .zip(kd.iter())
            .all(|(&ka, &kda)| ka == 0.0 || kda == 0.0);
        if in_null {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(1.0, 0.0)
        }
    });
    grid.inverse_real(filtered)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(&x, &y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

const LINEAR_ITERATION_CAP: usize = 500;

/// Preconditioned conjugate gradients on the symmetric divergence form.
/// `mass_sign` is 0 for lambda = 0 (kernel of constants, handled by mean
/// projection) and +1 for lambda = -1.
fn solve_pcg(
    ctx: &LinearContext,
    grid: &Arc<TorusGrid>,
    b: &[f64],
    mass_sign: f64,
    tol: f64,
) -> Result<(Vec<f64>, usize)> {
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok((vec![0.0; b.len()], 0));
    }
    let mut x = vec![0.0; b.len()];
    let mut r = b.to_vec();
    let mut z = ctx.precondition(grid, &r, mass_sign);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for iter in 0..LINEAR_ITERATION_CAP {
        let q = ctx.apply(grid, &p, mass_sign);
        let pq = dot(&p, &q);
        if !(pq > 0.0) {
            return Err(Error::LinearSolveFailed(format!(
                "conjugate-gradient curvature became nonpositive ({pq:.3e}) at iteration {iter}"
            )));
        }
        let alpha = rz / pq;
        for i in 0..x.len() {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        if norm2(&r) <= tol * bnorm {
            return Ok((x, iter + 1));
        }
        z = ctx.precondition(grid, &r, mass_sign);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..p.len() {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::LinearSolveFailed(format!(
        "conjugate gradients exhausted {LINEAR_ITERATION_CAP} iterations \
         (relative residual {:.3e})",
        norm2(&r) / bnorm
    )))
}

/// BiCGStab on the non-divergence form Delta_phi + lambda, used for the
/// indefinite lambda = +1 case.
fn solve_bicgstab(
    state: &PotentialState,
    bg: &KahlerBackground,
    grid: &Arc<TorusGrid>,
    ctx: &LinearContext,
    b: &[f64],
    lambda: f64,
    tol: f64,
    max_iters: usize,
    strict: bool,
) -> Result<(Vec<f64>, usize)> {
    let n = grid.complex_dim();
    let stride = HermitianField::packed_stride(n);
    let len = grid.num_points();
    let apply = |psi: &[f64]| -> Vec<f64> {
        let sanitized: Vec<f64> =
            psi.iter().map(|v| if v.is_finite() { *v } else { 0.0 }).collect();
        let field = ScalarField::from_values(grid, sanitized).expect("finite iterate");
        let hess = mixed_hessian(&field);
        let mut buf = [0.0; 4];
        (0..len)
            .map(|p| {
                state.metric_phi_at(p, bg, &mut buf);
                linalg::trace_inv_pair(n, &buf[..stride], hess.packed_at(p)) + lambda * psi[p]
            })
            .collect()
    };
    // model the operator as T(x) * Delta_flat + lambda with the pointwise
    // trace coefficient T; dividing by T first captures the degenerate spots
    let mean_t = ctx.nd_scale_inv.len() as f64
        / ctx.nd_scale_inv.iter().map(|&v| 1.0 / v).sum::<f64>();
    let precond = |r: &[f64]| -> Vec<f64> {
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        let scaled: Vec<f64> = r
            .iter()
            .zip(ctx.nd_scale_inv.iter())
            .map(|(&v, &t)| v * t)
            .collect();
        let spec = grid.spectrum(&scaled);
        grid.inverse_real(grid.multiplied(&spec, |_, kd| {
            let ksq: f64 = kd.iter().map(|&x| x * x).sum();
            let denom = -pi2 * ksq + lambda * mean_t;
            if denom.abs() < 1e-12 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(1.0 / denom, 0.0)
            }
        }))
    };

    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok((vec![0.0; b.len()], 0));
    }
    let mut x = vec![0.0; b.len()];
    let mut r = b.to_vec();
    let r0 = r.clone();
    let mut rho = 1.0;
    let mut alpha = 1.0;
    let mut omega = 1.0;
    let mut v = vec![0.0; b.len()];
    let mut p = vec![0.0; b.len()];
    for iter in 0..max_iters {
        let rho_new = dot(&r0, &r);
        if rho_new.abs() < 1e-300 {
            if strict {
                return Err(Error::LinearSolveFailed("BiCGStab breakdown (rho = 0)".into()));
            }
            return Ok((x, iter));
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..p.len() {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        let phat = precond(&p);
        v = apply(&phat);
        alpha = rho / dot(&r0, &v);
        if !alpha.is_finite() {
            if strict {
                return Err(Error::LinearSolveFailed("BiCGStab breakdown (alpha)".into()));
            }
            return Ok((x, iter));
        }
        let s: Vec<f64> = (0..r.len()).map(|i| r[i] - alpha * v[i]).collect();
        if norm2(&s) <= tol * bnorm {
            for i in 0..x.len() {
                x[i] += alpha * phat[i];
            }
            return Ok((x, iter + 1));
        }
        let shat = precond(&s);
        let t = apply(&shat);
        let tt = dot(&t, &t);
        if tt.abs() < 1e-300 {
            if strict {
                return Err(Error::LinearSolveFailed("BiCGStab breakdown (t = 0)".into()));
            }
            return Ok((x, iter));
        }
        omega = dot(&t, &s) / tt;
        if !omega.is_finite() {
            if strict {
                return Err(Error::LinearSolveFailed("BiCGStab breakdown (omega)".into()));
            }
            return Ok((x, iter));
        }
        for i in 0..x.len() {
            x[i] += alpha * phat[i] + omega * shat[i];
            r[i] = s[i] - omega * t[i];
        }
        let rnorm = norm2(&r);
        if !rnorm.is_finite() {
            if strict {
                return Err(Error::LinearSolveFailed("BiCGStab diverged".into()));
            }
            return Ok((vec![0.0; b.len()], iter));
        }
        if rnorm <= tol * bnorm {
            return Ok((x, iter + 1));
        }
    }
    if strict {
        Err(Error::LinearSolveFailed(format!(
            "BiCGStab exhausted {max_iters} iterations"
        )))
    } else {
        // partial direction; the caller's line search decides its worth
        Ok((x, max_iters))
    }
}

fn linear_solve_inner(
    state: &PotentialState,
    rhs: &ScalarField,
    bg: &KahlerBackground,
    lambda: Lambda,
    tol: f64,
) -> Result<(ScalarField, usize)> {
    let grid = state.grid().clone();
    let ctx = build_linear_context(state, bg);
    let len = grid.num_points();
    match lambda {
        Lambda::Zero | Lambda::MinusOne => {
            let mass_sign = if lambda == Lambda::Zero { 0.0 } else { 1.0 };
            // the positive operator is A = -L_div - lambda det(g_phi), so the
            // weighted right-hand side picks up a sign
            let mut b: Vec<f64> = (0..len).map(|p| -ctx.det_phi[p] * rhs.values()[p]).collect();
            if lambda == Lambda::Zero {
                // compatibility projection onto the operator's range
                b = project_out_null_modes(&grid, &b);
            }
            let (mut x, iters) = solve_pcg(&ctx, &grid, &b, mass_sign, tol)?;
            if lambda == Lambda::Zero {
                // pin the dvol_g mean of the update
                let field = ScalarField::from_values(&grid, x)?;
                x = project_zero_mean(&field, bg).values().to_vec();
            }
            Ok((ScalarField::from_values(&grid, x)?, iters))
        }
        Lambda::One => {
            let (x, iters) = solve_bicgstab(
                state,
                bg,
                &grid,
                &ctx,
                rhs.values(),
                1.0,
                tol,
                LINEAR_ITERATION_CAP,
                true,
            )?;
            Ok((ScalarField::from_values(&grid, x)?, iters))
        }
    }
}

/// Solves (Delta_phi + lambda) psi = rhs at the given state to the configured
/// relative tolerance. For lambda = 0 the right-hand side is projected onto
/// the compatible subspace and the solution is pinned to zero dvol_g mean.
pub fn linear_solve(
    state: &PotentialState,
    rhs: &ScalarField,
    bg: &KahlerBackground,
    lambda: Lambda,
    cfg: &SolveConfig,
) -> Result<ScalarField> {
    cfg.validate()?;
    let (psi, _) = linear_solve_inner(state, rhs, bg, lambda, cfg.linear_tol)?;
    Ok(psi)
}

// ---------------------------------------------------------------------------
// Newton iteration
// ---------------------------------------------------------------------------

fn residual_sup_from_hess(
    phi: &ScalarField,
    hess: &HermitianField,
    f_t: &ScalarField,
    bg: &KahlerBackground,
    lambda: f64,
) -> Result<(Vec<f64>, f64, f64)> {
    let grid = phi.grid();
    let n = grid.complex_dim();
    let stride = HermitianField::packed_stride(n);
    let len = grid.num_points();
    let mut values = vec![0.0; len];
    let mut buf = [0.0; 4];
    let mut sup: f64 = 0.0;
    let mut min_eig = f64::INFINITY;
    for p in 0..len {
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
        let det = linalg::det(n, &buf[..stride]);
        if det <= 0.0 {
            return Err(Error::NotPositive { min_eig });
        }
        let v = det.ln() - bg.det_metric_at(p).ln() - f_t.values()[p] + lambda * phi.values()[p];
        values[p] = v;
        sup = sup.max(v.abs());
    }
    Ok((values, sup, min_eig))
}

/// One damped Newton step at `state` for the stage right-hand side `f_t`.
/// `forcing_tol` is the linear tolerance actually used; `newton_step` applies
/// the configured floor.
fn newton_step_inner(
    state: &PotentialState,
    f_t: &ScalarField,
    bg: &KahlerBackground,
    lambda: Lambda,
    cfg: &SolveConfig,
    forcing_tol: f64,
    mode: DirectionMode,
) -> Result<(StepOutcome, bool)> {
    let grid = state.grid().clone();
    let lam = lambda.as_f64();
    let (res_vals, res_sup, _) =
        residual_sup_from_hess(state.phi(), state.hessian(), f_t, bg, lam)?;
    let neg_res = ScalarField::from_values(&grid, res_vals.iter().map(|v| -v).collect())?;

    if mode != DirectionMode::Exact {
        let (delta, linear_iterations) =
            linear_solve_inner(state, &neg_res, bg, lambda, forcing_tol)?;
        let outcome = line_search(state, f_t, bg, lambda, cfg, &delta, res_sup, linear_iterations)?;
        // a collapsed damping or a stall signals that the loose forcing met
        // an ill-conditioned system; retry at the full linear tolerance
        let retry_tight = forcing_tol > cfg.linear_tol
            && match &outcome {
                StepOutcome::Accepted(_, diag) => diag.damping < 0.125,
                StepOutcome::Stalled { positivity, .. } => !positivity,
            };
        if retry_tight {
            let (delta, linear_iterations) =
                linear_solve_inner(state, &neg_res, bg, lambda, cfg.linear_tol)?;
            let tight =
                line_search(state, f_t, bg, lambda, cfg, &delta, res_sup, linear_iterations)?;
            match (tight, outcome) {
                (StepOutcome::Accepted(st, diag), _) => {
                    return Ok((StepOutcome::Accepted(st, diag), false));
                }
                (_, StepOutcome::Accepted(st, diag)) => {
                    return Ok((StepOutcome::Accepted(st, diag), false));
                }
                (stalled, _) => match stalled {
                    StepOutcome::Stalled { positivity: false, .. }
                        if mode == DirectionMode::SymmetricThenExact => {}
                    other => return Ok((other, false)),
                },
            }
        } else {
            match outcome {
                StepOutcome::Stalled { positivity: false, .. }
                    if mode == DirectionMode::SymmetricThenExact => {}
                other => return Ok((other, false)),
            }
        }
    }

    // exact-Jacobian direction via BiCGStab on the non-divergence form
    let ctx = build_linear_context(state, bg);
    let (x, iters) = solve_bicgstab(
        state,
        bg,
        &grid,
        &ctx,
        neg_res.values(),
        lam,
        forcing_tol,
        300,
        false,
    )?;
    let mut delta = ScalarField::from_values(&grid, x)?;
    if lambda == Lambda::Zero {
        delta = project_zero_mean(&delta, bg);
    }
    let outcome = line_search(state, f_t, bg, lambda, cfg, &delta, res_sup, iters)?;
    Ok((outcome, true))
}

#[allow(clippy::too_many_arguments)]
fn line_search(
    state: &PotentialState,
    f_t: &ScalarField,
    bg: &KahlerBackground,
    lambda: Lambda,
    cfg: &SolveConfig,
    delta: &ScalarField,
    res_sup: f64,
    linear_iterations: usize,
) -> Result<StepOutcome> {
    let lam = lambda.as_f64();
    let hess_delta = mixed_hessian(delta);
    let mut damping = 1.0f64;
    let mut positivity_limited = false;
    let mut best_min_eig = f64::NEG_INFINITY;
    for _ in 0..=cfg.max_halvings {
        let trial_hess = state.hessian().zip_with(&hess_delta, |a, b| a + damping * b);
        let trial_phi = state.phi().zip_with(delta, |a, b| a + damping * b);
        match residual_sup_from_hess(&trial_phi, &trial_hess, f_t, bg, lam) {
            Ok((_, trial_sup, trial_min_eig)) => {
                best_min_eig = best_min_eig.max(trial_min_eig);
                if trial_min_eig < cfg.damping_min_eig {
                    positivity_limited = true;
                } else if trial_sup < res_sup {
                    let phi_new = if lambda == Lambda::Zero {
                        project_zero_mean(&trial_phi, bg)
                    } else {
                        trial_phi
                    };
                    let new_state = PotentialState::from_parts(phi_new, trial_hess, bg)?;
                    return Ok(StepOutcome::Accepted(
                        new_state,
                        StepDiagnostics {
                            residual_before: res_sup,
                            residual_after: trial_sup,
                            damping,
                            linear_iterations,
                        },
                    ));
                }
            }
            Err(Error::NotPositive { min_eig }) => {
                positivity_limited = true;
                best_min_eig = best_min_eig.max(min_eig);
            }
            Err(e) => return Err(e),
        }
        damping *= 0.5;
    }
    Ok(StepOutcome::Stalled { positivity: positivity_limited, best_min_eig })
}

fn stall_error(cfg: &SolveConfig, positivity: bool, best_min_eig: f64) -> Error {
    if positivity {
        Error::PositivityLost { floor: cfg.damping_min_eig, min_eig: best_min_eig }
    } else {
        Error::LinearSolveFailed(
            "line search found no residual decrease along the Newton direction".into(),
        )
    }
}

/// Public single Newton step at the configured linear tolerance.
pub fn newton_step(
    state: &PotentialState,
    f_t: &ScalarField,
    bg: &KahlerBackground,
    lambda: Lambda,
    cfg: &SolveConfig,
) -> Result<(PotentialState, StepDiagnostics)> {
    cfg.validate()?;
    let (outcome, _) = newton_step_inner(
        state,
        f_t,
        bg,
        lambda,
        cfg,
        cfg.linear_tol,
        DirectionMode::SymmetricThenExact,
    )?;
    match outcome {
        StepOutcome::Accepted(state, diag) => Ok((state, diag)),
        StepOutcome::Stalled { positivity, best_min_eig } => {
            Err(stall_error(cfg, positivity, best_min_eig))
        }
    }
}

fn continuation_attempt(
    f_rhs: &ScalarField,
    bg: &KahlerBackground,
    lambda: Lambda,
    cfg: &SolveConfig,
    stages_count: usize,
    initial: Option<&ScalarField>,
) -> Result<(PotentialState, Vec<StageRecord>, usize)> {
    let grid = bg.grid().clone();
    let start_phi = match initial {
        Some(phi) => {
            if lambda == Lambda::Zero {
                project_zero_mean(phi, bg)
            } else {
                phi.clone()
            }
        }
        None => ScalarField::zeros(&grid),
    };
    let mut state = PotentialState::new(start_phi, bg)?;
    let mut stages = Vec::new();
    let mut total_steps = 0usize;
    for k in 1..=stages_count {
        let t = k as f64 / stages_count as f64;
        let f_t = normalize_rhs(&f_rhs.scaled(t), bg);
        let stage_tol = if k == stages_count {
            cfg.newton_tol
        } else {
            cfg.newton_tol.max(1e-3)
        };
        let mut record = StageRecord {
            t,
            residuals: Vec::new(),
            dampings: Vec::new(),
            linear_iterations: Vec::new(),
            stalled: false,
        };
        let (_, mut res_sup, _) =
            residual_sup_from_hess(state.phi(), state.hessian(), &f_t, bg, lambda.as_f64())?;
        record.residuals.push(res_sup);
        let mut steps = 0usize;
        let mut sticky_exact = false;
        while res_sup > stage_tol {
            if steps >= cfg.max_newton {
                return Err(Error::ContinuationStalled {
                    stage: k,
                    stages: stages_count,
                    steps,
                    residual: res_sup,
                });
            }
            // forcing term: aim one order below the current residual, never
            // below the configured linear tolerance
            let forcing = (0.01 * res_sup.min(1.0)).clamp(cfg.linear_tol, 1e-2);
            // intermediate stages take the cheap direction only; the final
            // stage may fall back to (and then stay on) the exact Jacobian
            let mode = if k < stages_count {
                DirectionMode::Symmetric
            } else if sticky_exact {
                DirectionMode::Exact
            } else {
                DirectionMode::SymmetricThenExact
            };
            let (outcome, used_exact) =
                newton_step_inner(&state, &f_t, bg, lambda, cfg, forcing, mode)?;
            match outcome {
                StepOutcome::Accepted(next, diag) => {
                    sticky_exact = sticky_exact || used_exact;
                    state = next;
                    res_sup = diag.residual_after;
                    record.residuals.push(res_sup);
                    record.dampings.push(diag.damping);
                    record.linear_iterations.push(diag.linear_iterations);
                    steps += 1;
                    total_steps += 1;
                }
                StepOutcome::Stalled { positivity, best_min_eig } => {
                    if k == stages_count {
                        return Err(stall_error(cfg, positivity, best_min_eig));
                    }
                    // Intermediate stages exist only to warm-start the next
                    // one; a state pinned at its discrete floor (for example
                    // by null-mode content of the scaled data) is carried
                    // forward rather than failed.
                    record.stalled = true;
                    break;
                }
            }
        }
        stages.push(record);
    }
    Ok((state, stages, total_steps))
}

/// Solves residual(phi; F, lambda) = 0 along the amplitude continuation path.
/// A stalled continuation is retried once with twice the stages.
pub fn solve(
    f_rhs: &ScalarField,
    bg: &KahlerBackground,
    lambda: Lambda,
    cfg: &SolveConfig,
) -> Result<(PotentialState, SolveReport)> {
    solve_from(f_rhs, bg, lambda, cfg, None)
}

/// Coarse-grid chain below `m`: the even divisors of m from 8 up, so each
/// level shares its grid points with the target grid.
fn cascade_chain(m: usize) -> Vec<usize> {
    (8..m).filter(|d| d % 2 == 0 && m % d == 0).collect()
}

/// Pointwise subsampling onto a coarser grid whose resolution divides the
/// fine one; shared grid points keep their exact values.
fn subsample(f: &ScalarField, coarse: &Arc<TorusGrid>) -> Result<ScalarField> {
    let fine = f.grid();
    let axes = 2 * fine.complex_dim();
    let mf = fine.points_per_axis();
    let mc = coarse.points_per_axis();
    if coarse.complex_dim() != fine.complex_dim() || mf % mc != 0 {
        return Err(Error::GridMismatch(
            format!("{:?}", fine.as_ref()),
            format!("{:?}", coarse.as_ref()),
        ));
    }
    let stride = mf / mc;
    let mut values = vec![0.0; coarse.num_points()];
    let mut idx = [0usize; 4];
    for (p, value) in values.iter_mut().enumerate() {
        let mut fine_index = 0usize;
        for &i in idx.iter().take(axes) {
            fine_index = fine_index * mf + i * stride;
        }
        *value = f.values()[fine_index];
        for a in (0..axes).rev() {
            idx[a] += 1;
            if idx[a] < mc {
                break;
            }
            idx[a] = 0;
        }
    }
    ScalarField::from_values(coarse, values)
}

/// Cascadic initial guess: solve the spectrally restricted problem on a
/// chain of coarser grids and interpolate upward. Any failure along the
/// chain simply degrades the guess; the fine solve never depends on it.
fn cascade_initial_guess(
    f_rhs: &ScalarField,
    bg: &KahlerBackground,
    lambda: Lambda,
    cfg: &SolveConfig,
) -> Option<ScalarField> {
    let n = bg.grid().complex_dim();
    let chain = cascade_chain(bg.grid().points_per_axis());
    if chain.is_empty() {
        return None;
    }
    let mut carried: Option<ScalarField> = None;
    for &m in &chain {
        let coarse = match TorusGrid::new_internal(n, m) {
            Ok(g) => g,
            Err(_) => continue,
        };
        let coarse_bg = match bg.perturbation_potential() {
            None => KahlerBackground::flat(&coarse),
            Some(phi0) => match restrict(phi0, &coarse)
                .and_then(|p0| KahlerBackground::perturbed(&coarse, p0))
            {
                Ok(b) => b,
                Err(_) => {
                    carried = None;
                    continue;
                }
            },
        };
        let f_coarse = match subsample(f_rhs, &coarse) {
            Ok(f) => f,
            Err(_) => {
                carried = None;
                continue;
            }
        };
        if std::env::var("CMA_TRACE").is_ok() {
            eprintln!("[cascade] entering level m={m}");
        }
        let lifted = carried.as_ref().and_then(|phi| upsample(phi, &coarse).ok());
        let stages = if lifted.is_some() { 1 } else { cfg.continuation_steps };
        // a guess level only seeds the next one: a loose residual suffices
        // and the damping floor may sit lower than the caller's contract
        let cfg_level = SolveConfig {
            newton_tol: cfg.newton_tol.max(1e-6),
            damping_min_eig: cfg.damping_min_eig.min(1e-3),
            ..cfg.clone()
        };
        carried =
            match continuation_attempt(&f_coarse, &coarse_bg, lambda, &cfg_level, stages, lifted.as_ref())
            {
                Ok((state, _, _)) => Some(state.phi().clone()),
                Err(_) => None,
            };
    }
    carried.and_then(|phi| upsample(&phi, bg.grid()).ok())
}

/// Like [`solve`] but starting from an explicit initial potential (used by
/// refinement studies that upsample a coarse solution). A provided initial
/// state skips the continuation: the full equation is solved directly from
/// it in a single stage.
pub fn solve_from(
    f_rhs: &ScalarField,
    bg: &KahlerBackground,
    lambda: Lambda,
    cfg: &SolveConfig,
    initial: Option<&ScalarField>,
) -> Result<(PotentialState, SolveReport)> {
    cfg.validate()?;
    if !f_rhs.values().iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("right-hand side"));
    }
    let start = Instant::now();
    let cascade_guess = if initial.is_none() {
        cascade_initial_guess(f_rhs, bg, lambda, cfg)
    } else {
        None
    };
    let (stages_count, warm) = match (&initial, &cascade_guess) {
        (Some(phi), _) => (1, Some(*phi)),
        (None, Some(phi)) => (1, Some(phi)),
        (None, None) => (cfg.continuation_steps, None),
    };
    if std::env::var("CMA_TRACE").is_ok() {
        eprintln!(
            "[solve] grid m={} warm={} stages={}",
            bg.grid().points_per_axis(),
            warm.is_some(),
            stages_count
        );
    }
    let first = continuation_attempt(f_rhs, bg, lambda, cfg, stages_count, warm);
    let (state, stages, steps, retried) = match first {
        Ok((state, stages, steps)) => (state, stages, steps, false),
        // a stalled warm-started solve falls back to the cold continuation,
        // a stalled cold continuation retries with twice the stages
        Err(
            Error::ContinuationStalled { .. }
            | Error::PositivityLost { .. }
            | Error::LinearSolveFailed(_),
        ) if warm.is_some() && initial.is_none() => {
            let (state, stages, steps) =
                continuation_attempt(f_rhs, bg, lambda, cfg, cfg.continuation_steps, None)?;
            (state, stages, steps, true)
        }
        Err(Error::ContinuationStalled { .. }) => {
            let (state, stages, steps) = continuation_attempt(
                f_rhs,
                bg,
                lambda,
                cfg,
                cfg.continuation_steps * 2,
                initial,
            )?;
            (state, stages, steps, true)
        }
        Err(e) => return Err(e),
    };

    let f_final = normalize_rhs(f_rhs, bg);
    let res = residual(&state, &f_final, bg, lambda)?;
    let grad_sq = bg.gradient_norm_sq(state.phi());
    let n_plus_lap = state.n_plus_laplacian(bg);
    let n = bg.grid().complex_dim();
    let w3p_exponent = (4 * n) as f64;
    let report = SolveReport {
        stages,
        final_residual: res.max_abs(),
        final_min_eig: state.min_eig(),
        sup_abs_phi: state.phi().max_abs(),
        sup_grad_phi: grad_sq.values().iter().fold(0.0f64, |a, &v| a.max(v)).sqrt(),
        sup_n_plus_laplacian: n_plus_lap.values().iter().fold(0.0f64, |a, &v| a.max(v)),
        w3p_seminorm: w3p_seminorm(state.phi(), w3p_exponent, bg)?,
        w3p_exponent,
        newton_steps: steps,
        retried,
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    Ok((state, report))
}

/// L^p norm of the third-derivative tensor of the potential: the pointwise
/// Frobenius norm of all d_k(phi_{i jbar}) and their conjugates, integrated
/// against dvol_g.
pub fn w3p_seminorm(phi: &ScalarField, p0: f64, bg: &KahlerBackground) -> Result<f64> {
    let grid = phi.grid().clone();
    let n = grid.complex_dim();
    let len = grid.num_points();
    let spec = grid.spectrum(phi.values());
    let mut sum_sq = vec![0.0; len];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let third = grid.inverse_complex(grid.multiplied(&spec, |kk, kd| {
                    TorusGrid::hessian_mult(i, j, kk, kd) * TorusGrid::dz_mult(k, kd)
                }));
                for (s, t) in sum_sq.iter_mut().zip(third.iter()) {
                    *s += t.norm_sqr();
                }
            }
        }
    }
    // antiholomorphic third derivatives pair with the holomorphic ones
    let tensor = ScalarField::from_values(&grid, sum_sq.iter().map(|&s| (2.0 * s).sqrt()).collect())?;
    let density = bg.volume_density();
    crate::geometry::lp_norm(&tensor, p0, Some(&density))
}

/// Spectral truncation onto a coarser grid of the same complex dimension:
/// modes below the coarse Nyquist band are kept, everything else is dropped.
pub fn restrict(f: &ScalarField, coarse: &Arc<TorusGrid>) -> Result<ScalarField> {
    let fine = f.grid();
    if coarse.complex_dim() != fine.complex_dim() {
        return Err(Error::GridMismatch(
            format!("{:?}", fine.as_ref()),
            format!("{:?}", coarse.as_ref()),
        ));
    }
    let mf = fine.points_per_axis();
    let mc = coarse.points_per_axis();
    if mc > mf {
        return Err(Error::InvalidConfig(
            "restriction target must be at most as fine as the source".into(),
        ));
    }
    let spec_f = fine.spectrum(f.values());
    let mut spec_c = vec![Complex64::new(0.0, 0.0); coarse.num_points()];
    let scale = coarse.num_points() as f64 / fine.num_points() as f64;
    coarse.for_each_freq(|p, k, _| {
        let mut keep = true;
        let mut fine_index = 0usize;
        for &ka in k.iter().take(2 * coarse.complex_dim()) {
            if 2.0 * ka.abs() >= mc as f64 {
                keep = false;
                break;
            }
            let fi = if ka >= 0.0 { ka as usize } else { (ka + mf as f64) as usize };
            fine_index = fine_index * mf + fi;
        }
        if keep {
            spec_c[p] = spec_f[fine_index] * scale;
        }
    });
    ScalarField::from_values(coarse, coarse.inverse_real(spec_c))
}

/// Spectral zero-padding interpolation onto a finer grid of the same complex
/// dimension. Coarse Nyquist rows are dropped.
pub fn upsample(f: &ScalarField, fine: &Arc<TorusGrid>) -> Result<ScalarField> {
    let coarse = f.grid();
    if coarse.complex_dim() != fine.complex_dim() {
        return Err(Error::GridMismatch(
            format!("{:?}", coarse.as_ref()),
            format!("{:?}", fine.as_ref()),
        ));
    }
    let mc = coarse.points_per_axis();
    let mf = fine.points_per_axis();
    if mf < mc {
        return Err(Error::InvalidConfig(
            "upsample target must be at least as fine as the source".into(),
        ));
    }
    let axes = 2 * coarse.complex_dim();
    let spec_c = coarse.spectrum(f.values());
    let mut spec_f = vec![Complex64::new(0.0, 0.0); fine.num_points()];
    let scale = 1.0 / coarse.num_points() as f64;
    // iterate coarse spectral entries, map signed frequency into the fine array
    let mut idx = [0usize; 4];
    for p in 0..coarse.num_points() {
        let mut keep = true;
        let mut fine_index = 0usize;
        for a in 0..axes {
            let i = idx[a];
            let k = if i <= mc / 2 { i as i64 } else { i as i64 - mc as i64 };
            if i == mc / 2 {
                keep = false;
                break;
            }
            let fi = if k >= 0 { k as usize } else { (k + mf as i64) as usize };
            fine_index = fine_index * mf + fi;
        }
        if keep {
            spec_f[fine_index] = spec_c[p] * scale * fine.num_points() as f64;
        }
        for a in (0..axes).rev() {
            idx[a] += 1;
            if idx[a] < mc {
                break;
            }
            idx[a] = 0;
        }
    }
    ScalarField::from_values(fine, fine.inverse_real(spec_f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(n: usize, m: usize) -> Arc<TorusGrid> {
        TorusGrid::new(n, m).unwrap()
    }

    #[test]
    fn zero_rhs_needs_no_newton_steps() {
        let g = grid(1, 16);
        let bg = KahlerBackground::flat(&g);
        let (state, report) =
            solve(&ScalarField::zeros(&g), &bg, Lambda::Zero, &SolveConfig::default()).unwrap();
        assert_eq!(report.newton_steps, 0);
        assert!(state.phi().max_abs() < 1e-14);
        assert!(report.final_residual < 1e-14);
    }

    #[test]
    fn linear_solve_single_mode_oracle() {
        // flat state, lambda = 0: Delta_0 cos(2 pi x) = -pi^2 cos(2 pi x)
        let g = grid(1, 32);
        let bg = KahlerBackground::flat(&g);
        let state = PotentialState::new(ScalarField::zeros(&g), &bg).unwrap();
        let rhs = ScalarField::from_fn(&g, |c| (2.0 * PI * c[0]).cos());
        let psi = linear_solve(&state, &rhs, &bg, Lambda::Zero, &SolveConfig::default()).unwrap();
        for p in (0..g.num_points()).step_by(11) {
            let x = g.coords(p)[0];
            let expect = -(2.0 * PI * x).cos() / (PI * PI);
            assert!((psi.values()[p] - expect).abs() < 1e-8);
        }
    }

    #[test]
    fn linear_solve_zero_rhs() {
        let g = grid(1, 16);
        let bg = KahlerBackground::flat(&g);
        let state = PotentialState::new(ScalarField::zeros(&g), &bg).unwrap();
        let psi =
            linear_solve(&state, &ScalarField::zeros(&g), &bg, Lambda::Zero, &SolveConfig::default())
                .unwrap();
        assert!(psi.max_abs() == 0.0);
    }

    #[test]
    fn linear_solve_round_trip() {
        let g = grid(1, 32);
        let bg = KahlerBackground::flat(&g);
        let phi = ScalarField::from_fn(&g, |c| 0.03 * (2.0 * PI * c[0]).cos() + 0.02 * (2.0 * PI * c[1]).sin());
        let state = PotentialState::new(phi, &bg).unwrap();
        let rhs_raw = ScalarField::from_fn(&g, |c| (2.0 * PI * c[1]).cos() + 0.5 * (4.0 * PI * c[0]).sin());
        let cfg = SolveConfig::default();
        let psi = linear_solve(&state, &rhs_raw, &bg, Lambda::Zero, &cfg).unwrap();
        let back = crate::operator::linearized_apply(&state, &psi, &bg, Lambda::Zero).unwrap();
        // the lambda = 0 solve sees the compatibility projection of the rhs
        let det_phi: Vec<f64> = (0..g.num_points())
            .map(|p| {
                let mut buf = [0.0; 4];
                state.metric_phi_at(p, &bg, &mut buf);
                crate::linalg::det(1, &buf[..1])
            })
            .collect();
        let cell = g.cell_volume();
        let mass: f64 = det_phi.iter().zip(rhs_raw.values()).map(|(&d, &r)| d * r).sum::<f64>() * cell;
        let vol: f64 = det_phi.iter().sum::<f64>() * cell;
        let shift = mass / vol;
        let mut worst: f64 = 0.0;
        for p in 0..g.num_points() {
            worst = worst.max((back.values()[p] - (rhs_raw.values()[p] - shift)).abs());
        }
        let scale = rhs_raw.max_abs();
        assert!(worst <= 20.0 * cfg.linear_tol * scale, "round trip error {worst}");
    }

    #[test]
    fn solve_matches_one_dimensional_linear_oracle() {
        let g = grid(1, 64);
        let bg = KahlerBackground::flat(&g);
        let f_raw = ScalarField::from_fn(&g, |c| {
            0.3 * (2.0 * PI * c[0]).cos() + 0.2 * (2.0 * PI * c[1]).sin()
        });
        let (state, report) = solve(&f_raw, &bg, Lambda::Zero, &SolveConfig::default()).unwrap();
        assert!(report.final_residual <= 1e-10);

        let f = normalize_rhs(&f_raw, &bg);
        let target = f.map(|v| v.exp() - 1.0);
        let spec = g.spectrum(target.values());
        let exact_vals = g.inverse_real(g.multiplied(&spec, |k, kd| {
            let m = TorusGrid::hessian_mult(0, 0, k, kd);
            if m.norm() == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                1.0 / m
            }
        }));
        let exact = project_zero_mean(&ScalarField::from_values(&g, exact_vals).unwrap(), &bg);
        let mut worst: f64 = 0.0;
        for p in 0..g.num_points() {
            worst = worst.max((state.phi().values()[p] - exact.values()[p]).abs());
        }
        assert!(worst <= 1e-9, "solution differs from linear oracle by {worst}");
    }

    #[test]
    fn quadratic_contraction_for_small_data() {
        let g = grid(1, 32);
        let bg = KahlerBackground::flat(&g);
        let f_raw = ScalarField::from_fn(&g, |c| 0.01 * (2.0 * PI * c[0]).cos());
        let f = normalize_rhs(&f_raw, &bg);
        let cfg = SolveConfig::default();
        let mut state = PotentialState::new(ScalarField::zeros(&g), &bg).unwrap();
        let mut sups = Vec::new();
        let (_, sup0, _) =
            residual_sup_from_hess(state.phi(), state.hessian(), &f, &bg, 0.0).unwrap();
        sups.push(sup0);
        for _ in 0..3 {
            let (next, diag) = newton_step(&state, &f, &bg, Lambda::Zero, &cfg).unwrap();
            assert!((diag.damping - 1.0).abs() < 1e-15, "full step expected");
            state = next;
            sups.push(diag.residual_after);
        }
        for w in sups.windows(2).skip(1) {
            let ratio = w[1] / w[0];
            assert!(ratio < 0.1, "contraction ratio {ratio} too slow: {sups:?}");
        }
    }

    #[test]
    fn adversarial_amplitude_raises_positivity_loss() {
        // the exact n = 1 solution has 1 + lap phi = e^F with min below the
        // damping floor, so the line search must eventually report it
        let g = grid(1, 32);
        let bg = KahlerBackground::flat(&g);
        let f_raw = ScalarField::from_fn(&g, |c| 3.0 * (2.0 * PI * c[0]).cos());
        let cfg = SolveConfig { continuation_steps: 1, ..SolveConfig::default() };
        match solve(&f_raw, &bg, Lambda::Zero, &cfg) {
            Err(Error::PositivityLost { .. }) => {}
            Err(Error::ContinuationStalled { .. }) => {}
            other => panic!("expected a positivity failure, got {other:?}"),
        }
    }

    #[test]
    fn solver_invariant_under_constant_rhs_shift() {
        let g = grid(1, 32);
        let bg = KahlerBackground::flat(&g);
        let f = ScalarField::from_fn(&g, |c| 0.2 * (2.0 * PI * c[0]).cos());
        let cfg = SolveConfig::default();
        let (a, _) = solve(&f, &bg, Lambda::Zero, &cfg).unwrap();
        let (b, _) = solve(&f.shifted(5.0), &bg, Lambda::Zero, &cfg).unwrap();
        let mut worst: f64 = 0.0;
        for p in 0..g.num_points() {
            worst = worst.max((a.phi().values()[p] - b.phi().values()[p]).abs());
        }
        assert!(worst <= 1e-9, "shift changed the solution by {worst}");
    }

    #[test]
    fn solver_invariant_under_schedule_change() {
        let g = grid(1, 32);
        let bg = KahlerBackground::flat(&g);
        let f = ScalarField::from_fn(&g, |c| {
            0.3 * (2.0 * PI * c[0]).cos() + 0.1 * (4.0 * PI * c[1]).cos()
        });
        let cfg_a = SolveConfig { continuation_steps: 8, ..SolveConfig::default() };
        let cfg_b = SolveConfig { continuation_steps: 5, ..SolveConfig::default() };
        let (a, _) = solve(&f, &bg, Lambda::Zero, &cfg_a).unwrap();
        let (b, _) = solve(&f, &bg, Lambda::Zero, &cfg_b).unwrap();
        let mut worst: f64 = 0.0;
        for p in 0..g.num_points() {
            worst = worst.max((a.phi().values()[p] - b.phi().values()[p]).abs());
        }
        assert!(worst <= 1e-8, "schedules disagree by {worst}");
    }

    #[test]
    fn residual_history_strictly_decreases_within_stages() {
        let g = grid(1, 32);
        let bg = KahlerBackground::flat(&g);
        let f = ScalarField::from_fn(&g, |c| 0.5 * (2.0 * PI * c[0]).cos());
        let (_, report) = solve(&f, &bg, Lambda::Zero, &SolveConfig::default()).unwrap();
        for stage in &report.stages {
            for w in stage.residuals.windows(2) {
                assert!(w[1] < w[0], "non-decreasing residuals {:?}", stage.residuals);
            }
        }
    }

    #[test]
    fn negative_lambda_obeys_maximum_principle() {
        let g = grid(1, 32);
        let bg = KahlerBackground::flat(&g);
        let f_raw = ScalarField::from_fn(&g, |c| 0.4 * (2.0 * PI * c[0]).cos());
        let f = normalize_rhs(&f_raw, &bg);
        let (state, report) = solve(&f, &bg, Lambda::MinusOne, &SolveConfig::default()).unwrap();
        assert!(report.final_residual <= 1e-10);
        let sup_f = f.max_abs();
        assert!(
            state.phi().max_abs() <= sup_f + 1e-9,
            "sup phi {} exceeds sup F {}",
            state.phi().max_abs(),
            sup_f
        );
    }

    #[test]
    fn w3p_examples() {
        let g = grid(1, 64);
        let bg = KahlerBackground::flat(&g);
        assert!(w3p_seminorm(&ScalarField::zeros(&g), 8.0, &bg).unwrap() < 1e-14);
        // phi = a cos(2 pi x): tensor = sqrt(2) pi^3 a |sin(2 pi x)|
        let a = 0.05;
        let phi = ScalarField::from_fn(&g, |c| a * (2.0 * PI * c[0]).cos());
        let p0 = 4.0;
        let got = w3p_seminorm(&phi, p0, &bg).unwrap();
        // independent quadrature of (sqrt(2) pi^3 a)^p |sin|^p on a fine grid
        let fine = 1 << 16;
        let mut acc = 0.0;
        for i in 0..fine {
            acc += (2.0 * PI * i as f64 / fine as f64).sin().abs().powf(p0);
        }
        acc /= fine as f64;
        let expect = 2.0f64.sqrt() * PI.powi(3) * a * acc.powf(1.0 / p0);
        assert!((got - expect).abs() < 1e-8 * expect, "{got} vs {expect}");
        // monotone in amplitude
        let phi2 = ScalarField::from_fn(&g, |c| 2.0 * a * (2.0 * PI * c[0]).cos());
        assert!(w3p_seminorm(&phi2, p0, &bg).unwrap() > got);
    }

    #[test]
    fn upsample_is_exact_on_band_limited_fields() {
        let gc = grid(1, 16);
        let gf = grid(1, 32);
        let f = ScalarField::from_fn(&gc, |c| {
            (2.0 * PI * c[0]).cos() + 0.3 * (4.0 * PI * c[1]).sin()
        });
        let up = upsample(&f, &gf).unwrap();
        for p in (0..gf.num_points()).step_by(7) {
            let c = gf.coords(p);
            let expect = (2.0 * PI * c[0]).cos() + 0.3 * (4.0 * PI * c[1]).sin();
            assert!((up.values()[p] - expect).abs() < 1e-12);
        }
    }
}
