//! Moser-iteration norm ladders: the L^p exponent schedules, the measured
//! ladder of norms under the normalized deformed volume weight, and the
//! fitted per-step recurrence constant.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{integrate, lp_norm, ScalarField};

/// Which barrier the ladder tracks; the two modes use different Sobolev
/// pairings and therefore different exponent schedules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LadderMode {
    /// Laplacian barrier: q0 from 1/q0 + 2/p0 = 1, b = n/((n-1) q0).
    Laplacian,
    /// Gradient barrier: q0 from 1/p0 + 1/q0 = 1, b = 2n/((2n-1) q0).
    Gradient,
}

/// The measured ladder: exponents p_k = b^k, norms in the normalized
/// deformed volume, fitted recurrence constant and limit ratio to the sup.
#[derive(Debug, Clone, Serialize)]
pub struct MoserLadder {
    pub mode: LadderMode,
    pub q0: f64,
    pub b: f64,
    pub exponents: Vec<f64>,
    pub norms: Vec<f64>,
    pub fitted_constant: f64,
    pub sup: f64,
    pub limit_ratio: f64,
}

/// Exponent arithmetic of the ladder. Fails with `SubcriticalExponent`
/// whenever p0 <= 2n (the ladder ratio b degenerates to 1 there), and with
/// `InvalidDimension` for the Laplacian mode at n = 1.
pub fn ladder_exponents(mode: LadderMode, p0: f64, n: usize) -> Result<(f64, f64)> {
    if mode == LadderMode::Laplacian && n < 2 {
        return Err(Error::InvalidDimension(n));
    }
    if !(p0 > (2 * n) as f64) {
        return Err(Error::SubcriticalExponent { p0, n });
    }
    let nf = n as f64;
    match mode {
        LadderMode::Laplacian => {
            let q0 = p0 / (p0 - 2.0);
            let b = nf / ((nf - 1.0) * q0);
            Ok((q0, b))
        }
        LadderMode::Gradient => {
            let q0 = p0 / (p0 - 1.0);
            let b = 2.0 * nf / ((2.0 * nf - 1.0) * q0);
            Ok((q0, b))
        }
    }
}

/// Tracks the ladder ||u||_{L^{b^k}} for k = 0..K with p_K >= 64, under the
/// weight normalized to unit mass, and fits the smallest constant for which
/// the per-step recurrence holds:
/// Laplacian: ||u||_{p b} <= (p C)^{2 q0 / p} ||u||_p at p = b^k;
/// Gradient: ||u||_{b^{k+1}} <= (p C)^{1/(2p)} ||u||_{b^k} at p = b^k / q0.
pub fn moser_track(
    u: &ScalarField,
    weight: &ScalarField,
    mode: LadderMode,
    p0: f64,
) -> Result<MoserLadder> {
    let grid = u.grid();
    crate::geometry::check_same_grid(grid, weight.grid())?;
    let n = grid.complex_dim();
    let (q0, b) = ladder_exponents(mode, p0, n)?;

    let mass = integrate(weight, None);
    if !(mass > 0.0) {
        return Err(Error::InvalidConfig("ladder weight must have positive mass".into()));
    }
    let normalized = weight.scaled(1.0 / mass);

    let mut exponents = Vec::new();
    let mut p = 1.0;
    loop {
        exponents.push(p);
        if p >= 64.0 {
            break;
        }
        p *= b;
    }
    let norms = exponents
        .iter()
        .map(|&pk| lp_norm(u, pk, Some(&normalized)))
        .collect::<Result<Vec<f64>>>()?;

    let mut fitted: f64 = 0.0;
    for k in 0..norms.len() - 1 {
        if norms[k] <= 0.0 {
            continue;
        }
        let ratio = (norms[k + 1] / norms[k]).max(1.0);
        let c_step = match mode {
            LadderMode::Laplacian => {
                let pk = exponents[k];
                ratio.powf(pk / (2.0 * q0)) / pk
            }
            LadderMode::Gradient => {
                let pk = exponents[k] / q0;
                ratio.powf(2.0 * pk) / pk
            }
        };
        fitted = fitted.max(c_step);
    }

    let sup = u.max_abs();
    let limit_ratio = if sup > 0.0 { norms[norms.len() - 1] / sup } else { 1.0 };
    Ok(MoserLadder {
        mode,
        q0,
        b,
        exponents,
        norms,
        fitted_constant: fitted,
        sup,
        limit_ratio,
    })
}
