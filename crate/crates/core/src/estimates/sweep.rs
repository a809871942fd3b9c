//! Estimate sweeps: one solved instance per right-hand-side spec, with the
//! data columns of the a priori estimates (the W^{1,p0} input size against
//! the solution bounds it controls).

use rayon::prelude::*;
use serde::Serialize;

use crate::continuation::{solve, w3p_seminorm, SolveConfig};
use crate::estimates::moser::{moser_track, LadderMode};
use crate::estimates::{
    gradient_barrier, laplacian_barrier, GradientBarrierConfig, LaplacianBarrierConfig,
};
use crate::operator::{normalize_rhs, volume_form, KahlerBackground, Lambda};
use crate::rhs::{w1p_norm, RhsSpec};

/// One row of the sweep table. Solution columns are absent when the solve
/// failed; `status` is "ok" or the error text.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub label: String,
    pub w1p_norm: Option<f64>,
    pub sup_lap_f: Option<f64>,
    pub sup_phi: Option<f64>,
    pub sup_grad_phi: Option<f64>,
    pub sup_n_plus_lap: Option<f64>,
    pub w3p: Option<f64>,
    /// Laplacian-barrier ladder limit ratio; absent at n = 1 where that
    /// ladder is undefined.
    pub ladder_ratio_delta: Option<f64>,
    pub ladder_ratio_grad: Option<f64>,
    pub status: String,
}

fn run_row(spec: &RhsSpec, bg: &KahlerBackground, cfg: &SolveConfig, lambda: Lambda) -> SweepRow {
    let grid = bg.grid();
    let mut row = SweepRow {
        label: spec.label(),
        w1p_norm: None,
        sup_lap_f: None,
        sup_phi: None,
        sup_grad_phi: None,
        sup_n_plus_lap: None,
        w3p: None,
        ladder_ratio_delta: None,
        ladder_ratio_grad: None,
        status: "ok".into(),
    };
    let attempt = (|| -> crate::error::Result<()> {
        let f = spec.build(grid, bg)?;
        row.w1p_norm = Some(w1p_norm(&f, spec.p0, bg)?);
        row.sup_lap_f = Some(bg.laplacian(&f).max_abs());
        let (state, report) = solve(&f, bg, lambda, cfg)?;
        row.sup_phi = Some(report.sup_abs_phi);
        row.sup_grad_phi = Some(report.sup_grad_phi);
        row.sup_n_plus_lap = Some(report.sup_n_plus_laplacian);
        row.w3p = Some(w3p_seminorm(state.phi(), spec.p0, bg)?);
        let f_n = normalize_rhs(&f, bg);
        let weight = volume_form(&state, &f_n, bg)?;
        if grid.complex_dim() >= 2 {
            let u = laplacian_barrier(&state, bg, &LaplacianBarrierConfig::for_background(bg));
            let ladder = moser_track(&u, &weight, LadderMode::Laplacian, spec.p0)?;
            row.ladder_ratio_delta = Some(ladder.limit_ratio);
        }
        let ug = gradient_barrier(&state, bg, &GradientBarrierConfig::for_state(&state, bg));
        let ladder = moser_track(&ug, &weight, LadderMode::Gradient, spec.p0)?;
        row.ladder_ratio_grad = Some(ladder.limit_ratio);
        Ok(())
    })();
    if let Err(e) = attempt {
        row.status = e.to_string();
        row.sup_phi = None;
        row.sup_grad_phi = None;
        row.sup_n_plus_lap = None;
        row.w3p = None;
        row.ladder_ratio_delta = None;
        row.ladder_ratio_grad = None;
    }
    row
}

/// Solves every spec of the family and tabulates the estimate columns, rows
/// sorted by the W^{1,p0} input norm. Rows run independently in parallel;
/// failures mark their row and never abort the sweep.
pub fn sweep_estimates(
    family: &[RhsSpec],
    bg: &KahlerBackground,
    cfg: &SolveConfig,
    lambda: Lambda,
) -> Vec<SweepRow> {
    let mut rows: Vec<(usize, SweepRow)> = family
        .par_iter()
        .enumerate()
        .map(|(i, spec)| (i, run_row(spec, bg, cfg, lambda)))
        .collect();
    rows.sort_by(|a, b| {
        let ka = a.1.w1p_norm.unwrap_or(f64::INFINITY);
        let kb = b.1.w1p_norm.unwrap_or(f64::INFINITY);
        ka.partial_cmp(&kb).unwrap().then(a.0.cmp(&b.0))
    });
    rows.into_iter().map(|(_, r)| r).collect()
}
