//! Randomized verification suites for the pointwise inequalities. Samples
//! are partitioned into fixed blocks with per-block seeds, so results are
//! identical no matter how the blocks are scheduled across workers.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::estimates::pointwise::{
    block_rng, eigenvalue_amgm_margin, gradient_absorption_margin, sample_inequality,
    sos_identity, young_constant,
};

use rand::Rng;

const BLOCK: usize = 4096;

/// Worst-case results of one randomized suite.
#[derive(Debug, Clone, Serialize)]
pub struct InequalitySuiteSummary {
    pub name: String,
    pub samples: usize,
    pub min_margin: f64,
    /// Largest relative discrepancy between independently evaluated forms
    /// (only populated by the sum-of-squares suite).
    pub max_relative_error: f64,
}

/// Combined report of all four suites.
#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub seed: u64,
    pub suites: Vec<InequalitySuiteSummary>,
}

fn blocks_of(total: usize) -> Vec<(u64, usize)> {
    let mut out = Vec::new();
    let mut remaining = total;
    let mut index = 0u64;
    while remaining > 0 {
        let size = remaining.min(BLOCK);
        out.push((index, size));
        remaining -= size;
        index += 1;
    }
    out
}

/// Sum-of-squares identity over random samples for dimensions 2..=5.
pub fn run_sos_suite(samples_per_dim: usize, seed: u64) -> InequalitySuiteSummary {
    let mut min_margin = f64::INFINITY;
    let mut max_rel = 0.0f64;
    for dim in 2..=5usize {
        let (margin, rel) = blocks_of(samples_per_dim)
            .par_iter()
            .map(|&(block, size)| {
                let mut rng = block_rng(seed, 100 + dim as u64, block);
                let mut worst_margin = f64::INFINITY;
                let mut worst_rel = 0.0f64;
                for _ in 0..size {
                    let s = sample_inequality(&mut rng, dim);
                    let e = sos_identity(&s);
                    worst_margin = worst_margin.min(e.factored);
                    worst_rel = worst_rel.max(e.relative_error());
                }
                (worst_margin, worst_rel)
            })
            .reduce(
                || (f64::INFINITY, 0.0),
                |a, b| (a.0.min(b.0), a.1.max(b.1)),
            );
        min_margin = min_margin.min(margin);
        max_rel = max_rel.max(rel);
    }
    InequalitySuiteSummary {
        name: "sum_of_squares".into(),
        samples: samples_per_dim * 4,
        min_margin,
        max_relative_error: max_rel,
    }
}

/// Inverse-eigenvalue AM-GM bound over random eigenvalue tuples, n in 2..=5.
pub fn run_amgm_suite(samples: usize, seed: u64) -> InequalitySuiteSummary {
    let min_margin = blocks_of(samples)
        .par_iter()
        .map(|&(block, size)| {
            let mut rng = block_rng(seed, 200, block);
            let mut worst = f64::INFINITY;
            for _ in 0..size {
                let dim = rng.gen_range(2..=5usize);
                let s = sample_inequality(&mut rng, dim);
                let m = eigenvalue_amgm_margin(&s.eigenvalues).expect("valid sample");
                worst = worst.min(m);
            }
            worst
        })
        .reduce(|| f64::INFINITY, f64::min);
    InequalitySuiteSummary {
        name: "eigenvalue_amgm".into(),
        samples,
        min_margin,
        max_relative_error: 0.0,
    }
}

/// Scalar absorption inequality over random constrained triples, n in 2..=4.
pub fn run_absorption_suite(samples: usize, seed: u64) -> InequalitySuiteSummary {
    let min_margin = blocks_of(samples)
        .par_iter()
        .map(|&(block, size)| {
            let mut rng = block_rng(seed, 300, block);
            let mut worst = f64::INFINITY;
            for _ in 0..size {
                let n = rng.gen_range(2..=4usize);
                let s: f64 = rng.gen_range(1e-3..1e3f64);
                let y = (rng.gen_range(0.0..1.0f64) * s).max(1e-9);
                let x: f64 = rng.gen_range(0.0..1e3f64);
                let m = gradient_absorption_margin(x, y, s, n).expect("valid triple");
                worst = worst.min(m);
            }
            worst
        })
        .reduce(|| f64::INFINITY, f64::min);
    InequalitySuiteSummary {
        name: "gradient_absorption".into(),
        samples,
        min_margin,
        max_relative_error: 0.0,
    }
}

/// Young-constant cross-check: bracketed maximization against the closed form.
pub fn run_young_suite(seed: u64) -> Result<InequalitySuiteSummary> {
    let mut max_rel = 0.0f64;
    let mut count = 0usize;
    let mut rng = block_rng(seed, 400, 0);
    let mut cases: Vec<(f64, usize)> = Vec::new();
    for n in 2..=4usize {
        for eps in [0.1, 1.0, 10.0] {
            cases.push((eps, n));
        }
    }
    for _ in 0..50 {
        let n = rng.gen_range(2..=4usize);
        let eps: f64 = rng.gen_range(0.05..20.0f64);
        cases.push((eps, n));
    }
    for (eps, n) in cases {
        let numeric = young_constant(eps, n)?;
        let nf = n as f64;
        let closed = ((nf - 1.0) / (nf * eps)).powf(nf - 1.0) / nf;
        max_rel = max_rel.max((numeric - closed).abs() / closed.max(1e-300));
        count += 1;
    }
    Ok(InequalitySuiteSummary {
        name: "young_constant".into(),
        samples: count,
        min_margin: 0.0,
        max_relative_error: max_rel,
    })
}

/// Runs all four suites with the shared seed.
pub fn run_inequality_suites(samples: usize, seed: u64) -> Result<SuiteReport> {
    let suites = vec![
        run_sos_suite(samples, seed),
        run_amgm_suite(samples, seed),
        run_absorption_suite(samples, seed),
        run_young_suite(seed)?,
    ];
    Ok(SuiteReport { seed, suites })
}
