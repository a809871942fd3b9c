//! Pointwise algebraic inequalities underpinning the iteration arguments:
//! the sum-of-squares identity of the third-order terms, the
//! inverse-eigenvalue AM-GM bound, the scalar absorption inequality, and the
//! Young-inequality constant. Each check evaluates both sides independently
//! and reports a signed margin.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// One algebraic sample in a diagonal frame: eigenvalues lambda_i of the
/// potential Hessian (1 + lambda_i > 0), gradient components, the symmetric
/// second-derivative matrix phi_{ki}, and the barrier slope A'.
#[derive(Debug, Clone)]
pub struct InequalitySample {
    pub dim: usize,
    pub eigenvalues: Vec<f64>,
    pub gradient: Vec<Complex64>,
    /// Row-major dim x dim matrix phi_{ki}.
    pub second: Vec<Complex64>,
    pub a_prime: f64,
}

/// Both evaluations of the sum-of-squares identity: the three-term expansion
/// and the factored form sum_{k,i} |A' phi_i phi_k - phi_{ki}|^2 / (1 + lambda_i).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SosEvaluation {
    pub expanded: f64,
    pub factored: f64,
}

impl SosEvaluation {
    pub fn relative_error(&self) -> f64 {
        let scale = self.expanded.abs().max(self.factored.abs()).max(1e-300);
        (self.expanded - self.factored).abs() / scale
    }
}

/// Evaluates the identity
/// (A')^2 g_phi(grad, grad) |grad|^2 + sum |phi_{ki}|^2/(1+lambda_i)
///   - A' sum (phi_i phi_k phi_bar_{ki} + c.c.)/(1+lambda_i)
///   = sum_{k,i} |A' phi_i phi_k - phi_{ki}|^2 / (1 + lambda_i) >= 0.
pub fn sos_identity(sample: &InequalitySample) -> SosEvaluation {
    let n = sample.dim;
    let ap = sample.a_prime;
    let mut square_term = 0.0;
    let mut hessian_term = 0.0;
    let mut cross_term = 0.0;
    let mut factored = 0.0;
    for i in 0..n {
        let weight = 1.0 / (1.0 + sample.eigenvalues[i]);
        let gi = sample.gradient[i];
        for k in 0..n {
            let gk = sample.gradient[k];
            let ski = sample.second[k * n + i];
            square_term += ap * ap * weight * gi.norm_sqr() * gk.norm_sqr();
            hessian_term += weight * ski.norm_sqr();
            cross_term -= ap * weight * 2.0 * (gi * gk * ski.conj()).re;
            factored += weight * (ap * gi * gk - ski).norm_sqr();
        }
    }
    SosEvaluation { expanded: square_term + hessian_term + cross_term, factored }
}

/// Margin of sum_i 1/(1 + lambda_i) >= ((n + sum lambda_i) / prod(1 + lambda_i))^{1/(n-1)}.
/// Needs n >= 2 and 1 + lambda_i > 0.
pub fn eigenvalue_amgm_margin(eigenvalues: &[f64]) -> Result<f64> {
    let n = eigenvalues.len();
    if n < 2 {
        return Err(Error::InvalidDimension(n));
    }
    let mut lhs = 0.0;
    let mut sum = 0.0;
    let mut prod = 1.0;
    for &l in eigenvalues {
        let mu = 1.0 + l;
        if !(mu > 0.0) {
            return Err(Error::NotPositive { min_eig: mu });
        }
        lhs += 1.0 / mu;
        sum += mu;
        prod *= mu;
    }
    let rhs = (sum / prod).powf(1.0 / (n as f64 - 1.0));
    Ok(lhs - rhs)
}

/// Margin of the absorption inequality x/y + s^{1/(n-1)} >= n (n-1)^{(1-n)/n} x^{1/n}
/// under the structural constraint 0 < y <= s.
pub fn gradient_absorption_margin(x: f64, y: f64, s: f64, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidDimension(n));
    }
    if !(x >= 0.0) || !(y > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "absorption inequality needs x >= 0 and y > 0, got x = {x}, y = {y}"
        )));
    }
    if y > s {
        return Err(Error::ConstraintViolated { y, s });
    }
    let nf = n as f64;
    let lhs = x / y + s.powf(1.0 / (nf - 1.0));
    let rhs = nf * (nf - 1.0).powf((1.0 - nf) / nf) * x.powf(1.0 / nf);
    Ok(lhs - rhs)
}

/// max_{s >= 0} (s - eps s^{n/(n-1)}) by bracketed golden-section search; the
/// Young-inequality constant C(eps, n).
pub fn young_constant(eps: f64, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidDimension(n));
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidExponent { got: eps, constraint: "Young constant needs eps > 0" });
    }
    let gamma = n as f64 / (n as f64 - 1.0);
    let f = |s: f64| s - eps * s.powf(gamma);
    // expand a bracket past the concave maximum
    let mut hi = 1.0;
    while f(2.0 * hi) > f(hi) {
        hi *= 2.0;
        if hi > 1e300 {
            break;
        }
    }
    let mut a = 0.0;
    let mut b = 2.0 * hi;
    let inv_phi = 0.5 * (5.0f64.sqrt() - 1.0);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
        if (b - a).abs() <= 1e-14 * b.abs().max(1.0) {
            break;
        }
    }
    Ok(f(0.5 * (a + b)))
}

/// Draws a sample from the documented distributions: 1 + lambda log-uniform
/// on (0.01, 1001), complex standard Gaussian gradient and second-derivative
/// matrix (symmetrized), A' uniform on [1, 5].
pub fn sample_inequality(rng: &mut impl Rng, dim: usize) -> InequalitySample {
    let eigenvalues = (0..dim)
        .map(|_| {
            let lo: f64 = 0.01f64.ln();
            let hi: f64 = 1001.0f64.ln();
            rng.gen_range(lo..hi).exp() - 1.0
        })
        .collect();
    let gradient = (0..dim).map(|_| complex_normal(rng)).collect();
    let mut second = vec![Complex64::new(0.0, 0.0); dim * dim];
    for k in 0..dim {
        for i in k..dim {
            let v = complex_normal(rng);
            second[k * dim + i] = v;
            second[i * dim + k] = v;
        }
    }
    let a_prime = rng.gen_range(1.0..5.0);
    InequalitySample { dim, eigenvalues, gradient, second, a_prime }
}

fn complex_normal(rng: &mut impl Rng) -> Complex64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    let r = (-2.0 * u1.ln()).sqrt();
    let theta = 2.0 * std::f64::consts::PI * u2;
    Complex64::new(r * theta.cos(), r * theta.sin()) / std::f64::consts::SQRT_2
}

/// Deterministic per-block RNG used by the sample partitions.
pub(crate) fn block_rng(seed: u64, suite: u64, block: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(
        seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
            ^ suite.wrapping_mul(0xbf58_476d_1ce4_e5b9)
            ^ block.wrapping_mul(0x94d0_49bb_1331_11eb),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng as _;

    #[test]
    fn sos_trivial_cases() {
        // A' = 0, second = 0: both sides vanish
        let s = InequalitySample {
            dim: 2,
            eigenvalues: vec![0.5, 1.0],
            gradient: vec![Complex64::new(1.0, 2.0), Complex64::new(-0.5, 0.25)],
            second: vec![Complex64::new(0.0, 0.0); 4],
            a_prime: 0.0,
        };
        let e = sos_identity(&s);
        assert!(e.expanded.abs() < 1e-15 && e.factored.abs() < 1e-15);

        // perfect square: phi_{ki} = A' phi_k phi_i makes the factored form vanish
        let grad = [Complex64::new(0.3, -0.7), Complex64::new(1.1, 0.2)];
        let ap = 2.5;
        let mut second = vec![Complex64::new(0.0, 0.0); 4];
        for k in 0..2 {
            for i in 0..2 {
                second[k * 2 + i] = ap * grad[k] * grad[i];
            }
        }
        let s = InequalitySample {
            dim: 2,
            eigenvalues: vec![0.1, 3.0],
            gradient: grad.to_vec(),
            second,
            a_prime: ap,
        };
        let e = sos_identity(&s);
        assert!(e.factored.abs() < 1e-12);
        assert!(e.relative_error() < 1e-10 || e.expanded.abs() < 1e-12);
    }

    #[test]
    fn sos_random_samples_agree_and_are_nonnegative() {
        for dim in 2..=5 {
            let mut rng = block_rng(7, dim as u64, 0);
            for _ in 0..2000 {
                let s = sample_inequality(&mut rng, dim);
                let e = sos_identity(&s);
                assert!(e.relative_error() <= 1e-10, "identity broke: {e:?}");
                assert!(e.factored >= -1e-12);
            }
        }
    }

    #[test]
    fn amgm_margins() {
        // lambda = 0 tuple: margin n - n^(1/(n-1)); n = 2 gives exactly 0
        let m = eigenvalue_amgm_margin(&[0.0, 0.0]).unwrap();
        assert!(m.abs() < 1e-14);
        // n = 2, lambda = (1, 0): equality 3/2 = 3/2
        let m = eigenvalue_amgm_margin(&[1.0, 0.0]).unwrap();
        assert!(m.abs() < 1e-14);
        assert!(matches!(
            eigenvalue_amgm_margin(&[1.0]),
            Err(Error::InvalidDimension(1))
        ));
        let mut rng = block_rng(11, 3, 0);
        for _ in 0..5000 {
            let n = rng.gen_range(2..=5usize);
            let s = sample_inequality(&mut rng, n);
            let m = eigenvalue_amgm_margin(&s.eigenvalues).unwrap();
            assert!(m >= -1e-12, "margin {m} for {:?}", s.eigenvalues);
        }
    }

    #[test]
    fn absorption_margins() {
        // x = 0: margin is s^{1/(n-1)} > 0
        let m = gradient_absorption_margin(0.0, 1.0, 2.0, 3).unwrap();
        assert!((m - 2.0f64.sqrt()).abs() < 1e-14);
        // equality at n = 2: x = s^2, y = s
        let s = 1.7;
        let m = gradient_absorption_margin(s * s, s, s, 2).unwrap();
        assert!(m.abs() < 1e-10, "equality case margin {m}");
        assert!(matches!(
            gradient_absorption_margin(1.0, 2.0, 1.5, 2),
            Err(Error::ConstraintViolated { .. })
        ));
        let mut rng = block_rng(13, 4, 0);
        for _ in 0..5000 {
            let n = rng.gen_range(2..=4usize);
            let s: f64 = rng.gen_range(0.01..100.0f64);
            let y: f64 = rng.gen_range(0.0..1.0f64) * s;
            let y = y.max(1e-6);
            let x: f64 = rng.gen_range(0.0..100.0f64);
            let m = gradient_absorption_margin(x, y, s, n).unwrap();
            assert!(m >= -1e-12, "margin {m} at x={x} y={y} s={s} n={n}");
        }
    }

    #[test]
    fn young_constant_examples() {
        // closed form ((n-1)/(n eps))^(n-1) / n
        let c = young_constant(1.0, 2).unwrap();
        assert!((c - 0.25).abs() < 1e-7, "got {c}");
        let c = young_constant(0.5, 2).unwrap();
        assert!((c - 0.5).abs() < 1e-7);
        // C decreases as eps grows
        let mut last = f64::INFINITY;
        for eps in [0.1, 1.0, 10.0, 100.0] {
            let c = young_constant(eps, 3).unwrap();
            assert!(c < last);
            last = c;
        }
    }

    proptest! {
        #[test]
        fn sos_identity_holds_for_arbitrary_inputs(
            ap in 0.0..10.0f64,
            lam in proptest::collection::vec(-0.99..50.0f64, 2..5),
            parts in proptest::collection::vec(-3.0..3.0f64, 4 * 5 + 2 * 5),
        ) {
            let dim = lam.len();
            let gradient: Vec<Complex64> = (0..dim)
                .map(|i| Complex64::new(parts[2 * i], parts[2 * i + 1]))
                .collect();
            let mut second = vec![Complex64::new(0.0, 0.0); dim * dim];
            for k in 0..dim {
                for i in 0..dim {
                    let base = 2 * dim + 2 * (k * dim + i);
                    second[k * dim + i] = Complex64::new(parts[base % parts.len()], parts[(base + 1) % parts.len()]);
                }
            }
            let s = InequalitySample { dim, eigenvalues: lam, gradient, second, a_prime: ap };
            let e = sos_identity(&s);
            prop_assert!(e.relative_error() <= 1e-9 || e.expanded.abs() < 1e-9);
        }

        #[test]
        fn young_matches_closed_form(eps in 0.05..20.0f64, n in 2usize..5) {
            let c = young_constant(eps, n).unwrap();
            let nf = n as f64;
            let closed = ((nf - 1.0) / (nf * eps)).powf(nf - 1.0) / nf;
            prop_assert!((c - closed).abs() <= 1e-6 * closed.max(1e-12));
        }
    }
}
