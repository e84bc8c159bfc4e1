//! Multivariate normal rectangle probabilities P(X_i <= b_i for all i) for a
//! correlation matrix R, via the sequentially conditioned (Cholesky)
//! integrand of Genz evaluated with randomized quasi-Monte Carlo.
//!
//! The d-dimensional probability becomes an integral over the unit cube of
//! dimension d-1: after the lower-triangular factorization R = L L', the
//! first coordinate integrates analytically and each later coordinate is a
//! conditional normal probability given quantile-transformed earlier draws.
//! Points come from Richtmyer lattices (fractional parts of k*sqrt(prime))
//! under a tent periodization, with independent random shifts providing the
//! error estimate. The Cholesky factorization clamps tiny negative pivots to
//! zero, so positive semidefinite matrices (for example perfectly correlated
//! components) are handled exactly: a zero pivot turns that coordinate into
//! an indicator.

use nalgebra::DMatrix;
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Standard normal CDF via the complementary error function.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Upper tail 1 - Phi(x), computed without cancellation for large x.
pub fn std_normal_sf(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

/// Standard normal quantile.
pub fn std_normal_quantile(p: f64) -> f64 {
    let dist = Normal::standard();
    dist.inverse_cdf(p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0))
}

/// Result of one rectangle-probability evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MvnEstimate {
    pub value: f64,
    /// Estimated absolute error (3 standard errors across random shifts).
    pub error: f64,
    /// Integrand evaluations consumed.
    pub points: u64,
}

const N_SHIFTS: u64 = 10;
const FIRST_ROUND_POINTS_PER_SHIFT: u64 = 128;
/// sqrt of the first primes, for the lattice generators.
const PRIMES: [f64; 15] = [
    2.0, 3.0, 5.0, 7.0, 11.0, 13.0, 17.0, 19.0, 23.0, 29.0, 31.0, 37.0, 41.0, 43.0, 47.0,
];

/// Lower-triangular Cholesky factor with non-negative pivot clamping, so any
/// symmetric positive semidefinite input factors without error.
fn psd_cholesky(matrix: &DMatrix<f64>) -> DMatrix<f64> {
    let d = matrix.nrows();
    let mut l = DMatrix::<f64>::zeros(d, d);
    for j in 0..d {
        let mut pivot = matrix[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        l[(j, j)] = pivot.max(0.0).sqrt();
        for i in (j + 1)..d {
            let mut s = matrix[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = if l[(j, j)] > 0.0 { s / l[(j, j)] } else { 0.0 };
        }
    }
    l
}

/// Genz integrand for one quasi-random point of the (d-1)-cube. `y` is
/// scratch space of length d.
fn integrand(upper: &[f64], l: &DMatrix<f64>, point: &[f64], y: &mut [f64]) -> f64 {
    let d = upper.len();
    let mut conditional = std_normal_cdf(upper[0]);
    let mut product = conditional;
    for i in 1..d {
        if product == 0.0 {
            return 0.0;
        }
        y[i - 1] = std_normal_quantile(point[i - 1] * conditional);
        let mut shifted = upper[i];
        for k in 0..i {
            shifted -= l[(i, k)] * y[k];
        }
        let pivot = l[(i, i)];
        conditional = if pivot > 0.0 {
            std_normal_cdf(shifted / pivot)
        } else if shifted >= 0.0 {
            1.0
        } else {
            0.0
        };
        product *= conditional;
    }
    product
}

/// Estimates P(X_1 <= b_1, ..., X_d <= b_d) for X ~ N(0, R).
///
/// `correlation` must be square, symmetric within 1e-8, with unit diagonal.
/// Sampling continues in doubling rounds until the error estimate falls
/// below `abs_tol` or `max_points` integrand evaluations are spent. The
/// evaluation is deterministic for a fixed `seed`.
pub fn mvn_rectangle_cdf(
    upper: &[f64],
    correlation: &DMatrix<f64>,
    abs_tol: f64,
    max_points: u64,
    seed: u64,
) -> Result<MvnEstimate> {
    use rand::{Rng, SeedableRng};

    let d = upper.len();
    if d == 0 {
        return Err(Error::InvalidParams("mvn dimension must be at least 1".into()));
    }
    if correlation.nrows() != d || correlation.ncols() != d {
        return Err(Error::InvalidParams(format!(
            "correlation matrix is {}x{}, expected {d}x{d}",
            correlation.nrows(),
            correlation.ncols()
        )));
    }
    if d > PRIMES.len() + 1 {
        return Err(Error::InvalidParams(format!(
            "mvn dimension {d} exceeds the supported maximum {}",
            PRIMES.len() + 1
        )));
    }
    for i in 0..d {
        if (correlation[(i, i)] - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidParams("correlation diagonal must be 1".into()));
        }
        for j in 0..i {
            if (correlation[(i, j)] - correlation[(j, i)]).abs() > 1e-8 {
                return Err(Error::InvalidParams("correlation matrix must be symmetric".into()));
            }
        }
    }

    if d == 1 {
        return Ok(MvnEstimate { value: std_normal_cdf(upper[0]), error: 0.0, points: 0 });
    }

    // Work on the symmetrized matrix so tiny asymmetries cannot leak in.
    let symmetrized = DMatrix::from_fn(d, d, |i, j| 0.5 * (correlation[(i, j)] + correlation[(j, i)]));
    let l = psd_cholesky(&symmetrized);

    let dim = d - 1;
    let generators: Vec<f64> = PRIMES[..dim].iter().map(|p| p.sqrt().fract()).collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let shifts: Vec<Vec<f64>> = (0..N_SHIFTS)
        .map(|_| (0..dim).map(|_| rng.random::<f64>()).collect())
        .collect();

    let mut shift_sums = vec![0.0f64; N_SHIFTS as usize];
    let mut per_shift: u64 = 0;
    let mut round_size = FIRST_ROUND_POINTS_PER_SHIFT;
    let mut total_points: u64 = 0;
    let mut point = vec![0.0f64; dim];
    let mut scratch = vec![0.0f64; d];
    loop {
        for (s, shift) in shifts.iter().enumerate() {
            for k in per_shift..per_shift + round_size {
                let idx = (k + 1) as f64;
                for (j, g) in generators.iter().enumerate() {
                    // Tent periodization of the shifted lattice point.
                    let x = (idx * g + shift[j]).fract();
                    point[j] = 1.0 - (2.0 * x - 1.0).abs();
                }
                shift_sums[s] += integrand(upper, &l, &point, &mut scratch);
            }
        }
        per_shift += round_size;
        total_points += round_size * N_SHIFTS;

        let means: Vec<f64> = shift_sums.iter().map(|s| s / per_shift as f64).collect();
        let value = means.iter().sum::<f64>() / N_SHIFTS as f64;
        let var = means.iter().map(|m| (m - value) * (m - value)).sum::<f64>()
            / ((N_SHIFTS - 1) as f64 * N_SHIFTS as f64);
        let error = 3.0 * var.sqrt();
        if error <= abs_tol || total_points + round_size * N_SHIFTS > max_points {
            return Ok(MvnEstimate { value: value.clamp(0.0, 1.0), error, points: total_points });
        }
        round_size *= 2;
    }
}
