//! Power iteration for the top eigenvalue of positive semidefinite operators.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{LabError, Result};
use crate::geometry::C64;

pub const POWER_TOLERANCE: f64 = 1e-8;
pub const POWER_MAX_ITERATIONS: usize = 10_000;
pub const POWER_SEED: u64 = 0x0B5E_55ED;

/// Operator norm estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormEstimate {
    pub value: f64,
    pub iterations: usize,
    /// Last relative Rayleigh-quotient increment.
    pub residual: f64,
}

pub fn random_vector(len: usize, seed: u64) -> Vec<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| C64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))).collect()
}

/// Top eigenvalue of a PSD operator `a`, self-adjoint for the inner product
/// `inner`; the returned value is its square root, i.e. `||M||` when `a = M* M`.
pub fn power_iteration(
    len: usize,
    mut a: impl FnMut(&[C64]) -> Vec<C64>,
    inner: impl Fn(&[C64], &[C64]) -> f64,
) -> Result<NormEstimate> {
    let mut v = random_vector(len, POWER_SEED);
    let n0 = inner(&v, &v).sqrt();
    v.iter_mut().for_each(|x| *x /= n0);
    let mut lambda = 0.0;
    let mut residual = f64::INFINITY;
    for it in 1..=POWER_MAX_ITERATIONS {
        let av = a(&v);
        let next = inner(&av, &v);
        let norm = inner(&av, &av).sqrt();
        if !(norm > 0.0) {
            return Ok(NormEstimate { value: 0.0, iterations: it, residual: 0.0 });
        }
        residual = (next - lambda).abs() / next.abs().max(f64::MIN_POSITIVE);
        lambda = next;
        v = av.into_iter().map(|x| x / norm).collect();
        if residual < POWER_TOLERANCE {
            return Ok(NormEstimate { value: lambda.max(0.0).sqrt(), iterations: it, residual });
        }
    }
    Err(LabError::NonConvergence { iterations: POWER_MAX_ITERATIONS, residual })
}

/// Euclidean inner product `Re <x, y>`.
pub fn euclidean(x: &[C64], y: &[C64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a * b.conj()).re).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_top_value() {
        let diag = [4.0, 1.0, 0.25];
        let est = power_iteration(3, |v| v.iter().zip(diag).map(|(x, d)| x * d).collect(), euclidean).unwrap();
        assert!((est.value - 2.0).abs() < 1e-6);
        assert!(est.residual < POWER_TOLERANCE);
    }
}
