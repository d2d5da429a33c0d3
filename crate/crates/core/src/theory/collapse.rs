//! How much of a random ReLU embedding survives: for `x` in the unit cube
//! and Gaussian `B` (m x n), the map stays locally invertible at `x` when
//! `Bx` has at least `n` positive coordinates. Because the sign of each
//! coordinate is a fair coin under `B -> DB` symmetry, that happens with
//! probability `sum_{k=0}^{m-n} C(m, k) / 2^m`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollapseEstimate {
    pub n: usize,
    pub m: usize,
    pub trials: u64,
    pub seed: u64,
    pub preserved: u64,
    pub preserved_fraction: f64,
    pub expected: f64,
    /// `sqrt(p (1 - p) / trials)` at the expected `p`.
    pub std_error: f64,
}

/// `N_{m,n} / 2^m`, summed in log space so large `m` neither overflows nor
/// underflows.
pub fn expected_preserved_fraction(n: usize, m: usize) -> Result<f64> {
    check_dims(n, m)?;
    let mut log_term = -(m as f64) * std::f64::consts::LN_2;
    let mut total = 0.0;
    for k in 0..=(m - n) {
        total += log_term.exp();
        log_term += ((m - k) as f64).ln() - ((k + 1) as f64).ln();
    }
    Ok(total.min(1.0))
}

/// Count of positive coordinates of `Bx` for one random draw.
pub fn positive_count(x: &[f64], m: usize, rng: &mut Rng) -> usize {
    (0..m)
        .filter(|_| x.iter().map(|&xi| rng.gaussian() * xi).sum::<f64>() > 0.0)
        .count()
}

/// Trial `i` draws from its own stream `Rng::derive(seed, i)`: first `x`
/// (uniform, n values), then `B` row by row.
pub fn collapse_fraction_mc(
    n: usize,
    m: usize,
    trials: u64,
    seed: u64,
) -> Result<CollapseEstimate> {
    check_dims(n, m)?;
    if trials == 0 {
        return Err(Error::param("trials", "need at least one trial"));
    }
    let preserved = (0..trials)
        .into_par_iter()
        .filter(|&i| {
            let mut rng = Rng::derive(seed, i);
            let x: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
            positive_count(&x, m, &mut rng) >= n
        })
        .count() as u64;
    let expected = expected_preserved_fraction(n, m)?;
    Ok(CollapseEstimate {
        n,
        m,
        trials,
        seed,
        preserved,
        preserved_fraction: preserved as f64 / trials as f64,
        expected,
        std_error: (expected * (1.0 - expected) / trials as f64).sqrt(),
    })
}

fn check_dims(n: usize, m: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::param("n", "input dimension must be at least 1"));
    }
    if m < n {
        return Err(Error::param(
            "m",
            format!("embedding dimension {m} is below input dimension {n}"),
        ));
    }
    Ok(())
}
