//! A 2-D spiral pushed through `ReLU(T x)` for random `T` (n x 2), then
//! mapped back to the plane.
//!
//! Two back-projections are measured. `pinv_mse` applies the pseudo-inverse
//! of the whole of `T`; it shrinks everything by about half for large `n`
//! because ReLU zeroes half the coordinates, so it mostly measures that
//! scale. `mse` applies the pseudo-inverse of only the rows the ReLU left
//! active at each point, which is exact wherever the point is recoverable
//! and degrades only where information was actually destroyed.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::Rng;

use super::relu::gaussian_matrix;

pub const SPIRAL_POINTS: usize = 1000;
pub const SPIRAL_TURNS: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpiralResult {
    pub n: usize,
    pub seed: u64,
    pub mse: f64,
    pub pinv_mse: f64,
}

/// `count` points whose radius grows linearly from 0 to 1 over
/// `SPIRAL_TURNS` turns.
pub fn spiral_points(count: usize) -> Vec<Vector2<f64>> {
    (0..count)
        .map(|i| {
            let u = if count > 1 {
                i as f64 / (count - 1) as f64
            } else {
                0.0
            };
            let theta = SPIRAL_TURNS * std::f64::consts::TAU * u;
            Vector2::new(u * theta.cos(), u * theta.sin())
        })
        .collect()
}

/// Mean squared 2-D error of both back-projections for embedding `t`.
pub fn spiral_reconstruction(t: &DMatrix<f64>, points: &[Vector2<f64>]) -> Result<(f64, f64)> {
    if t.ncols() != 2 {
        return Err(Error::DimensionMismatch(format!(
            "embedding must have 2 columns, has {}",
            t.ncols()
        )));
    }
    let pinv = pseudo_inverse(t);
    let (mut masked, mut plain) = (0.0, 0.0);
    for p in points {
        let y = (t * DVector::from_column_slice(p.as_slice())).map(|v| v.max(0.0));
        let back = &pinv * &y;
        plain += (Vector2::new(back[0], back[1]) - p).norm_squared();

        let mut gram = Matrix2::zeros();
        let mut rhs = Vector2::zeros();
        for (i, &yi) in y.iter().enumerate() {
            if yi > 0.0 {
                let row = Vector2::new(t[(i, 0)], t[(i, 1)]);
                gram += row * row.transpose();
                rhs += row * yi;
            }
        }
        let est = gram_pinv(&gram) * rhs;
        masked += (est - p).norm_squared();
    }
    let n = points.len().max(1) as f64;
    Ok((masked / n, plain / n))
}

/// Runs the experiment for each embedding width, drawing `T` for width `n`
/// from `Rng::derive(seed, n)`.
pub fn spiral_experiment(dims: &[usize], seed: u64) -> Result<Vec<SpiralResult>> {
    let points = spiral_points(SPIRAL_POINTS);
    dims.iter()
        .map(|&n| {
            if n < 2 {
                return Err(Error::param(
                    "dims",
                    format!("embedding width {n} is below 2"),
                ));
            }
            let t = gaussian_matrix(n, 2, &mut Rng::derive(seed, n as u64));
            let (mse, pinv_mse) = spiral_reconstruction(&t, &points)?;
            Ok(SpiralResult {
                n,
                seed,
                mse,
                pinv_mse,
            })
        })
        .collect()
}

fn pseudo_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    let eps = super::relu::RANK_TOLERANCE * svd.singular_values.max();
    svd.pseudo_inverse(eps)
        .unwrap_or_else(|_| DMatrix::zeros(m.ncols(), m.nrows()))
}

/// `pinv(A^T A) A^T y = pinv(A) y`, so the 2x2 Gram matrix suffices.
fn gram_pinv(g: &Matrix2<f64>) -> Matrix2<f64> {
    let svd = g.svd(true, true);
    let top = svd.singular_values.max();
    if top == 0.0 {
        return Matrix2::zeros();
    }
    svd.pseudo_inverse(super::relu::RANK_TOLERANCE * top)
        .unwrap_or_else(|_| Matrix2::zeros())
}
