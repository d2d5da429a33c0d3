//! Where ReLU is the identity, and when `y = ReLU(Bx)` determines `x`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Relative singular-value cutoff used for every rank decision.
pub const RANK_TOLERANCE: f64 = 1e-8;

/// True when ReLU leaves every strictly positive point unchanged, bit for
/// bit. Points with a coordinate `<= 0` are not interior to a ReLU image
/// and are skipped.
pub fn relu_interior_identity_check(points: &[Vec<f64>]) -> bool {
    points
        .iter()
        .filter(|p| p.iter().all(|&v| v > 0.0))
        .all(|p| p.iter().all(|&v| v.max(0.0).to_bits() == v.to_bits()))
}

/// Points `ReLU(Bx)` with every coordinate strictly positive, for Gaussian
/// square `B` and Gaussian `x`, found by rejection.
pub fn sample_interior_points(dim: usize, count: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let b = gaussian_matrix(dim, dim, rng);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let x = DVector::from_fn(dim, |_, _| rng.gaussian());
        let y = &b * x;
        if y.iter().all(|&v| v > 0.0) {
            out.push(y.iter().map(|&v| v.max(0.0)).collect());
        }
    }
    out
}

/// I.i.d. standard normal entries, filled row by row.
pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut Rng) -> DMatrix<f64> {
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.gaussian()).collect();
    DMatrix::from_row_slice(rows, cols, &data)
}

pub fn relu_vec(v: &DVector<f64>) -> DVector<f64> {
    v.map(|x| x.max(0.0))
}

/// Numerical rank: singular values above `RANK_TOLERANCE * sigma_max`.
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.singular_values();
    let top = sv.max();
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOLERANCE * top).count()
}

fn active_rows(b: &DMatrix<f64>, y0: &DVector<f64>) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if y0.len() != b.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "y0 has {} entries, B has {} rows",
            y0.len(),
            b.nrows()
        )));
    }
    let active: Vec<usize> = (0..y0.len()).filter(|&i| y0[i] != 0.0).collect();
    Ok((b.select_rows(&active), y0.select_rows(&active)))
}

/// `ReLU(Bx) = y0` has a unique solution exactly when `y0` has at least `n`
/// non-zero entries and the matching rows of `B` have rank `n`.
pub fn invertibility_condition(b: &DMatrix<f64>, y0: &DVector<f64>) -> Result<bool> {
    let n = b.ncols();
    let (bt, _) = active_rows(b, y0)?;
    Ok(bt.nrows() >= n && numerical_rank(&bt) == n)
}

/// Least-squares solution of `B_T x = y_T` over the active rows `T`.
pub fn recover_input(b: &DMatrix<f64>, y0: &DVector<f64>) -> Result<DVector<f64>> {
    if !invertibility_condition(b, y0)? {
        return Err(Error::NotInvertible(format!(
            "{} active rows for {} unknowns, or those rows are rank deficient",
            y0.iter().filter(|&&v| v != 0.0).count(),
            b.ncols()
        )));
    }
    let (bt, yt) = active_rows(b, y0)?;
    bt.svd(true, true)
        .solve(&yt, 0.0)
        .map_err(|e| Error::NotInvertible(e.to_string()))
}
