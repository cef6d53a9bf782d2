use crate::error::{LabError, Result};

pub(crate) const PIVOT_TOLERANCE: f64 = 1e-10;

/// Solves `a x = rhs` for a dense row-major `n x n` matrix by Gaussian
/// elimination with partial pivoting.
pub(crate) fn solve_dense(mut a: Vec<f64>, mut rhs: Vec<f64>) -> Result<Vec<f64>> {
    let n = rhs.len();
    assert_eq!(a.len(), n * n, "matrix shape does not match right-hand side");
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))
            .expect("nonempty pivot range");
        let pivot = a[pivot_row * n + col];
        if pivot.abs() < PIVOT_TOLERANCE {
            return Err(LabError::Singular(PIVOT_TOLERANCE));
        }
        if pivot_row != col {
            for c in 0..n {
                a.swap(col * n + c, pivot_row * n + c);
            }
            rhs.swap(col, pivot_row);
        }
        for row in col + 1..n {
            let factor = a[row * n + col] / pivot;
            if factor == 0.0 {
                continue;
            }
            a[row * n + col] = 0.0;
            for c in col + 1..n {
                a[row * n + c] -= factor * a[col * n + c];
            }
            rhs[row] -= factor * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|c| a[row * n + c] * x[c]).sum();
        x[row] = (rhs[row] - tail) / a[row * n + row];
    }
    Ok(x)
}
