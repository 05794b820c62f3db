//! Dense linear-algebra helpers shared by the chain and diffusion backends.
//!
//! Every solve goes through [`solve`] / [`solve_matrix`]: LU with partial
//! pivoting, a residual check against `1e-12 * ||rhs||`, and one step of
//! iterative refinement when the check fails.

use nalgebra::{DMatrix, DVector, Dyn, LU};

use crate::error::{Error, Result};

const RESIDUAL_TOL: f64 = 1e-12;
/// Hard failure threshold after refinement, scaled by `||A|| ||x|| + ||b||`.
const BACKWARD_TOL: f64 = 1e-8;

pub fn sup_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Induced sup-norm (max absolute row sum).
pub fn op_norm_inf(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows())
        .map(|i| m.row(i).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

pub fn solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let bm = DMatrix::from_column_slice(b.len(), 1, b.as_slice());
    let x = solve_matrix(a, &bm)?;
    Ok(x.column(0).into_owned())
}

pub fn solve_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Factored::new(a.clone())?.solve_matrix(b)
}

/// An LU factorization kept for repeated solves with the same matrix.
#[derive(Debug, Clone)]
pub struct Factored {
    a: DMatrix<f64>,
    lu: LU<f64, Dyn, Dyn>,
    norm: f64,
}

impl Factored {
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "system matrix is {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        let norm = op_norm_inf(&a);
        let lu = a.clone().lu();
        Ok(Self { a, lu, norm })
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        let bm = DMatrix::from_column_slice(b.len(), 1, b.as_slice());
        Ok(self.solve_matrix(&bm)?.column(0).into_owned())
    }

    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let a = &self.a;
        if a.nrows() != b.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "system {}x{} with right-hand side {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols()
            )));
        }
        if a.nrows() == 0 {
            return Ok(DMatrix::zeros(0, b.ncols()));
        }
        let mut x = self.lu.solve(b).ok_or_else(|| {
            Error::SingularSystem(format!(
                "{}x{} LU factorization failed",
                a.nrows(),
                a.ncols()
            ))
        })?;
        let b_norm = max_abs(b);
        let mut residual = b - a * &x;
        if max_abs(&residual) > RESIDUAL_TOL * b_norm {
            if let Some(dx) = self.lu.solve(&residual) {
                x += dx;
                residual = b - a * &x;
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularSystem("non-finite solution".into()));
        }
        let scale = self.norm * max_abs(&x) + b_norm;
        if max_abs(&residual) > BACKWARD_TOL * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::SingularSystem(format!(
                "residual {:.3e} exceeds tolerance after refinement",
                max_abs(&residual)
            )));
        }
        Ok(x)
    }
}

pub fn inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    solve_matrix(a, &DMatrix::identity(a.nrows(), a.nrows()))
}

/// Numerical rank: singular values above `rel_tol * max(1, sigma_max)`.
pub fn rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let cut = rel_tol * smax.max(1.0);
    sv.iter().filter(|s| **s > cut).count()
}

pub fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

pub fn subvector(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

/// Matrix exponential (scaling and squaring with a Pade approximant).
pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    if m.nrows() == 0 {
        return DMatrix::zeros(0, 0);
    }
    m.exp()
}

/// `int_0^t exp(s L) ds` from the upper-right block of `exp(t [[L, I], [0, 0]])`.
pub fn integrated_expm(l: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let k = l.nrows();
    if k == 0 {
        return DMatrix::zeros(0, 0);
    }
    let mut block = DMatrix::zeros(2 * k, 2 * k);
    block.view_mut((0, 0), (k, k)).copy_from(&(l * t));
    block
        .view_mut((0, k), (k, k))
        .copy_from(&(DMatrix::<f64>::identity(k, k) * t));
    let e = expm(&block);
    e.view((0, k), (k, k)).into_owned()
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 || pts.len() != xs.len() {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        None
    } else {
        Some(sxy / sxx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_small_system() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let b = DVector::from_vec(vec![3.0, 5.0]);
        let x = solve(&a, &b).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-14);
        assert!((x[1] - 1.4).abs() < 1e-14);
    }

    #[test]
    fn singular_system_is_reported() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let b = DVector::from_vec(vec![1.0, 1.0]);
        assert!(matches!(solve(&a, &b), Err(Error::SingularSystem(_))));
    }

    #[test]
    fn integrated_exponential_of_scalar() {
        let l = DMatrix::from_element(1, 1, -1.5);
        let t = 0.7;
        let got = integrated_expm(&l, t)[(0, 0)];
        let want = (1.0 - (-1.5 * t).exp()) / 1.5;
        assert!((got - want).abs() < 1e-14);
    }

    #[test]
    fn slope_of_power_law() {
        let xs: Vec<f64> = (1..10).map(|k| k as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 / (x * x)).collect();
        assert!((log_log_slope(&xs, &ys).unwrap() + 2.0).abs() < 1e-12);
    }

    #[test]
    fn rank_of_outer_product() {
        let u = DVector::from_vec(vec![1.0, 0.5, 2.0]);
        let m = &u * u.transpose();
        assert_eq!(rank(&m, 1e-10), 1);
    }
}
