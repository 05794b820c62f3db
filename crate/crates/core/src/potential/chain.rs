//! Matrix forms of the potential-theoretic operators on a finite chain.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernel::ChainModel;
use crate::linalg;

pub fn check_masses(model: &ChainModel, mu: &DVector<f64>) -> Result<()> {
    if mu.len() != model.len() {
        return Err(Error::DimensionMismatch(format!(
            "measure on {} states, chain has {}",
            mu.len(),
            model.len()
        )));
    }
    Ok(())
}

/// `a = mu / m`.
pub fn density(model: &ChainModel, mu: &DVector<f64>) -> DVector<f64> {
    mu.component_div(model.ref_measure())
}

/// `G_alpha^mu = (alpha I - Q)^{-1} diag(a)`; entry `(x, y)` is `G_alpha(x, y) mu_y`.
pub fn potential_matrix(model: &ChainModel, mu: &DVector<f64>, alpha: f64) -> Result<DMatrix<f64>> {
    check_masses(model, mu)?;
    let r = model.resolvent(alpha)?;
    let a = density(model, mu);
    Ok(DMatrix::from_fn(model.len(), model.len(), |x, y| {
        r.operator[(x, y)] * a[y]
    }))
}

/// `(I + alpha G^mu)^{-1} G^mu`.
pub fn resolvent_matrix(potential: &DMatrix<f64>, alpha: f64) -> Result<DMatrix<f64>> {
    if alpha == 0.0 {
        return Ok(potential.clone());
    }
    let n = potential.nrows();
    let a = DMatrix::identity(n, n) + potential * alpha;
    linalg::solve_matrix(&a, potential)
}

/// Split of the states into `F` and its complement.
pub fn partition(mask: &[bool]) -> (Vec<usize>, Vec<usize>) {
    let f = (0..mask.len()).filter(|i| mask[*i]).collect();
    let c = (0..mask.len()).filter(|i| !mask[*i]).collect();
    (f, c)
}

/// `P_F^alpha`: identity rows on `F`; on the complement `(alpha I - Q_cc) h = Q_cF u_F`.
pub fn hitting_matrix(model: &ChainModel, mask: &[bool], alpha: f64) -> Result<DMatrix<f64>> {
    if mask.len() != model.len() {
        return Err(Error::DimensionMismatch("support mask length".into()));
    }
    let n = model.len();
    let (f, c) = partition(mask);
    let mut p = DMatrix::zeros(n, n);
    for &i in &f {
        p[(i, i)] = 1.0;
    }
    if c.is_empty() || f.is_empty() {
        return Ok(p);
    }
    let q = model.generator();
    let a = DMatrix::identity(c.len(), c.len()) * alpha - linalg::submatrix(q, &c, &c);
    let h = linalg::solve_matrix(&a, &linalg::submatrix(q, &c, &f))?;
    for (ci, &i) in c.iter().enumerate() {
        for (fj, &j) in f.iter().enumerate() {
            p[(i, j)] = h[(ci, fj)].max(0.0);
        }
    }
    Ok(p)
}

/// Schur-complement trace generator `diag(a_F)^{-1} (Q_FF - Q_Fc Q_cc^{-1} Q_cF)`.
pub fn schur_trace(model: &ChainModel, mu: &DVector<f64>, mask: &[bool]) -> Result<DMatrix<f64>> {
    let (f, c) = partition(mask);
    let q = model.generator();
    let q_ff = linalg::submatrix(q, &f, &f);
    let reduced = if c.is_empty() {
        q_ff
    } else {
        let q_fc = linalg::submatrix(q, &f, &c);
        let q_cf = linalg::submatrix(q, &c, &f);
        let q_cc = linalg::submatrix(q, &c, &c);
        q_ff - q_fc * linalg::solve_matrix(&q_cc, &q_cf)?
    };
    let a = density(model, mu);
    Ok(DMatrix::from_fn(f.len(), f.len(), |i, j| {
        reduced[(i, j)] / a[f[i]]
    }))
}
