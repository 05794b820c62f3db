//! Time-changed semigroup `P_t^mu`, its restriction to the fine support, the
//! trace generator, the 1-integrated semigroup and finite-dimensional
//! distributions.
//!
//! Semigroup-level operators act through the trace generator `L_F` on `F`:
//! `P_t u` is the harmonic (`P_F`) extension of `exp(t L_F) u|_F`. The trace
//! generator is validated against the resolvent formula before it is used.

mod chain;
mod diffusion;

pub use chain::ChainTimeChange;
pub use diffusion::DiffusionTimeChange;

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::FunctionOnX;
use crate::linalg;
use crate::measures::{FineSupport, SmoothMeasure};

/// Rates at which the trace generator is checked against the resolvent formula.
pub const VALIDATION_RATES: [f64; 4] = [0.5, 1.0, 2.0, 10.0];
pub const VALIDATION_TOL: f64 = 1e-9;

/// Generator of the process traced on `F`, in the clock of the additive functional.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceGenerator {
    pub support: FineSupport,
    pub matrix: DMatrix<f64>,
    /// `a_F = mu / m` on chain states, or atom weights on the interval.
    pub density: DVector<f64>,
    /// Worst `|(alpha - L_F)^{-1} - R_alpha|_F|` over the validation rates.
    pub validation_residual: f64,
}

impl TraceGenerator {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// How a function on `F` is extended to the whole space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtensionKind {
    /// Zero off `F` (chain) or piecewise-linear through the atoms, pinned to zero
    /// at both endpoints (interval).
    Zero,
    /// A second valid extension, differing from `Zero` off `F`.
    Alternate,
}

/// Read-mostly cache of matrices keyed by a real parameter. Recomputation gives
/// identical values, so a lost race only costs time.
#[derive(Debug, Default)]
pub struct MatrixCache(RwLock<HashMap<u64, Arc<DMatrix<f64>>>>);

impl MatrixCache {
    pub fn get_or_compute(
        &self,
        key: f64,
        f: impl FnOnce() -> Result<DMatrix<f64>>,
    ) -> Result<Arc<DMatrix<f64>>> {
        let k = key.to_bits();
        if let Some(m) = self.0.read().expect("cache lock poisoned").get(&k) {
            return Ok(Arc::clone(m));
        }
        let m = Arc::new(f()?);
        self.0
            .write()
            .expect("cache lock poisoned")
            .entry(k)
            .or_insert_with(|| Arc::clone(&m));
        Ok(m)
    }
}

/// `P_F`-extension of `exp(t L) h`, and friends, on one measure.
pub trait TimeChangedOperators: Send + Sync {
    fn measure(&self) -> &SmoothMeasure;
    fn support(&self) -> &FineSupport;
    /// `G^mu u`.
    fn potential(&self, u: &FunctionOnX) -> Result<FunctionOnX>;
    /// `R_alpha u = (I + alpha G^mu)^{-1} G^mu u`.
    fn resolvent(&self, alpha: f64, u: &FunctionOnX) -> Result<FunctionOnX>;
    /// `P_F^alpha u`.
    fn hitting(&self, alpha: f64, u: &FunctionOnX) -> Result<FunctionOnX>;
    fn trace(&self) -> Result<&TraceGenerator>;
    /// Values on `F` (chain states in `F`, or the atoms).
    fn restrict(&self, u: &FunctionOnX) -> Result<DVector<f64>>;
    fn extend(&self, h: &DVector<f64>, kind: ExtensionKind) -> Result<FunctionOnX>;
    /// Cache for `exp(t L_F)`.
    fn exp_cache(&self) -> &MatrixCache;

    /// `P_F` applied to any extension of `h`.
    fn harmonic_extension(&self, h: &DVector<f64>) -> Result<FunctionOnX> {
        self.hitting(0.0, &self.extend(h, ExtensionKind::Zero)?)
    }

    fn exp_trace(&self, t: f64) -> Result<Arc<DMatrix<f64>>> {
        let l = &self.trace()?.matrix;
        self.exp_cache()
            .get_or_compute(t, || Ok(linalg::expm(&(l * t))))
    }

    /// `T_t h = exp(t L_F) h` on `F`.
    fn restricted_semigroup(&self, t: f64, h: &DVector<f64>) -> Result<DVector<f64>> {
        check_time(t)?;
        check_len(self.trace()?, h)?;
        if t == 0.0 {
            return Ok(h.clone());
        }
        Ok(self.exp_trace(t)?.as_ref() * h)
    }

    /// `V_alpha h = (alpha I - L_F)^{-1} h` on `F`.
    fn restricted_resolvent(&self, alpha: f64, h: &DVector<f64>) -> Result<DVector<f64>> {
        let tr = self.trace()?;
        check_len(tr, h)?;
        let k = tr.dim();
        linalg::solve(&(DMatrix::identity(k, k) * alpha - &tr.matrix), h)
    }

    /// `P_t u`; at `t = 0` this is the strong limit `P_F u`, not `u`.
    fn semigroup(&self, t: f64, u: &FunctionOnX) -> Result<FunctionOnX> {
        check_time(t)?;
        if t == 0.0 {
            return self.hitting(0.0, u);
        }
        let h = self.restrict(u)?;
        if h.iter().all(|v| *v == 0.0) {
            return Ok(u.zeros_like().with_class(crate::kernel::FunctionClass::C0));
        }
        self.harmonic_extension(&self.restricted_semigroup(t, &h)?)
    }

    /// `S_t u = int_0^t P_s u ds`.
    fn integrated(&self, t: f64, u: &FunctionOnX) -> Result<FunctionOnX> {
        check_time(t)?;
        let h = self.restrict(u)?;
        if t == 0.0 || h.iter().all(|v| *v == 0.0) {
            return Ok(u.zeros_like().with_class(crate::kernel::FunctionClass::C0));
        }
        let l = &self.trace()?.matrix;
        self.harmonic_extension(&(linalg::integrated_expm(l, t) * h))
    }
}

fn check_time(t: f64) -> Result<()> {
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::BadParameters(format!(
            "time {t} must be finite and >= 0"
        )))
    }
}

fn check_len(tr: &TraceGenerator, h: &DVector<f64>) -> Result<()> {
    if h.len() != tr.dim() {
        return Err(Error::DimensionMismatch(format!(
            "vector of length {} on a support of size {}",
            h.len(),
            tr.dim()
        )));
    }
    Ok(())
}

/// Shared validation: `(alpha - L)^{-1}` against the `F`-block of `R_alpha`,
/// probed on the unit vectors of `F`.
fn validate_trace(ops: &dyn TimeChangedOperators, l: &DMatrix<f64>) -> Result<f64> {
    let k = l.nrows();
    let mut worst = 0.0_f64;
    for alpha in VALIDATION_RATES {
        let v = linalg::inverse(&(DMatrix::identity(k, k) * alpha - l))?;
        for j in 0..k {
            let mut e = DVector::zeros(k);
            e[j] = 1.0;
            let u = ops.extend(&e, ExtensionKind::Zero)?;
            let r = ops.restrict(&ops.resolvent(alpha, &u)?)?;
            worst = worst.max(linalg::sup_norm(&(r - v.column(j))));
        }
    }
    if worst > VALIDATION_TOL {
        return Err(Error::ValidationFailed(format!(
            "trace generator disagrees with the resolvent formula by {worst:.3e}"
        )));
    }
    Ok(worst)
}

/// `||R_alpha u - alpha int_0^T e^{-alpha t} S_t u dt||`, `T` chosen so that
/// `e^{-alpha T} = 1e-12`, by adaptive Simpson on the sup norm.
pub fn laplace_residual(
    ops: &dyn TimeChangedOperators,
    alpha: f64,
    u: &FunctionOnX,
) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::BadParameters(
            "Laplace residual needs alpha > 0".into(),
        ));
    }
    let t_max = 12.0 * std::f64::consts::LN_10 / alpha;
    let h0 = ops.restrict(u)?;
    let l = ops.trace()?.matrix.clone();
    // On F the integral is finite-dimensional; extend once at the end.
    let f = |t: f64| -> DVector<f64> {
        linalg::integrated_expm(&l, t) * &h0 * (alpha * (-alpha * t).exp())
    };
    let integral = adaptive_simpson(&f, 0.0, t_max, 1e-12, 50)?;
    let lhs = ops.resolvent(alpha, u)?;
    let rhs = ops.harmonic_extension(&integral)?;
    Ok(lhs.sub(&rhs).sup_norm())
}

pub const LAPLACE_TOL: f64 = 1e-6;

/// Vector-valued adaptive Simpson rule with sup-norm error control.
pub fn adaptive_simpson(
    f: &dyn Fn(f64) -> DVector<f64>,
    a: f64,
    b: f64,
    tol: f64,
    max_depth: usize,
) -> Result<DVector<f64>> {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (&fa + &fm * 4.0 + &fb) * ((b - a) / 6.0);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, max_depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &dyn Fn(f64) -> DVector<f64>,
    a: f64,
    b: f64,
    fa: DVector<f64>,
    fm: DVector<f64>,
    fb: DVector<f64>,
    whole: DVector<f64>,
    tol: f64,
    depth: usize,
) -> Result<DVector<f64>> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (&fa + &flm * 4.0 + &fm) * ((m - a) / 6.0);
    let right = (&fm + &frm * 4.0 + &fb) * ((b - m) / 6.0);
    let sum = &left + &right;
    let err = linalg::sup_norm(&(&sum - &whole));
    if err <= 15.0 * tol {
        return Ok(&sum + (&sum - &whole) / 15.0);
    }
    if depth == 0 {
        return Err(Error::QuadratureFailure(format!(
            "adaptive Simpson did not converge on [{a}, {b}]"
        )));
    }
    let l = simpson_step(f, a, m, fa, flm, fm.clone(), left, 0.5 * tol, depth - 1)?;
    let r = simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?;
    Ok(l + r)
}

pub const MEMBERSHIP_TOL: f64 = 1e-9;

/// Membership `w in L_rel u` for the nonnegative relation characterised by
/// `(L_rel + alpha)^{-1} = R_alpha`: true iff `R_alpha(w + alpha u) = u`.
pub fn relation_membership(
    ops: &dyn TimeChangedOperators,
    alpha: f64,
    u: &FunctionOnX,
    w: &FunctionOnX,
) -> Result<bool> {
    if !(alpha > 0.0) {
        return Err(Error::BadParameters(
            "membership test needs alpha > 0".into(),
        ));
    }
    let r = ops.resolvent(alpha, &w.add(&u.scale(alpha)))?;
    Ok(r.sub(u).sup_norm() <= MEMBERSHIP_TOL)
}

pub const FD_STEP: f64 = 1e-4;
pub const FD_TOL: f64 = 1e-6;

/// A solution value with its finite-difference diagnostic.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub value: FunctionOnX,
    /// Sup-norm gap between the numerical time derivative and the exact one.
    pub residual: f64,
    /// Whether the Richardson-extrapolated difference was needed.
    pub richardson: bool,
}

fn derivative_residual(
    eval: &dyn Fn(f64) -> Result<FunctionOnX>,
    t: f64,
    exact: &FunctionOnX,
) -> Result<(f64, bool)> {
    let diff = |h: f64| -> Result<FunctionOnX> {
        if t >= h {
            Ok(eval(t + h)?.sub(&eval(t - h)?).scale(0.5 / h))
        } else {
            // One-sided second-order difference near the origin.
            let f0 = eval(t)?;
            let f1 = eval(t + h)?;
            let f2 = eval(t + 2.0 * h)?;
            Ok(f1.scale(4.0).sub(&f0.scale(3.0)).sub(&f2).scale(0.5 / h))
        }
    };
    let d1 = diff(FD_STEP)?;
    let r1 = d1.sub(exact).sup_norm();
    let scale = exact.sup_norm().max(1.0);
    if r1 <= FD_TOL * scale {
        return Ok((r1, false));
    }
    let d2 = diff(0.5 * FD_STEP)?;
    let rich = d2.scale(4.0 / 3.0).sub(&d1.scale(1.0 / 3.0));
    Ok((rich.sub(exact).sup_norm(), true))
}

/// `u(t) = P_t v`, solving `u' = L u` with `u(0+) = P_F v`.
pub fn heat_solution(ops: &dyn TimeChangedOperators, v: &FunctionOnX, t: f64) -> Result<Solution> {
    let value = ops.semigroup(t, v)?;
    let h = ops.restrict(&value)?;
    let tr = ops.trace()?;
    let exact = ops.harmonic_extension(&(&tr.matrix * h))?;
    let eval = |s: f64| ops.semigroup(s, v);
    let (residual, richardson) = if t == 0.0 {
        // P_s v is continuous from the right at 0 with limit P_F v.
        derivative_residual(
            &|s| {
                if s == 0.0 {
                    ops.hitting(0.0, v)
                } else {
                    eval(s)
                }
            },
            t,
            &exact,
        )?
    } else {
        derivative_residual(&eval, t, &exact)?
    };
    Ok(Solution {
        value,
        residual,
        richardson,
    })
}

/// `u(t) = S_t v`, the solution of the evolution equation with `u(0) = 0`; the
/// diagnostic compares `d/dt S_t v` with `P_t v`.
pub fn evolution_solution(
    ops: &dyn TimeChangedOperators,
    v: &FunctionOnX,
    t: f64,
) -> Result<Solution> {
    let value = ops.integrated(t, v)?;
    let exact = ops.semigroup(t, v)?;
    let (residual, richardson) = derivative_residual(&|s| ops.integrated(s, v), t, &exact)?;
    Ok(Solution {
        value,
        residual,
        richardson,
    })
}

/// `int P_F(u_0 P_{t_1}(u_1 P_{t_2 - t_1}(... u_k))) d mu_init`.
///
/// The outer `P_F` accounts for the time-changed process starting at its first
/// entrance into `F`; it is the identity on `F`.
pub fn exact_fdd(
    ops: &dyn TimeChangedOperators,
    mu_init: &SmoothMeasure,
    times: &[f64],
    fns: &[FunctionOnX],
) -> Result<f64> {
    if times.is_empty() || fns.len() != times.len() + 1 {
        return Err(Error::BadParameters(format!(
            "{} times need {} functions, got {}",
            times.len(),
            times.len() + 1,
            fns.len()
        )));
    }
    if times.windows(2).any(|w| w[1] < w[0]) || times[0] < 0.0 {
        return Err(Error::BadParameters(
            "times must be nonnegative and nondecreasing".into(),
        ));
    }
    let k = times.len();
    let mut g = fns[k].clone();
    for i in (1..=k).rev() {
        let dt = times[i - 1] - if i >= 2 { times[i - 2] } else { 0.0 };
        g = fns[i - 1].mul(&ops.semigroup(dt, &g)?);
    }
    let g = ops.hitting(0.0, &g)?;
    mu_init.integrate(&g)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrongContinuityReport {
    pub times: Vec<f64>,
    /// `sup_u ||P_t P_F u - P_F u||` over the probe basis.
    pub on_range: Vec<f64>,
    /// `sup_u ||P_t u - u||`, which need not vanish off `P_F(C_0)`.
    pub on_all: Vec<f64>,
    /// Log-log slope of `on_range` against `t`.
    pub slope: Option<f64>,
}

/// Probe strong continuity at `t -> 0` on `P_F(C_0)` and on all of `C_0`.
pub fn strong_continuity_probe(
    ops: &dyn TimeChangedOperators,
    probes: &[FunctionOnX],
    times: &[f64],
) -> Result<StrongContinuityReport> {
    let mut on_range = Vec::with_capacity(times.len());
    let mut on_all = Vec::with_capacity(times.len());
    let pf: Vec<FunctionOnX> = probes
        .iter()
        .map(|u| ops.hitting(0.0, u))
        .collect::<Result<_>>()?;
    for &t in times {
        let mut r = 0.0_f64;
        let mut a = 0.0_f64;
        for (u, p) in probes.iter().zip(&pf) {
            r = r.max(ops.semigroup(t, p)?.sub(p).sup_norm());
            a = a.max(ops.semigroup(t, u)?.sub(u).sup_norm());
        }
        on_range.push(r);
        on_all.push(a);
    }
    let slope = if times.len() >= 4 {
        linalg::log_log_slope(times, &on_range)
    } else {
        None
    };
    Ok(StrongContinuityReport {
        times: times.to_vec(),
        on_range,
        on_all,
        slope,
    })
}

#[cfg(test)]
mod tests;
