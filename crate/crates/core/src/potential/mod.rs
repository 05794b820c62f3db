//! Potential operators `G_alpha^mu`, the time-changed resolvent
//! `R_alpha = (I + alpha G^mu)^{-1} G^mu`, hitting operators `P_F^alpha`, and the
//! structural checks built on them.

pub mod chain;
pub mod diffusion;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::{ChainModel, FunctionClass, FunctionOnX};
use crate::linalg;
use crate::measures::{FineSupport, SmoothMeasure};
use crate::model::Model;

/// Relative singular-value cut for numerical ranks.
pub const RANK_TOL: f64 = 1e-10;

/// `sup |f - g|` over grid values and the union of knots.
pub fn sup_distance(f: &FunctionOnX, g: &FunctionOnX) -> f64 {
    f.sub(g).sup_norm()
}

fn mismatch() -> Error {
    Error::BackendMismatch("measure and model use different backends".into())
}

/// `G_alpha^mu u(x) = int G_alpha(x, y) u(y) mu(dy)`.
pub fn potential_apply(
    model: &Model,
    mu: &SmoothMeasure,
    alpha: f64,
    u: &FunctionOnX,
) -> Result<FunctionOnX> {
    model.check_function(u)?;
    if !(alpha >= 0.0) {
        return Err(Error::BadParameters(format!("rate {alpha} must be >= 0")));
    }
    match (model, mu) {
        (Model::Chain(c), SmoothMeasure::Chain(m)) => {
            let g = chain::potential_matrix(c, m, alpha)?;
            Ok(FunctionOnX::on_states(g * u.values()))
        }
        (Model::Diffusion(d), SmoothMeasure::Diffusion { .. }) => {
            Ok(diffusion::potential(d, mu, alpha, u))
        }
        _ => Err(mismatch()),
    }
}

/// `R_alpha u`, exactly zero when `u` vanishes on the fine support.
pub fn timechanged_resolvent(
    model: &Model,
    mu: &SmoothMeasure,
    alpha: f64,
    u: &FunctionOnX,
) -> Result<FunctionOnX> {
    model.operators(mu)?.resolvent(alpha, u)
}

/// `P_F^alpha u`.
pub fn hitting_apply(
    model: &Model,
    support: &FineSupport,
    u: &FunctionOnX,
    alpha: f64,
) -> Result<FunctionOnX> {
    model.check_function(u)?;
    if !(alpha >= 0.0) {
        return Err(Error::BadParameters(format!("rate {alpha} must be >= 0")));
    }
    match (model, support) {
        (Model::Chain(c), FineSupport::States(mask)) => {
            let p = chain::hitting_matrix(c, mask, alpha)?;
            Ok(FunctionOnX::on_states(p * u.values()))
        }
        (Model::Diffusion(d), FineSupport::Closed(iv)) => Ok(diffusion::hitting(d, iv, alpha, u)),
        _ => Err(mismatch()),
    }
}

/// `phi^A = P_F^1 1`.
pub fn phi_a(model: &Model, mu: &SmoothMeasure) -> Result<FunctionOnX> {
    let f = model.fine_support(mu)?;
    hitting_apply(model, &f, &model.constant(1.0), 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolventEquationReport {
    pub alpha: f64,
    pub beta: f64,
    pub residual: f64,
    /// `alpha ||R_alpha||`, which must not exceed one.
    pub alpha_norm: f64,
    pub contraction_ok: bool,
}

/// `||R_alpha - R_beta - (beta - alpha) R_alpha R_beta||`. Induced sup-norm on
/// the chain; on the interval, the worst relative residual over the hat probes.
pub fn resolvent_equation_residual(
    model: &Model,
    mu: &SmoothMeasure,
    alpha: f64,
    beta: f64,
) -> Result<ResolventEquationReport> {
    match (model, mu) {
        (Model::Chain(c), SmoothMeasure::Chain(m)) => {
            let g = chain::potential_matrix(c, m, 0.0)?;
            let ra = chain::resolvent_matrix(&g, alpha)?;
            let rb = chain::resolvent_matrix(&g, beta)?;
            let resid = &ra - &rb - (&ra * &rb) * (beta - alpha);
            let alpha_norm = alpha * linalg::op_norm_inf(&ra);
            Ok(ResolventEquationReport {
                alpha,
                beta,
                residual: linalg::op_norm_inf(&resid),
                alpha_norm,
                contraction_ok: alpha_norm <= 1.0 + 1e-12,
            })
        }
        (Model::Diffusion(_), SmoothMeasure::Diffusion { .. }) => {
            let ops = model.operators(mu)?;
            let mut residual = 0.0_f64;
            let mut alpha_norm = 0.0_f64;
            let mut probes = model.vague_test_functions();
            probes.push(model.constant(1.0));
            for u in &probes {
                let ra = ops.resolvent(alpha, u)?;
                let rb = ops.resolvent(beta, u)?;
                let rab = ops.resolvent(alpha, &rb)?;
                let r = ra.sub(&rb).sub(&rab.scale(beta - alpha));
                let un = u.sup_norm().max(f64::MIN_POSITIVE);
                residual = residual.max(r.sup_norm() / un);
                alpha_norm = alpha_norm.max(alpha * ra.sup_norm() / un);
            }
            Ok(ResolventEquationReport {
                alpha,
                beta,
                residual,
                alpha_norm,
                contraction_ok: alpha_norm <= 1.0 + 1e-9,
            })
        }
        _ => Err(mismatch()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrongLimitReport {
    pub alphas: Vec<f64>,
    pub errors: Vec<f64>,
    pub decreasing: bool,
    /// `alpha * error` at the last rate within ten times its maximum over the earlier rates.
    pub envelope_ok: bool,
}

/// `||alpha R_alpha u - P_F u||_inf` along `alphas`.
pub fn strong_limit_check(
    model: &Model,
    mu: &SmoothMeasure,
    u: &FunctionOnX,
    alphas: &[f64],
) -> Result<StrongLimitReport> {
    let ops = model.operators(mu)?;
    let pf = ops.hitting(0.0, u)?;
    let errors = alphas
        .iter()
        .map(|a| Ok(sup_distance(&ops.resolvent(*a, u)?.scale(*a), &pf)))
        .collect::<Result<Vec<f64>>>()?;
    let decreasing = errors
        .windows(2)
        .all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-15);
    // O(1/alpha): alpha * error must not grow past ten times its earlier maximum.
    let scaled: Vec<f64> = alphas.iter().zip(&errors).map(|(a, e)| a * e).collect();
    let envelope_ok = match scaled.split_last() {
        Some((last, rest)) if !rest.is_empty() => {
            *last <= 10.0 * rest.iter().fold(0.0_f64, |m, v| m.max(*v)) + 1e-15
        }
        _ => true,
    };
    Ok(StrongLimitReport {
        alphas: alphas.to_vec(),
        errors,
        decreasing,
        envelope_ok,
    })
}

fn chain_parts<'a>(
    model: &'a Model,
    mu: &'a SmoothMeasure,
) -> Result<(&'a ChainModel, &'a DVector<f64>)> {
    match (model, mu) {
        (Model::Chain(c), SmoothMeasure::Chain(m)) => {
            chain::check_masses(c, m)?;
            Ok((c, m))
        }
        (Model::Chain(_), _) => Err(mismatch()),
        _ => Err(Error::Unsupported(
            "structural matrix checks need the chain backend".into(),
        )),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelRangeReport {
    pub alphas: Vec<f64>,
    pub support_size: usize,
    pub ranks: Vec<usize>,
    /// Columns for states off `F` vanish exactly and the rank equals `|F|`.
    pub kernel_ok: bool,
    /// Column spaces coincide for every pair of rates.
    pub range_ok: bool,
    /// `rank(R_alpha R_beta) = rank(R_beta)` for every pair.
    pub injective_on_range_ok: bool,
}

impl KernelRangeReport {
    pub fn passed(&self) -> bool {
        self.kernel_ok && self.range_ok && self.injective_on_range_ok
    }
}

pub fn kernel_range_check(
    model: &Model,
    mu: &SmoothMeasure,
    alphas: &[f64],
) -> Result<KernelRangeReport> {
    let (c, m) = chain_parts(model, mu)?;
    let mask: Vec<bool> = m.iter().map(|v| *v > 0.0).collect();
    let k = mask.iter().filter(|b| **b).count();
    let g = chain::potential_matrix(c, m, 0.0)?;
    let rs = alphas
        .iter()
        .map(|a| chain::resolvent_matrix(&g, *a))
        .collect::<Result<Vec<_>>>()?;
    let ranks: Vec<usize> = rs.iter().map(|r| linalg::rank(r, RANK_TOL)).collect();
    let kernel_ok = rs.iter().zip(&ranks).all(|(r, rank)| {
        *rank == k
            && (0..c.len())
                .filter(|j| !mask[*j])
                .all(|j| r.column(j).iter().all(|v| *v == 0.0))
    });
    let mut range_ok = true;
    let mut inj_ok = true;
    for (i, ra) in rs.iter().enumerate() {
        for (j, rb) in rs.iter().enumerate() {
            if i >= j {
                continue;
            }
            let joint = DMatrix::from_columns(
                &ra.column_iter().chain(rb.column_iter()).collect::<Vec<_>>(),
            );
            range_ok &= linalg::rank(&joint, RANK_TOL) == ranks[i] && ranks[i] == ranks[j];
            inj_ok &= linalg::rank(&(ra * rb), RANK_TOL) == ranks[j];
            inj_ok &= linalg::rank(&(rb * ra), RANK_TOL) == ranks[i];
        }
    }
    Ok(KernelRangeReport {
        alphas: alphas.to_vec(),
        support_size: k,
        ranks,
        kernel_ok,
        range_ok,
        injective_on_range_ok: inj_ok,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RangeIdentityReport {
    pub alpha: f64,
    pub rank_resolvent: usize,
    pub rank_potential: usize,
    pub rank_hitting: usize,
    pub rank_joint: usize,
    /// `||P_F G^mu - G^mu||`, max entry.
    pub hitting_fixes_potential: f64,
    pub passed: bool,
}

/// Column spaces of `R_alpha`, `G^mu` and `P_F` coincide, and `P_F G^mu = G^mu`.
pub fn range_identity_check(
    model: &Model,
    mu: &SmoothMeasure,
    alpha: f64,
) -> Result<RangeIdentityReport> {
    let (c, m) = chain_parts(model, mu)?;
    let mask: Vec<bool> = m.iter().map(|v| *v > 0.0).collect();
    let g = chain::potential_matrix(c, m, 0.0)?;
    let r = chain::resolvent_matrix(&g, alpha)?;
    let p = chain::hitting_matrix(c, &mask, 0.0)?;
    let cols: Vec<_> = r
        .column_iter()
        .chain(g.column_iter())
        .chain(p.column_iter())
        .collect();
    let joint = DMatrix::from_columns(&cols);
    let rank_resolvent = linalg::rank(&r, RANK_TOL);
    let rank_potential = linalg::rank(&g, RANK_TOL);
    let rank_hitting = linalg::rank(&p, RANK_TOL);
    let rank_joint = linalg::rank(&joint, RANK_TOL);
    let fix = linalg::max_abs(&(&p * &g - &g));
    Ok(RangeIdentityReport {
        alpha,
        rank_resolvent,
        rank_potential,
        rank_hitting,
        rank_joint,
        hitting_fixes_potential: fix,
        passed: rank_resolvent == rank_potential
            && rank_potential == rank_hitting
            && rank_hitting == rank_joint
            && fix < 1e-12,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CmpReport {
    pub trials: usize,
    pub seed: u64,
    /// Trials whose premise constrained at least one state.
    pub nontrivial: usize,
    pub violations: usize,
    pub worst_excess: f64,
    pub sub_markov_ok: bool,
}

pub const CMP_TOL: f64 = 1e-10;

/// Randomized audit of the complete maximum principle for `G^mu`: with `c` the
/// smallest constant making `G^mu u <= G^mu v + c` on `{u > 0}` (plus a random
/// slack), the inequality must hold everywhere. Also checks
/// `alpha R_alpha 1 <= 1`.
pub fn cmp_check(model: &Model, mu: &SmoothMeasure, trials: usize, seed: u64) -> Result<CmpReport> {
    let (c, m) = chain_parts(model, mu)?;
    let n = c.len();
    let g = chain::potential_matrix(c, m, 0.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nontrivial = 0;
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for trial in 0..trials {
        let u = DVector::from_fn(n, |_, _| {
            if rng.random_bool(0.5) {
                rng.random::<f64>()
            } else {
                0.0
            }
        });
        let v = if trial % 17 == 0 {
            u.clone()
        } else {
            DVector::from_fn(n, |_, _| {
                if rng.random_bool(0.5) {
                    rng.random::<f64>()
                } else {
                    0.0
                }
            })
        };
        let gu = &g * &u;
        let gv = &g * &v;
        let on_support = (0..n).filter(|i| u[*i] > 0.0);
        let mut cmin = 0.0_f64;
        let mut any = false;
        for i in on_support {
            any = true;
            cmin = cmin.max(gu[i] - gv[i]);
        }
        if !any {
            continue;
        }
        nontrivial += 1;
        let slack = if rng.random_bool(0.5) {
            0.1 * rng.random::<f64>()
        } else {
            0.0
        };
        let cc = cmin + slack;
        let tol = CMP_TOL * linalg::sup_norm(&gu).max(1.0);
        let excess = (0..n)
            .map(|i| gu[i] - gv[i] - cc)
            .fold(f64::NEG_INFINITY, f64::max);
        worst = worst.max(excess);
        if excess > tol {
            violations += 1;
        }
    }
    let mut sub_markov_ok = true;
    for alpha in [0.5, 1.0, 2.0, 10.0] {
        let r = chain::resolvent_matrix(&g, alpha)?;
        let row = &r * DVector::from_element(n, 1.0) * alpha;
        sub_markov_ok &= row.iter().all(|v| *v <= 1.0 + 1e-12 && *v >= -1e-15);
    }
    if violations > 0 {
        return Err(Error::CounterexampleFound(format!(
            "{violations} of {trials} trials violate the maximum principle (worst excess {worst:.3e})"
        )));
    }
    Ok(CmpReport {
        trials,
        seed,
        nontrivial,
        violations,
        worst_excess: worst.max(0.0),
        sub_markov_ok,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalityReport {
    pub full_support: bool,
    pub hitting_is_identity: bool,
    pub hitting_injective: bool,
    pub resolvent_injective: bool,
    pub phi_is_one: bool,
    pub consistent: bool,
}

pub fn normality_check(model: &Model, mu: &SmoothMeasure) -> Result<NormalityReport> {
    let (c, m) = chain_parts(model, mu)?;
    let n = c.len();
    let mask: Vec<bool> = m.iter().map(|v| *v > 0.0).collect();
    let full_support = mask.iter().all(|b| *b);
    let p = chain::hitting_matrix(c, &mask, 0.0)?;
    let hitting_is_identity = linalg::max_abs(&(&p - DMatrix::identity(n, n))) < 1e-12;
    let hitting_injective = linalg::rank(&p, RANK_TOL) == n;
    let g = chain::potential_matrix(c, m, 0.0)?;
    let r = chain::resolvent_matrix(&g, 1.0)?;
    let resolvent_injective = linalg::rank(&r, RANK_TOL) == n;
    let phi = chain::hitting_matrix(c, &mask, 1.0)? * DVector::from_element(n, 1.0);
    let phi_is_one = phi.iter().all(|v| (v - 1.0).abs() < 1e-12);
    let flags = [
        full_support,
        hitting_is_identity,
        hitting_injective,
        resolvent_injective,
        phi_is_one,
    ];
    Ok(NormalityReport {
        full_support,
        hitting_is_identity,
        hitting_injective,
        resolvent_injective,
        phi_is_one,
        consistent: flags.iter().all(|f| *f == flags[0]),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RevuzReport {
    pub alphas: Vec<f64>,
    pub values: Vec<f64>,
    pub target: f64,
    pub errors: Vec<f64>,
    pub decreasing: bool,
    pub final_relative_error: f64,
}

/// `alpha <m, G_alpha^mu u>` against `int u dmu`.
pub fn revuz_recovery(
    model: &Model,
    mu: &SmoothMeasure,
    u: &FunctionOnX,
    alphas: &[f64],
) -> Result<RevuzReport> {
    let target = mu.integrate(u)?;
    let values = alphas
        .iter()
        .map(|a| Ok(a * model.integrate_reference(&potential_apply(model, mu, *a, u)?)?))
        .collect::<Result<Vec<f64>>>()?;
    let errors: Vec<f64> = values.iter().map(|v| (v - target).abs()).collect();
    let decreasing = errors.windows(2).all(|w| w[1] < w[0] || w[1] == 0.0);
    let final_relative_error =
        errors.last().copied().unwrap_or(0.0) / target.abs().max(f64::MIN_POSITIVE);
    Ok(RevuzReport {
        alphas: alphas.to_vec(),
        values,
        target,
        errors,
        decreasing,
        final_relative_error,
    })
}

/// Indicator basis of the chain, or the hat probes on the interval.
pub fn probe_functions(model: &Model) -> Vec<FunctionOnX> {
    match model {
        Model::Chain(_) => model.vague_test_functions(),
        Model::Diffusion(d) => {
            let mut v = model.vague_test_functions();
            v.push(d.sample(|x| (std::f64::consts::PI * x).sin(), FunctionClass::C0));
            v
        }
    }
}
