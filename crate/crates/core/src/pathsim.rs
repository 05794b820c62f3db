//! Path-level Monte Carlo on the chain backend.
//!
//! Paths are simulated exactly (exponential holding times, embedded jump chain,
//! killing with the residual rate). The additive functional of `mu` is
//! piecewise linear with slope `a(x_i) = mu_i / m_i` on each holding interval,
//! and its right-continuous inverse is evaluated exactly.
//!
//! Workers own contiguous blocks of paths and independent ChaCha streams
//! `(seed, worker)`; partial sums are reduced in worker order, so estimates are
//! bit-reproducible for a fixed `(seed, paths, workers)`.

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::ChainModel;

/// Lower bound on the number of paths for gated estimates.
pub const MIN_PATHS: usize = 1000;
/// Hard horizon in units of the largest expected lifetime.
pub const HORIZON_LIFETIMES: f64 = 1e4;

#[derive(Debug, Clone, PartialEq)]
pub struct ChainPath {
    /// `0 = s_0 < s_1 < ... < s_J`.
    pub jump_times: Vec<f64>,
    /// `x_i` occupied on `[s_i, s_{i+1})`, `i < J`.
    pub states: Vec<usize>,
    pub killed: bool,
    /// Hit the horizon before being killed.
    pub truncated: bool,
}

impl ChainPath {
    /// `s_J` if killed, `+inf` otherwise.
    pub fn lifetime(&self) -> f64 {
        if self.killed {
            *self.jump_times.last().unwrap()
        } else {
            f64::INFINITY
        }
    }

    /// State at time `t`, `None` for the cemetery.
    pub fn state_at(&self, t: f64) -> Option<usize> {
        let i = self.jump_times.partition_point(|s| *s <= t);
        if i == 0 || i > self.states.len() {
            None
        } else {
            Some(self.states[i - 1])
        }
    }
}

/// Exit rates and cumulative jump rates per state.
#[derive(Debug, Clone)]
pub struct JumpTable {
    exit: Vec<f64>,
    targets: Vec<Vec<(usize, f64)>>,
}

impl JumpTable {
    pub fn new(model: &ChainModel) -> Self {
        let q = model.generator();
        let n = model.len();
        let exit = (0..n).map(|i| -q[(i, i)]).collect();
        let targets = (0..n)
            .map(|i| {
                let mut acc = 0.0;
                (0..n)
                    .filter(|j| *j != i && q[(i, *j)] > 0.0)
                    .map(|j| {
                        acc += q[(i, j)];
                        (j, acc)
                    })
                    .collect()
            })
            .collect();
        Self { exit, targets }
    }
}

/// Simulate one path from `x0` until killing or `horizon`.
pub fn sample_path<R: Rng + ?Sized>(
    table: &JumpTable,
    x0: usize,
    horizon: f64,
    rng: &mut R,
) -> ChainPath {
    let mut jump_times = vec![0.0];
    let mut states = Vec::new();
    let mut t = 0.0;
    let mut x = x0;
    loop {
        let rate = table.exit[x];
        states.push(x);
        if rate <= 0.0 {
            jump_times.push(horizon);
            return ChainPath {
                jump_times,
                states,
                killed: false,
                truncated: true,
            };
        }
        let hold: f64 = Exp1.sample(rng);
        t += hold / rate;
        if t >= horizon {
            jump_times.push(horizon);
            return ChainPath {
                jump_times,
                states,
                killed: false,
                truncated: true,
            };
        }
        jump_times.push(t);
        let r = rng.random::<f64>() * rate;
        match table.targets[x].iter().find(|(_, c)| r < *c) {
            Some((j, _)) => x = *j,
            None => {
                return ChainPath {
                    jump_times,
                    states,
                    killed: true,
                    truncated: false,
                }
            }
        }
    }
}

/// Convenience wrapper seeding a fresh ChaCha stream.
pub fn sample_path_seeded(model: &ChainModel, x0: usize, horizon: f64, seed: u64) -> ChainPath {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_path(&JumpTable::new(model), x0, horizon, &mut rng)
}

/// The additive functional on one path.
#[derive(Debug, Clone, PartialEq)]
pub struct PcafPath {
    /// `A` at each jump time, `A_{s_0} = 0`.
    pub values: Vec<f64>,
    /// Slope of `A` on each holding interval.
    pub slopes: Vec<f64>,
}

impl PcafPath {
    /// `A_t` (constant after the lifetime).
    pub fn at(&self, path: &ChainPath, t: f64) -> f64 {
        let s = &path.jump_times;
        let i = s.partition_point(|x| *x <= t);
        if i == 0 {
            return 0.0;
        }
        if i >= s.len() {
            return *self.values.last().unwrap();
        }
        self.values[i - 1] + self.slopes[i - 1] * (t - s[i - 1])
    }

    pub fn total(&self) -> f64 {
        *self.values.last().unwrap()
    }
}

pub fn pcaf(path: &ChainPath, density: &DVector<f64>) -> PcafPath {
    let mut values = Vec::with_capacity(path.jump_times.len());
    let mut slopes = Vec::with_capacity(path.states.len());
    let mut a = 0.0;
    values.push(0.0);
    for (i, &x) in path.states.iter().enumerate() {
        let slope = density[x];
        a += slope * (path.jump_times[i + 1] - path.jump_times[i]);
        slopes.push(slope);
        values.push(a);
    }
    PcafPath { values, slopes }
}

/// `tau_t = inf{s : A_s > t}` and the state occupied there; `+inf` and `None`
/// once `t >= A_infinity`.
pub fn inverse_pcaf_state(path: &ChainPath, a: &PcafPath, t: f64) -> (f64, Option<usize>) {
    let i = a.values[1..].partition_point(|v| *v <= t);
    if i >= path.states.len() {
        return (f64::INFINITY, None);
    }
    let tau = path.jump_times[i] + (t - a.values[i]) / a.slopes[i];
    (tau, Some(path.states[i]))
}

pub fn inverse_pcaf(path: &ChainPath, a: &PcafPath, t: f64) -> f64 {
    inverse_pcaf_state(path, a, t).0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub paths: usize,
    pub seed: u64,
    pub workers: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            paths: 100_000,
            seed: 0,
            workers: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub paths: usize,
    pub truncated: usize,
}

impl Estimate {
    /// `(mean - exact) / stderr`, zero when both the gap and the error vanish.
    pub fn z_score(&self, exact: f64) -> f64 {
        let d = self.mean - exact;
        if d == 0.0 {
            0.0
        } else if self.stderr == 0.0 {
            d.signum() * f64::INFINITY
        } else {
            d / self.stderr
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Acc<const K: usize> {
    sum: [f64; K],
    sumsq: [f64; K],
    truncated: usize,
}

/// Run `paths` independent replicates of `f`, each returning `K` paired samples.
fn run_mc<const K: usize, F>(cfg: &McConfig, f: F) -> Result<[Estimate; K]>
where
    F: Fn(&mut ChaCha8Rng) -> ([f64; K], bool) + Sync,
{
    if cfg.paths < MIN_PATHS {
        return Err(Error::BadParameters(format!(
            "need at least {MIN_PATHS} paths, got {}",
            cfg.paths
        )));
    }
    let workers = cfg.workers.max(1);
    let n = cfg.paths;
    let parts: Vec<Acc<K>> = (0..workers)
        .into_par_iter()
        .map(|w| {
            let lo = w * n / workers;
            let hi = (w + 1) * n / workers;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(w as u64);
            let mut acc = Acc {
                sum: [0.0; K],
                sumsq: [0.0; K],
                truncated: 0,
            };
            for _ in lo..hi {
                let (v, trunc) = f(&mut rng);
                for ((s, q), x) in acc.sum.iter_mut().zip(acc.sumsq.iter_mut()).zip(v) {
                    *s += x;
                    *q += x * x;
                }
                acc.truncated += trunc as usize;
            }
            acc
        })
        .collect();
    let mut total = Acc::<K> {
        sum: [0.0; K],
        sumsq: [0.0; K],
        truncated: 0,
    };
    for p in &parts {
        for k in 0..K {
            total.sum[k] += p.sum[k];
            total.sumsq[k] += p.sumsq[k];
        }
        total.truncated += p.truncated;
    }
    let nf = n as f64;
    Ok(std::array::from_fn(|k| {
        let mean = total.sum[k] / nf;
        let var = ((total.sumsq[k] / nf - mean * mean) * nf / (nf - 1.0)).max(0.0);
        Estimate {
            mean,
            stderr: (var / nf).sqrt(),
            paths: n,
            truncated: total.truncated,
        }
    }))
}

/// Model data shared by the estimators.
struct Setup {
    table: JumpTable,
    density: DVector<f64>,
    horizon: f64,
}

fn setup(model: &ChainModel, mu: &DVector<f64>) -> Result<Setup> {
    if mu.len() != model.len() {
        return Err(Error::DimensionMismatch(format!(
            "measure on {} states, chain has {}",
            mu.len(),
            model.len()
        )));
    }
    Ok(Setup {
        table: JumpTable::new(model),
        density: mu.component_div(model.ref_measure()),
        horizon: HORIZON_LIFETIMES * model.max_expected_lifetime(),
    })
}

fn check_state(model: &ChainModel, x: usize) -> Result<()> {
    if x >= model.len() {
        return Err(Error::BadParameters(format!("state {x} out of range")));
    }
    Ok(())
}

fn check_fn(model: &ChainModel, u: &DVector<f64>) -> Result<()> {
    if u.len() != model.len() {
        return Err(Error::DimensionMismatch(format!(
            "function of length {} on a chain with {} states",
            u.len(),
            model.len()
        )));
    }
    Ok(())
}

/// `E_x[u(X_{tau_t})]` with `u(cemetery) = 0`.
pub fn mc_semigroup(
    model: &ChainModel,
    mu: &DVector<f64>,
    t: f64,
    u: &DVector<f64>,
    x: usize,
    cfg: &McConfig,
) -> Result<Estimate> {
    check_state(model, x)?;
    check_fn(model, u)?;
    let s = setup(model, mu)?;
    let [e] = run_mc(cfg, |rng| {
        let path = sample_path(&s.table, x, s.horizon, rng);
        let a = pcaf(&path, &s.density);
        let v = match inverse_pcaf_state(&path, &a, t).1 {
            Some(y) => u[y],
            None => 0.0,
        };
        ([v], path.truncated)
    })?;
    Ok(e)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResolventEstimate {
    /// `u(X_{tau_S}) / alpha` with an independent `S ~ Exp(alpha)`.
    pub clock: Estimate,
    /// `int e^{-alpha A_s} u(X_s) dA_s`, exact per path.
    pub pcaf: Estimate,
    /// Paired difference `clock - pcaf`.
    pub difference: Estimate,
}

impl ResolventEstimate {
    /// Agreement of the two estimators in units of the paired standard error.
    pub fn agreement_z(&self) -> f64 {
        self.difference.z_score(0.0)
    }
}

fn exp_integral(alpha: f64, lo: f64, hi: f64) -> f64 {
    if alpha == 0.0 {
        hi - lo
    } else {
        // e^{-alpha lo} (1 - e^{-alpha (hi - lo)}) / alpha
        (-alpha * lo).exp() * -(-alpha * (hi - lo)).exp_m1() / alpha
    }
}

/// `E_x[int_0^inf e^{-alpha s} u(X_{tau_s}) ds]` by two estimators.
pub fn mc_resolvent(
    model: &ChainModel,
    mu: &DVector<f64>,
    alpha: f64,
    u: &DVector<f64>,
    x: usize,
    cfg: &McConfig,
) -> Result<ResolventEstimate> {
    if !(alpha > 0.0) {
        return Err(Error::BadParameters(
            "resolvent estimators need alpha > 0".into(),
        ));
    }
    check_state(model, x)?;
    check_fn(model, u)?;
    let s = setup(model, mu)?;
    let [clock, pc, diff] = run_mc(cfg, |rng| {
        let path = sample_path(&s.table, x, s.horizon, rng);
        let a = pcaf(&path, &s.density);
        let clock_time: f64 = Exp1.sample(rng);
        let c = match inverse_pcaf_state(&path, &a, clock_time / alpha).1 {
            Some(y) => u[y] / alpha,
            None => 0.0,
        };
        let mut p = 0.0;
        for (i, &y) in path.states.iter().enumerate() {
            if a.slopes[i] > 0.0 && u[y] != 0.0 {
                p += u[y] * exp_integral(alpha, a.values[i], a.values[i + 1]);
            }
        }
        ([c, p, c - p], path.truncated)
    })?;
    Ok(ResolventEstimate {
        clock,
        pcaf: pc,
        difference: diff,
    })
}

/// `U_alpha^A u(x) = E_x[int_0^inf e^{-alpha t} u(X_t) dA_t]`, exact per path.
pub fn mc_apotential(
    model: &ChainModel,
    mu: &DVector<f64>,
    alpha: f64,
    u: &DVector<f64>,
    x: usize,
    cfg: &McConfig,
) -> Result<Estimate> {
    if !(alpha >= 0.0) {
        return Err(Error::BadParameters(format!("rate {alpha} must be >= 0")));
    }
    check_state(model, x)?;
    check_fn(model, u)?;
    let s = setup(model, mu)?;
    let [e] = run_mc(cfg, |rng| {
        let path = sample_path(&s.table, x, s.horizon, rng);
        let mut v = 0.0;
        for (i, &y) in path.states.iter().enumerate() {
            let slope = s.density[y];
            if slope > 0.0 && u[y] != 0.0 {
                v += u[y] * slope * exp_integral(alpha, path.jump_times[i], path.jump_times[i + 1]);
            }
        }
        ([v], path.truncated)
    })?;
    Ok(e)
}

/// `int E_x[u_0(X_{tau_0}) u_1(X_{tau_{t_1}}) ... u_k(X_{tau_{t_k}})] mu_init(dx)`;
/// starting points drawn from `mu_init` normalised, result rescaled by its mass.
pub fn mc_fdd(
    model: &ChainModel,
    mu_init: &DVector<f64>,
    mu: &DVector<f64>,
    times: &[f64],
    fns: &[DVector<f64>],
    cfg: &McConfig,
) -> Result<Estimate> {
    if times.is_empty() || fns.len() != times.len() + 1 {
        return Err(Error::BadParameters(
            "need k >= 1 times and k + 1 functions".into(),
        ));
    }
    if times[0] < 0.0 || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::BadParameters(
            "times must be nonnegative and nondecreasing".into(),
        ));
    }
    check_fn(model, mu_init)?;
    for f in fns {
        check_fn(model, f)?;
    }
    if mu_init.iter().any(|v| *v < 0.0) {
        return Err(Error::BadParameters(
            "initial measure must be nonnegative".into(),
        ));
    }
    let mass = mu_init.sum();
    if mass == 0.0 {
        return Ok(Estimate {
            mean: 0.0,
            stderr: 0.0,
            paths: cfg.paths,
            truncated: 0,
        });
    }
    let s = setup(model, mu)?;
    let mut cum = Vec::with_capacity(mu_init.len());
    let mut acc = 0.0;
    for v in mu_init.iter() {
        acc += v / mass;
        cum.push(acc);
    }
    let mut all_times = Vec::with_capacity(times.len() + 1);
    all_times.push(0.0);
    all_times.extend_from_slice(times);
    let [e] = run_mc(cfg, |rng| {
        let r = rng.random::<f64>();
        let x0 = cum.partition_point(|c| *c <= r).min(cum.len() - 1);
        let path = sample_path(&s.table, x0, s.horizon, rng);
        let a = pcaf(&path, &s.density);
        let mut v = mass;
        for (t, f) in all_times.iter().zip(fns) {
            match inverse_pcaf_state(&path, &a, *t).1 {
                Some(y) => v *= f[y],
                None => {
                    v = 0.0;
                    break;
                }
            }
            if v == 0.0 {
                break;
            }
        }
        ([v], path.truncated)
    })?;
    Ok(e)
}

/// Mean lifetime `E_x[zeta]`.
pub fn mc_lifetime(model: &ChainModel, x: usize, cfg: &McConfig) -> Result<Estimate> {
    check_state(model, x)?;
    let s = setup(model, &model.ref_measure().clone())?;
    let [e] = run_mc(cfg, |rng| {
        let path = sample_path(&s.table, x, s.horizon, rng);
        let zeta = *path.jump_times.last().unwrap();
        ([zeta], path.truncated)
    })?;
    Ok(e)
}

/// `E_x[u(X_t)]`, the untimechanged transition semigroup.
pub fn mc_transition(
    model: &ChainModel,
    t: f64,
    u: &DVector<f64>,
    x: usize,
    cfg: &McConfig,
) -> Result<Estimate> {
    check_state(model, x)?;
    check_fn(model, u)?;
    let s = setup(model, &model.ref_measure().clone())?;
    let [e] = run_mc(cfg, |rng| {
        let path = sample_path(&s.table, x, t.max(s.horizon), rng);
        let v = path.state_at(t).map(|y| u[y]).unwrap_or(0.0);
        ([v], path.truncated)
    })?;
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_state() -> ChainModel {
        ChainModel::from_rows(&[vec![-1.0]], &[1.0]).unwrap()
    }

    fn c2() -> ChainModel {
        ChainModel::from_rows(&[vec![-2.0, 1.0], vec![1.0, -2.0]], &[1.0, 1.0]).unwrap()
    }

    #[test]
    fn one_state_path_is_single_interval() {
        let p = sample_path_seeded(&one_state(), 0, 1e6, 11);
        assert_eq!(p.states, vec![0]);
        assert!(p.killed && !p.truncated);
        assert_eq!(p.jump_times.len(), 2);
    }

    #[test]
    fn mean_lifetime_of_one_state_chain() {
        let cfg = McConfig {
            paths: 100_000,
            seed: 5,
            workers: 4,
        };
        let e = mc_lifetime(&one_state(), 0, &cfg).unwrap();
        assert!(e.z_score(1.0).abs() <= 4.0, "{e:?}");
    }

    #[test]
    fn transition_of_c2_matches_exponential() {
        let model = c2();
        let cfg = McConfig {
            paths: 50_000,
            seed: 9,
            workers: 3,
        };
        let one = DVector::from_element(2, 1.0);
        let exact = model.transition(0.7, &one)[0];
        let e = mc_transition(&model, 0.7, &one, 0, &cfg).unwrap();
        assert!(e.z_score(exact).abs() <= 4.0);
    }

    #[test]
    fn pcaf_identity_and_scaling() {
        let p = sample_path_seeded(&c2(), 0, 1e6, 3);
        let zeta = p.lifetime();
        let a1 = pcaf(&p, &DVector::from_element(2, 1.0));
        let a2 = pcaf(&p, &DVector::from_element(2, 2.0));
        for t in [0.0, 0.1 * zeta, 0.5 * zeta, zeta, 2.0 * zeta] {
            assert!((a1.at(&p, t) - t.min(zeta)).abs() < 1e-12);
            assert!((a2.at(&p, t) - 2.0 * t.min(zeta)).abs() < 1e-12);
        }
        for t in [0.0, 0.3 * zeta, 0.99 * zeta] {
            assert!((inverse_pcaf(&p, &a1, t) - t).abs() < 1e-12);
        }
        assert_eq!(inverse_pcaf(&p, &a1, zeta), f64::INFINITY);
    }

    #[test]
    fn flat_stretch_inverts_to_jump() {
        let path = ChainPath {
            jump_times: vec![0.0, 1.0, 4.0],
            states: vec![1, 0],
            killed: true,
            truncated: false,
        };
        let a = pcaf(&path, &DVector::from_vec(vec![2.0, 0.0]));
        assert_eq!(a.at(&path, 0.5), 0.0);
        assert_eq!(a.at(&path, 1.0), 0.0);
        assert_eq!(a.at(&path, 2.0), 2.0);
        assert_eq!(inverse_pcaf(&path, &a, 0.0), 1.0);
        assert_eq!(inverse_pcaf(&path, &a, 3.0), 2.5);
        let (tau, x) = inverse_pcaf_state(&path, &a, 6.0);
        assert_eq!((tau, x), (f64::INFINITY, None));
    }

    #[test]
    fn zero_function_gives_exact_zero() {
        let model = c2();
        let mu = DVector::from_vec(vec![1.0, 0.0]);
        let cfg = McConfig {
            paths: 2000,
            seed: 1,
            workers: 2,
        };
        let z = DVector::zeros(2);
        let e = mc_semigroup(&model, &mu, 1.0, &z, 1, &cfg).unwrap();
        assert_eq!((e.mean, e.stderr), (0.0, 0.0));
        assert_eq!(e.z_score(0.0), 0.0);
        let a = mc_apotential(
            &model,
            &DVector::zeros(2),
            0.0,
            &DVector::from_element(2, 1.0),
            0,
            &cfg,
        )
        .unwrap();
        assert_eq!(a.mean, 0.0);
    }

    #[test]
    fn estimates_are_reproducible() {
        let model = c2();
        let mu = DVector::from_vec(vec![1.0, 0.5]);
        let u = DVector::from_vec(vec![1.0, -0.5]);
        let cfg = McConfig {
            paths: 5000,
            seed: 42,
            workers: 3,
        };
        let a = mc_resolvent(&model, &mu, 1.0, &u, 0, &cfg).unwrap();
        let b = mc_resolvent(&model, &mu, 1.0, &u, 0, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_few_paths_rejected() {
        let cfg = McConfig {
            paths: 10,
            seed: 0,
            workers: 1,
        };
        assert!(mc_lifetime(&one_state(), 0, &cfg).is_err());
    }
}
