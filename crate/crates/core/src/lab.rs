//! Convergence experiments over measure sequences.
//!
//! Each experiment re-checks the hypotheses of its theorem (declared by the
//! sequence generator and verified numerically), then tabulates sup-norm errors
//! per `n`. "Locally uniformly in t" is read as the maximum over a fixed time
//! grid, which under-approximates the true supremum between grid points.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::FunctionOnX;
use crate::linalg;
use crate::measures::{
    check_hypothesis, tends_to_zero_envelope, Hypothesis, HypothesisReport, MeasureSequence,
    SequenceKind, SmoothMeasure, ZERO_TOL,
};
use crate::model::Model;
use crate::pathsim::{self, McConfig};
use crate::timechange::{exact_fdd, ExtensionKind, TimeChangedOperators};

pub const DEFAULT_T_MAX: f64 = 5.0;
pub const DEFAULT_T_POINTS: usize = 50;
/// Slack for triangle-inequality audits.
pub const AUDIT_SLACK: f64 = 1e-12;
/// Two valid extensions must give the same approximation errors to this level.
pub const EXTENSION_TOL: f64 = 1e-10;
/// Gate on Monte Carlo cross-checks.
pub const MC_Z_GATE: f64 = 4.0;

/// `points` equally spaced times on `[0, t_max]`, both ends included.
pub fn time_grid(t_max: f64, points: usize) -> Result<Vec<f64>> {
    if !(t_max > 0.0 && t_max.is_finite()) || points < 2 {
        return Err(Error::BadParameters(format!(
            "time grid needs T > 0 and >= 2 points, got T = {t_max}, {points}"
        )));
    }
    let h = t_max / (points - 1) as f64;
    Ok((0..points)
        .map(|i| if i + 1 == points { t_max } else { i as f64 * h })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SemigroupMode {
    /// `u` in the range of the limit resolvent.
    Range,
    /// `P_t^n P_F u` against `P_t u`.
    HittingComposed,
    /// `F_n` inside `F`.
    Subset,
    /// Increasing or decreasing measures.
    Monotone,
    /// `F = X`.
    FullSupport,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Theorem {
    Potential,
    Integrated,
    Semigroup(SemigroupMode),
    Hitting,
    Approximation,
    /// `S_t^n v_n` with `v_n = (1 + perturbation / n) v`.
    Evolution {
        perturbation: f64,
    },
    /// `P_t^n v_n`, same data.
    Heat {
        perturbation: f64,
    },
    Fdd {
        times: Vec<f64>,
        functions: Vec<FunctionOnX>,
    },
}

impl Theorem {
    pub fn name(&self) -> String {
        match self {
            Self::Potential => "potential".into(),
            Self::Integrated => "integrated".into(),
            Self::Semigroup(m) => format!(
                "semigroup_{}",
                match m {
                    SemigroupMode::Range => "range",
                    SemigroupMode::HittingComposed => "hitting_composed",
                    SemigroupMode::Subset => "subset",
                    SemigroupMode::Monotone => "monotone",
                    SemigroupMode::FullSupport => "full_support",
                }
            ),
            Self::Hitting => "hitting".into(),
            Self::Approximation => "approximation".into(),
            Self::Evolution { .. } => "evolution".into(),
            Self::Heat { .. } => "heat".into(),
            Self::Fdd { .. } => "fdd".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    pub id: String,
    pub f: FunctionOnX,
}

impl TestFunction {
    pub fn new(id: impl Into<String>, f: FunctionOnX) -> Self {
        Self { id: id.into(), f }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub name: String,
    pub model: Model,
    pub sequence: MeasureSequence,
    pub tests: Vec<TestFunction>,
    pub alphas: Vec<f64>,
    pub times: Vec<f64>,
    pub ns: Vec<usize>,
    pub theorem: Theorem,
    /// Optional path-level cross-check (chain backend, fdd only).
    pub mc: Option<McConfig>,
    pub slope_band: Option<SlopeBand>,
}

/// Required range of the fitted slope for curves with a given `param`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlopeBand {
    pub param: String,
    pub lo: f64,
    pub hi: f64,
}

/// One error curve in `n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Curve {
    pub test_id: String,
    pub param: String,
    pub ns: Vec<usize>,
    pub errors: Vec<f64>,
    /// Least-squares log-log slope, only with at least four positive errors.
    pub slope: Option<f64>,
    pub converges: bool,
    /// Indices into `ns` of the best subsequence, when only a subsequence is claimed.
    pub subsequence: Option<Vec<usize>>,
    /// Per-`n` upper bound the errors must respect.
    pub bound: Option<Vec<f64>>,
    pub bound_ok: Option<bool>,
}

impl Curve {
    fn new(test_id: &str, param: impl Into<String>, ns: &[usize], errors: Vec<f64>) -> Self {
        let slope = fit_slope(ns, &errors);
        let converges = tends_to_zero_envelope(ns, &errors);
        Self {
            test_id: test_id.into(),
            param: param.into(),
            ns: ns.to_vec(),
            errors,
            slope,
            converges,
            subsequence: None,
            bound: None,
            bound_ok: None,
        }
    }

    fn with_bound(mut self, bound: Vec<f64>) -> Self {
        let ok = self
            .errors
            .iter()
            .zip(&bound)
            .all(|(e, b)| *e <= b + AUDIT_SLACK);
        self.bound = Some(bound);
        self.bound_ok = Some(ok);
        self
    }

    /// Replace the full-sequence verdict by the verdict on the running minima.
    fn subsequence_only(mut self) -> Self {
        let mut idx = Vec::new();
        let mut best = f64::INFINITY;
        for (i, e) in self.errors.iter().enumerate() {
            if *e < best || idx.is_empty() {
                best = *e;
                idx.push(i);
            }
        }
        let sub: Vec<f64> = idx.iter().map(|i| self.errors[*i]).collect();
        let sub_ns: Vec<usize> = idx.iter().map(|i| self.ns[*i]).collect();
        self.converges = tends_to_zero_envelope(&sub_ns, &sub);
        self.subsequence = Some(idx);
        self
    }

    pub fn passed(&self) -> bool {
        self.converges && self.bound_ok.unwrap_or(true)
    }
}

pub fn fit_slope(ns: &[usize], errors: &[f64]) -> Option<f64> {
    if ns.len() < 4 || ns.len() != errors.len() {
        return None;
    }
    let xs: Vec<f64> = ns.iter().map(|n| *n as f64).collect();
    linalg::log_log_slope(&xs, errors)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Audit {
    pub name: String,
    pub ok: bool,
    pub detail: String,
}

impl Audit {
    fn new(name: &str, ok: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ok,
            detail: detail.into(),
        }
    }
}

/// CSV row of a report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub n: usize,
    pub theorem: String,
    pub test_id: String,
    pub param: String,
    pub sup_error: f64,
    pub hypothesis_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub experiment: String,
    pub theorem: String,
    pub ns: Vec<usize>,
    pub hypothesis: HypothesisReport,
    pub hypothesis_ok: bool,
    pub audits: Vec<Audit>,
    pub curves: Vec<Curve>,
    pub notes: Vec<String>,
    pub passed: bool,
}

impl ConvergenceReport {
    fn finish(
        spec: &ExperimentSpec,
        hypothesis: HypothesisReport,
        hypothesis_ok: bool,
        mut audits: Vec<Audit>,
        curves: Vec<Curve>,
        mut notes: Vec<String>,
    ) -> Self {
        if let Some(band) = &spec.slope_band {
            for c in curves.iter().filter(|c| c.param == band.param) {
                let ok = c.slope.is_some_and(|s| s >= band.lo && s <= band.hi);
                let shown = c.slope.map_or("none".to_string(), |s| format!("{s:.4}"));
                audits.push(Audit::new(
                    "slope_band",
                    ok,
                    format!(
                        "{} {}: slope {shown} against [{}, {}]",
                        c.test_id, c.param, band.lo, band.hi
                    ),
                ));
            }
        }
        notes.push(format!(
            "sup over t taken on a {}-point grid on [0, {}]; values between grid points are not certified",
            spec.times.len(),
            spec.times.last().copied().unwrap_or(0.0)
        ));
        let passed =
            hypothesis_ok && audits.iter().all(|a| a.ok) && curves.iter().all(Curve::passed);
        Self {
            experiment: spec.name.clone(),
            theorem: spec.theorem.name(),
            ns: spec.ns.clone(),
            hypothesis,
            hypothesis_ok,
            audits,
            curves,
            notes,
            passed,
        }
    }

    pub fn rows(&self) -> Vec<ReportRow> {
        let mut rows = Vec::new();
        for c in &self.curves {
            for (n, e) in c.ns.iter().zip(&c.errors) {
                rows.push(ReportRow {
                    n: *n,
                    theorem: self.theorem.clone(),
                    test_id: c.test_id.clone(),
                    param: c.param.clone(),
                    sup_error: *e,
                    hypothesis_ok: self.hypothesis_ok,
                });
            }
        }
        rows
    }

    pub fn curve(&self, test_id: &str, param: &str) -> Option<&Curve> {
        self.curves
            .iter()
            .find(|c| c.test_id == test_id && c.param == param)
    }
}

/// Operators of the limit and of every term, with the hypothesis audit.
struct Prepared {
    limit: Box<dyn TimeChangedOperators>,
    terms: Vec<Box<dyn TimeChangedOperators>>,
    measures: Vec<SmoothMeasure>,
    audit: HypothesisReport,
}

fn validate(spec: &ExperimentSpec) -> Result<()> {
    if spec.ns.len() < 2 || spec.ns.contains(&0) || spec.ns.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::BadParameters(
            "n range must be increasing, positive, with at least two values".into(),
        ));
    }
    if spec.tests.is_empty() {
        return Err(Error::BadParameters("no test functions".into()));
    }
    for t in &spec.tests {
        spec.model.check_function(&t.f)?;
    }
    if spec.times.is_empty() || spec.times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
        return Err(Error::BadParameters(
            "time grid must be nonempty and nonnegative".into(),
        ));
    }
    if spec.alphas.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
        return Err(Error::BadParameters("alpha grid must be positive".into()));
    }
    Ok(())
}

fn prepare(spec: &ExperimentSpec, declared: &[Hypothesis], mismatch: bool) -> Result<Prepared> {
    validate(spec)?;
    for h in declared {
        if !spec.sequence.declares(*h) {
            let msg = format!(
                "{:?} generator does not declare {:?}",
                spec.sequence.kind(),
                h
            );
            return Err(if mismatch {
                Error::ModeMismatch(msg)
            } else {
                Error::HypothesisFailed(msg)
            });
        }
    }
    let audit = check_hypothesis(
        &spec.model,
        &spec.sequence,
        &spec.ns,
        &spec.model.vague_test_functions(),
    )?;
    if !audit.passed() {
        return Err(Error::HypothesisFailed(format!(
            "kato {}, vague {}, uniform potentials {}",
            audit.kato_ok, audit.vague_ok, audit.potential_ok
        )));
    }
    let limit = spec.model.operators(spec.sequence.limit())?;
    let measures: Vec<SmoothMeasure> = spec
        .ns
        .iter()
        .map(|n| spec.sequence.term(*n))
        .collect::<Result<_>>()?;
    let terms = measures
        .iter()
        .map(|m| spec.model.operators(m))
        .collect::<Result<_>>()?;
    Ok(Prepared {
        limit,
        terms,
        measures,
        audit,
    })
}

/// `max_t ||f(t)||` over the grid.
fn sup_over<F>(times: &[f64], f: F) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    times.iter().try_fold(0.0_f64, |acc, t| Ok(acc.max(f(*t)?)))
}

fn support_subset(p: &Prepared) -> bool {
    p.terms
        .iter()
        .all(|t| t.support().is_subset_of(p.limit.support()))
}

fn monotone_ordered(p: &Prepared, up: bool) -> bool {
    p.measures.windows(2).all(|w| {
        if up {
            w[0].le(&w[1], 1e-12)
        } else {
            w[1].le(&w[0], 1e-12)
        }
    }) && p.measures.iter().all(|m| {
        let lim = p.limit.measure();
        if up {
            m.le(lim, 1e-12)
        } else {
            lim.le(m, 1e-12)
        }
    })
}

/// `G^{mu_n} u` and `R_alpha^n u` against the limit.
pub fn run_potential_convergence(spec: &ExperimentSpec) -> Result<ConvergenceReport> {
    let p = prepare(
        spec,
        &[Hypothesis::Vague, Hypothesis::PotentialUniform],
        false,
    )?;
    let mut curves = Vec::new();
    let mut notes = Vec::new();
    for t in &spec.tests {
        let g_inf = p.limit.potential(&t.f)?;
        let errs = p
            .terms
            .iter()
            .map(|op| Ok(op.potential(&t.f)?.sub(&g_inf).sup_norm()))
            .collect::<Result<Vec<_>>>()?;
        let mut c = Curve::new(&t.id, "G", &spec.ns, errs);
        if let Some(b) = shifted_atom_bound(spec, &t.f) {
            c = c.with_bound(b);
        }
        curves.push(c);
        for &alpha in &spec.alphas {
            let r_inf = p.limit.resolvent(alpha, &t.f)?;
            let errs = p
                .terms
                .iter()
                .map(|op| Ok(op.resolvent(alpha, &t.f)?.sub(&r_inf).sup_norm()))
                .collect::<Result<Vec<_>>>()?;
            curves.push(Curve::new(&t.id, format!("alpha={alpha}"), &spec.ns, errs));
        }
    }
    if spec.sequence.kind() == SequenceKind::ShiftedAtom {
        notes.push("G curves bounded by 2 w |shift| ||u|| / n + w Lip(u) |shift| / (2n)".into());
    }
    Ok(ConvergenceReport::finish(
        spec,
        p.audit,
        true,
        Vec::new(),
        curves,
        notes,
    ))
}

/// Kernel-Lipschitz bound for the shifted atom: `|d G / d y| <= 2` and `G <= 1/2`.
fn shifted_atom_bound(spec: &ExperimentSpec, u: &FunctionOnX) -> Option<Vec<f64>> {
    if spec.sequence.kind() != SequenceKind::ShiftedAtom {
        return None;
    }
    let Model::Diffusion(d) = &spec.model else {
        return None;
    };
    let w = spec.sequence.limit().atoms()[0].w;
    let v = u.values();
    let lip = (1..v.len())
        .map(|i| (v[i] - v[i - 1]).abs())
        .fold(0.0_f64, f64::max)
        / d.spacing();
    let edge = match u.class() {
        crate::kernel::FunctionClass::C0 => (v[0].abs()).max(v[v.len() - 1].abs()) / d.node(0),
        crate::kernel::FunctionClass::Bounded => 0.0,
    };
    let lip = lip.max(edge);
    let shift = spec.sequence.params().shift.abs();
    Some(
        spec.ns
            .iter()
            .map(|n| {
                let delta = shift / *n as f64;
                w * (2.0 * delta * u.sup_norm() + 0.5 * lip * delta)
            })
            .collect(),
    )
}

/// `S_t^n u` against `S_t u`, max over the time grid, plus the `t = 0` row.
pub fn run_integrated_convergence(spec: &ExperimentSpec) -> Result<ConvergenceReport> {
    let p = prepare(
        spec,
        &[Hypothesis::Vague, Hypothesis::PotentialUniform],
        false,
    )?;
    let mut curves = Vec::new();
    for t in &spec.tests {
        let mut sup = Vec::with_capacity(spec.ns.len());
        let mut zero = Vec::with_capacity(spec.ns.len());
        for op in &p.terms {
            sup.push(sup_over(&spec.times, |s| {
                Ok(op
                    .integrated(s, &t.f)?
                    .sub(&p.limit.integrated(s, &t.f)?)
                    .sup_norm())
            })?);
            zero.push(
                op.integrated(0.0, &t.f)?
                    .sub(&p.limit.integrated(0.0, &t.f)?)
                    .sup_norm(),
            );
        }
        curves.push(Curve::new(&t.id, "sup_t", &spec.ns, sup));
        curves.push(Curve::new(&t.id, "t=0", &spec.ns, zero));
    }
    Ok(ConvergenceReport::finish(
        spec,
        p.audit,
        true,
        Vec::new(),
        curves,
        Vec::new(),
    ))
}

/// Time-changed semigroups in one of the theorem's modes.
pub fn run_semigroup_convergence(
    spec: &ExperimentSpec,
    mode: SemigroupMode,
) -> Result<ConvergenceReport> {
    let seq = &spec.sequence;
    let declared: Vec<Hypothesis> = match mode {
        SemigroupMode::Range | SemigroupMode::HittingComposed | SemigroupMode::FullSupport => {
            vec![Hypothesis::Vague, Hypothesis::PotentialUniform]
        }
        SemigroupMode::Subset => vec![Hypothesis::SubsetSupport],
        SemigroupMode::Monotone => {
            if seq.declares(Hypothesis::MonotoneUp) {
                vec![Hypothesis::MonotoneUp]
            } else if seq.declares(Hypothesis::MonotoneDown) {
                vec![Hypothesis::MonotoneDown]
            } else {
                return Err(Error::ModeMismatch(format!(
                    "{:?} generator is not monotone",
                    seq.kind()
                )));
            }
        }
    };
    let p = prepare(spec, &declared, true)?;
    let mut audits = Vec::new();
    match mode {
        SemigroupMode::Subset => {
            if !support_subset(&p) {
                return Err(Error::HypothesisFailed(
                    "some F_n is not contained in F".into(),
                ));
            }
            audits.push(Audit::new(
                "subset_support",
                true,
                "F_n within F for every n",
            ));
        }
        SemigroupMode::FullSupport => {
            if !p.limit.support().is_full() {
                return Err(Error::HypothesisFailed(
                    "limit measure does not charge every point".into(),
                ));
            }
            audits.push(Audit::new("full_support", true, "F = X"));
        }
        SemigroupMode::Monotone => {
            let up = declared[0] == Hypothesis::MonotoneUp;
            if !monotone_ordered(&p, up) {
                return Err(Error::HypothesisFailed("measures are not ordered".into()));
            }
            audits.push(Audit::new(
                "monotone_order",
                true,
                if up { "increasing" } else { "decreasing" },
            ));
        }
        SemigroupMode::HittingComposed => {
            let closed =
                p.limit.support().is_closed() && p.terms.iter().all(|t| t.support().is_closed());
            if !closed {
                return Err(Error::HypothesisFailed(
                    "fine supports are not closed".into(),
                ));
            }
        }
        SemigroupMode::Range => {}
    }
    let down = mode == SemigroupMode::Monotone
        && seq.declares(Hypothesis::MonotoneDown)
        && !seq.declares(Hypothesis::MonotoneUp);
    let mut curves = Vec::new();
    for t in &spec.tests {
        let (probe, id) = match mode {
            SemigroupMode::Range => {
                let alpha = spec.alphas.first().copied().unwrap_or(1.0);
                (
                    p.limit.resolvent(alpha, &t.f)?,
                    format!("R{alpha}[{}]", t.id),
                )
            }
            _ => (t.f.clone(), t.id.clone()),
        };
        let pf = p.limit.hitting(0.0, &probe)?;
        let mut errs = Vec::with_capacity(spec.ns.len());
        let mut bound = Vec::with_capacity(spec.ns.len());
        for op in &p.terms {
            let arg = if mode == SemigroupMode::HittingComposed {
                &pf
            } else {
                &probe
            };
            errs.push(sup_over(&spec.times, |s| {
                Ok(op
                    .semigroup(s, arg)?
                    .sub(&p.limit.semigroup(s, &probe)?)
                    .sup_norm())
            })?);
            if down {
                let hit = op.hitting(0.0, &probe)?.sub(&pf).sup_norm();
                bound.push(sup_over(&spec.times, |s| {
                    Ok(hit
                        + op.semigroup(s, &pf)?
                            .sub(&p.limit.semigroup(s, &pf)?)
                            .sup_norm())
                })?);
            }
        }
        let mut c = Curve::new(&id, "sup_t", &spec.ns, errs);
        if down {
            c = c.with_bound(bound);
        }
        curves.push(c);
    }
    Ok(ConvergenceReport::finish(
        spec,
        p.audit,
        true,
        audits,
        curves,
        Vec::new(),
    ))
}

/// `||P_{F_n} u - P_F u||`; a full-sequence verdict only for monotone families.
pub fn run_hitting_convergence(spec: &ExperimentSpec) -> Result<ConvergenceReport> {
    validate(spec)?;
    let audit = check_hypothesis(
        &spec.model,
        &spec.sequence,
        &spec.ns,
        &spec.model.vague_test_functions(),
    )?;
    let limit = spec.model.operators(spec.sequence.limit())?;
    let measures: Vec<SmoothMeasure> = spec
        .ns
        .iter()
        .map(|n| spec.sequence.term(*n))
        .collect::<Result<_>>()?;
    let terms: Vec<Box<dyn TimeChangedOperators>> = measures
        .iter()
        .map(|m| spec.model.operators(m))
        .collect::<Result<_>>()?;
    let closed = limit.support().is_closed() && terms.iter().all(|t| t.support().is_closed());
    let seq = &spec.sequence;
    let monotone = seq.declares(Hypothesis::MonotoneUp) || seq.declares(Hypothesis::MonotoneDown);
    let down = seq.declares(Hypothesis::MonotoneDown) && !seq.declares(Hypothesis::MonotoneUp);
    let mut audits = vec![Audit::new("closed_supports", closed, "F_n and F closed")];
    let mut curves = Vec::new();
    let mut decreasing = true;
    for t in &spec.tests {
        let pf = limit.hitting(0.0, &t.f)?;
        let hits = terms
            .iter()
            .map(|op| op.hitting(0.0, &t.f))
            .collect::<Result<Vec<_>>>()?;
        let errs = hits.iter().map(|h| h.sub(&pf).sup_norm()).collect();
        let c = Curve::new(&t.id, "alpha=0", &spec.ns, errs);
        curves.push(if monotone { c } else { c.subsequence_only() });
        if down && t.f.values().iter().all(|v| *v >= 0.0) {
            decreasing &= hits.windows(2).all(|w| {
                w[1].values()
                    .iter()
                    .zip(w[0].values().iter())
                    .all(|(b, a)| *b <= a + AUDIT_SLACK)
            });
        }
    }
    if down {
        audits.push(Audit::new(
            "hitting_decreasing",
            decreasing,
            "P_{F_n} u nonincreasing in n for u >= 0",
        ));
    }
    let notes = if monotone {
        Vec::new()
    } else {
        vec!["only a subsequence is claimed; verdicts use the running minima".into()]
    };
    let ok = closed;
    Ok(ConvergenceReport::finish(
        spec, audit, ok, audits, curves, notes,
    ))
}

/// Extension of `h` on `F` to the whole space; restriction gives `h` back.
pub fn extend(ops: &dyn TimeChangedOperators, h: &DVector<f64>) -> Result<FunctionOnX> {
    let u = ops.extend(h, ExtensionKind::Zero)?;
    let back = ops.restrict(&u)?;
    if back.len() != h.len() || back.iter().zip(h.iter()).any(|(a, b)| a != b) {
        return Err(Error::ExtensionFailed(
            "restriction does not recover the data on F".into(),
        ));
    }
    Ok(u)
}

/// `Pi_n h = (P_F h~)|_{F_n}` and the two discrepancies of the approximation theorem.
fn approximation_errors(
    spec: &ExperimentSpec,
    p: &Prepared,
    h: &DVector<f64>,
    kind: ExtensionKind,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let lim = p.limit.as_ref();
    let pi = |op: &dyn TimeChangedOperators, g: &DVector<f64>| -> Result<DVector<f64>> {
        op.restrict(&lim.hitting(0.0, &lim.extend(g, kind)?)?)
    };
    let mut sg = Vec::with_capacity(p.terms.len());
    let mut res = vec![Vec::with_capacity(p.terms.len()); spec.alphas.len()];
    for op in &p.terms {
        let op = op.as_ref();
        let pin = pi(op, h)?;
        sg.push(sup_over(&spec.times, |s| {
            let a = op.restricted_semigroup(s, &pin)?;
            let b = pi(op, &lim.restricted_semigroup(s, h)?)?;
            Ok(linalg::sup_norm(&(a - b)))
        })?);
        for (k, &alpha) in spec.alphas.iter().enumerate() {
            let a = op.restricted_resolvent(alpha, &pin)?;
            let b = pi(op, &lim.restricted_resolvent(alpha, h)?)?;
            res[k].push(linalg::sup_norm(&(a - b)));
        }
    }
    Ok((sg, res))
}

pub fn run_approximation(spec: &ExperimentSpec) -> Result<ConvergenceReport> {
    let p = prepare(
        spec,
        &[Hypothesis::Vague, Hypothesis::PotentialUniform],
        false,
    )?;
    let closed = p.limit.support().is_closed() && p.terms.iter().all(|t| t.support().is_closed());
    if !closed {
        return Err(Error::HypothesisFailed(
            "fine supports are not closed".into(),
        ));
    }
    let mut curves = Vec::new();
    let mut worst_gap = 0.0_f64;
    for t in &spec.tests {
        let h = p.limit.restrict(&t.f)?;
        extend(p.limit.as_ref(), &h)?;
        let (sg, res) = approximation_errors(spec, &p, &h, ExtensionKind::Zero)?;
        let (sg2, res2) = approximation_errors(spec, &p, &h, ExtensionKind::Alternate)?;
        for (a, b) in sg.iter().zip(&sg2) {
            worst_gap = worst_gap.max((a - b).abs());
        }
        for (ra, rb) in res.iter().zip(&res2) {
            for (a, b) in ra.iter().zip(rb) {
                worst_gap = worst_gap.max((a - b).abs());
            }
        }
        curves.push(Curve::new(&t.id, "T_sup_t", &spec.ns, sg));
        for (k, r) in res.into_iter().enumerate() {
            curves.push(Curve::new(
                &t.id,
                format!("V_alpha={}", spec.alphas[k]),
                &spec.ns,
                r,
            ));
        }
    }
    let audits = vec![Audit::new(
        "extension_independence",
        worst_gap <= EXTENSION_TOL,
        format!("max change under a second extension {worst_gap:.3e}"),
    )];
    let mut notes = Vec::new();
    if support_subset(&p) {
        notes.push("F_n within F: the discrepancies are the mild-solution errors on F_n".into());
    }
    Ok(ConvergenceReport::finish(
        spec, p.audit, true, audits, curves, notes,
    ))
}

fn check_perturbation(perturbation: f64) -> Result<()> {
    if perturbation.is_finite() {
        Ok(())
    } else {
        Err(Error::BadParameters("perturbation must be finite".into()))
    }
}

/// `S_t^n v_n` against `S_t v` with `v_n = (1 + eps / n) v`.
pub fn run_evolution_convergence(spec: &ExperimentSpec) -> Result<ConvergenceReport> {
    let Theorem::Evolution { perturbation: eps } = spec.theorem else {
        return Err(Error::BadParameters("evolution experiment expected".into()));
    };
    check_perturbation(eps)?;
    let p = prepare(
        spec,
        &[Hypothesis::Vague, Hypothesis::PotentialUniform],
        false,
    )?;
    let seq = &spec.sequence;
    let monotone = seq.declares(Hypothesis::MonotoneUp) || seq.declares(Hypothesis::MonotoneDown);
    let mut audits = Vec::new();
    let mut curves = Vec::new();
    let mut data_ok = true;
    for t in &spec.tests {
        let vn_gap: Vec<f64> = spec
            .ns
            .iter()
            .map(|n| eps.abs() / *n as f64 * t.f.sup_norm())
            .collect();
        data_ok &= tends_to_zero_envelope(&spec.ns, &vn_gap);
        let mut errs = Vec::with_capacity(spec.ns.len());
        let mut bound = Vec::with_capacity(spec.ns.len());
        for (op, n) in p.terms.iter().zip(&spec.ns) {
            let c = 1.0 + eps / *n as f64;
            let vn = t.f.scale(c);
            errs.push(sup_over(&spec.times, |s| {
                Ok(op
                    .integrated(s, &vn)?
                    .sub(&p.limit.integrated(s, &t.f)?)
                    .sup_norm())
            })?);
            if monotone {
                bound.push(sup_over(&spec.times, |s| {
                    let sn = op.integrated(s, &t.f)?;
                    Ok((c - 1.0).abs() * sn.sup_norm()
                        + sn.sub(&p.limit.integrated(s, &t.f)?).sup_norm())
                })?);
            }
        }
        let mut c = Curve::new(&t.id, "sup_t", &spec.ns, errs);
        if monotone {
            c = c.with_bound(bound);
        }
        curves.push(c);
    }
    if !data_ok {
        return Err(Error::HypothesisFailed("v_n does not converge to v".into()));
    }
    audits.push(Audit::new(
        "data_convergence",
        true,
        "||v_n - v|| = |eps| ||v|| / n",
    ));
    Ok(ConvergenceReport::finish(
        spec,
        p.audit,
        true,
        audits,
        curves,
        Vec::new(),
    ))
}

/// Heat variant: `u_n(t) = P_t^n v_n` against `P_t v`.
pub fn run_heat_convergence(spec: &ExperimentSpec) -> Result<ConvergenceReport> {
    let Theorem::Heat { perturbation: eps } = spec.theorem else {
        return Err(Error::BadParameters("heat experiment expected".into()));
    };
    check_perturbation(eps)?;
    let p = prepare(
        spec,
        &[Hypothesis::Vague, Hypothesis::PotentialUniform],
        false,
    )?;
    let seq = &spec.sequence;
    let monotone = (seq.declares(Hypothesis::MonotoneUp) && monotone_ordered(&p, true))
        || (seq.declares(Hypothesis::MonotoneDown) && monotone_ordered(&p, false));
    let subset = support_subset(&p);
    if !(monotone || subset) {
        return Err(Error::HypothesisFailed(
            "heat convergence needs F_n within F or monotone measures".into(),
        ));
    }
    let mut curves = Vec::new();
    for t in &spec.tests {
        let mut errs = Vec::with_capacity(spec.ns.len());
        for (op, n) in p.terms.iter().zip(&spec.ns) {
            let vn = t.f.scale(1.0 + eps / *n as f64);
            errs.push(sup_over(&spec.times, |s| {
                Ok(op
                    .semigroup(s, &vn)?
                    .sub(&p.limit.semigroup(s, &t.f)?)
                    .sup_norm())
            })?);
        }
        curves.push(Curve::new(&t.id, "sup_t", &spec.ns, errs));
    }
    let audits = vec![Audit::new(
        "heat_hypothesis",
        true,
        format!("subset support {subset}, monotone {monotone}"),
    )];
    Ok(ConvergenceReport::finish(
        spec,
        p.audit,
        true,
        audits,
        curves,
        Vec::new(),
    ))
}

/// `|fdd(mu_n) - fdd(mu_inf)|` with the initial law equal to the measure itself.
pub fn run_fdd_convergence(spec: &ExperimentSpec) -> Result<ConvergenceReport> {
    let Theorem::Fdd { times, functions } = &spec.theorem else {
        return Err(Error::BadParameters("fdd experiment expected".into()));
    };
    for f in functions {
        spec.model.check_function(f)?;
    }
    let p = prepare(
        spec,
        &[Hypothesis::Vague, Hypothesis::PotentialUniform],
        false,
    )?;
    let subset = support_subset(&p);
    let mut hit_ok = true;
    for t in &spec.tests {
        let pf = p.limit.hitting(0.0, &t.f)?;
        let errs = p
            .terms
            .iter()
            .map(|op| Ok(op.hitting(0.0, &t.f)?.sub(&pf).sup_norm()))
            .collect::<Result<Vec<_>>>()?;
        hit_ok &= tends_to_zero_envelope(&spec.ns, &errs);
    }
    if !(subset || hit_ok) {
        return Err(Error::HypothesisFailed(
            "neither F_n within F nor uniform hitting convergence".into(),
        ));
    }
    let exact_inf = exact_fdd(p.limit.as_ref(), p.limit.measure(), times, functions)?;
    let mut exact = Vec::with_capacity(p.terms.len());
    for (op, mu) in p.terms.iter().zip(&p.measures) {
        exact.push(exact_fdd(op.as_ref(), mu, times, functions)?);
    }
    let errs = exact.iter().map(|v| (v - exact_inf).abs()).collect();
    let curves = vec![Curve::new(
        "fdd",
        format!("k={}", times.len()),
        &spec.ns,
        errs,
    )];
    let mut audits = vec![Audit::new(
        "fdd_hypothesis",
        true,
        format!("subset support {subset}, uniform hitting {hit_ok}"),
    )];
    if let (Some(cfg), Model::Chain(chain)) = (&spec.mc, &spec.model) {
        let mu = p.measures.last().unwrap();
        let masses = mu.masses().expect("chain measure").clone();
        let fns: Vec<DVector<f64>> = functions.iter().map(|f| f.values().clone()).collect();
        let e = pathsim::mc_fdd(chain, &masses, &masses, times, &fns, cfg)?;
        let z = e.z_score(*exact.last().unwrap());
        audits.push(Audit::new(
            "mc_fdd",
            z.abs() <= MC_Z_GATE,
            format!(
                "n = {}: exact {:.6e}, estimate {:.6e} +- {:.2e}, z = {z:.2}",
                spec.ns.last().unwrap(),
                exact.last().unwrap(),
                e.mean,
                e.stderr
            ),
        ));
    }
    Ok(ConvergenceReport::finish(
        spec,
        p.audit,
        true,
        audits,
        curves,
        Vec::new(),
    ))
}

/// Dispatch on the theorem selector.
pub fn run(spec: &ExperimentSpec) -> Result<ConvergenceReport> {
    match &spec.theorem {
        Theorem::Potential => run_potential_convergence(spec),
        Theorem::Integrated => run_integrated_convergence(spec),
        Theorem::Semigroup(mode) => run_semigroup_convergence(spec, *mode),
        Theorem::Hitting => run_hitting_convergence(spec),
        Theorem::Approximation => run_approximation(spec),
        Theorem::Evolution { .. } => run_evolution_convergence(spec),
        Theorem::Heat { .. } => run_heat_convergence(spec),
        Theorem::Fdd { .. } => run_fdd_convergence(spec),
    }
}

/// True when every error of every curve is below the zero threshold.
pub fn all_zero(report: &ConvergenceReport) -> bool {
    report
        .curves
        .iter()
        .all(|c| c.errors.iter().all(|e| *e <= ZERO_TOL))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{ChainModel, DiffusionModel, FunctionClass};
    use crate::measures::{make_sequence, SequenceParams};

    fn c2() -> Model {
        Model::Chain(
            ChainModel::from_rows(&[vec![-2.0, 1.0], vec![1.0, -2.0]], &[1.0, 1.0]).unwrap(),
        )
    }

    fn states(v: &[f64]) -> FunctionOnX {
        FunctionOnX::on_states(DVector::from_column_slice(v))
    }

    fn chain_spec(kind: SequenceKind, limit: &[f64], theorem: Theorem) -> ExperimentSpec {
        let limit = SmoothMeasure::chain(DVector::from_column_slice(limit)).unwrap();
        ExperimentSpec {
            name: "t".into(),
            model: c2(),
            sequence: make_sequence(kind, SequenceParams::default(), limit).unwrap(),
            tests: vec![
                TestFunction::new("e1", states(&[1.0, 0.0])),
                TestFunction::new("u", states(&[0.5, -1.0])),
            ],
            alphas: vec![1.0, 2.0],
            times: time_grid(DEFAULT_T_MAX, DEFAULT_T_POINTS).unwrap(),
            ns: (2..=64).collect(),
            theorem,
            mc: None,
            slope_band: None,
        }
    }

    #[test]
    fn grid_has_both_ends() {
        let g = time_grid(5.0, 50).unwrap();
        assert_eq!(g.len(), 50);
        assert_eq!((g[0], g[49]), (0.0, 5.0));
        assert!(time_grid(5.0, 1).is_err());
    }

    #[test]
    fn constant_sequence_is_all_zero() {
        for theorem in [
            Theorem::Potential,
            Theorem::Integrated,
            Theorem::Semigroup(SemigroupMode::Range),
            Theorem::Semigroup(SemigroupMode::Subset),
            Theorem::Semigroup(SemigroupMode::Monotone),
            Theorem::Hitting,
            Theorem::Approximation,
            Theorem::Evolution { perturbation: 0.0 },
            Theorem::Heat { perturbation: 0.0 },
        ] {
            let spec = chain_spec(SequenceKind::Constant, &[1.0, 0.0], theorem.clone());
            let r = run(&spec).unwrap();
            assert!(all_zero(&r), "{theorem:?}");
            assert!(r.passed, "{theorem:?}");
        }
    }

    #[test]
    fn full_support_scaling_family() {
        let spec = chain_spec(
            SequenceKind::MonotoneUp,
            &[1.0, 1.0],
            Theorem::Semigroup(SemigroupMode::FullSupport),
        );
        let r = run(&spec).unwrap();
        let Model::Chain(c) = c2() else {
            unreachable!()
        };
        // P^n_t = exp(t Q / c_n) on the full support.
        let u = states(&[1.0, 0.0]);
        let want: Vec<f64> = spec
            .ns
            .iter()
            .map(|n| {
                let cn = 1.0 - 1.0 / *n as f64;
                spec.times
                    .iter()
                    .map(|t| {
                        linalg::sup_norm(
                            &(c.transition(t / cn, u.values()) - c.transition(*t, u.values())),
                        )
                    })
                    .fold(0.0, f64::max)
            })
            .collect();
        let got = &r.curve("e1", "sup_t").unwrap().errors;
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(r.passed);
    }

    #[test]
    fn monotone_c2_errors_strictly_decrease() {
        let spec = chain_spec(
            SequenceKind::MonotoneUp,
            &[1.0, 0.0],
            Theorem::Semigroup(SemigroupMode::Monotone),
        );
        let r = run(&spec).unwrap();
        let e = &r.curve("e1", "sup_t").unwrap().errors;
        assert!(e.windows(2).all(|w| w[1] < w[0]));
        assert!(*e.last().unwrap() < 1e-2);
        // Closed form: sup_t |e^{-1.5 t / c_n} - e^{-1.5 t}| on the grid.
        let n = *spec.ns.last().unwrap() as f64;
        let cn = 1.0 - 1.0 / n;
        let want = spec
            .times
            .iter()
            .map(|t| ((-1.5 * t / cn).exp() - (-1.5 * t).exp()).abs())
            .fold(0.0, f64::max);
        assert!((e.last().unwrap() - want).abs() < 1e-13);
    }

    #[test]
    fn monotone_down_respects_triangle_bound() {
        let spec = chain_spec(
            SequenceKind::MonotoneDown,
            &[1.0, 0.0],
            Theorem::Semigroup(SemigroupMode::Monotone),
        );
        let r = run(&spec).unwrap();
        assert!(r.curves.iter().all(|c| c.bound_ok == Some(true)));
        let h = run(&chain_spec(
            SequenceKind::MonotoneDown,
            &[1.0, 0.0],
            Theorem::Hitting,
        ))
        .unwrap();
        assert!(h
            .audits
            .iter()
            .any(|a| a.name == "hitting_decreasing" && a.ok));
    }

    #[test]
    fn mode_mismatch_and_failed_hypothesis() {
        let d = DiffusionModel::new(199).unwrap();
        let spec = ExperimentSpec {
            name: "s".into(),
            model: Model::Diffusion(d),
            sequence: make_sequence(
                SequenceKind::ShiftedAtom,
                SequenceParams::default(),
                SmoothMeasure::dirac(0.5, 1.0).unwrap(),
            )
            .unwrap(),
            tests: vec![TestFunction::new("one", d.constant(1.0))],
            alphas: vec![1.0],
            times: time_grid(1.0, 5).unwrap(),
            ns: (3..=10).collect(),
            theorem: Theorem::Semigroup(SemigroupMode::Subset),
            mc: None,
            slope_band: None,
        };
        assert!(matches!(run(&spec), Err(Error::ModeMismatch(_))));
        let spec = ExperimentSpec {
            theorem: Theorem::Semigroup(SemigroupMode::Monotone),
            ..spec
        };
        assert!(matches!(run(&spec), Err(Error::ModeMismatch(_))));
        let spec = ExperimentSpec {
            theorem: Theorem::Heat { perturbation: 0.0 },
            ..spec
        };
        assert!(matches!(run(&spec), Err(Error::HypothesisFailed(_))));
        let partial = chain_spec(
            SequenceKind::Constant,
            &[1.0, 0.0],
            Theorem::Semigroup(SemigroupMode::FullSupport),
        );
        assert!(matches!(run(&partial), Err(Error::HypothesisFailed(_))));
    }

    #[test]
    fn shifted_atom_potential_and_hitting() {
        let d = DiffusionModel::new(999).unwrap();
        let spec = ExperimentSpec {
            name: "s".into(),
            model: Model::Diffusion(d),
            sequence: make_sequence(
                SequenceKind::ShiftedAtom,
                SequenceParams::default(),
                SmoothMeasure::dirac(0.5, 1.0).unwrap(),
            )
            .unwrap(),
            tests: vec![TestFunction::new("one", d.constant(1.0))],
            alphas: vec![1.0],
            times: time_grid(1.0, 5).unwrap(),
            ns: (3..=64).collect(),
            theorem: Theorem::Potential,
            mc: None,
            slope_band: None,
        };
        let r = run(&spec).unwrap();
        let g = r.curve("one", "G").unwrap();
        for (n, e) in g.ns.iter().zip(&g.errors) {
            assert!(*e <= 2.0 / *n as f64);
            assert!((e - 1.0 / *n as f64).abs() < 1e-12);
        }
        assert!((g.slope.unwrap() + 1.0).abs() < 1e-6);
        assert_eq!(g.bound_ok, Some(true));

        let h = run(&ExperimentSpec {
            theorem: Theorem::Hitting,
            tests: vec![TestFunction::new(
                "sin",
                d.sample(|x| (std::f64::consts::PI * x).sin(), FunctionClass::C0),
            )],
            ..spec
        })
        .unwrap();
        let c = &h.curves[0];
        assert!(c.subsequence.is_some() && c.converges);
    }

    #[test]
    fn approximation_on_single_state_support() {
        let spec = chain_spec(
            SequenceKind::MonotoneUp,
            &[1.0, 0.0],
            Theorem::Approximation,
        );
        let r = run(&spec).unwrap();
        assert!(r.audits[0].ok);
        // Scalar trace generators -1.5 / c_n against -1.5.
        let c = r.curve("e1", "V_alpha=1").unwrap();
        for (n, e) in c.ns.iter().zip(&c.errors) {
            let cn = 1.0 - 1.0 / *n as f64;
            let want = (1.0 / (1.0 + 1.5 / cn) - 1.0 / 2.5).abs();
            assert!((e - want).abs() < 1e-14);
        }
    }

    #[test]
    fn evolution_triangle_bound_and_heat_equality() {
        let spec = chain_spec(
            SequenceKind::MonotoneUp,
            &[1.0, 1.0],
            Theorem::Evolution { perturbation: 1.0 },
        );
        let r = run(&spec).unwrap();
        assert!(r.curves.iter().all(|c| c.bound_ok == Some(true)));
        let heat = run(&ExperimentSpec {
            theorem: Theorem::Heat { perturbation: 0.0 },
            ..spec.clone()
        })
        .unwrap();
        let sg = run(&ExperimentSpec {
            theorem: Theorem::Semigroup(SemigroupMode::FullSupport),
            ..spec
        })
        .unwrap();
        assert_eq!(heat.curves[0].errors, sg.curves[0].errors);
    }

    #[test]
    fn fdd_scalar_difference() {
        let ind = states(&[1.0, 0.0]);
        let theorem = Theorem::Fdd {
            times: vec![1.0],
            functions: vec![ind.clone(), ind],
        };
        let spec = chain_spec(SequenceKind::MonotoneUp, &[1.0, 0.0], theorem);
        let r = run(&spec).unwrap();
        for (n, e) in r.curves[0].ns.iter().zip(&r.curves[0].errors) {
            let cn = 1.0 - 1.0 / *n as f64;
            let want = (cn * (-1.5 / cn).exp() - (-1.5f64).exp()).abs();
            assert!((e - want).abs() < 1e-14);
        }
    }

    #[test]
    fn extend_round_trip() {
        let model = c2();
        let ops = model
            .operators(&SmoothMeasure::chain(DVector::from_vec(vec![1.0, 0.0])).unwrap())
            .unwrap();
        let h = DVector::from_vec(vec![0.3]);
        let u = extend(ops.as_ref(), &h).unwrap();
        assert_eq!(u.values().as_slice(), &[0.3, 0.0]);
        let d = DiffusionModel::new(99).unwrap();
        let ops = Model::Diffusion(d)
            .operators(&SmoothMeasure::dirac(0.5, 1.0).unwrap())
            .unwrap();
        let tent = extend(ops.as_ref(), &DVector::from_vec(vec![1.0])).unwrap();
        assert_eq!(tent.eval(0.5), 1.0);
        assert!((tent.eval(0.25) - 0.5).abs() < 1e-15);
    }
}
