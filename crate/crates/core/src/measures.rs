//! Smooth measures, fine supports, Kato membership and measure sequences.
//!
//! On the chain a measure is a nonnegative mass vector. On the interval it is a
//! finite list of atoms plus an optional density sampled on the model grid; the
//! density contributes weight `h * rho_i` at node `i`, which is the trapezoid
//! rule for integrands vanishing at both endpoints.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{DiffusionModel, FunctionClass, FunctionOnX};
use crate::model::Model;
use crate::potential;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub x: f64,
    pub w: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SmoothMeasure {
    /// Masses `mu_i` on the states of a chain.
    Chain(DVector<f64>),
    /// Atoms plus a density with respect to Lebesgue measure on the grid.
    Diffusion {
        atoms: Vec<Atom>,
        density: Option<DVector<f64>>,
    },
}

impl SmoothMeasure {
    pub fn chain(masses: DVector<f64>) -> Result<Self> {
        if let Some(i) = masses.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::BadParameters(format!(
                "mass at state {i} must be finite and >= 0"
            )));
        }
        Ok(Self::Chain(masses))
    }

    pub fn diffusion(mut atoms: Vec<Atom>, density: Option<DVector<f64>>) -> Result<Self> {
        for a in &atoms {
            if !(a.x > 0.0 && a.x < 1.0) {
                return Err(Error::BadParameters(format!(
                    "atom at {} lies outside (0, 1)",
                    a.x
                )));
            }
            if !(a.w > 0.0 && a.w.is_finite()) {
                return Err(Error::BadParameters(format!(
                    "atom weight {} must be > 0",
                    a.w
                )));
            }
        }
        if let Some(d) = &density {
            if d.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::BadParameters(
                    "density must be finite and >= 0".into(),
                ));
            }
        }
        atoms.sort_by(|a, b| a.x.total_cmp(&b.x));
        // Merge coincident atoms.
        let mut merged: Vec<Atom> = Vec::with_capacity(atoms.len());
        for a in atoms {
            match merged.last_mut() {
                Some(last) if last.x == a.x => last.w += a.w,
                _ => merged.push(a),
            }
        }
        let density = density.filter(|d| d.iter().any(|v| *v > 0.0));
        Ok(Self::Diffusion {
            atoms: merged,
            density,
        })
    }

    pub fn dirac(x: f64, w: f64) -> Result<Self> {
        Self::diffusion(vec![Atom { x, w }], None)
    }

    pub fn lebesgue(model: &DiffusionModel) -> Self {
        Self::Diffusion {
            atoms: Vec::new(),
            density: Some(DVector::from_element(model.grid_size(), 1.0)),
        }
    }

    pub fn is_chain(&self) -> bool {
        matches!(self, Self::Chain(_))
    }

    pub fn atoms(&self) -> &[Atom] {
        match self {
            Self::Chain(_) => &[],
            Self::Diffusion { atoms, .. } => atoms,
        }
    }

    pub fn density(&self) -> Option<&DVector<f64>> {
        match self {
            Self::Chain(_) => None,
            Self::Diffusion { density, .. } => density.as_ref(),
        }
    }

    pub fn masses(&self) -> Option<&DVector<f64>> {
        match self {
            Self::Chain(m) => Some(m),
            Self::Diffusion { .. } => None,
        }
    }

    pub fn is_atomic(&self) -> bool {
        matches!(self, Self::Diffusion { density: None, .. })
    }

    pub fn scaled(&self, c: f64) -> Self {
        assert!(c >= 0.0 && c.is_finite(), "scale must be finite and >= 0");
        match self {
            Self::Chain(m) => Self::Chain(m * c),
            Self::Diffusion { atoms, density } => {
                if c == 0.0 {
                    return Self::Diffusion {
                        atoms: Vec::new(),
                        density: None,
                    };
                }
                Self::Diffusion {
                    atoms: atoms.iter().map(|a| Atom { x: a.x, w: a.w * c }).collect(),
                    density: density.as_ref().map(|d| d * c),
                }
            }
        }
    }

    /// `int f dmu`.
    pub fn integrate(&self, f: &FunctionOnX) -> Result<f64> {
        match self {
            Self::Chain(m) => {
                if m.len() != f.len() {
                    return Err(Error::DimensionMismatch(format!(
                        "measure on {} states, function on {}",
                        m.len(),
                        f.len()
                    )));
                }
                Ok(m.dot(f.values()))
            }
            Self::Diffusion { atoms, density } => {
                let mut total: f64 = atoms.iter().map(|a| a.w * f.eval(a.x)).sum();
                if let Some(d) = density {
                    if d.len() != f.len() {
                        return Err(Error::DimensionMismatch(format!(
                            "density on {} nodes, function on {}",
                            d.len(),
                            f.len()
                        )));
                    }
                    let h = 1.0 / (d.len() as f64 + 1.0);
                    total += h * d.dot(f.values());
                }
                Ok(total)
            }
        }
    }

    /// Total mass (trapezoid for the density part).
    pub fn total_mass(&self) -> f64 {
        match self {
            Self::Chain(m) => m.sum(),
            Self::Diffusion { atoms, density } => {
                let d = density
                    .as_ref()
                    .map(|d| d.sum() / (d.len() as f64 + 1.0))
                    .unwrap_or(0.0);
                atoms.iter().map(|a| a.w).sum::<f64>() + d
            }
        }
    }

    /// `mu <= nu` setwise, compared through masses, atom weights and densities.
    pub fn le(&self, other: &Self, tol: f64) -> bool {
        match (self, other) {
            (Self::Chain(a), Self::Chain(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| *x <= y + tol)
            }
            (
                Self::Diffusion {
                    atoms: a,
                    density: da,
                },
                Self::Diffusion {
                    atoms: b,
                    density: db,
                },
            ) => {
                let atoms_ok = a.iter().all(|x| {
                    b.iter()
                        .find(|y| y.x == x.x)
                        .map(|y| x.w <= y.w + tol)
                        .unwrap_or(false)
                });
                let dens_ok = match (da, db) {
                    (None, _) => true,
                    (Some(_), None) => false,
                    (Some(p), Some(q)) => {
                        p.len() == q.len() && p.iter().zip(q).all(|(x, y)| *x <= y + tol)
                    }
                };
                atoms_ok && dens_ok
            }
            _ => false,
        }
    }
}

/// The fine support of a measure.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FineSupport {
    /// Membership mask over chain states.
    States(Vec<bool>),
    /// Disjoint closed intervals in `[0, 1]`, sorted; points are degenerate intervals.
    Closed(Vec<(f64, f64)>),
}

impl FineSupport {
    pub fn is_full(&self) -> bool {
        match self {
            Self::States(mask) => mask.iter().all(|b| *b),
            Self::Closed(iv) => iv.len() == 1 && iv[0].0 <= 0.0 && iv[0].1 >= 1.0,
        }
    }

    pub fn is_empty(&self) -> bool {
        match self {
            Self::States(mask) => !mask.iter().any(|b| *b),
            Self::Closed(iv) => iv.is_empty(),
        }
    }

    /// Closedness is automatic: the chain topology is discrete and the interval
    /// representation stores closures.
    pub fn is_closed(&self) -> bool {
        true
    }

    /// Finite set of points (chain states or interval atoms only).
    pub fn is_finite(&self) -> bool {
        match self {
            Self::States(_) => true,
            Self::Closed(iv) => iv.iter().all(|(a, b)| a == b),
        }
    }

    pub fn states(&self) -> Vec<usize> {
        match self {
            Self::States(mask) => mask
                .iter()
                .enumerate()
                .filter(|(_, b)| **b)
                .map(|(i, _)| i)
                .collect(),
            Self::Closed(_) => Vec::new(),
        }
    }

    pub fn points(&self) -> Vec<f64> {
        match self {
            Self::States(_) => Vec::new(),
            Self::Closed(iv) => iv.iter().filter(|(a, b)| a == b).map(|(a, _)| *a).collect(),
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        match self {
            Self::States(mask) => {
                let i = x as usize;
                x >= 0.0 && x.fract() == 0.0 && mask.get(i).copied().unwrap_or(false)
            }
            Self::Closed(iv) => iv.iter().any(|(a, b)| *a <= x && x <= *b),
        }
    }

    pub fn contains_state(&self, i: usize) -> bool {
        match self {
            Self::States(mask) => mask.get(i).copied().unwrap_or(false),
            Self::Closed(_) => false,
        }
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        match (self, other) {
            (Self::States(a), Self::States(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| !*x || *y)
            }
            (Self::Closed(a), Self::Closed(_)) => a
                .iter()
                .all(|(l, r)| other_contains_interval(other, *l, *r)),
            _ => false,
        }
    }
}

fn other_contains_interval(other: &FineSupport, l: f64, r: f64) -> bool {
    match other {
        FineSupport::Closed(iv) => iv.iter().any(|(a, b)| *a <= l && r <= *b),
        FineSupport::States(_) => false,
    }
}

/// Fine support: states with positive mass, or the closure of the atoms and of
/// the positivity set of the (piecewise-linear) density.
pub fn fine_support(model: &Model, mu: &SmoothMeasure) -> Result<FineSupport> {
    match (model, mu) {
        (Model::Chain(c), SmoothMeasure::Chain(m)) => {
            if m.len() != c.len() {
                return Err(Error::DimensionMismatch(format!(
                    "measure on {} states, chain has {}",
                    m.len(),
                    c.len()
                )));
            }
            Ok(FineSupport::States(m.iter().map(|v| *v > 0.0).collect()))
        }
        (Model::Diffusion(d), SmoothMeasure::Diffusion { atoms, density }) => {
            let mut iv: Vec<(f64, f64)> = atoms.iter().map(|a| (a.x, a.x)).collect();
            if let Some(rho) = density {
                if rho.len() != d.grid_size() {
                    return Err(Error::DimensionMismatch(format!(
                        "density on {} nodes, grid has {}",
                        rho.len(),
                        d.grid_size()
                    )));
                }
                let n = rho.len();
                let mut i = 0;
                while i < n {
                    if rho[i] > 0.0 {
                        let mut j = i;
                        while j + 1 < n && rho[j + 1] > 0.0 {
                            j += 1;
                        }
                        let lo = if i == 0 { 0.0 } else { d.node(i - 1) };
                        let hi = if j == n - 1 { 1.0 } else { d.node(j + 1) };
                        iv.push((lo, hi));
                        i = j + 1;
                    } else {
                        i += 1;
                    }
                }
            }
            Ok(FineSupport::Closed(merge_intervals(iv)))
        }
        _ => Err(Error::BackendMismatch(
            "measure and model use different backends".into(),
        )),
    }
}

fn merge_intervals(mut iv: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    iv.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(iv.len());
    for (a, b) in iv {
        match out.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KatoReport {
    pub bounded: bool,
    pub kato: bool,
    pub sup: f64,
    /// Extrapolated `G^mu 1` at the left and right endpoints (zero on the chain).
    pub boundary_values: (f64, f64),
    /// Largest increment of `G^mu 1` between neighboring breakpoints, against its bound.
    pub max_increment: f64,
    pub increment_bound: f64,
}

/// G-bounded / G-Kato membership through `G^mu 1`.
pub fn is_green_kato(model: &Model, mu: &SmoothMeasure, tol: f64) -> Result<KatoReport> {
    let one = model.constant(1.0);
    let g1 = potential::potential_apply(model, mu, 0.0, &one)?;
    if !g1.is_finite() {
        return Err(Error::QuadratureFailure("G^mu 1 is not finite".into()));
    }
    let sup = g1.sup_norm();
    match model {
        Model::Chain(_) => Ok(KatoReport {
            bounded: true,
            kato: true,
            sup,
            boundary_values: (0.0, 0.0),
            max_increment: 0.0,
            increment_bound: 0.0,
        }),
        Model::Diffusion(d) => {
            let boundary_values = g1.boundary_extrapolation();
            let decay = g1.decays_at_boundary(tol);
            // Every breakpoint, in order, with the pinned endpoint values.
            let mut pts: Vec<(f64, f64)> = d
                .nodes()
                .zip(g1.values().iter().copied())
                .chain(g1.knots().iter().copied())
                .collect();
            pts.push((0.0, 0.0));
            pts.push((1.0, 0.0));
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut max_increment = 0.0_f64;
            let mut worst_ratio = 0.0_f64;
            for w in pts.windows(2) {
                let dv = (w[1].1 - w[0].1).abs();
                let dx = w[1].0 - w[0].0;
                max_increment = max_increment.max(dv);
                if dx > 0.0 {
                    worst_ratio = worst_ratio.max(dv / dx);
                }
            }
            // |d/dx G(x, y)| <= 2, so G^mu 1 is 2 mu(X)-Lipschitz.
            let lipschitz = 2.0 * mu.total_mass();
            let increment_bound = lipschitz * d.spacing();
            let continuous = worst_ratio <= lipschitz * (1.0 + 1e-9) + 1e-12;
            Ok(KatoReport {
                bounded: sup.is_finite(),
                kato: decay && continuous,
                sup,
                boundary_values,
                max_increment,
                increment_bound,
            })
        }
    }
}

pub const DEFAULT_KATO_TOL: f64 = 1e-3;

/// Hypotheses of the convergence theorems a sequence generator may guarantee.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hypothesis {
    Vague,
    PotentialUniform,
    ClosedSupports,
    SubsetSupport,
    SupersetSupport,
    MonotoneUp,
    MonotoneDown,
    FullSupport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceKind {
    ShiftedAtom,
    DiscretizedDensity,
    MonotoneUp,
    MonotoneDown,
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SequenceParams {
    /// Shifted atom: `mu_n = w delta_{x + shift / n}` around the limit atom `x`.
    pub shift: f64,
    /// Monotone families: `c_n = 1 - gap / n` (up) or `1 + gap / n` (down).
    pub gap: f64,
}

impl Default for SequenceParams {
    fn default() -> Self {
        Self {
            shift: 1.0,
            gap: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasureSequence {
    kind: SequenceKind,
    params: SequenceParams,
    limit: SmoothMeasure,
}

pub fn make_sequence(
    kind: SequenceKind,
    params: SequenceParams,
    limit: SmoothMeasure,
) -> Result<MeasureSequence> {
    if !params.shift.is_finite() || !params.gap.is_finite() || params.gap < 0.0 {
        return Err(Error::BadParameters(
            "sequence parameters must be finite, gap >= 0".into(),
        ));
    }
    match kind {
        SequenceKind::ShiftedAtom => {
            if limit.atoms().len() != 1 || limit.density().is_some() {
                return Err(Error::BadParameters(
                    "shifted_atom needs a single-atom limit".into(),
                ));
            }
        }
        SequenceKind::DiscretizedDensity => {
            if !limit.atoms().is_empty() || limit.density().is_none() {
                return Err(Error::BadParameters(
                    "discretized_density needs a pure density limit".into(),
                ));
            }
        }
        SequenceKind::MonotoneUp | SequenceKind::MonotoneDown if params.gap == 0.0 => {
            return Err(Error::BadParameters(
                "monotone families need gap > 0".into(),
            ));
        }
        _ => {}
    }
    Ok(MeasureSequence {
        kind,
        params,
        limit,
    })
}

impl MeasureSequence {
    pub fn kind(&self) -> SequenceKind {
        self.kind
    }

    pub fn params(&self) -> SequenceParams {
        self.params
    }

    pub fn limit(&self) -> &SmoothMeasure {
        &self.limit
    }

    /// Scale factor of the monotone families (1 otherwise).
    pub fn scale(&self, n: usize) -> f64 {
        let n = n as f64;
        match self.kind {
            SequenceKind::MonotoneUp => 1.0 - self.params.gap / n,
            SequenceKind::MonotoneDown => 1.0 + self.params.gap / n,
            _ => 1.0,
        }
    }

    pub fn term(&self, n: usize) -> Result<SmoothMeasure> {
        if n == 0 {
            return Err(Error::BadParameters("sequence index starts at 1".into()));
        }
        match self.kind {
            SequenceKind::Constant => Ok(self.limit.clone()),
            SequenceKind::MonotoneUp | SequenceKind::MonotoneDown => {
                let c = self.scale(n);
                if c < 0.0 {
                    return Err(Error::BadParameters(format!("scale {c} < 0 at n = {n}")));
                }
                Ok(self.limit.scaled(c))
            }
            SequenceKind::ShiftedAtom => {
                let a = self.limit.atoms()[0];
                let x = a.x + self.params.shift / n as f64;
                if !(x > 0.0 && x < 1.0) {
                    return Err(Error::BadParameters(format!(
                        "atom at {x} leaves (0, 1) at n = {n}"
                    )));
                }
                SmoothMeasure::dirac(x, a.w)
            }
            SequenceKind::DiscretizedDensity => {
                let rho = self.limit.density().expect("checked at construction");
                let f = FunctionOnX::on_grid(rho.clone(), FunctionClass::Bounded);
                let atoms = (1..=n)
                    .map(|k| {
                        let x = (k as f64 - 0.5) / n as f64;
                        Atom {
                            x,
                            w: f.eval(x) / n as f64,
                        }
                    })
                    .filter(|a| a.w > 0.0)
                    .collect();
                SmoothMeasure::diffusion(atoms, None)
            }
        }
    }

    /// Hypotheses this generator guarantees by construction.
    pub fn guarantees(&self) -> Vec<Hypothesis> {
        use Hypothesis::*;
        match self.kind {
            SequenceKind::Constant => vec![
                Vague,
                PotentialUniform,
                ClosedSupports,
                SubsetSupport,
                SupersetSupport,
                MonotoneUp,
                MonotoneDown,
                FullSupport,
            ],
            SequenceKind::MonotoneUp => vec![
                Vague,
                PotentialUniform,
                SubsetSupport,
                SupersetSupport,
                MonotoneUp,
            ],
            SequenceKind::MonotoneDown => vec![
                Vague,
                PotentialUniform,
                SubsetSupport,
                SupersetSupport,
                MonotoneDown,
            ],
            SequenceKind::ShiftedAtom => vec![Vague, PotentialUniform],
            SequenceKind::DiscretizedDensity => {
                let full = self
                    .limit
                    .density()
                    .map(|d| d.iter().all(|v| *v > 0.0))
                    .unwrap_or(false);
                if full {
                    vec![Vague, PotentialUniform, SubsetSupport]
                } else {
                    vec![Vague, PotentialUniform]
                }
            }
        }
    }

    pub fn declares(&self, h: Hypothesis) -> bool {
        self.guarantees().contains(&h)
    }
}

/// Absolute level below which an error curve counts as identically zero.
pub const ZERO_TOL: f64 = 1e-13;

/// Verdict on an error curve: identically zero, or the last value below a tenth of
/// the first with no increase over the final three values.
pub fn tends_to_zero(errors: &[f64]) -> bool {
    if errors.is_empty() {
        return false;
    }
    let scale = errors.iter().fold(0.0_f64, |a, e| a.max(e.abs()));
    if scale <= ZERO_TOL {
        return true;
    }
    let last = *errors.last().unwrap();
    if last <= ZERO_TOL {
        return true;
    }
    let k = errors.len();
    let tail_ok = errors[k.saturating_sub(3)..]
        .windows(2)
        .all(|w| w[1] <= w[0] * (1.0 + 1e-12));
    last < 0.1 * errors[0] && tail_ok
}

/// Witness verdict for residuals that oscillate or decay slowly in `n` (vague
/// residuals against hat functions). The tail envelope `e_k = max_{j >= k} r_j`
/// must vanish, drop below a tenth of its first value, or decay with a log-log
/// slope of at most `-1/2` over the second half of the indices.
pub fn tends_to_zero_envelope(ns: &[usize], errors: &[f64]) -> bool {
    if errors.is_empty() || ns.len() != errors.len() {
        return false;
    }
    let mut env = errors.iter().map(|e| e.abs()).collect::<Vec<_>>();
    for k in (0..env.len().saturating_sub(1)).rev() {
        env[k] = env[k].max(env[k + 1]);
    }
    let last = *env.last().unwrap();
    if last <= ZERO_TOL || last < 0.1 * env[0] {
        return true;
    }
    let half = env.len() / 2;
    let xs: Vec<f64> = ns[half..].iter().map(|n| *n as f64).collect();
    xs.len() >= 4 && crate::linalg::log_log_slope(&xs, &env[half..]).is_some_and(|s| s <= -0.5)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisReport {
    pub ns: Vec<usize>,
    /// `|int f dmu_n - int f dmu_inf|`, indexed `[n][test]`.
    pub vague_residuals: Vec<Vec<f64>>,
    /// `||G^{mu_n} 1 - G^{mu_inf} 1||_inf`.
    pub potential_errors: Vec<f64>,
    pub kato_ok: bool,
    pub vague_ok: bool,
    pub potential_ok: bool,
    pub declared: Vec<Hypothesis>,
}

impl HypothesisReport {
    pub fn passed(&self) -> bool {
        self.kato_ok && self.vague_ok && self.potential_ok
    }
}

/// Check vague convergence against `tests` (hat functions, a witness rather than a
/// proof) and uniform convergence of the potentials of `1`.
pub fn check_hypothesis(
    model: &Model,
    seq: &MeasureSequence,
    ns: &[usize],
    tests: &[FunctionOnX],
) -> Result<HypothesisReport> {
    if ns.len() < 2 || ns.contains(&0) {
        return Err(Error::BadParameters(
            "need at least two positive indices".into(),
        ));
    }
    let one = model.constant(1.0);
    let limit = seq.limit();
    let g_inf = potential::potential_apply(model, limit, 0.0, &one)?;
    let lim_int: Vec<f64> = tests
        .iter()
        .map(|f| limit.integrate(f))
        .collect::<Result<_>>()?;
    let mut kato_ok = is_green_kato(model, limit, DEFAULT_KATO_TOL)?.kato;
    let mut vague_residuals = Vec::with_capacity(ns.len());
    let mut potential_errors = Vec::with_capacity(ns.len());
    for &n in ns {
        let mu = seq.term(n)?;
        kato_ok &= is_green_kato(model, &mu, DEFAULT_KATO_TOL)?.kato;
        let row = tests
            .iter()
            .zip(&lim_int)
            .map(|(f, l)| Ok((mu.integrate(f)? - l).abs()))
            .collect::<Result<Vec<_>>>()?;
        vague_residuals.push(row);
        let g = potential::potential_apply(model, &mu, 0.0, &one)?;
        potential_errors.push(potential::sup_distance(&g, &g_inf));
    }
    let vague_ok = (0..tests.len()).all(|j| {
        let col: Vec<f64> = vague_residuals.iter().map(|r| r[j]).collect();
        tends_to_zero_envelope(ns, &col)
    });
    let potential_ok = tends_to_zero_envelope(ns, &potential_errors);
    Ok(HypothesisReport {
        ns: ns.to_vec(),
        vague_residuals,
        potential_errors,
        kato_ok,
        vague_ok,
        potential_ok,
        declared: seq.guarantees(),
    })
}
