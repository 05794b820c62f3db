use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use nalgebra::{DMatrix, DVector};

use super::{validate_trace, ExtensionKind, MatrixCache, TimeChangedOperators, TraceGenerator};
use crate::error::{Error, Result};
use crate::kernel::{DiffusionModel, Domain, FunctionClass, FunctionOnX};
use crate::linalg::Factored;
use crate::measures::{fine_support, FineSupport, SmoothMeasure};
use crate::model::Model;
use crate::potential::diffusion as pd;

/// Time change of killed Brownian motion by the additive functional of `mu`.
/// Resolvent-level operators accept any atoms-plus-density measure; semigroup
/// operators need finitely many atoms (a gap diffusion).
#[derive(Debug)]
pub struct DiffusionTimeChange {
    model: DiffusionModel,
    mu: SmoothMeasure,
    support: FineSupport,
    intervals: Vec<(f64, f64)>,
    nodes: pd::Nodes,
    kernel: DMatrix<f64>,
    factors: RwLock<HashMap<u64, Arc<Factored>>>,
    trace: OnceLock<std::result::Result<TraceGenerator, Error>>,
    exp: MatrixCache,
}

impl DiffusionTimeChange {
    pub fn new(model: DiffusionModel, mu: &SmoothMeasure) -> Result<Self> {
        if mu.is_chain() {
            return Err(Error::BackendMismatch(
                "diffusion model needs an interval measure".into(),
            ));
        }
        let support = fine_support(&Model::Diffusion(model), mu)?;
        let FineSupport::Closed(intervals) = support.clone() else {
            unreachable!()
        };
        let nodes = pd::Nodes::new(&model, mu);
        let kernel = nodes.kernel();
        Ok(Self {
            model,
            mu: mu.clone(),
            support,
            intervals,
            nodes,
            kernel,
            factors: RwLock::new(HashMap::new()),
            trace: OnceLock::new(),
            exp: MatrixCache::default(),
        })
    }

    fn check(&self, u: &FunctionOnX) -> Result<()> {
        if u.domain() != Domain::Grid || u.len() != self.model.grid_size() {
            return Err(Error::DimensionMismatch(format!(
                "function of length {} on a grid of {} nodes",
                u.len(),
                self.model.grid_size()
            )));
        }
        Ok(())
    }

    fn factor(&self, alpha: f64) -> Result<Arc<Factored>> {
        let key = alpha.to_bits();
        if let Some(f) = self.factors.read().expect("cache lock poisoned").get(&key) {
            return Ok(Arc::clone(f));
        }
        let f = Arc::new(pd::factor(&self.nodes, &self.kernel, alpha)?);
        self.factors
            .write()
            .expect("cache lock poisoned")
            .entry(key)
            .or_insert_with(|| Arc::clone(&f));
        Ok(f)
    }

    fn atoms_only(&self) -> Result<()> {
        if self.mu.is_atomic() {
            Ok(())
        } else {
            Err(Error::Unsupported(
                "semigroup operators on the interval need a purely atomic measure".into(),
            ))
        }
    }

    fn build_trace(&self) -> Result<TraceGenerator> {
        self.atoms_only()?;
        let l = pd::atom_trace_generator(self.mu.atoms());
        let validation_residual = validate_trace(self, &l)?;
        Ok(TraceGenerator {
            support: self.support.clone(),
            density: DVector::from_iterator(
                self.mu.atoms().len(),
                self.mu.atoms().iter().map(|a| a.w),
            ),
            matrix: l,
            validation_residual,
        })
    }
}

impl TimeChangedOperators for DiffusionTimeChange {
    fn measure(&self) -> &SmoothMeasure {
        &self.mu
    }

    fn support(&self) -> &FineSupport {
        &self.support
    }

    fn potential(&self, u: &FunctionOnX) -> Result<FunctionOnX> {
        self.check(u)?;
        Ok(pd::potential(&self.model, &self.mu, 0.0, u))
    }

    fn resolvent(&self, alpha: f64, u: &FunctionOnX) -> Result<FunctionOnX> {
        self.check(u)?;
        if !(alpha >= 0.0) {
            return Err(Error::BadParameters(format!("rate {alpha} must be >= 0")));
        }
        let lu = if alpha > 0.0 && self.nodes.len() > 1 {
            Some(self.factor(alpha)?)
        } else {
            None
        };
        pd::resolvent(
            &self.model,
            &self.mu,
            &self.nodes,
            &self.kernel,
            lu.as_deref(),
            alpha,
            u,
        )
    }

    fn hitting(&self, alpha: f64, u: &FunctionOnX) -> Result<FunctionOnX> {
        self.check(u)?;
        Ok(pd::hitting(&self.model, &self.intervals, alpha, u))
    }

    fn trace(&self) -> Result<&TraceGenerator> {
        self.trace
            .get_or_init(|| self.build_trace())
            .as_ref()
            .map_err(Clone::clone)
    }

    fn restrict(&self, u: &FunctionOnX) -> Result<DVector<f64>> {
        self.check(u)?;
        self.atoms_only()?;
        let atoms = self.mu.atoms();
        Ok(DVector::from_iterator(
            atoms.len(),
            atoms.iter().map(|a| u.eval(a.x)),
        ))
    }

    fn extend(&self, h: &DVector<f64>, kind: ExtensionKind) -> Result<FunctionOnX> {
        self.atoms_only()?;
        let atoms = self.mu.atoms();
        if h.len() != atoms.len() {
            return Err(Error::ExtensionFailed(format!(
                "vector of length {} on {} atoms",
                h.len(),
                atoms.len()
            )));
        }
        let knots: Vec<(f64, f64)> = atoms.iter().zip(h.iter()).map(|(a, v)| (a.x, *v)).collect();
        // Piecewise-linear interpolant through the atoms, zero at both ends.
        let interp = |x: f64| pinned_interp(&knots, x);
        let scale = h.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let values = match kind {
            ExtensionKind::Zero => {
                DVector::from_iterator(self.model.grid_size(), self.model.nodes().map(interp))
            }
            ExtensionKind::Alternate => {
                // Add a C0 bump vanishing on F: the distance to F ∪ {0, 1}.
                DVector::from_iterator(
                    self.model.grid_size(),
                    self.model.nodes().map(|x| {
                        let d = atoms
                            .iter()
                            .map(|a| (x - a.x).abs())
                            .fold(x.min(1.0 - x), f64::min);
                        interp(x) + 0.7 * scale.max(1.0) * d
                    }),
                )
            }
        };
        Ok(FunctionOnX::on_grid(values, FunctionClass::C0).with_knots(knots))
    }

    fn exp_cache(&self) -> &MatrixCache {
        &self.exp
    }
}

/// Linear interpolation through sorted `(x, v)` with `v = 0` at `0` and `1`.
fn pinned_interp(knots: &[(f64, f64)], x: f64) -> f64 {
    let pos = knots.partition_point(|k| k.0 < x);
    if let Some(k) = knots.get(pos) {
        if k.0 == x {
            return k.1;
        }
    }
    let (lx, lv) = if pos == 0 { (0.0, 0.0) } else { knots[pos - 1] };
    let (rx, rv) = knots.get(pos).copied().unwrap_or((1.0, 0.0));
    lv + (rv - lv) * (x - lx) / (rx - lx)
}
