use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};

use super::{validate_trace, ExtensionKind, MatrixCache, TimeChangedOperators, TraceGenerator};
use crate::error::{Error, Result};
use crate::kernel::{ChainModel, Domain, FunctionOnX};
use crate::measures::{FineSupport, SmoothMeasure};
use crate::potential::chain as pc;

/// Time change of a finite chain by the additive functional of `mu`.
#[derive(Debug)]
pub struct ChainTimeChange {
    model: ChainModel,
    mu: SmoothMeasure,
    support: FineSupport,
    mask: Vec<bool>,
    f_idx: Vec<usize>,
    potential: DMatrix<f64>,
    hitting: DMatrix<f64>,
    trace: OnceLock<std::result::Result<TraceGenerator, Error>>,
    exp: MatrixCache,
    resolvents: MatrixCache,
}

impl ChainTimeChange {
    pub fn new(model: ChainModel, mu: &SmoothMeasure) -> Result<Self> {
        let SmoothMeasure::Chain(m) = mu else {
            return Err(Error::BackendMismatch(
                "chain model needs a chain measure".into(),
            ));
        };
        pc::check_masses(&model, m)?;
        let mask: Vec<bool> = m.iter().map(|v| *v > 0.0).collect();
        let (f_idx, _) = pc::partition(&mask);
        let potential = pc::potential_matrix(&model, m, 0.0)?;
        let hitting = pc::hitting_matrix(&model, &mask, 0.0)?;
        Ok(Self {
            support: FineSupport::States(mask.clone()),
            model,
            mu: mu.clone(),
            mask,
            f_idx,
            potential,
            hitting,
            trace: OnceLock::new(),
            exp: MatrixCache::default(),
            resolvents: MatrixCache::default(),
        })
    }

    pub fn model(&self) -> &ChainModel {
        &self.model
    }

    pub fn potential_matrix(&self) -> &DMatrix<f64> {
        &self.potential
    }

    pub fn hitting_matrix(&self) -> &DMatrix<f64> {
        &self.hitting
    }

    pub fn resolvent_matrix(&self, alpha: f64) -> Result<Arc<DMatrix<f64>>> {
        if !(alpha >= 0.0) {
            return Err(Error::BadParameters(format!("rate {alpha} must be >= 0")));
        }
        self.resolvents
            .get_or_compute(alpha, || pc::resolvent_matrix(&self.potential, alpha))
    }

    /// Dense `P_t` (with `P_0 = P_F`).
    pub fn semigroup_matrix(&self, t: f64) -> Result<DMatrix<f64>> {
        let n = self.model.len();
        let k = self.f_idx.len();
        if t == 0.0 {
            return Ok(self.hitting.clone());
        }
        let e = self.exp_trace(t)?;
        // Columns of P_F on F times exp(tL), scattered back into F columns.
        let pf_cols = DMatrix::from_fn(n, k, |i, j| self.hitting[(i, self.f_idx[j])]);
        let block = pf_cols * e.as_ref();
        let mut out = DMatrix::zeros(n, n);
        for (j, &fj) in self.f_idx.iter().enumerate() {
            out.set_column(fj, &block.column(j));
        }
        Ok(out)
    }

    fn check(&self, u: &FunctionOnX) -> Result<()> {
        if u.domain() != Domain::States || u.len() != self.model.len() {
            return Err(Error::DimensionMismatch(format!(
                "function of length {} on a chain with {} states",
                u.len(),
                self.model.len()
            )));
        }
        Ok(())
    }

    fn vanishes_on_support(&self, u: &FunctionOnX) -> bool {
        self.f_idx.iter().all(|i| u.values()[*i] == 0.0)
    }

    fn build_trace(&self) -> Result<TraceGenerator> {
        let SmoothMeasure::Chain(m) = &self.mu else {
            unreachable!()
        };
        let l = pc::schur_trace(&self.model, m, &self.mask)?;
        let validation_residual = validate_trace(self, &l)?;
        let a = pc::density(&self.model, m);
        Ok(TraceGenerator {
            support: self.support.clone(),
            density: DVector::from_iterator(self.f_idx.len(), self.f_idx.iter().map(|i| a[*i])),
            matrix: l,
            validation_residual,
        })
    }
}

impl TimeChangedOperators for ChainTimeChange {
    fn measure(&self) -> &SmoothMeasure {
        &self.mu
    }

    fn support(&self) -> &FineSupport {
        &self.support
    }

    fn potential(&self, u: &FunctionOnX) -> Result<FunctionOnX> {
        self.check(u)?;
        Ok(FunctionOnX::on_states(&self.potential * u.values()))
    }

    fn resolvent(&self, alpha: f64, u: &FunctionOnX) -> Result<FunctionOnX> {
        self.check(u)?;
        if self.vanishes_on_support(u) {
            return Ok(FunctionOnX::on_states(DVector::zeros(u.len())));
        }
        Ok(FunctionOnX::on_states(
            self.resolvent_matrix(alpha)?.as_ref() * u.values(),
        ))
    }

    fn hitting(&self, alpha: f64, u: &FunctionOnX) -> Result<FunctionOnX> {
        self.check(u)?;
        if alpha == 0.0 {
            return Ok(FunctionOnX::on_states(&self.hitting * u.values()));
        }
        let p = pc::hitting_matrix(&self.model, &self.mask, alpha)?;
        Ok(FunctionOnX::on_states(p * u.values()))
    }

    fn trace(&self) -> Result<&TraceGenerator> {
        self.trace
            .get_or_init(|| self.build_trace())
            .as_ref()
            .map_err(Clone::clone)
    }

    fn restrict(&self, u: &FunctionOnX) -> Result<DVector<f64>> {
        self.check(u)?;
        Ok(DVector::from_iterator(
            self.f_idx.len(),
            self.f_idx.iter().map(|i| u.values()[*i]),
        ))
    }

    fn extend(&self, h: &DVector<f64>, kind: ExtensionKind) -> Result<FunctionOnX> {
        if h.len() != self.f_idx.len() {
            return Err(Error::ExtensionFailed(format!(
                "vector of length {} on a support of size {}",
                h.len(),
                self.f_idx.len()
            )));
        }
        let n = self.model.len();
        let scale = h.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let mut v = match kind {
            ExtensionKind::Zero => DVector::zeros(n),
            ExtensionKind::Alternate => {
                DVector::from_fn(n, |i, _| 0.5 * scale * ((i + 1) as f64).sin())
            }
        };
        for (j, &i) in self.f_idx.iter().enumerate() {
            v[i] = h[j];
        }
        Ok(FunctionOnX::on_states(v))
    }

    fn exp_cache(&self) -> &MatrixCache {
        &self.exp
    }
}
