use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::kernel::{ChainModel, DiffusionModel, Domain, FunctionClass, FunctionOnX};
use crate::measures::{self, FineSupport, KatoReport, SmoothMeasure};
use crate::timechange::{ChainTimeChange, DiffusionTimeChange, TimeChangedOperators};

/// Either backend, as selected by a run configuration.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Chain(ChainModel),
    Diffusion(DiffusionModel),
}

impl Model {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Chain(_) => "chain",
            Self::Diffusion(_) => "diffusion",
        }
    }

    /// Number of states or grid nodes.
    pub fn dim(&self) -> usize {
        match self {
            Self::Chain(c) => c.len(),
            Self::Diffusion(d) => d.grid_size(),
        }
    }

    pub fn constant(&self, c: f64) -> FunctionOnX {
        match self {
            Self::Chain(m) => FunctionOnX::on_states(DVector::from_element(m.len(), c)),
            Self::Diffusion(d) => d.constant(c),
        }
    }

    pub fn function(&self, values: DVector<f64>, class: FunctionClass) -> Result<FunctionOnX> {
        if values.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "function of length {}, model dimension {}",
                values.len(),
                self.dim()
            )));
        }
        Ok(match self {
            Self::Chain(_) => FunctionOnX::on_states(values),
            Self::Diffusion(_) => FunctionOnX::on_grid(values, class),
        })
    }

    pub fn check_function(&self, u: &FunctionOnX) -> Result<()> {
        let domain = match self {
            Self::Chain(_) => Domain::States,
            Self::Diffusion(_) => Domain::Grid,
        };
        if u.domain() != domain || u.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "function of length {} does not live on this {} model",
                u.len(),
                self.name()
            )));
        }
        if !u.is_finite() {
            return Err(Error::BadParameters(
                "function has non-finite values".into(),
            ));
        }
        Ok(())
    }

    /// `int f dm` with respect to the reference measure.
    pub fn integrate_reference(&self, f: &FunctionOnX) -> Result<f64> {
        self.check_function(f)?;
        Ok(match self {
            Self::Chain(c) => c.ref_measure().dot(f.values()),
            Self::Diffusion(d) => d.integrate(f),
        })
    }

    /// The reference measure itself as a smooth measure.
    pub fn reference_measure(&self) -> SmoothMeasure {
        match self {
            Self::Chain(c) => SmoothMeasure::Chain(c.ref_measure().clone()),
            Self::Diffusion(d) => SmoothMeasure::lebesgue(d),
        }
    }

    /// Fixed family of compactly supported continuous test functions: state
    /// indicators on the chain, and hats of half-width 0.1 centred at
    /// 0.1, ..., 0.9 on the interval.
    pub fn vague_test_functions(&self) -> Vec<FunctionOnX> {
        match self {
            Self::Chain(c) => (0..c.len())
                .map(|i| {
                    let mut v = DVector::zeros(c.len());
                    v[i] = 1.0;
                    FunctionOnX::on_states(v)
                })
                .collect(),
            Self::Diffusion(d) => (1..10)
                .map(|k| {
                    let c = k as f64 / 10.0;
                    let hat = move |x: f64| (1.0 - (x - c).abs() / 0.1).max(0.0);
                    d.sample(hat, FunctionClass::C0).with_knots(vec![
                        (c - 0.1, 0.0),
                        (c, 1.0),
                        (c + 0.1, 0.0),
                    ])
                })
                .collect(),
        }
    }

    pub fn fine_support(&self, mu: &SmoothMeasure) -> Result<FineSupport> {
        measures::fine_support(self, mu)
    }

    pub fn is_green_kato(&self, mu: &SmoothMeasure, tol: f64) -> Result<KatoReport> {
        measures::is_green_kato(self, mu, tol)
    }

    /// Time-changed operators of `mu` on this backend.
    pub fn operators(&self, mu: &SmoothMeasure) -> Result<Box<dyn TimeChangedOperators>> {
        match self {
            Self::Chain(c) => Ok(Box::new(ChainTimeChange::new(c.clone(), mu)?)),
            Self::Diffusion(d) => Ok(Box::new(DiffusionTimeChange::new(*d, mu)?)),
        }
    }
}
