//! Killed Brownian motion: potentials by exact atom sums plus trapezoid on the
//! grid, the time-changed resolvent by a Nystrom solve, and hitting operators of
//! closed interval unions in closed form.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::kernel::{green0, green_alpha, sinh_ratio, DiffusionModel, FunctionClass, FunctionOnX};
use crate::linalg::Factored;
use crate::measures::{Atom, SmoothMeasure};

/// Quadrature nodes and weights carrying `mu`: the atoms, then every grid node
/// where the density is positive (weight `h * rho_i`).
#[derive(Debug, Clone, PartialEq)]
pub struct Nodes {
    pub x: Vec<f64>,
    pub w: Vec<f64>,
    /// Number of leading entries that are atoms.
    pub atoms: usize,
}

impl Nodes {
    pub fn new(model: &DiffusionModel, mu: &SmoothMeasure) -> Self {
        let mut x: Vec<f64> = mu.atoms().iter().map(|a| a.x).collect();
        let mut w: Vec<f64> = mu.atoms().iter().map(|a| a.w).collect();
        let atoms = x.len();
        if let Some(rho) = mu.density() {
            let h = model.spacing();
            for (i, r) in rho.iter().enumerate() {
                if *r > 0.0 {
                    x.push(model.node(i));
                    w.push(h * r);
                }
            }
        }
        Self { x, w, atoms }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Values of `u` at the nodes; atoms read through the interpolant, grid nodes
    /// read exactly.
    pub fn sample(&self, model: &DiffusionModel, u: &FunctionOnX) -> DVector<f64> {
        let h = model.spacing();
        DVector::from_iterator(
            self.len(),
            self.x.iter().enumerate().map(|(k, x)| {
                if k < self.atoms {
                    u.eval(*x)
                } else {
                    let i = (x / h).round() as usize - 1;
                    u.values()[i]
                }
            }),
        )
    }

    /// `K_kl = G(z_k, z_l) c_l`.
    pub fn kernel(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.len(), self.len(), |k, l| {
            green0(self.x[k], self.x[l]) * self.w[l]
        })
    }
}

/// Evaluate `x -> sum_l G_alpha(x, z_l) c_l f_l` on the grid, with knots at `knot_at`.
pub fn kernel_sum(
    model: &DiffusionModel,
    nodes: &Nodes,
    alpha: f64,
    f: &DVector<f64>,
    knot_at: &[f64],
) -> FunctionOnX {
    let coef: Vec<f64> = nodes.w.iter().zip(f.iter()).map(|(w, v)| w * v).collect();
    let at = |x: f64| -> f64 {
        nodes
            .x
            .iter()
            .zip(&coef)
            .filter(|(_, c)| **c != 0.0)
            .map(|(z, c)| green_alpha(alpha, x, *z) * c)
            .sum()
    };
    let values = DVector::from_iterator(model.grid_size(), model.nodes().map(at));
    let knots = knot_at.iter().map(|x| (*x, at(*x))).collect();
    FunctionOnX::on_grid(values, FunctionClass::C0).with_knots(knots)
}

fn atom_positions(atoms: &[Atom]) -> Vec<f64> {
    atoms.iter().map(|a| a.x).collect()
}

/// `G_alpha^mu u`.
pub fn potential(
    model: &DiffusionModel,
    mu: &SmoothMeasure,
    alpha: f64,
    u: &FunctionOnX,
) -> FunctionOnX {
    let nodes = Nodes::new(model, mu);
    let f = nodes.sample(model, u);
    kernel_sum(model, &nodes, alpha, &f, &atom_positions(mu.atoms()))
}

/// Factored `I + alpha K` for the Nystrom resolvent.
pub fn factor(nodes: &Nodes, kernel: &DMatrix<f64>, alpha: f64) -> Result<Factored> {
    let n = nodes.len();
    Factored::new(DMatrix::identity(n, n) + kernel * alpha)
}

/// `R_alpha u` from a factored `I + alpha K`: solve for the node values `w`,
/// then evaluate `sum_l G(x, z_l) c_l (u_l - alpha w_l)`.
pub fn resolvent(
    model: &DiffusionModel,
    mu: &SmoothMeasure,
    nodes: &Nodes,
    kernel: &DMatrix<f64>,
    lu: Option<&Factored>,
    alpha: f64,
    u: &FunctionOnX,
) -> Result<FunctionOnX> {
    let uz = nodes.sample(model, u);
    let knots = atom_positions(mu.atoms());
    if uz.iter().all(|v| *v == 0.0) {
        return Ok(kernel_sum(
            model,
            nodes,
            0.0,
            &DVector::zeros(nodes.len()),
            &knots,
        ));
    }
    if alpha == 0.0 {
        return Ok(kernel_sum(model, nodes, 0.0, &uz, &knots));
    }
    let density = if nodes.len() == 1 {
        // Rank one: u(z) / (1 + alpha G(z, z) c).
        let g = green0(nodes.x[0], nodes.x[0]) * nodes.w[0];
        DVector::from_element(1, uz[0] / (1.0 + alpha * g))
    } else {
        let owned;
        let lu = match lu {
            Some(lu) => lu,
            None => {
                owned = factor(nodes, kernel, alpha)?;
                &owned
            }
        };
        let w = lu.solve(&(kernel * &uz))?;
        &uz - w * alpha
    };
    Ok(kernel_sum(model, nodes, 0.0, &density, &knots))
}

/// `P_F^alpha u` for `F` a sorted union of closed intervals: `u` on `F`, and on each
/// gap the `alpha`-harmonic interpolant of the end values (zero at `0` and `1`).
pub fn hitting(
    model: &DiffusionModel,
    support: &[(f64, f64)],
    alpha: f64,
    u: &FunctionOnX,
) -> FunctionOnX {
    let k = (2.0 * alpha).sqrt();
    let end_value = |x: f64| if x <= 0.0 || x >= 1.0 { 0.0 } else { u.eval(x) };
    let at = |x: f64, exact: Option<f64>| -> f64 {
        let pos = support.partition_point(|iv| iv.1 < x);
        if let Some(iv) = support.get(pos) {
            if iv.0 <= x {
                return exact.unwrap_or_else(|| u.eval(x));
            }
        }
        let l = if pos == 0 { 0.0 } else { support[pos - 1].1 };
        let r = support.get(pos).map(|iv| iv.0).unwrap_or(1.0);
        let (ul, ur) = (end_value(l), end_value(r));
        let span = r - l;
        ul * sinh_ratio(k, r - x, span) + ur * sinh_ratio(k, x - l, span)
    };
    let values = DVector::from_iterator(
        model.grid_size(),
        model
            .nodes()
            .enumerate()
            .map(|(i, x)| at(x, Some(u.values()[i]))),
    );
    let mut knots: Vec<(f64, f64)> = support
        .iter()
        .flat_map(|iv| [iv.0, iv.1])
        .filter(|x| *x > 0.0 && *x < 1.0)
        .map(|x| (x, u.eval(x)))
        .collect();
    knots.extend(
        u.knots()
            .iter()
            .filter(|(x, _)| support.iter().any(|iv| iv.0 <= *x && *x <= iv.1))
            .copied(),
    );
    FunctionOnX::on_grid(values, FunctionClass::C0).with_knots(knots)
}

/// Generator of the trace on finitely many atoms `x_1 < ... < x_k` with weights
/// `w_i`: nearest-neighbour conductances `1 / (2 d)` of the harmonic extension,
/// Dirichlet at both ends, divided by the weights.
pub fn atom_trace_generator(atoms: &[Atom]) -> DMatrix<f64> {
    let k = atoms.len();
    let mut pos = Vec::with_capacity(k + 2);
    pos.push(0.0);
    pos.extend(atoms.iter().map(|a| a.x));
    pos.push(1.0);
    let mut l = DMatrix::zeros(k, k);
    for i in 0..k {
        let left = 0.5 / (pos[i + 1] - pos[i]);
        let right = 0.5 / (pos[i + 2] - pos[i + 1]);
        l[(i, i)] = -(left + right) / atoms[i].w;
        if i > 0 {
            l[(i, i - 1)] = left / atoms[i].w;
        }
        if i + 1 < k {
            l[(i, i + 1)] = right / atoms[i].w;
        }
    }
    l
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::bm_green;

    #[test]
    fn dirac_potential_is_green_column() {
        let d = DiffusionModel::new(99).unwrap();
        let mu = SmoothMeasure::dirac(0.5, 1.0).unwrap();
        let g = potential(&d, &mu, 0.0, &d.constant(1.0));
        for (i, x) in d.nodes().enumerate() {
            assert!((g.values()[i] - bm_green(x, 0.5).unwrap()).abs() < 1e-15);
        }
        assert!((g.eval(0.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn lebesgue_potential_of_one() {
        let d = DiffusionModel::new(1000).unwrap();
        let g = potential(&d, &SmoothMeasure::lebesgue(&d), 0.0, &d.constant(1.0));
        let err = d
            .nodes()
            .enumerate()
            .map(|(i, x)| (g.values()[i] - x * (1.0 - x)).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn rank_one_resolvent() {
        let d = DiffusionModel::new(199).unwrap();
        let mu = SmoothMeasure::dirac(0.5, 1.0).unwrap();
        let nodes = Nodes::new(&d, &mu);
        let k = nodes.kernel();
        let u = d.sample(|x| (3.0 * x).sin(), FunctionClass::C0);
        let alpha = 2.5;
        let r = resolvent(&d, &mu, &nodes, &k, None, alpha, &u).unwrap();
        let u_half = u.eval(0.5);
        for (i, x) in d.nodes().enumerate() {
            let want = bm_green(x, 0.5).unwrap() * u_half / (1.0 + alpha / 2.0);
            assert!((r.values()[i] - want).abs() < 1e-14);
        }
    }

    #[test]
    fn nystrom_matches_rank_one_path() {
        // Two atoms: compare the Nystrom branch with Sherman-Morrison done by hand
        // through the trace generator.
        let d = DiffusionModel::new(49).unwrap();
        let atoms = vec![Atom { x: 0.3, w: 0.7 }, Atom { x: 0.55, w: 1.3 }];
        let mu = SmoothMeasure::diffusion(atoms.clone(), None).unwrap();
        let nodes = Nodes::new(&d, &mu);
        let k = nodes.kernel();
        let u = d.sample(|x| 1.0 + x, FunctionClass::Bounded);
        let alpha = 1.7;
        let r = resolvent(&d, &mu, &nodes, &k, None, alpha, &u).unwrap();
        let l = atom_trace_generator(&atoms);
        let a = DMatrix::identity(2, 2) * alpha - l;
        let h = DVector::from_vec(vec![u.eval(0.3), u.eval(0.55)]);
        let want = a.lu().solve(&h).unwrap();
        assert!((r.eval(0.3) - want[0]).abs() < 1e-12);
        assert!((r.eval(0.55) - want[1]).abs() < 1e-12);
    }

    #[test]
    fn hitting_of_single_atom() {
        let d = DiffusionModel::new(99).unwrap();
        let u = d.sample(|x| x * x + 1.0, FunctionClass::Bounded);
        let p = hitting(&d, &[(0.5, 0.5)], 0.0, &u);
        assert!((p.eval(0.25) - u.eval(0.5) / 2.0).abs() < 1e-14);
        assert!((p.eval(0.5) - u.eval(0.5)).abs() < 1e-15);
        let phi = hitting(&d, &[(0.5, 0.5)], 1.0, &d.constant(1.0));
        assert!((phi.eval(0.5) - 1.0).abs() < 1e-15);
        assert!(phi.values().iter().all(|v| *v <= 1.0));
        assert!(phi.eval(0.25) < 1.0);
    }

    #[test]
    fn single_atom_trace_generator() {
        let l = atom_trace_generator(&[Atom { x: 0.5, w: 1.0 }]);
        assert!((l[(0, 0)] + 2.0).abs() < 1e-15);
    }
}
