use nalgebra::DVector;

use super::*;
use crate::kernel::{ChainModel, DiffusionModel, FunctionClass};
use crate::model::Model;

fn c2() -> Model {
    Model::Chain(ChainModel::from_rows(&[vec![-2.0, 1.0], vec![1.0, -2.0]], &[1.0, 1.0]).unwrap())
}

fn mu10() -> SmoothMeasure {
    SmoothMeasure::chain(DVector::from_vec(vec![1.0, 0.0])).unwrap()
}

fn states(v: &[f64]) -> FunctionOnX {
    FunctionOnX::on_states(DVector::from_column_slice(v))
}

#[test]
fn trace_generator_examples() {
    let ops = c2().operators(&mu10()).unwrap();
    let tr = ops.trace().unwrap();
    assert!((tr.matrix[(0, 0)] + 1.5).abs() < 1e-12);
    assert!(tr.validation_residual < 1e-12);

    let one = Model::Chain(ChainModel::from_rows(&[vec![-1.0]], &[1.0]).unwrap());
    let w = 2.5;
    let ops = one
        .operators(&SmoothMeasure::chain(DVector::from_vec(vec![w])).unwrap())
        .unwrap();
    assert!((ops.trace().unwrap().matrix[(0, 0)] + 1.0 / w).abs() < 1e-15);

    let full = SmoothMeasure::chain(DVector::from_vec(vec![1.0, 1.0])).unwrap();
    let ops = c2().operators(&full).unwrap();
    let Model::Chain(c) = c2() else {
        unreachable!()
    };
    assert!(linalg::max_abs(&(&ops.trace().unwrap().matrix - c.generator())) < 1e-14);
}

#[test]
fn semigroup_examples() {
    let ops = c2().operators(&mu10()).unwrap();
    let u = states(&[0.7, -4.0]);
    for t in [0.3, 1.0, 2.0] {
        let p = ops.semigroup(t, &u).unwrap();
        let e = (-1.5 * t).exp() * 0.7;
        assert!((p.values()[0] - e).abs() < 1e-14);
        assert!((p.values()[1] - 0.5 * e).abs() < 1e-14);
    }
    let off = states(&[0.0, 3.0]);
    assert!(ops
        .semigroup(1.0, &off)
        .unwrap()
        .values()
        .iter()
        .all(|v| *v == 0.0));
    // t = 0 is P_F, not the identity.
    let p0 = ops.semigroup(0.0, &u).unwrap();
    assert_eq!(p0.values()[0], 0.7);
    assert!((p0.values()[1] - 0.35).abs() < 1e-15);

    let full = SmoothMeasure::chain(DVector::from_vec(vec![1.0, 1.0])).unwrap();
    let ops = c2().operators(&full).unwrap();
    let Model::Chain(c) = c2() else {
        unreachable!()
    };
    let p = ops.semigroup(0.8, &u).unwrap();
    assert!(linalg::sup_norm(&(p.values() - c.transition(0.8, u.values()))) < 1e-13);
}

#[test]
fn restricted_examples() {
    let ops = c2().operators(&mu10()).unwrap();
    let h = DVector::from_vec(vec![2.0]);
    assert_eq!(ops.restricted_semigroup(0.0, &h).unwrap(), h);
    let v = ops.restricted_resolvent(0.5, &h).unwrap();
    assert!((v[0] - 2.0 / 2.0).abs() < 1e-15);
    let a = ops.extend(&h, ExtensionKind::Zero).unwrap();
    let b = ops.extend(&h, ExtensionKind::Alternate).unwrap();
    assert_ne!(a, b);
    let pa = ops.restrict(&ops.semigroup(1.3, &a).unwrap()).unwrap();
    let pb = ops.restrict(&ops.semigroup(1.3, &b).unwrap()).unwrap();
    assert!(linalg::sup_norm(&(pa - pb)) < 1e-12);
}

#[test]
fn integrated_examples() {
    let ops = c2().operators(&mu10()).unwrap();
    let u = states(&[1.2, 5.0]);
    assert_eq!(ops.integrated(0.0, &u).unwrap().sup_norm(), 0.0);
    for t in [0.5, 2.0] {
        let s = ops.integrated(t, &u).unwrap();
        assert!((s.values()[0] - (2.0 / 3.0) * (1.0 - (-1.5 * t).exp()) * 1.2).abs() < 1e-14);
    }
    let far = ops.integrated(60.0, &u).unwrap();
    let g = ops.potential(&u).unwrap();
    assert!(far.sub(&g).sup_norm() < 1e-12);
    for alpha in [1.0, 2.0, 5.0] {
        assert!(laplace_residual(ops.as_ref(), alpha, &u).unwrap() < LAPLACE_TOL);
    }
}

#[test]
fn membership_examples() {
    let ops = c2().operators(&mu10()).unwrap();
    let alpha = 1.5;
    let v = states(&[0.4, 2.0]);
    let u = ops.resolvent(alpha, &v).unwrap();
    let w = v.sub(&u.scale(alpha));
    assert!(relation_membership(ops.as_ref(), alpha, &u, &w).unwrap());
    let bad = u.add(&states(&[0.1, 0.0]));
    assert!(!relation_membership(ops.as_ref(), alpha, &bad, &w).unwrap());

    // Evolution: v - d/dt S_t v in L_rel S_t v.
    let t = 0.9;
    let s = ops.integrated(t, &v).unwrap();
    let ds = ops
        .integrated(t + FD_STEP, &v)
        .unwrap()
        .sub(&ops.integrated(t - FD_STEP, &v).unwrap())
        .scale(0.5 / FD_STEP);
    let w = v.sub(&ds);
    // Central differences carry O(h^2) error, above the 1e-9 membership gate.
    let r = ops.resolvent(alpha, &w.add(&s.scale(alpha))).unwrap();
    assert!(r.sub(&s).sup_norm() < 1e-7);
}

#[test]
fn heat_and_evolution_examples() {
    let ops = c2().operators(&mu10()).unwrap();
    let v = states(&[1.0, 0.0]);
    let e = evolution_solution(ops.as_ref(), &v, 0.0).unwrap();
    assert_eq!(e.value.sup_norm(), 0.0);
    let h = heat_solution(ops.as_ref(), &v, 1.0).unwrap();
    assert!(h.residual < 1e-6);
    assert!((h.value.values()[0] - (-1.5f64).exp()).abs() < 1e-14);
    let zero = heat_solution(ops.as_ref(), &states(&[0.0, 1.0]), 2.0).unwrap();
    assert_eq!(zero.value.sup_norm(), 0.0);
    let e1 = evolution_solution(ops.as_ref(), &v, 1.0).unwrap();
    assert!(e1.residual < 1e-6);
}

#[test]
fn fdd_examples() {
    let ops = c2().operators(&mu10()).unwrap();
    let ind = states(&[1.0, 0.0]);
    let val = exact_fdd(ops.as_ref(), &mu10(), &[1.0], &[ind.clone(), ind.clone()]).unwrap();
    assert!((val - (-1.5f64).exp()).abs() < 1e-14);
    let dx = SmoothMeasure::chain(DVector::from_vec(vec![0.0, 1.0])).unwrap();
    let one = states(&[1.0, 1.0]);
    let u1 = states(&[0.3, 0.9]);
    let val = exact_fdd(ops.as_ref(), &dx, &[0.7], &[one, u1.clone()]).unwrap();
    let want = ops.semigroup(0.7, &u1).unwrap().values()[1];
    assert!((val - want).abs() < 1e-15);
}

#[test]
fn strong_continuity_only_on_range() {
    let model = c2();
    let ops = model.operators(&mu10()).unwrap();
    let probes = crate::potential::probe_functions(&model);
    let times = [1e-1, 1e-2, 1e-3, 1e-4];
    let rep = strong_continuity_probe(ops.as_ref(), &probes, &times).unwrap();
    assert!(rep.on_range.last().unwrap() < &1e-3);
    assert!((rep.slope.unwrap() - 1.0).abs() < 0.1);
    // e_2 is not in P_F(C_0): P_t e_2 = 0 while e_2 has norm 1.
    assert!(rep.on_all.iter().all(|v| *v >= 1.0 - 1e-12));
}

#[test]
fn diffusion_atoms_semigroup() {
    let d = DiffusionModel::new(199).unwrap();
    let model = Model::Diffusion(d);
    let mu = SmoothMeasure::dirac(0.5, 1.0).unwrap();
    let ops = model.operators(&mu).unwrap();
    let tr = ops.trace().unwrap();
    assert!((tr.matrix[(0, 0)] + 2.0).abs() < 1e-14);
    let u = d.sample(|x| x * (1.0 - x), FunctionClass::C0);
    let p = ops.semigroup(0.5, &u).unwrap();
    let want = (-1.0f64).exp() * 0.25;
    assert!((p.eval(0.5) - want).abs() < 1e-14);
    assert!((p.eval(0.25) - want / 2.0).abs() < 1e-14);
    assert!(p.decays_at_boundary(1e-3));

    let two = SmoothMeasure::diffusion(
        vec![
            crate::measures::Atom { x: 0.2, w: 0.5 },
            crate::measures::Atom { x: 0.7, w: 2.0 },
        ],
        None,
    )
    .unwrap();
    let ops = model.operators(&two).unwrap();
    assert!(ops.trace().unwrap().validation_residual < 1e-9);
}

#[test]
fn diffusion_density_semigroup_is_unsupported() {
    let d = DiffusionModel::new(49).unwrap();
    let model = Model::Diffusion(d);
    let ops = model.operators(&SmoothMeasure::lebesgue(&d)).unwrap();
    assert!(matches!(
        ops.semigroup(1.0, &d.constant(1.0)),
        Err(Error::Unsupported(_))
    ));
    assert!(ops.resolvent(1.0, &d.constant(1.0)).is_ok());
}
