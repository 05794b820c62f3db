use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use tclab::{ChainModel, FunctionOnX, Model, SmoothMeasure, TimeChangedOperators};

const TOL: f64 = 1e-9;

/// Transient irreducible chain: a directed cycle plus random edges and killing.
fn chain() -> impl Strategy<Value = Model> {
    (2usize..6).prop_flat_map(|n| {
        (
            prop::collection::vec(0.0..2.0f64, n * n),
            prop::collection::vec(0.1..1.0f64, n),
            prop::collection::vec(0.2..3.0f64, n),
        )
            .prop_map(move |(off, kill, m)| {
                let mut q = DMatrix::zeros(n, n);
                for i in 0..n {
                    for j in 0..n {
                        if i != j {
                            q[(i, j)] = off[i * n + j] + if j == (i + 1) % n { 0.5 } else { 0.0 };
                        }
                    }
                    q[(i, i)] = -(q.row(i).sum() + kill[i]);
                }
                Model::Chain(ChainModel::new(q, DVector::from_vec(m)).unwrap())
            })
    })
}

/// Model, measure charging at least one state, test function.
fn case() -> impl Strategy<Value = (Model, SmoothMeasure, FunctionOnX)> {
    chain().prop_flat_map(|model| {
        let n = model.dim();
        (
            Just(model),
            prop::collection::vec(prop_oneof![Just(0.0), 0.1..3.0f64], n),
            0..n,
            prop::collection::vec(-2.0..2.0f64, n),
        )
            .prop_map(|(model, mut mu, k, u)| {
                mu[k] = mu[k].max(0.5);
                let mu = SmoothMeasure::chain(DVector::from_vec(mu)).unwrap();
                (model, mu, FunctionOnX::on_states(DVector::from_vec(u)))
            })
    })
}

fn dist(a: &FunctionOnX, b: &FunctionOnX) -> f64 {
    (a.values() - b.values()).amax()
}

fn ops(model: &Model, mu: &SmoothMeasure) -> Box<dyn TimeChangedOperators> {
    model.operators(mu).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn resolvent_identity((model, mu, u) in case(), a in 0.0..10.0f64, b in 0.0..10.0f64) {
        let ops = ops(&model, &mu);
        let ra = ops.resolvent(a, &u).unwrap();
        let rb = ops.resolvent(b, &u).unwrap();
        let rab = ops.resolvent(a, &rb).unwrap();
        let lhs = ra.sub(&rb);
        let rhs = rab.scale(b - a);
        prop_assert!(dist(&lhs, &rhs) <= TOL * (1.0 + u.sup_norm()));
    }

    #[test]
    fn sub_markov((model, mu, _u) in case(), a in 0.1..10.0f64, t in 0.0..5.0f64) {
        let ops = ops(&model, &mu);
        let one = model.constant(1.0);
        let r = ops.resolvent(a, &one).unwrap().scale(a);
        prop_assert!(r.values().iter().all(|v| *v >= -TOL && *v <= 1.0 + TOL));
        let p = ops.semigroup(t, &one).unwrap();
        prop_assert!(p.values().iter().all(|v| *v >= -TOL && *v <= 1.0 + TOL));
    }

    #[test]
    fn semigroup_law((model, mu, u) in case(), s in 0.0..3.0f64, t in 0.0..3.0f64) {
        let ops = ops(&model, &mu);
        let direct = ops.semigroup(s + t, &u).unwrap();
        let composed = ops.semigroup(s, &ops.semigroup(t, &u).unwrap()).unwrap();
        prop_assert!(dist(&direct, &composed) <= TOL * (1.0 + u.sup_norm()));
    }

    #[test]
    fn hitting_is_idempotent((model, mu, u) in case(), a in 0.0..5.0f64) {
        let ops = ops(&model, &mu);
        let once = ops.hitting(0.0, &u).unwrap();
        let twice = ops.hitting(0.0, &once).unwrap();
        prop_assert!(dist(&once, &twice) <= TOL * (1.0 + u.sup_norm()));
        // The alpha-hitting operator fixes functions on F, so P_F^a P_F u = P_F^a u.
        let pa = ops.hitting(a, &u).unwrap();
        let pa_once = ops.hitting(a, &once).unwrap();
        prop_assert!(dist(&pa, &pa_once) <= TOL * (1.0 + u.sup_norm()));
    }

    #[test]
    fn degenerate_functions_are_annihilated((model, mu, u) in case(), a in 0.0..10.0f64, t in 0.0..5.0f64) {
        let masses = mu.masses().unwrap();
        let off: DVector<f64> = DVector::from_fn(u.len(), |i, _| if masses[i] > 0.0 { 0.0 } else { u.values()[i] });
        let off = FunctionOnX::on_states(off);
        let ops = ops(&model, &mu);
        prop_assert!(ops.resolvent(a, &off).unwrap().sup_norm() <= 1e-14);
        prop_assert!(ops.semigroup(t, &off).unwrap().sup_norm() <= 1e-14);
        prop_assert!(ops.integrated(t, &off).unwrap().sup_norm() <= 1e-14);
    }

    #[test]
    fn sup_over_time_grows_under_refinement((model, mu, u) in case(), k in 3usize..20, t_max in 0.5..6.0f64) {
        let limit = ops(&model, &mu);
        let near = ops(&model, &mu.scaled(0.9));
        let coarse = tclab::lab::time_grid(t_max, k).unwrap();
        let fine = tclab::lab::time_grid(t_max, 2 * k - 1).unwrap();
        let sup = |grid: &[f64]| {
            grid.iter()
                .map(|t| dist(&near.semigroup(*t, &u).unwrap(), &limit.semigroup(*t, &u).unwrap()))
                .fold(0.0, f64::max)
        };
        prop_assert!(sup(&fine) >= sup(&coarse) - 1e-15);
    }

    #[test]
    fn trace_generator_reproduces_the_resolvent((model, mu, _u) in case(), a in 0.1..10.0f64) {
        let ops = ops(&model, &mu);
        let k = ops.trace().unwrap().dim();
        for j in 0..k {
            let mut h = DVector::zeros(k);
            h[j] = 1.0;
            let u = ops.extend(&h, tclab::timechange::ExtensionKind::Zero).unwrap();
            let lhs = ops.restricted_resolvent(a, &h).unwrap();
            let rhs = ops.restrict(&ops.resolvent(a, &u).unwrap()).unwrap();
            prop_assert!((lhs - rhs).amax() <= TOL);
        }
    }
}
