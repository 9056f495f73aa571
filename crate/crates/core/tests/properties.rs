use proptest::prelude::*;

use hilbert_consensus::analysis::{certify_consensus, verify_diameter_decay, CertifyOptions};
use hilbert_consensus::dynamics::{
    factorize_on_grid, simulate, simulate_with, time_grid, Scheme, SimOptions, SystemModel,
};
use hilbert_consensus::graph::{
    accumulate, graph_geq, is_delta_connected, is_qsc, power_delta_bound, MetzlerMatrix, Quadrature, WeightedDigraph,
};
use hilbert_consensus::hilbert::{an_bn, cone_membership, hilbert_distance, minimal_gamma, Cone, StateVector};
use hilbert_consensus::linalg::Matrix;
use hilbert_consensus::topology::{
    chain_random_activation, dwell_time_signal, verify_accumulated_lower_bound, ChainActivationConfig,
    CheckpointSequence, LowerBound, LowerBoundMode, ScalarSignal, SwitchingSignal,
};

fn positive(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1e-3f64..1e3, n)
}

fn sized_positive() -> impl Strategy<Value = Vec<f64>> {
    (2usize..8).prop_flat_map(positive)
}

fn digraph(n: usize) -> impl Strategy<Value = WeightedDigraph> {
    prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..2.0], n * n).prop_map(move |w| {
        let mut g = WeightedDigraph::empty(n);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    g.set(i, j, w[i * n + j]).unwrap();
                }
            }
        }
        g
    })
}

fn sv(x: Vec<f64>) -> StateVector {
    StateVector::new(x).unwrap()
}

proptest! {
    #[test]
    fn distance_is_projective(x in sized_positive(), a in 1e-3f64..1e3, b in 1e-3f64..1e3) {
        let y: Vec<f64> = x.iter().rev().copied().collect();
        let d = hilbert_distance(&sv(x.clone()), &sv(y.clone())).unwrap().value();
        let ds = hilbert_distance(&sv(x.iter().map(|v| a * v).collect()), &sv(y.iter().map(|v| b * v).collect()))
            .unwrap()
            .value();
        prop_assert!((d - ds).abs() <= 1e-12 * d.max(1.0));
    }

    #[test]
    fn distance_is_symmetric_and_a_metric(n in 2usize..7, seed in any::<u64>()) {
        let mut r = hilbert_consensus::rng::stream(seed, "metric");
        use rand::Rng;
        let mut draw = || sv((0..n).map(|_| r.random_range(1e-2..10.0)).collect());
        let (x, y, z) = (draw(), draw(), draw());
        let d = |a: &StateVector, b: &StateVector| hilbert_distance(a, b).unwrap().value();
        prop_assert_eq!(d(&x, &y), d(&y, &x));
        prop_assert!(d(&x, &z) <= d(&x, &y) + d(&y, &z) + 1e-12);
        prop_assert!(d(&x, &x.scaled(3.5)) <= 1e-15);
    }

    #[test]
    fn sandwich_matches_double_loop(x in (2usize..=10).prop_flat_map(|n| prop::collection::vec(0.0f64..10.0, n))) {
        prop_assume!(x.iter().any(|v| *v > 0.0));
        let r = an_bn(&sv(x.clone()));
        let oracle: f64 = x.iter().flat_map(|a| x.iter().map(move |b| (a - b) * (a - b))).sum();
        prop_assert!((r.b_n - oracle).abs() <= 1e-9 * oracle.max(1.0));
        prop_assert!(r.sandwich_holds(x.len(), 1e-12));
    }

    #[test]
    fn membership_adjoins_minimal_gamma(x in sized_positive(), frac in 0.0f64..1.0) {
        let x = sv(x);
        let n = x.n();
        let g = minimal_gamma(&x).unwrap();
        let gamma = frac * (1.0 - 1e-9) / (n as f64).sqrt();
        let cone = Cone::new(n, gamma).unwrap();
        prop_assert_eq!(cone_membership(&x, &cone).unwrap(), gamma >= g.value);
    }

    #[test]
    fn accumulate_is_additive(n in 2usize..5, seed in any::<u64>(), cut in 0.1f64..0.9) {
        use rand::Rng;
        let mut r = hilbert_consensus::rng::stream(seed, "acc");
        let samples: Vec<(f64, WeightedDigraph)> = (0..=40)
            .map(|k| {
                let mut g = WeightedDigraph::empty(n);
                for i in 0..n {
                    for j in 0..n {
                        if i != j {
                            g.set(i, j, r.random_range(0.0..1.0)).unwrap();
                        }
                    }
                }
                (k as f64 * 0.025, g)
            })
            .collect();
        let t2 = (cut * 40.0).round() * 0.025;
        for rule in [Quadrature::LeftRectangle, Quadrature::Trapezoid] {
            let whole = accumulate(&samples, 0.0, 1.0, rule).unwrap();
            let mut parts = accumulate(&samples, 0.0, t2, rule).unwrap();
            parts.add_scaled(&accumulate(&samples, t2, 1.0, rule).unwrap(), 1.0).unwrap();
            prop_assert!(whole.matrix().max_abs_diff(parts.matrix()) <= 1e-12);
        }
    }

    #[test]
    fn accumulate_is_monotone(h in digraph(4), extra in digraph(4)) {
        let mut g = h.clone();
        g.add_scaled(&extra, 1.0).unwrap();
        let hs = vec![(0.0, h.clone()), (0.5, h.scaled(2.0)), (1.0, h)];
        let gs = vec![(0.0, g.clone()), (0.5, g.scaled(2.0)), (1.0, g)];
        let ah = accumulate(&hs, 0.0, 1.0, Quadrature::Trapezoid).unwrap();
        let ag = accumulate(&gs, 0.0, 1.0, Quadrature::Trapezoid).unwrap();
        prop_assert!(graph_geq(&ag, &ah).unwrap());
    }

    #[test]
    fn graph_geq_is_a_partial_order(a in digraph(3), b in digraph(3), c in digraph(3)) {
        prop_assert!(graph_geq(&a, &a).unwrap());
        if graph_geq(&a, &b).unwrap() && graph_geq(&b, &a).unwrap() {
            prop_assert_eq!(&a, &b);
        }
        if graph_geq(&a, &b).unwrap() && graph_geq(&b, &c).unwrap() {
            prop_assert!(graph_geq(&a, &c).unwrap());
        }
        let mut bigger = b.clone();
        bigger.add_scaled(&c, 1.0).unwrap();
        prop_assert!(graph_geq(&bigger, &b).unwrap());
    }

    #[test]
    fn delta_connected_implies_qsc_center(g in digraph(5), delta in 0.05f64..1.0) {
        if let Some(cert) = is_delta_connected(&g, delta) {
            let q = is_qsc(&g, 0.0).expect("δ-connected graphs are QSC");
            // The δ-center is itself a valid QSC center.
            let reached = (0..5).all(|i| i == cert.center || g.weight(i, cert.center) > 0.0);
            prop_assert!(reached);
            prop_assert!(q.validate(&g));
        }
    }

    #[test]
    fn power_bound_stays_below_n(g in digraph(5)) {
        if is_qsc(&g, 0.0).is_some() {
            let b = power_delta_bound(&g, 1.0).unwrap();
            prop_assert!(b.m <= 4);
            prop_assert!(b.delta > 0.0);
        }
    }

    #[test]
    fn dwell_time_is_respected(tau in 0.1f64..2.0, seed in any::<u64>()) {
        let graphs = vec![WeightedDigraph::chain(3, 1.0).unwrap(), WeightedDigraph::complete(3, 0.5).unwrap()];
        let s = dwell_time_signal(&graphs, tau, 10.0 * tau, seed).unwrap();
        let again = dwell_time_signal(&graphs, tau, 10.0 * tau, seed).unwrap();
        prop_assert_eq!(&s, &again);
        let mut edges = vec![0.0];
        edges.extend_from_slice(s.switch_times());
        edges.push(10.0 * tau);
        prop_assert!(edges.windows(2).all(|w| w[1] - w[0] >= tau * (1.0 - 1e-12)));
    }

    #[test]
    fn chain_activation_weights(delta in 0.05f64..1.0, seed in any::<u64>()) {
        let cfg = ChainActivationConfig::default();
        let act = chain_random_activation(6, delta, 8.0, seed, &cfg).unwrap();
        prop_assert_eq!(&act, &chain_random_activation(6, delta, 8.0, seed, &cfg).unwrap());
        for g in act.signal.values() {
            for i in 0..6 {
                for j in 0..6 {
                    let w = g.weight(i, j);
                    if j == i + 1 {
                        prop_assert!(w == 0.0 || (w >= delta && w <= cfg.weight_factor * delta));
                    } else {
                        prop_assert_eq!(w, 0.0);
                    }
                }
            }
        }
    }
}

fn random_ltv(n: usize, seed: u64) -> SystemModel {
    use rand::Rng;
    let mut r = hilbert_consensus::rng::stream(seed, "ltv");
    let times: Vec<f64> = (1..6).map(|k| k as f64 * 0.4).collect();
    let values = (0..6)
        .map(|_| {
            let mut g = WeightedDigraph::empty(n);
            for i in 0..n {
                for j in 0..n {
                    if i != j && r.random_bool(0.4) {
                        g.set(i, j, r.random_range(0.0..2.0)).unwrap();
                    }
                }
            }
            g
        })
        .collect();
    SystemModel::ltv_from_graphs(&SwitchingSignal::new(times, values).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn euler_keeps_the_box(n in 2usize..6, seed in any::<u64>(), which in 0u8..3) {
        use rand::Rng;
        let mut r = hilbert_consensus::rng::stream(seed, "x0");
        let x0 = sv((0..n).map(|_| r.random_range(0.0..2.5)).collect());
        let coupling = SwitchingSignal::constant(WeightedDigraph::complete(n, 0.7).unwrap());
        let model = match which {
            0 => random_ltv(n, seed),
            1 => SystemModel::kuramoto(coupling).unwrap(),
            _ => SystemModel::hegselmann_krause(n, ScalarSignal::constant(0.8)).unwrap(),
        };
        let traj = simulate(&model, &x0, 0.0, 3.0, 0.05, Scheme::Euler).unwrap();
        for w in traj.states().windows(2) {
            prop_assert!(w[1].max() <= w[0].max() + 1e-12);
            prop_assert!(w[1].min() >= w[0].min() - 1e-12);
        }
        let c = certify_consensus(&traj, &CertifyOptions::default()).unwrap();
        prop_assert!(c.spread_final <= c.spread_initial + 1e-12);
    }

    #[test]
    fn consensus_points_are_fixed(n in 2usize..6, seed in any::<u64>(), c in -5.0f64..5.0, t in 0.0f64..2.0) {
        let x = sv(vec![c; n]);
        let coupling = SwitchingSignal::constant(WeightedDigraph::complete(n, 1.3).unwrap());
        for model in [
            random_ltv(n, seed),
            SystemModel::kuramoto(coupling.clone()).unwrap(),
            SystemModel::hegselmann_krause(n, ScalarSignal::constant(0.3)).unwrap(),
            SystemModel::cucker_smale_velocity(coupling, 1.0, 1.0, 0.5).unwrap(),
        ] {
            let a = model.evaluate(t, &x).unwrap();
            prop_assert!(a.matrix().mul_vec(x.as_slice()).iter().all(|v| v.abs() <= 1e-12 * c.abs().max(1.0)));
        }
    }

    #[test]
    fn factors_reproduce_euler_bitwise(n in 2usize..6, seed in any::<u64>()) {
        use rand::Rng;
        let mut r = hilbert_consensus::rng::stream(seed, "x0");
        let x0 = sv((0..n).map(|_| r.random_range(0.0..3.0)).collect());
        let model = random_ltv(n, seed);
        let grid = time_grid(0.0, 2.0, 0.01, &model.switch_times(0.0, 2.0));
        let f = factorize_on_grid(&model, &grid, &x0).unwrap();
        let traj = simulate(&model, &x0, 0.0, 2.0, 0.01, Scheme::Euler).unwrap();
        prop_assert_eq!(traj.times(), &grid[..]);
        prop_assert_eq!(f.apply(x0.as_slice()), traj.final_state().as_slice().to_vec());
        prop_assert!(f.row_sum_error() <= 1e-8);
        prop_assert!(f.min_entry() >= 0.0);
    }

    #[test]
    fn certified_rate_is_scale_invariant(n in 2usize..5, seed in any::<u64>(), c in 0.01f64..100.0) {
        use rand::Rng;
        let mut r = hilbert_consensus::rng::stream(seed, "x0");
        let x0 = sv((0..n).map(|_| r.random_range(1.0..3.0)).collect());
        let model = SystemModel::ltv_constant(MetzlerMatrix::from_digraph(&WeightedDigraph::complete(n, 0.5).unwrap())).unwrap();
        let traj = simulate(&model, &x0, 0.0, 5.0, 0.01, Scheme::Euler).unwrap();
        let a = certify_consensus(&traj, &CertifyOptions::default()).unwrap();
        let b = certify_consensus(&traj.scaled(c).unwrap(), &CertifyOptions::default()).unwrap();
        prop_assert!((a.rate_lambda - b.rate_lambda).abs() <= 1e-10 * a.rate_lambda.abs().max(1.0));
    }

    #[test]
    fn lower_bound_is_monotone_in_b(shrink in 0.0f64..1.0) {
        let g = WeightedDigraph::chain(4, 1.0).unwrap();
        let model = SystemModel::ltv_from_graphs(&SwitchingSignal::constant(g.clone())).unwrap();
        let x0 = sv(vec![0.0, 1.0, 2.0, 3.0]);
        let traj = simulate_with(&model, &x0, 0.0, 4.0, 0.01, Scheme::Euler, &SimOptions {
            anchors: vec![1.0, 2.0, 3.0],
            shift: 1.0,
        }).unwrap();
        let cps = CheckpointSequence::uniform(0.0, 4.0, 1.0).unwrap();
        let b = g.scaled(0.9);
        let full = verify_accumulated_lower_bound(&model, &traj, &cps, &LowerBound::Constant(b.clone()), &LowerBoundMode::Trajectory).unwrap();
        prop_assert!(full.pass);
        let smaller = verify_accumulated_lower_bound(&model, &traj, &cps, &LowerBound::Constant(b.scaled(shrink)), &LowerBoundMode::Trajectory).unwrap();
        prop_assert!(smaller.pass);
    }

    #[test]
    fn diameter_decay_is_nonincreasing(n in 2usize..5, seed in any::<u64>()) {
        use rand::Rng;
        let mut r = hilbert_consensus::rng::stream(seed, "stoch");
        let mut a = Matrix::zeros(n);
        for i in 0..n {
            let row: Vec<f64> = (0..n).map(|_| r.random_range(0.1..1.0)).collect();
            let s: f64 = row.iter().sum();
            for j in 0..n {
                a[(i, j)] = row[j] / s;
            }
        }
        let report = verify_diameter_decay(&a, 0.4 / (n as f64).sqrt(), 6, 300, seed).unwrap();
        prop_assert!(report.rows.windows(2).all(|w| w[1].estimate <= w[0].estimate + 1e-9));
        prop_assert!(report.pass);
    }
}
