use nalgebra::{DMatrix, DVector};
use netnash::estimator::{self, ExplorationConfig, RegressionLog};
use netnash::gnep::project_halfspaces;
use netnash::rng::{self, Purpose};
use netnash::seeker::{km_update, DesignOperator, GammaSchedule, StepConfig};
use netnash::topology::AugmentedLayout;
use netnash::{BoxSet, NetworkTopology, StructuralMaps};
use proptest::prelude::*;

fn random_topology(seed: u64, n: usize) -> NetworkTopology {
    let mut r = rng::stream(seed, 0, Purpose::Topology);
    let dims = (0..n).map(|i| 1 + (seed as usize + i) % 3).collect();
    NetworkTopology::random_connected(dims, n / 2, 0.5, &mut r).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn played_points_stay_in_box(
        lo in -5.0f64..5.0,
        width in 0.5f64..20.0,
        t in 0.0f64..=1.0,
        seed in any::<u64>(),
    ) {
        let b = BoxSet::uniform(2, lo, lo + width);
        let cfg = ExplorationConfig::from_box(&b, 0.1).unwrap();
        let pivot = DVector::from_element(2, lo + t * width);
        let mut r = rng::stream(seed, 0, Purpose::Exploration);
        let d = estimator::draw_exploration(&cfg, &mut r);
        let played = estimator::safe_net_adjust(&pivot, &d, &cfg, &b).unwrap();
        prop_assert!(b.contains(&played, 1e-12));
    }

    #[test]
    fn least_squares_fit_stays_in_box(
        rows in prop::collection::vec((0.0f64..5.0, 0.0f64..5.0, -20.0f64..20.0), 1..12),
        prev in (-3.0f64..3.0, -3.0f64..3.0, -3.0f64..3.0),
    ) {
        let b = BoxSet::uniform(3, -2.0, 2.0);
        let mut log = RegressionLog::new(3);
        for (u, v, s) in &rows {
            log.push(&estimator::regressor(&DVector::from_row_slice(&[*u, *v])), *s);
        }
        let fit = estimator::olse_solve(&log, &b, &DVector::from_row_slice(&[prev.0, prev.1, prev.2]));
        prop_assert!(b.contains(&fit.w, 0.0));
    }

    #[test]
    fn gram_accumulates_outer_products(
        rows in prop::collection::vec((-4.0f64..4.0, -4.0f64..4.0, -9.0f64..9.0), 1..20),
    ) {
        let mut log = RegressionLog::new(3);
        let mut gram = DMatrix::zeros(3, 3);
        let mut moment = DVector::zeros(3);
        for (u, v, s) in &rows {
            let l = estimator::regressor(&DVector::from_row_slice(&[*u, *v]));
            log.push(&l, *s);
            gram += &l * l.transpose();
            moment += &l * *s;
        }
        prop_assert_eq!(log.count, rows.len());
        prop_assert!((&log.gram - &gram).amax() <= 1e-12 * (1.0 + gram.amax()));
        prop_assert!((&log.moment - &moment).amax() <= 1e-12 * (1.0 + moment.amax()));
        prop_assert!(log.min_eig() >= -1e-9 * (1.0 + gram.amax()));
    }

    #[test]
    fn design_operator_is_positive_definite(
        seed in any::<u64>(),
        n in 2usize..12,
        log_rho in -2.0f64..3.0,
        safety in 0.05f64..0.99,
    ) {
        let topo = random_topology(seed, n);
        let maps = StructuralMaps::new(&topo);
        let step = StepConfig::gershgorin(&topo, 10f64.powf(log_rho), safety, 1.0, GammaSchedule::Constant(1.0)).unwrap();
        let d = DesignOperator::new(&step, &topo, &maps).unwrap();
        prop_assert!(d.sigma_min > 0.0);
    }

    #[test]
    fn consensual_vectors_have_no_disagreement(seed in any::<u64>(), n in 2usize..10) {
        let topo = random_topology(seed, n);
        let layout = AugmentedLayout::new(&topo);
        let x = DVector::from_fn(topo.total_dim(), |k, _| (k as f64 * 0.37 + seed as f64 * 1e-3).sin());
        let y = layout.consensual(&topo, &x);
        prop_assert!(layout.consensus_gap(&topo, &y) == 0.0);
        prop_assert!(layout.laplacian_apply(&topo, &y).amax() < 1e-12);
        prop_assert_eq!(layout.own_decisions(&topo, &y), x);
    }

    #[test]
    fn relaxation_stays_on_the_segment(
        a in prop::collection::vec(-10.0f64..10.0, 4),
        b in prop::collection::vec(-10.0f64..10.0, 4),
        gamma in 0.0f64..=1.0,
    ) {
        let (ya, yb) = (DVector::from_vec(a), DVector::from_vec(b));
        let y = km_update(&ya, &yb, gamma).unwrap();
        let d = (&yb - &ya).norm();
        prop_assert!(((&y - &ya).norm() - gamma * d).abs() <= 1e-12 * (1.0 + d));
        prop_assert!(km_update(&ya, &yb, 1.0 + 1e-9).is_err());
    }

    #[test]
    fn halfspace_projection_is_feasible_with_nonnegative_multipliers(
        v in prop::collection::vec(-5.0f64..5.0, 3),
        rows in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 1..4),
        rhs in prop::collection::vec(0.0f64..2.0, 3),
    ) {
        let m = rows.len();
        let e = DMatrix::from_fn(m, 3, |r, c| rows[r][c]);
        let d = DVector::from_iterator(m, rhs.iter().take(m).cloned());
        let v = DVector::from_vec(v);
        let (p, nu) = project_halfspaces(&e, &d, &v).unwrap();
        let slack = &e * &p - &d;
        prop_assert!(slack.max() <= 1e-6);
        prop_assert!(nu.min() >= 0.0);
        // Stationarity of the projection: v − p = Eᵀν.
        prop_assert!((&v - &p - e.transpose() * &nu).amax() <= 1e-5);
    }

    #[test]
    fn box_projection_is_idempotent(
        x in prop::collection::vec(-50.0f64..50.0, 3),
        lo in -10.0f64..0.0,
        hi in 0.0f64..10.0,
    ) {
        let b = BoxSet::uniform(3, lo, hi);
        let p = b.project(&DVector::from_vec(x));
        prop_assert!(b.contains(&p, 0.0));
        prop_assert_eq!(b.project(&p), p);
    }
}
