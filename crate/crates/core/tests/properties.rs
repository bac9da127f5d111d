use proptest::prelude::*;
use rand::Rng;

use far_relay::allocator::scheme_region;
use far_relay::channel::{CorrelationMatrix, PortGrid};
use far_relay::harness::empirical_best_gain_cdf;
use far_relay::mvncdf::MvnConfig;
use far_relay::outage::{
    best_gain_cdf_batch, outage_probabilities, outage_threshold, xi_af, xi_df, LinkBudget, OutageQuery, Selection,
};
use far_relay::stream::substream;

fn grid_corr(n1: usize, n2: usize, w: f64) -> CorrelationMatrix {
    CorrelationMatrix::from_grid(&PortGrid::new(n1, n2, w, w).unwrap()).unwrap()
}

#[test]
fn copula_tracks_monte_carlo_for_small_grids() {
    let xs = [0.5, 1.0, 2.0];
    for (n1, n2, w) in [(1, 2, 0.5), (2, 2, 1.0), (1, 4, 1.0), (3, 3, 1.0)] {
        let corr = grid_corr(n1, n2, w);
        let copula = best_gain_cdf_batch(&xs, &corr, &MvnConfig::default()).unwrap();
        let emp = empirical_best_gain_cdf(&corr, &xs, 1_000_000, 17).unwrap();
        for (c, e) in copula.iter().zip(&emp) {
            assert!(
                (c.value - e.cdf).abs() <= 0.05,
                "{n1}x{n2} W={w} x={}: copula {} vs empirical {}",
                e.x,
                c.value,
                e.cdf
            );
        }
    }
}

#[test]
fn lemma_identity_on_random_feasible_points() {
    let mut rng = substream(99, 0);
    let mut tested = 0;
    while tested < 10_000 {
        let lb = LinkBudget::new(
            rng.random_range(0.1..10.0),
            rng.random_range(1e-3..3.0),
            rng.random_range(1e-2..10.0),
            rng.random_range(0.1..2.0),
            rng.random_range(0.1..2.0),
        )
        .unwrap();
        let q = OutageQuery::new(rng.random_range(1e-3..5.0), rng.random_range(1e-3..5.0), rng.random_range(0.05..2.0))
            .unwrap();
        if !q.is_feasible(&lb) {
            continue;
        }
        tested += 1;
        let c = q.c_th();
        let u = q.p_user * lb.mean_gamma_ub();
        let r = q.p_relay * lb.mean_gamma_rb();
        let ratio = (c * c + c) / ((c + 1.0) * u + u * r);
        if (ratio - 1.0).abs() < 1e-9 {
            continue;
        }
        let gap = xi_af(&q, &lb).unwrap() - xi_df(&q, &lb).unwrap();
        assert_eq!(gap > 0.0, ratio > 1.0, "{q:?} {lb:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn scheme_region_agrees_with_outage_selection(
        pu in 1e-3f64..5.0, pr in 1e-3f64..5.0,
        g_ub in 1e-3f64..3.0, g_rb in 1e-2f64..10.0, xi in 0.05f64..2.0,
    ) {
        let lb = LinkBudget::new(1.0, g_ub, g_rb, 1.0, 1.0).unwrap();
        let q = OutageQuery::new(pu, pr, xi).unwrap();
        prop_assume!(q.is_feasible(&lb));
        let c = outage_threshold(xi);
        let u = pu * g_ub;
        let margin = ((c + 1.0) * u + u * pr * g_rb) / (c * c + c) - 1.0;
        prop_assume!(margin.abs() > 1e-9);
        let r = outage_probabilities(&q, &lb, &grid_corr(2, 2, 0.5), &MvnConfig::default()).unwrap();
        let region = scheme_region(pu, pr, c, lb.mean_gamma_ub(), lb.mean_gamma_rb()).unwrap();
        prop_assert_eq!(r.selection, Selection::from(region));
    }

    #[test]
    fn outage_nonincreasing_in_powers(
        pu in 0.05f64..3.0, pr in 0.05f64..3.0, du in 0.0f64..1.0, dr in 0.0f64..1.0,
        g_ub in 0.01f64..1.0, g_rb in 0.1f64..5.0,
    ) {
        let lb = LinkBudget::new(1.0, g_ub, g_rb, 1.0, 1.0).unwrap();
        let corr = grid_corr(2, 2, 0.5);
        let cfg = MvnConfig::default();
        let eval = |a: f64, b: f64| outage_probabilities(&OutageQuery::new(a, b, 0.4).unwrap(), &lb, &corr, &cfg).unwrap();
        let base = eval(pu, pr);
        for moved in [eval(pu + du, pr), eval(pu, pr + dr)] {
            let tol = 2.0 * (base.est_error + moved.est_error);
            prop_assert!(moved.op_af <= base.op_af + tol, "{base:?} -> {moved:?}");
            prop_assert!(moved.op_df <= base.op_df + tol, "{base:?} -> {moved:?}");
        }
    }
}
