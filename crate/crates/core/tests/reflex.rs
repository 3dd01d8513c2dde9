#[path = "common/qp_oracle.rs"]
mod qp_oracle;

use proptest::prelude::*;
use tendon_core::reflex::{safety_reflex_step, solve_tension_qp, SafetyReflex};

#[test]
fn qp_matches_enumeration_on_random_instances() {
    for (k, qp) in qp_oracle::seeded_instances(11, 1000).iter().enumerate() {
        let sol = solve_tension_qp(qp).unwrap();
        let (_, best) = qp_oracle::enumerate(qp);
        let rel = (sol.objective - best).abs() / best.abs().max(1e-12);
        assert!(rel < 1e-6, "instance {k}: {} vs {best}", sol.objective);
        assert!(sol.x.iter().zip(&qp.f_min).all(|(x, lo)| x >= lo));
        assert!(sol.objective <= qp.objective(&qp.f_min) + 1e-15);
    }
}

#[test]
fn qp_kkt_residual_is_small_on_reference_scale() {
    for qp in qp_oracle::seeded_instances(12, 200) {
        let sol = solve_tension_qp(&qp).unwrap();
        assert!(sol.kkt_residual < 1e-8, "{}", sol.kkt_residual);
    }
}

proptest! {
    #[test]
    fn safety_change_per_tick_is_bounded(
        f in proptest::collection::vec(0.0f64..400.0, 20),
        c in proptest::collection::vec(20.0f64..90.0, 20),
    ) {
        let mut s = SafetyReflex::new(1, 1e-3, 1e-3, 100.0, 60.0, -3e-4, 5e-4).unwrap();
        for (f, c) in f.iter().zip(&c) {
            let before = s.dl_safe[0];
            let (next, out) = safety_reflex_step(&s, &[*f], &[*c]);
            prop_assert!(out[0] >= 0.0);
            prop_assert!((out[0] - before).abs() <= 5e-4 + 1e-15);
            s = next;
        }
    }
}
