mod support;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wavemap_core::scheme::{constraint_defects, energy, initial_data, step, SolverConfig};
use wavemap_core::Grid2D;

/// `1/2 int |grad u|^2` of the bubble data, midpoint rule on 2048^2 cells
/// with centred derivatives of the closed form (converged to ~1e-9).
const BUBBLE_ENERGY: f64 = 22.912_275_478_6;

#[test]
fn bubble_energy_regression() {
    let g = Grid2D::new(256).unwrap();
    let (u, w) = initial_data(&g);
    let e = energy(&u, &w, &g);
    assert!((e - BUBBLE_ENERGY).abs() <= 0.02 * BUBBLE_ENERGY, "{e}");
}

#[test]
fn bubble_energy_converges() {
    let errs: Vec<f64> = [32, 64, 128]
        .iter()
        .map(|&m| {
            let g = Grid2D::new(m).unwrap();
            let (u, w) = initial_data(&g);
            (energy(&u, &w, &g) - BUBBLE_ENERGY).abs()
        })
        .collect();
    assert!(errs[1] < errs[0] && errs[2] < errs[1], "{errs:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn step_invariants(seed in any::<u64>(), w_amp in 0.0f64..3.0, k in 7i32..10) {
        let g = Grid2D::new(12).unwrap();
        let cfg = SolverConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (u, w) = support::smooth_state(&g, &mut rng, w_amp);
        let tau = 2f64.powi(-k);
        let Ok(out) = step(&u, &w, tau, &cfg, &g) else {
            // large data can legitimately exceed the solver's threshold
            return Ok(());
        };
        let tol = 10.0 * cfg.fp_tol;
        let (unit, orth) = constraint_defects(&out.u, &out.w);
        prop_assert!(unit <= tol, "unit {}", unit);
        prop_assert!(orth <= tol * out.w.max_norm().max(1.0), "orth {}", orth);

        let e0 = energy(&u, &w, &g);
        let e1 = energy(&out.u, &out.w, &g);
        prop_assert!((e1 - e0).abs() <= tol * (1.0 + e0), "energy {} -> {}", e0, e1);

        let back = step(&out.u, &out.w, -tau, &cfg, &g).unwrap();
        prop_assert!(back.u.max_dist(&u) <= tol);
        prop_assert!(back.w.max_dist(&w) <= tol * (1.0 + w.max_norm()));
    }
}
