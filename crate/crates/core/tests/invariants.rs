use proptest::prelude::*;
use rotgas::channel::{channel_scan_adaptive, ChannelContext, ChannelOptions};
use rotgas::discretization::{RadialGrid, TrapSpec};
use rotgas::dm::{dm_minimize_with, DmOptions, DmState};
use rotgas::phase::gap_decay_table;
use rotgas::stability::{c_constant, critical_omega_bound};
use rotgas::toy::{build_modes, toy_point};

fn small_grid() -> RadialGrid {
    RadialGrid::new(6.0, 5.0, 24, 32).unwrap()
}

#[test]
fn channel_gaps_shrink_with_coupling() {
    let t = gap_decay_table(&TrapSpec::harmonic(), 1.0, &[100.0, 0.0, 10.0, 1.0], &small_grid()).unwrap();
    let gs: Vec<f64> = t.rows.iter().map(|r| r.g).collect();
    assert_eq!(gs, [0.0, 1.0, 10.0, 100.0]);
    assert!(t.monotone);
    for k in 0..3 {
        assert!((t.rows[0].gaps[k] - 2.0).abs() < 0.05, "{:?}", t.rows[0].gaps);
        assert!((t.rows[0].rotating_gaps[k] - (t.rows[0].gaps[k] - 1.0)).abs() < 1e-14);
    }
    assert!(t.rows.iter().all(|r| r.gaps.iter().all(|&d| d > 0.0)));
    assert_eq!(t.exponent, -3.5);
}

#[test]
fn gap_table_rejects_supercritical_rotation() {
    assert!(gap_decay_table(&TrapSpec::harmonic(), 2.5, &[1.0], &small_grid()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn dm_energy_lies_below_every_channel(omega in 0.0f64..1.8, lg in -1.0f64..2.0) {
        let g = 10f64.powf(lg);
        let grid = small_grid();
        let trap = TrapSpec::harmonic();
        let ctx = ChannelContext::new(&grid, &trap).unwrap();
        let scan = channel_scan_adaptive(&ctx, g, omega, 40, &ChannelOptions::default(), None).unwrap();
        let (_, e_best) = scan.best_symmetric(omega);
        let init = DmState::from_channel_scan(&grid, &trap, omega, g, &scan);
        let dm = dm_minimize_with(&ctx, omega, g, &DmOptions { init: Some(init), ..Default::default() }).unwrap();
        prop_assert!(dm.energy <= e_best + 1e-9, "E_dm {} above channel {}", dm.energy, e_best);
        prop_assert!(dm.duality_gap >= -1e-9 * dm.energy.abs());
        let total: f64 = dm.occupations.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        prop_assert!(dm.occupations.iter().all(|&l| l >= -1e-12));
    }

    #[test]
    fn unrestricted_ground_never_exceeds_bosonic(omega in 0.0f64..2.0, coupling in 0.01f64..100.0, k in 1usize..3) {
        let modes = build_modes(2 * k + 1).unwrap();
        let r = toy_point(2, &modes, omega, coupling).unwrap();
        prop_assert!(r.e_abs <= r.e_bose + 1e-10);
        prop_assert!((r.gap - (r.e_bose - r.e_abs)).abs() < 1e-14);
        let trace: f64 = r.rdm_eigenvalues.iter().sum();
        prop_assert!((trace - 1.0).abs() < 1e-10);
        prop_assert!(r.rdm_eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn c_constant_decreases(n in 0.05f64..200.0, dn in 0.01f64..10.0) {
        let a = c_constant(n).unwrap();
        let b = c_constant(n + dn).unwrap();
        prop_assert!(a > b && b > 0.0);
    }

    #[test]
    fn omega_bound_matches_brute_force(es in proptest::collection::vec(-5.0f64..5.0, 2..8)) {
        let n = es.len() - 1;
        let bound = critical_omega_bound(&es, n).unwrap();
        for k in 0..n {
            prop_assert!((es[n] - es[k]) / (n - k) as f64 <= bound);
        }
        prop_assert!((0..n).any(|k| (es[n] - es[k]) / (n - k) as f64 == bound));
    }
}
