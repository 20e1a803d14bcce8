use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use vcc_core::bilevel::FeasibleSet;
use vcc_core::game::{eliminate, solve_game, solve_game_warm, validate_allocation, GameMatrices};
use vcc_core::sensitivity::{compute_sensitivity, finite_difference_jacobian, SensitivityResult};
use vcc_core::Scenario;
use vcc_oracle::{random_capacity, random_scenario, strictly_complementary, DirectGame, InstanceLimits};

fn instance(seed: u64) -> (Scenario, Vec<f64>, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = random_scenario(&mut rng, InstanceLimits::default());
    let set = FeasibleSet::new(&s).unwrap();
    let x = random_capacity(&set, &mut rng);
    (s, x, rng)
}

/// Searches the seed's stream for an instance with `T >= 2`, a strictly
/// complementary equilibrium, and perturbations that keep `Y(x)` nonempty.
fn nondegenerate(seed: u64) -> Option<(GameMatrices, Vec<f64>, SensitivityResult, DMatrix<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..40 {
        let s = random_scenario(&mut rng, InstanceLimits::default());
        if s.horizon < 2 {
            continue;
        }
        let set = FeasibleSet::new(&s).unwrap();
        let x = random_capacity(&set, &mut rng);
        let m = GameMatrices::assemble(&s).unwrap();
        let eq = solve_game(&m, &x).unwrap();
        if !strictly_complementary(&m, &eq, &x, 1e-4) {
            continue;
        }
        let Ok(fd) = finite_difference_jacobian(&m, &x, 1e-6) else { continue };
        let sens = compute_sensitivity(&m, &eq).unwrap();
        return Some((m, x, sens, fd));
    }
    None
}

fn jacobian_gap(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn equilibrium_is_feasible_and_variationally_stable(seed in any::<u64>()) {
        let (s, x, mut rng) = instance(seed);
        let m = GameMatrices::assemble(&s).unwrap();
        let eq = solve_game(&m, &x).unwrap();
        validate_allocation(&m.layout, m.volumes(), &eq.y_star, Some(&x)).unwrap();

        let direct = DirectGame::new(&s);
        prop_assert!(direct.feasibility_residual(&eq.y_star, &x) <= 1e-6);
        let l = &m.layout;
        for (i, job) in s.jobs.iter().enumerate() {
            let total: f64 = (0..l.dc_count).flat_map(|d| (0..l.horizon).map(move |t| (d, t))).map(|(d, t)| eq.y_star[l.y(i, d, t)]).sum();
            prop_assert!((total - job.volume).abs() <= 1e-8 * job.volume);
        }

        let f = direct.pseudo_gradient(&eq.y_star);
        for p in direct.random_feasible(&x, &[], 60, &mut rng).unwrap() {
            prop_assert!(f.dot(&(p - &eq.y_star)) >= -1e-6);
        }
        for job in 0..s.jobs.len() {
            let (at, best) = direct.best_response(&x, &eq.y_star, job).unwrap();
            prop_assert!(at - best < 1e-6, "job {job} gains {}", at - best);
        }
    }

    #[test]
    fn reduced_and_direct_programs_agree(seed in any::<u64>()) {
        let (s, x, _) = instance(seed);
        let m = GameMatrices::assemble(&s).unwrap();
        let eq = solve_game(&m, &x).unwrap();
        let direct = DirectGame::new(&s);
        let (y, obj) = direct.solve(&x).unwrap();
        prop_assert!((m.objective(&eq.y_star) - obj).abs() <= 1e-6 * obj.abs());
        let l = &m.layout;
        for (i, job) in s.jobs.iter().enumerate() {
            let off = l.block_offset(i);
            let gap = (0..l.block_len()).fold(0.0f64, |a, k| a.max((eq.y_star[off + k] - y[off + k]).abs()));
            prop_assert!(gap <= 1e-5 * job.volume);
        }
        // The core's anchor is the same minimum-norm point the oracle computes by SVD.
        prop_assert!((&m.y_dagger - direct.anchor()).amax() <= 1e-9 * (1.0 + m.y_dagger.amax()));
    }

    #[test]
    fn elimination_residuals_vanish(seed in any::<u64>()) {
        let (s, _, _) = instance(seed);
        let m = GameMatrices::assemble(&s).unwrap();
        prop_assert!((&m.a * &m.f_t).amax() <= 1e-10);
        let r = &m.a * &m.y_dagger - &m.b;
        prop_assert!(r.amax() <= 1e-8 * (1.0 + m.b.amax()));
        let gram = m.f_t.tr_mul(&m.f_t);
        prop_assert!((gram - DMatrix::identity(m.n_reduced(), m.n_reduced())).amax() <= 1e-10);
        let el = eliminate(&m.a, &m.b).unwrap();
        prop_assert_eq!(el.basis.ncols(), m.n_reduced());
    }

    #[test]
    fn warm_and_cold_solves_agree(seed in any::<u64>()) {
        let (s, x, mut rng) = instance(seed);
        let set = FeasibleSet::new(&s).unwrap();
        let m = GameMatrices::assemble(&s).unwrap();
        let first = solve_game(&m, &x).unwrap();
        let x2 = random_capacity(&set, &mut rng);
        let cold = solve_game(&m, &x2).unwrap();
        let warm = solve_game_warm(&m, &x2, Some(&first.factor)).unwrap();
        prop_assert!((&cold.y_star - &warm.y_star).amax() <= 1e-8 * (1.0 + cold.y_star.amax()));
    }

    #[test]
    fn sensitivity_matches_finite_differences(seed in any::<u64>()) {
        let found = nondegenerate(seed);
        prop_assume!(found.is_some(), "no nondegenerate point in this seed's stream");
        let (m, x, sens, fd) = found.unwrap();
        prop_assert!(jacobian_gap(&sens.jacobian_full, &fd) <= 1e-4);

        // In the linear region both step sizes agree with the analytic Jacobian to 10 h.
        prop_assert!((&fd - &sens.jacobian_full).amax() <= 10.0 * 1e-6);
        if let Ok(fd5) = finite_difference_jacobian(&m, &x, 1e-5) {
            prop_assert!((&fd5 - &sens.jacobian_full).amax() <= 10.0 * 1e-5);
        }

        prop_assert!((&m.a * &sens.jacobian_full).amax() <= 1e-9);
        for &k in &sens.active_rows {
            let lhs = m.g_tilde.row(k) * &sens.jacobian_reduced;
            prop_assert!((lhs - m.h_x.row(k)).amax() <= 1e-9);
        }
        let n_y = m.layout.n_y();
        for j in 0..x.len() {
            if !sens.active_rows.contains(&(n_y + j)) {
                prop_assert!(sens.jacobian_full.column(j).iter().all(|&v| v == 0.0));
            }
        }
    }
}
