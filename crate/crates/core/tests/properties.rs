//! Property tests for the invariants that hold for any input.

use irs_link::baselines::optimal_refraction;
use irs_link::channel::{end_to_end, BlockChannel};
use irs_link::estimation::{ls_stage2, ml_objective, EstimationProblem};
use irs_link::harness::empirical_cdf;
use irs_link::protocol::{
    data_phase_stage2, dft_refraction_matrix, initial_refraction, overall_rate, random_refraction_matrix,
    rate_stage1, rate_stage2, stage2_training_matrix, FrameConfig,
};
use irs_link::rng::{complex_normal, seeded};
use irs_link::signal_math::{center, centering_projector, fold_phase, upa_steering, wrap_angle};
use irs_link::{CMatrix, CVector, Complex64};
use proptest::prelude::*;

fn problem(seed: u64, m_x: usize, m_y: usize, tau: usize) -> (CVector, CMatrix) {
    let mut rng = seeded(seed);
    let v = random_refraction_matrix(tau, m_x * m_y, 1.0, &mut rng);
    let y = CVector::from_fn(tau, |_, _| complex_normal(&mut rng, 1.0));
    (y, v)
}

fn objective(y: CVector, v: &CMatrix, m_x: usize, m_y: usize, psi: (f64, f64)) -> f64 {
    ml_objective(psi.0, psi.1, &EstimationProblem::new(y, v.clone(), m_x, m_y).unwrap()).value
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn objective_ignores_constant_shift(
        seed in any::<u64>(), m_x in 1usize..6, m_y in 1usize..6, tau in 2usize..30,
        px in -1.0f64..1.0, py in -1.0f64..1.0, sr in -5.0f64..5.0, si in -5.0f64..5.0,
    ) {
        let (y, v) = problem(seed, m_x, m_y, tau);
        let base = objective(y.clone(), &v, m_x, m_y, (px, py));
        let shifted = objective(y.map(|x| x + Complex64::new(sr, si)), &v, m_x, m_y, (px, py));
        prop_assert!((base - shifted).abs() <= 1e-12 * base.abs().max(1.0));
    }

    #[test]
    fn objective_ignores_global_phase(
        seed in any::<u64>(), m_x in 1usize..6, m_y in 1usize..6, tau in 2usize..30,
        px in -1.0f64..1.0, py in -1.0f64..1.0, phase in 0.0f64..6.3,
    ) {
        let (y, v) = problem(seed, m_x, m_y, tau);
        let base = objective(y.clone(), &v, m_x, m_y, (px, py));
        let rotated = objective(&y * Complex64::from_polar(1.0, phase), &v, m_x, m_y, (px, py));
        prop_assert!((base - rotated).abs() <= 1e-12 * base.abs().max(1.0));
    }

    #[test]
    fn objective_is_periodic_in_both_phases(
        seed in any::<u64>(), m_x in 1usize..5, m_y in 1usize..5, tau in 2usize..20,
        px in -1.0f64..1.0, py in -1.0f64..1.0,
    ) {
        let (y, v) = problem(seed, m_x, m_y, tau);
        let base = objective(y.clone(), &v, m_x, m_y, (px, py));
        let moved = objective(y, &v, m_x, m_y, (px + 2.0, py - 2.0));
        prop_assert!((base - moved).abs() <= 1e-9 * base.abs().max(1.0));
    }

    #[test]
    fn centering_projector_identities(seed in any::<u64>(), tau in 1usize..40) {
        let b = centering_projector(tau).unwrap().matrix;
        let mut rng = seeded(seed);
        let y = CVector::from_fn(tau, |_, _| complex_normal(&mut rng, 1.0));
        let ones = CVector::from_element(tau, Complex64::new(1.0, 0.0));
        prop_assert!((&b * &b - &b).norm() < 1e-12);
        prop_assert!((b.adjoint() - &b).norm() < 1e-12);
        prop_assert!((&b * ones).norm() < 1e-12);
        prop_assert!((center(&y) - &b * &y).norm() < 1e-12);
        prop_assert!(center(&y).sum().norm() < 1e-12);
    }

    #[test]
    fn refraction_entries_have_unit_modulus(
        seed in any::<u64>(), tau in 1usize..40, m in 1usize..60,
        px in -3.0f64..3.0, py in -3.0f64..3.0, mx_pow in 0u32..3, my_pow in 0u32..3,
    ) {
        let mut rng = seeded(seed);
        let v = random_refraction_matrix(tau, m, 1.0, &mut rng);
        prop_assert!(v.iter().all(|x| (x.norm() - 1.0).abs() < 1e-12));
        let nu = initial_refraction((px, py), 2usize.pow(mx_pow), 3usize.pow(my_pow), 1.0).unwrap();
        prop_assert!(nu.iter().all(|x| (x.norm() - 1.0).abs() < 1e-12));
        let (mx, my) = (2usize.pow(mx_pow), 2usize.pow(my_pow));
        let d = dft_refraction_matrix(mx * my, mx, my, mx).unwrap();
        prop_assert!(d.iter().all(|x| (x.norm() - 1.0).abs() < 1e-12));
        prop_assert!((data_phase_stage2(px * 7.0).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn steering_vector_has_norm_root_m(px in -5.0f64..5.0, py in -5.0f64..5.0, m_x in 1usize..9, m_y in 1usize..9) {
        let u = upa_steering(px, py, m_x, m_y).unwrap();
        prop_assert!((u.norm_squared() - (m_x * m_y) as f64).abs() < 1e-9);
        prop_assert_eq!(u[0], Complex64::new(1.0, 0.0));
        let folded = upa_steering(fold_phase(px), fold_phase(py), m_x, m_y).unwrap();
        prop_assert!((u - folded).norm() < 1e-9);
    }

    #[test]
    fn folded_phases_land_in_range(x in -1e3f64..1e3, t in -1e3f64..1e3) {
        let f = fold_phase(x);
        prop_assert!((-1.0..1.0).contains(&f));
        let w = wrap_angle(t);
        prop_assert!(w > -std::f64::consts::PI - 1e-12 && w <= std::f64::consts::PI + 1e-12);
    }

    #[test]
    fn overall_rate_is_the_weighted_stage_mix(
        w1 in 0.0f64..1e6, w2 in proptest::collection::vec(0.0f64..1e6, 39), sigma2 in 1e-3f64..10.0,
    ) {
        let cfg = FrameConfig { sigma2, ..FrameConfig::default() };
        let r1 = rate_stage1(w1, &cfg).unwrap();
        let r2 = rate_stage2(&w2, &cfg).unwrap();
        let n = cfg.n_blocks as f64;
        let r = overall_rate(r1, r2, cfg.n_blocks);
        prop_assert!(r >= 0.0 && r1 >= 0.0 && r2 >= 0.0);
        prop_assert!((r - (r1 / n + (n - 1.0) * r2 / n)).abs() <= 1e-12 * r.max(1.0));
    }

    #[test]
    fn exact_stage2_estimates_combine_coherently(
        hr in (-3.0f64..3.0, -3.0f64..3.0), hd in (-3.0f64..3.0, -3.0f64..3.0), tau2 in 2usize..9,
    ) {
        let (h_r, h_d) = (Complex64::new(hr.0, hr.1), Complex64::new(hd.0, hd.1));
        let theta = stage2_training_matrix(tau2).unwrap();
        let y = &theta * CVector::from_vec(vec![h_d, h_r]);
        let est = ls_stage2(&theta, &y).unwrap();
        let combined = (data_phase_stage2(est.delta) * h_r + h_d).norm();
        prop_assert!((combined - (h_r.norm() + h_d.norm())).abs() < 1e-10);
        prop_assert!(combined >= (h_r + h_d).norm() - 1e-12);
    }

    #[test]
    fn optimal_refraction_reaches_the_triangle_bound(seed in any::<u64>(), m in 1usize..30) {
        let mut rng = seeded(seed);
        let c = CVector::from_fn(m, |_, _| complex_normal(&mut rng, 1.0));
        let h_d = complex_normal(&mut rng, 1.0);
        let nu = optimal_refraction(&c, h_d);
        let block = BlockChannel {
            n: 1,
            c_los: c.clone(),
            c_nlos: CVector::zeros(m),
            h_d,
            beta: c[0],
            psi_x: 0.0,
            psi_y: 0.0,
        };
        let gain = end_to_end(&nu, &block).unwrap().norm();
        let bound = c.iter().map(|x| x.norm()).sum::<f64>() + h_d.norm();
        prop_assert!((gain - bound).abs() <= 1e-9 * bound);
    }

    #[test]
    fn cdf_table_is_monotone_and_bounded(xs in proptest::collection::vec(-1e3f64..1e3, 1..200), points in 2usize..50) {
        let cdf = empirical_cdf(&xs).unwrap();
        let t = cdf.table(points);
        prop_assert!(t.windows(2).all(|w| w[1].0 >= w[0].0 && w[1].1 >= w[0].1));
        prop_assert!(t.iter().all(|&(_, p)| (0.0..=1.0).contains(&p)));
        prop_assert_eq!(t[0].1, 0.0);
        prop_assert_eq!(t[t.len() - 1].1, 1.0);
        prop_assert!(xs.iter().all(|&x| (0.0..=1.0).contains(&cdf.probability_at(x))));
    }
}
