mod common;

use martapprox::chain::StateFunction;
use martapprox::criteria::{
    alpha_coefficient, hannan_profile, maxwell_woodroofe, projective_series, rho_coefficient, AlphaMode,
};
use martapprox::martingale::{averaged_corrector, diff_kernel_m, limit_diff_kernel};
use martapprox::spectral::{
    checked_kv_integral, conditional_norm_identity, normal_integral_and_bound, reversible_seminorm_bound,
    spectral_measure,
};
use martapprox::Observable;
use proptest::prelude::*;
use rand::Rng;

use common::*;

fn chain_case() -> impl Strategy<Value = (u64, usize)> {
    (any::<u64>(), 2usize..=8)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn constructed_chains_are_stochastic_and_stationary((seed, n) in chain_case()) {
        let c = random_chain(&mut rng(seed), n);
        prop_assert!(c.max_row_deviation() <= 1e-12);
        prop_assert!(c.stationarity_residual() <= 1e-10);
        prop_assert!(c.pi().iter().all(|p| *p > 0.0));
    }

    #[test]
    fn operator_is_a_contraction((seed, n) in chain_case()) {
        let mut r = rng(seed);
        let c = random_chain(&mut r, n);
        let h = StateFunction::new((0..n).map(|_| r.random_range(-10.0..10.0)).collect());
        let qh = c.apply_operator(&h, 1).unwrap();
        prop_assert!(c.norm_pi(&qh).unwrap() <= c.norm_pi(&h).unwrap() * (1.0 + 1e-12));
    }

    #[test]
    fn operator_powers_compose((seed, n) in chain_case(), a in 0usize..12, b in 0usize..12) {
        let mut r = rng(seed);
        let c = random_chain(&mut r, n);
        let h = StateFunction::new((0..n).map(|_| r.random_range(-10.0..10.0)).collect());
        let twice = c.apply_operator(&c.apply_operator(&h, a).unwrap(), b).unwrap();
        let once = c.apply_operator(&h, a + b).unwrap();
        prop_assert!(twice.max_abs_diff(&once) <= 1e-12 * h.max_abs().max(1.0));
    }

    #[test]
    fn poisson_and_series_variances_agree(seed in any::<u64>(), n in 2usize..=10) {
        let mut r = rng(seed);
        let c = random_chain(&mut r, n);
        let f = random_observable(&mut r, &c);
        // long_run_variance fails with IdentityMismatch when the routes disagree beyond 1e-8.
        let sigma2 = c.long_run_variance(&f).unwrap();
        prop_assert!(sigma2 >= 0.0);
    }

    #[test]
    fn difference_kernels_are_centered((seed, n) in chain_case(), m in 1usize..40) {
        let mut r = rng(seed);
        let c = random_chain(&mut r, n);
        let f = random_observable(&mut r, &c);
        let scale = f.max_abs().max(1.0);
        prop_assert!(diff_kernel_m(&c, &f, m).unwrap().centering_residual(&c) <= 1e-10 * scale * m as f64);
        let g = c.poisson_solve(&f).unwrap();
        prop_assert!(limit_diff_kernel(&c, &f).unwrap().centering_residual(&c) <= 1e-10 * g.max_abs().max(1.0));
    }

    #[test]
    fn drift_sums_are_dominated((seed, n) in chain_case(), m in 1usize..30, k in 1usize..30) {
        let mut r = rng(seed);
        let c = random_chain(&mut r, n);
        let f = random_observable(&mut r, &c);
        let y = averaged_corrector(&c, &f, m).unwrap().y;
        let y = Observable::new(&c, y.to_vec()).unwrap();
        let lhs = c.norm_pi(&c.conditional_sum(&y, k).unwrap()).unwrap();
        let rhs = c.norm_pi(&c.conditional_sum(&f, k).unwrap()).unwrap();
        prop_assert!(lhs <= rhs * (1.0 + 1e-10) + 1e-12, "{} > {}", lhs, rhs);
    }

    #[test]
    fn projective_finiteness_implies_mw_finiteness((seed, n) in chain_case()) {
        let mut r = rng(seed);
        let c = random_chain(&mut r, n);
        let f = random_observable(&mut r, &c);
        let proj = projective_series(&c, &f, 200).unwrap();
        let mw = maxwell_woodroofe(&c, &f, 200).unwrap();
        if proj.upper_bound().is_finite() {
            prop_assert!(mw.upper_bound().is_finite());
        }
    }

    #[test]
    fn mixing_coefficients_ordered_on_reversible_chains((seed, n) in (any::<u64>(), 2usize..=6)) {
        let c = random_reversible(&mut rng(seed), n);
        let mut prev = (f64::INFINITY, f64::INFINITY);
        for k in 1..=6 {
            let rho = rho_coefficient(&c, k).unwrap();
            let alpha = alpha_coefficient(&c, k, AlphaMode::Exact).unwrap().value;
            prop_assert!(alpha <= rho + 1e-12);
            prop_assert!(rho <= prev.0 + 1e-12 && alpha <= prev.1 + 1e-12);
            prev = (rho, alpha);
        }
    }

    #[test]
    fn hannan_squares_telescope((seed, n) in chain_case()) {
        let mut r = rng(seed);
        let c = random_chain(&mut r, n);
        let f = random_observable(&mut r, &c);
        let h = hannan_profile(&c, &f, 400).unwrap();
        let norm_sq = c.norm_pi(&f).unwrap().powi(2);
        let sq: f64 = h.report.terms.iter().map(|t| t * t).sum();
        // The omitted squares sum to ||Q^{K+1} f||^2 <= (tail bound)^2.
        prop_assert!(sq <= norm_sq * (1.0 + 1e-10));
        prop_assert!(norm_sq - sq <= h.report.tail_bound.powi(2) + 1e-10 * norm_sq.max(1.0));
    }

    #[test]
    fn reversible_spectral_identities((seed, n) in chain_case()) {
        let mut r = rng(seed);
        let c = random_reversible(&mut r, n);
        let f = random_observable(&mut r, &c);
        let m = spectral_measure(&c, &f).unwrap();
        prop_assert!(m.points.iter().all(|z| z.im == 0.0 && z.re.abs() <= 1.0));
        prop_assert!(m.weights.iter().all(|w| *w >= 0.0));
        checked_kv_integral(&c, &f, &m).unwrap();
        for k in 1..=64 {
            conditional_norm_identity(&c, &f, &m, k).unwrap();
        }
    }

    #[test]
    fn circulant_spectral_identities((seed, n) in (any::<u64>(), 3usize..=8)) {
        let mut r = rng(seed);
        let c = random_circulant(&mut r, n);
        let f = random_observable(&mut r, &c);
        let m = spectral_measure(&c, &f).unwrap();
        prop_assert!(m.points.iter().all(|z| z.norm() <= 1.0));
        for k in 1..=64 {
            conditional_norm_identity(&c, &f, &m, k).unwrap();
        }
        let b = normal_integral_and_bound(&m, 16).unwrap();
        prop_assert!(b.normcond_integral.is_finite() && b.plus_bound.is_finite());
    }

    #[test]
    fn spectral_bounds_shrink_with_m((seed, n) in chain_case()) {
        let mut r = rng(seed);
        let c = random_reversible(&mut r, n);
        prop_assume!(c.spectral_radius_bound() <= 0.95);
        let f = random_observable(&mut r, &c);
        let m = spectral_measure(&c, &f).unwrap();
        for mm in [8usize, 16, 32, 64] {
            let (fine, coarse) = (reversible_seminorm_bound(&m, mm).unwrap(), reversible_seminorm_bound(&m, mm / 2).unwrap());
            prop_assert!(fine <= coarse * (1.0 + 1e-12));
            let (fine, coarse) = (
                normal_integral_and_bound(&m, mm).unwrap().plus_bound,
                normal_integral_and_bound(&m, mm / 2).unwrap().plus_bound,
            );
            prop_assert!(fine <= coarse * (1.0 + 1e-12));
        }
    }
}
