use nalgebra::{Complex, DMatrix, DVector};
use proptest::prelude::*;

use zdcodec::codec::{conditional_pmf, run_with_solution, PipelineOptions, PMF_FLOOR};
use zdcodec::ecdq::quantize_subtractive;
use zdcodec::linalg::min_eigenvalue;
use zdcodec::model::{augment_ar, spectrum, validate_model, ArCoefficients, SourceNoise, StateSpaceModel};
use zdcodec::nrdf::{reverse_waterfill, solve_nrdf, SolverOptions};

fn matrix(p: usize, entries: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(p, p, &entries[..p * p])
}

/// Characteristic polynomial coefficients `c_0 = 1, c_1, …, c_p` of
/// `det(zI − A)` by Faddeev–LeVerrier.
fn char_poly(a: &DMatrix<f64>) -> Vec<f64> {
    let p = a.nrows();
    let mut c = vec![1.0];
    let mut m = DMatrix::<f64>::zeros(p, p);
    for k in 1..=p {
        m = a * &m + DMatrix::identity(p, p) * c[k - 1];
        let am = a * &m;
        c.push(-am.trace() / k as f64);
    }
    c
}

/// Roots by Durand–Kerner iteration.
fn poly_roots(c: &[f64]) -> Vec<Complex<f64>> {
    let n = c.len() - 1;
    let eval = |z: Complex<f64>| c.iter().fold(Complex::new(0.0, 0.0), |acc, ci| acc * z + ci);
    let seed = Complex::new(0.4, 0.9);
    let mut roots: Vec<Complex<f64>> = (0..n).map(|k| seed.powu(k as u32) * (1.0 + c.iter().map(|x| x.abs()).sum::<f64>())).collect();
    for _ in 0..2000 {
        for i in 0..n {
            let mut denom = Complex::new(1.0, 0.0);
            for j in 0..n {
                if i != j {
                    denom *= roots[i] - roots[j];
                }
            }
            let step = eval(roots[i]) / denom;
            roots[i] -= step;
        }
    }
    roots
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quantizer_shift_equivariance(x in -1e3..1e3f64, r in -0.5..0.5f64, k in -1000i64..1000, delta in 0.1..4.0f64) {
        let r = r * delta;
        let base = quantize_subtractive(x, delta, r).index;
        let shifted = quantize_subtractive(x + k as f64 * delta, delta, r).index;
        // Exact shift except when x sits within rounding distance of a cell edge.
        let frac = ((x + r) / delta).fract().abs();
        prop_assume!((frac - 0.5).abs() > 1e-9);
        prop_assert_eq!(shifted, base + k);
    }

    #[test]
    fn pmf_mass_and_floor(r in -0.5..0.5f64, sigma in 0.001..40.0f64, delta in 0.1..3.0f64) {
        let pmf = conditional_pmf(r * delta, sigma, delta).unwrap();
        let total: f64 = pmf.probs.iter().sum::<f64>() + pmf.p_escape;
        prop_assert!((total - 1.0).abs() < 1e-12, "total {}", total);
        prop_assert!(pmf.probs.iter().all(|p| *p >= PMF_FLOOR));
    }

    #[test]
    fn augmented_trajectory_matches_direct_recursion(
        coeffs in proptest::collection::vec(-0.5..0.5f64, 12),
        bent in proptest::collection::vec(-1.0..1.0f64, 4),
        s in 1usize..=3,
        seed in 0u64..1000,
    ) {
        let p = 2;
        let a_list: Vec<DMatrix<f64>> = (0..s).map(|j| matrix(p, &coeffs[4 * j..])).collect();
        let b = matrix(p, &bent);
        let aug = augment_ar(&ArCoefficients { a_list: a_list.clone(), b: b.clone() }).unwrap();
        prop_assert_eq!(aug.p(), s * p);
        let mut noise = SourceNoise::new(seed, aug.q());
        let mut state = noise.initial_state(&aug);
        // Most recent first.
        let mut hist: Vec<DVector<f64>> = (0..s).map(|j| state.rows(j * p, p).into_owned()).collect();
        for _ in 0..200 {
            let w = noise.next_w();
            state = aug.propagate(&state, &w);
            let mut next = &b * w.rows(0, b.ncols());
            for (j, aj) in a_list.iter().enumerate() {
                next += aj * &hist[j];
            }
            hist.insert(0, next);
            hist.truncate(s);
            for j in 0..s {
                let err = (state.rows(j * p, p) - &hist[j]).amax();
                prop_assert!(err <= 1e-12 * (1.0 + hist[j].amax()), "lag {} error {}", j, err);
            }
        }
    }

    #[test]
    fn spectrum_matches_polynomial_roots(entries in proptest::collection::vec(-2.0..2.0f64, 9), p in 1usize..=3) {
        let a = matrix(p, &entries);
        let m = StateSpaceModel::new(a.clone(), DMatrix::identity(p, p), None).unwrap();
        let report = spectrum(&m);
        let roots = poly_roots(&char_poly(&a));
        let floor: f64 = roots.iter().map(|z| z.norm()).filter(|r| *r > 1.0 + 1e-6).map(f64::log2).sum();
        prop_assume!(roots.iter().all(|z| (z.norm() - 1.0).abs() > 1e-6));
        prop_assert!((report.unstable_log_sum - floor).abs() < 1e-6, "{} vs {}", report.unstable_log_sum, floor);
        let mut mods: Vec<f64> = roots.iter().map(|z| z.norm()).collect();
        mods.sort_by(|x, y| y.total_cmp(x));
        for (ev, r) in report.eigenvalues.iter().zip(&mods) {
            prop_assert!((ev.norm() - r).abs() < 1e-5 * (1.0 + r));
        }
    }

    #[test]
    fn waterfill_spends_the_budget(lambda in proptest::collection::vec(0.01..10.0f64, 1..8), frac in 0.01..0.99f64) {
        let total: f64 = lambda.iter().sum();
        let lambda = DVector::from_vec(lambda);
        let (delta, xi) = reverse_waterfill(&lambda, frac * total).unwrap();
        prop_assert!((delta.sum() - frac * total).abs() < 1e-9 * total);
        for (d, l) in delta.iter().zip(lambda.iter()) {
            prop_assert!(*d <= *l + 1e-12 && (*d - l.min(xi)).abs() < 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn nrdf_solution_invariants(entries in proptest::collection::vec(-1.3..1.3f64, 9), p in 1usize..=3, d in 0.05..3.0f64) {
        let a = matrix(p, &entries);
        let model = StateSpaceModel::new(a, DMatrix::identity(p, p), None).unwrap();
        let m = validate_model(&model).unwrap();
        let sol = solve_nrdf(&m, d, &SolverOptions::default()).unwrap();
        let slack = 1e-8 * (1.0 + d);
        prop_assert!(sol.pi_post.trace() <= d + slack);
        prop_assert!(min_eigenvalue(&(&sol.pi_prior - &sol.pi_post)) >= -slack);
        prop_assert!(sol.rate >= m.spectrum.unstable_log_sum - 1e-9);
        prop_assert!(sol.rate >= 0.0);
        let looser = solve_nrdf(&m, 1.5 * d, &SolverOptions::default()).unwrap();
        prop_assert!(looser.rate <= sol.rate + 1e-7);
    }

    #[test]
    fn encoder_and_decoder_stay_synchronized(entries in proptest::collection::vec(-1.2..1.2f64, 4), seed in any::<u64>(), d in 0.1..2.0f64) {
        let model = StateSpaceModel::new(matrix(2, &entries), DMatrix::identity(2, 2), None).unwrap();
        let m = validate_model(&model).unwrap();
        let sol = solve_nrdf(&m, d, &SolverOptions::default()).unwrap();
        let opts = PipelineOptions { fresh_decoder: true, ..Default::default() };
        let (report, _) = run_with_solution(&m, &sol, 1000, seed, &opts).unwrap();
        prop_assert_eq!(report.per_step_lengths.iter().map(|l| *l as u64).sum::<u64>(), report.total_bits);
        prop_assert!(report.empirical_mse.is_finite() && report.empirical_rate >= 0.0);
    }
}
