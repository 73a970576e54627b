//! Acceptance report: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Built with `harness = false`.

use std::f64::consts::{E, PI};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use zdcodec::codec::{run_with_solution, PipelineOptions};
use zdcodec::ecdq::{quantize_subtractive, DitherStream};
use zdcodec::linalg::frobenius;
use zdcodec::model::{
    augment_ar, validate_model, ArCoefficients, SourceNoise, StateSpaceModel, ValidatedModel,
};
use zdcodec::nrdf::oracle::grid_oracle_nrdf;
use zdcodec::nrdf::{
    bounds, bounds_for_rate, lattice_gap, rate_distortion_sweep, scalar_gap, solve_nrdf, SolverOptions,
    G_SPHERE,
};
use zdcodec::realization::{derive_channel, kalman_recursion};

const FLOOR: f64 = 0.26303;

struct Outcome {
    pass: bool,
    detail: String,
}

fn unstable_pair() -> ValidatedModel {
    validate_model(
        &StateSpaceModel::new(
            DMatrix::from_row_slice(2, 2, &[-1.3, 0.4, -0.3, 0.0]),
            DMatrix::identity(2, 2),
            None,
        )
        .unwrap(),
    )
    .unwrap()
}

fn random_model(rng: &mut ChaCha8Rng, p: usize) -> ValidatedModel {
    loop {
        let a: DMatrix<f64> = DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.2..1.2));
        let b: DMatrix<f64> = DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
        if b.determinant().abs() < 0.2 {
            continue;
        }
        let Ok(m) = StateSpaceModel::new(a, b, None) else { continue };
        if let Ok(v) = validate_model(&m) {
            return v;
        }
    }
}

fn unstable_floor() -> Outcome {
    let m = unstable_pair();
    let grid: Vec<f64> = (1..=50).map(|k| k as f64 / 10.0).collect();
    let sols = match rate_distortion_sweep(&m, &grid, &SolverOptions::default()) {
        Ok(s) => s,
        Err(e) => return Outcome { pass: false, detail: format!("solver error: {e}") },
    };
    let min = sols.iter().map(|s| s.1.rate).fold(f64::INFINITY, f64::min);
    let at5 = sols.last().unwrap().1.rate;
    let above = min >= FLOOR - 1e-4;
    let near = at5 - FLOOR <= 5e-3;
    Outcome {
        pass: above && near,
        detail: format!(
            "min over D in [0.1, 5] = {min:.6} (>= {:.5}: {above}); R(5) = {at5:.6}, R(5) - floor = {:.6} (<= 5e-3: {near}); \
             the minimized objective decreases toward the floor only as D grows without bound",
            FLOOR - 1e-4,
            at5 - FLOOR
        ),
    }
}

fn scalar_closed_form() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let a = rng.random_range(-2.0..2.0);
        let b = rng.random_range(0.1..2.0);
        let d = rng.random_range(0.01..5.0);
        let m = validate_model(
            &StateSpaceModel::new(DMatrix::from_element(1, 1, a), DMatrix::from_element(1, 1, b), None)
                .unwrap(),
        );
        let Ok(m) = m else {
            return Outcome { pass: false, detail: format!("a={a} b={b} rejected") };
        };
        let rate = match solve_nrdf(&m, d, &SolverOptions::default()) {
            Ok(s) => s.rate,
            Err(e) => return Outcome { pass: false, detail: format!("a={a} D={d}: {e}") },
        };
        let exact = 0.5 * ((a * a * d + b * b) / d).max(1.0).log2();
        worst = worst.max((rate - exact).abs());
    }
    Outcome { pass: worst <= 1e-9, detail: format!("max |error| = {worst:.3e} over 50 triples") }
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    let mut below = 0usize;
    for _ in 0..20 {
        let m = random_model(&mut rng, 2);
        for _ in 0..5 {
            let d = rng.random_range(0.05..4.0);
            let sol = match solve_nrdf(&m, d, &SolverOptions::default()) {
                Ok(s) => s,
                Err(e) => return Outcome { pass: false, detail: format!("solver: {e}") },
            };
            let oracle = match grid_oracle_nrdf(&m, d, 200) {
                Ok(r) => r,
                Err(e) => return Outcome { pass: false, detail: format!("oracle: {e}") },
            };
            worst = worst.max((sol.rate - oracle).abs());
            if oracle < sol.rate - 1e-9 {
                below += 1;
            }
        }
    }
    Outcome {
        pass: worst <= 1e-3,
        detail: format!("max |solver - oracle| = {worst:.3e} over 100 points; oracle below solver {below} times"),
    }
}

fn gap_exactness() -> Outcome {
    let mut worst = 0.0f64;
    for p in [1usize, 2, 4] {
        let formula = p as f64 / 2.0 * (PI * E / 6.0).log2() + 1.0;
        let b = bounds_for_rate(0.7, p, None).unwrap();
        worst = worst.max((b.upper_scalar - b.lower - formula).abs());
        worst = worst.max((scalar_gap(p) - formula).abs());
    }
    let (g1, g2) = (scalar_gap(1), scalar_gap(2));
    let quoted = (g1 - 1.25457).abs().max((g2 - 1.50913).abs());
    Outcome {
        pass: worst <= 1e-12,
        detail: format!(
            "max |gap - formula| = {worst:.1e}; gap(1) = {g1:.6}, gap(2) = {g2:.6} (quoted 1.25457, 1.50913 differ by {quoted:.1e})"
        ),
    }
}

fn kalman_identities() -> Outcome {
    let m = unstable_pair();
    let sol = solve_nrdf(&m, 1.0, &SolverOptions::default()).unwrap();
    let params = derive_channel(&sol, None).unwrap();
    let pi0 = DMatrix::identity(2, 2) * 10.0;
    let tr = kalman_recursion(&m, &params, &sol, &pi0, 500);
    let post = tr.post.last().unwrap();
    let expected = &params.basis_inv * DMatrix::from_diagonal(&params.delta) * params.basis_inv.transpose();
    let post_err = frobenius(&(post - expected));
    let gain_err = *tr.gain_error.last().unwrap();
    let pass = post_err <= 1e-8 && gain_err <= 1e-8 && tr.converged_at.is_some();
    Outcome {
        pass,
        detail: format!(
            "||G - I|| = {gain_err:.2e}, ||Pi_post - T^-1 diag(delta) T^-T|| = {post_err:.2e}, prior converged at t = {:?}",
            tr.converged_at
        ),
    }
}

fn dither_law() -> Outcome {
    let n = 100_000;
    let delta = 1.0;
    let dither = DitherStream::new(11);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut lines = Vec::new();
    let mut pass = true;
    for name in ["gaussian(0,9)", "constant(0.37)", "bimodal(+-4, sd 0.5)"] {
        let mut xs = Vec::with_capacity(n);
        let mut errs = Vec::with_capacity(n);
        for t in 0..n {
            let x: f64 = match name {
                "gaussian(0,9)" => 3.0 * rng.sample::<f64, _>(StandardNormal),
                "constant(0.37)" => 0.37,
                _ => {
                    let sign = if rng.random_bool(0.5) { 4.0 } else { -4.0 };
                    sign + 0.5 * rng.sample::<f64, _>(StandardNormal)
                }
            };
            let r = dither.sample(t as u64, 0, delta);
            errs.push(quantize_subtractive(x, delta, r).reconstruction - x);
            xs.push(x);
        }
        let mean_e = errs.iter().sum::<f64>() / n as f64;
        let var_e = errs.iter().map(|e| (e - mean_e).powi(2)).sum::<f64>() / n as f64;
        let mean_x = xs.iter().sum::<f64>() / n as f64;
        let var_x = xs.iter().map(|x| (x - mean_x).powi(2)).sum::<f64>() / n as f64;
        let cov = xs.iter().zip(&errs).map(|(x, e)| (x - mean_x) * (e - mean_e)).sum::<f64>() / n as f64;
        let corr = if var_x > 0.0 { cov / (var_x * var_e).sqrt() } else { 0.0 };
        let mut sorted = errs.clone();
        sorted.sort_by(f64::total_cmp);
        let ks = sorted
            .iter()
            .enumerate()
            .map(|(k, e)| {
                let cdf = (e / delta + 0.5).clamp(0.0, 1.0);
                (cdf - k as f64 / n as f64).abs().max(((k + 1) as f64 / n as f64 - cdf).abs())
            })
            .fold(0.0, f64::max);
        let rel_var = (var_e / (delta * delta / 12.0) - 1.0).abs();
        let ok = ks <= 0.01 && rel_var <= 0.02 && corr.abs() < 0.02;
        pass &= ok;
        lines.push(format!("{name}: KS {ks:.4}, var rel err {rel_var:.4}, corr {corr:.4}"));
    }
    Outcome { pass, detail: lines.join("; ") }
}

struct SandwichStats {
    mse_rel: f64,
    rate: f64,
    lower: f64,
    upper: f64,
    ideal: f64,
}

fn seed_averaged(m: &ValidatedModel, d: f64, n: usize, seeds: &[u64]) -> Result<SandwichStats, String> {
    let sol = solve_nrdf(m, d, &SolverOptions::default()).map_err(|e| e.to_string())?;
    let b = bounds(&sol, None).unwrap();
    let (mut mse, mut rate, mut ideal) = (0.0, 0.0, 0.0);
    for &seed in seeds {
        let (r, _) = run_with_solution(m, &sol, n, seed, &PipelineOptions::default()).map_err(|e| e.to_string())?;
        mse += r.empirical_mse;
        rate += r.empirical_rate;
        ideal += r.ideal_bits / n as f64;
    }
    let k = seeds.len() as f64;
    Ok(SandwichStats {
        mse_rel: mse / k / d - 1.0,
        rate: rate / k,
        lower: b.lower,
        upper: b.upper_scalar,
        ideal: ideal / k,
    })
}

fn sandwich(m: &ValidatedModel, ds: &[f64], n: usize, seeds: &[u64]) -> Outcome {
    let mut pass = true;
    let mut lines = Vec::new();
    for &d in ds {
        match seed_averaged(m, d, n, seeds) {
            Ok(s) => {
                let ok = s.mse_rel.abs() <= 0.05 && s.rate >= s.lower - 0.05 && s.rate <= s.upper + 0.05;
                pass &= ok;
                lines.push(format!(
                    "D={d}: mse/D-1 {:+.4}, rate {:.4} in [{:.4}, {:.4}] (ideal {:.4})",
                    s.mse_rel, s.rate, s.lower, s.upper, s.ideal
                ));
            }
            Err(e) => {
                pass = false;
                lines.push(format!("D={d}: {e}"));
            }
        }
    }
    Outcome { pass, detail: lines.join("; ") }
}

fn end_to_end() -> Outcome {
    sandwich(&unstable_pair(), &[0.5, 1.0, 2.0], 200_000, &[1, 2, 3, 4, 5])
}

fn synchronized(m: &ValidatedModel, d: f64, n: usize, seed: u64) -> Result<(), String> {
    let sol = solve_nrdf(m, d, &SolverOptions::default()).map_err(|e| e.to_string())?;
    let opts = PipelineOptions { fresh_decoder: true, ..Default::default() };
    run_with_solution(m, &sol, n, seed, &opts).map(|_| ()).map_err(|e| e.to_string())
}

fn codec_sync() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut failures = Vec::new();
    for k in 0..10 {
        let p = 1 + k % 3;
        let m = random_model(&mut rng, p);
        let d = rng.random_range(0.2..1.0) * p as f64;
        if let Err(e) = synchronized(&m, d, 100_000, 100 + k as u64) {
            failures.push(format!("model {k}: {e}"));
        }
    }
    Outcome {
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            "10 models (p = 1..3), 1e5 steps each, paired and fresh decoders bit-identical".into()
        } else {
            failures.join("; ")
        },
    }
}

fn ar3() -> Outcome {
    let coeffs = [0.2, 0.1, 0.05];
    let c = ArCoefficients {
        a_list: coeffs.iter().map(|a| DMatrix::from_element(1, 1, *a)).collect(),
        b: DMatrix::from_element(1, 1, 1.0),
    };
    let aug = augment_ar(&c).unwrap();
    let mut noise = SourceNoise::new(21, aug.q());
    let mut state = noise.initial_state(&aug);
    let mut hist: Vec<f64> = vec![state[2], state[1], state[0]];
    let mut traj_err = 0.0f64;
    for _ in 0..10_000 {
        let w: DVector<f64> = noise.next_w();
        state = aug.propagate(&state, &w);
        let k = hist.len();
        let next = coeffs[0] * hist[k - 1] + coeffs[1] * hist[k - 2] + coeffs[2] * hist[k - 3] + w[0];
        hist.push(next);
        for j in 0..3 {
            traj_err = traj_err.max((state[j] - hist[hist.len() - 1 - j]).abs());
        }
    }
    let m = validate_model(&aug).unwrap();
    let gap_ok = {
        let sol = solve_nrdf(&m, 1.0, &SolverOptions::default()).unwrap();
        let b = bounds(&sol, None).unwrap();
        (b.upper_scalar - b.lower - scalar_gap(3)).abs() <= 1e-12
    };
    let sw = sandwich(&m, &[0.5, 1.0, 2.0], 200_000, &[1, 2, 3, 4, 5]);
    let sync = synchronized(&m, 1.0, 100_000, 9);
    let pass = traj_err <= 1e-12 && gap_ok && sw.pass && sync.is_ok();
    Outcome {
        pass,
        detail: format!(
            "trajectory max |error| = {traj_err:.1e}; gap uses p = 3: {gap_ok}; {}; sync: {}",
            sw.detail,
            sync.err().unwrap_or_else(|| "ok".into())
        ),
    }
}

fn lattice_trend() -> Outcome {
    let mut pass = true;
    let mut prev = f64::INFINITY;
    let mut lines = Vec::new();
    for p in [1usize, 2, 8, 64] {
        let b = bounds_for_rate(1.3, p, Some(G_SPHERE)).unwrap();
        let per_dim = (b.upper_lattice.unwrap() - b.lower) / p as f64;
        let direct = lattice_gap(p, G_SPHERE).unwrap() / p as f64;
        pass &= (per_dim - 1.0 / p as f64).abs() <= 1e-12 && (direct - 1.0 / p as f64).abs() <= 1e-12;
        pass &= per_dim < prev;
        prev = per_dim;
        lines.push(format!("p={p}: {per_dim:.12}"));
    }
    Outcome { pass, detail: lines.join(", ") }
}

fn main() {
    let criteria: [(&str, Duration, fn() -> Outcome); 10] = [
        ("unstable floor", Duration::from_secs(10), unstable_floor),
        ("scalar closed form", Duration::from_secs(1), scalar_closed_form),
        ("oracle equivalence", Duration::from_secs(300), oracle_equivalence),
        ("bound gap exactness", Duration::from_secs(1), gap_exactness),
        ("kalman identities", Duration::from_secs(1), kalman_identities),
        ("dither error law", Duration::from_secs(5), dither_law),
        ("end-to-end rate and distortion", Duration::from_secs(120), end_to_end),
        ("codec synchronization", Duration::from_secs(60), codec_sync),
        ("AR(3) generalization", Duration::from_secs(120), ar3),
        ("lattice bound trend", Duration::from_secs(1), lattice_trend),
    ];
    let mut failed = 0;
    for (k, (name, budget, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = run();
        let took = start.elapsed();
        let in_time = took <= *budget;
        let pass = out.pass && in_time;
        failed += !pass as usize;
        println!(
            "criterion {:>2} {:<32} {}  [{:.2?} / {:?}] {}",
            k + 1,
            name,
            if pass { "PASS" } else { "FAIL" },
            took,
            budget,
            out.detail
        );
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
