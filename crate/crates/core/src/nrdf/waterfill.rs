use nalgebra::DVector;

use crate::error::{Error, Result};

/// Reverse water-filling: `δᵢ = min(ξ, λᵢ)` with `Σ δᵢ = D`, or `δ = λ`
/// (and `ξ = max λ`) when the budget covers every component.
///
/// The level is found exactly by walking the sorted variances.
pub fn reverse_waterfill(lambda: &DVector<f64>, d: f64) -> Result<(DVector<f64>, f64)> {
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::NonPositiveInput(format!("distortion D = {d}")));
    }
    if lambda.is_empty() {
        return Err(Error::NonPositiveInput("empty variance vector".into()));
    }
    if let Some(bad) = lambda.iter().find(|l| !(**l > 0.0) || !l.is_finite()) {
        return Err(Error::NonPositiveInput(format!("variance {bad}")));
    }
    let total: f64 = lambda.iter().sum();
    if total <= d {
        return Ok((lambda.clone(), lambda.max()));
    }
    let mut sorted: Vec<f64> = lambda.iter().cloned().collect();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut below = 0.0;
    let mut xi = d / n as f64;
    for (k, &l) in sorted.iter().enumerate() {
        // Components k.. sit at the level; the ones before keep their variance.
        let level = (d - below) / (n - k) as f64;
        if level <= l {
            xi = level;
            break;
        }
        below += l;
    }
    Ok((lambda.map(|l| l.min(xi)), xi))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bisect(lambda: &[f64], d: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, lambda.iter().cloned().fold(0.0, f64::max));
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let s: f64 = lambda.iter().map(|l| l.min(mid)).sum();
            if s > d {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn examples() {
        let (delta, xi) = reverse_waterfill(&DVector::from_vec(vec![4.0, 1.0]), 2.0).unwrap();
        assert_eq!((delta[0], delta[1], xi), (1.0, 1.0, 1.0));
        let (delta, xi) = reverse_waterfill(&DVector::from_vec(vec![1.0, 1.0]), 4.0).unwrap();
        assert_eq!((delta[0], delta[1], xi), (1.0, 1.0, 1.0));
        let (delta, xi) = reverse_waterfill(&DVector::from_vec(vec![1.0]), 0.5).unwrap();
        assert_eq!((delta[0], xi), (0.5, 0.5));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(reverse_waterfill(&DVector::from_vec(vec![1.0, 0.0]), 1.0).is_err());
        assert!(reverse_waterfill(&DVector::from_vec(vec![1.0]), 0.0).is_err());
        assert!(reverse_waterfill(&DVector::from_vec(vec![1.0]), f64::NAN).is_err());
    }

    #[test]
    fn matches_bisection() {
        let cases: [(&[f64], f64); 4] = [
            (&[3.0, 2.0, 0.5], 1.0),
            (&[3.0, 2.0, 0.5], 4.0),
            (&[10.0, 0.1, 0.2, 5.0], 2.7),
            (&[1.0, 1.0, 1.0], 1.5),
        ];
        for (l, d) in cases {
            let (delta, xi) = reverse_waterfill(&DVector::from_row_slice(l), d).unwrap();
            assert!((xi - bisect(l, d)).abs() < 1e-12 * d);
            assert!((delta.sum() - d).abs() < 1e-12 * d);
        }
    }

    #[test]
    fn minimizes_rate_on_a_grid() {
        let lambda = [2.5, 0.7];
        for d in [0.3, 1.0, 2.0, 3.5] {
            let (delta, _) = reverse_waterfill(&DVector::from_row_slice(&lambda), d).unwrap();
            let rate = |d1: f64, d2: f64| 0.5 * ((lambda[0] / d1).log2() + (lambda[1] / d2).log2());
            let best = rate(delta[0], delta[1]);
            let n = 400;
            for i in 1..=n {
                for j in 1..=n {
                    let d1 = lambda[0] * i as f64 / n as f64;
                    let d2 = lambda[1] * j as f64 / n as f64;
                    if d1 + d2 <= d {
                        assert!(rate(d1, d2) >= best - 1e-12);
                    }
                }
            }
        }
    }
}
