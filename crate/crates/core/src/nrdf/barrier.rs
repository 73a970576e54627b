//! Primal log-barrier Newton method for
//!
//! ```text
//! minimize   ln det(A P Aᵀ + W) − ln det P
//! subject to tr P ≤ D,   P ⪯ A P Aᵀ + W,   P ≻ 0
//! ```
//!
//! over symmetric `P`. The objective is convex (it equals
//! `ln det(P⁻¹ + AᵀW⁻¹A) + ln det W` when `W ≻ 0`), so the central path
//! converges to the global minimizer.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{frobenius, symmetrize};

pub(crate) struct BarrierResult {
    pub pi_post: DMatrix<f64>,
    /// Lagrange multiplier of the trace constraint, in nats per unit of
    /// distortion.
    pub trace_multiplier: f64,
    pub iterations: usize,
    /// Final duality-gap bound in nats.
    pub gap: f64,
}

struct Point {
    f: f64,
    x: DMatrix<f64>,
    y: DMatrix<f64>,
    z: DMatrix<f64>,
    s: f64,
}

struct Problem<'a> {
    a: &'a DMatrix<f64>,
    w: &'a DMatrix<f64>,
    d: f64,
    basis: Vec<DMatrix<f64>>,
    basis_trace: Vec<f64>,
    k: Vec<DMatrix<f64>>,
}

fn chol_inv_ln_det(m: &DMatrix<f64>) -> Option<(DMatrix<f64>, f64)> {
    let c = Cholesky::new(m.clone())?;
    let ld = 2.0 * c.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    if !ld.is_finite() {
        return None;
    }
    Some((c.inverse(), ld))
}

impl<'a> Problem<'a> {
    fn new(a: &'a DMatrix<f64>, w: &'a DMatrix<f64>, d: f64) -> Self {
        let p = a.nrows();
        let mut basis = Vec::with_capacity(p * (p + 1) / 2);
        for i in 0..p {
            for j in i..p {
                let mut e = DMatrix::zeros(p, p);
                e[(i, j)] = 1.0;
                e[(j, i)] = 1.0;
                basis.push(e);
            }
        }
        let basis_trace = basis.iter().map(|e| e.trace()).collect();
        let k = basis.iter().map(|e| a * e * a.transpose()).collect();
        Problem { a, w, d, basis, basis_trace, k }
    }

    fn prior(&self, p: &DMatrix<f64>) -> DMatrix<f64> {
        symmetrize(&(self.a * p * self.a.transpose() + self.w))
    }

    fn objective(&self, p: &DMatrix<f64>) -> Option<f64> {
        let (_, ld_pi) = chol_inv_ln_det(&self.prior(p))?;
        let (_, ld_p) = chol_inv_ln_det(p)?;
        Some(ld_pi - ld_p)
    }

    fn eval(&self, p: &DMatrix<f64>, tau: f64) -> Option<Point> {
        let pi = self.prior(p);
        let s = self.d - p.trace();
        if !(s > 0.0) {
            return None;
        }
        let (z, ld_p) = chol_inv_ln_det(p)?;
        let (x, ld_pi) = chol_inv_ln_det(&pi)?;
        let (y, ld_gap) = chol_inv_ln_det(&symmetrize(&(&pi - p)))?;
        let f = tau * (ld_pi - ld_p) - s.ln() - ld_gap - ld_p;
        Some(Point { f, x, y, z, s })
    }

    fn expand(&self, coeffs: &DVector<f64>) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.a.nrows(), self.a.nrows());
        for (c, e) in coeffs.iter().zip(&self.basis) {
            m += e * *c;
        }
        m
    }

    fn grad_hess(&self, pt: &Point, tau: f64) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.basis.len();
        let xk: Vec<DMatrix<f64>> = self.k.iter().map(|k| &pt.x * k).collect();
        let ze: Vec<DMatrix<f64>> = self.basis.iter().map(|e| &pt.z * e).collect();
        let yl: Vec<DMatrix<f64>> =
            self.k.iter().zip(&self.basis).map(|(k, e)| &pt.y * (k - e)).collect();
        let mut g = DVector::zeros(n);
        let mut h = DMatrix::zeros(n, n);
        for a in 0..n {
            let (tr_xk, tr_ze, tr_yl) = (xk[a].trace(), ze[a].trace(), yl[a].trace());
            g[a] = tau * (tr_xk - tr_ze) - tr_yl - tr_ze + self.basis_trace[a] / pt.s;
            for b in a..n {
                let xkxk = (&xk[a] * &xk[b]).trace();
                let zeze = (&ze[a] * &ze[b]).trace();
                let ylyl = (&yl[a] * &yl[b]).trace();
                let v = tau * (zeze - xkxk)
                    + ylyl
                    + zeze
                    + self.basis_trace[a] * self.basis_trace[b] / (pt.s * pt.s);
                h[(a, b)] = v;
                h[(b, a)] = v;
            }
        }
        (g, h)
    }
}

fn newton_direction(g: &DVector<f64>, h: &DMatrix<f64>) -> Option<DVector<f64>> {
    let scale = h.diagonal().amax().max(f64::MIN_POSITIVE);
    let mut reg = 0.0;
    for _ in 0..12 {
        let mut hr = h.clone();
        for i in 0..hr.nrows() {
            hr[(i, i)] += reg;
        }
        if let Some(c) = Cholesky::new(hr) {
            let dx = c.solve(&(-g));
            if dx.iter().all(|v| v.is_finite()) {
                return Some(dx);
            }
        }
        reg = if reg == 0.0 { 1e-14 * scale } else { reg * 100.0 };
    }
    None
}

/// Runs the barrier method from a strictly feasible `start`.
pub(crate) fn solve(
    a: &DMatrix<f64>,
    w: &DMatrix<f64>,
    d: f64,
    start: DMatrix<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<BarrierResult> {
    let prob = Problem::new(a, w, d);
    let p = a.nrows();
    let nu = 1.0 + 2.0 * p as f64;
    let mut x = start;
    let mut tau = {
        let phi = prob.objective(&x).unwrap_or(1.0).abs();
        (nu / phi.max(1e-3)).clamp(1e-3, 1e3)
    };
    let mut iterations = 0;
    let mut pt = prob
        .eval(&x, tau)
        .ok_or_else(|| Error::NoConvergence { iterations: 0, residual: f64::INFINITY })?;
    loop {
        // Centering.
        loop {
            let (g, h) = prob.grad_hess(&pt, tau);
            let dx = newton_direction(&g, &h)
                .ok_or(Error::NoConvergence { iterations, residual: nu / tau })?;
            let decrement = -g.dot(&dx);
            if decrement / 2.0 <= 1e-12 {
                break;
            }
            if iterations >= max_iter {
                return Err(Error::NoConvergence { iterations, residual: nu / tau });
            }
            iterations += 1;
            let step = prob.expand(&dx);
            let mut t = 1.0;
            let slack = 64.0 * f64::EPSILON * pt.f.abs().max(1.0);
            let mut accepted = None;
            while t > 1e-14 {
                let cand = symmetrize(&(&x + &step * t));
                if let Some(np) = prob.eval(&cand, tau) {
                    if np.f <= pt.f - 0.25 * t * decrement + slack {
                        accepted = Some((cand, np));
                        break;
                    }
                }
                t *= 0.5;
            }
            match accepted {
                Some((cand, np)) => {
                    let moved = frobenius(&(&cand - &x));
                    x = cand;
                    pt = np;
                    if moved <= 1e-15 * frobenius(&x) {
                        break;
                    }
                }
                // Rounding noise dominates the decrease; the point is as
                // centred as this precision allows.
                None => break,
            }
        }
        let gap = nu / tau;
        // The distortion budget is spent at any optimum with positive rate,
        // so keep tightening until the trace slack is negligible as well.
        let saturated = pt.s <= 1e-10 * d || tau >= 1e16;
        if gap <= tol && saturated {
            return Ok(BarrierResult {
                trace_multiplier: 1.0 / (tau * pt.s),
                pi_post: x,
                iterations,
                gap,
            });
        }
        tau *= 10.0;
        pt = prob
            .eval(&x, tau)
            .ok_or(Error::NoConvergence { iterations, residual: gap })?;
    }
}

/// A strictly feasible starting point: the steady-state error covariance of
/// a Kalman filter observing the full state through noise of variance
/// `D/(2p)` per component.
pub(crate) fn phase_one(a: &DMatrix<f64>, w: &DMatrix<f64>, d: f64) -> Option<DMatrix<f64>> {
    let p = a.nrows();
    let sigma2 = d / (2.0 * p as f64);
    let eye = DMatrix::<f64>::identity(p, p);
    let mut post = &eye * (0.5 * sigma2);
    for _ in 0..10_000 {
        let prior = symmetrize(&(a * &post * a.transpose() + w));
        let info = Cholesky::new(prior.clone())?.inverse() + &eye / sigma2;
        let next = symmetrize(&Cholesky::new(symmetrize(&info))?.inverse());
        let change = frobenius(&(&next - &post));
        post = next;
        if change <= 1e-13 * frobenius(&post).max(1e-300) {
            break;
        }
    }
    let prior = symmetrize(&(a * &post * a.transpose() + w));
    let feasible = post.trace() < d
        && Cholesky::new(post.clone()).is_some()
        && Cholesky::new(symmetrize(&(&prior - &post))).is_some();
    feasible.then_some(post)
}
