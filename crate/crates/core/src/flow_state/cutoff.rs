//! Smooth nonincreasing cutoff: 1 for s <= -1, 0 for s >= -1/2, quintic
//! Hermite blend in between.

/// Returns (cutoff, first derivative, second derivative) at `s`.
#[inline]
pub fn cutoff(s: f64) -> (f64, f64, f64) {
    if s <= -1.0 {
        return (1.0, 0.0, 0.0);
    }
    if s >= -0.5 {
        return (0.0, 0.0, 0.0);
    }
    let v = 2.0 * (s + 1.0);
    let v2 = v * v;
    let step = v2 * v * (10.0 - 15.0 * v + 6.0 * v2);
    let dstep = 30.0 * v2 * (1.0 - v) * (1.0 - v);
    let d2step = 60.0 * v * (1.0 - v) * (1.0 - 2.0 * v);
    (1.0 - step, -2.0 * dstep, -4.0 * d2step)
}

/// The rescaled cutoff at tau = t / t_c: cutoff((tau - 1)/eps), with its
/// first tau-derivative.
#[inline]
pub fn cutoff_eps(tau: f64, eps: f64) -> (f64, f64) {
    let (w, dw, _) = cutoff((tau - 1.0) / eps);
    (w, dw / eps)
}

/// int_{1-eps}^{tau} (1 - cutoff_eps(sigma)) d sigma, in closed form.
pub fn complement_integral(tau: f64, eps: f64) -> f64 {
    let start = 1.0 - eps;
    let end = 1.0 - 0.5 * eps;
    if tau <= start {
        return 0.0;
    }
    let v = 2.0 * ((tau.min(end) - 1.0) / eps + 1.0);
    let v4 = v.powi(4);
    let inside = 0.5 * eps * (2.5 * v4 - 3.0 * v4 * v + v4 * v * v);
    inside + (tau - end).max(0.0)
}

/// sup over s of |w'| + |w''| for the blend.
pub fn derivative_bound() -> f64 {
    (0..=20000)
        .map(|k| {
            let (_, a, b) = cutoff(-1.0 + 0.5 * k as f64 / 20000.0);
            a.abs() + b.abs()
        })
        .fold(0.0, f64::max)
}
