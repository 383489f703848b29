//! Upstream axial velocity profile and its extension to the whole line.

use super::FlowError;
use crate::numerics::quad::gauss_kronrod;

/// Length of the quadratic blend used to extend the profile beyond the
/// upstream height.
pub const EXTENSION_LENGTH: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub enum ProfileShape {
    Constant(f64),
    /// Coefficients c_k of sum c_k y^k.
    Polynomial(Vec<f64>),
    /// Monotone cubic (Fritsch-Carlson) interpolant of samples.
    Samples { ys: Vec<f64>, us: Vec<f64>, slopes: Vec<f64>, moments: Vec<f64> },
}

/// Value and first two derivatives of the profile at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileValue {
    pub u: f64,
    pub du: f64,
    pub d2u: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpstreamProfile {
    shape: ProfileShape,
    bar_h: f64,
}

impl UpstreamProfile {
    pub fn constant(value: f64, bar_h: f64) -> Result<Self, FlowError> {
        Self::build(ProfileShape::Constant(value), bar_h)
    }

    pub fn polynomial(coefficients: Vec<f64>, bar_h: f64) -> Result<Self, FlowError> {
        if coefficients.is_empty() {
            return Err(FlowError::InvalidProfile("polynomial needs at least one coefficient".into()));
        }
        Self::build(ProfileShape::Polynomial(coefficients), bar_h)
    }

    /// Samples must start at y = 0, end at y = bar_h and be strictly increasing.
    pub fn samples(ys: Vec<f64>, us: Vec<f64>) -> Result<Self, FlowError> {
        if ys.len() < 3 || ys.len() != us.len() {
            return Err(FlowError::InvalidProfile("need at least 3 (y, u) samples of equal length".into()));
        }
        if ys[0] != 0.0 || ys.windows(2).any(|w| w[1] <= w[0]) {
            return Err(FlowError::InvalidProfile("sample grid must start at 0 and increase strictly".into()));
        }
        let bar_h = *ys.last().unwrap();
        let slopes = fritsch_carlson(&ys, &us);
        let mut shape = ProfileShape::Samples { ys, us, slopes, moments: Vec::new() };
        // Cumulative moments int_0^{y_k} s u(s) ds; GK15 is exact on each cubic piece.
        let mut moments = vec![0.0];
        if let ProfileShape::Samples { ys, .. } = &shape {
            let probe = Self { shape: shape.clone(), bar_h };
            let mut acc = 0.0;
            for w in ys.windows(2) {
                let (v, _) = gauss_kronrod(&mut |s: f64| s * probe.inside(s).u, w[0], w[1]);
                acc += v;
                moments.push(acc);
            }
        }
        if let ProfileShape::Samples { moments: m, .. } = &mut shape {
            *m = moments;
        }
        Self::build(shape, bar_h)
    }

    fn build(shape: ProfileShape, bar_h: f64) -> Result<Self, FlowError> {
        if !(bar_h > 1.0) || !bar_h.is_finite() {
            return Err(FlowError::InvalidParameter("barH must exceed 1".into()));
        }
        let p = Self { shape, bar_h };
        p.validate()?;
        Ok(p)
    }

    pub fn bar_h(&self) -> f64 {
        self.bar_h
    }

    pub fn shape(&self) -> &ProfileShape {
        &self.shape
    }

    pub fn is_constant(&self) -> bool {
        match &self.shape {
            ProfileShape::Constant(_) => true,
            ProfileShape::Polynomial(c) => c.iter().skip(1).all(|&v| v == 0.0),
            ProfileShape::Samples { us, .. } => us.iter().all(|&v| v == us[0]),
        }
    }

    /// Checks inf u > 0, u'/y -> 0 at the axis and (1/y)(u'/y)' >= 0.
    pub fn validate(&self) -> Result<(), FlowError> {
        let n = 2000;
        let dy = self.bar_h / n as f64;
        for k in 0..=n {
            let y = k as f64 * dy;
            let v = self.inside(y);
            if !(v.u > 0.0) || !v.u.is_finite() {
                return Err(FlowError::InvalidProfile(format!("profile must be positive, u({y}) = {}", v.u)));
            }
        }
        let y0 = 1e-6 * self.bar_h;
        let v0 = self.inside(y0);
        if (v0.du / y0).abs() > 1e-3 * (1.0 + self.sup_abs_d2u()) {
            return Err(FlowError::InvalidProfile("u'(y)/y must vanish at the axis".into()));
        }
        for k in 1..=n {
            let y = k as f64 * dy;
            let v = self.inside(y);
            // (1/y)(u'/y)' = (u'' - u'/y) / y^2
            let c = (v.d2u - v.du / y) / (y * y);
            if c < -1e-9 * (1.0 + v.d2u.abs() / (y * y)) {
                return Err(FlowError::InvalidProfile(format!("(1/y)(u'/y)' < 0 at y = {y}")));
            }
        }
        Ok(())
    }

    fn sup_abs_d2u(&self) -> f64 {
        (0..=200).map(|k| self.inside(k as f64 * self.bar_h / 200.0).d2u.abs()).fold(0.0, f64::max)
    }

    /// Profile on [0, bar_h] without extension.
    fn inside(&self, y: f64) -> ProfileValue {
        match &self.shape {
            ProfileShape::Constant(c) => ProfileValue { u: *c, du: 0.0, d2u: 0.0 },
            ProfileShape::Polynomial(c) => {
                let (mut u, mut du, mut d2u) = (0.0, 0.0, 0.0);
                for &ck in c.iter().rev() {
                    d2u = d2u * y + du * 2.0;
                    du = du * y + u;
                    u = u * y + ck;
                }
                ProfileValue { u, du, d2u }
            }
            ProfileShape::Samples { ys, us, slopes, .. } => {
                let i = interval(ys, y);
                let h = ys[i + 1] - ys[i];
                let s = (y - ys[i]) / h;
                let (y0, y1, m0, m1) = (us[i], us[i + 1], slopes[i] * h, slopes[i + 1] * h);
                let h00 = 2.0 * s.powi(3) - 3.0 * s * s + 1.0;
                let h10 = s.powi(3) - 2.0 * s * s + s;
                let h01 = -2.0 * s.powi(3) + 3.0 * s * s;
                let h11 = s.powi(3) - s * s;
                let d00 = 6.0 * s * s - 6.0 * s;
                let d10 = 3.0 * s * s - 4.0 * s + 1.0;
                let d01 = -6.0 * s * s + 6.0 * s;
                let d11 = 3.0 * s * s - 2.0 * s;
                let e00 = 12.0 * s - 6.0;
                let e10 = 6.0 * s - 4.0;
                let e01 = -12.0 * s + 6.0;
                let e11 = 6.0 * s - 2.0;
                ProfileValue {
                    u: h00 * y0 + h10 * m0 + h01 * y1 + h11 * m1,
                    du: (d00 * y0 + d10 * m0 + d01 * y1 + d11 * m1) / h,
                    d2u: (e00 * y0 + e10 * m0 + e01 * y1 + e11 * m1) / (h * h),
                }
            }
        }
    }

    /// Profile extended to the whole line: constant u(0) for y < 0 and a
    /// nondecreasing quadratic blend to a constant for y > bar_h.
    pub fn eval(&self, y: f64) -> ProfileValue {
        if y < 0.0 {
            ProfileValue { u: self.inside(0.0).u, du: 0.0, d2u: 0.0 }
        } else if y <= self.bar_h {
            self.inside(y)
        } else {
            let top = self.inside(self.bar_h);
            let a = top.du.max(0.0);
            let d = (y - self.bar_h).min(EXTENSION_LENGTH);
            let u = top.u + a * d - a * d * d / (2.0 * EXTENSION_LENGTH);
            if y - self.bar_h < EXTENSION_LENGTH {
                ProfileValue { u, du: a * (1.0 - d / EXTENSION_LENGTH), d2u: -a / EXTENSION_LENGTH }
            } else {
                ProfileValue { u, du: 0.0, d2u: 0.0 }
            }
        }
    }

    /// int_0^y s u(s) ds for y >= 0 (extended profile beyond bar_h).
    pub fn moment(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        let inner = y.min(self.bar_h);
        let mut m = match &self.shape {
            ProfileShape::Constant(c) => c * inner * inner / 2.0,
            ProfileShape::Polynomial(c) => {
                c.iter().enumerate().map(|(k, ck)| ck * inner.powi(k as i32 + 2) / (k as f64 + 2.0)).sum()
            }
            ProfileShape::Samples { ys, moments, .. } => {
                let i = interval(ys, inner);
                let (v, _) = gauss_kronrod(&mut |s: f64| s * self.inside(s).u, ys[i], inner);
                moments[i] + v
            }
        };
        if y > self.bar_h {
            let mid = (self.bar_h + EXTENSION_LENGTH).min(y);
            // The blend is quadratic, so s*u(s) is cubic and GK15 is exact.
            let (v, _) = gauss_kronrod(&mut |s: f64| s * self.eval(s).u, self.bar_h, mid);
            m += v;
            if y > mid {
                let u_top = self.eval(mid).u;
                m += u_top * (y * y - mid * mid) / 2.0;
            }
        }
        m
    }

    /// Minimum and maximum of u over [0, bar_h] and over the extended profile.
    pub fn range(&self) -> (f64, f64, f64) {
        let n = 4000;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for k in 0..=n {
            let u = self.inside(self.bar_h * k as f64 / n as f64).u;
            lo = lo.min(u);
            hi = hi.max(u);
        }
        let ext = self.eval(self.bar_h + EXTENSION_LENGTH).u.max(hi);
        (lo, hi, ext)
    }

    /// sup |u''| + sup |(1/y)(u'/y)'| over (0, bar_h].
    pub fn kappa0(&self) -> f64 {
        let n = 4000;
        let (mut a, mut b) = (0.0f64, 0.0f64);
        for k in 1..=n {
            let y = self.bar_h * k as f64 / n as f64;
            let v = self.inside(y);
            a = a.max(v.d2u.abs());
            b = b.max(((v.d2u - v.du / y) / (y * y)).abs());
        }
        a + b
    }
}


fn interval(ys: &[f64], y: f64) -> usize {
    let n = ys.len();
    match ys.binary_search_by(|v| v.total_cmp(&y)) {
        Ok(i) => i.min(n - 2),
        Err(i) => i.saturating_sub(1).min(n - 2),
    }
}

/// Monotonicity-preserving slopes for cubic Hermite interpolation.
fn fritsch_carlson(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let d: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / (x[i + 1] - x[i])).collect();
    let mut m = vec![0.0; n];
    m[0] = d[0];
    m[n - 1] = d[n - 2];
    for i in 1..n - 1 {
        if d[i - 1] * d[i] <= 0.0 {
            m[i] = 0.0;
        } else {
            let w1 = 2.0 * (x[i + 1] - x[i]) + (x[i] - x[i - 1]);
            let w2 = (x[i + 1] - x[i]) + 2.0 * (x[i] - x[i - 1]);
            m[i] = (w1 + w2) / (w1 / d[i - 1] + w2 / d[i]);
        }
    }
    m
}
