//! Bernoulli function of the stream value, built from the upstream profile.

use super::gas::enthalpy;
use super::profile::UpstreamProfile;
use super::FlowError;

/// 𝓑 and its first two derivatives at a stream value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BernoulliValue {
    pub b: f64,
    pub db: f64,
    pub d2b: f64,
}

#[derive(Debug, Clone)]
pub struct BernoulliFn {
    profile: UpstreamProfile,
    rho_bar: f64,
    gamma: f64,
    q: f64,
    constant: Option<f64>,
}

impl BernoulliFn {
    pub fn new(profile: UpstreamProfile, rho_bar: f64, gamma: f64, q: f64) -> Self {
        let constant = profile
            .is_constant()
            .then(|| 0.5 * profile.eval(0.0).u.powi(2) + enthalpy(rho_bar, gamma));
        Self { profile, rho_bar, gamma, q, constant }
    }

    pub fn profile(&self) -> &UpstreamProfile {
        &self.profile
    }

    pub fn rho_bar(&self) -> f64 {
        self.rho_bar
    }

    pub fn is_constant(&self) -> bool {
        self.constant.is_some()
    }

    /// Streamline height: the root of psi = rho_bar int_0^hbar y u(y) dy, for
    /// psi in [0, Q].
    pub fn streamline_height(&self, psi: f64) -> Result<f64, FlowError> {
        if !(0.0..=self.q * (1.0 + 1e-15)).contains(&psi) {
            return Err(FlowError::Domain(format!("stream value {psi} outside [0, Q]")));
        }
        Ok(self.height_extended(psi.min(self.q)))
    }

    /// Streamline height for any psi >= 0, using the extended profile above Q.
    pub fn height_extended(&self, psi: f64) -> f64 {
        if psi <= 0.0 {
            return 0.0;
        }
        let target = psi / self.rho_bar;
        let bar_h = self.profile.bar_h();
        // Bracket: grow the upper end until the moment exceeds the target.
        let mut hi = bar_h;
        while self.profile.moment(hi) < target {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        // Initial guess from the constant-profile relation.
        let u0 = self.profile.eval(0.0).u;
        let mut y = (2.0 * target / u0).sqrt().clamp(lo, hi);
        for _ in 0..200 {
            let f = self.profile.moment(y) - target;
            if f == 0.0 {
                return y;
            }
            if f < 0.0 {
                lo = y;
            } else {
                hi = y;
            }
            let df = y * self.profile.eval(y).u;
            let mut next = y - f / df;
            if !next.is_finite() || next <= lo || next >= hi {
                next = 0.5 * (lo + hi);
            }
            let step = (next - y).abs();
            y = next;
            if step <= 1e-15 * bar_h || hi - lo <= 1e-15 * bar_h {
                break;
            }
        }
        y
    }

    /// 𝓑(z) with flat extension for z <= 0 and the profile extension above Q.
    pub fn eval(&self, z: f64) -> BernoulliValue {
        if let Some(b) = self.constant {
            return BernoulliValue { b, db: 0.0, d2b: 0.0 };
        }
        let hbar0 = enthalpy(self.rho_bar, self.gamma);
        if z <= 0.0 {
            let u0 = self.profile.eval(0.0).u;
            return BernoulliValue { b: 0.5 * u0 * u0 + hbar0, db: 0.0, d2b: 0.0 };
        }
        let y = self.height_extended(z);
        let v = self.profile.eval(y);
        let rb = self.rho_bar;
        BernoulliValue {
            b: 0.5 * v.u * v.u + hbar0,
            db: v.du / (rb * y),
            d2b: (v.d2u - v.du / y) / (rb * rb * y * y * v.u),
        }
    }
}

/// Cubic Hermite table of 𝓑 and 𝓑' on [0, Q] used inside solver loops.
#[derive(Debug, Clone)]
pub struct BernoulliTable {
    q: f64,
    dz: f64,
    values: Vec<BernoulliValue>,
}

impl BernoulliTable {
    pub fn new(f: &BernoulliFn, q: f64, intervals: usize) -> Self {
        let dz = q / intervals as f64;
        let mut values: Vec<BernoulliValue> = (0..=intervals).map(|k| f.eval(k as f64 * dz)).collect();
        // One-sided second derivatives at the ends of [0, Q].
        values[0].d2b = f.eval(1e-12 * q).d2b;
        values[intervals].d2b = f.eval(q * (1.0 - 1e-12)).d2b;
        Self { q, dz, values }
    }

    /// Interpolated (𝓑, 𝓑') at z in [0, Q]; callers handle other z exactly.
    #[inline]
    pub fn eval(&self, z: f64) -> (f64, f64) {
        let x = (z / self.dz).clamp(0.0, (self.values.len() - 1) as f64);
        let k = (x as usize).min(self.values.len() - 2);
        let s = x - k as f64;
        let (a, b) = (&self.values[k], &self.values[k + 1]);
        let h = self.dz;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let val = h00 * a.b + h10 * h * a.db + h01 * b.b + h11 * h * b.db;
        let der = h00 * a.db + h10 * h * a.d2b + h01 * b.db + h11 * h * b.d2b;
        (val, der)
    }

    pub fn q(&self) -> f64 {
        self.q
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quartic() -> BernoulliFn {
        let p = UpstreamProfile::polynomial(vec![1.0, 0.0, 0.0, 0.0, 1.0], 2.0).unwrap();
        BernoulliFn::new(p, 1.0, 2.0, 38.0 / 3.0)
    }

    #[test]
    fn streamline_height_examples() {
        let p = UpstreamProfile::constant(1.0, 2.0).unwrap();
        let f = BernoulliFn::new(p, 2.0, 2.0, 4.0);
        assert!((f.streamline_height(1.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((f.streamline_height(4.0).unwrap() - 2.0).abs() < 1e-12);
        assert!(f.streamline_height(4.5).is_err());
        let g = quartic();
        assert!((g.streamline_height(38.0 / 3.0).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn bernoulli_examples() {
        let p = UpstreamProfile::constant(1.0, 2.0).unwrap();
        let f = BernoulliFn::new(p, 2.0, 2.0, 4.0);
        for z in [-1.0, 0.0, 1.3, 4.0, 9.0] {
            assert_eq!(f.eval(z), BernoulliValue { b: 2.5, db: 0.0, d2b: 0.0 });
        }
        let g = quartic();
        // hbar = 1 at psi = int_0^1 y(1+y^4) dy = 1/2 + 1/6.
        let v = g.eval(2.0 / 3.0);
        assert!((v.b - 3.0).abs() < 1e-12);
        assert_eq!(g.eval(-0.5).db, 0.0);
        assert_eq!(g.eval(0.0).db, 0.0);
    }

    #[test]
    fn derivatives_match_differences() {
        let g = quartic();
        for &z in &[0.3, 2.0, 7.5, 12.0, 13.5] {
            let e = 1e-5;
            let v = g.eval(z);
            let fd1 = (g.eval(z + e).b - g.eval(z - e).b) / (2.0 * e);
            let fd2 = (g.eval(z + e).db - g.eval(z - e).db) / (2.0 * e);
            assert!((v.db - fd1).abs() < 1e-7 * (1.0 + v.db.abs()), "z={z}");
            assert!((v.d2b - fd2).abs() < 1e-6 * (1.0 + v.d2b.abs()), "z={z}");
        }
    }

    #[test]
    fn table_tracks_exact_function() {
        let g = quartic();
        let t = BernoulliTable::new(&g, 38.0 / 3.0, 16384);
        for k in 0..500 {
            let z = 38.0 / 3.0 * (k as f64 + 0.37) / 500.0;
            let (b, db) = t.eval(z);
            let v = g.eval(z);
            assert!((b - v.b).abs() < 1e-10 * v.b, "z={z} {b} {}", v.b);
            assert!((db - v.db).abs() < 1e-7 * (1.0 + v.db));
        }
    }
}
