//! Monotone scalar maps with an open range, used for flows, inputs, outputs
//! and the compartmental terms.

use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SatKind {
    /// `gain * z`; gain 1 is the identity. Gain 0 is allowed for the
    /// nondecreasing compartmental maps only.
    Linear,
    /// `lower + (upper - lower)/2 * (tanh(gain * z) + 1)`.
    Tanh,
    /// `lower + (upper - lower) * (atan(gain * z)/π + 1/2)`.
    Arctan,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Saturation<T> {
    kind: SatKind,
    lower: T,
    upper: T,
    gain: T,
}

impl<T: Real> Saturation<T> {
    pub fn identity() -> Self {
        Self { kind: SatKind::Linear, lower: T::neg_infinity(), upper: T::infinity(), gain: T::one() }
    }

    pub fn linear(gain: T) -> Result<Self> {
        if !(gain.is_finite() && gain >= T::zero()) {
            return Err(Error::Validation(format!("linear map gain must be finite and >= 0, got {gain}")));
        }
        let (lower, upper) = if gain > T::zero() {
            (T::neg_infinity(), T::infinity())
        } else {
            (T::zero(), T::zero())
        };
        Ok(Self { kind: SatKind::Linear, lower, upper, gain })
    }

    pub fn tanh(lower: T, upper: T, gain: T) -> Result<Self> {
        Self::bounded(SatKind::Tanh, lower, upper, gain)
    }

    pub fn arctan(lower: T, upper: T, gain: T) -> Result<Self> {
        Self::bounded(SatKind::Arctan, lower, upper, gain)
    }

    fn bounded(kind: SatKind, lower: T, upper: T, gain: T) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(Error::Validation(format!(
                "bounded map needs finite lower < upper, got ({lower}, {upper})"
            )));
        }
        if !(gain.is_finite() && gain > T::zero()) {
            return Err(Error::Validation(format!("map gain must be finite and > 0, got {gain}")));
        }
        Ok(Self { kind, lower, upper, gain })
    }

    pub fn kind(&self) -> SatKind {
        self.kind
    }

    pub fn lower(&self) -> T {
        self.lower
    }

    pub fn upper(&self) -> T {
        self.upper
    }

    pub fn gain(&self) -> T {
        self.gain
    }

    pub fn is_bounded(&self) -> bool {
        self.kind != SatKind::Linear
    }

    pub fn is_identity(&self) -> bool {
        self.kind == SatKind::Linear && self.gain == T::one()
    }

    pub fn is_strictly_increasing(&self) -> bool {
        self.gain > T::zero()
    }

    /// Midpoint of the range, or 0 for unbounded maps.
    pub fn midrange(&self) -> T {
        if self.is_bounded() {
            self.lower + (self.upper - self.lower) / T::lit(2.0)
        } else {
            T::zero()
        }
    }

    fn width(&self) -> T {
        self.upper - self.lower
    }

    // Innermost representable values of the open range.
    fn inner_bounds(&self) -> (T, T) {
        let tiny = T::min_positive_value();
        let lo = self.lower + (self.lower.abs() * T::epsilon()).max(tiny);
        let hi = self.upper - (self.upper.abs() * T::epsilon()).max(tiny);
        (lo, hi)
    }

    #[inline]
    pub fn eval(&self, z: T) -> T {
        match self.kind {
            SatKind::Linear => self.gain * z,
            SatKind::Tanh => {
                let s = T::lit(2.0) * self.gain * z;
                let w = self.width();
                let v = if s < T::zero() {
                    self.lower + w / (T::one() + (-s).exp())
                } else {
                    self.upper - w / (T::one() + s.exp())
                };
                let (lo, hi) = self.inner_bounds();
                v.max(lo).min(hi)
            }
            SatKind::Arctan => {
                let gz = self.gain * z;
                let w = self.width();
                let v = if gz == T::zero() {
                    self.lower + w / T::lit(2.0)
                } else if gz > T::zero() {
                    self.upper - w * (T::one() / gz).atan() / T::PI()
                } else {
                    self.lower - w * (T::one() / gz).atan() / T::PI()
                };
                let (lo, hi) = self.inner_bounds();
                v.max(lo).min(hi)
            }
        }
    }

    /// Derivative, floored at the smallest positive normal for strictly
    /// increasing kinds.
    #[inline]
    pub fn derivative(&self, z: T) -> T {
        let d = match self.kind {
            SatKind::Linear => return self.gain,
            SatKind::Tanh => {
                let s = (T::lit(2.0) * self.gain * z).abs();
                let e = (-s).exp();
                let sig = T::one() / (T::one() + e);
                T::lit(2.0) * self.gain * self.width() * sig * (e * sig)
            }
            SatKind::Arctan => {
                let gz = self.gain * z;
                self.width() * self.gain / (T::PI() * (T::one() + gz * gz))
            }
        };
        d.max(T::min_positive_value())
    }

    pub fn try_eval(&self, z: T) -> Result<T> {
        finite(z)?;
        Ok(self.eval(z))
    }

    pub fn try_derivative(&self, z: T) -> Result<T> {
        finite(z)?;
        Ok(self.derivative(z))
    }

    pub fn contains(&self, y: T) -> bool {
        y > self.lower && y < self.upper
    }

    /// Preimage of `y`, which must lie strictly inside the range.
    pub fn inverse(&self, y: T) -> Result<T> {
        finite(y)?;
        if !self.is_strictly_increasing() {
            return Err(Error::Validation("map is not invertible".into()));
        }
        if !self.contains(y) {
            return Err(Error::Range {
                value: y.to_f64_lossy(),
                lower: self.lower.to_f64_lossy(),
                upper: self.upper.to_f64_lossy(),
            });
        }
        let w = self.width();
        Ok(match self.kind {
            SatKind::Linear => y / self.gain,
            SatKind::Tanh => {
                let p = (y - self.lower) / w;
                let q = (self.upper - y) / w;
                (p / q).ln() / (T::lit(2.0) * self.gain)
            }
            SatKind::Arctan => {
                let p = (y - self.lower) / w;
                let half = T::lit(0.5);
                if p == half {
                    T::zero()
                } else if p > half {
                    let q = (self.upper - y) / w;
                    T::one() / (self.gain * (T::PI() * q).tan())
                } else {
                    -T::one() / (self.gain * (T::PI() * p).tan())
                }
            }
        })
    }

    /// `∫_{zbar}^{z} (s(σ) - s(zbar)) dσ`, the Bregman-type divergence of the
    /// map's antiderivative. Nonnegative for nondecreasing maps.
    pub fn bregman(&self, z: T, zbar: T) -> T {
        match self.kind {
            SatKind::Linear => {
                let dz = z - zbar;
                self.gain * dz * dz / T::lit(2.0)
            }
            SatKind::Tanh => {
                let g = self.gain;
                let a = self.width() / T::lit(2.0);
                let u = g * z;
                let v = g * zbar;
                let delta = u - v;
                let t = v.tanh();
                let core = if delta.abs() <= T::one() {
                    // ln cosh(v + δ) - ln cosh(v) = ln(cosh δ + tanh v sinh δ)
                    let sh = (delta / T::lit(2.0)).sinh();
                    (T::lit(2.0) * sh * sh + t * delta.sinh()).ln_1p() - t * delta
                } else {
                    ln_cosh(u) - ln_cosh(v) - t * delta
                };
                (a / g * core).max(T::zero())
            }
            SatKind::Arctan => {
                let sbar = self.eval(zbar);
                let w = self.width();
                let tol = T::lit(1e-12) * w.max(T::one()) * (T::one() + (z - zbar).abs());
                adaptive_simpson(&|s: T| self.eval(s) - sbar, zbar, z, tol).max(T::zero())
            }
        }
    }
}

fn finite<T: Real>(z: T) -> Result<()> {
    if z.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("{z}")))
    }
}

/// `ln cosh x` without overflow.
pub fn ln_cosh<T: Real>(x: T) -> T {
    let a = x.abs();
    a + (T::lit(-2.0) * a).exp().ln_1p() - T::LN_2()
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` (signed).
pub fn adaptive_simpson<T: Real, F: Fn(T) -> T>(f: &F, a: T, b: T, tol: T) -> T {
    if a == b {
        return T::zero();
    }
    let two = T::lit(2.0);
    let fa = f(a);
    let fb = f(b);
    let m = (a + b) / two;
    let fm = f(m);
    let whole = (b - a) / T::lit(6.0) * (fa + T::lit(4.0) * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 48)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<T: Real, F: Fn(T) -> T>(
    f: &F,
    a: T,
    b: T,
    fa: T,
    fm: T,
    fb: T,
    whole: T,
    tol: T,
    depth: u32,
) -> T {
    let two = T::lit(2.0);
    let m = (a + b) / two;
    let lm = (a + m) / two;
    let rm = (m + b) / two;
    let flm = f(lm);
    let frm = f(rm);
    let six = T::lit(6.0);
    let four = T::lit(4.0);
    let left = (m - a) / six * (fa + four * flm + fm);
    let right = (b - m) / six * (fm + four * frm + fb);
    let diff = left + right - whole;
    if depth == 0 || diff.abs() <= T::lit(15.0) * tol {
        return left + right + diff / T::lit(15.0);
    }
    simpson_step(f, a, m, fa, flm, fm, left, tol / two, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, tol / two, depth - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lambda_map() -> Saturation<f64> {
        Saturation::tanh(0.0, 14.0, 1.0).unwrap()
    }

    fn hvdc_map() -> Saturation<f64> {
        Saturation::tanh(130.0, 145.0, 1.0).unwrap()
    }

    fn arctan_map() -> Saturation<f64> {
        Saturation::arctan(-2.0, 5.0, 0.7).unwrap()
    }

    #[test]
    fn eval_examples() {
        assert_eq!(lambda_map().eval(0.0), 7.0);
        assert_eq!(hvdc_map().eval(0.0), 137.5);
        assert_eq!(Saturation::identity().eval(3.25), 3.25);
    }

    #[test]
    fn tanh_form_matches_definition() {
        let s = Saturation::tanh(0.0, 52.0, 1.0).unwrap();
        for z in [-3.0, -0.4, 0.0, 0.9, 2.5] {
            let want = 26.0 * (f64::tanh(z) + 1.0);
            assert!((s.eval(z) - want).abs() <= 1e-13 * want.max(1.0));
        }
        let s = Saturation::arctan(-1.0, 1.0, 1.0).unwrap();
        for z in [-3.0, -0.4, 0.0, 0.9, 2.5] {
            let want = 2.0 / std::f64::consts::PI * f64::atan(z);
            assert!((s.eval(z) - want).abs() <= 1e-14);
        }
    }

    #[test]
    fn derivative_examples() {
        assert_eq!(Saturation::<f64>::identity().derivative(-8.0), 1.0);
        assert!((lambda_map().derivative(0.0) - 7.0).abs() < 1e-14);
        let a = arctan_map();
        let d = a.derivative(1e150);
        assert!(d > 0.0 && d < 1e-290);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let h = 1e-5;
        for s in [lambda_map(), hvdc_map(), arctan_map()] {
            for z in [-2.0, -0.3, 0.0, 0.2, 1.7] {
                let fd = (s.eval(z + h) - s.eval(z - h)) / (2.0 * h);
                let d = s.derivative(z);
                assert!((fd - d).abs() <= 1e-6 * d, "{fd} vs {d}");
            }
        }
    }

    #[test]
    fn inverse_examples() {
        assert_eq!(Saturation::identity().inverse(5.0).unwrap(), 5.0);
        assert_eq!(Saturation::tanh(0.0, 52.0, 1.0).unwrap().inverse(26.0).unwrap(), 0.0);
        assert!(matches!(lambda_map().inverse(14.0), Err(Error::Range { .. })));
        assert!(matches!(lambda_map().inverse(f64::NAN), Err(Error::NonFinite(_))));
    }

    #[test]
    fn non_finite_rejected() {
        assert!(lambda_map().try_eval(f64::INFINITY).is_err());
        assert!(lambda_map().try_derivative(f64::NAN).is_err());
    }

    #[test]
    fn extreme_arguments_stay_inside() {
        for s in [lambda_map(), hvdc_map(), arctan_map()] {
            for z in [-1e300, -1e8, -40.0, 40.0, 1e8, 1e300] {
                let v = s.eval(z);
                assert!(v > s.lower() && v < s.upper(), "{z} -> {v}");
            }
        }
    }

    #[test]
    fn linear_zero_gain_is_nondecreasing_only() {
        let s = Saturation::linear(0.0).unwrap();
        assert!(!s.is_strictly_increasing());
        assert_eq!(s.eval(4.0), 0.0);
        assert!(s.inverse(0.0).is_err());
        assert!(Saturation::linear(-1.0).is_err());
        assert!(Saturation::tanh(1.0, 1.0, 1.0).is_err());
        assert!(Saturation::tanh(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn bregman_quadratic_for_linear() {
        let s = Saturation::linear(3.0).unwrap();
        assert_eq!(s.bregman(2.0, 1.0), 1.5);
    }

    #[test]
    fn bregman_tanh_matches_quadrature() {
        let s = Saturation::tanh(-1.0, 3.0, 1.3).unwrap();
        for (z, zb) in [(0.3, -0.2), (2.0, 0.1), (-4.0, 1.0), (0.5, 0.5 + 1e-4), (10.0, -3.0)] {
            let sb = s.eval(zb);
            let q = adaptive_simpson(&|x: f64| s.eval(x) - sb, zb, z, 1e-14);
            let b = s.bregman(z, zb);
            assert!((b - q).abs() <= 1e-9 * q.abs().max(1e-12), "{z},{zb}: {b} vs {q}");
        }
    }

    #[test]
    fn bregman_arctan_against_closed_form() {
        let s = arctan_map();
        let (w, g) = (7.0, 0.7);
        // antiderivative of w*atan(g x)/π
        let anti = |x: f64| w / std::f64::consts::PI * (x * (g * x).atan() - (1.0 + g * g * x * x).ln() / (2.0 * g));
        for (z, zb) in [(1.0, -1.0), (-3.0, 0.5), (4.0, 4.2)] {
            let want = anti(z) - anti(zb) - w / std::f64::consts::PI * (g * zb).atan() * (z - zb);
            assert!((s.bregman(z, zb) - want).abs() <= 1e-9 * want.abs().max(1e-12));
        }
    }

    #[test]
    fn round_trip_edges() {
        let s = lambda_map();
        for y in [1e-12, 1e-6, 13.999999, 14.0 - 1e-12] {
            let z = s.inverse(y).unwrap();
            assert!((s.eval(z) - y).abs() <= 1e-10 * y.max(1.0));
        }
    }

    #[test]
    fn f32_maps() {
        let s = Saturation::<f32>::tanh(0.0, 14.0, 1.0).unwrap();
        assert_eq!(s.eval(0.0), 7.0);
        for z in [-1e8f32, -30.0, 30.0, 1e8] {
            let v = s.eval(z);
            assert!(v > 0.0 && v < 14.0);
        }
    }

    fn any_map() -> impl Strategy<Value = Saturation<f64>> {
        (-200.0..200.0f64, 0.01..500.0f64, 0.05..20.0f64, 0..3u8).prop_map(|(lo, w, g, k)| match k {
            0 => Saturation::tanh(lo, lo + w, g).unwrap(),
            1 => Saturation::arctan(lo, lo + w, g).unwrap(),
            _ => Saturation::linear(g).unwrap(),
        })
    }

    proptest! {
        #[test]
        fn range_confinement(s in any_map(), z in -1e8..1e8f64) {
            let v = s.eval(z);
            prop_assert!(v > s.lower() && v < s.upper());
        }

        #[test]
        fn round_trip(s in any_map(), frac in 0.0..1.0f64) {
            let y = if s.is_bounded() {
                s.lower() + frac * (s.upper() - s.lower())
            } else {
                (frac - 0.5) * 1e4
            };
            prop_assume!(s.contains(y));
            let z = s.inverse(y).unwrap();
            prop_assert!((s.eval(z) - y).abs() <= 1e-10 * y.abs().max(1.0));
        }

        #[test]
        fn monotone(s in any_map(), a in -1e3..1e3f64, b in -1e3..1e3f64) {
            let (z1, z2) = if a < b { (a, b) } else { (b, a) };
            prop_assume!(z1 < z2);
            let (v1, v2) = (s.eval(z1), s.eval(z2));
            prop_assert!(v1 <= v2);
            // strict wherever the map is resolvable in floating point
            if s.derivative(z2) * (z2 - z1) > 1e3 * f64::EPSILON * v2.abs().max(1.0) {
                prop_assert!(v1 < v2);
            }
        }

        #[test]
        fn bregman_nonnegative(s in any_map(), a in -30.0..30.0f64, b in -30.0..30.0f64) {
            prop_assert!(s.bregman(a, b) >= 0.0);
        }
    }
}
