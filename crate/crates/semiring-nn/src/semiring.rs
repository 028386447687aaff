//! Scalar semiring algebra.
//!
//! Four semirings over the (extended) reals share one interface:
//!
//! | kind        | ⊕            | ⊙ | 0_R          | 1_R |
//! |-------------|--------------|---|--------------|-----|
//! | `Linear`    | +            | × | 0            | 1   |
//! | `MaxPlus`   | max          | + | −∞           | 0   |
//! | `MinPlus`   | min          | + | +∞           | 0   |
//! | `LogPlus` μ | (1/μ)·log(e^{μa}+e^{μb}) | + | −sign(μ)·∞ | 0 |
//!
//! Parameters are always finite; only the additive identities use the IEEE
//! infinity sentinels. Annihilation (`0_R ⊙ a = 0_R`) is enforced by an
//! explicit special case so that `(+∞) + (−∞)` can never surface as NaN.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SemiringKind {
    Linear,
    MaxPlus,
    MinPlus,
    LogPlus,
}

/// Which algebra to compute in, plus the temperature parameter μ for the
/// logarithmic family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemiringSpec {
    pub kind: SemiringKind,
    /// Only meaningful for `LogPlus`; stored as `f64` so the spec stays
    /// precision-agnostic.
    pub mu: f64,
}

impl SemiringSpec {
    pub fn linear() -> Self {
        Self { kind: SemiringKind::Linear, mu: 0.0 }
    }

    pub fn max_plus() -> Self {
        Self { kind: SemiringKind::MaxPlus, mu: 0.0 }
    }

    pub fn min_plus() -> Self {
        Self { kind: SemiringKind::MinPlus, mu: 0.0 }
    }

    pub fn log_plus(mu: f64) -> Result<Self> {
        if mu == 0.0 || !mu.is_finite() {
            return Err(Error::InvalidSemiring(format!(
                "log-plus temperature mu must be finite and nonzero, got {mu}"
            )));
        }
        Ok(Self { kind: SemiringKind::LogPlus, mu })
    }

    /// Short lowercase name, used in configs, metrics and file names.
    pub fn name(&self) -> &'static str {
        match self.kind {
            SemiringKind::Linear => "linear",
            SemiringKind::MaxPlus => "maxplus",
            SemiringKind::MinPlus => "minplus",
            SemiringKind::LogPlus => "logplus",
        }
    }

    /// Additive identity 0_R.
    pub fn zero<T: Scalar>(&self) -> T {
        match self.kind {
            SemiringKind::Linear => T::zero(),
            SemiringKind::MaxPlus => T::neg_infinity(),
            SemiringKind::MinPlus => T::infinity(),
            SemiringKind::LogPlus => {
                if self.mu > 0.0 {
                    T::neg_infinity()
                } else {
                    T::infinity()
                }
            }
        }
    }

    /// Multiplicative identity 1_R.
    pub fn one<T: Scalar>(&self) -> T {
        match self.kind {
            SemiringKind::Linear => T::one(),
            _ => T::zero(),
        }
    }

    /// a ⊕ b. NaN inputs propagate; the log-plus case is overflow-safe for
    /// |μa|, |μb| up to about 1e4 via a max shift.
    pub fn add<T: Scalar>(&self, a: T, b: T) -> T {
        if a.is_nan() || b.is_nan() {
            return T::nan();
        }
        match self.kind {
            SemiringKind::Linear => a + b,
            SemiringKind::MaxPlus => {
                if a >= b {
                    a
                } else {
                    b
                }
            }
            SemiringKind::MinPlus => {
                if a <= b {
                    a
                } else {
                    b
                }
            }
            SemiringKind::LogPlus => {
                let zero: T = self.zero();
                if a == zero {
                    return b;
                }
                if b == zero {
                    return a;
                }
                let mu = T::from_f64(self.mu);
                let za = mu * a;
                let zb = mu * b;
                let (hi, lo) = if za >= zb { (za, zb) } else { (zb, za) };
                // hi + ln(1 + e^{lo-hi}), with lo-hi <= 0
                (hi + (lo - hi).exp().ln_1p()) / mu
            }
        }
    }

    /// a ⊙ b, with the annihilation special case checked before IEEE
    /// arithmetic so that `mul(zero, a) == zero` even for infinite `a`.
    pub fn mul<T: Scalar>(&self, a: T, b: T) -> T {
        if a.is_nan() || b.is_nan() {
            return T::nan();
        }
        let zero: T = self.zero();
        if a == zero || b == zero {
            return zero;
        }
        match self.kind {
            SemiringKind::Linear => a * b,
            _ => a + b,
        }
    }

    /// ⊕-fold of a non-empty slice.
    ///
    /// Tropical kinds fold with exact max/min. The log-plus kind uses a
    /// single shifted log-sum-exp: with z_j = μ·v_j and M = max_j z_j the
    /// result is (M + log Σ_j e^{z_j − M}) / μ; the shift uses the max of
    /// μ·v regardless of the sign of μ.
    pub fn add_reduce<T: Scalar>(&self, values: &[T]) -> Result<T> {
        if values.is_empty() {
            return Err(Error::EmptyReduction);
        }
        match self.kind {
            SemiringKind::Linear => {
                let mut acc = T::zero();
                for &v in values {
                    if v.is_nan() {
                        return Ok(T::nan());
                    }
                    acc += v;
                }
                Ok(acc)
            }
            SemiringKind::MaxPlus | SemiringKind::MinPlus => {
                let max = self.kind == SemiringKind::MaxPlus;
                let mut best = self.zero::<T>();
                for &v in values {
                    if v.is_nan() {
                        return Ok(T::nan());
                    }
                    if (max && v > best) || (!max && v < best) {
                        best = v;
                    }
                }
                Ok(best)
            }
            SemiringKind::LogPlus => {
                let zero: T = self.zero();
                let mu = T::from_f64(self.mu);
                let mut shift = T::neg_infinity();
                for &v in values {
                    if v.is_nan() {
                        return Ok(T::nan());
                    }
                    if v == zero {
                        continue;
                    }
                    let z = mu * v;
                    if z > shift {
                        shift = z;
                    }
                }
                if shift == T::neg_infinity() {
                    // every term was the additive identity
                    return Ok(zero);
                }
                let mut sum = T::zero();
                for &v in values {
                    if v == zero {
                        continue;
                    }
                    sum += (mu * v - shift).exp();
                }
                Ok((shift + sum.ln()) / mu)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LN_2: f64 = std::f64::consts::LN_2;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * f64::max(1.0, f64::max(a.abs(), b.abs()))
    }

    #[test]
    fn tropical_add_is_max_or_min() {
        let max = SemiringSpec::max_plus();
        let min = SemiringSpec::min_plus();
        assert_eq!(max.add(3.0, 5.0), 5.0);
        assert_eq!(min.add(3.0, 5.0), 3.0);
        // -inf is the additive identity of max-plus
        assert_eq!(max.add(7.25, f64::NEG_INFINITY), 7.25);
        assert_eq!(min.add(7.25, f64::INFINITY), 7.25);
    }

    #[test]
    fn log_add_matches_direct_evaluation() {
        let s = SemiringSpec::log_plus(1.0).unwrap();
        assert!((s.add(0.0f64, 0.0) - LN_2).abs() < 1e-15);
        assert!((s.add(0.0f64, 0.0) - 0.6931471805599453).abs() < 1e-15);
        // identity element
        assert_eq!(s.add(4.5, f64::NEG_INFINITY), 4.5);
        let sneg = SemiringSpec::log_plus(-1.0).unwrap();
        assert_eq!(sneg.add(4.5, f64::INFINITY), 4.5);
    }

    #[test]
    fn mul_adds_and_annihilates() {
        let max = SemiringSpec::max_plus();
        assert_eq!(max.mul(3.0, 5.0), 8.0);
        assert_eq!(max.mul(f64::NEG_INFINITY, 4.0), f64::NEG_INFINITY);
        // annihilator beats the IEEE (+inf)+(-inf)=NaN trap
        assert_eq!(max.mul(f64::NEG_INFINITY, f64::INFINITY), f64::NEG_INFINITY);
        let min = SemiringSpec::min_plus();
        assert_eq!(min.mul(f64::INFINITY, f64::NEG_INFINITY), f64::INFINITY);
        assert_eq!(SemiringSpec::linear().mul(3.0, 5.0), 15.0);
    }

    #[test]
    fn identities() {
        assert_eq!(SemiringSpec::max_plus().zero::<f64>(), f64::NEG_INFINITY);
        assert_eq!(SemiringSpec::min_plus().zero::<f64>(), f64::INFINITY);
        assert_eq!(SemiringSpec::min_plus().one::<f64>(), 0.0);
        assert_eq!(SemiringSpec::linear().zero::<f64>(), 0.0);
        assert_eq!(SemiringSpec::linear().one::<f64>(), 1.0);
        let lp = SemiringSpec::log_plus(3.0).unwrap();
        assert_eq!(lp.zero::<f64>(), f64::NEG_INFINITY);
        let ln = SemiringSpec::log_plus(-3.0).unwrap();
        assert_eq!(ln.zero::<f64>(), f64::INFINITY);
    }

    #[test]
    fn log_plus_rejects_zero_mu() {
        assert!(SemiringSpec::log_plus(0.0).is_err());
        assert!(SemiringSpec::log_plus(f64::NAN).is_err());
    }

    #[test]
    fn add_reduce_basics() {
        let max = SemiringSpec::max_plus();
        assert_eq!(max.add_reduce(&[1.0, -3.0, 2.0]).unwrap(), 2.0);
        let lp = SemiringSpec::log_plus(1.0).unwrap();
        let ln3: f64 = lp.add_reduce(&[0.0, 0.0, 0.0]).unwrap();
        assert!((ln3 - 1.0986122886681098).abs() < 1e-15);
    }

    #[test]
    fn add_reduce_is_overflow_safe() {
        let lp = SemiringSpec::log_plus(1.0).unwrap();
        let y: f64 = lp.add_reduce(&[10_000.0, 0.0]).unwrap();
        assert!(y.is_finite());
        assert!((y - 10_000.0).abs() < 1e-9);
        // single precision too
        let y32: f32 = lp.add_reduce(&[10_000.0f32, 0.0]).unwrap();
        assert!(y32.is_finite());
        let ln = SemiringSpec::log_plus(-1.0).unwrap();
        let z: f64 = ln.add_reduce(&[-10_000.0, 0.0]).unwrap();
        assert!(z.is_finite());
        assert!((z - -10_000.0).abs() < 1e-9);
    }

    #[test]
    fn add_reduce_rejects_empty() {
        let max = SemiringSpec::max_plus();
        assert!(matches!(
            max.add_reduce::<f64>(&[]),
            Err(Error::EmptyReduction)
        ));
    }

    #[test]
    fn add_reduce_of_identities_is_identity() {
        for spec in [
            SemiringSpec::max_plus(),
            SemiringSpec::min_plus(),
            SemiringSpec::log_plus(2.0).unwrap(),
            SemiringSpec::log_plus(-2.0).unwrap(),
        ] {
            let z: f64 = spec.zero();
            assert_eq!(spec.add_reduce(&[z, z, z]).unwrap(), z);
        }
    }

    #[test]
    fn nan_propagates() {
        for spec in [
            SemiringSpec::linear(),
            SemiringSpec::max_plus(),
            SemiringSpec::min_plus(),
            SemiringSpec::log_plus(1.0).unwrap(),
        ] {
            assert!(spec.add(f64::NAN, 1.0).is_nan());
            assert!(spec.mul(1.0, f64::NAN).is_nan());
            assert!(spec.add_reduce(&[1.0, f64::NAN]).unwrap().is_nan());
        }
    }

    #[test]
    fn idempotence_tropical_only() {
        let max = SemiringSpec::max_plus();
        let min = SemiringSpec::min_plus();
        for a in [-3.25, 0.0, 17.5] {
            assert_eq!(max.add(a, a), a);
            assert_eq!(min.add(a, a), a);
        }
        // log-plus is NOT idempotent: a ⊕ a = a + ln(2)/μ
        for mu in [0.5, 1.0, -2.0] {
            let lp = SemiringSpec::log_plus(mu).unwrap();
            for a in [-3.25, 0.0, 17.5] {
                assert!(close(lp.add(a, a), a + LN_2 / mu, 1e-14));
                assert!(lp.add(a, a) != a);
            }
        }
    }

    #[test]
    fn log_plus_interpolates_between_min_and_max() {
        let hot = SemiringSpec::log_plus(100.0).unwrap();
        let cold = SemiringSpec::log_plus(-100.0).unwrap();
        let pairs = [(0.3, -1.2), (5.0, 5.001), (-8.0, 2.0), (1.0, 1.0)];
        // the bound is attained exactly at a == b, so leave an ulp of slack
        let bound = LN_2 / 100.0 * (1.0 + 1e-12);
        for (a, b) in pairs {
            assert!((hot.add(a, b) - f64::max(a, b)).abs() <= bound);
            assert!((cold.add(a, b) - f64::min(a, b)).abs() <= bound);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn specs() -> Vec<SemiringSpec> {
            vec![
                SemiringSpec::linear(),
                SemiringSpec::max_plus(),
                SemiringSpec::min_plus(),
                SemiringSpec::log_plus(1.0).unwrap(),
                SemiringSpec::log_plus(-1.0).unwrap(),
                SemiringSpec::log_plus(10.0).unwrap(),
                SemiringSpec::log_plus(-10.0).unwrap(),
            ]
        }

        proptest! {
            #[test]
            fn semiring_axioms(a in -50.0f64..50.0, b in -50.0f64..50.0, c in -50.0f64..50.0) {
                for spec in specs() {
                    let tol = 1e-12;
                    // associativity
                    prop_assert!(close(spec.add(spec.add(a, b), c), spec.add(a, spec.add(b, c)), tol));
                    prop_assert!(close(spec.mul(spec.mul(a, b), c), spec.mul(a, spec.mul(b, c)), tol));
                    // commutativity
                    prop_assert!(close(spec.add(a, b), spec.add(b, a), tol));
                    prop_assert!(close(spec.mul(a, b), spec.mul(b, a), tol));
                    // distributivity
                    prop_assert!(close(
                        spec.mul(a, spec.add(b, c)),
                        spec.add(spec.mul(a, b), spec.mul(a, c)),
                        tol
                    ));
                    // identities and annihilator
                    prop_assert!(close(spec.add(spec.zero(), a), a, tol));
                    prop_assert!(close(spec.mul(spec.one(), a), a, tol));
                    prop_assert_eq!(spec.mul(spec.zero::<f64>(), a), spec.zero::<f64>());
                }
            }

            #[test]
            fn reduce_is_permutation_invariant(mut v in proptest::collection::vec(-40.0f64..40.0, 1..9)) {
                for spec in specs() {
                    let forward = spec.add_reduce(&v).unwrap();
                    v.reverse();
                    let reversed = spec.add_reduce(&v).unwrap();
                    match spec.kind {
                        SemiringKind::MaxPlus | SemiringKind::MinPlus => prop_assert_eq!(forward, reversed),
                        _ => prop_assert!(close(forward, reversed, 1e-12)),
                    }
                }
            }
        }
    }
}
