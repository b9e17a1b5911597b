//! Linear class-K∞ gains `r -> slope * r` and the small-gain predicates built
//! on them.
//!
//! For the monotone stages handled here the asymptotic-amplitude (Cauchy)
//! gain and the incremental limit gain coincide, so one type serves both.

use std::iter::Product;

use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LinearGain<T> {
    slope: T,
}

impl<T: Scalar> LinearGain<T> {
    /// A gain with `slope >= 0`. Zero is allowed for a stage whose output is
    /// certified constant; strictly positive slopes are class K∞.
    pub fn new(slope: T) -> Result<Self> {
        if !(slope >= T::zero()) || !slope.is_finite() {
            return Err(Error::Domain(format!("gain slope must be finite and >= 0, got {slope}")));
        }
        Ok(Self { slope })
    }

    /// Gain of a pure delay.
    pub fn identity() -> Self {
        Self { slope: T::one() }
    }

    pub fn slope(&self) -> T {
        self.slope
    }

    pub fn is_class_k_infinity(&self) -> bool {
        self.slope > T::zero()
    }

    pub fn apply(&self, r: T) -> T {
        self.slope * r
    }

    /// `self ∘ inner`.
    pub fn after(self, inner: Self) -> Self {
        compose(self, inner)
    }
}

impl<T: Scalar> Product for LinearGain<T> {
    fn product<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::identity(), compose)
    }
}

/// Gain of a cascade: feeding through `inner` then `outer`.
pub fn compose<T: Scalar>(outer: LinearGain<T>, inner: LinearGain<T>) -> LinearGain<T> {
    LinearGain { slope: outer.slope * inner.slope }
}

/// Closed-loop small-gain condition `g1(g2(r)) < r` for all `r > 0`.
pub fn small_gain_holds<T: Scalar>(g1: LinearGain<T>, g2: LinearGain<T>) -> bool {
    g1.slope * g2.slope < T::one()
}

/// Incremental version `k1(k2(r)) < r`. For linear gains this is literally
/// the same inequality as [`small_gain_holds`].
pub fn incremental_small_gain_holds<T: Scalar>(k1: LinearGain<T>, k2: LinearGain<T>) -> bool {
    let holds = k1.slope * k2.slope < T::one();
    debug_assert_eq!(holds, small_gain_holds(k1, k2));
    holds
}

/// Gain of the memoryless feedback `psi(x) = mu / (1 + k x)` on `[0, 1]`,
/// i.e. its Lipschitz constant `k * mu`.
pub fn feedback_gain<T: Scalar>(k: T, mu: T) -> Result<LinearGain<T>> {
    if !(k >= T::zero()) || !(mu > T::zero()) {
        return Err(Error::Domain(format!("need k >= 0 and mu > 0, got k = {k}, mu = {mu}")));
    }
    LinearGain::new(k * mu)
}

/// `k * mu * slope(cascade) < 1`.
pub fn feedback_small_gain<T: Scalar>(k: T, mu: T, cascade_gain: LinearGain<T>) -> bool {
    k * mu * cascade_gain.slope < T::one()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn g(s: f64) -> LinearGain<f64> {
        LinearGain::new(s).unwrap()
    }

    #[test]
    fn delay_identity_composes_trivially() {
        assert_eq!(compose(LinearGain::identity(), g(0.7)).slope(), 0.7);
        assert_eq!(compose(g(0.5), g(1.5)).slope(), 0.75);
    }

    #[test]
    fn strictness() {
        assert!(small_gain_holds(g(0.5), g(1.5)));
        assert!(!small_gain_holds(g(1.0), g(1.0)));
        assert!(!incremental_small_gain_holds(g(1.0), g(1.0)));
    }

    #[test]
    fn mapk_feedback_products() {
        let cascade = g(0.71463);
        let fb = feedback_gain(3.9, 0.3).unwrap();
        assert!(small_gain_holds(fb, cascade));
        assert!((fb.slope() * cascade.slope() - 0.8361).abs() < 1e-4);
        assert!(feedback_small_gain(3.9, 0.3, cascade));
        assert!(!feedback_small_gain(5.2, 0.3, cascade));
        assert!((5.2f64 * 0.3 * 0.71463 - 1.115).abs() < 1e-3);
        assert!(feedback_small_gain(0.0, 0.3, g(1e9)));
    }

    #[test]
    fn zero_slope_is_admitted() {
        let z = g(0.0);
        assert!(!z.is_class_k_infinity());
        assert!(small_gain_holds(z, g(1e12)));
        assert!(LinearGain::new(-1.0).is_err());
        assert!(LinearGain::new(f64::NAN).is_err());
        assert!(feedback_gain(-1.0, 0.3).is_err());
        assert!(feedback_gain(1.0, 0.0).is_err());
    }

    #[test]
    fn product_of_chain() {
        let total: LinearGain<f64> = [g(2.0), LinearGain::identity(), g(0.25), g(3.0)]
            .into_iter()
            .product();
        assert_eq!(total.slope(), 1.5);
        assert_eq!(total.apply(2.0), 3.0);
    }

    proptest! {
        #[test]
        fn composition_is_associative(a in 0.0f64..10.0, b in 0.0f64..10.0, c in 0.0f64..10.0) {
            let l = compose(compose(g(a), g(b)), g(c)).slope();
            let r = compose(g(a), compose(g(b), g(c))).slope();
            prop_assert!((l - r).abs() <= 1e-12 * l.max(1.0));
        }

        #[test]
        fn predicate_is_symmetric(a in 0.0f64..3.0, b in 0.0f64..3.0) {
            prop_assert_eq!(small_gain_holds(g(a), g(b)), small_gain_holds(g(b), g(a)));
            prop_assert_eq!(small_gain_holds(g(a), g(b)), incremental_small_gain_holds(g(a), g(b)));
        }

        #[test]
        fn feedback_matches_memoryless_gain(k in 0.0f64..10.0, mu in 0.01f64..2.0, s in 0.0f64..3.0) {
            let fb = feedback_gain(k, mu).unwrap();
            prop_assert_eq!(feedback_small_gain(k, mu, g(s)), small_gain_holds(fb, g(s)));
        }
    }
}
