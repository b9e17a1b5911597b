//! One scalar monotone stage `x' = -alpha(x) + u * beta(x)` on `[0, 1]` with
//!
//! ```text
//! alpha(x) = b x / (c + x)          (increasing, alpha(0) = 0)
//! beta(x)  = d (1 - x) / (e + 1 - x) (decreasing, beta(1) = 0)
//! ```
//!
//! For a constant input `u` the unique equilibrium is `x = g^{-1}(u)` with
//! `g = alpha / beta`, and `x` is attracted to it from both sides. The
//! Lipschitz constant of `g^{-1}` on an input interval is therefore the gain
//! of the stage, and it equals `1 / min g'` over the image interval.

use crate::{Error, Result, Scalar};

/// Residual tolerance for [`RationalStage::g_inverse`] when `f64` is used.
pub const DEFAULT_INVERSE_TOL: f64 = 1e-10;
pub const BISECTION_MAX_ITERS: usize = 200;
/// Uniform grid used to locate the minimum of `g'` before refinement.
pub const THETA_GRID_POINTS: usize = 4096;
pub const GOLDEN_X_TOL: f64 = 1e-10;
/// Half-width of the band around `g^{-1}(u)` where the sign check is skipped.
pub const SIGN_DEAD_BAND: f64 = 1e-9;

/// Default residual tolerance for `g_inverse` in scalar type `T`.
pub fn default_inverse_tol<T: Scalar>() -> T {
    T::lit(DEFAULT_INVERSE_TOL).max(T::epsilon() * T::lit(1e4))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RationalStage<T> {
    b: T,
    c: T,
    d: T,
    e: T,
}

/// Closed interval `[lo, hi]` of inputs or states. `hi = +inf` is used only
/// for the external input set `[u_bar, inf)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageInterval<T> {
    lo: T,
    hi: T,
}

impl<T: Scalar> StageInterval<T> {
    pub fn new(lo: T, hi: T) -> Result<Self> {
        if !lo.is_finite() || lo < T::zero() || hi.is_nan() || hi < lo {
            return Err(Error::Domain(format!("invalid interval [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    /// `[lo, +inf)`.
    pub fn at_least(lo: T) -> Result<Self> {
        Self::new(lo, T::infinity())
    }

    pub fn point(x: T) -> Result<Self> {
        Self::new(x, x)
    }

    pub fn lo(&self) -> T {
        self.lo
    }

    pub fn hi(&self) -> T {
        self.hi
    }

    pub fn is_unbounded(&self) -> bool {
        self.hi.is_infinite()
    }

    pub fn width(&self) -> T {
        self.hi - self.lo
    }

    pub fn contains(&self, x: T) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        other.lo <= self.lo && self.hi <= other.hi
    }
}

impl<T: Scalar> RationalStage<T> {
    pub fn new(b: T, c: T, d: T, e: T) -> Result<Self> {
        for (name, v) in [("b", b), ("c", c), ("d", d), ("e", e)] {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::Domain(format!("stage parameter {name} must be positive, got {v}")));
            }
        }
        let stage = Self { b, c, d, e };
        stage.check_shape()?;
        Ok(stage)
    }

    /// Grid check of `alpha(0) = 0`, `beta(1) = 0` and the monotonicity of
    /// `alpha` and `beta`.
    fn check_shape(&self) -> Result<()> {
        if self.alpha(T::zero()) != T::zero() || self.beta(T::one()) != T::zero() {
            return Err(Error::Domain("alpha(0) and beta(1) must vanish".into()));
        }
        let n = 64;
        let xs = (0..=n).map(|j| T::from_usize_lossy(j) / T::from_usize_lossy(n));
        let mut prev: Option<(T, T)> = None;
        for x in xs {
            let (a, bt) = (self.alpha(x), self.beta(x));
            if let Some((pa, pb)) = prev {
                if !(a > pa) || !(bt < pb) {
                    return Err(Error::Domain(format!(
                        "alpha must increase and beta decrease on [0, 1] (failed at x = {x})"
                    )));
                }
            }
            prev = Some((a, bt));
        }
        Ok(())
    }

    pub fn b(&self) -> T {
        self.b
    }

    pub fn c(&self) -> T {
        self.c
    }

    pub fn d(&self) -> T {
        self.d
    }

    pub fn e(&self) -> T {
        self.e
    }

    /// Degradation term `b x / (c + x)`.
    pub fn alpha(&self, x: T) -> T {
        self.b * x / (self.c + x)
    }

    /// Activation term `d (1 - x) / (e + 1 - x)`.
    pub fn beta(&self, x: T) -> T {
        let y = T::one() - x;
        self.d * y / (self.e + y)
    }

    /// Vector field without domain checks; the integrator evaluates it at
    /// intermediate points that may sit a rounding error outside `[0, 1]`.
    pub(crate) fn rate(&self, x: T, u: T) -> T {
        u * self.beta(x) - self.alpha(x)
    }

    /// `f(x, u) = -alpha(x) + u beta(x)`.
    pub fn f(&self, x: T, u: T) -> Result<T> {
        if !(x >= T::zero() && x <= T::one()) {
            return Err(Error::Domain(format!("state x = {x} outside [0, 1]")));
        }
        if !(u >= T::zero()) || !u.is_finite() {
            return Err(Error::Domain(format!("input u = {u} must be finite and >= 0")));
        }
        Ok(self.rate(x, u))
    }

    fn check_regular(&self, x: T) -> Result<()> {
        if !(x >= T::zero()) {
            return Err(Error::Domain(format!("x = {x} is negative")));
        }
        let eps = T::sing_eps();
        if !(x < T::one() - eps) {
            return Err(Error::Singularity {
                x: x.to_f64().unwrap_or(f64::NAN),
                eps: eps.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(())
    }

    fn g_unchecked(&self, x: T) -> T {
        let y = T::one() - x;
        self.b * x * (self.e + y) / ((self.c + x) * self.d * y)
    }

    fn g_prime_unchecked(&self, x: T) -> T {
        let (c, e) = (self.c, self.e);
        let y = T::one() - x;
        let num = e * x * x + c * y * y + c * e;
        let den = (c + x) * (c + x) * y * y;
        self.b / self.d * num / den
    }

    /// Steady-state input map `g = alpha / beta`, refused near the pole at 1.
    pub fn g(&self, x: T) -> Result<T> {
        self.check_regular(x)?;
        Ok(self.g_unchecked(x))
    }

    /// Closed-form derivative
    /// `(b/d) (e x^2 + c (x-1)^2 + c e) / ((c + x)^2 (1 - x)^2)`.
    pub fn g_prime(&self, x: T) -> Result<T> {
        self.check_regular(x)?;
        Ok(self.g_prime_unchecked(x))
    }

    /// Equilibrium state for constant input `u`, by bisection on
    /// `[0, 1 - eps]`.
    ///
    /// Bisection runs until the bracket cannot be split further (well below
    /// `1e-12` in `f64`); the result must then satisfy
    /// `|g(x) - u| <= tol * max(1, u)`.
    pub fn g_inverse(&self, u: T, tol: T) -> Result<T> {
        if !(u >= T::zero()) || !u.is_finite() {
            return Err(Error::Domain(format!("g_inverse needs finite u >= 0, got {u}")));
        }
        if u == T::zero() {
            return Ok(T::zero());
        }
        let scale = u.max(T::one());
        let mut lo = T::zero();
        let mut hi = T::one() - T::sing_eps();
        if self.g_unchecked(hi) < u {
            return Err(Error::Numerical(format!(
                "u = {u} exceeds g at the edge of the regular range"
            )));
        }
        for _ in 0..BISECTION_MAX_ITERS {
            let mid = (lo + hi) / T::lit(2.0);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.g_unchecked(mid) < u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let best = self.closer_endpoint(lo, hi, u);
        let residual = (self.g_unchecked(best) - u).abs();
        if residual <= tol * scale {
            Ok(best)
        } else {
            Err(Error::Numerical(format!(
                "g_inverse({u}) stalled at x = {best} with residual {residual:e}"
            )))
        }
    }

    fn closer_endpoint(&self, lo: T, hi: T, u: T) -> T {
        if (self.g_unchecked(lo) - u).abs() <= (self.g_unchecked(hi) - u).abs() {
            lo
        } else {
            hi
        }
    }

    /// Global lower bound on `g'` over `[0, 1)`:
    /// `16 (b/d) c e / (c + 1)^4 * (1 + 1/(e + c))`.
    pub fn delta_lower_bound(&self) -> T {
        let (b, c, d, e) = (self.b, self.c, self.d, self.e);
        let cp1 = c + T::one();
        T::lit(16.0) * (b / d) * c * e / (cp1 * cp1 * cp1 * cp1) * (T::one() + T::one() / (e + c))
    }

    /// Minimum of `g'` on `[lo, min(hi, 1 - 2 eps)]`: a uniform scan followed
    /// by golden-section refinement around the best grid cell.
    pub fn theta(&self, interval: StageInterval<T>) -> Result<T> {
        let lo = interval.lo();
        let hi = interval.hi().min(T::one());
        if lo > hi {
            return Err(Error::Domain(format!("empty interval [{lo}, {hi}]")));
        }
        let upper = hi.min(T::one() - T::lit(2.0) * T::sing_eps());
        if lo >= upper {
            return self.g_prime(lo);
        }
        let n = THETA_GRID_POINTS;
        let step = (upper - lo) / T::from_usize_lossy(n - 1);
        let at = |j: usize| if j == n - 1 { upper } else { lo + T::from_usize_lossy(j) * step };
        let (mut best_j, mut best) = (0, T::infinity());
        for j in 0..n {
            let v = self.g_prime_unchecked(at(j));
            if v < best {
                best = v;
                best_j = j;
            }
        }
        let a = at(best_j.saturating_sub(1));
        let b = at((best_j + 1).min(n - 1));
        let (_, refined) = golden_section_min(|x| self.g_prime_unchecked(x), a, b, T::lit(GOLDEN_X_TOL));
        Ok(best.min(refined))
    }

    /// Lipschitz constant of `g^{-1}` on the inputs whose equilibria fill
    /// `interval`, i.e. `1 / theta(interval)`.
    pub fn lipschitz_constant(&self, interval: StageInterval<T>) -> Result<T> {
        Ok(T::one() / self.theta(interval)?)
    }

    /// Image of an input interval under `g^{-1}`. An unbounded input set maps
    /// to the state ceiling 1.
    pub fn propagate_interval(&self, inputs: StageInterval<T>, tol: T) -> Result<StageInterval<T>> {
        let lo = self.g_inverse(inputs.lo(), tol)?;
        let hi = if inputs.is_unbounded() {
            T::one()
        } else {
            self.g_inverse(inputs.hi(), tol)?
        };
        StageInterval::new(lo, hi)
    }

    /// Checks `x < g^{-1}(u) => f > 0` and `x > g^{-1}(u) => f < 0` on a
    /// uniform grid of `grid_n` points in `[0, 1]` for every sampled `u`.
    pub fn check_sign_conditions(&self, grid_n: usize, u_samples: &[T]) -> bool {
        if grid_n < 2 || u_samples.is_empty() {
            return false;
        }
        let band = T::lit(SIGN_DEAD_BAND);
        let tol = default_inverse_tol::<T>();
        u_samples.iter().all(|&u| {
            let Ok(eq) = self.g_inverse(u, tol) else {
                return false;
            };
            (0..grid_n).all(|j| {
                let x = T::from_usize_lossy(j) / T::from_usize_lossy(grid_n - 1);
                let Ok(rate) = self.f(x, u) else {
                    return false;
                };
                if x < eq - band {
                    rate > T::zero()
                } else if x > eq + band {
                    rate < T::zero()
                } else {
                    true
                }
            })
        })
    }
}

/// Golden-section search for a minimum of `f` on `[a, b]`. Returns the best
/// point seen and its value.
fn golden_section_min<T: Scalar, F: Fn(T) -> T>(f: F, mut a: T, mut b: T, x_tol: T) -> (T, T) {
    let inv_phi = (T::lit(5.0).sqrt() - T::one()) / T::lit(2.0);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    let mut best = [(a, f(a)), (b, f(b)), (x1, f1), (x2, f2)]
        .into_iter()
        .fold((a, T::infinity()), |acc, p| if p.1 < acc.1 { p } else { acc });
    let mut iters = 0;
    while b - a > x_tol && iters < 200 {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
            if f1 < best.1 {
                best = (x1, f1);
            }
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
            if f2 < best.1 {
                best = (x2, f2);
            }
        }
        iters += 1;
    }
    best
}
