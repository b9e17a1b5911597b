//! Stability certificates for the closed loop.
//!
//! Given an input floor `u_bar`, the cascade's admissible inputs are
//! `[u_bar, inf)`. Pushing that set through each stage gives anchor states
//! `x̄_i = g_i^{-1}(x̄_{i-1})` (with `x̄_0 = u_bar`) and the stage gains
//! `lambda_i = 1 / theta_i`, `theta_i = min g_i'` on `[x̄_i, 1]`. Any feedback
//! gain below
//!
//! ```text
//! k_max = min { theta / mu , mu / u_bar - 1 },   theta = prod theta_i
//! ```
//!
//! passes the small-gain test and keeps `psi(x_n)` inside `[u_bar, inf)`, so
//! every solution converges to the unique equilibrium whatever the delays.

use crate::dde::{simulate, CascadeModel, SimConfig};
use crate::gains::{self, LinearGain};
use crate::stage::{default_inverse_tol, RationalStage, StageInterval};
use crate::{Error, Result, Scalar};

/// Wording attached to every secant-based bound.
pub const SECANT_SCOPE: &str = "linearized, delay-free, local";
pub const DEFAULT_UBAR_GRID: usize = 801;
pub const DEFAULT_UBAR_RANGE: (f64, f64) = (0.02, 0.2);
pub const DEFAULT_HOPF_TOL: f64 = 0.05;
pub const DEFAULT_OSC_THRESHOLD: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate<T> {
    pub u_bar: T,
    pub mu: T,
    /// `x̄_1..x̄_n`.
    pub anchors: Vec<T>,
    pub thetas: Vec<T>,
    pub theta_total: T,
    pub lambda_total: T,
    /// `theta_total / mu`.
    pub k_smallgain: T,
    /// `mu / u_bar - 1`.
    pub k_input: T,
    pub k_max: T,
}

impl<T: Scalar> Certificate<T> {
    /// True when no positive feedback gain is certified (e.g. `mu <= u_bar`).
    pub fn nothing_certified(&self) -> bool {
        !(self.k_max > T::zero())
    }

    pub fn stage_gains(&self) -> Vec<LinearGain<T>> {
        self.thetas
            .iter()
            .map(|&t| LinearGain::new(T::one() / t).expect("theta is positive"))
            .collect()
    }

    pub fn cascade_gain(&self) -> LinearGain<T> {
        LinearGain::new(self.lambda_total).expect("lambda is positive")
    }

    /// Whether `k` falls under this certificate.
    pub fn covers(&self, k: T) -> bool {
        k >= T::zero() && k < self.k_max && gains::feedback_small_gain(k, self.mu, self.cascade_gain())
    }
}

/// Builds the certificate for input floor `u_bar` and external input `mu`.
pub fn certify<T: Scalar>(stages: &[RationalStage<T>], u_bar: T, mu: T) -> Result<Certificate<T>> {
    if stages.is_empty() {
        return Err(Error::Domain("certificate needs at least one stage".into()));
    }
    if !(u_bar > T::zero()) || !u_bar.is_finite() {
        return Err(Error::Domain(format!("u_bar must be positive, got {u_bar}")));
    }
    if !(mu > T::zero()) || !mu.is_finite() {
        return Err(Error::Domain(format!("mu must be positive, got {mu}")));
    }
    let tol = default_inverse_tol::<T>();
    let mut inputs = StageInterval::at_least(u_bar)?;
    let mut anchors = Vec::with_capacity(stages.len());
    let mut thetas = Vec::with_capacity(stages.len());
    for stage in stages {
        let image = stage.propagate_interval(inputs, tol)?;
        anchors.push(image.lo());
        thetas.push(stage.theta(image)?);
        inputs = image;
    }
    let theta_total = thetas.iter().fold(T::one(), |p, &t| p * t);
    let lambda_total = T::one() / theta_total;
    let k_smallgain = theta_total / mu;
    let k_input = mu / u_bar - T::one();
    Ok(Certificate {
        u_bar,
        mu,
        anchors,
        thetas,
        theta_total,
        lambda_total,
        k_smallgain,
        k_input,
        k_max: k_smallgain.min(k_input),
    })
}

/// Certificates on a uniform `u_bar` grid of `grid_n` points over
/// `[u_lo, u_hi]`, in ascending order.
pub fn ubar_scan<T: Scalar>(
    stages: &[RationalStage<T>],
    mu: T,
    u_lo: T,
    u_hi: T,
    grid_n: usize,
) -> Result<Vec<Certificate<T>>> {
    if !(u_lo > T::zero() && u_lo < u_hi) || !u_hi.is_finite() {
        return Err(Error::Domain(format!("need 0 < u_lo < u_hi, got [{u_lo}, {u_hi}]")));
    }
    if grid_n < 2 {
        return Err(Error::Domain(format!("grid needs at least 2 points, got {grid_n}")));
    }
    let step = (u_hi - u_lo) / T::from_usize_lossy(grid_n - 1);
    (0..grid_n)
        .map(|j| {
            let u = if j == grid_n - 1 { u_hi } else { u_lo + T::from_usize_lossy(j) * step };
            certify(stages, u, mu)
        })
        .collect()
}

/// The grid point with the largest `k_max`; ties go to the smaller `u_bar`.
pub fn optimize_ubar<T: Scalar>(
    stages: &[RationalStage<T>],
    mu: T,
    u_lo: T,
    u_hi: T,
    grid_n: usize,
) -> Result<(T, Certificate<T>)> {
    let best = ubar_scan(stages, mu, u_lo, u_hi, grid_n)?
        .into_iter()
        .reduce(|best, c| if c.k_max > best.k_max { c } else { best })
        .expect("grid is nonempty");
    Ok((best.u_bar, best))
}

/// `(sec(pi/n))^n`, exact for `n = 3, 4, 6`.
pub fn secant_margin<T: Scalar>(n: usize) -> Result<T> {
    match n {
        0..=2 => Err(Error::Domain(format!("secant condition needs n >= 3, got {n}"))),
        3 => Ok(T::lit(8.0)),
        4 => Ok(T::lit(4.0)),
        6 => Ok(T::lit(64.0) / T::lit(27.0)),
        _ => {
            let sec = T::one() / (T::PI() / T::from_usize_lossy(n)).cos();
            Ok(sec.powi(n as i32))
        }
    }
}

/// `min{ margin_n * theta / mu, mu / u_bar - 1 }`. Valid for the delay-free
/// linearization only, see [`SECANT_SCOPE`].
pub fn secant_relaxed_bound<T: Scalar>(cert: &Certificate<T>, n: usize) -> Result<T> {
    let margin = secant_margin::<T>(n)?;
    Ok((margin * cert.theta_total / cert.mu).min(cert.k_input))
}

/// Secant criterion `|prod beta / prod alpha| < (sec(pi/n))^n` for the cyclic
/// matrix with diagonal `alphas < 0` and loop weights `betas > 0`.
pub fn secant_hurwitz_check<T: Scalar>(alphas: &[T], betas: &[T]) -> Result<bool> {
    if alphas.len() != betas.len() {
        return Err(Error::Domain(format!(
            "{} diagonal entries but {} loop weights",
            alphas.len(),
            betas.len()
        )));
    }
    if alphas.iter().any(|&a| !(a < T::zero())) || betas.iter().any(|&b| !(b > T::zero())) {
        return Err(Error::Domain("secant condition needs all alpha < 0 and all beta > 0".into()));
    }
    let margin = secant_margin::<T>(alphas.len())?;
    let ratio = betas.iter().zip(alphas).fold(T::one(), |r, (&b, &a)| r * (b / a)).abs();
    Ok(ratio < margin)
}

/// Linearization `z' = a z + b v` of a stage at `(x̄, ū)`, `x̄ = g^{-1}(ū)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearizedStage<T> {
    pub u_bar: T,
    pub x_bar: T,
    /// `df/dx` by central differences.
    pub a: T,
    /// `df/du` by central differences.
    pub b: T,
    /// H-infinity gain `1 / g'(x̄)`.
    pub gain: T,
}

impl<T: Scalar> LinearizedStage<T> {
    /// `|b / a|`, which equals `gain` up to differencing error.
    pub fn fd_gain(&self) -> T {
        (self.b / self.a).abs()
    }
}

pub fn linearized_hinf_gain<T: Scalar>(stage: &RationalStage<T>, u_bar: T) -> Result<LinearizedStage<T>> {
    if !(u_bar > T::zero()) || !u_bar.is_finite() {
        return Err(Error::Domain(format!("u_bar must be positive, got {u_bar}")));
    }
    let x_bar = stage.g_inverse(u_bar, default_inverse_tol::<T>())?;
    let gain = T::one() / stage.g_prime(x_bar)?;
    let hx = T::lit(1e-5) * x_bar.min(T::one() - x_bar);
    let hu = T::lit(1e-5) * u_bar;
    let two = T::lit(2.0);
    let a = (stage.f(x_bar + hx, u_bar)? - stage.f(x_bar - hx, u_bar)?) / (two * hx);
    let b = (stage.f(x_bar, u_bar + hu)? - stage.f(x_bar, u_bar - hu)?) / (two * hu);
    Ok(LinearizedStage { u_bar, x_bar, a, b, gain })
}

/// Product of the stage H-infinity gains along the propagated anchors.
pub fn cascade_hinf_gain<T: Scalar>(
    stages: &[RationalStage<T>],
    u_bar: T,
) -> Result<(T, Vec<LinearizedStage<T>>)> {
    let mut u = u_bar;
    let mut parts = Vec::with_capacity(stages.len());
    for stage in stages {
        let lin = linearized_hinf_gain(stage, u)?;
        u = lin.x_bar;
        parts.push(lin);
    }
    let total = parts.iter().fold(T::one(), |p, l| p * l.gain);
    Ok((total, parts))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HopfBracket<T> {
    /// Midpoint of the final bracket.
    pub onset: T,
    /// Largest gain seen without sustained oscillation.
    pub k_lo: T,
    /// Smallest gain seen with sustained oscillation.
    pub k_hi: T,
    /// `(k, tail amplitude of x_n)` for every simulation run, in run order.
    pub evaluations: Vec<(T, T)>,
}

/// Locates the onset of sustained oscillation in `k` by bisection on the
/// tail amplitude of `x_n`. The `k` stored in `template` is ignored.
pub fn find_hopf_onset<T: Scalar>(
    template: &CascadeModel<T>,
    cfg: &SimConfig<T>,
    k_lo: T,
    k_hi: T,
    osc_threshold: T,
    tol_k: T,
    tail_fraction: T,
) -> Result<HopfBracket<T>> {
    if !(k_lo >= T::zero() && k_lo < k_hi) {
        return Err(Error::Bracket(format!("need 0 <= k_lo < k_hi, got [{k_lo}, {k_hi}]")));
    }
    if !(tol_k > T::zero()) {
        return Err(Error::Domain(format!("tol_k must be positive, got {tol_k}")));
    }
    let two = T::lit(2.0);
    let mut evaluations = Vec::new();
    if tol_k >= k_hi - k_lo {
        return Ok(HopfBracket { onset: (k_lo + k_hi) / two, k_lo, k_hi, evaluations });
    }
    let n = template.len();
    let mut amplitude = |k: T| -> Result<T> {
        let sim = simulate(&template.with_k(k)?, cfg)?;
        let a = sim.component(n - 1)?.tail_amplitude(tail_fraction)?;
        evaluations.push((k, a));
        Ok(a)
    };
    let a_lo = amplitude(k_lo)?;
    if a_lo >= osc_threshold {
        return Err(Error::Bracket(format!("k_lo = {k_lo} already oscillates (amplitude {a_lo:e})")));
    }
    let a_hi = amplitude(k_hi)?;
    if a_hi < osc_threshold {
        return Err(Error::Bracket(format!("k_hi = {k_hi} does not oscillate (amplitude {a_hi:e})")));
    }
    let (mut lo, mut hi) = (k_lo, k_hi);
    while hi - lo > tol_k {
        let mid = (lo + hi) / two;
        if amplitude(mid)? >= osc_threshold {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(HopfBracket { onset: (lo + hi) / two, k_lo: lo, k_hi: hi, evaluations })
}

/// One simulation of a certificate cross-check.
#[derive(Debug, Clone, PartialEq)]
pub struct SoundnessRun<T> {
    /// Inter-stage delays followed by the feedback delay.
    pub delays: Vec<T>,
    pub x0: Vec<T>,
    /// Tail diameter of the full state trajectory.
    pub amplitude: T,
    pub limit: Option<Vec<T>>,
    /// Smallest effective input over the tail window.
    pub min_tail_input: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SoundnessReport<T> {
    pub k: T,
    pub runs: Vec<SoundnessRun<T>>,
    /// Largest componentwise distance between any two run limits; infinite
    /// when some run did not converge.
    pub spread: T,
    pub tol: T,
}

impl<T: Scalar> SoundnessReport<T> {
    pub fn passed(&self) -> bool {
        self.runs.iter().all(|r| r.limit.is_some()) && self.spread < self.tol
    }
}

/// Delay vectors used by the cross-check for an `n`-stage loop: none,
/// `(1, 2, .., n)`, and `(0.5, .., 0.5, 5)`.
pub fn standard_delay_sets<T: Scalar>(n: usize) -> Vec<Vec<T>> {
    let mut slow = vec![T::lit(0.5); n];
    slow[n - 1] = T::lit(5.0);
    vec![
        vec![T::zero(); n],
        (1..=n).map(T::from_usize_lossy).collect(),
        slow,
    ]
}

/// Simulates the loop at gain `k` for every delay vector and initial state
/// and checks that all runs settle (tail diameter below `tol`) on one common
/// limit (componentwise spread below `tol`).
#[allow(clippy::too_many_arguments)]
pub fn soundness_check<T: Scalar>(
    stages: &[RationalStage<T>],
    mu: T,
    k: T,
    delay_sets: &[Vec<T>],
    initial_states: &[Vec<T>],
    dt: T,
    horizon: T,
    tail_fraction: T,
    tol: T,
) -> Result<SoundnessReport<T>> {
    let n = stages.len();
    let mut runs = Vec::with_capacity(delay_sets.len() * initial_states.len());
    for delays in delay_sets {
        if delays.len() != n {
            return Err(Error::Config(format!(
                "delay vector needs {n} entries (inter-stage then feedback), got {}",
                delays.len()
            )));
        }
        let model = CascadeModel::new(stages.to_vec(), delays[..n - 1].to_vec(), delays[n - 1], mu, k)?;
        for x0 in initial_states {
            let sim = simulate(&model, &SimConfig::new(dt, horizon, x0.clone()))?;
            let est = sim.trajectory.estimate_limit(tail_fraction, tol)?;
            let window = sim.trajectory.tail_window(tail_fraction)?;
            let min_tail_input = sim.effective_input[window].iter().fold(T::infinity(), |m, &u| m.min(u));
            runs.push(SoundnessRun {
                delays: delays.clone(),
                x0: x0.clone(),
                amplitude: est.amplitude,
                limit: est.limit,
                min_tail_input,
            });
        }
    }
    let limits: Option<Vec<&Vec<T>>> = runs.iter().map(|r| r.limit.as_ref()).collect();
    let spread = match limits {
        Some(ls) => (0..n)
            .map(|i| {
                let (lo, hi) = ls
                    .iter()
                    .fold((T::infinity(), T::neg_infinity()), |(lo, hi), l| (lo.min(l[i]), hi.max(l[i])));
                hi - lo
            })
            .fold(T::zero(), T::max),
        None => T::infinity(),
    };
    Ok(SoundnessReport { k, runs, spread, tol })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mapk() -> Vec<RationalStage<f64>> {
        vec![
            RationalStage::new(0.1, 0.1, 1.0, 0.1).unwrap(),
            RationalStage::new(0.1, 0.01, 1.0, 0.01).unwrap(),
            RationalStage::new(0.5, 0.01, 1.0, 0.01).unwrap(),
        ]
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn mapk_certificate_at_0_061() {
        let c = certify(&mapk(), 0.061, 0.3).unwrap();
        assert!(rel(c.theta_total, 1.39933) < 1e-4, "{}", c.theta_total);
        assert!(rel(c.lambda_total, 0.71463) < 1e-4);
        assert!((c.k_smallgain - 4.6644).abs() < 1e-3);
        assert!((c.k_input - 3.918).abs() < 1e-3);
        assert_eq!(c.k_max, c.k_input);
        assert!(!c.nothing_certified());
        assert!(c.covers(3.9) && !c.covers(3.95) && !c.covers(5.2));
        let prod: f64 = c.thetas.iter().product();
        assert!(rel(c.theta_total, prod) < 1e-12);
        assert!((c.lambda_total * c.theta_total - 1.0).abs() < 1e-12);
        // anchors follow the inverse chain
        let s = mapk();
        assert!((s[0].g(c.anchors[0]).unwrap() - 0.061).abs() < 1e-12);
        for (i, st) in s.iter().enumerate().skip(1) {
            assert!((st.g(c.anchors[i]).unwrap() - c.anchors[i - 1]).abs() < 1e-12);
        }
    }

    #[test]
    fn sensitivity_at_0_06() {
        let c = certify(&mapk(), 0.06, 0.3).unwrap();
        assert!(rel(c.lambda_total, 1.134) < 1e-3);
    }

    #[test]
    fn single_stage_reduces_to_formula() {
        let s = vec![RationalStage::new(0.1, 0.1, 1.0, 0.1).unwrap()];
        let c = certify(&s, 0.2, 0.5).unwrap();
        let t: f64 = c.thetas[0];
        assert_eq!(c.k_max, (t / 0.5).min(0.5 / 0.2 - 1.0));
    }

    #[test]
    fn mu_below_floor_certifies_nothing() {
        let c = certify(&mapk(), 0.4, 0.3).unwrap();
        assert!(c.k_max <= 0.0);
        assert!(c.nothing_certified());
        assert!(!c.covers(0.0));
    }

    #[test]
    fn certify_rejects_bad_inputs() {
        assert!(certify(&mapk(), 0.0, 0.3).is_err());
        assert!(certify(&mapk(), 0.1, -0.3).is_err());
        assert!(certify::<f64>(&[], 0.1, 0.3).is_err());
    }

    #[test]
    fn optimizer_dominates_hand_choice() {
        let (u, c) = optimize_ubar(&mapk(), 0.3, 0.04, 0.12, 801).unwrap();
        assert!(c.k_max >= 3.918, "best {} at {}", c.k_max, u);
        let again = optimize_ubar(&mapk(), 0.3, 0.04, 0.12, 801).unwrap();
        assert_eq!((u, c), again);
    }

    #[test]
    fn optimizer_on_degenerate_range() {
        let (u, c) = optimize_ubar(&mapk(), 0.3, 0.061, 0.061 + 1e-12, 2).unwrap();
        assert!((u - 0.061).abs() < 1e-11);
        assert!((c.k_max - certify(&mapk(), 0.061, 0.3).unwrap().k_max).abs() < 1e-9);
        assert!(optimize_ubar(&mapk(), 0.3, 0.1, 0.1, 5).is_err());
        assert!(optimize_ubar(&mapk(), 0.3, 0.1, 0.2, 1).is_err());
    }

    #[test]
    fn tradeoff_along_ubar() {
        let scan = ubar_scan(&mapk(), 0.3, 0.02, 0.2, 181).unwrap();
        for w in scan.windows(2) {
            assert!(w[0].theta_total <= w[1].theta_total * (1.0 + 1e-9));
            assert!(w[0].k_input > w[1].k_input);
        }
    }

    #[test]
    fn secant_margins() {
        assert_eq!(secant_margin::<f64>(3).unwrap(), 8.0);
        assert_eq!(secant_margin::<f64>(4).unwrap(), 4.0);
        let m5: f64 = secant_margin(5).unwrap();
        assert!((m5 - (1.0 / (std::f64::consts::PI / 5.0).cos()).powi(5)).abs() < 1e-12);
        assert!((secant_margin::<f64>(6).unwrap() - (2.0 / 3f64.sqrt()).powi(6)).abs() < 1e-12);
        assert!(secant_margin::<f64>(2).is_err());
        assert!(secant_margin::<f64>(1).is_err());
        // large n tends to 1 from above
        let m100: f64 = secant_margin(100).unwrap();
        assert!(m100 > 1.0 && m100 < 1.1);
    }

    #[test]
    fn secant_relaxed_at_0_05763() {
        let c = certify(&mapk(), 0.05763, 0.3).unwrap();
        assert!(rel(c.lambda_total, 6.32) < 2e-3);
        let k = secant_relaxed_bound(&c, 3).unwrap();
        assert_eq!(k, c.k_input);
        assert!((k - 4.206).abs() < 1e-3);
        // 7.9633 with the unrounded lambda = 6.3201; still under the margin 8.
        let loop_gain = 4.2 * 0.3 * c.lambda_total;
        assert!(loop_gain > 7.9 && loop_gain < 8.0, "{loop_gain}");
        assert!(secant_relaxed_bound(&c, 2).is_err());
    }

    #[test]
    fn secant_relaxed_dominates_plain_bound() {
        for c in ubar_scan(&mapk(), 0.3, 0.02, 0.2, 91).unwrap() {
            assert!(secant_relaxed_bound(&c, 3).unwrap() >= c.k_max);
        }
    }

    #[test]
    fn secant_check_cases() {
        assert!(secant_hurwitz_check(&[-1.0; 3], &[1.0; 3]).unwrap());
        assert!(!secant_hurwitz_check(&[-1.0; 3], &[2.0; 3]).unwrap());
        assert!(secant_hurwitz_check(&[-1.0; 3], &[1.9, 2.0, 2.0]).unwrap());
        assert!(secant_hurwitz_check(&[-1.0, 1.0, -1.0], &[1.0; 3]).is_err());
        assert!(secant_hurwitz_check(&[-1.0; 3], &[1.0, 0.0, 1.0]).is_err());
        assert!(secant_hurwitz_check(&[-1.0; 2], &[1.0; 2]).is_err());
        assert!(secant_hurwitz_check(&[-1.0; 3], &[1.0; 2]).is_err());
    }

    /// Routh-Hurwitz oracle for the 3-cycle: the characteristic polynomial of
    /// the cyclic matrix is `(s - a1)(s - a2)(s - a3) + b1 b2 b3`.
    fn cubic_cycle_is_hurwitz(a: [f64; 3], b: [f64; 3]) -> bool {
        let p2 = -(a[0] + a[1] + a[2]);
        let p1 = a[0] * a[1] + a[1] * a[2] + a[0] * a[2];
        let p0 = -a[0] * a[1] * a[2] + b[0] * b[1] * b[2];
        p2 > 0.0 && p0 > 0.0 && p2 * p1 > p0
    }

    #[test]
    fn secant_is_sufficient_against_routh_hurwitz() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            let a = [0; 3].map(|_| -rng.gen_range(0.1..3.0));
            let b = [0; 3].map(|_| rng.gen_range(0.1..3.0));
            if secant_hurwitz_check(&a, &b).unwrap() {
                assert!(cubic_cycle_is_hurwitz(a, b), "{a:?} {b:?}");
            }
        }
        // Equal diagonals make the criterion tight.
        assert!(cubic_cycle_is_hurwitz([-1.0; 3], [1.99; 3]));
        assert!(!cubic_cycle_is_hurwitz([-1.0; 3], [2.01; 3]));
    }

    #[test]
    fn linearized_gain_identities() {
        let s = RationalStage::<f64>::new(0.1, 0.1, 1.0, 0.1).unwrap();
        let lin = linearized_hinf_gain(&s, 0.1).unwrap();
        assert!((lin.x_bar - 0.5).abs() < 1e-12);
        assert!((lin.gain - 1.0 / s.g_prime(0.5).unwrap()).abs() < 1e-12);
        assert!((lin.gain * s.g_prime(lin.x_bar).unwrap() - 1.0).abs() < 1e-15);
        assert!(rel(lin.fd_gain(), lin.gain) < 1e-6);
        assert!(lin.a < 0.0 && lin.b > 0.0);
        assert!(linearized_hinf_gain(&s, 0.0).is_err());
    }

    #[test]
    fn cascade_linear_gain_vs_certificate() {
        // Where every theta_i is attained at its anchor the two agree; in
        // general the local gain cannot exceed the certified one.
        for u in [0.1, 0.15, 0.2, 0.5] {
            let c = certify(&mapk(), u, 0.3).unwrap();
            let (h, _) = cascade_hinf_gain(&mapk(), u).unwrap();
            assert!(rel(h, c.lambda_total) < 1e-6, "u = {u}: {h} vs {}", c.lambda_total);
        }
        for u in [0.05, 0.055, 0.061, 0.08] {
            let c = certify(&mapk(), u, 0.3).unwrap();
            let (h, _) = cascade_hinf_gain(&mapk(), u).unwrap();
            assert!(h <= c.lambda_total * (1.0 + 1e-9));
        }
    }

    #[test]
    fn hopf_trivial_bracket() {
        let m = CascadeModel::new(mapk(), vec![0.0, 0.0], 0.0, 0.3, 0.0).unwrap();
        let cfg = SimConfig::new(0.01, 100.0, vec![0.0; 3]);
        let h = find_hopf_onset(&m, &cfg, 4.0, 6.0, 0.01, 2.0, 0.2).unwrap();
        assert_eq!(h.onset, 5.0);
        assert!(h.evaluations.is_empty());
        assert!(matches!(find_hopf_onset(&m, &cfg, 6.0, 4.0, 0.01, 0.05, 0.2), Err(Error::Bracket(_))));
    }

    #[test]
    fn hopf_bracket_validation() {
        let m = CascadeModel::new(mapk(), vec![0.0, 0.0], 0.0, 0.3, 0.0).unwrap();
        let cfg = SimConfig::new(0.01, 2000.0, vec![0.0; 3]);
        // both ends stable
        let err = find_hopf_onset(&m, &cfg, 1.0, 2.0, 0.01, 0.05, 0.2).unwrap_err();
        assert!(matches!(err, Error::Bracket(_)));
        // both ends oscillating
        let err = find_hopf_onset(&m, &cfg, 5.5, 6.0, 0.01, 0.05, 0.2).unwrap_err();
        assert!(matches!(err, Error::Bracket(_)));
    }

    #[test]
    fn soundness_check_below_certificate() {
        let c = certify(&mapk(), 0.061, 0.3).unwrap();
        let k = 0.95 * c.k_max;
        let states = vec![vec![0.0; 3], vec![1.0, 0.5, 0.2], vec![0.3, 0.9, 1.0]];
        let delays = standard_delay_sets::<f64>(3);
        assert_eq!(delays[1], vec![1.0, 2.0, 3.0]);
        assert_eq!(delays[2], vec![0.5, 0.5, 5.0]);
        let rep = soundness_check(&mapk(), 0.3, k, &delays, &states, 0.01, 2000.0, 0.2, 1e-4).unwrap();
        assert_eq!(rep.runs.len(), 9);
        assert!(rep.passed(), "spread {}", rep.spread);
        for run in &rep.runs {
            assert!(run.min_tail_input >= c.u_bar);
        }
    }

    #[test]
    fn soundness_check_fails_when_oscillating() {
        let states = vec![vec![0.0; 3]];
        let delays = vec![vec![0.0; 3]];
        let rep = soundness_check(&mapk(), 0.3, 5.2, &delays, &states, 0.01, 2000.0, 0.2, 1e-4).unwrap();
        assert!(!rep.passed());
        assert!(rep.spread.is_infinite());
        assert!(soundness_check(&mapk(), 0.3, 1.0, &[vec![0.0; 2]], &states, 0.01, 100.0, 0.2, 1e-4).is_err());
    }

    #[test]
    fn generic_over_f32() {
        let stages: Vec<RationalStage<f32>> = vec![
            RationalStage::new(0.1, 0.1, 1.0, 0.1).unwrap(),
            RationalStage::new(0.1, 0.01, 1.0, 0.01).unwrap(),
            RationalStage::new(0.5, 0.01, 1.0, 0.01).unwrap(),
        ];
        let c = certify(&stages, 0.061, 0.3).unwrap();
        assert!((c.lambda_total - 0.71463).abs() / 0.71463 < 1e-2, "{}", c.lambda_total);
    }
}
