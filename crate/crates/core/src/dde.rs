//! Closed-loop delayed cascade
//!
//! ```text
//! x_1' = -alpha_1(x_1) + psi(x_n(t - tau_n)) beta_1(x_1),  psi(x) = mu / (1 + k x)
//! x_i' = -alpha_i(x_i) + x_{i-1}(t - tau_{i-1}) beta_i(x_i),  i = 2..n
//! ```
//!
//! integrated with fixed-step classical RK4. Delayed values are read from the
//! committed trajectory by linear interpolation (method of steps); before
//! `t = 0` a constant history vector is used.

use crate::stage::{default_inverse_tol, RationalStage};
use crate::{Error, Result, SampledSignal, Scalar};

/// Pre-clamp excursions larger than this are counted as diagnostics.
pub const CLAMP_DIAGNOSTIC_THRESHOLD: f64 = 1e-6;
pub const DEFAULT_DT: f64 = 0.01;
pub const DEFAULT_HORIZON: f64 = 2000.0;

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeModel<T> {
    stages: Vec<RationalStage<T>>,
    /// `lags[j]` delays `x_j` on its way to the next stage; the last entry
    /// is the feedback delay.
    lags: Vec<T>,
    mu: T,
    k: T,
}

impl<T: Scalar> CascadeModel<T> {
    /// `delays` are the `n - 1` inter-stage delays, `feedback_delay` delays
    /// `x_n` before it enters `psi`.
    pub fn new(
        stages: Vec<RationalStage<T>>,
        delays: Vec<T>,
        feedback_delay: T,
        mu: T,
        k: T,
    ) -> Result<Self> {
        if stages.is_empty() {
            return Err(Error::Config("cascade needs at least one stage".into()));
        }
        if delays.len() + 1 != stages.len() {
            return Err(Error::Config(format!(
                "{} stages need {} inter-stage delays, got {}",
                stages.len(),
                stages.len() - 1,
                delays.len()
            )));
        }
        let mut lags = delays;
        lags.push(feedback_delay);
        if let Some(bad) = lags.iter().find(|&&t| !(t >= T::zero()) || !t.is_finite()) {
            return Err(Error::Config(format!("delays must be finite and >= 0, got {bad}")));
        }
        if !(mu > T::zero()) || !mu.is_finite() {
            return Err(Error::Config(format!("mu must be positive, got {mu}")));
        }
        if !(k >= T::zero()) || !k.is_finite() {
            return Err(Error::Config(format!("k must be >= 0, got {k}")));
        }
        Ok(Self { stages, lags, mu, k })
    }

    /// Same cascade with another feedback gain.
    pub fn with_k(&self, k: T) -> Result<Self> {
        Self::new(self.stages.clone(), self.delays().to_vec(), self.feedback_delay(), self.mu, k)
    }

    /// Same cascade with other delays.
    pub fn with_delays(&self, delays: Vec<T>, feedback_delay: T) -> Result<Self> {
        Self::new(self.stages.clone(), delays, feedback_delay, self.mu, self.k)
    }

    pub fn stages(&self) -> &[RationalStage<T>] {
        &self.stages
    }

    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    pub fn delays(&self) -> &[T] {
        &self.lags[..self.lags.len() - 1]
    }

    pub fn feedback_delay(&self) -> T {
        self.lags[self.lags.len() - 1]
    }

    pub fn mu(&self) -> T {
        self.mu
    }

    pub fn k(&self) -> T {
        self.k
    }

    pub fn max_delay(&self) -> T {
        self.lags.iter().fold(T::zero(), |m, &t| m.max(t))
    }

    /// `psi(x) = mu / (1 + k x)`; lies in `[mu / (1 + k), mu]` for `x` in `[0, 1]`.
    pub fn effective_input(&self, x_n_delayed: T) -> T {
        self.mu / (T::one() + self.k * x_n_delayed)
    }

    /// Inputs seen by each stage when the (delayed) upstream states are `src`.
    fn stage_inputs(&self, src: &[T], out: &mut [T]) {
        let n = self.len();
        out[0] = self.effective_input(src[n - 1]);
        out[1..n].copy_from_slice(&src[..n - 1]);
    }

    /// Largest `|f_i|` at `x` with the undelayed loop couplings.
    pub fn equilibrium_residual(&self, x: &[T]) -> Result<T> {
        if x.len() != self.len() {
            return Err(Error::Domain(format!(
                "state has {} components, cascade has {} stages",
                x.len(),
                self.len()
            )));
        }
        if let Some(bad) = x.iter().find(|&&v| !(v >= T::zero() && v < T::one())) {
            return Err(Error::Domain(format!("equilibrium candidate component {bad} outside [0, 1)")));
        }
        let mut u = vec![T::zero(); self.len()];
        self.stage_inputs(x, &mut u);
        self.stages
            .iter()
            .zip(x.iter().zip(&u))
            .try_fold(T::zero(), |m, (s, (&xi, &ui))| Ok(m.max(s.f(xi, ui)?.abs())))
    }

    /// The unique closed-loop equilibrium, delays being irrelevant there.
    ///
    /// With `G = g_n^{-1} ∘ ... ∘ g_1^{-1}` the last component solves
    /// `x = G(psi(x))`; the right side is nonincreasing in `x`, so bisection
    /// on `[0, 1)` finds the single crossing.
    pub fn equilibrium(&self) -> Result<Vec<T>> {
        let tol = default_inverse_tol::<T>();
        let chain = |x_n: T| -> Result<Vec<T>> {
            let mut xs = Vec::with_capacity(self.len());
            let mut u = self.effective_input(x_n);
            for s in &self.stages {
                u = s.g_inverse(u, tol)?;
                xs.push(u);
            }
            Ok(xs)
        };
        let (mut lo, mut hi) = (T::zero(), T::one());
        for _ in 0..200 {
            let mid = (lo + hi) / T::lit(2.0);
            if mid <= lo || mid >= hi {
                break;
            }
            if chain(mid)?[self.len() - 1] > mid {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        chain((lo + hi) / T::lit(2.0))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig<T> {
    pub dt: T,
    pub horizon: T,
    pub x0: Vec<T>,
    /// Constant state assumed for all `t < 0`.
    pub history: Vec<T>,
}

impl<T: Scalar> SimConfig<T> {
    /// History defaults to `x0`.
    pub fn new(dt: T, horizon: T, x0: Vec<T>) -> Self {
        let history = x0.clone();
        Self { dt, horizon, x0, history }
    }

    pub fn with_history(mut self, history: Vec<T>) -> Self {
        self.history = history;
        self
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round().to_usize().unwrap_or(0)
    }

    pub fn validate(&self, model: &CascadeModel<T>) -> Result<()> {
        if !(self.dt > T::zero()) || !self.dt.is_finite() {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.horizon > T::zero()) || !self.horizon.is_finite() {
            return Err(Error::Config(format!("horizon must be positive, got {}", self.horizon)));
        }
        if self.horizon < T::lit(10.0) * model.max_delay() {
            return Err(Error::Config(format!(
                "horizon {} shorter than 10 x max delay {}",
                self.horizon,
                model.max_delay()
            )));
        }
        if let Some(&tau) = model
            .lags
            .iter()
            .filter(|&&t| t > T::zero())
            .min_by(|a, b| a.partial_cmp(b).expect("finite delays"))
        {
            if self.dt > tau {
                return Err(Error::Config(format!(
                    "dt = {} exceeds the smallest positive delay {tau}",
                    self.dt
                )));
            }
        }
        for (name, v) in [("x0", &self.x0), ("history", &self.history)] {
            if v.len() != model.len() {
                return Err(Error::Config(format!(
                    "{name} has {} components, cascade has {} stages",
                    v.len(),
                    model.len()
                )));
            }
            if let Some(bad) = v.iter().find(|&&x| !(x >= T::zero() && x <= T::one())) {
                return Err(Error::Config(format!("{name} component {bad} outside [0, 1]")));
            }
        }
        if self.steps() == 0 {
            return Err(Error::Config("horizon shorter than one step".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClampDiagnostics<T> {
    /// Largest pre-clamp distance outside `[0, 1]` seen in any component.
    pub max_excursion: T,
    /// Number of steps whose excursion exceeded [`CLAMP_DIAGNOSTIC_THRESHOLD`].
    pub flagged_steps: usize,
}

impl<T: Scalar> ClampDiagnostics<T> {
    pub fn is_clean(&self) -> bool {
        self.flagged_steps == 0
    }
}

#[derive(Debug, Clone)]
pub struct Simulation<T> {
    /// States `x_1..x_n` at every committed step.
    pub trajectory: SampledSignal<T>,
    /// `psi(x_n(t - tau_n))` at every committed step.
    pub effective_input: Vec<T>,
    pub diagnostics: ClampDiagnostics<T>,
}

impl<T: Scalar> Simulation<T> {
    pub fn component(&self, i: usize) -> Result<SampledSignal<T>> {
        self.trajectory.component(i)
    }

    pub fn effective_input_signal(&self) -> Result<SampledSignal<T>> {
        SampledSignal::from_scalar(self.trajectory.t0(), self.trajectory.dt(), self.effective_input.clone())
    }
}

/// Committed trajectory plus the lookups the integrator needs.
struct History<'a, T> {
    states: Vec<T>,
    dim: usize,
    pre: &'a [T],
}

impl<T: Scalar> History<'_, T> {
    fn committed(&self) -> usize {
        self.states.len() / self.dim - 1
    }

    /// Component `j` at fractional step index `p` (time `p * dt`).
    fn at(&self, j: usize, p: T) -> T {
        if p < T::zero() {
            return self.pre[j];
        }
        let last = self.committed();
        let i = p.floor().to_usize().unwrap_or(last).min(last);
        let frac = p - T::from_usize_lossy(i);
        let a = self.states[i * self.dim + j];
        if i == last || frac == T::zero() {
            return a;
        }
        let b = self.states[(i + 1) * self.dim + j];
        a + (b - a) * frac
    }
}

/// Integrates the closed loop from `cfg.x0` over `[0, cfg.horizon]`.
pub fn simulate<T: Scalar>(model: &CascadeModel<T>, cfg: &SimConfig<T>) -> Result<Simulation<T>> {
    cfg.validate(model)?;
    let n = model.len();
    let dt = cfg.dt;
    let half = dt / T::lit(2.0);
    let steps = cfg.steps();
    let lag_steps: Vec<Option<T>> = model
        .lags
        .iter()
        .map(|&tau| (tau > T::zero()).then(|| tau / dt))
        .collect();

    let mut hist = History {
        states: Vec::with_capacity((steps + 1) * n),
        dim: n,
        pre: &cfg.history,
    };
    hist.states.extend_from_slice(&cfg.x0);

    let mut x = cfg.x0.clone();
    let mut src = vec![T::zero(); n];
    let mut u = vec![T::zero(); n];
    let mut y = vec![T::zero(); n];
    let mut k = [vec![T::zero(); n], vec![T::zero(); n], vec![T::zero(); n], vec![T::zero(); n]];
    let offsets = [T::zero(), T::lit(0.5), T::lit(0.5), T::one()];

    let mut u_eff = Vec::with_capacity(steps + 1);
    let feedback = |h: &History<T>, state: &[T], step: T| match lag_steps[n - 1] {
        Some(l) => model.effective_input(h.at(n - 1, step - l)),
        None => model.effective_input(state[n - 1]),
    };
    u_eff.push(feedback(&hist, &x, T::zero()));

    let threshold = T::lit(CLAMP_DIAGNOSTIC_THRESHOLD);
    let mut diagnostics = ClampDiagnostics { max_excursion: T::zero(), flagged_steps: 0 };

    for step in 0..steps {
        let base = T::from_usize_lossy(step);
        for stage in 0..4 {
            match stage {
                0 => y.copy_from_slice(&x),
                1 | 2 => {
                    for i in 0..n {
                        y[i] = x[i] + half * k[stage - 1][i];
                    }
                }
                _ => {
                    for i in 0..n {
                        y[i] = x[i] + dt * k[2][i];
                    }
                }
            }
            let p = base + offsets[stage];
            for j in 0..n {
                src[j] = match lag_steps[j] {
                    Some(l) => hist.at(j, p - l),
                    None => y[j],
                };
            }
            model.stage_inputs(&src, &mut u);
            for i in 0..n {
                k[stage][i] = model.stages[i].rate(y[i], u[i]);
            }
        }

        let mut excursion = T::zero();
        for i in 0..n {
            let next = x[i]
                + dt / T::lit(6.0) * (k[0][i] + T::lit(2.0) * k[1][i] + T::lit(2.0) * k[2][i] + k[3][i]);
            if !next.is_finite() {
                return Err(Error::BlowUp {
                    t: (base * dt).to_f64().unwrap_or(f64::NAN),
                    what: format!("x{} = {next}", i + 1),
                });
            }
            let clamped = next.max(T::zero()).min(T::one());
            excursion = excursion.max((next - clamped).abs());
            x[i] = clamped;
        }
        if excursion > diagnostics.max_excursion {
            diagnostics.max_excursion = excursion;
        }
        if excursion > threshold {
            diagnostics.flagged_steps += 1;
        }
        hist.states.extend_from_slice(&x);
        u_eff.push(feedback(&hist, &x, base + T::one()));
    }

    let trajectory = SampledSignal::new(T::zero(), dt, n, hist.states)?;
    Ok(Simulation { trajectory, effective_input: u_eff, diagnostics })
}
