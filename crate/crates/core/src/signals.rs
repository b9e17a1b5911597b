//! Uniformly sampled signals and tail-based estimates of asymptotic amplitude.
//!
//! The asymptotic amplitude of a signal is the diameter of its omega-limit
//! set. On a finite record we approximate that set by the samples in a tail
//! window `[T, end]`, with `T = t0 + (1 - tail_fraction) * span`, so every
//! estimate here carries the grid resolution of the record.

use std::ops::Range;

use crate::{Error, Result, Scalar};

/// Default share of the record treated as "asymptotic".
pub const DEFAULT_TAIL_FRACTION: f64 = 0.2;

/// Above this many tail samples the multi-dimensional pairwise pass is run
/// on a strided subset.
const MAX_PAIRWISE_SAMPLES: usize = 10_000;

/// Vector-valued signal sampled at `t0 + j * dt`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSignal<T> {
    t0: T,
    dt: T,
    dim: usize,
    values: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeEstimate<T> {
    pub amplitude: T,
    /// Time of the first sample in the tail window.
    pub tail_start: T,
    /// Mean of the tail samples; present only when `amplitude < tol`.
    pub limit: Option<Vec<T>>,
}

impl<T: Scalar> AmplitudeEstimate<T> {
    pub fn converged(&self) -> bool {
        self.limit.is_some()
    }
}

impl<T: Scalar> SampledSignal<T> {
    /// Builds a signal from row-major samples of dimension `dim`.
    pub fn new(t0: T, dt: T, dim: usize, values: Vec<T>) -> Result<Self> {
        if !(dt > T::zero()) || !dt.is_finite() {
            return Err(Error::Domain(format!("dt must be positive and finite, got {dt}")));
        }
        if !t0.is_finite() || t0 < T::zero() {
            return Err(Error::Domain(format!("t0 must be finite and >= 0, got {t0}")));
        }
        if dim == 0 {
            return Err(Error::Domain("signal dimension must be >= 1".into()));
        }
        if values.is_empty() {
            return Err(Error::Degenerate("signal has no samples".into()));
        }
        if !values.len().is_multiple_of(dim) {
            return Err(Error::Domain(format!(
                "{} values do not split into rows of dimension {dim}",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "non-finite value at sample {}, component {}",
                pos / dim,
                pos % dim
            )));
        }
        Ok(Self { t0, dt, dim, values })
    }

    pub fn from_rows(t0: T, dt: T, rows: &[Vec<T>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Domain("rows have differing dimensions".into()));
        }
        Self::new(t0, dt, dim, rows.concat())
    }

    /// Scalar signal.
    pub fn from_scalar(t0: T, dt: T, values: Vec<T>) -> Result<Self> {
        Self::new(t0, dt, 1, values)
    }

    /// Samples `f` on `[t0, t1]` with step `dt` (the last sample may fall
    /// short of `t1` by less than one step).
    pub fn sample_fn<F: FnMut(T) -> T>(t0: T, t1: T, dt: T, mut f: F) -> Result<Self> {
        let steps = ((t1 - t0) / dt + T::lit(1e-9)).floor().to_usize().unwrap_or(0);
        let values = (0..=steps)
            .map(|j| f(t0 + T::from_usize_lossy(j) * dt))
            .collect();
        Self::from_scalar(t0, dt, values)
    }

    pub fn t0(&self) -> T {
        self.t0
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, j: usize) -> T {
        self.t0 + T::from_usize_lossy(j) * self.dt
    }

    pub fn span(&self) -> T {
        self.time(self.len() - 1) - self.t0
    }

    pub fn sample(&self, j: usize) -> &[T] {
        &self.values[j * self.dim..(j + 1) * self.dim]
    }

    pub fn samples(&self) -> impl Iterator<Item = &[T]> {
        self.values.chunks_exact(self.dim)
    }

    pub fn last(&self) -> &[T] {
        self.sample(self.len() - 1)
    }

    /// Component `i` as a scalar signal.
    pub fn component(&self, i: usize) -> Result<Self> {
        if i >= self.dim {
            return Err(Error::Domain(format!(
                "component {i} out of range for dimension {}",
                self.dim
            )));
        }
        let values = self.samples().map(|s| s[i]).collect();
        Self::from_scalar(self.t0, self.dt, values)
    }

    /// Index range of the tail window for `tail_fraction`.
    ///
    /// The window starts at the first index `j` with
    /// `j >= (1 - tail_fraction) * (len - 1)`, i.e. the first sample at or
    /// after `T = t0 + (1 - tail_fraction) * span`. Working on indices keeps
    /// the window independent of rounding in `t0` and `dt`.
    pub fn tail_window(&self, tail_fraction: T) -> Result<Range<usize>> {
        if !(tail_fraction > T::zero() && tail_fraction <= T::one()) {
            return Err(Error::Domain(format!(
                "tail_fraction must lie in (0, 1], got {tail_fraction}"
            )));
        }
        let last = self.len() - 1;
        let frac = (T::one() - tail_fraction).to_f64().unwrap_or(0.0);
        let start = (frac * last as f64 - 1e-9).ceil().max(0.0) as usize;
        let window = start.min(last)..self.len();
        if window.len() < 2 {
            return Err(Error::Degenerate(format!(
                "tail window holds {} sample(s), need at least 2",
                window.len()
            )));
        }
        Ok(window)
    }

    /// Largest Euclidean distance between two samples with indices in `range`.
    pub fn diameter(&self, range: Range<usize>) -> Result<T> {
        if range.end > self.len() || range.len() < 2 {
            return Err(Error::Degenerate(format!(
                "window {range:?} invalid for {} samples",
                self.len()
            )));
        }
        if self.dim == 1 {
            let (lo, hi) = self.values[range]
                .iter()
                .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            return Ok(hi - lo);
        }
        let stride = range.len().div_ceil(MAX_PAIRWISE_SAMPLES);
        let mut idx: Vec<usize> = range.clone().step_by(stride).collect();
        if idx.last() != Some(&(range.end - 1)) {
            idx.push(range.end - 1);
        }
        let mut best = T::zero();
        for (a, &i) in idx.iter().enumerate() {
            let si = self.sample(i);
            for &j in &idx[a + 1..] {
                let d2 = si
                    .iter()
                    .zip(self.sample(j))
                    .fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y));
                best = best.max(d2);
            }
        }
        Ok(best.sqrt())
    }

    /// Diameter of the tail sample set, the grid estimate of the asymptotic
    /// amplitude.
    pub fn tail_amplitude(&self, tail_fraction: T) -> Result<T> {
        self.diameter(self.tail_window(tail_fraction)?)
    }

    /// Tail amplitude plus, when it is below `tol`, the tail mean as the
    /// limit estimate.
    pub fn estimate_limit(&self, tail_fraction: T, tol: T) -> Result<AmplitudeEstimate<T>> {
        if !(tol > T::zero()) {
            return Err(Error::Domain(format!("tol must be positive, got {tol}")));
        }
        let window = self.tail_window(tail_fraction)?;
        let tail_start = self.time(window.start);
        let amplitude = self.diameter(window.clone())?;
        let limit = (amplitude < tol).then(|| {
            let count = T::from_usize_lossy(window.len());
            let mut mean = vec![T::zero(); self.dim];
            for j in window {
                for (m, &v) in mean.iter_mut().zip(self.sample(j)) {
                    *m = *m + v;
                }
            }
            mean.into_iter().map(|m| m / count).collect()
        });
        Ok(AmplitudeEstimate { amplitude, tail_start, limit })
    }

    pub fn is_oscillatory(&self, tail_fraction: T, threshold: T) -> Result<bool> {
        if !(threshold > T::zero()) {
            return Err(Error::Domain(format!("threshold must be positive, got {threshold}")));
        }
        Ok(self.tail_amplitude(tail_fraction)? >= threshold)
    }
}
