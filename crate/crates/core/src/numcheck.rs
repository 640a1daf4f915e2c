//! Numerical oracles: finite differences with a stability classifier, and
//! Monte Carlo confidence intervals.
//!
//! Functions are treated as black boxes `f64 -> Option<f64>` (`None` marks
//! an undefined probe). This module never looks at program structure.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

/// Default relative step: `h = 2^-17 * max(1, |x|)`.
pub const DEFAULT_STEP: f64 = 1.0 / 131_072.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FdConfig {
    /// Base step; scaled by `max(1, |x|)`.
    pub h: f64,
    pub rtol: f64,
    pub atol: f64,
    pub richardson: bool,
    /// Probes must stay inside `[lo, hi]`; near an edge the one-sided
    /// scheme is used.
    pub bounds: Option<(f64, f64)>,
}

impl Default for FdConfig {
    fn default() -> Self {
        FdConfig {
            h: DEFAULT_STEP,
            rtol: 1e-5,
            atol: 1e-8,
            richardson: true,
            bounds: None,
        }
    }
}

impl FdConfig {
    pub fn step(&self, x: f64) -> f64 {
        self.h * x.abs().max(1.0)
    }

    pub fn with_bounds(mut self, lo: f64, hi: f64) -> Self {
        self.bounds = Some((lo, hi));
        self
    }

    /// `|a - b|` exceeds the relative/absolute tolerance plus `noise`.
    pub fn disagree(&self, a: f64, b: f64, noise: f64) -> bool {
        let diff = (a - b).abs();
        let bound = self.rtol * a.abs().max(b.abs()) + self.atol + noise;
        diff.is_nan() || bound.is_nan() || diff > bound
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Interior,
    SuspectedBoundary,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Central,
    Forward,
    Backward,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FdEstimate {
    pub value: f64,
    pub class: Stability,
    pub scheme: Scheme,
    pub step: f64,
    /// Bound on the rounding error of `value`.
    pub noise: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Error, Serialize)]
pub enum FdError {
    #[error("function undefined at probe {probe} near {x}")]
    UndefinedNearPoint { x: f64, probe: f64 },
    #[error("no finite-difference stencil fits inside the bounds at {x}")]
    OutOfBounds { x: f64 },
}

const NOISE_FACTOR: f64 = 256.0 * f64::EPSILON;

fn probe(f: &impl Fn(f64) -> Option<f64>, x: f64, at: f64) -> Result<f64, FdError> {
    match f(at) {
        Some(y) if y.is_finite() => Ok(y),
        _ => Err(FdError::UndefinedNearPoint { x, probe: at }),
    }
}

/// Finite-difference derivative of `f` at `x`, with its stability class.
///
/// Central scheme: Richardson-combined central differences at `h` and
/// `h/2`. The point is classed as a suspected boundary when the forward
/// and backward one-sided estimates disagree, or when the central first
/// or second differences change between `h` and `h/2`.
pub fn fd_derivative(
    f: impl Fn(f64) -> Option<f64>,
    x: f64,
    cfg: &FdConfig,
) -> Result<FdEstimate, FdError> {
    let h = cfg.step(x);
    let (fits_left, fits_right) = match cfg.bounds {
        None => (true, true),
        Some((lo, hi)) => (x - h >= lo, x + h <= hi),
    };
    match (fits_left, fits_right) {
        (true, true) => central(&f, x, h, cfg),
        (false, true) => one_sided(&f, x, h, cfg, Scheme::Forward),
        (true, false) => one_sided(&f, x, h, cfg, Scheme::Backward),
        (false, false) => Err(FdError::OutOfBounds { x }),
    }
}

fn central(
    f: &impl Fn(f64) -> Option<f64>,
    x: f64,
    h: f64,
    cfg: &FdConfig,
) -> Result<FdEstimate, FdError> {
    let h2 = h / 2.0;
    let f0 = probe(f, x, x)?;
    let p1 = probe(f, x, x + h)?;
    let m1 = probe(f, x, x - h)?;
    let p2 = probe(f, x, x + h2)?;
    let m2 = probe(f, x, x - h2)?;

    let d1 = (p1 - m1) / (2.0 * h);
    let d2 = (p2 - m2) / (2.0 * h2);
    let value = if cfg.richardson {
        (4.0 * d2 - d1) / 3.0
    } else {
        d1
    };

    let fwd = 2.0 * ((p2 - f0) / h2) - (p1 - f0) / h;
    let bwd = 2.0 * ((f0 - m2) / h2) - (f0 - m1) / h;
    let c1 = (p1 - 2.0 * f0 + m1) / (h * h);
    let c2 = (p2 - 2.0 * f0 + m2) / (h2 * h2);

    let fmax = [f0, p1, m1, p2, m2]
        .iter()
        .fold(0.0f64, |m, y| m.max(y.abs()));
    let noise = NOISE_FACTOR * fmax / h;
    let scale = fwd.abs().max(bwd.abs()).max(value.abs());

    let one_sided_split = (fwd - bwd).abs() > 10.0 * cfg.rtol * scale + cfg.atol + noise;
    let drift = (d1 - d2).abs().max(h * (c1 - c2).abs());
    let symmetric_split = drift > 0.5 * cfg.rtol * scale + cfg.atol + noise;

    Ok(FdEstimate {
        value,
        class: if one_sided_split || symmetric_split {
            Stability::SuspectedBoundary
        } else {
            Stability::Interior
        },
        scheme: Scheme::Central,
        step: h,
        noise,
    })
}

fn one_sided(
    f: &impl Fn(f64) -> Option<f64>,
    x: f64,
    h: f64,
    cfg: &FdConfig,
    scheme: Scheme,
) -> Result<FdEstimate, FdError> {
    let dir = if scheme == Scheme::Forward { 1.0 } else { -1.0 };
    let f0 = probe(f, x, x)?;
    let q1 = probe(f, x, x + dir * h)?;
    let q2 = probe(f, x, x + dir * h / 2.0)?;
    let q4 = probe(f, x, x + dir * h / 4.0)?;

    let diff = |y: f64, s: f64| dir * (y - f0) / s;
    let coarse = 2.0 * diff(q2, h / 2.0) - diff(q1, h);
    let fine = 2.0 * diff(q4, h / 4.0) - diff(q2, h / 2.0);
    let value = if cfg.richardson {
        fine
    } else {
        diff(q4, h / 4.0)
    };

    let fmax = [f0, q1, q2, q4].iter().fold(0.0f64, |m, y| m.max(y.abs()));
    let noise = 4.0 * NOISE_FACTOR * fmax / h;
    let scale = coarse.abs().max(fine.abs());
    let split = (coarse - fine).abs() > 0.5 * cfg.rtol * scale + cfg.atol + noise;

    Ok(FdEstimate {
        value,
        class: if split {
            Stability::SuspectedBoundary
        } else {
            Stability::Interior
        },
        scheme,
        step: h,
        noise,
    })
}

/// Coordinate-wise [`fd_derivative`].
pub fn fd_gradient(
    f: impl Fn(&[f64]) -> Option<f64>,
    x: &[f64],
    cfg: &FdConfig,
) -> Result<Vec<FdEstimate>, FdError> {
    (0..x.len())
        .map(|i| {
            fd_derivative(
                |xi| {
                    let mut p = x.to_vec();
                    p[i] = xi;
                    f(&p)
                },
                x[i],
                cfg,
            )
            .map_err(|e| match e {
                FdError::UndefinedNearPoint { probe, .. } => {
                    FdError::UndefinedNearPoint { x: x[i], probe }
                }
                other => other,
            })
        })
        .collect()
}

/// Sample mean with a normal-approximation confidence halfwidth.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MeanCi {
    pub mean: f64,
    pub halfwidth: f64,
    pub n: usize,
    /// All samples were equal, so the halfwidth is 0.
    pub degenerate: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
pub enum McError {
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("sample {0} is not finite")]
    NonFinite(usize),
    #[error("confidence must lie in (0, 1)")]
    BadConfidence,
}

pub fn z_score(confidence: f64) -> Result<f64, McError> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(McError::BadConfidence);
    }
    let normal = Normal::standard();
    Ok(normal.inverse_cdf(0.5 + confidence / 2.0))
}

pub fn mc_mean_ci(samples: &[f64], confidence: f64) -> Result<MeanCi, McError> {
    let z = z_score(confidence)?;
    let n = samples.len();
    if n < 2 {
        return Err(McError::TooFewSamples(n));
    }
    if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
        return Err(McError::NonFinite(i));
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let degenerate = samples.iter().all(|s| *s == samples[0]);
    Ok(MeanCi {
        mean: if degenerate { samples[0] } else { mean },
        halfwidth: if degenerate {
            0.0
        } else {
            z * (var / n as f64).sqrt()
        },
        n,
        degenerate,
    })
}

/// Wilson score interval for a binomial proportion.
pub fn proportion_ci(successes: usize, n: usize, confidence: f64) -> Result<(f64, f64), McError> {
    let z = z_score(confidence)?;
    if n == 0 {
        return Err(McError::TooFewSamples(0));
    }
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / (1.0 + z2 / n);
    Ok(((centre - half).max(0.0), (centre + half).min(1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd(f: impl Fn(f64) -> f64, x: f64) -> FdEstimate {
        fd_derivative(|x| Some(f(x)), x, &FdConfig::default()).unwrap()
    }

    #[test]
    fn square_at_three() {
        let e = fd(|x| x * x, 3.0);
        assert!((e.value - 6.0).abs() < 1e-6);
        assert_eq!(e.class, Stability::Interior);
    }

    #[test]
    fn abs_at_zero_is_boundary() {
        let e = fd(f64::abs, 0.0);
        assert_eq!(e.value, 0.0);
        assert_eq!(e.class, Stability::SuspectedBoundary);
    }

    #[test]
    fn exp_at_zero() {
        let e = fd(f64::exp, 0.0);
        assert!((e.value - 1.0).abs() < 1e-7);
        assert_eq!(e.class, Stability::Interior);
    }

    #[test]
    fn kink_inside_the_stencil_is_flagged() {
        let h = FdConfig::default().step(0.0);
        for frac in [0.1, 1.0 / 3.0, 0.5, 0.75, 0.99] {
            let e = fd(|x| (x - frac * h).abs(), 0.0);
            assert_eq!(e.class, Stability::SuspectedBoundary, "kink at {frac} h");
        }
        let far = fd(|x| (x - 2.0 * h).abs(), 0.0);
        assert_eq!(far.class, Stability::Interior);
        assert_eq!(far.value, -1.0);
    }

    #[test]
    fn jump_is_flagged() {
        let e = fd(|x| if x > 0.0 { 1.0 } else { 0.0 }, 0.0);
        assert_eq!(e.class, Stability::SuspectedBoundary);
    }

    #[test]
    fn undefined_probe_is_an_error() {
        let r = fd_derivative(|x| (x > 0.0).then_some(x.ln()), 0.0, &FdConfig::default());
        assert!(matches!(r, Err(FdError::UndefinedNearPoint { .. })));
    }

    #[test]
    fn one_sided_near_bounds() {
        let cfg = FdConfig::default().with_bounds(0.0, 1.0);
        let e = fd_derivative(|x| Some(x * x), 0.0, &cfg).unwrap();
        assert_eq!(e.scheme, Scheme::Forward);
        assert!(e.value.abs() < 1e-9);
        assert_eq!(e.class, Stability::Interior);
        let e = fd_derivative(|x| Some(x * x), 1.0, &cfg).unwrap();
        assert_eq!(e.scheme, Scheme::Backward);
        assert!((e.value - 2.0).abs() < 1e-9);
        let e = fd_derivative(|x| Some((x - 1e-6).abs()), 0.0, &cfg).unwrap();
        assert_eq!(e.class, Stability::SuspectedBoundary);
    }

    #[test]
    fn gradient_examples() {
        let cfg = FdConfig::default();
        let g = fd_gradient(|v| Some(v[0] * v[1]), &[2.0, 3.0], &cfg).unwrap();
        assert!((g[0].value - 3.0).abs() < 1e-9 && (g[1].value - 2.0).abs() < 1e-9);
        let g = fd_gradient(|_| Some(4.0), &[1.0, -1.0, 0.5], &cfg).unwrap();
        assert!(g.iter().all(|e| e.value == 0.0));
        let r = fd_gradient(|v| (v[0] >= 1.0).then_some(0.0), &[1.0 + 1e-6, 0.0], &cfg);
        assert!(matches!(r, Err(FdError::UndefinedNearPoint { .. })));
    }

    #[test]
    fn mean_ci_examples() {
        let c = mc_mean_ci(&[1.0, 1.0, 1.0, 1.0], 0.95).unwrap();
        assert_eq!((c.mean, c.halfwidth, c.degenerate), (1.0, 0.0, true));
        let c = mc_mean_ci(&[0.0, 2.0], 0.95).unwrap();
        assert_eq!(c.mean, 1.0);
        assert!(c.halfwidth > 0.0);
        assert_eq!(mc_mean_ci(&[1.0], 0.95), Err(McError::TooFewSamples(1)));
    }

    #[test]
    fn mean_of_uniforms() {
        let mut s = crate::rng::Stream::new(3, 0);
        let xs: Vec<f64> = (0..1_000_000).map(|_| s.uniform()).collect();
        let c = mc_mean_ci(&xs, 0.95).unwrap();
        let sigma = (1.0f64 / 12.0 / 1e6).sqrt();
        assert!((c.mean - 0.5).abs() < 4.0 * sigma);
        // 1.96 sigma for 95 %
        assert!((c.halfwidth / sigma - 1.959964).abs() < 0.01);
    }

    #[test]
    fn wilson_interval_contains_estimate() {
        let (lo, hi) = proportion_ci(190, 200, 0.95).unwrap();
        assert!(lo < 0.95 && 0.95 < hi);
        let (lo, hi) = proportion_ci(200, 200, 0.95).unwrap();
        assert!(lo > 0.97 && hi == 1.0);
    }
}
