//! Gradient descent `x <- x - eps * g(x)` with AD or finite-difference
//! gradients, randomized step-size experiments and an empirical
//! smoothness probe.

use serde::Serialize;
use thiserror::Error;

use crate::ad::{AdError, Differentiable};
use crate::eval::{Outcome, DEFAULT_FUEL};
use crate::exec::Exec;
use crate::numcheck::{fd_gradient, proportion_ci, FdConfig, Stability};
use crate::rng::Stream;
use crate::syntax::Term;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GradMode {
    Ad,
    Fd,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GdConfig {
    pub eps: f64,
    /// Maximum number of update steps.
    pub t_max: usize,
    pub mode: GradMode,
    /// Stop once the gradient norm falls strictly below this.
    pub stop_tol: f64,
    pub fuel: u64,
    pub fd: FdConfig,
}

impl Default for GdConfig {
    fn default() -> Self {
        GdConfig {
            eps: 0.1,
            t_max: 100,
            mode: GradMode::Ad,
            stop_tol: 0.0,
            fuel: DEFAULT_FUEL,
            fd: FdConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Termination {
    Converged,
    Exhausted,
    /// The objective or its gradient was undefined at iterate `step`.
    Undefined {
        step: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trajectory {
    pub iterates: Vec<Vec<f64>>,
    /// `grads[t]` is the gradient used to leave `iterates[t]`.
    pub grads: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub termination: Termination,
}

impl Trajectory {
    pub fn last(&self) -> Option<&[f64]> {
        self.iterates.last().map(Vec::as_slice)
    }

    /// `f(x^{t+1}) <= f(x^t)` for every recorded pair.
    pub fn is_monotone(&self) -> bool {
        self.values.windows(2).all(|w| w[1] <= w[0])
    }

    pub fn steps(&self) -> usize {
        self.iterates.len().saturating_sub(1)
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum GdError {
    #[error(transparent)]
    Ad(#[from] AdError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// A scalar objective of real inputs.
pub struct Objective {
    pub d: Differentiable,
}

impl Objective {
    pub fn new(t: &Term, fuel: u64) -> Result<Objective, GdError> {
        let d = Differentiable::new(t, fuel)?;
        if d.m() != 1 {
            return Err(AdError::NotScalar(d.m()).into());
        }
        Ok(Objective { d })
    }

    pub fn dim(&self) -> usize {
        self.d.n()
    }

    pub fn value(&self, x: &[f64]) -> Result<Option<f64>, GdError> {
        Ok(match self.d.eval_at(x)? {
            Outcome::Val(v) => Some(v[0]),
            Outcome::Bottom(_) => None,
        })
    }

    pub fn ad_gradient(&self, x: &[f64]) -> Result<Option<Vec<f64>>, GdError> {
        Ok(self.d.gradient(x)?.val().map(|(_, g)| g))
    }

    /// FD gradient with per-coordinate classes; `None` when a probe is
    /// undefined.
    pub fn fd_gradient(&self, x: &[f64], cfg: &FdConfig) -> Option<(Vec<f64>, Stability)> {
        let est = fd_gradient(|p| self.value(p).ok().flatten(), x, cfg).ok()?;
        let class = if est.iter().any(|e| e.class == Stability::SuspectedBoundary) {
            Stability::SuspectedBoundary
        } else {
            Stability::Interior
        };
        Some((est.iter().map(|e| e.value).collect(), class))
    }

    fn gradient(&self, x: &[f64], cfg: &GdConfig) -> Result<Option<Vec<f64>>, GdError> {
        match cfg.mode {
            GradMode::Ad => self.ad_gradient(x),
            GradMode::Fd => Ok(self.fd_gradient(x, &cfg.fd).map(|(g, _)| g)),
        }
    }

    pub fn run(&self, x0: &[f64], cfg: &GdConfig) -> Result<Trajectory, GdError> {
        if x0.len() != self.dim() {
            return Err(AdError::Arity {
                expected: self.dim(),
                found: x0.len(),
            }
            .into());
        }
        if cfg.eps.is_nan() || cfg.eps <= 0.0 || cfg.t_max < 1 {
            return Err(GdError::Config("need eps > 0 and T >= 1".into()));
        }
        let mut traj = Trajectory {
            iterates: Vec::new(),
            grads: Vec::new(),
            values: Vec::new(),
            termination: Termination::Exhausted,
        };
        let mut x = x0.to_vec();
        for t in 0..=cfg.t_max {
            let value = self.value(&x)?;
            let grad = self.gradient(&x, cfg)?;
            let (Some(value), Some(grad)) = (value, grad) else {
                traj.termination = Termination::Undefined { step: t };
                traj.iterates.push(x);
                break;
            };
            if grad.iter().any(|g| !g.is_finite()) {
                traj.termination = Termination::Undefined { step: t };
                traj.iterates.push(x);
                break;
            }
            let next: Vec<f64> = x
                .iter()
                .zip(&grad)
                .map(|(xi, gi)| xi - cfg.eps * gi)
                .collect();
            let done = norm(&grad) < cfg.stop_tol;
            traj.iterates.push(x);
            traj.values.push(value);
            traj.grads.push(grad);
            if done {
                traj.termination = Termination::Converged;
                break;
            }
            if t == cfg.t_max {
                break;
            }
            x = next;
        }
        Ok(traj)
    }
}

/// Runs gradient descent on a closed scalar program.
pub fn gd_run(t: &Term, x0: &[f64], cfg: &GdConfig) -> Result<Trajectory, GdError> {
    Objective::new(t, cfg.fuel)?.run(x0, cfg)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RandomGdConfig {
    /// Smoothness constant; step sizes are drawn from `(0, 2/L)`.
    pub l: f64,
    /// Overrides the step-size interval (open at both ends).
    pub eps_range: Option<(f64, f64)>,
    /// Uses this step size for every seed instead of drawing one.
    pub fixed_eps: Option<f64>,
    pub x0_range: (f64, f64),
    pub n_seeds: usize,
    pub seed: u64,
    pub gd: GdConfig,
}

impl Default for RandomGdConfig {
    fn default() -> Self {
        RandomGdConfig {
            l: 1.0,
            eps_range: None,
            fixed_eps: None,
            x0_range: (-10.0, 10.0),
            n_seeds: 200,
            seed: 0,
            gd: GdConfig {
                t_max: 100_000,
                stop_tol: 1e-3,
                ..GdConfig::default()
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedStatus {
    Converged,
    NotConverged,
    /// The final iterate sits on a suspected boundary, so the true
    /// gradient is not well estimated there.
    Indeterminate,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeedResult {
    pub index: usize,
    pub eps: f64,
    pub x0: Vec<f64>,
    pub final_x: Vec<f64>,
    pub steps: usize,
    pub termination: Termination,
    pub true_grad_norm: Option<f64>,
    pub monotone: bool,
    pub status: SeedStatus,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RandomizedGdReport {
    pub seeds: Vec<SeedResult>,
    pub converged: usize,
    pub not_converged: usize,
    pub indeterminate: usize,
    /// Converged over determinate seeds.
    pub fraction: f64,
    /// 95 % Wilson interval for `fraction`.
    pub ci: (f64, f64),
}

/// Gradient descent in AD mode from random `(eps, x0)`, one counter stream
/// per seed index.
pub fn randomized_gd(
    t: &Term,
    cfg: &RandomGdConfig,
    exec: Exec,
) -> Result<RandomizedGdReport, GdError> {
    if cfg.l.is_nan() || cfg.l <= 0.0 {
        return Err(GdError::Config("L must be positive".into()));
    }
    let obj = Objective::new(t, cfg.gd.fuel)?;
    let (elo, ehi) = cfg.eps_range.unwrap_or((0.0, 2.0 / cfg.l));
    let dim = obj.dim();
    let results = exec.map_indexed(cfg.n_seeds, |i| -> Result<SeedResult, GdError> {
        let mut rng = Stream::new(cfg.seed, i as u64);
        let eps = match cfg.fixed_eps {
            Some(e) => e,
            None => rng.uniform_open(elo, ehi),
        };
        let x0: Vec<f64> = (0..dim)
            .map(|_| rng.uniform_in(cfg.x0_range.0, cfg.x0_range.1))
            .collect();
        let gd = GdConfig {
            eps,
            mode: GradMode::Ad,
            ..cfg.gd
        };
        let traj = obj.run(&x0, &gd)?;
        let final_x = traj.last().unwrap_or(&x0).to_vec();
        let truth = obj.fd_gradient(&final_x, &gd.fd);
        let true_grad_norm = truth.as_ref().map(|(g, _)| norm(g));
        let status = match (&traj.termination, &truth) {
            (_, None) | (_, Some((_, Stability::SuspectedBoundary))) => SeedStatus::Indeterminate,
            (Termination::Converged, Some((g, Stability::Interior))) if norm(g) < gd.stop_tol => {
                SeedStatus::Converged
            }
            _ => SeedStatus::NotConverged,
        };
        Ok(SeedResult {
            index: i,
            eps,
            x0,
            final_x,
            steps: traj.steps(),
            termination: traj.termination,
            true_grad_norm,
            monotone: traj.is_monotone(),
            status,
        })
    });
    let seeds = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let count = |s| seeds.iter().filter(|r| r.status == s).count();
    let converged = count(SeedStatus::Converged);
    let not_converged = count(SeedStatus::NotConverged);
    let indeterminate = count(SeedStatus::Indeterminate);
    let determinate = converged + not_converged;
    let (fraction, ci) = if determinate == 0 {
        (f64::NAN, (0.0, 1.0))
    } else {
        (
            converged as f64 / determinate as f64,
            proportion_ci(converged, determinate, 0.95).expect("valid confidence"),
        )
    };
    Ok(RandomizedGdReport {
        seeds,
        converged,
        not_converged,
        indeterminate,
        fraction,
        ci,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SmoothnessReport {
    /// Largest `|g(x) - g(y)| / |x - y|` over all sampled pairs.
    pub estimate: f64,
    /// Same estimate on the first sixteenth of the sample.
    pub coarse: f64,
    pub samples: usize,
    pub undefined: usize,
    /// The estimate kept growing with the sample size.
    pub not_smooth: bool,
}

fn max_ratio(points: &[(Vec<f64>, Vec<f64>)]) -> f64 {
    let mut best = 0.0f64;
    for (i, (x, gx)) in points.iter().enumerate() {
        for (y, gy) in &points[i + 1..] {
            let dx = norm(&x.iter().zip(y).map(|(a, b)| a - b).collect::<Vec<_>>());
            if dx == 0.0 {
                continue;
            }
            let dg = norm(&gx.iter().zip(gy).map(|(a, b)| a - b).collect::<Vec<_>>());
            best = best.max(dg / dx);
        }
    }
    best
}

/// Empirical Lipschitz constant of the FD gradient over `region^d`.
pub fn smoothness_probe(
    t: &Term,
    samples: usize,
    region: (f64, f64),
    seed: u64,
    fuel: u64,
    exec: Exec,
) -> Result<SmoothnessReport, GdError> {
    let obj = Objective::new(t, fuel)?;
    let dim = obj.dim();
    let cfg = FdConfig::default();
    let grads = exec.map_indexed(samples, |i| {
        let mut rng = Stream::new(seed, i as u64);
        let x: Vec<f64> = (0..dim)
            .map(|_| rng.uniform_in(region.0, region.1))
            .collect();
        obj.fd_gradient(&x, &cfg).map(|(g, _)| (x, g))
    });
    let undefined = grads.iter().filter(|g| g.is_none()).count();
    let points: Vec<(Vec<f64>, Vec<f64>)> = grads.into_iter().flatten().collect();
    let estimate = max_ratio(&points);
    let coarse = max_ratio(&points[..(points.len() / 16).max(2).min(points.len())]);
    Ok(SmoothnessReport {
        estimate,
        coarse,
        samples,
        undefined,
        not_smooth: estimate > 4.0 * coarse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::parser::parse;

    #[test]
    fn counterexample_from_five() {
        let p = parse(&corpus::counterexample_p(1.0)).unwrap();
        let cfg = GdConfig {
            eps: 1.0,
            t_max: 10,
            ..GdConfig::default()
        };
        let traj = gd_run(&p, &[5.0], &cfg).unwrap();
        let xs: Vec<f64> = traj.iterates.iter().map(|x| x[0]).collect();
        let expected: Vec<f64> = std::iter::once(5.0)
            .chain((0..10).map(|k| -(k as f64)))
            .collect();
        assert_eq!(xs, expected);
        assert_eq!(traj.termination, Termination::Exhausted);
    }

    #[test]
    fn q_is_stuck_at_one() {
        let q = parse(corpus::Q).unwrap();
        for eps in [0.01, 0.1, 1.0] {
            let cfg = GdConfig {
                eps,
                t_max: 20,
                ..GdConfig::default()
            };
            let traj = gd_run(&q, &[1.0], &cfg).unwrap();
            assert!(traj
                .iterates
                .iter()
                .all(|x| x[0].to_bits() == 1.0f64.to_bits()));
        }
    }

    #[test]
    fn square_contracts_in_fd_mode() {
        let t = parse(corpus::SQUARE).unwrap();
        let cfg = GdConfig {
            eps: 0.1,
            t_max: 30,
            mode: GradMode::Fd,
            ..GdConfig::default()
        };
        let traj = gd_run(&t, &[1.0], &cfg).unwrap();
        assert!(traj.is_monotone());
        for (k, x) in traj.iterates.iter().enumerate() {
            let want = 0.8f64.powi(k as i32);
            assert!(
                (x[0] - want).abs() < 1e-8 * want.max(1e-3),
                "t={k}: {}",
                x[0]
            );
        }
    }

    #[test]
    fn update_rule_is_bitwise() {
        let t = parse("fun (x : real) -> fun (y : real) -> add(mul(x, x), sin(y))").unwrap();
        let cfg = GdConfig {
            eps: 0.3,
            t_max: 25,
            ..GdConfig::default()
        };
        let traj = gd_run(&t, &[1.5, -0.7], &cfg).unwrap();
        for w in 0..traj.steps() {
            for i in 0..2 {
                let want = traj.iterates[w][i] - cfg.eps * traj.grads[w][i];
                assert_eq!(traj.iterates[w + 1][i].to_bits(), want.to_bits());
            }
        }
    }

    #[test]
    fn undefined_gradient_stops() {
        let t = parse("fun (x : real) -> log(x)").unwrap();
        let cfg = GdConfig {
            eps: 10.0,
            t_max: 5,
            ..GdConfig::default()
        };
        // x1 = 1 - 10 * 1 = -9 is outside the domain.
        let traj = gd_run(&t, &[1.0], &cfg).unwrap();
        assert_eq!(traj.termination, Termination::Undefined { step: 1 });
    }

    #[test]
    fn fixed_step_on_counterexample_never_converges() {
        let p = parse(&corpus::counterexample_p(1.0)).unwrap();
        let cfg = RandomGdConfig {
            fixed_eps: Some(1.0),
            n_seeds: 10,
            gd: GdConfig {
                t_max: 100,
                stop_tol: 1e-3,
                ..GdConfig::default()
            },
            ..RandomGdConfig::default()
        };
        let r = randomized_gd(&p, &cfg, Exec::Sequential).unwrap();
        assert_eq!(r.converged, 0);
        assert_eq!(r.fraction, 0.0);
    }

    #[test]
    fn randomized_q_off_the_trap() {
        let q = parse(corpus::Q).unwrap();
        let cfg = RandomGdConfig {
            l: 2.0,
            x0_range: (2.0, 10.0),
            n_seeds: 50,
            gd: GdConfig {
                t_max: 10_000,
                stop_tol: 1e-3,
                ..GdConfig::default()
            },
            ..RandomGdConfig::default()
        };
        let r = randomized_gd(&q, &cfg, Exec::Parallel).unwrap();
        assert_eq!(
            r.converged,
            50,
            "{:?}",
            r.seeds.iter().find(|s| s.status != SeedStatus::Converged)
        );
    }

    #[test]
    fn smoothness_examples() {
        let half = parse(corpus::HALF_SQUARE).unwrap();
        let r =
            smoothness_probe(&half, 400, (-10.0, 10.0), 1, DEFAULT_FUEL, Exec::Parallel).unwrap();
        assert!((r.estimate - 1.0).abs() < 1e-3, "{r:?}");
        assert!(!r.not_smooth);
        let p = parse(&corpus::counterexample_p(1.0)).unwrap();
        let r = smoothness_probe(&p, 400, (-10.0, 10.0), 1, DEFAULT_FUEL, Exec::Parallel).unwrap();
        assert!((r.estimate - 1.0).abs() < 1e-3, "{r:?}");
        let abs = parse("fun (x : real) -> abs(x)").unwrap();
        let r = smoothness_probe(&abs, 1000, (-1.0, 1.0), 1, DEFAULT_FUEL, Exec::Parallel).unwrap();
        assert!(r.not_smooth, "{r:?}");
    }
}
