//! Trace semantics for `sample`/`score`: weighted runs on explicit traces,
//! weight functions, simulation, Monte Carlo estimates, weight gradients
//! and support-dimension estimates.
//!
//! A run consumes the trace front to back. `score(w)` multiplies the weight
//! by `max(0, w)`; sampling from an exhausted trace stops the run as
//! incomplete with weight 0.

use std::collections::BTreeMap;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

use crate::ad::{dual_leaves, real_leaves, transform, AdError};
use crate::eval::{
    BottomReason, Env, EvalError, Halt, Machine, Outcome, Randomness, Value, DEFAULT_FUEL,
};
use crate::exec::Exec;
use crate::numcheck::{fd_derivative, mc_mean_ci, FdConfig, FdEstimate, McError, Stability};
use crate::prims::Dual;
use crate::rng::Stream;
use crate::syntax::{Term, TermRef, Type};
use crate::typecheck::{typecheck, Context, TypeError};

pub type Trace = Vec<f64>;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum ProbError {
    #[error(transparent)]
    Type(#[from] TypeError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Ad(#[from] AdError),
    #[error(transparent)]
    Mc(#[from] McError),
    #[error("trace grew past {max} samples")]
    TraceOverflow { max: usize },
    #[error("result of type {0} is not a tuple of reals")]
    NotRealTuple(Type),
    #[error("result {value} has no coordinate {index}")]
    MissingCoordinate { value: String, index: usize },
    #[error("bad test function `{0}`; expected mass, mean:I or box:LO,HI[;LO,HI...]")]
    BadTestFn(String),
}

#[derive(Clone, Debug, PartialEq)]
pub enum RunResult {
    Val(Value),
    Incomplete,
    Bottom(BottomReason),
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightedOutcome {
    pub result: RunResult,
    /// Always `>= 0`; 0 for incomplete and bottom runs.
    pub weight: f64,
    pub remainder: Trace,
    pub consumed: usize,
}

struct TraceSource<'a> {
    values: &'a [f64],
    tangents: Option<&'a [f64]>,
    pos: usize,
}

impl Randomness for TraceSource<'_> {
    fn draw(&mut self) -> Option<Dual> {
        let r = *self.values.get(self.pos)?;
        let dr = self.tangents.map_or(0.0, |t| t[self.pos]);
        self.pos += 1;
        Some(Dual::new(r, dr))
    }
}

struct LazySource {
    rng: Stream,
    drawn: Trace,
    max: usize,
    overflow: bool,
}

impl Randomness for LazySource {
    fn draw(&mut self) -> Option<Dual> {
        if self.drawn.len() >= self.max {
            self.overflow = true;
            return None;
        }
        let u = self.rng.uniform();
        self.drawn.push(u);
        Some(Dual::constant(u))
    }
}

struct RawRun {
    halt: Halt,
    weight: Dual,
    consumed: usize,
}

fn execute(term: &TermRef, source: &mut dyn Randomness, fuel: u64) -> Result<RawRun, EvalError> {
    let mut m = Machine::with_randomness(fuel, source);
    let halt = m.run(term.clone(), Env::new())?;
    let weight = match halt {
        Halt::Value(_) => m.weight,
        Halt::Bottom(_) | Halt::Incomplete => Dual::new(0.0, 0.0),
    };
    Ok(RawRun {
        halt,
        weight,
        consumed: m.consumed,
    })
}

/// A typechecked closed program, ready for repeated runs.
#[derive(Clone, Debug)]
pub struct Sampler {
    pub term: TermRef,
    pub ty: Type,
    dual: TermRef,
    pub fuel: u64,
}

impl Sampler {
    pub fn new(t: &Term, fuel: u64) -> Result<Sampler, ProbError> {
        let ty = typecheck(&Context::new(), t)?;
        Ok(Sampler {
            term: Arc::new(t.clone()),
            ty,
            dual: Arc::new(transform(t)?),
            fuel,
        })
    }

    pub fn run_trace(&self, trace: &[f64]) -> Result<WeightedOutcome, ProbError> {
        let mut src = TraceSource {
            values: trace,
            tangents: None,
            pos: 0,
        };
        let raw = execute(&self.term, &mut src, self.fuel)?;
        Ok(WeightedOutcome {
            result: match raw.halt {
                Halt::Value(v) => RunResult::Val(v),
                Halt::Bottom(r) => RunResult::Bottom(r),
                Halt::Incomplete => RunResult::Incomplete,
            },
            weight: raw.weight.primal,
            remainder: trace[raw.consumed..].to_vec(),
            consumed: raw.consumed,
        })
    }

    pub fn weight_fn(&self, trace: &[f64]) -> Result<f64, ProbError> {
        let out = self.run_trace(trace)?;
        Ok(match out.result {
            RunResult::Val(_) if out.remainder.is_empty() => out.weight,
            _ => 0.0,
        })
    }

    /// Runs the transformed program with tangent `tangents[i]` on slot `i`.
    fn dual_run(&self, trace: &[f64], tangents: &[f64]) -> Result<RawRun, EvalError> {
        let mut src = TraceSource {
            values: trace,
            tangents: Some(tangents),
            pos: 0,
        };
        execute(&self.dual, &mut src, self.fuel)
    }

    /// Gradient of the weight function with respect to the trace.
    pub fn weight_grad(&self, trace: &[f64]) -> Result<Outcome<Vec<f64>>, ProbError> {
        let out = self.run_trace(trace)?;
        match out.result {
            RunResult::Bottom(r) => return Ok(Outcome::Bottom(r)),
            RunResult::Val(_) if out.remainder.is_empty() && out.weight > 0.0 => {}
            _ => return Ok(Outcome::Val(vec![0.0; trace.len()])),
        }
        let mut seed = vec![0.0; trace.len()];
        let mut grad = Vec::with_capacity(trace.len());
        for i in 0..trace.len() {
            seed[i] = 1.0;
            let raw = self.dual_run(trace, &seed)?;
            seed[i] = 0.0;
            match raw.halt {
                Halt::Value(_) => grad.push(raw.weight.tangent),
                Halt::Bottom(r) => return Ok(Outcome::Bottom(r)),
                Halt::Incomplete => {
                    return Err(EvalError::Stuck(
                        "dual run consumed more than the primal run".into(),
                    )
                    .into())
                }
            }
        }
        Ok(Outcome::Val(grad))
    }

    /// Draws uniforms lazily from stream `(seed, index)` until the run
    /// completes.
    pub fn simulate_stream(
        &self,
        seed: u64,
        index: u64,
        max_trace_len: usize,
    ) -> Result<Simulation, ProbError> {
        let mut src = LazySource {
            rng: Stream::new(seed, index),
            drawn: Vec::new(),
            max: max_trace_len,
            overflow: false,
        };
        let raw = execute(&self.term, &mut src, self.fuel)?;
        if src.overflow {
            return Err(ProbError::TraceOverflow { max: max_trace_len });
        }
        let result = match raw.halt {
            Halt::Value(v) => RunResult::Val(v),
            Halt::Bottom(r) => RunResult::Bottom(r),
            Halt::Incomplete => unreachable!("lazy source only stops on overflow"),
        };
        Ok(Simulation {
            outcome: WeightedOutcome {
                result,
                weight: raw.weight.primal,
                remainder: Vec::new(),
                consumed: raw.consumed,
            },
            trace: src.drawn,
        })
    }

    fn output_dim(&self) -> Result<usize, ProbError> {
        real_leaves(&self.ty).ok_or_else(|| ProbError::NotRealTuple(self.ty.clone()))
    }

    /// `k x n` Jacobian of the result with respect to the trace.
    pub fn jacobian(&self, trace: &[f64]) -> Result<Outcome<DMatrix<f64>>, ProbError> {
        let k = self.output_dim()?;
        let n = trace.len();
        let mut jac = DMatrix::zeros(k, n);
        let mut seed = vec![0.0; n];
        for j in 0..n {
            seed[j] = 1.0;
            let raw = self.dual_run(trace, &seed)?;
            seed[j] = 0.0;
            match raw.halt {
                Halt::Value(v) => {
                    let mut duals = Vec::with_capacity(k);
                    dual_leaves(&v, &self.ty, &mut duals)?;
                    for (i, d) in duals.iter().enumerate() {
                        jac[(i, j)] = d.tangent;
                    }
                }
                Halt::Bottom(r) => return Ok(Outcome::Bottom(r)),
                Halt::Incomplete => {
                    return Err(
                        EvalError::Stuck("dual run consumed more than the trace".into()).into(),
                    )
                }
            }
        }
        Ok(Outcome::Val(jac))
    }
}

pub fn run_trace(t: &Term, trace: &[f64], fuel: u64) -> Result<WeightedOutcome, ProbError> {
    Sampler::new(t, fuel)?.run_trace(trace)
}

/// Weight of a run that consumes `trace` exactly; 0 otherwise.
pub fn weight_fn(t: &Term, trace: &[f64], fuel: u64) -> Result<f64, ProbError> {
    Sampler::new(t, fuel)?.weight_fn(trace)
}

pub fn weight_grad(t: &Term, trace: &[f64], fuel: u64) -> Result<Outcome<Vec<f64>>, ProbError> {
    Sampler::new(t, fuel)?.weight_grad(trace)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SimConfig {
    pub seed: u64,
    pub max_trace_len: usize,
    pub fuel: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 0,
            max_trace_len: 10_000,
            fuel: DEFAULT_FUEL,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Simulation {
    pub outcome: WeightedOutcome,
    /// Exactly the draws consumed by the run.
    pub trace: Trace,
}

pub fn simulate(t: &Term, cfg: &SimConfig) -> Result<Simulation, ProbError> {
    Sampler::new(t, cfg.fuel)?.simulate_stream(cfg.seed, 0, cfg.max_trace_len)
}

/// Integrand for [`estimate`].
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TestFn {
    /// `f = 1`: total mass.
    Mass,
    /// Coordinate `i` of the result.
    Mean { index: usize },
    /// Indicator of `lo_j <= v_j <= hi_j` on the leading coordinates.
    Box { intervals: Vec<(f64, f64)> },
}

impl FromStr for TestFn {
    type Err = ProbError;

    fn from_str(s: &str) -> Result<TestFn, ProbError> {
        let bad = || ProbError::BadTestFn(s.to_string());
        let (head, rest) = s.split_once(':').unwrap_or((s, ""));
        match head.trim() {
            "mass" if rest.is_empty() => Ok(TestFn::Mass),
            "mean" => Ok(TestFn::Mean {
                index: if rest.is_empty() {
                    0
                } else {
                    rest.trim().parse().map_err(|_| bad())?
                },
            }),
            "box" => {
                let intervals = rest
                    .split(';')
                    .map(|iv| {
                        let (lo, hi) = iv.split_once(',').ok_or_else(bad)?;
                        let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
                        let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
                        Ok((lo, hi))
                    })
                    .collect::<Result<Vec<_>, ProbError>>()?;
                Ok(TestFn::Box { intervals })
            }
            _ => Err(bad()),
        }
    }
}

impl TestFn {
    pub fn apply(&self, v: &Value) -> Result<f64, ProbError> {
        if let TestFn::Mass = self {
            return Ok(1.0);
        }
        let reals = v.reals().ok_or_else(|| ProbError::MissingCoordinate {
            value: v.to_string(),
            index: 0,
        })?;
        let coord = |i: usize| {
            reals.get(i).copied().ok_or(ProbError::MissingCoordinate {
                value: v.to_string(),
                index: i,
            })
        };
        match self {
            TestFn::Mass => Ok(1.0),
            TestFn::Mean { index } => coord(*index),
            TestFn::Box { intervals } => {
                for (i, (lo, hi)) in intervals.iter().enumerate() {
                    let x = coord(i)?;
                    if !(*lo <= x && x <= *hi) {
                        return Ok(0.0);
                    }
                }
                Ok(1.0)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    /// 95 % normal-approximation halfwidth.
    pub halfwidth: f64,
    pub n: usize,
    pub overflow: usize,
    pub bottom: usize,
    pub degenerate: bool,
}

/// Monte Carlo estimate of the integral of `test` against the program's
/// measure: the mean of `weight * f(value)` over `n` simulations.
pub fn estimate(
    t: &Term,
    test: &TestFn,
    n: usize,
    cfg: &SimConfig,
    exec: Exec,
) -> Result<Estimate, ProbError> {
    let s = Sampler::new(t, cfg.fuel)?;
    let runs = exec.map_indexed(n, |i| -> Result<(f64, u8), ProbError> {
        match s.simulate_stream(cfg.seed, i as u64, cfg.max_trace_len) {
            Err(ProbError::TraceOverflow { .. }) => Ok((0.0, 1)),
            Err(e) => Err(e),
            Ok(sim) => match sim.outcome.result {
                RunResult::Val(v) => {
                    let f = test.apply(&v)?;
                    Ok((
                        if f == 0.0 {
                            0.0
                        } else {
                            sim.outcome.weight * f
                        },
                        0,
                    ))
                }
                _ => Ok((0.0, 2)),
            },
        }
    });
    let mut samples = Vec::with_capacity(n);
    let (mut overflow, mut bottom) = (0, 0);
    for r in runs {
        let (x, tag) = r?;
        samples.push(x);
        match tag {
            1 => overflow += 1,
            2 => bottom += 1,
            _ => {}
        }
    }
    let ci = mc_mean_ci(&samples, 0.95)?;
    Ok(Estimate {
        mean: ci.mean,
        halfwidth: ci.halfwidth,
        n,
        overflow,
        bottom,
        degenerate: ci.degenerate,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoordAudit {
    pub index: usize,
    pub position: f64,
    pub ad: f64,
    pub fd: Option<f64>,
    pub class: Stability,
    pub disagree: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceAudit {
    pub weight: f64,
    pub coords: Vec<CoordAudit>,
}

impl Sampler {
    /// Compares the AD weight gradient with FD along each trace slot,
    /// keeping probes inside `[0, 1]`.
    pub fn audit_trace(
        &self,
        trace: &[f64],
        cfg: &FdConfig,
    ) -> Result<Option<TraceAudit>, ProbError> {
        let weight = self.weight_fn(trace)?;
        let grad = match self.weight_grad(trace)? {
            Outcome::Val(g) => g,
            Outcome::Bottom(_) => return Ok(None),
        };
        let cfg = cfg.with_bounds(0.0, 1.0);
        let mut coords = Vec::with_capacity(trace.len());
        for (i, &ad) in grad.iter().enumerate() {
            let fd: Option<FdEstimate> = fd_derivative(
                |r| {
                    let mut p = trace.to_vec();
                    p[i] = r;
                    self.weight_fn(&p).ok()
                },
                trace[i],
                &cfg,
            )
            .ok();
            let (class, disagree) = match &fd {
                Some(e) => (e.class, cfg.disagree(ad, e.value, e.noise)),
                None => (Stability::SuspectedBoundary, false),
            };
            coords.push(CoordAudit {
                index: i,
                position: trace[i],
                ad,
                fd: fd.map(|e| e.value),
                class,
                disagree,
            });
        }
        Ok(Some(TraceAudit { weight, coords }))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundaryFlag {
    pub trace_index: usize,
    pub coord: usize,
    pub position: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct AeDiffReport {
    pub n_traces: usize,
    pub overflow: usize,
    pub bottom: usize,
    pub zero_weight: usize,
    pub checked_traces: usize,
    pub checked_coords: usize,
    pub interior_disagreements: usize,
    pub boundary_flags: Vec<BoundaryFlag>,
    /// Flagged coordinates over checked coordinates.
    pub boundary_fraction: f64,
    /// Up to 20 interior disagreements, for diagnosis.
    pub examples: Vec<(usize, CoordAudit)>,
}

/// Audits a.e.-differentiability of the weight function on simulated
/// positive-weight traces.
pub fn ae_diff_check(
    t: &Term,
    n_traces: usize,
    sim: &SimConfig,
    fd: &FdConfig,
    exec: Exec,
) -> Result<AeDiffReport, ProbError> {
    let s = Sampler::new(t, sim.fuel)?;
    let audits = exec.map_indexed(
        n_traces,
        |i| -> Result<Option<Option<TraceAudit>>, ProbError> {
            match s.simulate_stream(sim.seed, i as u64, sim.max_trace_len) {
                Err(ProbError::TraceOverflow { .. }) => Ok(None),
                Err(e) => Err(e),
                Ok(run) => match run.outcome.result {
                    RunResult::Val(_) if run.outcome.weight > 0.0 => {
                        Ok(Some(s.audit_trace(&run.trace, fd)?))
                    }
                    RunResult::Val(_) => Ok(Some(Some(TraceAudit {
                        weight: 0.0,
                        coords: Vec::new(),
                    }))),
                    _ => Ok(Some(None)),
                },
            }
        },
    );
    let mut report = AeDiffReport {
        n_traces,
        ..AeDiffReport::default()
    };
    for (i, a) in audits.into_iter().enumerate() {
        match a? {
            None => report.overflow += 1,
            Some(None) => report.bottom += 1,
            Some(Some(audit)) if audit.weight == 0.0 => report.zero_weight += 1,
            Some(Some(audit)) => {
                report.checked_traces += 1;
                for c in audit.coords {
                    report.checked_coords += 1;
                    match c.class {
                        Stability::SuspectedBoundary => report.boundary_flags.push(BoundaryFlag {
                            trace_index: i,
                            coord: c.index,
                            position: c.position,
                        }),
                        Stability::Interior if c.disagree => {
                            report.interior_disagreements += 1;
                            if report.examples.len() < 20 {
                                report.examples.push((i, c));
                            }
                        }
                        Stability::Interior => {}
                    }
                }
            }
        }
    }
    report.boundary_fraction = if report.checked_coords == 0 {
        0.0
    } else {
        report.boundary_flags.len() as f64 / report.checked_coords as f64
    };
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankSample {
    pub index: usize,
    pub rows: usize,
    pub cols: usize,
    pub rank: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankHistogram {
    pub counts: BTreeMap<usize, usize>,
    pub samples: Vec<RankSample>,
    pub tolerance: f64,
    pub skipped: usize,
}

impl RankHistogram {
    pub fn fraction(&self, rank: usize) -> f64 {
        let total: usize = self.counts.values().sum();
        if total == 0 {
            return 0.0;
        }
        *self.counts.get(&rank).unwrap_or(&0) as f64 / total as f64
    }
}

/// Numerical rank: singular values above `tol * sigma_max`.
pub fn numerical_rank(m: &DMatrix<f64>, tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.iter().cloned().fold(0.0f64, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * smax).count()
}

pub const DEFAULT_RANK_TOL: f64 = 1e-8;

/// Histogram of the local dimension (Jacobian rank) of the output map
/// over simulated traces.
pub fn support_dim(
    t: &Term,
    n_samples: usize,
    sim: &SimConfig,
    tol: f64,
    exec: Exec,
) -> Result<RankHistogram, ProbError> {
    let s = Sampler::new(t, sim.fuel)?;
    s.output_dim()?;
    let per = exec.map_indexed(n_samples, |i| -> Result<Option<RankSample>, ProbError> {
        let run = match s.simulate_stream(sim.seed, i as u64, sim.max_trace_len) {
            Err(ProbError::TraceOverflow { .. }) => return Ok(None),
            Err(e) => return Err(e),
            Ok(run) => run,
        };
        if !matches!(run.outcome.result, RunResult::Val(_)) {
            return Ok(None);
        }
        Ok(match s.jacobian(&run.trace)? {
            Outcome::Val(j) => Some(RankSample {
                index: i,
                rows: j.nrows(),
                cols: j.ncols(),
                rank: numerical_rank(&j, tol),
            }),
            Outcome::Bottom(_) => None,
        })
    });
    let mut hist = RankHistogram {
        counts: BTreeMap::new(),
        samples: Vec::new(),
        tolerance: tol,
        skipped: 0,
    };
    for r in per {
        match r? {
            Some(sample) => {
                *hist.counts.entry(sample.rank).or_insert(0) += 1;
                hist.samples.push(sample);
            }
            None => hist.skipped += 1,
        }
    }
    Ok(hist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::parser::parse;

    fn run(src: &str, trace: &[f64]) -> WeightedOutcome {
        run_trace(&parse(src).unwrap(), trace, DEFAULT_FUEL).unwrap()
    }

    #[test]
    fn sample_clauses() {
        let o = run("sample", &[0.3]);
        assert_eq!(o.result, RunResult::Val(Value::Real(0.3)));
        assert_eq!((o.weight, o.remainder.len(), o.consumed), (1.0, 0, 1));
        let o = run("sample", &[]);
        assert_eq!(o.result, RunResult::Incomplete);
        assert_eq!(o.weight, 0.0);
        let o = run("sample", &[0.3, 0.4]);
        assert_eq!(o.remainder, vec![0.4]);
    }

    #[test]
    fn score_clauses() {
        let o = run("let _ = score(2.5) in sample", &[0.7]);
        assert_eq!(o.result, RunResult::Val(Value::Real(0.7)));
        assert_eq!(o.weight, 2.5);
        let o = run("score(-1.0)", &[]);
        assert_eq!(o.result, RunResult::Val(Value::Unit));
        assert_eq!(o.weight, 0.0);
    }

    #[test]
    fn weight_fn_examples() {
        let w = |src: &str, tr: &[f64]| weight_fn(&parse(src).unwrap(), tr, DEFAULT_FUEL).unwrap();
        assert_eq!(w("sample", &[0.3]), 1.0);
        assert_eq!(w("sample", &[0.3, 0.4]), 0.0);
        assert_eq!(w("let x = sample in score(x)", &[0.6]), 0.6);
        assert_eq!(w("div(1.0, sub(sample, 0.5))", &[0.5]), 0.0);
    }

    #[test]
    fn weight_grad_examples() {
        let g = |src: &str, tr: &[f64]| {
            weight_grad(&parse(src).unwrap(), tr, DEFAULT_FUEL)
                .unwrap()
                .val()
                .unwrap()
        };
        assert_eq!(g("score(sample)", &[0.4]), vec![1.0]);
        assert_eq!(g("let x = sample in score(mul(x, x))", &[0.5]), vec![1.0]);
        assert_eq!(
            g("if lt(sample, 0.5) then score(1.0) else score(2.0)", &[0.3]),
            vec![0.0]
        );
        assert_eq!(g("score(sample)", &[0.4, 0.1]), vec![0.0, 0.0]);
    }

    #[test]
    fn simulate_examples() {
        let cfg = SimConfig {
            seed: 9,
            ..SimConfig::default()
        };
        let s = simulate(&parse("sample").unwrap(), &cfg).unwrap();
        let first = Stream::new(9, 0).uniform();
        assert_eq!(s.outcome.result, RunResult::Val(Value::Real(first)));
        assert_eq!(s.outcome.weight, 1.0);
        assert_eq!(s.trace, vec![first]);

        let g = parse(corpus::GEOMETRIC).unwrap();
        for seed in 0..20 {
            let s = simulate(&g, &SimConfig { seed, ..cfg }).unwrap();
            assert_eq!(s.outcome.weight, 1.0);
            let RunResult::Val(Value::Real(k)) = s.outcome.result else {
                panic!()
            };
            assert_eq!(k as usize + 1, s.trace.len());
            let replay = run_trace(&g, &s.trace, DEFAULT_FUEL).unwrap();
            assert_eq!(replay, s.outcome);
        }

        let forever = parse("(mu g (u : unit) : real -> add(sample, g(()))) ()").unwrap();
        let err = simulate(
            &forever,
            &SimConfig {
                max_trace_len: 50,
                ..cfg
            },
        )
        .unwrap_err();
        assert_eq!(err, ProbError::TraceOverflow { max: 50 });
    }

    #[test]
    fn test_fn_parsing() {
        assert_eq!("mass".parse::<TestFn>().unwrap(), TestFn::Mass);
        assert_eq!(
            "mean:1".parse::<TestFn>().unwrap(),
            TestFn::Mean { index: 1 }
        );
        assert_eq!(
            "box:0,0.5;0.1,1".parse::<TestFn>().unwrap(),
            TestFn::Box {
                intervals: vec![(0.0, 0.5), (0.1, 1.0)]
            }
        );
        assert!("box:0".parse::<TestFn>().is_err());
        assert!("median".parse::<TestFn>().is_err());
    }

    #[test]
    fn small_estimate() {
        let t = parse("score(2.0); sample").unwrap();
        let e = estimate(
            &t,
            &TestFn::Mass,
            100,
            &SimConfig::default(),
            Exec::Sequential,
        )
        .unwrap();
        assert_eq!((e.mean, e.halfwidth, e.degenerate), (2.0, 0.0, true));
    }

    #[test]
    fn rank_of_known_matrices() {
        let m = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        assert_eq!(numerical_rank(&m, DEFAULT_RANK_TOL), 1);
        assert_eq!(
            numerical_rank(&DMatrix::identity(2, 2), DEFAULT_RANK_TOL),
            2
        );
        assert_eq!(numerical_rank(&DMatrix::zeros(2, 3), DEFAULT_RANK_TOL), 0);
        assert_eq!(numerical_rank(&DMatrix::zeros(2, 0), DEFAULT_RANK_TOL), 0);
    }

    #[test]
    fn abs_kink_audit_near_half() {
        let s = Sampler::new(&parse(corpus::ABS_KINK).unwrap(), DEFAULT_FUEL).unwrap();
        let cfg = FdConfig::default();
        let h = cfg.step(0.5);
        let a = s.audit_trace(&[0.5 + h / 3.0], &cfg).unwrap().unwrap();
        assert_eq!(a.coords[0].class, Stability::SuspectedBoundary);
        let a = s.audit_trace(&[0.25], &cfg).unwrap().unwrap();
        assert_eq!(a.coords[0].class, Stability::Interior);
        assert!(!a.coords[0].disagree);
        assert_eq!(a.coords[0].ad, -1.0);
    }
}
