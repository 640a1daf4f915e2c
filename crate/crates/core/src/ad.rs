//! Forward-mode AD as a source-to-source macro `D`, with drivers for
//! derivatives, JVPs, gradients and an AD-vs-FD audit.
//!
//! `D` maps `real` to `real * real` (primal, tangent) and acts
//! homomorphically on everything else. Primitives become their registry
//! dual forms, `sample` becomes `dual_sample` and `score` becomes
//! `dual_score`.

use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::eval::{self, EvalError, Outcome, Value};
use crate::exec::Exec;
use crate::numcheck::{fd_derivative, FdConfig, Stability};
use crate::prims::{Dual, Prim};
use crate::syntax::{Term, TermRef, Type};
use crate::typecheck::{typecheck, Context, TypeError};

#[derive(Clone, Debug, PartialEq, Error)]
pub enum AdError {
    #[error(transparent)]
    Type(#[from] TypeError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("term already contains dual forms")]
    AlreadyDual,
    #[error("expected a function from real tuples to real tuples, found {0}")]
    Signature(Type),
    #[error("expected {expected} values, got {found}")]
    Arity { expected: usize, found: usize },
    #[error("function has {0} outputs; a gradient needs exactly one")]
    NotScalar(usize),
}

/// Type translation: `D(real) = real * real`, structural elsewhere.
pub fn dual_type(ty: &Type) -> Type {
    match ty {
        Type::Real => Type::prod(Type::Real, Type::Real),
        Type::Bool => Type::Bool,
        Type::Unit => Type::Unit,
        Type::Prod(a, b) => Type::prod(dual_type(a), dual_type(b)),
        Type::Arrow(a, b) => Type::arrow(dual_type(a), dual_type(b)),
    }
}

/// Applies the macro `D` to a term.
pub fn transform(t: &Term) -> Result<Term, AdError> {
    let go = |s: &TermRef| transform(s).map(Arc::new);
    Ok(match t {
        Term::Var(_) | Term::Bool(_) | Term::Unit => t.clone(),
        Term::Real(c) => Term::pair(Term::Real(*c), Term::Real(0.0)),
        Term::Prim(p, args) => {
            if p.dual {
                return Err(AdError::AlreadyDual);
            }
            Term::Prim(
                Prim::dual(p.op),
                args.iter().map(go).collect::<Result<_, _>>()?,
            )
        }
        Term::Pair(a, b) => Term::Pair(go(a)?, go(b)?),
        Term::Match {
            scrutinee,
            left,
            right,
            body,
        } => Term::Match {
            scrutinee: go(scrutinee)?,
            left: left.clone(),
            right: right.clone(),
            body: go(body)?,
        },
        Term::If(c, a, b) => Term::If(go(c)?, go(a)?, go(b)?),
        Term::Lam { param, ty, body } => Term::Lam {
            param: param.clone(),
            ty: dual_type(ty),
            body: go(body)?,
        },
        Term::App(f, a) => Term::App(go(f)?, go(a)?),
        Term::Mu {
            fun,
            param,
            dom,
            cod,
            body,
        } => Term::Mu {
            fun: fun.clone(),
            param: param.clone(),
            dom: dual_type(dom),
            cod: dual_type(cod),
            body: go(body)?,
        },
        Term::Sample => Term::DualSample,
        Term::Score(a) => Term::DualScore(go(a)?),
        Term::DualSample | Term::DualScore(_) => return Err(AdError::AlreadyDual),
        Term::Let {
            name,
            ty,
            bound,
            body,
        } => Term::Let {
            name: name.clone(),
            ty: ty.as_ref().map(dual_type),
            bound: go(bound)?,
            body: go(body)?,
        },
    })
}

/// Number of real leaves of a type built from `real` and products.
pub fn real_leaves(ty: &Type) -> Option<usize> {
    match ty {
        Type::Real => Some(1),
        Type::Prod(a, b) => Some(real_leaves(a)? + real_leaves(b)?),
        _ => None,
    }
}

/// Shape of a function `T1 -> ... -> Tk -> U` whose arguments and result
/// are trees of reals. Tupled inputs have `k = 1`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Signature {
    #[serde(skip)]
    pub inputs: Vec<Type>,
    #[serde(skip)]
    pub output: Type,
    pub n: usize,
    pub m: usize,
}

impl Signature {
    pub fn of(ty: &Type) -> Option<Signature> {
        let mut inputs = Vec::new();
        let mut cur = ty;
        while let Type::Arrow(dom, cod) = cur {
            real_leaves(dom)?;
            inputs.push((**dom).clone());
            cur = cod;
        }
        let m = real_leaves(cur)?;
        if inputs.is_empty() {
            return None;
        }
        let n = inputs.iter().map(|t| real_leaves(t).unwrap_or(0)).sum();
        Some(Signature {
            inputs,
            output: cur.clone(),
            n,
            m,
        })
    }
}

/// Builds a value-term of shape `ty`, taking leaves from `leaves`.
pub fn build_arg(ty: &Type, leaves: &mut impl Iterator<Item = Term>) -> Term {
    match ty {
        Type::Prod(a, b) => {
            let l = build_arg(a, leaves);
            let r = build_arg(b, leaves);
            Term::pair(l, r)
        }
        _ => leaves.next().expect("leaf count checked by caller"),
    }
}

/// Reads the dual leaves of a value of type `D(ty)`.
pub fn dual_leaves(v: &Value, ty: &Type, out: &mut Vec<Dual>) -> Result<(), EvalError> {
    match (ty, v) {
        (Type::Prod(a, b), Value::Pair(x, y)) => {
            dual_leaves(x, a, out)?;
            dual_leaves(y, b, out)
        }
        (Type::Real, v) => {
            let d = v
                .as_dual()
                .ok_or_else(|| EvalError::Stuck(format!("expected a dual number, got {v}")))?;
            out.push(d);
            Ok(())
        }
        (ty, v) => Err(EvalError::Stuck(format!(
            "value {v} does not have shape {ty}"
        ))),
    }
}

/// Primal and tangent outputs of one forward pass.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Jvp {
    pub primal: Vec<f64>,
    pub tangent: Vec<f64>,
}

/// A closed deterministic function of real tuples, together with its
/// transformed program.
#[derive(Clone, Debug)]
pub struct Differentiable {
    pub term: TermRef,
    pub dual_term: TermRef,
    pub signature: Signature,
    pub fuel: u64,
}

impl Differentiable {
    pub fn new(t: &Term, fuel: u64) -> Result<Differentiable, AdError> {
        let ty = typecheck(&Context::new(), t)?;
        if !t.is_deterministic() {
            return Err(EvalError::NotDeterministic.into());
        }
        let signature = Signature::of(&ty).ok_or(AdError::Signature(ty))?;
        Ok(Differentiable {
            term: Arc::new(t.clone()),
            dual_term: Arc::new(transform(t)?),
            signature,
            fuel,
        })
    }

    pub fn n(&self) -> usize {
        self.signature.n
    }

    pub fn m(&self) -> usize {
        self.signature.m
    }

    fn check_len(&self, len: usize) -> Result<(), AdError> {
        if len == self.n() {
            Ok(())
        } else {
            Err(AdError::Arity {
                expected: self.n(),
                found: len,
            })
        }
    }

    fn applied(&self, f: &TermRef, mut leaves: impl Iterator<Item = Term>) -> Term {
        self.signature
            .inputs
            .iter()
            .fold(Term::clone(f), |acc, ty| {
                Term::app(acc, build_arg(ty, &mut leaves))
            })
    }

    /// Evaluates the function at `x`.
    pub fn eval_at(&self, x: &[f64]) -> Result<Outcome<Vec<f64>>, AdError> {
        self.check_len(x.len())?;
        let call = self.applied(&self.term, x.iter().map(|&v| Term::Real(v)));
        let out = eval::eval(&call, &eval::Env::new(), self.fuel)?.outcome;
        Ok(match out {
            Outcome::Val(v) => Outcome::Val(
                v.reals()
                    .ok_or_else(|| EvalError::Stuck(format!("non-real result {v}")))?,
            ),
            Outcome::Bottom(r) => Outcome::Bottom(r),
        })
    }

    /// Runs the transformed program on `((x1, v1), ..., (xn, vn))`.
    pub fn jvp(&self, x: &[f64], v: &[f64]) -> Result<Outcome<Jvp>, AdError> {
        self.check_len(x.len())?;
        self.check_len(v.len())?;
        let leaves = x
            .iter()
            .zip(v)
            .map(|(&p, &t)| Term::pair(Term::Real(p), Term::Real(t)));
        let call = self.applied(&self.dual_term, leaves);
        let out = eval::eval(&call, &eval::Env::new(), self.fuel)?.outcome;
        Ok(match out {
            Outcome::Val(val) => {
                let mut duals = Vec::with_capacity(self.m());
                dual_leaves(&val, &self.signature.output, &mut duals)?;
                Outcome::Val(Jvp {
                    primal: duals.iter().map(|d| d.primal).collect(),
                    tangent: duals.iter().map(|d| d.tangent).collect(),
                })
            }
            Outcome::Bottom(r) => Outcome::Bottom(r),
        })
    }

    /// Value and gradient of a scalar function, using `n` forward passes.
    pub fn gradient(&self, x: &[f64]) -> Result<Outcome<(f64, Vec<f64>)>, AdError> {
        if self.m() != 1 {
            return Err(AdError::NotScalar(self.m()));
        }
        self.check_len(x.len())?;
        let mut grad = Vec::with_capacity(self.n());
        let mut value = f64::NAN;
        let mut seed = vec![0.0; self.n()];
        for i in 0..self.n() {
            seed[i] = 1.0;
            match self.jvp(x, &seed)? {
                Outcome::Val(j) => {
                    value = j.primal[0];
                    grad.push(j.tangent[0]);
                }
                Outcome::Bottom(r) => return Ok(Outcome::Bottom(r)),
            }
            seed[i] = 0.0;
        }
        if self.n() == 0 {
            return Ok(self.eval_at(x)?.map(|v| (v[0], grad)));
        }
        Ok(Outcome::Val((value, grad)))
    }

    /// Derivative of a `real -> real` function.
    pub fn derivative(&self, x: f64) -> Result<Outcome<f64>, AdError> {
        self.check_len(1)?;
        if self.m() != 1 {
            return Err(AdError::NotScalar(self.m()));
        }
        Ok(self.jvp(&[x], &[1.0])?.map(|j| j.tangent[0]))
    }

    fn scalar(&self, x: f64) -> Option<f64> {
        match self.eval_at(&[x]) {
            Ok(Outcome::Val(v)) => Some(v[0]),
            _ => None,
        }
    }

    fn ad_scalar(&self, x: f64) -> Option<f64> {
        match self.derivative(x) {
            Ok(Outcome::Val(d)) => Some(d),
            _ => None,
        }
    }
}

/// Derivative of a closed `real -> real` term at `x`.
pub fn derivative(t: &Term, x: f64, fuel: u64) -> Result<Outcome<f64>, AdError> {
    Differentiable::new(t, fuel)?.derivative(x)
}

/// Jacobian-vector product of a closed function of real tuples.
pub fn jvp(t: &Term, x: &[f64], v: &[f64], fuel: u64) -> Result<Outcome<Vec<f64>>, AdError> {
    Ok(Differentiable::new(t, fuel)?.jvp(x, v)?.map(|j| j.tangent))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DerivReport {
    pub point: f64,
    pub ad: Option<f64>,
    pub fd: Option<f64>,
    /// `None` when the program is undefined at the point.
    pub class: Option<Stability>,
    pub fd_class: Option<Stability>,
    /// AD derivative jumps between the point and its neighbours at the
    /// FD step, which marks a piece boundary of the program.
    pub ad_jump: bool,
    pub abs_err: Option<f64>,
    pub rel_err: Option<f64>,
    pub disagree: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct AuditSummary {
    pub points: usize,
    pub undefined: usize,
    pub boundary: usize,
    pub interior_disagreements: usize,
    pub boundary_disagreements: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IntensionalAudit {
    pub reports: Vec<DerivReport>,
    pub summary: AuditSummary,
}

impl Differentiable {
    /// Compares the AD derivative against the FD oracle at one point.
    pub fn report_at(&self, x: f64, cfg: &FdConfig) -> DerivReport {
        let mut report = DerivReport {
            point: x,
            ad: None,
            fd: None,
            class: None,
            fd_class: None,
            ad_jump: false,
            abs_err: None,
            rel_err: None,
            disagree: false,
        };
        let Some(ad) = self.ad_scalar(x) else {
            return report;
        };
        report.ad = Some(ad);
        let h = cfg.step(x);
        report.ad_jump = match (self.ad_scalar(x - h), self.ad_scalar(x + h)) {
            (Some(l), Some(r)) => {
                let scale = l.abs().max(r.abs()).max(ad.abs());
                let jump = (l + r - 2.0 * ad).abs();
                let bound = 10.0 * cfg.rtol * scale + cfg.atol;
                jump.is_nan() || bound.is_nan() || jump > bound
            }
            _ => true,
        };
        let fd = fd_derivative(|y| self.scalar(y), x, cfg);
        let (fd_value, noise) = match fd {
            Ok(e) => {
                report.fd = Some(e.value);
                report.fd_class = Some(e.class);
                (e.value, e.noise)
            }
            Err(_) => {
                report.class = Some(Stability::SuspectedBoundary);
                return report;
            }
        };
        let boundary = report.ad_jump || report.fd_class == Some(Stability::SuspectedBoundary);
        report.class = Some(if boundary {
            Stability::SuspectedBoundary
        } else {
            Stability::Interior
        });
        let abs = (ad - fd_value).abs();
        report.abs_err = Some(abs);
        report.rel_err = Some(abs / ad.abs().max(fd_value.abs()).max(f64::MIN_POSITIVE));
        report.disagree = cfg.disagree(ad, fd_value, noise);
        report
    }
}

/// AD-vs-FD audit of a `real -> real` program over a list of points.
pub fn check_intensional(
    t: &Term,
    points: &[f64],
    cfg: &FdConfig,
    fuel: u64,
    exec: Exec,
) -> Result<IntensionalAudit, AdError> {
    let d = Differentiable::new(t, fuel)?;
    if d.n() != 1 || d.m() != 1 {
        return Err(AdError::Signature(typecheck(&Context::new(), t)?));
    }
    let reports = exec.map_slice(points, |&x| d.report_at(x, cfg));
    let mut summary = AuditSummary {
        points: reports.len(),
        ..AuditSummary::default()
    };
    for r in &reports {
        match r.class {
            None => summary.undefined += 1,
            Some(Stability::SuspectedBoundary) => {
                summary.boundary += 1;
                if r.disagree {
                    summary.boundary_disagreements += 1;
                }
            }
            Some(Stability::Interior) => {
                if r.disagree {
                    summary.interior_disagreements += 1;
                }
            }
        }
    }
    Ok(IntensionalAudit { reports, summary })
}
