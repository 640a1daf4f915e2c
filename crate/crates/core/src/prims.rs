//! Registry of piecewise-analytic primitives.
//!
//! Every primitive comes with its evaluator and a dual-number translation.
//! Where a primitive has several analytic pieces, the dual translation
//! differentiates the piece selected by a fixed strict comparison; the
//! convention is recorded in [`PrimSpec::boundary_note`].

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::syntax::Type;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PrimOp {
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Exp,
    Log,
    Sin,
    Cos,
    Sqrt,
    Abs,
    Min,
    Max,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
}

/// A primitive occurrence in a term: the operation, and whether this is
/// its dual-number translation (produced by the AD macro).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Prim {
    pub op: PrimOp,
    pub dual: bool,
}

impl Prim {
    pub const fn primal(op: PrimOp) -> Prim {
        Prim { op, dual: false }
    }

    pub const fn dual(op: PrimOp) -> Prim {
        Prim { op, dual: true }
    }

    pub fn spec(&self) -> &'static PrimSpec {
        spec_of(self.op)
    }

    pub fn surface_name(&self) -> String {
        if self.dual {
            format!("dual_{}", self.spec().name)
        } else {
            self.spec().name.to_string()
        }
    }

    pub fn arity(&self) -> usize {
        self.spec().arity
    }

    pub fn arg_type(&self) -> Type {
        if self.dual {
            Type::prod(Type::Real, Type::Real)
        } else {
            Type::Real
        }
    }

    pub fn result_type(&self) -> Type {
        match (self.spec().result, self.dual) {
            (PrimResult::Bool, _) => Type::Bool,
            (PrimResult::Real, false) => Type::Real,
            (PrimResult::Real, true) => Type::prod(Type::Real, Type::Real),
        }
    }
}

impl fmt::Display for Prim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.surface_name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PrimResult {
    Real,
    Bool,
}

/// A forward-mode dual number.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize)]
pub struct Dual {
    pub primal: f64,
    pub tangent: f64,
}

impl Dual {
    pub const ONE: Dual = Dual {
        primal: 1.0,
        tangent: 0.0,
    };

    pub const fn new(primal: f64, tangent: f64) -> Dual {
        Dual { primal, tangent }
    }

    pub const fn constant(primal: f64) -> Dual {
        Dual {
            primal,
            tangent: 0.0,
        }
    }
}

/// Scalar result of a primitive.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Scalar {
    Real(f64),
    Bool(bool),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DualScalar {
    Dual(Dual),
    Bool(bool),
}

/// The argument lies outside the primitive's domain (semantic bottom).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Error, Serialize)]
#[error("{prim} is undefined at this argument")]
pub struct DomainError {
    pub prim: &'static str,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum PrimError {
    #[error("unknown primitive `{0}`")]
    NotFound(String),
}

pub struct PrimSpec {
    pub op: PrimOp,
    pub name: &'static str,
    pub arity: usize,
    pub result: PrimResult,
    pub eval: fn(&[f64]) -> Result<Scalar, DomainError>,
    pub dual_eval: fn(&[Dual]) -> Result<DualScalar, DomainError>,
    pub boundary_note: &'static str,
}

impl PrimSpec {
    pub fn arg_types(&self) -> Vec<Type> {
        vec![Type::Real; self.arity]
    }

    pub fn result_type(&self) -> Type {
        match self.result {
            PrimResult::Real => Type::Real,
            PrimResult::Bool => Type::Bool,
        }
    }
}

impl fmt::Debug for PrimSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PrimSpec")
            .field("name", &self.name)
            .field("arity", &self.arity)
            .field("result", &self.result)
            .finish()
    }
}

fn real(x: f64) -> Result<Scalar, DomainError> {
    Ok(Scalar::Real(x))
}

fn boolean(b: bool) -> Result<Scalar, DomainError> {
    Ok(Scalar::Bool(b))
}

fn dual(primal: f64, tangent: f64) -> Result<DualScalar, DomainError> {
    Ok(DualScalar::Dual(Dual::new(primal, tangent)))
}

fn dual_bool(b: bool) -> Result<DualScalar, DomainError> {
    Ok(DualScalar::Bool(b))
}

const fn bottom(prim: &'static str) -> DomainError {
    DomainError { prim }
}

macro_rules! comparison {
    ($op:ident, $name:literal, $cmp:tt) => {
        PrimSpec {
            op: PrimOp::$op,
            name: $name,
            arity: 2,
            result: PrimResult::Bool,
            eval: |a| boolean(a[0] $cmp a[1]),
            dual_eval: |a| dual_bool(a[0].primal $cmp a[1].primal),
            boundary_note: "boolean result; no tangent",
        }
    };
}

static REGISTRY: [PrimSpec; 18] = [
    PrimSpec {
        op: PrimOp::Add,
        name: "add",
        arity: 2,
        result: PrimResult::Real,
        eval: |a| real(a[0] + a[1]),
        dual_eval: |a| dual(a[0].primal + a[1].primal, a[0].tangent + a[1].tangent),
        boundary_note: "analytic everywhere",
    },
    PrimSpec {
        op: PrimOp::Sub,
        name: "sub",
        arity: 2,
        result: PrimResult::Real,
        eval: |a| real(a[0] - a[1]),
        dual_eval: |a| dual(a[0].primal - a[1].primal, a[0].tangent - a[1].tangent),
        boundary_note: "analytic everywhere",
    },
    PrimSpec {
        op: PrimOp::Mul,
        name: "mul",
        arity: 2,
        result: PrimResult::Real,
        eval: |a| real(a[0] * a[1]),
        dual_eval: |a| {
            let (x, y) = (a[0], a[1]);
            dual(
                x.primal * y.primal,
                x.tangent * y.primal + x.primal * y.tangent,
            )
        },
        boundary_note: "analytic everywhere",
    },
    PrimSpec {
        op: PrimOp::Div,
        name: "div",
        arity: 2,
        result: PrimResult::Real,
        eval: |a| {
            if a[1] == 0.0 {
                Err(bottom("div"))
            } else {
                real(a[0] / a[1])
            }
        },
        dual_eval: |a| {
            let (x, y) = (a[0], a[1]);
            if y.primal == 0.0 {
                return Err(bottom("div"));
            }
            let q = x.primal / y.primal;
            dual(q, (x.tangent - q * y.tangent) / y.primal)
        },
        boundary_note: "domain excludes a zero divisor (bottom there)",
    },
    PrimSpec {
        op: PrimOp::Neg,
        name: "neg",
        arity: 1,
        result: PrimResult::Real,
        eval: |a| real(-a[0]),
        dual_eval: |a| dual(-a[0].primal, -a[0].tangent),
        boundary_note: "analytic everywhere",
    },
    PrimSpec {
        op: PrimOp::Exp,
        name: "exp",
        arity: 1,
        result: PrimResult::Real,
        eval: |a| real(a[0].exp()),
        dual_eval: |a| {
            let e = a[0].primal.exp();
            dual(e, a[0].tangent * e)
        },
        boundary_note: "analytic everywhere",
    },
    PrimSpec {
        op: PrimOp::Log,
        name: "log",
        arity: 1,
        result: PrimResult::Real,
        eval: |a| {
            if a[0] > 0.0 {
                real(a[0].ln())
            } else {
                Err(bottom("log"))
            }
        },
        dual_eval: |a| {
            let x = a[0];
            if x.primal > 0.0 {
                dual(x.primal.ln(), x.tangent / x.primal)
            } else {
                Err(bottom("log"))
            }
        },
        boundary_note: "domain x > 0 (bottom elsewhere)",
    },
    PrimSpec {
        op: PrimOp::Sin,
        name: "sin",
        arity: 1,
        result: PrimResult::Real,
        eval: |a| real(a[0].sin()),
        dual_eval: |a| dual(a[0].primal.sin(), a[0].tangent * a[0].primal.cos()),
        boundary_note: "analytic everywhere",
    },
    PrimSpec {
        op: PrimOp::Cos,
        name: "cos",
        arity: 1,
        result: PrimResult::Real,
        eval: |a| real(a[0].cos()),
        dual_eval: |a| dual(a[0].primal.cos(), -(a[0].tangent * a[0].primal.sin())),
        boundary_note: "analytic everywhere",
    },
    PrimSpec {
        op: PrimOp::Sqrt,
        name: "sqrt",
        arity: 1,
        result: PrimResult::Real,
        eval: |a| {
            if a[0] >= 0.0 {
                real(a[0].sqrt())
            } else {
                Err(bottom("sqrt"))
            }
        },
        dual_eval: |a| {
            let x = a[0];
            if x.primal.is_nan() || x.primal < 0.0 {
                return Err(bottom("sqrt"));
            }
            let s = x.primal.sqrt();
            if x.primal == 0.0 {
                dual(s, 0.0)
            } else {
                dual(s, x.tangent / (2.0 * s))
            }
        },
        boundary_note: "domain x >= 0; pieces {x > 0} (sqrt) and {0} (constant 0, tangent 0)",
    },
    PrimSpec {
        op: PrimOp::Abs,
        name: "abs",
        arity: 1,
        result: PrimResult::Real,
        eval: |a| real(a[0].abs()),
        dual_eval: |a| {
            let x = a[0];
            let slope = if x.primal < 0.0 {
                -x.tangent
            } else {
                x.tangent
            };
            dual(x.primal.abs(), slope)
        },
        boundary_note: "pieces x < 0 (-x) and else (x); at 0 the tangent is +dx",
    },
    PrimSpec {
        op: PrimOp::Min,
        name: "min",
        arity: 2,
        result: PrimResult::Real,
        eval: |a| real(if a[0] < a[1] { a[0] } else { a[1] }),
        dual_eval: |a| {
            let (x, y) = (a[0], a[1]);
            if x.primal < y.primal {
                dual(x.primal, x.tangent)
            } else {
                dual(y.primal, y.tangent)
            }
        },
        boundary_note:
            "first piece when a < b, else second; ties take the second argument's tangent",
    },
    PrimSpec {
        op: PrimOp::Max,
        name: "max",
        arity: 2,
        result: PrimResult::Real,
        eval: |a| real(if a[0] > a[1] { a[0] } else { a[1] }),
        dual_eval: |a| {
            let (x, y) = (a[0], a[1]);
            if x.primal > y.primal {
                dual(x.primal, x.tangent)
            } else {
                dual(y.primal, y.tangent)
            }
        },
        boundary_note:
            "first piece when a > b, else second; ties take the second argument's tangent",
    },
    comparison!(Lt, "lt", <),
    comparison!(Le, "le", <=),
    comparison!(Gt, "gt", >),
    comparison!(Ge, "ge", >=),
    comparison!(Eq, "eq", ==),
];

pub fn registry() -> &'static [PrimSpec] {
    &REGISTRY
}

pub fn spec_of(op: PrimOp) -> &'static PrimSpec {
    REGISTRY
        .iter()
        .find(|s| s.op == op)
        .expect("every PrimOp has a registry entry")
}

pub fn lookup(name: &str) -> Result<&'static PrimSpec, PrimError> {
    REGISTRY
        .iter()
        .find(|s| s.name == name)
        .ok_or_else(|| PrimError::NotFound(name.to_string()))
}

/// Resolves a surface name, including the `dual_` forms emitted by the AD
/// macro.
pub fn resolve(name: &str) -> Result<Prim, PrimError> {
    match name.strip_prefix("dual_") {
        Some(base) => lookup(base)
            .map(|s| Prim::dual(s.op))
            .map_err(|_| PrimError::NotFound(name.to_string())),
        None => lookup(name).map(|s| Prim::primal(s.op)),
    }
}

pub fn eval_prim(spec: &PrimSpec, args: &[f64]) -> Result<Scalar, DomainError> {
    debug_assert_eq!(args.len(), spec.arity);
    (spec.eval)(args)
}

pub fn dual_prim(spec: &PrimSpec, args: &[Dual]) -> Result<DualScalar, DomainError> {
    debug_assert_eq!(args.len(), spec.arity);
    (spec.dual_eval)(args)
}
