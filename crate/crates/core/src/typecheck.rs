use thiserror::Error;

use crate::syntax::{Name, Term, Type};

/// Typing context. Later bindings shadow earlier ones.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Context {
    entries: Vec<(Name, Type)>,
}

impl Context {
    pub fn new() -> Context {
        Context::default()
    }

    pub fn with(mut self, name: &str, ty: Type) -> Context {
        self.entries.push((Name::from(name), ty));
        self
    }

    pub fn push(&mut self, name: Name, ty: Type) {
        self.entries.push((name, ty));
    }

    pub fn pop(&mut self) {
        self.entries.pop();
    }

    pub fn lookup(&self, name: &str) -> Option<&Type> {
        self.entries
            .iter()
            .rev()
            .find(|(n, _)| &**n == name)
            .map(|(_, t)| t)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(Name, Type)> {
        self.entries.iter()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum TypeError {
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("in `{term}`: expected {expected}, found {found}")]
    Mismatch {
        term: String,
        expected: String,
        found: String,
    },
    #[error("`{term}` has type {found}, which is not a function")]
    NotAFunction { term: String, found: String },
    #[error("`{term}` has type {found}, which is not a pair")]
    NotAPair { term: String, found: String },
    #[error("primitive `{prim}` expects {expected} arguments, got {found}")]
    Arity {
        prim: String,
        expected: usize,
        found: usize,
    },
}

fn mismatch(t: &Term, expected: &Type, found: &Type) -> TypeError {
    TypeError::Mismatch {
        term: t.to_string(),
        expected: expected.to_string(),
        found: found.to_string(),
    }
}

pub fn typecheck(ctx: &Context, t: &Term) -> Result<Type, TypeError> {
    let mut ctx = ctx.clone();
    infer(&mut ctx, t)
}

/// Typechecks `t` and requires the result to equal `expected`.
pub fn check(ctx: &Context, t: &Term, expected: &Type) -> Result<(), TypeError> {
    let found = typecheck(ctx, t)?;
    if &found == expected {
        Ok(())
    } else {
        Err(mismatch(t, expected, &found))
    }
}

fn expect(ctx: &mut Context, t: &Term, expected: &Type) -> Result<(), TypeError> {
    let found = infer(ctx, t)?;
    if &found == expected {
        Ok(())
    } else {
        Err(mismatch(t, expected, &found))
    }
}

pub(crate) fn infer(ctx: &mut Context, t: &Term) -> Result<Type, TypeError> {
    match t {
        Term::Var(x) => ctx
            .lookup(x)
            .cloned()
            .ok_or_else(|| TypeError::Unbound(x.to_string())),
        Term::Real(_) => Ok(Type::Real),
        Term::Bool(_) => Ok(Type::Bool),
        Term::Unit => Ok(Type::Unit),
        Term::Prim(p, args) => {
            if args.len() != p.arity() {
                return Err(TypeError::Arity {
                    prim: p.surface_name(),
                    expected: p.arity(),
                    found: args.len(),
                });
            }
            let arg_ty = p.arg_type();
            for a in args {
                expect(ctx, a, &arg_ty)?;
            }
            Ok(p.result_type())
        }
        Term::Pair(a, b) => Ok(Type::prod(infer(ctx, a)?, infer(ctx, b)?)),
        Term::Match {
            scrutinee,
            left,
            right,
            body,
        } => match infer(ctx, scrutinee)? {
            Type::Prod(a, b) => {
                ctx.push(left.clone(), *a);
                ctx.push(right.clone(), *b);
                let out = infer(ctx, body);
                ctx.pop();
                ctx.pop();
                out
            }
            other => Err(TypeError::NotAPair {
                term: scrutinee.to_string(),
                found: other.to_string(),
            }),
        },
        Term::If(c, a, b) => {
            expect(ctx, c, &Type::Bool)?;
            let ta = infer(ctx, a)?;
            expect(ctx, b, &ta)?;
            Ok(ta)
        }
        Term::Lam { param, ty, body } => {
            ctx.push(param.clone(), ty.clone());
            let out = infer(ctx, body);
            ctx.pop();
            Ok(Type::arrow(ty.clone(), out?))
        }
        Term::App(f, a) => match infer(ctx, f)? {
            Type::Arrow(dom, cod) => {
                expect(ctx, a, &dom)?;
                Ok(*cod)
            }
            other => Err(TypeError::NotAFunction {
                term: f.to_string(),
                found: other.to_string(),
            }),
        },
        Term::Mu {
            fun,
            param,
            dom,
            cod,
            body,
        } => {
            let fun_ty = Type::arrow(dom.clone(), cod.clone());
            ctx.push(fun.clone(), fun_ty.clone());
            ctx.push(param.clone(), dom.clone());
            let out = expect(ctx, body, cod);
            ctx.pop();
            ctx.pop();
            out.map(|_| fun_ty)
        }
        Term::Sample => Ok(Type::Real),
        Term::Score(a) => {
            expect(ctx, a, &Type::Real)?;
            Ok(Type::Unit)
        }
        Term::DualSample => Ok(Type::prod(Type::Real, Type::Real)),
        Term::DualScore(a) => {
            expect(ctx, a, &Type::prod(Type::Real, Type::Real))?;
            Ok(Type::Unit)
        }
        Term::Let {
            name,
            ty,
            bound,
            body,
        } => {
            let bound_ty = infer(ctx, bound)?;
            if let Some(ann) = ty {
                if ann != &bound_ty {
                    return Err(mismatch(bound, ann, &bound_ty));
                }
            }
            ctx.push(name.clone(), bound_ty);
            let out = infer(ctx, body);
            ctx.pop();
            out
        }
    }
}
