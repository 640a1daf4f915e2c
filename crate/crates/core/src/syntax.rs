//! Abstract syntax of the calculus and its concrete pretty printer.
//!
//! Terms are immutable trees with `Arc`-shared children so that the
//! interpreter can hold on to subterms in its continuation frames and
//! closures without copying.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use crate::prims::Prim;

pub type Name = Arc<str>;
pub type TermRef = Arc<Term>;

/// Types of the calculus. `Unit` is only needed as the result of `score`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Type {
    Real,
    Bool,
    Unit,
    Prod(Box<Type>, Box<Type>),
    Arrow(Box<Type>, Box<Type>),
}

impl Type {
    pub fn prod(a: Type, b: Type) -> Type {
        Type::Prod(Box::new(a), Box::new(b))
    }

    pub fn arrow(a: Type, b: Type) -> Type {
        Type::Arrow(Box::new(a), Box::new(b))
    }

    /// `real * (real * (... * real))` with `n` components; `real` for n = 1.
    pub fn real_tuple(n: usize) -> Type {
        assert!(n > 0, "empty tuple type");
        let mut ty = Type::Real;
        for _ in 1..n {
            ty = Type::prod(Type::Real, ty);
        }
        ty
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Term {
    Var(Name),
    Real(f64),
    Bool(bool),
    Unit,
    Prim(Prim, Vec<TermRef>),
    Pair(TermRef, TermRef),
    Match {
        scrutinee: TermRef,
        left: Name,
        right: Name,
        body: TermRef,
    },
    If(TermRef, TermRef, TermRef),
    Lam {
        param: Name,
        ty: Type,
        body: TermRef,
    },
    App(TermRef, TermRef),
    Mu {
        fun: Name,
        param: Name,
        dom: Type,
        cod: Type,
        body: TermRef,
    },
    Sample,
    Score(TermRef),
    /// Dual-number translation of `sample`: yields `(r, dr)` from a trace
    /// that carries a tangent per slot.
    DualSample,
    /// Dual-number translation of `score`: multiplies the dual weight.
    DualScore(TermRef),
    /// Surface sugar; removed by [`crate::parser::parse`].
    Let {
        name: Name,
        ty: Option<Type>,
        bound: TermRef,
        body: TermRef,
    },
}

pub fn name(s: &str) -> Name {
    Arc::from(s)
}

// Small constructors, mostly for tests and program builders.
impl Term {
    pub fn var(x: &str) -> Term {
        Term::Var(name(x))
    }

    pub fn prim(p: Prim, args: Vec<Term>) -> Term {
        Term::Prim(p, args.into_iter().map(Arc::new).collect())
    }

    pub fn pair(a: Term, b: Term) -> Term {
        Term::Pair(Arc::new(a), Arc::new(b))
    }

    pub fn app(f: Term, a: Term) -> Term {
        Term::App(Arc::new(f), Arc::new(a))
    }

    pub fn lam(x: &str, ty: Type, body: Term) -> Term {
        Term::Lam {
            param: name(x),
            ty,
            body: Arc::new(body),
        }
    }

    pub fn mu(f: &str, x: &str, dom: Type, cod: Type, body: Term) -> Term {
        Term::Mu {
            fun: name(f),
            param: name(x),
            dom,
            cod,
            body: Arc::new(body),
        }
    }

    pub fn if_(c: Term, t: Term, e: Term) -> Term {
        Term::If(Arc::new(c), Arc::new(t), Arc::new(e))
    }

    pub fn match_pair(s: Term, x: &str, y: &str, body: Term) -> Term {
        Term::Match {
            scrutinee: Arc::new(s),
            left: name(x),
            right: name(y),
            body: Arc::new(body),
        }
    }

    pub fn score(t: Term) -> Term {
        Term::Score(Arc::new(t))
    }

    /// True when no `sample`/`score` (plain or dual) occurs anywhere.
    pub fn is_deterministic(&self) -> bool {
        match self {
            Term::Sample | Term::Score(_) | Term::DualSample | Term::DualScore(_) => false,
            Term::Var(_) | Term::Real(_) | Term::Bool(_) | Term::Unit => true,
            Term::Prim(_, args) => args.iter().all(|a| a.is_deterministic()),
            Term::Pair(a, b) | Term::App(a, b) => a.is_deterministic() && b.is_deterministic(),
            Term::Match {
                scrutinee, body, ..
            } => scrutinee.is_deterministic() && body.is_deterministic(),
            Term::If(c, t, e) => {
                c.is_deterministic() && t.is_deterministic() && e.is_deterministic()
            }
            Term::Lam { body, .. } | Term::Mu { body, .. } => body.is_deterministic(),
            Term::Let { bound, body, .. } => bound.is_deterministic() && body.is_deterministic(),
        }
    }

    pub fn contains_let(&self) -> bool {
        match self {
            Term::Let { .. } => true,
            Term::Var(_)
            | Term::Real(_)
            | Term::Bool(_)
            | Term::Unit
            | Term::Sample
            | Term::DualSample => false,
            Term::Prim(_, args) => args.iter().any(|a| a.contains_let()),
            Term::Pair(a, b) | Term::App(a, b) => a.contains_let() || b.contains_let(),
            Term::Match {
                scrutinee, body, ..
            } => scrutinee.contains_let() || body.contains_let(),
            Term::If(c, t, e) => c.contains_let() || t.contains_let() || e.contains_let(),
            Term::Lam { body, .. } | Term::Mu { body, .. } => body.contains_let(),
            Term::Score(t) | Term::DualScore(t) => t.contains_let(),
        }
    }

    pub fn size(&self) -> usize {
        1 + match self {
            Term::Var(_)
            | Term::Real(_)
            | Term::Bool(_)
            | Term::Unit
            | Term::Sample
            | Term::DualSample => 0,
            Term::Prim(_, args) => args.iter().map(|a| a.size()).sum(),
            Term::Pair(a, b) | Term::App(a, b) => a.size() + b.size(),
            Term::Match {
                scrutinee, body, ..
            } => scrutinee.size() + body.size(),
            Term::If(c, t, e) => c.size() + t.size() + e.size(),
            Term::Lam { body, .. } | Term::Mu { body, .. } => body.size(),
            Term::Score(t) | Term::DualScore(t) => t.size(),
            Term::Let { bound, body, .. } => bound.size() + body.size(),
        }
    }
}

pub fn free_vars(t: &Term) -> BTreeSet<Name> {
    let mut out = BTreeSet::new();
    collect_free(t, &mut Vec::new(), &mut out);
    out
}

fn collect_free(t: &Term, bound: &mut Vec<Name>, out: &mut BTreeSet<Name>) {
    match t {
        Term::Var(x) => {
            if !bound.contains(x) {
                out.insert(x.clone());
            }
        }
        Term::Real(_) | Term::Bool(_) | Term::Unit | Term::Sample | Term::DualSample => {}
        Term::Prim(_, args) => args.iter().for_each(|a| collect_free(a, bound, out)),
        Term::Pair(a, b) | Term::App(a, b) => {
            collect_free(a, bound, out);
            collect_free(b, bound, out);
        }
        Term::Match {
            scrutinee,
            left,
            right,
            body,
        } => {
            collect_free(scrutinee, bound, out);
            bound.push(left.clone());
            bound.push(right.clone());
            collect_free(body, bound, out);
            bound.truncate(bound.len() - 2);
        }
        Term::If(c, a, b) => {
            collect_free(c, bound, out);
            collect_free(a, bound, out);
            collect_free(b, bound, out);
        }
        Term::Lam { param, body, .. } => {
            bound.push(param.clone());
            collect_free(body, bound, out);
            bound.pop();
        }
        Term::Mu {
            fun, param, body, ..
        } => {
            bound.push(fun.clone());
            bound.push(param.clone());
            collect_free(body, bound, out);
            bound.truncate(bound.len() - 2);
        }
        Term::Score(a) | Term::DualScore(a) => collect_free(a, bound, out),
        Term::Let {
            name,
            bound: b,
            body,
            ..
        } => {
            collect_free(b, bound, out);
            bound.push(name.clone());
            collect_free(body, bound, out);
            bound.pop();
        }
    }
}

/// Capture-avoiding substitution `t[v/x]`. Binders that would capture a
/// free variable of `v` are renamed with a primed suffix.
pub fn substitute(t: &Term, x: &Name, v: &Term) -> Term {
    let fv = free_vars(v);
    subst(t, x, v, &fv)
}

fn fresh(base: &Name, avoid: &BTreeSet<Name>, body: &Term) -> Name {
    let body_fv = free_vars(body);
    let mut k = 1usize;
    loop {
        let cand: Name = Arc::from(format!("{base}{}", "'".repeat(k)));
        if !avoid.contains(&cand) && !body_fv.contains(&cand) {
            return cand;
        }
        k += 1;
    }
}

fn rename(t: &Term, from: &Name, to: &Name) -> Term {
    subst(
        t,
        from,
        &Term::Var(to.clone()),
        &BTreeSet::from([to.clone()]),
    )
}

fn subst(t: &Term, x: &Name, v: &Term, fv: &BTreeSet<Name>) -> Term {
    let go = |s: &TermRef| Arc::new(subst(s, x, v, fv));
    match t {
        Term::Var(y) if y == x => v.clone(),
        Term::Var(_)
        | Term::Real(_)
        | Term::Bool(_)
        | Term::Unit
        | Term::Sample
        | Term::DualSample => t.clone(),
        Term::Prim(p, args) => Term::Prim(*p, args.iter().map(go).collect()),
        Term::Pair(a, b) => Term::Pair(go(a), go(b)),
        Term::App(a, b) => Term::App(go(a), go(b)),
        Term::If(c, a, b) => Term::If(go(c), go(a), go(b)),
        Term::Score(a) => Term::Score(go(a)),
        Term::DualScore(a) => Term::DualScore(go(a)),
        Term::Lam { param, ty, body } => {
            if param == x {
                return t.clone();
            }
            let (param, body) = avoid_capture(param, body, fv);
            Term::Lam {
                param,
                ty: ty.clone(),
                body: Arc::new(subst(&body, x, v, fv)),
            }
        }
        Term::Mu {
            fun,
            param,
            dom,
            cod,
            body,
        } => {
            if fun == x || param == x {
                return t.clone();
            }
            let (fun, body) = avoid_capture(fun, body, fv);
            let (param, body) = avoid_capture(param, &Arc::new(body), fv);
            Term::Mu {
                fun,
                param,
                dom: dom.clone(),
                cod: cod.clone(),
                body: Arc::new(subst(&body, x, v, fv)),
            }
        }
        Term::Match {
            scrutinee,
            left,
            right,
            body,
        } => {
            let scrutinee = go(scrutinee);
            if left == x || right == x {
                return Term::Match {
                    scrutinee,
                    left: left.clone(),
                    right: right.clone(),
                    body: body.clone(),
                };
            }
            let (left, body) = avoid_capture(left, body, fv);
            let (right, body) = avoid_capture(right, &Arc::new(body), fv);
            Term::Match {
                scrutinee,
                left,
                right,
                body: Arc::new(subst(&body, x, v, fv)),
            }
        }
        Term::Let {
            name,
            ty,
            bound,
            body,
        } => {
            let bound = go(bound);
            if name == x {
                return Term::Let {
                    name: name.clone(),
                    ty: ty.clone(),
                    bound,
                    body: body.clone(),
                };
            }
            let (name, body) = avoid_capture(name, body, fv);
            Term::Let {
                name,
                ty: ty.clone(),
                bound,
                body: Arc::new(subst(&body, x, v, fv)),
            }
        }
    }
}

fn avoid_capture(binder: &Name, body: &TermRef, fv: &BTreeSet<Name>) -> (Name, Term) {
    if fv.contains(binder) {
        let fresh_name = fresh(binder, fv, body);
        let renamed = rename(body, binder, &fresh_name);
        (fresh_name, renamed)
    } else {
        (binder.clone(), (**body).clone())
    }
}

// ---------------------------------------------------------------------------
// Pretty printing. The output parses back to the same term (for terms
// without `Let`, whose annotation-free form does not round-trip).

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_type(f, self, 0)
    }
}

fn write_type(f: &mut fmt::Formatter<'_>, ty: &Type, ctx: u8) -> fmt::Result {
    match ty {
        Type::Real => f.write_str("real"),
        Type::Bool => f.write_str("bool"),
        Type::Unit => f.write_str("unit"),
        Type::Prod(a, b) => {
            if ctx > 1 {
                f.write_str("(")?;
            }
            write_type(f, a, 2)?;
            f.write_str(" * ")?;
            write_type(f, b, 1)?;
            if ctx > 1 {
                f.write_str(")")?;
            }
            Ok(())
        }
        Type::Arrow(a, b) => {
            if ctx > 0 {
                f.write_str("(")?;
            }
            write_type(f, a, 1)?;
            f.write_str(" -> ")?;
            write_type(f, b, 0)?;
            if ctx > 0 {
                f.write_str(")")?;
            }
            Ok(())
        }
    }
}

/// Formats a real literal so that lexing it yields the same bits.
pub fn real_literal(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x:?}")
    }
}

const TOP: u8 = 0;
const APP: u8 = 1;
const ATOM: u8 = 2;

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_term(f, self, TOP)
    }
}

fn write_term(f: &mut fmt::Formatter<'_>, t: &Term, ctx: u8) -> fmt::Result {
    let open =
        |f: &mut fmt::Formatter<'_>, need: bool| if need { f.write_str("(") } else { Ok(()) };
    let close =
        |f: &mut fmt::Formatter<'_>, need: bool| if need { f.write_str(")") } else { Ok(()) };
    match t {
        Term::Var(x) => f.write_str(x),
        Term::Real(x) => f.write_str(&real_literal(*x)),
        Term::Bool(b) => write!(f, "{b}"),
        Term::Unit => f.write_str("()"),
        Term::Sample => f.write_str("sample"),
        Term::DualSample => f.write_str("dual_sample"),
        Term::Prim(p, args) => {
            write!(f, "{}(", p.surface_name())?;
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write_term(f, a, TOP)?;
            }
            f.write_str(")")
        }
        Term::Pair(a, b) => {
            f.write_str("(")?;
            write_term(f, a, TOP)?;
            f.write_str(", ")?;
            write_term(f, b, TOP)?;
            f.write_str(")")
        }
        Term::Score(a) => {
            f.write_str("score(")?;
            write_term(f, a, TOP)?;
            f.write_str(")")
        }
        Term::DualScore(a) => {
            f.write_str("dual_score(")?;
            write_term(f, a, TOP)?;
            f.write_str(")")
        }
        Term::App(a, b) => {
            let need = ctx > APP;
            open(f, need)?;
            write_term(f, a, APP)?;
            f.write_str(" ")?;
            write_term(f, b, ATOM)?;
            close(f, need)
        }
        Term::Lam { param, ty, body } => {
            let need = ctx > TOP;
            open(f, need)?;
            write!(f, "fun ({param} : {ty}) -> ")?;
            write_term(f, body, TOP)?;
            close(f, need)
        }
        Term::Mu {
            fun,
            param,
            dom,
            cod,
            body,
        } => {
            let need = ctx > TOP;
            open(f, need)?;
            // The codomain is parenthesised when it is an arrow, since the
            // `->` after it would otherwise be read as part of the type.
            let cod_s = match cod {
                Type::Arrow(..) => format!("({cod})"),
                _ => cod.to_string(),
            };
            write!(f, "mu {fun} ({param} : {dom}) : {cod_s} -> ")?;
            write_term(f, body, TOP)?;
            close(f, need)
        }
        Term::If(c, a, b) => {
            let need = ctx > TOP;
            open(f, need)?;
            f.write_str("if ")?;
            write_term(f, c, TOP)?;
            f.write_str(" then ")?;
            write_term(f, a, TOP)?;
            f.write_str(" else ")?;
            write_term(f, b, TOP)?;
            close(f, need)
        }
        Term::Match {
            scrutinee,
            left,
            right,
            body,
        } => {
            let need = ctx > TOP;
            open(f, need)?;
            f.write_str("match ")?;
            write_term(f, scrutinee, TOP)?;
            write!(f, " with ({left}, {right}) -> ")?;
            write_term(f, body, TOP)?;
            close(f, need)
        }
        Term::Let {
            name,
            ty,
            bound,
            body,
        } => {
            let need = ctx > TOP;
            open(f, need)?;
            match ty {
                Some(ty) => write!(f, "let {name} : {ty} = ")?,
                None => write!(f, "let {name} = ")?,
            }
            write_term(f, bound, TOP)?;
            f.write_str(" in ")?;
            write_term(f, body, TOP)?;
            close(f, need)
        }
    }
}
