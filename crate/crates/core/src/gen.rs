//! Random well-typed terms, for property tests and fuzzing.
//!
//! Generation is type-directed: every produced term typechecks at the
//! requested type in the given context. Recursive functions are generated
//! without any termination argument, so some terms diverge.

use crate::prims::{Prim, PrimOp};
use crate::rng::Stream;
use crate::syntax::{name, Name, Term, Type};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GenConfig {
    pub depth: usize,
    /// Allow `sample` and `score`.
    pub probabilistic: bool,
    /// Allow `mu`.
    pub recursion: bool,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            depth: 4,
            probabilistic: false,
            recursion: true,
        }
    }
}

pub struct Generator<'a> {
    rng: &'a mut Stream,
    cfg: GenConfig,
    fresh: usize,
}

const LITERALS: [f64; 8] = [0.0, 1.0, -1.0, 0.5, 2.0, 3.0, -0.25, 10.0];
const UNARY: [PrimOp; 7] = [
    PrimOp::Neg,
    PrimOp::Exp,
    PrimOp::Log,
    PrimOp::Sin,
    PrimOp::Cos,
    PrimOp::Sqrt,
    PrimOp::Abs,
];
const BINARY: [PrimOp; 6] = [
    PrimOp::Add,
    PrimOp::Sub,
    PrimOp::Mul,
    PrimOp::Div,
    PrimOp::Min,
    PrimOp::Max,
];
const COMPARE: [PrimOp; 5] = [PrimOp::Lt, PrimOp::Le, PrimOp::Gt, PrimOp::Ge, PrimOp::Eq];

impl<'a> Generator<'a> {
    pub fn new(rng: &'a mut Stream, cfg: GenConfig) -> Generator<'a> {
        Generator { rng, cfg, fresh: 0 }
    }

    fn below(&mut self, n: usize) -> usize {
        (self.rng.next_u64() % n as u64) as usize
    }

    fn coin(&mut self, p: f64) -> bool {
        self.rng.uniform() < p
    }

    fn fresh(&mut self, prefix: &str) -> Name {
        self.fresh += 1;
        name(&format!("{prefix}{}", self.fresh))
    }

    fn literal(&mut self) -> f64 {
        if self.coin(0.7) {
            LITERALS[self.below(LITERALS.len())]
        } else {
            (self.rng.uniform_in(-4.0, 4.0) * 8.0).round() / 8.0
        }
    }

    /// A random type built from `real`, `bool` and small products.
    pub fn ty(&mut self, depth: usize) -> Type {
        match (depth, self.below(6)) {
            (0, _) => Type::Real,
            (_, k) if k < 3 => Type::Real,
            (_, 3) => Type::Bool,
            (d, 4) => Type::prod(self.ty(d - 1), self.ty(d - 1)),
            (d, _) => Type::arrow(Type::Real, self.ty(d - 1)),
        }
    }

    pub fn closed(&mut self, ty: &Type) -> Term {
        self.term(&mut Vec::new(), ty, self.cfg.depth)
    }

    pub fn term(&mut self, ctx: &mut Vec<(Name, Type)>, ty: &Type, depth: usize) -> Term {
        if depth == 0 || self.coin(0.15) {
            return self.leaf(ctx, ty);
        }
        // Calls of function variables whose result type matches.
        let callers: Vec<(Name, Type)> = ctx
            .iter()
            .filter_map(|(n, t)| match t {
                Type::Arrow(dom, cod) if **cod == *ty => Some((n.clone(), (**dom).clone())),
                _ => None,
            })
            .collect();
        if !callers.is_empty() && self.coin(0.2) {
            let (f, dom) = callers[self.below(callers.len())].clone();
            let arg = self.term(ctx, &dom, depth - 1);
            return Term::app(Term::Var(f), arg);
        }
        match self.below(5) {
            0 => {
                let c = self.term(ctx, &Type::Bool, depth - 1);
                let a = self.term(ctx, ty, depth - 1);
                let b = self.term(ctx, ty, depth - 1);
                return Term::if_(c, a, b);
            }
            1 => {
                let (a, b) = (self.ty(1), self.ty(1));
                let scrutinee = self.term(ctx, &Type::prod(a.clone(), b.clone()), depth - 1);
                let (l, r) = (self.fresh("l"), self.fresh("r"));
                ctx.push((l.clone(), a));
                ctx.push((r.clone(), b));
                let body = self.term(ctx, ty, depth - 1);
                ctx.truncate(ctx.len() - 2);
                return Term::match_pair(scrutinee, &l, &r, body);
            }
            2 => {
                let arg_ty = self.ty(1);
                let arg = self.term(ctx, &arg_ty, depth - 1);
                let x = self.fresh("x");
                ctx.push((x.clone(), arg_ty.clone()));
                let body = self.term(ctx, ty, depth - 1);
                ctx.pop();
                return Term::app(Term::lam(&x, arg_ty, body), arg);
            }
            3 if self.cfg.recursion => {
                let f = self.fresh("f");
                let x = self.fresh("x");
                let fun_ty = Type::arrow(Type::Real, ty.clone());
                ctx.push((f.clone(), fun_ty));
                ctx.push((x.clone(), Type::Real));
                let body = self.term(ctx, ty, depth - 1);
                ctx.truncate(ctx.len() - 2);
                let arg = self.term(ctx, &Type::Real, depth - 1);
                return Term::app(Term::mu(&f, &x, Type::Real, ty.clone(), body), arg);
            }
            4 if self.cfg.probabilistic => {
                let w = self.term(ctx, &Type::Real, depth - 1);
                let rest = self.term(ctx, ty, depth - 1);
                let x = self.fresh("s");
                return Term::app(Term::lam(&x, Type::Unit, rest), Term::score(w));
            }
            _ => {}
        }
        match ty {
            Type::Real => {
                if self.cfg.probabilistic && self.coin(0.25) {
                    return Term::Sample;
                }
                if self.coin(0.4) {
                    let op = UNARY[self.below(UNARY.len())];
                    let a = self.term(ctx, ty, depth - 1);
                    Term::prim(Prim::primal(op), vec![a])
                } else {
                    let op = BINARY[self.below(BINARY.len())];
                    let a = self.term(ctx, ty, depth - 1);
                    let b = self.term(ctx, ty, depth - 1);
                    Term::prim(Prim::primal(op), vec![a, b])
                }
            }
            Type::Bool => {
                let op = COMPARE[self.below(COMPARE.len())];
                let a = self.term(ctx, &Type::Real, depth - 1);
                let b = self.term(ctx, &Type::Real, depth - 1);
                Term::prim(Prim::primal(op), vec![a, b])
            }
            Type::Unit => {
                if self.cfg.probabilistic {
                    Term::score(self.term(ctx, &Type::Real, depth - 1))
                } else {
                    Term::Unit
                }
            }
            Type::Prod(a, b) => {
                let l = self.term(ctx, a, depth - 1);
                let r = self.term(ctx, b, depth - 1);
                Term::pair(l, r)
            }
            Type::Arrow(a, b) => {
                if self.cfg.recursion && self.coin(0.3) {
                    let f = self.fresh("f");
                    let x = self.fresh("x");
                    ctx.push((f.clone(), ty.clone()));
                    ctx.push((x.clone(), (**a).clone()));
                    let body = self.term(ctx, b, depth - 1);
                    ctx.truncate(ctx.len() - 2);
                    Term::mu(&f, &x, (**a).clone(), (**b).clone(), body)
                } else {
                    let x = self.fresh("x");
                    ctx.push((x.clone(), (**a).clone()));
                    let body = self.term(ctx, b, depth - 1);
                    ctx.pop();
                    Term::lam(&x, (**a).clone(), body)
                }
            }
        }
    }

    fn leaf(&mut self, ctx: &mut Vec<(Name, Type)>, ty: &Type) -> Term {
        let vars: Vec<Name> = ctx
            .iter()
            .filter(|(_, t)| t == ty)
            .map(|(n, _)| n.clone())
            .collect();
        if !vars.is_empty() && self.coin(0.6) {
            return Term::Var(vars[self.below(vars.len())].clone());
        }
        match ty {
            Type::Real => {
                if self.cfg.probabilistic && self.coin(0.3) {
                    Term::Sample
                } else {
                    Term::Real(self.literal())
                }
            }
            Type::Bool => Term::Bool(self.coin(0.5)),
            Type::Unit => Term::Unit,
            Type::Prod(a, b) => {
                let l = self.leaf(ctx, a);
                let r = self.leaf(ctx, b);
                Term::pair(l, r)
            }
            Type::Arrow(a, b) => {
                let x = self.fresh("x");
                ctx.push((x.clone(), (**a).clone()));
                let body = self.leaf(ctx, b);
                ctx.pop();
                Term::lam(&x, (**a).clone(), body)
            }
        }
    }
}

/// A closed term of type `ty` generated from stream `(seed, index)`.
pub fn closed_term(seed: u64, index: u64, ty: &Type, cfg: GenConfig) -> Term {
    let mut rng = Stream::new(seed, index);
    Generator::new(&mut rng, cfg).closed(ty)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::typecheck::{typecheck, Context};

    #[test]
    fn generated_terms_typecheck() {
        for i in 0..500 {
            let mut rng = Stream::new(11, i);
            let mut g = Generator::new(
                &mut rng,
                GenConfig {
                    probabilistic: i % 2 == 0,
                    ..GenConfig::default()
                },
            );
            let ty = g.ty(2);
            let t = g.closed(&ty);
            assert_eq!(typecheck(&Context::new(), &t), Ok(ty), "{t}");
        }
    }

    #[test]
    fn deterministic_config_has_no_effects() {
        for i in 0..200 {
            let t = closed_term(5, i, &Type::Real, GenConfig::default());
            assert!(t.is_deterministic());
        }
    }
}
