//! Lexer and recursive-descent parser for the surface syntax.
//!
//! ```text
//! ty := "real" | "bool" | "unit" | ty "*" ty | ty "->" ty | "(" ty ")"
//! t  := ident | float | "true" | "false" | "()" | "(" t "," t {"," t} ")"
//!     | "match" t "with" "(" ident "," ident ")" "->" t
//!     | "fun" "(" ident ":" ty ")" "->" t | t t
//!     | "mu" ident "(" ident ":" ty ")" ":" ty "->" t
//!     | "if" t "then" t "else" t
//!     | prim "(" t {"," t} ")" | "sample" | "score" "(" t ")"
//!     | "let" ident [":" ty] "=" t "in" t | t ";" t | "(" t ")"
//! ```
//!
//! `*` and `->` are right associative, `*` binds tighter. An identifier
//! followed by `(` is a primitive call unless the identifier is a bound
//! variable, in which case it is an application. `let` and `;` are
//! desugared into immediate application.

use std::sync::Arc;

use thiserror::Error;

use crate::prims::{self, PrimError};
use crate::syntax::{name, Name, Term, Type};
use crate::typecheck::{infer, Context, TypeError};

#[derive(Clone, Debug, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at {line}:{col}: {msg}")]
    Syntax {
        line: usize,
        col: usize,
        msg: String,
    },
    #[error("unknown primitive `{name}` at {line}:{col}")]
    UnknownPrimitive {
        name: String,
        line: usize,
        col: usize,
    },
    #[error("cannot desugar let: {0}")]
    Let(#[from] TypeError),
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    Kw(&'static str),
    Sym(&'static str),
    Eof,
}

const KEYWORDS: &[&str] = &[
    "fun",
    "mu",
    "if",
    "then",
    "else",
    "match",
    "with",
    "let",
    "in",
    "true",
    "false",
    "sample",
    "score",
    "dual_sample",
    "dual_score",
    "real",
    "bool",
    "unit",
];

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let err = |line, col, msg: String| ParseError::Syntax { line, col, msg };
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        let advance = |n: usize, i: &mut usize, col: &mut usize| {
            *i += n;
            *col += n;
        };
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            advance(1, &mut i, &mut col);
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let starts_number = |j: usize| {
            j < chars.len()
                && (chars[j].is_ascii_digit()
                    || (chars[j] == '.' && j + 1 < chars.len() && chars[j + 1].is_ascii_digit()))
        };
        if c == '-' && i + 1 < chars.len() && chars[i + 1] == '>' {
            out.push(Token {
                tok: Tok::Sym("->"),
                line: tl,
                col: tc,
            });
            advance(2, &mut i, &mut col);
            continue;
        }
        let neg_word = |word: &str| {
            c == '-'
                && chars[i + 1..]
                    .iter()
                    .take(word.len())
                    .copied()
                    .eq(word.chars())
        };
        if c == '-' && neg_word("inf") {
            out.push(Token {
                tok: Tok::Num(f64::NEG_INFINITY),
                line: tl,
                col: tc,
            });
            advance(4, &mut i, &mut col);
            continue;
        }
        if starts_number(i) || (c == '-' && starts_number(i + 1)) {
            let start = i;
            let mut j = i + 1;
            while j < chars.len() && (chars[j].is_ascii_digit() || chars[j] == '.') {
                j += 1;
            }
            if j < chars.len() && (chars[j] == 'e' || chars[j] == 'E') {
                let mut k = j + 1;
                if k < chars.len() && (chars[k] == '+' || chars[k] == '-') {
                    k += 1;
                }
                if k < chars.len() && chars[k].is_ascii_digit() {
                    j = k;
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                }
            }
            let text: String = chars[start..j].iter().collect();
            let value: f64 = text
                .parse()
                .map_err(|_| err(tl, tc, format!("malformed number `{text}`")))?;
            out.push(Token {
                tok: Tok::Num(value),
                line: tl,
                col: tc,
            });
            advance(j - i, &mut i, &mut col);
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let start = i;
            let mut j = i + 1;
            while j < chars.len()
                && (chars[j].is_alphanumeric() || chars[j] == '_' || chars[j] == '\'')
            {
                j += 1;
            }
            let word: String = chars[start..j].iter().collect();
            let tok = match word.as_str() {
                "inf" => Tok::Num(f64::INFINITY),
                "nan" => Tok::Num(f64::NAN),
                w => match KEYWORDS.iter().find(|k| **k == w) {
                    Some(k) => Tok::Kw(k),
                    None => Tok::Ident(word),
                },
            };
            out.push(Token {
                tok,
                line: tl,
                col: tc,
            });
            advance(j - i, &mut i, &mut col);
            continue;
        }
        let sym = match c {
            '(' => "(",
            ')' => ")",
            ',' => ",",
            ':' => ":",
            '*' => "*",
            '=' => "=",
            ';' => ";",
            _ => return Err(err(tl, tc, format!("unexpected character `{c}`"))),
        };
        out.push(Token {
            tok: Tok::Sym(sym),
            line: tl,
            col: tc,
        });
        advance(1, &mut i, &mut col);
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        col,
    });
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    scope: Vec<Name>,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek2(&self) -> &Tok {
        &self.toks[(self.pos + 1).min(self.toks.len() - 1)].tok
    }

    fn here(&self) -> (usize, usize) {
        let t = &self.toks[self.pos];
        (t.line, t.col)
    }

    fn fail<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        let (line, col) = self.here();
        Err(ParseError::Syntax {
            line,
            col,
            msg: msg.into(),
        })
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if matches!(self.peek(), Tok::Sym(x) if *x == s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> Result<(), ParseError> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.fail(format!("expected `{s}`, found {}", describe(self.peek())))
        }
    }

    fn expect_kw(&mut self, k: &str) -> Result<(), ParseError> {
        if matches!(self.peek(), Tok::Kw(x) if *x == k) {
            self.bump();
            Ok(())
        } else {
            self.fail(format!("expected `{k}`, found {}", describe(self.peek())))
        }
    }

    fn ident(&mut self) -> Result<Name, ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(name(&s))
            }
            other => self.fail(format!("expected identifier, found {}", describe(&other))),
        }
    }

    // ty := prod ["->" ty]
    fn ty(&mut self) -> Result<Type, ParseError> {
        let dom = self.prod_ty()?;
        if self.eat_sym("->") {
            Ok(Type::arrow(dom, self.ty()?))
        } else {
            Ok(dom)
        }
    }

    // prod := atom ["*" prod]
    fn prod_ty(&mut self) -> Result<Type, ParseError> {
        let a = self.atom_ty()?;
        if self.eat_sym("*") {
            Ok(Type::prod(a, self.prod_ty()?))
        } else {
            Ok(a)
        }
    }

    fn atom_ty(&mut self) -> Result<Type, ParseError> {
        match self.bump() {
            Tok::Kw("real") => Ok(Type::Real),
            Tok::Kw("bool") => Ok(Type::Bool),
            Tok::Kw("unit") => Ok(Type::Unit),
            Tok::Sym("(") => {
                let t = self.ty()?;
                self.expect_sym(")")?;
                Ok(t)
            }
            other => {
                self.pos -= 1;
                self.fail(format!("expected a type, found {}", describe(&other)))
            }
        }
    }

    fn with_bound<T>(
        &mut self,
        names: &[Name],
        f: impl FnOnce(&mut Self) -> Result<T, ParseError>,
    ) -> Result<T, ParseError> {
        self.scope.extend(names.iter().cloned());
        let out = f(self);
        self.scope.truncate(self.scope.len() - names.len());
        out
    }

    // expr := nonseq [";" expr]
    fn expr(&mut self) -> Result<Term, ParseError> {
        let first = self.nonseq()?;
        if self.eat_sym(";") {
            let rest = self.with_bound(&[name("_")], |p| p.expr())?;
            Ok(Term::Let {
                name: name("_"),
                ty: None,
                bound: Arc::new(first),
                body: Arc::new(rest),
            })
        } else {
            Ok(first)
        }
    }

    fn nonseq(&mut self) -> Result<Term, ParseError> {
        match self.peek() {
            Tok::Kw("fun") => {
                self.bump();
                self.expect_sym("(")?;
                let x = self.ident()?;
                self.expect_sym(":")?;
                let ty = self.ty()?;
                self.expect_sym(")")?;
                self.expect_sym("->")?;
                let body = self.with_bound(std::slice::from_ref(&x), |p| p.expr())?;
                Ok(Term::Lam {
                    param: x,
                    ty,
                    body: Arc::new(body),
                })
            }
            Tok::Kw("mu") => {
                self.bump();
                let f = self.ident()?;
                self.expect_sym("(")?;
                let x = self.ident()?;
                self.expect_sym(":")?;
                let dom = self.ty()?;
                self.expect_sym(")")?;
                self.expect_sym(":")?;
                let cod = self.prod_ty()?;
                self.expect_sym("->")?;
                let body = self.with_bound(&[f.clone(), x.clone()], |p| p.expr())?;
                Ok(Term::Mu {
                    fun: f,
                    param: x,
                    dom,
                    cod,
                    body: Arc::new(body),
                })
            }
            Tok::Kw("if") => {
                self.bump();
                let c = self.expr()?;
                self.expect_kw("then")?;
                let a = self.expr()?;
                self.expect_kw("else")?;
                let b = self.expr()?;
                Ok(Term::if_(c, a, b))
            }
            Tok::Kw("match") => {
                self.bump();
                let s = self.expr()?;
                self.expect_kw("with")?;
                self.expect_sym("(")?;
                let x = self.ident()?;
                self.expect_sym(",")?;
                let y = self.ident()?;
                self.expect_sym(")")?;
                self.expect_sym("->")?;
                let body = self.with_bound(&[x.clone(), y.clone()], |p| p.expr())?;
                Ok(Term::Match {
                    scrutinee: Arc::new(s),
                    left: x,
                    right: y,
                    body: Arc::new(body),
                })
            }
            Tok::Kw("let") => {
                self.bump();
                let x = self.ident()?;
                let ty = if self.eat_sym(":") {
                    Some(self.ty()?)
                } else {
                    None
                };
                self.expect_sym("=")?;
                let bound = self.expr()?;
                self.expect_kw("in")?;
                let body = self.with_bound(std::slice::from_ref(&x), |p| p.expr())?;
                Ok(Term::Let {
                    name: x,
                    ty,
                    bound: Arc::new(bound),
                    body: Arc::new(body),
                })
            }
            _ => self.app(),
        }
    }

    fn starts_atom(&self) -> bool {
        matches!(
            self.peek(),
            Tok::Ident(_)
                | Tok::Num(_)
                | Tok::Sym("(")
                | Tok::Kw("true" | "false" | "sample" | "score" | "dual_sample" | "dual_score")
        )
    }

    fn app(&mut self) -> Result<Term, ParseError> {
        let mut t = self.atom()?;
        while self.starts_atom() {
            let a = self.atom()?;
            t = Term::app(t, a);
        }
        Ok(t)
    }

    fn call_args(&mut self) -> Result<Vec<Term>, ParseError> {
        self.expect_sym("(")?;
        let mut args = vec![self.expr()?];
        while self.eat_sym(",") {
            args.push(self.expr()?);
        }
        self.expect_sym(")")?;
        Ok(args)
    }

    fn atom(&mut self) -> Result<Term, ParseError> {
        let (line, col) = self.here();
        match self.peek().clone() {
            Tok::Num(x) => {
                self.bump();
                Ok(Term::Real(x))
            }
            Tok::Kw("true") => {
                self.bump();
                Ok(Term::Bool(true))
            }
            Tok::Kw("false") => {
                self.bump();
                Ok(Term::Bool(false))
            }
            Tok::Kw("sample") => {
                self.bump();
                Ok(Term::Sample)
            }
            Tok::Kw("dual_sample") => {
                self.bump();
                Ok(Term::DualSample)
            }
            Tok::Kw(k @ ("score" | "dual_score")) => {
                self.bump();
                self.expect_sym("(")?;
                let arg = Arc::new(self.expr()?);
                self.expect_sym(")")?;
                Ok(if k == "score" {
                    Term::Score(arg)
                } else {
                    Term::DualScore(arg)
                })
            }
            Tok::Ident(s) => {
                let bound = self.scope.iter().any(|n| **n == *s);
                if !bound && matches!(self.peek2(), Tok::Sym("(")) {
                    let prim = prims::resolve(&s).map_err(|PrimError::NotFound(n)| {
                        ParseError::UnknownPrimitive { name: n, line, col }
                    })?;
                    self.bump();
                    let args = self.call_args()?;
                    if args.len() != prim.arity() {
                        return Err(ParseError::Syntax {
                            line,
                            col,
                            msg: format!(
                                "primitive `{s}` takes {} arguments, got {}",
                                prim.arity(),
                                args.len()
                            ),
                        });
                    }
                    return Ok(Term::prim(prim, args));
                }
                self.bump();
                Ok(Term::Var(name(&s)))
            }
            Tok::Sym("(") => {
                self.bump();
                if self.eat_sym(")") {
                    return Ok(Term::Unit);
                }
                let first = self.expr()?;
                if self.eat_sym(",") {
                    let mut items = vec![first, self.expr()?];
                    while self.eat_sym(",") {
                        items.push(self.expr()?);
                    }
                    self.expect_sym(")")?;
                    let mut it = items.into_iter().rev();
                    let mut acc = it.next().expect("at least two items");
                    for item in it {
                        acc = Term::pair(item, acc);
                    }
                    Ok(acc)
                } else {
                    self.expect_sym(")")?;
                    Ok(first)
                }
            }
            other => self.fail(format!("expected a term, found {}", describe(&other))),
        }
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("identifier `{s}`"),
        Tok::Num(x) => format!("number {x}"),
        Tok::Kw(k) => format!("`{k}`"),
        Tok::Sym(s) => format!("`{s}`"),
        Tok::Eof => "end of input".to_string(),
    }
}

/// Parses without desugaring; `Let` nodes are kept.
pub fn parse_surface(src: &str) -> Result<Term, ParseError> {
    let mut p = Parser {
        toks: lex(src)?,
        pos: 0,
        scope: Vec::new(),
    };
    let t = p.expr()?;
    if *p.peek() != Tok::Eof {
        return p.fail(format!("trailing input: {}", describe(p.peek())));
    }
    Ok(t)
}

/// Parses and desugars a term. Free variables are allowed; a `let` whose
/// bound term mentions a variable of unknown type must carry an annotation.
pub fn parse(src: &str) -> Result<Term, ParseError> {
    let surface = parse_surface(src)?;
    Ok(desugar(&surface, &mut Context::new())?)
}

/// Replaces `let x = a in b` by `(fun (x : T) -> b) a`, where `T` is the
/// annotation or the type inferred for `a` under the enclosing binders.
pub fn desugar(t: &Term, ctx: &mut Context) -> Result<Term, TypeError> {
    let go = |s: &Arc<Term>, ctx: &mut Context| desugar(s, ctx).map(Arc::new);
    Ok(match t {
        Term::Var(_)
        | Term::Real(_)
        | Term::Bool(_)
        | Term::Unit
        | Term::Sample
        | Term::DualSample => t.clone(),
        Term::Prim(p, args) => Term::Prim(
            *p,
            args.iter().map(|a| go(a, ctx)).collect::<Result<_, _>>()?,
        ),
        Term::Pair(a, b) => Term::Pair(go(a, ctx)?, go(b, ctx)?),
        Term::App(a, b) => Term::App(go(a, ctx)?, go(b, ctx)?),
        Term::If(c, a, b) => Term::If(go(c, ctx)?, go(a, ctx)?, go(b, ctx)?),
        Term::Score(a) => Term::Score(go(a, ctx)?),
        Term::DualScore(a) => Term::DualScore(go(a, ctx)?),
        Term::Lam { param, ty, body } => {
            ctx.push(param.clone(), ty.clone());
            let body = go(body, ctx);
            ctx.pop();
            Term::Lam {
                param: param.clone(),
                ty: ty.clone(),
                body: body?,
            }
        }
        Term::Mu {
            fun,
            param,
            dom,
            cod,
            body,
        } => {
            ctx.push(fun.clone(), Type::arrow(dom.clone(), cod.clone()));
            ctx.push(param.clone(), dom.clone());
            let body = go(body, ctx);
            ctx.pop();
            ctx.pop();
            Term::Mu {
                fun: fun.clone(),
                param: param.clone(),
                dom: dom.clone(),
                cod: cod.clone(),
                body: body?,
            }
        }
        Term::Match {
            scrutinee,
            left,
            right,
            body,
        } => {
            let s = go(scrutinee, ctx)?;
            let body = if body.contains_let() {
                match infer(ctx, &s)? {
                    Type::Prod(a, b) => {
                        ctx.push(left.clone(), *a);
                        ctx.push(right.clone(), *b);
                        let out = go(body, ctx);
                        ctx.pop();
                        ctx.pop();
                        out?
                    }
                    other => {
                        return Err(TypeError::NotAPair {
                            term: s.to_string(),
                            found: other.to_string(),
                        })
                    }
                }
            } else {
                body.clone()
            };
            Term::Match {
                scrutinee: s,
                left: left.clone(),
                right: right.clone(),
                body,
            }
        }
        Term::Let {
            name,
            ty,
            bound,
            body,
        } => {
            let bound = go(bound, ctx)?;
            let bound_ty = infer(ctx, &bound)?;
            if let Some(ann) = ty {
                if ann != &bound_ty {
                    return Err(TypeError::Mismatch {
                        term: bound.to_string(),
                        expected: ann.to_string(),
                        found: bound_ty.to_string(),
                    });
                }
            }
            ctx.push(name.clone(), bound_ty.clone());
            let body = go(body, ctx);
            ctx.pop();
            Term::App(
                Arc::new(Term::Lam {
                    param: name.clone(),
                    ty: bound_ty,
                    body: body?,
                }),
                bound,
            )
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prims::{Prim, PrimOp};

    #[test]
    fn lambda_with_prim_body() {
        let t = parse("fun (x : real) -> mul(x, x)").unwrap();
        let expected = Term::lam(
            "x",
            Type::Real,
            Term::prim(
                Prim::primal(PrimOp::Mul),
                vec![Term::var("x"), Term::var("x")],
            ),
        );
        assert_eq!(t, expected);
    }

    #[test]
    fn silly_id_body_with_free_variable() {
        let t = parse("if eq(x, 0.0) then 0.0 else x").unwrap();
        let expected = Term::if_(
            Term::prim(
                Prim::primal(PrimOp::Eq),
                vec![Term::var("x"), Term::Real(0.0)],
            ),
            Term::Real(0.0),
            Term::var("x"),
        );
        assert_eq!(t, expected);
    }

    #[test]
    fn let_desugars_to_application() {
        let t = parse("let y = sample in score(y)").unwrap();
        let expected = Term::app(
            Term::lam("y", Type::Real, Term::score(Term::var("y"))),
            Term::Sample,
        );
        assert_eq!(t, expected);
    }

    #[test]
    fn sequencing_is_let_underscore() {
        let t = parse("score(2.0); sample").unwrap();
        let expected = Term::app(
            Term::lam("_", Type::Unit, Term::Sample),
            Term::score(Term::Real(2.0)),
        );
        assert_eq!(t, expected);
    }

    #[test]
    fn syntax_error_has_position() {
        match parse("fun (x : real) ->\n  mul(x, )") {
            Err(ParseError::Syntax { line, col, .. }) => {
                assert_eq!((line, col), (2, 10));
            }
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_primitive() {
        assert!(matches!(
            parse("tan(1.0)"),
            Err(ParseError::UnknownPrimitive { name, .. }) if name == "tan"
        ));
    }

    #[test]
    fn bound_identifier_call_is_application() {
        let t = parse("fun (f : real -> real) -> f(1.0)").unwrap();
        let expected = Term::lam(
            "f",
            Type::arrow(Type::Real, Type::Real),
            Term::app(Term::var("f"), Term::Real(1.0)),
        );
        assert_eq!(t, expected);
    }

    #[test]
    fn tuples_nest_to_the_right() {
        let t = parse("(1, 2, 3)").unwrap();
        let expected = Term::pair(
            Term::Real(1.0),
            Term::pair(Term::Real(2.0), Term::Real(3.0)),
        );
        assert_eq!(t, expected);
    }

    #[test]
    fn mu_codomain_stops_before_arrow() {
        let t = parse("mu g (p : real * real) : real -> match p with (x, n) -> g (x, n)").unwrap();
        match t {
            Term::Mu { dom, cod, .. } => {
                assert_eq!(dom, Type::prod(Type::Real, Type::Real));
                assert_eq!(cod, Type::Real);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn negative_literals_and_arrows() {
        let t = parse("fun (x : real) -> add(x, -2.5e-3)").unwrap();
        assert_eq!(t.to_string(), "fun (x : real) -> add(x, -0.0025)");
    }

    #[test]
    fn comments_are_skipped() {
        let t = parse("# a comment\n1.0 # trailing\n").unwrap();
        assert_eq!(t, Term::Real(1.0));
    }

    #[test]
    fn let_with_unknown_free_variable_needs_annotation() {
        assert!(matches!(parse("let y = z in y"), Err(ParseError::Let(_))));
    }

    #[test]
    fn trailing_tokens_rejected() {
        assert!(parse("1.0 )").is_err());
    }
}
