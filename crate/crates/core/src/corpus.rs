//! Builtin programs: the classic AD pathologies and an audit corpus of
//! `real -> real` programs with sampling domains.

use serde::Serialize;

use crate::syntax::real_literal;

/// Extensionally the identity, but AD differentiates the constant branch
/// at 0.
pub const SILLY_ID: &str = "fun (x : real) -> if eq(x, 0.0) then 0.0 else x";

/// Equal to `x * x` everywhere; AD reports derivative 0 at `x = 1`.
pub const Q: &str = "fun (x : real) -> if eq(x, 1.0) then 1.0 else mul(x, x)";

pub const SQUARE: &str = "fun (x : real) -> mul(x, x)";

pub const HALF_SQUARE: &str = "fun (x : real) -> mul(0.5, mul(x, x))";

/// Halts outside the middle-thirds Cantor set, diverges on it.
pub const CANTOR: &str = "mu c (x : real) : real -> \
     if gt(x, div(1.0, 3.0)) then (if lt(x, div(2.0, 3.0)) then 0.0 else c(sub(mul(3.0, x), 2.0))) \
     else c(mul(3.0, x))";

/// Counts failures before the first draw below 1/2.
pub const GEOMETRIC: &str =
    "(mu g (u : unit) : real -> if lt(sample, 0.5) then 0.0 else add(1.0, g(()))) ()";

/// Weight with a kink at `r1 = 0.5`.
pub const ABS_KINK: &str = "score(abs(sub(sample, 0.5)))";

pub const DIAGONAL: &str = "let u = sample in (u, u)";

pub const SQUARE_SAMPLE: &str = "(sample, sample)";

pub const MIXTURE: &str =
    "if lt(sample, 0.5) then (let u = sample in (u, u)) else (sample, sample)";

/// The gradient-descent counterexample with learning-rate constant `lr`.
///
/// Extensionally `x^2 / (2 lr)`, but AD takes the `x = 0` branch at every
/// non-positive integer and returns `1 / lr` there.
pub fn counterexample_p(lr: f64) -> String {
    let lr = real_literal(lr);
    format!(
        "let g = mu g (p : real * real) : real ->\n\
         \x20 match p with (x, n) ->\n\
         \x20   if gt(x, 0.0) then div(mul(sub(x, n), sub(x, n)), mul({lr}, 2.0))\n\
         \x20   else if eq(x, 0.0) then add(div(x, {lr}), div(mul(n, n), mul(2.0, {lr})))\n\
         \x20   else g (add(x, 1.0), add(n, 1.0))\n\
         in fun (x : real) -> g (x, 0.0)"
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Analytic,
    Piecewise,
    Recursive,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Program {
    pub name: &'static str,
    pub kind: Kind,
    pub source: String,
    /// Sampling interval for audit points.
    pub domain: (f64, f64),
}

fn program(name: &'static str, kind: Kind, source: &str, lo: f64, hi: f64) -> Program {
    Program {
        name,
        kind,
        source: source.to_string(),
        domain: (lo, hi),
    }
}

/// `real -> real` programs mixing analytic, piecewise and recursive code.
pub fn audit_corpus() -> Vec<Program> {
    use Kind::*;
    vec![
        program("square", Analytic, SQUARE, -10.0, 10.0),
        program(
            "cubic",
            Analytic,
            "fun (x : real) -> add(sub(mul(x, mul(x, x)), mul(2.0, x)), 1.0)",
            -5.0,
            5.0,
        ),
        program("exp", Analytic, "fun (x : real) -> exp(x)", -5.0, 5.0),
        program(
            "sin_cos",
            Analytic,
            "fun (x : real) -> mul(sin(x), cos(mul(2.0, x)))",
            -5.0,
            5.0,
        ),
        program(
            "log_quadratic",
            Analytic,
            "fun (x : real) -> log(add(1.0, mul(x, x)))",
            -10.0,
            10.0,
        ),
        program(
            "sqrt_quadratic",
            Analytic,
            "fun (x : real) -> sqrt(add(1.0, mul(x, x)))",
            -10.0,
            10.0,
        ),
        program(
            "rational",
            Analytic,
            "fun (x : real) -> div(1.0, add(1.0, mul(x, x)))",
            -5.0,
            5.0,
        ),
        program(
            "tanh",
            Analytic,
            "fun (x : real) -> div(sub(exp(x), exp(neg(x))), add(exp(x), exp(neg(x))))",
            -5.0,
            5.0,
        ),
        program(
            "pair_product",
            Analytic,
            "fun (x : real) -> match (x, mul(x, 2.0)) with (a, b) -> mul(a, sin(b))",
            -3.0,
            3.0,
        ),
        program(
            "twice_sin",
            Analytic,
            "let twice = fun (f : real -> real) -> fun (y : real) -> f(f(y)) in \
             fun (x : real) -> twice (fun (z : real) -> sin(z)) x",
            -3.0,
            3.0,
        ),
        program("abs", Piecewise, "fun (x : real) -> abs(x)", -1.0, 1.0),
        program(
            "relu",
            Piecewise,
            "fun (x : real) -> max(x, 0.0)",
            -1.0,
            1.0,
        ),
        program(
            "min_sin_cos",
            Piecewise,
            "fun (x : real) -> min(sin(x), cos(x))",
            -5.0,
            5.0,
        ),
        program("silly_id", Piecewise, SILLY_ID, -1.0, 1.0),
        program("q", Piecewise, Q, -2.0, 2.0),
        program(
            "kinked_branch",
            Piecewise,
            "fun (x : real) -> if lt(x, 0.0) then neg(x) else mul(x, x)",
            -1.0,
            1.0,
        ),
        program(
            "jump",
            Piecewise,
            "fun (x : real) -> if gt(x, 0.5) then add(x, 1.0) else x",
            0.0,
            1.0,
        ),
        program(
            "counterexample_p",
            Recursive,
            &counterexample_p(1.0),
            -10.0,
            10.0,
        ),
        program(
            "counterexample_p_half",
            Recursive,
            &counterexample_p(0.5),
            -10.0,
            10.0,
        ),
        program(
            "recursive_power",
            Recursive,
            "let pow = mu p (a : real * real) : real -> match a with (y, n) -> \
               if le(n, 0.0) then 1.0 else mul(y, p (y, sub(n, 1.0))) in \
             fun (x : real) -> pow (x, 5.0)",
            -2.0,
            2.0,
        ),
        program(
            "newton_sqrt",
            Recursive,
            "let step = mu s (st : real * (real * real)) : real -> \
               match st with (a, rest) -> match rest with (y, k) -> \
                 if le(k, 0.0) then y else s (a, (mul(0.5, add(y, div(a, y))), sub(k, 1.0))) in \
             fun (a : real) -> step (a, (a, 30.0))",
            0.5,
            10.0,
        ),
        program(
            "sawtooth",
            Recursive,
            "mu f (x : real) : real -> if lt(x, 1.0) then mul(x, x) else f(sub(x, 1.0))",
            0.0,
            10.0,
        ),
        program("cantor", Recursive, CANTOR, 0.001, 0.999),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse;
    use crate::syntax::Type;
    use crate::typecheck::{typecheck, Context};

    #[test]
    fn all_builtins_parse_and_typecheck() {
        let rr = Type::arrow(Type::Real, Type::Real);
        for p in audit_corpus() {
            let t = parse(&p.source).unwrap_or_else(|e| panic!("{}: {e}", p.name));
            assert_eq!(typecheck(&Context::new(), &t).unwrap(), rr, "{}", p.name);
        }
        for src in [GEOMETRIC, ABS_KINK, DIAGONAL, SQUARE_SAMPLE, MIXTURE] {
            parse(src).unwrap();
        }
    }

    #[test]
    fn corpus_covers_all_kinds() {
        let c = audit_corpus();
        assert!(c.len() >= 20);
        for k in [Kind::Analytic, Kind::Piecewise, Kind::Recursive] {
            assert!(c.iter().filter(|p| p.kind == k).count() >= 5);
        }
    }
}
