#![allow(dead_code)]

use pap_core::eval::Value;
use pap_core::gen::{GenConfig, Generator};
use pap_core::rng::Stream;
use pap_core::syntax::{Name, Term, Type};

/// A random type and a closed term of that type.
pub fn typed_term(seed: u64, probabilistic: bool) -> (Type, Term) {
    let mut rng = Stream::new(seed, 0);
    let mut g = Generator::new(
        &mut rng,
        GenConfig {
            probabilistic,
            ..GenConfig::default()
        },
    );
    let ty = g.ty(2);
    let t = g.closed(&ty);
    (ty, t)
}

/// A term of type `ty` in context `ctx`.
pub fn open_term(seed: u64, ctx: &[(Name, Type)], ty: &Type, probabilistic: bool) -> Term {
    let mut rng = Stream::new(seed, 1);
    let mut g = Generator::new(
        &mut rng,
        GenConfig {
            probabilistic,
            ..GenConfig::default()
        },
    );
    g.term(&mut ctx.to_vec(), ty, 4)
}

pub fn value_has_type(v: &Value, ty: &Type) -> bool {
    match (v, ty) {
        (Value::Real(_), Type::Real) | (Value::Bool(_), Type::Bool) | (Value::Unit, Type::Unit) => {
            true
        }
        (Value::Pair(a, b), Type::Prod(ta, tb)) => value_has_type(a, ta) && value_has_type(b, tb),
        (Value::Closure(_) | Value::RecClosure(_), Type::Arrow(..)) => true,
        _ => false,
    }
}

pub fn bits_eq(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}
