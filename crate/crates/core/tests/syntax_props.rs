mod common;

use common::{open_term, typed_term};
use pap_core::eval::{eval, BottomReason, Env, Outcome, Value};
use pap_core::gen::{GenConfig, Generator};
use pap_core::parser::parse;
use pap_core::rng::Stream;
use pap_core::syntax::{free_vars, name, substitute, Term, Type};
use pap_core::typecheck::{typecheck, Context};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn print_then_parse_round_trips(seed in any::<u64>(), probabilistic in any::<bool>()) {
        let (_, t) = typed_term(seed, probabilistic);
        let printed = t.to_string();
        prop_assert_eq!(parse(&printed), Ok(t), "{}", printed);
    }

    #[test]
    fn typecheck_is_deterministic(seed in any::<u64>(), probabilistic in any::<bool>()) {
        let (ty, t) = typed_term(seed, probabilistic);
        let a = typecheck(&Context::new(), &t);
        let b = typecheck(&Context::new(), &t);
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a, Ok(ty));
    }

    #[test]
    fn substitution_preserves_types(seed in any::<u64>(), probabilistic in any::<bool>()) {
        let mut rng = Stream::new(seed, 9);
        let arg_ty = Generator::new(&mut rng, GenConfig::default()).ty(1);
        let body_ty = Generator::new(&mut rng, GenConfig::default()).ty(1);
        let x = name("x");
        let body = open_term(seed, &[(x.clone(), arg_ty.clone())], &body_ty, probabilistic);
        let v = Generator::new(&mut rng, GenConfig { probabilistic, ..GenConfig::default() })
            .closed(&arg_ty);
        let ctx = Context::new().with("x", arg_ty);
        prop_assert_eq!(typecheck(&ctx, &body), Ok(body_ty.clone()));
        let s = substitute(&body, &x, &v);
        prop_assert!(!free_vars(&s).contains(&x));
        prop_assert_eq!(typecheck(&Context::new(), &s), Ok(body_ty));
    }

    /// Evaluating `t[c/x]` agrees with evaluating `t` under `x = c`.
    #[test]
    fn substitution_agrees_with_environment(seed in any::<u64>(), c in -5.0f64..5.0) {
        let x = name("x");
        let body = open_term(seed, &[(x.clone(), Type::Real)], &Type::Real, false);
        let fuel = 20_000;
        let by_subst = eval(&substitute(&body, &x, &Term::Real(c)), &Env::new(), fuel).unwrap();
        let by_env = eval(&body, &Env::new().extend(x, Value::Real(c)), fuel).unwrap();
        let out_of_fuel = |o: &Outcome| *o == Outcome::Bottom(BottomReason::FuelExhausted);
        if !out_of_fuel(&by_subst.outcome) && !out_of_fuel(&by_env.outcome) {
            prop_assert_eq!(by_subst.outcome, by_env.outcome);
            prop_assert_eq!(by_subst.steps, by_env.steps);
        }
    }
}
