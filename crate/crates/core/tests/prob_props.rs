mod common;

use common::{bits_eq, open_term};
use pap_core::eval::BottomReason;
use pap_core::exec::Exec;
use pap_core::prob::{run_trace, support_dim, RunResult, Sampler, SimConfig, WeightedOutcome};
use pap_core::rng::Stream;
use pap_core::syntax::{name, substitute, Term, Type};
use proptest::prelude::*;

const FUEL: u64 = 10_000;

fn trace(seed: u64, max: usize) -> Vec<f64> {
    let mut rng = Stream::new(seed, 2);
    let n = (rng.next_u64() % (max as u64 + 1)) as usize;
    (0..n).map(|_| rng.uniform()).collect()
}

fn out_of_fuel(o: &WeightedOutcome) -> bool {
    matches!(o.result, RunResult::Bottom(BottomReason::FuelExhausted))
}

fn same(a: &WeightedOutcome, b: &WeightedOutcome) -> bool {
    a.result == b.result
        && a.weight.to_bits() == b.weight.to_bits()
        && a.consumed == b.consumed
        && bits_eq(&a.remainder, &b.remainder)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn weights_are_nonnegative(seed in any::<u64>()) {
        let t = open_term(seed, &[], &Type::Real, true);
        let o = run_trace(&t, &trace(seed, 6), FUEL).unwrap();
        prop_assert!(o.weight >= 0.0, "{}", o.weight);
        if !matches!(o.result, RunResult::Val(_)) {
            prop_assert_eq!(o.weight, 0.0);
        }
    }

    /// Extra draws after a completed run change nothing but the remainder.
    #[test]
    fn prefix_stability(seed in any::<u64>(), extra in prop::collection::vec(0.0f64..1.0, 1..4)) {
        let t = open_term(seed, &[], &Type::Real, true);
        let tr = trace(seed, 6);
        let short = run_trace(&t, &tr, FUEL).unwrap();
        if let RunResult::Val(_) = short.result {
            let mut long_tr = tr.clone();
            long_tr.extend(&extra);
            let long = run_trace(&t, &long_tr, FUEL).unwrap();
            prop_assert_eq!(&long.result, &short.result);
            prop_assert_eq!(long.weight.to_bits(), short.weight.to_bits());
            prop_assert_eq!(long.consumed, short.consumed);
            prop_assert_eq!(long.remainder.len(), short.remainder.len() + extra.len());
        }
    }

    /// `let x = t1 in t2` runs t1, then `t2[v/x]` on the rest, multiplying
    /// the weights, bit for bit.
    #[test]
    fn let_is_multiplicative(seed in any::<u64>()) {
        let x = name("x");
        let t1 = open_term(seed, &[], &Type::Real, true);
        let t2 = open_term(seed ^ 0x5eed, &[(x.clone(), Type::Real)], &Type::Real, true);
        let tr = trace(seed, 6);
        let whole = run_trace(&Term::app(Term::lam("x", Type::Real, t2.clone()), t1.clone()), &tr, FUEL).unwrap();
        let first = run_trace(&t1, &tr, FUEL).unwrap();
        prop_assume!(!out_of_fuel(&whole) && !out_of_fuel(&first));
        let expected = match &first.result {
            RunResult::Val(v) => {
                let v = v.as_real().unwrap();
                let second = run_trace(&substitute(&t2, &x, &Term::Real(v)), &first.remainder, FUEL).unwrap();
                prop_assume!(!out_of_fuel(&second));
                let weight = match second.result {
                    RunResult::Val(_) if first.weight != 0.0 && second.weight != 0.0 => first.weight * second.weight,
                    _ => 0.0,
                };
                WeightedOutcome { weight, consumed: first.consumed + second.consumed, ..second }
            }
            _ => first.clone(),
        };
        prop_assert!(same(&whole, &expected), "{:?} vs {:?}", whole, expected);
    }

    /// The Jacobian rank never exceeds either of its dimensions.
    #[test]
    fn rank_is_bounded(seed in any::<u64>()) {
        let ty = Type::prod(Type::Real, Type::Real);
        let t = open_term(seed, &[], &ty, true);
        let sim = SimConfig { seed, fuel: FUEL, max_trace_len: 50 };
        let hist = support_dim(&t, 5, &sim, 1e-8, Exec::Sequential).unwrap();
        for s in &hist.samples {
            prop_assert!(s.rank <= s.rows.min(s.cols));
            prop_assert_eq!(s.rows, 2);
        }
        let s = Sampler::new(&t, FUEL).unwrap();
        prop_assert_eq!(s.ty, ty);
    }
}
