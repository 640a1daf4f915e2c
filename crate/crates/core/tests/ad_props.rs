mod common;

use common::{bits_eq, open_term};
use pap_core::ad::{derivative, dual_type, transform, Differentiable};
use pap_core::eval::Outcome;
use pap_core::gen::closed_term;
use pap_core::gen::GenConfig;
use pap_core::parser::parse;
use pap_core::rng::Stream;
use pap_core::syntax::{name, Type};
use pap_core::typecheck::{typecheck, Context};
use proptest::prelude::*;

const FUEL: u64 = 10_000;

const UNARY: [&str; 7] = [
    "fun (x : real) -> mul(x, x)",
    "fun (x : real) -> sin(x)",
    "fun (x : real) -> exp(mul(0.5, x))",
    "fun (x : real) -> div(1.0, add(1.0, mul(x, x)))",
    "fun (x : real) -> add(mul(3.0, x), cos(x))",
    "fun (x : real) -> abs(sub(x, 0.3))",
    "fun (x : real) -> max(x, mul(0.5, x))",
];

const MULTI: [&str; 3] = [
    "fun (p : real * real) -> match p with (x, y) -> add(mul(x, x), mul(3.0, mul(y, y)))",
    "fun (p : real * real) -> match p with (x, y) -> mul(sin(x), exp(y))",
    "fun (p : real * (real * real)) -> match p with (x, r) -> match r with (y, z) -> \
     (mul(x, y), add(div(z, add(2.0, cos(x))), y))",
];

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

fn real_to_real(seed: u64) -> Differentiable {
    let t = closed_term(
        seed,
        0,
        &Type::arrow(Type::Real, Type::Real),
        GenConfig::default(),
    );
    Differentiable::new(&t, FUEL).expect("real -> real term")
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    /// Under `x : T`, `D(t)` has type `D(ty)` in context `x : D(T)`.
    #[test]
    fn transform_preserves_types(seed in any::<u64>(), probabilistic in any::<bool>()) {
        let mut rng = Stream::new(seed, 3);
        let mut g = pap_core::gen::Generator::new(&mut rng, GenConfig::default());
        let (arg_ty, ty) = (g.ty(2), g.ty(2));
        let t = open_term(seed, &[(name("x"), arg_ty.clone())], &ty, probabilistic);
        let d = transform(&t).unwrap();
        let ctx = Context::new().with("x", dual_type(&arg_ty));
        prop_assert_eq!(typecheck(&ctx, &d), Ok(dual_type(&ty)));
    }

    /// The primal half of a dual run is the plain run, bit for bit, and
    /// the two are undefined at the same inputs.
    #[test]
    fn primal_preservation_and_domain_agreement(seed in any::<u64>(), x in -5.0f64..5.0, v in -2.0f64..2.0) {
        let d = real_to_real(seed);
        let plain = d.eval_at(&[x]).unwrap();
        let dual = d.jvp(&[x], &[v]).unwrap();
        match (plain, dual) {
            (Outcome::Val(p), Outcome::Val(j)) => prop_assert!(bits_eq(&p, &j.primal)),
            (Outcome::Bottom(a), Outcome::Bottom(b)) => prop_assert_eq!(a, b),
            (a, b) => prop_assert!(false, "plain {:?} vs dual {:?}", a, b),
        }
    }

    /// A zero tangent stays zero. IEEE `inf * 0` is the one way out.
    #[test]
    fn zero_tangent_stays_zero(seed in any::<u64>(), x in -5.0f64..5.0) {
        let d = real_to_real(seed);
        if let Outcome::Val(j) = d.jvp(&[x], &[0.0]).unwrap() {
            prop_assert!(j.tangent[0] == 0.0 || !j.tangent[0].is_finite(), "{:?}", j);
        }
    }

    #[test]
    fn chain_rule(i in 0..UNARY.len(), k in 0..UNARY.len(), x in -3.0f64..3.0) {
        let (f, g) = (UNARY[i], UNARY[k]);
        let fg = parse(&format!("fun (x : real) -> ({f}) (({g}) x)")).unwrap();
        let gx = Differentiable::new(&parse(g).unwrap(), FUEL).unwrap().eval_at(&[x]).unwrap().val().unwrap()[0];
        let whole = derivative(&fg, x, FUEL).unwrap().val().unwrap();
        let outer = derivative(&parse(f).unwrap(), gx, FUEL).unwrap().val().unwrap();
        let inner = derivative(&parse(g).unwrap(), x, FUEL).unwrap().val().unwrap();
        prop_assert!(close(whole, outer * inner, 1e-12), "{} vs {} * {}", whole, outer, inner);
    }

    #[test]
    fn jvp_is_linear_in_the_tangent(
        i in 0..MULTI.len(),
        x in prop::collection::vec(-3.0f64..3.0, 3),
        v1 in prop::collection::vec(-2.0f64..2.0, 3),
        v2 in prop::collection::vec(-2.0f64..2.0, 3),
        a in -2.0f64..2.0,
        b in -2.0f64..2.0,
    ) {
        let d = Differentiable::new(&parse(MULTI[i]).unwrap(), FUEL).unwrap();
        let n = d.n();
        let (x, v1, v2) = (&x[..n], &v1[..n], &v2[..n]);
        let mix: Vec<f64> = v1.iter().zip(v2).map(|(p, q)| a * p + b * q).collect();
        let t = |v: &[f64]| d.jvp(x, v).unwrap().val().unwrap().tangent;
        let (t1, t2, tm) = (t(v1), t(v2), t(&mix));
        for k in 0..d.m() {
            prop_assert!(close(tm[k], a * t1[k] + b * t2[k], 1e-10), "{:?} vs {:?} {:?}", tm, t1, t2);
        }
    }
}
