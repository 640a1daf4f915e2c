use pap_core::corpus;
use pap_core::gd::{gd_run, GdConfig, GradMode};
use pap_core::parser::parse;
use proptest::prelude::*;

const PROGRAMS: [&str; 3] = [
    corpus::HALF_SQUARE,
    "fun (x : real) -> add(mul(x, x), sin(x))",
    "fun (p : real * real) -> match p with (x, y) -> add(mul(x, x), mul(3.0, mul(y, y)))",
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    /// Every recorded step is exactly `x - eps * g`.
    #[test]
    fn update_rule_is_bitwise(
        i in 0..PROGRAMS.len(),
        x0 in prop::collection::vec(-10.0f64..10.0, 2),
        eps in 0.001f64..1.0,
        fd in any::<bool>(),
    ) {
        let t = parse(PROGRAMS[i]).unwrap();
        let n = if i == 2 { 2 } else { 1 };
        let cfg = GdConfig {
            eps,
            t_max: 20,
            mode: if fd { GradMode::Fd } else { GradMode::Ad },
            ..GdConfig::default()
        };
        let traj = gd_run(&t, &x0[..n], &cfg).unwrap();
        prop_assert!(traj.iterates.len() <= cfg.t_max + 1);
        for k in 0..traj.iterates.len() - 1 {
            for d in 0..n {
                let expected = traj.iterates[k][d] - eps * traj.grads[k][d];
                prop_assert_eq!(traj.iterates[k + 1][d].to_bits(), expected.to_bits());
            }
        }
    }

    /// The counterexample diverges from every start: `x^T <= -(T - 3)`.
    #[test]
    fn counterexample_diverges(x0 in -20.0f64..20.0) {
        let p = parse(&corpus::counterexample_p(1.0)).unwrap();
        let cfg = GdConfig { eps: 1.0, t_max: 30, ..GdConfig::default() };
        let traj = gd_run(&p, &[x0], &cfg).unwrap();
        prop_assert!(traj.last().unwrap()[0] <= -27.0);
    }
}
