//! Randomised finite-difference and symmetry properties.

use mcurrent::expr::{diff_expr, parse_expr};
use mcurrent::model::State;
use mcurrent::steady::{di_infty, i_infty};
use mcurrent::{NeuronModel, Preset};
use proptest::prelude::*;

fn preset() -> impl Strategy<Value = Preset> {
    prop_oneof![
        Just(Preset::WangBuzsaki),
        Just(Preset::Stiefel),
        Just(Preset::Rtm)
    ]
}

fn state(m: &NeuronModel, v: f64, gates: &[f64]) -> State {
    let mut s = State::zeros(m.dim());
    s[0] = v;
    for k in 1..m.dim() {
        s[k] = gates[k - 1];
    }
    s
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn jacobian_matches_central_differences(
        p in preset(),
        g_m in 0.0..3.0f64,
        v in -90.0..30.0f64,
        gates in prop::collection::vec(0.0..1.0f64, 5),
    ) {
        let m = NeuronModel::preset(p).with_g_m(g_m);
        let s = state(&m, v, &gates);
        let jac = m.jacobian(&s);
        let h = 1e-6;
        for k in 0..m.dim() {
            let mut sp = s.clone();
            let mut sm = s.clone();
            sp[k] += h;
            sm[k] -= h;
            let col = (m.rhs(&sp) - m.rhs(&sm)) / (2.0 * h);
            for r in 0..m.dim() {
                let exact = jac[(r, k)];
                prop_assert!((col[r] - exact).abs() <= 1e-5 * exact.abs().max(1.0),
                    "J[{r},{k}] exact {exact} fd {}", col[r]);
            }
        }
    }

    #[test]
    fn i_infty_derivatives_match_central_differences(
        p in preset(),
        g_m in 0.0..3.0f64,
        v in -110.0..50.0f64,
    ) {
        let m = NeuronModel::preset(p).with_g_m(g_m);
        let h = 1e-4;
        let d1 = (i_infty(&m, v + h) - i_infty(&m, v - h)) / (2.0 * h);
        let d2 = (di_infty(&m, v + h, 1) - di_infty(&m, v - h, 1)) / (2.0 * h);
        let e1 = di_infty(&m, v, 1);
        let e2 = di_infty(&m, v, 2);
        prop_assert!((d1 - e1).abs() <= 1e-5 * e1.abs().max(1.0));
        prop_assert!((d2 - e2).abs() <= 1e-5 * e2.abs().max(1.0));
    }

    #[test]
    fn rate_function_derivatives_survive_the_removable_singularity(
        v in -45.0..-25.0f64,
        a in 0.01..1.0f64,
    ) {
        let e = parse_expr(&format!("{a}*(V+35)/(1-exp(-(V+35)/10))")).unwrap();
        let d = diff_expr(&e, 1);
        let h = 1e-4;
        let fd = (e.value(v + h) - e.value(v - h)) / (2.0 * h);
        prop_assert!(e.value(v).is_finite());
        prop_assert!((d.value(v) - fd).abs() <= 1e-6);
    }

    #[test]
    fn gate_rows_vanish_on_the_steady_state_manifold(p in preset(), v in -110.0..50.0f64) {
        let m = NeuronModel::preset(p).with_g_m(1.0);
        let f = m.rhs(&m.steady_state(v));
        for k in 1..m.dim() {
            prop_assert!(f[k].abs() < 1e-12);
        }
        prop_assert!((f[0] - i_infty(&m, v)).abs() < 1e-9 * i_infty(&m, v).abs().max(1.0));
    }
}
