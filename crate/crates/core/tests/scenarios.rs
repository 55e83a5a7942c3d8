use std::collections::BTreeSet;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_4};
use std::path::PathBuf;

use num_bigint::BigInt;
use num_rational::BigRational;
use proptest::prelude::*;

use agreelab::agreement;
use agreelab::classical::{embed_classical, Agent, ClassicalModel, Partition};
use agreelab::linalg::c;
use agreelab::probability::{Axis, Event, JointDistribution, OutcomeSpace, DEFAULT_TOL};
use agreelab::process::{self, Lab, LabDims};
use agreelab::quantum::{self, DensityMatrix, Instrument, Order, QuantumScenario};
use agreelab::random;
use agreelab::report::{self, Format};
use agreelab::scenario::{self, Backend, Joint, ScenarioError};

fn fixture(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name);
    std::fs::read_to_string(path).unwrap()
}

fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

// Ω = {1,2,3,4} uniform, Alice {{1,2},{3,4}}, Bob {{1,2,3},{4}}, E = {1,4}.
fn four_state() -> ClassicalModel<BigRational> {
    ClassicalModel::new(
        vec![rat(1, 4); 4],
        Partition::from_cells(4, &[vec![0, 1], vec![2, 3]]).unwrap(),
        Partition::from_cells(4, &[vec![0, 1, 2], vec![3]]).unwrap(),
        Partition::from_assignment(vec![0, 1, 1, 0]).unwrap(),
        [0],
        DEFAULT_TOL,
    )
    .unwrap()
}

#[test]
fn four_state_model_by_enumeration() {
    let m = four_state();
    assert_eq!(m.classical_posterior(Agent::Alice, 0).unwrap(), rat(1, 2));
    assert_eq!(m.classical_posterior(Agent::Bob, 1).unwrap(), rat(1, 1));
    assert!(!m.classical_ck_at(0, &rat(1, 2), &rat(1, 3)).unwrap());

    let (p, event) = embed_classical(&m).unwrap();
    let quarter = rat(1, 4);
    for (i, j, k) in p.space().triples() {
        let want = [(0, 0, 0), (0, 0, 1), (1, 0, 1), (1, 1, 0)].contains(&(i, j, k));
        assert_eq!(*p.get(i, j, k), if want { quarter.clone() } else { rat(0, 1) });
    }
    assert_eq!(p.posterior_alice(0, &event).unwrap(), rat(1, 2));
    assert_eq!(p.posterior_bob(1, &event).unwrap(), rat(1, 1));

    let (a0, b0) = agreement::initial_sets(&p, &event, &rat(1, 2), &rat(1, 3), DEFAULT_TOL).unwrap();
    assert_eq!(a0, BTreeSet::from([0, 1]));
    assert_eq!(b0, BTreeSet::from([0]));
    let r = agreement::ck_closure(&p, &event, &rat(1, 2), &rat(1, 3), DEFAULT_TOL).unwrap();
    assert!(r.b_star.is_empty());
    assert!(!r.ck_holds);
}

#[test]
fn fixture_matches_hand_built_model() {
    let s = scenario::parse_scenario(&fixture("four_state.json")).unwrap();
    assert_eq!(s.backend, Backend::Classical);
    assert_eq!(s.id, "four-state");
    let Joint::Exact(p) = s.joint().unwrap() else { panic!("exact rationals expected") };
    let (want, event) = embed_classical(&four_state()).unwrap();
    assert_eq!(p, want);
    assert_eq!(s.event, event);
}

#[test]
fn uniform_fixture_report() {
    let s = scenario::parse_scenario(&fixture("uniform_table.json")).unwrap();
    let r = report::run_scenario(&s).unwrap();
    assert_eq!(r.posteriors_alice, vec![Some(0.5), Some(0.5)]);
    assert_eq!(r.reports.len(), 1);
    assert!(r.reports[0].ck_holds && r.reports[0].agrees);
    assert!(r.passes());
    let marg = s.joint().unwrap().to_f64();
    let t = marg.marginal(&[Axis::I]).unwrap();
    assert_eq!(*t.get(&[0]), 0.5);
}

#[test]
fn every_fixture_runs_clean_in_both_formats() {
    for name in [
        "four_state.json",
        "uniform_table.json",
        "correlated_table.json",
        "noncommuting_example.json",
        "noncommuting_block_state.json",
        "qubit_sequence_aeb.json",
        "process_order_mixture.json",
        "process_explicit_w.json",
    ] {
        let s = scenario::parse_scenario(&fixture(name)).unwrap();
        let r = report::run_scenario(&s).unwrap();
        assert!(r.passes(), "{name}");
        let text = report::emit_report(&r, Format::Records);
        let back = report::parse_records(&text).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(report::emit_report(&back[0], Format::Records), text, "{name}");
    }
}

#[test]
fn invalid_fixtures_are_classified() {
    let parse = scenario::parse_scenario(&fixture("invalid/truncated.json")).unwrap_err();
    assert!(matches!(parse, ScenarioError::Parse { line: 5, .. }), "{parse}");
    for name in ["invalid/non_trace_preserving.json", "invalid/q_out_of_range.json", "invalid/unnormalised_table.json"] {
        let e = scenario::parse_scenario(&fixture(name)).unwrap_err();
        assert!(!e.is_parse_error(), "{name}: {e}");
    }
}

#[test]
fn example_headline_values() {
    let s = quantum::paper_example(FRAC_PI_4, FRAC_PI_3, 0.2, 0.1, DensityMatrix::maximally_mixed(4)).unwrap();
    let p = quantum::sequential_joint(&s).unwrap();
    let want_a = [0.2, 0.2, 0.4, 0.2];
    let want_b = [0.2, 0.2, 0.1, 0.5];
    for n in 0..4 {
        assert!((p.posterior_alice(n, s.event()).unwrap() - want_a[n]).abs() < 1e-9);
        assert!((p.posterior_bob(n, s.event()).unwrap() - want_b[n]).abs() < 1e-9);
    }
    let reports = agreement::verify_agreement(&p, s.event(), DEFAULT_TOL).unwrap();
    assert_eq!(agreement::count_violations(&reports), 0);
    assert!(agreement::singular_disagreement_check(&p, s.event(), DEFAULT_TOL).unwrap());
}

#[test]
fn closed_form_at_right_angle() {
    let (qa, qb) = quantum::closed_form_posteriors(0.4, FRAC_PI_2, 0.2, 0.3).unwrap();
    assert!((qa[2] - 0.3).abs() < 1e-12);
    for (x, y) in qb.iter().zip([0.2, 0.2, 0.3, 0.3]) {
        assert!((x - y).abs() < 1e-12);
    }
}

#[test]
fn alice_marginal_of_a_basis_state() {
    let rho = DensityMatrix::pure(&[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]).unwrap();
    let s = quantum::paper_example(0.3, 1.1, 0.2, 0.1, rho).unwrap();
    let p = quantum::sequential_joint(&s).unwrap();
    let m = p.marginal(&[Axis::I]).unwrap();
    let got: Vec<f64> = (0..4).map(|i| *m.get(&[i])).collect();
    for (g, w) in got.iter().zip([1.0, 0.0, 0.0, 0.0]) {
        assert!((g - w).abs() < 1e-12, "{got:?}");
    }
}

// Bob's posteriors do not depend on the angles or on the state.
#[test]
fn bob_posteriors_hold_for_random_states() {
    let mut states = 0;
    for t in 0..40 {
        let mut rng = random::trial_rng(11, t);
        let rho = random::random_density_matrix(4, &mut rng);
        let (theta, phi) = (0.1 + 0.07 * t as f64, 0.5 + 0.05 * t as f64);
        let (q, r) = (0.05 + 0.01 * t as f64, 0.1);
        let s = quantum::paper_example(theta, phi, q, r, rho).unwrap();
        let p = quantum::sequential_joint(&s).unwrap();
        let (_, want_b) = quantum::closed_form_posteriors(theta, phi, q, r).unwrap();
        for (j, want) in want_b.iter().enumerate() {
            if p.prob_j(j) > 1e-6 {
                assert!((p.posterior_bob(j, s.event()).unwrap() - want).abs() < 1e-9);
            }
        }
        states += 1;
    }
    assert!(states >= 10);
}

#[test]
fn order_changes_the_table_but_not_the_verdict() {
    let (b, e0) = quantum::example_vectors(FRAC_PI_4, FRAC_PI_3, 0.2, 0.1).unwrap();
    let computational: Vec<Vec<_>> = (0..4)
        .map(|x| (0..4).map(|y| c(f64::from(u8::from(x == y)), 0.0)).collect())
        .collect();
    let e_instr = || {
        let p0 = agreelab::linalg::projector(&e0);
        let p1 = agreelab::linalg::identity(4) - &p0;
        Instrument::new(vec![
            quantum::CpMap::projector(p0).unwrap(),
            quantum::CpMap::projector(p1).unwrap(),
        ])
        .unwrap()
    };
    let build = |order| {
        QuantumScenario::new(
            DensityMatrix::maximally_mixed(4),
            Instrument::projective(&computational).unwrap(),
            Instrument::projective(&b).unwrap(),
            e_instr(),
            order,
            [0],
        )
        .unwrap()
    };
    let abe = quantum::sequential_joint(&build(Order::Abe)).unwrap();
    let aeb = quantum::sequential_joint(&build(Order::Aeb)).unwrap();
    let diff = abe.values().iter().zip(aeb.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(diff > 1e-3, "orders gave the same table");
    for p in [&abe, &aeb] {
        let event = Event::new(p.space(), [0]).unwrap();
        let reports = agreement::verify_agreement(p, &event, DEFAULT_TOL).unwrap();
        assert_eq!(agreement::count_violations(&reports), 0);
    }
}

#[test]
fn definite_order_process_reproduces_both_orders() {
    let base = quantum::paper_example(0.7, 0.2, 0.15, 0.3, DensityMatrix::maximally_mixed(4)).unwrap();
    let [a, b, e] = base.instruments();
    for (order, chain) in [(Order::Abe, [Lab::A, Lab::B, Lab::E]), (Order::Aeb, [Lab::A, Lab::E, Lab::B])] {
        let s = QuantumScenario::new(base.state().clone(), a.clone(), b.clone(), e.clone(), order, [0]).unwrap();
        let seq = quantum::sequential_joint(&s).unwrap();
        let labs = [LabDims::new(4, 4); 3];
        let w = process::embed_definite_order(s.state(), labs, chain).unwrap();
        let via = process::process_joint(&w, a, b, e).unwrap();
        for (x, y) in via.values().iter().zip(seq.values()) {
            assert!((x - y).abs() < 1e-10);
        }
        let diag = process::validate_process(w.matrix(), labs, 3).unwrap();
        assert!(diag.passes, "{diag:?}");
    }
}

#[test]
fn trivial_instruments_give_unit_table() {
    let rho = DensityMatrix::maximally_mixed(2);
    let labs = [LabDims::new(2, 2); 3];
    let w = process::embed_definite_order(&rho, labs, [Lab::B, Lab::E, Lab::A]).unwrap();
    let t = Instrument::trivial(2);
    let p = process::process_joint(&w, &t, &t, &t).unwrap();
    assert_eq!(p.space().sizes(), [1, 1, 1]);
    assert!((p.values()[0] - 1.0).abs() < 1e-12);
}

#[test]
fn product_distribution_closure_is_full() {
    let (pi, pj, pk) = ([0.3, 0.7], [0.5, 0.25, 0.25], [0.6, 0.4]);
    let space = OutcomeSpace::new(2, 3, 2).unwrap();
    let values = space.triples().map(|(i, j, k)| pi[i] * pj[j] * pk[k]).collect();
    let p = JointDistribution::new(space, values, DEFAULT_TOL).unwrap();
    let event = Event::new(p.space(), [0]).unwrap();
    let r = agreement::ck_closure(&p, &event, &0.6, &0.6, DEFAULT_TOL).unwrap();
    assert_eq!(r.a_star.len(), 2);
    assert_eq!(r.b_star.len(), 3);
    assert!(r.ck_holds && r.agrees);
    for (i, j, _) in p.space().triples() {
        assert!(agreement::is_common_knowledge(&p, &event, i, j, DEFAULT_TOL).unwrap());
    }
}

#[test]
fn tolerance_on_the_scenario_is_respected() {
    let text = r#"{"backend": "table", "event": [0], "tolerance": 1e-3,
        "model": {"shape": [2, 1, 2], "values": [0.25, 0.25, 0.2500001, 0.2499999]}}"#;
    let s = scenario::parse_scenario(text).unwrap();
    assert_eq!(report::run_scenario(&s).unwrap().reports.len(), 1);
}

fn arb_exact_table() -> impl Strategy<Value = (JointDistribution<BigRational>, Event)> {
    (1usize..=3, 1usize..=3, 1usize..=3)
        .prop_flat_map(|(ni, nj, nk)| {
            (
                Just((ni, nj, nk)),
                prop::collection::vec(0u8..4, ni * nj * nk),
                prop::collection::vec(any::<bool>(), nk),
            )
        })
        .prop_filter("some mass", |(_, w, _)| w.iter().any(|&x| x > 0))
        .prop_map(|((ni, nj, nk), w, ev)| {
            let total: i64 = w.iter().map(|&x| i64::from(x)).sum();
            let space = OutcomeSpace::new(ni, nj, nk).unwrap();
            let values = w.iter().map(|&x| rat(i64::from(x), total)).collect();
            let p = JointDistribution::new(space, values, DEFAULT_TOL).unwrap();
            let event = Event::new(p.space(), (0..nk).filter(|&k| ev[k])).unwrap();
            (p, event)
        })
}

proptest! {
    #[test]
    fn scenario_json_round_trips_exact_tables((p, event) in arb_exact_table()) {
        let [ni, nj, nk] = p.space().sizes();
        let values: Vec<String> = p.values().iter().map(|v| v.to_string()).collect();
        let text = serde_json::json!({
            "backend": "table",
            "event": event.members().iter().collect::<Vec<_>>(),
            "model": {"shape": [ni, nj, nk], "values": values},
        })
        .to_string();
        let s = scenario::parse_scenario(&text).unwrap();
        let Joint::Exact(back) = s.joint().unwrap() else { panic!("exact expected") };
        prop_assert_eq!(back.values(), p.values());
        prop_assert_eq!(s.event, event);
    }

    #[test]
    fn exact_tables_never_violate_agreement((p, event) in arb_exact_table()) {
        let reports = agreement::verify_agreement(&p, &event, DEFAULT_TOL).unwrap();
        prop_assert_eq!(agreement::count_violations(&reports), 0);
        for r in reports.iter().filter(|r| r.ck_holds) {
            let ma = r.a_star.iter().map(|&i| p.prob_i(i)).fold(rat(0, 1), |a, b| a + b);
            let mb = r.b_star.iter().map(|&j| p.prob_j(j)).fold(rat(0, 1), |a, b| a + b);
            prop_assert_eq!(ma, mb);
        }
    }
}
