//! Invariants checked over generated inputs.

use std::collections::BTreeSet;
use std::sync::Arc;

use proptest::prelude::*;
use sabm_core::analysis::{bounded_oscillation, converged, mann_whitney_u, two_proportion_test, Series};
use sabm_core::promptkit::PromptRegistry;
use sabm_core::runtime::{run, RunConfig, ScenarioKind, SimRng};
use sabm_core::scenarios::{self, evac, firm, plea};
use serde_json::Value;

fn market() -> impl Strategy<Value = firm::MarketParams> {
    (5.0..30.0f64, 1.0..10.0f64, 1.2..4.0f64, 0.0..4.0f64, 0.0..4.0f64).prop_map(|(a, d_scale, ratio, c1, c2)| {
        let d = d_scale / 1000.0;
        firm::MarketParams {
            a,
            d,
            beta: d * ratio,
            c1,
            c2,
        }
    })
}

fn likert() -> impl Strategy<Value = plea::Likert> {
    prop_oneof![
        Just(plea::Likert::DisagreeStrongly),
        Just(plea::Likert::Disagree),
        Just(plea::Likert::Uncertain),
        Just(plea::Likert::Agree),
        Just(plea::Likert::AgreeStrongly),
    ]
}

proptest! {
    #[test]
    fn bertrand_is_a_mutual_best_response(m in market()) {
        let (p1, p2) = firm::bertrand_price(&m).unwrap();
        prop_assert!((firm::best_response(p2, 0, &m) - p1).abs() < 1e-7 * p1.abs().max(1.0));
        prop_assert!((firm::best_response(p1, 1, &m) - p2).abs() < 1e-7 * p2.abs().max(1.0));
    }

    #[test]
    fn best_response_beats_nearby_prices(m in market(), other in 0.0..20.0f64, delta in -1.0..1.0f64) {
        let br = firm::best_response(other, 0, &m);
        let pi = |p: f64| firm::profit(p, m.c1, firm::demand(p, other, &m).0);
        prop_assert!(pi(br) + 1e-6 * pi(br).abs().max(1.0) >= pi(br + delta));
    }

    #[test]
    fn demand_is_symmetric_and_accounts(m in market(), p1 in 0.0..20.0f64, p2 in 0.0..20.0f64) {
        let sym = firm::MarketParams { c2: m.c1, ..m };
        let (q1, q2) = firm::demand(p1, p2, &sym);
        let (r2, r1) = firm::demand(p2, p1, &sym);
        prop_assert!((q1 - r1).abs() < 1e-9 * q1.abs().max(1.0));
        prop_assert!((q2 - r2).abs() < 1e-9 * q2.abs().max(1.0));
        prop_assert_eq!(firm::profit(p1, m.c1, q1), (p1 - m.c1) * q1);
    }

    #[test]
    fn monopoly_not_below_bertrand(m in market()) {
        let (b1, b2) = firm::bertrand_price(&m).unwrap();
        let (m1, m2) = firm::monopoly_price(&m).unwrap();
        prop_assert!(m1 >= b1 - 1e-9 && m2 >= b2 - 1e-9);
    }

    #[test]
    fn tcu_scores_ignore_item_order(answers in prop::collection::vec(likert(), 36), seed in any::<u64>()) {
        let key = plea::parse_questionnaire(plea::DEFAULT_TCU_ITEMS).unwrap();
        let sheet = plea::TcuAnswerSheet { answers: answers.clone(), declined: vec![] };
        let base = plea::score_tcu(&sheet, &key).unwrap();
        let perm = SimRng::new(seed).permutation(36);
        let shuffled = plea::TcuAnswerSheet { answers: perm.iter().map(|&k| answers[k]).collect(), declined: vec![] };
        let key2: Vec<_> = perm.iter().map(|&k| key[k].clone()).collect();
        let again = plea::score_tcu(&shuffled, &key2).unwrap();
        prop_assert!((base.hostility - again.hostility).abs() < 1e-9);
        prop_assert!((base.risk_taking - again.risk_taking).abs() < 1e-9);
        prop_assert!((base.social_support - again.social_support).abs() < 1e-9);
        for s in [base.hostility, base.risk_taking, base.social_support] {
            prop_assert!((10.0..=50.0).contains(&s));
        }
    }

    #[test]
    fn batch_parsing_always_fills_every_slot(reply in "[0-9a-z .\n]{0,400}") {
        let sheet = plea::sheet_from_batches(&[&reply, &reply]);
        prop_assert_eq!(sheet.answers.len(), 36);
        let unique: BTreeSet<_> = sheet.declined.iter().collect();
        prop_assert_eq!(unique.len(), sheet.declined.len());
        for &k in &sheet.declined {
            prop_assert!(k < 36);
            prop_assert_eq!(sheet.answers[k], plea::Likert::Uncertain);
        }
    }

    #[test]
    fn temperature_is_clamped_and_monotone(x in -20.0..20.0f64, y in -20.0..20.0f64) {
        let (tx, ty) = (plea::temperature_from_normal(x), plea::temperature_from_normal(y));
        prop_assert!((0.0..=2.0).contains(&tx));
        if x <= y {
            prop_assert!(tx <= ty);
        }
    }

    #[test]
    fn rank_sum_p_is_a_symmetric_probability(
        a in prop::collection::vec(0u8..10, 1..12),
        b in prop::collection::vec(0u8..10, 1..12),
    ) {
        let a: Vec<f64> = a.into_iter().map(f64::from).collect();
        let b: Vec<f64> = b.into_iter().map(f64::from).collect();
        let ab = mann_whitney_u(&a, &b).unwrap();
        let ba = mann_whitney_u(&b, &a).unwrap();
        prop_assert!((0.0..=1.0).contains(&ab.p_two_sided));
        prop_assert!((ab.p_two_sided - ba.p_two_sided).abs() < 1e-12);
        prop_assert!((ab.u + ba.u - (a.len() * b.len()) as f64).abs() < 1e-9);
    }

    #[test]
    fn proportion_p_is_a_symmetric_probability(n1 in 1u64..300, n2 in 1u64..300, f1 in 0.0..=1.0f64, f2 in 0.0..=1.0f64) {
        let (k1, k2) = ((f1 * n1 as f64) as u64, (f2 * n2 as f64) as u64);
        let p = two_proportion_test(k1, n1, k2, n2).unwrap().p_two_sided;
        let q = two_proportion_test(k2, n2, k1, n1).unwrap().p_two_sided;
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!((p - q).abs() < 1e-12);
    }

    #[test]
    fn flat_series_converge_and_stay_bounded(level in 0.0..20.0f64, len in 1usize..900) {
        let s = Series::new("p", vec![level; len]).unwrap();
        prop_assert_eq!(converged(&s, 8.0, 6.0, len, 0.0).converged_price(), Some(level));
        prop_assert!(bounded_oscillation(&s, 0.0, len).fired);
    }

    #[test]
    fn rng_draws_stay_in_range(seed in any::<u64>(), n in 1u64..1000, len in 0usize..50) {
        let mut rng = SimRng::new(seed);
        prop_assert!(rng.below(n) < n);
        let u = rng.next_f64();
        prop_assert!((0.0..1.0).contains(&u));
        let mut perm = rng.permutation(len);
        perm.sort_unstable();
        prop_assert_eq!(perm, (0..len).collect::<Vec<_>>());
        let (mut x, mut y) = (SimRng::new(seed), SimRng::new(seed));
        prop_assert_eq!(x.next_u64(), y.next_u64());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn evac_cells_hold_at_most_one_agent(seed in any::<u64>(), n in 10usize..60) {
        let params = evac::EvacParams { n_agents: n, obstacles: true, ..Default::default() };
        let config = RunConfig::new(ScenarioKind::Evac, seed, 60);
        let out = run(
            &evac::EvacScenario::new(params),
            &config,
            Arc::new(PromptRegistry::builtin()),
            scenarios::scripted_provider(),
        )
        .unwrap();
        prop_assert!(out.result.rounds <= 50);
        let grid = evac::EvacGrid::new(Some(evac::DEFAULT_OBSTACLES)).unwrap();
        for line in &out.log {
            let e: Value = serde_json::from_str(line).unwrap();
            let Some(positions) = e.pointer("/payload/grid/positions").and_then(Value::as_array) else { continue };
            let mut seen = BTreeSet::new();
            for p in positions {
                let pos = (p[1].as_i64().unwrap() as i32, p[2].as_i64().unwrap() as i32);
                prop_assert!(seen.insert(pos));
                prop_assert!(grid.walkable(pos));
            }
        }
    }
}
