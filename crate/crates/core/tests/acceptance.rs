//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any fails.

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::{Duration, Instant};

use num_rational::Ratio;
use sabm_core::analysis::{
    bounded_oscillation, converged, mann_whitney_u, stable_collusion_onset, two_proportion_test, Series,
};
use sabm_core::promptkit::{classify_variation, ActiveVariants, Level, MetricSample, PromptRegistry, VariantKind};
use sabm_core::provider::{CacheMode, CachingProvider, ProviderHandle, ReplayStore};
use sabm_core::runtime::{run, ExitReason, RunConfig, ScenarioKind, SimRng};
use sabm_core::scenarios::{self, evac, firm, guess, plea};
use sabm_core::validation;
use serde_json::{json, Value};

type Outcome = Result<String, String>;

fn prompts() -> Arc<PromptRegistry> {
    Arc::new(PromptRegistry::builtin())
}

fn check(cond: bool, what: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what.into())
    }
}

fn within(elapsed: Duration, limit: Duration, what: &str) -> Result<(), String> {
    check(elapsed < limit, format!("{what} took {elapsed:?}, limit {limit:?}"))
}

type Q = Ratio<i64>;

fn q(n: i64, d: i64) -> Q {
    Ratio::new(n, d)
}

/// Solves `[[a, b], [c, d]] x = [e, f]` exactly.
fn solve2(a: Q, b: Q, c: Q, d: Q, e: Q, f: Q) -> (Q, Q) {
    let det = a * d - b * c;
    ((e * d - b * f) / det, (a * f - e * c) / det)
}

fn to_f64(x: Q) -> f64 {
    *x.numer() as f64 / *x.denom() as f64
}

fn c1_equilibrium() -> Outcome {
    // First-order conditions in exact arithmetic.
    let (a, d, beta, c) = (q(14, 1), q(1, 300), q(1, 150), q(2, 1));
    let alpha = a * (beta - d);
    // Nash: 2 beta p_i - d p_j = alpha + beta c.
    let nash = solve2(beta * 2, -d, -d, beta * 2, alpha + beta * c, alpha + beta * c);
    // Joint profit: 2 beta p_i - 2 d p_j = alpha + (beta - d) c.
    let coll = solve2(
        beta * 2,
        -d * 2,
        -d * 2,
        beta * 2,
        alpha + (beta - d) * c,
        alpha + (beta - d) * c,
    );
    check(nash == (q(6, 1), q(6, 1)), format!("oracle Nash {nash:?}"))?;
    check(coll == (q(8, 1), q(8, 1)), format!("oracle monopoly {coll:?}"))?;

    let params = firm::MarketParams::default();
    let t = Instant::now();
    let pb = firm::bertrand_price(&params).map_err(|e| e.to_string())?;
    let pm = firm::monopoly_price(&params).map_err(|e| e.to_string())?;
    let elapsed = t.elapsed();
    for (got, want) in [(pb.0, nash.0), (pb.1, nash.1), (pm.0, coll.0), (pm.1, coll.1)] {
        check((got - to_f64(want)).abs() < 1e-9, format!("{got} vs {want}"))?;
    }
    within(elapsed, Duration::from_millis(1), "equilibrium")?;
    Ok(format!("p_B = {:?}, p_M = {:?}, {elapsed:?}", pb, pm))
}

fn c2_best_response() -> Outcome {
    let config = RunConfig::new(ScenarioKind::Firm, 7, 2000);
    let t = Instant::now();
    let out = run(
        &firm::FirmScenario::new(Default::default()),
        &config,
        prompts(),
        scenarios::scripted_provider(),
    )
    .map_err(|e| e.to_string())?;
    let elapsed = t.elapsed();
    let s = &out.state;
    check(
        s.firms[0].prices[0] == 2.0 && s.firms[1].prices[0] == 2.0,
        "round 1 prices are not the costs",
    )?;
    for f in &s.firms {
        check(
            (f.prices[9] - 6.0).abs() < 0.1,
            format!("round 10 price {}", f.prices[9]),
        )?;
    }
    // Unrounded best-response map: p' = 4.5 + p / 4.
    let mut p: f64 = 2.0;
    for _ in 1..10 {
        p = 4.5 + p / 4.0;
    }
    check((p - 6.0).abs() < 0.1, "oracle iteration")?;
    match &out.result.exit {
        ExitReason::Convergence { prices } => check(
            prices.iter().all(|p| (p - 6.0).abs() < 0.1),
            format!("converged to {prices:?}"),
        )?,
        other => return Err(format!("exit {other:?}")),
    }
    check(
        out.result.rounds == 400,
        format!("detector fired at round {}", out.result.rounds),
    )?;
    within(elapsed, Duration::from_secs(1), "duopoly run")?;
    Ok(format!(
        "round 10 at ({:.2}, {:.2}), converged at round {}, {elapsed:?}",
        s.firms[0].prices[9], s.firms[1].prices[9], out.result.rounds
    ))
}

fn c3_profits() -> Outcome {
    let params = firm::MarketParams::default();
    // Exact demand: (alpha - (beta - d) p) / (beta^2 - d^2) at a symmetric price.
    let exact = |p: Q| {
        let (a, d, beta) = (q(14, 1), q(1, 300), q(1, 150));
        let qty = (a * (beta - d) - (beta - d) * p) / (beta * beta - d * d);
        (qty, (p - q(2, 1)) * qty)
    };
    let mut notes = Vec::new();
    for (p, want) in [(q(7, 1), q(3500, 1)), (q(63, 10), q(3311, 1))] {
        let (qty, pi) = exact(p);
        check(pi == want, format!("oracle profit {pi} at {p}"))?;
        let pf = to_f64(p);
        let (q1, q2) = firm::demand(pf, pf, &params);
        let got = firm::profit(pf, 2.0, q1);
        check(
            (q1 - to_f64(qty)).abs() < 1e-9 && q1 == q2,
            format!("demand {q1} vs {qty}"),
        )?;
        check((got - to_f64(want)).abs() < 1e-9, format!("profit {got} vs {want}"))?;
        notes.push(format!("{pf}: {got:.6}"));
    }
    Ok(notes.join(", "))
}

fn window_with_outliers(outliers: usize) -> Series {
    let mut v = vec![7.0; 400];
    for k in 0..outliers {
        v[k * 97 % 400] = 9.0;
    }
    Series::new("p", v).expect("finite")
}

fn c4_detectors() -> Outcome {
    check(
        converged(&window_with_outliers(4), 8.0, 6.0, 400, 0.01).fired,
        "396/4 did not fire",
    )?;
    check(
        !converged(&window_with_outliers(6), 8.0, 6.0, 400, 0.01).fired,
        "394/6 fired",
    )?;
    let noisy = |amp: f64| {
        let mut rng = SimRng::new(11);
        let v: Vec<f64> = (0..800).map(|_| 7.0 + amp * (rng.next_f64() - 0.5)).collect();
        Series::new("p", v).expect("finite")
    };
    check(bounded_oscillation(&noisy(1.0), 2.0, 800).fired, "amplitude 1 refused")?;
    check(!bounded_oscillation(&noisy(3.0), 2.0, 800).fired, "amplitude 3 fired")?;
    let constant = |p: f64| Series::new("p", vec![p; 300]).expect("finite");
    let onset = stable_collusion_onset(&constant(7.0), 6.0, 8.0, 100, 0.5);
    check(
        onset.detail == Some(sabm_core::analysis::VerdictDetail::CollusionOnset(100)),
        format!("onset on 7.0: {:?}", onset.detail),
    )?;
    check(
        !stable_collusion_onset(&constant(6.0), 6.0, 8.0, 100, 0.5).fired,
        "onset fired on 6.0",
    )?;
    Ok("convergence 396/394, oscillation 1/3, onset 100/never".into())
}

fn guess_run(target: i64) -> Result<(Vec<i64>, ExitReason, Vec<String>), String> {
    let params = guess::GuessParams {
        target: Some(target),
        ..Default::default()
    };
    let config = RunConfig::new(ScenarioKind::Guess, 1, 20);
    let out = run(
        &guess::GuessScenario::new(params),
        &config,
        prompts(),
        scenarios::scripted_provider(),
    )
    .map_err(|e| e.to_string())?;
    Ok((out.state.trace(), out.result.exit, out.log))
}

fn c5_guess() -> Outcome {
    let t = Instant::now();
    let mut worst = 0;
    for target in 1..=100 {
        let (trace, exit, _) = guess_run(target)?;
        // Oracle: floor-midpoint bisection.
        let (mut lo, mut hi, mut expected) = (1i64, 100i64, Vec::new());
        loop {
            let g = (lo + hi).div_euclid(2);
            expected.push(g);
            if g == target {
                break;
            }
            if g > target {
                hi = g - 1;
            } else {
                lo = g + 1;
            }
        }
        check(trace == expected, format!("target {target}: {trace:?} vs {expected:?}"))?;
        check(trace.len() <= 7, format!("target {target} took {}", trace.len()))?;
        check(
            exit == ExitReason::Endpoint {
                reason: guess::CONGRATULATIONS.into(),
            },
            format!("target {target} exit {exit:?}"),
        )?;
        worst = worst.max(trace.len());
    }
    let elapsed = t.elapsed();
    let (trace, _, log) = guess_run(28)?;
    check(trace == vec![50, 25, 37, 31, 28], format!("target 28 trace {trace:?}"))?;
    check(
        log.iter().any(|l| l.contains("Congratulations!")),
        "no Congratulations! in the log",
    )?;
    within(elapsed, Duration::from_secs(1), "exhaustive guessing")?;
    Ok(format!("max {worst} guesses over 1..100, 28 -> {trace:?}, {elapsed:?}"))
}

fn c6_evac() -> Outcome {
    let mut slowest = Duration::ZERO;
    let mut max_rounds = 0;
    for seed in 1..=5u64 {
        let config = RunConfig::new(ScenarioKind::Evac, seed, 100);
        let t = Instant::now();
        let out = run(
            &evac::EvacScenario::new(Default::default()),
            &config,
            prompts(),
            scenarios::scripted_provider(),
        )
        .map_err(|e| e.to_string())?;
        slowest = slowest.max(t.elapsed());
        check(out.state.agents.len() == 100, "agent count")?;
        check(
            out.result.rounds <= 50,
            format!("seed {seed} ran {} rounds", out.result.rounds),
        )?;
        max_rounds = max_rounds.max(out.result.rounds);
        let mut last_escaped = 0;
        let mut frames = 0;
        for line in &out.log {
            let event: Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
            let Some(grid) = event.pointer("/payload/grid") else {
                continue;
            };
            frames += 1;
            let mut seen = BTreeSet::new();
            for p in grid["positions"].as_array().into_iter().flatten() {
                check(
                    seen.insert((p[1].as_i64(), p[2].as_i64())),
                    format!("seed {seed}: double occupancy {p}"),
                )?;
            }
            check(
                grid["right_exit"].as_u64().unwrap_or(99) <= 1,
                format!("seed {seed}: right exit {}", grid["right_exit"]),
            )?;
            let escaped = grid["escaped"].as_u64().unwrap_or(0);
            check(
                escaped >= last_escaped,
                format!("seed {seed}: escaped fell to {escaped}"),
            )?;
            last_escaped = escaped;
        }
        check(
            frames as u64 == out.result.rounds,
            format!("seed {seed}: {frames} frames"),
        )?;
        let again = run(
            &evac::EvacScenario::new(Default::default()),
            &config,
            prompts(),
            scenarios::scripted_provider(),
        )
        .map_err(|e| e.to_string())?;
        check(again.log == out.log, format!("seed {seed}: logs differ"))?;
    }
    within(slowest, Duration::from_secs(10), "evacuation run")?;
    Ok(format!("5 seeds, at most {max_rounds} rounds, slowest {slowest:?}"))
}

/// Two-sided p by enumerating every labeling, with U counted pairwise.
fn enumerated_p(a: &[f64], b: &[f64]) -> f64 {
    let doubled_u = |x: &[f64], y: &[f64]| -> i64 {
        x.iter()
            .flat_map(|&u| {
                y.iter().map(move |&v| {
                    if u > v {
                        2
                    } else if u == v {
                        1
                    } else {
                        0
                    }
                })
            })
            .sum()
    };
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (na, nb) = (a.len(), b.len());
    let center = (na * nb) as i64;
    let observed = (doubled_u(a, b) - center).abs();
    let (mut extreme, mut total) = (0u64, 0u64);
    for mask in 0u32..(1 << pooled.len()) {
        if mask.count_ones() as usize != na {
            continue;
        }
        let (x, y): (Vec<(usize, f64)>, Vec<(usize, f64)>) = pooled
            .iter()
            .copied()
            .enumerate()
            .partition(|(i, _)| mask & (1 << i) != 0);
        let x: Vec<f64> = x.into_iter().map(|(_, v)| v).collect();
        let y: Vec<f64> = y.into_iter().map(|(_, v)| v).collect();
        total += 1;
        if (doubled_u(&x, &y) - center).abs() >= observed {
            extreme += 1;
        }
    }
    extreme as f64 / total as f64
}

fn c7_mann_whitney() -> Outcome {
    let mut rng = SimRng::new(2024);
    let mut cases = 0;
    for na in 1..=6 {
        for nb in 1..=6 {
            for _ in 0..10 {
                // Small integer support so that ties occur.
                let a: Vec<f64> = (0..na).map(|_| rng.below(6) as f64).collect();
                let b: Vec<f64> = (0..nb).map(|_| rng.below(6) as f64).collect();
                let got = mann_whitney_u(&a, &b).map_err(|e| e.to_string())?.p_two_sided;
                let want = enumerated_p(&a, &b);
                check((got - want).abs() < 1e-12, format!("{a:?} vs {b:?}: {got} vs {want}"))?;
                let same = mann_whitney_u(&a, &a).map_err(|e| e.to_string())?.p_two_sided;
                check(same == 1.0, format!("identical samples {a:?}: p = {same}"))?;
                cases += 1;
            }
        }
    }
    Ok(format!("{cases} random sample pairs match enumeration"))
}

fn c8_replay() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let store_path = dir.path().join("cache.jsonl");
    let params = guess::GuessParams {
        target: Some(71),
        ..Default::default()
    };
    let config = RunConfig::new(ScenarioKind::Guess, 5, 20);
    let scripted = scenarios::scripted_provider();
    let store = Arc::new(ReplayStore::open(&store_path).map_err(|e| e.to_string())?);
    let recorder = Arc::new(CachingProvider::new(
        store,
        CacheMode::Record,
        Some(scripted.clone() as ProviderHandle),
    ));
    let first = run(
        &guess::GuessScenario::new(params.clone()),
        &config,
        prompts(),
        recorder.clone(),
    )
    .map_err(|e| e.to_string())?;
    let recorded_calls = scripted.calls();
    let cache_bytes = std::fs::read(&store_path).map_err(|e| e.to_string())?;

    let store = Arc::new(ReplayStore::open(&store_path).map_err(|e| e.to_string())?);
    let replayer = Arc::new(CachingProvider::replay(store));
    let second =
        run(&guess::GuessScenario::new(params), &config, prompts(), replayer.clone()).map_err(|e| e.to_string())?;
    check(scripted.calls() == recorded_calls, "backend called during replay")?;
    check(replayer.inner_calls() == 0, "replay forwarded requests")?;
    check(first.log == second.log, "replayed log differs")?;
    check(
        std::fs::read(&store_path).map_err(|e| e.to_string())? == cache_bytes,
        "replay mutated the cache",
    )?;
    Ok(format!(
        "{recorded_calls} recorded calls, 0 on replay, {} identical log lines",
        first.log.len()
    ))
}

fn c9_tcu() -> Outcome {
    let key = plea::parse_questionnaire(plea::DEFAULT_TCU_ITEMS).map_err(|e| e.to_string())?;
    check(key.len() == 36, "questionnaire size")?;
    let uncertain = plea::TcuAnswerSheet {
        answers: vec![plea::Likert::Uncertain; 36],
        declined: Vec::new(),
    };
    let s = plea::score_tcu(&uncertain, &key).map_err(|e| e.to_string())?;
    check(
        [s.hostility, s.risk_taking, s.social_support]
            .iter()
            .all(|v| (v - 30.0).abs() < 1e-9),
        format!("all-uncertain scores {s:?}"),
    )?;

    let scale = [
        plea::Likert::DisagreeStrongly,
        plea::Likert::Disagree,
        plea::Likert::Uncertain,
        plea::Likert::Agree,
        plea::Likert::AgreeStrongly,
    ];
    let mut rng = SimRng::new(9);
    for _ in 0..100 {
        let answers: Vec<plea::Likert> = (0..36).map(|_| scale[rng.below(5) as usize]).collect();
        let sheet = plea::TcuAnswerSheet {
            answers: answers.clone(),
            declined: Vec::new(),
        };
        let base = plea::score_tcu(&sheet, &key).map_err(|e| e.to_string())?;
        let perm = rng.permutation(36);
        let shuffled = plea::TcuAnswerSheet {
            answers: perm.iter().map(|&k| answers[k]).collect(),
            declined: Vec::new(),
        };
        let shuffled_key: Vec<plea::TcuItem> = perm.iter().map(|&k| key[k].clone()).collect();
        let again = plea::score_tcu(&shuffled, &shuffled_key).map_err(|e| e.to_string())?;
        for (x, y) in [
            (base.hostility, again.hostility),
            (base.risk_taking, again.risk_taking),
            (base.social_support, again.social_support),
        ] {
            check((x - y).abs() < 1e-9, format!("{base:?} vs {again:?}"))?;
        }
    }

    let gaps = [3usize, 17, 20, 35];
    let batch = |first: usize| {
        (first..first + 18)
            .filter(|k| !gaps.contains(k))
            .map(|k| format!("{}. {}", k + 1, if k % 2 == 0 { "agree" } else { "disagree strongly" }))
            .collect::<Vec<_>>()
            .join("\n")
    };
    let (b1, b2) = (batch(0), batch(18));
    let sheet = plea::sheet_from_batches(&[&b1, &b2]);
    check(sheet.answers.len() == 36, format!("{} answers", sheet.answers.len()))?;
    check(sheet.declined == gaps, format!("declined {:?}", sheet.declined))?;
    for (k, a) in sheet.answers.iter().enumerate() {
        let want = if gaps.contains(&k) {
            plea::Likert::Uncertain
        } else if k % 2 == 0 {
            plea::Likert::Agree
        } else {
            plea::Likert::DisagreeStrongly
        };
        check(*a == want, format!("item {}: {a:?}", k + 1))?;
    }
    Ok("30/30/30 on all-uncertain, 100 shuffles invariant, gaps at 4, 18, 21, 36 read as uncertain".into())
}

fn c10_temperature() -> Outcome {
    let mut rng = SimRng::new(31337);
    let n = 100_000;
    let (mut sum, mut interior) = (0.0, 0usize);
    for _ in 0..n {
        let t = plea::sample_temperature(&mut rng).map_err(|e| e.to_string())?;
        check((0.0..=2.0).contains(&t), format!("draw {t}"))?;
        sum += t;
        interior += usize::from(t > 0.0 && t < 2.0);
    }
    let mean = sum / n as f64;
    let share = interior as f64 / n as f64;
    check((mean - 1.0).abs() <= 0.05, format!("mean {mean}"))?;
    check(share >= 0.995, format!("interior share {share}"))?;
    Ok(format!("mean {mean:.4}, interior {:.3}%", share * 100.0))
}

fn c11_plea() -> Outcome {
    let params = plea::PleaParams {
        n_agents: 200,
        factors: vec![plea::Factor::Substantive, plea::Factor::Risk],
        self_perceptions: vec![plea::SelfPerception::Guilty, plea::SelfPerception::Innocent],
        ..Default::default()
    };
    let mut config = RunConfig::new(ScenarioKind::Plea, 3, 100);
    config.scenario_params = json!(params);
    let result =
        scenarios::run_scenario(&config, prompts(), scenarios::scripted_provider()).map_err(|e| e.to_string())?;
    let cells = result.metrics["cells"].as_array().cloned().unwrap_or_default();
    let cell = |factor: &str, sp: &str, period: u64, prob: u64| {
        cells.iter().find(|c| {
            c["factor"] == factor
                && c["case"]["self_perception"] == sp
                && c["case"]["period_months"] == period
                && c["case"]["conviction_probability"] == prob
        })
    };
    let counts = |c: &Value| (c["accepted"].as_u64().unwrap_or(0), c["n"].as_u64().unwrap_or(0));
    let g = cell("substantive", "guilty", 30, 50).ok_or("missing guilty cell")?;
    let i = cell("substantive", "innocent", 30, 50).ok_or("missing innocent cell")?;
    let ((kg, ng), (ki, ni)) = (counts(g), counts(i));
    check(ng == 200 && ni == 200, format!("arm sizes {ng}, {ni}"))?;
    check(kg == 200 && ki == 0, format!("WTAP {kg}/{ng} vs {ki}/{ni}"))?;
    let p = two_proportion_test(kg, ng, ki, ni)
        .map_err(|e| e.to_string())?
        .p_two_sided;
    check(p < 0.001, format!("p = {p}"))?;
    for sp in ["guilty", "innocent"] {
        let wtap: Vec<f64> = plea::RISK_GRID
            .iter()
            .map(|&(period, prob)| {
                cell("risk", sp, u64::from(period), u64::from(prob))
                    .and_then(|c| c["wtap"].as_f64())
                    .unwrap_or(f64::NAN)
            })
            .collect();
        check(wtap.iter().all(|w| w.is_finite()), format!("{sp} risk grid incomplete"))?;
        check(
            wtap.windows(2).all(|w| w[0] <= w[1]),
            format!("{sp} risk grid {wtap:?}"),
        )?;
    }
    Ok(format!(
        "guilty {kg}/{ng} vs innocent {ki}/{ni}, p = {p:.2e}; risk grid monotone"
    ))
}

fn guess_arm(variants: ActiveVariants) -> Result<MetricSample, String> {
    let mut base = RunConfig::new(ScenarioKind::Guess, 100, 60);
    base.scenario_params = json!({"target_source": "random"});
    let plan = validation::ValidationPlan {
        base,
        arms: Vec::new(),
        runs_per_arm: 30,
        alpha: 0.05,
    };
    let mut results = Vec::new();
    for config in plan.arm_configs(&variants) {
        results.push(
            scenarios::run_scenario(&config, prompts(), scenarios::scripted_provider()).map_err(|e| e.to_string())?,
        );
    }
    Ok(validation::sample_from(&results))
}

fn c12_classifier() -> Outcome {
    let baseline = guess_arm(ActiveVariants::none())?;
    let repeat = guess_arm(ActiveVariants::none())?;
    let no_bsearch = guess_arm(ActiveVariants::none().with("guess.knowledge", VariantKind::Elements, "no_bsearch"))?;
    let low = classify_variation(&baseline, &repeat, 0.05).map_err(|e| e.to_string())?;
    check(low.level == Level::Low, format!("identical arms: {low:?}"))?;
    let medium = classify_variation(&baseline, &no_bsearch, 0.05).map_err(|e| e.to_string())?;
    check(
        medium.level == Level::Medium,
        format!(
            "bisect arms: {:?} ({:.2} vs {:.2})",
            medium,
            baseline.mean(),
            no_bsearch.mean()
        ),
    )?;
    let mut other = MetricSample::default();
    for v in &baseline.values {
        other.push(*v, "other");
    }
    let high = classify_variation(&baseline, &other, 0.05).map_err(|e| e.to_string())?;
    check(high.level == Level::High, format!("relabeled arm: {high:?}"))?;
    Ok(format!(
        "low, medium (mean {:.2} vs {:.2}, p = {:.2e}), high",
        baseline.mean(),
        no_bsearch.mean(),
        medium.evidence.p_value.unwrap_or(f64::NAN)
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("equilibrium exactness", c1_equilibrium),
        ("best-response convergence", c2_best_response),
        ("profit plateaus", c3_profits),
        ("detector properties", c4_detectors),
        ("number guessing oracle", c5_guess),
        ("evacuation invariants", c6_evac),
        ("Mann-Whitney exactness", c7_mann_whitney),
        ("replay closure", c8_replay),
        ("TCU scoring", c9_tcu),
        ("temperature sampler", c10_temperature),
        ("plea battery", c11_plea),
        ("variation classifier", c12_classifier),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(note) => println!("PASS {:>2} {name}: {note}", k + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", k + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
