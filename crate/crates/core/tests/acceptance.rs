//! Prints one line per acceptance criterion and exits non-zero if any
//! criterion failed.

mod common;

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use usersim::agents::{
    plan_for, run_turn_with_plan, AgentContext, AgentError, Limits, SimulationSettings, Step,
};
use usersim::domain::{
    Complexity, ConfigId, ExplainabilityTier, MatchRules, Outcome, TaskItem, TaskState, TestCase,
};
use usersim::harness::{
    aggregate_report, persist, run_ablation, AgentSuite, BackendMode, RunConfig, Scenarios,
};
use usersim::metrics::{
    bvs_from_rate, composite_score, decision_explainability, task_adherence, welch_t_test,
};

use common::{bundle, CyclingGuest};

type Verdict = Result<String, String>;

const CRRS_TOLERANCE: f64 = 0.0005;
const P_VALUE_TOLERANCE: f64 = 1e-6;

fn criterion_1_crrs_consistency() -> Verdict {
    // (PAS, BVS, TRA, DEI, CRRS) per configuration row.
    let rows = [
        (1, 0.589, 0.218, 0.608, 0.000, 0.404),
        (2, 0.585, 0.485, 0.582, 0.200, 0.487),
        (3, 0.554, 0.689, 0.785, 0.498, 0.651),
        (4, 0.661, 0.000, 0.602, 0.432, 0.462),
        (5, 0.706, 0.839, 0.785, 0.994, 0.818),
    ];
    let mut worst: f64 = 0.0;
    for (cfg, pas, bvs, tra, dei, crrs) in rows {
        let got = composite_score(pas, bvs, tra, dei).map_err(|e| e.to_string())?;
        let err = (got - crrs).abs();
        worst = worst.max(err);
        if err > CRRS_TOLERANCE {
            return Err(format!("config {cfg}: {got:.5} vs {crrs}"));
        }
    }
    Ok(format!("5 rows, max |error| {worst:.5}"))
}

/// F1 over index sets, written independently of the crate.
fn f1_oracle(current: &[usize], target: &[usize]) -> f64 {
    let hits = current.iter().filter(|c| target.contains(c)).count() as f64;
    if hits == 0.0 {
        return 0.0;
    }
    let p = hits / current.len() as f64;
    let r = hits / target.len() as f64;
    2.0 * p * r / (p + r)
}

fn subsets(n: usize, max: usize) -> Vec<Vec<usize>> {
    (0u32..1 << n)
        .filter(|m| m.count_ones() as usize <= max)
        .map(|m| (0..n).filter(|i| m & (1 << i) != 0).collect())
        .collect()
}

fn criterion_2_tra_oracle() -> Verdict {
    let vocab = [
        "veggie burger",
        "large fries",
        "cola",
        "caesar salad",
        "chocolate shake",
        "onion rings",
    ];
    let surface = [
        "The Veggie Burger!",
        "LARGE fries",
        "a cola, please",
        "Caesar  Salad",
        "Chocolate Shake.",
        "some onion rings",
    ];
    let rules = MatchRules::default();
    let all = subsets(vocab.len(), 4);
    let mut cases = 0;
    for target in all.iter().filter(|t| !t.is_empty()) {
        for current in &all {
            let state = TaskState::from_parts(
                current
                    .iter()
                    .map(|&i| TaskItem::single(surface[i]))
                    .collect(),
                target.iter().map(|&i| TaskItem::single(vocab[i])).collect(),
            );
            let got = task_adherence(&state, &rules);
            let want = f1_oracle(current, target);
            if got != want {
                return Err(format!(
                    "current {current:?} target {target:?}: {got} vs {want}"
                ));
            }
            cases += 1;
        }
    }
    Ok(format!("{cases} pairs exact"))
}

fn criterion_3_bvs_shape() -> Verdict {
    if bvs_from_rate(0.2) != 1.0 || bvs_from_rate(0.0) != 0.0 || bvs_from_rate(1.0) != 0.0 {
        return Err("endpoint or peak value wrong".into());
    }
    let sweep: Vec<f64> = (0..=100)
        .map(|i| bvs_from_rate(f64::from(i) / 100.0))
        .collect();
    for (i, w) in sweep.windows(2).enumerate() {
        let rising = i < 20;
        if (rising && w[1] < w[0]) || (!rising && w[1] > w[0]) {
            return Err(format!("not monotone at step {i}"));
        }
    }
    let peak = sweep
        .iter()
        .enumerate()
        .filter(|(_, v)| **v == 1.0)
        .map(|(i, _)| i)
        .collect::<Vec<_>>();
    if peak != [20] {
        return Err(format!("maximum at {peak:?}"));
    }
    Ok("peak 1.0 at 0.2, zero at both ends, 101-point sweep monotone".into())
}

fn criterion_4_dei_table() -> Verdict {
    let n = 10usize;
    let mut checked = 0;
    for ed in 0..=60usize {
        let ratio = ed as f64 / n as f64;
        let expect = [
            (ExplainabilityTier::None, 0.0),
            (ExplainabilityTier::Basic, (ratio * 0.2).min(0.2)),
            (ExplainabilityTier::BasicPlusOne, (ratio * 0.5).min(0.5)),
            (
                ExplainabilityTier::Full,
                (ed as f64 / (2 * n) as f64).min(1.0),
            ),
        ];
        for (tier, want) in expect {
            let got = decision_explainability(ed, n, tier);
            if got != want {
                return Err(format!("{tier:?} ED={ed} N={n}: {got} vs {want}"));
            }
            checked += 1;
        }
    }
    let caps = [
        decision_explainability(1000, n, ExplainabilityTier::Basic),
        decision_explainability(1000, n, ExplainabilityTier::BasicPlusOne),
        decision_explainability(1000, n, ExplainabilityTier::Full),
    ];
    if caps != [0.2, 0.5, 1.0] {
        return Err(format!("caps {caps:?}"));
    }
    Ok(format!("{checked} grid points, caps 0.2/0.5/1.0"))
}

fn criterion_5_protocol(sc: &Scenarios) -> Verdict {
    let mut subset = sc.clone();
    subset.test_cases.truncate(20);
    let run = RunConfig {
        parallelism: 4,
        ..RunConfig::scripted(ConfigId::Full, 11)
    };
    let suite = AgentSuite::scripted(&subset, run.seed);
    let result = run_ablation(&run, &subset, &suite, None).map_err(|e| e.to_string())?;
    let mut turns = 0;
    for log in &result.logs {
        for t in log.guest_turns() {
            let pos = |name: &str| t.protocol_trace.iter().position(|s| s == name);
            match (
                pos("state_tracking"),
                pos("message_attributes"),
                pos("respond"),
            ) {
                (Some(s), Some(a), Some(r)) if s < a && a < r => turns += 1,
                _ => {
                    return Err(format!(
                        "{} turn {}: trace {:?}",
                        log.test_case_id, t.index, t.protocol_trace
                    ))
                }
            }
            let tools: Vec<_> = t.tool_calls.iter().map(|c| c.tool_name.as_str()).collect();
            let s = tools.iter().position(|n| *n == "state_tracking");
            let a = tools.iter().position(|n| *n == "message_attributes");
            if !matches!((s, a), (Some(s), Some(a)) if s < a) {
                return Err(format!(
                    "{} turn {}: tool order {tools:?}",
                    log.test_case_id, t.index
                ));
            }
        }
    }

    let settings = SimulationSettings {
        rules: subset.rules.clone(),
        ..SimulationSettings::default()
    };
    let backends = suite.backends(&subset.menu);
    let inverted = [Step::MessageAttributes, Step::StateTracking, Step::Respond];
    let respond_only = [Step::Respond];
    let mut detected = 0;
    for tc in &subset.test_cases {
        let persona = subset.persona(&tc.persona_id).unwrap();
        for plan in [&inverted[..], &respond_only[..]] {
            let mut ctx = AgentContext::new(tc, persona, ConfigId::Full);
            match run_turn_with_plan(
                &mut ctx,
                "Hi! What can I get you?",
                plan,
                &backends,
                &settings,
            ) {
                Err(AgentError::ProtocolViolation { .. }) => detected += 1,
                other => return Err(format!("{}: plan {plan:?} gave {other:?}", tc.id)),
            }
        }
    }
    if plan_for(ConfigId::Full) != [Step::StateTracking, Step::MessageAttributes, Step::Respond] {
        return Err("default plan order".into());
    }
    Ok(format!(
        "{} conversations, {turns} guest turns ordered, {detected}/{detected} inversions rejected",
        result.logs.len()
    ))
}

fn random_case(rng: &mut ChaCha8Rng, sc: &Scenarios, i: usize) -> TestCase {
    let n = rng.random_range(1..=4);
    let items: Vec<_> = sc.menu.items.choose_multiple(rng, n).collect();
    let target = items
        .into_iter()
        .map(|m| {
            let text = match m.modifiers.choose(rng) {
                Some(modifier) if rng.random_bool(0.4) => format!("{}, {modifier}", m.name),
                _ => m.name.clone(),
            };
            TaskItem::new(text, if rng.random_bool(0.2) { 2 } else { 1 }).unwrap()
        })
        .collect();
    TestCase {
        id: format!("rand-{i:03}"),
        persona_id: sc.personas.choose(rng).unwrap().id.clone(),
        target,
        complexity: Complexity::Medium,
    }
}

/// Superset check by explicit counting, independent of the tracker.
fn covers(state: &TaskState, rules: &MatchRules) -> bool {
    let mut used = vec![false; state.current().len()];
    state.target().iter().all(|t| {
        let hit = state
            .current()
            .iter()
            .enumerate()
            .find(|(i, c)| !used[*i] && rules.items_match(c, t))
            .map(|(i, _)| i);
        hit.map(|i| used[i] = true).is_some()
    })
}

fn criterion_6_exit_gating(sc: &Scenarios) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut randomized = sc.clone();
    randomized.test_cases = (0..40).map(|i| random_case(&mut rng, sc, i)).collect();
    let mut checked = 0;
    let mut completed = 0;
    for config in [ConfigId::WithStateTracking, ConfigId::Full] {
        for seed in [1, 2, 3] {
            let run = RunConfig {
                parallelism: 4,
                ..RunConfig::scripted(config, seed)
            };
            let suite = AgentSuite::scripted(&randomized, seed);
            let result =
                run_ablation(&run, &randomized, &suite, None).map_err(|e| e.to_string())?;
            for log in &result.logs {
                let done = log.outcome == Outcome::Completed;
                if done != covers(&log.final_state, &randomized.rules) {
                    return Err(format!(
                        "config {config} seed {seed} {}: outcome {:?}",
                        log.test_case_id, log.outcome
                    ));
                }
                completed += usize::from(done);
                checked += 1;
            }
        }
    }

    let mut thresholds = 0;
    let tc = &sc.test_cases[0];
    let persona = sc.persona(&tc.persona_id).unwrap();
    for config in ConfigId::ALL {
        for max_turns in [1u32, 2, 5, 9] {
            let mut suite = AgentSuite::scripted(sc, 0);
            suite.guest = Box::new(CyclingGuest { period: 1000 });
            let settings = SimulationSettings {
                limits: Limits {
                    max_turns,
                    repetition_window: 3,
                },
                rules: sc.rules.clone(),
                ..SimulationSettings::default()
            };
            let log = usersim::agents::run_conversation(
                tc,
                persona,
                config,
                &suite.backends(&sc.menu),
                &settings,
            );
            if log.outcome != Outcome::TurnLimit || log.guest_turns().count() != max_turns as usize
            {
                return Err(format!(
                    "config {config} max_turns {max_turns}: {:?} after {}",
                    log.outcome,
                    log.guest_turns().count()
                ));
            }
            thresholds += 1;
        }
        for window in 1usize..=4 {
            for (period, expect) in [
                (window as u32, Outcome::RepetitionAbort),
                (window as u32 + 1, Outcome::TurnLimit),
            ] {
                let mut suite = AgentSuite::scripted(sc, 0);
                suite.guest = Box::new(CyclingGuest { period });
                let settings = SimulationSettings {
                    limits: Limits {
                        max_turns: 12,
                        repetition_window: window,
                    },
                    rules: sc.rules.clone(),
                    ..SimulationSettings::default()
                };
                let log = usersim::agents::run_conversation(
                    tc,
                    persona,
                    config,
                    &suite.backends(&sc.menu),
                    &settings,
                );
                let turns = log.guest_turns().count();
                let at = if expect == Outcome::RepetitionAbort {
                    period as usize + 1
                } else {
                    12
                };
                if log.outcome != expect || turns != at {
                    return Err(format!(
                        "config {config} window {window} period {period}: {:?} after {turns}",
                        log.outcome
                    ));
                }
                thresholds += 1;
            }
        }
    }
    Ok(format!(
        "{checked} randomized conversations ({completed} completed) agree with the superset oracle; {thresholds} threshold runs exact"
    ))
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_owned()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn full_ablation(sc: &Scenarios, parallelism: usize, out: &Path) -> Result<(), String> {
    let mut results = Vec::new();
    for config in ConfigId::ALL {
        let run = RunConfig {
            parallelism,
            ..RunConfig::scripted(config, 5)
        };
        let suite = AgentSuite::scripted(sc, run.seed);
        let r = run_ablation(&run, sc, &suite, None).map_err(|e| e.to_string())?;
        persist(out, &run, &r).map_err(|e| e.to_string())?;
        results.push(r);
    }
    usersim::harness::write_report(&out.join("report.json"), &aggregate_report(&results))
        .map_err(|e| e.to_string())?;
    Ok(())
}

fn criterion_7_determinism(sc: &Scenarios) -> Verdict {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    full_ablation(sc, 1, a.path())?;
    full_ablation(sc, 8, b.path())?;
    // run.json records the parallelism setting itself, so it is left out.
    let strip = |mut t: BTreeMap<String, Vec<u8>>| {
        t.retain(|k, _| !k.ends_with("run.json"));
        t
    };
    let (ta, tb) = (strip(tree(a.path())), strip(tree(b.path())));
    if ta.keys().ne(tb.keys()) {
        return Err("different file sets".into());
    }
    if let Some((name, _)) = ta.iter().find(|(k, v)| tb[*k] != **v) {
        return Err(format!("{name} differs"));
    }
    let logs = ta.keys().filter(|k| k.ends_with(".jsonl")).count();
    Ok(format!(
        "{} files ({logs} logs) byte-identical at parallelism 1 and 8",
        ta.len()
    ))
}

fn criterion_8_statistics() -> Verdict {
    let pair3_a: Vec<f64> = (0..60)
        .map(|i| 0.40 + 0.05 * (1.7 * f64::from(i)).sin())
        .collect();
    let pair3_b: Vec<f64> = (0..60)
        .map(|i| 0.82 + 0.04 * (2.3 * f64::from(i)).cos())
        .collect();
    let pairs: [(&[f64], &[f64], f64); 3] = [
        (
            &[0.61, 0.55, 0.72, 0.48, 0.66, 0.59, 0.70, 0.52],
            &[0.74, 0.81, 0.69, 0.88, 0.77, 0.83, 0.71, 0.79, 0.85, 0.76],
            0.0002941353312277418,
        ),
        (
            &[12.1, 14.3, 11.8, 13.5, 12.9],
            &[12.4, 13.1, 12.8, 14.0, 12.2, 13.3, 12.7],
            0.9871487220029345,
        ),
        (&pair3_a, &pair3_b, 5.57364071448558e-96),
    ];
    let mut worst: f64 = 0.0;
    for (i, (a, b, want)) in pairs.iter().enumerate() {
        let got = welch_t_test(a, b).map_err(|e| e.to_string())?.p_value;
        worst = worst.max((got - want).abs());
        if (got - want).abs() > P_VALUE_TOLERANCE {
            return Err(format!("pair {}: p {got} vs {want}", i + 1));
        }
    }
    let same = welch_t_test(pairs[0].0, pairs[0].0)
        .map_err(|e| e.to_string())?
        .p_value;
    if same != 1.0 {
        return Err(format!("identical samples gave p = {same}"));
    }
    Ok(format!(
        "3 pairs, max |dp| {worst:.2e}; identical samples p = 1"
    ))
}

fn criterion_9_remote_smoke(sc: &Scenarios) -> Option<Verdict> {
    std::env::var("SIM_API_KEY").ok()?;
    let mut small = sc.clone();
    let persona = small.test_cases[0].persona_id.clone();
    small.test_cases.retain(|t| t.persona_id == persona);
    small.test_cases.truncate(3);
    let run = |config| -> Result<_, String> {
        let rc = RunConfig {
            backend_mode: BackendMode::Remote,
            parallelism: 3,
            ..RunConfig::scripted(config, 0)
        };
        let suite = AgentSuite::for_run(&rc, &small).map_err(|e| e.to_string())?;
        run_ablation(&rc, &small, &suite, None).map_err(|e| e.to_string())
    };
    Some((|| {
        let base = run(ConfigId::Baseline)?;
        let full = run(ConfigId::Full)?;
        let mean = |r: &usersim::harness::RunResult,
                    f: fn(&usersim::metrics::ConversationMetrics) -> f64| {
            r.report.per_conversation.iter().map(f).sum::<f64>()
                / r.report.per_conversation.len() as f64
        };
        let (d1, d5) = (mean(&base, |m| m.values.dei), mean(&full, |m| m.values.dei));
        let (c1, c5) = (
            mean(&base, |m| m.values.crrs),
            mean(&full, |m| m.values.crrs),
        );
        if d5 > d1 && c5 > c1 {
            Ok(format!("DEI {d1:.3} -> {d5:.3}, CRRS {c1:.3} -> {c5:.3}"))
        } else {
            Err(format!("DEI {d1:.3} -> {d5:.3}, CRRS {c1:.3} -> {c5:.3}"))
        }
    })())
}

fn main() {
    let sc = bundle();
    let results: Vec<(&str, Option<Verdict>)> = vec![
        ("1 CRRS consistency", Some(criterion_1_crrs_consistency())),
        ("2 TRA oracle equivalence", Some(criterion_2_tra_oracle())),
        ("3 BVS piecewise shape", Some(criterion_3_bvs_shape())),
        ("4 DEI tier table", Some(criterion_4_dei_table())),
        ("5 protocol ordering", Some(criterion_5_protocol(&sc))),
        ("6 exit gating", Some(criterion_6_exit_gating(&sc))),
        ("7 determinism", Some(criterion_7_determinism(&sc))),
        ("8 Welch p-values", Some(criterion_8_statistics())),
        ("9 remote directional smoke", criterion_9_remote_smoke(&sc)),
    ];
    let mut failed = Vec::new();
    for (name, verdict) in &results {
        match verdict {
            Some(Ok(detail)) => println!("PASS  criterion {name}: {detail}"),
            Some(Err(detail)) => {
                println!("FAIL  criterion {name}: {detail}");
                failed.push(*name);
            }
            None => println!("SKIP  criterion {name}: SIM_API_KEY not set"),
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
