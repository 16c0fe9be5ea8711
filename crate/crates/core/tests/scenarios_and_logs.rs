mod common;

use std::fs;
use std::path::Path;

use serde_json::Value;
use usersim::domain::{Complexity, Outcome};
use usersim::harness::{
    load_scenarios, log_path, parse_jsonl, read_log, read_logs, run_ablation, to_jsonl, write_log,
    AgentSuite, HarnessError, RunConfig, MATCHING_FILE, MENU_FILE, PERSONAS_FILE, TEST_CASES_FILE,
};
use usersim::ConfigId;

use common::{bundle, bundle_dir};

fn copy_bundle(to: &Path) {
    for f in [MENU_FILE, PERSONAS_FILE, TEST_CASES_FILE] {
        fs::copy(bundle_dir().join(f), to.join(f)).unwrap();
    }
}

fn edit(path: &Path, f: impl FnOnce(&mut Value)) {
    let mut v: Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    f(&mut v);
    fs::write(path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
}

#[test]
fn example_bundle_shape() {
    let sc = bundle();
    assert_eq!(sc.personas.len(), 20);
    assert_eq!(sc.test_cases.len(), 60);
    for cat in [Complexity::Simple, Complexity::Medium, Complexity::Complex] {
        assert_eq!(
            sc.test_cases.iter().filter(|t| t.complexity == cat).count(),
            20
        );
    }
    assert!(sc
        .test_cases
        .iter()
        .all(|t| sc.persona(&t.persona_id).is_some()));
}

#[test]
fn missing_menu_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    copy_bundle(dir.path());
    fs::remove_file(dir.path().join(MENU_FILE)).unwrap();
    let err = load_scenarios(dir.path()).unwrap_err();
    assert!(
        matches!(&err, HarnessError::MissingFile(p) if p.ends_with(MENU_FILE)),
        "{err}"
    );
    assert!(!err.is_schema_error());
}

#[test]
fn unknown_mood_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    copy_bundle(dir.path());
    edit(&dir.path().join(PERSONAS_FILE), |v| {
        v[3]["expected_attributes"]["mood_tone"] = "angry".into()
    });
    let err = load_scenarios(dir.path()).unwrap_err();
    match &err {
        HarnessError::Schema { file, field, .. } => {
            assert!(file.ends_with(PERSONAS_FILE));
            assert!(field.contains("mood_tone"), "{field}");
        }
        other => panic!("unexpected {other}"),
    }
    assert!(err.is_schema_error());
}

#[test]
fn target_outside_menu_is_invalid() {
    let dir = tempfile::tempdir().unwrap();
    copy_bundle(dir.path());
    edit(&dir.path().join(TEST_CASES_FILE), |v| {
        v[0]["target"][0]["raw_text"] = "deep fried unicorn".into()
    });
    let err = load_scenarios(dir.path()).unwrap_err();
    assert!(
        matches!(&err, HarnessError::Invalid { file, .. } if file.ends_with(TEST_CASES_FILE)),
        "{err}"
    );
}

#[test]
fn duplicate_persona_is_invalid() {
    let dir = tempfile::tempdir().unwrap();
    copy_bundle(dir.path());
    edit(&dir.path().join(PERSONAS_FILE), |v| {
        let first = v[0].clone();
        v.as_array_mut().unwrap().push(first);
    });
    assert!(load_scenarios(dir.path()).unwrap_err().is_schema_error());
}

#[test]
fn matching_file_overrides_fillers() {
    let dir = tempfile::tempdir().unwrap();
    copy_bundle(dir.path());
    fs::write(
        dir.path().join(MATCHING_FILE),
        r#"{"fillers": ["please", "big"]}"#,
    )
    .unwrap();
    let sc = load_scenarios(dir.path()).unwrap();
    assert_eq!(
        sc.rules.normalizer.normalize("A big cola, please").as_str(),
        "a cola"
    );
    fs::write(dir.path().join(MATCHING_FILE), r#"{"filers": []}"#).unwrap();
    assert!(load_scenarios(dir.path()).unwrap_err().is_schema_error());
}

#[test]
fn logs_round_trip_through_jsonl() {
    let sc = bundle();
    let dir = tempfile::tempdir().unwrap();
    for config in [ConfigId::Baseline, ConfigId::Full] {
        let r = run_ablation(
            &RunConfig::scripted(config, 4),
            &sc,
            &AgentSuite::scripted(&sc, 4),
            None,
        )
        .unwrap();
        for log in &r.logs {
            let text = to_jsonl(log);
            assert_eq!(text.lines().count(), log.turns.len() + 2);
            assert_eq!(&parse_jsonl(&text, Path::new("mem")).unwrap(), log);
            let path = write_log(dir.path(), log).unwrap();
            assert_eq!(path, log_path(dir.path(), log));
            assert_eq!(&read_log(&path).unwrap(), log);
        }
    }
    let all = read_logs(dir.path()).unwrap();
    assert_eq!(all.len(), 2 * sc.test_cases.len());
    assert!(all
        .windows(2)
        .all(|w| (w[0].config_id, &w[0].test_case_id) <= (w[1].config_id, &w[1].test_case_id)));
    assert!(all.iter().all(|l| l.outcome != Outcome::Error));
}

#[test]
fn corrupt_logs_report_the_line() {
    let sc = bundle();
    let r = run_ablation(
        &RunConfig::scripted(ConfigId::Full, 4),
        &sc,
        &AgentSuite::scripted(&sc, 4),
        None,
    )
    .unwrap();
    let text = to_jsonl(&r.logs[0]);
    let mut lines: Vec<&str> = text.lines().collect();
    lines[2] = r#"{"kind":"turn","index":"two"}"#;
    let broken = lines.join("\n");
    match parse_jsonl(&broken, Path::new("x.jsonl")).unwrap_err() {
        HarnessError::Log { line, .. } => assert_eq!(line, 3),
        other => panic!("unexpected {other}"),
    }

    let headless: String = text.lines().skip(1).collect::<Vec<_>>().join("\n");
    assert!(parse_jsonl(&headless, Path::new("x.jsonl"))
        .unwrap_err()
        .is_schema_error());

    let trailing = format!("{text}{}\n", text.lines().nth(1).unwrap());
    assert!(matches!(
        parse_jsonl(&trailing, Path::new("x.jsonl")),
        Err(HarnessError::Log { .. })
    ));
}
