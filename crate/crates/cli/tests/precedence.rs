//! Defaults < config file < flags, for every setting.

use std::path::PathBuf;

use clap::Parser;
use sabm_cli::config::{self, resolve, FileConfig, Settings};
use sabm_cli::{Backend, Cli, CliError};
use sabm_core::{ActiveVariants, ProviderMode, ScenarioKind};
use serde_json::json;

fn flags(args: &[&str]) -> sabm_cli::CommonArgs {
    let mut argv = vec!["sabm", "run"];
    argv.extend_from_slice(args);
    Cli::try_parse_from(argv).unwrap().common
}

fn settle(file: &str, args: &[&str]) -> Settings {
    resolve(&FileConfig::parse(file).unwrap(), &flags(args)).unwrap()
}

type Getter = fn(&Settings) -> String;

struct Row {
    name: &'static str,
    default: &'static str,
    file: &'static str,
    file_value: &'static str,
    flag: &'static [&'static str],
    flag_value: &'static str,
    get: Getter,
}

fn rows() -> Vec<Row> {
    vec![
        Row {
            name: "provider",
            default: "scripted",
            file: "provider = \"record\"",
            file_value: "record",
            flag: &["--provider", "replay"],
            flag_value: "replay",
            get: |s| s.provider.as_str().into(),
        },
        Row {
            name: "seed",
            default: "0",
            file: "seed = 7",
            file_value: "7",
            flag: &["--seed", "9"],
            flag_value: "9",
            get: |s| s.seed.to_string(),
        },
        Row {
            name: "rounds",
            default: "30",
            file: "rounds = 12",
            file_value: "12",
            flag: &["--rounds", "15"],
            flag_value: "15",
            get: |s| s.rounds.to_string(),
        },
        Row {
            name: "out",
            default: "out",
            file: "out = \"from-file\"",
            file_value: "from-file",
            flag: &["--out", "from-flag"],
            flag_value: "from-flag",
            get: |s| s.out.display().to_string(),
        },
        Row {
            name: "jobs",
            default: "1",
            file: "jobs = 3",
            file_value: "3",
            flag: &["--jobs", "5"],
            flag_value: "5",
            get: |s| s.jobs.to_string(),
        },
        Row {
            name: "budget_calls",
            default: "5000",
            file: "budget_calls = 10",
            file_value: "10",
            flag: &["--budget-calls", "20"],
            flag_value: "20",
            get: |s| s.budget_calls.to_string(),
        },
        Row {
            name: "budget_tokens",
            default: "5000000",
            file: "budget_tokens = 100",
            file_value: "100",
            flag: &["--budget-tokens", "200"],
            flag_value: "200",
            get: |s| s.budget_tokens.to_string(),
        },
        Row {
            name: "cache",
            default: "out/cache.jsonl",
            file: "cache = \"a.jsonl\"",
            file_value: "a.jsonl",
            flag: &["--cache", "b.jsonl"],
            flag_value: "b.jsonl",
            get: |s| s.cache.display().to_string(),
        },
        Row {
            name: "backend",
            default: "Live",
            file: "backend = \"scripted\"",
            file_value: "Scripted",
            flag: &["--backend", "live"],
            flag_value: "Live",
            get: |s| format!("{:?}", s.backend),
        },
        Row {
            name: "prompts",
            default: "None",
            file: "prompts = \"p1\"",
            file_value: "Some(\"p1\")",
            flag: &["--prompts", "p2"],
            flag_value: "Some(\"p2\")",
            get: |s| format!("{:?}", s.prompts),
        },
        Row {
            name: "variants",
            default: "",
            file: "variants = [\"guess.rules:paraphrase:v1\"]",
            file_value: "guess.rules=v1",
            flag: &["--variant", "guess.rules:objectives:even_only"],
            flag_value: "guess.rules=even_only",
            get: |s| s.variants.0.iter().map(|(b, (_, v))| format!("{b}={v}")).collect(),
        },
        Row {
            name: "checkpoint_every",
            default: "None",
            file: "checkpoint_every = 4",
            file_value: "Some(4)",
            flag: &["--checkpoint-every", "6"],
            flag_value: "Some(6)",
            get: |s| format!("{:?}", s.checkpoint_every),
        },
        Row {
            name: "target",
            default: "null",
            file: "target = 11",
            file_value: "11",
            flag: &["--target", "22"],
            flag_value: "22",
            get: |s| s.params["target"].to_string(),
        },
        Row {
            name: "params",
            default: "null",
            file: "[params]\nbsearch_hint = false",
            file_value: "false",
            flag: &["--param", "bsearch_hint=true"],
            flag_value: "true",
            get: |s| s.params["bsearch_hint"].to_string(),
        },
    ]
}

#[test]
fn every_setting_follows_the_precedence_order() {
    let base = "scenario = \"guess\"\n";
    for row in rows() {
        let with_file = format!("{base}{}\n", row.file);
        let cases = [
            ("default", settle(base, &[]), row.default),
            ("file", settle(&with_file, &[]), row.file_value),
            ("flag", settle(base, row.flag), row.flag_value),
            ("both", settle(&with_file, row.flag), row.flag_value),
        ];
        for (case, settings, expected) in cases {
            assert_eq!((row.get)(&settings), expected, "{} / {case}", row.name);
        }
    }
}

#[test]
fn scenario_comes_from_file_or_flag() {
    assert_eq!(settle("scenario = \"firm\"", &[]).scenario, ScenarioKind::Firm);
    assert_eq!(
        settle("scenario = \"firm\"", &["--scenario", "evac"]).scenario,
        ScenarioKind::Evac
    );
    assert_eq!(settle("", &["--scenario", "plea"]).scenario, ScenarioKind::Plea);
    assert_eq!(
        settle("scenario = \"firm\"", &[]).rounds,
        config::default_rounds(ScenarioKind::Firm)
    );
}

#[test]
fn flag_params_overlay_file_params_key_by_key() {
    let s = settle(
        "scenario = \"firm\"\n[params]\nconversation = true\n[params.market]\nc1 = 1.0\nc2 = 3.0\n",
        &["--param", "market={\"c2\": 3.5}", "--param", "label=plain text"],
    );
    assert_eq!(s.params["conversation"], json!(true));
    assert_eq!(s.params["market"], json!({"c1": 1.0, "c2": 3.5}));
    assert_eq!(s.params["label"], json!("plain text"));
}

#[test]
fn invalid_settings_are_usage_errors() {
    let empty = FileConfig::default();
    let cases: [&[&str]; 6] = [
        &[],
        &["--scenario", "chess"],
        &["--scenario", "guess", "--provider", "telepathy"],
        &["--scenario", "firm", "--target", "3"],
        &["--scenario", "guess", "--jobs", "0"],
        &["--scenario", "guess", "--variant", "not-a-selector"],
    ];
    for args in cases {
        let err = resolve(&empty, &flags(args)).unwrap_err();
        assert!(matches!(err, CliError::Usage(_)), "{args:?}: {err}");
        assert_eq!(err.exit_code(), 2);
    }
    assert!(FileConfig::parse("colour = \"red\"").is_err());
    assert!(FileConfig::parse("[validate]\nruns = 3\nextra = 1").is_err());
}

#[test]
fn validate_section_parses() {
    let file = FileConfig::parse(
        "[validate]\nruns = 8\nalpha = 0.01\n[[validate.arms]]\nname = \"a\"\nvariants = [\"guess.rules:paraphrase:v1\"]\n",
    )
    .unwrap();
    let v = file.validate.unwrap();
    assert_eq!((v.runs, v.alpha, v.arms.len()), (Some(8), Some(0.01), 1));
    assert_eq!(v.arms[0].variants, vec!["guess.rules:paraphrase:v1".to_string()]);
    assert_eq!(
        sabm_cli::parse_arm("nobs=guess.knowledge:elements:no_bsearch, guess.rules:paraphrase:v1").unwrap(),
        (
            "nobs".to_string(),
            vec![
                "guess.knowledge:elements:no_bsearch".to_string(),
                "guess.rules:paraphrase:v1".to_string()
            ]
        )
    );
    assert!(sabm_cli::parse_arm("=x").is_err());
    assert!(sabm_cli::parse_arm("name").is_err());
}

#[test]
fn resolved_types_line_up() {
    let s = settle(
        "scenario = \"guess\"",
        &["--provider", "record", "--backend", "scripted", "--out", "x"],
    );
    assert_eq!(s.provider, ProviderMode::Record);
    assert_eq!(s.backend, Backend::Scripted);
    assert_eq!(s.cache, PathBuf::from("x").join("cache.jsonl"));
    assert_eq!(s.variants, ActiveVariants::none());
}
