use aentd3::agent::Mode;
use aentd3::env::DoneReason;
use aentd3::harness::metrics::render_metrics;
use aentd3::harness::summary::{render_summary, summarize_runs, RunReturns};
use aentd3::harness::train::{config_echo, finetune_echo};
use aentd3::harness::{
    export_summary, finetune, read_metrics, run_eval, run_training_seed, train_seed, Checkpoint,
    ExperimentConfig, PartnerKind, SummaryOptions,
};

fn tiny(mode: Mode, dir: &std::path::Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        mode,
        seeds: vec![7],
        learning_starts: 30,
        ..ExperimentConfig::default()
    };
    cfg.network_widths.centralized = 8;
    cfg.network_widths.decentralized = 8;
    cfg.hyperparams.batch_n = 8;
    cfg.hyperparams.episodes_m = 4;
    cfg.hyperparams.horizon_t = 20;
    cfg.hyperparams.explore_sigma = 0.003;
    cfg.env.horizon = 20;
    cfg.output.metrics_path = dir.join("{mode}_{seed}.csv").display().to_string();
    cfg.output.checkpoint_path = dir.join("{mode}_{seed}.json").display().to_string();
    cfg
}

#[test]
fn single_short_episode_gives_one_record() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(Mode::DecentralizedAenTd3, dir.path());
    cfg.hyperparams.episodes_m = 1;
    cfg.hyperparams.horizon_t = 5;
    cfg.env.horizon = 5;
    cfg.learning_starts = 0;
    let out = train_seed(&cfg, 0).unwrap();
    assert_eq!(out.records.len(), 1);
    assert!(out.records[0].episode_length <= 5);
}

#[test]
fn metrics_list_every_episode() {
    let dir = tempfile::tempdir().unwrap();
    for mode in [Mode::CentralizedTd3, Mode::DecentralizedAenTd3] {
        let cfg = tiny(mode, dir.path());
        run_training_seed(&cfg, 7).unwrap();
        let file = read_metrics(&cfg.metrics_path(7)).unwrap();
        assert_eq!(file.records.len(), 4);
        for (i, r) in file.records.iter().enumerate() {
            assert_eq!(r.episode, i + 1);
            assert_eq!(r.seed, 7);
            assert!(r.episode_length >= 1 && r.episode_length <= 20);
            assert_eq!(r.done_reason == DoneReason::HorizonReached, r.episode_length == 20);
            assert!(r.final_height.is_some());
        }
        assert_eq!(file.header_value("label").unwrap(), cfg.mode_label());
        assert_eq!(file.header_value("seed").unwrap(), "7");
        assert!(cfg.checkpoint_path(7).exists());
    }
}

#[test]
fn training_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(Mode::DecentralizedAenTd3, dir.path());
    run_training_seed(&cfg, 7).unwrap();
    let first = std::fs::read(cfg.metrics_path(7)).unwrap();
    let first_ckpt = std::fs::read(cfg.checkpoint_path(7)).unwrap();
    run_training_seed(&cfg, 7).unwrap();
    assert_eq!(first, std::fs::read(cfg.metrics_path(7)).unwrap());
    assert_eq!(first_ckpt, std::fs::read(cfg.checkpoint_path(7)).unwrap());
    let other = train_seed(&cfg, 8).unwrap();
    let rendered = render_metrics(&[], &other.records, false);
    assert_ne!(rendered, render_metrics(&[], &train_seed(&cfg, 7).unwrap().records, false));
}

#[test]
fn checkpoint_round_trip_preserves_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(Mode::DecentralizedAenTd3, dir.path());
    let out = train_seed(&cfg, 7).unwrap();
    let path = dir.path().join("ckpt.json");
    out.checkpoint.save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    assert_eq!(loaded, out.checkpoint);
    let a = run_eval(&out.checkpoint, 3).unwrap();
    let b = run_eval(&loaded, 3).unwrap();
    assert_eq!(a, b);
    // Deterministic policies from a fixed start repeat the same episode.
    assert!(a.windows(2).all(|w| w[0].episode_return == w[1].episode_return));
}

#[test]
fn corrupt_checkpoints_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(Mode::CentralizedTd3, dir.path());
    let out = train_seed(&cfg, 7).unwrap();
    let mut bad = out.checkpoint.clone();
    bad.version += 1;
    assert_eq!(Checkpoint::from_json(&bad.to_json()).unwrap_err().category(), "checkpoint");
    let mut bad = out.checkpoint.clone();
    bad.agents.clear();
    assert!(bad.restore_agents().is_err());
    assert!(Checkpoint::from_json("{\"version\": 1}").is_err());
}

#[test]
fn finetune_zero_steps_keeps_learners() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(Mode::DecentralizedAenTd3, dir.path());
    let ckpt = train_seed(&cfg, 7).unwrap().checkpoint;
    let out = finetune(&ckpt, 0.01, 0).unwrap();
    assert!(out.records.is_empty());
    assert_eq!(out.checkpoint.agents, ckpt.agents);
    assert_eq!(out.checkpoint.config.env.delta, 0.01);
    assert_eq!(ckpt.config.env.delta, 0.02);
}

#[test]
fn finetune_spends_exactly_its_budget() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(Mode::CentralizedTd3, dir.path());
    let ckpt = train_seed(&cfg, 7).unwrap().checkpoint;
    let out = finetune(&ckpt, 0.015, 57).unwrap();
    let steps: usize = out.records.iter().map(|r| r.episode_length).sum();
    assert_eq!(steps, 57);
    assert_eq!(out.checkpoint.env_steps, ckpt.env_steps + 57);
    assert_ne!(out.checkpoint.agents, ckpt.agents);
    let echo = finetune_echo(&ckpt, &out.checkpoint, 57);
    assert!(echo.contains(&"previous_delta = 0.02".to_string()));
    assert!(echo.contains(&"delta = 0.015".to_string()));
}

#[test]
fn finetune_requires_a_tighter_margin() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(Mode::CentralizedTd3, dir.path());
    let ckpt = train_seed(&cfg, 7).unwrap().checkpoint;
    for delta in [0.02, 0.03] {
        assert_eq!(finetune(&ckpt, delta, 10).unwrap_err().category(), "config");
    }
}

#[test]
fn scripted_partner_runs_report_estimation_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny(Mode::DecentralizedAenTd3, dir.path());
    cfg.partner = PartnerKind::Scripted;
    let out = train_seed(&cfg, 7).unwrap();
    assert_eq!(out.checkpoint.agents.len(), 1);
    assert!(out.records.iter().all(|r| r.aen_mse.is_some_and(|e| e >= 0.0)));
    let eval = run_eval(&out.checkpoint, 2).unwrap();
    assert!(eval.iter().all(|r| r.aen_mse.is_some()));
    cfg.mode = Mode::CentralizedTd3;
    assert!(cfg.validate().is_err());
}

#[test]
fn config_round_trips_through_toml() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny(Mode::DecentralizedAenTd3, dir.path());
    let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
    assert_eq!(back, cfg);
    assert!(ExperimentConfig::from_toml_str("unknown_key = 1").is_err());
    let echo = config_echo("train", &cfg, 7, &[]);
    assert_eq!(echo[0], "run = \"train\"");
}

fn run(label: &str, final_value: f64) -> RunReturns {
    let mut returns = vec![0.0; 50];
    returns.extend(std::iter::repeat_n(final_value, 100));
    RunReturns {
        label: label.into(),
        returns,
    }
}

#[test]
fn success_rate_counts_runs_above_threshold() {
    let runs: Vec<RunReturns> = (0..10)
        .map(|i| run("aen_td3", if i < 8 { 100.0 } else { 10.0 }))
        .collect();
    let opts = SummaryOptions {
        threshold: Some(50.0),
        ..SummaryOptions::default()
    };
    let s = summarize_runs(&runs, Vec::new(), None, &opts).unwrap();
    assert_eq!(s.groups.len(), 1);
    assert_eq!(s.groups[0].successes, 8);
    assert_eq!(s.groups[0].success_rate, 0.8);
}

#[test]
fn threshold_defaults_to_fraction_of_best_centralized_run() {
    let runs = vec![run("td3", 200.0), run("td3", 100.0), run("aen_td3", 180.0)];
    let s = summarize_runs(&runs, Vec::new(), None, &SummaryOptions::default()).unwrap();
    assert_eq!(s.threshold, 0.85 * 200.0);
    let by = |l: &str| s.groups.iter().find(|g| g.label == l).unwrap().clone();
    assert_eq!(by("td3").successes, 1);
    assert_eq!(by("aen_td3").successes, 1);
}

#[test]
fn single_run_curve_has_zero_spread() {
    let s = summarize_runs(&[run("td3", 5.0)], Vec::new(), None, &SummaryOptions::default()).unwrap();
    let curve = &s.groups[0].curve;
    assert!(!curve.is_empty());
    assert!(curve.iter().all(|p| p.q25 == p.median && p.q75 == p.median));
    assert_eq!(curve.last().unwrap().episode, 150);
}

#[test]
fn summarizing_a_summary_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let mut paths = Vec::new();
    for (i, mode) in [Mode::CentralizedTd3, Mode::DecentralizedAenTd3].into_iter().enumerate() {
        let mut cfg = tiny(mode, dir.path());
        cfg.seeds = vec![i as u64];
        run_training_seed(&cfg, i as u64).unwrap();
        paths.push(cfg.metrics_path(i as u64));
    }
    let opts = SummaryOptions {
        window: 2,
        ..SummaryOptions::default()
    };
    let first = render_summary(&export_summary(&paths, &opts).unwrap());
    let path = dir.path().join("summary.csv");
    std::fs::write(&path, &first).unwrap();
    let second = render_summary(&export_summary(std::slice::from_ref(&path), &opts).unwrap());
    assert_eq!(first, second);
    std::fs::write(&path, &second).unwrap();
    assert_eq!(second, render_summary(&export_summary(&[path], &opts).unwrap()));
}
