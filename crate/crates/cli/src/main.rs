use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aentd3::deploy::{read_actions_csv, run_pipeline, write_stream_csv, InterpolationConfig};
use aentd3::harness::metrics::write_metrics;
use aentd3::harness::summary::{render_curves, render_summary};
use aentd3::harness::train::{config_echo, finetune_echo};
use aentd3::harness::{
    export_summary, finetune, run_eval, run_training_seed, safety_terminations, Checkpoint,
    ExperimentConfig, SummaryOptions,
};
use anyhow::Context;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "aentd3", version, about = "Train, evaluate and deploy cooperative lifting policies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train from a TOML experiment config.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Seed to train; defaults to every seed listed in the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a checkpoint without exploration or reset noise.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        /// Metrics CSV to write; printed to stdout when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Resume a checkpoint under a tighter safety margin.
    Finetune {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        steps: u64,
        /// Output checkpoint; defaults to `<input>_delta<delta>.json`.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Metrics CSV; defaults to the output checkpoint path with `.csv`.
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Interpolate policy-rate actions to control-rate commands.
    DeploySim {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 4.0)]
        policy_rate: f64,
        #[arg(long, default_value_t = 20.0)]
        control_rate: f64,
        /// Largest accepted change between consecutive commands (max norm).
        #[arg(long, default_value_t = 0.01)]
        max_step_delta: f64,
    },
    /// Success rates and return curves across metrics files.
    Summarize {
        #[arg(required = true)]
        metrics: Vec<PathBuf>,
        /// Summary CSV; printed to stdout when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Median/IQR curve CSV.
        #[arg(long)]
        curves: Option<PathBuf>,
        /// Absolute success threshold.
        #[arg(long)]
        threshold: Option<f64>,
        /// Fraction of the best centralized final return used as threshold.
        #[arg(long, default_value_t = 0.85)]
        threshold_fraction: f64,
        #[arg(long, default_value_t = 100)]
        window: usize,
        #[arg(long, default_value_t = 50)]
        curve_points: usize,
    },
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train { config, seed } => {
            let cfg = ExperimentConfig::load(&config)?;
            let seeds = seed.map_or_else(|| cfg.seeds.clone(), |s| vec![s]);
            for s in seeds {
                let records = run_training_seed(&cfg, s)?;
                let last = records.last().map_or(0.0, |r| r.episode_return);
                println!(
                    "seed {s}: {} episodes, last return {last:.3}, metrics {}, checkpoint {}",
                    records.len(),
                    cfg.metrics_path(s).display(),
                    cfg.checkpoint_path(s).display()
                );
            }
        }
        Command::Eval {
            checkpoint,
            episodes,
            output,
        } => {
            if episodes == 0 {
                return Err(aentd3::Error::Precondition("--episodes must be positive".into()).into());
            }
            let ckpt = Checkpoint::load(&checkpoint)?;
            let records = run_eval(&ckpt, episodes)?;
            let header = config_echo("eval", &ckpt.config, ckpt.seed, &[]);
            match output {
                Some(path) => {
                    write_metrics(&path, &header, &records, false)?;
                    eprintln!(
                        "{} episodes, {} safety terminations",
                        records.len(),
                        safety_terminations(&records)
                    );
                }
                None => print!(
                    "{}",
                    aentd3::harness::metrics::render_metrics(&header, &records, false)
                ),
            }
        }
        Command::Finetune {
            checkpoint,
            delta,
            steps,
            output,
            metrics,
        } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let out_path = output.unwrap_or_else(|| {
                let stem = checkpoint.file_stem().and_then(|s| s.to_str()).unwrap_or("checkpoint");
                checkpoint.with_file_name(format!("{stem}_delta{delta}.json"))
            });
            let metrics_path = metrics.unwrap_or_else(|| out_path.with_extension("csv"));
            let result = finetune(&ckpt, delta, steps)?;
            let header = finetune_echo(&ckpt, &result.checkpoint, steps);
            write_metrics(
                &metrics_path,
                &header,
                &result.records,
                ckpt.config.output.record_wall_time,
            )?;
            result.checkpoint.save(&out_path)?;
            println!(
                "fine-tuned {} steps at delta {delta}: checkpoint {}, metrics {}",
                steps,
                out_path.display(),
                metrics_path.display()
            );
        }
        Command::DeploySim {
            input,
            output,
            policy_rate,
            control_rate,
            max_step_delta,
        } => {
            let cfg = InterpolationConfig {
                policy_rate_hz: policy_rate,
                control_rate_hz: control_rate,
                max_step_delta,
            };
            let actions = read_actions_csv(&input)?;
            let stream = run_pipeline(&actions, &cfg)?;
            write_stream_csv(&output, &stream)?;
            println!(
                "{} commands, {} rejected",
                stream.commands.len(),
                stream.rejected_count()
            );
        }
        Command::Summarize {
            metrics,
            output,
            curves,
            threshold,
            threshold_fraction,
            window,
            curve_points,
        } => {
            let opts = SummaryOptions {
                window,
                threshold_fraction,
                threshold,
                curve_points,
            };
            let summary = export_summary(&metrics, &opts)?;
            match output {
                Some(path) => write_text(&path, &render_summary(&summary))?,
                None => print!("{}", render_summary(&summary)),
            }
            if let Some(path) = curves {
                write_text(&path, &render_curves(&summary))?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let category = err
                .downcast_ref::<aentd3::Error>()
                .map_or("io", aentd3::Error::category);
            eprintln!("error [{category}]: {err:#}");
            ExitCode::FAILURE
        }
    }
}
