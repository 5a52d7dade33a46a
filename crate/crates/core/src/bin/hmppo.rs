//! Command-line driver: training, evaluation, sweeps, traces, reports and plots.
//!
//! Exit codes: 0 on success, 1 for configuration problems, 2 for runtime failures.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use hmppo::baselines::{DqnAgent, DqnConfig};
use hmppo::eval::{
    evaluate_method, format_utilization, load_sweep, plot_sweep, plot_throughput, plot_training, read_json,
    throughput_trace, utilization_tables, write_json, ExperimentConfig, Method, SweepResult, ThroughputResult,
};
use hmppo::ppo::{IterationMetrics, TrainConfig, Trainer};
use hmppo::{Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "hmppo",
    version,
    about = "Multi-domain network slicing with hierarchical constrained PPO"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Single seed; replaces the configured seed list and the training seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Method to train or evaluate; restricts the methods of sweeps and reports.
    #[arg(long, global = true)]
    method: Option<Method>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a learned method and write its checkpoint and metrics log.
    Train {
        /// Trainer hyperparameters (TOML); method defaults when absent.
        #[arg(long)]
        train_config: Option<PathBuf>,
        /// Overrides the environment-step budget.
        #[arg(long)]
        steps: Option<usize>,
        /// Continue from the method's existing checkpoint.
        #[arg(long)]
        resume: bool,
        /// Iterations between intermediate checkpoints.
        #[arg(long, default_value_t = 10)]
        checkpoint_every: usize,
    },
    /// Evaluate one method over the configured seeds.
    Evaluate {
        /// Traffic load; the configured trace load when absent.
        #[arg(long)]
        load: Option<f64>,
    },
    /// Satisfaction versus load for every method.
    SweepLoad,
    /// Per-step throughput of every method on one shared trace.
    Trace,
    /// Per-bucket resource utilization table.
    ReportUtilization,
    /// Re-render figures from result files in the output directory.
    Plot,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn experiment(g: &Global) -> Result<ExperimentConfig> {
    let mut cfg = match &g.config {
        Some(p) => ExperimentConfig::load(p).map_err(|e| match e {
            Error::Io { .. } => Error::InvalidConfig(e.to_string()),
            e => e,
        })?,
        None => ExperimentConfig::default(),
    };
    if let Some(d) = &g.out_dir {
        cfg.out_dir = d.clone();
    }
    if let Some(s) = g.seed {
        cfg.seeds = vec![s];
    }
    if let Some(m) = g.method {
        cfg.methods = vec![m];
    }
    cfg.validate()?;
    Ok(cfg)
}

fn require_method(g: &Global) -> Result<Method> {
    g.method
        .ok_or_else(|| Error::InvalidConfig("--method is required for this command".into()))
}

fn run(cli: Cli) -> Result<()> {
    let cfg = experiment(&cli.global)?;
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    match cli.command {
        Command::Train {
            train_config,
            steps,
            resume,
            checkpoint_every,
        } => train(
            &cfg,
            require_method(&cli.global)?,
            cli.global.seed,
            train_config,
            steps,
            resume,
            checkpoint_every,
        ),
        Command::Evaluate { load } => {
            let method = require_method(&cli.global)?;
            let load = load.unwrap_or(cfg.trace_load);
            let r = evaluate_method(&cfg, method, load)?;
            let path = cfg.out_dir.join(format!("eval-{}-{load}.json", method.name()));
            write_json(&path, &r)?;
            println!(
                "{method} @ load {load}: satisfaction {:.4} +- {:.4}, throughput {:.3e} bit/s",
                r.satisfaction.mean, r.satisfaction.std, r.throughput.mean
            );
            Ok(())
        }
        Command::SweepLoad => {
            let r = load_sweep(&cfg)?;
            write_json(cfg.out_dir.join("sweep.json"), &r)?;
            plot_sweep(&r, cfg.out_dir.join("sweep.svg"))?;
            for c in &r.curves {
                let pts: Vec<String> = c
                    .points
                    .iter()
                    .map(|p| format!("{:.1}:{:.3}", p.load, p.satisfaction.mean))
                    .collect();
                println!("{:<13} {}", c.method.name(), pts.join("  "));
            }
            Ok(())
        }
        Command::Trace => {
            let r = throughput_trace(&cfg)?;
            write_json(cfg.out_dir.join("throughput.json"), &r)?;
            plot_throughput(&r, cfg.out_dir.join("throughput.svg"))?;
            for s in &r.series {
                let mean = s.throughput.iter().sum::<f64>() / s.throughput.len().max(1) as f64;
                println!("{:<13} mean throughput {:.3e} bit/s", s.method.name(), mean);
            }
            Ok(())
        }
        Command::ReportUtilization => {
            let tables = utilization_tables(&cfg)?;
            let text = format_utilization(&tables);
            let path = cfg.out_dir.join("utilization.txt");
            std::fs::write(&path, &text).map_err(|e| Error::io(&path, e))?;
            write_json(cfg.out_dir.join("utilization.json"), &tables)?;
            print!("{text}");
            Ok(())
        }
        Command::Plot => plot_all(&cfg.out_dir),
    }
}

fn metrics_path(out_dir: &Path, method: Method) -> PathBuf {
    out_dir.join(format!("{}.metrics.jsonl", method.name()))
}

fn open_log(path: &Path, append: bool) -> Result<File> {
    OpenOptions::new()
        .create(true)
        .write(true)
        .append(append)
        .truncate(!append)
        .open(path)
        .map_err(|e| Error::io(path, e))
}

fn append_line<T: serde::Serialize>(file: &mut File, path: &Path, value: &T) -> Result<()> {
    let mut line = serde_json::to_string(value)?;
    line.push('\n');
    file.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::InvalidConfig(Error::io(path, e).to_string()))?;
    Ok(toml::from_str(&text)?)
}

#[allow(clippy::too_many_arguments)]
fn train(
    cfg: &ExperimentConfig,
    method: Method,
    seed: Option<u64>,
    train_config: Option<PathBuf>,
    steps: Option<usize>,
    resume: bool,
    checkpoint_every: usize,
) -> Result<()> {
    let scenario = cfg.scenario()?;
    let ckpt = cfg.checkpoint_path(method);
    let log_path = metrics_path(&cfg.out_dir, method);
    match method {
        Method::Hmppo | Method::StandardPpo => {
            let mut trainer = if resume {
                Trainer::load_for(&ckpt, &scenario)?
            } else {
                let mut tc = match &train_config {
                    Some(p) => read_toml::<TrainConfig>(p)?,
                    None if method == Method::Hmppo => TrainConfig::hmppo(),
                    None => TrainConfig::standard_ppo(),
                };
                if let Some(s) = seed {
                    tc.seed = s;
                }
                if let Some(n) = steps {
                    tc.total_steps = n;
                }
                Trainer::new(scenario, tc)?
            };
            if resume {
                if let Some(n) = steps {
                    trainer.config.total_steps = n;
                }
            }
            let mut log = open_log(&log_path, resume)?;
            let every = checkpoint_every.max(1);
            trainer.train(|m: &IterationMetrics, t: &Trainer| {
                append_line(&mut log, &log_path, m)?;
                info!(
                    "iter {:>4} steps {:>7} satisfaction {:.3} costs [{:.3} {:.3} {:.3}] multipliers [{:.3} {:.3} {:.3}]",
                    m.iteration,
                    m.env_steps,
                    m.satisfaction,
                    m.mean_costs[0],
                    m.mean_costs[1],
                    m.mean_costs[2],
                    m.multipliers[0],
                    m.multipliers[1],
                    m.multipliers[2]
                );
                if t.iteration.is_multiple_of(every) {
                    t.save(&ckpt)?;
                }
                Ok(())
            })?;
            trainer.save(&ckpt)?;
        }
        Method::Dqn => {
            if resume {
                return Err(Error::InvalidConfig(
                    "dqn training cannot resume: its replay buffer is not checkpointed".into(),
                ));
            }
            let mut dc = match &train_config {
                Some(p) => read_toml::<DqnConfig>(p)?,
                None => DqnConfig::default(),
            };
            if let Some(s) = seed {
                dc.seed = s;
            }
            if let Some(n) = steps {
                dc.total_steps = n;
            }
            let mut agent = DqnAgent::new(&scenario, dc)?;
            let mut log = open_log(&log_path, false)?;
            let mut err = None;
            agent.train(&scenario, |m| {
                if err.is_none() {
                    err = append_line(&mut log, &log_path, m).err();
                }
                if m.episodes % 50 == 0 {
                    info!(
                        "episode {:>5} steps {:>7} epsilon {:.3} satisfaction {:.3}",
                        m.episodes, m.env_steps, m.epsilon, m.satisfaction
                    );
                }
            })?;
            if let Some(e) = err {
                return Err(e);
            }
            agent.save(&ckpt)?;
        }
        other => {
            return Err(Error::InvalidConfig(format!("{other} is not a learned method")));
        }
    }
    println!("wrote {} and {}", ckpt.display(), log_path.display());
    Ok(())
}

fn read_metrics(path: &Path) -> Result<Vec<IterationMetrics>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

fn plot_all(out_dir: &Path) -> Result<()> {
    let mut drawn = 0;
    let sweep = out_dir.join("sweep.json");
    if sweep.exists() {
        plot_sweep(&read_json::<SweepResult>(&sweep)?, out_dir.join("sweep.svg"))?;
        drawn += 1;
    }
    let thr = out_dir.join("throughput.json");
    if thr.exists() {
        plot_throughput(&read_json::<ThroughputResult>(&thr)?, out_dir.join("throughput.svg"))?;
        drawn += 1;
    }
    for m in [Method::Hmppo, Method::StandardPpo] {
        let p = metrics_path(out_dir, m);
        if p.exists() {
            plot_training(&read_metrics(&p)?, out_dir.join(format!("{}.training.svg", m.name())))?;
            drawn += 1;
        }
    }
    if drawn == 0 {
        return Err(Error::NotFound(format!("no result files in {}", out_dir.display())));
    }
    println!("rendered {drawn} figure(s) in {}", out_dir.display());
    Ok(())
}
