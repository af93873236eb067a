use std::path::PathBuf;
use std::process::ExitCode;

use cfo_bench::checkpoint::ModelKind;
use cfo_bench::commands::{self, parse_list, DataPaths};
use cfo_bench::{BenchError, ExperimentConfig, Result};
use cfo_core::odeint::Method;
use cfo_core::systems::SystemTag;
use cfo_core::SplineKind;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cfo", version, about = "Spline flow-matching surrogates: data, training, evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Settings shared by every subcommand; flags override the config file.
#[derive(Args, Clone)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    system: Option<SystemTag>,
    /// Output directory; relative paths resolve under $CFO_OUTPUT_ROOT.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    keep_rate: Option<f64>,
    /// Comma-separated training seeds.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    eval_every: Option<usize>,
    #[arg(long)]
    gamma0: Option<f64>,
    #[arg(long)]
    noise_m: Option<u32>,
    #[arg(long)]
    spline: Option<SplineKind>,
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    substeps: Option<usize>,
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    n_val: Option<usize>,
    #[arg(long)]
    n_test: Option<usize>,
    #[arg(long)]
    n_times: Option<usize>,
    /// Physical time window in seconds.
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    data_seed: Option<u64>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::preset(self.system.unwrap_or(SystemTag::Lorenz)),
        };
        macro_rules! set {
            ($field:expr, $value:expr) => {
                if let Some(v) = $value.clone() {
                    $field = v;
                }
            };
        }
        set!(cfg.system, self.system);
        set!(cfg.output_dir, self.output_dir);
        set!(cfg.keep_rate, self.keep_rate);
        if let Some(s) = &self.seeds {
            cfg.seeds = parse_list(s)?;
        }
        set!(cfg.train.steps, self.steps);
        set!(cfg.train.batch_size, self.batch_size);
        set!(cfg.train.learning_rate, self.lr);
        set!(cfg.train.eval_every, self.eval_every);
        set!(cfg.train.gamma0, self.gamma0);
        set!(cfg.train.noise_m, self.noise_m);
        set!(cfg.train.spline_kind, self.spline);
        set!(cfg.solver.method, self.method);
        set!(cfg.solver.substeps, self.substeps);
        set!(cfg.data.n_train, self.n_train);
        set!(cfg.data.n_val, self.n_val);
        set!(cfg.data.n_test, self.n_test);
        set!(cfg.data.n_times, self.n_times);
        set!(cfg.data.horizon, self.horizon);
        set!(cfg.data.seed, self.data_seed);
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate train/val/test trajectory files.
    GenData {
        #[command(flatten)]
        common: Common,
        /// Write the JSON-only format.
        #[arg(long)]
        json: bool,
    },
    /// Train CFO models (one per seed).
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        train_data: Option<PathBuf>,
        #[arg(long)]
        val_data: Option<PathBuf>,
    },
    /// Train autoregressive one-step baselines (uniform grids only).
    TrainAr {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        train_data: Option<PathBuf>,
        #[arg(long)]
        val_data: Option<PathBuf>,
    },
    /// Roll out a checkpoint on the test split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Spline endpoint-velocity convergence orders on Lorenz data.
    Convergence {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated downsampling factors.
        #[arg(long, default_value = "1,2,4")]
        factors: String,
    },
    /// Final-time error against the function-evaluation budget.
    NfeSweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Comma-separated budgets in percent.
        #[arg(long, default_value = "50,100,200,400")]
        budgets: String,
        #[arg(long, default_value = "euler,heun,rk4")]
        methods: String,
    },
    /// Backward integration from a perturbed terminal state.
    Reverse {
        #[command(flatten)]
        common: Common,
        /// Omit to use the exact Lorenz field.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        t_star: f64,
        /// Comma-separated relative noise levels.
        #[arg(long, default_value = "0,0.001,0.01")]
        noise: String,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { common, json } => {
            for p in commands::cmd_gen_data(&common.resolve()?, json)? {
                println!("{}", p.display());
            }
        }
        Command::Train {
            common,
            train_data,
            val_data,
        } => train(common, ModelKind::Cfo, train_data, val_data)?,
        Command::TrainAr {
            common,
            train_data,
            val_data,
        } => train(common, ModelKind::Ar, train_data, val_data)?,
        Command::Eval {
            common,
            checkpoint,
            data,
        } => {
            let rep = commands::cmd_eval(&common.resolve()?, &checkpoint, data.as_deref())?;
            println!(
                "relative L2 {}  final-time {:.3e}  nfe {}",
                rep.mean_sd_string(),
                rep.final_time_mean,
                rep.nfe
            );
        }
        Command::Convergence { common, data, factors } => {
            let out = commands::cmd_convergence(&common.resolve()?, &data, &parse_list(&factors)?)?;
            println!("{}", out.display());
        }
        Command::NfeSweep {
            common,
            checkpoint,
            data,
            budgets,
            methods,
        } => {
            let out = commands::cmd_nfe_sweep(
                &common.resolve()?,
                &checkpoint,
                data.as_deref(),
                &parse_list(&budgets)?,
                &parse_list(&methods)?,
            )?;
            println!("{}", out.display());
        }
        Command::Reverse {
            common,
            checkpoint,
            data,
            t_star,
            noise,
        } => {
            let out = commands::cmd_reverse(
                &common.resolve()?,
                checkpoint.as_deref(),
                data.as_deref(),
                t_star,
                &parse_list(&noise)?,
            )?;
            println!("{}", out.display());
        }
    }
    Ok(())
}

fn train(common: Common, kind: ModelKind, train: Option<PathBuf>, val: Option<PathBuf>) -> Result<()> {
    let cfg = common.resolve()?;
    for p in commands::cmd_train(&cfg, kind, &DataPaths { train, val })? {
        println!("{}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &BenchError) -> u8 {
    e.exit_code() as u8
}
