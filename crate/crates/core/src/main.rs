use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use freqsgd::harness::{
    analyze, gen_data, run_experiment, verify, ExperimentConfig, TailShape,
};
use freqsgd::Error;

#[derive(Parser)]
#[command(name = "freqsgd", version, about = "Frequency-aware SGD for sparse embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `train.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic joint distribution and optional ratings file.
    GenData {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        tail: Option<TailArg>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        nu: Option<f64>,
        #[arg(long)]
        users: Option<usize>,
        #[arg(long)]
        items: Option<usize>,
        /// Number of ratings to draw into `ratings.dat`.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Train one configuration and write metrics, tokens, manifest and embeddings.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Run the exact-oracle checks on generated instances.
    Verify {
        #[command(flatten)]
        common: Common,
    },
    /// Summarize a finished training directory.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Directory written by `train`.
        #[arg(long)]
        run: PathBuf,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum TailArg {
    Exp,
    Poly,
    Uniform,
}

impl From<TailArg> for TailShape {
    fn from(t: TailArg) -> Self {
        match t {
            TailArg::Exp => TailShape::Exp,
            TailArg::Poly => TailShape::Poly,
            TailArg::Uniform => TailShape::Uniform,
        }
    }
}

fn load(common: &Common) -> freqsgd::Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::from_path(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.train.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.train.out_dir = Some(out.clone());
    }
    Ok(cfg)
}

fn run(cli: Cli) -> freqsgd::Result<bool> {
    match cli.command {
        Command::GenData { common, tail, tau, nu, users, items, samples } => {
            let mut cfg = load(&common)?;
            if let Some(t) = tail {
                cfg.data.tail = t.into();
            }
            cfg.data.tau = tau.unwrap_or(cfg.data.tau);
            cfg.data.nu = nu.unwrap_or(cfg.data.nu);
            cfg.data.users = users.unwrap_or(cfg.data.users);
            cfg.data.items = items.unwrap_or(cfg.data.items);
            cfg.data.samples = samples.unwrap_or(cfg.data.samples);
            cfg.validate()?;
            let out = cfg
                .train
                .out_dir
                .clone()
                .ok_or_else(|| Error::Config("gen-data needs --out".into()))?;
            let joint = gen_data(&cfg, &out)?;
            println!("wrote {} cells to {}", joint.cells().len(), out.display());
            Ok(true)
        }
        Command::Train { common } => {
            if common.config.is_none() {
                return Err(Error::Config("train needs --config".into()));
            }
            let cfg = load(&common)?;
            let out = run_experiment(&cfg)?;
            for row in &out.log.epochs {
                println!(
                    "epoch {:>3}  step {:>9}  train_loss {:.6}  val_auc {:.6}",
                    row.epoch, row.step, row.train_loss, row.val_auc
                );
            }
            println!("test_auc {:.6}", out.test_auc);
            Ok(true)
        }
        Command::Verify { common } => {
            let seed = common.seed.unwrap_or(0);
            let report = verify(seed, common.out.as_deref())?;
            print!("{}", report.table());
            Ok(report.all_passed())
        }
        Command::Analyze { common, run } => {
            let report = analyze(&run, common.out.as_deref())?;
            match report.pearson_r {
                Some(r) => println!("pearson_r {r:.6}"),
                None => println!("pearson_r n/a"),
            }
            for (side, kt) in [("users", report.rank_gradnorm.users), ("items", report.rank_gradnorm.items)] {
                match kt {
                    Some(kt) => println!("{side} rank/grad-norm tau {:.4} p {:.3e}", kt.tau, kt.p_value),
                    None => println!("{side} rank/grad-norm tau n/a"),
                }
            }
            println!("report written to {}", common.out.as_deref().unwrap_or(&run).join("report.json").display());
            Ok(true)
        }
    }
}

fn exit_code(outcome: &freqsgd::Result<bool>) -> u8 {
    match outcome {
        Ok(true) => 0,
        Err(Error::Config(_)) => 1,
        Ok(false) | Err(_) => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = run(cli);
    if let Err(e) = &outcome {
        eprintln!("error: {e}");
    }
    ExitCode::from(exit_code(&outcome))
}
