use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use maxrr::audit::MemberPool;
use maxrr::pipeline::PoolPolicy;
use maxrr_cli::commands::{self, Strategy};
use maxrr_cli::{CliError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "maxrr", version, about = "Split-model unlearning experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Settings shared by every subcommand; flags override the config file.
#[derive(Args)]
struct Common {
    /// JSON experiment config; unset fields take desk-scale defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    runs: Option<usize>,
    /// Runs used for the support-vector ranking.
    #[arg(long, global = true)]
    ranking_runs: Option<usize>,
    /// Core-set size.
    #[arg(long, global = true)]
    k: Option<usize>,
    #[arg(long, global = true, value_parser = parse_pool)]
    pool: Option<PoolPolicy>,
    #[arg(long, global = true, value_parser = parse_mia_pool)]
    mia_pool: Option<MemberPool>,
    #[arg(long, global = true)]
    arch: Option<String>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Directory holding the IDX corpora (else `$MAXRR_DATA_DIR`, else `data`).
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    /// Ranking file from `maxrr rank`; rebuilt in memory when absent.
    #[arg(long, global = true)]
    ranking: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Rank samples by support-vector frequency.
    Rank,
    /// Train one model and save it.
    Train {
        #[arg(long, value_enum, default_value = "aware")]
        strategy: Strategy,
    },
    /// Serve a forget request against a saved model.
    Unlearn {
        #[arg(long)]
        model: PathBuf,
        /// Forget directive (`top-k:N`, `non-top-k:N`, `random:N:SEED:POOL`,
        /// `a+b`, `all`, `none`) or a file of IDs.
        #[arg(long)]
        forget: Option<String>,
        /// Skip the witness check for exact outcomes.
        #[arg(long)]
        no_witness: bool,
    },
    /// Membership-inference audit of two unlearning strategies.
    Audit {
        #[arg(long, requires = "model_b")]
        model_a: Option<PathBuf>,
        #[arg(long, requires = "model_a")]
        model_b: Option<PathBuf>,
        #[arg(long)]
        forget: Option<String>,
    },
    /// Accuracy of every unlearning scenario on every forget set.
    Table1,
    /// Accuracy after forgetting random support vectors from each component.
    Sensitivity,
}

fn parse_pool(s: &str) -> Result<PoolPolicy, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_"))).map_err(|_| format!("expected full or support, got {s:?}"))
}

fn parse_mia_pool(s: &str) -> Result<MemberPool, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_"))).map_err(|_| format!("expected full or non-core, got {s:?}"))
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_file(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.base_seed = v;
        }
        if let Some(v) = self.runs {
            cfg.runs = v;
        }
        if let Some(v) = self.ranking_runs {
            cfg.ranking_runs = v;
        }
        if let Some(v) = self.k {
            cfg.k = Some(v);
        }
        if let Some(v) = self.pool {
            cfg.pool = v;
        }
        if let Some(v) = self.mia_pool {
            cfg.mia_pool = v;
        }
        if let Some(v) = &self.arch {
            cfg.arch = v.clone();
        }
        if let Some(v) = &self.out {
            cfg.out_dir = v.clone();
        }
        if let Some(v) = &self.data_dir {
            cfg.data_dir = Some(v.clone());
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = cli.common.resolve()?;
    let ranking = cli.common.ranking.as_deref();
    match cli.command {
        Command::Rank => {
            let cr = commands::cmd_rank(&cfg)?;
            let h = cr.histogram();
            println!("ranked {} samples over {} runs; f=0: {}, f=R: {}", cr.corpus_ids().len(), cr.runs(), h[0], h[cr.runs()]);
        }
        Command::Train { strategy } => {
            let model = commands::cmd_train(&cfg, strategy, ranking)?;
            println!("trained model: {} support vectors", model.support_ids().len());
        }
        Command::Unlearn { model, forget, no_witness } => {
            let forget = forget.or(cfg.forget.clone()).ok_or_else(|| CliError::Config("no forget set given".into()))?;
            let report = commands::cmd_unlearn(&cfg, &model, &forget, ranking, !no_witness)?;
            println!("mode {} ({})", report["mode"], report["guarantee"]);
        }
        Command::Audit { model_a, model_b, forget } => {
            if forget.is_some() {
                cfg.forget = forget;
            }
            let models = model_a.as_deref().zip(model_b.as_deref());
            let study = commands::cmd_audit(&cfg, models, ranking)?;
            println!("{:.1}% of samples agree in at least 80% of runs", study.curve.share_at_least(0.8));
        }
        Command::Table1 => {
            let table = commands::cmd_table1(&cfg, ranking)?;
            print!("{}", table.summary_csv());
        }
        Command::Sensitivity => {
            let rows = commands::cmd_sensitivity(&cfg)?;
            print!("{}", maxrr_cli::experiments::sensitivity_csv(&rows));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
