use std::fs::File;
use std::io::{BufWriter, Write};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use ecd_core::adversarial::{gen_gbs_bad, gen_posterior_bad};
use ecd_core::econ::{enumerate_tests, write_pool_csv, PoolConfig};
use ecd_core::harness::{self, SimConfig};
use ecd_core::oracle::{check_adaptive_submodularity, check_strong_monotonicity, optimal_expected_cost};
use ecd_core::policy::{expected_cost, run_policy};
use ecd_core::{Criterion, EcdInstance, Mode, PolicySpec, TieBreak};
use ecd_service::{AppState, ServiceOptions, SessionConfig};
use serde_json::json;

#[derive(Parser)]
#[command(name = "ecd", version, about = "Adaptive equivalence class determination toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum TieArg {
    Lowest,
    Random,
}

impl From<TieArg> for TieBreak {
    fn from(t: TieArg) -> Self {
        match t {
            TieArg::Lowest => TieBreak::LowestTestIndex,
            TieArg::Random => TieBreak::SeededRandom,
        }
    }
}

#[derive(clap::Args)]
struct PolicyArgs {
    #[arg(long)]
    instance: PathBuf,
    /// ec2, effecxtive, gbs, ig_class, ig_hyp, us, voi or random
    #[arg(long)]
    criterion: Criterion,
    #[arg(long, default_value = "ecd")]
    mode: Mode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long, value_enum, default_value = "lowest")]
    tie_break: TieArg,
}

impl PolicyArgs {
    fn spec(&self) -> PolicySpec {
        let mut spec = PolicySpec::new(self.criterion, self.mode)
            .with_seed(self.seed)
            .with_tie_break(self.tie_break.into());
        if let Some(b) = self.budget {
            spec = spec.with_budget(b);
        }
        spec
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    GbsBad,
    PosteriorBad,
}

#[derive(Subcommand)]
enum Command {
    /// Run a greedy policy against one true hypothesis; prints JSON lines.
    RunPolicy {
        #[command(flatten)]
        policy: PolicyArgs,
        /// Hypothesis id, or its index.
        #[arg(long)]
        truth: String,
    },
    /// Exact expected cost of a greedy policy under the prior.
    ExpectedCost {
        #[command(flatten)]
        policy: PolicyArgs,
    },
    /// Write an adversarial instance as JSON.
    GenAdversarial {
        #[arg(long, value_enum)]
        family: Family,
        /// Hypothesis count for gbs-bad.
        #[arg(long)]
        n: Option<usize>,
        /// Bit count for posterior-bad.
        #[arg(long)]
        q: Option<u32>,
        #[arg(long, default_value_t = 0)]
        dummy_count: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Exhaustively check adaptive submodularity and strong monotonicity.
    CheckProperties {
        #[arg(long)]
        instance: PathBuf,
    },
    /// Optimal expected cost and the optimal first test.
    OptimalCost {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, default_value = "ecd")]
        mode: Mode,
    },
    /// Run a simulation scenario and write CSV and summary JSON.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Write the lottery-pair pool as CSV.
    ExportPool {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        no_zero: bool,
        #[arg(long)]
        ordered: bool,
    },
    /// Serve the session HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        /// Default session config (JSON); built-in defaults when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "data")]
        data_dir: PathBuf,
        #[arg(long)]
        cors: bool,
    },
}

fn resolve_truth(instance: &EcdInstance, truth: &str) -> Result<usize> {
    if let Ok(h) = instance.hypothesis_index(truth) {
        return Ok(h);
    }
    match truth.parse::<usize>() {
        Ok(h) if h < instance.n_hypotheses() => Ok(h),
        _ => bail!("unknown hypothesis `{truth}`"),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &PathBuf) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Whether the command's own checks held.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Passed,
    Failed,
}

fn status(pass: bool) -> Status {
    if pass {
        Status::Passed
    } else {
        Status::Failed
    }
}

fn execute(cli: Cli, out: &mut impl Write) -> Result<Status> {
    let code = match cli.command {
        Command::RunPolicy { policy, truth } => {
            let instance = EcdInstance::load(&policy.instance)?;
            let h = resolve_truth(&instance, &truth)?;
            let trace = run_policy(&policy.spec(), &instance, h)?;
            for step in &trace.steps {
                writeln!(out, "{}", serde_json::to_string(step)?)?;
            }
            let summary = json!({
                "truth": instance.hypothesis_id(h),
                "total_cost": trace.total_cost,
                "terminal": trace.terminal,
                "version_space": trace.version_space.iter().map(|&v| instance.hypothesis_id(v)).collect::<Vec<_>>(),
                "class_posterior": trace.class_posterior,
            });
            writeln!(out, "{summary}")?;
            Status::Passed
        }
        Command::ExpectedCost { policy } => {
            let instance = EcdInstance::load(&policy.instance)?;
            writeln!(out, "{}", expected_cost(&policy.spec(), &instance)?)?;
            Status::Passed
        }
        Command::GenAdversarial { family, n, q, dummy_count, out: path } => {
            let instance = match family {
                Family::GbsBad => gen_gbs_bad(n.context("--n is required for gbs-bad")?)?,
                Family::PosteriorBad => gen_posterior_bad(q.context("--q is required for posterior-bad")?, dummy_count)?,
            };
            instance.save(&path)?;
            Status::Passed
        }
        Command::CheckProperties { instance } => {
            let instance = EcdInstance::load(&instance)?;
            let reports = [check_adaptive_submodularity(&instance)?, check_strong_monotonicity(&instance)?];
            writeln!(out, "{}", serde_json::to_string_pretty(&reports)?)?;
            status(reports.iter().all(|r| r.pass))
        }
        Command::OptimalCost { instance, mode } => {
            let instance = EcdInstance::load(&instance)?;
            let opt = optimal_expected_cost(&instance, mode)?;
            let result = json!({
                "cost": opt.cost,
                "root_test": opt.root_test.map(|t| instance.test_id(t).to_string()),
            });
            writeln!(out, "{result}")?;
            Status::Passed
        }
        Command::Simulate { config, out_dir } => {
            let config: SimConfig = read_json(&config)?;
            let summary = harness::run(&config, &out_dir)?;
            for check in &summary.checks {
                let mark = if check.pass { "PASS" } else { "FAIL" };
                writeln!(out, "{mark} {}: {}", check.name, check.detail)?;
            }
            status(summary.pass)
        }
        Command::ExportPool { out: path, no_zero, ordered } => {
            let pool = enumerate_tests(PoolConfig { admit_zero: !no_zero, ordered_pairs: ordered });
            let mut file = BufWriter::new(File::create(&path)?);
            write_pool_csv(&pool, &mut file)?;
            file.flush()?;
            Status::Passed
        }
        Command::Serve { port, host, config, data_dir, cors } => {
            let default_config: SessionConfig = match config {
                Some(path) => read_json(&path)?,
                None => SessionConfig::default(),
            };
            let state = AppState::open(ServiceOptions { data_dir, default_config, cors })?;
            let addr = SocketAddr::new(host, port);
            eprintln!("listening on http://{addr} ({} sessions restored)", state.session_count());
            tokio::runtime::Runtime::new()?.block_on(ecd_service::serve(addr, state))?;
            Status::Passed
        }
    };
    Ok(code)
}

fn main() -> ExitCode {
    let stdout = std::io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    let result = execute(Cli::parse(), &mut out).and_then(|s| out.flush().map(|_| s).map_err(Into::into));
    match result {
        Ok(Status::Passed) => ExitCode::SUCCESS,
        Ok(Status::Failed) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
