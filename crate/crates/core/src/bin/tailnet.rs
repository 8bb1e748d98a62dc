use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tailnet::pipeline::{run_pipeline, PipelineConfig, Stage, StageOptions};
use tailnet::{Error, Result};

/// Tail-risk linkage networks from market data.
#[derive(Parser, Debug)]
#[command(name = "tailnet", version)]
struct Cli {
    /// `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for all stage artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Run even if upstream artifacts are stale or were built with mixed settings.
    #[arg(long, global = true)]
    force: bool,
    /// Override any configuration key, e.g. `--set window=120`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load prices and write the return panel.
    Ingest(IngestArgs),
    /// Write a synthetic return panel.
    Simulate(SimulateArgs),
    /// Rolling CoES matrices.
    Coes(CoesArgs),
    /// Similarities, breakpoints and signed adjacency per date.
    Network(NetworkArgs),
    /// Systemic-risk score, contributions and annual table.
    Score(ScoreArgs),
    /// Regress the risk series on covariates.
    Drivers(DriversArgs),
    /// One date's network as GraphML.
    ExportGraphml(GraphmlArgs),
    /// Every stage in order, or one stage with `--stage`.
    Run(Box<RunArgs>),
}

#[derive(Args, Debug, Default)]
struct IngestArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    /// prices-long or prices-wide.
    #[arg(long)]
    format: Option<String>,
    /// Market caps for prices-wide input.
    #[arg(long)]
    caps: Option<PathBuf>,
    /// Comma-separated symbols to keep.
    #[arg(long)]
    symbols: Option<String>,
    #[arg(long)]
    start: Option<String>,
    #[arg(long)]
    end: Option<String>,
    /// drop-asset, forward-fill[:N] or strict-fill[:N].
    #[arg(long)]
    gap_policy: Option<String>,
    #[arg(long)]
    simple_returns: bool,
}

#[derive(Args, Debug, Default)]
struct SimulateArgs {
    /// tether-like, independent or regime.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    assets: Option<usize>,
    #[arg(long)]
    days: Option<usize>,
}

#[derive(Args, Debug, Default)]
struct CoesArgs {
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    window: Option<usize>,
}

#[derive(Args, Debug, Default)]
struct NetworkArgs {
    #[arg(long)]
    theta_bar: Option<f64>,
    /// Fixed positive threshold; needs --fixed-minus too.
    #[arg(long, allow_hyphen_values = true)]
    fixed_plus: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    fixed_minus: Option<f64>,
    /// Also write one dense adjacency matrix per date.
    #[arg(long)]
    dense: bool,
}

#[derive(Args, Debug, Default)]
struct ScoreArgs {
    #[arg(long)]
    normalize_caps: bool,
    /// Report the doubled gradient instead of additive contributions.
    #[arg(long)]
    euler_raw: bool,
    #[arg(long)]
    no_contributions: bool,
    #[arg(long)]
    no_annual: bool,
}

#[derive(Args, Debug, Default)]
struct DriversArgs {
    #[arg(long)]
    covariates: Option<PathBuf>,
    /// `name:rows`, repeatable.
    #[arg(long = "lag")]
    lags: Vec<String>,
    #[arg(long)]
    raw_cases: bool,
    /// score or negative_ratio.
    #[arg(long)]
    response: Option<String>,
    #[arg(long)]
    bandwidth: Option<usize>,
}

#[derive(Args, Debug, Default)]
struct GraphmlArgs {
    /// Defaults to the last network date.
    #[arg(long)]
    date: Option<String>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    stage: Option<String>,
    /// Also export GraphML.
    #[arg(long)]
    graphml: bool,
    #[command(flatten)]
    ingest: IngestArgs,
    #[command(flatten)]
    simulate: SimulateArgs,
    #[command(flatten)]
    coes: CoesArgs,
    #[command(flatten)]
    network: NetworkArgs,
    #[command(flatten)]
    score: ScoreArgs,
    #[command(flatten)]
    drivers: DriversArgs,
    #[command(flatten)]
    graphml_args: GraphmlArgs,
}

type Pairs = Vec<(&'static str, String)>;

fn push<T: ToString>(out: &mut Pairs, key: &'static str, v: &Option<T>) {
    if let Some(v) = v {
        out.push((key, v.to_string()));
    }
}

fn flag(out: &mut Pairs, key: &'static str, on: bool, value: &str) {
    if on {
        out.push((key, value.to_string()));
    }
}

impl IngestArgs {
    fn pairs(&self, out: &mut Pairs) {
        push(out, "input", &self.input.as_ref().map(|p| p.display().to_string()));
        push(out, "input_format", &self.format);
        push(out, "caps_input", &self.caps.as_ref().map(|p| p.display().to_string()));
        push(out, "symbols", &self.symbols);
        push(out, "start_date", &self.start);
        push(out, "end_date", &self.end);
        push(out, "gap_policy", &self.gap_policy);
        flag(out, "simple_returns", self.simple_returns, "true");
    }
}

impl SimulateArgs {
    fn pairs(&self, out: &mut Pairs) {
        push(out, "preset", &self.preset);
        push(out, "seed", &self.seed);
        push(out, "sim_assets", &self.assets);
        push(out, "sim_days", &self.days);
    }
}

impl CoesArgs {
    fn pairs(&self, out: &mut Pairs) {
        push(out, "alpha", &self.alpha);
        push(out, "window", &self.window);
    }
}

impl NetworkArgs {
    fn pairs(&self, out: &mut Pairs) {
        push(out, "theta_bar", &self.theta_bar);
        push(out, "fixed_plus", &self.fixed_plus);
        push(out, "fixed_minus", &self.fixed_minus);
        flag(out, "export_adjacency", self.dense, "true");
    }
}

impl ScoreArgs {
    fn pairs(&self, out: &mut Pairs) {
        flag(out, "normalize_caps", self.normalize_caps, "true");
        flag(out, "euler_raw", self.euler_raw, "true");
        flag(out, "export_contributions", self.no_contributions, "false");
        flag(out, "export_annual", self.no_annual, "false");
    }
}

impl DriversArgs {
    fn pairs(&self, out: &mut Pairs) {
        push(out, "covariates", &self.covariates.as_ref().map(|p| p.display().to_string()));
        if !self.lags.is_empty() {
            out.push(("lags", self.lags.join(",")));
        }
        flag(out, "raw_cases", self.raw_cases, "true");
        push(out, "response", &self.response);
        push(out, "bandwidth", &self.bandwidth);
    }
}

impl GraphmlArgs {
    fn pairs(&self, out: &mut Pairs) {
        push(out, "graphml_date", &self.date);
    }
}

fn build_config(cli: &Cli) -> Result<(PipelineConfig, Option<Stage>)> {
    let mut cfg = PipelineConfig::default();
    if let Some(path) = &cli.config {
        cfg.apply_file(path)?;
    }
    cfg.apply_env(std::env::vars())?;
    for s in &cli.sets {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{s}`")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    let mut pairs = Pairs::new();
    let stage = match &cli.command {
        Command::Ingest(a) => {
            a.pairs(&mut pairs);
            Some(Stage::Ingest)
        }
        Command::Simulate(a) => {
            a.pairs(&mut pairs);
            Some(Stage::Simulate)
        }
        Command::Coes(a) => {
            a.pairs(&mut pairs);
            Some(Stage::Coes)
        }
        Command::Network(a) => {
            a.pairs(&mut pairs);
            Some(Stage::Network)
        }
        Command::Score(a) => {
            a.pairs(&mut pairs);
            Some(Stage::Score)
        }
        Command::Drivers(a) => {
            a.pairs(&mut pairs);
            Some(Stage::Drivers)
        }
        Command::ExportGraphml(a) => {
            a.pairs(&mut pairs);
            Some(Stage::ExportGraphml)
        }
        Command::Run(a) => {
            a.ingest.pairs(&mut pairs);
            a.simulate.pairs(&mut pairs);
            a.coes.pairs(&mut pairs);
            a.network.pairs(&mut pairs);
            a.score.pairs(&mut pairs);
            a.drivers.pairs(&mut pairs);
            a.graphml_args.pairs(&mut pairs);
            flag(&mut pairs, "export_graphml", a.graphml, "true");
            a.stage.as_deref().map(str::parse).transpose()?
        }
    };
    for (k, v) in pairs {
        cfg.set(k, &v)?;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    Ok((cfg, stage))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = build_config(&cli).and_then(|(cfg, stage)| {
        run_pipeline(&cfg, stage, StageOptions { force: cli.force })
    });
    match result {
        Ok(reports) => {
            for r in reports {
                let dir = r.outputs.last().and_then(|p| p.parent());
                let dir = dir.map(|d| d.display().to_string()).unwrap_or_default();
                println!("{}: {} files in {dir}", r.stage, r.outputs.len());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("tailnet: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
