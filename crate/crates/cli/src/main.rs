mod config;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use config::{DistanceArg, FieldArg, LayoutArg, Settings, WeightingArg};
use netarch::data::{load_csv, log_squared, summarize, write_csv};
use netarch::evaluate::{build_report, run_backtest};
use netarch::network::{
    dist_correlation, dist_euclidean, dist_logarch, export_graph, weights_inverse_distance,
    weights_knn, DistanceKind,
};
use netarch::rng::SplitMix64;
use netarch::simulate::{
    random_knn_weights, simulate_network, InnovationSpec, NetworkProcess, MIN_BURN_IN,
};
use netarch::{ErrorClass, ForecastConstant, ForecastTable, NetArchError, Result, ReturnPanel};

#[derive(Parser)]
#[command(
    name = "netarch",
    version,
    about = "Network log-ARCH volatility forecasting"
)]
struct Cli {
    /// JSON file with default settings; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Read a price or return CSV, validate it and write the return panel.
    Ingest(IngestArgs),
    /// Build distances and edge weights from a return panel.
    Network(NetworkArgs),
    /// Rolling-window one-step-ahead forecasts for a set of models.
    Backtest(BacktestArgs),
    /// Losses, Diebold-Mariano tests, model confidence sets and ensembles.
    Report(ReportArgs),
    /// Simulate a network log-ARCH panel.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct PanelInput {
    /// Return panel: `panel.json` from `ingest`, or a CSV file.
    #[arg(long)]
    panel: PathBuf,
    #[arg(long, value_enum)]
    layout: Option<LayoutArg>,
    #[arg(long, value_enum)]
    field: Option<FieldArg>,
}

#[derive(Args)]
struct IngestArgs {
    input: PathBuf,
    #[arg(long, value_enum)]
    layout: Option<LayoutArg>,
    #[arg(long, value_enum)]
    field: Option<FieldArg>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct NetworkArgs {
    #[command(flatten)]
    input: PanelInput,
    #[arg(long, value_enum)]
    distance: Option<DistanceArg>,
    #[arg(long, value_enum)]
    weighting: Option<WeightingArg>,
    #[arg(long)]
    k: Option<usize>,
    /// Build the network from the first M dates only.
    #[arg(long = "M")]
    window_len: Option<usize>,
    /// Keep raw inverse distances instead of row-normalizing them.
    #[arg(long)]
    raw: bool,
    #[arg(long)]
    zero_policy: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BacktestArgs {
    #[command(flatten)]
    input: PanelInput,
    /// Comma-separated model ids, e.g. `logarch,A.1,B.3.1`.
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<String>>,
    #[arg(long = "M")]
    window_len: Option<usize>,
    /// Rebuild W on every rolling window.
    #[arg(long)]
    refit_w: bool,
    #[arg(long)]
    zero_policy: Option<String>,
    /// Network forecast constant: `smearing` (log variance) or
    /// `residual-mean` (mean log-squared return).
    #[arg(long, value_parser = parse_constant)]
    network_constant: Option<ForecastConstant>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// `forecasts.json` written by `backtest`.
    #[arg(long)]
    forecasts: PathBuf,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long = "B")]
    bootstrap_reps: Option<usize>,
    #[arg(long)]
    block_len: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 10)]
    n: usize,
    #[arg(long = "T", default_value_t = 3040)]
    t_len: usize,
    #[arg(long, default_value_t = 0.4)]
    rho: f64,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 0.2)]
    gamma_min: f64,
    #[arg(long, default_value_t = 0.6)]
    gamma_max: f64,
    #[arg(long, default_value_t = -9.0)]
    phi0: f64,
    #[arg(long, default_value_t = 1000)]
    burn_in: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

fn parse_constant(s: &str) -> std::result::Result<ForecastConstant, String> {
    match s {
        "smearing" => Ok(ForecastConstant::Smearing),
        "residual-mean" => Ok(ForecastConstant::ResidualMean),
        _ => Err("expected `smearing` or `residual-mean`".into()),
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn hash_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

/// Collects output files and their content hashes.
struct Outputs {
    dir: PathBuf,
    hashes: BTreeMap<String, String>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            hashes: BTreeMap::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        std::fs::write(self.dir.join(name), bytes)?;
        self.hashes.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    fn finish(
        self,
        command: &str,
        settings: &Settings,
        inputs: BTreeMap<String, String>,
    ) -> Result<()> {
        #[derive(Serialize)]
        struct Manifest<'a> {
            command: &'a str,
            settings: &'a Settings,
            inputs: BTreeMap<String, String>,
            outputs: BTreeMap<String, String>,
        }
        let m = Manifest {
            command,
            settings,
            inputs,
            outputs: self.hashes,
        };
        let mut text = serde_json::to_string_pretty(&m)?;
        text.push('\n');
        std::fs::write(self.dir.join("manifest.json"), text)?;
        Ok(())
    }
}

fn load_panel(
    input: &PanelInput,
    settings: &mut Settings,
) -> Result<(ReturnPanel, BTreeMap<String, String>)> {
    if let Some(l) = input.layout {
        settings.layout = l;
    }
    if let Some(f) = input.field {
        settings.field = f;
    }
    let path = &input.panel;
    let mut inputs = BTreeMap::new();
    inputs.insert(path.display().to_string(), hash_file(path)?);
    let panel = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&std::fs::read_to_string(path)?)?
    } else {
        let v = load_csv(path, settings.layout.into(), settings.field.into())?;
        if !v.dropped.is_empty() {
            eprintln!(
                "dropped {} stock(s): {}",
                v.dropped.len(),
                v.dropped.join(", ")
            );
        }
        v.panel
    };
    Ok((panel, inputs))
}

fn ingest(args: &IngestArgs, mut settings: Settings) -> Result<()> {
    if let Some(l) = args.layout {
        settings.layout = l;
    }
    if let Some(f) = args.field {
        settings.field = f;
    }
    let v = load_csv(&args.input, settings.layout.into(), settings.field.into())?;
    let mut out = Outputs::new(&args.out)?;
    out.write_json("panel.json", &v.panel)?;
    let mut csv = Vec::new();
    write_csv(&v.panel, &mut csv)?;
    out.write("returns.csv", &csv)?;

    let summary = summarize(&v.panel);
    let mut text = String::from("ticker,mean,sd,min,max\n");
    for s in &summary {
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            s.ticker, s.mean, s.sd, s.min, s.max
        ));
    }
    out.write("summary.csv", text.as_bytes())?;
    #[derive(Serialize)]
    struct Ingest<'a> {
        n_stocks: usize,
        n_dates: usize,
        first_date: &'a str,
        last_date: &'a str,
        dropped: &'a [String],
    }
    let dates = v.panel.dates();
    out.write_json(
        "ingest.json",
        &Ingest {
            n_stocks: v.panel.n_stocks(),
            n_dates: v.panel.n_dates(),
            first_date: &dates[0],
            last_date: &dates[dates.len() - 1],
            dropped: &v.dropped,
        },
    )?;
    println!(
        "{} stocks x {} dates ({} .. {}), {} dropped",
        v.panel.n_stocks(),
        v.panel.n_dates(),
        dates[0],
        dates[dates.len() - 1],
        v.dropped.len()
    );
    let mut inputs = BTreeMap::new();
    inputs.insert(args.input.display().to_string(), hash_file(&args.input)?);
    out.finish("ingest", &settings, inputs)
}

fn network(args: &NetworkArgs, mut settings: Settings) -> Result<()> {
    let (panel, inputs) = load_panel(&args.input, &mut settings)?;
    if let Some(d) = args.distance {
        settings.distance = d;
    }
    if let Some(w) = args.weighting {
        settings.weighting = w;
    }
    if let Some(k) = args.k {
        settings.k = k;
    }
    if args.raw {
        settings.row_normalize = false;
    }
    if let Some(z) = &args.zero_policy {
        settings.zero_policy = z.clone();
    }
    let panel = match args.window_len {
        Some(m) => panel.window(0, m)?,
        None => panel,
    };
    let d = match DistanceKind::from(settings.distance) {
        DistanceKind::Euclidean => dist_euclidean(&panel),
        DistanceKind::Correlation => dist_correlation(&panel)?,
        DistanceKind::LogarchAr => dist_logarch(
            &log_squared(&panel, settings.zero_mode()?)?,
            settings.ar_max_order,
            settings.ar_criterion,
        )?,
    };
    let w = match settings.weighting {
        WeightingArg::Invdist => weights_inverse_distance(&d, settings.row_normalize)?,
        WeightingArg::Knn => weights_knn(&d, settings.k)?,
    };
    let mut out = Outputs::new(&args.out)?;
    out.write("distance.csv", d.to_csv().as_bytes())?;
    out.write_json("distance.json", &d)?;
    out.write_json("weights.json", &w)?;
    out.write(
        "network.graphml",
        export_graph(&w, panel.tickers())?.as_bytes(),
    )?;
    let edges = w.weights().iter().filter(|&&x| x != 0.0).count();
    println!("{} nodes, {} directed edges", w.n_nodes(), edges);
    out.finish("network", &settings, inputs)
}

fn backtest(args: &BacktestArgs, mut settings: Settings) -> Result<()> {
    let (panel, inputs) = load_panel(&args.input, &mut settings)?;
    if let Some(m) = &args.models {
        settings.models = m.clone();
    }
    if let Some(m) = args.window_len {
        settings.window_len = m;
    }
    if args.refit_w {
        settings.refit_w = true;
    }
    if let Some(z) = &args.zero_policy {
        settings.zero_policy = z.clone();
    }
    if let Some(c) = args.network_constant {
        settings.network_constant = c;
    }
    let config = settings.backtest()?;
    let table = run_backtest(&panel, &config)?;
    let mut out = Outputs::new(&args.out)?;
    out.write_json("forecasts.json", &table)?;
    let mut csv = Vec::new();
    table.write_csv(&mut csv)?;
    out.write("forecasts.csv", &csv)?;
    println!(
        "{} models x {} stocks x {} forecast dates",
        table.model_ids.len(),
        table.tickers.len(),
        table.horizon()
    );
    out.finish("backtest", &settings, inputs)
}

fn report(args: &ReportArgs, mut settings: Settings) -> Result<()> {
    if let Some(a) = args.alpha {
        settings.alpha = a;
    }
    if let Some(b) = args.bootstrap_reps {
        settings.bootstrap_reps = b;
    }
    if let Some(b) = args.block_len {
        settings.block_len = b;
    }
    if let Some(s) = args.seed {
        settings.seed = s;
    }
    let text = std::fs::read_to_string(&args.forecasts)?;
    let table: ForecastTable = serde_json::from_str(&text)?;
    let mut report = build_report(&table, &settings.report())?;

    let mut inputs = BTreeMap::new();
    inputs.insert(
        args.forecasts.display().to_string(),
        sha256_hex(text.as_bytes()),
    );
    // carry the panel hash recorded by the backtest that made the forecasts
    if let Some(dir) = args.forecasts.parent() {
        if let Ok(m) = std::fs::read_to_string(dir.join("manifest.json")) {
            let m: serde_json::Value = serde_json::from_str(&m)?;
            if let Some(obj) = m.get("inputs").and_then(|v| v.as_object()) {
                for (k, v) in obj {
                    if let Some(h) = v.as_str() {
                        inputs.insert(k.clone(), h.to_string());
                    }
                }
            }
        }
    }
    report.inputs = inputs.clone();

    let mut out = Outputs::new(&args.out)?;
    out.write_json("report.json", &report)?;
    out.write("losses.csv", report.loss_table_csv().as_bytes())?;
    let bench = report
        .model_loss(&report.config.benchmark_id)
        .map(|l| l.avg_rmsfe)
        .unwrap_or(f64::NAN);
    println!("benchmark average RMSFE {bench:.4}");
    if let Some(best) = &report.best_network {
        let l = report.model_loss(best).unwrap();
        println!(
            "best network {best}: RMSFE {:.4}, MAFE {:.4}",
            l.avg_rmsfe, l.avg_mafe
        );
    }
    println!(
        "MCS (squared): {}",
        report.mcs_squared.superior_set.join(", ")
    );
    println!(
        "MCS (absolute): {}",
        report.mcs_absolute.superior_set.join(", ")
    );
    for e in &report.ensembles {
        println!(
            "ensemble {:?}: RMSFE {:.4}, MAFE {:.4}",
            e.method, e.avg_rmsfe, e.avg_mafe
        );
    }
    out.finish("report", &settings, inputs)
}

fn simulate(args: &SimulateArgs, mut settings: Settings) -> Result<()> {
    if let Some(s) = args.seed {
        settings.seed = s;
    }
    if let Some(k) = args.k {
        settings.k = k;
    }
    if args.burn_in < MIN_BURN_IN {
        return Err(NetArchError::Invalid(format!(
            "burn-in must be at least {MIN_BURN_IN}"
        )));
    }
    if args.gamma_min.is_nan() || args.gamma_max.is_nan() || args.gamma_min > args.gamma_max {
        return Err(NetArchError::Invalid("gamma-min exceeds gamma-max".into()));
    }
    let mut rng = SplitMix64::new(settings.seed);
    let w = random_knn_weights(args.n, settings.k, rng.next_u64())?;
    let process = NetworkProcess {
        phi0: vec![args.phi0; args.n],
        rho: args.rho,
        gamma_diag: (0..args.n)
            .map(|_| args.gamma_min + (args.gamma_max - args.gamma_min) * rng.next_f64())
            .collect(),
    };
    let panel = simulate_network(
        &process,
        &w,
        args.t_len,
        args.burn_in,
        &InnovationSpec {
            seed: rng.next_u64(),
        },
    )?;
    let mut out = Outputs::new(&args.out)?;
    let mut csv = Vec::new();
    write_csv(&panel, &mut csv)?;
    out.write("panel.csv", &csv)?;
    out.write_json("panel.json", &panel)?;
    out.write_json("weights.json", &w)?;
    out.write_json("process.json", &process)?;
    println!("simulated {} stocks x {} dates", args.n, args.t_len);
    out.finish("simulate", &settings, BTreeMap::new())
}

fn run(cli: Cli) -> Result<()> {
    let settings = Settings::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Ingest(a) => ingest(a, settings),
        Command::Network(a) => network(a, settings),
        Command::Backtest(a) => backtest(a, settings),
        Command::Report(a) => report(a, settings),
        Command::Simulate(a) => simulate(a, settings),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Usage => 2,
                ErrorClass::Data => 3,
                ErrorClass::Numeric => 4,
            })
        }
    }
}
