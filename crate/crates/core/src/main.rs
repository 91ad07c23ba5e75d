use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use wpcn_dts::cli::{run, Command, ExperimentConfig, RunOptions};
use wpcn_dts::Error;

#[derive(Parser)]
#[command(name = "wpcn-dts", version, about = "DTS wireless-powered link: analysis, simulation and HTT comparison")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Closed-form throughput over a parameter sweep
    Analyze(Opts),
    /// Monte Carlo throughput, confidence interval and overflow over a sweep
    Simulate(Opts),
    /// Throughput-maximizing bit rate
    OptimizeRate(Opts),
    /// DTS (analytical and simulated) against the harvest-then-transmit baseline
    CompareHtt(Opts),
}

#[derive(Args)]
struct Opts {
    /// Flat key = value config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output CSV (stdout when absent)
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    blocks: Option<String>,
    #[arg(long)]
    warmup: Option<String>,
    /// discrete | continuous
    #[arg(long)]
    battery: Option<String>,
    #[arg(long)]
    n_antennas: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    p_dbm: Option<String>,
    #[arg(long)]
    p_watts: Option<String>,
    #[arg(long)]
    rate: Option<String>,
    #[arg(long)]
    capacity: Option<String>,
    #[arg(long)]
    levels: Option<String>,
    #[arg(long)]
    distance: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    omega: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    noise_dbm: Option<String>,
    #[arg(long)]
    noise_watts: Option<String>,
    #[arg(long)]
    eta: Option<String>,
    /// p_dbm | rate | capacity | levels | n_antennas
    #[arg(long)]
    axis: Option<String>,
    /// Comma list or start:stop:step
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
    #[arg(long)]
    tau_grid: Option<String>,
    #[arg(long)]
    r_min: Option<String>,
    #[arg(long)]
    r_max: Option<String>,
    #[arg(long)]
    resolution: Option<String>,
    /// Write the transition matrix and stationary law of each analyzed point here
    #[arg(long)]
    dump_chain: Option<PathBuf>,
    /// Write a per-block trace of a single-point simulation here
    #[arg(long)]
    trace: Option<PathBuf>,
}

impl Opts {
    fn overrides(&self) -> Vec<(String, String)> {
        let flags = [
            ("seed", &self.seed),
            ("blocks", &self.blocks),
            ("warmup", &self.warmup),
            ("battery", &self.battery),
            ("n_antennas", &self.n_antennas),
            ("p_dbm", &self.p_dbm),
            ("p_watts", &self.p_watts),
            ("rate", &self.rate),
            ("capacity", &self.capacity),
            ("levels", &self.levels),
            ("distance", &self.distance),
            ("alpha", &self.alpha),
            ("omega", &self.omega),
            ("noise_dbm", &self.noise_dbm),
            ("noise_watts", &self.noise_watts),
            ("eta", &self.eta),
            ("axis", &self.axis),
            ("grid", &self.grid),
            ("tau_grid", &self.tau_grid),
            ("r_min", &self.r_min),
            ("r_max", &self.r_max),
            ("resolution", &self.resolution),
        ];
        let mut pairs: Vec<(String, String)> = flags
            .into_iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
            .collect();
        if let Some(out) = &self.out {
            pairs.push(("out".into(), out.display().to_string()));
        }
        pairs
    }
}

fn execute(cli: Cli) -> Result<(), Error> {
    let (command, opts) = match cli.command {
        Cmd::Analyze(o) => (Command::Analyze, o),
        Cmd::Simulate(o) => (Command::Simulate, o),
        Cmd::OptimizeRate(o) => (Command::OptimizeRate, o),
        Cmd::CompareHtt(o) => (Command::CompareHtt, o),
    };
    let mut cfg = match &opts.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply_pairs(&opts.overrides())?;
    cfg.command = Some(command);

    let run_opts = RunOptions { dump_chain: opts.dump_chain.clone(), trace: opts.trace.clone() };
    let csv = run(&cfg, &run_opts)?;
    match &cfg.out {
        Some(path) => std::fs::write(path, csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = e.to_string().replace('"', "'");
            eprintln!("error kind={} code={} message=\"{message}\"", e.kind(), e.exit_code());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
