//! Command-line front end.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{GraphGenSpec, GraphModel, MultiplexGraph, ReplicaId};
use crate::harness::{
    run_experiment, summarize_outcomes_csv, write_outcomes_csv, write_results_csv, ExperimentConfig,
};
use crate::locator::rank_sources;
use crate::observation::{place_observers, read_observations, DelayVector};
use crate::spread::{default_t_max, delay_moments, simulate, SpreadParams};

#[derive(Debug, Parser)]
#[command(
    name = "mlocate",
    version,
    about = "Spreading source localization on multiplex networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a multiplex graph file.
    Generate(GenerateArgs),
    /// Run one SI spread and dump infection times.
    Simulate(SimulateArgs),
    /// Rank candidate sources from observer reports.
    Locate(LocateArgs),
    /// Run a Monte Carlo experiment from a JSON config.
    Experiment(ExperimentArgs),
    /// Re-summarize a per-realization outcomes file.
    Metrics(MetricsArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long, default_value = "er")]
    model: String,
    #[arg(long, default_value_t = 2)]
    layers: usize,
    #[arg(long)]
    nodes: usize,
    #[arg(long, default_value_t = 8.0)]
    degree: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RateArgs {
    /// Intra-layer infection rates, one per layer (a single value is applied
    /// to every layer).
    #[arg(long, value_delimiter = ',', required = true)]
    beta: Vec<f64>,
    #[arg(long)]
    beta_inter: f64,
}

impl RateArgs {
    fn params(&self, layers: usize) -> Result<SpreadParams> {
        if self.beta.len() == 1 {
            SpreadParams::uniform(layers, self.beta[0], self.beta_inter)
        } else {
            SpreadParams::new(self.beta.clone(), self.beta_inter)
        }
    }
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long, default_value_t = 0)]
    source_layer: usize,
    #[arg(long)]
    source_node: usize,
    #[command(flatten)]
    rates: RateArgs,
    #[arg(long)]
    t_max: Option<u32>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Infection record, `layer node time` per infected replica.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Observer densities per layer; with `--obs-out`, places observers and
    /// writes their reports.
    #[arg(long, value_delimiter = ',')]
    obs_density: Vec<f64>,
    #[arg(long, requires = "obs_density")]
    obs_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct LocateArgs {
    #[arg(long)]
    graph: PathBuf,
    /// Observer reports, `layer node time` per line (`-` for not infected).
    #[arg(long)]
    obs: PathBuf,
    #[command(flatten)]
    rates: RateArgs,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `master_seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write one line per realization here.
    #[arg(long)]
    outcomes: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MetricsArgs {
    #[arg(long)]
    outcomes: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0.95")]
    alpha: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn read_graph(path: &Path) -> Result<MultiplexGraph> {
    MultiplexGraph::read_text(BufReader::new(File::open(path)?))
}

fn generate(args: GenerateArgs) -> Result<()> {
    let model: GraphModel = args.model.parse()?;
    let g = GraphGenSpec {
        model,
        layer_count: args.layers,
        nodes_per_layer: args.nodes,
        mean_degree: args.degree,
        seed: args.seed,
    }
    .generate()?;
    let mut out = output(args.out.as_deref())?;
    g.write_text(&mut out)?;
    out.flush()?;
    Ok(())
}

fn simulate_cmd(args: SimulateArgs) -> Result<()> {
    let g = read_graph(&args.graph)?;
    let params = args.rates.params(g.layer_count())?;
    let source = ReplicaId::new(args.source_node, args.source_layer);
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let t_max = args.t_max.unwrap_or_else(|| default_t_max(&g, &params));
    let rec = simulate(&g, source, &params, &mut rng, t_max)?;
    let mut out = output(args.out.as_deref())?;
    rec.write_text(&mut out)?;
    out.flush()?;
    if let Some(path) = args.obs_out {
        let obs = place_observers(&g, &args.obs_density, &mut rng)?;
        let mut w = BufWriter::new(File::create(path)?);
        for &o in obs.observers() {
            match rec.time(o) {
                Some(t) => writeln!(w, "{} {} {}", o.layer, o.node, t)?,
                None => writeln!(w, "{} {} -", o.layer, o.node)?,
            }
        }
        w.flush()?;
    }
    Ok(())
}

fn locate(args: LocateArgs) -> Result<()> {
    let g = read_graph(&args.graph)?;
    let params = args.rates.params(g.layer_count())?;
    let reports = read_observations(BufReader::new(File::open(&args.obs)?))?;
    for (r, _) in &reports {
        g.check(*r)?;
    }
    let dv = DelayVector::from_reports(g.nodes_per_layer(), &reports)?;
    let moments = delay_moments(&params);
    let ranking = match args.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build()
            .map_err(|e| Error::invalid(e.to_string()))?
            .install(|| rank_sources(&g, &dv, &moments))?,
        None => rank_sources(&g, &dv, &moments)?,
    };
    let mut out = output(args.out.as_deref())?;
    writeln!(out, "rank,layer,node,score")?;
    for group in ranking.tie_groups() {
        for c in &ranking.entries()[group.clone()] {
            writeln!(
                out,
                "{},{},{},{}",
                group.start + 1,
                c.candidate.layer,
                c.candidate.node,
                c.score
            )?;
        }
    }
    out.flush()?;
    Ok(())
}

fn experiment(args: ExperimentArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::from_json_file(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    let results = run_experiment(&cfg, args.threads)?;
    let mut out = output(args.out.as_deref())?;
    write_results_csv(&cfg, &results, &mut out)?;
    out.flush()?;
    if let Some(path) = args.outcomes {
        let mut w = BufWriter::new(File::create(path)?);
        write_outcomes_csv(&cfg, &results, &mut w)?;
        w.flush()?;
    }
    Ok(())
}

fn metrics(args: MetricsArgs) -> Result<()> {
    let input = BufReader::new(File::open(&args.outcomes)?);
    let mut out = output(args.out.as_deref())?;
    summarize_outcomes_csv(input, &args.alpha, &mut out)?;
    out.flush()?;
    Ok(())
}

/// Runs the CLI and returns the process exit code: 0 on success, 2 for
/// usage and configuration errors, 1 for anything else.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Locate(a) => locate(a),
        Command::Experiment(a) => experiment(a),
        Command::Metrics(a) => metrics(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config { .. } | Error::InvalidParameter(_) => 2,
                _ => 1,
            }
        }
    }
}
