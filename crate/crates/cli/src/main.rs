//! Pipeline driver.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 missing input or
//! artifact, 4 data format error, 1 anything else. Failures print one JSON
//! line `{"error":…,"message":…}` to stderr.

mod bench;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use flowshap_core::config::{Config, CONFIG_FILE_NAME};
use flowshap_core::partition::ClusterPartition;
use flowshap_core::scenario::{
    self, config_grid, read_artifact, to_json, Query, Scenario, FLOWS_FILE, MODEL_FILE,
    PARTITION_FILE,
};
use flowshap_core::synth::{generate, SynthParams};
use flowshap_core::trajdata::{build_flow_tensor, FlowTensor};
use flowshap_core::Error;

pub const TRAJECTORIES_FILE: &str = "trajectories.csv";
pub const INTERSECTIONS_FILE: &str = "intersections.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const ATTRIBUTION_FILE: &str = "attribution.json";
pub const BENCH_FILE: &str = "bench.json";

const AFTER_HELP: &str = "\
Outputs (under --out, default: the config file's directory or `.`):
  gen-synth  trajectories.csv, intersections.csv, manifest.json, flowshap.conf
  ingest     flows.tpft
  partition  partition.json
  train      model.tprm      (reads flows.tpft, partition.json)
  explain    attribution.json (reads all three artifacts)
  bench      bench.json
Exit codes: 0 ok, 2 usage/config, 3 missing input or artifact, 4 bad data format.";

#[derive(Parser, Debug)]
#[command(name = "flowshap", version, about = "Explainable grid traffic-flow forecasting", after_help = AFTER_HELP)]
struct Cli {
    /// Config file (key = value lines); FLOWSHAP_<KEY> variables override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; also where stage artifacts are read from.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic city with planted congestion events.
    GenSynth(GenSynthArgs),
    /// Rasterize trajectories into the flow tensor.
    Ingest,
    /// Cluster intersections and partition the grid.
    Partition,
    /// Fit the configured predictor.
    Train,
    /// Attribute one forecast, identical to the matching API response.
    Explain(ExplainArgs),
    /// Serve the JSON API.
    Serve(ServeArgs),
    /// Time exact and sampled attribution on synthetic games.
    Bench(bench::BenchArgs),
}

#[derive(Args, Debug)]
struct GenSynthArgs {
    #[arg(long, default_value_t = 300)]
    vehicles: usize,
    #[arg(long, default_value_t = 4)]
    hours: u32,
    #[arg(long = "congestion-events", default_value_t = 1)]
    congestion_events: usize,
}

#[derive(Args, Debug)]
#[command(group(clap::ArgGroup::new("target").required(true).args(["cluster", "cell"])))]
struct ExplainArgs {
    #[arg(long)]
    cluster: Option<usize>,
    /// Cell as `row,col`.
    #[arg(long, value_parser = parse_cell)]
    cell: Option<(usize, usize)>,
    #[arg(long)]
    base: usize,
    /// 1-based horizon; defaults to the configured interpreted horizon.
    #[arg(long)]
    horizon: Option<usize>,
}

#[derive(Args, Debug)]
struct ServeArgs {
    #[arg(long)]
    bind: Option<String>,
    #[arg(long)]
    port: Option<u16>,
}

fn parse_cell(s: &str) -> Result<(usize, usize), String> {
    let (r, c) = s
        .split_once(',')
        .ok_or_else(|| format!("expected `row,col`, got `{s}`"))?;
    let n = |v: &str| {
        v.trim()
            .parse::<usize>()
            .map_err(|_| format!("`{v}` is not a cell index"))
    };
    Ok((n(r)?, n(c)?))
}

/// Exit status for a pipeline error.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::NotFound(_) => 3,
        Error::Format { .. } => 4,
        _ => 1,
    }
}

fn fail(code: &str, message: &str, status: u8) -> ExitCode {
    let line = serde_json::json!({ "error": code, "message": message });
    eprintln!("{line}");
    ExitCode::from(status)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let line = msg
                .lines()
                .take_while(|l| !l.starts_with("Usage:"))
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .collect::<Vec<_>>()
                .join(" ");
            return fail("usage", line.trim_start_matches("error: "), 2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.code(), &e.to_string(), exit_code(&e)),
    }
}

struct Ctx {
    config: Config,
    out: PathBuf,
}

impl Ctx {
    fn new(cli: &Cli) -> flowshap_core::Result<Self> {
        let path = cli.config.clone().or_else(|| {
            let p = PathBuf::from(CONFIG_FILE_NAME);
            p.exists().then_some(p)
        });
        let mut config = Config::load(path.as_deref())?;
        if let Some(s) = cli.seed {
            config.seed = s;
        }
        let out = cli
            .out
            .clone()
            .or_else(|| config.artifacts.clone())
            .or_else(|| {
                path.as_deref()
                    .and_then(Path::parent)
                    .filter(|p| !p.as_os_str().is_empty())
                    .map(Path::to_path_buf)
            })
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(Ctx { config, out })
    }

    fn write(&self, name: &str, bytes: &[u8]) -> flowshap_core::Result<PathBuf> {
        fs::create_dir_all(&self.out)?;
        let p = self.out.join(name);
        fs::write(&p, bytes)?;
        Ok(p)
    }

    fn read_flows(&self) -> flowshap_core::Result<FlowTensor> {
        let grid = config_grid(&self.config)?;
        FlowTensor::from_bytes(&read_artifact(&self.out, FLOWS_FILE, "ingest")?, &grid)
    }

    fn read_partition(&self) -> flowshap_core::Result<ClusterPartition> {
        let bytes = read_artifact(&self.out, PARTITION_FILE, "partition")?;
        serde_json::from_slice(&bytes).map_err(|e| Error::format(format!("{PARTITION_FILE}: {e}")))
    }
}

fn report(doc: serde_json::Value) {
    println!("{doc}");
}

fn run(cli: Cli) -> flowshap_core::Result<()> {
    match &cli.command {
        Command::GenSynth(a) => gen_synth(&cli, a),
        Command::Ingest => {
            let ctx = Ctx::new(&cli)?;
            let (store, parse) = scenario::load_trajectories(&ctx.config)?;
            let grid = config_grid(&ctx.config)?;
            let (t0, n) = scenario::resolve_axis(&ctx.config, &store)?;
            let (tensor, stats) =
                build_flow_tensor(&store, &grid, ctx.config.interval_seconds, t0, n)?;
            let p = ctx.write(FLOWS_FILE, &tensor.to_bytes())?;
            report(serde_json::json!({
                "wrote": p, "trajectories": store.len(), "t0": t0, "n_intervals": n,
                "parse": parse, "raster": stats,
            }));
            Ok(())
        }
        Command::Partition => {
            let ctx = Ctx::new(&cli)?;
            let (_, partition) = scenario::partition_stage(&ctx.config)?;
            let p = ctx.write(PARTITION_FILE, to_json(&partition)?.as_bytes())?;
            report(serde_json::json!({
                "wrote": p, "k": partition.k, "inertia": partition.inertia,
            }));
            Ok(())
        }
        Command::Train => {
            let ctx = Ctx::new(&cli)?;
            let tensor = ctx.read_flows()?;
            let partition = ctx.read_partition()?;
            let predictor = scenario::train_stage(&ctx.config, &tensor, &partition)?;
            let p = ctx.write(MODEL_FILE, &predictor.to_bytes())?;
            report(serde_json::json!({
                "wrote": p, "predictor": predictor.kind().as_str(),
            }));
            Ok(())
        }
        Command::Explain(a) => {
            let ctx = Ctx::new(&cli)?;
            let query = match (a.cluster, a.cell) {
                (Some(cluster), _) => Query::ClusterAttribution {
                    cluster,
                    base: a.base,
                    h: a.horizon,
                },
                (None, Some((row, col))) => Query::GridAttribution {
                    row,
                    col,
                    base: a.base,
                    h: a.horizon,
                },
                (None, None) => unreachable!("clap requires a target"),
            };
            let s = Scenario::from_artifacts(ctx.config.clone(), &ctx.out)?;
            let body = s.answer(&query)?;
            let p = ctx.write(ATTRIBUTION_FILE, body.as_bytes())?;
            report(serde_json::json!({ "wrote": p, "query": query.key() }));
            Ok(())
        }
        Command::Serve(a) => {
            let ctx = Ctx::new(&cli)?;
            let mut config = ctx.config;
            if let Some(b) = &a.bind {
                config.bind = b.clone();
            }
            if let Some(p) = a.port {
                config.port = p;
            }
            if ctx.out.join(PARTITION_FILE).exists() {
                config.artifacts = Some(ctx.out.clone());
            }
            let rt = tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()?;
            rt.block_on(flowshap_service::serve(config))?;
            Ok(())
        }
        Command::Bench(a) => {
            let ctx = Ctx::new(&cli)?;
            let r = bench::run(a, ctx.config.seed)?;
            let body = serde_json::to_string(&r).map_err(|e| Error::format(e.to_string()))?;
            ctx.write(BENCH_FILE, body.as_bytes())?;
            println!("{body}");
            Ok(())
        }
    }
}

fn gen_synth(cli: &Cli, a: &GenSynthArgs) -> flowshap_core::Result<()> {
    let params = SynthParams {
        vehicles: a.vehicles,
        hours: a.hours,
        events: a.congestion_events,
        seed: cli.seed.unwrap_or(SynthParams::default().seed),
        ..SynthParams::default()
    };
    let out = generate(&params)?;
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)?;
    fs::write(dir.join(TRAJECTORIES_FILE), out.trajectories_csv())?;
    fs::write(dir.join(INTERSECTIONS_FILE), out.intersections_csv())?;
    fs::write(dir.join(MANIFEST_FILE), to_json(&out.manifest)?)?;
    fs::write(dir.join(CONFIG_FILE_NAME), out.config().render())?;
    report(serde_json::json!({
        "wrote": dir,
        "trajectories": out.manifest.trajectories,
        "events": out.manifest.events.len(),
    }));
    Ok(())
}
