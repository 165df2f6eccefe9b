use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::{json, Value};

use tokenpath::generators::{self, AltitudeMap};
use tokenpath::oracle::{all_shortest_paths, constrained_shortest, shortest_to_sinks};
use tokenpath::simulator::{self, check_against_oracle, InitialState, MetricsLog};
use tokenpath::{
    validate_assumptions, ChoiceModel, Mode, Network, NodeId, Policy, Scenario, Schedule, SimConfig, Stop,
};

const EXIT_INPUT: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;
const EXIT_MISMATCH: u8 = 4;

#[derive(Parser)]
#[command(name = "tokenpath", version, about = "Threshold-policy token routing simulator and shortest-path oracle")]
struct Cli {
    /// Print machine-readable JSON on standard output.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a generated network as JSON.
    Generate(GenerateArgs),
    /// Check the standing assumptions; exit 0 iff all hold.
    Validate {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        cmax: Option<usize>,
    },
    /// Run injections and write metrics.
    Simulate(SimulateArgs),
    /// Exact distances and shortest paths.
    Oracle {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        cmax: Option<usize>,
        /// Also list up to this many tied shortest paths per source.
        #[arg(long, default_value_t = 0)]
        all_paths: usize,
    },
    /// Simulate to rest and check resting paths against the oracle.
    Compare(SimulateArgs),
    /// Reformat run outputs for external plotting.
    ExportPlot {
        /// Metrics CSV or summary JSON of a simulate run.
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long, value_enum)]
        what: PlotKind,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PlotKind {
    VSeries,
    StateMap,
    ArcHistogram,
}

#[derive(Clone, Copy, ValueEnum)]
enum GeneratorKind {
    Fig2,
    Grid,
    SmallWorld,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(value_enum)]
    kind: GeneratorKind,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,

    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 4)]
    delta: usize,
    #[arg(long, default_value_t = 0.15)]
    beta: f64,
    #[arg(long, default_value_t = 50)]
    gamma_max: i64,
    #[arg(long, default_value_t = 10)]
    sigma_max: i64,

    /// Altitude raster (plain PGM, values may be negative).
    #[arg(long)]
    map: Option<PathBuf>,
    /// Without --map: a random-hills raster of this size.
    #[arg(long, default_value_t = 20)]
    width: usize,
    #[arg(long, default_value_t = 20)]
    height: usize,
    #[arg(long, default_value_t = 4)]
    hills: usize,
    /// Source pixel `x,y` (repeatable); overrides raster directives.
    #[arg(long = "source")]
    sources: Vec<String>,
    /// Sink pixel `x,y` (repeatable); overrides raster directives.
    #[arg(long = "sink")]
    sinks: Vec<String>,
    #[arg(long, default_value_t = -30, allow_hyphen_values = true)]
    h0: i64,
    #[arg(long, default_value = "2/5")]
    m_minus: String,
    #[arg(long, default_value = "9/10")]
    m_plus: String,
    /// Also write the raster used, as PGM.
    #[arg(long)]
    write_map: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct SimulateArgs {
    #[arg(long)]
    net: PathBuf,
    #[arg(long)]
    cmax: Option<usize>,
    #[arg(long, value_enum, default_value = "original")]
    policy: PolicyArg,
    #[arg(long, value_enum, default_value = "det")]
    choice: ChoiceArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `rr`, `single:ID` or `rand`.
    #[arg(long, default_value = "rr")]
    schedule: String,
    /// `rest`, `steps:K` or `rest+N`.
    #[arg(long, default_value = "rest")]
    stop: String,
    /// Scenario JSON; each event waits for the current configuration to rest.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Apply scenario events exactly at their step instead.
    #[arg(long)]
    exact_timing: bool,
    /// Metrics CSV; the summary JSON and arc histogram go next to it.
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// JSON-lines trace of every injection.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// JSON object of initial token counts, keyed `"id"` or `"id@c"`.
    #[arg(long)]
    initial_state: Option<PathBuf>,
    /// Do not settle the initial state before injecting.
    #[arg(long)]
    no_settle: bool,
    #[arg(long)]
    skip_validate: bool,
    #[arg(long, default_value_t = 50_000_000)]
    step_limit: u64,
    /// Probe tokens per source at rest.
    #[arg(long)]
    probes: Option<usize>,
    /// Independent runs with seeds seed, seed+1, ...
    #[arg(long, default_value_t = 1)]
    replications: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Original,
    Enhanced,
}

#[derive(Clone, Copy, ValueEnum)]
enum ChoiceArg {
    Det,
    Sto,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<u8> {
    match &cli.command {
        Command::Generate(args) => generate(args),
        Command::Validate { net, cmax } => validate(net, *cmax, cli.json),
        Command::Simulate(args) => simulate(args, cli.json),
        Command::Oracle { net, cmax, all_paths } => oracle(net, *cmax, *all_paths),
        Command::Compare(args) => compare(args, cli.json),
        Command::ExportPlot { metrics, what, out } => export_plot(metrics, *what, out.as_deref()),
    }
}

fn load_network(path: &Path) -> Result<Network> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Network::from_json(&text).with_context(|| format!("parsing network {}", path.display()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn parse_pixel(text: &str) -> Result<(usize, usize)> {
    let (x, y) = text
        .split_once(',')
        .with_context(|| format!("pixel must be written x,y: {text:?}"))?;
    Ok((x.trim().parse()?, y.trim().parse()?))
}

fn generate(args: &GenerateArgs) -> Result<u8> {
    let net = match args.kind {
        GeneratorKind::Fig2 => generators::fig2_network(),
        GeneratorKind::SmallWorld => {
            generators::small_world(args.n, args.delta, args.beta, args.gamma_max, args.sigma_max, args.seed)?.network
        }
        GeneratorKind::Grid => {
            let mut map = match &args.map {
                Some(p) => AltitudeMap::from_pgm(
                    &fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
                )?,
                None => AltitudeMap::random_hills(args.width, args.height, args.hills, args.seed),
            };
            if !args.sources.is_empty() {
                map.sources = args.sources.iter().map(|s| parse_pixel(s)).collect::<Result<_>>()?;
            }
            if !args.sinks.is_empty() {
                map.sinks = args.sinks.iter().map(|s| parse_pixel(s)).collect::<Result<_>>()?;
            }
            if map.sources.is_empty() {
                map.sources.push((0, 0));
            }
            if map.sinks.is_empty() {
                map.sinks.push((map.width - 1, map.height - 1));
            }
            if let Some(p) = &args.write_map {
                fs::write(p, map.to_pgm()).with_context(|| format!("writing {}", p.display()))?;
            }
            let m_minus = generators::parse_ratio(&args.m_minus)?;
            let m_plus = generators::parse_ratio(&args.m_plus)?;
            let net = generators::grid_from_altitude(&map, args.h0, m_minus, m_plus)?;
            let mut meta = net.metadata().cloned().unwrap_or_else(|| json!({}));
            meta["seed"] = json!(args.seed);
            meta["raster"] = json!(args.map.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| format!(
                "random hills: {} cones, seed {}",
                args.hills, args.seed
            )));
            net.with_metadata(meta)
        }
    };
    emit(args.out.as_deref(), &(net.to_json() + "\n"))?;
    Ok(0)
}

fn validate(path: &Path, cmax: Option<usize>, as_json: bool) -> Result<u8> {
    let net = load_network(path)?;
    let report = validate_assumptions(&net, cmax);
    if as_json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    }
    if report.passes() {
        eprintln!("all assumptions hold");
        Ok(0)
    } else {
        for m in &report.messages {
            eprintln!("fails: {m}");
        }
        Ok(EXIT_INPUT)
    }
}

fn parse_initial(text: &str) -> Result<InitialState> {
    let map: serde_json::Map<String, Value> = serde_json::from_str(text).context("initial state must be a JSON object")?;
    let mut entries = Vec::new();
    for (key, v) in map {
        let (id, c) = match key.split_once('@') {
            Some((i, c)) => (i.parse::<u32>()?, c.parse::<usize>()?),
            None => (key.parse::<u32>()?, 0),
        };
        let v = v.as_i64().with_context(|| format!("token count for {key} must be an integer"))?;
        entries.push((NodeId(id), c, v));
    }
    Ok(InitialState { entries })
}

fn build_config(args: &SimulateArgs) -> Result<SimConfig> {
    let schedule = match args.schedule.as_str() {
        "rr" => Schedule::RoundRobin,
        "rand" => Schedule::UniformRandom,
        s => match s.strip_prefix("single:") {
            Some(id) => Schedule::SingleSource(NodeId(id.parse().context("bad source id in --schedule")?)),
            None => bail!("--schedule must be rr, single:ID or rand"),
        },
    };
    let stop = match args.stop.as_str() {
        "rest" => Stop::AtRest,
        s => {
            if let Some(k) = s.strip_prefix("steps:") {
                Stop::MaxSteps(k.parse().context("bad step count in --stop")?)
            } else if let Some(n) = s.strip_prefix("rest+") {
                Stop::RestThenExtra(n.parse().context("bad extra count in --stop")?)
            } else {
                bail!("--stop must be rest, steps:K or rest+N");
            }
        }
    };
    let scenario = match &args.scenario {
        Some(p) => Scenario::from_json(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => Scenario::default(),
    };
    let initial = match &args.initial_state {
        Some(p) => Some(parse_initial(
            &fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        )?),
        None => None,
    };
    Ok(SimConfig {
        mode: match args.cmax {
            Some(c_max) => Mode::Constrained { c_max },
            None => Mode::Unconstrained,
        },
        policy: match args.policy {
            PolicyArg::Original => Policy::Original,
            PolicyArg::Enhanced => Policy::Enhanced,
        },
        choice: match args.choice {
            ChoiceArg::Det => ChoiceModel::Deterministic,
            ChoiceArg::Sto => ChoiceModel::Stochastic { seed: args.seed },
        },
        schedule,
        schedule_seed: args.seed,
        stop,
        scenario,
        trace: args.trace.is_some(),
        initial,
        settle_initial: !args.no_settle,
        step_limit: args.step_limit,
        post_rest_probes: args.probes,
        validate: !args.skip_validate,
    })
}

fn with_seed(cfg: &SimConfig, seed: u64) -> SimConfig {
    let mut cfg = cfg.clone();
    cfg.schedule_seed = seed;
    if let ChoiceModel::Stochastic { .. } = cfg.choice {
        cfg.choice = ChoiceModel::Stochastic { seed };
    }
    cfg
}

fn execute(net: &Network, cfg: &SimConfig, args: &SimulateArgs) -> Result<MetricsLog> {
    if args.scenario.is_some() && !args.exact_timing {
        Ok(simulator::run_dynamic(net, cfg)?)
    } else {
        Ok(simulator::run(net, cfg)?)
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = match path.extension().and_then(|e| e.to_str()) {
        Some("csv") | Some("json") => path.with_extension(""),
        _ => path.to_path_buf(),
    };
    let mut s = stem.into_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_outputs(log: &MetricsLog, args: &SimulateArgs, extra: Option<Value>) -> Result<Value> {
    let mut summary = simulator::summary_json(log);
    if let Some(extra) = extra {
        summary["replications"] = extra;
    }
    if let Some(p) = &args.metrics {
        fs::write(p, simulator::metrics_csv(log)).with_context(|| format!("writing {}", p.display()))?;
        fs::write(sibling(p, ".json"), serde_json::to_string_pretty(&summary)? + "\n")?;
        fs::write(sibling(p, ".arcs.csv"), simulator::histogram_csv(log))?;
    }
    if let Some(p) = &args.trace {
        let mut text = String::new();
        for t in &log.trace {
            text.push_str(&serde_json::to_string(t)?);
            text.push('\n');
        }
        fs::write(p, text).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(summary)
}

fn rest_required(cfg: &SimConfig) -> bool {
    !matches!(cfg.stop, Stop::MaxSteps(_))
}

fn simulate(args: &SimulateArgs, as_json: bool) -> Result<u8> {
    let net = load_network(&args.net)?;
    let cfg = build_config(args)?;
    if args.replications == 0 {
        bail!("--replications must be at least 1");
    }
    let logs: Vec<MetricsLog> = (0..args.replications)
        .into_par_iter()
        .map(|r| execute(&net, &with_seed(&cfg, args.seed + r), args))
        .collect::<Result<_>>()?;
    let extra = (args.replications > 1).then(|| {
        Value::Array(
            logs.iter()
                .enumerate()
                .map(|(r, log)| json!({ "seed": args.seed + r as u64, "summary": simulator::summarize(log) }))
                .collect(),
        )
    });
    let summary = write_outputs(&logs[0], args, extra)?;
    if as_json {
        println!("{}", serde_json::to_string_pretty(&summary)?);
    }
    for (r, log) in logs.iter().enumerate() {
        let s = simulator::summarize(log);
        eprintln!(
            "run {r}: L_ss={} C_ss={} E_ss={} T_ss={} V_ss={} l_ss={}{}",
            show(s.l_ss_length),
            show(s.c_ss),
            show(s.e_ss),
            show(s.t_ss),
            show(s.v_ss),
            s.l_ss,
            if s.partial { " (rest not reached)" } else { "" }
        );
    }
    if rest_required(&cfg) && logs.iter().any(|l| !l.reached_rest) {
        return Ok(EXIT_NOT_CONVERGED);
    }
    Ok(0)
}

fn show<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_else(|| "-".into())
}

fn compare(args: &SimulateArgs, as_json: bool) -> Result<u8> {
    let net = load_network(&args.net)?;
    let cfg = build_config(args)?;
    let log = execute(&net, &cfg, args)?;
    let summary = write_outputs(&log, args, None)?;
    if !log.reached_rest {
        eprintln!("rest not reached within {} injections", log.injections);
        return Ok(EXIT_NOT_CONVERGED);
    }
    let mismatches = check_against_oracle(&log)?;
    if as_json {
        println!(
            "{}",
            serde_json::to_string_pretty(&json!({ "summary": summary["summary"], "mismatches": mismatches }))?
        );
    }
    if mismatches.is_empty() {
        eprintln!("resting paths match the oracle");
        Ok(0)
    } else {
        for m in &mismatches {
            eprintln!(
                "segment {} source {}: {} expected {} observed {}",
                m.segment,
                m.source,
                m.what,
                show(m.expected),
                show(m.observed)
            );
        }
        Ok(EXIT_MISMATCH)
    }
}

fn oracle(path: &Path, cmax: Option<usize>, all_paths: usize) -> Result<u8> {
    let net = load_network(path)?;
    let dist = shortest_to_sinks(&net)?;
    let distances: serde_json::Map<String, Value> = net
        .ids()
        .iter()
        .map(|&id| (id.to_string(), json!(dist.get(id))))
        .collect();
    let mut sources = Vec::new();
    for s in net.sources() {
        let mut entry = json!({
            "source": s,
            "length": dist.get(s),
            "path": dist.path(s),
        });
        if all_paths > 0 {
            entry["all_paths"] = json!(all_shortest_paths(&net, &dist, s, all_paths));
        }
        if let Some(c) = cmax {
            entry["constrained"] = json!(constrained_shortest(&net, s, c)?);
        }
        sources.push(entry);
    }
    let out = json!({ "c_max": cmax, "distances": distances, "sources": sources });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(0)
}

fn export_plot(metrics: &Path, what: PlotKind, out: Option<&Path>) -> Result<u8> {
    let csv_path = sibling(metrics, ".csv");
    let json_path = sibling(metrics, ".json");
    let text = match what {
        PlotKind::VSeries => {
            let src = fs::read_to_string(&csv_path).with_context(|| format!("reading {}", csv_path.display()))?;
            let mut text = String::from("k,V\n");
            for line in src.lines().skip(1) {
                let mut cols = line.split(',');
                let (Some(k), Some(v)) = (cols.next(), cols.next()) else {
                    bail!("malformed metrics row {line:?}");
                };
                text.push_str(&format!("{k},{v}\n"));
            }
            text
        }
        PlotKind::ArcHistogram => {
            let p = sibling(metrics, ".arcs.csv");
            fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?
        }
        PlotKind::StateMap => {
            let summary: Value = serde_json::from_str(
                &fs::read_to_string(&json_path).with_context(|| format!("reading {}", json_path.display()))?,
            )?;
            let width = summary["network_metadata"]["width"]
                .as_u64()
                .context("state map needs grid metadata (width) in the run summary")? as usize;
            let mut text = String::from("x,y,value\n");
            for entry in summary["final_state"].as_array().context("summary has no final state")? {
                let id = entry[0].as_u64().context("bad final state entry")? as u32;
                let value = entry[1].as_i64().context("bad final state entry")?;
                let (x, y) = generators::node_pixel(width, NodeId(id));
                text.push_str(&format!("{x},{y},{value}\n"));
            }
            text
        }
    };
    emit(out, &text)?;
    Ok(0)
}
