use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use hypsearch::features::FeatureVariant;
use hypsearch::harness::{
    load_agents, read_transcript, record_demo_corpus, replay_transcript, run_episode, run_manifest,
    run_protocol, sample_pose, write_transcript, AgentSpec, ConfigFile, ProtocolConfig,
    TranscriptManifest, TRANSCRIPT_FORMAT_VERSION,
};
use hypsearch::learning::{
    build_binary_dataset, build_mc_dataset, read_demos, train_linear, BinaryMode, Hyperparameters,
};
use hypsearch::{seed, AgentKind, Orientation, Pose, ShapeTemplate};
use hypsearch_service::{AppState, ServiceConfig};

/// Hypothesis-set search on hidden-shape Minesweeper.
#[derive(Parser)]
#[command(name = "hypsearch", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Play one episode and print its outcome.
    Simulate(SimulateArgs),
    /// Replay a transcript and check that it reproduces exactly.
    Replay {
        transcript: PathBuf,
    },
    /// Record successful oracle episodes as demonstrations.
    DemoGen(DemoGenArgs),
    /// Train a classifier from demonstrations.
    Train(TrainArgs),
    /// Run the paired evaluation protocol and print the report table.
    Eval(EvalArgs),
    /// Start the HTTP session service.
    Serve(ServeArgs),
}

/// Board settings. Flags override the configuration file.
#[derive(Args, Clone)]
struct BoardArgs {
    /// Configuration file (TOML).
    #[arg(long, env = "HYPSEARCH_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    cols: Option<usize>,
    /// Built-in template name or a template file.
    #[arg(long)]
    template: Option<String>,
    /// Comma-separated degrees, e.g. `0,90`.
    #[arg(long, value_delimiter = ',')]
    orientations: Option<Vec<u16>>,
    #[arg(long, value_enum)]
    feature_variant: Option<VariantArg>,
    #[arg(long)]
    step_cap: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Accumulated,
    MinDistance,
}

impl BoardArgs {
    fn protocol(&self) -> Result<ProtocolConfig> {
        let mut file = match &self.config {
            Some(p) => ConfigFile::load(p).with_context(|| format!("reading {}", p.display()))?,
            None => ConfigFile::default(),
        };
        let base = self.config.as_deref().and_then(Path::parent).map(Path::to_path_buf);
        if let Some(p) = file.template_file.take() {
            file.template_file = Some(match &base {
                Some(b) if p.is_relative() => b.join(p),
                _ => p,
            });
        }
        if let Some(v) = self.rows {
            file.rows = v;
        }
        if let Some(v) = self.cols {
            file.cols = v;
        }
        if let Some(t) = &self.template {
            if ShapeTemplate::builtin(t).is_some() {
                file.template = t.clone();
                file.template_file = None;
            } else {
                file.template_file = Some(PathBuf::from(t));
            }
        }
        if let Some(o) = &self.orientations {
            file.orientations = o.clone();
        }
        if let Some(v) = self.feature_variant {
            file.feature_variant = match v {
                VariantArg::Accumulated => FeatureVariant::Accumulated,
                VariantArg::MinDistance => FeatureVariant::MinDistance,
            };
        }
        if self.step_cap.is_some() {
            file.step_cap = self.step_cap;
        }
        let mut cfg = file.to_protocol()?;
        for a in &mut cfg.agents {
            if let (Some(m), Some(b)) = (&a.model, &base) {
                if m.is_relative() {
                    a.model = Some(b.join(m));
                }
            }
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    board: BoardArgs,
    #[arg(long, default_value = "oracle")]
    agent: AgentKind,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Hidden pose as `r,c` or `r,c,degrees`; sampled from the seed if absent.
    #[arg(long)]
    pose: Option<String>,
    /// Write the full transcript here.
    #[arg(long)]
    transcript: Option<PathBuf>,
}

#[derive(Args)]
struct DemoGenArgs {
    #[command(flatten)]
    board: BoardArgs,
    #[arg(long)]
    episodes: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum TrainKind {
    Mc,
    Be,
    B8,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    demos: PathBuf,
    #[arg(long, value_enum)]
    agent_kind: TrainKind,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    lambda: f64,
    #[arg(long, default_value_t = 0.1)]
    eta0: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Frontier negatives per positive (be only).
    #[arg(long, default_value_t = 8)]
    negatives: usize,
    /// Write the training report (objective per epoch, accuracy) as JSON.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    board: BoardArgs,
    /// Comma-separated agents, `kind` or `kind=model.json`; replaces the config list.
    #[arg(long, value_delimiter = ',')]
    agents: Option<Vec<String>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    poses: Option<usize>,
    #[arg(long)]
    inits: Option<usize>,
    /// Directory for table.txt, report.csv and manifest.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value = "models")]
    models_dir: PathBuf,
    #[arg(long, default_value = "data")]
    data_dir: PathBuf,
}

fn parse_pose(s: &str) -> Result<Pose> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let num = |i: usize| -> Result<usize> { parts[i].parse().with_context(|| format!("bad pose {s:?}")) };
    match parts.len() {
        2 => Ok(Pose::at(num(0)?, num(1)?)),
        3 => {
            let deg: u16 = parts[2].parse().with_context(|| format!("bad pose {s:?}"))?;
            let o = Orientation::from_degrees(deg).with_context(|| format!("bad orientation {deg}"))?;
            Ok(Pose::new(num(0)?, num(1)?, o))
        }
        _ => bail!("pose must be r,c or r,c,degrees"),
    }
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let cfg = args.board.protocol()?.board;
    let pose = match &args.pose {
        Some(p) => parse_pose(p)?,
        None => sample_pose(&cfg.universe()?, seed::derive(args.seed, seed::POSE_STREAM, 0, 0)),
    };
    let init = seed::derive(args.seed, seed::INIT_STREAM, 0, 0);
    let spec = AgentSpec::new(args.agent, args.model.clone());
    let agent = spec.load::<f64>(&cfg)?;
    let result = run_episode(&agent, &cfg, pose, init)?;
    println!(
        "agent={} status={} steps={} reward={} initial_cell={} hypotheses={}->{}",
        args.agent,
        serde_json::to_value(result.status)?.as_str().unwrap_or_default(),
        result.steps,
        result.reward,
        result.initial_cell,
        result.initial_hyp_count,
        result.final_hyp_count()
    );
    if let Some(f) = &result.failure {
        println!("failure: {f}");
    }
    if let Some(path) = &args.transcript {
        let manifest = TranscriptManifest {
            format_version: TRANSCRIPT_FORMAT_VERSION,
            config: cfg,
            agent: spec,
            ground_truth: pose,
            seed: init,
        };
        let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
        write_transcript(&mut w, &manifest, &result)?;
        w.flush()?;
    }
    Ok(())
}

fn replay(path: &Path) -> Result<()> {
    let (manifest, recorded) = read_transcript::<f64, _>(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))?;
    if replay_transcript(path)? {
        println!(
            "replay ok: agent={} steps={} status={:?}",
            manifest.agent.kind, recorded.steps, recorded.status
        );
        Ok(())
    } else {
        bail!("replay of {} diverged from the recorded transcript", path.display())
    }
}

fn demo_gen(args: DemoGenArgs) -> Result<()> {
    let cfg = args.board.protocol()?.board;
    let mut w = BufWriter::new(File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?);
    let stats = record_demo_corpus(args.episodes, &cfg, args.seed, &mut w)?;
    w.flush()?;
    println!(
        "episodes={} written={} discarded_stalled={} discarded_other={} steps={}",
        stats.episodes, stats.written, stats.discarded_stalled, stats.discarded_other, stats.steps_written
    );
    Ok(())
}

fn train(args: TrainArgs) -> Result<()> {
    let file = File::open(&args.demos).with_context(|| format!("opening {}", args.demos.display()))?;
    let demos = read_demos::<f64, _>(BufReader::new(file))?;
    let (dataset, report) = match args.agent_kind {
        TrainKind::Mc => build_mc_dataset(&demos)?,
        TrainKind::B8 => build_binary_dataset(&demos, BinaryMode::B8, 0, args.seed)?,
        TrainKind::Be => build_binary_dataset(&demos, BinaryMode::Be, args.negatives, args.seed)?,
    };
    let hp = Hyperparameters {
        epochs: args.epochs,
        eta0: args.eta0,
        lambda: args.lambda,
        seed: args.seed,
    };
    let (model, tr) = train_linear(&dataset, &hp)?;
    model.save(&args.out)?;
    println!(
        "rows={} skipped={} accuracy={:.4} objective={:.6} rejected_epochs={}",
        report.rows,
        report.excluded_relocations,
        tr.accuracy,
        tr.objective.last().copied().unwrap_or(f64::NAN),
        tr.rejected_epochs
    );
    if let Some(p) = &args.report {
        fs::write(p, serde_json::to_string_pretty(&tr)?)?;
    }
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let mut cfg = args.board.protocol()?;
    if let Some(list) = &args.agents {
        cfg.agents = list.iter().map(|s| AgentSpec::parse(s)).collect::<Result<_, _>>()?;
    }
    if let Some(s) = args.seed {
        cfg.master_seed = s;
    }
    if let Some(n) = args.poses {
        cfg.n_poses = n;
    }
    if let Some(n) = args.inits {
        cfg.n_inits_per_pose = n;
    }
    if cfg.agents.is_empty() {
        bail!("no agents: pass --agents or list them in the config file");
    }
    let agents = load_agents::<f64>(&cfg)?;
    let report = run_protocol(&cfg, &agents)?;
    let table = report.render_table();
    print!("{table}");
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("table.txt"), &table)?;
        fs::write(dir.join("report.csv"), report.render_csv())?;
        fs::write(
            dir.join("manifest.json"),
            serde_json::to_string_pretty(&run_manifest(&cfg, &report)?)?,
        )?;
    }
    Ok(())
}

fn serve(args: ServeArgs) -> Result<()> {
    let addr: SocketAddr = format!("{}:{}", args.host, args.port).parse()?;
    let state = AppState::new(ServiceConfig {
        models_dir: args.models_dir,
        data_dir: args.data_dir,
    });
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(hypsearch_service::serve(addr, state))?;
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Simulate(a) => simulate(a),
        Command::Replay { transcript } => replay(&transcript),
        Command::DemoGen(a) => demo_gen(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Serve(a) => serve(a),
    }
}
