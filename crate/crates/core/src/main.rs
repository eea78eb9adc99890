use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use pursuit_core::datastore::{
    aggregate_detection_rate, build_filter_dataset, collect_dataset, emit_report, read_dir_records, read_records,
    write_records, ReportRow, Split, SplitConfig, TrajectoryRecord,
};
use pursuit_core::filter::{
    bench_runtime, continue_training, motion_baseline_ade, train_filter, FilterArch, FilterError, FilterKind,
    FilterMetrics, FilterModel, FilterTrainConfig, TrainingPair,
};
use pursuit_core::maddpg::{curve_csv, evaluate_policies, train_marl, AugmentMode, MarlPolicy, PolicySet, TrainConfig};
use pursuit_core::policies::{FilterPolicy, FilterSteering, HeuristicConfig, HeuristicPolicy, PursuitPolicy, RandomPolicy};
use pursuit_core::world::{EnvConfig, Scenario, WorldError};
use pursuit_core::{Error, Result};

#[derive(Parser)]
#[command(name = "pursuit-track", version, about = "Search-and-tracking pipeline: world, filters, MADDPG")]
struct Cli {
    /// TOML file merged over the preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Preset::Desk)]
    preset: Preset,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum Preset {
    Desk,
    PaperShape,
}

#[derive(Subcommand, Serialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
enum Command {
    /// Generate terrain and hideouts and write them as CSV.
    GenWorld(GenWorldArgs),
    /// Roll out a scripted policy and store the trajectories.
    Collect(CollectArgs),
    /// Train a PMC or FC filter on collected trajectories.
    TrainFilter(TrainFilterArgs),
    /// Score filter checkpoints on an evaluation set.
    EvalFilter(EvalFilterArgs),
    /// Train MADDPG policies.
    TrainMarl(TrainMarlArgs),
    /// Evaluate learned or scripted policies.
    EvalMarl(EvalMarlArgs),
    /// Time forward passes of filter checkpoints.
    Bench(BenchArgs),
}

#[derive(Args, Serialize)]
struct GenWorldArgs {
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    forest_fraction: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum ScriptedPolicy {
    Random,
    Heuristic,
}

impl ScriptedPolicy {
    fn dir(self) -> &'static str {
        match self {
            ScriptedPolicy::Random => "random",
            ScriptedPolicy::Heuristic => "heuristic",
        }
    }
}

#[derive(Args, Serialize)]
struct CollectArgs {
    #[arg(long, value_enum)]
    policy: ScriptedPolicy,
    /// Defaults to the preset's collection size.
    #[arg(long)]
    episodes: Option<usize>,
}

#[derive(Args, Serialize)]
struct TrainFilterArgs {
    #[arg(long, value_enum)]
    model: ModelArg,
    /// Trajectory files or directories.
    #[arg(long, required = true)]
    dataset: Vec<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    /// Continue from this checkpoint instead of a fresh model.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Checkpoint name; defaults to `<model>_<seed>`.
    #[arg(long)]
    name: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum ModelArg {
    Pmc,
    Fc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum SplitArg {
    Eval,
    All,
}

#[derive(Args, Serialize)]
struct EvalFilterArgs {
    #[arg(long, required = true)]
    checkpoint: Vec<PathBuf>,
    #[arg(long, required = true)]
    dataset: Vec<PathBuf>,
    /// Pairs to score: the eval split of the dataset, or every pair.
    #[arg(long, value_enum, default_value_t = SplitArg::Eval)]
    split: SplitArg,
    /// Leave the RT column empty so the report is reproducible byte for byte.
    #[arg(long)]
    skip_runtime: bool,
    /// Omit the constant-velocity baseline row.
    #[arg(long)]
    no_motion: bool,
    #[arg(long, default_value = "filter_eval")]
    report: String,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum ModeArg {
    Base,
    Detections,
    Filter,
}

impl From<ModeArg> for AugmentMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Base => AugmentMode::Base,
            ModeArg::Detections => AugmentMode::Detections,
            ModeArg::Filter => AugmentMode::Filter,
        }
    }
}

#[derive(Args, Serialize)]
struct TrainMarlArgs {
    #[arg(long, value_enum)]
    mode: ModeArg,
    /// Frozen filter checkpoint, required in filter mode.
    #[arg(long)]
    filter: Option<PathBuf>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    update_interval: Option<usize>,
    /// Checkpoint name; defaults to `<mode>_<seed>`.
    #[arg(long)]
    name: Option<String>,
}

#[derive(Args, Serialize)]
struct EvalMarlArgs {
    /// `random`, `heuristic`, `highest_prob`, `search`, or a policy checkpoint.
    #[arg(long, required = true)]
    policy: Vec<String>,
    /// Filter checkpoint for filter-driven policies.
    #[arg(long)]
    filter: Option<PathBuf>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long, default_value = "marl_eval")]
    report: String,
}

#[derive(Args, Serialize)]
struct BenchArgs {
    #[arg(long, required = true)]
    checkpoint: Vec<PathBuf>,
    #[arg(long, default_value_t = 128)]
    batch: usize,
    #[arg(long, default_value_t = 20)]
    passes: usize,
}

/// Everything a subcommand reads, fully resolved.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct RunConfig {
    preset: Preset,
    /// Drives every component seed below.
    seed: u64,
    out: PathBuf,
    /// Episodes per `collect` run.
    collect_episodes: usize,
    /// Episodes per policy in `eval-marl`.
    eval_episodes: usize,
    env: EnvConfig,
    split: SplitConfig,
    heuristic: HeuristicConfig,
    filter: FilterTrainConfig,
    marl: TrainConfig,
}

impl RunConfig {
    fn preset(p: Preset) -> Self {
        let (env, collect_episodes, marl_episodes) = match p {
            Preset::Desk => (
                EnvConfig {
                    grid: 64,
                    t_max: 300,
                    ..EnvConfig::default()
                },
                60,
                300,
            ),
            Preset::PaperShape => (
                EnvConfig {
                    grid: 256,
                    t_max: 500,
                    ..EnvConfig::default()
                },
                300,
                5000,
            ),
        };
        Self {
            preset: p,
            seed: 0,
            out: PathBuf::from("out"),
            collect_episodes,
            eval_episodes: 50,
            env,
            split: SplitConfig::default(),
            heuristic: HeuristicConfig::default(),
            filter: FilterTrainConfig::default(),
            marl: TrainConfig {
                episodes: marl_episodes,
                ..TrainConfig::default()
            },
        }
    }

    /// Preset, then the config file, then flags.
    fn resolve(cli: &Cli) -> Result<Self> {
        let mut value = toml::Value::try_from(Self::preset(cli.preset)).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(path) = &cli.config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("config file {}: {e}", path.display())))?;
            let mut file: toml::Value =
                toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            if let Some(t) = file.as_table_mut() {
                t.remove("command");
                t.remove("preset");
            }
            merge(&mut value, file);
        }
        let mut cfg: RunConfig = value.try_into().map_err(|e| Error::Config(e.to_string()))?;
        cfg.preset = cli.preset;
        if let Some(s) = cli.seed {
            cfg.seed = s;
        }
        if let Some(o) = &cli.out {
            cfg.out = o.clone();
        }
        cfg.split.seed = cfg.seed;
        cfg.filter.seed = cfg.seed;
        cfg.marl.seed = cfg.seed;
        cfg.env.validate()?;
        Ok(cfg)
    }

    /// Writes the resolved config and the invoking command next to `output`.
    fn snapshot(&self, command: &Command, output: &Path) -> Result<()> {
        let mut value = toml::Value::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        let cmd = toml::Value::try_from(command).map_err(|e| Error::Config(e.to_string()))?;
        value.as_table_mut().expect("table").insert("command".into(), cmd);
        let text = toml::to_string_pretty(&value).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(snapshot_path(output), text)?;
        Ok(())
    }

    fn scenario(&self) -> Result<Arc<Scenario>> {
        Ok(Scenario::build(self.env.clone())?)
    }
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

fn snapshot_path(output: &Path) -> PathBuf {
    let stem = output.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    output.with_file_name(format!("{stem}.config.toml"))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, contents)?;
    Ok(())
}

fn load_records(paths: &[PathBuf]) -> Result<Vec<TrajectoryRecord>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            out.extend(read_dir_records(p)?);
        } else if p.exists() {
            out.extend(read_records(p)?);
        } else {
            return Err(Error::Config(format!("dataset {} does not exist", p.display())));
        }
    }
    Ok(out)
}

fn load_filter(path: &Path) -> Result<FilterModel> {
    FilterModel::load(path).map_err(|e| match e {
        FilterError::Io(io) => Error::Config(format!("filter checkpoint {}: {io}", path.display())),
        e => e.into(),
    })
}

fn gen_world(cfg: &mut RunConfig, cmd: &Command, args: &GenWorldArgs) -> Result<()> {
    if let Some(g) = args.grid {
        cfg.env.grid = g;
    }
    if let Some(f) = args.forest_fraction {
        cfg.env.forest_fraction = f;
    }
    cfg.env.validate()?;
    let sc = cfg.scenario()?;
    let dir = cfg.out.join("world");
    let terrain = dir.join("terrain.csv");
    write_file(&terrain, &sc.terrain.to_csv())?;
    let mut h = String::from("x,y,known\n");
    for hd in &sc.hideouts {
        h.push_str(&format!("{},{},{}\n", hd.location.x, hd.location.y, hd.known_to_pursuers));
    }
    write_file(&dir.join("hideouts.csv"), &h)?;
    cfg.snapshot(cmd, &terrain)?;
    println!(
        "terrain {}x{} (dense fraction {:.3}), {} hideouts -> {}",
        sc.terrain.side(),
        sc.terrain.side(),
        sc.terrain.dense_fraction(),
        sc.hideouts.len(),
        dir.display()
    );
    Ok(())
}

fn collect(cfg: &RunConfig, cmd: &Command, args: &CollectArgs) -> Result<()> {
    let sc = cfg.scenario()?;
    let n = args.episodes.unwrap_or(cfg.collect_episodes);
    let heuristic = cfg.heuristic.clone();
    let factory = move || -> Box<dyn PursuitPolicy> {
        match args.policy {
            ScriptedPolicy::Random => Box::new(RandomPolicy::new()),
            ScriptedPolicy::Heuristic => Box::new(HeuristicPolicy::new(heuristic.clone())),
        }
    };
    let records = collect_dataset(&sc, &factory, n, cfg.seed)?;
    let path = cfg.out.join("data").join(args.policy.dir()).join(format!("{}.jsonl", cfg.seed));
    write_records(&path, &records)?;
    cfg.snapshot(cmd, &path)?;
    println!(
        "{} episodes, aggregate detection rate {:.4} -> {}",
        records.len(),
        aggregate_detection_rate(&records),
        path.display()
    );
    Ok(())
}

fn train_filter_cmd(cfg: &RunConfig, cmd: &Command, args: &TrainFilterArgs) -> Result<()> {
    let records = load_records(&args.dataset)?;
    let ds = build_filter_dataset(&records, cfg.env.t_max, &cfg.split)?;
    let (train, val) = (ds.split(Split::Train), ds.split(Split::Val));
    if val.is_empty() {
        log::warn!("validation split is empty; early stopping falls back to the training loss");
    }
    let mut tc = cfg.filter.clone();
    tc.max_epochs = args.epochs.unwrap_or(tc.max_epochs);
    tc.lr = args.lr.unwrap_or(tc.lr);
    tc.batch_size = args.batch_size.unwrap_or(tc.batch_size);
    tc.patience = args.patience.unwrap_or(tc.patience);
    let kind = match args.model {
        ModelArg::Pmc => FilterKind::Pmc,
        ModelArg::Fc => FilterKind::Fc,
    };
    let trained = match &args.resume {
        Some(p) => {
            let model = load_filter(p)?;
            if model.kind() != kind {
                return Err(Error::Config(format!("{} holds a {} filter", p.display(), model.kind().name())));
            }
            continue_training(model, &train, &val, &tc)?
        }
        None => {
            let arch = match kind {
                FilterKind::Pmc => FilterArch::pmc(cfg.env.t_max),
                FilterKind::Fc => FilterArch::fc(cfg.env.t_max),
            };
            train_filter(arch, &train, &val, &tc)?
        }
    };
    let name = args.name.clone().unwrap_or_else(|| format!("{}_{}", kind.name(), cfg.seed));
    let ckpt = cfg.out.join("filters").join(format!("{name}.ndg"));
    if let Some(dir) = ckpt.parent() {
        std::fs::create_dir_all(dir)?;
    }
    trained.model.save(&ckpt)?;
    write_file(&cfg.out.join("reports").join(format!("filter_curve_{name}.csv")), &trained.curve_csv())?;
    cfg.snapshot(cmd, &ckpt)?;
    println!(
        "{} pairs train / {} val, best epoch {} of {} -> {}",
        train.len(),
        val.len(),
        trained.best_epoch,
        trained.curve.len(),
        ckpt.display()
    );
    Ok(())
}

fn eval_filter(cfg: &RunConfig, cmd: &Command, args: &EvalFilterArgs) -> Result<()> {
    let records = load_records(&args.dataset)?;
    let split = match args.split {
        SplitArg::Eval => cfg.split.clone(),
        SplitArg::All => SplitConfig::all(Split::Eval),
    };
    let pairs: Vec<TrainingPair> = build_filter_dataset(&records, cfg.env.t_max, &split)?.split(Split::Eval);
    if pairs.is_empty() {
        return Err(Error::Config("evaluation set is empty".into()));
    }
    let inputs: Vec<_> = pairs.iter().map(|p| p.input).collect();
    let targets: Vec<_> = pairs.iter().map(|p| p.target).collect();
    let mut rows = Vec::new();
    for ckpt in &args.checkpoint {
        let model = load_filter(ckpt)?;
        let preds = model.predict(&inputs)?;
        let mut metrics = FilterMetrics::compute(&preds, &targets)?;
        if !args.skip_runtime {
            metrics.runtime = Some(bench_runtime(&model, 128, 20)?);
        }
        let name = ckpt.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        rows.push(ReportRow {
            filter: metrics,
            ..ReportRow::named(name)
        });
    }
    if !args.no_motion {
        let mut row = ReportRow::named("motion");
        row.filter.ade = Some(motion_baseline_ade(&inputs, &targets, cfg.env.t_max)?);
        rows.push(row);
    }
    let path = cfg.out.join("reports").join(format!("{}.csv", args.report));
    emit_report(&rows, &path)?;
    cfg.snapshot(cmd, &path)?;
    for r in &rows {
        println!(
            "{:<16} LL {:>9} ADE {:>9}",
            r.name,
            r.filter.ll.map_or("-".into(), |v| format!("{v:.4}")),
            r.filter.ade.map_or("-".into(), |v| format!("{v:.4}"))
        );
    }
    println!("{} pairs -> {}", pairs.len(), path.display());
    Ok(())
}

fn train_marl_cmd(cfg: &RunConfig, cmd: &Command, args: &TrainMarlArgs) -> Result<()> {
    let mode = AugmentMode::from(args.mode);
    let filter = match (&args.filter, mode) {
        (Some(p), AugmentMode::Filter) => Some(load_filter(p)?),
        (None, AugmentMode::Filter) => return Err(Error::Config("--mode filter needs --filter <checkpoint>".into())),
        _ => None,
    };
    let mut tc = cfg.marl.clone();
    tc.episodes = args.episodes.unwrap_or(tc.episodes);
    tc.batch_size = args.batch_size.unwrap_or(tc.batch_size);
    tc.update_interval = args.update_interval.unwrap_or(tc.update_interval);
    let sc = cfg.scenario()?;
    let run = train_marl(&sc, filter.as_ref(), mode, &tc)?;
    let tag = match (&filter, mode) {
        (Some(f), AugmentMode::Filter) => f.kind().name().to_string(),
        _ => mode.name().to_string(),
    };
    let name = args.name.clone().unwrap_or_else(|| format!("{tag}_{}", cfg.seed));
    let ckpt = cfg.out.join("policies").join(format!("{name}.ndg"));
    run.policies.save(&ckpt)?;
    write_file(&cfg.out.join("reports").join(format!("marl_curve_{name}.csv")), &curve_csv(&run.curve))?;
    cfg.snapshot(cmd, &ckpt)?;
    let last = &run.curve[run.curve.len().saturating_sub(10)..];
    let mean = |f: fn(&pursuit_core::maddpg::EpisodeLog) -> f64| last.iter().map(f).sum::<f64>() / last.len().max(1) as f64;
    println!(
        "{} episodes, last-10 reward {:.3}, detection {:.4}{} -> {}",
        run.curve.len(),
        mean(|e| e.total_reward),
        mean(|e| e.detection_rate),
        run.filter_checksum.map_or(String::new(), |c| format!(", filter {}", &c[..16])),
        ckpt.display()
    );
    Ok(())
}

fn eval_marl(cfg: &RunConfig, cmd: &Command, args: &EvalMarlArgs) -> Result<()> {
    let sc = cfg.scenario()?;
    let filter = args.filter.as_deref().map(load_filter).transpose()?.map(Arc::new);
    let n = args.episodes.unwrap_or(cfg.eval_episodes);
    let base_seed = cfg.seed ^ 0x00E7_A1_5EED;
    let mut rows = Vec::new();
    for spec in &args.policy {
        let need_filter = || {
            filter
                .clone()
                .ok_or_else(|| Error::Config(format!("policy {spec:?} needs --filter <checkpoint>")))
        };
        let heuristic = cfg.heuristic.clone();
        let (name, factory): (String, Box<dyn Fn() -> Box<dyn PursuitPolicy> + Sync>) = match spec.as_str() {
            "random" => ("random".into(), Box::new(|| Box::new(RandomPolicy::new()) as Box<dyn PursuitPolicy>)),
            "heuristic" => (
                "heuristic".into(),
                Box::new(move || Box::new(HeuristicPolicy::new(heuristic.clone())) as Box<dyn PursuitPolicy>),
            ),
            "highest_prob" | "search" => {
                let steering = if spec == "search" { FilterSteering::Search } else { FilterSteering::HighestProb };
                let p = FilterPolicy::new(need_filter()?, steering);
                (p.name(), Box::new(move || Box::new(p.clone()) as Box<dyn PursuitPolicy>))
            }
            path => {
                let path = Path::new(path);
                if !path.exists() {
                    return Err(Error::Config(format!(
                        "unknown policy {spec:?}: not a scripted policy name or an existing checkpoint"
                    )));
                }
                let set = Arc::new(PolicySet::load(path)?);
                let f = if set.meta.mode == AugmentMode::Filter { Some(need_filter()?) } else { None };
                let p = MarlPolicy::new(set, f)?;
                let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| p.name());
                (name, Box::new(move || Box::new(p.clone()) as Box<dyn PursuitPolicy>))
            }
        };
        let summary = evaluate_policies(&sc, &*factory, n, base_seed)?;
        println!(
            "{:<20} detection {:.4} ± {:.4}  closest {:.4}  reward {:.4}",
            name, summary.detection_rate.mean, summary.detection_rate.std, summary.closest_distance.mean, summary.reward.mean
        );
        rows.push(summary.report_row(name));
    }
    let path = cfg.out.join("reports").join(format!("{}.csv", args.report));
    emit_report(&rows, &path)?;
    cfg.snapshot(cmd, &path)?;
    println!("{n} episodes per policy -> {}", path.display());
    Ok(())
}

fn bench(cfg: &RunConfig, cmd: &Command, args: &BenchArgs) -> Result<()> {
    let mut rows = Vec::new();
    for ckpt in &args.checkpoint {
        let model = load_filter(ckpt)?;
        let mut row = ReportRow::named(ckpt.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
        let rt = bench_runtime(&model, args.batch, args.passes)?;
        row.filter.runtime = Some(rt);
        println!("{:<16} {:.3e} s per batch of {}", row.name, rt, args.batch);
        rows.push(row);
    }
    let path = cfg.out.join("reports").join("bench.csv");
    emit_report(&rows, &path)?;
    cfg.snapshot(cmd, &path)?;
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let mut cfg = RunConfig::resolve(cli)?;
    std::fs::create_dir_all(&cfg.out)?;
    let cmd = &cli.command;
    match cmd {
        Command::GenWorld(a) => gen_world(&mut cfg, cmd, a),
        Command::Collect(a) => collect(&cfg, cmd, a),
        Command::TrainFilter(a) => train_filter_cmd(&cfg, cmd, a),
        Command::EvalFilter(a) => eval_filter(&cfg, cmd, a),
        Command::TrainMarl(a) => train_marl_cmd(&cfg, cmd, a),
        Command::EvalMarl(a) => eval_marl(&cfg, cmd, a),
        Command::Bench(a) => bench(&cfg, cmd, a),
    }
}

fn is_usage_error(e: &Error) -> bool {
    matches!(
        e,
        Error::Config(_) | Error::World(WorldError::Config(_)) | Error::Filter(FilterError::Config(_))
    )
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if is_usage_error(&e) { 2 } else { 1 })
        }
    }
}
