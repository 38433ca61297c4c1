use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use radiomap::config::Config;
use radiomap::eval::{
    evaluate_prediction, histogram, predict_area, render_radiomap, rmse_area, run_experiment, Area, BlockRmse, Method,
    Palette,
};
use radiomap::graph::{build_graph, graph_stats, write_edge_list, write_node_table};
use radiomap::propagation::RadiomapTensor;
use radiomap::scenario::{save_scenario, BlockIndex};
use radiomap::train::{load_run, multiband_splice, sample_mask, save_run, train, BlockSplit, GraphContext, Observations};

#[derive(Parser)]
#[command(name = "radiomap", version, about = "Multi-band radiomap reconstruction")]
struct Cli {
    /// Seed for splits, sampling and initialization (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the scenario and its synthetic ground truth.
    Generate,
    /// Build the graph of one block and export nodes and edges.
    Graph(GraphArgs),
    /// Train on the training blocks and save a run directory.
    Train,
    /// Predict the inference blocks from a run directory.
    Predict(PredictArgs),
    /// Run one classical baseline over the inference blocks.
    Baseline(BaselineArgs),
    /// Score a prediction tensor against the ground truth.
    Evaluate(EvaluateArgs),
    /// Run the configured experiment sweep.
    Sweep,
    /// Render one band of a tensor as a PPM image.
    Render(RenderArgs),
    /// Histogram of one band of a tensor.
    Histogram(HistogramArgs),
}

#[derive(Args)]
struct GraphArgs {
    /// Block as `row_col`.
    #[arg(long)]
    block: String,
    #[arg(long)]
    freq: f64,
    /// Encoding: gat (model-based), gat-adjacency, gat-environment, gat-transmitter.
    #[arg(long, default_value = "gat")]
    encoding: String,
    /// Observation sampling rate used to mark observed nodes.
    #[arg(long)]
    rate: Option<f64>,
}

#[derive(Args)]
struct PredictArgs {
    /// Run directory written by `train`.
    #[arg(long)]
    run: PathBuf,
    /// Target bands (default: the trained target).
    #[arg(long, value_delimiter = ',')]
    targets: Vec<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineKind {
    Idw,
    Halrtc,
    Kriging,
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(value_enum)]
    kind: BaselineKind,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Prediction tensor (`.bin`, or `.csv` laid out on the config grid).
    #[arg(long)]
    prediction: PathBuf,
    /// Target band to score.
    #[arg(long)]
    freq: f64,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    tensor: PathBuf,
    #[arg(long)]
    freq: f64,
    #[arg(long, allow_hyphen_values = true)]
    lo_dbm: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    hi_dbm: Option<f64>,
}

#[derive(Args)]
struct HistogramArgs {
    #[arg(long)]
    tensor: PathBuf,
    #[arg(long)]
    freq: f64,
    #[arg(long, default_value_t = 1.0)]
    bin_width_db: f64,
}

enum Failure {
    Usage(String),
    Data(radiomap::Error),
}

impl From<radiomap::Error> for Failure {
    fn from(e: radiomap::Error) -> Self {
        Failure::Data(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Data(e.into())
    }
}

type Res<T> = Result<T, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

struct Ctx {
    seed: Option<u64>,
    config: Option<PathBuf>,
    out: Option<PathBuf>,
}

impl Ctx {
    fn config(&self) -> Res<Config> {
        let path = self.config.as_ref().ok_or_else(|| usage("--config is required"))?;
        if !path.is_file() {
            return Err(usage(format!("config file {} not found", path.display())));
        }
        let mut cfg = Config::load(path)?;
        if let Some(s) = self.seed {
            cfg.training.seed = s;
            cfg.experiment.seeds = vec![s];
        }
        Ok(cfg)
    }

    fn out(&self) -> Res<&Path> {
        self.out.as_deref().ok_or_else(|| usage("--out is required"))
    }

    fn out_dir(&self) -> Res<&Path> {
        let d = self.out()?;
        std::fs::create_dir_all(d)?;
        Ok(d)
    }
}

fn main_area(cfg: &Config) -> Res<Area> {
    Ok(Area {
        name: "area".into(),
        scenario: cfg.scenario.clone(),
        truth: cfg.ground_truth()?,
    })
}

fn split_for(cfg: &Config, seed: u64) -> Res<BlockSplit> {
    Ok(BlockSplit::random(&cfg.scenario, cfg.experiment.split_fraction, seed)?)
}

fn parse_block(s: &str) -> Res<BlockIndex> {
    let (r, c) = s.split_once('_').ok_or_else(|| usage(format!("block `{s}` is not `row_col`")))?;
    let r = r.parse().map_err(|_| usage(format!("bad block row in `{s}`")))?;
    let c = c.parse().map_err(|_| usage(format!("bad block column in `{s}`")))?;
    Ok(BlockIndex::new(r, c))
}

fn read_tensor(path: &Path, cfg: Option<&Config>) -> Res<RadiomapTensor> {
    if path.extension().is_some_and(|e| e == "csv") {
        let cfg = cfg.ok_or_else(|| usage("reading a CSV tensor needs --config for the grid size"))?;
        Ok(RadiomapTensor::read_csv(path, cfg.scenario.rows(), cfg.scenario.cols())?)
    } else {
        Ok(RadiomapTensor::read_binary(path)?)
    }
}

fn write_split(dir: &Path, split: &BlockSplit) -> Res<()> {
    let json = serde_json::to_string_pretty(split).map_err(|e| usage(e.to_string()))?;
    std::fs::write(dir.join("split.json"), json + "\n")?;
    Ok(())
}

fn write_blocks(path: &Path, blocks: &[BlockRmse]) -> Res<()> {
    let mut text = String::from("block,rmse_db,node_count\n");
    for b in blocks {
        text.push_str(&format!("{},{},{}\n", b.block, b.rmse_db, b.node_count));
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn report(area: &Area, split: &BlockSplit, pred: &RadiomapTensor, dir: &Path) -> Res<()> {
    for &f in pred.frequencies_mhz() {
        let blocks = evaluate_prediction(area, &split.b2, pred, f)?;
        let rmse = rmse_area(&blocks)?;
        println!("{f} MHz: area RMSE {rmse:.4} dB over {} blocks", blocks.len());
        write_blocks(&dir.join(format!("rmse_{f}.csv")), &blocks)?;
    }
    Ok(())
}

fn generate(ctx: &Ctx) -> Res<()> {
    let cfg = ctx.config()?;
    let dir = ctx.out_dir()?;
    save_scenario(&cfg.scenario, dir.join("scenario.toml"))?;
    let truth = cfg.ground_truth()?;
    truth.write_csv(dir.join("truth.csv"))?;
    truth.write_binary(dir.join("truth.bin"))?;
    println!(
        "{}x{} grids, {} bands, {} transmitters -> {}",
        cfg.scenario.rows(),
        cfg.scenario.cols(),
        truth.k(),
        cfg.scenario.transmitters.len(),
        dir.display()
    );
    Ok(())
}

fn graph(ctx: &Ctx, a: &GraphArgs) -> Res<()> {
    let cfg = ctx.config()?;
    let dir = ctx.out_dir()?;
    let b = parse_block(&a.block)?;
    let Method::Gat(enc) = a.encoding.parse::<Method>()? else {
        return Err(usage(format!("`{}` is not a graph encoding", a.encoding)));
    };
    let strategy = cfg.experiment.strategy(enc, &cfg.scenario);
    let gctx = GraphContext::new(&cfg.scenario, strategy.clone())?;
    let truth = cfg.ground_truth()?;
    let rate = a.rate.unwrap_or(cfg.training.sampling_rate);
    let mask = sample_mask(&cfg.scenario, &[b], rate, cfg.training.seed)?;
    let g = build_graph(&cfg.scenario, &truth, b, a.freq, &mask, &strategy, gctx.depth_map(a.freq)?)?;
    write_edge_list(&g, dir.join("edges.txt"))?;
    write_node_table(&g, dir.join("nodes.csv"))?;
    let s = graph_stats(&g);
    println!(
        "{} nodes, {} edges, {} isolated, mean degree {:.3}",
        s.node_count, s.edge_count, s.isolated_count, s.mean_degree
    );
    Ok(())
}

fn train_cmd(ctx: &Ctx) -> Res<()> {
    let cfg = ctx.config()?;
    let dir = ctx.out_dir()?;
    let truth = cfg.ground_truth()?;
    let split = split_for(&cfg, cfg.training.seed)?;
    let trained = train(&cfg.scenario, &truth, &split, &cfg.training)?;
    save_run(dir, &cfg.training, &trained)?;
    write_split(dir, &split)?;
    println!(
        "trained {} epochs on {} blocks, final loss {:.6}",
        trained.loss_trace.len(),
        split.b1.len(),
        trained.loss_trace.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn predict(ctx: &Ctx, a: &PredictArgs) -> Res<()> {
    let cfg = ctx.config()?;
    let dir = ctx.out_dir()?;
    let (tcfg, trained) = load_run(&a.run)?;
    let split_text = std::fs::read_to_string(a.run.join("split.json"))?;
    let split: BlockSplit = serde_json::from_str(&split_text).map_err(|e| usage(format!("split.json: {e}")))?;
    split.validate(&cfg.scenario)?;
    let area = main_area(&cfg)?;
    let mask = sample_mask(&cfg.scenario, &split.b2, tcfg.sampling_rate, tcfg.seed)?;
    let obs = Observations::sample(&area.truth, tcfg.f_obv_mhz, &mask)?;
    let targets = if a.targets.is_empty() { tcfg.targets(&cfg.scenario) } else { a.targets.clone() };
    let pred = multiband_splice(&trained, &cfg.scenario, &obs, &split.b2, &targets, false)?;
    pred.write_csv(dir.join("prediction.csv"))?;
    pred.write_binary(dir.join("prediction.bin"))?;
    report(&area, &split, &pred, dir)
}

fn baseline(ctx: &Ctx, a: &BaselineArgs) -> Res<()> {
    let cfg = ctx.config()?;
    let dir = ctx.out_dir()?;
    let area = main_area(&cfg)?;
    let method = match a.kind {
        BaselineKind::Idw => Method::Idw,
        BaselineKind::Halrtc => Method::Halrtc,
        BaselineKind::Kriging => Method::Kriging,
    };
    let seed = cfg.experiment.seeds[0];
    let rate = cfg.experiment.sampling_rates[0];
    let (split, pred) = predict_area(&cfg.experiment, &area, method, seed, rate)?;
    pred.write_csv(dir.join("prediction.csv"))?;
    pred.write_binary(dir.join("prediction.bin"))?;
    write_split(dir, &split)?;
    report(&area, &split, &pred, dir)
}

fn evaluate(ctx: &Ctx, a: &EvaluateArgs) -> Res<()> {
    let cfg = ctx.config()?;
    let area = main_area(&cfg)?;
    let pred = read_tensor(&a.prediction, Some(&cfg))?;
    let seed = cfg.experiment.seeds[0];
    let split = split_for(&cfg, seed)?;
    let blocks = evaluate_prediction(&area, &split.b2, &pred, a.freq)?;
    println!("{} MHz: area RMSE {:.4} dB over {} blocks", a.freq, rmse_area(&blocks)?, blocks.len());
    if ctx.out.is_none() {
        return Ok(());
    }
    let dir = ctx.out_dir()?;
    write_blocks(&dir.join(format!("rmse_{}.csv", a.freq)), &blocks)
}

fn sweep(ctx: &Ctx) -> Res<()> {
    let cfg = ctx.config()?;
    let dir = ctx.out_dir()?;
    let areas = cfg.build_areas()?;
    let report = run_experiment(&cfg.experiment, &areas)?;
    report.write(dir)?;
    let plan = toml::to_string(&cfg.experiment).map_err(|e| usage(e.to_string()))?;
    std::fs::write(dir.join("plan.toml"), plan)?;
    let failed = report.failures().count();
    println!("{} cells, {failed} failed -> {}", report.cells.len(), dir.display());
    Ok(())
}

fn render(ctx: &Ctx, a: &RenderArgs) -> Res<()> {
    let cfg = ctx.config.as_ref().map(|_| ctx.config()).transpose()?;
    let t = read_tensor(&a.tensor, cfg.as_ref())?;
    let k = t.frequency_index(a.freq)?;
    let fitted = Palette::fit(&t, k);
    let palette = Palette {
        lo_dbm: a.lo_dbm.unwrap_or(fitted.lo_dbm),
        hi_dbm: a.hi_dbm.unwrap_or(fitted.hi_dbm),
        ..fitted
    };
    let out = ctx.out()?;
    let path = if out.extension().is_some_and(|e| e == "ppm") {
        if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        out.to_path_buf()
    } else {
        std::fs::create_dir_all(out)?;
        out.join(format!("radiomap_{}.ppm", a.freq))
    };
    render_radiomap(&t, a.freq, &palette, &path)?;
    println!("{}", path.display());
    Ok(())
}

fn histogram_cmd(ctx: &Ctx, a: &HistogramArgs) -> Res<()> {
    let cfg = ctx.config.as_ref().map(|_| ctx.config()).transpose()?;
    let t = read_tensor(&a.tensor, cfg.as_ref())?;
    let k = t.frequency_index(a.freq)?;
    let values: Vec<f64> = (0..t.grid_count()).filter(|&i| t.is_valid(i)).map(|i| t.get(i, k)).collect();
    let mut text = String::from("lo_dbm,count\n");
    for b in histogram(&values, a.bin_width_db)? {
        text.push_str(&format!("{},{}\n", b.lo, b.count));
    }
    match &ctx.out {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(p, text)?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Res<()> {
    let ctx = Ctx {
        seed: cli.seed,
        config: cli.config,
        out: cli.out,
    };
    match &cli.command {
        Command::Generate => generate(&ctx),
        Command::Graph(a) => graph(&ctx, a),
        Command::Train => train_cmd(&ctx),
        Command::Predict(a) => predict(&ctx, a),
        Command::Baseline(a) => baseline(&ctx, a),
        Command::Evaluate(a) => evaluate(&ctx, a),
        Command::Sweep => sweep(&ctx),
        Command::Render(a) => render(&ctx, a),
        Command::Histogram(a) => histogram_cmd(&ctx, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
