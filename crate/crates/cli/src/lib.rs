//! `phs` command-line front end.

mod config;
mod run_dir;

use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use phs_core::bench::{
    evaluate, records_csv, render_exploration_map, search_admissible, search_clamped, summarize, summary_csv,
    HeuristicSpec, SummaryRow, DEFAULT_EPSILONS,
};
use phs_core::encode::{read_dataset, split_by_scenario, write_dataset, Dataset};
use phs_core::explore::{build_dataset, phs_explore, Mode, DEFAULT_K_EXPL};
use phs_core::gridworld::{generate_scenarios, scenario_seed, scenarios_from_json, scenarios_to_json, GridScenario};
use phs_core::heuristic::{ClampedHeuristic, LearnedHeuristic};
use phs_core::nn::{read_weights, train, write_weights, Architecture, Network, TrainConfig, TrainLog};
use phs_core::search::reconstruct_path;
use phs_core::ScenarioParams;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use config::{ConfigFile, Resolver};
pub use run_dir::{RunDir, DEFAULT_OUT_DIR, OUT_DIR_ENV};

const EVAL_STREAM: u64 = 1 << 40;
const INIT_STREAM: u64 = (1 << 40) + 1;

#[derive(Parser, Debug)]
#[command(name = "phs", version, about = "Value-function heuristics for grid path planning")]
pub struct Cli {
    /// Flat `key = value` file; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Master seed for every random choice of the stage.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Root for run directories.
    #[arg(long, global = true, env = OUT_DIR_ENV, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate random solvable scenarios as JSON.
    GenScenarios(GenScenarios),
    /// Build a PHS or vanilla dataset with a train/test split.
    GenDataset(GenDataset),
    /// Train a value network on a dataset.
    Train(TrainArgs),
    /// Run the epsilon sweep on fresh scenarios.
    Evaluate(EvaluateArgs),
    /// Draw an exploration map as a PPM image.
    Render(RenderArgs),
    /// Scenarios, both datasets, both networks, evaluation and maps.
    Pipeline(PipelineArgs),
}

#[derive(Args, Debug, Default)]
pub struct GridArgs {
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    /// Per-cell obstacle probability.
    #[arg(long)]
    pub density: Option<f64>,
    /// Rejection-sampling budget per scenario.
    #[arg(long)]
    pub max_attempts: Option<usize>,
}

#[derive(Args, Debug)]
pub struct GenScenarios {
    #[arg(long)]
    pub count: Option<usize>,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Args, Debug)]
pub struct GenDataset {
    /// `phs` or `vanilla`.
    #[arg(long)]
    pub mode: Option<Mode>,
    /// Number of scenarios to generate.
    #[arg(long)]
    pub scenarios: Option<usize>,
    /// Use scenarios from a JSON file instead of generating them.
    #[arg(long, value_name = "FILE")]
    pub scenario_file: Option<String>,
    #[arg(long)]
    pub k_expl: Option<f64>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Args, Debug, Default)]
pub struct TrainOpts {
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Loss asymmetry; must be negative.
    #[arg(long, allow_hyphen_values = true)]
    pub loss_a: Option<f64>,
    /// Steps between test-loss evaluations (0: only first and last).
    #[arg(long)]
    pub eval_every: Option<usize>,
    /// Test samples per periodic evaluation (0: all).
    #[arg(long)]
    pub eval_limit: Option<usize>,
    /// Also train on OPEN-node upper bounds.
    #[arg(long)]
    pub include_open: Option<bool>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long, value_name = "FILE")]
    pub dataset: Option<String>,
    #[command(flatten)]
    pub opts: TrainOpts,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Learned heuristic as NAME=WEIGHTS; repeatable. h_adm always runs.
    #[arg(long = "network", value_name = "NAME=FILE")]
    pub networks: Vec<String>,
    #[arg(long)]
    pub eval_scenarios: Option<usize>,
    /// Evaluate on scenarios from a JSON file instead of fresh ones.
    #[arg(long, value_name = "FILE")]
    pub scenario_file: Option<String>,
    /// Comma-separated sweep, e.g. `1,1.5,2`.
    #[arg(long)]
    pub epsilons: Option<String>,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Args, Debug)]
pub struct RenderArgs {
    /// Take the scenario from a JSON file (with --index) instead of generating one.
    #[arg(long, value_name = "FILE")]
    pub scenario_file: Option<String>,
    #[arg(long)]
    pub index: Option<usize>,
    /// Draw A* with this network's clamped heuristic instead of h_adm.
    #[arg(long, value_name = "FILE")]
    pub network: Option<String>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Draw the backward prolonged exploration instead of a forward search.
    #[arg(long)]
    pub explore: bool,
    #[arg(long)]
    pub k_expl: Option<f64>,
    /// Pixels per cell.
    #[arg(long)]
    pub scale: Option<usize>,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Args, Debug)]
pub struct PipelineArgs {
    /// Training scenarios.
    #[arg(long)]
    pub scenarios: Option<usize>,
    #[arg(long)]
    pub eval_scenarios: Option<usize>,
    #[arg(long)]
    pub k_expl: Option<f64>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[arg(long)]
    pub epsilons: Option<String>,
    #[command(flatten)]
    pub train: TrainOpts,
    #[command(flatten)]
    pub grid: GridArgs,
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            bail!("--jobs must be at least 1");
        }
        // Only the first call in a process can size the global pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    let file = match &cli.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let mut r = Resolver::new(file);
    let seed = r.get("seed", cli.seed, 0u64)?;
    let root = cli.out_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    let stage = Stage { root, seed };
    let dir = match cli.command {
        Command::GenScenarios(a) => stage.gen_scenarios(r, a)?,
        Command::GenDataset(a) => stage.gen_dataset(r, a)?,
        Command::Train(a) => stage.train(r, a)?,
        Command::Evaluate(a) => stage.evaluate(r, a)?,
        Command::Render(a) => stage.render(r, a)?,
        Command::Pipeline(a) => stage.pipeline(r, a)?,
    };
    println!("{}", dir.display());
    Ok(())
}

struct Stage {
    root: PathBuf,
    seed: u64,
}

fn grid_params(r: &mut Resolver, g: &GridArgs) -> Result<ScenarioParams> {
    let d = ScenarioParams::default();
    let params = ScenarioParams {
        width: r.get("width", g.width, d.width)?,
        height: r.get("height", g.height, d.height)?,
        density: r.get("density", g.density, d.density)?,
        max_attempts: r.get("max-attempts", g.max_attempts, d.max_attempts)?,
    };
    params.validate()?;
    Ok(params)
}

fn train_config(r: &mut Resolver, o: &TrainOpts, seed: u64) -> Result<TrainConfig> {
    let d = TrainConfig::default();
    let config = TrainConfig {
        steps: r.get("steps", o.steps, 512)?,
        batch_size: r.get("batch-size", o.batch_size, 128)?,
        learning_rate: r.get("learning-rate", o.learning_rate, d.learning_rate)?,
        loss_a: r.get("loss-a", o.loss_a, d.loss_a)?,
        eval_every: r.get("eval-every", o.eval_every, 64)?,
        eval_limit: r.get("eval-limit", o.eval_limit, 256)?,
        include_open: r.get("include-open", o.include_open, d.include_open)?,
        seed,
        adam: d.adam,
    };
    config.validate()?;
    Ok(config)
}

fn parse_epsilons(text: &str) -> Result<Vec<f64>> {
    let eps = text
        .split(',')
        .map(|s| s.trim().parse::<f64>().with_context(|| format!("bad epsilon {s:?}")))
        .collect::<Result<Vec<_>>>()?;
    if eps.is_empty() || eps.iter().any(|e| e.is_nan() || *e < 1.0) {
        bail!("epsilons must be a nonempty list of values >= 1, got {text:?}");
    }
    Ok(eps)
}

fn default_epsilons() -> String {
    DEFAULT_EPSILONS.map(|e| e.to_string()).join(",")
}

/// Reads an input file and records its digest in the config so the run
/// stamp changes with the input.
fn read_input(r: &mut Resolver, key: &str, path: &str) -> Result<Vec<u8>> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {path}"))?;
    r.note(&format!("{key}-sha256"), run_dir::digest(&bytes));
    Ok(bytes)
}

fn load_scenario_file(r: &mut Resolver, path: &str) -> Result<Vec<GridScenario>> {
    let bytes = read_input(r, "scenario-file", path)?;
    let text = String::from_utf8(bytes).with_context(|| format!("{path} is not UTF-8"))?;
    let scenarios = scenarios_from_json(&text).with_context(|| format!("parsing scenarios from {path}"))?;
    if scenarios.is_empty() {
        bail!("{path} contains no scenarios");
    }
    Ok(scenarios)
}

fn network_arch(scenario: &GridScenario) -> Architecture {
    Architecture {
        height: scenario.height(),
        width: scenario.width(),
        ..Architecture::value_net()
    }
}

fn fit(dataset: &Dataset, config: &TrainConfig, seed: u64) -> Result<(Network, TrainLog)> {
    let first = dataset.scenarios().first().ok_or_else(|| anyhow!("dataset has no scenarios"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario_seed(seed, INIT_STREAM));
    let mut net = Network::new(network_arch(first), &mut rng)
        .context("the value network does not fit this grid size")?;
    let log = train(&mut net, dataset, config)?;
    Ok((net, log))
}

fn print_summary(rows: &[SummaryRow]) {
    println!("heuristic  eps  median_explored  mean_explored  mean_length  violations");
    for r in rows {
        println!(
            "{:9} {:4.1}  {:15.1}  {:13.1}  {:11.2}  {:10}",
            r.heuristic, r.epsilon, r.median_explored_nodes, r.mean_explored_nodes, r.mean_path_length, r.violations
        );
    }
}

fn build_split(scenarios: Vec<GridScenario>, mode: Mode, k_expl: f64, test_fraction: f64, seed: u64) -> Result<Dataset> {
    let mut d = build_dataset(scenarios, mode, k_expl)?;
    split_by_scenario(&mut d, test_fraction, seed)?;
    Ok(d)
}

impl Stage {
    fn open(&self, stage: &str, r: Resolver) -> Result<RunDir> {
        RunDir::create(&self.root, stage, r.finish()?)
    }

    fn gen_scenarios(&self, mut r: Resolver, a: GenScenarios) -> Result<PathBuf> {
        let count = r.get("count", a.count, 50)?;
        let params = grid_params(&mut r, &a.grid)?;
        let scenarios = generate_scenarios(self.seed, count, &params)?;
        let mut out = self.open("gen-scenarios", r)?;
        out.write("scenarios.json", scenarios_to_json(&scenarios)?.as_bytes())?;
        out.finish()
    }

    fn gen_dataset(&self, mut r: Resolver, a: GenDataset) -> Result<PathBuf> {
        let mode = r.get("mode", a.mode, Mode::Phs)?;
        let k_expl = r.get("k-expl", a.k_expl, DEFAULT_K_EXPL)?;
        let test_fraction = r.get("test-fraction", a.test_fraction, 0.2)?;
        let scenarios = match r.opt("scenario-file", a.scenario_file)? {
            Some(path) => load_scenario_file(&mut r, &path)?,
            None => {
                let count = r.get("scenarios", a.scenarios, 50)?;
                generate_scenarios(self.seed, count, &grid_params(&mut r, &a.grid)?)?
            }
        };
        let dataset = build_split(scenarios, mode, k_expl, test_fraction, self.seed)?;
        let mut out = self.open("gen-dataset", r)?;
        out.write("dataset.bin", &write_dataset(&dataset)?)?;
        out.write("scenarios.json", scenarios_to_json(dataset.scenarios())?.as_bytes())?;
        eprintln!(
            "{} datapoints from {} scenarios ({:.1}% upper bounds)",
            dataset.len(),
            dataset.scenarios().len(),
            100.0 * dataset.non_finalized_fraction()
        );
        out.finish()
    }

    fn train(&self, mut r: Resolver, a: TrainArgs) -> Result<PathBuf> {
        let path = r
            .opt("dataset", a.dataset)?
            .ok_or_else(|| anyhow!("train needs --dataset FILE"))?;
        let bytes = read_input(&mut r, "dataset", &path)?;
        let dataset = read_dataset(&bytes).with_context(|| format!("reading dataset {path}"))?;
        let config = train_config(&mut r, &a.opts, self.seed)?;
        let (net, log) = fit(&dataset, &config, self.seed)?;
        let mut out = self.open("train", r)?;
        out.write("weights.bin", &write_weights(&net)?)?;
        out.write("train_log.csv", log.to_csv().as_bytes())?;
        if let Some(loss) = log.final_test_loss {
            eprintln!("final test loss {loss:.4}");
        }
        out.finish()
    }

    fn evaluate(&self, mut r: Resolver, a: EvaluateArgs) -> Result<PathBuf> {
        let from_file = r.opt("networks", (!a.networks.is_empty()).then(|| a.networks.join(",")))?;
        let mut networks = Vec::new();
        for entry in from_file.iter().flat_map(|s| s.split(',')).filter(|s| !s.trim().is_empty()) {
            let (name, path) = entry
                .split_once('=')
                .ok_or_else(|| anyhow!("--network expects NAME=FILE, got {entry:?}"))?;
            let bytes = read_input(&mut r, &format!("network-{name}"), path)?;
            let net = read_weights(&bytes).with_context(|| format!("reading weights {path}"))?;
            networks.push((name.trim().to_string(), net));
        }
        let eps = parse_epsilons(&r.get("epsilons", a.epsilons, default_epsilons())?)?;
        let scenarios = match r.opt("scenario-file", a.scenario_file)? {
            Some(path) => load_scenario_file(&mut r, &path)?,
            None => {
                let count = r.get("eval-scenarios", a.eval_scenarios, 100)?;
                generate_scenarios(scenario_seed(self.seed, EVAL_STREAM), count, &grid_params(&mut r, &a.grid)?)?
            }
        };
        let mut specs = vec![HeuristicSpec::Admissible];
        specs.extend(networks.iter().map(|(name, network)| HeuristicSpec::Learned { name, network }));
        let records = evaluate(&scenarios, &specs, &eps)?;
        let rows = summarize(&records)?;
        let mut out = self.open("evaluate", r)?;
        out.write("eval_scenarios.json", scenarios_to_json(&scenarios)?.as_bytes())?;
        out.write("records.csv", records_csv(&records)?.as_bytes())?;
        out.write("summary.csv", summary_csv(&rows)?.as_bytes())?;
        print_summary(&rows);
        out.finish()
    }

    fn render(&self, mut r: Resolver, a: RenderArgs) -> Result<PathBuf> {
        let scale = r.get("scale", a.scale, 8)?;
        let scenario = match r.opt("scenario-file", a.scenario_file)? {
            Some(path) => {
                let index = r.get("index", a.index, 0)?;
                let scenarios = load_scenario_file(&mut r, &path)?;
                let count = scenarios.len();
                scenarios
                    .into_iter()
                    .nth(index)
                    .ok_or_else(|| anyhow!("index {index} out of range for {count} scenarios"))?
            }
            None => generate_scenarios(self.seed, 1, &grid_params(&mut r, &a.grid)?)?.remove(0),
        };
        let result = if a.explore {
            r.note("explore", true);
            let k_expl = r.get("k-expl", a.k_expl, DEFAULT_K_EXPL)?;
            phs_explore(&scenario, k_expl)?
        } else {
            match r.opt("network", a.network)? {
                Some(path) => {
                    let epsilon = r.get("epsilon", a.epsilon, 2.0)?;
                    let bytes = read_input(&mut r, "network", &path)?;
                    let net = read_weights(&bytes).with_context(|| format!("reading weights {path}"))?;
                    let mut h = ClampedHeuristic::new(LearnedHeuristic::new(&net, &scenario)?, epsilon)?;
                    search_clamped(&mut h)?
                }
                None => search_admissible(&scenario)?,
            }
        };
        let target = if a.explore { scenario.start } else { scenario.goal };
        let path = reconstruct_path(&result, target)?;
        let image = render_exploration_map(&scenario, Some(&result), Some(&path), scale)?;
        let mut out = self.open("render", r)?;
        out.write("map.ppm", &image)?;
        eprintln!("explored {} nodes, path length {}", result.expanded_count(), path.len() - 1);
        out.finish()
    }

    fn pipeline(&self, mut r: Resolver, a: PipelineArgs) -> Result<PathBuf> {
        let count = r.get("scenarios", a.scenarios, 50)?;
        let eval_count = r.get("eval-scenarios", a.eval_scenarios, 100)?;
        let k_expl = r.get("k-expl", a.k_expl, DEFAULT_K_EXPL)?;
        let test_fraction = r.get("test-fraction", a.test_fraction, 0.2)?;
        let eps = parse_epsilons(&r.get("epsilons", a.epsilons, default_epsilons())?)?;
        let params = grid_params(&mut r, &a.grid)?;
        let config = train_config(&mut r, &a.train, self.seed)?;
        let mut out = self.open("pipeline", r)?;

        let scenarios = generate_scenarios(self.seed, count, &params)?;
        out.write("train_scenarios.json", scenarios_to_json(&scenarios)?.as_bytes())?;
        let mut nets = Vec::new();
        for (mode, name) in [(Mode::Vanilla, "van"), (Mode::Phs, "phs")] {
            let dataset = build_split(scenarios.clone(), mode, k_expl, test_fraction, self.seed)?;
            out.write(&format!("dataset_{name}.bin"), &write_dataset(&dataset)?)?;
            eprintln!("{name}: {} datapoints, training {} steps", dataset.len(), config.steps);
            let (net, log) = fit(&dataset, &config, self.seed)?;
            out.write(&format!("weights_{name}.bin"), &write_weights(&net)?)?;
            out.write(&format!("train_log_{name}.csv"), log.to_csv().as_bytes())?;
            if let Some(loss) = log.final_test_loss {
                eprintln!("{name}: final test loss {loss:.4}");
            }
            nets.push((format!("h_{name}"), net));
        }

        let eval = generate_scenarios(scenario_seed(self.seed, EVAL_STREAM), eval_count, &params)?;
        out.write("eval_scenarios.json", scenarios_to_json(&eval)?.as_bytes())?;
        let mut specs = vec![HeuristicSpec::Admissible];
        specs.extend(nets.iter().map(|(name, network)| HeuristicSpec::Learned { name, network }));
        let records = evaluate(&eval, &specs, &eps)?;
        let rows = summarize(&records)?;
        out.write("records.csv", records_csv(&records)?.as_bytes())?;
        out.write("summary.csv", summary_csv(&rows)?.as_bytes())?;
        print_summary(&rows);

        let first = &scenarios[0];
        let explored = phs_explore(first, k_expl)?;
        let path = reconstruct_path(&explored, first.start)?;
        out.write("map_train_phs.ppm", &render_exploration_map(first, Some(&explored), Some(&path), 8)?)?;
        out.write("map_train_van.ppm", &render_exploration_map(first, None, Some(&path), 8)?)?;
        let s = &eval[0];
        let map_eps = if eps.contains(&2.0) { 2.0 } else { eps[eps.len() - 1] };
        let adm = search_admissible(s)?;
        out.write("map_eval_h_adm.ppm", &map_of(s, &adm)?)?;
        for (name, net) in &nets {
            let mut h = ClampedHeuristic::new(LearnedHeuristic::new(net, s)?, map_eps)?;
            let result = search_clamped(&mut h)?;
            out.write(&format!("map_eval_{name}.ppm"), &map_of(s, &result)?)?;
        }
        out.finish()
    }
}

fn map_of(s: &GridScenario, result: &phs_core::SearchResult) -> Result<Vec<u8>> {
    let path = reconstruct_path(result, s.goal)?;
    Ok(render_exploration_map(s, Some(result), Some(&path), 8)?)
}

/// Parses `args` and runs the command; for tests and embedding.
pub fn run_from<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    run(Cli::try_parse_from(args)?)
}
