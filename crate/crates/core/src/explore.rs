//! Dataset generation by backward prolonged heuristic search, plus the
//! optimal-path-only baseline.
//!
//! The prolonged search runs backwards from the goal, so the cost-to-come of
//! every expanded node is its exact cost-to-go. It keeps expanding after the
//! start is reached until CLOSED has grown by a factor `k_expl`, covering a
//! neighborhood of the optimal path rather than the path alone.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::encode::{DataPoint, Dataset};
use crate::error::{Error, Result};
use crate::gridworld::{generate_scenarios, manhattan, Cell, GridScenario, ScenarioParams};
use crate::search::{best_first_search, SearchResult, TerminationRule};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Every OPEN and CLOSED node of a backward prolonged search.
    Phs,
    /// Only the cells of one optimal start-goal path.
    Vanilla,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Phs => "phs",
            Mode::Vanilla => "vanilla",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "phs" => Ok(Mode::Phs),
            "vanilla" | "van" => Ok(Mode::Vanilla),
            other => Err(Error::InvalidArgument(format!("unknown mode {other:?} (phs or vanilla)"))),
        }
    }
}

pub const DEFAULT_K_EXPL: f64 = 10.0;

#[derive(Clone, Debug, PartialEq)]
pub struct ExplorationConfig {
    pub k_scen: usize,
    pub k_expl: f64,
    pub mode: Mode,
    pub scenario: ScenarioParams,
    pub seed: u64,
}

impl Default for ExplorationConfig {
    fn default() -> Self {
        ExplorationConfig {
            k_scen: 50,
            k_expl: DEFAULT_K_EXPL,
            mode: Mode::Phs,
            scenario: ScenarioParams::default(),
            seed: 0,
        }
    }
}

impl ExplorationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_scen == 0 {
            return Err(Error::InvalidArgument("k_scen must be at least 1".into()));
        }
        if self.k_expl.is_nan() || self.k_expl < 1.0 {
            return Err(Error::InvalidArgument(format!("k_expl must be >= 1, got {}", self.k_expl)));
        }
        self.scenario.validate()
    }
}

/// Backward prolonged search from the goal, guided by `h` towards the start.
pub fn phs_explore_with<H>(scenario: &GridScenario, k_expl: f64, h: H) -> Result<SearchResult>
where
    H: FnMut(Cell) -> f64,
{
    best_first_search(
        scenario,
        scenario.goal,
        Some(scenario.start),
        h,
        TerminationRule::Prolonged { k_expl },
    )
}

/// Backward prolonged search with the Manhattan distance to the start.
pub fn phs_explore(scenario: &GridScenario, k_expl: f64) -> Result<SearchResult> {
    let start = scenario.start;
    phs_explore_with(scenario, k_expl, |c| manhattan(c, start) as f64)
}

/// One datapoint per CLOSED node (exact) and per OPEN node (upper bound).
pub fn extract_datapoints(result: &SearchResult, scenario: &GridScenario) -> Vec<DataPoint> {
    let closed = result.closed().iter().map(|n| (n, true));
    let open = result.open().iter().map(|n| (n, false));
    closed
        .chain(open)
        .map(|(node, finalized)| DataPoint {
            scenario_id: scenario.id,
            cell: node.cell,
            cost_to_go: node.g as f64,
            finalized,
        })
        .collect()
}

/// Cells of one optimal path, labeled with their distance to the goal.
pub fn vanilla_datapoints(scenario: &GridScenario) -> Result<Vec<DataPoint>> {
    let goal = scenario.goal;
    let result = best_first_search(
        scenario,
        scenario.start,
        Some(goal),
        |c| manhattan(c, goal) as f64,
        TerminationRule::StopAtTarget,
    )?;
    let path = result.path.ok_or(Error::UnreachableTarget(goal))?;
    Ok(path
        .iter()
        .rev()
        .enumerate()
        .map(|(i, &cell)| DataPoint {
            scenario_id: scenario.id,
            cell,
            cost_to_go: i as f64,
            finalized: true,
        })
        .collect())
}

fn scenario_points(scenario: &GridScenario, mode: Mode, k_expl: f64) -> Result<Vec<DataPoint>> {
    match mode {
        Mode::Phs => Ok(extract_datapoints(&phs_explore(scenario, k_expl)?, scenario)),
        Mode::Vanilla => vanilla_datapoints(scenario),
    }
}

/// Builds a dataset from explicit scenarios; scenarios are processed in
/// parallel and concatenated in input order.
pub fn build_dataset(scenarios: Vec<GridScenario>, mode: Mode, k_expl: f64) -> Result<Dataset> {
    if mode == Mode::Phs && (k_expl.is_nan() || k_expl < 1.0) {
        return Err(Error::InvalidArgument(format!("k_expl must be >= 1, got {k_expl}")));
    }
    let points: Vec<Vec<DataPoint>> = scenarios
        .par_iter()
        .map(|s| scenario_points(s, mode, k_expl))
        .collect::<Result<_>>()?;
    let mut dataset = Dataset::new();
    for (scenario, points) in scenarios.into_iter().zip(points) {
        dataset.push_scenario(scenario, points)?;
    }
    dataset.set_meta("mode", mode);
    if mode == Mode::Phs {
        dataset.set_meta("k_expl", k_expl);
    }
    dataset.set_meta("scenarios", dataset.scenarios().len());
    dataset.set_meta("points", dataset.len());
    dataset.set_meta("realized_density", dataset.realized_density());
    dataset.set_meta("non_finalized_fraction", dataset.non_finalized_fraction());
    Ok(dataset)
}

/// Generates `k_scen` scenarios from the master seed and explores each.
pub fn generate_dataset(config: &ExplorationConfig) -> Result<Dataset> {
    config.validate()?;
    let scenarios = generate_scenarios(config.seed, config.k_scen, &config.scenario)?;
    let mut dataset = build_dataset(scenarios, config.mode, config.k_expl)?;
    dataset.set_meta("seed", config.seed);
    dataset.set_meta("width", config.scenario.width);
    dataset.set_meta("height", config.scenario.height);
    dataset.set_meta("density", config.scenario.density);
    Ok(dataset)
}
