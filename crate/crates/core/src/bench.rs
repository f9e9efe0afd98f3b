//! Evaluation protocol: epsilon sweeps of clamped-heuristic A* on held-out
//! scenarios, CSV summaries and exploration maps.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridworld::{manhattan, Cell, GridScenario};
use crate::heuristic::{ClampedHeuristic, LearnedHeuristic};
use crate::nn::Network;
use crate::search::{best_first_search, dijkstra_full, SearchResult, TerminationRule};

pub const DEFAULT_EPSILONS: [f64; 6] = [1.0, 1.5, 2.0, 2.5, 3.0, 3.5];
pub const ADMISSIBLE: &str = "h_adm";

/// A heuristic under evaluation.
#[derive(Clone, Copy, Debug)]
pub enum HeuristicSpec<'a> {
    /// Manhattan distance; epsilon does not apply.
    Admissible,
    /// A network clamped into `[h_adm, epsilon * h_adm]`.
    Learned { name: &'a str, network: &'a Network },
}

impl HeuristicSpec<'_> {
    pub fn name(&self) -> &str {
        match self {
            HeuristicSpec::Admissible => ADMISSIBLE,
            HeuristicSpec::Learned { name, .. } => name,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub scenario_id: u32,
    pub heuristic: String,
    pub epsilon: f64,
    pub path_length: usize,
    pub optimal_length: usize,
    pub explored_nodes: usize,
    pub solved: bool,
}

impl EvalRecord {
    /// True when the run breaks `optimal <= length <= epsilon * optimal`
    /// or found no path.
    pub fn is_violation(&self) -> bool {
        !self.solved
            || self.path_length < self.optimal_length
            || self.path_length as f64 > self.epsilon * self.optimal_length as f64
    }
}

fn record(scenario: &GridScenario, name: &str, epsilon: f64, optimal: usize, result: &SearchResult) -> EvalRecord {
    EvalRecord {
        scenario_id: scenario.id,
        heuristic: name.to_string(),
        epsilon,
        path_length: result.path_length().unwrap_or(0),
        optimal_length: optimal,
        explored_nodes: result.expanded_count(),
        solved: result.goal_reached,
    }
}

/// Forward A* from start to goal with the clamped heuristic.
pub fn search_clamped(heuristic: &mut ClampedHeuristic<'_>) -> Result<SearchResult> {
    let scenario = heuristic.learned().scenario().clone();
    best_first_search(
        &scenario,
        scenario.start,
        Some(scenario.goal),
        |c| heuristic.value(c),
        TerminationRule::StopAtTarget,
    )
}

/// Forward A* from start to goal with the Manhattan heuristic.
pub fn search_admissible(scenario: &GridScenario) -> Result<SearchResult> {
    let goal = scenario.goal;
    best_first_search(
        scenario,
        scenario.start,
        Some(goal),
        |c| manhattan(c, goal) as f64,
        TerminationRule::StopAtTarget,
    )
}

fn evaluate_scenario(scenario: &GridScenario, heuristics: &[HeuristicSpec<'_>], epsilons: &[f64]) -> Result<Vec<EvalRecord>> {
    let optimal = dijkstra_full(scenario, scenario.start)
        .get(scenario.goal)
        .ok_or(Error::UnreachableTarget(scenario.goal))?;
    let mut records = Vec::with_capacity(heuristics.len() * epsilons.len());
    for spec in heuristics {
        match spec {
            HeuristicSpec::Admissible => {
                let result = search_admissible(scenario)?;
                records.extend(epsilons.iter().map(|&eps| record(scenario, ADMISSIBLE, eps, optimal, &result)));
            }
            HeuristicSpec::Learned { name, network } => {
                let mut heuristic = ClampedHeuristic::new(LearnedHeuristic::new(network, scenario)?, 1.0)?;
                for &eps in epsilons {
                    heuristic.set_epsilon(eps)?;
                    let result = search_clamped(&mut heuristic)?;
                    records.push(record(scenario, name, eps, optimal, &result));
                }
            }
        }
    }
    Ok(records)
}

/// Runs every (scenario, heuristic, epsilon) combination. Records are ordered
/// by scenario, then heuristic, then epsilon.
pub fn evaluate(scenarios: &[GridScenario], heuristics: &[HeuristicSpec<'_>], epsilons: &[f64]) -> Result<Vec<EvalRecord>> {
    if let Some(&bad) = epsilons.iter().find(|e| e.is_nan() || **e < 1.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be >= 1, got {bad}")));
    }
    let per_scenario: Vec<Vec<EvalRecord>> = scenarios
        .par_iter()
        .map(|s| evaluate_scenario(s, heuristics, epsilons))
        .collect::<Result<_>>()?;
    Ok(per_scenario.into_iter().flatten().collect())
}

/// Aggregate of all runs with one heuristic at one epsilon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub heuristic: String,
    pub epsilon: f64,
    pub runs: usize,
    pub solved: usize,
    pub mean_path_length: f64,
    pub median_path_length: f64,
    pub mean_optimal_length: f64,
    pub mean_explored_nodes: f64,
    pub median_explored_nodes: f64,
    pub violations: usize,
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// One row per (heuristic, epsilon); heuristics in order of first
/// appearance, epsilons ascending.
pub fn summarize(records: &[EvalRecord]) -> Result<Vec<SummaryRow>> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("no evaluation records to summarize".into()));
    }
    let mut keys: Vec<(usize, f64, &str)> = Vec::new();
    let mut names: Vec<&str> = Vec::new();
    for r in records {
        let rank = match names.iter().position(|n| *n == r.heuristic) {
            Some(i) => i,
            None => {
                names.push(&r.heuristic);
                names.len() - 1
            }
        };
        if !keys.iter().any(|k| k.0 == rank && k.1 == r.epsilon) {
            keys.push((rank, r.epsilon, &r.heuristic));
        }
    }
    keys.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    Ok(keys
        .into_iter()
        .map(|(_, eps, name)| {
            let group: Vec<&EvalRecord> = records
                .iter()
                .filter(|r| r.heuristic == name && r.epsilon == eps)
                .collect();
            let lengths: Vec<f64> = group.iter().map(|r| r.path_length as f64).collect();
            let optimal: Vec<f64> = group.iter().map(|r| r.optimal_length as f64).collect();
            let explored: Vec<f64> = group.iter().map(|r| r.explored_nodes as f64).collect();
            SummaryRow {
                heuristic: name.to_string(),
                epsilon: eps,
                runs: group.len(),
                solved: group.iter().filter(|r| r.solved).count(),
                mean_path_length: mean(&lengths),
                median_path_length: median(&lengths),
                mean_optimal_length: mean(&optimal),
                mean_explored_nodes: mean(&explored),
                median_explored_nodes: median(&explored),
                violations: group.iter().filter(|r| r.is_violation()).count(),
            }
        })
        .collect())
}

fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// `scenario_id,heuristic,epsilon,path_length,optimal_length,explored_nodes,solved`.
pub fn records_csv(records: &[EvalRecord]) -> Result<String> {
    to_csv(records)
}

pub fn summary_csv(rows: &[SummaryRow]) -> Result<String> {
    to_csv(rows)
}

pub fn read_records_csv(text: &str) -> Result<Vec<EvalRecord>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

pub mod colors {
    pub const FREE: [u8; 3] = [255, 255, 255];
    pub const OBSTACLE: [u8; 3] = [0, 0, 0];
    pub const CLOSED: [u8; 3] = [110, 150, 215];
    pub const OPEN: [u8; 3] = [200, 218, 245];
    pub const PATH: [u8; 3] = [235, 130, 30];
    pub const START: [u8; 3] = [40, 170, 60];
    pub const GOAL: [u8; 3] = [205, 35, 35];
}

/// Binary PPM of a scenario with an optional search overlay, `scale`
/// pixels per cell: obstacles black, CLOSED shaded, OPEN lighter, the path
/// highlighted, start green and goal red.
pub fn render_exploration_map(
    scenario: &GridScenario,
    result: Option<&SearchResult>,
    path: Option<&[Cell]>,
    scale: usize,
) -> Result<Vec<u8>> {
    if scale == 0 {
        return Err(Error::InvalidArgument("scale must be positive".into()));
    }
    let mut cells: Vec<[u8; 3]> = scenario
        .obstacles()
        .iter()
        .map(|&o| if o { colors::OBSTACLE } else { colors::FREE })
        .collect();
    if let Some(r) = result {
        for n in r.closed() {
            cells[scenario.index(n.cell)] = colors::CLOSED;
        }
        for n in r.open() {
            cells[scenario.index(n.cell)] = colors::OPEN;
        }
    }
    for &c in path.unwrap_or_default() {
        if !scenario.in_bounds(c) {
            return Err(Error::OutOfBounds(c));
        }
        cells[scenario.index(c)] = colors::PATH;
    }
    cells[scenario.index(scenario.start)] = colors::START;
    cells[scenario.index(scenario.goal)] = colors::GOAL;

    let (w, h) = (scenario.width() * scale, scenario.height() * scale);
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.reserve(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            out.extend_from_slice(&cells[(y / scale) * scenario.width() + x / scale]);
        }
    }
    Ok(out)
}

pub fn save_exploration_map(
    path: impl AsRef<Path>,
    scenario: &GridScenario,
    result: Option<&SearchResult>,
    route: Option<&[Cell]>,
    scale: usize,
) -> Result<()> {
    std::fs::write(path, render_exploration_map(scenario, result, route, scale)?)?;
    Ok(())
}
