//! Admissible, learned and epsilon-clamped heuristics.
//!
//! The clamped heuristic keeps a learned estimate inside
//! `[h_adm, epsilon * h_adm]`. Since the Manhattan distance never
//! overestimates, the clamped value is at most `epsilon` times the true
//! cost-to-go, and search with it returns paths at most `epsilon` times
//! longer than optimal.

use crate::encode::{encode_into, CHANNELS};
use crate::error::{Error, Result};
use crate::gridworld::{manhattan, Cell, GridScenario};
use crate::nn::Network;

pub fn h_adm(cell: Cell, goal: Cell) -> f64 {
    manhattan(cell, goal) as f64
}

/// `min(max(raw, h_adm), epsilon * h_adm)`.
#[inline]
pub fn clamp_to_bounds(raw: f64, h_adm: f64, epsilon: f64) -> f64 {
    raw.max(h_adm).min(epsilon * h_adm)
}

/// Network estimate of the cost-to-go for cells of one scenario.
///
/// Values are memoized per cell, so repeated searches on the same scenario
/// evaluate each cell at most once.
pub struct LearnedHeuristic<'a> {
    network: &'a Network,
    scenario: &'a GridScenario,
    input: Vec<f64>,
    cache: Vec<Option<f64>>,
    evaluations: usize,
}

impl<'a> LearnedHeuristic<'a> {
    pub fn new(network: &'a Network, scenario: &'a GridScenario) -> Result<Self> {
        let arch = network.architecture();
        if (arch.input_channels, arch.height, arch.width) != (CHANNELS, scenario.height(), scenario.width()) {
            return Err(Error::Shape(format!(
                "network expects {}x{}x{}, scenario is {}x{}",
                arch.input_channels,
                arch.height,
                arch.width,
                scenario.width(),
                scenario.height()
            )));
        }
        let mut input = vec![0.0; CHANNELS * scenario.num_cells()];
        encode_into(scenario, scenario.goal, &mut input);
        Ok(LearnedHeuristic {
            network,
            scenario,
            input,
            cache: vec![None; scenario.num_cells()],
            evaluations: 0,
        })
    }

    pub fn scenario(&self) -> &GridScenario {
        self.scenario
    }

    /// Raw network output at `cell`; unbounded in either direction.
    pub fn raw(&mut self, cell: Cell) -> f64 {
        let i = self.scenario.index(cell);
        if let Some(v) = self.cache[i] {
            return v;
        }
        let plane = self.scenario.num_cells();
        let goal = self.scenario.index(self.scenario.goal);
        self.input[plane + goal] = 0.0;
        self.input[plane + i] = 1.0;
        let value = self
            .network
            .predict(&self.input)
            .expect("input buffer sized from the architecture");
        self.input[plane + i] = 0.0;
        self.input[plane + goal] = 1.0;
        self.cache[i] = Some(value);
        self.evaluations += 1;
        value
    }

    /// Number of distinct cells evaluated so far.
    pub fn evaluations(&self) -> usize {
        self.evaluations
    }
}

/// Raw learned value at one cell, without memoization.
pub fn h_ml_raw(network: &Network, scenario: &GridScenario, cell: Cell) -> Result<f64> {
    if !scenario.is_free(cell) {
        return Err(Error::CellOccupied(cell));
    }
    LearnedHeuristic::new(network, scenario).map(|mut h| h.raw(cell))
}

/// Learned heuristic bounded by `h_adm` below and `epsilon * h_adm` above.
pub struct ClampedHeuristic<'a> {
    learned: LearnedHeuristic<'a>,
    epsilon: f64,
}

impl<'a> ClampedHeuristic<'a> {
    pub fn new(learned: LearnedHeuristic<'a>, epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        Ok(ClampedHeuristic { learned, epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Changes the bound while keeping memoized network outputs.
    pub fn set_epsilon(&mut self, epsilon: f64) -> Result<()> {
        check_epsilon(epsilon)?;
        self.epsilon = epsilon;
        Ok(())
    }

    pub fn learned(&self) -> &LearnedHeuristic<'a> {
        &self.learned
    }

    pub fn value(&mut self, cell: Cell) -> f64 {
        let adm = h_adm(cell, self.learned.scenario.goal);
        if adm == 0.0 || self.epsilon == 1.0 {
            return adm;
        }
        clamp_to_bounds(self.learned.raw(cell), adm, self.epsilon)
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon.is_nan() || epsilon < 1.0 {
        return Err(Error::InvalidArgument(format!("epsilon must be >= 1, got {epsilon}")));
    }
    Ok(())
}

/// Clamped value at one cell.
pub fn h_clamped(network: &Network, scenario: &GridScenario, epsilon: f64, cell: Cell) -> Result<f64> {
    if !scenario.is_free(cell) {
        return Err(Error::CellOccupied(cell));
    }
    Ok(ClampedHeuristic::new(LearnedHeuristic::new(network, scenario)?, epsilon)?.value(cell))
}
