//! 4-connected unit-cost grid scenarios.
//!
//! A scenario is an occupancy grid together with a start cell and a goal
//! cell. Random scenarios are drawn with independent Bernoulli obstacles and
//! rejection-sampled until the start can reach the goal.

use std::collections::VecDeque;
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A grid cell addressed by column `x` and row `y`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub x: usize,
    pub y: usize,
}

impl Cell {
    pub const fn new(x: usize, y: usize) -> Self {
        Cell { x, y }
    }
}

// Row-major ordering, so sorted cells read like the grid.
impl Ord for Cell {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.y, self.x).cmp(&(other.y, other.x))
    }
}

impl PartialOrd for Cell {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Manhattan distance, the number of unit moves on an empty grid.
pub fn manhattan(a: Cell, b: Cell) -> usize {
    a.x.abs_diff(b.x) + a.y.abs_diff(b.y)
}

/// Parameters for random scenario generation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    pub width: usize,
    pub height: usize,
    /// Per-cell obstacle probability.
    pub density: f64,
    /// Rejection-sampling budget before giving up.
    pub max_attempts: usize,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        ScenarioParams {
            width: 30,
            height: 30,
            density: 0.33,
            max_attempts: 1000,
        }
    }
}

impl ScenarioParams {
    pub fn validate(&self) -> Result<()> {
        if self.width < 2 || self.height < 2 {
            return Err(Error::InvalidArgument(format!(
                "grid must be at least 2x2, got {}x{}",
                self.width, self.height
            )));
        }
        if !(0.0..1.0).contains(&self.density) {
            return Err(Error::InvalidArgument(format!(
                "density must lie in [0, 1), got {}",
                self.density
            )));
        }
        if self.max_attempts == 0 {
            return Err(Error::InvalidArgument("max_attempts must be positive".into()));
        }
        Ok(())
    }
}

/// One planning problem: occupancy grid, start and goal.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GridScenario {
    pub id: u32,
    pub seed: u64,
    width: usize,
    height: usize,
    obstacles: Vec<bool>,
    pub start: Cell,
    pub goal: Cell,
}

impl GridScenario {
    /// Builds a scenario from explicit parts, checking every invariant
    /// including solvability.
    pub fn new(
        id: u32,
        seed: u64,
        width: usize,
        height: usize,
        obstacles: Vec<bool>,
        start: Cell,
        goal: Cell,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument("empty grid".into()));
        }
        if obstacles.len() != width * height {
            return Err(Error::Shape(format!(
                "obstacle mask has {} cells, grid has {}",
                obstacles.len(),
                width * height
            )));
        }
        let scenario = GridScenario {
            id,
            seed,
            width,
            height,
            obstacles,
            start,
            goal,
        };
        for cell in [start, goal] {
            if !scenario.in_bounds(cell) {
                return Err(Error::OutOfBounds(cell));
            }
            if scenario.is_obstacle(cell) {
                return Err(Error::CellOccupied(cell));
            }
        }
        if start == goal {
            return Err(Error::InvalidArgument("start equals goal".into()));
        }
        if !scenario.connected(start, goal) {
            return Err(Error::InvalidArgument(format!(
                "goal {goal} is not reachable from start {start}"
            )));
        }
        Ok(scenario)
    }

    /// Draws a random solvable scenario from `seed`.
    pub fn random(id: u32, seed: u64, params: &ScenarioParams) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut scenario = new_scenario(&mut rng, params)?;
        scenario.id = id;
        scenario.seed = seed;
        Ok(scenario)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_cells(&self) -> usize {
        self.width * self.height
    }

    pub fn in_bounds(&self, cell: Cell) -> bool {
        cell.x < self.width && cell.y < self.height
    }

    #[inline]
    pub fn index(&self, cell: Cell) -> usize {
        cell.y * self.width + cell.x
    }

    #[inline]
    pub fn cell_at(&self, index: usize) -> Cell {
        Cell::new(index % self.width, index / self.width)
    }

    /// Occupancy of an in-bounds cell.
    pub fn is_obstacle(&self, cell: Cell) -> bool {
        self.obstacles[self.index(cell)]
    }

    pub fn is_free(&self, cell: Cell) -> bool {
        self.in_bounds(cell) && !self.is_obstacle(cell)
    }

    pub fn obstacles(&self) -> &[bool] {
        &self.obstacles
    }

    pub fn obstacle_count(&self) -> usize {
        self.obstacles.iter().filter(|&&o| o).count()
    }

    pub fn free_count(&self) -> usize {
        self.num_cells() - self.obstacle_count()
    }

    pub fn density(&self) -> f64 {
        self.obstacle_count() as f64 / self.num_cells() as f64
    }

    /// Free 4-neighbors of `cell` in the fixed order up, right, down, left.
    pub fn neighbors(&self, cell: Cell) -> impl Iterator<Item = Cell> + '_ {
        let Cell { x, y } = cell;
        let up = (y > 0).then(|| Cell::new(x, y - 1));
        let right = (x + 1 < self.width).then(|| Cell::new(x + 1, y));
        let down = (y + 1 < self.height).then(|| Cell::new(x, y + 1));
        let left = (x > 0).then(|| Cell::new(x - 1, y));
        [up, right, down, left]
            .into_iter()
            .flatten()
            .filter(move |&c| !self.is_obstacle(c))
    }

    /// Breadth-first reachability between two free cells.
    pub fn connected(&self, from: Cell, to: Cell) -> bool {
        if !self.is_free(from) || !self.is_free(to) {
            return false;
        }
        let mut seen = vec![false; self.num_cells()];
        let mut queue = VecDeque::from([from]);
        seen[self.index(from)] = true;
        while let Some(cell) = queue.pop_front() {
            if cell == to {
                return true;
            }
            for next in self.neighbors(cell) {
                let i = self.index(next);
                if !seen[i] {
                    seen[i] = true;
                    queue.push_back(next);
                }
            }
        }
        false
    }

    /// Obstacle rows as `0`/`1` strings, top row first.
    pub fn obstacle_rows(&self) -> Vec<String> {
        self.obstacles
            .chunks(self.width)
            .map(|row| row.iter().map(|&o| if o { '1' } else { '0' }).collect())
            .collect()
    }
}

/// Draws obstacle layouts and start/goal placements until a solvable
/// scenario appears. The returned scenario has id 0 and seed 0.
pub fn new_scenario<R: Rng + ?Sized>(rng: &mut R, params: &ScenarioParams) -> Result<GridScenario> {
    params.validate()?;
    let n = params.width * params.height;
    for _ in 0..params.max_attempts {
        let obstacles: Vec<bool> = (0..n).map(|_| rng.gen_bool(params.density)).collect();
        let free: Vec<usize> = (0..n).filter(|&i| !obstacles[i]).collect();
        if free.len() < 2 {
            continue;
        }
        let mut picks = free.choose_multiple(rng, 2);
        let (s, g) = (*picks.next().unwrap(), *picks.next().unwrap());
        let cell = |i: usize| Cell::new(i % params.width, i / params.width);
        let scenario = GridScenario {
            id: 0,
            seed: 0,
            width: params.width,
            height: params.height,
            obstacles,
            start: cell(s),
            goal: cell(g),
        };
        if scenario.connected(scenario.start, scenario.goal) {
            return Ok(scenario);
        }
    }
    Err(Error::NoSolvableScenario {
        attempts: params.max_attempts,
        density: params.density,
        width: params.width,
        height: params.height,
    })
}

/// Seed of scenario `index` under `master`; each index gets its own
/// ChaCha stream so scenarios are independent of one another.
pub fn scenario_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng.gen()
}

/// Generates `count` scenarios with ids `0..count`.
pub fn generate_scenarios(master: u64, count: usize, params: &ScenarioParams) -> Result<Vec<GridScenario>> {
    (0..count)
        .map(|k| GridScenario::random(k as u32, scenario_seed(master, k as u64), params))
        .collect()
}

#[derive(Serialize, Deserialize)]
struct ScenarioRecord {
    id: u32,
    seed: u64,
    width: usize,
    height: usize,
    start: [usize; 2],
    goal: [usize; 2],
    obstacles: Vec<String>,
}

impl From<&GridScenario> for ScenarioRecord {
    fn from(s: &GridScenario) -> Self {
        ScenarioRecord {
            id: s.id,
            seed: s.seed,
            width: s.width,
            height: s.height,
            start: [s.start.x, s.start.y],
            goal: [s.goal.x, s.goal.y],
            obstacles: s.obstacle_rows(),
        }
    }
}

impl TryFrom<ScenarioRecord> for GridScenario {
    type Error = Error;

    fn try_from(r: ScenarioRecord) -> Result<Self> {
        if r.obstacles.len() != r.height {
            return Err(Error::Format(format!(
                "scenario {}: {} obstacle rows for height {}",
                r.id,
                r.obstacles.len(),
                r.height
            )));
        }
        let mut obstacles = Vec::with_capacity(r.width * r.height);
        for row in &r.obstacles {
            if row.len() != r.width {
                return Err(Error::Format(format!(
                    "scenario {}: obstacle row of length {} for width {}",
                    r.id,
                    row.len(),
                    r.width
                )));
            }
            for ch in row.chars() {
                match ch {
                    '0' => obstacles.push(false),
                    '1' => obstacles.push(true),
                    other => {
                        return Err(Error::Format(format!(
                            "scenario {}: unexpected obstacle character {other:?}",
                            r.id
                        )))
                    }
                }
            }
        }
        GridScenario::new(
            r.id,
            r.seed,
            r.width,
            r.height,
            obstacles,
            Cell::new(r.start[0], r.start[1]),
            Cell::new(r.goal[0], r.goal[1]),
        )
    }
}

/// Serializes scenarios as a JSON array of records.
pub fn scenarios_to_json(scenarios: &[GridScenario]) -> Result<String> {
    let records: Vec<ScenarioRecord> = scenarios.iter().map(ScenarioRecord::from).collect();
    Ok(serde_json::to_string_pretty(&records)?)
}

pub fn scenarios_from_json(text: &str) -> Result<Vec<GridScenario>> {
    let records: Vec<ScenarioRecord> = serde_json::from_str(text)?;
    records.into_iter().map(GridScenario::try_from).collect()
}

pub fn save_scenarios(path: impl AsRef<Path>, scenarios: &[GridScenario]) -> Result<()> {
    let mut text = scenarios_to_json(scenarios)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_scenarios(path: impl AsRef<Path>) -> Result<Vec<GridScenario>> {
    scenarios_from_json(&std::fs::read_to_string(path)?)
}
