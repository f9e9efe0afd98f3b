//! Datapoints, their tensor encoding, datasets and the dataset file format.
//!
//! A sample is a 3 x H x W binary image: channel 0 holds obstacles,
//! channel 1 the current cell and channel 2 the goal cell. The target is the
//! raw cost-to-go in steps.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::codec::{to_u32, Reader, Write};
use crate::error::{Error, Result};
use crate::gridworld::{Cell, GridScenario};
use crate::nn::Tensor;

pub const CHANNELS: usize = 3;

/// One supervised record: a cell of a scenario and its cost-to-go.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DataPoint {
    pub scenario_id: u32,
    pub cell: Cell,
    pub cost_to_go: f64,
    /// True when the cost is exact (the node was expanded); OPEN nodes only
    /// carry an upper bound.
    pub finalized: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncodedSample {
    /// 3 x height x width.
    pub input: Tensor,
    pub target: f64,
}

/// Writes the encoding of `cell` in `scenario` into `buf` (3 * H * W).
pub fn encode_into(scenario: &GridScenario, cell: Cell, buf: &mut [f64]) {
    let plane = scenario.num_cells();
    debug_assert_eq!(buf.len(), CHANNELS * plane);
    for (v, &o) in buf[..plane].iter_mut().zip(scenario.obstacles()) {
        *v = if o { 1.0 } else { 0.0 };
    }
    buf[plane..].fill(0.0);
    buf[plane + scenario.index(cell)] = 1.0;
    buf[2 * plane + scenario.index(scenario.goal)] = 1.0;
}

pub fn encode_sample(scenario: &GridScenario, point: &DataPoint) -> Result<EncodedSample> {
    if !scenario.in_bounds(point.cell) {
        return Err(Error::OutOfBounds(point.cell));
    }
    if scenario.is_obstacle(point.cell) {
        return Err(Error::CellOccupied(point.cell));
    }
    let mut data = vec![0.0; CHANNELS * scenario.num_cells()];
    encode_into(scenario, point.cell, &mut data);
    Ok(EncodedSample {
        input: Tensor::from_vec(&[CHANNELS, scenario.height(), scenario.width()], data)?,
        target: point.cost_to_go,
    })
}

/// What an encoded sample says about its scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct DecodedSample {
    pub width: usize,
    pub height: usize,
    pub obstacles: Vec<bool>,
    pub cell: Cell,
    pub goal: Cell,
    pub target: f64,
}

/// Inverse of [`encode_sample`].
pub fn decode_sample(sample: &EncodedSample) -> Result<DecodedSample> {
    let &[CHANNELS, height, width] = sample.input.shape() else {
        return Err(Error::Shape(format!("expected 3 x H x W, got {:?}", sample.input.shape())));
    };
    let plane = height * width;
    let data = sample.input.data();
    let mut obstacles = Vec::with_capacity(plane);
    for &v in &data[..plane] {
        match v {
            0.0 => obstacles.push(false),
            1.0 => obstacles.push(true),
            _ => return Err(Error::Format(format!("non-binary obstacle value {v}"))),
        }
    }
    let marker = |channel: usize| -> Result<Cell> {
        let values = &data[channel * plane..(channel + 1) * plane];
        let mut hits = values.iter().enumerate().filter(|(_, &v)| v != 0.0);
        match (hits.next(), hits.next()) {
            (Some((i, &1.0)), None) => Ok(Cell::new(i % width, i / width)),
            _ => Err(Error::Format(format!("channel {channel} is not one-hot"))),
        }
    };
    Ok(DecodedSample {
        width,
        height,
        obstacles,
        cell: marker(1)?,
        goal: marker(2)?,
        target: sample.target,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Unassigned,
    Train,
    Test,
}

impl Split {
    fn code(self) -> u8 {
        match self {
            Split::Unassigned => 0,
            Split::Train => 1,
            Split::Test => 2,
        }
    }

    fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Split::Unassigned),
            1 => Ok(Split::Train),
            2 => Ok(Split::Test),
            other => Err(Error::Format(format!("unknown split code {other}"))),
        }
    }
}

/// Scenarios, their datapoints and free-form metadata.
///
/// Every scenario carries one split label, so all of its points live on the
/// same side of a train/test split.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Dataset {
    pub metadata: BTreeMap<String, String>,
    scenarios: Vec<GridScenario>,
    splits: Vec<Split>,
    points: Vec<DataPoint>,
    index: HashMap<u32, usize>,
}

impl Dataset {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a scenario and its points; every point must belong to it.
    pub fn push_scenario(&mut self, scenario: GridScenario, points: Vec<DataPoint>) -> Result<()> {
        if self.index.contains_key(&scenario.id) {
            return Err(Error::InvalidArgument(format!("duplicate scenario id {}", scenario.id)));
        }
        for p in &points {
            if p.scenario_id != scenario.id {
                return Err(Error::InvalidArgument(format!(
                    "point for scenario {} pushed with scenario {}",
                    p.scenario_id, scenario.id
                )));
            }
            if !scenario.is_free(p.cell) {
                return Err(Error::CellOccupied(p.cell));
            }
        }
        self.index.insert(scenario.id, self.scenarios.len());
        self.scenarios.push(scenario);
        self.splits.push(Split::Unassigned);
        self.points.extend(points);
        Ok(())
    }

    pub fn scenarios(&self) -> &[GridScenario] {
        &self.scenarios
    }

    pub fn points(&self) -> &[DataPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn scenario(&self, id: u32) -> Option<&GridScenario> {
        self.index.get(&id).map(|&i| &self.scenarios[i])
    }

    pub fn split_of(&self, id: u32) -> Option<Split> {
        self.index.get(&id).map(|&i| self.splits[i])
    }

    pub fn set_split(&mut self, id: u32, split: Split) -> Result<()> {
        let i = *self
            .index
            .get(&id)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown scenario {id}")))?;
        self.splits[i] = split;
        Ok(())
    }

    /// Points whose scenario carries `split`, in storage order.
    pub fn points_in(&self, split: Split) -> impl Iterator<Item = &DataPoint> + '_ {
        self.points
            .iter()
            .filter(move |p| self.split_of(p.scenario_id) == Some(split))
    }

    pub fn non_finalized_fraction(&self) -> f64 {
        if self.points.is_empty() {
            return 0.0;
        }
        self.points.iter().filter(|p| !p.finalized).count() as f64 / self.points.len() as f64
    }

    /// Mean obstacle density over the stored scenarios.
    pub fn realized_density(&self) -> f64 {
        if self.scenarios.is_empty() {
            return 0.0;
        }
        self.scenarios.iter().map(GridScenario::density).sum::<f64>() / self.scenarios.len() as f64
    }

    pub fn set_meta(&mut self, key: &str, value: impl ToString) {
        self.metadata.insert(key.to_string(), value.to_string());
    }
}

/// Number of test scenarios for `n` scenarios at `fraction`.
fn test_count(n: usize, fraction: f64) -> usize {
    (n as f64 * fraction).round() as usize
}

/// Assigns whole scenarios to the test split with probability mass
/// `test_fraction`, deterministically per `seed`.
pub fn split_by_scenario(dataset: &mut Dataset, test_fraction: f64, seed: u64) -> Result<()> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let n = dataset.scenarios.len();
    let k = test_count(n, test_fraction);
    if k == 0 {
        return Err(Error::EmptySplit("test"));
    }
    if k >= n {
        return Err(Error::EmptySplit("train"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    dataset.splits.fill(Split::Train);
    for &i in &order[..k] {
        dataset.splits[i] = Split::Test;
    }
    dataset.set_meta("split_seed", seed);
    dataset.set_meta("test_fraction", test_fraction);
    Ok(())
}

const MAGIC: &[u8; 8] = b"PHSDATA\0";
const VERSION: u32 = 1;

fn metadata_text(meta: &BTreeMap<String, String>) -> Result<String> {
    let mut text = String::new();
    for (k, v) in meta {
        if k.is_empty() || k.contains(['=', '\n']) || v.contains('\n') {
            return Err(Error::InvalidArgument(format!("metadata entry {k:?} cannot be stored")));
        }
        text.push_str(k);
        text.push('=');
        text.push_str(v);
        text.push('\n');
    }
    Ok(text)
}

fn parse_metadata(text: &str) -> Result<BTreeMap<String, String>> {
    text.lines()
        .map(|line| {
            line.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| Error::Format(format!("bad metadata line {line:?}")))
        })
        .collect()
}

/// Serializes a dataset: header, metadata text, scenarios, then points.
pub fn write_dataset(dataset: &Dataset) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.put_u32(VERSION);
    out.put_u64(dataset.scenarios.len() as u64);
    out.put_u64(dataset.points.len() as u64);
    let meta = metadata_text(&dataset.metadata)?;
    out.put_u64(meta.len() as u64);
    out.extend_from_slice(meta.as_bytes());
    for (s, split) in dataset.scenarios.iter().zip(&dataset.splits) {
        out.put_u32(s.id);
        out.put_u64(s.seed);
        out.put_u32(to_u32(s.width(), "width")?);
        out.put_u32(to_u32(s.height(), "height")?);
        for v in [s.start.x, s.start.y, s.goal.x, s.goal.y] {
            out.put_u32(to_u32(v, "coordinate")?);
        }
        out.put_u8(split.code());
        let mut packed = vec![0u8; s.num_cells().div_ceil(8)];
        for (i, &o) in s.obstacles().iter().enumerate() {
            if o {
                packed[i / 8] |= 1 << (i % 8);
            }
        }
        out.extend_from_slice(&packed);
    }
    for p in &dataset.points {
        out.put_u32(p.scenario_id);
        out.put_u32(to_u32(p.cell.x, "coordinate")?);
        out.put_u32(to_u32(p.cell.y, "coordinate")?);
        out.put_f64(p.cost_to_go);
        out.put_u8(p.finalized as u8);
    }
    Ok(out)
}

pub fn read_dataset(bytes: &[u8]) -> Result<Dataset> {
    let mut r = Reader::new(bytes, "dataset file");
    r.magic(MAGIC)?;
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Version {
            expected: VERSION,
            found: version,
        });
    }
    let n_scenarios = r.count(29)?;
    let n_points = r.u64()?;
    let meta_len = r.count(1)?;
    let meta = std::str::from_utf8(r.bytes(meta_len)?)
        .map_err(|_| Error::Format("metadata is not UTF-8".into()))?;
    let metadata = parse_metadata(meta)?;

    let mut scenarios = Vec::with_capacity(n_scenarios);
    let mut splits = Vec::with_capacity(n_scenarios);
    for _ in 0..n_scenarios {
        let id = r.u32()?;
        let seed = r.u64()?;
        let width = r.u32()? as usize;
        let height = r.u32()? as usize;
        let start = Cell::new(r.u32()? as usize, r.u32()? as usize);
        let goal = Cell::new(r.u32()? as usize, r.u32()? as usize);
        let split = Split::from_code(r.u8()?)?;
        let cells = width
            .checked_mul(height)
            .filter(|&c| c <= 1 << 24)
            .ok_or_else(|| Error::Format(format!("implausible grid {width}x{height}")))?;
        let packed = r.bytes(cells.div_ceil(8))?;
        let obstacles = (0..cells).map(|i| packed[i / 8] & (1 << (i % 8)) != 0).collect();
        let scenario = GridScenario::new(id, seed, width, height, obstacles, start, goal)
            .map_err(|e| Error::Format(format!("scenario {id}: {e}")))?;
        scenarios.push(scenario);
        splits.push(split);
    }

    let mut dataset = Dataset {
        metadata,
        ..Dataset::default()
    };
    let n_points = usize::try_from(n_points).map_err(|_| Error::Format("point count overflow".into()))?;
    let mut grouped: Vec<Vec<DataPoint>> = vec![Vec::new(); scenarios.len()];
    let ids: HashMap<u32, usize> = scenarios.iter().enumerate().map(|(i, s)| (s.id, i)).collect();
    let mut order = Vec::with_capacity(n_points.min(bytes.len() / 21));
    for _ in 0..n_points {
        let scenario_id = r.u32()?;
        let cell = Cell::new(r.u32()? as usize, r.u32()? as usize);
        let cost_to_go = r.f64()?;
        let finalized = match r.u8()? {
            0 => false,
            1 => true,
            other => return Err(Error::Format(format!("bad finalized flag {other}"))),
        };
        let &slot = ids
            .get(&scenario_id)
            .ok_or_else(|| Error::Format(format!("point references unknown scenario {scenario_id}")))?;
        order.push(slot);
        grouped[slot].push(DataPoint {
            scenario_id,
            cell,
            cost_to_go,
            finalized,
        });
    }
    r.finish()?;

    for (scenario, points) in scenarios.into_iter().zip(grouped) {
        dataset
            .push_scenario(scenario, points)
            .map_err(|e| Error::Format(e.to_string()))?;
    }
    dataset.splits = splits;
    // Points are written grouped by scenario, in scenario order.
    if !order.windows(2).all(|w| w[0] <= w[1]) {
        return Err(Error::Format("points are not grouped by scenario".into()));
    }
    Ok(dataset)
}

pub fn save_dataset(path: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    std::fs::write(path, write_dataset(dataset)?)?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    read_dataset(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{generate_scenarios, ScenarioParams};

    fn sample_dataset(n: usize) -> Dataset {
        let scenarios = generate_scenarios(17, n, &ScenarioParams::default()).unwrap();
        let mut d = Dataset::new();
        for s in scenarios {
            let points = vec![
                DataPoint {
                    scenario_id: s.id,
                    cell: s.goal,
                    cost_to_go: 0.0,
                    finalized: true,
                },
                DataPoint {
                    scenario_id: s.id,
                    cell: s.start,
                    cost_to_go: 17.5,
                    finalized: false,
                },
            ];
            d.push_scenario(s, points).unwrap();
        }
        d.set_meta("mode", "phs");
        d.set_meta("k_expl", 10.0);
        d
    }

    #[test]
    fn encoding_channels() {
        let d = sample_dataset(1);
        let s = &d.scenarios()[0];
        let at_goal = encode_sample(s, &d.points()[0]).unwrap();
        let plane = s.num_cells();
        let data = at_goal.input.data();
        assert_eq!(at_goal.target, 0.0);
        assert_eq!(data[plane + s.index(s.goal)], 1.0);
        assert_eq!(data[2 * plane + s.index(s.goal)], 1.0);
        assert_eq!(data[..plane].iter().sum::<f64>(), s.obstacle_count() as f64);
        assert_eq!(data[plane..2 * plane].iter().sum::<f64>(), 1.0);
        assert_eq!(data[2 * plane..].iter().sum::<f64>(), 1.0);
        assert_eq!(data[s.index(s.goal)], 0.0);
    }

    #[test]
    fn decode_inverts_encode() {
        let d = sample_dataset(2);
        for p in d.points() {
            let s = d.scenario(p.scenario_id).unwrap();
            let decoded = decode_sample(&encode_sample(s, p).unwrap()).unwrap();
            assert_eq!(decoded.cell, p.cell);
            assert_eq!(decoded.goal, s.goal);
            assert_eq!(decoded.obstacles, s.obstacles());
            assert_eq!(decoded.target, p.cost_to_go);
            assert_eq!((decoded.width, decoded.height), (s.width(), s.height()));
        }
    }

    #[test]
    fn occupied_cell_is_rejected() {
        let d = sample_dataset(1);
        let s = &d.scenarios()[0];
        let blocked = (0..s.num_cells()).map(|i| s.cell_at(i)).find(|&c| s.is_obstacle(c)).unwrap();
        let p = DataPoint {
            scenario_id: s.id,
            cell: blocked,
            cost_to_go: 1.0,
            finalized: true,
        };
        assert!(matches!(encode_sample(s, &p), Err(Error::CellOccupied(_))));
    }

    #[test]
    fn split_examples() {
        let mut d = sample_dataset(10);
        split_by_scenario(&mut d, 0.2, 3).unwrap();
        let tests: Vec<u32> = d
            .scenarios()
            .iter()
            .filter(|s| d.split_of(s.id) == Some(Split::Test))
            .map(|s| s.id)
            .collect();
        assert_eq!(tests.len(), 2);

        let mut again = sample_dataset(10);
        split_by_scenario(&mut again, 0.2, 3).unwrap();
        assert_eq!(again, d);

        let train_ids: Vec<u32> = d.points_in(Split::Train).map(|p| p.scenario_id).collect();
        let test_ids: Vec<u32> = d.points_in(Split::Test).map(|p| p.scenario_id).collect();
        assert!(train_ids.iter().all(|id| !test_ids.contains(id)));
        assert_eq!(train_ids.len() + test_ids.len(), d.len());
    }

    #[test]
    fn split_needs_both_sides() {
        let mut d = sample_dataset(2);
        assert!(matches!(split_by_scenario(&mut d, 0.1, 0), Err(Error::EmptySplit("test"))));
        assert!(matches!(split_by_scenario(&mut d, 0.9, 0), Err(Error::EmptySplit("train"))));
        assert!(split_by_scenario(&mut d, 1.0, 0).is_err());
    }

    #[test]
    fn file_round_trip() {
        let mut d = sample_dataset(5);
        split_by_scenario(&mut d, 0.4, 1).unwrap();
        let bytes = write_dataset(&d).unwrap();
        let back = read_dataset(&bytes).unwrap();
        assert_eq!(back, d);
        assert_eq!(write_dataset(&back).unwrap(), bytes);
    }

    #[test]
    fn empty_dataset_round_trip() {
        let d = Dataset::new();
        let back = read_dataset(&write_dataset(&d).unwrap()).unwrap();
        assert_eq!(back, d);
        assert!(back.is_empty());
    }

    #[test]
    fn truncated_or_corrupt_files() {
        let bytes = write_dataset(&sample_dataset(3)).unwrap();
        for cut in [0, 4, 11, 20, 40, 100, bytes.len() - 1] {
            assert!(matches!(read_dataset(&bytes[..cut]), Err(Error::Format(_))), "cut {cut}");
        }
        let mut v = bytes.clone();
        v[8..12].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(read_dataset(&v), Err(Error::Version { found: 2, .. })));
        let mut v = bytes;
        v[0] = 0;
        assert!(matches!(read_dataset(&v), Err(Error::Format(_))));
    }

    #[test]
    fn metadata_must_be_line_safe() {
        let mut d = Dataset::new();
        d.set_meta("bad", "two\nlines");
        assert!(write_dataset(&d).is_err());
    }
}
