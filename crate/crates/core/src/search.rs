//! Deterministic best-first search over grid scenarios.
//!
//! One engine drives forward A*, clamped-heuristic A*, exhaustive search and
//! the backward prolonged search used for dataset generation. Nodes are
//! expanded in nondecreasing `f`; ties prefer the larger `g`, then the
//! earlier insertion. Closed cells are never reopened.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, VecDeque};

use crate::error::{Error, Result};
use crate::gridworld::{Cell, GridScenario};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SearchNode {
    pub cell: Cell,
    /// Cost from the search root, in unit steps.
    pub g: usize,
    /// Priority `g + h`.
    pub f: f64,
    pub parent: Option<Cell>,
    /// Insertion counter of the queue entry that last (re)keyed this node.
    pub order: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TerminationRule {
    /// Halt once the target is expanded.
    StopAtTarget,
    /// Halt once OPEN is empty.
    Exhaust,
    /// Keep expanding after the target is expanded until CLOSED holds
    /// `k_expl` times as many nodes as it did at that moment.
    Prolonged { k_expl: f64 },
}

impl TerminationRule {
    fn validate(&self, target: Option<Cell>) -> Result<()> {
        match *self {
            TerminationRule::StopAtTarget if target.is_none() => Err(Error::InvalidArgument(
                "stop-at-target search needs a target".into(),
            )),
            TerminationRule::Prolonged { k_expl } => {
                if target.is_none() {
                    return Err(Error::InvalidArgument("prolonged search needs a target".into()));
                }
                if k_expl.is_nan() || k_expl < 1.0 {
                    return Err(Error::InvalidArgument(format!("k_expl must be >= 1, got {k_expl}")));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Slot {
    Unseen,
    Open(usize),
    Closed(usize),
}

/// OPEN/CLOSED state of a terminated search.
#[derive(Clone, Debug)]
pub struct SearchResult {
    pub root: Cell,
    pub target: Option<Cell>,
    /// Expanded nodes in expansion order.
    closed: Vec<SearchNode>,
    /// Frontier at termination, in insertion order.
    open: Vec<SearchNode>,
    slots: Vec<Slot>,
    width: usize,
    pub goal_reached: bool,
    /// Root-to-target path when the target was expanded.
    pub path: Option<Vec<Cell>>,
    /// |CLOSED| at the moment the target was expanded.
    pub closed_at_target: Option<usize>,
}

impl SearchResult {
    pub fn closed(&self) -> &[SearchNode] {
        &self.closed
    }

    pub fn open(&self) -> &[SearchNode] {
        &self.open
    }

    pub fn expanded_count(&self) -> usize {
        self.closed.len()
    }

    fn slot(&self, cell: Cell) -> Slot {
        if cell.x >= self.width {
            return Slot::Unseen;
        }
        self.slots
            .get(cell.y * self.width + cell.x)
            .copied()
            .unwrap_or(Slot::Unseen)
    }

    pub fn closed_node(&self, cell: Cell) -> Option<&SearchNode> {
        match self.slot(cell) {
            Slot::Closed(i) => Some(&self.closed[i]),
            _ => None,
        }
    }

    pub fn open_node(&self, cell: Cell) -> Option<&SearchNode> {
        match self.slot(cell) {
            Slot::Open(i) => Some(&self.open[i]),
            _ => None,
        }
    }

    pub fn is_closed(&self, cell: Cell) -> bool {
        matches!(self.slot(cell), Slot::Closed(_))
    }

    pub fn is_open(&self, cell: Cell) -> bool {
        matches!(self.slot(cell), Slot::Open(_))
    }

    pub fn path_length(&self) -> Option<usize> {
        self.path.as_ref().map(|p| p.len() - 1)
    }
}

/// Follows parent links from `target` back to the root.
pub fn reconstruct_path(result: &SearchResult, target: Cell) -> Result<Vec<Cell>> {
    let mut node = result
        .closed_node(target)
        .ok_or(Error::TargetNotExpanded(target))?;
    let mut path = vec![target];
    while let Some(parent) = node.parent {
        path.push(parent);
        node = result
            .closed_node(parent)
            .expect("parent of a closed node is closed");
    }
    path.reverse();
    Ok(path)
}

struct Entry {
    f: f64,
    g: usize,
    order: u64,
    index: usize,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

// Greater means "pop first" for the max-heap.
impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then(self.g.cmp(&other.g))
            .then(other.order.cmp(&self.order))
    }
}

struct Working {
    g: usize,
    h: f64,
    parent: Option<usize>,
    order: u64,
}

/// Runs best-first search from `root` with heuristic `h`.
///
/// `h` is evaluated once per generated cell and must be nonnegative.
pub fn best_first_search<H>(
    scenario: &GridScenario,
    root: Cell,
    target: Option<Cell>,
    mut h: H,
    rule: TerminationRule,
) -> Result<SearchResult>
where
    H: FnMut(Cell) -> f64,
{
    rule.validate(target)?;
    for cell in std::iter::once(root).chain(target) {
        if !scenario.in_bounds(cell) {
            return Err(Error::OutOfBounds(cell));
        }
        if scenario.is_obstacle(cell) {
            return Err(Error::CellOccupied(cell));
        }
    }
    let n = scenario.num_cells();
    let target_index = target.map(|t| scenario.index(t));
    let mut work: Vec<Option<Working>> = (0..n).map(|_| None).collect();
    let mut closed_flag = vec![false; n];
    let mut expansion: Vec<usize> = Vec::new();
    let mut heap = BinaryHeap::new();
    let mut counter = 0u64;
    let mut closed_at_target = None;

    let root_index = scenario.index(root);
    let root_h = h(root);
    work[root_index] = Some(Working {
        g: 0,
        h: root_h,
        parent: None,
        order: counter,
    });
    heap.push(Entry {
        f: root_h,
        g: 0,
        order: counter,
        index: root_index,
    });
    counter += 1;

    while let Some(entry) = heap.pop() {
        let index = entry.index;
        if closed_flag[index] || work[index].as_ref().map(|w| w.order) != Some(entry.order) {
            continue;
        }
        closed_flag[index] = true;
        expansion.push(index);

        if Some(index) == target_index && closed_at_target.is_none() {
            closed_at_target = Some(expansion.len());
        }
        let done = match rule {
            TerminationRule::StopAtTarget => closed_at_target.is_some(),
            TerminationRule::Exhaust => false,
            TerminationRule::Prolonged { k_expl } => match closed_at_target {
                Some(c0) => expansion.len() as f64 >= k_expl * c0 as f64,
                None => false,
            },
        };
        if done {
            break;
        }

        let g_next = entry.g + 1;
        let cell = scenario.cell_at(index);
        for next in scenario.neighbors(cell) {
            let ni = scenario.index(next);
            if closed_flag[ni] {
                continue;
            }
            let h_next = match &mut work[ni] {
                Some(w) if w.g <= g_next => continue,
                Some(w) => w.h,
                slot @ None => {
                    let value = h(next);
                    debug_assert!(value >= 0.0, "heuristic must be nonnegative");
                    *slot = Some(Working {
                        g: usize::MAX,
                        h: value,
                        parent: None,
                        order: 0,
                    });
                    value
                }
            };
            work[ni] = Some(Working {
                g: g_next,
                h: h_next,
                parent: Some(index),
                order: counter,
            });
            heap.push(Entry {
                f: g_next as f64 + h_next,
                g: g_next,
                order: counter,
                index: ni,
            });
            counter += 1;
        }
    }

    if closed_at_target.is_none() {
        if let (TerminationRule::StopAtTarget | TerminationRule::Prolonged { .. }, Some(t)) = (rule, target) {
            return Err(Error::UnreachableTarget(t));
        }
    }

    let node = |i: usize, w: &Working| SearchNode {
        cell: scenario.cell_at(i),
        g: w.g,
        f: w.g as f64 + w.h,
        parent: w.parent.map(|p| scenario.cell_at(p)),
        order: w.order,
    };
    let mut slots = vec![Slot::Unseen; n];
    let closed: Vec<SearchNode> = expansion
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            slots[i] = Slot::Closed(k);
            node(i, work[i].as_ref().unwrap())
        })
        .collect();
    let mut open: Vec<SearchNode> = (0..n)
        .filter(|&i| !closed_flag[i])
        .filter_map(|i| work[i].as_ref().map(|w| node(i, w)))
        .collect();
    open.sort_by_key(|node| node.order);
    for (k, node) in open.iter().enumerate() {
        slots[scenario.index(node.cell)] = Slot::Open(k);
    }

    let mut result = SearchResult {
        root,
        target,
        closed,
        open,
        slots,
        width: scenario.width(),
        goal_reached: closed_at_target.is_some(),
        path: None,
        closed_at_target,
    };
    if let (true, Some(t)) = (result.goal_reached, target) {
        result.path = Some(reconstruct_path(&result, t)?);
    }
    Ok(result)
}

/// Exact shortest-path distances from one source cell.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DistanceMap {
    width: usize,
    dist: Vec<Option<usize>>,
}

impl DistanceMap {
    pub fn get(&self, cell: Cell) -> Option<usize> {
        if cell.x >= self.width {
            return None;
        }
        self.dist.get(cell.y * self.width + cell.x).copied().flatten()
    }

    /// Number of reachable cells, the source included.
    pub fn len(&self) -> usize {
        self.dist.iter().filter(|d| d.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Reachable cells and their distances in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (Cell, usize)> + '_ {
        let width = self.width;
        self.dist
            .iter()
            .enumerate()
            .filter_map(move |(i, d)| d.map(|d| (Cell::new(i % width, i / width), d)))
    }
}

/// Dijkstra from `source` over the whole reachable component.
///
/// Kept separate from [`best_first_search`] so it can serve as an oracle.
pub fn dijkstra_full(scenario: &GridScenario, source: Cell) -> DistanceMap {
    let mut dist = vec![None; scenario.num_cells()];
    if !scenario.is_free(source) {
        return DistanceMap {
            width: scenario.width(),
            dist,
        };
    }
    let mut heap = BinaryHeap::new();
    dist[scenario.index(source)] = Some(0);
    heap.push(Reverse((0usize, scenario.index(source))));
    while let Some(Reverse((d, i))) = heap.pop() {
        if dist[i].is_some_and(|best| best < d) {
            continue;
        }
        for next in scenario.neighbors(scenario.cell_at(i)) {
            let ni = scenario.index(next);
            if dist[ni].is_none_or(|best| d + 1 < best) {
                dist[ni] = Some(d + 1);
                heap.push(Reverse((d + 1, ni)));
            }
        }
    }
    DistanceMap {
        width: scenario.width(),
        dist,
    }
}

/// Plain breadth-first distances; test oracle for unit-cost grids.
pub fn bfs_distances(scenario: &GridScenario, source: Cell) -> Vec<Option<usize>> {
    let mut dist = vec![None; scenario.num_cells()];
    if !scenario.is_free(source) {
        return dist;
    }
    let mut queue = VecDeque::from([source]);
    dist[scenario.index(source)] = Some(0);
    while let Some(cell) = queue.pop_front() {
        let d = dist[scenario.index(cell)].unwrap();
        for next in scenario.neighbors(cell) {
            let ni = scenario.index(next);
            if dist[ni].is_none() {
                dist[ni] = Some(d + 1);
                queue.push_back(next);
            }
        }
    }
    dist
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{generate_scenarios, manhattan, ScenarioParams};

    fn empty(width: usize, height: usize) -> GridScenario {
        GridScenario::new(
            0,
            0,
            width,
            height,
            vec![false; width * height],
            Cell::new(0, 0),
            Cell::new(width - 1, height - 1),
        )
        .unwrap()
    }

    fn manhattan_to(goal: Cell) -> impl Fn(Cell) -> f64 {
        move |c| manhattan(c, goal) as f64
    }

    #[test]
    fn corner_to_corner_on_empty_grid() {
        let s = empty(3, 3);
        let t = Cell::new(2, 2);
        let r = best_first_search(&s, Cell::new(0, 0), Some(t), manhattan_to(t), TerminationRule::StopAtTarget).unwrap();
        assert!(r.goal_reached);
        assert_eq!(r.path_length(), Some(4));
        assert_eq!(r.path.as_ref().unwrap().len(), 5);
        assert_eq!(reconstruct_path(&r, t).unwrap().len() - 1, r.closed_node(t).unwrap().g);
    }

    #[test]
    fn root_equals_target() {
        let s = empty(3, 3);
        let c = Cell::new(1, 1);
        let r = best_first_search(&s, c, Some(c), manhattan_to(c), TerminationRule::StopAtTarget).unwrap();
        assert_eq!(r.path, Some(vec![c]));
        assert_eq!(r.expanded_count(), 1);
        assert_eq!(reconstruct_path(&r, c).unwrap(), vec![c]);
    }

    #[test]
    fn exhaust_with_zero_heuristic_gives_bfs_distances() {
        let s = empty(3, 3);
        let r = best_first_search(&s, Cell::new(0, 0), None, |_| 0.0, TerminationRule::Exhaust).unwrap();
        let mut gs: Vec<usize> = r.closed().iter().map(|n| n.g).collect();
        gs.sort_unstable();
        // Frozen from the breadth-first oracle.
        let bfs = bfs_distances(&s, Cell::new(0, 0));
        let mut expected: Vec<usize> = bfs.into_iter().flatten().collect();
        expected.sort_unstable();
        assert_eq!(expected, vec![0, 1, 1, 2, 2, 2, 3, 3, 4]);
        assert_eq!(gs, expected);
        assert!(r.open().is_empty());
    }

    #[test]
    fn unreachable_target_is_reported() {
        let mut obstacles = vec![false; 9];
        obstacles[1] = true;
        obstacles[3] = true;
        // (0,0) is walled in; build the scenario with a reachable pair, then
        // search from the enclosed corner.
        let s = GridScenario::new(0, 0, 3, 3, obstacles, Cell::new(2, 2), Cell::new(1, 1)).unwrap();
        let err = best_first_search(&s, Cell::new(0, 0), Some(Cell::new(2, 2)), |_| 0.0, TerminationRule::StopAtTarget)
            .unwrap_err();
        assert!(matches!(err, Error::UnreachableTarget(_)));
    }

    #[test]
    fn rule_validation() {
        let s = empty(3, 3);
        let root = Cell::new(0, 0);
        assert!(best_first_search(&s, root, None, |_| 0.0, TerminationRule::StopAtTarget).is_err());
        assert!(best_first_search(&s, root, Some(root), |_| 0.0, TerminationRule::Prolonged { k_expl: 0.5 }).is_err());
        assert!(best_first_search(&s, Cell::new(5, 0), None, |_| 0.0, TerminationRule::Exhaust).is_err());
    }

    #[test]
    fn reconstruct_requires_closed_target() {
        let s = empty(4, 4);
        let r = best_first_search(&s, Cell::new(0, 0), Some(Cell::new(1, 0)), |_| 0.0, TerminationRule::StopAtTarget)
            .unwrap();
        assert!(matches!(
            reconstruct_path(&r, Cell::new(3, 3)),
            Err(Error::TargetNotExpanded(_))
        ));
    }

    #[test]
    fn dijkstra_on_small_grids() {
        let s = empty(2, 2);
        let d = dijkstra_full(&s, Cell::new(0, 0));
        assert_eq!(d.get(Cell::new(0, 0)), Some(0));
        assert_eq!(d.get(Cell::new(1, 0)), Some(1));
        assert_eq!(d.get(Cell::new(0, 1)), Some(1));
        assert_eq!(d.get(Cell::new(1, 1)), Some(2));
        assert_eq!(d.len(), 4);

        let d = dijkstra_full(&enclosed_center(), Cell::new(1, 1));
        assert_eq!(d.len(), 1);
        assert_eq!(d.get(Cell::new(1, 1)), Some(0));
    }

    fn enclosed_center() -> GridScenario {
        // 3x5 grid: the center of the top 3x3 block is walled in, start and
        // goal live on the bottom row.
        let mut obstacles = vec![false; 15];
        for c in [Cell::new(1, 0), Cell::new(0, 1), Cell::new(2, 1), Cell::new(1, 2)] {
            obstacles[c.y * 3 + c.x] = true;
        }
        GridScenario::new(0, 0, 3, 5, obstacles, Cell::new(0, 4), Cell::new(2, 4)).unwrap()
    }

    #[test]
    fn dijkstra_matches_zero_heuristic_exhaust() {
        let params = ScenarioParams {
            width: 10,
            height: 10,
            ..Default::default()
        };
        for s in generate_scenarios(11, 20, &params).unwrap() {
            let d = dijkstra_full(&s, s.start);
            let r = best_first_search(&s, s.start, None, |_| 0.0, TerminationRule::Exhaust).unwrap();
            assert_eq!(r.expanded_count(), d.len());
            for node in r.closed() {
                assert_eq!(Some(node.g), d.get(node.cell));
            }
        }
    }

    #[test]
    fn astar_with_manhattan_is_optimal() {
        let scenarios = generate_scenarios(3, 50, &ScenarioParams::default()).unwrap();
        for s in &scenarios {
            let d = dijkstra_full(s, s.start);
            let r = best_first_search(s, s.start, Some(s.goal), manhattan_to(s.goal), TerminationRule::StopAtTarget)
                .unwrap();
            let path = r.path.as_ref().unwrap();
            assert_eq!(Some(path.len() - 1), d.get(s.goal));
            for node in r.closed() {
                assert_eq!(Some(node.g), d.get(node.cell));
            }
            for pair in path.windows(2) {
                assert_eq!(manhattan(pair[0], pair[1]), 1);
                assert!(s.is_free(pair[1]));
            }
            assert_eq!(path[0], s.start);
            assert_eq!(*path.last().unwrap(), s.goal);
        }
    }

    #[test]
    fn open_and_closed_are_disjoint() {
        let s = &generate_scenarios(4, 1, &ScenarioParams::default()).unwrap()[0];
        let r = best_first_search(s, s.start, Some(s.goal), manhattan_to(s.goal), TerminationRule::StopAtTarget).unwrap();
        for node in r.open() {
            assert!(!r.is_closed(node.cell));
            assert!(r.is_open(node.cell));
        }
        for node in r.closed() {
            assert!(!r.is_open(node.cell));
        }
    }

    #[test]
    fn expansion_order_is_deterministic() {
        let s = &generate_scenarios(8, 1, &ScenarioParams::default()).unwrap()[0];
        let run = || {
            best_first_search(s, s.start, Some(s.goal), manhattan_to(s.goal), TerminationRule::StopAtTarget)
                .unwrap()
                .closed()
                .iter()
                .map(|n| n.cell)
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn ties_prefer_larger_g() {
        // On an empty grid with a consistent heuristic every node on a
        // shortest path has the same f; preferring larger g walks straight
        // to the target without expanding side cells.
        let s = empty(6, 6);
        let t = Cell::new(5, 5);
        let r = best_first_search(&s, Cell::new(0, 0), Some(t), manhattan_to(t), TerminationRule::StopAtTarget).unwrap();
        assert_eq!(r.expanded_count(), 11);
    }
}
