use crate::gridmap::{distance, wrap_pi, Cell, CellState, OccupancyGrid, Point2, Pose};
use rand::Rng;
use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use thiserror::Error;

use super::{Action, NavParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("start pose outside the map")]
    StartOutside,
    #[error("no reachable free cell near the target")]
    Unreachable,
}

/// Traversability of mapped cells for a robot of radius `inflation`: a
/// Free cell is blocked when some Obstacle cell's square lies within the
/// radius of its center. Results are cached per query.
pub struct Clearance<'a> {
    grid: &'a OccupancyGrid,
    offsets: Vec<(i32, i32)>,
    cache: Vec<u8>,
    relax_center: Point2,
    relax: f64,
}

impl<'a> Clearance<'a> {
    pub fn new(grid: &'a OccupancyGrid, inflation: f64, relax_center: Point2, relax: f64) -> Self {
        let res = grid.resolution();
        let reach = (inflation / res).ceil() as i32 + 1;
        let mut offsets = Vec::new();
        for dr in -reach..=reach {
            for dc in -reach..=reach {
                let gx = ((dc.abs() as f64) * res - res / 2.0).max(0.0);
                let gy = ((dr.abs() as f64) * res - res / 2.0).max(0.0);
                if gx.hypot(gy) <= inflation {
                    offsets.push((dr, dc));
                }
            }
        }
        Self {
            grid,
            offsets,
            cache: vec![0; grid.bounds().len()],
            relax_center,
            relax,
        }
    }

    fn near_obstacle(&self, c: Cell) -> bool {
        self.offsets
            .iter()
            .any(|(dr, dc)| self.grid.state(Cell::new(c.row + dr, c.col + dc)) == CellState::Obstacle)
    }

    /// Free and clear of inflated obstacles, or Free and close to the robot
    /// (so a start cell hugging a wall can still be left).
    pub fn passable(&mut self, c: Cell) -> bool {
        let Some(i) = self.grid.bounds().index(c) else {
            return false;
        };
        if self.cache[i] == 0 {
            let ok = self.grid.state(c) == CellState::Free
                && (!self.near_obstacle(c)
                    || distance(self.grid.cell_center(c), self.relax_center) <= self.relax);
            self.cache[i] = if ok { 1 } else { 2 };
        }
        self.cache[i] == 1
    }

    /// Every cell crossed by the segment `a → b` is passable.
    pub fn line_of_sight(&mut self, a: Point2, b: Point2) -> bool {
        let len = distance(a, b);
        if len == 0.0 {
            return self.passable(self.grid.lattice_cell(a));
        }
        let dir = [(b[0] - a[0]) / len, (b[1] - a[1]) / len];
        self.grid
            .trace(a, dir, len)
            .into_iter()
            .all(|c| self.passable(c))
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Node {
    f: f64,
    g: f64,
    c: Cell,
}

impl Eq for Node {}

impl Ord for Node {
    fn cmp(&self, o: &Self) -> Ordering {
        o.f.total_cmp(&self.f)
            .then(self.g.total_cmp(&o.g))
            .then(o.c.cmp(&self.c))
    }
}

impl PartialOrd for Node {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

fn octile(a: Cell, b: Cell, res: f64) -> f64 {
    let dr = (a.row - b.row).abs() as f64;
    let dc = (a.col - b.col).abs() as f64;
    (dr.max(dc) + (std::f64::consts::SQRT_2 - 1.0) * dr.min(dc)) * res
}

/// A* over known-Free cells with inflated obstacles, 8-connected without
/// corner cutting. The path ends at the free cell nearest `target` (within
/// `approach_radius`) that is reachable, and is returned as cell centers
/// beginning with the start cell.
pub fn plan_path(
    grid: &OccupancyGrid,
    start: &Pose,
    target: Point2,
    params: &NavParams,
) -> Result<Vec<Point2>, PlanError> {
    let mut clear = Clearance::new(grid, params.inflation_radius, start.position(), params.start_relax);
    plan_with(&mut clear, start, target, params.approach_radius)
}

pub(crate) fn plan_with(
    clear: &mut Clearance<'_>,
    start: &Pose,
    target: Point2,
    approach_radius: f64,
) -> Result<Vec<Point2>, PlanError> {
    let grid = clear.grid;
    let res = grid.resolution();
    let s = grid.lattice_cell(start.position());
    if !grid.contains(s) {
        return Err(PlanError::StartOutside);
    }
    let tc = grid.lattice_cell(target);
    let reach = (approach_radius / res).ceil() as i32 + 1;
    let mut goals: Vec<(f64, Cell)> = Vec::new();
    for dr in -reach..=reach {
        for dc in -reach..=reach {
            let c = Cell::new(tc.row + dr, tc.col + dc);
            let d = distance(grid.cell_center(c), target);
            if d <= approach_radius && clear.passable(c) {
                goals.push((d, c));
            }
        }
    }
    if goals.is_empty() {
        return Err(PlanError::Unreachable);
    }
    goals.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    // the start cell is always a legal place to stand
    let start_ok = clear.passable(s) || grid.state(s) != CellState::Obstacle;
    if !start_ok {
        return Err(PlanError::Unreachable);
    }
    let goal = goals[0].1;

    let b = grid.bounds();
    let mut g = vec![f64::INFINITY; b.len()];
    let mut parent: Vec<u32> = vec![u32::MAX; b.len()];
    let mut closed = vec![false; b.len()];
    let si = b.index(s).expect("start inside");
    g[si] = 0.0;
    let mut open = BinaryHeap::new();
    open.push(Node { f: octile(s, goal, res), g: 0.0, c: s });
    let mut reached = None;
    while let Some(Node { g: gc, c, .. }) = open.pop() {
        let ci = b.index(c).expect("inside");
        if closed[ci] {
            continue;
        }
        closed[ci] = true;
        if c == goal {
            reached = Some(c);
            break;
        }
        for dr in -1..=1 {
            for dc in -1..=1 {
                if dr == 0 && dc == 0 {
                    continue;
                }
                let n = Cell::new(c.row + dr, c.col + dc);
                if !clear.passable(n) {
                    continue;
                }
                if dr != 0
                    && dc != 0
                    && !(clear.passable(Cell::new(c.row + dr, c.col)) && clear.passable(Cell::new(c.row, c.col + dc)))
                {
                    continue;
                }
                let ni = b.index(n).expect("passable cells are stored");
                let step = if dr != 0 && dc != 0 { std::f64::consts::SQRT_2 * res } else { res };
                let ng = gc + step;
                if ng < g[ni] {
                    g[ni] = ng;
                    parent[ni] = ci as u32;
                    open.push(Node { f: ng + octile(n, goal, res), g: ng, c: n });
                }
            }
        }
    }
    let end = match reached {
        Some(c) => c,
        None => {
            // search exhausted: every reachable cell is closed
            goals
                .iter()
                .map(|(_, c)| *c)
                .find(|c| closed[b.index(*c).expect("goal cells stored")])
                .ok_or(PlanError::Unreachable)?
        }
    };
    let mut cells = vec![end];
    let mut k = b.index(end).expect("inside");
    while parent[k] != u32::MAX {
        k = parent[k] as usize;
        cells.push(b.cell_at(k));
    }
    cells.reverse();
    Ok(cells.into_iter().map(|c| grid.cell_center(c)).collect())
}

pub fn path_length(path: &[Point2]) -> f64 {
    path.windows(2).map(|w| distance(w[0], w[1])).sum()
}

/// Drop intermediate waypoints that are visible from an earlier one.
pub fn simplify_path(clear: &mut Clearance<'_>, path: &[Point2]) -> Vec<Point2> {
    if path.len() <= 2 {
        return path.to_vec();
    }
    let mut out = vec![path[0]];
    let mut anchor = 0;
    while anchor < path.len() - 1 {
        let mut next = anchor + 1;
        for j in (anchor + 2..path.len()).rev() {
            if clear.line_of_sight(path[anchor], path[j]) {
                next = j;
                break;
            }
        }
        out.push(path[next]);
        anchor = next;
    }
    out
}

/// Rotate-then-move controller. Pops waypoints within the arrival radius and
/// returns `None` once the queue is empty.
pub fn follow_path(pose: &Pose, path: &mut VecDeque<Point2>, params: &NavParams) -> Option<Action> {
    while let Some(w) = path.front() {
        if distance(*w, pose.position()) <= params.waypoint_radius {
            path.pop_front();
        } else {
            break;
        }
    }
    let w = path.front()?;
    let bearing = (w[1] - pose.y).atan2(w[0] - pose.x);
    let err = wrap_pi(bearing - pose.heading);
    Some(if err.abs() <= params.heading_tolerance_deg.to_radians() {
        Action::MoveForward
    } else if err > 0.0 {
        Action::TurnLeft
    } else {
        Action::TurnRight
    })
}

/// Uniformly chosen reachable passable cell within `random_walk_radius`,
/// doubling the radius a few times when nothing qualifies.
pub fn random_walk_target<R: Rng + ?Sized>(
    grid: &OccupancyGrid,
    pose: &Pose,
    rng: &mut R,
    params: &NavParams,
) -> Option<Point2> {
    let mut clear = Clearance::new(grid, params.inflation_radius, pose.position(), params.start_relax);
    let s = grid.lattice_cell(pose.position());
    if !grid.contains(s) {
        return None;
    }
    let b = grid.bounds();
    let mut seen = vec![false; b.len()];
    seen[b.index(s).expect("inside")] = true;
    let mut q = VecDeque::from([s]);
    let mut reach = vec![s];
    while let Some(c) = q.pop_front() {
        for n in c.neighbors4() {
            if let Some(i) = b.index(n) {
                if !seen[i] && clear.passable(n) {
                    seen[i] = true;
                    reach.push(n);
                    q.push_back(n);
                }
            }
        }
    }
    reach.sort();
    let here = pose.position();
    let mut radius = params.random_walk_radius;
    for _ in 0..4 {
        let pool: Vec<Point2> = reach
            .iter()
            .map(|c| grid.cell_center(*c))
            .filter(|p| {
                let d = distance(*p, here);
                d <= radius && d > params.waypoint_radius
            })
            .collect();
        if !pool.is_empty() {
            return Some(pool[rng.gen_range(0..pool.len())]);
        }
        radius *= 2.0;
    }
    // degenerate support: only the robot's own cell
    (reach.len() == 1 && clear.passable(s)).then(|| grid.cell_center(s))
}
