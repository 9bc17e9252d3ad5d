//! Top-down occupancy mapping.
//!
//! The grid lives on a fixed world lattice: cell `(row, col)` covers
//! `[origin + col * res, origin + (col + 1) * res)` along x and the same along
//! y for rows. Storage bounds can grow (by doubling) without ever renumbering
//! cells, so indices held by other components stay valid.

mod cluster;
mod export;

pub use cluster::{cluster_frontiers, dbscan, FrontierWaypoint};
pub use export::{GridDump, RleRun};

use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use thiserror::Error;

/// World-frame planar point in meters.
pub type Point2 = [f64; 2];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("pose is not finite: {0:?}")]
    InvalidPose(Pose),
    #[error("cell {0:?} is outside the grid bounds")]
    OutOfBounds(Cell),
    #[error("point ({0}, {1}) is outside the grid bounds")]
    PointOutOfBounds(f64, f64),
    #[error("invalid grid geometry: {0}")]
    InvalidGeometry(String),
    #[error("invalid depth scan: {0}")]
    InvalidScan(String),
    #[error("malformed grid dump: {0}")]
    MalformedDump(String),
}

/// Normalize an angle into `[0, 2π)`.
pub fn normalize_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    // rem_euclid can return TAU for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Wrap an angle into `(-π, π]`.
pub fn wrap_pi(a: f64) -> f64 {
    let r = normalize_angle(a);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

pub fn distance(a: Point2, b: Point2) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Agent pose. `heading` is kept in `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub floor_height: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64, floor_height: f64) -> Self {
        Self {
            x,
            y,
            heading: if heading.is_finite() {
                normalize_angle(heading)
            } else {
                heading
            },
            floor_height,
        }
    }

    pub fn position(&self) -> Point2 {
        [self.x, self.y]
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite()
            && self.y.is_finite()
            && self.heading.is_finite()
            && self.floor_height.is_finite()
    }

    pub fn rotated(&self, delta: f64) -> Self {
        Self::new(self.x, self.y, self.heading + delta, self.floor_height)
    }
}

/// One horizontal row of a depth image, expressed as rays.
///
/// `ray_heights` holds the height above the floor of each return point; it is
/// ignored for rays at max range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthScan {
    pub ray_bearings: Vec<f64>,
    pub ray_ranges: Vec<f64>,
    pub ray_heights: Vec<f64>,
    pub max_range: f64,
    pub fov: f64,
}

impl DepthScan {
    /// Evenly spaced bearings spanning `fov`, every ray at max range.
    pub fn uniform(fov: f64, rays: usize, max_range: f64) -> Self {
        let ray_bearings = if rays == 1 {
            vec![0.0]
        } else {
            (0..rays)
                .map(|i| -fov / 2.0 + fov * i as f64 / (rays - 1) as f64)
                .collect()
        };
        Self {
            ray_ranges: vec![max_range; rays],
            ray_heights: vec![0.0; rays],
            ray_bearings,
            max_range,
            fov,
        }
    }

    pub fn len(&self) -> usize {
        self.ray_bearings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ray_bearings.is_empty()
    }

    /// A range at or beyond `max_range` (or non-finite) means "no return".
    pub fn is_max_range(&self, i: usize) -> bool {
        let r = self.ray_ranges[i];
        !r.is_finite() || r >= self.max_range
    }

    pub fn validate(&self) -> Result<(), GridError> {
        let n = self.ray_bearings.len();
        if self.ray_ranges.len() != n || self.ray_heights.len() != n {
            return Err(GridError::InvalidScan("ray arrays differ in length".into()));
        }
        if !(self.max_range > 0.0) {
            return Err(GridError::InvalidScan("max_range must be positive".into()));
        }
        let half = self.fov / 2.0 + 1e-9;
        for (i, b) in self.ray_bearings.iter().enumerate() {
            if b.abs() > half {
                return Err(GridError::InvalidScan(format!("bearing {b} outside fov")));
            }
            if i > 0 && *b <= self.ray_bearings[i - 1] {
                return Err(GridError::InvalidScan("bearings not strictly increasing".into()));
            }
        }
        for r in &self.ray_ranges {
            if !(*r > 0.0) {
                return Err(GridError::InvalidScan(format!("non-positive range {r}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellState {
    Unknown,
    Free,
    Obstacle,
}

/// Lattice cell index. Field order makes the derived `Ord` row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub row: i32,
    pub col: i32,
}

impl Cell {
    pub const fn new(row: i32, col: i32) -> Self {
        Self { row, col }
    }

    pub fn neighbors4(self) -> [Cell; 4] {
        [
            Cell::new(self.row - 1, self.col),
            Cell::new(self.row, self.col - 1),
            Cell::new(self.row, self.col + 1),
            Cell::new(self.row + 1, self.col),
        ]
    }

    pub fn dist(self, other: Cell) -> f64 {
        let dr = (self.row - other.row) as f64;
        let dc = (self.col - other.col) as f64;
        dr.hypot(dc)
    }
}

/// Inclusive-exclusive storage window of the lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridBounds {
    pub min_row: i32,
    pub min_col: i32,
    pub height: usize,
    pub width: usize,
}

impl GridBounds {
    pub fn contains(&self, c: Cell) -> bool {
        c.row >= self.min_row
            && c.col >= self.min_col
            && ((c.row - self.min_row) as usize) < self.height
            && ((c.col - self.min_col) as usize) < self.width
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, c: Cell) -> Option<usize> {
        self.contains(c).then(|| {
            (c.row - self.min_row) as usize * self.width + (c.col - self.min_col) as usize
        })
    }

    pub fn cell_at(&self, idx: usize) -> Cell {
        Cell::new(
            self.min_row + (idx / self.width) as i32,
            self.min_col + (idx % self.width) as i32,
        )
    }

    pub fn max_row(&self) -> i32 {
        self.min_row + self.height as i32
    }

    pub fn max_col(&self) -> i32 {
        self.min_col + self.width as i32
    }

    /// Row-major iteration over every stored cell.
    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.len()).map(move |i| self.cell_at(i))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    origin: Point2,
    resolution: f64,
    bounds: GridBounds,
    cells: Vec<CellState>,
}

impl OccupancyGrid {
    /// An all-Unknown grid whose cell `(0, 0)` has its lower-left corner at `origin`.
    pub fn new(origin: Point2, resolution: f64, width: usize, height: usize) -> Result<Self, GridError> {
        if !(resolution > 0.0) || !resolution.is_finite() {
            return Err(GridError::InvalidGeometry(format!("resolution {resolution}")));
        }
        if !origin[0].is_finite() || !origin[1].is_finite() {
            return Err(GridError::InvalidGeometry("non-finite origin".into()));
        }
        let bounds = GridBounds {
            min_row: 0,
            min_col: 0,
            height,
            width,
        };
        Ok(Self {
            origin,
            resolution,
            bounds,
            cells: vec![CellState::Unknown; bounds.len()],
        })
    }

    /// A grid covering the axis-aligned box `[min, max]` with `margin` meters of slack.
    pub fn covering(min: Point2, max: Point2, margin: f64, resolution: f64) -> Result<Self, GridError> {
        let origin = [min[0] - margin, min[1] - margin];
        let width = ((max[0] - min[0] + 2.0 * margin) / resolution).ceil().max(1.0) as usize;
        let height = ((max[1] - min[1] + 2.0 * margin) / resolution).ceil().max(1.0) as usize;
        Self::new(origin, resolution, width, height)
    }

    pub(crate) fn from_parts(
        origin: Point2,
        resolution: f64,
        bounds: GridBounds,
        cells: Vec<CellState>,
    ) -> Result<Self, GridError> {
        let mut g = Self::new(origin, resolution, 0, 0)?;
        if cells.len() != bounds.len() {
            return Err(GridError::InvalidGeometry("cell count mismatch".into()));
        }
        g.bounds = bounds;
        g.cells = cells;
        Ok(g)
    }

    pub fn origin(&self) -> Point2 {
        self.origin
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn bounds(&self) -> GridBounds {
        self.bounds
    }

    pub fn width(&self) -> usize {
        self.bounds.width
    }

    pub fn height(&self) -> usize {
        self.bounds.height
    }

    /// Lattice cell containing `p`, whether or not it is stored.
    pub fn lattice_cell(&self, p: Point2) -> Cell {
        Cell::new(
            ((p[1] - self.origin[1]) / self.resolution).floor() as i32,
            ((p[0] - self.origin[0]) / self.resolution).floor() as i32,
        )
    }

    pub fn cell_center(&self, c: Cell) -> Point2 {
        [
            self.origin[0] + (c.col as f64 + 0.5) * self.resolution,
            self.origin[1] + (c.row as f64 + 0.5) * self.resolution,
        ]
    }

    pub fn world_to_cell(&self, p: Point2) -> Result<Cell, GridError> {
        let c = self.lattice_cell(p);
        if self.bounds.contains(c) {
            Ok(c)
        } else {
            Err(GridError::PointOutOfBounds(p[0], p[1]))
        }
    }

    pub fn cell_to_world(&self, c: Cell) -> Result<Point2, GridError> {
        if self.bounds.contains(c) {
            Ok(self.cell_center(c))
        } else {
            Err(GridError::OutOfBounds(c))
        }
    }

    pub fn contains(&self, c: Cell) -> bool {
        self.bounds.contains(c)
    }

    /// State of a cell; anything outside storage has never been observed.
    pub fn state(&self, c: Cell) -> CellState {
        match self.bounds.index(c) {
            Some(i) => self.cells[i],
            None => CellState::Unknown,
        }
    }

    pub fn set(&mut self, c: Cell, s: CellState) -> Result<(), GridError> {
        let i = self.bounds.index(c).ok_or(GridError::OutOfBounds(c))?;
        self.cells[i] = s;
        Ok(())
    }

    pub fn count(&self, s: CellState) -> usize {
        self.cells.iter().filter(|&&c| c == s).count()
    }

    /// Row-major iterator over `(cell, state)`.
    pub fn iter(&self) -> impl Iterator<Item = (Cell, CellState)> + '_ {
        self.cells
            .iter()
            .enumerate()
            .map(move |(i, s)| (self.bounds.cell_at(i), *s))
    }

    pub(crate) fn raw_cells(&self) -> &[CellState] {
        &self.cells
    }

    /// Grow storage (doubling each axis as needed) until the box `[min, max]` fits.
    /// Returns true if the grid grew.
    pub fn ensure_contains(&mut self, min: Point2, max: Point2) -> bool {
        let lo = self.lattice_cell(min);
        let hi = self.lattice_cell(max);
        let b = self.bounds;
        if b.contains(lo) && b.contains(hi) {
            return false;
        }
        let grow = |min_i: i32, len: usize, need_lo: i32, need_hi: i32| -> (i32, usize) {
            let (mut lo_i, mut n) = (min_i, len.max(1));
            // each pass doubles the axis, extending toward the side that needs room
            while need_lo < lo_i {
                lo_i -= n as i32;
                n *= 2;
            }
            while need_hi >= lo_i + n as i32 {
                n *= 2;
            }
            (lo_i, n)
        };
        let (min_row, height) = grow(b.min_row, b.height, lo.row, hi.row);
        let (min_col, width) = grow(b.min_col, b.width, lo.col, hi.col);
        let nb = GridBounds {
            min_row,
            min_col,
            height,
            width,
        };
        let mut cells = vec![CellState::Unknown; nb.len()];
        for (i, s) in self.cells.iter().enumerate() {
            let c = b.cell_at(i);
            cells[nb.index(c).expect("grown bounds contain old bounds")] = *s;
        }
        self.bounds = nb;
        self.cells = cells;
        true
    }

    /// Fold one depth scan taken at `pose` into the map.
    ///
    /// Cells along each ray before the return become Free. The return cell
    /// becomes Obstacle when the ray hit something below `max_range` whose
    /// height lies inside `height_band`; returns outside the band are marked
    /// Free. Obstacle cells are never cleared.
    pub fn integrate_observation(
        &mut self,
        pose: &Pose,
        scan: &DepthScan,
        height_band: [f64; 2],
    ) -> Result<(), GridError> {
        if !pose.is_finite() {
            return Err(GridError::InvalidPose(*pose));
        }
        if scan.is_empty() {
            return Ok(());
        }
        scan.validate()?;
        let reach = scan.max_range + self.resolution;
        self.ensure_contains(
            [pose.x - reach, pose.y - reach],
            [pose.x + reach, pose.y + reach],
        );
        let start = pose.position();
        for i in 0..scan.len() {
            let angle = pose.heading + scan.ray_bearings[i];
            let dir = [angle.cos(), angle.sin()];
            let max_hit = scan.is_max_range(i);
            let range = if max_hit { scan.max_range } else { scan.ray_ranges[i] };
            let in_band =
                scan.ray_heights[i] >= height_band[0] && scan.ray_heights[i] <= height_band[1];
            let mark_obstacle = !max_hit && in_band;
            // step back a hair so a return exactly on a cell edge lands in the near cell
            let end_t = (range - 1e-9 * self.resolution).max(0.0);
            let cells = self.trace(start, dir, end_t);
            let last = cells.len().saturating_sub(1);
            for (k, c) in cells.into_iter().enumerate() {
                let idx = self.bounds.index(c).expect("grid grown to fit the scan");
                let cur = self.cells[idx];
                if k == last && mark_obstacle {
                    self.cells[idx] = CellState::Obstacle;
                } else if cur == CellState::Unknown {
                    self.cells[idx] = CellState::Free;
                }
            }
        }
        Ok(())
    }

    /// Lattice cells crossed by the segment `start + t * dir`, `t ∈ [0, len]`,
    /// in order (Amanatides–Woo traversal).
    pub fn trace(&self, start: Point2, dir: Point2, len: f64) -> Vec<Cell> {
        trace_lattice(self.origin, self.resolution, start, dir, len)
    }

    /// Free cells with at least one Unknown 4-neighbor, row-major.
    pub fn detect_frontiers(&self) -> Vec<Cell> {
        let b = self.bounds;
        let mut out = Vec::new();
        for (i, s) in self.cells.iter().enumerate() {
            if *s != CellState::Free {
                continue;
            }
            let c = b.cell_at(i);
            if c.neighbors4()
                .iter()
                .any(|n| self.state(*n) == CellState::Unknown)
            {
                out.push(c);
            }
        }
        out
    }

    pub fn is_frontier(&self, c: Cell) -> bool {
        self.state(c) == CellState::Free
            && c.neighbors4()
                .iter()
                .any(|n| self.state(*n) == CellState::Unknown)
    }
}

/// Cells of a regular lattice visited by a ray segment.
pub fn trace_lattice(origin: Point2, res: f64, start: Point2, dir: Point2, len: f64) -> Vec<Cell> {
    let fx = (start[0] - origin[0]) / res;
    let fy = (start[1] - origin[1]) / res;
    let mut col = fx.floor() as i32;
    let mut row = fy.floor() as i32;
    let end = [fx + dir[0] * len / res, fy + dir[1] * len / res];
    let end_col = end[0].floor() as i32;
    let end_row = end[1].floor() as i32;
    let step_c = if dir[0] > 0.0 { 1 } else { -1 };
    let step_r = if dir[1] > 0.0 { 1 } else { -1 };
    let inv = |d: f64| if d.abs() < 1e-15 { f64::INFINITY } else { 1.0 / d.abs() };
    let (dtx, dty) = (inv(dir[0]) , inv(dir[1]));
    let mut tmax_x = if dir[0] > 0.0 {
        (col as f64 + 1.0 - fx) * dtx
    } else {
        (fx - col as f64) * dtx
    };
    let mut tmax_y = if dir[1] > 0.0 {
        (row as f64 + 1.0 - fy) * dty
    } else {
        (fy - row as f64) * dty
    };
    let t_end = len / res;
    let mut out = vec![Cell::new(row, col)];
    let guard = (end_col - col).unsigned_abs() + (end_row - row).unsigned_abs() + 2;
    for _ in 0..guard {
        if col == end_col && row == end_row {
            break;
        }
        if tmax_x < tmax_y {
            if tmax_x > t_end {
                break;
            }
            col += step_c;
            tmax_x += dtx;
        } else {
            if tmax_y > t_end {
                break;
            }
            row += step_r;
            tmax_y += dty;
        }
        out.push(Cell::new(row, col));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn strip() -> OccupancyGrid {
        OccupancyGrid::new([0.0, 0.0], 0.1, 20, 1).unwrap()
    }

    fn single_ray(range: f64, height: f64) -> DepthScan {
        DepthScan {
            ray_bearings: vec![0.0],
            ray_ranges: vec![range],
            ray_heights: vec![height],
            max_range: 1.5,
            fov: 0.0,
        }
    }

    #[test]
    fn single_ray_marks_nine_free_then_obstacle() {
        let mut g = strip();
        let pose = Pose::new(0.0, 0.05, 0.0, 0.0);
        g.integrate_observation(&pose, &single_ray(1.0, 0.5), [0.2, 1.5])
            .unwrap();
        for col in 0..9 {
            assert_eq!(g.state(Cell::new(0, col)), CellState::Free, "col {col}");
        }
        assert_eq!(g.state(Cell::new(0, 9)), CellState::Obstacle);
        assert_eq!(g.state(Cell::new(0, 10)), CellState::Unknown);
        assert_eq!(g.count(CellState::Obstacle), 1);
    }

    #[test]
    fn out_of_band_return_is_free_through() {
        let mut g = strip();
        let pose = Pose::new(0.0, 0.05, 0.0, 0.0);
        g.integrate_observation(&pose, &single_ray(1.0, 0.05), [0.2, 1.5])
            .unwrap();
        assert_eq!(g.count(CellState::Obstacle), 0);
        assert_eq!(g.state(Cell::new(0, 9)), CellState::Free);
    }

    #[test]
    fn max_range_scan_leaves_no_obstacles() {
        let mut g = OccupancyGrid::new([-6.0, -6.0], 0.1, 120, 120).unwrap();
        let scan = DepthScan::uniform(std::f64::consts::FRAC_PI_2, 181, 5.0);
        g.integrate_observation(&Pose::new(0.0, 0.0, 0.0, 0.0), &scan, [0.2, 1.5])
            .unwrap();
        assert_eq!(g.count(CellState::Obstacle), 0);
        assert!(g.count(CellState::Free) > 1000);
        // nothing behind the agent
        assert_eq!(g.state(g.lattice_cell([-1.0, 0.0])), CellState::Unknown);
    }

    #[test]
    fn non_finite_pose_rejected_and_empty_scan_noop() {
        let mut g = strip();
        let bad = Pose {
            x: f64::NAN,
            y: 0.0,
            heading: 0.0,
            floor_height: 0.0,
        };
        assert!(matches!(
            g.integrate_observation(&bad, &single_ray(1.0, 0.5), [0.2, 1.5]),
            Err(GridError::InvalidPose(_))
        ));
        let before = g.clone();
        let empty = DepthScan {
            ray_bearings: vec![],
            ray_ranges: vec![],
            ray_heights: vec![],
            max_range: 5.0,
            fov: 1.0,
        };
        g.integrate_observation(&Pose::new(0.0, 0.05, 0.0, 0.0), &empty, [0.2, 1.5])
            .unwrap();
        assert_eq!(g, before);
    }

    #[test]
    fn obstacles_are_sticky() {
        let mut g = strip();
        let pose = Pose::new(0.0, 0.05, 0.0, 0.0);
        g.integrate_observation(&pose, &single_ray(0.5, 0.5), [0.2, 1.5])
            .unwrap();
        assert_eq!(g.state(Cell::new(0, 4)), CellState::Obstacle);
        g.integrate_observation(&pose, &single_ray(1.0, 0.5), [0.2, 1.5])
            .unwrap();
        assert_eq!(g.state(Cell::new(0, 4)), CellState::Obstacle);
    }

    #[test]
    fn grid_grows_without_renumbering() {
        let mut g = OccupancyGrid::new([0.0, 0.0], 0.1, 10, 10).unwrap();
        g.set(Cell::new(3, 4), CellState::Obstacle).unwrap();
        g.integrate_observation(
            &Pose::new(0.5, 0.5, std::f64::consts::PI, 0.0),
            &single_ray(1.2, 0.5),
            [0.2, 1.5],
        )
        .unwrap();
        assert!(g.width() >= 20);
        assert_eq!(g.state(Cell::new(3, 4)), CellState::Obstacle);
        assert!(g.bounds().min_col < 0);
        assert_eq!(g.state(g.lattice_cell([-0.65, 0.5])), CellState::Obstacle);
    }

    #[test]
    fn world_cell_conversions() {
        let g = OccupancyGrid::new([0.0, 0.0], 0.1, 10, 10).unwrap();
        assert_eq!(g.world_to_cell([0.05, 0.05]).unwrap(), Cell::new(0, 0));
        let w = g.cell_to_world(Cell::new(0, 0)).unwrap();
        assert_relative_eq!(w[0], 0.05);
        assert_relative_eq!(w[1], 0.05);
        assert!(matches!(
            g.cell_to_world(Cell::new(10, 0)),
            Err(GridError::OutOfBounds(_))
        ));
        assert!(g.world_to_cell([-0.01, 0.5]).is_err());
        assert!(OccupancyGrid::new([0.0, 0.0], 0.0, 1, 1).is_err());
    }

    #[test]
    fn frontier_examples() {
        let g = OccupancyGrid::new([0.0, 0.0], 0.1, 3, 3).unwrap();
        assert!(g.detect_frontiers().is_empty());

        let mut g = OccupancyGrid::new([0.0, 0.0], 0.1, 3, 3).unwrap();
        g.set(Cell::new(1, 1), CellState::Free).unwrap();
        assert_eq!(g.detect_frontiers(), vec![Cell::new(1, 1)]);

        // closed room: obstacle ring around free interior
        let mut g = OccupancyGrid::new([0.0, 0.0], 0.1, 5, 5).unwrap();
        for c in g.bounds().cells().collect::<Vec<_>>() {
            let ring = c.row == 0 || c.col == 0 || c.row == 4 || c.col == 4;
            g.set(c, if ring { CellState::Obstacle } else { CellState::Free })
                .unwrap();
        }
        assert!(g.detect_frontiers().is_empty());
    }

    #[test]
    fn angles_normalize() {
        assert_relative_eq!(normalize_angle(-0.5), TAU - 0.5);
        assert_relative_eq!(normalize_angle(TAU + 0.25), 0.25, epsilon = 1e-12);
        assert_relative_eq!(wrap_pi(1.5 * PI), -0.5 * PI, epsilon = 1e-12);
        assert!(normalize_angle(-1e-20) < TAU);
    }
}
