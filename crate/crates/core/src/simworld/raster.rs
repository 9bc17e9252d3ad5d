use super::{Rect, Scene, WALL_THICKNESS};
use crate::gridmap::Point2;
use std::collections::VecDeque;

/// Fine raster step for collision, ray casting and geodesics.
pub const RASTER_RES: f64 = 0.05;
pub const AGENT_RADIUS: f64 = 0.18;

pub const FREE: u16 = 0;
pub const WALL: u16 = 1;

/// Rasterized scene: `0` free, `1` wall, `2 + i` object `i`. `blocked`
/// marks cells whose center lies within the robot radius of an occupied cell.
#[derive(Debug, Clone)]
pub struct Raster {
    pub origin: Point2,
    pub width: usize,
    pub height: usize,
    pub cells: Vec<u16>,
    pub blocked: Vec<bool>,
}

impl Raster {
    pub fn build(scene: &Scene) -> Self {
        Self::build_with(scene, AGENT_RADIUS)
    }

    pub fn build_with(scene: &Scene, radius: f64) -> Self {
        let half = WALL_THICKNESS / 2.0;
        let origin = [-half, -half];
        let width = ((scene.extent[0] + WALL_THICKNESS) / RASTER_RES).round() as usize;
        let height = ((scene.extent[1] + WALL_THICKNESS) / RASTER_RES).round() as usize;
        let mut r = Self {
            origin,
            width,
            height,
            cells: vec![FREE; width * height],
            blocked: Vec::new(),
        };
        for w in &scene.walls {
            let ks: Vec<usize> = r.cells_in_rect(*w).collect();
            for k in ks {
                r.cells[k] = WALL;
            }
        }
        for o in &scene.objects {
            let ks: Vec<usize> = r.cells_within(o.position, o.radius()).collect();
            for k in ks {
                r.cells[k] = 2 + o.id as u16;
            }
        }
        r.inflate(radius);
        r
    }

    fn inflate(&mut self, radius: f64) {
        let reach = (radius / RASTER_RES).ceil() as i64;
        let mut offsets = Vec::new();
        for dr in -reach..=reach {
            for dc in -reach..=reach {
                let d = ((dr * dr + dc * dc) as f64).sqrt() * RASTER_RES;
                if d <= radius + 1e-9 {
                    offsets.push((dr, dc));
                }
            }
        }
        let (w, h) = (self.width as i64, self.height as i64);
        let mut blocked = vec![false; self.cells.len()];
        for (k, v) in self.cells.iter().enumerate() {
            if *v == FREE {
                continue;
            }
            let (row, col) = ((k as i64) / w, (k as i64) % w);
            for (dr, dc) in &offsets {
                let (r2, c2) = (row + dr, col + dc);
                if r2 >= 0 && r2 < h && c2 >= 0 && c2 < w {
                    blocked[(r2 * w + c2) as usize] = true;
                }
            }
        }
        self.blocked = blocked;
    }

    pub fn index(&self, p: Point2) -> Option<usize> {
        let c = ((p[0] - self.origin[0]) / RASTER_RES).floor();
        let r = ((p[1] - self.origin[1]) / RASTER_RES).floor();
        if c < 0.0 || r < 0.0 || c >= self.width as f64 || r >= self.height as f64 {
            return None;
        }
        Some(r as usize * self.width + c as usize)
    }

    pub fn center(&self, k: usize) -> Point2 {
        let (r, c) = (k / self.width, k % self.width);
        [
            self.origin[0] + (c as f64 + 0.5) * RASTER_RES,
            self.origin[1] + (r as f64 + 0.5) * RASTER_RES,
        ]
    }

    pub fn value(&self, p: Point2) -> u16 {
        self.index(p).map_or(WALL, |k| self.cells[k])
    }

    /// The robot can stand at `p`.
    pub fn is_open(&self, p: Point2) -> bool {
        self.index(p).is_some_and(|k| !self.blocked[k])
    }

    /// Open cell nearest to `p` (breadth-first over the raster).
    pub fn nearest_open(&self, p: Point2) -> Option<usize> {
        let start = self.index(p)?;
        let mut seen = vec![false; self.cells.len()];
        let mut q = VecDeque::from([start]);
        seen[start] = true;
        while let Some(k) = q.pop_front() {
            if !self.blocked[k] {
                return Some(k);
            }
            for n in self.neighbors4(k) {
                if !seen[n] {
                    seen[n] = true;
                    q.push_back(n);
                }
            }
        }
        None
    }

    pub fn neighbors4(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        let (r, c) = (k / self.width, k % self.width);
        let w = self.width;
        [
            (r > 0).then(|| k - w),
            (r + 1 < self.height).then(|| k + w),
            (c > 0).then(|| k - 1),
            (c + 1 < w).then(|| k + 1),
        ]
        .into_iter()
        .flatten()
    }

    /// Open cells 4-connected to `start`.
    pub fn flood_fill(&self, start: usize) -> Vec<bool> {
        let mut reach = vec![false; self.cells.len()];
        if self.blocked[start] {
            return reach;
        }
        reach[start] = true;
        let mut q = VecDeque::from([start]);
        while let Some(k) = q.pop_front() {
            for n in self.neighbors4(k) {
                if !reach[n] && !self.blocked[n] {
                    reach[n] = true;
                    q.push_back(n);
                }
            }
        }
        reach
    }

    /// Indices of cells whose centers lie strictly inside `rect`.
    pub fn cells_in_rect(&self, rect: Rect) -> impl Iterator<Item = usize> + '_ {
        let lo_c = (((rect[0] - self.origin[0]) / RASTER_RES - 0.5).floor() + 1.0).max(0.0) as usize;
        let hi_c = (((rect[2] - self.origin[0]) / RASTER_RES - 0.5).ceil() - 1.0).min(self.width as f64 - 1.0);
        let lo_r = (((rect[1] - self.origin[1]) / RASTER_RES - 0.5).floor() + 1.0).max(0.0) as usize;
        let hi_r = (((rect[3] - self.origin[1]) / RASTER_RES - 0.5).ceil() - 1.0).min(self.height as f64 - 1.0);
        let (hi_c, hi_r) = (hi_c as i64, hi_r as i64);
        let w = self.width;
        (lo_r as i64..=hi_r)
            .flat_map(move |r| (lo_c as i64..=hi_c).map(move |c| r as usize * w + c as usize))
    }

    /// Indices of cells whose centers lie within `radius` of `p`.
    pub fn cells_within(&self, p: Point2, radius: f64) -> impl Iterator<Item = usize> + '_ {
        let rect = [p[0] - radius - RASTER_RES, p[1] - radius - RASTER_RES, p[0] + radius + RASTER_RES, p[1] + radius + RASTER_RES];
        self.cells_in_rect(rect).filter(move |k| {
            let c = self.center(*k);
            (c[0] - p[0]).hypot(c[1] - p[1]) <= radius
        })
    }

    /// March a ray from `p` along `angle`. Returns the range to the first
    /// occupied cell (slightly past its boundary, so the return point lies
    /// inside it) and that cell's value, or `(max_range, 0)` without a hit.
    pub fn cast(&self, p: Point2, angle: f64, max_range: f64) -> (f64, u16) {
        let dir = [angle.cos(), angle.sin()];
        let fx = (p[0] - self.origin[0]) / RASTER_RES;
        let fy = (p[1] - self.origin[1]) / RASTER_RES;
        let mut col = fx.floor() as i64;
        let mut row = fy.floor() as i64;
        let step_c: i64 = if dir[0] > 0.0 { 1 } else { -1 };
        let step_r: i64 = if dir[1] > 0.0 { 1 } else { -1 };
        let inv = |d: f64| if d.abs() < 1e-15 { f64::INFINITY } else { RASTER_RES / d.abs() };
        let (dt_c, dt_r) = (inv(dir[0]), inv(dir[1]));
        let frac = |f: f64, s: i64| if s > 0 { f.floor() + 1.0 - f } else { f - f.floor() };
        let mut t_c = if dir[0].abs() < 1e-15 { f64::INFINITY } else { frac(fx, step_c) * dt_c };
        let mut t_r = if dir[1].abs() < 1e-15 { f64::INFINITY } else { frac(fy, step_r) * dt_r };
        let mut t_enter = 0.0;
        let (w, h) = (self.width as i64, self.height as i64);
        loop {
            if t_enter >= max_range {
                return (max_range, FREE);
            }
            let v = if col < 0 || row < 0 || col >= w || row >= h {
                WALL
            } else {
                self.cells[(row * w + col) as usize]
            };
            if v != FREE {
                let r = t_enter + 0.01;
                return if r < max_range { (r, v) } else { (max_range, FREE) };
            }
            if t_c < t_r {
                t_enter = t_c;
                t_c += dt_c;
                col += step_c;
            } else {
                t_enter = t_r;
                t_r += dt_r;
                row += step_r;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn boxed() -> Raster {
        // 2 m × 2 m room with walls on the border
        let w = 2.0 + WALL_THICKNESS;
        let h = 0.05;
        let scene = Scene {
            version: 1,
            id: "box".into(),
            floor_height: 0.0,
            extent: [2.0, 2.0],
            rooms: vec![],
            walls: vec![
                [-h, -h, w, h],
                [-h, 2.0 - h, w, 2.0 + h],
                [-h, -h, h, w],
                [2.0 - h, -h, 2.0 + h, w],
            ],
            objects: vec![],
            rng_seed: 0,
        };
        Raster::build(&scene)
    }

    #[test]
    fn ray_hits_wall_at_expected_range() {
        let r = boxed();
        let (d, v) = r.cast([1.0, 1.0], 0.0, 5.0);
        assert_eq!(v, WALL);
        // inner wall face at x = 1.95
        assert!((d - 0.96).abs() < 1e-9, "{d}");
        let (d, v) = r.cast([1.0, 1.0], 0.0, 0.5);
        assert_eq!((d, v), (0.5, FREE));
    }

    #[test]
    fn inflation_blocks_near_walls() {
        let r = boxed();
        assert!(r.is_open([1.0, 1.0]));
        assert!(!r.is_open([0.1, 1.0]));
        assert!(r.is_open([0.25, 1.0]));
        assert!(!r.is_open([-1.0, 1.0]));
    }
}
