use super::raster::{Raster, RASTER_RES};
use crate::gridmap::Point2;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[derive(Clone, Copy, PartialEq)]
struct Node {
    f: f64,
    k: usize,
}

impl Eq for Node {}

impl Ord for Node {
    fn cmp(&self, o: &Self) -> Ordering {
        // min-heap on f, ties by index for determinism
        o.f.total_cmp(&self.f).then(o.k.cmp(&self.k))
    }
}

impl PartialOrd for Node {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

const DIAG: f64 = std::f64::consts::SQRT_2 * RASTER_RES;

/// 8-connected open-cell moves; diagonals may not cut blocked corners.
fn moves(r: &Raster, k: usize, mut f: impl FnMut(usize, f64)) {
    let (w, h) = (r.width as i64, r.height as i64);
    let (row, col) = ((k as i64) / w, (k as i64) % w);
    let open = |rr: i64, cc: i64| rr >= 0 && cc >= 0 && rr < h && cc < w && !r.blocked[(rr * w + cc) as usize];
    for (dr, dc) in [(-1, 0), (1, 0), (0, -1), (0, 1)] {
        if open(row + dr, col + dc) {
            f(((row + dr) * w + col + dc) as usize, RASTER_RES);
        }
    }
    for (dr, dc) in [(-1, -1), (-1, 1), (1, -1), (1, 1)] {
        if open(row + dr, col + dc) && open(row + dr, col) && open(row, col + dc) {
            f(((row + dr) * w + col + dc) as usize, DIAG);
        }
    }
}

fn in_goal_region(c: Point2, goals: &[Point2], radius: f64) -> bool {
    goals.iter().any(|g| (c[0] - g[0]).hypot(c[1] - g[1]) <= radius)
}

/// Shortest collision-free path length from `start` to any point within
/// `radius` of one of `goals`, by A* on the fine raster. `None` if no goal
/// region cell is reachable.
pub fn geodesic_shortest_path(r: &Raster, start: Point2, goals: &[Point2], radius: f64) -> Option<f64> {
    if in_goal_region(start, goals, radius) {
        return Some(0.0);
    }
    let s = r.index(start).filter(|k| !r.blocked[*k])?;
    let h = |k: usize| {
        let c = r.center(k);
        goals
            .iter()
            .map(|g| (c[0] - g[0]).hypot(c[1] - g[1]) - radius)
            .fold(f64::INFINITY, f64::min)
            .max(0.0)
    };
    let mut g = vec![f64::INFINITY; r.cells.len()];
    let mut closed = vec![false; r.cells.len()];
    let mut open = BinaryHeap::new();
    g[s] = 0.0;
    open.push(Node { f: h(s), k: s });
    while let Some(Node { k, .. }) = open.pop() {
        if closed[k] {
            continue;
        }
        closed[k] = true;
        if in_goal_region(r.center(k), goals, radius) {
            return Some(g[k]);
        }
        moves(r, k, |n, c| {
            let ng = g[k] + c;
            if ng < g[n] {
                g[n] = ng;
                open.push(Node { f: ng + h(n), k: n });
            }
        });
    }
    None
}

/// Geodesic distance from every open cell to a goal region, computed once
/// with a multi-source Dijkstra so per-episode lookups are constant time.
#[derive(Debug, Clone)]
pub struct DistanceField {
    dist: Vec<f64>,
    goals: Vec<Point2>,
    radius: f64,
}

impl DistanceField {
    pub fn new(r: &Raster, goals: &[Point2], radius: f64) -> Self {
        let mut dist = vec![f64::INFINITY; r.cells.len()];
        let mut heap = BinaryHeap::new();
        for k in 0..r.cells.len() {
            if !r.blocked[k] && in_goal_region(r.center(k), goals, radius) {
                dist[k] = 0.0;
                heap.push(Node { f: 0.0, k });
            }
        }
        while let Some(Node { f, k }) = heap.pop() {
            if f > dist[k] {
                continue;
            }
            // moves are symmetric, so forward expansion gives distances to the sources
            moves(r, k, |n, c| {
                let nd = f + c;
                if nd < dist[n] {
                    dist[n] = nd;
                    heap.push(Node { f: nd, k: n });
                }
            });
        }
        Self {
            dist,
            goals: goals.to_vec(),
            radius,
        }
    }

    /// Geodesic distance from `p`; `None` when unreachable or outside the raster.
    pub fn at(&self, r: &Raster, p: Point2) -> Option<f64> {
        if in_goal_region(p, &self.goals, self.radius) {
            return Some(0.0);
        }
        let d = self.dist[r.index(p)?];
        d.is_finite().then_some(d)
    }
}

#[cfg(test)]
mod tests {
    use super::super::Scene;
    use super::*;

    fn corridor() -> Raster {
        // 6 m × 1 m corridor
        let h = 0.05;
        let scene = Scene {
            version: 1,
            id: "corridor".into(),
            floor_height: 0.0,
            extent: [6.0, 1.0],
            rooms: vec![],
            walls: vec![
                [-h, -h, 6.0 + h, h],
                [-h, 1.0 - h, 6.0 + h, 1.0 + h],
                [-h, -h, h, 1.0 + h],
                [6.0 - h, -h, 6.0 + h, 1.0 + h],
            ],
            objects: vec![],
            rng_seed: 0,
        };
        Raster::build(&scene)
    }

    #[test]
    fn straight_corridor_length() {
        let r = corridor();
        let d = geodesic_shortest_path(&r, [1.0125, 0.5125], &[[5.0125, 0.5125]], 1.0).unwrap();
        assert!((d - 3.0).abs() <= RASTER_RES + 1e-9, "{d}");
        let f = DistanceField::new(&r, &[[5.0125, 0.5125]], 1.0);
        assert!((f.at(&r, [1.0125, 0.5125]).unwrap() - d).abs() < 1e-9);
    }

    #[test]
    fn inside_goal_region_is_zero() {
        let r = corridor();
        assert_eq!(geodesic_shortest_path(&r, [4.5, 0.5], &[[5.0, 0.5]], 1.0), Some(0.0));
    }

    #[test]
    fn nearest_of_two_goals() {
        let r = corridor();
        let one = geodesic_shortest_path(&r, [3.0, 0.5], &[[5.5, 0.5]], 1.0).unwrap();
        let two = geodesic_shortest_path(&r, [3.0, 0.5], &[[5.5, 0.5], [0.6, 0.5]], 1.0).unwrap();
        assert!(two < one);
        let other = geodesic_shortest_path(&r, [3.0, 0.5], &[[0.6, 0.5]], 1.0).unwrap();
        assert!((two - other.min(one)).abs() < 1e-12);
    }
}
