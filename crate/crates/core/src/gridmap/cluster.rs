//! Density-based clustering of frontier cells into waypoints.

use super::{Cell, OccupancyGrid, Point2};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// A clustered frontier target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontierWaypoint {
    pub cell: Cell,
    pub world: Point2,
    pub cluster_size: usize,
}

/// DBSCAN over lattice cells with Euclidean cell distance.
///
/// Points are processed in row-major order after deduplication; the returned
/// labels line up with the sorted, deduplicated point list that is also
/// returned. `None` marks noise. A neighborhood includes the point itself.
pub fn dbscan(cells: &[Cell], eps: f64, min_pts: usize) -> (Vec<Cell>, Vec<Option<usize>>) {
    let mut pts = cells.to_vec();
    pts.sort_unstable();
    pts.dedup();
    let index: HashMap<Cell, usize> = pts.iter().enumerate().map(|(i, c)| (*c, i)).collect();
    let reach = eps.floor() as i32;
    let eps2 = eps * eps;
    let neighbors = |p: Cell| -> Vec<usize> {
        let mut out = Vec::new();
        for dr in -reach..=reach {
            for dc in -reach..=reach {
                if (dr * dr + dc * dc) as f64 > eps2 {
                    continue;
                }
                if let Some(&j) = index.get(&Cell::new(p.row + dr, p.col + dc)) {
                    out.push(j);
                }
            }
        }
        out
    };

    let mut labels: Vec<Option<usize>> = vec![None; pts.len()];
    let mut visited = vec![false; pts.len()];
    let mut next = 0usize;
    for i in 0..pts.len() {
        if visited[i] {
            continue;
        }
        visited[i] = true;
        let nb = neighbors(pts[i]);
        if nb.len() < min_pts {
            continue;
        }
        let id = next;
        next += 1;
        labels[i] = Some(id);
        let mut queue = nb;
        while let Some(j) = queue.pop() {
            if labels[j].is_none() {
                labels[j] = Some(id);
            }
            if visited[j] {
                continue;
            }
            visited[j] = true;
            let nj = neighbors(pts[j]);
            if nj.len() >= min_pts {
                queue.extend(nj.into_iter().filter(|&k| labels[k].is_none() || !visited[k]));
            }
        }
    }
    (pts, labels)
}

/// Cluster frontier cells and reduce each cluster to the member nearest its
/// centroid. Output is ordered by cluster size (largest first), then
/// row-major by waypoint cell.
pub fn cluster_frontiers(
    grid: &OccupancyGrid,
    cells: &[Cell],
    eps: f64,
    min_pts: usize,
) -> Vec<FrontierWaypoint> {
    let (pts, labels) = dbscan(cells, eps, min_pts);
    let n_clusters = labels.iter().flatten().max().map_or(0, |m| m + 1);
    let mut members: Vec<Vec<Cell>> = vec![Vec::new(); n_clusters];
    for (p, l) in pts.iter().zip(&labels) {
        if let Some(l) = l {
            members[*l].push(*p);
        }
    }
    let mut out: Vec<FrontierWaypoint> = members
        .into_iter()
        .filter(|m| !m.is_empty())
        .map(|m| {
            let n = m.len() as f64;
            let cr = m.iter().map(|c| c.row as f64).sum::<f64>() / n;
            let cc = m.iter().map(|c| c.col as f64).sum::<f64>() / n;
            // members are row-major, so min_by keeps the first on ties
            let best = *m
                .iter()
                .min_by(|a, b| {
                    let da = (a.row as f64 - cr).powi(2) + (a.col as f64 - cc).powi(2);
                    let db = (b.row as f64 - cr).powi(2) + (b.col as f64 - cc).powi(2);
                    da.total_cmp(&db)
                })
                .expect("non-empty cluster");
            FrontierWaypoint {
                cell: best,
                world: grid.cell_center(best),
                cluster_size: m.len(),
            }
        })
        .collect();
    out.sort_by(|a, b| b.cluster_size.cmp(&a.cluster_size).then(a.cell.cmp(&b.cell)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> OccupancyGrid {
        OccupancyGrid::new([0.0, 0.0], 0.1, 32, 32).unwrap()
    }

    #[test]
    fn empty_input() {
        assert!(cluster_frontiers(&grid(), &[], 3.0, 2).is_empty());
    }

    #[test]
    fn five_collinear_cells_form_one_cluster_at_middle() {
        let cells: Vec<Cell> = (0..5).map(|c| Cell::new(4, 10 + c)).collect();
        let w = cluster_frontiers(&grid(), &cells, 3.0, 2);
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].cell, Cell::new(4, 12));
        assert_eq!(w[0].cluster_size, 5);
    }

    #[test]
    fn distant_pair_is_noise() {
        let cells = [Cell::new(0, 0), Cell::new(0, 10)];
        assert!(cluster_frontiers(&grid(), &cells, 3.0, 2).is_empty());
    }

    #[test]
    fn output_sorted_by_size() {
        let mut cells: Vec<Cell> = (0..3).map(|c| Cell::new(0, c)).collect();
        cells.extend((0..6).map(|c| Cell::new(20, c)));
        let w = cluster_frontiers(&grid(), &cells, 1.5, 2);
        assert_eq!(w.iter().map(|w| w.cluster_size).collect::<Vec<_>>(), vec![6, 3]);
    }
}
