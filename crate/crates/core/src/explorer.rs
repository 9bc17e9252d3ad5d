//! Frontier scoring with the distance / semantic / footprint probability map
//! and next-target selection.

use crate::gridmap::{distance, Cell, FrontierWaypoint, GridBounds, OccupancyGrid, Point2, Pose};
use crate::memory::kmp;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExplorerError {
    #[error("invalid exploration parameters: {0}")]
    InvalidParams(String),
    #[error("invalid co-occurrence table: {0}")]
    InvalidTable(String),
    #[error("co-occurrence table parse error: {0}")]
    Parse(#[from] toml::de::Error),
}

/// How the spatial Gaussian of each factor is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelMode {
    /// `exp(-d²/2σ)`: peak value 1, so amplitudes read directly as weights.
    Unnormalized,
    /// Isotropic 2D normal density `(2πσ)⁻¹ exp(-d²/2σ)`.
    NormalizedDensity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionMode {
    /// Highest total score; ties go to the nearer frontier, then row-major.
    Argmax,
    /// Sample proportionally to `exp(score / T)`.
    Softmax,
    /// Ignore the probability map and take the nearest frontier.
    Nearest,
}

/// Radial kernel with variance `sigma` (m²) evaluated at distance `d`.
pub fn radial_kernel(d: f64, sigma: f64, mode: KernelMode) -> f64 {
    let e = (-d * d / (2.0 * sigma)).exp();
    match mode {
        KernelMode::Unnormalized => e,
        KernelMode::NormalizedDensity => e / (2.0 * PI * sigma),
    }
}

fn kernel_peak(sigma: f64, mode: KernelMode) -> f64 {
    radial_kernel(0.0, sigma, mode)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplorationParams {
    pub amp_distance: f64,
    pub amp_semantic: f64,
    pub amp_footprint: f64,
    /// Variances in m².
    pub sigma_distance: f64,
    pub sigma_semantic: f64,
    pub sigma_footprint: f64,
    /// Frontiers farther than this get no distance reward.
    pub distance_cutoff: f64,
    pub kernel_mode: KernelMode,
    pub selection: SelectionMode,
    pub softmax_temperature: f64,
}

impl Default for ExplorationParams {
    fn default() -> Self {
        Self {
            amp_distance: 1.0,
            amp_semantic: 0.5,
            amp_footprint: 1.0,
            sigma_distance: 4.0,
            sigma_semantic: 4.0,
            sigma_footprint: 4.0,
            distance_cutoff: 10.0,
            kernel_mode: KernelMode::Unnormalized,
            selection: SelectionMode::Argmax,
            softmax_temperature: 0.1,
        }
    }
}

impl ExplorationParams {
    pub fn validate(&self) -> Result<(), ExplorerError> {
        let bad = |m: &str| Err(ExplorerError::InvalidParams(m.to_string()));
        if !(self.sigma_distance > 0.0 && self.sigma_semantic > 0.0 && self.sigma_footprint > 0.0) {
            return bad("sigmas must be positive");
        }
        if !(self.distance_cutoff > 0.0) {
            return bad("distance cutoff must be positive");
        }
        if self.amp_distance < 0.0 || self.amp_semantic < 0.0 || self.amp_footprint < 0.0 {
            return bad("amplitudes must be non-negative");
        }
        if self.selection == SelectionMode::Softmax && !(self.softmax_temperature > 0.0) {
            return bad("softmax temperature must be positive");
        }
        Ok(())
    }
}

/// Item groups that tend to share a room, and how strongly each goal is
/// associated with each group.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CooccurrenceTable {
    #[serde(default = "one")]
    pub version: u32,
    pub groups: BTreeMap<String, Vec<String>>,
    /// goal label → group name → probability.
    pub affinity: BTreeMap<String, BTreeMap<String, f64>>,
}

fn one() -> u32 {
    1
}

impl CooccurrenceTable {
    pub fn from_toml_str(s: &str) -> Result<Self, ExplorerError> {
        let t: Self = toml::from_str(s)?;
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), ExplorerError> {
        for (goal, row) in &self.affinity {
            for (group, p) in row {
                if !(0.0..=1.0).contains(p) {
                    return Err(ExplorerError::InvalidTable(format!(
                        "affinity({goal}, {group}) = {p} outside [0, 1]"
                    )));
                }
                if !self.groups.contains_key(group) {
                    return Err(ExplorerError::InvalidTable(format!("unknown group {group}")));
                }
            }
        }
        Ok(())
    }

    /// Affinity of `goal` to `group`; zero when either is unknown.
    pub fn affinity(&self, goal: &str, group: &str) -> f64 {
        self.affinity
            .get(goal)
            .and_then(|r| r.get(group))
            .copied()
            .unwrap_or(0.0)
    }

    /// `P(goal, label)`: the best affinity of `goal` over every group with a
    /// member that occurs in `label` as a whole word. Open-vocabulary labels
    /// such as "white sink" therefore count as members of the sink's groups.
    pub fn relatedness(&self, goal: &str, label: &str) -> f64 {
        let Some(row) = self.affinity.get(goal) else {
            return 0.0;
        };
        let mut best = 0.0f64;
        for (group, members) in &self.groups {
            let p = row.get(group).copied().unwrap_or(0.0);
            if p <= best {
                continue;
            }
            if members.iter().any(|m| kmp::contains_word(label, m)) {
                best = p;
            }
        }
        best
    }
}

/// Accumulated kernel mass of every recorded agent position, rasterized on
/// the occupancy lattice.
///
/// Contributions below [`FootprintLog::TRUNCATION`] are dropped, which
/// bounds the splat radius at `sqrt(2σ ln(peak / TRUNCATION))`.
#[derive(Debug, Clone)]
pub struct FootprintLog {
    sigma: f64,
    mode: KernelMode,
    origin: Point2,
    resolution: f64,
    bounds: Option<GridBounds>,
    values: Vec<f64>,
    history: Vec<(Point2, u32)>,
    pending: Vec<(Point2, u32)>,
    pose_count: usize,
}

impl FootprintLog {
    pub const TRUNCATION: f64 = 1e-6;

    pub fn new(sigma: f64, mode: KernelMode) -> Self {
        Self {
            sigma,
            mode,
            origin: [0.0, 0.0],
            resolution: 1.0,
            bounds: None,
            values: Vec::new(),
            history: Vec::new(),
            pending: Vec::new(),
            pose_count: 0,
        }
    }

    pub fn pose_count(&self) -> usize {
        self.pose_count
    }

    pub fn is_empty(&self) -> bool {
        self.pose_count == 0
    }

    pub fn splat_radius(&self) -> f64 {
        let peak = kernel_peak(self.sigma, self.mode);
        if peak <= Self::TRUNCATION {
            return 0.0;
        }
        (2.0 * self.sigma * (peak / Self::TRUNCATION).ln()).sqrt()
    }

    /// Record one time step spent at `p`.
    pub fn record(&mut self, p: Point2) {
        self.pose_count += 1;
        for log in [&mut self.history, &mut self.pending] {
            match log.last_mut() {
                Some((q, n)) if *q == p => *n += 1,
                _ => log.push((p, 1)),
            }
        }
    }

    /// Align the raster with `grid`'s lattice and fold in pending poses.
    pub fn sync(&mut self, grid: &OccupancyGrid) {
        let same = self.bounds == Some(grid.bounds())
            && self.origin == grid.origin()
            && self.resolution == grid.resolution();
        if !same {
            self.origin = grid.origin();
            self.resolution = grid.resolution();
            self.bounds = Some(grid.bounds());
            self.values = vec![0.0; grid.bounds().len()];
            self.pending = self.history.clone();
        }
        let pending = std::mem::take(&mut self.pending);
        for (p, n) in pending {
            self.splat(p, n as f64);
        }
    }

    fn splat(&mut self, p: Point2, weight: f64) {
        let Some(b) = self.bounds else { return };
        let r = self.splat_radius();
        if r <= 0.0 || b.is_empty() {
            return;
        }
        let res = self.resolution;
        let col_lo = (((p[0] - r - self.origin[0]) / res).floor() as i32).max(b.min_col);
        let col_hi = (((p[0] + r - self.origin[0]) / res).ceil() as i32).min(b.max_col() - 1);
        let row_lo = (((p[1] - r - self.origin[1]) / res).floor() as i32).max(b.min_row);
        let row_hi = (((p[1] + r - self.origin[1]) / res).ceil() as i32).min(b.max_row() - 1);
        if col_lo > col_hi || row_lo > row_hi {
            return;
        }
        let peak = kernel_peak(self.sigma, self.mode);
        let two_s = 2.0 * self.sigma;
        // the Gaussian factorizes along the axes
        let ex: Vec<f64> = (col_lo..=col_hi)
            .map(|c| {
                let dx = self.origin[0] + (c as f64 + 0.5) * res - p[0];
                (-dx * dx / two_s).exp()
            })
            .collect();
        for row in row_lo..=row_hi {
            let dy = self.origin[1] + (row as f64 + 0.5) * res - p[1];
            let ey = peak * (-dy * dy / two_s).exp();
            if ey < Self::TRUNCATION {
                continue;
            }
            let base = (row - b.min_row) as usize * b.width;
            for (k, exv) in ex.iter().enumerate() {
                let v = ey * exv;
                if v >= Self::TRUNCATION {
                    self.values[base + (col_lo - b.min_col) as usize + k] += weight * v;
                }
            }
        }
    }

    /// Footprint mass at `cell` (whose center is `center`), including poses
    /// not yet folded into the raster.
    pub fn value_at(&self, cell: Cell, center: Point2) -> f64 {
        let mut v = 0.0;
        if let Some(b) = self.bounds {
            if let Some(i) = b.index(cell) {
                v = self.values[i];
            }
        }
        let src: &[(Point2, u32)] = if self.bounds.is_some() {
            &self.pending
        } else {
            &self.history
        };
        for (p, n) in src {
            let g = radial_kernel(distance(*p, center), self.sigma, self.mode);
            if g >= Self::TRUNCATION {
                v += *n as f64 * g;
            }
        }
        v
    }

    /// Exact `Σ_k g(‖x − P_k‖)` over every recorded pose, without truncation.
    pub fn exact_sum(&self, x: Point2) -> f64 {
        self.history
            .iter()
            .map(|(p, n)| *n as f64 * radial_kernel(distance(*p, x), self.sigma, self.mode))
            .sum()
    }
}

/// Frontier cells already chosen as targets.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TriedFrontierSet(BTreeSet<Cell>);

impl TriedFrontierSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn contains(&self, c: Cell) -> bool {
        self.0.contains(&c)
    }

    pub fn insert(&mut self, c: Cell) -> bool {
        self.0.insert(c)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn score_distance(wp: &FrontierWaypoint, pose: &Pose, params: &ExplorationParams) -> f64 {
    let d = distance(wp.world, pose.position());
    if d > params.distance_cutoff {
        return 0.0;
    }
    params.amp_distance * radial_kernel(d, params.sigma_distance, params.kernel_mode)
}

/// A labelled memory position used by the semantic factor.
#[derive(Debug, Clone, Copy)]
pub struct Landmark<'a> {
    pub label: &'a str,
    pub position: Point2,
}

pub fn score_semantics(
    wp: &FrontierWaypoint,
    landmarks: &[Landmark<'_>],
    goal: &str,
    table: &CooccurrenceTable,
    params: &ExplorationParams,
) -> f64 {
    let rel: Vec<f64> = landmarks
        .iter()
        .map(|l| table.relatedness(goal, l.label))
        .collect();
    semantic_sum(wp.world, landmarks, &rel, params)
}

fn semantic_sum(at: Point2, landmarks: &[Landmark<'_>], rel: &[f64], params: &ExplorationParams) -> f64 {
    let s: f64 = landmarks
        .iter()
        .zip(rel)
        .filter(|(_, r)| **r > 0.0)
        .map(|(l, r)| radial_kernel(distance(at, l.position), params.sigma_semantic, params.kernel_mode) * r)
        .sum();
    params.amp_semantic * s
}

pub fn score_footprint(wp: &FrontierWaypoint, log: &FootprintLog, params: &ExplorationParams) -> f64 {
    -params.amp_footprint * log.value_at(wp.cell, wp.world)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredFrontier {
    pub waypoint: FrontierWaypoint,
    pub distance: f64,
    pub o_d: f64,
    pub o_s: f64,
    pub o_f: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FrontierDecision {
    pub chosen: Option<ScoredFrontier>,
    pub candidates: Vec<ScoredFrontier>,
}

/// Everything the scorer reads besides the waypoints themselves.
pub struct ScoringContext<'a> {
    pub pose: &'a Pose,
    pub landmarks: &'a [Landmark<'a>],
    pub goal: &'a str,
    pub table: &'a CooccurrenceTable,
    pub footprint: &'a FootprintLog,
    pub params: &'a ExplorationParams,
}

pub fn score_frontiers(waypoints: &[FrontierWaypoint], ctx: &ScoringContext<'_>) -> Vec<ScoredFrontier> {
    let rel: Vec<f64> = ctx
        .landmarks
        .iter()
        .map(|l| ctx.table.relatedness(ctx.goal, l.label))
        .collect();
    waypoints
        .iter()
        .map(|wp| {
            let o_d = score_distance(wp, ctx.pose, ctx.params);
            let o_s = semantic_sum(wp.world, ctx.landmarks, &rel, ctx.params);
            let o_f = score_footprint(wp, ctx.footprint, ctx.params);
            ScoredFrontier {
                waypoint: *wp,
                distance: distance(wp.world, ctx.pose.position()),
                o_d,
                o_s,
                o_f,
                total: o_d + o_s + o_f,
            }
        })
        .collect()
}

/// Index of the best candidate: max score, then nearer, then row-major cell.
pub fn argmax_index(candidates: &[ScoredFrontier]) -> Option<usize> {
    (0..candidates.len()).min_by(|&a, &b| {
        let (x, y) = (&candidates[a], &candidates[b]);
        y.total
            .total_cmp(&x.total)
            .then(x.distance.total_cmp(&y.distance))
            .then(x.waypoint.cell.cmp(&y.waypoint.cell))
    })
}

fn nearest_index(candidates: &[ScoredFrontier]) -> Option<usize> {
    (0..candidates.len()).min_by(|&a, &b| {
        let (x, y) = (&candidates[a], &candidates[b]);
        x.distance
            .total_cmp(&y.distance)
            .then(x.waypoint.cell.cmp(&y.waypoint.cell))
    })
}

fn softmax_index<R: Rng + ?Sized>(candidates: &[ScoredFrontier], temperature: f64, rng: &mut R) -> Option<usize> {
    let max = candidates.iter().map(|c| c.total).fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = candidates
        .iter()
        .map(|c| ((c.total - max) / temperature).exp())
        .collect();
    let sum: f64 = w.iter().sum();
    if candidates.is_empty() || !(sum > 0.0) {
        return argmax_index(candidates);
    }
    let mut u = rng.gen::<f64>() * sum;
    for (i, wi) in w.iter().enumerate() {
        if u < *wi {
            return Some(i);
        }
        u -= wi;
    }
    Some(candidates.len() - 1)
}

/// Score the untried waypoints, pick one, and mark it tried.
pub fn choose_frontier<R: Rng + ?Sized>(
    waypoints: &[FrontierWaypoint],
    tried: &mut TriedFrontierSet,
    ctx: &ScoringContext<'_>,
    rng: &mut R,
) -> FrontierDecision {
    let open: Vec<FrontierWaypoint> = waypoints
        .iter()
        .filter(|w| !tried.contains(w.cell))
        .copied()
        .collect();
    let candidates = score_frontiers(&open, ctx);
    let idx = match ctx.params.selection {
        SelectionMode::Argmax => argmax_index(&candidates),
        SelectionMode::Nearest => nearest_index(&candidates),
        SelectionMode::Softmax => softmax_index(&candidates, ctx.params.softmax_temperature, rng),
    };
    let chosen = idx.map(|i| candidates[i]);
    if let Some(c) = &chosen {
        tried.insert(c.waypoint.cell);
    }
    FrontierDecision { chosen, candidates }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid() -> OccupancyGrid {
        OccupancyGrid::new([0.0, 0.0], 0.1, 100, 100).unwrap()
    }

    fn wp_at(g: &OccupancyGrid, p: Point2) -> FrontierWaypoint {
        let cell = g.world_to_cell(p).unwrap();
        FrontierWaypoint {
            cell,
            world: g.cell_center(cell),
            cluster_size: 3,
        }
    }

    fn table() -> CooccurrenceTable {
        CooccurrenceTable::from_toml_str(
            r#"
            [groups]
            bathroom = ["toilet", "sink", "shower"]
            kitchen = ["stove", "sink"]
            [affinity.toilet]
            bathroom = 0.9
            kitchen = 0.1
            "#,
        )
        .unwrap()
    }

    #[test]
    fn distance_factor_examples() {
        let g = grid();
        let p = ExplorationParams::default();
        let wp = wp_at(&g, [5.0, 5.0]);
        let at = Pose::new(wp.world[0], wp.world[1], 0.0, 0.0);
        assert_relative_eq!(score_distance(&wp, &at, &p), 1.0);
        let two = Pose::new(wp.world[0] - 2.0, wp.world[1], 0.0, 0.0);
        assert_relative_eq!(score_distance(&wp, &two, &p), (-0.5f64).exp(), max_relative = 1e-12);
        let far = Pose::new(wp.world[0] - p.distance_cutoff - 1e-6, wp.world[1], 0.0, 0.0);
        assert_eq!(score_distance(&wp, &far, &p), 0.0);
    }

    #[test]
    fn semantic_factor_examples() {
        let g = grid();
        let p = ExplorationParams::default();
        let t = table();
        let wp = wp_at(&g, [3.0, 3.0]);
        assert_eq!(score_semantics(&wp, &[], "toilet", &t, &p), 0.0);
        let sink = [Landmark {
            label: "sink",
            position: wp.world,
        }];
        assert_relative_eq!(score_semantics(&wp, &sink, "toilet", &t, &p), 0.45, max_relative = 1e-12);
        assert_eq!(score_semantics(&wp, &sink, "gizmo", &t, &p), 0.0);
        let open_vocab = [Landmark {
            label: "white sink",
            position: wp.world,
        }];
        assert_relative_eq!(score_semantics(&wp, &open_vocab, "toilet", &t, &p), 0.45, max_relative = 1e-12);
    }

    #[test]
    fn table_rejects_out_of_range_affinity() {
        let bad = "[groups]\na = [\"x\"]\n[affinity.x]\na = 1.5\n";
        assert!(CooccurrenceTable::from_toml_str(bad).is_err());
    }

    #[test]
    fn footprint_factor_examples() {
        let mut g = grid();
        let p = ExplorationParams::default();
        let wp = wp_at(&g, [5.0, 5.0]);
        let mut log = FootprintLog::new(p.sigma_footprint, p.kernel_mode);
        assert_eq!(score_footprint(&wp, &log, &p), 0.0);
        log.record(wp.world);
        assert_relative_eq!(score_footprint(&wp, &log, &p), -1.0);
        log.record(wp.world);
        assert_relative_eq!(score_footprint(&wp, &log, &p), -2.0);
        log.sync(&g);
        assert_relative_eq!(score_footprint(&wp, &log, &p), -2.0);
        // growth rebuilds the raster from history
        g.ensure_contains([-20.0, -20.0], [1.0, 1.0]);
        log.sync(&g);
        assert_relative_eq!(score_footprint(&wp, &log, &p), -2.0);
    }

    fn scored(total: f64, distance: f64, col: i32) -> ScoredFrontier {
        ScoredFrontier {
            waypoint: FrontierWaypoint {
                cell: Cell::new(0, col),
                world: [col as f64, 0.0],
                cluster_size: 2,
            },
            distance,
            o_d: total,
            o_s: 0.0,
            o_f: 0.0,
            total,
        }
    }

    #[test]
    fn argmax_and_tie_breaks() {
        assert_eq!(argmax_index(&[scored(0.1, 1.0, 0), scored(0.9, 5.0, 1)]), Some(1));
        assert_eq!(argmax_index(&[scored(0.5, 3.0, 0), scored(0.5, 1.0, 1)]), Some(1));
        assert_eq!(argmax_index(&[scored(0.5, 1.0, 4), scored(0.5, 1.0, 2)]), Some(1));
        assert_eq!(argmax_index(&[]), None);
    }

    #[test]
    fn choose_frontier_skips_tried_and_inserts() {
        let g = grid();
        let p = ExplorationParams::default();
        let t = table();
        let log = FootprintLog::new(p.sigma_footprint, p.kernel_mode);
        let pose = Pose::new(1.0, 1.0, 0.0, 0.0);
        let ctx = ScoringContext {
            pose: &pose,
            landmarks: &[],
            goal: "toilet",
            table: &t,
            footprint: &log,
            params: &p,
        };
        let wps = [wp_at(&g, [2.0, 1.0]), wp_at(&g, [4.0, 1.0])];
        let mut tried = TriedFrontierSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = choose_frontier(&wps, &mut tried, &ctx, &mut rng).chosen.unwrap();
        assert_eq!(a.waypoint.cell, wps[0].cell);
        let b = choose_frontier(&wps, &mut tried, &ctx, &mut rng).chosen.unwrap();
        assert_eq!(b.waypoint.cell, wps[1].cell);
        assert!(choose_frontier(&wps, &mut tried, &ctx, &mut rng).chosen.is_none());
    }

    #[test]
    fn softmax_is_seeded() {
        let cands: Vec<ScoredFrontier> = (0..5).map(|i| scored(i as f64 * 0.05, 1.0, i)).collect();
        let picks = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..20)
                .map(|_| softmax_index(&cands, 0.1, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(picks(7), picks(7));
        assert!(picks(7).iter().any(|&i| i != 4));
    }

    #[test]
    fn normalized_kernel_integrates_to_one() {
        let sigma = 0.5;
        let h = 0.02;
        let mut s = 0.0;
        for i in -200..200 {
            for j in -200..200 {
                let d = ((i as f64 + 0.5) * h).hypot((j as f64 + 0.5) * h);
                s += radial_kernel(d, sigma, KernelMode::NormalizedDensity) * h * h;
            }
        }
        assert_relative_eq!(s, 1.0, max_relative = 1e-3);
    }
}
