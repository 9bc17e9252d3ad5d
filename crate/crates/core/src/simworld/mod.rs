//! Deterministic synthetic indoor world: procedural multi-room scenes, a
//! point-robot with a single-row depth camera, and seeded oracle stand-ins
//! for the detector, feature matcher, verifier and synonym source.

mod geodesic;
mod oracle;
mod raster;
mod sensor;

pub use geodesic::{geodesic_shortest_path, DistanceField};
pub use oracle::{splitmix64, OracleMatcher, OracleVerifier, SynonymTable, Verifier, VerifierRates};
pub use raster::{Raster, RASTER_RES};
pub use sensor::{
    apply_action, DetectorProfile, LabelSource, Observation, SensedDetection, SensorParams, World,
};

use crate::memory::Hsv;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

pub const SCENE_FORMAT_VERSION: u32 = 1;
pub const WALL_THICKNESS: f64 = 0.1;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("scene generation failed: {0}")]
    GenerationFailed(String),
    #[error("pose ({0}, {1}) is not in free space")]
    InvalidPose(f64, f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("catalog parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("scene file error: {0}")]
    SceneFile(#[from] serde_json::Error),
}

/// Axis-aligned rectangle `[x0, y0, x1, y1]`.
pub type Rect = [f64; 4];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemSpec {
    /// Characteristic diameter in meters.
    pub size: f64,
    pub height: f64,
    #[serde(default)]
    pub synonyms: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoomKind {
    pub items: Vec<String>,
}

/// Object vocabulary: room kinds with their typical items, item geometry and
/// surface-form synonyms, and named colors usable as label modifiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub version: u32,
    pub colors: BTreeMap<String, Hsv>,
    pub rooms: BTreeMap<String, RoomKind>,
    pub items: BTreeMap<String, ItemSpec>,
}

impl Catalog {
    pub fn from_toml_str(s: &str) -> Result<Self, WorldError> {
        let c: Self = toml::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let bad = |m: String| Err(WorldError::InvalidConfig(m));
        if self.colors.is_empty() || self.rooms.is_empty() {
            return bad("catalog needs colors and room kinds".into());
        }
        for (kind, r) in &self.rooms {
            if r.items.is_empty() {
                return bad(format!("room kind {kind} has no items"));
            }
            for it in &r.items {
                if !self.items.contains_key(it) {
                    return bad(format!("room kind {kind} lists unknown item {it}"));
                }
            }
        }
        for (name, it) in &self.items {
            if !(it.size > 0.0 && it.height > 0.0) {
                return bad(format!("item {name} needs positive size and height"));
            }
        }
        Ok(())
    }

    pub fn labels(&self) -> Vec<&str> {
        self.items.keys().map(String::as_str).collect()
    }

    pub fn synonym_table(&self) -> SynonymTable {
        SynonymTable::new(
            self.items
                .iter()
                .filter(|(_, it)| !it.synonyms.is_empty())
                .map(|(k, it)| (k.clone(), it.synonyms.clone()))
                .collect(),
        )
    }
}

/// Layout ranges for procedural scenes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub room_cols: [usize; 2],
    pub room_rows: [usize; 2],
    /// Interior room side length range, meters.
    pub room_size: [f64; 2],
    pub objects_per_room: [usize; 2],
    pub door_width: [f64; 2],
    /// Chance of a door on a wall not needed for connectivity.
    pub extra_door_prob: f64,
    /// Minimum gap between an object and walls or other objects.
    pub clearance: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            room_cols: [2, 3],
            room_rows: [2, 3],
            room_size: [3.0, 4.5],
            objects_per_room: [2, 3],
            door_width: [0.9, 1.2],
            extra_door_prob: 0.25,
            clearance: 0.5,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), WorldError> {
        let bad = |m: &str| Err(WorldError::InvalidConfig(m.into()));
        if self.room_cols[0] == 0 || self.room_rows[0] == 0 {
            return bad("at least one room per axis");
        }
        if self.room_cols[0] > self.room_cols[1]
            || self.room_rows[0] > self.room_rows[1]
            || self.objects_per_room[0] > self.objects_per_room[1]
        {
            return bad("ranges must be ordered");
        }
        if !(self.room_size[0] > 0.0 && self.room_size[0] <= self.room_size[1]) {
            return bad("room size range");
        }
        if !(self.door_width[0] >= 0.6 && self.door_width[0] <= self.door_width[1]) {
            return bad("door gaps must be at least 0.6 m");
        }
        if self.door_width[1] + 0.6 > self.room_size[0] {
            return bad("doors do not fit on the smallest wall");
        }
        if !(0.0..=1.0).contains(&self.extra_door_prob) {
            return bad("extra_door_prob outside [0, 1]");
        }
        if !(self.clearance >= 0.3) {
            return bad("clearance must be at least 0.3 m");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Room {
    /// Interior rectangle, inside the walls.
    pub rect: Rect,
    pub kind: String,
    pub color: Hsv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub id: usize,
    pub canonical_label: String,
    pub position: [f64; 2],
    pub nominal_size: f64,
    pub height: f64,
    pub color: String,
    pub latent_feature_id: u64,
    pub room: usize,
}

impl ObjectInstance {
    pub fn radius(&self) -> f64 {
        self.nominal_size / 2.0
    }
}

/// One floor of a building.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub version: u32,
    pub id: String,
    pub floor_height: f64,
    /// Outer extent `[0, width] × [0, height]`, wall centerlines on the border.
    pub extent: [f64; 2],
    pub rooms: Vec<Room>,
    pub walls: Vec<Rect>,
    pub objects: Vec<ObjectInstance>,
    pub rng_seed: u64,
}

impl Scene {
    pub fn to_json(&self) -> Result<String, WorldError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, WorldError> {
        let scene: Self = serde_json::from_str(s)?;
        if scene.version != SCENE_FORMAT_VERSION {
            return Err(WorldError::InvalidConfig(format!(
                "unsupported scene version {}",
                scene.version
            )));
        }
        Ok(scene)
    }

    /// Room whose interior contains `p`, or the nearest one (doorways).
    pub fn room_at(&self, p: [f64; 2]) -> usize {
        let gap = |r: &Rect| {
            let dx = (r[0] - p[0]).max(p[0] - r[2]).max(0.0);
            let dy = (r[1] - p[1]).max(p[1] - r[3]).max(0.0);
            dx * dx + dy * dy
        };
        (0..self.rooms.len())
            .min_by(|&a, &b| gap(&self.rooms[a].rect).total_cmp(&gap(&self.rooms[b].rect)))
            .unwrap_or(0)
    }

    pub fn instances_of<'a>(&'a self, label: &'a str) -> impl Iterator<Item = &'a ObjectInstance> + 'a {
        self.objects.iter().filter(move |o| o.canonical_label == label)
    }

    /// Canonical labels present in the scene, sorted and deduplicated.
    pub fn labels(&self) -> Vec<String> {
        let mut v: Vec<String> = self.objects.iter().map(|o| o.canonical_label.clone()).collect();
        v.sort();
        v.dedup();
        v
    }
}

/// Room colors that fall into pairwise distinct histogram bins on every HSV
/// channel, so scene descriptors of different rooms do not overlap.
pub fn room_palette(n: usize) -> Vec<Hsv> {
    let b = crate::memory::HSV_BINS;
    (0..n.min(b))
        .map(|i| {
            let h = ((i * 5) % b) as f64 + 0.5;
            let s = ((i * 7 + 3) % b) as f64 + 0.5;
            let v = ((i * 3 + 5) % b) as f64 + 0.5;
            [h * 360.0 / b as f64, s / b as f64, v / b as f64]
        })
        .collect()
}

fn snap(x: f64) -> f64 {
    (x / RASTER_RES).round() * RASTER_RES
}

fn uniform(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[1] > r[0] {
        rng.gen_range(r[0]..=r[1])
    } else {
        r[0]
    }
}

struct Door {
    /// true: gap in a vertical wall (x = const).
    vertical: bool,
    line: f64,
    from: f64,
    to: f64,
}

/// Procedurally lay out one floor. Deterministic in `seed`.
pub fn generate_scene(
    id: &str,
    seed: u64,
    floor_height: f64,
    spec: &SceneSpec,
    catalog: &Catalog,
) -> Result<Scene, WorldError> {
    spec.validate()?;
    catalog.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut last_err = String::new();
    for _ in 0..20 {
        match try_generate(id, seed, floor_height, spec, catalog, &mut rng) {
            Ok(s) => return Ok(s),
            Err(e) => last_err = e,
        }
    }
    Err(WorldError::GenerationFailed(last_err))
}

fn try_generate(
    id: &str,
    seed: u64,
    floor_height: f64,
    spec: &SceneSpec,
    catalog: &Catalog,
    rng: &mut ChaCha8Rng,
) -> Result<Scene, String> {
    let cols = rng.gen_range(spec.room_cols[0]..=spec.room_cols[1]);
    let rows = rng.gen_range(spec.room_rows[0]..=spec.room_rows[1]);
    let half = WALL_THICKNESS / 2.0;
    // wall centerlines, snapped to the raster
    let mut xs = vec![0.0];
    for _ in 0..cols {
        let w = snap(uniform(rng, spec.room_size) + WALL_THICKNESS);
        xs.push(snap(xs.last().unwrap() + w));
    }
    let mut ys = vec![0.0];
    for _ in 0..rows {
        let h = snap(uniform(rng, spec.room_size) + WALL_THICKNESS);
        ys.push(snap(ys.last().unwrap() + h));
    }
    let extent = [xs[cols], ys[rows]];

    let mut kinds: Vec<&String> = catalog.rooms.keys().collect();
    kinds.shuffle(rng);
    let mut palette = room_palette(crate::memory::HSV_BINS);
    palette.shuffle(rng);
    if cols * rows > palette.len() {
        return Err(format!("at most {} rooms per floor", palette.len()));
    }
    let mut rooms = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let k = rooms.len();
            rooms.push(Room {
                rect: [xs[c] + half, ys[r] + half, xs[c + 1] - half, ys[r + 1] - half],
                kind: kinds[k % kinds.len()].clone(),
                color: palette[k],
            });
        }
    }

    // adjacency edges, random spanning tree plus extras
    let idx = |r: usize, c: usize| r * cols + c;
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                edges.push((idx(r, c), idx(r, c + 1), true));
            }
            if r + 1 < rows {
                edges.push((idx(r, c), idx(r + 1, c), false));
            }
        }
    }
    edges.shuffle(rng);
    let mut parent: Vec<usize> = (0..rooms.len()).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        p[x] = r;
        r
    }
    let mut doors = Vec::new();
    for (a, b, vertical) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        let needed = ra != rb;
        if needed {
            parent[ra] = rb;
        }
        if needed || rng.gen::<f64>() < spec.extra_door_prob {
            let (ia, ib) = (&rooms[a].rect, &rooms[b].rect);
            let (line, lo, hi) = if vertical {
                (ia[2] + half, ia[1].max(ib[1]), ia[3].min(ib[3]))
            } else {
                (ia[3] + half, ia[0].max(ib[0]), ia[2].min(ib[2]))
            };
            let w = snap(uniform(rng, spec.door_width));
            let start = snap(uniform(rng, [lo + 0.3, hi - 0.3 - w]));
            doors.push(Door {
                vertical,
                line,
                from: start,
                to: start + w,
            });
        }
    }

    let mut walls = Vec::new();
    let (x_lo, x_hi, y_lo, y_hi) = (-half, extent[0] + half, -half, extent[1] + half);
    let mut push_line = |vertical: bool, line: f64, lo: f64, hi: f64, doors: &[Door]| {
        let mut gaps: Vec<(f64, f64)> = doors
            .iter()
            .filter(|d| d.vertical == vertical && (d.line - line).abs() < 1e-9)
            .map(|d| (d.from, d.to))
            .collect();
        gaps.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut cur = lo;
        for (g0, g1) in gaps.into_iter().chain(std::iter::once((hi, hi))) {
            if g0 > cur {
                walls.push(if vertical {
                    [line - half, cur, line + half, g0]
                } else {
                    [cur, line - half, g0, line + half]
                });
            }
            cur = g1;
        }
    };
    for x in &xs {
        push_line(true, *x, y_lo, y_hi, &doors);
    }
    for y in &ys {
        push_line(false, *y, x_lo, x_hi, &doors);
    }

    // objects
    let color_names: Vec<&String> = catalog.colors.keys().collect();
    let mut objects: Vec<ObjectInstance> = Vec::new();
    for (ri, room) in rooms.iter().enumerate() {
        let pool = &catalog.rooms[&room.kind].items;
        let n = rng.gen_range(spec.objects_per_room[0]..=spec.objects_per_room[1]).min(pool.len());
        let picks: Vec<&String> = pool.choose_multiple(rng, n).collect();
        for label in picks {
            let item = &catalog.items[label];
            let r = item.size / 2.0;
            let m = spec.clearance + r;
            let rect = room.rect;
            if rect[2] - rect[0] <= 2.0 * m || rect[3] - rect[1] <= 2.0 * m {
                return Err(format!("room too small for {label}"));
            }
            let mut placed = None;
            for _ in 0..200 {
                let p = [
                    rng.gen_range(rect[0] + m..rect[2] - m),
                    rng.gen_range(rect[1] + m..rect[3] - m),
                ];
                let clear_objects = objects
                    .iter()
                    .all(|o| dist(o.position, p) >= o.radius() + r + spec.clearance);
                let clear_doors = doors.iter().all(|d| {
                    let (along, across) = if d.vertical { (p[1], p[0]) } else { (p[0], p[1]) };
                    let nearest = along.clamp(d.from, d.to);
                    (along - nearest).hypot(across - d.line) >= r + spec.clearance
                });
                if clear_objects && clear_doors {
                    placed = Some(p);
                    break;
                }
            }
            let p = placed.ok_or_else(|| format!("could not place {label} in room {ri}"))?;
            let k = objects.len();
            objects.push(ObjectInstance {
                id: k,
                canonical_label: label.clone(),
                position: p,
                nominal_size: item.size,
                height: item.height,
                color: (*color_names.choose(rng).expect("colors")).clone(),
                latent_feature_id: splitmix64(seed ^ splitmix64(k as u64 + 1)),
                room: ri,
            });
        }
    }

    let scene = Scene {
        version: SCENE_FORMAT_VERSION,
        id: id.to_string(),
        floor_height,
        extent,
        rooms,
        walls,
        objects,
        rng_seed: seed,
    };
    check_connectivity(&scene)?;
    Ok(scene)
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Every room must be reachable by the robot and every object approachable
/// to within one meter.
fn check_connectivity(scene: &Scene) -> Result<(), String> {
    let raster = Raster::build(scene);
    let seed_cell = scene
        .rooms
        .first()
        .and_then(|r| raster.nearest_open([(r.rect[0] + r.rect[2]) / 2.0, (r.rect[1] + r.rect[3]) / 2.0]))
        .ok_or("first room has no open cell")?;
    let reach = raster.flood_fill(seed_cell);
    for (i, r) in scene.rooms.iter().enumerate() {
        let ok = raster
            .cells_in_rect(r.rect)
            .any(|k| reach[k]);
        if !ok {
            return Err(format!("room {i} unreachable"));
        }
    }
    for o in &scene.objects {
        let ok = raster
            .cells_within(o.position, 1.0)
            .any(|k| reach[k]);
        if !ok {
            return Err(format!("object {} unreachable", o.id));
        }
    }
    Ok(())
}
