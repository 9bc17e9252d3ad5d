//! Lifelong episode suites: grouping by scene and floor, dataset generation,
//! the persistent-state runner and the SR/SPL metrics.

mod report;

pub use report::{
    ablation_table, curves, run_ablation, AblationReport, AblationRow, CurvePoint, EvalReport, Variant,
};

use crate::config::{Config, Knowledge};
use crate::gridmap::{distance, Pose};
use crate::navctl::{Action, Controller};
use crate::simworld::{
    generate_scene, splitmix64, DistanceField, OracleMatcher, Scene, SceneSpec, World, WorldError,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Episodes closer than this in height share a floor.
pub const FLOOR_THRESHOLD: f64 = 0.5;

const START_ATTEMPTS: usize = 400;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no episode records")]
    EmptyReport,
    #[error("dataset generation failed: {0}")]
    GenerationFailed(String),
    #[error("scene {0:?} not found for episode")]
    MissingScene(String),
    #[error("goal {goal:?} unreachable in scene {scene:?}")]
    Unsolvable { scene: String, goal: String },
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub scene_id: String,
    pub start: Pose,
    pub goal_label: String,
    pub floor_height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeGroup {
    pub scene_id: String,
    pub anchor_height: f64,
    pub episodes: Vec<Episode>,
}

/// Partition by scene (first appearance), then by floor against each
/// group's first height. Relative order is kept inside every group.
pub fn sort_episodes(episodes: &[Episode]) -> Vec<EpisodeGroup> {
    let mut scenes: Vec<(String, Vec<EpisodeGroup>)> = Vec::new();
    for ep in episodes {
        let idx = match scenes.iter().position(|(id, _)| *id == ep.scene_id) {
            Some(i) => i,
            None => {
                scenes.push((ep.scene_id.clone(), Vec::new()));
                scenes.len() - 1
            }
        };
        let groups = &mut scenes[idx].1;
        match groups
            .iter_mut()
            .find(|g| (ep.floor_height - g.anchor_height).abs() < FLOOR_THRESHOLD)
        {
            Some(g) => g.episodes.push(ep.clone()),
            None => groups.push(EpisodeGroup {
                scene_id: ep.scene_id.clone(),
                anchor_height: ep.floor_height,
                episodes: vec![ep.clone()],
            }),
        }
    }
    scenes.into_iter().flat_map(|(_, g)| g).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSpec {
    /// Buildings; each gets `floors` independently generated levels.
    pub scenes: usize,
    pub floors: usize,
    pub floor_spacing: f64,
    pub episodes_per_floor: usize,
    /// Restrict goals to these labels; all catalog labels otherwise.
    pub goals: Option<Vec<String>>,
    pub scene: SceneSpec,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            scenes: 10,
            floors: 1,
            floor_spacing: 3.0,
            episodes_per_floor: 5,
            goals: None,
            scene: SceneSpec::default(),
        }
    }
}

/// Scenes plus episodes in source order (shuffled, as a flat ObjectNav list).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub version: u32,
    pub seed: u64,
    pub success_radius: f64,
    pub scenes: Vec<Scene>,
    pub episodes: Vec<Episode>,
}

impl Dataset {
    pub fn to_json(&self) -> Result<String, EvalError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, EvalError> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn groups(&self) -> Vec<EpisodeGroup> {
        sort_episodes(&self.episodes)
    }

    /// The floor of `scene_id` nearest to `height`.
    pub fn scene_for(&self, scene_id: &str, height: f64) -> Option<&Scene> {
        scene_for(&self.scenes, scene_id, height)
    }
}

fn scene_for<'a>(scenes: &'a [Scene], scene_id: &str, height: f64) -> Option<&'a Scene> {
    scenes
        .iter()
        .filter(|s| building_of(&s.id) == scene_id)
        .min_by(|a, b| (a.floor_height - height).abs().total_cmp(&(b.floor_height - height).abs()))
}

fn building_of(scene_id: &str) -> &str {
    scene_id.rsplit_once('/').map_or(scene_id, |(b, _)| b)
}

/// Build scenes and sample solvable episodes. Deterministic in `seed`.
pub fn generate_lifelong_dataset(
    seed: u64,
    spec: &DatasetSpec,
    knowledge: &Knowledge,
    success_radius: f64,
) -> Result<Dataset, EvalError> {
    if spec.scenes == 0 || spec.floors == 0 {
        return Err(EvalError::GenerationFailed("need at least one scene and floor".into()));
    }
    if let Some(goals) = &spec.goals {
        if goals.is_empty() {
            return Err(EvalError::GenerationFailed("empty goal list".into()));
        }
        if let Some(g) = goals.iter().find(|g| !knowledge.catalog.items.contains_key(*g)) {
            return Err(EvalError::GenerationFailed(format!("goal {g:?} is not in the catalog")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scenes = Vec::new();
    let mut episodes = Vec::new();
    for b in 0..spec.scenes {
        let building = format!("scene-{b:02}");
        for f in 0..spec.floors {
            let scene_seed = splitmix64(seed ^ splitmix64((b as u64) << 16 | f as u64));
            let id = format!("{building}/floor-{f}");
            let height = f as f64 * spec.floor_spacing;
            let scene = generate_scene(&id, scene_seed, height, &spec.scene, &knowledge.catalog)?;
            episodes.extend(sample_floor(&mut rng, &building, &scene, spec, success_radius)?);
            scenes.push(scene);
        }
    }
    if episodes.is_empty() {
        return Err(EvalError::GenerationFailed("no requested goal occurs in any scene".into()));
    }
    episodes.shuffle(&mut rng);
    Ok(Dataset {
        version: 1,
        seed,
        success_radius,
        scenes,
        episodes,
    })
}

fn sample_floor(
    rng: &mut ChaCha8Rng,
    building: &str,
    scene: &Scene,
    spec: &DatasetSpec,
    success_radius: f64,
) -> Result<Vec<Episode>, EvalError> {
    let mut present = scene.labels();
    if let Some(goals) = &spec.goals {
        present.retain(|l| goals.contains(l));
    }
    if present.is_empty() {
        return Ok(Vec::new());
    }
    present.shuffle(rng);
    let world = crate::simworld::Raster::build(scene);
    let open: Vec<usize> = (0..world.cells.len()).filter(|&k| !world.blocked[k]).collect();
    let mut out = Vec::new();
    for i in 0..spec.episodes_per_floor {
        let goal = present[i % present.len()].clone();
        let targets: Vec<[f64; 2]> = scene.instances_of(&goal).map(|o| o.position).collect();
        let field = DistanceField::new(&world, &targets, success_radius);
        let mut start = None;
        for _ in 0..START_ATTEMPTS {
            let p = world.center(*open.choose(rng).expect("open cells"));
            if field.at(&world, p).is_some_and(|d| d > 0.0) {
                start = Some(p);
                break;
            }
        }
        let p = start.ok_or_else(|| {
            EvalError::GenerationFailed(format!("no solvable start for {goal:?} in {}", scene.id))
        })?;
        let heading = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        out.push(Episode {
            scene_id: building.to_string(),
            start: Pose::new(p[0], p[1], heading, scene.floor_height),
            goal_label: goal,
            floor_height: scene.floor_height,
        });
    }
    Ok(out)
}

/// Ablation switches; all on is the full system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Toggles {
    pub verify_stop: bool,
    pub memory_model: bool,
    pub probability_map: bool,
    pub footprint: bool,
    pub distance: bool,
    pub semantics: bool,
}

impl Default for Toggles {
    fn default() -> Self {
        Self {
            verify_stop: true,
            memory_model: true,
            probability_map: true,
            footprint: true,
            distance: true,
            semantics: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Stop,
    StepBudget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub group: usize,
    pub index_in_group: usize,
    pub scene_id: String,
    pub floor_height: f64,
    pub goal: String,
    pub start: Pose,
    pub end: Pose,
    pub success: bool,
    pub path_length: f64,
    pub shortest_length: f64,
    pub steps: usize,
    pub stop_reason: StopReason,
    pub frontier_selections: usize,
    pub verifications: usize,
    pub memory_at_start: usize,
    pub memory_at_end: usize,
    pub unknown_at_start: usize,
    pub unknown_at_end: usize,
}

impl EpisodeRecord {
    pub fn spl_term(&self) -> f64 {
        spl_term(self.success, self.shortest_length, self.path_length)
    }
}

/// One episode's SPL contribution. A start already inside the success
/// region counts as optimal only if the agent did not move.
pub fn spl_term(success: bool, shortest: f64, path: f64) -> f64 {
    if !success {
        return 0.0;
    }
    if shortest <= 0.0 {
        return if path <= 0.0 { 1.0 } else { 0.0 };
    }
    shortest / path.max(shortest)
}

/// `(SR, SPL)` in percent.
pub fn compute_spl(records: &[EpisodeRecord]) -> Result<(f64, f64), EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyReport);
    }
    let n = records.len() as f64;
    let sr = records.iter().filter(|r| r.success).count() as f64 / n * 100.0;
    let spl = records.iter().map(EpisodeRecord::spl_term).sum::<f64>() / n * 100.0;
    Ok((sr, spl))
}

/// Optional per-step observer, e.g. for trajectory logs.
pub trait StepObserver {
    fn on_step(&mut self, record: &EpisodeRecord, pose: &Pose, action: Action, controller: &Controller);
}

/// Runs groups of episodes with lifelong state. Shortest-path fields are
/// cached per scene and goal.
pub struct Runner<'a> {
    pub config: &'a Config,
    pub knowledge: &'a Knowledge,
    scenes: &'a [Scene],
    fields: BTreeMap<(String, String), (crate::simworld::Raster, DistanceField)>,
}

impl<'a> Runner<'a> {
    pub fn new(config: &'a Config, knowledge: &'a Knowledge, scenes: &'a [Scene]) -> Self {
        Self {
            config,
            knowledge,
            scenes,
            fields: BTreeMap::new(),
        }
    }

    fn shortest(&mut self, scene: &Scene, goal: &str, p: [f64; 2]) -> Result<f64, EvalError> {
        let radius = self.config.run.success_radius;
        let (raster, field) = self
            .fields
            .entry((scene.id.clone(), goal.to_string()))
            .or_insert_with(|| {
                let raster = crate::simworld::Raster::build_with(scene, self.config.sensor.agent_radius);
                let targets: Vec<[f64; 2]> = scene.instances_of(goal).map(|o| o.position).collect();
                let field = DistanceField::new(&raster, &targets, radius);
                (raster, field)
            });
        field
            .at(raster, p)
            .or_else(|| {
                let k = raster.nearest_open(p)?;
                let c = raster.center(k);
                field.at(raster, c).map(|d| d + distance(p, c))
            })
            .ok_or_else(|| EvalError::Unsolvable {
                scene: scene.id.clone(),
                goal: goal.to_string(),
            })
    }

    /// Run one group. `group_index` only labels records and seeds streams.
    pub fn run_group(
        &mut self,
        group_index: usize,
        group: &EpisodeGroup,
        seed: u64,
        mut observer: Option<&mut dyn StepObserver>,
    ) -> Result<Vec<EpisodeRecord>, EvalError> {
        let cfg = self.config;
        let scene = scene_for(self.scenes, &group.scene_id, group.anchor_height)
            .ok_or_else(|| EvalError::MissingScene(group.scene_id.clone()))?
            .clone();
        let group_seed = splitmix64(seed ^ splitmix64(group_index as u64 + 1));
        let mut detector = cfg.detector.clone();
        if detector.synonym_pools.is_empty() {
            detector.synonym_pools = self
                .knowledge
                .catalog
                .items
                .iter()
                .filter(|(_, it)| !it.synonyms.is_empty())
                .map(|(k, it)| (k.clone(), it.synonyms.clone()))
                .collect();
        }
        let mut world = World::new(
            scene.clone(),
            &self.knowledge.catalog,
            cfg.sensor.clone(),
            detector,
            cfg.verifier,
            group_seed,
        );
        let mut ctrl = Controller::new(
            cfg.controller_params(),
            self.knowledge.cooccurrence.clone(),
            self.knowledge.stoplist.clone(),
            Box::new(OracleMatcher {
                seed: cfg.run.matcher_seed,
            }),
            splitmix64(group_seed ^ 0xc0),
        );
        let synonyms = self.knowledge.catalog.synonym_table();
        let mut records = Vec::with_capacity(group.episodes.len());
        let mut pose: Option<Pose> = None;
        for (i, ep) in group.episodes.iter().enumerate() {
            if !cfg.toggles.memory_model {
                ctrl.reset_lifelong();
            }
            let start = match pose {
                Some(p) => Pose::new(p.x, p.y, p.heading, ep.floor_height),
                None => ep.start,
            };
            let shortest = self.shortest(&scene, &ep.goal_label, start.position())?;
            ctrl.begin_episode(&ep.goal_label, synonyms.synonyms(&ep.goal_label));
            let mut rec = EpisodeRecord {
                group: group_index,
                index_in_group: i,
                scene_id: ep.scene_id.clone(),
                floor_height: ep.floor_height,
                goal: ep.goal_label.clone(),
                start,
                end: start,
                success: false,
                path_length: 0.0,
                shortest_length: shortest,
                steps: 0,
                stop_reason: StopReason::StepBudget,
                frontier_selections: 0,
                verifications: 0,
                memory_at_start: ctrl.agent.memory.len(),
                memory_at_end: 0,
                unknown_at_start: ctrl.agent.unknown_cells(),
                unknown_at_end: 0,
            };
            let mut cur = start;
            while rec.steps < cfg.run.max_steps {
                let obs = world.sense(&cur)?;
                let action = ctrl.step(&obs, &mut world);
                rec.steps += 1;
                if let Some(o) = observer.as_deref_mut() {
                    o.on_step(&rec, &cur, action, &ctrl);
                }
                if action == Action::Stop {
                    rec.stop_reason = StopReason::Stop;
                    break;
                }
                let next = world.apply(&cur, action);
                rec.path_length += distance(cur.position(), next.position());
                cur = next;
            }
            rec.end = cur;
            rec.success = rec.stop_reason == StopReason::Stop
                && scene
                    .instances_of(&ep.goal_label)
                    .any(|o| distance(o.position, cur.position()) <= cfg.run.success_radius);
            rec.frontier_selections = ctrl.state.frontier_selections;
            rec.verifications = ctrl.state.verifications;
            rec.memory_at_end = ctrl.agent.memory.len();
            rec.unknown_at_end = ctrl.agent.unknown_cells();
            records.push(rec);
            pose = Some(cur);
        }
        Ok(records)
    }
}

/// Run every group in order and collect the report.
pub fn run_lifelong(
    dataset: &Dataset,
    config: &Config,
    knowledge: &Knowledge,
    seed: u64,
) -> Result<EvalReport, EvalError> {
    let groups = dataset.groups();
    let mut runner = Runner::new(config, knowledge, &dataset.scenes);
    let mut records = Vec::new();
    for (gi, g) in groups.iter().enumerate() {
        records.extend(runner.run_group(gi, g, seed, None)?);
    }
    EvalReport::new(config, knowledge, dataset.seed, seed, records)
}
