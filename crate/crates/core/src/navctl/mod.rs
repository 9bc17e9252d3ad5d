//! The search loop: query memory for the goal, travel to the best candidate,
//! verify on arrival, and otherwise explore frontiers or wander.

mod planner;

pub use planner::{
    follow_path, path_length, plan_path, random_walk_target, simplify_path, Clearance, PlanError,
};

use crate::explorer::{
    choose_frontier, CooccurrenceTable, ExplorationParams, FootprintLog, Landmark, ScoredFrontier,
    ScoringContext, TriedFrontierSet,
};
use crate::gridmap::{cluster_frontiers, distance, CellState, FrontierWaypoint, OccupancyGrid, Point2, Pose};
use crate::memory::{
    compute_confidence, preprocess_label, EntryId, FeatureMatcher, MemoryEntry, MemoryModel, MemoryParams,
    QueryMode, Stoplist, SynonymSet,
};
use crate::simworld::{Observation, Verifier};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, VecDeque};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Stop,
    MoveForward,
    TurnLeft,
    TurnRight,
    LookUp,
    LookDown,
}

impl Action {
    pub const ALL: [Action; 6] = [
        Action::Stop,
        Action::MoveForward,
        Action::TurnLeft,
        Action::TurnRight,
        Action::LookUp,
        Action::LookDown,
    ];
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NavError {
    #[error("invalid call: {0}")]
    InvalidCall(String),
    #[error("invalid navigation parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifyParams {
    pub omega: f64,
    pub threshold: f64,
    /// Panorama views, one per turn.
    pub k_views: u32,
}

impl Default for VerifyParams {
    fn default() -> Self {
        Self {
            omega: 0.5,
            threshold: 0.4,
            k_views: 12,
        }
    }
}

impl VerifyParams {
    pub fn validate(&self) -> Result<(), NavError> {
        if !(0.0..=1.0).contains(&self.omega) {
            return Err(NavError::InvalidParams("omega outside [0, 1]".into()));
        }
        if self.k_views < 1 {
            return Err(NavError::InvalidParams("need at least one panorama view".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NavParams {
    pub inflation_radius: f64,
    /// Planner goal: nearest reachable free cell within this radius.
    pub approach_radius: f64,
    /// Free cells this close to the robot ignore inflation.
    pub start_relax: f64,
    pub heading_tolerance_deg: f64,
    pub waypoint_radius: f64,
    pub look_around_turns: u32,
    pub random_walk_radius: f64,
    pub max_replans: u32,
    pub frontier_eps: f64,
    pub frontier_min_pts: usize,
    /// Return heights (above the floor) that count as obstacles.
    pub height_band: [f64; 2],
    pub image_center: [f64; 2],
    /// Planned exploration moves give way as soon as memory holds a candidate.
    pub interrupt_exploration: bool,
    /// Run the verification panorama before stopping.
    pub verify_stop: bool,
    pub map_resolution: f64,
}

impl Default for NavParams {
    fn default() -> Self {
        Self {
            inflation_radius: 0.18,
            approach_radius: 0.5,
            start_relax: 0.25,
            heading_tolerance_deg: 15.0,
            waypoint_radius: 0.15,
            look_around_turns: 12,
            random_walk_radius: 2.0,
            max_replans: 3,
            frontier_eps: 1.5,
            frontier_min_pts: 3,
            height_band: [0.05, 2.0],
            image_center: [320.0, 240.0],
            interrupt_exploration: true,
            verify_stop: true,
            map_resolution: 0.1,
        }
    }
}

impl NavParams {
    pub fn validate(&self) -> Result<(), NavError> {
        let bad = |m: &str| Err(NavError::InvalidParams(m.into()));
        if !(self.inflation_radius >= 0.0 && self.approach_radius > 0.0 && self.waypoint_radius > 0.0) {
            return bad("radii must be positive");
        }
        if !(self.map_resolution > 0.0) {
            return bad("map resolution must be positive");
        }
        if !(self.frontier_eps > 0.0) || self.frontier_min_pts == 0 {
            return bad("frontier clustering parameters");
        }
        Ok(())
    }
}

/// Everything the controller reads besides per-episode state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerParams {
    pub nav: NavParams,
    pub verify: VerifyParams,
    pub memory: MemoryParams,
    pub exploration: ExplorationParams,
}

/// `S = ω·φ + (1 − ω)·C`.
pub fn verification_score(phi: f64, confidence: f64, omega: f64) -> f64 {
    omega * phi + (1.0 - omega) * confidence
}

/// Score a panorama for `entry`; the bool says whether to stop.
pub fn verify(
    entry: &MemoryEntry,
    goal: &str,
    panorama: &[Observation],
    verifier: &mut dyn Verifier,
    params: &VerifyParams,
) -> (f64, bool) {
    let phi = verifier.probability(goal, panorama);
    let s = verification_score(phi, entry.confidence, params.omega);
    (s, s >= params.threshold)
}

/// A full turn in place, one view per step.
pub fn look_around(turns: u32) -> Vec<Action> {
    vec![Action::TurnLeft; turns as usize]
}

/// Highest confidence, then shorter planned path, then list order.
pub fn select_best_candidate<'a>(
    candidates: &[&'a MemoryEntry],
    grid: &OccupancyGrid,
    pose: &Pose,
    params: &NavParams,
) -> Result<&'a MemoryEntry, NavError> {
    let top = candidates
        .iter()
        .map(|e| e.confidence)
        .fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<&'a MemoryEntry> = candidates.iter().copied().filter(|e| e.confidence == top).collect();
    match tied.len() {
        0 => Err(NavError::InvalidCall("no candidates".into())),
        1 => Ok(tied[0]),
        _ => {
            let len = |e: &MemoryEntry| {
                plan_path(grid, pose, e.planar_position(), params).map_or(f64::INFINITY, |p| path_length(&p))
            };
            let lens: Vec<f64> = tied.iter().map(|e| len(e)).collect();
            let best = (0..tied.len())
                .min_by(|&a, &b| lens[a].total_cmp(&lens[b]).then(a.cmp(&b)))
                .expect("non-empty");
            Ok(tied[best])
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Phase {
    LookingAround { remaining: u32, interruptible: bool },
    QueryMemory,
    NavigateToGoal { entry: EntryId, target: Point2 },
    Verifying { entry: EntryId, remaining: u32 },
    NavigateToFrontier { waypoint: FrontierWaypoint },
    RandomWalking { target: Point2 },
    Done,
}

impl Phase {
    pub fn name(&self) -> &'static str {
        match self {
            Phase::LookingAround { .. } => "look-around",
            Phase::QueryMemory => "query-memory",
            Phase::NavigateToGoal { .. } => "navigate-goal",
            Phase::Verifying { .. } => "verifying",
            Phase::NavigateToFrontier { .. } => "navigate-frontier",
            Phase::RandomWalking { .. } => "random-walk",
            Phase::Done => "done",
        }
    }
}

/// Per-episode controller state.
#[derive(Debug, Clone)]
pub struct ControllerState {
    pub phase: Phase,
    pub tried_goals: BTreeSet<EntryId>,
    pub pending_path: VecDeque<Point2>,
    pub step_count: usize,
    pub frontier_selections: usize,
    pub verifications: usize,
    replans: u32,
    last: Option<(Pose, Action)>,
    panorama: Vec<Observation>,
}

impl ControllerState {
    fn new(look: u32) -> Self {
        Self {
            phase: Phase::LookingAround {
                remaining: look,
                interruptible: false,
            },
            tried_goals: BTreeSet::new(),
            pending_path: VecDeque::new(),
            step_count: 0,
            frontier_selections: 0,
            verifications: 0,
            replans: 0,
            last: None,
            panorama: Vec::new(),
        }
    }
}

/// State that survives between episodes of one lifelong group.
#[derive(Debug, Clone)]
pub struct AgentState {
    pub grid: OccupancyGrid,
    pub memory: MemoryModel,
    pub footprint: FootprintLog,
    pub tried_frontiers: TriedFrontierSet,
}

impl AgentState {
    pub fn new(params: &ControllerParams) -> Self {
        Self {
            grid: OccupancyGrid::new([0.0, 0.0], params.nav.map_resolution, 1, 1).expect("valid resolution"),
            memory: MemoryModel::new(),
            footprint: FootprintLog::new(params.exploration.sigma_footprint, params.exploration.kernel_mode),
            tried_frontiers: TriedFrontierSet::new(),
        }
    }

    pub fn unknown_cells(&self) -> usize {
        self.grid.count(CellState::Unknown)
    }
}

/// One line of the trajectory log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    pub pose: Pose,
    pub action: Action,
    pub phase: String,
    pub memory_size: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frontier: Option<ScoredFrontier>,
}

/// Transitions allowed within one `step` before falling back to an idle turn.
const MAX_TRANSITIONS: usize = 24;

pub struct Controller {
    pub params: ControllerParams,
    pub agent: AgentState,
    pub state: ControllerState,
    goal: String,
    synonyms: SynonymSet,
    table: CooccurrenceTable,
    stoplist: Stoplist,
    matcher: Box<dyn FeatureMatcher>,
    rng: ChaCha8Rng,
    trace: Option<Vec<TraceRecord>>,
    last_frontier: Option<ScoredFrontier>,
}

impl Controller {
    pub fn new(
        params: ControllerParams,
        table: CooccurrenceTable,
        stoplist: Stoplist,
        matcher: Box<dyn FeatureMatcher>,
        seed: u64,
    ) -> Self {
        let agent = AgentState::new(&params);
        let look = params.nav.look_around_turns;
        Self {
            params,
            agent,
            state: ControllerState::new(look),
            goal: String::new(),
            synonyms: SynonymSet::new("", &[]),
            table,
            stoplist,
            matcher,
            rng: ChaCha8Rng::seed_from_u64(seed),
            trace: None,
            last_frontier: None,
        }
    }

    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    pub fn take_trace(&mut self) -> Vec<TraceRecord> {
        self.trace.as_mut().map(std::mem::take).unwrap_or_default()
    }

    /// Start a new goal. Map, memory, footprint and tried frontiers are kept.
    pub fn begin_episode(&mut self, goal: &str, synonyms: SynonymSet) {
        self.goal = synonyms.goal.clone();
        if self.goal.is_empty() {
            self.goal = goal.to_string();
        }
        self.synonyms = synonyms;
        self.state = ControllerState::new(self.params.nav.look_around_turns);
    }

    /// Forget everything learned about the environment.
    pub fn reset_lifelong(&mut self) {
        self.agent = AgentState::new(&self.params);
    }

    pub fn goal(&self) -> &str {
        &self.goal
    }

    /// Memory entries matching the goal that have not been ruled out.
    pub fn candidates(&self) -> Vec<&MemoryEntry> {
        self.agent
            .memory
            .query(&self.synonyms, QueryMode::WordBoundary)
            .into_iter()
            .filter(|e| !self.state.tried_goals.contains(&e.id))
            .collect()
    }

    fn perceive(&mut self, obs: &Observation) {
        let nav = &self.params.nav;
        // a malformed scan only costs this step's map update
        let _ = self.agent.grid.integrate_observation(&obs.pose, &obs.scan, nav.height_band);
        self.agent.footprint.record(obs.pose.position());
        for sd in &obs.detections {
            let det = &sd.detection;
            let Ok(label) = preprocess_label(&det.raw_label, &self.stoplist) else {
                continue;
            };
            let Ok(conf) = compute_confidence(det, nav.image_center, self.params.memory.sigma_conf) else {
                continue;
            };
            let entry = MemoryEntry::new(label, det.view.clone(), det.world_point, obs.scene_sample.clone(), conf);
            self.agent.memory.upsert(entry, self.matcher.as_ref(), &self.params.memory);
        }
    }

    /// Consume one observation and emit exactly one action.
    pub fn step(&mut self, obs: &Observation, verifier: &mut dyn Verifier) -> Action {
        let pose = obs.pose;
        if let Some((prev, Action::MoveForward)) = self.state.last {
            if prev.x == pose.x && prev.y == pose.y {
                self.on_blocked(&pose);
            }
        }
        self.perceive(obs);
        self.last_frontier = None;
        let action = self.decide(obs, verifier);
        self.state.step_count += 1;
        self.state.last = Some((pose, action));
        if let Some(t) = self.trace.as_mut() {
            t.push(TraceRecord {
                step: self.state.step_count,
                pose,
                action,
                phase: self.state.phase.name().to_string(),
                memory_size: self.agent.memory.len(),
                frontier: self.last_frontier,
            });
        }
        action
    }

    fn on_blocked(&mut self, pose: &Pose) {
        self.state.replans += 1;
        if self.state.replans > self.params.nav.max_replans {
            self.abandon_target();
            return;
        }
        let target = match &self.state.phase {
            Phase::NavigateToGoal { target, .. } | Phase::RandomWalking { target } => Some(*target),
            Phase::NavigateToFrontier { waypoint } => Some(waypoint.world),
            _ => None,
        };
        if let Some(t) = target {
            if !self.set_path(pose, t) {
                self.abandon_target();
            }
        }
    }

    fn abandon_target(&mut self) {
        if let Phase::NavigateToGoal { entry, .. } = self.state.phase {
            self.state.tried_goals.insert(entry);
        }
        self.state.pending_path.clear();
        self.state.replans = 0;
        self.state.phase = Phase::QueryMemory;
    }

    /// Plan and simplify a path; false when the target is unreachable.
    fn set_path(&mut self, pose: &Pose, target: Point2) -> bool {
        let nav = &self.params.nav;
        let mut clear = Clearance::new(&self.agent.grid, nav.inflation_radius, pose.position(), nav.start_relax);
        match planner::plan_with(&mut clear, pose, target, nav.approach_radius) {
            Ok(p) => {
                self.state.pending_path = simplify_path(&mut clear, &p).into();
                true
            }
            Err(_) => {
                self.state.pending_path.clear();
                false
            }
        }
    }

    /// The next path segment still runs through passable cells.
    fn path_still_clear(&self, pose: &Pose) -> bool {
        let Some(next) = self.state.pending_path.front() else {
            return true;
        };
        let nav = &self.params.nav;
        let mut clear = Clearance::new(&self.agent.grid, nav.inflation_radius, pose.position(), nav.start_relax);
        clear.line_of_sight(pose.position(), *next)
    }

    fn interrupt(&self) -> bool {
        self.params.nav.interrupt_exploration && !self.candidates().is_empty()
    }

    fn follow(&mut self, pose: &Pose, target: Point2) -> Option<Action> {
        if !self.path_still_clear(pose) && !self.set_path(pose, target) {
            self.abandon_target();
            return None;
        }
        follow_path(pose, &mut self.state.pending_path, &self.params.nav)
    }

    fn decide(&mut self, obs: &Observation, verifier: &mut dyn Verifier) -> Action {
        let pose = obs.pose;
        for _ in 0..MAX_TRANSITIONS {
            match self.state.phase.clone() {
                Phase::Done => return Action::Stop,
                Phase::LookingAround {
                    remaining,
                    interruptible,
                } => {
                    if remaining == 0 || (interruptible && self.interrupt()) {
                        self.state.phase = Phase::QueryMemory;
                        continue;
                    }
                    self.state.phase = Phase::LookingAround {
                        remaining: remaining - 1,
                        interruptible,
                    };
                    return Action::TurnLeft;
                }
                Phase::QueryMemory => {
                    self.state.replans = 0;
                    if self.query_memory(&pose) {
                        continue;
                    }
                    if self.next_frontier(&pose) {
                        continue;
                    }
                    match random_walk_target(&self.agent.grid, &pose, &mut self.rng, &self.params.nav) {
                        Some(t) if self.set_path(&pose, t) => {
                            self.state.phase = Phase::RandomWalking { target: t };
                            continue;
                        }
                        _ => return Action::TurnLeft,
                    }
                }
                Phase::NavigateToGoal { entry, target } => {
                    let Some(e) = self.agent.memory.get(entry) else {
                        self.state.phase = Phase::QueryMemory;
                        continue;
                    };
                    // a higher-confidence sighting may have moved the entry
                    let now = e.planar_position();
                    if distance(now, target) > self.params.nav.approach_radius {
                        if self.set_path(&pose, now) {
                            self.state.phase = Phase::NavigateToGoal { entry, target: now };
                        } else {
                            self.abandon_target();
                        }
                        continue;
                    }
                    if let Some(a) = self.follow(&pose, target) {
                        return a;
                    }
                    if self.state.phase != (Phase::NavigateToGoal { entry, target }) {
                        continue;
                    }
                    if !self.params.nav.verify_stop {
                        self.state.phase = Phase::Done;
                        return Action::Stop;
                    }
                    self.state.panorama.clear();
                    self.state.phase = Phase::Verifying {
                        entry,
                        remaining: self.params.verify.k_views,
                    };
                }
                Phase::Verifying { entry, remaining } => {
                    if remaining > 0 {
                        self.state.panorama.push(obs.clone());
                        self.state.phase = Phase::Verifying {
                            entry,
                            remaining: remaining - 1,
                        };
                        return Action::TurnLeft;
                    }
                    self.state.verifications += 1;
                    let passed = match self.agent.memory.get(entry) {
                        Some(e) => verify(e, &self.goal, &self.state.panorama, verifier, &self.params.verify).1,
                        None => false,
                    };
                    self.state.panorama.clear();
                    if passed {
                        self.state.phase = Phase::Done;
                        return Action::Stop;
                    }
                    let _ = self.agent.memory.remove(entry);
                    self.state.tried_goals.insert(entry);
                    self.state.phase = Phase::QueryMemory;
                }
                Phase::NavigateToFrontier { waypoint } => {
                    if self.interrupt() {
                        self.state.pending_path.clear();
                        self.state.phase = Phase::QueryMemory;
                        continue;
                    }
                    if !self.agent.grid.is_frontier(waypoint.cell) {
                        // explored from afar: pick the next one without stopping to look
                        self.state.pending_path.clear();
                        self.state.phase = Phase::QueryMemory;
                        continue;
                    }
                    if let Some(a) = self.follow(&pose, waypoint.world) {
                        return a;
                    }
                    if self.state.phase == (Phase::NavigateToFrontier { waypoint }) {
                        self.state.phase = Phase::LookingAround {
                            remaining: self.params.nav.look_around_turns,
                            interruptible: true,
                        };
                    }
                }
                Phase::RandomWalking { target } => {
                    if self.interrupt() {
                        self.state.pending_path.clear();
                        self.state.phase = Phase::QueryMemory;
                        continue;
                    }
                    if let Some(a) = self.follow(&pose, target) {
                        return a;
                    }
                    self.state.phase = Phase::QueryMemory;
                }
            }
        }
        Action::TurnLeft
    }

    /// Pick a memory candidate and plan to it. True if the phase changed.
    fn query_memory(&mut self, pose: &Pose) -> bool {
        loop {
            let chosen = {
                let cands = self.candidates();
                if cands.is_empty() {
                    return false;
                }
                let best = select_best_candidate(&cands, &self.agent.grid, pose, &self.params.nav)
                    .expect("non-empty candidates");
                (best.id, best.planar_position())
            };
            let (id, target) = chosen;
            if self.set_path(pose, target) {
                self.state.phase = Phase::NavigateToGoal { entry: id, target };
                return true;
            }
            self.state.tried_goals.insert(id);
        }
    }

    /// Choose and plan to an untried frontier. True if the phase changed.
    fn next_frontier(&mut self, pose: &Pose) -> bool {
        let nav = self.params.nav.clone();
        let cells = self.agent.grid.detect_frontiers();
        if cells.is_empty() {
            return false;
        }
        let waypoints = cluster_frontiers(&self.agent.grid, &cells, nav.frontier_eps, nav.frontier_min_pts);
        if waypoints.is_empty() {
            return false;
        }
        self.agent.footprint.sync(&self.agent.grid);
        let labels: Vec<(String, Point2)> = self
            .agent
            .memory
            .entries()
            .iter()
            .map(|e| (e.label.clone(), e.planar_position()))
            .collect();
        let landmarks: Vec<Landmark<'_>> = labels
            .iter()
            .map(|(l, p)| Landmark {
                label: l.as_str(),
                position: *p,
            })
            .collect();
        loop {
            let decision = {
                let ctx = ScoringContext {
                    pose,
                    landmarks: &landmarks,
                    goal: &self.goal,
                    table: &self.table,
                    footprint: &self.agent.footprint,
                    params: &self.params.exploration,
                };
                choose_frontier(&waypoints, &mut self.agent.tried_frontiers, &ctx, &mut self.rng)
            };
            let Some(chosen) = decision.chosen else {
                return false;
            };
            self.state.frontier_selections += 1;
            if self.set_path(pose, chosen.waypoint.world) {
                self.last_frontier = Some(chosen);
                self.state.phase = Phase::NavigateToFrontier {
                    waypoint: chosen.waypoint,
                };
                return true;
            }
        }
    }
}
