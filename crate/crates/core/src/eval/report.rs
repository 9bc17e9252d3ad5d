use super::{compute_spl, run_lifelong, Dataset, EpisodeRecord, EvalError, StopReason, Toggles};
use crate::config::{Config, Knowledge};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub version: u32,
    pub profile: String,
    pub fingerprint: String,
    pub dataset_seed: u64,
    pub run_seed: u64,
    pub toggles: Toggles,
    pub sr: f64,
    pub spl: f64,
    pub records: Vec<EpisodeRecord>,
}

impl EvalReport {
    pub fn new(
        config: &Config,
        knowledge: &Knowledge,
        dataset_seed: u64,
        run_seed: u64,
        records: Vec<EpisodeRecord>,
    ) -> Result<Self, EvalError> {
        let (sr, spl) = compute_spl(&records)?;
        Ok(Self {
            version: 1,
            profile: config.profile.clone(),
            fingerprint: config.fingerprint(knowledge),
            dataset_seed,
            run_seed,
            toggles: config.toggles,
            sr,
            spl,
            records,
        })
    }

    pub fn to_json(&self) -> Result<String, EvalError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, EvalError> {
        Ok(serde_json::from_str(s)?)
    }

    /// One row per episode; the header comment carries fingerprint and seeds.
    pub fn to_csv(&self) -> String {
        let mut s = format!(
            "# fingerprint={} dataset_seed={} run_seed={}\n",
            self.fingerprint, self.dataset_seed, self.run_seed
        );
        s.push_str(
            "group,index,scene,floor,goal,success,path_length,shortest_length,spl,steps,stop_reason,\
             frontier_selections,verifications,memory_start,memory_end,unknown_start,unknown_end\n",
        );
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{},{},{:.2},{},{},{:.4},{:.4},{:.4},{},{},{},{},{},{},{},{}",
                r.group,
                r.index_in_group,
                r.scene_id,
                r.floor_height,
                r.goal,
                u8::from(r.success),
                r.path_length,
                r.shortest_length,
                r.spl_term(),
                r.steps,
                stop_name(r.stop_reason),
                r.frontier_selections,
                r.verifications,
                r.memory_at_start,
                r.memory_at_end,
                r.unknown_at_start,
                r.unknown_at_end,
            );
        }
        s
    }

    /// Human-readable summary with the per-target-count curve.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "profile      {}", self.profile);
        let _ = writeln!(s, "fingerprint  {}", self.fingerprint);
        let _ = writeln!(s, "seeds        dataset={} run={}", self.dataset_seed, self.run_seed);
        let _ = writeln!(s, "toggles      {}", toggle_string(&self.toggles));
        let _ = writeln!(s, "episodes     {}", self.records.len());
        let _ = writeln!(s, "SR           {:.1}", self.sr);
        let _ = writeln!(s, "SPL          {:.1}", self.spl);
        let budget = self.records.iter().filter(|r| r.stop_reason == StopReason::StepBudget).count();
        let _ = writeln!(s, "step budget  {budget}");
        s.push_str("\ntarget  episodes     SR    SPL\n");
        for c in curves(&self.records) {
            let _ = writeln!(s, "{:>6}  {:>8}  {:>5.1}  {:>5.1}", c.index + 1, c.episodes, c.sr, c.spl);
        }
        s
    }
}

fn stop_name(r: StopReason) -> &'static str {
    match r {
        StopReason::Stop => "stop",
        StopReason::StepBudget => "step-budget",
    }
}

fn toggle_string(t: &Toggles) -> String {
    [
        ("verify_stop", t.verify_stop),
        ("memory_model", t.memory_model),
        ("probability_map", t.probability_map),
        ("footprint", t.footprint),
        ("distance", t.distance),
        ("semantics", t.semantics),
    ]
    .iter()
    .map(|(n, on)| format!("{n}={}", if *on { "on" } else { "off" }))
    .collect::<Vec<_>>()
    .join(" ")
}

/// SR and SPL of the k-th episode within each group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub index: usize,
    pub episodes: usize,
    pub sr: f64,
    pub spl: f64,
}

pub fn curves(records: &[EpisodeRecord]) -> Vec<CurvePoint> {
    let max = records.iter().map(|r| r.index_in_group).max();
    let Some(max) = max else { return Vec::new() };
    (0..=max)
        .filter_map(|k| {
            let sel: Vec<EpisodeRecord> = records.iter().filter(|r| r.index_in_group == k).cloned().collect();
            let (sr, spl) = compute_spl(&sel).ok()?;
            Some(CurvePoint {
                index: k,
                episodes: sel.len(),
                sr,
                spl,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub name: String,
    pub toggles: Toggles,
}

impl Variant {
    pub fn new(name: &str, f: impl FnOnce(&mut Toggles)) -> Self {
        let mut toggles = Toggles::default();
        f(&mut toggles);
        Self {
            name: name.into(),
            toggles,
        }
    }

    /// Full system against verify, memory and probability-map removal.
    pub fn system_ablation() -> Vec<Self> {
        vec![
            Self::new("full", |_| {}),
            Self::new("verify-off", |t| t.verify_stop = false),
            Self::new("memory-off", |t| t.memory_model = false),
            Self::new("probability-map-off", |t| t.probability_map = false),
        ]
    }

    /// Full explorer against each factor removed.
    pub fn factor_ablation() -> Vec<Self> {
        vec![
            Self::new("full", |_| {}),
            Self::new("no-footprint", |t| t.footprint = false),
            Self::new("no-distance", |t| t.distance = false),
            Self::new("no-semantics", |t| t.semantics = false),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub toggles: Toggles,
    pub sr: f64,
    pub spl: f64,
    pub episodes: usize,
    pub reports: Vec<EvalReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn row(&self, name: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.name == name)
    }
}

/// Every variant on every dataset, each run seeded with its dataset's seed.
/// Toggles in `base` are replaced by each variant's.
pub fn run_ablation(
    base: &Config,
    knowledge: &Knowledge,
    variants: &[Variant],
    datasets: &[Dataset],
) -> Result<AblationReport, EvalError> {
    let mut rows = Vec::new();
    for v in variants {
        let mut cfg = base.clone();
        cfg.toggles = v.toggles;
        let mut reports = Vec::new();
        let mut all = Vec::new();
        for d in datasets {
            let r = run_lifelong(d, &cfg, knowledge, d.seed)?;
            all.extend(r.records.iter().cloned());
            reports.push(r);
        }
        let (sr, spl) = compute_spl(&all)?;
        rows.push(AblationRow {
            name: v.name.clone(),
            toggles: v.toggles,
            sr,
            spl,
            episodes: all.len(),
            reports,
        });
    }
    Ok(AblationReport { rows })
}

pub fn ablation_table(report: &AblationReport) -> String {
    let mut s = String::from("variant                 episodes     SR    SPL\n");
    for r in &report.rows {
        let _ = writeln!(s, "{:<22}  {:>8}  {:>5.1}  {:>5.1}", r.name, r.episodes, r.sr, r.spl);
    }
    s
}
