//! Open-vocabulary object memory.
//!
//! Each entry stores a cleaned label, a bounded buffer of views, a 3D
//! position, the HSV histogram of the surrounding scene and a detection
//! confidence. New sightings of an existing label are screened with a
//! descriptor similarity score; ambiguous scores fall through to local
//! feature matching before two records are merged.

mod descriptor;
pub mod kmp;

pub use descriptor::{sigmoid, Hsv, HsvHistogram, HSV_BINS};

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MemoryError {
    #[error("invalid detection: {0}")]
    InvalidDetection(String),
    #[error("invalid matcher input: {0}")]
    InvalidState(String),
    #[error("memory entry {0:?} not found")]
    NotFound(EntryId),
    #[error("invalid memory parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntryId(pub u64);

/// Stand-in for an image crop: the object's latent appearance token plus a
/// small rendered HSV pixel block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewPatch {
    pub latent_feature_id: u64,
    pub pixels: Vec<Hsv>,
}

/// Pixel rectangle; `left`/`top` may be negative for boxes spilling off-image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
}

impl BBox {
    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    pub fn center(&self) -> [f64; 2] {
        [self.left + self.width / 2.0, self.top + self.height / 2.0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub raw_label: String,
    pub bbox: BBox,
    pub center_px: [f64; 2],
    pub depth_at_center: f64,
    pub view: ViewPatch,
    pub world_point: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MemoryParams {
    /// Confidence decay scale.
    pub sigma_conf: f64,
    pub lambda_h: f64,
    pub lambda_x: f64,
    /// Positional sigmoid sharpness, 1/m.
    pub k_sigmoid: f64,
    pub tau_l: f64,
    pub tau_u: f64,
    /// Per-correspondence score threshold handed to the matcher.
    pub tau_sg: f64,
    /// Minimum correspondence count for a match.
    pub tau_m: u32,
    /// Image buffer capacity per entry.
    pub capacity: usize,
}

impl Default for MemoryParams {
    fn default() -> Self {
        Self {
            sigma_conf: 1.0,
            lambda_h: 0.5,
            lambda_x: 0.5,
            k_sigmoid: 0.3,
            tau_l: 0.2,
            tau_u: 0.8,
            tau_sg: 0.2,
            tau_m: 60,
            capacity: 5,
        }
    }
}

impl MemoryParams {
    pub fn validate(&self) -> Result<(), MemoryError> {
        let bad = |m: &str| Err(MemoryError::InvalidParams(m.into()));
        if !(self.tau_l < self.tau_u) {
            return bad("tau_l must be below tau_u");
        }
        if self.tau_m < 1 {
            return bad("tau_m must be at least 1");
        }
        if self.lambda_h < 0.0 || self.lambda_x < 0.0 {
            return bad("similarity weights must be non-negative");
        }
        if self.capacity == 0 {
            return bad("image buffer capacity must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub id: EntryId,
    pub label: String,
    pub images: Vec<ViewPatch>,
    pub position: [f64; 3],
    pub scene: HsvHistogram,
    pub confidence: f64,
}

impl MemoryEntry {
    /// A fresh record; the id is assigned when it is inserted into a model.
    pub fn new(
        label: impl Into<String>,
        view: ViewPatch,
        position: [f64; 3],
        scene: HsvHistogram,
        confidence: f64,
    ) -> Self {
        Self {
            id: EntryId(u64::MAX),
            label: label.into(),
            images: vec![view],
            position,
            scene,
            confidence,
        }
    }

    pub fn planar_position(&self) -> [f64; 2] {
        [self.position[0], self.position[1]]
    }
}

/// A goal label and the alternative surface forms it may appear under.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynonymSet {
    pub goal: String,
    pub synonyms: Vec<String>,
}

impl SynonymSet {
    pub fn new(goal: &str, synonyms: &[String]) -> Self {
        Self {
            goal: normalize(goal),
            synonyms: synonyms.iter().map(|s| normalize(s)).collect(),
        }
    }

    /// Goal first, then synonyms; duplicates and empties removed.
    pub fn patterns(&self) -> Vec<&str> {
        let mut seen = BTreeSet::new();
        std::iter::once(self.goal.as_str())
            .chain(self.synonyms.iter().map(String::as_str))
            .filter(|p| !p.is_empty() && seen.insert(*p))
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Stoplist {
    pub keywords: Vec<String>,
}

impl Stoplist {
    pub fn new<S: AsRef<str>>(keywords: &[S]) -> Self {
        Self {
            keywords: keywords.iter().map(|k| normalize(k.as_ref())).collect(),
        }
    }
}

/// Lowercase, trim and collapse internal whitespace.
pub fn normalize(raw: &str) -> String {
    raw.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelRejected {
    Empty,
    Stopword(String),
}

/// Normalize a raw detector label and drop noise labels.
pub fn preprocess_label(raw: &str, stoplist: &Stoplist) -> Result<String, LabelRejected> {
    let label = normalize(raw);
    if label.is_empty() {
        return Err(LabelRejected::Empty);
    }
    if let Some(k) = stoplist
        .keywords
        .iter()
        .find(|k| !k.is_empty() && kmp::contains_word(&label, k))
    {
        return Err(LabelRejected::Stopword(k.clone()));
    }
    Ok(label)
}

/// Detection confidence `exp(-σ · ‖p̄_c − p_c‖ · D / A_b)`, clamped to `(0, 1]`.
pub fn compute_confidence(det: &Detection, image_center: [f64; 2], sigma: f64) -> Result<f64, MemoryError> {
    let area = det.bbox.area();
    if !(area > 0.0) || !area.is_finite() {
        return Err(MemoryError::InvalidDetection(format!("bbox area {area}")));
    }
    if !(det.depth_at_center > 0.0) {
        return Err(MemoryError::InvalidDetection(format!(
            "depth {}",
            det.depth_at_center
        )));
    }
    let offset = (det.center_px[0] - image_center[0]).hypot(det.center_px[1] - image_center[1]);
    Ok(confidence_value(offset, det.depth_at_center, area, sigma))
}

/// The scalar confidence formula on raw inputs.
pub fn confidence_value(offset_px: f64, depth: f64, area_px2: f64, sigma: f64) -> f64 {
    (-sigma * offset_px * depth / area_px2)
        .exp()
        .clamp(f64::MIN_POSITIVE, 1.0)
}

/// `λ_H · Sim(H_a, H_b) − λ_X · Sigmoid(k ‖X_a − X_b‖)`.
pub fn descriptor_similarity(a: &MemoryEntry, b: &MemoryEntry, params: &MemoryParams) -> f64 {
    let d = a
        .position
        .iter()
        .zip(&b.position)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    params.lambda_h * a.scene.intersection(&b.scene) - params.lambda_x * sigmoid(params.k_sigmoid * d)
}

/// Local-feature matcher between two views: the number of correspondences
/// scoring above `tau_sg`.
pub trait FeatureMatcher {
    fn match_count(&self, a: &ViewPatch, b: &ViewPatch, tau_sg: f64) -> u32;
}

/// True iff some pair of views shares at least `tau_m` correspondences.
pub fn match_instances(
    imgs_a: &[ViewPatch],
    imgs_b: &[ViewPatch],
    matcher: &dyn FeatureMatcher,
    params: &MemoryParams,
) -> Result<bool, MemoryError> {
    if imgs_a.is_empty() || imgs_b.is_empty() {
        return Err(MemoryError::InvalidState("empty image buffer".into()));
    }
    let best = imgs_a
        .iter()
        .flat_map(|a| imgs_b.iter().map(move |b| (a, b)))
        .map(|(a, b)| matcher.match_count(a, b, params.tau_sg))
        .max()
        .unwrap_or(0);
    Ok(best >= params.tau_m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UpsertOutcome {
    Inserted(EntryId),
    /// Merged into an existing entry; `overwritten` says whether the incoming
    /// descriptors replaced the incumbent's.
    Merged { into: EntryId, overwritten: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QueryMode {
    /// Matches must start and end on token boundaries ("cup" ∉ "cupboard").
    #[default]
    WordBoundary,
    /// Plain substring containment.
    RawSubstring,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MemoryModel {
    entries: Vec<MemoryEntry>,
    next_id: u64,
}

impl MemoryModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in insertion order.
    pub fn entries(&self) -> &[MemoryEntry] {
        &self.entries
    }

    pub fn get(&self, id: EntryId) -> Option<&MemoryEntry> {
        self.entries
            .binary_search_by_key(&id, |e| e.id)
            .ok()
            .map(|i| &self.entries[i])
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    /// Insert a new sighting or fold it into the instance it re-observes.
    pub fn upsert(
        &mut self,
        mut incoming: MemoryEntry,
        matcher: &dyn FeatureMatcher,
        params: &MemoryParams,
    ) -> UpsertOutcome {
        let mut candidates: Vec<(f64, usize)> = self
            .entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.label == incoming.label)
            .map(|(i, e)| (descriptor_similarity(e, &incoming, params), i))
            .collect();
        candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

        let mut confirmed = None;
        for (s_m, i) in candidates {
            if s_m < params.tau_l {
                // sorted descending: nothing further can pass
                break;
            }
            let same = s_m > params.tau_u
                || match_instances(&self.entries[i].images, &incoming.images, matcher, params)
                    .unwrap_or(false);
            if same {
                confirmed = Some(i);
                break;
            }
        }

        match confirmed {
            None => {
                incoming.id = EntryId(self.next_id);
                self.next_id += 1;
                let id = incoming.id;
                self.entries.push(incoming);
                UpsertOutcome::Inserted(id)
            }
            Some(i) => {
                let e = &mut self.entries[i];
                let overwritten = e.confidence <= incoming.confidence;
                if overwritten {
                    e.position = incoming.position;
                    e.scene = incoming.scene;
                    e.confidence = incoming.confidence;
                }
                e.images.extend(incoming.images);
                let excess = e.images.len().saturating_sub(params.capacity);
                e.images.drain(..excess);
                UpsertOutcome::Merged {
                    into: e.id,
                    overwritten,
                }
            }
        }
    }

    /// Entries whose label contains the goal or a synonym, highest confidence
    /// first (insertion order on ties).
    pub fn query(&self, syn: &SynonymSet, mode: QueryMode) -> Vec<&MemoryEntry> {
        let patterns = syn.patterns();
        let mut hits: Vec<&MemoryEntry> = self
            .entries
            .iter()
            .filter(|e| {
                patterns.iter().any(|p| match mode {
                    QueryMode::WordBoundary => kmp::contains_word(&e.label, p),
                    QueryMode::RawSubstring => kmp::contains(&e.label, p),
                })
            })
            .collect();
        // stable sort keeps insertion order among equal confidences
        hits.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
        hits
    }

    pub fn remove(&mut self, id: EntryId) -> Result<MemoryEntry, MemoryError> {
        let i = self
            .entries
            .binary_search_by_key(&id, |e| e.id)
            .map_err(|_| MemoryError::NotFound(id))?;
        Ok(self.entries.remove(i))
    }

    pub fn snapshot(&self) -> MemorySnapshot {
        MemorySnapshot {
            version: 1,
            entries: self
                .entries
                .iter()
                .map(|e| EntrySnapshot {
                    id: e.id,
                    label: e.label.clone(),
                    latent_ids: e.images.iter().map(|v| v.latent_feature_id).collect(),
                    position: e.position,
                    scene: e.scene.clone(),
                    confidence: e.confidence,
                })
                .collect(),
        }
    }
}

/// Serializable memory contents without view pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemorySnapshot {
    pub version: u32,
    pub entries: Vec<EntrySnapshot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntrySnapshot {
    pub id: EntryId,
    pub label: String,
    pub latent_ids: Vec<u64>,
    pub position: [f64; 3],
    pub scene: HsvHistogram,
    pub confidence: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Same latent id → 100 correspondences, otherwise 10.
    struct IdMatcher;
    impl FeatureMatcher for IdMatcher {
        fn match_count(&self, a: &ViewPatch, b: &ViewPatch, _tau_sg: f64) -> u32 {
            if a.latent_feature_id == b.latent_feature_id {
                100
            } else {
                10
            }
        }
    }

    fn view(id: u64) -> ViewPatch {
        ViewPatch {
            latent_feature_id: id,
            pixels: vec![],
        }
    }

    fn room(h: f64) -> HsvHistogram {
        HsvHistogram::from_pixels(&[[h, h / 360.0, h / 360.0]])
    }

    fn entry(label: &str, id: u64, pos: [f64; 3], hue: f64, c: f64) -> MemoryEntry {
        MemoryEntry::new(label, view(id), pos, room(hue), c)
    }

    fn stop() -> Stoplist {
        Stoplist::new(&["wall", "various objects"])
    }

    #[test]
    fn label_preprocessing() {
        assert_eq!(preprocess_label("wall", &stop()), Err(LabelRejected::Stopword("wall".into())));
        assert_eq!(preprocess_label(" Green  Desk ", &stop()).unwrap(), "green desk");
        assert_eq!(preprocess_label("cup", &Stoplist::new(&["wall"])).unwrap(), "cup");
        assert_eq!(preprocess_label("   ", &stop()), Err(LabelRejected::Empty));
        assert!(preprocess_label("Various   Objects", &stop()).is_err());
        // whole tokens only
        assert_eq!(preprocess_label("wallet", &stop()).unwrap(), "wallet");
    }

    fn det(center: [f64; 2], depth: f64, side: f64) -> Detection {
        Detection {
            raw_label: "cup".into(),
            bbox: BBox {
                left: center[0] - side / 2.0,
                top: center[1] - side / 2.0,
                width: side,
                height: side,
            },
            center_px: center,
            depth_at_center: depth,
            view: view(0),
            world_point: [0.0; 3],
        }
    }

    #[test]
    fn confidence_examples() {
        let c = [320.0, 240.0];
        assert_eq!(compute_confidence(&det(c, 3.0, 10.0), c, 7.0).unwrap(), 1.0);
        let d = det([330.0, 240.0], 2.0, 20.0);
        assert_relative_eq!(compute_confidence(&d, c, 1.0).unwrap(), (-0.05f64).exp(), max_relative = 1e-12);
        let big = det([330.0, 240.0], 2.0, 20.0 * 2f64.sqrt());
        assert!(compute_confidence(&big, c, 1.0).unwrap() > compute_confidence(&d, c, 1.0).unwrap());
        let zero = det(c, 1.0, 0.0);
        assert!(matches!(compute_confidence(&zero, c, 1.0), Err(MemoryError::InvalidDetection(_))));
    }

    fn paper() -> MemoryParams {
        MemoryParams {
            k_sigmoid: 8.0,
            ..MemoryParams::default()
        }
    }

    #[test]
    fn similarity_examples() {
        let p = paper();
        let a = entry("cup", 1, [0.0; 3], 10.0, 0.5);
        assert_relative_eq!(descriptor_similarity(&a, &a, &p), 0.25);
        let far = entry("cup", 1, [1e6, 0.0, 0.0], 200.0, 0.5);
        assert_relative_eq!(descriptor_similarity(&a, &far, &p), -0.5);
        let d = 3f64.ln() / p.k_sigmoid;
        let near = entry("cup", 1, [d, 0.0, 0.0], 10.0, 0.5);
        assert_relative_eq!(descriptor_similarity(&a, &near, &p), 0.125, max_relative = 1e-12);
    }

    #[test]
    fn matcher_threshold() {
        let p = MemoryParams::default();
        assert!(match_instances(&[view(3)], &[view(3)], &IdMatcher, &p).unwrap());
        assert!(!match_instances(&[view(3)], &[view(4)], &IdMatcher, &p).unwrap());
        assert!(match_instances(&[view(9), view(3)], &[view(3)], &IdMatcher, &p).unwrap());
        let vacuous = MemoryParams { tau_m: 0, ..p.clone() };
        assert!(match_instances(&[view(3)], &[view(4)], &IdMatcher, &vacuous).unwrap());
        assert!(match_instances(&[], &[view(4)], &IdMatcher, &p).is_err());
    }

    #[test]
    fn upsert_examples() {
        let p = MemoryParams::default();
        let mut m = MemoryModel::new();
        let first = m.upsert(entry("cup", 1, [0.0; 3], 10.0, 0.3), &IdMatcher, &p);
        assert_eq!(first, UpsertOutcome::Inserted(EntryId(0)));

        let better = entry("cup", 1, [0.1, 0.0, 0.0], 10.0, 0.7);
        assert_eq!(
            m.upsert(better, &IdMatcher, &p),
            UpsertOutcome::Merged {
                into: EntryId(0),
                overwritten: true
            }
        );
        let e = m.get(EntryId(0)).unwrap();
        assert_eq!(e.confidence, 0.7);
        assert_eq!(e.position, [0.1, 0.0, 0.0]);
        assert_eq!(e.images.len(), 2);

        // weaker sighting keeps incumbent descriptors
        let worse = entry("cup", 1, [0.2, 0.0, 0.0], 10.0, 0.1);
        assert!(matches!(
            m.upsert(worse, &IdMatcher, &p),
            UpsertOutcome::Merged { overwritten: false, .. }
        ));
        assert_eq!(m.get(EntryId(0)).unwrap().confidence, 0.7);

        // another room, 8 m away
        let other = entry("cup", 2, [8.0, 0.0, 0.0], 200.0, 0.9);
        assert_eq!(m.upsert(other, &IdMatcher, &p), UpsertOutcome::Inserted(EntryId(1)));
        assert_eq!(m.len(), 2);
    }

    #[test]
    fn image_buffer_is_bounded() {
        let p = MemoryParams::default();
        let mut m = MemoryModel::new();
        for i in 0..12 {
            m.upsert(entry("cup", 1, [0.0; 3], 10.0, 0.1 + i as f64 * 0.01), &IdMatcher, &p);
        }
        assert_eq!(m.len(), 1);
        assert_eq!(m.entries()[0].images.len(), p.capacity);
    }

    #[test]
    fn same_label_distinct_latent_stays_separate() {
        let p = MemoryParams::default();
        let mut m = MemoryModel::new();
        m.upsert(entry("cup", 1, [0.0; 3], 10.0, 0.5), &IdMatcher, &p);
        m.upsert(entry("cup", 2, [0.3, 0.0, 0.0], 10.0, 0.5), &IdMatcher, &p);
        assert_eq!(m.len(), 2);
    }

    #[test]
    fn query_examples() {
        let p = MemoryParams::default();
        let mut m = MemoryModel::new();
        let syn = SynonymSet::new("desk", &[]);
        assert!(m.query(&syn, QueryMode::WordBoundary).is_empty());
        m.upsert(entry("green desk", 1, [0.0; 3], 10.0, 0.4), &IdMatcher, &p);
        m.upsert(entry("cupboard", 2, [5.0, 0.0, 0.0], 10.0, 0.9), &IdMatcher, &p);
        m.upsert(entry("desk", 3, [9.0, 0.0, 0.0], 100.0, 0.8), &IdMatcher, &p);
        let hits = m.query(&syn, QueryMode::WordBoundary);
        assert_eq!(hits.iter().map(|e| e.label.as_str()).collect::<Vec<_>>(), vec!["desk", "green desk"]);
        let cup = SynonymSet::new("cup", &[]);
        assert!(m.query(&cup, QueryMode::WordBoundary).is_empty());
        assert_eq!(m.query(&cup, QueryMode::RawSubstring).len(), 1);
        let couch = SynonymSet::new("couch", &["Sofa".to_string()]);
        assert_eq!(couch.patterns(), vec!["couch", "sofa"]);
    }

    #[test]
    fn remove_examples() {
        let p = MemoryParams::default();
        let mut m = MemoryModel::new();
        let Inserted(a) = m.upsert(entry("cup", 1, [0.0; 3], 10.0, 0.5), &IdMatcher, &p) else {
            panic!()
        };
        let Inserted(b) = m.upsert(entry("cup", 2, [9.0, 0.0, 0.0], 200.0, 0.5), &IdMatcher, &p) else {
            panic!()
        };
        m.remove(a).unwrap();
        let hits = m.query(&SynonymSet::new("cup", &[]), QueryMode::WordBoundary);
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].id, b);
        assert_eq!(m.remove(a), Err(MemoryError::NotFound(a)));
        m.remove(b).unwrap();
        assert!(m.is_empty());
        assert!(m.query(&SynonymSet::new("cup", &[]), QueryMode::RawSubstring).is_empty());
    }

    use UpsertOutcome::Inserted;

    #[test]
    fn snapshot_drops_pixels() {
        let p = MemoryParams::default();
        let mut m = MemoryModel::new();
        let mut e = entry("cup", 42, [1.0, 2.0, 0.5], 10.0, 0.5);
        e.images[0].pixels = vec![[1.0, 0.5, 0.5]; 16];
        m.upsert(e, &IdMatcher, &p);
        let s = m.snapshot();
        assert_eq!(s.entries[0].latent_ids, vec![42]);
        let json = serde_json::to_string(&s).unwrap();
        assert!(!json.contains("pixels"));
    }
}
