use super::oracle::{draw_verification, splitmix64, Verifier, VerifierRates};
use super::raster::{Raster, FREE, RASTER_RES, WALL};
use super::{Catalog, Scene, WorldError};
use crate::gridmap::{wrap_pi, DepthScan, Pose};
use crate::memory::{confidence_value, BBox, Detection, Hsv, HsvHistogram, ViewPatch};
use crate::navctl::Action;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorParams {
    pub fov_deg: f64,
    pub rays: usize,
    pub max_range: f64,
    pub image_width: f64,
    pub image_height: f64,
    pub camera_height: f64,
    pub forward_step: f64,
    pub turn_deg: f64,
    pub agent_radius: f64,
    /// Scene color noise: hue in degrees, saturation, value.
    pub color_noise: [f64; 3],
    pub scene_pixels: usize,
    /// Decay scale used to grade detection quality for misrecognition.
    pub quality_sigma: f64,
}

impl Default for SensorParams {
    fn default() -> Self {
        Self {
            fov_deg: 90.0,
            rays: 181,
            max_range: 5.0,
            image_width: 640.0,
            image_height: 480.0,
            camera_height: 0.9,
            forward_step: 0.25,
            turn_deg: 30.0,
            agent_radius: 0.18,
            color_noise: [3.0, 0.008, 0.008],
            scene_pixels: 32,
            quality_sigma: 1.0,
        }
    }
}

impl SensorParams {
    pub fn fov(&self) -> f64 {
        self.fov_deg.to_radians()
    }

    pub fn focal(&self) -> f64 {
        self.image_width / 2.0 / (self.fov() / 2.0).tan()
    }

    pub fn image_center(&self) -> [f64; 2] {
        [self.image_width / 2.0, self.image_height / 2.0]
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let bad = |m: &str| Err(WorldError::InvalidConfig(m.into()));
        if !(self.fov_deg > 0.0 && self.fov_deg < 180.0) {
            return bad("fov must lie in (0, 180) degrees");
        }
        if self.rays < 2 || !(self.max_range > 0.0) {
            return bad("need at least two rays and a positive range");
        }
        if !(self.forward_step > 0.0 && self.turn_deg > 0.0 && self.agent_radius > 0.0) {
            return bad("kinematics must be positive");
        }
        Ok(())
    }
}

/// Autolabel noise model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorProfile {
    pub synonym_pools: BTreeMap<String, Vec<String>>,
    /// Chance of reporting a synonym instead of the canonical label.
    pub synonym_prob: f64,
    pub modifier_prob: f64,
    pub clutter_labels: Vec<String>,
    pub clutter_rate: f64,
    /// Label swap chance for a worst-quality detection; scaled down by quality.
    pub misrecognition_rate: f64,
    pub rng_seed: u64,
}

impl Default for DetectorProfile {
    fn default() -> Self {
        Self {
            synonym_pools: BTreeMap::new(),
            synonym_prob: 0.4,
            modifier_prob: 0.2,
            clutter_labels: ["wall", "various objects", "floor", "ceiling"]
                .map(String::from)
                .to_vec(),
            clutter_rate: 0.3,
            misrecognition_rate: 0.3,
            rng_seed: 0,
        }
    }
}

impl DetectorProfile {
    pub fn validate(&self) -> Result<(), WorldError> {
        for (name, p) in [
            ("synonym_prob", self.synonym_prob),
            ("modifier_prob", self.modifier_prob),
            ("clutter_rate", self.clutter_rate),
            ("misrecognition_rate", self.misrecognition_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(WorldError::InvalidConfig(format!("{name} = {p} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelSource {
    Canonical,
    Synonym,
    Misrecognized,
    Clutter,
}

/// A detection plus its ground truth, for oracles and test assertions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensedDetection {
    pub detection: Detection,
    pub object: Option<usize>,
    pub source: LabelSource,
    /// Base label before any color modifier was prefixed.
    pub base_label: String,
    pub modifier: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub pose: Pose,
    pub scan: DepthScan,
    pub detections: Vec<SensedDetection>,
    pub scene_sample: HsvHistogram,
    /// Raster value hit by each ray (0 for no return).
    pub ray_hits: Vec<u16>,
}

impl Observation {
    pub fn sees_object(&self, id: usize) -> bool {
        self.ray_hits.iter().any(|v| *v as usize == id + 2)
    }
}

/// Kinematics against the inflated raster: blocked forward moves leave the
/// pose unchanged.
pub fn apply_action(raster: &Raster, pose: &Pose, action: Action, sensor: &SensorParams) -> Pose {
    match action {
        Action::TurnLeft => pose.rotated(sensor.turn_deg.to_radians()),
        Action::TurnRight => pose.rotated(-sensor.turn_deg.to_radians()),
        Action::MoveForward => {
            let dir = [pose.heading.cos(), pose.heading.sin()];
            let n = (sensor.forward_step / (RASTER_RES / 2.0)).ceil() as usize;
            let clear = (1..=n).all(|i| {
                let t = sensor.forward_step * i as f64 / n as f64;
                raster.is_open([pose.x + t * dir[0], pose.y + t * dir[1]])
            });
            if clear {
                Pose {
                    x: pose.x + sensor.forward_step * dir[0],
                    y: pose.y + sensor.forward_step * dir[1],
                    ..*pose
                }
            } else {
                *pose
            }
        }
        Action::Stop | Action::LookUp | Action::LookDown => *pose,
    }
}

/// A scene with its raster and seeded noise sources.
#[derive(Debug, Clone)]
pub struct World {
    pub scene: Scene,
    pub raster: Raster,
    pub sensor: SensorParams,
    pub profile: DetectorProfile,
    pub rates: VerifierRates,
    labels: Vec<String>,
    colors: BTreeMap<String, Hsv>,
    sense_rng: ChaCha8Rng,
    verify_rng: ChaCha8Rng,
}

impl World {
    pub fn new(
        scene: Scene,
        catalog: &Catalog,
        sensor: SensorParams,
        profile: DetectorProfile,
        rates: VerifierRates,
        run_seed: u64,
    ) -> Self {
        let raster = Raster::build_with(&scene, sensor.agent_radius);
        let base = splitmix64(scene.rng_seed ^ splitmix64(profile.rng_seed ^ splitmix64(run_seed)));
        Self {
            raster,
            labels: catalog.items.keys().cloned().collect(),
            colors: catalog.colors.clone(),
            sense_rng: ChaCha8Rng::seed_from_u64(base),
            verify_rng: ChaCha8Rng::seed_from_u64(splitmix64(base ^ 0x5eed)),
            scene,
            sensor,
            profile,
            rates,
        }
    }

    pub fn apply(&self, pose: &Pose, action: Action) -> Pose {
        apply_action(&self.raster, pose, action, &self.sensor)
    }

    pub fn sense(&mut self, pose: &Pose) -> Result<Observation, WorldError> {
        if !pose.is_finite() || self.raster.value(pose.position()) != FREE {
            return Err(WorldError::InvalidPose(pose.x, pose.y));
        }
        let s = &self.sensor;
        let mut scan = DepthScan::uniform(s.fov(), s.rays, s.max_range);
        let mut ray_hits = vec![FREE; s.rays];
        for i in 0..s.rays {
            let (r, v) = self.raster.cast(pose.position(), pose.heading + scan.ray_bearings[i], s.max_range);
            scan.ray_ranges[i] = r;
            ray_hits[i] = v;
            scan.ray_heights[i] = match v {
                FREE => 0.0,
                WALL => 1.0,
                o => self.scene.objects[o as usize - 2].height / 2.0,
            };
        }

        // per object, the hit ray closest to its center bearing
        let mut best: BTreeMap<usize, (usize, f64)> = BTreeMap::new();
        for (i, v) in ray_hits.iter().enumerate() {
            if *v < 2 {
                continue;
            }
            let id = *v as usize - 2;
            let o = &self.scene.objects[id];
            let center = (o.position[1] - pose.y).atan2(o.position[0] - pose.x);
            let err = wrap_pi(center - pose.heading - scan.ray_bearings[i]).abs();
            let e = best.entry(id).or_insert((i, err));
            if err < e.1 {
                *e = (i, err);
            }
        }
        let mut detections = Vec::with_capacity(best.len() + 1);
        for (id, (ray, _)) in best {
            let o = &self.scene.objects[id];
            let (height, size, color, latent) = (o.height, o.nominal_size, o.color.clone(), o.latent_feature_id);
            let canonical = o.canonical_label.clone();
            let mut d = self.synth(pose, &scan, ray, size, height / 2.0, latent, &color);
            let center = self.sensor.image_center();
            let offset = (d.center_px[0] - center[0]).hypot(d.center_px[1] - center[1]);
            let quality = confidence_value(offset, d.depth_at_center, d.bbox.area(), self.sensor.quality_sigma);
            let (base, source) = self.draw_base_label(&canonical, quality);
            let modifier = (self.sense_rng.gen::<f64>() < self.profile.modifier_prob).then_some(color);
            d.raw_label = match &modifier {
                Some(m) => format!("{m} {base}"),
                None => base.clone(),
            };
            detections.push(SensedDetection {
                detection: d,
                object: Some(id),
                source,
                base_label: base,
                modifier,
            });
        }
        if !self.profile.clutter_labels.is_empty() && self.sense_rng.gen::<f64>() < self.profile.clutter_rate {
            let hits: Vec<usize> = (0..scan.len()).filter(|i| !scan.is_max_range(*i)).collect();
            let label = self.profile.clutter_labels.choose(&mut self.sense_rng).expect("non-empty").clone();
            let latent = self.sense_rng.gen();
            if let Some(&ray) = hits.choose(&mut self.sense_rng) {
                let mut d = self.synth(pose, &scan, ray, 1.0, 1.0, latent, "gray");
                d.raw_label = label.clone();
                detections.push(SensedDetection {
                    detection: d,
                    object: None,
                    source: LabelSource::Clutter,
                    base_label: label,
                    modifier: None,
                });
            }
        }

        let room = &self.scene.rooms[self.scene.room_at(pose.position())];
        let scene_sample = self.noisy_histogram(room.color, self.sensor.scene_pixels);
        Ok(Observation {
            pose: *pose,
            scan,
            detections,
            scene_sample,
            ray_hits,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn synth(
        &mut self,
        pose: &Pose,
        scan: &DepthScan,
        ray: usize,
        size: f64,
        z: f64,
        latent: u64,
        color: &str,
    ) -> Detection {
        let s = &self.sensor;
        let beta = scan.ray_bearings[ray];
        let depth = scan.ray_ranges[ray];
        let focal = s.focal();
        let col = s.image_width / 2.0 - beta / (s.fov() / 2.0) * (s.image_width / 2.0);
        let row = (s.image_height / 2.0 - (z - s.camera_height) / depth * focal).clamp(0.0, s.image_height);
        let side = (size / depth * focal).clamp(4.0, s.image_height);
        let angle = pose.heading + beta;
        let base = self.colors.get(color).copied().unwrap_or([0.0, 0.0, 0.5]);
        let pixels = self.noisy_pixels(base, 4);
        Detection {
            raw_label: String::new(),
            bbox: BBox {
                left: col - side / 2.0,
                top: row - side / 2.0,
                width: side,
                height: side,
            },
            center_px: [col, row],
            depth_at_center: depth,
            view: ViewPatch {
                latent_feature_id: latent,
                pixels,
            },
            world_point: [
                pose.x + depth * angle.cos(),
                pose.y + depth * angle.sin(),
                pose.floor_height + z,
            ],
        }
    }

    fn draw_base_label(&mut self, canonical: &str, quality: f64) -> (String, LabelSource) {
        let p_mis = self.profile.misrecognition_rate * (1.0 - quality);
        if self.sense_rng.gen::<f64>() < p_mis && self.labels.len() > 1 {
            loop {
                let l = self.labels.choose(&mut self.sense_rng).expect("labels").clone();
                if l != canonical {
                    return (l, LabelSource::Misrecognized);
                }
            }
        }
        if let Some(pool) = self.profile.synonym_pools.get(canonical).filter(|p| !p.is_empty()) {
            if self.sense_rng.gen::<f64>() < self.profile.synonym_prob {
                let l = pool.choose(&mut self.sense_rng).expect("non-empty").clone();
                return (l, LabelSource::Synonym);
            }
        }
        (canonical.to_string(), LabelSource::Canonical)
    }

    fn noisy_pixels(&mut self, base: Hsv, n: usize) -> Vec<Hsv> {
        let [nh, ns, nv] = self.sensor.color_noise;
        let gauss = |sd: f64| Normal::new(0.0, sd.max(1e-12)).expect("finite sd");
        let (gh, gs, gv) = (gauss(nh), gauss(ns), gauss(nv));
        (0..n)
            .map(|_| {
                [
                    (base[0] + gh.sample(&mut self.sense_rng)).rem_euclid(360.0),
                    (base[1] + gs.sample(&mut self.sense_rng)).clamp(0.0, 1.0),
                    (base[2] + gv.sample(&mut self.sense_rng)).clamp(0.0, 1.0),
                ]
            })
            .collect()
    }

    fn noisy_histogram(&mut self, base: Hsv, n: usize) -> HsvHistogram {
        HsvHistogram::from_pixels(&self.noisy_pixels(base, n))
    }

    /// True goal presence for a panorama: an instance of `goal` within one
    /// meter of the agent that some view's rays actually hit.
    pub fn goal_present(&self, goal: &str, panorama: &[Observation]) -> bool {
        let Some(last) = panorama.last() else {
            return false;
        };
        let p = last.pose.position();
        self.scene.instances_of(goal).any(|o| {
            (o.position[0] - p[0]).hypot(o.position[1] - p[1]) <= 1.0
                && panorama.iter().any(|v| v.sees_object(o.id))
        })
    }
}

impl Verifier for World {
    fn probability(&mut self, goal: &str, panorama: &[Observation]) -> f64 {
        let present = self.goal_present(goal, panorama);
        draw_verification(present, &self.rates, &mut self.verify_rng)
    }
}
