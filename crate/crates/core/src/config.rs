//! Run configuration, named profiles and the knowledge files (object catalog,
//! co-occurrence table, stoplist). Built-in copies are compiled in; a
//! directory named by `OVAL_CONFIG_DIR` (or passed explicitly) overrides
//! any file it contains.

use crate::eval::{DatasetSpec, Toggles};
use crate::explorer::{CooccurrenceTable, ExplorationParams, SelectionMode};
use crate::memory::{MemoryParams, Stoplist};
use crate::navctl::{ControllerParams, NavParams, VerifyParams};
use crate::simworld::{Catalog, DetectorProfile, SensorParams, VerifierRates};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const CONFIG_DIR_ENV: &str = "OVAL_CONFIG_DIR";

const DESK: &str = include_str!("../config/desk.toml");
const PAPER: &str = include_str!("../config/paper-defaults.toml");
const CATALOG: &str = include_str!("../config/catalog.toml");
const COOCCURRENCE: &str = include_str!("../config/cooccurrence.toml");
const STOPLIST: &str = include_str!("../config/stoplist.toml");

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown profile {0:?} (expected desk or paper-defaults)")]
    UnknownProfile(String),
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing {name}: {source}")]
    Parse { name: String, source: toml::de::Error },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunSettings {
    pub max_steps: usize,
    pub success_radius: f64,
    pub matcher_seed: u64,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            max_steps: 500,
            success_radius: 1.0,
            matcher_seed: 17,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub profile: String,
    pub memory: MemoryParams,
    pub exploration: ExplorationParams,
    pub verify: VerifyParams,
    pub nav: NavParams,
    pub sensor: SensorParams,
    pub detector: DetectorProfile,
    pub verifier: VerifierRates,
    pub dataset: DatasetSpec,
    pub run: RunSettings,
    pub toggles: Toggles,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            profile: "custom".into(),
            memory: MemoryParams::default(),
            exploration: ExplorationParams::default(),
            verify: VerifyParams::default(),
            nav: NavParams::default(),
            sensor: SensorParams::default(),
            detector: DetectorProfile::default(),
            verifier: VerifierRates::default(),
            dataset: DatasetSpec::default(),
            run: RunSettings::default(),
            toggles: Toggles::default(),
        }
    }
}

impl Config {
    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        let c: Self = toml::from_str(s).map_err(|source| ConfigError::Parse {
            name: "config".into(),
            source,
        })?;
        c.validate()?;
        Ok(c)
    }

    /// A named profile, read from `dir` when it holds `<name>.toml`.
    pub fn profile(name: &str, dir: Option<&Path>) -> Result<Self, ConfigError> {
        let builtin = match name {
            "desk" => DESK,
            "paper-defaults" => PAPER,
            other => {
                return match dir.map(|d| d.join(format!("{other}.toml"))).filter(|p| p.exists()) {
                    Some(p) => Self::from_toml_str(&read(&p)?),
                    None => Err(ConfigError::UnknownProfile(other.into())),
                }
            }
        };
        Self::from_toml_str(&override_or(dir, &format!("{name}.toml"), builtin)?)
    }

    pub fn load_file(path: &Path) -> Result<Self, ConfigError> {
        Self::from_toml_str(&read(path)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let inv = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.memory.validate().map_err(|e| inv(&e))?;
        self.exploration.validate().map_err(|e| inv(&e))?;
        self.verify.validate().map_err(|e| inv(&e))?;
        self.nav.validate().map_err(|e| inv(&e))?;
        self.sensor.validate().map_err(|e| inv(&e))?;
        self.detector.validate().map_err(|e| inv(&e))?;
        self.dataset.scene.validate().map_err(|e| inv(&e))?;
        if self.run.max_steps == 0 {
            return Err(ConfigError::Invalid("max_steps must be positive".into()));
        }
        Ok(())
    }

    /// Controller parameters with the ablation toggles applied.
    pub fn controller_params(&self) -> ControllerParams {
        let t = &self.toggles;
        let mut exploration = self.exploration.clone();
        if !t.probability_map {
            exploration.selection = SelectionMode::Nearest;
        }
        if !t.distance {
            exploration.amp_distance = 0.0;
        }
        if !t.semantics {
            exploration.amp_semantic = 0.0;
        }
        if !t.footprint {
            exploration.amp_footprint = 0.0;
        }
        let mut nav = self.nav.clone();
        nav.verify_stop = t.verify_stop;
        nav.image_center = self.sensor.image_center();
        ControllerParams {
            nav,
            verify: self.verify.clone(),
            memory: self.memory.clone(),
            exploration,
        }
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn fingerprint(&self, knowledge: &Knowledge) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(self).expect("config serializes"));
        h.update(serde_json::to_vec(knowledge).expect("knowledge serializes"));
        hex::encode(h.finalize())
    }
}

/// Object catalog, co-occurrence table and stoplist.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knowledge {
    pub catalog: Catalog,
    pub cooccurrence: CooccurrenceTable,
    pub stoplist: Stoplist,
}

impl Knowledge {
    pub fn builtin() -> Self {
        Self::load(None).expect("built-in knowledge files parse")
    }

    pub fn load(dir: Option<&Path>) -> Result<Self, ConfigError> {
        let parse_err = |name: &str| {
            let name = name.to_string();
            move |e: &dyn std::fmt::Display| ConfigError::Invalid(format!("{name}: {e}"))
        };
        let catalog = Catalog::from_toml_str(&override_or(dir, "catalog.toml", CATALOG)?)
            .map_err(|e| parse_err("catalog.toml")(&e))?;
        let cooccurrence = CooccurrenceTable::from_toml_str(&override_or(dir, "cooccurrence.toml", COOCCURRENCE)?)
            .map_err(|e| parse_err("cooccurrence.toml")(&e))?;
        let stoplist: Stoplist = toml::from_str(&override_or(dir, "stoplist.toml", STOPLIST)?).map_err(|source| {
            ConfigError::Parse {
                name: "stoplist.toml".into(),
                source,
            }
        })?;
        Ok(Self {
            catalog,
            cooccurrence,
            stoplist: Stoplist::new(&stoplist.keywords),
        })
    }
}

/// Directory from the environment, if set and non-empty.
pub fn env_config_dir() -> Option<PathBuf> {
    std::env::var_os(CONFIG_DIR_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn override_or(dir: Option<&Path>, file: &str, builtin: &str) -> Result<String, ConfigError> {
    match dir.map(|d| d.join(file)).filter(|p| p.exists()) {
        Some(p) => read(&p),
        None => Ok(builtin.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_profiles_parse() {
        let desk = Config::profile("desk", None).unwrap();
        let paper = Config::profile("paper-defaults", None).unwrap();
        assert_eq!(paper.memory.k_sigmoid, 8.0);
        assert_eq!(paper.exploration.sigma_distance, 1e6);
        assert_eq!(paper.memory.tau_m, 60);
        assert_eq!(desk.run.max_steps, 500);
        assert!(Config::profile("nope", None).is_err());
        let k = Knowledge::builtin();
        assert!(k.catalog.items.contains_key("desk"));
    }

    #[test]
    fn fingerprint_tracks_content() {
        let k = Knowledge::builtin();
        let a = Config::profile("desk", None).unwrap();
        let mut b = a.clone();
        assert_eq!(a.fingerprint(&k), b.fingerprint(&k));
        b.verify.threshold = 0.41;
        assert_ne!(a.fingerprint(&k), b.fingerprint(&k));
    }

    #[test]
    fn directory_overrides_builtin() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("desk.toml"), "profile = \"desk\"\n[run]\nmax_steps = 42\n").unwrap();
        let c = Config::profile("desk", Some(dir.path())).unwrap();
        assert_eq!(c.run.max_steps, 42);
    }

    #[test]
    fn toggles_map_to_parameters() {
        let mut c = Config::profile("desk", None).unwrap();
        c.toggles.footprint = false;
        c.toggles.probability_map = false;
        c.toggles.verify_stop = false;
        let p = c.controller_params();
        assert_eq!(p.exploration.amp_footprint, 0.0);
        assert_eq!(p.exploration.selection, SelectionMode::Nearest);
        assert!(!p.nav.verify_stop);
    }
}
