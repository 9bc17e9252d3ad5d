use super::sensor::Observation;
use crate::memory::{normalize, FeatureMatcher, SynonymSet, ViewPatch};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Feature-matcher stand-in keyed on the views' latent ids: the same
/// physical instance yields 80..=140 correspondences, different instances
/// 0..=30. The per-correspondence threshold is accepted but unused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleMatcher {
    pub seed: u64,
}

impl FeatureMatcher for OracleMatcher {
    fn match_count(&self, a: &ViewPatch, b: &ViewPatch, _tau_sg: f64) -> u32 {
        let (lo, hi) = if a.latent_feature_id <= b.latent_feature_id {
            (a.latent_feature_id, b.latent_feature_id)
        } else {
            (b.latent_feature_id, a.latent_feature_id)
        };
        let h = splitmix64(self.seed ^ splitmix64(lo ^ splitmix64(hi)));
        if lo == hi {
            80 + (h % 61) as u32
        } else {
            (h % 31) as u32
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerifierRates {
    pub true_pos_rate: f64,
    pub false_pos_rate: f64,
}

impl Default for VerifierRates {
    fn default() -> Self {
        Self {
            true_pos_rate: 0.95,
            false_pos_rate: 0.05,
        }
    }
}

/// Goal-presence probability for a panorama around the agent.
pub trait Verifier {
    fn probability(&mut self, goal: &str, panorama: &[Observation]) -> f64;
}

/// Draw a verifier score: high band `[0.7, 1]` or low band `[0, 0.3]`.
pub fn draw_verification<R: Rng + ?Sized>(present: bool, rates: &VerifierRates, rng: &mut R) -> f64 {
    let u: f64 = rng.gen();
    let high = if present {
        u < rates.true_pos_rate
    } else {
        u < rates.false_pos_rate
    };
    let x: f64 = rng.gen();
    if high {
        0.7 + 0.3 * x
    } else {
        0.3 * x
    }
}

/// Seeded verifier whose presence decision is supplied by the caller.
#[derive(Debug, Clone)]
pub struct OracleVerifier<R> {
    pub rates: VerifierRates,
    pub rng: R,
}

impl<R: Rng> OracleVerifier<R> {
    pub fn draw(&mut self, present: bool) -> f64 {
        draw_verification(present, &self.rates, &mut self.rng)
    }
}

/// Static goal → synonyms lookup.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SynonymTable {
    pub entries: BTreeMap<String, Vec<String>>,
}

impl SynonymTable {
    pub fn new(entries: BTreeMap<String, Vec<String>>) -> Self {
        Self {
            entries: entries
                .into_iter()
                .map(|(k, v)| (normalize(&k), v.iter().map(|s| normalize(s)).collect()))
                .collect(),
        }
    }

    /// The goal plus its known synonyms; unknown goals map to themselves.
    pub fn synonyms(&self, goal: &str) -> SynonymSet {
        let key = normalize(goal);
        let syn = self.entries.get(&key).cloned().unwrap_or_default();
        SynonymSet::new(&key, &syn)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn view(id: u64) -> ViewPatch {
        ViewPatch {
            latent_feature_id: id,
            pixels: vec![],
        }
    }

    #[test]
    fn matcher_ranges_and_symmetry() {
        let m = OracleMatcher { seed: 9 };
        for a in 0..50u64 {
            let same = m.match_count(&view(a), &view(a), 0.2);
            assert!((80..=140).contains(&same));
            for b in 0..50u64 {
                let x = m.match_count(&view(a), &view(b), 0.2);
                assert_eq!(x, m.match_count(&view(b), &view(a), 0.9));
                if a != b {
                    assert!(x <= 30);
                }
            }
        }
    }

    #[test]
    fn verifier_bands() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sure = VerifierRates {
            true_pos_rate: 1.0,
            false_pos_rate: 0.0,
        };
        for _ in 0..200 {
            assert!(draw_verification(true, &sure, &mut rng) >= 0.7);
            assert!(draw_verification(false, &sure, &mut rng) <= 0.3);
        }
        let mut a = OracleVerifier { rates: VerifierRates::default(), rng: ChaCha8Rng::seed_from_u64(4) };
        let mut b = OracleVerifier { rates: VerifierRates::default(), rng: ChaCha8Rng::seed_from_u64(4) };
        for i in 0..20 {
            assert_eq!(a.draw(i % 3 == 0), b.draw(i % 3 == 0));
        }
    }

    #[test]
    fn synonym_lookup() {
        let t = SynonymTable::new(BTreeMap::from([("couch".to_string(), vec!["sofa".to_string()])]));
        assert_eq!(t.synonyms("couch").patterns(), vec!["couch", "sofa"]);
        assert_eq!(t.synonyms("gizmo").patterns(), vec!["gizmo"]);
    }
}
