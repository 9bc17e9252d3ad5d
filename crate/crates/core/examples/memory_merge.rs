//! Feed the memory model repeated sightings of two same-label objects in
//! differently colored rooms and watch them merge into two entries.

use oval::memory::{HsvHistogram, MemoryEntry, MemoryModel, MemoryParams, UpsertOutcome, ViewPatch};
use oval::simworld::OracleMatcher;

fn sighting(latent: u64, pos: [f64; 2], hue: f64, conf: f64) -> MemoryEntry {
    let pixels: Vec<[f64; 3]> = (0..32).map(|i| [hue + (i % 3) as f64, 0.6, 0.7]).collect();
    MemoryEntry::new(
        "chair",
        ViewPatch {
            latent_feature_id: latent,
            pixels: vec![],
        },
        [pos[0], pos[1], 0.4],
        HsvHistogram::from_pixels(&pixels),
        conf,
    )
}

fn main() {
    let params = MemoryParams::default();
    let matcher = OracleMatcher { seed: 7 };
    let mut memory = MemoryModel::new();
    let sightings = [
        sighting(1, [1.0, 1.0], 30.0, 0.4),
        sighting(1, [1.1, 0.9], 31.0, 0.7),
        sighting(2, [7.0, 6.0], 190.0, 0.5),
        sighting(1, [0.9, 1.1], 29.0, 0.6),
        sighting(2, [7.1, 6.1], 191.0, 0.9),
    ];
    for s in sightings {
        match memory.upsert(s, &matcher, &params) {
            UpsertOutcome::Inserted(id) => println!("inserted {id:?}"),
            UpsertOutcome::Merged { into, overwritten } => {
                println!("merged into {into:?} (descriptors replaced: {overwritten})")
            }
        }
    }
    for e in memory.entries() {
        println!(
            "{:?} {} at ({:.1}, {:.1}) conf {:.2}, {} views",
            e.id,
            e.label,
            e.position[0],
            e.position[1],
            e.confidence,
            e.images.len()
        );
    }
}
