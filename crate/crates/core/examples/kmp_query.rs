//! KMP substring search and the word-boundary memory query.

use oval::memory::kmp::{contains, contains_word, failure_function, find_all};
use oval::memory::{
    preprocess_label, HsvHistogram, MemoryEntry, MemoryModel, MemoryParams, QueryMode, Stoplist, SynonymSet,
    ViewPatch,
};
use oval::simworld::OracleMatcher;

fn main() {
    println!("failure(\"abab\") = {:?}", failure_function(b"abab"));
    println!("find_all(\"ababab\", \"abab\") = {:?}", find_all("ababab", "abab"));
    for (text, pat) in [("green desk", "desk"), ("cupboard", "cup"), ("coffee cup", "cup")] {
        println!(
            "{pat:?} in {text:?}: substring {}, whole word {}",
            contains(text, pat),
            contains_word(text, pat)
        );
    }

    let stop = Stoplist::new(&["wall", "floor"]);
    let mut memory = MemoryModel::new();
    let params = MemoryParams::default();
    let matcher = OracleMatcher { seed: 1 };
    for (i, raw) in ["Green Desk", "cupboard", "wall", "sofa", "writing desk"].iter().enumerate() {
        let label = match preprocess_label(raw, &stop) {
            Ok(l) => l,
            Err(e) => {
                println!("dropped {raw:?}: {e:?}");
                continue;
            }
        };
        let e = MemoryEntry::new(
            label,
            ViewPatch {
                latent_feature_id: i as u64,
                pixels: vec![],
            },
            [i as f64 * 3.0, 0.0, 0.5],
            HsvHistogram::from_pixels(&[[i as f64 * 60.0, 0.5, 0.5]]),
            0.5 + 0.1 * i as f64,
        );
        memory.upsert(e, &matcher, &params);
    }
    let goal = SynonymSet::new("desk", &["table".to_string()]);
    for mode in [QueryMode::WordBoundary, QueryMode::RawSubstring] {
        let hits: Vec<&str> = memory.query(&goal, mode).iter().map(|e| e.label.as_str()).collect();
        println!("{mode:?}: {hits:?}");
    }
    let cup = SynonymSet::new("cup", &[]);
    println!("cup, word boundary: {}", memory.query(&cup, QueryMode::WordBoundary).len());
    println!("cup, raw substring: {}", memory.query(&cup, QueryMode::RawSubstring).len());
}
