use oval::config::Knowledge;
use oval::eval::{sort_episodes, Episode, FLOOR_THRESHOLD};
use oval::gridmap::{CellState, DepthScan, OccupancyGrid, Pose};
use oval::memory::kmp;
use oval::memory::{
    HsvHistogram, MemoryEntry, MemoryModel, MemoryParams, QueryMode, SynonymSet, ViewPatch,
};
use oval::navctl::verification_score;
use oval::simworld::{generate_scene, OracleMatcher, Raster, Scene, SceneSpec};
use proptest::prelude::*;
use std::collections::BTreeSet;

fn episode(scene: u8, floor: u8, jitter: f64, id: usize) -> Episode {
    let h = floor as f64 * 3.0 + jitter;
    Episode {
        scene_id: format!("s{scene}"),
        start: Pose::new(0.0, 0.0, 0.0, h),
        goal_label: format!("g{id}"),
        floor_height: h,
    }
}

fn naive(text: &str, pat: &str) -> Vec<usize> {
    let (t, p) = (text.as_bytes(), pat.as_bytes());
    if p.is_empty() || p.len() > t.len() {
        return vec![];
    }
    (0..=t.len() - p.len()).filter(|&i| &t[i..i + p.len()] == p).collect()
}

fn entry(label: &str, latent: u64, pos: [f64; 3], hue: f64, conf: f64) -> MemoryEntry {
    MemoryEntry::new(
        label,
        ViewPatch {
            latent_feature_id: latent,
            pixels: vec![],
        },
        pos,
        HsvHistogram::from_pixels(&[[hue, 0.5, 0.5]]),
        conf,
    )
}

proptest! {
    #[test]
    fn grouping_respects_anchor_and_order(
        eps in prop::collection::vec((0u8..3, 0u8..3, 0.0..0.45f64), 0..40)
    ) {
        let list: Vec<Episode> = eps.iter().enumerate().map(|(i, &(s, f, j))| episode(s, f, j, i)).collect();
        let groups = sort_episodes(&list);
        let total: usize = groups.iter().map(|g| g.episodes.len()).sum();
        prop_assert_eq!(total, list.len());
        for g in &groups {
            prop_assert_eq!(g.anchor_height, g.episodes[0].floor_height);
            let mut last = None;
            for e in &g.episodes {
                prop_assert_eq!(&e.scene_id, &g.scene_id);
                prop_assert!((e.floor_height - g.anchor_height).abs() < FLOOR_THRESHOLD);
                let idx: usize = e.goal_label[1..].parse().unwrap();
                prop_assert!(last.is_none_or(|l| l < idx));
                last = Some(idx);
            }
        }
    }

    #[test]
    fn grouping_is_reorder_invariant(
        eps in prop::collection::vec((0u8..3, 0u8..3, 0.0..0.45f64), 1..30),
        perm_seed in any::<u64>()
    ) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let list: Vec<Episode> = eps.iter().enumerate().map(|(i, &(s, f, j))| episode(s, f, j, i)).collect();
        let mut shuffled = list.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(perm_seed));
        let key = |gs: Vec<oval::eval::EpisodeGroup>| -> BTreeSet<(String, i64, BTreeSet<String>)> {
            gs.into_iter()
                .map(|g| {
                    let floor = (g.anchor_height / 3.0).round() as i64;
                    (g.scene_id, floor, g.episodes.into_iter().map(|e| e.goal_label).collect())
                })
                .collect()
        };
        prop_assert_eq!(key(sort_episodes(&list)), key(sort_episodes(&shuffled)));
    }

    #[test]
    fn kmp_agrees_with_naive(text in "[ab ]{0,30}", pat in "[ab ]{1,4}") {
        prop_assert_eq!(kmp::find_all(&text, &pat), naive(&text, &pat));
        if kmp::contains_word(&text, &pat) {
            prop_assert!(kmp::contains(&text, &pat));
        }
    }

    #[test]
    fn histogram_intersection_is_symmetric_and_bounded(
        a in prop::collection::vec((0.0..360.0f64, 0.0..=1.0f64, 0.0..=1.0f64), 0..20),
        b in prop::collection::vec((0.0..360.0f64, 0.0..=1.0f64, 0.0..=1.0f64), 0..20),
    ) {
        let to = |v: &Vec<(f64, f64, f64)>| v.iter().map(|p| [p.0, p.1, p.2]).collect::<Vec<_>>();
        let (ha, hb) = (HsvHistogram::from_pixels(&to(&a)), HsvHistogram::from_pixels(&to(&b)));
        let s = ha.intersection(&hb);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&s));
        prop_assert!((s - hb.intersection(&ha)).abs() < 1e-12);
        prop_assert!((ha.intersection(&ha) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn memory_upserts_keep_invariants(
        obs in prop::collection::vec((0usize..3, 0u64..4, -5.0..5.0f64, -5.0..5.0f64, 0.0..360.0f64, 0.01..=1.0f64), 1..40)
    ) {
        let labels = ["chair", "green chair", "lamp"];
        let params = MemoryParams::default();
        let matcher = OracleMatcher { seed: 2 };
        let mut m = MemoryModel::new();
        let mut seen_max = std::collections::BTreeMap::new();
        for &(l, latent, x, y, hue, c) in &obs {
            let before = m.len();
            m.upsert(entry(labels[l], latent, [x, y, 0.5], hue, c), &matcher, &params);
            prop_assert!(m.len() <= before + 1);
            let e = seen_max.entry(labels[l]).or_insert(0.0f64);
            *e = e.max(c);
        }
        for e in m.entries() {
            prop_assert!(e.confidence > 0.0 && e.confidence <= 1.0);
            prop_assert!(!e.images.is_empty() && e.images.len() <= params.capacity);
            prop_assert!(e.confidence <= seen_max[e.label.as_str()]);
        }
        let hits = m.query(&SynonymSet::new("chair", &[]), QueryMode::WordBoundary);
        for h in &hits {
            prop_assert!(kmp::contains_word(&h.label, "chair"));
        }
        prop_assert!(hits.windows(2).all(|w| w[0].confidence >= w[1].confidence));
    }

    #[test]
    fn verification_score_increases_with_confidence(
        phi in 0.0..=1.0f64, c in 0.0..0.99f64, omega in 0.0..0.99f64
    ) {
        prop_assert!(verification_score(phi, c + 0.01, omega) > verification_score(phi, c, omega));
    }

    #[test]
    fn scans_never_clear_obstacles(
        scans in prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64, -3.2..3.2f64, prop::collection::vec(0.1..4.0f64, 9)), 1..6)
    ) {
        let mut g = OccupancyGrid::new([0.0, 0.0], 0.1, 1, 1).unwrap();
        let mut obstacles: BTreeSet<oval::gridmap::Cell> = BTreeSet::new();
        for (x, y, th, ranges) in &scans {
            let pose = Pose::new(*x, *y, *th, 0.0);
            let mut scan = DepthScan::uniform(1.5, 9, 4.0);
            scan.ray_ranges = ranges.clone();
            scan.ray_heights = vec![0.5; 9];
            g.integrate_observation(&pose, &scan, [0.05, 2.0]).unwrap();
            for c in &obstacles {
                prop_assert_eq!(g.state(*c), CellState::Obstacle);
            }
            obstacles.extend(g.iter().filter(|(_, s)| *s == CellState::Obstacle).map(|(c, _)| c));
            for c in g.detect_frontiers() {
                prop_assert!(g.is_frontier(c));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generated_scenes_are_sound(seed in any::<u64>()) {
        let k = Knowledge::builtin();
        let s = generate_scene("p/floor-0", seed, 0.0, &SceneSpec::default(), &k.catalog).unwrap();
        let back = Scene::from_json(&s.to_json().unwrap()).unwrap();
        prop_assert_eq!(&back, &s);
        let r = Raster::build(&s);
        for o in &s.objects {
            let room = s.rooms[o.room].rect;
            prop_assert!(o.position[0] - o.radius() > room[0] && o.position[0] + o.radius() < room[2]);
            prop_assert!(o.position[1] - o.radius() > room[1] && o.position[1] + o.radius() < room[3]);
            for p in &s.objects {
                if p.id != o.id {
                    let d = (p.position[0] - o.position[0]).hypot(p.position[1] - o.position[1]);
                    prop_assert!(d >= p.radius() + o.radius());
                }
            }
            prop_assert!(!r.is_open(o.position));
        }
        let ids: BTreeSet<u64> = s.objects.iter().map(|o| o.latent_feature_id).collect();
        prop_assert_eq!(ids.len(), s.objects.len());
    }
}
