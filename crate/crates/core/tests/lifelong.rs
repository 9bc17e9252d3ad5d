use oval::config::{Config, Knowledge};
use oval::eval::{
    generate_lifelong_dataset, run_ablation, run_lifelong, sort_episodes, Dataset, DatasetSpec, Episode,
    EpisodeGroup, EpisodeRecord, Runner, StepObserver, Variant,
};
use oval::gridmap::{distance, Pose};
use oval::navctl::{Action, Controller};

fn setup(scenes: usize) -> (Config, Knowledge) {
    let mut cfg = Config::profile("desk", None).unwrap();
    cfg.dataset.scenes = scenes;
    (cfg, Knowledge::builtin())
}

fn dataset(cfg: &Config, k: &Knowledge, seed: u64) -> Dataset {
    generate_lifelong_dataset(seed, &cfg.dataset, k, cfg.run.success_radius).unwrap()
}

/// Labels remembered at the end of an episode that sit on a real instance.
#[derive(Default)]
struct Remembered {
    labels: Vec<(String, [f64; 2])>,
}

impl StepObserver for Remembered {
    fn on_step(&mut self, _r: &EpisodeRecord, _p: &Pose, _a: Action, c: &Controller) {
        self.labels = c
            .agent
            .memory
            .entries()
            .iter()
            .map(|e| (e.label.clone(), e.planar_position()))
            .collect();
    }
}

/// Find an episode A and a second goal B that A's run saw from afar.
fn remembered_pair(cfg: &Config, k: &Knowledge) -> (Dataset, EpisodeGroup) {
    for seed in 50..60 {
        let data = dataset(cfg, k, seed);
        for g in data.groups() {
            let a = g.episodes[0].clone();
            let scene = data.scene_for(&g.scene_id, g.anchor_height).unwrap().clone();
            let single = EpisodeGroup {
                episodes: vec![a.clone()],
                ..g.clone()
            };
            let mut obs = Remembered::default();
            let mut runner = Runner::new(cfg, k, &data.scenes);
            let rec = runner.run_group(0, &single, seed, Some(&mut obs)).unwrap();
            if !rec[0].success {
                continue;
            }
            let end = rec[0].end.position();
            let pick = scene.objects.iter().find(|o| {
                o.canonical_label != a.goal_label
                    && scene.instances_of(&o.canonical_label).all(|x| distance(x.position, end) > 5.5)
                    && obs
                        .labels
                        .iter()
                        .any(|(l, p)| *l == o.canonical_label && distance(*p, o.position) < 0.6)
            });
            if let Some(o) = pick {
                let b = Episode {
                    goal_label: o.canonical_label.clone(),
                    ..a.clone()
                };
                let group = EpisodeGroup {
                    episodes: vec![a, b],
                    ..g
                };
                return (data, group);
            }
        }
    }
    panic!("no remembered pair in seeds 50..60");
}

#[test]
fn remembered_goal_needs_no_exploration() {
    let (cfg, k) = setup(2);
    let (data, group) = remembered_pair(&cfg, &k);
    let mut runner = Runner::new(&cfg, &k, &data.scenes);
    let rec = runner.run_group(0, &group, 50, None).unwrap();
    let b = &rec[1];
    assert_eq!(b.frontier_selections, 0, "{b:?}");
    assert!(b.success, "{b:?}");
    assert!(b.path_length <= 2.0 * b.shortest_length + 1.0, "{b:?}");

    let mut off = cfg.clone();
    off.toggles.memory_model = false;
    let mut runner = Runner::new(&off, &k, &data.scenes);
    let rec = runner.run_group(0, &group, 50, None).unwrap();
    assert!(rec[1].frontier_selections > 0);
    assert_eq!(rec[1].memory_at_start, 0);
}

#[test]
fn persistence_and_reset() {
    let (cfg, k) = setup(3);
    let data = dataset(&cfg, &k, 21);
    let report = run_lifelong(&data, &cfg, &k, 21).unwrap();
    for w in report.records.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if b.group == a.group {
            assert_eq!(b.index_in_group, a.index_in_group + 1);
            assert_eq!(b.memory_at_start, a.memory_at_end);
            assert_eq!(b.unknown_at_start, a.unknown_at_end);
            assert_eq!(b.start, a.end);
        } else {
            assert_eq!(b.index_in_group, 0);
            assert_eq!(b.memory_at_start, 0);
            assert_eq!(b.unknown_at_start, 1);
        }
    }
}

#[test]
fn memory_off_resets_every_episode_but_keeps_teleports() {
    let (mut cfg, k) = setup(2);
    cfg.toggles.memory_model = false;
    let data = dataset(&cfg, &k, 22);
    let report = run_lifelong(&data, &cfg, &k, 22).unwrap();
    for w in report.records.windows(2) {
        assert_eq!(w[1].memory_at_start, 0);
        assert_eq!(w[1].unknown_at_start, 1);
        if w[1].group == w[0].group {
            assert_eq!(w[1].start, w[0].end);
        }
    }
}

#[test]
fn factor_toggle_equals_zero_amplitude() {
    let (cfg, k) = setup(2);
    let data = dataset(&cfg, &k, 23);
    for which in 0..3 {
        let mut toggled = cfg.clone();
        let mut zeroed = cfg.clone();
        match which {
            0 => {
                toggled.toggles.footprint = false;
                zeroed.exploration.amp_footprint = 0.0;
            }
            1 => {
                toggled.toggles.distance = false;
                zeroed.exploration.amp_distance = 0.0;
            }
            _ => {
                toggled.toggles.semantics = false;
                zeroed.exploration.amp_semantic = 0.0;
            }
        }
        let a = run_lifelong(&data, &toggled, &k, 23).unwrap();
        let b = run_lifelong(&data, &zeroed, &k, 23).unwrap();
        assert_eq!(a.records, b.records, "factor {which}");
    }
}

#[test]
fn all_on_ablation_matches_plain_run() {
    let (cfg, k) = setup(2);
    let data = dataset(&cfg, &k, 24);
    let plain = run_lifelong(&data, &cfg, &k, data.seed).unwrap();
    let a = run_ablation(&cfg, &k, &[Variant::new("full", |_| {})], std::slice::from_ref(&data)).unwrap();
    assert_eq!(a.rows[0].reports[0], plain);
    assert_eq!(a.rows[0].sr, plain.sr);
}

#[test]
fn reports_are_reproducible() {
    let (cfg, k) = setup(2);
    let a = run_lifelong(&dataset(&cfg, &k, 25), &cfg, &k, 25).unwrap();
    let b = run_lifelong(&dataset(&cfg, &k, 25), &cfg, &k, 25).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    assert_eq!(a.to_csv(), b.to_csv());
    assert!(a.spl <= a.sr);
    let back = oval::eval::EvalReport::from_json(&a.to_json().unwrap()).unwrap();
    assert_eq!(back, a);
}

#[test]
fn generated_episodes_start_outside_success_region() {
    let k = Knowledge::builtin();
    let spec = DatasetSpec {
        scenes: 3,
        floors: 2,
        ..DatasetSpec::default()
    };
    let d = generate_lifelong_dataset(9, &spec, &k, 1.0).unwrap();
    let again = generate_lifelong_dataset(9, &spec, &k, 1.0).unwrap();
    assert_eq!(d.to_json().unwrap(), again.to_json().unwrap());
    let groups = sort_episodes(&d.episodes);
    assert_eq!(groups.len(), 6);
    for e in &d.episodes {
        let s = d.scene_for(&e.scene_id, e.floor_height).unwrap();
        assert!(s.instances_of(&e.goal_label).all(|o| distance(o.position, e.start.position()) > 1.0));
    }
}

#[test]
fn requested_goals_restrict_sampling() {
    let k = Knowledge::builtin();
    let spec = DatasetSpec {
        scenes: 4,
        goals: Some(vec!["bed".into(), "sink".into()]),
        ..DatasetSpec::default()
    };
    let d = generate_lifelong_dataset(2, &spec, &k, 1.0).unwrap();
    assert!(!d.episodes.is_empty());
    assert!(d.episodes.iter().all(|e| e.goal_label == "bed" || e.goal_label == "sink"));
}

#[test]
fn step_budget_is_a_recorded_failure() {
    let (mut cfg, k) = setup(1);
    cfg.run.max_steps = 5;
    let data = dataset(&cfg, &k, 26);
    let r = run_lifelong(&data, &cfg, &k, 26).unwrap();
    assert!(r.records.iter().all(|x| x.steps <= 5));
    assert!(r
        .records
        .iter()
        .all(|x| x.success || x.stop_reason == oval::eval::StopReason::StepBudget || x.steps < 5));
    assert_eq!(r.sr, 0.0);
}
