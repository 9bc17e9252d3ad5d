//! Run one object-goal episode in a generated floor and print the
//! controller's phase trace.
//!
//! cargo run --example single_episode -- [goal] [seed]

use oval::config::{Config, Knowledge};
use oval::eval::{generate_lifelong_dataset, DatasetSpec, Runner};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let goal = args.next();
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(4);
    let k = Knowledge::builtin();
    let mut cfg = Config::profile("desk", None)?;
    cfg.dataset = DatasetSpec {
        scenes: 1,
        episodes_per_floor: 1,
        goals: goal.map(|g| vec![g]),
        scene: cfg.dataset.scene.clone(),
        ..DatasetSpec::default()
    };
    let data = generate_lifelong_dataset(seed, &cfg.dataset, &k, cfg.run.success_radius)?;
    let group = &data.groups()[0];
    let ep = &group.episodes[0];
    println!(
        "goal {:?} from ({:.2}, {:.2}) in {}",
        ep.goal_label, ep.start.x, ep.start.y, ep.scene_id
    );

    let mut runner = Runner::new(&cfg, &k, &data.scenes);
    let mut tracer = Tracer::default();
    let rec = runner.run_group(0, group, seed, Some(&mut tracer))?;
    for (step, phase, x, y) in &tracer.changes {
        println!("step {step:>4}  {phase:<18} ({x:.2}, {y:.2})");
    }
    let r = &rec[0];
    println!(
        "success {}  steps {}  path {:.2} m  shortest {:.2} m  SPL {:.3}",
        r.success,
        r.steps,
        r.path_length,
        r.shortest_length,
        r.spl_term()
    );
    Ok(())
}

#[derive(Default)]
struct Tracer {
    changes: Vec<(usize, &'static str, f64, f64)>,
}

impl oval::eval::StepObserver for Tracer {
    fn on_step(
        &mut self,
        rec: &oval::eval::EpisodeRecord,
        pose: &oval::gridmap::Pose,
        _action: oval::navctl::Action,
        c: &oval::navctl::Controller,
    ) {
        let name = c.state.phase.name();
        if self.changes.last().map(|l| l.1) != Some(name) {
            self.changes.push((rec.steps, name, pose.x, pose.y));
        }
    }
}
