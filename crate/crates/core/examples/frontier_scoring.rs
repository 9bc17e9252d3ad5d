//! Score three hand-placed frontiers with the distance, semantic and
//! footprint factors and show which one each selection mode picks.

use oval::config::Knowledge;
use oval::explorer::{
    choose_frontier, score_frontiers, ExplorationParams, FootprintLog, Landmark, ScoringContext, SelectionMode,
    TriedFrontierSet,
};
use oval::gridmap::{Cell, FrontierWaypoint, OccupancyGrid, Pose};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn wp(grid: &OccupancyGrid, x: f64, y: f64) -> FrontierWaypoint {
    let cell: Cell = grid.lattice_cell([x, y]);
    FrontierWaypoint {
        cell,
        world: grid.cell_center(cell),
        cluster_size: 5,
    }
}

fn main() {
    let k = Knowledge::builtin();
    let grid = OccupancyGrid::new([-10.0, -10.0], 0.1, 200, 200).unwrap();
    let pose = Pose::new(0.0, 0.0, 0.0, 0.0);
    let waypoints = vec![wp(&grid, 2.0, 0.0), wp(&grid, -3.0, 0.5), wp(&grid, 0.5, 4.0)];

    // the agent came from the east, and a stove sits near the northern frontier
    let params = ExplorationParams::default();
    let mut footprint = FootprintLog::new(params.sigma_footprint, params.kernel_mode);
    for i in 0..10 {
        footprint.record([0.3 * i as f64, 0.0]);
    }
    footprint.sync(&grid);
    let landmarks = [Landmark {
        label: "stove",
        position: [0.8, 4.5],
    }];

    for selection in [SelectionMode::Argmax, SelectionMode::Nearest, SelectionMode::Softmax] {
        let params = ExplorationParams {
            selection,
            ..ExplorationParams::default()
        };
        let ctx = ScoringContext {
            pose: &pose,
            landmarks: &landmarks,
            goal: "refrigerator",
            table: &k.cooccurrence,
            footprint: &footprint,
            params: &params,
        };
        if selection == SelectionMode::Argmax {
            println!("      x      y   dist    o_d    o_s    o_f  total");
            for s in score_frontiers(&waypoints, &ctx) {
                println!(
                    "{:>7.2}{:>7.2}{:>7.2}{:>7.3}{:>7.3}{:>7.3}{:>7.3}",
                    s.waypoint.world[0], s.waypoint.world[1], s.distance, s.o_d, s.o_s, s.o_f, s.total
                );
            }
        }
        let mut tried = TriedFrontierSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = choose_frontier(&waypoints, &mut tried, &ctx, &mut rng);
        let c = d.chosen.expect("a frontier");
        println!("{selection:?}: ({:.2}, {:.2})", c.waypoint.world[0], c.waypoint.world[1]);
    }
}
