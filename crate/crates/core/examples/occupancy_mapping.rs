//! Build an occupancy grid from a few simulated scans, then list frontier
//! clusters and dump the map as a PGM image.
//!
//! cargo run --example occupancy_mapping -- [out.pgm]

use oval::config::Knowledge;
use oval::gridmap::{cluster_frontiers, CellState, OccupancyGrid, Pose};
use oval::simworld::{generate_scene, DetectorProfile, SceneSpec, SensorParams, VerifierRates, World};

fn main() -> anyhow::Result<()> {
    let k = Knowledge::builtin();
    let scene = generate_scene("demo/floor-0", 3, 0.0, &SceneSpec::default(), &k.catalog)?;
    let mut world = World::new(
        scene.clone(),
        &k.catalog,
        SensorParams::default(),
        DetectorProfile::default(),
        VerifierRates::default(),
        0,
    );
    let room = scene.rooms[0].rect;
    let start = [(room[0] + room[2]) / 2.0, (room[1] + room[3]) / 2.0];
    let k0 = world.raster.nearest_open(start).expect("open cell");
    let p = world.raster.center(k0);

    let mut grid = OccupancyGrid::new([0.0, 0.0], 0.1, 1, 1)?;
    for i in 0..12 {
        let pose = Pose::new(p[0], p[1], i as f64 * 30f64.to_radians(), 0.0);
        let obs = world.sense(&pose)?;
        grid.integrate_observation(&pose, &obs.scan, [0.05, 2.0])?;
    }
    println!(
        "grid {}x{}: free {} obstacle {} unknown {}",
        grid.width(),
        grid.height(),
        grid.count(CellState::Free),
        grid.count(CellState::Obstacle),
        grid.count(CellState::Unknown)
    );
    let frontier = grid.detect_frontiers();
    let waypoints = cluster_frontiers(&grid, &frontier, 1.5, 3);
    println!("{} frontier cells in {} clusters", frontier.len(), waypoints.len());
    for w in &waypoints {
        println!("  ({:.2}, {:.2}) size {}", w.world[0], w.world[1], w.cluster_size);
    }
    if let Some(path) = std::env::args().nth(1) {
        std::fs::write(&path, grid.to_pgm())?;
        println!("wrote {path}");
    }
    Ok(())
}
