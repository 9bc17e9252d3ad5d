//! Generate a floor, print its layout and the geodesic distance from the
//! first room to every object class.
//!
//! cargo run --example scene_generation -- [seed] [scene.json]

use oval::config::Knowledge;
use oval::simworld::{generate_scene, geodesic_shortest_path, Raster, SceneSpec};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(11);
    let k = Knowledge::builtin();
    let scene = generate_scene("demo/floor-0", seed, 0.0, &SceneSpec::default(), &k.catalog)?;
    println!("extent {:.2} x {:.2} m, {} walls", scene.extent[0], scene.extent[1], scene.walls.len());
    for (i, r) in scene.rooms.iter().enumerate() {
        println!(
            "room {i} {:<12} [{:.2}, {:.2}]-[{:.2}, {:.2}] hue {:.0}",
            r.kind, r.rect[0], r.rect[1], r.rect[2], r.rect[3], r.color[0]
        );
    }
    let raster = Raster::build(&scene);
    let r0 = scene.rooms[0].rect;
    let start = raster.center(raster.nearest_open([(r0[0] + r0[2]) / 2.0, (r0[1] + r0[3]) / 2.0]).expect("open"));
    for label in scene.labels() {
        let goals: Vec<[f64; 2]> = scene.instances_of(&label).map(|o| o.position).collect();
        let d = geodesic_shortest_path(&raster, start, &goals, 1.0);
        println!("{label:<16} x{}  geodesic {:?}", goals.len(), d.map(|d| (d * 100.0).round() / 100.0));
    }
    if let Some(path) = args.next() {
        std::fs::write(&path, scene.to_json()?)?;
        println!("wrote {path}");
    }
    Ok(())
}
