//! Generate a synthetic corridor world and render a short camera pass over
//! it, writing the frames, the ground-truth landmarks, and the generative-id
//! sidecar used by test oracles.
//!
//! ```sh
//! cargo run -p featloc --example simulate_world
//! ```

use featloc::feature_map::{save_frames, save_map};
use featloc::harness::config::look_along;
use featloc::simworld::{
    generate_world, render_trajectory, save_sidecar, world_to_map, SensorSpec, TrajectorySpec,
    WorldSpec,
};
use nalgebra::Point3;

fn main() -> featloc::Result<()> {
    let spec = WorldSpec {
        landmark_count: 5_000,
        repeat_fraction: 0.3,
        rng_seed: 7,
        ..WorldSpec::default()
    };
    let world = generate_world(&spec)?;
    let cloned = world.landmarks.iter().filter(|l| l.prototype.is_some()).count();
    println!(
        "world: {} landmarks ({} prototype clones), descriptors {}-dimensional",
        world.landmarks.len(),
        cloned,
        world.descriptor_dim
    );

    let sensor = SensorSpec::default();
    let trajectory = TrajectorySpec {
        waypoints: vec![
            look_along(Point3::new(2.0, 0.0, 1.5), 1.0),
            look_along(Point3::new(24.0, 0.5, 1.5), 1.0),
        ],
        frame_count: 20,
    };
    let rendered = render_trajectory(&world, &sensor, &trajectory, 99);
    let mean_features: f64 = rendered
        .iter()
        .map(|rf| rf.frame.features.len() as f64)
        .sum::<f64>()
        / rendered.len() as f64;
    println!(
        "rendered {} frames, {:.0} features per frame on average",
        rendered.len(),
        mean_features
    );

    let out = std::env::temp_dir().join("featloc-simulate-example");
    std::fs::create_dir_all(&out)?;
    save_map(&world_to_map(&world), &out.join("world.fmap"))?;
    let frames: Vec<_> = rendered.iter().map(|rf| rf.frame.clone()).collect();
    save_frames(&frames, spec.descriptor_dim, &out.join("pass.frames"))?;
    save_sidecar(&rendered, &out.join("pass.gen"))?;
    println!("wrote world.fmap, pass.frames, pass.gen to {}", out.display());
    Ok(())
}
