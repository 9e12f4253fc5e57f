//! Build a landmark database from posed observation frames: features are
//! associated across frames, descriptor means and per-feature matching
//! deviations accumulate, and the result round-trips through the FMAP file
//! format.
//!
//! ```sh
//! cargo run -p featloc --example build_map
//! ```

use featloc::feature_map::{build_map, load_map, save_map, MapBuildParams};
use featloc::harness::config::ExperimentConfig;
use featloc::simworld::{generate_world, render_trajectory};

fn main() -> featloc::Result<()> {
    let mut config = ExperimentConfig::default();
    config.world.landmark_count = 4_000;
    config.mapping_frames = 80;

    let world = generate_world(&config.world)?;
    let rendered = render_trajectory(
        &world,
        &config.sensor,
        &config.mapping_trajectory(),
        config.mapping_seed,
    );
    let frames: Vec<_> = rendered.into_iter().map(|rf| rf.frame).collect();
    let observations: usize = frames.iter().map(|f| f.features.len()).sum();

    let map = build_map(&frames, &MapBuildParams::default())?;
    let reobserved = map.features.iter().filter(|f| f.n_obs >= 2).count();
    let mean_std: f64 = map
        .features
        .iter()
        .filter(|f| f.n_obs >= 2)
        .map(|f| f.match_std)
        .sum::<f64>()
        / reobserved.max(1) as f64;
    println!(
        "{} observations over {} frames -> {} map features",
        observations,
        frames.len(),
        map.len()
    );
    println!(
        "{} features observed at least twice; mean matching deviation {:.4}",
        reobserved, mean_std
    );

    let path = std::env::temp_dir().join("featloc-example-map.fmap");
    save_map(&map, &path)?;
    let back = load_map(&path)?;
    assert_eq!(back.len(), map.len());
    println!("map round-tripped through {}", path.display());
    Ok(())
}
