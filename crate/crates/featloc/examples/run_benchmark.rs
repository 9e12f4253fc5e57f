//! Full benchmark harness run: proposed pipeline vs the 1/10/20-NN
//! baselines over a generated scenario, emitting the CSV tables and SVG
//! plots bundle.
//!
//! ```sh
//! cargo run -p featloc --example run_benchmark [out_dir]
//! ```
//!
//! Pass an output directory to keep the bundle; defaults to a temp path.
//! The full desk-scale scenario (50k landmarks, 200 frames) is what
//! `featloc bench` runs with no config; this example trims it for a quick
//! turnaround.

use featloc::harness::{self, config::ExperimentConfig};

fn main() -> featloc::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("featloc-benchmark"));

    let mut config = ExperimentConfig::default();
    config.world.landmark_count = 15_000;
    config.mapping_frames = 200;
    config.eval_frames = 80;

    let result = harness::run_experiment(&config, &out)?;
    println!("map features: {}", result.map_size);
    println!(
        "{:<12} {:>8} {:>9} {:>11} {:>10}",
        "approach", "success", "rmse_x", "mean_total", "ransac"
    );
    for (approach, m) in result.approaches.iter().zip(&result.metrics) {
        println!(
            "{:<12} {:>7.1}% {:>8.1}mm {:>9.2}ms {:>8.2}ms",
            approach.label(),
            m.success_rate * 100.0,
            m.rmse_x * 1e3,
            m.mean_total * 1e3,
            m.mean_ransac * 1e3,
        );
    }
    println!("bundle written to {}", out.display());
    Ok(())
}
