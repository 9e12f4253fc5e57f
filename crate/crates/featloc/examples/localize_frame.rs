//! End-to-end localization of single frames: coarse pose from mutually
//! consistent descriptor matches, pose-guided spatial matching, RANSAC
//! refinement. Prints the per-stage timings and counts of each frame.
//!
//! ```sh
//! cargo run -p featloc --example localize_frame
//! ```

use featloc::estimation::{frame_seed, localize};
use featloc::harness::{self, config::ExperimentConfig};
use featloc::index::{DescriptorIndex, SpatialIndex};

fn main() -> featloc::Result<()> {
    let mut config = ExperimentConfig::default();
    config.world.landmark_count = 8_000;
    config.mapping_frames = 100;
    config.eval_frames = 6;

    let data = harness::prepare_data(&config)?;
    println!("map: {} features", data.map.len());

    let desc_index = DescriptorIndex::build(&data.map, config.index);
    let spatial_index = SpatialIndex::build(&data.map);

    for frame in &data.eval_frames {
        let mut params = config.pipeline;
        params.ransac.rng_seed = frame_seed(config.run_seed, frame.frame_index);
        let report = localize(frame, &data.map, &desc_index, &spatial_index, &params);
        let truth = frame.ground_truth.expect("simulated frames carry truth");
        match report.outcome.pose() {
            Some(pose) => println!(
                "frame {:>2}: ok   err {:.1} mm / {:.3} deg | N={} M={} clique={} spatial={} inliers={} | {:.2} ms",
                report.frame_index,
                pose.translation_distance_to(&truth) * 1e3,
                pose.rotation_angle_to(&truth).to_degrees(),
                report.counts.n_features,
                report.counts.m_queries,
                report.counts.clique_size,
                report.counts.spatial_matches,
                report.counts.inliers,
                report.timings.total * 1e3,
            ),
            None => println!(
                "frame {:>2}: {:?} | N={} M={} | {:.2} ms",
                report.frame_index,
                report.outcome,
                report.counts.n_features,
                report.counts.m_queries,
                report.timings.total * 1e3,
            ),
        }
    }
    Ok(())
}
