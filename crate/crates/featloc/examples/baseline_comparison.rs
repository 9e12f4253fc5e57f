//! The paper's headline comparison on one aliased scene: descriptor-only
//! k-NN matching against the two-stage pipeline, frame by frame. Repeated
//! structure poisons the baselines while spatial verification holds up.
//!
//! ```sh
//! cargo run -p featloc --example baseline_comparison
//! ```

use featloc::estimation::{frame_seed, localize, localize_baseline};
use featloc::harness::{self, config::ExperimentConfig};
use featloc::index::{DescriptorIndex, SpatialIndex};

fn main() -> featloc::Result<()> {
    let mut config = ExperimentConfig::default();
    config.world.landmark_count = 10_000;
    config.mapping_frames = 120;
    config.eval_frames = 25;

    let data = harness::prepare_data(&config)?;
    let desc_index = DescriptorIndex::build(&data.map, config.index);
    let spatial_index = SpatialIndex::build(&data.map);

    println!("frame | proposed      | 1-NN baseline | 10-NN baseline");
    let mut wins = [0usize; 3];
    for frame in &data.eval_frames {
        let truth = frame.ground_truth.unwrap();
        let mut params = config.pipeline;
        params.ransac.rng_seed = frame_seed(config.run_seed, frame.frame_index);

        let verdict = |report: &featloc::LocalizationReport| -> String {
            match report.outcome.pose() {
                Some(pose) => {
                    let err = pose.translation_distance_to(&truth);
                    if err <= 0.5 {
                        format!("ok {:>5.1} mm", err * 1e3)
                    } else {
                        format!("wrong {:.2} m", err)
                    }
                }
                None => "no pose".to_string(),
            }
        };
        let ok = |report: &featloc::LocalizationReport| -> bool {
            report
                .outcome
                .pose()
                .is_some_and(|p| p.translation_distance_to(&truth) <= 0.5)
        };

        let proposed = localize(frame, &data.map, &desc_index, &spatial_index, &params);
        let base1 = localize_baseline(frame, &data.map, &desc_index, 1, &params.ransac);
        let base10 = localize_baseline(frame, &data.map, &desc_index, 10, &params.ransac);
        for (slot, report) in [&proposed, &base1, &base10].iter().enumerate() {
            if ok(report) {
                wins[slot] += 1;
            }
        }
        println!(
            "{:>5} | {:<13} | {:<13} | {}",
            frame.frame_index,
            verdict(&proposed),
            verdict(&base1),
            verdict(&base10)
        );
    }
    let n = data.eval_frames.len();
    println!(
        "\nsuccess: proposed {}/{n}, baseline-1 {}/{n}, baseline-10 {}/{n}",
        wins[0], wins[1], wins[2]
    );
    Ok(())
}
