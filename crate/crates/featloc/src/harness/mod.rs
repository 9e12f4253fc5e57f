//! Benchmark harness: evaluation metrics (robustness, per-axis RMSE,
//! runtimes), the proposed-vs-baseline experiment runner, and result
//! emission as CSV tables and SVG plots.

pub mod cli;
pub mod config;
pub mod svg;

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::estimation::{
    frame_seed, localize, localize_baseline, LocalizationReport, Outcome, PipelineParams,
};
use crate::feature_map::{build_map, FeatureMap, ObservationFrame};
use crate::geometry::Pose;
use crate::index::{DescriptorIndex, SpatialIndex, TimingModel};
use crate::simworld::{generate_world, render_trajectory, RenderedFrame};
use crate::{Error, Result};

pub use config::{ExperimentConfig, RawConfig};

/// Evaluation settings. The map frame convention is X along the corridor's
/// main direction, Y perpendicular horizontal, Z up.
#[derive(Clone, Copy, Debug)]
pub struct EvalConfig {
    /// Any-axis translational error above this marks a frame as failed,
    /// meters.
    pub failure_threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            failure_threshold: 0.5,
        }
    }
}

/// Aggregated run metrics. Failed frames are excluded from every RMSE.
#[derive(Clone, Debug, Default)]
pub struct MetricsReport {
    pub total: usize,
    pub successes: usize,
    pub failures_coarse: usize,
    /// Fine-stage failures, including computed poses rejected by the
    /// failure threshold (a wrong fine estimate).
    pub failures_fine: usize,
    pub failures_insufficient: usize,
    pub success_rate: f64,
    pub rmse_x: f64,
    pub rmse_y: f64,
    pub rmse_z: f64,
    /// Per-axis rotational RMS errors in degrees: angle between the
    /// corresponding frame axes of estimate and ground truth.
    pub rmse_alpha: f64,
    pub rmse_beta: f64,
    pub rmse_gamma: f64,
    /// Mean per-frame stage runtimes, seconds.
    pub mean_nn64: f64,
    pub mean_coarse: f64,
    pub mean_nn3d: f64,
    pub mean_ransac: f64,
    pub mean_total: f64,
    /// Matching cost model aggregates.
    pub mean_m: f64,
    pub mean_n: f64,
    pub timing: TimingModel,
}

/// Classifies every frame and aggregates RMS errors over the successes.
///
/// A frame counts as failed when no pose was computed or when the
/// translational error along any map axis exceeds the threshold.
pub fn evaluate(
    reports: &[LocalizationReport],
    ground_truth: &[Pose],
    config: &EvalConfig,
) -> Result<MetricsReport> {
    if reports.len() != ground_truth.len() {
        return Err(Error::LengthMismatch {
            left: reports.len(),
            right: ground_truth.len(),
        });
    }
    let mut out = MetricsReport {
        total: reports.len(),
        ..MetricsReport::default()
    };
    let mut sq = [0.0f64; 6];
    for (report, truth) in reports.iter().zip(ground_truth) {
        out.mean_nn64 += report.timings.nn64;
        out.mean_coarse += report.timings.coarse;
        out.mean_nn3d += report.timings.nn3d;
        out.mean_ransac += report.timings.ransac;
        out.mean_total += report.timings.total;
        out.mean_m += report.counts.m_queries as f64;
        out.mean_n += report.counts.n_features as f64;
        out.timing.merge(&report.timing_model());

        match &report.outcome {
            Outcome::Success(pose) => {
                let delta = pose.translation() - truth.translation();
                if delta.iter().any(|c| c.abs() > config.failure_threshold) {
                    out.failures_fine += 1;
                    continue;
                }
                out.successes += 1;
                sq[0] += delta.x * delta.x;
                sq[1] += delta.y * delta.y;
                sq[2] += delta.z * delta.z;
                for axis in 0..3 {
                    let angle = truth.axis_angle_to(pose, axis).to_degrees();
                    sq[3 + axis] += angle * angle;
                }
            }
            Outcome::FailureCoarse => out.failures_coarse += 1,
            Outcome::FailureFine => out.failures_fine += 1,
            Outcome::FailureInsufficientFeatures => out.failures_insufficient += 1,
        }
    }
    if out.total > 0 {
        let n = out.total as f64;
        out.success_rate = out.successes as f64 / n;
        out.mean_nn64 /= n;
        out.mean_coarse /= n;
        out.mean_nn3d /= n;
        out.mean_ransac /= n;
        out.mean_total /= n;
        out.mean_m /= n;
        out.mean_n /= n;
    }
    if out.successes > 0 {
        let n = out.successes as f64;
        out.rmse_x = (sq[0] / n).sqrt();
        out.rmse_y = (sq[1] / n).sqrt();
        out.rmse_z = (sq[2] / n).sqrt();
        out.rmse_alpha = (sq[3] / n).sqrt();
        out.rmse_beta = (sq[4] / n).sqrt();
        out.rmse_gamma = (sq[5] / n).sqrt();
    }
    Ok(out)
}

/// One compared approach.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Approach {
    Baseline(usize),
    Proposed,
}

impl Approach {
    pub fn label(&self) -> String {
        match self {
            Approach::Baseline(k) => format!("baseline{k}"),
            Approach::Proposed => "proposed".to_string(),
        }
    }
}

/// Everything a finished experiment produced, keyed by approach in the
/// order they ran (baselines ascending, proposed last).
pub struct ExperimentResult {
    pub approaches: Vec<Approach>,
    pub reports: Vec<Vec<LocalizationReport>>,
    pub metrics: Vec<MetricsReport>,
    pub ground_truth: Vec<Pose>,
    pub map_size: usize,
}

impl ExperimentResult {
    pub fn metrics_for(&self, approach: Approach) -> Option<&MetricsReport> {
        self.approaches
            .iter()
            .position(|a| *a == approach)
            .map(|i| &self.metrics[i])
    }

    pub fn reports_for(&self, approach: Approach) -> Option<&[LocalizationReport]> {
        self.approaches
            .iter()
            .position(|a| *a == approach)
            .map(|i| self.reports[i].as_slice())
    }
}

/// Generated (or loaded) experiment inputs.
pub struct ExperimentData {
    pub map: FeatureMap,
    pub eval_frames: Vec<ObservationFrame>,
    pub ground_truth: Vec<Pose>,
}

/// Builds the world, runs the mapping sweep, builds the map, and renders the
/// evaluation frames; or loads both from the configured input files.
pub fn prepare_data(config: &ExperimentConfig) -> Result<ExperimentData> {
    if let (Some(map_path), Some(frames_path)) = (&config.input_map, &config.input_frames) {
        let map = crate::feature_map::load_map(map_path)?;
        let eval_frames = crate::feature_map::load_frames(frames_path)?;
        let ground_truth = eval_frames
            .iter()
            .map(|f| {
                f.ground_truth.ok_or(Error::MissingGroundTruth {
                    frame_index: f.frame_index,
                })
            })
            .collect::<Result<_>>()?;
        return Ok(ExperimentData {
            map,
            eval_frames,
            ground_truth,
        });
    }

    let world = generate_world(&config.world)?;
    let mapping = render_trajectory(
        &world,
        &config.sensor,
        &config.mapping_trajectory(),
        config.mapping_seed,
    );
    let mapping_frames: Vec<ObservationFrame> =
        mapping.into_iter().map(|rf| rf.frame).collect();
    let map = build_map(&mapping_frames, &config.map_build)?;

    let rendered = render_trajectory(
        &world,
        &config.sensor,
        &config.eval_trajectory(),
        config.eval_seed,
    );
    let ground_truth = rendered
        .iter()
        .map(|rf| rf.frame.ground_truth.expect("simulator sets ground truth"))
        .collect();
    let eval_frames = rendered.into_iter().map(|rf| rf.frame).collect();
    Ok(ExperimentData {
        map,
        eval_frames,
        ground_truth,
    })
}

/// Runs one approach over all frames, in parallel, deterministically:
/// per-frame seeds derive from the run seed and frame index, and results are
/// ordered by frame index regardless of scheduling.
pub fn run_approach(
    approach: Approach,
    frames: &[ObservationFrame],
    map: &FeatureMap,
    desc_index: &DescriptorIndex,
    spatial_index: &SpatialIndex,
    params: &PipelineParams,
) -> Vec<LocalizationReport> {
    let mut reports: Vec<LocalizationReport> = frames
        .par_iter()
        .map(|frame| {
            let mut p = *params;
            p.ransac.rng_seed = frame_seed(params.ransac.rng_seed, frame.frame_index);
            match approach {
                Approach::Proposed => localize(frame, map, desc_index, spatial_index, &p),
                Approach::Baseline(k) => localize_baseline(frame, map, desc_index, k, &p.ransac),
            }
        })
        .collect();
    reports.sort_by_key(|r| r.frame_index);
    reports
}

/// Runs the full comparison (baselines then the proposed pipeline) and
/// writes the result bundle into `out_dir`: `robustness.csv`, `rmse.csv`,
/// `runtimes.csv`, `trajectory.svg`, `robustness.svg`, `rmse.svg`.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentResult> {
    let data = prepare_data(config)?;
    let result = run_comparison(config, &data)?;
    std::fs::create_dir_all(out_dir)?;
    write_robustness_csv(&result, &out_dir.join("robustness.csv"))?;
    write_rmse_csv(&result, &out_dir.join("rmse.csv"))?;
    write_runtimes_csv(&result, &out_dir.join("runtimes.csv"))?;
    svg::write_robustness_svg(&result, &out_dir.join("robustness.svg"))?;
    svg::write_rmse_svg(&result, &out_dir.join("rmse.svg"))?;
    svg::write_trajectory_svg(&result, &out_dir.join("trajectory.svg"))?;
    Ok(result)
}

/// Runs all approaches over prepared data without touching the filesystem.
pub fn run_comparison(
    config: &ExperimentConfig,
    data: &ExperimentData,
) -> Result<ExperimentResult> {
    let desc_index = DescriptorIndex::build(&data.map, config.index);
    let spatial_index = SpatialIndex::build(&data.map);
    let eval_config = EvalConfig {
        failure_threshold: config.failure_threshold,
    };

    let mut approaches: Vec<Approach> = config
        .baseline_ks
        .iter()
        .map(|&k| Approach::Baseline(k))
        .collect();
    approaches.push(Approach::Proposed);

    let run = |approach: Approach| -> Result<(Vec<LocalizationReport>, MetricsReport)> {
        let reports = run_approach(
            approach,
            &data.eval_frames,
            &data.map,
            &desc_index,
            &spatial_index,
            &config.pipeline,
        );
        let metrics = evaluate(&reports, &data.ground_truth, &eval_config)?;
        Ok((reports, metrics))
    };

    let mut reports = Vec::new();
    let mut metrics = Vec::new();
    if config.jobs > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.jobs)
            .build()
            .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
        for &approach in &approaches {
            let (r, m) = pool.install(|| run(approach))?;
            reports.push(r);
            metrics.push(m);
        }
    } else {
        for &approach in &approaches {
            let (r, m) = run(approach)?;
            reports.push(r);
            metrics.push(m);
        }
    }

    Ok(ExperimentResult {
        approaches,
        reports,
        metrics,
        ground_truth: data.ground_truth.clone(),
        map_size: data.map.len(),
    })
}

/// Formats a float for CSV: plain decimal, enough digits to be stable.
fn csv_num(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else {
        format!("{v:.9}")
    }
}

/// `approach,total,success,failure_coarse,failure_fine,failure_insufficient,success_rate`
pub fn write_robustness_csv(result: &ExperimentResult, path: &Path) -> Result<()> {
    let mut s = String::from(
        "approach,total,success,failure_coarse,failure_fine,failure_insufficient,success_rate\n",
    );
    for (approach, m) in result.approaches.iter().zip(&result.metrics) {
        if m.total == 0 {
            continue; // no evaluation frames: headers only
        }
        writeln!(
            s,
            "{},{},{},{},{},{},{}",
            approach.label(),
            m.total,
            m.successes,
            m.failures_coarse,
            m.failures_fine,
            m.failures_insufficient,
            csv_num(m.success_rate)
        )
        .expect("write to string");
    }
    std::fs::write(path, s)?;
    Ok(())
}

/// `approach,rmse_x_m,rmse_y_m,rmse_z_m,rmse_alpha_deg,rmse_beta_deg,rmse_gamma_deg`
pub fn write_rmse_csv(result: &ExperimentResult, path: &Path) -> Result<()> {
    let mut s =
        String::from("approach,rmse_x_m,rmse_y_m,rmse_z_m,rmse_alpha_deg,rmse_beta_deg,rmse_gamma_deg\n");
    for (approach, m) in result.approaches.iter().zip(&result.metrics) {
        if m.total == 0 {
            continue;
        }
        writeln!(
            s,
            "{},{},{},{},{},{},{}",
            approach.label(),
            csv_num(m.rmse_x),
            csv_num(m.rmse_y),
            csv_num(m.rmse_z),
            csv_num(m.rmse_alpha),
            csv_num(m.rmse_beta),
            csv_num(m.rmse_gamma)
        )
        .expect("write to string");
    }
    std::fs::write(path, s)?;
    Ok(())
}

/// `task,<approach columns>` with rows `nn64,coarse,nn3d,ransac,total`;
/// values are mean per-frame seconds. Stages an approach never runs are 0.
pub fn write_runtimes_csv(result: &ExperimentResult, path: &Path) -> Result<()> {
    let mut s = String::from("task");
    for approach in &result.approaches {
        write!(s, ",{}", approach.label()).expect("write to string");
    }
    s.push('\n');
    let rows: [(&str, fn(&MetricsReport) -> f64); 5] = [
        ("nn64", |m| m.mean_nn64),
        ("coarse", |m| m.mean_coarse),
        ("nn3d", |m| m.mean_nn3d),
        ("ransac", |m| m.mean_ransac),
        ("total", |m| m.mean_total),
    ];
    if result.metrics.iter().any(|m| m.total > 0) {
        for (name, get) in rows {
            write!(s, "{name}").expect("write to string");
            for m in &result.metrics {
                write!(s, ",{}", csv_num(get(m))).expect("write to string");
            }
            s.push('\n');
        }
    }
    std::fs::write(path, s)?;
    Ok(())
}

/// Renders the mapping sweep and evaluation pass for external use (the
/// `simulate` subcommand); returns the rendered frames with their oracle
/// sidecar ids.
pub fn simulate_frames(
    config: &ExperimentConfig,
    profile: SimulateProfile,
) -> Result<Vec<RenderedFrame>> {
    let world = generate_world(&config.world)?;
    let (trajectory, seed) = match profile {
        SimulateProfile::Mapping => (config.mapping_trajectory(), config.mapping_seed),
        SimulateProfile::Eval => (config.eval_trajectory(), config.eval_seed),
    };
    Ok(render_trajectory(&world, &config.sensor, &trajectory, seed))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SimulateProfile {
    Mapping,
    Eval,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimation::{Counts, StageTimings};
    use nalgebra::{UnitQuaternion, Vector3};

    fn report(outcome: Outcome) -> LocalizationReport {
        LocalizationReport {
            frame_index: 0,
            outcome,
            timings: StageTimings::default(),
            counts: Counts::default(),
        }
    }

    #[test]
    fn perfect_estimates_score_perfectly() {
        let gt: Vec<Pose> = (0..10)
            .map(|i| {
                Pose::new(
                    UnitQuaternion::from_scaled_axis(Vector3::z() * (i as f64 * 0.1)),
                    Vector3::new(i as f64, 0.0, 0.0),
                )
            })
            .collect();
        let reports: Vec<LocalizationReport> = gt
            .iter()
            .map(|p| report(Outcome::Success(*p)))
            .collect();
        let m = evaluate(&reports, &gt, &EvalConfig::default()).unwrap();
        assert_eq!(m.success_rate, 1.0);
        assert_eq!(m.rmse_x, 0.0);
        assert_eq!(m.rmse_alpha, 0.0);
    }

    #[test]
    fn offsets_beyond_threshold_fail_every_frame() {
        let gt: Vec<Pose> = (0..5).map(|_| Pose::identity()).collect();
        let reports: Vec<LocalizationReport> = gt
            .iter()
            .map(|p| {
                report(Outcome::Success(Pose::new(
                    p.rotation(),
                    p.translation() + Vector3::new(0.6, 0.0, 0.0),
                )))
            })
            .collect();
        let m = evaluate(&reports, &gt, &EvalConfig::default()).unwrap();
        assert_eq!(m.success_rate, 0.0);
        assert_eq!(m.failures_fine, 5);
        // Failures contribute nothing to the RMSE.
        assert_eq!(m.rmse_x, 0.0);
    }

    #[test]
    fn small_offset_is_reflected_exactly_in_rmse() {
        let gt: Vec<Pose> = (0..8).map(|_| Pose::identity()).collect();
        let reports: Vec<LocalizationReport> = gt
            .iter()
            .map(|p| {
                report(Outcome::Success(Pose::new(
                    p.rotation(),
                    p.translation() + Vector3::new(0.1, 0.0, 0.0),
                )))
            })
            .collect();
        let m = evaluate(&reports, &gt, &EvalConfig::default()).unwrap();
        assert_eq!(m.success_rate, 1.0);
        assert!((m.rmse_x - 0.1).abs() < 1e-12);
        assert_eq!(m.rmse_y, 0.0);
        assert_eq!(m.rmse_alpha, 0.0);
        assert_eq!(m.rmse_beta, 0.0);
        assert_eq!(m.rmse_gamma, 0.0);
    }

    #[test]
    fn mismatched_lengths_error() {
        let gt = vec![Pose::identity()];
        assert!(matches!(
            evaluate(&[], &gt, &EvalConfig::default()),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn every_frame_lands_in_exactly_one_category() {
        let gt: Vec<Pose> = (0..4).map(|_| Pose::identity()).collect();
        let reports = vec![
            report(Outcome::Success(Pose::identity())),
            report(Outcome::FailureCoarse),
            report(Outcome::FailureFine),
            report(Outcome::FailureInsufficientFeatures),
        ];
        let m = evaluate(&reports, &gt, &EvalConfig::default()).unwrap();
        assert_eq!(
            m.successes + m.failures_coarse + m.failures_fine + m.failures_insufficient,
            m.total
        );
    }

    #[test]
    fn rotation_errors_measured_per_axis() {
        // Rotate the estimate 5 degrees about Z: X and Y axes move 5
        // degrees, the Z axis is unchanged.
        let gt = vec![Pose::identity()];
        let est = Pose::new(
            UnitQuaternion::from_scaled_axis(Vector3::z() * 5.0_f64.to_radians()),
            Vector3::zeros(),
        );
        let m = evaluate(
            &[report(Outcome::Success(est))],
            &gt,
            &EvalConfig::default(),
        )
        .unwrap();
        assert!((m.rmse_alpha - 5.0).abs() < 1e-9);
        assert!((m.rmse_beta - 5.0).abs() < 1e-9);
        assert!(m.rmse_gamma.abs() < 1e-9);
    }
}
