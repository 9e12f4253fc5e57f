//! Command-line interface. One thin binary with subcommands over the
//! library: `genworld`, `simulate`, `build-map`, `localize`, `evaluate`,
//! `bench`. Exit codes: 0 success, 2 config error, 3 I/O error.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use super::config::{ExperimentConfig, RawConfig};
use super::{evaluate, run_experiment, simulate_frames, EvalConfig, SimulateProfile};
use crate::estimation::{Counts, LocalizationReport, Outcome, StageTimings};
use crate::feature_map::{
    build_map, load_frames, load_map, save_frames, save_map,
};
use crate::geometry::Pose;
use crate::index::{DescriptorIndex, SpatialIndex};
use crate::simworld::{generate_world, save_sidecar, world_to_map};
use crate::{Error, Result};

#[derive(Parser)]
#[command(
    name = "featloc",
    about = "Global 6-DoF localization in sparse visual-feature maps: simulator, mapper, localizer, benchmark"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config file (`key = value` lines, `#` comments).
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set eval.frames=50`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut raw = match &self.config {
            Some(path) => RawConfig::from_file(path)?,
            None => RawConfig::default(),
        };
        for pair in &self.sets {
            let Some((k, v)) = pair.split_once('=') else {
                return Err(Error::Config(format!(
                    "--set expects KEY=VALUE, got `{pair}`"
                )));
            };
            raw.set(k.trim(), v.trim());
        }
        ExperimentConfig::from_raw(raw)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic world and store its landmarks as an FMAP file.
    Genworld {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output map file.
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Render observation frames along the configured trajectory.
    Simulate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Which trajectory to render.
        #[arg(long, value_parser = ["mapping", "eval"], default_value = "eval")]
        profile: String,
        /// Output frames file; the generative-id sidecar lands next to it
        /// as `<out>.gen`.
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Build a feature map from posed observation frames.
    BuildMap {
        #[command(flatten)]
        config: ConfigArgs,
        /// Input frames file (every frame needs a POSE).
        #[arg(long)]
        frames: PathBuf,
        /// Output map file.
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Localize every frame of a file against a map.
    Localize {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        frames: PathBuf,
        /// Per-frame report CSV.
        #[arg(short, long)]
        out: PathBuf,
        /// Also write successful poses as `frame tx ty tz qw qx qy qz`.
        #[arg(long)]
        trajectory: Option<PathBuf>,
        /// Run the k-NN baseline instead of the two-stage pipeline.
        #[arg(long)]
        baseline: Option<usize>,
    },
    /// Score a localization report against the frames' ground truth.
    Evaluate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Report CSV produced by `localize`.
        #[arg(long)]
        report: PathBuf,
        /// Frames file carrying the ground-truth poses.
        #[arg(long)]
        frames: PathBuf,
        /// Optional metrics CSV output.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run the full proposed-vs-baselines benchmark and emit the bundle.
    Bench {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory for the CSV tables and SVG plots.
        #[arg(short, long)]
        out: PathBuf,
        /// Worker threads (overrides `run.jobs`).
        #[arg(long)]
        jobs: Option<usize>,
    },
}

/// Parses `args` and runs; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are not errors.
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::InvalidSpec(_) => 2,
                Error::Io(_) | Error::Format { .. } => 3,
                _ => 1,
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Genworld { config, out } => {
            let cfg = config.load()?;
            let world = generate_world(&cfg.world)?;
            save_map(&world_to_map(&world), &out)?;
            println!("wrote {} landmarks to {}", world.landmarks.len(), out.display());
            Ok(())
        }
        Command::Simulate {
            config,
            profile,
            out,
        } => {
            let cfg = config.load()?;
            let profile = match profile.as_str() {
                "mapping" => SimulateProfile::Mapping,
                _ => SimulateProfile::Eval,
            };
            let rendered = simulate_frames(&cfg, profile)?;
            let frames: Vec<_> = rendered.iter().map(|rf| rf.frame.clone()).collect();
            save_frames(&frames, cfg.world.descriptor_dim, &out)?;
            let sidecar = sidecar_path(&out);
            save_sidecar(&rendered, &sidecar)?;
            println!(
                "wrote {} frames to {} (sidecar {})",
                frames.len(),
                out.display(),
                sidecar.display()
            );
            Ok(())
        }
        Command::BuildMap { config, frames, out } => {
            let cfg = config.load()?;
            let input = load_frames(&frames)?;
            let map = build_map(&input, &cfg.map_build)?;
            save_map(&map, &out)?;
            println!(
                "built map with {} features from {} frames",
                map.len(),
                input.len()
            );
            Ok(())
        }
        Command::Localize {
            config,
            map,
            frames,
            out,
            trajectory,
            baseline,
        } => {
            let cfg = config.load()?;
            let map = load_map(&map)?;
            let frames = load_frames(&frames)?;
            let desc_index = DescriptorIndex::build(&map, cfg.index);
            let spatial_index = SpatialIndex::build(&map);
            let approach = match baseline {
                Some(k) => super::Approach::Baseline(k),
                None => super::Approach::Proposed,
            };
            let reports = super::run_approach(
                approach,
                &frames,
                &map,
                &desc_index,
                &spatial_index,
                &cfg.pipeline,
            );
            write_report_csv(&reports, &out)?;
            if let Some(traj) = trajectory {
                write_trajectory_file(&reports, &traj)?;
            }
            let ok = reports.iter().filter(|r| r.outcome.is_success()).count();
            println!("localized {}/{} frames", ok, reports.len());
            Ok(())
        }
        Command::Evaluate {
            config,
            report,
            frames,
            out,
        } => {
            let cfg = config.load()?;
            let reports = read_report_csv(&report)?;
            let frames = load_frames(&frames)?;
            let ground_truth: Vec<Pose> = frames
                .iter()
                .map(|f| {
                    f.ground_truth.ok_or(Error::MissingGroundTruth {
                        frame_index: f.frame_index,
                    })
                })
                .collect::<Result<_>>()?;
            let metrics = evaluate(
                &reports,
                &ground_truth,
                &EvalConfig {
                    failure_threshold: cfg.failure_threshold,
                },
            )?;
            println!("frames          {}", metrics.total);
            println!("success_rate    {:.4}", metrics.success_rate);
            println!(
                "failures        coarse={} fine={} insufficient={}",
                metrics.failures_coarse, metrics.failures_fine, metrics.failures_insufficient
            );
            println!(
                "rmse_t (m)      x={:.4} y={:.4} z={:.4}",
                metrics.rmse_x, metrics.rmse_y, metrics.rmse_z
            );
            println!(
                "rmse_r (deg)    alpha={:.3} beta={:.3} gamma={:.3}",
                metrics.rmse_alpha, metrics.rmse_beta, metrics.rmse_gamma
            );
            if let Some(path) = out {
                let mut s = String::from(
                    "total,success,failure_coarse,failure_fine,failure_insufficient,success_rate,rmse_x_m,rmse_y_m,rmse_z_m,rmse_alpha_deg,rmse_beta_deg,rmse_gamma_deg\n",
                );
                writeln!(
                    s,
                    "{},{},{},{},{},{},{},{},{},{},{},{}",
                    metrics.total,
                    metrics.successes,
                    metrics.failures_coarse,
                    metrics.failures_fine,
                    metrics.failures_insufficient,
                    metrics.success_rate,
                    metrics.rmse_x,
                    metrics.rmse_y,
                    metrics.rmse_z,
                    metrics.rmse_alpha,
                    metrics.rmse_beta,
                    metrics.rmse_gamma
                )
                .expect("write to string");
                std::fs::write(path, s)?;
            }
            Ok(())
        }
        Command::Bench { config, out, jobs } => {
            let mut cfg = config.load()?;
            if let Some(jobs) = jobs {
                cfg.jobs = jobs;
            }
            let result = run_experiment(&cfg, &out)?;
            println!("map features: {}", result.map_size);
            for (approach, metrics) in result.approaches.iter().zip(&result.metrics) {
                println!(
                    "{:<12} success_rate={:.3} mean_total={:.5}s mean_M={:.1} mean_N={:.1} t64D={:.2}us t3D={:.2}us",
                    approach.label(),
                    metrics.success_rate,
                    metrics.mean_total,
                    metrics.mean_m,
                    metrics.mean_n,
                    metrics.timing.t_descriptor() * 1e6,
                    metrics.timing.t_spatial() * 1e6,
                );
            }
            println!("bundle written to {}", out.display());
            Ok(())
        }
    }
}

fn sidecar_path(frames_path: &Path) -> PathBuf {
    let mut name = frames_path
        .file_stem()
        .map(|s| s.to_os_string())
        .unwrap_or_default();
    name.push(".gen");
    frames_path.with_file_name(name)
}

fn outcome_label(outcome: &Outcome) -> &'static str {
    match outcome {
        Outcome::Success(_) => "success",
        Outcome::FailureCoarse => "failure_coarse",
        Outcome::FailureFine => "failure_fine",
        Outcome::FailureInsufficientFeatures => "failure_insufficient",
    }
}

/// Per-frame report CSV:
/// `frame,outcome,tx,ty,tz,qw,qx,qy,qz,nn64,coarse,nn3d,ransac,total,n,m,clique,spatial,inliers`
/// with empty pose columns on failure.
pub fn write_report_csv(reports: &[LocalizationReport], path: &Path) -> Result<()> {
    let mut s = String::from(
        "frame,outcome,tx,ty,tz,qw,qx,qy,qz,nn64,coarse,nn3d,ransac,total,n,m,clique,spatial,inliers\n",
    );
    for r in reports {
        let pose_cols = match r.outcome.pose() {
            Some(p) => {
                let (t, q) = p.to_parts();
                format!(
                    "{},{},{},{},{},{},{}",
                    t[0], t[1], t[2], q[0], q[1], q[2], q[3]
                )
            }
            None => ",,,,,,".to_string(),
        };
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.frame_index,
            outcome_label(&r.outcome),
            pose_cols,
            r.timings.nn64,
            r.timings.coarse,
            r.timings.nn3d,
            r.timings.ransac,
            r.timings.total,
            r.counts.n_features,
            r.counts.m_queries,
            r.counts.clique_size,
            r.counts.spatial_matches,
            r.counts.inliers
        )
        .expect("write to string");
    }
    std::fs::write(path, s)?;
    Ok(())
}

pub fn read_report_csv(path: &Path) -> Result<Vec<LocalizationReport>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 19 {
            return Err(Error::Format {
                line: line_no,
                message: format!("expected 19 columns, found {}", cols.len()),
            });
        }
        let bad = |what: &str| Error::Format {
            line: line_no,
            message: format!("bad {what}"),
        };
        let frame_index: u64 = cols[0].parse().map_err(|_| bad("frame index"))?;
        let outcome = match cols[1] {
            "success" => {
                let nums: Vec<f64> = cols[2..9]
                    .iter()
                    .map(|t| t.parse().map_err(|_| bad("pose component")))
                    .collect::<Result<_>>()?;
                Outcome::Success(Pose::from_parts(
                    [nums[0], nums[1], nums[2]],
                    [nums[3], nums[4], nums[5], nums[6]],
                ))
            }
            "failure_coarse" => Outcome::FailureCoarse,
            "failure_fine" => Outcome::FailureFine,
            "failure_insufficient" => Outcome::FailureInsufficientFeatures,
            other => {
                return Err(Error::Format {
                    line: line_no,
                    message: format!("unknown outcome `{other}`"),
                })
            }
        };
        let f = |idx: usize, what: &str| -> Result<f64> {
            cols[idx].parse().map_err(|_| bad(what))
        };
        let u = |idx: usize, what: &str| -> Result<usize> {
            cols[idx].parse().map_err(|_| bad(what))
        };
        out.push(LocalizationReport {
            frame_index,
            outcome,
            timings: StageTimings {
                nn64: f(9, "nn64")?,
                coarse: f(10, "coarse")?,
                nn3d: f(11, "nn3d")?,
                ransac: f(12, "ransac")?,
                total: f(13, "total")?,
            },
            counts: Counts {
                n_features: u(14, "n")?,
                m_queries: u(15, "m")?,
                clique_size: u(16, "clique")?,
                spatial_matches: u(17, "spatial")?,
                inliers: u(18, "inliers")?,
            },
        });
    }
    Ok(out)
}

/// Successful poses only: `frame tx ty tz qw qx qy qz` per line.
pub fn write_trajectory_file(reports: &[LocalizationReport], path: &Path) -> Result<()> {
    let mut s = String::new();
    for r in reports {
        if let Some(p) = r.outcome.pose() {
            let (t, q) = p.to_parts();
            writeln!(
                s,
                "{} {} {} {} {} {} {} {}",
                r.frame_index, t[0], t[1], t[2], q[0], q[1], q[2], q[3]
            )
            .expect("write to string");
        }
    }
    std::fs::write(path, s)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    #[test]
    fn report_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.csv");
        let reports = vec![
            LocalizationReport {
                frame_index: 0,
                outcome: Outcome::Success(Pose::new(
                    nalgebra::UnitQuaternion::from_scaled_axis(Vector3::z() * 0.2),
                    Vector3::new(1.0, 2.0, 3.0),
                )),
                timings: StageTimings {
                    nn64: 0.001,
                    coarse: 0.0005,
                    nn3d: 0.002,
                    ransac: 0.0015,
                    total: 0.0051,
                },
                counts: Counts {
                    n_features: 100,
                    m_queries: 16,
                    clique_size: 7,
                    spatial_matches: 80,
                    inliers: 60,
                },
            },
            LocalizationReport {
                frame_index: 1,
                outcome: Outcome::FailureCoarse,
                timings: StageTimings::default(),
                counts: Counts::default(),
            },
        ];
        write_report_csv(&reports, &path).unwrap();
        let back = read_report_csv(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].counts.inliers, 60);
        assert!(back[0].outcome.is_success());
        assert_eq!(back[1].outcome, Outcome::FailureCoarse);
        let a = reports[0].outcome.pose().unwrap();
        let b = back[0].outcome.pose().unwrap();
        assert!(a.translation_distance_to(b) < 1e-15);
    }

    #[test]
    fn sidecar_path_appends_gen() {
        assert_eq!(
            sidecar_path(Path::new("/tmp/run/eval.frames")),
            PathBuf::from("/tmp/run/eval.gen")
        );
    }

    #[test]
    fn bad_subcommand_exits_2() {
        assert_eq!(run(["featloc", "no-such-command"]), 2);
    }
}
