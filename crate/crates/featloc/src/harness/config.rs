//! Flat `key = value` experiment configuration with `#` comments. Every key
//! has a default; unknown keys are rejected so typos fail loudly. CLI flags
//! override file values by injecting raw pairs before typed parsing.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::Point3;

use crate::estimation::PipelineParams;
use crate::feature_map::MapBuildParams;
use crate::geometry::Pose;
use crate::index::DescriptorSearch;
use crate::simworld::{SensorSpec, Volume, WorldSpec};
use crate::{Error, Result};

/// Raw parsed config: ordered key -> values (repeated keys accumulate, which
/// is how waypoint lists are written).
#[derive(Clone, Debug, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, Vec<String>>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "line {}: expected `key = value`, got `{line}`",
                    i + 1
                )));
            };
            entries
                .entry(key.trim().to_string())
                .or_default()
                .push(value.trim().to_string());
        }
        Ok(RawConfig { entries })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Inserts or replaces a single-valued key (CLI override).
    pub fn set(&mut self, key: &str, value: &str) {
        self.entries
            .insert(key.to_string(), vec![value.to_string()]);
    }

    fn take_single(&mut self, key: &str) -> Result<Option<String>> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some(mut v) if v.len() == 1 => Ok(Some(v.pop().unwrap())),
            Some(_) => Err(Error::Config(format!("key `{key}` given more than once"))),
        }
    }

    fn take_many(&mut self, key: &str) -> Vec<String> {
        self.entries.remove(key).unwrap_or_default()
    }

    fn finish(self) -> Result<()> {
        if let Some(key) = self.entries.keys().next() {
            return Err(Error::Config(format!("unknown config key `{key}`")));
        }
        Ok(())
    }
}

fn parse_as<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value `{value}` for key `{key}`")))
}

macro_rules! take {
    ($raw:expr, $key:expr, $target:expr) => {
        if let Some(v) = $raw.take_single($key)? {
            $target = parse_as($key, &v)?;
        }
    };
}

fn parse_pose(key: &str, value: &str) -> Result<Pose> {
    let nums: Vec<f64> = value
        .split_whitespace()
        .map(|t| parse_as::<f64>(key, t))
        .collect::<Result<_>>()?;
    if nums.len() != 7 {
        return Err(Error::Config(format!(
            "key `{key}` needs 7 numbers `tx ty tz qw qx qy qz`"
        )));
    }
    Ok(Pose::from_parts(
        [nums[0], nums[1], nums[2]],
        [nums[3], nums[4], nums[5], nums[6]],
    ))
}

/// Everything a full experiment run needs. Field groups map onto the
/// config-key prefixes (`world.*`, `sensor.*`, `map.*`, `coarse.*`,
/// `ransac.*`, `spatial.*`, `index.*`, `mapping.*`, `eval.*`, `run.*`,
/// `input.*`).
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub world: WorldSpec,
    pub sensor: SensorSpec,
    pub map_build: MapBuildParams,
    pub pipeline: PipelineParams,
    pub index: DescriptorSearch,
    /// Frames of the map-building sweep.
    pub mapping_frames: usize,
    pub mapping_seed: u64,
    /// Explicit mapping waypoints; empty means the built-in corridor sweep.
    pub mapping_waypoints: Vec<Pose>,
    /// Frames of the evaluation run.
    pub eval_frames: usize,
    pub eval_seed: u64,
    pub eval_waypoints: Vec<Pose>,
    /// Any-axis translational error beyond this is a failure, meters.
    pub failure_threshold: f64,
    /// RANSAC seed base; per-frame seeds derive from it.
    pub run_seed: u64,
    /// Worker threads for frame evaluation; 0 = library default.
    pub jobs: usize,
    /// Baseline k values compared against the pipeline.
    pub baseline_ks: Vec<usize>,
    /// Pre-built inputs; when set, generation is skipped.
    pub input_map: Option<PathBuf>,
    pub input_frames: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            world: WorldSpec {
                landmark_count: 50_000,
                ..WorldSpec::default()
            },
            sensor: SensorSpec::default(),
            map_build: MapBuildParams::default(),
            pipeline: PipelineParams::default(),
            index: DescriptorSearch::default(),
            mapping_frames: 480,
            mapping_seed: 101,
            mapping_waypoints: Vec::new(),
            eval_frames: 200,
            eval_seed: 202,
            eval_waypoints: Vec::new(),
            failure_threshold: 0.5,
            run_seed: 7,
            jobs: 0,
            baseline_ks: vec![1, 10, 20],
            input_map: None,
            input_frames: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_raw(mut raw: RawConfig) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();

        // world.*
        take!(raw, "world.landmarks", cfg.world.landmark_count);
        take!(raw, "world.prototypes", cfg.world.prototype_count);
        take!(raw, "world.repeat_fraction", cfg.world.repeat_fraction);
        take!(raw, "world.prototype_sigma", cfg.world.prototype_sigma);
        take!(raw, "world.distinct_fraction", cfg.world.distinct_fraction);
        take!(raw, "world.vocab_words", cfg.world.vocab_words);
        take!(raw, "world.vocab_jitter", cfg.world.vocab_jitter);
        take!(raw, "world.descriptor_dim", cfg.world.descriptor_dim);
        take!(raw, "world.seed", cfg.world.rng_seed);
        let mut min = cfg.world.volume.min;
        let mut max = cfg.world.volume.max;
        take!(raw, "world.min_x", min.x);
        take!(raw, "world.min_y", min.y);
        take!(raw, "world.min_z", min.z);
        take!(raw, "world.max_x", max.x);
        take!(raw, "world.max_y", max.y);
        take!(raw, "world.max_z", max.z);
        cfg.world.volume = Volume { min, max };

        // sensor.*
        take!(raw, "sensor.fov_h_deg", cfg.sensor.fov_h_deg);
        take!(raw, "sensor.fov_v_deg", cfg.sensor.fov_v_deg);
        take!(raw, "sensor.range_min", cfg.sensor.range.0);
        take!(raw, "sensor.range_max", cfg.sensor.range.1);
        take!(raw, "sensor.depth_noise_a", cfg.sensor.depth_noise_a);
        take!(raw, "sensor.descriptor_noise", cfg.sensor.descriptor_noise);
        take!(raw, "sensor.detection_prob", cfg.sensor.detection_prob);
        take!(raw, "sensor.max_features", cfg.sensor.max_features_per_frame);

        // map.*
        take!(raw, "map.assoc_radius", cfg.map_build.assoc_radius);
        take!(raw, "map.assoc_desc_gate", cfg.map_build.assoc_desc_gate);
        take!(raw, "map.default_match_std", cfg.map_build.default_match_std);

        // coarse.*
        take!(raw, "coarse.batch", cfg.pipeline.coarse.batch);
        take!(raw, "coarse.epsilon", cfg.pipeline.coarse.epsilon_c);
        take!(raw, "coarse.min_clique", cfg.pipeline.coarse.min_clique);
        take!(raw, "coarse.max_rms", cfg.pipeline.coarse.max_rms);

        // ransac.*
        take!(raw, "ransac.iterations", cfg.pipeline.ransac.iterations);
        take!(raw, "ransac.inlier_tol", cfg.pipeline.ransac.inlier_tol);
        take!(raw, "ransac.min_inliers", cfg.pipeline.ransac.min_inliers);

        // spatial.*
        take!(raw, "spatial.radius", cfg.pipeline.spatial.radius);
        take!(raw, "spatial.gate_scale", cfg.pipeline.spatial.gate_scale);
        take!(raw, "spatial.gate_floor", cfg.pipeline.spatial.gate_floor);

        // index.*
        let mut mode = match cfg.index {
            DescriptorSearch::Exact => "exact".to_string(),
            DescriptorSearch::Forest { .. } => "forest".to_string(),
        };
        let (mut trees, mut checks) = match cfg.index {
            DescriptorSearch::Forest { trees, checks } => (trees, checks),
            DescriptorSearch::Exact => (4, 64),
        };
        take!(raw, "index.mode", mode);
        take!(raw, "index.trees", trees);
        take!(raw, "index.checks", checks);
        cfg.index = match mode.as_str() {
            "exact" => DescriptorSearch::Exact,
            "forest" => DescriptorSearch::Forest { trees, checks },
            other => {
                return Err(Error::Config(format!(
                    "index.mode must be `exact` or `forest`, got `{other}`"
                )))
            }
        };

        // mapping.* / eval.*
        take!(raw, "mapping.frames", cfg.mapping_frames);
        take!(raw, "mapping.seed", cfg.mapping_seed);
        for (i, v) in raw.take_many("mapping.waypoint").iter().enumerate() {
            cfg.mapping_waypoints
                .push(parse_pose(&format!("mapping.waypoint[{i}]"), v)?);
        }
        take!(raw, "eval.frames", cfg.eval_frames);
        take!(raw, "eval.seed", cfg.eval_seed);
        take!(raw, "eval.failure_threshold", cfg.failure_threshold);
        for (i, v) in raw.take_many("eval.waypoint").iter().enumerate() {
            cfg.eval_waypoints
                .push(parse_pose(&format!("eval.waypoint[{i}]"), v)?);
        }

        // run.*
        take!(raw, "run.seed", cfg.run_seed);
        take!(raw, "run.jobs", cfg.jobs);
        if let Some(v) = raw.take_single("run.baselines")? {
            cfg.baseline_ks = v
                .split(',')
                .map(|t| parse_as::<usize>("run.baselines", t.trim()))
                .collect::<Result<_>>()?;
        }

        // input.*
        if let Some(v) = raw.take_single("input.map")? {
            cfg.input_map = Some(PathBuf::from(v));
        }
        if let Some(v) = raw.take_single("input.frames")? {
            cfg.input_frames = Some(PathBuf::from(v));
        }

        raw.finish()?;
        cfg.pipeline.ransac.rng_seed = cfg.run_seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_raw(RawConfig::from_file(path)?)
    }

    fn validate(&self) -> Result<()> {
        if self.failure_threshold <= 0.0 {
            return Err(Error::Config("eval.failure_threshold must be > 0".into()));
        }
        if self.pipeline.coarse.min_clique < 3 {
            return Err(Error::Config("coarse.min_clique must be >= 3".into()));
        }
        if self.pipeline.ransac.min_inliers < 3 {
            return Err(Error::Config("ransac.min_inliers must be >= 3".into()));
        }
        if self.pipeline.ransac.iterations == 0 {
            return Err(Error::Config("ransac.iterations must be >= 1".into()));
        }
        Ok(())
    }

    /// Waypoints of the map-building sweep: three corridor passes at varied
    /// heights and lateral offsets, turning in place between passes so the
    /// connecting segments sweep sideways views.
    pub fn mapping_trajectory(&self) -> crate::simworld::TrajectorySpec {
        let waypoints = if self.mapping_waypoints.is_empty() {
            let v = &self.world.volume;
            let (x0, x1) = (v.min.x + 1.0, v.max.x - 1.0);
            let y_in = |f: f64| v.min.y + f * (v.max.y - v.min.y);
            let z_in = |f: f64| v.min.z + f * (v.max.z - v.min.z);
            vec![
                look_along(Point3::new(x0, y_in(0.25), z_in(0.35)), 1.0),
                look_along(Point3::new(x1, y_in(0.25), z_in(0.35)), 1.0),
                look_along(Point3::new(x1, y_in(0.5), z_in(0.65)), -1.0),
                look_along(Point3::new(x0, y_in(0.5), z_in(0.65)), -1.0),
                look_along(Point3::new(x0, y_in(0.75), z_in(0.45)), 1.0),
                look_along(Point3::new(x1, y_in(0.75), z_in(0.45)), 1.0),
            ]
        } else {
            self.mapping_waypoints.clone()
        };
        crate::simworld::TrajectorySpec {
            waypoints,
            frame_count: self.mapping_frames,
        }
    }

    /// Waypoints of the evaluation run: one pass down the corridor with mild
    /// lateral weave, ending close to the far wall where the view runs out
    /// of world and frames become feature-poor.
    pub fn eval_trajectory(&self) -> crate::simworld::TrajectorySpec {
        let waypoints = if self.eval_waypoints.is_empty() {
            let v = &self.world.volume;
            let span = v.max.x - v.min.x;
            let xf = |f: f64| v.min.x + f * span;
            let yc = 0.5 * (v.min.y + v.max.y);
            let zc = 0.5 * (v.min.z + v.max.z);
            let w = 0.15 * (v.max.y - v.min.y);
            vec![
                look_along(Point3::new(xf(0.05), yc + w, zc), 1.0),
                look_along(Point3::new(xf(0.20), yc - w, zc - 0.1), 1.0),
                look_along(Point3::new(xf(0.37), yc + w, zc + 0.1), 1.0),
                look_along(Point3::new(xf(0.53), yc - w, zc), 1.0),
                look_along(Point3::new(xf(0.70), yc + w, zc), 1.0),
                look_along(Point3::new(xf(0.85), yc, zc), 1.0),
                look_along(Point3::new(xf(0.953), yc, zc), 1.0),
                look_along(Point3::new(xf(0.981), yc, zc), 1.0),
            ]
        } else {
            self.eval_waypoints.clone()
        };
        crate::simworld::TrajectorySpec {
            waypoints,
            frame_count: self.eval_frames,
        }
    }
}

/// Camera pose at `position` looking along ±X with world +Z up: camera +Z
/// maps to the view direction, camera +Y to world −Z.
pub fn look_along(position: Point3<f64>, direction_x: f64) -> Pose {
    use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
    let f = Vector3::new(direction_x.signum(), 0.0, 0.0);
    let up = Vector3::z();
    let x_c = f.cross(&up).normalize();
    let y_c = f.cross(&x_c);
    let m = Matrix3::from_columns(&[x_c, y_c, f]);
    Pose::new(
        UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(m)),
        position.coords,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_defaults_and_overrides() {
        let raw = RawConfig::parse(
            "# comment\nworld.landmarks = 1234\ncoarse.batch = 16\nindex.mode = exact\n",
        )
        .unwrap();
        let cfg = ExperimentConfig::from_raw(raw).unwrap();
        assert_eq!(cfg.world.landmark_count, 1234);
        assert_eq!(cfg.pipeline.coarse.batch, 16);
        assert_eq!(cfg.index, DescriptorSearch::Exact);
        // Untouched keys keep defaults.
        assert_eq!(cfg.eval_frames, 200);
    }

    #[test]
    fn rejects_unknown_keys() {
        let raw = RawConfig::parse("world.landmark = 10\n").unwrap();
        assert!(matches!(
            ExperimentConfig::from_raw(raw),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(RawConfig::parse("just words\n").is_err());
    }

    #[test]
    fn cli_override_wins() {
        let mut raw = RawConfig::parse("eval.frames = 50\n").unwrap();
        raw.set("eval.frames", "75");
        let cfg = ExperimentConfig::from_raw(raw).unwrap();
        assert_eq!(cfg.eval_frames, 75);
    }

    #[test]
    fn waypoints_accumulate() {
        let raw = RawConfig::parse(
            "eval.waypoint = 0 0 0 1 0 0 0\neval.waypoint = 1 0 0 1 0 0 0\n",
        )
        .unwrap();
        let cfg = ExperimentConfig::from_raw(raw).unwrap();
        assert_eq!(cfg.eval_waypoints.len(), 2);
    }

    #[test]
    fn look_along_faces_the_right_way() {
        let pose = look_along(Point3::new(1.0, 2.0, 3.0), 1.0);
        let fwd = pose.rotation() * nalgebra::Vector3::z();
        assert!((fwd - nalgebra::Vector3::x()).norm() < 1e-12);
        let pose = look_along(Point3::new(1.0, 2.0, 3.0), -1.0);
        let fwd = pose.rotation() * nalgebra::Vector3::z();
        assert!((fwd + nalgebra::Vector3::x()).norm() < 1e-12);
    }
}
