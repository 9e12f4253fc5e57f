//! Synthetic world and sensor: landmark maps with controlled perceptual
//! aliasing (repeated structure), noisy observation frames rendered along a
//! trajectory, and ground truth for every frame.
//!
//! Descriptors are unit-norm vectors drawn from a mixture that mirrors how
//! real local descriptors distribute: a fraction of landmarks are
//! *distinctive* (uniform on the sphere, reliably matchable), the rest share
//! a finite vocabulary of visually similar "words" (tight clusters that
//! confuse pure descriptor-space matching). On top of that, `repeat_fraction`
//! of landmarks are strict prototype clones, the repeated-object failure
//! mode. Spatial placement is independent of descriptor identity, which is
//! exactly what makes descriptor-only matching hazardous and spatial
//! verification effective.

use nalgebra::{Point3, Vector3};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::feature_map::{Descriptor, FeatureMap, MapFeature, ObservationFrame, ObservedFeature};
use crate::geometry::Pose;
use crate::{Error, Result};

/// Axis-aligned world volume, meters.
#[derive(Clone, Copy, Debug)]
pub struct Volume {
    pub min: Point3<f64>,
    pub max: Point3<f64>,
}

impl Volume {
    /// The default corridor: 30 m along X, 4 m wide, 3 m tall.
    pub fn corridor() -> Self {
        Volume {
            min: Point3::new(0.0, -2.0, 0.0),
            max: Point3::new(30.0, 2.0, 3.0),
        }
    }

    pub fn extent(&self) -> Vector3<f64> {
        self.max - self.min
    }

    pub fn contains(&self, p: &Point3<f64>) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }
}

/// World generation spec.
#[derive(Clone, Debug)]
pub struct WorldSpec {
    pub volume: Volume,
    pub landmark_count: usize,
    /// Size of the prototype pool for strict clones.
    pub prototype_count: usize,
    /// Fraction of landmarks whose descriptors are prototype clones.
    pub repeat_fraction: f64,
    /// Per-component perturbation of a clone around its prototype.
    pub prototype_sigma: f64,
    /// Fraction of the non-cloned landmarks that are distinctive (uniform on
    /// the sphere); the rest draw from the vocabulary.
    pub distinct_fraction: f64,
    /// Number of vocabulary words shared by the non-distinctive landmarks.
    pub vocab_words: usize,
    /// Per-component jitter of a landmark descriptor around its word.
    pub vocab_jitter: f64,
    pub descriptor_dim: usize,
    pub rng_seed: u64,
}

impl Default for WorldSpec {
    fn default() -> Self {
        WorldSpec {
            volume: Volume::corridor(),
            landmark_count: 10_000,
            prototype_count: 20,
            repeat_fraction: 0.3,
            prototype_sigma: 0.002,
            distinct_fraction: 0.15,
            vocab_words: 500,
            vocab_jitter: 0.0025,
            descriptor_dim: 64,
            rng_seed: 1,
        }
    }
}

/// One ground-truth landmark.
#[derive(Clone, Debug)]
pub struct Landmark {
    pub position: Point3<f64>,
    pub descriptor: Descriptor,
    /// Prototype index for cloned landmarks, `None` otherwise.
    pub prototype: Option<u32>,
}

/// The generated world: landmark list plus the spec that produced it.
#[derive(Clone, Debug)]
pub struct World {
    pub landmarks: Vec<Landmark>,
    pub descriptor_dim: usize,
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn perturb_unit(rng: &mut ChaCha8Rng, base: &[f64], sigma: f64) -> Vec<f64> {
    let v: Vec<f64> = base
        .iter()
        .map(|b| b + sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm <= 1e-9 {
        return base.to_vec();
    }
    v.into_iter().map(|x| x / norm).collect()
}

/// Generates the ground-truth landmark list: positions uniform in the
/// volume, descriptors unit-normalized after perturbation; deterministic
/// under the spec's seed.
pub fn generate_world(spec: &WorldSpec) -> Result<World> {
    if spec.landmark_count == 0 {
        return Err(Error::InvalidSpec("landmark_count must be positive".into()));
    }
    if spec.descriptor_dim == 0 {
        return Err(Error::InvalidSpec("descriptor_dim must be positive".into()));
    }
    if !(0.0..=1.0).contains(&spec.repeat_fraction) {
        return Err(Error::InvalidSpec("repeat_fraction must be in [0,1]".into()));
    }
    if !(0.0..=1.0).contains(&spec.distinct_fraction) {
        return Err(Error::InvalidSpec(
            "distinct_fraction must be in [0,1]".into(),
        ));
    }
    if spec.repeat_fraction > 0.0 && spec.prototype_count == 0 {
        return Err(Error::InvalidSpec(
            "prototype_count must be positive when repeat_fraction > 0".into(),
        ));
    }
    let ext = spec.volume.extent();
    if ext.x <= 0.0 || ext.y <= 0.0 || ext.z <= 0.0 {
        return Err(Error::InvalidSpec("volume must have positive extent".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let dim = spec.descriptor_dim;

    let prototypes: Vec<Vec<f64>> = (0..spec.prototype_count)
        .map(|_| random_unit(&mut rng, dim))
        .collect();
    let words: Vec<Vec<f64>> = (0..spec.vocab_words.max(1))
        .map(|_| random_unit(&mut rng, dim))
        .collect();

    let n_cloned = (spec.repeat_fraction * spec.landmark_count as f64).round() as usize;
    let mut landmarks = Vec::with_capacity(spec.landmark_count);
    for i in 0..spec.landmark_count {
        let position = Point3::new(
            rng.gen_range(spec.volume.min.x..=spec.volume.max.x),
            rng.gen_range(spec.volume.min.y..=spec.volume.max.y),
            rng.gen_range(spec.volume.min.z..=spec.volume.max.z),
        );
        let (values, prototype) = if i < n_cloned {
            let p = rng.gen_range(0..prototypes.len());
            (
                perturb_unit(&mut rng, &prototypes[p], spec.prototype_sigma),
                Some(p as u32),
            )
        } else if rng.gen::<f64>() < spec.distinct_fraction {
            (random_unit(&mut rng, dim), None)
        } else {
            let w = rng.gen_range(0..words.len());
            (perturb_unit(&mut rng, &words[w], spec.vocab_jitter), None)
        };
        landmarks.push(Landmark {
            position,
            descriptor: Descriptor::new(values)?,
            prototype,
        });
    }
    Ok(World {
        landmarks,
        descriptor_dim: dim,
    })
}

/// Converts the ground-truth world into a [`FeatureMap`] directly (ids =
/// landmark indices, `match_std` 0, one observation each). Used to persist
/// worlds in the FMAP format; localization maps normally come from
/// [`crate::feature_map::build_map`] over mapping frames instead.
pub fn world_to_map(world: &World) -> FeatureMap {
    FeatureMap {
        features: world
            .landmarks
            .iter()
            .enumerate()
            .map(|(i, l)| MapFeature {
                id: i as u64,
                position: l.position,
                descriptor: l.descriptor.clone(),
                match_std: 0.0,
                n_obs: 1,
            })
            .collect(),
        descriptor_dim: world.descriptor_dim,
        frame_id: "map".into(),
    }
}

/// Depth-camera model.
#[derive(Clone, Copy, Debug)]
pub struct SensorSpec {
    pub fov_h_deg: f64,
    pub fov_v_deg: f64,
    /// Min and max observable depth (camera +Z), meters.
    pub range: (f64, f64),
    /// Depth noise law σ_z(z) = a·z², meters.
    pub depth_noise_a: f64,
    /// Per-component descriptor noise; renormalized after adding.
    pub descriptor_noise: f64,
    /// Independent detection probability per visible landmark.
    pub detection_prob: f64,
    pub max_features_per_frame: usize,
}

impl Default for SensorSpec {
    fn default() -> Self {
        SensorSpec {
            fov_h_deg: 57.0,
            fov_v_deg: 43.0,
            range: (0.5, 5.0),
            depth_noise_a: 0.002,
            descriptor_noise: 0.01,
            detection_prob: 0.9,
            max_features_per_frame: 250,
        }
    }
}

impl SensorSpec {
    /// Pure geometric visibility: inside the frustum and the depth range.
    /// The camera looks along +Z with +X right and +Y down-range width.
    pub fn visible(&self, p_cam: &Point3<f64>) -> bool {
        let z = p_cam.z;
        if z < self.range.0 || z > self.range.1 {
            return false;
        }
        let tan_h = (self.fov_h_deg.to_radians() / 2.0).tan();
        let tan_v = (self.fov_v_deg.to_radians() / 2.0).tan();
        p_cam.x.abs() <= z * tan_h && p_cam.y.abs() <= z * tan_v
    }
}

/// A rendered frame plus the generative landmark id per observed feature.
/// The ids are oracle data for tests and never flow into localization.
#[derive(Clone, Debug)]
pub struct RenderedFrame {
    pub frame: ObservationFrame,
    pub landmark_ids: Vec<u64>,
}

/// Renders one observation frame from a camera pose.
///
/// Visible landmarks are transformed to the camera frame; depth noise is
/// applied along the viewing ray with σ_z = a·z²; descriptor noise is added
/// per component, then the descriptor is renormalized. Detection strength is
/// uniform in (0, 1]. When more than `max_features_per_frame` landmarks are
/// detected the strongest are kept.
pub fn render_frame(
    world: &World,
    sensor: &SensorSpec,
    pose: &Pose,
    frame_index: u64,
    seed: u64,
) -> RenderedFrame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inv = pose.inverse();
    let mut detected: Vec<(f64, ObservedFeature, u64)> = Vec::new();
    for (id, landmark) in world.landmarks.iter().enumerate() {
        let p_cam = crate::geometry::transform_point(&inv, &landmark.position);
        if !sensor.visible(&p_cam) {
            continue;
        }
        if rng.gen::<f64>() >= sensor.detection_prob {
            continue;
        }
        let z = p_cam.z;
        let sigma_z = sensor.depth_noise_a * z * z;
        let delta: f64 = sigma_z * rng.sample::<f64, _>(StandardNormal);
        // Scale along the ray so the depth component picks up exactly σ_z.
        let scale = (z + delta) / z;
        let noisy_pos = Point3::from(p_cam.coords * scale);

        let noisy_desc = perturb_unit(&mut rng, landmark.descriptor.values(), sensor.descriptor_noise);
        let strength = 1.0 - rng.gen::<f64>(); // uniform in (0, 1]
        detected.push((
            strength,
            ObservedFeature {
                position: noisy_pos,
                descriptor: Descriptor::new(noisy_desc).expect("finite descriptor"),
                strength,
            },
            id as u64,
        ));
    }

    if detected.len() > sensor.max_features_per_frame {
        detected.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
        detected.truncate(sensor.max_features_per_frame);
    }

    let mut features = Vec::with_capacity(detected.len());
    let mut landmark_ids = Vec::with_capacity(detected.len());
    for (_, feat, id) in detected {
        features.push(feat);
        landmark_ids.push(id);
    }
    RenderedFrame {
        frame: ObservationFrame {
            features,
            ground_truth: Some(*pose),
            frame_index,
        },
        landmark_ids,
    }
}

/// Camera trajectory: linear interpolation of waypoint translations and
/// spherical interpolation of their rotations.
#[derive(Clone, Debug)]
pub struct TrajectorySpec {
    pub waypoints: Vec<Pose>,
    pub frame_count: usize,
}

impl TrajectorySpec {
    pub fn sample(&self, index: usize) -> Pose {
        assert!(!self.waypoints.is_empty(), "trajectory needs waypoints");
        if self.waypoints.len() == 1 || self.frame_count <= 1 {
            return self.waypoints[0];
        }
        let t = index as f64 / (self.frame_count - 1) as f64;
        let segments = self.waypoints.len() - 1;
        let scaled = t * segments as f64;
        let seg = (scaled.floor() as usize).min(segments - 1);
        let local = scaled - seg as f64;
        let a = &self.waypoints[seg];
        let b = &self.waypoints[seg + 1];
        let rotation = a.rotation().slerp(&b.rotation(), local);
        let translation = a.translation().lerp(&b.translation(), local);
        Pose::new(rotation, translation)
    }

    pub fn poses(&self) -> Vec<Pose> {
        (0..self.frame_count).map(|i| self.sample(i)).collect()
    }
}

/// Renders a full trajectory; each frame derives its own seed from the base
/// seed and frame index so frames can be regenerated independently.
pub fn render_trajectory(
    world: &World,
    sensor: &SensorSpec,
    trajectory: &TrajectorySpec,
    base_seed: u64,
) -> Vec<RenderedFrame> {
    trajectory
        .poses()
        .iter()
        .enumerate()
        .map(|(i, pose)| {
            render_frame(
                world,
                sensor,
                pose,
                i as u64,
                crate::estimation::frame_seed(base_seed, i as u64),
            )
        })
        .collect()
}

/// Writes the generative-id sidecar: `frame_index obs_index landmark_id`
/// per line.
pub fn save_sidecar(frames: &[RenderedFrame], path: &std::path::Path) -> Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for rf in frames {
        for (obs_index, id) in rf.landmark_ids.iter().enumerate() {
            writeln!(w, "{} {} {}", rf.frame.frame_index, obs_index, id)?;
        }
    }
    Ok(())
}

/// Reads a generative-id sidecar back as (frame_index, obs_index, landmark_id).
pub fn load_sidecar(path: &std::path::Path) -> Result<Vec<(u64, usize, u64)>> {
    use std::io::BufRead;
    let reader = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(Error::Format {
                line: i + 1,
                message: "expected `frame obs landmark`".into(),
            });
        }
        out.push((
            toks[0].parse().map_err(|_| Error::Format {
                line: i + 1,
                message: "bad frame index".into(),
            })?,
            toks[1].parse().map_err(|_| Error::Format {
                line: i + 1,
                message: "bad obs index".into(),
            })?,
            toks[2].parse().map_err(|_| Error::Format {
                line: i + 1,
                message: "bad landmark id".into(),
            })?,
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::UnitQuaternion;

    fn small_spec() -> WorldSpec {
        WorldSpec {
            landmark_count: 2000,
            rng_seed: 7,
            ..WorldSpec::default()
        }
    }

    #[test]
    fn world_is_deterministic_under_seed() {
        let spec = small_spec();
        let a = generate_world(&spec).unwrap();
        let b = generate_world(&spec).unwrap();
        assert_eq!(a.landmarks.len(), b.landmarks.len());
        for (x, y) in a.landmarks.iter().zip(&b.landmarks) {
            assert_eq!(x.position, y.position);
            assert_eq!(x.descriptor.values(), y.descriptor.values());
        }
    }

    #[test]
    fn zero_repeat_fraction_gives_distinct_descriptors() {
        let spec = WorldSpec {
            repeat_fraction: 0.0,
            landmark_count: 300,
            ..small_spec()
        };
        let world = generate_world(&spec).unwrap();
        assert!(world.landmarks.iter().all(|l| l.prototype.is_none()));
        let mut min_dist = f64::INFINITY;
        for i in 0..world.landmarks.len() {
            for j in (i + 1)..world.landmarks.len() {
                let d = world.landmarks[i]
                    .descriptor
                    .distance(&world.landmarks[j].descriptor);
                min_dist = min_dist.min(d);
            }
        }
        assert!(min_dist > 0.0, "descriptors must be pairwise distinct");
    }

    #[test]
    fn full_cloning_with_one_prototype_and_no_noise_is_degenerate() {
        let spec = WorldSpec {
            repeat_fraction: 1.0,
            prototype_count: 1,
            prototype_sigma: 0.0,
            landmark_count: 50,
            ..small_spec()
        };
        let world = generate_world(&spec).unwrap();
        let first = world.landmarks[0].descriptor.values().to_vec();
        for l in &world.landmarks {
            assert_eq!(l.descriptor.values(), &first[..]);
            assert_eq!(l.prototype, Some(0));
        }
    }

    #[test]
    fn repeat_fraction_is_exact_and_spread_bounded() {
        let spec = WorldSpec {
            repeat_fraction: 0.3,
            landmark_count: 10_000,
            prototype_count: 20,
            prototype_sigma: 0.002,
            ..small_spec()
        };
        let world = generate_world(&spec).unwrap();
        let cloned = world.landmarks.iter().filter(|l| l.prototype.is_some()).count();
        assert_eq!(cloned, 3000);

        // Within-prototype spread: descriptors of one prototype stay within
        // a bound derived from the perturbation scale. Per-component noise
        // sigma over D dims gives pairwise distance ~ sigma*sqrt(2D); allow
        // a 3x margin for renormalization and tail effects.
        let bound = 3.0 * spec.prototype_sigma * (2.0 * spec.descriptor_dim as f64).sqrt();
        let mut by_proto: std::collections::HashMap<u32, Vec<usize>> = Default::default();
        for (i, l) in world.landmarks.iter().enumerate() {
            if let Some(p) = l.prototype {
                by_proto.entry(p).or_default().push(i);
            }
        }
        for members in by_proto.values() {
            for (a, &i) in members.iter().enumerate().take(20) {
                for &j in members[a + 1..].iter().take(20) {
                    let d = world.landmarks[i]
                        .descriptor
                        .distance(&world.landmarks[j].descriptor);
                    assert!(d <= bound, "clone spread {d} exceeds bound {bound}");
                }
            }
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut s = small_spec();
        s.landmark_count = 0;
        assert!(generate_world(&s).is_err());
        let mut s = small_spec();
        s.repeat_fraction = 1.5;
        assert!(generate_world(&s).is_err());
        let mut s = small_spec();
        s.prototype_count = 0;
        assert!(generate_world(&s).is_err());
    }

    #[test]
    fn pose_looking_away_sees_nothing() {
        let world = generate_world(&small_spec()).unwrap();
        // Behind the corridor start, looking in -X direction (camera +Z
        // toward -X): rotate +Z onto -X.
        let pose = Pose::new(
            UnitQuaternion::from_scaled_axis(Vector3::y() * -std::f64::consts::FRAC_PI_2),
            Vector3::new(-1.0, 0.0, 1.5),
        );
        let rendered = render_frame(&world, &SensorSpec::default(), &pose, 0, 3);
        assert!(rendered.frame.features.is_empty());
    }

    #[test]
    fn zero_noise_render_is_exact_inverse_transform() {
        let world = generate_world(&small_spec()).unwrap();
        let sensor = SensorSpec {
            depth_noise_a: 0.0,
            descriptor_noise: 0.0,
            detection_prob: 1.0,
            max_features_per_frame: usize::MAX,
            ..SensorSpec::default()
        };
        // Mid-corridor, looking along +X: rotate camera +Z onto world +X.
        let pose = Pose::new(
            UnitQuaternion::from_scaled_axis(Vector3::y() * std::f64::consts::FRAC_PI_2),
            Vector3::new(5.0, 0.0, 1.5),
        );
        let rendered = render_frame(&world, &sensor, &pose, 0, 11);
        assert!(!rendered.frame.features.is_empty());
        for (feat, &id) in rendered
            .frame
            .features
            .iter()
            .zip(&rendered.landmark_ids)
        {
            let expected = crate::geometry::transform_point(
                &pose.inverse(),
                &world.landmarks[id as usize].position,
            );
            assert!((feat.position - expected).norm() < 1e-12);
            assert!(sensor.visible(&feat.position));
        }
    }

    #[test]
    fn visibility_matches_direct_predicate() {
        let world = generate_world(&small_spec()).unwrap();
        let sensor = SensorSpec {
            detection_prob: 1.0,
            max_features_per_frame: usize::MAX,
            depth_noise_a: 0.0,
            descriptor_noise: 0.0,
            ..SensorSpec::default()
        };
        let pose = Pose::new(
            UnitQuaternion::from_scaled_axis(Vector3::y() * std::f64::consts::FRAC_PI_2),
            Vector3::new(10.0, 0.5, 1.0),
        );
        let rendered = render_frame(&world, &sensor, &pose, 0, 13);
        let inv = pose.inverse();
        let expected: usize = world
            .landmarks
            .iter()
            .filter(|l| sensor.visible(&crate::geometry::transform_point(&inv, &l.position)))
            .count();
        assert_eq!(rendered.frame.features.len(), expected);
    }

    #[test]
    fn depth_noise_follows_quadratic_law() {
        // One landmark at depth 4 m rendered 1000 times: sample std of the
        // depth must be within 10% of 0.002 * 16 = 0.032.
        let world = World {
            landmarks: vec![Landmark {
                position: Point3::new(0.0, 0.0, 4.0),
                descriptor: Descriptor::new(vec![1.0, 0.0, 0.0, 0.0]).unwrap(),
                prototype: None,
            }],
            descriptor_dim: 4,
        };
        let sensor = SensorSpec {
            detection_prob: 1.0,
            descriptor_noise: 0.0,
            ..SensorSpec::default()
        };
        let pose = Pose::identity();
        let mut depths = Vec::with_capacity(1000);
        for seed in 0..1000 {
            let r = render_frame(&world, &sensor, &pose, 0, seed);
            assert_eq!(r.frame.features.len(), 1);
            depths.push(r.frame.features[0].position.z);
        }
        let mean = depths.iter().sum::<f64>() / depths.len() as f64;
        let var = depths.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>()
            / (depths.len() - 1) as f64;
        let std = var.sqrt();
        let expected = 0.002 * 4.0 * 4.0;
        assert!(
            (std - expected).abs() <= 0.1 * expected,
            "depth std {std} vs expected {expected}"
        );
    }

    #[test]
    fn render_is_deterministic_per_seed() {
        let world = generate_world(&small_spec()).unwrap();
        let sensor = SensorSpec::default();
        let pose = Pose::new(
            UnitQuaternion::from_scaled_axis(Vector3::y() * std::f64::consts::FRAC_PI_2),
            Vector3::new(5.0, 0.0, 1.5),
        );
        let a = render_frame(&world, &sensor, &pose, 0, 99);
        let b = render_frame(&world, &sensor, &pose, 0, 99);
        assert_eq!(a.frame.features.len(), b.frame.features.len());
        for (x, y) in a.frame.features.iter().zip(&b.frame.features) {
            assert_eq!(x.position, y.position);
            assert_eq!(x.descriptor.values(), y.descriptor.values());
        }
        assert_eq!(a.landmark_ids, b.landmark_ids);
    }

    #[test]
    fn trajectory_interpolates_translation_linearly() {
        let a = Pose::new(UnitQuaternion::identity(), Vector3::new(0.0, 0.0, 0.0));
        let b = Pose::new(UnitQuaternion::identity(), Vector3::new(10.0, 0.0, 0.0));
        let traj = TrajectorySpec {
            waypoints: vec![a, b],
            frame_count: 11,
        };
        for (i, pose) in traj.poses().iter().enumerate() {
            assert!((pose.translation().x - i as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn trajectory_slerps_rotation() {
        let a = Pose::new(UnitQuaternion::identity(), Vector3::zeros());
        let b = Pose::new(
            UnitQuaternion::from_scaled_axis(Vector3::z() * 1.0),
            Vector3::zeros(),
        );
        let traj = TrajectorySpec {
            waypoints: vec![a, b],
            frame_count: 3,
        };
        let mid = traj.sample(1);
        assert!((mid.rotation().angle() - 0.5).abs() < 1e-9);
    }
}
