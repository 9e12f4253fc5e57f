//! The landmark database: positions, descriptors and per-feature matching
//! deviation, plus the builder that accumulates it from posed frames and the
//! textual persistence formats (`FMAP` maps, `FRAMES` observation logs).

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{Point3, Vector3};

use crate::geometry::{transform_point, Pose};
use crate::{Error, Result};

/// Fixed-length real descriptor vector. All frames matched against a map
/// must share its dimension (64 for the SURF-class features this models).
#[derive(Clone, Debug, PartialEq)]
pub struct Descriptor {
    values: Vec<f64>,
}

impl Descriptor {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec(format!(
                "non-finite descriptor component {bad}"
            )));
        }
        Ok(Descriptor { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn distance(&self, other: &Descriptor) -> f64 {
        self.distance_squared(other).sqrt()
    }

    pub fn distance_squared(&self, other: &Descriptor) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

/// One landmark of the map.
#[derive(Clone, Debug)]
pub struct MapFeature {
    pub id: u64,
    /// Position in the fixed map frame, meters.
    pub position: Point3<f64>,
    /// Running mean of the descriptors associated to this landmark.
    pub descriptor: Descriptor,
    /// Standard deviation of the descriptor distances observed when this
    /// feature was re-matched during mapping; the spatial-matching gate.
    pub match_std: f64,
    pub n_obs: u32,
}

/// The landmark database. Immutable after build; ids are dense `[0, count)`
/// and double as indices.
#[derive(Clone, Debug)]
pub struct FeatureMap {
    pub features: Vec<MapFeature>,
    pub descriptor_dim: usize,
    pub frame_id: String,
}

impl FeatureMap {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn feature(&self, id: u64) -> &MapFeature {
        &self.features[id as usize]
    }
}

/// One observed feature: position in the camera frame plus its descriptor
/// and detection response.
#[derive(Clone, Debug)]
pub struct ObservedFeature {
    pub position: Point3<f64>,
    pub descriptor: Descriptor,
    pub strength: f64,
}

/// One sensor reading.
#[derive(Clone, Debug)]
pub struct ObservationFrame {
    pub features: Vec<ObservedFeature>,
    pub ground_truth: Option<Pose>,
    pub frame_index: u64,
}

/// Parameters of the map builder.
#[derive(Clone, Copy, Debug)]
pub struct MapBuildParams {
    /// Association radius in the map frame, meters.
    pub assoc_radius: f64,
    /// Descriptor-distance gate for association (Euclidean, strict `<`).
    pub assoc_desc_gate: f64,
    /// `match_std` fallback used when no feature was observed twice.
    pub default_match_std: f64,
}

impl Default for MapBuildParams {
    fn default() -> Self {
        MapBuildParams {
            assoc_radius: 0.10,
            assoc_desc_gate: 0.5,
            default_match_std: 0.25,
        }
    }
}

/// Uniform grid over feature positions so association stays O(1) per
/// observation while the map grows.
struct AssocGrid {
    cell: f64,
    bins: HashMap<(i64, i64, i64), Vec<usize>>,
}

impl AssocGrid {
    fn new(cell: f64) -> Self {
        AssocGrid {
            cell: cell.max(1e-6),
            bins: HashMap::new(),
        }
    }

    fn key(&self, p: &Point3<f64>) -> (i64, i64, i64) {
        (
            (p.x / self.cell).floor() as i64,
            (p.y / self.cell).floor() as i64,
            (p.z / self.cell).floor() as i64,
        )
    }

    fn insert(&mut self, p: &Point3<f64>, idx: usize) {
        self.bins.entry(self.key(p)).or_default().push(idx);
    }

    fn candidates_within(&self, p: &Point3<f64>, radius: f64, out: &mut Vec<usize>) {
        out.clear();
        let r = (radius / self.cell).ceil() as i64;
        let (cx, cy, cz) = self.key(p);
        for dx in -r..=r {
            for dy in -r..=r {
                for dz in -r..=r {
                    if let Some(v) = self.bins.get(&(cx + dx, cy + dy, cz + dz)) {
                        out.extend_from_slice(v);
                    }
                }
            }
        }
    }
}

/// Mutable accumulator for one map feature during the build.
struct Accum {
    position_sum: Vector3<f64>,
    descriptor_sum: Vec<f64>,
    n_obs: u32,
    // Welford state over the association descriptor distances.
    dist_mean: f64,
    dist_m2: f64,
    n_dist: u32,
}

impl Accum {
    fn mean_descriptor(&self) -> Vec<f64> {
        let inv = 1.0 / self.n_obs as f64;
        self.descriptor_sum.iter().map(|s| s * inv).collect()
    }
}

/// Builds a [`FeatureMap`] from posed observation frames.
///
/// Each observed feature is transformed to the map frame via the frame's
/// ground truth, then associated to the nearest existing feature within
/// `assoc_radius` whose descriptor lies within `assoc_desc_gate`; otherwise
/// it is inserted as a new feature. Associations update the running position
/// and descriptor means and the running deviation of the match distances.
pub fn build_map(frames: &[ObservationFrame], params: &MapBuildParams) -> Result<FeatureMap> {
    let mut dim: Option<usize> = None;
    let mut accums: Vec<Accum> = Vec::new();
    let mut positions: Vec<Point3<f64>> = Vec::new();
    let mut grid = AssocGrid::new(params.assoc_radius.max(1e-6));
    let mut scratch = Vec::new();

    for frame in frames {
        let pose = frame.ground_truth.ok_or(Error::MissingGroundTruth {
            frame_index: frame.frame_index,
        })?;
        for obs in &frame.features {
            let d = *dim.get_or_insert(obs.descriptor.dim());
            if obs.descriptor.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: obs.descriptor.dim(),
                });
            }

            let world = transform_point(&pose, &obs.position);
            grid.candidates_within(&world, params.assoc_radius, &mut scratch);

            // Nearest existing feature within the radius that also passes
            // the descriptor gate.
            let mut best: Option<(usize, f64, f64)> = None;
            for &idx in &scratch {
                let dist = (positions[idx] - world).norm();
                if dist > params.assoc_radius {
                    continue;
                }
                if best.map_or(true, |(_, bd, _)| dist < bd) {
                    let desc_dist = euclid(&accums[idx].mean_descriptor(), obs.descriptor.values());
                    if desc_dist < params.assoc_desc_gate {
                        best = Some((idx, dist, desc_dist));
                    }
                }
            }

            match best {
                Some((idx, _, desc_dist)) => {
                    let acc = &mut accums[idx];
                    acc.n_dist += 1;
                    let delta = desc_dist - acc.dist_mean;
                    acc.dist_mean += delta / acc.n_dist as f64;
                    acc.dist_m2 += delta * (desc_dist - acc.dist_mean);

                    acc.n_obs += 1;
                    acc.position_sum += world.coords;
                    for (s, v) in acc.descriptor_sum.iter_mut().zip(obs.descriptor.values()) {
                        *s += v;
                    }
                    positions[idx] = Point3::from(acc.position_sum / acc.n_obs as f64);
                }
                None => {
                    let idx = accums.len();
                    accums.push(Accum {
                        position_sum: world.coords,
                        descriptor_sum: obs.descriptor.values().to_vec(),
                        n_obs: 1,
                        dist_mean: 0.0,
                        dist_m2: 0.0,
                        n_dist: 0,
                    });
                    positions.push(world);
                    grid.insert(&world, idx);
                }
            }
        }
    }

    // Fallback match_std: global mean over re-observed features.
    let mut std_sum = 0.0;
    let mut std_count = 0usize;
    let stds: Vec<Option<f64>> = accums
        .iter()
        .map(|acc| {
            if acc.n_dist >= 1 {
                let var = if acc.n_dist > 1 {
                    acc.dist_m2 / (acc.n_dist - 1) as f64
                } else {
                    0.0
                };
                let std = var.max(0.0).sqrt();
                std_sum += std;
                std_count += 1;
                Some(std)
            } else {
                None
            }
        })
        .collect();
    let fallback = if std_count > 0 {
        std_sum / std_count as f64
    } else {
        params.default_match_std
    };

    let features = accums
        .iter()
        .enumerate()
        .map(|(idx, acc)| MapFeature {
            id: idx as u64,
            position: positions[idx],
            descriptor: Descriptor {
                values: acc.mean_descriptor(),
            },
            match_std: stds[idx].unwrap_or(fallback),
            n_obs: acc.n_obs,
        })
        .collect();

    Ok(FeatureMap {
        features,
        descriptor_dim: dim.unwrap_or(0),
        frame_id: "map".to_string(),
    })
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

// ---------------------------------------------------------------------------
// Persistence: FMAP map files and FRAMES observation files. Both are textual,
// line oriented, UTF-8, with full round-trip float precision.
// ---------------------------------------------------------------------------

/// Writes a map as `FMAP 1 <D> <count>` followed by one feature per line:
/// `<id> <x> <y> <z> <match_std> <n_obs> <d1> ... <dD>`.
pub fn save_map(map: &FeatureMap, path: &Path) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "FMAP 1 {} {}", map.descriptor_dim, map.features.len())?;
    let mut line = String::new();
    for f in &map.features {
        line.clear();
        write!(
            line,
            "{} {} {} {} {} {}",
            f.id, f.position.x, f.position.y, f.position.z, f.match_std, f.n_obs
        )
        .expect("write to string");
        for v in f.descriptor.values() {
            write!(line, " {v}").expect("write to string");
        }
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_map(path: &Path) -> Result<FeatureMap> {
    let file = fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let header = lines.next().ok_or_else(|| format_err(1, "empty file"))??;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 4 || parts[0] != "FMAP" {
        return Err(format_err(1, "expected `FMAP <version> <dim> <count>`"));
    }
    if parts[1] != "1" {
        return Err(format_err(1, &format!("unsupported version {}", parts[1])));
    }
    let dim: usize = parse_field(parts[2], 1, "descriptor dimension")?;
    let count: usize = parse_field(parts[3], 1, "feature count")?;

    let mut features = Vec::with_capacity(count);
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let id: u64 = parse_next(&mut it, line_no, "id")?;
        let x: f64 = parse_next(&mut it, line_no, "x")?;
        let y: f64 = parse_next(&mut it, line_no, "y")?;
        let z: f64 = parse_next(&mut it, line_no, "z")?;
        let match_std: f64 = parse_next(&mut it, line_no, "match_std")?;
        let n_obs: u32 = parse_next(&mut it, line_no, "n_obs")?;
        let values: Vec<f64> = it
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| format_err(line_no, &format!("bad descriptor component `{t}`")))
            })
            .collect::<Result<_>>()?;
        if values.len() != dim {
            return Err(format_err(
                line_no,
                &format!(
                    "expected {dim} descriptor components, found {}",
                    values.len()
                ),
            ));
        }
        if id != features.len() as u64 {
            return Err(format_err(
                line_no,
                &format!("ids must be dense; expected {}, found {id}", features.len()),
            ));
        }
        features.push(MapFeature {
            id,
            position: Point3::new(x, y, z),
            descriptor: Descriptor::new(values)?,
            match_std,
            n_obs,
        });
    }
    if features.len() != count {
        return Err(format_err(
            0,
            &format!("header count {count} but {} features", features.len()),
        ));
    }
    Ok(FeatureMap {
        features,
        descriptor_dim: dim,
        frame_id: "map".to_string(),
    })
}

/// Writes frames as `FRAMES 1 <D>` followed, per frame, by
/// `FRAME <index> [POSE tx ty tz qw qx qy qz]`, one feature per line
/// `<x> <y> <z> <strength> <d1> ... <dD>`, and a terminating `END`.
pub fn save_frames(frames: &[ObservationFrame], dim: usize, path: &Path) -> Result<()> {
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "FRAMES 1 {dim}")?;
    let mut line = String::new();
    for frame in frames {
        match &frame.ground_truth {
            Some(pose) => {
                let (t, q) = pose.to_parts();
                writeln!(
                    w,
                    "FRAME {} POSE {} {} {} {} {} {} {}",
                    frame.frame_index, t[0], t[1], t[2], q[0], q[1], q[2], q[3]
                )?;
            }
            None => writeln!(w, "FRAME {}", frame.frame_index)?,
        }
        for feat in &frame.features {
            line.clear();
            write!(
                line,
                "{} {} {} {}",
                feat.position.x, feat.position.y, feat.position.z, feat.strength
            )
            .expect("write to string");
            for v in feat.descriptor.values() {
                write!(line, " {v}").expect("write to string");
            }
            writeln!(w, "{line}")?;
        }
        writeln!(w, "END")?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_frames(path: &Path) -> Result<Vec<ObservationFrame>> {
    let file = fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let header = lines.next().ok_or_else(|| format_err(1, "empty file"))??;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 3 || parts[0] != "FRAMES" || parts[1] != "1" {
        return Err(format_err(1, "expected `FRAMES 1 <dim>`"));
    }
    let dim: usize = parse_field(parts[2], 1, "descriptor dimension")?;

    let mut frames = Vec::new();
    let mut current: Option<ObservationFrame> = None;
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix("FRAME ") {
            if current.is_some() {
                return Err(format_err(line_no, "FRAME before previous END"));
            }
            let toks: Vec<&str> = rest.split_whitespace().collect();
            if toks.is_empty() {
                return Err(format_err(line_no, "missing frame index"));
            }
            let frame_index: u64 = parse_field(toks[0], line_no, "frame index")?;
            let ground_truth = if toks.len() > 1 {
                if toks[1] != "POSE" || toks.len() != 9 {
                    return Err(format_err(line_no, "expected `POSE tx ty tz qw qx qy qz`"));
                }
                let nums: Vec<f64> = toks[2..]
                    .iter()
                    .map(|t| parse_field(t, line_no, "pose component"))
                    .collect::<Result<_>>()?;
                Some(Pose::from_parts(
                    [nums[0], nums[1], nums[2]],
                    [nums[3], nums[4], nums[5], nums[6]],
                ))
            } else {
                None
            };
            current = Some(ObservationFrame {
                features: Vec::new(),
                ground_truth,
                frame_index,
            });
        } else if trimmed == "END" {
            frames.push(
                current
                    .take()
                    .ok_or_else(|| format_err(line_no, "END without FRAME"))?,
            );
        } else {
            let frame = current
                .as_mut()
                .ok_or_else(|| format_err(line_no, "feature line outside FRAME"))?;
            let mut it = trimmed.split_whitespace();
            let x: f64 = parse_next(&mut it, line_no, "x")?;
            let y: f64 = parse_next(&mut it, line_no, "y")?;
            let z: f64 = parse_next(&mut it, line_no, "z")?;
            let strength: f64 = parse_next(&mut it, line_no, "strength")?;
            let values: Vec<f64> = it
                .map(|t| parse_field(t, line_no, "descriptor component"))
                .collect::<Result<_>>()?;
            if values.len() != dim {
                return Err(format_err(
                    line_no,
                    &format!(
                        "expected {dim} descriptor components, found {}",
                        values.len()
                    ),
                ));
            }
            frame.features.push(ObservedFeature {
                position: Point3::new(x, y, z),
                descriptor: Descriptor::new(values)?,
                strength,
            });
        }
    }
    if current.is_some() {
        return Err(format_err(0, "missing END for last frame"));
    }
    Ok(frames)
}

fn format_err(line: usize, message: &str) -> Error {
    Error::Format {
        line,
        message: message.to_string(),
    }
}

fn parse_field<T: std::str::FromStr>(tok: &str, line: usize, what: &str) -> Result<T> {
    tok.parse()
        .map_err(|_| format_err(line, &format!("bad {what} `{tok}`")))
}

fn parse_next<'a, T: std::str::FromStr>(
    it: &mut impl Iterator<Item = &'a str>,
    line: usize,
    what: &str,
) -> Result<T> {
    let tok = it
        .next()
        .ok_or_else(|| format_err(line, &format!("missing {what}")))?;
    parse_field(tok, line, what)
}
