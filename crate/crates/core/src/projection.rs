//! Stereo-affordance preprocessing: pinhole back-projection, voxel
//! downsampling, DBSCAN clustering and low-weight cluster rejection.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::Vector3;

use crate::affordance::{AffordanceMap, DepthImage};
use crate::error::{Error, Result};

/// Pinhole camera intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        if fx <= 0.0 || fy <= 0.0 {
            return Err(Error::validation("focal lengths must be positive"));
        }
        Ok(Self { fx, fy, cx, cy })
    }

    /// Parses a `key = value` text file with keys fx, fy, cx, cy.
    pub fn from_reader<R: Read>(source: R) -> Result<Self> {
        let mut fields: HashMap<String, f64> = HashMap::new();
        for line in BufReader::new(source).lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(format!("intrinsics: expected `key = value`, got `{line}`")))?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| Error::parse(format!("intrinsics: bad number in `{line}`")))?;
            fields.insert(key.trim().to_string(), value);
        }
        let get = |k: &str| {
            fields
                .get(k)
                .copied()
                .ok_or_else(|| Error::parse(format!("intrinsics: missing key {k}")))
        };
        Self::new(get("fx")?, get("fy")?, get("cx")?, get("cy")?)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    pub fn write_to(&self, mut dest: impl Write) -> Result<()> {
        writeln!(dest, "fx = {}", self.fx)?;
        writeln!(dest, "fy = {}", self.fy)?;
        writeln!(dest, "cx = {}", self.cx)?;
        writeln!(dest, "cy = {}", self.cy)?;
        Ok(())
    }
}

/// A 3D point in meters carrying an affordance weight in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedPoint {
    pub position: Vector3<f64>,
    pub weight: f64,
}

impl WeightedPoint {
    pub fn new(position: Vector3<f64>, weight: f64) -> Self {
        Self { position, weight }
    }
}

/// Ordered collection of weighted 3D points.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightedCloud {
    pub points: Vec<WeightedPoint>,
}

impl WeightedCloud {
    pub fn new(points: Vec<WeightedPoint>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Writes the cloud as ASCII PLY with properties x, y, z, weight.
    pub fn write_ply(&self, mut dest: impl Write) -> Result<()> {
        writeln!(dest, "ply")?;
        writeln!(dest, "format ascii 1.0")?;
        writeln!(dest, "element vertex {}", self.points.len())?;
        writeln!(dest, "property double x")?;
        writeln!(dest, "property double y")?;
        writeln!(dest, "property double z")?;
        writeln!(dest, "property double weight")?;
        writeln!(dest, "end_header")?;
        for p in &self.points {
            writeln!(
                dest,
                "{} {} {} {}",
                p.position.x, p.position.y, p.position.z, p.weight
            )?;
        }
        Ok(())
    }

    pub fn write_ply_file(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_ply(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn read_ply(source: impl Read) -> Result<Self> {
        let mut lines = BufReader::new(source).lines();
        let mut next = || -> Result<String> {
            lines
                .next()
                .ok_or(Error::Truncated)?
                .map_err(Error::from)
        };
        if next()?.trim() != "ply" {
            return Err(Error::BadMagic);
        }
        let mut vertex_count: Option<usize> = None;
        let mut properties: Vec<String> = Vec::new();
        loop {
            let line = next()?;
            let line = line.trim();
            if line == "end_header" {
                break;
            }
            if let Some(rest) = line.strip_prefix("element vertex ") {
                vertex_count = Some(
                    rest.trim()
                        .parse()
                        .map_err(|_| Error::parse("ply: bad vertex count"))?,
                );
            } else if let Some(rest) = line.strip_prefix("property ") {
                let name = rest
                    .split_whitespace()
                    .last()
                    .ok_or_else(|| Error::parse("ply: bad property line"))?;
                properties.push(name.to_string());
            }
        }
        if properties != ["x", "y", "z", "weight"] {
            return Err(Error::parse(format!(
                "ply: expected properties x y z weight, got {properties:?}"
            )));
        }
        let n = vertex_count.ok_or_else(|| Error::parse("ply: missing element vertex"))?;
        let mut points = Vec::with_capacity(n);
        for _ in 0..n {
            let line = next()?;
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| Error::parse("ply: bad vertex value")))
                .collect::<Result<_>>()?;
            if vals.len() != 4 {
                return Err(Error::parse("ply: vertex line needs 4 values"));
            }
            if !(0.0..=1.0).contains(&vals[3]) {
                return Err(Error::OutOfRange(format!("ply weight {}", vals[3])));
            }
            points.push(WeightedPoint::new(
                Vector3::new(vals[0], vals[1], vals[2]),
                vals[3],
            ));
        }
        Ok(Self::new(points))
    }

    pub fn read_ply_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_ply(std::fs::File::open(path)?)
    }
}

/// Label for a point that belongs to no cluster.
pub const NOISE: i32 = -1;

/// Per-point cluster assignment; ids are contiguous from 0, `NOISE` marks
/// unclustered points.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterLabeling {
    pub labels: Vec<i32>,
    pub cluster_count: usize,
}

/// Back-projects every pixel with valid depth and affordance weight at least
/// `w_min` through the intrinsics, in row-major pixel order.
pub fn back_project(
    depth: &DepthImage,
    aff: &AffordanceMap,
    k: &CameraIntrinsics,
    w_min: f64,
) -> Result<WeightedCloud> {
    if depth.width() != aff.width() || depth.height() != aff.height() {
        return Err(Error::validation(format!(
            "depth {}x{} and affordance {}x{} dimensions differ",
            depth.width(),
            depth.height(),
            aff.width(),
            aff.height()
        )));
    }
    if !(0.0..1.0).contains(&w_min) {
        return Err(Error::validation(format!("w_min {w_min} outside [0, 1)")));
    }
    let mut points = Vec::new();
    for v in 0..depth.height() {
        for u in 0..depth.width() {
            let d = depth.value(u, v) as f64;
            let w = aff.value(u, v) as f64;
            if d > 0.0 && w >= w_min {
                let x = (u as f64 - k.cx) * d / k.fx;
                let y = (v as f64 - k.cy) * d / k.fy;
                points.push(WeightedPoint::new(Vector3::new(x, y, d), w));
            }
        }
    }
    Ok(WeightedCloud::new(points))
}

/// One output point per occupied voxel: unweighted centroid position, mean
/// weight. Voxel index is `floor(coord / voxel)` per axis; output order is
/// first-occupancy order, so results are deterministic.
pub fn voxel_downsample(cloud: &WeightedCloud, voxel: f64) -> Result<WeightedCloud> {
    if voxel <= 0.0 || !voxel.is_finite() {
        return Err(Error::validation(format!(
            "voxel size must be positive, got {voxel}"
        )));
    }
    struct Acc {
        sum: Vector3<f64>,
        weight: f64,
        count: usize,
    }
    let mut order: Vec<Acc> = Vec::new();
    let mut index: HashMap<(i64, i64, i64), usize> = HashMap::new();
    for p in &cloud.points {
        let key = (
            (p.position.x / voxel).floor() as i64,
            (p.position.y / voxel).floor() as i64,
            (p.position.z / voxel).floor() as i64,
        );
        let slot = *index.entry(key).or_insert_with(|| {
            order.push(Acc {
                sum: Vector3::zeros(),
                weight: 0.0,
                count: 0,
            });
            order.len() - 1
        });
        let acc = &mut order[slot];
        acc.sum += p.position;
        acc.weight += p.weight;
        acc.count += 1;
    }
    let points = order
        .into_iter()
        .map(|acc| WeightedPoint::new(acc.sum / acc.count as f64, acc.weight / acc.count as f64))
        .collect();
    Ok(WeightedCloud::new(points))
}

/// DBSCAN over the cloud positions. A point is core when at least `min_pts`
/// points (itself included) lie within `eps`. Cluster ids follow the input
/// order of each cluster's first core point.
pub fn dbscan(cloud: &WeightedCloud, eps: f64, min_pts: usize) -> Result<ClusterLabeling> {
    if eps <= 0.0 || !eps.is_finite() {
        return Err(Error::validation(format!("eps must be positive, got {eps}")));
    }
    if min_pts < 1 {
        return Err(Error::validation("min_pts must be at least 1"));
    }
    let n = cloud.len();
    let eps2 = eps * eps;
    let positions: Vec<Vector3<f64>> = cloud.points.iter().map(|p| p.position).collect();
    let neighbors = |i: usize| -> Vec<usize> {
        (0..n)
            .filter(|&j| (positions[i] - positions[j]).norm_squared() <= eps2)
            .collect()
    };

    const UNVISITED: i32 = -2;
    let mut labels = vec![UNVISITED; n];
    let mut cluster: i32 = 0;
    for i in 0..n {
        if labels[i] != UNVISITED {
            continue;
        }
        let nbrs = neighbors(i);
        if nbrs.len() < min_pts {
            labels[i] = NOISE;
            continue;
        }
        labels[i] = cluster;
        let mut queue: Vec<usize> = nbrs;
        let mut head = 0;
        while head < queue.len() {
            let j = queue[head];
            head += 1;
            if labels[j] == NOISE {
                labels[j] = cluster; // border point
            }
            if labels[j] != UNVISITED {
                continue;
            }
            labels[j] = cluster;
            let jn = neighbors(j);
            if jn.len() >= min_pts {
                queue.extend(jn);
            }
        }
        cluster += 1;
    }
    Ok(ClusterLabeling {
        labels,
        cluster_count: cluster as usize,
    })
}

/// Keeps points of clusters whose mean weight reaches `tau` times the best
/// cluster mean. Noise is always dropped; the argmax cluster always survives.
pub fn filter_clusters(
    cloud: &WeightedCloud,
    labeling: &ClusterLabeling,
    tau: f64,
) -> Result<WeightedCloud> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::validation(format!("tau {tau} outside (0, 1]")));
    }
    if labeling.labels.len() != cloud.len() {
        return Err(Error::validation(format!(
            "labeling size {} does not match cloud size {}",
            labeling.labels.len(),
            cloud.len()
        )));
    }
    if labeling.cluster_count == 0 {
        return Err(Error::EmptyAffordance);
    }
    let mut sums = vec![0.0f64; labeling.cluster_count];
    let mut counts = vec![0usize; labeling.cluster_count];
    for (p, &label) in cloud.points.iter().zip(&labeling.labels) {
        if label >= 0 {
            sums[label as usize] += p.weight;
            counts[label as usize] += 1;
        }
    }
    let means: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect();
    let max_mean = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let threshold = tau * max_mean;
    let keep: Vec<bool> = means.iter().map(|&m| m >= threshold).collect();
    let points = cloud
        .points
        .iter()
        .zip(&labeling.labels)
        .filter(|(_, &label)| label >= 0 && keep[label as usize])
        .map(|(p, _)| *p)
        .collect();
    Ok(WeightedCloud::new(points))
}
