//! End-to-end driver: back-projection, downsampling, clustering, superquadric
//! recovery and grasp planning under one configuration.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use crate::affordance::{AffordanceMap, DepthImage};
use crate::error::{Error, Result};
use crate::grasp::{plan_grasp, GraspResult, GripperModel, SceneConstraints};
use crate::projection::{
    back_project, dbscan, filter_clusters, voxel_downsample, CameraIntrinsics, WeightedCloud,
};
use crate::superquadric::{fit, FitResult, RecoveryConfig};

/// Every tunable of the pipeline stages, with the documented defaults.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    /// Pre-projection affordance gate.
    pub w_min: f64,
    /// Voxel edge in meters.
    pub voxel: f64,
    /// DBSCAN neighborhood radius in meters.
    pub eps: f64,
    pub min_pts: usize,
    /// Cluster rejection threshold relative to the best cluster mean.
    pub tau: f64,
    /// Volume penalty coefficient for recovery.
    pub beta: f64,
    /// Bump width for synthetic affordance maps, in pixels.
    pub sigma_px: f64,
    pub gripper_semi_axes: [f64; 3],
    pub sample_count: usize,
    pub table_height: f64,
    pub clearance: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            w_min: 0.05,
            voxel: 0.005,
            eps: 0.010,
            min_pts: 10,
            tau: 0.75,
            beta: 0.1,
            sigma_px: 10.0,
            gripper_semi_axes: [0.03, 0.06, 0.03],
            sample_count: 20,
            table_height: f64::MIN / 4.0,
            clearance: 0.0,
            max_iterations: 200,
            tolerance: 1e-8,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn recovery(&self) -> RecoveryConfig {
        RecoveryConfig {
            beta: self.beta,
            max_iterations: self.max_iterations,
            tolerance: self.tolerance,
            ..RecoveryConfig::default()
        }
    }

    pub fn gripper(&self) -> GripperModel {
        GripperModel {
            semi_axes: self.gripper_semi_axes,
            sample_count: self.sample_count,
        }
    }

    pub fn constraints(&self) -> SceneConstraints {
        SceneConstraints {
            table_height: self.table_height,
            clearance: self.clearance,
            obstacles: Vec::new(),
        }
    }

    /// Applies `key = value` overrides from a configuration file.
    pub fn apply_reader(&mut self, source: impl Read) -> Result<()> {
        for line in BufReader::new(source).lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(format!("config: expected `key = value`, got `{line}`")))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: impl AsRef<Path>) -> Result<()> {
        self.apply_reader(std::fs::File::open(path)?)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |k: &str, v: &str| Error::parse(format!("config: bad value `{v}` for {k}"));
        let parse_f64 = |v: &str, k: &str| v.parse::<f64>().map_err(|_| bad(k, v));
        match key {
            "w_min" => self.w_min = parse_f64(value, key)?,
            "voxel" => self.voxel = parse_f64(value, key)?,
            "eps" => self.eps = parse_f64(value, key)?,
            "min_pts" => self.min_pts = value.parse().map_err(|_| bad(key, value))?,
            "tau" => self.tau = parse_f64(value, key)?,
            "beta" => self.beta = parse_f64(value, key)?,
            "sigma_px" => self.sigma_px = parse_f64(value, key)?,
            "gripper_semi_axes" => {
                let parts: Vec<f64> = value
                    .split(',')
                    .map(|t| parse_f64(t.trim(), key))
                    .collect::<Result<_>>()?;
                if parts.len() != 3 {
                    return Err(bad(key, value));
                }
                self.gripper_semi_axes = [parts[0], parts[1], parts[2]];
            }
            "sample_count" => self.sample_count = value.parse().map_err(|_| bad(key, value))?,
            "table_height" => self.table_height = parse_f64(value, key)?,
            "clearance" => self.clearance = parse_f64(value, key)?,
            "max_iterations" => {
                self.max_iterations = value.parse().map_err(|_| bad(key, value))?
            }
            "tolerance" => self.tolerance = parse_f64(value, key)?,
            "seed" => self.seed = value.parse().map_err(|_| bad(key, value))?,
            other => return Err(Error::parse(format!("config: unknown key {other}"))),
        }
        Ok(())
    }

    /// All fields as `key = value` pairs, for echoing configuration files.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let g = self.gripper_semi_axes;
        vec![
            ("w_min", self.w_min.to_string()),
            ("voxel", self.voxel.to_string()),
            ("eps", self.eps.to_string()),
            ("min_pts", self.min_pts.to_string()),
            ("tau", self.tau.to_string()),
            ("beta", self.beta.to_string()),
            ("sigma_px", self.sigma_px.to_string()),
            ("gripper_semi_axes", format!("{},{},{}", g[0], g[1], g[2])),
            ("sample_count", self.sample_count.to_string()),
            ("table_height", self.table_height.to_string()),
            ("clearance", self.clearance.to_string()),
            ("max_iterations", self.max_iterations.to_string()),
            ("tolerance", self.tolerance.to_string()),
            ("seed", self.seed.to_string()),
        ]
    }
}

/// Outputs of a full pipeline run.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub filtered_cloud: WeightedCloud,
    pub fit: FitResult,
    pub grasp: GraspResult,
}

/// Runs back_project -> voxel_downsample -> dbscan -> filter_clusters ->
/// fit -> plan_grasp. Errors carry the failing stage's name.
pub fn run_pipeline(
    depth: &DepthImage,
    aff: &AffordanceMap,
    k: &CameraIntrinsics,
    config: &PipelineConfig,
) -> Result<PipelineOutput> {
    let cloud =
        back_project(depth, aff, k, config.w_min).map_err(|e| e.in_stage("back_project"))?;
    let cloud = voxel_downsample(&cloud, config.voxel).map_err(|e| e.in_stage("voxel_downsample"))?;
    let labeling =
        dbscan(&cloud, config.eps, config.min_pts).map_err(|e| e.in_stage("dbscan"))?;
    let filtered = filter_clusters(&cloud, &labeling, config.tau)
        .map_err(|e| e.in_stage("filter_clusters"))?;
    let fit_result = fit(&filtered, &config.recovery()).map_err(|e| e.in_stage("fit"))?;
    let grasp = plan_grasp(
        &fit_result.params,
        &config.gripper(),
        &config.constraints(),
        &config.recovery(),
    )
    .map_err(|e| e.in_stage("plan_grasp"))?;
    Ok(PipelineOutput {
        filtered_cloud: filtered,
        fit: fit_result,
        grasp,
    })
}

/// Convenience map of config entries, used by tests.
pub fn config_map(config: &PipelineConfig) -> HashMap<&'static str, String> {
    config.entries().into_iter().collect()
}
