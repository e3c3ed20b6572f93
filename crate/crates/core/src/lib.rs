//! Affordance-aware grasp planning: depth plus affordance map in, weighted
//! superquadric recovery, collision-constrained gripper pose out.

pub mod affordance;
pub mod error;
pub mod grasp;
pub mod metrics;
pub mod optim;
pub mod pipeline;
pub mod projection;
pub mod superquadric;
pub mod synth;

pub use affordance::{AffordanceMap, DepthImage, InteractionPoint};
pub use error::{Error, Result};
pub use grasp::{GraspPose, GraspResult, GripperModel, SceneConstraints};
pub use metrics::MetricReport;
pub use pipeline::{PipelineConfig, PipelineOutput};
pub use projection::{CameraIntrinsics, ClusterLabeling, WeightedCloud, WeightedPoint};
pub use superquadric::{FitResult, RecoveryConfig, SuperquadricParams};
pub use synth::SynthScene;
