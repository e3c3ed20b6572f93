//! Command-line driver: the full grasp pipeline plus one subcommand per
//! stage, sharing a single configuration (file plus flag overrides).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::Vector3;

use affgrasp_core::affordance::{
    gaussian_bump, read_afm_file, read_depth_file, write_afm_file, write_dpt_file,
    InteractionPoint,
};
use affgrasp_core::grasp::plan_grasp;
use affgrasp_core::metrics::{focal_loss, kld, nss, pws_distance, sim};
use affgrasp_core::pipeline::{run_pipeline, PipelineConfig};
use affgrasp_core::projection::{
    back_project, dbscan, filter_clusters, voxel_downsample, CameraIntrinsics, WeightedCloud,
};
use affgrasp_core::superquadric::{fit, surface_point, SuperquadricParams};
use affgrasp_core::synth::render_scene;
use affgrasp_core::Error;

const EXIT_PARSE: u8 = 2;
const EXIT_EMPTY_AFFORDANCE: u8 = 3;
const EXIT_INFEASIBLE: u8 = 4;

#[derive(Parser)]
#[command(name = "affgrasp", about = "Affordance-guided grasp planning toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Configuration file plus per-field overrides; flags win.
#[derive(Args, Clone)]
struct ConfigArgs {
    /// `key = value` configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    w_min: Option<f64>,
    /// voxel edge in meters (0 disables downsampling)
    #[arg(long)]
    voxel: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    min_pts: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    sigma_px: Option<f64>,
    /// comma-separated gripper semi-axes in meters, e.g. 0.03,0.06,0.03
    #[arg(long)]
    gripper_semi_axes: Option<String>,
    #[arg(long)]
    sample_count: Option<usize>,
    #[arg(long)]
    table_height: Option<f64>,
    #[arg(long)]
    clearance: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<PipelineConfig, Error> {
        let mut config = PipelineConfig::default();
        if let Some(path) = &self.config {
            config.apply_file(path)?;
        }
        if let Some(v) = self.w_min {
            config.w_min = v;
        }
        if let Some(v) = self.voxel {
            config.voxel = v;
        }
        if let Some(v) = self.eps {
            config.eps = v;
        }
        if let Some(v) = self.min_pts {
            config.min_pts = v;
        }
        if let Some(v) = self.tau {
            config.tau = v;
        }
        if let Some(v) = self.beta {
            config.beta = v;
        }
        if let Some(v) = self.sigma_px {
            config.sigma_px = v;
        }
        if let Some(v) = &self.gripper_semi_axes {
            config.set("gripper_semi_axes", v)?;
        }
        if let Some(v) = self.sample_count {
            config.sample_count = v;
        }
        if let Some(v) = self.table_height {
            config.table_height = v;
        }
        if let Some(v) = self.clearance {
            config.clearance = v;
        }
        if let Some(v) = self.max_iterations {
            config.max_iterations = v;
        }
        if let Some(v) = self.tolerance {
            config.tolerance = v;
        }
        if let Some(v) = self.seed {
            config.seed = v;
        }
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Render Gaussian affordance bumps at interaction points into an AFM1 map
    Bump {
        /// output affordance map (AFM1)
        #[arg(short, long)]
        output: PathBuf,
        /// interaction point as col,row; repeatable
        #[arg(long = "point", required = true)]
        points: Vec<String>,
        #[arg(long)]
        width: usize,
        #[arg(long)]
        height: usize,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Back-project depth + affordance into a weighted cloud and voxel-downsample it
    Project {
        /// depth image (DPT1 or 16-bit PGM)
        depth: PathBuf,
        /// affordance map (AFM1)
        affordance: PathBuf,
        /// camera intrinsics (key = value)
        intrinsics: PathBuf,
        /// output cloud (ASCII PLY)
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Cluster a weighted cloud (DBSCAN) and keep high-affordance clusters
    Cluster {
        /// input cloud (ASCII PLY)
        cloud: PathBuf,
        /// output filtered cloud (ASCII PLY)
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Recover a superquadric from a weighted cloud
    FitSq {
        /// input cloud (ASCII PLY)
        cloud: PathBuf,
        /// output superquadric record
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Plan a constrained gripper pose against a superquadric record
    PlanGrasp {
        /// target superquadric record
        record: PathBuf,
        /// output grasp report
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Compare two affordance maps (KLD, SIM, NSS; optional PWS and focal loss)
    Metrics {
        /// predicted affordance map (AFM1)
        pred: PathBuf,
        /// ground-truth affordance map (AFM1)
        gt: PathBuf,
        /// grasp pixel as col,row for PWS distance
        #[arg(long)]
        grasp_pixel: Option<String>,
        /// focal-loss exponent; prints the loss when given
        #[arg(long)]
        gamma: Option<f64>,
    },
    /// Render a synthetic scene from a known superquadric
    Synth {
        /// output directory (depth.dpt, aff.afm, intrinsics.txt, truth.txt)
        #[arg(short, long)]
        output: PathBuf,
        /// truth semi-axes as a1,a2,a3 in meters
        #[arg(long, default_value = "0.03,0.05,0.03")]
        axes: String,
        /// truth exponents as e1,e2
        #[arg(long, default_value = "1.0,1.0")]
        exponents: String,
        /// truth center as x,y,z in meters
        #[arg(long, default_value = "0.0,0.0,0.7")]
        translation: String,
        /// truth orientation as rz,ry,rx in radians
        #[arg(long, default_value = "0.0,0.0,0.0")]
        euler: String,
        /// affordance anchor as eta,omega surface angles
        #[arg(long, default_value = "-0.3,-2.0")]
        anchor: String,
        #[arg(long, default_value_t = 640)]
        width: usize,
        #[arg(long, default_value_t = 480)]
        height: usize,
        /// intrinsics as fx,fy,cx,cy
        #[arg(long, default_value = "500,500,320,240")]
        intrinsics: String,
        /// depth noise sigma in meters
        #[arg(long, default_value_t = 0.0005)]
        noise: f64,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Full pipeline: project, cluster, fit, plan; writes cloud.ply, superquadric.txt, grasp.txt
    Pipeline {
        /// depth image (DPT1 or 16-bit PGM)
        depth: PathBuf,
        /// affordance map (AFM1)
        affordance: PathBuf,
        /// camera intrinsics (key = value)
        intrinsics: PathBuf,
        /// output directory
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

fn parse_numbers<const N: usize>(text: &str, what: &str) -> Result<[f64; N], Error> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::parse(format!("{what}: bad number `{t}` in `{text}`")))
        })
        .collect::<Result<_, _>>()?;
    parts
        .try_into()
        .map_err(|_| Error::parse(format!("{what}: expected {N} comma-separated numbers")))
}

fn exit_for(err: &Error) -> u8 {
    match err.root() {
        Error::EmptyAffordance => EXIT_EMPTY_AFFORDANCE,
        _ => EXIT_PARSE,
    }
}

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Bump {
            output,
            points,
            width,
            height,
            config,
        } => {
            let config = config.resolve()?;
            let points: Vec<InteractionPoint> = points
                .iter()
                .map(|p| parse_numbers::<2>(p, "point").map(|[x, y]| InteractionPoint::new(x, y)))
                .collect::<Result<_, _>>()?;
            let map = gaussian_bump(&points, config.sigma_px, width, height)?;
            write_afm_file(&map, output)?;
            Ok(0)
        }
        Command::Project {
            depth,
            affordance,
            intrinsics,
            output,
            config,
        } => {
            let config = config.resolve()?;
            let depth = read_depth_file(depth)?;
            let aff = read_afm_file(affordance)?;
            let k = CameraIntrinsics::from_file(intrinsics)?;
            let cloud = back_project(&depth, &aff, &k, config.w_min)?;
            let cloud = if config.voxel > 0.0 {
                voxel_downsample(&cloud, config.voxel)?
            } else {
                cloud
            };
            cloud.write_ply_file(output)?;
            Ok(0)
        }
        Command::Cluster {
            cloud,
            output,
            config,
        } => {
            let config = config.resolve()?;
            let cloud = WeightedCloud::read_ply_file(cloud)?;
            let labeling = dbscan(&cloud, config.eps, config.min_pts)?;
            let filtered = filter_clusters(&cloud, &labeling, config.tau)?;
            filtered.write_ply_file(output)?;
            Ok(0)
        }
        Command::FitSq {
            cloud,
            output,
            config,
        } => {
            let config = config.resolve()?;
            let cloud = WeightedCloud::read_ply_file(cloud)?;
            let result = fit(&cloud, &config.recovery())?;
            result.params.write_record_file(output)?;
            Ok(0)
        }
        Command::PlanGrasp {
            record,
            output,
            config,
        } => {
            let config = config.resolve()?;
            let sq = SuperquadricParams::read_record_file(record)?;
            let result = plan_grasp(
                &sq,
                &config.gripper(),
                &config.constraints(),
                &config.recovery(),
            )?;
            result.write_report_file(output)?;
            Ok(if result.feasible() { 0 } else { EXIT_INFEASIBLE })
        }
        Command::Metrics {
            pred,
            gt,
            grasp_pixel,
            gamma,
        } => {
            let pred = read_afm_file(pred)?;
            let gt = read_afm_file(gt)?;
            println!("kld {}", kld(&pred, &gt)?);
            println!("sim {}", sim(&pred, &gt)?);
            println!("nss {}", nss(&pred, &gt)?);
            if let Some(pixel) = grasp_pixel {
                let [x, y] = parse_numbers::<2>(&pixel, "grasp_pixel")?;
                println!("pws {}", pws_distance((x, y), &gt)?);
            }
            if let Some(gamma) = gamma {
                println!("focal_loss {}", focal_loss(&pred, &gt, gamma)?);
            }
            Ok(0)
        }
        Command::Synth {
            output,
            axes,
            exponents,
            translation,
            euler,
            anchor,
            width,
            height,
            intrinsics,
            noise,
            config,
        } => {
            let config = config.resolve()?;
            let a = parse_numbers::<3>(&axes, "axes")?;
            let e = parse_numbers::<2>(&exponents, "exponents")?;
            let t = parse_numbers::<3>(&translation, "translation")?;
            let r = parse_numbers::<3>(&euler, "euler")?;
            let [eta, omega] = parse_numbers::<2>(&anchor, "anchor")?;
            let [fx, fy, cx, cy] = parse_numbers::<4>(&intrinsics, "intrinsics")?;
            let truth =
                SuperquadricParams::new(a, e, Vector3::new(t[0], t[1], t[2]), r)?;
            let k = CameraIntrinsics::new(fx, fy, cx, cy)?;
            let scene = render_scene(
                &truth,
                (eta, omega),
                &k,
                width,
                height,
                config.sigma_px,
                noise,
                config.seed,
            )?;
            std::fs::create_dir_all(&output)?;
            write_dpt_file(&scene.depth, output.join("depth.dpt"))?;
            write_afm_file(&scene.aff, output.join("aff.afm"))?;
            k.write_to(std::fs::File::create(output.join("intrinsics.txt"))?)?;
            let mut truth_file = std::fs::File::create(output.join("truth.txt"))?;
            truth.write_record(&mut truth_file)?;
            use std::io::Write;
            let p = surface_point(&truth, eta, omega);
            writeln!(truth_file, "anchor {} {} {}", p.x, p.y, p.z)?;
            writeln!(truth_file, "seed {}", config.seed)?;
            Ok(0)
        }
        Command::Pipeline {
            depth,
            affordance,
            intrinsics,
            output,
            config,
        } => {
            let config = config.resolve()?;
            let depth = read_depth_file(depth)?;
            let aff = read_afm_file(affordance)?;
            let k = CameraIntrinsics::from_file(intrinsics)?;
            let result = run_pipeline(&depth, &aff, &k, &config)?;
            std::fs::create_dir_all(&output)?;
            result.filtered_cloud.write_ply_file(output.join("cloud.ply"))?;
            result
                .fit
                .params
                .write_record_file(output.join("superquadric.txt"))?;
            result.grasp.write_report_file(output.join("grasp.txt"))?;
            Ok(if result.grasp.feasible() {
                0
            } else {
                EXIT_INFEASIBLE
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_for(&err))
        }
    }
}
