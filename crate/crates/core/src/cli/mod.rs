//! Command-line front end.
//!
//! Every subcommand reads its inputs from flags, falling back to the JSON job
//! file given with `--config` for anything not set on the command line.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::bench::{
    accuracy, common_subset, enumerate_poses, read_detections_csv, read_poses_csv, records_from_detections,
    run_closed_loop, sample_pose_cloud, write_detections_csv, write_poses_csv, write_report, AccuracyReport,
    BenchSetup, DetectionRow, PoseRanges, DOF,
};
use crate::camera::{load_camera, CameraFile, CameraRig};
use crate::error::{Error, Result};
use crate::optics::build_kernel;
use crate::render::{render, MarkerSpec, Pose6D, RenderOptions, RenderedImage, Scene};
use crate::sampling::{halton_point, HaltonConfig, SobolTable};

#[derive(Debug, Parser)]
#[command(name = "fidray", version, about = "Synthetic fiducial-marker images and pose-accuracy benchmarks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render one marker pose to an image plus a JSON ground-truth sidecar.
    Render(JobArgs),
    /// Sample a pose cloud and render every pose.
    Cloud(JobArgs),
    /// Score detections against a pose cloud (built-in detector by default).
    Bench(JobArgs),
    /// Color overlay of two images: red where A is brighter, cyan where B is.
    Diff {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the first points of a low-discrepancy sequence as CSV.
    DumpSeq {
        #[arg(long, value_enum, default_value_t = Sequence::Sobol)]
        sequence: Sequence,
        #[arg(long, default_value_t = 256)]
        count: u32,
        #[arg(long, default_value_t = 2)]
        dims: usize,
        /// Digit permutation for Halton.
        #[arg(long, value_enum, default_value_t = Permutation::None)]
        permutation: Permutation,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the diffraction kernel of a camera as CSV.
    DumpKernel {
        #[arg(long)]
        camera: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Sequence {
    Sobol,
    Halton,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Permutation {
    None,
    Faure,
    Random,
}

#[derive(Debug, Clone, Default, Args)]
pub struct JobArgs {
    /// JSON job file; flags take precedence over its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Camera JSON file, or `logitech_c270` / `canon_rebel_xs`.
    #[arg(long)]
    pub camera: Option<String>,
    /// `square[:SIDE]`, `chessboard:RxC:SQUARE` or `IMAGE[@SIDE]` (mm).
    #[arg(long)]
    pub marker: Option<String>,
    /// `X,Y,Z,roll,pitch,yaw` in mm and degrees.
    #[arg(long, allow_hyphen_values = true)]
    pub pose: Option<String>,
    #[arg(long)]
    pub cloud_size: Option<usize>,
    /// e.g. `z=500:1500,roll=-45:45,pitch=-45:45,yaw=-180:180`.
    #[arg(long, allow_hyphen_values = true)]
    pub ranges: Option<String>,
    #[arg(long)]
    pub margin: Option<f64>,
    /// Output file (render) or directory (cloud, bench).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub spp_max: Option<u32>,
    /// Randomizes the Halton digit permutations of the pose cloud.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Existing pose-cloud CSV to use instead of sampling one.
    #[arg(long)]
    pub poses: Option<PathBuf>,
    /// Detection-results CSV; repeat to compare several detectors.
    #[arg(long)]
    pub detections: Vec<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
}

/// On-disk form of [`JobArgs`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JobConfig {
    pub camera: Option<String>,
    pub marker: Option<String>,
    pub pose: Option<String>,
    pub cloud_size: Option<usize>,
    pub ranges: Option<String>,
    pub margin: Option<f64>,
    pub out: Option<PathBuf>,
    pub spp_max: Option<u32>,
    pub seed: Option<u64>,
    pub poses: Option<PathBuf>,
    pub detections: Vec<PathBuf>,
    pub workers: Option<usize>,
}

impl JobConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
    }
}

impl JobArgs {
    /// Command-line values over config-file values.
    pub fn resolve(self) -> Result<JobConfig> {
        let file = match &self.config {
            Some(p) => JobConfig::load(p)?,
            None => JobConfig::default(),
        };
        Ok(JobConfig {
            camera: self.camera.or(file.camera),
            marker: self.marker.or(file.marker),
            pose: self.pose.or(file.pose),
            cloud_size: self.cloud_size.or(file.cloud_size),
            ranges: self.ranges.or(file.ranges),
            margin: self.margin.or(file.margin),
            out: self.out.or(file.out),
            spp_max: self.spp_max.or(file.spp_max),
            seed: self.seed.or(file.seed),
            poses: self.poses.or(file.poses),
            detections: if self.detections.is_empty() { file.detections } else { self.detections },
            workers: self.workers.or(file.workers),
        })
    }
}

pub const DEFAULT_CLOUD_SIZE: usize = 200;

impl JobConfig {
    pub fn rig(&self) -> Result<CameraRig> {
        resolve_camera(self.camera.as_deref())
    }

    pub fn marker(&self) -> Result<MarkerSpec> {
        MarkerSpec::from_spec(self.marker.as_deref().unwrap_or("square"), None)
    }

    pub fn render_options(&self) -> RenderOptions {
        RenderOptions {
            spp_max: self.spp_max,
            workers: self.workers,
            ..RenderOptions::default()
        }
    }

    pub fn ranges(&self) -> Result<PoseRanges> {
        let mut r = match &self.ranges {
            Some(s) => PoseRanges::parse(s)?,
            None => PoseRanges::default(),
        };
        if let Some(m) = self.margin {
            r.margin = m;
        }
        r.validate()?;
        Ok(r)
    }

    /// Poses from `poses` if given, otherwise a freshly sampled cloud.
    pub fn pose_cloud(&self, rig: &CameraRig, marker: &MarkerSpec) -> Result<Vec<(u64, Pose6D)>> {
        match &self.poses {
            Some(p) => read_poses_csv(p),
            None => {
                let n = self.cloud_size.unwrap_or(DEFAULT_CLOUD_SIZE);
                let poses = sample_pose_cloud(n, &self.ranges()?, rig, marker, self.seed)?;
                Ok(enumerate_poses(&poses))
            }
        }
    }

    fn out(&self, what: &str) -> Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| Error::Config(format!("--out is required for {what}")))
    }
}

fn resolve_camera(spec: Option<&str>) -> Result<CameraRig> {
    match spec {
        None | Some("logitech_c270") => Ok(CameraRig::logitech_c270()),
        Some("canon_rebel_xs") => Ok(CameraRig::canon_rebel_xs()),
        Some(path) => load_camera(path),
    }
}

/// Ground truth written next to every rendered image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub image: String,
    pub pose: Pose6D,
    pub marker: String,
    pub marker_side_mm: f64,
    pub camera: CameraFile,
    pub camera_hash: String,
    pub scene_hash: String,
    pub width: u32,
    pub height: u32,
    pub bit_depth: u8,
    pub spp: u32,
    pub refined_pixels: usize,
    pub rays_traced: u64,
    /// Projected outer corners (TL, TR, BR, BL) in pixels.
    pub corners_px: [[f64; 2]; 4],
}

fn sidecar_path(image: &Path) -> PathBuf {
    image.with_extension("json")
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::parse(path, e))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn render_with_sidecar(
    scene: &Scene,
    options: &RenderOptions,
    marker_spec: &str,
    out: &Path,
) -> Result<RenderedImage> {
    let image = render(scene, options)?;
    image.write(out)?;
    let sidecar = Sidecar {
        image: out.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
        pose: *scene.pose(),
        marker: marker_spec.to_string(),
        marker_side_mm: scene.marker().side_mm,
        camera: CameraFile::from_rig(scene.rig()),
        camera_hash: scene.rig().hash(),
        scene_hash: image.metadata.scene_hash.clone(),
        width: image.width,
        height: image.height,
        bit_depth: image.bit_depth,
        spp: image.metadata.spp,
        refined_pixels: image.metadata.refined_pixels,
        rays_traced: image.metadata.rays_traced,
        corners_px: scene.projected_corners()?,
    };
    write_json(&sidecar_path(out), &sidecar)?;
    Ok(image)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn cmd_render(job: &JobConfig) -> Result<String> {
    let rig = job.rig()?;
    let marker = job.marker()?;
    let pose = Pose6D::parse(
        job.pose
            .as_deref()
            .ok_or_else(|| Error::Config("--pose is required for render".into()))?,
    )?;
    let out = job.out("render")?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let scene = Scene::new(rig, marker, pose)?;
    let spec = job.marker.clone().unwrap_or_else(|| "square".into());
    let image = render_with_sidecar(&scene, &job.render_options(), &spec, out)?;
    Ok(format!(
        "wrote {} ({}x{}, {} bit, {} refined pixels)\n",
        out.display(),
        image.width,
        image.height,
        image.bit_depth,
        image.metadata.refined_pixels
    ))
}

pub fn cmd_cloud(job: &JobConfig) -> Result<String> {
    let rig = job.rig()?;
    let marker = job.marker()?;
    let dir = job.out("cloud")?;
    create_dir(dir)?;
    let poses = job.pose_cloud(&rig, &marker)?;
    let spec = job.marker.clone().unwrap_or_else(|| "square".into());
    let options = job.render_options();
    for &(id, pose) in &poses {
        let scene = Scene::new(rig.clone(), marker.clone(), pose)?;
        render_with_sidecar(&scene, &options, &spec, &dir.join(image_name(id)))?;
    }
    write_json(&dir.join("camera.json"), &CameraFile::from_rig(&rig))?;
    let plain: Vec<Pose6D> = poses.iter().map(|p| p.1).collect();
    if poses.iter().enumerate().all(|(i, p)| p.0 == i as u64) {
        write_poses_csv(dir.join("poses.csv"), &plain)?;
    } else {
        return Err(Error::Input("pose ids must be 0..n to write a cloud".into()));
    }
    Ok(format!("wrote {} images and poses.csv to {}\n", poses.len(), dir.display()))
}

/// Image file name for a pose id.
pub fn image_name(pose_id: u64) -> String {
    format!("pose_{pose_id:05}.png")
}

pub fn cmd_bench(job: &JobConfig) -> Result<String> {
    let rig = job.rig()?;
    let marker = job.marker()?;
    let dir = job.out("bench")?;
    create_dir(dir)?;
    let poses = job.pose_cloud(&rig, &marker)?;
    let mut text = String::new();

    if job.detections.is_empty() {
        let mut setup = BenchSetup::new(rig, marker);
        setup.render = job.render_options();
        let records = run_closed_loop(&setup, &poses)?;
        let report = accuracy(&records)?;
        write_report(dir, &records, &report)?;
        let rows: Vec<DetectionRow> = records
            .iter()
            .map(|r| DetectionRow {
                pose_id: r.pose_id,
                estimate: r.estimate,
            })
            .collect();
        write_detections_csv(dir.join("detections.csv"), &rows)?;
        text.push_str(&report.summary());
        return Ok(text);
    }

    let mut sets = Vec::with_capacity(job.detections.len());
    for path in &job.detections {
        let rows = read_detections_csv(path)?;
        sets.push(records_from_detections(&poses, &rows)?);
    }
    if sets.len() == 1 {
        let report = accuracy(&sets[0])?;
        write_report(dir, &sets[0], &report)?;
        text.push_str(&report.summary());
        return Ok(text);
    }

    let subset = common_subset(&sets)?;
    let _ = writeln!(
        text,
        "common subset: {} of {} poses detected by all {} sets",
        subset.pose_ids.len(),
        poses.len(),
        sets.len()
    );
    if subset.is_empty() {
        text.push_str("warning: no pose was detected by every set\n");
        return Ok(text);
    }
    let mut reports: Vec<AccuracyReport> = Vec::with_capacity(sets.len());
    for (i, set) in subset.sets.iter().enumerate() {
        let report = accuracy(set)?;
        write_report(dir.join(format!("set{i}")), set, &report)?;
        reports.push(report);
    }
    let mut table = String::from("set,source,detection_rate");
    for d in DOF {
        let _ = write!(table, ",A_{d}");
    }
    table.push('\n');
    for (i, (report, path)) in reports.iter().zip(&job.detections).enumerate() {
        let full_rate = accuracy(&sets[i]).map(|r| r.detection_rate).unwrap_or(0.0);
        let _ = write!(table, "{i},{},{full_rate}", path.display());
        for a in report.accuracy {
            let _ = write!(table, ",{a}");
        }
        table.push('\n');
    }
    let p = dir.join("comparison.csv");
    std::fs::write(&p, &table).map_err(|e| Error::io(p, e))?;
    text.push_str(&table);
    Ok(text)
}

pub fn cmd_diff(a: &Path, b: &Path, out: &Path) -> Result<String> {
    let ia = RenderedImage::read(a, None)?;
    let ib = RenderedImage::read(b, None)?;
    let diff = crate::bench::overlay_diff(&ia, &ib)?;
    diff.write_png(out)?;
    Ok(format!("wrote {}\n", out.display()))
}

pub fn cmd_dump_seq(
    sequence: Sequence,
    count: u32,
    dims: usize,
    permutation: Permutation,
    seed: Option<u64>,
) -> Result<String> {
    if dims == 0 {
        return Err(Error::Input("--dims must be at least 1".into()));
    }
    let mut out = String::from("index");
    for d in 0..dims {
        let _ = write!(out, ",d{d}");
    }
    out.push('\n');
    let row = |out: &mut String, i: u32, values: &[f64]| {
        let _ = write!(out, "{i}");
        for v in values {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    };
    match sequence {
        Sequence::Sobol => {
            if permutation != Permutation::None {
                return Err(Error::Input("permutations apply to Halton only".into()));
            }
            let table = SobolTable::new(dims)?;
            for i in 0..count {
                let v: Vec<f64> = (0..dims).map(|d| table.sample(i, d)).collect();
                row(&mut out, i, &v);
            }
        }
        Sequence::Halton => {
            let config = match permutation {
                Permutation::None => HaltonConfig::new(dims),
                Permutation::Faure => HaltonConfig::faure(dims),
                Permutation::Random => HaltonConfig::random(dims, seed.unwrap_or(0)),
            };
            config.validate()?;
            for i in 0..count {
                row(&mut out, i, &halton_point(i as u64, &config));
            }
        }
    }
    Ok(out)
}

pub fn cmd_dump_kernel(camera: Option<&str>, out: Option<&Path>) -> Result<String> {
    let kernel = build_kernel(&resolve_camera(camera)?)?;
    let csv = kernel.to_csv();
    match out {
        Some(p) => {
            std::fs::write(p, &csv).map_err(|e| Error::io(p, e))?;
            Ok(format!(
                "wrote {}x{} kernel to {}\n",
                kernel.side(),
                kernel.side(),
                p.display()
            ))
        }
        None => Ok(csv),
    }
}

pub fn execute(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Render(args) => cmd_render(&args.resolve()?),
        Command::Cloud(args) => cmd_cloud(&args.resolve()?),
        Command::Bench(args) => cmd_bench(&args.resolve()?),
        Command::Diff { a, b, out } => cmd_diff(&a, &b, &out),
        Command::DumpSeq {
            sequence,
            count,
            dims,
            permutation,
            seed,
        } => cmd_dump_seq(sequence, count, dims, permutation, seed),
        Command::DumpKernel { camera, out } => cmd_dump_kernel(camera.as_deref(), out.as_deref()),
    }
}

/// Parses `args`, runs the command and returns the process exit code:
/// 0 success, 1 validation, 2 IO, 3 internal.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
