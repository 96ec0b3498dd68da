mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use gsplan_core::benchmark::{self, BenchOptions};
use gsplan_core::locgeo::io::{parse_correspondences_2d3d, parse_correspondences_3d3d, parse_intrinsics};
use gsplan_core::locgeo::{self, LocError, LmSettings, Pose};
use gsplan_core::oracle::trajectory_clearance;
use gsplan_core::planner::{PlanError, Planner};
use gsplan_core::scene::{write_ply, Scene};
use gsplan_core::spline::{SplineError, Trajectory};
use gsplan_core::voxgrid::{build_grid, inflate_by, VoxError};
use gsplan_core::{synth, Aabb, GeometryError, Mat3, SceneError, SphereBody, Vec3};

use config::{parse_vec3, PlanArgs, Resolved};

/// Malformed input: bad flags, config keys or file contents.
#[derive(Debug)]
pub struct SchemaError(pub String);

impl std::fmt::Display for SchemaError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for SchemaError {}

/// The trajectory failed the clearance check.
#[derive(Debug)]
struct Violations(usize);

impl std::fmt::Display for Violations {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} clearance violations", self.0)
    }
}

impl std::error::Error for Violations {}

mod exit {
    pub const FAILURE: u8 = 1;
    pub const BLOCKED: u8 = 2;
    pub const DISCONNECTED: u8 = 3;
    pub const CORRIDOR: u8 = 4;
    pub const QP: u8 = 5;
    pub const ESTIMATION: u8 = 6;
    pub const IO: u8 = 10;
    pub const SCHEMA: u8 = 11;
}

#[derive(Parser)]
#[command(name = "gsplan", version, about = "Safe trajectory planning and localization in Gaussian-splat maps")]
struct Cli {
    /// More log output (repeat for debug)
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan a trajectory between two points
    Plan(PlanCmd),
    /// Verify a trajectory against a scene
    Check(CheckCmd),
    /// Plan between antipodal points on a circle and report per-trial metrics
    Bench(BenchCmd),
    /// Rasterize a scene into an occupancy grid
    Voxelize(VoxelizeCmd),
    /// Refine a camera pose from 2D-3D correspondences
    Pnp(PnpCmd),
    /// Estimate the rigid transform between matched 3D points
    Register(RegisterCmd),
    /// Write a generated test scene
    GenScene(GenSceneCmd),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct PlanCmd {
    #[command(flatten)]
    args: PlanArgs,
    #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
    start: Option<[f64; 3]>,
    #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
    goal: Option<[f64; 3]>,
    /// Directory for trajectory, corridor and stats files
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Sample spacing in seconds for CSV output
    #[arg(long, default_value_t = 0.05)]
    dt: f64,
    /// Report wall-clock times (they are zero otherwise)
    #[arg(long)]
    timings: bool,
}

#[derive(Args)]
struct CheckCmd {
    #[command(flatten)]
    args: PlanArgs,
    /// Trajectory JSON written by `plan`
    #[arg(long)]
    trajectory: PathBuf,
    /// Samples per trajectory piece
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    /// Also write the report here
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchCmd {
    #[command(flatten)]
    args: PlanArgs,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Oracle samples per trajectory piece
    #[arg(long, default_value_t = 100)]
    samples: usize,
    #[arg(long)]
    timings: bool,
    /// CSV destination; stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VoxelizeCmd {
    #[command(flatten)]
    args: PlanArgs,
    /// Grid file to write
    #[arg(long)]
    out: PathBuf,
    /// Write the grid inflated by the robot radius plus half a cell diagonal
    #[arg(long)]
    inflated: bool,
}

#[derive(Args)]
struct PnpCmd {
    /// Correspondences: CSV `u,v,X,Y,Z` or JSON `[{pixel, point}]`
    #[arg(long)]
    corrs: PathBuf,
    /// Intrinsics JSON `{fx, fy, cx, cy, width, height}`
    #[arg(long)]
    intrinsics: PathBuf,
    /// Initial pose JSON `{rot: [[..], [..], [..]], trans: [..]}`; identity when absent
    #[arg(long)]
    init: Option<PathBuf>,
    /// Run RANSAC with this inlier threshold in pixels
    #[arg(long)]
    ransac_threshold: Option<f64>,
    #[arg(long, default_value_t = 200)]
    ransac_iters: usize,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct RegisterCmd {
    /// Matches: CSV `pX,pY,pZ,qX,qY,qZ` or JSON `[{p, q}]`
    #[arg(long)]
    corrs: PathBuf,
    /// Run RANSAC with this inlier distance
    #[arg(long)]
    ransac_threshold: Option<f64>,
    /// Edge-length agreement required of RANSAC samples
    #[arg(long, default_value_t = 0.9)]
    edge_ratio: f64,
    #[arg(long, default_value_t = 1000)]
    ransac_iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum SceneKind {
    Cluttered,
    Maze,
    Empty,
}

#[derive(Args)]
struct GenSceneCmd {
    #[arg(long, value_enum)]
    kind: SceneKind,
    /// Number of Gaussians
    #[arg(long, default_value_t = 10_000)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `.json` keeps the domain bounds; `.ply` stores raw Gaussians
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(exit::SCHEMA) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Plan(c) => cmd_plan(c),
        Command::Check(c) => cmd_check(c),
        Command::Bench(c) => cmd_bench(c),
        Command::Voxelize(c) => cmd_voxelize(c),
        Command::Pnp(c) => cmd_pnp(c),
        Command::Register(c) => cmd_register(c),
        Command::GenScene(c) => cmd_gen_scene(c),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<SchemaError>() || cause.is::<serde_json::Error>() || cause.is::<GeometryError>() {
            return exit::SCHEMA;
        }
        if cause.is::<Violations>() {
            return exit::FAILURE;
        }
        if cause.is::<std::io::Error>() {
            return exit::IO;
        }
        if let Some(e) = cause.downcast_ref::<PlanError>() {
            return match e {
                PlanError::OutOfBounds(_) | PlanError::BlockedEndpoint(_) => exit::BLOCKED,
                PlanError::Disconnected => exit::DISCONNECTED,
                PlanError::Corridor(_) => exit::CORRIDOR,
                PlanError::Spline(_) => exit::QP,
                PlanError::Config(_) | PlanError::Geometry(_) => exit::SCHEMA,
            };
        }
        if let Some(e) = cause.downcast_ref::<SceneError>() {
            return match e {
                SceneError::Io(_) => exit::IO,
                _ => exit::SCHEMA,
            };
        }
        if let Some(e) = cause.downcast_ref::<VoxError>() {
            return match e {
                VoxError::Io(_) => exit::IO,
                VoxError::OutOfBounds(_) | VoxError::BlockedEndpoint(_) => exit::BLOCKED,
                VoxError::Disconnected => exit::DISCONNECTED,
                VoxError::Config(_) | VoxError::Format(_) => exit::SCHEMA,
            };
        }
        if let Some(e) = cause.downcast_ref::<LocError>() {
            return match e {
                LocError::Format(_) | LocError::Domain(_) => exit::SCHEMA,
                _ => exit::ESTIMATION,
            };
        }
        if cause.is::<SplineError>() {
            return exit::SCHEMA;
        }
    }
    exit::FAILURE
}

fn load_scene(r: &Resolved) -> Result<Scene> {
    let scene = Scene::load(&r.scene, &r.scene_options).with_context(|| format!("loading scene {}", r.scene.display()))?;
    log::info!("scene {}: {} ellipsoids", r.scene.display(), scene.len());
    Ok(scene)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("JSON values serialize") + "\n"
}

fn cmd_plan(c: PlanCmd) -> Result<()> {
    let r = c.args.resolve(c.start, c.goal)?;
    let (Some(start), Some(goal)) = (r.start, r.goal) else {
        bail!(SchemaError("plan needs --start and --goal (or `start`/`goal` in the config)".into()));
    };
    let scene = load_scene(&r)?;
    let t = Instant::now();
    let planner = Planner::new(&scene, r.planner)?;
    let plan = planner.plan(&start, &goal)?;
    let total = t.elapsed().as_secs_f64();
    let s = &plan.stats;
    log::info!(
        "planned {} polytopes in {:.3}s (grid {:.3}s, seed {:.3}s, corridor {:.3}s, qp {:.3}s)",
        s.polytopes,
        total,
        planner.grid_time(),
        s.t_seed,
        s.t_corridor,
        s.t_qp
    );
    if plan.trajectory.fallback {
        log::warn!("QP failed; returning the corridor polyline");
    }
    let time = |v: f64| if c.timings { v } else { 0.0 };
    let stats = json!({
        "status": if plan.trajectory.fallback { "fallback" } else { "ok" },
        "seed_length": s.seed_length,
        "grid_waypoints": s.grid_waypoints,
        "seed_waypoints": s.seed_waypoints,
        "P": s.polytopes,
        "facets": s.facets,
        "reseeds": s.reseeds,
        "qp_iterations": s.qp_iterations,
        "duration": plan.trajectory.total_duration(),
        "path_length": benchmark::path_length(&plan.trajectory, 100),
        "t_grid": time(planner.grid_time()),
        "t_seed": time(s.t_seed),
        "t_corridor": time(s.t_corridor),
        "t_qp": time(s.t_qp),
        "t_total": time(total),
    });
    if let Some(dir) = &c.out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        match c.format {
            Format::Json => write_text(&dir.join("trajectory.json"), &pretty(&plan.trajectory.to_json()))?,
            Format::Csv => {
                let mut buf = Vec::new();
                plan.trajectory.write_csv(&mut buf, c.dt)?;
                fs::write(dir.join("trajectory.csv"), buf).context("writing trajectory.csv")?;
            }
        }
        write_text(&dir.join("corridor.json"), &pretty(&plan.corridor.to_json()))?;
        write_text(&dir.join("stats.json"), &pretty(&stats))?;
    }
    print!("{}", pretty(&stats));
    Ok(())
}

fn cmd_check(c: CheckCmd) -> Result<()> {
    let r = c.args.resolve(None, None)?;
    let scene = load_scene(&r)?;
    let text = read_text(&c.trajectory)?;
    let value: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", c.trajectory.display()))?;
    let traj = Trajectory::from_json(&value).with_context(|| format!("reading {}", c.trajectory.display()))?;
    let body = SphereBody::new(r.planner.kappa)?;
    let report = trajectory_clearance(&traj, &scene, &body, c.samples);
    let out = pretty(&report.to_json());
    if let Some(path) = &c.out {
        write_text(path, &out)?;
    }
    print!("{out}");
    if !report.is_clear() {
        return Err(Violations(report.violations.len()).into());
    }
    Ok(())
}

fn cmd_bench(c: BenchCmd) -> Result<()> {
    if c.trials == 0 {
        bail!(SchemaError("--trials must be at least 1".into()));
    }
    let r = c.args.resolve(None, None)?;
    let scene = load_scene(&r)?;
    let planner = Planner::new(&scene, r.planner)?;
    let opts = BenchOptions {
        trials: c.trials,
        seed: r.seed,
        samples_per_piece: c.samples,
        timings: c.timings,
    };
    let rows = benchmark::run_bench(&planner, &opts);
    let ok = rows.iter().filter(|r| r.success).count();
    log::info!("{ok}/{} trials succeeded", rows.len());
    let mut buf = Vec::new();
    benchmark::write_csv(&mut buf, &rows)?;
    match &c.out {
        Some(path) => fs::write(path, buf).with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout().write_all(&buf)?,
    }
    Ok(())
}

fn cmd_voxelize(c: VoxelizeCmd) -> Result<()> {
    let r = c.args.resolve(None, None)?;
    let scene = load_scene(&r)?;
    let t = Instant::now();
    let raw = build_grid(&scene, &scene.bounds(), r.planner.dims)?;
    let grid = if c.inflated {
        inflate_by(&raw, r.planner.kappa + raw.half_diagonal())
    } else {
        raw.clone()
    };
    log::info!("voxelized in {:.3}s", t.elapsed().as_secs_f64());
    grid.save(&c.out).with_context(|| format!("writing {}", c.out.display()))?;
    let b = grid.bounds();
    let summary = json!({
        "dims": grid.dims(),
        "origin": [b.min.x, b.min.y, b.min.z],
        "cell": [grid.cell().x, grid.cell().y, grid.cell().z],
        "occupied": raw.occupied_count(),
        "occupied_inflated": if c.inflated { json!(grid.occupied_count()) } else { Value::Null },
        "cells": grid.len(),
    });
    print!("{}", pretty(&summary));
    Ok(())
}

fn pose_json(pose: &Pose) -> Value {
    let rows: Vec<[f64; 3]> = (0..3).map(|i| [pose.rot[(i, 0)], pose.rot[(i, 1)], pose.rot[(i, 2)]]).collect();
    json!({ "rot": rows, "trans": [pose.trans.x, pose.trans.y, pose.trans.z] })
}

fn parse_pose(text: &str) -> Result<Pose> {
    #[derive(serde::Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Doc {
        rot: [[f64; 3]; 3],
        trans: [f64; 3],
    }
    let doc: Doc = serde_json::from_str(text)?;
    let rot = Mat3::from_fn(|i, j| doc.rot[i][j]);
    Ok(Pose::new(rot, Vec3::from(doc.trans))?)
}

fn inlier_count(mask: &[bool]) -> usize {
    mask.iter().filter(|m| **m).count()
}

fn cmd_pnp(c: PnpCmd) -> Result<()> {
    let corrs = parse_correspondences_2d3d(&read_text(&c.corrs)?)?;
    let intr = parse_intrinsics(&read_text(&c.intrinsics)?)?;
    let init = match &c.init {
        Some(p) => parse_pose(&read_text(p)?).with_context(|| format!("reading pose {}", p.display()))?,
        None => Pose::identity(),
    };
    let (pose, inliers) = match c.ransac_threshold {
        Some(th) => {
            let (pose, mask) = locgeo::pnp_ransac(&corrs, &intr, &init, th, c.ransac_iters, c.seed)?;
            (pose, inlier_count(&mask))
        }
        None => (locgeo::pnp_refine(&corrs, &intr, &init, c.max_iter, c.tol)?, corrs.len()),
    };
    let settings = LmSettings {
        max_iter: 0,
        ..Default::default()
    };
    let fit = locgeo::pnp_refine_detailed(&corrs, &intr, &pose, &settings)?;
    let out = json!({
        "pose": pose_json(&pose),
        "inliers": inliers,
        "correspondences": corrs.len(),
        "cost": fit.cost,
    });
    print!("{}", pretty(&out));
    Ok(())
}

fn cmd_register(c: RegisterCmd) -> Result<()> {
    let corrs = parse_correspondences_3d3d(&read_text(&c.corrs)?)?;
    let (pose, inliers) = match c.ransac_threshold {
        Some(th) => {
            let (pose, mask) = locgeo::register_ransac(&corrs, th, c.edge_ratio, c.ransac_iters, c.seed)?;
            (pose, inlier_count(&mask))
        }
        None => (locgeo::umeyama(&corrs)?, corrs.len()),
    };
    let rms = (corrs.iter().map(|m| (m.p - pose.apply(&m.q)).norm_squared()).sum::<f64>() / corrs.len() as f64).sqrt();
    let out = json!({
        "pose": pose_json(&pose),
        "inliers": inliers,
        "correspondences": corrs.len(),
        "rms": rms,
    });
    print!("{}", pretty(&out));
    Ok(())
}

fn cmd_gen_scene(c: GenSceneCmd) -> Result<()> {
    let ply = c.out.extension().is_some_and(|e| e.eq_ignore_ascii_case("ply"));
    let (records, scene) = match c.kind {
        SceneKind::Cluttered => {
            let f = synth::cluttered(c.seed, c.count)?;
            (f.records, f.scene)
        }
        SceneKind::Maze => {
            let f = synth::maze(c.seed, c.count)?.fixture;
            (f.records, f.scene)
        }
        SceneKind::Empty => {
            let h = synth::CLUTTER_HALF_WIDTH;
            let domain = Aabb::new(Vec3::new(-h, -h, 0.0), Vec3::new(h, h, synth::CLUTTER_HEIGHT));
            (Vec::new(), Scene::with_bounds(Vec::new(), gsplan_core::scene::DEFAULT_GAMMA, domain))
        }
    };
    if ply {
        if records.is_empty() {
            bail!(SchemaError("an empty scene can only be written as JSON".into()));
        }
        write_ply(&c.out, &records).with_context(|| format!("writing {}", c.out.display()))?;
    } else {
        write_text(&c.out, &scene.to_json_string())?;
    }
    let b = scene.bounds();
    print!(
        "{}",
        pretty(&json!({
            "gaussians": records.len(),
            "ellipsoids": scene.len(),
            "bounds": { "min": [b.min.x, b.min.y, b.min.z], "max": [b.max.x, b.max.y, b.max.z] },
        }))
    );
    Ok(())
}
