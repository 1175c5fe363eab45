use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;
use skyloop_core::eval::{evaluate, sample_mesh};
use skyloop_core::pipeline::{read_batch, replay, run_closed_loop, write_batch, LoopConfig};
use skyloop_core::planner::plan;
use skyloop_core::quality::{fuse_quality, read_quality_csv};
use skyloop_core::simulator::generate_scene_with;
use skyloop_core::surface::SurfaceMesh;
use skyloop_core::{Error, Point3, Result};

#[derive(Parser)]
#[command(
    name = "skyloop",
    version,
    about = "Online mesh reconstruction, quality assessment and view planning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the closed loop on a synthetic scene and write every artifact.
    Run {
        /// key = value configuration file; omitted keys take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        scene_seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-run reconstruction and planning over recorded batch files.
    Replay {
        /// Directory of batch files, processed in file-name order.
        #[arg(long)]
        batches: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write per-batch artifacts here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Precision, recall and F-score of a mesh against a reference.
    Eval {
        #[arg(long)]
        mesh: PathBuf,
        /// Reference PLY; faces are sampled, a bare vertex list is used as is.
        #[arg(long)]
        truth: PathBuf,
        /// Distance threshold in meters.
        #[arg(long)]
        d: f64,
        /// Samples per square meter when sampling meshes.
        #[arg(long, default_value_t = 10.0)]
        density: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Plan a trajectory for a mesh and its per-face quality.
    Plan {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        quality: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Start position `x,y,z`; defaults to above the mesh center.
        #[arg(long, value_parser = parse_point)]
        start: Option<Point3>,
        /// Trajectory JSON destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_point(s: &str) -> std::result::Result<Point3, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| e.to_string())?;
    match v.as_slice() {
        [x, y, z] if v.iter().all(|c| c.is_finite()) => Ok(Point3::new(*x, *y, *z)),
        _ => Err("expected three finite numbers x,y,z".into()),
    }
}

fn load_config(path: Option<&Path>) -> Result<LoopConfig> {
    path.map_or_else(|| Ok(LoopConfig::default()), LoopConfig::load)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn mkdir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn cmd_run(config: Option<&Path>, seed: u64, out: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    mkdir(out)?;
    write_file(&out.join("config.txt"), cfg.to_text().as_bytes())?;
    let scene = generate_scene_with(seed, &cfg.scene_params())?;
    scene.write_ply(&mut create(&out.join("scene.ply"))?)?;
    SurfaceMesh::new(scene.truth_samples.clone(), Vec::new())
        .write_ply(&mut create(&out.join("truth.ply"))?)?;

    let run = run_closed_loop(&cfg, seed)?;
    let batches = out.join("batches");
    mkdir(&batches)?;
    for b in &run.batches {
        write_batch(b, create(&batches.join(format!("batch_{:04}.txt", b.id)))?)?;
    }
    for (i, o) in run.outputs.iter().enumerate() {
        let dir = out.join(format!("iter_{}", i + 1));
        mkdir(&dir)?;
        let a = &o.artifacts;
        write_file(&dir.join("mesh.ply"), &a.mesh_ply)?;
        write_file(&dir.join("quality.csv"), &a.quality_csv)?;
        if let Some(t) = &a.trajectory_json {
            write_file(&dir.join("trajectory.json"), t)?;
        }
        write_file(&dir.join("quality_debug.ply"), &o.quality_ply)?;
        write_file(&dir.join("clusters.ply"), &o.clusters_ply)?;
    }
    run.report.write_json(create(&out.join("report.json"))?)?;
    skyloop_core::pipeline::write_timing_csv(&run.timing, create(&out.join("timing.csv"))?)?;
    for it in &run.report.iterations {
        info!(
            "iteration {}: {} faces, mean quality {:.4}, F {:.2}, {} viewpoints",
            it.iteration, it.mesh_faces, it.mean_q_total, it.eval.f_score, it.viewpoints
        );
    }
    info!(
        "stopped: {:?}, artifacts in {}",
        run.report.stop_reason,
        out.display()
    );
    Ok(())
}

fn cmd_replay(dir: &Path, config: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let cfg = load_config(config)?;
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::EmptyInput("batch directory"));
    }
    let batches = files
        .iter()
        .map(|f| read_batch(open(f)?))
        .collect::<Result<Vec<_>>>()?;
    let (state, artifacts) = replay(&cfg, &batches)?;
    if let Some(out) = out {
        for a in &artifacts {
            let d = out.join(format!("batch_{:04}", a.batch));
            mkdir(&d)?;
            write_file(&d.join("mesh.ply"), &a.mesh_ply)?;
            write_file(&d.join("quality.csv"), &a.quality_csv)?;
            if let Some(t) = &a.trajectory_json {
                write_file(&d.join("trajectory.json"), t)?;
            }
        }
        skyloop_core::pipeline::write_timing_csv(&state.timing, create(&out.join("timing.csv"))?)?;
    }
    info!(
        "replayed {} batches: {} faces, mean quality {:.4}",
        batches.len(),
        state.mesh.num_faces(),
        state.mean_quality()
    );
    Ok(())
}

/// Surface samples of a mesh, or its vertices when it has no faces.
fn points_of(mesh: &SurfaceMesh, density: f64, seed: u64) -> Vec<Point3> {
    if mesh.is_empty() {
        mesh.vertices.clone()
    } else {
        sample_mesh(mesh, density, seed)
    }
}

fn cmd_eval(mesh: &Path, truth: &Path, d: f64, density: f64, seed: u64) -> Result<()> {
    if !(d.is_finite() && d > 0.0) {
        return Err(Error::Config("--d must be a positive distance".into()));
    }
    if !(density.is_finite() && density > 0.0) {
        return Err(Error::Config("--density must be positive".into()));
    }
    let m = SurfaceMesh::read_ply(open(mesh)?)?;
    let t = SurfaceMesh::read_ply(open(truth)?)?;
    let report = evaluate(
        &points_of(&m, density, seed),
        &points_of(&t, density, seed),
        d,
    )?;
    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    report.write_json(&mut w)?;
    writeln!(w)?;
    Ok(())
}

fn cmd_plan(
    mesh: &Path,
    quality: &Path,
    config: Option<&Path>,
    start: Option<Point3>,
    out: Option<&Path>,
) -> Result<()> {
    let cfg = load_config(config)?;
    let mesh = SurfaceMesh::read_ply(open(mesh)?)?;
    let mut records = read_quality_csv(open(quality)?)?;
    if records.len() != mesh.num_faces() {
        return Err(Error::Ingestion(format!(
            "{} quality rows for {} faces",
            records.len(),
            mesh.num_faces()
        )));
    }
    if records
        .iter()
        .enumerate()
        .any(|(i, r)| r.face as usize != i)
    {
        return Err(Error::Ingestion(
            "quality rows must list faces in order".into(),
        ));
    }
    if records.iter().all(|r| r.q_total.is_none()) {
        fuse_quality(&mut records, &cfg.quality_weights());
    }
    let (lo, hi) = mesh.bbox().ok_or(Error::EmptyInput("mesh"))?;
    let diagonal = lo.distance(&hi);
    let start = start.unwrap_or_else(|| {
        let c = (lo + hi) / 2.0;
        Point3::new(c.x, c.y, hi.z + 0.5 * diagonal)
    });
    let result = plan(
        &mesh,
        &records,
        &[],
        &[start],
        start,
        diagonal,
        &cfg.planner_params(),
    );
    info!(
        "{} clusters, {} viewpoints, length {:.1} m",
        result.clusters.len(),
        result.selected.len(),
        result.total_length()
    );
    match out {
        Some(p) => result.write_trajectory_json(create(p)?)?,
        None => {
            let stdout = std::io::stdout();
            let mut w = stdout.lock();
            result.write_trajectory_json(&mut w)?;
            writeln!(w)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Run {
            config,
            scene_seed,
            out,
        } => cmd_run(config.as_deref(), *scene_seed, out),
        Command::Replay {
            batches,
            config,
            out,
        } => cmd_replay(batches, config.as_deref(), out.as_deref()),
        Command::Eval {
            mesh,
            truth,
            d,
            density,
            seed,
        } => cmd_eval(mesh, truth, *d, *density, *seed),
        Command::Plan {
            mesh,
            quality,
            config,
            start,
            out,
        } => cmd_plan(mesh, quality, config.as_deref(), *start, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
