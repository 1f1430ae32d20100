//! `splat`: train, render and evaluate Gaussian splatting models, and compare
//! point clouds.
//!
//! Lines meant for machines are printed to stdout as `key=value`; logs go to
//! stderr.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use nalgebra::Vector3;
use splat_core::geometry::{
    crop_aabb, estimate_normals, extract_point_cloud, icp_register, CloudComparison, IcpOptions,
};
use splat_core::io::{self, PlyScalar};
use splat_core::metrics::{psnr, ssim};
use splat_core::raster::{render, RenderSettings};
use splat_core::synthetic::{self, SyntheticSpec};
use splat_core::train::{split_dataset, train_with, TrainEvent};
use splat_core::{PointCloud, TrainConfig};

#[derive(Parser)]
#[command(name = "splat", version, about = "CPU 3D Gaussian splatting and point-cloud evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on a COLMAP scene directory.
    Train {
        #[arg(long)]
        scene: PathBuf,
        /// Flat `key = value` file of training options; defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        downsample: u32,
        /// Store checkpoints as 32-bit floats instead of doubles.
        #[arg(long)]
        f32: bool,
    },
    /// Render a model from a scene camera or a pose file.
    Render {
        #[arg(long)]
        model: PathBuf,
        /// COLMAP image id; requires --scene.
        #[arg(long, conflicts_with = "pose", requires = "scene")]
        camera_id: Option<String>,
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long, required_unless_present = "camera_id")]
        pose: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Background colour as r,g,b in [0, 1].
        #[arg(long, default_value = "0,0,0")]
        background: String,
    },
    /// PSNR/SSIM of a model on the held-out views of a scene.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, default_value_t = 8)]
        split_every: usize,
        #[arg(long, default_value_t = 1)]
        downsample: u32,
        #[arg(long, default_value = "0,0,0")]
        background: String,
    },
    /// Write the means of sufficiently opaque Gaussians as a point cloud.
    ExtractPc {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 0.005)]
        min_opacity: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Distances from a source to a reference point cloud.
    ComparePc {
        #[arg(long)]
        src: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        /// Crop both clouds to `xmin,ymin,zmin,xmax,ymax,zmax`.
        #[arg(long)]
        crop: Option<String>,
        /// Register the source to the reference before measuring.
        #[arg(long)]
        icp: bool,
        /// Neighbours used when the reference has no normals.
        #[arg(long, default_value_t = 10)]
        normals_k: usize,
    },
    /// Rigidly register a source point cloud to a reference with ICP.
    Register {
        #[arg(long)]
        src: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        out_transform: PathBuf,
        #[arg(long, default_value_t = 100)]
        max_iters: usize,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Write a synthetic scene (COLMAP model, images, teacher checkpoint).
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        gaussians: usize,
        #[arg(long, default_value_t = 36)]
        views: usize,
        #[arg(long, default_value_t = 128)]
        size: u32,
        #[arg(long, default_value_t = 500)]
        init_points: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

/// `key=value` with the value in a form matching `[-+0-9.eE]+`.
fn kv(key: &str, v: f64) {
    if v.is_infinite() {
        println!("{key}={}1e999", if v > 0.0 { "+" } else { "-" });
    } else {
        println!("{key}={v}");
    }
}

fn parse_floats<const N: usize>(s: &str, what: &str) -> Result<[f64; N]> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("{what}: {s:?} is not a comma-separated list of numbers"))?;
    parts.try_into().map_err(|p: Vec<f64>| anyhow::anyhow!("{what}: expected {N} numbers, got {}", p.len()))
}

fn settings(background: &str) -> Result<RenderSettings> {
    Ok(RenderSettings { background: parse_floats::<3>(background, "--background")?, ..RenderSettings::default() })
}

fn train_cmd(scene: &Path, config: Option<&Path>, out: &Path, downsample: u32, f32: bool) -> Result<()> {
    let cfg = match config {
        Some(p) => io::load_config(p)?,
        None => TrainConfig::default(),
    };
    let (views, init) = io::load_scene(scene, downsample)?;
    let (train, test) = split_dataset(&views, cfg.test_split_every)?;
    log::info!("{} train / {} test views, {} initial points", train.len(), test.len(), init.len());
    let ckpt_dir = out.join("checkpoints");
    std::fs::create_dir_all(&ckpt_dir).with_context(|| format!("creating {}", ckpt_dir.display()))?;
    io::write_config(&out.join("config.txt"), &cfg)?;
    let precision = if f32 { PlyScalar::F32 } else { PlyScalar::F64 };
    let log_path = out.join("metrics.log");
    let mut metrics = BufWriter::new(File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?);

    let (model, log) = train_with(&train, &test, &init, &cfg, &RenderSettings::from(&cfg), |event| {
        let line = match event {
            TrainEvent::Iteration(r) if r.iteration % 100 == 0 => format!(
                "iteration={} loss={} train_psnr={} num_gaussians={}",
                r.iteration, r.loss, r.train_psnr, r.num_gaussians
            ),
            TrainEvent::Eval(r) => {
                format!("iteration={} test_psnr={} test_ssim={}", r.iteration, r.test_psnr, r.test_ssim)
            }
            TrainEvent::Densify(it, r) => {
                format!("iteration={it} cloned={} split={} pruned={}", r.cloned, r.split, r.pruned)
            }
            TrainEvent::Checkpoint(it, m) => {
                io::save_gaussians_ply(&ckpt_dir.join(format!("iteration_{it}.ply")), m, precision)?;
                return Ok(());
            }
            _ => return Ok(()),
        };
        writeln!(metrics, "{line}")?;
        Ok(())
    })?;
    metrics.flush()?;
    io::save_gaussians_ply(&out.join("point_cloud.ply"), &model, precision)?;
    kv("num_gaussians", model.len() as f64);
    if let Some(r) = log.iterations.last() {
        kv("final_loss", r.loss);
    }
    if let Some(e) = log.evals.last() {
        kv("test_psnr_mean", e.test_psnr);
        kv("test_ssim_mean", e.test_ssim);
    }
    Ok(())
}

fn render_cmd(
    model: &Path,
    camera_id: Option<&str>,
    scene: Option<&Path>,
    pose: Option<&Path>,
    out: &Path,
    background: &str,
) -> Result<()> {
    let model = io::load_gaussians_ply(model)?;
    let cam = match (camera_id, scene, pose) {
        (Some(id), Some(dir), _) => {
            let bundle = io::load_colmap_sparse(dir)?;
            match bundle.cameras.into_iter().find(|c| c.image_id == id) {
                Some(c) => c,
                None => bail!("no image with id {id} in {}", dir.display()),
            }
        }
        (_, _, Some(p)) => io::read_pose(p)?,
        _ => bail!("either --camera-id with --scene, or --pose is required"),
    };
    let mut img = render(&model, &cam, &settings(background)?)?;
    img.clamp01();
    io::save_image(out, &img)?;
    Ok(())
}

fn eval_cmd(model: &Path, scene: &Path, split_every: usize, downsample: u32, background: &str) -> Result<()> {
    let model = io::load_gaussians_ply(model)?;
    let (views, _) = io::load_scene(scene, downsample)?;
    let (_, test) = split_dataset(&views, split_every)?;
    if test.is_empty() {
        bail!("scene has no views");
    }
    let s = settings(background)?;
    let (mut psum, mut ssum) = (0.0, 0.0);
    for (i, v) in test.iter().enumerate() {
        let mut img = render(&model, &v.camera, &s)?;
        img.clamp01();
        let (p, q) = (psnr(&img, &v.image, 1.0)?, ssim(&img, &v.image)?);
        kv("view_index", (i * split_every) as f64);
        kv("view_psnr", p);
        kv("view_ssim", q);
        psum += p;
        ssum += q;
    }
    let n = test.len() as f64;
    kv("test_psnr_mean", psum / n);
    kv("test_ssim_mean", ssum / n);
    kv("test_views", n);
    Ok(())
}

fn crop_both(src: PointCloud, reference: PointCloud, spec: &str) -> Result<(PointCloud, PointCloud)> {
    let [a, b, c, d, e, f] = parse_floats::<6>(spec, "--crop")?;
    let (lo, hi) = (Vector3::new(a, b, c), Vector3::new(d, e, f));
    Ok((crop_aabb(&src, &lo, &hi)?, crop_aabb(&reference, &lo, &hi)?))
}

fn compare_cmd(src: &Path, reference: &Path, crop: Option<&str>, icp: bool, normals_k: usize) -> Result<()> {
    let (mut src, mut reference) = (io::load_point_cloud_ply(src)?, io::load_point_cloud_ply(reference)?);
    if let Some(spec) = crop {
        (src, reference) = crop_both(src, reference, spec)?;
    }
    if icp {
        let r = icp_register(&src, &reference, &IcpOptions::default())?;
        log::info!("ICP: {} iterations, RMSE {:?}", r.iterations, r.rmse_history.last());
        src = r.transform.apply_cloud(&src);
    }
    if reference.normals.is_none() {
        let est = estimate_normals(&reference, normals_k)?;
        reference = est.cloud;
    }
    let m = CloudComparison::compute(&src, &reference)?;
    kv("d1_mse", m.d1_mse);
    kv("d2_mse", m.d2_mse);
    kv("hausdorff", m.hausdorff);
    kv("chamfer", m.chamfer);
    Ok(())
}

fn register_cmd(src: &Path, reference: &Path, out: &Path, max_iters: usize, tol: f64) -> Result<()> {
    let (src, reference) = (io::load_point_cloud_ply(src)?, io::load_point_cloud_ply(reference)?);
    let r = icp_register(&src, &reference, &IcpOptions { max_iters, tol, ..IcpOptions::default() })?;
    io::write_transform(out, &r.transform)?;
    kv("iterations", r.iterations as f64);
    kv("rmse_initial", r.rmse_history[0]);
    kv("rmse_final", *r.rmse_history.last().expect("history is never empty"));
    Ok(())
}

fn synth_cmd(out: &Path, spec: SyntheticSpec) -> Result<()> {
    let scene = synthetic::build(&spec)?;
    io::write_scene(out, &scene.views, &scene.init)?;
    io::save_gaussians_ply(&out.join("teacher.ply"), &scene.teacher, PlyScalar::F64)?;
    kv("views", scene.views.len() as f64);
    kv("init_points", scene.init.len() as f64);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { scene, config, out, downsample, f32 } => {
            train_cmd(&scene, config.as_deref(), &out, downsample, f32)
        }
        Command::Render { model, camera_id, scene, pose, out, background } => {
            render_cmd(&model, camera_id.as_deref(), scene.as_deref(), pose.as_deref(), &out, &background)
        }
        Command::Eval { model, scene, split_every, downsample, background } => {
            eval_cmd(&model, &scene, split_every, downsample, &background)
        }
        Command::ExtractPc { model, min_opacity, out } => {
            let model = io::load_gaussians_ply(&model)?;
            let pc = extract_point_cloud(&model, min_opacity);
            io::save_point_cloud_ply(&out, &pc)?;
            kv("points", pc.len() as f64);
            Ok(())
        }
        Command::ComparePc { src, reference, crop, icp, normals_k } => {
            compare_cmd(&src, &reference, crop.as_deref(), icp, normals_k)
        }
        Command::Register { src, reference, out_transform, max_iters, tol } => {
            register_cmd(&src, &reference, &out_transform, max_iters, tol)
        }
        Command::Synth { out, gaussians, views, size, init_points, seed } => {
            let spec = SyntheticSpec {
                num_gaussians: gaussians,
                num_views: views,
                width: size,
                height: size,
                focal: 200.0 * size as f64 / 128.0,
                init_points,
                seed,
                ..SyntheticSpec::default()
            };
            synth_cmd(&out, spec)
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
