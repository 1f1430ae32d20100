//! Trains a student on a synthetic teacher scene and reports held-out metrics.
//!
//! `cargo run --release -p splat-core --example teacher_student -- [iterations] [densify_until_iter] [out.ply]`

use std::time::Instant;

use splat_core::synthetic::{build, SyntheticSpec};
use splat_core::train::{split_dataset, train_with, TrainEvent};
use splat_core::TrainConfig;

fn main() -> splat_core::Result<()> {
    let iterations = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5000);
    let scene = build(&SyntheticSpec::default())?;
    let (train, test) = split_dataset(&scene.views, 6)?;
    let densify_until_iter = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(iterations / 2);
    let cfg = TrainConfig { iterations, densify_until_iter, eval_interval: 500, ..TrainConfig::default() };
    let start = Instant::now();
    let (model, log) = train_with(&train, &test, &scene.init, &cfg, &(&cfg).into(), |e| {
        match e {
            TrainEvent::Eval(r) => println!(
                "iter {:5}  test PSNR {:.3}  SSIM {:.4}  ({:.1}s)",
                r.iteration,
                r.test_psnr,
                r.test_ssim,
                start.elapsed().as_secs_f64()
            ),
            TrainEvent::Densify(it, r) if it % 500 == 0 => println!("iter {it:5}  {r:?}"),
            _ => {}
        }
        Ok(())
    })?;
    let last = log.iterations.last().map(|r| r.loss).unwrap_or(f64::NAN);
    if let Some(out) = std::env::args().nth(3) {
        splat_core::io::save_gaussians_ply(out.as_ref(), &model, splat_core::io::PlyScalar::F64)?;
    }
    println!("{} Gaussians, final train loss {last:.5}, {:.1}s", model.len(), start.elapsed().as_secs_f64());
    Ok(())
}
