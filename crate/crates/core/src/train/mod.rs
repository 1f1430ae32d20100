//! Optimisation of a [`GaussianModel`] against posed images.

mod densify;
mod loss;
mod optim;

pub use densify::{densify_and_prune, reset_opacity, DensifyReport, OPACITY_RESET_VALUE, SPLIT_CHILDREN};
pub use loss::compute_loss;
pub use optim::{position_lr, LearningRates, OptimizerState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS, OPACITY_PARAM};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::metrics::{psnr, ssim};
use crate::model::{Camera, GaussianModel, ImageBuffer, PointCloud};
use crate::raster::{render, render_backward, render_forward, RenderSettings, ViewspaceStats};

/// A posed ground-truth image.
#[derive(Clone, Debug, PartialEq)]
pub struct View {
    pub camera: Camera,
    pub image: ImageBuffer,
}

/// Splits `items` into `(train, test)`: indices divisible by `every_k` are
/// held out, order is otherwise preserved.
pub fn split_dataset<T: Clone>(items: &[T], every_k: usize) -> Result<(Vec<T>, Vec<T>)> {
    if every_k < 2 {
        return Err(Error::InvalidArgument(format!("test split needs every_k >= 2, got {every_k}")));
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (i, item) in items.iter().enumerate() {
        if i % every_k == 0 {
            test.push(item.clone());
        } else {
            train.push(item.clone());
        }
    }
    if train.is_empty() && !items.is_empty() {
        log::warn!("all {} images went to the test split; nothing to train on", items.len());
    }
    Ok((train, test))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub loss: f64,
    pub train_psnr: f64,
    pub num_gaussians: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalRecord {
    pub iteration: usize,
    pub test_psnr: f64,
    pub test_ssim: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub iterations: Vec<IterationRecord>,
    pub evals: Vec<EvalRecord>,
    pub densify: Vec<(usize, DensifyReport)>,
}

/// Progress notifications from [`train_with`]. Returning an error from the
/// callback aborts training with that error.
#[derive(Debug)]
pub enum TrainEvent<'a> {
    Iteration(&'a IterationRecord),
    Eval(&'a EvalRecord),
    Densify(usize, &'a DensifyReport),
    Checkpoint(usize, &'a GaussianModel),
}

/// Mean PSNR and SSIM of `model` over `views`, renders clamped to `[0, 1]`.
pub fn evaluate(model: &GaussianModel, views: &[View], settings: &RenderSettings) -> Result<(f64, f64)> {
    if views.is_empty() {
        return Err(Error::EmptyInput("evaluation views"));
    }
    let (mut p, mut s) = (0.0, 0.0);
    for v in views {
        let mut img = render(model, &v.camera, settings)?;
        img.clamp01();
        p += psnr(&img, &v.image, 1.0)?;
        s += ssim(&img, &v.image)?;
    }
    Ok((p / views.len() as f64, s / views.len() as f64))
}

/// Splits `dataset` with `cfg.test_split_every` and trains on the train part.
pub fn train(dataset: &[View], init: &PointCloud, cfg: &TrainConfig) -> Result<(GaussianModel, TrainLog)> {
    let (train_views, test_views) = split_dataset(dataset, cfg.test_split_every)?;
    train_with(&train_views, &test_views, init, cfg, &RenderSettings::from(cfg), |_| Ok(()))
}

/// Scene extent used to scale positional learning rates and the split/clone
/// size threshold: the bounding-box diagonal of the initial cloud.
pub fn scene_extent(init: &PointCloud) -> f64 {
    let d = init.bbox_diagonal();
    if d > 0.0 {
        d
    } else {
        1.0
    }
}

pub fn train_with(
    train_views: &[View],
    test_views: &[View],
    init: &PointCloud,
    cfg: &TrainConfig,
    settings: &RenderSettings,
    mut on_event: impl FnMut(TrainEvent) -> Result<()>,
) -> Result<(GaussianModel, TrainLog)> {
    cfg.check()?;
    let mut model = GaussianModel::from_point_cloud(init, cfg.initial_opacity)?;
    let mut log = TrainLog::default();
    if cfg.iterations == 0 {
        return Ok((model, log));
    }
    if train_views.is_empty() {
        return Err(Error::EmptyInput("training split"));
    }
    for v in train_views.iter().chain(test_views) {
        v.camera.check()?;
        if v.image.width != v.camera.width as usize || v.image.height != v.camera.height as usize {
            return Err(Error::DimensionMismatch(format!("image for view {} does not match its camera", v.camera.image_id)));
        }
    }

    let extent = scene_extent(init);
    let mut opt = OptimizerState::new(model.len(), LearningRates::from_config(cfg, extent));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.random_seed);
    let mut order: Vec<usize> = Vec::new();
    let mut stats = ViewspaceStats::zeros(model.len());
    let densify_until = if cfg.densify_until_iter == 0 { cfg.iterations } else { cfg.densify_until_iter };

    for it in 1..=cfg.iterations {
        opt.lr.position = extent * position_lr(it - 1, cfg.iterations, cfg.lr_position_init, cfg.lr_position_final);
        if cfg.sh_degree_interval > 0 && it % cfg.sh_degree_interval == 0 && model.sh_degree_active < cfg.max_sh_degree {
            model.sh_degree_active += 1;
        }
        if order.is_empty() {
            order = (0..train_views.len()).collect();
            order.shuffle(&mut rng);
            order.reverse();
        }
        let view = &train_views[order.pop().expect("refilled above")];

        let (img, binning) = render_forward(&model, &view.camera, settings)?;
        let (loss, d_img) = compute_loss(&img, &view.image, cfg.lambda_dssim)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { iteration: it, view: view.camera.image_id.clone() });
        }
        let grads = render_backward(&model, &view.camera, settings, &binning, &d_img)?;
        stats.merge(&grads.stats);
        opt.step(&mut model, &grads);

        let record = IterationRecord {
            iteration: it,
            loss,
            train_psnr: psnr(&img, &view.image, 1.0)?,
            num_gaussians: model.len(),
        };
        on_event(TrainEvent::Iteration(&record))?;
        log.iterations.push(record);

        if it >= cfg.densify_start_iter && it <= densify_until && it % cfg.densify_interval == 0 {
            let report = densify_and_prune(&mut model, &mut opt, &stats, cfg, extent, &mut rng);
            log::debug!("iteration {it}: {report:?}, {} Gaussians", model.len());
            on_event(TrainEvent::Densify(it, &report))?;
            log.densify.push((it, report));
            stats = ViewspaceStats::zeros(model.len());
        }
        if cfg.opacity_reset_interval > 0 && it % cfg.opacity_reset_interval == 0 && it < cfg.iterations {
            reset_opacity(&mut model, &mut opt);
        }
        if cfg.eval_interval > 0 && !test_views.is_empty() && (it % cfg.eval_interval == 0 || it == cfg.iterations) {
            let (test_psnr, test_ssim) = evaluate(&model, test_views, settings)?;
            let rec = EvalRecord { iteration: it, test_psnr, test_ssim };
            log::info!("iteration {it}: loss {loss:.5}, test PSNR {test_psnr:.3}, SSIM {test_ssim:.4}, {} Gaussians", model.len());
            on_event(TrainEvent::Eval(&rec))?;
            log.evals.push(rec);
        }
        if cfg.checkpoint_interval > 0 && it % cfg.checkpoint_interval == 0 {
            on_event(TrainEvent::Checkpoint(it, &model))?;
        }
    }
    Ok((model, log))
}
