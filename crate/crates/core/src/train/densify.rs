use nalgebra::Vector3;
use rand::Rng;
use rand_distr::StandardNormal;

use super::optim::{OptimizerState, OPACITY_PARAM};
use crate::config::TrainConfig;
use crate::math::quat_to_rotation;
use crate::model::{logit, GaussianModel};
use crate::raster::ViewspaceStats;

/// Activated opacity that [`reset_opacity`] clamps to.
pub const OPACITY_RESET_VALUE: f64 = 0.01;

/// Number of children a split Gaussian is replaced by.
pub const SPLIT_CHILDREN: usize = 2;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DensifyReport {
    pub cloned: usize,
    pub split: usize,
    pub pruned: usize,
}

/// Clones small and splits large Gaussians whose mean view-space gradient
/// exceeds the threshold, then prunes nearly transparent ones. Optimizer rows
/// follow the model; new rows start with zero moments.
pub fn densify_and_prune(
    model: &mut GaussianModel,
    opt: &mut OptimizerState,
    stats: &ViewspaceStats,
    cfg: &TrainConfig,
    scene_extent: f64,
    rng: &mut impl Rng,
) -> DensifyReport {
    let n = model.len();
    assert_eq!(stats.grad_norm.len(), n, "stats rows out of sync with model");
    assert_eq!(opt.len(), n, "optimizer rows out of sync with model");
    let size_limit = cfg.split_size_threshold_fraction * scene_extent;
    let grads = stats.mean_grad();
    let mut report = DensifyReport::default();
    let mut keep = vec![true; n];

    for i in 0..n {
        if !(grads[i] > cfg.densify_grad_threshold) {
            continue;
        }
        let max_scale = model.scale(i).into_iter().fold(f64::MIN, f64::max);
        if max_scale < size_limit {
            model.duplicate(i);
            report.cloned += 1;
            continue;
        }
        let r = quat_to_rotation(&model.rotations[i]).unwrap_or_else(|_| nalgebra::Matrix3::identity());
        let s = Vector3::from(model.scale(i));
        let shrink = cfg.split_scale_factor.ln();
        for _ in 0..SPLIT_CHILDREN {
            let z = Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
            let offset = r * s.component_mul(&z);
            let mean = std::array::from_fn(|a| model.means[i][a] + offset[a]);
            let log_scale = model.log_scales[i].map(|l| l - shrink);
            model.push(mean, log_scale, model.rotations[i], model.opacity_logits[i], model.sh_coeffs[i]);
        }
        keep[i] = false;
        report.split += 1;
    }
    let added = model.len() - n;
    opt.push_zeroed(added);
    keep.resize(model.len(), true);

    for (i, k) in keep.iter_mut().enumerate() {
        if *k && model.opacity(i) < cfg.prune_opacity_threshold {
            *k = false;
            report.pruned += 1;
        }
    }
    model.retain_rows(&keep);
    opt.retain_rows(&keep);
    report
}

/// Clamps every activated opacity to at most [`OPACITY_RESET_VALUE`] and zeros
/// the opacity moments.
pub fn reset_opacity(model: &mut GaussianModel, opt: &mut OptimizerState) {
    let cap = logit(OPACITY_RESET_VALUE);
    for l in &mut model.opacity_logits {
        if *l > cap {
            *l = cap;
        }
    }
    opt.zero_param(OPACITY_PARAM);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::sh::SH_COEFFS;
    use crate::model::IDENTITY_QUAT;
    use crate::train::optim::LearningRates;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(opacity: f64, log_scale: f64, grad: f64) -> (GaussianModel, OptimizerState, ViewspaceStats) {
        let mut m = GaussianModel::default();
        m.push([0.1, 0.2, 0.3], [log_scale; 3], IDENTITY_QUAT, logit(opacity), [[0.25; 3]; SH_COEFFS]);
        let mut opt = OptimizerState::new(1, LearningRates::from_config(&TrainConfig::default(), 1.0));
        opt.m[0] = [0.5; 59];
        let stats = ViewspaceStats { grad_norm: vec![2.0 * grad], seen: vec![2] };
        (m, opt, stats)
    }

    fn run(m: &mut GaussianModel, opt: &mut OptimizerState, stats: &ViewspaceStats) -> DensifyReport {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        densify_and_prune(m, opt, stats, &TrainConfig::default(), 1.0, &mut rng)
    }

    #[test]
    fn low_opacity_is_pruned() {
        let (mut m, mut opt, stats) = setup(1e-3, -6.0, 0.0);
        assert_eq!(run(&mut m, &mut opt, &stats).pruned, 1);
        assert!(m.is_empty() && opt.is_empty());
    }

    #[test]
    fn small_gaussian_is_cloned() {
        let (mut m, mut opt, stats) = setup(0.5, -6.0, 3e-4);
        let parent = m.clone();
        assert_eq!(run(&mut m, &mut opt, &stats), DensifyReport { cloned: 1, split: 0, pruned: 0 });
        assert_eq!(m.len(), 2);
        for k in 0..59 {
            assert_eq!(m.param(1, k), parent.param(0, k));
        }
        assert_eq!(opt.m[0], [0.5; 59]);
        assert_eq!(opt.m[1], [0.0; 59]);
    }

    #[test]
    fn below_threshold_is_untouched() {
        let (mut m, mut opt, stats) = setup(0.5, -6.0, 2e-4);
        let before = m.clone();
        assert_eq!(run(&mut m, &mut opt, &stats), DensifyReport::default());
        assert_eq!(m, before);
    }

    #[test]
    fn large_gaussian_is_split() {
        let (mut m, mut opt, stats) = setup(0.5, 0.0, 3e-4);
        assert_eq!(run(&mut m, &mut opt, &stats), DensifyReport { cloned: 0, split: 1, pruned: 0 });
        assert_eq!(m.len(), 2);
        for i in 0..2 {
            for s in m.scale(i) {
                assert!((s - 1.0 / 1.6).abs() < 1e-12);
            }
            assert_ne!(m.means[i], [0.1, 0.2, 0.3]);
            assert_eq!(opt.m[i], [0.0; 59]);
        }
        assert!(m.validate().is_empty());
    }

    #[test]
    fn reset_clamps_opacity() {
        let mut m = GaussianModel::default();
        m.push([0.0; 3], [0.0; 3], IDENTITY_QUAT, logit(0.9), [[0.0; 3]; SH_COEFFS]);
        m.push([0.0; 3], [0.0; 3], IDENTITY_QUAT, logit(0.005), [[0.0; 3]; SH_COEFFS]);
        let mut opt = OptimizerState::new(2, LearningRates::from_config(&TrainConfig::default(), 1.0));
        opt.m[0][OPACITY_PARAM] = 0.3;
        opt.v[1][OPACITY_PARAM] = 0.3;
        opt.m[0][0] = 0.7;
        reset_opacity(&mut m, &mut opt);
        assert!((m.opacity(0) - 0.01).abs() < 1e-15);
        assert_eq!(m.opacity_logits[1], logit(0.005));
        assert_eq!(opt.m[0][OPACITY_PARAM], 0.0);
        assert_eq!(opt.v[1][OPACITY_PARAM], 0.0);
        assert_eq!(opt.m[0][0], 0.7);
    }
}
