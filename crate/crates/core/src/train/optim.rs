use crate::config::{TrainConfig, SH_REST_LR_DIVISOR};
use crate::model::{retain_by_mask, GaussianModel, PARAMS_PER_GAUSSIAN};
use crate::raster::RenderGrads;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-15;

/// Index of the opacity logit in the per-Gaussian parameter layout.
pub const OPACITY_PARAM: usize = 10;
const SH_DC_END: usize = 14;

type Row = [f64; PARAMS_PER_GAUSSIAN];

/// Learning rate of every parameter group.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LearningRates {
    pub position: f64,
    pub scale: f64,
    pub rotation: f64,
    pub opacity: f64,
    pub sh_dc: f64,
    pub sh_rest: f64,
}

impl LearningRates {
    pub fn from_config(cfg: &TrainConfig, scene_extent: f64) -> Self {
        LearningRates {
            position: cfg.lr_position_init * scene_extent,
            scale: cfg.lr_scale,
            rotation: cfg.lr_rotation,
            opacity: cfg.lr_opacity,
            sh_dc: cfg.lr_sh,
            sh_rest: cfg.lr_sh / SH_REST_LR_DIVISOR,
        }
    }

    /// Learning rate of parameter `k` of the per-Gaussian layout.
    pub fn for_param(&self, k: usize) -> f64 {
        match k {
            0..3 => self.position,
            3..6 => self.scale,
            6..10 => self.rotation,
            OPACITY_PARAM => self.opacity,
            11..SH_DC_END => self.sh_dc,
            _ => self.sh_rest,
        }
    }
}

/// Adam moments for every model parameter, one row per Gaussian.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<Row>,
    pub v: Vec<Row>,
    /// Number of steps taken; shared by all rows for bias correction.
    pub step: u64,
    pub lr: LearningRates,
}

impl OptimizerState {
    pub fn new(num_gaussians: usize, lr: LearningRates) -> Self {
        OptimizerState {
            m: vec![[0.0; PARAMS_PER_GAUSSIAN]; num_gaussians],
            v: vec![[0.0; PARAMS_PER_GAUSSIAN]; num_gaussians],
            step: 0,
            lr,
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// One Adam update of `model` from `grads`.
    pub fn step(&mut self, model: &mut GaussianModel, grads: &RenderGrads) {
        assert_eq!(self.len(), model.len(), "optimizer rows out of sync with model");
        assert_eq!(grads.len(), model.len(), "gradient rows out of sync with model");
        self.step += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.step as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.step as i32);
        let lrs: Row = std::array::from_fn(|k| self.lr.for_param(k));
        for g in 0..model.len() {
            let (m, v) = (&mut self.m[g], &mut self.v[g]);
            for k in 0..PARAMS_PER_GAUSSIAN {
                let d = grads.param(g, k);
                m[k] = ADAM_BETA1 * m[k] + (1.0 - ADAM_BETA1) * d;
                v[k] = ADAM_BETA2 * v[k] + (1.0 - ADAM_BETA2) * d * d;
                let update = lrs[k] * (m[k] / bc1) / ((v[k] / bc2).sqrt() + ADAM_EPS);
                if update != 0.0 {
                    *model.param_mut(g, k) -= update;
                }
            }
        }
    }

    /// Appends `count` rows of zero moments.
    pub fn push_zeroed(&mut self, count: usize) {
        self.m.extend(std::iter::repeat_n([0.0; PARAMS_PER_GAUSSIAN], count));
        self.v.extend(std::iter::repeat_n([0.0; PARAMS_PER_GAUSSIAN], count));
    }

    pub fn retain_rows(&mut self, keep: &[bool]) {
        assert_eq!(keep.len(), self.len());
        retain_by_mask(&mut self.m, keep);
        retain_by_mask(&mut self.v, keep);
    }

    pub fn zero_param(&mut self, k: usize) {
        for (m, v) in self.m.iter_mut().zip(&mut self.v) {
            m[k] = 0.0;
            v[k] = 0.0;
        }
    }
}

/// Log-linear interpolation from `init` at iteration 0 to `fin` at `total`.
pub fn position_lr(iteration: usize, total: usize, init: f64, fin: f64) -> f64 {
    if total == 0 || iteration == 0 {
        return init;
    }
    if iteration >= total {
        return fin;
    }
    let t = iteration as f64 / total as f64;
    (init.ln() * (1.0 - t) + fin.ln() * t).exp()
}
