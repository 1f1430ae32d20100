use crate::error::{Error, Result};

/// Every schedule constant and threshold used by training.
///
/// Field names double as the keys of the flat `key = value` config format
/// (see [`crate::io::config`]).
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub iterations: usize,
    /// Weight of the D-SSIM term in the photometric loss.
    pub lambda_dssim: f64,
    /// Positional learning rate at iteration 0, in units of the scene extent.
    pub lr_position_init: f64,
    /// Positional learning rate at the last iteration, in units of the scene extent.
    pub lr_position_final: f64,
    pub lr_scale: f64,
    pub lr_rotation: f64,
    pub lr_opacity: f64,
    /// Learning rate of the DC SH coefficient; higher orders use `lr_sh / 20`.
    pub lr_sh: f64,
    pub densify_start_iter: usize,
    pub densify_interval: usize,
    /// Last iteration at which densification may run; 0 means "until the end".
    pub densify_until_iter: usize,
    /// Mean view-space positional gradient norm above which a Gaussian is densified.
    pub densify_grad_threshold: f64,
    pub split_scale_factor: f64,
    /// Gaussians whose largest scale exceeds this fraction of the scene extent
    /// are split rather than cloned.
    pub split_size_threshold_fraction: f64,
    pub prune_opacity_threshold: f64,
    pub opacity_reset_interval: usize,
    pub test_split_every: usize,
    pub background_color: [f64; 3],
    pub tile_size: usize,
    pub random_seed: u64,
    pub initial_opacity: f64,
    /// Iterations between increments of the active SH degree.
    pub sh_degree_interval: usize,
    pub max_sh_degree: u32,
    /// Iterations between held-out evaluations; 0 disables them.
    pub eval_interval: usize,
    /// Iterations between checkpoint callbacks; 0 disables them.
    pub checkpoint_interval: usize,
}

pub const SH_REST_LR_DIVISOR: f64 = 20.0;

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 50_000,
            lambda_dssim: 0.2,
            lr_position_init: 3.2e-5,
            lr_position_final: 3.2e-7,
            lr_scale: 2e-3,
            lr_rotation: 1e-3,
            lr_opacity: 0.05,
            lr_sh: 2.5e-3,
            densify_start_iter: 1000,
            densify_interval: 100,
            densify_until_iter: 0,
            densify_grad_threshold: 2.0e-4,
            split_scale_factor: 1.6,
            split_size_threshold_fraction: 0.01,
            prune_opacity_threshold: 5e-3,
            opacity_reset_interval: 3000,
            test_split_every: 8,
            background_color: [0.0; 3],
            tile_size: 16,
            random_seed: 0,
            initial_opacity: 0.1,
            sh_degree_interval: 1000,
            max_sh_degree: 3,
            eval_interval: 1000,
            checkpoint_interval: 0,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("bad value {value:?} for {key}")))
}

pub(crate) fn parse_rgb(value: &str) -> Result<[f64; 3]> {
    let parts: Vec<&str> = value.split(',').collect();
    if parts.len() != 3 {
        return Err(Error::InvalidArgument(format!("expected r,g,b but got {value:?}")));
    }
    let mut rgb = [0.0; 3];
    for (dst, s) in rgb.iter_mut().zip(parts) {
        *dst = parse_num("background_color", s)?;
    }
    Ok(rgb)
}

macro_rules! config_fields {
    ($mac:ident) => {
        $mac! {
            iterations, lambda_dssim, lr_position_init, lr_position_final, lr_scale,
            lr_rotation, lr_opacity, lr_sh, densify_start_iter, densify_interval,
            densify_until_iter, densify_grad_threshold, split_scale_factor,
            split_size_threshold_fraction, prune_opacity_threshold, opacity_reset_interval,
            test_split_every, tile_size, random_seed, initial_opacity, sh_degree_interval,
            max_sh_degree, eval_interval, checkpoint_interval
        }
    };
}

impl TrainConfig {
    /// Sets a field from its textual value. Unknown keys are errors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        macro_rules! setters {
            ($($field:ident),*) => {
                match key {
                    $(stringify!($field) => self.$field = parse_num(key, value)?,)*
                    "background_color" => self.background_color = parse_rgb(value)?,
                    _ => return Err(Error::InvalidArgument(format!("unknown config key {key:?}"))),
                }
            };
        }
        config_fields!(setters);
        Ok(())
    }

    /// All fields as `(key, value)` text pairs, in declaration order.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        macro_rules! getters {
            ($($field:ident),*) => {
                $(out.push((stringify!($field), self.$field.to_string()));)*
            };
        }
        config_fields!(getters);
        let [r, g, b] = self.background_color;
        out.push(("background_color", format!("{r},{g},{b}")));
        out
    }

    pub fn check(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(what.to_string()));
        if !(0.0..=1.0).contains(&self.lambda_dssim) {
            return bad("lambda_dssim must lie in [0, 1]");
        }
        let positive = [
            ("lr_position_init", self.lr_position_init),
            ("lr_position_final", self.lr_position_final),
            ("lr_scale", self.lr_scale),
            ("lr_rotation", self.lr_rotation),
            ("lr_opacity", self.lr_opacity),
            ("lr_sh", self.lr_sh),
            ("densify_grad_threshold", self.densify_grad_threshold),
            ("split_scale_factor", self.split_scale_factor),
            ("split_size_threshold_fraction", self.split_size_threshold_fraction),
            ("prune_opacity_threshold", self.prune_opacity_threshold),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(&format!("{name} must be positive"));
            }
        }
        if self.densify_interval == 0 || self.opacity_reset_interval == 0 || self.sh_degree_interval == 0 {
            return bad("intervals must be positive");
        }
        if self.tile_size == 0 {
            return bad("tile_size must be positive");
        }
        if self.test_split_every < 2 {
            return bad("test_split_every must be at least 2");
        }
        if self.max_sh_degree > 3 {
            return bad("max_sh_degree must be at most 3");
        }
        if !(self.initial_opacity > 0.0 && self.initial_opacity < 1.0) {
            return bad("initial_opacity must lie in (0, 1)");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = TrainConfig::default();
        cfg.check().unwrap();
        assert_eq!(cfg.tile_size, 16);
        assert_eq!(cfg.lambda_dssim, 0.2);
        assert_eq!(cfg.densify_grad_threshold, 2.0e-4);
        assert_eq!(cfg.prune_opacity_threshold, 5e-3);
        assert_eq!(cfg.opacity_reset_interval, 3000);
        assert_eq!(cfg.lr_position_init, 3.2e-5);
        assert_eq!(cfg.lr_scale, 2e-3);
    }

    #[test]
    fn set_and_list_round_trip() {
        let mut cfg = TrainConfig::default();
        cfg.set("iterations", "123").unwrap();
        cfg.set("background_color", "1,0.5,0").unwrap();
        assert_eq!(cfg.iterations, 123);
        assert_eq!(cfg.background_color, [1.0, 0.5, 0.0]);

        let mut copy = TrainConfig::default();
        for (k, v) in cfg.to_pairs() {
            copy.set(k, &v).unwrap();
        }
        assert_eq!(copy, cfg);

        assert!(cfg.set("learning_rate", "1").is_err());
        assert!(cfg.set("iterations", "many").is_err());
    }
}
