use std::path::Path;

use super::keyvalue::parse_pairs;
use super::{read_text, write_bytes};
use crate::config::TrainConfig;
use crate::error::{Error, Result};

/// [`TrainConfig`] from flat `key = value` text; unspecified keys keep their
/// defaults and unknown keys are errors.
pub fn parse_config(text: &str) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::default();
    for (line, k, v) in parse_pairs(text)? {
        cfg.set(&k, &v).map_err(|e| Error::Config { line, msg: e.to_string() })?;
    }
    cfg.check()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<TrainConfig> {
    parse_config(&read_text(path)?).map_err(|e| match e {
        Error::Config { line, msg } => Error::parse(path, line, msg),
        e => e,
    })
}

pub fn format_config(cfg: &TrainConfig) -> String {
    cfg.to_pairs().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

pub fn write_config(path: &Path, cfg: &TrainConfig) -> Result<()> {
    write_bytes(path, format_config(cfg).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let cfg = TrainConfig { iterations: 123, lambda_dssim: 0.25, background_color: [1.0, 0.5, 0.0], ..Default::default() };
        assert_eq!(parse_config(&format_config(&cfg)).unwrap(), cfg);
    }

    #[test]
    fn unknown_key_reports_line() {
        let err = parse_config("iterations = 10\n\nlearning_rate = 3\n").unwrap_err();
        assert!(matches!(err, Error::Config { line: 3, .. }), "{err}");
    }

    #[test]
    fn bad_value_and_invalid_config() {
        assert!(matches!(parse_config("iterations = ten\n"), Err(Error::Config { line: 1, .. })));
        assert!(parse_config("lambda_dssim = 2\n").is_err());
    }
}
