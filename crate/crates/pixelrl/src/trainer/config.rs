//! Training configuration: task-derived defaults, `key = value` config files,
//! and CLI overrides applied on top.

use crate::env::{CorruptionConfig, Task};
use crate::error::{PixelRlError, Result};
use crate::rmc::Bootstrap;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub task: Task,
    pub episodes: usize,
    pub batch: usize,
    pub crop: usize,
    pub t_max: usize,
    pub lr: f64,
    pub lr_power: f64,
    pub gamma: f64,
    pub beta: f64,
    pub rmc: bool,
    pub rmc_size: usize,
    pub use_gru: bool,
    pub channels: usize,
    pub seed: u64,
    pub checkpoint_interval: usize,
    pub bootstrap: Bootstrap,
    pub corruption: CorruptionConfig,
    /// Training images; a synthetic set is generated when absent.
    pub data_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// Warm start, e.g. enabling the reward kernel on a converged plain run.
    pub init_from: Option<PathBuf>,
    pub synthetic_images: usize,
}

impl TrainConfig {
    /// Defaults for a task; horizon and action count follow the task.
    pub fn for_task(task: Task) -> Self {
        Self {
            task,
            episodes: 30_000,
            batch: 64,
            crop: 70,
            t_max: task.default_t_max(),
            lr: 1e-3,
            lr_power: 0.9,
            gamma: 0.95,
            beta: 0.01,
            rmc: false,
            rmc_size: 33,
            use_gru: true,
            channels: 64,
            seed: 0,
            checkpoint_interval: 1000,
            bootstrap: Bootstrap::Zero,
            corruption: CorruptionConfig::default(),
            data_dir: None,
            out_dir: PathBuf::from("out"),
            init_from: None,
            synthetic_images: 24,
        }
    }

    /// Polynomial decay: base * (1 - episode/episodes)^power, clamped at 0.
    pub fn learning_rate(&self, episode: usize) -> f64 {
        let frac = 1.0 - episode as f64 / self.episodes as f64;
        self.lr * frac.max(0.0).powf(self.lr_power)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("episodes", self.episodes),
            ("batch", self.batch),
            ("crop", self.crop),
            ("t_max", self.t_max),
            ("channels", self.channels),
            ("checkpoint_interval", self.checkpoint_interval),
            ("synthetic_images", self.synthetic_images),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(PixelRlError::Config(format!("{name} must be positive")));
            }
        }
        if self.lr <= 0.0 || !self.lr.is_finite() {
            return Err(PixelRlError::Config("lr must be positive".into()));
        }
        if self.beta < 0.0 {
            return Err(PixelRlError::Config("beta must be nonnegative".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(PixelRlError::Config(format!(
                "gamma must be in (0,1], got {}",
                self.gamma
            )));
        }
        if self.rmc_size % 2 == 0 {
            return Err(PixelRlError::Config("rmc_size must be odd".into()));
        }
        Ok(())
    }

    /// Applies one `key = value` override.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| {
            PixelRlError::Config(format!("bad value for {key}: {what} expected, got `{value}`"))
        };
        match key {
            "task" => self.task = Task::from_name(value)?,
            "episodes" => self.episodes = value.parse().map_err(|_| bad("integer"))?,
            "batch" => self.batch = value.parse().map_err(|_| bad("integer"))?,
            "crop" => self.crop = value.parse().map_err(|_| bad("integer"))?,
            "t_max" => self.t_max = value.parse().map_err(|_| bad("integer"))?,
            "lr" => self.lr = value.parse().map_err(|_| bad("number"))?,
            "lr_power" => self.lr_power = value.parse().map_err(|_| bad("number"))?,
            "gamma" => self.gamma = value.parse().map_err(|_| bad("number"))?,
            "beta" => self.beta = value.parse().map_err(|_| bad("number"))?,
            "rmc" => self.rmc = parse_bool(value).ok_or_else(|| bad("true/false"))?,
            "rmc_size" => self.rmc_size = value.parse().map_err(|_| bad("integer"))?,
            "gru" => self.use_gru = parse_bool(value).ok_or_else(|| bad("true/false"))?,
            "channels" => self.channels = value.parse().map_err(|_| bad("integer"))?,
            "seed" => self.seed = value.parse().map_err(|_| bad("integer"))?,
            "checkpoint_interval" => {
                self.checkpoint_interval = value.parse().map_err(|_| bad("integer"))?
            }
            "bootstrap" => {
                self.bootstrap = match value {
                    "zero" => Bootstrap::Zero,
                    "value" => Bootstrap::Value,
                    _ => return Err(bad("zero/value")),
                }
            }
            "sigma" => self.corruption.gaussian_sigma = value.parse().map_err(|_| bad("number"))?,
            "sp_density" => self.corruption.sp_density = value.parse().map_err(|_| bad("number"))?,
            "poisson_peak" => {
                self.corruption.poisson_peak = value.parse().map_err(|_| bad("number"))?
            }
            "color_cast" => self.corruption.color_cast = value.parse().map_err(|_| bad("number"))?,
            "data" => self.data_dir = Some(PathBuf::from(value)),
            "out" => self.out_dir = PathBuf::from(value),
            "init_from" => self.init_from = Some(PathBuf::from(value)),
            "synthetic_images" => {
                self.synthetic_images = value.parse().map_err(|_| bad("integer"))?
            }
            _ => return Err(PixelRlError::Config(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Builds a config from optional file pairs plus CLI override pairs, in
    /// that order, so command-line settings win. The task is fixed first
    /// because it sets the horizon and action-set defaults.
    pub fn build(
        file_pairs: &[(String, String)],
        cli_pairs: &[(String, String)],
    ) -> Result<Self> {
        let task_name = cli_pairs
            .iter()
            .chain(file_pairs.iter())
            .find(|(k, _)| k == "task")
            .map(|(_, v)| v.as_str())
            .unwrap_or("denoise_gauss");
        let mut cfg = Self::for_task(Task::from_name(task_name)?);
        for (k, v) in file_pairs.iter().chain(cli_pairs.iter()) {
            if k != "task" {
                cfg.apply(k, v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_bool(value: &str) -> Option<bool> {
    match value {
        "true" | "1" | "on" => Some(true),
        "false" | "0" | "off" => Some(false),
        _ => None,
    }
}

/// Reads a UTF-8 `key = value` file. `#` starts a comment, blank lines are
/// skipped, keys may repeat (last one wins via apply order).
pub fn parse_config_file(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        PixelRlError::Data(format!("cannot read config {}: {e}", path.display()))
    })?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(PixelRlError::Config(format!(
                "line {}: expected `key = value`, got `{raw}`",
                lineno + 1
            )));
        };
        pairs.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_task() {
        let cfg = TrainConfig::for_task(Task::Restore);
        assert_eq!(cfg.t_max, 15);
        assert_eq!(cfg.episodes, 30_000);
        assert!((cfg.lr - 1e-3).abs() < 1e-12);
        assert!((cfg.beta - 0.01).abs() < 1e-12);
        assert!((cfg.gamma - 0.95).abs() < 1e-12);
    }

    #[test]
    fn learning_rate_decays_polynomially() {
        let mut cfg = TrainConfig::for_task(Task::DenoiseGauss);
        cfg.episodes = 100;
        assert!((cfg.learning_rate(0) - 1e-3).abs() < 1e-15);
        assert_eq!(cfg.learning_rate(100), 0.0);
        let mid = cfg.learning_rate(50);
        assert!((mid - 1e-3 * 0.5f64.powf(0.9)).abs() < 1e-12);
    }

    #[test]
    fn file_parsing_skips_comments_and_blanks() {
        let pairs = parse_config_str("# header\n\nepisodes = 10 # inline\n t_max=3\n").unwrap();
        assert_eq!(
            pairs,
            vec![
                ("episodes".into(), "10".into()),
                ("t_max".into(), "3".into())
            ]
        );
    }

    #[test]
    fn cli_overrides_beat_file_values() {
        let file = parse_config_str("task = restore\nepisodes = 10\nbeta = 0.5\n").unwrap();
        let cli = vec![("episodes".to_string(), "20".to_string())];
        let cfg = TrainConfig::build(&file, &cli).unwrap();
        assert_eq!(cfg.task, Task::Restore);
        assert_eq!(cfg.episodes, 20);
        assert!((cfg.beta - 0.5).abs() < 1e-12);
    }

    #[test]
    fn bad_lines_and_keys_are_rejected() {
        assert!(parse_config_str("episodes 10\n").is_err());
        let mut cfg = TrainConfig::for_task(Task::DenoiseGauss);
        assert!(cfg.apply("nope", "1").is_err());
        assert!(cfg.apply("episodes", "ten").is_err());
        assert!(cfg.apply("rmc", "maybe").is_err());
    }

    #[test]
    fn validation_catches_bad_ranges() {
        let mut cfg = TrainConfig::for_task(Task::DenoiseGauss);
        cfg.gamma = 1.5;
        assert!(cfg.validate().is_err());
        cfg.gamma = 0.95;
        cfg.rmc_size = 4;
        assert!(cfg.validate().is_err());
    }
}
