//! `key = value` configuration file.
//!
//! ```text
//! scene_bounds = 0 0 1920 1080
//! lambda = 0.01
//! occlusion_horizon = 15
//! kalman_q = 1e-4
//! ```
//!
//! Unknown keys are errors. Keys that are absent keep their defaults; see
//! [`Config::to_text`] for the full list.

use std::fmt::Write as _;
use std::path::Path;

use super::{read_text, IoError};
use crate::featcost::MaskPolicy;
use crate::learn::{NoiseConfig, TrainerConfig};
use crate::model::SceneBounds;
use crate::track::TrackerConfig;

pub const DEFAULT_BINS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    /// `None` infers the bounds from the data extent.
    pub bounds: Option<SceneBounds>,
    pub tracker: TrackerConfig,
    pub trainer: TrainerConfig,
    pub noise: NoiseConfig,
    /// Histogram bins per color channel.
    pub bins: usize,
    pub seed: u64,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            bounds: None,
            tracker: TrackerConfig::default(),
            trainer: TrainerConfig::default(),
            noise: NoiseConfig::default(),
            bins: DEFAULT_BINS,
            seed: 0,
        }
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, IoError> {
        let mut cfg = Self::default();
        cfg.apply(text)?;
        Ok(cfg)
    }

    /// Applies the keys present in `text` on top of `self`.
    pub fn apply(&mut self, text: &str) -> Result<(), IoError> {
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| IoError::Parse {
                line,
                column: 1,
                reason: format!("expected `key = value`, found `{content}`"),
            })?;
            self.set(key.trim(), value.trim()).map_err(|reason| IoError::Parse { line, column: 2, reason })?;
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, IoError> {
        Self::parse(&read_text(path)?)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
            value.parse().map_err(|_| format!("bad value `{value}` for `{key}`"))
        }
        fn positive(key: &str, value: &str) -> Result<f64, String> {
            let v: f64 = num(key, value)?;
            if v > 0.0 && v.is_finite() {
                Ok(v)
            } else {
                Err(format!("`{key}` must be positive"))
            }
        }
        fn rate(key: &str, value: &str) -> Result<f64, String> {
            let v: f64 = num(key, value)?;
            if (0.0..=1.0).contains(&v) {
                Ok(v)
            } else {
                Err(format!("`{key}` must lie in [0, 1]"))
            }
        }
        let t = &mut self.tracker;
        match key {
            "scene_bounds" => {
                let v: Vec<f64> = value.split_whitespace().map(|x| num(key, x)).collect::<Result<_, _>>()?;
                if v.len() != 4 {
                    return Err("scene_bounds needs x_min y_min x_max y_max".into());
                }
                self.bounds = Some(SceneBounds::new(v[0], v[1], v[2], v[3]).map_err(|e| e.to_string())?);
            }
            "lambda" => self.trainer.lambda = positive(key, value)?,
            "passes" => self.trainer.passes = num(key, value)?,
            "mask_policy" => {
                let p = MaskPolicy::from_name(value).ok_or_else(|| format!("unknown mask policy `{value}`"))?;
                t.policy = p;
                self.trainer.policy = p;
            }
            "occlusion_horizon" => t.occlusion_horizon = num(key, value)?,
            "appearance_window" => t.appearance_window = num(key, value)?,
            "kalman_q" => t.kalman.q = positive(key, value)?,
            "kalman_r" => t.kalman.r = positive(key, value)?,
            "birth_position_var" => t.birth_position_var = positive(key, value)?,
            "birth_velocity_var" => t.birth_velocity_var = positive(key, value)?,
            "report_occluded" => {
                t.report_occluded = match value {
                    "true" | "1" => true,
                    "false" | "0" => false,
                    _ => return Err(format!("`{key}` takes true or false")),
                }
            }
            "confirm_hits" => t.confirm_hits = num(key, value)?,
            "cc_seed" => t.cluster.seed = num(key, value)?,
            "cc_candidates" => {
                t.cluster.candidates = num(key, value)?;
                if t.cluster.candidates == 0 {
                    return Err("cc_candidates must be at least 1".into());
                }
            }
            "g1_neutral" => t.features.g1_neutral = rate(key, value)?,
            "g2_radius" => t.features.g2_radius = positive(key, value)?,
            "g2_cap" => t.features.g2_cap = positive(key, value)?,
            "g2_spacing" => {
                t.features.g2_spacing = num(key, value)?;
                if !(t.features.g2_spacing >= 0.0 && t.features.g2_spacing.is_finite()) {
                    return Err("g2_spacing must be non-negative".into());
                }
            }
            "kl_cap" => t.features.kl_cap = positive(key, value)?,
            "histogram_bins" => {
                self.bins = num(key, value)?;
                if self.bins == 0 {
                    return Err("histogram_bins must be at least 1".into());
                }
            }
            "miss_rate" => self.noise.miss_rate = rate(key, value)?,
            "false_rate" => {
                self.noise.false_rate = num(key, value)?;
                if !(self.noise.false_rate >= 0.0 && self.noise.false_rate.is_finite()) {
                    return Err("false_rate must be non-negative".into());
                }
            }
            "jitter" => {
                self.noise.jitter = num(key, value)?;
                if !(self.noise.jitter >= 0.0 && self.noise.jitter.is_finite()) {
                    return Err("jitter must be non-negative".into());
                }
            }
            "seed" => self.seed = num(key, value)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        self.trainer.cluster = self.tracker.cluster;
        Ok(())
    }

    /// Every key with its current value; parses back to the same config.
    pub fn to_text(&self) -> String {
        let t = &self.tracker;
        let mut s = String::new();
        if let Some(b) = &self.bounds {
            writeln!(s, "scene_bounds = {:?} {:?} {:?} {:?}", b.x_min, b.y_min, b.x_max, b.y_max).unwrap();
        }
        let entries: [(&str, String); 23] = [
            ("lambda", format!("{:?}", self.trainer.lambda)),
            ("passes", self.trainer.passes.to_string()),
            ("mask_policy", t.policy.name().to_string()),
            ("occlusion_horizon", t.occlusion_horizon.to_string()),
            ("appearance_window", t.appearance_window.to_string()),
            ("kalman_q", format!("{:?}", t.kalman.q)),
            ("kalman_r", format!("{:?}", t.kalman.r)),
            ("birth_position_var", format!("{:?}", t.birth_position_var)),
            ("birth_velocity_var", format!("{:?}", t.birth_velocity_var)),
            ("report_occluded", t.report_occluded.to_string()),
            ("confirm_hits", t.confirm_hits.to_string()),
            ("cc_seed", t.cluster.seed.to_string()),
            ("cc_candidates", t.cluster.candidates.to_string()),
            ("g1_neutral", format!("{:?}", t.features.g1_neutral)),
            ("g2_radius", format!("{:?}", t.features.g2_radius)),
            ("g2_cap", format!("{:?}", t.features.g2_cap)),
            ("g2_spacing", format!("{:?}", t.features.g2_spacing)),
            ("kl_cap", format!("{:?}", t.features.kl_cap)),
            ("histogram_bins", self.bins.to_string()),
            ("miss_rate", format!("{:?}", self.noise.miss_rate)),
            ("false_rate", format!("{:?}", self.noise.false_rate)),
            ("jitter", format!("{:?}", self.noise.jitter)),
            ("seed", self.seed.to_string()),
        ];
        for (k, v) in entries {
            writeln!(s, "{k} = {v}").unwrap();
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_when_empty() {
        assert_eq!(Config::parse("# nothing\n\n").unwrap(), Config::default());
    }

    #[test]
    fn sets_keys() {
        let text = "scene_bounds = 0 0 640 480\nlambda = 0.5 # strong\nocclusion_horizon = 3\nkalman_q = 2e-3\ncc_seed = 7\nmask_policy = simple_only\n";
        let c = Config::parse(text).unwrap();
        assert_eq!(c.bounds, Some(SceneBounds::new(0.0, 0.0, 640.0, 480.0).unwrap()));
        assert_eq!(c.trainer.lambda, 0.5);
        assert_eq!(c.tracker.occlusion_horizon, 3);
        assert_eq!(c.tracker.kalman.q, 2e-3);
        assert_eq!(c.tracker.cluster.seed, 7);
        assert_eq!(c.trainer.cluster.seed, 7);
        assert_eq!(c.tracker.policy, MaskPolicy::SimpleOnly);
        assert_eq!(c.trainer.policy, MaskPolicy::SimpleOnly);
    }

    #[test]
    fn errors_carry_line_numbers() {
        assert!(matches!(Config::parse("lambda = 1\nbogus = 2\n"), Err(IoError::Parse { line: 2, .. })));
        assert!(matches!(Config::parse("\nlambda = -1\n"), Err(IoError::Parse { line: 2, column: 2, .. })));
        assert!(matches!(Config::parse("lambda\n"), Err(IoError::Parse { line: 1, column: 1, .. })));
        assert!(matches!(Config::parse("scene_bounds = 0 0 1\n"), Err(IoError::Parse { line: 1, .. })));
    }

    #[test]
    fn apply_keeps_unset_keys() {
        let mut c = Config::parse("lambda = 0.5\nocclusion_horizon = 4\n").unwrap();
        c.apply("occlusion_horizon = 7\n").unwrap();
        assert_eq!((c.trainer.lambda, c.tracker.occlusion_horizon), (0.5, 7));
    }

    #[test]
    fn text_round_trip() {
        let mut c = Config::default();
        c.bounds = Some(SceneBounds::new(-1.5, 0.0, 100.25, 50.0).unwrap());
        c.trainer.lambda = 0.1 + 0.2;
        c.tracker.features.kl_cap = 12.5;
        c.noise.jitter = 1e-3;
        c.bins = 4;
        c.seed = 99;
        c.tracker.report_occluded = false;
        c.tracker.confirm_hits = 5;
        assert_eq!(Config::parse(&c.to_text()).unwrap(), c);
        assert_eq!(Config::parse(&Config::default().to_text()).unwrap(), Config::default());
    }
}
