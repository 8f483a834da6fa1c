//! Flat `key = value` run configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::WccParams;
use crate::controls::ShuffleScope;
use crate::error::{Error, Result};
use crate::pipeline::{FeatureConfig, PursuitConfig};
use crate::prediction::{CvOptions, ForestParams, ModelKind};
use crate::preprocess::PreprocessConfig;
use crate::session::K_AU;
use crate::synth::{Coupling, LagDist, SynthSpec};
use crate::warping::DEFAULT_THETA_SECONDS;

/// Shape of the coupling-lag distribution for generated data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LagShape {
    Uniform,
    Exponential,
}

/// Every tunable of a run. Unknown keys in a config file are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub preprocess: PreprocessConfig,
    pub pursuit: PursuitConfig,
    pub theta_seconds: f64,
    pub wcc: WccParams,
    pub lambda: f64,
    pub alpha: f64,
    pub folds: usize,
    pub min_visits: usize,
    pub seed: u64,
    pub lambda_grid: Vec<f64>,
    pub alpha_grid: Vec<f64>,
    pub n_trees: usize,
    pub shuffle_interval_seconds: f64,
    pub shuffle_scope: ShuffleScope,
    pub synth_sessions: usize,
    pub synth_coupled: usize,
    pub synth_frames: usize,
    pub synth_frame_rate: f64,
    pub synth_coupled_channels: usize,
    pub synth_lag_shape: LagShape,
    pub synth_lag_mean_seconds: f64,
    pub synth_max_lag_seconds: f64,
    pub synth_echo_probability: f64,
    pub synth_gain_spread: f64,
    pub synth_baseline_max: f64,
    pub synth_bump_rate: f64,
    pub synth_bump_width: f64,
    pub synth_noise_sd: f64,
    pub synth_low_confidence: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let synth = SynthSpec::default();
        RunConfig {
            preprocess: PreprocessConfig::default(),
            pursuit: PursuitConfig::default(),
            theta_seconds: DEFAULT_THETA_SECONDS,
            wcc: WccParams::default(),
            lambda: 0.0518,
            alpha: 0.802,
            folds: 5,
            min_visits: 50,
            seed: 0,
            lambda_grid: vec![0.001, 0.005, 0.01, 0.0518, 0.1, 0.2, 0.5],
            alpha_grid: vec![0.1, 0.3, 0.5, 0.802, 1.0],
            n_trees: 20,
            shuffle_interval_seconds: 10.0,
            shuffle_scope: ShuffleScope::Dyad,
            synth_sessions: synth.n_sessions,
            synth_coupled: synth.n_coupled,
            synth_frames: synth.frames,
            synth_frame_rate: synth.frame_rate_hz,
            synth_coupled_channels: 6,
            synth_lag_shape: LagShape::Uniform,
            synth_lag_mean_seconds: 1.0,
            synth_max_lag_seconds: 5.0,
            synth_echo_probability: synth.echo_probability,
            synth_gain_spread: synth.gain_spread,
            synth_baseline_max: synth.baseline_max,
            synth_bump_rate: synth.bump_rate_per_minute,
            synth_bump_width: synth.bump_width_sigma,
            synth_noise_sd: synth.noise_sd,
            synth_low_confidence: 0,
        }
    }
}

fn parse_list(value: &str) -> std::result::Result<Vec<f64>, String> {
    value
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| format!("`{v}` is not a number")))
        .collect()
}

impl RunConfig {
    pub const KEYS: [&'static str; 39] = [
        "tau",
        "exclusion_fraction",
        "impute",
        "d_max_cap_divisor",
        "theta_seconds",
        "mp_atoms",
        "mp_sigmas",
        "wcc_window_seconds",
        "wcc_increment_seconds",
        "wcc_max_lag_seconds",
        "wcc_threshold",
        "lambda",
        "alpha",
        "folds",
        "min_repeats",
        "seed",
        "lambda_grid",
        "alpha_grid",
        "n_trees",
        "shuffle_interval_seconds",
        "shuffle_scope",
        "synth_sessions",
        "synth_coupled",
        "synth_frames",
        "synth_frame_rate",
        "synth_coupled_channels",
        "synth_lag_shape",
        "synth_lag_mean_seconds",
        "synth_max_lag_seconds",
        "synth_echo_probability",
        "synth_gain_spread",
        "synth_baseline_max",
        "synth_bump_rate",
        "synth_bump_width",
        "synth_noise_sd",
        "synth_low_confidence",
        // Aliases accepted for readability.
        "min_visits",
        "mp_sigma_grid",
        "wcc_sync_threshold",
    ];

    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
            v.parse::<T>().map_err(|_| format!("cannot parse `{v}`"))
        }
        match key {
            "tau" => self.preprocess.tau = num(value)?,
            "exclusion_fraction" => self.preprocess.exclusion_fraction = num(value)?,
            "impute" => {
                self.preprocess.impute = match value {
                    "true" | "1" | "yes" => true,
                    "false" | "0" | "no" => false,
                    _ => return Err(format!("`{value}` is not a boolean")),
                }
            }
            "d_max_cap_divisor" => self.preprocess.d_max_cap_divisor = num(value)?,
            "theta_seconds" => self.theta_seconds = num(value)?,
            "mp_atoms" => self.pursuit.atoms = num(value)?,
            "mp_sigmas" | "mp_sigma_grid" => self.pursuit.sigmas = parse_list(value)?,
            "wcc_window_seconds" => self.wcc.window_seconds = num(value)?,
            "wcc_increment_seconds" => self.wcc.increment_seconds = num(value)?,
            "wcc_max_lag_seconds" => self.wcc.max_lag_seconds = num(value)?,
            "wcc_threshold" | "wcc_sync_threshold" => self.wcc.sync_threshold = num(value)?,
            "lambda" => self.lambda = num(value)?,
            "alpha" => self.alpha = num(value)?,
            "folds" => self.folds = num(value)?,
            "min_repeats" | "min_visits" => self.min_visits = num(value)?,
            "seed" => self.seed = num(value)?,
            "lambda_grid" => self.lambda_grid = parse_list(value)?,
            "alpha_grid" => self.alpha_grid = parse_list(value)?,
            "n_trees" => self.n_trees = num(value)?,
            "shuffle_interval_seconds" => self.shuffle_interval_seconds = num(value)?,
            "shuffle_scope" => {
                self.shuffle_scope = match value {
                    "dyad" => ShuffleScope::Dyad,
                    "subject" => ShuffleScope::Subject,
                    _ => return Err(format!("`{value}` is not one of dyad, subject")),
                }
            }
            "synth_sessions" => self.synth_sessions = num(value)?,
            "synth_coupled" => self.synth_coupled = num(value)?,
            "synth_frames" => self.synth_frames = num(value)?,
            "synth_frame_rate" => self.synth_frame_rate = num(value)?,
            "synth_coupled_channels" => self.synth_coupled_channels = num(value)?,
            "synth_lag_shape" => {
                self.synth_lag_shape = match value {
                    "uniform" => LagShape::Uniform,
                    "exponential" => LagShape::Exponential,
                    _ => return Err(format!("`{value}` is not one of uniform, exponential")),
                }
            }
            "synth_lag_mean_seconds" => self.synth_lag_mean_seconds = num(value)?,
            "synth_max_lag_seconds" => self.synth_max_lag_seconds = num(value)?,
            "synth_echo_probability" => self.synth_echo_probability = num(value)?,
            "synth_gain_spread" => self.synth_gain_spread = num(value)?,
            "synth_baseline_max" => self.synth_baseline_max = num(value)?,
            "synth_bump_rate" => self.synth_bump_rate = num(value)?,
            "synth_bump_width" => self.synth_bump_width = num(value)?,
            "synth_noise_sd" => self.synth_noise_sd = num(value)?,
            "synth_low_confidence" => self.synth_low_confidence = num(value)?,
            _ => {
                return Err(format!(
                    "unknown key `{key}`; valid keys: {}",
                    Self::KEYS.join(", ")
                ))
            }
        }
        Ok(())
    }

    /// Parses `key = value` lines over the defaults. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config {
                    line: i + 1,
                    message: format!("expected `key = value`, got `{line}`"),
                });
            };
            cfg.set(key.trim(), value.trim()).map_err(|message| Error::Config {
                line: i + 1,
                message,
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.preprocess.validate()?;
        self.wcc.validate()?;
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.pursuit.atoms == 0 || self.pursuit.sigmas.iter().any(|s| !(*s > 0.0)) {
            return bad("mp_atoms must be positive and every sigma positive");
        }
        if !(self.theta_seconds >= 0.0) {
            return bad("theta_seconds must be non-negative");
        }
        if !(self.lambda >= 0.0) || !(0.0..=1.0).contains(&self.alpha) {
            return bad("lambda must be non-negative and alpha in [0, 1]");
        }
        if self.lambda_grid.iter().any(|l| !(*l >= 0.0))
            || self.alpha_grid.iter().any(|a| !(0.0..=1.0).contains(a))
        {
            return bad("grid values out of range");
        }
        if self.folds < 2 || self.min_visits == 0 || self.n_trees == 0 {
            return bad("folds must be at least 2; min_repeats and n_trees positive");
        }
        if self.synth_coupled_channels > K_AU {
            return bad("synth_coupled_channels exceeds the number of AU channels");
        }
        self.synth_spec().validate()
    }

    pub fn feature_config(&self) -> FeatureConfig {
        FeatureConfig {
            theta_seconds: self.theta_seconds,
            wcc: self.wcc,
        }
    }

    pub fn cv_options(&self, model: ModelKind) -> CvOptions {
        CvOptions {
            model,
            lambda: self.lambda,
            alpha: self.alpha,
            folds: self.folds,
            min_visits: self.min_visits,
            seed: self.seed,
            forest: ForestParams {
                n_trees: self.n_trees,
                ..ForestParams::default()
            },
            ..CvOptions::default()
        }
    }

    pub fn synth_spec(&self) -> SynthSpec {
        let fs = self.synth_frame_rate;
        let max = (self.synth_max_lag_seconds * fs).round() as i64;
        let lag = match self.synth_lag_shape {
            LagShape::Uniform => LagDist::Uniform { min: 0, max },
            LagShape::Exponential => LagDist::Exponential {
                mean: self.synth_lag_mean_seconds * fs,
                max,
            },
        };
        let mut coupling = vec![Coupling::None; K_AU];
        for c in coupling.iter_mut().take(self.synth_coupled_channels) {
            *c = Coupling::Lag(lag);
        }
        SynthSpec {
            n_sessions: self.synth_sessions,
            n_coupled: self.synth_coupled,
            frames: self.synth_frames,
            frame_rate_hz: fs,
            coupling,
            bump_rate_per_minute: self.synth_bump_rate,
            bump_width_sigma: self.synth_bump_width,
            noise_sd: self.synth_noise_sd,
            echo_probability: self.synth_echo_probability,
            gain_spread: self.synth_gain_spread,
            baseline_max: self.synth_baseline_max,
            low_confidence_sessions: self.synth_low_confidence,
            dropouts: None,
            seed: self.seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_known_keys() {
        let cfg = RunConfig::parse(
            "# comment\n\ntau = 0.6\nimpute = true\nmp_sigmas = 2, 8\nmin_repeats = 10\nseed=7\nshuffle_scope = subject\n",
        )
        .unwrap();
        assert_eq!(cfg.preprocess.tau, 0.6);
        assert!(cfg.preprocess.impute);
        assert_eq!(cfg.pursuit.sigmas, vec![2.0, 8.0]);
        assert_eq!(cfg.min_visits, 10);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.shuffle_scope, ShuffleScope::Subject);
    }

    #[test]
    fn unknown_key_names_the_line() {
        let err = RunConfig::parse("tau = 0.7\nbogus = 1\n").unwrap_err();
        assert!(matches!(err, Error::Config { line: 2, .. }));
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn malformed_values_are_rejected() {
        assert!(RunConfig::parse("tau = high").is_err());
        assert!(RunConfig::parse("tau").is_err());
        assert!(RunConfig::parse("tau = 1.5").is_err());
        assert!(RunConfig::parse("alpha = 2").is_err());
    }

    #[test]
    fn synth_spec_reflects_keys() {
        let cfg = RunConfig::parse("synth_coupled_channels = 3\nsynth_max_lag_seconds = 2\n").unwrap();
        let spec = cfg.synth_spec();
        assert_eq!(
            spec.coupling.iter().filter(|c| **c != Coupling::None).count(),
            3
        );
        assert_eq!(spec.coupling[0], Coupling::Lag(LagDist::Uniform { min: 0, max: 60 }));
    }
}
