//! Experiment configuration. A TOML document with nested sections; every
//! field has a default so an empty file is a valid configuration.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autotune::tau_s_opt;
use crate::dynamics::{DEFAULT_DT, DEFAULT_TAU_M};
use crate::error::{io_err, param, Error, Result};
use crate::mismatch::MismatchSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StimulusConfig {
    /// Input dimension (afferent count).
    pub d: usize,
    /// Poisson rate per active afferent, Hz.
    pub rate: f64,
    /// Pattern duration, seconds.
    pub duration: f64,
    pub classes: usize,
    pub active_fraction: f64,
    /// Jitter standard deviation, seconds.
    pub sigma_jitter: f64,
}

impl Default for StimulusConfig {
    fn default() -> Self {
        Self {
            d: 100,
            rate: 20.0,
            duration: 0.5,
            classes: 2,
            active_fraction: 1.0,
            sigma_jitter: 0.0,
        }
    }
}

/// Network shape plus optional overrides for any tuned parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub n_sub: usize,
    /// `None` selects `11 C` for one subpattern, `C n_sub` otherwise.
    pub neurons: Option<usize>,
    pub dt: f64,
    pub tau_m: f64,
    pub m: Option<usize>,
    pub tau_s: Option<f64>,
    pub x_thr: Option<f64>,
    pub v_thr: Option<f64>,
    /// Absolute inhibitory amplitude; when unset `i0_inh_ratio * I_e,av`.
    pub i0_inh: Option<f64>,
    pub i0_inh_ratio: f64,
    pub tau_s_inh: Option<f64>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            n_sub: 1,
            neurons: None,
            dt: DEFAULT_DT,
            tau_m: DEFAULT_TAU_M,
            m: None,
            tau_s: None,
            x_thr: None,
            v_thr: None,
            i0_inh: None,
            i0_inh_ratio: 5.0,
            tau_s_inh: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub max_epochs: usize,
    /// Moving-average window for saturation detection, epochs.
    pub window: usize,
    /// Relative change between consecutive windows counted as saturated.
    pub tolerance: f64,
    /// Candidate set size; `None` selects `d / 4`.
    pub n_r: Option<usize>,
    /// Epochs presented before training to calibrate inhibition.
    pub ep_ini: usize,
    /// Random wirings used for the threshold calibrations.
    pub calibration_trials: usize,
    /// Fresh jittered test patterns per class.
    pub test_patterns: usize,
    /// Random probe patterns for the false-positive test.
    pub n_probes: usize,
    /// Keep per-pattern rewiring reports.
    pub audit: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            max_epochs: 500,
            window: 20,
            tolerance: 0.01,
            n_r: None,
            ep_ini: 5,
            calibration_trials: 200,
            test_patterns: 1,
            n_probes: 50,
            audit: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Neurons per class.
    NOverC,
    /// Jitter expressed as `σ_jitter / τ_s`.
    SigmaJitter,
    NSub,
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "n_over_c" | "N_over_C" => Ok(Self::NOverC),
            "sigma_jitter" => Ok(Self::SigmaJitter),
            "n_sub" => Ok(Self::NSub),
            other => Err(param(format!("unknown sweep axis {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub grid: Vec<f64>,
    pub trials_per_point: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            axis: SweepAxis::NOverC,
            grid: (1..=13).map(f64::from).collect(),
            trials_per_point: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub stimulus: StimulusConfig,
    pub network: NetworkConfig,
    pub training: TrainingConfig,
    pub sweep: SweepConfig,
    pub mismatch: MismatchSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            output: None,
            stimulus: StimulusConfig::default(),
            network: NetworkConfig::default(),
            training: TrainingConfig::default(),
            sweep: SweepConfig::default(),
            mismatch: MismatchSpec::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn trial_config(&self, with_mismatch: bool) -> TrialConfig {
        TrialConfig {
            seed: self.seed,
            stimulus: self.stimulus.clone(),
            network: self.network.clone(),
            training: self.training.clone(),
            mismatch: with_mismatch.then(|| self.mismatch.clone()),
        }
    }
}

/// Everything one trial needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub seed: u64,
    pub stimulus: StimulusConfig,
    pub network: NetworkConfig,
    pub training: TrainingConfig,
    pub mismatch: Option<MismatchSpec>,
}

impl Default for TrialConfig {
    fn default() -> Self {
        ExperimentConfig::default().trial_config(false)
    }
}

impl TrialConfig {
    pub fn neurons(&self) -> usize {
        let c = self.stimulus.classes;
        self.network.neurons.unwrap_or(if self.network.n_sub <= 1 {
            11 * c
        } else {
            c * self.network.n_sub
        })
    }

    /// Slow synaptic time constant before any calibration: the override if
    /// set, otherwise the inter-spike-interval rule on the active inputs.
    pub fn nominal_tau_s(&self) -> Result<f64> {
        match self.network.tau_s {
            Some(t) => Ok(t),
            None => tau_s_opt(self.effective_d(), self.stimulus.rate),
        }
    }

    pub fn effective_d(&self) -> f64 {
        let s = &self.stimulus;
        let empty = ((s.d as f64) * (1.0 - s.active_fraction) + 1e-9).floor();
        s.d as f64 - empty
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.stimulus;
        if s.classes == 0 {
            return Err(param("classes (C) must be >= 1"));
        }
        if s.d == 0 {
            return Err(param("d must be >= 1"));
        }
        if !(s.duration > 0.0) {
            return Err(param("duration must be > 0"));
        }
        if !(s.sigma_jitter >= 0.0) {
            return Err(param("sigma_jitter must be >= 0"));
        }
        if !(s.active_fraction > 0.0 && s.active_fraction <= 1.0) {
            return Err(param("active_fraction must lie in (0, 1]"));
        }
        let n = &self.network;
        if n.n_sub == 0 {
            return Err(param("n_sub must be >= 1"));
        }
        if self.neurons() == 0 {
            return Err(param("N must be >= 1"));
        }
        if !(n.dt > 0.0) || !(n.tau_m > 0.0) {
            return Err(param("dt and tau_m must be > 0"));
        }
        if !(n.i0_inh_ratio > 1.0) && n.i0_inh.is_none() && n.tau_s_inh.is_none() {
            return Err(param("i0_inh_ratio must be > 1"));
        }
        let t = &self.training;
        if t.max_epochs == 0 || t.window == 0 || t.ep_ini == 0 || t.calibration_trials == 0 {
            return Err(param(
                "max_epochs, window, ep_ini and calibration_trials must be >= 1",
            ));
        }
        if t.test_patterns == 0 {
            return Err(param("test_patterns must be >= 1"));
        }
        if let Some(nr) = t.n_r {
            if nr == 0 || nr > s.d {
                return Err(param(format!("n_r must lie in [1, {}]", s.d)));
            }
        }
        if let Some(mm) = &self.mismatch {
            mm.validate()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_benchmark_setup() {
        let c = ExperimentConfig::default();
        assert_eq!(c.stimulus.d, 100);
        assert_eq!(c.stimulus.rate, 20.0);
        assert_eq!(c.stimulus.duration, 0.5);
        assert_eq!(c.stimulus.active_fraction, 1.0);
        assert_eq!(c.network.dt, 1e-4);
    }

    #[test]
    fn neuron_count_defaults() {
        let mut t = TrialConfig::default();
        t.stimulus.classes = 4;
        assert_eq!(t.neurons(), 44);
        t.network.n_sub = 5;
        assert_eq!(t.neurons(), 20);
        t.network.neurons = Some(7);
        assert_eq!(t.neurons(), 7);
    }

    #[test]
    fn toml_round_trip_and_partial_files() {
        let c = ExperimentConfig::default();
        let text = c.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), c);
        let partial =
            ExperimentConfig::from_toml_str("seed = 9\n[stimulus]\nclasses = 4\n").unwrap();
        assert_eq!(partial.seed, 9);
        assert_eq!(partial.stimulus.classes, 4);
        assert_eq!(partial.stimulus.d, 100);
        assert!(ExperimentConfig::from_toml_str("[stimulus]\nbogus = 1\n").is_err());
    }

    #[test]
    fn zero_classes_rejected() {
        let mut t = TrialConfig::default();
        t.stimulus.classes = 0;
        assert!(t.validate().is_err());
    }
}
