//! Frozen fabrication mismatch: multiplicative Gaussian factors on synapse
//! amplitude and time constant (per slot), squaring-block gain (per
//! branch), firing threshold (per neuron) and fitness-calculator gain (per
//! branch).

use std::collections::BTreeSet;
use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::TrialConfig;
use crate::error::{param, Result};
use crate::harness::run_trials;
use crate::wiring::Geometry;

/// Lower truncation point for every factor.
pub const FACTOR_FLOOR: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Nonideality {
    I0,
    TauS,
    Cb,
    Vthr,
    Cc,
}

impl Nonideality {
    pub const ALL: [Nonideality; 5] = [Self::I0, Self::TauS, Self::Cb, Self::Vthr, Self::Cc];
}

impl fmt::Display for Nonideality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::I0 => "I0",
            Self::TauS => "tau_s",
            Self::Cb => "cb",
            Self::Vthr => "V_thr",
            Self::Cc => "cc",
        })
    }
}

/// Coefficients of variation (σ/μ) per nonideality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MismatchSpec {
    pub cv_i0: f64,
    pub cv_tau_s: f64,
    pub cv_cb: f64,
    pub cv_vthr: f64,
    pub cv_cc: f64,
    pub enabled: BTreeSet<Nonideality>,
}

impl Default for MismatchSpec {
    fn default() -> Self {
        Self {
            cv_i0: 0.13,
            cv_tau_s: 0.101,
            cv_cb: 0.18,
            cv_vthr: 0.125,
            cv_cc: 0.18,
            enabled: Nonideality::ALL.into_iter().collect(),
        }
    }
}

impl MismatchSpec {
    pub fn only(mut self, which: &[Nonideality]) -> Self {
        self.enabled = which.iter().copied().collect();
        self
    }

    pub fn cv(&self, which: Nonideality) -> f64 {
        match which {
            Nonideality::I0 => self.cv_i0,
            Nonideality::TauS => self.cv_tau_s,
            Nonideality::Cb => self.cv_cb,
            Nonideality::Vthr => self.cv_vthr,
            Nonideality::Cc => self.cv_cc,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for which in Nonideality::ALL {
            let cv = self.cv(which);
            if !(cv >= 0.0 && cv.is_finite()) {
                return Err(param(format!("cv for {which} must be >= 0 (got {cv})")));
            }
        }
        Ok(())
    }

    /// Label used in degradation tables: the single enabled factor, or
    /// `(...)` when all are enabled.
    pub fn label(&self) -> String {
        if self.enabled.len() == Nonideality::ALL.len() {
            "(...)".into()
        } else if self.enabled.is_empty() {
            "ideal".into()
        } else {
            self.enabled
                .iter()
                .map(|n| n.to_string())
                .collect::<Vec<_>>()
                .join("+")
        }
    }
}

/// Sampled factors, fixed for the lifetime of a trial.
#[derive(Debug, Clone, PartialEq)]
pub struct MismatchInstance {
    pub geometry: Geometry,
    /// Per synapse slot, indexed like [`crate::wiring::Wiring::slot_lines`].
    pub i0: Vec<f64>,
    pub tau_s: Vec<f64>,
    /// Per branch, indexed `n * m + j`.
    pub cb: Vec<f64>,
    /// Per neuron.
    pub v_thr: Vec<f64>,
    /// Per branch, scales every fitness increment computed on it.
    pub cc: Vec<f64>,
}

impl MismatchInstance {
    pub fn ideal(geometry: Geometry) -> Self {
        Self {
            geometry,
            i0: vec![1.0; geometry.n_slots()],
            tau_s: vec![1.0; geometry.n_slots()],
            cb: vec![1.0; geometry.n_branches()],
            v_thr: vec![1.0; geometry.neurons],
            cc: vec![1.0; geometry.n_branches()],
        }
    }

    pub fn has_tau_variation(&self) -> bool {
        self.tau_s.iter().any(|&f| f != 1.0)
    }

    pub fn all_factors(&self) -> impl Iterator<Item = f64> + '_ {
        self.i0
            .iter()
            .chain(&self.tau_s)
            .chain(&self.cb)
            .chain(&self.v_thr)
            .chain(&self.cc)
            .copied()
    }
}

fn draw<R: Rng + ?Sized>(n: usize, cv: f64, rng: &mut R) -> Vec<f64> {
    if cv == 0.0 {
        return vec![1.0; n];
    }
    let normal = Normal::new(1.0, cv).expect("cv validated");
    (0..n)
        .map(|_| loop {
            let x = normal.sample(rng);
            if x >= FACTOR_FLOOR {
                break x;
            }
        })
        .collect()
}

/// Draws every enabled factor from `N(1, cv²)` truncated to `[0.1, ∞)`;
/// disabled factors are exactly 1.
pub fn sample_mismatch<R: Rng + ?Sized>(
    spec: &MismatchSpec,
    geometry: Geometry,
    rng: &mut R,
) -> Result<MismatchInstance> {
    spec.validate()?;
    let mut inst = MismatchInstance::ideal(geometry);
    for which in Nonideality::ALL {
        if !spec.enabled.contains(&which) {
            continue;
        }
        let cv = spec.cv(which);
        let target = match which {
            Nonideality::I0 => &mut inst.i0,
            Nonideality::TauS => &mut inst.tau_s,
            Nonideality::Cb => &mut inst.cb,
            Nonideality::Vthr => &mut inst.v_thr,
            Nonideality::Cc => &mut inst.cc,
        };
        *target = draw(target.len(), cv, rng);
    }
    Ok(inst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradationRow {
    pub config_label: String,
    pub success_pct: f64,
    pub ideal_pct: f64,
}

impl DegradationRow {
    pub fn drop(&self) -> f64 {
        self.ideal_pct - self.success_pct
    }
}

/// Runs the ideal baseline, each single nonideality from `spec.enabled`,
/// and all of them together. Every configuration sees the same trial seeds,
/// so differences come from the mismatch alone.
pub fn degradation_experiment(
    base: &TrialConfig,
    spec: &MismatchSpec,
    trials: usize,
) -> Result<Vec<DegradationRow>> {
    spec.validate()?;
    if trials == 0 {
        return Err(param("trials must be >= 1"));
    }
    let success_pct = |mismatch: Option<MismatchSpec>| -> Result<f64> {
        let cfg = TrialConfig {
            mismatch,
            ..base.clone()
        };
        let results = run_trials(&cfg, trials, "mismatch")?;
        Ok(100.0 * results.iter().filter(|r| r.success).count() as f64 / trials as f64)
    };

    let ideal = success_pct(None)?;
    let mut configs: Vec<MismatchSpec> = spec
        .enabled
        .iter()
        .map(|&n| spec.clone().only(&[n]))
        .collect();
    configs.push(spec.clone().only(&Nonideality::ALL));

    let mut rows = Vec::with_capacity(configs.len());
    for cfg in configs {
        rows.push(DegradationRow {
            config_label: cfg.label(),
            success_pct: success_pct(Some(cfg))?,
            ideal_pct: ideal,
        });
    }
    Ok(rows)
}

pub fn write_degradation_csv<W: std::io::Write>(
    rows: &[DegradationRow],
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "config_label,success_pct,ideal_pct")?;
    for r in rows {
        writeln!(
            out,
            "{},{:.2},{:.2}",
            r.config_label, r.success_pct, r.ideal_pct
        )?;
    }
    Ok(())
}
