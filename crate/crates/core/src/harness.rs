//! Full trials: pattern generation, tuning, the training loop with
//! convergence tracking, representation extraction, outcome classification
//! and parameter sweeps.

use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autotune::{convergence_measure, tune, TuneResult};
use crate::config::SweepAxis;
pub use crate::config::TrialConfig;
use crate::dynamics::NeuronConfig;
use crate::dynamics::{simulate_pattern, EventLog, Network, NoPlasticity, PostSpike, SimOptions};
use crate::error::{param, Result};
use crate::kernel::{InhibitionParams, KernelParams};
use crate::mismatch::{sample_mismatch, MismatchInstance};
use crate::plasticity::{
    reset_fitness, rewire_after_pattern, FitnessLearner, FitnessTable, RewireConfig, RewireReport,
};
use crate::rng::{derive_seed, stream};
use crate::spike::{apply_jitter, gen_poisson_template, make_epoch, JitterSpec, PatternTemplate};
use crate::wiring::Wiring;

/// Neuron indices in firing order; empty means "no representation".
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Representation(pub Vec<u32>);

impl Representation {
    pub fn none() -> Self {
        Self(Vec::new())
    }

    pub fn is_none(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_none() {
            return f.write_str("none");
        }
        let parts: Vec<String> = self.0.iter().map(u32::to_string).collect();
        write!(f, "[{}]", parts.join(","))
    }
}

/// First firing neuron for one subpattern, the whole firing sequence
/// otherwise.
pub fn extract_representation(log: &EventLog, n_sub: usize) -> Representation {
    if n_sub <= 1 {
        Representation(log.post.first().map(|s| vec![s.neuron]).unwrap_or_default())
    } else {
        Representation(log.post.iter().map(|s| s.neuron).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FailureMode {
    /// Learned representations are missing or not distinct.
    F1,
    /// A test pattern maps onto another class.
    F2,
    /// A test pattern maps onto no learned class.
    F3,
}

impl fmt::Display for FailureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::F1 => "F1",
            Self::F2 => "F2",
            Self::F3 => "F3",
        })
    }
}

/// `None` is success. `learned[c]` and `test[c]` belong to the same class.
pub fn classify_outcome(
    learned: &[Representation],
    test: &[Representation],
) -> Option<FailureMode> {
    debug_assert_eq!(learned.len(), test.len());
    if learned.iter().any(Representation::is_none) {
        return Some(FailureMode::F1);
    }
    for (a, ra) in learned.iter().enumerate() {
        if learned[a + 1..].contains(ra) {
            return Some(FailureMode::F1);
        }
    }
    for (c, t) in test.iter().enumerate() {
        if learned.iter().enumerate().any(|(o, l)| o != c && l == t) {
            return Some(FailureMode::F2);
        }
    }
    if test.iter().zip(learned).any(|(t, l)| t != l) {
        return Some(FailureMode::F3);
    }
    None
}

/// Saturation: the mean of the last `window` CM values differs from the
/// mean of the `window` before by less than `tolerance` (relative).
pub fn cm_saturated(cm: &[f64], window: usize, tolerance: f64) -> bool {
    let n = cm.len();
    if window == 0 || n < 2 * window {
        return false;
    }
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let last = mean(&cm[n - window..]);
    let prev = mean(&cm[n - 2 * window..n - window]);
    if !last.is_finite() || !prev.is_finite() {
        return false;
    }
    if prev == 0.0 {
        return last == 0.0;
    }
    ((last - prev) / prev).abs() < tolerance
}

/// A trained (or untrained) network ready to be presented with patterns.
#[derive(Debug, Clone)]
pub struct Model {
    pub tune: TuneResult,
    pub wiring: Wiring,
    pub mismatch: Option<MismatchInstance>,
    pub dt: f64,
}

impl Model {
    pub fn kernel(&self) -> KernelParams {
        self.tune.kernel()
    }

    pub fn neuron(&self) -> NeuronConfig {
        self.tune.neuron()
    }

    pub fn inhibition(&self) -> InhibitionParams {
        self.tune.inhibition()
    }

    /// Runs one pattern with plasticity off.
    pub fn present(&self, pattern: &PatternTemplate) -> Result<EventLog> {
        let (kernel, neuron, inh) = (self.kernel(), self.neuron(), self.inhibition());
        let net = Network {
            wiring: &self.wiring,
            neuron: &neuron,
            kernel: &kernel,
            inhibition: Some(&inh),
            mismatch: self.mismatch.as_ref(),
        };
        let opts = SimOptions {
            dt: self.dt,
            ..Default::default()
        };
        Ok(simulate_pattern(&net, pattern, &opts, &mut NoPlasticity)?.0)
    }

    pub fn represent(&self, pattern: &PatternTemplate) -> Result<Representation> {
        Ok(extract_representation(
            &self.present(pattern)?,
            self.tune.n_sub,
        ))
    }
}

/// Fraction of `probes` whose representation equals any learned one.
/// Probes producing no spikes never count.
pub fn false_positive_probe(
    model: &Model,
    learned: &[Representation],
    probes: &[PatternTemplate],
) -> Result<(usize, f64)> {
    if probes.is_empty() {
        return Ok((0, 0.0));
    }
    let mut hits = 0;
    for p in probes {
        let r = model.represent(p)?;
        if !r.is_none() && learned.contains(&r) {
            hits += 1;
        }
    }
    Ok((hits, hits as f64 / probes.len() as f64))
}

/// One presentation during training, kept when auditing is on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternAudit {
    pub epoch: usize,
    pub class_label: u32,
    pub post: Vec<PostSpike>,
    pub rewire: RewireReport,
}

#[derive(Debug, Clone)]
pub struct TrialResult {
    pub trial_id: usize,
    pub seed: u64,
    pub success: bool,
    pub failure_mode: Option<FailureMode>,
    /// Epochs run: the saturation epoch, or `max_epochs` if never saturated.
    pub ep_sat: usize,
    pub saturated: bool,
    pub l_mean_trace: Vec<f64>,
    pub cm_trace: Vec<f64>,
    /// Per class, in template order, from the final training epoch.
    pub learned: Vec<Representation>,
    /// Per test round, per class.
    pub test: Vec<Vec<Representation>>,
    pub false_positives: usize,
    pub fp_rate: f64,
    pub model: Model,
    pub audit: Vec<PatternAudit>,
}

impl TrialResult {
    /// Last finite CM value.
    pub fn final_cm(&self) -> Option<f64> {
        self.cm_trace.iter().rev().copied().find(|c| c.is_finite())
    }
}

/// Class templates for one trial; labels are `0..C`.
pub fn trial_templates(cfg: &TrialConfig) -> Result<Vec<PatternTemplate>> {
    let s = &cfg.stimulus;
    let mut rng = stream(cfg.seed, "templates", 0);
    (0..s.classes)
        .map(|c| {
            gen_poisson_template(
                s.d,
                s.rate,
                s.duration,
                s.active_fraction,
                c as u32,
                &mut rng,
            )
        })
        .collect()
}

/// Mean over patterns that produced spikes of the per-pattern latency sum;
/// NaN when no pattern in the epoch produced any.
fn epoch_l_mean(sums: &[Option<f64>]) -> f64 {
    let vals: Vec<f64> = sums.iter().flatten().copied().collect();
    if vals.is_empty() {
        f64::NAN
    } else {
        vals.iter().sum::<f64>() / vals.len() as f64
    }
}

pub fn run_trial(cfg: &TrialConfig) -> Result<TrialResult> {
    cfg.validate()?;
    let templates = trial_templates(cfg)?;
    let (tuned, wiring) = tune(cfg, &templates, &mut stream(cfg.seed, "tune", 0))?;
    let geometry = *wiring.geometry();
    let mismatch = match &cfg.mismatch {
        Some(spec) => Some(sample_mismatch(
            spec,
            geometry,
            &mut stream(cfg.seed, "mismatch", 0),
        )?),
        None => None,
    };
    let mut model = Model {
        tune: tuned,
        wiring,
        mismatch,
        dt: cfg.network.dt,
    };
    let jitter = JitterSpec::new(cfg.stimulus.sigma_jitter)?;
    let rewire = match cfg.training.n_r {
        Some(n_r) => RewireConfig { n_r },
        None => RewireConfig::default_for(cfg.stimulus.d),
    };
    let t = &cfg.training;

    let (kernel, neuron, inh) = (model.kernel(), model.neuron(), model.inhibition());
    let opts = SimOptions {
        dt: model.dt,
        ..Default::default()
    };
    let mut epoch_rng = stream(cfg.seed, "epochs", 0);
    let mut rewire_rng = stream(cfg.seed, "rewire", 0);
    let mut table = FitnessTable::new(&geometry);
    let mut l_mean_trace = Vec::new();
    let mut cm_trace = Vec::new();
    let mut audit = Vec::new();
    let mut learned = vec![Representation::none(); templates.len()];
    let mut saturated = false;

    for epoch in 0..t.max_epochs {
        let ep = make_epoch(&templates, jitter, &mut epoch_rng)?;
        let mut sums = Vec::with_capacity(ep.patterns.len());
        for p in &ep.patterns {
            reset_fitness(&mut table);
            let log = {
                let net = Network {
                    wiring: &model.wiring,
                    neuron: &neuron,
                    kernel: &kernel,
                    inhibition: Some(&inh),
                    mismatch: model.mismatch.as_ref(),
                };
                let mut learner = FitnessLearner {
                    table: &mut table,
                    cc: model.mismatch.as_ref().map(|m| m.cc.as_slice()),
                };
                simulate_pattern(&net, p, &opts, &mut learner)?.0
            };
            let report =
                rewire_after_pattern(&mut model.wiring, &table, &log, &rewire, &mut rewire_rng)?;
            sums.push((!log.post.is_empty()).then(|| log.latency_sum()));
            let slot = templates
                .iter()
                .position(|tp| tp.class_label == p.class_label)
                .expect("epoch built from templates");
            learned[slot] = extract_representation(&log, tuned.n_sub);
            if t.audit {
                audit.push(PatternAudit {
                    epoch,
                    class_label: p.class_label,
                    post: log.post,
                    rewire: report,
                });
            }
        }
        let l_mean = epoch_l_mean(&sums);
        l_mean_trace.push(l_mean);
        cm_trace.push(convergence_measure(l_mean, tuned.n_sub, tuned.t_sub)?);
        if cm_saturated(&cm_trace, t.window, t.tolerance) {
            saturated = true;
            break;
        }
    }
    let ep_sat = cm_trace.len();

    let mut test_rng = stream(cfg.seed, "test", 0);
    let mut test = Vec::with_capacity(t.test_patterns);
    let mut failure_mode = None;
    for _ in 0..t.test_patterns {
        let round = templates
            .iter()
            .map(|tp| model.represent(&apply_jitter(tp, jitter, &mut test_rng)?))
            .collect::<Result<Vec<_>>>()?;
        failure_mode = failure_mode.or(classify_outcome(&learned, &round));
        test.push(round);
    }

    let mut probe_rng = stream(cfg.seed, "probes", 0);
    let s = &cfg.stimulus;
    let probes = (0..t.n_probes)
        .map(|i| {
            gen_poisson_template(
                s.d,
                s.rate,
                s.duration,
                s.active_fraction,
                (s.classes + i) as u32,
                &mut probe_rng,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let (false_positives, fp_rate) = false_positive_probe(&model, &learned, &probes)?;

    Ok(TrialResult {
        trial_id: 0,
        seed: cfg.seed,
        success: failure_mode.is_none(),
        failure_mode,
        ep_sat,
        saturated,
        l_mean_trace,
        cm_trace,
        learned,
        test,
        false_positives,
        fp_rate,
        model,
        audit,
    })
}

/// Runs `n` independent trials in parallel. Trial `i` uses the seed
/// `derive_seed(cfg.seed, label, i)`, so results do not depend on the
/// thread count or completion order.
pub fn run_trials(cfg: &TrialConfig, n: usize, label: &str) -> Result<Vec<TrialResult>> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let c = TrialConfig {
                seed: derive_seed(cfg.seed, label, i as u64),
                ..cfg.clone()
            };
            let mut r = run_trial(&c)?;
            r.trial_id = i;
            Ok(r)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub point: f64,
    pub success_pct: f64,
    pub ep_sat_avg: f64,
    /// Mean final CM over trials that produced one, seconds.
    pub cm_final_avg: f64,
}

impl SweepRow {
    pub fn from_results(point: f64, results: &[TrialResult]) -> Self {
        let n = results.len().max(1) as f64;
        let cms: Vec<f64> = results.iter().filter_map(TrialResult::final_cm).collect();
        Self {
            point,
            success_pct: 100.0 * results.iter().filter(|r| r.success).count() as f64 / n,
            ep_sat_avg: results.iter().map(|r| r.ep_sat as f64).sum::<f64>() / n,
            cm_final_avg: if cms.is_empty() {
                f64::NAN
            } else {
                cms.iter().sum::<f64>() / cms.len() as f64
            },
        }
    }
}

/// Applies one sweep coordinate to a base configuration.
pub fn sweep_point_config(base: &TrialConfig, axis: SweepAxis, point: f64) -> Result<TrialConfig> {
    let mut cfg = base.clone();
    match axis {
        SweepAxis::NOverC => {
            if !(point >= 1.0) || point.fract() != 0.0 {
                return Err(param(format!(
                    "N/C grid values must be positive integers (got {point})"
                )));
            }
            cfg.network.neurons = Some(point as usize * cfg.stimulus.classes);
        }
        SweepAxis::SigmaJitter => {
            if !(point >= 0.0) || !point.is_finite() {
                return Err(param(format!("jitter ratio must be >= 0 (got {point})")));
            }
            cfg.stimulus.sigma_jitter = point * base.nominal_tau_s()?;
        }
        SweepAxis::NSub => {
            if !(point >= 1.0) || point.fract() != 0.0 {
                return Err(param(format!(
                    "n_sub grid values must be positive integers (got {point})"
                )));
            }
            cfg.network.n_sub = point as usize;
            cfg.network.neurons = None;
        }
    }
    Ok(cfg)
}

/// Seed for one grid point, from the master seed and the point value.
pub fn sweep_point_seed(master: u64, axis: SweepAxis, point: f64) -> u64 {
    let tag = match axis {
        SweepAxis::NOverC => "sweep/n_over_c",
        SweepAxis::SigmaJitter => "sweep/sigma_jitter",
        SweepAxis::NSub => "sweep/n_sub",
    };
    derive_seed(master, tag, point.to_bits())
}

/// Runs `trials` trials per grid point. Returns the aggregate rows and the
/// raw results per point.
pub fn sweep(
    base: &TrialConfig,
    axis: SweepAxis,
    grid: &[f64],
    trials: usize,
) -> Result<(Vec<SweepRow>, Vec<Vec<TrialResult>>)> {
    if grid.is_empty() {
        return Err(param("sweep grid is empty"));
    }
    if trials == 0 {
        return Err(param("trials_per_point must be >= 1"));
    }
    let mut rows = Vec::with_capacity(grid.len());
    let mut raw = Vec::with_capacity(grid.len());
    for &point in grid {
        let mut cfg = sweep_point_config(base, axis, point)?;
        cfg.seed = sweep_point_seed(base.seed, axis, point);
        let results = run_trials(&cfg, trials, "trial")?;
        log::info!("sweep {axis:?} = {point}: {} trials done", results.len());
        rows.push(SweepRow::from_results(point, &results));
        raw.push(results);
    }
    Ok((rows, raw))
}

fn fmt_secs(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.6}")
    } else {
        "nan".into()
    }
}

fn fmt_num(x: f64, decimals: usize) -> String {
    if x.is_finite() {
        format!("{x:.decimals$}")
    } else {
        "nan".into()
    }
}

pub fn write_epoch_csv<W: Write>(results: &[TrialResult], mut out: W) -> std::io::Result<()> {
    writeln!(out, "trial_id,epoch,l_mean_s,CM_s")?;
    for r in results {
        for (e, (l, cm)) in r.l_mean_trace.iter().zip(&r.cm_trace).enumerate() {
            writeln!(
                out,
                "{},{},{},{}",
                r.trial_id,
                e + 1,
                fmt_secs(*l),
                fmt_secs(*cm)
            )?;
        }
    }
    Ok(())
}

pub fn write_trial_csv<W: Write>(results: &[TrialResult], mut out: W) -> std::io::Result<()> {
    writeln!(out, "trial_id,success,failure_mode,ep_sat,fp_rate")?;
    for r in results {
        let mode = r.failure_mode.map_or("none".to_string(), |m| m.to_string());
        writeln!(
            out,
            "{},{},{},{},{:.4}",
            r.trial_id, r.success, mode, r.ep_sat, r.fp_rate
        )?;
    }
    Ok(())
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "point,success_pct,ep_sat_avg,cm_final_avg")?;
    for r in rows {
        writeln!(
            out,
            "{},{:.2},{},{}",
            r.point,
            r.success_pct,
            fmt_num(r.ep_sat_avg, 2),
            fmt_secs(r.cm_final_avg)
        )?;
    }
    Ok(())
}
