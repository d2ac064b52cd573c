//! Parameter selection: dendrite count from memorization capacity, kernel
//! time constant from the input inter-spike interval, thresholds from
//! random-wiring statistics, and the inhibitory kernel from the mean
//! excitatory drive.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::TrialConfig;
use crate::dynamics::{simulate_pattern, Network, NeuronConfig, NoPlasticity, SimOptions};
use crate::error::{param, Error, Result};
use crate::kernel::{InhibitionParams, KernelParams, FAST_RATIO};
use crate::spike::{make_epoch, Epoch, JitterSpec, PatternTemplate};
use crate::wiring::{Geometry, Wiring};

/// Smallest slow time constant the ISI rule may return, seconds.
pub const TAU_S_FLOOR: f64 = 0.5e-3;

/// Natural log of `C(n, k)` by summing `ln((n - k + t) / t)`.
fn ln_binomial(n: f64, k: usize) -> f64 {
    (1..=k)
        .map(|t| ((n - k as f64 + t as f64) / t as f64).ln())
        .sum()
}

/// Memorization capacity in bits: `log2 C(C(k+d-1, k) + m - 1, m)`.
///
/// The inner count is carried in the log domain; the outer binomial is
/// summed term by term as `ln(X + t)` with `X = e^{ln X}`, so nothing
/// overflows for any realistic `d`.
pub fn capacity(d: usize, k: usize, m: usize) -> Result<f64> {
    if d == 0 || k == 0 || m == 0 {
        return Err(param(format!(
            "capacity needs d, k, m >= 1 (got {d}, {k}, {m})"
        )));
    }
    let ln_x = ln_binomial((k + d - 1) as f64, k);
    let mut ln_outer = 0.0;
    for t in 0..m {
        // ln((X + t) / (t + 1))
        let ln_num = ln_x + (t as f64 * (-ln_x).exp()).ln_1p();
        ln_outer += ln_num - ((t + 1) as f64).ln();
    }
    Ok(ln_outer / std::f64::consts::LN_2)
}

/// `(m, k)` with `m` the divisor of `d` maximizing capacity at `s = d`
/// synapses per neuron. Ties go to the smaller `m`.
pub fn choose_m(d: usize) -> Result<(usize, usize)> {
    if d == 0 {
        return Err(param("d must be >= 1"));
    }
    let mut best: Option<(usize, f64)> = None;
    for m in (1..=d).filter(|m| d.is_multiple_of(*m)) {
        let b = capacity(d, d / m, m)?;
        if best.is_none_or(|(_, bb)| b > bb) {
            best = Some((m, b));
        }
    }
    let (m, _) = best.expect("1 divides d");
    Ok((m, d / m))
}

/// `τs,opt = 52.83 μ_ISI - 3.1` with `μ_ISI = 1 / (d μ_f)`, both in
/// milliseconds; returned in seconds and floored at 0.5 ms.
pub fn tau_s_opt(d: f64, mean_rate: f64) -> Result<f64> {
    if !(d * mean_rate > 0.0) || !(d * mean_rate).is_finite() {
        return Err(param(format!(
            "d * rate must be > 0 (got {d} * {mean_rate})"
        )));
    }
    let isi_ms = 1000.0 / (d * mean_rate);
    let tau_ms = 52.83 * isi_ms - 3.1;
    let tau = tau_ms * 1e-3;
    if tau <= TAU_S_FLOOR {
        if tau <= 0.0 {
            log::warn!("ISI rule gives non-positive tau_s ({tau_ms} ms); flooring at 0.5 ms");
        }
        return Ok(TAU_S_FLOOR);
    }
    Ok(tau)
}

/// `τs,inh = T_sub / ln(I0,inh / I_e,av)`.
pub fn inhibition_tau(t_sub: f64, i0_inh: f64, i_e_av: f64) -> Result<f64> {
    if !(t_sub > 0.0) {
        return Err(param("T_sub must be > 0"));
    }
    if !(i_e_av > 0.0) {
        return Err(Error::Calibration(format!(
            "mean excitatory current {i_e_av} is not positive"
        )));
    }
    if !(i0_inh > i_e_av) {
        return Err(Error::Calibration(format!(
            "I0_inh ({i0_inh}) must exceed the mean excitatory current ({i_e_av}); raise I0_inh"
        )));
    }
    Ok(t_sub / (i0_inh / i_e_av).ln())
}

/// `CM = l_mean / n_sub - (n_sub - 1) T_sub / 2`, where `l_mean` is the
/// per-pattern sum of post-spike latencies averaged over the epoch.
pub fn convergence_measure(l_mean: f64, n_sub: usize, t_sub: f64) -> Result<f64> {
    if n_sub == 0 {
        return Err(param("n_sub must be >= 1"));
    }
    Ok(l_mean / n_sub as f64 - (n_sub as f64 - 1.0) * t_sub / 2.0)
}

/// Neuron shape used by the Monte Carlo calibrations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationShape {
    pub branches: usize,
    pub synapses_per_branch: usize,
    pub inputs: usize,
    pub tau_m: f64,
    pub dt: f64,
}

impl CalibrationShape {
    fn geometry(&self, neurons: usize) -> Result<Geometry> {
        Geometry::new(
            neurons,
            self.branches,
            self.synapses_per_branch,
            self.inputs,
        )
    }
}

/// Mean branch input current over `trials` random branch wirings, all
/// steps and all sample patterns.
pub fn calibrate_x_thr<R: Rng + ?Sized>(
    shape: &CalibrationShape,
    kernel: &KernelParams,
    patterns: &[PatternTemplate],
    trials: usize,
    rng: &mut R,
) -> Result<f64> {
    if patterns.is_empty() {
        return Err(param("x_thr calibration needs at least one pattern"));
    }
    if trials == 0 {
        return Err(param("trials must be >= 1"));
    }
    let wiring = Wiring::random(shape.geometry(trials)?, rng);
    // b(.) is irrelevant here; any positive threshold will do
    let neuron = NeuronConfig {
        branches: shape.branches,
        synapses_per_branch: shape.synapses_per_branch,
        x_thr: 1.0,
        v_thr: 1.0,
        tau_m: shape.tau_m,
    };
    let net = Network {
        wiring: &wiring,
        neuron: &neuron,
        kernel,
        inhibition: None,
        mismatch: None,
    };
    let opts = SimOptions {
        dt: shape.dt,
        firing: false,
        record_voltages: false,
        stats: true,
    };
    let mut total = 0.0;
    for p in patterns {
        total += simulate_pattern(&net, p, &opts, &mut NoPlasticity)?
            .1
            .mean_branch_input;
    }
    let x_thr = total / patterns.len() as f64;
    if !(x_thr > 0.0) {
        return Err(Error::Calibration(
            "sample patterns produce no branch input (x_thr = 0); check the stimulus rate".into(),
        ));
    }
    Ok(x_thr)
}

/// Mean over random wirings and sample patterns of the peak membrane
/// voltage of a lone neuron with firing and inhibition disabled.
pub fn calibrate_v_thr<R: Rng + ?Sized>(
    shape: &CalibrationShape,
    kernel: &KernelParams,
    x_thr: f64,
    patterns: &[PatternTemplate],
    trials: usize,
    rng: &mut R,
) -> Result<f64> {
    if !(x_thr > 0.0) {
        return Err(param("x_thr must be > 0"));
    }
    if patterns.is_empty() {
        return Err(param("V_thr calibration needs at least one pattern"));
    }
    if trials == 0 {
        return Err(param("trials must be >= 1"));
    }
    let wiring = Wiring::random(shape.geometry(trials)?, rng);
    let neuron = NeuronConfig {
        branches: shape.branches,
        synapses_per_branch: shape.synapses_per_branch,
        x_thr,
        v_thr: 1.0,
        tau_m: shape.tau_m,
    };
    let net = Network {
        wiring: &wiring,
        neuron: &neuron,
        kernel,
        inhibition: None,
        mismatch: None,
    };
    let opts = SimOptions {
        dt: shape.dt,
        firing: false,
        record_voltages: false,
        stats: false,
    };
    let mut total = 0.0;
    for p in patterns {
        let (_, st) = simulate_pattern(&net, p, &opts, &mut NoPlasticity)?;
        total += st.v_max.iter().sum::<f64>() / trials as f64;
    }
    let v_thr = total / patterns.len() as f64;
    if !(v_thr > 0.0) {
        return Err(Error::Calibration(
            "sample patterns never depolarize the neuron (V_max = 0)".into(),
        ));
    }
    Ok(v_thr)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InhibitionAmplitude {
    /// `I0,inh = ratio * I_e,av`.
    Ratio(f64),
    Absolute(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InhibitionCalibration {
    pub i_e_av: f64,
    pub i0_inh: f64,
    pub tau_s_inh: f64,
    pub tau_f_inh: f64,
}

impl InhibitionCalibration {
    pub fn params(&self) -> InhibitionParams {
        InhibitionParams {
            i0: self.i0_inh,
            tau_s: self.tau_s_inh,
            tau_f: self.tau_f_inh,
        }
    }
}

/// Presents `epochs` with plasticity and inhibition off, averages the
/// summed dendritic output over neurons and time, and sizes the inhibitory
/// kernel so that it decays to that mean after `t_sub`.
pub fn calibrate_inhibition(
    wiring: &Wiring,
    neuron: &NeuronConfig,
    kernel: &KernelParams,
    epochs: &[Epoch],
    t_sub: f64,
    amplitude: InhibitionAmplitude,
    dt: f64,
) -> Result<InhibitionCalibration> {
    let patterns: Vec<&PatternTemplate> = epochs.iter().flat_map(|e| &e.patterns).collect();
    if patterns.is_empty() {
        return Err(param("inhibition calibration needs at least one epoch"));
    }
    let net = Network {
        wiring,
        neuron,
        kernel,
        inhibition: None,
        mismatch: None,
    };
    let opts = SimOptions {
        dt,
        firing: true,
        record_voltages: false,
        stats: true,
    };
    let mut total = 0.0;
    for p in &patterns {
        total += simulate_pattern(&net, p, &opts, &mut NoPlasticity)?
            .1
            .mean_excitatory;
    }
    let i_e_av = total / patterns.len() as f64;
    let i0_inh = match amplitude {
        InhibitionAmplitude::Ratio(r) => r * i_e_av,
        InhibitionAmplitude::Absolute(a) => a,
    };
    let tau_s_inh = inhibition_tau(t_sub, i0_inh, i_e_av)?;
    Ok(InhibitionCalibration {
        i_e_av,
        i0_inh,
        tau_s_inh,
        tau_f_inh: tau_s_inh / FAST_RATIO,
    })
}

/// Every tuned quantity of one network instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub d: usize,
    pub neurons: usize,
    pub m: usize,
    pub k: usize,
    pub tau_s: f64,
    pub tau_f: f64,
    pub i0: f64,
    pub tau_m: f64,
    pub x_thr: f64,
    pub v_thr: f64,
    pub i_e_av: f64,
    pub i0_inh: f64,
    pub tau_s_inh: f64,
    pub tau_f_inh: f64,
    pub t_sub: f64,
    pub n_sub: usize,
}

impl TuneResult {
    pub fn kernel(&self) -> KernelParams {
        KernelParams {
            i0: self.i0,
            tau_s: self.tau_s,
            tau_f: self.tau_f,
        }
    }

    pub fn inhibition(&self) -> InhibitionParams {
        InhibitionParams {
            i0: self.i0_inh,
            tau_s: self.tau_s_inh,
            tau_f: self.tau_f_inh,
        }
    }

    pub fn neuron(&self) -> NeuronConfig {
        NeuronConfig {
            branches: self.m,
            synapses_per_branch: self.k,
            x_thr: self.x_thr,
            v_thr: self.v_thr,
            tau_m: self.tau_m,
        }
    }

    pub fn geometry(&self) -> Result<Geometry> {
        Geometry::new(self.neurons, self.m, self.k, self.d)
    }
}

/// Tunes a network for `templates` and returns the parameters together
/// with the random initial wiring the inhibition was calibrated on.
///
/// `rng` drives, in order: the calibration sample epoch, the `x_thr`
/// wirings, the `V_thr` wirings, the initial wiring and the `ep_ini`
/// calibration epochs.
pub fn tune<R: Rng + ?Sized>(
    cfg: &TrialConfig,
    templates: &[PatternTemplate],
    rng: &mut R,
) -> Result<(TuneResult, Wiring)> {
    cfg.validate()?;
    if templates.is_empty() {
        return Err(param("tuning needs at least one template"));
    }
    let s = &cfg.stimulus;
    let net = &cfg.network;
    let d = s.d;
    let (m, k) = match net.m {
        Some(m) if m == 0 || !d.is_multiple_of(m) => {
            return Err(param(format!("m = {m} must divide d = {d}")));
        }
        Some(m) => (m, d / m),
        None => choose_m(d)?,
    };
    let tau_s = cfg.nominal_tau_s()?;
    let kernel = KernelParams::normalized(tau_s);
    kernel.validate()?;
    let jitter = JitterSpec::new(s.sigma_jitter)?;
    let shape = CalibrationShape {
        branches: m,
        synapses_per_branch: k,
        inputs: d,
        tau_m: net.tau_m,
        dt: net.dt,
    };
    let trials = cfg.training.calibration_trials;

    let sample = make_epoch(templates, jitter, rng)?;
    let x_thr = match net.x_thr {
        Some(x) => {
            let _ = calibrate_x_thr(&shape, &kernel, &sample.patterns, 1, rng);
            x
        }
        None => calibrate_x_thr(&shape, &kernel, &sample.patterns, trials, rng)?,
    };
    let v_thr = match net.v_thr {
        Some(v) => v,
        None => calibrate_v_thr(&shape, &kernel, x_thr, &sample.patterns, trials, rng)?,
    };

    let neurons = cfg.neurons();
    let geometry = Geometry::new(neurons, m, k, d)?;
    let wiring = Wiring::random(geometry, rng);
    let neuron = NeuronConfig {
        branches: m,
        synapses_per_branch: k,
        x_thr,
        v_thr,
        tau_m: net.tau_m,
    };

    let t_sub = s.duration / net.n_sub as f64;
    let epochs = (0..cfg.training.ep_ini)
        .map(|_| make_epoch(templates, jitter, rng))
        .collect::<Result<Vec<_>>>()?;
    let amplitude = match net.i0_inh {
        Some(a) => InhibitionAmplitude::Absolute(a),
        None => InhibitionAmplitude::Ratio(net.i0_inh_ratio),
    };
    let inh = match net.tau_s_inh {
        Some(tau) => {
            let i_e_av = calibrate_inhibition(
                &wiring,
                &neuron,
                &kernel,
                &epochs,
                t_sub,
                InhibitionAmplitude::Absolute(f64::INFINITY),
                net.dt,
            )
            .map(|c| c.i_e_av)
            .unwrap_or(f64::NAN);
            let i0_inh = match amplitude {
                InhibitionAmplitude::Ratio(r) => r * i_e_av,
                InhibitionAmplitude::Absolute(a) => a,
            };
            InhibitionCalibration {
                i_e_av,
                i0_inh,
                tau_s_inh: tau,
                tau_f_inh: tau / FAST_RATIO,
            }
        }
        None => calibrate_inhibition(&wiring, &neuron, &kernel, &epochs, t_sub, amplitude, net.dt)?,
    };
    InhibitionParams::new(inh.i0_inh, inh.tau_s_inh, inh.tau_f_inh)?;

    Ok((
        TuneResult {
            d,
            neurons,
            m,
            k,
            tau_s: kernel.tau_s,
            tau_f: kernel.tau_f,
            i0: kernel.i0,
            tau_m: net.tau_m,
            x_thr,
            v_thr,
            i_e_av: inh.i_e_av,
            i0_inh: inh.i0_inh,
            tau_s_inh: inh.tau_s_inh,
            tau_f_inh: inh.tau_f_inh,
            t_sub,
            n_sub: net.n_sub,
        },
        wiring,
    ))
}
