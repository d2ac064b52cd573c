//! Clock-driven simulation of one pattern presentation.
//!
//! Every exponential quantity is carried as a slow/fast pair of
//! first-order filters whose difference realizes the double-exponential
//! kernel; a spike adds the kernel amplitude to both members of the pair.
//! Spikes are binned to the enclosing step, so filter outputs coincide with
//! the analytic kernel at every step boundary.
//!
//! Per step the order is: decay all filters, inject this step's input
//! spikes, run pre-spike hooks, integrate membranes, pick at most one
//! winner, run its post-spike hook, then restart inhibition and bump the
//! winner's post-synaptic trace.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::kernel::{InhibitionParams, KernelParams, FAST_RATIO};
use crate::mismatch::MismatchInstance;
use crate::spike::PatternTemplate;
use crate::wiring::Wiring;

pub const DEFAULT_DT: f64 = 1e-4;
pub const DEFAULT_TAU_M: f64 = 0.020;

/// Per-neuron constants. The membrane resistance is fixed at 1, so the
/// capacitance is `tau_m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeuronConfig {
    pub branches: usize,
    pub synapses_per_branch: usize,
    pub x_thr: f64,
    pub v_thr: f64,
    pub tau_m: f64,
}

impl NeuronConfig {
    pub fn validate(&self) -> Result<()> {
        if self.branches == 0 || self.synapses_per_branch == 0 {
            return Err(param("m and k must be >= 1"));
        }
        if !(self.x_thr > 0.0 && self.x_thr.is_finite()) {
            return Err(param(format!("x_thr {} must be > 0", self.x_thr)));
        }
        if !(self.v_thr > 0.0 && self.v_thr.is_finite()) {
            return Err(param(format!("V_thr {} must be > 0", self.v_thr)));
        }
        if !(self.tau_m > 0.0 && self.tau_m.is_finite()) {
            return Err(param(format!("tau_m {} must be > 0", self.tau_m)));
        }
        Ok(())
    }
}

/// Everything a simulation reads but never mutates.
#[derive(Debug, Clone, Copy)]
pub struct Network<'a> {
    pub wiring: &'a Wiring,
    pub neuron: &'a NeuronConfig,
    pub kernel: &'a KernelParams,
    pub inhibition: Option<&'a InhibitionParams>,
    pub mismatch: Option<&'a MismatchInstance>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub dt: f64,
    /// With firing disabled membranes integrate freely and no post-spikes
    /// are emitted; used by threshold calibration.
    pub firing: bool,
    pub record_voltages: bool,
    /// Accumulate the mean branch input and mean excitatory drive reported
    /// in [`NetworkState`]; off by default since it costs a full reduction
    /// per step.
    pub stats: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            firing: true,
            record_voltages: false,
            stats: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreSpike {
    pub time: f64,
    pub line: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PostSpike {
    pub time: f64,
    pub neuron: u32,
    /// Time from pattern onset.
    pub latency: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    pub pre: Vec<PreSpike>,
    pub post: Vec<PostSpike>,
}

impl EventLog {
    /// Neurons that fired at least once, ascending.
    pub fn fired_neurons(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.post.iter().map(|p| p.neuron as usize).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn latency_sum(&self) -> f64 {
        self.post.iter().map(|p| p.latency).sum()
    }
}

/// State at the end of a presentation plus a few run statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub time: f64,
    pub voltage: Vec<f64>,
    /// Slow/fast filter pair per branch, or per synapse slot when the
    /// synapse time constants carry mismatch.
    pub synapse_slow: Vec<f64>,
    pub synapse_fast: Vec<f64>,
    /// Branch input currents `I_b,in` at the final step, indexed `n * m + j`.
    pub branch_input: Vec<f64>,
    pub pre_slow: Vec<f64>,
    pub pre_fast: Vec<f64>,
    pub post_slow: Vec<f64>,
    pub post_fast: Vec<f64>,
    pub inh_slow: f64,
    pub inh_fast: f64,
    pub t_last: Option<f64>,
    pub v_max: Vec<f64>,
    /// Branch input averaged over branches and steps.
    pub mean_branch_input: f64,
    /// `Σ_j b(I_b,in)` averaged over neurons and steps.
    pub mean_excitatory: f64,
    pub voltages: Option<VoltageTrace>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VoltageTrace {
    pub rows: Vec<(f64, Vec<f64>, f64)>,
}

impl VoltageTrace {
    /// `t,V_0..V_{N-1},I_inh`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let n = self.rows.first().map_or(0, |r| r.1.len());
        let mut header = vec!["t".to_string()];
        header.extend((0..n).map(|i| format!("V_{i}")));
        header.push("I_inh".into());
        writeln!(out, "{}", header.join(","))?;
        for (t, v, inh) in &self.rows {
            write!(out, "{t:.6}")?;
            for x in v {
                write!(out, ",{x:.6}")?;
            }
            writeln!(out, ",{inh:.6}")?;
        }
        Ok(())
    }
}

/// Read-only view handed to plasticity hooks at every spike event.
pub struct SpikeContext<'a> {
    pub time: f64,
    pub branches: usize,
    pub x_thr: f64,
    /// `I_b,in` per branch, indexed `n * m + j`.
    pub branch_input: &'a [f64],
    /// Pre-synaptic trace per input line.
    pub pre_trace: &'a [f64],
    /// Post-synaptic trace per neuron.
    pub post_trace: &'a [f64],
}

pub trait PlasticityHooks {
    fn on_pre_spike(&mut self, ctx: &SpikeContext<'_>, line: usize);
    fn on_post_spike(&mut self, ctx: &SpikeContext<'_>, neuron: usize);
}

/// Hooks that do nothing.
pub struct NoPlasticity;

impl PlasticityHooks for NoPlasticity {
    fn on_pre_spike(&mut self, _: &SpikeContext<'_>, _: usize) {}
    fn on_post_spike(&mut self, _: &SpikeContext<'_>, _: usize) {}
}

/// `Σ z²` with four interleaved accumulators.
fn sum_sq(zs: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = zs.chunks_exact(4);
    let rest = chunks.remainder();
    for c in chunks {
        for l in 0..4 {
            acc[l] += c[l] * c[l];
        }
    }
    let mut tail = 0.0;
    for &z in rest {
        tail += z * z;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `Σ c z²` summed in the same order as [`sum_sq`], so unit gains
/// reproduce it bit for bit.
fn sum_sq_scaled(zs: &[f64], gains: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = zs.chunks_exact(4);
    let rest = chunks.remainder();
    for (c, g) in chunks.zip(gains.chunks_exact(4)) {
        for l in 0..4 {
            acc[l] += g[l] * (c[l] * c[l]);
        }
    }
    let mut tail = 0.0;
    for (&z, &g) in rest.iter().zip(&gains[zs.len() - rest.len()..]) {
        tail += g * (z * z);
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub fn n_steps(duration: f64, dt: f64) -> usize {
    ((duration / dt).round() as usize).max(1)
}

/// Input spikes as `(step, line)` sorted by step then line.
fn bin_spikes(pattern: &PatternTemplate, dt: f64, steps: usize) -> Vec<(usize, u32)> {
    let mut out = Vec::with_capacity(pattern.spike_count());
    for (i, train) in pattern.afferents.iter().enumerate() {
        for &t in train.times() {
            let s = ((t / dt).floor() as usize).min(steps - 1);
            out.push((s, i as u32));
        }
    }
    out.sort_unstable();
    out
}

/// Where each input line's spikes land: filter index and amplitude.
fn build_fanout(net: &Network<'_>, per_slot: bool) -> Vec<Vec<(u32, f64)>> {
    let g = net.wiring.geometry();
    let k = g.synapses_per_branch;
    let i0 = net.kernel.i0;
    let mut fanout: Vec<Vec<(u32, f64)>> = vec![Vec::new(); g.inputs];
    for (s, &line) in net.wiring.slot_lines().iter().enumerate() {
        let amp = match net.mismatch {
            Some(m) => i0 * m.i0[s],
            None => i0,
        };
        let target = if per_slot { s } else { s / k } as u32;
        let list = &mut fanout[line as usize];
        match list.last_mut() {
            Some((t, a)) if *t == target => *a += amp,
            _ => list.push((target, amp)),
        }
    }
    fanout
}

pub fn simulate_pattern(
    net: &Network<'_>,
    pattern: &PatternTemplate,
    opts: &SimOptions,
    hooks: &mut dyn PlasticityHooks,
) -> Result<(EventLog, NetworkState)> {
    let g = *net.wiring.geometry();
    net.neuron.validate()?;
    net.kernel.validate()?;
    if net.neuron.branches != g.branches || net.neuron.synapses_per_branch != g.synapses_per_branch
    {
        return Err(param(format!(
            "neuron config (m={}, k={}) does not match wiring (m={}, k={})",
            net.neuron.branches, net.neuron.synapses_per_branch, g.branches, g.synapses_per_branch
        )));
    }
    if pattern.dim() != g.inputs {
        return Err(param(format!(
            "pattern has {} afferents, network expects d={}",
            pattern.dim(),
            g.inputs
        )));
    }
    if !(opts.dt > 0.0 && opts.dt.is_finite()) {
        return Err(param(format!("dt {} must be > 0", opts.dt)));
    }
    if let Some(inh) = net.inhibition {
        inh.kernel().validate()?;
    }
    if let Some(m) = net.mismatch {
        if m.geometry != g {
            return Err(param("mismatch instance geometry differs from wiring"));
        }
    }

    let dt = opts.dt;
    let steps = n_steps(pattern.duration, dt);
    let n_neurons = g.neurons;
    let m = g.branches;
    let k = g.synapses_per_branch;
    let d = g.inputs;
    let x_thr = net.neuron.x_thr;

    let per_slot = net
        .mismatch
        .is_some_and(MismatchInstance::has_tau_variation);
    let n_filters = if per_slot {
        g.n_slots()
    } else {
        g.n_branches()
    };

    let decay_s = (-dt / net.kernel.tau_s).exp();
    let decay_f = (-dt / net.kernel.tau_f).exp();
    let (slot_decay_s, slot_decay_f): (Vec<f64>, Vec<f64>) = match net.mismatch {
        Some(mm) if per_slot => mm
            .tau_s
            .iter()
            .map(|&f| {
                let tau_s = net.kernel.tau_s * f;
                ((-dt / tau_s).exp(), (-dt / (tau_s / FAST_RATIO)).exp())
            })
            .unzip(),
        _ => (Vec::new(), Vec::new()),
    };
    let decay_m = (-dt / net.neuron.tau_m).exp();
    let gain_m = 1.0 - decay_m;
    let (inh_i0, inh_decay_s, inh_decay_f) = match net.inhibition {
        Some(p) => (p.i0, (-dt / p.tau_s).exp(), (-dt / p.tau_f).exp()),
        None => (0.0, 1.0, 1.0),
    };
    let cb: Option<&[f64]> = net.mismatch.map(|mm| mm.cb.as_slice());
    let v_thr: Vec<f64> = (0..n_neurons)
        .map(|n| net.neuron.v_thr * net.mismatch.map_or(1.0, |mm| mm.v_thr[n]))
        .collect();

    let schedule = bin_spikes(pattern, dt, steps);
    let fanout = build_fanout(net, per_slot);
    let i0 = net.kernel.i0;

    let mut syn_slow = vec![0.0; n_filters];
    let mut syn_fast = vec![0.0; n_filters];
    let mut branch_in = vec![0.0; g.n_branches()];
    let mut pre_slow = vec![0.0; d];
    let mut pre_fast = vec![0.0; d];
    let mut pre_trace = vec![0.0; d];
    let mut post_slow = vec![0.0; n_neurons];
    let mut post_fast = vec![0.0; n_neurons];
    let mut post_trace = vec![0.0; n_neurons];
    let mut voltage = vec![0.0; n_neurons];
    let mut v_max = vec![f64::NEG_INFINITY; n_neurons];
    let (mut inh_slow, mut inh_fast) = (0.0f64, 0.0f64);
    let mut t_last = None;
    let mut sum_branch_input = 0.0;
    let mut sum_excitatory = 0.0;
    let mut trace = opts.record_voltages.then(VoltageTrace::default);

    let mut log = EventLog {
        pre: Vec::with_capacity(schedule.len()),
        post: Vec::new(),
    };
    let mut cursor = 0usize;

    let inv_x_thr = 1.0 / x_thr;

    for step in 0..steps {
        let t = step as f64 * dt;

        pre_slow.iter_mut().for_each(|x| *x *= decay_s);
        pre_fast.iter_mut().for_each(|x| *x *= decay_f);
        post_slow.iter_mut().for_each(|x| *x *= decay_s);
        post_fast.iter_mut().for_each(|x| *x *= decay_f);
        inh_slow *= inh_decay_s;
        inh_fast *= inh_decay_f;

        let first_event = cursor;
        if per_slot {
            for ((s, f), (&a, &b)) in syn_slow
                .iter_mut()
                .zip(syn_fast.iter_mut())
                .zip(slot_decay_s.iter().zip(&slot_decay_f))
            {
                *s *= a;
                *f *= b;
            }
        } else {
            syn_slow.iter_mut().for_each(|x| *x *= decay_s);
            syn_fast.iter_mut().for_each(|x| *x *= decay_f);
        }
        while cursor < schedule.len() && schedule[cursor].0 == step {
            let line = schedule[cursor].1 as usize;
            pre_slow[line] += i0;
            pre_fast[line] += i0;
            for &(idx, amp) in &fanout[line] {
                syn_slow[idx as usize] += amp;
                syn_fast[idx as usize] += amp;
            }
            log.pre.push(PreSpike {
                time: t,
                line: line as u32,
            });
            cursor += 1;
        }
        let has_pre = cursor > first_event;

        if per_slot {
            for (b, out) in branch_in.iter_mut().enumerate() {
                let r = b * k..(b + 1) * k;
                *out = syn_slow[r.clone()]
                    .iter()
                    .zip(&syn_fast[r])
                    .map(|(s, f)| s - f)
                    .sum();
            }
        } else {
            for ((out, s), f) in branch_in.iter_mut().zip(&syn_slow).zip(&syn_fast) {
                *out = s - f;
            }
        }

        if has_pre {
            for ((o, s), f) in post_trace.iter_mut().zip(&post_slow).zip(&post_fast) {
                *o = s - f;
            }
            for ((o, s), f) in pre_trace.iter_mut().zip(&pre_slow).zip(&pre_fast) {
                *o = s - f;
            }
            let ctx = SpikeContext {
                time: t,
                branches: m,
                x_thr,
                branch_input: &branch_in,
                pre_trace: &pre_trace,
                post_trace: &post_trace,
            };
            for &(_, line) in &schedule[first_event..cursor] {
                hooks.on_pre_spike(&ctx, line as usize);
            }
        }

        let inh = inh_slow - inh_fast;
        let mut winner: Option<(usize, f64)> = None;
        for (n, zs) in branch_in.chunks_exact(m).enumerate() {
            let sq = match cb {
                Some(cb) => sum_sq_scaled(zs, &cb[n * m..(n + 1) * m]),
                None => sum_sq(zs),
            };
            let exc = sq * inv_x_thr;
            sum_excitatory += exc;
            let v = voltage[n] * decay_m + (exc - inh) * gain_m;
            if !v.is_finite() {
                return Err(Error::Divergence { step, neuron: n });
            }
            voltage[n] = v;
            if v > v_max[n] {
                v_max[n] = v;
            }
            if opts.firing && v >= v_thr[n] {
                let over = v - v_thr[n];
                if winner.is_none_or(|(_, best)| over > best) {
                    winner = Some((n, over));
                }
            }
        }
        if opts.stats {
            sum_branch_input += branch_in.iter().sum::<f64>();
        }

        if let Some((n, _)) = winner {
            voltage[n] = 0.0;
            log.post.push(PostSpike {
                time: t,
                neuron: n as u32,
                latency: t,
            });
            if !has_pre {
                for ((o, s), f) in pre_trace.iter_mut().zip(&pre_slow).zip(&pre_fast) {
                    *o = s - f;
                }
            }
            for ((o, s), f) in post_trace.iter_mut().zip(&post_slow).zip(&post_fast) {
                *o = s - f;
            }
            let ctx = SpikeContext {
                time: t,
                branches: m,
                x_thr,
                branch_input: &branch_in,
                pre_trace: &pre_trace,
                post_trace: &post_trace,
            };
            hooks.on_post_spike(&ctx, n);
            if net.inhibition.is_some() {
                inh_slow = inh_i0;
                inh_fast = inh_i0;
            }
            t_last = Some(t);
            post_slow[n] += i0;
            post_fast[n] += i0;
        }

        if let Some(tr) = trace.as_mut() {
            tr.rows.push((t, voltage.clone(), inh_slow - inh_fast));
        }
    }
    let state = NetworkState {
        time: (steps - 1) as f64 * dt,
        voltage,
        synapse_slow: syn_slow,
        synapse_fast: syn_fast,
        branch_input: branch_in,
        pre_slow,
        pre_fast,
        post_slow,
        post_fast,
        inh_slow,
        inh_fast,
        t_last,
        v_max,
        mean_branch_input: if opts.stats {
            sum_branch_input / (steps * g.n_branches()) as f64
        } else {
            f64::NAN
        },
        mean_excitatory: if opts.stats {
            sum_excitatory / (steps * n_neurons) as f64
        } else {
            f64::NAN
        },
        voltages: trace,
    };
    Ok((log, state))
}
