//! Spike-timing driven fitness accumulation and post-pattern rewiring.
//!
//! Fitness is kept per `(neuron, branch, input line)`: the update rules
//! only depend on those three indices, so every synapse on a branch that
//! listens to the same line shares one value, and any line can be scored
//! as a silent candidate without re-running the pattern.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{EventLog, PlasticityHooks, SpikeContext};
use crate::error::{param, Result};
use crate::kernel::branch_nonlinearity_derivative;
use crate::wiring::{Geometry, Wiring};

#[derive(Debug, Clone, PartialEq)]
pub struct FitnessTable {
    neurons: usize,
    branches: usize,
    inputs: usize,
    values: Vec<f64>,
}

impl FitnessTable {
    pub fn new(g: &Geometry) -> Self {
        Self {
            neurons: g.neurons,
            branches: g.branches,
            inputs: g.inputs,
            values: vec![0.0; g.neurons * g.branches * g.inputs],
        }
    }

    #[inline]
    fn idx(&self, neuron: usize, branch: usize, line: usize) -> usize {
        (neuron * self.branches + branch) * self.inputs + line
    }

    #[inline]
    pub fn get(&self, neuron: usize, branch: usize, line: usize) -> f64 {
        self.values[self.idx(neuron, branch, line)]
    }

    pub fn branch_row(&self, neuron: usize, branch: usize) -> &[f64] {
        let s = self.idx(neuron, branch, 0);
        &self.values[s..s + self.inputs]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.neurons, self.branches, self.inputs)
    }
}

pub fn reset_fitness(c: &mut FitnessTable) {
    c.values.fill(0.0);
}

/// Pre-spike on `line`: `c[n][j][line] -= cc·b'(I_b,in)·f̄ⁿ` for every
/// neuron and branch. Neurons with a zero post-synaptic trace are skipped
/// (their increment is zero).
pub fn depress(c: &mut FitnessTable, line: usize, ctx: &SpikeContext<'_>, cc: Option<&[f64]>) {
    let m = c.branches;
    for (n, &post) in ctx.post_trace.iter().enumerate() {
        if post == 0.0 {
            continue;
        }
        for j in 0..m {
            let b = n * m + j;
            let mut delta = -branch_nonlinearity_derivative(ctx.branch_input[b], ctx.x_thr) * post;
            if let Some(cc) = cc {
                delta *= cc[b];
            }
            let i = c.idx(n, j, line);
            c.values[i] += delta;
        }
    }
}

/// Post-spike of `neuron`: `c[neuron][j][i] += cc·b'(I_b,in)·ēᵢ` for every
/// branch and input line.
pub fn potentiate(c: &mut FitnessTable, neuron: usize, ctx: &SpikeContext<'_>, cc: Option<&[f64]>) {
    let m = c.branches;
    for j in 0..m {
        let b = neuron * m + j;
        let mut gain = branch_nonlinearity_derivative(ctx.branch_input[b], ctx.x_thr);
        if let Some(cc) = cc {
            gain *= cc[b];
        }
        let s = c.idx(neuron, j, 0);
        for (v, &e) in c.values[s..s + c.inputs].iter_mut().zip(ctx.pre_trace) {
            *v += gain * e;
        }
    }
}

/// Simulator hooks that feed a [`FitnessTable`].
pub struct FitnessLearner<'a> {
    pub table: &'a mut FitnessTable,
    /// Per-branch calculator gain (mismatch); `None` means ideal.
    pub cc: Option<&'a [f64]>,
}

impl PlasticityHooks for FitnessLearner<'_> {
    fn on_pre_spike(&mut self, ctx: &SpikeContext<'_>, line: usize) {
        depress(self.table, line, ctx, self.cc);
    }

    fn on_post_spike(&mut self, ctx: &SpikeContext<'_>, neuron: usize) {
        potentiate(self.table, neuron, ctx, self.cc);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewireConfig {
    /// Size of the random candidate set drawn per rewired neuron.
    pub n_r: usize,
}

impl RewireConfig {
    /// `d / 4`, at least 1.
    pub fn default_for(d: usize) -> Self {
        Self {
            n_r: (d / 4).max(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewireRecord {
    pub neuron: u32,
    pub branch: u32,
    /// Input line of the weakest synapse.
    pub min_line: u32,
    pub min_fitness: f64,
    /// Candidate lines with their fitness on `branch`.
    pub candidates: Vec<(u32, f64)>,
    pub max_line: u32,
    pub max_fitness: f64,
    /// False when the best candidate is the weakest synapse's own line.
    pub swapped: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RewireReport {
    pub records: Vec<RewireRecord>,
}

/// Replaces, for every neuron that fired, its lowest-fitness synapse by the
/// best of `n_r` random candidate lines evaluated on the same branch.
/// Ties go to the lowest branch, then the lowest line index.
pub fn rewire_after_pattern<R: Rng + ?Sized>(
    wiring: &mut Wiring,
    c: &FitnessTable,
    log: &EventLog,
    cfg: &RewireConfig,
    rng: &mut R,
) -> Result<RewireReport> {
    let g = *wiring.geometry();
    if c.dims() != (g.neurons, g.branches, g.inputs) {
        return Err(param("fitness table does not match wiring geometry"));
    }
    if cfg.n_r == 0 || cfg.n_r > g.inputs {
        return Err(param(format!(
            "n_R must lie in [1, {}] (got {})",
            g.inputs, cfg.n_r
        )));
    }
    wiring.check_invariants()?;

    let mut report = RewireReport::default();
    for q in log.fired_neurons() {
        let mut best: Option<(usize, usize, f64)> = None;
        for j in 0..g.branches {
            let row = wiring.row(q, j);
            for (i, &w) in row.iter().enumerate() {
                if w == 0 {
                    continue;
                }
                let f = c.get(q, j, i);
                if best.is_none_or(|(_, _, b)| f < b) {
                    best = Some((j, i, f));
                }
            }
        }
        let (j_min, i_min, f_min) = best.expect("k >= 1 so every neuron has synapses");

        let mut candidates: Vec<u32> = index::sample(rng, g.inputs, cfg.n_r)
            .into_iter()
            .map(|i| i as u32)
            .collect();
        candidates.sort_unstable();
        let scored: Vec<(u32, f64)> = candidates
            .iter()
            .map(|&r| (r, c.get(q, j_min, r as usize)))
            .collect();
        let (r_max, f_max) = scored
            .iter()
            .copied()
            .fold(None, |acc: Option<(u32, f64)>, (r, f)| match acc {
                Some((_, bf)) if f <= bf => acc,
                _ => Some((r, f)),
            })
            .expect("n_R >= 1");

        wiring.swap(q, j_min, i_min, r_max as usize)?;
        report.records.push(RewireRecord {
            neuron: q as u32,
            branch: j_min as u32,
            min_line: i_min as u32,
            min_fitness: f_min,
            candidates: scored,
            max_line: r_max,
            max_fitness: f_max,
            swapped: r_max as usize != i_min,
        });
    }
    debug_assert!(wiring.check_invariants().is_ok());
    Ok(report)
}
