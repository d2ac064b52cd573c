//! Deterministic property checks against independent oracles. Shared by the
//! property test target and the acceptance suite.
#![allow(dead_code)]

use wta_core::autotune::{
    calibrate_inhibition, choose_m, convergence_measure, InhibitionAmplitude,
};
use wta_core::dynamics::{simulate_pattern, EventLog, NoPlasticity, PlasticityHooks, SpikeContext};
use wta_core::harness::run_trial;
use wta_core::kernel::{InhibitionParams, KernelParams, FAST_RATIO};
use wta_core::mismatch::MismatchSpec;
use wta_core::plasticity::{rewire_after_pattern, FitnessLearner, FitnessTable, RewireConfig};
use wta_core::rng::stream;
use wta_core::spike::{gen_poisson_template, make_epoch, JitterSpec, PatternTemplate, SpikeTrain};
use wta_core::{Geometry, Network, NeuronConfig, SimOptions, TrialConfig, Wiring};

/// Double exponential evaluated straight from its definition.
fn k_ref(i0: f64, tau_s: f64, t: f64) -> f64 {
    if t < 0.0 {
        0.0
    } else {
        i0 * ((-t / tau_s).exp() - (-t * FAST_RATIO / tau_s).exp())
    }
}

fn small_trial() -> TrialConfig {
    let mut c = TrialConfig {
        seed: 11,
        ..Default::default()
    };
    c.training.max_epochs = 4;
    c.training.calibration_trials = 20;
    c.training.n_probes = 3;
    c
}

fn setup(seed: u64, neurons: usize) -> (Wiring, NeuronConfig, KernelParams, PatternTemplate) {
    let d = 20;
    let g = Geometry::new(neurons, 5, 4, d).unwrap();
    let mut rng = stream(seed, "prop", 0);
    let wiring = Wiring::random(g, &mut rng);
    let pattern = gen_poisson_template(d, 30.0, 0.3, 1.0, 0, &mut rng).unwrap();
    let neuron = NeuronConfig {
        branches: 5,
        synapses_per_branch: 4,
        x_thr: 1.0,
        v_thr: 6.0,
        tau_m: 0.02,
    };
    (wiring, neuron, KernelParams::normalized(0.02), pattern)
}

pub fn wiring_row_sums_hold_after_every_rewire() {
    let cfg = small_trial();
    let (wiring, neuron, kernel, _) = setup(3, 6);
    let mut wiring = wiring;
    let g = *wiring.geometry();
    let inh = InhibitionParams::new(40.0, 0.05, 0.005).unwrap();
    let mut table = FitnessTable::new(&g);
    let mut rng = stream(cfg.seed, "rw", 0);
    let mut prng = stream(cfg.seed, "pat", 0);
    let mut rewired = 0;
    for _ in 0..40 {
        let p = gen_poisson_template(g.inputs, 30.0, 0.3, 1.0, 0, &mut prng).unwrap();
        wta_core::plasticity::reset_fitness(&mut table);
        let log = {
            let net = Network {
                wiring: &wiring,
                neuron: &neuron,
                kernel: &kernel,
                inhibition: Some(&inh),
                mismatch: None,
            };
            let mut hooks = FitnessLearner {
                table: &mut table,
                cc: None,
            };
            simulate_pattern(&net, &p, &SimOptions::default(), &mut hooks)
                .unwrap()
                .0
        };
        let before = wiring.clone();
        let report = rewire_after_pattern(
            &mut wiring,
            &table,
            &log,
            &RewireConfig { n_r: 5 },
            &mut rng,
        )
        .unwrap();
        rewired += report.records.len();
        wiring.check_invariants().unwrap();
        for n in 0..g.neurons {
            for j in 0..g.branches {
                assert_eq!(
                    wiring.row(n, j).iter().map(|&w| w as usize).sum::<usize>(),
                    g.synapses_per_branch
                );
                let fired = log.post.iter().any(|s| s.neuron as usize == n);
                if !fired {
                    assert_eq!(wiring.row(n, j), before.row(n, j));
                }
            }
        }
    }
    assert!(rewired > 0, "no neuron ever fired; the check is vacuous");
}

pub fn kernel_peak_is_unity() {
    for tau_s in [0.5e-3, 5e-3, 0.023315, 0.1] {
        let k = KernelParams::normalized(tau_s);
        assert_eq!(k.i0, 1.4351);
        assert!((k.tau_f - tau_s / 10.0).abs() < 1e-15);
        let n = 200_000;
        let peak = (0..n)
            .map(|s| k_ref(1.4351, tau_s, s as f64 * 5.0 * tau_s / n as f64))
            .fold(0.0, f64::max);
        assert!((peak - 1.0).abs() <= 1e-3, "tau_s {tau_s}: peak {peak}");
    }
}

/// Counts hook calls without touching any state.
struct Counter(usize);

impl PlasticityHooks for Counter {
    fn on_pre_spike(&mut self, _: &SpikeContext<'_>, _: usize) {
        self.0 += 1;
    }
    fn on_post_spike(&mut self, _: &SpikeContext<'_>, _: usize) {
        self.0 += 1;
    }
}

pub fn silent_candidates_leave_the_event_log_unchanged() {
    let (wiring, neuron, kernel, pattern) = setup(5, 4);
    let g = *wiring.geometry();
    let inh = InhibitionParams::new(40.0, 0.05, 0.005).unwrap();
    let net = Network {
        wiring: &wiring,
        neuron: &neuron,
        kernel: &kernel,
        inhibition: Some(&inh),
        mismatch: None,
    };
    let opts = SimOptions::default();
    let (plain, _) = simulate_pattern(&net, &pattern, &opts, &mut NoPlasticity).unwrap();
    // every line is scored on every branch, connected or not
    let mut table = FitnessTable::new(&g);
    let (learned, _) = simulate_pattern(
        &net,
        &pattern,
        &opts,
        &mut FitnessLearner {
            table: &mut table,
            cc: None,
        },
    )
    .unwrap();
    let mut counter = Counter(0);
    let (counted, _) = simulate_pattern(&net, &pattern, &opts, &mut counter).unwrap();
    assert!(!plain.post.is_empty());
    assert_eq!(plain, learned);
    assert_eq!(plain, counted);
    assert_eq!(counter.0, plain.pre.len() + plain.post.len());
    // silent lines did accumulate fitness
    let unconnected = (0..g.inputs)
        .find(|&i| wiring.weight(0, 0, i) == 0)
        .unwrap();
    assert!(table.get(0, 0, unconnected) != 0.0 || plain.post.iter().all(|s| s.neuron != 0));
}

/// Offline fitness from the event log alone: every quantity is a sum of
/// analytic kernels over logged spike times.
fn replay_fitness(
    wiring: &Wiring,
    kernel: &KernelParams,
    x_thr: f64,
    log: &EventLog,
) -> (Vec<f64>, Vec<f64>) {
    let g = *wiring.geometry();
    let (nn, m, d) = (g.neurons, g.branches, g.inputs);
    let k = |t: f64| k_ref(kernel.i0, kernel.tau_s, t);
    let mut c = vec![0.0; nn * m * d];
    let mut scale = vec![0.0; nn * m * d];
    let z = |n: usize, j: usize, t: f64| -> f64 {
        log.pre
            .iter()
            .filter(|p| p.time <= t)
            .map(|p| wiring.weight(n, j, p.line as usize) as f64 * k(t - p.time))
            .sum()
    };
    for p in &log.pre {
        for n in 0..nn {
            let post: f64 = log
                .post
                .iter()
                .filter(|s| s.neuron as usize == n && s.time < p.time)
                .map(|s| k(p.time - s.time))
                .sum();
            if post == 0.0 {
                continue;
            }
            for j in 0..m {
                let delta = 2.0 * z(n, j, p.time) / x_thr * post;
                let idx = (n * m + j) * d + p.line as usize;
                c[idx] -= delta;
                scale[idx] += delta.abs();
            }
        }
    }
    for s in &log.post {
        let n = s.neuron as usize;
        for j in 0..m {
            let bp = 2.0 * z(n, j, s.time) / x_thr;
            for i in 0..d {
                let e: f64 = log
                    .pre
                    .iter()
                    .filter(|p| p.line as usize == i && p.time <= s.time)
                    .map(|p| k(s.time - p.time))
                    .sum();
                let idx = (n * m + j) * d + i;
                c[idx] += bp * e;
                scale[idx] += (bp * e).abs();
            }
        }
    }
    (c, scale)
}

pub fn online_fitness_matches_event_log_replay() {
    for seed in [1u64, 2, 3] {
        let (wiring, neuron, kernel, pattern) = setup(seed, 3);
        let g = *wiring.geometry();
        let inh = InhibitionParams::new(15.0, 0.03, 0.003).unwrap();
        let net = Network {
            wiring: &wiring,
            neuron: &neuron,
            kernel: &kernel,
            inhibition: Some(&inh),
            mismatch: None,
        };
        let mut table = FitnessTable::new(&g);
        let (log, _) = simulate_pattern(
            &net,
            &pattern,
            &SimOptions::default(),
            &mut FitnessLearner {
                table: &mut table,
                cc: None,
            },
        )
        .unwrap();
        assert!(
            log.post.len() >= 2,
            "seed {seed}: need post-spikes for a meaningful replay"
        );
        let (oracle, scale) = replay_fitness(&wiring, &kernel, neuron.x_thr, &log);
        let mut nonzero = 0;
        for (idx, (&got, (&want, &s))) in table
            .values()
            .iter()
            .zip(oracle.iter().zip(&scale))
            .enumerate()
        {
            assert!(
                (got - want).abs() <= 1e-6 * s.max(1e-300),
                "seed {seed} entry {idx}: online {got} vs replay {want}"
            );
            if want != 0.0 {
                nonzero += 1;
            }
        }
        assert!(nonzero > 0);
    }
}

pub fn cm_equals_l_mean_for_one_subpattern() {
    let mut cfg = small_trial();
    cfg.training.audit = true;
    let r = run_trial(&cfg).unwrap();
    assert_eq!(r.cm_trace.len(), r.l_mean_trace.len());
    for (cm, l) in r.cm_trace.iter().zip(&r.l_mean_trace) {
        assert!(cm == l || (cm.is_nan() && l.is_nan()));
    }
    // recompute from the stored latencies
    for (e, &cm) in r.cm_trace.iter().enumerate() {
        let sums: Vec<f64> = r
            .audit
            .iter()
            .filter(|a| a.epoch == e && !a.post.is_empty())
            .map(|a| a.post.iter().map(|s| s.latency).sum())
            .collect();
        let l = sums.iter().sum::<f64>() / sums.len() as f64;
        let want = convergence_measure(l, 1, cfg.stimulus.duration).unwrap();
        assert!((cm - want).abs() < 1e-12 || (cm.is_nan() && sums.is_empty()));
    }
}

pub fn cm_trace_matches_subpattern_transform() {
    let mut cfg = small_trial();
    cfg.network.n_sub = 5;
    cfg.training.audit = true;
    let r = run_trial(&cfg).unwrap();
    let t_sub = cfg.stimulus.duration / 5.0;
    for (e, &cm) in r.cm_trace.iter().enumerate() {
        let sums: Vec<f64> = r
            .audit
            .iter()
            .filter(|a| a.epoch == e && !a.post.is_empty())
            .map(|a| a.post.iter().map(|s| s.latency).sum())
            .collect();
        if sums.is_empty() {
            assert!(cm.is_nan());
            continue;
        }
        let l = sums.iter().sum::<f64>() / sums.len() as f64;
        let want = l / 5.0 - 4.0 * t_sub / 2.0;
        assert!((cm - want).abs() < 1e-12, "epoch {e}: {cm} vs {want}");
    }
}

pub fn dendrite_count_for_one_hundred_inputs() {
    assert_eq!(choose_m(100).unwrap(), (25, 4));
}

pub fn inhibition_decays_to_mean_drive_after_one_subpattern() {
    let (wiring, neuron, kernel, _) = setup(7, 6);
    let g = *wiring.geometry();
    let mut rng = stream(7, "epochs", 0);
    let templates: Vec<_> = (0..2)
        .map(|c| gen_poisson_template(g.inputs, 30.0, 0.3, 1.0, c, &mut rng).unwrap())
        .collect();
    let epochs: Vec<_> = (0..3)
        .map(|_| make_epoch(&templates, JitterSpec::none(), &mut rng).unwrap())
        .collect();
    let t_sub = 0.3 / 5.0;
    let cal = calibrate_inhibition(
        &wiring,
        &neuron,
        &kernel,
        &epochs,
        t_sub,
        InhibitionAmplitude::Ratio(5.0),
        1e-4,
    )
    .unwrap();
    let inh = cal.params();
    let analytic = k_ref(inh.i0, inh.tau_s, t_sub);
    assert!(
        (analytic / cal.i_e_av - 1.0).abs() <= 0.02,
        "analytic {analytic} vs {}",
        cal.i_e_av
    );

    // simulated: one neuron, one input spike, one post-spike
    let g1 = Geometry::new(1, 1, 1, 1).unwrap();
    let w1 = Wiring::from_slot_lines(g1, vec![0]).unwrap();
    let n1 = NeuronConfig {
        branches: 1,
        synapses_per_branch: 1,
        x_thr: 1.0,
        v_thr: 1e-3,
        tau_m: 0.02,
    };
    let net = Network {
        wiring: &w1,
        neuron: &n1,
        kernel: &kernel,
        inhibition: Some(&inh),
        mismatch: None,
    };
    let pattern = PatternTemplate {
        class_label: 0,
        afferents: vec![SpikeTrain::from_unsorted(vec![0.001]).0],
        duration: 0.2,
        active_mask: vec![true],
    };
    let opts = SimOptions {
        record_voltages: true,
        ..Default::default()
    };
    let (log, st) = simulate_pattern(&net, &pattern, &opts, &mut NoPlasticity).unwrap();
    assert_eq!(log.post.len(), 1);
    let t0 = log.post[0].time;
    let rows = st.voltages.unwrap().rows;
    let row = rows
        .iter()
        .min_by(|a, b| {
            (a.0 - t0 - t_sub)
                .abs()
                .total_cmp(&(b.0 - t0 - t_sub).abs())
        })
        .unwrap();
    assert!(
        (row.2 / cal.i_e_av - 1.0).abs() <= 0.02,
        "simulated {} vs {}",
        row.2,
        cal.i_e_av
    );
}

pub fn zero_cv_mismatch_is_bit_identical_to_ideal() {
    let cfg = small_trial();
    let ideal = run_trial(&cfg).unwrap();
    let zero = MismatchSpec {
        cv_i0: 0.0,
        cv_tau_s: 0.0,
        cv_cb: 0.0,
        cv_vthr: 0.0,
        cv_cc: 0.0,
        ..Default::default()
    };
    let with = run_trial(&TrialConfig {
        mismatch: Some(zero),
        ..cfg.clone()
    })
    .unwrap();
    assert_eq!(
        ideal
            .cm_trace
            .iter()
            .map(|x| x.to_bits())
            .collect::<Vec<_>>(),
        with.cm_trace
            .iter()
            .map(|x| x.to_bits())
            .collect::<Vec<_>>()
    );
    assert_eq!(ideal.learned, with.learned);
    assert_eq!(ideal.test, with.test);
    assert_eq!(ideal.model.wiring, with.model.wiring);
}

pub fn zero_jitter_epochs_reproduce_templates() {
    let cfg = small_trial();
    let templates = wta_core::harness::trial_templates(&cfg).unwrap();
    let ep = make_epoch(&templates, JitterSpec::none(), &mut stream(1, "e", 0)).unwrap();
    for p in &ep.patterns {
        assert_eq!(p, &templates[p.class_label as usize]);
    }
}

pub fn reruns_are_bit_identical() {
    let cfg = small_trial();
    let a = run_trial(&cfg).unwrap();
    let b = run_trial(&cfg).unwrap();
    assert_eq!(
        a.cm_trace.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
        b.cm_trace.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
    );
    assert_eq!(a.model.wiring, b.model.wiring);
    assert_eq!(a.learned, b.learned);
    assert_eq!(a.fp_rate.to_bits(), b.fp_rate.to_bits());
    assert_eq!(a.model.tune, b.model.tune);

    let batch = wta_core::run_trials(&cfg, 3, "trial").unwrap();
    let again = wta_core::run_trials(&cfg, 3, "trial").unwrap();
    for (x, y) in batch.iter().zip(&again) {
        assert_eq!(x.model.wiring, y.model.wiring);
        assert_eq!(x.trial_id, y.trial_id);
    }
}

pub fn halving_dt_moves_first_spikes_by_at_most_one_step() {
    let dt = 1e-4;
    for seed in 1..=5u64 {
        let (wiring, neuron, kernel, pattern) = setup(seed, 4);
        let inh = InhibitionParams::new(40.0, 0.05, 0.005).unwrap();
        let net = Network {
            wiring: &wiring,
            neuron: &neuron,
            kernel: &kernel,
            inhibition: Some(&inh),
            mismatch: None,
        };
        let run = |dt: f64| {
            let opts = SimOptions {
                dt,
                ..Default::default()
            };
            simulate_pattern(&net, &pattern, &opts, &mut NoPlasticity)
                .unwrap()
                .0
        };
        let (coarse, fine) = (run(dt), run(dt / 2.0));
        assert_eq!(coarse.post.is_empty(), fine.post.is_empty(), "seed {seed}");
        if let (Some(a), Some(b)) = (coarse.post.first(), fine.post.first()) {
            assert_eq!(a.neuron, b.neuron, "seed {seed}");
            assert!(
                (a.time - b.time).abs() <= dt + 1e-12,
                "seed {seed}: {} vs {}",
                a.time,
                b.time
            );
        }
    }
}

pub const ALL: &[(&str, fn())] = &[
    (
        "wiring row sums after every rewire",
        wiring_row_sums_hold_after_every_rewire,
    ),
    ("kernel peak", kernel_peak_is_unity),
    (
        "silent candidates",
        silent_candidates_leave_the_event_log_unchanged,
    ),
    (
        "fitness replay oracle",
        online_fitness_matches_event_log_replay,
    ),
    (
        "CM identity for one subpattern",
        cm_equals_l_mean_for_one_subpattern,
    ),
    (
        "CM subpattern transform",
        cm_trace_matches_subpattern_transform,
    ),
    (
        "dendrite count for d = 100",
        dendrite_count_for_one_hundred_inputs,
    ),
    (
        "inhibition round trip",
        inhibition_decays_to_mean_drive_after_one_subpattern,
    ),
    (
        "zero-cv identity",
        zero_cv_mismatch_is_bit_identical_to_ideal,
    ),
    (
        "zero-jitter identity",
        zero_jitter_epochs_reproduce_templates,
    ),
    ("bit-identical reruns", reruns_are_bit_identical),
    (
        "dt halving",
        halving_dt_moves_first_spikes_by_at_most_one_step,
    ),
];
