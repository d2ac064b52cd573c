use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use wta_core::autotune::tune;
use wta_core::config::{ExperimentConfig, SweepAxis};
use wta_core::harness::{
    classify_outcome, false_positive_probe, sweep, trial_templates, write_epoch_csv,
    write_sweep_csv, write_trial_csv, Model, TrialResult,
};
use wta_core::mismatch::{degradation_experiment, write_degradation_csv};
use wta_core::rng::stream;
use wta_core::spike::{
    apply_jitter, gen_poisson_template, save_patterns, JitterSpec, PatternSet, PatternSetMeta,
};
use wta_core::{run_trials, Error, Representation, TuneResult, Wiring};

#[derive(Parser)]
#[command(
    name = "wta",
    version,
    about = "WTA network with nonlinear dendrites: experiments"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Integration step, seconds.
    #[arg(long, global = true)]
    dt: Option<f64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate class templates and write them as a spike file.
    Gen,
    /// Run parameter tuning and print the result as JSON.
    Tune,
    /// Train and test independent trials.
    Train {
        #[arg(long, default_value_t = 1)]
        trials: usize,
    },
    /// Re-test a saved network.
    Eval {
        /// Wiring snapshot written by `train`.
        #[arg(long)]
        snapshot: PathBuf,
        /// Trial record written alongside the snapshot.
        #[arg(long)]
        trial: PathBuf,
    },
    /// Sweep one parameter.
    Sweep {
        /// n_over_c, sigma_jitter or n_sub.
        #[arg(long)]
        axis: Option<SweepAxis>,
        /// Comma separated grid values.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Success rates with each nonideality and with all of them.
    Mismatch {
        #[arg(long, default_value_t = 50)]
        trials: usize,
    },
}

impl Cmd {
    fn name(&self) -> &'static str {
        match self {
            Cmd::Gen => "gen",
            Cmd::Tune => "tune",
            Cmd::Train { .. } => "train",
            Cmd::Eval { .. } => "eval",
            Cmd::Sweep { .. } => "sweep",
            Cmd::Mismatch { .. } => "mismatch",
        }
    }
}

fn resolve_config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(dt) = c.dt {
        cfg.network.dt = dt;
    }
    if let Some(o) = &c.out {
        cfg.output = Some(o.clone());
    }
    cfg.trial_config(false).validate()?;
    Ok(cfg)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

/// Stored next to each wiring snapshot so a trained network can be
/// re-tested without retraining.
#[derive(serde::Serialize, serde::Deserialize)]
struct TrialRecord {
    trial_id: usize,
    seed: u64,
    success: bool,
    failure_mode: Option<String>,
    ep_sat: usize,
    saturated: bool,
    fp_rate: f64,
    learned: Vec<Representation>,
    tune: TuneResult,
}

fn trial_record(r: &TrialResult) -> TrialRecord {
    TrialRecord {
        trial_id: r.trial_id,
        seed: r.seed,
        success: r.success,
        failure_mode: r.failure_mode.map(|m| m.to_string()),
        ep_sat: r.ep_sat,
        saturated: r.saturated,
        fp_rate: r.fp_rate,
        learned: r.learned.clone(),
        tune: r.model.tune,
    }
}

fn write_trials(dir: &Path, results: &[TrialResult], snapshots: bool) -> Result<()> {
    write_epoch_csv(results, create(&dir.join("epochs.csv"))?)?;
    write_trial_csv(results, create(&dir.join("trials.csv"))?)?;
    let mut audit = create(&dir.join("audit.jsonl"))?;
    for r in results {
        let rec = trial_record(r);
        writeln!(audit, "{}", json!({ "event": "trial", "record": rec }))?;
        for a in &r.audit {
            writeln!(
                audit,
                "{}",
                json!({ "event": "pattern", "trial_id": r.trial_id, "audit": a })
            )?;
        }
        if snapshots {
            r.model
                .wiring
                .save_json(&dir.join(format!("wiring_{}.json", r.trial_id)))?;
            fs::write(
                dir.join(format!("trial_{}.json", r.trial_id)),
                serde_json::to_string_pretty(&rec)?,
            )?;
        }
    }
    audit.flush()?;
    Ok(())
}

fn cmd_eval(cfg: &ExperimentConfig, dir: &Path, snapshot: &Path, trial: &Path) -> Result<()> {
    let text = fs::read_to_string(trial).with_context(|| format!("reading {}", trial.display()))?;
    let rec: TrialRecord =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", trial.display()))?;
    let wiring = Wiring::load_json(snapshot)?;
    let g = *wiring.geometry();
    let t = rec.tune;
    if (g.inputs, g.branches, g.synapses_per_branch, g.neurons) != (t.d, t.m, t.k, t.neurons) {
        return Err(Error::Integrity(format!(
            "snapshot geometry (d={}, m={}, k={}, N={}) does not match the trial record (d={}, m={}, k={}, N={})",
            g.inputs, g.branches, g.synapses_per_branch, g.neurons, t.d, t.m, t.k, t.neurons
        ))
        .into());
    }
    let mut tc = cfg.trial_config(false);
    tc.seed = rec.seed;
    let templates = trial_templates(&tc)?;
    if templates.first().map(|p| p.dim()) != Some(g.inputs) {
        return Err(Error::Integrity(format!(
            "config has d = {}, snapshot has d = {}",
            tc.stimulus.d, g.inputs
        ))
        .into());
    }
    if templates.len() != rec.learned.len() {
        return Err(Error::Integrity(format!(
            "config has {} classes, trial record has {}",
            templates.len(),
            rec.learned.len()
        ))
        .into());
    }
    let model = Model {
        tune: t,
        wiring,
        mismatch: None,
        dt: tc.network.dt,
    };
    let jitter = JitterSpec::new(tc.stimulus.sigma_jitter)?;
    let mut rng = stream(cfg.seed, "eval", 0);
    let test = templates
        .iter()
        .map(|p| model.represent(&apply_jitter(p, jitter, &mut rng)?))
        .collect::<wta_core::Result<Vec<_>>>()?;
    let outcome = classify_outcome(&rec.learned, &test);
    let s = &tc.stimulus;
    let probes = (0..tc.training.n_probes)
        .map(|i| {
            gen_poisson_template(
                s.d,
                s.rate,
                s.duration,
                s.active_fraction,
                (s.classes + i) as u32,
                &mut rng,
            )
        })
        .collect::<wta_core::Result<Vec<_>>>()?;
    let (_, fp_rate) = false_positive_probe(&model, &rec.learned, &probes)?;

    let mut out = create(&dir.join("eval.csv"))?;
    writeln!(out, "class_label,learned,test")?;
    for ((p, l), r) in templates.iter().zip(&rec.learned).zip(&test) {
        writeln!(
            out,
            "{},{},{}",
            p.class_label,
            l.0.iter().map(u32::to_string).collect::<Vec<_>>().join(" "),
            r.0.iter().map(u32::to_string).collect::<Vec<_>>().join(" ")
        )?;
    }
    out.flush()?;
    let mode = outcome.map_or("none".to_string(), |m| m.to_string());
    println!(
        "success={} failure_mode={} fp_rate={:.4}",
        outcome.is_none(),
        mode,
        fp_rate
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = resolve_config(&cli.common)?;
    if let Some(j) = cli.common.jobs {
        if j == 0 {
            bail!("--jobs must be >= 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()?;
    }
    let dir = cfg
        .output
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("wta-{}", cli.cmd.name())));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join("config.toml"), cfg.to_toml_string()?)?;
    log::info!("master seed {}; output in {}", cfg.seed, dir.display());

    match cli.cmd {
        Cmd::Gen => {
            let tc = cfg.trial_config(false);
            let s = &tc.stimulus;
            let set = PatternSet {
                meta: PatternSetMeta {
                    d: s.d,
                    duration: s.duration,
                    classes: s.classes,
                    rate: s.rate,
                    active_fraction: s.active_fraction,
                    seed: cfg.seed,
                },
                templates: trial_templates(&tc)?,
            };
            let path = dir.join("patterns.csv");
            save_patterns(&path, &set)?;
            println!("{}", path.display());
        }
        Cmd::Tune => {
            let tc = cfg.trial_config(false);
            let templates = trial_templates(&tc)?;
            let (result, _) = tune(&tc, &templates, &mut stream(tc.seed, "tune", 0))?;
            let text = serde_json::to_string_pretty(&result)?;
            fs::write(dir.join("tune.json"), &text)?;
            println!("{text}");
        }
        Cmd::Train { trials } => {
            if trials == 0 {
                bail!("--trials must be >= 1");
            }
            let results = run_trials(&cfg.trial_config(false), trials, "trial")?;
            write_trials(&dir, &results, true)?;
            let ok = results.iter().filter(|r| r.success).count();
            println!("{ok}/{} trials succeeded", results.len());
        }
        Cmd::Eval { snapshot, trial } => cmd_eval(&cfg, &dir, &snapshot, &trial)?,
        Cmd::Sweep { axis, grid, trials } => {
            let axis = axis.unwrap_or(cfg.sweep.axis);
            let grid = grid.unwrap_or_else(|| cfg.sweep.grid.clone());
            let trials = trials.unwrap_or(cfg.sweep.trials_per_point);
            let (rows, raw) = sweep(&cfg.trial_config(false), axis, &grid, trials)?;
            write_sweep_csv(&rows, create(&dir.join("sweep.csv"))?)?;
            for (i, results) in raw.iter().enumerate() {
                let sub = dir.join(format!("point_{i}"));
                fs::create_dir_all(&sub)?;
                write_trials(&sub, results, false)?;
            }
            write_sweep_csv(&rows, std::io::stdout().lock())?;
        }
        Cmd::Mismatch { trials } => {
            let rows = degradation_experiment(&cfg.trial_config(false), &cfg.mismatch, trials)?;
            write_degradation_csv(&rows, create(&dir.join("degradation.csv"))?)?;
            write_degradation_csv(&rows, std::io::stdout().lock())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if matches!(e.downcast_ref::<Error>(), Some(Error::Calibration(_))) {
                eprintln!("hint: set network.i0_inh (or i0_inh_ratio > 1) so the inhibitory amplitude exceeds the mean excitatory current");
            }
            ExitCode::FAILURE
        }
    }
}
