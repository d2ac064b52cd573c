//! Poisson spike-train stimuli: template generation, jitter, epoch
//! assembly and the plain-text spike file format.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, param, Error, Result};

/// Sorted spike times in seconds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpikeTrain {
    spikes: Vec<f64>,
}

impl SpikeTrain {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a train from arbitrary times, sorting them. Returns whether
    /// the input was already sorted.
    pub fn from_unsorted(mut spikes: Vec<f64>) -> (Self, bool) {
        let sorted = spikes.windows(2).all(|w| w[0] <= w[1]);
        if !sorted {
            spikes.sort_by(f64::total_cmp);
        }
        (Self { spikes }, sorted)
    }

    pub fn times(&self) -> &[f64] {
        &self.spikes
    }

    pub fn len(&self) -> usize {
        self.spikes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spikes.is_empty()
    }
}

/// One class's afferent array. `class_label` is 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternTemplate {
    pub class_label: u32,
    pub afferents: Vec<SpikeTrain>,
    pub duration: f64,
    pub active_mask: Vec<bool>,
}

impl PatternTemplate {
    pub fn dim(&self) -> usize {
        self.afferents.len()
    }

    pub fn spike_count(&self) -> usize {
        self.afferents.iter().map(SpikeTrain::len).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.afferents.is_empty() {
            return Err(param("pattern has no afferents"));
        }
        if !(self.duration > 0.0) {
            return Err(param(format!(
                "pattern duration {} must be > 0",
                self.duration
            )));
        }
        if self.active_mask.len() != self.afferents.len() {
            return Err(param("active mask length differs from afferent count"));
        }
        for (i, (train, &active)) in self.afferents.iter().zip(&self.active_mask).enumerate() {
            if !active && !train.is_empty() {
                return Err(param(format!("inactive afferent {i} carries spikes")));
            }
            if train
                .times()
                .iter()
                .any(|&t| !(0.0..=self.duration).contains(&t))
            {
                return Err(param(format!(
                    "afferent {i} has a spike outside [0, {}]",
                    self.duration
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JitterSpec {
    /// Standard deviation in seconds. Shifted spikes are clamped to the
    /// pattern window.
    pub sigma: f64,
}

impl JitterSpec {
    pub fn none() -> Self {
        Self { sigma: 0.0 }
    }

    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(param(format!(
                "jitter sigma {sigma} must be finite and >= 0"
            )));
        }
        Ok(Self { sigma })
    }
}

/// One jittered pattern per class, in presentation order.
#[derive(Debug, Clone, PartialEq)]
pub struct Epoch {
    pub patterns: Vec<PatternTemplate>,
}

/// Generates a template of `d` afferents. `floor(d * (1 - active_fraction))`
/// afferents, chosen uniformly, stay empty; the rest are homogeneous Poisson
/// processes built from exponential inter-arrival times.
pub fn gen_poisson_template<R: Rng + ?Sized>(
    d: usize,
    rate: f64,
    duration: f64,
    active_fraction: f64,
    class_label: u32,
    rng: &mut R,
) -> Result<PatternTemplate> {
    if d == 0 {
        return Err(param("d must be >= 1"));
    }
    if !(rate >= 0.0) || !rate.is_finite() {
        return Err(param(format!("rate {rate} must be finite and >= 0")));
    }
    if !(duration > 0.0) || !duration.is_finite() {
        return Err(param(format!("duration {duration} must be > 0")));
    }
    if !(active_fraction > 0.0 && active_fraction <= 1.0) {
        return Err(param(format!(
            "active_fraction {active_fraction} must lie in (0, 1]"
        )));
    }

    let n_empty = ((d as f64) * (1.0 - active_fraction) + 1e-9).floor() as usize;
    let mut active_mask = vec![true; d];
    for i in index::sample(rng, d, n_empty.min(d)) {
        active_mask[i] = false;
    }

    let inter_arrival = (rate > 0.0).then(|| Exp::new(rate).expect("rate > 0"));
    let afferents = active_mask
        .iter()
        .map(|&active| match (&inter_arrival, active) {
            (Some(exp), true) => {
                let mut spikes = Vec::new();
                let mut t = exp.sample(rng);
                while t <= duration {
                    spikes.push(t);
                    t += exp.sample(rng);
                }
                SpikeTrain { spikes }
            }
            _ => SpikeTrain::empty(),
        })
        .collect();

    Ok(PatternTemplate {
        class_label,
        afferents,
        duration,
        active_mask,
    })
}

/// Shifts every spike by an independent Gaussian draw, clamps it to
/// `[0, duration]` and re-sorts each afferent.
pub fn apply_jitter<R: Rng + ?Sized>(
    template: &PatternTemplate,
    spec: JitterSpec,
    rng: &mut R,
) -> Result<PatternTemplate> {
    let spec = JitterSpec::new(spec.sigma)?;
    if spec.sigma == 0.0 {
        return Ok(template.clone());
    }
    let normal = Normal::new(0.0, spec.sigma).map_err(|e| param(e.to_string()))?;
    let duration = template.duration;
    let afferents = template
        .afferents
        .iter()
        .map(|train| {
            let shifted = train
                .times()
                .iter()
                .map(|&t| (t + normal.sample(rng)).clamp(0.0, duration))
                .collect();
            SpikeTrain::from_unsorted(shifted).0
        })
        .collect();
    Ok(PatternTemplate {
        afferents,
        ..template.clone()
    })
}

/// One fresh jittered instance of every template, in a uniformly random
/// order.
pub fn make_epoch<R: Rng + ?Sized>(
    templates: &[PatternTemplate],
    jitter: JitterSpec,
    rng: &mut R,
) -> Result<Epoch> {
    let mut seen = HashSet::new();
    for t in templates {
        if !seen.insert(t.class_label) {
            return Err(param(format!("duplicate class label {}", t.class_label)));
        }
    }
    let mut order: Vec<usize> = (0..templates.len()).collect();
    order.shuffle(rng);
    let patterns = order
        .into_iter()
        .map(|i| apply_jitter(&templates[i], jitter, rng))
        .collect::<Result<_>>()?;
    Ok(Epoch { patterns })
}

/// Generation parameters stored alongside a saved pattern set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternSetMeta {
    pub d: usize,
    pub duration: f64,
    pub classes: usize,
    pub rate: f64,
    pub active_fraction: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatternSet {
    pub meta: PatternSetMeta,
    pub templates: Vec<PatternTemplate>,
}

const HEADER: &str = "class_label,afferent_index,time_seconds";

/// Shortest round-trip decimal, padded to at least six fractional digits.
fn fmt_time(t: f64) -> String {
    let mut s = format!("{t}");
    let frac = match s.find('.') {
        Some(p) => s.len() - p - 1,
        None => {
            s.push('.');
            0
        }
    };
    for _ in frac..6 {
        s.push('0');
    }
    s
}

pub fn save_patterns(path: &Path, set: &PatternSet) -> Result<()> {
    if set.templates.is_empty() {
        return Err(param("no templates to save"));
    }
    for t in &set.templates {
        t.validate()?;
        if t.dim() != set.meta.d {
            return Err(param(format!(
                "class {} has {} afferents, metadata says {}",
                t.class_label,
                t.dim(),
                set.meta.d
            )));
        }
    }
    let m = &set.meta;
    let mut out = String::new();
    let _ = writeln!(out, "# d={}", m.d);
    let _ = writeln!(out, "# duration={}", fmt_time(m.duration));
    let _ = writeln!(out, "# classes={}", m.classes);
    let _ = writeln!(out, "# rate={}", m.rate);
    let _ = writeln!(out, "# active_fraction={}", m.active_fraction);
    let _ = writeln!(out, "# seed={}", m.seed);
    for t in &set.templates {
        let inactive: Vec<String> = t
            .active_mask
            .iter()
            .enumerate()
            .filter(|(_, &a)| !a)
            .map(|(i, _)| i.to_string())
            .collect();
        let _ = writeln!(out, "# inactive.{}={}", t.class_label, inactive.join(" "));
    }
    out.push_str(HEADER);
    out.push('\n');
    for t in &set.templates {
        for (i, train) in t.afferents.iter().enumerate() {
            for &time in train.times() {
                let _ = writeln!(out, "{},{},{}", t.class_label, i, fmt_time(time));
            }
        }
    }
    fs::write(path, out).map_err(io_err(path))
}

pub fn load_patterns(path: &Path) -> Result<PatternSet> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let fail = |line: usize, message: String| Error::Format {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut kv: BTreeMap<String, (usize, String)> = BTreeMap::new();
    let mut inactive: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    let mut records: BTreeMap<u32, Vec<(usize, usize, f64)>> = BTreeMap::new();
    let mut header_seen = false;

    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(meta) = line.strip_prefix('#') {
            let (key, value) = meta
                .trim()
                .split_once('=')
                .ok_or_else(|| fail(lineno, format!("malformed metadata line {line:?}")))?;
            if let Some(label) = key.strip_prefix("inactive.") {
                let label: u32 = label
                    .parse()
                    .map_err(|_| fail(lineno, format!("bad class label {label:?}")))?;
                let idx = value
                    .split_whitespace()
                    .map(|s| s.parse::<usize>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| fail(lineno, format!("bad inactive index: {e}")))?;
                inactive.insert(label, idx);
            } else {
                kv.insert(key.trim().to_string(), (lineno, value.trim().to_string()));
            }
            continue;
        }
        if !header_seen {
            if line != HEADER {
                return Err(fail(lineno, format!("expected header {HEADER:?}")));
            }
            header_seen = true;
            continue;
        }
        let mut fields = line.split(',');
        let (Some(c), Some(a), Some(t), None) =
            (fields.next(), fields.next(), fields.next(), fields.next())
        else {
            return Err(fail(lineno, "expected 3 comma-separated fields".into()));
        };
        let label: u32 = c
            .trim()
            .parse()
            .map_err(|_| fail(lineno, format!("bad class label {c:?}")))?;
        let aff: usize = a
            .trim()
            .parse()
            .map_err(|_| fail(lineno, format!("bad afferent index {a:?}")))?;
        let time: f64 = t
            .trim()
            .parse()
            .map_err(|_| fail(lineno, format!("bad spike time {t:?}")))?;
        if !time.is_finite() {
            return Err(fail(lineno, "non-finite spike time".into()));
        }
        records.entry(label).or_default().push((lineno, aff, time));
    }

    let get = |key: &str| -> Result<(usize, String)> {
        kv.get(key)
            .cloned()
            .ok_or_else(|| fail(0, format!("missing metadata '{key}'")))
    };
    fn parse_meta<T: std::str::FromStr>(
        (line, v): (usize, String),
        key: &str,
        fail: &dyn Fn(usize, String) -> Error,
    ) -> Result<T> {
        v.parse()
            .map_err(|_| fail(line, format!("bad value for '{key}': {v:?}")))
    }
    let meta = PatternSetMeta {
        d: parse_meta(get("d")?, "d", &fail)?,
        duration: parse_meta(get("duration")?, "duration", &fail)?,
        classes: parse_meta(get("classes")?, "classes", &fail)?,
        rate: parse_meta(get("rate")?, "rate", &fail)?,
        active_fraction: parse_meta(get("active_fraction")?, "active_fraction", &fail)?,
        seed: parse_meta(get("seed")?, "seed", &fail)?,
    };
    if meta.d == 0 {
        return Err(fail(kv["d"].0, "empty afferent list (d = 0)".into()));
    }
    if !(meta.duration > 0.0) {
        return Err(fail(kv["duration"].0, "duration must be > 0".into()));
    }

    let mut labels: Vec<u32> = inactive.keys().chain(records.keys()).copied().collect();
    labels.sort_unstable();
    labels.dedup();
    if labels.is_empty() {
        return Err(fail(0, "no classes in file".into()));
    }

    let mut templates = Vec::with_capacity(labels.len());
    for label in labels {
        let mut trains = vec![Vec::new(); meta.d];
        for &(lineno, aff, time) in records.get(&label).map(Vec::as_slice).unwrap_or(&[]) {
            if aff >= meta.d {
                return Err(fail(lineno, format!("afferent {aff} >= d={}", meta.d)));
            }
            if !(0.0..=meta.duration).contains(&time) {
                return Err(fail(
                    lineno,
                    format!("spike {time} outside [0, {}]", meta.duration),
                ));
            }
            trains[aff].push(time);
        }
        let mut active_mask = vec![true; meta.d];
        for &i in inactive.get(&label).map(Vec::as_slice).unwrap_or(&[]) {
            if i >= meta.d {
                return Err(fail(0, format!("class {label}: inactive index {i} >= d")));
            }
            active_mask[i] = false;
        }
        let afferents = trains
            .into_iter()
            .enumerate()
            .map(|(i, times)| {
                let (train, sorted) = SpikeTrain::from_unsorted(times);
                if !sorted {
                    log::warn!(
                        "{}: class {label} afferent {i}: spike times out of order, re-sorted",
                        path.display()
                    );
                }
                train
            })
            .collect();
        let template = PatternTemplate {
            class_label: label,
            afferents,
            duration: meta.duration,
            active_mask,
        };
        template
            .validate()
            .map_err(|e| fail(0, format!("class {label}: {e}")))?;
        templates.push(template);
    }
    Ok(PatternSet { meta, templates })
}
