//! Run configuration: a JSON document, validated in full before any work.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use noisylab::freqmodel::{build_prior, PriorInput, PriorSpec};
use noisylab::mcsim::{GlobalRateMode, InstanceScenario, Treatment};
use noisylab::noise::{BinaryLabel, BinaryNoiseRates, RateCombiner};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Tau,
    Weight,
    Simulate,
    Bounds,
    Sweep,
    NoiseSynth,
}

impl Command {
    pub fn as_str(&self) -> &'static str {
        match self {
            Command::Tau => "tau",
            Command::Weight => "weight",
            Command::Simulate => "simulate",
            Command::Bounds => "bounds",
            Command::Sweep => "sweep",
            Command::NoiseSynth => "noise-synth",
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawScenario {
    pub l: Option<u64>,
    /// `1` or `-1`; defaults to `1`.
    pub y: Option<i8>,
    pub e_plus: Option<f64>,
    pub e_minus: Option<f64>,
    pub p_plus: Option<f64>,
    pub smoothing_a: Option<f64>,
    /// Sample the global noisy rate from this many draws instead of using
    /// the population value.
    pub global_rate_n: Option<u64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawGrid {
    pub l: Option<Vec<u64>>,
    /// Symmetric flip rates.
    pub e: Option<Vec<f64>>,
    pub y: Option<i8>,
    pub p_plus: Option<f64>,
    pub smoothing_a: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawNoiseSynth {
    pub epsilon: Option<f64>,
    pub sigma: Option<f64>,
    pub dim: Option<usize>,
    pub instances: Option<usize>,
    pub combiner: Option<RateCombiner>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub command: Option<Command>,
    pub seed: Option<u64>,
    pub trials: Option<u64>,
    pub output: Option<PathBuf>,
    pub workers: Option<usize>,
    pub prior: Option<PriorInput>,
    pub n: Option<u64>,
    pub ls: Option<Vec<u64>>,
    pub replicates: Option<usize>,
    pub weight_replicates: Option<usize>,
    pub intervals: Option<Vec<[f64; 2]>>,
    pub scenario: Option<RawScenario>,
    pub scenarios: Option<Vec<RawScenario>>,
    pub grid: Option<RawGrid>,
    pub treatments: Option<Vec<Treatment>>,
    pub noise: Option<RawNoiseSynth>,
}

/// One problem with a config, located by a dotted field path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Default)]
struct Violations(Vec<Violation>);

impl Violations {
    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.0.push(Violation { path: path.into(), message: message.into() });
    }

    fn require<'a, T>(&mut self, value: &'a Option<T>, path: &str) -> Option<&'a T> {
        if value.is_none() {
            self.push(path, format!("{} required", path.rsplit('.').next().unwrap_or(path)));
        }
        value.as_ref()
    }

    fn check(&mut self, ok: bool, path: &str, message: &str) -> bool {
        if !ok {
            self.push(path, message);
        }
        ok
    }
}

pub const DEFAULT_TRIALS: u64 = 100_000;
pub const DEFAULT_REPLICATES: usize = 10_000;

#[derive(Debug, Clone)]
pub struct TauJob {
    pub prior: PriorSpec,
    pub n: u64,
    pub ls: Vec<u64>,
    pub replicates: usize,
    pub weight_replicates: usize,
}

#[derive(Debug, Clone)]
pub struct WeightJob {
    pub prior: PriorSpec,
    pub intervals: Vec<(f64, f64)>,
    pub replicates: usize,
}

#[derive(Debug, Clone)]
pub struct NoiseJob {
    pub epsilon: f64,
    pub sigma: f64,
    pub dim: usize,
    pub instances: usize,
    pub combiner: RateCombiner,
}

#[derive(Debug, Clone)]
pub enum Job {
    Tau(TauJob),
    Weight(WeightJob),
    Simulate { scenario: InstanceScenario, treatments: Vec<Treatment> },
    Bounds(InstanceScenario),
    Sweep(Vec<InstanceScenario>),
    NoiseSynth(NoiseJob),
}

/// A fully validated run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub seed: u64,
    pub trials: u64,
    pub output: Option<PathBuf>,
    pub workers: Option<usize>,
    pub job: Job,
}

/// Flags that take precedence over the document.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub command: Option<Command>,
    pub seed: Option<u64>,
    pub trials: Option<u64>,
    pub output: Option<PathBuf>,
    pub workers: Option<usize>,
}

/// Why a config could not be turned into a run.
#[derive(Debug)]
pub enum ConfigError {
    Unreadable(String),
    Malformed(String),
    Invalid(Vec<Violation>),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Unreadable(m) => write!(f, "cannot read config: {m}"),
            ConfigError::Malformed(m) => write!(f, "malformed config: {m}"),
            ConfigError::Invalid(v) => {
                write!(f, "{} violation(s)", v.len())?;
                for x in v {
                    write!(f, "\n  {x}")?;
                }
                Ok(())
            }
        }
    }
}

/// Reads and parses the document; the raw JSON value is kept for the manifest.
pub fn load(path: &Path) -> Result<(RawConfig, serde_json::Value), ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Unreadable(format!("{}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| ConfigError::Malformed(e.to_string()))?;
    let raw: RawConfig = serde_json::from_value(value.clone()).map_err(|e| ConfigError::Malformed(e.to_string()))?;
    Ok((raw, value))
}

fn label(y: Option<i8>, path: &str, v: &mut Violations) -> BinaryLabel {
    match y.unwrap_or(1) {
        1 => BinaryLabel::Pos,
        -1 => BinaryLabel::Neg,
        _ => {
            v.push(path, "y must be 1 or -1");
            BinaryLabel::Pos
        }
    }
}

fn rates(e_plus: Option<f64>, e_minus: Option<f64>, path: &str, v: &mut Violations) -> Option<BinaryNoiseRates> {
    let ep = *v.require(&e_plus, &format!("{path}.e_plus"))?;
    let em = *v.require(&e_minus, &format!("{path}.e_minus"))?;
    let mut ok = v.check((0.0..1.0).contains(&ep), &format!("{path}.e_plus"), "e_plus must be in [0, 1)");
    ok &= v.check((0.0..1.0).contains(&em), &format!("{path}.e_minus"), "e_minus must be in [0, 1)");
    if ok && !v.check(ep + em < 1.0, path, "e_plus + e_minus must be < 1") {
        return None;
    }
    if !ok {
        return None;
    }
    BinaryNoiseRates::new(ep, em).ok()
}

fn scenario(raw: &RawScenario, path: &str, v: &mut Violations) -> Option<InstanceScenario> {
    let l = v.require(&raw.l, &format!("{path}.l")).copied();
    if let Some(l) = l {
        v.check(l >= 1, &format!("{path}.l"), "l must be >= 1");
    }
    let y = label(raw.y, &format!("{path}.y"), v);
    let r = rates(raw.e_plus, raw.e_minus, path, v);
    let p_plus = raw.p_plus.unwrap_or(0.5);
    v.check(p_plus > 0.0 && p_plus < 1.0, &format!("{path}.p_plus"), "p_plus must be in (0, 1)");
    let a = raw.smoothing_a.unwrap_or(0.1);
    v.check((0.0..=1.0).contains(&a), &format!("{path}.smoothing_a"), "smoothing_a must be in [0, 1]");
    if let Some(n) = raw.global_rate_n {
        v.check(n >= 1, &format!("{path}.global_rate_n"), "global_rate_n must be >= 1");
    }
    let s = InstanceScenario::new(l?, y, r?, p_plus, a).ok()?;
    Some(match raw.global_rate_n {
        Some(n) => s.with_global_rate(GlobalRateMode::FiniteSample { n }),
        None => s,
    })
}

fn prior(raw: &Option<PriorInput>, v: &mut Violations) -> Option<PriorSpec> {
    let input = v.require(raw, "prior")?;
    match build_prior(input) {
        Ok(p) => Some(p),
        Err(e) => {
            v.push("prior", e.to_string());
            None
        }
    }
}

/// Validates `raw` (with `overrides` applied) and builds the run.
pub fn validate(raw: &RawConfig, overrides: &Overrides) -> Result<RunConfig, Vec<Violation>> {
    let mut v = Violations::default();
    let command = match (overrides.command, raw.command) {
        (Some(c), Some(d)) if c != d => {
            v.push("command", format!("config is for '{}', not '{}'", d.as_str(), c.as_str()));
            None
        }
        (Some(c), _) | (None, Some(c)) => Some(c),
        (None, None) => {
            v.push("command", "command required");
            None
        }
    };
    let seed = overrides.seed.or(raw.seed);
    if seed.is_none() {
        v.push("seed", "seed required");
    }
    let trials = overrides.trials.or(raw.trials).unwrap_or(DEFAULT_TRIALS);
    v.check(trials >= 1, "trials", "trials must be >= 1");
    let workers = overrides.workers.or(raw.workers);
    if let Some(w) = workers {
        v.check(w >= 1, "workers", "workers must be >= 1");
    }
    let replicates = raw.replicates.unwrap_or(DEFAULT_REPLICATES);

    let job = command.and_then(|c| match c {
        Command::Tau => {
            let p = prior(&raw.prior, &mut v);
            let n = v.require(&raw.n, "n").copied();
            let ls = v.require(&raw.ls, "ls").cloned();
            if let (Some(n), Some(ls)) = (n, &ls) {
                v.check(!ls.is_empty(), "ls", "ls must not be empty");
                for (i, &l) in ls.iter().enumerate() {
                    v.check(l >= 1 && l <= n, &format!("ls[{i}]"), "each l must satisfy 1 <= l <= n");
                }
            }
            let weight_replicates = raw.weight_replicates.unwrap_or(replicates);
            v.check(weight_replicates >= 1, "weight_replicates", "weight_replicates must be >= 1");
            Some(Job::Tau(TauJob { prior: p?, n: n?, ls: ls?, replicates, weight_replicates }))
        }
        Command::Weight => {
            let p = prior(&raw.prior, &mut v);
            let intervals = v.require(&raw.intervals, "intervals").cloned();
            if let Some(iv) = &intervals {
                v.check(!iv.is_empty(), "intervals", "intervals must not be empty");
                for (i, [lo, hi]) in iv.iter().enumerate() {
                    v.check(
                        0.0 <= *lo && lo <= hi && *hi <= 1.0,
                        &format!("intervals[{i}]"),
                        "interval must satisfy 0 <= lo <= hi <= 1",
                    );
                }
            }
            v.check(replicates >= 1, "replicates", "replicates must be >= 1");
            Some(Job::Weight(WeightJob {
                prior: p?,
                intervals: intervals?.iter().map(|[a, b]| (*a, *b)).collect(),
                replicates,
            }))
        }
        Command::Simulate | Command::Bounds => {
            let raw_s = v.require(&raw.scenario, "scenario").cloned()?;
            let s = scenario(&raw_s, "scenario", &mut v)?;
            if c == Command::Simulate {
                let treatments = raw.treatments.clone().unwrap_or_else(|| Treatment::ALL.to_vec());
                v.check(!treatments.is_empty(), "treatments", "treatments must not be empty");
                Some(Job::Simulate { scenario: s, treatments })
            } else {
                Some(Job::Bounds(s))
            }
        }
        Command::Sweep => sweep_scenarios(raw, &mut v).map(Job::Sweep),
        Command::NoiseSynth => {
            let raw_n = v.require(&raw.noise, "noise").cloned()?;
            let eps = v.require(&raw_n.epsilon, "noise.epsilon").copied();
            if let Some(e) = eps {
                v.check((0.0..=1.0).contains(&e), "noise.epsilon", "epsilon must be in [0, 1]");
            }
            let sigma = raw_n.sigma.unwrap_or(0.1);
            v.check(sigma > 0.0, "noise.sigma", "sigma must be > 0");
            let dim = raw_n.dim.unwrap_or(16);
            v.check(dim >= 1, "noise.dim", "dim must be >= 1");
            let instances = raw_n.instances.unwrap_or(1000);
            v.check(instances >= 1, "noise.instances", "instances must be >= 1");
            Some(Job::NoiseSynth(NoiseJob {
                epsilon: eps?,
                sigma,
                dim,
                instances,
                combiner: raw_n.combiner.unwrap_or_default(),
            }))
        }
    });

    if !v.0.is_empty() {
        return Err(v.0);
    }
    Ok(RunConfig {
        command: command.expect("no violations implies a command"),
        seed: seed.expect("no violations implies a seed"),
        trials,
        output: overrides.output.clone().or_else(|| raw.output.clone()),
        workers,
        job: job.expect("no violations implies a job"),
    })
}

fn sweep_scenarios(raw: &RawConfig, v: &mut Violations) -> Option<Vec<InstanceScenario>> {
    match (&raw.scenarios, &raw.grid) {
        (Some(_), Some(_)) => {
            v.push("grid", "give either scenarios or grid, not both");
            None
        }
        (Some(list), None) => {
            v.check(!list.is_empty(), "scenarios", "scenarios must not be empty");
            let built: Vec<Option<InstanceScenario>> = list
                .iter()
                .enumerate()
                .map(|(i, s)| scenario(s, &format!("scenarios[{i}]"), v))
                .collect();
            built.into_iter().collect()
        }
        (None, grid) => {
            let g = grid.clone().unwrap_or_default();
            let ls = g.l.unwrap_or_else(|| vec![2, 4, 10, 20, 50]);
            let es = g.e.unwrap_or_else(|| vec![0.1, 0.2, 0.3]);
            v.check(!ls.is_empty() && !es.is_empty(), "grid", "grid axes must not be empty");
            let mut out = Vec::new();
            for l in &ls {
                for e in &es {
                    let rs = RawScenario {
                        l: Some(*l),
                        y: g.y,
                        e_plus: Some(*e),
                        e_minus: Some(*e),
                        p_plus: g.p_plus,
                        smoothing_a: g.smoothing_a,
                        global_rate_n: None,
                    };
                    out.push(scenario(&rs, &format!("grid[l={l}, e={e}]"), v));
                }
            }
            out.into_iter().collect()
        }
    }
}
