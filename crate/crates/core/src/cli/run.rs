//! Executes a validated run and writes its CSV and manifest.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde_json::json;

use noisylab::freqmodel::{estimate_tau, weight_estimates};
use noisylab::mcsim::{exact_outcome, run_trials_with, sweep_with, BoundReport, InstanceScenario, SimOptions};
use noisylab::noise::InstanceNoiseSynth;

use super::config::{Job, NoiseJob, RunConfig, TauJob, WeightJob};

pub const REPORT_COLUMNS: [&str; 19] = [
    "scenario",
    "l",
    "y",
    "e_plus",
    "e_minus",
    "p_plus",
    "smoothing_a",
    "treatment",
    "event",
    "trials",
    "mc_estimate",
    "ci_lo",
    "ci_hi",
    "exact",
    "bound",
    "bound_kind",
    "bound_form",
    "regime_ok",
    "ordering_holds",
];

const SIMULATE_COLUMNS: [&str; 17] = [
    "scenario",
    "l",
    "y",
    "e_plus",
    "e_minus",
    "p_plus",
    "smoothing_a",
    "treatment",
    "trials",
    "success",
    "failure",
    "tie",
    "mc_estimate",
    "ci_lo",
    "ci_hi",
    "exact",
    "mean_error",
];

const TAU_COLUMNS: [&str; 13] = [
    "n",
    "l",
    "exact",
    "mc",
    "mc_se",
    "weight_large",
    "weight_large_se",
    "lower_large",
    "weight_small",
    "weight_small_se",
    "lower_small",
    "small_vacuous",
    "regime_ok",
];

/// Shortest representation that round-trips; never locale dependent.
fn num(x: f64) -> String {
    format!("{x:?}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn opt_bool(x: Option<bool>) -> String {
    x.map(|b| b.to_string()).unwrap_or_default()
}

fn scenario_cells(index: usize, s: &InstanceScenario) -> Vec<String> {
    vec![
        index.to_string(),
        s.l.to_string(),
        s.y.to_string(),
        num(s.rates.e_plus()),
        num(s.rates.e_minus()),
        num(s.p_plus),
        num(s.smoothing_a),
    ]
}

/// A finished table: header plus rows.
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&'static str]) -> Self {
        Self { header: header.to_vec(), rows: Vec::new() }
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().context("flushing csv buffer")
    }
}

pub fn report_table(reports: &[BoundReport]) -> Table {
    let mut t = Table::new(&REPORT_COLUMNS);
    for (i, r) in reports.iter().enumerate() {
        for tr in &r.treatments {
            for ev in &tr.events {
                let mut row = scenario_cells(i, &r.scenario);
                row.extend([
                    tr.treatment.as_str().to_string(),
                    ev.event.as_str().to_string(),
                    tr.mc.trials.to_string(),
                    num(ev.mc_estimate),
                    num(ev.ci.0),
                    num(ev.ci.1),
                    opt(ev.exact),
                    opt(ev.bound.map(|b| b.value)),
                    ev.bound.map(|b| b.kind.as_str().to_string()).unwrap_or_default(),
                    ev.bound.map(|b| b.form.as_str().to_string()).unwrap_or_default(),
                    opt_bool(ev.bound.map(|b| b.regime_ok)),
                    opt_bool(ev.ordering_holds),
                ]);
                t.rows.push(row);
            }
        }
    }
    t
}

fn tau_table(job: &TauJob, seed: u64) -> Result<Table> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let estimates = estimate_tau(&job.prior, job.n, &job.ls, job.replicates, job.weight_replicates, &mut rng)?;
    let mut t = Table::new(&TAU_COLUMNS);
    for e in estimates {
        t.rows.push(vec![
            e.n.to_string(),
            e.l.to_string(),
            num(e.exact),
            opt(e.mc.map(|m| m.value)),
            opt(e.mc.map(|m| m.std_error)),
            num(e.weight_large.value),
            num(e.weight_large.std_error),
            num(e.lower_large),
            num(e.weight_small.value),
            num(e.weight_small.std_error),
            num(e.lower_small),
            e.small_vacuous.to_string(),
            e.regime_ok.to_string(),
        ]);
    }
    Ok(t)
}

fn weight_table(job: &WeightJob, seed: u64) -> Result<Table> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let est = weight_estimates(&job.prior, &job.intervals, job.replicates, &mut rng)?;
    let mut t = Table::new(&["lo", "hi", "value", "std_error", "replicates"]);
    for ((lo, hi), e) in job.intervals.iter().zip(est) {
        t.rows.push(vec![num(*lo), num(*hi), num(e.value), num(e.std_error), e.replicates.to_string()]);
    }
    Ok(t)
}

fn noise_table(job: &NoiseJob, seed: u64) -> Result<Table> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let synth = InstanceNoiseSynth::new(job.dim, job.epsilon, job.sigma, &mut rng)?.with_combiner(job.combiner);
    let mut t = Table::new(&["instance", "q", "projection", "rate"]);
    for i in 0..job.instances {
        let x: Vec<f64> = (0..job.dim).map(|_| rng.sample(StandardNormal)).collect();
        let d = synth.draw(&x, &mut rng)?;
        t.rows.push(vec![i.to_string(), num(d.q), num(d.projection), num(d.rate)]);
    }
    Ok(t)
}

/// Computes the output table for `cfg`.
pub fn execute(cfg: &RunConfig) -> Result<Table> {
    let options = SimOptions { workers: cfg.workers };
    Ok(match &cfg.job {
        Job::Tau(j) => tau_table(j, cfg.seed)?,
        Job::Weight(j) => weight_table(j, cfg.seed)?,
        Job::NoiseSynth(j) => noise_table(j, cfg.seed)?,
        Job::Bounds(s) => report_table(&sweep_with(std::slice::from_ref(s), cfg.trials, cfg.seed, options)?),
        Job::Sweep(list) => report_table(&sweep_with(list, cfg.trials, cfg.seed, options)?),
        Job::Simulate { scenario, treatments } => {
            let mut t = Table::new(&SIMULATE_COLUMNS);
            for tr in treatments {
                let tally = run_trials_with(scenario, *tr, cfg.trials, cfg.seed, options)?;
                let exact = exact_outcome(scenario, *tr)?.map(|x| x.success);
                let mut row = scenario_cells(0, scenario);
                row.extend([
                    tr.as_str().to_string(),
                    tally.trials.to_string(),
                    tally.success.to_string(),
                    tally.failure.to_string(),
                    tally.tie.to_string(),
                    num(tally.estimate),
                    num(tally.wilson_ci.0),
                    num(tally.wilson_ci.1),
                    opt(exact),
                    num(tally.mean_error),
                ]);
                t.rows.push(row);
            }
            t
        }
    })
}

/// `out.csv` -> `out.manifest.json`, in the same directory.
pub fn manifest_path(output: &Path) -> PathBuf {
    let stem = output.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
    output.with_file_name(format!("{stem}.manifest.json"))
}

/// Runs `cfg`, writing the CSV to `output` and the manifest beside it.
pub fn run(cfg: &RunConfig, output: &Path, config_echo: &serde_json::Value) -> Result<()> {
    let started = Instant::now();
    let table = execute(cfg)?;
    let bytes = table.to_csv()?;
    if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(output, bytes).with_context(|| format!("writing {}", output.display()))?;
    let manifest = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "command": cfg.command.as_str(),
        "seed": cfg.seed,
        "trials": cfg.trials,
        "workers": cfg.workers,
        "output": output.display().to_string(),
        "rows": table.rows.len(),
        "config": config_echo,
        "wall_time_seconds": started.elapsed().as_secs_f64(),
    });
    let path = manifest_path(output);
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
