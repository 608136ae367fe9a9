//! Acceptance suite. Runs every criterion in order and prints one
//! PASS/FAIL line per criterion; exits non-zero if any fails.

use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use noisylab::bounds::{binom_tail, lc_failure_lower, lc_success_lower, BoundValue};
use noisylab::freqmodel::{
    large_bound_interval, tau_exact, tau_lower_large, tau_monte_carlo, weight_estimate, PriorSpec,
};
use noisylab::mcsim::{exact_outcome, run_trials, sweep, Event, InstanceScenario, Treatment};
use noisylab::memorize::{empirical_distribution, LabelDist};
use noisylab::noise::{sample_noisy_labels, BinaryLabel, BinaryNoiseRates, NoiseModel};
use noisylab::treatments::{
    compare_ls_lc, corrected_label, global_noisy_positive_rate, lc_empirical_loss, lc_posterior_expectation,
    peer_expected_loss, peer_vertex_check, JointTable, LossVector, LsLcOutcome, DEFAULT_Q_MIN,
};

type Check = Result<String, String>;
type Criterion = (u32, &'static str, Duration, fn() -> Check);

const GRID_L: [u64; 4] = [4, 10, 20, 50];
const GRID_E: [f64; 3] = [0.1, 0.2, 0.3];

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn lib<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

/// `C(l, k)` exactly, for l small enough that it fits in u128.
fn choose(l: u64, k: u64) -> u128 {
    let k = k.min(l - k);
    (0..k).fold(1u128, |acc, i| acc * (l - i) as u128 / (i + 1) as u128)
}

/// `P[Bin(l, p) >= k]` by direct summation; independent of the library.
fn naive_tail(l: u64, p: f64, k: u64) -> f64 {
    (k..=l)
        .map(|j| choose(l, j) as f64 * p.powi(j as i32) * (1.0 - p).powi((l - j) as i32))
        .sum()
}

fn naive_kl(a: f64, b: f64) -> f64 {
    a * (a / b).ln() + (1.0 - a) * ((1.0 - a) / (1.0 - b)).ln()
}

fn criterion_1() -> Check {
    for l in GRID_L {
        for e in GRID_E {
            let exact = lib(binom_tail(l, 1.0 - e, l / 2 + 1))?;
            let oracle = naive_tail(l, 1.0 - e, l / 2 + 1);
            ensure((exact - oracle).abs() <= 1e-9, || format!("l={l} e={e}: tail {exact} vs oracle {oracle}"))?;
            let bound = lib(lc_success_lower(l, e))?;
            let oracle_bound = 1.0 - (-2.0 * l as f64 * (0.5 - e).powi(2)).exp();
            ensure((bound - oracle_bound).abs() <= 1e-9, || format!("l={l} e={e}: bound {bound} vs {oracle_bound}"))?;
            ensure(exact >= bound, || format!("l={l} e={e}: {exact} < {bound}"))?;
        }
    }
    let exact = lib(binom_tail(10, 0.8, 6))?;
    let bound = lib(lc_success_lower(10, 0.2))?;
    // anchors are printed to seven places
    ensure((exact - 0.9672065).abs() <= 5e-8, || format!("anchor success {exact}"))?;
    ensure((bound - 0.8347011).abs() <= 5e-8, || format!("anchor bound {bound}"))?;
    Ok(format!("l=10 e=0.2: {exact:.9} >= {bound:.9}"))
}

fn criterion_2() -> Check {
    for l in [4u64, 10, 20] {
        for e in GRID_E {
            let tail = lib(binom_tail(l, e, l / 2))?;
            let oracle = naive_tail(l, e, l / 2);
            ensure((tail - oracle).abs() <= 1e-9, || format!("l={l} e={e}: tail {tail} vs {oracle}"))?;
            let bound = lib(lc_failure_lower(l, e))?;
            let oracle_bound = (-(l as f64) * naive_kl(0.5, e)).exp() / (2.0 * l as f64).sqrt();
            ensure((bound - oracle_bound).abs() <= 1e-9, || format!("l={l} e={e}: bound {bound} vs {oracle_bound}"))?;
            ensure(tail >= bound, || format!("l={l} e={e}: {tail} < {bound}"))?;
        }
    }
    let tail = lib(binom_tail(10, 0.2, 5))?;
    let bound = lib(lc_failure_lower(10, 0.2))?;
    let strict = lib(binom_tail(10, 0.2, 6))?;
    ensure((tail - 0.0327935).abs() <= 5e-8, || format!("anchor tail {tail}"))?;
    // the printed 0.0240104 comes from a rounded divergence; the exact value is 0.02400960
    ensure((bound - 0.0240096).abs() <= 5e-8, || format!("anchor bound {bound}"))?;
    ensure((strict - 0.0063694).abs() <= 5e-8, || format!("strict failure {strict}"))?;
    ensure(strict < bound, || format!("strict failure {strict} unexpectedly above bound {bound}"))?;
    Ok(format!("l=10 e=0.2: {tail:.7} >= {bound:.7}; strict failure {strict:.7} < bound"))
}

fn criterion_3() -> Check {
    let trials = 100_000;
    let grid: Vec<InstanceScenario> = GRID_L
        .iter()
        .flat_map(|&l| GRID_E.iter().map(move |&e| (l, e)))
        .map(|(l, e)| InstanceScenario::symmetric(l, e))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let reports = lib(sweep(&grid, trials, 42))?;
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for r in &reports {
        for t in &r.treatments {
            for ev in &t.events {
                let Some(exact) = ev.exact else { continue };
                if ev.event == Event::MeanError {
                    continue;
                }
                let se = (exact * (1.0 - exact) / trials as f64).sqrt();
                let dev = (ev.mc_estimate - exact).abs();
                let ok = if se == 0.0 { dev == 0.0 } else { dev <= 4.0 * se };
                ensure(ok, || {
                    format!(
                        "l={} e={} {} {}: mc {} vs exact {exact}",
                        r.scenario.l,
                        r.scenario.rates.e_plus(),
                        t.treatment.as_str(),
                        ev.event.as_str(),
                        ev.mc_estimate
                    )
                })?;
                if se > 0.0 {
                    worst = worst.max(dev / se);
                }
                checked += 1;
            }
        }
    }
    let s = lib(InstanceScenario::symmetric(10, 0.2))?;
    let lc = lib(run_trials(&s, Treatment::LossCorrection, trials, 42))?;
    ensure((lc.estimate - 0.9672).abs() <= 0.005, || format!("LC success {}", lc.estimate))?;
    Ok(format!("{checked} event rates within 4 SE (worst {worst:.2} SE); LC success {:.4}", lc.estimate))
}

fn random_rates(rng: &mut ChaCha8Rng) -> BinaryNoiseRates {
    BinaryNoiseRates::new(rng.random_range(0.0..0.45), rng.random_range(0.0..0.45)).expect("rates below 0.45 each")
}

fn criterion_4() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut worst_sum, mut worst_id): (f64, f64) = (0.0, 0.0);
    for _ in 0..10_000 {
        let rates = random_rates(&mut rng);
        let model: NoiseModel = rates.into();
        let l = rng.random_range(1..=50usize);
        let labels: Vec<usize> = (0..l).map(|_| rng.random_range(0..2)).collect();
        let loss = lib(LossVector::new(vec![rng.random_range(0.0..5.0), rng.random_range(0.0..5.0)]))?;
        let c = lib(corrected_label(&lib(empirical_distribution(&labels, 2))?, rates))?;
        let sum: f64 = c.raw.probs().iter().sum();
        let left = lib(lc_empirical_loss(&labels, &model, &loss))?;
        let right = loss.dot(c.raw.probs());
        worst_sum = worst_sum.max((sum - 1.0).abs());
        worst_id = worst_id.max((left - right).abs());
    }
    ensure(worst_sum <= 1e-12, || format!("sum off by {worst_sum:e}"))?;
    ensure(worst_id <= 1e-10, || format!("identity off by {worst_id:e}"))?;
    let rates = lib(BinaryNoiseRates::symmetric(0.2))?;
    let loss = lib(LossVector::new(vec![2.0, 0.1]))?;
    let labels = [1, 1, 0];
    let left = lib(lc_empirical_loss(&labels, &rates.into(), &loss))?;
    let right = loss.dot(lib(corrected_label(&lib(empirical_distribution(&labels, 2))?, rates))?.raw.probs());
    ensure((left - 0.522222).abs() <= 5e-7 && (right - 0.522222).abs() <= 5e-7, || {
        format!("anchor {left} / {right}")
    })?;
    Ok(format!("10000 cases: |sum-1| <= {worst_sum:.1e}, identity gap <= {worst_id:.1e}; anchor {left:.6}"))
}

fn criterion_5() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let model: NoiseModel = random_rates(&mut rng).into();
        let loss = lib(LossVector::new(vec![rng.random_range(0.0..5.0), rng.random_range(0.0..5.0)]))?;
        for y in 0..2 {
            let e = lib(lc_posterior_expectation(y, &model, &loss))?;
            worst = worst.max((e - loss.values()[y]).abs());
        }
    }
    ensure(worst <= 1e-12, || format!("bias {worst:e}"))?;
    let loss = lib(LossVector::new(vec![2.0, 0.1]))?;
    let anchor = lib(lc_posterior_expectation(BinaryLabel::Pos.index(), &lib(BinaryNoiseRates::symmetric(0.2))?.into(), &loss))?;
    ensure((anchor - 0.1).abs() <= 1e-12, || format!("anchor {anchor}"))?;
    Ok(format!("20000 checks, max bias {worst:.1e}; anchor {anchor}"))
}

fn random_joint(rng: &mut ChaCha8Rng, features: usize) -> Result<JointTable, String> {
    let cells: Vec<f64> = (0..2 * features).map(|_| rng.random_range(0.01..1.0)).collect();
    let total: f64 = cells.iter().sum();
    lib(JointTable::new(cells.chunks(2).map(|c| vec![c[0] / total, c[1] / total]).collect()))
}

fn criterion_6() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for _ in 0..1_000 {
        let features = rng.random_range(1..=4);
        let joint = random_joint(&mut rng, features)?;
        let q: Vec<Vec<f64>> = (0..features)
            .map(|_| {
                let p: f64 = rng.random();
                vec![1.0 - p, p]
            })
            .collect();
        let d = lib(peer_expected_loss(&joint, &q, DEFAULT_Q_MIN))?;
        worst = worst.max((d.value - d.kl_identity()).abs());
    }
    ensure(worst <= 1e-10, || format!("identity gap {worst:e}"))?;
    // outer product of dyadic marginals: the table equals its own product of marginals
    let px = [0.25, 0.75];
    let py = [0.375, 0.625];
    let indep = lib(JointTable::new(px.iter().map(|a| py.iter().map(|b| a * b).collect()).collect()))?;
    let d = lib(peer_expected_loss(&indep, &[vec![0.3, 0.7], vec![0.9, 0.1]], DEFAULT_Q_MIN))?;
    ensure(d.value == 0.0, || format!("independent joint gives {}", d.value))?;
    Ok(format!("1000 joints, identity gap <= {worst:.1e}; independent joint gives exactly 0"))
}

fn criterion_7() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut checked = 0;
    while checked < 1_000 {
        let l = rng.random_range(1..=50usize);
        let e = rng.random_range(0.0..0.45);
        let rates = lib(BinaryNoiseRates::symmetric(e))?;
        let p_plus = rng.random_range(0.05..0.95);
        let y = if rng.random::<bool>() { BinaryLabel::Pos } else { BinaryLabel::Neg };
        let labels = lib(sample_noisy_labels(y.index(), l, &rates.transition(), &mut rng))?;
        let dist = lib(empirical_distribution(&labels, 2))?;
        let rate = global_noisy_positive_rate(p_plus, rates);
        if (dist.get(1) - rate).abs() <= 1e-9 {
            continue;
        }
        let v = lib(peer_vertex_check(&dist, rate, 1001, 1e-3))?;
        ensure(v.on_boundary, || format!("interior argmin {} for P+={} rate={rate}", v.argmin, dist.get(1)))?;
        checked += 1;
    }
    Ok("1000 scenarios, every argmin on the boundary".into())
}

fn criterion_8() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut cases = 0;
    for a in [0.05, 0.1, 0.3] {
        for e in GRID_E {
            let rates = lib(BinaryNoiseRates::symmetric(e))?;
            for y in [BinaryLabel::Pos, BinaryLabel::Neg] {
                for _ in 0..1_000 {
                    let p: f64 = rng.random();
                    if p == 0.5 {
                        continue;
                    }
                    let dist = lib(LabelDist::binary(p))?;
                    let c = lib(compare_ls_lc(&dist, y, rates, a))?;
                    let event = dist.get(y.index()) > 0.5;
                    let ok = if event { c.err_ls > c.err_lc } else { c.err_ls < c.err_lc };
                    ensure(ok && c.outcome != LsLcOutcome::Tie, || {
                        format!("y={y} a={a} e={e} P+={p}: err_ls {} err_lc {}", c.err_ls, c.err_lc)
                    })?;
                    cases += 1;
                }
                let half = lib(compare_ls_lc(&lib(LabelDist::uniform(2))?, y, rates, a))?;
                ensure(half.outcome == LsLcOutcome::Tie, || format!("no tie at [0.5, 0.5] for y={y} a={a} e={e}"))?;
            }
        }
    }
    Ok(format!("{cases} random labels ordered as expected; ties only at [0.5, 0.5]"))
}

fn criterion_9() -> Check {
    let n = 10_000;
    let ls = [2u64, 10, 100, 1000];
    let prior = lib(PriorSpec::zipf_capped(1000, 1.1, Some(0.05)))?;
    ensure(prior.pi_max() <= 0.05 + 1e-15, || format!("pi_max {}", prior.pi_max()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let taus = lib(tau_monte_carlo(&prior, n, &ls, 10_000, &mut rng))?;
    let mut parts = Vec::new();
    for t in &taus {
        let w = lib(weight_estimate(&prior, large_bound_interval(n, t.l), 10_000, &mut rng))?;
        let bound = tau_lower_large(n, t.l, w.value);
        let bound_se = tau_lower_large(n, t.l, w.std_error);
        let slack = 3.0 * (t.std_error.powi(2) + bound_se.powi(2)).sqrt();
        ensure(t.value >= bound - slack, || format!("l={}: tau {} < bound {bound} - {slack}", t.l, t.value))?;
        parts.push(format!("l={}: {:.3e} >= {:.3e}", t.l, t.value, bound));
    }
    let flat = lib(PriorSpec::uniform(1000))?;
    for l in [1, 2, 10, 100, 1000] {
        let v = lib(tau_exact(&flat, n, l))?;
        ensure(v == 0.001, || format!("point mass 0.001 gives {v} at l={l}"))?;
    }
    Ok(parts.join("; ") + "; point mass exact")
}

fn criterion_10() -> Check {
    let s = lib(InstanceScenario::symmetric(10, 0.2))?;
    ensure(s.p_plus == 0.5, || "expected balanced classes".into())?;
    let tally = lib(run_trials(&s, Treatment::PeerLoss, 100_000, 42))?;
    let strict = tally.rate(Event::Failure);
    ensure((strict - 0.0063694).abs() <= 0.003, || format!("strict failure {strict}"))?;
    let exact = lib(exact_outcome(&s, Treatment::PeerLoss))?.ok_or("no exact oracle")?;
    let tie_inclusive = exact.probability(Event::FailureOrTie);
    let bound = lib(BoundValue::peer_failure(10, 0.5, s.rates))?;
    ensure(bound.regime_ok, || "bound regime not met".into())?;
    ensure((tie_inclusive - 0.0327935).abs() <= 5e-8, || format!("tie-inclusive {tie_inclusive}"))?;
    ensure(bound.value <= tie_inclusive, || format!("bound {} above {tie_inclusive}", bound.value))?;
    Ok(format!("MC strict failure {strict:.5}; bound {:.7} <= tie-inclusive {tie_inclusive:.7}", bound.value))
}

fn criterion_11() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = dir.path().join("sweep.json");
    std::fs::write(&config, r#"{"command": "sweep", "seed": 42, "trials": 20000}"#).map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for workers in [1, 4] {
        let out = dir.path().join(format!("w{workers}.csv"));
        let status = Command::new(env!("CARGO_BIN_EXE_noisylab"))
            .arg("sweep")
            .arg("--config")
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .arg("--seed")
            .arg("42")
            .arg("--workers")
            .arg(workers.to_string())
            .status()
            .map_err(|e| e.to_string())?;
        ensure(status.success(), || format!("sweep exited with {status}"))?;
        outputs.push(std::fs::read(&out).map_err(|e| e.to_string())?);
    }
    ensure(outputs[0] == outputs[1], || "CSV differs between worker counts".into())?;
    let rows = outputs[0].iter().filter(|&&b| b == b'\n').count() - 1;
    Ok(format!("{rows} rows, {} bytes, identical for 1 and 4 workers", outputs[0].len()))
}

fn main() {
    let criteria: [Criterion; 11] = [
        (1, "loss-correction success bound", Duration::from_secs(1), criterion_1),
        (2, "loss-correction failure bound", Duration::from_secs(1), criterion_2),
        (3, "Monte-Carlo vs exact oracle", Duration::from_secs(10), criterion_3),
        (4, "corrected-label algebra", Duration::from_secs(1), criterion_4),
        (5, "unbiasedness of corrected loss", Duration::from_secs(1), criterion_5),
        (6, "peer-loss KL decomposition", Duration::from_secs(2), criterion_6),
        (7, "confident peer prediction", Duration::from_secs(2), criterion_7),
        (8, "label-smoothing ordering", Duration::from_secs(1), criterion_8),
        (9, "tau_l lower bound", Duration::from_secs(60), criterion_9),
        (10, "peer-loss failure in symmetric regime", Duration::from_secs(5), criterion_10),
        (11, "sweep determinism", Duration::from_secs(30), criterion_11),
    ];
    let mut failed = 0;
    for (id, name, limit, run) in criteria {
        let start = Instant::now();
        let result = run();
        let elapsed = start.elapsed();
        let result = result.and_then(|detail| {
            if elapsed <= limit {
                Ok(detail)
            } else {
                Err(format!("{detail}; took {elapsed:.2?}, limit {limit:?}"))
            }
        });
        match result {
            Ok(detail) => println!("PASS criterion {id:>2} ({name}) [{elapsed:.2?}]: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {id:>2} ({name}) [{elapsed:.2?}]: {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
