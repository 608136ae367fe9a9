//! Seeded Monte-Carlo engine for treatment outcomes on one `l`-appearance
//! instance, with exact binomial oracles and bound reports.
//!
//! Trial `i` of a run draws from `ChaCha8Rng` seeded with the run seed on
//! stream `i`, so results depend only on `(scenario, trials, seed)` and not on
//! how trials are spread over threads. All treatments see the same noisy
//! labels for the same trial.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{binom_pmf, BoundForm, BoundValue, PeerSuccessForm};
use crate::error::{check_range, Error, Result};
use crate::freqmodel::{tau_exact, PriorSpec};
use crate::memorize::{empirical_from_counts, memorization_error, LabelDist};
use crate::noise::{sample_noisy_labels, BinaryLabel, BinaryNoiseRates};
use crate::numeric::{derive_seed, wilson_interval, Z_95};
use crate::treatments::{
    compare_ls_lc, corrected_label, global_noisy_positive_rate, peer_predict, LsLcOutcome, PeerTieRule, TIE_TOL,
};

/// Trials per work unit. Fixed so the reduction order never changes.
const BLOCK: u64 = 4096;

/// Tolerance when checking a lower bound against an exact probability.
const ORDER_TOL: f64 = 1e-12;

/// How peer loss estimates the global rate of noisy positives.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum GlobalRateMode {
    /// `p₊(1-e₊) + p₋e₋`
    #[default]
    Population,
    /// Fraction of noisy positives among `n` fresh draws, per trial.
    FiniteSample { n: u64 },
}

/// One `l`-appearance instance and the population it sits in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceScenario {
    pub l: u64,
    pub y: BinaryLabel,
    pub rates: BinaryNoiseRates,
    pub p_plus: f64,
    pub smoothing_a: f64,
    #[serde(default)]
    pub global_rate: GlobalRateMode,
    #[serde(default)]
    pub tie_rule: Option<PeerTieRule>,
    /// Dataset size, for reporting `τ_l` when a prior is attached.
    #[serde(default)]
    pub n: Option<u64>,
    #[serde(default)]
    pub prior: Option<PriorSpec>,
}

impl InstanceScenario {
    pub fn new(l: u64, y: BinaryLabel, rates: BinaryNoiseRates, p_plus: f64, smoothing_a: f64) -> Result<Self> {
        let s = Self {
            l,
            y,
            rates,
            p_plus,
            smoothing_a,
            global_rate: GlobalRateMode::Population,
            tie_rule: None,
            n: None,
            prior: None,
        };
        s.validate()?;
        Ok(s)
    }

    /// `y = +1`, balanced classes, both flip rates `e`, smoothing 0.1.
    pub fn symmetric(l: u64, e: f64) -> Result<Self> {
        Self::new(l, BinaryLabel::Pos, BinaryNoiseRates::symmetric(e)?, 0.5, 0.1)
    }

    pub fn with_population(mut self, n: u64, prior: PriorSpec) -> Result<Self> {
        if self.l > n {
            return Err(Error::InvalidAppearance { l: self.l, n });
        }
        self.n = Some(n);
        self.prior = Some(prior);
        Ok(self)
    }

    pub fn with_global_rate(mut self, mode: GlobalRateMode) -> Self {
        self.global_rate = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_range("l", self.l as f64, self.l >= 1, ">= 1")?;
        check_range("p_plus", self.p_plus, self.p_plus > 0.0 && self.p_plus < 1.0, "(0, 1)")?;
        check_range("smoothing_a", self.smoothing_a, (0.0..=1.0).contains(&self.smoothing_a), "[0, 1]")?;
        if let GlobalRateMode::FiniteSample { n } = self.global_rate {
            check_range("n", n as f64, n >= 1, ">= 1")?;
        }
        Ok(())
    }

    pub fn p_minus(&self) -> f64 {
        1.0 - self.p_plus
    }

    /// Flip rate of the true class.
    pub fn flip_rate(&self) -> f64 {
        self.rates.flip_rate(self.y)
    }

    pub fn is_symmetric(&self) -> bool {
        self.rates.e_plus() == self.rates.e_minus() && self.p_plus == 0.5
    }

    fn tie_rule(&self) -> PeerTieRule {
        self.tie_rule.unwrap_or(PeerTieRule::LargerCleanPrior { p_plus: self.p_plus })
    }

    /// Empirical distribution when `correct` of the `l` labels equal `y`.
    fn dist_for(&self, correct: u64) -> LabelDist {
        let mut counts = [0u64; 2];
        counts[self.y.index()] = correct;
        counts[self.y.opposite().index()] = self.l - correct;
        empirical_from_counts(&counts)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Treatment {
    Memorize,
    LossCorrection,
    LabelSmoothing,
    PeerLoss,
}

impl Treatment {
    pub const ALL: [Treatment; 4] = [
        Treatment::Memorize,
        Treatment::LossCorrection,
        Treatment::LabelSmoothing,
        Treatment::PeerLoss,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Treatment::Memorize => "memorize",
            Treatment::LossCorrection => "loss_correction",
            Treatment::LabelSmoothing => "label_smoothing",
            Treatment::PeerLoss => "peer_loss",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Failure,
    Tie,
}

/// Outcome of one treatment on one realized label set, plus the memorization
/// error of the plain empirical distribution.
fn classify(s: &InstanceScenario, treatment: Treatment, dist: &LabelDist, global_rate: f64) -> Result<(Outcome, f64)> {
    let y = s.y.index();
    let err_mem = memorization_error(dist, y)?;
    let outcome = match treatment {
        Treatment::Memorize => {
            // whether the memorized output puts most mass on y
            if err_mem < 0.5 {
                Outcome::Success
            } else if err_mem > 0.5 {
                Outcome::Failure
            } else {
                Outcome::Tie
            }
        }
        Treatment::LossCorrection => {
            let c = corrected_label(dist, s.rates)?;
            let err_lc = memorization_error(&c.capped, y)?;
            if err_lc < err_mem - TIE_TOL {
                Outcome::Success
            } else if err_lc > err_mem + TIE_TOL {
                Outcome::Failure
            } else {
                // equal errors: both at the same vertex or no correction at all;
                // the raw label says which way the correction pushed
                let shift = c.raw.get(y) - dist.get(y);
                if shift > TIE_TOL {
                    Outcome::Success
                } else if shift < -TIE_TOL {
                    Outcome::Failure
                } else {
                    Outcome::Tie
                }
            }
        }
        Treatment::LabelSmoothing => match compare_ls_lc(dist, s.y, s.rates, s.smoothing_a)?.outcome {
            LsLcOutcome::LsBetter => Outcome::Success,
            LsLcOutcome::LcBetter => Outcome::Failure,
            LsLcOutcome::Tie => Outcome::Tie,
        },
        Treatment::PeerLoss => {
            let d = peer_predict(dist, global_rate, s.tie_rule())?;
            if d.tie {
                Outcome::Tie
            } else if d.predicted == s.y {
                Outcome::Success
            } else {
                Outcome::Failure
            }
        }
    };
    Ok((outcome, err_mem))
}

/// Counts of outcomes over a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialTally {
    pub trials: u64,
    pub success: u64,
    pub failure: u64,
    pub tie: u64,
    /// Success rate.
    pub estimate: f64,
    /// 95% Wilson interval for the success rate.
    pub wilson_ci: (f64, f64),
    /// Mean memorization error of the empirical distribution.
    pub mean_error: f64,
    /// Standard error of `mean_error`.
    pub mean_error_se: f64,
}

/// Events reported per treatment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Event {
    Success,
    Failure,
    Tie,
    FailureOrTie,
    SuccessOrTie,
    MeanError,
}

impl Event {
    pub fn as_str(&self) -> &'static str {
        match self {
            Event::Success => "success",
            Event::Failure => "failure",
            Event::Tie => "tie",
            Event::FailureOrTie => "failure_or_tie",
            Event::SuccessOrTie => "success_or_tie",
            Event::MeanError => "mean_error",
        }
    }
}

impl TrialTally {
    fn from_counts(trials: u64, success: u64, failure: u64, tie: u64, err_sum: f64, err_sq: f64) -> Self {
        let n = trials as f64;
        let mean_error = err_sum / n;
        let var = if trials > 1 { ((err_sq - n * mean_error * mean_error) / (n - 1.0)).max(0.0) } else { 0.0 };
        Self {
            trials,
            success,
            failure,
            tie,
            estimate: success as f64 / n,
            wilson_ci: wilson_interval(success, trials, Z_95),
            mean_error,
            mean_error_se: (var / n).sqrt(),
        }
    }

    pub fn count(&self, event: Event) -> u64 {
        match event {
            Event::Success => self.success,
            Event::Failure => self.failure,
            Event::Tie => self.tie,
            Event::FailureOrTie => self.failure + self.tie,
            Event::SuccessOrTie => self.success + self.tie,
            Event::MeanError => self.trials,
        }
    }

    pub fn rate(&self, event: Event) -> f64 {
        match event {
            Event::MeanError => self.mean_error,
            _ => self.count(event) as f64 / self.trials as f64,
        }
    }

    /// 95% interval: Wilson for event rates, normal for the mean error.
    pub fn interval(&self, event: Event) -> (f64, f64) {
        match event {
            Event::MeanError => (
                self.mean_error - Z_95 * self.mean_error_se,
                self.mean_error + Z_95 * self.mean_error_se,
            ),
            _ => wilson_interval(self.count(event), self.trials, Z_95),
        }
    }
}

/// Execution knobs that do not change results.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimOptions {
    /// Worker threads; `None` uses the global rayon pool.
    pub workers: Option<usize>,
}

#[derive(Default, Clone, Copy)]
struct Partial {
    success: u64,
    failure: u64,
    tie: u64,
    err_sum: f64,
    err_sq: f64,
}

fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

fn run_block(s: &InstanceScenario, treatment: Treatment, seed: u64, start: u64, end: u64) -> Result<Partial> {
    let t = s.rates.transition();
    let population_rate = global_noisy_positive_rate(s.p_plus, s.rates);
    let mut p = Partial::default();
    for trial in start..end {
        let mut rng = trial_rng(seed, trial);
        let labels = sample_noisy_labels(s.y.index(), s.l as usize, &t, &mut rng)?;
        let correct = labels.iter().filter(|&&k| k == s.y.index()).count() as u64;
        let dist = s.dist_for(correct);
        let global_rate = match s.global_rate {
            GlobalRateMode::Population => population_rate,
            GlobalRateMode::FiniteSample { n } => {
                let b = Binomial::new(n, population_rate).map_err(|e| Error::Pool(e.to_string()))?;
                b.sample(&mut rng) as f64 / n as f64
            }
        };
        let (outcome, err) = classify(s, treatment, &dist, global_rate)?;
        match outcome {
            Outcome::Success => p.success += 1,
            Outcome::Failure => p.failure += 1,
            Outcome::Tie => p.tie += 1,
        }
        p.err_sum += err;
        p.err_sq += err * err;
    }
    Ok(p)
}

/// Runs `trials` independent realizations of `scenario` under `treatment`.
pub fn run_trials(scenario: &InstanceScenario, treatment: Treatment, trials: u64, seed: u64) -> Result<TrialTally> {
    run_trials_with(scenario, treatment, trials, seed, SimOptions::default())
}

pub fn run_trials_with(
    scenario: &InstanceScenario,
    treatment: Treatment,
    trials: u64,
    seed: u64,
    options: SimOptions,
) -> Result<TrialTally> {
    if trials == 0 {
        return Err(Error::ZeroCount);
    }
    scenario.validate()?;
    let blocks = trials.div_ceil(BLOCK);
    let work = || -> Result<Vec<Partial>> {
        (0..blocks)
            .into_par_iter()
            .map(|b| run_block(scenario, treatment, seed, b * BLOCK, ((b + 1) * BLOCK).min(trials)))
            .collect()
    };
    let partials = match options.workers {
        None => work()?,
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| Error::Pool(e.to_string()))?
            .install(work)?,
    };
    // sequential reduction in block order keeps float sums reproducible
    let total = partials.iter().fold(Partial::default(), |a, p| Partial {
        success: a.success + p.success,
        failure: a.failure + p.failure,
        tie: a.tie + p.tie,
        err_sum: a.err_sum + p.err_sum,
        err_sq: a.err_sq + p.err_sq,
    });
    Ok(TrialTally::from_counts(trials, total.success, total.failure, total.tie, total.err_sum, total.err_sq))
}

/// Exact outcome probabilities, by enumerating the number of correct labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactOutcome {
    pub success: f64,
    pub failure: f64,
    pub tie: f64,
    pub mean_error: f64,
}

impl ExactOutcome {
    pub fn probability(&self, event: Event) -> f64 {
        match event {
            Event::Success => self.success,
            Event::Failure => self.failure,
            Event::Tie => self.tie,
            Event::FailureOrTie => self.failure + self.tie,
            Event::SuccessOrTie => self.success + self.tie,
            Event::MeanError => self.mean_error,
        }
    }
}

/// Exact probabilities of each outcome. Unavailable (`None`) when peer loss
/// samples its global rate.
pub fn exact_outcome(scenario: &InstanceScenario, treatment: Treatment) -> Result<Option<ExactOutcome>> {
    scenario.validate()?;
    if treatment == Treatment::PeerLoss && scenario.global_rate != GlobalRateMode::Population {
        return Ok(None);
    }
    let rate = global_noisy_positive_rate(scenario.p_plus, scenario.rates);
    let keep = 1.0 - scenario.flip_rate();
    let mut out = ExactOutcome { success: 0.0, failure: 0.0, tie: 0.0, mean_error: 0.0 };
    for correct in 0..=scenario.l {
        let w = binom_pmf(scenario.l, keep, correct)?;
        if w == 0.0 {
            continue;
        }
        let (o, err) = classify(scenario, treatment, &scenario.dist_for(correct), rate)?;
        match o {
            Outcome::Success => out.success += w,
            Outcome::Failure => out.failure += w,
            Outcome::Tie => out.tie += w,
        }
        out.mean_error += w * err;
    }
    Ok(Some(out))
}

/// One reported quantity for one treatment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventReport {
    pub event: Event,
    pub mc_estimate: f64,
    pub ci: (f64, f64),
    pub exact: Option<f64>,
    pub bound: Option<BoundValue>,
    /// `bound <= exact`; present only when the bound's regime holds.
    pub ordering_holds: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreatmentReport {
    pub treatment: Treatment,
    pub mc: TrialTally,
    pub exact: Option<ExactOutcome>,
    pub events: Vec<EventReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub scenario: InstanceScenario,
    pub seed: u64,
    /// `τ_l` for the attached prior and `n`, when present.
    pub tau_exact: Option<f64>,
    /// The true class is never flipped, so every bound is vacuous or trivial.
    pub degenerate: bool,
    pub treatments: Vec<TreatmentReport>,
}

impl BoundReport {
    pub fn treatment(&self, t: Treatment) -> Option<&TreatmentReport> {
        self.treatments.iter().find(|r| r.treatment == t)
    }
}

impl TreatmentReport {
    /// The first row for `event`, optionally restricted to a bound form.
    pub fn event(&self, event: Event, form: Option<BoundForm>) -> Option<&EventReport> {
        self.events
            .iter()
            .find(|e| e.event == event && form.is_none_or(|f| e.bound.map(|b| b.form) == Some(f)))
    }
}

fn event_row(tally: &TrialTally, exact: Option<&ExactOutcome>, event: Event, bound: Option<BoundValue>) -> EventReport {
    let exact_p = exact.map(|x| x.probability(event));
    let ordering_holds = match (bound, exact_p) {
        (Some(b), Some(p)) if b.regime_ok => Some(b.value <= p + ORDER_TOL),
        _ => None,
    };
    EventReport {
        event,
        mc_estimate: tally.rate(event),
        ci: tally.interval(event),
        exact: exact_p,
        bound,
        ordering_holds,
    }
}

/// Runs every treatment on `scenario`, attaches exact probabilities and the
/// applicable bounds, and checks bound-below-exact where the bound's regime
/// holds.
pub fn bound_report(scenario: &InstanceScenario, trials: u64, seed: u64) -> Result<BoundReport> {
    bound_report_with(scenario, trials, seed, SimOptions::default())
}

pub fn bound_report_with(scenario: &InstanceScenario, trials: u64, seed: u64, options: SimOptions) -> Result<BoundReport> {
    scenario.validate()?;
    let s = scenario;
    let e = s.flip_rate();
    // the loss-correction bounds describe a majority vote, which is what the
    // correction implements only when both classes flip at the same rate
    let lc_symmetric = s.rates.e_plus() == s.rates.e_minus();
    let restrict = |mut b: BoundValue, ok: bool| {
        b.regime_ok &= ok;
        b
    };
    let mut treatments = Vec::with_capacity(Treatment::ALL.len());
    for t in Treatment::ALL {
        let mc = run_trials_with(s, t, trials, seed, options)?;
        let exact = exact_outcome(s, t)?;
        let x = exact.as_ref();
        let events = match t {
            Treatment::Memorize => vec![event_row(&mc, x, Event::MeanError, None)],
            Treatment::LossCorrection => vec![
                event_row(&mc, x, Event::Success, Some(restrict(BoundValue::lc_success(s.l, e)?, lc_symmetric))),
                event_row(&mc, x, Event::FailureOrTie, Some(restrict(BoundValue::lc_failure(s.l, e)?, lc_symmetric))),
                event_row(&mc, x, Event::Failure, None),
            ],
            // smoothing wins or ties exactly when the correction is pushed away
            // from y or left in place: the tie-inclusive failure of loss correction
            Treatment::LabelSmoothing => vec![
                event_row(&mc, x, Event::Success, None),
                event_row(&mc, x, Event::SuccessOrTie, Some(restrict(BoundValue::lc_failure(s.l, e)?, lc_symmetric))),
            ],
            Treatment::PeerLoss => {
                let y_pos = s.y == BinaryLabel::Pos;
                vec![
                    event_row(
                        &mc,
                        x,
                        Event::Success,
                        Some(BoundValue::peer_success(s.l, s.p_plus, s.rates, y_pos, PeerSuccessForm::HoeffdingCorrected)?),
                    ),
                    event_row(
                        &mc,
                        x,
                        Event::Success,
                        Some(BoundValue::peer_success(s.l, s.p_plus, s.rates, y_pos, PeerSuccessForm::AsPrinted)?),
                    ),
                    event_row(&mc, x, Event::FailureOrTie, Some(BoundValue::peer_failure(s.l, s.p_plus, s.rates)?)),
                    event_row(&mc, x, Event::Failure, None),
                ]
            }
        };
        treatments.push(TreatmentReport { treatment: t, mc, exact, events });
    }
    let tau_exact = match (&s.prior, s.n) {
        (Some(prior), Some(n)) => Some(tau_exact(prior, n, s.l)?),
        _ => None,
    };
    Ok(BoundReport {
        scenario: s.clone(),
        seed,
        tau_exact,
        degenerate: e == 0.0,
        treatments,
    })
}

/// Bound reports for every scenario, scenario `i` seeded with
/// `derive_seed(seed, i)`.
pub fn sweep(scenarios: &[InstanceScenario], trials: u64, seed: u64) -> Result<Vec<BoundReport>> {
    sweep_with(scenarios, trials, seed, SimOptions::default())
}

pub fn sweep_with(scenarios: &[InstanceScenario], trials: u64, seed: u64, options: SimOptions) -> Result<Vec<BoundReport>> {
    if scenarios.is_empty() {
        return Err(Error::NoScenarios);
    }
    scenarios
        .iter()
        .enumerate()
        .map(|(i, s)| bound_report_with(s, trials, derive_seed(seed, i as u64), options))
        .collect()
}

/// The standard grid: `l ∈ {2, 4, 10, 20, 50}`, `e ∈ {0.1, 0.2, 0.3}`, symmetric.
pub fn default_grid() -> Vec<InstanceScenario> {
    let mut out = Vec::new();
    for l in [2, 4, 10, 20, 50] {
        for e in [0.1, 0.2, 0.3] {
            out.push(InstanceScenario::symmetric(l, e).expect("grid values are valid"));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::binom_tail;

    fn binomial_se(p: f64, n: u64) -> f64 {
        (p * (1.0 - p) / n as f64).sqrt()
    }

    #[test]
    fn zero_noise_is_all_ties_for_correction() {
        let s = InstanceScenario::new(10, BinaryLabel::Pos, BinaryNoiseRates::new(0.0, 0.0).unwrap(), 0.5, 0.1).unwrap();
        let t = run_trials(&s, Treatment::LossCorrection, 1000, 1).unwrap();
        assert_eq!(t.tie, 1000);
        assert_eq!(t.mean_error, 0.0);
    }

    #[test]
    fn counts_add_up() {
        let s = InstanceScenario::symmetric(5, 0.3).unwrap();
        for tr in Treatment::ALL {
            let t = run_trials(&s, tr, 9999, 3).unwrap();
            assert_eq!(t.success + t.failure + t.tie, t.trials);
        }
        assert_eq!(run_trials(&s, Treatment::PeerLoss, 0, 3), Err(Error::ZeroCount));
    }

    #[test]
    fn exact_matches_binomial_tails() {
        let s = InstanceScenario::symmetric(10, 0.2).unwrap();
        let lc = exact_outcome(&s, Treatment::LossCorrection).unwrap().unwrap();
        assert!((lc.success - binom_tail(10, 0.8, 6).unwrap()).abs() < 1e-14);
        assert!((lc.failure - binom_tail(10, 0.2, 6).unwrap()).abs() < 1e-14);
        assert!((lc.failure + lc.tie - binom_tail(10, 0.2, 5).unwrap()).abs() < 1e-14);
        assert!((lc.success - 0.9672065).abs() < 1e-7);
        let peer = exact_outcome(&s, Treatment::PeerLoss).unwrap().unwrap();
        assert!((peer.failure - 0.0063694).abs() < 1e-7);
        let mem = exact_outcome(&s, Treatment::Memorize).unwrap().unwrap();
        assert!((mem.mean_error - 0.2).abs() < 1e-14);
    }

    #[test]
    fn mc_agrees_with_exact() {
        let s = InstanceScenario::symmetric(10, 0.2).unwrap();
        let n = 20_000;
        for tr in Treatment::ALL {
            let t = run_trials(&s, tr, n, 11).unwrap();
            let x = exact_outcome(&s, tr).unwrap().unwrap();
            for ev in [Event::Success, Event::Failure, Event::Tie] {
                let p = x.probability(ev);
                assert!((t.rate(ev) - p).abs() <= 4.0 * binomial_se(p, n) + 1e-12, "{tr:?} {ev:?}");
            }
        }
    }

    #[test]
    fn deterministic_across_worker_counts() {
        let s = InstanceScenario::symmetric(7, 0.25).unwrap();
        let a = run_trials_with(&s, Treatment::PeerLoss, 10_000, 5, SimOptions { workers: Some(1) }).unwrap();
        let b = run_trials_with(&s, Treatment::PeerLoss, 10_000, 5, SimOptions { workers: Some(4) }).unwrap();
        let c = run_trials(&s, Treatment::PeerLoss, 10_000, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
        assert_ne!(a, run_trials(&s, Treatment::PeerLoss, 10_000, 6).unwrap());
    }

    #[test]
    fn label_smoothing_matches_pointwise_comparison() {
        let s = InstanceScenario::symmetric(6, 0.3).unwrap();
        let t = s.rates.transition();
        let tally = run_trials(&s, Treatment::LabelSmoothing, 500, 2).unwrap();
        let mut counts = [0u64; 3];
        for trial in 0..500 {
            let mut rng = trial_rng(2, trial);
            let labels = sample_noisy_labels(1, 6, &t, &mut rng).unwrap();
            let dist = crate::memorize::empirical_distribution(&labels, 2).unwrap();
            match compare_ls_lc(&dist, s.y, s.rates, s.smoothing_a).unwrap().outcome {
                LsLcOutcome::LsBetter => counts[0] += 1,
                LsLcOutcome::LcBetter => counts[1] += 1,
                LsLcOutcome::Tie => counts[2] += 1,
            }
        }
        assert_eq!([tally.success, tally.failure, tally.tie], counts);
    }

    #[test]
    fn report_orderings_at_anchor() {
        let r = bound_report(&InstanceScenario::symmetric(10, 0.2).unwrap(), 5000, 9).unwrap();
        let lc = r.treatment(Treatment::LossCorrection).unwrap();
        let success = lc.event(Event::Success, None).unwrap();
        assert_eq!(success.ordering_holds, Some(true));
        assert!((success.bound.unwrap().value - 0.8347011).abs() < 1e-7);
        let fail = lc.event(Event::FailureOrTie, None).unwrap();
        assert_eq!(fail.ordering_holds, Some(true));
        assert!((fail.exact.unwrap() - 0.0327935).abs() < 1e-7);
        assert!((fail.bound.unwrap().value - 0.0240096).abs() < 1e-7);
        assert_eq!(lc.event(Event::Failure, None).unwrap().ordering_holds, None);
        let peer = r.treatment(Treatment::PeerLoss).unwrap();
        assert_eq!(peer.event(Event::Success, Some(BoundForm::HoeffdingCorrected)).unwrap().ordering_holds, Some(true));
        assert_eq!(peer.event(Event::Success, Some(BoundForm::AsPrinted)).unwrap().ordering_holds, None);
        assert_eq!(peer.event(Event::FailureOrTie, None).unwrap().ordering_holds, Some(true));
        assert!(!r.degenerate);
    }

    #[test]
    fn odd_l_failure_not_asserted() {
        let r = bound_report(&InstanceScenario::symmetric(3, 0.2).unwrap(), 1000, 9).unwrap();
        let fail = r.treatment(Treatment::LossCorrection).unwrap().event(Event::FailureOrTie, None).unwrap();
        assert!(!fail.bound.unwrap().regime_ok);
        assert_eq!(fail.ordering_holds, None);
    }

    #[test]
    fn zero_noise_report_is_degenerate() {
        let s = InstanceScenario::symmetric(4, 0.0).unwrap();
        let r = bound_report(&s, 100, 1).unwrap();
        assert!(r.degenerate);
    }

    #[test]
    fn tau_reported_with_population() {
        let s = InstanceScenario::symmetric(10, 0.2)
            .unwrap()
            .with_population(10_000, PriorSpec::uniform(1000).unwrap())
            .unwrap();
        let r = bound_report(&s, 100, 1).unwrap();
        assert_eq!(r.tau_exact, Some(0.001));
    }

    #[test]
    fn finite_sample_peer_mode_runs_without_oracle() {
        let s = InstanceScenario::symmetric(10, 0.2)
            .unwrap()
            .with_global_rate(GlobalRateMode::FiniteSample { n: 1000 });
        assert_eq!(exact_outcome(&s, Treatment::PeerLoss).unwrap(), None);
        let t = run_trials(&s, Treatment::PeerLoss, 2000, 4).unwrap();
        assert_eq!(t.success + t.failure + t.tie, 2000);
        // a sampled rate almost never equals 1/2 exactly, so ties at k=5 mostly resolve
        assert!(t.tie < 200);
    }

    #[test]
    fn sweep_shape_and_monotone_failure() {
        let grid = default_grid();
        assert_eq!(grid.len(), 15);
        let reports = sweep(&grid, 2000, 42).unwrap();
        let rows: usize = reports.iter().map(|r| r.treatments.len()).sum();
        assert_eq!(rows, 60);
        for e in [0.1, 0.2, 0.3] {
            let fails: Vec<f64> = reports
                .iter()
                .filter(|r| r.scenario.flip_rate() == e)
                .map(|r| r.treatment(Treatment::LossCorrection).unwrap().exact.unwrap().failure)
                .collect();
            assert!(fails.windows(2).all(|w| w[1] < w[0]), "e={e}: {fails:?}");
        }
        assert_eq!(sweep(&[], 10, 1), Err(Error::NoScenarios));
    }
}
