//! Instance-frequency priors and the importance weight of l-appearance instances.
//!
//! Every instance slot draws a raw frequency `p_x` uniformly from the prior's
//! value set; the realized frequency is `D(x) = p_x / Σ p_x`. The importance
//! weight of an instance seen `l` times in `n` samples is
//!
//! ```text
//! tau_l = E[a^(l+1) (1-a)^(n-l)] / E[a^l (1-a)^(n-l)]
//! ```
//!
//! [`tau_exact`] evaluates the expectation against the raw prior values (the
//! form the lower-bound algebra works with); [`tau_monte_carlo`] evaluates it
//! against the normalized `D(x)` by simulation. The two agree as `N` grows.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{log_sum_exp, mean_and_std_error};

/// Largest prior value under which the tau lower bounds are stated.
pub const BOUND_PI_MAX: f64 = 1.0 / 20.0;

/// Smallest `n` treated as "sufficiently large" when asserting the tau bounds.
pub const REGIME_MIN_SAMPLES: u64 = 1_000;
/// Smallest prior size treated as "sufficiently large".
pub const REGIME_MIN_SLOTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PriorGenerator {
    Explicit,
    Uniform,
    /// Harmonic weights `j^-exponent`; with `cap`, the head is clipped at
    /// `cap` and the tail rescaled so the values still sum to one.
    Zipf { exponent: f64, cap: Option<f64> },
}

/// How to build a prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PriorInput {
    Explicit { values: Vec<f64> },
    Uniform { slots: usize },
    Zipf {
        slots: usize,
        exponent: f64,
        #[serde(default)]
        cap: Option<f64>,
    },
}

/// A normalized frequency prior `π = {π_1, .., π_N}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    values: Vec<f64>,
    generator: PriorGenerator,
    pi_max: f64,
}

impl PriorSpec {
    pub fn explicit(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyPrior);
        }
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v > 0.0))
        {
            return Err(Error::NonPositivePrior { index, value });
        }
        Ok(Self::from_weights(values, PriorGenerator::Explicit))
    }

    pub fn uniform(slots: usize) -> Result<Self> {
        if slots == 0 {
            return Err(Error::EmptyPrior);
        }
        let v = 1.0 / slots as f64;
        Ok(Self {
            values: vec![v; slots],
            generator: PriorGenerator::Uniform,
            pi_max: v,
        })
    }

    pub fn zipf(slots: usize, exponent: f64) -> Result<Self> {
        Self::zipf_capped(slots, exponent, None)
    }

    /// Zipf prior whose largest value is clipped at `cap`.
    ///
    /// The capped head entries all equal `cap`; the remaining entries keep
    /// their harmonic shape and are rescaled to absorb the leftover mass.
    pub fn zipf_capped(slots: usize, exponent: f64, cap: Option<f64>) -> Result<Self> {
        if slots == 0 {
            return Err(Error::EmptyPrior);
        }
        if !(exponent.is_finite() && exponent > 0.0) {
            return Err(Error::InvalidExponent(exponent));
        }
        let weights: Vec<f64> = (1..=slots).map(|j| (j as f64).powf(-exponent)).collect();
        let Some(cap) = cap else {
            return Ok(Self::from_weights(
                weights,
                PriorGenerator::Zipf {
                    exponent,
                    cap: None,
                },
            ));
        };
        if !(cap.is_finite() && cap > 0.0 && cap * slots as f64 >= 1.0 - 1e-12) {
            return Err(Error::InfeasibleCap { cap, slots });
        }
        // suffix[k] = Σ_{j >= k} w_j
        let mut suffix = vec![0.0; slots + 1];
        for k in (0..slots).rev() {
            suffix[k] = suffix[k + 1] + weights[k];
        }
        let mut values = vec![1.0 / slots as f64; slots];
        for head in 0..slots {
            let scale = (1.0 - head as f64 * cap) / suffix[head];
            if scale * weights[head] <= cap {
                for (j, v) in values.iter_mut().enumerate() {
                    *v = if j < head { cap } else { scale * weights[j] };
                }
                break;
            }
        }
        let pi_max = values.iter().copied().fold(0.0, f64::max);
        Ok(Self {
            values,
            generator: PriorGenerator::Zipf {
                exponent,
                cap: Some(cap),
            },
            pi_max,
        })
    }

    fn from_weights(weights: Vec<f64>, generator: PriorGenerator) -> Self {
        let total: f64 = weights.iter().sum();
        let values: Vec<f64> = weights.into_iter().map(|w| w / total).collect();
        let pi_max = values.iter().copied().fold(0.0, f64::max);
        Self {
            values,
            generator,
            pi_max,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn generator(&self) -> PriorGenerator {
        self.generator
    }

    /// Number of instance slots `N`.
    pub fn slots(&self) -> usize {
        self.values.len()
    }

    pub fn pi_max(&self) -> f64 {
        self.pi_max
    }

    /// Whether `pi_max <= 1/20`, the precondition of the tau lower bounds.
    pub fn meets_bound_precondition(&self) -> bool {
        self.pi_max <= BOUND_PI_MAX * (1.0 + 1e-12)
    }

    /// Draws the raw `p_x` of every slot into `buf`, returning their sum.
    fn draw_raw_into<R: Rng + ?Sized>(&self, rng: &mut R, buf: &mut Vec<f64>) -> f64 {
        let n = self.values.len();
        buf.clear();
        buf.extend((0..n).map(|_| self.values[rng.random_range(0..n)]));
        buf.iter().sum()
    }
}

/// Builds a normalized prior from its description.
pub fn build_prior(input: &PriorInput) -> Result<PriorSpec> {
    match input {
        PriorInput::Explicit { values } => PriorSpec::explicit(values.clone()),
        PriorInput::Uniform { slots } => PriorSpec::uniform(*slots),
        PriorInput::Zipf {
            slots,
            exponent,
            cap,
        } => PriorSpec::zipf_capped(*slots, *exponent, *cap),
    }
}

/// One realization of the instance distribution `D`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencySample {
    pub d: Vec<f64>,
}

impl FrequencySample {
    /// Normalizes already-realized raw draws `p_x`.
    pub fn from_draws(draws: &[f64]) -> Self {
        let total: f64 = draws.iter().sum();
        Self {
            d: draws.iter().map(|p| p / total).collect(),
        }
    }
}

pub fn sample_frequencies<R: Rng + ?Sized>(prior: &PriorSpec, rng: &mut R) -> FrequencySample {
    let mut buf = Vec::with_capacity(prior.slots());
    prior.draw_raw_into(rng, &mut buf);
    FrequencySample::from_draws(&buf)
}

/// Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub replicates: usize,
}

fn check_interval(lo: f64, hi: f64) -> Result<()> {
    if lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi && hi <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidInterval { lo, hi })
    }
}

/// Estimates `weight(π, [lo, hi])`, the expected mass of `D` carried by
/// instances whose realized frequency lies in `[lo, hi]`.
pub fn weight_estimate<R: Rng + ?Sized>(
    prior: &PriorSpec,
    interval: (f64, f64),
    replicates: usize,
    rng: &mut R,
) -> Result<McEstimate> {
    Ok(weight_estimates(prior, &[interval], replicates, rng)?[0])
}

/// Like [`weight_estimate`], for several intervals sharing the same draws.
pub fn weight_estimates<R: Rng + ?Sized>(
    prior: &PriorSpec,
    intervals: &[(f64, f64)],
    replicates: usize,
    rng: &mut R,
) -> Result<Vec<McEstimate>> {
    for &(lo, hi) in intervals {
        check_interval(lo, hi)?;
    }
    if replicates == 0 {
        return Err(Error::ZeroCount);
    }
    let mut per_interval = vec![Vec::with_capacity(replicates); intervals.len()];
    let mut buf = Vec::with_capacity(prior.slots());
    for _ in 0..replicates {
        let total = prior.draw_raw_into(rng, &mut buf);
        for (samples, &(lo, hi)) in per_interval.iter_mut().zip(intervals) {
            // Summing inside mass in draw order keeps the full interval exactly 1.
            let inside: f64 = buf
                .iter()
                .filter(|&&p| {
                    let d = p / total;
                    lo <= d && d <= hi
                })
                .sum();
            samples.push(inside / total);
        }
    }
    Ok(per_interval
        .iter()
        .map(|s| {
            let (value, std_error) = mean_and_std_error(s);
            McEstimate {
                value,
                std_error,
                replicates,
            }
        })
        .collect())
}

fn check_appearance(n: u64, l: u64) -> Result<()> {
    if l >= 1 && l <= n {
        Ok(())
    } else {
        Err(Error::InvalidAppearance { l, n })
    }
}

/// `l ln a + (n-l) ln(1-a)` with the convention `0 · ln 0 = 0`.
#[inline]
fn log_mass(ln_a: f64, ln_1ma: f64, n: u64, l: u64) -> f64 {
    let tail = if n == l { 0.0 } else { (n - l) as f64 * ln_1ma };
    l as f64 * ln_a + tail
}

/// Closed-form `tau_l`, expectation taken uniformly over the raw prior values.
///
/// Evaluated as a log-weighted mean of the prior values, shifted to the
/// value carrying the largest weight, so `n` in the millions does not
/// underflow and a point-mass prior returns its mass point exactly.
pub fn tau_exact(prior: &PriorSpec, n: u64, l: u64) -> Result<f64> {
    tau_exact_values(&prior.values, n, l)
}

/// [`tau_exact`] over an arbitrary (not necessarily normalized) value set.
pub fn tau_exact_values(values: &[f64], n: u64, l: u64) -> Result<f64> {
    check_appearance(n, l)?;
    if values.is_empty() {
        return Err(Error::EmptyPrior);
    }
    if let Some((index, &value)) = values
        .iter()
        .enumerate()
        .find(|(_, v)| !(v.is_finite() && **v > 0.0 && **v <= 1.0))
    {
        return Err(Error::NonPositivePrior { index, value });
    }
    let log_w: Vec<f64> = values
        .iter()
        .map(|&a| log_mass(a.ln(), (-a).ln_1p(), n, l))
        .collect();
    let (argmax, &max) = log_w
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("prior is non-empty");
    if max == f64::NEG_INFINITY {
        return Err(Error::DegeneratePrior);
    }
    let anchor = values[argmax];
    let mut num = 0.0;
    let mut den = 0.0;
    for (&a, &lw) in values.iter().zip(&log_w) {
        let w = (lw - max).exp();
        num += w * (a - anchor);
        den += w;
    }
    Ok(anchor + num / den)
}

/// `tau_l` estimated against the normalized frequencies `D(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauMc {
    pub l: u64,
    pub value: f64,
    pub std_error: f64,
}

/// Monte-Carlo `tau_l` over the full generative process, for several `l`
/// at once. Each replicate contributes the slot-averaged numerator and
/// denominator; the ratio's standard error comes from the delta method.
pub fn tau_monte_carlo<R: Rng + ?Sized>(
    prior: &PriorSpec,
    n: u64,
    ls: &[u64],
    replicates: usize,
    rng: &mut R,
) -> Result<Vec<TauMc>> {
    for &l in ls {
        check_appearance(n, l)?;
    }
    if replicates == 0 {
        return Err(Error::ZeroCount);
    }
    let slots = prior.slots();
    let mut log_num = vec![Vec::with_capacity(replicates); ls.len()];
    let mut log_den = vec![Vec::with_capacity(replicates); ls.len()];
    let mut buf = Vec::with_capacity(slots);
    let mut ln_d = vec![0.0; slots];
    let mut ln_1md = vec![0.0; slots];
    let mut terms = vec![0.0; slots];
    for _ in 0..replicates {
        let total = prior.draw_raw_into(rng, &mut buf);
        for (x, &p) in buf.iter().enumerate() {
            let d = p / total;
            ln_d[x] = d.ln();
            ln_1md[x] = (-d).ln_1p();
        }
        for (i, &l) in ls.iter().enumerate() {
            for x in 0..slots {
                terms[x] = log_mass(ln_d[x], ln_1md[x], n, l);
            }
            log_den[i].push(log_sum_exp(&terms));
            for x in 0..slots {
                terms[x] += ln_d[x];
            }
            log_num[i].push(log_sum_exp(&terms));
        }
    }
    ls.iter()
        .enumerate()
        .map(|(i, &l)| ratio_estimate(&log_num[i], &log_den[i]).map(|(value, std_error)| TauMc { l, value, std_error }))
        .collect()
}

/// Ratio-of-means estimate `Σ exp(a_i) / Σ exp(b_i)` from log-scale samples.
fn ratio_estimate(log_a: &[f64], log_b: &[f64]) -> Result<(f64, f64)> {
    let ma = log_a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mb = log_b.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if mb == f64::NEG_INFINITY || ma == f64::NEG_INFINITY {
        return Err(Error::DegeneratePrior);
    }
    let a: Vec<f64> = log_a.iter().map(|v| (v - ma).exp()).collect();
    let b: Vec<f64> = log_b.iter().map(|v| (v - mb).exp()).collect();
    let r = a.len() as f64;
    let a_bar = a.iter().sum::<f64>() / r;
    let b_bar = b.iter().sum::<f64>() / r;
    let ratio = a_bar / b_bar;
    let scale = (ma - mb).exp();
    let se = if a.len() > 1 {
        let ss: f64 = a
            .iter()
            .zip(&b)
            .map(|(ai, bi)| (ai - ratio * bi).powi(2))
            .sum();
        (ss / (r * (r - 1.0))).sqrt() / b_bar
    } else {
        0.0
    };
    Ok((ratio * scale, se * scale))
}

/// Frequency interval whose weight enters [`tau_lower_large`].
pub fn large_bound_interval(n: u64, l: u64) -> (f64, f64) {
    let (n, l) = (n as f64, l as f64);
    (2.0 / 3.0 * (l - 1.0) / (n - 1.0), 4.0 / 3.0 * l / n)
}

/// Frequency interval whose weight enters [`tau_lower_small`].
pub fn small_bound_interval(n: u64, l: u64) -> (f64, f64) {
    let ratio = (l as f64 - 1.0) / (n as f64 - 1.0);
    (0.7 * ratio, 4.0 / 3.0 * ratio)
}

/// Lower bound on `tau_l` suited to large `l`:
/// `0.4 · l(l-1)/(n(n-1)) · weight`.
pub fn tau_lower_large(n: u64, l: u64, weight_value: f64) -> f64 {
    if l <= 1 || n <= 1 {
        return 0.0;
    }
    let (n, l) = (n as f64, l as f64);
    0.4 * (l * (l - 1.0)) / (n * (n - 1.0)) * weight_value
}

/// Lower bound on `tau_l` suited to small `l`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmallTauBound {
    pub value: f64,
    /// `l = 1`: the bound is identically zero.
    pub vacuous: bool,
    /// Interval whose weight the caller should supply.
    pub interval: (f64, f64),
}

/// `0.4 · (l-1)/(n-1) · 1.1^-l · weight`.
pub fn tau_lower_small(n: u64, l: u64, weight_value: f64) -> SmallTauBound {
    let interval = small_bound_interval(n, l);
    if l <= 1 || n <= 1 {
        return SmallTauBound {
            value: 0.0,
            vacuous: true,
            interval,
        };
    }
    let ratio = (l as f64 - 1.0) / (n as f64 - 1.0);
    SmallTauBound {
        value: 0.4 * ratio * 1.1f64.powi(-(l as i32)) * weight_value,
        vacuous: false,
        interval,
    }
}

/// Whether `(prior, n, l)` lies in the regime where the large-`l` bound is
/// asserted: `n >= 1000`, `N >= 100`, `l <= n/10` and `pi_max <= 1/20`.
pub fn large_regime_ok(prior: &PriorSpec, n: u64, l: u64) -> bool {
    n >= REGIME_MIN_SAMPLES
        && prior.slots() >= REGIME_MIN_SLOTS
        && l >= 1
        && l * 10 <= n
        && prior.meets_bound_precondition()
}

/// Everything known about `tau_l` for one `(n, l)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauEstimate {
    pub l: u64,
    pub n: u64,
    pub exact: f64,
    pub mc: Option<TauMc>,
    pub weight_large: McEstimate,
    pub lower_large: f64,
    pub weight_small: McEstimate,
    pub lower_small: f64,
    pub small_vacuous: bool,
    pub regime_ok: bool,
}

/// Exact `tau_l`, its Monte-Carlo counterpart (when `replicates > 0`), and
/// both lower bounds with their weights estimated from `weight_replicates`
/// draws.
pub fn estimate_tau<R: Rng + ?Sized>(
    prior: &PriorSpec,
    n: u64,
    ls: &[u64],
    replicates: usize,
    weight_replicates: usize,
    rng: &mut R,
) -> Result<Vec<TauEstimate>> {
    let mc = if replicates > 0 {
        Some(tau_monte_carlo(prior, n, ls, replicates, rng)?)
    } else {
        None
    };
    let mut intervals = Vec::with_capacity(2 * ls.len());
    for &l in ls {
        let (lo, hi) = large_bound_interval(n, l);
        intervals.push((lo.max(0.0), hi.min(1.0)));
        let (lo, hi) = small_bound_interval(n, l);
        intervals.push((lo.max(0.0), hi.min(1.0)));
    }
    let weights = weight_estimates(prior, &intervals, weight_replicates, rng)?;
    ls.iter()
        .enumerate()
        .map(|(i, &l)| {
            let weight_large = weights[2 * i];
            let weight_small = weights[2 * i + 1];
            let small = tau_lower_small(n, l, weight_small.value);
            Ok(TauEstimate {
                l,
                n,
                exact: tau_exact(prior, n, l)?,
                mc: mc.as_ref().map(|m| m[i]),
                weight_large,
                lower_large: tau_lower_large(n, l, weight_large.value),
                weight_small,
                lower_small: small.value,
                small_vacuous: small.vacuous,
                regime_ok: large_regime_ok(prior, n, l),
            })
        })
        .collect()
}
