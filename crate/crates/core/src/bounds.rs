//! Closed-form probability bounds for the treatments and the exact binomial
//! quantities they are checked against. Natural logarithms throughout.

use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_binomial;

use crate::error::{check_range, Error, Result};
use crate::noise::BinaryNoiseRates;
use crate::numeric::log_sum_exp;

/// `KL(Ber(a) ‖ Ber(b))` with `0·ln 0 = 0`.
pub fn bernoulli_kl(a: f64, b: f64) -> Result<f64> {
    check_range("a", a, (0.0..=1.0).contains(&a), "[0, 1]")?;
    check_range("b", b, (0.0..=1.0).contains(&b), "[0, 1]")?;
    if a == b {
        return Ok(0.0);
    }
    let term = |x: f64, y: f64| -> Result<f64> {
        if x == 0.0 {
            Ok(0.0)
        } else if y == 0.0 {
            Err(Error::InfiniteDivergence { a, b })
        } else {
            Ok(x * (x / y).ln())
        }
    };
    Ok((term(a, b)? + term(1.0 - a, 1.0 - b)?).max(0.0))
}

fn check_p(p: f64) -> Result<()> {
    check_range("p", p, (0.0..=1.0).contains(&p), "[0, 1]")
}

/// `P[Bin(l, p) = k]`
pub fn binom_pmf(l: u64, p: f64, k: u64) -> Result<f64> {
    check_p(p)?;
    if k > l {
        return Ok(0.0);
    }
    Ok(log_pmf(l, p, k).exp())
}

fn log_pmf(l: u64, p: f64, k: u64) -> f64 {
    let (kf, rest) = (k as f64, (l - k) as f64);
    let log_p = if k == 0 { 0.0 } else { kf * p.ln() };
    let log_q = if k == l { 0.0 } else { rest * (1.0 - p).ln() };
    ln_binomial(l, k) + log_p + log_q
}

/// Nats below the reference term at which a walk over the pmf stops.
const WALK_CUTOFF: f64 = 50.0;

/// Exact `P[Bin(l, p) >= k]`.
///
/// Log-pmf values are built by the ratio recurrence outward from the mode,
/// relative to the mode, and the tail is divided by the mass of the whole
/// walked window. That avoids anchoring on an absolute `ln C(l, k)`, which
/// loses digits for large `l`.
pub fn binom_tail(l: u64, p: f64, k: u64) -> Result<f64> {
    check_p(p)?;
    if k > l {
        return Err(Error::ThresholdTooLarge { k, l });
    }
    if k == 0 || p == 1.0 {
        return Ok(1.0);
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    let odds = (p / (1.0 - p)).ln();
    let mode = (((l + 1) as f64 * p).floor() as u64).min(l);
    let mut all = vec![0.0];
    let mut tail = if mode >= k { vec![0.0] } else { Vec::new() };

    // downward: ln t(j-1) - ln t(j) = ln(j / (l-j+1)) - ln(p/(1-p))
    let mut r = 0.0;
    let mut j = mode;
    while j > 0 && r > -WALK_CUTOFF {
        r += (j as f64 / (l - j + 1) as f64).ln() - odds;
        j -= 1;
        all.push(r);
        if j >= k {
            tail.push(r);
        }
    }

    // upward, continuing until past k and negligible next to the largest tail term
    let mut r = 0.0;
    let mut j = mode;
    let mut tail_ref = if mode >= k { 0.0 } else { f64::NEG_INFINITY };
    while j < l && (j < k || r > tail_ref - WALK_CUTOFF) {
        r += ((l - j) as f64 / (j + 1) as f64).ln() + odds;
        j += 1;
        all.push(r);
        if j >= k {
            tail_ref = tail_ref.max(r);
            tail.push(r);
        }
    }
    Ok((log_sum_exp(&tail) - log_sum_exp(&all)).exp().min(1.0))
}

/// `1 - exp(-2l(1/2 - e)²)` for `e < 1/2`, and 0 otherwise.
pub fn lc_success_lower(l: u64, e: f64) -> Result<f64> {
    check_range("e", e, (0.0..=1.0).contains(&e), "[0, 1]")?;
    if e >= 0.5 {
        return Ok(0.0);
    }
    Ok(-(-2.0 * l as f64 * (0.5 - e).powi(2)).exp_m1())
}

/// Smallest `l >= 1` with `l >= ln(1/δ) / (2(1/2 - e)²)`.
pub fn min_l_for_delta(delta: f64, e: f64) -> Result<u64> {
    check_range("delta", delta, delta > 0.0 && delta <= 1.0, "(0, 1]")?;
    check_range("e", e, (0.0..0.5).contains(&e), "[0, 0.5)")?;
    let need = (1.0 / delta).ln() / (2.0 * (0.5 - e).powi(2));
    Ok((need.ceil() as u64).max(1))
}

/// `(1/√(2l))·exp(-l·KL(1/2 ‖ e))`
pub fn lc_failure_lower(l: u64, e: f64) -> Result<f64> {
    check_range("l", l as f64, l >= 1, ">= 1")?;
    check_range("e", e, (0.0..=1.0).contains(&e), "[0, 1]")?;
    if e == 0.0 || e == 1.0 {
        return Ok(0.0);
    }
    let kl = bernoulli_kl(0.5, e)?;
    Ok((-(l as f64) * kl).exp() / (2.0 * l as f64).sqrt())
}

/// Largest `l` for which the failure lower bound still reaches `δ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureHorizon {
    Bounded(u64),
    /// `KL(1/2 ‖ e) = 0`: every `l` qualifies.
    Unbounded,
}

/// `⌊ln(1/(√2 δ)) / KL(1/2 ‖ e)⌋`. Errors when that is below 1.
pub fn max_l_for_failure(delta: f64, e: f64) -> Result<FailureHorizon> {
    let limit = std::f64::consts::FRAC_1_SQRT_2;
    check_range("delta", delta, delta > 0.0 && delta < limit, "(0, 1/√2)")?;
    check_range("e", e, e > 0.0 && e < 1.0, "(0, 1)")?;
    let kl = bernoulli_kl(0.5, e)?;
    if kl == 0.0 {
        return Ok(FailureHorizon::Unbounded);
    }
    let num = (1.0 / (std::f64::consts::SQRT_2 * delta)).ln();
    let horizon = (num / kl).floor();
    // no l >= 1 reaches delta
    check_range("delta", delta, horizon >= 1.0, "small enough that some l >= 1 qualifies")?;
    Ok(FailureHorizon::Bounded(horizon as u64))
}

/// Which exponent to use for the peer-loss success bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeerSuccessForm {
    /// Hoeffding with deviation `p_opp(1-e₊-e₋)`: `1 - exp(-2l·dev²)`.
    HoeffdingCorrected,
    /// Deviation in the denominator: `1 - exp(-2l/dev²)`. Reported only.
    AsPrinted,
}

impl PeerSuccessForm {
    pub fn as_str(&self) -> &'static str {
        match self {
            PeerSuccessForm::HoeffdingCorrected => "hoeffding_corrected",
            PeerSuccessForm::AsPrinted => "as_printed",
        }
    }
}

/// Lower bound on the probability that peer loss drives a memorized
/// instance to its true label. `p_opposite` is the clean prior of the other
/// class.
pub fn peer_success_lower(l: u64, p_opposite: f64, e_plus: f64, e_minus: f64, form: PeerSuccessForm) -> Result<f64> {
    check_range("p_opposite", p_opposite, p_opposite > 0.0 && p_opposite < 1.0, "(0, 1)")?;
    let rates = BinaryNoiseRates::new(e_plus, e_minus)?;
    if l == 0 {
        return Ok(0.0);
    }
    let dev = p_opposite * rates.determinant();
    let l = l as f64;
    let exponent = match form {
        PeerSuccessForm::HoeffdingCorrected => -2.0 * l * dev * dev,
        PeerSuccessForm::AsPrinted => -2.0 * l / (dev * dev),
    };
    Ok(-exponent.exp_m1())
}

/// Peer-loss failure lower bound; same shape as [`lc_failure_lower`] and
/// meaningful only for symmetric priors and rates.
pub fn peer_failure_lower(l: u64, e: f64) -> Result<f64> {
    lc_failure_lower(l, e)
}

/// `tau_lower · err_term`
pub fn improvement_bound(tau_lower: f64, err_term: f64) -> Result<f64> {
    check_range("tau_lower", tau_lower, tau_lower >= 0.0, ">= 0")?;
    check_range("err_term", err_term, err_term >= 0.0, ">= 0")?;
    Ok(tau_lower * err_term)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    HoeffdingSuccess,
    BinomialFailureLower,
    PeerSuccess,
    PeerFailureLower,
    Impact,
    Improvement,
}

impl BoundKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            BoundKind::HoeffdingSuccess => "hoeffding_success",
            BoundKind::BinomialFailureLower => "binomial_failure_lower",
            BoundKind::PeerSuccess => "peer_success",
            BoundKind::PeerFailureLower => "peer_failure_lower",
            BoundKind::Impact => "impact",
            BoundKind::Improvement => "improvement",
        }
    }

    pub fn is_probability(&self) -> bool {
        !matches!(self, BoundKind::Impact | BoundKind::Improvement)
    }
}

/// The closed form a bound value was computed with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundForm {
    Hoeffding,
    BinomialTailLower,
    HoeffdingCorrected,
    AsPrinted,
}

impl BoundForm {
    pub fn as_str(&self) -> &'static str {
        match self {
            BoundForm::Hoeffding => "hoeffding",
            BoundForm::BinomialTailLower => "binomial_tail_lower",
            BoundForm::HoeffdingCorrected => "hoeffding_corrected",
            BoundForm::AsPrinted => "as_printed",
        }
    }
}

impl From<PeerSuccessForm> for BoundForm {
    fn from(f: PeerSuccessForm) -> Self {
        match f {
            PeerSuccessForm::HoeffdingCorrected => BoundForm::HoeffdingCorrected,
            PeerSuccessForm::AsPrinted => BoundForm::AsPrinted,
        }
    }
}

/// Inputs a bound was evaluated at.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub l: u64,
    pub e_plus: f64,
    pub e_minus: f64,
    pub p_plus: Option<f64>,
    pub delta: Option<f64>,
}

/// A bound together with whether its preconditions hold, i.e. whether it is
/// expected to sit below the exact probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundValue {
    pub kind: BoundKind,
    pub form: BoundForm,
    pub value: f64,
    pub params: BoundParams,
    pub regime_ok: bool,
}

impl BoundValue {
    /// Success bound for memorizing the corrected label, `e` being the flip
    /// rate of the true class.
    pub fn lc_success(l: u64, e: f64) -> Result<Self> {
        Ok(Self {
            kind: BoundKind::HoeffdingSuccess,
            form: BoundForm::Hoeffding,
            value: lc_success_lower(l, e)?,
            params: BoundParams { l, e_plus: e, e_minus: e, ..Default::default() },
            regime_ok: l >= 1 && e < 0.5,
        })
    }

    /// Failure bound, asserted against the tie-inclusive event and only at
    /// even `l` where the threshold `l/2` is an integer.
    pub fn lc_failure(l: u64, e: f64) -> Result<Self> {
        Ok(Self {
            kind: BoundKind::BinomialFailureLower,
            form: BoundForm::BinomialTailLower,
            value: lc_failure_lower(l, e)?,
            params: BoundParams { l, e_plus: e, e_minus: e, ..Default::default() },
            regime_ok: l.is_multiple_of(2) && e > 0.0 && e <= 0.5,
        })
    }

    pub fn peer_success(l: u64, p_plus: f64, rates: BinaryNoiseRates, y_positive: bool, form: PeerSuccessForm) -> Result<Self> {
        let p_opp = if y_positive { 1.0 - p_plus } else { p_plus };
        Ok(Self {
            kind: BoundKind::PeerSuccess,
            form: form.into(),
            value: peer_success_lower(l, p_opp, rates.e_plus(), rates.e_minus(), form)?,
            params: BoundParams {
                l,
                e_plus: rates.e_plus(),
                e_minus: rates.e_minus(),
                p_plus: Some(p_plus),
                delta: None,
            },
            regime_ok: form == PeerSuccessForm::HoeffdingCorrected,
        })
    }

    /// Peer failure bound; asserted only for symmetric priors and rates at
    /// even `l`.
    pub fn peer_failure(l: u64, p_plus: f64, rates: BinaryNoiseRates) -> Result<Self> {
        let e = rates.e_plus();
        let symmetric = p_plus == 0.5 && rates.e_plus() == rates.e_minus();
        Ok(Self {
            kind: BoundKind::PeerFailureLower,
            form: BoundForm::BinomialTailLower,
            value: peer_failure_lower(l, e)?,
            params: BoundParams {
                l,
                e_plus: rates.e_plus(),
                e_minus: rates.e_minus(),
                p_plus: Some(p_plus),
                delta: None,
            },
            regime_ok: symmetric && l.is_multiple_of(2) && e > 0.0 && e <= 0.5,
        })
    }
}
