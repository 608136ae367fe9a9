//! Empirical noisy-label distributions, the memorizing predictor, and
//! excessive-generalization-error accounting.

use serde::{Deserialize, Serialize};

use crate::error::{check_range, Error, Result};
use crate::freqmodel::tau_lower_large;

const SUM_TOL: f64 = 1e-12;

/// A label distribution over `m` classes.
///
/// Proper distributions have entries in `[0, 1]`; signed ones (uncapped
/// corrected labels) may leave that range but still sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelDist {
    probs: Vec<f64>,
    signed: bool,
}

impl LabelDist {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Shape { expected: 1, got: 0 });
        }
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::ImproperDistribution);
        }
        check_sum(&probs)?;
        Ok(Self { probs, signed: false })
    }

    pub fn signed(probs: Vec<f64>) -> Result<Self> {
        if probs.iter().any(|p| !p.is_finite()) {
            return Err(Error::ImproperDistribution);
        }
        check_sum(&probs)?;
        let proper = probs.iter().all(|p| (0.0..=1.0).contains(p));
        Ok(Self { probs, signed: !proper })
    }

    pub fn one_hot(k: usize, m: usize) -> Result<Self> {
        if k >= m {
            return Err(Error::LabelOutOfRange { label: k, classes: m });
        }
        let mut probs = vec![0.0; m];
        probs[k] = 1.0;
        Ok(Self { probs, signed: false })
    }

    pub fn uniform(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::Shape { expected: 1, got: 0 });
        }
        Ok(Self { probs: vec![1.0 / m as f64; m], signed: false })
    }

    /// Binary distribution `[P(-1), P(+1)]` from the positive mass.
    pub fn binary(p_pos: f64) -> Result<Self> {
        Self::new(vec![1.0 - p_pos, p_pos])
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn classes(&self) -> usize {
        self.probs.len()
    }

    /// True when some entry lies outside `[0, 1]`.
    pub fn is_signed(&self) -> bool {
        self.signed
    }

    pub fn get(&self, k: usize) -> f64 {
        self.probs[k]
    }

    pub(crate) fn from_parts_unchecked(probs: Vec<f64>, signed: bool) -> Self {
        Self { probs, signed }
    }
}

fn check_sum(probs: &[f64]) -> Result<()> {
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > SUM_TOL {
        return Err(Error::UnnormalizedDistribution(sum));
    }
    Ok(())
}

/// `probs[k] = count(k) / l`.
pub fn empirical_distribution(labels: &[usize], m: usize) -> Result<LabelDist> {
    if labels.is_empty() {
        return Err(Error::EmptyLabels);
    }
    let mut counts = vec![0u64; m];
    for &k in labels {
        if k >= m {
            return Err(Error::LabelOutOfRange { label: k, classes: m });
        }
        counts[k] += 1;
    }
    Ok(empirical_from_counts(&counts))
}

/// Same as [`empirical_distribution`] from per-class counts.
pub(crate) fn empirical_from_counts(counts: &[u64]) -> LabelDist {
    let l: u64 = counts.iter().sum();
    let probs = counts.iter().map(|&c| c as f64 / l as f64).collect();
    LabelDist::from_parts_unchecked(probs, false)
}

/// `P[h(x) != y]` for a predictor whose output at `x` is `dist`: `1 - probs[y]`.
pub fn memorization_error(dist: &LabelDist, y: usize) -> Result<f64> {
    if y >= dist.classes() {
        return Err(Error::LabelOutOfRange { label: y, classes: dist.classes() });
    }
    if dist.is_signed() {
        return Err(Error::ImproperDistribution);
    }
    Ok(1.0 - dist.get(y))
}

/// How a memorizing model maps the empirical label distribution to its output.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum MemorizationMode {
    /// Output equals the empirical distribution.
    #[default]
    Exact,
    /// Keeps the class ranking but reshapes the masses: `p_k^power`,
    /// renormalized. Exploratory; no guarantees are checked for it.
    OrderPreserving { power: f64 },
}

impl MemorizationMode {
    pub fn apply(&self, dist: &LabelDist) -> Result<LabelDist> {
        match *self {
            MemorizationMode::Exact => Ok(dist.clone()),
            MemorizationMode::OrderPreserving { power } => {
                check_range("power", power, power > 0.0 && power.is_finite(), "> 0")?;
                if dist.is_signed() {
                    return Err(Error::ImproperDistribution);
                }
                let raised: Vec<f64> = dist.probs().iter().map(|p| p.powf(power)).collect();
                let total: f64 = raised.iter().sum();
                Ok(LabelDist::from_parts_unchecked(
                    raised.iter().map(|p| p / total).collect(),
                    false,
                ))
            }
        }
    }
}

/// One instance's contribution to the excessive generalization error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExcessRecord {
    pub l: u64,
    pub tau: f64,
    pub err: f64,
    pub individual_excess: f64,
}

impl ExcessRecord {
    pub fn new(l: u64, tau: f64, err: f64) -> Result<Self> {
        Ok(Self { l, tau, err, individual_excess: individual_excess(tau, err)? })
    }
}

/// `tau · err`
pub fn individual_excess(tau: f64, err: f64) -> Result<f64> {
    check_range("tau", tau, tau >= 0.0, ">= 0")?;
    check_range("err", err, (0.0..=1.0).contains(&err), "[0, 1]")?;
    Ok(tau * err)
}

/// `Σ_l τ_l Σ_{x: l(x) = l} P[h(x) != y]`.
///
/// Products are summed in `(l, value)` order so the total does not depend on
/// the order of `records`.
pub fn total_excess(records: &[ExcessRecord]) -> f64 {
    let mut terms: Vec<(u64, f64)> = records.iter().map(|r| (r.l, r.individual_excess)).collect();
    terms.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    terms.iter().map(|t| t.1).sum()
}

/// Lower bound on one instance's excess: the large-`l` lower bound on `τ_l`
/// times the memorization error. Degenerates to 0 at `l = 1`.
pub fn impact_lower_bound(n: u64, l: u64, weight_value: f64, dist: &LabelDist, y: usize) -> Result<f64> {
    if l == 0 || l > n {
        return Err(Error::InvalidAppearance { l, n });
    }
    check_range("weight", weight_value, (0.0..=1.0).contains(&weight_value), "[0, 1]")?;
    Ok(tau_lower_large(n, l, weight_value) * memorization_error(dist, y)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::freqmodel::{large_bound_interval, tau_exact, tau_exact_values, weight_estimate, PriorSpec};
    use crate::noise::{sample_noisy_labels, BinaryNoiseRates};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn empirical_two_of_three() {
        let d = empirical_distribution(&[1, 1, 0], 2).unwrap();
        assert_relative_eq!(d.get(1), 2.0 / 3.0, epsilon = 1e-15);
        assert_eq!(empirical_distribution(&[2], 3).unwrap().probs(), &[0.0, 0.0, 1.0]);
        assert_eq!(empirical_distribution(&[0, 0, 1, 1], 2).unwrap().probs(), &[0.5, 0.5]);
    }

    #[test]
    fn empirical_errors() {
        assert_eq!(empirical_distribution(&[], 2), Err(Error::EmptyLabels));
        assert_eq!(
            empirical_distribution(&[0, 3], 2),
            Err(Error::LabelOutOfRange { label: 3, classes: 2 })
        );
    }

    #[test]
    fn memorization_error_examples() {
        assert_eq!(memorization_error(&LabelDist::one_hot(1, 2).unwrap(), 1).unwrap(), 0.0);
        assert_eq!(memorization_error(&LabelDist::new(vec![0.4, 0.6]).unwrap(), 1).unwrap(), 0.4);
        let u = LabelDist::uniform(4).unwrap();
        for y in 0..4 {
            assert_eq!(memorization_error(&u, y).unwrap(), 0.75);
        }
        assert!(memorization_error(&u, 4).is_err());
    }

    #[test]
    fn memorization_error_is_complement_of_true_mass() {
        let d = LabelDist::new(vec![0.1, 0.2, 0.7]).unwrap();
        for y in 0..3 {
            let off: f64 = (0..3).filter(|&k| k != y).map(|k| d.get(k)).sum();
            assert!((memorization_error(&d, y).unwrap() - off).abs() < 1e-15);
            assert_eq!(memorization_error(&d, y).unwrap(), 1.0 - d.get(y));
        }
    }

    #[test]
    fn signed_dist_keeps_sum() {
        let d = LabelDist::signed(vec![-1.0 / 3.0, 4.0 / 3.0]).unwrap();
        assert!(d.is_signed());
        assert!(LabelDist::new(vec![-0.1, 1.1]).is_err());
        assert!(LabelDist::signed(vec![0.5, 0.6]).is_err());
        assert!(!LabelDist::signed(vec![0.5, 0.5]).unwrap().is_signed());
    }

    #[test]
    fn excess_examples() {
        assert_eq!(individual_excess(0.3, 0.0).unwrap(), 0.0);
        assert_relative_eq!(individual_excess(0.001, 0.4).unwrap(), 4.0e-4, max_relative = 1e-15);
        let tau = tau_exact_values(&[0.1, 0.2], 10, 3).unwrap();
        assert_relative_eq!(individual_excess(tau, 0.4).unwrap(), 0.071126, epsilon = 1e-6);
        assert!(individual_excess(-1.0, 0.2).is_err());
        assert!(individual_excess(0.1, 1.2).is_err());
    }

    #[test]
    fn total_excess_examples() {
        assert_eq!(total_excess(&[]), 0.0);
        let rs = [ExcessRecord::new(1, 0.001, 0.4).unwrap(), ExcessRecord::new(2, 0.002, 0.1).unwrap()];
        assert_relative_eq!(total_excess(&rs), 6.0e-4, max_relative = 1e-12);
        let direct: f64 = rs.iter().map(|r| r.tau * r.err).sum();
        assert!((total_excess(&rs) - direct).abs() < 1e-15);
    }

    #[test]
    fn total_excess_permutation_invariant() {
        let rs: Vec<ExcessRecord> = (0..50u64)
            .map(|i| ExcessRecord::new(i % 7 + 1, 1.0 / (i as f64 + 3.0), (i as f64 * 0.37).fract()).unwrap())
            .collect();
        let mut rev = rs.clone();
        rev.reverse();
        let mut rotated = rs.clone();
        rotated.rotate_left(17);
        assert_eq!(total_excess(&rs), total_excess(&rev));
        assert_eq!(total_excess(&rs), total_excess(&rotated));
    }

    #[test]
    fn impact_lower_bound_examples() {
        let zero = LabelDist::one_hot(1, 2).unwrap();
        assert_eq!(impact_lower_bound(10_000, 100, 1.0, &zero, 1).unwrap(), 0.0);
        let d = LabelDist::new(vec![0.2, 0.8]).unwrap();
        assert_relative_eq!(impact_lower_bound(10_000, 100, 1.0, &d, 1).unwrap(), 7.9208e-6, epsilon = 1e-10);
        assert_eq!(impact_lower_bound(10_000, 1, 1.0, &d, 1).unwrap(), 0.0);
    }

    #[test]
    fn impact_bound_below_exact_excess() {
        let prior = PriorSpec::zipf_capped(1000, 1.1, Some(0.05)).unwrap();
        let d = LabelDist::new(vec![0.3, 0.7]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for l in [2, 10, 100, 1000] {
            let w = weight_estimate(&prior, large_bound_interval(10_000, l), 2000, &mut rng).unwrap();
            let exact = tau_exact(&prior, 10_000, l).unwrap() * memorization_error(&d, 1).unwrap();
            let lower = impact_lower_bound(10_000, l, w.value.min(1.0), &d, 1).unwrap();
            assert!(lower <= exact, "l={l}: {lower} > {exact}");
        }
    }

    #[test]
    fn order_preserving_mode_keeps_ranking() {
        let d = LabelDist::new(vec![0.2, 0.5, 0.3]).unwrap();
        assert_eq!(MemorizationMode::Exact.apply(&d).unwrap(), d);
        let sharp = MemorizationMode::OrderPreserving { power: 3.0 }.apply(&d).unwrap();
        assert!(sharp.get(1) > sharp.get(2) && sharp.get(2) > sharp.get(0));
        assert!(sharp.get(1) > d.get(1));
        assert!((sharp.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn large_l_empirical_concentrates_on_row() {
        // Hoeffding: P[|P̃ - 0.2| >= 0.02] <= 2e^{-8} at l = 10⁴
        let t = BinaryNoiseRates::new(0.2, 0.0).unwrap().transition();
        let mut hits = 0;
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let labels = sample_noisy_labels(1, 10_000, &t, &mut rng).unwrap();
            let d = empirical_distribution(&labels, 2).unwrap();
            if (d.get(0) - 0.2).abs() < 0.02 {
                hits += 1;
            }
        }
        assert!(hits >= 99, "{hits}/100");
    }
}
