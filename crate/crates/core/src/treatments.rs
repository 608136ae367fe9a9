//! Loss correction, label smoothing and peer loss, evaluated on a memorized
//! instance, plus the diagnostics around them.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_range, Error, Result};
use crate::memorize::{memorization_error, LabelDist};
use crate::noise::{sample_row, BinaryLabel, BinaryNoiseRates, NoiseModel};

/// Margins and error differences within this distance of zero count as ties.
pub const TIE_TOL: f64 = 1e-12;

/// Default clamp for predicted probabilities inside cross-entropy, giving a
/// loss cap of `ln 1000`.
pub const DEFAULT_Q_MIN: f64 = 1e-3;

/// Per-class loss values `ℓ(h(x), y')`, one entry per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossVector(Vec<f64>);

impl LossVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteLoss(i));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn classes(&self) -> usize {
        self.0.len()
    }

    pub fn dot(&self, probs: &[f64]) -> f64 {
        self.0.iter().zip(probs).map(|(a, b)| a * b).sum()
    }
}

/// `(T⁻¹)ᵀ P̃`, before and after projecting back onto a vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectedLabel {
    pub raw: LabelDist,
    pub capped: LabelDist,
    pub was_capped: bool,
}

fn require_binary(classes: usize) -> Result<()> {
    if classes != 2 {
        return Err(Error::NotBinary(classes));
    }
    Ok(())
}

/// Corrected label for binary class-dependent noise.
///
/// When the raw label leaves the simplex it is capped to the vertex on the
/// violated side: `raw[+1] > 1` gives `[0, 1]`, `raw[+1] < 0` gives `[1, 0]`.
pub fn corrected_label(dist: &LabelDist, rates: BinaryNoiseRates) -> Result<CorrectedLabel> {
    require_binary(dist.classes())?;
    if dist.is_signed() {
        return Err(Error::ImproperDistribution);
    }
    let (p_neg, p_pos) = (dist.get(0), dist.get(1));
    let (ep, em) = (rates.e_plus(), rates.e_minus());
    let det = rates.determinant();
    let raw = vec![
        ((1.0 - ep) * p_neg - ep * p_pos) / det,
        ((1.0 - em) * p_pos - em * p_neg) / det,
    ];
    let capped = if raw[1] > 1.0 {
        Some(BinaryLabel::Pos)
    } else if raw[1] < 0.0 {
        Some(BinaryLabel::Neg)
    } else {
        None
    };
    finish_correction(raw, capped.map(BinaryLabel::index))
}

/// Corrected label for an arbitrary invertible noise model. An improper raw
/// label is capped to the one-hot vector at its largest entry, which agrees
/// with the binary rule.
pub fn corrected_label_general(dist: &LabelDist, model: &NoiseModel) -> Result<CorrectedLabel> {
    if dist.classes() != model.classes() {
        return Err(Error::Shape { expected: model.classes(), got: dist.classes() });
    }
    if let NoiseModel::Binary(rates) = model {
        return corrected_label(dist, *rates);
    }
    let raw = model.inverse()?.transpose_mul_vec(dist.probs());
    let proper = raw.iter().all(|p| (0.0..=1.0).contains(p));
    let vertex = if proper {
        None
    } else {
        raw.iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(k, _)| k)
    };
    finish_correction(raw, vertex)
}

fn finish_correction(raw: Vec<f64>, vertex: Option<usize>) -> Result<CorrectedLabel> {
    let m = raw.len();
    let raw = LabelDist::signed(raw)?;
    Ok(match vertex {
        Some(k) => CorrectedLabel { raw, capped: LabelDist::one_hot(k, m)?, was_capped: true },
        None => {
            // entries can sit an ulp outside [0, 1] when the other side is at a vertex
            let probs = raw.probs().iter().map(|p| p.clamp(0.0, 1.0)).collect();
            let capped = LabelDist::new(probs)?;
            CorrectedLabel { raw, capped, was_capped: false }
        }
    })
}

/// `T⁻¹ ℓ`: the corrected loss vector.
pub fn lc_loss_vector(loss: &LossVector, model: &NoiseModel) -> Result<LossVector> {
    if loss.classes() != model.classes() {
        return Err(Error::Shape { expected: model.classes(), got: loss.classes() });
    }
    LossVector::new(model.inverse()?.mul_vec(loss.values()))
}

/// Average corrected loss over an instance's noisy labels: `(1/l) Σᵢ ℓ_LC[ỹᵢ]`.
pub fn lc_empirical_loss(labels: &[usize], model: &NoiseModel, loss: &LossVector) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::EmptyLabels);
    }
    let lc = lc_loss_vector(loss, model)?;
    let m = lc.classes();
    let mut total = 0.0;
    for &k in labels {
        if k >= m {
            return Err(Error::LabelOutOfRange { label: k, classes: m });
        }
        total += lc.values()[k];
    }
    Ok(total / labels.len() as f64)
}

/// `E_{ỹ ~ T[y]}[ℓ_LC[ỹ]]`, the corrected loss averaged over the exact noisy
/// posterior of true class `y`.
pub fn lc_posterior_expectation(y: usize, model: &NoiseModel, loss: &LossVector) -> Result<f64> {
    let t = model.transition();
    if y >= t.classes() {
        return Err(Error::LabelOutOfRange { label: y, classes: t.classes() });
    }
    let lc = lc_loss_vector(loss, model)?;
    Ok(lc.dot(t.row(y)))
}

/// `(1-a)·P̃ + a/m`.
pub fn smoothed_label(dist: &LabelDist, a: f64, m: usize) -> Result<LabelDist> {
    check_range("a", a, (0.0..=1.0).contains(&a), "[0, 1]")?;
    if m != dist.classes() {
        return Err(Error::Shape { expected: dist.classes(), got: m });
    }
    let u = 1.0 / m as f64;
    // written as p + a(u - p) so that a uniform input stays exactly uniform
    let probs: Vec<f64> = dist.probs().iter().map(|p| (p + a * (u - p)).clamp(0.0, 1.0)).collect();
    LabelDist::new(probs)
}

/// Which of the two memorized targets ends up with the smaller error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LsLcOutcome {
    LcBetter,
    LsBetter,
    Tie,
}

/// Errors of the capped corrected label and of the smoothed label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LsLcComparison {
    pub err_lc: f64,
    pub err_ls: f64,
    pub outcome: LsLcOutcome,
}

/// Compares memorizing the capped corrected label with memorizing the
/// smoothed label, for true label `y`.
pub fn compare_ls_lc(dist: &LabelDist, y: BinaryLabel, rates: BinaryNoiseRates, a: f64) -> Result<LsLcComparison> {
    require_binary(dist.classes())?;
    let lc = corrected_label(dist, rates)?;
    let ls = smoothed_label(dist, a, 2)?;
    let err_lc = memorization_error(&lc.capped, y.index())?;
    let err_ls = memorization_error(&ls, y.index())?;
    let outcome = if (err_lc - err_ls).abs() <= TIE_TOL {
        LsLcOutcome::Tie
    } else if err_lc < err_ls {
        LsLcOutcome::LcBetter
    } else {
        LsLcOutcome::LsBetter
    };
    Ok(LsLcComparison { err_lc, err_ls, outcome })
}

/// `p₊(1-e₊) + p₋e₋`: the population rate of noisy positives.
pub fn global_noisy_positive_rate(p_plus: f64, rates: BinaryNoiseRates) -> f64 {
    p_plus * (1.0 - rates.e_plus()) + (1.0 - p_plus) * rates.e_minus()
}

/// What peer loss predicts when the local and global noisy rates coincide.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum PeerTieRule {
    /// The class with the larger clean prior; `+1` when the priors are equal.
    LargerCleanPrior { p_plus: f64 },
    Fixed { label: BinaryLabel },
}

impl Default for PeerTieRule {
    fn default() -> Self {
        PeerTieRule::LargerCleanPrior { p_plus: 0.5 }
    }
}

impl PeerTieRule {
    fn resolve(&self) -> BinaryLabel {
        match *self {
            PeerTieRule::LargerCleanPrior { p_plus } if p_plus < 0.5 => BinaryLabel::Neg,
            PeerTieRule::LargerCleanPrior { .. } => BinaryLabel::Pos,
            PeerTieRule::Fixed { label } => label,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeerDecision {
    pub predicted: BinaryLabel,
    /// `P̃[+1|x] - global noisy positive rate`
    pub margin: f64,
    pub tie: bool,
}

/// Peer loss pushes a memorizing model to `+1` exactly when the local noisy
/// positive rate exceeds the global one.
pub fn peer_predict(dist_local: &LabelDist, global_rate: f64, tie_rule: PeerTieRule) -> Result<PeerDecision> {
    require_binary(dist_local.classes())?;
    check_range("global_rate", global_rate, (0.0..=1.0).contains(&global_rate), "[0, 1]")?;
    let margin = dist_local.get(1) - global_rate;
    let tie = margin.abs() <= TIE_TOL;
    let predicted = if tie {
        tie_rule.resolve()
    } else if margin > 0.0 {
        BinaryLabel::Pos
    } else {
        BinaryLabel::Neg
    };
    Ok(PeerDecision { predicted, margin, tie })
}

/// Joint distribution `P(x, ỹ)` over a finite feature set; one row per `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointTable {
    rows: Vec<Vec<f64>>,
}

impl JointTable {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let m = rows.first().map_or(0, Vec::len);
        if m == 0 {
            return Err(Error::Shape { expected: 1, got: 0 });
        }
        let mut sum = 0.0;
        for r in &rows {
            if r.len() != m {
                return Err(Error::Shape { expected: m, got: r.len() });
            }
            if r.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(Error::ImproperDistribution);
            }
            sum += r.iter().sum::<f64>();
        }
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::UnnormalizedDistribution(sum));
        }
        Ok(Self { rows })
    }

    /// `P(x)·P(ỹ)` built from the marginals of `self`.
    pub fn product_of_marginals(&self) -> Self {
        let px = self.feature_marginal();
        let py = self.label_marginal();
        Self { rows: px.iter().map(|a| py.iter().map(|b| a * b).collect()).collect() }
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn classes(&self) -> usize {
        self.rows[0].len()
    }

    pub fn feature_marginal(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn label_marginal(&self) -> Vec<f64> {
        (0..self.classes()).map(|k| self.rows.iter().map(|r| r[k]).sum()).collect()
    }

    /// `P(ỹ | x)`; rows of zero-mass features come back uniform.
    pub fn conditional(&self) -> Vec<Vec<f64>> {
        let m = self.classes();
        self.rows
            .iter()
            .map(|r| {
                let s: f64 = r.iter().sum();
                if s > 0.0 {
                    r.iter().map(|p| p / s).collect()
                } else {
                    vec![1.0 / m as f64; m]
                }
            })
            .collect()
    }

    pub fn mutual_information(&self) -> f64 {
        let px = self.feature_marginal();
        let py = self.label_marginal();
        let mut mi = 0.0;
        for (x, r) in self.rows.iter().enumerate() {
            for (k, &p) in r.iter().enumerate() {
                if p > 0.0 {
                    mi += p * (p / (px[x] * py[k])).ln();
                }
            }
        }
        mi
    }
}

/// Expected peer loss and the divergences it decomposes into.
///
/// With `Q(x,ỹ) = Q(ỹ|x)P(x)` and `KL(A‖B) = Σ A ln(A/B)`:
/// `value = KL(P ‖ Q) - KL(P_x×P_ỹ ‖ Q) - I(X; Ỹ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeerLossDecomposition {
    /// `E_P[CE] - E_{P_x}E_{P_ỹ}[CE]`
    pub value: f64,
    /// `KL(P(x,ỹ) ‖ Q(x,ỹ))`
    pub kl_joint_vs_model: f64,
    /// `KL(P(x)P(ỹ) ‖ Q(x,ỹ))`
    pub kl_product_vs_model: f64,
    /// `I(X; Ỹ)` under `P`
    pub mutual_information: f64,
}

impl PeerLossDecomposition {
    /// The divergence side of the identity; equals `value`.
    pub fn kl_identity(&self) -> f64 {
        self.kl_joint_vs_model - self.kl_product_vs_model - self.mutual_information
    }
}

fn clamp_predictor(predictor: &[Vec<f64>], m: usize, q_min: f64) -> Result<Vec<Vec<f64>>> {
    let hi = 1.0 - q_min * (m as f64 - 1.0);
    check_range("q_min", q_min, q_min > 0.0 && q_min < hi, "(0, 1/m)")?;
    predictor
        .iter()
        .map(|row| {
            if row.len() != m {
                return Err(Error::Shape { expected: m, got: row.len() });
            }
            let sum: f64 = row.iter().sum();
            if row.iter().any(|q| !(0.0..=1.0).contains(q)) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::ImproperDistribution);
            }
            Ok(row.iter().map(|q| q.clamp(q_min, hi)).collect())
        })
        .collect()
}

fn expected_ce(weights: &[Vec<f64>], q: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for (wr, qr) in weights.iter().zip(q) {
        for (w, qv) in wr.iter().zip(qr) {
            if *w > 0.0 {
                total -= w * qv.ln();
            }
        }
    }
    total
}

fn kl_against_model(a: &[Vec<f64>], q: &[Vec<f64>], px: &[f64]) -> f64 {
    let mut total = 0.0;
    for (x, (ar, qr)) in a.iter().zip(q).enumerate() {
        for (av, qv) in ar.iter().zip(qr) {
            if *av > 0.0 {
                total += av * (av / (qv * px[x])).ln();
            }
        }
    }
    total
}

/// Expected peer loss of predictor `Q(ỹ|x)` (one row per feature) under
/// `joint`, using cross-entropy with `Q` clamped to `[q_min, 1-(m-1)q_min]`.
pub fn peer_expected_loss(joint: &JointTable, predictor: &[Vec<f64>], q_min: f64) -> Result<PeerLossDecomposition> {
    if predictor.len() != joint.rows().len() {
        return Err(Error::Shape { expected: joint.rows().len(), got: predictor.len() });
    }
    let q = clamp_predictor(predictor, joint.classes(), q_min)?;
    let product = joint.product_of_marginals();
    let px = joint.feature_marginal();
    let value = expected_ce(joint.rows(), &q) - expected_ce(product.rows(), &q);
    Ok(PeerLossDecomposition {
        value,
        kl_joint_vs_model: kl_against_model(joint.rows(), &q, &px),
        kl_product_vs_model: kl_against_model(product.rows(), &q, &px),
        mutual_information: joint.mutual_information(),
    })
}

/// Monte-Carlo peer loss with literal peer pairs: each sample draws
/// `(x, ỹ)` from the joint, then an independent peer feature and an
/// independent peer label. Returns mean and standard error.
pub fn peer_loss_sampled<R: Rng + ?Sized>(
    joint: &JointTable,
    predictor: &[Vec<f64>],
    q_min: f64,
    samples: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if samples == 0 {
        return Err(Error::ZeroCount);
    }
    if predictor.len() != joint.rows().len() {
        return Err(Error::Shape { expected: joint.rows().len(), got: predictor.len() });
    }
    let m = joint.classes();
    let q = clamp_predictor(predictor, m, q_min)?;
    let flat: Vec<f64> = joint.rows().iter().flatten().copied().collect();
    let px = joint.feature_marginal();
    let py = joint.label_marginal();
    let draws: Vec<f64> = (0..samples)
        .map(|_| {
            let cell = sample_row(&flat, rng);
            let (x, k) = (cell / m, cell % m);
            let (xp, kp) = (sample_row(&px, rng), sample_row(&py, rng));
            -q[x][k].ln() + q[xp][kp].ln()
        })
        .collect();
    Ok(crate::numeric::mean_and_std_error(&draws))
}

/// Result of minimizing one instance's expected peer loss over a grid of
/// `q = P[h(x) = +1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VertexCheck {
    pub argmin: f64,
    pub argmin_index: usize,
    pub objective_min: f64,
    /// Largest minus smallest objective over the grid.
    pub objective_range: f64,
    pub on_boundary: bool,
    pub margin: f64,
}

/// Per-instance expected peer loss at `q`: CE against the local noisy labels
/// minus CE against the global noisy label rate.
pub fn peer_instance_objective(p_pos: f64, global_rate: f64, q: f64) -> f64 {
    let (lq, l1q) = (-q.ln(), -(1.0 - q).ln());
    let local = p_pos * lq + (1.0 - p_pos) * l1q;
    let peer = global_rate * lq + (1.0 - global_rate) * l1q;
    local - peer
}

pub fn peer_vertex_check(dist_local: &LabelDist, global_rate: f64, grid_points: usize, q_min: f64) -> Result<VertexCheck> {
    require_binary(dist_local.classes())?;
    check_range("grid_points", grid_points as f64, grid_points >= 3, ">= 3")?;
    check_range("q_min", q_min, q_min > 0.0 && q_min < 0.5, "(0, 0.5)")?;
    check_range("global_rate", global_rate, (0.0..=1.0).contains(&global_rate), "[0, 1]")?;
    let p_pos = dist_local.get(1);
    let last = grid_points - 1;
    let step = (1.0 - 2.0 * q_min) / last as f64;
    let (mut best_i, mut best, mut worst) = (0, f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..grid_points {
        let q = if i == last { 1.0 - q_min } else { q_min + i as f64 * step };
        let v = peer_instance_objective(p_pos, global_rate, q);
        if v < best {
            best = v;
            best_i = i;
        }
        worst = worst.max(v);
    }
    let argmin = if best_i == last { 1.0 - q_min } else { q_min + best_i as f64 * step };
    Ok(VertexCheck {
        argmin,
        argmin_index: best_i,
        objective_min: best,
        objective_range: worst - best,
        on_boundary: best_i == 0 || best_i == last,
        margin: p_pos - global_rate,
    })
}

/// Corrected empirical loss minus the clean loss `ℓ(y)`. Zero when the
/// labels' proportions match the noisy posterior of `y` exactly.
pub fn paradox_gap(labels: &[usize], model: &NoiseModel, loss: &LossVector, y: usize) -> Result<f64> {
    if y >= loss.classes() {
        return Err(Error::LabelOutOfRange { label: y, classes: loss.classes() });
    }
    Ok(lc_empirical_loss(labels, model, loss)? - loss.values()[y])
}
