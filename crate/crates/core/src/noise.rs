//! Noise transition matrices, noisy-label sampling, and instance-dependent
//! flip-rate synthesis.
//!
//! Class indices follow one convention everywhere: index 0 is label -1 and
//! index 1 is label +1.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as NormalCdf};

use crate::error::{check_range, Error, Result};

const ROW_SUM_TOL: f64 = 1e-12;
const SINGULAR_TOL: f64 = 1e-12;

/// A binary label, `-1` or `+1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BinaryLabel {
    #[serde(rename = "-1")]
    Neg,
    #[serde(rename = "+1")]
    Pos,
}

impl BinaryLabel {
    pub const fn index(self) -> usize {
        match self {
            BinaryLabel::Neg => 0,
            BinaryLabel::Pos => 1,
        }
    }

    pub fn from_index(index: usize) -> Option<Self> {
        match index {
            0 => Some(BinaryLabel::Neg),
            1 => Some(BinaryLabel::Pos),
            _ => None,
        }
    }

    pub const fn opposite(self) -> Self {
        match self {
            BinaryLabel::Neg => BinaryLabel::Pos,
            BinaryLabel::Pos => BinaryLabel::Neg,
        }
    }

    pub const fn sign(self) -> i8 {
        match self {
            BinaryLabel::Neg => -1,
            BinaryLabel::Pos => 1,
        }
    }
}

impl std::fmt::Display for BinaryLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BinaryLabel::Neg => "-1",
            BinaryLabel::Pos => "+1",
        })
    }
}

/// Row-stochastic `m × m` matrix; entry `(k, k')` is `P[noisy = k' | true = k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    m: usize,
    entries: Vec<f64>,
}

impl TransitionMatrix {
    /// Builds from row-major entries, checking every row is a distribution.
    pub fn new(m: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != m * m || m == 0 {
            return Err(Error::Shape {
                expected: m * m,
                got: entries.len(),
            });
        }
        for (row, r) in entries.chunks(m).enumerate() {
            let sum: f64 = r.iter().sum();
            if r.iter().any(|v| !v.is_finite() || *v < 0.0) || (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::NotRowStochastic { row });
            }
        }
        Ok(Self { m, entries })
    }

    pub fn identity(m: usize) -> Self {
        let mut entries = vec![0.0; m * m];
        for k in 0..m {
            entries[k * m + k] = 1.0;
        }
        Self { m, entries }
    }

    pub fn classes(&self) -> usize {
        self.m
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.m + col]
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.entries[k * self.m..(k + 1) * self.m]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    fn as_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.m, self.m, &self.entries)
    }

    pub fn determinant(&self) -> f64 {
        self.as_dmatrix().determinant()
    }

    /// General inverse via LU; fails when `|det| <= 1e-12`.
    pub fn inverse(&self) -> Result<InverseTransition> {
        let det = self.determinant();
        if det.is_nan() || det.abs() <= SINGULAR_TOL {
            return Err(Error::Singular(det));
        }
        let inv = self
            .as_dmatrix()
            .try_inverse()
            .ok_or(Error::Singular(det))?;
        let mut entries = Vec::with_capacity(self.m * self.m);
        for r in 0..self.m {
            for c in 0..self.m {
                entries.push(inv[(r, c)]);
            }
        }
        Ok(InverseTransition { m: self.m, entries })
    }
}

/// The inverse of a transition matrix. Rows still sum to one, but entries
/// may be negative.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseTransition {
    m: usize,
    entries: Vec<f64>,
}

impl InverseTransition {
    pub fn classes(&self) -> usize {
        self.m
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.m + col]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// `T⁻¹ · v`
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.m)
            .map(|r| (0..self.m).map(|c| self.get(r, c) * v[c]).sum())
            .collect()
    }

    /// `(T⁻¹)ᵀ · v`
    pub fn transpose_mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.m)
            .map(|c| (0..self.m).map(|r| self.get(r, c) * v[r]).sum())
            .collect()
    }

    /// `T · T⁻¹`, for checking an inversion.
    pub fn product_with(&self, t: &TransitionMatrix) -> Vec<f64> {
        let m = self.m;
        let mut out = vec![0.0; m * m];
        for r in 0..m {
            for c in 0..m {
                out[r * m + c] = (0..m).map(|k| t.get(r, k) * self.get(k, c)).sum();
            }
        }
        out
    }
}

/// Class-dependent binary flip rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryNoiseRates {
    /// `P[noisy = -1 | true = +1]`
    e_plus: f64,
    /// `P[noisy = +1 | true = -1]`
    e_minus: f64,
}

impl BinaryNoiseRates {
    pub fn new(e_plus: f64, e_minus: f64) -> Result<Self> {
        for e in [e_plus, e_minus] {
            if !(e.is_finite() && (0.0..1.0).contains(&e)) {
                return Err(Error::InvalidRate(e));
            }
        }
        if e_plus + e_minus >= 1.0 {
            return Err(Error::NonIdentifiableNoise(e_plus + e_minus));
        }
        Ok(Self { e_plus, e_minus })
    }

    pub fn symmetric(e: f64) -> Result<Self> {
        Self::new(e, e)
    }

    pub fn e_plus(&self) -> f64 {
        self.e_plus
    }

    pub fn e_minus(&self) -> f64 {
        self.e_minus
    }

    /// Flip probability for instances whose true label is `y`.
    pub fn flip_rate(&self, y: BinaryLabel) -> f64 {
        match y {
            BinaryLabel::Pos => self.e_plus,
            BinaryLabel::Neg => self.e_minus,
        }
    }

    /// `1 - e_plus - e_minus`, the determinant of the transition matrix.
    pub fn determinant(&self) -> f64 {
        1.0 - self.e_plus - self.e_minus
    }

    /// `[[1-e₋, e₋], [e₊, 1-e₊]]`
    pub fn transition(&self) -> TransitionMatrix {
        TransitionMatrix {
            m: 2,
            entries: vec![
                1.0 - self.e_minus,
                self.e_minus,
                self.e_plus,
                1.0 - self.e_plus,
            ],
        }
    }

    /// `1/(1-e₊-e₋) · [[1-e₊, -e₋], [-e₊, 1-e₋]]`
    pub fn inverse_transition(&self) -> InverseTransition {
        let d = self.determinant();
        InverseTransition {
            m: 2,
            entries: vec![
                (1.0 - self.e_plus) / d,
                -self.e_minus / d,
                -self.e_plus / d,
                (1.0 - self.e_minus) / d,
            ],
        }
    }
}

pub fn binary_transition(rates: BinaryNoiseRates) -> TransitionMatrix {
    rates.transition()
}

/// Either binary rates or a full transition matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseModel {
    Binary(BinaryNoiseRates),
    Matrix(TransitionMatrix),
}

impl NoiseModel {
    pub fn classes(&self) -> usize {
        match self {
            NoiseModel::Binary(_) => 2,
            NoiseModel::Matrix(t) => t.classes(),
        }
    }

    pub fn transition(&self) -> TransitionMatrix {
        match self {
            NoiseModel::Binary(r) => r.transition(),
            NoiseModel::Matrix(t) => t.clone(),
        }
    }

    /// Binary rates use the closed form; general matrices go through LU.
    pub fn inverse(&self) -> Result<InverseTransition> {
        match self {
            NoiseModel::Binary(r) => Ok(r.inverse_transition()),
            NoiseModel::Matrix(t) => t.inverse(),
        }
    }
}

impl From<BinaryNoiseRates> for NoiseModel {
    fn from(r: BinaryNoiseRates) -> Self {
        NoiseModel::Binary(r)
    }
}

impl From<TransitionMatrix> for NoiseModel {
    fn from(t: TransitionMatrix) -> Self {
        NoiseModel::Matrix(t)
    }
}

pub fn invert_transition(t: &TransitionMatrix) -> Result<InverseTransition> {
    t.inverse()
}

/// Draws one class index from a probability row.
pub(crate) fn sample_row<R: Rng + ?Sized>(row: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    // u landed in the rounding slack above the last partial sum
    row.iter().rposition(|p| *p > 0.0).unwrap_or(row.len() - 1)
}

/// `l` independent noisy copies of true class `y`, each drawn from row `y`.
pub fn sample_noisy_labels<R: Rng + ?Sized>(
    y: usize,
    l: usize,
    t: &TransitionMatrix,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if l == 0 {
        return Err(Error::EmptyLabels);
    }
    if y >= t.classes() {
        return Err(Error::LabelOutOfRange {
            label: y,
            classes: t.classes(),
        });
    }
    let row = t.row(y);
    Ok((0..l).map(|_| sample_row(row, rng)).collect())
}

/// How the truncated-normal draw `q` and the feature projection combine into
/// a flip rate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateCombiner {
    /// `q · 2σ(z)` with `σ` the logistic and `z` the standardized projection.
    /// `E[2σ(z)] = 1` for `z ~ N(0,1)`, so the mean rate stays at `q`'s mean.
    #[default]
    ScaledLogisticV1,
    /// The projection is ignored: rate = `q`.
    QOnly,
}

/// Upper clamp applied to synthesized rates, keeping them inside `[0, 1)`.
pub const MAX_SYNTH_RATE: f64 = 1.0 - 1e-6;

/// Instance-dependent flip-rate generator: a global rate `epsilon`, the
/// spread `sigma` of the per-instance draw, and projection weights `W`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceNoiseSynth {
    pub epsilon: f64,
    pub sigma: f64,
    pub weights: Vec<f64>,
    #[serde(default)]
    pub combiner: RateCombiner,
}

/// One synthesized rate together with its ingredients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthDraw {
    pub q: f64,
    pub projection: f64,
    pub rate: f64,
}

impl InstanceNoiseSynth {
    /// Samples `W` from the standard normal for features of dimension `dim`.
    pub fn new<R: Rng + ?Sized>(dim: usize, epsilon: f64, sigma: f64, rng: &mut R) -> Result<Self> {
        check_range("epsilon", epsilon, (0.0..=1.0).contains(&epsilon), "[0, 1]")?;
        check_range("sigma", sigma, sigma > 0.0, "> 0")?;
        let weights = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        Ok(Self {
            epsilon,
            sigma,
            weights,
            combiner: RateCombiner::default(),
        })
    }

    pub fn with_combiner(mut self, combiner: RateCombiner) -> Self {
        self.combiner = combiner;
        self
    }

    /// Flip rate for one instance: draws `q`, projects `feature` onto `W`.
    pub fn draw<R: Rng + ?Sized>(&self, feature: &[f64], rng: &mut R) -> Result<SynthDraw> {
        if feature.len() != self.weights.len() {
            return Err(Error::Shape {
                expected: self.weights.len(),
                got: feature.len(),
            });
        }
        let q = truncated_normal(self.epsilon, self.sigma, 0.0, 1.0, rng);
        let dot: f64 = feature.iter().zip(&self.weights).map(|(a, b)| a * b).sum();
        let norm = feature.iter().map(|a| a * a).sum::<f64>().sqrt();
        // x·W ~ N(0, |x|²) for W standard normal
        let projection = if norm > 0.0 { dot / norm } else { 0.0 };
        let raw = match self.combiner {
            RateCombiner::ScaledLogisticV1 => q * 2.0 / (1.0 + (-projection).exp()),
            RateCombiner::QOnly => q,
        };
        Ok(SynthDraw {
            q,
            projection,
            rate: raw.clamp(0.0, MAX_SYNTH_RATE),
        })
    }
}

/// Samples fresh projection weights and draws one instance's flip rate.
pub fn synth_instance_noise<R: Rng + ?Sized>(
    feature: &[f64],
    epsilon: f64,
    sigma: f64,
    rng: &mut R,
) -> Result<SynthDraw> {
    InstanceNoiseSynth::new(feature.len(), epsilon, sigma, rng)?.draw(feature, rng)
}

/// Draws from `N(mean, sd²)` restricted to `[lo, hi]`.
///
/// Rejection from the untruncated normal when at least half its mass is
/// inside the interval; inverse-CDF otherwise.
pub fn truncated_normal<R: Rng + ?Sized>(mean: f64, sd: f64, lo: f64, hi: f64, rng: &mut R) -> f64 {
    let std = NormalCdf::standard();
    let a = std.cdf((lo - mean) / sd);
    let b = std.cdf((hi - mean) / sd);
    if b - a >= 0.5 {
        let normal = Normal::new(mean, sd).expect("sd is positive");
        loop {
            let x = normal.sample(rng);
            if (lo..=hi).contains(&x) {
                return x;
            }
        }
    }
    let u = a + (b - a) * rng.random::<f64>();
    (mean + sd * std.inverse_cdf(u)).clamp(lo, hi)
}
