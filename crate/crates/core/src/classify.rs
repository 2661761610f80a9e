//! Linear one-vs-rest SVMs and Platt-calibrated class probabilities.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{argmax, Real};

/// One linear scorer per class: `score_l = <w_l, x> + b_l`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSvmModel<T> {
    pub weights: Vec<Vec<T>>,
    pub biases: Vec<T>,
}

impl<T: Real> LinearSvmModel<T> {
    pub fn new(weights: Vec<Vec<T>>, biases: Vec<T>) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(Error::arg("model needs one weight vector and bias per class"));
        }
        let dim = weights[0].len();
        if weights.iter().any(|w| w.len() != dim) {
            return Err(Error::arg("weight vectors of unequal length"));
        }
        Ok(Self { weights, biases })
    }

    pub fn classes(&self) -> usize {
        self.biases.len()
    }

    pub fn dim(&self) -> usize {
        self.weights[0].len()
    }

    /// Raw decision values for one input vector.
    pub fn scores(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.dim() {
            return Err(Error::arg(format!(
                "input of dimension {} for a model of dimension {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(self
            .weights
            .iter()
            .zip(&self.biases)
            .map(|(w, &b)| dot(w, x) + b)
            .collect())
    }
}

#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Dual coordinate descent settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmParams {
    pub c: f64,
    pub epochs: usize,
    /// Stop once the primal-dual gap drops below this.
    pub gap_tol: f64,
    pub seed: u64,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            epochs: 50,
            gap_tol: 1e-4,
            seed: 42,
        }
    }
}

/// Per-class objective values recorded after every epoch.
#[derive(Debug, Clone, Default)]
pub struct SvmTrace<T> {
    /// Regularized hinge loss.
    pub primal: Vec<T>,
    /// Dual objective `0.5 |w|^2 - sum(alpha)` being minimized; never increases.
    pub dual: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct SvmFit<T> {
    pub model: LinearSvmModel<T>,
    pub traces: Vec<SvmTrace<T>>,
}

/// Trains `classes` one-vs-rest L2-regularized hinge-loss classifiers by dual
/// coordinate descent. The bias is learned as the weight of a constant unit
/// feature, so it is regularized like the other weights.
pub fn svm_train<T: Real, V: AsRef<[T]> + Sync>(
    xs: &[V],
    labels: &[usize],
    classes: usize,
    params: &SvmParams,
) -> Result<SvmFit<T>> {
    if xs.len() != labels.len() {
        return Err(Error::LengthMismatch {
            expected: xs.len(),
            found: labels.len(),
        });
    }
    if !(params.c > 0.0) {
        return Err(Error::arg("C must be positive"));
    }
    let dim = xs
        .first()
        .ok_or_else(|| Error::arg("no training samples"))?
        .as_ref()
        .len();
    if xs.iter().any(|x| x.as_ref().len() != dim) {
        return Err(Error::arg("training vectors of unequal dimension"));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::arg(format!("label {l} out of range for {classes} classes")));
    }
    let mut present = vec![false; classes];
    labels.iter().for_each(|&l| present[l] = true);
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::arg("training data must contain at least two classes"));
    }

    let sq_norms: Vec<T> = xs.iter().map(|x| dot(x.as_ref(), x.as_ref()) + T::one()).collect();
    let per_class: Vec<(Vec<T>, T, SvmTrace<T>)> = (0..classes)
        .into_par_iter()
        .map(|class| {
            let y: Vec<T> = labels
                .iter()
                .map(|&l| if l == class { T::one() } else { -T::one() })
                .collect();
            let seed = params.seed.wrapping_add((class as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            binary_dual_cd(xs, &y, &sq_norms, dim, params, seed)
        })
        .collect();
    let mut weights = Vec::with_capacity(classes);
    let mut biases = Vec::with_capacity(classes);
    let mut traces = Vec::with_capacity(classes);
    for (w, b, trace) in per_class {
        weights.push(w);
        biases.push(b);
        traces.push(trace);
    }
    Ok(SvmFit {
        model: LinearSvmModel { weights, biases },
        traces,
    })
}

fn binary_dual_cd<T: Real, V: AsRef<[T]>>(
    xs: &[V],
    y: &[T],
    sq_norms: &[T],
    dim: usize,
    params: &SvmParams,
    seed: u64,
) -> (Vec<T>, T, SvmTrace<T>) {
    let c = T::lit(params.c);
    let half = T::lit(0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut alpha = vec![T::zero(); xs.len()];
    let mut w = vec![T::zero(); dim];
    let mut b = T::zero();
    let mut trace = SvmTrace {
        primal: Vec::new(),
        dual: Vec::new(),
    };
    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let x = xs[i].as_ref();
            let g = y[i] * (dot(&w, x) + b) - T::one();
            let projected = if alpha[i] == T::zero() {
                g.min(T::zero())
            } else if alpha[i] == c {
                g.max(T::zero())
            } else {
                g
            };
            if projected == T::zero() {
                continue;
            }
            let old = alpha[i];
            alpha[i] = (old - g / sq_norms[i]).max(T::zero()).min(c);
            let step = (alpha[i] - old) * y[i];
            if step != T::zero() {
                for (wj, &xj) in w.iter_mut().zip(x) {
                    *wj += step * xj;
                }
                b += step;
            }
        }
        let reg = half * (dot(&w, &w) + b * b);
        let hinge: T = xs
            .iter()
            .zip(y)
            .map(|(x, &yi)| (T::one() - yi * (dot(&w, x.as_ref()) + b)).max(T::zero()))
            .sum();
        let primal = reg + c * hinge;
        let dual = alpha.iter().copied().sum::<T>() - reg;
        trace.primal.push(primal);
        trace.dual.push(-dual);
        if primal - dual < T::lit(params.gap_tol) {
            break;
        }
    }
    (w, b, trace)
}

/// Per-class sigmoids `P = 1 / (1 + exp(a s + b))` over raw scores.
#[derive(Debug, Clone, PartialEq)]
pub struct PlattParams<T> {
    pub a: Vec<T>,
    pub b: Vec<T>,
}

/// Minimum positives per class for a sigmoid fit.
pub const PLATT_MIN_SAMPLES: usize = 10;

/// Fits one sigmoid per class to `(score_l, label == l)` pairs using Platt's
/// prior-corrected targets and a Newton method with backtracking.
pub fn platt_fit<T: Real>(
    scores: &[Vec<T>],
    labels: &[usize],
    classes: usize,
    max_iter: usize,
) -> Result<PlattParams<T>> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            expected: scores.len(),
            found: labels.len(),
        });
    }
    if scores.iter().any(|s| s.len() != classes) {
        return Err(Error::arg("score vectors must have one entry per class"));
    }
    let mut a = Vec::with_capacity(classes);
    let mut b = Vec::with_capacity(classes);
    for class in 0..classes {
        let positives = labels.iter().filter(|&&l| l == class).count();
        if positives < PLATT_MIN_SAMPLES {
            return Err(Error::InsufficientData {
                class: format!("#{class}"),
                count: positives,
                required: PLATT_MIN_SAMPLES,
            });
        }
        let s: Vec<f64> = scores.iter().map(|v| v[class].widen()).collect();
        let is_pos: Vec<bool> = labels.iter().map(|&l| l == class).collect();
        let (ai, bi) = fit_sigmoid(&s, &is_pos, max_iter)?;
        a.push(T::lit(ai));
        b.push(T::lit(bi));
    }
    Ok(PlattParams { a, b })
}

/// Newton iterations of Lin, Lin and Weng's formulation of Platt scaling.
fn fit_sigmoid(scores: &[f64], is_pos: &[bool], max_iter: usize) -> Result<(f64, f64)> {
    const MIN_STEP: f64 = 1e-10;
    const SIGMA: f64 = 1e-12;
    const EPS: f64 = 1e-5;
    let n_pos = is_pos.iter().filter(|&&p| p).count() as f64;
    let n_neg = is_pos.len() as f64 - n_pos;
    let hi = (n_pos + 1.0) / (n_pos + 2.0);
    let lo = 1.0 / (n_neg + 2.0);
    let targets: Vec<f64> = is_pos.iter().map(|&p| if p { hi } else { lo }).collect();

    let objective = |a: f64, b: f64| -> f64 {
        scores
            .iter()
            .zip(&targets)
            .map(|(&s, &t)| {
                let f = s * a + b;
                if f >= 0.0 {
                    t * f + (-f).exp().ln_1p()
                } else {
                    (t - 1.0) * f + f.exp().ln_1p()
                }
            })
            .sum()
    };

    let mut a = 0.0;
    let mut b = ((n_neg + 1.0) / (n_pos + 1.0)).ln();
    let mut fval = objective(a, b);
    for _ in 0..max_iter {
        let (mut h11, mut h22, mut h21, mut g1, mut g2) = (SIGMA, SIGMA, 0.0, 0.0, 0.0);
        for (&s, &t) in scores.iter().zip(&targets) {
            let f = s * a + b;
            let (p, q) = if f >= 0.0 {
                let e = (-f).exp();
                (e / (1.0 + e), 1.0 / (1.0 + e))
            } else {
                let e = f.exp();
                (1.0 / (1.0 + e), e / (1.0 + e))
            };
            let d2 = p * q;
            h11 += s * s * d2;
            h22 += d2;
            h21 += s * d2;
            let d1 = t - p;
            g1 += s * d1;
            g2 += d1;
        }
        if g1.abs() < EPS && g2.abs() < EPS {
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let gd = g1 * da + g2 * db;
        let mut step = 1.0;
        while step >= MIN_STEP {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = objective(na, nb);
            if nf < fval + 1e-4 * step * gd {
                a = na;
                b = nb;
                fval = nf;
                break;
            }
            step /= 2.0;
        }
        if step < MIN_STEP {
            break;
        }
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Numerical("Platt sigmoid fit diverged".into()));
    }
    Ok((a, b))
}

/// `1 / (1 + exp(z))` without overflow.
#[inline]
fn sigmoid_neg<T: Real>(z: T) -> T {
    if z >= T::zero() {
        let e = (-z).exp();
        e / (T::one() + e)
    } else {
        T::one() / (T::one() + z.exp())
    }
}

/// Class probabilities from raw scores: the per-class sigmoids, renormalized
/// to sum to one.
pub fn scores_to_proba<T: Real>(platt: &PlattParams<T>, scores: &[T]) -> Vec<T> {
    let raw: Vec<T> = scores
        .iter()
        .zip(platt.a.iter().zip(&platt.b))
        .map(|(&s, (&a, &b))| sigmoid_neg(a * s + b))
        .collect();
    let total: T = raw.iter().copied().sum();
    if total > T::zero() {
        raw.into_iter().map(|p| p / total).collect()
    } else {
        // every sigmoid underflowed; fall back to the uncalibrated winner
        let mut p = vec![T::zero(); scores.len()];
        p[argmax(scores)] = T::one();
        p
    }
}

pub fn predict_proba<T: Real>(
    model: &LinearSvmModel<T>,
    platt: &PlattParams<T>,
    x: &[T],
) -> Result<Vec<T>> {
    if platt.a.len() != model.classes() || platt.b.len() != model.classes() {
        return Err(Error::arg("Platt parameters do not match the model"));
    }
    Ok(scores_to_proba(platt, &model.scores(x)?))
}

/// Number of folds used to produce held-out scores for sigmoid fitting.
pub const CALIBRATION_FOLDS: usize = 3;

/// Trains the final model on all samples and fits the sigmoids on scores from
/// class-stratified cross-fitting, so no sample is scored by a model that saw it.
pub fn train_calibrated<T: Real, V: AsRef<[T]> + Sync>(
    xs: &[V],
    labels: &[usize],
    classes: usize,
    params: &SvmParams,
    platt_max_iter: usize,
) -> Result<(LinearSvmModel<T>, PlattParams<T>)> {
    let model = svm_train(xs, labels, classes, params)?.model;

    let mut fold = vec![0usize; labels.len()];
    let mut seen = vec![0usize; classes];
    for (i, &l) in labels.iter().enumerate() {
        fold[i] = seen[l] % CALIBRATION_FOLDS;
        seen[l] += 1;
    }
    let mut held_out = vec![Vec::new(); labels.len()];
    for f in 0..CALIBRATION_FOLDS {
        let train: Vec<usize> = (0..labels.len()).filter(|&i| fold[i] != f).collect();
        let train_x: Vec<&[T]> = train.iter().map(|&i| xs[i].as_ref()).collect();
        let train_y: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
        let fold_params = SvmParams {
            seed: params.seed.wrapping_add(f as u64 + 1),
            ..*params
        };
        let fold_model = svm_train(&train_x, &train_y, classes, &fold_params)?.model;
        for i in (0..labels.len()).filter(|&i| fold[i] == f) {
            held_out[i] = fold_model.scores(xs[i].as_ref())?;
        }
    }
    let platt = platt_fit(&held_out, labels, classes, platt_max_iter)?;
    Ok((model, platt))
}

/// Identifies the vocabulary and encoding a model was trained against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabRef {
    pub encoder: String,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "D")]
    pub d: usize,
    pub fv_power: Option<f64>,
    /// SHA-256 of the vocabulary file contents.
    pub digest: String,
}

/// On-disk classifier document. `weights` is flattened row-major (`A x dim`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDoc {
    pub version: u32,
    #[serde(rename = "A")]
    pub a: usize,
    pub dim: usize,
    pub class_names: Vec<String>,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub platt_a: Vec<f64>,
    pub platt_b: Vec<f64>,
    pub vocab_ref: VocabRef,
}

pub const MODEL_VERSION: u32 = 1;

impl ModelDoc {
    pub fn new<T: Real>(
        model: &LinearSvmModel<T>,
        platt: &PlattParams<T>,
        class_names: Vec<String>,
        vocab_ref: VocabRef,
    ) -> Self {
        let widen = |v: &[T]| v.iter().map(|x| x.widen()).collect::<Vec<_>>();
        Self {
            version: MODEL_VERSION,
            a: model.classes(),
            dim: model.dim(),
            class_names,
            weights: model.weights.iter().flatten().map(|x| x.widen()).collect(),
            biases: widen(&model.biases),
            platt_a: widen(&platt.a),
            platt_b: widen(&platt.b),
            vocab_ref,
        }
    }

    pub fn to_model<T: Real>(&self) -> Result<(LinearSvmModel<T>, PlattParams<T>)> {
        if self.version != MODEL_VERSION {
            return Err(Error::format(format!("unsupported model version {}", self.version)));
        }
        let a = self.a;
        if a == 0
            || self.dim == 0
            || self.weights.len() != a * self.dim
            || self.biases.len() != a
            || self.platt_a.len() != a
            || self.platt_b.len() != a
            || self.class_names.len() != a
        {
            return Err(Error::format("model document arrays have inconsistent lengths"));
        }
        let narrow = |v: &[f64]| v.iter().map(|&x| T::lit(x)).collect::<Vec<T>>();
        let model = LinearSvmModel::new(
            self.weights.chunks(self.dim).map(narrow).collect(),
            narrow(&self.biases),
        )?;
        Ok((
            model,
            PlattParams {
                a: narrow(&self.platt_a),
                b: narrow(&self.platt_b),
            },
        ))
    }
}
