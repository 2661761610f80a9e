//! Visual vocabularies: a diagonal Gaussian mixture fitted by EM (for Fisher
//! vectors) and a k-means codebook (for bag-of-words histograms).
//!
//! Both operate on standardized features. The [`Standardizer`] fitted on the
//! training pool travels with the vocabulary and is applied at encode time.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{log_sum_exp, Real};

/// Points per parallel work unit. Fixed so partial sums always cover the same
/// points and reduce in the same order.
const CHUNK: usize = 2048;

const MIN_STD: f64 = 1e-6;

/// Relative variance floor, as a fraction of the pooled per-dimension variance.
pub const VARIANCE_FLOOR: f64 = 1e-3;

/// Per-dimension affine map to zero mean and unit variance.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer<T> {
    pub mean: Vec<T>,
    pub std: Vec<T>,
}

impl<T: Real> Standardizer<T> {
    pub fn fit<V: AsRef<[T]>>(points: &[V]) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| Error::arg("cannot fit a standardizer on no data"))?;
        let d = first.as_ref().len();
        let n = T::from_count(points.len());
        let mut mean = vec![T::zero(); d];
        for p in points {
            let p = p.as_ref();
            if p.len() != d {
                return Err(Error::arg("inconsistent feature dimension"));
            }
            for (m, &x) in mean.iter_mut().zip(p) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![T::zero(); d];
        for p in points {
            for ((v, &x), &m) in var.iter_mut().zip(p.as_ref()).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let min_std = T::lit(MIN_STD);
        let std = var.into_iter().map(|v| (v / n).sqrt().max(min_std)).collect();
        Ok(Self { mean, std })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![T::zero(); dim],
            std: vec![T::one(); dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[T]) -> Vec<T> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(&v, (&m, &s))| (v - m) / s)
            .collect()
    }
}

/// Standardized training vectors pooled over all actions.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPool<T> {
    pub vectors: Vec<Vec<T>>,
    pub per_action_counts: BTreeMap<String, usize>,
    pub standardizer: Standardizer<T>,
}

impl<T: Real> TrainingPool<T> {
    /// Pools raw vectors under a single anonymous action, fitting the
    /// standardizer on them.
    pub fn from_raw<V: AsRef<[T]>>(raw: &[V]) -> Result<Self> {
        let standardizer = Standardizer::fit(raw)?;
        let vectors = raw.iter().map(|v| standardizer.apply(v.as_ref())).collect();
        Ok(Self {
            vectors,
            per_action_counts: BTreeMap::from([(String::new(), raw.len())]),
            standardizer,
        })
    }

    /// Uses already standardized vectors as they are.
    pub fn from_standardized(vectors: Vec<Vec<T>>) -> Result<Self> {
        let dim = vectors
            .first()
            .ok_or_else(|| Error::arg("empty pool"))?
            .len();
        Ok(Self {
            per_action_counts: BTreeMap::from([(String::new(), vectors.len())]),
            vectors,
            standardizer: Standardizer::identity(dim),
        })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.standardizer.dim()
    }

    /// Population variance of each dimension of the (standardized) pool.
    fn dimension_variances(&self) -> Vec<T> {
        let d = self.dim();
        let n = T::from_count(self.len());
        let mut mean = vec![T::zero(); d];
        for p in &self.vectors {
            for (m, &x) in mean.iter_mut().zip(p) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![T::zero(); d];
        for p in &self.vectors {
            for ((v, &x), &m) in var.iter_mut().zip(p).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        var.into_iter().map(|v| v / n).collect()
    }
}

/// Samples up to `cap` vectors per action without replacement, pools them and
/// standardizes the pool.
pub fn build_pool<T: Real, V: AsRef<[T]>>(
    features_by_action: &BTreeMap<String, Vec<V>>,
    cap: usize,
    seed: u64,
) -> Result<TrainingPool<T>> {
    if cap == 0 {
        return Err(Error::arg("pool cap must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut raw: Vec<&[T]> = Vec::new();
    let mut per_action_counts = BTreeMap::new();
    for (action, feats) in features_by_action {
        let take = feats.len().min(cap);
        let mut picked = if take < feats.len() {
            index::sample(&mut rng, feats.len(), take).into_vec()
        } else {
            (0..feats.len()).collect()
        };
        picked.sort_unstable();
        raw.extend(picked.into_iter().map(|i| feats[i].as_ref()));
        per_action_counts.insert(action.clone(), take);
    }
    if raw.is_empty() {
        return Err(Error::arg("no feature vectors to pool"));
    }
    let standardizer = Standardizer::fit(&raw)?;
    let vectors = raw.iter().map(|v| standardizer.apply(v)).collect();
    Ok(TrainingPool {
        vectors,
        per_action_counts,
        standardizer,
    })
}

#[inline]
fn sq_dist<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

/// Nearest center with ties going to the lowest index.
#[inline]
pub(crate) fn nearest<T: Real>(centers: &[Vec<T>], x: &[T]) -> (usize, T) {
    let mut best = (0, sq_dist(&centers[0], x));
    for (k, c) in centers.iter().enumerate().skip(1) {
        let d = sq_dist(c, x);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

/// Hard-assignment codebook.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook<T> {
    pub centers: Vec<Vec<T>>,
    pub standardizer: Standardizer<T>,
}

impl<T: Real> Codebook<T> {
    pub fn k(&self) -> usize {
        self.centers.len()
    }

    pub fn dim(&self) -> usize {
        self.standardizer.dim()
    }
}

/// Result of a k-means run.
#[derive(Debug, Clone)]
pub struct KMeansFit<T> {
    pub codebook: Codebook<T>,
    pub assignments: Vec<usize>,
    /// Sum of squared distances after each assignment step.
    pub inertia: Vec<T>,
}

pub const KMEANS_MAX_ITER: usize = 50;

/// k-means++ seeding followed by Lloyd iterations until the assignment stops
/// changing (or [`KMEANS_MAX_ITER`] rounds).
pub fn kmeans_fit<T: Real>(pool: &TrainingPool<T>, k: usize, seed: u64) -> Result<KMeansFit<T>> {
    if k == 0 {
        return Err(Error::arg("K must be at least 1"));
    }
    if pool.len() < k {
        return Err(Error::arg(format!(
            "pool of {} vectors cannot support K = {k}",
            pool.len()
        )));
    }
    let points = &pool.vectors;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = plus_plus_seeds(points, k, &mut rng)?;

    let assign = |centers: &[Vec<T>]| -> Vec<(usize, T)> {
        points.par_iter().map(|p| nearest(centers, p)).collect()
    };
    let mut inertia = Vec::new();
    let mut current = assign(&centers);
    inertia.push(current.iter().map(|a| a.1).sum());
    for _ in 0..KMEANS_MAX_ITER {
        update_centers(points, &current, &mut centers);
        let next = assign(&centers);
        let stable = next.iter().zip(&current).all(|(a, b)| a.0 == b.0);
        inertia.push(next.iter().map(|a| a.1).sum());
        current = next;
        if stable {
            break;
        }
    }
    Ok(KMeansFit {
        codebook: Codebook {
            centers,
            standardizer: pool.standardizer.clone(),
        },
        assignments: current.into_iter().map(|a| a.0).collect(),
        inertia,
    })
}

fn plus_plus_seeds<T: Real>(points: &[Vec<T>], k: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<T>>> {
    let mut centers = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<T> = points.par_iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().map(|d| d.widen()).sum();
        if !(total > 0.0) {
            return Err(Error::arg(format!(
                "fewer than K = {k} distinct points in pool"
            )));
        }
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut chosen = None;
        for (i, d) in d2.iter().enumerate() {
            if *d > T::zero() {
                acc += d.widen();
                chosen = Some(i);
                if acc > target {
                    break;
                }
            }
        }
        let c = points[chosen.expect("positive total mass")].clone();
        d2.par_iter_mut()
            .zip(points.par_iter())
            .for_each(|(d, p)| *d = d.min(sq_dist(p, &c)));
        centers.push(c);
    }
    Ok(centers)
}

/// Moves each center to the mean of its members; an empty cluster takes the
/// point farthest from its current center.
fn update_centers<T: Real>(points: &[Vec<T>], assign: &[(usize, T)], centers: &mut [Vec<T>]) {
    let d = points[0].len();
    let k = centers.len();
    let mut sums = vec![vec![T::zero(); d]; k];
    let mut counts = vec![0usize; k];
    for (p, &(c, _)) in points.iter().zip(assign) {
        counts[c] += 1;
        for (s, &x) in sums[c].iter_mut().zip(p) {
            *s += x;
        }
    }
    let mut taken = vec![false; points.len()];
    for c in 0..k {
        if counts[c] > 0 {
            let n = T::from_count(counts[c]);
            centers[c] = sums[c].iter().map(|&s| s / n).collect();
        } else {
            let far = assign
                .iter()
                .enumerate()
                .filter(|(i, _)| !taken[*i])
                .fold(None::<(usize, T)>, |best, (i, a)| match best {
                    Some((_, bd)) if bd >= a.1 => best,
                    _ => Some((i, a.1)),
                })
                .map(|(i, _)| i)
                .unwrap_or(0);
            taken[far] = true;
            centers[c] = points[far].clone();
        }
    }
}

/// Diagonal-covariance Gaussian mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmVocabulary<T> {
    pub weights: Vec<T>,
    pub means: Vec<Vec<T>>,
    pub vars: Vec<Vec<T>>,
    pub standardizer: Standardizer<T>,
}

impl<T: Real> GmmVocabulary<T> {
    /// Builds a mixture from explicit parameters (features already standardized).
    pub fn new(weights: Vec<T>, means: Vec<Vec<T>>, vars: Vec<Vec<T>>) -> Result<Self> {
        let dim = means.first().map(Vec::len).unwrap_or(0);
        Self::with_standardizer(weights, means, vars, Standardizer::identity(dim))
    }

    pub fn with_standardizer(
        weights: Vec<T>,
        means: Vec<Vec<T>>,
        vars: Vec<Vec<T>>,
        standardizer: Standardizer<T>,
    ) -> Result<Self> {
        let k = weights.len();
        if k == 0 || means.len() != k || vars.len() != k {
            return Err(Error::arg("mixture parameter counts disagree"));
        }
        let d = standardizer.dim();
        if d == 0 || means.iter().chain(&vars).any(|v| v.len() != d) {
            return Err(Error::arg("mixture parameter dimensions disagree"));
        }
        if weights.iter().any(|&w| !(w > T::zero())) {
            return Err(Error::arg("mixture weights must be positive"));
        }
        let total: T = weights.iter().copied().sum();
        if (total - T::one()).abs() > T::lit(1e-6) {
            return Err(Error::arg(format!("mixture weights sum to {total}")));
        }
        if vars.iter().flatten().any(|&v| !(v > T::zero() && v.is_finite())) {
            return Err(Error::arg("variances must be positive and finite"));
        }
        Ok(Self {
            weights,
            means,
            vars,
            standardizer,
        })
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.standardizer.dim()
    }

    pub(crate) fn log_norms(&self) -> Vec<T> {
        let ln_2pi = T::lit((2.0 * std::f64::consts::PI).ln());
        let half = T::lit(0.5);
        self.weights
            .iter()
            .zip(&self.vars)
            .map(|(&w, var)| w.ln() - half * var.iter().map(|&v| ln_2pi + v.ln()).sum::<T>())
            .collect()
    }

    /// `ln(w_k N(x | mu_k, sigma_k))` for every component, written into `out`.
    pub(crate) fn log_joint_into(&self, log_norms: &[T], x: &[T], out: &mut [T]) {
        let half = T::lit(0.5);
        for (k, o) in out.iter_mut().enumerate() {
            let maha: T = x
                .iter()
                .zip(&self.means[k])
                .zip(&self.vars[k])
                .map(|((&xi, &m), &v)| (xi - m) * (xi - m) / v)
                .sum();
            *o = log_norms[k] - half * maha;
        }
    }

    /// Component responsibilities for a standardized feature.
    pub fn posterior(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.dim() {
            return Err(Error::arg(format!(
                "feature of dimension {} for a {}-dimensional mixture",
                x.len(),
                self.dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("non-finite feature"));
        }
        let mut lj = vec![T::zero(); self.k()];
        self.log_joint_into(&self.log_norms(), x, &mut lj);
        Ok(normalize_log(&lj))
    }

    /// Average log-likelihood of standardized points.
    pub fn mean_log_likelihood<V: AsRef<[T]> + Sync>(&self, points: &[V]) -> T {
        let norms = self.log_norms();
        let partial: Vec<T> = points
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut lj = vec![T::zero(); self.k()];
                chunk
                    .iter()
                    .map(|p| {
                        self.log_joint_into(&norms, p.as_ref(), &mut lj);
                        log_sum_exp(&lj)
                    })
                    .sum()
            })
            .collect();
        partial.into_iter().sum::<T>() / T::from_count(points.len())
    }
}

/// Exponentiates and normalizes log-weights.
pub(crate) fn normalize_log<T: Real>(lj: &[T]) -> Vec<T> {
    let lse = log_sum_exp(lj);
    let mut g: Vec<T> = lj.iter().map(|&l| (l - lse).exp()).collect();
    let s: T = g.iter().copied().sum();
    g.iter_mut().for_each(|v| *v /= s);
    g
}

/// Responsibility-weighted sufficient statistics of a block of points.
struct EmStats<T> {
    log_lik: T,
    nk: Vec<T>,
    sx: Vec<Vec<T>>,
    sxx: Vec<Vec<T>>,
}

impl<T: Real> EmStats<T> {
    fn zeros(k: usize, d: usize) -> Self {
        Self {
            log_lik: T::zero(),
            nk: vec![T::zero(); k],
            sx: vec![vec![T::zero(); d]; k],
            sxx: vec![vec![T::zero(); d]; k],
        }
    }

    fn merge(&mut self, o: &Self) {
        self.log_lik += o.log_lik;
        for k in 0..self.nk.len() {
            self.nk[k] += o.nk[k];
            for d in 0..self.sx[k].len() {
                self.sx[k][d] += o.sx[k][d];
                self.sxx[k][d] += o.sxx[k][d];
            }
        }
    }
}

/// EM stopping rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmParams {
    pub max_iter: usize,
    /// Stop once the average log-likelihood improves by less than this
    /// fraction of its magnitude.
    pub rel_tol: f64,
}

impl Default for EmParams {
    fn default() -> Self {
        Self {
            max_iter: 100,
            rel_tol: 1e-5,
        }
    }
}

/// A fitted mixture plus its training trace.
#[derive(Debug, Clone)]
pub struct GmmFit<T> {
    pub vocab: GmmVocabulary<T>,
    /// Average log-likelihood of the pool under the parameters of each
    /// E-step, in order.
    pub log_likelihood: Vec<T>,
    pub converged: bool,
}

/// Fits a `k`-component diagonal GMM to the pool by EM, initialized from
/// k-means.
pub fn gmm_fit<T: Real>(
    pool: &TrainingPool<T>,
    k: usize,
    seed: u64,
    params: EmParams,
) -> Result<GmmFit<T>> {
    if k == 0 {
        return Err(Error::arg("K must be at least 1"));
    }
    if pool.len() < 10 * k {
        return Err(Error::arg(format!(
            "pool of {} vectors is too small for K = {k} (need {})",
            pool.len(),
            10 * k
        )));
    }
    let d = pool.dim();
    let floor: Vec<T> = pool
        .dimension_variances()
        .into_iter()
        .map(|v| (v * T::lit(VARIANCE_FLOOR)).max(T::lit(1e-12)))
        .collect();

    let km = kmeans_fit(pool, k, seed)?;
    let mut counts = vec![0usize; k];
    let mut sq = vec![vec![T::zero(); d]; k];
    for (p, &c) in pool.vectors.iter().zip(&km.assignments) {
        counts[c] += 1;
        for ((s, &x), &m) in sq[c].iter_mut().zip(p).zip(&km.codebook.centers[c]) {
            *s += (x - m) * (x - m);
        }
    }
    let n = T::from_count(pool.len());
    let sizes: Vec<T> = counts.iter().map(|&c| T::from_count(c.max(1))).collect();
    let total: T = sizes.iter().copied().sum();
    let mut vocab = GmmVocabulary {
        weights: sizes.iter().map(|&s| s / total).collect(),
        means: km.codebook.centers.clone(),
        vars: sq
            .iter()
            .zip(&sizes)
            .map(|(s, &c)| s.iter().zip(&floor).map(|(&v, &f)| (v / c).max(f)).collect())
            .collect(),
        standardizer: pool.standardizer.clone(),
    };

    let mut log_likelihood: Vec<T> = Vec::new();
    let mut converged = false;
    for _ in 0..params.max_iter {
        let stats = e_step(&vocab, &pool.vectors);
        let ll = stats.log_lik / n;
        if !ll.is_finite() {
            return Err(Error::Numerical(format!("log-likelihood became {ll}")));
        }
        if let Some(&prev) = log_likelihood.last() {
            log_likelihood.push(ll);
            if ll - prev <= T::lit(params.rel_tol) * prev.abs() {
                converged = true;
                break;
            }
        } else {
            log_likelihood.push(ll);
        }
        m_step(&mut vocab, &stats, n, &floor);
    }
    Ok(GmmFit {
        vocab,
        log_likelihood,
        converged,
    })
}

fn e_step<T: Real>(vocab: &GmmVocabulary<T>, points: &[Vec<T>]) -> EmStats<T> {
    let (k, d) = (vocab.k(), vocab.dim());
    let norms = vocab.log_norms();
    let partials: Vec<EmStats<T>> = points
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut st = EmStats::zeros(k, d);
            let mut lj = vec![T::zero(); k];
            for x in chunk {
                vocab.log_joint_into(&norms, x, &mut lj);
                let lse = log_sum_exp(&lj);
                st.log_lik += lse;
                for c in 0..k {
                    let g = (lj[c] - lse).exp();
                    st.nk[c] += g;
                    for (j, &xi) in x.iter().enumerate() {
                        st.sx[c][j] += g * xi;
                        st.sxx[c][j] += g * xi * xi;
                    }
                }
            }
            st
        })
        .collect();
    let mut total = EmStats::zeros(k, d);
    for p in &partials {
        total.merge(p);
    }
    total
}

fn m_step<T: Real>(vocab: &mut GmmVocabulary<T>, st: &EmStats<T>, n: T, floor: &[T]) {
    let k = vocab.k();
    let tiny = n * T::lit(1e-10);
    for c in 0..k {
        let nk = st.nk[c];
        if nk <= tiny {
            // starved component: keep its shape, give it negligible mass
            vocab.weights[c] = tiny / n;
            continue;
        }
        vocab.weights[c] = nk / n;
        for j in 0..vocab.dim() {
            let m = st.sx[c][j] / nk;
            let v = st.sxx[c][j] / nk - m * m;
            vocab.means[c][j] = m;
            vocab.vars[c][j] = v.max(floor[j]);
        }
    }
    let total: T = vocab.weights.iter().copied().sum();
    vocab.weights.iter_mut().for_each(|w| *w /= total);
}

/// On-disk vocabulary document. Matrices are flattened row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum VocabDoc {
    Gmm {
        version: u32,
        #[serde(rename = "K")]
        k: usize,
        #[serde(rename = "D")]
        d: usize,
        weights: Vec<f64>,
        means: Vec<f64>,
        vars: Vec<f64>,
        standardizer: StandardizerDoc,
    },
    Codebook {
        version: u32,
        #[serde(rename = "K")]
        k: usize,
        #[serde(rename = "D")]
        d: usize,
        centers: Vec<f64>,
        standardizer: StandardizerDoc,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizerDoc {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub const VOCAB_VERSION: u32 = 1;

/// Either kind of vocabulary, as loaded from disk.
#[derive(Debug, Clone, PartialEq)]
pub enum Vocabulary<T> {
    Gmm(GmmVocabulary<T>),
    Codebook(Codebook<T>),
}

impl<T: Real> Vocabulary<T> {
    pub fn k(&self) -> usize {
        match self {
            Vocabulary::Gmm(g) => g.k(),
            Vocabulary::Codebook(c) => c.k(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Vocabulary::Gmm(g) => g.dim(),
            Vocabulary::Codebook(c) => c.dim(),
        }
    }

    pub fn standardizer(&self) -> &Standardizer<T> {
        match self {
            Vocabulary::Gmm(g) => &g.standardizer,
            Vocabulary::Codebook(c) => &c.standardizer,
        }
    }

    pub fn to_doc(&self) -> VocabDoc {
        let flat = |m: &[Vec<T>]| m.iter().flatten().map(|v| v.widen()).collect::<Vec<_>>();
        let std_doc = |s: &Standardizer<T>| StandardizerDoc {
            mean: s.mean.iter().map(|v| v.widen()).collect(),
            std: s.std.iter().map(|v| v.widen()).collect(),
        };
        match self {
            Vocabulary::Gmm(g) => VocabDoc::Gmm {
                version: VOCAB_VERSION,
                k: g.k(),
                d: g.dim(),
                weights: g.weights.iter().map(|v| v.widen()).collect(),
                means: flat(&g.means),
                vars: flat(&g.vars),
                standardizer: std_doc(&g.standardizer),
            },
            Vocabulary::Codebook(c) => VocabDoc::Codebook {
                version: VOCAB_VERSION,
                k: c.k(),
                d: c.dim(),
                centers: flat(&c.centers),
                standardizer: std_doc(&c.standardizer),
            },
        }
    }

    pub fn from_doc(doc: &VocabDoc) -> Result<Self> {
        let unflat = |v: &[f64], k: usize, d: usize, what: &str| -> Result<Vec<Vec<T>>> {
            if v.len() != k * d || d == 0 {
                return Err(Error::format(format!("vocabulary `{what}` has wrong length")));
            }
            Ok(v.chunks(d).map(|r| r.iter().map(|&x| T::lit(x)).collect()).collect())
        };
        let std_of = |s: &StandardizerDoc, d: usize| -> Result<Standardizer<T>> {
            if s.mean.len() != d || s.std.len() != d {
                return Err(Error::format("standardizer dimension mismatch"));
            }
            Ok(Standardizer {
                mean: s.mean.iter().map(|&x| T::lit(x)).collect(),
                std: s.std.iter().map(|&x| T::lit(x)).collect(),
            })
        };
        match doc {
            VocabDoc::Gmm {
                version,
                k,
                d,
                weights,
                means,
                vars,
                standardizer,
            } => {
                check_version(*version)?;
                if weights.len() != *k {
                    return Err(Error::format("vocabulary `weights` has wrong length"));
                }
                GmmVocabulary::with_standardizer(
                    weights.iter().map(|&w| T::lit(w)).collect(),
                    unflat(means, *k, *d, "means")?,
                    unflat(vars, *k, *d, "vars")?,
                    std_of(standardizer, *d)?,
                )
                .map(Vocabulary::Gmm)
                .map_err(|e| Error::format(e.to_string()))
            }
            VocabDoc::Codebook {
                version,
                k,
                d,
                centers,
                standardizer,
            } => {
                check_version(*version)?;
                if *k == 0 {
                    return Err(Error::format("empty codebook"));
                }
                Ok(Vocabulary::Codebook(Codebook {
                    centers: unflat(centers, *k, *d, "centers")?,
                    standardizer: std_of(standardizer, *d)?,
                }))
            }
        }
    }
}

fn check_version(v: u32) -> Result<()> {
    if v != VOCAB_VERSION {
        return Err(Error::format(format!("unsupported vocabulary version {v}")));
    }
    Ok(())
}
