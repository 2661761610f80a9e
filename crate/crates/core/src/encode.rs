//! Window encodings: Fisher vectors over a [`GmmVocabulary`] and
//! bag-of-words histograms over a [`Codebook`].
//!
//! Both encodings are averages of per-feature terms, so they are computed from
//! additive accumulators. A window's encoding is the merge of its frames'
//! accumulators, which lets overlapping windows share the per-frame work.

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::vocab::{nearest, normalize_log, Codebook, GmmVocabulary, Vocabulary};

/// Gradient of the window log-likelihood with respect to the component means
/// and standard deviations, laid out `[G_mu_1 .. G_mu_K, G_sigma_1 .. G_sigma_K]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherVector<T> {
    pub values: Vec<T>,
    pub normalized: bool,
}

/// L1-normalized visual word frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct BowHistogram<T> {
    pub values: Vec<T>,
}

/// Unscaled Fisher sums: for each component `k` and dimension `d`,
/// `first = sum gamma (x - mu) / sigma` and
/// `second = sum gamma ((x - mu)^2 / sigma^2 - 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherAccumulator<T> {
    count: usize,
    first: Vec<T>,
    second: Vec<T>,
}

impl<T: Real> FisherAccumulator<T> {
    pub fn new(gmm: &GmmVocabulary<T>) -> Self {
        let len = gmm.k() * gmm.dim();
        Self {
            count: 0,
            first: vec![T::zero(); len],
            second: vec![T::zero(); len],
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Adds standardized features.
    pub fn add_all<V: AsRef<[T]>>(&mut self, gmm: &GmmVocabulary<T>, xs: &[V]) -> Result<()> {
        let norms = gmm.log_norms();
        let inv_sd: Vec<Vec<T>> = gmm
            .vars
            .iter()
            .map(|v| v.iter().map(|&s| T::one() / s.sqrt()).collect())
            .collect();
        let d = gmm.dim();
        let mut lj = vec![T::zero(); gmm.k()];
        for x in xs {
            let x = x.as_ref();
            if x.len() != d {
                return Err(Error::arg(format!(
                    "feature of dimension {} for a {d}-dimensional vocabulary",
                    x.len()
                )));
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::arg("non-finite feature"));
            }
            gmm.log_joint_into(&norms, x, &mut lj);
            let gamma = normalize_log(&lj);
            for (k, &g) in gamma.iter().enumerate() {
                if g == T::zero() {
                    continue;
                }
                let base = k * d;
                for j in 0..d {
                    let z = (x[j] - gmm.means[k][j]) * inv_sd[k][j];
                    self.first[base + j] += g * z;
                    self.second[base + j] += g * (z * z - T::one());
                }
            }
            self.count += 1;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &Self) {
        self.count += other.count;
        for (a, &b) in self.first.iter_mut().zip(&other.first) {
            *a += b;
        }
        for (a, &b) in self.second.iter_mut().zip(&other.second) {
            *a += b;
        }
    }

    /// Scales the sums into an unnormalized Fisher vector.
    pub fn finish(&self, gmm: &GmmVocabulary<T>) -> Result<FisherVector<T>> {
        if self.count == 0 {
            return Err(Error::EmptyWindow);
        }
        let n = T::from_count(self.count);
        let d = gmm.dim();
        let two = T::lit(2.0);
        let mut values = Vec::with_capacity(2 * self.first.len());
        for (k, &w) in gmm.weights.iter().enumerate() {
            let scale = T::one() / (n * w.sqrt());
            values.extend(self.first[k * d..(k + 1) * d].iter().map(|&s| s * scale));
        }
        for (k, &w) in gmm.weights.iter().enumerate() {
            let scale = T::one() / (n * (two * w).sqrt());
            values.extend(self.second[k * d..(k + 1) * d].iter().map(|&s| s * scale));
        }
        Ok(FisherVector {
            values,
            normalized: false,
        })
    }
}

/// Fisher vector of a set of standardized features (weight terms omitted).
pub fn fisher_encode<T: Real, V: AsRef<[T]>>(
    gmm: &GmmVocabulary<T>,
    xs: &[V],
) -> Result<FisherVector<T>> {
    let mut acc = FisherAccumulator::new(gmm);
    acc.add_all(gmm, xs)?;
    acc.finish(gmm)
}

/// Signed power normalization `sign(z) |z|^alpha` followed by L2
/// normalization. The zero vector stays zero.
pub fn normalize_fv<T: Real>(fv: &FisherVector<T>, alpha: f64) -> Result<FisherVector<T>> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::arg(format!("power {alpha} outside (0, 1]")));
    }
    if fv.normalized {
        return Err(Error::arg("Fisher vector is already normalized"));
    }
    let a = T::lit(alpha);
    let mut values: Vec<T> = fv
        .values
        .iter()
        .map(|&z| if alpha == 1.0 { z } else { z.signum() * z.abs().powf(a) })
        .map(|z| if z == T::zero() { T::zero() } else { z })
        .collect();
    let norm = values.iter().map(|&z| z * z).sum::<T>().sqrt();
    if norm > T::zero() {
        values.iter_mut().for_each(|z| *z /= norm);
    }
    Ok(FisherVector {
        values,
        normalized: true,
    })
}

/// Visual word counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BowAccumulator {
    counts: Vec<usize>,
}

impl BowAccumulator {
    pub fn new(k: usize) -> Self {
        Self { counts: vec![0; k] }
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn count(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn add_all<T: Real, V: AsRef<[T]>>(&mut self, codebook: &Codebook<T>, xs: &[V]) -> Result<()> {
        for x in xs {
            let x = x.as_ref();
            if x.len() != codebook.dim() {
                return Err(Error::arg("feature dimension does not match codebook"));
            }
            self.counts[nearest(&codebook.centers, x).0] += 1;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &Self) {
        for (a, &b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn finish<T: Real>(&self) -> Result<BowHistogram<T>> {
        let n = self.count();
        if n == 0 {
            return Err(Error::EmptyWindow);
        }
        let n = T::from_count(n);
        Ok(BowHistogram {
            values: self.counts.iter().map(|&c| T::from_count(c) / n).collect(),
        })
    }
}

/// Hard-assignment histogram of standardized features, ties going to the
/// lowest center index.
pub fn bow_encode<T: Real, V: AsRef<[T]>>(codebook: &Codebook<T>, xs: &[V]) -> Result<BowHistogram<T>> {
    let mut acc = BowAccumulator::new(codebook.k());
    acc.add_all(codebook, xs)?;
    acc.finish()
}

/// Additive per-frame (or per-window) encoding state.
#[derive(Debug, Clone, PartialEq)]
pub enum Accumulator<T> {
    Fisher(FisherAccumulator<T>),
    Bow(BowAccumulator),
}

impl<T: Real> Accumulator<T> {
    pub fn count(&self) -> usize {
        match self {
            Accumulator::Fisher(a) => a.count(),
            Accumulator::Bow(a) => a.count(),
        }
    }

    pub fn merge(&mut self, other: &Self) {
        match (self, other) {
            (Accumulator::Fisher(a), Accumulator::Fisher(b)) => a.merge(b),
            (Accumulator::Bow(a), Accumulator::Bow(b)) => a.merge(b),
            _ => panic!("merging accumulators of different encoders"),
        }
    }
}

/// Turns raw (unstandardized) frame features into window vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder<T> {
    vocab: Vocabulary<T>,
    /// Power for Fisher vector normalization; `None` leaves vectors raw.
    fv_power: Option<f64>,
}

impl<T: Real> Encoder<T> {
    pub fn new(vocab: Vocabulary<T>, fv_power: Option<f64>) -> Result<Self> {
        if let Some(a) = fv_power {
            if !(a > 0.0 && a <= 1.0) {
                return Err(Error::arg(format!("power {a} outside (0, 1]")));
            }
        }
        Ok(Self { vocab, fv_power })
    }

    pub fn vocab(&self) -> &Vocabulary<T> {
        &self.vocab
    }

    pub fn fv_power(&self) -> Option<f64> {
        self.fv_power
    }

    /// Length of the encoded vector: `2 D K` for Fisher vectors, `K` for BoW.
    pub fn output_dim(&self) -> usize {
        match &self.vocab {
            Vocabulary::Gmm(g) => 2 * g.dim() * g.k(),
            Vocabulary::Codebook(c) => c.k(),
        }
    }

    pub fn empty(&self) -> Accumulator<T> {
        match &self.vocab {
            Vocabulary::Gmm(g) => Accumulator::Fisher(FisherAccumulator::new(g)),
            Vocabulary::Codebook(c) => Accumulator::Bow(BowAccumulator::new(c.k())),
        }
    }

    /// Standardizes and accumulates raw features.
    pub fn accumulate<V: AsRef<[T]>>(&self, raw: &[V]) -> Result<Accumulator<T>> {
        let std = self.vocab.standardizer();
        let xs: Vec<Vec<T>> = raw
            .iter()
            .map(|r| {
                let r = r.as_ref();
                if r.len() != std.dim() {
                    return Err(Error::arg(format!(
                        "raw feature of dimension {} for a {}-dimensional vocabulary",
                        r.len(),
                        std.dim()
                    )));
                }
                Ok(std.apply(r))
            })
            .collect::<Result<_>>()?;
        let mut acc = self.empty();
        match (&self.vocab, &mut acc) {
            (Vocabulary::Gmm(g), Accumulator::Fisher(a)) => a.add_all(g, &xs)?,
            (Vocabulary::Codebook(c), Accumulator::Bow(a)) => a.add_all(c, &xs)?,
            _ => unreachable!(),
        }
        Ok(acc)
    }

    /// Final window vector, or `EmptyWindow` when no features were pooled.
    pub fn finish(&self, acc: &Accumulator<T>) -> Result<Vec<T>> {
        match (&self.vocab, acc) {
            (Vocabulary::Gmm(g), Accumulator::Fisher(a)) => {
                let fv = a.finish(g)?;
                Ok(match self.fv_power {
                    Some(p) => normalize_fv(&fv, p)?.values,
                    None => fv.values,
                })
            }
            (Vocabulary::Codebook(_), Accumulator::Bow(a)) => Ok(a.finish()?.values),
            _ => Err(Error::arg("accumulator does not belong to this encoder")),
        }
    }

    pub fn encode<V: AsRef<[T]>>(&self, raw: &[V]) -> Result<Vec<T>> {
        self.finish(&self.accumulate(raw)?)
    }
}
