//! Comparison systems: a frequency-matched random baseline, an ablation
//! without the attribute layer, and a directly supervised attribute
//! classifier combined with the symmetric difference.

use crate::dataset::{symmetric_difference, AttributeVector, Concept, PairTriple};
use crate::error::{Error, Result};
use crate::matrix::{dot, sigmoid_scalar, Matrix};
use crate::model::{DanDims, PairExample, PairModel};
use crate::params::{gaussian_block, ModelKind, Parameters};
use crate::predict::{argmax, AttributePredictor, DiscriminativePredictor, PairView, Polarity, Speaker, Utterance};
use crate::rng::Rng;
use crate::scalar::Scalar;

/// Independent per-attribute coin flips at the training-set frequencies.
#[derive(Clone, Debug, PartialEq)]
pub struct RandomBaseline {
    pub probs: Vec<f64>,
}

impl RandomBaseline {
    /// Fraction of training pairs in which each attribute is discriminative.
    pub fn fit(triples: &[PairTriple]) -> Result<Self> {
        let first = triples.first().ok_or(Error::Empty("random baseline: no training pairs"))?;
        Self::from_vectors(first.gold.len(), triples.iter().map(|t| &t.gold))
    }

    /// Fraction of concepts holding each attribute (for attribute prediction).
    pub fn fit_attributes(concepts: &[&Concept]) -> Result<Self> {
        let first = concepts.first().ok_or(Error::Empty("random baseline: no concepts"))?;
        Self::from_vectors(first.attributes.len(), concepts.iter().map(|c| &c.attributes))
    }

    fn from_vectors<'a>(n: usize, vectors: impl Iterator<Item = &'a AttributeVector>) -> Result<Self> {
        let mut counts = vec![0usize; n];
        let mut total = 0usize;
        for v in vectors {
            if v.len() != n {
                return Err(Error::Length {
                    op: "random baseline",
                    left: n,
                    right: v.len(),
                });
            }
            for (c, &b) in counts.iter_mut().zip(v.bits()) {
                *c += b as usize;
            }
            total += 1;
        }
        Ok(RandomBaseline {
            probs: counts.into_iter().map(|c| c as f64 / total as f64).collect(),
        })
    }

    /// Each attribute included independently with its fitted probability.
    pub fn sample(&self, rng: &mut Rng) -> Vec<usize> {
        self.probs
            .iter()
            .enumerate()
            .filter_map(|(i, &p)| rng.bernoulli(p).then_some(i))
            .collect()
    }

    pub fn expected_size(&self) -> f64 {
        self.probs.iter().sum()
    }
}

/// Hidden size giving the ablation roughly DAN's parameter count.
pub fn ablation_hidden_for(dan: DanDims) -> usize {
    let target = dan.parameter_count() as f64 - dan.attributes as f64;
    let per_unit = (2 * dan.input + 1 + dan.attributes) as f64;
    ((target / per_unit).round() as usize).max(1)
}

/// Hidden size giving the classifier roughly the parameter count of DAN's attribute projection.
pub fn classifier_hidden_for(dan: DanDims) -> usize {
    let target = (dan.input * dan.attributes) as f64;
    let per_unit = (dan.input + 1 + dan.attributes) as f64;
    ((target / per_unit).round() as usize).max(1)
}

/// Two-layer map from the concatenated visual vectors straight to
/// discriminativeness: `W2ᵀ·σ(W1ᵀ[v_r; v_c] + b1) + b2`.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationParams<T> {
    pub input: usize,
    pub hidden: usize,
    pub attributes: usize,
    /// 2·input × hidden.
    pub w1: Matrix<T>,
    pub b1: Matrix<T>,
    /// hidden × attributes.
    pub w2: Matrix<T>,
    pub b2: Matrix<T>,
}

impl<T: Scalar> AblationParams<T> {
    pub fn init(input: usize, hidden: usize, attributes: usize, rng: &mut Rng) -> Result<Self> {
        if input == 0 || hidden == 0 || attributes == 0 {
            return Err(Error::Parameter("ablation dimensions must be positive".into()));
        }
        Ok(AblationParams {
            input,
            hidden,
            attributes,
            w1: gaussian_block(rng, 2 * input, hidden, 2 * input)?,
            b1: Matrix::zeros(1, hidden),
            w2: gaussian_block(rng, hidden, attributes, hidden)?,
            b2: Matrix::zeros(1, attributes),
        })
    }

    fn hidden_layer(&self, v_r: &[T], v_c: &[T]) -> Result<Vec<T>> {
        for v in [v_r, v_c] {
            if v.len() != self.input {
                return Err(Error::Length {
                    op: "ablation input",
                    left: self.input,
                    right: v.len(),
                });
            }
        }
        let mut pre = self.b1.as_slice().to_vec();
        for (i, &x) in v_r.iter().chain(v_c).enumerate() {
            if x == T::zero() {
                continue;
            }
            for (p, &w) in pre.iter_mut().zip(self.w1.row(i)) {
                *p += w * x;
            }
        }
        Ok(pre.into_iter().map(sigmoid_scalar).collect())
    }

    pub fn forward(&self, v_r: &[T], v_c: &[T]) -> Result<Vec<T>> {
        let hid = self.hidden_layer(v_r, v_c)?;
        let mut out = self.w2.t_matvec(&hid)?;
        for (o, &b) in out.iter_mut().zip(self.b2.as_slice()) {
            *o += b;
        }
        Ok(out)
    }
}

impl<T: Scalar> Parameters<T> for AblationParams<T> {
    fn kind(&self) -> ModelKind {
        ModelKind::Ablation
    }

    fn blocks(&self) -> Vec<(&'static str, &Matrix<T>)> {
        vec![("w1", &self.w1), ("b1", &self.b1), ("w2", &self.w2), ("b2", &self.b2)]
    }

    fn blocks_mut(&mut self) -> Vec<(&'static str, &mut Matrix<T>)> {
        vec![
            ("w1", &mut self.w1),
            ("b1", &mut self.b1),
            ("w2", &mut self.w2),
            ("b2", &mut self.b2),
        ]
    }

    fn dims(&self) -> Vec<u32> {
        vec![self.input as u32, self.attributes as u32, self.hidden as u32]
    }
}

impl<T: Scalar> PairModel<T> for AblationParams<T> {
    fn scores(&self, referent: &[T], context: &[T]) -> Result<Vec<T>> {
        self.forward(referent, context)
    }

    fn loss_and_gradient(&self, batch: &[PairExample<'_, T>]) -> Result<(T, Self)> {
        if batch.is_empty() {
            return Err(Error::Empty("batch"));
        }
        let n_attr = self.attributes;
        let scale = T::of(2.0 / (batch.len() * n_attr) as f64);
        let mut grad = self.zeros_like();
        let mut total = T::zero();
        let mut delta_out = vec![T::zero(); n_attr];
        for ex in batch {
            if ex.gold.len() != n_attr {
                return Err(Error::Length {
                    op: "ablation gold",
                    left: n_attr,
                    right: ex.gold.len(),
                });
            }
            let hid = self.hidden_layer(ex.referent, ex.context)?;
            let out = self.w2.t_matvec(&hid)?;
            let mut sq = T::zero();
            for k in 0..n_attr {
                let g = if ex.gold.get(k) { T::one() } else { T::zero() };
                let err = out[k] + self.b2.as_slice()[k] - g;
                sq += err * err;
                delta_out[k] = scale * err;
            }
            total += sq / T::of(n_attr as f64);

            grad.w2.add_outer(&hid, &delta_out, T::one());
            for (gb, &d) in grad.b2.as_mut_slice().iter_mut().zip(&delta_out) {
                *gb += d;
            }
            let delta_hid: Vec<T> = (0..self.hidden)
                .map(|j| dot(self.w2.row(j), &delta_out) * hid[j] * (T::one() - hid[j]))
                .collect();
            let x: Vec<T> = ex.referent.iter().chain(ex.context).copied().collect();
            grad.w1.add_outer(&x, &delta_hid, T::one());
            for (gb, &d) in grad.b1.as_mut_slice().iter_mut().zip(&delta_hid) {
                *gb += d;
            }
        }
        Ok((total / T::of(batch.len() as f64), grad))
    }
}

impl<T: Scalar> DiscriminativePredictor<T> for AblationParams<T> {
    fn n_attributes(&self) -> usize {
        self.attributes
    }

    fn discriminative_scores(&self, pair: &PairView<'_, T>) -> Result<Vec<T>> {
        self.forward(pair.v_r, pair.v_c)
    }
}

impl<T: Scalar> Speaker<T> for AblationParams<T> {
    /// Top-scoring attribute; the ablation has no per-object attributes, so no polarity.
    fn speak(&self, pair: &PairView<'_, T>) -> Result<Utterance> {
        let d = self.forward(pair.v_r, pair.v_c)?;
        Ok(Utterance {
            attribute: argmax(&d).ok_or(Error::Empty("attribute set"))?,
            polarity: None,
        })
    }
}

/// One instance with its concept's gold attributes.
#[derive(Clone, Copy, Debug)]
pub struct InstanceExample<'a, T> {
    pub v: &'a [T],
    pub attributes: &'a AttributeVector,
}

/// One-hidden-layer attribute classifier trained with per-attribute
/// logistic (cross-entropy) loss: `σ(W2ᵀ·σ(W1ᵀv + b1) + b2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttrClassifierParams<T> {
    pub input: usize,
    pub hidden: usize,
    pub attributes: usize,
    pub w1: Matrix<T>,
    pub b1: Matrix<T>,
    pub w2: Matrix<T>,
    pub b2: Matrix<T>,
}

impl<T: Scalar> AttrClassifierParams<T> {
    pub fn init(input: usize, hidden: usize, attributes: usize, rng: &mut Rng) -> Result<Self> {
        if input == 0 || hidden == 0 || attributes == 0 {
            return Err(Error::Parameter("classifier dimensions must be positive".into()));
        }
        Ok(AttrClassifierParams {
            input,
            hidden,
            attributes,
            w1: gaussian_block(rng, input, hidden, input)?,
            b1: Matrix::zeros(1, hidden),
            w2: gaussian_block(rng, hidden, attributes, hidden)?,
            b2: Matrix::zeros(1, attributes),
        })
    }

    fn layers(&self, v: &[T]) -> Result<(Vec<T>, Vec<T>)> {
        if v.len() != self.input {
            return Err(Error::Length {
                op: "classifier input",
                left: self.input,
                right: v.len(),
            });
        }
        let mut hid = self.w1.t_matvec(v)?;
        for (h, &b) in hid.iter_mut().zip(self.b1.as_slice()) {
            *h = sigmoid_scalar(*h + b);
        }
        let mut logits = self.w2.t_matvec(&hid)?;
        for (z, &b) in logits.iter_mut().zip(self.b2.as_slice()) {
            *z += b;
        }
        Ok((hid, logits))
    }

    /// Attribute probabilities.
    pub fn probabilities(&self, v: &[T]) -> Result<Vec<T>> {
        Ok(self.layers(v)?.1.into_iter().map(sigmoid_scalar).collect())
    }

    pub fn predict_attributes(&self, v: &[T], threshold: T) -> Result<AttributeVector> {
        Ok(AttributeVector::new(
            self.probabilities(v)?.iter().map(|&p| p >= threshold).collect(),
        ))
    }

    /// Symmetric difference of the two thresholded attribute predictions.
    pub fn discriminate(&self, v_r: &[T], v_c: &[T], threshold: T) -> Result<Vec<usize>> {
        let a = self.predict_attributes(v_r, threshold)?;
        let b = self.predict_attributes(v_c, threshold)?;
        Ok(symmetric_difference(&a, &b)?.ones())
    }

    /// Mean per-attribute cross-entropy.
    pub fn batch_loss(&self, batch: &[InstanceExample<'_, T>]) -> Result<T> {
        Ok(self.loss_and_gradient(batch)?.0)
    }

    pub fn loss_and_gradient(&self, batch: &[InstanceExample<'_, T>]) -> Result<(T, Self)> {
        if batch.is_empty() {
            return Err(Error::Empty("batch"));
        }
        let n_attr = self.attributes;
        let scale = T::of(1.0 / (batch.len() * n_attr) as f64);
        let mut grad = self.zeros_like();
        let mut total = T::zero();
        let mut delta_out = vec![T::zero(); n_attr];
        for ex in batch {
            if ex.attributes.len() != n_attr {
                return Err(Error::Length {
                    op: "classifier gold",
                    left: n_attr,
                    right: ex.attributes.len(),
                });
            }
            let (hid, logits) = self.layers(ex.v)?;
            let mut ce = T::zero();
            for k in 0..n_attr {
                let y = if ex.attributes.get(k) { T::one() } else { T::zero() };
                let z = logits[k];
                // softplus(z) − y·z, computed stably
                ce += z.max(T::zero()) + (T::one() + (-z.abs()).exp()).ln() - y * z;
                delta_out[k] = scale * (sigmoid_scalar(z) - y);
            }
            total += ce / T::of(n_attr as f64);

            grad.w2.add_outer(&hid, &delta_out, T::one());
            for (gb, &d) in grad.b2.as_mut_slice().iter_mut().zip(&delta_out) {
                *gb += d;
            }
            let delta_hid: Vec<T> = (0..self.hidden)
                .map(|j| dot(self.w2.row(j), &delta_out) * hid[j] * (T::one() - hid[j]))
                .collect();
            grad.w1.add_outer(ex.v, &delta_hid, T::one());
            for (gb, &d) in grad.b1.as_mut_slice().iter_mut().zip(&delta_hid) {
                *gb += d;
            }
        }
        Ok((total / T::of(batch.len() as f64), grad))
    }
}

impl<T: Scalar> Parameters<T> for AttrClassifierParams<T> {
    fn kind(&self) -> ModelKind {
        ModelKind::Classifier
    }

    fn blocks(&self) -> Vec<(&'static str, &Matrix<T>)> {
        vec![("w1", &self.w1), ("b1", &self.b1), ("w2", &self.w2), ("b2", &self.b2)]
    }

    fn blocks_mut(&mut self) -> Vec<(&'static str, &mut Matrix<T>)> {
        vec![
            ("w1", &mut self.w1),
            ("b1", &mut self.b1),
            ("w2", &mut self.w2),
            ("b2", &mut self.b2),
        ]
    }

    fn dims(&self) -> Vec<u32> {
        vec![self.input as u32, self.attributes as u32, self.hidden as u32]
    }
}

impl<T: Scalar> DiscriminativePredictor<T> for AttrClassifierParams<T> {
    fn n_attributes(&self) -> usize {
        self.attributes
    }

    /// |p_r − p_c| per attribute.
    fn discriminative_scores(&self, pair: &PairView<'_, T>) -> Result<Vec<T>> {
        let a = self.probabilities(pair.v_r)?;
        let b = self.probabilities(pair.v_c)?;
        Ok(a.iter().zip(&b).map(|(&x, &y)| (x - y).abs()).collect())
    }

    fn discriminative_set(&self, pair: &PairView<'_, T>, threshold: T) -> Result<Vec<usize>> {
        self.discriminate(pair.v_r, pair.v_c, threshold)
    }
}

impl<T: Scalar> AttributePredictor<T> for AttrClassifierParams<T> {
    fn attribute_scores(&self, _concept: usize, v: &[T]) -> Result<Vec<T>> {
        self.probabilities(v)
    }
}

impl<T: Scalar> Speaker<T> for AttrClassifierParams<T> {
    fn speak(&self, pair: &PairView<'_, T>) -> Result<Utterance> {
        let a = self.probabilities(pair.v_r)?;
        let b = self.probabilities(pair.v_c)?;
        let diff: Vec<T> = a.iter().zip(&b).map(|(&x, &y)| (x - y).abs()).collect();
        let attribute = argmax(&diff).ok_or(Error::Empty("attribute set"))?;
        let polarity = if a[attribute] >= b[attribute] {
            Polarity::Referent
        } else {
            Polarity::Context
        };
        Ok(Utterance {
            attribute,
            polarity: Some(polarity),
        })
    }
}
