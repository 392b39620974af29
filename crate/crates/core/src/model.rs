//! The discriminative attribute network.
//!
//! Both inputs go through one shared attribute layer,
//! `a = σ(Maᵀ·v + ba)`, giving one activation per attribute. For every
//! attribute `k` the pair `[a_r[k], a_c[k]]` is fed to the same small
//! discriminative network, `h_k = σ(Mdᵀ·[a_r[k], a_c[k]] + bd)` and
//! `d̂[k] = MDᵀ·h_k + bD`. Training minimises the mean squared error between
//! `d̂` and the gold symmetric-difference vector.

use serde::{Deserialize, Serialize};

use crate::dataset::GoldVector;
use crate::error::{Error, Result};
use crate::matrix::{sigmoid_scalar, Matrix};
use crate::params::{gaussian_block, ModelKind, Parameters};
use crate::predict::{AttributePredictor, DiscriminativePredictor, PairView, Polarity, Speaker, Utterance};
use crate::rng::Rng;
use crate::scalar::Scalar;

pub const DEFAULT_HIDDEN: usize = 60;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DanDims {
    /// Visual vector dimension.
    pub input: usize,
    pub attributes: usize,
    pub hidden: usize,
}

impl DanDims {
    pub fn new(input: usize, attributes: usize) -> Self {
        DanDims {
            input,
            attributes,
            hidden: DEFAULT_HIDDEN,
        }
    }

    /// Number of trainable scalars with all bias terms enabled.
    pub fn parameter_count(&self) -> usize {
        self.input * self.attributes + self.attributes + 3 * self.hidden + self.hidden + 1
    }
}

/// Architecture switches for fidelity experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DanOptions {
    /// Squash the attribute layer with a sigmoid (otherwise identity).
    pub attr_sigmoid: bool,
    /// Train bias terms (otherwise they stay zero and are not stored).
    pub bias: bool,
}

impl Default for DanOptions {
    fn default() -> Self {
        DanOptions {
            attr_sigmoid: true,
            bias: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DanParams<T> {
    pub dims: DanDims,
    pub options: DanOptions,
    /// `Ma`, input × attributes.
    pub attr_weight: Matrix<T>,
    /// `ba`, 1 × attributes.
    pub attr_bias: Matrix<T>,
    /// `Md`, 2 × hidden; row 0 reads the referent activation, row 1 the context.
    pub disc_weight: Matrix<T>,
    /// `bd`, 1 × hidden.
    pub disc_bias: Matrix<T>,
    /// `MD`, hidden × 1.
    pub out_weight: Matrix<T>,
    /// `bD`, 1 × 1.
    pub out_bias: Matrix<T>,
}

/// Intermediate values of one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct DanActivations<T> {
    pub a_r: Vec<T>,
    pub a_c: Vec<T>,
    /// attributes × hidden.
    pub hidden: Matrix<T>,
    pub d_hat: Vec<T>,
}

/// One referent/context training example borrowing its vectors.
#[derive(Clone, Copy, Debug)]
pub struct PairExample<'a, T> {
    pub referent: &'a [T],
    pub context: &'a [T],
    pub gold: &'a GoldVector,
}

/// Models scoring the discriminativeness of every attribute for a pair.
pub trait PairModel<T: Scalar>: Parameters<T> {
    /// Real-valued discriminativeness per attribute.
    fn scores(&self, referent: &[T], context: &[T]) -> Result<Vec<T>>;

    /// Mean batch loss and its gradient with respect to every block.
    fn loss_and_gradient(&self, batch: &[PairExample<'_, T>]) -> Result<(T, Self)>;

    /// Mean squared error averaged over the batch.
    fn batch_loss(&self, batch: &[PairExample<'_, T>]) -> Result<T> {
        if batch.is_empty() {
            return Err(Error::Empty("batch"));
        }
        let mut total = T::zero();
        for ex in batch {
            let d_hat = self.scores(ex.referent, ex.context)?;
            total += loss(&d_hat, ex.gold)?;
        }
        Ok(total / T::of(batch.len() as f64))
    }
}

/// Mean squared error between predicted and gold discriminativeness.
pub fn loss<T: Scalar>(d_hat: &[T], gold: &GoldVector) -> Result<T> {
    crate::matrix::mse_slice(d_hat, &gold.to_scalars::<T>())
}

impl<T: Scalar> DanParams<T> {
    /// Weights ~ Gaussian(0, 1/√fan_in), biases zero.
    pub fn init(dims: DanDims, options: DanOptions, rng: &mut Rng) -> Result<Self> {
        if dims.input == 0 || dims.attributes == 0 || dims.hidden == 0 {
            return Err(Error::Parameter(format!("all DAN dimensions must be positive: {dims:?}")));
        }
        Ok(DanParams {
            dims,
            options,
            attr_weight: gaussian_block(rng, dims.input, dims.attributes, dims.input)?,
            attr_bias: Matrix::zeros(1, dims.attributes),
            disc_weight: gaussian_block(rng, 2, dims.hidden, 2)?,
            disc_bias: Matrix::zeros(1, dims.hidden),
            out_weight: gaussian_block(rng, dims.hidden, 1, dims.hidden)?,
            out_bias: Matrix::zeros(1, 1),
        })
    }

    fn check_input(&self, v: &[T]) -> Result<()> {
        if v.len() != self.dims.input {
            return Err(Error::Length {
                op: "DAN input",
                left: self.dims.input,
                right: v.len(),
            });
        }
        Ok(())
    }

    /// Attribute-layer activations for one visual vector.
    pub fn attribute_layer(&self, v: &[T]) -> Result<Vec<T>> {
        self.check_input(v)?;
        let mut pre = self.attr_weight.t_matvec(v)?;
        for (p, &b) in pre.iter_mut().zip(self.attr_bias.as_slice()) {
            *p += b;
            if self.options.attr_sigmoid {
                *p = sigmoid_scalar(*p);
            }
        }
        Ok(pre)
    }

    /// Hidden units of the shared discriminative network for one attribute position.
    fn disc_hidden(&self, ar: T, ac: T, out: &mut [T]) {
        let w0 = self.disc_weight.row(0);
        let w1 = self.disc_weight.row(1);
        let b = self.disc_bias.as_slice();
        for j in 0..self.dims.hidden {
            out[j] = sigmoid_scalar(w0[j] * ar + w1[j] * ac + b[j]);
        }
    }

    fn disc_output(&self, hidden: &[T]) -> T {
        crate::matrix::dot(self.out_weight.as_slice(), hidden) + self.out_bias[(0, 0)]
    }

    pub fn forward(&self, v_r: &[T], v_c: &[T]) -> Result<DanActivations<T>> {
        let a_r = self.attribute_layer(v_r)?;
        let a_c = self.attribute_layer(v_c)?;
        let (n_attr, h) = (self.dims.attributes, self.dims.hidden);
        let mut hidden = Matrix::zeros(n_attr, h);
        let mut d_hat = Vec::with_capacity(n_attr);
        for k in 0..n_attr {
            let row = hidden.row_mut(k);
            self.disc_hidden(a_r[k], a_c[k], row);
            d_hat.push(self.disc_output(hidden.row(k)));
        }
        Ok(DanActivations { a_r, a_c, hidden, d_hat })
    }

    /// Attributes whose discriminativeness reaches `threshold` (inclusive).
    pub fn predict_discriminative(&self, v_r: &[T], v_c: &[T], threshold: T) -> Result<Vec<usize>> {
        Ok(threshold_ids(&self.forward(v_r, v_c)?.d_hat, threshold))
    }

    /// Binary attributes read off the attribute layer; no extra training.
    pub fn predict_attributes(&self, v: &[T], threshold: T) -> Result<crate::dataset::AttributeVector> {
        let a = self.attribute_layer(v)?;
        Ok(crate::dataset::AttributeVector::new(
            a.iter().map(|&x| x >= threshold).collect(),
        ))
    }

    /// Gradient of the mean batch loss. Accumulation order is fixed: batch
    /// index outer, attribute index inner.
    pub fn backward(&self, batch: &[PairExample<'_, T>]) -> Result<(T, Self)> {
        if batch.is_empty() {
            return Err(Error::Empty("batch"));
        }
        let (n_attr, h) = (self.dims.attributes, self.dims.hidden);
        let mut grad = self.zeros_all();
        // d(mean over batch and attributes)/d d̂ = 2(d̂ − g) / (B·|V|)
        let scale = T::of(2.0 / (batch.len() * n_attr) as f64);
        let mut total = T::zero();

        let mut delta_hidden = vec![T::zero(); h];
        let mut delta_ar = vec![T::zero(); n_attr];
        let mut delta_ac = vec![T::zero(); n_attr];

        for ex in batch {
            if ex.gold.len() != n_attr {
                return Err(Error::Length {
                    op: "DAN gold",
                    left: n_attr,
                    right: ex.gold.len(),
                });
            }
            let act = self.forward(ex.referent, ex.context)?;
            let mut sq = T::zero();
            for k in 0..n_attr {
                let g = if ex.gold.get(k) { T::one() } else { T::zero() };
                let err = act.d_hat[k] - g;
                sq += err * err;
                let delta_out = scale * err;

                let hk = act.hidden.row(k);
                grad.out_bias[(0, 0)] += delta_out;
                let (ar, ac) = (act.a_r[k], act.a_c[k]);
                let mut dar = T::zero();
                let mut dac = T::zero();
                let w0 = self.disc_weight.row(0);
                let w1 = self.disc_weight.row(1);
                for j in 0..h {
                    grad.out_weight.as_mut_slice()[j] += hk[j] * delta_out;
                    let dh = self.out_weight.as_slice()[j] * delta_out * hk[j] * (T::one() - hk[j]);
                    delta_hidden[j] = dh;
                    dar += w0[j] * dh;
                    dac += w1[j] * dh;
                }
                {
                    let gd = grad.disc_weight.as_mut_slice();
                    for j in 0..h {
                        gd[j] += ar * delta_hidden[j];
                        gd[h + j] += ac * delta_hidden[j];
                    }
                }
                for (gb, &dh) in grad.disc_bias.as_mut_slice().iter_mut().zip(&delta_hidden) {
                    *gb += dh;
                }
                if self.options.attr_sigmoid {
                    dar *= ar * (T::one() - ar);
                    dac *= ac * (T::one() - ac);
                }
                delta_ar[k] = dar;
                delta_ac[k] = dac;
            }
            total += sq / T::of(n_attr as f64);

            grad.attr_weight.add_outer(ex.referent, &delta_ar, T::one());
            grad.attr_weight.add_outer(ex.context, &delta_ac, T::one());
            for ((gb, &r), &c) in grad.attr_bias.as_mut_slice().iter_mut().zip(&delta_ar).zip(&delta_ac) {
                *gb += r + c;
            }
        }
        if !self.options.bias {
            grad.attr_bias.fill(T::zero());
            grad.disc_bias.fill(T::zero());
            grad.out_bias.fill(T::zero());
        }
        Ok((total / T::of(batch.len() as f64), grad))
    }

    fn zeros_all(&self) -> Self {
        let z = |m: &Matrix<T>| Matrix::zeros(m.rows(), m.cols());
        DanParams {
            dims: self.dims,
            options: self.options,
            attr_weight: z(&self.attr_weight),
            attr_bias: z(&self.attr_bias),
            disc_weight: z(&self.disc_weight),
            disc_bias: z(&self.disc_bias),
            out_weight: z(&self.out_weight),
            out_bias: z(&self.out_bias),
        }
    }

    pub fn cast<U: Scalar>(&self) -> DanParams<U> {
        DanParams {
            dims: self.dims,
            options: self.options,
            attr_weight: self.attr_weight.cast(),
            attr_bias: self.attr_bias.cast(),
            disc_weight: self.disc_weight.cast(),
            disc_bias: self.disc_bias.cast(),
            out_weight: self.out_weight.cast(),
            out_bias: self.out_bias.cast(),
        }
    }

    /// Replaces every attribute activation `a` by its complement while
    /// leaving `d̂` unchanged: the pair loss cannot tell the two apart.
    /// Needs the hidden bias when the attribute layer is a sigmoid.
    pub fn flip_polarity(&mut self) -> Result<()> {
        if self.options.attr_sigmoid && !self.options.bias {
            return Err(Error::Parameter(
                "polarity flip of a sigmoid attribute layer needs bias terms".into(),
            ));
        }
        if self.options.attr_sigmoid {
            // σ(−x) = 1 − σ(x), so w·(1 − a) + b = −w·a + (b + w).
            for j in 0..self.dims.hidden {
                let shift = self.disc_weight[(0, j)] + self.disc_weight[(1, j)];
                self.disc_bias.as_mut_slice()[j] += shift;
            }
        }
        for m in [&mut self.attr_weight, &mut self.attr_bias, &mut self.disc_weight] {
            for x in m.as_mut_slice() {
                *x = -*x;
            }
        }
        Ok(())
    }

    /// Mean attribute activation over `vectors` and all attributes.
    pub fn mean_activation(&self, vectors: &[Vec<T>]) -> Result<f64> {
        if vectors.is_empty() {
            return Err(Error::Empty("activation vectors"));
        }
        let mut total = 0.0;
        for v in vectors {
            total += self.attribute_layer(v)?.iter().map(|a| a.as_f64()).sum::<f64>();
        }
        Ok(total / (vectors.len() * self.dims.attributes) as f64)
    }

    /// Picks the polarity under which attributes are sparse: mean activation
    /// over `vectors` at or below the midpoint (0.5 with a sigmoid, 0
    /// otherwise). Returns whether the layer was flipped.
    pub fn canonicalize_polarity(&mut self, vectors: &[Vec<T>]) -> Result<bool> {
        let mid = if self.options.attr_sigmoid { 0.5 } else { 0.0 };
        if self.mean_activation(vectors)? > mid {
            self.flip_polarity()?;
            return Ok(true);
        }
        Ok(false)
    }
}

pub(crate) fn threshold_ids<T: Scalar>(scores: &[T], threshold: T) -> Vec<usize> {
    scores
        .iter()
        .enumerate()
        .filter_map(|(i, &s)| (s >= threshold).then_some(i))
        .collect()
}

impl<T: Scalar> Parameters<T> for DanParams<T> {
    fn kind(&self) -> ModelKind {
        ModelKind::Dan
    }

    fn blocks(&self) -> Vec<(&'static str, &Matrix<T>)> {
        if self.options.bias {
            vec![
                ("attr.weight", &self.attr_weight),
                ("attr.bias", &self.attr_bias),
                ("disc.weight", &self.disc_weight),
                ("disc.bias", &self.disc_bias),
                ("out.weight", &self.out_weight),
                ("out.bias", &self.out_bias),
            ]
        } else {
            vec![
                ("attr.weight", &self.attr_weight),
                ("disc.weight", &self.disc_weight),
                ("out.weight", &self.out_weight),
            ]
        }
    }

    fn blocks_mut(&mut self) -> Vec<(&'static str, &mut Matrix<T>)> {
        if self.options.bias {
            vec![
                ("attr.weight", &mut self.attr_weight),
                ("attr.bias", &mut self.attr_bias),
                ("disc.weight", &mut self.disc_weight),
                ("disc.bias", &mut self.disc_bias),
                ("out.weight", &mut self.out_weight),
                ("out.bias", &mut self.out_bias),
            ]
        } else {
            vec![
                ("attr.weight", &mut self.attr_weight),
                ("disc.weight", &mut self.disc_weight),
                ("out.weight", &mut self.out_weight),
            ]
        }
    }

    fn dims(&self) -> Vec<u32> {
        vec![
            self.dims.input as u32,
            self.dims.attributes as u32,
            self.dims.hidden as u32,
            self.options.attr_sigmoid as u32,
            self.options.bias as u32,
        ]
    }
}

impl<T: Scalar> PairModel<T> for DanParams<T> {
    fn scores(&self, referent: &[T], context: &[T]) -> Result<Vec<T>> {
        Ok(self.forward(referent, context)?.d_hat)
    }

    fn loss_and_gradient(&self, batch: &[PairExample<'_, T>]) -> Result<(T, Self)> {
        self.backward(batch)
    }
}

impl<T: Scalar> DiscriminativePredictor<T> for DanParams<T> {
    fn n_attributes(&self) -> usize {
        self.dims.attributes
    }

    fn discriminative_scores(&self, pair: &PairView<'_, T>) -> Result<Vec<T>> {
        self.scores(pair.v_r, pair.v_c)
    }
}

impl<T: Scalar> AttributePredictor<T> for DanParams<T> {
    fn attribute_scores(&self, _concept: usize, v: &[T]) -> Result<Vec<T>> {
        self.attribute_layer(v)
    }
}

impl<T: Scalar> Speaker<T> for DanParams<T> {
    /// Top-scoring attribute; polarity says which input activates it more.
    fn speak(&self, pair: &PairView<'_, T>) -> Result<Utterance> {
        let act = self.forward(pair.v_r, pair.v_c)?;
        let attribute = crate::predict::argmax(&act.d_hat).ok_or(Error::Empty("attribute set"))?;
        let polarity = if act.a_r[attribute] >= act.a_c[attribute] {
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
