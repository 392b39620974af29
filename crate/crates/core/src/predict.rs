//! Prediction interfaces consumed by the evaluator.

use crate::dataset::{symmetric_difference, AttributeVector};
use crate::error::{Error, Result};
use crate::model::threshold_ids;
use crate::scalar::Scalar;

/// A referent/context pair as presented to a predictor. The concept indices
/// refer to the world being evaluated; learned models only look at vectors.
#[derive(Clone, Copy, Debug)]
pub struct PairView<'a, T> {
    pub referent: usize,
    pub context: usize,
    pub v_r: &'a [T],
    pub v_c: &'a [T],
}

pub trait DiscriminativePredictor<T: Scalar> {
    fn n_attributes(&self) -> usize;

    fn discriminative_scores(&self, pair: &PairView<'_, T>) -> Result<Vec<T>>;

    /// Attributes deemed discriminative; default is `score ≥ threshold`.
    fn discriminative_set(&self, pair: &PairView<'_, T>, threshold: T) -> Result<Vec<usize>> {
        Ok(threshold_ids(&self.discriminative_scores(pair)?, threshold))
    }
}

pub trait AttributePredictor<T: Scalar> {
    /// Per-attribute activation for one concept's visual vector.
    fn attribute_scores(&self, concept: usize, v: &[T]) -> Result<Vec<T>>;

    fn predict_attribute_set(&self, concept: usize, v: &[T], threshold: T) -> Result<AttributeVector> {
        Ok(AttributeVector::new(
            self.attribute_scores(concept, v)?
                .iter()
                .map(|&x| x >= threshold)
                .collect(),
        ))
    }
}

/// Which of the two objects the uttered attribute is claimed to belong to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Polarity {
    Referent,
    Context,
}

/// A single-attribute referring expression.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Utterance {
    pub attribute: usize,
    /// `None` means a bare attribute, read as "the one that has it".
    pub polarity: Option<Polarity>,
}

pub trait Speaker<T: Scalar> {
    fn speak(&self, pair: &PairView<'_, T>) -> Result<Utterance>;
}

/// Index of the largest value; the first one wins ties.
pub fn argmax<T: Scalar>(xs: &[T]) -> Option<usize> {
    let mut best: Option<(usize, T)> = None;
    for (i, &x) in xs.iter().enumerate() {
        match best {
            Some((_, b)) if !(x > b) && !b.is_nan() => {}
            _ => best = Some((i, x)),
        }
    }
    best.map(|(i, _)| i)
}

/// Answers from the gold attribute table; an upper bound for every experiment.
#[derive(Clone, Debug)]
pub struct GoldOracle {
    attributes: Vec<AttributeVector>,
}

impl GoldOracle {
    pub fn new<T: Scalar>(world: &crate::dataset::World<T>) -> Self {
        GoldOracle {
            attributes: world.concepts.iter().map(|c| c.attributes.clone()).collect(),
        }
    }

    fn gold(&self, pair: &PairView<'_, impl Scalar>) -> Result<AttributeVector> {
        let get = |i: usize| {
            self.attributes
                .get(i)
                .ok_or_else(|| Error::UnknownConcept(format!("#{i}")))
        };
        symmetric_difference(get(pair.referent)?, get(pair.context)?)
    }
}

impl<T: Scalar> DiscriminativePredictor<T> for GoldOracle {
    fn n_attributes(&self) -> usize {
        self.attributes.first().map_or(0, |a| a.len())
    }

    fn discriminative_scores(&self, pair: &PairView<'_, T>) -> Result<Vec<T>> {
        Ok(self.gold(pair)?.to_scalars())
    }
}

impl<T: Scalar> AttributePredictor<T> for GoldOracle {
    fn attribute_scores(&self, concept: usize, _v: &[T]) -> Result<Vec<T>> {
        self.attributes
            .get(concept)
            .map(|a| a.to_scalars())
            .ok_or_else(|| Error::UnknownConcept(format!("#{concept}")))
    }
}

impl<T: Scalar> Speaker<T> for GoldOracle {
    /// First discriminative attribute, with its true owner.
    fn speak(&self, pair: &PairView<'_, T>) -> Result<Utterance> {
        let d = self.gold(pair)?;
        let attribute = d.ones().first().copied().unwrap_or(0);
        let polarity = if self.attributes[pair.referent].get(attribute) {
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
