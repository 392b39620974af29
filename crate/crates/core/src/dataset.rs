//! Concepts, attribute vectors, splits and referent/context pairs.
//!
//! A [`World`] is either generated synthetically ([`gen_world`]) or loaded from
//! disk (see [`crate::storage`]). Synthetic worlds render instance vectors
//! with a fixed linear map plus Gaussian noise, `v = G·p + ε`, so attributes
//! are linearly recoverable from the visual vectors when `noise_std == 0`.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::Rng;
use crate::scalar::Scalar;

/// Ordered attribute names; the position of a name is its attribute id.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AttributeSpace {
    names: Vec<String>,
}

impl AttributeSpace {
    pub fn new(names: Vec<String>) -> Result<Self> {
        let mut seen = HashMap::with_capacity(names.len());
        for (i, n) in names.iter().enumerate() {
            if let Some(j) = seen.insert(n.as_str(), i) {
                return Err(Error::Parameter(format!(
                    "duplicate attribute name `{n}` at positions {j} and {i}"
                )));
            }
        }
        Ok(AttributeSpace { names })
    }

    /// `attr000`, `attr001`, ...
    pub fn numbered(n: usize) -> Self {
        AttributeSpace {
            names: (0..n).map(|i| format!("attr{i:03}")).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }
}

/// Binary attribute membership of one concept.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AttributeVector {
    bits: Vec<bool>,
}

/// Gold discriminativeness is binary and shares the attribute-vector representation.
pub type GoldVector = AttributeVector;

impl AttributeVector {
    pub fn new(bits: Vec<bool>) -> Self {
        AttributeVector { bits }
    }

    pub fn zeros(n: usize) -> Self {
        AttributeVector {
            bits: vec![false; n],
        }
    }

    /// Sets the listed ids in a vector of length `n`.
    pub fn from_ids(n: usize, ids: &[usize]) -> Self {
        let mut bits = vec![false; n];
        for &i in ids {
            bits[i] = true;
        }
        AttributeVector { bits }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Ids of the set bits, ascending.
    pub fn ones(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }

    pub fn hamming(&self, other: &Self) -> usize {
        self.bits
            .iter()
            .zip(&other.bits)
            .filter(|(a, b)| a != b)
            .count()
    }

    pub fn to_scalars<T: Scalar>(&self) -> Vec<T> {
        self.bits
            .iter()
            .map(|&b| if b { T::one() } else { T::zero() })
            .collect()
    }

    pub fn to_bitstring(&self) -> String {
        self.bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }

    pub fn parse_bitstring(s: &str) -> Option<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Some(false),
                '1' => Some(true),
                _ => None,
            })
            .collect::<Option<Vec<_>>>()
            .map(AttributeVector::new)
    }
}

/// Entry `v` is set iff exactly one of the two vectors has attribute `v`.
pub fn symmetric_difference(referent: &AttributeVector, context: &AttributeVector) -> Result<GoldVector> {
    if referent.len() != context.len() {
        return Err(Error::Length {
            op: "symmetric_difference",
            left: referent.len(),
            right: context.len(),
        });
    }
    Ok(AttributeVector::new(
        referent
            .bits
            .iter()
            .zip(&context.bits)
            .map(|(&a, &b)| a ^ b)
            .collect(),
    ))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Concept {
    pub id: String,
    pub category: String,
    pub attributes: AttributeVector,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Parameter(format!("unknown split `{other}`"))),
        }
    }
}

/// Target fractions of each category that go to train/val/test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

/// Stratified split: within each category `round(n·ratio)` concepts go to val
/// and to test (at least one each when the category has ≥ 3 members) and the
/// remainder goes to train. Categories with fewer than 3 members go entirely
/// to train.
pub fn split_concepts(concepts: &[Concept], ratios: SplitRatios, rng: &mut Rng) -> Result<Vec<Split>> {
    if concepts.is_empty() {
        return Err(Error::Empty("split_concepts: no concepts"));
    }
    let SplitRatios { train, val, test } = ratios;
    if [train, val, test].iter().any(|r| !(0.0..=1.0).contains(r))
        || (train + val + test - 1.0).abs() > 1e-9
    {
        return Err(Error::Parameter(format!(
            "split ratios must be in [0,1] and sum to 1, got ({train}, {val}, {test})"
        )));
    }

    let mut order: Vec<&str> = Vec::new();
    let mut members: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, c) in concepts.iter().enumerate() {
        members
            .entry(c.category.as_str())
            .or_insert_with(|| {
                order.push(c.category.as_str());
                Vec::new()
            })
            .push(i);
    }

    let mut out = vec![Split::Train; concepts.len()];
    for cat in order {
        let mut idx = members.remove(cat).unwrap_or_default();
        let n = idx.len();
        if n < 3 {
            log::warn!("category `{cat}` has {n} concept(s); all assigned to train");
            continue;
        }
        let (n_val, n_test) = split_counts(n, val, test);
        rng.shuffle(&mut idx);
        for &i in &idx[..n_val] {
            out[i] = Split::Val;
        }
        for &i in &idx[n_val..n_val + n_test] {
            out[i] = Split::Test;
        }
    }
    Ok(out)
}

/// (val, test) counts for a category of size `n ≥ 3`.
pub(crate) fn split_counts(n: usize, val: f64, test: f64) -> (usize, usize) {
    let n_val = ((n as f64 * val).round() as usize).max(1);
    let n_test = ((n as f64 * test).round() as usize).max(1);
    // Keep at least one training concept.
    let n_val = n_val.min(n - 2);
    let n_test = n_test.min(n - 1 - n_val);
    (n_val, n_test)
}

/// One training or evaluation item: the gold vector is the symmetric
/// difference of the two concepts' attributes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PairTriple {
    pub referent: String,
    pub context: String,
    pub gold: GoldVector,
}

/// All unordered pairs, the lexicographically smaller id taking the referent
/// role. With `ordered`, both role assignments are emitted.
pub fn build_pairs(concepts: &[&Concept], ordered: bool) -> Result<Vec<PairTriple>> {
    if concepts.len() < 2 {
        return Err(Error::Parameter(format!(
            "build_pairs needs at least 2 concepts, got {}",
            concepts.len()
        )));
    }
    let mut sorted: Vec<&Concept> = concepts.to_vec();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let n = sorted.len();
    let mut pairs = Vec::with_capacity(n * (n - 1) / if ordered { 1 } else { 2 });
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (sorted[i], sorted[j]);
            let gold = symmetric_difference(&a.attributes, &b.attributes)?;
            if ordered {
                pairs.push(PairTriple {
                    referent: b.id.clone(),
                    context: a.id.clone(),
                    gold: gold.clone(),
                });
            }
            pairs.push(PairTriple {
                referent: a.id.clone(),
                context: b.id.clone(),
                gold,
            });
        }
    }
    Ok(pairs)
}

/// Synthetic world generator parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub n_categories: usize,
    pub concepts_per_category: usize,
    pub n_attributes: usize,
    pub dim: usize,
    pub instances_per_concept: usize,
    /// Probability that a category prototype has a given attribute.
    pub attr_density: f64,
    /// Probability that a concept keeps each prototype bit.
    pub category_coherence: f64,
    pub noise_std: f64,
    pub split: SplitRatios,
    /// Total concept count, spread as evenly as possible over at most
    /// `n_categories` categories; overrides `concepts_per_category`.
    pub n_concepts: Option<usize>,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            n_categories: 8,
            concepts_per_category: 15,
            n_attributes: 64,
            dim: 128,
            instances_per_concept: 30,
            attr_density: 0.2,
            category_coherence: 0.9,
            noise_std: 0.1,
            split: SplitRatios::default(),
            n_concepts: None,
        }
    }
}

impl WorldConfig {
    /// Number of concepts generated for each category.
    pub fn category_sizes(&self) -> Vec<usize> {
        match self.n_concepts {
            None => vec![self.concepts_per_category; self.n_categories],
            Some(n) => {
                let c = self.n_categories.min(n).max(1);
                (0..c).map(|i| n / c + usize::from(i < n % c)).collect()
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let counts = [
            ("n_categories", self.n_categories),
            ("concepts_per_category", self.concepts_per_category),
            ("n_attributes", self.n_attributes),
            ("dim", self.dim),
            ("instances_per_concept", self.instances_per_concept),
            ("n_concepts", self.n_concepts.unwrap_or(1)),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Parameter(format!("{name} must be at least 1")));
            }
        }
        for (name, v) in [
            ("attr_density", self.attr_density),
            ("category_coherence", self.category_coherence),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Parameter(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return Err(Error::Parameter(format!(
                "noise_std must be finite and non-negative, got {}",
                self.noise_std
            )));
        }
        Ok(())
    }
}

/// Concepts with attributes, their instance vectors and split assignment.
#[derive(Clone, Debug, PartialEq)]
pub struct World<T> {
    pub space: AttributeSpace,
    pub concepts: Vec<Concept>,
    /// One matrix per concept, one row per instance.
    pub instances: Vec<Matrix<T>>,
    pub splits: Vec<Split>,
    /// `G` (dim × |V|), synthetic worlds only.
    pub render_map: Option<Matrix<T>>,
    pub noise_std: Option<f64>,
    dim: usize,
    index: HashMap<String, usize>,
}

impl<T: Scalar> World<T> {
    pub fn new(
        space: AttributeSpace,
        concepts: Vec<Concept>,
        instances: Vec<Matrix<T>>,
        splits: Vec<Split>,
        render_map: Option<Matrix<T>>,
        noise_std: Option<f64>,
    ) -> Result<Self> {
        if concepts.len() != instances.len() || concepts.len() != splits.len() {
            return Err(Error::Parameter(format!(
                "world has {} concepts, {} instance sets and {} split labels",
                concepts.len(),
                instances.len(),
                splits.len()
            )));
        }
        let dim = instances.first().map_or(0, |m| m.cols());
        let mut index = HashMap::with_capacity(concepts.len());
        for (i, (c, m)) in concepts.iter().zip(&instances).enumerate() {
            if c.attributes.len() != space.len() {
                return Err(Error::Bitstring {
                    concept: c.id.clone(),
                    expected: space.len(),
                    found: c.attributes.len(),
                });
            }
            if m.cols() != dim && m.rows() > 0 {
                return Err(Error::Length {
                    op: "instance dimension",
                    left: dim,
                    right: m.cols(),
                });
            }
            if !m.is_finite() {
                return Err(Error::Parameter(format!(
                    "non-finite instance values for `{}`",
                    c.id
                )));
            }
            if index.insert(c.id.clone(), i).is_some() {
                return Err(Error::Parameter(format!("duplicate concept id `{}`", c.id)));
            }
        }
        if let Some(g) = &render_map {
            if g.shape() != (dim, space.len()) {
                return Err(Error::Shape {
                    op: "render map",
                    left: (dim, space.len()),
                    right: g.shape(),
                });
            }
        }
        Ok(World {
            space,
            concepts,
            instances,
            splits,
            render_map,
            noise_std,
            dim,
            index,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_attributes(&self) -> usize {
        self.space.len()
    }

    pub fn concept_index(&self, id: &str) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownConcept(id.to_string()))
    }

    pub fn concept(&self, id: &str) -> Result<&Concept> {
        Ok(&self.concepts[self.concept_index(id)?])
    }

    /// Indices of the concepts assigned to `split`, in storage order.
    pub fn split_indices(&self, split: Split) -> Vec<usize> {
        self.splits
            .iter()
            .enumerate()
            .filter_map(|(i, &s)| (s == split).then_some(i))
            .collect()
    }

    pub fn split_concepts(&self, split: Split) -> Vec<&Concept> {
        self.split_indices(split)
            .into_iter()
            .map(|i| &self.concepts[i])
            .collect()
    }

    pub fn pairs(&self, split: Split, ordered: bool) -> Result<Vec<PairTriple>> {
        build_pairs(&self.split_concepts(split), ordered)
    }

    /// Mean of all instance vectors of concept `idx`.
    pub fn concept_vector(&self, idx: usize) -> Result<Vec<T>> {
        let m = &self.instances[idx];
        if m.rows() == 0 {
            return Err(Error::NoInstances(self.concepts[idx].id.clone()));
        }
        concept_vector(&(0..m.rows()).map(|r| m.row(r)).collect::<Vec<_>>())
    }

    /// Training-pair statistics computed from per-attribute counts, without
    /// enumerating pairs: attribute `v` held by `k` of `n` concepts
    /// discriminates exactly `k·(n−k)` unordered pairs.
    pub fn stats(&self) -> WorldStats {
        let train = self.split_indices(Split::Train);
        let n = train.len();
        let pair_count = n * n.saturating_sub(1) / 2;
        let mut discriminating: u64 = 0;
        for v in 0..self.n_attributes() {
            let k = train
                .iter()
                .filter(|&&i| self.concepts[i].attributes.get(v))
                .count() as u64;
            discriminating += k * (n as u64 - k);
        }
        let count = |s| self.splits.iter().filter(|&&x| x == s).count();
        WorldStats {
            n_concepts: self.concepts.len(),
            n_attributes: self.n_attributes(),
            dim: self.dim,
            n_train: count(Split::Train),
            n_val: count(Split::Val),
            n_test: count(Split::Test),
            train_pairs: pair_count,
            mean_discriminative: if pair_count == 0 {
                0.0
            } else {
                discriminating as f64 / pair_count as f64
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WorldStats {
    pub n_concepts: usize,
    pub n_attributes: usize,
    pub dim: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub train_pairs: usize,
    /// Mean popcount of the gold vectors over unordered training pairs.
    pub mean_discriminative: f64,
}

/// Arithmetic mean of instance vectors.
pub fn concept_vector<T: Scalar, V: AsRef<[T]>>(instances: &[V]) -> Result<Vec<T>> {
    let first = instances
        .first()
        .ok_or(Error::Empty("concept_vector: no instances"))?;
    let dim = first.as_ref().len();
    let mut sum = vec![T::zero(); dim];
    for v in instances {
        let v = v.as_ref();
        if v.len() != dim {
            return Err(Error::Length {
                op: "concept_vector",
                left: dim,
                right: v.len(),
            });
        }
        for (s, &x) in sum.iter_mut().zip(v) {
            *s += x;
        }
    }
    let n = T::of(instances.len() as f64);
    Ok(sum.into_iter().map(|s| s / n).collect())
}

/// `v = G·p + ε` with `ε ~ N(0, noise_std²)` per coordinate.
pub fn render_instance<T: Scalar>(world: &World<T>, concept: &str, rng: &mut Rng) -> Result<Vec<T>> {
    let idx = world.concept_index(concept)?;
    let g = world
        .render_map
        .as_ref()
        .ok_or_else(|| Error::Parameter("world has no render map (not synthetic)".into()))?;
    let noise = world.noise_std.unwrap_or(0.0);
    render(g, &world.concepts[idx].attributes, noise, rng)
}

fn render<T: Scalar>(g: &Matrix<T>, attributes: &AttributeVector, noise_std: f64, rng: &mut Rng) -> Result<Vec<T>> {
    let mut v = g.matvec(&attributes.to_scalars::<T>())?;
    if noise_std > 0.0 {
        for x in v.iter_mut() {
            *x += rng.gaussian(T::zero(), T::of(noise_std));
        }
    }
    Ok(v)
}

/// Generates a synthetic world. Draw order is fixed: prototypes, concept
/// attributes, render map, splits, instances.
pub fn gen_world<T: Scalar>(config: &WorldConfig, rng: &mut Rng) -> Result<World<T>> {
    config.validate()?;
    let n_attr = config.n_attributes;
    let flip = 1.0 - config.category_coherence;

    let sizes = config.category_sizes();
    let mut concepts = Vec::with_capacity(sizes.iter().sum());
    for (cat, &size) in sizes.iter().enumerate() {
        let prototype: Vec<bool> = (0..n_attr).map(|_| rng.bernoulli(config.attr_density)).collect();
        for k in 0..size {
            let bits = prototype
                .iter()
                .map(|&b| if rng.bernoulli(flip) { !b } else { b })
                .collect();
            concepts.push(Concept {
                id: format!("c{cat:02}_{k:03}"),
                category: format!("cat{cat:02}"),
                attributes: AttributeVector::new(bits),
            });
        }
    }

    let std = T::of(1.0 / (n_attr as f64).sqrt());
    let g = Matrix::from_vec(
        config.dim,
        n_attr,
        rng.gaussian_vec(config.dim * n_attr, T::zero(), std)?,
    )?;

    let splits = split_concepts(&concepts, config.split, rng)?;

    let mut instances = Vec::with_capacity(concepts.len());
    for c in &concepts {
        let mut data = Vec::with_capacity(config.instances_per_concept * config.dim);
        for _ in 0..config.instances_per_concept {
            data.extend(render(&g, &c.attributes, config.noise_std, rng)?);
        }
        instances.push(Matrix::from_vec(config.instances_per_concept, config.dim, data)?);
    }

    World::new(
        AttributeSpace::numbered(n_attr),
        concepts,
        instances,
        splits,
        Some(g),
        Some(config.noise_std),
    )
}
