//! Discriminativeness and attribute-prediction scoring, the simulated
//! reference game, and predicted-set statistics.

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{Binomial, Discrete};

use crate::baselines::RandomBaseline;
use crate::dataset::{build_pairs, AttributeVector, GoldVector, Split, World};
use crate::error::{Error, Result};
use crate::predict::{AttributePredictor, DiscriminativePredictor, PairView, Polarity, Speaker, Utterance};
use crate::rng::Rng;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    /// Pool every (item, attribute) decision.
    #[default]
    Micro,
    /// Average per-attribute scores over attributes that occur in gold or predictions.
    Macro,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PrfReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub n_items: usize,
    pub mean_predicted_size: f64,
    pub mean_gold_size: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// Sorted-id set intersection size.
fn intersection(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

fn sorted(ids: &[usize]) -> Vec<usize> {
    let mut v = ids.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

/// Micro-averaged precision, recall and F1 over attribute-id sets.
/// Precision is 0 when nothing is predicted.
pub fn prf(predicted: &[Vec<usize>], gold: &[Vec<usize>]) -> Result<PrfReport> {
    prf_with(predicted, gold, Averaging::Micro)
}

pub fn prf_with(predicted: &[Vec<usize>], gold: &[Vec<usize>], averaging: Averaging) -> Result<PrfReport> {
    if predicted.len() != gold.len() {
        return Err(Error::Length {
            op: "prf",
            left: predicted.len(),
            right: gold.len(),
        });
    }
    let (mut tp, mut n_pred, mut n_gold) = (0, 0, 0);
    let mut per_attr: std::collections::BTreeMap<usize, [usize; 3]> = Default::default();
    for (p, g) in predicted.iter().zip(gold) {
        let (p, g) = (sorted(p), sorted(g));
        tp += intersection(&p, &g);
        n_pred += p.len();
        n_gold += g.len();
        if averaging == Averaging::Macro {
            for &a in &p {
                let e = per_attr.entry(a).or_default();
                if g.binary_search(&a).is_ok() {
                    e[0] += 1;
                } else {
                    e[1] += 1;
                }
            }
            for &a in &g {
                if p.binary_search(&a).is_err() {
                    per_attr.entry(a).or_default()[2] += 1;
                }
            }
        }
    }
    let (precision, recall, f1) = match averaging {
        Averaging::Micro => {
            let p = ratio(tp, n_pred);
            let r = ratio(tp, n_gold);
            (p, r, harmonic(p, r))
        }
        Averaging::Macro => {
            let n = per_attr.len().max(1) as f64;
            let (mut sp, mut sr, mut sf) = (0.0, 0.0, 0.0);
            for [t, f_p, f_n] in per_attr.values() {
                let p = ratio(*t, t + f_p);
                let r = ratio(*t, t + f_n);
                sp += p;
                sr += r;
                sf += harmonic(p, r);
            }
            (sp / n, sr / n, sf / n)
        }
    };
    let items = predicted.len();
    Ok(PrfReport {
        precision,
        recall,
        f1,
        tp,
        fp: n_pred - tp,
        fn_: n_gold - tp,
        n_items: items,
        mean_predicted_size: ratio(n_pred, items),
        mean_gold_size: ratio(n_gold, items),
    })
}

/// Evaluation settings shared by the experiments.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalOptions {
    pub split: Split,
    pub threshold: f64,
    /// Subsample evaluation pairs to at most this many (by seed).
    pub max_pairs: Option<usize>,
    pub seed: u64,
    pub averaging: Averaging,
    /// Parallel workers; results are always reduced in pair order.
    pub workers: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            split: Split::Test,
            threshold: 0.5,
            max_pairs: None,
            seed: 0,
            averaging: Averaging::Micro,
            workers: 1,
        }
    }
}

/// Concept-level evaluation pairs with averaged concept vectors.
#[derive(Clone, Debug)]
pub struct EvalPairs<T> {
    pub items: Vec<EvalPair>,
    /// Concept vector per world concept index (only for the split's concepts).
    vectors: Vec<Option<Vec<T>>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalPair {
    pub referent: usize,
    pub context: usize,
    pub gold: GoldVector,
}

impl<T: Scalar> EvalPairs<T> {
    /// All unordered pairs of `split` concepts, optionally subsampled.
    pub fn build(world: &World<T>, split: Split, max_pairs: Option<usize>, seed: u64) -> Result<Self> {
        let concepts = world.split_concepts(split);
        if concepts.len() < 2 {
            return Err(Error::Parameter(format!(
                "{split} split has {} concept(s); need at least 2",
                concepts.len()
            )));
        }
        let triples = build_pairs(&concepts, false)?;
        let mut items = triples
            .into_iter()
            .map(|t| {
                Ok(EvalPair {
                    referent: world.concept_index(&t.referent)?,
                    context: world.concept_index(&t.context)?,
                    gold: t.gold,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(max) = max_pairs {
            if items.len() > max {
                let mut rng = Rng::new(seed);
                rng.shuffle(&mut items);
                items.truncate(max);
                items.sort_by_key(|p| (p.referent, p.context));
            }
        }
        let mut vectors = vec![None; world.concepts.len()];
        for i in world.split_indices(split) {
            vectors[i] = Some(world.concept_vector(i)?);
        }
        Ok(EvalPairs { items, vectors })
    }

    pub fn vector(&self, concept: usize) -> &[T] {
        self.vectors[concept]
            .as_deref()
            .expect("concept vector exists for every evaluated concept")
    }

    pub fn view(&self, item: &EvalPair) -> PairView<'_, T> {
        PairView {
            referent: item.referent,
            context: item.context,
            v_r: self.vector(item.referent),
            v_c: self.vector(item.context),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Order-preserving map over items, optionally on a worker pool.
fn ordered_map<I, O, F>(items: &[I], workers: usize, f: F) -> Result<Vec<O>>
where
    I: Sync,
    O: Send,
    F: Fn(&I) -> Result<O> + Sync + Send,
{
    if workers <= 1 {
        return items.iter().map(&f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Parameter(format!("cannot start {workers} workers: {e}")))?;
    pool.install(|| items.par_iter().map(&f).collect())
}

/// One scored pair, as written to `predictions.tsv`.
#[derive(Clone, Debug, PartialEq)]
pub struct PairPrediction {
    pub referent: usize,
    pub context: usize,
    pub predicted: Vec<usize>,
    pub gold: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct DiscrimResult {
    pub report: PrfReport,
    pub predictions: Vec<PairPrediction>,
}

fn score_pairs(pairs: &EvalPairs<impl Scalar>, predicted: Vec<Vec<usize>>, averaging: Averaging) -> Result<DiscrimResult> {
    let gold: Vec<Vec<usize>> = pairs.items.iter().map(|p| p.gold.ones()).collect();
    let report = prf_with(&predicted, &gold, averaging)?;
    let predictions = pairs
        .items
        .iter()
        .zip(predicted)
        .zip(gold)
        .map(|((item, predicted), gold)| PairPrediction {
            referent: item.referent,
            context: item.context,
            predicted,
            gold,
        })
        .collect();
    Ok(DiscrimResult { report, predictions })
}

/// Scores predicted discriminative sets on concept-vector pairs of the evaluation split.
pub fn eval_discriminativeness<T, M>(model: &M, world: &World<T>, opts: &EvalOptions) -> Result<DiscrimResult>
where
    T: Scalar,
    M: DiscriminativePredictor<T> + Sync,
{
    let pairs = EvalPairs::build(world, opts.split, opts.max_pairs, opts.seed)?;
    discriminativeness_on(model, &pairs, opts)
}

pub fn discriminativeness_on<T, M>(model: &M, pairs: &EvalPairs<T>, opts: &EvalOptions) -> Result<DiscrimResult>
where
    T: Scalar,
    M: DiscriminativePredictor<T> + Sync,
{
    let threshold = T::of(opts.threshold);
    let predicted = ordered_map(&pairs.items, opts.workers, |item| {
        model.discriminative_set(&pairs.view(item), threshold)
    })?;
    score_pairs(pairs, predicted, opts.averaging)
}

/// The frequency-matched random baseline on the same pairs.
pub fn eval_random_discriminativeness<T: Scalar>(
    baseline: &RandomBaseline,
    world: &World<T>,
    opts: &EvalOptions,
    rng: &mut Rng,
) -> Result<DiscrimResult> {
    let pairs = EvalPairs::build(world, opts.split, opts.max_pairs, opts.seed)?;
    let predicted = pairs.items.iter().map(|_| baseline.sample(rng)).collect();
    score_pairs(&pairs, predicted, opts.averaging)
}

/// One scored concept for attribute prediction.
#[derive(Clone, Debug, PartialEq)]
pub struct ConceptPrediction {
    pub concept: usize,
    pub predicted: Vec<usize>,
    pub gold: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct AttribResult {
    pub report: PrfReport,
    pub predictions: Vec<ConceptPrediction>,
}

fn concept_vectors<T: Scalar>(world: &World<T>, split: Split) -> Result<Vec<(usize, Vec<T>)>> {
    let idx = world.split_indices(split);
    if idx.is_empty() {
        return Err(Error::Empty("evaluation split has no concepts"));
    }
    idx.into_iter().map(|i| Ok((i, world.concept_vector(i)?))).collect()
}

fn score_concepts<T: Scalar>(world: &World<T>, predicted: Vec<(usize, AttributeVector)>, averaging: Averaging) -> Result<AttribResult> {
    let gold: Vec<Vec<usize>> = predicted
        .iter()
        .map(|(i, _)| world.concepts[*i].attributes.ones())
        .collect();
    let pred: Vec<Vec<usize>> = predicted.iter().map(|(_, a)| a.ones()).collect();
    let report = prf_with(&pred, &gold, averaging)?;
    let predictions = predicted
        .into_iter()
        .zip(pred)
        .zip(gold)
        .map(|(((concept, _), predicted), gold)| ConceptPrediction { concept, predicted, gold })
        .collect();
    Ok(AttribResult { report, predictions })
}

/// Thresholded attribute activations of each evaluation concept vector
/// against the gold attribute vectors.
pub fn eval_attributes<T, M>(model: &M, world: &World<T>, opts: &EvalOptions) -> Result<AttribResult>
where
    T: Scalar,
    M: AttributePredictor<T> + Sync,
{
    let vectors = concept_vectors(world, opts.split)?;
    let threshold = T::of(opts.threshold);
    let predicted = ordered_map(&vectors, opts.workers, |(i, v)| {
        Ok((*i, model.predict_attribute_set(*i, v, threshold)?))
    })?;
    score_concepts(world, predicted, opts.averaging)
}

pub fn eval_random_attributes<T: Scalar>(
    baseline: &RandomBaseline,
    world: &World<T>,
    opts: &EvalOptions,
    rng: &mut Rng,
) -> Result<AttribResult> {
    let idx = world.split_indices(opts.split);
    if idx.is_empty() {
        return Err(Error::Empty("evaluation split has no concepts"));
    }
    let n = world.n_attributes();
    let predicted = idx
        .into_iter()
        .map(|i| (i, AttributeVector::from_ids(n, &baseline.sample(rng))))
        .collect();
    score_concepts(world, predicted, opts.averaging)
}

/// Mean size of the predicted discriminative sets.
pub fn active_count<T, M>(model: &M, pairs: &EvalPairs<T>, threshold: f64) -> Result<f64>
where
    T: Scalar,
    M: DiscriminativePredictor<T>,
{
    if pairs.is_empty() {
        return Ok(0.0);
    }
    let t = T::of(threshold);
    let mut total = 0usize;
    for item in &pairs.items {
        total += model.discriminative_set(&pairs.view(item), t)?.len();
    }
    Ok(total as f64 / pairs.len() as f64)
}

/// Which object the listener picks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Choice {
    Referent,
    Context,
}

/// Listener with access to gold attributes. When exactly one object has the
/// uttered attribute it picks that object (or, for a context-polarity
/// utterance, the other one); otherwise it guesses uniformly.
pub fn listen(
    utterance: Utterance,
    referent: &AttributeVector,
    context: &AttributeVector,
    rng: &mut Rng,
) -> Choice {
    let v = utterance.attribute;
    let (r, c) = (referent.get(v), context.get(v));
    if r == c {
        return if rng.bernoulli(0.5) {
            Choice::Referent
        } else {
            Choice::Context
        };
    }
    let holder = if r { Choice::Referent } else { Choice::Context };
    match utterance.polarity {
        None | Some(Polarity::Referent) => holder,
        Some(Polarity::Context) => match holder {
            Choice::Referent => Choice::Context,
            Choice::Context => Choice::Referent,
        },
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RefGameReport {
    pub n_pairs: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub chance_level: f64,
    pub binomial_p_value: f64,
    /// Games in which exactly one object had the uttered attribute.
    pub informative: usize,
}

/// Two-sided exact binomial test: total probability of outcomes no more
/// likely than `k` under Binomial(n, p).
pub fn binomial_two_sided_p(k: u64, n: u64, p: f64) -> Result<f64> {
    if k > n {
        return Err(Error::Parameter(format!("{k} successes out of {n} trials")));
    }
    let dist = Binomial::new(p, n).map_err(|e| Error::Parameter(e.to_string()))?;
    let observed = dist.pmf(k);
    let cutoff = observed * (1.0 + 1e-7);
    let total: f64 = (0..=n).map(|i| dist.pmf(i)).filter(|&q| q <= cutoff).sum();
    Ok(total.min(1.0))
}

/// One simulated game.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GameRecord {
    pub referent: usize,
    pub context: usize,
    pub referent_instance: usize,
    pub context_instance: usize,
    pub utterance: Utterance,
    pub choice: Choice,
    /// Exactly one of the two concepts has the uttered attribute.
    pub informative: bool,
}

/// Simulated reference games on the evaluation split: two distinct concepts
/// and one random instance of each; the speaker names one attribute and the
/// listener tries to pick the referent.
pub fn refgame<T, S>(speaker: &S, world: &World<T>, n_games: usize, split: Split, rng: &mut Rng) -> Result<RefGameReport>
where
    T: Scalar,
    S: Speaker<T>,
{
    Ok(play_refgame(speaker, world, n_games, split, rng)?.0)
}

/// As [`refgame`], also returning every game.
pub fn play_refgame<T, S>(
    speaker: &S,
    world: &World<T>,
    n_games: usize,
    split: Split,
    rng: &mut Rng,
) -> Result<(RefGameReport, Vec<GameRecord>)>
where
    T: Scalar,
    S: Speaker<T>,
{
    let pool = world.split_indices(split);
    if pool.len() < 2 {
        return Err(Error::Parameter(format!(
            "reference game needs at least 2 {split} concepts, found {}",
            pool.len()
        )));
    }
    let mut games = Vec::with_capacity(n_games);
    for _ in 0..n_games {
        let r = pool[rng.index(pool.len())];
        let c = loop {
            let c = pool[rng.index(pool.len())];
            if c != r {
                break c;
            }
        };
        let pick = |rng: &mut Rng, i: usize| -> Result<usize> {
            let n = world.instances[i].rows();
            if n == 0 {
                return Err(Error::NoInstances(world.concepts[i].id.clone()));
            }
            Ok(rng.index(n))
        };
        let (ir, ic) = (pick(rng, r)?, pick(rng, c)?);
        let view = PairView {
            referent: r,
            context: c,
            v_r: world.instances[r].row(ir),
            v_c: world.instances[c].row(ic),
        };
        let utterance = speaker.speak(&view)?;
        let (ar, ac) = (&world.concepts[r].attributes, &world.concepts[c].attributes);
        games.push(GameRecord {
            referent: r,
            context: c,
            referent_instance: ir,
            context_instance: ic,
            utterance,
            informative: ar.get(utterance.attribute) != ac.get(utterance.attribute),
            choice: listen(utterance, ar, ac, rng),
        });
    }
    let successes = games.iter().filter(|g| g.choice == Choice::Referent).count();
    let report = RefGameReport {
        n_pairs: n_games,
        successes,
        success_rate: ratio(successes, n_games),
        chance_level: 0.5,
        binomial_p_value: binomial_two_sided_p(successes as u64, n_games as u64, 0.5)?,
        informative: games.iter().filter(|g| g.informative).count(),
    };
    Ok((report, games))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{gen_world, WorldConfig};
    use crate::predict::GoldOracle;
    use crate::rng::Rng;
    use proptest::prelude::*;

    /// Per-decision confusion counts over a dense universe.
    fn confusion_oracle(pred: &[Vec<usize>], gold: &[Vec<usize>], n_attr: usize) -> (usize, usize, usize) {
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for (p, g) in pred.iter().zip(gold) {
            for a in 0..n_attr {
                match (p.contains(&a), g.contains(&a)) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    _ => {}
                }
            }
        }
        (tp, fp, fn_)
    }

    fn random_sets(rng: &mut Rng, n: usize, n_attr: usize, p: f64) -> Vec<Vec<usize>> {
        (0..n)
            .map(|_| (0..n_attr).filter(|_| rng.bernoulli(p)).collect())
            .collect()
    }

    #[test]
    fn perfect_and_empty() {
        let gold = vec![vec![1, 3], vec![0], vec![]];
        let r = prf(&gold, &gold).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (1.0, 1.0, 1.0));
        let r = prf(&[vec![], vec![], vec![]], &gold).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (0.0, 0.0, 0.0));
        assert!(prf(&gold[..1], &gold).is_err());
    }

    #[test]
    fn matches_confusion_oracle() {
        let mut rng = Rng::new(1);
        for _ in 0..20 {
            let pred = random_sets(&mut rng, 30, 12, 0.3);
            let gold = random_sets(&mut rng, 30, 12, 0.25);
            let r = prf(&pred, &gold).unwrap();
            let (tp, fp, fn_) = confusion_oracle(&pred, &gold, 12);
            assert_eq!((r.tp, r.fp, r.fn_), (tp, fp, fn_));
            let p = tp as f64 / (tp + fp) as f64;
            let rc = tp as f64 / (tp + fn_) as f64;
            assert!((r.precision - p).abs() < 1e-12);
            assert!((r.recall - rc).abs() < 1e-12);
            assert!((r.f1 - 2.0 * p * rc / (p + rc)).abs() < 1e-12);
        }
    }

    #[test]
    fn all_predicted_closed_form() {
        let mut rng = Rng::new(2);
        let n_attr = 20;
        let gold = random_sets(&mut rng, 50, n_attr, 0.15);
        let all: Vec<Vec<usize>> = (0..50).map(|_| (0..n_attr).collect()).collect();
        let r = prf(&all, &gold).unwrap();
        let density = gold.iter().map(Vec::len).sum::<usize>() as f64 / (50 * n_attr) as f64;
        assert!((r.f1 - 2.0 * density / (1.0 + density)).abs() < 1e-12);
    }

    #[test]
    fn macro_averaging() {
        let pred = vec![vec![0, 1], vec![1]];
        let gold = vec![vec![0], vec![1, 2]];
        let r = prf_with(&pred, &gold, Averaging::Macro).unwrap();
        // attr0: P1 R1; attr1: P 1/2 R 1; attr2: P0 R0
        assert!((r.precision - 0.5).abs() < 1e-12);
        assert!((r.recall - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.f1 - (1.0 + 2.0 / 3.0) / 3.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn prf_permutation_invariant(seed in any::<u64>()) {
            let mut rng = Rng::new(seed);
            let pred = random_sets(&mut rng, 15, 8, 0.4);
            let gold = random_sets(&mut rng, 15, 8, 0.3);
            let mut order: Vec<usize> = (0..15).collect();
            rng.shuffle(&mut order);
            let p2: Vec<_> = order.iter().map(|&i| pred[i].clone()).collect();
            let g2: Vec<_> = order.iter().map(|&i| gold[i].clone()).collect();
            prop_assert_eq!(prf(&pred, &gold).unwrap(), prf(&p2, &g2).unwrap());
        }
    }

    /// Exact two-sided p at p = 0.5 by direct summation of C(n,i)/2ⁿ.
    fn exact_p(k: u64, n: u64) -> f64 {
        let mut pmf = Vec::with_capacity(n as usize + 1);
        let mut c = 1.0f64;
        let scale = 2f64.powi(n as i32);
        for i in 0..=n {
            pmf.push(c / scale);
            c = c * (n - i) as f64 / (i + 1) as f64;
        }
        let obs = pmf[k as usize];
        pmf.iter().filter(|&&q| q <= obs * (1.0 + 1e-7)).sum::<f64>().min(1.0)
    }

    #[test]
    fn binomial_matches_exact_summation() {
        for &(k, n) in &[(0u64, 1u64), (7, 10), (60, 100), (156, 200), (100, 200), (530, 1000), (3, 1000)] {
            let got = binomial_two_sided_p(k, n, 0.5).unwrap();
            let want = exact_p(k, n);
            assert!((got - want).abs() <= 1e-9 * want.max(1e-300) + 1e-15, "k={k} n={n}: {got} vs {want}");
        }
        assert!(binomial_two_sided_p(5, 4, 0.5).is_err());
    }

    #[test]
    fn listener_rules() {
        let r = AttributeVector::new(vec![true, false, true]);
        let c = AttributeVector::new(vec![false, true, true]);
        let mut rng = Rng::new(0);
        let say = |attribute, polarity| Utterance { attribute, polarity };
        for _ in 0..10 {
            assert_eq!(listen(say(0, None), &r, &c, &mut rng), Choice::Referent);
            assert_eq!(listen(say(0, Some(Polarity::Referent)), &r, &c, &mut rng), Choice::Referent);
            assert_eq!(listen(say(1, Some(Polarity::Context)), &r, &c, &mut rng), Choice::Referent);
            assert_eq!(listen(say(1, None), &r, &c, &mut rng), Choice::Context);
        }
        let n = 10_000;
        let hits = (0..n)
            .filter(|_| listen(say(2, None), &r, &c, &mut rng) == Choice::Referent)
            .count();
        let sigma = (0.25 / n as f64).sqrt();
        assert!((hits as f64 / n as f64 - 0.5).abs() < 3.0 * sigma);
    }

    fn small_world() -> World<f64> {
        let cfg = WorldConfig {
            n_categories: 3,
            concepts_per_category: 6,
            n_attributes: 16,
            dim: 24,
            instances_per_concept: 4,
            attr_density: 0.4,
            category_coherence: 0.7,
            ..Default::default()
        };
        gen_world(&cfg, &mut Rng::new(5)).unwrap()
    }

    #[test]
    fn oracle_scores_perfectly() {
        let w = small_world();
        let oracle = GoldOracle::new(&w);
        let d = eval_discriminativeness(&oracle, &w, &EvalOptions::default()).unwrap();
        assert_eq!(d.report.f1, 1.0);
        let a = eval_attributes(&oracle, &w, &EvalOptions::default()).unwrap();
        assert_eq!(a.report.f1, 1.0);
        let pairs = EvalPairs::build(&w, Split::Test, None, 0).unwrap();
        let count = active_count(&oracle, &pairs, 0.5).unwrap();
        let loop_mean = pairs.items.iter().map(|p| p.gold.popcount()).sum::<usize>() as f64 / pairs.len() as f64;
        assert_eq!(count, loop_mean);
        assert_eq!(active_count(&oracle, &pairs, 1e9).unwrap(), 0.0);
    }

    #[test]
    fn oracle_speaker_always_succeeds() {
        let w = small_world();
        // every test pair must differ somewhere for the invariant to apply
        let pairs = EvalPairs::build(&w, Split::Test, None, 0).unwrap();
        assert!(pairs.items.iter().all(|p| p.gold.popcount() > 0));
        let r = refgame(&GoldOracle::new(&w), &w, 300, Split::Test, &mut Rng::new(1)).unwrap();
        assert_eq!(r.success_rate, 1.0);
        assert_eq!(r.informative, 300);
        assert!(r.binomial_p_value < 1e-50);
        let (again, games) = play_refgame(&GoldOracle::new(&w), &w, 300, Split::Test, &mut Rng::new(1)).unwrap();
        assert_eq!(again, r);
        assert_eq!(games.len(), 300);
        assert!(games.iter().all(|g| g.referent != g.context && g.choice == Choice::Referent));
    }

    #[test]
    fn parallel_evaluation_is_identical() {
        let w = small_world();
        let oracle = GoldOracle::new(&w);
        let one = eval_discriminativeness(&oracle, &w, &EvalOptions::default()).unwrap();
        let four = eval_discriminativeness(&oracle, &w, &EvalOptions { workers: 4, ..Default::default() }).unwrap();
        assert_eq!(one.predictions, four.predictions);
        assert_eq!(one.report, four.report);
    }

    #[test]
    fn subsampled_pairs() {
        let w = small_world();
        let all = EvalPairs::build(&w, Split::Test, None, 0).unwrap();
        let some = EvalPairs::build(&w, Split::Test, Some(3), 9).unwrap();
        assert_eq!(some.len(), 3.min(all.len()));
        assert_eq!(
            EvalPairs::build(&w, Split::Test, Some(3), 9).unwrap().items,
            some.items
        );
    }
}
