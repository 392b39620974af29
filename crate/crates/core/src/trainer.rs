//! Mini-batch rmsprop training with per-epoch instance resampling and
//! validation-based model selection.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baselines::{ablation_hidden_for, classifier_hidden_for, AblationParams, AttrClassifierParams, InstanceExample};
use crate::dataset::{PairTriple, Split, World};
use crate::error::{Error, Result};
use crate::evaluator::{discriminativeness_on, Averaging, EvalOptions, EvalPairs};
use crate::model::{DanDims, DanOptions, DanParams, PairExample, PairModel, DEFAULT_HIDDEN};
use crate::params::{ModelKind, Parameters};
use crate::predict::{AttributePredictor, DiscriminativePredictor, PairView, Speaker, Utterance};
use crate::rng::Rng;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMetric {
    ValLoss,
    ValF1,
}

impl std::str::FromStr for EvalMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "val_loss" => Ok(EvalMetric::ValLoss),
            "val_f1" => Ok(EvalMetric::ValF1),
            other => Err(Error::Parameter(format!("unknown eval metric `{other}` (val_loss|val_f1)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub rms_decay: f64,
    pub rms_epsilon: f64,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub patience: usize,
    pub seed: u64,
    pub eval_metric: EvalMetric,
    /// Train on both role assignments of every pair.
    pub ordered_pairs: bool,
    /// Rescale gradients whose global norm exceeds this. Off by default.
    pub clip_norm: Option<f64>,
    /// Decision threshold for validation F1.
    pub threshold: f64,
    pub hidden: usize,
    pub dan_options: DanOptions,
    /// Defaults to DAN parameter parity.
    pub ablation_hidden: Option<usize>,
    pub classifier_hidden: Option<usize>,
    /// Flip a trained DAN's attribute layer to its sparse polarity.
    pub canonical_polarity: bool,
    /// Fill the `seconds` column of the history (makes it non-reproducible).
    pub record_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            learning_rate: 1e-3,
            rms_decay: 0.9,
            rms_epsilon: 1e-8,
            max_epochs: 100,
            patience: 10,
            seed: 0,
            eval_metric: EvalMetric::ValLoss,
            ordered_pairs: false,
            clip_norm: None,
            threshold: 0.5,
            hidden: DEFAULT_HIDDEN,
            dan_options: DanOptions::default(),
            ablation_hidden: None,
            classifier_hidden: None,
            canonical_polarity: true,
            record_time: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Parameter("batch_size must be at least 1".into()));
        }
        if !(self.rms_decay > 0.0 && self.rms_decay < 1.0) {
            return Err(Error::Parameter(format!("rms_decay must be in (0, 1), got {}", self.rms_decay)));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Parameter(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.rms_epsilon >= 0.0) {
            return Err(Error::Parameter(format!("rms_epsilon must be non-negative, got {}", self.rms_epsilon)));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0) {
                return Err(Error::Parameter(format!("clip_norm must be positive, got {c}")));
            }
        }
        if self.hidden == 0 {
            return Err(Error::Parameter("hidden must be at least 1".into()));
        }
        Ok(())
    }
}

/// Per-parameter running mean of squared gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct RmsState<P> {
    pub accumulators: P,
}

impl<P> RmsState<P> {
    pub fn new<T: Scalar>(params: &P) -> Self
    where
        P: Parameters<T>,
    {
        RmsState {
            accumulators: params.zeros_like(),
        }
    }
}

/// `s ← ρs + (1−ρ)g²; θ ← θ − ηg/(√s + ε)` over every block.
pub fn rmsprop_step<T: Scalar, P: Parameters<T>>(
    params: &mut P,
    grads: &P,
    state: &mut RmsState<P>,
    learning_rate: f64,
    decay: f64,
    epsilon: f64,
) -> Result<()> {
    let (rho, eta, eps) = (T::of(decay), T::of(learning_rate), T::of(epsilon));
    let one_minus = T::one() - rho;
    let g_blocks = grads.blocks();
    let mut s_blocks = state.accumulators.blocks_mut();
    let p_blocks = params.blocks_mut();
    if g_blocks.len() != p_blocks.len() || s_blocks.len() != p_blocks.len() {
        return Err(Error::Length {
            op: "rmsprop blocks",
            left: p_blocks.len(),
            right: g_blocks.len(),
        });
    }
    for ((_, p), ((_, g), (_, s))) in p_blocks.into_iter().zip(g_blocks.iter().zip(s_blocks.iter_mut())) {
        if p.shape() != g.shape() || p.shape() != s.shape() {
            return Err(Error::Shape {
                op: "rmsprop",
                left: p.shape(),
                right: g.shape(),
            });
        }
        for ((theta, &g), s) in p
            .as_mut_slice()
            .iter_mut()
            .zip(g.as_slice())
            .zip(s.as_mut_slice())
        {
            *s = rho * *s + one_minus * g * g;
            *theta -= eta * g / (s.sqrt() + eps);
        }
    }
    Ok(())
}

/// One sampled training example: pair roles plus the drawn instance rows.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BatchItem {
    pub triple: usize,
    pub referent: usize,
    pub context: usize,
    pub referent_instance: usize,
    pub context_instance: usize,
}

/// Shuffles the triples, then draws one instance of each concept uniformly.
/// The last batch may be short.
pub fn make_batches<T: Scalar>(
    triples: &[PairTriple],
    world: &World<T>,
    batch_size: usize,
    rng: &mut Rng,
) -> Result<Vec<Vec<BatchItem>>> {
    if batch_size == 0 {
        return Err(Error::Parameter("batch_size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..triples.len()).collect();
    rng.shuffle(&mut order);
    let mut items = Vec::with_capacity(order.len());
    for t in order {
        let r = world.concept_index(&triples[t].referent)?;
        let c = world.concept_index(&triples[t].context)?;
        items.push(BatchItem {
            triple: t,
            referent: r,
            context: c,
            referent_instance: draw_instance(world, r, rng)?,
            context_instance: draw_instance(world, c, rng)?,
        });
    }
    Ok(items.chunks(batch_size).map(|c| c.to_vec()).collect())
}

fn draw_instance<T: Scalar>(world: &World<T>, concept: usize, rng: &mut Rng) -> Result<usize> {
    let n = world.instances[concept].rows();
    if n == 0 {
        return Err(Error::NoInstances(world.concepts[concept].id.clone()));
    }
    Ok(rng.index(n))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_f1: f64,
    pub seconds: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    /// Epoch whose parameters were returned; `None` when no epoch ran.
    pub best_epoch: Option<usize>,
    /// The DAN attribute layer was flipped to its sparse polarity.
    pub polarity_flipped: bool,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,val_f1,seconds\n");
        for r in &self.records {
            let secs = r.seconds.map(|s| format!("{s:.3}")).unwrap_or_default();
            let _ = writeln!(out, "{},{:e},{:e},{:e},{}", r.epoch, r.train_loss, r.val_loss, r.val_f1, secs);
        }
        out
    }

    pub fn best(&self) -> Option<&EpochRecord> {
        self.best_epoch.and_then(|e| self.records.iter().find(|r| r.epoch == e))
    }
}

/// A trained model of any kind.
#[derive(Clone, Debug, PartialEq)]
pub enum Trained<T> {
    Dan(DanParams<T>),
    Ablation(AblationParams<T>),
    Classifier(AttrClassifierParams<T>),
}

impl<T: Scalar> Trained<T> {
    pub fn kind(&self) -> ModelKind {
        match self {
            Trained::Dan(_) => ModelKind::Dan,
            Trained::Ablation(_) => ModelKind::Ablation,
            Trained::Classifier(_) => ModelKind::Classifier,
        }
    }

    pub fn parameter_count(&self) -> usize {
        match self {
            Trained::Dan(p) => p.parameter_count(),
            Trained::Ablation(p) => p.parameter_count(),
            Trained::Classifier(p) => p.parameter_count(),
        }
    }
}

impl<T: Scalar> DiscriminativePredictor<T> for Trained<T> {
    fn n_attributes(&self) -> usize {
        match self {
            Trained::Dan(p) => p.n_attributes(),
            Trained::Ablation(p) => p.n_attributes(),
            Trained::Classifier(p) => p.n_attributes(),
        }
    }

    fn discriminative_scores(&self, pair: &PairView<'_, T>) -> Result<Vec<T>> {
        match self {
            Trained::Dan(p) => p.discriminative_scores(pair),
            Trained::Ablation(p) => p.discriminative_scores(pair),
            Trained::Classifier(p) => p.discriminative_scores(pair),
        }
    }

    fn discriminative_set(&self, pair: &PairView<'_, T>, threshold: T) -> Result<Vec<usize>> {
        match self {
            Trained::Dan(p) => p.discriminative_set(pair, threshold),
            Trained::Ablation(p) => p.discriminative_set(pair, threshold),
            Trained::Classifier(p) => p.discriminative_set(pair, threshold),
        }
    }
}

impl<T: Scalar> AttributePredictor<T> for Trained<T> {
    fn attribute_scores(&self, concept: usize, v: &[T]) -> Result<Vec<T>> {
        match self {
            Trained::Dan(p) => p.attribute_scores(concept, v),
            Trained::Classifier(p) => p.attribute_scores(concept, v),
            Trained::Ablation(_) => Err(Error::Parameter(
                "the ablation has no attribute layer to predict attributes from".into(),
            )),
        }
    }
}

impl<T: Scalar> Speaker<T> for Trained<T> {
    fn speak(&self, pair: &PairView<'_, T>) -> Result<Utterance> {
        match self {
            Trained::Dan(p) => p.speak(pair),
            Trained::Ablation(p) => p.speak(pair),
            Trained::Classifier(p) => p.speak(pair),
        }
    }
}

/// Fresh parameters for `kind`, sized from the world and config.
pub fn init_model<T: Scalar>(kind: ModelKind, world: &World<T>, cfg: &TrainConfig, rng: &mut Rng) -> Result<Trained<T>> {
    let dims = DanDims {
        input: world.dim(),
        attributes: world.n_attributes(),
        hidden: cfg.hidden,
    };
    Ok(match kind {
        ModelKind::Dan => Trained::Dan(DanParams::init(dims, cfg.dan_options, rng)?),
        ModelKind::Ablation => {
            let h = cfg.ablation_hidden.unwrap_or_else(|| ablation_hidden_for(dims));
            Trained::Ablation(AblationParams::init(dims.input, h, dims.attributes, rng)?)
        }
        ModelKind::Classifier => {
            let h = cfg.classifier_hidden.unwrap_or_else(|| classifier_hidden_for(dims));
            Trained::Classifier(AttrClassifierParams::init(dims.input, h, dims.attributes, rng)?)
        }
    })
}

/// Mean pair loss over concept-vector pairs (as used for validation).
pub fn pair_loss_on<T: Scalar, M: PairModel<T>>(model: &M, pairs: &EvalPairs<T>) -> Result<T> {
    let batch: Vec<PairExample<T>> = pairs
        .items
        .iter()
        .map(|p| PairExample {
            referent: pairs.vector(p.referent),
            context: pairs.vector(p.context),
            gold: &p.gold,
        })
        .collect();
    model.batch_loss(&batch)
}

fn classifier_loss_on<T: Scalar>(model: &AttrClassifierParams<T>, world: &World<T>, split: Split) -> Result<T> {
    let idx = world.split_indices(split);
    let vectors: Vec<Vec<T>> = idx.iter().map(|&i| world.concept_vector(i)).collect::<Result<_>>()?;
    let batch: Vec<InstanceExample<T>> = idx
        .iter()
        .zip(&vectors)
        .map(|(&i, v)| InstanceExample {
            v,
            attributes: &world.concepts[i].attributes,
        })
        .collect();
    model.batch_loss(&batch)
}

struct Fit<'a, T> {
    cfg: &'a TrainConfig,
    val: EvalPairs<T>,
    rng: Rng,
}

impl<T: Scalar> Fit<'_, T> {
    fn val_f1<M: DiscriminativePredictor<T> + Sync>(&self, model: &M) -> Result<f64> {
        let opts = EvalOptions {
            split: Split::Val,
            threshold: self.cfg.threshold,
            averaging: Averaging::Micro,
            ..EvalOptions::default()
        };
        Ok(discriminativeness_on(model, &self.val, &opts)?.report.f1)
    }

    /// Shared epoch loop. `epoch` runs one pass and returns the mean train
    /// loss; `val_loss` scores the current parameters.
    fn run<P, E, V>(&mut self, mut params: P, mut epoch: E, val_loss: V) -> Result<(P, TrainHistory)>
    where
        P: Parameters<T> + DiscriminativePredictor<T> + Sync,
        E: FnMut(&mut P, &mut RmsState<P>, &mut Rng, usize) -> Result<f64>,
        V: Fn(&P) -> Result<T>,
    {
        let mut history = TrainHistory::default();
        let mut state = RmsState::new(&params);
        let mut best: Option<(f64, P)> = None;
        let mut since_best = 0usize;
        for e in 1..=self.cfg.max_epochs {
            let start = Instant::now();
            let train_loss = epoch(&mut params, &mut state, &mut self.rng, e)?;
            let val_loss = val_loss(&params)?.as_f64();
            if !val_loss.is_finite() {
                return Err(Error::Divergence { epoch: e, loss: val_loss });
            }
            let val_f1 = self.val_f1(&params)?;
            history.records.push(EpochRecord {
                epoch: e,
                train_loss,
                val_loss,
                val_f1,
                seconds: self.cfg.record_time.then(|| start.elapsed().as_secs_f64()),
            });
            // Higher is better for the selection key.
            let key = match self.cfg.eval_metric {
                EvalMetric::ValLoss => -val_loss,
                EvalMetric::ValF1 => val_f1,
            };
            if best.as_ref().is_none_or(|(b, _)| key > *b) {
                best = Some((key, params.clone()));
                history.best_epoch = Some(e);
                since_best = 0;
            } else {
                since_best += 1;
                if self.cfg.patience > 0 && since_best >= self.cfg.patience {
                    log::info!("early stop after epoch {e}; best epoch {:?}", history.best_epoch);
                    break;
                }
            }
            log::debug!("epoch {e}: train {train_loss:.6} val {val_loss:.6} f1 {val_f1:.4}");
        }
        Ok((best.map_or(params, |(_, p)| p), history))
    }
}

fn check_loss(loss: f64, epoch: usize) -> Result<f64> {
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(Error::Divergence { epoch, loss })
    }
}

fn train_pairs<T, P>(fit: &mut Fit<'_, T>, params: P, world: &World<T>, triples: &[PairTriple]) -> Result<(P, TrainHistory)>
where
    T: Scalar,
    P: PairModel<T> + DiscriminativePredictor<T> + Sync,
{
    let bs = fit.cfg.batch_size;
    let val = fit.val.clone();
    let cfg = fit.cfg;
    let epoch = |p: &mut P, state: &mut RmsState<P>, rng: &mut Rng, e: usize| -> Result<f64> {
        let batches = make_batches(triples, world, bs, rng)?;
        let mut total = 0.0;
        for batch in &batches {
            let examples: Vec<PairExample<T>> = batch
                .iter()
                .map(|b| PairExample {
                    referent: world.instances[b.referent].row(b.referent_instance),
                    context: world.instances[b.context].row(b.context_instance),
                    gold: &triples[b.triple].gold,
                })
                .collect();
            let (loss, mut grads) = p.loss_and_gradient(&examples)?;
            let loss = check_loss(loss.as_f64(), e)?;
            total += loss * batch.len() as f64;
            step(cfg, p, &mut grads, state)?;
            if !p.is_finite() {
                return Err(Error::Divergence { epoch: e, loss: f64::NAN });
            }
        }
        Ok(total / triples.len() as f64)
    };
    fit.run(params, epoch, |p| pair_loss_on(p, &val))
}

/// Optional norm clipping followed by one rmsprop update.
fn step<T: Scalar, P: Parameters<T>>(cfg: &TrainConfig, params: &mut P, grads: &mut P, state: &mut RmsState<P>) -> Result<()> {
    if let Some(c) = cfg.clip_norm {
        let norm = grads.squared_norm().as_f64().sqrt();
        if norm > c {
            let scale = T::of(c / norm);
            for (_, b) in grads.blocks_mut() {
                for x in b.as_mut_slice() {
                    *x *= scale;
                }
            }
        }
    }
    rmsprop_step(params, grads, state, cfg.learning_rate, cfg.rms_decay, cfg.rms_epsilon)
}

fn train_classifier<T: Scalar>(
    fit: &mut Fit<'_, T>,
    params: AttrClassifierParams<T>,
    world: &World<T>,
) -> Result<(AttrClassifierParams<T>, TrainHistory)> {
    let cfg = fit.cfg;
    let mut examples: Vec<(usize, usize)> = Vec::new();
    for i in world.split_indices(Split::Train) {
        let n = world.instances[i].rows();
        if n == 0 {
            return Err(Error::NoInstances(world.concepts[i].id.clone()));
        }
        examples.extend((0..n).map(|r| (i, r)));
    }
    let epoch = |p: &mut AttrClassifierParams<T>, state: &mut RmsState<AttrClassifierParams<T>>, rng: &mut Rng, e: usize| {
        let mut order = examples.clone();
        rng.shuffle(&mut order);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<InstanceExample<T>> = chunk
                .iter()
                .map(|&(c, r)| InstanceExample {
                    v: world.instances[c].row(r),
                    attributes: &world.concepts[c].attributes,
                })
                .collect();
            let (loss, mut grads) = p.loss_and_gradient(&batch)?;
            total += check_loss(loss.as_f64(), e)? * chunk.len() as f64;
            step(cfg, p, &mut grads, state)?;
        }
        Ok(total / order.len() as f64)
    };
    fit.run(params, epoch, |p| classifier_loss_on(p, world, Split::Val))
}

/// Trains `kind` on the world's train split, selecting the epoch with the
/// best validation metric. The run is a pure function of `(world, cfg)`.
pub fn train<T: Scalar>(kind: ModelKind, world: &World<T>, cfg: &TrainConfig) -> Result<(Trained<T>, TrainHistory)> {
    cfg.validate()?;
    let mut rng = Rng::new(cfg.seed);
    let init = init_model(kind, world, cfg, &mut rng)?;
    let triples = world.pairs(Split::Train, cfg.ordered_pairs)?;
    let val = EvalPairs::build(world, Split::Val, None, cfg.seed)?;
    let mut fit = Fit { cfg, val, rng };
    Ok(match init {
        Trained::Dan(p) => {
            let (mut p, mut h) = train_pairs(&mut fit, p, world, &triples)?;
            if cfg.canonical_polarity && cfg.max_epochs > 0 {
                if cfg.dan_options.attr_sigmoid && !cfg.dan_options.bias {
                    log::warn!("polarity canonicalization skipped: needs bias terms with a sigmoid attribute layer");
                } else {
                    let vectors = world
                        .split_indices(Split::Train)
                        .into_iter()
                        .map(|i| world.concept_vector(i))
                        .collect::<Result<Vec<_>>>()?;
                    h.polarity_flipped = p.canonicalize_polarity(&vectors)?;
                }
            }
            (Trained::Dan(p), h)
        }
        Trained::Ablation(p) => {
            let (p, h) = train_pairs(&mut fit, p, world, &triples)?;
            (Trained::Ablation(p), h)
        }
        Trained::Classifier(p) => {
            let (p, h) = train_classifier(&mut fit, p, world)?;
            (Trained::Classifier(p), h)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{gen_world, WorldConfig};
    use crate::matrix::Matrix;

    /// A bare list of scalars for optimizer arithmetic.
    #[derive(Clone, Debug, PartialEq)]
    struct Flat(Matrix<f64>);

    impl Parameters<f64> for Flat {
        fn kind(&self) -> ModelKind {
            ModelKind::Dan
        }
        fn blocks(&self) -> Vec<(&'static str, &Matrix<f64>)> {
            vec![("x", &self.0)]
        }
        fn blocks_mut(&mut self) -> Vec<(&'static str, &mut Matrix<f64>)> {
            vec![("x", &mut self.0)]
        }
        fn dims(&self) -> Vec<u32> {
            vec![self.0.len() as u32]
        }
    }

    fn flat(xs: &[f64]) -> Flat {
        Flat(Matrix::column(xs))
    }

    fn tiny_world(seed: u64) -> World<f64> {
        let cfg = WorldConfig {
            n_categories: 3,
            concepts_per_category: 6,
            n_attributes: 8,
            dim: 12,
            instances_per_concept: 4,
            ..WorldConfig::default()
        };
        gen_world(&cfg, &mut Rng::new(seed)).unwrap()
    }

    fn quick(seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            max_epochs: 4,
            hidden: 6,
            batch_size: 8,
            learning_rate: 1e-2,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn rmsprop_hand_arithmetic() {
        let mut p = flat(&[2.0]);
        let mut s = RmsState::new(&p);
        rmsprop_step(&mut p, &flat(&[1.0]), &mut s, 0.1, 0.9, 0.0).unwrap();
        assert!((s.accumulators.0[(0, 0)] - 0.1).abs() < 1e-15);
        assert!((p.0[(0, 0)] - (2.0 - 0.1 / 0.1f64.sqrt())).abs() < 1e-15);
    }

    #[test]
    fn rmsprop_zero_gradient() {
        let mut p = flat(&[1.0, -2.0]);
        let mut s = RmsState { accumulators: flat(&[0.5, 2.0]) };
        rmsprop_step(&mut p, &flat(&[0.0, 0.0]), &mut s, 1e-3, 0.9, 1e-8).unwrap();
        assert_eq!(p, flat(&[1.0, -2.0]));
        assert_eq!(s.accumulators, flat(&[0.9 * 0.5, 0.9 * 2.0]));
    }

    #[test]
    fn rmsprop_quadratic_matches_scalar_simulation() {
        // loss(θ) = (θ − 3)², gradient 2(θ − 3).
        let (eta, rho, eps) = (0.05, 0.9, 1e-8);
        let mut p = flat(&[0.0]);
        let mut state = RmsState::new(&p);
        let (mut theta, mut s) = (0.0f64, 0.0f64);
        let mut last = 9.0;
        for _ in 0..5 {
            let g = 2.0 * (p.0[(0, 0)] - 3.0);
            rmsprop_step(&mut p, &flat(&[g]), &mut state, eta, rho, eps).unwrap();
            let gs = 2.0 * (theta - 3.0);
            s = rho * s + (1.0 - rho) * gs * gs;
            theta -= eta * gs / (s.sqrt() + eps);
            assert_eq!(p.0[(0, 0)], theta);
            let loss = (theta - 3.0).powi(2);
            assert!(loss < last);
            last = loss;
        }
    }

    #[test]
    fn rmsprop_shape_mismatch() {
        let mut p = flat(&[1.0, 2.0]);
        let mut s = RmsState::new(&p);
        assert!(rmsprop_step(&mut p, &flat(&[1.0]), &mut s, 0.1, 0.9, 0.0).is_err());
    }

    #[test]
    fn batch_sizes() {
        let world = tiny_world(1);
        let triples: Vec<PairTriple> = world.pairs(Split::Train, true).unwrap().into_iter().take(70).collect();
        assert_eq!(triples.len(), 70);
        let batches = make_batches(&triples, &world, 32, &mut Rng::new(0)).unwrap();
        let sizes: Vec<usize> = batches.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![32, 32, 6]);
        let mut seen: Vec<usize> = batches.iter().flatten().map(|b| b.triple).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..70).collect::<Vec<_>>());
        assert!(make_batches(&triples, &world, 0, &mut Rng::new(0)).is_err());
    }

    #[test]
    fn single_instance_sampling_is_fixed() {
        let cfg = WorldConfig {
            n_categories: 2,
            concepts_per_category: 4,
            instances_per_concept: 1,
            n_attributes: 4,
            dim: 5,
            ..WorldConfig::default()
        };
        let world: World<f64> = gen_world(&cfg, &mut Rng::new(2)).unwrap();
        let triples = world.pairs(Split::Train, false).unwrap();
        let batches = make_batches(&triples, &world, 4, &mut Rng::new(3)).unwrap();
        assert!(batches.iter().flatten().all(|b| b.referent_instance == 0 && b.context_instance == 0));
    }

    #[test]
    fn instance_usage_is_uniform() {
        let world = tiny_world(4);
        let triples: Vec<PairTriple> = world.pairs(Split::Train, false).unwrap().into_iter().take(3).collect();
        let k = world.instances[0].rows();
        let mut counts = vec![vec![0usize; k]; world.concepts.len()];
        let mut rng = Rng::new(5);
        for _ in 0..10_000 {
            for b in make_batches(&triples, &world, 32, &mut rng).unwrap().iter().flatten() {
                counts[b.referent][b.referent_instance] += 1;
                counts[b.context][b.context_instance] += 1;
            }
        }
        for row in counts.iter().filter(|r| r.iter().sum::<usize>() > 0) {
            let n = row.iter().sum::<usize>() as f64;
            let p = 1.0 / k as f64;
            let sigma = (n * p * (1.0 - p)).sqrt();
            for &c in row {
                assert!((c as f64 - n * p).abs() < 3.0 * sigma, "{row:?}");
            }
        }
    }

    #[test]
    fn concept_without_instances_is_an_error() {
        let mut world = tiny_world(6);
        let dim = world.dim();
        let triples = world.pairs(Split::Train, false).unwrap();
        let victim = world.concept_index(&triples[0].referent).unwrap();
        world.instances[victim] = Matrix::zeros(0, dim);
        let err = make_batches(&triples, &world, 8, &mut Rng::new(0)).unwrap_err();
        assert!(matches!(err, Error::NoInstances(_)));
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let world = tiny_world(7);
        for kind in [ModelKind::Dan, ModelKind::Ablation, ModelKind::Classifier] {
            let cfg = TrainConfig { max_epochs: 0, ..quick(11) };
            let (model, history) = train(kind, &world, &cfg).unwrap();
            assert_eq!(model, init_model(kind, &world, &cfg, &mut Rng::new(11)).unwrap());
            assert!(history.records.is_empty());
            assert_eq!(history.best_epoch, None);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let world = tiny_world(8);
        for kind in [ModelKind::Dan, ModelKind::Ablation, ModelKind::Classifier] {
            let a = train(kind, &world, &quick(3)).unwrap();
            let b = train(kind, &world, &quick(3)).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.1.to_csv(), b.1.to_csv());
            let c = train(kind, &world, &quick(4)).unwrap();
            assert_ne!(a.0, c.0);
        }
    }

    #[test]
    fn selected_epoch_is_best() {
        let world = tiny_world(9);
        for metric in [EvalMetric::ValLoss, EvalMetric::ValF1] {
            let cfg = TrainConfig { max_epochs: 8, patience: 0, eval_metric: metric, ..quick(1) };
            let (_, h) = train(ModelKind::Dan, &world, &cfg).unwrap();
            assert_eq!(h.records.len(), 8);
            let best = h.best().unwrap();
            for r in &h.records {
                match metric {
                    EvalMetric::ValLoss => assert!(best.val_loss <= r.val_loss),
                    EvalMetric::ValF1 => assert!(best.val_f1 >= r.val_f1),
                }
            }
            let epochs: Vec<usize> = h.records.iter().map(|r| r.epoch).collect();
            assert_eq!(epochs, (1..=8).collect::<Vec<_>>());
        }
    }

    #[test]
    fn early_stopping_respects_patience() {
        let world = tiny_world(10);
        let cfg = TrainConfig { max_epochs: 200, patience: 2, ..quick(2) };
        let (_, h) = train(ModelKind::Ablation, &world, &cfg).unwrap();
        let best = h.best_epoch.unwrap();
        assert!(h.records.len() == 200 || h.records.len() == best + 2);
    }

    #[test]
    fn divergence_aborts() {
        let world = tiny_world(12);
        let cfg = TrainConfig { learning_rate: 1e300, rms_epsilon: 0.0, ..quick(0) };
        let err = train(ModelKind::Dan, &world, &cfg).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }), "{err}");
        assert!(!err.is_data_error());
    }

    #[test]
    fn invalid_configs() {
        let world = tiny_world(13);
        for cfg in [
            TrainConfig { batch_size: 0, ..quick(0) },
            TrainConfig { rms_decay: 1.0, ..quick(0) },
            TrainConfig { rms_decay: 0.0, ..quick(0) },
            TrainConfig { clip_norm: Some(0.0), ..quick(0) },
        ] {
            assert!(train(ModelKind::Dan, &world, &cfg).is_err());
        }
    }

    #[test]
    fn history_csv_layout() {
        let h = TrainHistory {
            records: vec![EpochRecord { epoch: 1, train_loss: 0.5, val_loss: 0.25, val_f1: 1.0, seconds: None }],
            best_epoch: Some(1),
            polarity_flipped: false,
        };
        assert_eq!(h.to_csv(), "epoch,train_loss,val_loss,val_f1,seconds\n1,5e-1,2.5e-1,1e0,\n");
    }

    #[test]
    fn clipping_rescales_to_the_norm_bound() {
        let cfg = TrainConfig { clip_norm: Some(1.0), ..TrainConfig::default() };
        let mut p = flat(&[0.0, 0.0]);
        let mut g = flat(&[3.0, 4.0]);
        let mut s = RmsState::new(&p);
        step(&cfg, &mut p, &mut g, &mut s).unwrap();
        assert!((g.0[(0, 0)] - 0.6).abs() < 1e-15 && (g.0[(1, 0)] - 0.8).abs() < 1e-15);
        let mut small = flat(&[0.3, 0.4]);
        step(&cfg, &mut p, &mut small, &mut s).unwrap();
        assert_eq!(small, flat(&[0.3, 0.4]));
    }
}
