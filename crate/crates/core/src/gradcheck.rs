//! Central finite-difference verification of hand-derived gradients.

use serde::Serialize;

use crate::baselines::{AblationParams, AttrClassifierParams, InstanceExample};
use crate::dataset::AttributeVector;
use crate::error::Result;
use crate::model::{DanDims, DanOptions, DanParams, PairExample, PairModel};
use crate::params::{ModelKind, Parameters};
use crate::rng::Rng;
use crate::scalar::{DType, Scalar};

/// Worst disagreement within one parameter block.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlockError {
    pub block: String,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

/// `|a − n| / max(|a|, |n|, floor)`; the floor keeps entries whose true
/// gradient is ~0 from dominating with round-off.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares `analytic` against central differences of `loss` around `params`.
pub fn check_gradients<T, P, F>(params: &P, analytic: &P, loss: F, eps: f64, floor: f64) -> Result<Vec<BlockError>>
where
    T: Scalar,
    P: Parameters<T>,
    F: Fn(&P) -> Result<T>,
{
    let mut probe = params.clone();
    let n_blocks = params.blocks().len();
    let analytic_blocks = analytic.blocks();
    let mut out = Vec::with_capacity(n_blocks);
    let h = T::of(eps);
    for b in 0..n_blocks {
        let (name, len) = {
            let blocks = params.blocks();
            (blocks[b].0, blocks[b].1.len())
        };
        let mut worst = BlockError {
            block: name.to_string(),
            max_rel_error: 0.0,
            max_abs_error: 0.0,
        };
        for i in 0..len {
            let orig = probe.blocks()[b].1.as_slice()[i];
            probe.blocks_mut()[b].1.as_mut_slice()[i] = orig + h;
            let plus = loss(&probe)?;
            probe.blocks_mut()[b].1.as_mut_slice()[i] = orig - h;
            let minus = loss(&probe)?;
            probe.blocks_mut()[b].1.as_mut_slice()[i] = orig;
            // Divide by the step actually taken, which differs from 2h after rounding.
            let step = ((orig + h) - (orig - h)).as_f64();
            let numeric = (plus - minus).as_f64() / step;
            let a = analytic_blocks[b].1.as_slice()[i].as_f64();
            worst.max_rel_error = worst.max_rel_error.max(relative_error(a, numeric, floor));
            worst.max_abs_error = worst.max_abs_error.max((a - numeric).abs());
        }
        out.push(worst);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradcheckConfig {
    pub input: usize,
    pub attributes: usize,
    pub hidden: usize,
    pub batch: usize,
    pub draws: usize,
    pub seed: u64,
    pub dan_options: DanOptions,
    /// Negates the analytic gradient of the first block. Negative control only.
    pub inject_sign_flip: bool,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            input: 16,
            attributes: 8,
            hidden: 5,
            batch: 4,
            draws: 10,
            seed: 0,
            dan_options: DanOptions::default(),
            inject_sign_flip: false,
        }
    }
}

/// Step and tolerance appropriate for a precision.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Tolerance {
    pub eps: f64,
    pub floor: f64,
    pub max_rel_error: f64,
}

impl Tolerance {
    pub fn for_dtype(dtype: DType) -> Self {
        match dtype {
            DType::F64 => Tolerance {
                eps: 1e-5,
                floor: 1e-6,
                max_rel_error: 1e-4,
            },
            // Round-off in f32 losses is ~1e-7 relative; a larger step and
            // floor keep the estimate meaningful.
            DType::F32 => Tolerance {
                eps: 1e-2,
                floor: 1e-2,
                max_rel_error: 1e-2,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub model: ModelKind,
    pub dtype: &'static str,
    pub tolerance: Tolerance,
    /// Worst error per block across all draws.
    pub blocks: Vec<BlockError>,
}

impl GradcheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.blocks.iter().map(|b| b.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error() < self.tolerance.max_rel_error
    }
}

fn perturb_all<T: Scalar, P: Parameters<T>>(p: &mut P, rng: &mut Rng, std: f64) {
    for (_, b) in p.blocks_mut() {
        for x in b.as_mut_slice() {
            *x += rng.gaussian(T::zero(), T::of(std));
        }
    }
}

fn merge(acc: &mut Vec<BlockError>, new: Vec<BlockError>) {
    if acc.is_empty() {
        *acc = new;
        return;
    }
    for (a, n) in acc.iter_mut().zip(new) {
        a.max_rel_error = a.max_rel_error.max(n.max_rel_error);
        a.max_abs_error = a.max_abs_error.max(n.max_abs_error);
    }
}

fn flip_first<T: Scalar, P: Parameters<T>>(g: &mut P) {
    if let Some((_, b)) = g.blocks_mut().into_iter().next() {
        for x in b.as_mut_slice() {
            *x = -*x;
        }
    }
}

/// Gradient check of one model kind over `cfg.draws` random parameter and
/// input draws. Biases are perturbed away from their zero initialisation.
pub fn run_gradcheck<T: Scalar>(kind: ModelKind, cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    let tol = Tolerance::for_dtype(T::DTYPE);
    let mut rng = Rng::new(cfg.seed);
    let mut blocks = Vec::new();
    for _ in 0..cfg.draws {
        let inputs: Vec<Vec<T>> = (0..2 * cfg.batch)
            .map(|_| rng.gaussian_vec(cfg.input, T::zero(), T::one()))
            .collect::<Result<_>>()?;
        let golds: Vec<AttributeVector> = (0..cfg.batch)
            .map(|_| AttributeVector::new((0..cfg.attributes).map(|_| rng.bernoulli(0.3)).collect()))
            .collect();
        let errors = match kind {
            ModelKind::Dan | ModelKind::Ablation => {
                let batch: Vec<PairExample<T>> = (0..cfg.batch)
                    .map(|i| PairExample {
                        referent: &inputs[2 * i],
                        context: &inputs[2 * i + 1],
                        gold: &golds[i],
                    })
                    .collect();
                if kind == ModelKind::Dan {
                    let dims = DanDims {
                        input: cfg.input,
                        attributes: cfg.attributes,
                        hidden: cfg.hidden,
                    };
                    let mut p = DanParams::<T>::init(dims, cfg.dan_options, &mut rng)?;
                    perturb_all(&mut p, &mut rng, 0.3);
                    check_pair_model(&p, &batch, tol, cfg.inject_sign_flip)?
                } else {
                    let mut p = AblationParams::<T>::init(cfg.input, 2 * cfg.hidden, cfg.attributes, &mut rng)?;
                    perturb_all(&mut p, &mut rng, 0.3);
                    check_pair_model(&p, &batch, tol, cfg.inject_sign_flip)?
                }
            }
            ModelKind::Classifier => {
                let mut p = AttrClassifierParams::<T>::init(cfg.input, cfg.hidden, cfg.attributes, &mut rng)?;
                perturb_all(&mut p, &mut rng, 0.3);
                let batch: Vec<InstanceExample<T>> = (0..cfg.batch)
                    .map(|i| InstanceExample {
                        v: &inputs[i],
                        attributes: &golds[i],
                    })
                    .collect();
                let (_, mut g) = p.loss_and_gradient(&batch)?;
                if cfg.inject_sign_flip {
                    flip_first(&mut g);
                }
                check_gradients(&p, &g, |q| q.batch_loss(&batch), tol.eps, tol.floor)?
            }
        };
        merge(&mut blocks, errors);
    }
    Ok(GradcheckReport {
        model: kind,
        dtype: T::DTYPE.name(),
        tolerance: tol,
        blocks,
    })
}

fn check_pair_model<T: Scalar, M: PairModel<T>>(
    p: &M,
    batch: &[PairExample<'_, T>],
    tol: Tolerance,
    flip: bool,
) -> Result<Vec<BlockError>> {
    let (_, mut g) = p.loss_and_gradient(batch)?;
    if flip {
        flip_first(&mut g);
    }
    check_gradients(p, &g, |q| q.batch_loss(batch), tol.eps, tol.floor)
}
