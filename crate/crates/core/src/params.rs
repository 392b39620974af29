//! Named parameter blocks shared by every trainable model.

use serde::{Deserialize, Serialize};

use crate::matrix::Matrix;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
#[repr(u8)]
pub enum ModelKind {
    Dan = 0,
    Ablation = 1,
    Classifier = 2,
}

impl ModelKind {
    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(ModelKind::Dan),
            1 => Some(ModelKind::Ablation),
            2 => Some(ModelKind::Classifier),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Dan => "dan",
            ModelKind::Ablation => "ablation",
            ModelKind::Classifier => "classifier",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "dan" => Ok(ModelKind::Dan),
            "ablation" => Ok(ModelKind::Ablation),
            "classifier" => Ok(ModelKind::Classifier),
            other => Err(crate::Error::Parameter(format!("unknown model kind `{other}`"))),
        }
    }
}

/// A model whose trainable state is a fixed list of named matrices.
///
/// A gradient record has the same type as the parameters it belongs to. The
/// block order returned by `blocks` and `blocks_mut` is identical and stable;
/// it defines checkpoint layout and optimizer state layout.
pub trait Parameters<T: Scalar>: Clone {
    fn kind(&self) -> ModelKind;

    fn blocks(&self) -> Vec<(&'static str, &Matrix<T>)>;

    fn blocks_mut(&mut self) -> Vec<(&'static str, &mut Matrix<T>)>;

    /// Shape-defining integers stored in checkpoints.
    fn dims(&self) -> Vec<u32>;

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, b) in z.blocks_mut() {
            b.fill(T::zero());
        }
        z
    }

    fn parameter_count(&self) -> usize {
        self.blocks().iter().map(|(_, b)| b.len()).sum()
    }

    fn is_finite(&self) -> bool {
        self.blocks().iter().all(|(_, b)| b.is_finite())
    }

    /// Adds `scale · other` block by block.
    fn axpy(&mut self, scale: T, other: &Self) {
        let src = other.blocks();
        for ((_, dst), (_, s)) in self.blocks_mut().into_iter().zip(src) {
            for (d, &x) in dst.as_mut_slice().iter_mut().zip(s.as_slice()) {
                *d += scale * x;
            }
        }
    }

    fn squared_norm(&self) -> T {
        self.blocks()
            .iter()
            .flat_map(|(_, b)| b.as_slice().iter())
            .fold(T::zero(), |acc, &x| acc + x * x)
    }
}

/// Gaussian(0, 1/√fan_in) weight block.
pub(crate) fn gaussian_block<T: Scalar>(
    rng: &mut crate::rng::Rng,
    rows: usize,
    cols: usize,
    fan_in: usize,
) -> crate::Result<Matrix<T>> {
    let std = T::of(1.0 / (fan_in as f64).sqrt());
    Matrix::from_vec(rows, cols, rng.gaussian_vec(rows * cols, T::zero(), std)?)
}
