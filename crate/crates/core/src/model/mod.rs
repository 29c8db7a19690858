//! Sequential generator, critic, group penalty and the adversarial objective.

mod checkpoint;
mod discriminator;
mod generator;


use serde::{Deserialize, Serialize};

pub use checkpoint::Checkpoint;
pub use discriminator::{
    critic_widths, discriminator_per_example_grad, Discriminator, ExampleGrad, DEFAULT_CLAMP,
};
pub use generator::{
    generator_grad, prune, FreezeMask, RowNorms, SequentialGenerator, SubGenerator,
    DEFAULT_HIDDEN,
};

use crate::error::{Error, Result};
use crate::nn::{l2_norm, Matrix};

/// Sum of the Euclidean norms of every row except the last.
///
/// The last row of a sub-generator's weight block multiplies its own noise
/// input and is never penalized.
pub fn group_lasso(w: &Matrix) -> f64 {
    (0..w.rows().saturating_sub(1)).map(|k| l2_norm(w.row(k))).sum()
}

/// Subgradient of [`group_lasso`]: unit-normalized rows, zero for zero rows and
/// for the last row.
pub fn group_lasso_subgrad(w: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(w.rows(), w.cols());
    for k in 0..w.rows().saturating_sub(1) {
        let norm = l2_norm(w.row(k));
        if norm > 0.0 {
            for (o, &v) in out.row_mut(k).iter_mut().zip(w.row(k)) {
                *o = v / norm;
            }
        }
    }
    out
}

/// `λ_j = lambda · j^gamma` for `j = 1..=d`.
pub fn lambda_schedule(lambda: f64, gamma: f64, d: usize) -> Vec<f64> {
    (1..=d).map(|j| lambda * (j as f64).powf(gamma)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltySchedule {
    pub lambda: f64,
    pub gamma: f64,
}

impl PenaltySchedule {
    pub fn new(lambda: f64, gamma: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !gamma.is_finite() {
            return Err(Error::usage(format!(
                "penalty needs lambda >= 0 and finite gamma, got ({lambda}, {gamma})"
            )));
        }
        Ok(PenaltySchedule { lambda, gamma })
    }

    pub fn none() -> Self {
        PenaltySchedule {
            lambda: 0.0,
            gamma: 0.0,
        }
    }

    pub fn weights(&self, d: usize) -> Vec<f64> {
        lambda_schedule(self.lambda, self.gamma, d)
    }
}

/// `mean_i f(X_i) - mean_i f(g(Z_i))`.
pub fn objective_delta<X: AsRef<[f64]>, Z: AsRef<[f64]>>(
    f: &Discriminator,
    g: &SequentialGenerator,
    x_batch: &[X],
    z_batch: &[Z],
) -> Result<f64> {
    if x_batch.is_empty() || z_batch.is_empty() {
        return Err(Error::usage("objective needs non-empty real and noise batches"));
    }
    let mut real = 0.0;
    for x in x_batch {
        real += f.forward(x.as_ref())?;
    }
    let mut fake = 0.0;
    for z in z_batch {
        fake += f.forward(&g.sample(z.as_ref())?)?;
    }
    Ok(real / x_batch.len() as f64 - fake / z_batch.len() as f64)
}

/// [`objective_delta`] plus `Σ_j λ_j L(W_j)`.
pub fn penalized_objective<X: AsRef<[f64]>, Z: AsRef<[f64]>>(
    f: &Discriminator,
    g: &SequentialGenerator,
    x_batch: &[X],
    z_batch: &[Z],
    sched: &PenaltySchedule,
) -> Result<f64> {
    Ok(objective_delta(f, g, x_batch, z_batch)? + g.penalty(sched))
}
