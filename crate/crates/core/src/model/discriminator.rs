use rand::Rng;

use super::SequentialGenerator;
use crate::error::{Error, Result};
use crate::nn::{Activation, DenseLayer, Mlp};

/// Default entrywise weight bound of the critic.
pub const DEFAULT_CLAMP: f64 = 0.1;

/// Scalar critic with two leaky hidden layers of widths `d` and `⌊d/2⌋`.
///
/// Every weight and bias is kept inside `[-clamp, clamp]`, which bounds the
/// critic's Lipschitz constant (see [`Discriminator::lipschitz_bound`]).
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    pub net: Mlp,
    clamp: f64,
}

/// Per-example gradient of `-[f(x) - f(g(z))]` along with both critic scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ExampleGrad {
    pub grad: Vec<f64>,
    pub real_score: f64,
    pub fake_score: f64,
}

/// Hidden widths used for a `d`-column table.
pub fn critic_widths(d: usize) -> [usize; 2] {
    [d, (d / 2).max(1)]
}

impl Discriminator {
    pub fn new(net: Mlp, clamp: f64) -> Result<Self> {
        if !(clamp > 0.0) {
            return Err(Error::usage(format!("clamp must be > 0, got {clamp}")));
        }
        if net.outputs() != 1 {
            return Err(Error::shape("critic must have a scalar output"));
        }
        Ok(Discriminator { net, clamp })
    }

    pub fn zeros(d: usize, clamp: f64) -> Result<Self> {
        let [h1, h2] = critic_widths(d);
        let net = Mlp::new(vec![
            DenseLayer::zeros(d, h1, Activation::leaky()),
            DenseLayer::zeros(h1, h2, Activation::leaky()),
            DenseLayer::zeros(h2, 1, Activation::Identity),
        ])?;
        Discriminator::new(net, clamp)
    }

    /// Uniform ±1/√fan_in init followed by clipping.
    pub fn init<R: Rng + ?Sized>(d: usize, clamp: f64, rng: &mut R) -> Result<Self> {
        let [h1, h2] = critic_widths(d);
        let net = Mlp::new(vec![
            DenseLayer::init(d, h1, Activation::leaky(), rng),
            DenseLayer::init(h1, h2, Activation::leaky(), rng),
            DenseLayer::init(h2, 1, Activation::Identity, rng),
        ])?;
        let mut f = Discriminator::new(net, clamp)?;
        f.clip_weights();
        Ok(f)
    }

    pub fn clamp(&self) -> f64 {
        self.clamp
    }

    pub fn dim(&self) -> usize {
        self.net.inputs()
    }

    pub fn num_params(&self) -> usize {
        self.net.num_params()
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::shape(format!(
                "critic expects {} inputs, got {}",
                self.dim(),
                x.len()
            )));
        }
        Ok(self.net.eval(x)?[0])
    }

    /// `scale · ∂f/∂x`.
    pub(crate) fn input_grad(&self, x: &[f64], scale: f64) -> Result<Vec<f64>> {
        let (_, cache) = self.net.forward(x)?;
        Ok(self.net.backward(&cache, &[scale])?.0)
    }

    /// `(f(x), ∂f/∂ν)`.
    pub fn param_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        if x.len() != self.dim() {
            return Err(Error::shape("critic input length mismatch"));
        }
        let (y, cache) = self.net.forward(x)?;
        Ok((y[0], self.net.backward(&cache, &[1.0])?.1))
    }

    /// Clamps every weight and bias into `[-clamp, clamp]`.
    pub fn clip_weights(&mut self) {
        let c = self.clamp;
        self.net.for_each_param_mut(|v| *v = v.clamp(-c, c));
    }

    pub fn max_abs_param(&self) -> f64 {
        self.params().iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Upper bound on the ℓ2 Lipschitz constant for a clipped critic:
    /// `Π_l clamp · √(fan_in · fan_out)` (Frobenius bound per layer, activations 1-Lipschitz).
    pub fn lipschitz_bound(&self) -> f64 {
        self.net
            .layers
            .iter()
            .map(|l| self.clamp * ((l.inputs() * l.outputs()) as f64).sqrt())
            .product()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.net.write_params(&mut out);
        out
    }

    pub fn set_params(&mut self, src: &[f64]) -> Result<()> {
        if src.len() != self.num_params() {
            return Err(Error::shape(format!(
                "expected {} critic parameters, got {}",
                self.num_params(),
                src.len()
            )));
        }
        self.net.read_params(src)?;
        Ok(())
    }

    /// `ν ← ν - lr · grad`, then clip.
    pub fn apply_gradient(&mut self, grad: &[f64], lr: f64) -> Result<()> {
        let mut p = self.params();
        if grad.len() != p.len() {
            return Err(Error::shape("critic gradient length mismatch"));
        }
        for (v, g) in p.iter_mut().zip(grad) {
            *v -= lr * g;
        }
        self.set_params(&p)?;
        self.clip_weights();
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|v| v.is_finite())
    }
}

/// Gradient w.r.t. the critic parameters of `ℓ = -[f(x) - f(g(z))]` for one real
/// record paired with one noise draw. Descending on it ascends the objective.
pub fn discriminator_per_example_grad(
    f: &Discriminator,
    g: &SequentialGenerator,
    x: &[f64],
    z: &[f64],
) -> Result<ExampleGrad> {
    let fake = g.sample(z)?;
    let (real_score, real_grad) = f.param_grad(x)?;
    let (fake_score, fake_grad) = f.param_grad(&fake)?;
    let grad = real_grad
        .iter()
        .zip(&fake_grad)
        .map(|(r, q)| q - r)
        .collect();
    Ok(ExampleGrad {
        grad,
        real_score,
        fake_score,
    })
}
