//! Small dense feed-forward blocks with exact reverse-mode gradients.
//!
//! Everything here works on `f64` slices and row-major matrices. Networks are
//! tiny (tens of units), so there is no batching: callers loop over examples.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default negative slope of the leaky rectifier.
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(format!(
                "matrix {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("matrix entries must be finite".into()));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::shape("ragged rows"));
        }
        Matrix::from_vec(rows.len(), cols, rows.concat())
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Entries drawn from U[-bound, bound].
    pub fn uniform<R: Rng + ?Sized>(rows: usize, cols: usize, bound: f64, rng: &mut R) -> Self {
        let data = (0..rows * cols)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `self · x`
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::shape(format!(
                "matvec: matrix has {} columns, vector has {}",
                self.cols,
                x.len()
            )));
        }
        Ok((0..self.rows).map(|r| dot(self.row(r), x)).collect())
    }

    /// `selfᵀ · x`
    pub fn matvec_t(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.rows {
            return Err(Error::shape(format!(
                "transposed matvec: matrix has {} rows, vector has {}",
                self.rows,
                x.len()
            )));
        }
        let mut out = vec![0.0; self.cols];
        for (r, &xr) in x.iter().enumerate() {
            for (o, &w) in out.iter_mut().zip(self.row(r)) {
                *o += w * xr;
            }
        }
        Ok(out)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Identity,
    LeakyRelu { slope: f64 },
}

impl Activation {
    pub fn leaky() -> Self {
        Activation::LeakyRelu {
            slope: DEFAULT_LEAKY_SLOPE,
        }
    }

    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::LeakyRelu { slope } => {
                if z < 0.0 {
                    slope * z
                } else {
                    z
                }
            }
        }
    }

    /// Derivative at `z`; the leaky rectifier uses 1 at exactly zero.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::LeakyRelu { slope } => {
                if z < 0.0 {
                    slope
                } else {
                    1.0
                }
            }
        }
    }
}

/// `y = act(W x + b)` with `W` of shape out×in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

/// Input and pre-activation recorded by a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerCache {
    pub input: Vec<f64>,
    pub pre: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub dx: Vec<f64>,
    pub dweight: Matrix,
    pub dbias: Vec<f64>,
}

impl DenseLayer {
    pub fn new(weight: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weight.rows() {
            return Err(Error::shape(format!(
                "bias length {} != weight rows {}",
                bias.len(),
                weight.rows()
            )));
        }
        Ok(DenseLayer {
            weight,
            bias,
            activation,
        })
    }

    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        DenseLayer {
            weight: Matrix::zeros(outputs, inputs),
            bias: vec![0.0; outputs],
            activation,
        }
    }

    /// Weights uniform on ±1/√fan_in, zero bias.
    pub fn init<R: Rng + ?Sized>(
        inputs: usize,
        outputs: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / (inputs.max(1) as f64).sqrt();
        DenseLayer {
            weight: Matrix::uniform(outputs, inputs, bound, rng),
            bias: vec![0.0; outputs],
            activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.rows()
    }

    pub fn num_params(&self) -> usize {
        self.weight.rows() * self.weight.cols() + self.bias.len()
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, LayerCache)> {
        let mut pre = self.weight.matvec(x)?;
        for (p, b) in pre.iter_mut().zip(&self.bias) {
            *p += b;
        }
        let y = pre.iter().map(|&z| self.activation.apply(z)).collect();
        Ok((
            y,
            LayerCache {
                input: x.to_vec(),
                pre,
            },
        ))
    }

    pub fn backward(&self, cache: &LayerCache, dy: &[f64]) -> Result<LayerGrad> {
        if dy.len() != self.outputs() || cache.pre.len() != self.outputs() {
            return Err(Error::shape(format!(
                "backward: layer has {} outputs, dy has {}, cache has {}",
                self.outputs(),
                dy.len(),
                cache.pre.len()
            )));
        }
        if cache.input.len() != self.inputs() {
            return Err(Error::shape("backward: cache input does not match layer"));
        }
        let dpre: Vec<f64> = dy
            .iter()
            .zip(&cache.pre)
            .map(|(&g, &z)| g * self.activation.derivative(z))
            .collect();
        let mut dweight = Matrix::zeros(self.outputs(), self.inputs());
        for (r, &g) in dpre.iter().enumerate() {
            for (w, &x) in dweight.row_mut(r).iter_mut().zip(&cache.input) {
                *w = g * x;
            }
        }
        let dx = self.weight.matvec_t(&dpre)?;
        Ok(LayerGrad {
            dx,
            dweight,
            dbias: dpre,
        })
    }

    /// Weight (row-major) then bias.
    pub fn write_params(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(self.weight.data());
        out.extend_from_slice(&self.bias);
    }

    /// Inverse of [`write_params`](Self::write_params); returns the number of values consumed.
    pub fn read_params(&mut self, src: &[f64]) -> Result<usize> {
        let nw = self.weight.data().len();
        let n = self.num_params();
        if src.len() < n {
            return Err(Error::shape("not enough parameters for layer"));
        }
        self.weight.data_mut().copy_from_slice(&src[..nw]);
        self.bias.copy_from_slice(&src[nw..n]);
        Ok(n)
    }

    pub fn for_each_param_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        self.weight.data_mut().iter_mut().for_each(&mut f);
        self.bias.iter_mut().for_each(f);
    }
}

/// A stack of dense layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
}

/// Per-layer caches recorded during [`Mlp::forward`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradCache {
    pub layers: Vec<LayerCache>,
}

impl Mlp {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        for pair in layers.windows(2) {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::shape(format!(
                    "layer widths do not chain: {} -> {}",
                    pair[0].outputs(),
                    pair[1].inputs()
                )));
            }
        }
        Ok(Mlp { layers })
    }

    pub fn inputs(&self) -> usize {
        self.layers.first().map_or(0, DenseLayer::inputs)
    }

    pub fn outputs(&self) -> usize {
        self.layers.last().map_or(0, DenseLayer::outputs)
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(DenseLayer::num_params).sum()
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, GradCache)> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        for layer in &self.layers {
            let (y, c) = layer.forward(&h)?;
            caches.push(c);
            h = y;
        }
        Ok((h, GradCache { layers: caches }))
    }

    /// Forward pass without recording caches.
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut h = x.to_vec();
        for layer in &self.layers {
            let mut pre = layer.weight.matvec(&h)?;
            for (p, b) in pre.iter_mut().zip(&layer.bias) {
                *p = layer.activation.apply(*p + b);
            }
            h = pre;
        }
        Ok(h)
    }

    /// Returns `(dx, flat parameter gradient)` in [`write_params`](Self::write_params) order.
    pub fn backward(&self, cache: &GradCache, dy: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if cache.layers.len() != self.layers.len() {
            return Err(Error::shape(format!(
                "cache has {} layers, network has {}",
                cache.layers.len(),
                self.layers.len()
            )));
        }
        let mut grads: Vec<LayerGrad> = Vec::with_capacity(self.layers.len());
        let mut g = dy.to_vec();
        for (layer, c) in self.layers.iter().zip(&cache.layers).rev() {
            let lg = layer.backward(c, &g)?;
            g = lg.dx.clone();
            grads.push(lg);
        }
        let mut flat = Vec::with_capacity(self.num_params());
        for lg in grads.iter().rev() {
            flat.extend_from_slice(lg.dweight.data());
            flat.extend_from_slice(&lg.dbias);
        }
        Ok((g, flat))
    }

    pub fn write_params(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            l.write_params(out);
        }
    }

    pub fn read_params(&mut self, src: &[f64]) -> Result<usize> {
        let mut used = 0;
        for l in &mut self.layers {
            used += l.read_params(&src[used..])?;
        }
        Ok(used)
    }

    pub fn for_each_param_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        for l in &mut self.layers {
            l.for_each_param_mut(&mut f);
        }
    }
}

/// Compares an analytic gradient against central finite differences.
///
/// Returns `max_i |analytic_i - fd_i| / max(1, |fd_i|)`.
pub fn grad_check<F>(f: F, analytic: &[f64], params: &[f64], eps: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if !(eps > 0.0 && eps <= 1e-3) {
        return Err(Error::usage(format!("grad_check step {eps} outside (0, 1e-3]")));
    }
    if analytic.len() != params.len() {
        return Err(Error::shape(format!(
            "analytic gradient has {} entries for {} parameters",
            analytic.len(),
            params.len()
        )));
    }
    let mut p = params.to_vec();
    let mut worst = 0.0f64;
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + eps;
        let up = f(&p)?;
        p[i] = orig - eps;
        let down = f(&p)?;
        p[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite objective while perturbing parameter {i}"
            )));
        }
        let fd = (up - down) / (2.0 * eps);
        let err = (analytic[i] - fd).abs() / fd.abs().max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}
