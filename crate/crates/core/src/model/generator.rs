use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{group_lasso, group_lasso_subgrad, Discriminator, PenaltySchedule};
use crate::error::{Error, Result};
use crate::nn::{dot, l2_norm, Activation, DenseLayer, GradCache, Matrix, Mlp};

/// Width of the single-index feature map of every sub-generator.
pub const DEFAULT_HIDDEN: usize = 10;

/// Produces attribute `j` (1-based) from the `j - 1` earlier attributes and one noise draw.
///
/// With `u = [x_1, .., x_{j-1}, z_j]` the output is
/// `skip · u + out_net(Wᵀ u)`, where `W` is `j × L`. Both `W` and `skip` are
/// linear projections of `u`, so the weights attached to input `k` are row `k`
/// of the augmented block `[W | skip]`; the group penalty, the row norms and
/// pruning all operate on that block.
#[derive(Debug, Clone, PartialEq)]
pub struct SubGenerator {
    index: usize,
    pub w: Matrix,
    pub skip: Vec<f64>,
    pub out_net: Mlp,
}

/// What a sub-generator forward pass needs to remember for backprop.
#[derive(Debug, Clone)]
pub(crate) struct SubCache {
    input: Vec<f64>,
    net: GradCache,
}

impl SubGenerator {
    pub fn zeros(index: usize, hidden: usize) -> Self {
        assert!(index >= 1, "sub-generator index is 1-based");
        SubGenerator {
            index,
            w: Matrix::zeros(index, hidden),
            skip: vec![0.0; index],
            out_net: Mlp {
                layers: vec![
                    DenseLayer::zeros(hidden, hidden, Activation::leaky()),
                    DenseLayer::zeros(hidden, 1, Activation::Identity),
                ],
            },
        }
    }

    pub fn init<R: Rng + ?Sized>(index: usize, hidden: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (index as f64).sqrt();
        SubGenerator {
            index,
            w: Matrix::uniform(index, hidden, bound, rng),
            skip: (0..index).map(|_| rng.random_range(-bound..=bound)).collect(),
            out_net: Mlp {
                layers: vec![
                    DenseLayer::init(hidden, hidden, Activation::leaky(), rng),
                    DenseLayer::init(hidden, 1, Activation::Identity, rng),
                ],
            },
        }
    }

    /// Assembles a sub-generator from explicit parts.
    pub fn from_parts(w: Matrix, skip: Vec<f64>, out_net: Mlp) -> Result<Self> {
        let index = w.rows();
        if index == 0 {
            return Err(Error::shape("W must have at least one row"));
        }
        if skip.len() != index {
            return Err(Error::shape(format!(
                "skip has {} entries, W has {index} rows",
                skip.len()
            )));
        }
        if out_net.inputs() != w.cols() || out_net.outputs() != 1 {
            return Err(Error::shape(format!(
                "out_net must map {} features to a scalar",
                w.cols()
            )));
        }
        Ok(SubGenerator {
            index,
            w,
            skip,
            out_net,
        })
    }

    /// 1-based position `j`.
    pub fn index(&self) -> usize {
        self.index
    }

    pub fn hidden(&self) -> usize {
        self.w.cols()
    }

    pub fn num_params(&self) -> usize {
        self.w.data().len() + self.skip.len() + self.out_net.num_params()
    }

    fn input(&self, prefix: &[f64], z: f64) -> Result<Vec<f64>> {
        if prefix.len() + 1 != self.index {
            return Err(Error::shape(format!(
                "sub-generator {} expects a prefix of length {}, got {}",
                self.index,
                self.index - 1,
                prefix.len()
            )));
        }
        let mut u = Vec::with_capacity(self.index);
        u.extend_from_slice(prefix);
        u.push(z);
        Ok(u)
    }

    pub fn forward(&self, prefix: &[f64], z: f64) -> Result<f64> {
        let u = self.input(prefix, z)?;
        let h = self.w.matvec_t(&u)?;
        Ok(dot(&self.skip, &u) + self.out_net.eval(&h)?[0])
    }

    pub(crate) fn forward_cached(&self, prefix: &[f64], z: f64) -> Result<(f64, SubCache)> {
        let u = self.input(prefix, z)?;
        let h = self.w.matvec_t(&u)?;
        let (y, net) = self.out_net.forward(&h)?;
        Ok((dot(&self.skip, &u) + y[0], SubCache { input: u, net }))
    }

    /// Accumulates `dy`-scaled parameter gradients into `grad` (this sub-generator's
    /// slice) and returns the gradient with respect to the input `u`.
    pub(crate) fn backward(&self, cache: &SubCache, dy: f64, grad: &mut [f64]) -> Result<Vec<f64>> {
        let (dh, dnet) = self.out_net.backward(&cache.net, &[dy])?;
        let u = &cache.input;
        let hidden = self.hidden();
        let (gw, rest) = grad.split_at_mut(self.w.data().len());
        let (gskip, gnet) = rest.split_at_mut(self.index);
        for (k, &uk) in u.iter().enumerate() {
            for (g, &d) in gw[k * hidden..(k + 1) * hidden].iter_mut().zip(&dh) {
                *g += uk * d;
            }
        }
        for (g, &uk) in gskip.iter_mut().zip(u) {
            *g += uk * dy;
        }
        for (g, d) in gnet.iter_mut().zip(dnet) {
            *g += d;
        }
        let mut du = self.w.matvec(&dh)?;
        for (d, &s) in du.iter_mut().zip(&self.skip) {
            *d += s * dy;
        }
        Ok(du)
    }

    /// `[W | skip]`: one row per input, the last row belongs to the noise input.
    pub fn feature_block(&self) -> Matrix {
        let hidden = self.hidden();
        let mut m = Matrix::zeros(self.index, hidden + 1);
        for k in 0..self.index {
            m.row_mut(k)[..hidden].copy_from_slice(self.w.row(k));
            m.set(k, hidden, self.skip[k]);
        }
        m
    }

    /// Euclidean norm of the weights attached to input `k` (0-based, `k < j`).
    pub fn row_norm(&self, k: usize) -> f64 {
        let w = l2_norm(self.w.row(k));
        (w * w + self.skip[k] * self.skip[k]).sqrt()
    }

    pub fn penalty(&self) -> f64 {
        group_lasso(&self.feature_block())
    }

    fn add_penalty_grad(&self, weight: f64, grad: &mut [f64]) {
        if weight == 0.0 {
            return;
        }
        let sub = group_lasso_subgrad(&self.feature_block());
        let hidden = self.hidden();
        let nw = self.w.data().len();
        for k in 0..self.index {
            let row = sub.row(k);
            for (g, &s) in grad[k * hidden..(k + 1) * hidden].iter_mut().zip(&row[..hidden]) {
                *g += weight * s;
            }
            grad[nw + k] += weight * row[hidden];
        }
    }

    /// Zeroes every parameter tied to input `k`.
    pub(crate) fn zero_input_row(&mut self, k: usize) {
        self.w.row_mut(k).iter_mut().for_each(|v| *v = 0.0);
        self.skip[k] = 0.0;
    }

    fn zero_input_row_grad(&self, k: usize, grad: &mut [f64]) {
        let hidden = self.hidden();
        grad[k * hidden..(k + 1) * hidden].iter_mut().for_each(|v| *v = 0.0);
        grad[self.w.data().len() + k] = 0.0;
    }

    /// W (row-major), then skip, then out_net layer by layer.
    pub fn write_params(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(self.w.data());
        out.extend_from_slice(&self.skip);
        self.out_net.write_params(out);
    }

    pub fn read_params(&mut self, src: &[f64]) -> Result<usize> {
        let nw = self.w.data().len();
        if src.len() < nw + self.index {
            return Err(Error::shape("not enough parameters for sub-generator"));
        }
        self.w.data_mut().copy_from_slice(&src[..nw]);
        self.skip.copy_from_slice(&src[nw..nw + self.index]);
        Ok(nw + self.index + self.out_net.read_params(&src[nw + self.index..])?)
    }
}

/// Set of frozen `(column, input)` pairs, both 0-based with `input < column`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FreezeMask(BTreeSet<(usize, usize)>);

impl FreezeMask {
    pub fn new() -> Self {
        FreezeMask::default()
    }

    pub fn insert(&mut self, column: usize, input: usize) {
        self.0.insert((column, input));
    }

    pub fn contains(&self, column: usize, input: usize) -> bool {
        self.0.contains(&(column, input))
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.0.iter().copied()
    }
}

/// Row norms `‖[W_j | skip_j]^{k,:}‖₂` for every column `j` and earlier input `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowNorms {
    /// `norms[j][k]` for `k < j` (0-based).
    pub norms: Vec<Vec<f64>>,
}

impl RowNorms {
    pub fn get(&self, column: usize, input: usize) -> f64 {
        self.norms[column][input]
    }

    /// `(column, input, norm)` triples in column-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.norms
            .iter()
            .enumerate()
            .flat_map(|(j, row)| row.iter().enumerate().map(move |(k, &v)| (j, k, v)))
    }

    pub fn max(&self) -> f64 {
        self.entries().map(|e| e.2).fold(0.0, f64::max)
    }
}

/// The d sub-generators composed in column order.
#[derive(Debug, Clone, PartialEq)]
pub struct SequentialGenerator {
    subs: Vec<SubGenerator>,
    frozen: FreezeMask,
}

/// Forward record of a full sequential sample.
pub(crate) struct SampleCache {
    pub x: Vec<f64>,
    subs: Vec<SubCache>,
}

impl SequentialGenerator {
    pub fn zeros(d: usize, hidden: usize) -> Self {
        SequentialGenerator {
            subs: (1..=d).map(|j| SubGenerator::zeros(j, hidden)).collect(),
            frozen: FreezeMask::new(),
        }
    }

    pub fn init<R: Rng + ?Sized>(d: usize, hidden: usize, rng: &mut R) -> Self {
        SequentialGenerator {
            subs: (1..=d).map(|j| SubGenerator::init(j, hidden, rng)).collect(),
            frozen: FreezeMask::new(),
        }
    }

    pub fn from_subs(subs: Vec<SubGenerator>) -> Result<Self> {
        for (p, s) in subs.iter().enumerate() {
            if s.index() != p + 1 {
                return Err(Error::shape(format!(
                    "sub-generator at position {p} has index {}",
                    s.index()
                )));
            }
        }
        Ok(SequentialGenerator {
            subs,
            frozen: FreezeMask::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.subs.len()
    }

    pub fn subs(&self) -> &[SubGenerator] {
        &self.subs
    }

    pub fn subs_mut(&mut self) -> &mut [SubGenerator] {
        &mut self.subs
    }

    pub fn frozen(&self) -> &FreezeMask {
        &self.frozen
    }

    /// Installs a freeze mask and zeroes the rows it names.
    pub fn set_frozen(&mut self, mask: FreezeMask) -> Result<()> {
        for (j, k) in mask.iter() {
            if j >= self.dim() || k >= j {
                return Err(Error::shape(format!("invalid frozen row ({j}, {k})")));
            }
        }
        for (j, k) in mask.iter() {
            self.subs[j].zero_input_row(k);
        }
        self.frozen = mask;
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.subs.iter().map(SubGenerator::num_params).sum()
    }

    /// Generates one record from noise `z` (length d), column by column.
    pub fn sample(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.dim() {
            return Err(Error::shape(format!(
                "noise has {} entries, generator has {} columns",
                z.len(),
                self.dim()
            )));
        }
        let mut x = Vec::with_capacity(self.dim());
        for (s, &zj) in self.subs.iter().zip(z) {
            let xj = s.forward(&x, zj)?;
            x.push(xj);
        }
        Ok(x)
    }

    pub(crate) fn sample_cached(&self, z: &[f64]) -> Result<SampleCache> {
        if z.len() != self.dim() {
            return Err(Error::shape("noise length does not match generator"));
        }
        let mut x = Vec::with_capacity(self.dim());
        let mut subs = Vec::with_capacity(self.dim());
        for (s, &zj) in self.subs.iter().zip(z) {
            let (xj, c) = s.forward_cached(&x, zj)?;
            x.push(xj);
            subs.push(c);
        }
        Ok(SampleCache { x, subs })
    }

    /// Backpropagates `dx` (gradient w.r.t. the generated record) through the chain.
    pub(crate) fn backward(&self, cache: &SampleCache, mut dx: Vec<f64>, grad: &mut [f64]) -> Result<()> {
        let offsets = self.offsets();
        for j in (0..self.dim()).rev() {
            let s = &self.subs[j];
            let slice = &mut grad[offsets[j]..offsets[j] + s.num_params()];
            let du = s.backward(&cache.subs[j], dx[j], slice)?;
            for (d, g) in dx[..j].iter_mut().zip(&du[..j]) {
                *d += g;
            }
        }
        Ok(())
    }

    fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.subs
            .iter()
            .map(|s| {
                let o = acc;
                acc += s.num_params();
                o
            })
            .collect()
    }

    pub fn penalty(&self, sched: &PenaltySchedule) -> f64 {
        let lambdas = sched.weights(self.dim());
        self.subs
            .iter()
            .zip(&lambdas)
            .map(|(s, &l)| if l == 0.0 { 0.0 } else { l * s.penalty() })
            .sum()
    }

    pub(crate) fn add_penalty_grad(&self, sched: &PenaltySchedule, grad: &mut [f64]) {
        let lambdas = sched.weights(self.dim());
        for ((s, &l), o) in self.subs.iter().zip(&lambdas).zip(self.offsets()) {
            s.add_penalty_grad(l, &mut grad[o..o + s.num_params()]);
        }
    }

    /// Zeroes the gradient entries of frozen rows.
    pub fn mask_gradient(&self, grad: &mut [f64]) {
        let offsets = self.offsets();
        for (j, k) in self.frozen.iter() {
            let s = &self.subs[j];
            s.zero_input_row_grad(k, &mut grad[offsets[j]..offsets[j] + s.num_params()]);
        }
    }

    /// `θ ← θ - lr · grad`, leaving frozen rows untouched.
    pub fn apply_gradient(&mut self, grad: &[f64], lr: f64) -> Result<()> {
        if grad.len() != self.num_params() {
            return Err(Error::shape("generator gradient length mismatch"));
        }
        let mut g = grad.to_vec();
        self.mask_gradient(&mut g);
        let mut params = self.params();
        for (p, d) in params.iter_mut().zip(&g) {
            *p -= lr * d;
        }
        self.set_params(&params)
    }

    pub fn row_norms(&self) -> RowNorms {
        RowNorms {
            norms: self
                .subs
                .iter()
                .map(|s| (0..s.index() - 1).map(|k| s.row_norm(k)).collect())
                .collect(),
        }
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for s in &self.subs {
            s.write_params(&mut out);
        }
        out
    }

    pub fn set_params(&mut self, src: &[f64]) -> Result<()> {
        if src.len() != self.num_params() {
            return Err(Error::shape(format!(
                "expected {} generator parameters, got {}",
                self.num_params(),
                src.len()
            )));
        }
        let mut used = 0;
        for s in &mut self.subs {
            used += s.read_params(&src[used..])?;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|v| v.is_finite())
    }
}

/// Gradient over all generator parameters of `-mean_i f(g(Z_i)) + Σ_j λ_j L(W_j)`.
///
/// Frozen rows get exactly zero gradient.
pub fn generator_grad<Z: AsRef<[f64]>>(
    f: &Discriminator,
    g: &SequentialGenerator,
    z_batch: &[Z],
    sched: &PenaltySchedule,
) -> Result<Vec<f64>> {
    if z_batch.is_empty() {
        return Err(Error::usage("generator_grad needs a non-empty noise batch"));
    }
    let scale = -1.0 / z_batch.len() as f64;
    let mut grad = vec![0.0; g.num_params()];
    for z in z_batch {
        let cache = g.sample_cached(z.as_ref())?;
        let dx = f.input_grad(&cache.x, scale)?;
        g.backward(&cache, dx, &mut grad)?;
    }
    g.add_penalty_grad(sched, &mut grad);
    g.mask_gradient(&mut grad);
    Ok(grad)
}

/// Applies [`prune`] semantics: returns a copy with every row whose norm is at most
/// `tau` zeroed and frozen, together with the resulting mask.
pub fn prune(g: &SequentialGenerator, tau: f64) -> Result<(SequentialGenerator, FreezeMask)> {
    if !(tau >= 0.0) {
        return Err(Error::usage(format!("prune threshold must be >= 0, got {tau}")));
    }
    let mut mask = g.frozen().clone();
    for (j, k, norm) in g.row_norms().entries() {
        if norm <= tau {
            mask.insert(j, k);
        }
    }
    let mut out = g.clone();
    out.set_frozen(mask.clone())?;
    Ok((out, mask))
}
