//! Distribution-similarity metrics between a synthetic and a held-out table,
//! plus a small downstream-regression harness.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Table;
use crate::error::{Error, Result};
use crate::nn::{Activation, DenseLayer, Mlp};

pub const DEFAULT_BINS: usize = 20;
const RANGE_PAD: f64 = 0.005;
/// Ridge penalty of the downstream linear model.
pub const RIDGE_LAMBDA: f64 = 1e-3;

fn check_columns(x: &Table, y: &Table) -> Result<()> {
    if x.n_cols() != y.n_cols() {
        return Err(Error::usage(format!(
            "tables have {} and {} columns",
            x.n_cols(),
            y.n_cols()
        )));
    }
    if x.n_rows() == 0 || y.n_rows() == 0 {
        return Err(Error::usage("metrics need non-empty tables"));
    }
    Ok(())
}

/// Equal-width bins for one column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinRange {
    pub min: f64,
    pub max: f64,
    pub bins: usize,
}

impl BinRange {
    /// Out-of-range values land in the edge bins.
    pub fn index(&self, v: f64) -> usize {
        let t = (v - self.min) / (self.max - self.min) * self.bins as f64;
        if t <= 0.0 {
            0
        } else {
            (t.floor() as usize).min(self.bins - 1)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinGrid {
    pub columns: Vec<BinRange>,
}

impl BinGrid {
    /// Fits per-column ranges on `t` with 0.5% padding on each side.
    pub fn fit(t: &Table, bins: usize) -> Result<Self> {
        if bins < 2 {
            return Err(Error::usage("bin grid needs at least 2 bins"));
        }
        if t.n_rows() == 0 {
            return Err(Error::usage("cannot fit a bin grid on an empty table"));
        }
        let columns = (0..t.n_cols())
            .map(|j| {
                let col = t.column(j);
                let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let pad = if hi > lo { RANGE_PAD * (hi - lo) } else { 0.5 };
                BinRange {
                    min: lo - pad,
                    max: hi + pad,
                    bins,
                }
            })
            .collect();
        Ok(BinGrid { columns })
    }

    fn histogram(&self, t: &Table, j: usize) -> Vec<f64> {
        let r = self.columns[j];
        let mut h = vec![0.0; r.bins];
        for row in t.rows() {
            h[r.index(row[j])] += 1.0;
        }
        let n = t.n_rows() as f64;
        h.iter_mut().for_each(|v| *v /= n);
        h
    }

    fn histogram_2d(&self, t: &Table, i: usize, j: usize) -> Vec<f64> {
        let (ri, rj) = (self.columns[i], self.columns[j]);
        let mut h = vec![0.0; ri.bins * rj.bins];
        for row in t.rows() {
            h[ri.index(row[i]) * rj.bins + rj.index(row[j])] += 1.0;
        }
        let n = t.n_rows() as f64;
        h.iter_mut().for_each(|v| *v /= n);
        h
    }
}

fn half_l1(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// 1-Wasserstein distance between two samples using a common grid of
/// `m = max(|a|, |b|)` quantile levels `p_i = (i + 1/2)/m`.
///
/// Quantiles are the left-continuous inverse `inf{x : F(x) >= p}`, i.e. the
/// `ceil(p·n)`-th order statistic, computed in integer arithmetic.
pub fn wd_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::usage("wasserstein distance needs non-empty samples"));
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    let m = sa.len().max(sb.len());
    let quantile = |s: &[f64], i: usize| s[((2 * i + 1) * s.len()).div_ceil(2 * m) - 1];
    let total: f64 = (0..m).map(|i| (quantile(&sa, i) - quantile(&sb, i)).abs()).sum();
    Ok(total / m as f64)
}

/// Mean over columns of [`wd_1d`].
pub fn wd_table(x: &Table, y: &Table) -> Result<f64> {
    check_columns(x, y)?;
    let d = x.n_cols();
    let mut total = 0.0;
    for j in 0..d {
        total += wd_1d(&x.column(j), &y.column(j))?;
    }
    Ok(total / d as f64)
}

/// Per-pair TVD of the binned 2-D marginals, `i < j`, in lexicographic order.
pub fn tvd_2way_pairs(x: &Table, y: &Table, grid: &BinGrid) -> Result<Vec<f64>> {
    check_columns(x, y)?;
    let d = x.n_cols();
    if d < 2 {
        return Err(Error::usage("2-way TVD needs at least two columns"));
    }
    if grid.columns.len() != d {
        return Err(Error::usage("bin grid does not match tables"));
    }
    let mut out = Vec::with_capacity(d * (d - 1) / 2);
    for i in 0..d {
        for j in i + 1..d {
            out.push(half_l1(&grid.histogram_2d(x, i, j), &grid.histogram_2d(y, i, j)));
        }
    }
    Ok(out)
}

/// Mean over column pairs of the 2-way marginal TVD.
pub fn tvd_2way(x: &Table, y: &Table, grid: &BinGrid) -> Result<f64> {
    let pairs = tvd_2way_pairs(x, y, grid)?;
    Ok(pairs.iter().sum::<f64>() / pairs.len() as f64)
}

/// Mean over columns of the 1-way marginal TVD.
pub fn tvd_1way(x: &Table, y: &Table, grid: &BinGrid) -> Result<f64> {
    check_columns(x, y)?;
    if grid.columns.len() != x.n_cols() {
        return Err(Error::usage("bin grid does not match tables"));
    }
    let d = x.n_cols();
    let total: f64 = (0..d)
        .map(|j| half_l1(&grid.histogram(x, j), &grid.histogram(y, j)))
        .sum();
    Ok(total / d as f64)
}

fn kl_to_mixture(p: &[f64], m: &[f64]) -> f64 {
    p.iter()
        .zip(m)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &mi)| pi * (pi / mi).ln())
        .sum()
}

/// Sum over columns of the binned Jensen–Shannon divergence (natural log).
pub fn js_divergence(x: &Table, y: &Table, grid: &BinGrid) -> Result<f64> {
    check_columns(x, y)?;
    if grid.columns.len() != x.n_cols() {
        return Err(Error::usage("bin grid does not match tables"));
    }
    let mut total = 0.0;
    for j in 0..x.n_cols() {
        let p = grid.histogram(x, j);
        let q = grid.histogram(y, j);
        let m: Vec<f64> = p.iter().zip(&q).map(|(a, b)| 0.5 * (a + b)).collect();
        total += 0.5 * kl_to_mixture(&p, &m) + 0.5 * kl_to_mixture(&q, &m);
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Bandwidth {
    /// Median pairwise distance of the pooled sample.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MmdEstimate {
    /// Unbiased squared-MMD estimate, possibly negative.
    pub raw: f64,
    /// `max(raw, 0)`.
    pub value: f64,
    pub bandwidth: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Median pairwise distance of the pooled rows. Falls back to the median of the
/// strictly positive distances when more than half the pairs coincide.
pub fn median_heuristic(x: &Table, y: &Table) -> Result<f64> {
    let pooled: Vec<&[f64]> = x.rows().chain(y.rows()).collect();
    let mut dists = Vec::with_capacity(pooled.len() * pooled.len() / 2);
    for i in 0..pooled.len() {
        for j in i + 1..pooled.len() {
            dists.push(sq_dist(pooled[i], pooled[j]).sqrt());
        }
    }
    let median = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        }
    };
    if dists.is_empty() {
        return Err(Error::Metric("median heuristic needs at least two rows".into()));
    }
    let h = median(&mut dists);
    if h > 0.0 {
        return Ok(h);
    }
    let mut positive: Vec<f64> = dists.into_iter().filter(|&d| d > 0.0).collect();
    if positive.is_empty() {
        return Err(Error::Metric("degenerate bandwidth: all pairwise distances are 0".into()));
    }
    Ok(median(&mut positive))
}

/// Unbiased squared MMD with Gaussian kernel `exp(-‖x-y‖²/(2h²))`.
pub fn mmd(x: &Table, y: &Table, bandwidth: Bandwidth) -> Result<MmdEstimate> {
    check_columns(x, y)?;
    let (m, n) = (x.n_rows(), y.n_rows());
    if m < 2 || n < 2 {
        return Err(Error::usage("unbiased MMD needs at least two rows per table"));
    }
    let h = match bandwidth {
        Bandwidth::Auto => median_heuristic(x, y)?,
        Bandwidth::Fixed(h) if h > 0.0 => h,
        Bandwidth::Fixed(h) => return Err(Error::usage(format!("bandwidth must be > 0, got {h}"))),
    };
    let k = |a: &[f64], b: &[f64]| (-sq_dist(a, b) / (2.0 * h * h)).exp();
    let within = |t: &Table| {
        let rows: Vec<&[f64]> = t.rows().collect();
        let mut s = 0.0;
        for i in 0..rows.len() {
            for j in i + 1..rows.len() {
                s += k(rows[i], rows[j]);
            }
        }
        2.0 * s / (rows.len() * (rows.len() - 1)) as f64
    };
    let mut cross = 0.0;
    for a in x.rows() {
        for b in y.rows() {
            cross += k(a, b);
        }
    }
    let raw = within(x) + within(y) - 2.0 * cross / (m * n) as f64;
    Ok(MmdEstimate {
        raw,
        value: raw.max(0.0),
        bandwidth: h,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DownstreamModel {
    Ridge,
    SmallMlp,
}

impl std::str::FromStr for DownstreamModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ridge" => Ok(DownstreamModel::Ridge),
            "small_mlp" | "mlp" => Ok(DownstreamModel::SmallMlp),
            other => Err(Error::usage(format!("unknown downstream model {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Efficacy {
    pub r2: f64,
    pub rmse: f64,
}

pub fn r2_score(truth: &[f64], pred: &[f64]) -> Result<f64> {
    let n = truth.len() as f64;
    let mean = truth.iter().sum::<f64>() / n;
    let ss_tot: f64 = truth.iter().map(|v| (v - mean).powi(2)).sum();
    if !(ss_tot > 0.0) {
        return Err(Error::Efficacy("test target has zero variance".into()));
    }
    let ss_res: f64 = truth.iter().zip(pred).map(|(t, p)| (t - p).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn rmse(truth: &[f64], pred: &[f64]) -> f64 {
    let n = truth.len() as f64;
    (truth.iter().zip(pred).map(|(t, p)| (t - p).powi(2)).sum::<f64>() / n).sqrt()
}

/// Linear model `y ≈ intercept + xᵀβ` with an unpenalized intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeFit {
    pub intercept: f64,
    pub coef: Vec<f64>,
}

impl RidgeFit {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + crate::nn::dot(&self.coef, x)
    }
}

pub fn fit_ridge(features: &[Vec<f64>], target: &[f64], lambda: f64) -> Result<RidgeFit> {
    let n = features.len();
    let p = features.first().map_or(0, Vec::len);
    if n == 0 || n != target.len() {
        return Err(Error::shape("ridge needs matching non-empty features and target"));
    }
    let x_mean: Vec<f64> = (0..p)
        .map(|c| features.iter().map(|r| r[c]).sum::<f64>() / n as f64)
        .collect();
    let y_mean = target.iter().sum::<f64>() / n as f64;
    let x = DMatrix::from_fn(n, p, |r, c| features[r][c] - x_mean[c]);
    let y = DVector::from_iterator(n, target.iter().map(|v| v - y_mean));
    let gram = x.transpose() * &x + DMatrix::identity(p, p) * lambda;
    let rhs = x.transpose() * y;
    let beta = gram
        .clone()
        .cholesky()
        .map(|c| c.solve(&rhs))
        .or_else(|| gram.lu().solve(&rhs))
        .ok_or_else(|| Error::Efficacy("singular ridge system".into()))?;
    let coef: Vec<f64> = beta.iter().copied().collect();
    let intercept = y_mean - crate::nn::dot(&coef, &x_mean);
    Ok(RidgeFit { intercept, coef })
}

fn standardize_stats(cols: &[Vec<f64>]) -> Vec<(f64, f64)> {
    let p = cols.first().map_or(0, Vec::len);
    let n = cols.len() as f64;
    (0..p)
        .map(|c| {
            let m = cols.iter().map(|r| r[c]).sum::<f64>() / n;
            let s = (cols.iter().map(|r| (r[c] - m).powi(2)).sum::<f64>() / n).sqrt();
            (m, if s > 0.0 { s } else { 1.0 })
        })
        .collect()
}

const MLP_HIDDEN: usize = 16;
const MLP_EPOCHS: usize = 400;
const MLP_LR: f64 = 0.05;

/// One-hidden-layer regressor trained by full-batch gradient descent on
/// standardized inputs and target.
fn fit_predict_mlp(train_x: &[Vec<f64>], train_y: &[f64], test_x: &[Vec<f64>], seed: u64) -> Result<Vec<f64>> {
    let xs = standardize_stats(train_x);
    let ycol: Vec<Vec<f64>> = train_y.iter().map(|&v| vec![v]).collect();
    let (ym, ys) = standardize_stats(&ycol)[0];
    let scale = |r: &Vec<f64>| -> Vec<f64> { r.iter().zip(&xs).map(|(v, (m, s))| (v - m) / s).collect() };
    let inputs: Vec<Vec<f64>> = train_x.iter().map(scale).collect();
    let targets: Vec<f64> = train_y.iter().map(|v| (v - ym) / ys).collect();
    let p = xs.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Mlp::new(vec![
        DenseLayer::init(p, MLP_HIDDEN, Activation::leaky(), &mut rng),
        DenseLayer::init(MLP_HIDDEN, 1, Activation::Identity, &mut rng),
    ])?;
    let n = inputs.len() as f64;
    for _ in 0..MLP_EPOCHS {
        let mut grad = vec![0.0; net.num_params()];
        for (x, &t) in inputs.iter().zip(&targets) {
            let (y, cache) = net.forward(x)?;
            let (_, g) = net.backward(&cache, &[2.0 * (y[0] - t) / n])?;
            for (a, b) in grad.iter_mut().zip(g) {
                *a += b;
            }
        }
        let mut params = Vec::with_capacity(grad.len());
        net.write_params(&mut params);
        for (v, g) in params.iter_mut().zip(&grad) {
            *v -= MLP_LR * g;
        }
        net.read_params(&params)?;
    }
    test_x
        .iter()
        .map(|r| Ok(net.eval(&scale(r))?[0] * ys + ym))
        .collect()
}

/// Fits `model` on `train` to predict `target` from the other columns and scores it on `test`.
pub fn downstream_efficacy(train: &Table, test: &Table, target: &str, model: DownstreamModel) -> Result<Efficacy> {
    if train.names() != test.names() {
        return Err(Error::usage("train and test tables have different columns"));
    }
    let t = train
        .column_index(target)
        .ok_or_else(|| Error::usage(format!("target column {target:?} not found")))?;
    if train.n_rows() < 10 || test.n_rows() < 10 {
        return Err(Error::Efficacy("need at least 10 rows in each table".into()));
    }
    let split = |tab: &Table| -> (Vec<Vec<f64>>, Vec<f64>) {
        tab.rows()
            .map(|r| {
                let x: Vec<f64> = r.iter().enumerate().filter(|(c, _)| *c != t).map(|(_, v)| *v).collect();
                (x, r[t])
            })
            .unzip()
    };
    let (train_x, train_y) = split(train);
    let (test_x, test_y) = split(test);
    let pred: Vec<f64> = match model {
        DownstreamModel::Ridge => {
            let fit = fit_ridge(&train_x, &train_y, RIDGE_LAMBDA)?;
            test_x.iter().map(|x| fit.predict(x)).collect()
        }
        DownstreamModel::SmallMlp => fit_predict_mlp(&train_x, &train_y, &test_x, 0)?,
    };
    Ok(Efficacy {
        r2: r2_score(&test_y, &pred)?,
        rmse: rmse(&test_y, &pred),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub bins: usize,
    pub bandwidth: Bandwidth,
    pub target: Option<String>,
    pub models: Vec<DownstreamModel>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            bins: DEFAULT_BINS,
            bandwidth: Bandwidth::Auto,
            target: None,
            models: vec![DownstreamModel::Ridge],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficacyEntry {
    pub model: DownstreamModel,
    pub r2: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub wd: f64,
    /// Mean over column pairs (headline value).
    pub tvd_2way: f64,
    /// Sum over column pairs.
    pub tvd_2way_sum: f64,
    pub tvd_1way: f64,
    pub mmd: f64,
    pub js: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub efficacy: Option<Vec<EfficacyEntry>>,
    pub meta: MetricMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricMeta {
    pub bins: usize,
    pub bandwidth: f64,
    pub n_synthetic: usize,
    pub n_test: usize,
    pub notes: Vec<String>,
}

/// Computes every similarity metric of `synthetic` against `test`; the bin grid is fitted on `test`.
pub fn evaluate(synthetic: &Table, test: &Table, opts: &EvalOptions) -> Result<MetricReport> {
    check_columns(synthetic, test)?;
    if synthetic.names() != test.names() {
        return Err(Error::usage("synthetic and test tables have different column names"));
    }
    let grid = BinGrid::fit(test, opts.bins)?;
    let (tvd_2way, tvd_2way_sum) = if test.n_cols() >= 2 {
        let pairs = tvd_2way_pairs(synthetic, test, &grid)?;
        (pairs.iter().sum::<f64>() / pairs.len() as f64, pairs.iter().sum())
    } else {
        (0.0, 0.0)
    };
    let m = mmd(synthetic, test, opts.bandwidth)?;
    let efficacy = match &opts.target {
        None => None,
        Some(target) => Some(
            opts.models
                .iter()
                .map(|&model| {
                    let e = downstream_efficacy(synthetic, test, target, model)?;
                    Ok(EfficacyEntry {
                        model,
                        r2: e.r2,
                        rmse: e.rmse,
                    })
                })
                .collect::<Result<Vec<_>>>()?,
        ),
    };
    Ok(MetricReport {
        wd: wd_table(synthetic, test)?,
        tvd_2way,
        tvd_2way_sum,
        tvd_1way: tvd_1way(synthetic, test, &grid)?,
        mmd: m.value,
        js: js_divergence(synthetic, test, &grid)?,
        efficacy,
        meta: MetricMeta {
            bins: opts.bins,
            bandwidth: m.bandwidth,
            n_synthetic: synthetic.n_rows(),
            n_test: test.n_rows(),
            notes: vec![
                "wd: mean of per-column 1-D Wasserstein distances".into(),
                "js: sum over columns of binned JS divergence (natural log)".into(),
                "tvd_2way: mean over column pairs; tvd_2way_sum: sum over pairs".into(),
            ],
        },
    })
}
