//! The alternating training loop: private critic updates every step, generator
//! updates every `t_g` steps, and the optional prune-then-refit pipeline.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Table;
use crate::error::{Error, Result};
use crate::model::{
    discriminator_per_example_grad, generator_grad, prune, Discriminator, FreezeMask, PenaltySchedule, RowNorms,
    SequentialGenerator, DEFAULT_CLAMP, DEFAULT_HIDDEN,
};
use crate::privacy::{epsilon_for, privatize, DpConfig, PrivacyLedger, DEFAULT_DELTA};

pub use crate::model::lambda_schedule;

/// Objective magnitude beyond which training is treated as diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

/// Hyperparameters of a training run.
///
/// Field names double as the keys of TOML/JSON config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Generator learning rate.
    pub eta_theta: f64,
    /// Critic learning rate.
    pub eta_nu: f64,
    /// Number of critic steps.
    #[serde(rename = "T")]
    pub steps: usize,
    /// One generator update every `t_g` critic steps.
    pub t_g: usize,
    /// Expected batch size; the Poisson rate is `batch / n`.
    pub batch: usize,
    pub lambda: f64,
    pub gamma: f64,
    pub tau: f64,
    /// `sample_rate` is overwritten with `batch / n` when training starts.
    pub dp: DpConfig,
    pub delta: f64,
    pub seed: u64,
    pub two_step: bool,
    /// Critic weight-clipping bound.
    pub clamp: f64,
    /// Width `L` of each sub-generator's projection.
    pub hidden: usize,
    /// Trace interval in steps.
    pub log_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            eta_theta: 0.001,
            eta_nu: 0.01,
            steps: 1000,
            t_g: 10,
            batch: 50,
            lambda: 0.003,
            gamma: 0.0,
            tau: 0.0,
            dp: DpConfig::default(),
            delta: DEFAULT_DELTA,
            seed: 0,
            two_step: false,
            clamp: DEFAULT_CLAMP,
            hidden: DEFAULT_HIDDEN,
            log_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [("eta_theta", self.eta_theta), ("eta_nu", self.eta_nu), ("clamp", self.clamp)];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::usage(format!("{name} must be a positive finite number, got {v}")));
            }
        }
        for (name, v) in [("T", self.steps), ("t_g", self.t_g), ("batch", self.batch), ("hidden", self.hidden)] {
            if v == 0 {
                return Err(Error::usage(format!("{name} must be >= 1")));
            }
        }
        if !(self.lambda >= 0.0) || !self.gamma.is_finite() {
            return Err(Error::usage("lambda must be >= 0 and gamma finite"));
        }
        if !(self.tau >= 0.0) {
            return Err(Error::usage(format!("tau must be >= 0, got {}", self.tau)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::usage(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        let mut dp = self.dp.clone();
        dp.sample_rate = 1.0;
        dp.validate()
    }

    pub fn penalty(&self) -> Result<PenaltySchedule> {
        PenaltySchedule::new(self.lambda, self.gamma)
    }

    /// The DP configuration with `q = batch / n`.
    pub fn dp_for(&self, n: usize) -> Result<DpConfig> {
        if n < self.batch {
            return Err(Error::usage(format!("table has {n} rows, fewer than batch size {}", self.batch)));
        }
        let mut dp = self.dp.clone();
        dp.sample_rate = self.batch as f64 / n as f64;
        Ok(dp)
    }
}

/// Read access to the private table. Training only goes through this trait so that
/// accesses can be counted.
pub trait PrivateRows: Sync {
    fn n_rows(&self) -> usize;
    fn n_cols(&self) -> usize;
    fn row(&self, i: usize) -> &[f64];
}

impl PrivateRows for Table {
    fn n_rows(&self) -> usize {
        Table::n_rows(self)
    }

    fn n_cols(&self) -> usize {
        Table::n_cols(self)
    }

    fn row(&self, i: usize) -> &[f64] {
        Table::row(self, i)
    }
}

/// Wraps a table and counts row reads.
#[derive(Debug)]
pub struct CountingRows<'a> {
    inner: &'a Table,
    reads: AtomicUsize,
}

impl<'a> CountingRows<'a> {
    pub fn new(inner: &'a Table) -> Self {
        CountingRows {
            inner,
            reads: AtomicUsize::new(0),
        }
    }

    pub fn reads(&self) -> usize {
        self.reads.load(Ordering::SeqCst)
    }
}

impl PrivateRows for CountingRows<'_> {
    fn n_rows(&self) -> usize {
        self.inner.n_rows()
    }

    fn n_cols(&self) -> usize {
        self.inner.n_cols()
    }

    fn row(&self, i: usize) -> &[f64] {
        self.reads.fetch_add(1, Ordering::SeqCst);
        self.inner.row(i)
    }
}

/// Indices included independently with probability `q`.
pub fn poisson_batch<R: Rng + ?Sized>(n: usize, q: f64, rng: &mut R) -> Result<Vec<usize>> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::usage(format!("sampling rate must lie in (0, 1], got {q}")));
    }
    if q == 1.0 {
        return Ok((0..n).collect());
    }
    Ok((0..n).filter(|_| rng.random::<f64>() < q).collect())
}

/// Independent generators for each source of randomness.
#[derive(Debug, Clone)]
pub struct RngStreams {
    pub init: ChaCha8Rng,
    pub batch: ChaCha8Rng,
    pub noise: ChaCha8Rng,
    pub z: ChaCha8Rng,
}

impl RngStreams {
    pub fn new(seed: u64) -> Self {
        let stream = |s: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s);
            rng
        };
        RngStreams {
            init: stream(0),
            batch: stream(1),
            noise: stream(2),
            z: stream(3),
        }
    }
}

pub fn sample_noise<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect())
        .collect()
}

/// Draws `n` rows from the generator with noise from `rng`.
pub fn generate<R: Rng + ?Sized>(g: &SequentialGenerator, n: usize, names: Vec<String>, rng: &mut R) -> Result<Table> {
    let d = g.dim();
    let mut values = Vec::with_capacity(n * d);
    for z in sample_noise(n, d, rng) {
        values.extend(g.sample(&z)?);
    }
    Table::new(names, n, values)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub phase: usize,
    pub step: usize,
    /// Batch estimate of `mean f(X) - mean f(g(Z))` before the critic update.
    pub objective: f64,
    /// Weighted group-lasso penalty after the step.
    pub penalty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub phase: usize,
    pub steps: usize,
    pub generator_updates: usize,
    pub skipped_batches: usize,
    pub rows_read: usize,
    pub penalized: bool,
    /// Cumulative ε of the shared ledger at the end of this phase.
    #[serde(with = "crate::privacy::inf_as_string")]
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub seed: u64,
    /// `false` when `σ = 0`; ε is then infinite.
    pub private: bool,
    #[serde(with = "crate::privacy::inf_as_string")]
    pub epsilon: f64,
    pub delta: f64,
    pub argmin_order: Option<u32>,
    pub sample_rate: f64,
    pub noise_multiplier: f64,
    pub clip_norm: f64,
    pub ledger: PrivacyLedger,
    pub phases: Vec<PhaseReport>,
    pub trace: Vec<TracePoint>,
    pub row_norms: RowNorms,
    /// Frozen `(column, input)` rows, 0-based; present after two-step training.
    pub mask: Option<Vec<[usize; 2]>>,
    /// Caveats about the run that the numbers above do not capture.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    pub wall_clock_secs: f64,
}

impl TrainReport {
    pub fn generator_updates(&self) -> usize {
        self.phases.iter().map(|p| p.generator_updates).sum()
    }

    pub fn rows_read(&self) -> usize {
        self.phases.iter().map(|p| p.rows_read).sum()
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Mutable state shared across phases.
struct Session<'a, D: PrivateRows> {
    data: &'a D,
    cfg: &'a TrainConfig,
    dp: DpConfig,
    streams: RngStreams,
    ledger: PrivacyLedger,
    trace: Vec<TracePoint>,
}

impl<D: PrivateRows> Session<'_, D> {
    fn run_phase(
        &mut self,
        phase: usize,
        g: &mut SequentialGenerator,
        f: &mut Discriminator,
        sched: &PenaltySchedule,
    ) -> Result<PhaseReport> {
        let (n, d, b) = (self.data.n_rows(), self.data.n_cols(), self.cfg.batch);
        let mut report = PhaseReport {
            phase,
            steps: self.cfg.steps,
            generator_updates: 0,
            skipped_batches: 0,
            rows_read: 0,
            penalized: sched.lambda > 0.0,
            epsilon: 0.0,
        };
        for t in 1..=self.cfg.steps {
            let idx = poisson_batch(n, self.dp.sample_rate, &mut self.streams.batch)?;
            self.ledger.compose(&self.dp, 1)?;
            let mut objective = f64::NAN;
            if idx.is_empty() {
                report.skipped_batches += 1;
            } else {
                let zs = sample_noise(idx.len(), d, &mut self.streams.z);
                let mut grads = Vec::with_capacity(idx.len());
                let (mut real, mut fake) = (0.0, 0.0);
                for (&i, z) in idx.iter().zip(&zs) {
                    let ex = discriminator_per_example_grad(f, g, self.data.row(i), z)?;
                    real += ex.real_score;
                    fake += ex.fake_score;
                    grads.push(ex.grad);
                }
                report.rows_read += idx.len();
                objective = (real - fake) / idx.len() as f64;
                let step = privatize(&grads, &self.dp, &mut self.streams.noise)?;
                f.apply_gradient(&step, self.cfg.eta_nu)?;
            }
            if t % self.cfg.t_g == 0 {
                let zs = sample_noise(b, d, &mut self.streams.z);
                let grad = generator_grad(f, g, &zs, sched)?;
                g.apply_gradient(&grad, self.cfg.eta_theta)?;
                report.generator_updates += 1;
            }
            if objective.abs() > DIVERGENCE_LIMIT {
                return Err(Error::Divergence {
                    step: t,
                    reason: format!("objective magnitude {objective:e} exceeds {DIVERGENCE_LIMIT:e}"),
                });
            }
            if !g.is_finite() || !f.is_finite() {
                return Err(Error::Divergence {
                    step: t,
                    reason: "non-finite model parameter".into(),
                });
            }
            if t % self.cfg.log_every.max(1) == 0 || t == self.cfg.steps {
                self.trace.push(TracePoint {
                    phase,
                    step: t,
                    objective,
                    penalty: g.penalty(sched),
                });
            }
        }
        report.epsilon = self.ledger.epsilon()?;
        Ok(report)
    }
}

fn check_data<D: PrivateRows>(data: &D, cfg: &TrainConfig) -> Result<DpConfig> {
    cfg.validate()?;
    if data.n_cols() == 0 {
        return Err(Error::usage("training table has no columns"));
    }
    cfg.dp_for(data.n_rows())
}

fn finish<D: PrivateRows>(
    session: Session<'_, D>,
    g: &SequentialGenerator,
    phases: Vec<PhaseReport>,
    mask: Option<&FreezeMask>,
    start: Instant,
) -> Result<TrainReport> {
    let (epsilon, order) = session.ledger.epsilon_with_order()?;
    let private = session.dp.noise_multiplier > 0.0;
    Ok(TrainReport {
        seed: session.cfg.seed,
        private,
        epsilon,
        delta: session.ledger.delta,
        argmin_order: private.then_some(order),
        sample_rate: session.dp.sample_rate,
        noise_multiplier: session.dp.noise_multiplier,
        clip_norm: session.dp.clip_norm,
        ledger: session.ledger,
        phases,
        trace: session.trace,
        row_norms: g.row_norms(),
        mask: mask.map(|m| m.iter().map(|(j, k)| [j, k]).collect()),
        notes: Vec::new(),
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

fn start_session<'a, D: PrivateRows>(
    data: &'a D,
    cfg: &'a TrainConfig,
) -> Result<(Session<'a, D>, SequentialGenerator, Discriminator)> {
    let dp = check_data(data, cfg)?;
    let mut streams = RngStreams::new(cfg.seed);
    let d = data.n_cols();
    let g = SequentialGenerator::init(d, cfg.hidden, &mut streams.init);
    let f = Discriminator::init(d, cfg.clamp, &mut streams.init)?;
    let ledger = PrivacyLedger::new(dp.orders.clone(), cfg.delta)?;
    Ok((
        Session {
            data,
            cfg,
            dp,
            streams,
            ledger,
            trace: Vec::new(),
        },
        g,
        f,
    ))
}

/// Trains a generator and critic with the penalized objective for `cfg.steps` steps.
pub fn train_prada<D: PrivateRows>(
    data: &D,
    cfg: &TrainConfig,
) -> Result<(SequentialGenerator, Discriminator, TrainReport)> {
    let start = Instant::now();
    let (mut session, mut g, mut f) = start_session(data, cfg)?;
    let phase = session.run_phase(1, &mut g, &mut f, &cfg.penalty()?)?;
    let report = finish(session, &g, vec![phase], None, start)?;
    Ok((g, f, report))
}

/// Penalized phase, pruning at `cfg.tau`, then `cfg.steps` unpenalized steps with the
/// pruned rows frozen. Both phases are charged to one ledger and the critic carries over.
pub fn train_two_step<D: PrivateRows>(
    data: &D,
    cfg: &TrainConfig,
) -> Result<(SequentialGenerator, Discriminator, TrainReport)> {
    let start = Instant::now();
    let (mut session, mut g, mut f) = start_session(data, cfg)?;
    let first = session.run_phase(1, &mut g, &mut f, &cfg.penalty()?)?;
    let (mut g, mask) = prune(&g, cfg.tau)?;
    let second = session.run_phase(2, &mut g, &mut f, &PenaltySchedule::none())?;
    let report = finish(session, &g, vec![first, second], Some(&mask), start)?;
    Ok((g, f, report))
}

/// ε recomputed from scratch for a finished run.
pub fn recompute_epsilon(report: &TrainReport) -> Result<f64> {
    let steps: usize = report.phases.iter().map(|p| p.steps).sum();
    epsilon_for(
        report.sample_rate,
        report.noise_multiplier,
        steps as u64,
        report.delta,
        &report.ledger.orders,
    )
}

/// Threshold halfway across the widest gap between consecutive sorted norms.
/// Returns `None` with fewer than two norms.
pub fn largest_gap_threshold(norms: &[f64]) -> Option<f64> {
    let mut sorted = norms.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted
        .windows(2)
        .max_by(|a, b| (a[1] - a[0]).total_cmp(&(b[1] - b[0])))
        .map(|w| 0.5 * (w[0] + w[1]))
}

/// Edges `(input, column)` whose row norm lies above the largest-gap threshold.
pub fn select_edges(norms: &RowNorms) -> BTreeSet<(usize, usize)> {
    let values: Vec<f64> = norms.entries().map(|e| e.2).collect();
    match largest_gap_threshold(&values) {
        None => norms.entries().map(|(j, k, _)| (k, j)).collect(),
        Some(cut) => norms.entries().filter(|e| e.2 > cut).map(|(j, k, _)| (k, j)).collect(),
    }
}

/// F1 score of a predicted edge set; 1 when both sets are empty.
pub fn edge_f1(predicted: &BTreeSet<(usize, usize)>, truth: &BTreeSet<(usize, usize)>) -> f64 {
    if predicted.is_empty() && truth.is_empty() {
        return 1.0;
    }
    let tp = predicted.intersection(truth).count() as f64;
    2.0 * tp / (predicted.len() + truth.len()) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sem::{sample_er_dag, sample_weights, simulate, SemKind, SemSpec};

    fn toy_table(d: usize, n: usize, seed: u64) -> Table {
        let dag = sample_er_dag(d, d, seed).unwrap();
        let spec = SemSpec::new(SemKind::Linear);
        let w = sample_weights(&dag, &spec, seed).unwrap();
        simulate(&dag, &w, &spec, n, seed).unwrap()
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            steps: 40,
            t_g: 5,
            batch: 20,
            log_every: 10,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn lambda_schedule_examples() {
        assert_eq!(lambda_schedule(0.5, 0.0, 3), vec![0.5; 3]);
        assert_eq!(lambda_schedule(0.0, 0.7, 4), vec![0.0; 4]);
        let l = lambda_schedule(0.003, 0.2, 20);
        assert_eq!(l[19], 0.003 * 20f64.powf(0.2));
    }

    #[test]
    fn poisson_full_rate_takes_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(poisson_batch(7, 1.0, &mut rng).unwrap(), (0..7).collect::<Vec<_>>());
        assert!(poisson_batch(7, 0.0, &mut rng).is_err());
        assert!(poisson_batch(7, 1.5, &mut rng).is_err());
    }

    #[test]
    fn poisson_mean_batch_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (n, q) = (12384, 0.004);
        let draws = 10_000;
        let total: usize = (0..draws).map(|_| poisson_batch(n, q, &mut rng).unwrap().len()).sum();
        let mean = total as f64 / draws as f64;
        assert!((mean / (n as f64 * q) - 1.0).abs() < 0.03, "{mean}");
    }

    #[test]
    fn poisson_is_deterministic() {
        let a = poisson_batch(100, 0.3, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = poisson_batch(100, 0.3, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn no_generator_step_when_t_below_t_g() {
        let data = toy_table(3, 60, 1);
        let cfg = TrainConfig {
            steps: 1,
            t_g: 2,
            ..small_cfg()
        };
        let (g, _, report) = train_prada(&data, &cfg).unwrap();
        let mut streams = RngStreams::new(cfg.seed);
        let g0 = SequentialGenerator::init(3, cfg.hidden, &mut streams.init);
        assert_eq!(g.params(), g0.params());
        assert_eq!(report.generator_updates(), 0);
    }

    #[test]
    fn generator_update_count() {
        let data = toy_table(3, 60, 2);
        for (steps, t_g) in [(40, 5), (41, 10), (9, 10), (7, 1)] {
            let cfg = TrainConfig {
                steps,
                t_g,
                ..small_cfg()
            };
            let (_, _, report) = train_prada(&data, &cfg).unwrap();
            assert_eq!(report.generator_updates(), steps / t_g);
        }
    }

    #[test]
    fn non_private_run_is_reproducible() {
        let data = toy_table(4, 80, 3);
        let cfg = TrainConfig {
            lambda: 0.0,
            ..small_cfg()
        };
        let (g1, f1, r1) = train_prada(&data, &cfg).unwrap();
        let (g2, f2, r2) = train_prada(&data, &cfg).unwrap();
        assert_eq!(g1.params(), g2.params());
        assert_eq!(f1.params(), f2.params());
        assert_eq!(r1.trace, r2.trace);
        assert!(!r1.private);
        assert!(r1.epsilon.is_infinite());
    }

    #[test]
    fn private_run_is_reproducible_and_accounted() {
        let data = toy_table(3, 100, 4);
        let mut cfg = small_cfg();
        cfg.dp.noise_multiplier = 1.5;
        let (g1, _, r1) = train_prada(&data, &cfg).unwrap();
        let (g2, _, r2) = train_prada(&data, &cfg).unwrap();
        assert_eq!(g1.params(), g2.params());
        assert_eq!(r1.epsilon, r2.epsilon);
        let again = recompute_epsilon(&r1).unwrap();
        assert!((r1.epsilon - again).abs() <= 1e-12 * again.max(1.0));
        assert_eq!(r1.sample_rate, 0.2);
        assert!(r1.argmin_order.is_some());
    }

    #[test]
    fn only_critic_steps_read_private_rows() {
        let data = toy_table(3, 100, 5);
        let counted = CountingRows::new(&data);
        let (_, _, report) = train_prada(&counted, &small_cfg()).unwrap();
        assert!(counted.reads() > 0);
        assert_eq!(counted.reads(), report.rows_read());

        let counted = CountingRows::new(&data);
        let cfg = TrainConfig {
            tau: 0.05,
            ..small_cfg()
        };
        let (_, _, report) = train_two_step(&counted, &cfg).unwrap();
        assert_eq!(counted.reads(), report.rows_read());
    }

    #[test]
    fn empty_batches_are_skipped_but_accounted() {
        let data = toy_table(2, 1000, 6);
        let mut cfg = TrainConfig {
            batch: 1,
            steps: 30,
            ..small_cfg()
        };
        cfg.dp.noise_multiplier = 1.0;
        let (_, _, report) = train_prada(&data, &cfg).unwrap();
        assert!(report.phases[0].skipped_batches > 0);
        assert_eq!(report.ledger.steps, 30);
    }

    #[test]
    fn rejects_bad_configs() {
        let data = toy_table(2, 10, 7);
        let cfg = TrainConfig {
            batch: 11,
            ..small_cfg()
        };
        assert!(matches!(train_prada(&data, &cfg), Err(Error::Usage(_))));
        for bad in [
            TrainConfig { t_g: 0, ..small_cfg() },
            TrainConfig { steps: 0, ..small_cfg() },
            TrainConfig { eta_nu: 0.0, ..small_cfg() },
            TrainConfig { tau: -1.0, ..small_cfg() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn divergence_is_reported() {
        let data = toy_table(2, 40, 8);
        let big = Table::new(
            data.names().to_vec(),
            data.n_rows(),
            data.values().iter().map(|v| v * 1e12).collect(),
        )
        .unwrap();
        let cfg = TrainConfig {
            clamp: 1.0,
            batch: 40,
            ..small_cfg()
        };
        assert!(matches!(train_prada(&big, &cfg), Err(Error::Divergence { .. })));
    }

    #[test]
    fn two_step_freezes_and_composes() {
        let data = toy_table(4, 100, 9);
        let mut cfg = small_cfg();
        cfg.dp.noise_multiplier = 1.0;
        cfg.tau = 0.3;
        let (g, _, report) = train_two_step(&data, &cfg).unwrap();
        let mask = report.mask.clone().unwrap();
        for [j, k] in mask {
            assert!(g.subs()[j].w.row(k).iter().all(|v| v.to_bits() == 0));
            assert_eq!(g.subs()[j].skip[k].to_bits(), 0);
        }
        assert_eq!(report.phases.len(), 2);
        assert_eq!(report.ledger.steps, 2 * cfg.steps as u64);
        assert!(report.phases[1].epsilon > report.phases[0].epsilon);
        let again = recompute_epsilon(&report).unwrap();
        assert!((report.epsilon - again).abs() <= 1e-12 * again);
    }

    #[test]
    fn two_step_with_huge_tau_freezes_everything() {
        let data = toy_table(3, 60, 10);
        let cfg = TrainConfig {
            tau: 1e9,
            ..small_cfg()
        };
        let (g, _, report) = train_two_step(&data, &cfg).unwrap();
        assert_eq!(report.mask.unwrap().len(), 3);
        let z = [0.3, -0.2, 1.1];
        let base = g.sample(&z).unwrap();
        for k in 0..3 {
            let mut zz = z;
            zz[k] += 0.7;
            let out = g.sample(&zz).unwrap();
            for j in 0..3 {
                if j != k {
                    assert_eq!(out[j].to_bits(), base[j].to_bits());
                }
            }
        }
    }

    #[test]
    fn report_json_round_trip() {
        let data = toy_table(3, 60, 11);
        let (_, _, report) = train_prada(&data, &small_cfg()).unwrap();
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("\"epsilon\":\"inf\""));
        let back: TrainReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.phases, report.phases);
        assert!(back.epsilon.is_infinite());
    }

    #[test]
    fn config_keys_match_documented_names() {
        let json = serde_json::to_value(TrainConfig::default()).unwrap();
        for key in ["eta_theta", "eta_nu", "T", "t_g", "batch", "lambda", "gamma", "tau", "dp", "seed", "two_step"] {
            assert!(json.get(key).is_some(), "{key}");
        }
        let cfg: TrainConfig = toml::from_str("T = 5\nbatch = 3\n[dp]\nnoise_multiplier = 2.0\nclip_norm = 1.0\nsample_rate = 1.0\n").unwrap();
        assert_eq!((cfg.steps, cfg.batch, cfg.dp.noise_multiplier), (5, 3, 2.0));
    }

    #[test]
    fn gap_threshold_and_f1() {
        assert_eq!(largest_gap_threshold(&[0.01, 0.02, 0.9, 1.0]), Some(0.46));
        assert_eq!(largest_gap_threshold(&[1.0]), None);
        let truth: BTreeSet<_> = [(0, 1), (1, 2)].into_iter().collect();
        let pred: BTreeSet<_> = [(0, 1), (0, 2)].into_iter().collect();
        assert_eq!(edge_f1(&pred, &truth), 0.5);
        assert_eq!(edge_f1(&truth, &truth), 1.0);
        assert_eq!(edge_f1(&BTreeSet::new(), &BTreeSet::new()), 1.0);
        let norms = RowNorms {
            norms: vec![vec![], vec![0.8], vec![0.01, 0.9]],
        };
        let picked = select_edges(&norms);
        assert_eq!(picked, [(0, 1), (1, 2)].into_iter().collect());
    }
}
