//! Per-example clipping, Gaussian noising and Rényi-DP accounting for the
//! Poisson-subsampled Gaussian mechanism.
//!
//! The accountant tracks `ρ(α)` at integer orders using the binomial expansion
//!
//! ```text
//! ρ(α) = 1/(α-1) · log Σ_{k=0}^{α} C(α,k) (1-q)^{α-k} q^k exp(k(k-1) / (2σ²))
//! ```
//!
//! evaluated in log space, and converts to `(ε, δ)` with
//! `ε = min_α ρ(α) + log(1/δ)/(α-1)`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::l2_norm;

/// Default target δ.
pub const DEFAULT_DELTA: f64 = 1e-5;

/// `{2, 3, ..., 64} ∪ {128, 256}`.
pub fn default_orders() -> Vec<u32> {
    (2..=64).chain([128, 256]).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpConfig {
    /// Per-example clipping norm `C`.
    pub clip_norm: f64,
    /// Noise multiplier `σ`; the noise std is `σ·C`.
    pub noise_multiplier: f64,
    /// Poisson sampling rate `q = B/n`.
    pub sample_rate: f64,
    #[serde(default = "default_orders")]
    pub orders: Vec<u32>,
}

impl Default for DpConfig {
    fn default() -> Self {
        DpConfig {
            clip_norm: 1.0,
            noise_multiplier: 0.0,
            sample_rate: 1.0,
            orders: default_orders(),
        }
    }
}

impl DpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip_norm > 0.0) {
            return Err(Error::usage(format!("clip_norm must be > 0, got {}", self.clip_norm)));
        }
        if !(self.noise_multiplier >= 0.0) {
            return Err(Error::usage("noise_multiplier must be >= 0"));
        }
        if !(self.sample_rate > 0.0 && self.sample_rate <= 1.0) {
            return Err(Error::usage(format!(
                "sample_rate must lie in (0, 1], got {}",
                self.sample_rate
            )));
        }
        if self.orders.iter().any(|&a| a < 2) {
            return Err(Error::usage("RDP orders must be integers >= 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacySpec {
    pub epsilon: f64,
    pub delta: f64,
}

impl PrivacySpec {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon > 0.0) || !(delta > 0.0 && delta < 1.0) {
            return Err(Error::usage(format!(
                "privacy target needs epsilon > 0 and 0 < delta < 1, got ({epsilon}, {delta})"
            )));
        }
        Ok(PrivacySpec { epsilon, delta })
    }
}

/// Scales `grad` to norm at most `clip`.
pub fn clip_grad(grad: &[f64], clip: f64) -> Result<Vec<f64>> {
    if !(clip > 0.0) {
        return Err(Error::usage(format!("clip norm must be > 0, got {clip}")));
    }
    if grad.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite per-example gradient".into()));
    }
    let norm = l2_norm(grad);
    if norm <= clip {
        return Ok(grad.to_vec());
    }
    let mut scale = clip / norm;
    loop {
        let out: Vec<f64> = grad.iter().map(|v| v * scale).collect();
        // rounding in the rescale can overshoot the bound by a few ulps
        if l2_norm(&out) <= clip {
            return Ok(out);
        }
        scale *= 1.0 - f64::EPSILON;
    }
}

/// `(1/B) [Σ_i clip(g_i, C) + ξ]` with `ξ ~ N(0, σ²C² I)`.
///
/// Summation runs in list order so the result is deterministic for a seeded rng.
pub fn privatize<R: Rng + ?Sized>(
    per_example: &[Vec<f64>],
    cfg: &DpConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let first = per_example
        .first()
        .ok_or_else(|| Error::usage("privatize needs at least one per-example gradient"))?;
    let dim = first.len();
    let mut sum = vec![0.0; dim];
    for g in per_example {
        if g.len() != dim {
            return Err(Error::shape("per-example gradients differ in length"));
        }
        for (s, v) in sum.iter_mut().zip(clip_grad(g, cfg.clip_norm)?) {
            *s += v;
        }
    }
    let std = cfg.noise_multiplier * cfg.clip_norm;
    if std > 0.0 {
        for s in &mut sum {
            let xi: f64 = rng.sample(StandardNormal);
            *s += std * xi;
        }
    }
    let b = per_example.len() as f64;
    Ok(sum.into_iter().map(|s| s / b).collect())
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Per-step RDP of the Poisson-subsampled Gaussian mechanism at integer order `alpha`.
///
/// Returns `+∞` when `sigma == 0`.
pub fn rdp_subsampled_gaussian(q: f64, sigma: f64, alpha: u32) -> Result<f64> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::usage(format!("sampling rate must lie in (0, 1], got {q}")));
    }
    if alpha < 2 {
        return Err(Error::usage(format!("RDP order must be >= 2, got {alpha}")));
    }
    if !(sigma >= 0.0) {
        return Err(Error::usage("sigma must be >= 0"));
    }
    if sigma == 0.0 {
        return Ok(f64::INFINITY);
    }
    let a = alpha as f64;
    let log_q = q.ln();
    let log_1mq = (1.0 - q).ln();
    let two_s2 = 2.0 * sigma * sigma;
    let mut log_binom = 0.0;
    let mut terms = Vec::with_capacity(alpha as usize + 1);
    for k in 0..=alpha {
        let kf = k as f64;
        if k > 0 {
            log_binom += (a - kf + 1.0).ln() - kf.ln();
        }
        let from_q = if k == 0 { 0.0 } else { kf * log_q };
        let from_1mq = if k == alpha { 0.0 } else { (a - kf) * log_1mq };
        terms.push(log_binom + from_q + from_1mq + kf * (kf - 1.0) / two_s2);
    }
    Ok((log_sum_exp(&terms) / (a - 1.0)).max(0.0))
}

/// Accumulated RDP over composed steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyLedger {
    pub steps: u64,
    pub orders: Vec<u32>,
    #[serde(with = "inf_as_string::vec")]
    pub rho: Vec<f64>,
    pub delta: f64,
}

impl PrivacyLedger {
    pub fn new(orders: Vec<u32>, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::usage(format!("delta must lie in (0, 1), got {delta}")));
        }
        if orders.iter().any(|&a| a < 2) {
            return Err(Error::usage("RDP orders must be integers >= 2"));
        }
        let rho = vec![0.0; orders.len()];
        Ok(PrivacyLedger {
            steps: 0,
            orders,
            rho,
            delta,
        })
    }

    /// Adds `steps` applications of the subsampled Gaussian with `cfg`'s `(q, σ)`.
    pub fn compose(&mut self, cfg: &DpConfig, steps: u64) -> Result<()> {
        if steps == 0 {
            return Ok(());
        }
        for (rho, &a) in self.rho.iter_mut().zip(&self.orders) {
            *rho += steps as f64 * rdp_subsampled_gaussian(cfg.sample_rate, cfg.noise_multiplier, a)?;
        }
        self.steps += steps;
        Ok(())
    }

    /// `(ε, argmin order)`.
    pub fn epsilon_with_order(&self) -> Result<(f64, u32)> {
        if self.orders.is_empty() {
            return Err(Error::usage("ledger has no RDP orders"));
        }
        let log_inv_delta = (1.0 / self.delta).ln();
        let mut best = (f64::INFINITY, self.orders[0]);
        for (&rho, &a) in self.rho.iter().zip(&self.orders) {
            let eps = rho + log_inv_delta / (a as f64 - 1.0);
            if eps < best.0 {
                best = (eps, a);
            }
        }
        Ok(best)
    }

    pub fn epsilon(&self) -> Result<f64> {
        Ok(self.epsilon_with_order()?.0)
    }
}

/// Functional form of [`PrivacyLedger::compose`].
pub fn ledger_compose(ledger: &PrivacyLedger, cfg: &DpConfig, steps: u64) -> Result<PrivacyLedger> {
    let mut out = ledger.clone();
    out.compose(cfg, steps)?;
    Ok(out)
}

pub fn eps_from_ledger(ledger: &PrivacyLedger) -> Result<f64> {
    ledger.epsilon()
}

/// ε after `steps` steps at `(q, σ)`.
pub fn epsilon_for(q: f64, sigma: f64, steps: u64, delta: f64, orders: &[u32]) -> Result<f64> {
    let cfg = DpConfig {
        clip_norm: 1.0,
        noise_multiplier: sigma,
        sample_rate: q,
        orders: orders.to_vec(),
    };
    let mut ledger = PrivacyLedger::new(orders.to_vec(), delta)?;
    ledger.compose(&cfg, steps)?;
    ledger.epsilon()
}

const SIGMA_LO: f64 = 1e-2;
const SIGMA_HI: f64 = 1e3;

/// Smallest σ in `[1e-2, 1e3]` (to relative precision 1e-12) with `ε(σ) <= ε`;
/// the result's ε lies in `[ε(1 - 1e-3), ε]`.
pub fn calibrate_sigma(target: &PrivacySpec, q: f64, steps: u64, orders: &[u32]) -> Result<f64> {
    if steps == 0 {
        return Err(Error::usage("calibration needs at least one step"));
    }
    let eps = |s: f64| epsilon_for(q, s, steps, target.delta, orders);
    let goal = target.epsilon;
    let lower_ok = goal * (1.0 - 1e-3);
    let e_hi = eps(SIGMA_HI)?;
    if e_hi > goal {
        return Err(Error::Calibration(format!(
            "epsilon {goal} unreachable: sigma={SIGMA_HI} still gives {e_hi}"
        )));
    }
    let e_lo = eps(SIGMA_LO)?;
    if e_lo <= goal {
        return Err(Error::Calibration(format!(
            "epsilon {goal} is looser than sigma={SIGMA_LO} already gives ({e_lo})"
        )));
    }
    // ε(σ) is continuous and decreasing: lo has ε > goal, hi has ε <= goal.
    let (mut lo, mut hi) = (SIGMA_LO, SIGMA_HI);
    let mut e_at_hi = e_hi;
    for _ in 0..200 {
        if hi / lo - 1.0 < 1e-12 {
            break;
        }
        let mid = (lo * hi).sqrt();
        let e = eps(mid)?;
        if e <= goal {
            hi = mid;
            e_at_hi = e;
        } else {
            lo = mid;
        }
    }
    if e_at_hi < lower_ok {
        return Err(Error::Calibration(format!(
            "bisection stalled at sigma={hi} with epsilon {e_at_hi} below the window for {goal}"
        )));
    }
    Ok(hi)
}

/// Report emitted by the `account` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccountReport {
    pub n: usize,
    pub batch: usize,
    pub q: f64,
    pub sigma: f64,
    pub steps: u64,
    pub delta: f64,
    pub orders: Vec<u32>,
    pub rho: Vec<f64>,
    pub epsilon: f64,
    pub argmin_order: u32,
    pub sampling: String,
}

impl AccountReport {
    pub fn compute(n: usize, batch: usize, sigma: f64, steps: u64, delta: f64) -> Result<Self> {
        if n == 0 || batch == 0 || batch > n {
            return Err(Error::usage(format!("need 1 <= batch <= n, got batch={batch}, n={n}")));
        }
        if !(sigma > 0.0) {
            return Err(Error::usage("accounting needs sigma > 0"));
        }
        let q = batch as f64 / n as f64;
        let cfg = DpConfig {
            clip_norm: 1.0,
            noise_multiplier: sigma,
            sample_rate: q,
            orders: default_orders(),
        };
        let mut ledger = PrivacyLedger::new(cfg.orders.clone(), delta)?;
        ledger.compose(&cfg, steps)?;
        let (epsilon, argmin_order) = ledger.epsilon_with_order()?;
        Ok(AccountReport {
            n,
            batch,
            q,
            sigma,
            steps,
            delta,
            orders: ledger.orders,
            rho: ledger.rho,
            epsilon,
            argmin_order,
            sampling: "poisson".into(),
        })
    }
}

/// Serializes `+∞` as the string `"inf"` since JSON has no infinity.
pub(crate) mod inf_as_string {
    use serde::{de, Deserialize, Deserializer, Serializer};
    use serde::ser::SerializeSeq;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    impl Repr {
        fn value<E: de::Error>(self) -> Result<f64, E> {
            match self {
                Repr::Num(v) => Ok(v),
                Repr::Str(s) if s == "inf" => Ok(f64::INFINITY),
                Repr::Str(s) => Err(E::custom(format!("expected a number or \"inf\", got {s:?}"))),
            }
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Repr::deserialize(d)?.value()
    }

    pub mod vec {
        use super::*;

        pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
            let mut seq = s.serialize_seq(Some(v.len()))?;
            for x in v {
                if x.is_infinite() && *x > 0.0 {
                    seq.serialize_element("inf")?;
                } else {
                    seq.serialize_element(x)?;
                }
            }
            seq.end()
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            Vec::<Repr>::deserialize(d)?.into_iter().map(Repr::value).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn clip_examples() {
        assert_eq!(clip_grad(&[0.3, 0.4], 1.0).unwrap(), vec![0.3, 0.4]);
        let c = clip_grad(&[3.0, 4.0], 1.0).unwrap();
        assert!((c[0] - 0.6).abs() < 1e-15 && (c[1] - 0.8).abs() < 1e-15);
        assert!(matches!(clip_grad(&[f64::NAN], 1.0), Err(Error::Numeric(_))));
        assert_eq!(clip_grad(&[0.0, 0.0], 1.0).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn clip_preserves_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..200 {
            let g: Vec<f64> = (0..100).map(|_| rng.sample::<f64, _>(StandardNormal) * 3.0).collect();
            let c = clip_grad(&g, 1.0).unwrap();
            let cn = l2_norm(&c);
            assert!(cn <= 1.0 + 1e-12);
            let cos = crate::nn::dot(&g, &c) / (l2_norm(&g) * cn);
            assert!((cos - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn privatize_without_noise() {
        let cfg = DpConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let one = privatize(&[vec![0.2, -0.1]], &cfg, &mut rng).unwrap();
        assert_eq!(one, vec![0.2, -0.1]);
        let two = privatize(&[vec![0.5, 2.0], vec![-0.5, -2.0]], &cfg, &mut rng).unwrap();
        assert_eq!(two, vec![0.0, 0.0]);
        assert!(matches!(privatize(&[], &cfg, &mut rng), Err(Error::Usage(_))));
    }

    #[test]
    fn gaussian_closed_form_at_full_batch() {
        assert!((rdp_subsampled_gaussian(1.0, 2.0, 8).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(rdp_subsampled_gaussian(0.5, 0.0, 4).unwrap(), f64::INFINITY);
    }

    #[test]
    fn rdp_vanishes_as_rate_shrinks() {
        let mut prev = f64::INFINITY;
        for q in [0.5, 0.1, 1e-2, 1e-3, 1e-4, 1e-6] {
            let r = rdp_subsampled_gaussian(q, 2.0, 16).unwrap();
            assert!(r < prev);
            prev = r;
        }
        assert!(prev < 1e-9);
    }

    #[test]
    fn rdp_matches_direct_series() {
        // Linear-space binomial sum with exact integer binomials; the exponents
        // stay below e^124 so plain f64 holds every term.
        let (q, sigma, alpha) = (0.004f64, 2.0f64, 32u32);
        let mut binom = 1.0f64;
        let mut sum = 0.0f64;
        let mut comp = 0.0f64;
        for k in 0..=alpha {
            if k > 0 {
                binom = binom * (alpha - k + 1) as f64 / k as f64;
            }
            let kf = k as f64;
            let term = binom
                * (1.0 - q).powi((alpha - k) as i32)
                * q.powi(k as i32)
                * (kf * (kf - 1.0) / (2.0 * sigma * sigma)).exp();
            let y = term - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
        }
        let oracle = sum.ln() / (alpha as f64 - 1.0);
        let got = rdp_subsampled_gaussian(q, sigma, alpha).unwrap();
        assert!((got - oracle).abs() < 1e-10, "{got} vs {oracle}");
    }

    #[test]
    fn rdp_monotonicity_sweeps() {
        for &sigma in &[0.7, 1.0, 2.0, 5.0] {
            for &alpha in &[2u32, 5, 16, 64] {
                let mut prev = 0.0;
                for i in 1..=20 {
                    let q = i as f64 / 20.0;
                    let r = rdp_subsampled_gaussian(q, sigma, alpha).unwrap();
                    assert!(r >= prev);
                    prev = r;
                }
            }
        }
        for &q in &[0.01, 0.2, 1.0] {
            let mut prev = 0.0;
            for alpha in 2..=64 {
                let r = rdp_subsampled_gaussian(q, 1.5, alpha).unwrap();
                assert!(r >= prev - 1e-15);
                prev = r;
            }
            let mut prev = f64::INFINITY;
            for i in 1..=30 {
                let r = rdp_subsampled_gaussian(q, 0.3 * i as f64, 8).unwrap();
                assert!(r <= prev);
                prev = r;
            }
        }
    }

    #[test]
    fn ledger_examples() {
        let cfg = DpConfig {
            noise_multiplier: 1.3,
            sample_rate: 0.02,
            ..DpConfig::default()
        };
        let base = PrivacyLedger::new(default_orders(), 1e-5).unwrap();
        assert_eq!(ledger_compose(&base, &cfg, 0).unwrap(), base);

        let a = ledger_compose(&ledger_compose(&base, &cfg, 3).unwrap(), &cfg, 4).unwrap();
        let b = ledger_compose(&base, &cfg, 7).unwrap();
        assert_eq!(a.steps, 7);
        for (x, y) in a.rho.iter().zip(&b.rho) {
            assert!((x - y).abs() <= 1e-12 * y.max(1.0));
        }

        let full = DpConfig {
            noise_multiplier: 2.0,
            sample_rate: 1.0,
            ..DpConfig::default()
        };
        let one = ledger_compose(&base, &full, 1).unwrap();
        for (&r, &alpha) in one.rho.iter().zip(&one.orders) {
            assert!((r - alpha as f64 / 8.0).abs() < 1e-12);
        }
    }

    #[test]
    fn epsilon_examples() {
        let mut ledger = PrivacyLedger::new(vec![2], (-1.0f64).exp()).unwrap();
        assert!((ledger.epsilon().unwrap() - 1.0).abs() < 1e-15);

        let cfg = DpConfig {
            noise_multiplier: 1.1,
            sample_rate: 0.01,
            ..DpConfig::default()
        };
        let small = {
            let mut l = PrivacyLedger::new(vec![2, 8], 1e-5).unwrap();
            l.compose(&cfg, 500).unwrap();
            l.epsilon().unwrap()
        };
        let big = {
            let mut l = PrivacyLedger::new(default_orders(), 1e-5).unwrap();
            l.compose(&cfg, 500).unwrap();
            l.epsilon().unwrap()
        };
        assert!(big <= small);

        ledger.orders.clear();
        ledger.rho.clear();
        assert!(matches!(ledger.epsilon(), Err(Error::Usage(_))));
    }

    #[test]
    fn calibration_round_trip_and_monotone_in_steps() {
        let orders = default_orders();
        let q = 50.0 / 12384.0;
        let target = PrivacySpec::new(1.0, 1e-5).unwrap();
        let s1 = calibrate_sigma(&target, q, 2000, &orders).unwrap();
        let e = epsilon_for(q, s1, 2000, 1e-5, &orders).unwrap();
        assert!(e <= 1.0 && e >= 1.0 - 1e-3, "{e}");
        let s2 = calibrate_sigma(&target, q, 8000, &orders).unwrap();
        assert!(s2 > s1);
    }

    #[test]
    fn calibration_matches_gaussian_closed_form() {
        // q = 1, one step: ε(σ) = min_α α/(2σ²) + L/(α-1), L = ln(1/δ).
        // The continuous optimum gives ε = 1/(2σ²) + √(2L)/σ, so 1/σ = √(2L + 2ε) - √(2L).
        let (eps, delta) = (1.0, 1e-5);
        let l = (1.0f64 / delta).ln();
        let closed = 1.0 / ((2.0 * l + 2.0 * eps).sqrt() - (2.0 * l).sqrt());
        let sigma = calibrate_sigma(&PrivacySpec::new(eps, delta).unwrap(), 1.0, 1, &default_orders()).unwrap();
        assert!((sigma - closed).abs() / closed < 0.02, "{sigma} vs {closed}");
    }

    #[test]
    fn unreachable_target_is_calibration_error() {
        let target = PrivacySpec::new(1e-9, 1e-5).unwrap();
        let r = calibrate_sigma(&target, 0.5, 100_000, &default_orders());
        assert!(matches!(r, Err(Error::Calibration(_))));
        assert_eq!(r.unwrap_err().exit_code(), 5);
    }

    proptest! {
        #[test]
        fn clipped_norm_never_exceeds_bound(
            v in proptest::collection::vec(-1e6f64..1e6, 0..64),
            c in 1e-3f64..10.0,
        ) {
            let out = clip_grad(&v, c).unwrap();
            prop_assert!(l2_norm(&out) <= c);
        }

        #[test]
        fn epsilon_non_increasing_when_rho_drops(idx in 0usize..65, factor in 0.0f64..1.0) {
            let cfg = DpConfig { noise_multiplier: 1.0, sample_rate: 0.05, ..DpConfig::default() };
            let mut l = PrivacyLedger::new(default_orders(), 1e-5).unwrap();
            l.compose(&cfg, 300).unwrap();
            let before = l.epsilon().unwrap();
            l.rho[idx] *= factor;
            prop_assert!(l.epsilon().unwrap() <= before);
        }
    }
}
