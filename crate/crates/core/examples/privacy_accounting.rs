//! Rényi accounting for Poisson-subsampled Gaussian steps: ε as training
//! proceeds, and the noise multiplier needed for a set of privacy budgets.

use prada::privacy::{calibrate_sigma, default_orders, AccountReport, DpConfig, PrivacyLedger, PrivacySpec};

fn main() -> prada::Result<()> {
    let (n, batch, delta) = (12384, 50, 1e-5);
    let q = batch as f64 / n as f64;

    let cfg = DpConfig {
        noise_multiplier: 2.0,
        sample_rate: q,
        ..DpConfig::default()
    };
    let mut ledger = PrivacyLedger::new(default_orders(), delta)?;
    println!("sigma 2.0, q {q:.5}");
    for chunk in [500, 500, 1000, 2000, 3000] {
        ledger.compose(&cfg, chunk)?;
        let (eps, order) = ledger.epsilon_with_order()?;
        println!("  after {:>5} steps: epsilon {eps:.4} (order {order})", ledger.steps);
    }

    let steps = 7000;
    for eps in [0.5, 1.0, 3.0, 8.0] {
        let sigma = calibrate_sigma(&PrivacySpec::new(eps, delta)?, q, steps, &default_orders())?;
        println!("epsilon {eps:>4} over {steps} steps needs sigma {sigma:.4}");
    }

    let report = AccountReport::compute(n, batch, 2.0, steps, delta)?;
    println!("{}", serde_json::to_string_pretty(&report).expect("serializable report"));
    Ok(())
}
