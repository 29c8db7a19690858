//! Penalized training followed by pruning at a row-norm threshold and an
//! unpenalized second phase that keeps the pruned rows frozen at zero.
//!
//! ```text
//! cargo run --release --example two_step_pruning -- [tau] [sigma]
//! ```

use prada::data::fit_preprocessor;
use prada::sem::{sample_er_dag, sample_weights, simulate, SemKind, SemSpec};
use prada::train::{recompute_epsilon, train_two_step, TrainConfig};

fn main() -> prada::Result<()> {
    let args: Vec<f64> = std::env::args().skip(1).map(|s| s.parse().expect("numeric argument")).collect();
    let tau = args.first().copied().unwrap_or(0.1);
    let sigma = args.get(1).copied().unwrap_or(0.0);
    let dag = sample_er_dag(6, 6, 3)?;
    let spec = SemSpec::new(SemKind::Linear);
    let raw = simulate(&dag, &sample_weights(&dag, &spec, 3)?, &spec, 2000, 3)?;
    let data = fit_preprocessor(&raw)?.transform(&raw)?;

    let mut cfg = TrainConfig {
        steps: 10_000,
        eta_theta: 0.03,
        eta_nu: 0.05,
        t_g: 1,
        clamp: 0.2,
        tau,
        seed: 3,
        ..TrainConfig::default()
    };
    cfg.dp.noise_multiplier = sigma;
    let (g, _, report) = train_two_step(&data, &cfg)?;

    for p in &report.phases {
        println!(
            "phase {}: {} steps, {} generator updates, epsilon so far {:.3}",
            p.phase, p.steps, p.generator_updates, p.epsilon
        );
    }
    if sigma > 0.0 {
        println!("recomputed epsilon {:.6} (report {:.6})", recompute_epsilon(&report)?, report.epsilon);
    }
    println!("frozen rows (input -> column):");
    for (j, k) in g.frozen().iter() {
        let edge = if dag.has_edge(k, j) { "true edge" } else { "non-edge" };
        println!("  x{} -> x{}  {edge}", k + 1, j + 1);
    }
    Ok(())
}
