//! Paired runs on a linear SEM with and without the group-lasso penalty.
//!
//! Prints the mean row norm on true non-edges for both runs and the F1 score of
//! the edges selected by the largest gap in the penalized run's row norms.
//!
//! ```text
//! cargo run --release --example sparsity_recovery -- [seed] [steps] [eta_theta] [eta_nu] [t_g] [clamp] [lambda]
//! ```

use std::collections::BTreeSet;

use prada::data::fit_preprocessor;
use prada::sem::{sample_er_dag, sample_weights, simulate, Dag, SemKind, SemSpec};
use prada::train::{edge_f1, select_edges, train_prada, TrainConfig};
use prada::model::RowNorms;

fn off_parent_mean(norms: &RowNorms, dag: &Dag) -> f64 {
    let off: Vec<f64> = norms
        .entries()
        .filter(|&(j, k, _)| !dag.has_edge(k, j))
        .map(|e| e.2)
        .collect();
    off.iter().sum::<f64>() / off.len() as f64
}

fn main() -> prada::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, default: f64| args.get(i).map_or(default, |s| s.parse().expect("numeric argument"));
    let seed = arg(0, 0.0) as u64;
    let d = 10;
    let dag = sample_er_dag(d, d, seed)?;
    let spec = SemSpec::new(SemKind::Linear);
    let weights = sample_weights(&dag, &spec, seed)?;
    let raw = simulate(&dag, &weights, &spec, 2000, seed)?;
    let data = fit_preprocessor(&raw)?.transform(&raw)?;

    let cfg = TrainConfig {
        steps: arg(1, 4000.0) as usize,
        eta_theta: arg(2, 0.001),
        eta_nu: arg(3, 0.01),
        t_g: arg(4, 10.0) as usize,
        clamp: arg(5, 0.1),
        lambda: arg(6, 0.003),
        gamma: 0.0,
        seed,
        log_every: std::env::var("LOG_EVERY").ok().and_then(|v| v.parse().ok()).unwrap_or(500),
        ..TrainConfig::default()
    };
    let (_, _, penalized) = train_prada(&data, &cfg)?;
    let (_, _, plain) = train_prada(&data, &TrainConfig { lambda: 0.0, ..cfg.clone() })?;

    let truth: BTreeSet<(usize, usize)> = dag.edges().into_iter().collect();
    let picked = select_edges(&penalized.row_norms);
    let with = off_parent_mean(&penalized.row_norms, &dag);
    let without = off_parent_mean(&plain.row_norms, &dag);
    println!("true edges      {:?}", truth);
    println!("selected edges  {:?}", picked);
    println!("off-parent mean norm: penalized {with:.4}, unpenalized {without:.4}, ratio {:.3}", with / without);
    println!("edge F1 {:.3}", edge_f1(&picked, &truth));
    if std::env::var_os("SHOW_NORMS").is_some() {
        for (j, k, v) in penalized.row_norms.entries() {
            let tag = if dag.has_edge(k, j) { "edge" } else { "    " };
            println!("{tag} {k}->{j}  {v:.4}  (unpenalized {:.4})", plain.row_norms.get(j, k));
        }
    }
    for t in penalized.trace.iter() {
        println!("step {:>6}  objective {:+.5}  penalty {:.5}", t.step, t.objective, t.penalty);
    }
    Ok(())
}
