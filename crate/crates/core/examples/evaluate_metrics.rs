//! Similarity and utility metrics between two tables: a perturbed copy of a
//! simulated dataset is compared against a held-out sample of the original.

use prada::data::{split, SplitSpec, Table};
use prada::metrics::{evaluate, Bandwidth, DownstreamModel, EvalOptions};
use prada::sem::{sample_er_dag, sample_weights, simulate, SemKind, SemSpec};

fn main() -> prada::Result<()> {
    let dag = sample_er_dag(4, 4, 5)?;
    let spec = SemSpec::new(SemKind::Linear);
    let raw = simulate(&dag, &sample_weights(&dag, &spec, 5)?, &spec, 2000, 5)?;
    let (a, test) = split(&raw, &SplitSpec { train_fraction: 0.5, seed: 5 })?;

    let opts = EvalOptions {
        target: Some("x4".into()),
        models: vec![DownstreamModel::Ridge, DownstreamModel::SmallMlp],
        bandwidth: Bandwidth::Auto,
        ..EvalOptions::default()
    };
    for shift in [0.0, 0.5, 2.0] {
        let rows: Vec<Vec<f64>> = a.rows().map(|r| r.iter().map(|v| v + shift).collect()).collect();
        let shifted = Table::from_rows(a.names().to_vec(), &rows)?;
        let m = evaluate(&shifted, &test, &opts)?;
        println!(
            "shift {shift:<4} wd {:.4}  tvd1 {:.4}  tvd2 {:.4}  js {:.4}  mmd {:.5}",
            m.wd, m.tvd_1way, m.tvd_2way, m.js, m.mmd
        );
        for e in m.efficacy.iter().flatten() {
            println!("          {:?}: r2 {:.3}, rmse {:.3}", e.model, e.r2, e.rmse);
        }
    }
    Ok(())
}
