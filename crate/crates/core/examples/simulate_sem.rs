//! Samples Erdős–Rényi and scale-free DAGs, simulates linear and nonlinear SEMs on
//! them and writes the tables as CSV.
//!
//! ```text
//! cargo run --release --example simulate_sem -- [out_dir]
//! ```

use std::path::PathBuf;

use prada::data::write_csv;
use prada::sem::{max_ancestor_size, sample_er_dag, sample_sf_dag, sample_weights, simulate, DagFile, SemKind, SemSpec};

fn main() -> prada::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "target/simulate_sem".into()));
    std::fs::create_dir_all(&out).expect("output directory");
    let (d, n, seed) = (8, 1000, 11);

    for (name, dag) in [("er", sample_er_dag(d, d, seed)?), ("sf", sample_sf_dag(d, 2, seed)?)] {
        println!("{name}: {} edges, largest ancestor set {}", dag.edge_count(), max_ancestor_size(&dag));
        for j in 0..d {
            println!("  x{} <- {:?}", j + 1, dag.parents(j).iter().map(|k| k + 1).collect::<Vec<_>>());
        }
        for kind in [SemKind::Linear, SemKind::Nonlinear] {
            let spec = SemSpec::new(kind);
            let weights = sample_weights(&dag, &spec, seed)?;
            let table = simulate(&dag, &weights, &spec, n, seed)?;
            let file = out.join(format!("{name}_{kind:?}.csv").to_lowercase());
            write_csv(&table, &file)?;
            println!("  wrote {} ({} x {})", file.display(), table.n_rows(), table.n_cols());
        }
        DagFile::new(&dag, SemKind::Linear, seed).save(out.join(format!("{name}_dag.json")))?;
    }
    Ok(())
}
