//! Sampling convergence: median weak kernel distance between the empirical
//! graphex of `G_T` (atom mass `1/T`) and its source, for growing `T`.

use std::time::Instant;

use graphex::estimation::{convergence_experiment, ExperimentConfig};
use graphex::fixtures;

fn main() -> graphex::Result<()> {
    for (name, g) in [("constant-0.5", fixtures::constant(0.5, 1.0)), ("example-ex1", fixtures::example_ex1(0.25))] {
        let start = Instant::now();
        let cfg = ExperimentConfig::new(vec![5.0, 10.0, 20.0, 40.0], 20, 2024);
        let report = convergence_experiment(&g, &cfg)?;
        println!("{name}:");
        for row in &report.summary {
            println!(
                "  T={:<4} median={:.4} q25={:.4} q75={:.4} mean edges={:.1}",
                row.t, row.median, row.q25, row.q75, row.edge_mean
            );
        }
        println!("  ({:.1?})", start.elapsed());
    }
    Ok(())
}
