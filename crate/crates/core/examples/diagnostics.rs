//! Tightness, uniform integrability and edge-moment diagnostics.

use graphex::diagnostics::{default_grid, diagnose, edge_moment_prediction, uniform_integrability_metric};
use graphex::fixtures;

fn main() -> graphex::Result<()> {
    let g = fixtures::example_ex1(0.25);
    let report = diagnose(&g, &default_grid(&g), Some(10.0))?;
    println!("{}", serde_json::to_string_pretty(&report).unwrap());

    let m = edge_moment_prediction(&fixtures::constant(0.5, 1.0), 10.0)?;
    println!("constant-0.5 at T=10: E|E| = {}, Var |E| = {}", m.mean, m.variance);

    for n in [2.0, 4.0, 8.0, 16.0] {
        let w = fixtures::ui_family(n);
        println!("UI family n={n}: ||W||_1 = {}, tail above 1 = {}", w.l1_norm(), uniform_integrability_metric(&w, 1.0)?);
    }
    Ok(())
}
