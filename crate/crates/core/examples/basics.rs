//! Building, validating and transforming step graphexes.

use graphex::graphex::validate;
use graphex::{RawGraphex, StepGraphex};

fn main() -> graphex::Result<()> {
    let g = StepGraphex::new(
        vec![0.5, 1.5],
        vec![vec![0.8, 0.2], vec![0.2, 0.4]],
        vec![0.3, 0.0],
        0.05,
    )?;
    println!("atoms={} total mass={}", g.atoms(), g.total_mass());
    println!("||W||_1={:.4} rho={:.4} max D={:.4}", g.l1_norm(), g.edge_density(), g.max_marginal());
    println!("marginal {:?}", g.marginal().values);

    let (truncated, removed) = g.truncate_by_degree(0.8)?;
    println!("truncated at D<=0.8: {} atoms, removed mass {removed}", truncated.atoms());

    let split = g.split_atom(1, 3)?;
    println!("split atom 1 into 3: masses {:?}", split.masses());

    let text = g.to_json();
    assert_eq!(StepGraphex::from_json(&text)?, g);

    let raw: RawGraphex = serde_json::from_str(
        r#"{"masses":[1.0],"graphon":[[1.5]],"star":[0.0],"dust":0.0,"isolated_mass":0.0,"signed":false}"#,
    )
    .unwrap();
    let report = validate(&raw);
    println!("valid={} violations={:?}", report.is_valid(), report.violations);
    Ok(())
}
