//! Weak regularity partitions of an empirical graphex.

use graphex::estimation::empirical_graphex;
use graphex::regularity::{equal_parts_partition, weak_regularity_partition, RegularityConfig};
use graphex::sampling::sample_process;
use graphex::fixtures;

fn main() -> graphex::Result<()> {
    let t = 60.0;
    let sample = sample_process(&fixtures::example_ex1(0.25), t, 5, false)?;
    let g = empirical_graphex(&sample.to_plain(), 1.0 / t)?;
    println!("empirical graphex: {} atoms, ||W||_1 {:.3}", g.atoms(), g.l1_norm());

    let mut cfg = RegularityConfig::new(0.3, g.max_graphon(), g.l1_norm(), g.max_marginal());
    cfg.seed = 1;
    let r = weak_regularity_partition(&g, &cfg, None)?;
    println!(
        "{} parts after {} rounds (cap {}), certificate {:.4}, d22 {:.4}",
        r.partition.parts, r.rounds, r.round_cap, r.certificate, r.d22.d22
    );
    for round in &r.log {
        println!("  round {} {:?} witness {:.4} -> {} parts", round.round, round.witness, round.witness_value, round.parts_after);
    }

    let rho = g.total_mass() / 6.0;
    let eq = equal_parts_partition(&g, &cfg, rho, 6)?;
    println!("equal parts: {} parts of mass {rho:.4}, d22 {:.4}", eq.partition.parts, eq.certificate.d22);
    Ok(())
}
