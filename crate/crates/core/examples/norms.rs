//! Kernel, jumble and cut norms of step functions.

use graphex::norms::{
    bilinear_set_norm, c4_density, jumble_1d, kernel, SearchMode, SetNormConfig, SetNormKind, StepFunction1D,
    StepFunction2D,
};

fn main() -> graphex::Result<()> {
    let u = StepFunction2D::new(
        vec![0.25, 0.75, 1.0],
        vec![vec![1.0, -0.5, 0.0], vec![-0.5, 0.25, 0.5], vec![0.0, 0.5, -1.0]],
    )?;
    let k = kernel(&u);
    println!("kernel {k:.6}, k^4 {:.6} <= t(C4) {:.6}", k.powi(4), c4_density(&u));

    for kind in [SetNormKind::Jumble, SetNormKind::Cut] {
        let exact = bilinear_set_norm(&u, &SetNormConfig::new(kind, SearchMode::Exact))?;
        let heuristic = bilinear_set_norm(&u, &SetNormConfig::new(kind, SearchMode::Heuristic).restarts(20).seed(1))?;
        println!("{kind:?}: exact {:.6} (S={:?}, T={:?}), heuristic {:.6}", exact.value, exact.s, exact.t, heuristic.value);
    }

    let f = StepFunction1D::new(vec![0.5, 0.5, 2.0], vec![1.0, -1.0, 0.25]);
    println!("1D jumble {:.6}", jumble_1d(&f));
    Ok(())
}
