use lpmd::fields::BoundaryTrace;
use lpmd::grid::{DiskGrid, DomainKind};
use lpmd::hopf::reconstruct_potential;
use lpmd::optimizer::{initial_guess, minimize_multilevel, SolverConfig};
use lpmd::singular::TransformPlan;
use std::time::Instant;

fn main() {
    let p = 2.0;
    let plan = TransformPlan::new(512, 4.0).unwrap();
    for eps in [0.5f64, 0.7, 0.9] {
        let trace = BoundaryTrace::sinusoidal(eps);
        let cfg = SolverConfig { grad_tol: 1e-6, max_iters: 100_000, ..Default::default() };
        for (nr, nt) in [(64usize, 128usize), (128, 256)] {
            let t0 = Instant::now();
            let grids: Vec<DiskGrid> = (0..3usize).rev()
                .map(|l| DiskGrid::build(DomainKind::Disk, nr >> l, nt >> l).unwrap())
                .collect();
            match minimize_multilevel(&grids, p, &cfg, |g| initial_guess(&trace, g)) {
                Ok(res) => {
                    let g = grids.last().unwrap();
                    match reconstruct_potential(&res.mapping, g, p, &plan) {
                        Ok(pot) => eprintln!(
                            "eps={eps} {nr}x{nt}: conv={} minJ={:.3} compat={:.4e} t={:.0}s",
                            res.converged, res.min_j, pot.compat_residual, t0.elapsed().as_secs_f64()
                        ),
                        Err(e) => eprintln!("eps={eps} {nr}x{nt}: reconstruct error: {e}"),
                    }
                }
                Err(e) => eprintln!("eps={eps} {nr}x{nt}: solve error: {e}"),
            }
        }
    }
}
