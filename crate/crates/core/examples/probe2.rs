use lpmd::fields::{distortion, BoundaryTrace};
use lpmd::grid::{DiskGrid, DomainKind};
use lpmd::hopf::reconstruct_potential;
use lpmd::optimizer::{initial_guess, minimize_multilevel, SolverConfig};
use lpmd::singular::TransformPlan;
use num_complex::Complex64;
use std::time::Instant;

fn main() {
    let p = 2.0;
    let plan = TransformPlan::new(512, 4.0).unwrap();
    let traces: Vec<(&str, BoundaryTrace)> = vec![
        ("sin1(0.5)", BoundaryTrace::sinusoidal(0.5)),
        ("sin2(0.45)", BoundaryTrace::from_samples_fn(
            |t| Complex64::from_polar(1.0, t + 0.45 * (2.0 * t).sin()), 512)),
    ];
    for (name, trace) in &traces {
        let cfg = SolverConfig { grad_tol: 1e-6, max_iters: 100_000, ..Default::default() };
        for (nr, nt) in [(64usize, 128usize), (128, 256)] {
            let t0 = Instant::now();
            let grids: Vec<DiskGrid> = (0..3usize).rev()
                .map(|l| DiskGrid::build(DomainKind::Disk, nr >> l, nt >> l).unwrap())
                .collect();
            match minimize_multilevel(&grids, p, &cfg, |g| initial_guess(trace, g)) {
                Ok(res) => {
                    let g = grids.last().unwrap();
                    let bnd = distortion(&res.mapping, g).unwrap();
                    let kmax = bnd.k.iter().copied().fold(0.0, f64::max);
                    let pot = reconstruct_potential(&res.mapping, g, p, &plan).unwrap();
                    eprintln!(
                        "{name} {nr}x{nt}: conv={} minJ={:.3} Kmax={kmax:.3} compat={:.4e} t={:.0}s",
                        res.converged, res.min_j, pot.compat_residual, t0.elapsed().as_secs_f64()
                    );
                }
                Err(e) => eprintln!("{name} {nr}x{nt}: solve error: {e}"),
            }
        }
    }
}
