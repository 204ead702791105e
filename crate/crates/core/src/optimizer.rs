//! Minimization of the discrete L^p distortion energy over mappings with
//! pinned boundary rings: projected gradient descent (spectral trial step,
//! Armijo backtracking, hard min-J floor) plus continuation in p.

use num_complex::Complex64;

use crate::energy::{
    bump_panel, eval_energy_min_j, eval_with_gradient, panel_max_relative, EnergyReport,
    ResidualReport,
};
use crate::error::{Error, Result};
use crate::fields::{BoundaryTrace, MappingField};
use crate::grid::{pairwise_sum_f64, ComplexField, DiskGrid, DomainKind};

#[derive(Clone, Copy, Debug)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Stop when ||grad|| <= grad_tol * ||grad at start||.
    pub grad_tol: f64,
    /// First trial step is step_init / ||grad||_inf.
    pub step_init: f64,
    pub armijo_c: f64,
    /// Accepted iterates must keep min J above j_floor * median J of the
    /// (pre-regularized) initial guess.
    pub j_floor: f64,
    pub seed: u64,
    /// Bumps in the stationarity panel attached to the result.
    pub panel_size: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iters: 20_000,
            grad_tol: 1e-7,
            step_init: 0.1,
            armijo_c: 1e-4,
            j_floor: 1e-2,
            seed: 1,
            panel_size: 20,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0
            || !(self.grad_tol > 0.0)
            || !(self.step_init > 0.0)
            || !(self.armijo_c > 0.0 && self.armijo_c < 1.0)
            || !(self.j_floor > 0.0)
        {
            return Err(Error::Config("solver config fields must be positive, armijo_c in (0,1)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct ContinuationSchedule {
    pub p_values: Vec<f64>,
}

impl ContinuationSchedule {
    pub fn new(p_values: Vec<f64>) -> Result<Self> {
        if p_values.is_empty() {
            return Err(Error::Config("empty continuation schedule".into()));
        }
        if p_values.iter().any(|&p| !(p > 1.0)) {
            return Err(Error::Config("all schedule entries must be > 1".into()));
        }
        let asc = p_values.windows(2).all(|w| w[1] > w[0]);
        let desc = p_values.windows(2).all(|w| w[1] < w[0]);
        if !(asc || desc) {
            return Err(Error::Config("schedule must be strictly monotone".into()));
        }
        Ok(ContinuationSchedule { p_values })
    }
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub mapping: MappingField,
    pub report: EnergyReport,
    pub residual_panel: Vec<ResidualReport>,
    pub panel_max_relative: f64,
    pub iterations: usize,
    pub converged: bool,
    pub final_rel_grad: f64,
    pub min_j: f64,
    /// Blend steps toward the identity applied before the solve (0 = none).
    pub pre_regularization_steps: usize,
    pub stall: Option<String>,
}

/// Harmonic (Poisson) extension of a circle trace, mode-wise
/// c_n e^{inθ} -> c_n r^{|n|} e^{inθ}. Rejects traces of winding number != 1.
pub fn initial_guess(trace: &BoundaryTrace, grid: &DiskGrid) -> Result<MappingField> {
    if !matches!(grid.kind, DomainKind::Disk) {
        return Err(Error::Boundary("Poisson initializer is defined on the disk".into()));
    }
    let w = trace.winding_number();
    if w != 1 {
        return Err(Error::Boundary(format!("boundary trace has winding number {w}, need 1")));
    }
    Ok(poisson_extension(trace, grid).with_boundary(trace.clone()))
}

/// The extension itself, without the degree check (shared with diagnostics).
pub fn poisson_extension(trace: &BoundaryTrace, grid: &DiskGrid) -> MappingField {
    let order = trace.order() as i64;
    let mut values = vec![crate::grid::C_ZERO; grid.len()];
    for n in -order..=order {
        let c = trace.coeff(n);
        if c.norm() == 0.0 {
            continue;
        }
        let nn = n.unsigned_abs() as i32;
        for j in 0..grid.n_r {
            let radial = grid.r[j].powi(nn);
            for k in 0..grid.n_theta {
                let phase = Complex64::from_polar(1.0, n as f64 * grid.theta[k]);
                values[grid.idx(j, k)] += c * radial * phase;
            }
        }
    }
    let f = ComplexField::from_values(grid, values).expect("sized by grid");
    MappingField::from_field(f, grid).expect("grid-consistent")
}

/// Mode-wise harmonic extension on an annulus through prescribed values at
/// two radii: α r^{|n|} + β (r_in/r)^{|n|} per mode (log-linear for n = 0).
pub fn harmonic_annulus_extension(
    inner: &BoundaryTrace,
    outer: &BoundaryTrace,
    r_inner: f64,
    r_outer: f64,
    grid: &DiskGrid,
) -> Result<MappingField> {
    if !(r_inner > 0.0 && r_inner < r_outer) {
        return Err(Error::Boundary("need 0 < r_inner < r_outer".into()));
    }
    let order = inner.order().max(outer.order()) as i64;
    let mut values = vec![crate::grid::C_ZERO; grid.len()];
    let rho = r_inner / r_outer;
    for n in -order..=order {
        let ci = inner.coeff(n);
        let co = outer.coeff(n);
        if ci.norm() == 0.0 && co.norm() == 0.0 {
            continue;
        }
        if n == 0 {
            // a + b log(r/r_outer), matching co at r_outer and ci at r_inner.
            let b = (ci - co) / rho.ln();
            for j in 0..grid.n_r {
                let lr = (grid.r[j] / r_outer).ln();
                for k in 0..grid.n_theta {
                    values[grid.idx(j, k)] += co + b * lr;
                }
            }
            continue;
        }
        let m = n.unsigned_abs() as i32;
        // alpha (r/r_outer)^m + beta (r_inner/r)^m, solved stably:
        // at r_outer: alpha + beta rho^m = co; at r_inner: alpha rho^m + beta = ci.
        let rm = rho.powi(m);
        let det = 1.0 - rm * rm;
        let alpha = (co - ci * rm) / det;
        let beta = (ci - co * rm) / det;
        for j in 0..grid.n_r {
            let u = (grid.r[j] / r_outer).powi(m);
            let v = (r_inner / grid.r[j]).powi(m);
            let radial_part = alpha * u + beta * v;
            for k in 0..grid.n_theta {
                let phase = Complex64::from_polar(1.0, n as f64 * grid.theta[k]);
                values[grid.idx(j, k)] += radial_part * phase;
            }
        }
    }
    let f = ComplexField::from_values(grid, values)?;
    MappingField::from_field(f, grid)
}

/// Bilinear transfer of a mapping onto a finer (or coarser) grid of the same
/// domain; used to warm-start solves across resolutions.
pub fn prolong(m: &MappingField, from: &DiskGrid, to: &DiskGrid) -> Result<MappingField> {
    if from.kind != to.kind {
        return Err(Error::Grid("prolongation requires matching domains".into()));
    }
    let f = ComplexField::from_fn(to, |z| crate::grid::interp(&m.f, from, z));
    MappingField::from_field(f, to)
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs[xs.len() / 2]
}

fn grad_norms(grad: &[Complex64]) -> (f64, f64) {
    let sq: Vec<f64> = grad.iter().map(|g| g.norm_sqr()).collect();
    let l2 = pairwise_sum_f64(&sq).sqrt();
    let linf = grad.iter().map(|g| g.norm()).fold(0.0, f64::max);
    (l2, linf)
}

/// Minimize E_p from an explicit initial mapping; pinned nodes (the grid's
/// boundary rings) keep their initial values bit-identically.
pub fn minimize_from(
    init: &MappingField,
    grid: &DiskGrid,
    p: f64,
    config: &SolverConfig,
) -> Result<SolveResult> {
    config.validate()?;
    let pinned = grid.pinned_mask();
    let mut x = init.f.values.clone();

    // Pre-regularize toward the identity if the guess folds over.
    let mut pre_steps = 0usize;
    let (_, mut minj) = eval_energy_min_j(&x, grid, p)?;
    while minj <= 0.0 && pre_steps < 9 {
        pre_steps += 1;
        let t = 0.1 * pre_steps as f64;
        for j in 0..grid.n_r {
            for k in 0..grid.n_theta {
                let i = grid.idx(j, k);
                if !pinned[i] {
                    x[i] = (1.0 - t) * init.f.values[i] + t * grid.node(j, k);
                }
            }
        }
        minj = eval_energy_min_j(&x, grid, p)?.1;
    }
    if minj <= 0.0 {
        return Err(Error::Diagnostics(
            "initial guess has non-positive Jacobian even after shrinking toward the identity".into(),
        ));
    }

    let init_j: Vec<f64> = {
        let f = ComplexField::from_values(grid, x.clone())?;
        let m = MappingField::from_field(f, grid)?;
        crate::fields::jacobian(&m, grid)?
    };
    let barrier = config.j_floor * median(init_j);

    // Jacobi-style diagonal metric: quadrature weight times the stencil
    // stiffness scale. Steps are then well-scaled across rings despite the
    // 100x variation of node weights, and the spectral step length applies
    // to the preconditioned system.
    let diag: Vec<f64> = (0..grid.len())
        .map(|i| {
            let r = grid.r[i / grid.n_theta];
            let dtheta_arc = r * grid.dtheta;
            grid.weights[i] * (1.0 / (grid.dr * grid.dr) + 1.0 / (dtheta_arc * dtheta_arc))
        })
        .collect();
    let precondition = |g: &[Complex64]| -> Vec<Complex64> {
        g.iter().zip(&diag).map(|(gi, di)| gi / *di).collect()
    };

    let mut eval = eval_with_gradient(&x, grid, p, &pinned)?;
    let (g0_l2, _) = grad_norms(&eval.grad);
    let mut g_l2 = g0_l2;
    // Gradient norms are measured against a problem-scale reference so that
    // warm starts (which begin with small gradients) stop at the same
    // absolute quality as cold ones; the floor also treats round-off-level
    // gradients as zero (the identity boundary starts exactly critical).
    let g_ref = g0_l2.max(1.0 + eval.value);
    let stop = |g: f64| g <= config.grad_tol * g_ref;

    let mut iterations = 0usize;
    let mut converged = stop(g0_l2);
    let mut stall = None;
    let mut dir = precondition(&eval.grad);
    let mut bb: Option<(Vec<Complex64>, Vec<Complex64>, f64)> = None; // (s, y, last t)

    while !converged && iterations < config.max_iters {
        if stop(g_l2) {
            converged = true;
            break;
        }
        // Slope of t -> E(x - t dir) at 0 is -<g, D^{-1} g>.
        let slope: f64 = pairwise_sum_f64(
            &eval.grad.iter().zip(&dir).map(|(g, d)| (g * d.conj()).re).collect::<Vec<_>>(),
        );
        let mut t = match &bb {
            Some((s, y, t_last)) => {
                let sy: f64 = s.iter().zip(y).map(|(a, b)| (a * b.conj()).re).sum();
                let sds: f64 = s.iter().zip(&diag).map(|(a, d)| d * a.norm_sqr()).sum();
                if sy > 0.0 && sds > 0.0 {
                    (sds / sy).clamp(1e-14, 1e8)
                } else {
                    (t_last * 2.0).clamp(1e-14, 1e8)
                }
            }
            None => {
                let d_inf = dir.iter().map(|d| d.norm()).fold(0.0, f64::max);
                config.step_init / d_inf.max(1e-300)
            }
        };
        let mut accepted = None;
        while t >= 1e-14 {
            let cand: Vec<Complex64> = x.iter().zip(&dir).map(|(xi, di)| xi - t * di).collect();
            let (e_new, mj) = eval_energy_min_j(&cand, grid, p)?;
            if mj > barrier && e_new <= eval.value - config.armijo_c * t * slope {
                accepted = Some(cand);
                break;
            }
            t *= 0.5;
        }
        let Some(cand) = accepted else {
            stall = Some(format!(
                "line search stalled at iteration {iterations} (step below 1e-14)"
            ));
            break;
        };
        let eval_new = eval_with_gradient(&cand, grid, p, &pinned)?;
        let s: Vec<Complex64> = cand.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<Complex64> =
            eval_new.grad.iter().zip(&eval.grad).map(|(a, b)| a - b).collect();
        bb = Some((s, y, t));
        x = cand;
        eval = eval_new;
        dir = precondition(&eval.grad);
        g_l2 = grad_norms(&eval.grad).0;
        iterations += 1;
        if stop(g_l2) {
            converged = true;
        }
    }

    let f = ComplexField::from_values(grid, x)?;
    let mut mapping = MappingField::from_field(f, grid)?;
    mapping.boundary = init.boundary.clone();
    let report = EnergyReport::compute(&mapping, grid, p)?;
    let panel = bump_panel(grid, config.panel_size, config.seed);
    let mut residual_panel = Vec::with_capacity(panel.len());
    for phi in &panel {
        residual_panel.push(crate::energy::inner_variation_residual(&mapping, grid, p, phi)?);
    }
    let panel_max = panel_max_relative(&mapping, grid, p, &panel)?;
    Ok(SolveResult {
        mapping,
        report,
        residual_panel,
        panel_max_relative: panel_max,
        iterations,
        converged,
        final_rel_grad: g_l2 / g_ref,
        min_j: minj.min(eval.min_j),
        pre_regularization_steps: pre_steps,
        stall,
    })
}

/// Minimize from boundary data: Poisson-extends the trace for the initial
/// guess, pins the boundary rings at the extension's ring values.
pub fn minimize(
    boundary: &BoundaryTrace,
    p: f64,
    grid: &DiskGrid,
    config: &SolverConfig,
) -> Result<SolveResult> {
    let init = initial_guess(boundary, grid)?;
    minimize_from(&init, grid, p, config)
}

/// Solve through a cascade of grids of the same domain, warm-starting each
/// level's interior from the previous minimizer (pinned rings always come
/// from that level's own initial guess). Returns the finest-level result.
pub fn minimize_multilevel(
    grids: &[DiskGrid],
    p: f64,
    config: &SolverConfig,
    make_init: impl Fn(&DiskGrid) -> Result<MappingField>,
) -> Result<SolveResult> {
    if grids.is_empty() {
        return Err(Error::Config("multilevel solve needs at least one grid".into()));
    }
    let mut carried: Option<(usize, MappingField)> = None;
    let mut last = None;
    for (level, grid) in grids.iter().enumerate() {
        let mut init = make_init(grid)?;
        if let Some((prev_level, prev_map)) = &carried {
            let coarse_grid = &grids[*prev_level];
            let lifted = prolong(prev_map, coarse_grid, grid)?;
            let pinned = grid.pinned_mask();
            let mut vals = lifted.f.values;
            for (i, v) in vals.iter_mut().enumerate() {
                if pinned[i] {
                    *v = init.f.values[i];
                }
            }
            let boundary = init.boundary.clone();
            init = MappingField::from_field(ComplexField::from_values(grid, vals)?, grid)?;
            init.boundary = boundary;
        }
        let res = minimize_from(&init, grid, p, config)?;
        carried = Some((level, res.mapping.clone()));
        last = Some(res);
    }
    Ok(last.expect("non-empty cascade"))
}

/// Sequential solves over a p-schedule, warm-starting each step from the
/// previous minimizer. Aborts at the first non-converged step (partial
/// results are returned).
pub fn continuation(
    boundary: &BoundaryTrace,
    schedule: &ContinuationSchedule,
    grid: &DiskGrid,
    config: &SolverConfig,
) -> Result<Vec<SolveResult>> {
    let init = initial_guess(boundary, grid)?;
    continuation_from(&init, schedule, grid, config)
}

pub fn continuation_from(
    init: &MappingField,
    schedule: &ContinuationSchedule,
    grid: &DiskGrid,
    config: &SolverConfig,
) -> Result<Vec<SolveResult>> {
    let mut results = Vec::with_capacity(schedule.p_values.len());
    let mut warm = init.clone();
    for &p in &schedule.p_values {
        let res = minimize_from(&warm, grid, p, config)?;
        let ok = res.converged;
        warm = res.mapping.clone();
        results.push(res);
        if !ok {
            break;
        }
    }
    Ok(results)
}
