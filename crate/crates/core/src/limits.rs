//! Limiting-regime diagnostics: the p→1 harmonic comparison, the p→∞
//! extremal (Teichmüller) diagnostics, and the Douglas-type boundary
//! integral.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{distortion, BoundaryTrace, MappingField};
use crate::grid::{pairwise_sum_f64, ComplexField, DiskGrid};
use crate::hopf::hopf_pullback;
use crate::optimizer::SolveResult;

/// Harmonic (Poisson) extension of a circle trace onto a disk grid,
/// mode-wise c_n r^{|n|} e^{inθ}.
pub fn poisson_extend(trace: &BoundaryTrace, grid: &DiskGrid) -> MappingField {
    crate::optimizer::poisson_extension(trace, grid)
}

/// k from the limiting dual energy: sqrt((E*/π − 1)/(E*/π + 1)).
pub fn teich_k(e_star: f64) -> Result<f64> {
    let x = e_star / std::f64::consts::PI;
    if x < 1.0 - 1e-8 {
        return Err(Error::Diagnostics(format!(
            "dual energy {e_star} below π; no distortion bound"
        )));
    }
    if x <= 1.0 {
        return Ok(0.0);
    }
    Ok(((x - 1.0) / (x + 1.0)).sqrt())
}

/// Nearest-image inversion of a forward map: for each node w of the target
/// grid, Newton-solve f(z) = w with bilinear interpolation of f and its
/// cached derivatives.
pub struct PseudoInverse {
    pub mapping: MappingField,
    /// max |f(z(w)) − w| over target nodes.
    pub max_defect: f64,
    pub non_converged: usize,
}

pub fn pseudo_inverse(
    m: &MappingField,
    grid: &DiskGrid,
    target: &DiskGrid,
) -> Result<PseudoInverse> {
    m.f.compatible(grid)?;
    // On the disk the interpolant is defined through the origin, so only the
    // annulus needs an inner clamp; both clamp at the outermost ring.
    let r_lo = match grid.kind {
        crate::grid::DomainKind::Disk => 0.0,
        crate::grid::DomainKind::Annulus { .. } => grid.r[0],
    };
    let r_hi = grid.r[grid.n_r - 1];
    let clamp_dom = |z: Complex64| -> Complex64 {
        let r = z.norm();
        if r < r_lo {
            if r == 0.0 { Complex64::new(r_lo, 0.0) } else { z * (r_lo / r) }
        } else if r > r_hi {
            z * (r_hi / r)
        } else {
            z
        }
    };
    // Coarse nearest-sample scan (strided) seeds the Newton iteration.
    let stride = (grid.n_r / 24).max(1);
    let mut seeds = Vec::new();
    for j in (0..grid.n_r).step_by(stride) {
        for k in (0..grid.n_theta).step_by(stride) {
            let i = grid.idx(j, k);
            seeds.push((m.f.values[i], grid.node(j, k)));
        }
    }
    // Independent per-node Newton solves; parallel over nodes, results
    // written in index order so the output is thread-count independent.
    use rayon::prelude::*;
    let targets: Vec<Complex64> = target.nodes();
    let solved: Vec<(Complex64, f64)> = targets
        .par_iter()
        .map(|&w| {
            let mut z = seeds
                .iter()
                .min_by(|a, b| {
                    (a.0 - w).norm_sqr().partial_cmp(&(b.0 - w).norm_sqr()).unwrap()
                })
                .unwrap()
                .1;
            let mut defect = f64::INFINITY;
            for _ in 0..60 {
                let fz_here = crate::grid::interp(&m.fz, grid, z);
                let fzb_here = crate::grid::interp(&m.fzbar, grid, z);
                let f_here = crate::grid::interp(&m.f, grid, z);
                let rhs = w - f_here;
                defect = rhs.norm();
                if defect < 1e-13 {
                    break;
                }
                let jac = fz_here.norm_sqr() - fzb_here.norm_sqr();
                if jac.abs() < 1e-14 {
                    break;
                }
                let delta = (fz_here.conj() * rhs - fzb_here * rhs.conj()) / jac;
                z = clamp_dom(z + delta);
            }
            (z, defect)
        })
        .collect();
    let mut max_defect: f64 = 0.0;
    let mut non_converged = 0usize;
    let mut values = Vec::with_capacity(target.len());
    for (z, defect) in solved {
        if defect > 1e-8 {
            non_converged += 1;
        }
        max_defect = max_defect.max(defect);
        values.push(z);
    }
    let f = ComplexField::from_values(target, values)?;
    Ok(PseudoInverse {
        mapping: MappingField::from_field(f, target)?,
        max_defect,
        non_converged,
    })
}

/// Invert a circle homeomorphism trace by solving the lifted angle equation
/// at uniform samples of the image circle.
pub fn invert_circle_trace(trace: &BoundaryTrace, m_samples: usize) -> Result<BoundaryTrace> {
    if trace.winding_number() != 1 {
        return Err(Error::Boundary("trace inversion needs winding number 1".into()));
    }
    // Lifted argument on a dense grid: eta monotone for homeomorphisms.
    let dense = 8 * m_samples;
    let mut eta = Vec::with_capacity(dense + 1);
    let mut prev = trace.eval(0.0);
    let mut acc = prev.arg();
    eta.push(acc);
    for i in 1..=dense {
        let t = std::f64::consts::TAU * i as f64 / dense as f64;
        let cur = trace.eval(t);
        acc += (cur / prev).arg();
        eta.push(acc);
        prev = cur;
    }
    let theta_of = |phi: f64| -> f64 {
        // Bring phi into [eta[0], eta[0] + 2π).
        let base = eta[0];
        let target = base + (phi - base).rem_euclid(std::f64::consts::TAU);
        let mut lo = 0usize;
        let mut hi = dense;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if eta[mid] <= target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let span = eta[hi] - eta[lo];
        let frac = if span.abs() < 1e-300 { 0.0 } else { (target - eta[lo]) / span };
        std::f64::consts::TAU * (lo as f64 + frac) / dense as f64
    };
    let samples: Vec<Complex64> = (0..m_samples)
        .map(|k| {
            let phi = std::f64::consts::TAU * k as f64 / m_samples as f64;
            Complex64::from_polar(1.0, theta_of(phi))
        })
        .collect();
    Ok(BoundaryTrace::from_samples(&samples))
}

/// p→∞ sweep diagnostics.
#[derive(Clone, Debug, Serialize)]
pub struct TeichReport {
    pub p_sweep: Vec<f64>,
    /// (E*_p/π)^{1/p} per sweep entry (E*_p(h_p) = E_p(f_p)).
    pub roots: Vec<f64>,
    pub root_extrapolated: f64,
    pub k_estimate: f64,
    pub mu_flatness: Vec<f64>,
    /// sup |Ξ| over image points with |w| <= 1/2 (largest-p entry).
    pub xi_sup_half_disk: f64,
    pub degenerate: bool,
    pub warnings: Vec<String>,
    /// Ξ_p = Φ_p/||Φ_p||₁ for the largest p, as pullback values on the
    /// solve grid (CSV dump; not part of the JSON record).
    #[serde(skip)]
    pub xi: ComplexField,
}

/// Threshold for the locally-uniform-degeneracy proxy on the half-disk.
pub const DELTA_DEGEN: f64 = 1e-2;

pub fn teich_diagnostics(
    results: &[(f64, SolveResult)],
    grid: &DiskGrid,
) -> Result<TeichReport> {
    if results.len() < 3 {
        return Err(Error::Diagnostics("need at least 3 sweep points".into()));
    }
    if results.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::Diagnostics("sweep must ascend in p".into()));
    }
    if results.iter().any(|(_, r)| !r.converged) {
        return Err(Error::Diagnostics("all sweep entries must be converged".into()));
    }
    let p_sweep: Vec<f64> = results.iter().map(|(p, _)| *p).collect();
    let roots: Vec<f64> = results
        .iter()
        .map(|(p, r)| (r.report.energy_p / std::f64::consts::PI).powf(1.0 / p))
        .collect();
    let mut warnings = Vec::new();
    for w in roots.windows(2) {
        if w[1] > w[0] * (1.0 + 1e-6) {
            warnings.push(format!(
                "roots not monotone nonincreasing: {} -> {} (finite-p effect)",
                w[0], w[1]
            ));
        }
    }
    // Richardson in 1/p from the last two entries: roots ≈ R + c/p.
    let n = roots.len();
    let (p1, p2) = (p_sweep[n - 2], p_sweep[n - 1]);
    let (r1, r2) = (roots[n - 2], roots[n - 1]);
    let c = (r1 - r2) / (1.0 / p1 - 1.0 / p2);
    let root_extrapolated = (r2 - c / p2).max(1.0);
    let k_estimate = teich_k(std::f64::consts::PI * root_extrapolated)?;
    let mu_flatness: Vec<f64> = results
        .iter()
        .map(|(_, r)| {
            let b = distortion(&r.mapping, grid).expect("bundle of converged result");
            let wsum: Vec<f64> =
                (0..grid.len()).map(|i| grid.weights[i] * b.j[i].max(0.0)).collect();
            let total = pairwise_sum_f64(&wsum);
            let mean_terms: Vec<f64> = (0..grid.len())
                .map(|i| wsum[i] * b.mu.values[i].norm())
                .collect();
            let mean = pairwise_sum_f64(&mean_terms) / total;
            let var_terms: Vec<f64> = (0..grid.len())
                .map(|i| wsum[i] * (b.mu.values[i].norm() - mean).powi(2))
                .collect();
            (pairwise_sum_f64(&var_terms) / total).sqrt()
        })
        .collect();
    // Ξ for the largest p via the pullback differential.
    let (_, last) = &results[n - 1];
    let pb = hopf_pullback(&last.mapping, grid, p_sweep[n - 1])?;
    let scale = grid.area();
    let (xi, xi_sup_half_disk, degenerate) = if pb.l1_image <= 1e-14 * scale {
        // Conformal data: Φ vanishes identically; flag as degenerate mass.
        (ComplexField::zeros(grid), 0.0, true)
    } else {
        let xi = ComplexField::from_values(
            grid,
            pb.values.values.iter().map(|v| v / pb.l1_image).collect(),
        )?;
        let mut sup: f64 = 0.0;
        for i in 0..grid.len() {
            if last.mapping.f.values[i].norm() <= 0.5 {
                sup = sup.max(xi.values[i].norm());
            }
        }
        (xi, sup, sup < DELTA_DEGEN)
    };
    Ok(TeichReport {
        p_sweep,
        roots,
        root_extrapolated,
        k_estimate,
        mu_flatness,
        xi_sup_half_disk,
        degenerate,
        warnings,
        xi,
    })
}

/// L¹(𝔻)-normalize a field and return its sup over the closed half-radius
/// disk (the degenerate-sequence observable).
pub fn xi_normalize(field: &ComplexField, grid: &DiskGrid) -> Result<(ComplexField, f64)> {
    field.compatible(grid)?;
    let terms: Vec<f64> = field
        .values
        .iter()
        .zip(&grid.weights)
        .map(|(v, w)| w * v.norm())
        .collect();
    let l1 = pairwise_sum_f64(&terms);
    if l1 <= 0.0 {
        return Err(Error::Diagnostics("cannot normalize the zero field".into()));
    }
    let xi = ComplexField::from_values(grid, field.values.iter().map(|v| v / l1).collect())?;
    let mut sup: f64 = 0.0;
    for j in 0..grid.n_r {
        if grid.r[j] > 0.5 {
            break;
        }
        for k in 0..grid.n_theta {
            sup = sup.max(xi.values[grid.idx(j, k)].norm());
        }
    }
    Ok((xi, sup))
}

/// The Douglas-type double boundary integral ∬ (Q + |log Q|) |dζ||dξ|,
/// Q = |(f₀(ζ)−f₀(ξ))/(ζ−ξ)|².
#[derive(Clone, Debug, Serialize)]
pub struct DouglasReport {
    pub value: f64,
    pub value_refined: f64,
    /// Relative drift under doubling the quadrature.
    pub drift: f64,
    pub finite: bool,
}

fn douglas_value(trace: &BoundaryTrace, n_quad: usize) -> f64 {
    let w = std::f64::consts::TAU / n_quad as f64;
    let band = w; // exclude |ζ−ξ| < 2π/n_quad
    let nodes: Vec<(Complex64, Complex64, f64)> = (0..n_quad)
        .map(|i| {
            let t = (i as f64 + 0.5) * w;
            let zeta = Complex64::from_polar(1.0, t);
            let f = trace.eval(t);
            // Diagonal limit Q -> |df₀/dθ|² (|dζ/dθ| = 1 on the circle).
            let qdiag = trace.deriv_theta(t).norm_sqr();
            (zeta, f, qdiag)
        })
        .collect();
    // Rows are independent; each is summed sequentially and the row totals
    // are combined pairwise in index order (thread-count independent).
    use rayon::prelude::*;
    let row_sums: Vec<f64> = (0..n_quad)
        .into_par_iter()
        .map(|i| {
            let (zi, fi, qdiag) = nodes[i];
            let mut acc = 0.0;
            for (j, &(zj, fj, _)) in nodes.iter().enumerate() {
                let q = if i == j || (zi - zj).norm() < band {
                    // Band cells are scored at the analytic diagonal limit
                    // so the excluded measure is compensated exactly.
                    qdiag
                } else {
                    (fi - fj).norm_sqr() / (zi - zj).norm_sqr()
                };
                acc += q + q.ln().abs();
            }
            acc * w * w
        })
        .collect();
    pairwise_sum_f64(&row_sums)
}

pub fn douglas_integral(trace: &BoundaryTrace, n_quad: usize) -> Result<DouglasReport> {
    if n_quad < 16 {
        return Err(Error::Config("douglas quadrature needs n_quad >= 16".into()));
    }
    let value = douglas_value(trace, n_quad);
    let value_refined = douglas_value(trace, 2 * n_quad);
    let drift = (value_refined - value).abs() / value.abs().max(1e-300);
    Ok(DouglasReport { value, value_refined, drift, finite: drift <= 1e-3 })
}
