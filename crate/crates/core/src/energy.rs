//! The L^p mean-distortion energy, its dual, analytic gradients, a priori
//! bounds, and the inner-variational residuals.

use num_complex::Complex64;
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::fields::{distortion, MappingField, EPS_J};
use crate::grid::{pairwise_sum, pairwise_sum_f64, DiskGrid, C_ZERO};

/// E_p(f) = ∫ K^p(z,f) dz by midpoint quadrature.
pub fn energy_p(m: &MappingField, grid: &DiskGrid, p: f64) -> Result<f64> {
    let b = distortion(m, grid)?;
    let terms: Vec<f64> =
        b.k.iter().zip(&grid.weights).map(|(&k, &w)| w * k.powf(p)).collect();
    Ok(pairwise_sum_f64(&terms))
}

/// E*_p(h) = ∫ K^p(w,h) J(w,h) dw. Returns the value and the count of nodes
/// with negative Jacobian (flagged, not fatal).
pub fn energy_star(h: &MappingField, grid: &DiskGrid, p: f64) -> Result<(f64, usize)> {
    let b = distortion(h, grid)?;
    let terms: Vec<f64> = b
        .k
        .iter()
        .zip(&b.j)
        .zip(&grid.weights)
        .map(|((&k, &j), &w)| w * k.powf(p) * j)
        .collect();
    Ok((pairwise_sum_f64(&terms), b.orientation_violations))
}

/// Both sides of the a priori Hölder bound:
/// lhs = [∫ ||Df||^(2p/(p+1))]^(p+1), rhs = π^p ∫ K^p (unit-disk target).
pub fn holder_bound(m: &MappingField, grid: &DiskGrid, p: f64) -> Result<(f64, f64)> {
    let b = distortion(m, grid)?;
    let q = p / (p + 1.0);
    let lhs_terms: Vec<f64> = m
        .fz
        .values
        .iter()
        .zip(&m.fzbar.values)
        .zip(&grid.weights)
        .map(|((a, c), &w)| w * (a.norm_sqr() + c.norm_sqr()).powf(q))
        .collect();
    let lhs = pairwise_sum_f64(&lhs_terms).powf(p + 1.0);
    let rhs_terms: Vec<f64> =
        b.k.iter().zip(&grid.weights).map(|(&k, &w)| w * k.powf(p)).collect();
    let rhs = std::f64::consts::PI.powf(p) * pairwise_sum_f64(&rhs_terms);
    Ok((lhs, rhs))
}

// ---------------------------------------------------------------------------
// The minimized discrete energy.
//
// Nodal centered differences annihilate grid-scale zigzag modes (their null
// space would let a minimizer develop checkerboards that lower the energy
// below the continuum value), so the functional handed to the optimizer is
// assembled per polar cell instead: on each cell [r_j, r_j+1] x [θ_k, θ_k+1]
// the map is treated bilinearly, Wirtinger derivatives are formed from face
// differences at two Gauss points in r and the midpoint in θ, with the trig
// normalizations (2 sin(Δθ/2), cos(Δθ/2)) that keep a + bz + c z̄ exact. All
// four Nyquist modes are visible to at least one face difference, so the
// energy is coercive on the whole nodal space.
// ---------------------------------------------------------------------------

const GAUSS_ETA: [f64; 2] = [0.21132486540518708, 0.7886751345948129];

/// K^p with cheap paths for the common exponents (p = 2 drives the hot
/// loops of the annulus benchmark).
#[inline]
fn pow_p(k: f64, p: f64) -> f64 {
    if p == 2.0 {
        k * k
    } else if p == 1.0 {
        k
    } else if p.fract() == 0.0 && p.abs() < 64.0 {
        k.powi(p as i32)
    } else {
        k.powf(p)
    }
}

struct CellGeometry {
    cr: f64, // radial face-difference normalization
    ct: f64, // angular face-difference normalization
    n_t: usize,
}

impl CellGeometry {
    fn new(grid: &DiskGrid) -> Self {
        CellGeometry {
            cr: 1.0 / (2.0 * grid.dr * (0.5 * grid.dtheta).cos()),
            ct: 1.0 / (2.0 * (0.5 * grid.dtheta).sin()),
            n_t: grid.n_theta,
        }
    }
}

#[inline]
fn cell_derivs(
    v: &[Complex64],
    grid: &DiskGrid,
    geo: &CellGeometry,
    j: usize,
    k: usize,
    eta: f64,
) -> (Complex64, Complex64, f64) {
    let kp = if k + 1 == geo.n_t { 0 } else { k + 1 };
    let i00 = grid.idx(j, k);
    let i01 = grid.idx(j, kp);
    let i10 = grid.idx(j + 1, k);
    let i11 = grid.idx(j + 1, kp);
    let r_g = (1.0 - eta) * grid.r[j] + eta * grid.r[j + 1];
    let f_r = geo.cr * (v[i10] + v[i11] - v[i00] - v[i01]);
    let f_t = geo.ct * ((1.0 - eta) * (v[i01] - v[i00]) + eta * (v[i11] - v[i10]));
    let e_mid = grid.e_itheta[k] * Complex64::from_polar(1.0, 0.5 * grid.dtheta);
    let tang = crate::grid::I * (f_t / r_g);
    let fz = 0.5 * e_mid.conj() * (f_r - tang);
    let fzb = 0.5 * e_mid * (f_r + tang);
    (fz, fzb, r_g)
}

/// The cell-assembled distortion energy of a nodal value vector: the
/// functional the optimizer actually minimizes. Returns (energy, min J over
/// evaluation points); folded cells contribute +inf so line searches reject
/// them.
pub fn discrete_energy(values: &[Complex64], grid: &DiskGrid, p: f64) -> Result<(f64, f64)> {
    if values.len() != grid.len() {
        return Err(Error::GridMismatch);
    }
    let geo = CellGeometry::new(grid);
    let half_wedge = 0.5 * grid.dr * grid.dtheta;
    let mut min_j = f64::INFINITY;
    let mut terms = vec![0.0; (grid.n_r - 1) * grid.n_theta * 2];
    let mut idx = 0usize;
    for j in 0..grid.n_r - 1 {
        for k in 0..grid.n_theta {
            for &eta in &GAUSS_ETA {
                let (fz, fzb, r_g) = cell_derivs(values, grid, &geo, j, k, eta);
                let nn = fz.norm_sqr();
                let bb = fzb.norm_sqr();
                let d = nn - bb;
                min_j = min_j.min(d);
                terms[idx] = if d > EPS_J {
                    r_g * half_wedge * pow_p((nn + bb) / d, p)
                } else {
                    f64::INFINITY
                };
                idx += 1;
            }
        }
    }
    Ok((pairwise_sum_f64(&terms), min_j))
}

/// Cell-assembled energy of a mapping (same functional as `discrete_energy`).
pub fn element_energy_p(m: &MappingField, grid: &DiskGrid, p: f64) -> Result<f64> {
    Ok(discrete_energy(&m.f.values, grid, p)?.0)
}

/// Energy of the four cells around one node of `discrete_energy`'s assembly;
/// perturbing that node changes nothing else. Used by finite-difference
/// verification so the difference quotient avoids large-sum cancellation.
pub fn patch_energy(values: &[Complex64], grid: &DiskGrid, p: f64, j0: usize, k0: usize) -> f64 {
    let geo = CellGeometry::new(grid);
    let half_wedge = 0.5 * grid.dr * grid.dtheta;
    let mut acc = 0.0;
    for j in j0.saturating_sub(1)..=j0.min(grid.n_r - 2) {
        for dk in [-1i64, 0] {
            let k = ((k0 as i64 + dk).rem_euclid(grid.n_theta as i64)) as usize;
            for &eta in &GAUSS_ETA {
                let (fz, fzb, r_g) = cell_derivs(values, grid, &geo, j, k, eta);
                let nn = fz.norm_sqr();
                let bb = fzb.norm_sqr();
                let d = nn - bb;
                acc += if d > EPS_J {
                    r_g * half_wedge * pow_p((nn + bb) / d, p)
                } else {
                    f64::INFINITY
                };
            }
        }
    }
    acc
}

/// Exact derivative of `discrete_energy` with respect to the nodal values.
///
/// Returned as a complex field encoding (∂E/∂Re f_j, ∂E/∂Im f_j) in the
/// real/imaginary parts: the transpose of the cell stencil pipeline applied
/// to the pointwise Wirtinger sensitivities of w·K^p. Pinned nodes get zero.
pub fn energy_gradient(
    m: &MappingField,
    grid: &DiskGrid,
    p: f64,
    pinned: &[bool],
) -> Result<Vec<Complex64>> {
    Ok(eval_with_gradient(&m.f.values, grid, p, pinned)?.grad)
}

/// Smooth radial bump supported in a ball: amplitude · exp(1/(t²−1)) for
/// t = |z−c|/R < 1, identically zero outside. The Wirtinger derivatives are
/// evaluated in closed form.
#[derive(Clone, Debug)]
pub struct TestFunction {
    pub center: Complex64,
    pub radius: f64,
    pub amplitude: Complex64,
}

impl TestFunction {
    pub fn new(center: Complex64, radius: f64) -> Self {
        TestFunction { center, radius, amplitude: Complex64::new(1.0, 0.0) }
    }

    pub fn scaled(mut self, amplitude: Complex64) -> Self {
        self.amplitude = amplitude;
        self
    }

    /// Support ball must sit strictly inside the domain (with clearance).
    pub fn check_support(&self, grid: &DiskGrid, clearance: f64) -> Result<()> {
        let rc = self.center.norm();
        if rc + self.radius + clearance >= 1.0 {
            return Err(Error::TestFunction(format!(
                "support reaches the outer boundary (|c|+R = {})",
                rc + self.radius
            )));
        }
        let inner = grid.inner_edge();
        if inner > 0.0 && rc - self.radius - clearance <= inner {
            return Err(Error::TestFunction(format!(
                "support reaches the inner boundary (|c|-R = {})",
                rc - self.radius
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn value(&self, z: Complex64) -> Complex64 {
        let t2 = (z - self.center).norm_sqr() / (self.radius * self.radius);
        if t2 >= 1.0 {
            C_ZERO
        } else {
            self.amplitude * (1.0 / (t2 - 1.0)).exp()
        }
    }

    /// (φ_z, φ_zbar) in closed form.
    #[inline]
    pub fn wirtinger(&self, z: Complex64) -> (Complex64, Complex64) {
        let d = z - self.center;
        let r2 = self.radius * self.radius;
        let t2 = d.norm_sqr() / r2;
        if t2 >= 1.0 {
            return (C_ZERO, C_ZERO);
        }
        let u = t2 - 1.0;
        let phi = self.amplitude * (1.0 / u).exp();
        let chain = -phi / (u * u) / r2;
        (chain * d.conj(), chain * d)
    }
}

/// Seeded panel of bumps with randomized centers/radii, supports strictly
/// interior to the grid domain.
pub fn bump_panel(grid: &DiskGrid, count: usize, seed: u64) -> Vec<TestFunction> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let inner = grid.inner_edge();
    let width = 1.0 - inner;
    let clearance = 2.0 * grid.dr;
    let mut panel = Vec::with_capacity(count);
    while panel.len() < count {
        // Radii large enough that the bump spans several cells in every
        // direction; the stationarity quadrature error scales like
        // (cell/R)², so tiny bumps only measure their own resolution.
        let radius = width * rng.gen_range(0.18..0.28);
        let lo = inner + radius + clearance;
        let hi = 1.0 - radius - clearance;
        if lo >= hi {
            panic!("grid too coarse for an interior bump panel");
        }
        let rc = rng.gen_range(lo..hi);
        let th = rng.gen_range(0.0..std::f64::consts::TAU);
        let tf = TestFunction::new(Complex64::from_polar(rc, th), radius);
        if tf.check_support(grid, clearance * 0.5).is_ok() {
            panel.push(tf);
        }
    }
    panel
}

/// One inner-variation test: LHS − RHS of the stationarity identity
/// 2p ∫ K^p conj(μ)/(1+|μ|²) φ_zbar = ∫ K^p φ_z, with the reporting scale
/// ∫ K^p (|φ_z| + |φ_zbar|).
#[derive(Clone, Debug)]
pub struct ResidualReport {
    pub residual: Complex64,
    pub normalizer: f64,
}

impl ResidualReport {
    pub fn relative(&self) -> f64 {
        self.residual.norm() / self.normalizer.max(1e-300)
    }
}

impl Serialize for ResidualReport {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("ResidualReport", 3)?;
        st.serialize_field("residual_re", &self.residual.re)?;
        st.serialize_field("residual_im", &self.residual.im)?;
        st.serialize_field("normalizer", &self.normalizer)?;
        st.end()
    }
}

pub fn inner_variation_residual(
    m: &MappingField,
    grid: &DiskGrid,
    p: f64,
    phi: &TestFunction,
) -> Result<ResidualReport> {
    phi.check_support(grid, 0.0)?;
    let b = distortion(m, grid)?;
    let n = grid.len();
    let mut terms = vec![C_ZERO; n];
    let mut norm_terms = vec![0.0; n];
    for jr in 0..grid.n_r {
        for k in 0..grid.n_theta {
            let i = grid.idx(jr, k);
            let z = grid.node(jr, k);
            let (pz, pzb) = phi.wirtinger(z);
            if pz == C_ZERO && pzb == C_ZERO {
                continue;
            }
            let w = grid.weights[i];
            let kp = b.k[i].powf(p);
            let mu = b.mu.values[i];
            let lhs = 2.0 * p * kp * mu.conj() / (1.0 + mu.norm_sqr()) * pzb;
            let rhs = kp * pz;
            terms[i] = w * (lhs - rhs);
            norm_terms[i] = w * kp * (pz.norm() + pzb.norm());
        }
    }
    Ok(ResidualReport {
        residual: pairwise_sum(&terms),
        normalizer: pairwise_sum_f64(&norm_terms),
    })
}

/// Inverse-side stationarity: ∫ K^{p−1}(w,h) h_w conj(h_wbar) φ_wbar dw,
/// scaled by ∫ |K^{p−1} h_w conj(h_wbar)| (|φ_w| + |φ_wbar|).
pub fn inverse_residual(
    h: &MappingField,
    grid: &DiskGrid,
    p: f64,
    phi: &TestFunction,
) -> Result<ResidualReport> {
    phi.check_support(grid, 0.0)?;
    let b = distortion(h, grid)?;
    let n = grid.len();
    let mut terms = vec![C_ZERO; n];
    let mut norm_terms = vec![0.0; n];
    for jr in 0..grid.n_r {
        for k in 0..grid.n_theta {
            let i = grid.idx(jr, k);
            let z = grid.node(jr, k);
            let (pz, pzb) = phi.wirtinger(z);
            if pz == C_ZERO && pzb == C_ZERO {
                continue;
            }
            let w = grid.weights[i];
            let kernel = b.k[i].powf(p - 1.0) * h.fz.values[i] * h.fzbar.values[i].conj();
            terms[i] = w * kernel * pzb;
            norm_terms[i] = w * kernel.norm() * (pz.norm() + pzb.norm());
        }
    }
    Ok(ResidualReport {
        residual: pairwise_sum(&terms),
        normalizer: pairwise_sum_f64(&norm_terms),
    })
}

/// Max relative residual over a bump panel.
pub fn panel_max_relative(
    m: &MappingField,
    grid: &DiskGrid,
    p: f64,
    panel: &[TestFunction],
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for phi in panel {
        worst = worst.max(inner_variation_residual(m, grid, p, phi)?.relative());
    }
    Ok(worst)
}

/// Energy summary of a mapping (value, dual value, Hölder sides).
#[derive(Clone, Debug)]
pub struct EnergyReport {
    pub p: f64,
    pub energy_p: f64,
    pub energy_star_p: f64,
    pub holder_lhs: f64,
    pub holder_rhs: f64,
}

impl EnergyReport {
    pub fn compute(m: &MappingField, grid: &DiskGrid, p: f64) -> Result<Self> {
        let energy = energy_p(m, grid, p)?;
        let (star, _) = energy_star(m, grid, p)?;
        let (lhs, rhs) = holder_bound(m, grid, p)?;
        Ok(EnergyReport { p, energy_p: energy, energy_star_p: star, holder_lhs: lhs, holder_rhs: rhs })
    }
}

impl Serialize for EnergyReport {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("EnergyReport", 5)?;
        st.serialize_field("p", &self.p)?;
        st.serialize_field("energy_p", &self.energy_p)?;
        st.serialize_field("energy_star_p", &self.energy_star_p)?;
        st.serialize_field("holder_lhs", &self.holder_lhs)?;
        st.serialize_field("holder_rhs", &self.holder_rhs)?;
        st.end()
    }
}

/// Energy and gradient in one pass; shared by the optimizer.
pub(crate) struct EnergyEval {
    pub value: f64,
    pub grad: Vec<Complex64>,
    pub min_j: f64,
}

pub(crate) fn eval_with_gradient(
    values: &[Complex64],
    grid: &DiskGrid,
    p: f64,
    pinned: &[bool],
) -> Result<EnergyEval> {
    if values.len() != grid.len() {
        return Err(Error::GridMismatch);
    }
    let geo = CellGeometry::new(grid);
    let half_wedge = 0.5 * grid.dr * grid.dtheta;
    let mut min_j = f64::INFINITY;
    let mut terms = vec![0.0; (grid.n_r - 1) * grid.n_theta * 2];
    let mut out = vec![C_ZERO; grid.len()];
    let mut bad = 0usize;
    let mut idx = 0usize;
    for j in 0..grid.n_r - 1 {
        for k in 0..grid.n_theta {
            let kp = if k + 1 == grid.n_theta { 0 } else { k + 1 };
            let i00 = grid.idx(j, k);
            let i01 = grid.idx(j, kp);
            let i10 = grid.idx(j + 1, k);
            let i11 = grid.idx(j + 1, kp);
            let e_mid = grid.e_itheta[k] * Complex64::from_polar(1.0, 0.5 * grid.dtheta);
            let az = 0.5 * e_mid.conj();
            let ab = 0.5 * e_mid;
            for &eta in &GAUSS_ETA {
                let (fz, fzb, r_g) = cell_derivs(values, grid, &geo, j, k, eta);
                let nn = fz.norm_sqr();
                let bb = fzb.norm_sqr();
                let d = nn - bb;
                min_j = min_j.min(d);
                if d <= EPS_J {
                    bad += 1;
                    idx += 1;
                    continue;
                }
                let k_val = (nn + bb) / d;
                let w_g = r_g * half_wedge;
                let k_pm1 = pow_p(k_val, p - 1.0);
                terms[idx] = w_g * k_pm1 * k_val;
                idx += 1;
                let scale = w_g * p * k_pm1 / (d * d);
                let gz = scale * (-2.0 * bb) * fz.conj();
                let gzb = scale * (2.0 * nn) * fzb.conj();
                // Sensitivities to the face differences.
                let w_r = az * gz + ab * gzb;
                let w_t = (crate::grid::I / r_g) * (-az * gz + ab * gzb);
                let cr = geo.cr;
                let ct = geo.ct;
                out[i00] += -cr * w_r - (1.0 - eta) * ct * w_t;
                out[i01] += -cr * w_r + (1.0 - eta) * ct * w_t;
                out[i10] += cr * w_r - eta * ct * w_t;
                out[i11] += cr * w_r + eta * ct * w_t;
            }
        }
    }
    if bad > 0 {
        return Err(Error::DegenerateJacobian(bad));
    }
    let grad = out
        .into_iter()
        .enumerate()
        .map(|(i, g)| if pinned[i] { C_ZERO } else { 2.0 * g.conj() })
        .collect();
    Ok(EnergyEval { value: pairwise_sum_f64(&terms), grad, min_j })
}

/// Energy and min J only (line-search probe).
pub(crate) fn eval_energy_min_j(values: &[Complex64], grid: &DiskGrid, p: f64) -> Result<(f64, f64)> {
    discrete_energy(values, grid, p)
}
