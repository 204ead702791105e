//! Cauchy and Beurling transforms on a padded periodic box, and the
//! Neumann-series (Picard) solver for the Beltrami equation.
//!
//! The Beurling transform is the exact Fourier multiplier conj(ξ)/ξ with
//! m(0) = 0, so it is a discrete L² isometry on mean-zero data. Raw periodic
//! inversion of ∂_zbar carries a background term mean(g)·zbar that ruins
//! free-space accuracy, so both transforms split the input against a Gaussian
//! reference density carrying the total mass: the multiplier acts on the
//! zero-mean remainder and the reference's transform is added in closed form.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fields::MappingField;
use crate::grid::{pairwise_sum_f64, ComplexField, DiskGrid, C_ZERO, I};

/// Multiplier arrays and FFT plans for a square box [-S, S)² with n lattice
/// points per side.
pub struct TransformPlan {
    pub n: usize,
    pub box_half: f64,
    pub h: f64,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    /// 2/(i κ) with κ = k_x + i k_y, zero at κ = 0.
    mult_cauchy: Vec<Complex64>,
    /// conj(κ)/κ, zero at κ = 0.
    mult_beurling: Vec<Complex64>,
    /// Gaussian reference density (unit mass), sampled.
    rho_ref: Vec<f64>,
    sigma: f64,
}

impl TransformPlan {
    pub fn new(n: usize, box_half: f64) -> Result<Self> {
        if !n.is_power_of_two() || n < 16 {
            return Err(Error::Plan(format!("n_fft = {n} must be a power of two >= 16")));
        }
        if !(box_half > 0.0) {
            return Err(Error::Plan("box_half must be positive".into()));
        }
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(n);
        let ifft = planner.plan_fft_inverse(n);
        let side = 2.0 * box_half;
        let h = side / n as f64;
        let dk = std::f64::consts::TAU / side;
        let freq = |m: usize| -> f64 {
            let m = m as i64;
            let n = n as i64;
            let signed = if m <= n / 2 { m } else { m - n };
            signed as f64 * dk
        };
        let mut mult_cauchy = vec![C_ZERO; n * n];
        let mut mult_beurling = vec![C_ZERO; n * n];
        for iy in 0..n {
            let ky = freq(iy);
            for ix in 0..n {
                let kx = freq(ix);
                let kappa = Complex64::new(kx, ky);
                let idx = iy * n + ix;
                if kappa != C_ZERO {
                    mult_cauchy[idx] = 2.0 / (I * kappa);
                    mult_beurling[idx] = kappa.conj() / kappa;
                }
            }
        }
        let sigma = box_half / 6.0;
        let mut rho_ref = vec![0.0; n * n];
        let norm = 1.0 / (std::f64::consts::TAU * sigma * sigma);
        for iy in 0..n {
            let y = -box_half + iy as f64 * h;
            for ix in 0..n {
                let x = -box_half + ix as f64 * h;
                rho_ref[iy * n + ix] = norm * (-(x * x + y * y) / (2.0 * sigma * sigma)).exp();
            }
        }
        Ok(TransformPlan {
            n,
            box_half,
            h,
            fft,
            ifft,
            mult_cauchy,
            mult_beurling,
            rho_ref,
            sigma,
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Lattice point at (ix, iy), row-major in iy.
    #[inline]
    pub fn point(&self, ix: usize, iy: usize) -> Complex64 {
        Complex64::new(
            -self.box_half + ix as f64 * self.h,
            -self.box_half + iy as f64 * self.h,
        )
    }

    pub fn points(&self) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.len());
        for iy in 0..self.n {
            for ix in 0..self.n {
                out.push(self.point(ix, iy));
            }
        }
        out
    }

    /// Cell measure h².
    #[inline]
    pub fn cell(&self) -> f64 {
        self.h * self.h
    }

    fn fft2(&self, data: &mut [Complex64], inverse: bool) {
        let n = self.n;
        let plan = if inverse { &self.ifft } else { &self.fft };
        let mut scratch = vec![C_ZERO; plan.get_inplace_scratch_len()];
        // Rows.
        for row in data.chunks_exact_mut(n) {
            plan.process_with_scratch(row, &mut scratch);
        }
        // Columns via transpose.
        let mut t = vec![C_ZERO; n * n];
        for iy in 0..n {
            for ix in 0..n {
                t[ix * n + iy] = data[iy * n + ix];
            }
        }
        for row in t.chunks_exact_mut(n) {
            plan.process_with_scratch(row, &mut scratch);
        }
        for iy in 0..n {
            for ix in 0..n {
                data[iy * n + ix] = t[ix * n + iy];
            }
        }
        if inverse {
            let scale = 1.0 / (n * n) as f64;
            for v in data.iter_mut() {
                *v *= scale;
            }
        }
    }

    /// Reject inputs whose mass leaks beyond the half box (aliasing guard).
    fn check_support(&self, g: &[Complex64]) -> Result<()> {
        let half = 0.5 * self.box_half;
        let mut outside = 0.0;
        let mut total = 0.0;
        for iy in 0..self.n {
            for ix in 0..self.n {
                let z = self.point(ix, iy);
                let m = g[iy * self.n + ix].norm();
                total += m;
                if z.re.abs() > half || z.im.abs() > half {
                    outside += m;
                }
            }
        }
        if outside > 1e-10 * total.max(1e-300) {
            return Err(Error::SupportLeakage(outside * self.cell()));
        }
        Ok(())
    }

    fn total_mass(&self, g: &[Complex64]) -> Complex64 {
        let mut acc = C_ZERO;
        for v in g {
            acc += *v;
        }
        acc * self.cell()
    }

    /// Closed-form Cauchy transform of the Gaussian reference:
    /// (1 − e^{−r²/2σ²}) / (π z).
    fn cauchy_ref(&self, z: Complex64) -> Complex64 {
        let r2 = z.norm_sqr();
        if r2 < 1e-30 {
            return C_ZERO;
        }
        let m = 1.0 - (-r2 / (2.0 * self.sigma * self.sigma)).exp();
        m / (std::f64::consts::PI * z)
    }

    /// Closed-form Beurling transform of the Gaussian reference:
    /// (1/π)[ e^{−t} z̄/(2σ² z) − (1 − e^{−t})/z² ],  t = r²/2σ².
    fn beurling_ref(&self, z: Complex64) -> Complex64 {
        let r2 = z.norm_sqr();
        let s2 = self.sigma * self.sigma;
        if r2 < 1e-20 * s2 {
            return C_ZERO;
        }
        let t = r2 / (2.0 * s2);
        let et = (-t).exp();
        (et * z.conj() / (2.0 * s2 * z) - (1.0 - et) / (z * z)) / std::f64::consts::PI
    }

    fn apply(&self, g: &[Complex64], which: Which) -> Result<Vec<Complex64>> {
        if g.len() != self.len() {
            return Err(Error::Plan("field length does not match plan".into()));
        }
        self.check_support(g)?;
        let mass = self.total_mass(g);
        let mut data: Vec<Complex64> = g
            .iter()
            .zip(&self.rho_ref)
            .map(|(v, r)| v - mass * *r)
            .collect();
        self.fft2(&mut data, false);
        let mult = match which {
            Which::Cauchy => &self.mult_cauchy,
            Which::Beurling => &self.mult_beurling,
        };
        for (v, m) in data.iter_mut().zip(mult) {
            *v *= *m;
        }
        self.fft2(&mut data, true);
        if mass != C_ZERO {
            for iy in 0..self.n {
                for ix in 0..self.n {
                    let z = self.point(ix, iy);
                    let r = match which {
                        Which::Cauchy => self.cauchy_ref(z),
                        Which::Beurling => self.beurling_ref(z),
                    };
                    data[iy * self.n + ix] += mass * r;
                }
            }
        }
        Ok(data)
    }
}

enum Which {
    Cauchy,
    Beurling,
}

/// F = ∂_zbar⁻¹ g on the box lattice, decaying at the box scale (the
/// periodic part has zero frequency removed; the mass is carried by the
/// closed-form reference term ~ mass/(π z)).
pub fn cauchy_transform(g: &[Complex64], plan: &TransformPlan) -> Result<Vec<Complex64>> {
    plan.apply(g, Which::Cauchy)
}

/// S g = ∂_z ∂_zbar⁻¹ g: the conj(ξ)/ξ multiplier with the same mass split.
pub fn beurling_transform(g: &[Complex64], plan: &TransformPlan) -> Result<Vec<Complex64>> {
    plan.apply(g, Which::Beurling)
}

/// μ truncation of the well-distorted approximation scheme: unchanged where
/// |μ| <= 1 − 1/m, rescaled to modulus exactly 1 − 1/m (same argument)
/// elsewhere.
pub fn truncate_mu(mu: &ComplexField, m: u32) -> ComplexField {
    assert!(m >= 2, "truncation index must be >= 2");
    let cap = 1.0 - 1.0 / m as f64;
    let values: Vec<Complex64> = mu
        .values
        .iter()
        .map(|&v| {
            let a = v.norm();
            if a <= cap {
                v
            } else {
                v * (cap / a)
            }
        })
        .collect();
    ComplexField::from_raw(values, mu.tag())
}

/// A Beltrami coefficient sampled on the plan lattice.
pub struct BeltramiProblem {
    pub mu: Vec<Complex64>,
    pub k_inf: f64,
    /// Working integrability exponent; informational (the discrete solver is
    /// L²-only).
    pub q: f64,
}

impl BeltramiProblem {
    pub fn from_fn(plan: &TransformPlan, f: impl Fn(Complex64) -> Complex64) -> Result<Self> {
        let mut mu = Vec::with_capacity(plan.len());
        for iy in 0..plan.n {
            for ix in 0..plan.n {
                mu.push(f(plan.point(ix, iy)));
            }
        }
        Self::from_lattice(mu)
    }

    /// Resample a disk-grid field onto the lattice (bilinear in (r,θ)),
    /// extended by zero outside the grid's domain.
    pub fn from_disk_field(field: &ComplexField, grid: &DiskGrid, plan: &TransformPlan) -> Result<Self> {
        field.compatible(grid)?;
        let r_lo = grid.r[0];
        let r_hi = grid.r[grid.n_r - 1];
        let mut mu = Vec::with_capacity(plan.len());
        for iy in 0..plan.n {
            for ix in 0..plan.n {
                let z = plan.point(ix, iy);
                let r = z.norm();
                if r >= grid.inner_edge() && r <= 1.0 {
                    let rc = r.clamp(r_lo, r_hi);
                    let zc = if r > 0.0 { z * (rc / r) } else { z };
                    mu.push(crate::grid::interp(field, grid, zc));
                } else {
                    mu.push(C_ZERO);
                }
            }
        }
        Self::from_lattice(mu)
    }

    pub fn from_lattice(mu: Vec<Complex64>) -> Result<Self> {
        let k_inf = mu.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if k_inf >= 1.0 {
            return Err(Error::InvalidDilatation(k_inf));
        }
        Ok(BeltramiProblem { mu, k_inf, q: 2.0 })
    }
}

/// Progress of the Neumann-series iteration g ← μ(1 + S g).
#[derive(Clone, Debug)]
pub struct NeumannState {
    pub iter: usize,
    pub update_norm: f64,
    /// ||Δg_k|| / ||Δg_{k−1}||, one entry per iteration after the first.
    pub ratios: Vec<f64>,
}

/// Principal solution f = z + C g of f_zbar = μ f_z.
pub struct PrincipalSolution {
    pub f: Vec<Complex64>,
    pub fz: Vec<Complex64>,
    pub fzbar: Vec<Complex64>,
    pub residual: f64,
    pub state: NeumannState,
}

impl PrincipalSolution {
    pub fn value_at(&self, plan: &TransformPlan, z: Complex64) -> Complex64 {
        // Bilinear on the lattice.
        let n = plan.n;
        let x = ((z.re + plan.box_half) / plan.h).clamp(0.0, (n - 2) as f64);
        let y = ((z.im + plan.box_half) / plan.h).clamp(0.0, (n - 2) as f64);
        let ix = x.floor() as usize;
        let iy = y.floor() as usize;
        let sx = x - ix as f64;
        let sy = y - iy as f64;
        let f = |a: usize, b: usize| self.f[b * n + a];
        (1.0 - sy) * ((1.0 - sx) * f(ix, iy) + sx * f(ix + 1, iy))
            + sy * ((1.0 - sx) * f(ix, iy + 1) + sx * f(ix + 1, iy + 1))
    }

    /// Sample onto a polar grid as a MappingField.
    pub fn sample_on_grid(&self, plan: &TransformPlan, grid: &DiskGrid) -> Result<MappingField> {
        let field = ComplexField::from_fn(grid, |z| self.value_at(plan, z));
        MappingField::from_field(field, grid)
    }
}

/// Solve the Beltrami equation by Picard iteration of g = μ(1 + S g); the
/// measured update ratios approach k_inf (the discrete S has L² norm 1).
pub fn solve_beltrami(
    prob: &BeltramiProblem,
    plan: &TransformPlan,
    tol: f64,
    max_iter: usize,
) -> Result<PrincipalSolution> {
    if prob.mu.len() != plan.len() {
        return Err(Error::Plan("mu length does not match plan".into()));
    }
    let n2 = plan.len();
    let mut g = vec![C_ZERO; n2];
    let mut update_prev = f64::NAN;
    let mut ratios = Vec::new();
    let mut iter = 0usize;
    let mut update = f64::INFINITY;
    let l2 = |v: &[Complex64]| -> f64 {
        let sq: Vec<f64> = v.iter().map(|x| x.norm_sqr()).collect();
        (pairwise_sum_f64(&sq) * plan.cell()).sqrt()
    };
    while iter < max_iter {
        let sg = beurling_transform(&g, plan)?;
        let next: Vec<Complex64> =
            prob.mu.iter().zip(&sg).map(|(m, s)| m * (1.0 + s)).collect();
        let diff: Vec<Complex64> = next.iter().zip(&g).map(|(a, b)| a - b).collect();
        update = l2(&diff);
        if update_prev.is_finite() && update_prev > 0.0 {
            ratios.push(update / update_prev);
        }
        update_prev = update;
        g = next;
        iter += 1;
        let scale = l2(&g).max(1e-300);
        if update <= tol * scale {
            break;
        }
    }
    let g_norm = l2(&g).max(1e-300);
    if update > tol * g_norm {
        return Err(Error::BeltramiDiverged { iters: iter, update });
    }
    // f = z + C g; derivatives from the spectral representation:
    // f_zbar = g, f_z = 1 + S g.
    let cg = cauchy_transform(&g, plan)?;
    let sg = beurling_transform(&g, plan)?;
    let mut f = Vec::with_capacity(n2);
    for iy in 0..plan.n {
        for ix in 0..plan.n {
            f.push(plan.point(ix, iy) + cg[iy * plan.n + ix]);
        }
    }
    let fz: Vec<Complex64> = sg.iter().map(|s| 1.0 + s).collect();
    let fzbar = g;
    let res_terms: Vec<f64> = fzbar
        .iter()
        .zip(&fz)
        .zip(&prob.mu)
        .map(|((b, a), m)| (b - m * a).norm_sqr())
        .collect();
    let fz_terms: Vec<f64> = fz.iter().map(|a| a.norm_sqr()).collect();
    let residual =
        (pairwise_sum_f64(&res_terms) / pairwise_sum_f64(&fz_terms).max(1e-300)).sqrt();
    Ok(PrincipalSolution {
        f,
        fz,
        fzbar,
        residual,
        state: NeumannState { iter, update_norm: update, ratios },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan(n: usize) -> TransformPlan {
        TransformPlan::new(n, 4.0).unwrap()
    }

    fn chi_disk(plan: &TransformPlan) -> Vec<Complex64> {
        let mut g = Vec::with_capacity(plan.len());
        for iy in 0..plan.n {
            for ix in 0..plan.n {
                let z = plan.point(ix, iy);
                g.push(if z.norm() < 1.0 { Complex64::new(1.0, 0.0) } else { C_ZERO });
            }
        }
        g
    }

    #[test]
    fn plan_validation() {
        assert!(TransformPlan::new(100, 4.0).is_err());
        assert!(TransformPlan::new(8, 4.0).is_err());
        assert!(TransformPlan::new(64, 4.0).is_ok());
    }

    #[test]
    fn support_leakage_rejected() {
        let p = plan(64);
        let mut g = vec![C_ZERO; p.len()];
        // Mass at a far corner of the box.
        g[0] = Complex64::new(1.0, 0.0);
        assert!(matches!(cauchy_transform(&g, &p), Err(Error::SupportLeakage(_))));
    }

    #[test]
    fn cauchy_of_zero_and_linearity() {
        let p = plan(64);
        let zero = vec![C_ZERO; p.len()];
        let out = cauchy_transform(&zero, &p).unwrap();
        assert!(out.iter().all(|v| v.norm() < 1e-14));

        let g1: Vec<Complex64> = (0..p.len())
            .map(|i| {
                let z = p.point(i % p.n, i / p.n);
                if z.norm() < 1.2 { Complex64::new(0.3, 0.1) * (-z.norm_sqr()).exp() } else { C_ZERO }
            })
            .collect();
        let g2: Vec<Complex64> = (0..p.len())
            .map(|i| {
                let z = p.point(i % p.n, i / p.n);
                if z.norm() < 1.2 { Complex64::new(-0.2, 0.5) * (-2.0 * z.norm_sqr()).exp() } else { C_ZERO }
            })
            .collect();
        let a = Complex64::new(1.7, -0.3);
        let b = Complex64::new(0.4, 0.9);
        let combo: Vec<Complex64> =
            g1.iter().zip(&g2).map(|(x, y)| a * x + b * y).collect();
        let t1 = cauchy_transform(&g1, &p).unwrap();
        let t2 = cauchy_transform(&g2, &p).unwrap();
        let tc = cauchy_transform(&combo, &p).unwrap();
        for i in 0..p.len() {
            let expect = a * t1[i] + b * t2[i];
            assert!((tc[i] - expect).norm() < 1e-10 * (1.0 + expect.norm()));
        }
    }

    /// Average a lattice field and a reference function over the same lattice
    /// ball. The discrete transforms of jump data carry a zero-mean Nyquist
    /// oscillation near the jump; averaged values are the stable observable.
    fn ball_average(
        p: &TransformPlan,
        field: &[Complex64],
        closed: &dyn Fn(Complex64) -> Complex64,
        z0: Complex64,
        rad: f64,
    ) -> (Complex64, Complex64) {
        let mut acc = C_ZERO;
        let mut acc_ref = C_ZERO;
        let mut cnt = 0.0;
        let lo_x = ((z0.re - rad + p.box_half) / p.h).floor() as usize;
        let hi_x = ((z0.re + rad + p.box_half) / p.h).ceil() as usize;
        let lo_y = ((z0.im - rad + p.box_half) / p.h).floor() as usize;
        let hi_y = ((z0.im + rad + p.box_half) / p.h).ceil() as usize;
        for iy in lo_y..=hi_y {
            for ix in lo_x..=hi_x {
                let z = p.point(ix, iy);
                if (z - z0).norm() <= rad {
                    acc += field[iy * p.n + ix];
                    acc_ref += closed(z);
                    cnt += 1.0;
                }
            }
        }
        (acc / cnt, acc_ref / cnt)
    }

    #[test]
    fn cauchy_of_disk_indicator_matches_closed_form() {
        // C chi_D = zbar inside, 1/z outside, up to an additive constant.
        let p = TransformPlan::new(1024, 4.0).unwrap();
        let g = chi_disk(&p);
        let out = cauchy_transform(&g, &p).unwrap();
        let closed = |z: Complex64| -> Complex64 {
            if z.norm() <= 1.0 { z.conj() } else { 1.0 / z }
        };
        // Fix the gauge constant from an interior ball.
        let (got0, ref0) = ball_average(&p, &out, &closed, C_ZERO, 0.15);
        let shift = got0 - ref0;
        for z in [
            Complex64::new(0.5, 0.2),
            Complex64::new(-0.6, 0.1),
            Complex64::new(0.0, -0.45),
            Complex64::new(1.4, 0.3),
            Complex64::new(-1.2, -0.9),
            Complex64::new(1.8, 0.0),
        ] {
            let (got, expect) = ball_average(&p, &out, &closed, z, 0.12);
            assert!(
                (got - shift - expect).norm() < 1e-3,
                "at {z}: {got} vs {expect} (diff {:.2e})",
                (got - shift - expect).norm()
            );
        }
    }

    #[test]
    fn beurling_of_disk_indicator_matches_closed_form() {
        // S chi_D = 0 inside, -1/z² outside.
        let p = TransformPlan::new(1024, 4.0).unwrap();
        let g = chi_disk(&p);
        let out = beurling_transform(&g, &p).unwrap();
        let closed = |z: Complex64| -> Complex64 {
            if z.norm() <= 1.0 { C_ZERO } else { -1.0 / (z * z) }
        };
        for z in [
            Complex64::new(0.4, 0.25),
            Complex64::new(-0.5, -0.3),
            Complex64::new(0.0, 0.3),
            Complex64::new(1.5, 0.4),
            Complex64::new(-1.3, 1.0),
            Complex64::new(1.9, -0.2),
        ] {
            let (got, expect) = ball_average(&p, &out, &closed, z, 0.12);
            assert!(
                (got - expect).norm() < 1e-3,
                "at {z}: {got} vs {expect} (diff {:.2e})",
                (got - expect).norm()
            );
        }
    }

    #[test]
    fn beurling_turns_dzbar_into_dz_on_smooth_bumps() {
        // h smooth with compact support: S(∂_zbar h) = ∂_z h.
        let p = TransformPlan::new(512, 4.0).unwrap();
        // h = exp(1/(t²−1)) bump in |z| < 1.5 times z².
        let bump = |z: Complex64| -> (Complex64, Complex64, Complex64) {
            let rr = z.norm_sqr() / (1.5 * 1.5);
            if rr >= 1.0 {
                return (C_ZERO, C_ZERO, C_ZERO);
            }
            let u = rr - 1.0;
            let b = (1.0 / u).exp();
            let chain = -b / (u * u) / (1.5 * 1.5);
            let h = b * z * z;
            let hz = chain * z.conj() * z * z + b * 2.0 * z;
            let hzb = chain * z * z * z;
            (h, hz, hzb)
        };
        let mut g = Vec::with_capacity(p.len());
        let mut expect = Vec::with_capacity(p.len());
        for iy in 0..p.n {
            for ix in 0..p.n {
                let z = p.point(ix, iy);
                let (_, hz, hzb) = bump(z);
                g.push(hzb);
                expect.push(hz);
            }
        }
        let got = beurling_transform(&g, &p).unwrap();
        let scale = expect.iter().map(|v| v.norm()).fold(0.0, f64::max);
        for i in 0..p.len() {
            assert!(
                (got[i] - expect[i]).norm() < 2e-5 * scale,
                "i={i}: {} vs {}",
                got[i],
                expect[i]
            );
        }
    }

    #[test]
    fn beurling_isometry_on_mean_zero_data() {
        let p = plan(128);
        // Deterministic pseudo-random field supported in the half box.
        let mut g: Vec<Complex64> = (0..p.len())
            .map(|i| {
                let z = p.point(i % p.n, i / p.n);
                if z.re.abs() < 1.9 && z.im.abs() < 1.9 {
                    let a = ((i * 2654435761) % 1000) as f64 / 1000.0 - 0.5;
                    let b = ((i * 40503) % 977) as f64 / 977.0 - 0.5;
                    Complex64::new(a, b)
                } else {
                    C_ZERO
                }
            })
            .collect();
        let mean = g.iter().sum::<Complex64>() / p.len() as f64;
        // Subtract the mean on the support window only, keeping support.
        let support: Vec<usize> = (0..p.len())
            .filter(|&i| {
                let z = p.point(i % p.n, i / p.n);
                z.re.abs() < 1.9 && z.im.abs() < 1.9
            })
            .collect();
        let correction = mean * p.len() as f64 / support.len() as f64;
        for &i in &support {
            g[i] -= correction;
        }
        let out = beurling_transform(&g, &p).unwrap();
        let n_in: f64 = g.iter().map(|v| v.norm_sqr()).sum();
        let n_out: f64 = out.iter().map(|v| v.norm_sqr()).sum();
        assert!(
            ((n_out / n_in) - 1.0).abs() < 1e-12,
            "isometry defect {:.3e}",
            (n_out / n_in) - 1.0
        );
    }

    #[test]
    fn truncate_mu_clamps_and_is_monotone() {
        let g = DiskGrid::build(crate::grid::DomainKind::Disk, 8, 16).unwrap();
        let mu = ComplexField::from_fn(&g, |z| Complex64::from_polar(0.99, z.arg()));
        let t2 = truncate_mu(&mu, 2);
        for v in &t2.values {
            assert!((v.norm() - 0.5).abs() < 1e-14);
        }
        let half = ComplexField::from_fn(&g, |_| Complex64::new(0.5, 0.0));
        let t4 = truncate_mu(&half, 4);
        for (a, b) in t4.values.iter().zip(&half.values) {
            assert_eq!(a, b, "values below the cap must be untouched");
        }
        // sup distance to mu nonincreasing in m.
        let mut prev = f64::INFINITY;
        for m in 2..12 {
            let tm = truncate_mu(&mu, m);
            let d = tm
                .values
                .iter()
                .zip(&mu.values)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            assert!(d <= prev + 1e-15);
            prev = d;
        }
    }

    #[test]
    fn beltrami_constant_mu_reconstructs_affine() {
        let p = TransformPlan::new(512, 4.0).unwrap();
        let c = 0.3;
        let prob = BeltramiProblem::from_fn(&p, |z| {
            if z.norm() < 1.0 { Complex64::new(c, 0.0) } else { C_ZERO }
        })
        .unwrap();
        let sol = solve_beltrami(&prob, &p, 1e-12, 200).unwrap();
        assert!(sol.residual < 1e-10, "residual {}", sol.residual);
        // Contraction ratio ~ k_inf.
        let max_ratio = sol.state.ratios.iter().copied().fold(0.0, f64::max);
        assert!(max_ratio <= c * 1.05, "ratio {max_ratio}");
        // f = z + c zbar inside, z + c/z outside, away from the circle.
        for z in [
            Complex64::new(0.3, 0.2),
            Complex64::new(-0.5, 0.4),
            Complex64::new(0.1, -0.7),
            Complex64::new(1.5, 0.3),
            Complex64::new(-1.4, -0.8),
        ] {
            let expect = if z.norm() <= 1.0 { z + c * z.conj() } else { z + c / z };
            let got = sol.value_at(&p, z);
            assert!(
                (got - expect).norm() < 1e-3,
                "at {z}: {got} vs {expect} ({:.2e})",
                (got - expect).norm()
            );
        }
    }

    #[test]
    fn beltrami_mu_zero_gives_identity() {
        let p = plan(64);
        let prob = BeltramiProblem::from_fn(&p, |_| C_ZERO).unwrap();
        let sol = solve_beltrami(&prob, &p, 1e-13, 50).unwrap();
        for iy in (0..p.n).step_by(7) {
            for ix in (0..p.n).step_by(7) {
                let z = p.point(ix, iy);
                assert!((sol.f[iy * p.n + ix] - z).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn beltrami_rejects_k_inf_one() {
        let p = plan(64);
        assert!(BeltramiProblem::from_fn(&p, |z| {
            if z.norm() < 0.5 { Complex64::new(1.0, 0.0) } else { C_ZERO }
        })
        .is_err());
    }

    #[test]
    fn beltrami_recovers_radial_oracle_mu() {
        // mu of the sampled radial map, annulus-supported and extended by
        // zero; the output's Beltrami coefficient must match the input where
        // |mu| is not tiny (conformal invariance of mu under normalization).
        use crate::radial::{radial_mu, Branch};
        let p = TransformPlan::new(512, 4.0).unwrap();
        let prob = BeltramiProblem::from_fn(&p, |z| {
            let r = z.norm();
            if r >= 0.5 && r <= 1.0 {
                radial_mu(2.0, 15.0 / 8.0, Branch::AboveOne, z).unwrap()
            } else {
                C_ZERO
            }
        })
        .unwrap();
        let sol = solve_beltrami(&prob, &p, 1e-12, 400).unwrap();
        assert!(sol.residual < 1e-10);
        let mut num = 0.0;
        let mut den = 0.0;
        for iy in 0..p.n {
            for ix in 0..p.n {
                let z = p.point(ix, iy);
                let r = z.norm();
                if r > 0.55 && r < 0.95 {
                    let i = iy * p.n + ix;
                    let mu_out = sol.fzbar[i] / sol.fz[i];
                    num += (mu_out - prob.mu[i]).norm_sqr();
                    den += prob.mu[i].norm_sqr();
                }
            }
        }
        let rel = (num / den).sqrt();
        assert!(rel < 1e-3, "mu reconstruction rel error {rel}");
    }
}
