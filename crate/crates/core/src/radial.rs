//! Closed-form radial extremal maps f(z) = F(ρ)e^{iθ}: the exact oracle used
//! by the optimizer, Hopf, and residual tests.
//!
//! The radial stretch satisfies, with a(ρ) = ρ F'/F,
//!
//! ```text
//! ρ² (a²−1)(a²+1)^{p−1} = α a^{p+1}
//! ```
//!
//! and log F has the closed antiderivative
//!
//! ```text
//! log F = −(p−1)a/2 + (p−1)·atan(a) + ½·log|(a+1)/(a−1)| + C₁,
//! ```
//!
//! with C₁ fixed by F(1) = 1. Positivity of ρ², (a²+1)^{p−1}, a^{p+1} forces
//! the branch pairing a<1 ⇔ α<0 and a>1 ⇔ α>0.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::MappingField;
use crate::grid::DiskGrid;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    BelowOne,
    AboveOne,
}

fn eq_lhs(p: f64, rho: f64, a: f64) -> f64 {
    rho * rho * (a * a - 1.0) * (a * a + 1.0).powf(p - 1.0)
}

fn eq_rhs(alpha: f64, p: f64, a: f64) -> f64 {
    alpha * a.powf(p + 1.0)
}

fn eq_residual(p: f64, alpha: f64, rho: f64, a: f64) -> f64 {
    eq_lhs(p, rho, a) - eq_rhs(alpha, p, a)
}

fn eq_residual_deriv(p: f64, alpha: f64, rho: f64, a: f64) -> f64 {
    let a2 = a * a;
    let lhs = rho
        * rho
        * (2.0 * a * (a2 + 1.0).powf(p - 1.0)
            + (a2 - 1.0) * (p - 1.0) * (a2 + 1.0).powf(p - 2.0) * 2.0 * a);
    lhs - alpha * (p + 1.0) * a.powf(p)
}

/// The unique root a of the radial stretch equation on the requested branch.
pub fn solve_radial_a(p: f64, alpha: f64, rho: f64, branch: Branch) -> Result<f64> {
    if !(p > 1.0) {
        return Err(Error::Radial(format!("p = {p} must be > 1")));
    }
    if rho <= 0.0 {
        return Err(Error::Radial(format!("rho = {rho} must be positive")));
    }
    match branch {
        Branch::AboveOne if alpha <= 0.0 => {
            return Err(Error::Radial(format!(
                "branch a>1 requires alpha > 0 (got {alpha}); no root on this branch"
            )));
        }
        Branch::BelowOne if alpha >= 0.0 => {
            return Err(Error::Radial(format!(
                "branch a<1 requires alpha < 0 (got {alpha}); no root on this branch"
            )));
        }
        _ => {}
    }
    let (mut lo, mut hi) = match branch {
        Branch::AboveOne => {
            let lo = 1.0 + 1e-12;
            let mut hi = 2.0;
            let mut guard = 0;
            while eq_residual(p, alpha, rho, hi) <= 0.0 {
                hi *= 2.0;
                guard += 1;
                if guard > 400 {
                    return Err(Error::Radial("failed to bracket root above 1".into()));
                }
            }
            (lo, hi)
        }
        Branch::BelowOne => (1e-12, 1.0 - 1e-12),
    };
    let flo = eq_residual(p, alpha, rho, lo);
    let fhi = eq_residual(p, alpha, rho, hi);
    if flo.signum() == fhi.signum() {
        return Err(Error::Radial(format!(
            "no sign change on branch bracket [{lo}, {hi}] (alpha={alpha}, rho={rho})"
        )));
    }
    // Bisect to a decent interval, then polish with Newton.
    let mut a = 0.5 * (lo + hi);
    for _ in 0..80 {
        let fm = eq_residual(p, alpha, rho, a);
        if fm == 0.0 {
            break;
        }
        if fm.signum() == flo.signum() {
            lo = a;
        } else {
            hi = a;
        }
        a = 0.5 * (lo + hi);
        if hi - lo < 1e-9 * a.abs().max(1.0) {
            break;
        }
    }
    for _ in 0..60 {
        let f = eq_residual(p, alpha, rho, a);
        let d = eq_residual_deriv(p, alpha, rho, a);
        if d == 0.0 {
            break;
        }
        let step = f / d;
        let next = a - step;
        a = if next > lo && next < hi { next } else { 0.5 * (lo + hi) };
        if step.abs() < 1e-16 * a.abs() {
            break;
        }
    }
    Ok(a)
}

/// The closed-form antiderivative of a/ρ dρ expressed in a, without the
/// integration constant.
fn log_f_kernel(p: f64, a: f64) -> f64 {
    -0.5 * (p - 1.0) * a + (p - 1.0) * a.atan() + 0.5 * ((a + 1.0) / (a - 1.0)).abs().ln()
}

/// Closed-form radial solution data on a sample set.
#[derive(Clone, Debug)]
pub struct RadialProfile {
    pub p: f64,
    pub alpha: f64,
    /// Angular multiplicity; the closed form is derived for m = 1 only.
    pub m: u32,
    pub branch: Branch,
    pub rho_samples: Vec<f64>,
    pub a_samples: Vec<f64>,
    pub f_samples: Vec<f64>,
    pub c1: f64,
}

#[derive(Serialize)]
pub struct RadialProfileHeader {
    pub p: f64,
    pub alpha: f64,
    pub m: u32,
    pub c1: f64,
}

impl RadialProfile {
    pub fn header(&self) -> RadialProfileHeader {
        RadialProfileHeader { p: self.p, alpha: self.alpha, m: self.m, c1: self.c1 }
    }

    pub fn eq_residual(&self, i: usize) -> f64 {
        eq_residual(self.p, self.alpha, self.rho_samples[i], self.a_samples[i])
    }

    /// K along the profile: (a²+1)/(2a).
    pub fn k_at(&self, i: usize) -> f64 {
        let a = self.a_samples[i];
        (a * a + 1.0) / (2.0 * a)
    }

    /// Coefficient c of the inverse map's Ahlfors–Hopf differential c/w².
    ///
    /// With Φ = K^{p−1} h_w conj(h_wbar) and the ½-factor polar Wirtinger
    /// convention, the α of the stretch equation picks up −1/2^{p+1}.
    pub fn hopf_constant(&self) -> f64 {
        -self.alpha / 2f64.powf(self.p + 1.0)
    }

    /// CSV (rho, a, F, eq_residual); the (p, alpha, m, C1) header serializes
    /// to a JSON sidecar.
    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        use std::io::Write;
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "rho,a,F,eq_residual")?;
        for i in 0..self.rho_samples.len() {
            writeln!(
                out,
                "{:.17e},{:.17e},{:.17e},{:.17e}",
                self.rho_samples[i],
                self.a_samples[i],
                self.f_samples[i],
                self.eq_residual(i)
            )?;
        }
        Ok(())
    }
}

/// a and F at a single radius, F normalized so F(1) = 1.
pub fn profile_point(p: f64, alpha: f64, branch: Branch, rho: f64) -> Result<(f64, f64)> {
    let a1 = solve_radial_a(p, alpha, 1.0, branch)?;
    let c1 = -log_f_kernel(p, a1);
    let a = solve_radial_a(p, alpha, rho, branch)?;
    Ok((a, (log_f_kernel(p, a) + c1).exp()))
}

/// Tabulate the closed-form solution on an ascending ρ sample set.
pub fn radial_profile(p: f64, alpha: f64, branch: Branch, rho_grid: &[f64]) -> Result<RadialProfile> {
    if rho_grid.is_empty() {
        return Err(Error::Radial("empty sample set".into()));
    }
    for w in rho_grid.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::Radial("rho samples must be strictly ascending".into()));
        }
    }
    if *rho_grid.last().unwrap() > 1.0 + 1e-12 {
        return Err(Error::Radial("rho samples must lie in (0, 1]".into()));
    }
    let a1 = solve_radial_a(p, alpha, 1.0, branch)?;
    let c1 = -log_f_kernel(p, a1);
    let mut a_samples = Vec::with_capacity(rho_grid.len());
    let mut f_samples = Vec::with_capacity(rho_grid.len());
    for &rho in rho_grid {
        let a = solve_radial_a(p, alpha, rho, branch)?;
        if a == 1.0 {
            return Err(Error::Radial(format!("branch crosses a = 1 at rho = {rho}")));
        }
        a_samples.push(a);
        f_samples.push((log_f_kernel(p, a) + c1).exp());
    }
    Ok(RadialProfile {
        p,
        alpha,
        m: 1,
        branch,
        rho_samples: rho_grid.to_vec(),
        a_samples,
        f_samples,
        c1,
    })
}

/// Sample f = F(ρ)e^{iθ} on a grid. Each ring's F is evaluated from the
/// closed form (fresh root solve), never interpolated.
pub fn radial_map(p: f64, alpha: f64, branch: Branch, grid: &DiskGrid) -> Result<MappingField> {
    let profile = radial_profile(p, alpha, branch, &grid.r)?;
    let mut values = Vec::with_capacity(grid.len());
    for j in 0..grid.n_r {
        let fr = profile.f_samples[j];
        for k in 0..grid.n_theta {
            values.push(grid.e_itheta[k] * fr);
        }
    }
    let field = crate::grid::ComplexField::from_values(grid, values)?;
    MappingField::from_field(field, grid)
}

/// Sample the inverse map h(w) = H(r)e^{iθ} (H = F⁻¹) on a w-side grid.
pub fn inverse_radial_map(p: f64, alpha: f64, branch: Branch, w_grid: &DiskGrid) -> Result<MappingField> {
    let a1 = solve_radial_a(p, alpha, 1.0, branch)?;
    let c1 = -log_f_kernel(p, a1);
    let f_of = |rho: f64| -> Result<f64> {
        let a = solve_radial_a(p, alpha, rho, branch)?;
        Ok((log_f_kernel(p, a) + c1).exp())
    };
    let mut h_of_r = Vec::with_capacity(w_grid.n_r);
    for &r in &w_grid.r {
        // F is strictly increasing; bisect F(rho) = r.
        let mut lo = 1e-9;
        let mut hi = 1.0;
        let flo = f_of(lo)? - r;
        if flo > 0.0 {
            return Err(Error::Radial(format!(
                "target radius {r} below the image annulus (F(0+) = {})",
                f_of(lo)?
            )));
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f_of(mid)? - r <= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-15 {
                break;
            }
        }
        h_of_r.push(0.5 * (lo + hi));
    }
    let mut values = Vec::with_capacity(w_grid.len());
    for j in 0..w_grid.n_r {
        for k in 0..w_grid.n_theta {
            values.push(w_grid.e_itheta[k] * h_of_r[j]);
        }
    }
    let field = crate::grid::ComplexField::from_values(w_grid, values)?;
    MappingField::from_field(field, w_grid)
}

/// Initial guess for the oracle-boundary minimization: the harmonic radial
/// interpolant A r + B/r fitted so the grid's pinned rings carry exactly the
/// closed-form F there (trace collocation at the discrete boundary), with
/// the interior genuinely harmonic rather than extremal.
pub fn oracle_boundary_init(p: f64, alpha: f64, branch: Branch, grid: &DiskGrid) -> Result<MappingField> {
    let r0 = grid.r[0];
    let r1 = grid.r[grid.n_r - 1];
    let (_, f0) = profile_point(p, alpha, branch, r0)?;
    let (_, f1) = profile_point(p, alpha, branch, r1)?;
    let det = r1 / r0 - r0 / r1;
    let a_coef = (f1 / r0 - f0 / r1) / det;
    let b_coef = (f0 * r1 - f1 * r0) / det;
    let field = crate::grid::ComplexField::from_fn(grid, |z| {
        let (r, t) = z.to_polar();
        Complex64::from_polar(a_coef * r + b_coef / r, t)
    });
    MappingField::from_field(field, grid)
}

/// Exact μ of the sampled radial map: e^{2iθ}(a−1)/(a+1).
pub fn radial_mu(p: f64, alpha: f64, branch: Branch, z: Complex64) -> Result<Complex64> {
    let (r, t) = z.to_polar();
    let a = solve_radial_a(p, alpha, r, branch)?;
    Ok(Complex64::from_polar((a - 1.0) / (a + 1.0), 2.0 * t))
}
