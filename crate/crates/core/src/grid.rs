//! Cell-centered polar discretization of the disk and annulus.
//!
//! Nodes sit at cell centers `z = r_j e^{i θ_k}` with midpoint quadrature
//! weights `w = r Δr Δθ`, so no node touches the origin or the boundary
//! circles. The θ direction is periodic; radial stencils switch to one-sided
//! second-order closures on the innermost/outermost rings.

use num_complex::Complex64;

use crate::error::{Error, Result};

pub const C_ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
pub const C_ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };
pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DomainKind {
    Disk,
    Annulus { rho_inner: f64 },
}

impl DomainKind {
    pub fn inner_edge(&self) -> f64 {
        match self {
            DomainKind::Disk => 0.0,
            DomainKind::Annulus { rho_inner } => *rho_inner,
        }
    }

    pub fn area(&self) -> f64 {
        let rho = self.inner_edge();
        std::f64::consts::PI * (1.0 - rho * rho)
    }
}

/// Structural identity of a grid; fields carry it so mismatched grids are
/// rejected instead of silently mixed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridTag {
    kind_bits: u64,
    n_r: usize,
    n_theta: usize,
}

#[derive(Clone, Debug)]
pub struct DiskGrid {
    pub kind: DomainKind,
    pub n_r: usize,
    pub n_theta: usize,
    /// Ring radii (cell centers), ascending, length `n_r`.
    pub r: Vec<f64>,
    /// Angles (cell centers), length `n_theta`.
    pub theta: Vec<f64>,
    /// Unit phases e^{iθ_k}, cached.
    pub e_itheta: Vec<Complex64>,
    pub dr: f64,
    pub dtheta: f64,
    /// Midpoint quadrature weights per node, length `n_r * n_theta`.
    pub weights: Vec<f64>,
    tag: GridTag,
}

impl DiskGrid {
    /// `build_grid`: cell-centered polar tensor grid with midpoint weights.
    pub fn build(kind: DomainKind, n_r: usize, n_theta: usize) -> Result<Self> {
        if n_r < 4 {
            return Err(Error::Grid(format!("n_r = {n_r} too small (need >= 4)")));
        }
        if n_theta < 8 {
            return Err(Error::Grid(format!("n_theta = {n_theta} too small (need >= 8)")));
        }
        if n_theta % 2 != 0 {
            return Err(Error::Grid(format!("n_theta = {n_theta} must be even")));
        }
        if let DomainKind::Annulus { rho_inner } = kind {
            if !(rho_inner > 0.0 && rho_inner < 1.0) || !rho_inner.is_finite() {
                return Err(Error::Grid(format!(
                    "annulus inner radius {rho_inner} not in (0,1)"
                )));
            }
        }
        let rho = kind.inner_edge();
        let dr = (1.0 - rho) / n_r as f64;
        let dtheta = std::f64::consts::TAU / n_theta as f64;
        let r: Vec<f64> = (0..n_r).map(|j| rho + (j as f64 + 0.5) * dr).collect();
        let theta: Vec<f64> = (0..n_theta).map(|k| (k as f64 + 0.5) * dtheta).collect();
        let e_itheta: Vec<Complex64> = theta.iter().map(|&t| Complex64::from_polar(1.0, t)).collect();
        let mut weights = Vec::with_capacity(n_r * n_theta);
        for &rj in &r {
            let w = rj * dr * dtheta;
            weights.extend(std::iter::repeat(w).take(n_theta));
        }
        let kind_bits = match kind {
            DomainKind::Disk => 0,
            DomainKind::Annulus { rho_inner } => rho_inner.to_bits(),
        };
        let tag = GridTag { kind_bits, n_r, n_theta };
        Ok(DiskGrid { kind, n_r, n_theta, r, theta, e_itheta, dr, dtheta, weights, tag })
    }

    pub fn len(&self) -> usize {
        self.n_r * self.n_theta
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn tag(&self) -> GridTag {
        self.tag
    }

    /// Row-major index: r outer, θ inner.
    #[inline]
    pub fn idx(&self, j: usize, k: usize) -> usize {
        j * self.n_theta + k
    }

    #[inline]
    pub fn node(&self, j: usize, k: usize) -> Complex64 {
        self.e_itheta[k] * self.r[j]
    }

    pub fn nodes(&self) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.len());
        for j in 0..self.n_r {
            for k in 0..self.n_theta {
                out.push(self.node(j, k));
            }
        }
        out
    }

    pub fn area(&self) -> f64 {
        self.kind.area()
    }

    /// Inner boundary circle radius (0 for the disk).
    pub fn inner_edge(&self) -> f64 {
        self.kind.inner_edge()
    }

    /// Node mask for the rings pinned by the optimizer: the outermost ring on
    /// the disk, the innermost and outermost rings on an annulus.
    pub fn pinned_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.len()];
        let outer = self.n_r - 1;
        for k in 0..self.n_theta {
            mask[self.idx(outer, k)] = true;
            if matches!(self.kind, DomainKind::Annulus { .. }) {
                mask[self.idx(0, k)] = true;
            }
        }
        mask
    }
}

#[derive(Clone, Debug)]
pub struct ComplexField {
    pub values: Vec<Complex64>,
    tag: GridTag,
}

impl ComplexField {
    pub fn zeros(grid: &DiskGrid) -> Self {
        ComplexField { values: vec![C_ZERO; grid.len()], tag: grid.tag() }
    }

    pub fn constant(grid: &DiskGrid, c: Complex64) -> Self {
        ComplexField { values: vec![c; grid.len()], tag: grid.tag() }
    }

    pub fn from_values(grid: &DiskGrid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Grid(format!(
                "field length {} does not match grid size {}",
                values.len(),
                grid.len()
            )));
        }
        Ok(ComplexField { values, tag: grid.tag() })
    }

    pub(crate) fn from_raw(values: Vec<Complex64>, tag: GridTag) -> Self {
        ComplexField { values, tag }
    }

    pub fn from_fn(grid: &DiskGrid, f: impl Fn(Complex64) -> Complex64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.n_r {
            for k in 0..grid.n_theta {
                values.push(f(grid.node(j, k)));
            }
        }
        ComplexField { values, tag: grid.tag() }
    }

    pub fn compatible(&self, grid: &DiskGrid) -> Result<()> {
        if self.tag != grid.tag() {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    pub fn tag(&self) -> GridTag {
        self.tag
    }

    #[inline]
    pub fn get(&self, grid: &DiskGrid, j: usize, k: usize) -> Complex64 {
        self.values[grid.idx(j, k)]
    }
}

/// Pairwise (cascade) summation: deterministic and accurate independent of
/// the iteration strategy used to fill the buffer.
pub fn pairwise_sum(xs: &[Complex64]) -> Complex64 {
    if xs.len() <= 32 {
        let mut acc = C_ZERO;
        for x in xs {
            acc += *x;
        }
        return acc;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn pairwise_sum_f64(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        let mut acc = 0.0;
        for x in xs {
            acc += *x;
        }
        return acc;
    }
    let mid = xs.len() / 2;
    pairwise_sum_f64(&xs[..mid]) + pairwise_sum_f64(&xs[mid..])
}

/// Quadrature of a complex field: Σ values·weights.
pub fn integrate(field: &ComplexField, grid: &DiskGrid) -> Result<Complex64> {
    field.compatible(grid)?;
    let terms: Vec<Complex64> = field
        .values
        .iter()
        .zip(&grid.weights)
        .map(|(v, w)| v * *w)
        .collect();
    Ok(pairwise_sum(&terms))
}

/// Polar-coordinate Wirtinger derivatives of a nodal field:
/// `f_z = e^{-iθ}(f_r - (i/r) f_θ)/2`, `f_zbar = e^{iθ}(f_r + (i/r) f_θ)/2`.
///
/// θ uses the centered difference normalized by `2 sin Δθ`, which resolves the
/// first circular harmonics exactly (affine maps a + b z + c z̄ differentiate
/// to round-off) and stays second order on everything else. r uses centered
/// differences with one-sided second-order closures at the first/last ring.
pub fn wirtinger(field: &ComplexField, grid: &DiskGrid) -> Result<(ComplexField, ComplexField)> {
    field.compatible(grid)?;
    let n_r = grid.n_r;
    let n_t = grid.n_theta;
    let v = &field.values;
    let inv_2dr = 1.0 / (2.0 * grid.dr);
    let inv_2sin = 1.0 / (2.0 * grid.dtheta.sin());
    let mut fz = vec![C_ZERO; grid.len()];
    let mut fzb = vec![C_ZERO; grid.len()];
    for j in 0..n_r {
        let r = grid.r[j];
        for k in 0..n_t {
            let i = grid.idx(j, k);
            let fr = if j == 0 {
                (-3.0 * v[i] + 4.0 * v[i + n_t] - v[i + 2 * n_t]) * inv_2dr
            } else if j == n_r - 1 {
                (3.0 * v[i] - 4.0 * v[i - n_t] + v[i - 2 * n_t]) * inv_2dr
            } else {
                (v[i + n_t] - v[i - n_t]) * inv_2dr
            };
            let kp = if k + 1 == n_t { 0 } else { k + 1 };
            let km = if k == 0 { n_t - 1 } else { k - 1 };
            let ft = (v[grid.idx(j, kp)] - v[grid.idx(j, km)]) * inv_2sin;
            let tangential = I * (ft / r);
            let e = grid.e_itheta[k];
            fz[i] = 0.5 * e.conj() * (fr - tangential);
            fzb[i] = 0.5 * e * (fr + tangential);
        }
    }
    Ok((
        ComplexField { values: fz, tag: grid.tag() },
        ComplexField { values: fzb, tag: grid.tag() },
    ))
}

/// Transpose of the `wirtinger` stencil pipeline.
///
/// Given per-node Wirtinger sensitivities `gz[i] = ∂E/∂(f_z)_i` and
/// `gzb[i] = ∂E/∂(f_zbar)_i`, returns `out[j] = Σ_i gz[i]·∂(f_z)_i/∂f_j +
/// gzb[i]·∂(f_zbar)_i/∂f_j` (plain transpose, no conjugation). Sequential
/// scatter in node order so results are bit-reproducible.
pub fn wirtinger_adjoint(gz: &[Complex64], gzb: &[Complex64], grid: &DiskGrid) -> Vec<Complex64> {
    let n_r = grid.n_r;
    let n_t = grid.n_theta;
    let inv_2dr = 1.0 / (2.0 * grid.dr);
    let inv_2sin = 1.0 / (2.0 * grid.dtheta.sin());
    let mut out = vec![C_ZERO; grid.len()];
    for j in 0..n_r {
        let r = grid.r[j];
        for k in 0..n_t {
            let i = grid.idx(j, k);
            let e = grid.e_itheta[k];
            // c_r: weight multiplying f_r in fz_i; c_t: weight multiplying f_θ.
            let a_z = 0.5 * e.conj();
            let a_zb = 0.5 * e;
            let w_r = a_z * gz[i] + a_zb * gzb[i];
            let w_t = (I / r) * (-a_z * gz[i] + a_zb * gzb[i]);
            // Scatter the radial stencil.
            if j == 0 {
                out[i] += -3.0 * inv_2dr * w_r;
                out[i + n_t] += 4.0 * inv_2dr * w_r;
                out[i + 2 * n_t] += -inv_2dr * w_r;
            } else if j == n_r - 1 {
                out[i] += 3.0 * inv_2dr * w_r;
                out[i - n_t] += -4.0 * inv_2dr * w_r;
                out[i - 2 * n_t] += inv_2dr * w_r;
            } else {
                out[i + n_t] += inv_2dr * w_r;
                out[i - n_t] += -inv_2dr * w_r;
            }
            // Scatter the angular stencil.
            let kp = if k + 1 == n_t { 0 } else { k + 1 };
            let km = if k == 0 { n_t - 1 } else { k - 1 };
            out[grid.idx(j, kp)] += inv_2sin * w_t;
            out[grid.idx(j, km)] += -inv_2sin * w_t;
        }
    }
    out
}

/// Value on the innermost ring at angle t, θ-linear.
fn ring_value(field: &ComplexField, grid: &DiskGrid, j: usize, t: f64) -> Complex64 {
    let tc = t / grid.dtheta - 0.5;
    let tcw = tc.rem_euclid(grid.n_theta as f64);
    let k = (tcw.floor() as usize) % grid.n_theta;
    let st = tcw - tcw.floor();
    let kp = (k + 1) % grid.n_theta;
    (1.0 - st) * field.values[grid.idx(j, k)] + st * field.values[grid.idx(j, kp)]
}

/// Bilinear interpolation of a nodal field at an arbitrary point of the
/// domain (periodic in θ, clamped at the outer ring). On the disk, points
/// inside the innermost ring are interpolated linearly along the diameter
/// through the origin (exact on affine maps), since no node sits at r < r₀.
pub fn interp(field: &ComplexField, grid: &DiskGrid, z: Complex64) -> Complex64 {
    let r = z.norm();
    let mut t = z.arg();
    if t < 0.0 {
        t += std::f64::consts::TAU;
    }
    let r0 = grid.r[0];
    if r < r0 && matches!(grid.kind, DomainKind::Disk) {
        let near = ring_value(field, grid, 0, t);
        let far = ring_value(field, grid, 0, t + std::f64::consts::PI);
        return ((r0 + r) * near + (r0 - r) * far) / (2.0 * r0);
    }
    let rc = (r - r0) / grid.dr;
    let jf = rc.clamp(0.0, (grid.n_r - 1) as f64);
    let j = (jf.floor() as usize).min(grid.n_r - 2);
    let sr = (jf - j as f64).clamp(0.0, 1.0);
    let tc = t / grid.dtheta - 0.5;
    let tcw = tc.rem_euclid(grid.n_theta as f64);
    let k = (tcw.floor() as usize) % grid.n_theta;
    let st = tcw - tcw.floor();
    let kp = (k + 1) % grid.n_theta;
    let f00 = field.values[grid.idx(j, k)];
    let f01 = field.values[grid.idx(j, kp)];
    let f10 = field.values[grid.idx(j + 1, k)];
    let f11 = field.values[grid.idx(j + 1, kp)];
    (1.0 - sr) * ((1.0 - st) * f00 + st * f01) + sr * ((1.0 - st) * f10 + st * f11)
}

pub mod csv {
    use super::*;
    use std::io::Write;

    /// Fields serialize as (r, theta, re, im), row-major with r outer.
    pub fn write_field(path: &std::path::Path, field: &ComplexField, grid: &DiskGrid) -> Result<()> {
        field.compatible(grid)?;
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "r,theta,re,im")?;
        for j in 0..grid.n_r {
            for k in 0..grid.n_theta {
                let v = field.values[grid.idx(j, k)];
                writeln!(out, "{:.17e},{:.17e},{:.17e},{:.17e}", grid.r[j], grid.theta[k], v.re, v.im)?;
            }
        }
        Ok(())
    }
}
