//! Beltrami coefficient, Jacobian, and distortion fields of a mapping.

use num_complex::Complex64;

use crate::error::Result;
use crate::grid::{self, ComplexField, DiskGrid, C_ZERO};

/// Degenerate-node conventions: μ is set to 0 where |f_z| falls below
/// EPS_DIV times the field scale, and K is set to 1 where |J| <= EPS_J.
pub const EPS_DIV: f64 = 1e-14;
pub const EPS_J: f64 = 1e-12;

/// Circle boundary data stored spectrally: coefficients c_n, n in [-N, N],
/// of f0 on the unit circle.
#[derive(Clone, Debug)]
pub struct BoundaryTrace {
    /// coeffs[i] is c_{i-order}, so the layout is n = -order ..= order.
    coeffs: Vec<Complex64>,
    order: usize,
}

impl BoundaryTrace {
    pub fn from_coeffs(coeffs: Vec<(i64, Complex64)>) -> Self {
        let order = coeffs.iter().map(|(n, _)| n.unsigned_abs() as usize).max().unwrap_or(0);
        let mut c = vec![C_ZERO; 2 * order + 1];
        for (n, v) in coeffs {
            c[(n + order as i64) as usize] += v;
        }
        BoundaryTrace { coeffs: c, order }
    }

    /// The identity trace e^{iθ}.
    pub fn identity() -> Self {
        Self::from_coeffs(vec![(1, grid::C_ONE)])
    }

    /// Rotation by angle c: e^{i(θ+c)}.
    pub fn rotation(c: f64) -> Self {
        Self::from_coeffs(vec![(1, Complex64::from_polar(1.0, c))])
    }

    /// e^{i(θ + eps sin θ)}, sampled and transformed.
    pub fn sinusoidal(eps: f64) -> Self {
        Self::from_samples_fn(|t| Complex64::from_polar(1.0, t + eps * t.sin()), 512)
    }

    /// Build from uniform samples of a circle map via the DFT, truncating at
    /// order m/2 - 1.
    pub fn from_samples_fn(f: impl Fn(f64) -> Complex64, m: usize) -> Self {
        let samples: Vec<Complex64> =
            (0..m).map(|k| f(std::f64::consts::TAU * k as f64 / m as f64)).collect();
        Self::from_samples(&samples)
    }

    pub fn from_samples(samples: &[Complex64]) -> Self {
        let m = samples.len();
        let order = m / 2 - 1;
        let mut coeffs = vec![C_ZERO; 2 * order + 1];
        for (i, c) in coeffs.iter_mut().enumerate() {
            let n = i as i64 - order as i64;
            let mut acc = C_ZERO;
            for (k, s) in samples.iter().enumerate() {
                let phase = -std::f64::consts::TAU * n as f64 * k as f64 / m as f64;
                acc += s * Complex64::from_polar(1.0, phase);
            }
            *c = acc / m as f64;
        }
        BoundaryTrace { coeffs, order }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn coeff(&self, n: i64) -> Complex64 {
        if n.unsigned_abs() as usize > self.order {
            C_ZERO
        } else {
            self.coeffs[(n + self.order as i64) as usize]
        }
    }

    pub fn eval(&self, theta: f64) -> Complex64 {
        let mut acc = C_ZERO;
        for (i, c) in self.coeffs.iter().enumerate() {
            let n = i as i64 - self.order as i64;
            acc += c * Complex64::from_polar(1.0, n as f64 * theta);
        }
        acc
    }

    /// d/dθ of the trace.
    pub fn deriv_theta(&self, theta: f64) -> Complex64 {
        let mut acc = C_ZERO;
        for (i, c) in self.coeffs.iter().enumerate() {
            let n = (i as i64 - self.order as i64) as f64;
            acc += c * Complex64::new(0.0, n) * Complex64::from_polar(1.0, n * theta);
        }
        acc
    }

    /// Winding number of the resampled trace around the origin.
    pub fn winding_number(&self) -> i64 {
        let m = 1024;
        let mut total = 0.0;
        let mut prev = self.eval(0.0);
        for k in 1..=m {
            let cur = self.eval(std::f64::consts::TAU * k as f64 / m as f64);
            total += (cur / prev).arg();
            prev = cur;
        }
        (total / std::f64::consts::TAU).round() as i64
    }

    /// Max deviation of |f0| from 1 over a resampling; small when the trace
    /// represents a circle homeomorphism.
    pub fn unimodularity_defect(&self) -> f64 {
        let m = 1024;
        (0..m)
            .map(|k| (self.eval(std::f64::consts::TAU * k as f64 / m as f64).norm() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Complex-valued samples of a map together with cached Wirtinger derivatives.
#[derive(Clone, Debug)]
pub struct MappingField {
    pub f: ComplexField,
    pub fz: ComplexField,
    pub fzbar: ComplexField,
    pub boundary: Option<BoundaryTrace>,
}

impl MappingField {
    pub fn from_field(f: ComplexField, grid: &DiskGrid) -> Result<Self> {
        let (fz, fzbar) = grid::wirtinger(&f, grid)?;
        Ok(MappingField { f, fz, fzbar, boundary: None })
    }

    pub fn from_fn(grid: &DiskGrid, f: impl Fn(Complex64) -> Complex64) -> Self {
        Self::from_field(ComplexField::from_fn(grid, f), grid).expect("grid-consistent by construction")
    }

    pub fn with_boundary(mut self, trace: BoundaryTrace) -> Self {
        self.boundary = Some(trace);
        self
    }

    pub fn identity(grid: &DiskGrid) -> Self {
        Self::from_fn(grid, |z| z).with_boundary(BoundaryTrace::identity())
    }
}

/// Per-node μ, K, J derived from a mapping.
#[derive(Clone, Debug)]
pub struct DistortionBundle {
    pub mu: ComplexField,
    pub k: Vec<f64>,
    pub j: Vec<f64>,
    /// Nodes where |f_z| fell below the division floor (μ set to 0 there).
    pub degenerate_nodes: usize,
    /// Nodes with J < -EPS_J: the candidate map folds over.
    pub orientation_violations: usize,
}

impl DistortionBundle {
    pub fn min_j(&self) -> f64 {
        self.j.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Pointwise J = |f_z|^2 - |f_zbar|^2.
pub fn jacobian(m: &MappingField, grid: &DiskGrid) -> Result<Vec<f64>> {
    m.fz.compatible(grid)?;
    Ok(m
        .fz
        .values
        .iter()
        .zip(&m.fzbar.values)
        .map(|(a, b)| a.norm_sqr() - b.norm_sqr())
        .collect())
}

/// Pointwise μ = f_zbar / f_z, with the degenerate convention μ = 0 where
/// |f_z| is below the division floor. Returns the field and the count of
/// degenerate nodes.
pub fn beltrami(m: &MappingField, grid: &DiskGrid) -> Result<(ComplexField, usize)> {
    m.fz.compatible(grid)?;
    let scale = m.fz.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let floor = EPS_DIV * scale.max(1e-300);
    let mut degenerate = 0usize;
    let values: Vec<Complex64> = m
        .fz
        .values
        .iter()
        .zip(&m.fzbar.values)
        .map(|(a, b)| {
            if a.norm() <= floor {
                degenerate += 1;
                C_ZERO
            } else {
                b / a
            }
        })
        .collect();
    Ok((ComplexField::from_values(grid, values)?, degenerate))
}

/// Full distortion bundle: K by Eq-style algebra where J > 0, K = 1 at
/// degenerate nodes, orientation violations counted.
pub fn distortion(m: &MappingField, grid: &DiskGrid) -> Result<DistortionBundle> {
    let (mu, degenerate_nodes) = beltrami(m, grid)?;
    let j = jacobian(m, grid)?;
    let mut orientation_violations = 0usize;
    let k: Vec<f64> = m
        .fz
        .values
        .iter()
        .zip(&m.fzbar.values)
        .zip(&j)
        .map(|((a, b), &jj)| {
            if jj > EPS_J {
                (a.norm_sqr() + b.norm_sqr()) / jj
            } else {
                if jj < -EPS_J {
                    orientation_violations += 1;
                }
                1.0
            }
        })
        .collect();
    Ok(DistortionBundle { mu, k, j, degenerate_nodes, orientation_violations })
}

pub mod csv {
    use super::*;
    use std::io::Write;

    /// Bundle dump: (r, theta, re_mu, im_mu, K, J).
    pub fn write_bundle(
        path: &std::path::Path,
        bundle: &DistortionBundle,
        grid: &DiskGrid,
    ) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "r,theta,re_mu,im_mu,K,J")?;
        for j in 0..grid.n_r {
            for k in 0..grid.n_theta {
                let i = grid.idx(j, k);
                let mu = bundle.mu.values[i];
                writeln!(
                    out,
                    "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                    grid.r[j], grid.theta[k], mu.re, mu.im, bundle.k[i], bundle.j[i]
                )?;
            }
        }
        Ok(())
    }
}
