//! Ahlfors–Hopf differential and holomorphy diagnostics, the profile
//! functions a_p / b_p with their ellipticity constants, and the potential
//! reconstruction behind the smoothness argument.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fields::{distortion, MappingField};
use crate::grid::{pairwise_sum_f64, ComplexField, DiskGrid, DomainKind, C_ZERO};
use crate::singular::{beurling_transform, cauchy_transform, TransformPlan};

/// Rings excised from residual norms at each radial end: the one-sided
/// closures and the 1/z²-type growth of expected differentials dominate
/// stencil error there.
const EXCISED_RINGS: usize = 2;

fn interior_ring_range(grid: &DiskGrid) -> std::ops::Range<usize> {
    EXCISED_RINGS..grid.n_r - EXCISED_RINGS
}

/// Relative L¹ anti-holomorphy of a field: ||∂_zbar u||_L¹ / ||u||_L¹ over
/// the interior rings (unit length scale).
pub fn holomorphy_residual(field: &ComplexField, grid: &DiskGrid) -> Result<f64> {
    let (_, dzbar) = crate::grid::wirtinger(field, grid)?;
    let mut num = Vec::new();
    let mut den = Vec::new();
    for j in interior_ring_range(grid) {
        for k in 0..grid.n_theta {
            let i = grid.idx(j, k);
            num.push(grid.weights[i] * dzbar.values[i].norm());
            den.push(grid.weights[i] * field.values[i].norm());
        }
    }
    Ok(pairwise_sum_f64(&num) / pairwise_sum_f64(&den).max(1e-300))
}

/// Φ = K^{p−1} h_w conj(h_wbar) sampled on the map's own grid.
#[derive(Clone, Debug)]
pub struct HopfField {
    pub phi: ComplexField,
    pub holo_residual: f64,
    pub p: f64,
    /// Nodes excluded by the degenerate-Jacobian convention.
    pub degenerate_nodes: usize,
}

pub fn hopf_differential(h: &MappingField, grid: &DiskGrid, p: f64) -> Result<HopfField> {
    let b = distortion(h, grid)?;
    let mut values = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let kernel = b.k[i].powf(p - 1.0) * h.fz.values[i] * h.fzbar.values[i].conj();
        values.push(kernel);
    }
    let phi = ComplexField::from_values(grid, values)?;
    let holo_residual = holomorphy_residual(&phi, grid)?;
    Ok(HopfField { phi, holo_residual, p, degenerate_nodes: b.degenerate_nodes })
}

/// The Hopf differential of the (pseudo-)inverse of `m`, evaluated through
/// `m` itself: values Φ(w) at the image points w = f(z), stored on the
/// z-grid. Uses the inverse-function identities h_w = conj(f_z)/J,
/// h_wbar = −f_zbar/J, giving Φ∘f = −K^{p−1} conj(f_z f_zbar)/J².
#[derive(Clone, Debug)]
pub struct PullbackHopf {
    /// Φ(f(z)) at the z-grid nodes.
    pub values: ComplexField,
    /// w-side relative L¹ anti-holomorphy, via the chain-rule solve for
    /// Φ_wbar and J-weighted (image-side) measure, interior rings only.
    pub holo_residual: f64,
    /// ||Φ||_{L¹(image)} = Σ |Φ(f(z))| J w.
    pub l1_image: f64,
    pub p: f64,
}

pub fn hopf_pullback(m: &MappingField, grid: &DiskGrid, p: f64) -> Result<PullbackHopf> {
    let b = distortion(m, grid)?;
    let mut values = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let jj = b.j[i];
        if jj.abs() < 1e-300 {
            values.push(C_ZERO);
            continue;
        }
        let kernel =
            -b.k[i].powf(p - 1.0) * (m.fz.values[i] * m.fzbar.values[i]).conj() / (jj * jj);
        values.push(kernel);
    }
    let phi_of_f = ComplexField::from_values(grid, values)?;
    // w-side derivative of Φ via the chain rule: solve the 2x2 system
    // [∂_z(Φ∘f); ∂_zbar(Φ∘f)] = [[f_z, conj(f_zbar)], [f_zbar, conj(f_z)]] [Φ_w; Φ_wbar].
    let (dz, dzb) = crate::grid::wirtinger(&phi_of_f, grid)?;
    let mut num = Vec::new();
    let mut den = Vec::new();
    for j in interior_ring_range(grid) {
        for k in 0..grid.n_theta {
            let i = grid.idx(j, k);
            let jj = b.j[i];
            if jj <= 0.0 {
                continue;
            }
            let phi_wbar = (m.fz.values[i] * dzb.values[i] - m.fzbar.values[i] * dz.values[i]) / jj;
            let w_meas = grid.weights[i] * jj;
            num.push(w_meas * phi_wbar.norm());
            den.push(w_meas * phi_of_f.values[i].norm());
        }
    }
    let holo_residual = pairwise_sum_f64(&num) / pairwise_sum_f64(&den).max(1e-300);
    let l1_terms: Vec<f64> = (0..grid.len())
        .map(|i| grid.weights[i] * b.j[i].max(0.0) * phi_of_f.values[i].norm())
        .collect();
    Ok(PullbackHopf {
        values: phi_of_f,
        holo_residual,
        l1_image: pairwise_sum_f64(&l1_terms),
        p,
    })
}

/// Ellipticity floor of a_p': p on 1 < p <= 2, 2 sqrt(p−1) for p >= 2.
pub fn ellipticity_floor(p: f64) -> f64 {
    if p <= 2.0 { p } else { 2.0 * (p - 1.0).sqrt() }
}

pub fn a_profile(p: f64, s: f64) -> f64 {
    p * (s + 1.0).powf((p - 1.0) / p) * ((s + 1.0).powf(2.0 / p) - 1.0).sqrt()
}

pub fn a_profile_deriv(p: f64, s: f64) -> f64 {
    let u = s + 1.0;
    (p * u.powf(1.0 / p) - (p - 1.0) * u.powf(-1.0 / p)) / (u.powf(2.0 / p) - 1.0).sqrt()
}

pub fn b_profile(p: f64, s: f64) -> f64 {
    let u = s + 1.0;
    p * p * (u * u - u.powf(2.0 * (p - 1.0) / p))
}

pub fn b_profile_deriv(p: f64, s: f64) -> f64 {
    let u = s + 1.0;
    p * p * (2.0 * u - (2.0 * (p - 1.0) / p) * u.powf((p - 2.0) / p))
}

/// Sampled profile functions with their ellipticity constants.
#[derive(Clone, Debug)]
pub struct ProfileTables {
    pub p: f64,
    pub m_p: f64,
    pub k_p: f64,
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub a_prime: Vec<f64>,
    pub b: Vec<f64>,
    pub b_prime: Vec<f64>,
}

pub fn profile_tables(p: f64, s_max: f64, n_samples: usize) -> Result<ProfileTables> {
    if !(p > 1.0) {
        return Err(Error::Config(format!("profiles need p > 1, got {p}")));
    }
    if n_samples < 2 || !(s_max > 0.0) {
        return Err(Error::Config("need n_samples >= 2 and s_max > 0".into()));
    }
    let m_p = ellipticity_floor(p);
    let mut s = Vec::with_capacity(n_samples);
    let mut a = Vec::with_capacity(n_samples);
    let mut a_prime = Vec::with_capacity(n_samples);
    let mut b = Vec::with_capacity(n_samples);
    let mut b_prime = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        // Geometric-ish spacing resolves the s→0 end where a_p' blows up.
        let t = i as f64 / (n_samples - 1) as f64;
        let si = s_max * (t * t);
        s.push(si);
        a.push(a_profile(p, si));
        a_prime.push(a_profile_deriv(p, si));
        b.push(b_profile(p, si));
        b_prime.push(b_profile_deriv(p, si));
    }
    Ok(ProfileTables { p, m_p, k_p: 1.0 / m_p, s, a, a_prime, b, b_prime })
}

impl ProfileTables {
    /// CSV dump: (s, a, a_prime, b, b_prime).
    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        use std::io::Write;
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "s,a,a_prime,b,b_prime")?;
        for i in 0..self.s.len() {
            writeln!(
                out,
                "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                self.s[i], self.a[i], self.a_prime[i], self.b[i], self.b_prime[i]
            )?;
        }
        Ok(())
    }
}

/// Result of the potential reconstruction: F with F_z ≈ a(z),
/// F_zbar ≈ b(z) rebuilt from the transforms, plus the structural residual
/// of |F_z| = a_p(F_zbar) measured on the re-differentiated field.
#[derive(Clone, Debug)]
pub struct PotentialField {
    pub f: ComplexField,
    pub compat_residual: f64,
    /// max |Im F_zbar| over the interior (F_zbar should be real >= 0).
    pub im_defect: f64,
}

fn lattice_interp(values: &[Complex64], plan: &TransformPlan, z: Complex64) -> Complex64 {
    let n = plan.n;
    let x = ((z.re + plan.box_half) / plan.h).clamp(0.0, (n - 2) as f64);
    let y = ((z.im + plan.box_half) / plan.h).clamp(0.0, (n - 2) as f64);
    let ix = x.floor() as usize;
    let iy = y.floor() as usize;
    let sx = x - ix as f64;
    let sy = y - iy as f64;
    let f = |a: usize, b: usize| values[b * n + a];
    (1.0 - sy) * ((1.0 - sx) * f(ix, iy) + sx * f(ix + 1, iy))
        + sy * ((1.0 - sx) * f(ix, iy + 1) + sx * f(ix + 1, iy + 1))
}

/// Rebuild the potential F of a mapping on the unit disk:
/// F_z = 2p K^p conj(μ)/(1+|μ|²), F_zbar = K^p − 1, via the Cauchy
/// transforms of the zero-extended fields, corrected by the antiderivative
/// of the holomorphic discrepancy, gauge F(center node) = 0.
///
/// The disk means of the two source fields are carried by the indicator
/// χ_D, whose transforms are closed-form; the FFT path only sees the
/// mean-free remainders (constant-μ maps therefore reconstruct exactly).
pub fn reconstruct_potential(
    m: &MappingField,
    grid: &DiskGrid,
    p: f64,
    plan: &TransformPlan,
) -> Result<PotentialField> {
    if !matches!(grid.kind, DomainKind::Disk) {
        return Err(Error::Diagnostics(
            "potential reconstruction integrates along rays from the center; disk grids only".into(),
        ));
    }
    let bundle = distortion(m, grid)?;
    let n = grid.len();
    let mut a_field = Vec::with_capacity(n);
    let mut b_field = Vec::with_capacity(n);
    for i in 0..n {
        let mu = bundle.mu.values[i];
        let kp = bundle.k[i].powf(p);
        a_field.push(2.0 * p * kp * mu.conj() / (1.0 + mu.norm_sqr()));
        b_field.push(Complex64::new(kp - 1.0, 0.0));
    }
    let area = grid.area();
    let mean = |f: &[Complex64]| -> Complex64 {
        let terms: Vec<Complex64> =
            f.iter().zip(&grid.weights).map(|(v, w)| v * *w).collect();
        crate::grid::pairwise_sum(&terms) / area
    };
    let c_a = mean(&a_field);
    let c_b = mean(&b_field);
    let a_dev = ComplexField::from_values(
        grid,
        a_field.iter().map(|v| v - c_a).collect(),
    )?;
    let b_dev = ComplexField::from_values(
        grid,
        b_field.iter().map(|v| v - c_b).collect(),
    )?;
    // Resample the deviations onto the lattice, zero outside the disk.
    let resample = |f: &ComplexField| -> Vec<Complex64> {
        let mut out = Vec::with_capacity(plan.len());
        for iy in 0..plan.n {
            for ix in 0..plan.n {
                let z = plan.point(ix, iy);
                let r = z.norm();
                if r <= 1.0 {
                    let rc = r.clamp(grid.r[0], grid.r[grid.n_r - 1]);
                    let zc = if r > 0.0 { z * (rc / r) } else { Complex64::new(rc, 0.0) };
                    out.push(crate::grid::interp(f, grid, zc));
                } else {
                    out.push(C_ZERO);
                }
            }
        }
        out
    };
    let a_lattice = resample(&a_dev);
    let mut b_lattice = resample(&b_dev);
    // The zero extension of b jumps at |z| = 1, and the jump's Gibbs ringing
    // in the transforms gets amplified by the sqrt singularity of a_p at
    // small arguments. Carry the rim trace (per Fourier mode) on reference
    // fields z^n / zbar^n whose transforms are closed-form, so the FFT only
    // sees a field that nearly vanishes at the rim.
    let n_rim = 24usize.min(grid.n_theta / 2 - 1) as i64;
    let rim: Vec<Complex64> =
        (0..grid.n_theta).map(|k| b_dev.values[grid.idx(grid.n_r - 1, k)]).collect();
    let mut beta = std::collections::BTreeMap::new();
    for n in -n_rim..=n_rim {
        let mut acc = C_ZERO;
        for (k, v) in rim.iter().enumerate() {
            let phase = -(n as f64) * grid.theta[k];
            acc += v * Complex64::from_polar(1.0, phase);
        }
        beta.insert(n, acc / grid.n_theta as f64);
    }
    // Reference fields and their transforms on the closed unit disk:
    //   n = 0:   q = χ,        C = zbar | 1/z,                 S = 0 | −1/z²
    //   n >= 1:  q = z^n χ,    C = z^n zbar − z^{n−1} | 0,     S = ∂_z of C
    //   n <= −1: q = zbar^j χ, C = zbar^{j+1}/(j+1) | z^{−(j+1)}/(j+1), j = −n
    let q_ref = |n: i64, z: Complex64| -> Complex64 {
        if n == 0 {
            Complex64::new(1.0, 0.0)
        } else if n > 0 {
            z.powi(n as i32)
        } else {
            z.conj().powi((-n) as i32)
        }
    };
    let c_ref = |n: i64, z: Complex64| -> Complex64 {
        let inside = z.norm() <= 1.0;
        if n == 0 {
            if inside { z.conj() } else { 1.0 / z }
        } else if n > 0 {
            if inside {
                z.powi(n as i32) * z.conj() - z.powi((n - 1) as i32)
            } else {
                C_ZERO
            }
        } else {
            let j = (-n) as i32;
            if inside {
                z.conj().powi(j + 1) / (j + 1) as f64
            } else {
                z.powi(-(j + 1)) / (j + 1) as f64
            }
        }
    };
    let s_ref = |n: i64, z: Complex64| -> Complex64 {
        let inside = z.norm() <= 1.0;
        if n == 0 {
            if inside { C_ZERO } else { -1.0 / (z * z) }
        } else if n > 0 {
            if inside {
                let m = n as i32;
                let lead = m as f64 * z.powi(m - 1) * z.conj();
                if m >= 2 { lead - (m - 1) as f64 * z.powi(m - 2) } else { lead }
            } else {
                C_ZERO
            }
        } else {
            let j = (-n) as i32;
            if inside { C_ZERO } else { -z.powi(-(j + 2)) }
        }
    };
    for iy in 0..plan.n {
        for ix in 0..plan.n {
            let z = plan.point(ix, iy);
            if z.norm() <= 1.0 {
                let mut sub = C_ZERO;
                for (&n, &bn) in &beta {
                    sub += bn * q_ref(n, z);
                }
                b_lattice[iy * plan.n + ix] -= sub;
            }
        }
    }
    // G~ = C(b_res) + Σ β_n C_n; ∂_z G~ = S(b_res) + Σ β_n S_n.
    let g_fft = cauchy_transform(&b_lattice, plan)?;
    let s_fft = beurling_transform(&b_lattice, plan)?;
    let mut g_lattice = g_fft;
    let mut s_b = s_fft;
    for iy in 0..plan.n {
        for ix in 0..plan.n {
            let z = plan.point(ix, iy);
            let idx = iy * plan.n + ix;
            for (&n, &bn) in &beta {
                g_lattice[idx] += bn * c_ref(n, z);
                s_b[idx] += bn * s_ref(n, z);
            }
        }
    }
    // phi_z = ∂_z G_full − a_full = [S(b_res) + Σ β_n S_n] − a~ − c_a inside
    // (the χ-mean parts contribute −c_a there; the conjugate-transform part
    // is exact).
    let phi_z_lattice: Vec<Complex64> =
        s_b.iter().zip(&a_lattice).map(|(s, a)| s - a).collect();
    // Antiderivative of the holomorphic discrepancy via the conjugate
    // Cauchy transform: Psi = C*(phi_z χ) has ∂_z Psi = phi_z exactly, is
    // single-valued, and its ∂_zbar leakage vanishes inside the disk when
    // phi_z is holomorphic (S annihilates anti-holomorphic fields there).
    // A ray-path antiderivative would instead turn any nonzero net
    // incompatibility flux of the discrete map into an arg(z)-type artifact.
    let nl = plan.n;
    let phi_z_cut: Vec<Complex64> = (0..plan.len())
        .map(|idx| {
            let z = plan.point(idx % nl, idx / nl);
            if z.norm() <= 1.0 { phi_z_lattice[idx].conj() } else { C_ZERO }
        })
        .collect();
    let psi_lattice: Vec<Complex64> = cauchy_transform(&phi_z_cut, plan)?
        .into_iter()
        .map(|v| v.conj())
        .collect();
    // F assembled on the lattice, continued a little past |z| = 1 (the
    // χ-carried parts take their exterior closed forms there) so
    // interpolation cells at the outermost grid nodes have valid corners.
    // The −c_a χ part of phi_z is carried analytically: C*(χ) = z | 1/zbar.
    let reach = 1.0 + 4.0 * plan.h;
    let f_lattice: Vec<Complex64> = (0..plan.len())
        .map(|idx| {
            let z = plan.point(idx % nl, idx / nl);
            let r = z.norm();
            if r > reach {
                return C_ZERO;
            }
            let chi_b = if r <= 1.0 { z.conj() } else { 1.0 / z };
            let cstar_chi = if r <= 1.0 { z } else { 1.0 / z.conj() };
            g_lattice[idx] + c_b * chi_b - psi_lattice[idx] + c_a * cstar_chi
        })
        .collect();
    // Fourth-order centered lattice differences, independent of the spectral
    // identities the transforms satisfy by construction (second order would
    // put a fixed truncation floor into F_zbar that the sqrt profile then
    // amplifies).
    let inv_12h = 1.0 / (12.0 * plan.h);
    let deriv_at = |ix: usize, iy: usize| -> (Complex64, Complex64) {
        let row = |d: i64| f_lattice[iy * nl + (ix as i64 + d) as usize];
        let col = |d: i64| f_lattice[(iy as i64 + d) as usize * nl + ix];
        let fx = (-row(2) + 8.0 * row(1) - 8.0 * row(-1) + row(-2)) * inv_12h;
        let fy = (-col(2) + 8.0 * col(1) - 8.0 * col(-1) + col(-2)) * inv_12h;
        (0.5 * (fx - crate::grid::I * fy), 0.5 * (fx + crate::grid::I * fy))
    };
    // Interior band matching the excised polar rings.
    let r_lo = grid.r[EXCISED_RINGS];
    let r_hi = grid.r[grid.n_r - 1 - EXCISED_RINGS].min(1.0 - 3.0 * plan.h);
    let mut band = Vec::new();
    let debug = std::env::var("LPMD_DEBUG_COMPAT").is_ok();
    let mut bins = vec![(0.0f64, 0.0f64, 0.0f64, 0.0f64, 0usize); 10];
    for iy in 2..nl - 2 {
        for ix in 2..nl - 2 {
            let z = plan.point(ix, iy);
            let r = z.norm();
            if r >= r_lo && r <= r_hi {
                let d = deriv_at(ix, iy);
                if debug {
                    let idx = iy * nl + ix;
                    let a_here = a_lattice[idx] + c_a;
                    let b_here = {
                        let mut s = b_lattice[idx] + c_b;
                        for (&n_, &bn) in &beta {
                            s += bn * q_ref(n_, z);
                        }
                        s
                    };
                    let bin = ((r * 10.0) as usize).min(9);
                    bins[bin].0 += (d.0 - a_here).norm();
                    bins[bin].1 += a_here.norm();
                    bins[bin].2 += (d.1 - b_here).norm();
                    bins[bin].3 += b_here.norm();
                    bins[bin].4 += 1;
                }
                band.push(d);
            }
        }
    }
    if debug {
        for (i, b) in bins.iter().enumerate() {
            if b.4 > 0 {
                eprintln!(
                    "[compat debug] r in [{:.1},{:.1}): mean|dFz-a|={:.2e} mean|a|={:.2e} mean|dFzb-b|={:.2e} mean|b|={:.2e}",
                    i as f64 / 10.0,
                    (i + 1) as f64 / 10.0,
                    b.0 / b.4 as f64,
                    b.1 / b.4 as f64,
                    b.2 / b.4 as f64,
                    b.3 / b.4 as f64
                );
            }
        }
    }
    // a_p has a sqrt singularity at s = 0, so round-off in F_zbar would blow
    // up to ~1e-7; floor s at noise scale relative to its own range.
    let s_max = band.iter().map(|(_, v)| v.re).fold(0.0, f64::max);
    let s_floor = 1e-12 * (1.0 + s_max);
    let mut num = Vec::with_capacity(band.len());
    let mut den = Vec::with_capacity(band.len());
    let mut im_defect: f64 = 0.0;
    for (fz, fzb) in &band {
        let s_raw = fzb.re.max(0.0);
        let s = if s_raw < s_floor { 0.0 } else { s_raw };
        im_defect = im_defect.max(fzb.im.abs());
        let lhs = fz.norm();
        let rhs = a_profile(p, s);
        num.push((lhs - rhs).abs());
        den.push(lhs.max(rhs));
    }
    // Conformal maps have a = b = 0 identically; treat a round-off-scale
    // denominator as an exactly compatible reconstruction.
    let den_sum = pairwise_sum_f64(&den) * plan.cell();
    let compat_residual = if den_sum < 1e-12 * area {
        0.0
    } else {
        pairwise_sum_f64(&num) * plan.cell() / den_sum
    };
    // The grid-resident potential (for dumps and the gauge) is sampled from
    // the lattice reconstruction.
    let mut f_vals = Vec::with_capacity(n);
    for j in 0..grid.n_r {
        for k in 0..grid.n_theta {
            let z = grid.node(j, k);
            f_vals.push(lattice_interp(&f_lattice, plan, z));
        }
    }
    let gauge = f_vals[grid.idx(0, 0)];
    for v in f_vals.iter_mut() {
        *v -= gauge;
    }
    let f = ComplexField::from_values(grid, f_vals)?;
    Ok(PotentialField { f, compat_residual, im_defect })
}

pub mod csv {
    use super::*;
    use std::io::Write;

    /// Hopf field dump: (r, theta, re_phi, im_phi).
    pub fn write_hopf(path: &std::path::Path, hopf: &HopfField, grid: &DiskGrid) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "r,theta,re_phi,im_phi")?;
        for j in 0..grid.n_r {
            for k in 0..grid.n_theta {
                let v = hopf.phi.values[grid.idx(j, k)];
                writeln!(out, "{:.17e},{:.17e},{:.17e},{:.17e}", grid.r[j], grid.theta[k], v.re, v.im)?;
            }
        }
        Ok(())
    }
}
