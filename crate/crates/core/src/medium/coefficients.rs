//! Scattering cross sections and the transport coefficients derived from them.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geom::{self, Vec3};
use crate::medium::spectrum::{Dimension, SpectrumModel};
use crate::quadrature::{gauss_legendre_on, integrate_adaptive};

const UNIT_TOL: f64 = 1e-12;
const QUAD_REL_TOL: f64 = 1e-12;
const QUAD_MAX_SEGMENTS: usize = 4000;

fn check_unit(v: Vec3, name: &str) -> Result<()> {
    let n = geom::norm(v);
    if (n - 1.0).abs() > UNIT_TOL {
        return Err(Error::invalid(format!("{name} is not a unit vector (norm {n})")));
    }
    Ok(())
}

fn check_wavenumber(k_mag: f64) -> Result<()> {
    if !(k_mag.is_finite() && k_mag > 0.0) {
        return Err(Error::invalid(format!("wavenumber must be positive, got {k_mag}")));
    }
    Ok(())
}

/// `σ` as a function of the scattering cosine `μ = p̂·k̂`:
/// `2π |k|^{d-3} R̂(|k| |p̂ - k̂|)` with `|p̂ - k̂| = sqrt(2 - 2μ)`.
#[inline]
pub fn sigma_of_cosine(model: &SpectrumModel, mu: f64, k_mag: f64) -> f64 {
    let transfer = (2.0 - 2.0 * mu).max(0.0).sqrt() * k_mag;
    2.0 * PI * k_mag.powi(model.dimension.as_usize() as i32 - 3) * model.density(transfer)
}

/// Same as [`sigma_of_cosine`] with the momentum transfer written through the
/// half angle, `|p̂ - k̂| = 2 sin(θ/2)`, which keeps precision near `θ = 0`.
#[inline]
fn sigma_of_angle(model: &SpectrumModel, theta: f64, k_mag: f64) -> f64 {
    let transfer = 2.0 * (0.5 * theta).sin() * k_mag;
    2.0 * PI * k_mag.powi(model.dimension.as_usize() as i32 - 3) * model.density(transfer)
}

/// Differential scattering cross section between two directions.
pub fn sigma_differential(model: &SpectrumModel, p_hat: Vec3, k_hat: Vec3, k_mag: f64) -> Result<f64> {
    check_unit(p_hat, "p_hat")?;
    check_unit(k_hat, "k_hat")?;
    check_wavenumber(k_mag)?;
    let diff = geom::scale(geom::sub(p_hat, k_hat), k_mag);
    let d = model.dimension.as_usize() as i32;
    Ok(2.0 * PI * k_mag.powi(d - 3) * model.density(geom::norm(diff)))
}

/// Integrates a zonal function `F(θ)` over the sphere `S^{d-1}`.
fn zonal_integral<F: Fn(f64) -> f64>(dim: Dimension, f: F) -> Result<f64> {
    let c = dim.zonal_constant();
    let r = integrate_adaptive(
        |theta| f(theta) * dim.polar_weight(theta),
        0.0,
        PI,
        QUAD_REL_TOL,
        1e-300,
        QUAD_MAX_SEGMENTS,
    )?;
    Ok(c * r.value)
}

/// Total scattering cross section `Σ = ∫ σ(p̂·k̂) dp̂`.
pub fn sigma_total(model: &SpectrumModel, k_mag: f64) -> Result<f64> {
    check_wavenumber(k_mag)?;
    let total = if let crate::medium::SpectrumKind::IsotropicConstant { level } = model.kind {
        2.0 * PI * k_mag.powi(model.dimension.as_usize() as i32 - 3) * level * model.dimension.sphere_area()
    } else {
        zonal_integral(model.dimension, |theta| sigma_of_angle(model, theta, k_mag))?
    };
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::DegenerateMedium(format!(
            "total scattering cross section is {total}; the mean free path is undefined"
        )));
    }
    Ok(total)
}

/// Normalized differential cross section `f(μ) = σ(μ)/Σ`.
pub fn phase_function(model: &SpectrumModel, mu: f64, k_mag: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&mu) {
        return Err(Error::invalid(format!("scattering cosine {mu} outside [-1, 1]")));
    }
    Ok(sigma_of_cosine(model, mu, k_mag) / sigma_total(model, k_mag)?)
}

/// Mean scattering cosine `g`.
///
/// Evaluated as `1 - ∫ f (1 - μ) dp̂` with `1 - μ = 2 sin²(θ/2)`, so strongly
/// forward-peaked media keep their distance to 1 accurately.
pub fn anisotropy_g(model: &SpectrumModel, k_mag: f64) -> Result<f64> {
    let total = sigma_total(model, k_mag)?;
    if model.is_isotropic_constant() {
        return Ok(0.0);
    }
    let deficit = zonal_integral(model.dimension, |theta| {
        let s = (0.5 * theta).sin();
        sigma_of_angle(model, theta, k_mag) * 2.0 * s * s
    })? / total;
    Ok(1.0 - deficit)
}

/// Solution `h(k̂) = -k̂ / (1 - g)` of the first-order corrector problem.
pub fn h_vector(model: &SpectrumModel, k_hat: Vec3, k_mag: f64) -> Result<Vec3> {
    check_unit(k_hat, "k_hat")?;
    let g = anisotropy_g(model, k_mag)?;
    h_vector_from_g(k_hat, g)
}

pub(crate) fn h_vector_from_g(k_hat: Vec3, g: f64) -> Result<Vec3> {
    if g >= 1.0 - 1e-12 {
        return Err(Error::NearSingularTransport { g });
    }
    Ok(geom::scale(k_hat, -1.0 / (1.0 - g)))
}

/// Largest residual of `(K - I) h_j(k̂) = ê_j·k̂` with `h = -k̂/(1-g)`.
///
/// The operator `K h(k̂) = ∫ f(p̂·k̂) h(p̂) dp̂` is applied with a fixed product
/// rule that is not aligned with `k̂`: `n_nodes` equispaced angles on the
/// circle (d = 2), or `n_nodes` Gauss–Legendre polar nodes times `2 n_nodes`
/// azimuths (d = 3). The residual is checked at `n_nodes` directions `k̂`.
pub fn h_identity_residual(model: &SpectrumModel, k_mag: f64, n_nodes: usize) -> Result<f64> {
    if n_nodes < 4 {
        return Err(Error::invalid("h identity check needs at least 4 nodes"));
    }
    let total = sigma_total(model, k_mag)?;
    let g = anisotropy_g(model, k_mag)?;
    let dim = model.dimension;
    let quad = sphere_rule(dim, n_nodes);
    let directions = test_directions(dim, n_nodes);
    let mut worst: f64 = 0.0;
    for k_hat in directions {
        let h_k = h_vector_from_g(k_hat, g)?;
        let mut k_h = [0.0; 3];
        for (p_hat, w) in &quad {
            let f = sigma_of_cosine(model, geom::dot(*p_hat, k_hat).clamp(-1.0, 1.0), k_mag) / total;
            let h_p = h_vector_from_g(*p_hat, g)?;
            k_h = geom::axpy(k_h, w * f, h_p);
        }
        for j in 0..dim.as_usize() {
            let residual = (k_h[j] - h_k[j]) - k_hat[j];
            worst = worst.max(residual.abs());
        }
    }
    Ok(worst)
}

/// Product quadrature on `S^{d-1}` as `(node, weight)` pairs.
pub(crate) fn sphere_rule(dim: Dimension, n: usize) -> Vec<(Vec3, f64)> {
    match dim {
        Dimension::D2 => {
            let w = 2.0 * PI / n as f64;
            (0..n)
                .map(|i| {
                    let a = 2.0 * PI * i as f64 / n as f64;
                    ([a.cos(), a.sin(), 0.0], w)
                })
                .collect()
        }
        Dimension::D3 => {
            let (zs, wz) = gauss_legendre_on(n, -1.0, 1.0);
            let n_phi = 2 * n;
            let w_phi = 2.0 * PI / n_phi as f64;
            let mut out = Vec::with_capacity(n * n_phi);
            for (z, wzi) in zs.iter().zip(&wz) {
                let s = (1.0 - z * z).max(0.0).sqrt();
                for j in 0..n_phi {
                    let a = 2.0 * PI * j as f64 / n_phi as f64;
                    out.push(([s * a.cos(), s * a.sin(), *z], wzi * w_phi));
                }
            }
            out
        }
    }
}

/// Deterministic set of `n` well-spread unit directions, offset from the
/// quadrature nodes.
fn test_directions(dim: Dimension, n: usize) -> Vec<Vec3> {
    match dim {
        Dimension::D2 => (0..n)
            .map(|i| {
                let a = 2.0 * PI * (i as f64 + 0.37) / n as f64;
                [a.cos(), a.sin(), 0.0]
            })
            .collect(),
        Dimension::D3 => {
            let golden = PI * (3.0 - 5f64.sqrt());
            (0..n)
                .map(|i| {
                    let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                    let r = (1.0 - z * z).sqrt();
                    let a = golden * i as f64;
                    [r * a.cos(), r * a.sin(), z]
                })
                .collect()
        }
    }
}

/// Transport coefficients at a fixed wavenumber.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransportCoefficients {
    pub dimension: Dimension,
    pub wavenumber: f64,
    pub sigma_total: f64,
    pub mean_free_path: f64,
    pub anisotropy_g: f64,
    /// `ϖ_d / (d (1 - g))`, the scalar of the diffusion matrix.
    pub diffusion_scalar: f64,
}

impl TransportCoefficients {
    pub fn from_spectrum(model: &SpectrumModel, k_mag: f64) -> Result<Self> {
        let sigma = sigma_total(model, k_mag)?;
        let g = anisotropy_g(model, k_mag)?;
        Self::assemble(model.dimension, k_mag, sigma, g)
    }

    /// Coefficients for a medium specified directly by `Σ` and `g`.
    pub fn synthetic(dimension: Dimension, sigma_total: f64, g: f64) -> Result<Self> {
        if !(sigma_total.is_finite() && sigma_total > 0.0) {
            return Err(Error::DegenerateMedium(format!("sigma_total must be positive, got {sigma_total}")));
        }
        Self::assemble(dimension, 1.0, sigma_total, g)
    }

    fn assemble(dimension: Dimension, wavenumber: f64, sigma_total: f64, g: f64) -> Result<Self> {
        if !(g > -1.0 && g < 1.0) {
            return Err(Error::NearSingularTransport { g });
        }
        let (sigma_total, mean_free_path) = reciprocal_pair(sigma_total);
        let d = dimension.as_usize() as f64;
        Ok(Self {
            dimension,
            wavenumber,
            sigma_total,
            mean_free_path,
            anisotropy_g: g,
            diffusion_scalar: dimension.sphere_area() / (d * (1.0 - g)),
        })
    }

    /// `1 / (1 - g)`, the diffusion coefficient after dividing out `ϖ_d / d`.
    pub fn reduced_diffusion(&self) -> f64 {
        1.0 / (1.0 - self.anisotropy_g)
    }
}

/// Returns `(x', 1/x')` with `x'` within a few ulps of `x` and the product of
/// the pair exactly one in floating point.
fn reciprocal_pair(x: f64) -> (f64, f64) {
    let mut candidate = x;
    let mut flip = x;
    for _ in 0..16 {
        for base in [candidate, flip] {
            let r = 1.0 / base;
            let mut lo = r;
            let mut hi = r;
            if r * base == 1.0 {
                return (base, r);
            }
            for _ in 0..4 {
                lo = lo.next_down();
                hi = hi.next_up();
                if lo * base == 1.0 {
                    return (base, lo);
                }
                if hi * base == 1.0 {
                    return (base, hi);
                }
            }
        }
        candidate = candidate.next_up();
        flip = flip.next_down();
    }
    (x, 1.0 / x)
}
