//! Speckle correlation `C12` from either engine, the wavefront sweep, and two
//! validation utilities: a discrete Wigner transform and the decay rate of the
//! phase-modulated scattering integral.
//!
//! The Monte Carlo estimator realizes ensemble averages directly; identifying
//! them with spatial speckle averages assumes circular Gaussian statistics.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::diffusion::{measured_flux, solve_diffusion, CorrelationField, DiffusionProblem, FieldGrid};
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::medium::{Dimension, ScatteringMedium, TransportCoefficients};
use crate::quadrature::gauss_legendre_on;
use crate::scene::{wavefront_sequence, Face, Scene, ShiftField};
use crate::transport::{run_transport_shifts, BoundaryTally, McParams};

/// A correlation value with its Monte Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

/// `C12 = |Σ w12|² / (Σ w11 · Σ w22)` with `W22 = W11`.
///
/// The standard error comes from the delta method applied to the per-packet
/// means of the measured indicator and of the real and imaginary weights.
pub fn c12_from_tally(t: &BoundaryTally) -> Result<Estimate> {
    if !(t.sum_w11 > 0.0) || t.n_launched == 0 {
        return Err(Error::UndefinedCorrelation("no packet reached the measured boundary".into()));
    }
    let n = t.n_launched as f64;
    let a = t.sum_w11 / n;
    let br = t.sum_w12.re / n;
    let bi = t.sum_w12.im / n;
    let value = t.sum_w12.norm_sqr() / (t.sum_w11 * t.sum_w11);

    // Packet-level covariance of (a, br, bi); a = 1 whenever b ≠ 0.
    let var_a = t.sum_w11_sq / n - a * a;
    let cov_a_br = br - a * br;
    let cov_a_bi = bi - a * bi;
    let var_br = t.sum_w12_re_sq / n - br * br;
    let var_bi = t.sum_w12_im_sq / n - bi * bi;
    let cov_br_bi = t.sum_w12_re_im / n - br * bi;

    let ga = -2.0 * (br * br + bi * bi) / (a * a * a);
    let gr = 2.0 * br / (a * a);
    let gi = 2.0 * bi / (a * a);
    let var = ga * ga * var_a
        + gr * gr * var_br
        + gi * gi * var_bi
        + 2.0 * (ga * gr * cov_a_br + ga * gi * cov_a_bi + gr * gi * cov_br_bi);
    Ok(Estimate { value, std_error: (var.max(0.0) / n).sqrt() })
}

/// `C12 = |F12|² / (F11 · F22)` from the measured boundary fluxes.
pub fn c12_from_fields(w11: &FieldGrid, w22: &FieldGrid, w12: &FieldGrid, faces: &[Face]) -> Result<f64> {
    if w11.grid != w22.grid || w11.grid != w12.grid {
        return Err(Error::invalid("fields live on different grids"));
    }
    let f11 = measured_flux(w11, faces)?;
    let f22 = measured_flux(w22, faces)?;
    let f12 = measured_flux(w12, faces)?;
    let den = f11.re * f22.re;
    if !(den > 0.0) {
        return Err(Error::UndefinedCorrelation("zero flux through the measured boundary".into()));
    }
    Ok(f12.norm_sqr() / den)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Mc,
    Diffusion,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::Mc => "mc",
            Engine::Diffusion => "diffusion",
        }
    }
}

/// `C12` as a function of the wavefront radius.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationCurve {
    pub radii: Vec<f64>,
    pub c12: Vec<f64>,
    pub engine: Engine,
    /// Per-point standard errors (Monte Carlo only).
    pub stat_error: Option<Vec<f64>>,
    pub seed: Option<u64>,
}

impl CorrelationCurve {
    pub fn len(&self) -> usize {
        self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radii.is_empty()
    }

    /// CSV with columns `r,c12,stderr,engine,seed`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("r,c12,stderr,engine,seed\n");
        let seed = self.seed.map(|v| v.to_string()).unwrap_or_default();
        for (i, (r, c)) in self.radii.iter().zip(&self.c12).enumerate() {
            let err = self.stat_error.as_ref().map(|e| e[i].to_string()).unwrap_or_default();
            let _ = writeln!(s, "{r},{c},{err},{},{seed}", self.engine.name());
        }
        s
    }
}

/// Wavefront geometry of the sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wavefront {
    pub center: Vec3,
    pub thickness: f64,
}

/// Solver settings of a sweep.
#[derive(Debug, Clone)]
pub enum SweepEngine<'a> {
    Mc { medium: &'a ScatteringMedium, params: McParams },
    Diffusion { coefficients: &'a TransportCoefficients, grid_spacing: f64, source_level: f64 },
}

/// Radii `start, start + step, …` up to `stop` inclusive, rounded to 1e-12 so
/// that decimal steps land on decimal values.
pub fn radii_range(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && start > 0.0 && stop >= start) {
        return Err(Error::invalid("radii: need 0 < start <= stop and step > 0"));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12).collect())
}

/// `C12(r_n)` over a sequence of wavefronts in the large-shift regime.
///
/// The diffusion engine solves the auto-correlation once and one
/// cross-correlation problem per radius. The Monte Carlo engine tallies every
/// radius from the same packet histories, which is the same as rerunning with
/// a fixed seed.
pub fn run_sweep(template: &Scene, radii: &[f64], wave: Wavefront, engine: &SweepEngine) -> Result<CorrelationCurve> {
    let shifts = wavefront_sequence(wave.center, radii, wave.thickness)?;
    let scenes: Vec<Scene> = shifts.iter().map(|s| template.with_shift(s.clone())).collect::<Result<_>>()?;
    match engine {
        SweepEngine::Diffusion { coefficients, grid_spacing, source_level } => {
            let auto = template.with_shift(ShiftField::none())?;
            let problem = |scene: &Scene, field| {
                DiffusionProblem::from_scene(scene, coefficients, field, *grid_spacing, *source_level)
            };
            let w11 = solve_diffusion(&problem(&auto, CorrelationField::Auto))?;
            let mut c12 = Vec::with_capacity(radii.len());
            for scene in &scenes {
                let w12 = solve_diffusion(&problem(scene, CorrelationField::Cross))?;
                c12.push(c12_from_fields(&w11, &w11, &w12, &template.measured)?);
            }
            Ok(CorrelationCurve { radii: radii.to_vec(), c12, engine: Engine::Diffusion, stat_error: None, seed: None })
        }
        SweepEngine::Mc { medium, params } => {
            let tallies = run_transport_shifts(template, &shifts, medium, params)?;
            let est: Vec<Estimate> = tallies.iter().map(c12_from_tally).collect::<Result<_>>()?;
            Ok(CorrelationCurve {
                radii: radii.to_vec(),
                c12: est.iter().map(|e| e.value).collect(),
                engine: Engine::Mc,
                stat_error: Some(est.iter().map(|e| e.std_error).collect()),
                seed: Some(params.seed),
            })
        }
    }
}

/// Pointwise comparison of a Monte Carlo curve with a diffusion curve.
#[derive(Debug, Clone, PartialEq)]
pub struct AgreementRow {
    pub radius: f64,
    pub mc: f64,
    pub diffusion: f64,
    pub tolerance: f64,
    pub agrees: bool,
}

/// Agreement within `max(rel · C_diffusion, 3 standard errors)` per radius.
pub fn compare_curves(mc: &CorrelationCurve, diffusion: &CorrelationCurve, rel: f64) -> Result<Vec<AgreementRow>> {
    if mc.radii != diffusion.radii {
        return Err(Error::invalid("curves sampled at different radii"));
    }
    let errors = mc.stat_error.clone().unwrap_or_else(|| vec![0.0; mc.len()]);
    Ok(mc
        .radii
        .iter()
        .enumerate()
        .map(|(i, &radius)| {
            let tolerance = (rel * diffusion.c12[i]).max(3.0 * errors[i]);
            AgreementRow {
                radius,
                mc: mc.c12[i],
                diffusion: diffusion.c12[i],
                tolerance,
                agrees: (mc.c12[i] - diffusion.c12[i]).abs() <= tolerance,
            }
        })
        .collect())
}

/// Discrete Wigner transform on a periodic 1D or 2D grid.
#[derive(Debug, Clone, PartialEq)]
pub struct WignerGrid {
    /// Samples per axis.
    pub shape: Vec<usize>,
    pub dx: f64,
    pub dk: f64,
    /// Indexed `[x, k]` with `x` and `k` flattened row-major.
    pub values: Vec<Complex64>,
}

impl WignerGrid {
    /// Wavenumber of FFT index `l` on an axis of `n` samples.
    pub fn wavenumber(&self, l: usize, n: usize) -> f64 {
        let l = if l < n.div_ceil(2) { l as f64 } else { l as f64 - n as f64 };
        l * self.dk
    }

    /// `Σ_k W(x, k) Δk^d` for every `x`.
    pub fn marginal(&self) -> Vec<Complex64> {
        let m: usize = self.shape.iter().product();
        let cell = self.dk.powi(self.shape.len() as i32);
        self.values.chunks(m).map(|row| row.iter().sum::<Complex64>() * cell).collect()
    }
}

fn offset_index(shape: &[usize], x: &[usize], m: &[usize], sign: isize) -> usize {
    let mut idx = 0;
    for a in 0..shape.len() {
        let n = shape[a] as isize;
        let j = (x[a] as isize + sign * m[a] as isize).rem_euclid(n) as usize;
        idx = idx * shape[a] + j;
    }
    idx
}

fn unflatten(shape: &[usize], mut i: usize) -> Vec<usize> {
    let mut out = vec![0; shape.len()];
    for a in (0..shape.len()).rev() {
        out[a] = i % shape[a];
        i /= shape[a];
    }
    out
}

/// `W[u,v](x,k) = (2π)^{-d} ∫ e^{ik·y} u(x - εy/2) v̄(x + εy/2) dy` on a
/// periodic grid of spacing `dx`. Half-offsets `εy/2` are taken on the grid,
/// so `y` has spacing `2 dx / ε` and the sum over `y` is one FFT per `x`.
pub fn wigner_transform(u: &[Complex64], v: &[Complex64], shape: &[usize], dx: f64, eps: f64) -> Result<WignerGrid> {
    if shape.is_empty() || shape.len() > 2 || shape.contains(&0) {
        return Err(Error::invalid("Wigner grids must be 1D or 2D and non-empty"));
    }
    let m: usize = shape.iter().product();
    if u.len() != m || v.len() != m {
        return Err(Error::invalid(format!("samples ({}, {}) do not match the grid ({m})", u.len(), v.len())));
    }
    if !(dx > 0.0 && eps > 0.0) {
        return Err(Error::invalid("dx and eps must be positive"));
    }
    let d = shape.len() as i32;
    let dy = 2.0 * dx / eps;
    let dk = 2.0 * PI / (shape[0] as f64 * dy);
    if shape.len() == 2 && shape[1] != shape[0] {
        return Err(Error::invalid("2D Wigner grids must be square"));
    }
    let prefactor = (dy / (2.0 * PI)).powi(d);
    let mut planner = FftPlanner::<f64>::new();
    let ffts: Vec<_> = shape.iter().map(|&n| planner.plan_fft_inverse(n)).collect();
    let mut values = vec![Complex64::new(0.0, 0.0); m * m];
    let mut line = Vec::new();
    for xi in 0..m {
        let x = unflatten(shape, xi);
        let row = &mut values[xi * m..(xi + 1) * m];
        for (mi, slot) in row.iter_mut().enumerate() {
            let off = unflatten(shape, mi);
            *slot = u[offset_index(shape, &x, &off, -1)] * v[offset_index(shape, &x, &off, 1)].conj() * prefactor;
        }
        // Inverse FFT = Σ_m a_m e^{+2πi l m / n} along every axis.
        ffts[shape.len() - 1].process(row);
        if shape.len() == 2 {
            let n = shape[0];
            for col in 0..n {
                line.clear();
                line.extend((0..n).map(|r| row[r * n + col]));
                ffts[0].process(&mut line);
                for r in 0..n {
                    row[r * n + col] = line[r];
                }
            }
        }
    }
    Ok(WignerGrid { shape: shape.to_vec(), dx, dk, values })
}

/// `∮ f(p̂·k̂) e^{iκ (p̂ - k̂)·φ̂} dp̂` with `φ̂ = k̂`, by composite Gauss–Legendre
/// quadrature fine enough to resolve the oscillation at `κ = |k||φ|`.
pub fn phase_modulated_integral<F: Fn(f64) -> f64>(dim: Dimension, f: F, kappa: f64) -> Complex64 {
    let panels = (kappa.abs() * 2.0).ceil().max(8.0) as usize;
    let (x, w) = gauss_legendre_on(16, 0.0, 1.0);
    let mut total = Complex64::new(0.0, 0.0);
    match dim {
        Dimension::D2 => {
            // θ ∈ (0, π) doubled by symmetry.
            let h = PI / panels as f64;
            for p in 0..panels {
                for (xi, wi) in x.iter().zip(&w) {
                    let th = (p as f64 + xi) * h;
                    let mu = th.cos();
                    total += 2.0 * wi * h * f(mu) * Complex64::from_polar(1.0, kappa * (mu - 1.0));
                }
            }
        }
        Dimension::D3 => {
            let h = 2.0 / panels as f64;
            for p in 0..panels {
                for (xi, wi) in x.iter().zip(&w) {
                    let mu = -1.0 + (p as f64 + xi) * h;
                    total += 2.0 * PI * wi * h * f(mu) * Complex64::from_polar(1.0, kappa * (mu - 1.0));
                }
            }
        }
    }
    total
}

/// Least-squares slope of `log |I(κ)|` against `log κ` over `n` log-spaced
/// points of `[kappa_min, kappa_max]`.
pub fn riemann_lebesgue_slope<F: Fn(f64) -> f64>(dim: Dimension, f: F, kappa_min: f64, kappa_max: f64, n: usize) -> f64 {
    let pts: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let t = i as f64 / (n - 1) as f64;
            let kappa = kappa_min * (kappa_max / kappa_min).powf(t);
            (kappa.ln(), phase_modulated_integral(dim, &f, kappa).norm().ln())
        })
        .collect();
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n as f64;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n as f64;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}
