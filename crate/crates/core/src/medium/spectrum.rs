use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spatial dimension of the medium.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dimension {
    D2,
    D3,
}

impl Dimension {
    pub fn from_usize(d: usize) -> Result<Self> {
        match d {
            2 => Ok(Dimension::D2),
            3 => Ok(Dimension::D3),
            _ => Err(Error::invalid(format!("dimension must be 2 or 3, got {d}"))),
        }
    }

    pub fn as_usize(self) -> usize {
        match self {
            Dimension::D2 => 2,
            Dimension::D3 => 3,
        }
    }

    /// Area of the unit sphere `S^{d-1}`: `2 π^{d/2} / Γ(d/2)`.
    pub fn sphere_area(self) -> f64 {
        match self {
            Dimension::D2 => 2.0 * PI,
            Dimension::D3 => 4.0 * PI,
        }
    }

    /// `2 π^{(d-1)/2} / Γ((d-1)/2)`, the measure of the azimuthal sphere
    /// `S^{d-2}` that turns a zonal integral into a single polar integral.
    pub fn zonal_constant(self) -> f64 {
        match self {
            Dimension::D2 => 2.0,
            Dimension::D3 => 2.0 * PI,
        }
    }

    /// Polar weight `sin^{d-2} θ` of the zonal measure.
    #[inline]
    pub fn polar_weight(self, theta: f64) -> f64 {
        match self {
            Dimension::D2 => 1.0,
            Dimension::D3 => theta.sin(),
        }
    }
}

/// Power spectral density of the index fluctuations, isotropic in `ξ`.
#[derive(Debug, Clone, PartialEq)]
pub enum SpectrumKind {
    /// `R(x) = exp(-|x|² / (2ℓ²))`.
    GaussianCorrelation { correlation_length: f64 },
    /// Flat spectrum `R̂ ≡ level` (isotropic scattering).
    IsotropicConstant { level: f64 },
    Tabulated(TabulatedSpectrum),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumModel {
    pub kind: SpectrumKind,
    pub dimension: Dimension,
}

impl SpectrumModel {
    pub fn new(kind: SpectrumKind, dimension: Dimension) -> Result<Self> {
        match &kind {
            SpectrumKind::GaussianCorrelation { correlation_length } => {
                if !(correlation_length.is_finite() && *correlation_length > 0.0) {
                    return Err(Error::invalid("correlation length must be positive"));
                }
            }
            SpectrumKind::IsotropicConstant { level } => {
                if !(level.is_finite() && *level >= 0.0) {
                    return Err(Error::invalid("spectral level must be non-negative"));
                }
            }
            SpectrumKind::Tabulated(_) => {}
        }
        Ok(Self { kind, dimension })
    }

    pub fn gaussian(correlation_length: f64, dimension: Dimension) -> Result<Self> {
        Self::new(SpectrumKind::GaussianCorrelation { correlation_length }, dimension)
    }

    pub fn isotropic(level: f64, dimension: Dimension) -> Result<Self> {
        Self::new(SpectrumKind::IsotropicConstant { level }, dimension)
    }

    pub fn is_isotropic_constant(&self) -> bool {
        matches!(self.kind, SpectrumKind::IsotropicConstant { .. })
    }

    /// Spectral density `R̂` at wavenumber magnitude `|ξ|`, with the transform
    /// convention `f̂(ξ) = (2π)^{-d} ∫ e^{iξ·x} f(x) dx`.
    pub fn density(&self, xi: f64) -> f64 {
        match &self.kind {
            SpectrumKind::GaussianCorrelation { correlation_length: l } => {
                let d = self.dimension.as_usize() as i32;
                (l * l / (2.0 * PI)).powf(0.5 * d as f64) * (-0.5 * l * l * xi * xi).exp()
            }
            SpectrumKind::IsotropicConstant { level } => *level,
            SpectrumKind::Tabulated(t) => t.eval(xi),
        }
    }
}

/// Sampled radial spectrum, interpolated with a monotone (Fritsch–Carlson)
/// cubic and clamped at zero. Held constant beyond the sampled range.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedSpectrum {
    wavenumbers: Vec<f64>,
    densities: Vec<f64>,
    slopes: Vec<f64>,
}

impl TabulatedSpectrum {
    pub fn new(samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::invalid("tabulated spectrum needs at least two samples"));
        }
        let (wavenumbers, densities): (Vec<f64>, Vec<f64>) = samples.into_iter().unzip();
        if wavenumbers.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::invalid("tabulated wavenumbers must be finite and non-negative"));
        }
        if wavenumbers.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("tabulated wavenumbers must be strictly increasing"));
        }
        if densities.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("tabulated densities must be finite and non-negative"));
        }
        let slopes = pchip_slopes(&wavenumbers, &densities);
        Ok(Self { wavenumbers, densities, slopes })
    }

    /// Reads a whitespace-delimited two-column file (`wavenumber density`);
    /// `#` starts a comment.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut samples = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.len() != 2 {
                return Err(Error::invalid(format!(
                    "line {}: expected two columns, found {}",
                    lineno + 1,
                    cols.len()
                )));
            }
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::invalid(format!("line {}: {e}: {s:?}", lineno + 1)))
            };
            samples.push((parse(cols[0])?, parse(cols[1])?));
        }
        Self::new(samples)
    }

    pub fn samples(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.wavenumbers.iter().copied().zip(self.densities.iter().copied())
    }

    pub fn eval(&self, xi: f64) -> f64 {
        let x = &self.wavenumbers;
        let n = x.len();
        if xi <= x[0] {
            return self.densities[0];
        }
        if xi >= x[n - 1] {
            return self.densities[n - 1];
        }
        let i = x.partition_point(|&v| v <= xi) - 1;
        let h = x[i + 1] - x[i];
        let t = (xi - x[i]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        let v = h00 * self.densities[i]
            + h10 * h * self.slopes[i]
            + h01 * self.densities[i + 1]
            + h11 * h * self.slopes[i + 1];
        v.max(0.0)
    }
}

fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
    let mut m = vec![0.0; n];
    if n == 2 {
        m[0] = delta[0];
        m[1] = delta[0];
        return m;
    }
    for i in 1..n - 1 {
        if delta[i - 1] * delta[i] <= 0.0 {
            m[i] = 0.0;
        } else {
            let w1 = 2.0 * h[i] + h[i - 1];
            let w2 = h[i] + 2.0 * h[i - 1];
            m[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }
    // The spectrum is even in ξ, so a table starting at the origin has zero
    // slope there. Anything else puts a kink into σ at forward scattering.
    m[0] = if x[0] == 0.0 { 0.0 } else { pchip_end_slope(h[0], h[1], delta[0], delta[1]) };
    m[n - 1] = pchip_end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    m
}

fn pchip_end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let m = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if m * d0 <= 0.0 {
        0.0
    } else if d0 * d1 <= 0.0 && m.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_constants() {
        assert_eq!(Dimension::D2.sphere_area(), 2.0 * PI);
        assert_eq!(Dimension::D3.sphere_area(), 4.0 * PI);
        assert_eq!(Dimension::D2.zonal_constant(), 2.0);
        assert_eq!(Dimension::D3.zonal_constant(), 2.0 * PI);
    }

    #[test]
    fn tabulated_interpolates_through_samples_and_stays_monotone() {
        let t = TabulatedSpectrum::new(vec![(0.0, 4.0), (1.0, 2.0), (2.0, 1.0), (4.0, 0.0)]).unwrap();
        assert_eq!(t.eval(1.0), 2.0);
        assert_eq!(t.eval(10.0), 0.0);
        let mut prev = f64::INFINITY;
        for i in 0..=400 {
            let v = t.eval(i as f64 * 0.01);
            assert!(v <= prev + 1e-15 && v >= 0.0);
            prev = v;
        }
    }

    #[test]
    fn tabulated_is_flat_at_the_origin() {
        let t = TabulatedSpectrum::new(vec![(0.0, 1.0), (0.5, 0.6), (1.0, 0.2)]).unwrap();
        assert_eq!(t.slopes[0], 0.0);
        let shifted = TabulatedSpectrum::new(vec![(0.1, 1.0), (0.5, 0.6), (1.0, 0.2)]).unwrap();
        assert!(shifted.slopes[0] < 0.0);
    }

    #[test]
    fn tabulated_rejects_bad_tables() {
        assert!(TabulatedSpectrum::new(vec![(0.0, 1.0), (0.0, 2.0)]).is_err());
        assert!(TabulatedSpectrum::new(vec![(0.0, 1.0), (1.0, -2.0)]).is_err());
        assert!(TabulatedSpectrum::new(vec![(0.0, 1.0)]).is_err());
    }

    #[test]
    fn parses_commented_two_column_text() {
        let t = TabulatedSpectrum::parse("# k  R\n0 1.0\n 1.5\t0.5 # tail\n\n3 0\n").unwrap();
        assert_eq!(t.samples().count(), 3);
        assert!(TabulatedSpectrum::parse("0 1 2\n").is_err());
    }
}
