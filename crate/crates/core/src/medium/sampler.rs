use std::f64::consts::PI;

use rand::Rng;

use crate::error::{Error, Result};
use crate::medium::coefficients::sigma_of_cosine;
use crate::medium::spectrum::{Dimension, SpectrumModel};
use crate::quadrature::gauss_legendre;

/// Number of nodes in the inverse-CDF table.
pub const TABLE_NODES: usize = 4096;

/// Inverse-CDF sampler for the scattering cosine.
///
/// The table is laid out uniformly in the polar angle `θ ∈ [0, π]` and stores
/// the cumulative mass of `f(cos θ) sin^{d-2} θ`, which is the law of
/// `μ = cos θ` with density `∝ f(μ)(1 - μ²)^{(d-3)/2}`. Cell masses are
/// integrated with a 6-point Gauss rule; sampling inverts the cumulative
/// table with linear interpolation.
#[derive(Debug, Clone)]
pub struct ScatterSampler {
    dimension: Dimension,
    cdf: Vec<f64>,
    step: f64,
}

impl ScatterSampler {
    /// Builds the table from an unnormalized density over the polar angle
    /// (without the `sin^{d-2}` weight, which is applied here).
    pub fn from_angular_density<F: Fn(f64) -> f64>(dimension: Dimension, density: F) -> Result<Self> {
        let cells = TABLE_NODES - 1;
        let step = PI / cells as f64;
        let (gx, gw) = gauss_legendre(6);
        let mut cdf = Vec::with_capacity(TABLE_NODES);
        cdf.push(0.0);
        let mut acc = 0.0;
        for c in 0..cells {
            let a = c as f64 * step;
            let mut mass = 0.0;
            for (x, w) in gx.iter().zip(&gw) {
                let theta = a + 0.5 * step * (x + 1.0);
                mass += w * density(theta) * dimension.polar_weight(theta);
            }
            mass *= 0.5 * step;
            if !(mass.is_finite() && mass >= 0.0) {
                return Err(Error::numerical(format!("scattering density invalid in table cell {c}"), mass));
            }
            acc += mass;
            cdf.push(acc);
        }
        if !(acc > 0.0 && acc.is_finite()) {
            return Err(Error::numerical("scattering density has no mass", acc));
        }
        for v in &mut cdf {
            *v /= acc;
        }
        Ok(Self { dimension, cdf, step })
    }

    pub fn from_spectrum(model: &SpectrumModel, k_mag: f64) -> Result<Self> {
        Self::from_angular_density(model.dimension, |theta| sigma_of_cosine(model, theta.cos(), k_mag))
    }

    pub fn isotropic(dimension: Dimension) -> Self {
        Self::from_angular_density(dimension, |_| 1.0).expect("constant density is valid")
    }

    /// Henyey–Greenstein law with mean cosine `g` (circular variant in 2D).
    pub fn henyey_greenstein(dimension: Dimension, g: f64) -> Result<Self> {
        if !(g > -1.0 && g < 1.0) {
            return Err(Error::invalid(format!("Henyey–Greenstein g must lie in (-1, 1), got {g}")));
        }
        let g2 = g * g;
        match dimension {
            Dimension::D2 => Self::from_angular_density(dimension, |t| (1.0 - g2) / (1.0 + g2 - 2.0 * g * t.cos())),
            Dimension::D3 => {
                Self::from_angular_density(dimension, |t| (1.0 - g2) / (1.0 + g2 - 2.0 * g * t.cos()).powf(1.5))
            }
        }
    }

    pub fn dimension(&self) -> Dimension {
        self.dimension
    }

    /// Cumulative probability of the polar angle at `theta`, as represented
    /// by the table.
    pub fn table_cdf(&self, theta: f64) -> f64 {
        let x = (theta / self.step).clamp(0.0, (TABLE_NODES - 1) as f64);
        let i = (x.floor() as usize).min(TABLE_NODES - 2);
        let t = x - i as f64;
        self.cdf[i] + t * (self.cdf[i + 1] - self.cdf[i])
    }

    /// Polar angle at cumulative probability `u ∈ [0, 1)`.
    pub fn quantile_angle(&self, u: f64) -> f64 {
        let i = self.cdf.partition_point(|&c| c <= u).clamp(1, TABLE_NODES - 1) - 1;
        let lo = self.cdf[i];
        let hi = self.cdf[i + 1];
        let t = if hi > lo { (u - lo) / (hi - lo) } else { 0.5 };
        (i as f64 + t.clamp(0.0, 1.0)) * self.step
    }

    /// Draws a scattering cosine `μ ∈ [-1, 1]`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile_angle(rng.random::<f64>()).cos()
    }

    /// Mean cosine implied by the table, for diagnostics.
    pub fn table_mean_cosine(&self) -> f64 {
        let (gx, gw) = gauss_legendre(4);
        let mut m = 0.0;
        for i in 0..TABLE_NODES - 1 {
            let dp = self.cdf[i + 1] - self.cdf[i];
            let a = i as f64 * self.step;
            // Within a cell the sampled angle is uniform.
            let mut c = 0.0;
            for (x, w) in gx.iter().zip(&gw) {
                c += 0.5 * w * (a + 0.5 * self.step * (x + 1.0)).cos();
            }
            m += dp * c;
        }
        m
    }
}
