//! Random-medium statistics and the transport coefficients derived from them.

mod coefficients;
mod sampler;
mod spectrum;

pub use coefficients::{
    anisotropy_g, h_identity_residual, h_vector, phase_function, sigma_differential, sigma_of_cosine,
    sigma_total, TransportCoefficients,
};
pub use sampler::{ScatterSampler, TABLE_NODES};
pub use spectrum::{Dimension, SpectrumKind, SpectrumModel, TabulatedSpectrum};

/// Coefficients plus a sampler for the scattering cosine: everything the
/// Monte Carlo engine needs to know about the medium.
#[derive(Debug, Clone)]
pub struct ScatteringMedium {
    pub coefficients: TransportCoefficients,
    pub sampler: ScatterSampler,
}

impl ScatteringMedium {
    pub fn from_spectrum(model: &SpectrumModel, k_mag: f64) -> crate::Result<Self> {
        Ok(Self {
            coefficients: TransportCoefficients::from_spectrum(model, k_mag)?,
            sampler: ScatterSampler::from_spectrum(model, k_mag)?,
        })
    }

    /// Synthetic medium with prescribed `Σ` and `g`; the angular law is
    /// Henyey–Greenstein (isotropic when `g = 0`).
    pub fn synthetic(dimension: Dimension, sigma_total: f64, g: f64) -> crate::Result<Self> {
        let sampler = if g == 0.0 {
            ScatterSampler::isotropic(dimension)
        } else {
            ScatterSampler::henyey_greenstein(dimension, g)?
        };
        Ok(Self { coefficients: TransportCoefficients::synthetic(dimension, sigma_total, g)?, sampler })
    }
}
