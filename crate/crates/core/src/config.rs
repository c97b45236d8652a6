//! Declarative run configuration (TOML).
//!
//! Unknown keys are rejected. Validation failures name the offending field
//! and, where it can be found, the line it was set on.

use std::f64::consts::FRAC_PI_2;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::boundary::SourceMapMode;
use crate::correlation::{radii_range, Wavefront};
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::medium::{Dimension, ScatteringMedium, SpectrumModel, TabulatedSpectrum};
use crate::scene::{Disk, Domain, Face, RadialProfile, Region, Scene, ShiftField, ShiftRegime};
use crate::transport::{LaunchLaw, McParams};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scene: SceneConfig,
    pub medium: MediumConfig,
    pub engine: EngineConfig,
    #[serde(default)]
    pub wavefront: Option<WavefrontConfig>,
    #[serde(default)]
    pub outputs: OutputConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    #[serde(default = "default_dimension")]
    pub dimension: usize,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub illuminated: Vec<Face>,
    pub measured: Vec<Face>,
    #[serde(default)]
    pub absorbers: Vec<AbsorberConfig>,
    #[serde(default)]
    pub shift: Option<ShiftConfig>,
    /// Half-angle of the collection cone in radians.
    #[serde(default = "default_aperture")]
    pub aperture_half_angle: f64,
}

fn default_dimension() -> usize {
    2
}

fn default_aperture() -> f64 {
    FRAC_PI_2
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbsorberConfig {
    pub center: Vec<f64>,
    pub radius: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftConfig {
    pub regime: ShiftRegime,
    #[serde(default = "default_profile")]
    pub profile: RadialProfile,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
    pub regions: Vec<RegionConfig>,
}

fn default_profile() -> RadialProfile {
    RadialProfile::Bump
}

fn default_amplitude() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    pub center: Vec<f64>,
    #[serde(default)]
    pub inner: f64,
    pub outer: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum MediumConfig {
    /// `Σ` and `g` given directly.
    Synthetic { sigma_total: f64, g: f64 },
    Isotropic { level: f64, wavenumber: f64 },
    Gaussian { correlation_length: f64, wavenumber: f64 },
    Tabulated { path: PathBuf, wavenumber: f64 },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WavefrontConfig {
    #[serde(default)]
    pub center: Vec<f64>,
    #[serde(default = "default_thickness")]
    pub thickness: f64,
    pub radii: RadiiConfig,
}

fn default_thickness() -> f64 {
    0.1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum RadiiConfig {
    List(Vec<f64>),
    Range { start: f64, stop: f64, step: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineKind {
    Mc,
    Diffusion,
    Both,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    pub kind: EngineKind,
    #[serde(default)]
    pub mc: Option<McConfig>,
    #[serde(default)]
    pub diffusion: Option<DiffusionConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub n_packets: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub n_workers: Option<usize>,
    #[serde(default)]
    pub launch: LaunchLaw,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffusionConfig {
    pub grid_spacing: f64,
    #[serde(default = "default_solver_tol")]
    pub solver_tol: f64,
    #[serde(default = "default_source_level")]
    pub source_level: f64,
    #[serde(default)]
    pub source_mode: SourceMapMode,
}

fn default_solver_tol() -> f64 {
    1e-10
}

fn default_source_level() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    #[serde(default)]
    pub field_dump: bool,
    #[serde(default)]
    pub tally_dump: bool,
    #[serde(default = "default_mc_csv")]
    pub mc_csv: String,
    #[serde(default = "default_diffusion_csv")]
    pub diffusion_csv: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: default_directory(),
            field_dump: false,
            tally_dump: false,
            mc_csv: default_mc_csv(),
            diffusion_csv: default_diffusion_csv(),
        }
    }
}

fn default_directory() -> PathBuf {
    PathBuf::from("out")
}

fn default_mc_csv() -> String {
    "curve_mc.csv".into()
}

fn default_diffusion_csv() -> String {
    "curve_diffusion.csv".into()
}

/// 1-based line on which `key` is assigned, if any. A dotted key such as
/// `engine.kind` is looked up inside the `[engine]` table.
fn line_of(text: &str, key: &str) -> Option<usize> {
    let (section, name) = match key.rsplit_once('.') {
        Some((s, k)) => (Some(format!("[{s}]")), k),
        None => (None, key),
    };
    let mut inside = section.is_none();
    for (i, line) in text.lines().enumerate() {
        let l = line.trim();
        if l.starts_with('[') && !l.contains('=') {
            if let Some(s) = &section {
                inside = l == s;
            }
            continue;
        }
        if inside && l.strip_prefix(name).is_some_and(|rest| rest.trim_start().starts_with('=')) {
            return Some(i + 1);
        }
    }
    None
}

/// A validation error tagged with the field name and its line.
fn field_error(text: &str, key: &str, msg: impl std::fmt::Display) -> Error {
    let shown = key.rsplit('.').next().unwrap_or(key);
    match line_of(text, key) {
        Some(line) => Error::Config(format!("line {line}: `{shown}`: {msg}")),
        None => Error::Config(format!("`{shown}`: {msg}")),
    }
}

fn point(v: &[f64], dim: Dimension, text: &str, key: &str) -> Result<Vec3> {
    if v.len() != dim.as_usize() {
        return Err(field_error(text, key, format!("expected {} coordinates, got {}", dim.as_usize(), v.len())));
    }
    let mut p = [0.0; 3];
    p[..v.len()].copy_from_slice(v);
    Ok(p)
}

/// Everything needed to run, resolved from a validated configuration.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub config: RunConfig,
    pub scene: Scene,
    pub medium: ScatteringMedium,
    pub wavefront: Option<(Wavefront, Vec<f64>)>,
    /// Raw text, hashed into the run manifest.
    pub text: String,
}

impl ResolvedConfig {
    pub fn mc_params(&self) -> Option<McParams> {
        self.config.engine.mc.as_ref().map(|m| McParams {
            n_packets: m.n_packets,
            seed: m.seed,
            n_workers: m.n_workers.unwrap_or(1),
            launch: m.launch,
        })
    }
}

/// Reads and validates a configuration file. Relative paths inside the file
/// resolve against its directory.
pub fn parse_config(path: &Path) -> Result<ResolvedConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config_str(&text, path.parent())
}

pub fn parse_config_str(text: &str, base_dir: Option<&Path>) -> Result<ResolvedConfig> {
    let config: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let sc = &config.scene;
    let dim = Dimension::from_usize(sc.dimension).map_err(|e| field_error(text, "dimension", e))?;
    let domain = Domain::new(dim, point(&sc.min, dim, text, "min")?, point(&sc.max, dim, text, "max")?)
        .map_err(|e| field_error(text, "max", e))?;
    let mut absorbers = Vec::with_capacity(sc.absorbers.len());
    for a in &sc.absorbers {
        if !(a.radius > 0.0) {
            return Err(field_error(text, "absorbers", "radius must be positive"));
        }
        absorbers.push(Disk::new(point(&a.center, dim, text, "absorbers")?, a.radius));
    }
    let shift = match &sc.shift {
        None => ShiftField::none(),
        Some(s) => {
            let mut regions = Vec::with_capacity(s.regions.len());
            for r in &s.regions {
                if !(r.inner >= 0.0 && r.outer > r.inner) {
                    return Err(field_error(text, "regions", "need 0 <= inner < outer"));
                }
                regions.push(Region::annulus(point(&r.center, dim, text, "regions")?, r.inner, r.outer));
            }
            ShiftField::new(s.regime, regions, s.amplitude, s.profile).map_err(|e| field_error(text, "regime", e))?
        }
    };
    let scene = Scene::new(
        domain,
        sc.illuminated.clone(),
        sc.measured.clone(),
        absorbers,
        shift,
        sc.aperture_half_angle,
    )
    .map_err(|e| {
        let key = match &e {
            Error::InvalidScene(m) if m.contains("absorber") => "absorbers",
            Error::InvalidScene(m) if m.contains("aperture") => "aperture_half_angle",
            Error::InvalidScene(m) if m.contains("shift") => "regions",
            _ => "measured",
        };
        field_error(text, key, e)
    })?;

    let medium = match &config.medium {
        MediumConfig::Synthetic { sigma_total, g } => ScatteringMedium::synthetic(dim, *sigma_total, *g),
        MediumConfig::Isotropic { level, wavenumber } => {
            ScatteringMedium::from_spectrum(&SpectrumModel::isotropic(*level, dim)?, *wavenumber)
        }
        MediumConfig::Gaussian { correlation_length, wavenumber } => {
            ScatteringMedium::from_spectrum(&SpectrumModel::gaussian(*correlation_length, dim)?, *wavenumber)
        }
        MediumConfig::Tabulated { path, wavenumber } => {
            let full = base_dir.map_or_else(|| path.clone(), |d| d.join(path));
            let table = TabulatedSpectrum::from_file(&full)?;
            let model = SpectrumModel::new(crate::medium::SpectrumKind::Tabulated(table), dim)?;
            ScatteringMedium::from_spectrum(&model, *wavenumber)
        }
    }
    .map_err(|e| field_error(text, "medium.kind", e))?;

    let engine = &config.engine;
    match engine.kind {
        EngineKind::Mc if engine.mc.is_none() || engine.diffusion.is_some() => {
            return Err(field_error(text, "engine.kind", "engine `mc` needs exactly an [engine.mc] block"))
        }
        EngineKind::Diffusion if engine.diffusion.is_none() || engine.mc.is_some() => {
            return Err(field_error(text, "engine.kind", "engine `diffusion` needs exactly an [engine.diffusion] block"))
        }
        EngineKind::Both if engine.mc.is_none() || engine.diffusion.is_none() => {
            return Err(field_error(text, "engine.kind", "engine `both` needs [engine.mc] and [engine.diffusion]"))
        }
        _ => {}
    }
    if let Some(mc) = &engine.mc {
        if mc.n_packets == 0 {
            return Err(field_error(text, "n_packets", "must be at least 1"));
        }
        if mc.n_workers == Some(0) {
            return Err(field_error(text, "n_workers", "must be at least 1"));
        }
    }
    if let Some(d) = &engine.diffusion {
        if !(d.grid_spacing > 0.0) {
            return Err(field_error(text, "grid_spacing", "must be positive"));
        }
        if !(d.solver_tol > 0.0) {
            return Err(field_error(text, "solver_tol", "must be positive"));
        }
        if !(d.source_level >= 0.0) {
            return Err(field_error(text, "source_level", "must be non-negative"));
        }
    }

    let wavefront = match &config.wavefront {
        None => None,
        Some(w) => {
            if !(w.thickness > 0.0) {
                return Err(field_error(text, "thickness", "must be positive"));
            }
            let center = if w.center.is_empty() { [0.0; 3] } else { point(&w.center, dim, text, "center")? };
            let radii = match &w.radii {
                RadiiConfig::List(r) => r.clone(),
                RadiiConfig::Range { start, stop, step } => {
                    radii_range(*start, *stop, *step).map_err(|e| field_error(text, "radii", e))?
                }
            };
            if radii.iter().any(|r| !(*r > 0.0)) {
                return Err(field_error(text, "radii", "must be positive"));
            }
            if radii.windows(2).any(|p| p[1] <= p[0]) {
                return Err(field_error(text, "radii", "must be strictly increasing"));
            }
            let outer = radii.last().copied().unwrap_or(0.0);
            let probe = ShiftField::new(
                ShiftRegime::Large,
                vec![Region::annulus(center, 0.0, outer.max(f64::MIN_POSITIVE))],
                1.0,
                RadialProfile::Bump,
            )?;
            if !radii.is_empty() && scene.with_shift(probe).is_err() {
                return Err(field_error(text, "radii", "largest wavefront leaves the domain"));
            }
            Some((Wavefront { center, thickness: w.thickness }, radii))
        }
    };

    Ok(ResolvedConfig { config, scene, medium, wavefront, text: text.to_string() })
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[scene]
min = [-1.0, -1.0]
max = [1.0, 1.0]
illuminated = ["left"]
measured = ["right"]

[medium]
kind = "synthetic"
sigma_total = 100.0
g = 0.0

[engine]
kind = "diffusion"

[engine.diffusion]
grid_spacing = 0.05

[wavefront]
radii = { start = 0.02, stop = 0.6, step = 0.02 }
"#;

    #[test]
    fn parses_minimal_config() {
        let c = parse_config_str(BASE, None).unwrap();
        let (w, radii) = c.wavefront.unwrap();
        assert_eq!(radii.len(), 30);
        assert_eq!(w.thickness, 0.1);
        assert_eq!(c.scene.illuminated, vec![Face::Left]);
        assert_eq!(c.medium.coefficients.mean_free_path, 0.01);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let text = BASE.replace("g = 0.0", "g = 0.0\ncolour = 3");
        let e = parse_config_str(&text, None).unwrap_err().to_string();
        assert!(e.contains("colour"), "{e}");
    }

    #[test]
    fn overlapping_boundaries_are_reported() {
        let text = BASE.replace(r#"measured = ["right"]"#, r#"measured = ["left"]"#);
        let e = parse_config_str(&text, None).unwrap_err().to_string();
        assert!(e.contains("illuminated and measured boundaries intersect"), "{e}");
        assert!(e.contains("line 6"), "{e}");
    }

    #[test]
    fn decreasing_radii_name_the_field() {
        let text = BASE.replace("radii = { start = 0.02, stop = 0.6, step = 0.02 }", "radii = [0.3, 0.2]");
        let e = parse_config_str(&text, None).unwrap_err().to_string();
        assert!(e.contains("`radii`") && e.contains("line 20"), "{e}");
    }

    #[test]
    fn engine_blocks_must_match_kind() {
        let text = BASE.replace(r#"kind = "diffusion""#, r#"kind = "both""#);
        assert!(parse_config_str(&text, None).is_err());
        let text = BASE.replace("[engine.diffusion]\ngrid_spacing = 0.05", "[engine.mc]\nn_packets = 10");
        assert!(parse_config_str(&text, None).is_err());
    }
}
