//! Physical setup: domain box, boundary roles, absorbers and the shift field.
//!
//! Region membership is closed on inner edges and open on outer edges: an
//! annulus holds `r_inner <= r < r_outer`, a disk holds `r < radius`.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{self, Vec3};
use crate::medium::Dimension;

/// A face of the axis-aligned domain box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Face {
    /// `x = x_min`
    Left,
    /// `x = x_max`
    Right,
    /// `y = y_min`
    Bottom,
    /// `y = y_max`
    Top,
    /// `z = z_min` (3D only)
    Back,
    /// `z = z_max` (3D only)
    Front,
}

impl Face {
    pub const ALL: [Face; 6] = [Face::Left, Face::Right, Face::Bottom, Face::Top, Face::Back, Face::Front];

    pub fn all(dim: Dimension) -> &'static [Face] {
        match dim {
            Dimension::D2 => &Self::ALL[..4],
            Dimension::D3 => &Self::ALL,
        }
    }

    pub fn axis(self) -> usize {
        match self {
            Face::Left | Face::Right => 0,
            Face::Bottom | Face::Top => 1,
            Face::Back | Face::Front => 2,
        }
    }

    pub fn is_upper(self) -> bool {
        matches!(self, Face::Right | Face::Top | Face::Front)
    }

    pub fn outward_normal(self) -> Vec3 {
        let mut n = [0.0; 3];
        n[self.axis()] = if self.is_upper() { 1.0 } else { -1.0 };
        n
    }

    pub fn name(self) -> &'static str {
        match self {
            Face::Left => "left",
            Face::Right => "right",
            Face::Bottom => "bottom",
            Face::Top => "top",
            Face::Back => "back",
            Face::Front => "front",
        }
    }
}

/// Axis-aligned box. In 2D the `z` bounds are ignored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    pub dimension: Dimension,
    pub min: Vec3,
    pub max: Vec3,
}

impl Domain {
    pub fn new(dimension: Dimension, min: Vec3, max: Vec3) -> Result<Self> {
        for a in 0..dimension.as_usize() {
            if !(min[a].is_finite() && max[a].is_finite() && max[a] > min[a]) {
                return Err(Error::InvalidScene(format!("domain extent along axis {a} is empty")));
            }
        }
        let (mut min, mut max) = (min, max);
        if dimension == Dimension::D2 {
            min[2] = 0.0;
            max[2] = 0.0;
        }
        Ok(Self { dimension, min, max })
    }

    /// The square `(-1, 1)²`.
    pub fn unit_square_centered() -> Self {
        Self { dimension: Dimension::D2, min: [-1.0, -1.0, 0.0], max: [1.0, 1.0, 0.0] }
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.max[axis] - self.min[axis]
    }

    /// Length (2D) or area (3D) of a face.
    pub fn face_measure(&self, face: Face) -> f64 {
        (0..self.dimension.as_usize()).filter(|&a| a != face.axis()).map(|a| self.extent(a)).product()
    }

    pub fn face_coordinate(&self, face: Face) -> f64 {
        if face.is_upper() {
            self.max[face.axis()]
        } else {
            self.min[face.axis()]
        }
    }

    pub fn contains(&self, x: Vec3) -> bool {
        (0..self.dimension.as_usize()).all(|a| x[a] >= self.min[a] && x[a] <= self.max[a])
    }

    /// True when the ball of radius `r` around `c` lies in the open box.
    fn strictly_contains_ball(&self, c: Vec3, r: f64) -> bool {
        (0..self.dimension.as_usize()).all(|a| c[a] - r > self.min[a] && c[a] + r < self.max[a])
    }
}

/// Disk (2D) or ball (3D).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disk {
    pub center: Vec3,
    pub radius: f64,
}

impl Disk {
    pub fn new(center: Vec3, radius: f64) -> Self {
        Self { center, radius }
    }

    #[inline]
    pub fn contains(&self, x: Vec3) -> bool {
        geom::norm(geom::sub(x, self.center)) < self.radius
    }
}

/// Primitive region of a shift support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Region {
    Disk(Disk),
    Annulus { center: Vec3, r_inner: f64, r_outer: f64 },
}

impl Region {
    /// Annulus with the inner radius clamped at zero; collapses to a disk.
    pub fn annulus(center: Vec3, r_inner: f64, r_outer: f64) -> Self {
        if r_inner <= 0.0 {
            Region::Disk(Disk::new(center, r_outer))
        } else {
            Region::Annulus { center, r_inner, r_outer }
        }
    }

    pub fn center(&self) -> Vec3 {
        match self {
            Region::Disk(d) => d.center,
            Region::Annulus { center, .. } => *center,
        }
    }

    pub fn inner_radius(&self) -> f64 {
        match self {
            Region::Disk(_) => 0.0,
            Region::Annulus { r_inner, .. } => *r_inner,
        }
    }

    pub fn outer_radius(&self) -> f64 {
        match self {
            Region::Disk(d) => d.radius,
            Region::Annulus { r_outer, .. } => *r_outer,
        }
    }

    #[inline]
    pub fn contains(&self, x: Vec3) -> bool {
        let r = geom::norm(geom::sub(x, self.center()));
        r >= self.inner_radius() && r < self.outer_radius()
    }

    fn contains_closed(&self, x: Vec3) -> bool {
        let r = geom::norm(geom::sub(x, self.center()));
        r >= self.inner_radius() && r <= self.outer_radius()
    }
}

/// Size of the shift relative to the wavelength.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShiftRegime {
    None,
    /// `|k||φ|` of the order of the mean free path.
    Small,
    /// `|k||φ|` of order one.
    Moderate,
    /// `|k||φ| ≫ 1`.
    Large,
}

/// Radial envelope of the displacement inside each support region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RadialProfile {
    /// Envelope `≡ 1`.
    Constant,
    /// `16 s² (1 - s)²` in the normalized radius `s` across the region; C¹,
    /// vanishing with its derivative on both edges, peak 1 at mid-width.
    Bump,
    /// Rigid translation `ψ = A x̂` instead of a radial field; divergence-free
    /// inside the support.
    Translation,
}

/// Displacement field `ψ(x) = A · envelope(r) · r̂` (or a rigid translation),
/// supported on a union of regions. Radii are measured from the centre of the
/// containing region.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftField {
    pub regime: ShiftRegime,
    pub support: Vec<Region>,
    pub amplitude: f64,
    pub profile: RadialProfile,
}

impl ShiftField {
    pub fn none() -> Self {
        Self { regime: ShiftRegime::None, support: Vec::new(), amplitude: 0.0, profile: RadialProfile::Bump }
    }

    pub fn new(regime: ShiftRegime, support: Vec<Region>, amplitude: f64, profile: RadialProfile) -> Result<Self> {
        if regime == ShiftRegime::None && (!support.is_empty() || amplitude != 0.0) {
            return Err(Error::InvalidScene("shift regime none requires an empty support and zero amplitude".into()));
        }
        for r in &support {
            if !(r.outer_radius() > r.inner_radius() && r.inner_radius() >= 0.0 && r.outer_radius().is_finite()) {
                return Err(Error::InvalidScene(format!("shift region {r:?} is empty")));
            }
        }
        if !amplitude.is_finite() {
            return Err(Error::InvalidScene("shift amplitude must be finite".into()));
        }
        Ok(Self { regime, support, amplitude, profile })
    }

    pub fn is_active(&self) -> bool {
        self.regime != ShiftRegime::None && !self.support.is_empty()
    }

    pub fn contains(&self, x: Vec3) -> bool {
        self.support.iter().any(|r| r.contains(x))
    }

    fn envelope(&self, s: f64) -> (f64, f64) {
        match self.profile {
            RadialProfile::Constant | RadialProfile::Translation => (1.0, 0.0),
            RadialProfile::Bump => {
                let q = s * (1.0 - s);
                (16.0 * q * q, 32.0 * q * (1.0 - 2.0 * s))
            }
        }
    }

    /// `ψ(x)`.
    pub fn psi(&self, x: Vec3) -> Vec3 {
        if self.regime == ShiftRegime::None {
            return [0.0; 3];
        }
        let Some(region) = self.support.iter().find(|r| r.contains(x)) else {
            return [0.0; 3];
        };
        if self.profile == RadialProfile::Translation {
            return [self.amplitude, 0.0, 0.0];
        }
        let offset = geom::sub(x, region.center());
        let r = geom::norm(offset);
        if r == 0.0 {
            return [0.0; 3];
        }
        let width = region.outer_radius() - region.inner_radius();
        let (env, _) = self.envelope((r - region.inner_radius()) / width);
        geom::scale(offset, self.amplitude * env / r)
    }

    /// `∇·ψ(x)` for a radial field: `F'(r) + (d - 1) F(r) / r`. Points on a
    /// region edge take the limit from inside the region.
    pub fn divergence(&self, x: Vec3, dim: Dimension) -> f64 {
        if self.regime == ShiftRegime::None || self.profile == RadialProfile::Translation {
            return 0.0;
        }
        let Some(region) = self.support.iter().find(|r| r.contains_closed(x)) else {
            return 0.0;
        };
        let r = geom::norm(geom::sub(x, region.center()));
        let width = region.outer_radius() - region.inner_radius();
        let (env, denv) = self.envelope((r - region.inner_radius()) / width);
        let d = dim.as_usize() as f64;
        if r == 0.0 {
            return match self.profile {
                // F(r) ~ 16 A (r/R)²: the divergence vanishes at the centre.
                RadialProfile::Bump => 0.0,
                RadialProfile::Translation => 0.0,
                RadialProfile::Constant => f64::INFINITY.copysign(self.amplitude),
            };
        }
        self.amplitude * (denv / width + (d - 1.0) * env / r)
    }

    /// Physical displacement `φ(x)` given `|k|` and the mean free path.
    pub fn phi(&self, x: Vec3, k_mag: f64, mean_free_path: f64) -> Vec3 {
        let psi = self.psi(x);
        match self.regime {
            ShiftRegime::None => [0.0; 3],
            ShiftRegime::Small => geom::scale(psi, mean_free_path / k_mag),
            ShiftRegime::Moderate | ShiftRegime::Large => geom::scale(psi, 1.0 / k_mag),
        }
    }
}

/// Complete scene.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub domain: Domain,
    pub illuminated: Vec<Face>,
    pub measured: Vec<Face>,
    pub absorbers: Vec<Disk>,
    pub shift: ShiftField,
    pub aperture_half_angle: f64,
}

impl Scene {
    pub fn new(
        domain: Domain,
        illuminated: Vec<Face>,
        measured: Vec<Face>,
        absorbers: Vec<Disk>,
        shift: ShiftField,
        aperture_half_angle: f64,
    ) -> Result<Self> {
        let scene = Self { domain, illuminated, measured, absorbers, shift, aperture_half_angle };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        let faces = Face::all(self.domain.dimension);
        for f in self.illuminated.iter().chain(&self.measured) {
            if !faces.contains(f) {
                return Err(Error::InvalidScene(format!("face {} does not exist in 2D", f.name())));
            }
        }
        if self.illuminated.iter().any(|f| self.measured.contains(f)) {
            return Err(Error::InvalidScene("illuminated and measured boundaries intersect".into()));
        }
        for a in &self.absorbers {
            if !(a.radius > 0.0 && self.domain.strictly_contains_ball(a.center, a.radius)) {
                return Err(Error::InvalidScene(format!(
                    "absorber at {:?} with radius {} is not strictly inside the domain",
                    a.center, a.radius
                )));
            }
        }
        for r in &self.shift.support {
            if !self.domain.strictly_contains_ball(r.center(), r.outer_radius()) {
                return Err(Error::InvalidScene(format!("shift support {r:?} is not strictly inside the domain")));
            }
        }
        if !(self.aperture_half_angle > 0.0 && self.aperture_half_angle <= FRAC_PI_2) {
            return Err(Error::InvalidScene(format!(
                "aperture half-angle {} outside (0, π/2]",
                self.aperture_half_angle
            )));
        }
        Ok(())
    }

    pub fn dimension(&self) -> Dimension {
        self.domain.dimension
    }

    /// Same scene with a different shift field.
    pub fn with_shift(&self, shift: ShiftField) -> Result<Self> {
        Self::new(
            self.domain,
            self.illuminated.clone(),
            self.measured.clone(),
            self.absorbers.clone(),
            shift,
            self.aperture_half_angle,
        )
    }

    pub fn contains_shift(&self, x: Vec3) -> bool {
        self.shift.is_active() && self.shift.contains(x)
    }

    pub fn psi_divergence(&self, x: Vec3) -> f64 {
        self.shift.divergence(x, self.domain.dimension)
    }

    pub fn in_absorber(&self, x: Vec3) -> bool {
        self.absorbers.iter().any(|a| a.contains(x))
    }
}

/// Shift fields for a sequence of circular wavefronts `S(r_n)`.
///
/// Entry `n` is supported on the union of the wavefront bands at the two
/// instants `n - 1` and `n`, each band being the annulus of the given
/// thickness just inside its front. Inner radii clamp at zero.
pub fn wavefront_sequence(center: Vec3, radii: &[f64], thickness: f64) -> Result<Vec<ShiftField>> {
    if !(thickness.is_finite() && thickness > 0.0) {
        return Err(Error::invalid(format!("wavefront thickness must be positive, got {thickness}")));
    }
    if radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
        return Err(Error::invalid("radii must be positive"));
    }
    if radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("radii must be strictly increasing"));
    }
    let mut out = Vec::with_capacity(radii.len());
    for (n, &r) in radii.iter().enumerate() {
        let current = ((r - thickness).max(0.0), r);
        let support = match n.checked_sub(1).map(|p| radii[p]) {
            Some(prev) => {
                let previous = ((prev - thickness).max(0.0), prev);
                if current.0 <= previous.1 {
                    vec![Region::annulus(center, previous.0.min(current.0), current.1)]
                } else {
                    vec![Region::annulus(center, previous.0, previous.1), Region::annulus(center, current.0, current.1)]
                }
            }
            None => vec![Region::annulus(center, current.0, current.1)],
        };
        out.push(ShiftField::new(ShiftRegime::Large, support, 1.0, RadialProfile::Bump)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn annulus_field() -> ShiftField {
        ShiftField::new(
            ShiftRegime::Moderate,
            vec![Region::annulus([0.0; 3], 0.1, 0.3)],
            1.0,
            RadialProfile::Bump,
        )
        .unwrap()
    }

    #[test]
    fn annulus_membership_edges() {
        let f = annulus_field();
        assert!(f.contains([0.2, 0.0, 0.0]));
        assert!(!f.contains([0.05, 0.0, 0.0]));
        assert!(!f.contains([0.3 + 1e-9, 0.0, 0.0]));
        assert!(f.contains([0.3 - 1e-9, 0.0, 0.0]));
        assert!(f.contains([0.1, 0.0, 0.0]));
        assert!(!f.contains([0.1 - 1e-9, 0.0, 0.0]));
    }

    #[test]
    fn divergence_vanishes_outside_support() {
        let f = annulus_field();
        assert_eq!(f.divergence([0.5, 0.0, 0.0], Dimension::D2), 0.0);
        assert_eq!(f.divergence([0.01, 0.0, 0.0], Dimension::D2), 0.0);
        assert_eq!(ShiftField::none().divergence([0.2, 0.0, 0.0], Dimension::D2), 0.0);
    }

    #[test]
    fn translation_is_divergence_free() {
        let f = ShiftField::new(
            ShiftRegime::Small,
            vec![Region::annulus([0.0; 3], 0.0, 0.4)],
            0.7,
            RadialProfile::Translation,
        )
        .unwrap();
        assert_eq!(f.psi([0.1, 0.2, 0.0]), [0.7, 0.0, 0.0]);
        assert_eq!(f.psi([0.5, 0.0, 0.0]), [0.0; 3]);
        assert_eq!(f.divergence([0.1, 0.2, 0.0], Dimension::D2), 0.0);
        assert_eq!(f.divergence([0.0; 3], Dimension::D3), 0.0);
    }

    #[test]
    fn constant_radial_divergence_is_amplitude_over_r() {
        let f = ShiftField::new(
            ShiftRegime::Small,
            vec![Region::annulus([0.0; 3], 0.1, 0.5)],
            2.5,
            RadialProfile::Constant,
        )
        .unwrap();
        for r in [0.1, 0.2, 0.35, 0.5] {
            let x = [r * 0.6, r * 0.8, 0.0];
            assert!((f.divergence(x, Dimension::D2) - 2.5 / r).abs() < 1e-12);
            assert!((f.divergence(x, Dimension::D3) - 5.0 / r).abs() < 1e-12);
        }
    }

    #[test]
    fn psi_is_radial_and_supported_on_the_region() {
        let f = annulus_field();
        let p = f.psi([0.0, 0.2, 0.0]);
        assert!(p[0].abs() < 1e-15 && (p[1] - 1.0).abs() < 1e-12);
        assert_eq!(f.psi([0.0, 0.31, 0.0]), [0.0; 3]);
    }

    #[test]
    fn scene_rejects_overlapping_roles() {
        let err = Scene::new(
            Domain::unit_square_centered(),
            vec![Face::Left],
            vec![Face::Left],
            vec![],
            ShiftField::none(),
            FRAC_PI_2,
        )
        .unwrap_err();
        assert!(err.to_string().contains("illuminated and measured boundaries intersect"));
    }

    #[test]
    fn scene_rejects_absorbers_touching_the_boundary() {
        let r = Scene::new(
            Domain::unit_square_centered(),
            vec![Face::Left],
            vec![Face::Right],
            vec![Disk::new([0.5, 0.0, 0.0], 0.5)],
            ShiftField::none(),
            FRAC_PI_2,
        );
        assert!(r.is_err());
    }

    #[test]
    fn none_regime_requires_empty_support() {
        assert!(ShiftField::new(ShiftRegime::None, vec![Region::annulus([0.0; 3], 0.0, 0.1)], 0.0, RadialProfile::Bump)
            .is_err());
    }

    #[test]
    fn wavefronts_match_figure_radii() {
        let seq = wavefront_sequence([0.0; 3], &[0.1, 0.3, 0.5], 0.1).unwrap();
        let outer: Vec<f64> =
            seq.iter().map(|s| s.support.iter().map(Region::outer_radius).fold(0.0, f64::max)).collect();
        assert_eq!(outer, vec![0.1, 0.3, 0.5]);
        assert!(wavefront_sequence([0.0; 3], &[], 0.1).unwrap().is_empty());
        let single = wavefront_sequence([0.0; 3], &[0.2], 0.2).unwrap();
        assert_eq!(single[0].support, vec![Region::Disk(Disk::new([0.0; 3], 0.2))]);
        assert!(wavefront_sequence([0.0; 3], &[0.3, 0.2], 0.1).is_err());
    }

    #[test]
    fn consecutive_wavefronts_merge_overlapping_bands() {
        let seq = wavefront_sequence([0.0; 3], &[0.3, 0.35], 0.1).unwrap();
        assert_eq!(seq[1].support.len(), 1);
        assert!((seq[1].support[0].inner_radius() - 0.2).abs() < 1e-15);
        assert_eq!(seq[1].support[0].outer_radius(), 0.35);
        let seq = wavefront_sequence([0.0; 3], &[0.3, 0.5], 0.1).unwrap();
        assert_eq!(seq[1].support.len(), 2);
    }
}
