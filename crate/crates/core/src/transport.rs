//! Monte Carlo solver for the monokinetic transport equations of the two
//! auto-correlations and the cross-correlation.
//!
//! Every packet carries a unit weight for `W11` (and `W22`, which obeys the
//! same law) and a complex correlation weight for `W12`. Scattering inside the
//! shifted region multiplies the correlation weight by the phase factor of the
//! kernel, or zeroes it in the large-shift regime, where the in-scattering gain
//! of `W12` vanishes.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt::Write as _;
use std::time::Instant;

use num_complex::Complex64;
use rand::distr::{OpenClosed01, Open01};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{self, Vec3};
use crate::medium::{Dimension, ScatteringMedium, TransportCoefficients};
use crate::scene::{Face, Scene, ShiftField, ShiftRegime};

/// Packets simulated per RNG stream. Streams are keyed by batch index, so the
/// tallies do not depend on how batches are spread over workers.
pub const BATCH_SIZE: u64 = 2048;

/// Guard against runaway walks.
const MAX_EVENTS_PER_PACKET: u64 = 1 << 32;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhotonPacket {
    pub position: Vec3,
    pub direction: Vec3,
    pub corr_weight: Complex64,
    pub alive: bool,
}

/// Angular law of the boundary source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LaunchLaw {
    /// Cosine-weighted inward directions.
    #[default]
    Lambertian,
    /// Along the inward normal.
    CollimatedNormal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepEvent {
    Scattered,
    ExitedMeasured(Face),
    ExitedOther(Face),
    Absorbed,
}

fn face_tangents(face: Face, dim: Dimension) -> (Vec3, Vec3) {
    let axis = face.axis();
    let others: Vec<usize> = (0..dim.as_usize()).filter(|&a| a != axis).collect();
    let t1 = geom::unit_axis(others[0]);
    let t2 = if others.len() > 1 { geom::unit_axis(others[1]) } else { [0.0; 3] };
    (t1, t2)
}

/// Draws a packet on the illuminated boundary: face chosen by measure,
/// position uniform on it, direction from the launch law.
pub fn launch_packet<R: Rng + ?Sized>(scene: &Scene, law: LaunchLaw, rng: &mut R) -> PhotonPacket {
    let domain = &scene.domain;
    let dim = domain.dimension;
    let total: f64 = scene.illuminated.iter().map(|&f| domain.face_measure(f)).sum();
    let mut pick = rng.random::<f64>() * total;
    let mut face = *scene.illuminated.last().expect("scene has an illuminated face");
    for &f in &scene.illuminated {
        let m = domain.face_measure(f);
        if pick < m {
            face = f;
            break;
        }
        pick -= m;
    }
    let mut position = [0.0; 3];
    for a in 0..dim.as_usize() {
        position[a] = if a == face.axis() {
            domain.face_coordinate(face)
        } else {
            domain.min[a] + rng.random::<f64>() * domain.extent(a)
        };
    }
    let inward = geom::scale(face.outward_normal(), -1.0);
    let direction = match law {
        LaunchLaw::CollimatedNormal => inward,
        LaunchLaw::Lambertian => {
            let (t1, t2) = face_tangents(face, dim);
            match dim {
                Dimension::D2 => {
                    // Density ∝ cos θ on (-π/2, π/2) has CDF (1 + sin θ)/2.
                    let s = 2.0 * rng.sample::<f64, _>(Open01) - 1.0;
                    let c = (1.0 - s * s).sqrt();
                    geom::normalize(geom::axpy(geom::scale(inward, c), s, t1))
                }
                Dimension::D3 => {
                    let u: f64 = rng.sample(Open01);
                    let c = u.sqrt();
                    let s = (1.0 - u).sqrt();
                    let phi = 2.0 * PI * rng.random::<f64>();
                    let dir = geom::axpy(geom::axpy(geom::scale(inward, c), s * phi.cos(), t1), s * phi.sin(), t2);
                    geom::normalize(dir)
                }
            }
        }
    };
    PhotonPacket { position, direction, corr_weight: Complex64::new(1.0, 0.0), alive: true }
}

/// Distance to the box boundary along `dir` and the face that is hit.
fn distance_to_exit(scene: &Scene, pos: Vec3, dir: Vec3) -> Option<(f64, Face)> {
    let domain = &scene.domain;
    let mut best: Option<(f64, Face)> = None;
    for a in 0..domain.dimension.as_usize() {
        let (t, face) = if dir[a] > 0.0 {
            ((domain.max[a] - pos[a]) / dir[a], Face::ALL[2 * a + 1])
        } else if dir[a] < 0.0 {
            ((domain.min[a] - pos[a]) / dir[a], Face::ALL[2 * a])
        } else {
            continue;
        };
        let t = t.max(0.0);
        if best.is_none_or(|(bt, _)| t < bt) {
            best = Some((t, face));
        }
    }
    best.filter(|(t, _)| t.is_finite())
}

/// Distance to the first absorber entry along `dir`.
fn distance_to_absorber(scene: &Scene, pos: Vec3, dir: Vec3) -> f64 {
    let mut best = f64::INFINITY;
    for a in &scene.absorbers {
        let oc = geom::sub(pos, a.center);
        let c = geom::dot(oc, oc) - a.radius * a.radius;
        if c < 0.0 {
            return 0.0;
        }
        let b = geom::dot(oc, dir);
        if b >= 0.0 {
            continue;
        }
        let disc = b * b - c;
        if disc < 0.0 {
            continue;
        }
        let t = -b - disc.sqrt();
        if t < best {
            best = t.max(0.0);
        }
    }
    best
}

/// Rotates `dir` by the scattering cosine `mu` with uniform azimuth (a random
/// sign in 2D).
fn scatter_direction<R: Rng + ?Sized>(dir: Vec3, mu: f64, dim: Dimension, rng: &mut R) -> Vec3 {
    let sin = (1.0 - mu * mu).max(0.0).sqrt();
    let out = match dim {
        Dimension::D2 => {
            let s = if rng.random::<bool>() { sin } else { -sin };
            [mu * dir[0] - s * dir[1], s * dir[0] + mu * dir[1], 0.0]
        }
        Dimension::D3 => {
            let (u, v) = geom::orthonormal_frame(dir);
            let phi = 2.0 * PI * rng.random::<f64>();
            let perp = geom::axpy(geom::scale(u, phi.cos()), phi.sin(), v);
            geom::axpy(geom::scale(dir, mu), sin, perp)
        }
    };
    geom::normalize(out)
}

/// Applies the kernel phase of a scattering event at the packet position.
pub fn update_correlation_weight(
    packet: &mut PhotonPacket,
    old_dir: Vec3,
    new_dir: Vec3,
    scene: &Scene,
    coeffs: &TransportCoefficients,
) {
    apply_shift(&mut packet.corr_weight, packet.position, old_dir, new_dir, &scene.shift, coeffs);
}

fn apply_shift(
    weight: &mut Complex64,
    position: Vec3,
    old_dir: Vec3,
    new_dir: Vec3,
    shift: &ShiftField,
    coeffs: &TransportCoefficients,
) {
    if *weight == Complex64::new(0.0, 0.0) || !shift.is_active() || !shift.contains(position) {
        return;
    }
    match shift.regime {
        ShiftRegime::None => {}
        ShiftRegime::Large => *weight = Complex64::new(0.0, 0.0),
        ShiftRegime::Small | ShiftRegime::Moderate => {
            let phi = shift.phi(position, coeffs.wavenumber, coeffs.mean_free_path);
            let phase = coeffs.wavenumber * geom::dot(geom::sub(new_dir, old_dir), phi);
            *weight *= Complex64::from_polar(1.0, phase);
        }
    }
}

/// Cosine threshold of the collection cone.
fn aperture_cosine(scene: &Scene) -> f64 {
    if scene.aperture_half_angle >= FRAC_PI_2 {
        0.0
    } else {
        scene.aperture_half_angle.cos()
    }
}

/// Advances the packet to its next event.
pub fn step_packet<R: Rng + ?Sized>(
    packet: &mut PhotonPacket,
    scene: &Scene,
    medium: &ScatteringMedium,
    rng: &mut R,
) -> Result<StepEvent> {
    let mut weights = [packet.corr_weight];
    let ev = advance(packet, &mut weights, std::slice::from_ref(&scene.shift), scene, medium, rng);
    packet.corr_weight = weights[0];
    ev
}

/// One event for a packet carrying a correlation weight per shift field.
fn advance<R: Rng + ?Sized>(
    packet: &mut PhotonPacket,
    weights: &mut [Complex64],
    shifts: &[ShiftField],
    scene: &Scene,
    medium: &ScatteringMedium,
    rng: &mut R,
) -> Result<StepEvent> {
    let coeffs = &medium.coefficients;
    let free_path = -coeffs.mean_free_path * rng.sample::<f64, _>(OpenClosed01).ln();
    let Some((t_exit, face)) = distance_to_exit(scene, packet.position, packet.direction) else {
        packet.alive = false;
        return Err(Error::numerical(
            format!("ray from {:?} along {:?} has no boundary intersection", packet.position, packet.direction),
            f64::NAN,
        ));
    };
    let t_abs = distance_to_absorber(scene, packet.position, packet.direction);
    if free_path < t_exit && free_path < t_abs {
        packet.position = geom::axpy(packet.position, free_path, packet.direction);
        let old = packet.direction;
        let mu = medium.sampler.sample(rng);
        let new = scatter_direction(old, mu, scene.dimension(), rng);
        packet.direction = new;
        for (w, shift) in weights.iter_mut().zip(shifts) {
            apply_shift(w, packet.position, old, new, shift, coeffs);
        }
        return Ok(StepEvent::Scattered);
    }
    packet.alive = false;
    if t_abs <= t_exit {
        packet.position = geom::axpy(packet.position, t_abs, packet.direction);
        return Ok(StepEvent::Absorbed);
    }
    packet.position = geom::axpy(packet.position, t_exit, packet.direction);
    packet.position[face.axis()] = scene.domain.face_coordinate(face);
    let cos_exit = geom::dot(packet.direction, face.outward_normal());
    if scene.measured.contains(&face) && cos_exit > aperture_cosine(scene) {
        Ok(StepEvent::ExitedMeasured(face))
    } else {
        Ok(StepEvent::ExitedOther(face))
    }
}

/// Exit tallies on one measured face.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceTally {
    pub face: Face,
    pub sum_w11: f64,
    pub sum_w12: Complex64,
}

/// Accumulated boundary integrals of `W11` and `W12` over the measured part.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryTally {
    pub n_launched: u64,
    /// Unit-weight exits through the measured boundary within the aperture.
    pub sum_w11: f64,
    pub sum_w11_sq: f64,
    pub sum_w12: Complex64,
    pub sum_w12_re_sq: f64,
    pub sum_w12_im_sq: f64,
    pub sum_w12_re_im: f64,
    pub exits_other: u64,
    pub absorbed: u64,
    /// Packets dropped after a geometric failure.
    pub discarded: u64,
    pub per_face: Vec<FaceTally>,
    pub seed: u64,
    pub runtime_seconds: f64,
}

impl BoundaryTally {
    fn empty(measured: &[Face], seed: u64) -> Self {
        Self {
            n_launched: 0,
            sum_w11: 0.0,
            sum_w11_sq: 0.0,
            sum_w12: Complex64::new(0.0, 0.0),
            sum_w12_re_sq: 0.0,
            sum_w12_im_sq: 0.0,
            sum_w12_re_im: 0.0,
            exits_other: 0,
            absorbed: 0,
            discarded: 0,
            per_face: measured
                .iter()
                .map(|&face| FaceTally { face, sum_w11: 0.0, sum_w12: Complex64::new(0.0, 0.0) })
                .collect(),
            seed,
            runtime_seconds: 0.0,
        }
    }

    fn record_measured(&mut self, face: Face, w: Complex64) {
        self.sum_w11 += 1.0;
        self.sum_w11_sq += 1.0;
        self.sum_w12 += w;
        self.sum_w12_re_sq += w.re * w.re;
        self.sum_w12_im_sq += w.im * w.im;
        self.sum_w12_re_im += w.re * w.im;
        if let Some(ft) = self.per_face.iter_mut().find(|ft| ft.face == face) {
            ft.sum_w11 += 1.0;
            ft.sum_w12 += w;
        }
    }

    fn merge(mut self, other: &Self) -> Self {
        self.n_launched += other.n_launched;
        self.sum_w11 += other.sum_w11;
        self.sum_w11_sq += other.sum_w11_sq;
        self.sum_w12 += other.sum_w12;
        self.sum_w12_re_sq += other.sum_w12_re_sq;
        self.sum_w12_im_sq += other.sum_w12_im_sq;
        self.sum_w12_re_im += other.sum_w12_re_im;
        self.exits_other += other.exits_other;
        self.absorbed += other.absorbed;
        self.discarded += other.discarded;
        for (a, b) in self.per_face.iter_mut().zip(&other.per_face) {
            a.sum_w11 += b.sum_w11;
            a.sum_w12 += b.sum_w12;
        }
        self
    }

    /// Packets that left through any boundary.
    pub fn total_exits(&self) -> u64 {
        self.sum_w11 as u64 + self.exits_other
    }

    /// Plain-text `key = value` record.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# boundary tally");
        let _ = writeln!(s, "n_launched = {}", self.n_launched);
        let _ = writeln!(s, "sum_w11 = {:e}", self.sum_w11);
        let _ = writeln!(s, "sum_w11_sq = {:e}", self.sum_w11_sq);
        let _ = writeln!(s, "sum_w12_re = {:e}", self.sum_w12.re);
        let _ = writeln!(s, "sum_w12_im = {:e}", self.sum_w12.im);
        let _ = writeln!(s, "sum_w12_re_sq = {:e}", self.sum_w12_re_sq);
        let _ = writeln!(s, "sum_w12_im_sq = {:e}", self.sum_w12_im_sq);
        let _ = writeln!(s, "sum_w12_re_im = {:e}", self.sum_w12_re_im);
        let _ = writeln!(s, "exits_other = {}", self.exits_other);
        let _ = writeln!(s, "absorbed = {}", self.absorbed);
        let _ = writeln!(s, "discarded = {}", self.discarded);
        for ft in &self.per_face {
            let _ = writeln!(
                s,
                "face.{} = {:e} {:e} {:e}",
                ft.face.name(),
                ft.sum_w11,
                ft.sum_w12.re,
                ft.sum_w12.im
            );
        }
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "runtime_seconds = {:.6}", self.runtime_seconds);
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut t = Self::empty(&[], 0);
        let mut re = 0.0;
        let mut im = 0.0;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |what: &str| Error::invalid(format!("tally line {}: {what}", lineno + 1));
            let (key, value) = line.split_once('=').ok_or_else(|| bad("expected key = value"))?;
            let key = key.trim();
            let value = value.trim();
            let float = |v: &str| v.parse::<f64>().map_err(|_| bad("not a number"));
            let int = |v: &str| v.parse::<u64>().map_err(|_| bad("not an integer"));
            match key {
                "n_launched" => t.n_launched = int(value)?,
                "sum_w11" => t.sum_w11 = float(value)?,
                "sum_w11_sq" => t.sum_w11_sq = float(value)?,
                "sum_w12_re" => re = float(value)?,
                "sum_w12_im" => im = float(value)?,
                "sum_w12_re_sq" => t.sum_w12_re_sq = float(value)?,
                "sum_w12_im_sq" => t.sum_w12_im_sq = float(value)?,
                "sum_w12_re_im" => t.sum_w12_re_im = float(value)?,
                "exits_other" => t.exits_other = int(value)?,
                "absorbed" => t.absorbed = int(value)?,
                "discarded" => t.discarded = int(value)?,
                "seed" => t.seed = int(value)?,
                "runtime_seconds" => t.runtime_seconds = float(value)?,
                k if k.starts_with("face.") => {
                    let face = Face::ALL
                        .into_iter()
                        .find(|f| f.name() == &k[5..])
                        .ok_or_else(|| bad("unknown face"))?;
                    let v: Vec<f64> = value.split_whitespace().map(float).collect::<Result<_>>()?;
                    if v.len() != 3 {
                        return Err(bad("face entry needs three numbers"));
                    }
                    t.per_face.push(FaceTally { face, sum_w11: v[0], sum_w12: Complex64::new(v[1], v[2]) });
                }
                _ => return Err(bad("unknown key")),
            }
        }
        t.sum_w12 = Complex64::new(re, im);
        Ok(t)
    }
}

/// Monte Carlo run parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McParams {
    pub n_packets: u64,
    pub seed: u64,
    pub n_workers: usize,
    pub launch: LaunchLaw,
}

impl McParams {
    pub fn new(n_packets: u64, seed: u64) -> Self {
        Self { n_packets, seed, n_workers: 1, launch: LaunchLaw::Lambertian }
    }

    pub fn workers(mut self, n: usize) -> Self {
        self.n_workers = n;
        self
    }

    pub fn launch(mut self, law: LaunchLaw) -> Self {
        self.launch = law;
        self
    }
}

fn run_batch(
    scene: &Scene,
    shifts: &[ShiftField],
    medium: &ScatteringMedium,
    params: &McParams,
    batch: u64,
) -> Vec<BoundaryTally> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(batch);
    let start = batch * BATCH_SIZE;
    let count = BATCH_SIZE.min(params.n_packets - start);
    let mut tallies = vec![BoundaryTally::empty(&scene.measured, params.seed); shifts.len()];
    let mut weights = vec![Complex64::new(1.0, 0.0); shifts.len()];
    for _ in 0..count {
        let mut packet = launch_packet(scene, params.launch, &mut rng);
        weights.fill(packet.corr_weight);
        let mut events = 0u64;
        let outcome = loop {
            events += 1;
            if events > MAX_EVENTS_PER_PACKET {
                break None;
            }
            match advance(&mut packet, &mut weights, shifts, scene, medium, &mut rng) {
                Ok(StepEvent::Scattered) => continue,
                Ok(ev) => break Some(ev),
                Err(_) => break None,
            }
        };
        for (t, &w) in tallies.iter_mut().zip(&weights) {
            t.n_launched += 1;
            match outcome {
                Some(StepEvent::ExitedMeasured(face)) => t.record_measured(face, w),
                Some(StepEvent::ExitedOther(_)) => t.exits_other += 1,
                Some(StepEvent::Absorbed) => t.absorbed += 1,
                Some(StepEvent::Scattered) | None => t.discarded += 1,
            }
        }
    }
    tallies
}

/// Fixed-order pairwise reduction.
fn pairwise_merge(mut parts: Vec<BoundaryTally>) -> Option<BoundaryTally> {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(a.merge(&b)),
                None => next.push(a),
            }
        }
        parts = next;
    }
    parts.pop()
}

/// Simulates `n_packets` independent packets and tallies the measured exits.
pub fn run_transport(scene: &Scene, medium: &ScatteringMedium, params: &McParams) -> Result<BoundaryTally> {
    let mut out = run_transport_shifts(scene, std::slice::from_ref(&scene.shift), medium, params)?;
    Ok(out.remove(0))
}

/// Runs the packets of `scene` once and tallies `W12` for every shift field.
///
/// Trajectories do not depend on the shift, so entry `n` is bit-identical to
/// [`run_transport`] on `scene.with_shift(shifts[n])` with the same seed.
pub fn run_transport_shifts(
    scene: &Scene,
    shifts: &[ShiftField],
    medium: &ScatteringMedium,
    params: &McParams,
) -> Result<Vec<BoundaryTally>> {
    if params.n_packets == 0 {
        return Err(Error::invalid("n_packets must be at least 1"));
    }
    if scene.measured.is_empty() {
        return Err(Error::InvalidScene("no measured boundary".into()));
    }
    if scene.illuminated.is_empty() {
        return Err(Error::InvalidScene("no illuminated boundary".into()));
    }
    if medium.coefficients.dimension != scene.dimension() || medium.sampler.dimension() != scene.dimension() {
        return Err(Error::invalid("medium and scene dimensions differ"));
    }
    if shifts.is_empty() {
        return Ok(Vec::new());
    }
    for s in shifts {
        scene.with_shift(s.clone())?;
    }
    let clock = Instant::now();
    let n_batches = params.n_packets.div_ceil(BATCH_SIZE);
    let workers = params.n_workers.max(1);
    let parts: Vec<Vec<BoundaryTally>> = if workers == 1 {
        (0..n_batches).map(|b| run_batch(scene, shifts, medium, params, b)).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
        pool.install(|| {
            (0..n_batches).into_par_iter().map(|b| run_batch(scene, shifts, medium, params, b)).collect()
        })
    };
    let mut per_shift: Vec<Vec<BoundaryTally>> = vec![Vec::with_capacity(parts.len()); shifts.len()];
    for batch in parts {
        for (slot, t) in per_shift.iter_mut().zip(batch) {
            slot.push(t);
        }
    }
    let runtime = clock.elapsed().as_secs_f64();
    Ok(per_shift
        .into_iter()
        .map(|p| {
            let mut t = pairwise_merge(p).expect("at least one batch");
            t.seed = params.seed;
            t.runtime_seconds = runtime;
            t
        })
        .collect())
}
