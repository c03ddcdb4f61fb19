//! Image-source room impulse responses for a shoebox room.
//!
//! Walls share one pressure reflection coefficient `sqrt(1 - α)`, with the
//! absorption `α` obtained from T60 by Sabine's formula. Each image contributes a Hann-windowed sinc pulse of
//! [`SINC_TAPS`] taps centred at its fractional delay. An image whose window
//! starts at or beyond the response length is skipped, so a response of length
//! `W` is a bit-exact prefix of the same response simulated at any `W' > W`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::subspace::TrainingSet;

pub type Point = [f64; 3];

pub const SPEED_OF_SOUND: f64 = 343.0;

/// Length of the fractional-delay interpolation pulse.
pub const SINC_TAPS: usize = 81;
const HALF_TAPS: i64 = (SINC_TAPS as i64 - 1) / 2;
/// Hann window half-width; every tap of the pulse lies strictly inside.
const WINDOW_HALF_WIDTH: f64 = HALF_TAPS as f64 + 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomSpec {
    /// Room size in metres.
    pub dimensions: [f64; 3],
    /// Reverberation time in seconds.
    pub t60: f64,
    pub sample_rate: f64,
    /// Impulse response length `W` in taps.
    pub rir_len: usize,
}

impl RoomSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dimensions.iter().any(|&d| !(d.is_finite() && d > 0.0)) {
            return Err(Error::invalid("room dimensions must be positive"));
        }
        if !(self.t60.is_finite() && self.t60 > 0.0) {
            return Err(Error::invalid("t60 must be positive"));
        }
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if self.rir_len == 0 {
            return Err(Error::invalid("impulse response length must be >= 1"));
        }
        if self.absorption() >= 1.0 {
            return Err(Error::invalid(format!("t60 {} s is too short for this room", self.t60)));
        }
        Ok(())
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.iter().zip(&self.dimensions).all(|(&x, &d)| x > 0.0 && x < d)
    }

    pub fn volume(&self) -> f64 {
        self.dimensions.iter().product()
    }

    pub fn surface(&self) -> f64 {
        let [x, y, z] = self.dimensions;
        2.0 * (x * y + x * z + y * z)
    }

    /// Sabine absorption coefficient implied by T60.
    pub fn absorption(&self) -> f64 {
        24.0 * std::f64::consts::LN_10 * self.volume() / (SPEED_OF_SOUND * self.surface() * self.t60)
    }

    /// Pressure reflection coefficient `sqrt(1 - α)`.
    pub fn reflection_coefficient(&self) -> f64 {
        (1.0 - self.absorption()).sqrt()
    }

    /// Image index bound covering the whole response window.
    pub fn max_order(&self) -> i64 {
        let reach = SPEED_OF_SOUND * self.rir_len as f64 / self.sample_rate;
        let min_dim = self.dimensions.iter().cloned().fold(f64::INFINITY, f64::min);
        (reach / min_dim).ceil() as i64 + 1
    }

    pub fn with_rir_len(&self, rir_len: usize) -> Self {
        Self { rir_len, ..self.clone() }
    }
}

/// Loudspeaker array and the spherical segment the microphone moves in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneGeometry {
    pub loudspeakers: Vec<Point>,
    pub array_center: Point,
    /// Radius range `[r_min, r_max]` in metres.
    pub radius: [f64; 2],
    /// Azimuth range in degrees.
    pub azimuth_deg: [f64; 2],
    /// Elevation range in degrees.
    pub elevation_deg: [f64; 2],
}

impl SceneGeometry {
    /// Two loudspeakers 10 cm apart, microphone 1.2-1.4 m away in front.
    pub fn reference() -> Self {
        Self {
            loudspeakers: vec![[2.95, 2.0, 1.2], [3.05, 2.0, 1.2]],
            array_center: [3.0, 2.0, 1.2],
            radius: [1.2, 1.4],
            azimuth_deg: [45.0, 135.0],
            elevation_deg: [-5.0, 40.0],
        }
    }

    pub fn validate(&self, room: &RoomSpec) -> Result<()> {
        if self.loudspeakers.is_empty() {
            return Err(Error::invalid("at least one loudspeaker is required"));
        }
        if let Some(p) = self.loudspeakers.iter().find(|p| !room.contains(p)) {
            return Err(Error::invalid(format!("loudspeaker {p:?} is outside the room")));
        }
        if !room.contains(&self.array_center) {
            return Err(Error::invalid("array centre is outside the room"));
        }
        let ordered = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] <= r[1];
        if !ordered(self.radius) || self.radius[0] < 0.0 {
            return Err(Error::invalid("radius range must satisfy 0 <= r_min <= r_max"));
        }
        if !ordered(self.azimuth_deg) || !ordered(self.elevation_deg) {
            return Err(Error::invalid("angle ranges must be ordered"));
        }
        if self.elevation_deg[0] < -90.0 || self.elevation_deg[1] > 90.0 {
            return Err(Error::invalid("elevation must lie in [-90, 90] degrees"));
        }
        Ok(())
    }

    /// Point at spherical coordinates relative to the array centre.
    pub fn point_at(&self, r: f64, azimuth_deg: f64, elevation_deg: f64) -> Point {
        let (th, ph) = (azimuth_deg.to_radians(), elevation_deg.to_radians());
        let c = self.array_center;
        [c[0] + r * ph.cos() * th.cos(), c[1] + r * ph.cos() * th.sin(), c[2] + r * ph.sin()]
    }
}

/// One MISO impulse response set: a response per loudspeaker.
#[derive(Debug, Clone, PartialEq)]
pub struct AirSample {
    pub channels: Vec<Vec<f64>>,
    pub mic: Point,
}

impl AirSample {
    /// Stacks the first `taps` samples of every channel.
    pub fn truncated(&self, taps: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(taps * self.channels.len());
        for ch in &self.channels {
            out.extend(ch.iter().take(taps));
            out.extend(std::iter::repeat_n(0.0, taps.saturating_sub(ch.len())));
        }
        out
    }
}

pub fn simulate_rir(room: &RoomSpec, source: &Point, mic: &Point) -> Result<Vec<f64>> {
    simulate_rir_with_reflection(room, source, mic, room.reflection_coefficient())
}

/// Image-source response with an explicit wall reflection coefficient.
pub fn simulate_rir_with_reflection(room: &RoomSpec, source: &Point, mic: &Point, beta: f64) -> Result<Vec<f64>> {
    room.validate()?;
    if !room.contains(source) || !room.contains(mic) {
        return Err(Error::invalid("source and microphone must lie inside the room"));
    }
    if dist(source, mic) < 1e-9 {
        return Err(Error::invalid("source and microphone coincide"));
    }
    let w_len = room.rir_len as i64;
    let samples_per_metre = room.sample_rate / SPEED_OF_SOUND;
    let order = room.max_order();
    // Images further away than this cannot reach the first `w_len` taps.
    let reach = (w_len + HALF_TAPS + 1) as f64 / samples_per_metre;
    let reach2 = reach * reach;
    let kernel = window_rotations();
    let mut out = vec![0.0; room.rir_len];

    let offsets = |axis: usize, m: i64, q: i64| -> f64 {
        let sign = if q == 0 { 1.0 } else { -1.0 };
        sign * source[axis] + 2.0 * m as f64 * room.dimensions[axis] - mic[axis]
    };
    for mx in -order..=order {
        for qx in 0..2 {
            let dx = offsets(0, mx, qx);
            if dx * dx > reach2 {
                continue;
            }
            let hx = (mx - qx).abs() + mx.abs();
            for my in -order..=order {
                for qy in 0..2 {
                    let dy = offsets(1, my, qy);
                    let dxy = dx * dx + dy * dy;
                    if dxy > reach2 {
                        continue;
                    }
                    let hy = (my - qy).abs() + my.abs();
                    for mz in -order..=order {
                        for qz in 0..2 {
                            let dz = offsets(2, mz, qz);
                            let d2 = dxy + dz * dz;
                            if d2 > reach2 {
                                continue;
                            }
                            let hz = (mz - qz).abs() + mz.abs();
                            let distance = d2.sqrt();
                            let delay = distance * samples_per_metre;
                            let centre = delay.round() as i64;
                            if centre - HALF_TAPS >= w_len {
                                continue;
                            }
                            let gain = beta.powi((hx + hy + hz) as i32) / (4.0 * PI * distance);
                            add_pulse(&mut out, delay, centre, gain, &kernel);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// `exp(iπk/T)` for the taps of one pulse, used to evaluate the Hann window
/// with a single complex product per tap.
fn window_rotations() -> [Complex64; SINC_TAPS] {
    let mut rot = [Complex64::default(); SINC_TAPS];
    for (k, r) in rot.iter_mut().enumerate() {
        *r = Complex64::from_polar(1.0, PI * k as f64 / WINDOW_HALF_WIDTH);
    }
    rot
}

fn add_pulse(out: &mut [f64], delay: f64, centre: i64, gain: f64, rot: &[Complex64; SINC_TAPS]) {
    let first = centre - HALF_TAPS;
    let x0 = first as f64 - delay;
    let base = Complex64::from_polar(1.0, PI * x0 / WINDOW_HALF_WIDTH);
    // sin(π(n - d)) = -(-1)^n sin(πd)
    let sin_pd = (PI * delay).sin();
    for (k, r) in rot.iter().enumerate() {
        let n = first + k as i64;
        if n < 0 {
            continue;
        }
        if n as usize >= out.len() {
            break;
        }
        let x = x0 + k as f64;
        let sinc = if x.abs() < 1e-9 {
            1.0
        } else {
            let s = if n % 2 == 0 { -sin_pd } else { sin_pd };
            s / (PI * x)
        };
        let window = 0.5 * (1.0 + (base * r).re);
        out[n as usize] += gain * window * sinc;
    }
}

fn dist(a: &Point, b: &Point) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

const MAX_DRAWS: usize = 10_000;

/// Draws a microphone position uniformly over the volume of the spherical
/// segment, rejecting draws that fall outside the room.
pub fn sample_mic_position<R: Rng + ?Sized>(geom: &SceneGeometry, room: &RoomSpec, rng: &mut R) -> Result<Point> {
    geom.validate(room)?;
    let [r0, r1] = geom.radius;
    let (c0, c1) = (r0.powi(3), r1.powi(3));
    let [a0, a1] = geom.azimuth_deg;
    let (s0, s1) = (geom.elevation_deg[0].to_radians().sin(), geom.elevation_deg[1].to_radians().sin());
    for _ in 0..MAX_DRAWS {
        let r = (c0 + rng.random::<f64>() * (c1 - c0)).cbrt();
        let az = a0 + rng.random::<f64>() * (a1 - a0);
        let el = (s0 + rng.random::<f64>() * (s1 - s0)).clamp(-1.0, 1.0).asin().to_degrees();
        let p = geom.point_at(r.clamp(r0, r1), az.clamp(a0, a1), el);
        if room.contains(&p) && geom.loudspeakers.iter().all(|s| dist(s, &p) > 1e-9) {
            return Ok(p);
        }
    }
    Err(Error::invalid("spherical segment has no admissible point inside the room"))
}

/// Responses from every loudspeaker to `mic`.
pub fn simulate_air(room: &RoomSpec, geom: &SceneGeometry, mic: Point) -> Result<AirSample> {
    let channels = geom
        .loudspeakers
        .iter()
        .map(|s| simulate_rir(room, s, &mic))
        .collect::<Result<Vec<_>>>()?;
    Ok(AirSample { channels, mic })
}

/// Per-index generator: sample `index` of a draw sequence always uses the
/// same random stream, independent of evaluation order.
pub fn indexed_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Full-length responses at `count` random microphone positions.
pub fn draw_airs(room: &RoomSpec, geom: &SceneGeometry, count: usize, seed: u64) -> Result<Vec<AirSample>> {
    geom.validate(room)?;
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = indexed_rng(seed, i as u64);
            let mic = sample_mic_position(geom, room, &mut rng)?;
            simulate_air(room, geom, mic)
        })
        .collect()
}

/// Training corpus of `count` stacked AIRs truncated to `taps` per channel.
/// Only `taps` samples are simulated; by prefix stability they equal the
/// first taps of the full-length response.
pub fn generate_corpus(room: &RoomSpec, geom: &SceneGeometry, count: usize, taps: usize, seed: u64) -> Result<TrainingSet> {
    if count == 0 {
        return Err(Error::invalid("corpus size must be >= 1"));
    }
    if taps == 0 {
        return Err(Error::invalid("filter length must be >= 1"));
    }
    let short = room.with_rir_len(taps.min(room.rir_len));
    let samples = draw_airs(&short, geom, count, seed)?;
    let vectors = samples.iter().map(|s| s.truncated(taps)).collect();
    TrainingSet::new(geom.loudspeakers.len(), taps, room.sample_rate, seed, vectors)
}
