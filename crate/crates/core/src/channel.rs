//! Channel impulse responses: tap assembly from propagation paths and
//! bandlimited reconstruction on a uniform sample grid.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use thiserror::Error;

use crate::raytrace::{Geometry, PropagationPath};
use crate::scene::{Material, RadioModel};
use crate::SPEED_OF_LIGHT;

/// Relative distance (in ulps) below which a tap offset counts as on-grid.
const GRID_SNAP_ULPS: f64 = 8.0;

/// Paths shorter than this are treated as degenerate (m).
pub const MIN_PATH_LENGTH: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("degenerate path of length {0:e} m")]
    DegeneratePath(f64),
}

/// Perpendicular-polarization Fresnel reflection coefficient for a wave
/// arriving from free space at `theta_i` from the surface normal.
pub fn fresnel_reflection(theta_i: f64, material: &Material) -> Complex64 {
    if material.perfect_reflector {
        return Complex64::new(-1.0, 0.0);
    }
    let eps = material.rel_permittivity;
    let mu = material.rel_permeability;
    let cos_i = theta_i.cos().clamp(0.0, 1.0);
    let sin_i = theta_i.sin();
    // Snell: sin(theta_t) = sin(theta_i) / n2 with n2 = sqrt(eps * mu) >= 1.
    let cos_t = (1.0 - sin_i * sin_i / (eps * mu)).max(0.0).sqrt();
    let z2 = (mu / eps).sqrt();
    let gamma = (z2 * cos_i - cos_t) / (z2 * cos_i + cos_t);
    Complex64::new(gamma, 0.0)
}

/// Complex amplitude of one path as a normalized voltage gain: Friis
/// free-space loss, reflection losses and carrier phase. TX power is not
/// included.
pub fn path_amplitude(
    path: &PropagationPath,
    geometry: &Geometry,
    radio: &RadioModel,
) -> Result<Complex64, ChannelError> {
    let d = path.total_length;
    if !(d > MIN_PATH_LENGTH) {
        return Err(ChannelError::DegeneratePath(d));
    }
    // Same gain at both ends, converted to an amplitude factor.
    let gain = 10f64.powf(radio.antenna_gain_dbi / 20.0);
    let free_space = gain * gain * radio.wavelength() / (4.0 * std::f64::consts::PI * d);
    let reflection = path
        .surfaces_hit
        .iter()
        .zip(&path.incidence_angles)
        .map(|(&s, &theta)| fresnel_reflection(theta, &geometry.faces()[s].material))
        .fold(Complex64::new(1.0, 0.0), |acc, g| acc * g);
    let delay = d / SPEED_OF_LIGHT;
    let carrier = Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * radio.center_frequency_hz * delay);
    Ok(reflection * carrier * free_space)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tap {
    pub delay: f64,
    pub amplitude: Complex64,
}

/// Infinite-bandwidth CIR of one link.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CirTaps {
    pub tx_id: String,
    pub rx_id: String,
    /// Sorted by ascending delay.
    pub taps: Vec<Tap>,
}

impl CirTaps {
    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }
}

pub fn assemble_cir(
    paths: &[PropagationPath],
    geometry: &Geometry,
    radio: &RadioModel,
    tx_id: &str,
    rx_id: &str,
) -> Result<CirTaps, ChannelError> {
    let mut taps = paths
        .iter()
        .map(|p| {
            Ok(Tap {
                delay: p.total_length / SPEED_OF_LIGHT,
                amplitude: path_amplitude(p, geometry, radio)?,
            })
        })
        .collect::<Result<Vec<_>, ChannelError>>()?;
    taps.sort_by(|a, b| a.delay.total_cmp(&b.delay));
    Ok(CirTaps {
        tx_id: tx_id.to_owned(),
        rx_id: rx_id.to_owned(),
        taps,
    })
}

/// Bandlimited CIR sampled at `t_n = start_time + n / sample_rate`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampledCir {
    pub tx_id: String,
    pub rx_id: String,
    pub sample_rate: f64,
    pub start_time: f64,
    pub values: Vec<Complex64>,
}

impl SampledCir {
    pub fn sample_time(&self, n: usize) -> f64 {
        self.start_time + n as f64 / self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Scales the normalized channel to received amplitude in sqrt(mW).
    pub fn apply_tx_power(&mut self, tx_power_dbm: f64) {
        let scale = 10f64.powf(tx_power_dbm / 20.0);
        self.values.iter_mut().for_each(|v| *v *= scale);
    }

    /// Adds circularly-symmetric complex Gaussian noise of total power
    /// `power_dbm` per sample.
    pub fn add_noise<R: Rng + ?Sized>(&mut self, power_dbm: f64, rng: &mut R) {
        let power_mw = 10f64.powf(power_dbm / 10.0);
        let normal = Normal::new(0.0, (power_mw / 2.0).sqrt()).expect("finite noise power");
        for v in &mut self.values {
            *v += Complex64::new(normal.sample(rng), normal.sample(rng));
        }
    }
}

/// Normalized sinc, sin(pi x) / (pi x), exactly zero at nonzero integers.
pub fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        return 1.0;
    }
    let nearest = x.round();
    let frac = x - nearest;
    if frac == 0.0 {
        return 0.0;
    }
    let sign = if nearest.rem_euclid(2.0) == 0.0 { 1.0 } else { -1.0 };
    sign * (std::f64::consts::PI * frac).sin() / (std::f64::consts::PI * x)
}

/// Number of taps whose delay falls outside `[t_0, t_0 + (N - 1) / f_s]`.
pub fn taps_outside_window(cir: &CirTaps, radio: &RadioModel, start_time: f64) -> usize {
    let end = start_time + (radio.num_samples - 1) as f64 / radio.bandwidth_hz;
    cir.taps
        .iter()
        .filter(|t| t.delay < start_time || t.delay > end)
        .count()
}

/// Sum of sinc pulses centered on the tap delays, evaluated on the uniform
/// grid of `radio.num_samples` instants spaced `1 / radio.bandwidth_hz`.
pub fn sample_bandlimited(cir: &CirTaps, radio: &RadioModel, start_time: f64) -> SampledCir {
    let fs = radio.bandwidth_hz;
    let outside = taps_outside_window(cir, radio, start_time);
    if outside > 0 {
        log::warn!(
            "link {}-{}: {outside} of {} taps outside the sample window, energy truncated",
            cir.tx_id,
            cir.rx_id,
            cir.len()
        );
    }
    // Offsets in units of samples: t_n - tau_k = (n - offset_k) / f_s.
    // Offsets within rounding of an integer are snapped so that taps placed on
    // the sample grid reconstruct exactly.
    let offsets: Vec<f64> = cir
        .taps
        .iter()
        .map(|t| {
            let off = (t.delay - start_time) * fs;
            let nearest = off.round();
            if (off - nearest).abs() <= GRID_SNAP_ULPS * f64::EPSILON * off.abs().max(1.0) {
                nearest
            } else {
                off
            }
        })
        .collect();
    let values = (0..radio.num_samples)
        .map(|n| {
            cir.taps
                .iter()
                .zip(&offsets)
                .map(|(tap, &off)| tap.amplitude * sinc(n as f64 - off))
                .fold(Complex64::new(0.0, 0.0), |acc, v| acc + v)
        })
        .collect();
    SampledCir {
        tx_id: cir.tx_id.clone(),
        rx_id: cir.rx_id.clone(),
        sample_rate: fs,
        start_time,
        values,
    }
}
