//! Shoebox room impulse responses by the image-source method.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{norm, sub, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Room {
    /// Extent along x, y, z in meters; the room spans `[0, L]` per axis.
    pub dimensions: Vec3,
    pub rt60: f64,
    /// Maximum reflection order; `None` keeps every image that arrives within
    /// the impulse response length.
    pub reflection_order: Option<u32>,
}

impl Room {
    pub fn new(dimensions: Vec3, rt60: f64, reflection_order: Option<u32>) -> Result<Self> {
        if dimensions.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return Err(Error::config(format!(
                "room dimensions must be positive, got {dimensions:?}"
            )));
        }
        if !(rt60 >= 0.0) || !rt60.is_finite() {
            return Err(Error::config(format!("rt60 must be non-negative, got {rt60}")));
        }
        Ok(Self {
            dimensions,
            rt60,
            reflection_order,
        })
    }

    pub fn volume(&self) -> f64 {
        self.dimensions.iter().product()
    }

    pub fn surface(&self) -> f64 {
        let [x, y, z] = self.dimensions;
        2.0 * (x * y + x * z + y * z)
    }

    /// Uniform wall pressure reflection coefficient matching `rt60` under
    /// Eyring's formula `T = 24 ln(10) V / (−c S ln(1 − α))`, with
    /// `β = √(1 − α)`.
    pub fn reflection_coefficient(&self, speed_of_sound: f64) -> f64 {
        if self.rt60 == 0.0 {
            return 0.0;
        }
        let log_energy = -24.0 * 10f64.ln() * self.volume()
            / (speed_of_sound * self.surface() * self.rt60);
        (0.5 * log_energy).exp()
    }

    /// Whether `p` lies inside the room at least `margin` from every wall.
    pub fn contains(&self, p: &Vec3, margin: f64) -> bool {
        p.iter()
            .zip(&self.dimensions)
            .all(|(c, l)| *c >= margin && *c <= l - margin)
    }
}

pub const DEFAULT_HIGH_PASS_HZ: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RirSettings {
    pub sample_rate: f64,
    pub speed_of_sound: f64,
    /// Hard cap on the response length in samples.
    pub max_length: Option<usize>,
    /// Cutoff (Hz) of the high-pass applied to the reflections, removing the
    /// low-frequency build-up of many same-signed image pulses. `None`
    /// leaves the reflections unfiltered.
    pub high_pass: Option<f64>,
}

impl RirSettings {
    pub fn new(sample_rate: f64, speed_of_sound: f64) -> Self {
        Self {
            sample_rate,
            speed_of_sound,
            max_length: None,
            high_pass: Some(DEFAULT_HIGH_PASS_HZ),
        }
    }

    /// Width of the windowed-sinc fractional delay filter (8 ms, even).
    pub fn interpolation_taps(&self) -> usize {
        (2.0 * (0.004 * self.sample_rate).round()) as usize
    }
}

/// Adds `gain` times a Hann-windowed sinc centered at `delay` samples.
///
/// Uses sin(π(n − d)) = (−1)^(n+1)·sin(πd) for integer n and a rotating
/// phasor for the window, so each pulse costs one sin/cos pair.
fn add_fractional_pulse(out: &mut [f64], delay: f64, gain: f64, taps: usize) {
    let half = (taps / 2) as f64;
    let center = delay.floor();
    let first = (center - half + 1.0).max(0.0) as usize;
    let last = ((center + half) as usize).min(out.len().saturating_sub(1));
    if first > last {
        return;
    }
    let sin_pd = (PI * delay).sin();
    let step = Complex64::from_polar(1.0, PI / half);
    let mut rot = Complex64::from_polar(1.0, PI * (first as f64 - delay) / half);
    for (n, dst) in out.iter_mut().enumerate().take(last + 1).skip(first) {
        let t = n as f64 - delay;
        if t.abs() < half {
            let window = 0.5 * (1.0 + rot.re);
            let sinc = if t.abs() < 1e-12 {
                1.0
            } else {
                let s = if n % 2 == 0 { -sin_pd } else { sin_pd };
                s / (PI * t)
            };
            *dst += gain * window * sinc;
        }
        rot *= step;
    }
}

/// Two-pole high-pass after Allen & Berkley (1979), applied to the reflections.
fn allen_berkley_high_pass(x: &mut [f64], cutoff: f64, fs: f64) {
    let w = 2.0 * PI * cutoff / fs;
    let r1 = (-w).exp();
    let (b1, b2, a1) = (2.0 * r1 * w.cos(), -r1 * r1, -(1.0 + r1));
    let (mut y1, mut y2) = (0.0, 0.0);
    for v in x.iter_mut() {
        let y0 = b1 * y1 + b2 * y2 + *v;
        *v = y0 + a1 * y1 + r1 * y2;
        y2 = y1;
        y1 = y0;
    }
}

struct Image {
    distance: f64,
    order: u32,
}

fn images(room: &Room, source: &Vec3, mic: &Vec3, max_distance: f64) -> Vec<Image> {
    let order_cap = room.reflection_order;
    let range = |axis: usize| -> i64 {
        let by_distance = (max_distance / (2.0 * room.dimensions[axis])).ceil() as i64 + 1;
        match order_cap {
            Some(o) => by_distance.min(o as i64 / 2 + 1),
            None => by_distance,
        }
    };
    let (nx, ny, nz) = (range(0), range(1), range(2));
    let mut out = Vec::new();
    for mx in -nx..=nx {
        for my in -ny..=ny {
            for mz in -nz..=nz {
                for q in 0..2i64 {
                    for j in 0..2i64 {
                        for k in 0..2i64 {
                            let order =
                                (2 * mx - q).abs() + (2 * my - j).abs() + (2 * mz - k).abs();
                            if order_cap.is_some_and(|o| order > o as i64) {
                                continue;
                            }
                            let m = [mx, my, mz];
                            let sign = [q, j, k];
                            let mut d = [0.0; 3];
                            for a in 0..3 {
                                let image = (1 - 2 * sign[a]) as f64 * source[a]
                                    + 2.0 * m[a] as f64 * room.dimensions[a];
                                d[a] = image - mic[a];
                            }
                            let distance = norm(&d);
                            if distance <= max_distance {
                                out.push(Image {
                                    distance,
                                    order: order as u32,
                                });
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Impulse response from `source` to `mic`. Each image contributes
/// `β^order / (4πd)` at a delay of `d/c`, realized as a windowed-sinc
/// fractional delay. The reflections (not the direct path) go through the
/// optional high-pass in `settings`.
///
/// The length is `rt60` worth of samples (or enough for the farthest image
/// when a reflection order is set), never shorter than the direct path plus
/// the interpolation filter, and capped by `settings.max_length`.
pub fn image_method_rir(
    room: &Room,
    source: &Vec3,
    mic: &Vec3,
    settings: &RirSettings,
) -> Result<Vec<f64>> {
    if !room.contains(source, 0.0) || !room.contains(mic, 0.0) {
        return Err(Error::input("source and microphone must lie inside the room"));
    }
    let direct = norm(&sub(source, mic));
    if direct < 1e-6 {
        return Err(Error::input("source coincides with microphone"));
    }
    let fs = settings.sample_rate;
    let c = settings.speed_of_sound;
    let taps = settings.interpolation_taps();
    let min_len = (direct / c * fs).ceil() as usize + taps / 2 + 1;

    let reverberant = room.rt60 > 0.0 && room.reflection_order != Some(0);
    let mut len = if !reverberant {
        min_len
    } else if let Some(order) = room.reflection_order {
        // farthest image of this order lies within order · diagonal of the direct path
        let diag = norm(&room.dimensions);
        let reach = direct + 2.0 * (order as f64 + 1.0) * diag;
        let far = images(room, source, mic, reach)
            .iter()
            .map(|i| i.distance)
            .fold(direct, f64::max);
        (far / c * fs).ceil() as usize + taps / 2 + 1
    } else {
        ((room.rt60 * fs).ceil() as usize).max(min_len)
    };
    if let Some(cap) = settings.max_length {
        len = len.min(cap.max(1));
    }

    let beta = room.reflection_coefficient(c);
    let mut out = vec![0.0; len];
    let max_distance = if reverberant {
        (len as f64 + taps as f64 / 2.0) / fs * c
    } else {
        direct
    };
    let list = if reverberant {
        images(room, source, mic, max_distance)
    } else {
        vec![Image {
            distance: direct,
            order: 0,
        }]
    };
    let mut reflections = vec![0.0; len];
    for img in list {
        let gain = beta.powi(img.order as i32) / (4.0 * PI * img.distance);
        if gain == 0.0 {
            continue;
        }
        let dst = if img.order == 0 { &mut out } else { &mut reflections };
        add_fractional_pulse(dst, img.distance / c * fs, gain, taps);
    }
    if let Some(fc) = settings.high_pass {
        allen_berkley_high_pass(&mut reflections, fc, fs);
    }
    out.iter_mut().zip(&reflections).for_each(|(o, r)| *o += r);
    Ok(out)
}

/// Full linear convolution via FFT.
pub fn fft_convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return Vec::new();
    }
    let n = x.len() + h.len() - 1;
    let size = n.next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let load = |v: &[f64]| {
        let mut b = vec![Complex64::default(); size];
        for (d, s) in b.iter_mut().zip(v) {
            d.re = *s;
        }
        b
    };
    let mut a = load(x);
    let mut b = load(h);
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (p, q) in a.iter_mut().zip(&b) {
        *p *= q;
    }
    inv.process(&mut a);
    a.truncate(n);
    a.into_iter().map(|v| v.re / size as f64).collect()
}

/// Reverberation time from the Schroeder backward-integrated energy decay:
/// a least-squares line through the −5 dB to −35 dB part of the curve,
/// extrapolated to −60 dB. Returns `None` when the curve never reaches −35 dB.
pub fn schroeder_rt60(rir: &[f64], sample_rate: f64) -> Option<f64> {
    let mut edc = vec![0.0; rir.len()];
    let mut acc = 0.0;
    for i in (0..rir.len()).rev() {
        acc += rir[i] * rir[i];
        edc[i] = acc;
    }
    let total = *edc.first()?;
    if total <= 0.0 {
        return None;
    }
    let db: Vec<f64> = edc.iter().map(|e| 10.0 * (e / total).log10()).collect();
    let start = db.iter().position(|d| *d <= -5.0)?;
    let end = db.iter().position(|d| *d <= -35.0)?;
    if end <= start + 1 {
        return None;
    }
    let n = (end - start) as f64;
    let (mut st, mut sd, mut stt, mut std) = (0.0, 0.0, 0.0, 0.0);
    for (i, d) in db[start..end].iter().enumerate() {
        let t = (start + i) as f64 / sample_rate;
        st += t;
        sd += d;
        stt += t * t;
        std += t * d;
    }
    let slope = (n * std - st * sd) / (n * stt - st * st);
    (slope < 0.0).then(|| -60.0 / slope)
}
