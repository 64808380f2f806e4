//! Short-time Fourier analysis.
//!
//! Frames are taken without padding, so the last partial frame is dropped.
//! Only the positive-frequency bins `1..=fft_size/2` are kept: DC carries no
//! phase-difference information and is excluded, Nyquist is retained.

use std::f64::consts::{PI, TAU};

use ndarray::{Array3, ArrayView2, Axis};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor added to magnitudes before taking the logarithm.
pub const LOG_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    Hann,
    Rectangular,
}

impl Window {
    /// Periodic window of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; n],
            Window::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (TAU * i as f64 / n as f64).cos())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StftConfig {
    pub sample_rate: u32,
    pub window_length: usize,
    pub hop: usize,
    pub fft_size: usize,
    pub window: Window,
}

impl Default for StftConfig {
    /// 16 kHz, 32 ms Hann frames with a 16 ms shift.
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            window_length: 512,
            hop: 256,
            fft_size: 512,
            window: Window::Hann,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(Error::config("sample rate must be positive"));
        }
        if self.hop == 0 || self.hop > self.window_length || self.window_length > self.fft_size {
            return Err(Error::config(format!(
                "need 0 < hop ({}) <= window_length ({}) <= fft_size ({})",
                self.hop, self.window_length, self.fft_size
            )));
        }
        if self.fft_size < 2 {
            return Err(Error::config("fft_size must be at least 2"));
        }
        Ok(())
    }

    pub fn num_frequencies(&self) -> usize {
        self.fft_size / 2
    }

    /// Number of complete frames in a signal of `len` samples.
    pub fn num_frames(&self, len: usize) -> usize {
        if len < self.window_length {
            0
        } else {
            (len - self.window_length) / self.hop + 1
        }
    }

    pub fn frequency_axis(&self) -> FrequencyAxis {
        FrequencyAxis::new(self.sample_rate as f64, self.fft_size, 1, self.num_frequencies())
    }
}

/// Angular frequencies `ω_f = 2π·bin·fs/N` of a contiguous range of bins.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyAxis {
    first_bin: usize,
    omegas: Vec<f64>,
    bin_spacing: f64,
}

impl FrequencyAxis {
    pub fn new(sample_rate: f64, fft_size: usize, first_bin: usize, count: usize) -> Self {
        let bin_spacing = TAU * sample_rate / fft_size as f64;
        let omegas = (first_bin..first_bin + count)
            .map(|b| b as f64 * bin_spacing)
            .collect();
        Self {
            first_bin,
            omegas,
            bin_spacing,
        }
    }

    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }

    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    pub fn first_bin(&self) -> usize {
        self.first_bin
    }

    /// Angular frequency step between adjacent bins, rad/s.
    pub fn bin_spacing(&self) -> f64 {
        self.bin_spacing
    }
}

/// Complex spectrogram indexed `[channel][frame][frequency]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StftTensor {
    data: Array3<Complex64>,
    config: StftConfig,
}

impl StftTensor {
    pub fn from_parts(data: Array3<Complex64>, config: StftConfig) -> Result<Self> {
        if data.len_of(Axis(2)) != config.num_frequencies() {
            return Err(Error::input(format!(
                "expected {} frequencies, got {}",
                config.num_frequencies(),
                data.len_of(Axis(2))
            )));
        }
        Ok(Self { data, config })
    }

    pub fn data(&self) -> &Array3<Complex64> {
        &self.data
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn num_channels(&self) -> usize {
        self.data.len_of(Axis(0))
    }

    pub fn num_frames(&self) -> usize {
        self.data.len_of(Axis(1))
    }

    pub fn num_frequencies(&self) -> usize {
        self.data.len_of(Axis(2))
    }

    /// `[frame][frequency]` plane of one channel.
    pub fn channel(&self, ch: usize) -> ArrayView2<'_, Complex64> {
        self.data.index_axis(Axis(0), ch)
    }
}

/// Transforms each channel of `signal` (one `Vec` per channel).
pub fn stft(signal: &[Vec<f64>], cfg: &StftConfig) -> Result<StftTensor> {
    cfg.validate()?;
    let Some(len) = signal.first().map(Vec::len) else {
        return Err(Error::input("signal has no channels"));
    };
    if signal.iter().any(|ch| ch.len() != len) {
        return Err(Error::input("channels differ in length"));
    }
    if len < cfg.window_length {
        return Err(Error::input(format!(
            "signal of {len} samples is shorter than one window ({})",
            cfg.window_length
        )));
    }
    if signal.iter().flatten().any(|s| !s.is_finite()) {
        return Err(Error::input("signal contains non-finite samples"));
    }

    let n_frames = cfg.num_frames(len);
    let n_freq = cfg.num_frequencies();
    let window = cfg.window.coefficients(cfg.window_length);
    let fft = FftPlanner::new().plan_fft_forward(cfg.fft_size);
    let mut data = Array3::zeros((signal.len(), n_frames, n_freq));
    let mut buf = vec![Complex64::default(); cfg.fft_size];
    for (ch, samples) in signal.iter().enumerate() {
        for frame in 0..n_frames {
            let start = frame * cfg.hop;
            buf.fill(Complex64::default());
            for (i, (b, w)) in buf.iter_mut().zip(&window).enumerate() {
                b.re = samples[start + i] * w;
            }
            fft.process(&mut buf);
            for f in 0..n_freq {
                data[[ch, frame, f]] = buf[f + 1];
            }
        }
    }
    Ok(StftTensor { data, config: *cfg })
}

/// Network input planes for a microphone pair, indexed
/// `[plane][frame][frequency]` with planes ordered
/// `log|X₀|, ∠X₀, log|X₁|, ∠X₁`.
pub fn input_features(x: &StftTensor) -> Result<Array3<f64>> {
    if x.num_channels() != 2 {
        return Err(Error::input(format!(
            "input features need exactly 2 channels, got {}",
            x.num_channels()
        )));
    }
    let (n, f) = (x.num_frames(), x.num_frequencies());
    let mut out = Array3::zeros((4, n, f));
    for ch in 0..2 {
        let plane = x.channel(ch);
        out.index_axis_mut(Axis(0), 2 * ch)
            .zip_mut_with(&plane, |o, v| *o = (v.norm() + LOG_FLOOR).ln());
        out.index_axis_mut(Axis(0), 2 * ch + 1)
            .zip_mut_with(&plane, |o, v| *o = v.arg());
    }
    debug_assert!(out
        .index_axis(Axis(0), 1)
        .iter()
        .all(|p| (-PI..=PI).contains(p)));
    Ok(out)
}
