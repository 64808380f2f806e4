//! Synthetic source material.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SourceSignal {
    /// Low-pass tilted Gaussian noise, optionally gated on and off in
    /// speech-like bursts.
    SpeechShaped { seed: u64, gated: bool },
    /// Explicit samples; zero-padded or truncated to the scene length.
    Samples(Vec<f64>),
}

impl SourceSignal {
    pub fn render(&self, len: usize, sample_rate: f64) -> Vec<f64> {
        match self {
            SourceSignal::SpeechShaped { seed, gated } => {
                speech_shaped_noise(len, sample_rate, *seed, *gated)
            }
            SourceSignal::Samples(s) => {
                let mut out = s.clone();
                out.resize(len, 0.0);
                out
            }
        }
    }
}

/// Unit-RMS noise with a speech-like spectral tilt: a one-pole low-pass
/// (pole 0.95) followed by a ~100 Hz DC blocker. When `gated`, the signal
/// alternates between bursts of 0.4–1.5 s and pauses of 0.15–0.6 s with
/// 10 ms linear ramps; pauses are exact zeros.
pub fn speech_shaped_noise(len: usize, sample_rate: f64, seed: u64, gated: bool) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(len);
    let (mut lp, mut prev_lp, mut hp) = (0.0, 0.0, 0.0);
    let hp_pole = (-2.0 * std::f64::consts::PI * 100.0 / sample_rate).exp();
    for _ in 0..len {
        let w: f64 = rng.sample(StandardNormal);
        lp = w + 0.95 * lp;
        hp = lp - prev_lp + hp_pole * hp;
        prev_lp = lp;
        out.push(hp);
    }
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / len.max(1) as f64).sqrt();
    if rms > 0.0 {
        out.iter_mut().for_each(|v| *v /= rms);
    }
    if gated {
        let ramp = (0.01 * sample_rate).round().max(1.0) as usize;
        let mut gain = vec![0.0; len];
        let mut pos = 0;
        while pos < len {
            let on = (rng.gen_range(0.4..1.5) * sample_rate) as usize;
            let end = (pos + on).min(len);
            for (i, g) in gain[pos..end].iter_mut().enumerate() {
                let from_start = i + 1;
                let to_end = end - pos - i;
                *g = (from_start.min(to_end) as f64 / ramp as f64).min(1.0);
            }
            pos = end + (rng.gen_range(0.15..0.6) * sample_rate) as usize;
        }
        out.iter_mut().zip(&gain).for_each(|(v, g)| *v *= g);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_normalized() {
        let a = speech_shaped_noise(16_000, 16_000.0, 7, false);
        let b = speech_shaped_noise(16_000, 16_000.0, 7, false);
        assert_eq!(a, b);
        let rms = (a.iter().map(|v| v * v).sum::<f64>() / a.len() as f64).sqrt();
        assert!((rms - 1.0).abs() < 1e-12);
        assert_ne!(a, speech_shaped_noise(16_000, 16_000.0, 8, false));
    }

    #[test]
    fn gating_leaves_silent_gaps() {
        let s = speech_shaped_noise(5 * 16_000, 16_000.0, 3, true);
        let zeros = s.iter().filter(|v| **v == 0.0).count();
        let frac = zeros as f64 / s.len() as f64;
        assert!(frac > 0.05 && frac < 0.6, "{frac}");
    }

    #[test]
    fn spectrum_tilts_downwards() {
        let s = speech_shaped_noise(32_768, 16_000.0, 11, false);
        let band = |lo: f64, hi: f64| {
            let x = crate::stft::stft(std::slice::from_ref(&s), &crate::stft::StftConfig::default()).unwrap();
            let mut e = 0.0;
            for v in x.channel(0).indexed_iter() {
                let hz = (v.0 .1 + 1) as f64 * 31.25;
                if hz >= lo && hz < hi {
                    e += v.1.norm_sqr();
                }
            }
            e
        };
        assert!(band(200.0, 1000.0) > 10.0 * band(4000.0, 4800.0));
    }
}
