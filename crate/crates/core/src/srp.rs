//! Steered-response-power spectra.
//!
//! Both the classical PHAT spectrum and the feature-based spectrum reduce to
//! the same kernel: for every microphone pair, the inner product between a
//! 2F-dimensional feature vector (interleaved real/imaginary parts) and the
//! direct-path phase-difference vector of each candidate direction. For PHAT
//! the feature vector is the normalized cross-power spectrum itself; for the
//! learned route it is the predicted weighted sum of direct-path vectors.

use ndarray::{s, Array2, Array3, ArrayView2, Axis};
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{ArrayGeometry, CandidateGrid, Doa, MicPair};
use crate::stft::{FrequencyAxis, StftTensor};

/// Number of input frames pooled into one output frame.
pub const COMPRESSION_FACTOR: usize = 12;

/// `[cos(ω₁τ), sin(ω₁τ), …, cos(ω_Fτ), sin(ω_Fτ)]` for one pair and direction.
#[derive(Debug, Clone, PartialEq)]
pub struct DpIpdVector(Vec<f64>);

impl DpIpdVector {
    pub fn from_tdoa(tdoa: f64, axis: &FrequencyAxis) -> Self {
        let mut v = Vec::with_capacity(2 * axis.len());
        for w in axis.omegas() {
            let (s, c) = (w * tdoa).sin_cos();
            v.push(c);
            v.push(s);
        }
        Self(v)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

pub fn dp_ipd_vector(
    geom: &ArrayGeometry,
    pair: MicPair,
    doa: &Doa,
    axis: &FrequencyAxis,
) -> Result<DpIpdVector> {
    Ok(DpIpdVector::from_tdoa(geom.tdoa(pair, doa)?, axis))
}

/// Weighted sum `Σ_k β_k r(θ_k)` of direct-path vectors for one pair.
pub fn target_vector(
    doas: &[Doa],
    betas: &[f64],
    geom: &ArrayGeometry,
    pair: MicPair,
    axis: &FrequencyAxis,
) -> Result<Vec<f64>> {
    if doas.len() != betas.len() {
        return Err(Error::input(format!(
            "{} directions but {} weights",
            doas.len(),
            betas.len()
        )));
    }
    if let Some(b) = betas.iter().find(|b| !(0.0..=1.0).contains(*b)) {
        return Err(Error::input(format!("activity weight {b} outside [0, 1]")));
    }
    let mut out = vec![0.0; 2 * axis.len()];
    for (doa, &beta) in doas.iter().zip(betas) {
        let r = dp_ipd_vector(geom, pair, doa, axis)?;
        for (o, v) in out.iter_mut().zip(r.as_slice()) {
            *o += beta * v;
        }
    }
    Ok(out)
}

/// Per-frame, per-pair feature vectors, indexed `[frame][pair][2F]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IpdFeatureSeq {
    data: Array3<f64>,
    num_mics: usize,
    frame_rate: f64,
}

impl IpdFeatureSeq {
    /// Pairs are implied by `num_mics` in nonredundant order.
    pub fn new(data: Array3<f64>, num_mics: usize, frame_rate: f64) -> Result<Self> {
        if num_mics < 2 {
            return Err(Error::input("features need at least 2 microphones"));
        }
        let pairs = num_mics * (num_mics - 1) / 2;
        if data.len_of(Axis(1)) != pairs {
            return Err(Error::input(format!(
                "feature pair count {} does not match {pairs} pairs of {num_mics} microphones",
                data.len_of(Axis(1))
            )));
        }
        if !data.len_of(Axis(2)).is_multiple_of(2) || data.len_of(Axis(2)) == 0 {
            return Err(Error::input("feature vectors must have even, nonzero length"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("features contain non-finite values"));
        }
        Ok(Self {
            data,
            num_mics,
            frame_rate,
        })
    }

    pub fn zeros(frames: usize, num_mics: usize, num_freq: usize, frame_rate: f64) -> Self {
        let pairs = num_mics * (num_mics - 1) / 2;
        Self::new(Array3::zeros((frames, pairs, 2 * num_freq)), num_mics, frame_rate)
            .expect("zero features are valid")
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    pub fn num_frames(&self) -> usize {
        self.data.len_of(Axis(0))
    }

    pub fn num_pairs(&self) -> usize {
        self.data.len_of(Axis(1))
    }

    pub fn num_mics(&self) -> usize {
        self.num_mics
    }

    pub fn num_frequencies(&self) -> usize {
        self.data.len_of(Axis(2)) / 2
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn frame(&self, n: usize) -> ArrayView2<'_, f64> {
        self.data.index_axis(Axis(0), n)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Checks the `[−k_max, k_max]` element bound.
    pub fn check_bound(&self, k_max: f64) -> Result<()> {
        let m = self.max_abs();
        if m > k_max {
            return Err(Error::input(format!(
                "feature magnitude {m} exceeds the bound {k_max}"
            )));
        }
        Ok(())
    }

    /// Averages consecutive blocks of `factor` frames; a trailing partial
    /// block is dropped.
    pub fn pooled(&self, factor: usize) -> Self {
        let out_frames = self.num_frames() / factor.max(1);
        let mut data = Array3::zeros((out_frames, self.num_pairs(), self.data.len_of(Axis(2))));
        for n in 0..out_frames {
            let block = self.data.slice(s![n * factor..(n + 1) * factor, .., ..]);
            let mut dst = data.index_axis_mut(Axis(0), n);
            for frame in block.outer_iter() {
                dst += &frame;
            }
            dst /= factor as f64;
        }
        Self {
            data,
            num_mics: self.num_mics,
            frame_rate: self.frame_rate / factor as f64,
        }
    }

    pub fn scaled_sum(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        if self.data.shape() != other.data.shape() {
            return Err(Error::input("feature shapes differ"));
        }
        let data = &self.data * a + &other.data * b;
        Self::new(data, self.num_mics, self.frame_rate)
    }
}

/// Spectrum values indexed `[frame][grid direction]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialSpectrum {
    values: Array2<f64>,
}

impl SpatialSpectrum {
    pub fn new(values: Array2<f64>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn num_frames(&self) -> usize {
        self.values.nrows()
    }

    pub fn frame(&self, n: usize) -> &[f64] {
        self.values
            .row(n)
            .to_slice()
            .expect("spectrum rows are contiguous")
    }

    /// Maximum of one frame; ties go to the lowest grid index.
    pub fn argmax(&self, n: usize) -> (usize, f64) {
        argmax(self.frame(n))
    }
}

pub(crate) fn argmax(values: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, &v) in values.iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

/// `Ψ = exp(j∠(X_m X_m'*))` per bin; bins where either input is exactly zero
/// map to 0.
pub fn phat_cross_spectrum(
    x_m: ArrayView2<'_, Complex64>,
    x_m_prime: ArrayView2<'_, Complex64>,
) -> Result<Array2<Complex64>> {
    if x_m.shape() != x_m_prime.shape() {
        return Err(Error::input(format!(
            "time-frequency planes differ in shape: {:?} vs {:?}",
            x_m.shape(),
            x_m_prime.shape()
        )));
    }
    let mut out = Array2::zeros(x_m.raw_dim());
    ndarray::Zip::from(&mut out)
        .and(&x_m)
        .and(&x_m_prime)
        .for_each(|o, a, b| {
            let cross = a * b.conj();
            let mag = cross.norm();
            *o = if mag > 0.0 && mag.is_finite() {
                cross / mag
            } else {
                Complex64::default()
            };
        });
    Ok(out)
}

/// Frame-wise GCC-PHAT `(1/F) Σ_f Re{Ψ(f) e^{−jω_f τ(θ)}}`, evaluated by
/// direct summation.
pub fn gcc_phat_frame(
    psi: &[Complex64],
    axis: &FrequencyAxis,
    geom: &ArrayGeometry,
    pair: MicPair,
    doa: &Doa,
) -> Result<f64> {
    if psi.len() != axis.len() {
        return Err(Error::input(format!(
            "cross spectrum has {} bins, frequency axis has {}",
            psi.len(),
            axis.len()
        )));
    }
    let tau = geom.tdoa(pair, doa)?;
    let sum: f64 = psi
        .iter()
        .zip(axis.omegas())
        .map(|(p, w)| (p * Complex64::from_polar(1.0, -w * tau)).re)
        .sum();
    Ok(sum / axis.len() as f64)
}

/// Direct-path spectrum of one pair for a source at `source`:
/// `(1/F) Σ_f Re{e^{jω_f τ(θ_k)} e^{−jω_f τ(θ)}}`.
pub fn dp_gcc_single(
    geom: &ArrayGeometry,
    pair: MicPair,
    source: &Doa,
    doa: &Doa,
    axis: &FrequencyAxis,
) -> Result<f64> {
    let tau_k = geom.tdoa(pair, source)?;
    let tau = geom.tdoa(pair, doa)?;
    let sum: f64 = axis
        .omegas()
        .iter()
        .map(|w| (Complex64::from_polar(1.0, w * tau_k) * Complex64::from_polar(1.0, -w * tau)).re)
        .sum();
    Ok(sum / axis.len() as f64)
}

/// Pair-averaged direct-path spectrum of a single source over the grid.
/// Evaluated term by term; serves as a reference for the fast kernel.
pub fn dp_spatial_spectrum_single(
    source: &Doa,
    geom: &ArrayGeometry,
    grid: &CandidateGrid,
    axis: &FrequencyAxis,
) -> Result<Vec<f64>> {
    let pairs = geom.pairs();
    let tau_k: Vec<f64> = pairs
        .iter()
        .map(|p| geom.tdoa(*p, source))
        .collect::<Result<_>>()?;
    let f = axis.len() as f64;
    let mut out = Vec::with_capacity(grid.len());
    for doa in grid.directions() {
        let mut acc = 0.0;
        for (pair, tk) in pairs.iter().zip(&tau_k) {
            let tau = geom.tdoa(*pair, doa)?;
            let s: f64 = axis.omegas().iter().map(|w| (w * (tk - tau)).cos()).sum();
            acc += s / f;
        }
        out.push(acc / pairs.len() as f64);
    }
    Ok(out)
}

/// Per (direction, pair) steering phasors for a fixed geometry, grid and
/// frequency axis.
///
/// Because the frequencies are uniformly spaced, `e^{jω_f τ}` for all bins is
/// a geometric sequence in `z = e^{jΔω τ}`; the inner product with a feature
/// vector is then a polynomial in `z` evaluated by Horner's rule. Only the two
/// phasors per (direction, pair) are stored instead of the full
/// `grid × pairs × 2F` table.
#[derive(Debug, Clone)]
pub struct SteeringTable {
    num_pairs: usize,
    num_mics: usize,
    axis: FrequencyAxis,
    tdoas: Vec<f64>,
    /// `e^{jΔω τ}`
    step: Vec<Complex64>,
    /// `e^{jω_first τ}`
    offset: Vec<Complex64>,
}

impl SteeringTable {
    pub fn new(geom: &ArrayGeometry, grid: &CandidateGrid, axis: &FrequencyAxis) -> Result<Self> {
        let pairs = geom.pairs();
        let n = grid.len() * pairs.len();
        let mut tdoas = Vec::with_capacity(n);
        let mut step = Vec::with_capacity(n);
        let mut offset = Vec::with_capacity(n);
        let first = axis.omegas().first().copied().unwrap_or(0.0);
        for doa in grid.directions() {
            for pair in &pairs {
                let tau = geom.tdoa(*pair, doa)?;
                tdoas.push(tau);
                step.push(Complex64::from_polar(1.0, axis.bin_spacing() * tau));
                offset.push(Complex64::from_polar(1.0, first * tau));
            }
        }
        Ok(Self {
            num_pairs: pairs.len(),
            num_mics: geom.num_mics(),
            axis: axis.clone(),
            tdoas,
            step,
            offset,
        })
    }

    pub fn num_directions(&self) -> usize {
        self.tdoas.len() / self.num_pairs
    }

    pub fn num_pairs(&self) -> usize {
        self.num_pairs
    }

    pub fn axis(&self) -> &FrequencyAxis {
        &self.axis
    }

    pub fn tdoa(&self, direction: usize, pair: usize) -> f64 {
        self.tdoas[direction * self.num_pairs + pair]
    }

    /// Direct-path vector `r(θ)` of a grid direction for one pair.
    pub fn ipd_vector(&self, direction: usize, pair: usize) -> DpIpdVector {
        DpIpdVector::from_tdoa(self.tdoa(direction, pair), &self.axis)
    }

    fn check_frame(&self, frame: &ArrayView2<'_, f64>) -> Result<()> {
        if frame.nrows() != self.num_pairs {
            return Err(Error::input(format!(
                "feature frame has {} pairs, geometry has {}",
                frame.nrows(),
                self.num_pairs
            )));
        }
        if frame.ncols() != 2 * self.axis.len() {
            return Err(Error::input(format!(
                "feature vectors have {} values, expected 2F = {}",
                frame.ncols(),
                2 * self.axis.len()
            )));
        }
        Ok(())
    }

    /// `2/(M(M−1)F) Σ_pairs Rᵀ r(θ)` for every grid direction.
    pub fn spectrum_frame(&self, frame: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        self.check_frame(&frame)?;
        let n_freq = self.axis.len();
        // coefficients c_f − j s_f so that Re{Σ a_f e^{jω_f τ}} = Σ c cos + s sin
        let coeffs: Vec<Vec<Complex64>> = frame
            .outer_iter()
            .map(|row| {
                (0..n_freq)
                    .map(|f| Complex64::new(row[2 * f], -row[2 * f + 1]))
                    .collect()
            })
            .collect();
        let n_dirs = self.num_directions();
        let mut out = vec![0.0; n_dirs];
        let scale = 1.0 / (self.num_pairs as f64 * n_freq as f64);
        const LANES: usize = 4;
        let mut d = 0;
        while d < n_dirs {
            let lanes = LANES.min(n_dirs - d);
            let mut acc = [0.0; LANES];
            for (p, a) in coeffs.iter().enumerate() {
                let mut z = [Complex64::default(); LANES];
                for l in 0..lanes {
                    z[l] = self.step[(d + l) * self.num_pairs + p];
                }
                let h = horner(a, &z);
                for l in 0..lanes {
                    acc[l] += (h[l] * self.offset[(d + l) * self.num_pairs + p]).re;
                }
            }
            for l in 0..lanes {
                out[d + l] = acc[l] * scale;
            }
            d += lanes;
        }
        Ok(out)
    }

    pub fn spectrum(&self, features: &IpdFeatureSeq) -> Result<SpatialSpectrum> {
        if features.num_mics() != self.num_mics {
            return Err(Error::input(format!(
                "features are for {} microphones, geometry has {}",
                features.num_mics(),
                self.num_mics
            )));
        }
        let mut values = Array2::zeros((features.num_frames(), self.num_directions()));
        for (n, mut row) in values.outer_iter_mut().enumerate() {
            let spec = self.spectrum_frame(features.frame(n))?;
            row.assign(&ndarray::ArrayView1::from(&spec));
        }
        Ok(SpatialSpectrum::new(values))
    }
}

/// Evaluates `Σ_i a_i z^i` at several points at once; the independent
/// accumulators keep the multiply chains interleaved.
#[inline]
fn horner<const L: usize>(a: &[Complex64], z: &[Complex64; L]) -> [Complex64; L] {
    let mut acc = [Complex64::default(); L];
    for c in a.iter().rev() {
        for l in 0..L {
            acc[l] = acc[l] * z[l] + c;
        }
    }
    acc
}

/// Spectrum built from per-pair feature vectors, one row per output frame.
pub fn srp_dnn_spectrum(
    features: &IpdFeatureSeq,
    geom: &ArrayGeometry,
    grid: &CandidateGrid,
    axis: &FrequencyAxis,
) -> Result<SpatialSpectrum> {
    if features.num_pairs() != geom.num_pairs() {
        return Err(Error::input(format!(
            "features carry {} pairs, geometry has {}",
            features.num_pairs(),
            geom.num_pairs()
        )));
    }
    SteeringTable::new(geom, grid, axis)?.spectrum(features)
}

/// PHAT cross-spectra of every pair, arranged as a feature sequence at the
/// input frame rate.
pub fn phat_features(x: &StftTensor, geom: &ArrayGeometry) -> Result<IpdFeatureSeq> {
    let m = geom.num_mics();
    if m < 2 {
        return Err(Error::config("SRP needs at least 2 microphones"));
    }
    if x.num_channels() != m {
        return Err(Error::input(format!(
            "signal has {} channels, geometry has {m} microphones",
            x.num_channels()
        )));
    }
    let (n, f) = (x.num_frames(), x.num_frequencies());
    let pairs = geom.pairs();
    let mut data = Array3::zeros((n, pairs.len(), 2 * f));
    for (p, pair) in pairs.iter().enumerate() {
        let psi = phat_cross_spectrum(x.channel(pair.m), x.channel(pair.m_prime))?;
        for frame in 0..n {
            for bin in 0..f {
                let v = psi[[frame, bin]];
                data[[frame, p, 2 * bin]] = v.re;
                data[[frame, p, 2 * bin + 1]] = v.im;
            }
        }
    }
    let cfg = x.config();
    IpdFeatureSeq::new(data, m, cfg.sample_rate as f64 / cfg.hop as f64)
}

/// Classical SRP-PHAT, one row per input frame.
pub fn srp_phat_spectrum(
    x: &StftTensor,
    geom: &ArrayGeometry,
    grid: &CandidateGrid,
) -> Result<SpatialSpectrum> {
    let feats = phat_features(x, geom)?;
    SteeringTable::new(geom, grid, &x.config().frequency_axis())?.spectrum(&feats)
}

/// SRP-PHAT at the output frame rate: each row is the mean of the
/// `COMPRESSION_FACTOR` input-frame spectra it covers (computed by pooling the
/// cross spectra first, which is equivalent by linearity).
pub fn srp_phat_pooled(
    x: &StftTensor,
    geom: &ArrayGeometry,
    grid: &CandidateGrid,
) -> Result<SpatialSpectrum> {
    let feats = phat_features(x, geom)?.pooled(COMPRESSION_FACTOR);
    SteeringTable::new(geom, grid, &x.config().frequency_axis())?.spectrum(&feats)
}

/// Feature sequence built from known directions and activity weights
/// (`truths[n]` lists `(θ_k, β_k)` active in output frame `n`).
pub fn oracle_features(
    geom: &ArrayGeometry,
    axis: &FrequencyAxis,
    truths: &[Vec<(Doa, f64)>],
    frame_rate: f64,
) -> Result<IpdFeatureSeq> {
    let pairs = geom.pairs();
    let mut data = Array3::zeros((truths.len(), pairs.len(), 2 * axis.len()));
    for (n, frame) in truths.iter().enumerate() {
        let (doas, betas): (Vec<Doa>, Vec<f64>) = frame.iter().copied().unzip();
        for (p, pair) in pairs.iter().enumerate() {
            let t = target_vector(&doas, &betas, geom, *pair, axis)?;
            data.slice_mut(s![n, p, ..])
                .assign(&ndarray::ArrayView1::from(&t));
        }
    }
    IpdFeatureSeq::new(data, geom.num_mics(), frame_rate)
}
