use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::rir::{fft_convolve, image_method_rir, RirSettings, Room};
use super::signal::SourceSignal;
use crate::error::{Error, Result};
use crate::geometry::{norm, sub, ArrayGeometry, Doa, Vec3};
use crate::srp::COMPRESSION_FACTOR;
use crate::stft::StftConfig;

/// Samples per rendering block for moving sources.
pub const BLOCK: usize = 256;

/// Frames whose clean-source energy is within this many dB of the loudest
/// frame count as active.
pub const ACTIVITY_RANGE_DB: f64 = 40.0;

/// Source positions sampled every `step` samples, starting at sample 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub positions: Vec<Vec3>,
    pub step: usize,
}

impl Trajectory {
    pub fn fixed(position: Vec3) -> Self {
        Self {
            positions: vec![position],
            step: BLOCK,
        }
    }

    pub fn is_static(&self) -> bool {
        self.positions.windows(2).all(|w| w[0] == w[1])
    }

    /// Linearly interpolated position at a (fractional) sample time; held
    /// constant past the last control point.
    pub fn position_at(&self, sample: f64) -> Vec3 {
        let last = self.positions.len() - 1;
        let u = (sample / self.step as f64).max(0.0);
        let i = (u.floor() as usize).min(last);
        if i == last {
            return self.positions[last];
        }
        let frac = u - i as f64;
        let (a, b) = (self.positions[i], self.positions[i + 1]);
        [
            a[0] + frac * (b[0] - a[0]),
            a[1] + frac * (b[1] - a[1]),
            a[2] + frac * (b[2] - a[2]),
        ]
    }

    pub fn max_step(&self) -> f64 {
        self.positions
            .windows(2)
            .map(|w| norm(&sub(&w[1], &w[0])))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixSpec {
    pub sources: Vec<SourceSignal>,
    /// Target SNR in dB against the summed reverberant images; `None`
    /// disables noise.
    pub snr_db: Option<f64>,
    pub seed: u64,
}

/// Everything needed to render one multichannel recording.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub room: Room,
    pub geometry: ArrayGeometry,
    /// Position of the array origin in room coordinates.
    pub array_center: Vec3,
    pub trajectories: Vec<Trajectory>,
    pub mix: MixSpec,
    pub sample_rate: u32,
    pub num_samples: usize,
}

impl Scene {
    pub fn mic_positions(&self) -> Vec<Vec3> {
        self.geometry
            .mics()
            .iter()
            .map(|p| {
                [
                    p[0] + self.array_center[0],
                    p[1] + self.array_center[1],
                    p[2] + self.array_center[2],
                ]
            })
            .collect()
    }

    /// Direction of source `k` as seen from the array origin at a sample time.
    pub fn doa_at(&self, k: usize, sample: f64) -> Result<Doa> {
        let p = self.trajectories[k].position_at(sample);
        Doa::from_vector(&sub(&p, &self.array_center))
    }

    fn validate(&self) -> Result<()> {
        if self.trajectories.len() != self.mix.sources.len() {
            return Err(Error::input(format!(
                "{} trajectories for {} source signals",
                self.trajectories.len(),
                self.mix.sources.len()
            )));
        }
        for mic in self.mic_positions() {
            if !self.room.contains(&mic, 0.0) {
                return Err(Error::input("microphone outside the room"));
            }
        }
        for (k, t) in self.trajectories.iter().enumerate() {
            if t.positions.is_empty() || t.step == 0 {
                return Err(Error::input(format!("trajectory {k} is empty")));
            }
            if let Some(p) = t.positions.iter().find(|p| !self.room.contains(p, 0.0)) {
                return Err(Error::input(format!(
                    "trajectory {k} leaves the room at {p:?}"
                )));
            }
        }
        Ok(())
    }
}

/// Reference direction and activity weight of one source in one output frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceTruth {
    pub doa: Doa,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// `[input frame][source]` directions at frame centers.
    pub frame_doas: Vec<Vec<Doa>>,
    /// `[input frame][source]` activity flags.
    pub frame_active: Vec<Vec<bool>>,
    /// `[output frame][source]` direction at block center and activity weight.
    pub output: Vec<Vec<SourceTruth>>,
}

/// Per-frame activity of a clean signal: frame energy above
/// `max − ACTIVITY_RANGE_DB` (and nonzero).
pub fn frame_activity(signal: &[f64], cfg: &StftConfig) -> Vec<bool> {
    let n = cfg.num_frames(signal.len());
    let energies: Vec<f64> = (0..n)
        .map(|i| {
            signal[i * cfg.hop..i * cfg.hop + cfg.window_length]
                .iter()
                .map(|v| v * v)
                .sum()
        })
        .collect();
    let max = energies.iter().copied().fold(0.0, f64::max);
    let floor = max * 10f64.powf(-ACTIVITY_RANGE_DB / 10.0);
    energies.iter().map(|e| *e > 0.0 && *e > floor).collect()
}

/// Fraction of active input frames in each complete block of
/// `COMPRESSION_FACTOR` frames.
pub fn block_weights(active: &[bool]) -> Vec<f64> {
    active
        .chunks_exact(COMPRESSION_FACTOR)
        .map(|c| c.iter().filter(|a| **a).count() as f64 / COMPRESSION_FACTOR as f64)
        .collect()
}

fn render_source(
    scene: &Scene,
    dry: &[f64],
    trajectory: &Trajectory,
    mics: &[Vec3],
    settings: &RirSettings,
) -> Result<Vec<Vec<f64>>> {
    let len = dry.len();
    let mut out = vec![vec![0.0; len]; mics.len()];
    if trajectory.is_static() {
        for (m, mic) in mics.iter().enumerate() {
            let h = image_method_rir(&scene.room, &trajectory.positions[0], mic, settings)?;
            let y = fft_convolve(dry, &h);
            out[m].copy_from_slice(&y[..len]);
        }
        return Ok(out);
    }
    // triangular windows centered on block boundaries sum to one
    let blocks = len.div_ceil(BLOCK);
    for b in 0..=blocks {
        let center = b * BLOCK;
        let lo = center.saturating_sub(BLOCK - 1);
        let hi = (center + BLOCK).min(len);
        if lo >= hi {
            continue;
        }
        let segment: Vec<f64> = (lo..hi)
            .map(|n| {
                let w = 1.0 - (n as f64 - center as f64).abs() / BLOCK as f64;
                dry[n] * w
            })
            .collect();
        if segment.iter().all(|v| *v == 0.0) {
            continue;
        }
        let pos = trajectory.position_at(center as f64);
        for (m, mic) in mics.iter().enumerate() {
            let h = image_method_rir(&scene.room, &pos, mic, settings)?;
            let y = fft_convolve(&segment, &h);
            for (dst, v) in out[m][lo..].iter_mut().zip(&y) {
                *dst += v;
            }
        }
    }
    Ok(out)
}

/// Renders the scene: every source filtered by its (possibly time-varying)
/// room responses, summed, plus white Gaussian noise at the requested SNR.
/// Returns `[mic][sample]` signals and the per-frame ground truth.
pub fn synthesize(scene: &Scene, stft: &StftConfig) -> Result<(Vec<Vec<f64>>, GroundTruth)> {
    scene.validate()?;
    let fs = scene.sample_rate as f64;
    let len = scene.num_samples;
    let mics = scene.mic_positions();
    let settings = RirSettings::new(fs, scene.geometry.speed_of_sound());

    let dry: Vec<Vec<f64>> = scene
        .mix
        .sources
        .iter()
        .map(|s| s.render(len, fs))
        .collect();
    let mut mix = vec![vec![0.0; len]; mics.len()];
    for (signal, traj) in dry.iter().zip(&scene.trajectories) {
        let images = render_source(scene, signal, traj, &mics, &settings)?;
        for (acc, img) in mix.iter_mut().zip(images) {
            acc.iter_mut().zip(img).for_each(|(a, v)| *a += v);
        }
    }

    if let Some(snr) = scene.mix.snr_db {
        let mut rng = ChaCha8Rng::seed_from_u64(scene.mix.seed);
        let noise: Vec<Vec<f64>> = (0..mics.len())
            .map(|_| (0..len).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        let power = |x: &[Vec<f64>]| {
            x.iter().flatten().map(|v| v * v).sum::<f64>() / (x.len() * len) as f64
        };
        let ps = power(&mix);
        let pn = power(&noise);
        if ps > 0.0 && pn > 0.0 {
            let scale = (ps / (pn * 10f64.powf(snr / 10.0))).sqrt();
            for (acc, n) in mix.iter_mut().zip(&noise) {
                acc.iter_mut().zip(n).for_each(|(a, v)| *a += scale * v);
            }
        }
    }

    let n_frames = stft.num_frames(len);
    let activity: Vec<Vec<bool>> = dry.iter().map(|d| frame_activity(d, stft)).collect();
    let betas: Vec<Vec<f64>> = activity.iter().map(|a| block_weights(a)).collect();
    let hop = stft.hop as f64;
    let wl = stft.window_length as f64;
    let k_count = dry.len();
    let mut frame_doas = Vec::with_capacity(n_frames);
    let mut frame_active = Vec::with_capacity(n_frames);
    for n in 0..n_frames {
        let t = n as f64 * hop + wl / 2.0;
        frame_doas.push((0..k_count).map(|k| scene.doa_at(k, t)).collect::<Result<_>>()?);
        frame_active.push((0..k_count).map(|k| activity[k][n]).collect());
    }
    let n_out = n_frames / COMPRESSION_FACTOR;
    let span = (COMPRESSION_FACTOR - 1) as f64 * hop + wl;
    let mut output = Vec::with_capacity(n_out);
    for n in 0..n_out {
        let t = (n * COMPRESSION_FACTOR) as f64 * hop + span / 2.0;
        output.push(
            (0..k_count)
                .map(|k| {
                    Ok(SourceTruth {
                        doa: scene.doa_at(k, t)?,
                        beta: betas[k][n],
                    })
                })
                .collect::<Result<_>>()?,
        );
    }
    Ok((
        mix,
        GroundTruth {
            frame_doas,
            frame_active,
            output,
        },
    ))
}

/// Ranges for random scene generation. Lengths in meters, times in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub room_min: Vec3,
    pub room_max: Vec3,
    pub rt60: (f64, f64),
    pub snr_db: (f64, f64),
    pub num_sources: usize,
    pub duration: f64,
    pub sample_rate: u32,
    pub moving: bool,
    /// Peak excursion of the sinusoidal path.
    pub amplitude: (f64, f64),
    /// Sinusoid periods over the whole duration.
    pub periods: (f64, f64),
    pub min_source_distance: f64,
    pub wall_margin: f64,
    pub reflection_order: Option<u32>,
    pub gated: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            room_min: [3.0, 3.0, 2.5],
            room_max: [10.0, 8.0, 6.0],
            rt60: (0.2, 1.3),
            snr_db: (5.0, 30.0),
            num_sources: 1,
            duration: 20.0,
            sample_rate: 16_000,
            moving: true,
            amplitude: (0.5, 2.0),
            periods: (1.0, 3.0),
            min_source_distance: 0.3,
            wall_margin: 0.5,
            reflection_order: Some(10),
            gated: true,
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..=hi)
    } else {
        lo
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let ordered = |(a, b): (f64, f64)| a <= b && a.is_finite() && b.is_finite();
        if !(0..3).all(|i| self.room_min[i] > 0.0 && self.room_min[i] <= self.room_max[i]) {
            return Err(Error::config("room size range is empty or non-positive"));
        }
        for (name, r) in [
            ("rt60", self.rt60),
            ("snr_db", self.snr_db),
            ("amplitude", self.amplitude),
            ("periods", self.periods),
        ] {
            if !ordered(r) {
                return Err(Error::config(format!("{name} range is invalid")));
            }
        }
        if self.rt60.0 < 0.0 {
            return Err(Error::config("rt60 must be non-negative"));
        }
        if self.num_sources == 0 {
            return Err(Error::config("need at least one source"));
        }
        if !(self.duration > 0.0) || self.sample_rate == 0 {
            return Err(Error::config("duration and sample rate must be positive"));
        }
        Ok(())
    }
}

fn sinusoid_path(
    rng: &mut ChaCha8Rng,
    start: Vec3,
    end: Vec3,
    cfg: &ScenarioConfig,
    room: &Room,
    steps: usize,
) -> Vec<Vec3> {
    let along = [end[0] - start[0], end[1] - start[1]];
    let l = (along[0] * along[0] + along[1] * along[1]).sqrt();
    // horizontal direction perpendicular to the travel direction
    let perp = if l > 1e-9 {
        [-along[1] / l, along[0] / l]
    } else {
        [1.0, 0.0]
    };
    let mut amp = uniform(rng, cfg.amplitude);
    let periods = uniform(rng, cfg.periods);
    let phase = rng.gen_range(0.0..TAU);
    let build = |amp: f64| -> Vec<Vec3> {
        (0..=steps)
            .map(|i| {
                let u = i as f64 / steps as f64;
                let wiggle = amp * (TAU * periods * u + phase).sin();
                [
                    start[0] + u * (end[0] - start[0]) + wiggle * perp[0],
                    start[1] + u * (end[1] - start[1]) + wiggle * perp[1],
                    start[2] + u * (end[2] - start[2]),
                ]
            })
            .collect()
    };
    // shrink the excursion until the path fits
    loop {
        let path = build(amp);
        if path.iter().all(|p| room.contains(p, cfg.wall_margin)) || amp < 1e-3 {
            return if amp < 1e-3 { build(0.0) } else { path };
        }
        amp *= 0.8;
    }
}

/// Draws a reproducible random scene. The array keeps its own orientation;
/// only its position in the room is random.
pub fn sample_scenario(seed: u64, cfg: &ScenarioConfig, geometry: &ArrayGeometry) -> Result<Scene> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims: Vec3 = std::array::from_fn(|i| uniform(&mut rng, (cfg.room_min[i], cfg.room_max[i])));
    let rt60 = uniform(&mut rng, cfg.rt60);
    let snr = uniform(&mut rng, cfg.snr_db);
    let room = Room::new(dims, rt60, cfg.reflection_order)?;

    let margin = cfg.wall_margin;
    let reach = geometry.radius() + margin;
    if dims.iter().any(|d| *d <= 2.0 * reach) {
        return Err(Error::config(format!(
            "array of radius {:.3} m with {margin} m wall margin does not fit in room {dims:?}",
            geometry.radius()
        )));
    }
    let array_center: Vec3 = std::array::from_fn(|i| rng.gen_range(reach..dims[i] - reach));

    let num_samples = (cfg.duration * cfg.sample_rate as f64).round() as usize;
    let steps = num_samples.div_ceil(BLOCK).max(1);
    let inner = |rng: &mut ChaCha8Rng| -> Vec3 {
        std::array::from_fn(|i| rng.gen_range(margin..dims[i] - margin))
    };
    let far_enough = |p: &Vec3| norm(&sub(p, &array_center)) > cfg.min_source_distance;

    let mut trajectories = Vec::with_capacity(cfg.num_sources);
    for k in 0..cfg.num_sources {
        let mut found = None;
        for _ in 0..200 {
            let start = inner(&mut rng);
            let traj = if cfg.moving {
                let end = inner(&mut rng);
                Trajectory {
                    positions: sinusoid_path(&mut rng, start, end, cfg, &room, steps),
                    step: BLOCK,
                }
            } else {
                Trajectory::fixed(start)
            };
            if traj.positions.iter().all(far_enough) {
                found = Some(traj);
                break;
            }
        }
        let Some(traj) = found else {
            return Err(Error::config(format!(
                "could not place source {k} at least {} m from the array",
                cfg.min_source_distance
            )));
        };
        trajectories.push(traj);
    }
    let sources = (0..cfg.num_sources)
        .map(|_| SourceSignal::SpeechShaped {
            seed: rng.gen(),
            gated: cfg.gated,
        })
        .collect();
    Ok(Scene {
        room,
        geometry: geometry.clone(),
        array_center,
        trajectories,
        mix: MixSpec {
            sources,
            snr_db: Some(snr),
            seed: rng.gen(),
        },
        sample_rate: cfg.sample_rate,
        num_samples,
    })
}

/// Source position at `distance` meters from `center` in direction `doa`.
pub fn place(center: &Vec3, doa: &Doa, distance: f64) -> Vec3 {
    let u = doa.unit_vector();
    [
        center[0] + distance * u[0],
        center[1] + distance * u[1],
        center[2] + distance * u[2],
    ]
}
