//! End-to-end commands: simulate → features → spectra → detection → scores,
//! plus the file formats that connect them.

pub mod feature_file;
pub mod sidecar;
pub mod wav;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{make_grid, ArrayGeometry, CandidateGrid, Doa, GridSpec, BUILTIN_LOCATA};
use crate::idl::{localize_idl, localize_peaks, IdlConfig, LocalizationResult};
use crate::metrics::{match_frame, score, MetricsReport};
use crate::sim::{sample_scenario, synthesize, ScenarioConfig};
use crate::srp::{oracle_features, phat_features, IpdFeatureSeq, SteeringTable, COMPRESSION_FACTOR};
use crate::stft::{stft, StftConfig};

pub use feature_file::FeatureFile;
pub use sidecar::Sidecar;
pub use wav::{read_wav, write_wav, Audio};

pub const MIXTURE_FILE: &str = "mixture.wav";
pub const TRUTH_FILE: &str = "truth.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSource {
    /// Direct-path features built from the ground-truth file.
    Oracle,
    /// PHAT cross spectra of the recording (classical SRP-PHAT).
    Phat,
    /// Features read from a feature file.
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Iterative detection with deflation.
    Idl,
    /// Local maxima of the spectrum.
    Pd,
}

/// Candidate grid in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub azimuth_range: (f64, f64),
    pub elevation_range: (f64, f64),
    pub azimuth_resolution: f64,
    pub elevation_resolution: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            azimuth_range: (-180.0, 180.0),
            elevation_range: (0.0, 180.0),
            azimuth_resolution: 5.0,
            elevation_resolution: 5.0,
        }
    }
}

impl GridConfig {
    pub fn spec(&self) -> GridSpec {
        let r = f64::to_radians;
        GridSpec {
            azimuth_range: (r(self.azimuth_range.0), r(self.azimuth_range.1)),
            elevation_range: (r(self.elevation_range.0), r(self.elevation_range.1)),
            azimuth_resolution: r(self.azimuth_resolution),
            elevation_resolution: r(self.elevation_resolution),
        }
    }
}

/// Settings shared by all commands, loadable from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Geometry file path, or `builtin:locata12`.
    pub geometry: String,
    pub seed: u64,
    pub feature_source: FeatureSource,
    pub method: Method,
    /// A ground-truth source counts as active in an output frame when its
    /// weight reaches this value.
    pub active_beta: f64,
    pub grid: GridConfig,
    pub stft: StftConfig,
    pub idl: IdlConfig,
    pub scenario: ScenarioConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            geometry: BUILTIN_LOCATA.to_string(),
            seed: 0,
            feature_source: FeatureSource::Phat,
            method: Method::Idl,
            active_beta: 0.5,
            grid: GridConfig::default(),
            stft: StftConfig::default(),
            idl: IdlConfig::default(),
            scenario: ScenarioConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.stft.validate()?;
        self.idl.validate()?;
        self.scenario.validate()?;
        if !(self.active_beta > 0.0 && self.active_beta <= 1.0) {
            return Err(Error::config("active_beta must lie in (0, 1]"));
        }
        if self.scenario.sample_rate != self.stft.sample_rate {
            return Err(Error::config(format!(
                "scenario sample rate {} differs from STFT sample rate {}",
                self.scenario.sample_rate, self.stft.sample_rate
            )));
        }
        make_grid(&self.grid.spec())?;
        Ok(())
    }

    pub fn load_geometry(&self) -> Result<ArrayGeometry> {
        ArrayGeometry::load(&self.geometry)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateSummary {
    pub wav: PathBuf,
    pub truth: PathBuf,
    pub num_samples: usize,
    pub output_frames: usize,
    pub notes: Vec<String>,
}

/// Draws the scenario for `cfg.seed`, renders it and writes
/// `mixture.wav` and `truth.txt` into `out_dir`.
pub fn cmd_simulate(cfg: &RunConfig, out_dir: &Path) -> Result<SimulateSummary> {
    cfg.validate()?;
    let geom = cfg.load_geometry()?;
    let scene = sample_scenario(cfg.seed, &cfg.scenario, &geom)?;
    let (signals, truth) = synthesize(&scene, &cfg.stft)?;
    std::fs::create_dir_all(out_dir)?;

    let room = &scene.room;
    let mut notes = vec![
        format!("seed {}", cfg.seed),
        format!(
            "room {:.3} x {:.3} x {:.3} m, rt60 {:.3} s, reflection order {}",
            room.dimensions[0],
            room.dimensions[1],
            room.dimensions[2],
            room.rt60,
            room.reflection_order.map_or("unlimited".to_string(), |o| o.to_string())
        ),
        format!("snr {:.2} dB", scene.mix.snr_db.unwrap_or(f64::INFINITY)),
        format!(
            "array center {:.3} {:.3} {:.3}",
            scene.array_center[0], scene.array_center[1], scene.array_center[2]
        ),
    ];
    for (k, t) in scene.trajectories.iter().enumerate() {
        let p = t.positions[0];
        notes.push(format!(
            "source {k} {} starting at {:.3} {:.3} {:.3}",
            if t.is_static() { "static" } else { "moving" },
            p[0],
            p[1],
            p[2]
        ));
    }

    let wav_path = out_dir.join(MIXTURE_FILE);
    write_wav(
        &wav_path,
        &Audio {
            sample_rate: scene.sample_rate,
            channels: signals,
        },
    )?;
    let sidecar = Sidecar {
        frame_rate: cfg.stft.sample_rate as f64 / cfg.stft.hop as f64 / COMPRESSION_FACTOR as f64,
        frames: truth.output,
        notes: notes.clone(),
    };
    let truth_path = out_dir.join(TRUTH_FILE);
    sidecar.write(&truth_path)?;
    Ok(SimulateSummary {
        wav: wav_path,
        truth: truth_path,
        num_samples: scene.num_samples,
        output_frames: sidecar.frames.len(),
        notes,
    })
}

/// Files a command may read, depending on the feature source.
#[derive(Debug, Clone, Default)]
pub struct Inputs {
    pub wav: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    pub features: Option<PathBuf>,
}

fn need<'a>(p: &'a Option<PathBuf>, what: &str, source: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::input(format!("{source} features need {what}")))
}

/// Features at the output frame rate for the configured source.
pub fn load_features(cfg: &RunConfig, geom: &ArrayGeometry, inputs: &Inputs) -> Result<IpdFeatureSeq> {
    let axis = cfg.stft.frequency_axis();
    let feats = match cfg.feature_source {
        FeatureSource::Oracle => {
            let truth = Sidecar::read(need(&inputs.truth, "a ground-truth file", "oracle")?)?;
            oracle_features(geom, &axis, &truth.weighted(), truth.frame_rate)?
        }
        FeatureSource::Phat => {
            let audio = read_wav(need(&inputs.wav, "a WAV file", "phat")?)?;
            if audio.sample_rate != cfg.stft.sample_rate {
                return Err(Error::input(format!(
                    "WAV sample rate {} differs from configured {}",
                    audio.sample_rate, cfg.stft.sample_rate
                )));
            }
            if audio.channels.len() != geom.num_mics() {
                return Err(Error::input(format!(
                    "WAV has {} channels, geometry has {} microphones",
                    audio.channels.len(),
                    geom.num_mics()
                )));
            }
            phat_features(&stft(&audio.channels, &cfg.stft)?, geom)?.pooled(COMPRESSION_FACTOR)
        }
        FeatureSource::File => {
            let file = FeatureFile::read(need(&inputs.features, "a feature file", "file")?)?;
            let feats = file.to_features()?;
            if feats.num_mics() != geom.num_mics() {
                return Err(Error::input(format!(
                    "feature file has {} microphones, geometry has {}",
                    feats.num_mics(),
                    geom.num_mics()
                )));
            }
            if feats.num_frequencies() != axis.len() {
                return Err(Error::input(format!(
                    "feature file has {} frequencies, STFT settings give {}",
                    feats.num_frequencies(),
                    axis.len()
                )));
            }
            feats
        }
    };
    Ok(feats)
}

/// Geometry, grid and steering table for a config.
pub struct Setup {
    pub geometry: ArrayGeometry,
    pub grid: CandidateGrid,
    pub table: SteeringTable,
}

impl Setup {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let geometry = cfg.load_geometry()?;
        let grid = make_grid(&cfg.grid.spec())?;
        let table = SteeringTable::new(&geometry, &grid, &cfg.stft.frequency_axis())?;
        Ok(Self {
            geometry,
            grid,
            table,
        })
    }
}

/// Runs detection on a feature sequence with the configured method.
pub fn detect(cfg: &RunConfig, setup: &Setup, feats: &IpdFeatureSeq) -> Result<LocalizationResult> {
    match cfg.method {
        Method::Idl => localize_idl(feats, &setup.table, &setup.grid, &cfg.idl),
        Method::Pd => {
            let spectrum = setup.table.spectrum(feats)?;
            let (threshold, k) = match cfg.idl.known_k {
                Some(k) => (0.0, k),
                None => (cfg.idl.beta_th, cfg.idl.k_max),
            };
            Ok(localize_peaks(&spectrum, &setup.grid, threshold, k))
        }
    }
}

pub fn cmd_localize(cfg: &RunConfig, inputs: &Inputs) -> Result<LocalizationResult> {
    let setup = Setup::new(cfg)?;
    let feats = load_features(cfg, &setup.geometry, inputs)?;
    detect(cfg, &setup, &feats)
}

/// Estimates CSV: a `# frames N` line, a header, then one row per
/// detection with angles in degrees.
pub fn estimates_to_csv(result: &LocalizationResult) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# frames {}", result.frames.len());
    s.push_str("frame,rank,azimuth_deg,elevation_deg,weight\n");
    for (n, frame) in result.frames.iter().enumerate() {
        for (i, d) in frame.iter().enumerate() {
            let _ = writeln!(
                s,
                "{n},{i},{:.9},{:.9},{:.6}",
                d.doa.azimuth().to_degrees(),
                d.doa.elevation().to_degrees(),
                d.weight
            );
        }
    }
    s
}

/// Parses an estimates CSV into per-frame directions.
pub fn parse_estimates(text: &str) -> Result<Vec<Vec<Doa>>> {
    const KIND: &str = "estimates file";
    let mut frames: Option<usize> = None;
    let mut rows: Vec<(usize, Doa)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with("frame,") {
            continue;
        }
        if let Some(rest) = line.strip_prefix("# frames") {
            frames = Some(
                rest.trim()
                    .parse()
                    .map_err(|_| Error::format(KIND, "bad frame count"))?,
            );
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let bad = || Error::format(KIND, format!("line {}: expected frame,rank,az,el,weight", i + 1));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(bad());
        }
        let n: usize = f[0].trim().parse().map_err(|_| bad())?;
        let az: f64 = f[2].trim().parse().map_err(|_| bad())?;
        let el: f64 = f[3].trim().parse().map_err(|_| bad())?;
        rows.push((n, Doa::from_degrees(el, az).map_err(|_| bad())?));
    }
    let n_frames = frames.unwrap_or_else(|| rows.iter().map(|r| r.0 + 1).max().unwrap_or(0));
    let mut out = vec![Vec::new(); n_frames];
    for (n, doa) in rows {
        out.get_mut(n)
            .ok_or_else(|| Error::format(KIND, format!("frame {n} beyond declared count {n_frames}")))?
            .push(doa);
    }
    Ok(out)
}

/// Per-frame scoring table plus the overall report.
pub fn cmd_evaluate(
    estimates: &[Vec<Doa>],
    truth: &Sidecar,
    active_beta: f64,
) -> Result<(MetricsReport, String)> {
    let active = truth.active(active_beta);
    if estimates.len() != active.len() {
        return Err(Error::input(format!(
            "{} estimate frames but {} ground-truth frames",
            estimates.len(),
            active.len()
        )));
    }
    let report = score(estimates, &active)?;
    let mut csv = String::from("frame,active,detected,matched,missed,false_alarms,azimuth_error_deg\n");
    for (n, (e, t)) in estimates.iter().zip(&active).enumerate() {
        let m = match_frame(e, t);
        let err = if m.pairs.is_empty() {
            String::new()
        } else {
            format!(
                "{:.6}",
                m.pairs.iter().map(|p| p.2.to_degrees()).sum::<f64>() / m.pairs.len() as f64
            )
        };
        let _ = writeln!(
            csv,
            "{n},{},{},{},{},{},{err}",
            t.len(),
            e.len(),
            m.pairs.len(),
            m.unmatched_truths.len(),
            m.unmatched_estimates.len()
        );
    }
    Ok((report, csv))
}

pub fn format_report(r: &MetricsReport) -> String {
    let opt = |v: Option<f64>, unit: &str| v.map_or("n/a".to_string(), |v| format!("{v:.2}{unit}"));
    format!(
        "frames {}  active {}  detected {}  matched {}\n\
         MAE azimuth {}  MAE elevation {}\n\
         MDR {}  FAR {}",
        r.frames,
        r.active,
        r.detected,
        r.matched,
        opt(r.mae_azimuth, "°"),
        opt(r.mae_elevation, "°"),
        opt(r.mdr, "%"),
        opt(r.far, "%"),
    )
}

/// One frame of the spectrum for the configured source: `(azimuth°,
/// elevation°, value)` per grid direction.
pub fn cmd_spectrum(cfg: &RunConfig, inputs: &Inputs, frame: usize) -> Result<Vec<(f64, f64, f64)>> {
    let setup = Setup::new(cfg)?;
    let feats = load_features(cfg, &setup.geometry, inputs)?;
    if frame >= feats.num_frames() {
        return Err(Error::input(format!(
            "frame {frame} out of range ({} frames)",
            feats.num_frames()
        )));
    }
    let values = setup.table.spectrum_frame(feats.frame(frame))?;
    Ok(setup
        .grid
        .directions()
        .iter()
        .zip(values)
        .map(|(d, v)| (d.azimuth().to_degrees(), d.elevation().to_degrees(), v))
        .collect())
}

pub fn spectrum_to_csv(rows: &[(f64, f64, f64)]) -> String {
    let mut s = String::from("azimuth_deg,elevation_deg,value\n");
    for (az, el, v) in rows {
        let _ = writeln!(s, "{az:.6},{el:.6},{v:.9}");
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Quick internal consistency checks on the configured geometry.
pub fn selftest(cfg: &RunConfig) -> Result<Vec<Check>> {
    use crate::idl::idl;
    use crate::srp::{dp_gcc_single, target_vector};

    let setup = Setup::new(cfg)?;
    let axis = cfg.stft.frequency_axis();
    let geom = &setup.geometry;
    let mut checks = Vec::new();

    // inner product of a weighted target with r(θ) against the GCC form
    let doas = [Doa::from_degrees(70.0, 20.0)?, Doa::from_degrees(100.0, -130.0)?];
    let betas = [1.0, 0.6];
    let probe = Doa::from_degrees(85.0, 10.0)?;
    let mut worst: f64 = 0.0;
    for pair in geom.pairs() {
        let target = target_vector(&doas, &betas, geom, pair, &axis)?;
        let r = crate::srp::dp_ipd_vector(geom, pair, &probe, &axis)?;
        let lhs: f64 = target.iter().zip(r.as_slice()).map(|(a, b)| a * b).sum();
        let mut rhs = 0.0;
        for (d, b) in doas.iter().zip(betas) {
            rhs += b * axis.len() as f64 * dp_gcc_single(geom, pair, d, &probe, &axis)?;
        }
        worst = worst.max((lhs - rhs).abs());
    }
    checks.push(Check {
        name: "inner-product identity",
        passed: worst <= 1e-9,
        detail: format!("max deviation {worst:.2e}"),
    });

    let truth = setup.grid.get(setup.grid.nearest(&Doa::from_degrees(80.0, 40.0)?));
    let feats = oracle_features(geom, &axis, &[vec![(truth, 1.0)]], 1.0)?;
    let spec = setup.table.spectrum_frame(feats.frame(0))?;
    let (best, peak) = spec
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |acc, (i, v)| if *v > acc.1 { (i, *v) } else { acc });
    checks.push(Check {
        name: "oracle peak",
        passed: setup.grid.get(best).angle_to(&truth) < 1e-9 && (peak - 1.0).abs() < 1e-9,
        detail: format!("peak {peak:.6} at grid index {best}"),
    });

    let second = setup.grid.get(setup.grid.nearest(&Doa::from_degrees(95.0, -80.0)?));
    let feats = oracle_features(geom, &axis, &[vec![(truth, 1.0), (second, 0.9)]], 1.0)?;
    let dets = idl(feats.frame(0), &setup.table, &setup.grid, &cfg.idl)?;
    let found = |d: &Doa| dets.iter().any(|x| x.doa.angle_to(d) < 1e-9);
    checks.push(Check {
        name: "two-source detection",
        passed: dets.len() == 2 && found(&truth) && found(&second),
        detail: format!("{} detections", dets.len()),
    });

    let truths: Vec<Vec<Doa>> = (0..10).map(|_| vec![Doa::from_degrees(90.0, 0.0).unwrap()]).collect();
    let mut est: Vec<Vec<Doa>> = (1..10)
        .map(|e| vec![Doa::from_degrees(90.0, e as f64).unwrap()])
        .collect();
    est.push(vec![]);
    let r = score(&est, &truths)?;
    checks.push(Check {
        name: "metrics",
        passed: r.mdr == Some(10.0) && r.far == Some(0.0) && r.mae_azimuth.is_some_and(|m| (m - 5.0).abs() < 1e-12),
        detail: format_report(&r).replace('\n', "; "),
    });
    Ok(checks)
}
