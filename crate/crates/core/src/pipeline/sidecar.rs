//! Ground-truth text files written next to simulated recordings.
//!
//! ```text
//! # any comment
//! frames 104
//! sources 2
//! frame_rate 5.208333
//! 0 0 0.785398 1.570796 1.000000
//! 0 1 -1.047198 1.396263 0.583333
//! ```
//!
//! Data lines are `frame source azimuth elevation beta`, angles in radians.
//! Every source appears in every frame; `beta` is its activity weight.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Doa;
use crate::sim::SourceTruth;

const KIND: &str = "ground-truth file";

#[derive(Debug, Clone, PartialEq)]
pub struct Sidecar {
    pub frame_rate: f64,
    /// `[output frame][source]`.
    pub frames: Vec<Vec<SourceTruth>>,
    /// Free-form lines written as comments (scene description).
    pub notes: Vec<String>,
}

impl Sidecar {
    pub fn num_sources(&self) -> usize {
        self.frames.first().map_or(0, Vec::len)
    }

    /// Per-frame sources with `beta >= min_beta`.
    pub fn active(&self, min_beta: f64) -> Vec<Vec<Doa>> {
        self.frames
            .iter()
            .map(|f| f.iter().filter(|s| s.beta >= min_beta).map(|s| s.doa).collect())
            .collect()
    }

    /// Per-frame `(doa, beta)` of every source with nonzero weight.
    pub fn weighted(&self) -> Vec<Vec<(Doa, f64)>> {
        self.frames
            .iter()
            .map(|f| f.iter().filter(|s| s.beta > 0.0).map(|s| (s.doa, s.beta)).collect())
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for n in &self.notes {
            let _ = writeln!(s, "# {n}");
        }
        let _ = writeln!(s, "frames {}", self.frames.len());
        let _ = writeln!(s, "sources {}", self.num_sources());
        let _ = writeln!(s, "frame_rate {}", self.frame_rate);
        let _ = writeln!(s, "# frame source azimuth elevation beta");
        for (n, frame) in self.frames.iter().enumerate() {
            for (k, t) in frame.iter().enumerate() {
                let _ = writeln!(
                    s,
                    "{n} {k} {:.9} {:.9} {:.6}",
                    t.doa.azimuth(),
                    t.doa.elevation(),
                    t.beta
                );
            }
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut frames_n = None;
        let mut sources_n = None;
        let mut frame_rate = None;
        let mut notes = Vec::new();
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if let Some(c) = line.strip_prefix('#') {
                if !c.trim_start().starts_with("frame source") {
                    notes.push(c.trim().to_string());
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let bad = |msg: &str| Error::format(KIND, format!("line {}: {msg}", lineno + 1));
            let tok: Vec<&str> = line.split_whitespace().collect();
            match tok.as_slice() {
                ["frames", v] => frames_n = Some(v.parse::<usize>().map_err(|_| bad("bad frame count"))?),
                ["sources", v] => sources_n = Some(v.parse::<usize>().map_err(|_| bad("bad source count"))?),
                ["frame_rate", v] => frame_rate = Some(v.parse::<f64>().map_err(|_| bad("bad frame rate"))?),
                [n, k, az, el, beta] => {
                    let n: usize = n.parse().map_err(|_| bad("bad frame index"))?;
                    let k: usize = k.parse().map_err(|_| bad("bad source index"))?;
                    let num = |v: &str| v.parse::<f64>().map_err(|_| bad("bad number"));
                    let doa = Doa::new(num(el)?, num(az)?).map_err(|e| bad(&e.to_string()))?;
                    rows.push((n, k, SourceTruth { doa, beta: num(beta)? }));
                }
                _ => return Err(bad("unrecognised line")),
            }
        }
        let (Some(frames_n), Some(sources_n), Some(frame_rate)) = (frames_n, sources_n, frame_rate) else {
            return Err(Error::format(KIND, "missing frames/sources/frame_rate header"));
        };
        if rows.len() != frames_n * sources_n {
            return Err(Error::format(
                KIND,
                format!("{} rows for {frames_n} frames × {sources_n} sources", rows.len()),
            ));
        }
        let mut frames: Vec<Vec<Option<SourceTruth>>> = vec![vec![None; sources_n]; frames_n];
        for (n, k, t) in rows {
            let slot = frames
                .get_mut(n)
                .and_then(|f| f.get_mut(k))
                .ok_or_else(|| Error::format(KIND, format!("row ({n}, {k}) out of range")))?;
            if slot.replace(t).is_some() {
                return Err(Error::format(KIND, format!("duplicate row ({n}, {k})")));
            }
        }
        Ok(Self {
            frame_rate,
            frames: frames
                .into_iter()
                .map(|f| f.into_iter().map(|t| t.expect("all slots filled")).collect())
                .collect(),
            notes,
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn truth(el: f64, az: f64, beta: f64) -> SourceTruth {
        SourceTruth {
            doa: Doa::from_degrees(el, az).unwrap(),
            beta,
        }
    }

    #[test]
    fn round_trip() {
        let s = Sidecar {
            frame_rate: 16_000.0 / 256.0 / 12.0,
            frames: vec![
                vec![truth(90.0, 45.0, 1.0), truth(80.0, -60.0, 0.5)],
                vec![truth(91.0, 46.0, 0.25), truth(80.0, -61.0, 0.0)],
            ],
            notes: vec!["room 5 x 4 x 3".into()],
        };
        let back = Sidecar::parse(&s.to_text()).unwrap();
        assert_eq!(back.frames.len(), 2);
        assert_eq!(back.num_sources(), 2);
        assert_eq!(back.notes, s.notes);
        for (a, b) in s.frames.iter().flatten().zip(back.frames.iter().flatten()) {
            assert!(a.doa.angle_to(&b.doa) < 1e-8);
            assert_eq!(a.beta, b.beta);
        }
        assert_eq!(back.active(0.5)[1].len(), 0);
        assert_eq!(back.weighted()[1].len(), 1);
    }

    #[test]
    fn rejects_inconsistent_files() {
        assert!(Sidecar::parse("frames 1\nsources 1\n0 0 0 1 1\n").is_err());
        assert!(Sidecar::parse("frames 1\nsources 2\nframe_rate 5\n0 0 0 1 1\n").is_err());
        assert!(Sidecar::parse("frames 1\nsources 1\nframe_rate 5\n0 0 0 1 1\n0 0 0 1 1\n").is_err());
        assert!(Sidecar::parse("frames 1\nsources 1\nframe_rate 5\n0 0 0 9 1\n").is_err());
        assert!(Sidecar::parse("frames 1\nsources 1\nframe_rate 5\nhello\n").is_err());
    }
}
