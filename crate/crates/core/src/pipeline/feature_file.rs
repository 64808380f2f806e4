//! Binary container for per-pair feature sequences.
//!
//! Layout, all little-endian:
//!
//! | field        | type            |
//! |--------------|-----------------|
//! | magic        | `b"SRPF"`       |
//! | version      | u16 (= 1)       |
//! | mics         | u16             |
//! | frequencies  | u16             |
//! | pairs        | u16             |
//! | frames       | u32             |
//! | frame rate   | f32 (Hz)        |
//! | pair table   | (u16, u16) × pairs |
//! | payload      | f32 × frames × pairs × 2·frequencies |
//!
//! Each payload vector is `[re₁, im₁, re₂, im₂, …]`, i.e. cos/sin
//! interleaved per frequency.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array3;

use crate::error::{Error, Result};
use crate::srp::IpdFeatureSeq;

pub const MAGIC: [u8; 4] = *b"SRPF";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 20;
const KIND: &str = "feature file";

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFile {
    pub num_mics: u16,
    pub num_frequencies: u16,
    pub frame_rate: f32,
    pub pairs: Vec<(u16, u16)>,
    pub num_frames: u32,
    /// `frames × pairs × 2F` values in frame-major order.
    pub payload: Vec<f32>,
}

fn nonredundant_pairs(m: u16) -> Vec<(u16, u16)> {
    (0..m)
        .flat_map(|a| (a + 1..m).map(move |b| (a, b)))
        .collect()
}

impl FeatureFile {
    pub fn from_features(features: &IpdFeatureSeq) -> Result<Self> {
        let narrow = |v: usize, what: &str| {
            u16::try_from(v).map_err(|_| Error::input(format!("{what} {v} does not fit the header")))
        };
        let num_mics = narrow(features.num_mics(), "microphone count")?;
        let num_frequencies = narrow(features.num_frequencies(), "frequency count")?;
        let num_frames = u32::try_from(features.num_frames())
            .map_err(|_| Error::input("too many frames for the header"))?;
        Ok(Self {
            num_mics,
            num_frequencies,
            frame_rate: features.frame_rate() as f32,
            pairs: nonredundant_pairs(num_mics),
            num_frames,
            payload: features.data().iter().map(|v| *v as f32).collect(),
        })
    }

    pub fn to_features(&self) -> Result<IpdFeatureSeq> {
        self.validate()?;
        let shape = (
            self.num_frames as usize,
            self.pairs.len(),
            2 * self.num_frequencies as usize,
        );
        let data = Array3::from_shape_vec(shape, self.payload.iter().map(|v| *v as f64).collect())
            .map_err(|e| Error::format(KIND, e.to_string()))?;
        IpdFeatureSeq::new(data, self.num_mics as usize, self.frame_rate as f64)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_mics < 2 {
            return Err(Error::format(KIND, "fewer than two microphones"));
        }
        if self.num_frequencies == 0 {
            return Err(Error::format(KIND, "zero frequencies"));
        }
        let expected = nonredundant_pairs(self.num_mics);
        if self.pairs.len() != expected.len() {
            return Err(Error::format(
                KIND,
                format!(
                    "{} pairs listed, {} microphones need {}",
                    self.pairs.len(),
                    self.num_mics,
                    expected.len()
                ),
            ));
        }
        if self.pairs != expected {
            return Err(Error::format(KIND, "pair table is not in nonredundant order"));
        }
        let want = self.num_frames as usize * self.pairs.len() * 2 * self.num_frequencies as usize;
        if self.payload.len() != want {
            return Err(Error::format(
                KIND,
                format!("payload holds {} values, header implies {want}", self.payload.len()),
            ));
        }
        if !(self.frame_rate.is_finite() && self.frame_rate > 0.0) {
            return Err(Error::format(KIND, "frame rate must be positive"));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let pairs = self.pairs.len() as u16;
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.pairs.len() + 4 * self.payload.len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.num_mics.to_le_bytes());
        out.extend_from_slice(&self.num_frequencies.to_le_bytes());
        out.extend_from_slice(&pairs.to_le_bytes());
        out.extend_from_slice(&self.num_frames.to_le_bytes());
        out.extend_from_slice(&self.frame_rate.to_le_bytes());
        for (a, b) in &self.pairs {
            out.extend_from_slice(&a.to_le_bytes());
            out.extend_from_slice(&b.to_le_bytes());
        }
        for v in &self.payload {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::format(KIND, "truncated header"));
        }
        if bytes[..4] != MAGIC {
            return Err(Error::format(KIND, "bad magic"));
        }
        let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let version = u16_at(4);
        if version != VERSION {
            return Err(Error::format(KIND, format!("unsupported version {version}")));
        }
        let num_mics = u16_at(6);
        let num_frequencies = u16_at(8);
        let num_pairs = u16_at(10) as usize;
        let num_frames = u32_at(12);
        let frame_rate = f32::from_bits(u32_at(16));
        let table_end = HEADER_LEN + 4 * num_pairs;
        let payload_len = num_frames as usize * num_pairs * 2 * num_frequencies as usize;
        let expected = table_end + 4 * payload_len;
        if bytes.len() != expected {
            return Err(Error::format(
                KIND,
                format!("file is {} bytes, header implies {expected}", bytes.len()),
            ));
        }
        let pairs = (0..num_pairs)
            .map(|i| (u16_at(HEADER_LEN + 4 * i), u16_at(HEADER_LEN + 4 * i + 2)))
            .collect();
        let payload = bytes[table_end..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let file = Self {
            num_mics,
            num_frequencies,
            frame_rate,
            pairs,
            num_frames,
            payload,
        };
        file.validate()?;
        Ok(file)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let bytes = self.to_bytes()?;
        std::fs::File::create(path)?.write_all(&bytes)?;
        Ok(())
    }
}
