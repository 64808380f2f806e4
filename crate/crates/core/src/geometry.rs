//! Array geometry, candidate direction grids and far-field time differences.
//!
//! Directions follow the usual acoustic convention: elevation is measured
//! from the positive z-axis and lies in `[0, π]`, azimuth is measured from
//! the positive x-axis towards positive y and is kept in `[−π, π)`.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

pub const DEFAULT_SPEED_OF_SOUND: f64 = 343.0;

/// Wraps an angle into `[−π, π)`.
pub fn wrap_azimuth(azimuth: f64) -> f64 {
    let wrapped = (azimuth + PI).rem_euclid(TAU) - PI;
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if wrapped >= PI {
        wrapped - TAU
    } else {
        wrapped
    }
}

/// Absolute azimuth difference on the circle, in `[0, π]`.
pub fn azimuth_error(a: f64, b: f64) -> f64 {
    let d = (a - b).abs().rem_euclid(TAU);
    d.min(TAU - d)
}

pub(crate) fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn sub(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn norm(a: &Vec3) -> f64 {
    dot(a, a).sqrt()
}

/// Direction of arrival on the unit sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Doa {
    elevation: f64,
    azimuth: f64,
}

impl Doa {
    pub fn new(elevation: f64, azimuth: f64) -> Result<Self> {
        if !elevation.is_finite() || !azimuth.is_finite() {
            return Err(Error::input("non-finite direction"));
        }
        if !(0.0..=PI).contains(&elevation) {
            return Err(Error::input(format!(
                "elevation {elevation} outside [0, π]"
            )));
        }
        Ok(Self {
            elevation,
            azimuth: wrap_azimuth(azimuth),
        })
    }

    pub fn from_degrees(elevation: f64, azimuth: f64) -> Result<Self> {
        Self::new(elevation.to_radians(), azimuth.to_radians())
    }

    /// Direction of a (not necessarily normalized) Cartesian vector.
    pub fn from_vector(v: &Vec3) -> Result<Self> {
        let r = norm(v);
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::input("direction of a zero or non-finite vector"));
        }
        let elevation = (v[2] / r).clamp(-1.0, 1.0).acos();
        let azimuth = if v[0] == 0.0 && v[1] == 0.0 {
            0.0
        } else {
            v[1].atan2(v[0])
        };
        Self::new(elevation, azimuth)
    }

    pub fn elevation(&self) -> f64 {
        self.elevation
    }

    pub fn azimuth(&self) -> f64 {
        self.azimuth
    }

    pub fn unit_vector(&self) -> Vec3 {
        let (se, ce) = self.elevation.sin_cos();
        let (sa, ca) = self.azimuth.sin_cos();
        [se * ca, se * sa, ce]
    }

    /// Great-circle angle to another direction, in `[0, π]`.
    pub fn angle_to(&self, other: &Doa) -> f64 {
        let a = self.unit_vector();
        let b = other.unit_vector();
        // atan2 form stays accurate for nearly parallel vectors
        let c = [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ];
        norm(&c).atan2(dot(&a, &b))
    }
}

/// Free function form of [`Doa::unit_vector`].
pub fn unit_vector(doa: &Doa) -> Vec3 {
    doa.unit_vector()
}

/// Nonredundant microphone pair, `m < m_prime`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MicPair {
    pub m: usize,
    pub m_prime: usize,
}

impl MicPair {
    pub fn new(m: usize, m_prime: usize) -> Result<Self> {
        if m >= m_prime {
            return Err(Error::config(format!(
                "pair ({m}, {m_prime}) is not in nonredundant order"
            )));
        }
        Ok(Self { m, m_prime })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    mics: Vec<Vec3>,
    speed_of_sound: f64,
}

impl ArrayGeometry {
    pub fn new(mics: Vec<Vec3>, speed_of_sound: f64) -> Result<Self> {
        if mics.len() < 2 {
            return Err(Error::config(format!(
                "array needs at least 2 microphones, got {}",
                mics.len()
            )));
        }
        if mics.len() > u16::MAX as usize {
            return Err(Error::config("too many microphones"));
        }
        if mics.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::config("microphone position is not finite"));
        }
        if !(speed_of_sound > 0.0) || !speed_of_sound.is_finite() {
            return Err(Error::config(format!(
                "speed of sound must be positive, got {speed_of_sound}"
            )));
        }
        Ok(Self {
            mics,
            speed_of_sound,
        })
    }

    /// Approximation of the 12-microphone robot-head array used in the
    /// LOCATA challenge. Coordinates are in meters relative to the head
    /// center; they are close to, but not guaranteed identical with, the
    /// published array.
    pub fn locata_robot_head_approx() -> Self {
        #[rustfmt::skip]
        let mics = vec![
            [-0.028,  0.030, -0.040],
            [ 0.006,  0.057,  0.000],
            [ 0.022,  0.022, -0.046],
            [-0.055, -0.024, -0.025],
            [-0.031,  0.023,  0.042],
            [-0.032,  0.011,  0.046],
            [-0.025, -0.003,  0.051],
            [-0.036, -0.027,  0.038],
            [-0.035, -0.043,  0.025],
            [ 0.029, -0.048, -0.012],
            [ 0.034, -0.030,  0.037],
            [ 0.035,  0.025,  0.039],
        ];
        Self::new(mics, DEFAULT_SPEED_OF_SOUND).expect("built-in geometry is valid")
    }

    pub fn num_mics(&self) -> usize {
        self.mics.len()
    }

    pub fn mics(&self) -> &[Vec3] {
        &self.mics
    }

    pub fn speed_of_sound(&self) -> f64 {
        self.speed_of_sound
    }

    pub fn with_speed_of_sound(mut self, c: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::config(format!("speed of sound must be positive, got {c}")));
        }
        self.speed_of_sound = c;
        Ok(self)
    }

    pub fn num_pairs(&self) -> usize {
        let m = self.mics.len();
        m * (m - 1) / 2
    }

    /// Pairs in nonredundant order: (0,1), (0,2), ..., (0,M−1), (1,2), ...
    pub fn pairs(&self) -> Vec<MicPair> {
        let m = self.mics.len();
        (0..m)
            .flat_map(|a| (a + 1..m).map(move |b| MicPair { m: a, m_prime: b }))
            .collect()
    }

    /// Largest distance of any microphone from the origin.
    pub fn radius(&self) -> f64 {
        self.mics.iter().map(norm).fold(0.0, f64::max)
    }

    fn check_pair(&self, m: usize, m_prime: usize) -> Result<()> {
        let n = self.mics.len();
        if m >= n || m_prime >= n {
            return Err(Error::config(format!(
                "pair ({m}, {m_prime}) out of range for {n} microphones"
            )));
        }
        Ok(())
    }

    /// Position difference `p_m − p_m'`.
    pub fn baseline(&self, pair: MicPair) -> Result<Vec3> {
        self.check_pair(pair.m, pair.m_prime)?;
        Ok(sub(&self.mics[pair.m], &self.mics[pair.m_prime]))
    }

    /// Far-field time difference of arrival between `m` and `m_prime`
    /// (either order) for a source in direction `doa`, in seconds.
    pub fn tdoa_between(&self, m: usize, m_prime: usize, doa: &Doa) -> Result<f64> {
        self.check_pair(m, m_prime)?;
        let d = sub(&self.mics[m], &self.mics[m_prime]);
        Ok(dot(&d, &doa.unit_vector()) / self.speed_of_sound)
    }

    pub fn tdoa(&self, pair: MicPair, doa: &Doa) -> Result<f64> {
        self.tdoa_between(pair.m, pair.m_prime, doa)
    }

    /// Parses the text geometry format:
    ///
    /// ```text
    /// speed_of_sound 343
    /// mic 0 0.05 0.0 0.0
    /// mic 1 -0.05 0.0 0.0
    /// ```
    ///
    /// `#` starts a comment. Indices must be unique and cover `0..M`.
    pub fn parse_config(text: &str) -> Result<Self> {
        const KIND: &str = "geometry config";
        let mut mics = BTreeMap::new();
        let mut speed = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let at = |msg: String| Error::format(KIND, format!("line {}: {msg}", lineno + 1));
            let num = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|_| at(format!("cannot parse number {s:?}")))
            };
            match fields[0] {
                "mic" => {
                    if fields.len() != 5 {
                        return Err(at("expected `mic <index> <x> <y> <z>`".into()));
                    }
                    let idx: usize = fields[1]
                        .parse()
                        .map_err(|_| at(format!("bad mic index {:?}", fields[1])))?;
                    let pos = [num(fields[2])?, num(fields[3])?, num(fields[4])?];
                    if mics.insert(idx, pos).is_some() {
                        return Err(at(format!("duplicate mic index {idx}")));
                    }
                }
                "speed_of_sound" => {
                    if fields.len() != 2 {
                        return Err(at("expected `speed_of_sound <value>`".into()));
                    }
                    if speed.replace(num(fields[1])?).is_some() {
                        return Err(at("speed_of_sound given twice".into()));
                    }
                }
                other => return Err(at(format!("unknown keyword {other:?}"))),
            }
        }
        for (expected, idx) in mics.keys().enumerate() {
            if *idx != expected {
                return Err(Error::format(
                    KIND,
                    format!("mic indices must cover 0..M, missing {expected}"),
                ));
            }
        }
        Self::new(
            mics.into_values().collect(),
            speed.unwrap_or(DEFAULT_SPEED_OF_SOUND),
        )
    }

    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        writeln!(out, "speed_of_sound {}", self.speed_of_sound).unwrap();
        for (i, p) in self.mics.iter().enumerate() {
            writeln!(out, "mic {i} {} {} {}", p[0], p[1], p[2]).unwrap();
        }
        out
    }

    /// Loads a geometry file, or the built-in array for `builtin:locata12`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if path.to_str() == Some(BUILTIN_LOCATA) {
            return Ok(Self::locata_robot_head_approx());
        }
        Self::parse_config(&std::fs::read_to_string(path)?)
    }
}

pub const BUILTIN_LOCATA: &str = "builtin:locata12";

/// Ranges and resolutions of a candidate grid, all in radians.
///
/// An azimuth range spanning the full circle is treated as half-open so
/// that `−π` and `π` are not both emitted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub azimuth_range: (f64, f64),
    pub elevation_range: (f64, f64),
    pub azimuth_resolution: f64,
    pub elevation_resolution: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self::full_sphere(5f64.to_radians())
    }
}

impl GridSpec {
    pub fn full_sphere(resolution: f64) -> Self {
        Self {
            azimuth_range: (-PI, PI),
            elevation_range: (0.0, PI),
            azimuth_resolution: resolution,
            elevation_resolution: resolution,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Ring {
    start: usize,
    len: usize,
}

/// Ordered candidate directions, stored ring by ring (one ring per
/// elevation). Pole rings hold a single direction.
#[derive(Debug, Clone)]
pub struct CandidateGrid {
    directions: Vec<Doa>,
    azimuths: Vec<f64>,
    elevations: Vec<f64>,
    rings: Vec<Ring>,
    /// ring index and azimuth index of every direction
    coords: Vec<(usize, usize)>,
    azimuth_wraps: bool,
    azimuth_resolution: f64,
    elevation_resolution: f64,
}

const ANGLE_EPS: f64 = 1e-9;

fn steps(lo: f64, hi: f64, res: f64, half_open: bool) -> Vec<f64> {
    let span = hi - lo;
    let n = if half_open {
        // count of k with lo + k·res < hi
        ((span - ANGLE_EPS) / res).floor() as usize + 1
    } else {
        ((span + ANGLE_EPS) / res).floor() as usize + 1
    };
    (0..n).map(|k| lo + k as f64 * res).collect()
}

pub fn make_grid(spec: &GridSpec) -> Result<CandidateGrid> {
    let (az_lo, az_hi) = spec.azimuth_range;
    let (el_lo, el_hi) = spec.elevation_range;
    let (az_res, el_res) = (spec.azimuth_resolution, spec.elevation_resolution);
    if !(az_res > 0.0) || !(el_res > 0.0) {
        return Err(Error::config("grid resolutions must be positive"));
    }
    if [az_lo, az_hi, el_lo, el_hi].iter().any(|v| !v.is_finite()) {
        return Err(Error::config("grid ranges must be finite"));
    }
    if az_hi < az_lo || el_hi < el_lo {
        return Err(Error::config("empty grid range"));
    }
    if el_lo < -ANGLE_EPS || el_hi > PI + ANGLE_EPS {
        return Err(Error::config("elevation range must lie within [0, π]"));
    }
    if az_hi - az_lo > TAU + ANGLE_EPS {
        return Err(Error::config("azimuth range wider than a full circle"));
    }
    let azimuth_wraps = az_hi - az_lo >= TAU - ANGLE_EPS;
    let azimuths = steps(az_lo, az_hi, az_res, azimuth_wraps);
    let elevations: Vec<f64> = steps(el_lo, el_hi, el_res, false)
        .into_iter()
        .map(|e| e.clamp(0.0, PI))
        .collect();

    let mut directions = Vec::new();
    let mut rings = Vec::new();
    let mut coords = Vec::new();
    for (ri, &el) in elevations.iter().enumerate() {
        let start = directions.len();
        let is_pole = el.abs() < ANGLE_EPS || (PI - el).abs() < ANGLE_EPS;
        if is_pole {
            let el = if el < 1.0 { 0.0 } else { PI };
            directions.push(Doa::new(el, 0.0)?);
            coords.push((ri, 0));
        } else {
            for (ai, &az) in azimuths.iter().enumerate() {
                directions.push(Doa::new(el, az)?);
                coords.push((ri, ai));
            }
        }
        rings.push(Ring {
            start,
            len: directions.len() - start,
        });
    }
    Ok(CandidateGrid {
        directions,
        azimuths,
        elevations,
        rings,
        coords,
        azimuth_wraps,
        azimuth_resolution: az_res,
        elevation_resolution: el_res,
    })
}

impl CandidateGrid {
    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn directions(&self) -> &[Doa] {
        &self.directions
    }

    pub fn get(&self, idx: usize) -> Doa {
        self.directions[idx]
    }

    pub fn azimuths(&self) -> &[f64] {
        &self.azimuths
    }

    pub fn elevations(&self) -> &[f64] {
        &self.elevations
    }

    pub fn azimuth_resolution(&self) -> f64 {
        self.azimuth_resolution
    }

    pub fn elevation_resolution(&self) -> f64 {
        self.elevation_resolution
    }

    /// Index of the grid direction with the smallest great-circle angle to
    /// `doa`; ties go to the lowest index.
    pub fn nearest(&self, doa: &Doa) -> usize {
        let u = doa.unit_vector();
        let mut best = 0;
        let mut best_cos = f64::NEG_INFINITY;
        for (i, d) in self.directions.iter().enumerate() {
            let c = dot(&u, &d.unit_vector());
            if c > best_cos {
                best_cos = c;
                best = i;
            }
        }
        best
    }

    fn ring_members(&self, ring: usize, azimuth_index: usize) -> Vec<usize> {
        let r = self.rings[ring];
        if r.len == 1 {
            return vec![r.start];
        }
        let n = self.azimuths.len() as isize;
        let mut out = Vec::with_capacity(3);
        for delta in [-1isize, 0, 1] {
            let a = azimuth_index as isize + delta;
            let a = if self.azimuth_wraps {
                a.rem_euclid(n)
            } else if (0..n).contains(&a) {
                a
            } else {
                continue;
            };
            let idx = r.start + a as usize;
            if !out.contains(&idx) {
                out.push(idx);
            }
        }
        out
    }

    /// 8-neighborhood in (elevation, azimuth) index space, wrapping in
    /// azimuth when the grid covers the full circle. A pole neighbors
    /// every direction of the adjacent ring.
    pub fn neighbors(&self, idx: usize) -> Vec<usize> {
        let (ri, ai) = self.coords[idx];
        let pole = self.rings[ri].len == 1 && self.azimuths.len() > 1;
        let mut out = Vec::new();
        let lo = ri.saturating_sub(1);
        let hi = (ri + 1).min(self.rings.len() - 1);
        for r in lo..=hi {
            if pole && r != ri {
                let ring = self.rings[r];
                out.extend(ring.start..ring.start + ring.len);
            } else {
                out.extend(self.ring_members(r, ai));
            }
        }
        out.retain(|&n| n != idx);
        out.sort_unstable();
        out.dedup();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn endfire_pair() -> ArrayGeometry {
        ArrayGeometry::new(vec![[0.05, 0.0, 0.0], [-0.05, 0.0, 0.0]], 343.0).unwrap()
    }

    #[test]
    fn unit_vector_axes() {
        let d = |e: f64, a: f64| Doa::new(e, a).unwrap().unit_vector();
        let z = d(0.0, 0.0);
        assert_abs_diff_eq!(z[2], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(z[0], 0.0, epsilon = 1e-15);
        let x = d(PI / 2.0, 0.0);
        assert_abs_diff_eq!(x[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(x[2], 0.0, epsilon = 1e-15);
        let y = d(PI / 2.0, PI / 2.0);
        assert_abs_diff_eq!(y[1], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(y[0], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn doa_wraps_azimuth_and_rejects_bad_elevation() {
        let d = Doa::new(1.0, PI).unwrap();
        assert_abs_diff_eq!(d.azimuth(), -PI, epsilon = 1e-15);
        assert!(Doa::new(-0.1, 0.0).is_err());
        assert!(Doa::new(PI + 0.1, 0.0).is_err());
        assert!(Doa::new(f64::NAN, 0.0).is_err());
        for a in [-1e-18, -3.0 * PI, 7.0 * PI, 1e6] {
            let w = wrap_azimuth(a);
            assert!((-PI..PI).contains(&w), "{a} -> {w}");
        }
    }

    #[test]
    fn endfire_and_broadside_tdoa() {
        let g = endfire_pair();
        let pair = MicPair::new(0, 1).unwrap();
        let t = g.tdoa(pair, &Doa::new(PI / 2.0, 0.0).unwrap()).unwrap();
        assert_abs_diff_eq!(t, 0.1 / 343.0, epsilon = 1e-15);
        assert_abs_diff_eq!(t, 2.915e-4, epsilon = 1e-7);
        let t = g.tdoa(pair, &Doa::new(PI / 2.0, PI / 2.0).unwrap()).unwrap();
        assert_abs_diff_eq!(t, 0.0, epsilon = 1e-18);
    }

    #[test]
    fn invalid_pair_is_config_error() {
        let g = endfire_pair();
        let doa = Doa::new(1.0, 1.0).unwrap();
        assert!(matches!(
            g.tdoa_between(0, 2, &doa),
            Err(Error::Config(_))
        ));
        assert!(MicPair::new(1, 1).is_err());
        assert!(ArrayGeometry::new(vec![[0.0; 3]], 343.0).is_err());
        assert!(ArrayGeometry::new(vec![[0.0; 3], [f64::NAN, 0.0, 0.0]], 343.0).is_err());
    }

    #[test]
    fn pair_enumeration() {
        let g = ArrayGeometry::locata_robot_head_approx();
        let pairs = g.pairs();
        assert_eq!(pairs.len(), 66);
        assert_eq!(g.num_pairs(), 66);
        assert_eq!(pairs[0], MicPair { m: 0, m_prime: 1 });
        assert_eq!(pairs[11], MicPair { m: 1, m_prime: 2 });
        assert!(pairs.iter().all(|p| p.m < p.m_prime && p.m_prime < 12));
        assert!(g.radius() < 0.1);
    }

    /// Enumerates (az, el) products with explicit loops and collapses poles.
    fn brute_force_count(n_az: usize, n_el: usize) -> (usize, usize) {
        let mut before = 0;
        let mut after = std::collections::BTreeSet::new();
        for e in 0..n_el {
            for a in 0..n_az {
                before += 1;
                if e == 0 || e == n_el - 1 {
                    after.insert((e, 0));
                } else {
                    after.insert((e, a));
                }
            }
        }
        (before, after.len())
    }

    #[test]
    fn full_sphere_grid_counts() {
        let g = make_grid(&GridSpec::default()).unwrap();
        assert_eq!(g.azimuths().len(), 72);
        assert_eq!(g.elevations().len(), 37);
        let (before, after) = brute_force_count(72, 37);
        assert_eq!(before, 2664);
        assert_eq!(after, 2522);
        assert_eq!(g.len(), 2522);

        let g = make_grid(&GridSpec::full_sphere(90f64.to_radians())).unwrap();
        assert_eq!(brute_force_count(4, 3), (12, 6));
        assert_eq!(g.len(), 6);
    }

    #[test]
    fn single_point_and_empty_grids() {
        let spec = GridSpec {
            azimuth_range: (0.3, 0.3),
            elevation_range: (1.0, 1.0),
            azimuth_resolution: 0.1,
            elevation_resolution: 0.1,
        };
        let g = make_grid(&spec).unwrap();
        assert_eq!(g.len(), 1);
        assert!(g.neighbors(0).is_empty());

        let bad = GridSpec {
            azimuth_range: (0.3, 0.2),
            ..spec
        };
        assert!(matches!(make_grid(&bad), Err(Error::Config(_))));
        let bad = GridSpec {
            azimuth_resolution: 0.0,
            ..spec
        };
        assert!(make_grid(&bad).is_err());
    }

    #[test]
    fn grid_directions_unique() {
        let g = make_grid(&GridSpec::default()).unwrap();
        for i in 0..g.len() {
            for j in (i + 1)..g.len() {
                assert!(g.get(i).angle_to(&g.get(j)) > 1e-6, "{i} {j}");
            }
        }
    }

    #[test]
    fn neighbors_wrap_and_poles() {
        let g = make_grid(&GridSpec::default()).unwrap();
        // north pole touches the whole first ring
        assert_eq!(g.neighbors(0).len(), 72);
        // first ring member at az = −180° wraps to +175°
        let n = g.neighbors(1);
        assert!(n.contains(&0));
        assert!(n.contains(&72));
        assert!(n.contains(&2));
        assert!(n.contains(&(72 + 72)));
        assert_eq!(n.len(), 1 + 3 + 2);
        // an equatorial interior point has 8 neighbors
        let idx = g.nearest(&Doa::from_degrees(90.0, 10.0).unwrap());
        assert_eq!(g.neighbors(idx).len(), 8);
        // symmetric relation
        for i in (0..g.len()).step_by(37) {
            for j in g.neighbors(i) {
                assert!(g.neighbors(j).contains(&i));
            }
        }
    }

    #[test]
    fn nearest_finds_exact_grid_points() {
        let g = make_grid(&GridSpec::default()).unwrap();
        for i in (0..g.len()).step_by(11) {
            assert_eq!(g.nearest(&g.get(i)), i);
        }
    }

    #[test]
    fn azimuth_error_examples() {
        let d = f64::to_radians;
        assert_abs_diff_eq!(azimuth_error(0.0, 0.0), 0.0);
        assert_abs_diff_eq!(azimuth_error(d(-175.0), d(175.0)), d(10.0), epsilon = 1e-12);
        assert_abs_diff_eq!(azimuth_error(d(90.0), d(-90.0)), d(180.0), epsilon = 1e-12);
    }

    #[test]
    fn config_round_trip_and_errors() {
        let g = ArrayGeometry::locata_robot_head_approx();
        let parsed = ArrayGeometry::parse_config(&g.to_config_string()).unwrap();
        assert_eq!(parsed, g);

        let text = "# two mics\nspeed_of_sound 340\nmic 1 -0.05 0 0\nmic 0 0.05 0 0\n";
        let g = ArrayGeometry::parse_config(text).unwrap();
        assert_eq!(g.num_mics(), 2);
        assert_eq!(g.mics()[0], [0.05, 0.0, 0.0]);
        assert_eq!(g.speed_of_sound(), 340.0);

        let dup = "mic 0 0 0 0\nmic 0 1 0 0\n";
        assert!(matches!(
            ArrayGeometry::parse_config(dup),
            Err(Error::Format { .. })
        ));
        let gap = "mic 0 0 0 0\nmic 2 1 0 0\n";
        assert!(ArrayGeometry::parse_config(gap).is_err());
        assert!(ArrayGeometry::parse_config("mic 0 0 0\n").is_err());
        assert!(ArrayGeometry::parse_config("bogus 1\n").is_err());
    }

    fn doa_strategy() -> impl Strategy<Value = Doa> {
        (0.0..=PI, -PI..PI).prop_map(|(e, a)| Doa::new(e, a).unwrap())
    }

    proptest! {
        #[test]
        fn unit_vector_has_unit_norm(doa in doa_strategy()) {
            prop_assert!((norm(&doa.unit_vector()) - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn tdoa_bounded_and_antisymmetric(
            mics in proptest::collection::vec(
                proptest::array::uniform3(-0.5f64..0.5), 2..6),
            doa in doa_strategy(),
            sel in (0usize..100, 0usize..100),
        ) {
            let g = ArrayGeometry::new(mics, 343.0).unwrap();
            let m = sel.0 % g.num_mics();
            let n = sel.1 % g.num_mics();
            let t = g.tdoa_between(m, n, &doa).unwrap();
            let t_rev = g.tdoa_between(n, m, &doa).unwrap();
            prop_assert!((t + t_rev).abs() <= 1e-18);
            let base = norm(&sub(&g.mics()[m], &g.mics()[n]));
            prop_assert!(t.abs() <= base / 343.0 * (1.0 + 1e-12));
        }

        #[test]
        fn azimuth_error_is_a_metric(a in -10.0f64..10.0, b in -10.0f64..10.0, c in -10.0f64..10.0) {
            let ab = azimuth_error(a, b);
            prop_assert!((0.0..=PI).contains(&ab));
            prop_assert!((ab - azimuth_error(b, a)).abs() < 1e-12);
            prop_assert!(ab <= azimuth_error(a, c) + azimuth_error(c, b) + 1e-12);
        }
    }
}
