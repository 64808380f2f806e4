//! Frame-level scoring of multi-source direction estimates.
//!
//! An estimate and an active source are matched one-to-one when their azimuth
//! error is at most [`SUCCESS_GATE_DEG`]. Elevation error is reported for
//! matched pairs but does not gate. Rates are percentages of active sources
//! over all frames.

use crate::error::{Error, Result};
use crate::geometry::{azimuth_error, Doa};

pub const SUCCESS_GATE_DEG: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameMatch {
    /// `(estimate index, truth index, azimuth error, elevation error)`, radians.
    pub pairs: Vec<(usize, usize, f64, f64)>,
    pub unmatched_estimates: Vec<usize>,
    pub unmatched_truths: Vec<usize>,
}

impl FrameMatch {
    fn from_pairs(
        pairs: Vec<(usize, usize)>,
        estimates: &[Doa],
        truths: &[Doa],
    ) -> Self {
        let mut pairs: Vec<_> = pairs
            .into_iter()
            .map(|(e, t)| {
                (
                    e,
                    t,
                    azimuth_error(estimates[e].azimuth(), truths[t].azimuth()),
                    (estimates[e].elevation() - truths[t].elevation()).abs(),
                )
            })
            .collect();
        pairs.sort_by_key(|p| p.1);
        let unmatched_estimates = (0..estimates.len())
            .filter(|e| !pairs.iter().any(|p| p.0 == *e))
            .collect();
        let unmatched_truths = (0..truths.len())
            .filter(|t| !pairs.iter().any(|p| p.1 == *t))
            .collect();
        Self {
            pairs,
            unmatched_estimates,
            unmatched_truths,
        }
    }
}

// slack so that errors of exactly 30° survive degree/radian round trips
fn gate() -> f64 {
    SUCCESS_GATE_DEG.to_radians() + 1e-9
}

/// Greedy one-to-one matching, smallest azimuth error first.
///
/// Ties are broken on the estimate's (azimuth, elevation) and then on the
/// truth index, so the outcome does not depend on the order of `estimates`.
pub fn match_frame(estimates: &[Doa], truths: &[Doa]) -> FrameMatch {
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (e, est) in estimates.iter().enumerate() {
        for (t, tru) in truths.iter().enumerate() {
            let err = azimuth_error(est.azimuth(), tru.azimuth());
            if err <= gate() {
                candidates.push((err, e, t));
            }
        }
    }
    candidates.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(estimates[a.1].azimuth().total_cmp(&estimates[b.1].azimuth()))
            .then(estimates[a.1].elevation().total_cmp(&estimates[b.1].elevation()))
            .then(a.2.cmp(&b.2))
    });
    let mut used_e = vec![false; estimates.len()];
    let mut used_t = vec![false; truths.len()];
    let mut pairs = Vec::new();
    for (_, e, t) in candidates {
        if !used_e[e] && !used_t[t] {
            used_e[e] = true;
            used_t[t] = true;
            pairs.push((e, t));
        }
    }
    FrameMatch::from_pairs(pairs, estimates, truths)
}

/// Exhaustive matching that maximizes the number of gated pairs, then
/// minimizes their total azimuth error. Intended as a cross-check for small
/// frames; refuses more than three truths or estimates.
pub fn match_frame_optimal(estimates: &[Doa], truths: &[Doa]) -> Result<FrameMatch> {
    if estimates.len() > 3 || truths.len() > 3 {
        return Err(Error::input("exhaustive matching is limited to three sources"));
    }
    fn search(
        t: usize,
        used: &mut Vec<bool>,
        current: &mut Vec<(usize, usize)>,
        cost: f64,
        err: &dyn Fn(usize, usize) -> Option<f64>,
        n_t: usize,
        best: &mut (usize, f64, Vec<(usize, usize)>),
    ) {
        if t == n_t {
            if current.len() > best.0 || (current.len() == best.0 && cost < best.1) {
                *best = (current.len(), cost, current.clone());
            }
            return;
        }
        search(t + 1, used, current, cost, err, n_t, best);
        for e in 0..used.len() {
            if used[e] {
                continue;
            }
            if let Some(c) = err(e, t) {
                used[e] = true;
                current.push((e, t));
                search(t + 1, used, current, cost + c, err, n_t, best);
                current.pop();
                used[e] = false;
            }
        }
    }
    let err = |e: usize, t: usize| {
        let v = azimuth_error(estimates[e].azimuth(), truths[t].azimuth());
        (v <= gate()).then_some(v)
    };
    let mut best = (0, f64::INFINITY, Vec::new());
    search(
        0,
        &mut vec![false; estimates.len()],
        &mut Vec::new(),
        0.0,
        &err,
        truths.len(),
        &mut best,
    );
    Ok(FrameMatch::from_pairs(best.2, estimates, truths))
}

/// Aggregate scores. Angles in degrees, rates in percent.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsReport {
    /// `None` when nothing was matched.
    pub mae_azimuth: Option<f64>,
    pub mae_elevation: Option<f64>,
    /// `None` when no source was active in any frame.
    pub mdr: Option<f64>,
    pub far: Option<f64>,
    pub active: usize,
    pub detected: usize,
    pub matched: usize,
    pub missed: usize,
    pub false_alarms: usize,
    pub frames: usize,
}

/// Scores per-frame estimates against the per-frame *active* truths.
pub fn score(estimates: &[Vec<Doa>], truths: &[Vec<Doa>]) -> Result<MetricsReport> {
    if estimates.len() != truths.len() {
        return Err(Error::input(format!(
            "{} estimate frames but {} truth frames",
            estimates.len(),
            truths.len()
        )));
    }
    let mut r = MetricsReport {
        frames: estimates.len(),
        ..Default::default()
    };
    let (mut sum_az, mut sum_el) = (0.0, 0.0);
    for (est, tru) in estimates.iter().zip(truths) {
        let m = match_frame(est, tru);
        r.active += tru.len();
        r.detected += est.len();
        r.matched += m.pairs.len();
        r.missed += m.unmatched_truths.len();
        r.false_alarms += m.unmatched_estimates.len();
        for (_, _, az, el) in &m.pairs {
            sum_az += az.to_degrees();
            sum_el += el.to_degrees();
        }
    }
    if r.matched > 0 {
        r.mae_azimuth = Some(sum_az / r.matched as f64);
        r.mae_elevation = Some(sum_el / r.matched as f64);
    }
    if r.active > 0 {
        r.mdr = Some(100.0 * r.missed as f64 / r.active as f64);
        r.far = Some(100.0 * r.false_alarms as f64 / r.active as f64);
    }
    Ok(r)
}
