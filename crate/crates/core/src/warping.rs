//! Banded dynamic time warping on raw signals and on derivative estimates,
//! plus the scalar features read off the optimal path.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::session::{Session, AU_COLUMNS, K_AU};

pub const DEFAULT_THETA_SECONDS: f64 = 5.0;

/// Sakoe-Chiba band: the largest permitted |u − v| in frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignmentConstraints {
    pub theta_seconds: f64,
    pub frame_rate_hz: f64,
    pub band_frames: usize,
}

impl AlignmentConstraints {
    /// `band_frames = ⌊Θ · f_s⌋`. A relative tolerance of 1e-9 keeps rates
    /// measured from rounded timestamps (29.999999…) on the intended frame.
    pub fn new(theta_seconds: f64, frame_rate_hz: f64) -> Result<Self> {
        if !(theta_seconds.is_finite() && theta_seconds >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "theta must be non-negative, got {theta_seconds}"
            )));
        }
        if !(frame_rate_hz.is_finite() && frame_rate_hz > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "frame rate must be positive, got {frame_rate_hz}"
            )));
        }
        let frames = theta_seconds * frame_rate_hz;
        let band_frames = (frames * (1.0 + 1e-9)).floor() as usize;
        Ok(AlignmentConstraints {
            theta_seconds,
            frame_rate_hz,
            band_frames,
        })
    }

    /// Constraints given directly in frames.
    pub fn from_band(band_frames: usize) -> Self {
        AlignmentConstraints {
            theta_seconds: band_frames as f64,
            frame_rate_hz: 1.0,
            band_frames,
        }
    }
}

/// An optimal alignment. `u` indexes the first signal and `v` the second,
/// both 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpingPath {
    pub u: Vec<usize>,
    pub v: Vec<usize>,
    pub total_cost: f64,
}

impl WarpingPath {
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn deviations(&self) -> impl Iterator<Item = usize> + '_ {
        self.u.iter().zip(&self.v).map(|(&a, &b)| a.abs_diff(b))
    }

    /// Σ_t |x1[u_t] − x2[v_t]| recomputed from the path.
    pub fn recompute_cost(&self, x1: &[f64], x2: &[f64]) -> f64 {
        self.u
            .iter()
            .zip(&self.v)
            .fold(0.0, |acc, (&a, &b)| acc + (x1[a - 1] - x2[b - 1]).abs())
    }
}

/// Keogh-Pazzani slope estimate. Endpoints copy their interior neighbour.
pub fn derivative_series(x: &[f64]) -> Result<Vec<f64>> {
    let n = x.len();
    if n < 3 {
        return Err(Error::InvalidArgument(format!(
            "derivative needs at least 3 samples, got {n}"
        )));
    }
    let mut d = vec![0.0; n];
    for m in 1..n - 1 {
        d[m] = ((x[m] - x[m - 1]) + (x[m + 1] - x[m - 1]) / 2.0) / 2.0;
    }
    d[0] = d[1];
    d[n - 1] = d[n - 2];
    Ok(d)
}

const DIAG: u8 = 0;
const FROM_LEFT: u8 = 1; // (i, j-1): u holds, v advances
const FROM_UP: u8 = 2; // (i-1, j): u advances, v holds

/// Globally optimal monotone alignment under the band, with L1 local cost and
/// steps (1,1), (0,1), (1,0). Predecessor ties prefer the diagonal, then
/// (0,1), then (1,0).
pub fn dtw_align(
    x1: &[f64],
    x2: &[f64],
    constraints: &AlignmentConstraints,
) -> Result<WarpingPath> {
    let n = x1.len();
    if n != x2.len() {
        return Err(Error::LengthMismatch {
            expected: n,
            got: x2.len(),
        });
    }
    if n == 0 {
        return Err(Error::InvalidArgument("cannot align empty signals".into()));
    }
    let band = constraints.band_frames.min(n - 1);
    let width = 2 * band + 1;
    // Row i stores columns j = i − band ..= i + band at offset j + band − i.
    let mut prev = vec![f64::INFINITY; width];
    let mut cur = vec![f64::INFINITY; width];
    let mut steps = vec![DIAG; n * width];

    for i in 0..n {
        cur.fill(f64::INFINITY);
        let j_lo = i.saturating_sub(band);
        let j_hi = (i + band).min(n - 1);
        for j in j_lo..=j_hi {
            let k = j + band - i;
            let cost = (x1[i] - x2[j]).abs();
            if i == 0 && j == 0 {
                cur[k] = cost;
                continue;
            }
            // Diagonal (i-1, j-1) sits at the same offset in the previous row.
            let diag = if i > 0 && j > 0 { prev[k] } else { f64::INFINITY };
            let left = if k > 0 { cur[k - 1] } else { f64::INFINITY };
            let up = if i > 0 && k + 1 < width {
                prev[k + 1]
            } else {
                f64::INFINITY
            };
            let (mut best, mut step) = (diag, DIAG);
            if left < best {
                best = left;
                step = FROM_LEFT;
            }
            if up < best {
                best = up;
                step = FROM_UP;
            }
            cur[k] = cost + best;
            steps[i * width + k] = step;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let total_cost = prev[band];

    let mut u = Vec::with_capacity(2 * n);
    let mut v = Vec::with_capacity(2 * n);
    let (mut i, mut j) = (n - 1, n - 1);
    loop {
        u.push(i + 1);
        v.push(j + 1);
        if i == 0 && j == 0 {
            break;
        }
        match steps[i * width + j + band - i] {
            DIAG => {
                i -= 1;
                j -= 1;
            }
            FROM_LEFT => j -= 1,
            _ => i -= 1,
        }
    }
    u.reverse();
    v.reverse();
    Ok(WarpingPath { u, v, total_cost })
}

/// DTW on the derivative estimates of both signals. The cost is in
/// derivative units; path indices refer to the original frames.
pub fn ddtw_align(
    x1: &[f64],
    x2: &[f64],
    constraints: &AlignmentConstraints,
) -> Result<WarpingPath> {
    dtw_align(&derivative_series(x1)?, &derivative_series(x2)?, constraints)
}

/// Median |v − u| over the path, divided by √2 (distance to the diagonal).
/// Even-length medians average the two central values.
pub fn wp_meddev(path: &WarpingPath) -> f64 {
    let mut dev: Vec<usize> = path.deviations().collect();
    if dev.is_empty() {
        return 0.0;
    }
    dev.sort_unstable();
    let n = dev.len();
    let median = if n % 2 == 1 {
        dev[n / 2] as f64
    } else {
        (dev[n / 2 - 1] + dev[n / 2]) as f64 / 2.0
    };
    median / std::f64::consts::SQRT_2
}

/// Path cost per frame of session.
pub fn normalized_dtw_distance(path: &WarpingPath, frames: usize) -> f64 {
    path.total_cost / frames.max(1) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarpMethod {
    WpDdtw,
    WpDtw,
    DistDdtw,
    DistDtw,
}

impl WarpMethod {
    pub fn align(
        self,
        x1: &[f64],
        x2: &[f64],
        c: &AlignmentConstraints,
    ) -> Result<WarpingPath> {
        match self {
            WarpMethod::WpDdtw | WarpMethod::DistDdtw => ddtw_align(x1, x2, c),
            WarpMethod::WpDtw | WarpMethod::DistDtw => dtw_align(x1, x2, c),
        }
    }

    pub fn feature(self, path: &WarpingPath, frames: usize) -> f64 {
        match self {
            WarpMethod::WpDdtw | WarpMethod::WpDtw => wp_meddev(path),
            WarpMethod::DistDdtw | WarpMethod::DistDtw => normalized_dtw_distance(path, frames),
        }
    }

    /// Applies `align` then `feature` to one pair of series.
    pub fn pair_feature(
        self,
        x1: &[f64],
        x2: &[f64],
        c: &AlignmentConstraints,
    ) -> Result<f64> {
        Ok(self.feature(&self.align(x1, x2, c)?, x1.len()))
    }
}

/// Per-channel synchrony vector for one session, aligning subject 1 (H)
/// against subject 2 (T) on each AU channel.
pub fn session_sync_features(
    session: &Session,
    method: WarpMethod,
    constraints: &AlignmentConstraints,
) -> Result<Vec<f64>> {
    let [h, t] = &session.subjects;
    (0..K_AU)
        .map(|k| {
            method
                .pair_feature(&h.channels[k], &t.channels[k], constraints)
                .map_err(|e| Error::Channel {
                    channel: AU_COLUMNS[k].to_string(),
                    source: Box::new(e),
                })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Every monotone banded path from (0,0) to (n−1,n−1), exhaustively.
    pub(crate) fn brute_force_cost(x1: &[f64], x2: &[f64], band: usize) -> f64 {
        fn walk(x1: &[f64], x2: &[f64], band: usize, i: usize, j: usize, acc: f64) -> f64 {
            let n = x1.len();
            let acc = acc + (x1[i] - x2[j]).abs();
            if i == n - 1 && j == n - 1 {
                return acc;
            }
            let mut best = f64::INFINITY;
            for (di, dj) in [(1, 1), (0, 1), (1, 0)] {
                let (a, b) = (i + di, j + dj);
                if a < n && b < n && a.abs_diff(b) <= band {
                    best = best.min(walk(x1, x2, band, a, b, acc));
                }
            }
            best
        }
        walk(x1, x2, band, 0, 0, 0.0)
    }

    fn assert_valid(path: &WarpingPath, n: usize, band: usize) {
        assert_eq!((path.u[0], path.v[0]), (1, 1));
        assert_eq!((*path.u.last().unwrap(), *path.v.last().unwrap()), (n, n));
        for t in 1..path.len() {
            let du = path.u[t] - path.u[t - 1];
            let dv = path.v[t] - path.v[t - 1];
            assert!(du <= 1 && dv <= 1 && du + dv > 0);
        }
        assert!(path.deviations().all(|d| d <= band));
    }

    #[test]
    fn band_from_seconds() {
        assert_eq!(AlignmentConstraints::new(5.0, 30.0).unwrap().band_frames, 150);
        let measured = 5399.0 / (5399.0 / 30.0 + 1e-12);
        assert_eq!(AlignmentConstraints::new(5.0, measured).unwrap().band_frames, 150);
        assert_eq!(AlignmentConstraints::new(2.0, 29.97).unwrap().band_frames, 59);
        assert!(AlignmentConstraints::new(5.0, 0.0).is_err());
    }

    #[test]
    fn derivative_examples() {
        assert_eq!(derivative_series(&[2.0; 6]).unwrap(), vec![0.0; 6]);
        let ramp: Vec<f64> = (0..10).map(|m| m as f64).collect();
        assert!(derivative_series(&ramp).unwrap().iter().all(|&d| d == 1.0));
        let x = [0.3, 1.9, 0.4, 2.2, 5.0];
        let shifted: Vec<f64> = x.iter().map(|v| v + 1.25).collect();
        let a = derivative_series(&x).unwrap();
        let b = derivative_series(&shifted).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() < 1e-12);
        }
        assert!(derivative_series(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn identical_signals_align_on_the_diagonal() {
        let x = [0.0, 1.0, 3.0, 1.0, 0.0, 2.0];
        let p = dtw_align(&x, &x, &AlignmentConstraints::from_band(3)).unwrap();
        assert_eq!(p.u, vec![1, 2, 3, 4, 5, 6]);
        assert_eq!(p.u, p.v);
        assert_eq!(p.total_cost, 0.0);
        assert_eq!(wp_meddev(&p), 0.0);
    }

    #[test]
    fn zero_band_forces_the_diagonal() {
        let x1 = [0.0, 2.0, 1.0, 4.0];
        let x2 = [1.0, 0.0, 3.0, 3.0];
        let p = dtw_align(&x1, &x2, &AlignmentConstraints::from_band(0)).unwrap();
        assert_eq!(p.u, p.v);
        assert_eq!(p.total_cost, 1.0 + 2.0 + 2.0 + 1.0);
    }

    #[test]
    fn one_frame_shift_costs_nothing() {
        let x1 = [0.0, 0.0, 1.0, 0.0, 0.0];
        let x2 = [0.0, 1.0, 0.0, 0.0, 0.0];
        let p = dtw_align(&x1, &x2, &AlignmentConstraints::from_band(1)).unwrap();
        assert_eq!(p.total_cost, 0.0);
        assert_eq!(brute_force_cost(&x1, &x2, 1), 0.0);
        let peak = p.u.iter().zip(&p.v).position(|(&a, &b)| a == 3 && b == 2);
        assert!(peak.is_some());
        assert_valid(&p, 5, 1);
    }

    #[test]
    fn ddtw_ignores_offsets() {
        let ramp: Vec<f64> = (0..20).map(|m| 0.25 * m as f64).collect();
        let lifted: Vec<f64> = ramp.iter().map(|v| v + 7.0).collect();
        let c = AlignmentConstraints::from_band(5);
        let p = ddtw_align(&ramp, &lifted, &c).unwrap();
        assert_eq!(p.u, p.v);
        assert_eq!(p.total_cost, 0.0);
        let q = ddtw_align(&ramp, &ramp, &c).unwrap();
        assert_eq!(q.total_cost, 0.0);
        assert_eq!(q.u, q.v);
    }

    #[test]
    fn meddev_examples() {
        let p = WarpingPath {
            u: vec![1, 2, 3],
            v: vec![1, 4, 7],
            total_cost: 0.0,
        };
        assert!((wp_meddev(&p) - 2.0f64.sqrt()).abs() < 1e-15);
        let even = WarpingPath {
            u: vec![1, 1, 2, 3],
            v: vec![1, 2, 4, 3],
            total_cost: 0.0,
        };
        // Deviations {0, 1, 2, 0}: median (0 + 1) / 2.
        assert!((wp_meddev(&even) - 0.5 / 2.0f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn normalized_distance_examples() {
        let p = WarpingPath {
            u: vec![1],
            v: vec![1],
            total_cost: 54.0,
        };
        assert!((normalized_dtw_distance(&p, 5400) - 0.01).abs() < 1e-15);
        let z = WarpingPath {
            total_cost: 0.0,
            ..p
        };
        assert_eq!(normalized_dtw_distance(&z, 10), 0.0);
    }

    /// Sparse impulse train delayed by `lag` frames.
    fn impulse_pair(n: usize, lag: usize) -> (Vec<f64>, Vec<f64>) {
        let mut x1 = vec![0.0; n];
        for (k, m) in (lag + 5..n - lag - 5).step_by(23).enumerate() {
            x1[m] = 1.0 + (k % 3) as f64;
        }
        let mut x2 = vec![0.0; n];
        for m in lag..n {
            x2[m] = x1[m - lag];
        }
        (x1, x2)
    }

    #[test]
    fn shifted_impulse_trains_recover_the_lag() {
        for lag in [1, 3, 6] {
            let (x1, x2) = impulse_pair(200, lag);
            let p = ddtw_align(&x1, &x2, &AlignmentConstraints::from_band(10)).unwrap();
            assert_eq!(p.total_cost, 0.0);
            assert!((wp_meddev(&p) - lag as f64 / 2.0f64.sqrt()).abs() < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn dtw_matches_brute_force(
            pair in (1usize..9).prop_flat_map(|n| (
                prop::collection::vec(0i32..6, n),
                prop::collection::vec(0i32..6, n),
                0usize..4,
            ))
        ) {
            let (a, b, band) = pair;
            let x1: Vec<f64> = a.iter().map(|&v| v as f64).collect();
            let x2: Vec<f64> = b.iter().map(|&v| v as f64).collect();
            let p = dtw_align(&x1, &x2, &AlignmentConstraints::from_band(band)).unwrap();
            prop_assert_eq!(p.total_cost, brute_force_cost(&x1, &x2, band));
            prop_assert_eq!(p.recompute_cost(&x1, &x2), p.total_cost);
            assert_valid(&p, x1.len(), band);
        }

        #[test]
        fn cost_is_symmetric_and_band_monotone(
            x1 in prop::collection::vec(0.0f64..5.0, 12),
            x2 in prop::collection::vec(0.0f64..5.0, 12),
            band in 0usize..6,
        ) {
            let c = AlignmentConstraints::from_band(band);
            let wide = AlignmentConstraints::from_band(band + 1);
            let ab = dtw_align(&x1, &x2, &c).unwrap();
            let ba = dtw_align(&x2, &x1, &c).unwrap();
            prop_assert!((ab.total_cost - ba.total_cost).abs() < 1e-9);
            prop_assert!(dtw_align(&x1, &x2, &wide).unwrap().total_cost <= ab.total_cost + 1e-9);
            let m = wp_meddev(&ab);
            prop_assert!(m >= 0.0 && m <= band as f64 / 2.0f64.sqrt() + 1e-12);
        }

        #[test]
        fn ddtw_path_ignores_constant_offsets(
            x1 in prop::collection::vec(0i32..8, 15),
            x2 in prop::collection::vec(0i32..8, 15),
            c1 in -4i32..4, c2 in -4i32..4, band in 0usize..5,
        ) {
            // Dyadic values keep the derivative arithmetic exact.
            let f = |v: &[i32], c: i32| v.iter().map(|&a| (a + c) as f64 * 0.5).collect::<Vec<_>>();
            let c = AlignmentConstraints::from_band(band);
            let p = ddtw_align(&f(&x1, 0), &f(&x2, 0), &c).unwrap();
            let q = ddtw_align(&f(&x1, c1), &f(&x2, c2), &c).unwrap();
            prop_assert_eq!(p, q);
        }
    }
}
