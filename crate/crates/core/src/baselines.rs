//! Comparison measures: windowed cross-correlation synchrony duration,
//! one-dimensional earth mover's distance, per-person AU activity features,
//! and the univariate motion-energy variants.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::session::{Role, Session};
use crate::warping::{ddtw_align, wp_meddev, AlignmentConstraints};

/// Windowed cross-correlation settings. The defaults are conventional choices
/// (5 s windows, 1 s steps, ±5 s lags, |r| ≥ 0.4), not published values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WccParams {
    pub window_seconds: f64,
    pub increment_seconds: f64,
    pub max_lag_seconds: f64,
    pub sync_threshold: f64,
}

impl Default for WccParams {
    fn default() -> Self {
        WccParams {
            window_seconds: 5.0,
            increment_seconds: 1.0,
            max_lag_seconds: 5.0,
            sync_threshold: 0.4,
        }
    }
}

impl WccParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.window_seconds > 0.0) {
            return bad(format!("WCC window must be positive, got {}", self.window_seconds));
        }
        if !(self.increment_seconds > 0.0 && self.increment_seconds <= self.window_seconds) {
            return bad(format!(
                "WCC increment must lie in (0, window], got {}",
                self.increment_seconds
            ));
        }
        if !(self.max_lag_seconds >= 0.0) {
            return bad(format!("WCC max lag must be non-negative, got {}", self.max_lag_seconds));
        }
        if !(self.sync_threshold > 0.0 && self.sync_threshold < 1.0) {
            return bad(format!(
                "WCC threshold must lie in (0, 1), got {}",
                self.sync_threshold
            ));
        }
        Ok(())
    }
}

fn to_frames(seconds: f64, fs: f64) -> usize {
    (seconds * fs * (1.0 + 1e-9)).floor() as usize
}

struct Moments {
    sum: Vec<f64>,
    sq: Vec<f64>,
}

impl Moments {
    fn new(x: &[f64]) -> Self {
        let mut sum = Vec::with_capacity(x.len() + 1);
        let mut sq = Vec::with_capacity(x.len() + 1);
        let (mut s, mut q) = (0.0, 0.0);
        sum.push(0.0);
        sq.push(0.0);
        for &v in x {
            s += v;
            q += v * v;
            sum.push(s);
            sq.push(q);
        }
        Moments { sum, sq }
    }

    /// (mean, centred sum of squares) over `start..start + len`.
    fn window(&self, start: usize, len: usize) -> (f64, f64) {
        let s = self.sum[start + len] - self.sum[start];
        let q = self.sq[start + len] - self.sq[start];
        let mean = s / len as f64;
        (mean, (q - s * mean).max(0.0))
    }
}

/// Peak |Pearson r| over admissible lags for each sliding window, keyed by
/// window start frame. Lag ℓ compares `x1[s..s+w]` with `x2[s+ℓ..s+ℓ+w]`;
/// lags whose window leaves the session are skipped. Zero-variance windows
/// report a peak of 0.
pub fn wcc_peaks(x1: &[f64], x2: &[f64], params: &WccParams, fs: f64) -> Result<Vec<(usize, f64)>> {
    params.validate()?;
    let n = x1.len();
    if n != x2.len() {
        return Err(Error::LengthMismatch {
            expected: n,
            got: x2.len(),
        });
    }
    let w = to_frames(params.window_seconds, fs);
    let step = to_frames(params.increment_seconds, fs).max(1);
    let max_lag = to_frames(params.max_lag_seconds, fs) as isize;
    if w < 2 || w > n {
        return Err(Error::Degenerate(format!(
            "WCC window of {w} frames does not fit a {n}-frame session"
        )));
    }
    let (m1, m2) = (Moments::new(x1), Moments::new(x2));
    // Relative variance floor: windows this flat are treated as constant.
    let scale = x1.iter().chain(x2).fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    let floor = 1e-12 * scale * scale * w as f64;

    let mut peaks = Vec::new();
    let mut start = 0;
    while start + w <= n {
        let (mean1, ss1) = m1.window(start, w);
        let mut peak = 0.0f64;
        if ss1 > floor {
            for lag in -max_lag..=max_lag {
                let s2 = start as isize + lag;
                if s2 < 0 || s2 as usize + w > n {
                    continue;
                }
                let s2 = s2 as usize;
                let (mean2, ss2) = m2.window(s2, w);
                if ss2 <= floor {
                    continue;
                }
                let cross: f64 = x1[start..start + w]
                    .iter()
                    .zip(&x2[s2..s2 + w])
                    .map(|(a, b)| (a - mean1) * (b - mean2))
                    .sum();
                peak = peak.max((cross / (ss1 * ss2).sqrt()).abs());
            }
        }
        peaks.push((start, peak));
        start += step;
    }
    Ok(peaks)
}

/// Fraction of sliding windows whose peak |r| reaches the threshold
/// (see [`wcc_peaks`]).
pub fn wcc_duration(x1: &[f64], x2: &[f64], params: &WccParams, fs: f64) -> Result<f64> {
    let peaks = wcc_peaks(x1, x2, params, fs)?;
    let hits = peaks
        .iter()
        .filter(|(_, p)| *p >= params.sync_threshold - 1e-12)
        .count();
    Ok(hits as f64 / peaks.len() as f64)
}

/// Earth mover's distance between two non-negative signals after scaling
/// each to unit mass, via the 1-D CDF identity. If exactly one signal has no
/// mass the distance is the signal length; if both are empty it is zero.
pub fn emd_1d(x1: &[f64], x2: &[f64]) -> Result<f64> {
    if x1.len() != x2.len() {
        return Err(Error::LengthMismatch {
            expected: x1.len(),
            got: x2.len(),
        });
    }
    for x in [x1, x2] {
        if let Some((index, &value)) = x.iter().enumerate().find(|(_, v)| **v < 0.0) {
            return Err(Error::NegativeValue { index, value });
        }
    }
    let (s1, s2): (f64, f64) = (x1.iter().sum(), x2.iter().sum());
    match (s1 > 0.0, s2 > 0.0) {
        (false, false) => return Ok(0.0),
        (true, false) | (false, true) => return Ok(x1.len() as f64),
        _ => {}
    }
    let (mut c1, mut c2, mut acc) = (0.0, 0.0, 0.0);
    for (a, b) in x1.iter().zip(x2) {
        c1 += a / s1;
        c2 += b / s2;
        acc += (c1 - c2).abs();
    }
    Ok(acc)
}

/// Visibility threshold on AU intensity.
pub const AU_VISIBLE: f64 = 1.0;

/// Fraction of frames with intensity above 1, per channel, for one player.
pub fn au_duration_features(session: &Session, role: Role) -> Vec<f64> {
    session
        .subject(role)
        .channels
        .iter()
        .map(|c| c.iter().filter(|&&v| v > AU_VISIBLE).count() as f64 / c.len() as f64)
        .collect()
}

/// Mean intensity per channel for one player.
pub fn au_intensity_features(session: &Session, role: Role) -> Vec<f64> {
    session
        .subject(role)
        .channels
        .iter()
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeaMethod {
    WccDuration,
    WpMeddev,
}

/// Univariate synchrony of the two subjects' motion-energy series.
pub fn mea_sync_features(
    session: &Session,
    method: MeaMethod,
    wcc: &WccParams,
    constraints: &AlignmentConstraints,
) -> Result<f64> {
    let (Some(h), Some(t)) = (&session.subjects[0].mea, &session.subjects[1].mea) else {
        return Err(Error::MissingMea(session.id.clone()));
    };
    match method {
        MeaMethod::WccDuration => wcc_duration(h, t, wcc, session.frame_rate_hz),
        MeaMethod::WpMeddev => Ok(wp_meddev(&ddtw_align(h, t, constraints)?)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::{Subject, K_AU};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn wave(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = vec![0.0; n];
        let mut v = 0.0;
        for s in x.iter_mut() {
            v = 0.9 * v + rng.sample::<f64, _>(StandardNormal);
            *s = v;
        }
        x
    }

    #[test]
    fn identical_signals_are_always_synchronous() {
        let x = wave(900, 1);
        assert_eq!(wcc_duration(&x, &x, &WccParams::default(), 30.0).unwrap(), 1.0);
    }

    #[test]
    fn independent_noise_is_rarely_synchronous() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut total = 0.0;
        for _ in 0..100 {
            let a: Vec<f64> = (0..1800).map(|_| rng.sample(StandardNormal)).collect();
            let b: Vec<f64> = (0..1800).map(|_| rng.sample(StandardNormal)).collect();
            let d = wcc_duration(&a, &b, &WccParams::default(), 30.0).unwrap();
            assert!(d < 0.2, "duration {d}");
            total += d;
        }
        assert!(total / 100.0 < 0.05);
    }

    #[test]
    fn delayed_copy_is_synchronous_on_interior_windows() {
        let (n, lag, w) = (1200, 40, 150);
        let x1 = wave(n, 4);
        let mut x2 = vec![0.0; n];
        x2[lag..].copy_from_slice(&x1[..n - lag]);
        let peaks = wcc_peaks(&x1, &x2, &WccParams::default(), 30.0).unwrap();
        let interior: Vec<f64> = peaks
            .iter()
            .filter(|(s, _)| s + lag + w <= n)
            .map(|p| p.1)
            .collect();
        assert!(interior.len() > 30);
        assert!(interior.iter().all(|&p| (p - 1.0).abs() < 1e-9));
        let x2_trimmed = &x2[..n];
        let d = wcc_duration(&x1, x2_trimmed, &WccParams::default(), 30.0).unwrap();
        assert!(d >= interior.len() as f64 / peaks.len() as f64);
    }

    #[test]
    fn constant_windows_are_not_synchronous() {
        let x = vec![1.0; 600];
        assert_eq!(wcc_duration(&x, &x, &WccParams::default(), 30.0).unwrap(), 0.0);
        assert!(wcc_duration(&x[..100], &x[..100], &WccParams::default(), 30.0).is_err());
    }

    #[test]
    fn emd_examples() {
        let x = [0.0, 1.0, 2.0, 0.5];
        assert_eq!(emd_1d(&x, &x).unwrap(), 0.0);
        let mut a = [0.0; 10];
        let mut b = [0.0; 10];
        a[2] = 1.0;
        b[6] = 1.0;
        assert!((emd_1d(&a, &b).unwrap() - 4.0).abs() < 1e-12);
        assert_eq!(emd_1d(&[0.0; 5], &[0.0; 5]).unwrap(), 0.0);
        assert_eq!(emd_1d(&[0.0; 5], &[0.0, 1.0, 0.0, 0.0, 0.0]).unwrap(), 5.0);
        assert!(matches!(
            emd_1d(&[1.0, -0.5], &[1.0, 1.0]),
            Err(Error::NegativeValue { index: 1, .. })
        ));
    }

    fn session(h: Vec<Vec<f64>>, t: Vec<Vec<f64>>) -> Session {
        let n = h[0].len();
        let mk = |c| Subject {
            channels: c,
            confidence: vec![1.0; n],
            mea: None,
        };
        Session::new("s", 30.0, [mk(h), mk(t)], None).unwrap()
    }

    #[test]
    fn au_feature_examples() {
        let mut h = vec![vec![0.0; 90]; K_AU];
        h[0] = vec![3.0; 90];
        h[1] = (0..90).map(|m| if m < 27 { 2.0 } else { 0.5 }).collect();
        h[2] = vec![2.5; 90];
        let s = session(h, vec![vec![4.0; 90]; K_AU]);
        let d = au_duration_features(&s, Role::H);
        assert_eq!(d[0], 1.0);
        assert!((d[1] - 0.3).abs() < 1e-15);
        assert_eq!(d[3], 0.0);
        let i = au_intensity_features(&s, Role::H);
        assert_eq!(i[2], 2.5);
        assert_eq!(au_intensity_features(&s, Role::T), vec![4.0; K_AU]);

        let mut h = vec![vec![0.0; 101]; K_AU];
        h[5] = (0..101).map(|m| m as f64 * 0.05).collect();
        let s = session(h, vec![vec![0.0; 101]; K_AU]);
        assert!((au_intensity_features(&s, Role::H)[5] - 2.5).abs() < 1e-12);
        let mut two = vec![vec![0.0; 2]; K_AU];
        two[0] = vec![0.0, 5.0];
        let s = session(two, vec![vec![0.0; 2]; K_AU]);
        assert_eq!(au_intensity_features(&s, Role::H)[0], 2.5);
    }

    #[test]
    fn mea_features() {
        let n = 600;
        let base: Vec<f64> = wave(n + 30, 2).iter().map(|v| v.abs()).collect();
        let mk = |mea: Option<Vec<f64>>| Subject {
            channels: vec![vec![0.0; n]; K_AU],
            confidence: vec![1.0; n],
            mea,
        };
        let c = AlignmentConstraints::new(5.0, 30.0).unwrap();
        let same = Session::new(
            "m",
            30.0,
            [mk(Some(base[..n].to_vec())), mk(Some(base[..n].to_vec()))],
            None,
        )
        .unwrap();
        let p = WccParams::default();
        assert_eq!(mea_sync_features(&same, MeaMethod::WpMeddev, &p, &c).unwrap(), 0.0);
        assert_eq!(mea_sync_features(&same, MeaMethod::WccDuration, &p, &c).unwrap(), 1.0);

        let missing = Session::new("q", 30.0, [mk(None), mk(None)], None).unwrap();
        assert!(matches!(
            mea_sync_features(&missing, MeaMethod::WpMeddev, &p, &c),
            Err(Error::MissingMea(_))
        ));
    }

    proptest! {
        #[test]
        fn wcc_is_affine_invariant(
            seed in 0u64..1000, shift in -3.0f64..3.0, scale in 0.1f64..10.0,
        ) {
            let a = wave(400, seed);
            let b = wave(400, seed + 1);
            let p = WccParams { sync_threshold: 0.2, ..WccParams::default() };
            let base = wcc_duration(&a, &b, &p, 30.0).unwrap();
            let moved: Vec<f64> = b.iter().map(|v| scale * v + shift).collect();
            let d = wcc_duration(&a, &moved, &p, 30.0).unwrap();
            prop_assert!((0.0..=1.0).contains(&d));
            prop_assert!((d - base).abs() < 1e-12);
        }

        #[test]
        fn emd_is_a_scale_free_metric(
            a in prop::collection::vec(0.0f64..3.0, 8),
            b in prop::collection::vec(0.0f64..3.0, 8),
            c in prop::collection::vec(0.0f64..3.0, 8),
            k in 0.1f64..20.0,
        ) {
            let (ab, ba) = (emd_1d(&a, &b).unwrap(), emd_1d(&b, &a).unwrap());
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - ba).abs() < 1e-12);
            let ac = emd_1d(&a, &c).unwrap();
            let bc = emd_1d(&b, &c).unwrap();
            if a.iter().sum::<f64>() > 0.0 && b.iter().sum::<f64>() > 0.0 && c.iter().sum::<f64>() > 0.0 {
                prop_assert!(ac <= ab + bc + 1e-9);
            }
            let scaled: Vec<f64> = a.iter().map(|v| v * k).collect();
            prop_assert!((emd_1d(&scaled, &b).unwrap() - ab).abs() < 1e-9);
            prop_assert!(emd_1d(&a, &a).unwrap() < 1e-12);
        }

        #[test]
        fn au_features_are_channel_equivariant_and_partner_free(
            seed in 0u64..500, rot in 0usize..17,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let h: Vec<Vec<f64>> = (0..K_AU).map(|_| (0..30).map(|_| rng.gen_range(0.0..5.0)).collect()).collect();
            let t1: Vec<Vec<f64>> = (0..K_AU).map(|_| (0..30).map(|_| rng.gen_range(0.0..5.0)).collect()).collect();
            let t2: Vec<Vec<f64>> = (0..K_AU).map(|_| vec![0.0; 30]).collect();
            let mut hr = h.clone();
            hr.rotate_left(rot);
            let a = session(h.clone(), t1);
            let b = session(hr, t2);
            let mut expect = au_duration_features(&a, Role::H);
            expect.rotate_left(rot);
            prop_assert_eq!(au_duration_features(&b, Role::H), expect);
            let mut expect = au_intensity_features(&a, Role::H);
            expect.rotate_left(rot);
            prop_assert_eq!(au_intensity_features(&b, Role::H), expect);
        }
    }
}
