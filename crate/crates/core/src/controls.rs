//! Shuffle controls: re-paired partners and block-permuted time series.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::session::{Session, Subject};

/// Uniform random permutation without fixed points, by rejection.
pub fn derangement<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Vec<usize>> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "a derangement needs at least 2 elements, got {n}"
        )));
    }
    let mut p: Vec<usize> = (0..n).collect();
    loop {
        p.shuffle(rng);
        if p.iter().enumerate().all(|(i, &v)| i != v) {
            return Ok(p);
        }
    }
}

/// Within each trust class, pairs every H subject with the T subject of a
/// different session. Session ids and labels stay with the H side; the pair
/// is truncated to the shorter subject.
pub fn shuffle_pairs(sessions: &[Session], seed: u64) -> Result<Vec<Session>> {
    let mut out: Vec<Option<Session>> = vec![None; sessions.len()];
    for class in 0..=1u8 {
        let members: Vec<usize> = (0..sessions.len())
            .filter(|&i| sessions[i].label().map(|l| l.as_u8()) == Some(class))
            .collect();
        if members.is_empty() {
            continue;
        }
        if members.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "trust class {class} has a single session; pairs cannot be shuffled"
            )));
        }
        let mut rng = seed::rng(seed, &[class as u64]);
        let perm = derangement(members.len(), &mut rng)?;
        for (slot, &p) in perm.iter().enumerate() {
            let h_session = &sessions[members[slot]];
            let t_session = &sessions[members[p]];
            if (h_session.frame_rate_hz - t_session.frame_rate_hz).abs()
                > 0.01 * h_session.frame_rate_hz
            {
                return Err(Error::FrameRateMismatch {
                    h: h_session.frame_rate_hz,
                    t: t_session.frame_rate_hz,
                });
            }
            let frames = h_session.frames().min(t_session.frames());
            let mut h = h_session.subjects[0].clone();
            let mut t = t_session.subjects[1].clone();
            h.truncate(frames);
            t.truncate(frames);
            out[members[slot]] = Some(Session::new(
                h_session.id.clone(),
                h_session.frame_rate_hz,
                [h, t],
                h_session.trust_amount,
            )?);
        }
    }
    if out.iter().any(Option::is_none) {
        return Err(Error::InvalidArgument(
            "pair shuffling requires every session to carry a trust label".into(),
        ));
    }
    Ok(out.into_iter().flatten().collect())
}

/// Splits `frames` into blocks of `block` frames; the trailing partial block
/// stays a block of its own.
fn blocks(frames: usize, block: usize) -> Vec<(usize, usize)> {
    (0..frames)
        .step_by(block)
        .map(|s| (s, (s + block).min(frames)))
        .collect()
}

fn permute(x: &[f64], order: &[(usize, usize)]) -> Vec<f64> {
    order.iter().flat_map(|&(a, b)| x[a..b].iter().copied()).collect()
}

fn permute_subject(s: &Subject, order: &[(usize, usize)]) -> Subject {
    Subject {
        channels: s.channels.iter().map(|c| permute(c, order)).collect(),
        confidence: permute(&s.confidence, order),
        mea: s.mea.as_ref().map(|m| permute(m, order)),
    }
}

/// Which series share one block order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShuffleScope {
    /// One order for every series of both subjects.
    Dyad,
    /// One order per subject, shared by that subject's series.
    Subject,
}

/// Cuts the session into `interval_seconds` blocks and applies one random
/// block order to every series of both subjects.
pub fn shuffle_time_series(session: &Session, interval_seconds: f64, seed: u64) -> Result<Session> {
    shuffle_time_series_scoped(session, interval_seconds, ShuffleScope::Dyad, seed)
}

pub fn shuffle_time_series_scoped(
    session: &Session,
    interval_seconds: f64,
    scope: ShuffleScope,
    seed: u64,
) -> Result<Session> {
    if !(interval_seconds > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "interval must be positive, got {interval_seconds}"
        )));
    }
    let block = (interval_seconds * session.frame_rate_hz).round().max(1.0) as usize;
    if session.frames() < block {
        return Err(Error::Degenerate(format!(
            "session {} has {} frames, shorter than one {block}-frame interval",
            session.id,
            session.frames()
        )));
    }
    let mut rng = seed::rng(seed, &[]);
    let mut order_h = blocks(session.frames(), block);
    order_h.shuffle(&mut rng);
    let order_t = match scope {
        ShuffleScope::Dyad => order_h.clone(),
        ShuffleScope::Subject => {
            let mut o = blocks(session.frames(), block);
            o.shuffle(&mut rng);
            o
        }
    };
    Session::new(
        session.id.clone(),
        session.frame_rate_hz,
        [
            permute_subject(&session.subjects[0], &order_h),
            permute_subject(&session.subjects[1], &order_t),
        ],
        session.trust_amount,
    )
}

/// Shuffles every session with per-session seeds.
pub fn shuffle_all_time_series(
    sessions: &[Session],
    interval_seconds: f64,
    scope: ShuffleScope,
    seed: u64,
) -> Result<Vec<Session>> {
    sessions
        .iter()
        .enumerate()
        .map(|(i, s)| {
            shuffle_time_series_scoped(s, interval_seconds, scope, seed::derive(seed, &[i as u64]))
        })
        .collect()
}
