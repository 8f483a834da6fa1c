//! Synthetic dyads with known ground-truth coupling.

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::session::{Session, Subject, K_AU, TRUST_AMOUNTS};

/// Distribution of the integer lag in frames; positive means subject T
/// follows subject H.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LagDist {
    Fixed(i64),
    /// Uniform over `min..=max`.
    Uniform { min: i64, max: i64 },
    /// Exponential magnitude with the given mean, redrawn above `max`.
    Exponential { mean: f64, max: i64 },
}

impl LagDist {
    fn max_abs(&self) -> i64 {
        match *self {
            LagDist::Fixed(l) => l.abs(),
            LagDist::Uniform { min, max } => min.abs().max(max.abs()),
            LagDist::Exponential { max, .. } => max.abs(),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            LagDist::Uniform { min, max } if min > max => Err(Error::InvalidArgument(format!(
                "empty lag range {min}..={max}"
            ))),
            LagDist::Exponential { mean, max } if !(mean > 0.0) || max < 0 => {
                Err(Error::InvalidArgument(
                    "exponential lag needs a positive mean and non-negative cap".into(),
                ))
            }
            _ => Ok(()),
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> i64 {
        match *self {
            LagDist::Fixed(l) => l,
            LagDist::Uniform { min, max } => rng.gen_range(min..=max),
            LagDist::Exponential { mean, max } => {
                let exp = Exp::new(1.0 / mean).expect("positive mean");
                loop {
                    let v = exp.sample(rng).round() as i64;
                    if v <= max {
                        return v;
                    }
                }
            }
        }
    }
}

/// How subject T's channel relates to subject H's in a coupled session.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    None,
    Lag(LagDist),
    Mimic { gain: f64, lag: LagDist },
}

/// Confidence dropouts: short runs at low confidence during which the
/// channels read zero, as when a tracker loses the face.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dropouts {
    pub per_minute: f64,
    pub length_frames: usize,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_sessions: usize,
    /// The first `n_coupled` sessions use `coupling` and are labelled class 1
    /// (trust amount 1.00); the rest are independent and labelled class 0.
    pub n_coupled: usize,
    pub frames: usize,
    pub frame_rate_hz: f64,
    /// One entry per AU channel.
    pub coupling: Vec<Coupling>,
    pub bump_rate_per_minute: f64,
    pub bump_width_sigma: f64,
    pub noise_sd: f64,
    /// Chance that each H bump is echoed on a coupled channel. The T channel
    /// also carries its own bumps at `(1 − p)` of the base rate, so activity
    /// levels match uncoupled channels.
    pub echo_probability: f64,
    /// Per subject and channel, the signal is scaled by a gain drawn
    /// log-uniformly from `[1/spread, spread]` (1 disables it).
    pub gain_spread: f64,
    /// Per subject and channel resting level, uniform on `[0, baseline_max]`.
    pub baseline_max: f64,
    /// Number of sessions (spread evenly over the set) whose T subject gets a
    /// long sub-threshold confidence stretch covering 40% of the frames.
    pub low_confidence_sessions: usize,
    pub dropouts: Option<Dropouts>,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        let mut coupling = vec![Coupling::None; K_AU];
        for c in coupling.iter_mut().take(6) {
            *c = Coupling::Lag(LagDist::Uniform { min: 0, max: 150 });
        }
        SynthSpec {
            n_sessions: 72,
            n_coupled: 36,
            frames: 1800,
            frame_rate_hz: 30.0,
            coupling,
            bump_rate_per_minute: 12.0,
            bump_width_sigma: 6.0,
            noise_sd: 0.1,
            echo_probability: 1.0,
            gain_spread: 1.0,
            baseline_max: 0.0,
            low_confidence_sessions: 0,
            dropouts: None,
            seed: 0,
        }
    }
}

impl SynthSpec {
    /// Benchmark corpus: mostly short lags capped at 5 s, partial echoing and
    /// per-subject expressivity, so that timing carries the coupling signal
    /// while raw amplitudes only partly do.
    pub fn benchmark(seed: u64) -> Self {
        let mut coupling = vec![Coupling::None; K_AU];
        for c in coupling.iter_mut().take(6) {
            *c = Coupling::Lag(LagDist::Exponential { mean: 30.0, max: 150 });
        }
        SynthSpec {
            coupling,
            echo_probability: 0.6,
            gain_spread: 2.0,
            seed,
            ..SynthSpec::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n_sessions == 0 || self.frames < 2 {
            return bad("need at least one session of two frames".into());
        }
        if self.n_coupled > self.n_sessions || self.low_confidence_sessions > self.n_sessions {
            return bad("coupled or low-confidence count exceeds n_sessions".into());
        }
        if self.coupling.len() != K_AU {
            return bad(format!("coupling needs {K_AU} entries, got {}", self.coupling.len()));
        }
        if !(self.frame_rate_hz > 0.0
            && self.bump_rate_per_minute > 0.0
            && self.bump_width_sigma > 0.0
            && self.noise_sd >= 0.0)
        {
            return bad("rates and widths must be positive, noise non-negative".into());
        }
        if !(self.gain_spread >= 1.0 && self.baseline_max >= 0.0) {
            return bad("gain spread must be at least 1 and baseline non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.echo_probability) {
            return bad("echo probability must lie in [0, 1]".into());
        }
        for c in &self.coupling {
            match c {
                Coupling::None => {}
                Coupling::Lag(lag) => lag.validate()?,
                Coupling::Mimic { gain, lag } => {
                    if !gain.is_finite() {
                        return bad("mimic gain must be finite".into());
                    }
                    lag.validate()?;
                }
            }
        }
        if let Some(d) = &self.dropouts {
            if !(d.per_minute >= 0.0 && (0.0..=1.0).contains(&d.confidence)) {
                return bad("dropout rate must be non-negative and confidence in [0, 1]".into());
            }
        }
        Ok(())
    }

    fn max_lag(&self) -> i64 {
        self.coupling
            .iter()
            .map(|c| match c {
                Coupling::None => 0,
                Coupling::Lag(l) | Coupling::Mimic { lag: l, .. } => l.max_abs(),
            })
            .max()
            .unwrap_or(0)
    }

    pub fn is_low_confidence(&self, index: usize) -> bool {
        let k = self.low_confidence_sessions;
        k > 0 && (0..k).any(|j| j * self.n_sessions / k == index)
    }
}

/// Poisson-timed Gaussian bumps with uniform [1, 4] amplitudes, drawn over
/// `[start, end)` so that shifted evaluations stay exact near the edges.
struct BumpTrain {
    events: Vec<(f64, f64)>,
    sigma: f64,
}

impl BumpTrain {
    fn draw<R: Rng>(rng: &mut R, rate_per_frame: f64, sigma: f64, start: f64, end: f64) -> Self {
        let gap = Exp::new(rate_per_frame).expect("positive rate");
        let mut events = Vec::new();
        let mut t = start + gap.sample(rng);
        while t < end {
            events.push((t, rng.gen_range(1.0..=4.0)));
            t += gap.sample(rng);
        }
        BumpTrain { events, sigma }
    }

    /// Keeps each event with probability `p` and merges in `extra`.
    fn echo<R: Rng>(&self, rng: &mut R, p: f64, extra: BumpTrain) -> Self {
        let mut events: Vec<(f64, f64)> = self
            .events
            .iter()
            .copied()
            .filter(|_| p >= 1.0 || rng.gen::<f64>() < p)
            .collect();
        events.extend(extra.events);
        BumpTrain {
            events,
            sigma: self.sigma,
        }
    }

    /// Samples `b(m − lag)` for m = 0..frames.
    fn render(&self, frames: usize, lag: i64, gain: f64) -> Vec<f64> {
        let mut out = vec![0.0; frames];
        let reach = 8.0 * self.sigma;
        for &(t, a) in &self.events {
            let centre = t + lag as f64;
            let lo = (centre - reach - 1.0).ceil().max(0.0) as usize;
            let hi = ((centre + reach + 1.0).floor().min(frames as f64 - 1.0)).max(-1.0);
            if hi < lo as f64 {
                continue;
            }
            for (m, v) in out.iter_mut().enumerate().take(hi as usize + 1).skip(lo) {
                // Shift the integer frame, not the event, so lagged copies are exact.
                let d = ((m as i64 - lag) as f64 - t) / self.sigma;
                if d.abs() <= 8.0 {
                    *v += gain * a * (-0.5 * d * d).exp();
                }
            }
        }
        out
    }
}

/// Individual expressivity: a gain and a resting level.
fn draw_style<R: Rng>(spec: &SynthSpec, rng: &mut R) -> (f64, f64) {
    let log = spec.gain_spread.ln();
    let gain = if log > 0.0 { rng.gen_range(-log..=log).exp() } else { 1.0 };
    let base = if spec.baseline_max > 0.0 {
        rng.gen_range(0.0..=spec.baseline_max)
    } else {
        0.0
    };
    (gain, base)
}

fn finish<R: Rng>(
    mut x: Vec<f64>,
    (gain, base): (f64, f64),
    noise: Option<&Normal<f64>>,
    rng: &mut R,
) -> Vec<f64> {
    for v in x.iter_mut() {
        *v = base + gain * *v;
        if let Some(n) = noise {
            *v += n.sample(rng);
        }
        *v = v.clamp(0.0, 5.0);
    }
    x
}

fn generate_one(spec: &SynthSpec, index: usize) -> Result<Session> {
    let mut rng = seed::rng(spec.seed, &[index as u64]);
    let m = spec.frames;
    let rate = spec.bump_rate_per_minute / (60.0 * spec.frame_rate_hz);
    let margin = spec.max_lag() as f64 + 8.0 * spec.bump_width_sigma;
    let (start, end) = (-margin, m as f64 + margin);
    let noise = (spec.noise_sd > 0.0).then(|| Normal::new(0.0, spec.noise_sd).expect("valid sd"));
    let coupled = index < spec.n_coupled;

    let mut h = Vec::with_capacity(K_AU);
    let mut t = Vec::with_capacity(K_AU);
    for k in 0..K_AU {
        let train = BumpTrain::draw(&mut rng, rate, spec.bump_width_sigma, start, end);
        let base = train.render(m, 0, 1.0);
        let independent = |rng: &mut _, rate| {
            BumpTrain::draw(rng, rate, spec.bump_width_sigma, start, end)
        };
        let link = match spec.coupling[k] {
            Coupling::Lag(lag) if coupled => Some((lag, 1.0)),
            Coupling::Mimic { gain, lag } if coupled => Some((lag, gain)),
            _ => None,
        };
        let partner = match link {
            Some((lag, gain)) => {
                let lag = lag.draw(&mut rng);
                let p = spec.echo_probability;
                let echoed = if p < 1.0 {
                    let own = independent(&mut rng, rate * (1.0 - p));
                    train.echo(&mut rng, p, own)
                } else {
                    train
                };
                echoed.render(m, lag, gain)
            }
            None => independent(&mut rng, rate).render(m, 0, 1.0),
        };
        let style_h = draw_style(spec, &mut rng);
        let style_t = draw_style(spec, &mut rng);
        h.push(finish(base, style_h, noise.as_ref(), &mut rng));
        t.push(finish(partner, style_t, noise.as_ref(), &mut rng));
    }

    let mut conf_h = vec![1.0; m];
    let mut conf_t = vec![1.0; m];
    if let Some(d) = &spec.dropouts {
        let per_frame = d.per_minute / (60.0 * spec.frame_rate_hz);
        for (conf, channels) in [(&mut conf_h, &mut h), (&mut conf_t, &mut t)] {
            for f in 0..m {
                if rng.gen::<f64>() < per_frame {
                    for g in f..(f + d.length_frames).min(m) {
                        conf[g] = d.confidence;
                        channels.iter_mut().for_each(|c| c[g] = 0.0);
                    }
                }
            }
        }
    }
    if spec.is_low_confidence(index) {
        let len = (m * 2).div_ceil(5);
        let from = (m - len) / 2;
        conf_t[from..from + len].iter_mut().for_each(|c| *c = 0.3);
    }

    let trust = if coupled {
        1.0
    } else {
        TRUST_AMOUNTS[rng.gen_range(0..TRUST_AMOUNTS.len() - 1)]
    };
    Session::new(
        format!("S{index:03}"),
        spec.frame_rate_hz,
        [
            Subject {
                channels: h,
                confidence: conf_h,
                mea: None,
            },
            Subject {
                channels: t,
                confidence: conf_t,
                mea: None,
            },
        ],
        Some(trust),
    )
}

/// Generates `spec.n_sessions` sessions; each is a pure function of the spec
/// and its index, so output is identical for any thread count.
pub fn generate_synthetic_sessions(spec: &SynthSpec) -> Result<Vec<Session>> {
    spec.validate()?;
    (0..spec.n_sessions)
        .into_par_iter()
        .map(|i| generate_one(spec, i))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::TrustLabel;

    fn small() -> SynthSpec {
        SynthSpec {
            n_sessions: 6,
            n_coupled: 3,
            frames: 600,
            seed: 4,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn reproducible_bit_for_bit() {
        let a = generate_synthetic_sessions(&small()).unwrap();
        let b = generate_synthetic_sessions(&small()).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic_sessions(&SynthSpec { seed: 5, ..small() }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn labels_follow_coupling() {
        let s = generate_synthetic_sessions(&small()).unwrap();
        let labels: Vec<_> = s.iter().map(|x| x.label().unwrap()).collect();
        assert_eq!(labels[..3], [TrustLabel::Class1; 3]);
        assert_eq!(labels[3..], [TrustLabel::Class0; 3]);
    }

    #[test]
    fn values_are_clipped_and_confident() {
        for s in generate_synthetic_sessions(&small()).unwrap() {
            for subj in &s.subjects {
                assert!(subj.channels.iter().flatten().all(|v| (0.0..=5.0).contains(v)));
                assert!(subj.confidence.iter().all(|&c| c == 1.0));
            }
        }
    }

    #[test]
    fn noise_free_lag_is_an_exact_shift() {
        let mut spec = small();
        spec.noise_sd = 0.0;
        spec.coupling = vec![Coupling::Lag(LagDist::Fixed(30)); K_AU];
        let s = &generate_synthetic_sessions(&spec).unwrap()[0];
        for k in 0..K_AU {
            let (h, t) = (&s.subjects[0].channels[k], &s.subjects[1].channels[k]);
            for m in 30..600 {
                assert_eq!(t[m], h[m - 30]);
            }
        }
    }

    #[test]
    fn mimic_scales_the_partner() {
        let mut spec = small();
        spec.noise_sd = 0.0;
        spec.coupling = vec![Coupling::Mimic { gain: 0.5, lag: LagDist::Fixed(0) }; K_AU];
        let s = &generate_synthetic_sessions(&spec).unwrap()[0];
        for (h, t) in s.subjects[0].channels.iter().zip(&s.subjects[1].channels) {
            for (a, b) in h.iter().zip(t) {
                assert!((a.min(5.0) * 0.5 - b).abs() < 1e-12 || *a == 5.0);
            }
        }
    }

    #[test]
    fn low_confidence_sessions_are_spread() {
        let spec = SynthSpec { n_sessions: 135, low_confidence_sessions: 12, ..SynthSpec::default() };
        let marked: Vec<usize> = (0..135).filter(|&i| spec.is_low_confidence(i)).collect();
        assert_eq!(marked.len(), 12);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(SynthSpec { coupling: vec![], ..small() }.validate().is_err());
        assert!(SynthSpec { n_coupled: 7, ..small() }.validate().is_err());
        assert!(SynthSpec { bump_rate_per_minute: 0.0, ..small() }.validate().is_err());
    }
}
