//! Matching-pursuit decomposition onto a Gaussian / Mexican-hat dictionary.
//!
//! Atoms are never materialized during decomposition. Each (kind, σ) family
//! shares one compactly supported template; truncated atoms near the signal
//! edges carry their own norm. After every selection only the correlations of
//! atoms overlapping the chosen atom are updated, using a precomputed table of
//! template cross-products for interior atoms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SIGMAS: [f64; 5] = [2.0, 4.0, 8.0, 16.0, 32.0];
pub const DEFAULT_ATOMS: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AtomKind {
    Gaussian,
    MexicanHat,
}

impl AtomKind {
    const ALL: [AtomKind; 2] = [AtomKind::Gaussian, AtomKind::MexicanHat];
}

/// Unnormalized atom value at signed offset `m − μ`.
pub fn profile(kind: AtomKind, offset: f64, sigma: f64) -> f64 {
    let r2 = offset * offset / (sigma * sigma);
    let g = (-0.5 * r2).exp();
    match kind {
        AtomKind::Gaussian => g,
        AtomKind::MexicanHat => (1.0 - r2) * g,
    }
}

/// Half-width beyond which |profile| < 1e-12 for both kinds.
fn support_radius(sigma: f64, length: usize) -> usize {
    ((8.0 * sigma).ceil() as usize).min(length.saturating_sub(1))
}

/// A materialized, unit-norm dictionary element. `mu` is 1-based.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub kind: AtomKind,
    pub mu: usize,
    pub sigma: f64,
    pub samples: Vec<f64>,
}

fn make_atom(kind: AtomKind, mu: usize, sigma: f64, length: usize) -> Result<Atom> {
    if !(1..=length).contains(&mu) {
        return Err(Error::InvalidArgument(format!(
            "atom centre {mu} outside 1..={length}"
        )));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "atom width must be positive, got {sigma}"
        )));
    }
    let radius = support_radius(sigma, length);
    let mu0 = mu - 1;
    let mut samples = vec![0.0; length];
    for (m, s) in samples
        .iter_mut()
        .enumerate()
        .take((mu0 + radius).min(length - 1) + 1)
        .skip(mu0.saturating_sub(radius))
    {
        *s = profile(kind, m as f64 - mu0 as f64, sigma);
    }
    let norm = samples.iter().map(|v| v * v).sum::<f64>().sqrt();
    samples.iter_mut().for_each(|v| *v /= norm);
    Ok(Atom {
        kind,
        mu,
        sigma,
        samples,
    })
}

pub fn gaussian_atom(mu: usize, sigma: f64, length: usize) -> Result<Atom> {
    make_atom(AtomKind::Gaussian, mu, sigma, length)
}

pub fn mexican_hat_atom(mu: usize, sigma: f64, length: usize) -> Result<Atom> {
    make_atom(AtomKind::MexicanHat, mu, sigma, length)
}

#[derive(Debug, Clone)]
struct Family {
    kind: AtomKind,
    sigma: f64,
    radius: usize,
    /// Unnormalized profile at offsets −radius..=radius.
    template: Vec<f64>,
    interior_norm: f64,
}

/// All `2 · length · |σ grid|` atoms for one signal length, ordered by
/// (kind, σ, μ). Ids follow that order, which fixes argmax tie-breaking.
#[derive(Debug, Clone)]
pub struct Dictionary {
    length: usize,
    sigma_grid: Vec<f64>,
    families: Vec<Family>,
    norms: Vec<f64>,
    /// Cross-products of interior atoms, indexed by family pair then centre offset.
    gram: Vec<Vec<f64>>,
}

impl Dictionary {
    pub fn new(length: usize, sigma_grid: &[f64]) -> Result<Self> {
        if length == 0 {
            return Err(Error::InvalidArgument(
                "dictionary length must be positive".into(),
            ));
        }
        if sigma_grid.is_empty() {
            return Err(Error::InvalidArgument("empty sigma grid".into()));
        }
        if let Some(bad) = sigma_grid.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "sigma values must be positive, got {bad}"
            )));
        }
        let mut grid = sigma_grid.to_vec();
        grid.sort_by(f64::total_cmp);
        grid.dedup();

        let families: Vec<Family> = AtomKind::ALL
            .iter()
            .flat_map(|&kind| grid.iter().map(move |&sigma| (kind, sigma)))
            .map(|(kind, sigma)| {
                let radius = support_radius(sigma, length);
                let template: Vec<f64> = (0..=2 * radius)
                    .map(|k| profile(kind, k as f64 - radius as f64, sigma))
                    .collect();
                let interior_norm = template.iter().map(|v| v * v).sum::<f64>().sqrt();
                Family {
                    kind,
                    sigma,
                    radius,
                    template,
                    interior_norm,
                }
            })
            .collect();

        let mut norms = Vec::with_capacity(families.len() * length);
        for f in &families {
            for mu0 in 0..length {
                let (lo, hi) = span(mu0, f.radius, length);
                if lo + f.radius == mu0 && mu0 + f.radius == hi {
                    norms.push(f.interior_norm);
                } else {
                    let t = &f.template[lo + f.radius - mu0..=hi + f.radius - mu0];
                    norms.push(t.iter().map(|v| v * v).sum::<f64>().sqrt());
                }
            }
        }

        let mut gram = Vec::with_capacity(families.len() * families.len());
        for a in &families {
            for b in &families {
                let reach = a.radius + b.radius;
                let table = (0..=2 * reach)
                    .map(|k| {
                        // Centre offset Δ = μ_b − μ_a.
                        let delta = k as isize - reach as isize;
                        let shift = b.radius as isize - a.radius as isize - delta;
                        let mut acc = 0.0;
                        for (i, ta) in a.template.iter().enumerate() {
                            let j = i as isize + shift;
                            if j >= 0 && (j as usize) < b.template.len() {
                                acc += ta * b.template[j as usize];
                            }
                        }
                        acc / (a.interior_norm * b.interior_norm)
                    })
                    .collect();
                gram.push(table);
            }
        }

        Ok(Dictionary {
            length,
            sigma_grid: grid,
            families,
            norms,
            gram,
        })
    }

    pub fn len(&self) -> usize {
        self.families.len() * self.length
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn signal_length(&self) -> usize {
        self.length
    }

    /// Sorted, deduplicated σ values.
    pub fn sigma_grid(&self) -> &[f64] {
        &self.sigma_grid
    }

    /// (kind, σ, 1-based μ) of an atom id.
    pub fn describe(&self, id: usize) -> (AtomKind, f64, usize) {
        let f = &self.families[id / self.length];
        (f.kind, f.sigma, id % self.length + 1)
    }

    pub fn id_of(&self, kind: AtomKind, sigma: f64, mu: usize) -> Option<usize> {
        let fam = self
            .families
            .iter()
            .position(|f| f.kind == kind && f.sigma == sigma)?;
        (1..=self.length)
            .contains(&mu)
            .then(|| fam * self.length + mu - 1)
    }

    pub fn atom(&self, id: usize) -> Atom {
        let (kind, sigma, mu) = self.describe(id);
        make_atom(kind, mu, sigma, self.length).expect("dictionary atoms are valid")
    }

    fn support(&self, id: usize) -> (usize, usize) {
        span(id % self.length, self.families[id / self.length].radius, self.length)
    }

    fn is_interior(&self, id: usize) -> bool {
        let r = self.families[id / self.length].radius;
        let mu0 = id % self.length;
        mu0 >= r && mu0 + r < self.length
    }

    #[inline]
    fn value(&self, id: usize, m: usize) -> f64 {
        let f = &self.families[id / self.length];
        let mu0 = id % self.length;
        f.template[m + f.radius - mu0] / self.norms[id]
    }

    fn dot(&self, id: usize, signal: &[f64]) -> f64 {
        let f = &self.families[id / self.length];
        let mu0 = id % self.length;
        let (lo, hi) = self.support(id);
        let t = &f.template[lo + f.radius - mu0..=hi + f.radius - mu0];
        let acc: f64 = t.iter().zip(&signal[lo..=hi]).map(|(a, b)| a * b).sum();
        acc / self.norms[id]
    }

    fn inner(&self, a: usize, b: usize) -> f64 {
        if self.is_interior(a) && self.is_interior(b) {
            let nf = self.families.len();
            let (fa, fb) = (a / self.length, b / self.length);
            let reach = self.families[fa].radius + self.families[fb].radius;
            let delta = (b % self.length) as isize - (a % self.length) as isize;
            let k = delta + reach as isize;
            if k < 0 || k as usize > 2 * reach {
                return 0.0;
            }
            return self.gram[fa * nf + fb][k as usize];
        }
        let (la, ha) = self.support(a);
        let (lb, hb) = self.support(b);
        let (lo, hi) = (la.max(lb), ha.min(hb));
        if lo > hi {
            return 0.0;
        }
        (lo..=hi).map(|m| self.value(a, m) * self.value(b, m)).sum()
    }
}

fn span(mu0: usize, radius: usize, length: usize) -> (usize, usize) {
    (mu0.saturating_sub(radius), (mu0 + radius).min(length - 1))
}

/// Greedy decomposition result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    /// (atom id, coefficient) in selection order.
    pub selections: Vec<(usize, f64)>,
    pub reconstruction: Vec<f64>,
    /// Residual L2 norm before the first step and after each step.
    pub residual_norms: Vec<f64>,
}

fn l2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Runs exactly `q` matching-pursuit steps. Each step picks the atom with the
/// largest |⟨residual, atom⟩| (lowest id on ties), records the inner product as
/// its coefficient and subtracts the scaled atom. Atoms may be picked again.
pub fn matching_pursuit(signal: &[f64], dict: &Dictionary, q: usize) -> Result<Decomposition> {
    if signal.len() != dict.length {
        return Err(Error::LengthMismatch {
            expected: dict.length,
            got: signal.len(),
        });
    }
    if q == 0 {
        return Err(Error::InvalidArgument(
            "matching pursuit needs at least one atom".into(),
        ));
    }
    let n = dict.length;
    let mut corr: Vec<f64> = (0..dict.len()).map(|id| dict.dot(id, signal)).collect();
    let mut residual = signal.to_vec();
    let mut residual_norms = vec![l2(signal)];
    let mut selections = Vec::with_capacity(q);

    for _ in 0..q {
        let mut best = 0;
        let mut best_abs = corr[0].abs();
        for (id, c) in corr.iter().enumerate().skip(1) {
            if c.abs() > best_abs {
                best = id;
                best_abs = c.abs();
            }
        }
        let coef = dict.dot(best, &residual);
        selections.push((best, coef));
        if coef != 0.0 {
            let (lo, hi) = dict.support(best);
            for (m, r) in residual.iter_mut().enumerate().take(hi + 1).skip(lo) {
                *r -= coef * dict.value(best, m);
            }
            for (fam, f) in dict.families.iter().enumerate() {
                let first = lo.saturating_sub(f.radius);
                let last = (hi + f.radius).min(n - 1);
                for mu0 in first..=last {
                    let other = fam * n + mu0;
                    corr[other] -= coef * dict.inner(best, other);
                }
            }
        }
        residual_norms.push(l2(&residual));
    }

    let mut reconstruction = vec![0.0; n];
    for &(id, coef) in &selections {
        let (lo, hi) = dict.support(id);
        for (m, r) in reconstruction.iter_mut().enumerate().take(hi + 1).skip(lo) {
            *r += coef * dict.value(id, m);
        }
    }
    Ok(Decomposition {
        selections,
        reconstruction,
        residual_norms,
    })
}

/// An (original, reconstruction) pair for one session and subject.
#[derive(Debug, Clone, Copy)]
pub struct LossSample<'a> {
    pub original: &'a [f64],
    pub reconstruction: &'a [f64],
}

/// `‖x̂ − x‖² / ‖x‖²`, or `None` when `x` is identically zero.
pub fn relative_error(original: &[f64], reconstruction: &[f64]) -> Result<Option<f64>> {
    if original.len() != reconstruction.len() {
        return Err(Error::LengthMismatch {
            expected: original.len(),
            got: reconstruction.len(),
        });
    }
    let energy: f64 = original.iter().map(|v| v * v).sum();
    if energy == 0.0 {
        return Ok(None);
    }
    let err: f64 = original
        .iter()
        .zip(reconstruction)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(Some(err / energy))
}

fn mean_defined(values: &[Option<f64>]) -> Option<f64> {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

/// Averages per-session relative errors within each subject slot, then over
/// the two slots. `None` entries (all-zero originals) are skipped.
pub fn information_loss_from_errors(
    channel: &str,
    subject1: &[Option<f64>],
    subject2: &[Option<f64>],
) -> Result<f64> {
    let terms: Vec<f64> = [mean_defined(subject1), mean_defined(subject2)]
        .into_iter()
        .flatten()
        .collect();
    if terms.is_empty() {
        return Err(Error::UndefinedLoss(channel.to_string()));
    }
    Ok(terms.iter().sum::<f64>() / terms.len() as f64)
}

/// Relative squared reconstruction error for one channel, averaged over
/// sessions within each subject slot and then over the two slots. Sessions
/// whose original signal is identically zero are skipped.
pub fn information_loss(
    channel: &str,
    subject1: &[LossSample<'_>],
    subject2: &[LossSample<'_>],
) -> Result<f64> {
    let errors = |samples: &[LossSample<'_>]| -> Result<Vec<Option<f64>>> {
        samples
            .iter()
            .map(|s| relative_error(s.original, s.reconstruction))
            .collect()
    };
    information_loss_from_errors(channel, &errors(subject1)?, &errors(subject2)?)
}
