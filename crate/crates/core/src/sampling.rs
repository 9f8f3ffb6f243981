//! Seeded weighted sampling and adaptive residual-sampling rounds.
//!
//! All randomness flows from explicit [`Seed`] values. A seed derives
//! independent child streams per `(round, trial)` so candidate rounds can run
//! on any number of threads and still reproduce bit-for-bit.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::geometry::{residual_norms, span_tolerance, Basis, PointSet};

/// Totals at or below this are treated as an exact fit.
pub const DEGENERATE_TOTAL: f64 = 1e-300;

/// A 64-bit seed with deterministic stream derivation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Seed(pub u64);

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Seed {
    /// Child seed for the `(round, trial)` stream.
    pub fn derive(self, round: u64, trial: u64) -> Seed {
        Seed(splitmix(splitmix(splitmix(self.0) ^ round) ^ trial.rotate_left(32)))
    }

    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

/// Non-negative sampling weights and their total.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    weights: Vec<f64>,
    total: f64,
}

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| !w.is_finite() || **w < 0.0) {
            return Err(Error::NonFinite(format!("weight {i} is {w}")));
        }
        let total = weights.iter().sum();
        Ok(Self { weights, total })
    }

    /// Weights `f(r_i)` for residuals `r_i`.
    pub fn from_residuals(residuals: &[f64], f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(residuals.iter().map(|&r| f(r)).collect())
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn is_degenerate(&self) -> bool {
        self.total <= DEGENERATE_TOTAL
    }
}

/// `r^p` with the common integer exponents evaluated by multiplication.
pub fn pth_power(r: f64, p: f64) -> f64 {
    if p == 2.0 {
        r * r
    } else if p == 1.0 {
        r
    } else {
        r.powf(p)
    }
}

/// Weights `d(x_i, span(B))^p`.
pub fn pth_power_weights(x: &PointSet, b: &Basis, p: f64) -> Result<WeightVector> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(invalid(format!("p must be a finite value >= 1, got {p}")));
    }
    WeightVector::from_residuals(&residual_norms(x, b)?, |r| pth_power(r, p))
}

/// `m` i.i.d. draws with `Pr[i] = w_i / total`, by inversion of the
/// cumulative sums.
pub fn weighted_iid_sample(w: &WeightVector, m: usize, seed: Seed) -> Result<Vec<usize>> {
    sample_with(w, m, &mut seed.rng())
}

pub(crate) fn sample_with<R: Rng>(w: &WeightVector, m: usize, rng: &mut R) -> Result<Vec<usize>> {
    if m < 1 {
        return Err(invalid("sample size must be >= 1"));
    }
    if w.is_degenerate() {
        return Err(Error::DegenerateWeights { total: w.total });
    }
    let mut cumulative = Vec::with_capacity(w.len());
    let mut acc = 0.0;
    for &wi in &w.weights {
        acc += wi;
        cumulative.push(acc);
    }
    let last_positive = w.weights.iter().rposition(|&wi| wi > 0.0).expect("positive total");
    Ok((0..m)
        .map(|_| {
            let u = rng.random::<f64>() * acc;
            cumulative.partition_point(|&c| c <= u).min(last_positive)
        })
        .collect())
}

/// The growing index subset `S = S_0 + S_1 + ...`, one entry per sampled
/// batch, with the weights each batch was drawn from.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleTrace {
    rounds: Vec<Vec<usize>>,
    all: Vec<usize>,
    weights_log: Vec<WeightVector>,
    members: HashSet<usize>,
}

impl SampleTrace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Raw batches, duplicates included.
    pub fn rounds(&self) -> &[Vec<usize>] {
        &self.rounds
    }

    /// De-duplicated union in first-seen order.
    pub fn all(&self) -> &[usize] {
        &self.all
    }

    pub fn weights_log(&self) -> &[WeightVector] {
        &self.weights_log
    }

    pub fn contains(&self, i: usize) -> bool {
        self.members.contains(&i)
    }

    /// Appends a batch; returns the indices that were new to the union.
    pub fn push_round(&mut self, batch: Vec<usize>, weights: WeightVector) -> Vec<usize> {
        let mut added = Vec::new();
        for &i in &batch {
            if self.members.insert(i) {
                self.all.push(i);
                added.push(i);
            }
        }
        self.rounds.push(batch);
        self.weights_log.push(weights);
        added
    }
}

/// Result of one adaptive round. `degenerate` means the current span already
/// fits every point; the trace is then returned unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    pub trace: SampleTrace,
    pub degenerate: bool,
}

/// Orthonormal basis for the span of the given point indices.
pub fn span_of(x: &PointSet, indices: &[usize]) -> Result<Basis> {
    Basis::empty(x.d()).extend(x.points(indices), span_tolerance(x))
}

/// Sequential residual sampling of up to `k` indices: pick `j` is drawn with
/// probability proportional to `d(x_i, span(previous picks))^p`. Stops early
/// when the weights degenerate (the data lies in a smaller span).
pub fn adaptive_init(x: &PointSet, k: usize, p: f64, seed: Seed) -> Result<SampleTrace> {
    let d = x.d();
    if k < 1 || k > d {
        return Err(invalid(format!("k must lie in [1, {d}], got {k}")));
    }
    let tol = span_tolerance(x);
    let mut rng = seed.rng();
    let mut basis = Basis::empty(d);
    let mut picks = Vec::with_capacity(k);
    let mut first_weights = None;
    for _ in 0..k {
        let w = pth_power_weights(x, &basis, p)?;
        if w.is_degenerate() {
            break;
        }
        let i = sample_with(&w, 1, &mut rng)?[0];
        first_weights.get_or_insert(w);
        picks.push(i);
        basis = basis.extend(std::iter::once(x.point(i)), tol)?;
    }
    let weights = match first_weights {
        Some(w) => w,
        None => pth_power_weights(x, &basis, p)?,
    };
    let mut trace = SampleTrace::new();
    trace.push_round(picks, weights);
    Ok(trace)
}

/// Appends one batch of `batch` i.i.d. indices drawn proportionally to
/// `d(x_i, span(current.all))^p`.
pub fn adaptive_round(x: &PointSet, current: &SampleTrace, batch: usize, p: f64, seed: Seed) -> Result<RoundOutcome> {
    if batch < 1 {
        return Err(invalid("batch must be >= 1"));
    }
    let basis = span_of(x, current.all())?;
    let w = pth_power_weights(x, &basis, p)?;
    if w.is_degenerate() {
        return Ok(RoundOutcome { trace: current.clone(), degenerate: true });
    }
    let drawn = sample_with(&w, batch, &mut seed.rng())?;
    let mut trace = current.clone();
    trace.push_round(drawn, w);
    Ok(RoundOutcome { trace, degenerate: false })
}

/// `sum_i d(x_i, span)^p`.
pub fn residual_mass(x: &PointSet, b: &Basis, p: f64) -> Result<f64> {
    Ok(pth_power_weights(x, b, p)?.total())
}
