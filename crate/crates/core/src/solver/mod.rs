//! Trimmed costs, the adaptive weak-coreset solvers and subspace extraction.
//!
//! [`solve_outliers`] grows an index set `S` in rounds. Each round draws `k`
//! sequential batches with probability proportional to the current residual
//! to the power `p`, repeated over `trials` independent candidates; the
//! candidate whose span leaves the least residual mass is kept. A
//! `k`-dimensional subspace is then extracted from `span(S)` by trimmed
//! alternating minimization.

mod diagnostics;
mod extract;

use std::time::Instant;

use rayon::prelude::*;

use crate::affine::AffineSummary;
use crate::error::{invalid, Error, Result};
use crate::geometry::{residual_norms, span_tolerance, Basis, PointSet};
use crate::mestimators::{LossFunction, MEstimatorSummary};
use crate::sampling::{adaptive_init, pth_power, sample_with, SampleTrace, Seed, WeightVector};

pub use diagnostics::{diagnostics_angle_track, diagnostics_bad_set, BadSetReport};
pub use extract::extract_k_subspace;
pub(crate) use extract::extract_with_loss;

/// Default `c1` in the batch size `c1 p^2 k / eps^2 ln(k / eps)`.
pub const DEFAULT_BATCH_CONSTANT: f64 = 4.0;
/// Default `c2` in the per-round repetition count `c2 ln(T) + 3`.
pub const DEFAULT_TRIAL_CONSTANT: f64 = 2.0;
/// Residual mass below this fraction of the initial mass counts as an exact fit.
pub const EXACT_FIT_RATIO: f64 = 1e-12;

/// Solver parameters. Build with [`SolverConfig::new`] to get the default
/// round, batch and repetition counts, then override fields as needed.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub k: usize,
    pub p: f64,
    pub alpha: f64,
    pub epsilon: f64,
    /// Assumed fraction of the optimal subspace's error carried by inliers.
    pub delta: f64,
    pub rounds: usize,
    pub inner_batches: usize,
    pub batch_size: usize,
    /// Independent candidates per round; the best one is kept.
    pub trials: usize,
    pub extraction_iters: usize,
    /// Random starts for extraction, on top of the PCA start.
    pub extraction_restarts: usize,
    pub seed: Seed,
}

/// `ceil(log2(1 / delta)) + 1`.
pub fn default_rounds(delta: f64) -> usize {
    (1.0 / delta).log2().ceil().max(0.0) as usize + 1
}

/// `ceil(c1 p^2 k / eps^2 ln(k / eps))`, at least 1.
pub fn default_batch_size(k: usize, p: f64, epsilon: f64, c1: f64) -> usize {
    let k = k as f64;
    let size = c1 * p * p * k / (epsilon * epsilon) * (k / epsilon).ln();
    (size.ceil() as usize).max(1)
}

/// `ceil(c2 ln(rounds)) + 3`.
pub fn default_trials(rounds: usize, c2: f64) -> usize {
    (c2 * (rounds.max(1) as f64).ln()).ceil() as usize + 3
}

impl SolverConfig {
    pub fn new(k: usize, p: f64, alpha: f64, epsilon: f64, delta: f64) -> Result<Self> {
        let mut cfg = Self {
            k,
            p,
            alpha,
            epsilon,
            delta,
            rounds: 1,
            inner_batches: k,
            batch_size: 1,
            trials: 1,
            extraction_iters: 50,
            extraction_restarts: 16,
            seed: Seed(0),
        };
        cfg.validate_core()?;
        cfg.rounds = default_rounds(delta);
        cfg.batch_size = default_batch_size(k, p, epsilon, DEFAULT_BATCH_CONSTANT);
        cfg.trials = default_trials(cfg.rounds, DEFAULT_TRIAL_CONSTANT);
        Ok(cfg)
    }

    pub fn with_seed(mut self, seed: Seed) -> Self {
        self.seed = seed;
        self
    }

    /// Recomputes `batch_size` with a different `c1`.
    pub fn with_batch_constant(mut self, c1: f64) -> Self {
        self.batch_size = default_batch_size(self.k, self.p, self.epsilon, c1);
        self
    }

    fn validate_core(&self) -> Result<()> {
        if self.k < 1 {
            return Err(invalid("k must be >= 1"));
        }
        if !(self.p >= 1.0 && self.p.is_finite()) {
            return Err(invalid(format!("p must be a finite value >= 1, got {}", self.p)));
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(invalid(format!("alpha must lie in [0, 1), got {}", self.alpha)));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(invalid(format!("epsilon must lie in (0, 1), got {}", self.epsilon)));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0 - self.alpha + 1e-12) {
            return Err(invalid(format!("delta must lie in (0, 1 - alpha], got {}", self.delta)));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_core()?;
        for (name, v) in [
            ("inner_batches", self.inner_batches),
            ("batch_size", self.batch_size),
            ("trials", self.trials),
            ("extraction_iters", self.extraction_iters),
        ] {
            if v < 1 {
                return Err(invalid(format!("{name} must be >= 1")));
            }
        }
        Ok(())
    }

    /// Upper bound on `|S|`: `k + rounds * inner_batches * batch_size`.
    pub fn coreset_bound(&self) -> usize {
        self.k + self.rounds * self.inner_batches * self.batch_size
    }
}

/// Output of a solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub trace: SampleTrace,
    /// Orthonormal basis of `span(S)`.
    pub span: Basis,
    pub span_dim: usize,
    /// Extracted subspace, dimension `k` unless the data has lower rank.
    pub subspace: Basis,
    pub trimmed_cost_k: f64,
    pub trimmed_cost_span: f64,
    /// The `floor((1 - alpha) n)` points nearest `subspace`, ascending.
    pub inlier_indices: Vec<usize>,
    /// Residual mass of the span after the initial pick and after each round.
    pub per_round_residual_mass: Vec<f64>,
    /// Sampling stopped because the span already fit every point.
    pub exact_fit: bool,
    pub mestimator: Option<MEstimatorSummary>,
    pub affine: Option<AffineSummary>,
    pub wall_time_ms: f64,
}

/// `floor((1 - alpha) n)`, with a small guard against representation error
/// (so `alpha = 1/3, n = 3` gives 2).
pub fn inlier_count(n: usize, alpha: f64) -> Result<usize> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(invalid(format!("alpha must lie in [0, 1), got {alpha}")));
    }
    let h = ((1.0 - alpha) * n as f64 + 1e-9).floor() as usize;
    if h == 0 {
        return Err(Error::EmptyInlierSet { n, alpha });
    }
    Ok(h.min(n))
}

/// Indices of the `h` smallest residuals, ties to the smaller index,
/// returned in ascending index order.
pub(crate) fn nearest_from_residuals(residuals: &[f64], h: usize) -> Vec<usize> {
    let mut order = rank_by_residual(residuals);
    order.truncate(h);
    order.sort_unstable();
    order
}

fn rank_by_residual(residuals: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..residuals.len()).collect();
    order.sort_by(|&i, &j| residuals[i].total_cmp(&residuals[j]).then(i.cmp(&j)));
    order
}

/// Sum of `loss(r)` over the `h` smallest residuals.
pub(crate) fn trimmed_loss_from_residuals(residuals: &[f64], h: usize, loss: &LossFunction) -> f64 {
    rank_by_residual(residuals).into_iter().take(h).map(|i| loss.value(residuals[i])).sum()
}

/// Indices of the `floor((1 - alpha) n)` points nearest `span(b)`.
pub fn nearest_inliers(x: &PointSet, b: &Basis, alpha: f64) -> Result<Vec<usize>> {
    let h = inlier_count(x.n(), alpha)?;
    Ok(nearest_from_residuals(&residual_norms(x, b)?, h))
}

/// `sum` of `d(x_i, span(b))^p` over the nearest inliers.
pub fn trimmed_cost(x: &PointSet, b: &Basis, alpha: f64, p: f64) -> Result<f64> {
    let loss = LossFunction::PthPower(p);
    loss.validate()?;
    let h = inlier_count(x.n(), alpha)?;
    Ok(trimmed_loss_from_residuals(&residual_norms(x, b)?, h, &loss))
}

/// The `k = 1`, `p = 2` solver: one squared-length pick, then adaptive
/// rounds of squared-residual sampling.
pub fn line_solver(x: &PointSet, cfg: &SolverConfig) -> Result<SolveReport> {
    if cfg.k != 1 || cfg.p != 2.0 {
        return Err(invalid(format!("line_solver needs k = 1 and p = 2, got k = {}, p = {}", cfg.k, cfg.p)));
    }
    solve_outliers(x, cfg)
}

/// The general weak-coreset solver.
pub fn solve_outliers(x: &PointSet, cfg: &SolverConfig) -> Result<SolveReport> {
    solve_observed(x, cfg, &mut |_, _| {})
}

/// [`solve_outliers`] with a callback receiving `(round, span basis)` after
/// the initial pick (`round = 0`) and after every completed round.
pub fn solve_observed(x: &PointSet, cfg: &SolverConfig, observer: &mut dyn FnMut(usize, &Basis)) -> Result<SolveReport> {
    cfg.validate()?;
    let started = Instant::now();
    if cfg.k > x.d() {
        return Err(invalid(format!("k = {} exceeds the dimension {}", cfg.k, x.d())));
    }
    let h = inlier_count(x.n(), cfg.alpha)?;
    let p = cfg.p;
    let loss = LossFunction::PthPower(p);

    let trace = adaptive_init(x, cfg.k, p, cfg.seed.derive(0, 0))?;
    let basis = Basis::empty(x.d()).extend(x.points(trace.all()), span_tolerance(x))?;
    let Growth { trace, basis: span, masses, exact_fit } =
        grow_coreset(x, cfg, cfg.rounds, &|r| pth_power(r, p), trace, basis, observer)?;

    let subspace = extract_with_loss(x, &span, cfg, &loss)?;
    let span_res = residual_norms(x, &span)?;
    let k_res = residual_norms(x, &subspace)?;
    Ok(SolveReport {
        span_dim: span.dim(),
        trimmed_cost_k: trimmed_loss_from_residuals(&k_res, h, &loss),
        trimmed_cost_span: trimmed_loss_from_residuals(&span_res, h, &loss),
        inlier_indices: nearest_from_residuals(&k_res, h),
        per_round_residual_mass: masses,
        exact_fit,
        trace,
        span,
        subspace,
        mestimator: None,
        affine: None,
        wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}

pub(crate) struct Growth {
    pub trace: SampleTrace,
    pub basis: Basis,
    pub masses: Vec<f64>,
    pub exact_fit: bool,
}

struct Candidate {
    drawn: Vec<usize>,
    basis: Basis,
    mass: f64,
}

fn mass_of(x: &PointSet, b: &Basis, weight: &(dyn Fn(f64) -> f64 + Sync)) -> Result<f64> {
    Ok(residual_norms(x, b)?.into_iter().map(weight).sum())
}

/// Runs `rounds` adaptive rounds from `basis = span(trace)`, sampling with
/// weights `weight(d(x_i, span))`.
pub(crate) fn grow_coreset(
    x: &PointSet,
    cfg: &SolverConfig,
    rounds: usize,
    weight: &(dyn Fn(f64) -> f64 + Sync),
    mut trace: SampleTrace,
    mut basis: Basis,
    observer: &mut dyn FnMut(usize, &Basis),
) -> Result<Growth> {
    let tol = span_tolerance(x);
    let initial: f64 = x.norms().into_iter().map(weight).sum();
    let floor = EXACT_FIT_RATIO * initial;
    let mut mass = mass_of(x, &basis, weight)?;
    let mut masses = vec![mass];
    observer(0, &basis);
    let mut exact_fit = mass <= floor;

    for t in 1..=rounds {
        if exact_fit {
            break;
        }
        let start = WeightVector::from_residuals(&residual_norms(x, &basis)?, weight)?;
        if start.is_degenerate() {
            exact_fit = true;
            break;
        }
        let candidates: Vec<Candidate> = (0..cfg.trials)
            .into_par_iter()
            .map(|r| run_candidate(x, cfg, weight, &basis, &start, cfg.seed.derive(t as u64, r as u64), tol))
            .collect::<Result<_>>()?;
        // First minimum wins, so the choice does not depend on scheduling.
        let best = candidates
            .into_iter()
            .reduce(|a, b| if b.mass < a.mass { b } else { a })
            .expect("at least one trial");
        trace.push_round(best.drawn, start);
        basis = best.basis;
        mass = best.mass;
        masses.push(mass);
        observer(t, &basis);
        exact_fit = mass <= floor;
    }
    Ok(Growth { trace, basis, masses, exact_fit })
}

fn run_candidate(
    x: &PointSet,
    cfg: &SolverConfig,
    weight: &(dyn Fn(f64) -> f64 + Sync),
    start_basis: &Basis,
    start_weights: &WeightVector,
    seed: Seed,
    tol: f64,
) -> Result<Candidate> {
    let mut rng = seed.rng();
    let mut basis = start_basis.clone();
    let mut drawn = Vec::with_capacity(cfg.inner_batches * cfg.batch_size);
    for j in 0..cfg.inner_batches {
        let w = if j == 0 {
            start_weights.clone()
        } else {
            WeightVector::from_residuals(&residual_norms(x, &basis)?, weight)?
        };
        if w.is_degenerate() {
            break;
        }
        let mut batch = sample_with(&w, cfg.batch_size, &mut rng)?;
        drawn.extend_from_slice(&batch);
        batch.sort_unstable();
        batch.dedup();
        basis = basis.extend(x.points(&batch), tol)?;
    }
    let mass = mass_of(x, &basis, weight)?;
    Ok(Candidate { drawn, basis, mass })
}
