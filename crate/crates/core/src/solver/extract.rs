//! Recovering a `k`-dimensional subspace from the span of a coreset.
//!
//! Works in span coordinates: the distance of `x_i` to a subspace `W` of the
//! span is `sqrt(off_i^2 + d(y_i, W)^2)` where `off_i` is the distance to the
//! span and `y_i` the coordinates of the projection. Each start runs trimmed
//! alternating minimization (nearest inliers, then a reweighted top-k fit on
//! them); the best trimmed cost seen over all starts is returned.

use nalgebra::DVector;
use rand::seq::index;
use rayon::prelude::*;

use super::{inlier_count, nearest_from_residuals, trimmed_loss_from_residuals, SolverConfig};
use crate::error::Result;
use crate::geometry::{project_onto, residual_norms, top_k_subspace, Basis, PointSet};
use crate::mestimators::LossFunction;

/// Round index reserved for extraction restarts.
const EXTRACTION_ROUND: u64 = u64::MAX;

/// Best `k`-subspace of `span` for the trimmed `p`-cost with `p = cfg.p`.
/// When `dim(span) <= k` the span itself is returned.
pub fn extract_k_subspace(x: &PointSet, span: &Basis, cfg: &SolverConfig) -> Result<Basis> {
    extract_with_loss(x, span, cfg, &LossFunction::PthPower(cfg.p))
}

struct Problem<'a> {
    coords: PointSet,
    off_sq: Vec<f64>,
    h: usize,
    k: usize,
    loss: &'a LossFunction,
}

impl Problem<'_> {
    fn residuals(&self, w: &Basis) -> Result<Vec<f64>> {
        Ok(residual_norms(&self.coords, w)?
            .into_iter()
            .zip(&self.off_sq)
            .map(|(r, off)| (r * r + off).sqrt())
            .collect())
    }

    /// Completes a rank-deficient fit with coordinate axes. Extra
    /// directions never raise the cost.
    fn pad(&self, mut w: Basis) -> Result<Basis> {
        let m = self.coords.d();
        for j in 0..m {
            if w.dim() >= self.k {
                break;
            }
            w = w.extend(std::iter::once(DVector::from_fn(m, |i, _| if i == j { 1.0 } else { 0.0 })), 1e-6)?;
        }
        Ok(w)
    }

    /// Alternating minimization from `start`; returns the best basis and cost.
    fn descend(&self, start: Basis, iters: usize) -> Result<(Basis, f64)> {
        let mut w = self.pad(start)?;
        let mut r = self.residuals(&w)?;
        let mut best = (w.clone(), trimmed_loss_from_residuals(&r, self.h, self.loss));
        let mut previous: Option<Vec<usize>> = None;
        for _ in 0..iters {
            let inliers = nearest_from_residuals(&r, self.h);
            if previous.as_ref() == Some(&inliers) {
                break;
            }
            let mut weights: Vec<f64> = inliers.iter().map(|&i| self.loss.irls_weight(r[i])).collect();
            if !(weights.iter().sum::<f64>() > 0.0) {
                weights.iter_mut().for_each(|v| *v = 1.0);
            }
            w = self.pad(top_k_subspace(&self.coords.select(&inliers)?, Some(&weights), self.k)?)?;
            r = self.residuals(&w)?;
            let cost = trimmed_loss_from_residuals(&r, self.h, self.loss);
            if cost < best.1 {
                best = (w.clone(), cost);
            }
            previous = Some(inliers);
        }
        Ok(best)
    }
}

/// Extraction under an arbitrary loss, using its IRLS weights.
pub(crate) fn extract_with_loss(x: &PointSet, span: &Basis, cfg: &SolverConfig, loss: &LossFunction) -> Result<Basis> {
    let k = cfg.k;
    if span.dim() <= k {
        return Ok(span.clone());
    }
    let off = residual_norms(x, span)?;
    let problem = Problem {
        coords: project_onto(x, span)?,
        off_sq: off.iter().map(|r| r * r).collect(),
        h: inlier_count(x.n(), cfg.alpha)?,
        k,
        loss,
    };
    let n = x.n();
    let m = span.dim();
    let tol = 1e-10 * problem.coords.max_norm().max(f64::MIN_POSITIVE);

    let mut starts = vec![top_k_subspace(&problem.coords, None, k)?];
    for r in 0..cfg.extraction_restarts {
        let mut rng = cfg.seed.derive(EXTRACTION_ROUND, r as u64).rng();
        let picks = index::sample(&mut rng, n, k.min(n)).into_vec();
        starts.push(Basis::empty(m).extend(problem.coords.points(&picks), tol)?);
    }

    let results: Vec<(Basis, f64)> = starts
        .into_par_iter()
        .map(|s| problem.descend(s, cfg.extraction_iters))
        .collect::<Result<_>>()?;
    let (best, _) = results
        .into_iter()
        .reduce(|a, b| if b.1 < a.1 { b } else { a })
        .expect("at least the PCA start");
    span.embed(&best)
}
