//! Planted-truth diagnostics: the bad set of a sample and angle tracking.

use nalgebra::DVector;

use super::{solve_observed, SolverConfig};
use crate::datagen::PlantedTruth;
use crate::error::Result;
use crate::geometry::{closest_directions, min_sin_angle, residual_norms, Basis, PointSet, ORTH_TOL};
use crate::sampling::{pth_power, span_of};

/// Residuals this small relative to the point's norm are rounding noise.
const NOISE_FLOOR: f64 = 1e-12;

/// The rotated subspace `W_S` for a sample `S` and its bad inliers.
#[derive(Debug, Clone, PartialEq)]
pub struct BadSetReport {
    /// `V*` rotated to contain the line of `span(S)` closest to `V*`.
    pub rotated: Basis,
    /// Sine of the angle between that line and `V*`.
    pub sin_angle: f64,
    /// Inliers with `d(x, W_S)^p > (1 + eps/2) d(x, V*)^p`, ascending.
    /// Residuals below `1e-12 ||x||` count as zero.
    pub bad: Vec<usize>,
    pub good: Vec<usize>,
    /// `sum_{B} ||x||^p / sum_i ||x||^p`.
    pub mass_ratio: f64,
    /// `span(S)` is orthogonal to `V*` (or empty), so the rotation used an
    /// arbitrary direction of `V*`.
    pub orthogonal_fallback: bool,
    /// `sum_{I} d(x, W_S)^p`.
    pub additive_lhs: f64,
    /// `sum_{I} d(x, V*)^p + eps sum_i ||x||^p`.
    pub additive_rhs: f64,
}

impl BadSetReport {
    /// The sample fails the additive guarantee.
    pub fn violates_additive(&self) -> bool {
        self.additive_lhs > self.additive_rhs
    }
}

/// Builds `W_S` from `span(S)` and the planted subspace, then splits the
/// planted inliers into bad and good points.
pub fn diagnostics_bad_set(x: &PointSet, s: &[usize], truth: &PlantedTruth, cfg: &SolverConfig) -> Result<BadSetReport> {
    let v_star = &truth.subspace;
    let d = x.d();
    let q = span_of(x, s)?;
    let (line, anchor, fallback) = match closest_directions(&q, v_star)? {
        Some((u, v, cos)) if cos > 1e-12 => (Some(u), v, false),
        Some((u, _, _)) => (Some(u), v_star.vector(0), true),
        None => (None, v_star.vector(0), true),
    };

    // Complement of the anchor direction inside V*.
    let complement: Vec<DVector<f64>> = (0..v_star.dim())
        .map(|j| {
            let c = v_star.vector(j);
            let a = anchor.dot(&c);
            c - &anchor * a
        })
        .collect();
    let w_star = Basis::empty(d).extend(complement, 1e-8)?;
    let rotated = match &line {
        Some(u) => Basis::empty(d).extend(std::iter::once(u.clone()), ORTH_TOL)?.extend(w_star.matrix().column_iter().map(|c| c.into_owned()), 1e-8)?,
        None => w_star,
    };
    let sin_angle = match line {
        Some(u) => crate::geometry::residual_norm(&u, v_star)?.clamp(0.0, 1.0),
        None => 1.0,
    };

    let p = cfg.p;
    let to_rotated = residual_norms(x, &rotated)?;
    let to_truth = residual_norms(x, v_star)?;
    let norms = x.norms();
    let mut bad = Vec::new();
    let mut good = Vec::new();
    let mut lhs = 0.0;
    let mut opt = 0.0;
    for &i in &truth.inlier_indices {
        let (a, b) = (pth_power(to_rotated[i], p), pth_power(to_truth[i], p));
        lhs += a;
        opt += b;
        if a > (1.0 + cfg.epsilon / 2.0) * b + pth_power(NOISE_FLOOR * norms[i], p) {
            bad.push(i);
        } else {
            good.push(i);
        }
    }
    bad.sort_unstable();
    good.sort_unstable();
    let total: f64 = norms.iter().map(|&r| pth_power(r, p)).sum();
    let bad_mass: f64 = bad.iter().map(|&i| pth_power(norms[i], p)).sum();
    Ok(BadSetReport {
        rotated,
        sin_angle,
        bad,
        good,
        mass_ratio: if total > 0.0 { bad_mass / total } else { 0.0 },
        orthogonal_fallback: fallback,
        additive_lhs: lhs,
        additive_rhs: opt + cfg.epsilon * total,
    })
}

/// Sine of the angle between `V*` and the closest line of the coreset span,
/// after the initial pick and after each of `cfg.rounds` rounds. Rounds
/// skipped by an early exact fit repeat the last value.
pub fn diagnostics_angle_track(x: &PointSet, truth: &PlantedTruth, cfg: &SolverConfig) -> Result<Vec<f64>> {
    let mut angles = Vec::with_capacity(cfg.rounds + 1);
    let mut failure = None;
    solve_observed(x, cfg, &mut |_, span| match min_sin_angle(span, &truth.subspace) {
        Ok(a) => angles.push(a),
        Err(e) => failure = Some(e),
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    let last = *angles.last().expect("initial round observed");
    angles.resize(cfg.rounds + 1, last);
    Ok(angles)
}
