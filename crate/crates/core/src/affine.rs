//! Affine subspaces with outliers by sample-mean enumeration.
//!
//! A small uniform sample `T` is drawn and every nonempty part `S` of `T`
//! proposes its mean as the origin. The linear solver runs on the points
//! shifted by each proposal and the cheapest placement wins. One of the parts
//! is `T` restricted to the true inliers, whose mean is close to the inlier
//! mean with probability at least 1/2.

use std::time::Instant;

use nalgebra::DVector;
use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::geometry::{AffinePlacement, PointSet};
use crate::sampling::Seed;
use crate::solver::{solve_outliers, SolveReport, SolverConfig};

/// Largest sample whose `2^|T|` parts are enumerated.
pub const PARTITION_CAP: usize = 24;

/// Round index reserved for drawing the sample `T`.
const SAMPLE_ROUND: u64 = u64::MAX - 2;

#[derive(Debug, Clone, PartialEq)]
pub struct AffineConfig {
    pub eta: f64,
    pub sample_size: usize,
    /// Solver run on each shifted copy; `p` must be 2.
    pub inner: SolverConfig,
}

/// `ceil(2 / eta^2 / (1 - alpha))`.
pub fn default_sample_size(eta: f64, alpha: f64) -> usize {
    (2.0 / (eta * eta) / (1.0 - alpha)).ceil() as usize
}

impl AffineConfig {
    pub fn new(eta: f64, inner: SolverConfig) -> Result<Self> {
        let cfg = Self { eta, sample_size: default_sample_size(eta, inner.alpha), inner };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(invalid(format!("eta must lie in (0, 1), got {}", self.eta)));
        }
        if self.sample_size < 1 {
            return Err(invalid("affine sample size must be >= 1"));
        }
        if self.inner.p != 2.0 {
            return Err(invalid(format!("affine solving supports p = 2 only, got {}", self.inner.p)));
        }
        self.inner.validate()
    }
}

/// Extra fields reported by [`affine_solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct AffineSummary {
    /// Origin of the returned affine subspace (the mean of `best_part`).
    pub origin: DVector<f64>,
    /// The uniform sample `T`, ascending.
    pub sample: Vec<usize>,
    pub best_part: Vec<usize>,
    pub parts_evaluated: u64,
}

/// Both sides of `sum_I d(x, V)^2 = sum_I d(x, V_mu)^2 + |I| d(V, V_mu)^2`,
/// where `V_mu` is the translate of `V` through the mean of the points in `I`.
pub fn parallel_axis_check(x: &PointSet, v: &AffinePlacement, inliers: &[usize]) -> Result<(f64, f64)> {
    if inliers.is_empty() {
        return Err(invalid("parallel axis check needs a nonempty index set"));
    }
    let sub = x.select(inliers)?;
    let mu = sub.mean(None);
    let lhs: f64 = v.residual_norms(&sub)?.iter().map(|r| r * r).sum();
    let through_mean = AffinePlacement::new(mu.clone(), v.basis.clone())?;
    let centred: f64 = through_mean.residual_norms(&sub)?.iter().map(|r| r * r).sum();
    let shift = v.basis.residual(&(mu - &v.origin))?.norm_squared();
    Ok((lhs, centred + inliers.len() as f64 * shift))
}

/// Draws `m` indices uniformly with replacement and returns
/// `(||mu_S - mu||, eta D)` with `eta = sqrt(2 / m)` and `D` the diameter.
pub fn sample_mean_trial(points: &PointSet, m: usize, seed: Seed) -> Result<(f64, f64)> {
    if m < 1 {
        return Err(invalid("sample size must be >= 1"));
    }
    let n = points.n();
    let mut rng = seed.rng();
    let picks: Vec<usize> = (0..m).map(|_| rng.random_range(0..n)).collect();
    let deviation = (points.mean(Some(&picks)) - points.mean(None)).norm();
    let mut diameter: f64 = 0.0;
    for i in 0..n {
        let xi = points.matrix().row(i);
        for j in i + 1..n {
            diameter = diameter.max((xi - points.matrix().row(j)).norm());
        }
    }
    Ok((deviation, (2.0 / m as f64).sqrt() * diameter))
}

/// Enumerates the nonempty parts of a uniform sample, solves the linear
/// problem around each part's mean and keeps the cheapest placement. Ties
/// go to the smaller part mask.
pub fn affine_solve(x: &PointSet, cfg: &AffineConfig) -> Result<SolveReport> {
    cfg.validate()?;
    let started = Instant::now();
    if cfg.sample_size > PARTITION_CAP {
        return Err(Error::PartitionCap { size: cfg.sample_size, cap: PARTITION_CAP });
    }
    let size = cfg.sample_size.min(x.n());
    let mut rng = cfg.inner.seed.derive(SAMPLE_ROUND, 0).rng();
    let mut sample = index::sample(&mut rng, x.n(), size).into_vec();
    sample.sort_unstable();

    let parts = (1u64 << size) - 1;
    let (_, mask, origin, mut report) = (1..=parts)
        .into_par_iter()
        .map(|mask| {
            let part: Vec<usize> = (0..size).filter(|b| mask >> b & 1 == 1).map(|b| sample[b]).collect();
            let origin = x.mean(Some(&part));
            let report = solve_outliers(&x.translated(&(-&origin))?, &cfg.inner)?;
            Ok((report.trimmed_cost_k, mask, origin, report))
        })
        .try_reduce_with(|a, b| Ok(if (b.0, b.1) < (a.0, a.1) { b } else { a }))
        .expect("sample is nonempty")?;

    let best_part = (0..size).filter(|b| mask >> b & 1 == 1).map(|b| sample[b]).collect();
    report.affine = Some(AffineSummary { origin, sample, best_part, parts_evaluated: parts });
    report.wall_time_ms = started.elapsed().as_secs_f64() * 1e3;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Basis;
    use nalgebra::{dvector, DMatrix};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn parallel_axis_hand_example() {
        let x = PointSet::from_rows(&[vec![0.0], vec![2.0]]).unwrap();
        let v = AffinePlacement::new(dvector![0.0], Basis::empty(1)).unwrap();
        assert_eq!(parallel_axis_check(&x, &v, &[0, 1]).unwrap(), (4.0, 4.0));
    }

    #[test]
    fn parallel_axis_random_plane() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = PointSet::from_matrix(DMatrix::from_fn(10, 3, |_, _| rng.random::<f64>() * 4.0 - 2.0)).unwrap();
        let b = Basis::empty(3).extend([dvector![1.0, 2.0, -1.0]], 1e-12).unwrap();
        let v = AffinePlacement::new(dvector![0.3, -1.0, 2.0], b).unwrap();
        let (lhs, rhs) = parallel_axis_check(&x, &v, &[0, 2, 3, 5, 9]).unwrap();
        assert!((lhs - rhs).abs() <= 1e-8 * lhs);
        assert!(parallel_axis_check(&x, &v, &[]).is_err());
    }

    #[test]
    fn identical_points_have_no_deviation() {
        let x = PointSet::from_rows(&vec![vec![1.0, -2.0]; 6]).unwrap();
        let (dev, bound) = sample_mean_trial(&x, 3, Seed(1)).unwrap();
        assert!(dev < 1e-15);
        assert_eq!(bound, 0.0);
    }

    #[test]
    fn large_samples_concentrate() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = PointSet::from_matrix(DMatrix::from_fn(50, 4, |_, _| rng.random::<f64>())).unwrap();
        let (dev, bound) = sample_mean_trial(&x, 10_000, Seed(2)).unwrap();
        let diameter = bound / (2.0f64 / 10_000.0).sqrt();
        assert!(dev < 0.1 * diameter);
    }

    #[test]
    fn sample_size_defaults_and_cap() {
        assert_eq!(default_sample_size(0.5, 0.2), 10);
        let inner = SolverConfig::new(1, 2.0, 0.2, 0.3, 0.5).unwrap();
        let cfg = AffineConfig::new(0.25, inner.clone()).unwrap();
        assert_eq!(cfg.sample_size, 40);
        let x = PointSet::from_rows(&vec![vec![1.0, 0.0]; 50]).unwrap();
        assert!(matches!(affine_solve(&x, &cfg), Err(Error::PartitionCap { size: 40, cap: 24 })));
        let mut bad = inner;
        bad.p = 1.5;
        assert!(AffineConfig::new(0.5, bad).is_err());
    }

    #[test]
    fn exact_affine_flat_is_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let origin = dvector![3.0, -1.0, 2.0, 0.5];
        let dir = dvector![1.0, 1.0, 0.0, -1.0].normalize();
        let mut rows: Vec<Vec<f64>> = (0..30)
            .map(|_| (&origin + &dir * (rng.random::<f64>() * 4.0 - 2.0)).iter().copied().collect())
            .collect();
        for _ in 0..6 {
            rows.push((0..4).map(|_| rng.random::<f64>() * 40.0 - 20.0).collect());
        }
        let x = PointSet::from_rows(&rows).unwrap();
        let mut inner = SolverConfig::new(1, 2.0, 1.0 / 6.0, 0.3, 0.5).unwrap().with_seed(Seed(11));
        inner.batch_size = 20;
        let cfg = AffineConfig { eta: 0.9, sample_size: 8, inner };
        let report = affine_solve(&x, &cfg).unwrap();
        let spread: f64 = (0..30).map(|i| (x.point(i) - &origin).norm_squared()).sum();
        assert!(report.trimmed_cost_k <= 1e-8 * spread, "{}", report.trimmed_cost_k);
        assert_eq!(report.affine.as_ref().unwrap().parts_evaluated, 255);
    }
}
