//! Planted instances: inliers near a random `k`-subspace plus outliers.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::geometry::{residual_norms, AffinePlacement, Basis, PointSet};
use crate::oracle::{binomial, delta_of_instance, DeltaEstimate, SUBSET_BUDGET};
use crate::sampling::{pth_power, Seed};
use crate::solver::inlier_count;

/// How outliers are placed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutlierModel {
    /// Uniform direction, radius `scale * U[1, 2]`.
    UniformFar { scale: f64 },
    /// One Gaussian blob of standard deviation `spread` centred at distance
    /// `scale` in a random direction.
    Clustered { scale: f64, spread: f64 },
    /// Points of a second random `k`-subspace with coefficients of standard
    /// deviation `scale`, plus inlier-level noise.
    AdversarialNearSubspace { scale: f64 },
}

impl OutlierModel {
    /// Builds a model from its CLI name: `uniform-far`, `clustered`
    /// (spread `scale / 10`) or `adversarial`.
    pub fn from_name(name: &str, scale: f64) -> Result<Self> {
        let model = match name {
            "uniform-far" => OutlierModel::UniformFar { scale },
            "clustered" => OutlierModel::Clustered { scale, spread: scale / 10.0 },
            "adversarial" | "adversarial-near-subspace" => OutlierModel::AdversarialNearSubspace { scale },
            other => return Err(invalid(format!("unknown outlier model {other:?}"))),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn scale(&self) -> f64 {
        match *self {
            OutlierModel::UniformFar { scale }
            | OutlierModel::Clustered { scale, .. }
            | OutlierModel::AdversarialNearSubspace { scale } => scale,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        let valid = match *self {
            OutlierModel::UniformFar { scale } | OutlierModel::AdversarialNearSubspace { scale } => ok(scale),
            OutlierModel::Clustered { scale, spread } => ok(scale) && ok(spread),
        };
        if !valid {
            return Err(invalid(format!("outlier parameters must be finite and >= 0: {self:?}")));
        }
        Ok(())
    }
}

impl fmt::Display for OutlierModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OutlierModel::UniformFar { .. } => "uniform-far",
            OutlierModel::Clustered { .. } => "clustered",
            OutlierModel::AdversarialNearSubspace { .. } => "adversarial",
        })
    }
}

impl FromStr for OutlierModel {
    type Err = Error;

    /// `name` or `name:scale` (default scale 10).
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            Some((name, scale)) => {
                let scale = scale.parse().map_err(|_| invalid(format!("bad outlier scale {scale:?}")))?;
                Self::from_name(name, scale)
            }
            None => Self::from_name(s, 10.0),
        }
    }
}

/// Where `achieved_delta` was measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeltaReference {
    PlantedSubspace,
    ExactOracle,
}

/// The generating truth of a planted instance.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedTruth {
    pub subspace: Basis,
    /// Ascending.
    pub inlier_indices: Vec<usize>,
    pub sigma_in: f64,
    pub outlier_scale: f64,
    pub achieved_delta: DeltaEstimate,
    pub delta_reference: DeltaReference,
    pub affine_origin: Option<DVector<f64>>,
}

impl PlantedTruth {
    /// Distances of all points to the planted (affine) subspace.
    pub fn residuals(&self, x: &PointSet) -> Result<Vec<f64>> {
        match &self.affine_origin {
            Some(o) => AffinePlacement::new(o.clone(), self.subspace.clone())?.residual_norms(x),
            None => residual_norms(x, &self.subspace),
        }
    }

    /// `sum_{i in I} d(x_i, V*)^p`.
    pub fn inlier_cost(&self, x: &PointSet, p: f64) -> Result<f64> {
        let r = self.residuals(x)?;
        Ok(self.inlier_indices.iter().map(|&i| pth_power(r[i], p)).sum())
    }
}

fn gaussian_vector<R: Rng>(rng: &mut R, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.sample(StandardNormal))
}

fn random_subspace<R: Rng>(rng: &mut R, d: usize, k: usize) -> Result<Basis> {
    let g = DMatrix::from_fn(d, k, |_, _| StandardNormal.sample(rng));
    let basis = Basis::empty(d).extend(g.column_iter().map(|c| c.into_owned()), 1e-8)?;
    if basis.dim() != k {
        return Err(Error::NonFinite("random subspace lost rank".into()));
    }
    Ok(basis)
}

/// Planted instance with `floor((1 - alpha) n)` inliers: Gaussian
/// coefficients in `V*` plus `N(0, sigma_in^2)` noise orthogonal to `V*`.
/// `achieved_delta` uses the exact oracle when `C(n, h)` is within its
/// budget and the planted truth otherwise.
pub fn gen_planted(n: usize, d: usize, k: usize, alpha: f64, sigma_in: f64, model: OutlierModel, seed: Seed) -> Result<(PointSet, PlantedTruth)> {
    if n < 1 {
        return Err(invalid("n must be >= 1"));
    }
    if k < 1 || k >= d {
        return Err(invalid(format!("need 1 <= k < d, got k = {k}, d = {d}")));
    }
    if !(sigma_in >= 0.0 && sigma_in.is_finite()) {
        return Err(invalid(format!("sigma_in must be finite and >= 0, got {sigma_in}")));
    }
    model.validate()?;
    let h = inlier_count(n, alpha)?;

    let mut rng = seed.rng();
    let v_star = random_subspace(&mut rng, d, k)?;
    let mut inliers = index::sample(&mut rng, n, h).into_vec();
    inliers.sort_unstable();
    let mut is_inlier = vec![false; n];
    inliers.iter().for_each(|&i| is_inlier[i] = true);

    let second = match model {
        OutlierModel::AdversarialNearSubspace { .. } => Some(random_subspace(&mut rng, d, k)?),
        _ => None,
    };
    let centre = match model {
        OutlierModel::Clustered { scale, .. } => Some(gaussian_vector(&mut rng, d).normalize() * scale),
        _ => None,
    };
    let off_subspace = |v: DVector<f64>| -> Result<DVector<f64>> { v_star.residual(&v) };

    let mut data = DMatrix::zeros(n, d);
    for i in 0..n {
        let point = if is_inlier[i] {
            let c = gaussian_vector(&mut rng, k);
            v_star.matrix() * c + off_subspace(gaussian_vector(&mut rng, d) * sigma_in)?
        } else {
            match model {
                OutlierModel::UniformFar { scale } => {
                    let radius = scale * rng.random_range(1.0..2.0);
                    gaussian_vector(&mut rng, d).normalize() * radius
                }
                OutlierModel::Clustered { spread, .. } => centre.as_ref().expect("centre drawn") + gaussian_vector(&mut rng, d) * spread,
                OutlierModel::AdversarialNearSubspace { scale } => {
                    let c = gaussian_vector(&mut rng, k) * scale;
                    second.as_ref().expect("second subspace drawn").matrix() * c + gaussian_vector(&mut rng, d) * sigma_in
                }
            }
        };
        data.row_mut(i).copy_from(&point.transpose());
    }
    let x = PointSet::from_matrix(data)?;

    let (achieved_delta, delta_reference) = if binomial(n, h) <= SUBSET_BUDGET {
        (delta_of_instance(&x, k, alpha, 2.0, None)?, DeltaReference::ExactOracle)
    } else {
        (delta_of_instance(&x, k, alpha, 2.0, Some((&v_star, &inliers)))?, DeltaReference::PlantedSubspace)
    };
    let truth = PlantedTruth {
        subspace: v_star,
        inlier_indices: inliers,
        sigma_in,
        outlier_scale: model.scale(),
        achieved_delta,
        delta_reference,
        affine_origin: None,
    };
    Ok((x, truth))
}

/// [`gen_planted`] shifted by a random origin of norm `origin_scale`. The
/// origin comes from a separate stream, so `origin_scale = 0` reproduces
/// the linear instance exactly. `achieved_delta` is measured against the
/// planted affine subspace.
#[allow(clippy::too_many_arguments)]
pub fn gen_affine_planted(
    n: usize,
    d: usize,
    k: usize,
    alpha: f64,
    sigma_in: f64,
    model: OutlierModel,
    origin_scale: f64,
    seed: Seed,
) -> Result<(PointSet, PlantedTruth)> {
    if !(origin_scale >= 0.0 && origin_scale.is_finite()) {
        return Err(invalid(format!("origin_scale must be finite and >= 0, got {origin_scale}")));
    }
    let (x, mut truth) = gen_planted(n, d, k, alpha, sigma_in, model, seed)?;
    truth.achieved_delta = delta_of_instance(&x, k, alpha, 2.0, Some((&truth.subspace, &truth.inlier_indices)))?;
    truth.delta_reference = DeltaReference::PlantedSubspace;
    let mut rng = seed.derive(1, 0).rng();
    let origin = gaussian_vector(&mut rng, d).normalize() * origin_scale;
    truth.affine_origin = Some(origin.clone());
    Ok((x.translated(&origin)?, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::nearest_inliers;

    #[test]
    fn noiseless_inliers_are_an_exact_fit() {
        let (_, truth) = gen_planted(60, 6, 2, 0.2, 0.0, OutlierModel::UniformFar { scale: 5.0 }, Seed(1)).unwrap();
        assert_eq!(truth.achieved_delta, DeltaEstimate::ExactFit);
        assert_eq!(truth.delta_reference, DeltaReference::PlantedSubspace);
    }

    #[test]
    fn no_outliers_means_every_index() {
        let (x, truth) = gen_planted(30, 5, 2, 0.0, 0.1, OutlierModel::UniformFar { scale: 5.0 }, Seed(2)).unwrap();
        assert_eq!(truth.inlier_indices, (0..30).collect::<Vec<_>>());
        assert_eq!(x.n(), 30);
    }

    #[test]
    fn reference_instance_delta_in_range() {
        let (_, truth) = gen_planted(200, 20, 3, 0.25, 0.05, OutlierModel::UniformFar { scale: 1.0 }, Seed(3)).unwrap();
        let v = truth.achieved_delta.value().unwrap();
        assert!(v > 0.0 && v <= 0.75, "{v}");
        assert_eq!(truth.inlier_indices.len(), 150);
        assert!(truth.subspace.is_orthonormal(1e-10));
    }

    #[test]
    fn seeded_generation_is_reproducible() {
        for model in [
            OutlierModel::UniformFar { scale: 3.0 },
            OutlierModel::Clustered { scale: 3.0, spread: 0.3 },
            OutlierModel::AdversarialNearSubspace { scale: 1.0 },
        ] {
            let a = gen_planted(50, 7, 2, 0.3, 0.1, model, Seed(9)).unwrap();
            let b = gen_planted(50, 7, 2, 0.3, 0.1, model, Seed(9)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn inlier_residuals_follow_the_noise_level() {
        let (x, truth) = gen_planted(400, 12, 2, 0.1, 0.2, OutlierModel::UniformFar { scale: 10.0 }, Seed(4)).unwrap();
        let r = residual_norms(&x, &truth.subspace).unwrap();
        let mean: f64 = truth.inlier_indices.iter().map(|&i| r[i]).sum::<f64>() / truth.inlier_indices.len() as f64;
        let expected = 0.2 * (10.0f64).sqrt();
        assert!((mean - expected).abs() <= 0.1 * expected, "{mean} vs {expected}");
    }

    #[test]
    fn far_outliers_leave_planted_inliers_nearest() {
        let mut agree = 0;
        for s in 0..20 {
            let (x, truth) = gen_planted(200, 10, 2, 0.2, 0.05, OutlierModel::UniformFar { scale: 10.0 * 0.05 * 10f64.sqrt() }, Seed(s)).unwrap();
            if nearest_inliers(&x, &truth.subspace, 0.2).unwrap() == truth.inlier_indices {
                agree += 1;
            }
        }
        assert!(agree >= 19, "{agree}/20");
    }

    #[test]
    fn affine_origin_shifts_points() {
        let model = OutlierModel::UniformFar { scale: 4.0 };
        let (base, _) = gen_planted(40, 5, 2, 0.2, 0.1, model, Seed(6)).unwrap();
        let (same, t0) = gen_affine_planted(40, 5, 2, 0.2, 0.1, model, 0.0, Seed(6)).unwrap();
        assert_eq!(base, same);
        assert_eq!(t0.affine_origin.as_ref().unwrap().norm(), 0.0);
        let (shifted, t) = gen_affine_planted(40, 5, 2, 0.2, 0.1, model, 3.0, Seed(6)).unwrap();
        let origin = t.affine_origin.clone().unwrap();
        assert!((origin.norm() - 3.0).abs() < 1e-12);
        assert_eq!(shifted, base.translated(&origin).unwrap());
        let planted = t.inlier_cost(&shifted, 2.0).unwrap();
        let linear = t0.inlier_cost(&base, 2.0).unwrap();
        assert!((planted - linear).abs() <= 1e-9 * linear);
    }

    #[test]
    fn rejects_bad_parameters() {
        let m = OutlierModel::UniformFar { scale: 1.0 };
        assert!(gen_planted(10, 3, 3, 0.1, 0.1, m, Seed(0)).is_err());
        assert!(gen_planted(10, 3, 1, 1.0, 0.1, m, Seed(0)).is_err());
        assert!(gen_planted(10, 3, 1, 0.1, -1.0, m, Seed(0)).is_err());
        assert!("nope".parse::<OutlierModel>().is_err());
        assert_eq!("clustered:2".parse::<OutlierModel>().unwrap(), OutlierModel::Clustered { scale: 2.0, spread: 0.2 });
    }
}
