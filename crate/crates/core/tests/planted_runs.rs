//! Seeded statistical runs on planted instances.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use osa_core::affine::{affine_solve, sample_mean_trial, AffineConfig};
use osa_core::datagen::{gen_affine_planted, gen_planted, OutlierModel, PlantedTruth};
use osa_core::geometry::{min_sin_angle, top_k_subspace};
use osa_core::mestimators::{m_estimator_solve, LossFunction, MEstimatorConfig};
use osa_core::oracle::{exact_optimum_p2, exact_optimum_p2_branch_bound};
use osa_core::sampling::span_of;
use osa_core::geometry::residual_norms;
use osa_core::solver::{
    diagnostics_angle_track, diagnostics_bad_set, extract_k_subspace, inlier_count, line_solver, trimmed_cost,
};
use osa_core::{PointSet, Seed, SolverConfig};

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn with_delta(count: usize, n: usize, d: usize, k: usize, alpha: f64, scale: f64, min_delta: f64) -> Vec<(PointSet, PlantedTruth)> {
    (0..2000u64)
        .map(|s| gen_planted(n, d, k, alpha, 0.05, OutlierModel::UniformFar { scale }, Seed(s)).unwrap())
        .filter(|(_, t)| t.achieved_delta.value().is_some_and(|v| v >= min_delta))
        .take(count)
        .collect()
}

#[test]
fn line_solver_matches_the_optimum_on_planted_lines() {
    let eps = 0.3;
    let instances = with_delta(20, 100, 10, 1, 0.3, 0.3, 0.2);
    assert_eq!(instances.len(), 20);
    let wins = instances
        .iter()
        .enumerate()
        .filter(|(i, (x, _))| {
            let cfg = SolverConfig::new(1, 2.0, 0.3, eps, 0.2).unwrap().with_seed(Seed(*i as u64));
            let r = line_solver(x, &cfg).unwrap();
            let opt = exact_optimum_p2_branch_bound(x, 1, 0.3, 5_000_000).unwrap();
            assert!(opt.best_cost <= r.trimmed_cost_k * (1.0 + 1e-9));
            r.trimmed_cost_k <= (1.0 + eps) * opt.best_cost
        })
        .count();
    assert!(wins >= 10, "{wins}/20");
}

#[test]
fn line_solver_without_outliers_matches_the_top_line() {
    let wins = (0..20u64)
        .filter(|&s| {
            let (x, _) = gen_planted(100, 10, 1, 0.0, 0.5, OutlierModel::UniformFar { scale: 1.0 }, Seed(s)).unwrap();
            let cfg = SolverConfig::new(1, 2.0, 0.0, 0.3, 0.1).unwrap().with_seed(Seed(s));
            let r = line_solver(&x, &cfg).unwrap();
            let best = trimmed_cost(&x, &top_k_subspace(&x, None, 1).unwrap(), 0.0, 2.0).unwrap();
            r.trimmed_cost_k <= 1.3 * best
        })
        .count();
    assert!(wins >= 10, "{wins}/20");
}

#[test]
fn extraction_never_beats_the_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for s in 0..10u64 {
        let x = PointSet::from_matrix(DMatrix::from_fn(10, 4, |_, _| rng.random_range(-2.0..2.0))).unwrap();
        let cfg = SolverConfig::new(2, 2.0, 0.3, 0.3, 0.1).unwrap().with_seed(Seed(s));
        let span = span_of(&x, &[0, 3, 5]).unwrap();
        let extracted = trimmed_cost(&x, &extract_k_subspace(&x, &span, &cfg).unwrap(), 0.3, 2.0).unwrap();
        let opt = exact_optimum_p2(&x, 2, 0.3).unwrap().best_cost;
        assert!(extracted >= opt * (1.0 - 1e-9), "{extracted} < {opt}");
    }
}

#[test]
fn angles_vanish_when_the_data_lies_in_the_planted_subspace() {
    let (x, truth) = gen_planted(60, 6, 2, 0.0, 0.0, OutlierModel::UniformFar { scale: 1.0 }, Seed(3)).unwrap();
    let mut cfg = SolverConfig::new(2, 2.0, 0.0, 0.3, 0.1).unwrap().with_seed(Seed(3));
    cfg.rounds = 4;
    let track = diagnostics_angle_track(&x, &truth, &cfg).unwrap();
    assert_eq!(track.len(), 5);
    assert!(track.iter().all(|&a| a < 1e-8), "{track:?}");
}

#[test]
fn adding_a_bad_point_never_raises_the_angle() {
    for s in 0..20u64 {
        let (x, truth) = gen_planted(80, 8, 2, 0.1, 0.05, OutlierModel::UniformFar { scale: 2.0 }, Seed(s)).unwrap();
        let outlier = (0..x.n()).find(|i| truth.inlier_indices.binary_search(i).is_err()).unwrap();
        let cfg = SolverConfig::new(2, 2.0, 0.1, 0.2, 0.1).unwrap();
        let report = diagnostics_bad_set(&x, &[outlier], &truth, &cfg).unwrap();
        let before = min_sin_angle(&span_of(&x, &[outlier]).unwrap(), &truth.subspace).unwrap();
        for &b in report.bad.iter().take(5) {
            let after = min_sin_angle(&span_of(&x, &[outlier, b]).unwrap(), &truth.subspace).unwrap();
            assert!(after <= before + 1e-12, "{after} > {before}");
        }
    }
}

#[test]
fn line_case_rotation_is_the_sample_line() {
    let (x, truth) = gen_planted(40, 5, 1, 0.2, 0.05, OutlierModel::UniformFar { scale: 2.0 }, Seed(8)).unwrap();
    let cfg = SolverConfig::new(1, 2.0, 0.2, 0.2, 0.1).unwrap();
    for i in [0, 7, 19] {
        let r = diagnostics_bad_set(&x, &[i], &truth, &cfg).unwrap();
        assert_eq!(r.rotated.dim(), 1);
        let line = span_of(&x, &[i]).unwrap();
        assert!(min_sin_angle(&line, &r.rotated).unwrap() < 1e-9);
        assert!((r.sin_angle - min_sin_angle(&line, &truth.subspace).unwrap()).abs() < 1e-9);
    }
}

#[test]
fn huber_output_beats_untrimmed_pca_under_heavy_outliers() {
    let loss = LossFunction::Huber(0.5);
    let alpha = 0.2;
    let mut ours = Vec::new();
    let mut pca = Vec::new();
    for s in 0..20u64 {
        let (x, _) = gen_planted(150, 10, 2, alpha, 0.05, OutlierModel::UniformFar { scale: 50.0 }, Seed(100 + s)).unwrap();
        let solver = SolverConfig::new(2, 2.0, alpha, 0.3, 0.1).unwrap().with_seed(Seed(s));
        let r = m_estimator_solve(&x, &MEstimatorConfig::new(loss, solver).unwrap()).unwrap();
        ours.push(r.trimmed_cost_k);
        let plain = top_k_subspace(&x, None, 2).unwrap();
        let mut losses: Vec<f64> = residual_norms(&x, &plain).unwrap().iter().map(|&v| loss.value(v)).collect();
        losses.sort_by(f64::total_cmp);
        pca.push(losses.iter().take(inlier_count(x.n(), alpha).unwrap()).sum());
    }
    let (a, b) = (median(ours), median(pca));
    assert!(a <= b, "huber {a} vs pca {b}");
}

#[test]
fn two_point_sample_means() {
    let x = PointSet::from_rows(&[vec![-1.0], vec![1.0]]).unwrap();
    let hits = (0..1000u64).filter(|&t| {
        let (dev, bound) = sample_mean_trial(&x, 2, Seed(t)).unwrap();
        dev <= bound
    });
    assert!(hits.count() >= 500);
}

#[test]
fn planted_origin_is_recovered_by_some_part() {
    let sigma = 0.05;
    let eta = 0.7;
    let trials = 10;
    let hits = (0..trials as u64)
        .filter(|&s| {
            let (x, truth) =
                gen_affine_planted(80, 6, 2, 0.2, sigma, OutlierModel::UniformFar { scale: 10.0 }, 4.0, Seed(200 + s)).unwrap();
            let mut inner = SolverConfig::new(2, 2.0, 0.2, 0.3, 0.1).unwrap().with_seed(Seed(s));
            inner.batch_size = 30;
            let cfg = AffineConfig::new(eta, inner).unwrap();
            let r = affine_solve(&x, &cfg).unwrap();
            let inliers = x.select(&truth.inlier_indices).unwrap();
            let mut diameter: f64 = 0.0;
            for i in 0..inliers.n() {
                for j in 0..i {
                    diameter = diameter.max((inliers.point(i) - inliers.point(j)).norm());
                }
            }
            let offset = (r.affine.unwrap().origin - truth.affine_origin.unwrap()).norm();
            offset <= eta * diameter + 3.0 * sigma
        })
        .count();
    assert!(hits * 2 >= trials, "{hits}/{trials}");
}
