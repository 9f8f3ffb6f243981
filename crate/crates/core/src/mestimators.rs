//! M-estimator losses and the non-adaptive residual-sampling solver.
//!
//! A [`LossFunction`] replaces `r^p` in the trimmed objective. Huber is
//! quadratic below its threshold and linear above; Tukey's bisquare
//! saturates at `t^6 / 6` beyond the threshold so the loss stays monotone.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::geometry::{residual_norms, span_tolerance, Basis, PointSet};
use crate::sampling::{adaptive_init, pth_power, WeightVector};
use crate::solver::{self, Growth, SolveReport, SolverConfig};

/// Residual loss `M(r)` for `r >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossFunction {
    PthPower(f64),
    Huber(f64),
    TukeyBisquare(f64),
}

impl LossFunction {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LossFunction::PthPower(p) if !(p >= 1.0 && p.is_finite()) => {
                Err(invalid(format!("p must be a finite value >= 1, got {p}")))
            }
            LossFunction::Huber(t) | LossFunction::TukeyBisquare(t) if !(t > 0.0 && t.is_finite()) => {
                Err(invalid(format!("loss threshold must be positive and finite, got {t}")))
            }
            _ => Ok(()),
        }
    }

    /// `M(x)`; negative input is an error.
    pub fn eval(&self, x: f64) -> Result<f64> {
        if !(x >= 0.0) {
            return Err(invalid(format!("loss argument must be >= 0, got {x}")));
        }
        Ok(self.value(x))
    }

    /// `M(x)` for `x >= 0` without the sign check.
    pub fn value(&self, x: f64) -> f64 {
        match *self {
            LossFunction::PthPower(p) => pth_power(x, p),
            LossFunction::Huber(t) => {
                if x < t {
                    0.5 * x * x
                } else {
                    t * x - 0.5 * t * t
                }
            }
            LossFunction::TukeyBisquare(t) => {
                let t2 = t * t;
                let t6 = t2 * t2 * t2;
                if x < t {
                    let g = t2 - x * x;
                    (t6 - g * g * g) / 6.0
                } else {
                    t6 / 6.0
                }
            }
        }
    }

    /// Iteratively-reweighted least-squares weight `M'(r) / r`, up to a
    /// constant factor. Residuals are clipped below at `1e-12` where the
    /// weight would blow up.
    pub fn irls_weight(&self, r: f64) -> f64 {
        match *self {
            LossFunction::PthPower(p) => {
                if p == 2.0 {
                    1.0
                } else {
                    r.max(1e-12).powf(p - 2.0)
                }
            }
            LossFunction::Huber(t) => {
                if r < t {
                    1.0
                } else {
                    t / r
                }
            }
            LossFunction::TukeyBisquare(t) => {
                if r < t {
                    let u = 1.0 - (r / t) * (r / t);
                    u * u
                } else {
                    0.0
                }
            }
        }
    }
}

impl fmt::Display for LossFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossFunction::PthPower(p) => write!(f, "lp:{p}"),
            LossFunction::Huber(t) => write!(f, "huber:{t}"),
            LossFunction::TukeyBisquare(t) => write!(f, "tukey:{t}"),
        }
    }
}

impl FromStr for LossFunction {
    type Err = Error;

    /// Parses `lp:<p>`, `huber:<t>` or `tukey:<t>`.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, value) = s
            .split_once(':')
            .ok_or_else(|| invalid(format!("loss must look like lp:<p>, huber:<t> or tukey:<t>, got {s:?}")))?;
        let v: f64 = value.trim().parse().map_err(|_| invalid(format!("bad loss parameter {value:?}")))?;
        let loss = match kind.trim() {
            "lp" => LossFunction::PthPower(v),
            "huber" => LossFunction::Huber(v),
            "tukey" => LossFunction::TukeyBisquare(v),
            other => return Err(invalid(format!("unknown loss {other:?}"))),
        };
        loss.validate()?;
        Ok(loss)
    }
}

/// Configuration of [`m_estimator_solve`]. The shared fields (`k`, `alpha`,
/// `epsilon`, `delta`, rounds, batches, seed) live in `solver`; `solver.p`
/// is the exponent of the secondary `p`-cost report.
#[derive(Debug, Clone, PartialEq)]
pub struct MEstimatorConfig {
    pub loss: LossFunction,
    pub solver: SolverConfig,
    /// `C'` in the inclusion probability `min(1, C' M(r_i) / sum_j M(r_j))`.
    pub sample_constant: f64,
    /// Run adaptive refinement rounds after the residual-sampling pass.
    pub refine: bool,
}

impl MEstimatorConfig {
    pub fn new(loss: LossFunction, solver: SolverConfig) -> Result<Self> {
        loss.validate()?;
        let sample_constant = default_sample_constant(solver.k, solver.epsilon);
        Ok(Self { loss, solver, sample_constant, refine: true })
    }

    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        self.solver.validate()?;
        if !(self.sample_constant > 0.0 && self.sample_constant.is_finite()) {
            return Err(invalid(format!("sample constant must be positive, got {}", self.sample_constant)));
        }
        Ok(())
    }
}

/// `8 k^3 / eps^2 * ln(k / eps)`.
pub fn default_sample_constant(k: usize, epsilon: f64) -> f64 {
    let k = k as f64;
    8.0 * k.powi(3) / (epsilon * epsilon) * (k / epsilon).ln()
}

/// Inclusion probabilities `min(1, C' M(r_i) / sum_j M(r_j))` with residuals
/// taken to `span(v0)`.
pub fn residual_sample_probabilities(x: &PointSet, v0: &Basis, loss: &LossFunction, c_prime: f64) -> Result<Vec<f64>> {
    loss.validate()?;
    if !(c_prime > 0.0) {
        return Err(invalid(format!("C' must be positive, got {c_prime}")));
    }
    let losses = WeightVector::from_residuals(&residual_norms(x, v0)?, |r| loss.value(r))?;
    probabilities_from_losses(&losses, c_prime)
}

fn probabilities_from_losses(losses: &WeightVector, c_prime: f64) -> Result<Vec<f64>> {
    if losses.is_degenerate() {
        return Err(Error::DegenerateWeights { total: losses.total() });
    }
    let total = losses.total();
    Ok(losses.weights().iter().map(|&m| (c_prime * m / total).min(1.0)).collect())
}

/// Extra fields reported by [`m_estimator_solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct MEstimatorSummary {
    pub loss: LossFunction,
    /// Trimmed `p`-cost of the extracted subspace (`p = solver.p`).
    pub p_cost_k: f64,
    pub p_cost_span: f64,
    /// Measured initialization factor: untrimmed M-cost of `V_0` over the
    /// untrimmed M-cost of the extracted subspace. `None` when the latter
    /// is zero.
    pub init_factor: Option<f64>,
    /// Number of indices kept by the residual-sampling pass.
    pub residual_sample_size: usize,
}

/// Round index reserved for the residual-sampling pass.
const RESIDUAL_PASS_ROUND: u64 = u64::MAX - 1;

/// Coarse `V_0` from squared residual sampling, one independent
/// residual-sampling pass, optional adaptive refinement with `M(r)` weights,
/// then extraction and trimmed M-costs.
pub fn m_estimator_solve(x: &PointSet, cfg: &MEstimatorConfig) -> Result<SolveReport> {
    cfg.validate()?;
    let started = Instant::now();
    let sc = &cfg.solver;
    if sc.k > x.d() {
        return Err(invalid(format!("k = {} exceeds the dimension {}", sc.k, x.d())));
    }
    let loss = cfg.loss;
    let tol = span_tolerance(x);

    let mut trace = adaptive_init(x, sc.k, 2.0, sc.seed.derive(0, 0))?;
    let v0 = Basis::empty(x.d()).extend(x.points(trace.all()), tol)?;
    let v0_residuals = residual_norms(x, &v0)?;
    let losses = WeightVector::from_residuals(&v0_residuals, |r| loss.value(r))?;

    let mut basis = v0.clone();
    let mut sampled = Vec::new();
    if !losses.is_degenerate() {
        let probs = probabilities_from_losses(&losses, cfg.sample_constant)?;
        let mut rng = sc.seed.derive(RESIDUAL_PASS_ROUND, 0).rng();
        sampled = probs
            .iter()
            .enumerate()
            .filter_map(|(i, &p)| (rng.random::<f64>() < p).then_some(i))
            .collect();
        if !sampled.is_empty() {
            let added = trace.push_round(sampled.clone(), losses.clone());
            basis = basis.extend(x.points(&added), tol)?;
        }
    }

    let rounds = if cfg.refine { sc.rounds } else { 0 };
    let growth = solver::grow_coreset(x, sc, rounds, &|r| loss.value(r), trace, basis, &mut |_, _| {})?;
    let Growth { trace, basis: span, masses, exact_fit } = growth;

    let subspace = solver::extract_with_loss(x, &span, sc, &loss)?;
    let span_res = residual_norms(x, &span)?;
    let k_res = residual_norms(x, &subspace)?;
    let h = solver::inlier_count(x.n(), sc.alpha)?;
    let p_loss = LossFunction::PthPower(sc.p);

    let untrimmed_v0: f64 = v0_residuals.iter().map(|&r| loss.value(r)).sum();
    let untrimmed_out: f64 = k_res.iter().map(|&r| loss.value(r)).sum();
    let init_factor = (untrimmed_out > 0.0).then(|| untrimmed_v0 / untrimmed_out);

    let summary = MEstimatorSummary {
        loss,
        p_cost_k: solver::trimmed_loss_from_residuals(&k_res, h, &p_loss),
        p_cost_span: solver::trimmed_loss_from_residuals(&span_res, h, &p_loss),
        init_factor,
        residual_sample_size: sampled.len(),
    };
    Ok(SolveReport {
        span_dim: span.dim(),
        trimmed_cost_k: solver::trimmed_loss_from_residuals(&k_res, h, &loss),
        trimmed_cost_span: solver::trimmed_loss_from_residuals(&span_res, h, &loss),
        inlier_indices: solver::nearest_from_residuals(&k_res, h),
        per_round_residual_mass: masses,
        exact_fit,
        trace,
        span,
        subspace,
        mestimator: Some(summary),
        affine: None,
        wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::Seed;
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn huber_examples() {
        let h = LossFunction::Huber(1.0);
        assert_eq!(h.eval(0.0).unwrap(), 0.0);
        assert_eq!(h.eval(2.0).unwrap(), 1.5);
        let t = 1.7;
        let h = LossFunction::Huber(t);
        assert_eq!(h.value(t), t * t / 2.0);
        assert!(h.eval(-1.0).is_err());
    }

    #[test]
    fn huber_slope_is_continuous() {
        let t = 2.0;
        let h = LossFunction::Huber(t);
        let step = 1e-7 * t;
        let below = (h.value(t) - h.value(t - step)) / step;
        let above = (h.value(t + step) - h.value(t)) / step;
        assert!((below - above).abs() < 1e-6 * t);
    }

    #[test]
    fn losses_are_monotone_and_vanish_at_zero() {
        for loss in [LossFunction::PthPower(1.5), LossFunction::Huber(0.5), LossFunction::TukeyBisquare(0.5)] {
            assert_eq!(loss.value(0.0), 0.0);
            let grid: Vec<f64> = (0..1000).map(|i| loss.value(i as f64 * 2.0 / 999.0)).collect();
            assert!(grid.windows(2).all(|w| w[1] >= w[0]), "{loss}");
        }
        let tukey = LossFunction::TukeyBisquare(2.0);
        assert_eq!(tukey.value(2.0), 64.0 / 6.0);
        assert_eq!(tukey.value(5.0), 64.0 / 6.0);
    }

    #[test]
    fn parse_and_display_round_trip() {
        for s in ["lp:2", "huber:1.5", "tukey:0.25"] {
            assert_eq!(s.parse::<LossFunction>().unwrap().to_string(), s);
        }
        for bad in ["lp", "lp:0.5", "huber:-1", "cauchy:1", "tukey:x"] {
            assert!(bad.parse::<LossFunction>().is_err(), "{bad}");
        }
    }

    fn pts(rows: &[[f64; 2]]) -> PointSet {
        PointSet::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn probability_examples() {
        let e1 = Basis::from_orthonormal_columns(DMatrix::from_column_slice(2, 1, &[1.0, 0.0]), 1e-12).unwrap();
        let x = pts(&[[1.0, 0.0], [2.0, 3.0], [0.0, 0.0]]);
        assert_eq!(residual_sample_probabilities(&x, &e1, &LossFunction::PthPower(2.0), 1.0).unwrap(), vec![0.0, 1.0, 0.0]);
        let x = pts(&[[1.0, 1.0], [2.0, 1.0], [0.0, 1.0]]);
        assert_eq!(residual_sample_probabilities(&x, &e1, &LossFunction::Huber(1.0), 3.0).unwrap(), vec![1.0; 3]);
        let x = pts(&[[0.0, 1.0], [0.0, 2.0]]);
        let p = residual_sample_probabilities(&x, &e1, &LossFunction::Huber(10.0), 1.0).unwrap();
        assert!((p[0] - 0.2).abs() < 1e-15 && (p[1] - 0.8).abs() < 1e-15);
        let x = pts(&[[1.0, 0.0], [2.0, 0.0]]);
        assert!(matches!(
            residual_sample_probabilities(&x, &e1, &LossFunction::Huber(1.0), 1.0),
            Err(Error::DegenerateWeights { .. })
        ));
    }

    #[test]
    fn points_in_a_k_span_cost_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = DMatrix::from_fn(25, 2, |_, _| rng.random::<f64>() - 0.5);
        let b = DMatrix::from_fn(2, 6, |_, _| rng.random::<f64>() - 0.5);
        let x = PointSet::from_matrix(c * b).unwrap();
        let sc = SolverConfig::new(2, 2.0, 0.2, 0.3, 0.5).unwrap().with_seed(Seed(3));
        let cfg = MEstimatorConfig::new(LossFunction::Huber(0.1), sc).unwrap();
        let r = m_estimator_solve(&x, &cfg).unwrap();
        assert!(r.trimmed_cost_k < 1e-20);
        assert!(r.exact_fit);
    }

    #[test]
    fn reports_both_costs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = PointSet::from_matrix(DMatrix::from_fn(40, 5, |_, _| rng.random::<f64>() - 0.5)).unwrap();
        let mut sc = SolverConfig::new(2, 2.0, 0.2, 0.5, 0.5).unwrap().with_seed(Seed(4));
        sc.batch_size = 2;
        let mut cfg = MEstimatorConfig::new(LossFunction::TukeyBisquare(0.3), sc).unwrap();
        cfg.sample_constant = 3.0;
        let r = m_estimator_solve(&x, &cfg).unwrap();
        let summary = r.mestimator.as_ref().unwrap();
        assert!(r.trimmed_cost_span <= r.trimmed_cost_k + 1e-12);
        assert!(summary.p_cost_span <= summary.p_cost_k + 1e-12);
        assert!(summary.init_factor.unwrap() > 0.0);
        assert_eq!(r.inlier_indices.len(), 32);
    }
}
