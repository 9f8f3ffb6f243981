//! Exact optima at small scale, used as ground truth.
//!
//! For `p = 2` the best subspace for a fixed inlier set is its top-k
//! subspace, so enumerating inlier sets gives the exact trimmed optimum.
//! [`exact_optimum_p2_branch_bound`] reaches the same optimum on instances
//! too large to enumerate by pruning subsets with an eigengap bound.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::geometry::{residual_norms, top_k_subspace, Basis, PointSet};
use crate::sampling::{pth_power, Seed};
use crate::solver::{extract_k_subspace, inlier_count, SolverConfig};

/// Largest number of inlier subsets the enumerating oracles accept.
pub const SUBSET_BUDGET: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub best_cost: f64,
    /// Ascending.
    pub best_inliers: Vec<usize>,
    pub best_subspace: Basis,
    pub subsets_evaluated: u64,
    /// `false` when the per-subset fit is only an upper bound (`p != 2`).
    pub exact: bool,
}

/// `C(n, h)` as a float.
pub fn binomial(n: usize, h: usize) -> f64 {
    let h = h.min(n - h.min(n));
    (0..h).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn check_inputs(x: &PointSet, k: usize, alpha: f64) -> Result<usize> {
    if k < 1 || k > x.d() {
        return Err(invalid(format!("k must lie in [1, {}], got {k}", x.d())));
    }
    inlier_count(x.n(), alpha)
}

fn check_budget(n: usize, h: usize) -> Result<()> {
    let required = binomial(n, h);
    if required > SUBSET_BUDGET {
        return Err(Error::BudgetExceeded { required, budget: SUBSET_BUDGET });
    }
    Ok(())
}

fn sum_pth(x: &PointSet, b: &Basis, p: f64) -> Result<f64> {
    Ok(residual_norms(x, b)?.into_iter().map(|r| pth_power(r, p)).sum())
}

/// Enumerates every inlier subset of size `h`; `fit` returns the subset's
/// subspace and cost. Ties go to the lexicographically first subset.
fn enumerate(x: &PointSet, h: usize, fit: impl Fn(&PointSet) -> Result<(Basis, f64)> + Sync) -> Result<OracleResult> {
    let combos: Vec<Vec<usize>> = (0..x.n()).combinations(h).collect();
    let evaluated = combos.len() as u64;
    let best = combos
        .into_par_iter()
        .enumerate()
        .map(|(idx, subset)| {
            let (basis, cost) = fit(&x.select(&subset)?)?;
            Ok((cost, idx, subset, basis))
        })
        .try_reduce_with(|a, b| Ok(if (b.0, b.1) < (a.0, a.1) { b } else { a }))
        .expect("at least one subset")?;
    let (cost, _, subset, basis) = best;
    Ok(OracleResult { best_cost: cost, best_inliers: subset, best_subspace: basis, subsets_evaluated: evaluated, exact: true })
}

/// Exact trimmed `p = 2` optimum by enumerating inlier subsets. Refuses
/// when `C(n, floor((1 - alpha) n))` exceeds [`SUBSET_BUDGET`].
pub fn exact_optimum_p2(x: &PointSet, k: usize, alpha: f64) -> Result<OracleResult> {
    let h = check_inputs(x, k, alpha)?;
    check_budget(x.n(), h)?;
    enumerate(x, h, |sub| {
        let b = top_k_subspace(sub, None, k)?;
        let cost = sum_pth(sub, &b, 2.0)?;
        Ok((b, cost))
    })
}

/// Enumerating oracle for general `p`: each subset's subspace comes from 20
/// reweighted top-k iterations, so the result is an upper bound.
pub fn exact_optimum_p_general(x: &PointSet, k: usize, alpha: f64, p: f64) -> Result<OracleResult> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(invalid(format!("p must be a finite value >= 1, got {p}")));
    }
    let h = check_inputs(x, k, alpha)?;
    check_budget(x.n(), h)?;
    let mut result = enumerate(x, h, |sub| {
        let mut b = top_k_subspace(sub, None, k)?;
        let mut best = (b.clone(), sum_pth(sub, &b, p)?);
        if p != 2.0 {
            for _ in 0..20 {
                let weights: Vec<f64> = residual_norms(sub, &b)?.into_iter().map(|r| r.max(1e-12).powf(p - 2.0)).collect();
                b = top_k_subspace(sub, Some(&weights), k)?;
                let cost = sum_pth(sub, &b, p)?;
                if cost < best.1 {
                    best = (b.clone(), cost);
                }
            }
        }
        Ok(best)
    })?;
    result.exact = p == 2.0;
    Ok(result)
}

/// Inlier share of the reference subspace's error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeltaEstimate {
    Value(f64),
    /// The reference subspace fits its inliers exactly (or everything).
    ExactFit,
}

impl DeltaEstimate {
    pub fn value(self) -> Option<f64> {
        match self {
            DeltaEstimate::Value(v) => Some(v),
            DeltaEstimate::ExactFit => None,
        }
    }
}

/// `sum_{I} d(x, V*)^p / sum_i d(x, V*)^p`, with `(V*, I)` from `truth`
/// when given and from the enumerating oracle otherwise.
pub fn delta_of_instance(x: &PointSet, k: usize, alpha: f64, p: f64, truth: Option<(&Basis, &[usize])>) -> Result<DeltaEstimate> {
    let computed;
    let (basis, inliers) = match truth {
        Some(t) => t,
        None => {
            computed = if p == 2.0 { exact_optimum_p2(x, k, alpha)? } else { exact_optimum_p_general(x, k, alpha, p)? };
            (&computed.best_subspace, computed.best_inliers.as_slice())
        }
    };
    let powers: Vec<f64> = residual_norms(x, basis)?.into_iter().map(|r| pth_power(r, p)).collect();
    let total: f64 = powers.iter().sum();
    let inlier: f64 = inliers.iter().map(|&i| powers[i]).sum();
    if total <= 0.0 || inlier <= 1e-12 * total {
        return Ok(DeltaEstimate::ExactFit);
    }
    Ok(DeltaEstimate::Value(inlier / total))
}

/// Exact trimmed `p = 2` optimum by depth-first branch and bound over
/// include/exclude decisions. Fails with `BudgetExceeded` after
/// `node_budget` nodes.
///
/// At a node with forced set `F` and eigengap `g = lambda_k - lambda_{k+1}`
/// of its Gram matrix, any subspace `V` whose largest principal angle to the
/// best subspace `V_F` of `F` has sine `s` satisfies
/// `cost_F(V) >= cost_F(V_F) + g s^2` and `d(x, V) >= d(x, V_F) - s ||x||`.
/// Minimizing over `s` gives a lower bound on every completion.
pub fn exact_optimum_p2_branch_bound(x: &PointSet, k: usize, alpha: f64, node_budget: u64) -> Result<OracleResult> {
    let h = check_inputs(x, k, alpha)?;
    let n = x.n();
    let d = x.d();

    // Incumbent: the h points nearest a trimmed alternating-minimization fit.
    let mut cfg = SolverConfig::new(k, 2.0, alpha, 0.5, 1.0 - alpha)?.with_seed(Seed(0));
    cfg.extraction_restarts = 32;
    cfg.extraction_iters = 100;
    let start = extract_k_subspace(x, &Basis::identity(d), &cfg)?;
    let start_res = residual_norms(x, &start)?;

    // Incumbent inliers by decreasing norm (they pin the subspace down
    // fastest), then the rest by residual.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| start_res[i].total_cmp(&start_res[j]).then(i.cmp(&j)));
    let norms = x.norms();
    order[..h].sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));
    let rows: Vec<DVector<f64>> = order.iter().map(|&i| x.point(i)).collect();

    let mut search = Search {
        rows: &rows,
        k,
        h,
        best_cost: f64::INFINITY,
        best_set: Vec::new(),
        nodes: 0,
        budget: node_budget,
        scratch: Vec::with_capacity(n),
    };
    let inc_pos: Vec<usize> = (0..h).collect();
    search.best_cost = subset_cost(&rows, &inc_pos, k);
    search.best_set = inc_pos;

    let mut chosen = Vec::with_capacity(h);
    search.descend(0, &SpectralFit::new(DMatrix::zeros(d, d), k), &mut chosen)?;

    let mut best_inliers: Vec<usize> = search.best_set.iter().map(|&pos| order[pos]).collect();
    best_inliers.sort_unstable();
    let sub = x.select(&best_inliers)?;
    let best_subspace = top_k_subspace(&sub, None, k)?;
    Ok(OracleResult {
        best_cost: sum_pth(&sub, &best_subspace, 2.0)?,
        best_inliers,
        best_subspace,
        subsets_evaluated: search.nodes,
        exact: true,
    })
}

fn subset_cost(rows: &[DVector<f64>], picks: &[usize], k: usize) -> f64 {
    let d = rows[0].len();
    let mut g = DMatrix::zeros(d, d);
    for &i in picks {
        g.ger(1.0, &rows[i], &rows[i], 1.0);
    }
    SpectralFit::new(g, k).cost
}

/// Gram matrix of a forced set with its best-fit cost, eigengap and
/// top-k eigenvectors.
struct SpectralFit {
    gram: DMatrix<f64>,
    cost: f64,
    gap: f64,
    top: DMatrix<f64>,
}

impl SpectralFit {
    fn new(gram: DMatrix<f64>, k: usize) -> Self {
        let eig = SymmetricEigen::new(gram.clone());
        let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let lambda = |j: usize| idx.get(j).map_or(0.0, |&i| eig.eigenvalues[i].max(0.0));
        let cost = (k..idx.len()).map(lambda).sum();
        let gap = (lambda(k - 1) - lambda(k)).max(0.0);
        let top = DMatrix::from_columns(&idx[..k].iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect::<Vec<_>>());
        Self { gram, cost, gap, top }
    }
}

struct Search<'a> {
    rows: &'a [DVector<f64>],
    k: usize,
    h: usize,
    best_cost: f64,
    best_set: Vec<usize>,
    nodes: u64,
    budget: u64,
    scratch: Vec<f64>,
}

impl Search<'_> {
    /// `fit` describes the forced set `chosen`; the exclude branch shares it.
    fn descend(&mut self, pos: usize, fit: &SpectralFit, chosen: &mut Vec<usize>) -> Result<()> {
        self.nodes += 1;
        if self.nodes > self.budget {
            return Err(Error::BudgetExceeded { required: self.nodes as f64, budget: self.budget as f64 });
        }
        let n = self.rows.len();
        let needed = self.h - chosen.len();
        if needed == 0 {
            if fit.cost < self.best_cost {
                self.best_cost = fit.cost;
                self.best_set = chosen.clone();
            }
            return Ok(());
        }
        if n - pos < needed {
            return Ok(());
        }
        if !chosen.is_empty() && self.prunable(pos, fit, needed) {
            return Ok(());
        }
        let row = &self.rows[pos];
        let mut gram = fit.gram.clone();
        gram.ger(1.0, row, row, 1.0);
        chosen.push(pos);
        self.descend(pos + 1, &SpectralFit::new(gram, self.k), chosen)?;
        chosen.pop();
        if n - pos > needed {
            self.descend(pos + 1, fit, chosen)?;
        }
        Ok(())
    }

    /// Lower bound over `s` in `[0, 1]`, evaluated on intervals that are
    /// split while the bound stays below the incumbent. A point `s` whose
    /// own bound is below the incumbent ends the search early.
    fn prunable(&mut self, pos: usize, fit: &SpectralFit, needed: usize) -> bool {
        let (base, gap, top) = (fit.cost, fit.gap, &fit.top);
        let threshold = self.best_cost * (1.0 - 1e-12);
        if base >= threshold {
            return true;
        }
        // Distance to V_F and length of the projection onto V_F.
        let split: Vec<(f64, f64)> = self.rows[pos..]
            .iter()
            .map(|r| {
                let inside: f64 = top.column_iter().map(|c| c.dot(r).powi(2)).sum();
                ((r.norm_squared() - inside).max(0.0).sqrt(), inside.sqrt())
            })
            .collect();
        // d(x, V) >= sqrt(1 - s^2) d(x, V_F) - s ||P_F x||, decreasing in s.
        let bound_on = |lo: f64, hi: f64, scratch: &mut Vec<f64>| -> f64 {
            let c = (1.0 - hi * hi).max(0.0).sqrt();
            scratch.clear();
            scratch.extend(split.iter().map(|&(dj, pj)| {
                let v = (c * dj - hi * pj).max(0.0);
                v * v
            }));
            let sum: f64 = if needed < scratch.len() {
                scratch.select_nth_unstable_by(needed - 1, f64::total_cmp);
                scratch[..needed].iter().sum()
            } else {
                scratch.iter().sum()
            };
            base + gap * lo * lo + sum
        };
        let mut scratch = std::mem::take(&mut self.scratch);
        let mut pruned = bound_on(0.0, 0.0, &mut scratch) >= threshold;
        let mut stack: Vec<(f64, f64)> = (0..4).rev().map(|i| (i as f64 / 4.0, (i + 1) as f64 / 4.0)).collect();
        let mut evaluations = 0;
        while pruned {
            let Some((lo, hi)) = stack.pop() else { break };
            evaluations += 1;
            if bound_on(lo, hi, &mut scratch) >= threshold {
                continue;
            }
            if hi - lo < 1.0 / 4096.0 || evaluations > 128 || bound_on(hi, hi, &mut scratch) < threshold {
                pruned = false;
                break;
            }
            let mid = 0.5 * (lo + hi);
            stack.push((mid, hi));
            stack.push((lo, mid));
        }
        self.scratch = scratch;
        pruned
    }
}
