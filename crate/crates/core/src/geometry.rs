//! Dense linear-algebra kernels: point sets, orthonormal bases, residuals to
//! spans, top-k subspaces and principal angles.
//!
//! Points are stored row-wise in an `n x d` matrix; a [`Basis`] stores its
//! orthonormal vectors as the columns of a `d x m` matrix (`m = 0` is the
//! trivial subspace `{0}`).

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};

/// Default orthonormality tolerance for [`Basis`] checks.
pub const ORTH_TOL: f64 = 1e-10;

/// Relative singular-value cutoff below which a direction counts as rank
/// deficient in [`top_k_subspace`].
const RANK_TOL: f64 = 1e-10;

/// An immutable collection of `n` points in `R^d`; row `i` is point `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    data: DMatrix<f64>,
}

impl PointSet {
    /// Builds a point set from explicit rows. All rows must share one
    /// dimension `d >= 1` and hold finite values.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows.first().ok_or_else(|| invalid("point set must be non-empty"))?;
        let d = first.len();
        if d == 0 {
            return Err(invalid("points must have dimension >= 1"));
        }
        for row in rows {
            if row.len() != d {
                return Err(Error::DimensionMismatch { expected: d, found: row.len() });
            }
        }
        let data = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
        Self::from_matrix(data)
    }

    /// Wraps an `n x d` matrix. Requires `n >= 1` and finite entries.
    ///
    /// `d = 0` is accepted so that projections onto the trivial subspace
    /// can be represented; user-facing constructors reject it.
    pub fn from_matrix(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() == 0 {
            return Err(invalid("point set must be non-empty"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("point coordinates".into()));
        }
        Ok(Self { data })
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn d(&self) -> usize {
        self.data.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    /// Copy of point `i` as a column vector.
    pub fn point(&self, i: usize) -> DVector<f64> {
        self.data.row(i).transpose()
    }

    pub fn points<'a>(&'a self, indices: &'a [usize]) -> impl Iterator<Item = DVector<f64>> + 'a {
        indices.iter().map(move |&i| self.point(i))
    }

    /// Rows of the given indices, in the given order (duplicates allowed).
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(invalid("cannot select an empty subset"));
        }
        Ok(Self { data: self.data.select_rows(indices) })
    }

    pub fn norms(&self) -> Vec<f64> {
        self.data.row_iter().map(|r| r.norm()).collect()
    }

    pub fn max_norm(&self) -> f64 {
        self.norms().into_iter().fold(0.0, f64::max)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { data: &self.data * c }
    }

    /// Every point shifted by `+shift`.
    pub fn translated(&self, shift: &DVector<f64>) -> Result<Self> {
        check_dim(self.d(), shift.len())?;
        let mut data = self.data.clone();
        for mut row in data.row_iter_mut() {
            row += shift.transpose();
        }
        Ok(Self { data })
    }

    /// Mean of the given indices (all points when `None`).
    pub fn mean(&self, indices: Option<&[usize]>) -> DVector<f64> {
        let mut acc = DVector::zeros(self.d());
        match indices {
            Some(idx) => {
                for &i in idx {
                    acc += self.data.row(i).transpose();
                }
                acc / idx.len().max(1) as f64
            }
            None => {
                for row in self.data.row_iter() {
                    acc += row.transpose();
                }
                acc / self.n() as f64
            }
        }
    }
}

/// Orthonormal basis of a linear subspace of `R^d`, stored as the columns of
/// a `d x m` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    vectors: DMatrix<f64>,
}

impl Basis {
    /// The trivial subspace `{0}` of `R^d`.
    pub fn empty(d: usize) -> Self {
        Self { vectors: DMatrix::zeros(d, 0) }
    }

    /// The standard axes of `R^d`.
    pub fn identity(d: usize) -> Self {
        Self { vectors: DMatrix::identity(d, d) }
    }

    /// Accepts columns that are already orthonormal within `tol`.
    pub fn from_orthonormal_columns(vectors: DMatrix<f64>, tol: f64) -> Result<Self> {
        let basis = Self { vectors };
        if !basis.is_orthonormal(tol) {
            return Err(invalid("columns are not orthonormal"));
        }
        Ok(basis)
    }

    pub fn ambient_dim(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    /// The `d x m` matrix whose columns are the basis vectors.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn vector(&self, j: usize) -> DVector<f64> {
        self.vectors.column(j).into_owned()
    }

    pub fn is_orthonormal(&self, tol: f64) -> bool {
        let gram = self.vectors.transpose() * &self.vectors;
        let m = self.dim();
        (0..m).all(|i| {
            (0..m).all(|j| {
                let target = if i == j { 1.0 } else { 0.0 };
                (gram[(i, j)] - target).abs() <= tol
            })
        })
    }

    /// Coordinates `B^T x` of `x` in this basis.
    pub fn coordinates(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.ambient_dim(), x.len())?;
        Ok(self.vectors.tr_mul(x))
    }

    /// The component of `x` orthogonal to the span, `x - B B^T x`.
    pub fn residual(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let coords = self.coordinates(x)?;
        Ok(x - &self.vectors * coords)
    }

    /// Returns a basis for `span(self) + span(extra)`, appending only the
    /// directions whose residual exceeds `tol`.
    pub fn extend<I>(&self, extra: I, tol: f64) -> Result<Self>
    where
        I: IntoIterator<Item = DVector<f64>>,
    {
        let d = self.ambient_dim();
        let mut cols: Vec<DVector<f64>> = self.vectors.column_iter().map(|c| c.into_owned()).collect();
        for v in extra {
            check_dim(d, v.len())?;
            if let Some(q) = gram_schmidt_step(&cols, v, tol) {
                cols.push(q);
            }
        }
        Ok(Self { vectors: columns_to_matrix(d, &cols) })
    }

    /// Embeds a basis given in this basis' coordinates back into `R^d`.
    pub fn embed(&self, inner: &Basis) -> Result<Basis> {
        check_dim(self.dim(), inner.ambient_dim())?;
        Ok(Self { vectors: &self.vectors * &inner.vectors })
    }
}

/// An affine subspace `origin + span(basis)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinePlacement {
    pub origin: DVector<f64>,
    pub basis: Basis,
}

impl AffinePlacement {
    pub fn new(origin: DVector<f64>, basis: Basis) -> Result<Self> {
        check_dim(basis.ambient_dim(), origin.len())?;
        if origin.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("affine origin".into()));
        }
        Ok(Self { origin, basis })
    }

    /// Distance from every point to the affine subspace.
    pub fn residual_norms(&self, x: &PointSet) -> Result<Vec<f64>> {
        let shifted = x.translated(&(-&self.origin))?;
        residual_norms(&shifted, &self.basis)
    }
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

fn columns_to_matrix(d: usize, cols: &[DVector<f64>]) -> DMatrix<f64> {
    if cols.is_empty() {
        return DMatrix::zeros(d, 0);
    }
    DMatrix::from_columns(cols)
}

/// Modified Gram-Schmidt with one re-orthogonalization pass. Returns the
/// normalized new direction, or `None` when the residual is at most `tol`.
fn gram_schmidt_step(basis: &[DVector<f64>], mut v: DVector<f64>, tol: f64) -> Option<DVector<f64>> {
    for _ in 0..2 {
        for q in basis {
            let c = q.dot(&v);
            v.axpy(-c, q, 1.0);
        }
    }
    let norm = v.norm();
    (norm > tol).then(|| v / norm)
}

/// Default drop threshold: `1e-10` times the largest input norm.
pub fn default_tolerance(vectors: &[DVector<f64>]) -> f64 {
    let max = vectors.iter().map(|v| v.norm()).fold(0.0, f64::max);
    ORTH_TOL * max
}

/// Drop threshold for spans of sampled points: `1e-10` times the largest
/// point norm (never zero).
pub fn span_tolerance(x: &PointSet) -> f64 {
    (ORTH_TOL * x.max_norm()).max(f64::MIN_POSITIVE)
}

/// Orthonormal basis of `span(vectors)` in `R^d`. Vectors whose residual
/// after projection is at most `tol` are dropped, so rank-deficient input
/// yields a lower-dimensional basis. Empty input gives the trivial subspace.
pub fn orthonormalize(d: usize, vectors: &[DVector<f64>], tol: f64) -> Result<Basis> {
    if !(tol > 0.0) {
        return Err(invalid(format!("orthonormalization tolerance must be positive, got {tol}")));
    }
    Basis::empty(d).extend(vectors.iter().cloned(), tol)
}

/// `||x - B B^T x||`; the trivial subspace returns `||x||`.
pub fn residual_norm(x: &DVector<f64>, b: &Basis) -> Result<f64> {
    Ok(b.residual(x)?.norm())
}

/// Residual norm of every point to `span(b)`.
pub fn residual_norms(x: &PointSet, b: &Basis) -> Result<Vec<f64>> {
    check_dim(b.ambient_dim(), x.d())?;
    if b.dim() == 0 {
        return Ok(x.norms());
    }
    let coords = x.matrix() * b.matrix();
    let resid = x.matrix() - coords * b.matrix().transpose();
    Ok(resid.row_iter().map(|r| r.norm()).collect())
}

/// Coordinates `B^T x_i` of every point, as an `n x m` point set.
pub fn project_onto(x: &PointSet, b: &Basis) -> Result<PointSet> {
    check_dim(b.ambient_dim(), x.d())?;
    PointSet::from_matrix(x.matrix() * b.matrix())
}

/// Best `k`-dimensional subspace for the (optionally weighted) squared
/// error `sum_i w_i d(x_i, V)^2`, from the top right singular vectors of
/// `diag(sqrt(w)) X`. Returns fewer than `k` vectors when the weighted data
/// has lower rank.
pub fn top_k_subspace(x: &PointSet, weights: Option<&[f64]>, k: usize) -> Result<Basis> {
    let d = x.d();
    if k < 1 || k > d {
        return Err(invalid(format!("k must lie in [1, {d}], got {k}")));
    }
    let mut a = x.matrix().clone();
    if let Some(w) = weights {
        check_dim(x.n(), w.len())?;
        for (i, &wi) in w.iter().enumerate() {
            if !(wi >= 0.0) || !wi.is_finite() {
                return Err(invalid(format!("weight {i} is {wi}")));
            }
            a.row_mut(i).scale_mut(wi.sqrt());
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let sigma = &svd.singular_values;
    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]).then(i.cmp(&j)));
    let top = order.first().map(|&i| sigma[i]).unwrap_or(0.0);
    if top <= 0.0 {
        return Ok(Basis::empty(d));
    }
    let cols: Vec<DVector<f64>> = order
        .into_iter()
        .take(k)
        .filter(|&i| sigma[i] > RANK_TOL * top)
        .map(|i| v_t.row(i).transpose())
        .collect();
    Ok(Basis { vectors: columns_to_matrix(d, &cols) })
}

/// `|sin theta|` between the line `l` and the subspace `v`.
pub fn sin_angle(l: &Basis, v: &Basis) -> Result<f64> {
    if l.dim() != 1 {
        return Err(invalid(format!("sin_angle needs a line, got dimension {}", l.dim())));
    }
    let u = l.vector(0);
    Ok(residual_norm(&u, v)?.clamp(0.0, 1.0))
}

/// Unit vectors `u` in `span(a)` and `v` in `span(b)` at the smallest
/// principal angle, with the cosine of that angle. `None` when either
/// subspace is trivial.
pub fn closest_directions(a: &Basis, b: &Basis) -> Result<Option<(DVector<f64>, DVector<f64>, f64)>> {
    check_dim(a.ambient_dim(), b.ambient_dim())?;
    if a.dim() == 0 || b.dim() == 0 {
        return Ok(None);
    }
    let cross = b.matrix().tr_mul(a.matrix());
    let svd = cross.svd(true, true);
    let (u_b, v_a) = (svd.u.expect("left vectors"), svd.v_t.expect("right vectors"));
    let sigma = &svd.singular_values;
    let top = (0..sigma.len()).fold(0, |best, i| if sigma[i] > sigma[best] { i } else { best });
    let u = (a.matrix() * v_a.row(top).transpose()).normalize();
    let v = (b.matrix() * u_b.column(top)).normalize();
    Ok(Some((u, v, sigma[top].min(1.0))))
}

/// Sine of the smallest principal angle between `span(a)` and `span(b)`,
/// i.e. the angle of the line in `span(a)` closest to `span(b)`.
/// Returns 1 when either subspace is trivial.
pub fn min_sin_angle(a: &Basis, b: &Basis) -> Result<f64> {
    match closest_directions(a, b)? {
        None => Ok(1.0),
        Some((u, _, _)) => Ok(residual_norm(&u, b)?.clamp(0.0, 1.0)),
    }
}
