//! Pairwise distance matrices: construction from raw data, validation and CSV I/O.
//!
//! A [`DistanceMatrix`] is the only thing the clustering model ever sees of the
//! data. Every constructor here returns a symmetric, nonnegative, zero-diagonal
//! matrix, and every entry is computed independently of the others so results do
//! not depend on how the row loop is parallelized.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when checking unit-norm rows for the arccos distance.
const UNIT_NORM_TOL: f64 = 1e-8;

/// Raw observations: one row per observation, one column per feature.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() < 2 {
            return Err(Error::Validation(format!(
                "data matrix needs at least 2 rows, got {}",
                values.nrows()
            )));
        }
        if values.ncols() < 1 {
            return Err(Error::Validation("data matrix has no columns".into()));
        }
        if let Some((i, j)) = first_non_finite(&values) {
            return Err(Error::Validation(format!(
                "non-finite data entry at ({i},{j})"
            )));
        }
        Ok(Self { values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::Dimension("rows of unequal length".into()));
        }
        Self::new(DMatrix::from_fn(n, p, |i, j| rows[i][j]))
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.values.row(i).iter().copied().collect()
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.values
    }

    pub fn load_csv(path: impl AsRef<Path>, has_header: bool) -> Result<Self> {
        let path = path.as_ref();
        let values = read_csv_matrix(path, has_header)?;
        Self::new(values).map_err(|e| Error::parse(path, e.to_string()))
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_csv_matrix(path.as_ref(), &self.values)
    }

    /// Project onto the leading `dims` principal components (covariance eigendecomposition).
    pub fn pca(&self, dims: usize) -> Result<DataMatrix> {
        if dims == 0 || dims > self.p() {
            return Err(Error::Parameter(format!(
                "PCA dimension must be in 1..={}, got {dims}",
                self.p()
            )));
        }
        let n = self.n();
        let means = self.values.row_mean();
        let mut centered = self.values.clone();
        for mut row in centered.row_iter_mut() {
            row -= &means;
        }
        let cov = centered.transpose() * &centered / (n as f64 - 1.0);
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let mut basis = DMatrix::zeros(self.p(), dims);
        for (c, &idx) in order.iter().take(dims).enumerate() {
            let mut v = eig.eigenvectors.column(idx).into_owned();
            // fix the sign so the largest-magnitude loading is positive
            let (imax, _) = v
                .iter()
                .enumerate()
                .fold((0, 0.0_f64), |acc, (i, x)| if x.abs() > acc.1 { (i, x.abs()) } else { acc });
            if v[imax] < 0.0 {
                v.neg_mut();
            }
            basis.set_column(c, &v);
        }
        DataMatrix::new(centered * basis)
    }

    /// Add isotropic Gaussian noise with standard deviation `scale`.
    pub fn jitter<R: Rng + ?Sized>(&self, scale: f64, rng: &mut R) -> Result<DataMatrix> {
        if !(scale >= 0.0 && scale.is_finite()) {
            return Err(Error::Parameter(format!("jitter scale must be >= 0, got {scale}")));
        }
        let mut values = self.values.clone();
        for x in values.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *x += scale * z;
        }
        DataMatrix::new(values)
    }
}

/// Symmetric, nonnegative, zero-diagonal matrix of pairwise distances.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    values: DMatrix<f64>,
}

impl DistanceMatrix {
    /// Validate and wrap a square matrix.
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        validate_distances(&values)?;
        Ok(Self { values })
    }

    /// Wrap without validation. The caller is responsible for the invariants.
    pub fn new_unchecked(values: DMatrix<f64>) -> Self {
        Self { values }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension("distance matrix must be square".into()));
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Element-wise log with the diagonal masked to zero.
    pub fn log_masked(&self) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { self.values[(i, j)].ln() })
    }

    /// Off-diagonal entries with i < j.
    pub fn upper_entries(&self) -> Vec<f64> {
        let n = self.n();
        let mut out = Vec::with_capacity(n * (n - 1) / 2);
        for j in 1..n {
            for i in 0..j {
                out.push(self.values[(i, j)]);
            }
        }
        out
    }

    pub fn median_off_diagonal(&self) -> f64 {
        let mut v = self.upper_entries();
        if v.is_empty() {
            return 0.0;
        }
        v.sort_by(f64::total_cmp);
        let m = v.len();
        if m % 2 == 1 {
            v[m / 2]
        } else {
            0.5 * (v[m / 2 - 1] + v[m / 2])
        }
    }

    /// Submatrix restricted to `idx` (rows and columns), in the given order.
    pub fn select(&self, idx: &[usize]) -> DistanceMatrix {
        let m = idx.len();
        DistanceMatrix::new_unchecked(DMatrix::from_fn(m, m, |a, b| self.values[(idx[a], idx[b])]))
    }

    pub fn load_csv(path: impl AsRef<Path>, has_header: bool, validate: bool) -> Result<Self> {
        let path = path.as_ref();
        let values = read_csv_matrix(path, has_header)?;
        if values.nrows() != values.ncols() {
            return Err(Error::Dimension(format!(
                "{}: distance matrix must be square, got {}x{}",
                path.display(),
                values.nrows(),
                values.ncols()
            )));
        }
        if validate {
            validate_distances(&values)?;
        }
        Ok(Self { values })
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_csv_matrix(path.as_ref(), &self.values)
    }
}

fn first_non_finite(m: &DMatrix<f64>) -> Option<(usize, usize)> {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if !m[(i, j)].is_finite() {
                return Some((i, j));
            }
        }
    }
    None
}

fn validate_distances(m: &DMatrix<f64>) -> Result<()> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::Dimension(format!(
            "distance matrix must be square, got {}x{}",
            n,
            m.ncols()
        )));
    }
    if n < 2 {
        return Err(Error::Validation("distance matrix needs n >= 2".into()));
    }
    for i in 0..n {
        for j in 0..n {
            let x = m[(i, j)];
            if !x.is_finite() {
                return Err(Error::Validation(format!("non-finite distance at ({i},{j})")));
            }
            if x < 0.0 {
                return Err(Error::Validation(format!("negative distance at ({i},{j})")));
            }
        }
    }
    for i in 0..n {
        if m[(i, i)] != 0.0 {
            return Err(Error::Validation(format!("nonzero diagonal at ({i},{i})")));
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if m[(i, j)] != m[(j, i)] {
                return Err(Error::Validation(format!("asymmetric distance at ({i},{j})")));
            }
        }
    }
    Ok(())
}

fn read_csv_matrix(path: &Path, has_header: bool) -> Result<DMatrix<f64>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::parse(path, e.to_string()))?;
        let row = record
            .iter()
            .enumerate()
            .map(|(c, field)| {
                field.parse::<f64>().map_err(|_| {
                    Error::parse(path, format!("invalid number {field:?} at row {r}, column {c}"))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::parse(path, "empty file"));
    }
    let ncols = rows[0].len();
    if let Some(r) = rows.iter().position(|row| row.len() != ncols) {
        return Err(Error::Dimension(format!(
            "{}: row {r} has {} fields, expected {ncols}",
            path.display(),
            rows[r].len()
        )));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn write_csv_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for i in 0..m.nrows() {
        let line: Vec<String> = (0..m.ncols()).map(|j| format!("{}", m[(i, j)])).collect();
        writeln!(w, "{}", line.join(",")).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Fill a symmetric zero-diagonal matrix from an entry function evaluated once per
/// unordered pair. Rows are processed in parallel; each entry is independent.
fn pairwise<F>(n: usize, f: F) -> DMatrix<f64>
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| ((i + 1)..n).map(|j| f(i, j)).collect())
        .collect();
    let mut out = DMatrix::zeros(n, n);
    for (i, row) in upper.iter().enumerate() {
        for (off, &d) in row.iter().enumerate() {
            let j = i + 1 + off;
            out[(i, j)] = d;
            out[(j, i)] = d;
        }
    }
    out
}

/// Minkowski (`q`-norm) distances between rows.
pub fn compute_minkowski_distances(x: &DataMatrix, q: f64) -> Result<DistanceMatrix> {
    if !(q >= 1.0) || q.is_nan() {
        return Err(Error::Parameter(format!("Minkowski order q must be >= 1, got {q}")));
    }
    if let Some((i, j)) = first_non_finite(&x.values) {
        return Err(Error::Validation(format!("non-finite data entry at ({i},{j})")));
    }
    let v = &x.values;
    let p = x.p();
    let d = if q.is_infinite() {
        pairwise(x.n(), |i, j| {
            (0..p).map(|c| (v[(i, c)] - v[(j, c)]).abs()).fold(0.0, f64::max)
        })
    } else if q == 1.0 {
        pairwise(x.n(), |i, j| (0..p).map(|c| (v[(i, c)] - v[(j, c)]).abs()).sum())
    } else if q == 2.0 {
        pairwise(x.n(), |i, j| {
            (0..p)
                .map(|c| {
                    let t = v[(i, c)] - v[(j, c)];
                    t * t
                })
                .sum::<f64>()
                .sqrt()
        })
    } else {
        pairwise(x.n(), |i, j| {
            (0..p)
                .map(|c| (v[(i, c)] - v[(j, c)]).abs().powf(q))
                .sum::<f64>()
                .powf(1.0 / q)
        })
    };
    Ok(DistanceMatrix::new_unchecked(d))
}

/// Great-circle (absolute arccos) distances between unit-norm rows.
pub fn compute_arccos_distances(x: &DataMatrix) -> Result<DistanceMatrix> {
    let v = &x.values;
    for i in 0..x.n() {
        let norm = v.row(i).norm();
        if (norm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(Error::Validation(format!(
                "row {i} is not unit norm (norm = {norm})"
            )));
        }
    }
    let p = x.p();
    let d = pairwise(x.n(), |i, j| {
        let dot: f64 = (0..p).map(|c| v[(i, c)] * v[(j, c)]).sum();
        dot.clamp(-1.0, 1.0).acos().abs()
    });
    Ok(DistanceMatrix::new_unchecked(d))
}

/// Settings for the sparse self-expression solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SubspaceEmbeddingConfig {
    /// Weight of the absolute-value penalty.
    pub sparsity_weight: f64,
    pub max_iters: usize,
    /// Convergence threshold on the constraint residuals of the splitting.
    pub tol: f64,
}

impl Default for SubspaceEmbeddingConfig {
    fn default() -> Self {
        Self {
            sparsity_weight: 1.0,
            max_iters: 1000,
            tol: 1e-7,
        }
    }
}

impl SubspaceEmbeddingConfig {
    fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(Error::Parameter("max_iters must be >= 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Parameter("tol must be > 0".into()));
        }
        if !(self.sparsity_weight > 0.0) {
            return Err(Error::Parameter("sparsity_weight must be > 0".into()));
        }
        Ok(())
    }
}

/// Coefficient matrix expressing each observation as an affine combination of the others.
#[derive(Debug, Clone)]
pub struct SelfExpressionMatrix {
    pub values: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Penalized self-expression objective at the returned coefficients.
    pub objective: f64,
    pub warnings: Vec<String>,
}

/// Value of `sum_i ||y_i - sum_j w_ij y_j||^2 + lambda * sum |w_ij|`.
pub fn self_expression_objective(x: &DataMatrix, w: &DMatrix<f64>, sparsity_weight: f64) -> f64 {
    let resid = &x.values - w * &x.values;
    resid.norm_squared() + sparsity_weight * w.iter().map(|v| v.abs()).sum::<f64>()
}

/// Solves `(rho I + U U^T) Z = B` for many right-hand sides.
enum ShiftedSolver {
    /// `U` has fewer columns than rows: Woodbury identity with the small core inverse.
    LowRank {
        u: DMatrix<f64>,
        core_inv: DMatrix<f64>,
        rho: f64,
    },
    Dense(DMatrix<f64>),
}

impl ShiftedSolver {
    fn new(u: DMatrix<f64>, rho: f64) -> Result<Self> {
        let (n, m) = u.shape();
        if m < n {
            let core = DMatrix::identity(m, m) * rho + u.transpose() * &u;
            let core_inv = core
                .cholesky()
                .ok_or_else(|| Error::Numerical("self-expression system not positive definite".into()))?
                .inverse();
            Ok(ShiftedSolver::LowRank { u, core_inv, rho })
        } else {
            let full = DMatrix::identity(n, n) * rho + &u * u.transpose();
            let inv = full
                .cholesky()
                .ok_or_else(|| Error::Numerical("self-expression system not positive definite".into()))?
                .inverse();
            Ok(ShiftedSolver::Dense(inv))
        }
    }

    fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            ShiftedSolver::LowRank { u, core_inv, rho } => {
                let utb = u.transpose() * b;
                (b - u * (core_inv * utb)) / *rho
            }
            ShiftedSolver::Dense(inv) => inv * b,
        }
    }
}

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Sparse affine self-expression of every observation by the others.
///
/// Solved jointly for all rows by alternating direction method of multipliers on
/// `min ||Y - W Y||^2 + lambda ||W||_1` subject to `w_ii = 0` and unit row sums.
/// The returned matrix satisfies both constraints exactly; rows are renormalized
/// after the final iterate.
pub fn solve_self_expression(
    x: &DataMatrix,
    cfg: &SubspaceEmbeddingConfig,
) -> Result<SelfExpressionMatrix> {
    cfg.validate()?;
    let n = x.n();
    if n < 3 {
        return Err(Error::Validation(format!(
            "self-expression needs at least 3 observations, got {n}"
        )));
    }
    let lambda = cfg.sparsity_weight;
    let y = &x.values;
    let gram = y * y.transpose();
    let scale = gram.diagonal().mean().max(1e-12);
    let rho = (10.0 * lambda).max(scale);

    // Work in the column convention: column i of `a` holds the coefficients of y_i.
    // System matrix: 2 K + rho I + rho 1 1^T = rho I + U U^T.
    let p = x.p();
    let mut u = DMatrix::zeros(n, p + 1);
    for i in 0..n {
        for c in 0..p {
            u[(i, c)] = std::f64::consts::SQRT_2 * y[(i, c)];
        }
        u[(i, p)] = rho.sqrt();
    }
    let solver = ShiftedSolver::new(u, rho)?;
    let ones = DMatrix::from_element(n, n, 1.0);
    let fixed = solver.solve(&(&gram * 2.0 + &ones * rho));
    let inv_ones = solver.solve(&DMatrix::from_element(n, 1, 1.0));

    let mut c = DMatrix::<f64>::zeros(n, n);
    let mut dual = DMatrix::<f64>::zeros(n, n);
    let mut dual_sum = DVector::<f64>::zeros(n);
    let mut converged = false;
    let mut iterations = 0;
    let threshold = lambda / rho;

    for it in 0..cfg.max_iters {
        iterations = it + 1;
        let rhs = &c * rho - &dual;
        let mut a = &fixed + solver.solve(&rhs);
        // subtract (M^-1 1) delta^T
        for j in 0..n {
            let dj = dual_sum[j];
            if dj != 0.0 {
                for i in 0..n {
                    a[(i, j)] -= inv_ones[i] * dj;
                }
            }
        }
        let mut c_new = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            for i in 0..n {
                if i != j {
                    c_new[(i, j)] = soft_threshold(a[(i, j)] + dual[(i, j)] / rho, threshold);
                }
            }
        }
        let coupling = &a - &c_new;
        dual += &coupling * rho;
        let col_sums = a.row_sum();
        let mut sum_resid = 0.0_f64;
        for j in 0..n {
            let r = col_sums[j] - 1.0;
            dual_sum[j] += rho * r;
            sum_resid = sum_resid.max(r.abs());
        }
        let change = (&c_new - &c).abs().max();
        c = c_new;
        if coupling.abs().max() < cfg.tol && sum_resid < cfg.tol && change < cfg.tol {
            converged = true;
            break;
        }
    }

    let mut w = c.transpose();
    renormalize_rows(&mut w);
    let objective = self_expression_objective(x, &w, lambda);
    let mut warnings = Vec::new();
    if !converged {
        warnings.push(format!(
            "self-expression solver did not converge in {} iterations; returning last iterate",
            cfg.max_iters
        ));
        log::warn!("{}", warnings[0]);
    }
    Ok(SelfExpressionMatrix {
        values: w,
        iterations,
        converged,
        objective,
        warnings,
    })
}

/// Force zero diagonal and unit row sums.
fn renormalize_rows(w: &mut DMatrix<f64>) {
    let n = w.nrows();
    for i in 0..n {
        w[(i, i)] = 0.0;
        let s: f64 = w.row(i).sum();
        if s.abs() > 1e-8 {
            for j in 0..n {
                w[(i, j)] /= s;
            }
        } else {
            let shift = (1.0 - s) / (n as f64 - 1.0);
            for j in 0..n {
                if j != i {
                    w[(i, j)] += shift;
                }
            }
        }
    }
}

/// Subspace distance from a self-expression matrix, each row normalized by its
/// largest absolute coefficient. Entries lie in `[0, 2]`; the diagonal is zero.
pub fn compute_subspace_distances(w: &DMatrix<f64>) -> Result<DistanceMatrix> {
    let n = w.nrows();
    if w.ncols() != n {
        return Err(Error::Dimension("self-expression matrix must be square".into()));
    }
    let mut row_max = vec![0.0_f64; n];
    for (i, m) in row_max.iter_mut().enumerate() {
        *m = w.row(i).iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        if *m == 0.0 || !m.is_finite() {
            return Err(Error::Validation(format!(
                "row {i} of the self-expression matrix has no nonzero entry"
            )));
        }
    }
    let d = pairwise(n, |i, j| {
        let s = w[(i, j)].abs() / row_max[i] + w[(j, i)].abs() / row_max[j];
        (2.0 - s).max(0.0)
    });
    Ok(DistanceMatrix::new_unchecked(d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_data(n: usize, p: usize, seed: u64) -> DataMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DataMatrix::new(DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal))).unwrap()
    }

    #[test]
    fn minkowski_small_cases() {
        let x = DataMatrix::from_rows(&[vec![0.0], vec![3.0]]).unwrap();
        let d = compute_minkowski_distances(&x, 1.0).unwrap();
        assert_eq!(d.get(0, 1), 3.0);
        let x = DataMatrix::from_rows(&[vec![0.0, 0.0], vec![3.0, 4.0]]).unwrap();
        let d = compute_minkowski_distances(&x, 2.0).unwrap();
        assert_eq!(d.get(0, 1), 5.0);
        let d = compute_minkowski_distances(&x, 3.0).unwrap();
        assert!((d.get(0, 1) - (27.0_f64 + 64.0).powf(1.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn minkowski_rejects_bad_order() {
        let x = random_data(4, 2, 1);
        assert!(matches!(
            compute_minkowski_distances(&x, 0.5),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn data_rejects_non_finite() {
        let err = DataMatrix::from_rows(&[vec![0.0], vec![f64::NAN]]).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn arccos_cases() {
        let x = DataMatrix::from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]])
            .unwrap();
        let d = compute_arccos_distances(&x).unwrap();
        assert_eq!(d.get(0, 3), 0.0);
        assert!((d.get(0, 1) - std::f64::consts::PI).abs() < 1e-15);
        assert!((d.get(0, 2) - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn arccos_names_non_unit_row() {
        let x = DataMatrix::from_rows(&[vec![1.0, 0.0], vec![2.0, 0.0]]).unwrap();
        let err = compute_arccos_distances(&x).unwrap_err().to_string();
        assert!(err.contains("row 1"), "{err}");
    }

    #[test]
    fn subspace_distance_cases() {
        let w = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.5, 0.5, 0.0]);
        let d = compute_subspace_distances(&w).unwrap();
        assert_eq!(d.get(0, 1), 0.0);
        // w_02 = 0 and w_20 = 0.5 / 0.5
        assert_eq!(d.get(0, 2), 1.0);
        assert_eq!(d.get(1, 1), 0.0);
        let w = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let d = compute_subspace_distances(&w).unwrap();
        assert_eq!(d.get(0, 2), 2.0);
        assert_eq!(d.values(), &d.values().transpose());
    }

    #[test]
    fn subspace_distance_zero_row() {
        let w = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let err = compute_subspace_distances(&w).unwrap_err().to_string();
        assert!(err.contains("row 1"), "{err}");
    }

    #[test]
    fn self_expression_constraints() {
        let x = random_data(12, 3, 7);
        let out = solve_self_expression(&x, &SubspaceEmbeddingConfig::default()).unwrap();
        for i in 0..x.n() {
            assert_eq!(out.values[(i, i)], 0.0);
            assert!((out.values.row(i).sum() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn self_expression_needs_three_points() {
        let x = random_data(2, 3, 7);
        assert!(solve_self_expression(&x, &SubspaceEmbeddingConfig::default()).is_err());
    }

    #[test]
    fn pca_recovers_dominant_axis() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|_| {
                let t: f64 = rng.sample::<f64, _>(StandardNormal) * 10.0;
                let e: f64 = rng.sample::<f64, _>(StandardNormal) * 0.1;
                vec![t, t + e, e]
            })
            .collect();
        let x = DataMatrix::from_rows(&rows).unwrap();
        let z = x.pca(1).unwrap();
        assert_eq!(z.p(), 1);
        let var: f64 = z.values().iter().map(|v| v * v).sum::<f64>() / 199.0;
        assert!(var > 150.0, "{var}");
    }

    #[test]
    fn csv_errors() {
        let dir = tempfile::tempdir().unwrap();
        let neg = dir.path().join("neg.csv");
        std::fs::write(&neg, "0,1,2\n1,0,-1\n2,-1,0\n").unwrap();
        let err = DistanceMatrix::load_csv(&neg, false, true).unwrap_err().to_string();
        assert!(err.contains("negative distance at (1,2)"), "{err}");
        assert!(DistanceMatrix::load_csv(&neg, false, false).is_ok());

        let rect = dir.path().join("rect.csv");
        std::fs::write(&rect, "0,1\n1,0\n2,2\n").unwrap();
        assert!(matches!(
            DistanceMatrix::load_csv(&rect, false, true),
            Err(Error::Dimension(_))
        ));

        let asym = dir.path().join("asym.csv");
        std::fs::write(&asym, "0,1\n2,0\n").unwrap();
        let err = DistanceMatrix::load_csv(&asym, false, true).unwrap_err().to_string();
        assert!(err.contains("(0,1)"), "{err}");
    }

    #[test]
    fn csv_round_trip_with_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let d = DistanceMatrix::from_rows(&[
            vec![0.0, 1.0, 0.1],
            vec![1.0, 0.0, 1.0 / 3.0],
            vec![0.1, 1.0 / 3.0, 0.0],
        ])
        .unwrap();
        d.save_csv(&path).unwrap();
        let back = DistanceMatrix::load_csv(&path, false, true).unwrap();
        assert!((back.values() - d.values()).abs().max() <= 1e-12);

        let hdr = dir.path().join("h.csv");
        std::fs::write(&hdr, "a,b\n0,2\n2,0\n").unwrap();
        let h = DistanceMatrix::load_csv(&hdr, true, true).unwrap();
        assert_eq!(h.get(0, 1), 2.0);
    }
}
