//! Gamma partial likelihood over within-cluster pairwise distances.
//!
//! Each cluster contributes the product over ordered pairs `i != i'` of
//! `g(d_ii'; alpha_h, sigma_h)^(1/n_h)`, with `g` a Gamma density. The element-wise
//! and the matrix-trace evaluations below return the same absolute value. Also
//! here: the log-Gamma graph affinity, its normalized-cut loss, and the Bregman
//! divergences that motivate the `1/n_h` power.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::distmat::DistanceMatrix;
use crate::error::{Error, Result};

/// Cluster labels with `k` available clusters. Labels are zero-based in memory.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Assignment {
    labels: Vec<usize>,
    k: usize,
}

impl Assignment {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Parameter("cluster count k must be >= 1".into()));
        }
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= k) {
            return Err(Error::Validation(format!(
                "label {l} of observation {i} out of range for k = {k}"
            )));
        }
        Ok(Self { labels, k })
    }

    /// Build from one-based labels as written in label files.
    pub fn from_one_based(labels: &[usize], k: usize) -> Result<Self> {
        let zero = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                l.checked_sub(1)
                    .ok_or_else(|| Error::Validation(format!("label 0 at observation {i}; labels start at 1")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(zero, k)
    }

    /// Every observation in cluster 0.
    pub fn single(n: usize, k: usize) -> Self {
        Self { labels: vec![0; n], k }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.k];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }

    pub fn members(&self, h: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == h)
            .map(|(i, _)| i)
            .collect()
    }

    /// Binary `n x k` matrix with a single one per row.
    pub fn matrix_view(&self) -> DMatrix<f64> {
        let mut c = DMatrix::zeros(self.n(), self.k);
        for (i, &l) in self.labels.iter().enumerate() {
            c[(i, l)] = 1.0;
        }
        c
    }

    /// Read back labels from a binary matrix; rows must have exactly one 1.
    pub fn from_matrix(c: &DMatrix<f64>) -> Result<Self> {
        let mut labels = Vec::with_capacity(c.nrows());
        for i in 0..c.nrows() {
            let ones: Vec<usize> = (0..c.ncols()).filter(|&h| c[(i, h)] == 1.0).collect();
            let zeros = (0..c.ncols()).filter(|&h| c[(i, h)] == 0.0).count();
            if ones.len() != 1 || zeros + 1 != c.ncols() {
                return Err(Error::Validation(format!("row {i} of C is not one-hot")));
            }
            labels.push(ones[0]);
        }
        Self::new(labels, c.ncols())
    }

    /// Apply an observation permutation: new observation `a` is old observation `perm[a]`.
    pub fn permute_observations(&self, perm: &[usize]) -> Self {
        Self {
            labels: perm.iter().map(|&i| self.labels[i]).collect(),
            k: self.k,
        }
    }

    /// Relabel clusters by order of first appearance (a canonical form of the partition).
    pub fn canonical(&self) -> Self {
        Self {
            labels: canonical_labels(&self.labels),
            k: self.k,
        }
    }

    pub fn n_occupied(&self) -> usize {
        self.counts().iter().filter(|&&c| c > 0).count()
    }
}

/// Relabel an arbitrary label vector by order of first appearance.
pub fn canonical_labels(labels: &[usize]) -> Vec<usize> {
    let mut map: Vec<(usize, usize)> = Vec::new();
    labels
        .iter()
        .map(|&l| match map.iter().find(|(old, _)| *old == l) {
            Some(&(_, new)) => new,
            None => {
                let new = map.len();
                map.push((l, new));
                new
            }
        })
        .collect()
}

/// Per-cluster Gamma shapes and scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterParams {
    pub alpha: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl ClusterParams {
    pub fn new(alpha: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        if alpha.len() != sigma.len() {
            return Err(Error::Dimension("alpha and sigma lengths differ".into()));
        }
        if let Some(h) = alpha.iter().position(|&a| !(a >= 1.0) || !a.is_finite()) {
            return Err(Error::Parameter(format!("alpha[{h}] = {} must be >= 1", alpha[h])));
        }
        if let Some(h) = sigma.iter().position(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::Parameter(format!("sigma[{h}] = {} must be > 0", sigma[h])));
        }
        Ok(Self { alpha, sigma })
    }

    pub fn uniform(k: usize, alpha: f64, sigma: f64) -> Result<Self> {
        Self::new(vec![alpha; k], vec![sigma; k])
    }

    pub fn k(&self) -> usize {
        self.alpha.len()
    }

    /// `diag(alpha_h - 1)`.
    pub fn lambda(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            self.k(),
            self.alpha.iter().map(|a| a - 1.0),
        ))
    }

    /// `diag(sigma_h)`.
    pub fn sigma_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.sigma))
    }

    /// Per-cluster constant `ln Gamma(alpha_h) + alpha_h ln sigma_h`.
    pub fn log_normalizers(&self) -> Vec<f64> {
        self.alpha
            .iter()
            .zip(&self.sigma)
            .map(|(&a, &s)| ln_gamma(a) + a * s.ln())
            .collect()
    }
}

/// Mixture weights on the simplex and their symmetric Dirichlet concentration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureWeights {
    pub pi: Vec<f64>,
    pub dirichlet_conc: f64,
}

impl MixtureWeights {
    pub fn new(pi: Vec<f64>, dirichlet_conc: f64) -> Result<Self> {
        if pi.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::Parameter("mixture weights must be nonnegative".into()));
        }
        let s: f64 = pi.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::Parameter(format!("mixture weights sum to {s}, not 1")));
        }
        if !(dirichlet_conc > 0.0) {
            return Err(Error::Parameter("Dirichlet concentration must be > 0".into()));
        }
        Ok(Self { pi, dirichlet_conc })
    }

    pub fn uniform(k: usize, dirichlet_conc: f64) -> Result<Self> {
        Self::new(vec![1.0 / k as f64; k], dirichlet_conc)
    }

    pub fn k(&self) -> usize {
        self.pi.len()
    }
}

/// `ln pi_h`, with an exact zero mapped to `-inf`.
pub(crate) fn ln_weight(p: f64) -> f64 {
    if p > 0.0 {
        p.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Log-density of the Gamma(`alpha`, scale `sigma`) distribution at `d`.
///
/// At `d = 0` the density is 1/sigma for `alpha = 1` and zero (returned as `-inf`)
/// for `alpha > 1`.
pub fn gamma_log_density(d: f64, alpha: f64, sigma: f64) -> Result<f64> {
    if d < 0.0 || d.is_nan() {
        return Err(Error::Domain(format!("distance must be >= 0, got {d}")));
    }
    if !(alpha >= 1.0) {
        return Err(Error::Parameter(format!("alpha must be >= 1, got {alpha}")));
    }
    if !(sigma > 0.0) {
        return Err(Error::Parameter(format!("sigma must be > 0, got {sigma}")));
    }
    let shape_term = if alpha == 1.0 {
        0.0
    } else if d == 0.0 {
        return Ok(f64::NEG_INFINITY);
    } else {
        (alpha - 1.0) * d.ln()
    };
    Ok(-ln_gamma(alpha) - alpha * sigma.ln() + shape_term - d / sigma)
}

/// Sufficient statistics of one cluster over ordered pairs `i != i'`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PairStats {
    pub size: usize,
    /// Sum of distances over ordered pairs.
    pub sum_d: f64,
    /// Sum of log distances over ordered pairs (`-inf` if any distance is zero).
    pub sum_log_d: f64,
}

impl PairStats {
    pub fn of(d: &DistanceMatrix, members: &[usize]) -> Self {
        let mut sum_d = 0.0;
        let mut sum_log_d = 0.0;
        for (a, &i) in members.iter().enumerate() {
            for &j in &members[a + 1..] {
                let v = d.get(i, j);
                sum_d += 2.0 * v;
                sum_log_d += 2.0 * v.ln();
            }
        }
        Self {
            size: members.len(),
            sum_d,
            sum_log_d,
        }
    }

    /// `(1/n_h) sum_{i != i'} ln g(d_ii')`, zero for clusters with fewer than two members.
    pub fn log_likelihood(&self, alpha: f64, sigma: f64) -> f64 {
        if self.size < 2 {
            return 0.0;
        }
        let n = self.size as f64;
        let shape_term = if alpha == 1.0 {
            0.0
        } else {
            (alpha - 1.0) * self.sum_log_d / n
        };
        -(n - 1.0) * (ln_gamma(alpha) + alpha * sigma.ln()) + shape_term - self.sum_d / (n * sigma)
    }
}

/// Per-cluster statistics for every cluster of an assignment.
pub fn cluster_stats(d: &DistanceMatrix, assignment: &Assignment) -> Vec<PairStats> {
    (0..assignment.k())
        .map(|h| PairStats::of(d, &assignment.members(h)))
        .collect()
}

/// Log partial likelihood of a single cluster: `(1/n_h) sum_{i != i'} ln g(d_ii')`.
pub fn cluster_log_likelihood(
    d: &DistanceMatrix,
    members: &[usize],
    alpha: f64,
    sigma: f64,
) -> Result<f64> {
    if members.is_empty() {
        return Err(Error::Validation("cluster has no members".into()));
    }
    if let Some(&i) = members.iter().find(|&&i| i >= d.n()) {
        return Err(Error::Dimension(format!(
            "member index {i} out of range for n = {}",
            d.n()
        )));
    }
    let n = members.len() as f64;
    let mut total = 0.0;
    for &i in members {
        for &j in members {
            if i != j {
                total += gamma_log_density(d.get(i, j), alpha, sigma)?;
            }
        }
    }
    Ok(total / n)
}

fn check_dims(d: &DistanceMatrix, n: usize, k_params: usize, k: usize) -> Result<()> {
    if d.n() != n {
        return Err(Error::Dimension(format!(
            "distance matrix is {}x{} but assignment has {n} observations",
            d.n(),
            d.n()
        )));
    }
    if k_params != k {
        return Err(Error::Dimension(format!(
            "parameters have {k_params} clusters but assignment has k = {k}"
        )));
    }
    Ok(())
}

/// `sum_h n_h ln pi_h`.
pub fn label_log_prior(assignment: &Assignment, weights: &MixtureWeights) -> f64 {
    assignment
        .counts()
        .iter()
        .zip(&weights.pi)
        .filter(|(&c, _)| c > 0)
        .map(|(&c, &p)| c as f64 * ln_weight(p))
        .sum()
}

/// Element-wise log partial likelihood summed over clusters, plus the label prior
/// `sum_h n_h ln pi_h` when `include_label_prior` is set.
pub fn total_log_likelihood(
    d: &DistanceMatrix,
    assignment: &Assignment,
    params: &ClusterParams,
    weights: &MixtureWeights,
    include_label_prior: bool,
) -> Result<f64> {
    check_dims(d, assignment.n(), params.k(), assignment.k())?;
    if weights.k() != assignment.k() {
        return Err(Error::Dimension("weights and assignment disagree on k".into()));
    }
    let mut total = 0.0;
    for h in 0..assignment.k() {
        let members = assignment.members(h);
        if members.is_empty() {
            continue;
        }
        total += cluster_log_likelihood(d, &members, params.alpha[h], params.sigma[h])?;
    }
    if include_label_prior {
        total += label_log_prior(assignment, weights);
    }
    Ok(total)
}

/// Components of the matrix-trace evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatrixFormTerms {
    /// `tr{C^T (log D) C Lambda (C^T C)^+}`.
    pub log_term: f64,
    /// `tr{C^T D C (Sigma C^T C)^+}`.
    pub distance_term: f64,
    /// `-sum_h (n_h - 1)(ln Gamma(alpha_h) + alpha_h ln sigma_h)` over nonempty clusters.
    pub normalizer: f64,
}

impl MatrixFormTerms {
    pub fn value(&self) -> f64 {
        self.log_term - self.distance_term + self.normalizer
    }

    /// The trace part alone, without the alpha/sigma normalizer.
    pub fn trace_part(&self) -> f64 {
        self.log_term - self.distance_term
    }
}

/// Matrix-trace form of the log partial likelihood. Zero columns of `C` are handled
/// by the generalized inverse of `C^T C` and contribute nothing.
pub fn matrix_form_terms(
    d: &DistanceMatrix,
    c: &DMatrix<f64>,
    params: &ClusterParams,
) -> Result<MatrixFormTerms> {
    let n = d.n();
    if c.nrows() != n {
        return Err(Error::Dimension(format!(
            "C has {} rows but D is {n}x{n}",
            c.nrows()
        )));
    }
    if c.ncols() != params.k() {
        return Err(Error::Dimension(format!(
            "C has {} columns but parameters have {} clusters",
            c.ncols(),
            params.k()
        )));
    }
    let log_d = d.log_masked();
    let ctc = c.transpose() * c;
    let ctc_pinv = diag_pinv(&ctc);
    // Lambda, Sigma and C^T C are diagonal, so only the diagonal of each k x k
    // product enters the trace. Taking it explicitly keeps -inf entries of log D in
    // off-diagonal blocks from turning into NaN through 0 * inf.
    let log_block = c.transpose() * &log_d * c;
    let dist_block = c.transpose() * d.values() * c;
    let mut log_term = 0.0;
    let mut distance_term = 0.0;
    for h in 0..params.k() {
        if ctc_pinv[(h, h)] == 0.0 {
            continue;
        }
        let lam = params.alpha[h] - 1.0;
        if lam != 0.0 {
            log_term += log_block[(h, h)] * lam * ctc_pinv[(h, h)];
        }
        distance_term += dist_block[(h, h)] * ctc_pinv[(h, h)] / params.sigma[h];
    }
    let norms = params.log_normalizers();
    let normalizer = (0..params.k())
        .filter(|&h| ctc[(h, h)] > 0.0)
        .map(|h| -(ctc[(h, h)] - 1.0) * norms[h])
        .sum();
    Ok(MatrixFormTerms {
        log_term: if log_term.is_nan() { f64::NEG_INFINITY } else { log_term },
        distance_term,
        normalizer,
    })
}

/// Matrix-trace log partial likelihood; equals the sum of [`cluster_log_likelihood`].
pub fn matrix_form_log_likelihood(
    d: &DistanceMatrix,
    c: &DMatrix<f64>,
    params: &ClusterParams,
) -> Result<f64> {
    Ok(matrix_form_terms(d, c, params)?.value())
}

/// Moore-Penrose inverse of a diagonal matrix (zero pivots stay zero).
fn diag_pinv(m: &DMatrix<f64>) -> DMatrix<f64> {
    let k = m.nrows();
    DMatrix::from_fn(k, k, |a, b| {
        if a == b && m[(a, a)] != 0.0 {
            1.0 / m[(a, a)]
        } else {
            0.0
        }
    })
}

/// Graph adjacency from a log-Gamma distance kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphAffinity {
    pub a: DMatrix<f64>,
    pub kappa: f64,
}

impl GraphAffinity {
    /// Degrees `sum_j A_ij`.
    pub fn degrees(&self) -> Vec<f64> {
        self.a.row_iter().map(|r| r.sum()).collect()
    }
}

/// `A = kappa 1 - D / sigma0 + (alpha0 - 1) log D` off the diagonal, with `kappa` the
/// smallest offset making every off-diagonal entry positive (plus a 1e-9 margin).
/// The diagonal of `A` is zero.
pub fn affinity_from_distance(d: &DistanceMatrix, sigma0: f64, alpha0: f64) -> Result<GraphAffinity> {
    if !(sigma0 > 0.0) {
        return Err(Error::Parameter(format!("sigma0 must be > 0, got {sigma0}")));
    }
    if !(alpha0 >= 1.0) {
        return Err(Error::Parameter(format!("alpha0 must be >= 1, got {alpha0}")));
    }
    let n = d.n();
    let mut raw = DMatrix::zeros(n, n);
    let mut min_off = f64::INFINITY;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let dij = d.get(i, j);
            let log_part = if alpha0 == 1.0 {
                0.0
            } else if dij == 0.0 {
                return Err(Error::Domain(format!(
                    "zero distance at ({i},{j}) with alpha0 > 1 (log 0)"
                )));
            } else {
                (alpha0 - 1.0) * dij.ln()
            };
            raw[(i, j)] = -dij / sigma0 + log_part;
            min_off = min_off.min(raw[(i, j)]);
        }
    }
    let kappa = -min_off + 1e-9;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                raw[(i, j)] += kappa;
            }
        }
    }
    Ok(GraphAffinity { a: raw, kappa })
}

/// `tr{C^T A C (C^T C)^+}`.
pub fn affinity_trace(a: &DMatrix<f64>, c: &DMatrix<f64>) -> f64 {
    let ctc = c.transpose() * c;
    (c.transpose() * a * c * diag_pinv(&ctc)).trace()
}

/// Normalized-cut loss `sum_h sum_{i in h} sum_{j not in h} A_ij / (2 n_h)`.
pub fn ncut_loss(a: &GraphAffinity, assignment: &Assignment) -> f64 {
    let counts = assignment.counts();
    let labels = assignment.labels();
    let n = labels.len();
    let mut loss = 0.0;
    for i in 0..n {
        let h = labels[i];
        let mut cut = 0.0;
        for j in 0..n {
            if labels[j] != h {
                cut += a.a[(i, j)];
            }
        }
        loss += cut / (2.0 * counts[h] as f64);
    }
    loss
}

/// `2 NCut + tr{C^T A C (C^T C)^-1} - sum_i deg_i / n_{c_i}`; zero up to rounding.
pub fn ncut_trace_residual(a: &GraphAffinity, assignment: &Assignment) -> f64 {
    let counts = assignment.counts();
    let c = assignment.matrix_view();
    let degree_term: f64 = a
        .degrees()
        .iter()
        .zip(assignment.labels())
        .map(|(deg, &l)| deg / counts[l] as f64)
        .sum();
    2.0 * ncut_loss(a, assignment) + affinity_trace(&a.a, &c) - degree_term
}

/// Convex generator of a Bregman divergence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BregmanGenerator {
    /// `phi(x) = ||x||^2`.
    SquaredEuclidean,
}

impl BregmanGenerator {
    pub fn parse(id: &str) -> Result<Self> {
        match id {
            "squared_euclidean" | "squared_norm" | "sq_euclidean" => Ok(Self::SquaredEuclidean),
            other => Err(Error::Parameter(format!("unsupported Bregman generator {other:?}"))),
        }
    }

    pub fn phi(&self, x: &[f64]) -> f64 {
        match self {
            Self::SquaredEuclidean => x.iter().map(|v| v * v).sum(),
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Self::SquaredEuclidean => x.iter().map(|v| 2.0 * v).collect(),
        }
    }
}

/// Calibrating power applied to the pairwise divergences of a cluster.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BetaRule {
    /// `beta_h = 1 / n_h`.
    InverseClusterSize,
    Constant(f64),
}

/// Generator plus calibration rule. The statistic `T` is the identity map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BregmanSpec {
    pub generator: BregmanGenerator,
    pub beta: BetaRule,
}

impl BregmanSpec {
    pub fn new(phi_id: &str, beta: BetaRule) -> Result<Self> {
        Ok(Self {
            generator: BregmanGenerator::parse(phi_id)?,
            beta,
        })
    }

    fn beta_for(&self, n_h: usize) -> f64 {
        match self.beta {
            BetaRule::InverseClusterSize => 1.0 / n_h as f64,
            BetaRule::Constant(b) => b,
        }
    }
}

impl Default for BregmanSpec {
    fn default() -> Self {
        Self {
            generator: BregmanGenerator::SquaredEuclidean,
            beta: BetaRule::InverseClusterSize,
        }
    }
}

/// `B(x, y) = phi(x) - phi(y) - (x - y)^T grad phi(y)`.
pub fn bregman_divergence(spec: &BregmanSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Dimension("Bregman arguments differ in length".into()));
    }
    let g = spec.generator.gradient(y);
    let inner: f64 = x.iter().zip(y).zip(&g).map(|((a, b), gi)| (a - b) * gi).sum();
    Ok(spec.generator.phi(x) - spec.generator.phi(y) - inner)
}

fn cluster_rows<'a>(x: &'a [Vec<f64>], assignment: &Assignment) -> Result<Vec<Vec<&'a [f64]>>> {
    if x.len() != assignment.n() {
        return Err(Error::Dimension("data and assignment lengths differ".into()));
    }
    let mut groups = vec![Vec::new(); assignment.k()];
    for (row, &l) in x.iter().zip(assignment.labels()) {
        groups[l].push(row.as_slice());
    }
    Ok(groups)
}

/// Within-cluster sample mean of each nonempty cluster.
fn mean_of(rows: &[&[f64]]) -> Vec<f64> {
    let p = rows[0].len();
    let mut mu = vec![0.0; p];
    for r in rows {
        for (m, v) in mu.iter_mut().zip(r.iter()) {
            *m += v;
        }
    }
    let n = rows.len() as f64;
    mu.iter_mut().for_each(|m| *m /= n);
    mu
}

/// Model-based divergence `H_y = sum_h sum_{i in h} B(T(y_i), mu_h)` with `mu_h` the
/// within-cluster sample mean.
pub fn model_divergence(x: &[Vec<f64>], assignment: &Assignment, spec: &BregmanSpec) -> Result<f64> {
    let mut total = 0.0;
    for rows in cluster_rows(x, assignment)? {
        if rows.is_empty() {
            continue;
        }
        let mu = mean_of(&rows);
        for r in &rows {
            total += bregman_divergence(spec, r, &mu)?;
        }
    }
    Ok(total)
}

/// Distance-based divergence `H_d = sum_h beta_h sum_{i,i' in h} B(T(y_i), T(y_i')) / 2`.
pub fn distance_divergence(
    x: &[Vec<f64>],
    assignment: &Assignment,
    spec: &BregmanSpec,
) -> Result<f64> {
    let mut total = 0.0;
    for rows in cluster_rows(x, assignment)? {
        if rows.is_empty() {
            continue;
        }
        let beta = spec.beta_for(rows.len());
        let mut s = 0.0;
        for a in &rows {
            for b in &rows {
                s += 0.5 * bregman_divergence(spec, a, b)?;
            }
        }
        total += beta * s;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_point(d01: f64) -> DistanceMatrix {
        DistanceMatrix::from_rows(&[vec![0.0, d01], vec![d01, 0.0]]).unwrap()
    }

    #[test]
    fn gamma_density_values() {
        assert!(gamma_log_density(0.0, 1.0, 1.0).unwrap().abs() < 1e-15);
        assert!((gamma_log_density(1.0, 2.0, 1.0).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(gamma_log_density(0.0, 2.0, 1.0).unwrap(), f64::NEG_INFINITY);
        assert!(matches!(gamma_log_density(-1.0, 1.0, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn gamma_mode_at_alpha_minus_one_times_sigma() {
        let grid: Vec<f64> = (1..=8000).map(|i| i as f64 * 1e-3).collect();
        let best = grid
            .iter()
            .copied()
            .max_by(|a, b| {
                gamma_log_density(*a, 3.0, 2.0)
                    .unwrap()
                    .total_cmp(&gamma_log_density(*b, 3.0, 2.0).unwrap())
            })
            .unwrap();
        assert!((best - 4.0).abs() < 1e-9, "{best}");
    }

    #[test]
    fn cluster_likelihood_small_cases() {
        let d = two_point(1.0);
        assert_eq!(cluster_log_likelihood(&d, &[0], 1.0, 1.0).unwrap(), 0.0);
        assert!((cluster_log_likelihood(&d, &[0, 1], 1.0, 1.0).unwrap() + 1.0).abs() < 1e-15);
        assert!((cluster_log_likelihood(&d, &[1, 0], 1.0, 1.0).unwrap() + 1.0).abs() < 1e-15);
        assert!(matches!(
            cluster_log_likelihood(&d, &[0, 5], 1.0, 1.0),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn total_likelihood_single_cluster() {
        let d = two_point(1.0);
        let asg = Assignment::single(2, 1);
        let params = ClusterParams::uniform(1, 1.0, 1.0).unwrap();
        let w = MixtureWeights::uniform(1, 1.0).unwrap();
        let v = total_log_likelihood(&d, &asg, &params, &w, true).unwrap();
        assert!((v + 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_weight_gives_neg_infinity() {
        let d = two_point(1.0);
        let asg = Assignment::new(vec![0, 1], 2).unwrap();
        let params = ClusterParams::uniform(2, 1.0, 1.0).unwrap();
        let w = MixtureWeights::new(vec![1.0, 0.0], 1.0).unwrap();
        let v = total_log_likelihood(&d, &asg, &params, &w, true).unwrap();
        assert_eq!(v, f64::NEG_INFINITY);
        let v = total_log_likelihood(&d, &asg, &params, &w, false).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn matrix_form_with_empty_column() {
        let d = DistanceMatrix::from_rows(&[
            vec![0.0, 1.0, 2.0],
            vec![1.0, 0.0, 1.5],
            vec![2.0, 1.5, 0.0],
        ])
        .unwrap();
        let params = ClusterParams::new(vec![2.0, 1.5, 3.0], vec![0.5, 1.0, 2.0]).unwrap();
        let asg = Assignment::new(vec![0, 0, 2], 3).unwrap();
        let mf = matrix_form_log_likelihood(&d, &asg.matrix_view(), &params).unwrap();
        let direct = cluster_log_likelihood(&d, &[0, 1], 2.0, 0.5).unwrap()
            + cluster_log_likelihood(&d, &[2], 3.0, 2.0).unwrap();
        assert!((mf - direct).abs() < 1e-12);
    }

    #[test]
    fn matrix_form_single_cluster() {
        let d = DistanceMatrix::from_rows(&[
            vec![0.0, 1.0, 2.0],
            vec![1.0, 0.0, 1.5],
            vec![2.0, 1.5, 0.0],
        ])
        .unwrap();
        let params = ClusterParams::new(vec![2.5], vec![0.7]).unwrap();
        let asg = Assignment::single(3, 1);
        let mf = matrix_form_log_likelihood(&d, &asg.matrix_view(), &params).unwrap();
        let el = cluster_log_likelihood(&d, &[0, 1, 2], 2.5, 0.7).unwrap();
        assert!((mf - el).abs() < 1e-12);
    }

    #[test]
    fn affinity_alpha_one_is_linear_kernel() {
        let d = DistanceMatrix::from_rows(&[
            vec![0.0, 1.0, 2.0],
            vec![1.0, 0.0, 0.0],
            vec![2.0, 0.0, 0.0],
        ])
        .unwrap();
        let g = affinity_from_distance(&d, 2.0, 1.0).unwrap();
        for i in 0..3 {
            assert_eq!(g.a[(i, i)], 0.0);
            for j in 0..3 {
                if i != j {
                    assert!((g.a[(i, j)] - (g.kappa - d.get(i, j) / 2.0)).abs() < 1e-15);
                    assert!(g.a[(i, j)] > 0.0);
                }
            }
        }
        assert!(affinity_from_distance(&d, 2.0, 2.0).is_err());
    }

    #[test]
    fn ncut_small_cases() {
        let g = GraphAffinity {
            a: DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]),
            kappa: 0.0,
        };
        let asg = Assignment::new(vec![0, 1], 2).unwrap();
        assert_eq!(ncut_loss(&g, &asg), 1.0);
        assert_eq!(ncut_loss(&g, &Assignment::single(2, 2)), 0.0);
        assert!(ncut_trace_residual(&g, &Assignment::single(2, 1)).abs() < 1e-15);
    }

    #[test]
    fn bregman_basics() {
        let spec = BregmanSpec::default();
        let x = [1.0, -2.0, 0.5];
        let y = [0.0, 1.0, 2.0];
        assert_eq!(bregman_divergence(&spec, &x, &x).unwrap(), 0.0);
        let sq: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
        assert!((bregman_divergence(&spec, &x, &y).unwrap() - sq).abs() < 1e-12);
        assert!(BregmanSpec::new("kl", BetaRule::InverseClusterSize).is_err());
    }

    #[test]
    fn canonical_relabeling() {
        assert_eq!(canonical_labels(&[2, 2, 0, 1, 0]), vec![0, 0, 1, 2, 1]);
    }

    #[test]
    fn matrix_round_trip_labels() {
        let asg = Assignment::new(vec![1, 0, 2, 1], 3).unwrap();
        let c = asg.matrix_view();
        let ctc = c.transpose() * &c;
        assert_eq!(ctc, DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 2.0, 1.0])));
        assert_eq!(Assignment::from_matrix(&c).unwrap(), asg);
    }
}
