//! Label-invariant summaries of a trace: co-assignment probabilities, a point
//! estimate minimizing posterior expected variation of information, assignment
//! probabilities from a symmetric simplex factorization, and per-point
//! uncertainty.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::canonical_labels;
use crate::sampler::Trace;

/// Posterior co-clustering probabilities `pr(c_i = c_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoAssignmentMatrix {
    pub values: DMatrix<f64>,
    pub n_draws: usize,
}

/// Element-wise mean of the retained `CC^T` draws.
pub fn coassignment_from_trace(trace: &Trace) -> Result<CoAssignmentMatrix> {
    let m = trace.n_draws();
    if m == 0 {
        return Err(Error::Validation("trace has no retained draws".into()));
    }
    let mut values = &trace.coassign_sum / m as f64;
    for i in 0..trace.n {
        values[(i, i)] = 1.0;
    }
    Ok(CoAssignmentMatrix { values, n_draws: m })
}

/// Variation of information (nats) between two partitions given as dense
/// labels `0..ka` and `0..kb`.
fn vi_dense(a: &[usize], ka: usize, b: &[usize], kb: usize) -> f64 {
    let n = a.len() as f64;
    let mut table = vec![0usize; ka * kb];
    let mut ra = vec![0usize; ka];
    let mut rb = vec![0usize; kb];
    for (&x, &y) in a.iter().zip(b) {
        table[x * kb + y] += 1;
        ra[x] += 1;
        rb[y] += 1;
    }
    let mut vi = 0.0;
    for x in 0..ka {
        for y in 0..kb {
            let c = table[x * kb + y];
            if c > 0 {
                let c = c as f64;
                vi -= c * ((c / ra[x] as f64).ln() + (c / rb[y] as f64).ln());
            }
        }
    }
    (vi / n).max(0.0)
}

fn n_labels(l: &[usize]) -> usize {
    l.iter().max().map_or(0, |m| m + 1)
}

/// `VI(a, b) = H(a) + H(b) - 2 I(a, b)` in nats.
pub fn vi_distance(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "partitions differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    let (ca, cb) = (canonical_labels(a), canonical_labels(b));
    Ok(vi_dense(&ca, n_labels(&ca), &cb, n_labels(&cb)))
}

/// Point estimate with per-point uncertainty `pr(c_i != c_hat_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointEstimate {
    /// Zero-based labels in order of first appearance.
    pub labels: Vec<usize>,
    pub expected_vi: f64,
    pub uncertainty: Vec<f64>,
    /// Number of distinct sampled partitions searched.
    pub n_candidates: usize,
}

/// Distinct canonical partitions in order of first appearance, with counts.
fn distinct_partitions(trace: &Trace) -> Vec<(Vec<usize>, usize)> {
    let mut index: HashMap<Vec<usize>, usize> = HashMap::new();
    let mut out: Vec<(Vec<usize>, usize)> = Vec::new();
    for l in &trace.labels {
        let c = canonical_labels(l);
        match index.get(&c) {
            Some(&i) => out[i].1 += 1,
            None => {
                index.insert(c.clone(), out.len());
                out.push((c, 1));
            }
        }
    }
    out
}

/// Posterior expected VI of `candidate` against the retained draws.
pub fn expected_vi(candidate: &[usize], trace: &Trace) -> Result<f64> {
    if trace.n_draws() == 0 {
        return Err(Error::Validation("trace has no retained draws".into()));
    }
    let c = canonical_labels(candidate);
    let kc = n_labels(&c);
    let parts = distinct_partitions(trace);
    let total: f64 = parts
        .iter()
        .map(|(p, w)| *w as f64 * vi_dense(&c, kc, p, n_labels(p)))
        .sum();
    Ok(total / trace.n_draws() as f64)
}

/// Among the distinct sampled partitions, the one minimizing posterior expected
/// VI; ties go to the earliest draw. Uncertainty is filled by [`uncertainty`].
pub fn point_estimate_vi(trace: &Trace) -> Result<PointEstimate> {
    let m = trace.n_draws();
    if m == 0 {
        return Err(Error::Validation("trace has no retained draws".into()));
    }
    let parts = distinct_partitions(trace);
    let ks: Vec<usize> = parts.iter().map(|(p, _)| n_labels(p)).collect();
    let scores: Vec<f64> = (0..parts.len())
        .into_par_iter()
        .map(|a| {
            let mut s = 0.0;
            for (b, (p, w)) in parts.iter().enumerate() {
                if a != b {
                    s += *w as f64 * vi_dense(&parts[a].0, ks[a], p, ks[b]);
                }
            }
            s / m as f64
        })
        .collect();
    let mut best = 0;
    for (a, &s) in scores.iter().enumerate() {
        if s < scores[best] {
            best = a;
        }
    }
    let labels = parts[best].0.clone();
    let uncertainty = uncertainty(&labels, trace)?;
    Ok(PointEstimate {
        labels,
        expected_vi: scores[best],
        uncertainty,
        n_candidates: parts.len(),
    })
}

/// `pr(c_i != c_hat_i)`, estimated as one minus the fraction of draws in which
/// `i` shares a cluster with a strict majority of its peers in the point
/// estimate. A point alone in the point estimate counts as agreeing in draws
/// where it is also alone.
pub fn uncertainty(point: &[usize], trace: &Trace) -> Result<Vec<f64>> {
    let n = point.len();
    if n != trace.n {
        return Err(Error::Dimension(format!(
            "point estimate has {n} labels but the trace has n = {}",
            trace.n
        )));
    }
    let m = trace.n_draws();
    if m == 0 {
        return Err(Error::Validation("trace has no retained draws".into()));
    }
    let k_hat = n_labels(point);
    let mut peers: Vec<Vec<usize>> = vec![Vec::new(); k_hat];
    for (i, &h) in point.iter().enumerate() {
        peers[h].push(i);
    }
    let mut agree = vec![0usize; n];
    for draw in &trace.labels {
        let mut sizes: HashMap<usize, usize> = HashMap::new();
        for &l in draw {
            *sizes.entry(l).or_default() += 1;
        }
        for i in 0..n {
            let group = &peers[point[i]];
            let others = group.len() - 1;
            let ok = if others == 0 {
                sizes[&draw[i]] == 1
            } else {
                let same = group.iter().filter(|&&j| j != i && draw[j] == draw[i]).count();
                2 * same > others
            };
            agree[i] += ok as usize;
        }
    }
    Ok(agree.iter().map(|&a| 1.0 - a as f64 / m as f64).collect())
}

/// Row-stochastic matrix of `pr(c_i = h)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignProbMatrix {
    pub values: DMatrix<f64>,
}

impl AssignProbMatrix {
    /// Row-wise argmax labels.
    pub fn hard_labels(&self) -> Vec<usize> {
        self.values
            .row_iter()
            .map(|r| {
                let mut best = 0;
                for h in 1..r.len() {
                    if r[h] > r[best] {
                        best = h;
                    }
                }
                best
            })
            .collect()
    }
}

/// Settings of the factorization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorizeConfig {
    pub tol: f64,
    pub max_iters: usize,
    pub n_restarts: usize,
}

impl Default for FactorizeConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iters: 2000,
            n_restarts: 5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Factorization {
    pub probs: AssignProbMatrix,
    /// `||A - P P^T||_F^2` at the returned iterate.
    pub objective: f64,
    /// Objective per iteration of the winning restart.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub restart: usize,
    pub warnings: Vec<String>,
}

/// Euclidean projection of `v` onto the probability simplex.
pub fn project_simplex(v: &mut [f64]) {
    let mut u: Vec<f64> = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, &x) in u.iter().enumerate() {
        cum += x;
        let t = (cum - 1.0) / (j as f64 + 1.0);
        if x - t > 0.0 {
            theta = t;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
}

fn objective(a: &DMatrix<f64>, p: &DMatrix<f64>) -> f64 {
    (a - p * p.transpose()).norm_squared()
}

fn project_rows(p: &mut DMatrix<f64>) {
    let k = p.ncols();
    let mut row = vec![0.0; k];
    for i in 0..p.nrows() {
        for h in 0..k {
            row[h] = p[(i, h)];
        }
        project_simplex(&mut row);
        for h in 0..k {
            p[(i, h)] = row[h];
        }
    }
}

/// One-hot rows from `k` anchors picked by farthest-point traversal of the
/// co-assignment rows.
fn anchor_init(a: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let n = a.nrows();
    let mut anchors = vec![0usize];
    let dist = |i: usize, j: usize| (a.row(i) - a.row(j)).norm_squared();
    let mut best: Vec<f64> = (0..n).map(|i| dist(i, 0)).collect();
    while anchors.len() < k.min(n) {
        let next = (0..n).fold(0, |acc, i| if best[i] > best[acc] { i } else { acc });
        anchors.push(next);
        for i in 0..n {
            best[i] = best[i].min(dist(i, next));
        }
    }
    let mut p = DMatrix::zeros(n, k);
    for i in 0..n {
        let h = (0..anchors.len()).fold(0, |acc, h| if a[(i, anchors[h])] > a[(i, anchors[acc])] { h } else { acc });
        p[(i, h)] = 1.0;
    }
    p
}

fn descend(a: &DMatrix<f64>, mut p: DMatrix<f64>, cfg: &FactorizeConfig) -> (DMatrix<f64>, Vec<f64>, bool) {
    let mut f = objective(a, &p);
    let mut trace = vec![f];
    let mut step = 1.0 / (4.0 * a.nrows() as f64);
    let mut converged = false;
    for _ in 0..cfg.max_iters {
        let grad = (&p * p.transpose() - a) * &p * 4.0;
        let mut accepted = None;
        let mut s = step * 2.0;
        for _ in 0..60 {
            let mut cand = &p - &grad * s;
            project_rows(&mut cand);
            let fc = objective(a, &cand);
            let decrease = (&cand - &p).norm_squared() / (2.0 * s);
            if fc <= f - 1e-4 * decrease {
                accepted = Some((cand, fc));
                break;
            }
            s *= 0.5;
        }
        let Some((cand, fc)) = accepted else {
            converged = true;
            break;
        };
        step = s;
        let change = f - fc;
        p = cand;
        f = fc;
        trace.push(f);
        if change <= cfg.tol * f.max(1.0) {
            converged = true;
            break;
        }
    }
    (p, trace, converged)
}

/// Fit a row-simplex `P` (n x k) minimizing `||A - P P^T||_F^2` by projected
/// gradient with Armijo backtracking. Restart 0 starts from anchor points of the
/// co-assignment rows, the others from random Dirichlet(1) rows. The best
/// objective wins, ties to the lowest restart index.
pub fn simplex_factorize<R: Rng + ?Sized>(
    coassign: &CoAssignmentMatrix,
    k: usize,
    cfg: &FactorizeConfig,
    rng: &mut R,
) -> Result<Factorization> {
    if k == 0 {
        return Err(Error::Parameter("k must be >= 1".into()));
    }
    let a = &coassign.values;
    let n = a.nrows();
    let seeds: Vec<u64> = (0..cfg.n_restarts.max(1)).map(|_| rng.random()).collect();
    let runs: Vec<(DMatrix<f64>, Vec<f64>, bool)> = seeds
        .par_iter()
        .enumerate()
        .map(|(r, &seed)| {
            let init = if r == 0 {
                anchor_init(a, k)
            } else {
                let mut g = ChaCha8Rng::seed_from_u64(seed);
                let mut p = DMatrix::from_fn(n, k, |_, _| -g.random::<f64>().max(f64::MIN_POSITIVE).ln());
                for i in 0..n {
                    let s = p.row(i).sum();
                    for h in 0..k {
                        p[(i, h)] /= s;
                    }
                }
                p
            };
            descend(a, init, cfg)
        })
        .collect();
    let mut best = 0;
    for (r, run) in runs.iter().enumerate() {
        if run.1.last() < runs[best].1.last() {
            best = r;
        }
    }
    let (p, trace, converged) = runs.into_iter().nth(best).expect("at least one restart");
    let mut warnings = Vec::new();
    if !converged {
        warnings.push(format!(
            "simplex factorization did not converge in {} iterations",
            cfg.max_iters
        ));
    }
    Ok(Factorization {
        objective: *trace.last().expect("objective recorded"),
        probs: AssignProbMatrix { values: p },
        objective_trace: trace,
        converged,
        restart: best,
        warnings,
    })
}

/// Everything reported for a finished run.
#[derive(Debug, Clone)]
pub struct PosteriorSummary {
    pub coassign: CoAssignmentMatrix,
    pub point: PointEstimate,
    pub assign_probs: Factorization,
}

/// Compute all summaries; the factorization uses as many columns as the point
/// estimate has clusters.
pub fn summarize<R: Rng + ?Sized>(trace: &Trace, cfg: &FactorizeConfig, rng: &mut R) -> Result<PosteriorSummary> {
    let coassign = coassignment_from_trace(trace)?;
    let point = point_estimate_vi(trace)?;
    let k = n_labels(&point.labels).max(1);
    let assign_probs = simplex_factorize(&coassign, k, cfg, rng)?;
    Ok(PosteriorSummary {
        coassign,
        point,
        assign_probs,
    })
}
