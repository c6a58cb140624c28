//! Baseline clusterers: k-means, spectral clustering on a distance matrix, and a
//! diagonal-covariance Gaussian mixture fitted by EM.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

use crate::distmat::{DataMatrix, DistanceMatrix};
use crate::error::{Error, Result};

/// Result of Lloyd's algorithm.
#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub labels: Vec<usize>,
    pub centers: DMatrix<f64>,
    pub inertia: f64,
}

fn sq_dist_row_center(x: &DMatrix<f64>, i: usize, c: &DMatrix<f64>, h: usize) -> f64 {
    (0..x.ncols()).map(|j| (x[(i, j)] - c[(h, j)]).powi(2)).sum()
}

fn kmeans_pp_seed<R: Rng + ?Sized>(x: &DMatrix<f64>, k: usize, rng: &mut R) -> DMatrix<f64> {
    let (n, p) = x.shape();
    let mut centers = DMatrix::zeros(k, p);
    let first = rng.random_range(0..n);
    centers.row_mut(0).copy_from(&x.row(first));
    let mut best: Vec<f64> = (0..n).map(|i| sq_dist_row_center(x, i, &centers, 0)).collect();
    for h in 1..k {
        let total: f64 = best.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut idx = n - 1;
            for (i, &b) in best.iter().enumerate() {
                acc += b;
                if acc >= target {
                    idx = i;
                    break;
                }
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        centers.row_mut(h).copy_from(&x.row(pick));
        for (i, b) in best.iter_mut().enumerate() {
            *b = b.min(sq_dist_row_center(x, i, &centers, h));
        }
    }
    centers
}

/// k-means with k-means++ seeding; the best of `n_init` runs by inertia.
pub fn kmeans<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    k: usize,
    n_init: usize,
    max_iter: usize,
    rng: &mut R,
) -> Result<KMeansFit> {
    let (n, p) = x.shape();
    if k == 0 || k > n {
        return Err(Error::Parameter(format!("k-means needs 1 <= k <= n, got k = {k}, n = {n}")));
    }
    let mut best: Option<KMeansFit> = None;
    for _ in 0..n_init.max(1) {
        let mut centers = kmeans_pp_seed(x, k, rng);
        let mut labels = vec![0usize; n];
        for _ in 0..max_iter {
            let mut changed = false;
            for (i, label) in labels.iter_mut().enumerate() {
                let h = (0..k)
                    .map(|h| (h, sq_dist_row_center(x, i, &centers, h)))
                    .fold((0, f64::INFINITY), |acc, v| if v.1 < acc.1 { v } else { acc })
                    .0;
                if *label != h {
                    *label = h;
                    changed = true;
                }
            }
            let mut sums = DMatrix::<f64>::zeros(k, p);
            let mut counts = vec![0usize; k];
            for (i, &h) in labels.iter().enumerate() {
                counts[h] += 1;
                for j in 0..p {
                    sums[(h, j)] += x[(i, j)];
                }
            }
            for h in 0..k {
                if counts[h] == 0 {
                    // re-seed an empty cluster at the point farthest from its center
                    let far = (0..n)
                        .map(|i| (i, sq_dist_row_center(x, i, &centers, labels[i])))
                        .fold((0, -1.0), |acc, v| if v.1 > acc.1 { v } else { acc })
                        .0;
                    centers.row_mut(h).copy_from(&x.row(far));
                    labels[far] = h;
                    changed = true;
                } else {
                    for j in 0..p {
                        centers[(h, j)] = sums[(h, j)] / counts[h] as f64;
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let inertia = (0..n).map(|i| sq_dist_row_center(x, i, &centers, labels[i])).sum();
        if best.as_ref().is_none_or(|b| inertia < b.inertia) {
            best = Some(KMeansFit {
                labels,
                centers,
                inertia,
            });
        }
    }
    Ok(best.expect("at least one k-means run"))
}

/// Normalized spectral clustering on a Gaussian affinity `exp(-d^2 / (2 s^2))`,
/// `s` the median off-diagonal distance. The leading `k` eigenvectors of
/// `D^-1/2 A D^-1/2` are row-normalized and clustered by k-means.
pub fn spectral_clustering<R: Rng + ?Sized>(d: &DistanceMatrix, k: usize, rng: &mut R) -> Result<Vec<usize>> {
    let n = d.n();
    if k == 0 {
        return Err(Error::Parameter("k must be >= 1".into()));
    }
    if k == 1 {
        return Ok(vec![0; n]);
    }
    if k > n {
        return Err(Error::Parameter(format!("k = {k} exceeds n = {n}")));
    }
    let mut s = d.median_off_diagonal();
    if !(s > 0.0) {
        s = d.upper_entries().iter().copied().fold(0.0, f64::max).max(1.0);
    }
    let two_s2 = 2.0 * s * s;
    let mut a = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { (-d.get(i, j).powi(2) / two_s2).exp() });
    let deg: Vec<f64> = a.row_iter().map(|r| r.sum().max(1e-300)).collect();
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] /= (deg[i] * deg[j]).sqrt();
        }
    }
    let eig = SymmetricEigen::try_new(a, 1e-12, 10_000)
        .ok_or_else(|| Error::Numerical("eigen-solver did not converge in spectral clustering".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
    let mut emb = DMatrix::zeros(n, k);
    for (c, &idx) in order.iter().take(k).enumerate() {
        emb.set_column(c, &eig.eigenvectors.column(idx));
    }
    for i in 0..n {
        let norm = emb.row(i).norm();
        if norm > 0.0 {
            for c in 0..k {
                emb[(i, c)] /= norm;
            }
        }
    }
    Ok(kmeans(&emb, k, 10, 300, rng)?.labels)
}

/// Diagonal-covariance Gaussian mixture fit.
#[derive(Debug, Clone)]
pub struct GmmFit {
    pub labels: Vec<usize>,
    pub weights: Vec<f64>,
    pub means: DMatrix<f64>,
    pub variances: DMatrix<f64>,
    /// Observed-data log-likelihood after each EM iteration.
    pub loglik_trace: Vec<f64>,
    pub converged: bool,
    pub warnings: Vec<String>,
}

const VARIANCE_FLOOR: f64 = 1e-10;

/// EM for a Gaussian mixture with diagonal covariances, initialized by k-means.
/// Stops at relative log-likelihood change below 1e-8 or after 500 iterations.
pub fn gmm_em_diag<R: Rng + ?Sized>(x: &DataMatrix, k: usize, rng: &mut R) -> Result<GmmFit> {
    let (n, p) = (x.n(), x.p());
    if k == 0 || n <= k {
        return Err(Error::Parameter(format!("GMM needs n > k >= 1, got n = {n}, k = {k}")));
    }
    let xv = x.values();
    let init = kmeans(xv, k, 10, 300, rng)?;
    let mut resp = DMatrix::zeros(n, k);
    for (i, &h) in init.labels.iter().enumerate() {
        resp[(i, h)] = 1.0;
    }
    let mut weights = vec![0.0; k];
    let mut means = DMatrix::zeros(k, p);
    let mut vars = DMatrix::zeros(k, p);
    let mut warnings = Vec::new();
    let mut floored = false;
    let mut trace = Vec::new();
    let mut converged = false;

    for _ in 0..500 {
        // M step
        for h in 0..k {
            let nh: f64 = resp.column(h).sum();
            let nh_safe = nh.max(1e-300);
            weights[h] = nh / n as f64;
            for j in 0..p {
                let m: f64 = (0..n).map(|i| resp[(i, h)] * xv[(i, j)]).sum::<f64>() / nh_safe;
                means[(h, j)] = m;
                let v: f64 = (0..n).map(|i| resp[(i, h)] * (xv[(i, j)] - m).powi(2)).sum::<f64>() / nh_safe;
                if v < VARIANCE_FLOOR {
                    floored = true;
                }
                vars[(h, j)] = v.max(VARIANCE_FLOOR);
            }
        }
        // E step
        let mut ll = 0.0;
        for i in 0..n {
            let logp: Vec<f64> = (0..k)
                .map(|h| {
                    let mut s = weights[h].max(1e-300).ln();
                    for j in 0..p {
                        let v = vars[(h, j)];
                        s -= 0.5 * ((2.0 * PI * v).ln() + (xv[(i, j)] - means[(h, j)]).powi(2) / v);
                    }
                    s
                })
                .collect();
            let mx = logp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = mx + logp.iter().map(|l| (l - mx).exp()).sum::<f64>().ln();
            ll += lse;
            for h in 0..k {
                resp[(i, h)] = (logp[h] - lse).exp();
            }
        }
        let prev = trace.last().copied();
        trace.push(ll);
        if let Some(prev) = prev {
            if ((ll - prev) / prev.abs().max(1e-300)).abs() < 1e-8 {
                converged = true;
                break;
            }
        }
    }
    if floored {
        let msg = "GMM component variance collapsed below 1e-10; floored".to_string();
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let labels = (0..n)
        .map(|i| {
            (0..k)
                .fold((0, f64::NEG_INFINITY), |acc, h| if resp[(i, h)] > acc.1 { (h, resp[(i, h)]) } else { acc })
                .0
        })
        .collect();
    Ok(GmmFit {
        labels,
        weights,
        means,
        variances: vars,
        loglik_trace: trace,
        converged,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distmat::compute_minkowski_distances;
    use crate::evalgen::metrics::ari;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn blobs(n_per: usize, sep: f64, p: usize, seed: u64) -> (DataMatrix, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for h in 0..2 {
            for _ in 0..n_per {
                rows.push((0..p).map(|_| h as f64 * sep + rng.sample::<f64, _>(StandardNormal)).collect());
                labels.push(h);
            }
        }
        (DataMatrix::from_rows(&rows).unwrap(), labels)
    }

    #[test]
    fn spectral_separates_blobs() {
        let (x, truth) = blobs(30, 10.0, 2, 1);
        let d = compute_minkowski_distances(&x, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let labels = spectral_clustering(&d, 2, &mut rng).unwrap();
        assert_eq!(ari(&labels, &truth).unwrap(), 1.0);
        assert_eq!(spectral_clustering(&d, 1, &mut rng).unwrap(), vec![0; 60]);
    }

    #[test]
    fn spectral_is_permutation_equivariant() {
        let (x, truth) = blobs(25, 10.0, 3, 2);
        let n = x.n();
        let perm: Vec<usize> = (0..n).map(|i| (i * 17 + 3) % n).collect();
        let rows: Vec<Vec<f64>> = perm.iter().map(|&i| x.row(i)).collect();
        let xp = DataMatrix::from_rows(&rows).unwrap();
        let truth_p: Vec<usize> = perm.iter().map(|&i| truth[i]).collect();
        let d = compute_minkowski_distances(&xp, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let labels = spectral_clustering(&d, 2, &mut rng).unwrap();
        assert_eq!(ari(&labels, &truth_p).unwrap(), 1.0);
    }

    #[test]
    fn gmm_separates_blobs_and_is_monotone() {
        let (x, truth) = blobs(50, 8.0, 2, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let fit = gmm_em_diag(&x, 2, &mut rng).unwrap();
        assert_eq!(ari(&fit.labels, &truth).unwrap(), 1.0);
        for w in fit.loglik_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * w[0].abs(), "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn gmm_single_component_is_sample_moments() {
        let (x, _) = blobs(20, 0.0, 2, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let fit = gmm_em_diag(&x, 1, &mut rng).unwrap();
        assert!(fit.labels.iter().all(|&l| l == 0));
        let n = x.n() as f64;
        for j in 0..2 {
            let col: Vec<f64> = x.values().column(j).iter().copied().collect();
            let m = col.iter().sum::<f64>() / n;
            let v = col.iter().map(|c| (c - m).powi(2)).sum::<f64>() / n;
            assert!((fit.means[(0, j)] - m).abs() < 1e-12);
            assert!((fit.variances[(0, j)] - v).abs() < 1e-12);
        }
    }

    #[test]
    fn gmm_floors_collapsed_variance() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![if i < 5 { 0.0 } else { 1.0 + i as f64 }]).collect();
        let x = DataMatrix::from_rows(&rows).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let fit = gmm_em_diag(&x, 2, &mut rng).unwrap();
        assert!(!fit.warnings.is_empty());
        assert!(fit.variances.iter().all(|&v| v >= VARIANCE_FLOOR));
    }
}
