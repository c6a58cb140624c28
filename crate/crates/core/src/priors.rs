//! Data-driven prior elicitation.
//!
//! The scale prior is tied to the maximum number of clusters through a packing
//! argument: `k` balls of radius `2 sigma` should fill the minimum-volume
//! enclosing ellipsoid of the data.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::distmat::DataMatrix;
use crate::error::{Error, Result};
use crate::likelihood::ClusterParams;

/// Smallest value used for `alpha - 1` when evaluating the shifted-Gamma prior,
/// whose density diverges at `alpha = 1`.
pub const ALPHA_PRIOR_FLOOR: f64 = 1e-12;

/// Enclosing ellipsoid `{y : (y - center)^T shape (y - center) <= 1}`.
#[derive(Debug, Clone)]
pub struct Ellipsoid {
    pub center: DVector<f64>,
    pub shape: DMatrix<f64>,
    pub volume: f64,
    pub iterations: usize,
    pub converged: bool,
    pub warnings: Vec<String>,
}

impl Ellipsoid {
    /// `(y - center)^T shape (y - center)`.
    pub fn quadratic_form(&self, y: &[f64]) -> f64 {
        let diff = DVector::from_column_slice(y) - &self.center;
        (diff.transpose() * &self.shape * &diff)[(0, 0)]
    }

    pub fn contains(&self, y: &[f64], tol: f64) -> bool {
        self.quadratic_form(y) <= 1.0 + tol
    }
}

/// Volume of the unit ball in `p` dimensions, `pi^(p/2) / Gamma(p/2 + 1)`.
pub fn unit_ball_volume(p: usize) -> f64 {
    let half = p as f64 / 2.0;
    (half * PI.ln() - ln_gamma(half + 1.0)).exp()
}

/// Minimum-volume enclosing ellipsoid by Khachiyan's barycentric coordinate ascent.
///
/// After the iteration the shape is rescaled so every point lies inside, so the
/// result always encloses the data even when `max_iters` is hit.
pub fn mvee(x: &DataMatrix, tol: f64, max_iters: usize) -> Result<Ellipsoid> {
    if !(tol > 0.0) {
        return Err(Error::Parameter(format!("tol must be > 0, got {tol}")));
    }
    let (n, p) = (x.n(), x.p());
    let pts = x.values();
    check_affine_span(pts)?;

    let d = p as f64;
    // lifted points as columns: (p + 1) x n
    let mut lifted = DMatrix::from_element(p + 1, n, 1.0);
    for i in 0..n {
        for c in 0..p {
            lifted[(c, i)] = pts[(i, c)];
        }
    }
    let mut u = DVector::from_element(n, 1.0 / n as f64);
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..max_iters.max(1) {
        iterations = it + 1;
        let scaled = DMatrix::from_fn(p + 1, n, |r, c| lifted[(r, c)] * u[c]);
        let moment = &scaled * lifted.transpose();
        let inv = moment
            .cholesky()
            .ok_or_else(|| {
                Error::Degenerate("moment matrix lost positive definiteness; add jitter".into())
            })?
            .inverse();
        let tmp = &inv * &lifted;
        let m: Vec<f64> = (0..n).map(|i| lifted.column(i).dot(&tmp.column(i))).collect();
        let (j_up, m_max) = (0..n).fold((0, f64::NEG_INFINITY), |acc, i| if m[i] > acc.1 { (i, m[i]) } else { acc });
        // away step (Todd-Yildirim): shrink the weight of the deepest supported point
        let (j_down, m_min) = (0..n)
            .filter(|&i| u[i] > 0.0)
            .fold((0, f64::INFINITY), |acc, i| if m[i] < acc.1 { (i, m[i]) } else { acc });
        let (j, step) = if d + 1.0 - m_min > m_max - d - 1.0 {
            let raw = (m_min - d - 1.0) / ((d + 1.0) * (m_min - 1.0));
            (j_down, raw.max(-u[j_down] / (1.0 - u[j_down])))
        } else {
            (j_up, (m_max - d - 1.0) / ((d + 1.0) * (m_max - 1.0)))
        };
        let mut next = &u * (1.0 - step);
        next[j] += step;
        let err = (&next - &u).norm();
        u = next;
        if err < tol {
            converged = true;
            break;
        }
    }

    let center = pts.transpose() * &u;
    let mut weighted = DMatrix::zeros(p, p);
    for i in 0..n {
        let row = pts.row(i).transpose();
        weighted += &row * row.transpose() * u[i];
    }
    let scatter = weighted - &center * center.transpose();
    let mut shape = scatter
        .cholesky()
        .ok_or_else(|| Error::Degenerate("weighted scatter matrix is singular".into()))?
        .inverse()
        / d;
    let worst = (0..n)
        .map(|i| {
            let diff = pts.row(i).transpose() - &center;
            (diff.transpose() * &shape * &diff)[(0, 0)]
        })
        .fold(0.0_f64, f64::max);
    if worst > 1.0 {
        shape /= worst;
    }
    let det = shape.determinant();
    let volume = unit_ball_volume(p) / det.sqrt();
    let mut warnings = Vec::new();
    if !converged {
        let msg = format!("MVEE did not converge in {max_iters} iterations; using best iterate");
        log::warn!("{msg}");
        warnings.push(msg);
    }
    Ok(Ellipsoid {
        center,
        shape,
        volume,
        iterations,
        converged,
        warnings,
    })
}

/// Default tolerance and iteration cap for [`mvee`].
pub fn mvee_default(x: &DataMatrix) -> Result<Ellipsoid> {
    mvee(x, 1e-7, 10 * x.n())
}

fn check_affine_span(pts: &DMatrix<f64>) -> Result<()> {
    let (n, p) = pts.shape();
    if n <= p {
        return Err(Error::Degenerate(format!(
            "{n} points cannot span {p} dimensions; reduce dimension (PCA) or add points"
        )));
    }
    let mean = pts.row_mean();
    let mut centered = pts.clone();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    let cov = centered.transpose() * &centered / n as f64;
    let eig = SymmetricEigen::new(cov);
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(max > 0.0) || min <= 1e-12 * max {
        return Err(Error::Degenerate(
            "points do not affinely span the space (rank-deficient); add jitter or reduce dimension"
                .into(),
        ));
    }
    Ok(())
}

/// Scale of the Inverse-Gamma prior on `sigma_h`: `0.5 * (vol / (k M))^(1/p)`.
pub fn elicit_beta_sigma(volume: f64, k: usize, p: usize) -> Result<f64> {
    if !(volume > 0.0) {
        return Err(Error::Parameter(format!("volume must be > 0, got {volume}")));
    }
    if k == 0 || p == 0 {
        return Err(Error::Parameter("k and p must be >= 1".into()));
    }
    let m = unit_ball_volume(p);
    Ok(0.5 * (volume / (k as f64 * m)).powf(1.0 / p as f64))
}

/// Hyperparameters of the cluster-level priors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub k: usize,
    /// Scale of the Inverse-Gamma prior on sigma (its prior mean, since shape is 2).
    pub beta_sigma: f64,
    /// `alpha - 1 ~ Gamma(shape, rate)`.
    pub alpha_shape: f64,
    pub alpha_rate: f64,
    pub sigma_shape: f64,
    pub dirichlet_conc: f64,
}

impl PriorConfig {
    pub fn new(k: usize, beta_sigma: f64) -> Result<Self> {
        let cfg = Self {
            k,
            beta_sigma,
            alpha_shape: 0.5,
            alpha_rate: 1.0,
            sigma_shape: 2.0,
            dirichlet_conc: 1.0 / k.max(1) as f64,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_dirichlet_conc(mut self, conc: f64) -> Result<Self> {
        self.dirichlet_conc = conc;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::Parameter("k must be >= 1".into()));
        }
        for (name, v) in [
            ("beta_sigma", self.beta_sigma),
            ("alpha_shape", self.alpha_shape),
            ("alpha_rate", self.alpha_rate),
            ("sigma_shape", self.sigma_shape),
            ("dirichlet_conc", self.dirichlet_conc),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Parameter(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }

    /// Log prior of one shape parameter under the shifted Gamma prior.
    pub fn alpha_log_density(&self, alpha: f64) -> f64 {
        if !(alpha >= 1.0) {
            return f64::NEG_INFINITY;
        }
        gamma_log_pdf((alpha - 1.0).max(ALPHA_PRIOR_FLOOR), self.alpha_shape, self.alpha_rate)
    }

    pub fn sigma_log_density(&self, sigma: f64) -> f64 {
        inv_gamma_log_pdf(sigma, self.sigma_shape, self.beta_sigma)
    }
}

/// Gamma log-density with shape/rate parametrization.
pub fn gamma_log_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NEG_INFINITY;
    }
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

/// Inverse-Gamma log-density with shape/scale parametrization.
pub fn inv_gamma_log_pdf(x: f64, shape: f64, scale: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NEG_INFINITY;
    }
    shape * scale.ln() - ln_gamma(shape) - (shape + 1.0) * x.ln() - scale / x
}

/// Sum over clusters of the shifted-Gamma log prior on `alpha_h` and the
/// Inverse-Gamma log prior on `sigma_h`. Values outside the support give `-inf`.
pub fn prior_log_densities(params: &ClusterParams, cfg: &PriorConfig) -> f64 {
    params
        .alpha
        .iter()
        .zip(&params.sigma)
        .map(|(&a, &s)| cfg.alpha_log_density(a) + cfg.sigma_log_density(s))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_volumes() {
        assert!((unit_ball_volume(1) - 2.0).abs() < 1e-12);
        assert!((unit_ball_volume(2) - PI).abs() < 1e-12);
        assert!((unit_ball_volume(3) - 4.0 * PI / 3.0).abs() < 1e-12);
    }

    #[test]
    fn mvee_two_points_on_a_line() {
        let x = DataMatrix::from_rows(&[vec![0.0], vec![2.0]]).unwrap();
        let e = mvee_default(&x).unwrap();
        assert!((e.center[0] - 1.0).abs() < 1e-9);
        assert!((e.volume - 2.0).abs() < 1e-6, "{}", e.volume);
    }

    #[test]
    fn mvee_identical_points_is_degenerate() {
        let x = DataMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!(matches!(mvee_default(&x), Err(Error::Degenerate(_))));
    }

    #[test]
    fn mvee_collinear_is_degenerate() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let x = DataMatrix::from_rows(&rows).unwrap();
        assert!(matches!(mvee_default(&x), Err(Error::Degenerate(_))));
    }

    #[test]
    fn mvee_circle_is_unit_disk() {
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / 200.0;
                vec![t.cos(), t.sin()]
            })
            .collect();
        let x = DataMatrix::from_rows(&rows).unwrap();
        let e = mvee_default(&x).unwrap();
        assert!((e.volume / PI - 1.0).abs() < 0.01, "{}", e.volume);
        for r in &rows {
            assert!(e.contains(r, 1e-9));
        }
    }

    #[test]
    fn beta_sigma_plug_in() {
        assert!((elicit_beta_sigma(2.0, 4, 1).unwrap() - 0.125).abs() < 1e-15);
        assert!((elicit_beta_sigma(PI, 1, 2).unwrap() - 0.5).abs() < 1e-15);
        let a = elicit_beta_sigma(3.0, 2, 1).unwrap();
        let b = elicit_beta_sigma(6.0, 2, 1).unwrap();
        assert!((b - 2.0 * a).abs() < 1e-15);
        assert!(elicit_beta_sigma(0.0, 2, 1).is_err());
    }

    #[test]
    fn prior_support_and_boundary() {
        let cfg = PriorConfig::new(2, 1.0).unwrap();
        let below = ClusterParams {
            alpha: vec![0.5, 2.0],
            sigma: vec![1.0, 1.0],
        };
        assert_eq!(prior_log_densities(&below, &cfg), f64::NEG_INFINITY);
        let at_one = cfg.alpha_log_density(1.0);
        assert!(at_one.is_finite());
        assert_eq!(at_one, gamma_log_pdf(ALPHA_PRIOR_FLOOR, 0.5, 1.0));
        assert!(at_one > cfg.alpha_log_density(1.001));
    }

    #[test]
    fn inverse_gamma_at_its_scale() {
        let beta = 0.7_f64;
        let v = inv_gamma_log_pdf(beta, 2.0, beta);
        // 2 ln b - ln Gamma(2) - 3 ln b - 1
        assert!((v - (-beta.ln() - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn default_concentration_is_one_over_k() {
        let cfg = PriorConfig::new(20, 1.0).unwrap();
        assert!((cfg.dirichlet_conc - 0.05).abs() < 1e-15);
    }
}
