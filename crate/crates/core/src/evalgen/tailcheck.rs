//! Numeric checks of the distance tail bounds and of the concentration of scaled
//! within-cluster distances around a positive mode.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::generators::{gen_laplace_mixture, Family, GeneratorSpec};
use crate::distmat::compute_minkowski_distances;
use crate::error::{Error, Result};

/// Adaptive Simpson quadrature of `f` on `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, max_depth: usize) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: usize,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = simpson(fa, fm, fb, a, b);
    recurse(f, a, b, fa, fm, fb, whole, tol, max_depth)
}

/// `pr(x >= t)` for `x ~ Gamma(alpha, 1)` by quadrature of the density over
/// `[t, t + 60 + 20 alpha]`, beyond which the remaining mass is negligible.
pub fn gamma_upper_tail(alpha: f64, t: f64) -> f64 {
    let lg = ln_gamma(alpha);
    let dens = |x: f64| {
        if x <= 0.0 {
            if alpha == 1.0 {
                1.0
            } else {
                0.0
            }
        } else {
            ((alpha - 1.0) * x.ln() - x - lg).exp()
        }
    };
    let upper = t.max(0.0) + 60.0 + 20.0 * alpha;
    // split at the mode so each piece is smooth and unimodal
    let mode = alpha - 1.0;
    let lo = t.max(0.0);
    if mode > lo && mode < upper {
        adaptive_simpson(&dens, lo, mode, 1e-14, 40) + adaptive_simpson(&dens, mode, upper, 1e-14, 40)
    } else {
        adaptive_simpson(&dens, lo, upper, 1e-14, 40)
    }
}

/// Chernoff-type envelope `alpha^-alpha e^alpha t^alpha e^-t` for the scaled tail.
pub fn gamma_tail_bound(alpha: f64, t: f64) -> f64 {
    (alpha * (1.0 - alpha.ln()) + alpha * t.ln() - t).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundStatus {
    /// Bound is informative (< 1) and satisfied.
    Holds,
    /// Bound is at least 1, so it holds trivially.
    Vacuous,
    /// The tail exceeds the bound.
    Violated,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailPoint {
    pub alpha: f64,
    pub t: f64,
    pub tail: f64,
    pub bound: f64,
    pub status: BoundStatus,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TailReport {
    pub points: Vec<TailPoint>,
}

impl TailReport {
    pub fn violations(&self) -> impl Iterator<Item = &TailPoint> {
        self.points.iter().filter(|p| p.status == BoundStatus::Violated)
    }

    pub fn all_hold(&self) -> bool {
        self.violations().next().is_none()
    }
}

fn classify(tail: f64, bound: f64) -> BoundStatus {
    if tail > bound * (1.0 + 1e-12) {
        BoundStatus::Violated
    } else if bound >= 1.0 {
        BoundStatus::Vacuous
    } else {
        BoundStatus::Holds
    }
}

/// Compare exact Gamma upper tails with the envelope at every `(alpha, t)` pair.
pub fn tail_bound_check(alpha_grid: &[f64], t_grid: &[f64]) -> Result<TailReport> {
    if alpha_grid.is_empty() || t_grid.is_empty() {
        return Err(Error::Parameter("tail check grids must be nonempty".into()));
    }
    if alpha_grid.iter().any(|&a| !(a >= 1.0)) || t_grid.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::Parameter("need alpha >= 1 and t > 0".into()));
    }
    let mut points = Vec::with_capacity(alpha_grid.len() * t_grid.len());
    for &alpha in alpha_grid {
        for &t in t_grid {
            let tail = gamma_upper_tail(alpha, t);
            let bound = gamma_tail_bound(alpha, t);
            points.push(TailPoint {
                alpha,
                t,
                tail,
                bound,
                status: classify(tail, bound),
            });
        }
    }
    Ok(TailReport { points })
}

/// Constants of the sub-exponential distance tail bound. `nu`, `b` describe the
/// moment generating function of a coordinate, `m1`, `m2` its tail, `eta` the
/// scaling exponent in `p` and `q` the Minkowski order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailBoundParams {
    pub nu: f64,
    pub b: f64,
    pub eta: f64,
    pub q: f64,
    pub m1: f64,
    pub m2: f64,
}

fn centered_coordinates(spec: &GeneratorSpec, rng: &mut ChaCha8Rng) -> Result<(Vec<Vec<usize>>, Vec<f64>, crate::distmat::DataMatrix)> {
    let g = gen_laplace_mixture(spec, rng)?;
    let k = spec.components();
    let mut members = vec![Vec::new(); k];
    for (i, &h) in g.labels.iter().enumerate() {
        members[h].push(i);
    }
    let mut centered = Vec::new();
    for m in &members {
        if m.is_empty() {
            continue;
        }
        for j in 0..spec.p {
            let mean = m.iter().map(|&i| g.data.values()[(i, j)]).sum::<f64>() / m.len() as f64;
            centered.extend(m.iter().map(|&i| g.data.values()[(i, j)] - mean));
        }
    }
    Ok((members, centered, g.data))
}

/// Fit the tail constants from within-cluster centered coordinates of a Laplace
/// mixture. `nu^2` is the variance of coordinate differences; `1/b` is the
/// largest grid value of `s` at which the empirical log-MGF of the centered
/// coordinate stays below `nu^2 s^2 / 2`; `m2` is the inverse mean absolute
/// deviation and `m1` the smallest multiplier covering the empirical tail.
pub fn fit_tail_params(spec: &GeneratorSpec, eta: f64, q: f64) -> Result<TailBoundParams> {
    if !matches!(spec.family, Family::LaplaceMixture { .. }) {
        return Err(Error::Parameter("tail constants are fitted on Laplace mixtures".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (_, centered, _) = centered_coordinates(spec, &mut rng)?;
    let m = centered.len() as f64;
    let var = centered.iter().map(|x| x * x).sum::<f64>() / m;
    let nu2 = 2.0 * var;
    let mut s_max = 0.0;
    for step in 1..=400 {
        let s = step as f64 * 0.01 / var.sqrt();
        let mgf_pos = centered.iter().map(|x| (s * x).exp()).sum::<f64>() / m;
        let mgf_neg = centered.iter().map(|x| (-s * x).exp()).sum::<f64>() / m;
        if mgf_pos.ln().max(mgf_neg.ln()) > nu2 * s * s / 2.0 {
            break;
        }
        s_max = s;
    }
    if s_max == 0.0 {
        return Err(Error::Numerical("could not fit the sub-exponential scale".into()));
    }
    let mad = centered.iter().map(|x| x.abs()).sum::<f64>() / m;
    let m2 = 1.0 / mad;
    let mut abs: Vec<f64> = centered.iter().map(|x| x.abs()).collect();
    abs.sort_by(f64::total_cmp);
    let mut m1: f64 = 1.0;
    for (r, &a) in abs.iter().enumerate() {
        let tail = (abs.len() - r) as f64 / m;
        m1 = m1.max(tail * (m2 * a).exp());
    }
    Ok(TailBoundParams {
        nu: nu2.sqrt(),
        b: 1.0 / s_max,
        eta,
        q,
        m1,
        m2,
    })
}

/// Empirical within-cluster distance tails against
/// `pr(d > p^eta u) <= 2p exp(-u p^(eta - 1/q) / (2b))` for `u > 2 nu^2 p^(1/q - eta) / b`.
/// Points at or below the validity threshold are reported as vacuous.
pub fn empirical_tail_check(spec: &GeneratorSpec, params: &TailBoundParams) -> Result<TailReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(1));
    let (members, _, data) = centered_coordinates(spec, &mut rng)?;
    let d = compute_minkowski_distances(&data, params.q)?;
    let mut within = Vec::new();
    for m in &members {
        for (a, &i) in m.iter().enumerate() {
            for &j in &m[a + 1..] {
                within.push(d.get(i, j));
            }
        }
    }
    if within.is_empty() {
        return Err(Error::Parameter("no within-cluster pairs".into()));
    }
    within.sort_by(f64::total_cmp);
    let p = spec.p as f64;
    let scale = p.powf(params.eta);
    let expo = p.powf(params.eta - 1.0 / params.q);
    let threshold = 2.0 * params.nu * params.nu * p.powf(1.0 / params.q - params.eta) / params.b;
    let u_max = within.last().copied().unwrap_or(0.0) / scale * 1.5 + threshold;
    let mut points = Vec::new();
    for step in 1..=100 {
        let u = u_max * step as f64 / 100.0;
        let cut = u * scale;
        let above = within.len() - within.partition_point(|&x| x <= cut);
        let tail = above as f64 / within.len() as f64;
        let bound = 2.0 * p * (-u * expo / (2.0 * params.b)).exp();
        let status = if u <= threshold && tail <= bound {
            BoundStatus::Vacuous
        } else if u <= threshold {
            // outside the stated range the bound makes no claim
            BoundStatus::Vacuous
        } else {
            classify(tail, bound)
        };
        points.push(TailPoint {
            alpha: f64::NAN,
            t: u,
            tail,
            bound,
            status,
        });
    }
    Ok(TailReport { points })
}

/// Histogram mode and medians of scaled distances at one dimension.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeRow {
    pub p: usize,
    pub mode: f64,
    pub within_median: f64,
    pub cross_median: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeReport {
    pub rows: Vec<ModeRow>,
}

/// Laplace coordinate scale giving unit-variance coordinate differences.
pub const MODE_CHECK_LAPLACE_SCALE: f64 = 0.5;
const MODE_BIN_WIDTH: f64 = 0.05;

fn histogram_mode(values: &[f64], width: f64) -> f64 {
    let max = values.iter().copied().fold(0.0, f64::max);
    let bins = (max / width).floor() as usize + 1;
    let mut counts = vec![0usize; bins];
    for &v in values {
        counts[((v / width).floor() as usize).min(bins - 1)] += 1;
    }
    let best = counts
        .iter()
        .enumerate()
        .fold((0, 0), |acc, (b, &c)| if c > acc.1 { (b, c) } else { acc })
        .0;
    (best as f64 + 0.5) * width
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// For each `p`, draw a two-component Laplace mixture (200 points per
/// component, locations 0 and 3 in every coordinate), scale Euclidean distances
/// by `sqrt(p)` and report the within-cluster histogram mode together with
/// within- and cross-cluster medians.
pub fn mode_concentration_check(p_list: &[usize], seed: u64) -> Result<ModeReport> {
    if p_list.is_empty() {
        return Err(Error::Parameter("p_list must be nonempty".into()));
    }
    let mut rows = Vec::new();
    for &p in p_list {
        if p == 0 {
            return Err(Error::Parameter("p must be >= 1".into()));
        }
        let spec = GeneratorSpec {
            family: Family::LaplaceMixture {
                locations: vec![vec![0.0; p], vec![3.0; p]],
                scales: vec![MODE_CHECK_LAPLACE_SCALE; 2],
            },
            weights: vec![0.5, 0.5],
            n: 400,
            p,
            seed: seed.wrapping_add(p as u64),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let g = gen_laplace_mixture(&spec, &mut rng)?;
        let d = compute_minkowski_distances(&g.data, 2.0)?;
        let sigma = (p as f64).sqrt();
        let (mut within, mut cross) = (Vec::new(), Vec::new());
        for i in 0..spec.n {
            for j in (i + 1)..spec.n {
                let v = d.get(i, j) / sigma;
                if g.labels[i] == g.labels[j] {
                    within.push(v);
                } else {
                    cross.push(v);
                }
            }
        }
        if within.is_empty() || cross.is_empty() {
            return Err(Error::Degenerate("a mixture component is empty".into()));
        }
        rows.push(ModeRow {
            p,
            mode: histogram_mode(&within, MODE_BIN_WIDTH),
            within_median: median(&mut within),
            cross_median: median(&mut cross),
        });
    }
    Ok(ModeReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::function::gamma::gamma_ur;

    #[test]
    fn simpson_polynomial_and_exponential() {
        let v = adaptive_simpson(&|x: f64| x * x * x, 0.0, 2.0, 1e-12, 30);
        assert!((v - 4.0).abs() < 1e-12);
        let e = adaptive_simpson(&|x: f64| (-x).exp(), 0.0, 50.0, 1e-13, 40);
        assert!((e - (1.0 - (-50.0f64).exp())).abs() < 1e-10);
    }

    #[test]
    fn quadrature_tail_matches_incomplete_gamma() {
        for &alpha in &[1.0, 1.5, 3.0] {
            for &t in &[0.5, 1.0, 4.0, 12.0, 20.0] {
                let q = gamma_upper_tail(alpha, t);
                let oracle = gamma_ur(alpha, t);
                assert!((q - oracle).abs() < 1e-10 * oracle.max(1e-300) + 1e-13, "alpha {alpha} t {t}: {q} vs {oracle}");
            }
        }
    }

    #[test]
    fn exponential_case_holds_above_inverse_e() {
        // exact tail e^-t versus e t e^-t: holds exactly when t >= 1/e
        let t_grid: Vec<f64> = (0..100).map(|i| (-1.0f64).exp() + i as f64 * 0.2).collect();
        let report = tail_bound_check(&[1.0], &t_grid).unwrap();
        assert!(report.all_hold());
        for p in &report.points {
            assert!((p.tail - (-p.t).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn envelope_holds_beyond_the_shape() {
        // the optimizing Chernoff parameter is admissible only for t >= alpha
        for &alpha in &[1.5, 3.0] {
            let t_grid: Vec<f64> = (0..100).map(|i| alpha + i as f64 * 0.17).collect();
            assert!(tail_bound_check(&[alpha], &t_grid).unwrap().all_hold());
        }
    }

    #[test]
    fn envelope_fails_well_below_the_shape() {
        let report = tail_bound_check(&[3.0], &[0.5]).unwrap();
        assert_eq!(report.points[0].status, BoundStatus::Violated);
        assert!(report.points[0].bound < 1.0);
    }

    #[test]
    fn vacuous_points_are_flagged() {
        let report = tail_bound_check(&[1.0], &[1.0]).unwrap();
        assert_eq!(report.points[0].status, BoundStatus::Vacuous);
        assert!(tail_bound_check(&[], &[1.0]).is_err());
        assert!(tail_bound_check(&[0.5], &[1.0]).is_err());
    }

    fn laplace_spec(p: usize) -> GeneratorSpec {
        GeneratorSpec {
            family: Family::LaplaceMixture {
                locations: vec![vec![0.0; p], vec![5.0; p]],
                scales: vec![0.5, 0.5],
            },
            weights: vec![0.5, 0.5],
            n: 300,
            p,
            seed: 11,
        }
    }

    #[test]
    fn fitted_constants_are_sensible() {
        let params = fit_tail_params(&laplace_spec(3), 0.5, 2.0).unwrap();
        // Laplace(0.5): variance 0.5, mean absolute deviation 0.5
        assert!((params.nu * params.nu - 1.0).abs() < 0.15, "{params:?}");
        assert!((params.m2 - 2.0).abs() < 0.2, "{params:?}");
        assert!(params.b > 0.0 && params.m1 >= 1.0);
    }

    #[test]
    fn empirical_distance_tail_below_bound() {
        for &(p, q) in &[(2usize, 1.0), (5, 2.0), (10, 2.0)] {
            let spec = laplace_spec(p);
            let params = fit_tail_params(&spec, 0.5, q).unwrap();
            let report = empirical_tail_check(&spec, &params).unwrap();
            assert!(report.all_hold(), "p {p} q {q}: {:?}", report.violations().next());
        }
    }

    #[test]
    fn mode_moves_toward_one() {
        let report = mode_concentration_check(&[2, 5, 10], 3).unwrap();
        let modes: Vec<f64> = report.rows.iter().map(|r| r.mode).collect();
        assert!((0.6..=1.4).contains(&modes[2]), "{modes:?}");
        assert!(modes[0] < modes[2], "{modes:?}");
        for r in &report.rows {
            assert!(r.within_median < r.cross_median);
        }
    }
}
