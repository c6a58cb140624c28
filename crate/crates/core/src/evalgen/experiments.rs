//! Seeded desk-scale experiment grids: skew-Gaussian mixtures across dimensions
//! and von Mises-Fisher mixtures on the circle across separations, each scored
//! by ARI against the generating labels.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::baselines::{gmm_em_diag, spectral_clustering};
use super::generators::{generate, Family, GeneratorSpec};
use super::metrics::ari;
use crate::distmat::{
    compute_arccos_distances, compute_minkowski_distances, compute_subspace_distances, solve_self_expression,
    DataMatrix, DistanceMatrix, SubspaceEmbeddingConfig,
};
use crate::error::{Error, Result};
use crate::priors::{elicit_beta_sigma, mvee_default, PriorConfig};
use crate::sampler::{run_chain, HmcConfig, Init, Trace};
use crate::summaries::point_estimate_vi;

/// Prior scale from the enclosing-ellipsoid volume of the data.
pub fn beta_sigma_from_data(x: &DataMatrix, k: usize) -> Result<f64> {
    let e = mvee_default(x)?;
    elicit_beta_sigma(e.volume, k, x.p())
}

/// Prior scale when only distances are available: a quarter of the median
/// off-diagonal distance, since a cluster's diameter is about four scales.
pub fn beta_sigma_from_distances(d: &DistanceMatrix) -> f64 {
    let m = d.median_off_diagonal();
    if m > 0.0 {
        m / 4.0
    } else {
        1.0
    }
}

/// Run one chain and return the VI point estimate with the trace.
pub fn run_bdc(d: &DistanceMatrix, prior: &PriorConfig, cfg: &HmcConfig) -> Result<(Vec<usize>, Trace)> {
    let trace = run_chain(d, cfg, prior, &Init::Spectral)?;
    let point = point_estimate_vi(&trace)?;
    Ok((point.labels, trace))
}

/// Mean with a two-sided 95% Student-t interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        if xs.len() < 2 {
            return Self { mean, lo: mean, hi: mean };
        }
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let t = StudentsT::new(0.0, 1.0, n - 1.0)
            .expect("valid degrees of freedom")
            .inverse_cdf(0.975);
        let half = t * sd / n.sqrt();
        Self {
            mean,
            lo: mean - half,
            hi: mean + half,
        }
    }
}

impl std::fmt::Display for Interval {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.2} ({:.2}, {:.2})", self.mean, self.lo, self.hi)
    }
}

/// One row of a results table: a setting and per-method ARI scores.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableRow {
    pub setting: String,
    pub methods: Vec<String>,
    pub scores: Vec<Vec<f64>>,
}

impl TableRow {
    pub fn interval(&self, method: &str) -> Option<Interval> {
        self.methods
            .iter()
            .position(|m| m == method)
            .map(|i| Interval::of(&self.scores[i]))
    }
}

/// Write rows as CSV: the setting column followed by mean, lower and upper
/// bound columns for each method.
pub fn write_table_csv(rows: &[TableRow], setting_name: &str, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    if let Some(first) = rows.first() {
        out.push_str(setting_name);
        for m in &first.methods {
            out.push_str(&format!(",{m}_mean,{m}_lo,{m}_hi"));
        }
        out.push('\n');
    }
    for r in rows {
        out.push_str(&r.setting);
        for m in &r.methods {
            let iv = r.interval(m).expect("method present");
            out.push_str(&format!(",{:.4},{:.4},{:.4}", iv.mean, iv.lo, iv.hi));
        }
        out.push('\n');
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(out.as_bytes()))
        .map_err(|e| Error::io(path, e))
}

/// Shared settings for the experiment grids.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub repetitions: usize,
    pub seed: u64,
    pub n: usize,
    pub sampler: HmcConfig,
}

impl ExperimentConfig {
    fn rep_seed(&self, setting: usize, rep: usize) -> u64 {
        self.seed
            .wrapping_mul(1_000_003)
            .wrapping_add((setting as u64) << 20)
            .wrapping_add(rep as u64)
    }
}

/// Score every repetition in parallel; results keep repetition order.
fn repeat<F>(cfg: &ExperimentConfig, score: F) -> Result<(Vec<f64>, Vec<f64>)>
where
    F: Fn(usize) -> Result<(f64, f64)> + Sync + Send,
{
    let pairs: Vec<(f64, f64)> = (0..cfg.repetitions).into_par_iter().map(score).collect::<Result<_>>()?;
    Ok(pairs.into_iter().unzip())
}

/// Skew-Gaussian mixture with locations (0, 2) and skewness (8, 10).
pub fn skew_spec(n: usize, p: usize, seed: u64) -> GeneratorSpec {
    GeneratorSpec {
        family: Family::SkewNormalMixture {
            locations: vec![0.0, 2.0],
            skewness: vec![8.0, 10.0],
            scale: 1.0,
        },
        weights: vec![0.5, 0.5],
        n,
        p,
        seed,
    }
}

/// Scores of BDC (Euclidean distance, k = 2) and the diagonal GMM on one data set.
pub fn score_skew(spec: &GeneratorSpec, sampler: &HmcConfig) -> Result<(f64, f64)> {
    let g = generate(spec)?;
    let d = compute_minkowski_distances(&g.data, 2.0)?;
    let prior = PriorConfig::new(2, beta_sigma_from_data(&g.data, 2)?)?;
    let mut cfg = sampler.clone();
    cfg.seed = spec.seed;
    let (labels, _) = run_bdc(&d, &prior, &cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x9e37_79b9);
    let gmm = gmm_em_diag(&g.data, 2, &mut rng)?;
    Ok((ari(&labels, &g.labels)?, ari(&gmm.labels, &g.labels)?))
}

/// Skew-Gaussian grid over dimensions.
pub fn skew_table(p_list: &[usize], cfg: &ExperimentConfig) -> Result<Vec<TableRow>> {
    let mut rows = Vec::new();
    for (s, &p) in p_list.iter().enumerate() {
        let (bdc, gmm) = repeat(cfg, |rep| score_skew(&skew_spec(cfg.n, p, cfg.rep_seed(s, rep)), &cfg.sampler))?;
        rows.push(TableRow {
            setting: p.to_string(),
            methods: vec!["bdc".into(), "gmm".into()],
            scores: vec![bdc, gmm],
        });
    }
    Ok(rows)
}

/// How the two concentration values of the spherical experiment are read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConcentrationReading {
    /// As von Mises-Fisher concentrations.
    Concentration,
    /// As angular standard deviations, i.e. concentrations `1 / value^2`.
    AngularSd,
}

/// Two-component circular mixture with `mu_1 = (1, 0)` and `mu_2` at angle `arc`.
pub fn vmf_spec(n: usize, arc: f64, reading: ConcentrationReading, seed: u64) -> GeneratorSpec {
    let raw = [0.25, 0.3];
    let concentrations = match reading {
        ConcentrationReading::Concentration => raw.to_vec(),
        ConcentrationReading::AngularSd => raw.iter().map(|s| 1.0 / (s * s)).collect(),
    };
    GeneratorSpec {
        family: Family::VmfMixture {
            means: vec![vec![1.0, 0.0], vec![arc.cos(), arc.sin()]],
            concentrations,
        },
        weights: vec![0.5, 0.5],
        n,
        p: 2,
        seed,
    }
}

/// Scores of BDC (arccos distance, k = 2) and the diagonal GMM on one data set.
pub fn score_vmf(spec: &GeneratorSpec, sampler: &HmcConfig) -> Result<(f64, f64)> {
    let g = generate(spec)?;
    let d = compute_arccos_distances(&g.data)?;
    // the enclosing ellipse of points on a circle is the unit disk regardless of
    // spread, so the prior scale comes from the distances themselves
    let prior = PriorConfig::new(2, beta_sigma_from_distances(&d))?;
    let mut cfg = sampler.clone();
    cfg.seed = spec.seed;
    let (labels, _) = run_bdc(&d, &prior, &cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x9e37_79b9);
    let gmm = gmm_em_diag(&g.data, 2, &mut rng)?;
    Ok((ari(&labels, &g.labels)?, ari(&gmm.labels, &g.labels)?))
}

/// Arc lengths of the spherical grid.
pub const VMF_ARCS: [f64; 4] = [2.0, 1.70, 0.76, 0.61];

/// Spherical grid over separations.
pub fn vmf_table(arcs: &[f64], reading: ConcentrationReading, cfg: &ExperimentConfig) -> Result<Vec<TableRow>> {
    let mut rows = Vec::new();
    for (s, &arc) in arcs.iter().enumerate() {
        let (bdc, gmm) = repeat(cfg, |rep| {
            score_vmf(&vmf_spec(cfg.n, arc, reading, cfg.rep_seed(s, rep)), &cfg.sampler)
        })?;
        rows.push(TableRow {
            setting: format!("{arc:.2}"),
            methods: vec!["bdc".into(), "gmm".into()],
            scores: vec![bdc, gmm],
        });
    }
    Ok(rows)
}

/// Two random 3-dimensional subspaces of `R^20` with 100 points each.
pub fn subspace_spec(seed: u64) -> GeneratorSpec {
    GeneratorSpec {
        family: Family::SubspaceMixture {
            dims: vec![3, 3],
            noise_sd: 0.05,
            coef_sd: 1.0,
        },
        weights: vec![0.5, 0.5],
        n: 200,
        p: 20,
        seed,
    }
}

/// BDC on subspace distances and spectral clustering on Euclidean distances.
pub fn score_subspace(spec: &GeneratorSpec, sampler: &HmcConfig, embed: &SubspaceEmbeddingConfig) -> Result<(f64, f64)> {
    let g = generate(spec)?;
    let w = solve_self_expression(&g.data, embed)?;
    let d = compute_subspace_distances(&w.values)?;
    let prior = PriorConfig::new(2, beta_sigma_from_distances(&d))?;
    let mut cfg = sampler.clone();
    cfg.seed = spec.seed;
    let (labels, _) = run_bdc(&d, &prior, &cfg)?;
    let euclid = compute_minkowski_distances(&g.data, 2.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x9e37_79b9);
    let sc = spectral_clustering(&euclid, 2, &mut rng)?;
    Ok((ari(&labels, &g.labels)?, ari(&sc, &g.labels)?))
}

/// Two spherical Gaussian blobs in `R^p`, centred at the origin and at
/// `(sep, ..., sep)`, with 50 points each.
pub fn blobs_spec(sep: f64, p: usize, seed: u64) -> GeneratorSpec {
    GeneratorSpec {
        family: Family::SkewNormalMixture {
            locations: vec![0.0, sep],
            skewness: vec![0.0, 0.0],
            scale: 1.0,
        },
        weights: vec![0.5, 0.5],
        n: 100,
        p,
        seed,
    }
}

/// Over-fitted run on two blobs: the fraction of retained draws with exactly
/// two clusters holding more than `min_size` members.
pub fn emptying_fraction(
    spec: &GeneratorSpec,
    k: usize,
    dirichlet_conc: f64,
    min_size: usize,
    sampler: &HmcConfig,
) -> Result<f64> {
    let g = generate(spec)?;
    let d = compute_minkowski_distances(&g.data, 2.0)?;
    let prior = PriorConfig::new(k, beta_sigma_from_data(&g.data, k)?)?.with_dirichlet_conc(dirichlet_conc)?;
    let mut cfg = sampler.clone();
    cfg.seed = spec.seed;
    let trace = run_chain(&d, &cfg, &prior, &Init::Spectral)?;
    let occ = trace.occupied_counts(min_size);
    Ok(occ.iter().filter(|&&c| c == 2).count() as f64 / occ.len().max(1) as f64)
}

/// Angle between two unit vectors in the plane, used to label separations.
pub fn arc_between(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] * b[0] + a[1] * b[1]).clamp(-1.0, 1.0).acos().min(PI)
}
