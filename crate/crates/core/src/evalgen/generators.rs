//! Synthetic mixture generators used by the experiments.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::distmat::DataMatrix;
use crate::error::{Error, Result};

/// Mixture family and its per-component parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// Every coordinate i.i.d. skew-normal `SN(location_h, scale, skewness_h)`.
    SkewNormalMixture {
        locations: Vec<f64>,
        skewness: Vec<f64>,
        #[serde(default = "one")]
        scale: f64,
    },
    /// von Mises-Fisher on the unit sphere in `R^p`.
    VmfMixture {
        means: Vec<Vec<f64>>,
        concentrations: Vec<f64>,
    },
    /// Independent double-exponential coordinates around `locations[h]`.
    LaplaceMixture {
        locations: Vec<Vec<f64>>,
        scales: Vec<f64>,
    },
    /// Points near random linear subspaces of the given dimensions.
    SubspaceMixture {
        dims: Vec<usize>,
        noise_sd: f64,
        #[serde(default = "one")]
        coef_sd: f64,
    },
}

fn one() -> f64 {
    1.0
}

/// Full description of a synthetic data set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    #[serde(flatten)]
    pub family: Family,
    pub weights: Vec<f64>,
    pub n: usize,
    pub p: usize,
    pub seed: u64,
}

/// Generated observations with their true component labels (zero-based).
#[derive(Debug, Clone)]
pub struct Generated {
    pub data: DataMatrix,
    pub labels: Vec<usize>,
}

impl GeneratorSpec {
    pub fn components(&self) -> usize {
        match &self.family {
            Family::SkewNormalMixture { locations, .. } => locations.len(),
            Family::VmfMixture { means, .. } => means.len(),
            Family::LaplaceMixture { locations, .. } => locations.len(),
            Family::SubspaceMixture { dims, .. } => dims.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.components();
        if k == 0 {
            return Err(Error::Parameter("generator needs at least one component".into()));
        }
        if self.weights.len() != k {
            return Err(Error::Dimension(format!(
                "{} weights for {k} components",
                self.weights.len()
            )));
        }
        if self.weights.iter().any(|&w| !(w >= 0.0)) || (self.weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Parameter("weights must lie on the simplex".into()));
        }
        if self.n < 2 || self.p < 1 {
            return Err(Error::Parameter("need n >= 2 and p >= 1".into()));
        }
        match &self.family {
            Family::SkewNormalMixture { skewness, scale, .. } => {
                if skewness.len() != k {
                    return Err(Error::Dimension("one skewness per component".into()));
                }
                if !(*scale > 0.0) {
                    return Err(Error::Parameter("scale must be > 0".into()));
                }
            }
            Family::VmfMixture { means, concentrations } => {
                if concentrations.len() != k {
                    return Err(Error::Dimension("one concentration per component".into()));
                }
                for (h, m) in means.iter().enumerate() {
                    if m.len() != self.p {
                        return Err(Error::Dimension(format!("mean {h} has wrong dimension")));
                    }
                    let norm = m.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if (norm - 1.0).abs() > 1e-8 {
                        return Err(Error::Parameter(format!("mean {h} is not unit norm")));
                    }
                }
                if concentrations.iter().any(|&c| !(c >= 0.0)) {
                    return Err(Error::Parameter("concentrations must be >= 0".into()));
                }
            }
            Family::LaplaceMixture { locations, scales } => {
                if scales.len() != k {
                    return Err(Error::Dimension("one scale per component".into()));
                }
                if locations.iter().any(|l| l.len() != self.p) {
                    return Err(Error::Dimension("location dimension must equal p".into()));
                }
                if scales.iter().any(|&s| !(s > 0.0)) {
                    return Err(Error::Parameter("scales must be > 0".into()));
                }
            }
            Family::SubspaceMixture { dims, noise_sd, coef_sd } => {
                if dims.iter().any(|&d| d == 0 || d > self.p) {
                    return Err(Error::Parameter("subspace dimensions must be in 1..=p".into()));
                }
                if !(*noise_sd >= 0.0) || !(*coef_sd > 0.0) {
                    return Err(Error::Parameter("invalid noise or coefficient scale".into()));
                }
            }
        }
        Ok(())
    }
}

fn draw_labels<R: Rng + ?Sized>(weights: &[f64], n: usize, rng: &mut R) -> Vec<usize> {
    (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (h, &w) in weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    return h;
                }
            }
            weights.len() - 1
        })
        .collect()
}

/// One skew-normal draw via `delta |Z0| + sqrt(1 - delta^2) Z1`.
pub fn sample_skew_normal<R: Rng + ?Sized>(location: f64, scale: f64, shape: f64, rng: &mut R) -> f64 {
    let delta = shape / (1.0 + shape * shape).sqrt();
    let z0: f64 = rng.sample(StandardNormal);
    let z1: f64 = rng.sample(StandardNormal);
    location + scale * (delta * z0.abs() + (1.0 - delta * delta).sqrt() * z1)
}

/// Coordinates i.i.d. skew-normal given the component.
pub fn gen_skew_normal_mixture<R: Rng + ?Sized>(spec: &GeneratorSpec, rng: &mut R) -> Result<Generated> {
    spec.validate()?;
    let Family::SkewNormalMixture { locations, skewness, scale } = &spec.family else {
        return Err(Error::Parameter("spec is not a skew-normal mixture".into()));
    };
    let labels = draw_labels(&spec.weights, spec.n, rng);
    let mut values = DMatrix::zeros(spec.n, spec.p);
    for (i, &h) in labels.iter().enumerate() {
        for j in 0..spec.p {
            values[(i, j)] = sample_skew_normal(locations[h], *scale, skewness[h], rng);
        }
    }
    Ok(Generated {
        data: DataMatrix::new(values)?,
        labels,
    })
}

/// Inverse-CDF sampler for the von Mises angle with density proportional to
/// `exp(kappa cos theta)` on `[-pi, pi)`.
#[derive(Debug, Clone)]
pub struct VonMisesAngle {
    grid: Vec<f64>,
    cdf: Vec<f64>,
}

impl VonMisesAngle {
    const CELLS: usize = 1 << 14;

    pub fn new(kappa: f64) -> Self {
        let m = Self::CELLS;
        let h = 2.0 * PI / m as f64;
        let grid: Vec<f64> = (0..=m).map(|i| -PI + i as f64 * h).collect();
        // shift by kappa so the density peaks at 1 (no overflow for large kappa)
        let dens: Vec<f64> = grid.iter().map(|&t| (kappa * (t.cos() - 1.0)).exp()).collect();
        let mut cdf = vec![0.0; m + 1];
        for i in 0..m {
            let mid = (kappa * (((grid[i] + grid[i + 1]) / 2.0).cos() - 1.0)).exp();
            cdf[i + 1] = cdf[i] + h * (dens[i] + 4.0 * mid + dens[i + 1]) / 6.0;
        }
        let total = cdf[m];
        cdf.iter_mut().for_each(|c| *c /= total);
        Self { grid, cdf }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let idx = self.cdf.partition_point(|&c| c <= u).clamp(1, self.cdf.len() - 1);
        let (c0, c1) = (self.cdf[idx - 1], self.cdf[idx]);
        let frac = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
        self.grid[idx - 1] + frac * (self.grid[idx] - self.grid[idx - 1])
    }
}

/// Wood's rejection sampler for the component along the mean direction.
fn sample_vmf_cosine<R: Rng + ?Sized>(kappa: f64, p: usize, rng: &mut R) -> f64 {
    let m = (p - 1) as f64;
    let b = (-2.0 * kappa + (4.0 * kappa * kappa + m * m).sqrt()) / m;
    let x0 = (1.0 - b) / (1.0 + b);
    let c = kappa * x0 + m * (1.0 - x0 * x0).ln();
    let beta = Beta::new(m / 2.0, m / 2.0).expect("valid beta parameters");
    loop {
        let z: f64 = beta.sample(rng);
        let w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z);
        let u: f64 = rng.random();
        if kappa * w + m * (1.0 - x0 * w).ln() - c >= u.ln() {
            return w;
        }
    }
}

/// Unit-norm rows from a von Mises-Fisher mixture.
pub fn gen_vmf_mixture<R: Rng + ?Sized>(spec: &GeneratorSpec, rng: &mut R) -> Result<Generated> {
    spec.validate()?;
    let Family::VmfMixture { means, concentrations } = &spec.family else {
        return Err(Error::Parameter("spec is not a vMF mixture".into()));
    };
    let p = spec.p;
    if p < 2 {
        return Err(Error::Parameter("vMF needs p >= 2".into()));
    }
    let labels = draw_labels(&spec.weights, spec.n, rng);
    let angle_samplers: Vec<VonMisesAngle> = if p == 2 {
        concentrations.iter().map(|&k| VonMisesAngle::new(k)).collect()
    } else {
        Vec::new()
    };
    let mut values = DMatrix::zeros(spec.n, p);
    for (i, &h) in labels.iter().enumerate() {
        let mu = &means[h];
        let row: Vec<f64> = if p == 2 {
            let theta = angle_samplers[h].sample(rng) + mu[1].atan2(mu[0]);
            vec![theta.cos(), theta.sin()]
        } else {
            let w = sample_vmf_cosine(concentrations[h], p, rng);
            // uniform direction orthogonal to mu
            let mut v: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
            let proj: f64 = v.iter().zip(mu).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(mu).for_each(|(a, b)| *a -= proj * b);
            let vn = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            let s = (1.0 - w * w).max(0.0).sqrt();
            mu.iter().zip(&v).map(|(m, a)| w * m + s * a / vn).collect()
        };
        let norm = row.iter().map(|a| a * a).sum::<f64>().sqrt();
        for (j, v) in row.iter().enumerate() {
            values[(i, j)] = v / norm;
        }
    }
    Ok(Generated {
        data: DataMatrix::new(values)?,
        labels,
    })
}

/// Independent Laplace coordinates, `location + scale * (E1 - E2)`.
pub fn gen_laplace_mixture<R: Rng + ?Sized>(spec: &GeneratorSpec, rng: &mut R) -> Result<Generated> {
    spec.validate()?;
    let Family::LaplaceMixture { locations, scales } = &spec.family else {
        return Err(Error::Parameter("spec is not a Laplace mixture".into()));
    };
    let labels = draw_labels(&spec.weights, spec.n, rng);
    let mut values = DMatrix::zeros(spec.n, spec.p);
    for (i, &h) in labels.iter().enumerate() {
        for j in 0..spec.p {
            let e1: f64 = rng.sample(Exp1);
            let e2: f64 = rng.sample(Exp1);
            values[(i, j)] = locations[h][j] + scales[h] * (e1 - e2);
        }
    }
    Ok(Generated {
        data: DataMatrix::new(values)?,
        labels,
    })
}

/// Random `p x d` matrix with orthonormal columns.
pub fn random_orthonormal_basis<R: Rng + ?Sized>(p: usize, d: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(p, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    g.qr().q().columns(0, d).into_owned()
}

/// Points `B_h c + noise` with `c ~ N(0, coef_sd^2 I)` and isotropic Gaussian noise.
/// Also returns the bases so residuals can be checked.
pub fn gen_subspace_mixture_with_bases<R: Rng + ?Sized>(
    spec: &GeneratorSpec,
    rng: &mut R,
) -> Result<(Generated, Vec<DMatrix<f64>>)> {
    spec.validate()?;
    let Family::SubspaceMixture { dims, noise_sd, coef_sd } = &spec.family else {
        return Err(Error::Parameter("spec is not a subspace mixture".into()));
    };
    let bases: Vec<DMatrix<f64>> = dims
        .iter()
        .map(|&d| random_orthonormal_basis(spec.p, d, rng))
        .collect();
    let labels = draw_labels(&spec.weights, spec.n, rng);
    let mut values = DMatrix::zeros(spec.n, spec.p);
    for (i, &h) in labels.iter().enumerate() {
        let coef = nalgebra::DVector::from_fn(dims[h], |_, _| coef_sd * rng.sample::<f64, _>(StandardNormal));
        let point = &bases[h] * coef;
        for j in 0..spec.p {
            let e: f64 = rng.sample(StandardNormal);
            values[(i, j)] = point[j] + noise_sd * e;
        }
    }
    Ok((
        Generated {
            data: DataMatrix::new(values)?,
            labels,
        },
        bases,
    ))
}

pub fn gen_subspace_mixture<R: Rng + ?Sized>(spec: &GeneratorSpec, rng: &mut R) -> Result<Generated> {
    gen_subspace_mixture_with_bases(spec, rng).map(|(g, _)| g)
}

/// Dispatch on the family using a generator seeded from `spec.seed`.
pub fn generate(spec: &GeneratorSpec) -> Result<Generated> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    match spec.family {
        Family::SkewNormalMixture { .. } => gen_skew_normal_mixture(spec, &mut rng),
        Family::VmfMixture { .. } => gen_vmf_mixture(spec, &mut rng),
        Family::LaplaceMixture { .. } => gen_laplace_mixture(spec, &mut rng),
        Family::SubspaceMixture { .. } => gen_subspace_mixture(spec, &mut rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn skewness(x: &[f64]) -> f64 {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let m2 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
        let m3 = x.iter().map(|v| (v - m).powi(3)).sum::<f64>() / n;
        m3 / m2.powf(1.5)
    }

    fn sn_spec(shape: f64, n: usize, seed: u64) -> GeneratorSpec {
        GeneratorSpec {
            family: Family::SkewNormalMixture {
                locations: vec![0.0],
                skewness: vec![shape],
                scale: 1.0,
            },
            weights: vec![1.0],
            n,
            p: 1,
            seed,
        }
    }

    /// Population skewness of SN(0, 1, shape) by quadrature of its density.
    fn sn_skewness_by_quadrature(shape: f64) -> f64 {
        let dens = |x: f64| {
            let phi = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
            2.0 * phi * statrs::function::erf::erfc(-shape * x / std::f64::consts::SQRT_2) / 2.0
        };
        let (a, b, m) = (-12.0, 12.0, 200_000);
        let h = (b - a) / m as f64;
        let mut mom = [0.0; 4];
        for i in 0..=m {
            let x = a + i as f64 * h;
            let w = if i == 0 || i == m { 0.5 } else { 1.0 } * h;
            let f = dens(x);
            for (r, mr) in mom.iter_mut().enumerate() {
                *mr += w * f * x.powi(r as i32);
            }
        }
        let mean = mom[1] / mom[0];
        let var = mom[2] / mom[0] - mean * mean;
        let third = mom[3] / mom[0] - 3.0 * mean * var - mean.powi(3);
        third / var.powf(1.5)
    }

    #[test]
    fn skew_normal_symmetric_case() {
        let g = generate(&sn_spec(0.0, 10_000, 11)).unwrap();
        let x: Vec<f64> = g.data.values().iter().copied().collect();
        assert!(skewness(&x).abs() < 0.1, "{}", skewness(&x));
    }

    #[test]
    fn skew_normal_right_skewed_case() {
        let g = generate(&sn_spec(8.0, 10_000, 12)).unwrap();
        let x: Vec<f64> = g.data.values().iter().copied().collect();
        let sample = skewness(&x);
        let truth = sn_skewness_by_quadrature(8.0);
        assert!(truth > 0.5, "{truth}");
        assert!(sample > 0.5, "{sample}");
        assert!((sample - truth).abs() < 0.1, "{sample} vs {truth}");
    }

    #[test]
    fn generators_are_reproducible() {
        let spec = sn_spec(3.0, 50, 5);
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a.data, b.data);
        assert_eq!(a.labels, b.labels);
        let lap = GeneratorSpec {
            family: Family::LaplaceMixture {
                locations: vec![vec![0.0; 3], vec![5.0; 3]],
                scales: vec![1.0, 1.0],
            },
            weights: vec![0.5, 0.5],
            n: 40,
            p: 3,
            seed: 9,
        };
        assert_eq!(generate(&lap).unwrap().data, generate(&lap).unwrap().data);
    }

    #[test]
    fn vmf_rows_are_unit_norm() {
        for p in [2, 3, 5] {
            let mut mu = vec![0.0; p];
            mu[0] = 1.0;
            let spec = GeneratorSpec {
                family: Family::VmfMixture {
                    means: vec![mu],
                    concentrations: vec![4.0],
                },
                weights: vec![1.0],
                n: 500,
                p,
                seed: 3,
            };
            let g = generate(&spec).unwrap();
            for i in 0..g.data.n() {
                let norm: f64 = g.data.values().row(i).norm();
                assert!((norm - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn vmf_uniform_angles_pass_ks() {
        let spec = GeneratorSpec {
            family: Family::VmfMixture {
                means: vec![vec![1.0, 0.0]],
                concentrations: vec![0.0],
            },
            weights: vec![1.0],
            n: 10_000,
            p: 2,
            seed: 21,
        };
        let g = generate(&spec).unwrap();
        let mut u: Vec<f64> = (0..g.data.n())
            .map(|i| {
                let r = g.data.values().row(i);
                (r[1].atan2(r[0]) + PI) / (2.0 * PI)
            })
            .collect();
        u.sort_by(f64::total_cmp);
        let n = u.len() as f64;
        let ks = u
            .iter()
            .enumerate()
            .map(|(i, &v)| ((i as f64 + 1.0) / n - v).max(v - i as f64 / n))
            .fold(0.0, f64::max);
        // 1% critical value of the one-sample KS statistic
        assert!(ks < 1.628 / n.sqrt(), "{ks}");
    }

    #[test]
    fn vmf_concentrated_mean_direction() {
        for p in [2, 3] {
            let mut mu = vec![0.0; p];
            mu[0] = 0.6;
            mu[1] = 0.8;
            let spec = GeneratorSpec {
                family: Family::VmfMixture {
                    means: vec![mu.clone()],
                    concentrations: vec![50.0],
                },
                weights: vec![1.0],
                n: 1000,
                p,
                seed: 4,
            };
            let g = generate(&spec).unwrap();
            let mean = g.data.values().row_mean();
            let cos: f64 = mean.iter().zip(&mu).map(|(a, b)| a * b).sum::<f64>() / mean.norm();
            assert!(cos.clamp(-1.0, 1.0).acos().to_degrees() < 5.0);
        }
    }

    #[test]
    fn laplace_location() {
        let spec = GeneratorSpec {
            family: Family::LaplaceMixture {
                locations: vec![vec![2.0, -1.0]],
                scales: vec![1.5],
            },
            weights: vec![1.0],
            n: 10_000,
            p: 2,
            seed: 8,
        };
        let g = generate(&spec).unwrap();
        let m = g.data.values().row_mean();
        // sd of a Laplace(b) coordinate is b sqrt(2); 4 standard errors
        let se = 1.5 * 2f64.sqrt() / 100.0;
        assert!((m[0] - 2.0).abs() < 4.0 * se);
        assert!((m[1] + 1.0).abs() < 4.0 * se);
    }

    #[test]
    fn subspace_points_near_their_subspace() {
        let noise = 0.05;
        let spec = GeneratorSpec {
            family: Family::SubspaceMixture {
                dims: vec![3, 2],
                noise_sd: noise,
                coef_sd: 1.0,
            },
            weights: vec![0.5, 0.5],
            n: 200,
            p: 20,
            seed: 2,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let (g, bases) = gen_subspace_mixture_with_bases(&spec, &mut rng).unwrap();
        for (i, &h) in g.labels.iter().enumerate() {
            let y = g.data.values().row(i).transpose();
            let b = &bases[h];
            let resid = &y - b * (b.transpose() * &y);
            // residual norm of p - d Gaussian coordinates, compared per coordinate
            let rms = resid.norm() / ((spec.p - b.ncols()) as f64).sqrt();
            assert!(rms < 3.0 * noise, "{rms}");
        }
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = sn_spec(8.0, 200, 1);
        let s = serde_json::to_string(&spec).unwrap();
        assert!(s.contains("\"family\":\"skew_normal_mixture\""));
        let back: GeneratorSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(back, spec);
    }
}
