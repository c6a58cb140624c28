//! Posterior sampling over assignments and cluster parameters.
//!
//! Each iteration proposes a new assignment by lifting the binary assignment
//! matrix into the simplex interior through a tempered softmax, running
//! leapfrog dynamics on the logits, and projecting the endpoint back to a
//! vertex. Cluster scales, mixture weights and shapes are then refreshed by
//! conjugate Gibbs draws and a random-walk Metropolis step.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distmat::DistanceMatrix;
use crate::error::{Error, Result};
use crate::evalgen::baselines::spectral_clustering;
use crate::likelihood::{
    cluster_stats, label_log_prior, ln_weight, total_log_likelihood, Assignment, ClusterParams, MixtureWeights, PairStats,
};
use crate::priors::{prior_log_densities, PriorConfig};

/// Mass the canonical logits put on the assigned label after a reset.
pub const VERTEX_MASS: f64 = 1.0 - 1e-4;
/// Ridge added to a singular `W^T W` before inversion.
pub const GRAM_RIDGE: f64 = 1e-12;
/// Floor applied to `ln pi_h` inside the relaxed potential.
const LN_PI_FLOOR: f64 = -690.0;

/// How the cluster-size matrix `C^T C` is relaxed away from the vertices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relaxation {
    /// Full Gram matrix `W^T W`.
    Gram,
    /// Diagonal of relaxed column sums `diag(1^T W)`.
    #[default]
    ColumnSums,
}

/// Tuning of the sampler. Defaults: 10 leapfrog steps of size 0.1, unit
/// momentum scale, temperature 0.1, 20% burn-in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HmcConfig {
    pub leapfrog_steps: usize,
    pub stepsize: f64,
    pub momentum_sd: f64,
    pub temperature: f64,
    pub n_iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub include_label_prior: bool,
    /// Proposal scale of the random walk on `ln(alpha - 1)`.
    pub rw_sd: f64,
    pub relaxation: Relaxation,
}

impl Default for HmcConfig {
    fn default() -> Self {
        Self::new(1000)
    }
}

impl HmcConfig {
    pub fn new(n_iterations: usize) -> Self {
        Self {
            leapfrog_steps: 10,
            stepsize: 0.1,
            momentum_sd: 1.0,
            temperature: 0.1,
            n_iterations,
            burn_in: n_iterations / 5,
            thin: 1,
            seed: 0,
            include_label_prior: true,
            rw_sd: 0.3,
            relaxation: Relaxation::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.leapfrog_steps < 1 {
            return Err(Error::Parameter("leapfrog_steps must be >= 1".into()));
        }
        for (name, v) in [
            ("stepsize", self.stepsize),
            ("momentum_sd", self.momentum_sd),
            ("temperature", self.temperature),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Parameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.rw_sd >= 0.0) {
            return Err(Error::Parameter("rw_sd must be >= 0".into()));
        }
        if self.thin < 1 {
            return Err(Error::Parameter("thin must be >= 1".into()));
        }
        if self.burn_in >= self.n_iterations {
            return Err(Error::Parameter(format!(
                "burn_in ({}) must be smaller than the number of iterations ({})",
                self.burn_in, self.n_iterations
            )));
        }
        Ok(())
    }
}

/// Tempered softmax `w_ih = exp(v_ih / t) / sum_h' exp(v_ih' / t)`.
pub fn lift(v: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let (n, k) = v.shape();
    let mut w = DMatrix::zeros(n, k);
    for i in 0..n {
        let mx = (0..k).map(|h| v[(i, h)]).fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for h in 0..k {
            let e = ((v[(i, h)] - mx) / t).exp();
            w[(i, h)] = e;
            s += e;
        }
        for h in 0..k {
            w[(i, h)] /= s;
        }
    }
    w
}

/// Row-wise argmax, ties to the lowest column.
pub fn project_to_vertex(w: &DMatrix<f64>) -> Assignment {
    let (n, k) = w.shape();
    let labels = (0..n)
        .map(|i| {
            let mut best = 0;
            for h in 1..k {
                if w[(i, h)] > w[(i, best)] {
                    best = h;
                }
            }
            best
        })
        .collect();
    Assignment::new(labels, k).expect("argmax labels are in range")
}

/// Logits whose lift puts mass [`VERTEX_MASS`] on each assigned label and
/// spreads the rest evenly.
pub fn canonical_logits(assignment: &Assignment, t: f64) -> DMatrix<f64> {
    let k = assignment.k();
    let margin = if k > 1 {
        t * ((k as f64 - 1.0) * VERTEX_MASS / (1.0 - VERTEX_MASS)).ln()
    } else {
        0.0
    };
    let mut v = DMatrix::zeros(assignment.n(), k);
    for (i, &h) in assignment.labels().iter().enumerate() {
        v[(i, h)] = margin;
    }
    v
}

/// Relaxed potential split into its parts. `trace` is the negated trace form of
/// the log-likelihood, `normalizer` the relaxed `sum_h (n_h - 1)(ln Gamma(alpha_h)
/// + alpha_h ln sigma_h)`, and `label` the relaxed `-sum_h n_h ln pi_h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialTerms {
    pub trace: f64,
    pub normalizer: f64,
    pub label: f64,
}

impl PotentialTerms {
    pub fn total(&self) -> f64 {
        self.trace + self.normalizer + self.label
    }
}

/// The relaxed potential `U(W)` for a fixed distance matrix.
#[derive(Debug, Clone)]
pub struct Potential<'a> {
    d: &'a DistanceMatrix,
    log_d: DMatrix<f64>,
    pub relaxation: Relaxation,
    pub include_label_prior: bool,
}

struct Pieces {
    /// `diag(alpha - 1)` and `diag(1 / sigma)` entries.
    m: Vec<f64>,
    nsig: Vec<f64>,
    c: Vec<f64>,
    ln_pi: Vec<f64>,
    nu: Vec<f64>,
}

impl<'a> Potential<'a> {
    pub fn new(d: &'a DistanceMatrix, relaxation: Relaxation, include_label_prior: bool) -> Self {
        Self {
            d,
            log_d: d.log_masked(),
            relaxation,
            include_label_prior,
        }
    }

    pub fn distances(&self) -> &DistanceMatrix {
        self.d
    }

    fn pieces(&self, w: &DMatrix<f64>, params: &ClusterParams, weights: &MixtureWeights) -> Pieces {
        let counts = project_to_vertex(w).counts();
        Pieces {
            m: params.alpha.iter().map(|a| a - 1.0).collect(),
            nsig: params.sigma.iter().map(|s| 1.0 / s).collect(),
            c: params.log_normalizers(),
            ln_pi: weights.pi.iter().map(|&p| ln_weight(p).max(LN_PI_FLOOR)).collect(),
            nu: counts.iter().map(|&c| if c > 0 { 1.0 } else { 0.0 }).collect(),
        }
    }

    fn gram_inverse(w: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
        let s = w.transpose() * w;
        if let Some(ch) = s.clone().cholesky() {
            let inv = ch.inverse();
            if inv.iter().all(|x| x.is_finite()) {
                return (inv, false);
            }
        }
        let k = s.nrows();
        let guarded = s + DMatrix::identity(k, k) * GRAM_RIDGE;
        let inv = guarded
            .clone()
            .cholesky()
            .map(|c| c.inverse())
            .or_else(|| guarded.try_inverse())
            .unwrap_or_else(|| DMatrix::from_element(k, k, f64::NAN));
        (inv, true)
    }

    /// Potential at a relaxed assignment `W`.
    pub fn terms(&self, w: &DMatrix<f64>, params: &ClusterParams, weights: &MixtureWeights) -> PotentialTerms {
        let pc = self.pieces(w, params, weights);
        let k = w.ncols();
        let lw = &self.log_d * w;
        let dw = self.d.values() * w;
        let s: Vec<f64> = (0..k).map(|h| w.column(h).sum()).collect();
        let trace = match self.relaxation {
            Relaxation::Gram => {
                let (s_inv, guarded) = Self::gram_inverse(w);
                if guarded {
                    log::debug!("W^T W singular; ridge {GRAM_RIDGE} added");
                }
                let p = w.transpose() * &lw;
                let r = w.transpose() * &dw;
                let mut f = 0.0;
                let mut g = 0.0;
                for a in 0..k {
                    for b in 0..k {
                        f += p[(a, b)] * pc.m[b] * s_inv[(b, a)];
                        g += r[(a, b)] * s_inv[(b, a)] * pc.nsig[a];
                    }
                }
                -f + g
            }
            Relaxation::ColumnSums => {
                let mut total = 0.0;
                for h in 0..k {
                    let q_log = w.column(h).dot(&lw.column(h));
                    let q_d = w.column(h).dot(&dw.column(h));
                    total += (-pc.m[h] * q_log + pc.nsig[h] * q_d) / s[h];
                }
                total
            }
        };
        let normalizer = (0..k).map(|h| (s[h] - pc.nu[h]) * pc.c[h]).sum();
        let label = if self.include_label_prior {
            -(0..k).map(|h| s[h] * pc.ln_pi[h]).sum::<f64>()
        } else {
            0.0
        };
        PotentialTerms {
            trace,
            normalizer,
            label,
        }
    }

    pub fn value(&self, w: &DMatrix<f64>, params: &ClusterParams, weights: &MixtureWeights) -> f64 {
        self.terms(w, params, weights).total()
    }

    /// Gradient of `U` with respect to `W` (the vertex indicator `nu` held fixed).
    pub fn gradient_w(&self, w: &DMatrix<f64>, params: &ClusterParams, weights: &MixtureWeights) -> DMatrix<f64> {
        let pc = self.pieces(w, params, weights);
        let (n, k) = w.shape();
        let lw = &self.log_d * w;
        let dw = self.d.values() * w;
        let mut grad = match self.relaxation {
            Relaxation::Gram => {
                let (s_inv, _) = Self::gram_inverse(w);
                let p = w.transpose() * &lw;
                let r = w.transpose() * &dw;
                let m = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&pc.m));
                let ns = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&pc.nsig));
                let b1 = &m * &s_inv;
                let e1 = &s_inv * &p * &b1;
                let b2 = &s_inv * &ns;
                let e2 = &b2 * &r * &s_inv;
                let grad_f = &lw * (&b1 + b1.transpose()) - w * (&e1 + e1.transpose());
                let grad_g = &dw * (&b2 + b2.transpose()) - w * (&e2 + e2.transpose());
                grad_g - grad_f
            }
            Relaxation::ColumnSums => {
                let mut grad = DMatrix::zeros(n, k);
                for h in 0..k {
                    let sh = w.column(h).sum();
                    let q = -pc.m[h] * w.column(h).dot(&lw.column(h)) + pc.nsig[h] * w.column(h).dot(&dw.column(h));
                    for i in 0..n {
                        grad[(i, h)] = 2.0 * (-pc.m[h] * lw[(i, h)] + pc.nsig[h] * dw[(i, h)]) / sh - q / (sh * sh);
                    }
                }
                grad
            }
        };
        for h in 0..k {
            let extra = pc.c[h] - if self.include_label_prior { pc.ln_pi[h] } else { 0.0 };
            for i in 0..n {
                grad[(i, h)] += extra;
            }
        }
        grad
    }

    /// Gradient with respect to the logits, through the tempered softmax.
    pub fn gradient_v(&self, v: &DMatrix<f64>, t: f64, params: &ClusterParams, weights: &MixtureWeights) -> DMatrix<f64> {
        let w = lift(v, t);
        let g = self.gradient_w(&w, params, weights);
        softmax_pullback(&w, &g, t)
    }

    /// Pair statistics of every cluster in one pass, reusing the cached logs.
    pub fn vertex_stats(&self, assignment: &Assignment) -> Vec<PairStats> {
        let labels = assignment.labels();
        let n = labels.len();
        let mut stats = vec![PairStats::default(); assignment.k()];
        for i in 0..n {
            let h = labels[i];
            let st = &mut stats[h];
            st.size += 1;
            for j in i + 1..n {
                if labels[j] == h {
                    st.sum_d += 2.0 * self.d.get(i, j);
                    st.sum_log_d += 2.0 * self.log_d[(i, j)];
                }
            }
        }
        stats
    }

    fn vertex_log_likelihood(&self, assignment: &Assignment, stats: &[PairStats], params: &ClusterParams, weights: &MixtureWeights) -> f64 {
        let mut total: f64 = stats
            .iter()
            .enumerate()
            .map(|(h, st)| st.log_likelihood(params.alpha[h], params.sigma[h]))
            .sum();
        if self.include_label_prior {
            total += label_log_prior(assignment, weights);
        }
        total
    }

    /// Potential at a vertex: the negated log-likelihood (with label prior if set).
    pub fn at_vertex(&self, assignment: &Assignment, params: &ClusterParams, weights: &MixtureWeights) -> Result<f64> {
        if assignment.n() != self.d.n() || assignment.k() != params.k() || weights.k() != params.k() {
            return Err(Error::Dimension("assignment, parameters and distances disagree".into()));
        }
        let stats = self.vertex_stats(assignment);
        Ok(-self.vertex_log_likelihood(assignment, &stats, params, weights))
    }
}

/// `dU/dv_ih = (1/t) w_ih (g_ih - sum_h' w_ih' g_ih')`.
fn softmax_pullback(w: &DMatrix<f64>, g: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let (n, k) = w.shape();
    let mut out = DMatrix::zeros(n, k);
    for i in 0..n {
        let avg: f64 = (0..k).map(|h| w[(i, h)] * g[(i, h)]).sum();
        for h in 0..k {
            out[(i, h)] = w[(i, h)] * (g[(i, h)] - avg) / t;
        }
    }
    out
}

/// Relaxed potential at `W` (see [`Potential`]).
pub fn potential_u(
    w: &DMatrix<f64>,
    d: &DistanceMatrix,
    params: &ClusterParams,
    weights: &MixtureWeights,
    cfg: &HmcConfig,
) -> f64 {
    Potential::new(d, cfg.relaxation, cfg.include_label_prior).value(w, params, weights)
}

/// Gradient of the relaxed potential with respect to the logits `V`.
pub fn grad_u(
    v: &DMatrix<f64>,
    d: &DistanceMatrix,
    params: &ClusterParams,
    weights: &MixtureWeights,
    cfg: &HmcConfig,
) -> DMatrix<f64> {
    Potential::new(d, cfg.relaxation, cfg.include_label_prior).gradient_v(v, cfg.temperature, params, weights)
}

/// Full sampler state.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub v: DMatrix<f64>,
    pub w: DMatrix<f64>,
    pub assignment: Assignment,
    pub params: ClusterParams,
    pub weights: MixtureWeights,
    pub momentum: DMatrix<f64>,
}

impl ChainState {
    pub fn new(assignment: Assignment, params: ClusterParams, weights: MixtureWeights, t: f64) -> Self {
        let v = canonical_logits(&assignment, t);
        let w = lift(&v, t);
        let momentum = DMatrix::zeros(v.nrows(), v.ncols());
        Self {
            v,
            w,
            assignment,
            params,
            weights,
            momentum,
        }
    }
}

/// Outcome of one lift-and-project proposal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepOutcome {
    pub accepted: bool,
    pub non_finite: bool,
    /// The projected endpoint differed from the current assignment.
    pub moved: bool,
}

/// One lift-and-project Hamiltonian proposal with a Metropolis correction.
pub fn hmc_step<R: Rng + ?Sized>(
    state: &mut ChainState,
    potential: &Potential<'_>,
    cfg: &HmcConfig,
    rng: &mut R,
) -> Result<StepOutcome> {
    let t = cfg.temperature;
    let (n, k) = state.v.shape();
    let sd = cfg.momentum_sd;
    let inv_mass = 1.0 / (sd * sd);
    let q0 = DMatrix::from_fn(n, k, |_, _| sd * rng.sample::<f64, _>(StandardNormal));
    let kinetic = |q: &DMatrix<f64>| 0.5 * q.norm_squared() * inv_mass;

    let mut v = state.v.clone();
    let mut q = q0.clone();
    let eps = cfg.stepsize;
    let mut grad = potential.gradient_v(&v, t, &state.params, &state.weights);
    for _ in 0..cfg.leapfrog_steps {
        q -= &grad * (0.5 * eps);
        v += &q * (eps * inv_mass);
        grad = potential.gradient_v(&v, t, &state.params, &state.weights);
        q -= &grad * (0.5 * eps);
    }
    let proposal = project_to_vertex(&lift(&v, t));
    let u_cur = potential.at_vertex(&state.assignment, &state.params, &state.weights)?;
    let u_new = potential.at_vertex(&proposal, &state.params, &state.weights)?;
    let log_ratio = (u_cur + kinetic(&q0)) - (u_new + kinetic(&q));
    let moved = proposal.labels() != state.assignment.labels();
    if log_ratio.is_nan() || !u_cur.is_finite() || v.iter().any(|x| !x.is_finite()) {
        return Ok(StepOutcome {
            accepted: false,
            non_finite: true,
            moved,
        });
    }
    let accept = log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio;
    if accept {
        state.v = canonical_logits(&proposal, t);
        state.w = lift(&state.v, t);
        state.assignment = proposal;
        state.momentum = q;
    }
    Ok(StepOutcome {
        accepted: accept,
        non_finite: false,
        moved,
    })
}

fn inv_gamma_draw<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> f64 {
    let g = Gamma::new(shape, 1.0 / scale).expect("valid Gamma parameters");
    1.0 / g.sample(rng)
}

/// Conjugate draw of each `sigma_h` from `InvGamma(2 + alpha_h (n_h - 1),
/// beta_sigma + (1/n_h) sum_{i != i'} d_ii')`; clusters with at most one member
/// draw from the prior `InvGamma(2, beta_sigma)`.
pub fn gibbs_sigma<R: Rng + ?Sized>(
    stats: &[PairStats],
    alpha: &[f64],
    prior: &PriorConfig,
    rng: &mut R,
) -> Vec<f64> {
    stats
        .iter()
        .zip(alpha)
        .map(|(st, &a)| {
            if st.size <= 1 {
                inv_gamma_draw(prior.sigma_shape, prior.beta_sigma, rng)
            } else {
                let n = st.size as f64;
                inv_gamma_draw(prior.sigma_shape + a * (n - 1.0), prior.beta_sigma + st.sum_d / n, rng)
            }
        })
        .collect()
}

/// `ln G` for `G ~ Gamma(shape, 1)`, accurate for very small shapes.
fn ln_gamma_draw<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    if shape >= 1.0 {
        Gamma::new(shape, 1.0).expect("valid shape").sample(rng).ln()
    } else {
        let g = Gamma::new(shape + 1.0, 1.0).expect("valid shape").sample(rng);
        let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
        g.ln() + u.ln() / shape
    }
}

/// Draw `pi ~ Dirichlet(conc + n_1, ..., conc + n_k)`.
pub fn gibbs_pi<R: Rng + ?Sized>(counts: &[usize], dirichlet_conc: f64, rng: &mut R) -> Vec<f64> {
    let logs: Vec<f64> = counts
        .iter()
        .map(|&c| ln_gamma_draw(dirichlet_conc + c as f64, rng))
        .collect();
    let mx = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logs.iter().map(|l| (l - mx).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

const ALPHA_SHIFT: f64 = 1e-10;

/// Random-walk Metropolis on `x = ln(alpha_h - 1 + 1e-10)` for clusters with at
/// least two members; shapes of smaller clusters are drawn from their prior.
/// Returns the number of accepted random-walk proposals.
pub fn mh_alpha<R: Rng + ?Sized>(
    stats: &[PairStats],
    alpha: &mut [f64],
    sigma: &[f64],
    prior: &PriorConfig,
    rw_sd: f64,
    rng: &mut R,
) -> (usize, usize) {
    let mut accepted = 0;
    let mut proposed = 0;
    let prior_shape = Gamma::new(prior.alpha_shape, 1.0 / prior.alpha_rate).expect("valid prior");
    for h in 0..alpha.len() {
        let st = &stats[h];
        if st.size <= 1 {
            alpha[h] = 1.0 + prior_shape.sample(rng);
            continue;
        }
        let log_target = |a: f64, x: f64| st.log_likelihood(a, sigma[h]) + prior.alpha_log_density(a) + x;
        let x = (alpha[h] - 1.0 + ALPHA_SHIFT).ln();
        let step: f64 = rng.sample(StandardNormal);
        let x_new = x + rw_sd * step;
        let a_new = x_new.exp() + 1.0 - ALPHA_SHIFT;
        proposed += 1;
        if !(a_new >= 1.0) {
            continue;
        }
        let log_ratio = log_target(a_new, x_new) - log_target(alpha[h], x);
        if log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio {
            alpha[h] = a_new;
            accepted += 1;
        } else if log_ratio.is_nan() {
            log::warn!("non-finite alpha acceptance ratio for cluster {h}");
        }
    }
    (accepted, proposed)
}

/// Starting assignment of a chain.
#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    Spectral,
    Random,
    Given(Assignment),
}

/// Acceptance counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceStats {
    pub hmc_proposed: usize,
    pub hmc_accepted: usize,
    /// Accepted proposals whose projection changed the assignment.
    pub hmc_moves: usize,
    pub hmc_non_finite: usize,
    pub alpha_proposed: usize,
    pub alpha_accepted: usize,
}

impl AcceptanceStats {
    pub fn hmc_rate(&self) -> f64 {
        rate(self.hmc_accepted, self.hmc_proposed)
    }

    /// Fraction of proposals that were accepted and changed the assignment.
    pub fn hmc_move_rate(&self) -> f64 {
        rate(self.hmc_moves, self.hmc_proposed)
    }

    pub fn alpha_rate(&self) -> f64 {
        rate(self.alpha_accepted, self.alpha_proposed)
    }

    fn merge(&mut self, other: &Self) {
        self.hmc_proposed += other.hmc_proposed;
        self.hmc_accepted += other.hmc_accepted;
        self.hmc_moves += other.hmc_moves;
        self.hmc_non_finite += other.hmc_non_finite;
        self.alpha_proposed += other.alpha_proposed;
        self.alpha_accepted += other.alpha_accepted;
    }
}

fn rate(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Retained draws of one or more chains. Assignments are stored as label vectors
/// and `CC^T` is accumulated as a running sum.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub n: usize,
    pub k: usize,
    pub labels: Vec<Vec<usize>>,
    pub coassign_sum: DMatrix<f64>,
    pub alpha: Vec<Vec<f64>>,
    pub sigma: Vec<Vec<f64>>,
    pub pi: Vec<Vec<f64>>,
    /// Log target (log-likelihood plus parameter priors) at every iteration.
    pub log_target: Vec<f64>,
    pub acceptance: AcceptanceStats,
    pub warnings: Vec<String>,
}

impl Trace {
    fn new(n: usize, k: usize) -> Self {
        Self {
            n,
            k,
            labels: Vec::new(),
            coassign_sum: DMatrix::zeros(n, n),
            alpha: Vec::new(),
            sigma: Vec::new(),
            pi: Vec::new(),
            log_target: Vec::new(),
            acceptance: AcceptanceStats::default(),
            warnings: Vec::new(),
        }
    }

    pub fn n_draws(&self) -> usize {
        self.labels.len()
    }

    fn record(&mut self, state: &ChainState) {
        let labels = state.assignment.labels();
        for i in 0..self.n {
            for j in 0..self.n {
                if labels[i] == labels[j] {
                    self.coassign_sum[(i, j)] += 1.0;
                }
            }
        }
        self.labels.push(labels.to_vec());
        self.alpha.push(state.params.alpha.clone());
        self.sigma.push(state.params.sigma.clone());
        self.pi.push(state.weights.pi.clone());
    }

    /// `CC^T` of retained draw `r`.
    pub fn coassign_draw(&self, r: usize) -> DMatrix<f64> {
        let l = &self.labels[r];
        DMatrix::from_fn(self.n, self.n, |i, j| if l[i] == l[j] { 1.0 } else { 0.0 })
    }

    /// Number of clusters with more than `min_size` members in each draw.
    pub fn occupied_counts(&self, min_size: usize) -> Vec<usize> {
        self.labels
            .iter()
            .map(|l| {
                let mut c = vec![0usize; self.k];
                for &h in l {
                    c[h] += 1;
                }
                c.iter().filter(|&&x| x > min_size).count()
            })
            .collect()
    }

    /// Concatenate traces in order.
    pub fn merge(traces: Vec<Trace>) -> Result<Trace> {
        let mut it = traces.into_iter();
        let mut out = it.next().ok_or_else(|| Error::Validation("no traces to merge".into()))?;
        for t in it {
            if t.n != out.n || t.k != out.k {
                return Err(Error::Dimension("traces disagree on n or k".into()));
            }
            out.labels.extend(t.labels);
            out.coassign_sum += t.coassign_sum;
            out.alpha.extend(t.alpha);
            out.sigma.extend(t.sigma);
            out.pi.extend(t.pi);
            out.log_target.extend(t.log_target);
            out.acceptance.merge(&t.acceptance);
            out.warnings.extend(t.warnings);
        }
        Ok(out)
    }
}

/// Distinct observations at distance zero have zero Gamma density whenever
/// `alpha > 1`, which would pin every state at `-inf`. Such entries are raised to
/// half the smallest positive distance. Returns `None` when no entry is zero.
pub fn floor_zero_distances(d: &DistanceMatrix) -> Option<(DistanceMatrix, f64)> {
    let n = d.n();
    let mut min_pos = f64::INFINITY;
    let mut any_zero = false;
    for i in 0..n {
        for j in i + 1..n {
            let v = d.get(i, j);
            if v > 0.0 {
                min_pos = min_pos.min(v);
            } else {
                any_zero = true;
            }
        }
    }
    if !any_zero {
        return None;
    }
    let floor = if min_pos.is_finite() { 0.5 * min_pos } else { 1.0 };
    let m = DMatrix::from_fn(n, n, |i, j| {
        let v = d.get(i, j);
        if i != j && v <= 0.0 {
            floor
        } else {
            v
        }
    });
    Some((DistanceMatrix::new_unchecked(m), floor))
}

/// Log-likelihood plus parameter priors of a state.
pub fn log_target(
    d: &DistanceMatrix,
    state: &ChainState,
    prior: &PriorConfig,
    include_label_prior: bool,
) -> Result<f64> {
    Ok(total_log_likelihood(d, &state.assignment, &state.params, &state.weights, include_label_prior)?
        + prior_log_densities(&state.params, prior))
}

fn initial_assignment<R: Rng + ?Sized>(
    d: &DistanceMatrix,
    k: usize,
    init: &Init,
    rng: &mut R,
    warnings: &mut Vec<String>,
) -> Result<Assignment> {
    let n = d.n();
    match init {
        Init::Given(a) => {
            if a.n() != n || a.k() != k {
                return Err(Error::Dimension(format!(
                    "initial assignment has n = {}, k = {} but expected n = {n}, k = {k}",
                    a.n(),
                    a.k()
                )));
            }
            Ok(a.clone())
        }
        Init::Random => Assignment::new((0..n).map(|_| rng.random_range(0..k)).collect(), k),
        Init::Spectral => {
            if k > n {
                let msg = format!("k = {k} exceeds n = {n}; starting from round-robin labels");
                warnings.push(msg);
                return Assignment::new((0..n).map(|i| i % k).collect(), k);
            }
            Assignment::new(spectral_clustering(d, k, rng)?, k)
        }
    }
}

/// Run one chain. The generator is seeded from `cfg.seed` on stream `chain_id`,
/// so runs are reproducible and chains independent.
pub fn run_chain_with_id(
    d: &DistanceMatrix,
    cfg: &HmcConfig,
    prior: &PriorConfig,
    init: &Init,
    chain_id: u64,
) -> Result<Trace> {
    cfg.validate()?;
    prior.validate()?;
    let k = prior.k;
    let n = d.n();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(chain_id);
    let mut trace = Trace::new(n, k);
    if n < k {
        let msg = format!("n = {n} is smaller than k = {k}; some clusters stay empty");
        log::warn!("{msg}");
        trace.warnings.push(msg);
    }
    let floored = floor_zero_distances(d);
    if let Some((_, floor)) = &floored {
        let msg = format!("zero off-diagonal distances raised to {floor:e} (half the smallest positive distance)");
        log::warn!("{msg}");
        trace.warnings.push(msg);
    }
    let d = floored.as_ref().map_or(d, |(m, _)| m);
    let assignment = initial_assignment(d, k, init, &mut rng, &mut trace.warnings)?;
    let potential = Potential::new(d, cfg.relaxation, cfg.include_label_prior);

    // parameters consistent with the starting assignment
    let stats = cluster_stats(d, &assignment);
    let mut alpha = vec![2.0; k];
    let sigma = gibbs_sigma(&stats, &alpha, prior, &mut rng);
    mh_alpha(&stats, &mut alpha, &sigma, prior, cfg.rw_sd, &mut rng);
    let pi = gibbs_pi(&assignment.counts(), prior.dirichlet_conc, &mut rng);
    let mut state = ChainState::new(
        assignment,
        ClusterParams::new(alpha, sigma)?,
        MixtureWeights::new(pi, prior.dirichlet_conc)?,
        cfg.temperature,
    );

    for iter in 0..cfg.n_iterations {
        let out = hmc_step(&mut state, &potential, cfg, &mut rng)?;
        let acc = &mut trace.acceptance;
        acc.hmc_proposed += 1;
        acc.hmc_accepted += out.accepted as usize;
        acc.hmc_moves += (out.accepted && out.moved) as usize;
        acc.hmc_non_finite += out.non_finite as usize;

        let stats = potential.vertex_stats(&state.assignment);
        state.params.sigma = gibbs_sigma(&stats, &state.params.alpha, prior, &mut rng);
        state.weights.pi = gibbs_pi(&state.assignment.counts(), prior.dirichlet_conc, &mut rng);
        let (a, p) = mh_alpha(
            &stats,
            &mut state.params.alpha,
            &state.params.sigma,
            prior,
            cfg.rw_sd,
            &mut rng,
        );
        trace.acceptance.alpha_accepted += a;
        trace.acceptance.alpha_proposed += p;

        let ll = potential.vertex_log_likelihood(&state.assignment, &stats, &state.params, &state.weights);
        trace.log_target.push(ll + prior_log_densities(&state.params, prior));
        if iter >= cfg.burn_in && (iter - cfg.burn_in) % cfg.thin == 0 {
            trace.record(&state);
        }
    }
    if trace.acceptance.hmc_non_finite > 0 {
        trace.warnings.push(format!(
            "{} proposals rejected for non-finite energy",
            trace.acceptance.hmc_non_finite
        ));
    }
    Ok(trace)
}

/// Run one chain on stream 0.
pub fn run_chain(d: &DistanceMatrix, cfg: &HmcConfig, prior: &PriorConfig, init: &Init) -> Result<Trace> {
    run_chain_with_id(d, cfg, prior, init, 0)
}

/// Run `n_chains` independent chains in parallel and merge them in chain order.
pub fn run_chains(
    d: &DistanceMatrix,
    cfg: &HmcConfig,
    prior: &PriorConfig,
    init: &Init,
    n_chains: usize,
) -> Result<Trace> {
    if n_chains == 0 {
        return Err(Error::Parameter("need at least one chain".into()));
    }
    let traces: Vec<Trace> = (0..n_chains as u64)
        .into_par_iter()
        .map(|id| run_chain_with_id(d, cfg, prior, init, id))
        .collect::<Result<_>>()?;
    Trace::merge(traces)
}
