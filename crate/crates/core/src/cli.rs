//! Command-line front end: clustering runs, data simulation, label evaluation and
//! the desk-scale replication grids.
//!
//! Every clustering run writes `summary.json` holding the fully resolved
//! configuration, so `bdc cluster --config out/summary.json` repeats the run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::distmat::{
    compute_arccos_distances, compute_minkowski_distances, compute_subspace_distances, solve_self_expression,
    write_csv_matrix, DataMatrix, DistanceMatrix, SubspaceEmbeddingConfig,
};
use crate::error::{Error, Result};
use crate::evalgen::experiments::{
    beta_sigma_from_data, beta_sigma_from_distances, blobs_spec, skew_spec, skew_table, subspace_spec, vmf_spec,
    vmf_table, write_table_csv, ConcentrationReading, ExperimentConfig, VMF_ARCS,
};
use crate::evalgen::generators::{generate, Family, GeneratorSpec};
use crate::evalgen::metrics::MetricsReport;
use crate::likelihood::canonical_labels;
use crate::priors::PriorConfig;
use crate::sampler::{run_chains, AcceptanceStats, HmcConfig, Init, Relaxation};
use crate::summaries::{summarize, FactorizeConfig};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Exit status for usage and input errors.
pub const EXIT_USAGE: i32 = 2;
/// Exit status for numerical failures.
pub const EXIT_NUMERICAL: i32 = 3;

/// Map a library error to a process exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Numerical(_) => EXIT_NUMERICAL,
        _ => EXIT_USAGE,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum DistanceKind {
    /// Minkowski distance of order `q` between rows.
    #[default]
    Minkowski,
    /// Great-circle angle between rows.
    Arccos,
    /// Distances from a sparse self-expression of the rows.
    Subspace,
    /// The input is already a distance matrix.
    Precomputed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    #[default]
    Spectral,
    Random,
}

/// Resolved settings of a clustering run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub header: bool,
    pub validate: bool,
    pub distance: DistanceKind,
    pub q: f64,
    pub k: usize,
    pub pca: Option<usize>,
    pub jitter: Option<f64>,
    /// Fixed prior scale; elicited when absent.
    pub beta_sigma: Option<f64>,
    pub dirichlet_conc: Option<f64>,
    pub subspace: SubspaceEmbeddingConfig,
    pub seed: u64,
    pub iters: usize,
    /// Defaults to a fifth of `iters`.
    pub burn_in: Option<usize>,
    pub thin: usize,
    pub chains: usize,
    /// Worker threads; results do not depend on it.
    pub threads: Option<usize>,
    pub init: InitKind,
    pub leapfrog_steps: usize,
    pub stepsize: f64,
    pub momentum_sd: f64,
    pub temperature: f64,
    pub rw_sd: f64,
    pub include_label_prior: bool,
    pub relaxation: Relaxation,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let s = HmcConfig::new(2000);
        Self {
            input: None,
            header: false,
            validate: true,
            distance: DistanceKind::default(),
            q: 2.0,
            k: 2,
            pca: None,
            jitter: None,
            beta_sigma: None,
            dirichlet_conc: None,
            subspace: SubspaceEmbeddingConfig::default(),
            seed: 0,
            iters: s.n_iterations,
            burn_in: None,
            thin: s.thin,
            chains: 1,
            threads: None,
            init: InitKind::default(),
            leapfrog_steps: s.leapfrog_steps,
            stepsize: s.stepsize,
            momentum_sd: s.momentum_sd,
            temperature: s.temperature,
            rw_sd: s.rw_sd,
            include_label_prior: s.include_label_prior,
            relaxation: s.relaxation,
            out: PathBuf::from("bdc_out"),
        }
    }
}

impl RunConfig {
    /// Fill defaults that depend on other fields and check ranges.
    pub fn resolve(mut self) -> Result<Self> {
        match &self.input {
            None => return Err(Error::Parameter("an input file is required (--input)".into())),
            // absolute, so that the written configuration works from any directory
            Some(p) => {
                if let Ok(abs) = std::fs::canonicalize(p) {
                    self.input = Some(abs);
                }
            }
        }
        if self.burn_in.is_none() {
            self.burn_in = Some(self.iters / 5);
        }
        if self.k == 0 {
            return Err(Error::Parameter("k must be >= 1".into()));
        }
        if self.chains == 0 {
            return Err(Error::Parameter("chains must be >= 1".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Parameter("threads must be >= 1".into()));
        }
        if self.distance == DistanceKind::Precomputed && (self.pca.is_some() || self.jitter.is_some()) {
            return Err(Error::Parameter(
                "--pca and --jitter need coordinates, not a precomputed distance matrix".into(),
            ));
        }
        self.hmc().validate()?;
        Ok(self)
    }

    pub fn hmc(&self) -> HmcConfig {
        HmcConfig {
            leapfrog_steps: self.leapfrog_steps,
            stepsize: self.stepsize,
            momentum_sd: self.momentum_sd,
            temperature: self.temperature,
            n_iterations: self.iters,
            burn_in: self.burn_in.unwrap_or(self.iters / 5),
            thin: self.thin,
            seed: self.seed,
            include_label_prior: self.include_label_prior,
            rw_sd: self.rw_sd,
            relaxation: self.relaxation,
        }
    }
}

/// Read a configuration file: JSON (a bare config or a previous `summary.json`)
/// or `key = value` lines with `#` comments.
pub fn load_config_file(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value = if text.trim_start().starts_with('{') {
        let mut v: Value = serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))?;
        match v.get_mut("config") {
            Some(inner) => inner.take(),
            None => v,
        }
    } else {
        Value::Object(parse_key_values(&text).map_err(|m| Error::parse(path, m))?)
    };
    serde_json::from_value(value).map_err(|e| Error::parse(path, e.to_string()))
}

/// `a.b = 3` becomes `{"a": {"b": 3}}`; values are read as JSON when they parse
/// and as strings otherwise.
fn parse_key_values(text: &str) -> std::result::Result<Map<String, Value>, String> {
    let mut root = Map::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, val) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key = value", lineno + 1))?;
        let val = val.trim();
        let parsed = serde_json::from_str(val).unwrap_or_else(|_| Value::String(val.to_string()));
        let parts: Vec<&str> = key.trim().split('.').collect();
        let mut node = &mut root;
        for part in &parts[..parts.len() - 1] {
            node = node
                .entry(part.to_string())
                .or_insert_with(|| Value::Object(Map::new()))
                .as_object_mut()
                .ok_or_else(|| format!("line {}: {part} is not a table", lineno + 1))?;
        }
        node.insert(parts[parts.len() - 1].to_string(), parsed);
    }
    Ok(root)
}

#[derive(Debug, Parser)]
#[command(name = "bdc", version, about = "Bayesian clustering on pairwise distances")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cluster a data or distance CSV.
    Cluster(ClusterArgs),
    /// Generate a synthetic data set with truth labels.
    Simulate(SimulateArgs),
    /// Compare two label files.
    Eval(EvalArgs),
    /// Run a seeded replication grid and write a CSV table.
    Replicate(ReplicateArgs),
}

#[derive(Debug, Args, Default)]
pub struct ClusterArgs {
    /// Data CSV (rows are observations) or a distance matrix with `--distance precomputed`.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub distance: Option<DistanceKind>,
    /// Order of the Minkowski distance.
    #[arg(long)]
    pub q: Option<f64>,
    /// Maximum number of clusters.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub chains: Option<usize>,
    /// Project onto this many principal components first.
    #[arg(long)]
    pub pca: Option<usize>,
    /// Add uniform noise of this half-width to break ties.
    #[arg(long)]
    pub jitter: Option<f64>,
    #[arg(long)]
    pub beta_sigma: Option<f64>,
    #[arg(long)]
    pub dirichlet_conc: Option<f64>,
    #[arg(long, value_enum)]
    pub init: Option<InitKind>,
    #[arg(long)]
    pub stepsize: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON or key = value file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// The input CSV has a header row.
    #[arg(long)]
    pub header: bool,
    /// Skip the distance-matrix checks.
    #[arg(long)]
    pub no_validate: bool,
}

impl ClusterArgs {
    /// Configuration file (if any) overlaid with the flags that were given.
    pub fn to_config(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => load_config_file(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = self.$f.clone() { c.$f = v; })*};
        }
        set!(distance, q, k, iters, seed, chains, init, stepsize, out);
        macro_rules! set_opt {
            ($($f:ident),*) => {$(if self.$f.is_some() { c.$f = self.$f.clone(); })*};
        }
        set_opt!(input, burn_in, threads, pca, jitter, beta_sigma, dirichlet_conc);
        if self.header {
            c.header = true;
        }
        if self.no_validate {
            c.validate = false;
        }
        c.resolve()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Two-component skew-Gaussian mixture.
    Skew,
    /// Two-component von Mises-Fisher mixture on the circle.
    Vmf,
    /// Two spherical Gaussian blobs.
    Blobs,
    /// Two random 3-dimensional subspaces of R^20.
    Subspace,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Generator specification as JSON; overrides the preset.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "blobs")]
    pub preset: Preset,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    /// Angle between the two mean directions of the circular preset.
    #[arg(long, default_value_t = 2.0)]
    pub arc: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    /// Also write the report to this JSON file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TableId {
    /// Skew-Gaussian mixtures over dimensions.
    Table1,
    /// Circular mixtures over separations.
    Table4,
}

#[derive(Debug, Args)]
pub struct ReplicateArgs {
    #[arg(value_enum)]
    pub table: TableId,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 2000)]
    pub iters: usize,
    /// Dimensions of the skew grid.
    #[arg(long, value_delimiter = ',', default_values_t = vec![1usize, 5, 10, 30])]
    pub dims: Vec<usize>,
    /// Reading of the two circular concentration values.
    #[arg(long, value_enum, default_value = "concentration")]
    pub reading: ReadingArg,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReadingArg {
    Concentration,
    AngularSd,
}

/// Acceptance rates reported in the summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceSummary {
    pub hmc_rate: f64,
    pub hmc_move_rate: f64,
    pub alpha_rate: f64,
    pub counts: AcceptanceStats,
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub version: String,
    pub config: RunConfig,
    pub n: usize,
    pub beta_sigma: f64,
    pub beta_sigma_source: String,
    pub n_draws: usize,
    pub expected_vi: f64,
    pub n_candidates: usize,
    pub cluster_sizes: Vec<usize>,
    pub acceptance: AcceptanceSummary,
    pub factorization_objective: f64,
    pub uncertainty: Vec<f64>,
    pub warnings: Vec<String>,
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::Parameter(format!("thread pool: {e}")))?
            .install(f),
        None => f(),
    }
}

fn input_distances(cfg: &RunConfig, warnings: &mut Vec<String>) -> Result<(DistanceMatrix, f64, String)> {
    let input = cfg.input.as_deref().expect("resolved config has an input");
    if !input.exists() {
        return Err(Error::io(
            input,
            std::io::Error::new(std::io::ErrorKind::NotFound, "input file not found"),
        ));
    }
    if cfg.distance == DistanceKind::Precomputed {
        let d = DistanceMatrix::load_csv(input, cfg.header, cfg.validate)?;
        let (beta, source) = match cfg.beta_sigma {
            Some(b) => (b, "fixed".to_string()),
            None => {
                log::info!("distance matrix supplied; prior scale from median distance / 4");
                (beta_sigma_from_distances(&d), "median_distance".to_string())
            }
        };
        return Ok((d, beta, source));
    }
    let mut x = DataMatrix::load_csv(input, cfg.header)?;
    if let Some(dims) = cfg.pca {
        x = x.pca(dims)?;
    }
    if let Some(scale) = cfg.jitter {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x6a09_e667);
        x = x.jitter(scale, &mut rng)?;
    }
    let d = match cfg.distance {
        DistanceKind::Minkowski => compute_minkowski_distances(&x, cfg.q)?,
        DistanceKind::Arccos => compute_arccos_distances(&x)?,
        DistanceKind::Subspace => {
            let w = solve_self_expression(&x, &cfg.subspace)?;
            warnings.extend(w.warnings.iter().cloned());
            compute_subspace_distances(&w.values)?
        }
        DistanceKind::Precomputed => unreachable!(),
    };
    if let Some(b) = cfg.beta_sigma {
        return Ok((d, b, "fixed".into()));
    }
    if cfg.distance != DistanceKind::Minkowski {
        // the enclosing-ellipsoid volume is in coordinate units, not in the
        // units of angular or self-expression distances
        let b = beta_sigma_from_distances(&d);
        return Ok((d, b, "median_distance".into()));
    }
    match beta_sigma_from_data(&x, cfg.k) {
        Ok(b) => Ok((d, b, "ellipsoid".into())),
        Err(e) => {
            let msg = format!("enclosing-ellipsoid elicitation failed ({e}); using median distance / 4");
            log::warn!("{msg}");
            warnings.push(msg);
            let b = beta_sigma_from_distances(&d);
            Ok((d, b, "median_distance".into()))
        }
    }
}

fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut out = String::from("index,label\n");
    for (i, l) in labels.iter().enumerate() {
        out.push_str(&format!("{},{}\n", i + 1, l + 1));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Read a label file: `index,label` with a header, or a single column. Labels
/// are relabelled by first appearance.
pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut raw = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let field = line.rsplit(',').next().unwrap_or("").trim();
        match field.parse::<i64>() {
            Ok(v) => raw.push(v),
            Err(_) if lineno == 0 => continue,
            Err(_) => return Err(Error::parse(path, format!("line {}: bad label {field:?}", lineno + 1))),
        }
    }
    if raw.is_empty() {
        return Err(Error::parse(path, "no labels"));
    }
    let mut ids: BTreeMap<i64, usize> = BTreeMap::new();
    let dense: Vec<usize> = raw
        .iter()
        .map(|v| {
            let next = ids.len();
            *ids.entry(*v).or_insert(next)
        })
        .collect();
    Ok(canonical_labels(&dense))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Full clustering pipeline; returns the summary that was written.
pub fn cmd_cluster(cfg: &RunConfig) -> Result<RunSummary> {
    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    let mut warnings = Vec::new();
    let (d, beta_sigma, beta_sigma_source) = input_distances(cfg, &mut warnings)?;
    log::info!("n = {}, beta_sigma = {beta_sigma:.4} ({beta_sigma_source})", d.n());
    let mut prior = PriorConfig::new(cfg.k, beta_sigma)?;
    if let Some(c) = cfg.dirichlet_conc {
        prior = prior.with_dirichlet_conc(c)?;
    }
    let init = match cfg.init {
        InitKind::Spectral => Init::Spectral,
        InitKind::Random => Init::Random,
    };
    let hmc = cfg.hmc();
    let (trace, summary) = with_threads(cfg.threads, || {
        let trace = run_chains(&d, &hmc, &prior, &init, cfg.chains)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let summary = summarize(&trace, &FactorizeConfig::default(), &mut rng)?;
        Ok((trace, summary))
    })?;
    warnings.extend(trace.warnings.iter().cloned());
    warnings.extend(summary.assign_probs.warnings.iter().cloned());

    let labels = &summary.point.labels;
    let n_clusters = labels.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; n_clusters];
    for &l in labels {
        sizes[l] += 1;
    }
    write_labels(&cfg.out.join("labels.csv"), labels)?;
    write_csv_matrix(&cfg.out.join("coassign.csv"), &summary.coassign.values)?;
    write_csv_matrix(&cfg.out.join("assign_probs.csv"), &summary.assign_probs.probs.values)?;
    let acc = trace.acceptance;
    let out = RunSummary {
        version: VERSION.to_string(),
        config: cfg.clone(),
        n: d.n(),
        beta_sigma,
        beta_sigma_source,
        n_draws: trace.n_draws(),
        expected_vi: summary.point.expected_vi,
        n_candidates: summary.point.n_candidates,
        cluster_sizes: sizes,
        acceptance: AcceptanceSummary {
            hmc_rate: acc.hmc_rate(),
            hmc_move_rate: acc.hmc_move_rate(),
            alpha_rate: acc.alpha_rate(),
            counts: acc,
        },
        factorization_objective: summary.assign_probs.objective,
        uncertainty: summary.point.uncertainty.clone(),
        warnings,
    };
    write_json(&cfg.out.join("summary.json"), &out)?;
    Ok(out)
}

fn preset_spec(args: &SimulateArgs) -> GeneratorSpec {
    let mut spec = match args.preset {
        Preset::Skew => skew_spec(200, 1, args.seed),
        Preset::Vmf => vmf_spec(400, args.arc, ConcentrationReading::Concentration, args.seed),
        Preset::Blobs => blobs_spec(4.0, 2, args.seed),
        Preset::Subspace => subspace_spec(args.seed),
    };
    if let Some(n) = args.n {
        spec.n = n;
    }
    if let Some(p) = args.p {
        spec.p = p;
    }
    spec
}

/// Write `data.csv`, `truth.csv` and `spec.json` into the output directory.
pub fn cmd_simulate(args: &SimulateArgs) -> Result<GeneratorSpec> {
    let spec = match &args.spec {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| Error::parse(p, e.to_string()))?
        }
        None => preset_spec(args),
    };
    if matches!(spec.family, Family::VmfMixture { .. }) && spec.p != 2 && args.spec.is_none() {
        return Err(Error::Parameter("the circular preset lives in p = 2".into()));
    }
    let g = generate(&spec)?;
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    g.data.save_csv(args.out.join("data.csv"))?;
    write_labels(&args.out.join("truth.csv"), &g.labels)?;
    write_json(&args.out.join("spec.json"), &spec)?;
    Ok(spec)
}

pub fn cmd_eval(args: &EvalArgs) -> Result<MetricsReport> {
    let truth = read_labels(&args.truth)?;
    let labels = read_labels(&args.labels)?;
    let report = MetricsReport::compute(&labels, &truth)?;
    if let Some(p) = &args.out {
        write_json(p, &report)?;
    }
    Ok(report)
}

pub fn cmd_replicate(args: &ReplicateArgs) -> Result<()> {
    let mut sampler = HmcConfig::new(args.iters);
    sampler.seed = args.seed;
    with_threads(args.threads, || match args.table {
        TableId::Table1 => {
            let cfg = ExperimentConfig {
                repetitions: args.reps.unwrap_or(30),
                seed: args.seed,
                n: 200,
                sampler,
            };
            write_table_csv(&skew_table(&args.dims, &cfg)?, "p", &args.out)
        }
        TableId::Table4 => {
            let cfg = ExperimentConfig {
                repetitions: args.reps.unwrap_or(5),
                seed: args.seed,
                n: 400,
                sampler,
            };
            let reading = match args.reading {
                ReadingArg::Concentration => ConcentrationReading::Concentration,
                ReadingArg::AngularSd => ConcentrationReading::AngularSd,
            };
            write_table_csv(&vmf_table(&VMF_ARCS, reading, &cfg)?, "arc_length", &args.out)
        }
    })
}

/// Run a parsed command and return the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Cluster(a) => a.to_config().and_then(|c| cmd_cluster(&c)).map(|s| {
            println!(
                "{} observations, {} clusters, expected VI {:.4}; outputs in {}",
                s.n,
                s.cluster_sizes.len(),
                s.expected_vi,
                s.config.out.display()
            );
        }),
        Command::Simulate(a) => cmd_simulate(&a).map(|s| println!("wrote {} observations to {}", s.n, a.out.display())),
        Command::Eval(a) => cmd_eval(&a).and_then(|r| {
            println!("{}", serde_json::to_string_pretty(&r)?);
            Ok(())
        }),
        Command::Replicate(a) => cmd_replicate(&a).map(|_| println!("wrote {}", a.out.display())),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
