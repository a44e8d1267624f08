use std::path::{Path, PathBuf};

use serde::Deserialize;
use sha2::{Digest, Sha256};
use spectral_guidance::{
    ddim_subsequence, linear_ddpm_schedule, make_lpf, make_synthetic_prior, Complex64,
    DegradationSpec, GradientMode, OptimizeOptions, SamplerKind, Schedule, SpectralPrior,
    VarianceTarget,
};

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub prior: PriorConfig,
    pub degradation: Option<DegradationConfig>,
    pub schedule: Option<ScheduleConfig>,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub realizations: RealizationConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub estimate: EstimateConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Either the synthetic circulant prior `(d, l, mu_const)` or a CSV written
/// by `estimate-prior`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    pub d: Option<usize>,
    pub l: Option<f64>,
    #[serde(default)]
    pub mu_const: f64,
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DegradationConfig {
    /// Fraction of frequency bins the low-pass operator keeps.
    pub fraction: f64,
    pub sigma_y: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    #[serde(default = "default_t")]
    pub t: usize,
    pub steps: Vec<usize>,
}

fn default_t() -> usize {
    1000
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightSource {
    Heuristic,
    OptimizeK1,
    OptimizeAveraged,
    PigdmHeuristic,
    Ideal,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    #[serde(default = "default_kind")]
    pub kind: SamplerKind,
    #[serde(default = "default_source")]
    pub weights: WeightSource,
    #[serde(default = "default_zeta_primes")]
    pub zeta_primes: Vec<f64>,
    #[serde(default = "default_zeta_cap")]
    pub zeta_cap: f64,
    #[serde(default)]
    pub variance_target: TargetChoice,
}

fn default_kind() -> SamplerKind {
    SamplerKind::Dps
}

fn default_source() -> WeightSource {
    WeightSource::OptimizeK1
}

fn default_zeta_primes() -> Vec<f64> {
    vec![0.1, 0.3, 0.5, 0.7, 1.0]
}

fn default_zeta_cap() -> f64 {
    spectral_guidance::simulator::DEFAULT_ZETA_CAP
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            kind: default_kind(),
            weights: default_source(),
            zeta_primes: default_zeta_primes(),
            zeta_cap: default_zeta_cap(),
            variance_target: TargetChoice::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetChoice {
    #[default]
    Posterior,
    Prior,
}

impl From<TargetChoice> for VarianceTarget {
    fn from(t: TargetChoice) -> Self {
        match t {
            TargetChoice::Posterior => VarianceTarget::Posterior,
            TargetChoice::Prior => VarianceTarget::Prior,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RealizationConfig {
    pub n: usize,
}

impl Default for RealizationConfig {
    fn default() -> Self {
        Self { n: 1 }
    }
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientChoice {
    #[default]
    Analytic,
    FiniteDifference,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub bounds: Option<[f64; 2]>,
    pub max_iters: Option<usize>,
    pub f_tol: Option<f64>,
    pub grad_step: Option<f64>,
    #[serde(default)]
    pub gradient: GradientChoice,
    /// Rungs solved before each target step count; only entries below the
    /// target are used.
    pub ladder: Option<Vec<usize>>,
    pub keep_dims: Option<usize>,
    #[serde(default)]
    pub report_exact: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimGuidance {
    #[default]
    None,
    Heuristic,
    Optimal,
    PigdmHeuristic,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    #[serde(default = "default_runs")]
    pub n_runs: usize,
    #[serde(default)]
    pub guidance: SimGuidance,
}

fn default_runs() -> usize {
    100
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self { n_runs: default_runs(), guidance: SimGuidance::None }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    /// CSV with one real signal per row.
    pub samples: Option<PathBuf>,
    /// Draw this many signals from the configured prior instead.
    pub n_samples: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// DPS weights indexed `s = 1..S`; a single value means constant.
    pub zeta: Option<Vec<f64>>,
    pub g: Option<Vec<f64>>,
    pub r: Option<Vec<f64>>,
}

/// A parsed configuration plus what is needed to stamp its outputs.
pub struct Loaded {
    pub config: ExperimentConfig,
    pub hash: String,
    pub base_dir: PathBuf,
}

pub fn load(path: &Path) -> Result<Loaded, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let config: ExperimentConfig =
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let hash = Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect();
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(Loaded { config, hash, base_dir })
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if let Some(sched) = &self.schedule {
            if sched.steps.is_empty() {
                return Err(bad("schedule.steps must list at least one step count"));
            }
            if let Some(s) = sched.steps.iter().find(|s| **s == 0 || **s > sched.t) {
                return Err(bad(format!("schedule.steps entry {s} outside 1..={}", sched.t)));
            }
        }
        if self.realizations.n == 0 {
            return Err(bad("realizations.n must be >= 1"));
        }
        if self.sampler.zeta_primes.iter().any(|z| !(z.is_finite() && *z >= 0.0)) {
            return Err(bad("sampler.zeta_primes must be finite and non-negative"));
        }
        if !(self.sampler.zeta_cap > 0.0) {
            return Err(bad("sampler.zeta_cap must be positive"));
        }
        if self.simulation.n_runs < 2 {
            return Err(bad("simulation.n_runs must be >= 2"));
        }
        self.optimize_options(None)?.validate().map_err(|e| bad(format!("optimizer: {e}")))?;
        Ok(())
    }

    pub fn prior(&self, base: &Path) -> Result<SpectralPrior, CliError> {
        let p = &self.prior;
        match (&p.file, p.d, p.l) {
            (Some(file), None, None) => read_prior_csv(&base.join(file)),
            (None, Some(d), Some(l)) => {
                make_synthetic_prior(d, l, p.mu_const).map_err(|e| bad(format!("prior: {e}")))
            }
            _ => Err(bad("prior needs either `file` or both `d` and `l`")),
        }
    }

    pub fn spec(&self, d: usize) -> Result<DegradationSpec, CliError> {
        let deg = self.degradation.as_ref().ok_or_else(|| bad("missing [degradation] section"))?;
        make_lpf(d, deg.fraction)
            .and_then(|s| s.with_sigma_y(deg.sigma_y))
            .map_err(|e| bad(format!("degradation: {e}")))
    }

    pub fn steps(&self) -> Result<&[usize], CliError> {
        Ok(&self.schedule_section()?.steps)
    }

    fn schedule_section(&self) -> Result<&ScheduleConfig, CliError> {
        self.schedule.as_ref().ok_or_else(|| bad("missing [schedule] section"))
    }

    pub fn full_schedule(&self) -> Result<Schedule, CliError> {
        linear_ddpm_schedule(self.schedule_section()?.t).map_err(|e| bad(format!("schedule: {e}")))
    }

    pub fn sub_schedule(&self, full: &Schedule, steps: usize) -> Result<Schedule, CliError> {
        ddim_subsequence(full, steps).map_err(|e| bad(format!("schedule: {e}")))
    }

    /// Optimizer options for a target step count, with the ladder cut to
    /// the rungs below it.
    pub fn optimize_options(&self, target: Option<usize>) -> Result<OptimizeOptions, CliError> {
        let o = &self.optimizer;
        let mut opts = OptimizeOptions::default();
        if let Some([lo, hi]) = o.bounds {
            opts.bounds = (lo, hi);
        }
        if let Some(v) = o.max_iters {
            opts.max_iters = v;
        }
        if let Some(v) = o.f_tol {
            opts.f_tol = v;
        }
        if let Some(v) = o.grad_step {
            opts.grad_step = v;
        }
        opts.gradient = match o.gradient {
            GradientChoice::Analytic => GradientMode::Analytic,
            GradientChoice::FiniteDifference => GradientMode::FiniteDifference,
        };
        opts.keep_dims = o.keep_dims;
        opts.report_exact = o.report_exact;
        if let (Some(ladder), Some(target)) = (&o.ladder, target) {
            if ladder.windows(2).any(|w| w[1] <= w[0]) {
                return Err(bad("optimizer.ladder must be strictly increasing"));
            }
            let mut rungs: Vec<usize> = ladder.iter().copied().filter(|s| *s < target).collect();
            if !rungs.is_empty() {
                rungs.push(target);
                opts.ladder = Some(rungs);
            }
        }
        Ok(opts)
    }
}

/// Reads `bin,mu_re,mu_im,lambda` rows as written by `estimate-prior`.
pub fn read_prior_csv(path: &Path) -> Result<SpectralPrior, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| bad(format!("cannot read prior {}: {e}", path.display())))?;
    let mut mu = Vec::new();
    let mut lambda = Vec::new();
    for (i, row) in reader.deserialize::<(usize, f64, f64, f64)>().enumerate() {
        let (bin, re, im, lam) = row.map_err(|e| bad(format!("prior {}: {e}", path.display())))?;
        if bin != i {
            return Err(bad(format!("prior {}: bins must be listed in order", path.display())));
        }
        mu.push(Complex64::new(re, im));
        lambda.push(lam);
    }
    SpectralPrior::new(mu, lambda).map_err(|e| bad(format!("prior {}: {e}", path.display())))
}

/// Reads real signals, one per row, skipping `#` comment lines.
pub fn read_samples_csv(path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| bad(format!("cannot read samples {}: {e}", path.display())))?;
    reader
        .deserialize::<Vec<f64>>()
        .map(|r| r.map_err(|e| bad(format!("samples {}: {e}", path.display()))))
        .collect()
}
