use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use spectral_guidance::schedule::all_step_coeffs;
use spectral_guidance::simulator::heuristic_weight_profile;
use spectral_guidance::transfer::{ideal_triple, output_distribution, prior_triple, weighted_triple};
use spectral_guidance::{
    default_init, estimate_spectral_prior, iterative_ladder, optimize_multistart, optimize_weights,
    sample_prior, synthetic_realizations, DegradationSpec, Guidance, LossContext, Observation,
    OptimizeOptions, SamplerKind, Schedule, SimConfig, Simulator, SpectralPrior, TransferTriple,
    WeightSchedule, WeightSolution,
};

use crate::config::{read_samples_csv, ExperimentConfig, Loaded, SimGuidance, WeightSource};
use crate::output::{num, Stamp, Table};
use crate::CliError;

/// Stream offset for prior draws in `estimate-prior`, clear of the run and
/// realization streams.
const ESTIMATE_STREAM: u64 = 2 << 32;

pub struct Experiment {
    pub cfg: ExperimentConfig,
    pub stamp: Stamp,
    pub out_dir: PathBuf,
    base_dir: PathBuf,
}

/// Everything a command derives from the config before doing work.
struct Problem {
    prior: SpectralPrior,
    spec: DegradationSpec,
    full: Schedule,
    obs: Vec<Observation>,
}

impl Experiment {
    pub fn new(loaded: Loaded, seed: Option<u64>, out: Option<PathBuf>) -> Result<Self, CliError> {
        let Loaded { mut config, hash, base_dir } = loaded;
        if let Some(seed) = seed {
            config.seed = seed;
        }
        config.validate()?;
        let out_dir = out.unwrap_or_else(|| base_dir.join(&config.output_dir));
        std::fs::create_dir_all(&out_dir)
            .map_err(|e| CliError::Io(format!("{}: {e}", out_dir.display())))?;
        let stamp = Stamp { experiment: config.name.clone(), config_hash: hash, seed: config.seed };
        Ok(Self { cfg: config, stamp, out_dir, base_dir })
    }

    fn problem(&self) -> Result<Problem, CliError> {
        let prior = self.cfg.prior(&self.base_dir)?;
        let spec = self.cfg.spec(prior.dim())?;
        let full = self.cfg.full_schedule()?;
        let obs = synthetic_realizations(&prior, &spec, self.cfg.realizations.n, self.cfg.seed)?;
        Ok(Problem { prior, spec, full, obs })
    }

    fn options(&self, steps: usize) -> Result<OptimizeOptions, CliError> {
        self.cfg.optimize_options(Some(steps))
    }

    fn context(&self, p: &Problem, sched: &Schedule, obs: Vec<Observation>) -> Result<LossContext, CliError> {
        let ctx = LossContext::realizations(p.prior.clone(), p.spec.clone(), sched.clone(), SamplerKind::Dps, obs)?;
        Ok(ctx.with_variance_target(self.cfg.sampler.variance_target.into())?)
    }

    fn sim_config(&self, p: &Problem, sched: &Schedule, guidance: Guidance) -> SimConfig {
        SimConfig {
            prior: p.prior.clone(),
            spec: p.spec.clone(),
            schedule: sched.clone(),
            guidance,
            n_runs: self.cfg.simulation.n_runs,
            seed: self.cfg.seed,
        }
    }

    fn write(&self, table: &Table, name: &str) -> Result<(), CliError> {
        table.write(&self.out_dir, name, &self.stamp).map(|_| ())
    }
}

/// DPS solve, cold or along the configured ladder.
fn solve_dps(ctx: &LossContext, full: &Schedule, opts: &OptimizeOptions) -> Result<WeightSolution, CliError> {
    let sol = if opts.ladder.is_some() {
        iterative_ladder(ctx, full, opts)?
    } else {
        optimize_weights(ctx, &default_init(ctx), opts)?
    };
    Ok(sol)
}

/// ΠGDM solve started both from the default point and from the DPS optimum.
fn solve_pigdm(ctx: &LossContext, dps: &WeightSolution, opts: &OptimizeOptions) -> Result<WeightSolution, CliError> {
    let pctx = ctx.clone().with_sampler_kind(SamplerKind::Pigdm);
    let zeta = dps.weights.to_flat();
    let starts = [default_init(&pctx), WeightSchedule::pigdm_from_dps(&zeta, ctx.spec().sigma_y())];
    let opts = OptimizeOptions { ladder: None, ..opts.clone() };
    Ok(optimize_multistart(&pctx, &starts, &opts)?)
}

fn solve(ctx: &LossContext, kind: SamplerKind, full: &Schedule, opts: &OptimizeOptions) -> Result<WeightSolution, CliError> {
    let dps = solve_dps(ctx, full, opts)?;
    match kind {
        SamplerKind::Dps => Ok(dps),
        SamplerKind::Pigdm => solve_pigdm(ctx, &dps, opts),
    }
}

fn param_names(kind: SamplerKind) -> &'static [&'static str] {
    match kind {
        SamplerKind::Dps => &["zeta"],
        SamplerKind::Pigdm => &["g", "r"],
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

struct Solved {
    steps: usize,
    label: String,
    sol: WeightSolution,
}

pub fn optimize(exp: &Experiment) -> Result<(), CliError> {
    let source = exp.cfg.sampler.weights;
    if !matches!(source, WeightSource::OptimizeK1 | WeightSource::OptimizeAveraged) {
        return Err(CliError::Config(
            "optimize needs sampler.weights = \"optimize-k1\" or \"optimize-averaged\"".into(),
        ));
    }
    let kind = exp.cfg.sampler.kind;
    let p = exp.problem()?;
    let per_steps: Vec<Vec<Solved>> = exp
        .cfg
        .steps()?
        .par_iter()
        .map(|&steps| {
            let sched = exp.cfg.sub_schedule(&p.full, steps)?;
            let opts = exp.options(steps)?;
            let solved: Vec<Solved> = if source == WeightSource::OptimizeAveraged {
                let ctx = LossContext::analytic(p.prior.clone(), p.spec.clone(), sched, SamplerKind::Dps)?
                    .with_variance_target(exp.cfg.sampler.variance_target.into())?;
                vec![Solved { steps, label: "avg".into(), sol: solve(&ctx, kind, &p.full, &opts)? }]
            } else {
                p.obs
                    .iter()
                    .enumerate()
                    .map(|(k, o)| {
                        let ctx = exp.context(&p, &sched, vec![o.clone()])?;
                        Ok(Solved { steps, label: k.to_string(), sol: solve(&ctx, kind, &p.full, &opts)? })
                    })
                    .collect::<Result<_, CliError>>()?
            };
            write_weights(exp, kind, steps, &solved)?;
            Ok(solved)
        })
        .collect::<Result<_, CliError>>()?;

    let mut losses =
        Table::new(&["steps", "realization", "initial_loss", "final_loss", "w2", "iterations"]);
    for s in per_steps.iter().flatten() {
        losses.push(vec![
            s.steps.to_string(),
            s.label.clone(),
            num(s.sol.initial_loss),
            num(s.sol.final_loss),
            num(s.sol.final_loss.max(0.0).sqrt()),
            s.sol.iterations.to_string(),
        ]);
    }
    exp.write(&losses, "losses.csv")
}

fn write_weights(exp: &Experiment, kind: SamplerKind, steps: usize, solved: &[Solved]) -> Result<(), CliError> {
    let mut header: Vec<String> = ["s", "param", "mean", "std"].iter().map(|s| s.to_string()).collect();
    header.extend(solved.iter().map(|s| format!("w_{}", s.label)));
    let mut table = Table::with_header(header);
    let flats: Vec<Vec<f64>> = solved.iter().map(|s| s.sol.weights.to_flat()).collect();
    for (j, name) in param_names(kind).iter().enumerate() {
        for s in 1..=steps {
            let idx = j * steps + s - 1;
            let vals: Vec<f64> = flats.iter().map(|f| f[idx]).collect();
            let (m, sd) = mean_std(&vals);
            let mut row = vec![s.to_string(), name.to_string(), num(m), num(sd)];
            row.extend(vals.iter().map(|v| num(*v)));
            table.push(row);
        }
    }
    exp.write(&table, &format!("weights_S{steps}.csv"))
}

pub fn sweep_wasserstein(exp: &Experiment) -> Result<(), CliError> {
    let p = exp.problem()?;
    let zeta_primes = &exp.cfg.sampler.zeta_primes;
    let cap = exp.cfg.sampler.zeta_cap;
    let rows: Vec<Vec<Vec<String>>> = exp
        .cfg
        .steps()?
        .par_iter()
        .map(|&steps| {
            let sched = exp.cfg.sub_schedule(&p.full, steps)?;
            let opts = exp.options(steps)?;
            let sim = exp.sim_config(&p, &sched, Guidance::None);
            let mut rows = Vec::new();
            let mut push = |method: &str, zp: Option<f64>, k: usize, loss: f64| {
                rows.push(vec![
                    method.to_string(),
                    zp.map(num).unwrap_or_default(),
                    steps.to_string(),
                    k.to_string(),
                    num(loss.max(0.0).sqrt()),
                ]);
            };
            for (k, o) in p.obs.iter().enumerate() {
                let ctx = exp.context(&p, &sched, vec![o.clone()])?;
                push("ideal", None, k, ctx.ideal_loss()?);
                let dps = solve_dps(&ctx, &p.full, &opts)?;
                push("dps-optimized", None, k, dps.final_loss);
                push("pigdm-optimized", None, k, solve_pigdm(&ctx, &dps, &opts)?.final_loss);
                for &zp in zeta_primes {
                    let profile = heuristic_weight_profile(zp, cap, &sim, o)?;
                    push("dps-heuristic", Some(zp), k, ctx.loss(&WeightSchedule::dps(profile.mean))?);
                }
            }
            Ok(rows)
        })
        .collect::<Result<_, CliError>>()?;

    let mut table = Table::new(&["method", "zeta_prime", "steps", "realization", "w2"]);
    for r in rows.into_iter().flatten() {
        table.push(r);
    }
    exp.write(&table, "sweep.csv")
}

/// Guidance to simulate plus its closed-form transfer, when it has one.
fn simulated_guidances(
    exp: &Experiment,
    p: &Problem,
    sched: &Schedule,
) -> Result<Vec<(String, Guidance, Option<TransferTriple>)>, CliError> {
    let coeffs = all_step_coeffs(sched, &p.prior)?;
    let out = match exp.cfg.simulation.guidance {
        SimGuidance::None => vec![("none".into(), Guidance::None, Some(prior_triple(&coeffs)?))],
        SimGuidance::Optimal => {
            vec![("optimal".into(), Guidance::Optimal, Some(ideal_triple(&coeffs, &p.spec, &p.prior)?))]
        }
        SimGuidance::PigdmHeuristic => {
            let w = WeightSchedule::pigdm_heuristic(sched.values());
            let triple = weighted_triple(&coeffs, &p.spec, &w)?;
            let WeightSchedule::Pigdm { g, r } = w else { unreachable!("ΠGDM schedule") };
            vec![("pigdm-heuristic".into(), Guidance::Pigdm { g, r }, Some(triple))]
        }
        SimGuidance::Heuristic => exp
            .cfg
            .sampler
            .zeta_primes
            .iter()
            .map(|&zp| {
                let g = Guidance::DpsHeuristic { zeta_prime: zp, cap: exp.cfg.sampler.zeta_cap };
                (format!("dps-heuristic-{}", num(zp)), g, None)
            })
            .collect(),
    };
    Ok(out)
}

pub fn simulate(exp: &Experiment) -> Result<(), CliError> {
    let p = exp.problem()?;
    let steps = exp.cfg.steps()?;
    // Surface operator problems as config errors before fanning out.
    let probe = exp.cfg.sub_schedule(&p.full, steps[0])?;
    Simulator::new(exp.sim_config(&p, &probe, Guidance::None))
        .map_err(|e| CliError::Config(format!("simulation setup: {e}")))?;

    steps
        .par_iter()
        .map(|&steps| {
            let sched = exp.cfg.sub_schedule(&p.full, steps)?;
            let mut stats_table = Table::new(&[
                "guidance",
                "realization",
                "bin",
                "emp_mean_re",
                "emp_mean_im",
                "emp_var",
                "pred_mean_re",
                "pred_mean_im",
                "pred_var",
                "n_runs",
            ]);
            for (label, guidance, triple) in simulated_guidances(exp, &p, &sched)? {
                let sim = Simulator::new(exp.sim_config(&p, &sched, guidance))?;
                for (k, o) in p.obs.iter().enumerate() {
                    let stats = sim.monte_carlo(o)?;
                    let law = triple.as_ref().map(|t| output_distribution(t, o, &p.prior)).transpose()?;
                    for i in 0..p.prior.dim() {
                        let pred = law.as_ref().map_or([String::new(), String::new(), String::new()], |l| {
                            [num(l.mean[i].re), num(l.mean[i].im), num(l.var[i])]
                        });
                        let [pr, pi, pv] = pred;
                        stats_table.push(vec![
                            label.clone(),
                            k.to_string(),
                            i.to_string(),
                            num(stats.emp_mean[i].re),
                            num(stats.emp_mean[i].im),
                            num(stats.emp_var[i]),
                            pr,
                            pi,
                            pv,
                            stats.n_runs.to_string(),
                        ]);
                    }
                }
            }
            exp.write(&stats_table, &format!("run_stats_S{steps}.csv"))?;

            let sim = exp.sim_config(&p, &sched, Guidance::None);
            let mut profile_table = Table::new(&["zeta_prime", "realization", "step", "mean_zeta", "std_zeta"]);
            for &zp in &exp.cfg.sampler.zeta_primes {
                for (k, o) in p.obs.iter().enumerate() {
                    let profile = heuristic_weight_profile(zp, exp.cfg.sampler.zeta_cap, &sim, o)?;
                    for s in 1..=steps {
                        profile_table.push(vec![
                            num(zp),
                            k.to_string(),
                            s.to_string(),
                            num(profile.mean[s - 1]),
                            num(profile.std[s - 1]),
                        ]);
                    }
                }
            }
            exp.write(&profile_table, &format!("heuristic_profile_S{steps}.csv"))
        })
        .collect::<Result<Vec<()>, CliError>>()?;
    Ok(())
}

pub fn estimate_prior(exp: &Experiment) -> Result<(), CliError> {
    let est = &exp.cfg.estimate;
    let samples = match (&est.samples, est.n_samples) {
        (Some(path), None) => read_samples_csv(&exp.base_dir.join(path))?,
        (None, Some(n)) => {
            let prior = exp.cfg.prior(&exp.base_dir)?;
            (0..n as u64)
                .map(|i| {
                    let mut rng = ChaCha8Rng::seed_from_u64(exp.cfg.seed);
                    rng.set_stream(ESTIMATE_STREAM | i);
                    sample_prior(&prior, &mut rng)
                })
                .collect()
        }
        _ => {
            return Err(CliError::Config(
                "estimate needs exactly one of `samples` or `n_samples`".into(),
            ))
        }
    };
    if samples.iter().any(|s| s.len() != samples[0].len()) {
        return Err(CliError::Config("samples must all have the same length".into()));
    }
    let prior = estimate_spectral_prior(&samples)?;
    let mut table = Table::new(&["bin", "mu_re", "mu_im", "lambda"]);
    for (i, (m, l)) in prior.mu_f().iter().zip(prior.lambda0()).enumerate() {
        table.push(vec![i.to_string(), num(m.re), num(m.im), num(*l)]);
    }
    exp.write(&table, "prior.csv")
}

/// Expands a one-element list to a constant schedule.
fn expand(v: &[f64], steps: usize, key: &str) -> Result<Vec<f64>, CliError> {
    match v.len() {
        1 => Ok(vec![v[0]; steps]),
        n if n == steps => Ok(v.to_vec()),
        n => Err(CliError::Config(format!("eval.{key} has {n} entries, need 1 or {steps}"))),
    }
}

fn eval_weights(cfg: &ExperimentConfig, steps: usize) -> Result<WeightSchedule, CliError> {
    let e = &cfg.eval;
    match (&e.zeta, &e.g, &e.r) {
        (Some(z), None, None) => Ok(WeightSchedule::dps(expand(z, steps, "zeta")?)),
        (None, Some(g), Some(r)) => WeightSchedule::pigdm(expand(g, steps, "g")?, expand(r, steps, "r")?)
            .map_err(|err| CliError::Config(format!("eval: {err}"))),
        _ => Err(CliError::Config("eval needs either `zeta` or both `g` and `r`".into())),
    }
}

pub fn eval_loss(exp: &Experiment) -> Result<(), CliError> {
    let p = exp.problem()?;
    let steps = exp.cfg.steps()?;
    let weights: Vec<WeightSchedule> =
        steps.iter().map(|&s| eval_weights(&exp.cfg, s)).collect::<Result<_, _>>()?;
    let mut table = Table::new(&["steps", "realization", "loss", "w2", "ideal_w2"]);
    for (&s, w) in steps.iter().zip(&weights) {
        let sched = exp.cfg.sub_schedule(&p.full, s)?;
        for (k, o) in p.obs.iter().enumerate() {
            let ctx = exp.context(&p, &sched, vec![o.clone()])?.with_sampler_kind(w.kind());
            let loss = ctx.loss(w)?;
            let ideal = ctx.ideal_loss()?;
            table.push(vec![
                s.to_string(),
                k.to_string(),
                num(loss),
                num(loss.max(0.0).sqrt()),
                num(ideal.max(0.0).sqrt()),
            ]);
        }
        write_schedule(exp, &sched)?;
        write_transfer(exp, &weighted_triple(&all_step_coeffs(&sched, &p.prior)?, &p.spec, w)?, s)?;
        let actx = LossContext::analytic(p.prior.clone(), p.spec.clone(), sched, w.kind())?
            .with_variance_target(exp.cfg.sampler.variance_target.into())?;
        let loss = actx.loss(w)?;
        let ideal = actx.ideal_loss()?;
        table.push(vec![
            s.to_string(),
            "avg".into(),
            num(loss),
            num(loss.max(0.0).sqrt()),
            num(ideal.max(0.0).sqrt()),
        ]);
    }
    exp.write(&table, "eval_loss.csv")
}

fn write_schedule(exp: &Experiment, sched: &Schedule) -> Result<(), CliError> {
    let mut table = Table::new(&["s", "alpha_bar"]);
    for s in 1..=sched.len() {
        table.push(vec![s.to_string(), num(sched.alpha_bar(s))]);
    }
    exp.write(&table, &format!("schedule_S{}.csv", sched.len()))
}

/// Output gains on the start noise (D1), measurement (D2) and prior mean (D3).
fn write_transfer(exp: &Experiment, t: &TransferTriple, steps: usize) -> Result<(), CliError> {
    let mut table = Table::new(&["bin", "d1_re", "d1_im", "d2_re", "d2_im", "d3_re", "d3_im"]);
    for i in 0..t.dim() {
        let (d1, d2, d3) = (t.noise[i], t.measurement[i], t.prior_mean[i]);
        table.push(vec![i.to_string(), num(d1.re), num(d1.im), num(d2.re), num(d2.im), num(d3.re), num(d3.im)]);
    }
    exp.write(&table, &format!("transfer_S{steps}.csv"))
}
