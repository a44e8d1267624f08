//! Box-constrained minimization of the W2 loss over guidance weights.

use crate::error::{Error, Result};
use crate::objective::LossContext;
use crate::schedule::{ddim_subsequence, Schedule};
use crate::spectral::{DegradationSpec, SpectralPrior};
use crate::transfer::{SamplerKind, WeightSchedule};

/// How the optimizer obtains gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GradientMode {
    /// Reverse accumulation through the step recursion.
    #[default]
    Analytic,
    /// Central differences with step `grad_step·max(1, |θ_i|)`.
    FiniteDifference,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeOptions {
    pub bounds: (f64, f64),
    pub max_iters: usize,
    pub f_tol: f64,
    pub grad_step: f64,
    pub gradient: GradientMode,
    /// Step counts solved in turn, each warm-starting the next.
    pub ladder: Option<Vec<usize>>,
    /// Optimize on the `k` bins with the largest prior eigenvalues only.
    pub keep_dims: Option<usize>,
    /// Include the dropped bins' constant contribution in reported losses.
    pub report_exact: bool,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            bounds: (-5.0, 5.0),
            max_iters: 2500,
            f_tol: 1e-6,
            grad_step: 1e-6,
            gradient: GradientMode::Analytic,
            ladder: None,
            keep_dims: None,
            report_exact: false,
        }
    }
}

impl OptimizeOptions {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.bounds;
        if !(lo < hi) {
            return Err(Error::InvalidArgument(format!("bounds ({lo}, {hi}) need lo < hi")));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be >= 1".into()));
        }
        if !(self.f_tol > 0.0) {
            return Err(Error::InvalidArgument("f_tol must be > 0".into()));
        }
        if !(self.grad_step > 0.0) {
            return Err(Error::InvalidArgument("grad_step must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightSolution {
    pub weights: WeightSchedule,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub iterations: usize,
    /// `(iteration, loss)` of every accepted iterate, starting with the initial point.
    pub trace: Vec<(usize, f64)>,
}

/// Central-difference gradient `(f(θ + h·e_i) − f(θ − h·e_i)) / 2h`.
pub fn finite_diff_gradient<F>(f: F, theta: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step {h} must be > 0")));
    }
    fd_gradient(&f, theta, |_| h)
}

fn fd_gradient<F, H>(f: &F, theta: &[f64], step: H) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
    H: Fn(f64) -> f64,
{
    let mut x = theta.to_vec();
    let mut g = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        let h = step(theta[i]);
        x[i] = theta[i] + h;
        let fp = f(&x)?;
        x[i] = theta[i] - h;
        let fm = f(&x)?;
        x[i] = theta[i];
        if !(fp.is_finite() && fm.is_finite()) {
            return Err(Error::NonFinite(format!("objective near coordinate {i}")));
        }
        g.push((fp - fm) / (2.0 * h));
    }
    Ok(g)
}

/// Starting weights: constant `ζ = 0.1` for DPS, the schedule heuristic for ΠGDM.
pub fn default_init(ctx: &LossContext) -> WeightSchedule {
    match ctx.kind() {
        SamplerKind::Dps => WeightSchedule::dps_constant(ctx.steps(), 0.1),
        SamplerKind::Pigdm => WeightSchedule::pigdm_heuristic(ctx.schedule().values()),
    }
}

/// The `k` bins with the largest prior eigenvalues (ties to the lower
/// index), returned in increasing index order with the reduced problem.
pub fn reduce_dimensions(
    prior: &SpectralPrior,
    spec: &DegradationSpec,
    k: usize,
) -> Result<(SpectralPrior, DegradationSpec, Vec<usize>)> {
    let bins = top_bins(prior, k)?;
    Ok((prior.select_bins(&bins), spec.select_bins(&bins), bins))
}

fn top_bins(prior: &SpectralPrior, k: usize) -> Result<Vec<usize>> {
    let d = prior.dim();
    if k == 0 || k > d {
        return Err(Error::InvalidArgument(format!("keep_dims {k} outside 1..={d}")));
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| prior.lambda0()[b].total_cmp(&prior.lambda0()[a]).then(a.cmp(&b)));
    let mut bins = order[..k].to_vec();
    bins.sort_unstable();
    Ok(bins)
}

/// Per-coordinate bounds for the flat parameter vector of `kind`.
fn coordinate_bounds(kind: SamplerKind, steps: usize, (lo, hi): (f64, f64)) -> Vec<(f64, f64)> {
    match kind {
        SamplerKind::Dps => vec![(lo, hi); steps],
        SamplerKind::Pigdm => {
            let r_lo = lo.max(0.0);
            let mut b = vec![(lo, hi); steps];
            b.extend(std::iter::repeat_n((r_lo, hi.max(r_lo)), steps));
            b
        }
    }
}

pub fn optimize_weights(
    ctx: &LossContext,
    init: &WeightSchedule,
    opts: &OptimizeOptions,
) -> Result<WeightSolution> {
    opts.validate()?;
    if init.len() != ctx.steps() {
        return Err(Error::DimensionMismatch { expected: ctx.steps(), actual: init.len() });
    }
    if init.kind() != ctx.kind() {
        return Err(Error::InvalidArgument("initial weights are for another sampler".into()));
    }
    match opts.keep_dims {
        Some(k) if k < ctx.prior().dim() => {
            let bins = top_bins(ctx.prior(), k)?;
            let reduced = ctx.restrict(&bins, opts.report_exact)?;
            minimize(&reduced, init, opts)
        }
        Some(k) => {
            top_bins(ctx.prior(), k)?;
            minimize(ctx, init, opts)
        }
        None => minimize(ctx, init, opts),
    }
}

/// Runs [`optimize_weights`] from each start and keeps the lowest loss.
pub fn optimize_multistart(
    ctx: &LossContext,
    inits: &[WeightSchedule],
    opts: &OptimizeOptions,
) -> Result<WeightSolution> {
    let mut best: Option<WeightSolution> = None;
    for init in inits {
        let sol = match optimize_weights(ctx, init, opts) {
            Ok(sol) => sol,
            Err(Error::InvalidStartingPoint(_)) => continue,
            Err(e) => return Err(e),
        };
        if best.as_ref().is_none_or(|b| sol.final_loss < b.final_loss) {
            best = Some(sol);
        }
    }
    best.ok_or(Error::InvalidStartingPoint(f64::NAN))
}

struct Problem<'a> {
    ctx: &'a LossContext,
    bounds: Vec<(f64, f64)>,
    opts: &'a OptimizeOptions,
}

impl Problem<'_> {
    fn value_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        match self.opts.gradient {
            GradientMode::Analytic => self.ctx.loss_and_gradient_flat(x),
            GradientMode::FiniteDifference => {
                let f = self.ctx.loss_flat(x)?;
                let rel = self.opts.grad_step;
                let g = fd_gradient(&|t: &[f64]| self.ctx.loss_flat(t), x, |v| rel * v.abs().max(1.0))?;
                Ok((f, g))
            }
        }
    }

    fn project(&self, x: &mut [f64]) {
        for (v, (lo, hi)) in x.iter_mut().zip(&self.bounds) {
            *v = v.clamp(*lo, *hi);
        }
    }
}

/// Sufficient-decrease and curvature constants of the strong Wolfe search
/// (the values L-BFGS-B uses).
const WOLFE_C1: f64 = 1e-3;
const WOLFE_C2: f64 = 0.9;
const MAX_LINE_EVALS: usize = 40;

/// Projected BFGS on the inverse Hessian. Variables pinned at a bound with
/// the gradient pushing outward are frozen for the iteration; the step is a
/// strong Wolfe line search capped at the first bound hit.
fn minimize(ctx: &LossContext, init: &WeightSchedule, opts: &OptimizeOptions) -> Result<WeightSolution> {
    let n = ctx.num_params();
    let prob = Problem { ctx, bounds: coordinate_bounds(ctx.kind(), ctx.steps(), opts.bounds), opts };
    let mut x = init.to_flat();
    prob.project(&mut x);
    let (mut f, mut g) = match prob.value_grad(&x) {
        Ok(v) if v.0.is_finite() && v.1.iter().all(|g| g.is_finite()) => v,
        Ok(v) => return Err(Error::InvalidStartingPoint(v.0)),
        Err(_) => return Err(Error::InvalidStartingPoint(f64::NAN)),
    };
    let initial_loss = f;
    let mut trace = vec![(0, f)];
    let mut hinv = identity(n);
    let mut iterations = 0;

    for iter in 1..=opts.max_iters {
        iterations = iter;
        let free: Vec<bool> = (0..n)
            .map(|i| {
                let (lo, hi) = prob.bounds[i];
                !((x[i] <= lo && g[i] > 0.0) || (x[i] >= hi && g[i] < 0.0))
            })
            .collect();
        let pg_norm = (0..n).filter(|&i| free[i]).map(|i| g[i].abs()).fold(0.0, f64::max);
        if pg_norm == 0.0 {
            break;
        }

        let mut accepted = None;
        for attempt in 0..2 {
            if attempt == 1 {
                if is_identity(&hinv) {
                    break;
                }
                hinv = identity(n);
            }
            let mut dir = prob.clip(&x, newton_direction(&hinv, &g, &free));
            if dot(&dir, &g) >= 0.0 {
                hinv = identity(n);
                dir = prob.clip(&x, steepest(&g, &free));
                if dot(&dir, &g) >= 0.0 {
                    break;
                }
            }
            // Fresh steepest-descent steps start at unit length.
            let t0 = if is_identity(&hinv) { 1.0f64.min(1.0 / norm(&dir)) } else { 1.0 };
            accepted = line_search(&prob, &x, f, &g, &dir, t0);
            if accepted.is_some() {
                break;
            }
        }
        let Some(pt) = accepted else {
            break;
        };
        let s: Vec<f64> = pt.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = pt.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) && sy > 0.0 {
            if is_identity(&hinv) {
                let gamma = sy / dot(&y, &y);
                hinv.iter_mut().for_each(|v| *v *= gamma);
            }
            bfgs_update(&mut hinv, &s, &y, sy);
        }
        let decrease = f - pt.f;
        x = pt.x;
        f = pt.f;
        g = pt.g;
        trace.push((iter, f));
        if decrease < opts.f_tol * f.abs().max(1.0) {
            break;
        }
    }

    Ok(WeightSolution {
        weights: WeightSchedule::from_flat(ctx.kind(), &x)?,
        initial_loss,
        final_loss: f,
        iterations,
        trace,
    })
}

impl Problem<'_> {
    /// Drops direction components that would leave the box immediately.
    fn clip(&self, x: &[f64], mut dir: Vec<f64>) -> Vec<f64> {
        for (i, d) in dir.iter_mut().enumerate() {
            let (lo, hi) = self.bounds[i];
            if (x[i] <= lo && *d < 0.0) || (x[i] >= hi && *d > 0.0) {
                *d = 0.0;
            }
        }
        dir
    }

    /// Largest `t` keeping `x + t·dir` inside the box.
    fn max_step(&self, x: &[f64], dir: &[f64]) -> f64 {
        let mut t = f64::INFINITY;
        for (i, &d) in dir.iter().enumerate() {
            let (lo, hi) = self.bounds[i];
            if d > 0.0 {
                t = t.min((hi - x[i]) / d);
            } else if d < 0.0 {
                t = t.min((lo - x[i]) / d);
            }
        }
        t
    }
}

#[derive(Clone)]
struct LinePoint {
    t: f64,
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
    slope: f64,
}

/// Strong Wolfe search on `t ∈ (0, t_max]` (bracketing then zoom).
/// Returns `None` if no point with sufficient decrease is found.
fn line_search(
    prob: &Problem<'_>,
    x: &[f64],
    f: f64,
    g: &[f64],
    dir: &[f64],
    t0: f64,
) -> Option<LinePoint> {
    let slope0 = dot(g, dir);
    let t_max = prob.max_step(x, dir);
    if !(t_max > 0.0) {
        return None;
    }
    let eval = |t: f64| -> LinePoint {
        let mut xt: Vec<f64> = x.iter().zip(dir).map(|(a, d)| a + t * d).collect();
        prob.project(&mut xt);
        match prob.value_grad(&xt) {
            Ok((ft, gt)) if ft.is_finite() && gt.iter().all(|v| v.is_finite()) => {
                let slope = dot(&gt, dir);
                LinePoint { t, x: xt, f: ft, g: gt, slope }
            }
            _ => LinePoint { t, x: xt, f: f64::INFINITY, g: vec![0.0; x.len()], slope: f64::NAN },
        }
    };
    let armijo = |p: &LinePoint| p.f <= f + WOLFE_C1 * p.t * slope0 && p.f <= f;
    let curvature = |p: &LinePoint| p.slope.abs() <= -WOLFE_C2 * slope0;

    let origin = LinePoint { t: 0.0, x: x.to_vec(), f, g: g.to_vec(), slope: slope0 };
    let mut prev = origin.clone();
    let mut t = t0.min(t_max);
    let mut evals = 0;
    while evals < MAX_LINE_EVALS {
        let p = eval(t);
        evals += 1;
        if !armijo(&p) || (prev.t > 0.0 && p.f >= prev.f) {
            return zoom(prev, p, &eval, &armijo, &curvature, MAX_LINE_EVALS - evals);
        }
        if curvature(&p) || p.t >= t_max {
            return Some(p);
        }
        if p.slope >= 0.0 {
            return zoom(p, prev, &eval, &armijo, &curvature, MAX_LINE_EVALS - evals);
        }
        prev = p;
        t = (2.0 * t).min(t_max);
    }
    (prev.t > 0.0).then_some(prev)
}

/// Shrinks a bracket whose `lo` end satisfies sufficient decrease.
fn zoom(
    mut lo: LinePoint,
    mut hi: LinePoint,
    eval: &dyn Fn(f64) -> LinePoint,
    armijo: &dyn Fn(&LinePoint) -> bool,
    curvature: &dyn Fn(&LinePoint) -> bool,
    budget: usize,
) -> Option<LinePoint> {
    for _ in 0..budget {
        let width = hi.t - lo.t;
        if width.abs() <= 1e-14 * lo.t.abs().max(hi.t.abs()) {
            break;
        }
        // Quadratic fit through (lo.f, lo.slope, hi.f), kept away from the ends.
        let mut t = lo.t + 0.5 * width;
        if hi.f.is_finite() {
            let den = 2.0 * (hi.f - lo.f - lo.slope * width);
            if den > 0.0 {
                let tq = lo.t - lo.slope * width * width / den;
                let (a, b) = if lo.t < hi.t { (lo.t, hi.t) } else { (hi.t, lo.t) };
                if tq > a + 0.1 * (b - a) && tq < b - 0.1 * (b - a) {
                    t = tq;
                }
            }
        }
        let p = eval(t);
        if !armijo(&p) || p.f >= lo.f {
            hi = p;
        } else {
            if curvature(&p) {
                return Some(p);
            }
            if p.slope * (hi.t - lo.t) >= 0.0 {
                hi = lo;
            }
            lo = p;
        }
    }
    (lo.t > 0.0).then_some(lo)
}

fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

fn is_identity(m: &[f64]) -> bool {
    let n = (m.len() as f64).sqrt() as usize;
    (0..n).all(|i| (0..n).all(|j| m[i * n + j] == if i == j { 1.0 } else { 0.0 }))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn steepest(g: &[f64], free: &[bool]) -> Vec<f64> {
    g.iter().zip(free).map(|(v, f)| if *f { -v } else { 0.0 }).collect()
}

fn newton_direction(hinv: &[f64], g: &[f64], free: &[bool]) -> Vec<f64> {
    let n = g.len();
    (0..n)
        .map(|i| {
            if !free[i] {
                return 0.0;
            }
            let row = &hinv[i * n..(i + 1) * n];
            -(0..n).filter(|&j| free[j]).map(|j| row[j] * g[j]).sum::<f64>()
        })
        .collect()
}

/// `H ← (I − ρsyᵀ) H (I − ρysᵀ) + ρssᵀ` with `ρ = 1/sᵀy`.
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], y)).collect();
    let yhy = dot(y, &hy);
    let coef = (1.0 + rho * yhy) * rho;
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += coef * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}

/// Linear interpolation of per-step weights onto a new step count, by
/// normalized position `s/S`, clamped at both ends.
pub fn interpolate_weights(w: &[f64], new_len: usize) -> Vec<f64> {
    let old = w.len();
    if old == 0 {
        return vec![0.0; new_len];
    }
    if old == 1 {
        return vec![w[0]; new_len];
    }
    (1..=new_len)
        .map(|s| {
            // Position in old step units (1-based, possibly fractional).
            let pos = (s as f64 / new_len as f64 * old as f64).clamp(1.0, old as f64);
            let lo = pos.floor() as usize;
            let frac = pos - lo as f64;
            if lo >= old {
                w[old - 1]
            } else {
                w[lo - 1] * (1.0 - frac) + w[lo] * frac
            }
        })
        .collect()
}

pub fn interpolate_schedule(w: &WeightSchedule, new_len: usize) -> WeightSchedule {
    match w {
        WeightSchedule::Dps { zeta } => WeightSchedule::dps(interpolate_weights(zeta, new_len)),
        WeightSchedule::Pigdm { g, r } => WeightSchedule::Pigdm {
            g: interpolate_weights(g, new_len),
            r: interpolate_weights(r, new_len),
        },
    }
}

/// Warm start for a rung with `new_len` steps. Guidance gains act once per
/// step, so they are interpolated and then scaled by `old_len / new_len` to
/// keep the accumulated correction comparable; `r_s` is a standard deviation
/// and is only interpolated.
pub fn ladder_warm_start(w: &WeightSchedule, new_len: usize) -> WeightSchedule {
    let ratio = w.len() as f64 / new_len as f64;
    let scale = |v: Vec<f64>| v.into_iter().map(|x| x * ratio).collect();
    match interpolate_schedule(w, new_len) {
        WeightSchedule::Dps { zeta } => WeightSchedule::dps(scale(zeta)),
        WeightSchedule::Pigdm { g, r } => WeightSchedule::Pigdm { g: scale(g), r },
    }
}

/// Solve at each rung of `opts.ladder`, warm-starting from the previous
/// rung's solution via [`ladder_warm_start`]. `full` is the schedule the rungs are subsampled from.
pub fn iterative_ladder(
    ctx: &LossContext,
    full: &Schedule,
    opts: &OptimizeOptions,
) -> Result<WeightSolution> {
    let ladder = opts
        .ladder
        .as_ref()
        .filter(|l| !l.is_empty())
        .ok_or_else(|| Error::InvalidArgument("empty ladder".into()))?;
    if ladder.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("ladder must be strictly increasing".into()));
    }
    if *ladder.last().unwrap() != ctx.steps() {
        return Err(Error::InvalidArgument(format!(
            "ladder must end at the target step count {}",
            ctx.steps()
        )));
    }
    let mut warm: Option<WeightSchedule> = None;
    let mut last = None;
    for &steps in ladder {
        let rung = if steps == ctx.steps() {
            ctx.clone()
        } else {
            ctx.with_schedule(ddim_subsequence(full, steps)?)?
        };
        let init = match &warm {
            Some(w) => ladder_warm_start(w, steps),
            None => default_init(&rung),
        };
        let sol = optimize_weights(&rung, &init, opts)?;
        warm = Some(sol.weights.clone());
        last = Some(sol);
    }
    Ok(last.expect("non-empty ladder"))
}
