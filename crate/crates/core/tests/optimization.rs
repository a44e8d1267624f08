use spectral_guidance::simulator::{heuristic_weight_profile, DEFAULT_ZETA_CAP};
use spectral_guidance::*;

fn figure_setup(s: usize) -> (LossContext, SimConfig, Observation) {
    let prior = make_synthetic_prior(50, 0.05, 0.0).unwrap();
    let spec = make_lpf(50, 0.5).unwrap().with_sigma_y(0.1).unwrap();
    let sched = ddim_subsequence(&linear_ddpm_schedule(1000).unwrap(), s).unwrap();
    let obs = synthetic_realizations(&prior, &spec, 1, 2024).unwrap().remove(0);
    let ctx = LossContext::realizations(prior.clone(), spec.clone(), sched.clone(), SamplerKind::Dps, vec![obs.clone()])
        .unwrap();
    let cfg = SimConfig { prior, spec, schedule: sched, guidance: Guidance::None, n_runs: 100, seed: 7 };
    (ctx, cfg, obs)
}

#[test]
fn optimized_dps_beats_every_heuristic_at_seventy_steps() {
    let (ctx, cfg, obs) = figure_setup(70);
    let opts = OptimizeOptions::default();
    let sol = optimize_weights(&ctx, &default_init(&ctx), &opts).unwrap();
    assert!(sol.final_loss <= sol.initial_loss);
    for zp in [0.1, 0.3, 0.5, 0.7, 1.0] {
        let profile = heuristic_weight_profile(zp, DEFAULT_ZETA_CAP, &cfg, &obs).unwrap();
        let heuristic = ctx.loss(&WeightSchedule::dps(profile.mean)).unwrap();
        assert!(sol.final_loss <= heuristic, "zeta' = {zp}: {} > {heuristic}", sol.final_loss);
    }
}

#[test]
fn converged_weights_are_a_fixed_point() {
    let (ctx, _, _) = figure_setup(10);
    let opts = OptimizeOptions { f_tol: 1e-14, ..Default::default() };
    let first = optimize_weights(&ctx, &default_init(&ctx), &opts).unwrap();
    let again = optimize_weights(&ctx, &first.weights, &OptimizeOptions::default()).unwrap();
    assert!(again.iterations <= 2, "{} iterations", again.iterations);
    assert!((again.final_loss - first.final_loss).abs() <= 1e-12);
}

#[test]
fn finite_difference_mode_reaches_the_same_loss() {
    let (ctx, _, _) = figure_setup(8);
    let analytic = optimize_weights(&ctx, &default_init(&ctx), &OptimizeOptions::default()).unwrap();
    let fd_opts = OptimizeOptions { gradient: GradientMode::FiniteDifference, ..Default::default() };
    let fd = optimize_weights(&ctx, &default_init(&ctx), &fd_opts).unwrap();
    assert!((analytic.final_loss - fd.final_loss).abs() <= 1e-3 * analytic.final_loss);
}

#[test]
fn single_rung_ladder_is_a_cold_start() {
    let (ctx, _, _) = figure_setup(12);
    let full = linear_ddpm_schedule(1000).unwrap();
    let opts = OptimizeOptions { ladder: Some(vec![12]), ..Default::default() };
    let ladder = iterative_ladder(&ctx, &full, &opts).unwrap();
    let cold = optimize_weights(&ctx, &default_init(&ctx), &OptimizeOptions::default()).unwrap();
    assert_eq!(ladder.weights, cold.weights);
    assert_eq!(ladder.final_loss, cold.final_loss);
}

#[test]
fn invalid_requests_are_errors() {
    let (ctx, _, _) = figure_setup(6);
    let full = linear_ddpm_schedule(1000).unwrap();
    let empty = OptimizeOptions { ladder: Some(vec![]), ..Default::default() };
    assert!(iterative_ladder(&ctx, &full, &empty).is_err());
    let wrong_end = OptimizeOptions { ladder: Some(vec![2, 4]), ..Default::default() };
    assert!(iterative_ladder(&ctx, &full, &wrong_end).is_err());
    let zero_keep = OptimizeOptions { keep_dims: Some(0), ..Default::default() };
    assert!(optimize_weights(&ctx, &default_init(&ctx), &zero_keep).is_err());
    let short = WeightSchedule::dps_constant(5, 0.1);
    assert!(optimize_weights(&ctx, &short, &OptimizeOptions::default()).is_err());
    let nan = WeightSchedule::dps(vec![f64::NAN; 6]);
    assert!(matches!(
        optimize_weights(&ctx, &nan, &OptimizeOptions::default()),
        Err(Error::InvalidStartingPoint(_))
    ));
}

#[test]
fn reduced_problem_reports_exact_loss_when_asked() {
    let (ctx, _, _) = figure_setup(10);
    let w = WeightSchedule::dps_constant(10, 0.2);
    let keep = OptimizeOptions { keep_dims: Some(20), report_exact: true, max_iters: 1, ..Default::default() };
    let exact = optimize_weights(&ctx, &w, &keep).unwrap();
    let cheap = optimize_weights(&ctx, &w, &OptimizeOptions { report_exact: false, ..keep }).unwrap();

    // Dropped bins count as a deterministic output at the prior mean.
    let (_, _, kept) = reduce_dimensions(ctx.prior(), ctx.spec(), 20).unwrap();
    let post = ctx.true_posterior(0).unwrap();
    let d = ctx.prior().dim() as f64;
    let constant: f64 = (0..50)
        .filter(|i| !kept.contains(i))
        .map(|i| post.var[i] + (ctx.prior().mu_f()[i] - post.mean[i]).norm_sqr() / d)
        .sum();
    assert!((exact.initial_loss - cheap.initial_loss - constant).abs() <= 1e-12 * (1.0 + constant));
}
