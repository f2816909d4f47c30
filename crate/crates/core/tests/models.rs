use mqsd_core::fock::{FockState, Quadrature};
use mqsd_core::integrator::{CompiledModel, IntegratorConfig};
use mqsd_core::models::{build_duffing, build_shg, DuffingParams, ShgParams};
use mqsd_core::moving::{mqsd_step, mqsd_step_with_noise, MqsdState, TruncationPolicy};
use mqsd_core::noise::{sample_noise, NoiseIncrement, TrajectoryRng};
use mqsd_core::operator::OperatorExpr;
use mqsd_core::oracle::{master_equation_evolve_with_limit, DensityMatrix};

/// RK4 for `x' = p`, `p' = -x^3 + x - 2 Gamma p + g cos(w t)`; returns `(t, x, p)` every `every` steps.
fn classical_duffing(params: &DuffingParams, x0: f64, p0: f64, t_final: f64, dt: f64, every: usize) -> Vec<(f64, f64, f64)> {
    let f = |t: f64, x: f64, p: f64| (p, -x * x * x + x - 2.0 * params.gamma * p + params.g * (params.drive_frequency * t).cos());
    let n = (t_final / dt).round() as usize;
    let (mut x, mut p) = (x0, p0);
    let mut out = vec![(0.0, x, p)];
    for k in 0..n {
        let t = k as f64 * dt;
        let (a1, b1) = f(t, x, p);
        let (a2, b2) = f(t + dt / 2.0, x + dt / 2.0 * a1, p + dt / 2.0 * b1);
        let (a3, b3) = f(t + dt / 2.0, x + dt / 2.0 * a2, p + dt / 2.0 * b2);
        let (a4, b4) = f(t + dt, x + dt * a3, p + dt * b3);
        x += dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
        p += dt / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
        if (k + 1) % every == 0 {
            out.push(((k + 1) as f64 * dt, x, p));
        }
    }
    out
}

/// Largest deviation of `(<X>/s, <P>/s)` from the classical orbit over two
/// drive periods, relative to the largest classical excursion.
fn classical_limit_error(params: &DuffingParams, noise_seed: Option<u64>) -> (f64, f64) {
    let s = params.scale;
    let model = CompiledModel::new(&build_duffing(params).unwrap());
    let dt = 1e-3;
    let t_final = 2.0 * std::f64::consts::TAU;
    let every = 100;
    let classical = classical_duffing(params, 0.0, 0.0, t_final, dt, every);
    let policy = TruncationPolicy::new(5e-3, 2, 4, 160);
    let mut rng = TrajectoryRng::new(noise_seed.unwrap_or(0), 0);
    let mut state = MqsdState::coherent(&[(0.0, 0.0)], &[4]).unwrap();
    let q = OperatorExpr::quadrature(0, Quadrature::Q).compile();
    let p = OperatorExpr::quadrature(0, Quadrature::P).compile();
    let (mut dx, mut dp, mut xmax, mut pmax) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for (k, &(t, xc, pc)) in classical.iter().enumerate().skip(1) {
        for j in 0..every {
            let step = (k - 1) * every + j;
            let noise = match noise_seed {
                Some(_) => sample_noise(&mut rng, 1, dt),
                None => NoiseIncrement::zero(1, dt),
            };
            state = mqsd_step_with_noise(&model, &state, step as f64 * dt, &noise, true, &policy).unwrap().0;
        }
        dx = dx.max((state.expectation(&q, t).re / s - xc).abs());
        dp = dp.max((state.expectation(&p, t).re / s - pc).abs());
        xmax = xmax.max(xc.abs());
        pmax = pmax.max(pc.abs());
    }
    (dx / xmax, dp / pmax)
}

#[test]
fn duffing_drift_follows_classical_motion() {
    // ground state at the origin, scale 100; without the noise term only quantum spreading remains
    let (ex, ep) = classical_limit_error(&DuffingParams::default(), None);
    assert!(ex < 0.05 && ep < 0.05, "relative errors x {ex:.4}, p {ep:.4}");
}

fn median_noisy_error(scale: f64) -> f64 {
    let params = DuffingParams { scale, ..DuffingParams::default() };
    let mut errors: Vec<f64> = (1..=8)
        .map(|seed| {
            let (ex, ep) = classical_limit_error(&params, Some(seed));
            ex.max(ep)
        })
        .collect();
    errors.sort_by(f64::total_cmp);
    0.5 * (errors[3] + errors[4])
}

#[test]
fn duffing_trajectories_approach_classical_motion_as_scale_grows() {
    // the origin is a barrier top, so an occasional trajectory falls to the other side
    // early and leaves the classical orbit; the typical trajectory does not
    let (coarse, fine) = (median_noisy_error(100.0), median_noisy_error(1000.0));
    assert!(fine < 0.05, "median relative error at scale 1000: {fine:.4}");
    assert!(fine < coarse, "scale 100: {coarse:.4}, scale 1000: {fine:.4}");
}

#[test]
fn closed_double_well_conserves_energy() {
    let params = DuffingParams { g: 0.0, gamma: 0.0, scale: 1.0, drive_frequency: 1.0 };
    let model = build_duffing(&params).unwrap();
    assert!(model.lindblads.is_empty());
    let compiled = CompiledModel::new(&model);
    let h = model.hamiltonian.compile();
    let mut psi = MqsdState::coherent(&[(1.2, 0.0)], &[4]).unwrap().to_fixed_basis(&[40]).unwrap();
    let energy = |s: &FockState| CompiledModel::expectation(&h, s, 0.0).re;
    let e0 = energy(&psi);
    // level n of the truncated quartic oscillates at ~n^2, so dt must resolve the top level
    let dt = 5e-4;
    let steps = (10.0 * std::f64::consts::TAU / dt).round() as usize;
    for k in 0..steps {
        psi = compiled.step_with_noise(&psi, k as f64 * dt, &NoiseIncrement::zero(0, dt), true).unwrap().0;
    }
    assert!((energy(&psi) - e0).abs() < 1e-6 * e0.abs().max(1.0), "{} vs {e0}", energy(&psi));
}

#[test]
fn duffing_at_unit_scale_stays_bounded() {
    let params = DuffingParams { scale: 1.0, ..DuffingParams::default() };
    let model = CompiledModel::new(&build_duffing(&params).unwrap());
    let policy = TruncationPolicy::new(1e-3, 2, 4, 60);
    let dt = 2e-3;
    let config = IntegratorConfig::new(dt, 4);
    let mut rng = TrajectoryRng::new(4, 0);
    let mut state = MqsdState::coherent(&[(0.0, 0.0)], &[4]).unwrap();
    let n = OperatorExpr::number(0).compile();
    let steps = (50.0 * std::f64::consts::TAU / dt).round() as usize;
    let mut worst: f64 = 0.0;
    for k in 0..steps {
        state = mqsd_step(&model, &state, k as f64 * dt, &config, &policy, &mut rng).unwrap().0;
        if k % 500 == 0 {
            worst = worst.max(state.expectation(&n, k as f64 * dt).re);
        }
    }
    assert!(worst.is_finite() && worst < 50.0, "max <N> = {worst}");
}

#[test]
fn decoupled_fundamental_reaches_linear_steady_state() {
    let params = ShgParams { kappa1: 1.0, kappa2: 0.25, delta1: 0.0, delta2: -1.0, chi: 0.0, f: 0.8 };
    let model = build_shg(&params).unwrap();
    let rho0 = DensityMatrix::from_pure(&FockState::basis(&[8, 3], &[0, 1]).unwrap());
    let rho = master_equation_evolve_with_limit(&model, &rho0, 12.0, 5e-3, 64).unwrap();
    let a1 = rho.expectation(&OperatorExpr::a(0), 0.0).unwrap();
    let n2 = rho.expectation(&OperatorExpr::number(1), 0.0).unwrap();
    assert!((a1.re - params.f / params.kappa1).abs() < 1e-4 && a1.im.abs() < 1e-4, "{a1}");
    assert!((n2.re - (-2.0 * params.kappa2 * 12.0).exp()).abs() < 1e-6, "{n2}");

    // the trajectory engine agrees: a coherent state stays coherent and relaxes to the same point
    let compiled = CompiledModel::new(&model);
    let mut psi = FockState::vacuum(&[12, 3]).unwrap();
    let dt = 1e-3;
    let mut rng = TrajectoryRng::new(2, 0);
    let config = IntegratorConfig::new(dt, 2);
    for k in 0..12_000 {
        psi = compiled.step(&psi, k as f64 * dt, &config, &mut rng).unwrap().0;
    }
    let a1_traj = psi.expectation_and_variance(&OperatorExpr::a(0), 0.0).unwrap().expectation;
    assert!((a1_traj - a1).norm() < 1e-4, "{a1_traj} vs {a1}");
}
