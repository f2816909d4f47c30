use mqsd_core::fock::{FockState, Quadrature};
use mqsd_core::integrator::CompiledModel;
use mqsd_core::models::{build_damped_oscillator, build_shg, OscillatorParams, ShgParams};
use mqsd_core::moving::{
    alpha_of, compose_displacements, displacement_block, displacement_matrix, mqsd_step_with_noise, MovingFrame,
    MqsdState, TruncationPolicy,
};
use mqsd_core::noise::{sample_noise, TrajectoryRng};
use mqsd_core::operator::OperatorExpr;
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use proptest::prelude::*;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// `exp(alpha a^+ - conj(alpha) a)` in a truncated basis, by nalgebra.
fn generator_exponential(alpha: C64, capacity: usize) -> DMatrix<C64> {
    let mut g = DMatrix::<C64>::zeros(capacity, capacity);
    for n in 1..capacity {
        let s = (n as f64).sqrt();
        g[(n, n - 1)] += alpha * s;
        g[(n - 1, n)] -= alpha.conj() * s;
    }
    g.exp()
}

#[test]
fn displacement_matches_generator_exponential() {
    for alpha in [C64::from_polar(0.3, 0.2), C64::from_polar(1.0, 1.1), C64::from_polar(2.2, -2.0), C64::from_polar(3.0, 2.5)] {
        let d = displacement_matrix(alpha, 60).unwrap();
        let oracle = generator_exponential(alpha, 200);
        let mut worst: f64 = 0.0;
        for m in 0..60 {
            for n in 0..60 {
                worst = worst.max((d.get(m, n) - oracle[(m, n)]).norm());
            }
        }
        assert!(worst <= 1e-8, "alpha = {alpha}: {worst:e}");
    }
}

/// Rows `0..rows` of `D(alpha)` applied to a single-mode vector.
fn displace(alpha: C64, psi: &[C64], rows: usize) -> Vec<C64> {
    let block = displacement_block(alpha, rows, psi.len());
    (0..rows).map(|m| (0..psi.len()).map(|n| block[m * psi.len() + n] * psi[n]).sum()).collect()
}

#[test]
fn local_kicks_compose_like_fixed_basis_products() {
    let big = 90;
    let policy = TruncationPolicy::new(1e-20, 2, 4, 60);
    let mut rng = TrajectoryRng::new(5, 0);
    let start = FockState::from_amplitudes(&[4], vec![c(0.8, 0.0), c(0.0, 0.6), c(0.0, 0.0), c(0.0, 0.0)]).unwrap();
    let mut mq = MqsdState::new(MovingFrame::at_origin(1), start.clone()).unwrap();
    let mut fixed = start.clone().resize_mode(0, big).unwrap().0.into_amplitudes();
    for _ in 0..12 {
        let dq = 0.6 * (rng.uniform() - 0.5);
        let dp = 0.6 * (rng.uniform() - 0.5);
        // kick the local state by D(dq, dp) inside the current frame
        let cap = mq.capacities()[0] + 8;
        let grown = mq.local.resize_mode(0, cap).unwrap().0;
        mq.local = FockState::from_amplitudes(&[cap], displace(alpha_of(dq, dp), grown.amplitudes(), cap)).unwrap();
        // the same kick in the fixed basis: D(o) D(d) D(-o)
        let (q, p) = mq.frame.origins[0];
        fixed = displace(alpha_of(-q, -p), &fixed, big);
        fixed = displace(alpha_of(dq, dp), &fixed, big);
        fixed = displace(alpha_of(q, p), &fixed, big);
        mq = mq.recenter(1e-12, &policy).unwrap().0;
        mq = mq.adapt_capacity(&policy).unwrap().0;
    }
    let from_frame = mq.to_fixed_basis(&[big]).unwrap();
    let worst = from_frame.amplitudes().iter().zip(&fixed).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    assert!(worst < 1e-8, "{worst:e}");
}

#[test]
fn composition_phase_matches_matrix_product() {
    let mut rng = TrajectoryRng::new(17, 2);
    for _ in 0..20 {
        let (q1, p1, q2, p2) = (
            3.0 * (rng.uniform() - 0.5),
            3.0 * (rng.uniform() - 0.5),
            3.0 * (rng.uniform() - 0.5),
            3.0 * (rng.uniform() - 0.5),
        );
        let (q, p, phase) = compose_displacements(q1, p1, q2, p2);
        let psi = vec![c(0.6, 0.0), c(0.0, 0.8)];
        let two_step = displace(alpha_of(q2, p2), &displace(alpha_of(q1, p1), &psi, 120), 30);
        let direct = displace(alpha_of(q, p), &psi, 30);
        let u = C64::from_polar(1.0, phase);
        for (a, b) in two_step.iter().zip(&direct) {
            assert!((a - b * u).norm() < 1e-10);
        }
    }
}

fn arb_local(cap: usize) -> impl Strategy<Value = FockState> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), cap).prop_filter_map("nonzero", move |v| {
        let amps: Vec<C64> = v.into_iter().enumerate().map(|(n, (r, i))| c(r, i) * 0.5f64.powi(n as i32)).collect();
        FockState::from_amplitudes(&[cap], amps).unwrap().normalize().ok().map(|(s, _)| s)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn recentering_preserves_the_physical_state(
        local in arb_local(8),
        q in -2.0f64..2.0,
        p in -2.0f64..2.0,
        phase in -3.0f64..3.0,
    ) {
        let mq = MqsdState::new(MovingFrame { origins: vec![(q, p)], phase }, local).unwrap();
        let policy = TruncationPolicy::new(1e-20, 2, 2, 80);
        let (moved, _) = mq.recenter(1e-10, &policy).unwrap();
        let before = mq.to_fixed_basis(&[70]).unwrap();
        let after = moved.to_fixed_basis(&[70]).unwrap();
        let worst = before.amplitudes().iter().zip(after.amplitudes()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        prop_assert!(worst < 1e-8, "{}", worst);
        for (dq, dp) in moved.local_centroids() {
            prop_assert!(dq.abs() < 1e-8 && dp.abs() < 1e-8);
        }
    }

    #[test]
    fn adapt_capacity_barely_moves_the_number_expectation(local in arb_local(10), eps in 1e-4f64..1e-1) {
        let mq = MqsdState::new(MovingFrame::at_origin(1), local).unwrap();
        let policy = TruncationPolicy::new(eps, 2, 2, 12);
        let n = OperatorExpr::number(0);
        let before = mq.local.expectation_and_variance(&n, 0.0).unwrap().expectation.re;
        if let Ok((out, _)) = mq.adapt_capacity(&policy) {
            let after = out.local.expectation_and_variance(&n, 0.0).unwrap().expectation.re;
            prop_assert!((before - after).abs() <= eps * mq.capacities()[0] as f64);
            let pops = out.local.mode_populations(0).unwrap();
            prop_assert!(policy.pad_probability(&pops) <= eps || out.capacities()[0] > mq.capacities()[0]);
        }
    }
}

fn observables(n_modes: usize) -> Vec<OperatorExpr> {
    (0..n_modes)
        .flat_map(|k| {
            [OperatorExpr::quadrature(k, Quadrature::Q), OperatorExpr::quadrature(k, Quadrature::P), OperatorExpr::number(k)]
        })
        .collect()
}

#[test]
fn moving_and_fixed_bases_agree_for_two_coupled_modes() {
    let model = build_shg(&ShgParams { f: 1.5, ..ShgParams::desk_scale() }).unwrap();
    let compiled = CompiledModel::new(&model);
    // amplitude errors scale as sqrt(epsilon); the headroom covers four stages of a two-photon term
    let policy = TruncationPolicy { step_headroom: 8, ..TruncationPolicy::new(1e-20, 2, 4, 30) };
    let local = FockState::from_amplitudes(&[4, 4], {
        let mut v = vec![c(0.0, 0.0); 16];
        v[0] = c(0.8, 0.0);
        v[5] = c(0.0, 0.6);
        v
    })
    .unwrap();
    let mut mq = MqsdState::new(MovingFrame { origins: vec![(0.5, -0.3), (0.2, 0.1)], phase: 0.0 }, local).unwrap();
    let mut fixed = mq.to_fixed_basis(&[24, 16]).unwrap();
    let mut rng = TrajectoryRng::new(3, 0);
    let dt = 1e-3;
    let ops = observables(2);
    for step in 0..400 {
        let t = step as f64 * dt;
        let noise = sample_noise(&mut rng, 2, dt);
        mq = mqsd_step_with_noise(&compiled, &mq, t, &noise, true, &policy).unwrap().0;
        fixed = compiled.step_with_noise(&fixed, t, &noise, true).unwrap().0;
        if step % 50 == 49 {
            for op in &ops {
                let a = mq.expectation_expr(op, t + dt);
                let b = fixed.expectation_and_variance(op, t + dt).unwrap().expectation;
                assert!((a - b).norm() < 1e-7, "step {step} {op}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn global_phase_tracks_the_fixed_basis() {
    // amplitudes, not only expectations, agree once the accumulated phase is applied
    let model = build_damped_oscillator(&OscillatorParams { omega: 1.3, kappa: 0.2, f: 0.9 }).unwrap();
    let compiled = CompiledModel::new(&model);
    let policy = TruncationPolicy { step_headroom: 4, ..TruncationPolicy::new(1e-20, 2, 4, 30) };
    let local = FockState::from_amplitudes(&[4], vec![c(0.6, 0.0), c(0.0, 0.8), c(0.0, 0.0), c(0.0, 0.0)]).unwrap();
    let mut mq = MqsdState::new(MovingFrame { origins: vec![(1.0, 0.5)], phase: 0.0 }, local).unwrap();
    let mut fixed = mq.to_fixed_basis(&[50]).unwrap();
    let mut rng = TrajectoryRng::new(9, 4);
    let dt = 1e-3;
    for step in 0..1000 {
        let noise = sample_noise(&mut rng, 1, dt);
        mq = mqsd_step_with_noise(&compiled, &mq, step as f64 * dt, &noise, false, &policy).unwrap().0;
        fixed = compiled.step_with_noise(&fixed, step as f64 * dt, &noise, false).unwrap().0;
        // renormalize both by the same real factor so the comparison is of phases and shapes
        fixed = fixed.normalize().unwrap().0;
        mq.local = mq.local.normalize().unwrap().0;
    }
    let rebuilt = mq.to_fixed_basis(&[50]).unwrap();
    let worst = rebuilt.amplitudes().iter().zip(fixed.amplitudes()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    assert!(worst < 1e-7, "{worst:e}");
}
