use mqsd_bench::{duffing_moving, shg_fixed};
use mqsd_core::{mqsd_step_with_noise, NoiseIncrement};

#[test]
fn fixtures_step_cleanly() {
    let (model, state) = shg_fixed([20, 12]).unwrap();
    assert_eq!(state.dim(), 240);
    let next = model.step_with_noise(&state, 0.0, &NoiseIncrement::zero(2, 1e-3), true).unwrap().0;
    assert!((next.norm() - 1.0).abs() < 1e-12);

    let (model, state, policy) = duffing_moving(10).unwrap();
    let next = mqsd_step_with_noise(&model, &state, 0.0, &NoiseIncrement::zero(1, 1e-3), true, &policy).unwrap().0;
    assert!(next.capacities()[0] >= policy.min_capacity);
}
