use mqsd_core::integrator::IntegratorConfig;
use mqsd_core::models::ModelConfig;
use mqsd_core::runner::{run_ensemble, write_outputs, BasisConfig, InitialState, RunConfig};

fn two_level_decay(trajectories: usize, seed: u64) -> RunConfig {
    RunConfig {
        t_final: 1.0,
        sample_interval: 100,
        observables: vec!["N0".into()],
        trajectories,
        workers: 1,
        poincare_period: None,
        poincare_offset: 0.0,
        output_dir: None,
        model: ModelConfig::Decay { gamma: 1.0 },
        integrator: IntegratorConfig::new(1e-3, seed),
        basis: BasisConfig::Fixed { capacities: vec![2] },
        initial: InitialState { origins: vec![], occupations: vec![1] },
    }
}

#[test]
fn two_level_decay_matches_the_exponential() {
    let (summary, _) = run_ensemble(&two_level_decay(500, 17)).unwrap();
    let k = summary.sample_near(1.0).unwrap();
    let (mean, se) = (summary.mean[k][0].re, summary.stderr[k][0].re);
    let exact = (-1.0f64).exp();
    assert!((mean - exact).abs() <= 3.0 * se, "{mean} +- {se} vs {exact}");
}

#[test]
fn standard_errors_shrink_as_inverse_square_root() {
    let se_at = |n: usize| {
        let (summary, _) = run_ensemble(&two_level_decay(n, 23 + n as u64)).unwrap();
        let k = summary.sample_near(0.5).unwrap();
        summary.stderr[k][0].re
    };
    let ratio = se_at(200) / se_at(800);
    assert!((ratio / 2.0 - 1.0).abs() <= 0.2, "ratio {ratio}");
}

#[test]
fn worker_count_does_not_change_outputs() {
    let tmp = tempfile_dir();
    let mut config = two_level_decay(16, 4);
    let (summary, records) = run_ensemble(&config).unwrap();
    let serial = write_outputs(&tmp.join("serial"), &config, &records, Some(&summary)).unwrap();
    config.workers = 4;
    let (summary, records) = run_ensemble(&config).unwrap();
    config.workers = 1;
    let parallel = write_outputs(&tmp.join("parallel"), &config, &records, Some(&summary)).unwrap();
    for (a, b) in serial.iter().zip(&parallel) {
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap(), "{}", a.display());
    }
    std::fs::remove_dir_all(&tmp).unwrap();
}

fn tempfile_dir() -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("mqsd-runner-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
