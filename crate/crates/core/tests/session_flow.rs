use prefsearch::experiment::{run_experiment, ExperimentConfig};
use prefsearch::metrics::metric_mse;
use prefsearch::oracle::OracleConfig;
use prefsearch::{AttributeVector, McmcConfig, NoiseConstant, SelectionConfig, SessionState, Strategy};

fn closed_form_session(seed: u64) -> SessionState {
    SessionState::new(
        format!("flow-{seed}"),
        2,
        SelectionConfig::new(Strategy::ClosedForm).with_seed(seed),
        NoiseConstant::new(10.0).unwrap(),
        McmcConfig::default().with_seed(seed),
    )
    .unwrap()
}

#[test]
fn noiseless_closed_form_run_localizes_the_target() {
    let target = AttributeVector::new(vec![0.2, 0.8]).unwrap();
    let oracle = OracleConfig::noiseless(target.clone());
    let mut s = closed_form_session(1);
    s.run_scripted(&oracle, 30).unwrap();
    let est = s.current_estimate();
    assert_eq!(est.n_answered, 30);
    let mse = metric_mse(&est.estimate, &target).unwrap();
    assert!(mse < 1e-3, "mse {mse}");
}

#[test]
fn posterior_contracts() {
    let mut contracted = 0;
    for seed in 0..20 {
        let target = prefsearch::sample_uniform(2, 1, 1000 + seed).unwrap().remove(0);
        let oracle = OracleConfig::noiseless(target);
        let mut s = closed_form_session(seed);
        s.run_scripted(&oracle, 5).unwrap();
        let early = s.posterior().moments().trace();
        s.run_scripted(&oracle, 25).unwrap();
        if s.posterior().moments().trace() < early {
            contracted += 1;
        }
    }
    assert!(contracted >= 18, "{contracted}/20");
}

#[test]
fn closed_form_beats_random_on_paired_seeds() {
    let base = ExperimentConfig::default();
    let closed = run_experiment(&base.with_strategy(Strategy::ClosedForm)).unwrap();
    let random = run_experiment(&base.with_strategy(Strategy::Random)).unwrap();
    assert!(closed.all_completed() && random.all_completed());
    let wins = closed
        .records
        .iter()
        .zip(&random.records)
        .filter(|(c, r)| {
            assert_eq!(c.target, r.target);
            r.last().mse > c.last().mse
        })
        .count();
    assert!(wins >= 18, "{wins}/20");
}
