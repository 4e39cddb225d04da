use epiecon_core::data::N_POLICY;
use epiecon_core::epi::seir_step;
use epiecon_core::forecast::{Architecture, InfectionModel, MobilityModel, UnemploymentModel};
use epiecon_core::nn::{softplus, TrainConfig};
use epiecon_core::sim::synthetic::{generate_panel, ground_truth_bundle, synthetic_demographics, SyntheticConfig};
use epiecon_core::sim::{
    iterate, joint_train, rolling_forecast, window_starts, Bundle, Exogenous, Freeze, JointConfig, RollingConfig,
    SimState,
};
use epiecon_core::Error;
use proptest::prelude::*;

fn short_panel(days: usize) -> epiecon_core::data::Panel {
    let config = SyntheticConfig {
        days,
        ..SyntheticConfig::default()
    };
    generate_panel(&ground_truth_bundle(true), &config).unwrap().0
}

fn constant_bundle(bias: f64) -> Bundle {
    let arch = Architecture {
        hidden: 3,
        demo_hidden: 2,
        inner_hidden: 2,
    };
    let mut infection = InfectionModel::zeros(&arch);
    infection.head.bias[0] = bias;
    Bundle {
        mobility: MobilityModel::zeros(&arch),
        unemployment: UnemploymentModel::zeros(&arch),
        infection,
        ..ground_truth_bundle(true)
    }
}

fn fast_joint() -> JointConfig {
    let quick = |c: TrainConfig| TrainConfig {
        max_epochs: 15,
        learning_rate: 5e-3,
        ..c
    };
    JointConfig {
        architecture: Architecture {
            hidden: 4,
            demo_hidden: 2,
            inner_hidden: 4,
        },
        mobility: quick(TrainConfig::mobility()),
        unemployment: quick(TrainConfig::unemployment()),
        infection: quick(TrainConfig::infection()),
        max_sweeps: 2,
        ..JointConfig::default()
    }
}

#[test]
fn constant_forecasters_reduce_to_chained_seir_steps() {
    let bundle = constant_bundle(-2.0);
    let panel = short_panel(40);
    let state = SimState::from_panel(&bundle, &panel, 20).unwrap();
    let exo = Exogenous::from_panel(&panel, 20, 30).unwrap();
    let traj = iterate(&bundle, &state, 30, &exo).unwrap();
    let r = softplus(-2.0) / bundle.seir.beta;
    let mut oracle = state.compartments;
    for rec in &traj.records {
        oracle = seir_step(&oracle, &bundle.seir, r).unwrap();
        assert_eq!(rec.compartments, oracle);
        assert_eq!(rec.r, r);
    }
}

#[test]
fn zero_horizon_is_a_no_op() {
    let bundle = ground_truth_bundle(true);
    let panel = short_panel(30);
    let state = SimState::from_panel(&bundle, &panel, 30).unwrap();
    let exo = Exogenous::from_panel(&panel, 30, 0).unwrap();
    let traj = iterate(&bundle, &state, 0, &exo).unwrap();
    assert!(traj.is_empty());
    assert_eq!(traj.final_state, state);
}

#[test]
fn trajectories_conserve_population_and_accumulate() {
    let bundle = ground_truth_bundle(true);
    let (_, traj) = generate_panel(&bundle, &SyntheticConfig::default()).unwrap();
    for w in traj.records.windows(2) {
        assert!(w[1].cum_confirmed >= w[0].cum_confirmed);
    }
    for rec in &traj.records {
        assert!((rec.compartments.total() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn repeated_runs_are_identical() {
    let bundle = ground_truth_bundle(true);
    let panel = short_panel(60);
    let run = || {
        let state = SimState::from_panel(&bundle, &panel, 30).unwrap();
        iterate(&bundle, &state, 30, &Exogenous::from_panel(&panel, 30, 30).unwrap()).unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn blow_up_aborts_with_last_valid_state() {
    let bundle = constant_bundle(60.0);
    let panel = short_panel(30);
    let state = SimState::from_panel(&bundle, &panel, 30).unwrap();
    let exo = Exogenous::from_panel(&panel, 30, 10).unwrap();
    let mut previous = state.compartments;
    for horizon in 1..=10 {
        match iterate(&bundle, &state, horizon, &exo) {
            Ok(t) => previous = t.final_state.compartments,
            Err(Error::Aborted { last, source, .. }) => {
                assert_eq!(*last, previous);
                assert!(matches!(*source, Error::Stability { .. }));
                return;
            }
            Err(other) => panic!("unexpected error {other}"),
        }
    }
    panic!("simulation never blew up");
}

#[test]
fn short_exogenous_paths_are_rejected() {
    let bundle = ground_truth_bundle(true);
    let panel = short_panel(30);
    let state = SimState::from_panel(&bundle, &panel, 30).unwrap();
    let exo = Exogenous {
        policy: vec![[0.0; N_POLICY]; 3],
        blm: vec![0.0; 3],
        unemployment_shift: 0.0,
    };
    assert!(matches!(iterate(&bundle, &state, 5, &exo), Err(Error::Range(_))));
}

#[test]
fn seeding_needs_a_week_of_history() {
    let bundle = ground_truth_bundle(true);
    let panel = short_panel(30);
    assert!(matches!(SimState::from_panel(&bundle, &panel, 6), Err(Error::Range(_))));
    assert!(SimState::from_panel(&bundle, &panel, 7).is_ok());
}

#[test]
fn seeded_state_matches_observed_counts() {
    let bundle = ground_truth_bundle(true);
    let panel = short_panel(40);
    let state = SimState::from_panel(&bundle, &panel, 35).unwrap();
    let last = &panel.records[34];
    let pop = bundle.population();
    assert!((state.cum_confirmed(pop) - last.cum_confirmed).abs() < 1e-6 * last.cum_confirmed);
    assert_eq!(state.cases.len(), 7);
    assert_eq!(*state.cases.last().unwrap(), last.new_confirmed);
}

#[test]
fn trajectory_csv_has_the_documented_columns() {
    let bundle = ground_truth_bundle(true);
    let panel = short_panel(30);
    let state = SimState::from_panel(&bundle, &panel, 30).unwrap();
    let traj = iterate(&bundle, &state, 3, &Exogenous::from_panel(&panel, 30, 3).unwrap()).unwrap();
    let mut buf = Vec::new();
    traj.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "date,m0,m1,m2,m3,m4,m5,u,r,S,E,I,R,Rt,cum_confirmed,new_confirmed"
    );
    assert_eq!(lines.count(), 3);
}

#[test]
fn frozen_joint_training_stops_after_second_sweep() {
    let panel = short_panel(70);
    let truth = ground_truth_bundle(true);
    let config = JointConfig {
        freeze: Freeze::all(),
        max_sweeps: 5,
        ..fast_joint()
    };
    let out = joint_train(&panel, &synthetic_demographics(), &config, Some(&truth)).unwrap();
    let history = out.validation_history();
    assert_eq!(history.len(), 2);
    assert_eq!(history[0], history[1]);
    assert_eq!(out.best_sweep, 0);
}

#[test]
fn frozen_modules_need_an_initial_bundle() {
    let panel = short_panel(70);
    let config = JointConfig {
        freeze: Freeze::all(),
        ..fast_joint()
    };
    assert!(matches!(
        joint_train(&panel, &synthetic_demographics(), &config, None),
        Err(Error::Domain(_))
    ));
}

#[test]
fn joint_training_needs_eight_weeks() {
    let panel = short_panel(55);
    assert!(matches!(
        joint_train(&panel, &synthetic_demographics(), &fast_joint(), None),
        Err(Error::Range(_))
    ));
}

#[test]
fn joint_training_is_deterministic() {
    let panel = short_panel(60);
    let a = joint_train(&panel, &synthetic_demographics(), &fast_joint(), None).unwrap();
    let b = joint_train(&panel, &synthetic_demographics(), &fast_joint(), None).unwrap();
    assert_eq!(a.validation_history(), b.validation_history());
    assert_eq!(a.bundle, b.bundle);
}

#[test]
fn ten_week_panel_gives_one_window_of_two_weeks() {
    let panel = short_panel(70);
    let config = RollingConfig {
        joint: fast_joint(),
        ..RollingConfig::default()
    };
    let report = rolling_forecast(&panel, &synthetic_demographics(), &config).unwrap();
    assert_eq!(report.windows.len(), 1);
    assert_eq!(report.predictions.len(), 14);
    assert_eq!(report.predictions[0].date, panel.records[56].date);
    for m in report.metrics.values() {
        assert!(m.mae.is_finite() && m.rmse >= m.mae);
    }
}

#[test]
fn rolling_rejects_short_panels() {
    let panel = short_panel(69);
    let config = RollingConfig {
        joint: fast_joint(),
        ..RollingConfig::default()
    };
    assert!(matches!(
        rolling_forecast(&panel, &synthetic_demographics(), &config),
        Err(Error::Range(_))
    ));
}

proptest! {
    #[test]
    fn test_windows_tile_without_overlap(len in 0usize..400, train in 1usize..80, test in 1usize..30) {
        let starts = window_starts(len, train, test);
        let mut covered = vec![false; len];
        for s in starts {
            prop_assert!(s + train + test <= len);
            for d in s + train..s + train + test {
                prop_assert!(!covered[d]);
                covered[d] = true;
            }
        }
    }
}
