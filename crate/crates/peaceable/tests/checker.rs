mod support;

use peaceable::adversary::Strategy;
use peaceable::checker::{
    convergence_series, detect_stabilization, emergency_properties, is_synchronized, message_audit, pulse_clusters,
    CheckError, PulseProcess, SyncBounds,
};
use peaceable::params::{solve, ParamInputs, ParamSet, Rational};
use peaceable::sim::{run, InitMode, Scenario};
use peaceable::time::RefTime;
use proptest::prelude::*;
use support::sync_oracle;

fn process(lists: &[&[u64]]) -> PulseProcess {
    PulseProcess {
        nodes: (0..lists.len()).collect(),
        pulses: lists.iter().map(|l| l.iter().map(|t| RefTime(*t)).collect()).collect(),
    }
}

const BOUNDS: SyncBounds = SyncBounds { spread: 2, lower: 90, upper: 110 };

#[test]
fn synchronized_example() {
    let p = process(&[&[0, 100, 200], &[1, 101, 201]]);
    assert!(is_synchronized(&p, BOUNDS, RefTime(250)).unwrap());
}

#[test]
fn missing_pulse_breaks_synchronization() {
    let p = process(&[&[0, 100, 200], &[1, 201]]);
    assert!(!is_synchronized(&p, BOUNDS, RefTime(250)).unwrap());
}

#[test]
fn wide_spread_breaks_synchronization() {
    let p = process(&[&[0, 100, 200], &[1, 104, 201]]);
    assert!(!is_synchronized(&p, BOUNDS, RefTime(250)).unwrap());
}

fn params() -> ParamSet {
    solve(&ParamInputs::new(1, Rational::from_integer(0), 4, 1, 3)).unwrap()
}

#[test]
fn short_horizons_are_rejected() {
    let mut s = Scenario::new(params(), 1);
    s.horizon_ticks = Some(500);
    let trace = run(&s).unwrap();
    assert!(matches!(detect_stabilization(&trace, &params()), Err(CheckError::HorizonTooShort { .. })));
}

#[test]
fn crash_run_from_clean_state_meets_every_check() {
    let p = params();
    let mut s = Scenario::new(p.clone(), 3);
    s.init = InitMode::Clean;
    s.faulty = vec![3];
    s.strategy = Strategy::Crash { at_tick: 0 };
    let trace = run(&s).unwrap();
    let t = detect_stabilization(&trace, &p).unwrap().expect("stabilizes");
    assert!(t <= trace.scale().ceil(&p.stabilization_deadline()));
    assert!(convergence_series(&trace, &p).passed());
    assert!(emergency_properties(&trace, &p).passed());
    assert!(message_audit(&trace, t).iter().all(|a| a.passed()));
    let clusters = pulse_clusters(&trace, trace.meta.scale * 10);
    assert!(clusters.len() > 10);
    assert!(clusters.iter().filter(|c| c.start >= t).all(|c| c.uniform_counter(&[0, 1, 2]).is_some()));
}

proptest! {
    #[test]
    fn synchronization_matches_the_oracle(
        lists in prop::collection::vec(prop::collection::btree_set(0i64..400, 0..6), 1..4),
        spread in 0i64..4,
        lower in 12i64..60,
        width in 0i64..40,
    ) {
        let upper = lower + width;
        let end = 400;
        let p = PulseProcess {
            nodes: (0..lists.len()).collect(),
            pulses: lists.iter().map(|l| l.iter().map(|t| RefTime(*t as u64)).collect()).collect(),
        };
        let points: Vec<Vec<i64>> = lists.iter().map(|l| l.iter().copied().collect()).collect();
        let b = SyncBounds { spread, lower, upper };
        prop_assert_eq!(is_synchronized(&p, b, RefTime(end as u64)).unwrap(), sync_oracle(&points, spread, lower, upper, end));
    }
}
