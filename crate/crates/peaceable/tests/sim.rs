use peaceable::adversary::Strategy;
use peaceable::params::{solve, ParamInputs, ParamSet, Rational};
use peaceable::sim::{run, Scenario, SimError};
use peaceable::trace::EventKind;
use std::collections::{HashMap, HashSet};

fn params(n: usize, f: usize) -> ParamSet {
    solve(&ParamInputs::new(1, Rational::from_integer(0), n, f, 3)).unwrap()
}

fn short(seed: u64) -> Scenario {
    let mut s = Scenario::new(params(4, 1), seed);
    s.faulty = vec![3];
    s.strategy = Strategy::RandomByzantine;
    s.horizon_ticks = Some(1500);
    s
}

#[test]
fn same_seed_same_trace() {
    assert_eq!(run(&short(5)).unwrap().digest(), run(&short(5)).unwrap().digest());
    assert_ne!(run(&short(5)).unwrap().digest(), run(&short(6)).unwrap().digest());
}

#[test]
fn scenarios_are_validated() {
    let mut s = short(0);
    s.faulty = vec![2, 3];
    assert!(matches!(run(&s), Err(SimError::FaultySetTooLarge { size: 2, f: 1 })));
    s.faulty = vec![4];
    assert!(matches!(run(&s), Err(SimError::UnknownNode(4))));
    let mut s = short(0);
    s.params.n = 3;
    assert!(matches!(run(&s), Err(SimError::TooManyFaults { n: 3, f: 1 })));
}

#[test]
fn receipts_land_on_receiver_ticks() {
    let mut s = short(9);
    s.record_ticks = true;
    let trace = run(&s).unwrap();
    let mut ticks: HashMap<usize, HashSet<u64>> = HashMap::new();
    for e in trace.events.iter().filter(|e| e.kind == EventKind::C) {
        ticks.entry(e.node).or_default().insert(e.time.0);
    }
    // Messages in flight at start belong to the arbitrary initial state and
    // arrive within one delay bound.
    let bound = trace.meta.scale;
    let receipts: Vec<_> = trace.nonfaulty().filter(|e| e.kind == EventKind::R && e.time.0 >= bound).collect();
    assert!(!receipts.is_empty());
    for e in receipts {
        assert!(ticks[&e.node].contains(&e.time.0), "receipt off-tick at {:?} on node {}", e.time, e.node);
    }
}

#[test]
fn worst_preset_still_stabilizes() {
    use peaceable::checker::report;
    use peaceable::sim::InitMode;
    let p = params(4, 1);
    for seed in 0..3 {
        let mut s = Scenario::new(p.clone(), seed);
        s.init = InitMode::Worst;
        s.faulty = vec![3];
        s.strategy = Strategy::EngageSpammer;
        let rep = report(&run(&s).unwrap(), &p);
        assert!(rep.stabilized_in_time(), "seed {seed}: {:?}", rep.stabilization);
    }
}
