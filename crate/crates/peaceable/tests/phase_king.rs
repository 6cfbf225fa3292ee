use peaceable::phase_king::{exhaustive_search, king_of, KingState, Rule};

fn run_all(n: usize, f: usize, inputs: &[bool], silent: &[usize], rule: Rule) -> Vec<Option<bool>> {
    let mut nodes: Vec<KingState> = (0..n).map(|i| KingState::new(n, f, i, inputs[i], rule)).collect();
    for round in 1..=rule.rounds(f) {
        let sent: Vec<Option<bool>> =
            nodes.iter().map(|s| if silent.contains(&s.me) { None } else { s.outgoing(round) }).collect();
        for s in nodes.iter_mut() {
            s.deliver(round, &sent);
        }
    }
    nodes.iter().filter(|s| !silent.contains(&s.me)).map(|s| s.output()).collect()
}

#[test]
fn unanimous_ones_with_silent_fault() {
    let out = run_all(4, 1, &[true, true, true, true], &[3], Rule::ThreeRound);
    assert!(out.iter().all(|o| *o == Some(true)));
}

#[test]
fn kings_are_low_ids() {
    assert_eq!(king_of(Rule::ThreeRound, 1), 1);
    assert_eq!(king_of(Rule::ThreeRound, 3), 1);
    assert_eq!(king_of(Rule::ThreeRound, 4), 2);
    assert_eq!(king_of(Rule::TwoRound, 4), 2);
}

#[test]
fn no_output_before_last_round() {
    let mut s = KingState::new(4, 1, 0, true, Rule::ThreeRound);
    s.deliver(1, &[Some(true); 4]);
    assert_eq!(s.output(), None);
}

#[test]
fn three_round_rule_survives_exhaustive_search() {
    let r = exhaustive_search(4, 1, Rule::ThreeRound);
    assert_eq!(r.counterexample, None, "{r:?}");
    assert_eq!(r.scenarios, 4 * 8);
}

#[test]
fn two_round_rule_breaks_at_four_nodes() {
    let r = exhaustive_search(4, 1, Rule::TwoRound);
    let c = r.counterexample.expect("expected a counterexample");
    assert!(c.contains("agreement"), "{c}");
}
