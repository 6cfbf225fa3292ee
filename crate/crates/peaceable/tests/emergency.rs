use peaceable::accept::{AcceptConfig, Accepted, Acceptor};
use peaceable::hoppelpopp::{EmergencyConfig, Hoppelpopp, Outcome};
use peaceable::network::Wire;
use peaceable::node::{Action, Effects};
use peaceable::params::{solve, ParamInputs, ParamSet, Rational};
use peaceable::time::{LocalTime, Ring};
use peaceable::trace::{EventKind, Payload};

const RING: Ring = Ring::new(1 << 15);

fn params() -> ParamSet {
    solve(&ParamInputs::new(1, Rational::from_integer(0), 4, 1, 3)).unwrap()
}

fn kinds(fx: &Effects) -> Vec<EventKind> {
    fx.actions
        .iter()
        .filter_map(|a| match a {
            Action::Emit(k, _) => Some(*k),
            _ => None,
        })
        .collect()
}

fn broadcasts(fx: &Effects) -> Vec<Wire> {
    fx.actions
        .iter()
        .filter_map(|a| match a {
            Action::Broadcast(w) => Some(*w),
            _ => None,
        })
        .collect()
}

fn emergency(me: usize) -> Hoppelpopp {
    Hoppelpopp::new(me, EmergencyConfig::from_params(&params(), RING))
}

#[test]
fn help_is_rate_limited_by_the_initiator_timeout() {
    let mut h = emergency(0);
    let mut fx = Effects::default();
    h.help(&mut fx);
    h.help(&mut fx);
    assert_eq!(kinds(&fx), vec![EventKind::G0]);
    assert_eq!(broadcasts(&fx), vec![Wire::Initiator]);
    for _ in 0..h.cfg.initiator_timeout {
        h.on_tick();
    }
    let mut fx = Effects::default();
    h.help(&mut fx);
    assert_eq!(kinds(&fx), vec![EventKind::G0]);
}

#[test]
fn initiators_are_answered_only_when_unhappy_and_relaxed() {
    let mut fx = Effects::default();
    emergency(0).on_initiator(2, false, &mut fx);
    assert_eq!(kinds(&fx), vec![EventKind::G1]);
    assert_eq!(broadcasts(&fx), vec![Wire::Support { general: 2 }]);

    let mut fx = Effects::default();
    emergency(0).on_initiator(2, true, &mut fx);
    assert!(fx.actions.is_empty());

    let mut h = emergency(0);
    h.after_appearance(&mut Effects::default());
    let mut fx = Effects::default();
    h.on_initiator(2, false, &mut fx);
    assert!(fx.actions.is_empty());
}

fn accepted_at_age(h: &mut Hoppelpopp, age: u64) -> Effects {
    let mut fx = Effects::default();
    let now = LocalTime(700);
    h.on_accepted(Accepted { general: 1, estimate: RING.back(now, age) }, now, &mut fx);
    fx
}

fn g3_bit(fx: &Effects) -> Option<bool> {
    fx.actions.iter().find_map(|a| match a {
        Action::Emit(EventKind::G3, Payload::Bit { bit, .. }) => Some(*bit),
        _ => None,
    })
}

#[test]
fn agreement_input_depends_on_estimate_age() {
    assert_eq!(g3_bit(&accepted_at_age(&mut emergency(0), 3)), Some(true));
    assert_eq!(g3_bit(&accepted_at_age(&mut emergency(0), 5)), Some(false));
    let mut h = emergency(0);
    let fx = accepted_at_age(&mut h, 7);
    assert_eq!(g3_bit(&fx), None);
    assert_eq!(h.running(), vec![1], "a late acceptance still joins the agreement silently");
}

#[test]
fn open_relax_timer_forces_input_zero() {
    let mut h = emergency(0);
    h.after_appearance(&mut Effects::default());
    assert_eq!(g3_bit(&accepted_at_age(&mut h, 3)), Some(false));
}

/// Runs the agreement for General 1 on four nodes, delivering every broadcast.
fn run_agreement(inputs: [bool; 4]) -> Vec<Outcome> {
    let mut nodes: Vec<Hoppelpopp> = (0..4).map(emergency).collect();
    for (h, &bit) in nodes.iter_mut().zip(&inputs) {
        accepted_at_age(h, if bit { 2 } else { 5 });
    }
    let mut outcomes = vec![Outcome::Nothing; 4];
    let last = nodes[0].cfg.ba_rounds + 1;
    for index in 1..=last {
        let mut sent = Vec::new();
        for (i, h) in nodes.iter_mut().enumerate() {
            let mut fx = Effects::default();
            outcomes[i] = h.on_step(1, index, &mut fx);
            sent.extend(broadcasts(&fx).into_iter().map(|w| (i, w)));
        }
        for (from, w) in sent {
            for h in nodes.iter_mut() {
                h.on_message(from, w, false, LocalTime(0), &mut Effects::default());
            }
        }
    }
    outcomes
}

#[test]
fn unanimous_inputs_decide_the_appearance() {
    assert!(run_agreement([true; 4]).iter().all(|o| *o == Outcome::Appear { general: 1 }));
    assert!(run_agreement([false; 4]).iter().all(|o| *o == Outcome::Nothing));
}

#[test]
fn out_of_window_round_messages_are_dropped() {
    let mut h = emergency(0);
    accepted_at_age(&mut h, 2);
    let mut fx = Effects::default();
    h.on_message(3, Wire::Round { general: 1, round: 4, bit: true }, false, LocalTime(0), &mut fx);
    assert_eq!(kinds(&fx), vec![EventKind::X]);
}

fn acceptor(me: usize) -> Acceptor {
    Acceptor::new(me, AcceptConfig::from_params(&params(), RING))
}

#[test]
fn faulty_supports_alone_do_not_confirm() {
    let mut a = acceptor(0);
    let mut fx = Effects::default();
    a.on_support(2, 3, LocalTime(10), &mut fx);
    assert!(broadcasts(&fx).is_empty());
    a.on_support(2, 1, LocalTime(10), &mut fx);
    assert_eq!(broadcasts(&fx), vec![Wire::Confirm { general: 2 }]);
    assert_eq!(kinds(&fx), vec![EventKind::G1]);
}

#[test]
fn quorum_of_confirms_accepts_once() {
    let mut a = acceptor(0);
    let mut fx = Effects::default();
    assert_eq!(a.on_confirm(2, 1, LocalTime(10), &mut fx), None);
    assert_eq!(a.on_confirm(2, 2, LocalTime(10), &mut fx), None);
    let got = a.on_confirm(2, 3, LocalTime(11), &mut fx).expect("n−f confirms accept");
    assert_eq!(got.general, 2);
    // One delay bound before the earliest confirm.
    assert_eq!(got.estimate, LocalTime(9));
    assert!(a.is_refractory(2));
    assert_eq!(a.on_confirm(2, 0, LocalTime(11), &mut fx), None);
    assert_eq!(kinds(&fx).iter().filter(|k| **k == EventKind::G2).count(), 1);
}

#[test]
fn stale_entries_expire() {
    let mut a = acceptor(0);
    let mut fx = Effects::default();
    a.on_confirm(2, 1, LocalTime(10), &mut fx);
    a.on_confirm(2, 2, LocalTime(10), &mut fx);
    for _ in 0..=a.cfg.confirm_memory {
        a.on_tick();
    }
    assert_eq!(a.live(), 0);
    assert_eq!(a.on_confirm(2, 3, LocalTime(20), &mut fx), None);
}
