use peaceable::params::{fmt_rational, parse_rational, solve, validate, AppearanceSpread, ParamInputs, Rational};
use proptest::prelude::*;

fn r(s: &str) -> Rational {
    parse_rational(s).unwrap()
}

/// Hand evaluation of the default assignment at d=1, zero drift, precision 3.
/// Each line re-derives the value from the previous ones with plain integers.
fn hand_oracle_unit_delay(rounds: u32) {
    let d = 1.0f64;
    let eps0 = 3.0;
    let pw = eps0 + d; // 4
    let e1 = pw + d; // 5
    let ew = e1 + d; // 6
    let e2 = ew + d; // 7
    let dl1 = pw; // 4
    let ea = 3.0 * e1 + e2 + dl1 + 5.0 * d; // 31
    let dl0 = ea + d; // 32
    let t = 3.0 * dl0 + ea + 9.0 * d; // 136
    let k_eps = 1.0 + (ea / (eps0 - 2.0 * d)).log2().ceil(); // 6
    let k_good = k_eps + 1.0;
    let k_a = k_good + 1.0;
    let e_good = 2f64.powf(2.0 - k_good) * ea + 2.0 * d;
    let acc = e_good + 2.0 * d;
    let span_a = ea + k_a * (t + d) + eps0 + d;
    let eb = 3.0 * d + d;
    let wb = 2.0 * eb;
    let kb = rounds as f64;
    let span_b = (kb + 1.0) * wb;
    let eh = eb + wb;
    let rmv = span_b + 13.0 * d;
    let v = 2.0 * rmv + 15.0 * d;
    let stb = 2.0 * (20.0 * d + 4.0 * rmv);
    let q1 = v + span_b + 2.0 * d;
    let q2 = eh + v + span_b + d;
    let q3 = span_a;
    let relax = q2 + q3 + eh + d;
    let live = (2.0 * pw + span_a).max(relax) + v + span_b + 7.0 * d;
    let c = stb + relax + span_a;
    let e = span_a + live + q1 + q2 + q3 + e2 + eps0 + d;

    let mut i = ParamInputs::new(1, Rational::from_integer(0), 4, 1, 3);
    i.ba_rounds = Some(rounds);
    let p = solve(&i).unwrap();
    let f = |x: &Rational| fmt_rational(x).parse::<f64>().unwrap();
    assert_eq!(f(&p.precision_window), pw);
    assert_eq!(f(&p.engage_spread), e1);
    assert_eq!(f(&p.engage_window), ew);
    assert_eq!(f(&p.engage_horizon), e2);
    assert_eq!(f(&p.engage_wait), dl1);
    assert_eq!(f(&p.settle_wait), d);
    assert_eq!(f(&p.coarse_spread), ea);
    assert_eq!(f(&p.absorb_wait), dl0);
    assert_eq!(f(&p.period), t);
    assert_eq!(p.halvings as f64, k_eps);
    assert_eq!(p.good_from as f64, k_good);
    assert_eq!(p.cycles as f64, k_a);
    assert_eq!(f(&p.good_spread), e_good);
    assert_eq!(f(&p.accuracy), acc);
    assert_eq!(f(&p.round_spread), eb);
    assert_eq!(f(&p.round_wait), wb);
    assert_eq!(f(&p.ba_span), span_b);
    assert_eq!(f(&p.removal_window), rmv);
    assert_eq!(f(&p.initiator_timeout), v);
    assert_eq!(f(&p.accept_stabilization), stb);
    assert_eq!(f(&p.absorption_span), span_a);
    assert_eq!(f(&p.quiet_after_happy), q1);
    assert_eq!(f(&p.separation_lead), q2);
    assert_eq!(f(&p.separation_gap), q3);
    assert_eq!(f(&p.relax_timeout), relax);
    assert_eq!(f(&p.liveness_window), live);
    assert_eq!(f(&p.convergence_bound), c);
    assert_eq!(f(&p.stabilization_bound), e);
}

#[test]
fn hand_oracle_two_rounds_per_phase() {
    hand_oracle_unit_delay(4);
}

#[test]
fn hand_oracle_default_rounds() {
    hand_oracle_unit_delay(6);
    let p = solve(&ParamInputs::new(1, Rational::from_integer(0), 4, 1, 3)).unwrap();
    assert_eq!(p.ba_rounds, 6);
}

#[test]
fn documented_unit_delay_values() {
    let mut i = ParamInputs::new(1, Rational::from_integer(0), 4, 1, 3);
    i.ba_rounds = Some(4);
    let p = solve(&i).unwrap();
    let expect = [
        ("precision_window", "4"),
        ("engage_spread", "5"),
        ("engage_window", "6"),
        ("engage_horizon", "7"),
        ("engage_wait", "4"),
        ("settle_wait", "1"),
        ("coarse_spread", "31"),
        ("absorb_wait", "32"),
        ("period", "136"),
        ("halvings", "6"),
        ("good_from", "7"),
        ("cycles", "8"),
        ("good_spread", "2.96875"),
        ("accuracy", "4.96875"),
        ("round_spread", "4"),
        ("round_wait", "8"),
        ("ba_span", "40"),
        ("removal_window", "53"),
        ("initiator_timeout", "121"),
        ("accept_stabilization", "464"),
        ("absorption_span", "1131"),
        ("quiet_after_happy", "163"),
        ("separation_lead", "174"),
        ("separation_gap", "1131"),
        ("relax_timeout", "1318"),
        ("liveness_window", "1486"),
        ("convergence_bound", "2913"),
        ("stabilization_bound", "4096"),
        ("stabilization_deadline", "7009"),
        ("blanking", "13"),
        ("period_min", "130"),
        ("period_max", "142"),
        ("fta_offset", "67"),
        ("clock_modulus", "32768"),
    ];
    let rows = p.rows();
    for (k, v) in expect {
        let got = &rows.iter().find(|(name, _)| *name == k).unwrap().1;
        assert_eq!(got, v, "{k}");
    }
    assert!(validate(&p).iter().filter(|e| e.gating).all(|e| e.pass));
    assert!(p.is_valid());
}

#[test]
fn simple_appearance_spread_total() {
    let mut i = ParamInputs::new(1, Rational::from_integer(0), 4, 1, 3);
    i.appearance = AppearanceSpread::Simple;
    i.ba_rounds = Some(4);
    let p = solve(&i).unwrap();
    assert_eq!(p.stabilization_deadline(), Rational::from_integer(6969));
}

#[test]
fn zero_drift_round_wait_is_eight_delays() {
    for d in 1..5 {
        let p = solve(&ParamInputs::new(d, Rational::from_integer(0), 4, 1, 3 * d)).unwrap();
        assert_eq!(p.round_wait, Rational::from_integer(8 * d));
    }
}

#[test]
fn precision_of_two_delays_rejected() {
    assert!(solve(&ParamInputs::new(1, Rational::from_integer(0), 4, 1, 2)).is_err());
}

#[test]
fn large_drift_rejected() {
    assert!(solve(&ParamInputs::new(1, r("0.5"), 4, 1, 3)).is_err());
}

#[test]
fn too_many_faults_rejected() {
    assert!(solve(&ParamInputs::new(1, Rational::from_integer(0), 3, 1, 3)).is_err());
}

#[test]
fn lowered_period_fails_ledger() {
    let mut p = solve(&ParamInputs::new(1, Rational::from_integer(0), 4, 1, 3)).unwrap();
    p.period = Rational::from_integer(100);
    let led = validate(&p);
    assert!(!led.iter().find(|e| e.name == "period covers absorption round").unwrap().pass);
    assert!(!p.is_valid());
}

#[test]
fn cycles_equal_to_goodness_cycle_fails_ledger() {
    let mut p = solve(&ParamInputs::new(1, Rational::from_integer(0), 4, 1, 3)).unwrap();
    p.cycles = 7;
    let led = validate(&p);
    assert!(!led.iter().find(|e| e.name == "cycles exceed goodness cycle").unwrap().pass);
}

#[test]
fn small_drift_solves_and_validates() {
    for (n, f) in [(4, 1), (7, 2)] {
        let p = solve(&ParamInputs::new(1, r("1e-4"), n, f, 3)).unwrap();
        assert!(p.is_valid(), "{n},{f}");
        assert!(p.period >= Rational::from_integer(136));
    }
}

#[test]
fn parse_and_format_roundtrip() {
    assert_eq!(r("1/1024"), Rational::new(1, 1024));
    assert_eq!(r("1e-4"), Rational::new(1, 10000));
    assert_eq!(r("0.0001"), Rational::new(1, 10000));
    assert_eq!(fmt_rational(&r("2.96875")), "2.96875");
    assert!(parse_rational("abc").is_none());
}

proptest! {
    #[test]
    fn solve_is_idempotent(d in 1i128..4, extra in 1i128..4, drift_bp in 0i128..100, n7 in proptest::bool::ANY) {
        let (n, f) = if n7 { (7, 2) } else { (4, 1) };
        let drift = Rational::new(drift_bp, 10_000);
        let i = ParamInputs::new(d, drift, n, f, 2 * d + extra);
        if let Ok(p) = solve(&i) {
            let q = solve(&i).unwrap();
            prop_assert_eq!(&p, &q);
            let mut again = i.clone();
            again.period = Some(p.period);
            prop_assert_eq!(solve(&again).unwrap(), p);
        }
    }

    #[test]
    fn durations_grow_with_delay(d in 1i128..5) {
        let a = solve(&ParamInputs::new(d, Rational::from_integer(0), 4, 1, 20)).unwrap();
        let b = solve(&ParamInputs::new(d + 1, Rational::from_integer(0), 4, 1, 20)).unwrap();
        let pairs = [
            (a.absorption_span, b.absorption_span),
            (a.ba_span, b.ba_span),
            (a.initiator_timeout, b.initiator_timeout),
            (a.relax_timeout, b.relax_timeout),
            (a.liveness_window, b.liveness_window),
            (a.convergence_bound, b.convergence_bound),
            (a.stabilization_bound, b.stabilization_bound),
            (a.quiet_after_happy, b.quiet_after_happy),
            (a.separation_lead, b.separation_lead),
        ];
        for (x, y) in pairs {
            prop_assert!(y >= x);
        }
    }
}
