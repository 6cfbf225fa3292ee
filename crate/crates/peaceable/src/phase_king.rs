//! Fixed-round binary agreement driven by rotating kings.
//!
//! [`Rule::ThreeRound`] is the king algorithm with a value round, a propose
//! round and a king round per phase; it tolerates `f < n/3`.
//! [`Rule::TwoRound`] keeps only the value and king rounds and is kept to
//! exhibit its failure when `n ≤ 4f`.

use std::collections::HashSet;

/// Round structure of a phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rule {
    ThreeRound,
    TwoRound,
}

impl Rule {
    pub fn rounds_per_phase(self) -> u32 {
        match self {
            Rule::ThreeRound => 3,
            Rule::TwoRound => 2,
        }
    }

    /// Total rounds for `f` faults.
    pub fn rounds(self, f: usize) -> u32 {
        self.rounds_per_phase() * (f as u32 + 1)
    }
}

/// King of the phase containing round `round` (1-based): node ids `1..=f+1`.
pub fn king_of(rule: Rule, round: u32) -> usize {
    ((round - 1) / rule.rounds_per_phase()) as usize + 1
}

/// One participant's agreement state.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct KingState {
    pub n: usize,
    pub f: usize,
    pub me: usize,
    pub rule: Rule,
    value: bool,
    /// Value seen at least `n−f` times in the last value round.
    proposal: Option<bool>,
    /// Whether the current value is locked against the king.
    locked: bool,
    done: u32,
}

impl KingState {
    pub fn new(n: usize, f: usize, me: usize, input: bool, rule: Rule) -> Self {
        Self { n, f, me, rule, value: input, proposal: None, locked: false, done: 0 }
    }

    pub fn rounds(&self) -> u32 {
        self.rule.rounds(self.f)
    }

    pub fn value(&self) -> bool {
        self.value
    }

    /// Rounds completed so far.
    pub fn completed(&self) -> u32 {
        self.done
    }

    fn step(&self, round: u32) -> u32 {
        (round - 1) % self.rule.rounds_per_phase()
    }

    fn is_king_round(&self, round: u32) -> bool {
        self.step(round) + 1 == self.rule.rounds_per_phase()
    }

    /// Message this node broadcasts in `round` (1-based), if any.
    pub fn outgoing(&self, round: u32) -> Option<bool> {
        if round == 0 || round > self.rounds() {
            return None;
        }
        if self.is_king_round(round) {
            return (king_of(self.rule, round) == self.me).then_some(self.value);
        }
        match (self.rule, self.step(round)) {
            (Rule::ThreeRound, 1) => self.proposal,
            _ => Some(self.value),
        }
    }

    /// Completes `round` with the messages received, indexed by sender.
    pub fn deliver(&mut self, round: u32, received: &[Option<bool>]) {
        debug_assert_eq!(round, self.done + 1);
        let count = |v: bool| received.iter().filter(|m| **m == Some(v)).count();
        let (ones, zeros) = (count(true), count(false));
        let quorum = self.n - self.f;
        if self.is_king_round(round) {
            let king = received.get(king_of(self.rule, round)).copied().flatten().unwrap_or(false);
            if !self.locked {
                self.value = king;
            }
        } else {
            match (self.rule, self.step(round)) {
                (Rule::ThreeRound, 0) => {
                    self.proposal = if ones >= quorum {
                        Some(true)
                    } else if zeros >= quorum {
                        Some(false)
                    } else {
                        None
                    };
                }
                (Rule::ThreeRound, _) => {
                    if ones > self.f {
                        self.value = true;
                    } else if zeros > self.f {
                        self.value = false;
                    }
                    let support = if self.value { ones } else { zeros };
                    self.locked = support >= quorum;
                }
                (Rule::TwoRound, _) => {
                    self.value = ones > zeros;
                    self.locked = ones.max(zeros) >= quorum;
                }
            }
        }
        self.done = round;
    }

    /// Decision after the last round.
    pub fn output(&self) -> Option<bool> {
        (self.done == self.rounds()).then_some(self.value)
    }
}

/// Outcome of an exhaustive adversary search.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchReport {
    /// Distinct `(faulty set, inputs)` scenarios explored.
    pub scenarios: usize,
    /// Distinct reachable system states explored across all rounds.
    pub states: usize,
    pub counterexample: Option<String>,
}

fn faulty_sets(n: usize, f: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize == f {
            out.push((0..n).filter(|i| mask & (1 << i) != 0).collect());
        }
    }
    out
}

/// Explores every per-round, per-recipient choice of faulty messages from
/// `{silent, 0, 1}` for every faulty set of size `f` and every input vector,
/// checking agreement, validity and termination after exactly `rule.rounds(f)` rounds.
pub fn exhaustive_search(n: usize, f: usize, rule: Rule) -> SearchReport {
    let mut scenarios = 0;
    let mut states = 0;
    for faulty in faulty_sets(n, f) {
        let honest: Vec<usize> = (0..n).filter(|i| !faulty.contains(i)).collect();
        for inputs in 0u32..(1 << honest.len()) {
            scenarios += 1;
            let start: Vec<KingState> = honest
                .iter()
                .enumerate()
                .map(|(k, &id)| KingState::new(n, f, id, inputs & (1 << k) != 0, rule))
                .collect();
            let mut frontier: HashSet<Vec<KingState>> = HashSet::from([start]);
            for round in 1..=rule.rounds(f) {
                let mut next = HashSet::new();
                // Faulty non-kings are ignored in king rounds, so silence covers them.
                let faulty_choices: Vec<Vec<Option<bool>>> = faulty
                    .iter()
                    .map(|&z| {
                        let ignored = start_is_king_round(rule, round) && king_of(rule, round) != z;
                        if ignored {
                            vec![None]
                        } else {
                            vec![None, Some(false), Some(true)]
                        }
                    })
                    .collect();
                for sys in &frontier {
                    let sent: Vec<Option<bool>> = {
                        let mut v = vec![None; n];
                        for s in sys {
                            v[s.me] = s.outgoing(round);
                        }
                        v
                    };
                    // Each (faulty node, recipient) pair picks independently.
                    let slots: Vec<(usize, usize)> =
                        faulty.iter().enumerate().flat_map(|(zi, _)| (0..honest.len()).map(move |h| (zi, h))).collect();
                    let radix: Vec<usize> = slots.iter().map(|(zi, _)| faulty_choices[*zi].len()).collect();
                    let total: usize = radix.iter().product();
                    for code in 0..total {
                        let mut c = code;
                        let mut picks = vec![vec![None; honest.len()]; faulty.len()];
                        for (k, (zi, h)) in slots.iter().enumerate() {
                            picks[*zi][*h] = faulty_choices[*zi][c % radix[k]];
                            c /= radix[k];
                        }
                        let mut ns = sys.clone();
                        for (h, s) in ns.iter_mut().enumerate() {
                            let mut recv = sent.clone();
                            for (zi, &z) in faulty.iter().enumerate() {
                                recv[z] = picks[zi][h];
                            }
                            s.deliver(round, &recv);
                        }
                        next.insert(ns);
                    }
                }
                states += next.len();
                frontier = next;
            }
            for sys in &frontier {
                let outs: Vec<Option<bool>> = sys.iter().map(|s| s.output()).collect();
                let input_of = |k: usize| inputs & (1 << k) != 0;
                let unanimous = (0..honest.len()).all(|k| input_of(k) == input_of(0));
                let bad = if outs.iter().any(|o| o.is_none()) {
                    Some("no decision after the last round")
                } else if outs.iter().any(|o| *o != outs[0]) {
                    Some("agreement violated")
                } else if unanimous && outs[0] != Some(input_of(0)) {
                    Some("validity violated")
                } else {
                    None
                };
                if let Some(why) = bad {
                    let ins: Vec<String> =
                        honest.iter().enumerate().map(|(k, id)| format!("{id}:{}", input_of(k) as u8)).collect();
                    let os: Vec<String> =
                        sys.iter().map(|s| format!("{}:{}", s.me, s.output().map_or(9, |b| b as u8))).collect();
                    return SearchReport {
                        scenarios,
                        states,
                        counterexample: Some(format!(
                            "{why}: faulty={faulty:?} inputs=[{}] outputs=[{}]",
                            ins.join(" "),
                            os.join(" ")
                        )),
                    };
                }
            }
        }
    }
    SearchReport { scenarios, states, counterexample: None }
}

fn start_is_king_round(rule: Rule, round: u32) -> bool {
    (round - 1) % rule.rounds_per_phase() + 1 == rule.rounds_per_phase()
}
