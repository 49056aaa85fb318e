//! Brute-force consistency checks over marketplace states and traces.
//!
//! Nothing here reuses the exec engine's arithmetic: the ledger replay is
//! its own fold, so agreement between replayed and stored balances is
//! evidence rather than a tautology.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use num_bigint::{BigInt, BigUint};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ast::{self, Address, Currency, Delta, Primitive, Timestamp, T_MAX};
use crate::exec::{BalanceTable, ContractId, DescriptionId, GatewayValue, TransferRecord, DEFAULT_FRESHNESS_WINDOW};
use crate::marketplace::{Choice, Event, MarketError, Marketplace, Operation, Outcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ViolationKind {
    DuplicateId,
    StaleFreshId,
    DanglingDescription,
    LedgerMismatch,
    EventDangling,
    TimeRegression,
    /// A live contract vanished in a step that was not a join of that contract.
    ContractWithdrawn,
}

/// One broken invariant. `at_step` is 0 for the initial state and `i + 1`
/// for the state produced by step `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub detail: String,
    pub at_step: usize,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "step {}: {:?}: {}", self.at_step, self.kind, self.detail)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceStep {
    pub op: Operation,
    pub outcome: Result<Outcome, MarketError>,
    /// State after the step; equal to the previous state when rejected.
    pub state: Marketplace,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub initial: Marketplace,
    pub steps: Vec<TraceStep>,
}

impl Trace {
    pub fn new(initial: Marketplace) -> Self {
        Trace { initial, steps: Vec::new() }
    }

    pub fn last_state(&self) -> &Marketplace {
        self.steps.last().map_or(&self.initial, |s| &s.state)
    }

    /// Applies `op` to the last state and records the result.
    pub fn push(&mut self, op: Operation) {
        let prev = self.last_state();
        let (state, outcome) = match prev.apply(&op) {
            Ok((next, outcome)) => (next, Ok(outcome)),
            Err(e) => (prev.clone(), Err(e)),
        };
        self.steps.push(TraceStep { op, outcome, state });
    }

    /// Every state in order, starting with the initial one.
    pub fn states(&self) -> impl Iterator<Item = &Marketplace> {
        std::iter::once(&self.initial).chain(self.steps.iter().map(|s| &s.state))
    }
}

/// Balances implied by a ledger, starting from all zeros.
pub fn replay_ledger(ledger: &[TransferRecord]) -> BalanceTable {
    let mut sums: HashMap<(Address, Currency), BigInt> = HashMap::new();
    for record in ledger {
        let amount = BigInt::from(record.amount.clone());
        *sums.entry((record.payer.clone(), record.currency.clone())).or_default() -= &amount;
        *sums.entry((record.payee.clone(), record.currency.clone())).or_default() += &amount;
    }
    sums.into_iter().collect()
}

pub fn check_state(state: &Marketplace) -> Vec<Violation> {
    let mut out = Vec::new();
    check_state_into(state, 0, &mut out);
    out
}

fn check_state_into(state: &Marketplace, step: usize, out: &mut Vec<Violation>) {
    let mut report = |kind, detail: String| out.push(Violation { kind, detail, at_step: step });

    let mut seen = BTreeSet::new();
    for c in &state.contracts {
        if !seen.insert(c.id) {
            report(ViolationKind::DuplicateId, format!("contract id {} appears twice", c.id));
        }
        if c.id.0 >= state.fresh_id {
            report(ViolationKind::StaleFreshId, format!("contract {} is not below fresh id {}", c.id, state.fresh_id));
        }
        if state.description(c.dsc_id).is_none() {
            report(
                ViolationKind::DanglingDescription,
                format!("contract {} refers to missing description {}", c.id, c.dsc_id),
            );
        }
    }

    let mut seen = BTreeSet::new();
    for d in &state.descriptions {
        if !seen.insert(d.id) {
            report(ViolationKind::DuplicateId, format!("description id {} appears twice", d.id));
        }
    }

    for (i, r) in state.ledger.iter().enumerate() {
        if r.amount == BigUint::default() {
            report(ViolationKind::LedgerMismatch, format!("ledger entry {i} has zero amount"));
        }
        if r.contract_id.0 >= state.fresh_id {
            report(
                ViolationKind::LedgerMismatch,
                format!("ledger entry {i} names unallocated contract {}", r.contract_id),
            );
        }
        if r.timestamp > state.time {
            report(
                ViolationKind::TimeRegression,
                format!("ledger entry {i} is stamped {} but the clock reads {}", r.timestamp, state.time),
            );
        }
    }
    let replayed = replay_ledger(&state.ledger);
    if replayed != state.balances {
        let stored: Vec<_> = state.balances.iter().collect();
        let implied: Vec<_> = replayed.iter().collect();
        let diff = first_difference(&stored, &implied);
        report(ViolationKind::LedgerMismatch, format!("stored balances differ from ledger replay: {diff}"));
    }

    for (i, e) in state.events.iter().enumerate() {
        let id = e.contract_id();
        if id.0 >= state.fresh_id {
            report(ViolationKind::EventDangling, format!("event {i} ({e:?}) names unallocated contract {id}"));
        }
        if matches!(e, Event::Executed(_) | Event::Deleted(_)) && state.is_live(id) {
            report(
                ViolationKind::EventDangling,
                format!("event {i} ({e:?}) closes contract {id}, which is still live"),
            );
        }
    }

    for (addr, entry) in &state.gateway.entries {
        if entry.recorded_at > state.time {
            report(
                ViolationKind::TimeRegression,
                format!("gateway entry {addr} recorded at {} after clock {}", entry.recorded_at, state.time),
            );
        }
    }
}

fn first_difference(stored: &[(&Address, &Currency, &BigInt)], implied: &[(&Address, &Currency, &BigInt)]) -> String {
    let stored: HashMap<_, _> = stored.iter().map(|(a, c, v)| ((*a, *c), *v)).collect();
    let implied: HashMap<_, _> = implied.iter().map(|(a, c, v)| ((*a, *c), *v)).collect();
    let zero = BigInt::default();
    let mut keys: Vec<_> = stored.keys().chain(implied.keys()).collect();
    keys.sort();
    for key in keys {
        let s = stored.get(key).copied().unwrap_or(&zero);
        let i = implied.get(key).copied().unwrap_or(&zero);
        if s != i {
            return format!("{} {}: stored {s}, replayed {i}", key.0, key.1);
        }
    }
    String::from("(no entry differs)")
}

/// Checks every state of the trace plus the step-to-step properties:
/// monotone clock that only ticks move, append-only ledger and event log,
/// monotone fresh id, no id reuse, and no contract removal outside joins.
pub fn check_trace(trace: &Trace) -> Vec<Violation> {
    let mut out = Vec::new();
    check_state_into(&trace.initial, 0, &mut out);
    let mut prev = &trace.initial;
    for (i, step) in trace.steps.iter().enumerate() {
        let at_step = i + 1;
        let cur = &step.state;
        check_state_into(cur, at_step, &mut out);
        let mut report = |kind, detail: String| out.push(Violation { kind, detail, at_step });

        if cur.time < prev.time {
            report(ViolationKind::TimeRegression, format!("clock went from {} to {}", prev.time, cur.time));
        }
        match step.op {
            Operation::Tick { n } if step.outcome.is_ok() => {
                if cur.time != prev.time.saturating_add(n) {
                    report(
                        ViolationKind::TimeRegression,
                        format!("tick {n} moved the clock from {} to {}", prev.time, cur.time),
                    );
                }
            }
            _ if cur.time != prev.time => {
                report(
                    ViolationKind::TimeRegression,
                    format!("non-tick step moved the clock from {} to {}", prev.time, cur.time),
                );
            }
            _ => {}
        }

        if !cur.ledger.starts_with(&prev.ledger) {
            report(ViolationKind::LedgerMismatch, "ledger was rewritten rather than appended to".into());
        }
        if !cur.events.starts_with(&prev.events) {
            report(ViolationKind::EventDangling, "event log was rewritten rather than appended to".into());
        }
        if cur.fresh_id < prev.fresh_id {
            report(ViolationKind::StaleFreshId, format!("fresh id went from {} to {}", prev.fresh_id, cur.fresh_id));
        }

        let joined = match (&step.op, &step.outcome) {
            (Operation::Join { id, .. } | Operation::JoinOr { id, .. }, Ok(_)) => Some(*id),
            _ => None,
        };
        for c in &prev.contracts {
            if Some(c.id) != joined && !cur.is_live(c.id) {
                report(ViolationKind::ContractWithdrawn, format!("contract {} disappeared", c.id));
            }
        }
        for c in &cur.contracts {
            if !prev.is_live(c.id) && c.id.0 < prev.fresh_id {
                report(ViolationKind::DuplicateId, format!("contract id {} was reused", c.id));
            }
        }
        prev = cur;
    }
    out
}

/// Fraction of generated operations that carry deliberately invalid arguments.
pub const INVALID_RATE: f64 = 0.2;

/// The parties, currencies, gateway sources and contract templates that
/// random traces draw from.
#[derive(Debug, Clone)]
pub struct Universe {
    pub parties: Vec<Address>,
    pub currencies: Vec<Currency>,
    pub numeric_sources: Vec<Address>,
    pub boolean_sources: Vec<Address>,
    pub templates: Vec<Primitive>,
    /// Probability of registering a freshly generated tree instead of a template.
    pub random_description_rate: f64,
    pub random_depth: usize,
    pub freshness_window: Timestamp,
    pub delta: Delta,
}

impl Default for Universe {
    fn default() -> Self {
        let a = |s: &str| Address::new(s).expect("valid address");
        let c = |s: &str| Currency::new(s).expect("valid currency");
        let delta = Delta(30);
        let parse = |s: &str| crate::parser::parse(s, delta).expect("template parses");
        Universe {
            parties: vec![a("alice"), a("bob"), a("carol")],
            currencies: vec![c("USD"), c("EUR"), c("GBP")],
            numeric_sources: vec![a("rate")],
            boolean_sources: vec![a("flag")],
            templates: vec![
                parse("And(Give(Scale(11, One(USD))), Scale(10, One(EUR)))"),
                parse("And(Give(Scale(10, One(EUR))), ScaleObs(rate, Scale(10, One(USD))))"),
                parse("And(Give(Scale(10, One(USD))), At(60, Scale(11, One(USD))))"),
                parse("Or(Scale(5, One(USD)), Scale(3, One(EUR)))"),
                parse("If(flag, One(GBP), Give(One(GBP)))"),
                parse("Before(40, Scale(2, One(EUR)))"),
                parse("After(20, Or(One(USD), Timebound(10, 90, Give(One(EUR)))))"),
            ],
            random_description_rate: 0.4,
            random_depth: 5,
            freshness_window: DEFAULT_FRESHNESS_WINDOW,
            delta,
        }
    }
}

impl Universe {
    /// Every address a generated tree or operation may mention.
    fn sources(&self) -> Vec<Address> {
        let mut all = self.numeric_sources.clone();
        all.extend(self.boolean_sources.iter().cloned());
        all.push(Address::new("unset").expect("valid address"));
        all
    }
}

/// A random tree of at most `depth` levels with timestamps near `now`.
pub fn random_primitive<R: Rng>(rng: &mut R, depth: usize, universe: &Universe, now: Timestamp) -> Primitive {
    let leaf = depth <= 1 || rng.gen_bool(0.25);
    if leaf {
        return if rng.gen_bool(0.2) {
            Primitive::Zero
        } else {
            Primitive::One(pick(rng, &universe.currencies).clone())
        };
    }
    let d = depth - 1;
    let sources = universe.sources();
    match rng.gen_range(0..8) {
        0 => Primitive::scale(rng.gen_range(0u32..6), random_primitive(rng, d, universe, now)),
        1 => Primitive::scale_obs(pick(rng, &sources).clone(), random_primitive(rng, d, universe, now)),
        2 => Primitive::give(random_primitive(rng, d, universe, now)),
        3 | 4 => Primitive::and(random_primitive(rng, d, universe, now), random_primitive(rng, d, universe, now)),
        5 => Primitive::or(random_primitive(rng, d, universe, now), random_primitive(rng, d, universe, now)),
        6 => Primitive::if_(
            pick(rng, &sources).clone(),
            random_primitive(rng, d, universe, now),
            random_primitive(rng, d, universe, now),
        ),
        _ => {
            let t = now + rng.gen_range(0..120);
            let sub = random_primitive(rng, d, universe, now);
            match rng.gen_range(0..3) {
                0 => ast::at(t, sub, universe.delta),
                1 => ast::before(t, sub),
                _ => ast::after(t.saturating_sub(60), sub),
            }
        }
    }
}

fn pick<'a, R: Rng, T>(rng: &mut R, items: &'a [T]) -> &'a T {
    items.choose(rng).expect("universe lists are non-empty")
}

/// A seed-deterministic trace of `depth` operations from the empty marketplace.
pub fn random_trace(seed: u64, depth: usize, universe: &Universe) -> Trace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trace = Trace::new(Marketplace::new(universe.freshness_window));
    for _ in 0..depth {
        let op = draw_operation(&mut rng, trace.last_state(), universe);
        trace.push(op);
    }
    trace
}

fn draw_operation<R: Rng>(rng: &mut R, state: &Marketplace, universe: &Universe) -> Operation {
    if rng.gen_bool(INVALID_RATE) {
        if let Some(op) = draw_invalid(rng, state, universe) {
            return op;
        }
    }
    let joinable: Vec<_> = state.contracts.iter().filter(|c| !c.primitive.is_or()).collect();
    let choosable: Vec<_> = state.contracts.iter().filter(|c| c.primitive.is_or()).collect();
    loop {
        match rng.gen_range(0..100) {
            0..=14 => {
                let primitive = if rng.gen_bool(universe.random_description_rate) {
                    random_primitive(rng, universe.random_depth, universe, state.time)
                } else {
                    pick(rng, &universe.templates).clone()
                };
                let (valid_from, valid_until) = if rng.gen_bool(0.7) {
                    (0, T_MAX)
                } else {
                    let from = state.time.saturating_sub(20) + rng.gen_range(0..40);
                    (from, from + rng.gen_range(0..200))
                };
                return Operation::Register { primitive, valid_from, valid_until };
            }
            15..=39 if !state.descriptions.is_empty() => {
                return Operation::Issue {
                    dsc_id: pick(rng, &state.descriptions).id,
                    issuer: pick(rng, &universe.parties).clone(),
                    proposed_owner: pick(rng, &universe.parties).clone(),
                };
            }
            40..=64 if !joinable.is_empty() => {
                let c = pick(rng, &joinable);
                return Operation::Join { id: c.id, caller: c.proposed_owner.clone() };
            }
            65..=74 if !choosable.is_empty() => {
                let c = pick(rng, &choosable);
                let choice = if rng.gen_bool(0.5) { Choice::Left } else { Choice::Right };
                return Operation::JoinOr { id: c.id, caller: c.proposed_owner.clone(), choice };
            }
            75..=89 => {
                let n = if rng.gen_bool(0.05) { 365 } else { rng.gen_range(1..=40) };
                return Operation::Tick { n };
            }
            90..=99 => {
                let numeric = rng.gen_bool(0.5);
                let mistyped = rng.gen_bool(0.1);
                let (addr, value) = if numeric {
                    let value = if mistyped {
                        GatewayValue::Bool(rng.gen())
                    } else {
                        GatewayValue::Number(BigUint::from(rng.gen_range(0u32..10)))
                    };
                    (pick(rng, &universe.numeric_sources).clone(), value)
                } else {
                    let value = if mistyped {
                        GatewayValue::Number(BigUint::from(rng.gen_range(0u32..10)))
                    } else {
                        GatewayValue::Bool(rng.gen())
                    };
                    (pick(rng, &universe.boolean_sources).clone(), value)
                };
                return Operation::SetGateway { addr, value };
            }
            _ => continue,
        }
    }
}

fn draw_invalid<R: Rng>(rng: &mut R, state: &Marketplace, universe: &Universe) -> Option<Operation> {
    let any_contract = state.contracts.choose(rng);
    match rng.gen_range(0..5) {
        0 => {
            let from = state.time + rng.gen_range(1..50);
            Some(Operation::Register { primitive: Primitive::Zero, valid_from: from, valid_until: from - 1 })
        }
        1 => {
            let next = state.descriptions.iter().map(|d| d.id.0).max().unwrap_or(0) + 1;
            Some(Operation::Issue {
                dsc_id: DescriptionId(next + rng.gen_range(0..3)),
                issuer: pick(rng, &universe.parties).clone(),
                proposed_owner: pick(rng, &universe.parties).clone(),
            })
        }
        2 => {
            let c = any_contract?;
            let strangers: Vec<_> = universe.parties.iter().filter(|p| **p != c.proposed_owner).collect();
            let caller = (*strangers.choose(rng)?).clone();
            Some(Operation::Join { id: c.id, caller })
        }
        3 => Some(Operation::Join {
            id: ContractId(state.fresh_id + rng.gen_range(0..3)),
            caller: pick(rng, &universe.parties).clone(),
        }),
        _ => {
            let c = any_contract?;
            let caller = c.proposed_owner.clone();
            Some(if c.primitive.is_or() {
                Operation::Join { id: c.id, caller }
            } else {
                Operation::JoinOr { id: c.id, caller, choice: Choice::Left }
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::FindelContract;
    use num_traits::One;

    fn a(s: &str) -> Address {
        Address::new(s).unwrap()
    }

    fn rec(payer: &str, payee: &str, amount: u32, cur: &str) -> TransferRecord {
        TransferRecord {
            contract_id: ContractId(1),
            payer: a(payer),
            payee: a(payee),
            amount: BigUint::from(amount),
            currency: Currency::new(cur).unwrap(),
            timestamp: 0,
        }
    }

    #[test]
    fn replay_empty() {
        assert!(replay_ledger(&[]).is_empty());
    }

    #[test]
    fn replay_frce() {
        let b = replay_ledger(&[rec("bob", "alice", 11, "USD"), rec("alice", "bob", 10, "EUR")]);
        let get = |p: &str, c: &str| b.get(&a(p), &Currency::new(c).unwrap());
        assert_eq!(get("alice", "USD"), BigInt::from(11));
        assert_eq!(get("alice", "EUR"), BigInt::from(-10));
        assert_eq!(get("bob", "USD"), BigInt::from(-11));
        assert_eq!(get("bob", "EUR"), BigInt::from(10));
    }

    #[test]
    fn fresh_state_is_consistent() {
        assert_eq!(check_state(&Marketplace::default()), vec![]);
    }

    #[test]
    fn duplicate_ids_are_found() {
        let (mut m, d) = Marketplace::default().register(Primitive::Zero);
        let c = FindelContract {
            id: ContractId(3),
            dsc_id: d,
            primitive: Primitive::Zero,
            issuer: a("alice"),
            owner: a("alice"),
            proposed_owner: a("bob"),
            scale: BigUint::one(),
        };
        m.contracts = vec![c.clone(), c];
        m.fresh_id = 4;
        let v = check_state(&m);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, ViolationKind::DuplicateId);
    }

    #[test]
    fn random_trace_is_deterministic() {
        let u = Universe::default();
        assert!(random_trace(1, 0, &u).steps.is_empty());
        assert_eq!(random_trace(7, 40, &u), random_trace(7, 40, &u));
        assert_ne!(random_trace(7, 40, &u), random_trace(8, 40, &u));
    }

    #[test]
    fn random_trace_mixes_in_rejections() {
        let u = Universe::default();
        let (mut rejected, mut total) = (0, 0);
        for seed in 0..50 {
            for step in random_trace(seed, 50, &u).steps {
                total += 1;
                rejected += usize::from(step.outcome.is_err());
            }
        }
        let rate = rejected as f64 / total as f64;
        assert!((0.1..0.45).contains(&rate), "rejection rate {rate}");
    }

    #[test]
    fn seeded_trace_checks_clean() {
        let trace = random_trace(42, 50, &Universe::default());
        assert_eq!(check_trace(&trace), vec![]);
    }
}
