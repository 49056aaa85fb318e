mod common;

use common::{addr, cur};
use findel_core::ast::{Delta, Primitive};
use findel_core::exec::{ContractId, GatewayValue};
use findel_core::marketplace::{Choice, Event, MarketError, Marketplace, Operation, Outcome};
use findel_core::oracle::{check_state, check_trace, random_trace, replay_ledger, Trace, Universe};
use findel_core::parse;
use num_bigint::{BigInt, BigUint};

/// Only joins may take a contract off the market. The match is exhaustive,
/// so adding a withdrawal operation forces this test to be revisited.
fn may_remove_contracts(op: &Operation) -> bool {
    match op {
        Operation::Register { .. }
        | Operation::Issue { .. }
        | Operation::Tick { .. }
        | Operation::SetGateway { .. } => false,
        Operation::Join { .. } | Operation::JoinOr { .. } => true,
    }
}

#[test]
fn random_traces_are_consistent() {
    let universe = Universe::default();
    for seed in 0..300 {
        let trace = random_trace(seed, 50, &universe);
        let violations = check_trace(&trace);
        assert!(violations.is_empty(), "seed {seed}: {violations:?}");
    }
}

#[test]
fn only_the_proposed_owner_removes_a_contract() {
    let universe = Universe::default();
    for seed in 0..200 {
        let trace = random_trace(seed, 50, &universe);
        let mut prev = &trace.initial;
        for step in &trace.steps {
            let removed: Vec<_> = prev.contracts.iter().filter(|c| !step.state.is_live(c.id)).collect();
            if !may_remove_contracts(&step.op) {
                assert!(removed.is_empty(), "seed {seed}: {:?} removed {removed:?}", step.op);
            }
            for c in removed {
                let (Operation::Join { id, caller } | Operation::JoinOr { id, caller, .. }) = &step.op else {
                    unreachable!()
                };
                assert_eq!(*id, c.id);
                assert_eq!(*caller, c.proposed_owner);
            }
            prev = &step.state;
        }
    }
}

#[test]
fn time_moves_only_on_tick() {
    let universe = Universe::default();
    for seed in 0..200 {
        let trace = random_trace(seed, 50, &universe);
        let mut prev = &trace.initial;
        for step in &trace.steps {
            match step.op {
                Operation::Tick { n } => assert_eq!(step.state.time, prev.time + n),
                _ => assert_eq!(step.state.time, prev.time),
            }
            prev = &step.state;
        }
    }
}

#[test]
fn replaying_operations_reproduces_every_state() {
    let universe = Universe::default();
    for seed in 0..100 {
        let trace = random_trace(seed, 40, &universe);
        let mut again = Trace::new(trace.initial.clone());
        for step in &trace.steps {
            again.push(step.op.clone());
        }
        assert_eq!(again, trace);
    }
}

#[test]
fn rejections_are_pure_on_random_states() {
    let universe = Universe::default();
    for seed in 0..100 {
        let trace = random_trace(seed, 30, &universe);
        let state = trace.last_state();
        let snapshot = state.clone();
        for c in &state.contracts {
            let stranger = universe.parties.iter().find(|p| **p != c.proposed_owner).unwrap();
            assert!(matches!(state.join(c.id, stranger), Err(MarketError::NotProposedOwner { .. })));
            if c.primitive.is_or() {
                assert_eq!(state.join(c.id, &c.proposed_owner), Err(MarketError::RootIsOr(c.id)));
            } else {
                assert_eq!(state.join_or(c.id, &c.proposed_owner, Choice::Right), Err(MarketError::RootNotOr(c.id)));
            }
        }
        assert_eq!(*state, snapshot);
    }
    for step in random_trace(3, 200, &universe).steps {
        if step.outcome.is_err() {
            assert!(check_state(&step.state).is_empty());
        }
    }
}

#[test]
fn failed_join_keeps_balances_ledger_and_fresh_id() {
    let m = Marketplace::default();
    let (m, d) =
        m.register(parse("And(Scale(3, One(USD)), And(Or(Zero, Zero), If(flag, Zero, Zero)))", Delta(0)).unwrap());
    let (m, id) = m.issue(d, &addr("alice"), &addr("bob")).unwrap();
    let m = m.set_gateway(addr("flag"), GatewayValue::Number(BigUint::from(1u32)));
    let (after, _) = m.join(id, &addr("bob")).unwrap();
    assert_eq!(after.balances, m.balances);
    assert_eq!(after.ledger, m.ledger);
    assert_eq!(after.fresh_id, m.fresh_id);
    assert_eq!(after.events.last(), Some(&Event::Deleted(id)));
}

#[test]
fn ledger_replays_to_balances_after_every_step() {
    let universe = Universe::default();
    for seed in 0..100 {
        for state in random_trace(seed, 50, &universe).states() {
            assert_eq!(replay_ledger(&state.ledger), state.balances);
        }
    }
}

#[test]
fn gateway_freshness_boundary() {
    let (m, d) = Marketplace::new(10).register(parse("ScaleObs(rate, One(USD))", Delta(0)).unwrap());
    let (m, id) = m.issue(d, &addr("alice"), &addr("bob")).unwrap();
    let m = m.set_gateway(addr("rate"), GatewayValue::Number(BigUint::from(7u32)));

    let (on_time, _) = m.tick(10).join(id, &addr("bob")).unwrap();
    assert_eq!(on_time.balance(&addr("bob"), &cur("USD")), BigInt::from(7));

    let (late, _) = m.tick(11).join(id, &addr("bob")).unwrap();
    assert_eq!(late.events.last(), Some(&Event::Deleted(id)));
    assert!(late.balances.is_empty());
}

#[test]
fn if_on_true_flag_pays() {
    let (m, d) = Marketplace::default().register(parse("If(flag, One(USD), Zero)", Delta(0)).unwrap());
    let (m, id) = m.issue(d, &addr("alice"), &addr("bob")).unwrap();
    let (m, _) = m.set_gateway(addr("flag"), GatewayValue::Bool(true)).join(id, &addr("bob")).unwrap();
    assert_eq!(m.balance(&addr("bob"), &cur("USD")), BigInt::from(1));
}

#[test]
fn after_rooted_contract_postpones_until_its_time() {
    let p = findel_core::after(20, Primitive::one(cur("EUR")));
    let (m, d) = Marketplace::default().register(p);
    let (m, id) = m.issue(d, &addr("alice"), &addr("bob")).unwrap();
    let (m, outcome) = m.tick(5).join(id, &addr("bob")).unwrap();
    let findel_core::JoinOutcome::Executed { generated } = outcome else { panic!() };
    assert_eq!(generated, vec![ContractId(2)]);
    assert!(m.ledger.is_empty());
    let (m, _) = m.tick(15).join(ContractId(2), &addr("bob")).unwrap();
    assert_eq!(m.balance(&addr("bob"), &cur("EUR")), BigInt::from(1));
}

#[test]
fn events_are_available_in_both_orders() {
    let (m, d) = Marketplace::default().register(Primitive::Zero);
    let (m, c1) = m.issue(d, &addr("alice"), &addr("bob")).unwrap();
    let (m, c2) = m.issue(d, &addr("alice"), &addr("carol")).unwrap();
    let (m, _) = m.join(c1, &addr("bob")).unwrap();
    let newest: Vec<_> = m.events_newest_first().cloned().collect();
    let oldest: Vec<_> = m.events_chronological().cloned().collect();
    assert_eq!(newest[0], Event::Executed(c1));
    assert_eq!(oldest[0], Event::IssuedFor(addr("bob"), c1));
    assert_eq!(oldest[1], Event::IssuedFor(addr("carol"), c2));
    assert_eq!(newest.iter().rev().cloned().collect::<Vec<_>>(), oldest);
}

#[test]
fn apply_reports_outcomes() {
    let m = Marketplace::default();
    let (m, out) = m.apply(&Operation::Register { primitive: Primitive::Zero, valid_from: 0, valid_until: 9 }).unwrap();
    assert!(matches!(out, Outcome::Registered(_)));
    let (m, out) = m.apply(&Operation::Tick { n: 3 }).unwrap();
    assert_eq!((out, m.time), (Outcome::Ticked, 3));
}
