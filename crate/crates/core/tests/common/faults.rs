//! Single-field corruptions of one intermediate state of a known-good trace.

use findel_core::ast::{Currency, Delta};
use findel_core::exec::{ContractId, DescriptionId, GatewayValue};
use findel_core::marketplace::{Event, Marketplace, Operation};
use findel_core::oracle::{check_trace, Trace, ViolationKind};
use findel_core::parse;
use num_bigint::{BigInt, BigUint};

use super::addr;

/// Register FRCE and ZCB, issue and join both, issue one more, publish a rate, tick.
pub fn known_good() -> Trace {
    let frce = parse("And(Give(Scale(11, One(USD))), Scale(10, One(EUR)))", Delta(30)).unwrap();
    let zcb = parse("And(Give(Scale(10, One(USD))), At(365, Scale(11, One(USD))))", Delta(30)).unwrap();
    let mut t = Trace::new(Marketplace::default());
    t.push(Operation::Register { primitive: frce, valid_from: 0, valid_until: u64::MAX });
    t.push(Operation::Register { primitive: zcb, valid_from: 0, valid_until: u64::MAX });
    t.push(Operation::Issue { dsc_id: DescriptionId(1), issuer: addr("alice"), proposed_owner: addr("bob") });
    t.push(Operation::Issue { dsc_id: DescriptionId(2), issuer: addr("alice"), proposed_owner: addr("bob") });
    t.push(Operation::Join { id: ContractId(1), caller: addr("bob") });
    t.push(Operation::Join { id: ContractId(2), caller: addr("bob") });
    t.push(Operation::Issue { dsc_id: DescriptionId(1), issuer: addr("carol"), proposed_owner: addr("alice") });
    t.push(Operation::SetGateway { addr: addr("rate"), value: GatewayValue::Number(BigUint::from(4u32)) });
    t.push(Operation::Tick { n: 5 });
    t.push(Operation::Issue { dsc_id: DescriptionId(2), issuer: addr("bob"), proposed_owner: addr("carol") });
    t
}

/// The corrupted step is the gateway update, when contracts 3 and 4 are
/// live and the ledger holds three transfers.
pub const TARGET: usize = 7;

pub struct Fault {
    pub name: &'static str,
    pub expected: ViolationKind,
    pub apply: fn(&mut Marketplace),
}

pub fn catalog() -> Vec<Fault> {
    vec![
        Fault {
            name: "duplicate contract id",
            expected: ViolationKind::DuplicateId,
            apply: |s| s.contracts[1].id = s.contracts[0].id,
        },
        Fault { name: "lowered fresh id", expected: ViolationKind::StaleFreshId, apply: |s| s.fresh_id = 4 },
        Fault {
            name: "dangling description",
            expected: ViolationKind::DanglingDescription,
            apply: |s| s.contracts[0].dsc_id = DescriptionId(42),
        },
        Fault {
            name: "tampered balance",
            expected: ViolationKind::LedgerMismatch,
            apply: |s| s.balances.adjust(&addr("alice"), &Currency::new("USD").unwrap(), &BigInt::from(1)),
        },
        Fault {
            name: "tampered ledger amount",
            expected: ViolationKind::LedgerMismatch,
            apply: |s| s.ledger[0].amount += 1u32,
        },
        Fault {
            name: "dropped ledger entry",
            expected: ViolationKind::LedgerMismatch,
            apply: |s| {
                s.ledger.pop();
            },
        },
        Fault {
            name: "event for unallocated contract",
            expected: ViolationKind::EventDangling,
            apply: |s| s.events[0] = Event::IssuedFor(addr("bob"), ContractId(77)),
        },
        Fault { name: "rewritten event log", expected: ViolationKind::EventDangling, apply: |s| s.events.swap(0, 1) },
        Fault { name: "clock moved by non-tick step", expected: ViolationKind::TimeRegression, apply: |s| s.time += 3 },
        Fault {
            name: "gateway stamped in the future",
            expected: ViolationKind::TimeRegression,
            apply: |s| s.gateway.entries.get_mut(&addr("rate")).unwrap().recorded_at = 1_000,
        },
        Fault {
            name: "contract vanished without join",
            expected: ViolationKind::ContractWithdrawn,
            apply: |s| {
                s.contracts.remove(0);
            },
        },
    ]
}

/// Applies `fault` and returns an error unless the expected kind is reported
/// at the corrupted state or the step right after it.
pub fn detect(fault: &Fault) -> Result<usize, String> {
    let mut t = known_good();
    (fault.apply)(&mut t.steps[TARGET].state);
    let found = check_trace(&t);
    if found.iter().any(|v| v.kind == fault.expected && (v.at_step == TARGET + 1 || v.at_step == TARGET + 2)) {
        Ok(found.len())
    } else {
        Err(format!("{}: expected {:?}, got {found:?}", fault.name, fault.expected))
    }
}
