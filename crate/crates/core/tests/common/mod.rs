#![allow(dead_code)]

pub mod faults;

use findel_core::ast::{Address, Currency, Primitive, Timestamp};
use findel_core::exec::{ContractId, DescriptionId, ExecEnv, Gateway, GatewayValue, Parties};
use num_bigint::BigUint;
use proptest::prelude::*;

pub const NOW: Timestamp = 50;

pub fn addr(s: &str) -> Address {
    Address::new(s).unwrap()
}

pub fn cur(s: &str) -> Currency {
    Currency::new(s).unwrap()
}

pub fn alice_bob() -> Parties {
    Parties::new(addr("alice"), addr("bob"))
}

/// Gateway at [`NOW`] with a fresh number at `rate`, a fresh boolean at
/// `flag`, a stale number at `stale`, and nothing at `unset`.
pub fn gateway(rate: u32, flag: bool) -> Gateway {
    let mut g = Gateway::new(10);
    g.set(addr("rate"), GatewayValue::Number(BigUint::from(rate)), NOW - 3);
    g.set(addr("flag"), GatewayValue::Bool(flag), NOW);
    g.set(addr("stale"), GatewayValue::Number(BigUint::from(2u32)), NOW - 11);
    g
}

pub fn env(gateway: &Gateway) -> ExecEnv<'_> {
    ExecEnv { contract_id: ContractId(1), dsc_id: DescriptionId(1), now: NOW, gateway }
}

pub fn arb_currency() -> impl Strategy<Value = Currency> {
    prop::sample::select(vec!["USD", "EUR", "GBP"]).prop_map(cur)
}

pub fn arb_source() -> impl Strategy<Value = Address> {
    prop::sample::select(vec!["rate", "flag", "stale", "unset"]).prop_map(addr)
}

fn arb_window() -> impl Strategy<Value = (Timestamp, Timestamp)> {
    (0..100u64, 0..60u64).prop_map(|(t0, len)| (t0, t0 + len))
}

/// Trees of depth at most 8 over a small alphabet, with timestamps around
/// [`NOW`] so that every `Timebound` outcome (run, postpone, expire) occurs.
pub fn arb_primitive() -> impl Strategy<Value = Primitive> {
    let leaf = prop_oneof![1 => Just(Primitive::Zero), 4 => arb_currency().prop_map(Primitive::One)];
    leaf.prop_recursive(7, 64, 2, |inner| {
        prop_oneof![
            1 => (0u32..6, inner.clone()).prop_map(|(k, p)| Primitive::scale(k, p)),
            1 => (arb_source(), inner.clone()).prop_map(|(a, p)| Primitive::scale_obs(a, p)),
            1 => inner.clone().prop_map(Primitive::give),
            2 => (inner.clone(), inner.clone()).prop_map(|(l, r)| Primitive::and(l, r)),
            1 => (inner.clone(), inner.clone()).prop_map(|(l, r)| Primitive::or(l, r)),
            1 => (arb_source(), inner.clone(), inner.clone()).prop_map(|(a, t, e)| Primitive::if_(a, t, e)),
            1 => (arb_window(), inner).prop_map(|((t0, t1), p)| Primitive::timebound(t0, t1, p)),
        ]
    })
}

/// Trees with no postponement and no gateway access: only `Zero`, `One`,
/// `Scale`, `Give` and `And`.
pub fn arb_static_primitive() -> impl Strategy<Value = Primitive> {
    let leaf = prop_oneof![1 => Just(Primitive::Zero), 4 => arb_currency().prop_map(Primitive::One)];
    leaf.prop_recursive(7, 64, 2, |inner| {
        prop_oneof![
            1 => (0u32..6, inner.clone()).prop_map(|(k, p)| Primitive::scale(k, p)),
            1 => inner.clone().prop_map(Primitive::give),
            2 => (inner.clone(), inner).prop_map(|(l, r)| Primitive::and(l, r)),
        ]
    })
}

/// Trees over the full token space, for syntax properties.
pub fn arb_syntax_tree() -> impl Strategy<Value = Primitive> {
    let currency = "[A-Z]{1,8}".prop_map(|s: String| cur(&s));
    let address = "[A-Za-z0-9_.-]{1,12}".prop_map(|s: String| addr(&s));
    let factor = prop_oneof![0u64..100, any::<u64>()].prop_map(BigUint::from);
    let big = any::<u128>().prop_map(BigUint::from);
    let leaf = prop_oneof![Just(Primitive::Zero), currency.prop_map(Primitive::One)];
    leaf.prop_recursive(7, 64, 2, move |inner| {
        prop_oneof![
            (prop_oneof![factor.clone(), big.clone()], inner.clone())
                .prop_map(|(k, p)| Primitive::Scale(k, Box::new(p))),
            (address.clone(), inner.clone()).prop_map(|(a, p)| Primitive::scale_obs(a, p)),
            inner.clone().prop_map(Primitive::give),
            (inner.clone(), inner.clone()).prop_map(|(l, r)| Primitive::and(l, r)),
            (inner.clone(), inner.clone()).prop_map(|(l, r)| Primitive::or(l, r)),
            (address.clone(), inner.clone(), inner.clone()).prop_map(|(a, t, e)| Primitive::if_(a, t, e)),
            (any::<u64>(), any::<u64>(), inner).prop_map(|(t0, t1, p)| Primitive::timebound(t0, t1, p)),
        ]
    })
}
