//! The recursive `exec` function over a primitive tree.
//!
//! `exec` is all-or-nothing: it works on a private copy of the balance
//! table and ledger and hands them back only when the whole tree ran.
//! A [`Failure`] carries no partial state.

use std::collections::BTreeMap;

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Zero};
use thiserror::Error;

use crate::ast::{Address, Currency, Primitive, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ContractId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DescriptionId(pub u64);

impl std::fmt::Display for ContractId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "#{}", self.0)
    }
}

impl std::fmt::Display for DescriptionId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "d{}", self.0)
    }
}

/// Signed holdings per (party, currency). Missing entries read as zero and
/// zero entries are never stored, so structural equality is value equality.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BalanceTable {
    entries: BTreeMap<(Address, Currency), BigInt>,
}

impl BalanceTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, party: &Address, currency: &Currency) -> BigInt {
        self.entries.get(&(party.clone(), currency.clone())).cloned().unwrap_or_default()
    }

    /// Adds `amount` (which may be negative) to one entry.
    pub fn adjust(&mut self, party: &Address, currency: &Currency, amount: &BigInt) {
        let key = (party.clone(), currency.clone());
        let next = self.entries.get(&key).cloned().unwrap_or_default() + amount;
        if next.is_zero() {
            self.entries.remove(&key);
        } else {
            self.entries.insert(key, next);
        }
    }

    /// Non-zero entries in key order.
    pub fn iter(&self) -> impl Iterator<Item = (&Address, &Currency, &BigInt)> {
        self.entries.iter().map(|((a, c), v)| (a, c, v))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl FromIterator<((Address, Currency), BigInt)> for BalanceTable {
    /// Later duplicates overwrite earlier ones; zero values are dropped.
    fn from_iter<I: IntoIterator<Item = ((Address, Currency), BigInt)>>(iter: I) -> Self {
        let entries = iter.into_iter().filter(|(_, v)| !v.is_zero()).collect();
        BalanceTable { entries }
    }
}

/// One performed transfer. `amount` is always at least 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TransferRecord {
    pub contract_id: ContractId,
    pub payer: Address,
    pub payee: Address,
    pub amount: BigUint,
    pub currency: Currency,
    pub timestamp: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum GatewayValue {
    Number(BigUint),
    Bool(bool),
}

impl std::fmt::Display for GatewayValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GatewayValue::Number(n) => write!(f, "{n}"),
            GatewayValue::Bool(b) => write!(f, "{b}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GatewayEntry {
    pub value: GatewayValue,
    pub recorded_at: Timestamp,
}

pub const DEFAULT_FRESHNESS_WINDOW: Timestamp = 10;

/// External data feed. An entry is fresh at `now` iff
/// `now - recorded_at <= freshness_window`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gateway {
    pub entries: BTreeMap<Address, GatewayEntry>,
    pub freshness_window: Timestamp,
}

impl Default for Gateway {
    fn default() -> Self {
        Gateway::new(DEFAULT_FRESHNESS_WINDOW)
    }
}

impl Gateway {
    pub fn new(freshness_window: Timestamp) -> Self {
        Gateway { entries: BTreeMap::new(), freshness_window }
    }

    pub fn set(&mut self, addr: Address, value: GatewayValue, now: Timestamp) {
        self.entries.insert(addr, GatewayEntry { value, recorded_at: now });
    }

    fn fresh_entry(&self, addr: &Address, now: Timestamp) -> Result<&GatewayValue, Failure> {
        let entry = self.entries.get(addr).ok_or(Failure::GatewayMissing)?;
        if now.saturating_sub(entry.recorded_at) > self.freshness_window {
            return Err(Failure::GatewayStale);
        }
        Ok(&entry.value)
    }

    pub fn number(&self, addr: &Address, now: Timestamp) -> Result<&BigUint, Failure> {
        match self.fresh_entry(addr, now)? {
            GatewayValue::Number(n) => Ok(n),
            GatewayValue::Bool(_) => Err(Failure::GatewayTypeMismatch),
        }
    }

    pub fn boolean(&self, addr: &Address, now: Timestamp) -> Result<bool, Failure> {
        match self.fresh_entry(addr, now)? {
            GatewayValue::Bool(b) => Ok(*b),
            GatewayValue::Number(_) => Err(Failure::GatewayTypeMismatch),
        }
    }
}

/// A live contract `[id, dsc_id, primitive, issuer, owner, proposed_owner, scale]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FindelContract {
    pub id: ContractId,
    pub dsc_id: DescriptionId,
    pub primitive: Primitive,
    pub issuer: Address,
    pub owner: Address,
    pub proposed_owner: Address,
    pub scale: BigUint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Error)]
pub enum Failure {
    #[error("expired")]
    Expired,
    #[error("gateway has no entry")]
    GatewayMissing,
    #[error("gateway entry is stale")]
    GatewayStale,
    #[error("gateway entry has the wrong type")]
    GatewayTypeMismatch,
}

/// Read-only context for one `exec` call.
#[derive(Debug, Clone, Copy)]
pub struct ExecEnv<'a> {
    pub contract_id: ContractId,
    pub dsc_id: DescriptionId,
    pub now: Timestamp,
    pub gateway: &'a Gateway,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Parties {
    pub issuer: Address,
    pub owner: Address,
}

impl Parties {
    pub fn new(issuer: Address, owner: Address) -> Self {
        Parties { issuer, owner }
    }

    fn swapped(&self) -> Self {
        Parties { issuer: self.owner.clone(), owner: self.issuer.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecResult {
    pub balance: BalanceTable,
    pub generated: Vec<FindelContract>,
    pub fresh_id: u64,
    pub ledger: Vec<TransferRecord>,
}

/// Runs `p` with accumulated `scale` between `parties`.
///
/// Balance, ledger and fresh id are threaded left-to-right through `And`.
/// `Or` nodes and `Timebound` nodes whose window has not opened yet are
/// not run; each becomes a new contract owned by the current owner.
pub fn exec(
    p: &Primitive,
    env: &ExecEnv<'_>,
    scale: &BigUint,
    parties: &Parties,
    balance: &BalanceTable,
    ledger: &[TransferRecord],
    fresh_id: u64,
) -> Result<ExecResult, Failure> {
    let mut acc = ExecResult { balance: balance.clone(), generated: Vec::new(), fresh_id, ledger: ledger.to_vec() };
    run(p, env, scale, parties, &mut acc)?;
    Ok(acc)
}

/// [`exec`] with scale 1, an empty balance table, an empty ledger and fresh id 0.
pub fn exec_standalone(p: &Primitive, env: &ExecEnv<'_>, parties: &Parties) -> Result<ExecResult, Failure> {
    exec(p, env, &BigUint::one(), parties, &BalanceTable::new(), &[], 0)
}

fn run(
    p: &Primitive,
    env: &ExecEnv<'_>,
    scale: &BigUint,
    parties: &Parties,
    acc: &mut ExecResult,
) -> Result<(), Failure> {
    match p {
        Primitive::Zero => Ok(()),
        Primitive::One(currency) => {
            // zero-amount transfers are not recorded
            if scale.is_zero() {
                return Ok(());
            }
            let amount = BigInt::from(scale.clone());
            acc.balance.adjust(&parties.issuer, currency, &-amount.clone());
            acc.balance.adjust(&parties.owner, currency, &amount);
            acc.ledger.push(TransferRecord {
                contract_id: env.contract_id,
                payer: parties.issuer.clone(),
                payee: parties.owner.clone(),
                amount: scale.clone(),
                currency: currency.clone(),
                timestamp: env.now,
            });
            Ok(())
        }
        Primitive::Scale(k, sub) => run(sub, env, &(scale * k), parties, acc),
        Primitive::ScaleObs(addr, sub) => {
            let factor = env.gateway.number(addr, env.now)?;
            run(sub, env, &(scale * factor), parties, acc)
        }
        Primitive::Give(sub) => run(sub, env, scale, &parties.swapped(), acc),
        Primitive::And(left, right) => {
            run(left, env, scale, parties, acc)?;
            run(right, env, scale, parties, acc)
        }
        Primitive::Or(..) => {
            postpone(p, env, scale, parties, acc);
            Ok(())
        }
        Primitive::If(addr, then, otherwise) => {
            let branch = if env.gateway.boolean(addr, env.now)? { then } else { otherwise };
            run(branch, env, scale, parties, acc)
        }
        Primitive::Timebound(t0, t1, sub) => {
            if env.now > *t1 {
                Err(Failure::Expired)
            } else if *t0 > env.now {
                postpone(p, env, scale, parties, acc);
                Ok(())
            } else {
                run(sub, env, scale, parties, acc)
            }
        }
    }
}

fn postpone(p: &Primitive, env: &ExecEnv<'_>, scale: &BigUint, parties: &Parties, acc: &mut ExecResult) {
    acc.generated.push(FindelContract {
        id: ContractId(acc.fresh_id),
        dsc_id: env.dsc_id,
        primitive: p.clone(),
        issuer: parties.issuer.clone(),
        owner: parties.owner.clone(),
        proposed_owner: parties.owner.clone(),
        scale: scale.clone(),
    });
    acc.fresh_id += 1;
}
