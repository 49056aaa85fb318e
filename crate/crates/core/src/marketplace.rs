//! The marketplace: contracts, descriptions, balances, clock, gateway,
//! fresh id, ledger and events, plus the transitions that evolve them.
//!
//! Every transition borrows the current state and returns a new one, so
//! earlier snapshots stay valid. Rejected transitions return an error and
//! no state at all.

use num_bigint::BigUint;
use num_traits::One;
use thiserror::Error;

use crate::ast::{Address, Primitive, Timestamp, T_MAX};
use crate::exec::{
    exec, BalanceTable, ContractId, DescriptionId, ExecEnv, Failure, FindelContract, Gateway, GatewayValue, Parties,
    TransferRecord, DEFAULT_FRESHNESS_WINDOW,
};

/// A registered contract body with the window in which it may be joined.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Description {
    pub id: DescriptionId,
    pub primitive: Primitive,
    pub valid_from: Timestamp,
    pub valid_until: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Event {
    IssuedFor(Address, ContractId),
    Executed(ContractId),
    Deleted(ContractId),
}

impl Event {
    pub fn contract_id(&self) -> ContractId {
        match self {
            Event::IssuedFor(_, id) | Event::Executed(id) | Event::Deleted(id) => *id,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Choice {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MarketError {
    #[error("unknown contract {0}")]
    UnknownContract(ContractId),
    #[error("unknown description {0}")]
    UnknownDescription(DescriptionId),
    #[error("{caller} is not the proposed owner ({proposed_owner}) of contract {id}")]
    NotProposedOwner { id: ContractId, caller: Address, proposed_owner: Address },
    #[error("contract {0} has an Or root; use join_or")]
    RootIsOr(ContractId),
    #[error("contract {0} does not have an Or root")]
    RootNotOr(ContractId),
    #[error("time {now} is outside the description window [{valid_from}, {valid_until}]")]
    OutsideWindow { now: Timestamp, valid_from: Timestamp, valid_until: Timestamp },
    #[error("invalid window [{valid_from}, {valid_until}]")]
    InvalidWindow { valid_from: Timestamp, valid_until: Timestamp },
}

impl MarketError {
    /// Variant name, as used by scenario `expect` lines.
    pub fn name(&self) -> &'static str {
        match self {
            MarketError::UnknownContract(_) => "UnknownContract",
            MarketError::UnknownDescription(_) => "UnknownDescription",
            MarketError::NotProposedOwner { .. } => "NotProposedOwner",
            MarketError::RootIsOr(_) => "RootIsOr",
            MarketError::RootNotOr(_) => "RootNotOr",
            MarketError::OutsideWindow { .. } => "OutsideWindow",
            MarketError::InvalidWindow { .. } => "InvalidWindow",
        }
    }
}

/// What a successful join did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum JoinOutcome {
    /// Execution succeeded; ids of the postponed contracts in generation order.
    Executed { generated: Vec<ContractId> },
    /// Execution failed and the contract was deleted.
    Deleted(Failure),
}

/// The marketplace state. Fields are public so that checkers and tests can
/// inspect and construct arbitrary states, including inconsistent ones.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Marketplace {
    pub contracts: Vec<FindelContract>,
    pub descriptions: Vec<Description>,
    pub balances: BalanceTable,
    pub time: Timestamp,
    pub gateway: Gateway,
    pub fresh_id: u64,
    pub ledger: Vec<TransferRecord>,
    /// Oldest first; see [`Marketplace::events_newest_first`].
    pub events: Vec<Event>,
}

impl Default for Marketplace {
    fn default() -> Self {
        Marketplace::new(DEFAULT_FRESHNESS_WINDOW)
    }
}

impl Marketplace {
    pub fn new(freshness_window: Timestamp) -> Self {
        Marketplace {
            contracts: Vec::new(),
            descriptions: Vec::new(),
            balances: BalanceTable::new(),
            time: 0,
            gateway: Gateway::new(freshness_window),
            fresh_id: 1,
            ledger: Vec::new(),
            events: Vec::new(),
        }
    }

    pub fn contract(&self, id: ContractId) -> Option<&FindelContract> {
        self.contracts.iter().find(|c| c.id == id)
    }

    pub fn description(&self, id: DescriptionId) -> Option<&Description> {
        self.descriptions.iter().find(|d| d.id == id)
    }

    pub fn is_live(&self, id: ContractId) -> bool {
        self.contract(id).is_some()
    }

    pub fn balance(&self, party: &Address, currency: &crate::ast::Currency) -> num_bigint::BigInt {
        self.balances.get(party, currency)
    }

    pub fn events_newest_first(&self) -> impl Iterator<Item = &Event> {
        self.events.iter().rev()
    }

    pub fn events_chronological(&self) -> impl Iterator<Item = &Event> {
        self.events.iter()
    }

    fn next_description_id(&self) -> DescriptionId {
        DescriptionId(self.descriptions.iter().map(|d| d.id.0).max().unwrap_or(0) + 1)
    }

    /// Adds a description valid during `[valid_from, valid_until]`.
    pub fn register_description(
        &self,
        primitive: Primitive,
        valid_from: Timestamp,
        valid_until: Timestamp,
    ) -> Result<(Marketplace, DescriptionId), MarketError> {
        if valid_from > valid_until {
            return Err(MarketError::InvalidWindow { valid_from, valid_until });
        }
        let id = self.next_description_id();
        let mut next = self.clone();
        next.descriptions.push(Description { id, primitive, valid_from, valid_until });
        Ok((next, id))
    }

    /// Same as [`register_description`](Self::register_description) with the window `[0, T_MAX]`.
    pub fn register(&self, primitive: Primitive) -> (Marketplace, DescriptionId) {
        self.register_description(primitive, 0, T_MAX).expect("unbounded window is well-ordered")
    }

    /// Issues a contract from a description. The issuer starts as owner.
    pub fn issue(
        &self,
        dsc_id: DescriptionId,
        issuer: &Address,
        proposed_owner: &Address,
    ) -> Result<(Marketplace, ContractId), MarketError> {
        let dsc = self.description(dsc_id).ok_or(MarketError::UnknownDescription(dsc_id))?;
        let id = ContractId(self.fresh_id);
        let mut next = self.clone();
        next.contracts.push(FindelContract {
            id,
            dsc_id,
            primitive: dsc.primitive.clone(),
            issuer: issuer.clone(),
            owner: issuer.clone(),
            proposed_owner: proposed_owner.clone(),
            scale: BigUint::one(),
        });
        next.fresh_id += 1;
        next.events.push(Event::IssuedFor(proposed_owner.clone(), id));
        Ok((next, id))
    }

    /// The caller accepts a contract whose root is not `Or`; it runs immediately.
    pub fn join(&self, id: ContractId, caller: &Address) -> Result<(Marketplace, JoinOutcome), MarketError> {
        self.settle(id, caller, None)
    }

    /// The caller accepts an `Or` contract and picks exactly one branch to run.
    pub fn join_or(
        &self,
        id: ContractId,
        caller: &Address,
        choice: Choice,
    ) -> Result<(Marketplace, JoinOutcome), MarketError> {
        self.settle(id, caller, Some(choice))
    }

    fn settle(
        &self,
        id: ContractId,
        caller: &Address,
        choice: Option<Choice>,
    ) -> Result<(Marketplace, JoinOutcome), MarketError> {
        let contract = self.contract(id).ok_or(MarketError::UnknownContract(id))?;
        if *caller != contract.proposed_owner {
            return Err(MarketError::NotProposedOwner {
                id,
                caller: caller.clone(),
                proposed_owner: contract.proposed_owner.clone(),
            });
        }
        let body = match (choice, &contract.primitive) {
            (None, Primitive::Or(..)) => return Err(MarketError::RootIsOr(id)),
            (None, p) => p,
            (Some(Choice::Left), Primitive::Or(l, _)) => &**l,
            (Some(Choice::Right), Primitive::Or(_, r)) => &**r,
            (Some(_), _) => return Err(MarketError::RootNotOr(id)),
        };
        let dsc = self.description(contract.dsc_id).ok_or(MarketError::UnknownDescription(contract.dsc_id))?;
        if !(dsc.valid_from <= self.time && self.time <= dsc.valid_until) {
            return Err(MarketError::OutsideWindow {
                now: self.time,
                valid_from: dsc.valid_from,
                valid_until: dsc.valid_until,
            });
        }

        let env = ExecEnv { contract_id: id, dsc_id: contract.dsc_id, now: self.time, gateway: &self.gateway };
        let parties = Parties::new(contract.issuer.clone(), caller.clone());
        let result = exec(body, &env, &contract.scale, &parties, &self.balances, &self.ledger, self.fresh_id);

        let mut next = self.clone();
        next.contracts.retain(|c| c.id != id);
        let outcome = match result {
            Ok(out) => {
                let generated = out.generated.iter().map(|c| c.id).collect();
                next.contracts.extend(out.generated);
                next.balances = out.balance;
                next.ledger = out.ledger;
                next.fresh_id = out.fresh_id;
                next.events.push(Event::Executed(id));
                JoinOutcome::Executed { generated }
            }
            Err(failure) => {
                next.events.push(Event::Deleted(id));
                JoinOutcome::Deleted(failure)
            }
        };
        Ok((next, outcome))
    }

    pub fn tick(&self, n: Timestamp) -> Marketplace {
        let mut next = self.clone();
        next.time = next.time.saturating_add(n);
        next
    }

    /// Records `value` at `addr`, stamped with the current time.
    pub fn set_gateway(&self, addr: Address, value: GatewayValue) -> Marketplace {
        let mut next = self.clone();
        next.gateway.set(addr, value, self.time);
        next
    }

    pub fn apply(&self, op: &Operation) -> Result<(Marketplace, Outcome), MarketError> {
        Ok(match op {
            Operation::Register { primitive, valid_from, valid_until } => {
                let (m, id) = self.register_description(primitive.clone(), *valid_from, *valid_until)?;
                (m, Outcome::Registered(id))
            }
            Operation::Issue { dsc_id, issuer, proposed_owner } => {
                let (m, id) = self.issue(*dsc_id, issuer, proposed_owner)?;
                (m, Outcome::Issued(id))
            }
            Operation::Join { id, caller } => {
                let (m, out) = self.join(*id, caller)?;
                (m, Outcome::Joined(out))
            }
            Operation::JoinOr { id, caller, choice } => {
                let (m, out) = self.join_or(*id, caller, *choice)?;
                (m, Outcome::Joined(out))
            }
            Operation::Tick { n } => (self.tick(*n), Outcome::Ticked),
            Operation::SetGateway { addr, value } => {
                (self.set_gateway(addr.clone(), value.clone()), Outcome::GatewaySet)
            }
        })
    }
}

/// Every transition the marketplace offers. There is deliberately no way to
/// cancel or withdraw a contract.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Operation {
    Register { primitive: Primitive, valid_from: Timestamp, valid_until: Timestamp },
    Issue { dsc_id: DescriptionId, issuer: Address, proposed_owner: Address },
    Join { id: ContractId, caller: Address },
    JoinOr { id: ContractId, caller: Address, choice: Choice },
    Tick { n: Timestamp },
    SetGateway { addr: Address, value: GatewayValue },
}

impl Operation {
    pub fn is_tick(&self) -> bool {
        matches!(self, Operation::Tick { .. })
    }

    pub fn is_join(&self) -> bool {
        matches!(self, Operation::Join { .. } | Operation::JoinOr { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Registered(DescriptionId),
    Issued(ContractId),
    Joined(JoinOutcome),
    Ticked,
    GatewaySet,
}
