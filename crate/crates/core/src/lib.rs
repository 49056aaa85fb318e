//! Executable semantics for Findel, a DSL for financial derivatives.
//!
//! * [`ast`]: the nine primitives and the `At`/`Before`/`After` sugar.
//! * [`parser`]: concrete syntax and the canonical printer.
//! * [`exec`]: the recursive execution function.
//! * [`marketplace`]: the global state and its transitions.
//! * [`oracle`]: independent consistency checks and random traces.
//! * [`scenario`]: scenario files, as run by the `findel` binary.

pub mod ast;
pub mod exec;
pub mod marketplace;
pub mod oracle;
pub mod parser;
pub mod scenario;

pub use ast::{after, at, before, validate, Address, Currency, Delta, PathStep, Primitive, Timestamp, T_MAX};
pub use exec::{
    exec, BalanceTable, ContractId, DescriptionId, ExecEnv, ExecResult, Failure, FindelContract, Gateway, GatewayValue,
    Parties, TransferRecord,
};
pub use marketplace::{Choice, Description, Event, JoinOutcome, MarketError, Marketplace, Operation, Outcome};
pub use oracle::{check_state, check_trace, random_trace, replay_ledger, Trace, Universe, Violation, ViolationKind};
pub use parser::{parse, pretty_print, ParseError};
pub use scenario::{parse_scenario, run_scenario, ScenarioConfig, TraceReport, Verdict};
