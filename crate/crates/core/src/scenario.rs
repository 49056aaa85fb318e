//! Line-oriented scenario files that drive a marketplace end to end.
//!
//! ```text
//! # comment
//! desc <label> = <findel-expr> [window <t0> <t1>]
//! issue <issuer> for <owner> <label> as <clabel>
//! join <party> @<clabel>
//! joinor <party> @<clabel> <left|right>
//! tick <n|Nyr>
//! gateway <addr> = <number|true|false>
//! assert balance <party> <CUR> <signed-int>
//! assert event <issuedfor|executed|deleted> @<clabel>
//! assert <live|gone> @<clabel>
//! expect <error-name>: <command>
//! ```
//!
//! `@clabel.gen0`, `@clabel.gen1`, ... name the contracts generated when
//! `@clabel` was executed, in generation order; suffixes chain.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use num_bigint::{BigInt, BigUint};
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ast::{Address, Currency, Delta, Timestamp, T_MAX};
use crate::exec::{ContractId, DescriptionId, GatewayValue, DEFAULT_FRESHNESS_WINDOW};
use crate::marketplace::{Choice, Event, JoinOutcome, MarketError, Marketplace};
use crate::oracle::check_state;
use crate::parser::parse;

const ERROR_NAMES: &[&str] = &[
    "UnknownContract",
    "UnknownDescription",
    "NotProposedOwner",
    "RootIsOr",
    "RootNotOr",
    "OutsideWindow",
    "InvalidWindow",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScenarioConfig {
    pub delta: Delta,
    pub freshness_window: Timestamp,
    pub year_length: Timestamp,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig { delta: Delta(30), freshness_window: DEFAULT_FRESHNESS_WINDOW, year_length: 365 }
    }
}

/// `@label` optionally followed by `.genN` selectors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContractRef {
    pub label: String,
    pub generations: Vec<usize>,
}

impl fmt::Display for ContractRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "@{}", self.label)?;
        for g in &self.generations {
            write!(f, ".gen{g}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TickAmount {
    Units(Timestamp),
    Years(Timestamp),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    IssuedFor,
    Executed,
    Deleted,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScenarioCommand {
    Desc { label: String, primitive_text: String, window: Option<(Timestamp, Timestamp)> },
    Issue { issuer: Address, proposed_owner: Address, dsc_label: String, contract_label: String },
    Join { caller: Address, contract: ContractRef },
    JoinOr { caller: Address, contract: ContractRef, choice: Choice },
    Tick(TickAmount),
    Gateway { addr: Address, value: GatewayValue },
    AssertBalance { party: Address, currency: Currency, expected: BigInt },
    AssertEvent { kind: EventKind, contract: ContractRef },
    AssertLive { contract: ContractRef, live: bool },
    ExpectError { error: String, command: Box<ScenarioCommand> },
}

/// A command with the source line it came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioLine {
    pub line: usize,
    pub source: String,
    pub command: ScenarioCommand,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}, column {column}: {message}")]
pub struct ScenarioParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

/// Whitespace-separated words with their 1-based starting columns.
fn words(text: &str, base_column: usize) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                out.push((s, &text[s..i]));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, &text[s..]));
    }
    out.into_iter().map(|(byte, w)| (base_column + text[..byte].chars().count(), w)).collect()
}

struct LineParser<'a> {
    line: usize,
    text: &'a str,
    base_column: usize,
    desc_labels: &'a HashSet<String>,
    contract_labels: &'a HashSet<String>,
}

impl LineParser<'_> {
    fn err(&self, column: usize, message: impl Into<String>) -> ScenarioParseError {
        ScenarioParseError { line: self.line, column, message: message.into() }
    }

    fn end_column(&self) -> usize {
        self.base_column + self.text.chars().count()
    }

    fn command(&self) -> Result<ScenarioCommand, ScenarioParseError> {
        let ws = words(self.text, self.base_column);
        let Some(&(col, head)) = ws.first() else {
            return Err(self.err(self.base_column, "expected a command"));
        };
        match head {
            "desc" => self.desc(&ws),
            "issue" => {
                self.arity(&ws, 7, "issue <issuer> for <owner> <label> as <clabel>")?;
                self.keyword(ws[2], "for")?;
                self.keyword(ws[5], "as")?;
                let dsc_label = ws[4].1.to_string();
                if !self.desc_labels.contains(&dsc_label) {
                    return Err(self.err(ws[4].0, format!("unbound description label '{dsc_label}'")));
                }
                Ok(ScenarioCommand::Issue {
                    issuer: self.address(ws[1])?,
                    proposed_owner: self.address(ws[3])?,
                    dsc_label,
                    contract_label: self.label(ws[6])?,
                })
            }
            "join" => {
                self.arity(&ws, 3, "join <party> @<clabel>")?;
                Ok(ScenarioCommand::Join { caller: self.address(ws[1])?, contract: self.contract_ref(ws[2])? })
            }
            "joinor" => {
                self.arity(&ws, 4, "joinor <party> @<clabel> <left|right>")?;
                let choice = match ws[3].1 {
                    "left" => Choice::Left,
                    "right" => Choice::Right,
                    _ => return Err(self.err(ws[3].0, "expected 'left' or 'right'")),
                };
                Ok(ScenarioCommand::JoinOr {
                    caller: self.address(ws[1])?,
                    contract: self.contract_ref(ws[2])?,
                    choice,
                })
            }
            "tick" => {
                self.arity(&ws, 2, "tick <n|Nyr>")?;
                let (c, w) = ws[1];
                let amount = match w.strip_suffix("yr") {
                    Some(years) => TickAmount::Years(self.number(c, years)?),
                    None => TickAmount::Units(self.number(c, w)?),
                };
                Ok(ScenarioCommand::Tick(amount))
            }
            "gateway" => {
                self.arity(&ws, 4, "gateway <addr> = <number|true|false>")?;
                self.keyword(ws[2], "=")?;
                let (c, w) = ws[3];
                let value = match w {
                    "true" => GatewayValue::Bool(true),
                    "false" => GatewayValue::Bool(false),
                    _ => GatewayValue::Number(
                        BigUint::from_str(w)
                            .ok()
                            .filter(|_| w.bytes().all(|b| b.is_ascii_digit()))
                            .ok_or_else(|| self.err(c, "expected a natural number, 'true' or 'false'"))?,
                    ),
                };
                Ok(ScenarioCommand::Gateway { addr: self.address(ws[1])?, value })
            }
            "assert" => self.assertion(&ws),
            "expect" => self.expect(),
            other => Err(self.err(col, format!("unknown command '{other}'"))),
        }
    }

    fn desc(&self, ws: &[(usize, &str)]) -> Result<ScenarioCommand, ScenarioParseError> {
        if ws.len() < 4 {
            return Err(self.err(self.end_column(), "usage: desc <label> = <findel-expr> [window <t0> <t1>]"));
        }
        let label = self.label(ws[1])?;
        self.keyword(ws[2], "=")?;
        let mut end = ws.len();
        let mut window = None;
        if end >= 6 && ws[end - 3].1 == "window" {
            let t0 = self.number(ws[end - 2].0, ws[end - 2].1)?;
            let t1 = self.number(ws[end - 1].0, ws[end - 1].1)?;
            window = Some((t0, t1));
            end -= 3;
        }
        let expr_col = ws[3].0;
        let expr_end = if end == ws.len() { self.end_column() } else { ws[end].0 };
        let primitive_text: String = self
            .text
            .chars()
            .skip(expr_col - self.base_column)
            .take(expr_end - expr_col)
            .collect::<String>()
            .trim_end()
            .to_string();
        parse(&primitive_text, Delta(0)).map_err(|e| {
            let column = if e.line == 1 { expr_col + e.column - 1 } else { expr_col };
            self.err(column, format!("expected {}, found {}", e.expected.join(" or "), e.found))
        })?;
        Ok(ScenarioCommand::Desc { label, primitive_text, window })
    }

    fn assertion(&self, ws: &[(usize, &str)]) -> Result<ScenarioCommand, ScenarioParseError> {
        match ws.get(1).map(|w| w.1) {
            Some("balance") => {
                self.arity(ws, 5, "assert balance <party> <CUR> <signed-int>")?;
                let (c, w) = ws[3];
                let currency = Currency::new(w).map_err(|e| self.err(c, e.to_string()))?;
                let (c, w) = ws[4];
                let digits = w.strip_prefix(['+', '-']).unwrap_or(w);
                if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
                    return Err(self.err(c, "expected a signed integer"));
                }
                let expected =
                    BigInt::from_str(w.strip_prefix('+').unwrap_or(w)).map_err(|e| self.err(c, e.to_string()))?;
                Ok(ScenarioCommand::AssertBalance { party: self.address(ws[2])?, currency, expected })
            }
            Some("event") => {
                self.arity(ws, 4, "assert event <issuedfor|executed|deleted> @<clabel>")?;
                let kind = match ws[2].1 {
                    "issuedfor" => EventKind::IssuedFor,
                    "executed" => EventKind::Executed,
                    "deleted" => EventKind::Deleted,
                    _ => return Err(self.err(ws[2].0, "expected 'issuedfor', 'executed' or 'deleted'")),
                };
                Ok(ScenarioCommand::AssertEvent { kind, contract: self.contract_ref(ws[3])? })
            }
            Some(state @ ("live" | "gone")) => {
                self.arity(ws, 3, "assert <live|gone> @<clabel>")?;
                Ok(ScenarioCommand::AssertLive { contract: self.contract_ref(ws[2])?, live: state == "live" })
            }
            _ => {
                let col = ws.get(1).map_or(self.end_column(), |w| w.0);
                Err(self.err(col, "expected 'balance', 'event', 'live' or 'gone'"))
            }
        }
    }

    fn expect(&self) -> Result<ScenarioCommand, ScenarioParseError> {
        let after_kw = &self.text["expect".len()..];
        let Some(colon) = after_kw.find(':') else {
            return Err(self.err(self.end_column(), "usage: expect <error-name>: <command>"));
        };
        let name_col =
            self.base_column + "expect".len() + after_kw[..colon].len() - after_kw[..colon].trim_start().len();
        let error = after_kw[..colon].trim().to_string();
        if !ERROR_NAMES.contains(&error.as_str()) {
            return Err(
                self.err(name_col, format!("unknown error name '{error}'; expected one of {}", ERROR_NAMES.join(", ")))
            );
        }
        let rest = &after_kw[colon + 1..];
        let inner_col = self.base_column + "expect".len() + colon + 1 + (rest.len() - rest.trim_start().len());
        let inner = LineParser { text: rest.trim(), base_column: inner_col, ..*self };
        let command = inner.command()?;
        if matches!(
            command,
            ScenarioCommand::AssertBalance { .. }
                | ScenarioCommand::AssertEvent { .. }
                | ScenarioCommand::AssertLive { .. }
                | ScenarioCommand::ExpectError { .. }
        ) {
            return Err(self.err(inner_col, "expect wraps a marketplace command, not an assertion"));
        }
        Ok(ScenarioCommand::ExpectError { error, command: Box::new(command) })
    }

    fn arity(&self, ws: &[(usize, &str)], n: usize, usage: &str) -> Result<(), ScenarioParseError> {
        if ws.len() == n {
            Ok(())
        } else {
            let col = ws.get(n).map_or(self.end_column(), |w| w.0);
            Err(self.err(col, format!("usage: {usage}")))
        }
    }

    fn keyword(&self, (col, w): (usize, &str), kw: &str) -> Result<(), ScenarioParseError> {
        if w == kw {
            Ok(())
        } else {
            Err(self.err(col, format!("expected '{kw}', found '{w}'")))
        }
    }

    fn number(&self, col: usize, w: &str) -> Result<Timestamp, ScenarioParseError> {
        if !w.is_empty() && w.bytes().all(|b| b.is_ascii_digit()) {
            w.parse().map_err(|_| self.err(col, "number out of range"))
        } else {
            Err(self.err(col, format!("expected a natural number, found '{w}'")))
        }
    }

    fn address(&self, (col, w): (usize, &str)) -> Result<Address, ScenarioParseError> {
        Address::new(w).map_err(|e| self.err(col, e.to_string()))
    }

    fn label(&self, (col, w): (usize, &str)) -> Result<String, ScenarioParseError> {
        if !w.is_empty() && w.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            Ok(w.to_string())
        } else {
            Err(self.err(col, format!("invalid label '{w}'")))
        }
    }

    fn contract_ref(&self, (col, w): (usize, &str)) -> Result<ContractRef, ScenarioParseError> {
        let Some(body) = w.strip_prefix('@') else {
            return Err(self.err(col, format!("expected @<clabel>, found '{w}'")));
        };
        let mut parts = body.split('.');
        let label = self.label((col + 1, parts.next().unwrap_or_default()))?;
        let generations = parts
            .map(|g| {
                g.strip_prefix("gen")
                    .filter(|n| !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()))
                    .and_then(|n| n.parse().ok())
                    .ok_or_else(|| self.err(col, format!("expected '.genN' selector, found '.{g}'")))
            })
            .collect::<Result<_, _>>()?;
        if !self.contract_labels.contains(&label) {
            return Err(self.err(col, format!("unbound contract label '@{label}'")));
        }
        Ok(ContractRef { label, generations })
    }
}

/// Parses a scenario file; labels must be bound before they are used.
pub fn parse_scenario(text: &str) -> Result<Vec<ScenarioLine>, ScenarioParseError> {
    let mut desc_labels = HashSet::new();
    let mut contract_labels = HashSet::new();
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let content = raw.split('#').next().unwrap_or_default();
        let trimmed = content.trim();
        if trimmed.is_empty() {
            continue;
        }
        let base_column = 1 + content.chars().count() - content.trim_start().chars().count();
        let command = LineParser {
            line: i + 1,
            text: trimmed,
            base_column,
            desc_labels: &desc_labels,
            contract_labels: &contract_labels,
        }
        .command()?;
        match &command {
            ScenarioCommand::Desc { label, .. } => {
                desc_labels.insert(label.clone());
            }
            ScenarioCommand::Issue { contract_label, .. } => {
                contract_labels.insert(contract_label.clone());
            }
            _ => {}
        }
        out.push(ScenarioLine { line: i + 1, source: trimmed.to_string(), command });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReportStep {
    pub line: usize,
    pub command: String,
    pub outcome: String,
    pub state_digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceReport {
    pub steps: Vec<ReportStep>,
    pub verdict: Verdict,
    pub failures: Vec<String>,
}

impl TraceReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let width = self.steps.iter().map(|s| s.command.len()).max().unwrap_or(0);
        let mut out = String::new();
        for s in &self.steps {
            out.push_str(&format!("{:>4}  {:<width$}  {}  {}\n", s.line, s.command, s.state_digest, s.outcome));
        }
        for f in &self.failures {
            out.push_str(&format!("FAIL  {f}\n"));
        }
        out.push_str(match self.verdict {
            Verdict::Pass => "verdict: pass\n",
            Verdict::Fail => "verdict: fail\n",
        });
        out
    }
}

/// Short hex digest of the complete marketplace state.
pub fn state_digest(state: &Marketplace) -> String {
    let hash = Sha256::digest(format!("{state:?}").as_bytes());
    hex::encode(&hash[..8])
}

enum StepError {
    Market(MarketError),
    Failed(String),
}

impl From<MarketError> for StepError {
    fn from(e: MarketError) -> Self {
        StepError::Market(e)
    }
}

struct Runner {
    state: Marketplace,
    config: ScenarioConfig,
    descriptions: HashMap<String, DescriptionId>,
    contracts: HashMap<String, ContractId>,
    generated: HashMap<ContractId, Vec<ContractId>>,
}

impl Runner {
    fn resolve(&self, r: &ContractRef) -> Result<ContractId, StepError> {
        let mut id = *self
            .contracts
            .get(&r.label)
            .ok_or_else(|| StepError::Failed(format!("label @{} is not bound", r.label)))?;
        for &g in &r.generations {
            id = *self
                .generated
                .get(&id)
                .and_then(|gens| gens.get(g))
                .ok_or_else(|| StepError::Failed(format!("{r}: contract {id} has no generated contract #{g}")))?;
        }
        Ok(id)
    }

    fn record_join(&mut self, id: ContractId, next: Marketplace, outcome: JoinOutcome) -> String {
        self.state = next;
        match outcome {
            JoinOutcome::Executed { generated } => {
                let text = if generated.is_empty() {
                    format!("executed {id}")
                } else {
                    let ids: Vec<_> = generated.iter().map(ToString::to_string).collect();
                    format!("executed {id}, generated {}", ids.join(" "))
                };
                self.generated.insert(id, generated);
                text
            }
            JoinOutcome::Deleted(failure) => format!("deleted {id} ({failure})"),
        }
    }

    fn step(&mut self, cmd: &ScenarioCommand) -> Result<String, StepError> {
        match cmd {
            ScenarioCommand::Desc { label, primitive_text, window } => {
                let primitive = parse(primitive_text, self.config.delta)
                    .map_err(|e| StepError::Failed(format!("description does not parse: {e}")))?;
                let (from, until) = window.unwrap_or((0, T_MAX));
                let (next, id) = self.state.register_description(primitive, from, until)?;
                self.state = next;
                self.descriptions.insert(label.clone(), id);
                Ok(format!("registered {id}"))
            }
            ScenarioCommand::Issue { issuer, proposed_owner, dsc_label, contract_label } => {
                let dsc = self.descriptions[dsc_label];
                let (next, id) = self.state.issue(dsc, issuer, proposed_owner)?;
                self.state = next;
                self.contracts.insert(contract_label.clone(), id);
                Ok(format!("issued {id}"))
            }
            ScenarioCommand::Join { caller, contract } => {
                let id = self.resolve(contract)?;
                let (next, outcome) = self.state.join(id, caller)?;
                Ok(self.record_join(id, next, outcome))
            }
            ScenarioCommand::JoinOr { caller, contract, choice } => {
                let id = self.resolve(contract)?;
                let (next, outcome) = self.state.join_or(id, caller, *choice)?;
                Ok(self.record_join(id, next, outcome))
            }
            ScenarioCommand::Tick(amount) => {
                let n = match amount {
                    TickAmount::Units(n) => *n,
                    TickAmount::Years(y) => y.saturating_mul(self.config.year_length),
                };
                self.state = self.state.tick(n);
                Ok(format!("time {}", self.state.time))
            }
            ScenarioCommand::Gateway { addr, value } => {
                self.state = self.state.set_gateway(addr.clone(), value.clone());
                Ok(format!("gateway {addr} = {value} at {}", self.state.time))
            }
            ScenarioCommand::AssertBalance { party, currency, expected } => {
                let actual = self.state.balance(party, currency);
                if actual == *expected {
                    Ok("ok".into())
                } else {
                    Err(StepError::Failed(format!("balance {party} {currency}: expected {expected}, actual {actual}")))
                }
            }
            ScenarioCommand::AssertEvent { kind, contract } => {
                let id = self.resolve(contract)?;
                let found = self.state.events.iter().any(|e| match (kind, e) {
                    (EventKind::IssuedFor, Event::IssuedFor(_, x))
                    | (EventKind::Executed, Event::Executed(x))
                    | (EventKind::Deleted, Event::Deleted(x)) => *x == id,
                    _ => false,
                });
                if found {
                    Ok("ok".into())
                } else {
                    Err(StepError::Failed(format!("no {kind:?} event for {contract} ({id})")))
                }
            }
            ScenarioCommand::AssertLive { contract, live } => {
                let id = self.resolve(contract)?;
                let actual = self.state.is_live(id);
                if actual == *live {
                    Ok("ok".into())
                } else {
                    let word = |b: bool| if b { "live" } else { "gone" };
                    Err(StepError::Failed(format!(
                        "{contract} ({id}): expected {}, actual {}",
                        word(*live),
                        word(actual)
                    )))
                }
            }
            ScenarioCommand::ExpectError { error, command } => match self.step(command) {
                Err(StepError::Market(e)) if e.name() == error => Ok(format!("rejected as expected: {e}")),
                Err(StepError::Market(e)) => Err(StepError::Failed(format!("expected {error}, got {}: {e}", e.name()))),
                Err(failed) => Err(failed),
                Ok(outcome) => {
                    Err(StepError::Failed(format!("expected {error}, but the command succeeded ({outcome})")))
                }
            },
        }
    }
}

fn is_assertion(cmd: &ScenarioCommand) -> bool {
    matches!(
        cmd,
        ScenarioCommand::AssertBalance { .. }
            | ScenarioCommand::AssertEvent { .. }
            | ScenarioCommand::AssertLive { .. }
    )
}

/// Runs the commands in order from an empty marketplace. Every assertion
/// failure, unexpected rejection and consistency violation lands in the
/// report; nothing aborts the run.
pub fn run_scenario(commands: &[ScenarioLine], config: ScenarioConfig) -> TraceReport {
    let mut runner = Runner {
        state: Marketplace::new(config.freshness_window),
        config,
        descriptions: HashMap::new(),
        contracts: HashMap::new(),
        generated: HashMap::new(),
    };
    let mut steps = Vec::new();
    let mut failures = Vec::new();
    for line in commands {
        let outcome = match runner.step(&line.command) {
            Ok(text) => text,
            Err(StepError::Market(e)) => {
                failures.push(format!("line {}: {}: unexpected {}: {e}", line.line, line.source, e.name()));
                format!("rejected: {e}")
            }
            Err(StepError::Failed(msg)) => {
                failures.push(format!("line {}: {}: {msg}", line.line, line.source));
                format!("FAILED: {msg}")
            }
        };
        if !is_assertion(&line.command) {
            for v in check_state(&runner.state) {
                failures.push(format!("line {}: consistency violation: {:?}: {}", line.line, v.kind, v.detail));
            }
        }
        steps.push(ReportStep {
            line: line.line,
            command: line.source.clone(),
            outcome,
            state_digest: state_digest(&runner.state),
        });
    }
    let verdict = if failures.is_empty() { Verdict::Pass } else { Verdict::Fail };
    TraceReport { steps, verdict, failures }
}
