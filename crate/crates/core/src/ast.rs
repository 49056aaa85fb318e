//! The Findel primitive tree and its derived combinators.
//!
//! A contract description is a finite tree whose leaves are `Zero` and
//! `One` and whose inner nodes are the seven composite primitives. Scale
//! factors are unbounded naturals; timestamps are `u64` so that `After`
//! has a representable upper bound ([`T_MAX`]).

use std::fmt;

use num_bigint::BigUint;
use thiserror::Error;

/// Abstract time unit used by the marketplace clock.
pub type Timestamp = u64;

/// Largest representable timestamp; the open end of `After` windows.
pub const T_MAX: Timestamp = Timestamp::MAX;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TokenError {
    #[error("currency symbol must be 1-8 uppercase ASCII letters, got {0:?}")]
    Currency(String),
    #[error("address must be a non-empty token of [A-Za-z0-9_.-], got {0:?}")]
    Address(String),
}

/// A currency symbol such as `USD` or `EUR`. The set is open.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Currency(String);

impl Currency {
    pub fn new(symbol: impl Into<String>) -> Result<Self, TokenError> {
        let symbol = symbol.into();
        if Self::is_valid(&symbol) {
            Ok(Currency(symbol))
        } else {
            Err(TokenError::Currency(symbol))
        }
    }

    pub fn is_valid(symbol: &str) -> bool {
        (1..=8).contains(&symbol.len()) && symbol.bytes().all(|b| b.is_ascii_uppercase())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Currency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// An opaque party or gateway identifier. Equality is exact token equality.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Address(String);

impl Address {
    pub fn new(token: impl Into<String>) -> Result<Self, TokenError> {
        let token = token.into();
        if Self::is_valid(&token) {
            Ok(Address(token))
        } else {
            Err(TokenError::Address(token))
        }
    }

    pub fn is_valid(token: &str) -> bool {
        !token.is_empty() && token.chars().all(is_address_char)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

pub(crate) fn is_address_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-')
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Half-width of the acceptance window produced by [`at`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Delta(pub Timestamp);

/// A node of a contract description.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Primitive {
    Zero,
    One(Currency),
    Scale(BigUint, Box<Primitive>),
    ScaleObs(Address, Box<Primitive>),
    Give(Box<Primitive>),
    And(Box<Primitive>, Box<Primitive>),
    Or(Box<Primitive>, Box<Primitive>),
    If(Address, Box<Primitive>, Box<Primitive>),
    Timebound(Timestamp, Timestamp, Box<Primitive>),
}

impl Primitive {
    pub fn one(currency: Currency) -> Self {
        Primitive::One(currency)
    }

    pub fn scale(factor: impl Into<BigUint>, sub: Primitive) -> Self {
        Primitive::Scale(factor.into(), Box::new(sub))
    }

    pub fn scale_obs(source: Address, sub: Primitive) -> Self {
        Primitive::ScaleObs(source, Box::new(sub))
    }

    pub fn give(sub: Primitive) -> Self {
        Primitive::Give(Box::new(sub))
    }

    pub fn and(left: Primitive, right: Primitive) -> Self {
        Primitive::And(Box::new(left), Box::new(right))
    }

    pub fn or(left: Primitive, right: Primitive) -> Self {
        Primitive::Or(Box::new(left), Box::new(right))
    }

    pub fn if_(source: Address, then: Primitive, otherwise: Primitive) -> Self {
        Primitive::If(source, Box::new(then), Box::new(otherwise))
    }

    pub fn timebound(t0: Timestamp, t1: Timestamp, sub: Primitive) -> Self {
        Primitive::Timebound(t0, t1, Box::new(sub))
    }

    pub fn is_or(&self) -> bool {
        matches!(self, Primitive::Or(..))
    }

    /// Number of nodes in the tree.
    pub fn size(&self) -> usize {
        1 + self.children().map(|(_, c)| c.size()).sum::<usize>()
    }

    /// Height of the tree; a leaf has depth 1.
    pub fn depth(&self) -> usize {
        1 + self.children().map(|(_, c)| c.depth()).max().unwrap_or(0)
    }

    /// Immediate subtrees, labelled by the edge that reaches them.
    pub fn children(&self) -> impl Iterator<Item = (PathStep, &Primitive)> {
        type Edge<'a> = Option<(PathStep, &'a Primitive)>;
        let (a, b): (Edge<'_>, Edge<'_>) = match self {
            Primitive::Zero | Primitive::One(_) => (None, None),
            Primitive::Scale(_, sub)
            | Primitive::ScaleObs(_, sub)
            | Primitive::Give(sub)
            | Primitive::Timebound(_, _, sub) => (Some((PathStep::Sub, sub)), None),
            Primitive::And(l, r) | Primitive::Or(l, r) => (Some((PathStep::Left, l)), Some((PathStep::Right, r))),
            Primitive::If(_, t, e) => (Some((PathStep::Then, t)), Some((PathStep::Else, e))),
        };
        a.into_iter().chain(b)
    }
}

/// `At(t, p)`: executable only in `[t - delta, t + delta]`, saturating at both ends.
pub fn at(t: Timestamp, p: Primitive, delta: Delta) -> Primitive {
    Primitive::timebound(t.saturating_sub(delta.0), t.saturating_add(delta.0), p)
}

/// `Before(t, p)`: executable any time up to and including `t`.
pub fn before(t: Timestamp, p: Primitive) -> Primitive {
    Primitive::timebound(0, t, p)
}

/// `After(t, p)`: executable from `t` onwards.
pub fn after(t: Timestamp, p: Primitive) -> Primitive {
    Primitive::timebound(t, T_MAX, p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PathStep {
    Sub,
    Left,
    Right,
    Then,
    Else,
}

impl fmt::Display for PathStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PathStep::Sub => "sub",
            PathStep::Left => "left",
            PathStep::Right => "right",
            PathStep::Then => "then",
            PathStep::Else => "else",
        })
    }
}

/// A `Timebound` node whose window is empty (`t0 > t1`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowViolation {
    pub path: Vec<PathStep>,
    pub t0: Timestamp,
    pub t1: Timestamp,
}

impl fmt::Display for WindowViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let path: Vec<String> = self.path.iter().map(ToString::to_string).collect();
        let at = if path.is_empty() { "root".to_string() } else { path.join(".") };
        write!(f, "Timebound at {} has t0 = {} > t1 = {}", at, self.t0, self.t1)
    }
}

/// Reports every `Timebound` with `t0 > t1`, in pre-order.
pub fn validate(p: &Primitive) -> Result<(), Vec<WindowViolation>> {
    let mut violations = Vec::new();
    let mut path = Vec::new();
    walk(p, &mut path, &mut violations);
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

fn walk(p: &Primitive, path: &mut Vec<PathStep>, out: &mut Vec<WindowViolation>) {
    if let Primitive::Timebound(t0, t1, _) = p {
        if t0 > t1 {
            out.push(WindowViolation { path: path.clone(), t0: *t0, t1: *t1 });
        }
    }
    for (step, child) in p.children() {
        path.push(step);
        walk(child, path, out);
        path.pop();
    }
}
