//! Deterministic, discrete-step simulator of fractional-reserve banking
//! systems built on double-entry bookkeeping.

pub mod agents;
pub mod amount;
pub mod bank;
pub mod clearing;
pub mod control;
pub mod engine;
pub mod instruments;
pub mod ledger;

/// Money in minor currency units.
pub type Money = i64;
/// Index of a commercial bank, `b{n}` in account and institution ids.
pub type BankId = u16;
/// Index of a non-bank agent, `a{n}` in account ids.
pub type AgentId = u32;
