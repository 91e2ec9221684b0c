//! Simulation event log entries.

use serde::{Deserialize, Serialize};

use crate::bank::Constraint;
use crate::{AgentId, BankId, Money};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefaultCause {
    Draw,
    Arrears,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeSource {
    Schedule,
    Command,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    ParamChanged { param: String, value: u32, source: ChangeSource },
    LoanGranted { bank: BankId, borrower: AgentId, principal: Money, rate_bp: u32 },
    LoanDenied { bank: BankId, borrower: AgentId, constraint: Constraint },
    LoanRepaid { bank: BankId, borrower: AgentId },
    MissedPayment { bank: BankId, borrower: AgentId, due: Money, balance: Money },
    Default { bank: BankId, borrower: AgentId, written_off: Money, uncovered: Money, cause: DefaultCause },
    Insolvency { bank: BankId },
    Illiquidity { bank: BankId, amount: Money, context: String },
    InterbankLoan { lender: BankId, borrower: BankId, amount: Money },
    SalaryShortfall { bank: BankId, unpaid: u32 },
    GovernmentIlliquid { bank: BankId, due: Money, available: Money },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::ParamChanged { .. } => "param_changed",
            EventKind::LoanGranted { .. } => "loan_granted",
            EventKind::LoanDenied { .. } => "loan_denied",
            EventKind::LoanRepaid { .. } => "loan_repaid",
            EventKind::MissedPayment { .. } => "missed_payment",
            EventKind::Default { .. } => "default",
            EventKind::Insolvency { .. } => "insolvency",
            EventKind::Illiquidity { .. } => "illiquidity",
            EventKind::InterbankLoan { .. } => "interbank_loan",
            EventKind::SalaryShortfall { .. } => "salary_shortfall",
            EventKind::GovernmentIlliquid { .. } => "government_illiquid",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub step: u32,
    #[serde(flatten)]
    pub kind: EventKind,
}

/// Running totals of the events that batch summaries report.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct EventCounts {
    pub granted: u64,
    pub denied: u64,
    pub missed: u64,
    pub defaults: u64,
    pub illiquidity: u64,
    pub insolvency: u64,
}

impl EventCounts {
    pub fn add(&mut self, kind: &EventKind) {
        match kind {
            EventKind::LoanGranted { .. } => self.granted += 1,
            EventKind::LoanDenied { .. } => self.denied += 1,
            EventKind::MissedPayment { .. } => self.missed += 1,
            EventKind::Default { .. } => self.defaults += 1,
            EventKind::Illiquidity { .. } | EventKind::GovernmentIlliquid { .. } => self.illiquidity += 1,
            EventKind::Insolvency { .. } => self.insolvency += 1,
            _ => {}
        }
    }
}
