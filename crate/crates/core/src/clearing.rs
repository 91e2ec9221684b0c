//! Central bank: per-bank reserve accounts, the government deposit, the base
//! rate register, gross settlement and a one-step overnight interbank loan.
//!
//! Every reserve movement is three legs posted together: the paying bank's
//! customer-side leg against its `reserves` asset, the transfer between
//! reserve accounts at the central bank, and the receiving bank's leg. The
//! bank-side `reserves` ledger therefore mirrors the central bank's reserve
//! account after every transaction.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::amount::BasisPoints;
use crate::ledger::{AccountId, InstitutionId, LedgerError, LedgerId, LedgerSet, Leg, MemoKind, Posting, Target};
use crate::{BankId, Money};

pub const CB: InstitutionId = InstitutionId::Central;

pub fn bank_inst(bank: BankId) -> InstitutionId {
    InstitutionId::Bank(bank)
}

/// A bank's reserve account at the central bank.
pub fn reserve_account(bank: BankId) -> Target {
    Target::new(CB, LedgerId::ReserveAccounts, AccountId::Bank(bank))
}

/// A bank's own mirror of its central-bank reserves.
pub fn bank_reserves(bank: BankId) -> Target {
    Target::house(bank_inst(bank), LedgerId::Reserves)
}

pub fn government_deposit() -> Target {
    Target::new(CB, LedgerId::GovernmentDeposit, AccountId::Government)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ClearingError {
    #[error("settlement from a bank to itself")]
    Degenerate,
    #[error("bank {bank} has insufficient reserves to settle {amount}")]
    InsufficientReserves { bank: BankId, amount: Money },
    #[error("no bank can lend {0} in reserves")]
    NoLenderAvailable(Money),
    #[error("amount must be positive")]
    NonPositiveAmount,
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

/// The three legs moving `amount` of reserves from `from` to `to`:
/// `from_debit` is the paying side's debit (customer deposit, income...),
/// `to_credit` the receiving side's credit.
pub fn settlement_legs(from: BankId, to: BankId, amount: Money, from_debit: Target, to_credit: Target, kind: MemoKind) -> [Leg; 3] {
    [
        Leg::new(from_debit, bank_reserves(from), amount, kind),
        Leg::new(reserve_account(from), reserve_account(to), amount, MemoKind::Settlement),
        Leg::new(bank_reserves(to), to_credit, amount, kind),
    ]
}

/// Maps an overdraft of a reserve account or reserve mirror onto
/// [`ClearingError::InsufficientReserves`].
pub fn classify_overdraw(err: LedgerError, amount: Money) -> ClearingError {
    if let LedgerError::WouldOverdraw { target, .. } = &err {
        let bank = match (target.inst, target.ledger, target.account) {
            (InstitutionId::Bank(b), LedgerId::Reserves, _) => Some(b),
            (InstitutionId::Central, LedgerId::ReserveAccounts, AccountId::Bank(b)) => Some(b),
            _ => None,
        };
        if let Some(bank) = bank {
            return ClearingError::InsufficientReserves { bank, amount };
        }
    }
    ClearingError::Ledger(err)
}

/// Gross settlement of one customer-side transfer between two banks.
pub fn settle(set: &mut LedgerSet, from: BankId, to: BankId, amount: Money, from_debit: Target, to_credit: Target, kind: MemoKind) -> Result<Vec<Posting>, ClearingError> {
    if from == to {
        return Err(ClearingError::Degenerate);
    }
    if amount <= 0 {
        return Err(ClearingError::NonPositiveAmount);
    }
    set.post_all(&settlement_legs(from, to, amount, from_debit, to_credit, kind))
        .map_err(|e| classify_overdraw(e, amount))
}

/// Moves a bank's vault cash into its central-bank reserve account.
pub fn sweep_legs(bank: BankId, amount: Money) -> [Leg; 2] {
    [
        Leg::new(bank_reserves(bank), Target::house(bank_inst(bank), LedgerId::Cash), amount, MemoKind::ReserveSweep),
        Leg::new(Target::house(CB, LedgerId::Cash), reserve_account(bank), amount, MemoKind::ReserveSweep),
    ]
}

/// Draws cash out of a bank's reserve account into its vault.
pub fn draw_legs(bank: BankId, amount: Money) -> [Leg; 2] {
    [
        Leg::new(Target::house(bank_inst(bank), LedgerId::Cash), bank_reserves(bank), amount, MemoKind::ReserveDraw),
        Leg::new(reserve_account(bank), Target::house(CB, LedgerId::Cash), amount, MemoKind::ReserveDraw),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct InterbankLoan {
    pub lender: BankId,
    pub borrower: BankId,
    pub amount: Money,
    pub rate: BasisPoints,
    pub due_step: u32,
}

impl InterbankLoan {
    pub fn interest(&self) -> Money {
        self.rate.monthly_interest(self.amount)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RateChange {
    pub step: u32,
    pub rate: BasisPoints,
}

#[derive(Debug, Clone)]
pub struct CentralBank {
    pub base_rate: BasisPoints,
    pending: BTreeMap<u32, BasisPoints>,
    pub trace: Vec<RateChange>,
    pub interbank: Vec<InterbankLoan>,
}

impl CentralBank {
    pub fn new(base_rate: BasisPoints) -> Self {
        CentralBank { base_rate, pending: BTreeMap::new(), trace: Vec::new(), interbank: Vec::new() }
    }

    /// Schedules a base-rate change for the start of `effective_step`. Loans
    /// already on the books keep their contract rate.
    pub fn set_base_rate(&mut self, rate: BasisPoints, effective_step: u32) {
        self.pending.insert(effective_step, rate);
    }

    /// Applies every scheduled change due at or before `step`; returns the
    /// rate in force for the step.
    pub fn begin_step(&mut self, step: u32) -> BasisPoints {
        let due: Vec<u32> = self.pending.range(..=step).map(|(s, _)| *s).collect();
        for s in due {
            let rate = self.pending.remove(&s).expect("present");
            if rate != self.base_rate {
                self.base_rate = rate;
                self.trace.push(RateChange { step, rate });
            }
        }
        self.base_rate
    }

    /// Lends reserves overnight to `borrower` from the first bank (in id
    /// order) whose spare reserves cover `amount`. `spare` lists candidate
    /// lenders with reserves above their own requirement.
    pub fn interbank_borrow(&mut self, set: &mut LedgerSet, borrower: BankId, amount: Money, spare: &[(BankId, Money)], step: u32) -> Result<InterbankLoan, ClearingError> {
        if amount <= 0 {
            return Err(ClearingError::NonPositiveAmount);
        }
        let lender = spare
            .iter()
            .filter(|(b, s)| *b != borrower && *s >= amount)
            .map(|(b, _)| *b)
            .min()
            .ok_or(ClearingError::NoLenderAvailable(amount))?;
        let claim = Target::new(bank_inst(lender), LedgerId::InterbankLending, AccountId::Bank(borrower));
        let debt = Target::new(bank_inst(borrower), LedgerId::InterbankBorrowing, AccountId::Bank(lender));
        set.open_account(claim)?;
        set.open_account(debt)?;
        settle(set, lender, borrower, amount, claim, debt, MemoKind::InterbankLoan)?;
        let loan = InterbankLoan { lender, borrower, amount, rate: self.base_rate, due_step: step + 1 };
        self.interbank.push(loan);
        Ok(loan)
    }

    /// Repays every overnight loan due by `step`, principal plus one month's
    /// interest at the contract rate. Interest is paid out of the borrower's
    /// interest income, then retained earnings. Loans that cannot be repaid
    /// stay outstanding and are returned as failures.
    pub fn repay_interbank(&mut self, set: &mut LedgerSet, step: u32) -> Vec<(InterbankLoan, ClearingError)> {
        let mut failures = Vec::new();
        let mut keep = Vec::new();
        for loan in std::mem::take(&mut self.interbank) {
            if loan.due_step > step {
                keep.push(loan);
                continue;
            }
            match repay_one(set, &loan) {
                Ok(()) => {}
                Err(e) => {
                    failures.push((loan, e));
                    keep.push(loan);
                }
            }
        }
        self.interbank = keep;
        failures
    }
}

fn repay_one(set: &mut LedgerSet, loan: &InterbankLoan) -> Result<(), ClearingError> {
    let (l, b) = (loan.lender, loan.borrower);
    let claim = Target::new(bank_inst(l), LedgerId::InterbankLending, AccountId::Bank(b));
    let debt = Target::new(bank_inst(b), LedgerId::InterbankBorrowing, AccountId::Bank(l));
    let interest = loan.interest();
    let mut legs = settlement_legs(b, l, loan.amount, debt, claim, MemoKind::InterbankRepayment).to_vec();
    if interest > 0 {
        let income = Target::house(bank_inst(b), LedgerId::InterestIncome);
        let retained = Target::house(bank_inst(b), LedgerId::RetainedEarnings);
        let from_income = set.balance(income).min(interest);
        let from_retained = interest - from_income;
        legs.push(Leg::new(income, bank_reserves(b), from_income, MemoKind::InterbankInterest));
        legs.push(Leg::new(retained, bank_reserves(b), from_retained, MemoKind::InterbankInterest));
        legs.push(Leg::new(reserve_account(b), reserve_account(l), interest, MemoKind::Settlement));
        legs.push(Leg::new(
            bank_reserves(l),
            Target::house(bank_inst(l), LedgerId::InterestIncome),
            interest,
            MemoKind::InterbankInterest,
        ));
    }
    set.post_all(&legs).map_err(|e| classify_overdraw(e, loan.amount + interest))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GovernmentOp {
    Deposit,
    Withdraw,
}

/// Adjusts the government's deposit at the central bank against central-bank cash.
pub fn government_account_ops(set: &mut LedgerSet, op: GovernmentOp, amount: Money) -> Result<Posting, LedgerError> {
    let cash = Target::house(CB, LedgerId::Cash);
    match op {
        GovernmentOp::Deposit => set.post(cash, government_deposit(), amount, MemoKind::GovernmentDeposit),
        GovernmentOp::Withdraw => set.post(government_deposit(), cash, amount, MemoKind::GovernmentWithdrawal),
    }
}
