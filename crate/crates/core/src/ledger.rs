//! Double-entry bookkeeping.
//!
//! Each institution (commercial bank or the central bank) owns one
//! [`GeneralLedger`]: a fixed set of classified ledgers, each holding
//! per-owner accounts. Money only moves through [`Posting`]s, a single
//! `(debit, credit, amount)` tuple applied to two ledgers of the same
//! institution. Because every posting adds the same amount to both sides of
//! `assets - liabilities - capital`, the accounting equation holds after every
//! posting; [`GeneralLedger::report`] re-derives it from stored totals.
//!
//! [`LedgerSet`] holds all general ledgers of a simulated system together
//! with the append-only [`AuditLog`]. Replaying that log from empty ledgers
//! reproduces every balance exactly (see [`replay`]).

use std::collections::BTreeMap;
use std::fmt;
use std::io;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::amount::Amount;
use crate::Money;

/// Asset ledgers are debit-normal; liability and capital ledgers are credit-normal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LedgerClass {
    Asset,
    Liability,
    Capital,
}

impl LedgerClass {
    pub fn debit_normal(self) -> bool {
        matches!(self, LedgerClass::Asset)
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LedgerId {
    Cash,
    Reserves,
    Loans,
    Treasuries,
    InterbankLending,
    Deposits,
    InterestIncome,
    LossProvision,
    RetainedEarnings,
    InterbankBorrowing,
    Capital,
    ReserveAccounts,
    GovernmentDeposit,
}

impl LedgerId {
    pub const ALL: [LedgerId; 13] = [
        LedgerId::Cash,
        LedgerId::Reserves,
        LedgerId::Loans,
        LedgerId::Treasuries,
        LedgerId::InterbankLending,
        LedgerId::Deposits,
        LedgerId::InterestIncome,
        LedgerId::LossProvision,
        LedgerId::RetainedEarnings,
        LedgerId::InterbankBorrowing,
        LedgerId::Capital,
        LedgerId::ReserveAccounts,
        LedgerId::GovernmentDeposit,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LedgerId::Cash => "cash",
            LedgerId::Reserves => "reserves",
            LedgerId::Loans => "loans",
            LedgerId::Treasuries => "treasuries",
            LedgerId::InterbankLending => "interbank_lending",
            LedgerId::Deposits => "deposits",
            LedgerId::InterestIncome => "interest_income",
            LedgerId::LossProvision => "loss_provision",
            LedgerId::RetainedEarnings => "retained_earnings",
            LedgerId::InterbankBorrowing => "interbank_borrowing",
            LedgerId::Capital => "capital",
            LedgerId::ReserveAccounts => "reserve_accounts",
            LedgerId::GovernmentDeposit => "government_deposit",
        }
    }
}

impl fmt::Display for LedgerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LedgerId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LedgerId::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| format!("unknown ledger `{s}`"))
    }
}

/// A bank-system participant that keeps books: the central bank or a commercial bank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum InstitutionId {
    Central,
    Bank(u16),
}

impl fmt::Display for InstitutionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InstitutionId::Central => f.write_str("cb"),
            InstitutionId::Bank(b) => write!(f, "b{b}"),
        }
    }
}

impl FromStr for InstitutionId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "cb" {
            return Ok(InstitutionId::Central);
        }
        s.strip_prefix('b')
            .and_then(|n| n.parse().ok())
            .map(InstitutionId::Bank)
            .ok_or_else(|| format!("bad institution id `{s}`"))
    }
}

/// Owner of an account within a ledger.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AccountId {
    /// The institution's own single account on a house ledger (cash, reserves, income...).
    House,
    Agent(u32),
    /// A commercial bank's account held at the central bank.
    Bank(u16),
    Government,
}

impl fmt::Display for AccountId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AccountId::House => f.write_str("house"),
            AccountId::Agent(a) => write!(f, "a{a}"),
            AccountId::Bank(b) => write!(f, "b{b}"),
            AccountId::Government => f.write_str("gov"),
        }
    }
}

impl FromStr for AccountId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "house" => Ok(AccountId::House),
            "gov" => Ok(AccountId::Government),
            _ => {
                let bad = || format!("bad account id `{s}`");
                if let Some(n) = s.strip_prefix('a') {
                    n.parse().map(AccountId::Agent).map_err(|_| bad())
                } else if let Some(n) = s.strip_prefix('b') {
                    n.parse().map(AccountId::Bank).map_err(|_| bad())
                } else {
                    Err(bad())
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Target {
    pub inst: InstitutionId,
    pub ledger: LedgerId,
    pub account: AccountId,
}

impl Target {
    pub fn new(inst: InstitutionId, ledger: LedgerId, account: AccountId) -> Self {
        Target { inst, ledger, account }
    }

    pub fn house(inst: InstitutionId, ledger: LedgerId) -> Self {
        Target::new(inst, ledger, AccountId::House)
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.inst, self.ledger, self.account)
    }
}

/// Operation tag carried by every posting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoKind {
    CashDeposit,
    CashWithdrawal,
    ShareSale,
    ReserveSweep,
    ReserveDraw,
    Transfer,
    LoanGrant,
    Disbursement,
    Interest,
    Principal,
    Indexation,
    Provision,
    WriteOff,
    Salary,
    Tax,
    Dividend,
    Settlement,
    InterbankLoan,
    InterbankRepayment,
    InterbankInterest,
    TreasuryIssue,
    TreasuryCoupon,
    TreasuryRedemption,
    GovernmentDeposit,
    GovernmentWithdrawal,
}

impl MemoKind {
    const ALL: [MemoKind; 25] = [
        MemoKind::CashDeposit,
        MemoKind::CashWithdrawal,
        MemoKind::ShareSale,
        MemoKind::ReserveSweep,
        MemoKind::ReserveDraw,
        MemoKind::Transfer,
        MemoKind::LoanGrant,
        MemoKind::Disbursement,
        MemoKind::Interest,
        MemoKind::Principal,
        MemoKind::Indexation,
        MemoKind::Provision,
        MemoKind::WriteOff,
        MemoKind::Salary,
        MemoKind::Tax,
        MemoKind::Dividend,
        MemoKind::Settlement,
        MemoKind::InterbankLoan,
        MemoKind::InterbankRepayment,
        MemoKind::InterbankInterest,
        MemoKind::TreasuryIssue,
        MemoKind::TreasuryCoupon,
        MemoKind::TreasuryRedemption,
        MemoKind::GovernmentDeposit,
        MemoKind::GovernmentWithdrawal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MemoKind::CashDeposit => "cash_deposit",
            MemoKind::CashWithdrawal => "cash_withdrawal",
            MemoKind::ShareSale => "share_sale",
            MemoKind::ReserveSweep => "reserve_sweep",
            MemoKind::ReserveDraw => "reserve_draw",
            MemoKind::Transfer => "transfer",
            MemoKind::LoanGrant => "loan_grant",
            MemoKind::Disbursement => "disbursement",
            MemoKind::Interest => "interest",
            MemoKind::Principal => "principal",
            MemoKind::Indexation => "indexation",
            MemoKind::Provision => "provision",
            MemoKind::WriteOff => "write_off",
            MemoKind::Salary => "salary",
            MemoKind::Tax => "tax",
            MemoKind::Dividend => "dividend",
            MemoKind::Settlement => "settlement",
            MemoKind::InterbankLoan => "interbank_loan",
            MemoKind::InterbankRepayment => "interbank_repayment",
            MemoKind::InterbankInterest => "interbank_interest",
            MemoKind::TreasuryIssue => "treasury_issue",
            MemoKind::TreasuryCoupon => "treasury_coupon",
            MemoKind::TreasuryRedemption => "treasury_redemption",
            MemoKind::GovernmentDeposit => "government_deposit",
            MemoKind::GovernmentWithdrawal => "government_withdrawal",
        }
    }
}

/// Operation tag plus the transaction id linking postings of one operation
/// (for example a customer payment and the reserve settlement backing it).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Memo {
    pub kind: MemoKind,
    pub txn: u64,
}

impl fmt::Display for Memo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.kind.as_str(), self.txn)
    }
}

impl FromStr for Memo {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, txn) = s.split_once('#').ok_or_else(|| format!("bad memo `{s}`"))?;
        let kind = MemoKind::ALL
            .into_iter()
            .find(|k| k.as_str() == kind)
            .ok_or_else(|| format!("unknown memo kind `{kind}`"))?;
        let txn = txn.parse().map_err(|_| format!("bad memo txn `{txn}`"))?;
        Ok(Memo { kind, txn })
    }
}

/// One immutable double-entry record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting<A = Money> {
    pub seq: u64,
    pub step: u32,
    pub debit: Target,
    pub credit: Target,
    pub amount: A,
    pub memo: Memo,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LedgerError {
    #[error("unknown posting target {0}")]
    UnknownTarget(Target),
    #[error("posting amount must be positive, got {0}")]
    NonPositiveAmount(String),
    #[error("posting would overdraw {target}: balance {balance}, debit {amount}")]
    WouldOverdraw { target: Target, balance: String, amount: String },
    #[error("cannot transfer between {from} and {to} in one posting: both sides must be liability-form money")]
    CrossFormTransfer { from: Target, to: Target },
    #[error("debit {debit} and credit {credit} belong to different institutions")]
    CrossInstitution { debit: Target, credit: Target },
    #[error("accounting equation violated at {inst}: assets {assets} != liabilities {liabilities} + capital {capital}")]
    InvariantViolation { inst: InstitutionId, assets: String, liabilities: String, capital: String },
}

#[derive(Debug, Clone)]
pub struct Ledger<A = Money> {
    pub id: LedgerId,
    pub class: LedgerClass,
    /// Counted in the narrow money supply and in reserve-requirement deposits.
    pub deposit_class: bool,
    accounts: BTreeMap<AccountId, A>,
    total: A,
}

impl<A: Amount> Ledger<A> {
    fn new(spec: LedgerSpec) -> Self {
        Ledger {
            id: spec.id,
            class: spec.class,
            deposit_class: spec.deposit_class,
            accounts: BTreeMap::new(),
            total: A::zero(),
        }
    }

    pub fn total(&self) -> A {
        self.total
    }

    pub fn balance(&self, account: AccountId) -> Option<A> {
        self.accounts.get(&account).copied()
    }

    pub fn accounts(&self) -> impl Iterator<Item = (AccountId, A)> + '_ {
        self.accounts.iter().map(|(k, v)| (*k, *v))
    }
}

/// Static description of one ledger in an institution's chart of accounts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerSpec {
    pub id: LedgerId,
    pub class: LedgerClass,
    pub deposit_class: bool,
}

impl LedgerSpec {
    const fn new(id: LedgerId, class: LedgerClass, deposit_class: bool) -> Self {
        LedgerSpec { id, class, deposit_class }
    }
}

/// Default chart of accounts for a commercial bank. Income-type ledgers are
/// liabilities; only `deposits` counts as deposit-class.
pub fn bank_layout() -> Vec<LedgerSpec> {
    use LedgerClass::*;
    use LedgerId as L;
    vec![
        LedgerSpec::new(L::Cash, Asset, false),
        LedgerSpec::new(L::Reserves, Asset, false),
        LedgerSpec::new(L::Loans, Asset, false),
        LedgerSpec::new(L::Treasuries, Asset, false),
        LedgerSpec::new(L::InterbankLending, Asset, false),
        LedgerSpec::new(L::Deposits, Liability, true),
        LedgerSpec::new(L::InterestIncome, Liability, false),
        LedgerSpec::new(L::LossProvision, Liability, false),
        LedgerSpec::new(L::RetainedEarnings, Liability, false),
        LedgerSpec::new(L::InterbankBorrowing, Liability, false),
        LedgerSpec::new(L::Capital, Capital, false),
    ]
}

/// Central bank: cash held against reserve accounts and the government deposit. No capital.
pub fn central_layout() -> Vec<LedgerSpec> {
    use LedgerClass::*;
    vec![
        LedgerSpec::new(LedgerId::Cash, Asset, false),
        LedgerSpec::new(LedgerId::ReserveAccounts, Liability, false),
        LedgerSpec::new(LedgerId::GovernmentDeposit, Liability, false),
    ]
}

/// Asset / liability / capital totals of one institution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BalanceReport<A = Money> {
    pub assets: A,
    pub liabilities: A,
    pub capital: A,
    pub holds: bool,
}

/// All ledgers of one institution.
#[derive(Debug, Clone)]
pub struct GeneralLedger<A = Money> {
    pub owner: InstitutionId,
    ledgers: BTreeMap<LedgerId, Ledger<A>>,
}

impl<A: Amount> GeneralLedger<A> {
    pub fn new(owner: InstitutionId, layout: &[LedgerSpec]) -> Self {
        let ledgers = layout.iter().map(|s| (s.id, Ledger::new(*s))).collect();
        GeneralLedger { owner, ledgers }
    }

    pub fn ledger(&self, id: LedgerId) -> Option<&Ledger<A>> {
        self.ledgers.get(&id)
    }

    pub fn ledgers(&self) -> impl Iterator<Item = &Ledger<A>> {
        self.ledgers.values()
    }

    pub fn total(&self, id: LedgerId) -> A {
        self.ledgers.get(&id).map_or(A::zero(), |l| l.total)
    }

    pub fn balance(&self, id: LedgerId, account: AccountId) -> A {
        self.ledgers
            .get(&id)
            .and_then(|l| l.balance(account))
            .unwrap_or_else(A::zero)
    }

    pub fn has_account(&self, id: LedgerId, account: AccountId) -> bool {
        self.ledgers.get(&id).is_some_and(|l| l.accounts.contains_key(&account))
    }

    /// Sum of all deposit-class ledgers.
    pub fn deposit_class_total(&self) -> A {
        self.ledgers.values().filter(|l| l.deposit_class).map(|l| l.total).sum()
    }

    pub fn class_total(&self, class: LedgerClass) -> A {
        self.ledgers.values().filter(|l| l.class == class).map(|l| l.total).sum()
    }

    /// Recomputes the accounting equation from account balances. Never mutates.
    pub fn report(&self) -> BalanceReport<A> {
        let mut totals = [A::zero(); 3];
        let mut consistent = true;
        for l in self.ledgers.values() {
            let sum: A = l.accounts.values().copied().sum();
            consistent &= sum == l.total;
            totals[l.class.index()] = totals[l.class.index()] + sum;
        }
        let [assets, liabilities, capital] = totals;
        BalanceReport { assets, liabilities, capital, holds: consistent && assets == liabilities + capital }
    }

    fn open(&mut self, id: LedgerId, account: AccountId) -> bool {
        match self.ledgers.get_mut(&id) {
            Some(l) => {
                l.accounts.entry(account).or_insert_with(A::zero);
                true
            }
            None => false,
        }
    }

    /// Signed change a debit (`debit = true`) or credit applies to the account balance.
    fn effect(&self, t: &Target, debit: bool, amount: A) -> Result<A, LedgerError> {
        let ledger = self.ledgers.get(&t.ledger).ok_or(LedgerError::UnknownTarget(*t))?;
        if !ledger.accounts.contains_key(&t.account) {
            return Err(LedgerError::UnknownTarget(*t));
        }
        Ok(if ledger.class.debit_normal() == debit { amount } else { -amount })
    }

    fn apply(&mut self, t: &Target, delta: A) {
        let ledger = self.ledgers.get_mut(&t.ledger).expect("validated target");
        let bal = ledger.accounts.get_mut(&t.account).expect("validated account");
        *bal = *bal + delta;
        ledger.total = ledger.total + delta;
    }
}

/// One leg of a multi-posting transaction.
#[derive(Debug, Clone, Copy)]
pub struct Leg<A = Money> {
    pub debit: Target,
    pub credit: Target,
    pub amount: A,
    pub kind: MemoKind,
}

impl<A> Leg<A> {
    pub fn new(debit: Target, credit: Target, amount: A, kind: MemoKind) -> Self {
        Leg { debit, credit, amount, kind }
    }
}

#[derive(Debug, Clone, Default)]
pub struct AuditLog<A = Money> {
    entries: Vec<Posting<A>>,
}

impl<A: Amount> AuditLog<A> {
    pub fn entries(&self) -> &[Posting<A>] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn from_entries(entries: Vec<Posting<A>>) -> Self {
        AuditLog { entries }
    }
}

/// General ledgers of every institution in the system plus the audit trail.
#[derive(Debug, Clone)]
pub struct LedgerSet<A = Money> {
    books: BTreeMap<InstitutionId, GeneralLedger<A>>,
    audit: AuditLog<A>,
    record_audit: bool,
    next_seq: u64,
    next_txn: u64,
    step: u32,
}

impl<A: Amount> Default for LedgerSet<A> {
    fn default() -> Self {
        Self::new(true)
    }
}

impl<A: Amount> LedgerSet<A> {
    pub fn new(record_audit: bool) -> Self {
        LedgerSet {
            books: BTreeMap::new(),
            audit: AuditLog::default(),
            record_audit,
            next_seq: 0,
            next_txn: 0,
            step: 0,
        }
    }

    pub fn add_institution(&mut self, gl: GeneralLedger<A>) {
        self.books.insert(gl.owner, gl);
    }

    pub fn gl(&self, inst: InstitutionId) -> Option<&GeneralLedger<A>> {
        self.books.get(&inst)
    }

    pub fn institutions(&self) -> impl Iterator<Item = &GeneralLedger<A>> {
        self.books.values()
    }

    pub fn audit(&self) -> &AuditLog<A> {
        &self.audit
    }

    pub fn take_audit(&mut self) -> AuditLog<A> {
        std::mem::take(&mut self.audit)
    }

    /// Number of postings applied so far, recorded or not.
    pub fn posting_count(&self) -> u64 {
        self.next_seq
    }

    pub fn set_step(&mut self, step: u32) {
        self.step = step;
    }

    pub fn step(&self) -> u32 {
        self.step
    }

    pub fn balance(&self, t: Target) -> A {
        self.books.get(&t.inst).map_or(A::zero(), |g| g.balance(t.ledger, t.account))
    }

    pub fn total(&self, inst: InstitutionId, ledger: LedgerId) -> A {
        self.books.get(&inst).map_or(A::zero(), |g| g.total(ledger))
    }

    pub fn open_account(&mut self, t: Target) -> Result<(), LedgerError> {
        let gl = self.books.get_mut(&t.inst).ok_or(LedgerError::UnknownTarget(t))?;
        if gl.open(t.ledger, t.account) {
            Ok(())
        } else {
            Err(LedgerError::UnknownTarget(t))
        }
    }

    pub fn has_account(&self, t: Target) -> bool {
        self.books.get(&t.inst).is_some_and(|g| g.has_account(t.ledger, t.account))
    }

    /// Applies a single posting.
    pub fn post(&mut self, debit: Target, credit: Target, amount: A, kind: MemoKind) -> Result<Posting<A>, LedgerError> {
        if amount <= A::zero() {
            return Err(LedgerError::NonPositiveAmount(amount.to_string()));
        }
        let mut out = self.post_all(&[Leg::new(debit, credit, amount, kind)])?;
        Ok(out.pop().expect("one posting"))
    }

    /// Applies a group of postings atomically under one transaction id: either
    /// every leg is applied or, on error, none is. Zero-amount legs are skipped.
    pub fn post_all(&mut self, legs: &[Leg<A>]) -> Result<Vec<Posting<A>>, LedgerError> {
        // net effect per account, validated before anything is applied
        let mut deltas: BTreeMap<Target, A> = BTreeMap::new();
        for leg in legs {
            if leg.amount < A::zero() {
                return Err(LedgerError::NonPositiveAmount(leg.amount.to_string()));
            }
            if leg.amount.is_zero() {
                continue;
            }
            if leg.debit.inst != leg.credit.inst {
                return Err(LedgerError::CrossInstitution { debit: leg.debit, credit: leg.credit });
            }
            let gl = self.books.get(&leg.debit.inst).ok_or(LedgerError::UnknownTarget(leg.debit))?;
            let d = gl.effect(&leg.debit, true, leg.amount)?;
            let c = gl.effect(&leg.credit, false, leg.amount)?;
            let e = deltas.entry(leg.debit).or_insert_with(A::zero);
            *e = *e + d;
            let e = deltas.entry(leg.credit).or_insert_with(A::zero);
            *e = *e + c;
        }
        for (t, d) in &deltas {
            let bal = self.balance(*t);
            if bal + *d < A::zero() {
                return Err(LedgerError::WouldOverdraw {
                    target: *t,
                    balance: bal.to_string(),
                    amount: (-*d).to_string(),
                });
            }
        }

        let txn = self.next_txn;
        self.next_txn += 1;
        let mut out = Vec::with_capacity(legs.len());
        for leg in legs.iter().filter(|l| !l.amount.is_zero()) {
            let gl = self.books.get_mut(&leg.debit.inst).expect("validated");
            let d = gl.effect(&leg.debit, true, leg.amount)?;
            let c = gl.effect(&leg.credit, false, leg.amount)?;
            gl.apply(&leg.debit, d);
            gl.apply(&leg.credit, c);
            let p = Posting {
                seq: self.next_seq,
                step: self.step,
                debit: leg.debit,
                credit: leg.credit,
                amount: leg.amount,
                memo: Memo { kind: leg.kind, txn },
            };
            self.next_seq += 1;
            if self.record_audit {
                self.audit.entries.push(p);
            }
            out.push(p);
        }
        Ok(out)
    }

    /// Accounting-equation report for every institution.
    pub fn verify_all(&self) -> Result<(), LedgerError> {
        for gl in self.books.values() {
            verify_or_err(gl)?;
        }
        Ok(())
    }

    /// Clone of every general ledger without the audit trail.
    pub fn snapshot(&self) -> BTreeMap<InstitutionId, GeneralLedger<A>> {
        self.books.clone()
    }
}

fn verify_or_err<A: Amount>(gl: &GeneralLedger<A>) -> Result<(), LedgerError> {
    let r = gl.report();
    if r.holds {
        Ok(())
    } else {
        Err(LedgerError::InvariantViolation {
            inst: gl.owner,
            assets: r.assets.to_string(),
            liabilities: r.liabilities.to_string(),
            capital: r.capital.to_string(),
        })
    }
}

/// Asset totals against liability and capital totals. Never mutates.
pub fn verify_equation<A: Amount>(gl: &GeneralLedger<A>) -> BalanceReport<A> {
    gl.report()
}

/// Cash in, liability deposit out: debit the bank's cash, credit the account.
pub fn deposit_cash<A: Amount>(set: &mut LedgerSet<A>, inst: InstitutionId, account: AccountId, amount: A) -> Result<Posting<A>, LedgerError> {
    set.post(
        Target::house(inst, LedgerId::Cash),
        Target::new(inst, LedgerId::Deposits, account),
        amount,
        MemoKind::CashDeposit,
    )
}

/// Moves liability money between two accounts of one institution in a single posting.
pub fn transfer_intra<A: Amount>(set: &mut LedgerSet<A>, from: Target, to: Target, amount: A, kind: MemoKind) -> Result<Posting<A>, LedgerError> {
    let class_of = |t: &Target| {
        set.gl(t.inst)
            .and_then(|g| g.ledger(t.ledger))
            .map(|l| l.class)
            .ok_or(LedgerError::UnknownTarget(*t))
    };
    if from.inst != to.inst {
        return Err(LedgerError::CrossInstitution { debit: from, credit: to });
    }
    if class_of(&from)?.debit_normal() || class_of(&to)?.debit_normal() {
        return Err(LedgerError::CrossFormTransfer { from, to });
    }
    set.post(from, to, amount, kind)
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("corrupt audit log: expected seq {expected}, found {found}")]
    CorruptLog { expected: u64, found: u64 },
    #[error("replay of posting {seq} failed: {source}")]
    Posting { seq: u64, source: LedgerError },
}

/// Per-institution ledger classification used when rebuilding books from a log.
pub type Layouts = BTreeMap<InstitutionId, Vec<LedgerSpec>>;

/// Rebuilds every general ledger from an audit log, starting from empty
/// ledgers. Institutions without an entry in `layouts` get the default chart
/// for their kind; accounts open on first use.
pub fn replay<A: Amount>(entries: &[Posting<A>], layouts: &Layouts) -> Result<LedgerSet<A>, ReplayError> {
    let mut set = LedgerSet::new(true);
    for (i, p) in entries.iter().enumerate() {
        if p.seq != i as u64 {
            return Err(ReplayError::CorruptLog { expected: i as u64, found: p.seq });
        }
    }
    // legs of one transaction were validated together, so they replay together
    for txn in entries.chunk_by(|a, b| a.memo.txn == b.memo.txn) {
        let first = &txn[0];
        for p in txn {
            for t in [p.debit, p.credit] {
                if set.gl(t.inst).is_none() {
                    let layout = layouts.get(&t.inst).cloned().unwrap_or_else(|| match t.inst {
                        InstitutionId::Central => central_layout(),
                        InstitutionId::Bank(_) => bank_layout(),
                    });
                    set.add_institution(GeneralLedger::new(t.inst, &layout));
                }
                if !set.has_account(t) {
                    set.open_account(t).map_err(|source| ReplayError::Posting { seq: p.seq, source })?;
                }
            }
        }
        set.step = first.step;
        set.next_txn = first.memo.txn;
        let legs: Vec<_> = txn.iter().map(|p| Leg::new(p.debit, p.credit, p.amount, p.memo.kind)).collect();
        set.post_all(&legs).map_err(|source| ReplayError::Posting { seq: first.seq, source })?;
    }
    Ok(set)
}

/// Flat record of one posting, in the stable column order of the audit file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub seq: u64,
    pub step: u32,
    pub debit_bank: String,
    pub debit_ledger: String,
    pub debit_account: String,
    pub credit_bank: String,
    pub credit_ledger: String,
    pub credit_account: String,
    pub amount: i128,
    pub memo: String,
}

impl<A: Amount> From<&Posting<A>> for AuditRecord {
    fn from(p: &Posting<A>) -> Self {
        AuditRecord {
            seq: p.seq,
            step: p.step,
            debit_bank: p.debit.inst.to_string(),
            debit_ledger: p.debit.ledger.to_string(),
            debit_account: p.debit.account.to_string(),
            credit_bank: p.credit.inst.to_string(),
            credit_ledger: p.credit.ledger.to_string(),
            credit_account: p.credit.account.to_string(),
            amount: p.amount.to_wide(),
            memo: p.memo.to_string(),
        }
    }
}

impl AuditRecord {
    pub fn to_posting<A: Amount>(&self) -> Result<Posting<A>, String> {
        let target = |b: &str, l: &str, a: &str| -> Result<Target, String> {
            Ok(Target::new(b.parse()?, l.parse()?, a.parse()?))
        };
        Ok(Posting {
            seq: self.seq,
            step: self.step,
            debit: target(&self.debit_bank, &self.debit_ledger, &self.debit_account)?,
            credit: target(&self.credit_bank, &self.credit_ledger, &self.credit_account)?,
            amount: A::from_i128(self.amount).ok_or_else(|| format!("amount {} out of range", self.amount))?,
            memo: self.memo.parse()?,
        })
    }
}

#[derive(Debug, Error)]
pub enum AuditIoError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Writes the audit log as CSV with a header row.
pub fn write_audit<A: Amount, W: io::Write>(entries: &[Posting<A>], out: W) -> Result<(), AuditIoError> {
    let mut w = csv::Writer::from_writer(out);
    for p in entries {
        w.serialize(AuditRecord::from(p))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_audit<A: Amount, R: io::Read>(input: R) -> Result<Vec<Posting<A>>, AuditIoError> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for (i, rec) in r.deserialize::<AuditRecord>().enumerate() {
        let rec = rec?;
        let p = rec.to_posting().map_err(|msg| AuditIoError::Parse { line: i as u64 + 2, msg })?;
        out.push(p);
    }
    Ok(out)
}
