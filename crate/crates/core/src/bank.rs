//! Commercial bank: regulated lending, loan servicing, salaries, dividends,
//! share sales and default write-offs, all expressed as postings.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::amount::{PerMil, BasisPoints};
use crate::clearing::{bank_inst, bank_reserves, classify_overdraw, draw_legs, government_deposit, reserve_account, settlement_legs, sweep_legs, ClearingError};
use crate::instruments::{IndexSeries, LoanError, LoanState, LoanTerms, PaymentDue};
use crate::ledger::{bank_layout, AccountId, GeneralLedger, LedgerClass, LedgerError, LedgerId, LedgerSet, LedgerSpec, Leg, MemoKind, Target};
use crate::{AgentId, BankId, Money};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SalaryPolicy {
    /// Employees are paid out of interest income (then retained earnings)
    /// whatever they lack to meet the round's loan payment.
    #[default]
    InterestIncomeLoop,
}

/// Per-ledger classification override.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LedgerOverride {
    #[serde(default)]
    pub class: Option<LedgerClass>,
    #[serde(default)]
    pub deposit_class: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BankParams {
    pub reserve_requirement: PerMil,
    pub reserve_control_enabled: bool,
    pub capital_requirement: PerMil,
    pub capital_control_enabled: bool,
    pub default_risk_weight: PerMil,
    /// Provision funded at grant time, per mil of principal.
    pub loss_provision_rate: PerMil,
    /// Dividend per event, per mil of the capital total.
    pub dividend_rate: PerMil,
    pub dividend_stride: u32,
    pub salary_policy: SalaryPolicy,
    /// Consecutive missed payments after which a loan defaults.
    pub arrears_limit: u32,
    pub ledger_classes: BTreeMap<LedgerId, LedgerOverride>,
}

impl Default for BankParams {
    fn default() -> Self {
        BankParams {
            reserve_requirement: PerMil(100),
            reserve_control_enabled: true,
            capital_requirement: PerMil(80),
            capital_control_enabled: false,
            default_risk_weight: PerMil(500),
            loss_provision_rate: PerMil(0),
            dividend_rate: PerMil(0),
            dividend_stride: 12,
            salary_policy: SalaryPolicy::InterestIncomeLoop,
            arrears_limit: 3,
            ledger_classes: BTreeMap::new(),
        }
    }
}

impl BankParams {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("reserve_requirement", self.reserve_requirement),
            ("capital_requirement", self.capital_requirement),
            ("default_risk_weight", self.default_risk_weight),
            ("loss_provision_rate", self.loss_provision_rate),
            ("dividend_rate", self.dividend_rate),
        ] {
            if v.0 > 1000 {
                return Err(format!("{name} must be at most 1000 per mil"));
            }
        }
        if self.dividend_stride == 0 {
            return Err("dividend_stride must be at least 1".into());
        }
        if self.arrears_limit == 0 {
            return Err("arrears_limit must be at least 1".into());
        }
        Ok(())
    }

    /// The bank chart of accounts with this bank's classification overrides applied.
    pub fn layout(&self) -> Vec<LedgerSpec> {
        bank_layout()
            .into_iter()
            .map(|mut s| {
                if let Some(o) = self.ledger_classes.get(&s.id) {
                    s.class = o.class.unwrap_or(s.class);
                    s.deposit_class = o.deposit_class.unwrap_or(s.deposit_class);
                }
                s
            })
            .collect()
    }
}

/// Which regulatory limit refused a loan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    Reserve,
    Capital,
    Both,
    Insolvent,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BankError {
    #[error("reserve requirement is zero with reserve control enabled")]
    DivisionByZeroR,
    #[error("capital requirement is zero with capital control enabled")]
    DivisionByZeroC,
    #[error("insufficient capacity ({0:?}-bound)")]
    InsufficientCapacity(Constraint),
    #[error("agent {0} has no deposit account")]
    NoAccount(AgentId),
    #[error("agent {0} already has a loan at this bank")]
    AlreadyBorrowing(AgentId),
    #[error("agent {0} has no active loan at this bank")]
    NoSuchLoan(AgentId),
    #[error("agent {borrower} missed a payment of {due} holding {balance}")]
    MissedPayment { borrower: AgentId, due: Money, balance: Money },
    #[error("bank {bank} cannot settle {amount} in reserves")]
    SettlementFailure { bank: BankId, amount: Money },
    #[error("amount must be positive")]
    NonPositiveAmount,
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Loan(#[from] LoanError),
}

impl From<ClearingError> for BankError {
    fn from(e: ClearingError) -> Self {
        match e {
            ClearingError::InsufficientReserves { bank, amount } => BankError::SettlementFailure { bank, amount },
            ClearingError::Ledger(l) => BankError::Ledger(l),
            ClearingError::NonPositiveAmount => BankError::NonPositiveAmount,
            other => BankError::Ledger(LedgerError::NonPositiveAmount(other.to_string())),
        }
    }
}

fn overdraw(e: LedgerError, amount: Money) -> BankError {
    classify_overdraw(e, amount).into()
}

/// A loan on the bank's book.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BookLoan {
    pub borrower: AgentId,
    /// Bank holding the borrower's deposit account.
    pub account_bank: BankId,
    pub granted_step: u32,
    pub missed: u32,
    pub state: LoanState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PaymentOutcome {
    pub due: PaymentDue,
    /// Reserves moved to this bank from the borrower's bank; zero when local.
    pub settled: Money,
    pub repaid: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DefaultOutcome {
    pub written_off: Money,
    pub from_provision: Money,
    pub from_income: Money,
    pub from_retained: Money,
    pub from_capital: Money,
    /// Loss not covered by provisions, income, earnings or capital; stays on
    /// the loans ledger as an impaired balance.
    pub uncovered: Money,
    pub insolvent: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SalaryRequest {
    pub employee: AgentId,
    pub account_bank: BankId,
    /// Net amount the employee must receive.
    pub amount: Money,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SalaryReport {
    /// (employee, gross salary) in payment order.
    pub paid: Vec<(AgentId, Money)>,
    pub unpaid: Vec<AgentId>,
    pub tax: Money,
    pub failures: Vec<(AgentId, BankError)>,
}

impl SalaryReport {
    pub fn gross(&self) -> Money {
        self.paid.iter().map(|(_, g)| g).sum()
    }
}

/// How an investor pays for new shares.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShareFunding {
    /// Cash in hand, outside the banking system.
    Cash,
    /// The investor's deposit at the issuing bank, withdrawn as cash first.
    Deposit,
}

/// Smallest gross salary whose after-tax amount covers `net`.
pub fn gross_for_net(net: Money, tax_rate: PerMil) -> Money {
    if tax_rate.0 >= 1000 {
        return 0;
    }
    let keep = 1000 - tax_rate.0 as i128;
    let mut gross = ((net as i128 * 1000 + keep - 1) / keep) as Money;
    while gross - tax_rate.of(gross) < net {
        gross += 1;
    }
    while gross > 0 && (gross - 1) - tax_rate.of(gross - 1) >= net {
        gross -= 1;
    }
    gross
}

#[derive(Debug, Clone)]
pub struct BankState {
    pub id: BankId,
    pub params: BankParams,
    pub loans: BTreeMap<AgentId, BookLoan>,
    pub employees: Vec<AgentId>,
    /// Share register: investor → shares held (one share per minor unit paid in).
    pub shareholders: BTreeMap<AgentId, Money>,
    pub insolvent: bool,
    /// Written-off principal left on the loans ledger after the cascade ran dry.
    pub impaired: Money,
    /// Principal granted since the last [`BankState::begin_step`].
    pub new_lending: Money,
    /// Set when a loan request was refused since the last `begin_step`.
    pub binding: Option<Constraint>,
}

impl BankState {
    pub fn new(id: BankId, params: BankParams) -> Self {
        BankState {
            id,
            params,
            loans: BTreeMap::new(),
            employees: Vec::new(),
            shareholders: BTreeMap::new(),
            insolvent: false,
            impaired: 0,
            new_lending: 0,
            binding: None,
        }
    }

    /// Adds this bank's general ledger (with its house accounts) to `set`.
    pub fn open_books(&self, set: &mut LedgerSet) -> Result<(), LedgerError> {
        set.add_institution(GeneralLedger::new(self.inst(), &self.params.layout()));
        for l in [LedgerId::Cash, LedgerId::Reserves, LedgerId::InterestIncome, LedgerId::LossProvision, LedgerId::RetainedEarnings] {
            set.open_account(self.house(l))?;
        }
        set.open_account(reserve_account(self.id))
    }

    pub fn inst(&self) -> crate::ledger::InstitutionId {
        bank_inst(self.id)
    }

    pub fn house(&self, l: LedgerId) -> Target {
        Target::house(self.inst(), l)
    }

    fn gl<'a>(&self, set: &'a LedgerSet) -> &'a GeneralLedger {
        set.gl(self.inst()).expect("bank books opened")
    }

    pub fn begin_step(&mut self) {
        self.new_lending = 0;
        self.binding = None;
    }

    pub fn reserves(&self, set: &LedgerSet) -> Money {
        set.total(self.inst(), LedgerId::Reserves)
    }

    pub fn capital_total(&self, set: &LedgerSet) -> Money {
        self.gl(set).class_total(LedgerClass::Capital)
    }

    pub fn deposit_class_total(&self, set: &LedgerSet) -> Money {
        self.gl(set).deposit_class_total()
    }

    /// Σ outstanding over active loans.
    pub fn loan_book(&self) -> Money {
        self.loans.values().map(|l| l.state.outstanding).sum()
    }

    /// Σ w_i × outstanding_i in per-mil-scaled minor units.
    fn weighted_exposure_scaled(&self) -> i128 {
        self.loans
            .values()
            .map(|l| l.state.terms.risk_weight.0 as i128 * l.state.outstanding as i128)
            .sum()
    }

    /// `max(0, reserves / R − Σ deposit-class ledgers)`, rounded down.
    pub fn reserve_loan_capacity(&self, set: &LedgerSet) -> Result<Money, BankError> {
        let r = self.params.reserve_requirement.0 as i128;
        if r == 0 {
            return Err(BankError::DivisionByZeroR);
        }
        let limit = self.reserves(set) as i128 * 1000 / r;
        Ok((limit - self.deposit_class_total(set) as i128).max(0) as Money)
    }

    fn capital_capacity_scaled(&self, set: &LedgerSet) -> Result<i128, BankError> {
        let c = self.params.capital_requirement.0 as i128;
        if c == 0 {
            return Err(BankError::DivisionByZeroC);
        }
        let limit = self.capital_total(set) as i128 * 1_000_000 / c;
        Ok((limit - self.weighted_exposure_scaled()).max(0))
    }

    /// Remaining risk-weighted exposure the capital ledger supports:
    /// `max(0, capital / C − Σ w_i × outstanding_i)`, rounded down.
    pub fn capital_loan_capacity(&self, set: &LedgerSet) -> Result<Money, BankError> {
        Ok((self.capital_capacity_scaled(set)? / 1000) as Money)
    }

    /// Whether every enabled control admits a loan of `principal` at weight `w`.
    pub fn check_capacity(&self, set: &LedgerSet, principal: Money, w: PerMil) -> Result<(), BankError> {
        if self.insolvent {
            return Err(BankError::InsufficientCapacity(Constraint::Insolvent));
        }
        let reserve_ok = !self.params.reserve_control_enabled || self.reserve_loan_capacity(set)? >= principal;
        let capital_ok = !self.params.capital_control_enabled
            || self.capital_capacity_scaled(set)? >= w.0 as i128 * principal as i128;
        match (reserve_ok, capital_ok) {
            (true, true) => Ok(()),
            (false, true) => Err(BankError::InsufficientCapacity(Constraint::Reserve)),
            (true, false) => Err(BankError::InsufficientCapacity(Constraint::Capital)),
            (false, false) => Err(BankError::InsufficientCapacity(Constraint::Both)),
        }
    }

    /// Reserves above this bank's own requirement, available to lend overnight.
    pub fn spare_reserves(&self, set: &LedgerSet) -> Money {
        let reserves = self.reserves(set);
        let required = if self.params.reserve_control_enabled {
            let d = self.deposit_class_total(set) as i128 * self.params.reserve_requirement.0 as i128;
            ((d + 999) / 1000) as Money
        } else {
            0
        };
        (reserves - required).max(0)
    }

    /// Legs moving up to `amount` out of interest income, then retained
    /// earnings, into `credit`. Returns the legs and the amount covered.
    fn from_earnings(&self, set: &LedgerSet, credit: Target, amount: Money, kind: MemoKind) -> (Vec<Leg>, Money) {
        let mut legs = Vec::new();
        let mut left = amount;
        for l in [LedgerId::InterestIncome, LedgerId::RetainedEarnings] {
            let take = set.balance(self.house(l)).min(left);
            if take > 0 {
                legs.push(Leg::new(self.house(l), credit, take, kind));
                left -= take;
            }
        }
        (legs, amount - left)
    }

    fn earnings_available(&self, set: &LedgerSet) -> Money {
        set.balance(self.house(LedgerId::InterestIncome)) + set.balance(self.house(LedgerId::RetainedEarnings))
    }

    /// Grants a loan if every enabled control allows it. The principal is
    /// credited to the borrower's deposit at `account_bank`, settling through
    /// reserves when that is another bank.
    pub fn grant_loan(&mut self, set: &mut LedgerSet, borrower: AgentId, account_bank: BankId, terms: LoanTerms, step: u32) -> Result<&BookLoan, BankError> {
        if self.loans.contains_key(&borrower) {
            return Err(BankError::AlreadyBorrowing(borrower));
        }
        let state = LoanState::new(terms)?;
        if let Err(e) = self.check_capacity(set, terms.principal, terms.risk_weight) {
            if let BankError::InsufficientCapacity(c) = e {
                self.binding = Some(c);
            }
            return Err(e);
        }
        let deposit = Target::new(bank_inst(account_bank), LedgerId::Deposits, AccountId::Agent(borrower));
        if !set.has_account(deposit) {
            return Err(BankError::NoAccount(borrower));
        }
        let loan_acct = Target::new(self.inst(), LedgerId::Loans, AccountId::Agent(borrower));
        set.open_account(loan_acct)?;
        let p = terms.principal;
        let mut legs = if account_bank == self.id {
            vec![Leg::new(loan_acct, deposit, p, MemoKind::LoanGrant)]
        } else {
            settlement_legs(self.id, account_bank, p, loan_acct, deposit, MemoKind::Disbursement).to_vec()
        };
        let provision = self.params.loss_provision_rate.of(p);
        if provision > 0 {
            legs.extend(self.from_earnings(set, self.house(LedgerId::LossProvision), provision, MemoKind::Provision).0);
        }
        set.post_all(&legs).map_err(|e| overdraw(e, p))?;
        self.new_lending += p;
        let loan = BookLoan { borrower, account_bank, granted_step: step, missed: 0, state };
        Ok(self.loans.entry(borrower).or_insert(loan))
    }

    /// Posts any index re-basing due for the loan's current period.
    fn apply_indexation(&mut self, set: &mut LedgerSet, borrower: AgentId, index: Option<&IndexSeries>) -> Result<(), BankError> {
        let Some(index) = index else { return Ok(()) };
        let inst = self.inst();
        let loan = self.loans.get_mut(&borrower).ok_or(BankError::NoSuchLoan(borrower))?;
        let delta = loan.state.rebase(index)?;
        let loan_acct = Target::new(inst, LedgerId::Loans, AccountId::Agent(borrower));
        let income = Target::house(inst, LedgerId::InterestIncome);
        if delta > 0 {
            set.post(loan_acct, income, delta, MemoKind::Indexation)?;
        } else if delta < 0 {
            set.post(income, loan_acct, -delta, MemoKind::Indexation)?;
        }
        Ok(())
    }

    /// Collects the current period's payment from the borrower's deposit. A
    /// borrower who cannot pay the full amount misses the payment and
    /// nothing is posted.
    pub fn process_payment(&mut self, set: &mut LedgerSet, borrower: AgentId, index: Option<&IndexSeries>) -> Result<PaymentOutcome, BankError> {
        self.apply_indexation(set, borrower, index)?;
        let loan = self.loans.get(&borrower).ok_or(BankError::NoSuchLoan(borrower))?;
        let due = loan.state.next_due().ok_or(BankError::NoSuchLoan(borrower))?;
        let account_bank = loan.account_bank;
        let deposit = Target::new(bank_inst(account_bank), LedgerId::Deposits, AccountId::Agent(borrower));
        let balance = set.balance(deposit);
        if balance < due.total() {
            self.loans.get_mut(&borrower).expect("present").missed += 1;
            return Err(BankError::MissedPayment { borrower, due: due.total(), balance });
        }
        let settled = if account_bank == self.id {
            self.process_payment_local(set, borrower, due)?;
            0
        } else {
            self.process_payment_interbank(set, borrower, account_bank, due)?;
            due.total()
        };
        let loan = self.loans.get_mut(&borrower).expect("present");
        loan.state.apply_payment(due.total())?;
        loan.missed = 0;
        let repaid = !loan.state.is_active();
        if repaid {
            self.loans.remove(&borrower);
        }
        Ok(PaymentOutcome { due, settled, repaid })
    }

    fn process_payment_local(&self, set: &mut LedgerSet, borrower: AgentId, due: PaymentDue) -> Result<(), BankError> {
        let deposit = Target::new(self.inst(), LedgerId::Deposits, AccountId::Agent(borrower));
        let loan_acct = Target::new(self.inst(), LedgerId::Loans, AccountId::Agent(borrower));
        set.post_all(&[
            Leg::new(deposit, self.house(LedgerId::InterestIncome), due.interest, MemoKind::Interest),
            Leg::new(deposit, loan_acct, due.principal, MemoKind::Principal),
        ])?;
        Ok(())
    }

    fn process_payment_interbank(&self, set: &mut LedgerSet, borrower: AgentId, account_bank: BankId, due: PaymentDue) -> Result<(), BankError> {
        let deposit = Target::new(bank_inst(account_bank), LedgerId::Deposits, AccountId::Agent(borrower));
        let loan_acct = Target::new(self.inst(), LedgerId::Loans, AccountId::Agent(borrower));
        let total = due.total();
        let legs = [
            Leg::new(deposit, bank_reserves(account_bank), total, MemoKind::Settlement),
            Leg::new(reserve_account(account_bank), reserve_account(self.id), total, MemoKind::Settlement),
            Leg::new(bank_reserves(self.id), self.house(LedgerId::InterestIncome), due.interest, MemoKind::Interest),
            Leg::new(bank_reserves(self.id), loan_acct, due.principal, MemoKind::Principal),
        ];
        set.post_all(&legs).map_err(|e| overdraw(e, total))?;
        Ok(())
    }

    /// Writes off the borrower's loan against provisions, then interest
    /// income, retained earnings and capital. A loss the cascade cannot cover
    /// leaves the bank insolvent.
    pub fn handle_default(&mut self, set: &mut LedgerSet, borrower: AgentId) -> Result<DefaultOutcome, BankError> {
        let loan = self.loans.get_mut(&borrower).ok_or(BankError::NoSuchLoan(borrower))?;
        let outstanding = loan.state.write_off()?;
        self.loans.remove(&borrower);
        let loan_acct = Target::new(self.inst(), LedgerId::Loans, AccountId::Agent(borrower));
        let mut out = DefaultOutcome { written_off: outstanding, ..Default::default() };
        let mut left = outstanding;
        let mut legs = Vec::new();
        let mut take_from = |source: Target, avail: Money, left: &mut Money| -> Money {
            let take = avail.min(*left);
            if take > 0 {
                legs.push(Leg::new(source, loan_acct, take, MemoKind::WriteOff));
                *left -= take;
            }
            take
        };
        for (l, slot) in [
            (LedgerId::LossProvision, &mut out.from_provision),
            (LedgerId::InterestIncome, &mut out.from_income),
            (LedgerId::RetainedEarnings, &mut out.from_retained),
        ] {
            let t = self.house(l);
            *slot = take_from(t, set.balance(t), &mut left);
        }
        let capital: Vec<(AccountId, Money)> = self
            .gl(set)
            .ledger(LedgerId::Capital)
            .map(|l| l.accounts().collect())
            .unwrap_or_default();
        for (acct, bal) in capital {
            let t = Target::new(self.inst(), LedgerId::Capital, acct);
            out.from_capital += take_from(t, bal, &mut left);
        }
        set.post_all(&legs)?;
        out.uncovered = left;
        if left > 0 {
            self.impaired += left;
            self.insolvent = true;
            out.insolvent = true;
        }
        Ok(out)
    }

    /// Pays each request in order, out of interest income then retained
    /// earnings, until earnings run short. `tax_rate` is withheld from the
    /// gross salary and paid to the government's central-bank deposit.
    pub fn pay_salaries(&self, set: &mut LedgerSet, requests: &[SalaryRequest], tax_rate: PerMil) -> SalaryReport {
        let mut report = SalaryReport::default();
        let mut exhausted = false;
        for req in requests {
            if req.amount <= 0 {
                continue;
            }
            if exhausted {
                report.unpaid.push(req.employee);
                continue;
            }
            let gross = gross_for_net(req.amount, tax_rate);
            let tax = tax_rate.of(gross);
            let net = gross - tax;
            if self.earnings_available(set) < gross {
                exhausted = true;
                report.unpaid.push(req.employee);
                continue;
            }
            let deposit = Target::new(bank_inst(req.account_bank), LedgerId::Deposits, AccountId::Agent(req.employee));
            if let Err(e) = set.open_account(deposit) {
                report.failures.push((req.employee, e.into()));
                continue;
            }
            let mut legs = Vec::new();
            if req.account_bank == self.id {
                legs.extend(self.from_earnings(set, deposit, net, MemoKind::Salary).0);
            } else {
                let (mut src, _) = self.from_earnings(set, bank_reserves(self.id), net, MemoKind::Salary);
                legs.append(&mut src);
                legs.push(Leg::new(reserve_account(self.id), reserve_account(req.account_bank), net, MemoKind::Settlement));
                legs.push(Leg::new(bank_reserves(req.account_bank), deposit, net, MemoKind::Salary));
            }
            if tax > 0 {
                // earnings already committed to the net salary
                let (income_left, retained_left) = remaining_after(set, self, &legs);
                let from_income = income_left.min(tax);
                let from_retained = (tax - from_income).min(retained_left);
                legs.push(Leg::new(self.house(LedgerId::InterestIncome), bank_reserves(self.id), from_income, MemoKind::Tax));
                legs.push(Leg::new(self.house(LedgerId::RetainedEarnings), bank_reserves(self.id), from_retained, MemoKind::Tax));
                legs.push(Leg::new(reserve_account(self.id), government_deposit(), tax, MemoKind::Tax));
            }
            match set.post_all(&legs) {
                Ok(_) => {
                    report.paid.push((req.employee, gross));
                    report.tax += tax;
                }
                Err(e) => report.failures.push((req.employee, overdraw(e, gross))),
            }
        }
        report
    }

    /// Pays `dividend_rate` of the capital total pro rata to shareholders'
    /// deposits at this bank. Skipped entirely when earnings fall short.
    /// Returns the amounts paid by investor.
    pub fn pay_dividends(&self, set: &mut LedgerSet) -> Result<Vec<(AgentId, Money)>, BankError> {
        let shares: Money = self.shareholders.values().sum();
        let total = self.params.dividend_rate.of(self.capital_total(set));
        if shares <= 0 || total <= 0 || self.earnings_available(set) < total {
            return Ok(Vec::new());
        }
        let mut paid: Vec<(AgentId, Money)> = self
            .shareholders
            .iter()
            .map(|(id, s)| (*id, (total as i128 * *s as i128 / shares as i128) as Money))
            .collect();
        let mut residue = total - paid.iter().map(|(_, a)| a).sum::<Money>();
        for (_, a) in paid.iter_mut() {
            if residue == 0 {
                break;
            }
            *a += 1;
            residue -= 1;
        }
        let mut legs = Vec::new();
        let mut income = set.balance(self.house(LedgerId::InterestIncome));
        for (id, amount) in &paid {
            let deposit = Target::new(self.inst(), LedgerId::Deposits, AccountId::Agent(*id));
            set.open_account(deposit)?;
            let from_income = income.min(*amount);
            income -= from_income;
            legs.push(Leg::new(self.house(LedgerId::InterestIncome), deposit, from_income, MemoKind::Dividend));
            legs.push(Leg::new(self.house(LedgerId::RetainedEarnings), deposit, amount - from_income, MemoKind::Dividend));
        }
        set.post_all(&legs)?;
        paid.retain(|(_, a)| *a > 0);
        Ok(paid)
    }

    /// Sells `amount` of new shares to `investor`: cash is paid into capital
    /// and swept into the bank's reserve account.
    pub fn sell_shares(&mut self, set: &mut LedgerSet, investor: AgentId, amount: Money, funding: ShareFunding) -> Result<(), BankError> {
        if amount <= 0 {
            return Err(BankError::NonPositiveAmount);
        }
        let capital = Target::new(self.inst(), LedgerId::Capital, AccountId::Agent(investor));
        set.open_account(capital)?;
        let cash = self.house(LedgerId::Cash);
        let mut legs = Vec::new();
        if funding == ShareFunding::Deposit {
            let deposit = Target::new(self.inst(), LedgerId::Deposits, AccountId::Agent(investor));
            legs.extend(draw_legs(self.id, amount));
            legs.push(Leg::new(deposit, cash, amount, MemoKind::CashWithdrawal));
        }
        legs.push(Leg::new(cash, capital, amount, MemoKind::ShareSale));
        legs.extend(sweep_legs(self.id, amount));
        set.post_all(&legs).map_err(|e| overdraw(e, amount))?;
        *self.shareholders.entry(investor).or_insert(0) += amount;
        Ok(())
    }

    /// Contract rate for a new loan at the given base rate.
    pub fn loan_rate(&self, base_rate: BasisPoints) -> BasisPoints {
        base_rate
    }
}

/// Interest income and retained earnings left after `legs` are applied.
fn remaining_after(set: &LedgerSet, bank: &BankState, legs: &[Leg]) -> (Money, Money) {
    let spent = |l: LedgerId| -> Money {
        let t = bank.house(l);
        legs.iter().filter(|g| g.debit == t).map(|g| g.amount).sum()
    };
    (
        set.balance(bank.house(LedgerId::InterestIncome)) - spent(LedgerId::InterestIncome),
        set.balance(bank.house(LedgerId::RetainedEarnings)) - spent(LedgerId::RetainedEarnings),
    )
}
