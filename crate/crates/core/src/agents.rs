//! Non-bank actors: borrowers with loan windows, savers, dividend-reinvesting
//! investors and a government with a flat salary tax and treasuries.
//!
//! Agents act only by asking banks to post transactions. The engine drives
//! them in id order within each phase of a step.

use serde::{Deserialize, Serialize};

use crate::amount::{BasisPoints, PerMil};
use crate::bank::{BankError, BankState, PaymentOutcome, ShareFunding};
use crate::clearing::{bank_inst, bank_reserves, government_deposit, reserve_account};
use crate::instruments::{annuity_payment, IndexSeries, Instrument, LoanTerms};
use crate::ledger::{AccountId, LedgerId, LedgerSet, Leg, MemoKind, Target};
use crate::{AgentId, BankId, Money};

fn one() -> u32 {
    1
}

fn twelve() -> u32 {
    12
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BorrowerGroup {
    #[serde(default = "one")]
    pub count: u32,
    pub bank_of_account: BankId,
    /// Bank asked for loans; defaults to the account bank.
    #[serde(default)]
    pub lender_bank: Option<BankId>,
    /// Bank paying the borrower's salary; defaults to the lender.
    #[serde(default)]
    pub employer_bank: Option<BankId>,
    pub principal: Money,
    pub periods: u32,
    /// Loan window stride L: requests only at steps where `step % L == id % L`.
    #[serde(default = "one")]
    pub loan_window: u32,
    #[serde(default)]
    pub initial_deposit: Money,
    #[serde(default)]
    pub instrument: Instrument,
    /// Defaults to the lender's `default_risk_weight`.
    #[serde(default)]
    pub risk_weight: Option<PerMil>,
    /// Stop borrowing after this many loans.
    #[serde(default)]
    pub max_loans: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaverGroup {
    #[serde(default = "one")]
    pub count: u32,
    pub bank: BankId,
    pub cash_endowment: Money,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InvestorGroup {
    #[serde(default = "one")]
    pub count: u32,
    pub bank: BankId,
    /// Paid in as share capital at initialization.
    pub cash_endowment: Money,
    #[serde(default = "twelve")]
    pub reinvest_stride: u32,
    #[serde(default = "yes")]
    pub reinvest: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreasuryConfig {
    pub bank: BankId,
    pub principal: Money,
    pub rate_bp: u32,
    pub term: u32,
    #[serde(default)]
    pub issue_step: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GovernmentConfig {
    #[serde(default)]
    pub tax_rate: PerMil,
    /// Initial government deposit at the central bank.
    #[serde(default)]
    pub cash_endowment: Money,
    #[serde(default)]
    pub treasuries: Vec<TreasuryConfig>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentsConfig {
    #[serde(default)]
    pub borrowers: Vec<BorrowerGroup>,
    #[serde(default)]
    pub savers: Vec<SaverGroup>,
    #[serde(default)]
    pub investors: Vec<InvestorGroup>,
    #[serde(default)]
    pub government: GovernmentConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Borrower {
    pub id: AgentId,
    pub bank_of_account: BankId,
    pub lender_bank: BankId,
    pub employer_bank: BankId,
    pub principal: Money,
    pub periods: u32,
    pub loan_window: u32,
    pub initial_deposit: Money,
    pub instrument: Instrument,
    pub risk_weight: Option<PerMil>,
    pub max_loans: Option<u32>,
    pub loans_taken: u32,
    /// Lender of the loan in progress.
    pub current_loan: Option<BankId>,
}

impl Borrower {
    pub fn window_open(&self, step: u32) -> bool {
        step % self.loan_window == self.id % self.loan_window
    }

    pub fn wants_loan(&self, step: u32) -> bool {
        self.current_loan.is_none() && self.window_open(step) && self.max_loans.is_none_or(|m| self.loans_taken < m)
    }

    pub fn deposit(&self) -> Target {
        Target::new(bank_inst(self.bank_of_account), LedgerId::Deposits, AccountId::Agent(self.id))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Saver {
    pub id: AgentId,
    pub bank: BankId,
    pub cash_endowment: Money,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Investor {
    pub id: AgentId,
    pub bank: BankId,
    pub cash_endowment: Money,
    pub reinvest_stride: u32,
    pub reinvest: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TreasuryStatus {
    Pending,
    Outstanding,
    Redeemed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Treasury {
    pub bank: BankId,
    pub principal: Money,
    pub rate: BasisPoints,
    pub term: u32,
    pub issue_step: u32,
    pub periods_paid: u32,
    pub status: TreasuryStatus,
}

impl Treasury {
    pub fn coupon(&self) -> Money {
        self.rate.monthly_interest(self.principal)
    }

    /// Coupon plus, in the final period, the principal.
    pub fn due(&self) -> Money {
        self.coupon() + if self.periods_paid + 1 == self.term { self.principal } else { 0 }
    }

    fn holding(&self) -> Target {
        Target::new(bank_inst(self.bank), LedgerId::Treasuries, AccountId::Government)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Government {
    pub tax_rate: PerMil,
    /// Tax receipts not yet spent on treasury service.
    pub tax_income: Money,
    pub tax_collected: Money,
    pub treasuries: Vec<Treasury>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GovernmentAction {
    Issued { bank: BankId, principal: Money },
    IssueFailed { bank: BankId, principal: Money },
    Paid { bank: BankId, coupon: Money, principal: Money },
    Illiquid { bank: BankId, due: Money, available: Money },
}

impl Government {
    pub fn record_tax(&mut self, amount: Money) {
        self.tax_income += amount;
        self.tax_collected += amount;
    }

    /// Issues treasuries due this step and services outstanding ones out of
    /// tax receipts. A payment the receipts cannot cover is skipped and
    /// reported; it stays due.
    pub fn step(&mut self, set: &mut LedgerSet, step: u32) -> Vec<GovernmentAction> {
        let mut out = Vec::new();
        for t in &mut self.treasuries {
            match t.status {
                TreasuryStatus::Pending if t.issue_step == step => {
                    let bank = t.bank;
                    set.open_account(t.holding()).expect("bank books opened");
                    let legs = [
                        Leg::new(t.holding(), bank_reserves(bank), t.principal, MemoKind::TreasuryIssue),
                        Leg::new(reserve_account(bank), government_deposit(), t.principal, MemoKind::TreasuryIssue),
                    ];
                    if set.post_all(&legs).is_ok() {
                        t.status = TreasuryStatus::Outstanding;
                        out.push(GovernmentAction::Issued { bank, principal: t.principal });
                    } else {
                        out.push(GovernmentAction::IssueFailed { bank, principal: t.principal });
                    }
                }
                TreasuryStatus::Outstanding if step > t.issue_step => {
                    let due = t.due();
                    if due > self.tax_income || set.balance(government_deposit()) < due {
                        out.push(GovernmentAction::Illiquid { bank: t.bank, due, available: self.tax_income });
                        continue;
                    }
                    let coupon = t.coupon();
                    let principal = due - coupon;
                    let income = Target::house(bank_inst(t.bank), LedgerId::InterestIncome);
                    let legs = [
                        Leg::new(government_deposit(), reserve_account(t.bank), due, MemoKind::TreasuryCoupon),
                        Leg::new(bank_reserves(t.bank), income, coupon, MemoKind::TreasuryCoupon),
                        Leg::new(bank_reserves(t.bank), t.holding(), principal, MemoKind::TreasuryRedemption),
                    ];
                    set.post_all(&legs).expect("funds checked");
                    self.tax_income -= due;
                    t.periods_paid += 1;
                    if t.periods_paid == t.term {
                        t.status = TreasuryStatus::Redeemed;
                    }
                    out.push(GovernmentAction::Paid { bank: t.bank, coupon, principal });
                }
                _ => {}
            }
        }
        out
    }
}

/// Every agent in the simulation, with ids assigned in order: borrowers,
/// then savers, then investors.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Roster {
    pub borrowers: Vec<Borrower>,
    pub savers: Vec<Saver>,
    pub investors: Vec<Investor>,
    pub government: Government,
}

impl Roster {
    pub fn from_config(cfg: &AgentsConfig) -> Roster {
        let mut next: AgentId = 0;
        let mut take = || {
            let id = next;
            next += 1;
            id
        };
        let mut roster = Roster::default();
        for g in &cfg.borrowers {
            let lender = g.lender_bank.unwrap_or(g.bank_of_account);
            for _ in 0..g.count {
                roster.borrowers.push(Borrower {
                    id: take(),
                    bank_of_account: g.bank_of_account,
                    lender_bank: lender,
                    employer_bank: g.employer_bank.unwrap_or(lender),
                    principal: g.principal,
                    periods: g.periods,
                    loan_window: g.loan_window.max(1),
                    initial_deposit: g.initial_deposit,
                    instrument: g.instrument,
                    risk_weight: g.risk_weight,
                    max_loans: g.max_loans,
                    loans_taken: 0,
                    current_loan: None,
                });
            }
        }
        for g in &cfg.savers {
            for _ in 0..g.count {
                roster.savers.push(Saver { id: take(), bank: g.bank, cash_endowment: g.cash_endowment });
            }
        }
        for g in &cfg.investors {
            for _ in 0..g.count {
                roster.investors.push(Investor {
                    id: take(),
                    bank: g.bank,
                    cash_endowment: g.cash_endowment,
                    reinvest_stride: g.reinvest_stride.max(1),
                    reinvest: g.reinvest,
                });
            }
        }
        roster.government = Government {
            tax_rate: cfg.government.tax_rate,
            treasuries: cfg
                .government
                .treasuries
                .iter()
                .map(|t| Treasury {
                    bank: t.bank,
                    principal: t.principal,
                    rate: BasisPoints(t.rate_bp),
                    term: t.term,
                    issue_step: t.issue_step,
                    periods_paid: 0,
                    status: TreasuryStatus::Pending,
                })
                .collect(),
            ..Default::default()
        };
        roster
    }

    pub fn borrower(&self, id: AgentId) -> Option<&Borrower> {
        self.borrowers.get(id as usize).filter(|b| b.id == id)
    }
}

/// What a borrower still lacks to meet this round's payment, or `None`
/// without a loan in progress.
pub fn payment_shortfall(b: &Borrower, banks: &[BankState], set: &LedgerSet) -> Option<Money> {
    let lender = &banks[b.current_loan? as usize];
    let due = lender.loans.get(&b.id)?.state.next_due()?.total();
    Some((due - set.balance(b.deposit())).max(0))
}

/// Makes the borrower's due payment, if any.
pub fn borrower_pay(b: &mut Borrower, banks: &mut [BankState], set: &mut LedgerSet, index: Option<&IndexSeries>) -> Option<Result<PaymentOutcome, BankError>> {
    let lender = b.current_loan?;
    let index = index.filter(|_| b.instrument == Instrument::Indexed);
    let res = banks[lender as usize].process_payment(set, b.id, index);
    match &res {
        Ok(out) if out.repaid => b.current_loan = None,
        Err(BankError::NoSuchLoan(_)) => b.current_loan = None,
        _ => {}
    }
    Some(res)
}

/// Asks the lender for a loan when the borrower's window is open and it has
/// no loan in progress. New loans are priced at the current base rate.
pub fn borrower_request(b: &mut Borrower, banks: &mut [BankState], set: &mut LedgerSet, step: u32, base_rate: BasisPoints) -> Option<Result<LoanTerms, BankError>> {
    if !b.wants_loan(step) {
        return None;
    }
    let lender = &mut banks[b.lender_bank as usize];
    let terms = LoanTerms {
        principal: b.principal,
        annual_rate: lender.loan_rate(base_rate),
        periods: b.periods,
        instrument: b.instrument,
        risk_weight: b.risk_weight.unwrap_or(lender.params.default_risk_weight),
    };
    let res = lender.grant_loan(set, b.id, b.bank_of_account, terms, step).map(|_| terms);
    if res.is_ok() {
        b.current_loan = Some(b.lender_bank);
        b.loans_taken += 1;
    }
    Some(res)
}

/// Converts the investor's deposit (dividend receipts) into new shares at
/// each reinvestment event. Returns the amount reinvested.
pub fn investor_step(i: &Investor, bank: &mut BankState, set: &mut LedgerSet, step: u32) -> Result<Money, BankError> {
    if !i.reinvest || step == 0 || !step.is_multiple_of(i.reinvest_stride) {
        return Ok(0);
    }
    let deposit = Target::new(bank.inst(), LedgerId::Deposits, AccountId::Agent(i.id));
    let amount = set.balance(deposit);
    if amount <= 0 {
        return Ok(0);
    }
    bank.sell_shares(set, i.id, amount, ShareFunding::Deposit)?;
    Ok(amount)
}

/// Outcome of one sizing rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PopulationCheck {
    pub rule: &'static str,
    pub pass: bool,
    pub detail: String,
}

/// Checks the population-sizing guidelines for each borrower group and bank.
/// Failures are warnings; they never block a run.
pub fn validate_population(agents: &AgentsConfig, banks: &[crate::bank::BankParams], base_rate: BasisPoints) -> Vec<PopulationCheck> {
    let mut out = Vec::new();
    let mut cash = vec![0 as Money; banks.len()];
    let mut capital = vec![0 as Money; banks.len()];
    for g in &agents.borrowers {
        if let Some(c) = cash.get_mut(g.bank_of_account as usize) {
            *c += g.initial_deposit * g.count as Money;
        }
    }
    for s in &agents.savers {
        if let Some(c) = cash.get_mut(s.bank as usize) {
            *c += s.cash_endowment * s.count as Money;
        }
    }
    for i in &agents.investors {
        if let Some(c) = capital.get_mut(i.bank as usize) {
            *c += i.cash_endowment * i.count as Money;
        }
    }
    for (n, g) in agents.borrowers.iter().enumerate() {
        let l = g.loan_window.max(1);
        let count: u32 = agents
            .borrowers
            .iter()
            .filter(|o| o.loan_window.max(1) == l && o.lender_bank.unwrap_or(o.bank_of_account) == g.lender_bank.unwrap_or(g.bank_of_account))
            .map(|o| o.count)
            .sum();
        out.push(PopulationCheck {
            rule: "borrowers_per_window",
            pass: count >= 5 * l,
            detail: format!("group {n}: {count} borrowers for window {l} (want at least {})", 5 * l),
        });
        let lender = g.lender_bank.unwrap_or(g.bank_of_account) as usize;
        if let Some(p) = banks.get(lender) {
            if p.reserve_control_enabled {
                let need = (l as i128 * g.principal as i128 * p.reserve_requirement.0 as i128 / 1000) as Money;
                let have = cash[lender] + capital[lender];
                out.push(PopulationCheck {
                    rule: "reserve_cash",
                    pass: have >= need,
                    detail: format!("bank {lender}: asset cash {have} for L x D x R = {need}"),
                });
            }
        }
        let first = annuity_payment(g.principal, base_rate, g.periods.max(1));
        out.push(PopulationCheck {
            rule: "first_payment_deposit",
            pass: g.initial_deposit >= first,
            detail: format!("group {n}: initial deposit {} for first payment {first}", g.initial_deposit),
        });
    }
    for (b, p) in banks.iter().enumerate() {
        if p.capital_control_enabled {
            let need = p.capital_requirement.of(capital[b]);
            let have = cash[b] + capital[b];
            out.push(PopulationCheck {
                rule: "capital_cash",
                pass: have >= need,
                detail: format!("bank {b}: asset cash {have} for capital x C = {need}"),
            });
        }
    }
    out
}

/// Warnings only.
pub fn population_warnings(checks: &[PopulationCheck]) -> Vec<&PopulationCheck> {
    checks.iter().filter(|c| !c.pass).collect()
}
