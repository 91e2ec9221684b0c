//! World state and the fixed-order step loop.

use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use thiserror::Error;

use super::config::{check_value, ConfigError, ParamPath, SimulationConfig};
use super::events::{ChangeSource, DefaultCause, Event, EventCounts, EventKind};
use super::snapshot::{BankSnapshot, Snapshot};
use crate::agents::{self, validate_population, GovernmentAction, PopulationCheck, Roster};
use crate::amount::{BasisPoints, PerMil};
use crate::bank::{BankError, BankState, SalaryRequest, ShareFunding};
use crate::clearing::{government_account_ops, government_deposit, sweep_legs, CentralBank, GovernmentOp, CB};
use crate::instruments::IndexSeries;
use crate::ledger::{central_layout, deposit_cash, AccountId, GeneralLedger, LedgerClass, LedgerId, LedgerSet, Layouts, Target};
use crate::{BankId, Money};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("initialization failed: {0}")]
    Init(String),
    #[error("accounting equation violated at step {step} after posting {position}: {detail}")]
    InvariantViolation { step: u32, position: u64, detail: String },
    #[error("reserve mirror broken for bank {bank} at step {step}: bank {mirror}, central bank {account}")]
    MirrorBroken { bank: BankId, step: u32, mirror: Money, account: Money },
    #[error("unexpected failure at step {step}: {detail}")]
    Internal { step: u32, detail: String },
}

pub struct World {
    pub config: SimulationConfig,
    pub set: LedgerSet,
    pub cb: CentralBank,
    pub banks: Vec<BankState>,
    pub roster: Roster,
    rng: ChaCha8Rng,
    /// Index of the next step to run.
    pub next_step: u32,
    pub default_rate: BasisPoints,
    index: Option<IndexSeries>,
    schedule: BTreeMap<u32, Vec<(ParamPath, u32)>>,
    pub events: Vec<Event>,
    pub counts: EventCounts,
    pub population: Vec<PopulationCheck>,
    /// Reserves settled for loan payments, by (borrower's bank, lender).
    pub loan_settlements: BTreeMap<(BankId, BankId), Money>,
    pub total_lending: Money,
}

impl World {
    /// Builds the world and posts the initial endowments at step 0: savers
    /// and borrowers deposit cash, investors buy shares with cash, the
    /// government's deposit is opened against central-bank cash, and every
    /// bank's vault cash is swept into its reserve account.
    pub fn new(config: SimulationConfig, record_audit: bool) -> Result<World, EngineError> {
        config.validate()?;
        let init = |e: &dyn std::fmt::Display| EngineError::Init(e.to_string());
        let mut set = LedgerSet::new(record_audit);
        set.set_step(0);
        set.add_institution(GeneralLedger::new(CB, &central_layout()));
        set.open_account(Target::house(CB, LedgerId::Cash)).map_err(|e| init(&e))?;
        set.open_account(government_deposit()).map_err(|e| init(&e))?;
        let mut banks = Vec::with_capacity(config.banks.len());
        for (i, b) in config.banks.iter().enumerate() {
            let bank = BankState::new(i as BankId, b.params.clone());
            bank.open_books(&mut set).map_err(|e| init(&e))?;
            banks.push(bank);
        }
        let roster = Roster::from_config(&config.agents);
        for b in &roster.borrowers {
            banks[b.employer_bank as usize].employees.push(b.id);
            set.open_account(b.deposit()).map_err(|e| init(&e))?;
            if b.initial_deposit > 0 {
                deposit_cash(&mut set, b.deposit().inst, AccountId::Agent(b.id), b.initial_deposit).map_err(|e| init(&e))?;
            }
        }
        for s in &roster.savers {
            let inst = banks[s.bank as usize].inst();
            set.open_account(Target::new(inst, LedgerId::Deposits, AccountId::Agent(s.id))).map_err(|e| init(&e))?;
            if s.cash_endowment > 0 {
                deposit_cash(&mut set, inst, AccountId::Agent(s.id), s.cash_endowment).map_err(|e| init(&e))?;
            }
        }
        for i in &roster.investors {
            let bank = &mut banks[i.bank as usize];
            set.open_account(Target::new(bank.inst(), LedgerId::Deposits, AccountId::Agent(i.id))).map_err(|e| init(&e))?;
            if i.cash_endowment > 0 {
                bank.sell_shares(&mut set, i.id, i.cash_endowment, ShareFunding::Cash).map_err(|e| init(&e))?;
            }
        }
        if config.agents.government.cash_endowment > 0 {
            government_account_ops(&mut set, GovernmentOp::Deposit, config.agents.government.cash_endowment).map_err(|e| init(&e))?;
        }
        for bank in &banks {
            let cash = set.balance(bank.house(LedgerId::Cash));
            if cash > 0 {
                set.post_all(&sweep_legs(bank.id, cash)).map_err(|e| init(&e))?;
            }
        }
        let mut schedule: BTreeMap<u32, Vec<(ParamPath, u32)>> = BTreeMap::new();
        for ev in &config.event_schedule {
            let p: ParamPath = ev.param.parse().map_err(|e| init(&e))?;
            schedule.entry(ev.step).or_default().push((p, ev.value));
        }
        let params: Vec<_> = config.banks.iter().map(|b| b.params.clone()).collect();
        let base_rate = BasisPoints(config.country.central_bank.base_rate_bp);
        let population = validate_population(&config.agents, &params, base_rate);
        let index = (!config.index_series.is_empty()).then(|| IndexSeries(config.index_series.clone()));
        Ok(World {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            default_rate: BasisPoints(config.default_rate_bp),
            cb: CentralBank::new(base_rate),
            config,
            set,
            banks,
            roster,
            next_step: 0,
            index,
            schedule,
            events: Vec::new(),
            counts: EventCounts::default(),
            population,
            loan_settlements: BTreeMap::new(),
            total_lending: 0,
        })
    }

    pub fn from_json(text: &str, record_audit: bool) -> Result<World, EngineError> {
        World::new(SimulationConfig::from_json(text)?, record_audit)
    }

    pub fn is_done(&self) -> bool {
        self.next_step >= self.config.steps
    }

    /// Chart of accounts per institution, for audit-log replay.
    pub fn layouts(&self) -> Layouts {
        let mut l: Layouts = BTreeMap::new();
        l.insert(CB, central_layout());
        for b in &self.banks {
            l.insert(b.inst(), b.params.layout());
        }
        l
    }

    fn emit(&mut self, kind: EventKind) {
        self.counts.add(&kind);
        self.events.push(Event { step: self.next_step, kind });
    }

    /// Current value of a whitelisted parameter (the first bank's, for
    /// all-bank paths).
    pub fn param(&self, p: ParamPath) -> Option<u32> {
        let bank = |b: Option<BankId>| self.banks.get(b.unwrap_or(0) as usize);
        Some(match p {
            ParamPath::BaseRate => self.cb.base_rate.0,
            ParamPath::DefaultRate => self.default_rate.0,
            ParamPath::ReserveRequirement(b) => bank(b)?.params.reserve_requirement.0,
            ParamPath::CapitalRequirement(b) => bank(b)?.params.capital_requirement.0,
            ParamPath::DividendRate(b) => bank(b)?.params.dividend_rate.0,
        })
    }

    /// Applies a parameter change before the next step runs.
    pub fn apply_param(&mut self, p: ParamPath, value: u32, source: ChangeSource) -> Result<u32, String> {
        check_value(p, value, self.banks.len())?;
        match p {
            ParamPath::BaseRate => {
                self.cb.set_base_rate(BasisPoints(value), self.next_step);
                self.cb.begin_step(self.next_step);
            }
            ParamPath::DefaultRate => self.default_rate = BasisPoints(value),
            _ => {
                for bank in &mut self.banks {
                    if p.bank().is_some_and(|b| b != bank.id) {
                        continue;
                    }
                    let v = PerMil(value);
                    match p {
                        ParamPath::ReserveRequirement(_) => bank.params.reserve_requirement = v,
                        ParamPath::CapitalRequirement(_) => bank.params.capital_requirement = v,
                        ParamPath::DividendRate(_) => bank.params.dividend_rate = v,
                        _ => unreachable!(),
                    }
                }
            }
        }
        self.emit(EventKind::ParamChanged { param: p.to_string(), value, source });
        Ok(value)
    }

    /// Runs one step with no steering commands.
    pub fn run_step(&mut self) -> Result<Snapshot, EngineError> {
        self.run_step_with(&[])
    }

    /// Runs every remaining step.
    pub fn run(&mut self) -> Result<Vec<Snapshot>, EngineError> {
        let mut out = Vec::with_capacity(self.config.steps.saturating_sub(self.next_step) as usize);
        while !self.is_done() {
            out.push(self.run_step()?);
        }
        Ok(out)
    }

    /// Runs one step. Phases, in order: scheduled then commanded parameter
    /// changes; government; salaries and dividends; interbank repayments and
    /// borrower payments; defaults; loan requests; investor reinvestment;
    /// invariant checks and the snapshot.
    pub fn run_step_with(&mut self, commands: &[(ParamPath, u32)]) -> Result<Snapshot, EngineError> {
        let s = self.next_step;
        self.set.set_step(s);
        for b in &mut self.banks {
            b.begin_step();
        }

        for (p, v) in self.schedule.remove(&s).unwrap_or_default() {
            self.apply_param(p, v, ChangeSource::Schedule).map_err(|detail| EngineError::Internal { step: s, detail })?;
        }
        for &(p, v) in commands {
            self.apply_param(p, v, ChangeSource::Command).map_err(|detail| EngineError::Internal { step: s, detail })?;
        }
        let base_rate = self.cb.begin_step(s);

        self.government_phase(s);
        self.salary_phase(s)?;
        self.payment_phase(s)?;
        self.default_phase(s)?;
        self.lending_phase(s, base_rate)?;
        self.investor_phase(s);

        self.verify(s)?;
        let snap = self.snapshot();
        self.next_step += 1;
        Ok(snap)
    }

    fn government_phase(&mut self, s: u32) {
        for action in self.roster.government.step(&mut self.set, s) {
            match action {
                GovernmentAction::Illiquid { bank, due, available } => self.emit(EventKind::GovernmentIlliquid { bank, due, available }),
                GovernmentAction::IssueFailed { bank, principal } => {
                    self.emit(EventKind::Illiquidity { bank, amount: principal, context: "treasury_issue".into() })
                }
                _ => {}
            }
        }
    }

    fn salary_phase(&mut self, s: u32) -> Result<(), EngineError> {
        let tax_rate = self.roster.government.tax_rate;
        for bi in 0..self.banks.len() {
            let requests: Vec<SalaryRequest> = self.banks[bi]
                .employees
                .iter()
                .filter_map(|&id| {
                    let b = &self.roster.borrowers[id as usize];
                    let short = agents::payment_shortfall(b, &self.banks, &self.set)?;
                    (short > 0).then_some(SalaryRequest { employee: id, account_bank: b.bank_of_account, amount: short })
                })
                .collect();
            if requests.is_empty() {
                continue;
            }
            let report = self.banks[bi].pay_salaries(&mut self.set, &requests, tax_rate);
            self.roster.government.record_tax(report.tax);
            if !report.unpaid.is_empty() {
                self.emit(EventKind::SalaryShortfall { bank: bi as BankId, unpaid: report.unpaid.len() as u32 });
            }
            for (_, e) in report.failures {
                self.illiquidity(s, e, "salary")?;
            }
        }
        if s > 0 {
            for bi in 0..self.banks.len() {
                let bank = &self.banks[bi];
                if bank.params.dividend_rate.0 == 0 || !s.is_multiple_of(bank.params.dividend_stride) {
                    continue;
                }
                bank.pay_dividends(&mut self.set).map_err(|e| EngineError::Internal { step: s, detail: e.to_string() })?;
            }
        }
        Ok(())
    }

    fn illiquidity(&mut self, s: u32, e: BankError, context: &str) -> Result<(), EngineError> {
        match e {
            BankError::SettlementFailure { bank, amount } => {
                self.emit(EventKind::Illiquidity { bank, amount, context: context.into() });
                Ok(())
            }
            other => Err(EngineError::Internal { step: s, detail: format!("{context}: {other}") }),
        }
    }

    /// Tries to cover `bank`'s reserve shortfall for a settlement of `amount`
    /// with an overnight loan.
    fn borrow_reserves(&mut self, s: u32, bank: BankId, amount: Money) -> bool {
        let need = amount - self.banks[bank as usize].reserves(&self.set);
        let need = if need > 0 { need } else { amount };
        let spare: Vec<(BankId, Money)> = self.banks.iter().map(|b| (b.id, b.spare_reserves(&self.set))).collect();
        match self.cb.interbank_borrow(&mut self.set, bank, need, &spare, s) {
            Ok(loan) => {
                self.emit(EventKind::InterbankLoan { lender: loan.lender, borrower: loan.borrower, amount: loan.amount });
                true
            }
            Err(_) => false,
        }
    }

    fn payment_phase(&mut self, s: u32) -> Result<(), EngineError> {
        for (loan, _) in self.cb.repay_interbank(&mut self.set, s) {
            self.emit(EventKind::Illiquidity { bank: loan.borrower, amount: loan.amount, context: "interbank_repayment".into() });
        }
        for i in 0..self.roster.borrowers.len() {
            let mut retried = false;
            loop {
                let b = &mut self.roster.borrowers[i];
                let lender = b.current_loan;
                let Some(res) = agents::borrower_pay(b, &mut self.banks, &mut self.set, self.index.as_ref()) else { break };
                let (id, account) = (b.id, b.bank_of_account);
                let lender = lender.expect("paying borrower has a lender");
                match res {
                    Ok(out) => {
                        if out.settled > 0 {
                            *self.loan_settlements.entry((account, lender)).or_insert(0) += out.settled;
                        }
                        if out.repaid {
                            self.emit(EventKind::LoanRepaid { bank: lender, borrower: id });
                        }
                    }
                    Err(BankError::MissedPayment { due, balance, .. }) => {
                        self.emit(EventKind::MissedPayment { bank: lender, borrower: id, due, balance });
                    }
                    Err(BankError::SettlementFailure { bank, amount }) if !retried => {
                        retried = true;
                        if self.borrow_reserves(s, bank, amount) {
                            continue;
                        }
                        self.emit(EventKind::Illiquidity { bank, amount, context: "loan_payment".into() });
                    }
                    Err(e) => self.illiquidity(s, e, "loan_payment")?,
                }
                break;
            }
        }
        Ok(())
    }

    fn default_phase(&mut self, s: u32) -> Result<(), EngineError> {
        let rate = self.default_rate.0 as u64;
        let mut victims = Vec::new();
        for bank in &self.banks {
            for (&borrower, loan) in &bank.loans {
                let drawn = rate > 0 && self.rng.next_u64() % 10_000 < rate;
                if drawn {
                    victims.push((bank.id, borrower, DefaultCause::Draw));
                } else if loan.missed >= bank.params.arrears_limit {
                    victims.push((bank.id, borrower, DefaultCause::Arrears));
                }
            }
        }
        for (bank, borrower, cause) in victims {
            let was_insolvent = self.banks[bank as usize].insolvent;
            let out = self.banks[bank as usize]
                .handle_default(&mut self.set, borrower)
                .map_err(|e| EngineError::Internal { step: s, detail: e.to_string() })?;
            self.roster.borrowers[borrower as usize].current_loan = None;
            self.emit(EventKind::Default { bank, borrower, written_off: out.written_off, uncovered: out.uncovered, cause });
            if out.insolvent && !was_insolvent {
                self.emit(EventKind::Insolvency { bank });
            }
        }
        Ok(())
    }

    fn lending_phase(&mut self, s: u32, base_rate: BasisPoints) -> Result<(), EngineError> {
        for i in 0..self.roster.borrowers.len() {
            let mut retried = false;
            loop {
                let b = &mut self.roster.borrowers[i];
                let Some(res) = agents::borrower_request(b, &mut self.banks, &mut self.set, s, base_rate) else { break };
                let (id, lender) = (b.id, b.lender_bank);
                match res {
                    Ok(terms) => {
                        self.total_lending += terms.principal;
                        self.emit(EventKind::LoanGranted { bank: lender, borrower: id, principal: terms.principal, rate_bp: terms.annual_rate.0 });
                    }
                    Err(BankError::InsufficientCapacity(constraint)) => {
                        self.emit(EventKind::LoanDenied { bank: lender, borrower: id, constraint });
                    }
                    Err(BankError::SettlementFailure { bank, amount }) if !retried => {
                        retried = true;
                        if self.borrow_reserves(s, bank, amount) {
                            continue;
                        }
                        self.emit(EventKind::Illiquidity { bank, amount, context: "disbursement".into() });
                    }
                    Err(e) => self.illiquidity(s, e, "disbursement")?,
                }
                break;
            }
        }
        Ok(())
    }

    fn investor_phase(&mut self, s: u32) {
        for i in 0..self.roster.investors.len() {
            let inv = &self.roster.investors[i];
            let bank = inv.bank;
            if let Err(e) = agents::investor_step(inv, &mut self.banks[bank as usize], &mut self.set, s) {
                let amount = match e {
                    BankError::SettlementFailure { amount, .. } => amount,
                    _ => 0,
                };
                self.emit(EventKind::Illiquidity { bank, amount, context: format!("reinvestment: {e}") });
            }
        }
    }

    fn verify(&self, s: u32) -> Result<(), EngineError> {
        self.set.verify_all().map_err(|e| EngineError::InvariantViolation { step: s, position: self.set.posting_count(), detail: e.to_string() })?;
        for b in &self.banks {
            let mirror = b.reserves(&self.set);
            let account = self.set.balance(crate::clearing::reserve_account(b.id));
            if mirror != account {
                return Err(EngineError::MirrorBroken { bank: b.id, step: s, mirror, account });
            }
        }
        Ok(())
    }

    /// Statistics for the state after the last completed phase.
    pub fn snapshot(&self) -> Snapshot {
        let mut banks = Vec::with_capacity(self.banks.len());
        let mut bank_cash = 0;
        for b in &self.banks {
            let gl = self.set.gl(b.inst()).expect("bank books");
            bank_cash += gl.total(LedgerId::Cash);
            banks.push(BankSnapshot {
                bank: b.id,
                narrow_money: gl.deposit_class_total(),
                broad_money: gl.total(LedgerId::Deposits) + gl.total(LedgerId::InterestIncome) + gl.total(LedgerId::LossProvision),
                loan_book: gl.total(LedgerId::Loans),
                new_lending: b.new_lending,
                reserves: gl.total(LedgerId::Reserves),
                capital: gl.class_total(LedgerClass::Capital),
                assets: gl.class_total(LedgerClass::Asset),
                liabilities: gl.class_total(LedgerClass::Liability),
                interest_income: gl.total(LedgerId::InterestIncome),
                binding: b.binding,
                insolvent: b.insolvent,
            });
        }
        let cb = self.set.gl(CB).expect("central bank books");
        let sum = |f: fn(&BankSnapshot) -> Money| banks.iter().map(f).sum::<Money>();
        Snapshot {
            step: self.next_step,
            base_rate_bp: self.cb.base_rate.0,
            narrow_money: sum(|b| b.narrow_money),
            broad_money: sum(|b| b.broad_money),
            loan_book: sum(|b| b.loan_book),
            new_lending: sum(|b| b.new_lending),
            reserves: sum(|b| b.reserves),
            capital: sum(|b| b.capital),
            base_money: bank_cash + cb.class_total(LedgerClass::Liability),
            government_deposit: self.set.balance(government_deposit()),
            banks,
        }
    }
}
