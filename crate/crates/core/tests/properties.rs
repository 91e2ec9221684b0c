mod common;

use proptest::prelude::*;

use banksim::amount::{BasisPoints, PerMil};
use banksim::bank::{BankState, LedgerOverride};
use banksim::clearing::{bank_inst, reserve_account, settlement_legs, sweep_legs, CB};
use banksim::engine::{SimulationConfig, World};
use banksim::instruments::{annuity_payment, fixed_schedule, indexed_schedule, IndexSeries, Instrument, LoanState, LoanTerms};
use banksim::ledger::{
    bank_layout, central_layout, deposit_cash, read_audit, replay, write_audit, AccountId, GeneralLedger, LedgerClass, LedgerId, LedgerSet, Layouts, MemoKind,
    Target,
};

#[derive(Debug, Clone)]
enum Op {
    Deposit(u32, u8, i64),
    Sweep(u8, i64),
    Lend(u32, u8, i64),
    Repay(u32, u8, i64),
    Interest(u32, u8, i64),
    Salary(u32, u8, i64),
    Pay(u32, u8, u32, u8, i64),
}

fn op() -> impl Strategy<Value = Op> {
    let a = 0u32..6;
    let b = 0u8..3;
    let x = 1i64..50_000;
    prop_oneof![
        (a.clone(), b.clone(), x.clone()).prop_map(|(a, b, x)| Op::Deposit(a, b, x)),
        (b.clone(), x.clone()).prop_map(|(b, x)| Op::Sweep(b, x)),
        (a.clone(), b.clone(), x.clone()).prop_map(|(a, b, x)| Op::Lend(a, b, x)),
        (a.clone(), b.clone(), x.clone()).prop_map(|(a, b, x)| Op::Repay(a, b, x)),
        (a.clone(), b.clone(), x.clone()).prop_map(|(a, b, x)| Op::Interest(a, b, x)),
        (a.clone(), b.clone(), x.clone()).prop_map(|(a, b, x)| Op::Salary(a, b, x)),
        (a.clone(), b.clone(), a, b, x).prop_map(|(a, b, c, d, x)| Op::Pay(a, b, c, d, x)),
    ]
}

fn books() -> LedgerSet {
    let mut set = LedgerSet::new(true);
    set.add_institution(GeneralLedger::new(CB, &central_layout()));
    set.open_account(Target::house(CB, LedgerId::Cash)).unwrap();
    for b in 0..3u16 {
        let inst = bank_inst(b);
        set.add_institution(GeneralLedger::new(inst, &bank_layout()));
        for l in [LedgerId::Cash, LedgerId::Reserves, LedgerId::InterestIncome] {
            set.open_account(Target::house(inst, l)).unwrap();
        }
        set.open_account(reserve_account(b)).unwrap();
        for a in 0..6 {
            set.open_account(Target::new(inst, LedgerId::Deposits, AccountId::Agent(a))).unwrap();
            set.open_account(Target::new(inst, LedgerId::Loans, AccountId::Agent(a))).unwrap();
        }
    }
    set
}

fn apply(set: &mut LedgerSet, op: &Op) {
    let dep = |b: u8, a: u32| Target::new(bank_inst(b as u16), LedgerId::Deposits, AccountId::Agent(a));
    let loan = |b: u8, a: u32| Target::new(bank_inst(b as u16), LedgerId::Loans, AccountId::Agent(a));
    let ii = |b: u8| Target::house(bank_inst(b as u16), LedgerId::InterestIncome);
    let _ = match *op {
        Op::Deposit(a, b, x) => deposit_cash(set, bank_inst(b as u16), AccountId::Agent(a), x).map(|_| ()),
        Op::Sweep(b, x) => set.post_all(&sweep_legs(b as u16, x)).map(|_| ()),
        Op::Lend(a, b, x) => set.post(loan(b, a), dep(b, a), x, MemoKind::LoanGrant).map(|_| ()),
        Op::Repay(a, b, x) => set.post(dep(b, a), loan(b, a), x, MemoKind::Principal).map(|_| ()),
        Op::Interest(a, b, x) => set.post(dep(b, a), ii(b), x, MemoKind::Interest).map(|_| ()),
        Op::Salary(a, b, x) => set.post(ii(b), dep(b, a), x, MemoKind::Salary).map(|_| ()),
        Op::Pay(a, b, c, d, x) if b != d => set
            .post_all(&settlement_legs(b as u16, d as u16, x, dep(b, a), dep(d, c), MemoKind::Transfer))
            .map(|_| ()),
        Op::Pay(a, b, c, _, x) => set.post(dep(b, a), dep(b, c), x, MemoKind::Transfer).map(|_| ()),
    };
}

fn all_balances(set: &LedgerSet) -> Vec<(Target, i64)> {
    let mut out = Vec::new();
    for gl in set.institutions() {
        for l in gl.ledgers() {
            for (a, bal) in l.accounts() {
                out.push((Target::new(gl.owner, l.id, a), bal));
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn equation_holds_and_replay_is_exact(ops in prop::collection::vec(op(), 1..300)) {
        let mut set = books();
        let base = |s: &LedgerSet| -> i64 {
            (0..3u16).map(|b| s.total(bank_inst(b), LedgerId::Cash)).sum::<i64>() + s.total(CB, LedgerId::ReserveAccounts)
        };
        for op in &ops {
            let before = set.posting_count();
            let cash_in = matches!(op, Op::Deposit(..));
            let b0 = base(&set);
            apply(&mut set, op);
            for gl in set.institutions() {
                let r = gl.report();
                prop_assert!(r.holds, "{} unbalanced after {:?}", gl.owner, op);
            }
            // asset money only grows through explicit cash deposits
            if !cash_in || set.posting_count() == before {
                prop_assert_eq!(base(&set), b0);
            }
            for b in 0..3u16 {
                prop_assert_eq!(set.total(bank_inst(b), LedgerId::Reserves), set.balance(reserve_account(b)));
            }
        }
        prop_assert!(all_balances(&set).iter().all(|(_, b)| *b >= 0));
        let mut buf = Vec::new();
        write_audit(set.audit().entries(), &mut buf).unwrap();
        let entries = read_audit::<i64, _>(&buf[..]).unwrap();
        prop_assert_eq!(&entries[..], set.audit().entries());
        let replayed = replay(&entries, &Layouts::new()).unwrap();
        let live: Vec<_> = all_balances(&set).into_iter().filter(|(_, b)| *b != 0).collect();
        let again: Vec<_> = all_balances(&replayed).into_iter().filter(|(_, b)| *b != 0).collect();
        prop_assert_eq!(live, again);
    }

    #[test]
    fn schedules_retire_principal_exactly(
        p in 1i64..100_000_000,
        bp in 0u32..3000,
        n in 1u32..400,
        simple in any::<bool>(),
    ) {
        let instrument = if simple { Instrument::Simple } else { Instrument::Compound };
        let terms = LoanTerms { principal: p, annual_rate: BasisPoints(bp), periods: n, instrument, risk_weight: PerMil(500) };
        let s = fixed_schedule(&terms).unwrap();
        prop_assert_eq!(s.len() as u32, n);
        prop_assert_eq!(s.iter().map(|d| d.principal).sum::<i64>(), p);
        prop_assert!(s.iter().all(|d| d.principal >= 0 && d.interest >= 0));
        if !simple && bp > 0 {
            // forward recomputation with the level payment reaches zero
            let pay = annuity_payment(p, BasisPoints(bp), n);
            let mut balance = p;
            for (k, d) in s.iter().enumerate() {
                prop_assert_eq!(d.interest, BasisPoints(bp).monthly_interest(balance));
                if k + 1 < n as usize {
                    prop_assert_eq!(d.total(), pay.min(balance + d.interest).max(d.interest));
                }
                balance -= d.principal;
            }
            prop_assert_eq!(balance, 0);
        }
        let mut state = LoanState::new(terms).unwrap();
        for d in &s {
            state.apply_payment(d.total()).unwrap();
        }
        prop_assert_eq!(state.outstanding, 0);
        prop_assert!(!state.is_active());
    }

    #[test]
    fn zero_rate_instruments_coincide(p in 1i64..10_000_000, n in 1u32..200) {
        let t = |instrument| LoanTerms { principal: p, annual_rate: BasisPoints(0), periods: n, instrument, risk_weight: PerMil(500) };
        let c = fixed_schedule(&t(Instrument::Compound)).unwrap();
        let s = fixed_schedule(&t(Instrument::Simple)).unwrap();
        prop_assert_eq!(&c, &s);
        let flat = IndexSeries(vec![PerMil(1000); n as usize]);
        for (k, d) in c.iter().enumerate() {
            prop_assert_eq!(indexed_schedule(&t(Instrument::Indexed), &flat, k as u32).unwrap(), *d);
        }
    }
}

#[derive(Debug, Clone)]
struct Scenario {
    banks: usize,
    cross: bool,
    borrowers: u32,
    principal: i64,
    periods: u32,
    window: u32,
    deposit: i64,
    saver_cash: i64,
    investor_cash: i64,
    r: u32,
    c: u32,
    reserve_on: bool,
    capital_on: bool,
    base_bp: u32,
    default_bp: u32,
    dividend: u32,
    simple: bool,
    provision: u32,
    tax: u32,
}

fn scenario() -> impl Strategy<Value = Scenario> {
    (
        (1usize..3, any::<bool>(), 1u32..40, 1_000i64..200_000, 3u32..40, 1u32..10),
        (0i64..20_000, 0i64..400_000, 0i64..200_000, 20u32..300, 20u32..200),
        (any::<bool>(), any::<bool>(), 0u32..1500, prop_oneof![Just(0u32), 1u32..400], prop_oneof![Just(0u32), 1u32..100]),
        (any::<bool>(), 0u32..50, 0u32..300),
    )
        .prop_map(|((banks, cross, borrowers, principal, periods, window), (deposit, saver_cash, investor_cash, r, c), (reserve_on, capital_on, base_bp, default_bp, dividend), (simple, provision, tax))| Scenario {
            banks,
            cross: cross && banks > 1,
            borrowers,
            principal,
            periods,
            window,
            deposit,
            saver_cash,
            investor_cash,
            r,
            c,
            reserve_on,
            capital_on,
            base_bp,
            default_bp,
            dividend,
            simple,
            provision,
            tax,
        })
}

fn build(s: &Scenario) -> SimulationConfig {
    let bank = format!(
        r#"{{"params": {{"reserve_requirement": {}, "reserve_control_enabled": {}, "capital_requirement": {}, "capital_control_enabled": {}, "dividend_rate": {}, "loss_provision_rate": {}}}}}"#,
        s.r, s.reserve_on, s.c, s.capital_on, s.dividend, s.provision
    );
    let banks = vec![bank; s.banks].join(",");
    let mut borrowers = Vec::new();
    let mut savers = Vec::new();
    let mut investors = Vec::new();
    for b in 0..s.banks {
        let lender = if s.cross { (b + 1) % s.banks } else { b };
        borrowers.push(format!(
            r#"{{"count": {}, "bank_of_account": {b}, "lender_bank": {lender}, "principal": {}, "periods": {}, "loan_window": {}, "initial_deposit": {}, "instrument": "{}"}}"#,
            s.borrowers,
            s.principal,
            s.periods,
            s.window,
            s.deposit,
            if s.simple { "simple" } else { "compound" }
        ));
        savers.push(format!(r#"{{"bank": {b}, "cash_endowment": {}}}"#, s.saver_cash));
        investors.push(format!(r#"{{"bank": {b}, "cash_endowment": {}}}"#, s.investor_cash));
    }
    let text = format!(
        r#"{{"seed": 9, "steps": 60, "default_rate_bp": {}, "country": {{"central_bank": {{"base_rate_bp": {}}}}},
            "banks": [{banks}],
            "agents": {{"borrowers": [{}], "savers": [{}], "investors": [{}], "government": {{"tax_rate": {}}}}}}}"#,
        s.default_bp,
        s.base_bp,
        borrowers.join(","),
        savers.join(","),
        investors.join(","),
        s.tax
    );
    SimulationConfig::from_json(&text).unwrap_or_else(|e| panic!("{e}\n{text}"))
}

fn capital_ok(bank: &BankState, set: &LedgerSet) -> bool {
    let exposure: i128 = bank.loans.values().map(|l| l.state.terms.risk_weight.0 as i128 * l.state.outstanding as i128).sum();
    exposure <= bank.capital_total(set) as i128 * 1_000_000 / bank.params.capital_requirement.0 as i128
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(160))]

    #[test]
    fn world_invariants(s in scenario()) {
        let cfg = build(&s);
        let mut w = World::new(cfg, true).unwrap();
        let mut base = None;
        while !w.is_done() {
            let snap = w.run_step().unwrap();
            // base money is fixed once initial endowments are posted
            prop_assert_eq!(*base.get_or_insert(snap.base_money), snap.base_money);
            prop_assert!(all_balances(&w.set).iter().all(|(_, b)| *b >= 0));
            for bank in &w.banks {
                prop_assert_eq!(bank.reserves(&w.set), w.set.balance(reserve_account(bank.id)));
                let intra = !s.cross;
                if bank.params.reserve_control_enabled && intra {
                    let limit = bank.reserves(&w.set) as i128 * 1000 / bank.params.reserve_requirement.0 as i128;
                    prop_assert!(bank.deposit_class_total(&w.set) as i128 <= limit, "step {}: deposits over reserve limit", snap.step);
                }
                // the limit binds at origination; salaries and write-offs can erode capital afterwards
                if bank.params.capital_control_enabled && snap.banks[bank.id as usize].new_lending > 0 {
                    prop_assert!(capital_ok(bank, &w.set), "step {}: exposure over capital limit", snap.step);
                }
            }
            // a borrower never holds two loans
            let mut holders: Vec<u32> = w.banks.iter().flat_map(|b| b.loans.keys().copied()).collect();
            let n = holders.len();
            holders.sort();
            holders.dedup();
            prop_assert_eq!(holders.len(), n);
        }

        // reclassifying interest income as deposit-class never raises reserve capacity
        let mut layouts = w.layouts();
        let mut reclassified = Vec::new();
        for bank in &w.banks {
            let mut params = bank.params.clone();
            params.ledger_classes.insert(LedgerId::InterestIncome, LedgerOverride { class: None, deposit_class: Some(true) });
            layouts.insert(bank.inst(), params.layout());
            reclassified.push(BankState::new(bank.id, params));
        }
        let other = replay(w.set.audit().entries(), &layouts).unwrap();
        for (bank, alt) in w.banks.iter().zip(&reclassified) {
            let before = bank.reserve_loan_capacity(&w.set).unwrap();
            let after = alt.reserve_loan_capacity(&other).unwrap();
            prop_assert!(after <= before);
        }
    }

    #[test]
    fn grant_creates_matching_deposit(cash in 1_000i64..1_000_000, principal in 1i64..2_000_000, r in 1u32..1000) {
        let mut set = LedgerSet::new(false);
        set.add_institution(GeneralLedger::new(CB, &central_layout()));
        set.open_account(Target::house(CB, LedgerId::Cash)).unwrap();
        let mut bank = BankState::new(0, banksim::bank::BankParams { reserve_requirement: PerMil(r), ..Default::default() });
        bank.open_books(&mut set).unwrap();
        set.open_account(Target::new(bank.inst(), LedgerId::Deposits, AccountId::Agent(1))).unwrap();
        set.open_account(Target::new(bank.inst(), LedgerId::Deposits, AccountId::Agent(2))).unwrap();
        deposit_cash(&mut set, bank.inst(), AccountId::Agent(1), cash).unwrap();
        set.post_all(&sweep_legs(0, cash)).unwrap();
        let cap = bank.reserve_loan_capacity(&set).unwrap();
        prop_assert_eq!(cap, (cash as i128 * 1000 / r as i128 - cash as i128).max(0) as i64);
        let (d0, l0) = (set.total(bank.inst(), LedgerId::Deposits), set.total(bank.inst(), LedgerId::Loans));
        let terms = LoanTerms { principal, annual_rate: BasisPoints(200), periods: 12, instrument: Instrument::Compound, risk_weight: PerMil(500) };
        let granted = bank.grant_loan(&mut set, 2, 0, terms, 0).is_ok();
        prop_assert_eq!(granted, principal <= cap);
        let (d1, l1) = (set.total(bank.inst(), LedgerId::Deposits), set.total(bank.inst(), LedgerId::Loans));
        prop_assert_eq!(d1 - d0, l1 - l0);
        prop_assert_eq!(d1 - d0, if granted { principal } else { 0 });
        let gl = set.gl(bank.inst()).unwrap();
        prop_assert_eq!(gl.class_total(LedgerClass::Asset), gl.class_total(LedgerClass::Liability) + gl.class_total(LedgerClass::Capital));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn frozen_capital_lending_ignores_base_rate(
        mut s in scenario(),
        r1 in 0u32..1500,
        r2 in 0u32..1500,
    ) {
        s.reserve_on = false;
        s.capital_on = true;
        s.default_bp = 0;
        s.dividend = 0;
        // provisions and tax can draw on retained earnings
        s.provision = 0;
        s.tax = 0;
        // equal principal installments, so freed capacity does not depend on the rate
        s.simple = true;
        // borrowers can always service interest, so repayment never depends on the rate
        s.deposit = s.principal;
        let lending = |bp: u32| {
            let mut s = s.clone();
            s.base_bp = bp;
            let mut cfg = build(&s);
            for inv in &mut cfg.agents.investors {
                inv.reinvest = false;
            }
            let mut w = World::new(cfg, false).unwrap();
            let series = w.run().unwrap().iter().map(|x| x.new_lending).collect::<Vec<_>>();
            assert_eq!(w.counts.missed, 0);
            series
        };
        prop_assert_eq!(lending(r1), lending(r2));
    }
}
