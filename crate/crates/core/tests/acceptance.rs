//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//! Runs with `cargo test --test acceptance`.

mod common;

use std::time::{Duration, Instant};

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use banksim::amount::{BasisPoints, PerMil};
use banksim::control::{self, CommandKind, RunOptions, ServerMessage};
use banksim::engine::snapshot::lending_series;
use banksim::engine::{SimulationConfig, Snapshot, World};
use banksim::instruments::{annuity_payment, annuity_schedule, Instrument, LoanTerms};
use banksim::ledger::{AccountId, LedgerClass, LedgerId, LedgerSet, Target};

use common::{config, csv_bytes, cycles, mean, replay_checked, run, CANNED};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- equation

/// Random double-entry traffic against one bank and the central bank,
/// checking the equation after every posting.
fn ledger_fuzz(postings: usize, seed: u64) -> Result<usize, String> {
    use banksim::clearing::{bank_inst, reserve_account, sweep_legs, CB};
    use banksim::ledger::{bank_layout, central_layout, deposit_cash, GeneralLedger, MemoKind};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = LedgerSet::new(true);
    set.add_institution(GeneralLedger::new(CB, &central_layout()));
    set.open_account(Target::house(CB, LedgerId::Cash)).unwrap();
    let b = bank_inst(0);
    set.add_institution(GeneralLedger::new(b, &bank_layout()));
    for l in [LedgerId::Cash, LedgerId::Reserves, LedgerId::InterestIncome] {
        set.open_account(Target::house(b, l)).unwrap();
    }
    set.open_account(reserve_account(0)).unwrap();
    let agents = 20u32;
    for a in 0..agents {
        for l in [LedgerId::Deposits, LedgerId::Loans, LedgerId::Capital] {
            set.open_account(Target::new(b, l, AccountId::Agent(a))).unwrap();
        }
    }
    let dep = |a: u32| Target::new(b, LedgerId::Deposits, AccountId::Agent(a));
    let loan = |a: u32| Target::new(b, LedgerId::Loans, AccountId::Agent(a));
    let cap = |a: u32| Target::new(b, LedgerId::Capital, AccountId::Agent(a));
    let ii = Target::house(b, LedgerId::InterestIncome);
    let mut attempts = 0;
    while set.posting_count() < postings as u64 {
        attempts += 1;
        if attempts > postings * 20 {
            return Err("fuzz stalled".into());
        }
        let a = (rng.next_u64() % agents as u64) as u32;
        let c = (rng.next_u64() % agents as u64) as u32;
        let amt = 1 + (rng.next_u64() % 5000) as i64;
        let before = set.posting_count();
        // failures (overdraws) are expected and must leave the books untouched
        let _ = match rng.next_u64() % 8 {
            0 => deposit_cash(&mut set, b, AccountId::Agent(a), amt).map(|_| ()),
            1 => set.post_all(&sweep_legs(0, amt)).map(|_| ()),
            2 => set.post(loan(a), dep(a), amt, MemoKind::LoanGrant).map(|_| ()),
            3 => set.post(dep(a), loan(a), amt, MemoKind::Principal).map(|_| ()),
            4 => set.post(dep(a), ii, amt, MemoKind::Interest).map(|_| ()),
            5 => set.post(ii, dep(c), amt, MemoKind::Salary).map(|_| ()),
            6 => set.post(dep(a), dep(c), amt, MemoKind::Transfer).map(|_| ()),
            _ => set.post(Target::house(b, LedgerId::Cash), cap(a), amt, MemoKind::ShareSale).map(|_| ()),
        };
        if set.posting_count() != before {
            for gl in set.institutions() {
                let (x, y, z) = (gl.class_total(LedgerClass::Asset), gl.class_total(LedgerClass::Liability), gl.class_total(LedgerClass::Capital));
                if x != y + z {
                    return Err(format!("after posting {}: {} assets {x} != {y} + {z}", set.posting_count(), gl.owner));
                }
            }
            set.verify_all().map_err(|e| e.to_string())?;
        }
    }
    Ok(set.posting_count() as usize)
}

fn equation_invariance() -> Outcome {
    let mut total = 0;
    for name in CANNED {
        let (w, _) = run(config(name), true);
        total += replay_checked(&w).map_err(|e| format!("{name}: {e}"))?;
    }
    let fuzz = ledger_fuzz(10_000, 7)?;
    Ok(format!("{total} postings across 5 canned runs + {fuzz} fuzz postings, exact equality after each"))
}

// ---------------------------------------------------------------- deposit expansion

fn expansion_config(borrowers: u32, principal: i64) -> SimulationConfig {
    let text = format!(
        r#"{{"seed": 1, "steps": 1,
            "country": {{"central_bank": {{"base_rate_bp": 0}}}},
            "banks": [{{"params": {{"reserve_requirement": 100, "reserve_control_enabled": true}}}}],
            "agents": {{
              "savers": [{{"bank": 0, "cash_endowment": 10000}}],
              "borrowers": [{{"count": {borrowers}, "bank_of_account": 0, "principal": {principal}, "periods": 120}}]
            }}}}"#
    );
    SimulationConfig::from_json(&text).expect("deposit expansion config")
}

fn deposit_expansion() -> Outcome {
    // 100 units of cash (10000 minor), 1-unit loans, far more borrowers than capacity
    let (w, snaps) = run(expansion_config(2000, 100), false);
    let deposits = w.set.total(w.banks[0].inst(), LedgerId::Deposits);
    check((deposits - 100_000).abs() <= 1, || format!("deposits {deposits}, want 100000 ± 1"))?;
    check(snaps[0].narrow_money == deposits, || "snapshot disagrees with ledger".into())?;

    // loan size set to R × current capacity: the textbook 90, 81, 72.9, 65.61 chain
    let mut w = World::new(expansion_config(0, 1), false).map_err(|e| e.to_string())?;
    let r = w.banks[0].params.reserve_requirement;
    let mut loans = Vec::new();
    for k in 0..4u32 {
        let cap = w.banks[0].reserve_loan_capacity(&w.set).map_err(|e| e.to_string())?;
        let principal = r.of(cap);
        let id = 10_000 + k;
        let inst = w.banks[0].inst();
        w.set.open_account(Target::new(inst, LedgerId::Deposits, AccountId::Agent(id))).map_err(|e| e.to_string())?;
        let terms = LoanTerms { principal, annual_rate: BasisPoints(0), periods: 120, instrument: Instrument::Compound, risk_weight: PerMil(500) };
        w.banks[0].grant_loan(&mut w.set, id, 0, terms, 0).map_err(|e| e.to_string())?;
        loans.push(principal);
    }
    let want = [9000, 8100, 7290, 6561];
    for (got, want) in loans.iter().zip(want) {
        check((got - want).abs() <= 1, || format!("loan sequence {loans:?}, want {want:?}"))?;
    }
    Ok(format!("deposits {deposits} minor units (1000.00 units); loans {loans:?} minor units"))
}

// ---------------------------------------------------------------- amortization

/// Independent oracle: bisect the level payment in floating point until the
/// forward-iterated balance hits zero.
fn payment_oracle(p: f64, annual: f64, n: u32) -> f64 {
    let r = annual / 12.0;
    let end = |pay: f64| (0..n).fold(p, |b, _| b * (1.0 + r) - pay);
    let (mut lo, mut hi) = (0.0, p);
    for _ in 0..200 {
        let mid = (lo + hi) / 2.0;
        if end(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo + hi) / 2.0
}

fn amortization() -> Outcome {
    let p = 1_000_000i64;
    let terms = LoanTerms { principal: p, annual_rate: BasisPoints(650), periods: 300, instrument: Instrument::Compound, risk_weight: PerMil(500) };
    let schedule = annuity_schedule(&terms).map_err(|e| e.to_string())?;
    let interest: i64 = schedule.iter().map(|d| d.interest).sum();
    let principal: i64 = schedule.iter().map(|d| d.principal).sum();
    check(principal == p, || format!("principal sums to {principal}"))?;
    let ratio = interest as f64 / p as f64;
    check((ratio - 1.0).abs() <= 0.05, || format!("total interest {interest} is {ratio:.4} × principal"))?;

    let oracle_payment = (payment_oracle(p as f64, 0.065, 300) + 0.5).floor() as i64;
    let payment = annuity_payment(p, BasisPoints(650), 300);
    check((payment - oracle_payment).abs() <= 1, || format!("payment {payment}, oracle {oracle_payment}"))?;
    // forward iteration with the oracle payment and half-up monthly interest
    let mut balance = p;
    let mut oracle_interest = 0;
    for k in 0..300 {
        let i = (balance * 650 * 2 + 120_000) / 240_000;
        let principal = if k == 299 { balance } else { (oracle_payment - i).min(balance) };
        balance -= principal;
        oracle_interest += i;
    }
    check((interest - oracle_interest).abs() <= 1, || format!("total interest {interest}, oracle {oracle_interest}"))?;
    Ok(format!("payment {payment}, total interest {interest} = {ratio:.4} × principal, oracle {oracle_interest}"))
}

// ---------------------------------------------------------------- fig3_reserve

fn window_means(lending: &[i64]) -> (f64, f64, f64) {
    (mean(&lending[120..240]), mean(&lending[240..480]), mean(&lending[480..600]))
}

fn fig3() -> Outcome {
    let (_, snaps) = run(config("fig3_reserve"), false);
    let (a, b, c) = window_means(&lending_series(&snaps));
    let low = (a + c) / 2.0;
    check(b >= low, || format!("5% window mean {b:.0} < 2% mean {low:.0}"))?;
    // bound by reserves in steady state
    check(snaps[200..].iter().all(|s| s.banks.iter().all(|b| b.binding.is_some())), || "lending not reserve-bound".into())?;

    let mut cfg = config("fig3_reserve");
    for bank in &mut cfg.banks {
        bank.params
            .ledger_classes
            .insert(LedgerId::InterestIncome, banksim::bank::LedgerOverride { class: None, deposit_class: Some(true) });
    }
    let (_, re) = run(cfg, false);
    let (ra, rb, rc) = window_means(&lending_series(&re));
    let rlow = (ra + rc) / 2.0;
    check(rb <= rlow, || format!("reclassified: 5% mean {rb:.0} still above 2% mean {rlow:.0}"))?;
    Ok(format!("new lending 2%/5%/2%: {a:.0}/{b:.0}/{c:.0}; reclassified: {ra:.0}/{rb:.0}/{rc:.0}"))
}

// ---------------------------------------------------------------- fig4_capital_frozen

fn fig4() -> Outcome {
    let scheduled = run(config("fig4_capital_frozen"), false).1;
    let flat = |bp: u32| {
        let mut c = config("fig4_capital_frozen");
        c.event_schedule.clear();
        c.country.central_bank.base_rate_bp = bp;
        run(c, false).1
    };
    let (low, high) = (flat(200), flat(500));
    let (s, l, h) = (lending_series(&scheduled), lending_series(&low), lending_series(&high));
    check(l == h, || {
        let i = l.iter().zip(&h).position(|(x, y)| x != y).unwrap_or(0);
        format!("2% and 5% series differ first at step {i}")
    })?;
    check(s == l, || "scheduled-rate series differs from flat 2%".into())?;
    check(low.iter().zip(&high).any(|(x, y)| x.narrow_money != y.narrow_money), || "rates had no effect at all".into())?;
    let column = |snaps: &[Snapshot]| -> Vec<u8> {
        let bytes = csv_bytes(snaps, 2);
        let text = String::from_utf8(bytes).unwrap();
        text.lines().map(|l| l.split(',').nth(5).unwrap().to_string() + "\n").collect::<String>().into_bytes()
    };
    check(column(&low) == column(&high), || "CSV lending columns differ".into())?;
    check(column(&flat(200)) == column(&low), || "equal seeds gave different CSV".into())?;
    let total: i64 = l.iter().sum();
    Ok(format!("{} steps, identical new-lending series (total {total}) at 2%, 5% and 2%→5%→2%", l.len()))
}

// ---------------------------------------------------------------- fig5_crossbank

fn fig5() -> Outcome {
    let (w, snaps) = run(config("fig5_crossbank"), false);
    let lender = |s: &Snapshot| s.banks[1].reserves;
    for pair in snaps.windows(2) {
        check(lender(&pair[1]) >= lender(&pair[0]), || format!("bank 2 reserves fell at step {}", pair[1].step))?;
    }
    let terms = LoanTerms { principal: 1_000_000, annual_rate: BasisPoints(200), periods: 120, instrument: Instrument::Compound, risk_weight: PerMil(500) };
    let scheduled: i64 = annuity_schedule(&terms).map_err(|e| e.to_string())?.iter().map(|d| d.total()).sum();
    let settled = w.loan_settlements.get(&(0, 1)).copied().unwrap_or(0);
    check(settled == scheduled, || format!("settled {settled}, scheduled {scheduled}"))?;
    check(w.events.iter().any(|e| e.kind.name() == "loan_repaid"), || "loan never repaid".into())?;
    Ok(format!("bank 1 → bank 2 settlements {settled} = principal 1000000 + interest {}", scheduled - 1_000_000))
}

// ---------------------------------------------------------------- fig6_capital_growth

fn fig6() -> Outcome {
    let (_, snaps) = run(config("fig6_capital_growth"), false);
    // period ends: steps 11, 23, ..., 131
    let sampled: Vec<&Snapshot> = snaps.iter().filter(|s| s.step % 12 == 11).collect();
    check(sampled.len() == 11, || format!("expected 11 period ends, got {}", sampled.len()))?;
    for pair in sampled.windows(2) {
        check(pair[1].broad_money >= pair[0].broad_money, || format!("money supply fell by step {}", pair[1].step))?;
        check(pair[1].loan_book >= pair[0].loan_book, || format!("loan book fell by step {}", pair[1].step))?;
    }
    let (first, last) = (sampled[0], sampled[sampled.len() - 1]);
    let ratio = last.broad_money as f64 / first.broad_money as f64;
    check((1.5..=2.5).contains(&ratio), || format!("money supply ratio {ratio:.3}"))?;
    check(last.capital > first.capital, || "capital did not grow".into())?;
    Ok(format!(
        "money supply {} → {} over steps {}..{} (×{ratio:.3}); loan book ×{:.3}; capital ×{:.3}",
        first.broad_money,
        last.broad_money,
        first.step,
        last.step,
        last.loan_book as f64 / first.loan_book as f64,
        last.capital as f64 / first.capital as f64
    ))
}

// ---------------------------------------------------------------- fig2_cycle

fn fig2() -> Outcome {
    let (_, snaps) = run(config("fig2_cycle"), false);
    let money: Vec<i64> = snaps.iter().map(|s| s.narrow_money).collect();
    check(money.len() == 600, || format!("{} steps", money.len()))?;
    let n = cycles(&money, 0.25);
    check(n >= 2, || format!("{n} contraction-expansion cycles"))?;
    Ok(format!("{n} full contraction-expansion cycles in 600 steps"))
}

// ---------------------------------------------------------------- determinism

fn steered_run(config: SimulationConfig) -> Result<(Vec<Snapshot>, Vec<banksim::engine::ScheduledChange>), String> {
    let (client, thread) = control::spawn(config, RunOptions { paused: true, interval: Duration::ZERO }).map_err(|e| e.to_string())?;
    let (_, mut rx) = client.subscribe();
    let send = |k: CommandKind| {
        let ack = client.command_blocking(k.into());
        if ack.ok {
            Ok(ack)
        } else {
            Err(format!("{ack:?}"))
        }
    };
    let mut snaps = Vec::new();
    let mut next = |snaps: &mut Vec<Snapshot>| -> Result<bool, String> {
        match rx.blocking_recv() {
            Ok(ServerMessage::Snapshot { snapshot }) => snaps.push(snapshot),
            Ok(ServerMessage::Terminal { run }) => {
                check(run.status == control::RunStatus::Done, || format!("run ended {:?}", run.status))?;
                return Ok(false);
            }
            Ok(_) => {}
            Err(e) => return Err(format!("stream: {e}")),
        }
        Ok(true)
    };
    send(CommandKind::Step { n: 40 })?;
    while snaps.len() < 40 {
        next(&mut snaps)?;
    }
    send(CommandKind::SetParam { path: "base_rate".into(), value: 500 })?;
    send(CommandKind::Step { n: 60 })?;
    while snaps.len() < 100 {
        next(&mut snaps)?;
    }
    send(CommandKind::SetParam { path: "R".into(), value: 80 })?;
    send(CommandKind::SetParam { path: "base_rate".into(), value: 300 })?;
    let ack = send(CommandKind::SetParam { path: "base_rate".into(), value: 400 })?;
    check(ack.applied_step == Some(100) && ack.value == Some(400), || format!("{ack:?}"))?;
    send(CommandKind::Resume)?;
    while next(&mut snaps)? {}
    thread.join().map_err(|_| "controller panicked".to_string())?;
    Ok((snaps, client.command_log()))
}

fn determinism() -> Outcome {
    let (w1, s1) = run(config("fig3_reserve"), true);
    let (_, s2) = run(config("fig3_reserve"), false);
    let (a, b) = (csv_bytes(&s1, 2), csv_bytes(&s2, 2));
    check(a == b, || "two runs of fig3 gave different CSV".into())?;
    let replayed = replay_checked(&w1)?;

    let mut cfg = config("fig2_cycle");
    cfg.default_rate_bp = 30;
    let (streamed, log) = steered_run(cfg.clone())?;
    check(log.len() == 4 && log[0].step == 40 && log[3].step == 100, || format!("command log {log:?}"))?;
    check(log.iter().any(|c| c.param == "reserve_requirement"), || "R change missing from log".into())?;
    let mut replay_cfg = cfg;
    replay_cfg.event_schedule.extend(log.iter().cloned());
    let (_, replay) = run(replay_cfg, false);
    check(streamed.len() == 600, || format!("stream delivered {} snapshots", streamed.len()))?;
    check(streamed == replay, || {
        let i = streamed.iter().zip(&replay).position(|(x, y)| x != y).unwrap_or(0);
        format!("steered and replayed runs diverge at step {i}")
    })?;
    let steps: Vec<String> = log.iter().map(|c| format!("{}={}@{}", c.param, c.value, c.step)).collect();
    Ok(format!("CSV byte-identical ({} bytes); audit replay of {replayed} postings exact; steered run [{}] replays identically", a.len(), steps.join(", ")))
}

type Criterion = (&'static str, Duration, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("accounting-equation invariance", Duration::from_secs(10), equation_invariance),
        ("deposit-expansion oracle", Duration::from_secs(1), deposit_expansion),
        ("amortization claim", Duration::from_secs(1), amortization),
        ("reserve regime, base-rate effect (fig3_reserve)", Duration::from_secs(30), fig3),
        ("capital regime, frozen capital (fig4_capital_frozen)", Duration::from_secs(30), fig4),
        ("cross-bank flow identity (fig5_crossbank)", Duration::from_secs(10), fig5),
        ("capital growth (fig6_capital_growth)", Duration::from_secs(30), fig6),
        ("money-supply cyclicity (fig2_cycle)", Duration::from_secs(10), fig2),
        ("determinism and replay", Duration::from_secs(30), determinism),
    ];
    let mut failed = 0;
    for (name, budget, f) in criteria {
        let start = Instant::now();
        let result = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let took = start.elapsed();
        let (ok, detail) = match result {
            Ok(d) if took <= budget => (true, d),
            Ok(d) => (false, format!("{d}; over the {budget:?} budget")),
            Err(e) => (false, e),
        };
        if !ok {
            failed += 1;
        }
        println!("{} {name} ({:.2}s): {detail}", if ok { "PASS" } else { "FAIL" }, took.as_secs_f64());
    }
    println!("{} of 9 criteria passed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
