#![allow(dead_code)]

use std::path::PathBuf;

use banksim::engine::{export_series, SimulationConfig, Snapshot, World};
use banksim::ledger::{Leg, LedgerClass, LedgerSet, Posting};

pub fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs").join(format!("{name}.json"))
}

pub fn config(name: &str) -> SimulationConfig {
    SimulationConfig::from_path(config_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub const CANNED: [&str; 5] = ["fig2_cycle", "fig3_reserve", "fig4_capital_frozen", "fig5_crossbank", "fig6_capital_growth"];

pub fn run(config: SimulationConfig, audit: bool) -> (World, Vec<Snapshot>) {
    let mut w = World::new(config, audit).expect("world builds");
    let snaps = w.run().expect("run completes");
    (w, snaps)
}

pub fn csv_bytes(snaps: &[Snapshot], nbanks: usize) -> Vec<u8> {
    export_series(snaps, nbanks, Vec::new()).expect("csv")
}

/// Replays `world`'s audit log one transaction at a time, checking assets =
/// liabilities + capital for the posting's institution after each one, then
/// compares every account balance with the live books.
pub fn replay_checked(world: &World) -> Result<usize, String> {
    let layouts = world.layouts();
    let entries: &[Posting] = world.set.audit().entries();
    let mut set = LedgerSet::new(false);
    for txn in entries.chunk_by(|a, b| a.memo.txn == b.memo.txn) {
        for p in txn {
            for t in [p.debit, p.credit] {
                if set.gl(t.inst).is_none() {
                    let layout = layouts.get(&t.inst).ok_or_else(|| format!("no layout for {}", t.inst))?;
                    set.add_institution(banksim::ledger::GeneralLedger::new(t.inst, layout));
                }
                if !set.has_account(t) {
                    set.open_account(t).map_err(|e| e.to_string())?;
                }
            }
        }
        let legs: Vec<_> = txn.iter().map(|p| Leg::new(p.debit, p.credit, p.amount, p.memo.kind)).collect();
        set.post_all(&legs).map_err(|e| format!("posting {}: {e}", txn[0].seq))?;
        for p in txn {
            let gl = set.gl(p.debit.inst).expect("institution");
            let a = gl.class_total(LedgerClass::Asset);
            let l = gl.class_total(LedgerClass::Liability);
            let c = gl.class_total(LedgerClass::Capital);
            if a != l + c {
                return Err(format!("posting {} at step {}: {} has assets {a} != {l} + {c}", p.seq, p.step, p.debit.inst));
            }
        }
    }
    set.verify_all().map_err(|e| e.to_string())?;
    for gl in world.set.institutions() {
        for ledger in gl.ledgers() {
            for (account, bal) in ledger.accounts() {
                let t = banksim::ledger::Target::new(gl.owner, ledger.id, account);
                let replayed = if set.has_account(t) { set.balance(t) } else { 0 };
                if replayed != bal {
                    return Err(format!("{t}: live {bal}, replayed {replayed}"));
                }
            }
        }
    }
    Ok(entries.len())
}

/// Full contraction-then-expansion cycles in `series`: a peak, then a
/// trough, then a rise. Moves smaller than `frac` of the series range are
/// ignored.
pub fn cycles(series: &[i64], frac: f64) -> usize {
    let (Some(&lo), Some(&hi)) = (series.iter().min(), series.iter().max()) else { return 0 };
    let threshold = ((hi - lo) as f64 * frac) as i64;
    if threshold == 0 {
        return 0;
    }
    // pivots: true for a peak, false for a trough
    let mut pivots = Vec::new();
    let (mut hi, mut lo) = (series[0], series[0]);
    let mut dir = 0;
    for &x in &series[1..] {
        match dir {
            0 => {
                hi = hi.max(x);
                lo = lo.min(x);
                if x - lo >= threshold {
                    pivots.push(false);
                    dir = 1;
                    hi = x;
                } else if hi - x >= threshold {
                    pivots.push(true);
                    dir = -1;
                    lo = x;
                }
            }
            1 => {
                if x > hi {
                    hi = x;
                } else if hi - x >= threshold {
                    pivots.push(true);
                    dir = -1;
                    lo = x;
                }
            }
            _ => {
                if x < lo {
                    lo = x;
                } else if x - lo >= threshold {
                    pivots.push(false);
                    dir = 1;
                    hi = x;
                }
            }
        }
    }
    pivots.windows(2).filter(|w| w[0] && !w[1]).count()
}

pub fn mean(xs: &[i64]) -> f64 {
    xs.iter().sum::<i64>() as f64 / xs.len() as f64
}
