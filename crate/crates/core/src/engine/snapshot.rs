//! Per-step statistics and their CSV form.

use std::io;

use serde::{Deserialize, Serialize};

use crate::bank::Constraint;
use crate::{BankId, Money};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BankSnapshot {
    pub bank: BankId,
    /// Σ deposit-class ledgers.
    pub narrow_money: Money,
    /// deposits + interest_income + loss_provision.
    pub broad_money: Money,
    pub loan_book: Money,
    pub new_lending: Money,
    pub reserves: Money,
    pub capital: Money,
    pub assets: Money,
    pub liabilities: Money,
    pub interest_income: Money,
    pub binding: Option<Constraint>,
    pub insolvent: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    pub step: u32,
    pub base_rate_bp: u32,
    pub narrow_money: Money,
    pub broad_money: Money,
    pub loan_book: Money,
    pub new_lending: Money,
    pub reserves: Money,
    pub capital: Money,
    /// Bank vault cash plus every central-bank liability.
    pub base_money: Money,
    pub government_deposit: Money,
    pub banks: Vec<BankSnapshot>,
}

const SYSTEM_COLUMNS: [&str; 10] = [
    "step",
    "base_rate_bp",
    "narrow_money",
    "broad_money",
    "loan_book",
    "new_lending",
    "reserves",
    "capital",
    "base_money",
    "government_deposit",
];

const BANK_COLUMNS: [&str; 8] = ["narrow_money", "broad_money", "loan_book", "new_lending", "reserves", "capital", "binding", "insolvent"];

pub fn csv_header(nbanks: usize) -> Vec<String> {
    let mut h: Vec<String> = SYSTEM_COLUMNS.iter().map(|s| s.to_string()).collect();
    for b in 0..nbanks {
        h.extend(BANK_COLUMNS.iter().map(|c| format!("b{b}_{c}")));
    }
    h
}

fn binding_str(c: Option<Constraint>) -> &'static str {
    match c {
        None => "",
        Some(Constraint::Reserve) => "reserve",
        Some(Constraint::Capital) => "capital",
        Some(Constraint::Both) => "both",
        Some(Constraint::Insolvent) => "insolvent",
    }
}

impl Snapshot {
    pub fn csv_record(&self) -> Vec<String> {
        let mut r: Vec<String> = [
            self.step as i64,
            self.base_rate_bp as i64,
            self.narrow_money,
            self.broad_money,
            self.loan_book,
            self.new_lending,
            self.reserves,
            self.capital,
            self.base_money,
            self.government_deposit,
        ]
        .iter()
        .map(|v| v.to_string())
        .collect();
        for b in &self.banks {
            r.extend([b.narrow_money, b.broad_money, b.loan_book, b.new_lending, b.reserves, b.capital].iter().map(|v| v.to_string()));
            r.push(binding_str(b.binding).to_string());
            r.push((b.insolvent as u8).to_string());
        }
        r
    }
}

/// Streams snapshots as CSV rows under a fixed header.
pub struct SeriesWriter<W: io::Write> {
    out: csv::Writer<W>,
}

impl<W: io::Write> SeriesWriter<W> {
    pub fn new(out: W, nbanks: usize) -> io::Result<Self> {
        let mut out = csv::Writer::from_writer(out);
        out.write_record(csv_header(nbanks)).map_err(io::Error::other)?;
        Ok(SeriesWriter { out })
    }

    pub fn write(&mut self, s: &Snapshot) -> io::Result<()> {
        self.out.write_record(s.csv_record()).map_err(io::Error::other)
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.out.flush()?;
        self.out.into_inner().map_err(|e| io::Error::other(e.to_string()))
    }
}

/// Writes a header and one row per snapshot.
pub fn export_series<W: io::Write>(snapshots: &[Snapshot], nbanks: usize, out: W) -> io::Result<W> {
    let mut w = SeriesWriter::new(out, nbanks)?;
    for s in snapshots {
        w.write(s)?;
    }
    w.finish()
}

/// Narrow money per step, the series most experiments inspect.
pub fn narrow_series(snapshots: &[Snapshot]) -> Vec<Money> {
    snapshots.iter().map(|s| s.narrow_money).collect()
}

pub fn lending_series(snapshots: &[Snapshot]) -> Vec<Money> {
    snapshots.iter().map(|s| s.new_lending).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn snap(step: u32) -> Snapshot {
        Snapshot {
            step,
            base_rate_bp: 200,
            narrow_money: 1,
            broad_money: 2,
            loan_book: 3,
            new_lending: 4,
            reserves: 5,
            capital: 6,
            base_money: 7,
            government_deposit: 0,
            banks: vec![BankSnapshot {
                bank: 0,
                narrow_money: 1,
                broad_money: 2,
                loan_book: 3,
                new_lending: 4,
                reserves: 5,
                capital: 6,
                assets: 9,
                liabilities: 3,
                interest_income: 1,
                binding: Some(Constraint::Reserve),
                insolvent: false,
            }],
        }
    }

    #[test]
    fn empty_run_is_header_only() {
        let out = export_series(&[], 1, Vec::new()).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("step,base_rate_bp,narrow_money,"));
        assert!(text.trim_end().ends_with("b0_binding,b0_insolvent"));
    }

    #[test]
    fn one_row_per_step() {
        let snaps: Vec<Snapshot> = (0..600).map(snap).collect();
        let text = String::from_utf8(export_series(&snaps, 1, Vec::new()).unwrap()).unwrap();
        assert_eq!(text.lines().count(), 601);
        assert_eq!(text.lines().nth(1).unwrap(), "0,200,1,2,3,4,5,6,7,0,1,2,3,4,5,6,reserve,0");
    }
}
