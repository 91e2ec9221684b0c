//! Loan mathematics for the three instrument types: fixed-term compound
//! (annuity), fixed-term simple interest, and index-linked annuities.
//!
//! One period is one simulation step (a month); the period rate is
//! `annual_rate / 12`. Interest is rounded half up to a minor unit and any
//! residue lands in the final payment, so principal portions always sum to the
//! principal exactly.

use num_bigint::BigInt;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::amount::{mul_div_floor, mul_div_half_up, Amount, BasisPoints, PerMil};
use crate::Money;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Instrument {
    #[default]
    Compound,
    Simple,
    Indexed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoanTerms<A = Money> {
    pub principal: A,
    pub annual_rate: BasisPoints,
    pub periods: u32,
    pub instrument: Instrument,
    pub risk_weight: PerMil,
}

impl<A: Amount> LoanTerms<A> {
    pub fn validate(&self) -> Result<(), LoanError> {
        if self.principal <= A::zero() {
            return Err(LoanError::InvalidTerms(format!("principal must be positive, got {}", self.principal)));
        }
        if self.periods == 0 {
            return Err(LoanError::InvalidTerms("periods must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaymentDue<A = Money> {
    pub period: u32,
    pub interest: A,
    pub principal: A,
}

impl<A: Amount> PaymentDue<A> {
    pub fn total(&self) -> A {
        self.interest + self.principal
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LoanStatus {
    Active,
    Repaid,
    Defaulted,
}

/// Per-period multiplicative index factors for index-linked loans.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IndexSeries(pub Vec<PerMil>);

impl IndexSeries {
    pub fn factor(&self, period: u32) -> Option<PerMil> {
        self.0.get(period as usize).copied()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LoanError {
    #[error("invalid loan terms: {0}")]
    InvalidTerms(String),
    #[error("operation needs a {expected:?} loan, got {got:?}")]
    WrongInstrument { expected: Instrument, got: Instrument },
    #[error("index series has no factor for period {0}")]
    MissingIndexFactor(u32),
    #[error("payment of {got} does not match the scheduled {expected}")]
    WrongAmount { expected: String, got: String },
    #[error("loan is {0:?}, not active")]
    LoanNotActive(LoanStatus),
}

/// Level payment that retires `principal` over `periods` at `rate`, rounded
/// half up. Computed exactly with big integers:
/// `P * bp * X^n / (Y * (X^n - Y^n))` with `Y = 120000`, `X = Y + bp`.
pub fn annuity_payment<A: Amount>(principal: A, rate: BasisPoints, periods: u32) -> A {
    assert!(periods > 0);
    if rate.0 == 0 {
        return mul_div_floor(principal, 1, periods as i128);
    }
    let y = BigInt::from(120_000u32);
    let x = &y + BigInt::from(rate.0);
    let xn = x.pow(periods);
    let yn = y.pow(periods);
    let num = BigInt::from(principal.to_wide()) * BigInt::from(rate.0) * &xn;
    let den = &y * (&xn - &yn);
    let q: BigInt = (num * 2 + &den) / (den * 2);
    A::from_wide(q.to_i128().expect("payment fits in i128"))
}

/// Forward amortization at a level payment: interest on the running balance,
/// the remainder of the payment to principal, the final period retires
/// whatever is left.
fn amortize<A: Amount>(principal: A, rate: BasisPoints, periods: u32, payment: A) -> Vec<PaymentDue<A>> {
    let mut balance = principal;
    (0..periods)
        .map(|period| {
            let interest = rate.monthly_interest(balance);
            let principal = if period + 1 == periods {
                balance
            } else {
                (payment - interest).max(A::zero()).min(balance)
            };
            balance = balance - principal;
            PaymentDue { period, interest, principal }
        })
        .collect()
}

pub fn annuity_schedule<A: Amount>(terms: &LoanTerms<A>) -> Result<Vec<PaymentDue<A>>, LoanError> {
    terms.validate()?;
    if terms.instrument != Instrument::Compound {
        return Err(LoanError::WrongInstrument { expected: Instrument::Compound, got: terms.instrument });
    }
    let payment = annuity_payment(terms.principal, terms.annual_rate, terms.periods);
    Ok(amortize(terms.principal, terms.annual_rate, terms.periods, payment))
}

/// Straight-line principal with interest charged on the original principal
/// every period.
pub fn simple_schedule<A: Amount>(terms: &LoanTerms<A>) -> Result<Vec<PaymentDue<A>>, LoanError> {
    terms.validate()?;
    if terms.instrument != Instrument::Simple {
        return Err(LoanError::WrongInstrument { expected: Instrument::Simple, got: terms.instrument });
    }
    let n = terms.periods;
    let p = terms.principal;
    let installment = mul_div_floor(p, 1, n as i128);
    let total_interest = mul_div_half_up(p, terms.annual_rate.0 as i128 * n as i128, 120_000);
    let mut per_period = terms.annual_rate.monthly_interest(p);
    if per_period * A::from_wide((n - 1) as i128) > total_interest {
        per_period = mul_div_floor(p, terms.annual_rate.0 as i128, 120_000);
    }
    let last = n - 1;
    Ok((0..n)
        .map(|period| {
            if period == last {
                let k = A::from_wide(last as i128);
                PaymentDue {
                    period,
                    interest: total_interest - per_period * k,
                    principal: p - installment * k,
                }
            } else {
                PaymentDue { period, interest: per_period, principal: installment }
            }
        })
        .collect())
}

/// Due payment of an index-linked loan at `as_of_period`, replaying the loan
/// from origination with every scheduled payment made.
pub fn indexed_schedule<A: Amount>(terms: &LoanTerms<A>, index: &IndexSeries, as_of_period: u32) -> Result<PaymentDue<A>, LoanError> {
    if terms.instrument != Instrument::Indexed {
        return Err(LoanError::WrongInstrument { expected: Instrument::Indexed, got: terms.instrument });
    }
    if as_of_period >= terms.periods {
        return Err(LoanError::InvalidTerms(format!("period {as_of_period} beyond term {}", terms.periods)));
    }
    let mut state = LoanState::new(*terms)?;
    loop {
        state.rebase(index)?;
        let due = state.next_due().expect("active loan has a due payment");
        if state.period_index == as_of_period {
            return Ok(due);
        }
        state.apply_payment(due.total())?;
    }
}

/// Schedule of a fixed (compound or simple) loan.
pub fn fixed_schedule<A: Amount>(terms: &LoanTerms<A>) -> Result<Vec<PaymentDue<A>>, LoanError> {
    match terms.instrument {
        Instrument::Compound => annuity_schedule(terms),
        Instrument::Simple => simple_schedule(terms),
        Instrument::Indexed => Err(LoanError::WrongInstrument { expected: Instrument::Compound, got: Instrument::Indexed }),
    }
}

/// A loan in progress.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LoanState<A = Money> {
    pub terms: LoanTerms<A>,
    pub outstanding: A,
    pub period_index: u32,
    /// Full schedule for fixed instruments; the payments made so far for indexed ones.
    pub schedule: Vec<PaymentDue<A>>,
    pub status: LoanStatus,
    level_payment: A,
    rebased_for: Option<u32>,
}

impl<A: Amount> LoanState<A> {
    pub fn new(terms: LoanTerms<A>) -> Result<Self, LoanError> {
        terms.validate()?;
        let (schedule, level_payment) = match terms.instrument {
            Instrument::Indexed => (Vec::new(), annuity_payment(terms.principal, terms.annual_rate, terms.periods)),
            _ => (fixed_schedule(&terms)?, A::zero()),
        };
        Ok(LoanState {
            terms,
            outstanding: terms.principal,
            period_index: 0,
            schedule,
            status: LoanStatus::Active,
            level_payment,
            rebased_for: None,
        })
    }

    pub fn is_active(&self) -> bool {
        self.status == LoanStatus::Active
    }

    /// Payment due for the current period, if the loan is active.
    pub fn next_due(&self) -> Option<PaymentDue<A>> {
        if !self.is_active() {
            return None;
        }
        match self.terms.instrument {
            Instrument::Indexed => {
                let period = self.period_index;
                let interest = self.terms.annual_rate.monthly_interest(self.outstanding);
                let principal = if period + 1 == self.terms.periods {
                    self.outstanding
                } else {
                    (self.level_payment - interest).max(A::zero()).min(self.outstanding)
                };
                Some(PaymentDue { period, interest, principal })
            }
            _ => self.schedule.get(self.period_index as usize).copied(),
        }
    }

    /// Applies the current period's index factor to the outstanding balance
    /// and, when the balance moved, recomputes the level payment over the
    /// remaining term. Returns the signed change in outstanding. A no-op for
    /// fixed instruments and when already applied for this period.
    pub fn rebase(&mut self, index: &IndexSeries) -> Result<A, LoanError> {
        if self.terms.instrument != Instrument::Indexed || !self.is_active() || self.rebased_for == Some(self.period_index) {
            return Ok(A::zero());
        }
        let f = index.factor(self.period_index).ok_or(LoanError::MissingIndexFactor(self.period_index))?;
        let rebased = mul_div_half_up(self.outstanding, f.0 as i128, 1000);
        let delta = rebased - self.outstanding;
        if !delta.is_zero() {
            self.outstanding = rebased;
            self.level_payment = annuity_payment(rebased, self.terms.annual_rate, self.terms.periods - self.period_index);
        }
        self.rebased_for = Some(self.period_index);
        Ok(delta)
    }

    /// Applies exactly the scheduled payment for the current period.
    /// Partial payments are refused.
    pub fn apply_payment(&mut self, amount: A) -> Result<PaymentDue<A>, LoanError> {
        let due = self.next_due().ok_or(LoanError::LoanNotActive(self.status))?;
        if amount != due.total() {
            return Err(LoanError::WrongAmount { expected: due.total().to_string(), got: amount.to_string() });
        }
        self.outstanding = self.outstanding - due.principal;
        if self.terms.instrument == Instrument::Indexed {
            self.schedule.push(due);
        }
        self.period_index += 1;
        if self.period_index == self.terms.periods {
            debug_assert!(self.outstanding.is_zero());
            self.status = LoanStatus::Repaid;
        }
        Ok(due)
    }

    /// Marks the loan defaulted and returns the principal to write off.
    pub fn write_off(&mut self) -> Result<A, LoanError> {
        if !self.is_active() {
            return Err(LoanError::LoanNotActive(self.status));
        }
        self.status = LoanStatus::Defaulted;
        Ok(self.outstanding)
    }

    /// Sum of every payment still to come (fixed instruments only; indexed
    /// loans depend on future index factors).
    pub fn remaining_payments(&self) -> Option<A> {
        match self.terms.instrument {
            Instrument::Indexed => None,
            _ => Some(self.schedule[self.period_index as usize..].iter().map(|d| d.total()).sum()),
        }
    }
}
