//! Integer money.
//!
//! Every balance in the simulator is a count of minor currency units held in a
//! signed primitive integer. The ledger and loan code is generic over
//! [`Amount`] so the same bookkeeping runs on `i64` (the default, see
//! [`crate::Money`]) or `i128` for very large scenarios.

use core::fmt::{Debug, Display};
use core::hash::Hash;
use core::iter::Sum;

use num_traits::{FromPrimitive, PrimInt, Signed, ToPrimitive};

/// Signed integer type usable as a money amount in minor units.
pub trait Amount:
    PrimInt + Signed + FromPrimitive + ToPrimitive + Sum<Self> + Hash + Debug + Display + Default + Send + Sync + 'static
{
    fn to_wide(self) -> i128 {
        self.to_i128().expect("amount fits in i128")
    }

    /// Narrows a wide intermediate back into `Self`. Panics on overflow, which
    /// only happens when a scenario outgrows the chosen amount type.
    fn from_wide(v: i128) -> Self {
        Self::from_i128(v).unwrap_or_else(|| panic!("amount {v} overflows {}", core::any::type_name::<Self>()))
    }
}

impl Amount for i32 {}
impl Amount for i64 {}
impl Amount for i128 {}

/// `round_half_up(a * num / den)` for non-negative operands, computed in 128 bits.
pub fn mul_div_half_up<A: Amount>(a: A, num: i128, den: i128) -> A {
    debug_assert!(den > 0);
    let n = a.to_wide() * num;
    A::from_wide(div_half_up(n, den))
}

/// `floor(a * num / den)` for non-negative operands.
pub fn mul_div_floor<A: Amount>(a: A, num: i128, den: i128) -> A {
    debug_assert!(den > 0);
    A::from_wide((a.to_wide() * num).div_euclid(den))
}

/// Half-up division of wide integers (ties round away from negative infinity).
pub fn div_half_up(n: i128, den: i128) -> i128 {
    (2 * n + den).div_euclid(2 * den)
}

/// Parts-per-thousand, the unit used for regulatory ratios and risk weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct PerMil(pub u32);

impl PerMil {
    pub const ONE: PerMil = PerMil(1000);

    pub fn of<A: Amount>(self, a: A) -> A {
        mul_div_half_up(a, self.0 as i128, 1000)
    }

    pub fn as_fraction(self) -> f64 {
        self.0 as f64 / 1000.0
    }
}

impl Display for PerMil {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{}.{}%", self.0 / 10, self.0 % 10)
    }
}

/// Annual interest rate in basis points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct BasisPoints(pub u32);

impl BasisPoints {
    /// One month's interest on `balance`, rounded half up to a minor unit.
    pub fn monthly_interest<A: Amount>(self, balance: A) -> A {
        mul_div_half_up(balance, self.0 as i128, 120_000)
    }
}

impl Display for BasisPoints {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{}bp", self.0)
    }
}
