//! Two-tier weight arithmetic shared by the engine and the accounting layer.
//!
//! Every node and edge weight the engine handles is a sum of entries of the
//! geometric table `(1+eps)^-k`. The float tier rounds each table entry once
//! from its exact rational value and afterwards only adds and subtracts those
//! fixed constants, so an add/remove pair of the same entry cancels bit for
//! bit. The exact tier keeps each weight as an integer numerator over one
//! fixed denominator, which turns every threshold comparison and every ledger
//! identity into a pure integer test.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, Pow, Signed, ToPrimitive, Zero};
use thiserror::Error;

pub use num_bigint::BigInt;
pub use num_rational::BigRational;

/// The approximation parameter as an exact reduced rational in (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EpsRational {
    num: u64,
    den: u64,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EpsError {
    #[error("cannot parse `{0}` as a rational: expected `p/q` or a decimal like `0.1`")]
    Malformed(String),
    #[error("epsilon must satisfy 0 < eps < 1, got {0}")]
    OutOfRange(String),
}

impl EpsRational {
    /// Reduces `num/den` and checks it lies strictly between 0 and 1.
    pub fn new(num: u64, den: u64) -> Result<Self, EpsError> {
        if den == 0 {
            return Err(EpsError::Malformed(format!("{num}/{den}")));
        }
        if num == 0 || num >= den {
            return Err(EpsError::OutOfRange(format!("{num}/{den}")));
        }
        let g = num.gcd(&den);
        Ok(EpsRational {
            num: num / g,
            den: den / g,
        })
    }

    #[inline]
    pub fn num(&self) -> u64 {
        self.num
    }

    #[inline]
    pub fn den(&self) -> u64 {
        self.den
    }

    pub fn as_rational(&self) -> BigRational {
        BigRational::new(BigInt::from(self.num), BigInt::from(self.den))
    }
}

impl fmt::Display for EpsRational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

fn parse_u64_digits(s: &str) -> Option<u64> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse().ok()
}

impl FromStr for EpsRational {
    type Err = EpsError;

    /// Accepts `p/q` or a decimal such as `0.3`, both converted exactly.
    fn from_str(s: &str) -> Result<Self, EpsError> {
        if let Some((num, den)) = s.split_once('/') {
            let num = parse_u64_digits(num).ok_or_else(|| EpsError::Malformed(s.into()))?;
            let den = parse_u64_digits(den).ok_or_else(|| EpsError::Malformed(s.into()))?;
            return EpsRational::new(num, den);
        }
        if let Some((int_part, frac)) = s.split_once('.') {
            let int_v = if int_part.is_empty() {
                0
            } else {
                parse_u64_digits(int_part).ok_or_else(|| EpsError::Malformed(s.into()))?
            };
            if frac.is_empty() {
                return Err(EpsError::Malformed(s.into()));
            }
            let frac_v = parse_u64_digits(frac).ok_or_else(|| EpsError::Malformed(s.into()))?;
            let scale = 10u64
                .checked_pow(frac.len() as u32)
                .ok_or_else(|| EpsError::Malformed(s.into()))?;
            let num = int_v
                .checked_mul(scale)
                .and_then(|v| v.checked_add(frac_v))
                .ok_or_else(|| EpsError::Malformed(s.into()))?;
            return EpsRational::new(num, scale);
        }
        match parse_u64_digits(s) {
            Some(_) => Err(EpsError::OutOfRange(s.into())),
            None => Err(EpsError::Malformed(s.into())),
        }
    }
}

/// Smallest `L >= 0` with `(1+eps)^L >= n`, found by exact integer powering:
/// the test `(p+q)^L >= n * q^L` never touches floating point.
pub fn level_count(n: u32, eps: EpsRational) -> u32 {
    assert!(n >= 1, "level_count requires a positive node count");
    let grow = BigUint::from(eps.num) + BigUint::from(eps.den);
    let q = BigUint::from(eps.den);
    let mut lhs = BigUint::one();
    let mut rhs = BigUint::from(n);
    let mut level = 0u32;
    while lhs < rhs {
        lhs *= &grow;
        rhs *= &q;
        level += 1;
    }
    level
}

/// Exact-rational constants derived from `(n, eps)`: the geometric weight
/// table, its fixed-denominator integer images, and the per-level energy
/// rates.
#[derive(Debug, Clone)]
pub struct ExactTables {
    eps: EpsRational,
    level_bound: u32,
    /// Common denominator `q^2 * (p+q)^L`. Every table entry up to index L,
    /// the constant 1, and the thresholds `1 +- eps` are integer multiples of
    /// `1/denom`; since `L >= 2` whenever the graph can hold an edge, every
    /// such value also has a reduced denominator dividing `(p+q)^L * q^L`.
    denom: BigInt,
    /// `table[k] = (1+eps)^-k` for `k` in `[0, L+1]`; the extra entry serves
    /// the fractional matching weight of a level-L edge.
    table: Vec<BigRational>,
    /// `table[k] * denom`, an integer, for `k` in `[0, L]`.
    table_num: Vec<BigInt>,
    /// `rate[k] = (1+eps)^k / eps`, converting potential at level k to energy.
    rate: Vec<BigRational>,
}

impl ExactTables {
    pub fn new(n: u32, eps: EpsRational) -> Self {
        let level_bound = level_count(n, eps);
        let p_plus_q = BigInt::from(eps.num) + BigInt::from(eps.den);
        let q = BigInt::from(eps.den);
        let denom = &q * &q * Pow::pow(&p_plus_q, level_bound);

        let step = BigRational::new(q.clone(), p_plus_q.clone());
        let mut table = Vec::with_capacity(level_bound as usize + 2);
        let mut entry = BigRational::one();
        for _ in 0..=level_bound + 1 {
            table.push(entry.clone());
            entry *= &step;
        }

        let denom_rat = BigRational::from(denom.clone());
        let table_num = table[..=level_bound as usize]
            .iter()
            .map(|entry| {
                let scaled = entry * &denom_rat;
                assert!(scaled.is_integer());
                scaled.to_integer()
            })
            .collect();

        let growth = BigRational::new(p_plus_q, q);
        let mut rate_entry = growth.recip() * eps.as_rational().recip();
        let mut rate = Vec::with_capacity(level_bound as usize + 1);
        for _ in 0..=level_bound {
            rate_entry *= &growth;
            rate.push(rate_entry.clone());
        }

        ExactTables {
            eps,
            level_bound,
            denom,
            table,
            table_num,
            rate,
        }
    }

    #[inline]
    pub fn eps(&self) -> EpsRational {
        self.eps
    }

    pub fn eps_rational(&self) -> BigRational {
        self.eps.as_rational()
    }

    /// The level bound L.
    #[inline]
    pub fn level_bound(&self) -> u32 {
        self.level_bound
    }

    #[inline]
    pub fn denom(&self) -> &BigInt {
        &self.denom
    }

    /// `(1+eps)^-k`, defined for `k` in `[0, level_bound + 1]`.
    #[inline]
    pub fn entry(&self, k: usize) -> &BigRational {
        &self.table[k]
    }

    /// The integer numerator of `(1+eps)^-k` over [`Self::denom`].
    #[inline]
    pub fn entry_num(&self, k: usize) -> &BigInt {
        &self.table_num[k]
    }

    /// `(1+eps)^k / eps` for `k` in `[0, level_bound]`.
    #[inline]
    pub fn rate(&self, k: usize) -> &BigRational {
        &self.rate[k]
    }

    pub fn one_plus_eps(&self) -> BigRational {
        BigRational::one() + self.eps_rational()
    }

    pub fn one_minus_eps(&self) -> BigRational {
        BigRational::one() - self.eps_rational()
    }

    /// Scales an exact rational onto the fixed denominator, asserting that no
    /// precision is lost.
    pub fn to_scaled(&self, value: &BigRational) -> BigInt {
        let scaled = value * BigRational::from(self.denom.clone());
        assert!(
            scaled.is_integer(),
            "value {value} is not a multiple of 1/denom"
        );
        scaled.to_integer()
    }

    /// Reverses [`Self::to_scaled`].
    pub fn from_scaled(&self, numerator: &BigInt) -> BigRational {
        BigRational::new(numerator.clone(), self.denom.clone())
    }
}

/// One weight value, always a sum of weight-table entries. Implemented by
/// `f64` (the performance tier) and [`ExactWeight`] (an integer numerator
/// over the fixed table denominator).
pub trait WeightScalar: Clone + PartialOrd + fmt::Debug + 'static {
    fn zero() -> Self;

    /// Converts an exact rational (a table entry, a threshold, or an exact
    /// difference of entries) into this tier, rounding at most once.
    fn from_exact(tables: &ExactTables, value: &BigRational) -> Self;

    fn add_assign_w(&mut self, rhs: &Self);

    fn sub_assign_w(&mut self, rhs: &Self);

    /// `self` summed `count` times; used by the batched activity predicates.
    fn times(&self, count: u64) -> Self;

    fn minus(&self, rhs: &Self) -> Self {
        let mut out = self.clone();
        out.sub_assign_w(rhs);
        out
    }

    /// Approximate real value, for stats and logs only.
    fn approx_f64(&self, tables: &ExactTables) -> f64;

    /// The exact rational value when the tier is lossless, `None` for
    /// floats. Verifiers use this to pick between exact and tolerance
    /// comparison.
    fn as_exact_rational(&self, _tables: &ExactTables) -> Option<BigRational> {
        None
    }

    /// Tier name used in stats output.
    fn mode_name() -> &'static str;
}

impl WeightScalar for f64 {
    fn zero() -> Self {
        0.0
    }

    fn from_exact(_tables: &ExactTables, value: &BigRational) -> Self {
        ratio_to_f64(value.numer(), value.denom())
    }

    fn add_assign_w(&mut self, rhs: &Self) {
        *self += rhs;
    }

    fn sub_assign_w(&mut self, rhs: &Self) {
        *self -= rhs;
    }

    fn times(&self, count: u64) -> Self {
        self * count as f64
    }

    fn approx_f64(&self, _tables: &ExactTables) -> f64 {
        *self
    }

    fn mode_name() -> &'static str {
        "float"
    }
}

/// Exact-tier weight: an integer numerator over [`ExactTables::denom`].
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord)]
pub struct ExactWeight(BigInt);

impl ExactWeight {
    pub fn from_numerator(numerator: BigInt) -> Self {
        ExactWeight(numerator)
    }

    #[inline]
    pub fn numerator(&self) -> &BigInt {
        &self.0
    }

    pub fn to_rational(&self, tables: &ExactTables) -> BigRational {
        tables.from_scaled(&self.0)
    }
}

impl WeightScalar for ExactWeight {
    fn zero() -> Self {
        ExactWeight(BigInt::zero())
    }

    fn from_exact(tables: &ExactTables, value: &BigRational) -> Self {
        ExactWeight(tables.to_scaled(value))
    }

    fn add_assign_w(&mut self, rhs: &Self) {
        self.0 += &rhs.0;
    }

    fn sub_assign_w(&mut self, rhs: &Self) {
        self.0 -= &rhs.0;
    }

    fn times(&self, count: u64) -> Self {
        ExactWeight(&self.0 * count)
    }

    fn approx_f64(&self, tables: &ExactTables) -> f64 {
        ratio_to_f64(&self.0, tables.denom())
    }

    fn as_exact_rational(&self, tables: &ExactTables) -> Option<BigRational> {
        Some(self.to_rational(tables))
    }

    fn mode_name() -> &'static str {
        "exact"
    }
}

/// Correctly rounded conversion of `num/den` to f64 (round to nearest, ties
/// to even). The naive float-divide route returns NaN once both sides exceed
/// the f64 range, which exact-tier denominators routinely do.
pub fn ratio_to_f64(num: &BigInt, den: &BigInt) -> f64 {
    assert!(!den.is_zero(), "ratio_to_f64 with zero denominator");
    if num.is_zero() {
        return 0.0;
    }
    let negative = num.is_negative() != den.is_negative();
    let value = magnitude_ratio_to_f64(num.magnitude(), den.magnitude());
    if negative {
        -value
    } else {
        value
    }
}

fn magnitude_ratio_to_f64(num: &BigUint, den: &BigUint) -> f64 {
    // Scale so the integer quotient carries 54 or 55 significant bits, then
    // round by hand with the remainder as the sticky bit.
    let shift = num.bits() as i64 - den.bits() as i64 - 54;
    let (q, r) = if shift >= 0 {
        num.div_rem(&(den << shift as u64))
    } else {
        (num << (-shift) as u64).div_rem(den)
    };
    let sticky = !r.is_zero();
    let extra = q.bits() as i64 - 53;
    debug_assert!(extra == 1 || extra == 2);
    let q = q.to_u64().expect("scaled quotient fits in u64");
    let half = 1u64 << (extra - 1);
    let low = q & ((1u64 << extra) - 1);
    let mut mant = q >> extra;
    if low > half || (low == half && (sticky || mant & 1 == 1)) {
        mant += 1;
    }
    let exp = shift + extra;
    if exp > 1023 {
        return f64::INFINITY;
    }
    if exp >= -1022 {
        return mant as f64 * exact_pow2(exp);
    }
    if exp < -2044 {
        return 0.0;
    }
    // Values this small only arise far outside the engine's weight range;
    // the split multiply may double-round in the subnormal band.
    mant as f64 * exact_pow2(-1022) * exact_pow2(exp + 1022)
}

fn exact_pow2(e: i64) -> f64 {
    debug_assert!((-1022..=1023).contains(&e));
    f64::from_bits(((e + 1023) as u64) << 52)
}
