//! Runtime-parameterized signed Q-format fixed point.
//!
//! The datapath runs in Q12.12 and accumulators in Q16.16. Every format
//! change rounds to nearest (ties to even) and saturates at the range ends.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Widest supported format. Raw values live in `i64`, products in `i128`.
pub const MAX_TOTAL_BITS: u32 = 48;

/// Rounding applied whenever fractional bits are dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rounding {
    #[default]
    NearestEven,
    /// Round toward negative infinity (plain arithmetic shift).
    Truncate,
}

/// A signed fixed-point format `Q<int_bits>.<frac_bits>`; `int_bits` includes the sign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct FixedSpec {
    int_bits: u32,
    frac_bits: u32,
    rounding: Rounding,
}

/// Datapath format.
pub const Q12_12: FixedSpec = FixedSpec { int_bits: 12, frac_bits: 12, rounding: Rounding::NearestEven };
/// Accumulator format.
pub const Q16_16: FixedSpec = FixedSpec { int_bits: 16, frac_bits: 16, rounding: Rounding::NearestEven };

impl FixedSpec {
    pub fn new(int_bits: u32, frac_bits: u32) -> Result<Self> {
        let total = int_bits + frac_bits;
        if int_bits < 1 {
            return Err(Error::Config("fixed-point format needs at least the sign bit".into()));
        }
        if total > MAX_TOTAL_BITS {
            return Err(Error::Config(format!("Q{int_bits}.{frac_bits} is wider than {MAX_TOTAL_BITS} bits")));
        }
        Ok(Self { int_bits, frac_bits, rounding: Rounding::NearestEven })
    }

    pub fn with_rounding(mut self, rounding: Rounding) -> Self {
        self.rounding = rounding;
        self
    }

    #[inline]
    pub fn int_bits(&self) -> u32 {
        self.int_bits
    }

    #[inline]
    pub fn frac_bits(&self) -> u32 {
        self.frac_bits
    }

    #[inline]
    pub fn total_bits(&self) -> u32 {
        self.int_bits + self.frac_bits
    }

    #[inline]
    pub fn rounding(&self) -> Rounding {
        self.rounding
    }

    #[inline]
    pub fn max_raw(&self) -> i64 {
        (1i64 << (self.total_bits() - 1)) - 1
    }

    #[inline]
    pub fn min_raw(&self) -> i64 {
        -(1i64 << (self.total_bits() - 1))
    }

    /// Value of one raw step, `2^-frac_bits`.
    pub fn resolution(&self) -> f64 {
        (-(self.frac_bits as f64)).exp2()
    }

    pub fn max_value(&self) -> f64 {
        self.max_raw() as f64 * self.resolution()
    }

    pub fn min_value(&self) -> f64 {
        self.min_raw() as f64 * self.resolution()
    }

    #[inline]
    fn saturate(&self, raw: i128) -> i64 {
        raw.clamp(self.min_raw() as i128, self.max_raw() as i128) as i64
    }

    /// Moves `raw` from `from_frac` fractional bits to this format.
    fn rescale(&self, raw: i128, from_frac: u32) -> i64 {
        self.saturate(self.align(raw, from_frac))
    }

    /// Rounds `raw` to this format's resolution without saturating.
    fn align(&self, raw: i128, from_frac: u32) -> i128 {
        let to_frac = self.frac_bits;
        match from_frac.cmp(&to_frac) {
            Ordering::Equal => raw,
            Ordering::Less => raw << (to_frac - from_frac),
            Ordering::Greater => shift_right_rounded(raw, from_frac - to_frac, self.rounding),
        }
    }
}

/// `raw / 2^shift` rounded per policy.
fn shift_right_rounded(raw: i128, shift: u32, rounding: Rounding) -> i128 {
    let floor = raw >> shift;
    match rounding {
        Rounding::Truncate => floor,
        Rounding::NearestEven => {
            let rem = raw - (floor << shift);
            let half = 1i128 << (shift - 1);
            match rem.cmp(&half) {
                Ordering::Greater => floor + 1,
                Ordering::Equal if floor & 1 == 1 => floor + 1,
                _ => floor,
            }
        }
    }
}

impl fmt::Display for FixedSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Q{}.{}", self.int_bits, self.frac_bits)
    }
}

impl FromStr for FixedSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("expected a format like \"Q12.12\", got {s:?}"));
        let body = s.trim().strip_prefix(['Q', 'q']).ok_or_else(bad)?;
        let (i, f) = body.split_once('.').ok_or_else(bad)?;
        let int_bits = i.parse().map_err(|_| bad())?;
        let frac_bits = f.parse().map_err(|_| bad())?;
        FixedSpec::new(int_bits, frac_bits)
    }
}

impl TryFrom<String> for FixedSpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<FixedSpec> for String {
    fn from(spec: FixedSpec) -> Self {
        spec.to_string()
    }
}

/// A fixed-point number: `raw * 2^-frac_bits` in format `spec`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FixedVal {
    raw: i64,
    spec: FixedSpec,
}

impl FixedVal {
    /// Wraps a raw integer, saturating it into the format's range.
    pub fn from_raw(raw: i64, spec: FixedSpec) -> Self {
        Self { raw: spec.saturate(raw as i128), spec }
    }

    pub fn zero(spec: FixedSpec) -> Self {
        Self { raw: 0, spec }
    }

    #[inline]
    pub fn raw(&self) -> i64 {
        self.raw
    }

    #[inline]
    pub fn spec(&self) -> FixedSpec {
        self.spec
    }

    pub fn value(&self) -> f64 {
        self.raw as f64 * self.spec.resolution()
    }

    pub fn is_saturated(&self) -> bool {
        self.raw == self.spec.max_raw() || self.raw == self.spec.min_raw()
    }
}

impl PartialOrd for FixedVal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        if self.spec.frac_bits == other.spec.frac_bits {
            Some(self.raw.cmp(&other.raw))
        } else {
            self.value().partial_cmp(&other.value())
        }
    }
}

impl fmt::Display for FixedVal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

/// Converts a real number into `spec`, rounding per the spec's policy and saturating.
pub fn quantize(x: f64, spec: FixedSpec) -> Result<FixedVal> {
    if !x.is_finite() {
        return Err(Error::NonFinite(x));
    }
    // Scaling by a power of two is exact; clamping first keeps the cast in range.
    let scaled = x * (spec.frac_bits as f64).exp2();
    let lo = spec.min_raw() as f64;
    let hi = spec.max_raw() as f64;
    let rounded = match spec.rounding {
        Rounding::NearestEven => scaled.clamp(lo - 1.0, hi + 1.0).round_ties_even(),
        Rounding::Truncate => scaled.clamp(lo - 1.0, hi + 1.0).floor(),
    };
    Ok(FixedVal { raw: spec.saturate(rounded as i128), spec })
}

/// Exact product of the raws, rescaled into `out`.
pub fn fx_mul(a: FixedVal, b: FixedVal, out: FixedSpec) -> FixedVal {
    let product = a.raw as i128 * b.raw as i128;
    FixedVal { raw: out.rescale(product, a.spec.frac_bits + b.spec.frac_bits), spec: out }
}

/// Saturating accumulation; `term` is rounded to `acc`'s resolution first if they differ.
pub fn fx_acc(acc: FixedVal, term: FixedVal) -> FixedVal {
    let term_raw = acc.spec.align(term.raw as i128, term.spec.frac_bits);
    FixedVal { raw: acc.spec.saturate(acc.raw as i128 + term_raw), spec: acc.spec }
}

/// Re-expresses `v` in `to`, rounding then saturating.
pub fn downcast(v: FixedVal, to: FixedSpec) -> FixedVal {
    FixedVal { raw: to.rescale(v.raw as i128, v.spec.frac_bits), spec: to }
}

impl Scalar for FixedVal {
    #[inline]
    fn zero_like(&self) -> Self {
        FixedVal::zero(self.spec)
    }

    fn one_like(&self) -> Self {
        FixedVal::from_raw(1i64 << self.spec.frac_bits, self.spec)
    }

    #[inline]
    fn add(self, rhs: Self) -> Self {
        fx_acc(self, rhs)
    }

    #[inline]
    fn mul(self, rhs: Self) -> Self {
        fx_mul(self, rhs, self.spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parse_and_display() {
        let q: FixedSpec = "Q12.12".parse().unwrap();
        assert_eq!(q, Q12_12);
        assert_eq!(q.total_bits(), 24);
        assert_eq!(Q16_16.to_string(), "Q16.16");
        assert!("12.12".parse::<FixedSpec>().is_err());
        assert!("Q0.8".parse::<FixedSpec>().is_err());
        assert!("Q40.40".parse::<FixedSpec>().is_err());
        assert_eq!("Q2.0".parse::<FixedSpec>().unwrap().max_raw(), 1);
    }

    #[test]
    fn range_and_resolution() {
        assert_eq!(Q12_12.max_value(), 2048.0 - 1.0 / 4096.0);
        assert_eq!(Q12_12.min_value(), -2048.0);
        assert_eq!(Q12_12.resolution(), 1.0 / 4096.0);
    }

    #[test]
    fn quantize_examples() {
        assert_eq!(quantize(1.5, Q12_12).unwrap().raw(), 6144);
        assert_eq!(quantize(0.0, Q12_12).unwrap().raw(), 0);
        assert_eq!(quantize(0.0, Q16_16).unwrap().raw(), 0);
        assert_eq!(quantize(5000.0, Q12_12).unwrap().raw(), (1 << 23) - 1);
        assert_eq!(quantize(-5000.0, Q12_12).unwrap().raw(), -(1 << 23));
        assert!(quantize(f64::NAN, Q12_12).is_err());
        assert!(quantize(f64::INFINITY, Q12_12).is_err());
    }

    #[test]
    fn quantize_ties_go_to_even() {
        let half_ulp = 0.5 / 4096.0;
        assert_eq!(quantize(half_ulp, Q12_12).unwrap().raw(), 0);
        assert_eq!(quantize(3.0 * half_ulp, Q12_12).unwrap().raw(), 2);
        assert_eq!(quantize(-half_ulp, Q12_12).unwrap().raw(), 0);
    }

    #[test]
    fn truncation_policy() {
        let q = Q12_12.with_rounding(Rounding::Truncate);
        assert_eq!(quantize(0.9 / 4096.0, q).unwrap().raw(), 0);
        assert_eq!(quantize(-0.1 / 4096.0, q).unwrap().raw(), -1);
    }

    #[test]
    fn mul_examples() {
        let a = quantize(1.5, Q12_12).unwrap();
        let b = quantize(2.0, Q12_12).unwrap();
        let p = fx_mul(a, b, Q16_16);
        assert_eq!(p.raw(), 196_608);
        assert_eq!(p.value(), 3.0);

        let tiny = FixedVal::from_raw(1, Q12_12);
        assert_eq!(fx_mul(tiny, tiny, Q16_16).raw(), 0);

        let mid = quantize(150.0, Q12_12).unwrap();
        assert_eq!(fx_mul(mid, mid, Q16_16).value(), 22_500.0);

        let big = quantize(200.0, Q12_12).unwrap();
        let sat = fx_mul(big, big, Q16_16);
        assert_eq!(sat.raw(), Q16_16.max_raw());
        assert!((sat.value() - 32767.9999847).abs() < 1e-6);
    }

    #[test]
    fn mul_rounds_half_ulp_to_even() {
        // 2^-8 * 2^-8 = 2^-16 is exactly one accumulator ulp; 3 * 2^-17 sits on a tie.
        let a = FixedVal::from_raw(16, Q12_12);
        assert_eq!(fx_mul(a, a, Q16_16).raw(), 1);
        let half = FixedVal::from_raw(128, Q12_12); // 2^-5
        let three = FixedVal::from_raw(3, Q12_12); // 3 * 2^-12
        // product = 3 * 2^-17 = 1.5 ulp -> 2
        assert_eq!(fx_mul(half, three, Q16_16).raw(), 2);
        let one = FixedVal::from_raw(1, Q12_12);
        // 2^-5 * 2^-12 = 0.5 ulp -> 0
        assert_eq!(fx_mul(half, one, Q16_16).raw(), 0);
    }

    #[test]
    fn acc_examples() {
        let x = quantize(3.25, Q16_16).unwrap();
        assert_eq!(fx_acc(FixedVal::zero(Q16_16), x), x);
        let max = FixedVal::from_raw(Q16_16.max_raw(), Q16_16);
        assert_eq!(fx_acc(max, FixedVal::from_raw(1, Q16_16)), max);
        let half = quantize(0.5, Q16_16).unwrap();
        let total = (0..1000).fold(FixedVal::zero(Q16_16), |acc, _| fx_acc(acc, half));
        assert_eq!(total.raw(), 500 << 16);
        assert_eq!(total.value(), 500.0);
    }

    #[test]
    fn downcast_examples() {
        assert_eq!(downcast(FixedVal::zero(Q16_16), Q12_12).raw(), 0);
        let exact = quantize(-7.75, Q16_16).unwrap();
        assert_eq!(downcast(exact, Q12_12).value(), -7.75);
        let big = quantize(30000.0, Q16_16).unwrap();
        assert_eq!(downcast(big, Q12_12).raw(), Q12_12.max_raw());
        // one accumulator ulp rounds away at the 2^-12 grid
        assert_eq!(downcast(FixedVal::from_raw(8, Q16_16), Q12_12).raw(), 0);
        assert_eq!(downcast(FixedVal::from_raw(24, Q16_16), Q12_12).raw(), 2);
    }

    #[test]
    fn scalar_impl_uses_own_format() {
        let a = quantize(1.5, Q12_12).unwrap();
        assert_eq!(a.mul(a.one_like()), a);
        assert_eq!(a.add(a.zero_like()), a);
        assert_eq!(a.mul(a).value(), 2.25);
    }

    fn spec_strategy() -> impl Strategy<Value = FixedSpec> {
        (1u32..=16, 0u32..=20).prop_map(|(i, f)| FixedSpec::new(i, f).unwrap())
    }

    proptest! {
        #[test]
        fn representable_values_roundtrip(spec in spec_strategy(), raw in any::<i64>()) {
            let raw = raw.clamp(spec.min_raw(), spec.max_raw());
            let x = FixedVal::from_raw(raw, spec).value();
            prop_assert_eq!(quantize(x, spec).unwrap().raw(), raw);
        }

        #[test]
        fn quantize_is_monotone(spec in spec_strategy(), x in -1e5f64..1e5, y in -1e5f64..1e5) {
            let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
            prop_assert!(quantize(lo, spec).unwrap().raw() <= quantize(hi, spec).unwrap().raw());
        }

        #[test]
        fn quantize_error_within_half_ulp(spec in spec_strategy(), u in 0.0f64..1.0) {
            let x = spec.min_value() + u * (spec.max_value() - spec.min_value());
            let q = quantize(x, spec).unwrap();
            prop_assert!((q.value() - x).abs() <= spec.resolution() / 2.0);
        }
    }
}
