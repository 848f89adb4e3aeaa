//! Two's-complement fixed-point scalars with a configurable Q format.
//!
//! Operands are `N` bits wide with `f` fractional bits. Products are kept
//! exact in `2N` bits with `2f` fractional bits and summed in a
//! [`WideAccumulator`] that is wide enough that overflow cannot happen for
//! any realistic vector length. Only the final rescale back to `f`
//! fractional bits rounds (half to even) and saturates.

use std::fmt;

use crate::error::{Error, Result};

/// Q-format descriptor: `total_bits` wide, `frac_bits` of which are fractional.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FixedFormat {
    total_bits: u32,
    frac_bits: u32,
}

impl FixedFormat {
    /// Q8.8, the default 16-bit operand format.
    pub const Q8_8: FixedFormat = FixedFormat { total_bits: 16, frac_bits: 8 };

    pub fn new(total_bits: u32, frac_bits: u32) -> Result<Self> {
        if !(2..=32).contains(&total_bits) || frac_bits >= total_bits {
            return Err(Error::InvalidFormat { bits: total_bits, frac: frac_bits });
        }
        Ok(Self { total_bits, frac_bits })
    }

    /// Parses `"<bits>.<frac>"`, e.g. `"16.8"`.
    pub fn parse(s: &str) -> Result<Self> {
        let (b, f) = s
            .split_once('.')
            .ok_or_else(|| Error::InvalidInput(format!("format `{s}` is not <bits>.<frac>")))?;
        let parse = |t: &str| {
            t.trim()
                .parse::<u32>()
                .map_err(|_| Error::InvalidInput(format!("format `{s}` is not <bits>.<frac>")))
        };
        Self::new(parse(b)?, parse(f)?)
    }

    #[inline]
    pub fn bits(&self) -> u32 {
        self.total_bits
    }

    #[inline]
    pub fn frac(&self) -> u32 {
        self.frac_bits
    }

    #[inline]
    pub fn min_raw(&self) -> i32 {
        (-(1i64 << (self.total_bits - 1))) as i32
    }

    #[inline]
    pub fn max_raw(&self) -> i32 {
        ((1i64 << (self.total_bits - 1)) - 1) as i32
    }

    #[inline]
    pub fn contains(&self, raw: i64) -> bool {
        raw >= self.min_raw() as i64 && raw <= self.max_raw() as i64
    }

    /// Clamps an arbitrary integer into the representable raw range.
    #[inline]
    pub fn saturate(&self, raw: i128) -> i32 {
        raw.clamp(self.min_raw() as i128, self.max_raw() as i128) as i32
    }

    /// Magnitude of a raw value in `N` unsigned bits. The most negative
    /// value saturates to `2^(N-1) - 1`.
    #[inline]
    pub fn saturating_abs(&self, raw: i32) -> u32 {
        if raw == self.min_raw() {
            self.max_raw() as u32
        } else {
            raw.unsigned_abs()
        }
    }

    /// Accumulator width for this format: `2N + 16` bits.
    #[inline]
    pub fn accumulator_width(&self) -> u32 {
        2 * self.total_bits + 16
    }

    fn key(&self) -> (u32, u32) {
        (self.total_bits, self.frac_bits)
    }

    pub(crate) fn ensure_same(&self, other: &FixedFormat) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::FormatMismatch(self.key(), other.key()))
        }
    }
}

impl Default for FixedFormat {
    fn default() -> Self {
        Self::Q8_8
    }
}

impl fmt::Display for FixedFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.total_bits, self.frac_bits)
    }
}

/// A fixed-point value: `raw * 2^-frac`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FixedScalar {
    raw: i32,
    format: FixedFormat,
}

impl FixedScalar {
    pub fn from_raw(raw: i64, format: FixedFormat) -> Result<Self> {
        if !format.contains(raw) {
            return Err(Error::RawOutOfRange { raw, bits: format.bits() });
        }
        Ok(Self { raw: raw as i32, format })
    }

    pub fn zero(format: FixedFormat) -> Self {
        Self { raw: 0, format }
    }

    #[inline]
    pub fn raw(&self) -> i32 {
        self.raw
    }

    #[inline]
    pub fn format(&self) -> FixedFormat {
        self.format
    }

    pub fn to_f64(&self) -> f64 {
        dequantize(*self)
    }

    #[inline]
    pub fn magnitude(&self) -> u32 {
        self.format.saturating_abs(self.raw)
    }
}

impl fmt::Display for FixedScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_f64())
    }
}

/// Round-half-to-even quantization of a real value, saturating at the range
/// limits. NaN is rejected.
pub fn quantize(x: f64, fmt: FixedFormat) -> Result<FixedScalar> {
    if x.is_nan() {
        return Err(Error::InvalidInput("cannot quantize NaN".into()));
    }
    let scaled = (x * (fmt.frac() as f64).exp2()).round_ties_even();
    let raw = scaled.clamp(fmt.min_raw() as f64, fmt.max_raw() as f64) as i32;
    Ok(FixedScalar { raw, format: fmt })
}

pub fn dequantize(v: FixedScalar) -> f64 {
    v.raw as f64 / (v.format.frac() as f64).exp2()
}

/// Exact `2N`-bit product of two raw values (`2f` fractional bits).
pub fn multiply_exact(a: FixedScalar, b: FixedScalar) -> Result<i64> {
    a.format.ensure_same(&b.format)?;
    Ok(a.raw as i64 * b.raw as i64)
}

/// Arithmetic shift right by `shift` bits, rounding half to even.
pub fn shift_round_half_even(v: i128, shift: u32) -> i128 {
    if shift == 0 {
        return v;
    }
    let q = v >> shift;
    let r = v - (q << shift);
    let half = 1i128 << (shift - 1);
    if r > half || (r == half && q & 1 == 1) {
        q + 1
    } else {
        q
    }
}

/// Exact running sum of products, `2f` fractional bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WideAccumulator {
    raw: i128,
    width: u32,
}

impl WideAccumulator {
    /// Zeroed accumulator sized for `fmt` (`2N + 16` bits).
    pub fn new(fmt: FixedFormat) -> Self {
        Self { raw: 0, width: fmt.accumulator_width() }
    }

    pub fn with_width(width: u32) -> Result<Self> {
        if !(2..=127).contains(&width) {
            return Err(Error::InvalidInput(format!("accumulator width {width} unsupported")));
        }
        Ok(Self { raw: 0, width })
    }

    #[inline]
    pub fn raw(&self) -> i128 {
        self.raw
    }

    #[inline]
    pub fn width(&self) -> u32 {
        self.width
    }

    fn fits(&self, v: i128) -> bool {
        let lim = 1i128 << (self.width - 1);
        v >= -lim && v < lim
    }

    pub fn accumulate(self, product: i64) -> Result<Self> {
        self.add_raw(product as i128)
    }

    pub(crate) fn add_raw(self, v: i128) -> Result<Self> {
        let raw = self
            .raw
            .checked_add(v)
            .filter(|s| self.fits(*s))
            .ok_or(Error::AccumulatorOverflow { width: self.width })?;
        Ok(Self { raw, width: self.width })
    }

    /// Adds a bias given in the operand format (`f` fractional bits).
    pub fn add_bias(self, bias: FixedScalar) -> Result<Self> {
        self.add_raw((bias.raw as i128) << bias.format.frac())
    }

    /// Rescales from `2f` to `f` fractional bits and saturates, no ReLU.
    pub fn to_fixed(&self, fmt: FixedFormat) -> FixedScalar {
        let raw = fmt.saturate(shift_round_half_even(self.raw, fmt.frac()));
        FixedScalar { raw, format: fmt }
    }
}

pub fn accumulate(acc: WideAccumulator, product: i64) -> Result<WideAccumulator> {
    acc.accumulate(product)
}

/// `max(acc, 0)` rescaled to `fmt`.
pub fn relu(acc: WideAccumulator, fmt: FixedFormat) -> FixedScalar {
    let clamped = WideAccumulator { raw: acc.raw.max(0), width: acc.width };
    clamped.to_fixed(fmt)
}

/// ReLU on a value already in operand format.
pub fn relu_scalar(v: FixedScalar) -> FixedScalar {
    FixedScalar { raw: v.raw.max(0), format: v.format }
}
