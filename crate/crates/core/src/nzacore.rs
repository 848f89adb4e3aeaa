//! Near-zero approximation: leading-zero counting, the product LZC bound,
//! threshold mapping and the per-cycle NZAU filter.
//!
//! For nonzero `N`-bit magnitudes `A`, `B` with leading-zero counts `lA`,
//! `lB`, the `2N`-bit product has `lA + lB` or `lA + lB + 1` leading zeros.
//! The filter therefore treats `l_total = lA + lB` as a cheap proxy for the
//! product magnitude and skips a multiplication when `l_total > L`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::fixedpoint::{FixedFormat, FixedScalar};

/// Processing lanes fed by one NZAU cycle.
pub const LANES: usize = 16;

/// Widest threshold the 5-bit hardware field can carry.
pub const HW_THRESHOLD_MAX: u32 = 31;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LzcCount {
    value: u32,
    bits: u32,
}

impl LzcCount {
    #[inline]
    pub fn value(&self) -> u32 {
        self.value
    }

    #[inline]
    pub fn bits(&self) -> u32 {
        self.bits
    }

    #[inline]
    pub fn is_zero_operand(&self) -> bool {
        self.value == self.bits
    }
}

/// Leading zeros of `u` viewed as a `bits`-wide unsigned word.
#[inline]
pub fn lzc_word(u: u32, bits: u32) -> u32 {
    debug_assert!(bits <= 32 && (bits == 32 || u >> bits == 0));
    if u == 0 {
        bits
    } else {
        bits.saturating_sub(32 - u.leading_zeros())
    }
}

pub fn lzc(u: u32, bits: u32) -> LzcCount {
    LzcCount { value: lzc_word(u, bits), bits }
}

/// Closed interval `[lA + lB, lA + lB + 1]` that contains the leading-zero
/// count of the `2N`-bit product.
pub fn product_lzc_bounds(la: LzcCount, lb: LzcCount) -> Result<(u32, u32)> {
    if la.is_zero_operand() || lb.is_zero_operand() {
        return Err(Error::ZeroOperand);
    }
    let sum = la.value + lb.value;
    Ok((sum, sum + 1))
}

/// LZC-sum threshold `L`. Pairs with `l_total > L` are skipped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NzThreshold(u32);

impl NzThreshold {
    pub fn new(level: u32, fmt: FixedFormat) -> Result<Self> {
        if level > 2 * fmt.bits() {
            return Err(Error::InvalidThreshold(format!(
                "level {level} exceeds 2N = {} for format {fmt}",
                2 * fmt.bits()
            )));
        }
        Ok(Self(level))
    }

    /// `L = 2N`: every pair is kept.
    pub fn keep_all(fmt: FixedFormat) -> Self {
        Self(2 * fmt.bits())
    }

    #[inline]
    pub fn level(&self) -> u32 {
        self.0
    }

    pub fn fits_hw_field(&self) -> bool {
        self.0 <= HW_THRESHOLD_MAX
    }
}

impl fmt::Display for NzThreshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SkipMode {
    /// Every multiplication is performed.
    Dense,
    /// Pairs with an exactly-zero operand are skipped.
    ZeroSkip,
    /// Pairs whose operand LZC sum exceeds the threshold are skipped.
    NzSkip(NzThreshold),
}

impl SkipMode {
    pub fn threshold(&self) -> Option<NzThreshold> {
        match self {
            SkipMode::NzSkip(t) => Some(*t),
            _ => None,
        }
    }

    /// Checks that an `NzSkip` level is valid for `fmt`.
    pub fn validate(&self, fmt: FixedFormat) -> Result<()> {
        if let SkipMode::NzSkip(t) = self {
            NzThreshold::new(t.level(), fmt)?;
        }
        Ok(())
    }
}

impl fmt::Display for SkipMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SkipMode::Dense => f.write_str("dense"),
            SkipMode::ZeroSkip => f.write_str("zeroskip"),
            SkipMode::NzSkip(t) => write!(f, "nz:{}", t.level()),
        }
    }
}

impl FromStr for SkipMode {
    type Err = Error;

    /// Accepts `dense`, `zeroskip` and `nz:<L>`. The level is range-checked
    /// against 2N only once the format is known (see [`SkipMode::validate`]).
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense" => Ok(SkipMode::Dense),
            "zeroskip" => Ok(SkipMode::ZeroSkip),
            other => {
                let level = other
                    .strip_prefix("nz:")
                    .and_then(|l| l.parse::<u32>().ok())
                    .ok_or_else(|| Error::InvalidInput(format!("unknown skip mode `{s}`")))?;
                if level > 64 {
                    return Err(Error::InvalidThreshold(format!("level {level} exceeds 64")));
                }
                Ok(SkipMode::NzSkip(NzThreshold(level)))
            }
        }
    }
}

/// Keep/skip verdict for one operand pair given raw values in `fmt`.
///
/// Magnitudes are exact: `|-2^(N-1)| = 2^(N-1)` still fits in `N` unsigned
/// bits, and saturating it would break the skip-safety bound.
#[inline]
pub fn nz_filter(a_raw: i32, b_raw: i32, fmt: FixedFormat, mode: SkipMode) -> bool {
    match mode {
        SkipMode::Dense => true,
        SkipMode::ZeroSkip => a_raw != 0 && b_raw != 0,
        SkipMode::NzSkip(t) => {
            let la = lzc_word(a_raw.unsigned_abs(), fmt.bits());
            let lb = lzc_word(b_raw.unsigned_abs(), fmt.bits());
            la + lb <= t.level()
        }
    }
}

pub fn nz_filter_scalar(a: FixedScalar, b: FixedScalar, mode: SkipMode) -> Result<bool> {
    a.format().ensure_same(&b.format())?;
    Ok(nz_filter(a.raw(), b.raw(), a.format(), mode))
}

/// Smallest LZC-sum level whose skipped products are all below `t` in real
/// value. A skipped pair has `l_total >= L + 1`, so its raw product is
/// below `2^(2N - L - 1)`, i.e. below `2^(2N - 2f - L - 1)` in real terms.
pub fn threshold_from_magnitude(t: f64, fmt: FixedFormat) -> Result<NzThreshold> {
    if t.is_nan() || t <= 0.0 {
        return Err(Error::InvalidThreshold(format!("magnitude {t} must be positive")));
    }
    let two_n = 2 * fmt.bits() as i64;
    let level = (two_n as f64 - 2.0 * fmt.frac() as f64 - t.log2()).ceil() - 1.0;
    let level = level.clamp(0.0, two_n as f64) as u32;
    NzThreshold::new(level, fmt)
}

/// Per-lane `data_ld` signals for one NZAU cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct KeepMask(u16);

impl KeepMask {
    pub const NONE: KeepMask = KeepMask(0);
    pub const ALL: KeepMask = KeepMask(u16::MAX);

    pub fn from_bits(bits: u16) -> Self {
        KeepMask(bits)
    }

    #[inline]
    pub fn bits(&self) -> u16 {
        self.0
    }

    #[inline]
    pub fn get(&self, lane: usize) -> bool {
        lane < LANES && self.0 >> lane & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, lane: usize, keep: bool) {
        if keep {
            self.0 |= 1 << lane;
        } else {
            self.0 &= !(1 << lane);
        }
    }

    pub fn count(&self) -> u32 {
        self.0.count_ones()
    }

    pub fn lanes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..LANES).filter(move |&i| self.get(i))
    }
}

impl fmt::LowerHex for KeepMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::LowerHex::fmt(&self.0, f)
    }
}

/// Raw-operand form of [`nzau_cycle`]. The shared input's LZC is computed
/// once and compared against each of the 16 weight LZCs.
pub fn nzau_mask(x_raw: i32, w_raw: &[i32; LANES], fmt: FixedFormat, mode: SkipMode) -> KeepMask {
    let mut mask = KeepMask::NONE;
    match mode {
        SkipMode::Dense => return KeepMask::ALL,
        SkipMode::ZeroSkip => {
            if x_raw != 0 {
                for (i, w) in w_raw.iter().enumerate() {
                    mask.set(i, *w != 0);
                }
            }
        }
        SkipMode::NzSkip(t) => {
            let lx = lzc_word(x_raw.unsigned_abs(), fmt.bits());
            for (i, w) in w_raw.iter().enumerate() {
                let lw = lzc_word(w.unsigned_abs(), fmt.bits());
                mask.set(i, lx + lw <= t.level());
            }
        }
    }
    mask
}

/// One NZAU cycle: 16 weights and one shared input produce 16 verdicts.
pub fn nzau_cycle(x: FixedScalar, w: &[FixedScalar], mode: SkipMode) -> Result<KeepMask> {
    if w.len() != LANES {
        return Err(Error::DimensionMismatch(format!(
            "NZAU takes {LANES} weights per cycle, got {}",
            w.len()
        )));
    }
    let fmt = x.format();
    let mut raw = [0i32; LANES];
    for (slot, wi) in raw.iter_mut().zip(w) {
        fmt.ensure_same(&wi.format())?;
        *slot = wi.raw();
    }
    Ok(nzau_mask(x.raw(), &raw, fmt, mode))
}
