//! Exhaustive 8-bit checks of the product LZC bound and of skip safety.

use std::time::{Duration, Instant};

use crate::fixedpoint::FixedFormat;
use crate::nzacore::{lzc_word, nz_filter, NzThreshold, SkipMode};

const BITS: u32 = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyResult {
    pub name: &'static str,
    pub cases: u64,
    pub violations: u64,
    pub elapsed: Duration,
}

impl PropertyResult {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Leading zeros by scanning bits from the top, independent of
/// [`lzc_word`].
pub fn bitscan_lzc(u: u64, bits: u32) -> u32 {
    let mut n = 0;
    for b in (0..bits).rev() {
        if u >> b & 1 == 1 {
            break;
        }
        n += 1;
    }
    n
}

/// For every nonzero 8-bit pair, the 16-bit product's LZC lies in
/// `[lA + lB, lA + lB + 1]`. `lzc` computes operand LZCs.
pub fn check_product_bound(lzc: impl Fn(u32, u32) -> u32) -> PropertyResult {
    let start = Instant::now();
    let (mut cases, mut violations) = (0, 0);
    for a in 1u32..1 << BITS {
        for b in 1u32..1 << BITS {
            let sum = lzc(a, BITS) + lzc(b, BITS);
            let actual = bitscan_lzc(a as u64 * b as u64, 2 * BITS);
            cases += 1;
            if actual < sum || actual > sum + 1 {
                violations += 1;
            }
        }
    }
    PropertyResult { name: "product-lzc-bound", cases, violations, elapsed: start.elapsed() }
}

/// For every 8-bit magnitude pair and every `L` in `0..=16`, a pair with
/// `lA + lB > L` has a product below `2^(16 - L - 1)`.
pub fn check_skip_safety(lzc: impl Fn(u32, u32) -> u32) -> PropertyResult {
    let start = Instant::now();
    let (mut cases, mut violations) = (0, 0);
    let table: Vec<u32> = (0u32..1 << BITS).map(|v| lzc(v, BITS)).collect();
    for level in 0..=2 * BITS {
        for a in 0u32..1 << BITS {
            for b in 0u32..1 << BITS {
                cases += 1;
                if table[a as usize] + table[b as usize] > level {
                    // |a*b| < 2^(2B - L - 1), kept integral for L = 2B
                    if (a as u64 * b as u64) << (level + 1) >= 1u64 << (2 * BITS) {
                        violations += 1;
                    }
                }
            }
        }
    }
    PropertyResult { name: "skip-safety", cases, violations, elapsed: start.elapsed() }
}

/// Skip safety through the signed filter path: all pairs of 8-bit
/// two's-complement raw values, `L` in `0..=16`.
pub fn check_filter_skip_safety() -> PropertyResult {
    let start = Instant::now();
    let fmt = FixedFormat::new(BITS, 0).expect("valid 8-bit format");
    let (mut cases, mut violations) = (0, 0);
    for level in 0..=2 * BITS {
        let mode = SkipMode::NzSkip(NzThreshold::new(level, fmt).expect("level within 2N"));
        for a in fmt.min_raw()..=fmt.max_raw() {
            for b in fmt.min_raw()..=fmt.max_raw() {
                cases += 1;
                if !nz_filter(a, b, fmt, mode)
                    && (a as i64 * b as i64).unsigned_abs() << (level + 1) >= 1u64 << (2 * BITS)
                {
                    violations += 1;
                }
            }
        }
    }
    PropertyResult { name: "filter-skip-safety", cases, violations, elapsed: start.elapsed() }
}

/// All properties, with `lzc` as the operand leading-zero counter.
pub fn run_with(lzc: impl Fn(u32, u32) -> u32 + Copy) -> Vec<PropertyResult> {
    vec![check_product_bound(lzc), check_skip_safety(lzc), check_filter_skip_safety()]
}

pub fn run() -> Vec<PropertyResult> {
    run_with(lzc_word)
}
