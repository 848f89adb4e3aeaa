//! Worked buffering example: a 16x24 Q8.8 matrix streamed column by column
//! at `L = 16`. Lane 0 keeps only the pairs of cycles 1, 5 and 8 among the
//! first eight, and assembles its sixteenth pair in cycle 24.

use crate::fixedpoint::FixedFormat;
use crate::nzacore::{NzThreshold, SkipMode, LANES};
use crate::refmodel::{FixedVector, WeightMatrix};

pub const EXAMPLE_COLS: usize = 24;
pub const EXAMPLE_LEVEL: u32 = 16;

/// Cycles (1-based) in which lane 0 loads a pair.
pub const LANE0_LOAD_CYCLES: [u64; 16] = [1, 5, 8, 9, 10, 12, 13, 14, 16, 17, 18, 19, 21, 22, 23, 24];

#[derive(Debug, Clone)]
pub struct BufferingExample {
    pub weights: WeightMatrix,
    pub input: FixedVector,
    pub mode: SkipMode,
    /// `pattern[row][col]`: the pair is processed.
    pub pattern: Vec<Vec<bool>>,
}

// xorshift, only to vary the pattern across lanes 1..16
fn next(state: &mut u32) -> u32 {
    *state ^= *state << 13;
    *state ^= *state >> 17;
    *state ^= *state << 5;
    *state
}

/// Inputs sit in `[1.0, 2.0)` (LZC 7). Kept weights have magnitude
/// `>= 64` raw (LZC `<= 9`), skipped ones are zero or below 64 (LZC
/// `>= 10`), so `l_total <= 16` exactly on the kept pairs.
pub fn buffering_example() -> BufferingExample {
    let fmt = FixedFormat::Q8_8;
    let mut rng = 0x2545_f491u32;
    let mut pattern = vec![vec![false; EXAMPLE_COLS]; LANES];
    for c in LANE0_LOAD_CYCLES {
        pattern[0][c as usize - 1] = true;
    }
    for row in pattern.iter_mut().skip(1) {
        for cell in row.iter_mut() {
            *cell = next(&mut rng) % 5 < 2;
        }
    }
    let mut data = Vec::with_capacity(LANES * EXAMPLE_COLS);
    for row in &pattern {
        for &keep in row {
            let r = next(&mut rng);
            let sign = if r & 1 == 0 { 1 } else { -1 };
            let v = if keep {
                64 + (r >> 1) as i32 % 400
            } else if r.is_multiple_of(3) {
                0
            } else {
                1 + (r >> 1) as i32 % 63
            };
            data.push(sign * v);
        }
    }
    let input = (0..EXAMPLE_COLS).map(|_| 256 + (next(&mut rng) % 256) as i32).collect();
    BufferingExample {
        weights: WeightMatrix::from_raw(LANES, EXAMPLE_COLS, data, fmt).expect("fixture in range"),
        input: FixedVector::from_raw(input, fmt).expect("fixture in range"),
        mode: SkipMode::NzSkip(NzThreshold::new(EXAMPLE_LEVEL, fmt).expect("level within 2N")),
        pattern,
    }
}
