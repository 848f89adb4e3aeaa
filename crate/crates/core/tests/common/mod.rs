#![allow(dead_code)]

use std::path::PathBuf;

use nearzero::netrunner::io::{load_dataset, load_model};
use nearzero::netrunner::{LayerGraph, Sample};
use nearzero::{FixedFormat, FixedVector, NzThreshold, SkipMode, WeightMatrix};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const SUITE_SEED: u64 = 0x6e7a_2017;
pub const SUITE_CASES: usize = 1200;

pub fn models_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models")
}

pub fn toy_mlp() -> (LayerGraph, Vec<Sample>) {
    let g = load_model(&models_dir().join("toy_mlp.json")).expect("shipped MLP loads");
    let d = load_dataset(&models_dir().join("digits_test.json"), g.format()).expect("shipped dataset loads");
    (g, d)
}

pub fn toy_cnn() -> (LayerGraph, Vec<Sample>) {
    let g = load_model(&models_dir().join("toy_cnn.json")).expect("shipped CNN loads");
    let d = load_dataset(&models_dir().join("digits_test.json"), g.format()).expect("shipped dataset loads");
    (g, d)
}

/// Leading zeros by bit scan, kept independent of the library.
pub fn scan_lzc(u: u64, bits: u32) -> u32 {
    (0..bits).rev().take_while(|b| u >> b & 1 == 0).count() as u32
}

/// Keep verdict computed from first principles.
pub fn oracle_keep(a: i32, b: i32, fmt: FixedFormat, mode: SkipMode) -> bool {
    match mode {
        SkipMode::Dense => true,
        SkipMode::ZeroSkip => a != 0 && b != 0,
        SkipMode::NzSkip(t) => {
            let n = fmt.bits();
            scan_lzc((a as i64).unsigned_abs(), n) + scan_lzc((b as i64).unsigned_abs(), n) <= t.level()
        }
    }
}

#[derive(Debug, Clone)]
pub struct Case {
    pub w: WeightMatrix,
    pub x: FixedVector,
    pub mode: SkipMode,
    pub relu: bool,
}

pub const FORMATS: [(u32, u32); 5] = [(16, 8), (16, 12), (12, 6), (8, 4), (32, 16)];

fn value(rng: &mut ChaCha8Rng, fmt: FixedFormat) -> i32 {
    match rng.gen_range(0..10) {
        0..=2 => 0,
        3..=5 => {
            // near zero: a handful of low bits
            let bits = rng.gen_range(1..=fmt.bits().min(8) - 1);
            let m = rng.gen_range(0..(1i64 << bits));
            (if rng.gen() { m } else { -m }) as i32
        }
        _ => rng.gen_range(fmt.min_raw() as i64..=fmt.max_raw() as i64) as i32,
    }
}

/// Randomized matvec suite: dims 1..=100, every format above, all modes.
pub fn random_suite(n: usize, seed: u64) -> Vec<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let (b, f) = FORMATS[i % FORMATS.len()];
            let fmt = FixedFormat::new(b, f).unwrap();
            // every fourth case is a ragged tile height by construction
            let rows = if i % 4 == 0 { 16 * rng.gen_range(1..=6) + rng.gen_range(1..16) } else { rng.gen_range(1..=100) };
            let rows = rows.min(100);
            let cols = rng.gen_range(1..=100);
            let w: Vec<i32> = (0..rows * cols).map(|_| value(&mut rng, fmt)).collect();
            let x: Vec<i32> = (0..cols).map(|_| value(&mut rng, fmt)).collect();
            let mode = match i % 3 {
                0 => SkipMode::Dense,
                1 => SkipMode::ZeroSkip,
                _ => SkipMode::NzSkip(NzThreshold::new(rng.gen_range(0..=2 * b), fmt).unwrap()),
            };
            Case {
                w: WeightMatrix::from_raw(rows, cols, w, fmt).unwrap(),
                x: FixedVector::from_raw(x, fmt).unwrap(),
                mode,
                relu: rng.gen(),
            }
        })
        .collect()
}

/// Kept pairs per (tile, lane), from the oracle filter.
pub fn oracle_kept(w: &WeightMatrix, x: &FixedVector, mode: SkipMode) -> Vec<[u64; 16]> {
    let tiles = w.rows().div_ceil(16);
    (0..tiles)
        .map(|t| {
            std::array::from_fn(|lane| {
                let r = t * 16 + lane;
                (0..w.cols())
                    .filter(|&c| {
                        let wv = if r < w.rows() { w.raw(r, c) } else { 0 };
                        oracle_keep(wv, x.raw()[c], w.format(), mode)
                    })
                    .count() as u64
            })
        })
        .collect()
}
