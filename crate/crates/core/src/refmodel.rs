//! Golden reference semantics for the filtered matrix-vector product.
//!
//! Everything here is exact integer arithmetic over the raw values, so
//! results do not depend on summation order. The simulator is diffed
//! against these functions bit for bit.

use std::ops::{Add, AddAssign};

use crate::error::{Error, Result};
use crate::fixedpoint::{relu, FixedFormat, FixedScalar, WideAccumulator};
use crate::nzacore::{nz_filter, SkipMode};

/// Row-major weight matrix of raw values sharing one format.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightMatrix {
    rows: usize,
    cols: usize,
    format: FixedFormat,
    data: Vec<i32>,
}

impl WeightMatrix {
    pub fn from_raw(rows: usize, cols: usize, data: Vec<i32>, format: FixedFormat) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::DimensionMismatch(format!("empty matrix {rows}x{cols}")));
        }
        if rows * cols != data.len() {
            return Err(Error::DimensionMismatch(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(&bad) = data.iter().find(|&&r| !format.contains(r as i64)) {
            return Err(Error::RawOutOfRange { raw: bad as i64, bits: format.bits() });
        }
        Ok(Self { rows, cols, format, data })
    }

    pub fn from_scalars(rows: usize, cols: usize, data: &[FixedScalar]) -> Result<Self> {
        let format = data
            .first()
            .map(|s| s.format())
            .ok_or_else(|| Error::DimensionMismatch("empty matrix".into()))?;
        let mut raw = Vec::with_capacity(data.len());
        for s in data {
            format.ensure_same(&s.format())?;
            raw.push(s.raw());
        }
        Self::from_raw(rows, cols, raw, format)
    }

    /// `n x n` identity (diagonal = 1.0).
    pub fn identity(n: usize, format: FixedFormat) -> Result<Self> {
        let one = 1i64 << format.frac();
        if !format.contains(one) {
            return Err(Error::InvalidInput(format!("1.0 is not representable in {format}")));
        }
        let mut data = vec![0; n * n];
        for i in 0..n {
            data[i * n + i] = one as i32;
        }
        Self::from_raw(n, n, data, format)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn format(&self) -> FixedFormat {
        self.format
    }

    #[inline]
    pub fn raw(&self, row: usize, col: usize) -> i32 {
        self.data[row * self.cols + col]
    }

    pub fn get(&self, row: usize, col: usize) -> FixedScalar {
        FixedScalar::from_raw(self.raw(row, col) as i64, self.format).expect("validated on construction")
    }

    pub fn row(&self, row: usize) -> &[i32] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn raw_data(&self) -> &[i32] {
        &self.data
    }

    /// Same raw values reinterpreted in another format.
    pub fn with_format(&self, format: FixedFormat) -> Result<Self> {
        Self::from_raw(self.rows, self.cols, self.data.clone(), format)
    }
}

/// A vector of raw values sharing one format. Used for matvec inputs and
/// outputs alike.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FixedVector {
    format: FixedFormat,
    data: Vec<i32>,
}

/// The `x` operand of a matvec.
pub type InputVector = FixedVector;

impl FixedVector {
    pub fn from_raw(data: Vec<i32>, format: FixedFormat) -> Result<Self> {
        if let Some(&bad) = data.iter().find(|&&r| !format.contains(r as i64)) {
            return Err(Error::RawOutOfRange { raw: bad as i64, bits: format.bits() });
        }
        Ok(Self { format, data })
    }

    pub fn from_scalars(data: &[FixedScalar], format: FixedFormat) -> Result<Self> {
        let mut raw = Vec::with_capacity(data.len());
        for s in data {
            format.ensure_same(&s.format())?;
            raw.push(s.raw());
        }
        Ok(Self { format, data: raw })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn format(&self) -> FixedFormat {
        self.format
    }

    pub fn raw(&self) -> &[i32] {
        &self.data
    }

    pub fn get(&self, i: usize) -> FixedScalar {
        FixedScalar::from_raw(self.data[i] as i64, self.format).expect("validated on construction")
    }

    pub fn iter(&self) -> impl Iterator<Item = FixedScalar> + '_ {
        (0..self.data.len()).map(|i| self.get(i))
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.iter().map(|s| s.to_f64()).collect()
    }

    /// Index of the first maximum, `None` when empty.
    pub fn argmax(&self) -> Option<usize> {
        let mut best: Option<(usize, i32)> = None;
        for (i, &v) in self.data.iter().enumerate() {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
        best.map(|(i, _)| i)
    }

    pub fn with_format(&self, format: FixedFormat) -> Result<Self> {
        Self::from_raw(self.data.clone(), format)
    }
}

pub(crate) fn check_dims(w: &WeightMatrix, x: &FixedVector) -> Result<()> {
    w.format.ensure_same(&x.format)?;
    if w.cols != x.len() {
        return Err(Error::DimensionMismatch(format!(
            "matrix has {} columns, vector has {} elements",
            w.cols,
            x.len()
        )));
    }
    Ok(())
}

/// Output stage: optional ReLU, then rescale to the operand format.
pub fn activate(acc: WideAccumulator, fmt: FixedFormat, apply_relu: bool) -> FixedScalar {
    if apply_relu {
        relu(acc, fmt)
    } else {
        acc.to_fixed(fmt)
    }
}

fn finish(accs: &[WideAccumulator], fmt: FixedFormat, apply_relu: bool) -> FixedVector {
    let data = accs.iter().map(|a| activate(*a, fmt, apply_relu).raw()).collect();
    FixedVector { format: fmt, data }
}

fn row_sum(w: &WeightMatrix, x: &FixedVector, row: usize, keep: impl Fn(i32, i32) -> bool) -> Result<WideAccumulator> {
    w.row(row)
        .iter()
        .zip(x.raw())
        .filter(|(a, b)| keep(**a, **b))
        .try_fold(WideAccumulator::new(w.format), |acc, (a, b)| acc.accumulate(*a as i64 * *b as i64))
}

/// Exact pre-activation sums, one per row.
pub fn dense_preactivations(w: &WeightMatrix, x: &FixedVector) -> Result<Vec<WideAccumulator>> {
    check_dims(w, x)?;
    (0..w.rows).map(|r| row_sum(w, x, r, |_, _| true)).collect()
}

/// Pre-activation sums over the kept pairs only.
pub fn filtered_preactivations(w: &WeightMatrix, x: &FixedVector, mode: SkipMode) -> Result<Vec<WideAccumulator>> {
    check_dims(w, x)?;
    mode.validate(w.format)?;
    let fmt = w.format;
    (0..w.rows).map(|r| row_sum(w, x, r, |a, b| nz_filter(a, b, fmt, mode))).collect()
}

pub fn dense_matvec(w: &WeightMatrix, x: &FixedVector, apply_relu: bool) -> Result<FixedVector> {
    Ok(finish(&dense_preactivations(w, x)?, w.format, apply_relu))
}

pub fn filtered_matvec(w: &WeightMatrix, x: &FixedVector, mode: SkipMode, apply_relu: bool) -> Result<FixedVector> {
    Ok(finish(&filtered_preactivations(w, x, mode)?, w.format, apply_relu))
}

/// One output row split into kept nonzero products (`p1`), exactly-zero
/// products (`p2`) and nonzero products skipped by the filter (`p3`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub row: usize,
    pub p1_indices: Vec<usize>,
    pub p2_indices: Vec<usize>,
    pub p3_indices: Vec<usize>,
    pub p1_sum: WideAccumulator,
    pub p2_sum: WideAccumulator,
    pub p3_sum: WideAccumulator,
}

impl Partition {
    /// `p1 + p2 + p3`, which equals the dense pre-activation.
    pub fn recombined(&self) -> Result<WideAccumulator> {
        self.p1_sum.add_raw(self.p2_sum.raw())?.add_raw(self.p3_sum.raw())
    }
}

pub fn partition(w: &WeightMatrix, x: &FixedVector, mode: SkipMode) -> Result<Vec<Partition>> {
    check_dims(w, x)?;
    mode.validate(w.format)?;
    let fmt = w.format;
    let mut out = Vec::with_capacity(w.rows);
    for r in 0..w.rows {
        let zero = WideAccumulator::new(fmt);
        let mut p = Partition {
            row: r,
            p1_indices: Vec::new(),
            p2_indices: Vec::new(),
            p3_indices: Vec::new(),
            p1_sum: zero,
            p2_sum: zero,
            p3_sum: zero,
        };
        for (j, (&a, &b)) in w.row(r).iter().zip(x.raw()).enumerate() {
            let prod = a as i64 * b as i64;
            if prod == 0 {
                p.p2_indices.push(j);
                p.p2_sum = p.p2_sum.accumulate(prod)?;
            } else if nz_filter(a, b, fmt, mode) {
                p.p1_indices.push(j);
                p.p1_sum = p.p1_sum.accumulate(prod)?;
            } else {
                p.p3_indices.push(j);
                p.p3_sum = p.p3_sum.accumulate(prod)?;
            }
        }
        out.push(p);
    }
    Ok(out)
}

/// Skip counts over every (row, column) pair of a matvec.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SparsityStats {
    pub total_pairs: u64,
    pub skipped_pairs: u64,
    /// Pairs whose exact product is zero.
    pub zero_pairs: u64,
}

impl SparsityStats {
    pub fn kept_pairs(&self) -> u64 {
        self.total_pairs - self.skipped_pairs
    }

    pub fn nz_sparsity(&self) -> f64 {
        ratio(self.skipped_pairs, self.total_pairs)
    }

    pub fn zero_sparsity(&self) -> f64 {
        ratio(self.zero_pairs, self.total_pairs)
    }
}

fn ratio(n: u64, d: u64) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

impl Add for SparsityStats {
    type Output = SparsityStats;

    fn add(self, o: SparsityStats) -> SparsityStats {
        SparsityStats {
            total_pairs: self.total_pairs + o.total_pairs,
            skipped_pairs: self.skipped_pairs + o.skipped_pairs,
            zero_pairs: self.zero_pairs + o.zero_pairs,
        }
    }
}

impl AddAssign for SparsityStats {
    fn add_assign(&mut self, o: SparsityStats) {
        *self = *self + o;
    }
}

pub fn measure_sparsity(w: &WeightMatrix, x: &FixedVector, mode: SkipMode) -> Result<SparsityStats> {
    check_dims(w, x)?;
    mode.validate(w.format)?;
    let mut s = SparsityStats::default();
    for r in 0..w.rows {
        for (&a, &b) in w.row(r).iter().zip(x.raw()) {
            s.total_pairs += 1;
            if a == 0 || b == 0 {
                s.zero_pairs += 1;
            }
            if !nz_filter(a, b, w.format, mode) {
                s.skipped_pairs += 1;
            }
        }
    }
    Ok(s)
}
