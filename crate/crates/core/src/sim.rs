//! Cycle-level model of the 16-lane near-zero skipping accelerator.
//!
//! A matrix is processed in tiles of 16 rows. Each stream cycle fetches one
//! column of the tile (16 weights) plus the shared input element, runs the
//! NZAU, and writes every kept pair into the owning lane's NI/WT buffers.
//! When a lane's 4-bit counter overflows, both 256-bit operand registers
//! latch the assembled words and the lane computes them in the following
//! cycle (16 multiplies, adder tree, accumulate). Lanes without a compute
//! event in a cycle are clock-gated.
//!
//! After the stream, a fixed two-cycle drain pads partial buffers with zero
//! pairs, latches them, and computes them. Every tile therefore takes
//! `cols + DRAIN_LATENCY` cycles.

use std::fmt;
use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fixedpoint::{FixedFormat, FixedScalar, WideAccumulator};
use crate::metrics::EventCounters;
use crate::nzacore::{nzau_mask, KeepMask, SkipMode, LANES};
use crate::refmodel::{activate, check_dims, FixedVector, WeightMatrix};

/// Multipliers per lane, also the buffer depth in sub-words.
pub const MULTS_PER_LANE: usize = 16;

/// Cycles appended to every tile: pad+latch, then the final compute.
pub const DRAIN_LATENCY: u64 = 2;

/// Words fetched per stream cycle: 16 weights and the shared input.
pub const WORDS_PER_CYCLE: u64 = LANES as u64 + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AcceleratorConfig {
    pub mode: SkipMode,
    pub format: FixedFormat,
    /// Reject `NzSkip` levels that do not fit the 5-bit hardware field.
    pub hw_threshold_field: bool,
}

impl AcceleratorConfig {
    pub fn new(mode: SkipMode, format: FixedFormat) -> Self {
        Self { mode, format, hw_threshold_field: false }
    }

    pub fn num_lanes(&self) -> usize {
        LANES
    }

    pub fn mults_per_lane(&self) -> usize {
        MULTS_PER_LANE
    }

    pub fn validate(&self) -> Result<()> {
        self.mode.validate(self.format)?;
        if let (true, Some(t)) = (self.hw_threshold_field, self.mode.threshold()) {
            if !t.fits_hw_field() {
                return Err(Error::InvalidThreshold(format!(
                    "level {} does not fit the 5-bit threshold field",
                    t.level()
                )));
            }
        }
        Ok(())
    }
}

/// Sub-word buffer with its 4-bit fill counter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DataBuffer {
    slots: [i32; MULTS_PER_LANE],
    counter: u8,
}

impl DataBuffer {
    #[inline]
    pub fn counter(&self) -> u8 {
        self.counter
    }

    pub fn slots(&self) -> &[i32; MULTS_PER_LANE] {
        &self.slots
    }

    /// Stores one sub-word. Returns `true` on counter overflow, i.e. when
    /// the full word is assembled; the counter then restarts at zero.
    fn push(&mut self, v: i32) -> bool {
        self.slots[self.counter as usize] = v;
        self.counter += 1;
        if self.counter as usize == MULTS_PER_LANE {
            self.counter = 0;
            true
        } else {
            false
        }
    }

    /// Zero-fills unused slots and empties the buffer.
    fn take_padded(&mut self) -> [i32; MULTS_PER_LANE] {
        let mut word = self.slots;
        word[self.counter as usize..].fill(0);
        *self = DataBuffer::default();
        word
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProcessingLaneState {
    pub ni_buffer: DataBuffer,
    pub wt_buffer: DataBuffer,
    pub ni_register: [i32; MULTS_PER_LANE],
    pub wt_register: [i32; MULTS_PER_LANE],
    /// Registers hold a word that has not been computed yet.
    pub register_pending: bool,
    pub accumulator: WideAccumulator,
    pub gated: bool,
}

impl ProcessingLaneState {
    fn new(fmt: FixedFormat) -> Self {
        Self {
            ni_buffer: DataBuffer::default(),
            wt_buffer: DataBuffer::default(),
            ni_register: [0; MULTS_PER_LANE],
            wt_register: [0; MULTS_PER_LANE],
            register_pending: false,
            accumulator: WideAccumulator::new(fmt),
            gated: true,
        }
    }

    fn latch(&mut self, ni: [i32; MULTS_PER_LANE], wt: [i32; MULTS_PER_LANE]) {
        debug_assert!(!self.register_pending, "latch over an uncomputed word");
        self.ni_register = ni;
        self.wt_register = wt;
        self.register_pending = true;
    }

    /// Multiplier array, adder tree and accumulate for the latched word.
    fn compute(&mut self) -> Result<()> {
        let mut level: Vec<i128> = self
            .ni_register
            .iter()
            .zip(&self.wt_register)
            .map(|(a, b)| *a as i128 * *b as i128)
            .collect();
        while level.len() > 1 {
            level = level.chunks(2).map(|p| p.iter().sum()).collect();
        }
        self.accumulator = self.accumulator.add_raw(level[0])?;
        self.register_pending = false;
        Ok(())
    }
}

/// What a lane did in one cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LaneEvent {
    pub load: bool,
    pub pad: bool,
    pub latch: bool,
    pub compute: bool,
}

impl LaneEvent {
    pub fn is_idle(&self) -> bool {
        !(self.load || self.pad || self.latch || self.compute)
    }
}

impl fmt::Display for LaneEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names = [
            (self.compute, "compute"),
            (self.load, "load"),
            (self.pad, "pad"),
            (self.latch, "latch"),
        ];
        let mut first = true;
        for (on, name) in names {
            if on {
                if !first {
                    f.write_str("+")?;
                }
                f.write_str(name)?;
                first = false;
            }
        }
        if first {
            f.write_str("idle")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LaneSnapshot {
    pub ni_count: u8,
    pub wt_count: u8,
    pub event: LaneEvent,
    /// Accumulator value at the end of the cycle (`2f` fractional bits).
    pub accumulator: i128,
}

/// State of every lane at the end of one cycle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CycleRecord {
    /// 1-based cycle index within the tile.
    pub cycle: u64,
    pub tile: usize,
    /// `None` during drain cycles (no fetch).
    pub keep_mask: Option<KeepMask>,
    pub lanes: [LaneSnapshot; LANES],
}

/// Per-tile accounting.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TileStats {
    pub cycles: u64,
    pub stream_cycles: u64,
    pub kept_pairs: [u64; LANES],
    pub flush_count: [u64; LANES],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CycleStats {
    pub total_cycles: u64,
    pub stream_cycles: u64,
    pub active_compute_cycles: Vec<u64>,
    pub flush_count: Vec<u64>,
    pub buffer_write_count: Vec<u64>,
    pub tiles: Vec<TileStats>,
}

impl CycleStats {
    pub fn new(lanes: usize) -> Self {
        Self {
            total_cycles: 0,
            stream_cycles: 0,
            active_compute_cycles: vec![0; lanes],
            flush_count: vec![0; lanes],
            buffer_write_count: vec![0; lanes],
            tiles: Vec::new(),
        }
    }

    fn push_tile(&mut self, t: TileStats) {
        self.total_cycles += t.cycles;
        self.stream_cycles += t.stream_cycles;
        for lane in 0..LANES {
            // one compute cycle per flush
            self.active_compute_cycles[lane] += t.flush_count[lane];
            self.flush_count[lane] += t.flush_count[lane];
            self.buffer_write_count[lane] += t.kept_pairs[lane];
        }
        self.tiles.push(t);
    }
}

/// One accelerator instance processing one 16-row tile.
#[derive(Debug, Clone)]
pub struct Accelerator {
    cfg: AcceleratorConfig,
    tile: usize,
    lanes: Vec<ProcessingLaneState>,
    cycle: u64,
    drained: bool,
    stats: TileStats,
    events: EventCounters,
}

impl Accelerator {
    pub fn new(cfg: AcceleratorConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            tile: 0,
            lanes: vec![ProcessingLaneState::new(cfg.format); LANES],
            cycle: 0,
            drained: false,
            stats: TileStats::default(),
            events: EventCounters::default(),
        })
    }

    fn for_tile(cfg: AcceleratorConfig, tile: usize) -> Result<Self> {
        let mut a = Self::new(cfg)?;
        a.tile = tile;
        Ok(a)
    }

    pub fn config(&self) -> &AcceleratorConfig {
        &self.cfg
    }

    pub fn lanes(&self) -> &[ProcessingLaneState] {
        &self.lanes
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn is_drained(&self) -> bool {
        self.drained
    }

    pub fn tile_stats(&self) -> &TileStats {
        &self.stats
    }

    pub fn events(&self) -> &EventCounters {
        &self.events
    }

    pub fn accumulators(&self) -> Vec<WideAccumulator> {
        self.lanes.iter().map(|l| l.accumulator).collect()
    }

    /// Clears all lanes for a new tile. Statistics restart too.
    pub fn reset(&mut self) {
        *self = Self { tile: self.tile, ..Self::new(self.cfg).expect("config already validated") };
    }

    /// Retires pending compute events, at most one per lane per cycle.
    fn retire(&mut self, ev: &mut [LaneEvent; LANES]) -> Result<()> {
        for (lane, e) in self.lanes.iter_mut().zip(ev.iter_mut()) {
            if lane.register_pending {
                lane.compute()?;
                e.compute = true;
                self.events.multiplies += MULTS_PER_LANE as u64;
                self.events.adds += MULTS_PER_LANE as u64 - 1;
                self.events.accumulates += 1;
            }
        }
        Ok(())
    }

    fn close_cycle(&mut self, keep_mask: Option<KeepMask>, ev: [LaneEvent; LANES]) -> CycleRecord {
        let mut active = 0;
        for (lane, e) in self.lanes.iter_mut().zip(&ev) {
            lane.gated = !e.compute;
            active += e.compute as u64;
        }
        self.events.active_lane_cycles += active;
        self.events.gated_lane_cycles += LANES as u64 - active;
        self.stats.cycles = self.cycle;
        let lanes = std::array::from_fn(|i| LaneSnapshot {
            ni_count: self.lanes[i].ni_buffer.counter(),
            wt_count: self.lanes[i].wt_buffer.counter(),
            event: ev[i],
            accumulator: self.lanes[i].accumulator.raw(),
        });
        CycleRecord { cycle: self.cycle, tile: self.tile, keep_mask, lanes }
    }

    /// One stream cycle over raw operands in the configured format.
    pub fn step_raw(&mut self, x: i32, w: &[i32; LANES]) -> Result<CycleRecord> {
        if self.drained {
            return Err(Error::StreamDrained);
        }
        self.cycle += 1;
        self.stats.stream_cycles += 1;
        let mut ev = [LaneEvent::default(); LANES];
        self.retire(&mut ev)?;

        let mask = nzau_mask(x, w, self.cfg.format, self.cfg.mode);
        self.events.fetches += WORDS_PER_CYCLE;
        self.events.lzc_ops += WORDS_PER_CYCLE;
        self.events.comparisons += LANES as u64;

        for i in mask.lanes() {
            let lane = &mut self.lanes[i];
            let ni_full = lane.ni_buffer.push(x);
            let wt_full = lane.wt_buffer.push(w[i]);
            debug_assert_eq!(ni_full, wt_full);
            ev[i].load = true;
            self.events.buffer_writes += 1;
            self.stats.kept_pairs[i] += 1;
            if wt_full {
                let (ni, wt) = (lane.ni_buffer.slots, lane.wt_buffer.slots);
                lane.latch(ni, wt);
                ev[i].latch = true;
                self.events.register_latches += 1;
                self.stats.flush_count[i] += 1;
            }
        }
        Ok(self.close_cycle(Some(mask), ev))
    }

    /// One stream cycle: 16 weights (one per lane) and the shared input.
    pub fn step(&mut self, x: FixedScalar, w: &[FixedScalar]) -> Result<CycleRecord> {
        if w.len() != LANES {
            return Err(Error::DimensionMismatch(format!("step takes {LANES} weights, got {}", w.len())));
        }
        self.cfg.format.ensure_same(&x.format())?;
        let mut raw = [0i32; LANES];
        for (r, wi) in raw.iter_mut().zip(w) {
            self.cfg.format.ensure_same(&wi.format())?;
            *r = wi.raw();
        }
        self.step_raw(x.raw(), &raw)
    }

    /// Ends the stream: pads and latches partial buffers, then computes.
    /// Always takes exactly [`DRAIN_LATENCY`] cycles.
    pub fn drain(&mut self) -> Result<Vec<CycleRecord>> {
        if self.drained {
            return Err(Error::StreamDrained);
        }
        let mut records = Vec::with_capacity(DRAIN_LATENCY as usize);

        self.cycle += 1;
        let mut ev = [LaneEvent::default(); LANES];
        self.retire(&mut ev)?;
        for (lane, e) in self.lanes.iter_mut().zip(ev.iter_mut()) {
            if lane.wt_buffer.counter() > 0 {
                let ni = lane.ni_buffer.take_padded();
                let wt = lane.wt_buffer.take_padded();
                lane.latch(ni, wt);
                e.pad = true;
                e.latch = true;
            }
        }
        for (i, e) in ev.iter().enumerate() {
            if e.pad {
                self.events.register_latches += 1;
                self.stats.flush_count[i] += 1;
            }
        }
        records.push(self.close_cycle(None, ev));

        self.cycle += 1;
        let mut ev = [LaneEvent::default(); LANES];
        self.retire(&mut ev)?;
        records.push(self.close_cycle(None, ev));

        self.drained = true;
        Ok(records)
    }

    pub fn outputs(&self, apply_relu: bool) -> Vec<FixedScalar> {
        self.lanes.iter().map(|l| activate(l.accumulator, self.cfg.format, apply_relu)).collect()
    }
}

/// Receives one record per simulated cycle.
pub trait TraceSink {
    fn record(&mut self, global_cycle: u64, rec: &CycleRecord) -> Result<()>;
}

impl<F: FnMut(u64, &CycleRecord) -> Result<()>> TraceSink for F {
    fn record(&mut self, global_cycle: u64, rec: &CycleRecord) -> Result<()> {
        self(global_cycle, rec)
    }
}

pub const TRACE_HEADER: &str = "cycle,keep_mask_hex,lane,ni_count,wt_count,event";

/// CSV trace: one row per lane per cycle with a non-idle event.
/// `cycle` is global and 1-based; drain cycles carry an empty mask field.
pub struct CsvTrace<W: Write> {
    out: W,
}

impl<W: Write> CsvTrace<W> {
    pub fn new(mut out: W) -> Result<Self> {
        writeln!(out, "{TRACE_HEADER}")?;
        Ok(Self { out })
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl<W: Write> TraceSink for CsvTrace<W> {
    fn record(&mut self, global_cycle: u64, rec: &CycleRecord) -> Result<()> {
        let mask = rec.keep_mask.map(|m| format!("{:04x}", m)).unwrap_or_default();
        for (lane, s) in rec.lanes.iter().enumerate() {
            if !s.event.is_idle() {
                writeln!(self.out, "{global_cycle},{mask},{lane},{},{},{}", s.ni_count, s.wt_count, s.event)?;
            }
        }
        Ok(())
    }
}

/// Result of a simulated matvec.
#[derive(Debug, Clone, PartialEq)]
pub struct SimRun {
    pub output: FixedVector,
    /// Pre-activation sums of the real rows.
    pub accumulators: Vec<WideAccumulator>,
    pub stats: CycleStats,
    pub events: EventCounters,
}

struct TileResult {
    accumulators: Vec<WideAccumulator>,
    stats: TileStats,
    events: EventCounters,
}

fn tile_column(w: &WeightMatrix, row0: usize, col: usize) -> [i32; LANES] {
    std::array::from_fn(|lane| {
        let r = row0 + lane;
        if r < w.rows() {
            w.raw(r, col)
        } else {
            0
        }
    })
}

fn run_tile(
    w: &WeightMatrix,
    x: &FixedVector,
    cfg: AcceleratorConfig,
    tile: usize,
    mut sink: Option<(&mut dyn TraceSink, u64)>,
) -> Result<TileResult> {
    let mut acc = Accelerator::for_tile(cfg, tile)?;
    let row0 = tile * LANES;
    let mut emit = |rec: &CycleRecord| -> Result<()> {
        match sink.as_mut() {
            Some((s, offset)) => s.record(*offset + rec.cycle, rec),
            None => Ok(()),
        }
    };
    for (col, &xj) in x.raw().iter().enumerate() {
        let rec = acc.step_raw(xj, &tile_column(w, row0, col))?;
        emit(&rec)?;
    }
    for rec in acc.drain()? {
        emit(&rec)?;
    }
    let real_rows = (w.rows() - row0).min(LANES);
    Ok(TileResult {
        accumulators: acc.accumulators()[..real_rows].to_vec(),
        stats: acc.stats.clone(),
        events: acc.events,
    })
}

fn assemble(w: &WeightMatrix, cfg: &AcceleratorConfig, tiles: Vec<TileResult>, apply_relu: bool) -> SimRun {
    let mut stats = CycleStats::new(LANES);
    let mut events = EventCounters::default();
    let mut accumulators = Vec::with_capacity(w.rows());
    for t in tiles {
        accumulators.extend(t.accumulators);
        stats.push_tile(t.stats);
        events += t.events;
    }
    let data = accumulators.iter().map(|a| activate(*a, cfg.format, apply_relu).raw()).collect();
    let output = FixedVector::from_raw(data, cfg.format).expect("activate saturates into range");
    SimRun { output, accumulators, stats, events }
}

fn prepare(w: &WeightMatrix, x: &FixedVector, cfg: &AcceleratorConfig) -> Result<usize> {
    check_dims(w, x)?;
    cfg.format.ensure_same(&w.format())?;
    cfg.validate()?;
    Ok(w.rows().div_ceil(LANES))
}

/// Full matvec on the accelerator model. Tiles run in parallel; results are
/// merged in tile order.
pub fn run_matvec(w: &WeightMatrix, x: &FixedVector, cfg: &AcceleratorConfig, apply_relu: bool) -> Result<SimRun> {
    let n_tiles = prepare(w, x, cfg)?;
    let tiles = (0..n_tiles)
        .into_par_iter()
        .map(|t| run_tile(w, x, *cfg, t, None))
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(w, cfg, tiles, apply_relu))
}

/// Same execution as [`run_matvec`], tiles in sequence, every cycle
/// reported to `sink`.
pub fn run_trace(
    w: &WeightMatrix,
    x: &FixedVector,
    cfg: &AcceleratorConfig,
    apply_relu: bool,
    sink: &mut dyn TraceSink,
) -> Result<SimRun> {
    let n_tiles = prepare(w, x, cfg)?;
    let mut tiles = Vec::with_capacity(n_tiles);
    let mut offset = 0;
    for t in 0..n_tiles {
        let r = run_tile(w, x, *cfg, t, Some((&mut *sink, offset)))?;
        offset += r.stats.cycles;
        tiles.push(r);
    }
    Ok(assemble(w, cfg, tiles, apply_relu))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nzacore::NzThreshold;
    use crate::refmodel::filtered_matvec;

    const Q88: FixedFormat = FixedFormat::Q8_8;

    fn cfg(mode: SkipMode) -> AcceleratorConfig {
        AcceleratorConfig::new(mode, Q88)
    }

    #[test]
    fn all_skip_cycle_is_fully_gated() {
        let mut a = Accelerator::new(cfg(SkipMode::ZeroSkip)).unwrap();
        let rec = a.step_raw(0, &[5; LANES]).unwrap();
        assert_eq!(rec.keep_mask, Some(KeepMask::NONE));
        assert!(rec.lanes.iter().all(|l| l.event.is_idle()));
        assert!(a.lanes().iter().all(|l| l.gated));
        assert_eq!(a.events().buffer_writes, 0);
        assert_eq!(a.events().gated_lane_cycles, 16);
    }

    #[test]
    fn sixteenth_pair_latches_and_computes_next_cycle() {
        let mut a = Accelerator::new(cfg(SkipMode::Dense)).unwrap();
        for c in 1..=15 {
            let rec = a.step_raw(256, &[256; LANES]).unwrap();
            assert!(rec.lanes.iter().all(|l| l.event.load && !l.event.latch));
            assert_eq!(rec.lanes[0].ni_count as u64, c);
        }
        let rec = a.step_raw(256, &[256; LANES]).unwrap();
        assert!(rec.lanes.iter().all(|l| l.event.load && l.event.latch && !l.event.compute));
        assert_eq!(rec.lanes[3].wt_count, 0);
        assert_eq!(rec.lanes[3].accumulator, 0);
        // next pair lands in the empty buffer while the registers compute
        let rec = a.step_raw(256, &[256; LANES]).unwrap();
        assert!(rec.lanes.iter().all(|l| l.event.load && l.event.compute));
        assert_eq!(rec.lanes[3].wt_count, 1);
        assert_eq!(rec.lanes[3].accumulator, 16 * 65536);
    }

    #[test]
    fn empty_drain_adds_no_compute() {
        let mut a = Accelerator::new(cfg(SkipMode::ZeroSkip)).unwrap();
        a.step_raw(0, &[1; LANES]).unwrap();
        let recs = a.drain().unwrap();
        assert_eq!(recs.len(), 2);
        assert!(recs.iter().all(|r| r.lanes.iter().all(|l| l.event.is_idle())));
        assert_eq!(a.events().multiplies, 0);
        assert_eq!(a.cycle(), 1 + DRAIN_LATENCY);
        assert!(matches!(a.step_raw(0, &[0; LANES]), Err(Error::StreamDrained)));
        assert!(matches!(a.drain(), Err(Error::StreamDrained)));
        a.reset();
        assert!(a.step_raw(0, &[0; LANES]).is_ok());
    }

    #[test]
    fn drain_flushes_three_resident_pairs() {
        let mut a = Accelerator::new(cfg(SkipMode::ZeroSkip)).unwrap();
        let mut w = [0; LANES];
        w[0] = 3;
        for x in [5, 7, -2] {
            a.step_raw(x, &w).unwrap();
        }
        let recs = a.drain().unwrap();
        assert!(recs[0].lanes[0].event.pad && recs[0].lanes[0].event.latch);
        assert!(recs[1].lanes[0].event.compute);
        assert_eq!(a.accumulators()[0].raw(), 3 * (5 + 7 - 2));
        assert_eq!(a.tile_stats().flush_count[0], 1);
        assert_eq!(a.tile_stats().flush_count[1], 0);
    }

    #[test]
    fn full_buffer_at_stream_end_flushes_once() {
        let mut a = Accelerator::new(cfg(SkipMode::Dense)).unwrap();
        for _ in 0..16 {
            a.step_raw(2, &[3; LANES]).unwrap();
        }
        let recs = a.drain().unwrap();
        assert!(recs[0].lanes.iter().all(|l| l.event.compute && !l.event.pad));
        assert!(recs[1].lanes.iter().all(|l| l.event.is_idle()));
        assert!(a.tile_stats().flush_count.iter().all(|&f| f == 1));
        assert!(a.accumulators().iter().all(|acc| acc.raw() == 16 * 6));
    }

    #[test]
    fn dense_cycle_count_closed_form() {
        for n in [1usize, 15, 16, 17, 40, 256] {
            let w = WeightMatrix::from_raw(16, n, vec![1; 16 * n], Q88).unwrap();
            let x = FixedVector::from_raw(vec![1; n], Q88).unwrap();
            let run = run_matvec(&w, &x, &cfg(SkipMode::Dense), false).unwrap();
            assert_eq!(run.stats.total_cycles, n as u64 + DRAIN_LATENCY);
            let flushes = n.div_ceil(16) as u64;
            assert!(run.stats.flush_count.iter().all(|&f| f == flushes));
        }
    }

    #[test]
    fn ragged_tiles_discard_padding_rows() {
        let rows = 21;
        let cols = 9;
        let data: Vec<i32> = (0..rows * cols).map(|i| (i as i32 * 37) % 600 - 300).collect();
        let w = WeightMatrix::from_raw(rows, cols, data, Q88).unwrap();
        let x = FixedVector::from_raw((0..cols as i32).map(|i| i * 50 - 200).collect(), Q88).unwrap();
        for mode in [SkipMode::Dense, SkipMode::ZeroSkip, SkipMode::NzSkip(NzThreshold::new(17, Q88).unwrap())] {
            let run = run_matvec(&w, &x, &cfg(mode), true).unwrap();
            assert_eq!(run.output.len(), rows);
            assert_eq!(run.output, filtered_matvec(&w, &x, mode, true).unwrap());
            assert_eq!(run.stats.tiles.len(), 2);
            assert_eq!(run.stats.total_cycles, 2 * (cols as u64 + DRAIN_LATENCY));
        }
    }

    #[test]
    fn hw_threshold_field_is_enforced_on_request() {
        let mut c = cfg(SkipMode::NzSkip(NzThreshold::keep_all(Q88)));
        assert!(Accelerator::new(c).is_ok());
        c.hw_threshold_field = true;
        assert!(matches!(Accelerator::new(c), Err(Error::InvalidThreshold(_))));
        c.mode = SkipMode::NzSkip(NzThreshold::new(31, Q88).unwrap());
        assert!(Accelerator::new(c).is_ok());
    }

    #[test]
    fn step_checks_operands() {
        let mut a = Accelerator::new(cfg(SkipMode::Dense)).unwrap();
        let s = |r| FixedScalar::from_raw(r, Q88).unwrap();
        let w = vec![s(1); 16];
        assert!(a.step(s(1), &w[..3]).is_err());
        let other = FixedScalar::from_raw(1, FixedFormat::new(12, 4).unwrap()).unwrap();
        assert!(a.step(other, &w).is_err());
        assert!(a.step(s(2), &w).is_ok());
    }

    #[test]
    fn csv_trace_rows() {
        let w = WeightMatrix::from_raw(2, 2, vec![256, 0, 0, 256], Q88).unwrap();
        let x = FixedVector::from_raw(vec![256, 256], Q88).unwrap();
        let mut sink = CsvTrace::new(Vec::new()).unwrap();
        run_trace(&w, &x, &cfg(SkipMode::ZeroSkip), false, &mut sink).unwrap();
        let text = String::from_utf8(sink.into_inner()).unwrap();
        let expected = "cycle,keep_mask_hex,lane,ni_count,wt_count,event\n\
                        1,0001,0,1,1,load\n\
                        2,0002,1,1,1,load\n\
                        3,,0,0,0,pad+latch\n\
                        3,,1,0,0,pad+latch\n\
                        4,,0,0,0,compute\n\
                        4,,1,0,0,compute\n";
        assert_eq!(text, expected);
    }

    #[test]
    fn lane_event_names() {
        assert_eq!(LaneEvent::default().to_string(), "idle");
        let e = LaneEvent { load: true, latch: true, compute: true, pad: false };
        assert_eq!(e.to_string(), "compute+load+latch");
    }
}
