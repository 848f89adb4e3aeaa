//! Event counters, a linear per-event energy model and duty-cycle figures.
//!
//! Energy units are arbitrary. The default cost table is uncalibrated and
//! only meant for relative comparisons between skip modes on the same
//! workload.

use std::fmt;
use std::ops::{Add, AddAssign};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::CycleStats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EventCounters {
    /// Memory words fetched (16 weights + 1 input per stream cycle).
    pub fetches: u64,
    pub lzc_ops: u64,
    pub comparisons: u64,
    /// Operand pairs written into lane buffers.
    pub buffer_writes: u64,
    /// 256-bit register latches (one per flush, both registers).
    pub register_latches: u64,
    pub multiplies: u64,
    /// Two-input adds inside the adder trees.
    pub adds: u64,
    pub accumulates: u64,
    pub gated_lane_cycles: u64,
    pub active_lane_cycles: u64,
}

impl Add for EventCounters {
    type Output = EventCounters;

    fn add(self, o: EventCounters) -> EventCounters {
        EventCounters {
            fetches: self.fetches + o.fetches,
            lzc_ops: self.lzc_ops + o.lzc_ops,
            comparisons: self.comparisons + o.comparisons,
            buffer_writes: self.buffer_writes + o.buffer_writes,
            register_latches: self.register_latches + o.register_latches,
            multiplies: self.multiplies + o.multiplies,
            adds: self.adds + o.adds,
            accumulates: self.accumulates + o.accumulates,
            gated_lane_cycles: self.gated_lane_cycles + o.gated_lane_cycles,
            active_lane_cycles: self.active_lane_cycles + o.active_lane_cycles,
        }
    }
}

impl AddAssign for EventCounters {
    fn add_assign(&mut self, o: EventCounters) {
        *self = *self + o;
    }
}

impl std::iter::Sum for EventCounters {
    fn sum<I: Iterator<Item = EventCounters>>(iter: I) -> Self {
        iter.fold(EventCounters::default(), Add::add)
    }
}

/// Cost per event, arbitrary units. Missing JSON keys take the defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyModel {
    pub fetch: f64,
    pub lzc: f64,
    pub comparison: f64,
    pub buffer_write: f64,
    pub register_latch: f64,
    pub multiply: f64,
    pub add: f64,
    pub accumulate: f64,
    /// Leakage of one clock-gated lane for one cycle.
    pub gated_cycle: f64,
    /// Clock-tree and control overhead of one active lane cycle.
    pub active_cycle: f64,
}

impl Default for EnergyModel {
    /// Uncalibrated: multiply >> add > buffer write > LZC > comparison.
    fn default() -> Self {
        Self {
            fetch: 2.0,
            lzc: 0.3,
            comparison: 0.1,
            buffer_write: 0.5,
            register_latch: 1.0,
            multiply: 10.0,
            add: 1.0,
            accumulate: 1.5,
            gated_cycle: 0.02,
            active_cycle: 0.2,
        }
    }
}

impl EnergyModel {
    pub fn validate(&self) -> Result<()> {
        for (name, cost) in self.costs() {
            if !cost.is_finite() || cost < 0.0 {
                return Err(Error::Malformed(format!("energy cost `{name}` must be a finite value >= 0, got {cost}")));
            }
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: EnergyModel = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&s).map_err(|e| Error::Malformed(format!("{}: {e}", path.display())))
    }

    fn costs(&self) -> [(&'static str, f64); 10] {
        [
            ("fetch", self.fetch),
            ("lzc", self.lzc),
            ("comparison", self.comparison),
            ("buffer_write", self.buffer_write),
            ("register_latch", self.register_latch),
            ("multiply", self.multiply),
            ("add", self.add),
            ("accumulate", self.accumulate),
            ("gated_cycle", self.gated_cycle),
            ("active_cycle", self.active_cycle),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub categories: Vec<(&'static str, f64)>,
    pub total: f64,
}

impl EnergyReport {
    pub fn category(&self, name: &str) -> Option<f64> {
        self.categories.iter().find(|(n, _)| *n == name).map(|(_, e)| *e)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("category,energy\n");
        for (name, e) in &self.categories {
            out.push_str(&format!("{name},{e}\n"));
        }
        out.push_str(&format!("total,{}\n", self.total));
        out
    }
}

impl fmt::Display for EnergyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, e) in &self.categories {
            let share = if self.total > 0.0 { 100.0 * e / self.total } else { 0.0 };
            writeln!(f, "  {name:<15} {e:>14.3}  ({share:5.1}%)")?;
        }
        write!(f, "  {:<15} {:>14.3}  (arbitrary units, uncalibrated)", "total", self.total)
    }
}

pub fn tally(c: &EventCounters, m: &EnergyModel) -> EnergyReport {
    let counts = [
        c.fetches,
        c.lzc_ops,
        c.comparisons,
        c.buffer_writes,
        c.register_latches,
        c.multiplies,
        c.adds,
        c.accumulates,
        c.gated_lane_cycles,
        c.active_lane_cycles,
    ];
    let categories: Vec<_> = m
        .costs()
        .iter()
        .zip(counts)
        .map(|((name, cost), n)| (*name, cost * n as f64))
        .collect();
    let total = categories.iter().map(|(_, e)| e).sum();
    EnergyReport { categories, total }
}

/// `(E_zeroskip - E_nz) / E_zeroskip`; zero when the baseline is zero.
pub fn further_improvement(e_zeroskip: f64, e_nz: f64) -> f64 {
    if e_zeroskip > 0.0 {
        (e_zeroskip - e_nz) / e_zeroskip
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DutyCycle {
    pub per_lane: Vec<f64>,
    pub aggregate: f64,
}

/// Fraction of cycles each lane's multipliers are active.
pub fn duty_cycle(stats: &CycleStats) -> Result<DutyCycle> {
    if stats.total_cycles == 0 {
        return Err(Error::InvalidInput("duty cycle undefined for a zero-cycle run".into()));
    }
    let total = stats.total_cycles as f64;
    let per_lane: Vec<f64> = stats.active_compute_cycles.iter().map(|&a| a as f64 / total).collect();
    let active: u64 = stats.active_compute_cycles.iter().sum();
    let aggregate = active as f64 / (total * stats.active_compute_cycles.len() as f64);
    Ok(DutyCycle { per_lane, aggregate })
}
