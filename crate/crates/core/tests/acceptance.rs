//! Acceptance criteria, one PASS/FAIL line each. Exits non-zero on any failure.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::{models_dir, oracle_kept, random_suite, toy_mlp, Case, SUITE_CASES, SUITE_SEED};
use nearzero::fixtures::buffering_example;
use nearzero::metrics::{duty_cycle, tally, EnergyModel};
use nearzero::netrunner::{sweep, Engine, SweepConfig};
use nearzero::refmodel::{dense_matvec, filtered_matvec, partition};
use nearzero::selftest::{check_product_bound, check_skip_safety};
use nearzero::sim::{run_matvec, run_trace, CycleRecord, DRAIN_LATENCY};
use nearzero::nzacore::lzc_word;
use nearzero::{AcceleratorConfig, FixedFormat, FixedVector, NzThreshold, SkipMode, WeightMatrix, LANES};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: u64) -> Result<(), String> {
    ensure(elapsed < Duration::from_secs(limit_s), || format!("took {elapsed:.2?}, limit {limit_s} s"))
}

fn ac1() -> Outcome {
    let r = check_product_bound(lzc_word);
    ensure(r.cases == 65025, || format!("{} cases", r.cases))?;
    ensure(r.violations == 0, || format!("{} violations", r.violations))?;
    within(r.elapsed, 5)?;
    Ok(format!("{} pairs, 0 violations, {:.2?}", r.cases, r.elapsed))
}

fn ac2() -> Outcome {
    let r = check_skip_safety(lzc_word);
    ensure(r.cases == 65536 * 17, || format!("{} cases", r.cases))?;
    ensure(r.violations == 0, || format!("{} violations", r.violations))?;
    within(r.elapsed, 30)?;
    Ok(format!("{} (pair, L) cases, 0 violations, {:.2?}", r.cases, r.elapsed))
}

fn ac3(suite: &[Case]) -> Outcome {
    ensure(suite.len() >= 1000, || format!("only {} cases", suite.len()))?;
    let mut ragged = 0;
    for (i, c) in suite.iter().enumerate() {
        let run = run_matvec(&c.w, &c.x, &AcceleratorConfig::new(c.mode, c.w.format()), c.relu).map_err(|e| e.to_string())?;
        let golden = filtered_matvec(&c.w, &c.x, c.mode, c.relu).map_err(|e| e.to_string())?;
        ensure(run.output == golden, || format!("case {i} ({}x{}, {}) differs", c.w.rows(), c.w.cols(), c.mode))?;
        if c.w.rows() % LANES != 0 {
            ragged += 1;
        }
    }
    Ok(format!("{}/{} bit-equal ({ragged} ragged)", suite.len(), suite.len()))
}

fn ac4(suite: &[Case]) -> Outcome {
    for (i, c) in suite.iter().enumerate() {
        let z = filtered_matvec(&c.w, &c.x, SkipMode::ZeroSkip, c.relu).map_err(|e| e.to_string())?;
        let d = dense_matvec(&c.w, &c.x, c.relu).map_err(|e| e.to_string())?;
        ensure(z == d, || format!("case {i} differs"))?;
    }
    Ok(format!("{} cases identical", suite.len()))
}

fn ac5(suite: &[Case]) -> Outcome {
    let mut rows = 0;
    for (i, c) in suite.iter().enumerate() {
        for p in partition(&c.w, &c.x, c.mode).map_err(|e| e.to_string())? {
            let dense: i128 = (0..c.w.cols()).map(|k| c.w.raw(p.row, k) as i128 * c.x.raw()[k] as i128).sum();
            let rec = p.recombined().map_err(|e| e.to_string())?;
            ensure(rec.raw() == dense, || format!("case {i} row {} recombines to {} not {dense}", p.row, rec.raw()))?;
            rows += 1;
        }
    }
    Ok(format!("{rows} rows recombine exactly"))
}

fn ac6(suite: &[Case]) -> Outcome {
    for (i, c) in suite.iter().enumerate() {
        let run = run_matvec(&c.w, &c.x, &AcceleratorConfig::new(c.mode, c.w.format()), false).map_err(|e| e.to_string())?;
        let kept = oracle_kept(&c.w, &c.x, c.mode);
        let mut flushes = 0;
        for (t, tile) in run.stats.tiles.iter().enumerate() {
            for lane in 0..LANES {
                ensure(tile.flush_count[lane] == kept[t][lane].div_ceil(16), || format!("case {i} tile {t} lane {lane}"))?;
                flushes += tile.flush_count[lane];
            }
        }
        ensure(run.events.multiplies == 16 * flushes, || format!("case {i}: multiplies != 16 * flushes"))?;
    }
    let fmt = FixedFormat::Q8_8;
    let w = WeightMatrix::from_raw(16, 256, vec![77; 16 * 256], fmt).unwrap();
    let x = FixedVector::from_raw(vec![-300; 256], fmt).unwrap();
    let run = run_matvec(&w, &x, &AcceleratorConfig::new(SkipMode::Dense, fmt), false).map_err(|e| e.to_string())?;
    let d = duty_cycle(&run.stats).map_err(|e| e.to_string())?;
    let want = 16.0 / (256.0 + DRAIN_LATENCY as f64);
    ensure(d.aggregate == want && d.per_lane.iter().all(|&v| v == want), || format!("duty {} != {want}", d.aggregate))?;
    Ok(format!("flushes exact on {} runs; dense duty = 16/{} = {want:.6}", suite.len(), 256 + DRAIN_LATENCY))
}

fn ac7_ac8() -> (Outcome, Outcome) {
    let (g, data) = toy_mlp();
    let start = Instant::now();
    let report = match sweep(&g, &data, &SweepConfig::full_range(g.format(), Engine::Reference)) {
        Ok(r) => r,
        Err(e) => return (Err(e.to_string()), Err(e.to_string())),
    };
    let elapsed = start.elapsed();
    let n = g.format().bits();

    let ac7 = (|| {
        // points run from L = 2N down to 0
        let s: Vec<f64> = report.points.iter().map(|p| p.total.nz_sparsity()).collect();
        ensure(s.windows(2).all(|w| w[0] <= w[1]), || format!("sparsity not monotone: {s:?}"))?;
        let base = report.baseline.total.zero_sparsity();
        for p in &report.points {
            let l = p.mode.threshold().unwrap().level();
            if l < n {
                ensure(p.total.nz_sparsity() >= base, || format!("L={l} below zero-sparsity baseline"))?;
            }
        }
        Ok(format!("{} levels monotone, L<{n} all >= zero baseline {base:.4}", s.len()))
    })();

    let ac8 = (|| {
        within(elapsed, 60)?;
        let best = report
            .points
            .iter()
            .filter(|p| report.accuracy_drop_pp(p) <= 1.0)
            .max_by(|a, b| report.reduction_factor(a).total_cmp(&report.reduction_factor(b)))
            .ok_or("no threshold within 1 pp")?;
        let rf = report.reduction_factor(best);
        ensure(rf >= 1.3, || format!("best reduction {rf:.3}x"))?;
        let golden = std::fs::read_to_string(models_dir().join("toy_mlp_sweep.csv")).map_err(|e| e.to_string())?;
        ensure(report.to_csv() == golden, || "sweep differs from golden fixture".into())?;
        let pinned = golden.lines().find(|l| l.starts_with("18,total,")).ok_or("pinned row missing")?;
        ensure(pinned == "18,total,0.707025,0.251997,433134,2.559732,0.983333", || format!("pinned row {pinned}"))?;
        Ok(format!(
            "L={} gives {rf:.3}x at {:+.2} pp (pinned L=18: 2.560x, -0.33 pp), sweep {elapsed:.2?}",
            best.label(),
            -report.accuracy_drop_pp(best)
        ))
    })();
    (ac7, ac8)
}

fn ac9(suite: &[Case]) -> Outcome {
    let model = EnergyModel::default();
    let mult = |c: &Case, mode: SkipMode| -> Result<f64, String> {
        let run = run_matvec(&c.w, &c.x, &AcceleratorConfig::new(mode, c.w.format()), false).map_err(|e| e.to_string())?;
        Ok(tally(&run.events, &model).category("multiply").unwrap())
    };
    for (i, c) in suite.iter().enumerate() {
        let fmt = c.w.format();
        let level = match c.mode {
            SkipMode::NzSkip(t) if t.level() < fmt.bits() => t.level(),
            _ => i as u32 % fmt.bits(),
        };
        let nz = mult(c, SkipMode::NzSkip(NzThreshold::new(level, fmt).unwrap()))?;
        let z = mult(c, SkipMode::ZeroSkip)?;
        let d = mult(c, SkipMode::Dense)?;
        ensure(nz <= z && z <= d, || format!("case {i} L={level}: {nz} / {z} / {d}"))?;
    }
    Ok(format!("NzSkip <= ZeroSkip <= Dense on {} workloads", suite.len()))
}

fn ac10() -> Outcome {
    let ex = buffering_example();
    let mut loads = Vec::new();
    let mut sink = |g: u64, rec: &CycleRecord| -> nearzero::Result<()> {
        if g <= 8 && rec.lanes[0].event.load {
            loads.push(g);
        }
        Ok(())
    };
    run_trace(&ex.weights, &ex.input, &AcceleratorConfig::new(ex.mode, ex.weights.format()), false, &mut sink)
        .map_err(|e| e.to_string())?;
    ensure(loads == [1, 5, 8], || format!("lane 0 loads in cycles {loads:?}"))?;
    Ok("lane 0 loads in cycles 1, 5, 8".into())
}

fn report(name: &str, title: &str, outcome: std::thread::Result<Outcome>) -> bool {
    let outcome = outcome.unwrap_or_else(|_| Err("panicked".into()));
    match &outcome {
        Ok(d) => println!("{name} PASS  {title}: {d}"),
        Err(d) => println!("{name} FAIL  {title}: {d}"),
    }
    outcome.is_ok()
}

fn main() {
    let suite = random_suite(SUITE_CASES, SUITE_SEED);
    let run = |f: &dyn Fn() -> Outcome| catch_unwind(AssertUnwindSafe(f));
    let mut ok = true;
    ok &= report("AC1", "product LZC bound, exhaustive 8-bit", run(&ac1));
    ok &= report("AC2", "skip safety, exhaustive 8-bit, L in 0..=16", run(&ac2));
    ok &= report("AC3", "simulator == reference", run(&|| ac3(&suite)));
    ok &= report("AC4", "ZeroSkip == Dense", run(&|| ac4(&suite)));
    ok &= report("AC5", "partition recombination", run(&|| ac5(&suite)));
    ok &= report("AC6", "flush and duty-cycle accounting", run(&|| ac6(&suite)));
    let (ac7, ac8) = catch_unwind(ac7_ac8).unwrap_or_else(|_| (Err("panicked".into()), Err("panicked".into())));
    ok &= report("AC7", "sparsity monotone in L", Ok(ac7));
    ok &= report("AC8", "reduction >= 1.3x within 1 pp", Ok(ac8));
    ok &= report("AC9", "multiply energy ordering", run(&|| ac9(&suite)));
    ok &= report("AC10", "buffering example lane 0 loads", run(&ac10));
    if !ok {
        std::process::exit(1);
    }
}
