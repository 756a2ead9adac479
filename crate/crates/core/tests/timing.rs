mod common;

use aes_imc_core::pipeline::replay_completion;
use aes_imc_core::{encrypt_block, BankFarm, CostTable, OpKind, Phase, Pipeline, SimConfig, StageBudgets};
use common::random_blocks;

fn pipeline(cost: CostTable) -> Pipeline {
    Pipeline::new(SimConfig { cost, ..SimConfig::default() }).unwrap()
}

#[test]
fn default_preset_is_26_cycles() {
    let p = Pipeline::new(SimConfig::default()).unwrap();
    assert_eq!(p.block_latency(), 26);
    let stages = &p.schedule().stages;
    assert_eq!(stages.len(), 23);
    assert_eq!(stages[0].phase, Phase::Load);
    assert_eq!(stages.last().unwrap().phase, Phase::Drain);
    assert_eq!(stages.last().unwrap().cycles, 4);
    for (pt, key) in random_blocks(3, 20) {
        assert_eq!(p.run_block(&pt, &key).unwrap().cycles, 26);
    }
}

#[test]
fn budgets_are_floors() {
    let budgets = StageBudgets { drain: 9, ..StageBudgets::calibrated() };
    let p = Pipeline::new(SimConfig { budgets, cost: CostTable::zero(), ..SimConfig::default() }).unwrap();
    assert_eq!(p.block_latency(), 31);
}

#[test]
fn doubling_latencies_doubles_cycles_when_latency_bound() {
    let base = pipeline(CostTable::uniform(1, 1.0));
    let doubled = pipeline(CostTable::uniform(1, 1.0).scale_latencies(2));
    // every stage does at least as much work as its budget
    let floors = Pipeline::new(SimConfig { cost: CostTable::zero(), ..SimConfig::default() }).unwrap();
    for (s, f) in base.schedule().stages.iter().zip(&floors.schedule().stages) {
        assert!(s.cycles >= f.cycles);
    }
    assert!(base.block_latency() > 26);
    assert_eq!(doubled.block_latency(), 2 * base.block_latency());
    for (a, b) in base.schedule().stages.iter().zip(&doubled.schedule().stages) {
        assert_eq!(b.cycles, 2 * a.cycles);
    }
}

#[test]
fn trace_replay_reproduces_cycles() {
    let mut tables = vec![CostTable::default(), CostTable::zero(), CostTable::uniform(1, 0.5), CostTable::uniform(3, 0.0)];
    let mut skewed = CostTable::uniform(1, 1.0);
    let mut c = skewed.get(OpKind::SboxEval);
    c.cycles = 5;
    skewed.set(OpKind::SboxEval, c).unwrap();
    tables.push(skewed);
    for cost in tables {
        for port_cycles in [0, 2] {
            let p = Pipeline::new(SimConfig { cost, port_cycles, ..SimConfig::default() }).unwrap();
            let run = p.run_block_traced(&[9; 16], &[4; 16]).unwrap();
            assert_eq!(replay_completion(&run.trace, &cost, port_cycles).unwrap(), run.cycles);
            assert_eq!(run.cycles, p.block_latency());
            let energy: f64 = run.trace.iter().map(|e| e.energy_pj).sum();
            assert!((energy - run.energy_pj).abs() <= 1e-9 * run.energy_pj.max(1.0));
        }
    }
}

#[test]
fn port_cycles_only_slow_crossing_writes() {
    let slow = Pipeline::new(SimConfig { cost: CostTable::uniform(1, 0.0), port_cycles: 3, ..SimConfig::default() }).unwrap();
    let fast = pipeline(CostTable::uniform(1, 0.0));
    assert!(slow.block_latency() > fast.block_latency());
}

#[test]
fn stream_cycles() {
    let blocks = random_blocks(5, 37);
    for ii in [None, Some(1), Some(13), Some(26)] {
        let p = Pipeline::new(SimConfig { initiation_interval: ii, ..SimConfig::default() }).unwrap();
        let r = p.run_stream(&blocks).unwrap();
        let interval = ii.unwrap_or(26);
        assert_eq!(r.report.cycles_total, 26 + 36 * interval);
        assert_eq!(r.report.cycles_per_block, 26);
        for ((pt, key), ct) in blocks.iter().zip(&r.ciphertexts) {
            assert_eq!(*ct, encrypt_block(pt, key));
        }
    }
}

#[test]
fn banked_cycles_and_results() {
    let blocks = random_blocks(6, 101);
    let p = Pipeline::new(SimConfig::default()).unwrap();
    let single = p.run_stream(&blocks).unwrap();
    for banks in 1..=8usize {
        let r = p.run_banked(&BankFarm::new(banks).unwrap(), &blocks, false).unwrap();
        let waves = 101u64.div_ceil(banks as u64);
        assert_eq!(r.report.cycles_total, 26 * waves);
        assert_eq!(r.ciphertexts, single.ciphertexts);
        assert_eq!(r.counts, single.counts);
        assert_eq!(r.report.energy_pj_total, single.report.energy_pj_total);
    }
}

#[test]
fn doubling_banks_halves_wall_clock() {
    let blocks = random_blocks(7, 512);
    let p = Pipeline::new(SimConfig::default()).unwrap();
    let mut prev = None;
    for banks in [1usize, 2, 4, 8, 16] {
        let c = p.run_banked(&BankFarm::new(banks).unwrap(), &blocks, false).unwrap().report.cycles_total;
        if let Some(prev) = prev {
            assert_eq!(2 * c, prev);
        }
        prev = Some(c);
    }
}

#[test]
fn banked_runs_independent_of_thread_count() {
    let blocks = random_blocks(8, 64);
    let p = Pipeline::new(SimConfig::default()).unwrap();
    let farm = BankFarm::new(4).unwrap();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| p.run_banked(&farm, &blocks, true).unwrap())
    };
    let one = run(1);
    let many = run(4);
    assert_eq!(one, many);
    assert_eq!(serde_json::to_string(&one.report).unwrap(), serde_json::to_string(&many.report).unwrap());
    assert!(one.trace.iter().any(|e| e.bank == 3));
}

#[test]
fn shared_key_across_blocks() {
    let key = [0x2b; 16];
    let blocks: Vec<_> = random_blocks(9, 20).into_iter().map(|(pt, _)| (pt, key)).collect();
    let p = Pipeline::new(SimConfig::default()).unwrap();
    let r = p.run_banked(&BankFarm::new(3).unwrap(), &blocks, false).unwrap();
    for ((pt, key), ct) in blocks.iter().zip(&r.ciphertexts) {
        assert_eq!(*ct, encrypt_block(pt, key));
    }
}

#[test]
fn report_json_fields() {
    let p = Pipeline::with_hash(SimConfig::default(), "abc".into()).unwrap();
    let r = p.run_stream(&random_blocks(1, 2)).unwrap();
    let v: serde_json::Value = serde_json::to_value(&r.report).unwrap();
    let keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
    assert_eq!(
        keys,
        ["blocks", "config_hash", "cycles_per_block", "cycles_total", "energy_pJ_total", "energy_per_block_pJ"]
    );
    assert_eq!(v["config_hash"], "abc");
}
