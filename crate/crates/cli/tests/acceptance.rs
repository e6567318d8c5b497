//! End-to-end acceptance checks. Prints one PASS/FAIL line per check and
//! exits non-zero if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trendshare::bench::{bench, BenchMatrix, BenchRow, WorkloadTemplate};
use trendshare::cases::{random_case, CaseLimits};
use trendshare::generator::{AttrSpec, GeneratorSpec, TypeSpec};
use trendshare::{execute, StrategyChoice};
use trendshare_core::engine::{Acc, EngineConfig, SharedTrace, SnapshotExpr};
use trendshare_core::optimizer::{
    benefit, choose_query_set, exhaustive_min, nonshared_cost, shared_cost, BurstProfile,
    CostFactors, CostVariant, StaticSharedPolicy,
};
use trendshare_core::oracle::{evaluate_workload, DEFAULT_CAP};
use trendshare_core::runtime::RunOutput;
use trendshare_core::{
    parse_query_file, AttrKind, Event, NullClock, Runtime, Schema, Strategy, Value,
};

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------------------

fn fixture_schema() -> Schema {
    let attrs: &[(&str, AttrKind)] = &[("x", AttrKind::Integer)];
    Schema::from_slices(&[("A", attrs), ("B", attrs), ("C", attrs)]).unwrap()
}

fn fixture_stream() -> Vec<Event> {
    let b = |t, x| Event::new(t, "B").with("x", Value::Int(x));
    vec![
        Event::new(1, "A"),
        Event::new(2, "A"),
        Event::new(2, "C"),
        b(3, 1),
        b(4, 5),
        b(5, 2),
        b(6, 6),
        Event::new(7, "A"),
        Event::new(8, "A"),
        Event::new(9, "C"),
        Event::new(10, "C"),
        Event::new(11, "C"),
        b(12, 9),
    ]
}

fn traced(text: &str) -> RunOutput {
    let s = fixture_schema();
    let queries = parse_query_file(text, &s).unwrap();
    let config = EngineConfig {
        trace: true,
        ..EngineConfig::default()
    };
    Runtime::with_policy(s, queries, Box::new(StaticSharedPolicy), config, NullClock)
        .unwrap()
        .run(fixture_stream())
        .unwrap()
}

fn pair(t: &SharedTrace, id: u32) -> (Option<Acc>, Option<Acc>) {
    (
        t.snapshot(id, "q1", 0).cloned(),
        t.snapshot(id, "q2", 0).cloned(),
    )
}

fn some(a: u64, b: u64) -> (Option<Acc>, Option<Acc>) {
    (Some(Acc::from(a)), Some(Acc::from(b)))
}

fn worked_example() -> Outcome {
    let start = Instant::now();
    let plain = traced(
        "QUERY q1 RETURN COUNT(*) PATTERN SEQ(A, B+) WITHIN 20 SLIDE 20
         QUERY q2 RETURN COUNT(*) PATTERN SEQ(C, B+) WITHIN 20 SLIDE 20",
    );
    let filtered = traced(
        "QUERY q1 RETURN COUNT(*) PATTERN SEQ(A, B+) WITHIN 20 SLIDE 20
         QUERY q2 RETURN COUNT(*) PATTERN SEQ(C, B+) WHERE B.x <= NEXT(B).x WITHIN 20 SLIDE 20",
    );
    let elapsed = start.elapsed();
    if plain.traces.len() != 2 || filtered.traces.len() != 2 {
        return Err(format!(
            "expected two shared graphlets, got {} and {}",
            plain.traces.len(),
            filtered.traces.len()
        ));
    }

    let mut doubling = Vec::new();
    let mut e = SnapshotExpr::snapshot(0);
    for _ in 0..4 {
        doubling.push(e.clone());
        let copy = e.clone();
        e.add_assign(&copy);
    }
    let exprs_ok = plain.traces[0].exprs == doubling;
    let x_ok = pair(&plain.traces[0], 0) == some(2, 1);
    let y_ok = pair(&plain.traces[1], 0) == some(34, 19);

    let mut b6 = doubling[2].clone();
    b6.add_assign(&SnapshotExpr::snapshot(1));
    let f = &filtered.traces[0];
    let z_exprs_ok = f.exprs[2] == SnapshotExpr::snapshot(1) && f.exprs[3] == b6;
    let z_ok = pair(f, 1) == some(8, 2);
    let y2_ok = pair(&filtered.traces[1], 0) == some(34, 15);

    check(
        exprs_ok && x_ok && y_ok && z_exprs_ok && z_ok && y2_ok && elapsed < Duration::from_secs(1),
        format!(
            "exprs {exprs_ok}, x {x_ok}, y {y_ok}, z exprs {z_exprs_ok}, z {z_ok}, y with z {y2_ok}, {elapsed:?}"
        ),
    )
}

// ---------------------------------------------------------------------------

fn cost_examples() -> Outcome {
    let f = |b, n, s_p, g| CostFactors {
        b,
        n,
        s_p,
        s_c: 1,
        k: 2,
        g,
        t: 2,
        ..CostFactors::default()
    };
    let got: Vec<(u128, u128, i128)> = [f(4, 7, 1, 4), f(4, 11, 2, 8), f(4, 15, 1, 4)]
        .iter()
        .map(|x| (shared_cost(x), nonshared_cost(x), benefit(x)))
        .collect();
    check(
        got == [(44, 56, 12), (120, 88, -32), (76, 120, 44)],
        format!("{got:?}"),
    )
}

// ---------------------------------------------------------------------------

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut failures = Vec::new();
    let mut rows = 0;
    for seed in 0..1000 {
        let case = random_case(seed, CaseLimits::default());
        let expected = evaluate_workload(&case.queries, &case.events, DEFAULT_CAP).unwrap();
        rows += expected.len();
        for strategy in Strategy::ALL {
            let out = Runtime::new(
                case.schema.clone(),
                case.queries.clone(),
                strategy,
                NullClock,
            )
            .unwrap()
            .run(case.events.clone())
            .unwrap();
            if out.results != expected {
                failures.push((seed, strategy.name()));
            }
        }
    }
    let elapsed = start.elapsed();
    check(
        failures.is_empty() && elapsed < Duration::from_secs(120),
        format!("1000 cases, {rows} oracle rows, mismatches {failures:?}, {elapsed:?}"),
    )
}

// ---------------------------------------------------------------------------

fn equivalence_at_scale() -> Outcome {
    let start = Instant::now();
    let spec = GeneratorSpec {
        types: vec![
            TypeSpec {
                name: "A".into(),
                rate: 1.0,
                burst: (1, 3),
            },
            TypeSpec {
                name: "B".into(),
                rate: 1.0,
                burst: (5, 30),
            },
            TypeSpec {
                name: "C".into(),
                rate: 0.5,
                burst: (1, 5),
            },
        ],
        attrs: vec![
            AttrSpec {
                name: "x".into(),
                min: 0,
                max: 9,
                selectivity: None,
                alternate: true,
            },
            AttrSpec {
                name: "g".into(),
                min: 0,
                max: 2,
                selectivity: None,
                alternate: false,
            },
        ],
        events_per_minute: 600,
        duration: 5000,
        max_events: Some(50_000),
    };
    let schema = spec.schema().unwrap();
    let events = spec.generate(7).unwrap();
    let shapes = [
        "RETURN COUNT(*) PATTERN SEQ(A, B+) WHERE A.x >= {i%5} WITHIN 6 SLIDE 3",
        "RETURN SUM(B.x) PATTERN SEQ(C, B+) WHERE B.x <= NEXT(B).x WITHIN 6 SLIDE 2",
        "RETURN COUNT(B) PATTERN SEQ(A, B+) WHERE B.x >= {i%7} GROUPBY g WITHIN 4 SLIDE 4",
        "RETURN AVG(B.x) PATTERN SEQ(A, B+, C) WITHIN 6 SLIDE 3",
        "RETURN MAX(B.x) PATTERN B+ WHERE B.x != NEXT(B).x AND [g] WITHIN 4 SLIDE 2",
    ];
    let text: String = (0..25)
        .map(|i| {
            WorkloadTemplate::new(shapes[i % shapes.len()])
                .instantiate(i)
                .unwrap()
        })
        .collect();
    let queries = parse_query_file(&text, &schema).unwrap();
    let runs: Vec<_> = Strategy::ALL
        .iter()
        .map(|&s| {
            execute(
                &schema,
                &queries,
                events.clone(),
                StrategyChoice::Engine(s),
                false,
            )
            .unwrap()
        })
        .collect();
    let elapsed = start.elapsed();
    let same = runs.iter().all(|r| r.results == runs[0].results);
    check(
        same && events.len() == 50_000 && elapsed < Duration::from_secs(300),
        format!(
            "{} events, 25 queries, {} rows, shared graphlets {:?}, identical {same}, {elapsed:?}",
            events.len(),
            runs[0].results.len(),
            runs.iter()
                .map(|r| r.metrics.shared_graphlets)
                .collect::<Vec<_>>()
        ),
    )
}

// ---------------------------------------------------------------------------

fn pruning_optimality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut bad = Vec::new();
    let mut shared = 0;
    for case in 0..200 {
        let m = rng.gen_range(0..=4);
        let zeros = rng.gen_range(0..=4);
        let mut introduced: Vec<u64> = (0..m).map(|_| rng.gen_range(1..=12)).collect();
        introduced.extend(std::iter::repeat_n(0, zeros));
        for i in (1..introduced.len()).rev() {
            introduced.swap(i, rng.gen_range(0..=i));
        }
        let profile = BurstProfile {
            b: rng.gen_range(1..=40),
            n: rng.gen_range(1..=400),
            g: rng.gen_range(1..=60),
            t: rng.gen_range(1..=4),
            p: 1,
            s_p: 1,
            introduced,
        };
        let plan = choose_query_set(&profile, CostVariant::Linear);
        shared += usize::from(plan.shares());
        if plan.cost() != exhaustive_min(&profile, CostVariant::Linear) || plan.examined != m + 1 {
            bad.push(case);
        }
    }
    check(
        bad.is_empty(),
        format!("200 bursts, {shared} shared, failing {bad:?}"),
    )
}

// ---------------------------------------------------------------------------

fn speedup_matrix() -> BenchMatrix {
    BenchMatrix {
        generator: GeneratorSpec {
            types: vec![
                TypeSpec {
                    name: "A".into(),
                    rate: 1.0,
                    burst: (1, 1),
                },
                TypeSpec {
                    name: "B".into(),
                    rate: 1.0,
                    burst: (100, 200),
                },
            ],
            attrs: vec![AttrSpec {
                name: "x".into(),
                min: 0,
                max: 9,
                selectivity: None,
                alternate: false,
            }],
            events_per_minute: 1200,
            duration: 1000,
            max_events: Some(20_000),
        },
        workload: WorkloadTemplate::new(
            "RETURN COUNT(*) PATTERN SEQ(A, B+) WHERE A.x >= {i%10} WITHIN 60 SLIDE 20",
        ),
        query_counts: vec![10, 25, 50],
        events_per_minute: Vec::new(),
        strategies: vec!["dynamic".into(), "non-shared".into()],
        seed: 1,
        repeats: 2,
    }
}

fn sharing_speedup(rows: &[BenchRow]) -> Outcome {
    let speedups: Vec<(usize, f64)> = rows
        .iter()
        .filter(|r| r.strategy == "dynamic")
        .map(|r| (r.queries, r.speedup.unwrap_or(0.0)))
        .collect();
    let agree = rows.iter().all(|r| r.agrees);
    let events = rows.first().map_or(0, |r| r.events);
    let monotone = speedups.windows(2).all(|w| w[1].1 >= w[0].1);
    let at_50 = speedups.iter().find(|s| s.0 == 50).map_or(0.0, |s| s.1);
    let shown: Vec<String> = speedups
        .iter()
        .map(|(k, s)| format!("k={k}: {s:.2}x"))
        .collect();
    check(
        agree && events == 20_000 && monotone && at_50 >= 5.0,
        format!(
            "{events} events, {}, monotone {monotone}, results agree {agree}",
            shown.join(", ")
        ),
    )
}

fn decision_overhead(rows: &[BenchRow]) -> Outcome {
    let overheads: Vec<f64> = rows
        .iter()
        .filter(|r| r.strategy == "dynamic")
        .map(|r| r.decision_overhead)
        .collect();
    let worst = overheads.iter().cloned().fold(0.0, f64::max);
    check(
        !overheads.is_empty() && worst <= 0.01,
        format!(
            "decision time share per k {:?}, worst {:.3}%",
            overheads,
            worst * 100.0
        ),
    )
}

// ---------------------------------------------------------------------------

fn dynamic_vs_static() -> Outcome {
    let matrix = BenchMatrix {
        generator: GeneratorSpec {
            types: vec![
                TypeSpec {
                    name: "A".into(),
                    rate: 1.0,
                    burst: (1, 1),
                },
                TypeSpec {
                    name: "B".into(),
                    rate: 1.0,
                    burst: (50, 100),
                },
            ],
            attrs: vec![AttrSpec {
                name: "x".into(),
                min: 0,
                max: 19,
                selectivity: None,
                alternate: true,
            }],
            events_per_minute: 1200,
            duration: 100_000,
            max_events: Some(20_000),
        },
        workload: WorkloadTemplate::new(
            "RETURN COUNT(*) PATTERN SEQ(A, B+) WHERE B.x >= {i%20} WITHIN 10 SLIDE 10",
        ),
        query_counts: vec![20],
        events_per_minute: Vec::new(),
        strategies: vec!["dynamic".into(), "static-shared".into()],
        seed: 3,
        repeats: 2,
    };
    let rows = bench(&matrix).map_err(|e| e.to_string())?;
    let (dynamic, fixed) = (rows[0].mean_latency_nanos, rows[1].mean_latency_nanos);
    let gain = 1.0 - dynamic / fixed;
    check(
        rows[1].agrees && dynamic <= fixed && gain >= 0.10,
        format!(
            "mean latency dynamic {:.1}us, static-shared {:.1}us, improvement {:.1}%",
            dynamic / 1e3,
            fixed / 1e3,
            gain * 100.0
        ),
    )
}

// ---------------------------------------------------------------------------

fn exact_growth() -> Outcome {
    let attrs: &[(&str, AttrKind)] = &[];
    let schema = Schema::from_slices(&[("E", attrs)]).unwrap();
    let queries = parse_query_file(
        "QUERY q RETURN COUNT(*) PATTERN E+ WITHIN 100 SLIDE 100",
        &schema,
    )
    .unwrap();
    let events: Vec<Event> = (0..30).map(|t| Event::new(t, "E")).collect();
    let mut got = Vec::new();
    for strategy in Strategy::ALL {
        let out = Runtime::new(schema.clone(), queries.clone(), strategy, NullClock)
            .unwrap()
            .run(events.clone())
            .unwrap();
        got.push(
            out.results
                .get("q", 0, 100, "")
                .map(|v| v.to_string())
                .unwrap_or_default(),
        );
    }
    let expected = ((1u64 << 30) - 1).to_string();
    check(
        got.iter().all(|g| *g == expected),
        format!("COUNT(*) {got:?}, expected {expected}"),
    )
}

// ---------------------------------------------------------------------------

fn main() -> ExitCode {
    let bench_rows = bench(&speedup_matrix());
    let from_bench = |f: fn(&[BenchRow]) -> Outcome| match &bench_rows {
        Ok(rows) => f(rows),
        Err(e) => Err(e.to_string()),
    };
    let outcomes: Vec<(u32, &str, Outcome)> = vec![
        (1, "worked example", worked_example()),
        (2, "cost model examples", cost_examples()),
        (3, "oracle equivalence", oracle_equivalence()),
        (4, "strategy equivalence at scale", equivalence_at_scale()),
        (5, "pruning optimality", pruning_optimality()),
        (6, "sharing speedup", from_bench(sharing_speedup)),
        (7, "dynamic vs static sharing", dynamic_vs_static()),
        (8, "decision overhead", from_bench(decision_overhead)),
        (9, "exactness under growth", exact_growth()),
    ];
    let mut failed = 0;
    for (n, name, outcome) in &outcomes {
        match outcome {
            Ok(detail) => println!("criterion {n} ({name}): PASS ({detail})"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n} ({name}): FAIL ({detail})");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
