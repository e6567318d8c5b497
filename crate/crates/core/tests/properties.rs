use num_bigint::BigUint;
use proptest::prelude::*;
use trendshare_core::engine::{Acc, EngineConfig, SnapshotExpr, SnapshotTable};
use trendshare_core::optimizer::{
    choose_query_set, BurstProfile, CostVariant, SharingPlan, SharingPolicy,
};
use trendshare_core::oracle::{evaluate_workload, DEFAULT_CAP};
use trendshare_core::{
    parse_query, parse_query_file, AttrKind, Event, NullClock, Query, Runtime, Schema,
    Strategy as Plan, Value,
};

const TYPES: [&str; 3] = ["A", "B", "C"];

fn schema() -> Schema {
    let attrs: &[(&str, AttrKind)] = &[("x", AttrKind::Integer), ("g", AttrKind::Integer)];
    Schema::from_slices(&[("A", attrs), ("B", attrs), ("C", attrs)]).unwrap()
}

fn event_strategy() -> impl Strategy<Value = Vec<Event>> {
    prop::collection::vec((0u64..3, 0usize..3, 0i64..4, 0i64..2), 1..13).prop_map(|raw| {
        let mut t = 0;
        raw.into_iter()
            .map(|(gap, ty, x, g)| {
                t += gap;
                Event::new(t, TYPES[ty])
                    .with("x", Value::Int(x))
                    .with("g", Value::Int(g))
            })
            .collect()
    })
}

fn query_text(
    i: usize,
    shape: usize,
    agg: usize,
    pred: usize,
    window: (u64, u64),
    grouped: bool,
) -> String {
    let pattern = [
        "B+",
        "SEQ(A, B+)",
        "SEQ(C, B+)",
        "SEQ(A, B+, C)",
        "(SEQ(A, B+))+",
        "OR(SEQ(A, B+), C+)",
    ][shape];
    let aggregate = [
        "COUNT(*)", "COUNT(B)", "SUM(B.x)", "AVG(B.x)", "MIN(B.x)", "MAX(B.x)",
    ][agg];
    let predicate = [
        "",
        "WHERE B.x > 0",
        "WHERE B.x <= NEXT(B).x",
        "WHERE B.x != NEXT(B).x AND [g]",
    ][pred];
    let groupby = if grouped { "GROUPBY g" } else { "" };
    format!(
        "QUERY q{i} RETURN {aggregate} PATTERN {pattern} {predicate} {groupby} WITHIN {} SLIDE {}\n",
        window.0, window.1
    )
}

fn workload_strategy() -> impl Strategy<Value = Vec<Query>> {
    let one = (
        0usize..6,
        0usize..6,
        0usize..4,
        (1u64..8, 1u64..8),
        any::<bool>(),
    );
    prop::collection::vec(one, 1..5).prop_map(|specs| {
        let text: String = specs
            .into_iter()
            .enumerate()
            .map(|(i, (shape, agg, pred, (a, b), grouped))| {
                query_text(i, shape, agg, pred, (a.max(b), a.min(b)), grouped)
            })
            .collect();
        parse_query_file(&text, &schema()).unwrap()
    })
}

/// Shares a pseudo-random subset of the candidates at every burst.
struct ScriptedPolicy {
    state: u64,
}

impl SharingPolicy for ScriptedPolicy {
    fn choose(&mut self, profile: &BurstProfile) -> SharingPlan {
        self.state = self
            .state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        let bits = self.state >> 20;
        let shared: Vec<usize> = (0..profile.introduced.len())
            .filter(|i| bits & (1 << i) != 0)
            .collect();
        SharingPlan {
            shared: if shared.len() >= 2 {
                shared
            } else {
                Vec::new()
            },
            shared_cost: 0,
            nonshared_cost: 0,
            s_c: 0,
            examined: 0,
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn engine_matches_oracle(queries in workload_strategy(), events in event_strategy()) {
        let expected = evaluate_workload(&queries, &events, DEFAULT_CAP).unwrap();
        for strategy in Plan::ALL {
            let out = Runtime::new(schema(), queries.clone(), strategy, NullClock).unwrap().run(events.clone()).unwrap();
            prop_assert_eq!(&out.results, &expected, "{:?}", strategy);
        }
    }

    #[test]
    fn arbitrary_split_and_merge_is_neutral(queries in workload_strategy(), events in event_strategy(), seed in any::<u64>()) {
        let reference = Runtime::new(schema(), queries.clone(), Plan::NonShared, NullClock)
            .unwrap()
            .run(events.clone())
            .unwrap();
        let scripted = Runtime::with_policy(schema(), queries, Box::new(ScriptedPolicy { state: seed }), EngineConfig::default(), NullClock)
            .unwrap()
            .run(events)
            .unwrap();
        prop_assert_eq!(scripted.results, reference.results);
    }

    #[test]
    fn tiny_expression_cap_changes_nothing(queries in workload_strategy(), events in event_strategy()) {
        let run = |cap| {
            let config = EngineConfig { expr_cap: cap, ..EngineConfig::default() };
            Runtime::with_policy(schema(), queries.clone(), Plan::StaticShared.policy(CostVariant::Linear), config, NullClock)
                .unwrap()
                .run(events.clone())
                .unwrap()
                .results
        };
        prop_assert_eq!(run(0), run(64));
    }

    #[test]
    fn expressions_evaluate_linearly(
        a in prop::collection::vec((0u32..4, 0u64..50), 0..5),
        b in prop::collection::vec((0u32..4, 0u64..50), 0..5),
        k in 0u64..9,
        values in prop::collection::vec(0u64..1000, 4),
    ) {
        let mut table = SnapshotTable::new(1);
        for v in &values {
            table.insert(vec![Acc::from(*v)]);
        }
        let build = |terms: &[(u32, u64)]| {
            let mut e = SnapshotExpr::zero();
            for &(id, c) in terms {
                e.add_assign(&SnapshotExpr::term(id, Acc::from(c)));
            }
            e
        };
        let (ea, eb) = (build(&a), build(&b));
        let eval = |e: &SnapshotExpr| table.evaluate(e, 0).unwrap();
        let mut sum = ea.clone();
        sum.add_assign(&eb);
        let mut expected = eval(&ea);
        expected.add_assign(&eval(&eb));
        prop_assert_eq!(eval(&sum), expected);

        let mut scaled = ea.clone();
        scaled.scale(&BigUint::from(k));
        prop_assert_eq!(eval(&scaled).count, eval(&ea).count * k);
    }

    #[test]
    fn greedy_choice_never_loses_to_sharing_nothing(
        b in 1u64..50, n in 1u64..500, g in 1u64..100, t in 1u64..5,
        introduced in prop::collection::vec(0u64..20, 0..8),
    ) {
        let profile = BurstProfile { b, n, g, t, p: 1, s_p: 1, introduced };
        let plan = choose_query_set(&profile, CostVariant::Linear);
        prop_assert!(plan.cost() <= profile.nonshared_reference(CostVariant::Linear));
    }

    #[test]
    fn queries_print_and_parse_back(shape in 0usize..6, agg in 0usize..6, pred in 0usize..4, w in (1u64..9, 1u64..9), grouped in any::<bool>()) {
        let text = query_text(0, shape, agg, pred, (w.0.max(w.1), w.0.min(w.1)), grouped);
        let q = parse_query(&text, &schema()).unwrap();
        let again = parse_query(&q.to_string(), &schema()).unwrap();
        prop_assert_eq!(again, q);
    }
}

#[test]
fn kleene_counts_double() {
    // Every new B event extends every earlier trend and starts one more.
    let s = schema();
    let q = parse_query_file(
        "QUERY q RETURN COUNT(*) PATTERN B+ WITHIN 100 SLIDE 100",
        &s,
    )
    .unwrap();
    for m in (1..=12u32).chain([30, 64, 200]) {
        let events: Vec<Event> = (0..u64::from(m)).map(|t| Event::new(t / 2, "B")).collect();
        let out = Runtime::new(s.clone(), q.clone(), Plan::Dynamic, NullClock)
            .unwrap()
            .run(events)
            .unwrap();
        let got = out.results.get("q", 0, 100, "").unwrap().to_string();
        assert_eq!(got, ((BigUint::from(1u32) << m) - 1u32).to_string());
    }
}
