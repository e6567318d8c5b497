//! Small random workloads for differential testing against the oracle.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trendshare_core::{parse_query_file, AttrKind, Event, Query, Schema, Value};

#[derive(Debug, Clone)]
pub struct Case {
    pub seed: u64,
    pub schema: Schema,
    pub queries: Vec<Query>,
    pub events: Vec<Event>,
    pub text: String,
}

#[derive(Debug, Clone, Copy)]
pub struct CaseLimits {
    pub max_events: usize,
    pub max_queries: usize,
}

impl Default for CaseLimits {
    fn default() -> Self {
        CaseLimits {
            max_events: 14,
            max_queries: 6,
        }
    }
}

const TYPES: [&str; 4] = ["A", "B", "C", "D"];

pub fn case_schema() -> Schema {
    let attrs: &[(&str, AttrKind)] = &[
        ("x", AttrKind::Integer),
        ("y", AttrKind::Integer),
        ("g", AttrKind::Integer),
    ];
    Schema::from_slices(&[("A", attrs), ("B", attrs), ("C", attrs), ("D", attrs)])
        .expect("fixed schema")
}

fn pattern(rng: &mut ChaCha8Rng) -> (String, Vec<&'static str>, bool) {
    let mut t = TYPES;
    t.shuffle(rng);
    // Make B the Kleene type half of the time so queries overlap.
    if rng.gen_bool(0.5) {
        let bi = t.iter().position(|&x| x == "B").unwrap();
        t.swap(1, bi);
        if t[0] == "B" {
            t.swap(0, 1);
        }
    }
    let [a, b, c, d] = t;
    match rng.gen_range(0..9) {
        0 => (format!("{b}+"), vec![b], false),
        1 => (format!("SEQ({a}, {b}+)"), vec![a, b], false),
        2 => (format!("SEQ({b}+, {a})"), vec![b, a], false),
        3 => (format!("SEQ({a}, {b}+, {c})"), vec![a, b, c], false),
        4 => (format!("OR(SEQ({a}, {b}+), {c}+)"), vec![a, b, c], false),
        5 => (format!("(SEQ({a}, {b}+))+"), vec![a, b], false),
        6 => (format!("AND({a}+, SEQ({c}, {b}+))"), vec![a, c, b], true),
        7 => (format!("SEQ({a}+, {b}+)"), vec![a, b], false),
        _ => (format!("SEQ({d}, OR({b}, {c})+)"), vec![d, b, c], false),
    }
}

fn op(rng: &mut ChaCha8Rng) -> &'static str {
    ["<", "<=", "=", ">=", ">", "!="][rng.gen_range(0..6)]
}

fn query_text(rng: &mut ChaCha8Rng, id: usize) -> String {
    let (pat, types, conj) = pattern(rng);
    let ty = *types.choose(rng).unwrap();
    let agg = if conj || rng.gen_bool(0.4) {
        "COUNT(*)".to_string()
    } else {
        match rng.gen_range(0..5) {
            0 => format!("COUNT({ty})"),
            1 => format!("SUM({ty}.x)"),
            2 => format!("AVG({ty}.x)"),
            3 => format!("MIN({ty}.x)"),
            _ => format!("MAX({ty}.y)"),
        }
    };
    let mut preds = Vec::new();
    if rng.gen_bool(0.3) {
        let t = types.choose(rng).unwrap();
        preds.push(format!("{t}.x {} {}", op(rng), rng.gen_range(0..4)));
    }
    if rng.gen_bool(0.5) {
        let l = types.choose(rng).unwrap();
        let r = if rng.gen_bool(0.6) {
            l
        } else {
            types.choose(rng).unwrap()
        };
        preds.push(format!("{l}.x {} NEXT({r}).y", op(rng)));
    }
    if rng.gen_bool(0.1) {
        preds.push("[g]".into());
    }
    let mut text = format!("QUERY q{id}\nRETURN {agg}\nPATTERN {pat}\n");
    if !preds.is_empty() {
        text.push_str(&format!("WHERE {}\n", preds.join(" AND ")));
    }
    if rng.gen_bool(0.2) {
        text.push_str("GROUPBY g\n");
    }
    let size = [3u64, 4, 6, 8, 10, 40][rng.gen_range(0..6)];
    let slide = if rng.gen_bool(0.4) {
        size
    } else {
        rng.gen_range(1..=size)
    };
    text.push_str(&format!("WITHIN {size} SLIDE {slide}\n"));
    text
}

/// Deterministic random workload and stream for `seed`.
pub fn random_case(seed: u64, limits: CaseLimits) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let schema = case_schema();
    let k = rng.gen_range(1..=limits.max_queries);
    let text: String = (0..k)
        .map(|i| query_text(&mut rng, i))
        .collect::<Vec<_>>()
        .join("\n");
    let queries =
        parse_query_file(&text, &schema).unwrap_or_else(|e| panic!("seed {seed}: {e}\n{text}"));

    let n = rng.gen_range(1..=limits.max_events);
    let mut events = Vec::with_capacity(n);
    let mut time = 0u64;
    let mut kind = TYPES[rng.gen_range(0..4)];
    for _ in 0..n {
        time += [0u64, 0, 1, 1, 1, 2, 3][rng.gen_range(0..7)];
        if !rng.gen_bool(0.55) {
            kind = TYPES[rng.gen_range(0..4)];
        }
        events.push(
            Event::new(time, kind)
                .with("x", Value::Int(rng.gen_range(0..4)))
                .with("y", Value::Int(rng.gen_range(0..4)))
                .with("g", Value::Int(rng.gen_range(0..2))),
        );
    }
    Case {
        seed,
        schema,
        queries,
        events,
        text,
    }
}
