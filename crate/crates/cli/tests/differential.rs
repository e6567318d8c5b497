use trendshare::cases::{random_case, CaseLimits};
use trendshare_core::oracle::{evaluate_workload, DEFAULT_CAP};
use trendshare_core::{NullClock, Runtime, Strategy};

#[test]
fn strategies_agree_with_oracle() {
    for seed in 0..300 {
        let case = random_case(seed, CaseLimits::default());
        let expected = evaluate_workload(&case.queries, &case.events, DEFAULT_CAP).unwrap();
        for strategy in Strategy::ALL {
            let rt = Runtime::new(
                case.schema.clone(),
                case.queries.clone(),
                strategy,
                NullClock,
            )
            .unwrap();
            let out = rt.run(case.events.clone()).unwrap();
            let diff = out.results.differences(&expected);
            assert!(
                diff.is_empty(),
                "seed {seed} strategy {strategy:?}: {diff:?}\n{}\nengine {:?}\noracle {:?}\nevents {:?}",
                case.text,
                out.results.rows,
                expected.rows,
                case.events
            );
        }
    }
}
