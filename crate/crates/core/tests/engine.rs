use std::cmp::Ordering;
use std::collections::BTreeMap;

use medoidsmr::engine::{
    make_splits, run_job, shuffle, Engine, JobConfig, KeyedRecord, MapReduceJob,
};
use medoidsmr::Error;
use proptest::prelude::*;

/// Emits every row unchanged, keyed by its first element; reduce concatenates.
struct Identity;

impl<'a> MapReduceJob<'a> for Identity {
    type Input = (u8, u32);
    type Key = u8;
    type Value = u32;
    type Output = u32;

    fn map(&self, row: &'a (u8, u32), out: &mut Vec<KeyedRecord<u8, u32>>) -> Result<(), String> {
        out.push(KeyedRecord::new(row.0, row.1));
        Ok(())
    }

    fn value_order(&self, a: &u32, b: &u32) -> Ordering {
        a.cmp(b)
    }

    fn reduce(&self, _key: &u8, values: Vec<u32>) -> Result<Vec<u32>, String> {
        Ok(values)
    }
}

struct WordCount;

impl<'a> MapReduceJob<'a> for WordCount {
    type Input = &'static str;
    type Key = String;
    type Value = u64;
    type Output = u64;

    fn map(
        &self,
        line: &'a &'static str,
        out: &mut Vec<KeyedRecord<String, u64>>,
    ) -> Result<(), String> {
        for w in line.split_whitespace() {
            out.push(KeyedRecord::new(w.to_lowercase(), 1));
        }
        Ok(())
    }

    fn value_order(&self, a: &u64, b: &u64) -> Ordering {
        a.cmp(b)
    }

    fn reduce(&self, _key: &String, values: Vec<u64>) -> Result<Vec<u64>, String> {
        Ok(vec![values.iter().sum()])
    }
}

/// Fails on a marked row or key.
struct Failing {
    bad_row: u32,
    bad_key: u8,
}

impl<'a> MapReduceJob<'a> for Failing {
    type Input = (u8, u32);
    type Key = u8;
    type Value = u32;
    type Output = u32;

    fn map(&self, row: &'a (u8, u32), out: &mut Vec<KeyedRecord<u8, u32>>) -> Result<(), String> {
        if row.1 == self.bad_row {
            return Err(format!("cannot map row {}", row.1));
        }
        out.push(KeyedRecord::new(row.0, row.1));
        Ok(())
    }

    fn value_order(&self, a: &u32, b: &u32) -> Ordering {
        a.cmp(b)
    }

    fn reduce(&self, key: &u8, values: Vec<u32>) -> Result<Vec<u32>, String> {
        if *key == self.bad_key {
            return Err("boom".into());
        }
        Ok(values)
    }
}

/// Straight-line oracle: map everything, group, sort, reduce.
fn serial_oracle<'a, J: MapReduceJob<'a>>(
    job: &J,
    input: &'a [J::Input],
) -> BTreeMap<J::Key, Vec<J::Output>> {
    let mut emitted = Vec::new();
    for row in input {
        job.map(row, &mut emitted).unwrap();
    }
    let mut groups: BTreeMap<J::Key, Vec<J::Value>> = BTreeMap::new();
    for r in emitted {
        groups.entry(r.key).or_default().push(r.value);
    }
    groups
        .into_iter()
        .map(|(k, mut vs)| {
            vs.sort_by(|a, b| job.value_order(a, b));
            let out = job.reduce(&k, vs).unwrap();
            (k, out)
        })
        .collect()
}

fn rows(n: u32) -> Vec<(u8, u32)> {
    (0..n)
        .map(|i| (((i * 7919) % 5) as u8, (i * 104_729) % 1_000_003))
        .collect()
}

#[test]
fn identity_job_regroups_by_key() {
    let input = vec![(1u8, 30u32), (0, 20), (1, 10), (2, 5)];
    let cfg = JobConfig::with_workers(1);
    let out = run_job(&Identity, &input, &make_splits(input.len(), 1), &cfg).unwrap();
    assert_eq!(out.groups.len(), 3);
    assert_eq!(out.groups[&0], vec![20]);
    assert_eq!(out.groups[&1], vec![10, 30]);
    assert_eq!(out.groups[&2], vec![5]);
    assert_eq!(out.metrics.records, 4);
}

#[test]
fn word_count_matches_hand_tally() {
    let input = vec![
        "the quick brown fox",
        "the lazy dog",
        "The fox",
        "dog dog",
        "",
        "quick",
    ];
    let cfg = JobConfig::with_workers(3);
    let out = run_job(&WordCount, &input, &make_splits(input.len(), 3), &cfg).unwrap();
    let counts: Vec<(&str, u64)> = out.groups.iter().map(|(k, v)| (k.as_str(), v[0])).collect();
    assert_eq!(
        counts,
        vec![
            ("brown", 1),
            ("dog", 3),
            ("fox", 2),
            ("lazy", 1),
            ("quick", 2),
            ("the", 3)
        ]
    );
}

#[test]
fn output_is_independent_of_workers_and_splits() {
    let input = rows(10_000);
    let oracle = serial_oracle(&Identity, &input);
    for workers in [1, 2, 4, 8] {
        let engine = Engine::new(workers).unwrap();
        for splits in [1, workers, 4 * workers] {
            let out = engine
                .run_job(&Identity, &input, &make_splits(input.len(), splits))
                .unwrap();
            assert_eq!(out.groups, oracle, "workers={workers} splits={splits}");
        }
    }
}

#[test]
fn every_record_reaches_exactly_one_group() {
    let input = rows(5_000);
    let cfg = JobConfig::with_workers(4);
    let out = run_job(&Identity, &input, &make_splits(input.len(), 7), &cfg).unwrap();
    let mut all: Vec<u32> = out.groups.values().flatten().copied().collect();
    let mut expected: Vec<u32> = input.iter().map(|r| r.1).collect();
    all.sort_unstable();
    expected.sort_unstable();
    assert_eq!(all, expected);
    for (k, vs) in &out.groups {
        for v in vs {
            assert!(input.contains(&(*k, *v)));
        }
    }
}

#[test]
fn map_failure_names_split() {
    let input = rows(100);
    let job = Failing {
        bad_row: input[60].1,
        bad_key: 99,
    };
    let err = run_job(
        &job,
        &input,
        &make_splits(100, 4),
        &JobConfig::with_workers(2),
    )
    .unwrap_err();
    match err {
        Error::MapFailed { split_id, message } => {
            assert_eq!(split_id, 2);
            assert!(message.contains("cannot map"));
        }
        e => panic!("unexpected {e}"),
    }
}

#[test]
fn reduce_failure_names_key() {
    let input = rows(100);
    let job = Failing {
        bad_row: u32::MAX,
        bad_key: 3,
    };
    let err = run_job(
        &job,
        &input,
        &make_splits(100, 4),
        &JobConfig::with_workers(2),
    )
    .unwrap_err();
    assert!(matches!(err, Error::ReduceFailed { ref key, .. } if key == "3"));
}

#[test]
fn splits_outside_input_are_rejected() {
    let input = rows(10);
    let engine = Engine::new(1).unwrap();
    assert!(engine
        .run_job(&Identity, &input, &make_splits(11, 2))
        .is_err());
}

#[test]
fn empty_input_gives_empty_output() {
    let out = run_job(
        &Identity,
        &[],
        &make_splits(0, 3),
        &JobConfig::with_workers(3),
    )
    .unwrap();
    assert!(out.groups.is_empty());
}

proptest! {
    #[test]
    fn engine_matches_serial_oracle(
        input in prop::collection::vec((0u8..6, any::<u32>()), 0..400),
        workers in 1usize..6,
        splits in 1usize..12,
    ) {
        let oracle = serial_oracle(&Identity, &input);
        let out = run_job(
            &Identity,
            &input,
            &make_splits(input.len(), splits),
            &JobConfig::with_workers(workers),
        ).unwrap();
        prop_assert_eq!(out.groups, oracle);
    }

    #[test]
    fn shuffle_groups_and_sorts(records in prop::collection::vec((0u8..4, any::<i32>()), 0..200)) {
        let recs: Vec<_> = records.iter().map(|&(k, v)| KeyedRecord::new(k, v)).collect();
        let groups = shuffle(recs, |a, b| a.cmp(b));
        let total: usize = groups.values().map(Vec::len).sum();
        prop_assert_eq!(total, records.len());
        for (k, vs) in &groups {
            prop_assert!(vs.windows(2).all(|w| w[0] <= w[1]));
            let mut expected: Vec<i32> = records.iter().filter(|r| r.0 == *k).map(|r| r.1).collect();
            expected.sort();
            prop_assert_eq!(vs, &expected);
        }
    }
}
