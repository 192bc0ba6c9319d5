use std::collections::HashSet;

use tablelift_core::enrich::AggregationStrategy;
use tablelift_core::lakeindex::{build_index, KeyColumns};
use tablelift_core::mlkit::{EvalReport, Metric, ModelKind};
use tablelift_core::pipeline::{
    compare_modes, generate_lake, improvement_percent, run, LakeSpec, Mode, PipelineError,
    RunConfig, RunStore, SyntheticLake,
};
use tablelift_core::tablecore::{TargetTable, TaskKind};
use tablelift_core::textenc::{tokenize, EmbeddingProvider};

fn small_spec(seed: u64) -> LakeSpec {
    LakeSpec {
        table_count: 30,
        query_rows: 120,
        rows_per_table: 40,
        seed,
        ..Default::default()
    }
}

fn lake_and_index(spec: &LakeSpec) -> (SyntheticLake, tablelift_core::lakeindex::JoinIndex) {
    let lake = generate_lake(spec).unwrap();
    let index = build_index(
        &lake.corpus,
        KeyColumns::First,
        EmbeddingProvider::default(),
        spec.seed,
    )
    .unwrap();
    (lake, index)
}

fn config(lake: &SyntheticLake, mode: Mode) -> RunConfig {
    RunConfig {
        mode,
        m: 5,
        k: 20,
        seed: 3,
        entity_name: Some(lake.entity_name.clone()),
        ..Default::default()
    }
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn same_seed_same_lake() {
    let a = generate_lake(&small_spec(4)).unwrap();
    let b = generate_lake(&small_spec(4)).unwrap();
    assert_eq!(
        serde_json::to_vec(&a).unwrap(),
        serde_json::to_vec(&b).unwrap()
    );
    let c = generate_lake(&small_spec(5)).unwrap();
    assert_ne!(a.query, c.query);
}

#[test]
fn planted_column_correlation() {
    let spec = LakeSpec {
        table_count: 3,
        query_rows: 500,
        rho: 0.9,
        ..Default::default()
    };
    let lake = generate_lake(&spec).unwrap();
    let joined = lake.oracle_join();
    let y: Vec<f64> = (0..500)
        .map(|r| lake.query.task_cell(r).parse().unwrap())
        .collect();
    let x: Vec<f64> = joined.enriched_columns[0]
        .cells
        .iter()
        .map(|c| c.parse().unwrap())
        .collect();
    let r = pearson(&x, &y);
    assert!((r - 0.9).abs() <= 0.05, "corr {r}");
}

#[test]
fn without_signal_no_table_shares_a_whole_key() {
    let spec = LakeSpec {
        signal_tables: 0,
        ..small_spec(2)
    };
    let lake = generate_lake(&spec).unwrap();
    let query_keys: HashSet<Vec<String>> = (0..lake.query.num_rows())
        .map(|r| {
            tokenize(lake.query.key_cell(r))
                .set
                .iter()
                .map(str::to_string)
                .collect()
        })
        .collect();
    let query_words: HashSet<String> = query_keys.iter().flatten().cloned().collect();
    let mut shared = 0usize;
    let mut total = 0usize;
    for t in lake.corpus.tables() {
        for row in &t.rows {
            let words: Vec<String> = tokenize(&row[0]).set.iter().map(str::to_string).collect();
            assert!(
                !query_keys.contains(&words),
                "table {} repeats a query key",
                t.id
            );
            total += words.len();
            shared += words.iter().filter(|w| query_words.contains(*w)).count();
        }
    }
    let rate = shared as f64 / total as f64;
    assert!(
        (rate - spec.key_overlap).abs() < 0.05,
        "shared token rate {rate}"
    );
}

#[test]
fn invalid_specs_rejected() {
    for spec in [
        LakeSpec {
            rho: 1.5,
            ..small_spec(0)
        },
        LakeSpec {
            signal_tables: 20,
            adversarial_tables: 20,
            ..small_spec(0)
        },
        LakeSpec {
            query_rows: 2,
            ..small_spec(0)
        },
    ] {
        assert!(matches!(
            generate_lake(&spec),
            Err(PipelineError::InvalidSpec(_))
        ));
    }
}

#[test]
fn no_enrich_run_is_its_own_baseline() {
    let (lake, index) = lake_and_index(&small_spec(1));
    let r = run(
        &config(&lake, Mode::NoEnrich),
        &lake.query,
        &lake.corpus,
        &index,
    )
    .unwrap();
    assert_eq!(r.before, r.after);
    assert_eq!(r.improvement_percent, 0.0);
    assert!(r.provenance.is_empty());
    assert!(r.enriched.enriched_columns.is_empty());
    assert!(r.timings.search.is_none());
}

#[test]
fn selection_respects_m_and_is_a_subset_of_join() {
    let (lake, index) = lake_and_index(&small_spec(1));
    let one = RunConfig {
        m: 1,
        ..config(&lake, Mode::JoinSelect)
    };
    let r = run(&one, &lake.query, &lake.corpus, &index).unwrap();
    assert!(r.counts.tables_after_selection.unwrap() <= 1);
    assert_eq!(r.provenance.len(), 1);

    let join = run(
        &config(&lake, Mode::Join),
        &lake.query,
        &lake.corpus,
        &index,
    )
    .unwrap();
    let sel = run(
        &config(&lake, Mode::JoinSelect),
        &lake.query,
        &lake.corpus,
        &index,
    )
    .unwrap();
    let sel_counts = sel.counts.tables_after_selection.unwrap();
    assert!(sel_counts <= sel.counts.tables_after_search.min(5));
    let ids = |r: &tablelift_core::pipeline::RunResult| -> HashSet<String> {
        r.enriched
            .enriched_columns
            .iter()
            .flat_map(|c| c.provenance.iter().map(|p| p.table_id.clone()))
            .collect()
    };
    assert!(ids(&sel).is_subset(&ids(&join)));
    let scores: Vec<f64> = sel.provenance.iter().map(|p| p.score).collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn full_pipeline_beats_baseline_and_is_deterministic() {
    let (lake, index) = lake_and_index(&small_spec(3));
    let c = config(&lake, Mode::JoinSelectAlign);
    let a = run(&c, &lake.query, &lake.corpus, &index).unwrap();
    let b = run(&c, &lake.query, &lake.corpus, &index).unwrap();
    assert_eq!(a.after.fold_scores, b.after.fold_scores);
    assert_eq!(a.importance, b.importance);
    assert!(a.after.mean < a.before.mean);
    assert!(a.improvement_percent > 0.0);
    assert_eq!(a.enriched.num_rows(), lake.query.num_rows());
    assert_eq!(a.enriched.base, lake.query);
    assert!(matches!(
        a.enriched.aggregation,
        Some(AggregationStrategy::Threshold { .. })
    ));
    assert!(a.diffs.is_none());
    assert!(a.timings.total() >= a.timings.eval);
}

#[test]
fn classification_runs_record_diffs() {
    let (mut lake, index) = lake_and_index(&small_spec(6));
    for r in 0..lake.query.num_rows() {
        let y: f64 = lake.query.rows[r][1].parse().unwrap();
        lake.query.rows[r][1] = if y > 50.0 { "hit" } else { "flop" }.to_string();
    }
    lake.query.task_kind = TaskKind::Classification;
    let r = run(
        &config(&lake, Mode::JoinSelectAlign),
        &lake.query,
        &lake.corpus,
        &index,
    )
    .unwrap();
    assert_eq!(r.after.metric, Metric::MacroF1);
    assert!((0.0..=1.0).contains(&r.after.mean));
    assert!(r.diffs.is_some());
    assert_eq!(r.improvement_percent > 0.0, r.after.mean > r.before.mean);
}

fn report(metric: Metric, mean: f64) -> EvalReport {
    EvalReport {
        task_kind: TaskKind::Regression,
        model: ModelKind::LassoLinear,
        metric,
        fold_scores: vec![mean],
        mean,
        std: 0.0,
        wall_time_seconds: 0.0,
        feature_count: 1,
    }
}

#[test]
fn improvement_sign_follows_metric_direction() {
    assert!(improvement_percent(&report(Metric::Mse, 2.0), &report(Metric::Mse, 1.0)) > 0.0);
    assert!(improvement_percent(&report(Metric::Mse, 1.0), &report(Metric::Mse, 2.0)) < 0.0);
    assert!(
        improvement_percent(&report(Metric::MacroF1, 0.5), &report(Metric::MacroF1, 0.6)) > 0.0
    );
    assert!(
        improvement_percent(&report(Metric::MacroF1, 0.6), &report(Metric::MacroF1, 0.5)) < 0.0
    );
    let p = improvement_percent(&report(Metric::Mse, 0.603), &report(Metric::Mse, 0.466));
    assert!((p - 22.72).abs() < 0.01);
}

#[test]
fn two_mode_comparison_report() {
    let (lake, index) = lake_and_index(&small_spec(1));
    let configs = vec![
        config(&lake, Mode::NoEnrich),
        config(&lake, Mode::JoinSelectAlign),
    ];
    let cmp = compare_modes(&configs, &lake.query, &lake.corpus, &index).unwrap();
    let rows = cmp.rows();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].time_seconds.is_none() && rows[0].search_seconds.is_none());
    assert!(rows[1].time_seconds.is_some());
    let text = cmp.to_text();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("Method") && lines[0].contains("Time(s)"));
    assert!(lines[2].starts_with("No-enrich") && lines[2].ends_with('-'));
    assert!(lines[3].starts_with("Join-select-align") && lines[3].contains('+'));
    let csv = String::from_utf8(cmp.to_csv()).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.lines().nth(1).unwrap().ends_with(",,,,,"));
}

#[test]
fn run_store_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (lake, index) = lake_and_index(&small_spec(1));
    let r = run(
        &config(&lake, Mode::JoinSelect),
        &lake.query,
        &lake.corpus,
        &index,
    )
    .unwrap();
    let store = RunStore::open(dir.path()).unwrap();
    store.save("run-1", &r).unwrap();
    let reopened = RunStore::open(dir.path()).unwrap();
    assert_eq!(reopened.list().unwrap(), vec!["run-1".to_string()]);
    assert_eq!(reopened.load_run("run-1").unwrap().unwrap(), r);
    assert!(reopened.load_run("missing").unwrap().is_none());
    assert!(reopened.save("../escape", &r).is_err());
}

#[test]
fn invalid_config_rejected() {
    let (lake, index) = lake_and_index(&small_spec(1));
    for c in [
        RunConfig {
            k: 0,
            ..Default::default()
        },
        RunConfig {
            m: 0,
            ..Default::default()
        },
        RunConfig {
            folds: 1,
            ..Default::default()
        },
        RunConfig {
            aggregation: AggregationStrategy::Threshold { tau: 0.0 },
            ..Default::default()
        },
    ] {
        assert!(matches!(
            run(&c, &lake.query, &lake.corpus, &index),
            Err(PipelineError::InvalidConfig(_))
        ));
    }
}

#[test]
fn mode_names_round_trip() {
    for m in Mode::ALL {
        assert_eq!(m.to_string().parse::<Mode>().unwrap(), m);
        assert_eq!(m.to_string().replace('_', "-").parse::<Mode>().unwrap(), m);
    }
    let json = serde_json::to_string(&RunConfig::default()).unwrap();
    let back: RunConfig = serde_json::from_str(&json).unwrap();
    assert_eq!(back, RunConfig::default());
    let partial: RunConfig = serde_json::from_str(r#"{"mode":"join","k":5}"#).unwrap();
    assert_eq!((partial.mode, partial.k, partial.m), (Mode::Join, 5, 600));
    let _: Option<TargetTable> = None;
}
