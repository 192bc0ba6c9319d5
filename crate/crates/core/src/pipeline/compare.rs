use serde::{Deserialize, Serialize};

use super::{run, Mode, Result, RunConfig, RunResult};
use crate::lakeindex::JoinIndex;
use crate::tablecore::{write_csv, Corpus, QueryTable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: String,
    pub metric: String,
    pub score: f64,
    pub std: f64,
    pub improvement_percent: f64,
    /// Enrichment wall time (search + select + align + eval); `None` for no_enrich.
    pub time_seconds: Option<f64>,
    pub search_seconds: Option<f64>,
    pub select_seconds: Option<f64>,
    pub align_seconds: Option<f64>,
    pub eval_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub results: Vec<RunResult>,
}

fn row_for(r: &RunResult) -> ComparisonRow {
    let enriched = r.config.mode.searches();
    ComparisonRow {
        method: r.config.mode.label().to_string(),
        metric: r.after.metric.label().to_string(),
        score: r.after.mean,
        std: r.after.std,
        improvement_percent: r.improvement_percent,
        time_seconds: enriched.then(|| r.timings.total()),
        search_seconds: r.timings.search,
        select_seconds: r.timings.select,
        align_seconds: r.timings.align,
        eval_seconds: enriched.then_some(r.timings.eval),
    }
}

fn opt(v: Option<f64>, precision: usize) -> String {
    v.map(|x| format!("{x:.precision$}")).unwrap_or_default()
}

impl Comparison {
    pub fn rows(&self) -> Vec<ComparisonRow> {
        self.results.iter().map(row_for).collect()
    }

    pub fn get(&self, mode: Mode) -> Option<&RunResult> {
        self.results.iter().find(|r| r.config.mode == mode)
    }

    /// Method, score, std, improvement, total and per-stage seconds.
    pub fn to_csv(&self) -> Vec<u8> {
        let header: Vec<String> = [
            "method",
            "metric",
            "score",
            "std",
            "improvement_percent",
            "time_s",
            "search_s",
            "select_s",
            "align_s",
            "eval_s",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let rows: Vec<Vec<String>> = self
            .rows()
            .iter()
            .map(|r| {
                vec![
                    r.method.clone(),
                    r.metric.clone(),
                    format!("{:.6}", r.score),
                    format!("{:.6}", r.std),
                    format!("{:.4}", r.improvement_percent),
                    opt(r.time_seconds, 4),
                    opt(r.search_seconds, 4),
                    opt(r.select_seconds, 4),
                    opt(r.align_seconds, 4),
                    opt(r.eval_seconds, 4),
                ]
            })
            .collect();
        write_csv(&header, &rows)
    }

    /// Aligned text table: Method | Score ± std | Improvement | Time(s).
    pub fn to_text(&self) -> String {
        let rows = self.rows();
        let metric = rows
            .first()
            .map_or("Score", |r| r.metric.as_str())
            .to_string();
        let cells: Vec<[String; 4]> = rows
            .iter()
            .map(|r| {
                [
                    r.method.clone(),
                    format!("{:.3} ± {:.3}", r.score, r.std),
                    if r.time_seconds.is_some() {
                        format!("{:+.2}%", r.improvement_percent)
                    } else {
                        "-".to_string()
                    },
                    r.time_seconds
                        .map_or("-".to_string(), |t| format!("{t:.2}")),
                ]
            })
            .collect();
        let header = [
            "Method".to_string(),
            metric,
            "Improvement".into(),
            "Time(s)".into(),
        ];
        let mut widths = header.clone().map(|h| h.chars().count());
        for c in &cells {
            for (w, v) in widths.iter_mut().zip(c) {
                *w = (*w).max(v.chars().count());
            }
        }
        let line = |c: &[String; 4]| {
            c.iter()
                .zip(widths)
                .map(|(v, w)| format!("{v:<w$}"))
                .collect::<Vec<_>>()
                .join(" | ")
                .trim_end()
                .to_string()
        };
        let mut out = line(&header);
        out.push('\n');
        out.push_str(
            &widths
                .iter()
                .map(|&w| "-".repeat(w))
                .collect::<Vec<_>>()
                .join("-|-"),
        );
        out.push('\n');
        for c in &cells {
            out.push_str(&line(c));
            out.push('\n');
        }
        out
    }
}

/// Runs every config in order against the same query and lake.
pub fn compare_modes(
    configs: &[RunConfig],
    q: &QueryTable,
    corpus: &Corpus,
    index: &JoinIndex,
) -> Result<Comparison> {
    let results = configs
        .iter()
        .map(|c| run(c, q, corpus, index))
        .collect::<Result<Vec<_>>>()?;
    Ok(Comparison { results })
}
