use std::cmp::Ordering;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::metrics::BASELINES;
use super::runner::RunResult;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(Error::invalid(format!("unknown report format `{other}` (expected csv or markdown)"))),
        }
    }
}

/// One table line. The baseline row has no eval score and no settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub eval_f_avg: Option<f64>,
    pub t80: Option<f64>,
    pub t100: Option<f64>,
    pub settings: String,
}

pub const BASELINE_LABEL: &str = "Baseline";
const HEADER: [&str; 5] = ["#M", "Eval f-avg", "T%80", "T%100", "Settings"];

fn desc(a: Option<f64>, b: Option<f64>) -> Ordering {
    match (a, b) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    }
}

/// Rows sorted by test f-avg (T%100, then T%80) descending, ties by eval
/// f-avg, numbered from 1, with the baseline row appended.
pub fn report_rows(results: &[RunResult]) -> Vec<ReportRow> {
    let mut sorted: Vec<&RunResult> = results.iter().collect();
    sorted.sort_by(|a, b| {
        desc(a.test_f_avg(), b.test_f_avg())
            .then(desc(Some(a.eval.f_avg), Some(b.eval.f_avg)))
            .then(a.settings.cmp(&b.settings))
    });
    let mut rows: Vec<ReportRow> = sorted
        .iter()
        .enumerate()
        .map(|(i, r)| ReportRow {
            model: (i + 1).to_string(),
            eval_f_avg: Some(r.eval.f_avg),
            t80: r.test_t80.as_ref().map(|s| s.f_avg),
            t100: r.test_t100.as_ref().map(|s| s.f_avg),
            settings: r.settings.clone(),
        })
        .collect();
    rows.push(ReportRow {
        model: BASELINE_LABEL.into(),
        eval_f_avg: None,
        t80: Some(BASELINES.task_b),
        t100: Some(BASELINES.task_b),
        settings: String::new(),
    });
    rows
}

fn cell(v: Option<f64>, decimals: usize) -> String {
    v.map_or(String::new(), |x| format!("{x:.decimals$}"))
}

pub fn render(rows: &[ReportRow], format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(HEADER)?;
            for r in rows {
                w.write_record([r.model.clone(), cell(r.eval_f_avg, 6), cell(r.t80, 6), cell(r.t100, 6), r.settings.clone()])?;
            }
            let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
            Ok(String::from_utf8(bytes).expect("csv writer emits utf-8"))
        }
        ReportFormat::Markdown => {
            let mut out = format!("| {} |\n|{}\n", HEADER.join(" | "), "---|".repeat(HEADER.len()));
            for r in rows {
                let settings = r.settings.replace('|', "\\|");
                writeln!(
                    out,
                    "| {} | {} | {} | {} | {} |",
                    r.model,
                    cell(r.eval_f_avg, 3),
                    cell(r.t80, 3),
                    cell(r.t100, 3),
                    settings
                )
                .expect("write to string");
            }
            Ok(out)
        }
    }
}

/// Results table in the chosen format.
pub fn report(results: &[RunResult], format: ReportFormat) -> Result<String> {
    if results.is_empty() {
        return Err(Error::EmptyInput("no results to report".into()));
    }
    render(&report_rows(results), format)
}

/// Reads a CSV produced by [`render`].
pub fn load_report_csv(text: &str) -> Result<Vec<ReportRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != HEADER {
        return Err(Error::MissingColumn(format!("report header {}", HEADER.join(","))));
    }
    let num = |s: &str, line: usize| -> Result<Option<f64>> {
        if s.is_empty() {
            return Ok(None);
        }
        s.parse().map(Some).map_err(|_| Error::Malformed { line, reason: format!("bad number `{s}`") })
    };
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        rows.push(ReportRow {
            model: rec[0].to_string(),
            eval_f_avg: num(&rec[1], line)?,
            t80: num(&rec[2], line)?,
            t100: num(&rec[3], line)?,
            settings: rec[4].to_string(),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::{score, RunConfig, RunSeeds, Timing};
    use crate::corpus::StanceLabel::{Against as A, Favor as F, None as N};

    fn result(settings: &str, eval: f64, t80: Option<f64>, t100: Option<f64>) -> RunResult {
        let s = score(&[A, F, N], &[A, F, N]).unwrap();
        let with = |v: f64| {
            let mut x = s.clone();
            x.f_avg = v;
            x
        };
        RunResult {
            run_id: settings.into(),
            settings: settings.into(),
            config: RunConfig::default(),
            eval: with(eval),
            test_t80: t80.map(with),
            test_t100: t100.map(with),
            history: Default::default(),
            seeds: RunSeeds::resolve(&RunConfig::default()),
            timing: Timing::default(),
            versions: Default::default(),
            started_at: String::new(),
        }
    }

    #[test]
    fn two_results_plus_baseline() {
        let rs = [result("Conv2D(GloVe)", 0.5, Some(0.6), Some(0.61)), result("Conv2D(FastText)", 0.52, Some(0.65), Some(0.7))];
        let rows = report_rows(&rs);
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].settings, "Conv2D(FastText)");
        assert_eq!(rows[0].model, "1");
        assert_eq!(rows[2].model, BASELINE_LABEL);
        assert_eq!((rows[2].t80, rows[2].t100), (Some(0.628), Some(0.628)));
    }

    #[test]
    fn markdown_is_a_table() {
        let md = report(&[result("Conv2D(GloVe)", 0.5, Some(0.6), None)], ReportFormat::Markdown).unwrap();
        let lines: Vec<&str> = md.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "| #M | Eval f-avg | T%80 | T%100 | Settings |");
        assert!(lines[1].split('|').filter(|c| !c.is_empty()).all(|c| c == "---"));
        for l in &lines {
            assert!(l.starts_with('|') && l.ends_with('|'));
            assert_eq!(l.matches('|').count(), 6, "{l}");
        }
        assert_eq!(lines[3], "| Baseline |  | 0.628 | 0.628 |  |");
        assert!(report(&[], ReportFormat::Csv).is_err());
    }

    #[test]
    fn csv_round_trips_at_six_decimals() {
        let rs = [result("Conv2D(FastText) + DeepWalk", 0.123456789, Some(0.7333334), None), result("BiLSTM(SVs)", 0.9, None, None)];
        let text = report(&rs, ReportFormat::Csv).unwrap();
        let rows = load_report_csv(&text).unwrap();
        assert_eq!(rows.len(), 3);
        for (row, src) in rows.iter().zip(report_rows(&rs)) {
            assert_eq!(row.settings, src.settings);
            for (a, b) in [(row.eval_f_avg, src.eval_f_avg), (row.t80, src.t80), (row.t100, src.t100)] {
                assert_eq!(a.is_some(), b.is_some());
                if let (Some(a), Some(b)) = (a, b) {
                    assert!((a - b).abs() <= 5e-7, "{a} {b}");
                }
            }
        }
        assert_eq!(render(&rows, ReportFormat::Csv).unwrap(), text);
    }
}
