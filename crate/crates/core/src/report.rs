//! Comparison table over finished run ledgers.

use std::fmt::Write as _;
use std::path::PathBuf;

use serde_json::Value;

use crate::orchestrator::{read_ledger, LoadedLedger, Method};

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub ledger: PathBuf,
    pub strategy: String,
    pub val_accuracy: Option<f64>,
    pub llm_queries: Option<u64>,
    pub total_epochs: Option<u64>,
    pub wall_time_s: Option<f64>,
    /// `ok`, `aborted:<code>` or `invalid:<reason>`.
    pub status: String,
}

fn strategy(ledger: &LoadedLedger) -> String {
    let cfg = &ledger.header.config;
    let get = |k: &str| cfg.get(k).and_then(Value::as_u64);
    match ledger.header.method {
        Method::Method1 => match get("t_iterations") {
            Some(t) => format!("method1 T={t}"),
            None => "method1".into(),
        },
        Method::Method2 => match (get("epochs"), get("t_interval")) {
            (Some(e), Some(t)) => format!("method2 E={e} T_interval={t}"),
            _ => "method2".into(),
        },
        Method::Baseline => format!("baseline {}", ledger.header.strategy),
    }
}

fn row(path: &PathBuf) -> ReportRow {
    let invalid = |reason: String| ReportRow {
        ledger: path.clone(),
        strategy: "-".into(),
        val_accuracy: None,
        llm_queries: None,
        total_epochs: None,
        wall_time_s: None,
        status: format!("invalid:{reason}"),
    };
    let ledger = match read_ledger(path) {
        Ok(l) => l,
        Err(e) => return invalid(e.to_string()),
    };
    if let Some(s) = ledger.summary() {
        return ReportRow {
            ledger: path.clone(),
            strategy: strategy(&ledger),
            val_accuracy: Some(s.final_metrics.val_accuracy),
            llm_queries: Some(s.cost.llm_queries),
            total_epochs: Some(s.cost.total_epochs_trained),
            wall_time_s: Some(s.wall_time_s),
            status: "ok".into(),
        };
    }
    if let Some(a) = ledger.abort() {
        return ReportRow {
            ledger: path.clone(),
            strategy: strategy(&ledger),
            val_accuracy: None,
            llm_queries: Some(a.cost.llm_queries),
            total_epochs: Some(a.cost.total_epochs_trained),
            wall_time_s: Some(a.wall_time_s),
            status: format!("aborted:{}", a.code),
        };
    }
    invalid("truncated".into())
}

/// One row per ledger, in the order given. Unreadable ledgers still get a row.
pub fn build_report(paths: &[PathBuf]) -> Vec<ReportRow> {
    paths.iter().map(row).collect()
}

fn cells(r: &ReportRow) -> [String; 6] {
    let opt = |v: Option<String>| v.unwrap_or_else(|| "-".into());
    [
        r.strategy.clone(),
        opt(r.val_accuracy.map(|v| format!("{v:.4}"))),
        opt(r.llm_queries.map(|v| v.to_string())),
        opt(r.total_epochs.map(|v| v.to_string())),
        opt(r.wall_time_s.map(|v| format!("{v:.2}"))),
        r.status.clone(),
    ]
}

const HEADER: [&str; 6] = ["strategy", "val_accuracy", "llm_queries", "total_epochs", "wall_time_s", "status"];

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn render_csv(rows: &[ReportRow]) -> String {
    let mut out = HEADER.join(",");
    out.push('\n');
    for r in rows {
        let line: Vec<String> = cells(r).iter().map(|c| csv_field(c)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Fixed-width text table.
pub fn render_table(rows: &[ReportRow]) -> String {
    let body: Vec<[String; 6]> = rows.iter().map(cells).collect();
    let mut widths = HEADER.map(str::len);
    for r in &body {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cols: &[String]| {
        let parts: Vec<String> = cols
            .iter()
            .enumerate()
            .map(|(i, c)| if i == 0 || i == 5 { format!("{c:<w$}", w = widths[i]) } else { format!("{c:>w$}", w = widths[i]) })
            .collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&mut out, &HEADER.map(String::from));
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    let _ = writeln!(out, "{}", rule.join("  "));
    for r in &body {
        line(&mut out, r);
    }
    out
}
