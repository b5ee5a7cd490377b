use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{Baseline, CellCount, ErrorBreakdown, SweepRow, TaskResult};
use crate::chess::PseudoLegalSubcategory;
use crate::corpus::ProbeTask;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorCounts {
    pub syntax: usize,
    pub path_obstruction: usize,
    pub pseudo_legal: usize,
    pub unreachable: usize,
    pub pseudo_subcats: BTreeMap<String, CellCount>,
    pub path_obstruction_by_piece: BTreeMap<String, CellCount>,
}

/// Machine-readable summary of one task run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskMetrics {
    pub task: ProbeTask,
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exm_acc: Option<f64>,
    pub lgm_acc: f64,
    pub r_precision: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline_exm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub errors: Option<ErrorCounts>,
}

pub fn metrics_json(result: &TaskResult, baseline: Option<&Baseline>, errors: Option<&ErrorBreakdown>) -> TaskMetrics {
    TaskMetrics {
        task: result.task,
        n: result.n,
        exm_acc: result.exm_acc,
        lgm_acc: result.lgm_acc,
        r_precision: result.r_precision,
        baseline_exm: baseline.map(|b| b.exact),
        errors: errors.map(|e| ErrorCounts {
            syntax: e.syntax,
            path_obstruction: e.path_obstruction,
            pseudo_legal: e.pseudo_legal,
            unreachable: e.unreachable,
            pseudo_subcats: e.pseudo_subcats.clone(),
            path_obstruction_by_piece: e.path_obstruction_by_piece.clone(),
        }),
    }
}

/// One model's line in the accuracy table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRow {
    pub name: String,
    pub dev_ppl: Option<f64>,
    pub test_ppl: Option<f64>,
    pub tasks: Vec<TaskMetrics>,
}

fn render(header: &[String], rows: &[Vec<String>]) -> String {
    let mut width: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (i, c) in r.iter().enumerate() {
            width[i] = width[i].max(c.len());
        }
    }
    let line = |cells: &[String]| -> String {
        let mut s = String::new();
        for (i, c) in cells.iter().enumerate() {
            if i == 0 {
                let _ = write!(s, "{c:<w$}", w = width[0]);
            } else {
                let _ = write!(s, "  {c:>w$}", w = width[i]);
            }
        }
        s.trim_end().to_string()
    };
    let mut out = line(header);
    out.push('\n');
    out.push_str(&"-".repeat(width.iter().sum::<usize>() + 2 * (width.len() - 1)));
    out.push('\n');
    for r in rows {
        out.push_str(&line(r));
        out.push('\n');
    }
    out
}

fn pct(x: Option<f64>) -> String {
    x.map_or("-".into(), |v| format!("{:.1}", 100.0 * v))
}

/// Accuracy table: perplexities, then ExM / LgM / R-Prec per task, as
/// percentages. A "Random Legal" row is added when baselines are present.
pub fn results_table(rows: &[ModelRow]) -> String {
    let tasks: Vec<ProbeTask> = ProbeTask::ALL
        .into_iter()
        .filter(|t| rows.iter().any(|r| r.tasks.iter().any(|m| m.task == *t)))
        .collect();
    let mut header = vec!["Model".to_string(), "Dev ppl".into(), "Test ppl".into()];
    for t in &tasks {
        if t.is_actual() {
            header.push(format!("{} ExM", t.label()));
        }
        header.push(format!("{} LgM", t.label()));
        header.push(format!("{} R-Prec", t.label()));
    }
    let ppl = |x: Option<f64>| x.map_or("-".into(), |v| format!("{v:.2}"));
    let mut body = Vec::new();
    let mut baselines: BTreeMap<ProbeTask, f64> = BTreeMap::new();
    for r in rows {
        let mut cells = vec![r.name.clone(), ppl(r.dev_ppl), ppl(r.test_ppl)];
        for t in &tasks {
            let m = r.tasks.iter().find(|m| m.task == *t);
            if let Some(b) = m.and_then(|m| m.baseline_exm) {
                baselines.entry(*t).or_insert(b);
            }
            if t.is_actual() {
                cells.push(pct(m.and_then(|m| m.exm_acc)));
            }
            cells.push(pct(m.map(|m| m.lgm_acc)));
            cells.push(pct(m.map(|m| m.r_precision)));
        }
        body.push(cells);
    }
    if !baselines.is_empty() {
        let mut cells = vec!["Random Legal".to_string(), "-".into(), "-".into()];
        for t in &tasks {
            if t.is_actual() {
                cells.push(pct(baselines.get(t).copied()));
            }
            cells.push("-".into());
            cells.push("-".into());
        }
        body.push(cells);
    }
    render(&header, &body)
}

/// Error-category counts per model for one End task.
pub fn errors_table(rows: &[(String, ErrorBreakdown)]) -> String {
    let header: Vec<String> = ["Model", "Syntax", "Path Obst.", "Pseudo Legal", "Unreachable", "Illegal", "Legal", "N"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|(name, b)| {
            vec![
                name.clone(),
                b.syntax.to_string(),
                b.path_obstruction.to_string(),
                b.pseudo_legal.to_string(),
                b.unreachable.to_string(),
                b.illegal().to_string(),
                b.legal.to_string(),
                b.n.to_string(),
            ]
        })
        .collect();
    render(&header, &body)
}

/// Pseudo-legal errors per (check state, mover) cell as `errors / total`.
pub fn pseudo_legal_table(rows: &[(String, ErrorBreakdown)]) -> String {
    let mut header = vec!["Model".to_string()];
    header.extend(PseudoLegalSubcategory::ALL.iter().map(|s| s.label().to_string()));
    header.push("Total".into());
    let cell = |c: &CellCount| format!("{}/{}", c.errors, c.total);
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|(name, b)| {
            let mut r = vec![name.clone()];
            for s in PseudoLegalSubcategory::ALL {
                r.push(b.pseudo_subcats.get(s.label()).map_or("0/0".into(), cell));
            }
            r.push(cell(&b.pseudo_total));
            r
        })
        .collect();
    render(&header, &body)
}

/// Path-obstruction errors per prompted piece type as `errors / prompts`.
pub fn obstruction_table(rows: &[(String, ErrorBreakdown)]) -> String {
    let pieces = ["king", "queen", "rook", "bishop", "knight"];
    let mut header = vec!["Model".to_string()];
    header.extend(pieces.iter().map(|p| p.to_string()));
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|(name, b)| {
            let mut r = vec![name.clone()];
            for p in pieces {
                let c = b.path_obstruction_by_piece.get(p).copied().unwrap_or_default();
                r.push(format!("{}/{}", c.errors, c.total));
            }
            r
        })
        .collect();
    render(&header, &body)
}

/// Histogram of king-move path lengths for legal and obstructed predictions.
pub fn path_length_csv(b: &ErrorBreakdown) -> String {
    let mut legal = [0usize; 8];
    let mut obst = [0usize; 8];
    for &l in &b.path_lengths_legal {
        legal[l.min(7) as usize] += 1;
    }
    for &l in &b.path_lengths_obstructed {
        obst[l.min(7) as usize] += 1;
    }
    let mut out = String::from("path_length,legal,path_obstruction\n");
    for l in 1..8 {
        let _ = writeln!(out, "{l},{},{}", legal[l], obst[l]);
    }
    out
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("p,dev_ppl\n");
    for r in rows {
        let _ = writeln!(out, "{},{:.6}", r.p, r.dev_ppl);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_csv_format() {
        let csv = sweep_csv(&[SweepRow { p: 0, dev_ppl: 9.5 }, SweepRow { p: 25, dev_ppl: 8.25 }]);
        assert_eq!(csv, "p,dev_ppl\n0,9.500000\n25,8.250000\n");
    }

    #[test]
    fn table_columns_align() {
        let m = TaskMetrics {
            task: ProbeTask::EndActual,
            n: 10,
            exm_acc: Some(0.5),
            lgm_acc: 0.9,
            r_precision: 0.75,
            baseline_exm: Some(0.196),
            errors: None,
        };
        let t = results_table(&[ModelRow {
            name: "UCI".into(),
            dev_ppl: Some(7.7),
            test_ppl: None,
            tasks: vec![m],
        }]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].starts_with("Model"));
        assert!(lines[2].contains("50.0") && lines[2].contains("90.0") && lines[2].contains("7.70"));
        assert!(lines[3].starts_with("Random Legal") && lines[3].contains("19.6"));
    }
}
