use serde::Serialize;

use super::RunManifest;
use crate::retrieve::RetrievalReport;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub name: String,
    pub seed: u64,
    pub config_digest: String,
    /// Same order as [`ComparisonReport::columns`].
    pub values: Vec<f64>,
    /// Whether the row holds the best value of each column.
    pub best: Vec<bool>,
}

/// Runs over one dataset side by side.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub dataset_digest: String,
    pub columns: Vec<String>,
    pub rows: Vec<ComparisonRow>,
}

fn cells(r: &RetrievalReport) -> Vec<f64> {
    r.r_at.values().copied().chain([r.mdr, r.mnr]).collect()
}

/// Builds the comparison table. Rows are ordered by name, then seed.
pub fn write_report(manifests: &[RunManifest]) -> Result<ComparisonReport> {
    let first = manifests
        .first()
        .ok_or_else(|| Error::invalid("no runs to report"))?;
    let ks: Vec<usize> = first.t2v.r_at.keys().copied().collect();
    for m in manifests {
        if m.dataset_digest != first.dataset_digest {
            return Err(Error::invalid(format!(
                "runs use different datasets: {:?} has {}, {:?} has {}",
                first.name, first.dataset_digest, m.name, m.dataset_digest
            )));
        }
        for r in [&m.t2v, &m.v2t] {
            if !r.r_at.keys().copied().eq(ks.iter().copied()) {
                return Err(Error::invalid(format!(
                    "{:?} reports different recall cutoffs",
                    m.name
                )));
            }
        }
    }
    let mut columns = vec![];
    let mut higher_better = vec![];
    for dir in ["T2V", "V2T"] {
        for k in &ks {
            columns.push(format!("{dir} R@{k}"));
            higher_better.push(true);
        }
        columns.extend([format!("{dir} MdR"), format!("{dir} MnR")]);
        higher_better.extend([false, false]);
    }

    let mut sorted: Vec<&RunManifest> = manifests.iter().collect();
    sorted.sort_by(|a, b| (&a.name, a.seed).cmp(&(&b.name, b.seed)));
    let values: Vec<Vec<f64>> = sorted
        .iter()
        .map(|m| [cells(&m.t2v), cells(&m.v2t)].concat())
        .collect();
    let best_of: Vec<f64> = (0..columns.len())
        .map(|c| {
            let col = values.iter().map(|v| v[c]);
            if higher_better[c] {
                col.fold(f64::NEG_INFINITY, f64::max)
            } else {
                col.fold(f64::INFINITY, f64::min)
            }
        })
        .collect();
    let rows = sorted
        .iter()
        .zip(values)
        .map(|(m, v)| ComparisonRow {
            name: m.name.clone(),
            seed: m.seed,
            config_digest: m.config_digest.clone(),
            best: v.iter().zip(&best_of).map(|(x, b)| x == b).collect(),
            values: v,
        })
        .collect();
    Ok(ComparisonReport {
        dataset_digest: first.dataset_digest.clone(),
        columns,
        rows,
    })
}

fn pad_right(s: &str, w: usize) -> String {
    format!("{s}{}", " ".repeat(w.saturating_sub(s.chars().count())))
}

fn pad_left(s: &str, w: usize) -> String {
    format!("{}{s}", " ".repeat(w.saturating_sub(s.chars().count())))
}

impl ComparisonReport {
    /// Aligned table, one decimal place. With several rows, the best value in
    /// each column carries a `*`.
    pub fn to_text(&self) -> String {
        let per_dir = self.columns.len() / 2;
        let headers: Vec<String> = self
            .columns
            .iter()
            .map(|c| {
                let metric = c.split_once(' ').map_or(c.as_str(), |(_, m)| m);
                let arrow = if metric.starts_with("R@") {
                    '↑'
                } else {
                    '↓'
                };
                format!("{metric}{arrow}")
            })
            .collect();
        let flag = self.rows.len() > 1;
        let body: Vec<(String, Vec<String>)> = self
            .rows
            .iter()
            .map(|r| {
                let cells = r
                    .values
                    .iter()
                    .zip(&r.best)
                    .map(|(v, &b)| format!("{v:.1}{}", if flag && b { "*" } else { "" }))
                    .collect();
                (format!("{} (seed {})", r.name, r.seed), cells)
            })
            .collect();
        let name_w = body
            .iter()
            .map(|(n, _)| n.chars().count())
            .chain(["Method".len()])
            .max()
            .unwrap_or(6);
        let col_w: Vec<usize> = (0..headers.len())
            .map(|c| {
                body.iter()
                    .map(|(_, cells)| cells[c].chars().count())
                    .chain([headers[c].chars().count()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let group_w = |range: std::ops::Range<usize>| range.map(|c| col_w[c] + 2).sum::<usize>();

        let mut out = format!("dataset {}\n", self.dataset_digest);
        out.push_str(&pad_right("", name_w));
        out.push_str(" |");
        out.push_str(&pad_right(" Text-to-Video", group_w(0..per_dir)));
        out.push_str(" |");
        out.push_str(" Video-to-Text\n");
        let line = |name: &str, cells: &[String]| {
            let mut s = pad_right(name, name_w);
            for (c, cell) in cells.iter().enumerate() {
                if c % per_dir == 0 {
                    s.push_str(" |");
                }
                s.push_str("  ");
                s.push_str(&pad_left(cell, col_w[c]));
            }
            s.trim_end().to_string() + "\n"
        };
        out.push_str(&line("Method", &headers));
        for (name, cells) in &body {
            out.push_str(&line(name, cells));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}
