//! Plain-text sweep tables laid out like the threshold / NMS ablations:
//! one column per setting, box statistics on top, evaluation rows below.

use serde::Serialize;

use crate::eval::{BoxStats, EvalSummary};

pub const ROW_BOXES: &str = "Avg boxes / image";
pub const ROW_WIDTH: &str = "Avg box width";
pub const ROW_HEIGHT: &str = "Avg box height";
pub const HEADER_TAU: &str = "CAM Threshold τ";
pub const HEADER_NMS: &str = "NMS IoU";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepColumn {
    pub label: String,
    pub taus: Vec<f64>,
    pub nms_iou: f64,
    pub stats: BoxStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval: Option<EvalSummary>,
}

/// Column label for a threshold set: the single value, or "Multi".
pub fn tau_label(taus: &[f64]) -> String {
    match taus {
        [t] => format!("{t}"),
        _ => "Multi".to_string(),
    }
}

pub fn render(header: &str, columns: &[SweepColumn]) -> String {
    let mut rows: Vec<Vec<String>> = Vec::new();
    rows.push(std::iter::once(header.to_string()).chain(columns.iter().map(|c| c.label.clone())).collect());
    let stat_rows: [(&str, fn(&BoxStats) -> String); 3] = [
        (ROW_BOXES, |s| format!("{:.3}", s.avg_boxes_per_image)),
        (ROW_WIDTH, |s| format!("{:.1}", s.avg_width)),
        (ROW_HEIGHT, |s| format!("{:.1}", s.avg_height)),
    ];
    for (name, f) in stat_rows {
        rows.push(std::iter::once(name.to_string()).chain(columns.iter().map(|c| f(&c.stats))).collect());
    }
    let split = rows.len();
    if columns.iter().all(|c| c.eval.is_some()) && !columns.is_empty() {
        let eval_rows: [(&str, fn(&EvalSummary) -> f64); 5] = [
            ("AP.5", |e| e.ap),
            ("AP.5 (11-point)", |e| e.ap11),
            ("AP.5:.95", |e| e.ap_avg),
            ("Recall@.5", |e| e.recall),
            ("CorLoc@.5", |e| e.corloc),
        ];
        for (name, f) in eval_rows {
            rows.push(
                std::iter::once(name.to_string())
                    .chain(columns.iter().map(|c| format!("{:.2}", 100.0 * f(c.eval.as_ref().unwrap()))))
                    .collect(),
            );
        }
    }

    let ncols = rows[0].len();
    let widths: Vec<usize> = (0..ncols)
        .map(|j| rows.iter().map(|r| r[j].chars().count()).max().unwrap_or(0))
        .collect();
    let rule: String = widths
        .iter()
        .map(|w| "-".repeat(w + 2))
        .collect::<Vec<_>>()
        .join("+");
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        if i == 1 || (i == split && split < rows.len()) {
            out.push_str(&rule);
            out.push('\n');
        }
        let cells: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(j, cell)| {
                let pad = widths[j] - cell.chars().count();
                if j == 0 {
                    format!(" {cell}{} ", " ".repeat(pad))
                } else {
                    format!(" {}{cell} ", " ".repeat(pad))
                }
            })
            .collect();
        out.push_str(cells.join("|").trim_end());
        out.push('\n');
    }
    out
}
