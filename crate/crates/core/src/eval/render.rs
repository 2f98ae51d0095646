//! Plain-text report rendering, mirroring the published table layouts.

use super::{APResult, ClassificationReport};

/// Render the per-class precision/recall/F1/support table with a trailing
/// accuracy row.
pub fn render_classification_report(report: &ClassificationReport) -> String {
    let label_width = report
        .per_class
        .iter()
        .map(|(l, _)| l.display_name().len())
        .chain(std::iter::once("Accuracy".len()))
        .max()
        .unwrap_or(8);

    let mut out = String::new();
    out.push_str(&format!(
        "{:<label_width$}  {:>9}  {:>6}  {:>8}  {:>7}\n",
        "", "Precision", "Recall", "F1-Score", "Support"
    ));
    for (label, m) in &report.per_class {
        out.push_str(&format!(
            "{:<label_width$}  {:>9.2}  {:>6.2}  {:>8.2}  {:>7}\n",
            label.display_name(),
            m.precision,
            m.recall,
            m.f1,
            m.support
        ));
    }
    out.push_str(&format!(
        "{:<label_width$}  {:>9}  {:>6}  {:>8.2}  {:>7}\n",
        "Accuracy", "", "", report.accuracy, report.total_support
    ));
    for label in &report.zero_support_predicted {
        out.push_str(&format!(
            "note: {} predicted with zero ground-truth support\n",
            label.display_name()
        ));
    }
    out
}

/// Render one mAP row across the threshold sweep, with `mAP50`-style column
/// heads derived from the thresholds.
pub fn render_ap_table(result: &APResult, row_label: &str) -> String {
    let label_width = row_label.len().max(8);
    let mut out = String::new();
    out.push_str(&format!("{:<label_width$}", ""));
    for &t in &result.thresholds {
        out.push_str(&format!("  {:>6}", format!("mAP{:.0}", t * 100.0)));
    }
    out.push('\n');
    out.push_str(&format!("{row_label:<label_width$}"));
    for value in &result.map_per_threshold {
        match value {
            Some(v) => out.push_str(&format!("  {v:>6.3}")),
            None => out.push_str(&format!("  {:>6}", "-")),
        }
    }
    out.push('\n');
    out
}
