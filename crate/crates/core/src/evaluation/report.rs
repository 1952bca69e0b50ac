//! Plain-text tables of accuracy results.

use crate::evaluation::protocol::{Cell, EvalReport};

/// `0.6438 ± 0.0370`
pub fn format_mean_std(r: &EvalReport) -> String {
    format!("{:.4} \u{b1} {:.4}", r.mean, r.std)
}

/// Two aligned columns: row label and mean ± std.
pub fn render_table(header: (&str, &str), rows: &[(String, &EvalReport)]) -> String {
    let cells: Vec<(String, String)> = rows
        .iter()
        .map(|(name, r)| (name.clone(), format_mean_std(r)))
        .collect();
    let w0 = cells
        .iter()
        .map(|c| c.0.chars().count())
        .chain([header.0.chars().count()])
        .max()
        .unwrap_or(0);
    let w1 = cells
        .iter()
        .map(|c| c.1.chars().count())
        .chain([header.1.chars().count()])
        .max()
        .unwrap_or(0);
    let mut out = format!("{:<w0$}  {:<w1$}\n", header.0, header.1);
    out.push_str(&format!("{}  {}\n", "-".repeat(w0), "-".repeat(w1)));
    for (a, b) in cells {
        out.push_str(&format!("{a:<w0$}  {b}\n"));
    }
    out
}

pub fn render_cells(cells: &[Cell]) -> String {
    let rows: Vec<(String, &EvalReport)> = cells.iter().map(|c| (c.name.clone(), &c.report)).collect();
    render_table(("Model Variants", "Accuracy"), &rows)
}

/// Per-fold breakdown of a single report.
pub fn render_folds(r: &EvalReport) -> String {
    let mut out = String::from("fold  accuracy  unlabeled  labeled  test  epochs  best\n");
    for f in &r.folds {
        out.push_str(&format!(
            "{:>4}  {:>8.4}  {:>9}  {:>7}  {:>4}  {:>6}  {:>4}\n",
            f.fold, f.accuracy, f.unlabeled_rows, f.labeled_rows, f.test_rows, f.epochs_run, f.best_epoch
        ));
    }
    out.push_str(&format!("mean  {}\n", format_mean_std(r)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn columns_align() {
        let r = EvalReport {
            per_fold: vec![0.5, 0.7],
            mean: 0.6,
            std: 0.1,
            config_fingerprint: String::new(),
            folds: vec![],
        };
        let t = render_table(("Dataset", "Accuracy"), &[("Diabetes".into(), &r), ("Wall".into(), &r)]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[2], "Diabetes  0.6000 \u{b1} 0.1000");
        assert_eq!(lines[3], "Wall      0.6000 \u{b1} 0.1000");
    }
}
