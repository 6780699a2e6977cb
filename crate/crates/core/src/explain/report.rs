use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use super::ImportanceRanking;
use crate::{Error, Result};

const LABEL_WIDTH: f64 = 240.0;
const BAR_AREA: f64 = 360.0;
const ROW_HEIGHT: f64 = 22.0;
const MARGIN: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceReport {
    pub table: String,
    pub svg: String,
}

impl ImportanceReport {
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("importance.svg"), &self.svg)?;
        Ok(())
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Text table and horizontal bar chart of the `top_k` leading features.
pub fn importance_report(ranking: &ImportanceRanking, top_k: usize) -> Result<ImportanceReport> {
    if top_k == 0 {
        return Err(Error::Config("top_k must be >= 1".into()));
    }
    let top = ranking.top(top_k);

    let w = top
        .iter()
        .map(|e| e.feature.len())
        .chain(["feature".len()])
        .max()
        .unwrap_or(0);
    let mut table = format!("{:>4}  {:<w$}  importance\n", "rank", "feature");
    for (i, e) in top.iter().enumerate() {
        let _ = writeln!(table, "{:>4}  {:<w$}  {:.6e}", i + 1, e.feature, e.importance);
    }

    let max = top.iter().map(|e| e.importance).fold(0.0, f64::max);
    let width = LABEL_WIDTH + BAR_AREA + 2.0 * MARGIN + 90.0;
    let height = ROW_HEIGHT * top.len() as f64 + 2.0 * MARGIN;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    for (i, e) in top.iter().enumerate() {
        let y = MARGIN + ROW_HEIGHT * i as f64;
        let len = if max > 0.0 { BAR_AREA * e.importance / max } else { 0.0 };
        let x0 = MARGIN + LABEL_WIDTH;
        let _ = writeln!(
            svg,
            r#"  <text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            x0 - 6.0,
            y + 15.0,
            escape(&e.feature)
        );
        let _ = writeln!(
            svg,
            r##"  <rect x="{x0:.1}" y="{:.1}" width="{len:.2}" height="{:.1}" fill="#4477aa"/>"##,
            y + 3.0,
            ROW_HEIGHT - 6.0
        );
        let _ = writeln!(
            svg,
            r#"  <text x="{:.1}" y="{:.1}">{:.3e}</text>"#,
            x0 + len + 4.0,
            y + 15.0,
            e.importance
        );
    }
    svg.push_str("</svg>\n");
    Ok(ImportanceReport { table, svg })
}

/// `rank,feature,importance` with one-based ranks.
pub fn write_importance_csv<W: Write>(ranking: &ImportanceRanking, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["rank", "feature", "importance"])?;
    for (i, e) in ranking.entries.iter().enumerate() {
        w.write_record([(i + 1).to_string(), e.feature.clone(), e.importance.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
