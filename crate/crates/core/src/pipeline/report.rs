use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::imitator::{parse_jsonl, rows_to_csv, summarize_records, EpisodeRecord, ReportRow};

pub const EPISODES_FILE: &str = "episodes.jsonl";
pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_SVG: &str = "report.svg";

pub const PLOT_HEIGHT: f64 = 240.0;
const BAR_WIDTH: f64 = 22.0;
const BAR_GAP: f64 = 4.0;
const GROUP_GAP: f64 = 28.0;
const MARGIN_LEFT: f64 = 48.0;
const MARGIN_TOP: f64 = 24.0;
const MARGIN_BOTTOM: f64 = 96.0;

const PALETTE: [&str; 10] =
    ["#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Grouped bar chart of normalized score, one group per task and one bar per policy.
pub fn render_svg(rows: &[ReportRow]) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::config("nothing to plot"));
    }
    let mut tasks: Vec<&str> = Vec::new();
    let mut policies: Vec<&str> = Vec::new();
    for r in rows {
        if !tasks.contains(&r.task.as_str()) {
            tasks.push(&r.task);
        }
        if !policies.contains(&r.policy.as_str()) {
            policies.push(&r.policy);
        }
    }
    let group_w = policies.len() as f64 * (BAR_WIDTH + BAR_GAP);
    let width = MARGIN_LEFT + tasks.len() as f64 * (group_w + GROUP_GAP) + 160.0;
    let height = MARGIN_TOP + PLOT_HEIGHT + MARGIN_BOTTOM;
    let base = MARGIN_TOP + PLOT_HEIGHT;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<text x="{MARGIN_LEFT}" y="16">normalized score</text>"#);
    for tick in 0..=4 {
        let v = tick as f64 / 4.0;
        let y = base - v * PLOT_HEIGHT;
        let _ = writeln!(svg, r##"<line x1="{MARGIN_LEFT}" y1="{y}" x2="{}" y2="{y}" stroke="#ddd"/>"##, width - 160.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">{v:.2}</text>"#, MARGIN_LEFT - 4.0, y + 4.0);
    }
    for (ti, task) in tasks.iter().enumerate() {
        let x0 = MARGIN_LEFT + GROUP_GAP / 2.0 + ti as f64 * (group_w + GROUP_GAP);
        for (pi, policy) in policies.iter().enumerate() {
            let Some(r) = rows.iter().find(|r| r.task == *task && r.policy == *policy) else { continue };
            let h = r.normalized_score * PLOT_HEIGHT;
            let x = x0 + pi as f64 * (BAR_WIDTH + BAR_GAP);
            let _ = writeln!(
                svg,
                r#"<rect x="{x}" y="{}" width="{BAR_WIDTH}" height="{h}" fill="{}" data-task="{}" data-policy="{}" data-score="{}"><title>{} {}: {:.3}</title></rect>"#,
                base - h,
                PALETTE[pi % PALETTE.len()],
                escape(task),
                escape(policy),
                r.normalized_score,
                escape(policy),
                escape(task),
                r.normalized_score,
            );
        }
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, x0 + group_w / 2.0, base + 16.0, escape(task));
    }
    let legend_x = width - 150.0;
    for (pi, policy) in policies.iter().enumerate() {
        let y = MARGIN_TOP + pi as f64 * 16.0;
        let _ = writeln!(svg, r#"<rect x="{legend_x}" y="{y}" width="10" height="10" fill="{}"/>"#, PALETTE[pi % PALETTE.len()]);
        let _ = writeln!(svg, r#"<text x="{}" y="{}">{}</text>"#, legend_x + 14.0, y + 9.0, escape(policy));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Reads every episode log; an episode repeated verbatim within one run
/// directory is counted once.
pub fn collect_records(logs: &[&Path]) -> Result<Vec<EpisodeRecord>> {
    let mut records = Vec::new();
    let mut seen: Vec<(Option<&Path>, EpisodeRecord)> = Vec::new();
    for path in logs {
        let text = fs::read_to_string(path).map_err(|e| Error::io(*path, e))?;
        let run = path.parent().and_then(Path::parent);
        for r in parse_jsonl(&text).map_err(|e| Error::malformed(format!("{}: {e}", path.display())))? {
            if seen.iter().any(|(d, s)| *d == run && *s == r) {
                continue;
            }
            seen.push((run, r.clone()));
            records.push(r);
        }
    }
    Ok(records)
}

/// Summarizes the logs into `report.csv` and `report.svg` under `out`.
/// Nothing is written when the logs hold no episodes.
pub fn write_report(logs: &[&Path], out: &Path) -> Result<Vec<ReportRow>> {
    let records = collect_records(logs)?;
    if records.is_empty() {
        return Err(Error::config("the episode logs contain no episodes"));
    }
    let rows = summarize_records(&records)?;
    let svg = render_svg(&rows)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    for (file, text) in [(REPORT_CSV, rows_to_csv(&rows)), (REPORT_SVG, svg)] {
        let p = out.join(file);
        fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
    }
    Ok(rows)
}
