//! Static HTML summary of a score run.

use std::collections::BTreeMap;
use std::fmt::Write;

use localscore_core::score::BandwidthInfo;
use localscore_core::{has_risk, Class, SchoolId};

use crate::files::{fmt_f64, ScoreLine};

const BINS: usize = 20;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn histogram(values: &[f64], title: &str) -> String {
    let mut counts = [0usize; BINS];
    for &x in values {
        counts[((x * BINS as f64) as usize).min(BINS - 1)] += 1;
    }
    let top = counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let (w, h, bar) = (420.0, 160.0, 420.0 / BINS as f64);
    let mut svg = format!(
        "<figure><figcaption>{} ({} values)</figcaption>\n<svg width=\"{w}\" height=\"{}\" role=\"img\">\n",
        escape(title),
        values.len(),
        h + 20.0
    );
    for (k, &c) in counts.iter().enumerate() {
        let bh = h * c as f64 / top;
        let _ = writeln!(
            svg,
            "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{bh:.1}\" fill=\"#4a6fa5\"><title>[{:.2}, {:.2}): {c}</title></rect>",
            k as f64 * bar + 1.0,
            h - bh,
            bar - 2.0,
            k as f64 / BINS as f64,
            (k + 1) as f64 / BINS as f64,
        );
    }
    let _ = writeln!(svg, "<text x=\"0\" y=\"{}\" font-size=\"11\">0</text>", h + 15.0);
    let _ = writeln!(svg, "<text x=\"{}\" y=\"{}\" font-size=\"11\">1</text>", w - 8.0, h + 15.0);
    svg.push_str("</svg></figure>\n");
    svg
}

fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = String::from("<table>\n<tr>");
    for h in header {
        let _ = write!(out, "<th>{}</th>", escape(h));
    }
    out.push_str("</tr>\n");
    for r in rows {
        out.push_str("<tr>");
        for c in r {
            let _ = write!(out, "<td>{}</td>", escape(c));
        }
        out.push_str("</tr>\n");
    }
    out.push_str("</table>\n");
    out
}

/// Sector scores per applicant as `(sector, psi)` lists.
pub type SectorRows = BTreeMap<String, Vec<f64>>;

pub fn score_report(
    lines: &[ScoreLine],
    bandwidths: Option<&BTreeMap<SchoolId, BandwidthInfo<f64>>>,
    sectors: &SectorRows,
) -> String {
    let mut html = String::from(
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>Score report</title>\n\
         <style>body{font-family:sans-serif;margin:2em}table{border-collapse:collapse;margin:1em 0}\
         td,th{border:1px solid #bbb;padding:2px 8px;text-align:right}</style></head><body>\n<h1>Score report</h1>\n",
    );
    let count = |c: Class| lines.iter().filter(|l| l.class == c).count().to_string();
    let risky: Vec<f64> = lines.iter().map(|l| l.psi).filter(|&p| has_risk(p)).collect();
    html.push_str(&table(
        &["rows", "n", "a", "c", "0 < psi < 1"],
        &[vec![lines.len().to_string(), count(Class::Never), count(Class::Always), count(Class::Conditional), risky.len().to_string()]],
    ));
    html.push_str(&histogram(&risky, "School scores strictly between 0 and 1"));

    for (sector, values) in sectors {
        let risk: Vec<f64> = values.iter().copied().filter(|&p| has_risk(p)).collect();
        html.push_str(&format!("<h2>Sector {}</h2>\n", escape(sector)));
        let mean = if values.is_empty() { 0.0 } else { values.iter().sum::<f64>() / values.len() as f64 };
        html.push_str(&table(
            &["applicants", "at risk", "mean score"],
            &[vec![values.len().to_string(), risk.len().to_string(), format!("{mean:.4}")]],
        ));
        html.push_str(&histogram(&risk, &format!("{sector} scores strictly between 0 and 1")));
    }

    if let Some(bw) = bandwidths {
        html.push_str("<h2>Bandwidths at screened schools</h2>\n");
        let rows: Vec<Vec<String>> = bw
            .iter()
            .filter(|(_, b)| b.source != localscore_core::score::BandwidthSource::Lottery)
            .map(|(s, b)| {
                vec![
                    s.to_string(),
                    fmt_f64(b.requested),
                    fmt_f64(b.delta),
                    b.below.to_string(),
                    b.above.to_string(),
                    if b.guarded { "yes" } else { "" }.to_string(),
                ]
            })
            .collect();
        html.push_str(&table(&["school", "requested", "used", "below", "above", "guarded"], &rows));
    }
    html.push_str("</body></html>\n");
    html
}
