//! Human-readable output: result tables, CMC curves and a grouped bar chart.

use std::fmt::Write as _;

use crate::fstt::ThicknessMode;
use crate::harness::ExperimentReport;

const HEADER: [&str; 10] = ["Exp", "#Land", "#Sbj", "#SFO", "FSTT", "#Vis", "Dir", "Noise", "Averaged Rank", "Acc (%)"];

/// Short label of a condition, e.g. `E4 12L mean/real 5px`.
pub fn condition_label(r: &ExperimentReport) -> String {
    let c = &r.config;
    format!(
        "{} {} {}/{} {}px",
        c.experiment,
        c.visibility_label(),
        c.fstt.thickness.to_string().to_lowercase(),
        c.fstt.direction.to_string().to_lowercase(),
        fmt_noise(c.noise_px)
    )
}

fn fmt_noise(n: f64) -> String {
    if n.fract() == 0.0 {
        format!("{n:.0}")
    } else {
        format!("{n}")
    }
}

fn row(r: &ExperimentReport) -> [String; 10] {
    let c = &r.config;
    let dir = if c.fstt.thickness == ThicknessMode::None { "-".to_string() } else { c.fstt.direction.to_string() };
    let noise = if c.noise_px == 0.0 { "0".to_string() } else { format!("{} px", fmt_noise(c.noise_px)) };
    [
        c.experiment.to_string(),
        r.landmark_count.to_string(),
        r.subjects.to_string(),
        r.sfo_count.to_string(),
        c.fstt.thickness.to_string(),
        c.visibility_label(),
        dir,
        noise,
        format!("{:.2}", r.averaged_rank),
        format!("{:.1}", r.accuracy),
    ]
}

/// A plain-text table with one row per report and a `#SFO` total.
pub fn render_table(reports: &[ExperimentReport]) -> String {
    let mut rows: Vec<[String; 10]> = vec![HEADER.map(String::from)];
    rows.extend(reports.iter().map(row));
    let total: usize = reports.iter().map(|r| r.sfo_count).sum();
    let mut footer: [String; 10] = Default::default();
    footer[0] = "Total".into();
    footer[3] = total.to_string();
    rows.push(footer);

    let widths: Vec<usize> = (0..10).map(|i| rows.iter().map(|r| r[i].len()).max().unwrap_or(0)).collect();
    let rule = widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-");
    let mut out = String::new();
    let last = rows.len() - 1;
    for (n, r) in rows.iter().enumerate() {
        if n == 1 || n == last {
            let _ = writeln!(out, "{rule}");
        }
        let cells: Vec<String> = r
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i >= 8 || (1..=3).contains(&i) { format!("{c:>w$}") } else { format!("{c:<w$}") })
            .collect();
        let _ = writeln!(out, "{}", cells.join(" | ").trim_end());
    }
    out
}

/// CMC curves, one column per report: `rank,<label>,...`. Reports with fewer
/// candidates continue at 1 past their last rank.
pub fn render_cmc_csv(reports: &[ExperimentReport]) -> String {
    let max_rank = reports.iter().map(|r| r.cmc.len()).max().unwrap_or(0);
    let mut out = String::from("rank");
    for r in reports {
        let _ = write!(out, ",{}", condition_label(r));
    }
    out.push('\n');
    for rank in 1..=max_rank {
        let _ = write!(out, "{rank}");
        for r in reports {
            let v = r.cmc.get(rank - 1).copied().unwrap_or(1.0);
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

const PALETTE: [&str; 8] = ["#1b6ca8", "#8fc1e3", "#d1495b", "#f0a6b0", "#2e8540", "#a3d6a7", "#6c4f9e", "#c5b3e6"];

/// Grouped bar chart of accuracy. Groups are visible-landmark counts in
/// ascending order (geometric visibility last); bars within a group are the
/// direction and noise conditions in order of first appearance.
pub fn render_svg(reports: &[ExperimentReport]) -> String {
    let mut groups: Vec<(usize, String)> = reports
        .iter()
        .map(|r| (r.config.visibility.fixed_count().unwrap_or(usize::MAX), r.config.visibility_label()))
        .collect();
    groups.sort();
    groups.dedup();
    let series_of = |r: &ExperimentReport| {
        format!(
            "{}/{} dir, {} px",
            r.config.fstt.thickness.to_string().to_lowercase(),
            r.config.fstt.direction.to_string().to_lowercase(),
            fmt_noise(r.config.noise_px)
        )
    };
    let mut series: Vec<String> = Vec::new();
    for r in reports {
        let s = series_of(r);
        if !series.contains(&s) {
            series.push(s);
        }
    }

    let (left, top, plot_h, bar_w, gap) = (60.0, 30.0, 300.0, 18.0, 24.0);
    let group_w = bar_w * series.len().max(1) as f64 + gap;
    let width = left + group_w * groups.len() as f64 + 220.0;
    let height = top + plot_h + 60.0;
    let y = |acc: f64| top + plot_h * (1.0 - acc / 100.0);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<text x="{left}" y="18">Accuracy (%) by number of visible landmarks</text>"#);
    for tick in (0..=100).step_by(20) {
        let ty = y(tick as f64);
        let _ = writeln!(
            out,
            r##"<line x1="{left}" y1="{ty:.1}" x2="{:.1}" y2="{ty:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{tick}</text>"##,
            left + group_w * groups.len() as f64,
            left - 6.0,
            ty + 4.0
        );
    }
    for (g, (_, label)) in groups.iter().enumerate() {
        let x0 = left + gap / 2.0 + g as f64 * group_w;
        let _ = writeln!(out, r#"<g class="group" data-label="{}">"#, escape(label));
        for r in reports.iter().filter(|r| &r.config.visibility_label() == label) {
            let s = series.iter().position(|x| *x == series_of(r)).unwrap();
            let (bx, by) = (x0 + s as f64 * bar_w, y(r.accuracy));
            let _ = writeln!(
                out,
                r#"<rect class="bar" data-condition="{}" data-accuracy="{:.3}" x="{bx:.1}" y="{by:.1}" width="{:.1}" height="{:.1}" fill="{}"/>"#,
                escape(&series[s]),
                r.accuracy,
                bar_w - 2.0,
                top + plot_h - by,
                PALETTE[s % PALETTE.len()]
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            x0 + bar_w * series.len() as f64 / 2.0,
            top + plot_h + 18.0,
            escape(label)
        );
        let _ = writeln!(out, "</g>");
    }
    let lx = left + group_w * groups.len() as f64 + 20.0;
    for (s, name) in series.iter().enumerate() {
        let ly = top + 10.0 + 20.0 * s as f64;
        let _ = writeln!(
            out,
            r#"<rect x="{lx:.1}" y="{:.1}" width="12" height="12" fill="{}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            ly - 10.0,
            PALETTE[s % PALETTE.len()],
            lx + 18.0,
            ly,
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fstt::DirectionMode;
    use crate::harness::{metrics_from_ranks, ExperimentConfig};

    fn report(k: usize, dir: DirectionMode, noise: f64, ranks: &[usize]) -> ExperimentReport {
        let m = metrics_from_ranks(ranks, 4).unwrap();
        ExperimentReport {
            config: ExperimentConfig::e4(4, k, dir, noise, 1),
            landmark_count: 29,
            subjects: 4,
            photos: ranks.len(),
            sfo_count: 4 * ranks.len(),
            failed_sfo: 0,
            averaged_rank: m.averaged_rank,
            accuracy: m.accuracy,
            cmc: m.cmc,
            by_pose: vec![],
            ranks: vec![],
        }
    }

    fn sample() -> Vec<ExperimentReport> {
        let mut v = Vec::new();
        for k in [16, 8, 12, 10] {
            for dir in [DirectionMode::Real, DirectionMode::Mean] {
                v.push(report(k, dir, 0.0, &[1, 2, 1, 4]));
            }
        }
        v
    }

    #[test]
    fn table_has_header_rows_and_total() {
        let reps = sample();
        let t = render_table(&reps);
        let lines: Vec<&str> = t.lines().collect();
        let cells = |l: &str| l.split('|').map(|c| c.trim().to_string()).collect::<Vec<_>>();
        assert_eq!(cells(lines[0]), HEADER.to_vec());
        assert_eq!(lines.len(), 1 + 1 + reps.len() + 1 + 1);
        assert_eq!(cells(lines[2]), ["E4", "29", "4", "16", "Mean", "16L", "Real", "0", "2.00", "50.0"]);
        let total: usize = lines.last().unwrap().split('|').nth(3).unwrap().trim().parse().unwrap();
        assert_eq!(total, reps.iter().map(|r| r.subjects * r.photos).sum::<usize>());
    }

    #[test]
    fn cmc_columns_are_monotone() {
        let csv = render_cmc_csv(&sample());
        let rows: Vec<Vec<&str>> = csv.lines().map(|l| l.split(',').collect()).collect();
        assert_eq!(rows[0].len(), 9);
        for col in 1..rows[0].len() {
            let vals: Vec<f64> = rows[1..].iter().map(|r| r[col].parse().unwrap()).collect();
            assert!(vals.windows(2).all(|w| w[0] <= w[1]));
            assert_eq!(*vals.last().unwrap(), 1.0);
        }
    }

    #[test]
    fn svg_groups_are_ordered_by_visible_count() {
        let svg = render_svg(&sample());
        let labels: Vec<&str> = svg
            .match_indices(r#"class="group" data-label=""#)
            .map(|(i, m)| {
                let rest = &svg[i + m.len()..];
                &rest[..rest.find('"').unwrap()]
            })
            .collect();
        assert_eq!(labels, vec!["8L", "10L", "12L", "16L"]);
        assert_eq!(svg.matches(r#"class="bar""#).count(), 8);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }
}
