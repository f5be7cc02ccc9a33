//! Per-epoch accuracy and loss curves as SVG plots, each with a CSV twin holding the exact values.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::StageReport;

const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

/// Paths written by [`curve_report`].
#[derive(Clone, Debug, PartialEq)]
pub struct CurveFiles {
    pub accuracy_svg: PathBuf,
    pub accuracy_csv: PathBuf,
    pub losses_svg: PathBuf,
    pub losses_csv: PathBuf,
}

struct Series<'a> {
    name: &'a str,
    points: Vec<(f64, f64)>,
}

fn cell(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

fn loss_keys(report: &StageReport) -> Vec<String> {
    let keys: BTreeSet<&String> = report
        .records
        .iter()
        .flat_map(|r| r.losses.keys())
        .collect();
    keys.into_iter().cloned().collect()
}

/// `epoch,pseudo_label_accuracy,target_accuracy`; missing values are empty cells.
pub fn accuracy_csv(report: &StageReport) -> String {
    let mut s = String::from("epoch,pseudo_label_accuracy,target_accuracy\n");
    for r in &report.records {
        let _ = writeln!(
            s,
            "{},{},{}",
            r.epoch,
            cell(r.pseudo_label_accuracy),
            cell(r.target_accuracy)
        );
    }
    s
}

/// `epoch` followed by one column per loss component, sorted by name.
pub fn losses_csv(report: &StageReport) -> String {
    let keys = loss_keys(report);
    let mut s = String::from("epoch");
    for k in &keys {
        s.push(',');
        s.push_str(k);
    }
    s.push('\n');
    for r in &report.records {
        s.push_str(&r.epoch.to_string());
        for k in &keys {
            s.push(',');
            s.push_str(&cell(r.losses.get(k).copied()));
        }
        s.push('\n');
    }
    s
}

fn svg_plot(title: &str, series: &[Series], y_range: Option<(f64, f64)>) -> String {
    let (w, h, m) = (560.0, 340.0, 48.0);
    let pts = series.iter().flat_map(|s| s.points.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if let Some((lo, hi)) = y_range {
        y0 = lo;
        y1 = hi;
    }
    if x0 > x1 {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    if y1 - y0 < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let px = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let py = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        w / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<path d="M{m} {m} V{b} H{r}" fill="none" stroke="black"/>"#,
        b = h - m,
        r = w - m
    );
    for (v, y) in [(y0, h - m), (y1, m)] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            m - 4.0,
            y + 4.0,
            fmt_tick(v)
        );
    }
    for (v, x) in [(x0, m), (x1, w - m)] {
        let _ = writeln!(
            s,
            r#"<text x="{x}" y="{}" text-anchor="middle">{}</text>"#,
            h - m + 16.0,
            fmt_tick(v)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">epoch</text>"#,
        w / 2.0,
        h - 8.0
    );
    for (i, ser) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        if ser.points.len() > 1 {
            let d: Vec<String> = ser
                .points
                .iter()
                .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                d.join(" ")
            );
        }
        for &(x, y) in &ser.points {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                px(x),
                py(y)
            );
        }
        let ly = m + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{}" y="{}" width="10" height="10" fill="{color}"/><text x="{}" y="{}">{}</text>"#,
            w - m - 150.0,
            ly - 9.0,
            w - m - 135.0,
            ly,
            escape(ser.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 100.0 || v == v.trunc() {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn present(
    report: &StageReport,
    f: impl Fn(&crate::pipeline::EpochRecord) -> Option<f64>,
) -> Vec<(f64, f64)> {
    report
        .records
        .iter()
        .filter_map(|r| f(r).map(|v| (r.epoch as f64, v)))
        .collect()
}

pub fn accuracy_svg(report: &StageReport, title: &str) -> String {
    let series = [
        Series {
            name: "pseudo-label accuracy",
            points: present(report, |r| r.pseudo_label_accuracy),
        },
        Series {
            name: "target accuracy",
            points: present(report, |r| r.target_accuracy),
        },
    ];
    svg_plot(title, &series, Some((0.0, 1.0)))
}

pub fn losses_svg(report: &StageReport, title: &str) -> String {
    let keys = loss_keys(report);
    let series: Vec<Series> = keys
        .iter()
        .map(|k| Series {
            name: k,
            points: present(report, |r| r.losses.get(k).copied()),
        })
        .collect();
    svg_plot(title, &series, None)
}

/// Writes `<stem>_accuracy.{svg,csv}` and `<stem>_losses.{svg,csv}` under `dir`.
pub fn curve_report(report: &StageReport, dir: impl AsRef<Path>, stem: &str) -> Result<CurveFiles> {
    if report.is_empty() {
        return Err(Error::validation("curve report of an empty stage report"));
    }
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = CurveFiles {
        accuracy_svg: dir.join(format!("{stem}_accuracy.svg")),
        accuracy_csv: dir.join(format!("{stem}_accuracy.csv")),
        losses_svg: dir.join(format!("{stem}_losses.svg")),
        losses_csv: dir.join(format!("{stem}_losses.csv")),
    };
    for (path, body) in [
        (&files.accuracy_svg, accuracy_svg(report, stem)),
        (&files.accuracy_csv, accuracy_csv(report)),
        (&files.losses_svg, losses_svg(report, stem)),
        (&files.losses_csv, losses_csv(report)),
    ] {
        fs::write(path, body).map_err(|e| Error::io(path, e))?;
    }
    Ok(files)
}

/// Pseudo-label accuracy of paired runs with and without refinement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlrComparison {
    pub with_plr: Vec<f64>,
    pub without_plr: Vec<f64>,
    /// Epochs, over the shared prefix, at which the refined curve is at least as high.
    pub epochs_at_or_above: usize,
    pub final_gap: f64,
    /// Final refined accuracy is at least the unrefined one.
    pub dominates: bool,
}

pub fn compare_plr(with_plr: &StageReport, without_plr: &StageReport) -> Result<PlrComparison> {
    let curve =
        |r: &StageReport| -> Vec<f64> { r.pseudo_label_curve().into_iter().flatten().collect() };
    let (on, off) = (curve(with_plr), curve(without_plr));
    let (Some(&last_on), Some(&last_off)) = (on.last(), off.last()) else {
        return Err(Error::validation(
            "both reports need pseudo-label accuracy records",
        ));
    };
    let epochs_at_or_above = on.iter().zip(&off).filter(|(a, b)| a >= b).count();
    Ok(PlrComparison {
        epochs_at_or_above,
        final_gap: last_on - last_off,
        dominates: last_on >= last_off,
        with_plr: on,
        without_plr: off,
    })
}

/// One plot and CSV with both pseudo-label curves: `<stem>_plr.{svg,csv}`.
pub fn plr_report(
    cmp: &PlrComparison,
    dir: impl AsRef<Path>,
    stem: &str,
) -> Result<(PathBuf, PathBuf)> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let svg_path = dir.join(format!("{stem}_plr.svg"));
    let csv_path = dir.join(format!("{stem}_plr.csv"));
    let pts = |v: &[f64]| v.iter().enumerate().map(|(i, &a)| (i as f64, a)).collect();
    let title = format!(
        "{stem}: refinement {} (final gap {:+.3})",
        if cmp.dominates {
            "dominates"
        } else {
            "does not dominate"
        },
        cmp.final_gap
    );
    let svg = svg_plot(
        &title,
        &[
            Series {
                name: "with PLR",
                points: pts(&cmp.with_plr),
            },
            Series {
                name: "without PLR",
                points: pts(&cmp.without_plr),
            },
        ],
        Some((0.0, 1.0)),
    );
    let mut csv = String::from("epoch,with_plr,without_plr\n");
    for i in 0..cmp.with_plr.len().max(cmp.without_plr.len()) {
        let _ = writeln!(
            csv,
            "{i},{},{}",
            cell(cmp.with_plr.get(i).copied()),
            cell(cmp.without_plr.get(i).copied())
        );
    }
    fs::write(&svg_path, svg).map_err(|e| Error::io(&svg_path, e))?;
    fs::write(&csv_path, csv).map_err(|e| Error::io(&csv_path, e))?;
    Ok((svg_path, csv_path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::EpochRecord;
    use std::collections::BTreeMap;

    fn report(pl: &[f64]) -> StageReport {
        let mut r = StageReport::default();
        for (e, &a) in pl.iter().enumerate() {
            r.push(EpochRecord {
                stage: 2,
                epoch: e,
                config_hash: "h".into(),
                losses: BTreeMap::from([("nm".to_string(), -1.0 / (e as f64 + 3.0))]),
                pseudo_label_accuracy: Some(a),
                target_accuracy: None,
                wall_time_s: 0.0,
            })
            .unwrap();
        }
        r
    }

    #[test]
    fn csv_carries_exact_values() {
        let r = report(&[0.1 + 0.2, 2.0 / 3.0]);
        let csv = accuracy_csv(&r);
        let vals: Vec<f64> = csv
            .lines()
            .skip(1)
            .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
            .collect();
        assert_eq!(vals, vec![0.1 + 0.2, 2.0 / 3.0]);
        assert!(csv.lines().nth(1).unwrap().ends_with(','));
    }

    #[test]
    fn single_epoch_plots() {
        let svg = accuracy_svg(&report(&[0.5]), "one");
        assert!(svg.contains("<circle"));
        assert!(!svg.contains("NaN"));
        assert!(losses_svg(&report(&[0.5]), "one").contains("<circle"));
    }

    #[test]
    fn empty_report_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(curve_report(&StageReport::default(), dir.path(), "x").is_err());
    }

    #[test]
    fn dominance_uses_final_values() {
        let cmp = compare_plr(&report(&[0.5, 0.7, 0.8]), &report(&[0.6, 0.7, 0.75])).unwrap();
        assert!(cmp.dominates);
        assert_eq!(cmp.epochs_at_or_above, 2);
        let cmp = compare_plr(&report(&[0.5]), &report(&[0.6])).unwrap();
        assert!(!cmp.dominates);
    }
}
