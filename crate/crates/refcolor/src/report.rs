//! CSV and plain-text reports. Every CSV starts with `#` comment lines that
//! state the metric conventions, loss normalization, grayscale formula, seed
//! and config hash; readers skip them.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use refcolor_core::colorspace::GrayMode;
use refcolor_core::metrics::CONVENTIONS;
use refcolor_core::{LossMode, TuningReport};

use crate::bench::{AblationRow, EvalRow, SweepPoint, TimingRow};
use crate::config::Settings;
use crate::error::{Error, Result};

pub const LOSS_NORMALIZATION: &str = "L_l = mean over pixels of ((L1 - Lz) / 100)^2; \
L_ab = mean over pixels and both chroma channels of ((ab1 - abz) / 128)^2; L_lab = L_l + L_ab; \
L_rgb = mean over pixels and channels of (y1 - z)^2";

#[derive(Clone, Debug, PartialEq)]
pub struct Header {
    pub lines: Vec<String>,
}

impl Header {
    pub fn new(title: &str, loss: LossMode, gray: GrayMode, seed: u64, config_hash: &str) -> Self {
        Self {
            lines: vec![
                format!("refcolor {title}"),
                format!("metrics: {CONVENTIONS}"),
                "averages: psnr/ssim over frames 2..T, psnr_all/ssim_all over frames 1..T".into(),
                format!("loss: {}; {LOSS_NORMALIZATION}", loss.name()),
                format!("gray: {}", gray.describe()),
                format!("seed: {seed}"),
                format!("config sha256: {config_hash}"),
            ],
        }
    }

    pub fn from_settings(title: &str, s: &Settings) -> Self {
        Self::new(title, s.loss, s.gray, s.seed, &s.hash())
    }

    fn write(&self, out: &mut impl std::io::Write) -> std::io::Result<()> {
        for line in &self.lines {
            writeln!(out, "# {line}")?;
        }
        Ok(())
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_owned(),
        source,
    }
}

fn write_csv(path: &Path, header: &Header, columns: &[&str], rows: &[Vec<String>]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut buf = Vec::new();
    header.write(&mut buf).map_err(|e| Error::io(path, e))?;
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(columns).map_err(csv_err(path))?;
        for r in rows {
            w.write_record(r).map_err(csv_err(path))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

fn read_csv(path: &Path) -> Result<Vec<csv::StringRecord>> {
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(csv_err(path))?;
    r.records().map(|rec| rec.map_err(csv_err(path))).collect()
}

/// Shortest text that parses back to the same `f64`.
fn num(v: f64) -> String {
    format!("{v}")
}

fn parse<T: std::str::FromStr>(path: &Path, rec: &csv::StringRecord, i: usize) -> Result<T> {
    rec.get(i)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Precondition(format!("{}: bad field {i} in {rec:?}", path.display())))
}

const EVAL_COLUMNS: [&str; 7] = ["sequence", "method", "iterations", "psnr", "ssim", "psnr_all", "ssim_all"];

/// `report.csv`. Wall-clock times are left out so that reruns with the same
/// seed produce identical bytes; they appear in the text table instead.
pub fn write_report(path: &Path, header: &Header, rows: &[EvalRow]) -> Result<()> {
    write_rows(path, header, rows, false)
}

/// Like [`write_report`], optionally with a trailing `tuning_time` column.
pub fn write_rows(path: &Path, header: &Header, rows: &[EvalRow], with_time: bool) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Precondition("no rows to report".into()));
    }
    let mut columns = EVAL_COLUMNS.to_vec();
    if with_time {
        columns.push("tuning_time");
    }
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut v = vec![
                r.sequence.clone(),
                r.method.clone(),
                r.iterations.to_string(),
                num(r.psnr),
                num(r.ssim),
                num(r.psnr_all),
                num(r.ssim_all),
            ];
            if with_time {
                v.push(num(r.tuning_time));
            }
            v
        })
        .collect();
    write_csv(path, header, &columns, &body)
}

/// Reads rows written by [`write_rows`]; a missing time column reads as 0.
pub fn read_rows(path: &Path) -> Result<Vec<EvalRow>> {
    read_csv(path)?
        .iter()
        .map(|r| {
            Ok(EvalRow {
                sequence: r.get(0).unwrap_or_default().to_string(),
                method: r.get(1).unwrap_or_default().to_string(),
                iterations: parse(path, r, 2)?,
                psnr: parse(path, r, 3)?,
                ssim: parse(path, r, 4)?,
                psnr_all: parse(path, r, 5)?,
                ssim_all: parse(path, r, 6)?,
                tuning_time: if r.len() > 7 { parse(path, r, 7)? } else { 0.0 },
            })
        })
        .collect()
}

/// Per-method averages over all sequences, in first-seen method order.
pub fn method_averages(rows: &[EvalRow]) -> Vec<EvalRow> {
    let mut methods: Vec<&str> = Vec::new();
    for r in rows {
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
    }
    methods
        .into_iter()
        .map(|m| {
            let sel: Vec<&EvalRow> = rows.iter().filter(|r| r.method == m).collect();
            let n = sel.len() as f64;
            let avg = |f: fn(&EvalRow) -> f64| sel.iter().map(|r| f(r)).sum::<f64>() / n;
            EvalRow {
                sequence: "Average".into(),
                method: m.to_string(),
                iterations: sel[0].iterations,
                psnr: avg(|r| r.psnr),
                ssim: avg(|r| r.ssim),
                psnr_all: avg(|r| r.psnr_all),
                ssim_all: avg(|r| r.ssim_all),
                tuning_time: avg(|r| r.tuning_time),
            }
        })
        .collect()
}

/// Human-readable table: one line per sequence and method, then averages.
pub fn format_table(header: &Header, rows: &[EvalRow]) -> String {
    let mut out = String::new();
    for line in &header.lines {
        let _ = writeln!(out, "# {line}");
    }
    let width = rows.iter().map(|r| r.sequence.len()).max().unwrap_or(8).max(8);
    let _ = writeln!(
        out,
        "{:<width$}  {:<10} {:>5} {:>9} {:>7} {:>9} {:>7} {:>9}",
        "sequence", "method", "iters", "psnr", "ssim", "psnr_all", "ssim_all", "time_s"
    );
    for r in rows.iter().chain(method_averages(rows).iter()) {
        let _ = writeln!(
            out,
            "{:<width$}  {:<10} {:>5} {:>9.4} {:>7.4} {:>9.4} {:>7.4} {:>9.3}",
            r.sequence, r.method, r.iterations, r.psnr, r.ssim, r.psnr_all, r.ssim_all, r.tuning_time
        );
    }
    out
}

/// `trace_<seq>.csv`: loss and first-frame PSNR per iteration, then a
/// summary comment.
pub fn write_trace<M>(path: &Path, header: &Header, report: &TuningReport<M>) -> Result<()> {
    let rows: Vec<Vec<String>> = report
        .loss_trace
        .iter()
        .zip(&report.psnr_trace)
        .enumerate()
        .map(|(i, (l, p))| vec![i.to_string(), num(*l), num(*p)])
        .collect();
    write_csv(path, header, &["iteration", "loss", "psnr_db"], &rows)?;
    let n = report.loss_trace.len() - 1;
    let summary = format!(
        "# summary: iterations={n} loss {} -> {} psnr_db {} -> {}\n",
        num(report.loss_trace[0]),
        num(report.loss_trace[n]),
        num(report.psnr_trace[0]),
        num(report.psnr_trace[n]),
    );
    fs::OpenOptions::new()
        .append(true)
        .open(path)
        .and_then(|mut f| f.write_all(summary.as_bytes()))
        .map_err(|e| Error::io(path, e))
}

/// Reads `(iteration, loss, psnr_db)` triples back from a trace file.
pub fn read_trace(path: &Path) -> Result<Vec<(usize, f64, f64)>> {
    read_csv(path)?
        .iter()
        .map(|r| Ok((parse(path, r, 0)?, parse(path, r, 1)?, parse(path, r, 2)?)))
        .collect()
}

pub fn write_sweep(path: &Path, header: &Header, points: &[(String, Vec<SweepPoint>)]) -> Result<()> {
    let rows: Vec<Vec<String>> = points
        .iter()
        .flat_map(|(seq, pts)| {
            pts.iter().map(move |p| {
                vec![
                    seq.clone(),
                    p.iterations.to_string(),
                    num(p.loss),
                    num(p.first_psnr),
                    num(p.psnr),
                    num(p.ssim),
                ]
            })
        })
        .collect();
    write_csv(path, header, &["sequence", "iterations", "loss", "first_psnr", "psnr", "ssim"], &rows)
}

pub fn write_ablation(path: &Path, header: &Header, rows: &[AblationRow]) -> Result<()> {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.dataset.clone(),
                r.loss_mode.name().to_string(),
                r.loss_mode.label().to_string(),
                num(r.psnr),
                num(r.ssim),
            ]
        })
        .collect();
    write_csv(path, header, &["dataset", "loss", "label", "psnr", "ssim"], &body)
}

/// Resolutions as columns, iteration counts as rows; seconds per sequence.
pub fn write_timing(path: &Path, header: &Header, rows: &[TimingRow]) -> Result<()> {
    let mut groups: Vec<&str> = Vec::new();
    let mut iters: Vec<usize> = Vec::new();
    for r in rows {
        if !groups.contains(&r.group.as_str()) {
            groups.push(&r.group);
        }
        if !iters.contains(&r.iterations) {
            iters.push(r.iterations);
        }
    }
    let mut columns = vec!["iterations"];
    columns.extend(groups.iter().copied());
    let body: Vec<Vec<String>> = iters
        .iter()
        .map(|&n| {
            let mut v = vec![n.to_string()];
            for g in &groups {
                let cell = rows
                    .iter()
                    .find(|r| r.iterations == n && r.group == *g)
                    .map(|r| num(r.seconds))
                    .unwrap_or_default();
                v.push(cell);
            }
            v
        })
        .collect();
    write_csv(path, header, &columns, &body)
}
