//! Result emission: long-form CSV, aggregate JSON, and an SVG chart.
//!
//! The CSV is the ground truth: one row per trace record, floats printed
//! with the shortest round-trip form so a reader recovers the exact bits.
//! The JSON aggregates are recomputable from the CSV alone, and
//! [`summaries_from_rows`] does exactly that for cross-checking. The SVG
//! is self-contained: mean-error curves on a log scale plus a box plot of
//! final errors per configuration.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::experiment::median_in_place;
use super::{BenchError, ClockKind, ExperimentResult};

const CSV_HEADER: &str = "solver,eta,batch_prop,epoch_len,replicate,time,round,objective,rel_error";

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f",
];

/// Writes one row per trace record, replicates and configurations
/// concatenated in order. The time column is the experiment clock.
pub fn write_csv<W: Write>(
    out: &mut W,
    results: &[ExperimentResult],
    clock: ClockKind,
) -> Result<(), BenchError> {
    writeln!(out, "{CSV_HEADER}")?;
    for result in results {
        for run in &result.runs {
            for record in &run.trace.records {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{}",
                    result.solver,
                    result.point.eta,
                    result.point.batch_proportion,
                    result.point.epoch_length,
                    run.replicate,
                    clock.time_of(record),
                    record.round,
                    record.objective,
                    record.rel_error.unwrap_or(f64::NAN),
                )?;
            }
        }
    }
    Ok(())
}

/// One parsed CSV row; field order matches the header.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub solver: String,
    pub eta: f64,
    pub batch_prop: f64,
    pub epoch_len: usize,
    pub replicate: usize,
    pub time: f64,
    pub round: u64,
    pub objective: f64,
    pub rel_error: f64,
}

pub fn read_csv<R: BufRead>(reader: R) -> Result<Vec<CsvRow>, BenchError> {
    let malformed = |line: usize, message: &str| BenchError::Csv {
        line,
        message: message.to_string(),
    };
    let mut rows = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let number = idx + 1;
        if number == 1 {
            if line.trim() != CSV_HEADER {
                return Err(malformed(1, "unexpected header"));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(malformed(number, "expected 9 fields"));
        }
        let float = |text: &str, what: &str| -> Result<f64, BenchError> {
            text.trim()
                .parse::<f64>()
                .map_err(|_| malformed(number, &format!("bad {what}")))
        };
        let int = |text: &str, what: &str| -> Result<u64, BenchError> {
            text.trim()
                .parse::<u64>()
                .map_err(|_| malformed(number, &format!("bad {what}")))
        };
        rows.push(CsvRow {
            solver: fields[0].trim().to_string(),
            eta: float(fields[1], "eta")?,
            batch_prop: float(fields[2], "batch proportion")?,
            epoch_len: int(fields[3], "epoch length")? as usize,
            replicate: int(fields[4], "replicate")? as usize,
            time: float(fields[5], "time")?,
            round: int(fields[6], "round")?,
            objective: float(fields[7], "objective")?,
            rel_error: float(fields[8], "relative error")?,
        });
    }
    Ok(rows)
}

/// Aggregate statistics for one configuration, recomputable from the CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateSummary {
    pub solver: String,
    pub eta: f64,
    pub batch_prop: f64,
    pub epoch_len: usize,
    pub replicates: usize,
    pub divergent: usize,
    /// Final relative error per non-divergent replicate, replicate order.
    pub final_errors: Vec<f64>,
    pub mean_final_error: f64,
    pub median_final_error: f64,
}

pub fn summarize(results: &[ExperimentResult]) -> Vec<AggregateSummary> {
    results
        .iter()
        .map(|result| AggregateSummary {
            solver: result.solver.clone(),
            eta: result.point.eta,
            batch_prop: result.point.batch_proportion,
            epoch_len: result.point.epoch_length,
            replicates: result.runs.len(),
            divergent: result.divergent_count(),
            final_errors: result.final_errors.clone(),
            mean_final_error: result.mean_final_error,
            median_final_error: result.median_final_error,
        })
        .collect()
}

/// Rebuilds the aggregates from raw CSV rows. Configurations keep their
/// first-appearance order; a replicate counts as divergent when any of its
/// objectives is non-finite.
pub fn summaries_from_rows(rows: &[CsvRow]) -> Vec<AggregateSummary> {
    let mut order: Vec<(String, u64, u64, usize)> = Vec::new();
    let mut summaries: Vec<AggregateSummary> = Vec::new();
    for row in rows {
        let key = (
            row.solver.clone(),
            row.eta.to_bits(),
            row.batch_prop.to_bits(),
            row.epoch_len,
        );
        if !order.contains(&key) {
            order.push(key);
            summaries.push(AggregateSummary {
                solver: row.solver.clone(),
                eta: row.eta,
                batch_prop: row.batch_prop,
                epoch_len: row.epoch_len,
                replicates: 0,
                divergent: 0,
                final_errors: Vec::new(),
                mean_final_error: f64::INFINITY,
                median_final_error: f64::INFINITY,
            });
        }
    }

    for (key, summary) in order.iter().zip(&mut summaries) {
        let mut replicates: Vec<usize> = Vec::new();
        for row in rows {
            let row_key = (
                row.solver.clone(),
                row.eta.to_bits(),
                row.batch_prop.to_bits(),
                row.epoch_len,
            );
            if row_key == *key && !replicates.contains(&row.replicate) {
                replicates.push(row.replicate);
            }
        }
        replicates.sort_unstable();
        summary.replicates = replicates.len();
        for replicate in replicates {
            let runs: Vec<&CsvRow> = rows
                .iter()
                .filter(|row| {
                    row.replicate == replicate
                        && row.solver == summary.solver
                        && row.eta.to_bits() == key.1
                        && row.batch_prop.to_bits() == key.2
                        && row.epoch_len == key.3
                })
                .collect();
            if runs.iter().any(|row| !row.objective.is_finite()) {
                summary.divergent += 1;
            } else if let Some(last) = runs.last() {
                summary.final_errors.push(last.rel_error);
            }
        }
        if !summary.final_errors.is_empty() {
            summary.mean_final_error =
                summary.final_errors.iter().sum::<f64>() / summary.final_errors.len() as f64;
            summary.median_final_error = median_in_place(&mut summary.final_errors.clone());
        }
    }
    summaries
}

pub fn write_json<W: Write>(out: &mut W, results: &[ExperimentResult]) -> Result<(), BenchError> {
    let summaries = summarize(results);
    serde_json::to_writer_pretty(&mut *out, &summaries)?;
    writeln!(out)?;
    Ok(())
}

struct LogAxis {
    lo: f64,
    hi: f64,
    top: f64,
    height: f64,
}

impl LogAxis {
    /// Log10 axis spanning the given positive values, padded to whole
    /// decades.
    fn spanning<'a>(values: impl Iterator<Item = &'a f64>, top: f64, height: f64) -> LogAxis {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &value in values {
            if value.is_finite() && value > 0.0 {
                lo = lo.min(value);
                hi = hi.max(value);
            }
        }
        if !lo.is_finite() {
            lo = 1e-3;
            hi = 1.0;
        }
        let lo = lo.max(1e-16).log10().floor();
        let hi = hi.max(1e-16).log10().ceil().max(lo + 1.0);
        LogAxis {
            lo,
            hi,
            top,
            height,
        }
    }

    fn y(&self, value: f64) -> f64 {
        let v = value.max(1e-16).log10().clamp(self.lo, self.hi);
        self.top + (self.hi - v) / (self.hi - self.lo) * self.height
    }

    fn decades(&self) -> Vec<f64> {
        let span = (self.hi - self.lo).round() as i64;
        let step = (span / 8 + 1).max(1);
        (0..=span)
            .step_by(step as usize)
            .map(|d| self.lo + d as f64)
            .collect()
    }
}

fn legend_label(result: &ExperimentResult) -> String {
    match result.solver.as_str() {
        "mu" | "ccd" | "pgd" => result.solver.clone(),
        "f-sci-pi" => format!("{} eta={}", result.solver, result.point.eta),
        _ => format!(
            "{} eta={} s/n={} m={}",
            result.solver,
            result.point.eta,
            result.point.batch_proportion,
            result.point.epoch_length
        ),
    }
}

/// Renders mean relative-error curves (top) and a box plot of final
/// errors (bottom) into a standalone SVG document.
pub fn write_svg<W: Write>(
    out: &mut W,
    results: &[ExperimentResult],
    clock: ClockKind,
) -> Result<(), BenchError> {
    if results.iter().all(|r| r.curve_times.is_empty()) {
        return Err(BenchError::EmptyResults);
    }
    const WIDTH: f64 = 960.0;
    const LEFT: f64 = 70.0;
    const PLOT_W: f64 = 620.0;
    const CURVE_TOP: f64 = 40.0;
    const CURVE_H: f64 = 320.0;
    const BOX_TOP: f64 = 440.0;
    const BOX_H: f64 = 220.0;
    const HEIGHT: f64 = 720.0;

    let x_max = results
        .iter()
        .filter_map(|r| r.curve_times.last())
        .fold(0.0_f64, |acc, &t| acc.max(t))
        .max(f64::MIN_POSITIVE);
    let x = |t: f64| LEFT + (t / x_max).clamp(0.0, 1.0) * PLOT_W;

    let curve_axis = LogAxis::spanning(
        results.iter().flat_map(|r| r.mean_curve.iter()),
        CURVE_TOP,
        CURVE_H,
    );
    let box_axis = LogAxis::spanning(
        results.iter().flat_map(|r| r.final_errors.iter()),
        BOX_TOP,
        BOX_H,
    );

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" \
         font-family=\"sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(
        svg,
        "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>"
    );
    let _ = writeln!(
        svg,
        "<text x=\"{LEFT}\" y=\"24\" font-size=\"15\">relative error vs {}</text>",
        clock.label()
    );

    for axis in [&curve_axis, &box_axis] {
        let bottom = axis.top + axis.height;
        let _ = writeln!(
            svg,
            "<line x1=\"{LEFT}\" y1=\"{bottom}\" x2=\"{}\" y2=\"{bottom}\" stroke=\"black\"/>",
            LEFT + PLOT_W
        );
        let _ = writeln!(
            svg,
            "<line x1=\"{LEFT}\" y1=\"{}\" x2=\"{LEFT}\" y2=\"{bottom}\" stroke=\"black\"/>",
            axis.top
        );
        for decade in axis.decades() {
            let y = axis.y(10f64.powf(decade));
            let _ = writeln!(
                svg,
                "<line x1=\"{}\" y1=\"{y:.2}\" x2=\"{LEFT}\" y2=\"{y:.2}\" stroke=\"black\"/>",
                LEFT - 5.0
            );
            let _ = writeln!(
                svg,
                "<text x=\"{}\" y=\"{:.2}\" text-anchor=\"end\">1e{}</text>",
                LEFT - 9.0,
                y + 4.0,
                decade as i64
            );
        }
    }
    let _ = writeln!(
        svg,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
        LEFT + PLOT_W / 2.0,
        CURVE_TOP + CURVE_H + 32.0,
        clock.label()
    );
    let _ = writeln!(
        svg,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">final relative error per configuration</text>",
        LEFT + PLOT_W / 2.0,
        BOX_TOP - 12.0
    );

    for (idx, result) in results.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        if !result.curve_times.is_empty() {
            let mut points = String::new();
            for (t, g) in result.curve_times.iter().zip(&result.mean_curve) {
                let _ = write!(points, "{:.2},{:.2} ", x(*t), curve_axis.y(*g));
            }
            let _ = writeln!(
                svg,
                "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>",
                points.trim_end()
            );
        }

        if !result.final_errors.is_empty() {
            let mut sorted = result.final_errors.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
            let quantile = |q: f64| -> f64 {
                let pos = q * (sorted.len() - 1) as f64;
                let lo = pos.floor() as usize;
                let hi = pos.ceil() as usize;
                let w = pos - lo as f64;
                sorted[lo] * (1.0 - w) + sorted[hi] * w
            };
            let slot = PLOT_W / results.len() as f64;
            let cx = LEFT + (idx as f64 + 0.5) * slot;
            let half = (slot * 0.25).min(18.0);
            let (y_min, y_q1, y_med, y_q3, y_max) = (
                box_axis.y(sorted[0]),
                box_axis.y(quantile(0.25)),
                box_axis.y(quantile(0.5)),
                box_axis.y(quantile(0.75)),
                box_axis.y(sorted[sorted.len() - 1]),
            );
            let _ = writeln!(
                svg,
                "<line x1=\"{cx:.2}\" y1=\"{y_max:.2}\" x2=\"{cx:.2}\" y2=\"{y_min:.2}\" stroke=\"{color}\"/>"
            );
            let _ = writeln!(
                svg,
                "<rect x=\"{:.2}\" y=\"{y_q3:.2}\" width=\"{:.2}\" height=\"{:.2}\" \
                 fill=\"{color}\" fill-opacity=\"0.25\" stroke=\"{color}\"/>",
                cx - half,
                2.0 * half,
                (y_q1 - y_q3).max(0.5)
            );
            let _ = writeln!(
                svg,
                "<line x1=\"{:.2}\" y1=\"{y_med:.2}\" x2=\"{:.2}\" y2=\"{y_med:.2}\" \
                 stroke=\"{color}\" stroke-width=\"2\"/>",
                cx - half,
                cx + half
            );
        }

        let legend_y = CURVE_TOP + 16.0 * idx as f64;
        let lx = LEFT + PLOT_W + 20.0;
        let _ = writeln!(
            svg,
            "<line x1=\"{lx}\" y1=\"{legend_y:.2}\" x2=\"{:.2}\" y2=\"{legend_y:.2}\" \
             stroke=\"{color}\" stroke-width=\"3\"/>",
            lx + 22.0
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\">{}</text>",
            lx + 28.0,
            legend_y + 4.0,
            escape_text(&legend_label(result))
        );
    }

    let _ = writeln!(svg, "</svg>");
    out.write_all(svg.as_bytes())?;
    Ok(())
}

fn escape_text(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Paths written by [`emit`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmittedFiles {
    pub csv: PathBuf,
    pub json: PathBuf,
    pub svg: PathBuf,
}

/// Writes `{stem}.csv`, `{stem}.json`, and `{stem}.svg` under `dir`.
pub fn emit(
    dir: &Path,
    stem: &str,
    results: &[ExperimentResult],
    clock: ClockKind,
) -> Result<EmittedFiles, BenchError> {
    fs::create_dir_all(dir)?;
    let files = EmittedFiles {
        csv: dir.join(format!("{stem}.csv")),
        json: dir.join(format!("{stem}.json")),
        svg: dir.join(format!("{stem}.svg")),
    };
    let mut csv = BufWriter::new(File::create(&files.csv)?);
    write_csv(&mut csv, results, clock)?;
    csv.flush()?;
    let mut json = BufWriter::new(File::create(&files.json)?);
    write_json(&mut json, results)?;
    json.flush()?;
    let mut svg = BufWriter::new(File::create(&files.svg)?);
    write_svg(&mut svg, results, clock)?;
    svg.flush()?;
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{compute_reference, grid_search, ExperimentGrid};
    use crate::klnmf::UpdateRule;
    use crate::matrix::{CountMatrix, DenseCountMatrix};
    use crate::sampling::RngStream;

    fn toy_counts(rows: usize, cols: usize, seed: u64) -> CountMatrix {
        let mut stream = RngStream::from_seed(seed);
        let mut m = DenseCountMatrix::zeros(rows, cols);
        for value in m.values_mut() {
            *value = (stream.next_f64() * 5.0).floor();
        }
        CountMatrix::Dense(m)
    }

    fn toy_results() -> Vec<ExperimentResult> {
        let v = toy_counts(10, 8, 21);
        let reference = compute_reference(&v, 2, 2.0, None).unwrap();
        let grid = ExperimentGrid {
            batch_proportions: vec![0.5, 1.0],
            epoch_lengths: vec![2],
            step_sizes: vec![0.5],
            replicates: 3,
            rank: 2,
            max_rounds: 10,
            work_limit: None,
            time_limit_secs: None,
            master_seed: 5,
            clock: ClockKind::Work,
        };
        let template = UpdateRule::SSciPi {
            eta: 0.0,
            batch_proportion: 0.0,
            epoch_length: 0,
            replacement: false,
            mode: None,
        };
        let (_, results) = grid_search(&v, &template, &grid, &reference).unwrap();
        results
    }

    /// Minimal well-formedness check: every open tag is closed in LIFO
    /// order, attribute quoting balanced, one root element.
    fn assert_well_formed_xml(text: &str) {
        let mut stack: Vec<String> = Vec::new();
        let mut roots = 0;
        let mut rest = text;
        while let Some(start) = rest.find('<') {
            rest = &rest[start + 1..];
            let mut end = None;
            let mut quoted = false;
            for (idx, ch) in rest.char_indices() {
                match ch {
                    '"' => quoted = !quoted,
                    '>' if !quoted => {
                        end = Some(idx);
                        break;
                    }
                    _ => {}
                }
            }
            let end = end.expect("unterminated tag");
            let tag = &rest[..end];
            rest = &rest[end + 1..];
            if tag.starts_with('?') || tag.starts_with('!') {
                continue;
            }
            if let Some(name) = tag.strip_prefix('/') {
                let open = stack.pop().expect("close without open");
                assert_eq!(open, name.trim(), "mismatched close tag");
                if stack.is_empty() {
                    roots += 1;
                }
            } else if tag.ends_with('/') {
                if stack.is_empty() {
                    roots += 1;
                }
            } else {
                let name = tag
                    .split_whitespace()
                    .next()
                    .expect("empty tag")
                    .to_string();
                stack.push(name);
            }
        }
        assert!(stack.is_empty(), "unclosed tags: {stack:?}");
        assert_eq!(roots, 1, "expected exactly one root element");
    }

    #[test]
    fn csv_has_one_row_per_trace_record() {
        let results = toy_results();
        let mut bytes = Vec::new();
        write_csv(&mut bytes, &results, ClockKind::Work).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        let expected: usize = results
            .iter()
            .flat_map(|r| r.runs.iter())
            .map(|run| run.trace.records.len())
            .sum();
        assert_eq!(text.lines().count(), expected + 1);
        assert!(text.starts_with(CSV_HEADER));
    }

    #[test]
    fn csv_round_trip_preserves_float_bits() {
        let results = toy_results();
        let mut bytes = Vec::new();
        write_csv(&mut bytes, &results, ClockKind::Work).unwrap();
        let rows = read_csv(bytes.as_slice()).unwrap();
        let mut idx = 0;
        for result in &results {
            for run in &result.runs {
                for record in &run.trace.records {
                    let row = &rows[idx];
                    assert_eq!(row.objective.to_bits(), record.objective.to_bits());
                    assert_eq!(row.time.to_bits(), record.work.to_bits());
                    assert_eq!(row.round, record.round);
                    idx += 1;
                }
            }
        }
        assert_eq!(idx, rows.len());
    }

    #[test]
    fn json_aggregates_are_recomputable_from_the_csv() {
        let results = toy_results();
        let direct = summarize(&results);

        let mut bytes = Vec::new();
        write_csv(&mut bytes, &results, ClockKind::Work).unwrap();
        let rebuilt = summaries_from_rows(&read_csv(bytes.as_slice()).unwrap());

        assert_eq!(direct.len(), rebuilt.len());
        for (a, b) in direct.iter().zip(&rebuilt) {
            assert_eq!(a.solver, b.solver);
            assert_eq!(a.eta.to_bits(), b.eta.to_bits());
            assert_eq!(a.batch_prop.to_bits(), b.batch_prop.to_bits());
            assert_eq!(a.epoch_len, b.epoch_len);
            assert_eq!(a.replicates, b.replicates);
            assert_eq!(a.divergent, b.divergent);
            assert_eq!(a.final_errors.len(), b.final_errors.len());
            for (x, y) in a.final_errors.iter().zip(&b.final_errors) {
                assert!((x - y).abs() <= 1e-12);
            }
            assert!((a.mean_final_error - b.mean_final_error).abs() <= 1e-12);
            assert!((a.median_final_error - b.median_final_error).abs() <= 1e-12);
        }
    }

    #[test]
    fn rejects_malformed_csv() {
        let text = "solver,eta\nbad";
        assert!(matches!(
            read_csv(text.as_bytes()),
            Err(BenchError::Csv { line: 1, .. })
        ));
        let text = format!("{CSV_HEADER}\nmu,0,1,1,0,0,0\n");
        assert!(matches!(
            read_csv(text.as_bytes()),
            Err(BenchError::Csv { line: 2, .. })
        ));
        let text = format!("{CSV_HEADER}\nmu,x,1,1,0,0,0,1,1\n");
        assert!(read_csv(text.as_bytes()).is_err());
    }

    #[test]
    fn svg_is_well_formed_and_mentions_every_solver() {
        let results = toy_results();
        let mut bytes = Vec::new();
        write_svg(&mut bytes, &results, ClockKind::Work).unwrap();
        let text = String::from_utf8(bytes).unwrap();
        assert_well_formed_xml(&text);
        assert!(text.contains("polyline"));
        assert!(text.contains("s-sci-pi"));
    }

    #[test]
    fn emitted_files_are_byte_identical_across_reruns() {
        let results = toy_results();
        let dir = tempfile::tempdir().unwrap();
        let first = emit(dir.path(), "a", &results, ClockKind::Work).unwrap();
        let results_again = toy_results();
        let second = emit(dir.path(), "b", &results_again, ClockKind::Work).unwrap();
        assert_eq!(
            std::fs::read(&first.csv).unwrap(),
            std::fs::read(&second.csv).unwrap()
        );
        assert_eq!(
            std::fs::read(&first.json).unwrap(),
            std::fs::read(&second.json).unwrap()
        );
        assert_eq!(
            std::fs::read(&first.svg).unwrap(),
            std::fs::read(&second.svg).unwrap()
        );
    }

    #[test]
    fn text_escaping_covers_markup_characters() {
        assert_eq!(escape_text("a<b&c>d"), "a&lt;b&amp;c&gt;d");
    }
}
