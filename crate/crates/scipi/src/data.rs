//! Dataset ingestion, preprocessing, and synthetic generation.
//!
//! Three on-disk formats: bag-of-words triplet files (three header lines
//! holding the row count, column count, and nonzero count, followed by
//! 1-indexed `row col count` triplets), headerless CSV, and MatrixMarket
//! coordinate files. Counts are stored as reals throughout; integrality is a
//! property callers can check, not a storage constraint. Synthetic matrices
//! draw i.i.d. Poisson entries at the rate that makes the expected nonzero
//! fraction equal the requested sparsity.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{CountMatrix, DenseCountMatrix, MatrixError, SparseCountMatrix};
use crate::sampling::RngStream;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: entry ({row}, {col}) outside the declared {rows}x{cols} bounds")]
    EntryOutOfBounds {
        line: usize,
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },
    #[error("negative entry {value} at row {row}, column {col}")]
    NegativeEntry { row: usize, col: usize, value: f64 },
    #[error("sparsity {0} is outside (0, 1)")]
    InvalidSparsity(f64),
    #[error("threshold {0} is negative")]
    NegativeThreshold(f64),
    #[error("preprocessing at threshold {threshold} removed every {what}")]
    EmptyResult { what: &'static str, threshold: f64 },
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

/// Recipe for an i.i.d. Poisson count matrix with a prescribed expected
/// nonzero fraction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub rows: usize,
    pub cols: usize,
    /// Expected fraction of nonzero entries, in (0, 1).
    pub sparsity: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(rows: usize, cols: usize, sparsity: f64, seed: u64) -> Result<Self, DataError> {
        if !(sparsity > 0.0 && sparsity < 1.0) {
            return Err(DataError::InvalidSparsity(sparsity));
        }
        Ok(SyntheticSpec {
            rows,
            cols,
            sparsity,
            seed,
        })
    }

    /// Poisson rate: P(entry > 0) = 1 - exp(-rate) = sparsity exactly.
    pub fn rate(&self) -> f64 {
        -(1.0 - self.sparsity).ln()
    }
}

/// On-disk format of a dense matrix file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DenseFormat {
    Csv,
    MatrixMarket,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormatTag {
    BagOfWords,
    Csv,
    MatrixMarket,
    Synthetic,
}

/// Record of a min-sum filtering pass, kept alongside the filtered data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessRecord {
    pub threshold: f64,
    pub original_rows: usize,
    pub original_cols: usize,
}

/// Summary of a dataset on disk: where it came from and what shape it has.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub source: String,
    pub format: FormatTag,
    pub rows: usize,
    pub cols: usize,
    pub nonzeros: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preprocessing: Option<PreprocessRecord>,
}

impl DatasetManifest {
    pub fn describe(name: &str, source: &str, format: FormatTag, m: &CountMatrix) -> Self {
        DatasetManifest {
            name: name.to_string(),
            source: source.to_string(),
            format,
            rows: m.rows(),
            cols: m.cols(),
            nonzeros: m.nnz(),
            preprocessing: None,
        }
    }

    pub fn matches(&self, m: &CountMatrix) -> bool {
        self.rows == m.rows() && self.cols == m.cols() && self.nonzeros == m.nnz()
    }
}

pub fn is_integral(m: &CountMatrix) -> bool {
    match m {
        CountMatrix::Dense(d) => d.values().iter().all(|v| v.fract() == 0.0),
        CountMatrix::Sparse(s) => s.iter_triplets().all(|(_, _, v)| v.fract() == 0.0),
    }
}

/// Parse a bag-of-words triplet stream. Returns the matrix together with any
/// non-fatal warnings (currently only a declared-versus-actual nonzero-count
/// mismatch).
pub fn read_bag_of_words<R: BufRead>(
    reader: R,
) -> Result<(SparseCountMatrix, Vec<String>), DataError> {
    let mut lines = reader.lines().enumerate();
    let mut header = [0usize; 3];
    for (what, slot) in ["row count", "column count", "nonzero count"]
        .iter()
        .zip(header.iter_mut())
    {
        let (idx, line) = lines.next().ok_or(DataError::Malformed {
            line: 0,
            message: format!("missing {what} header line"),
        })?;
        let line = line?;
        *slot = line.trim().parse().map_err(|_| DataError::Malformed {
            line: idx + 1,
            message: format!("expected {what}, found {:?}", line.trim()),
        })?;
    }
    let (rows, cols, declared) = (header[0], header[1], header[2]);

    let mut triplets = Vec::with_capacity(declared);
    for (idx, line) in lines {
        let line = line?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        let (i, j, v) = parse_triplet(text, idx + 1)?;
        if i == 0 || i > rows || j == 0 || j > cols {
            return Err(DataError::EntryOutOfBounds {
                line: idx + 1,
                row: i,
                col: j,
                rows,
                cols,
            });
        }
        triplets.push((i - 1, j - 1, v));
    }

    let mut warnings = Vec::new();
    if triplets.len() != declared {
        warnings.push(format!(
            "header declares {declared} nonzeros but the file carries {}",
            triplets.len()
        ));
    }
    let matrix = SparseCountMatrix::from_triplets(rows, cols, &triplets)?;
    Ok((matrix, warnings))
}

pub fn load_bag_of_words(path: impl AsRef<Path>) -> Result<SparseCountMatrix, DataError> {
    let path = path.as_ref();
    let (matrix, warnings) = read_bag_of_words(BufReader::new(File::open(path)?))?;
    for warning in warnings {
        eprintln!("{}: {warning}", path.display());
    }
    Ok(matrix)
}

pub fn write_bag_of_words_to<W: Write>(mut out: W, m: &SparseCountMatrix) -> Result<(), DataError> {
    writeln!(out, "{}", m.rows())?;
    writeln!(out, "{}", m.cols())?;
    writeln!(out, "{}", m.nnz())?;
    for (i, j, v) in m.iter_triplets() {
        writeln!(out, "{} {} {}", i + 1, j + 1, v)?;
    }
    Ok(())
}

pub fn write_bag_of_words(path: impl AsRef<Path>, m: &SparseCountMatrix) -> Result<(), DataError> {
    write_bag_of_words_to(BufWriter::new(File::create(path)?), m)
}

/// One `row col count` triplet, 1-indexed, whitespace separated.
fn parse_triplet(text: &str, line: usize) -> Result<(usize, usize, f64), DataError> {
    let mut fields = text.split_whitespace();
    let malformed = |message: String| DataError::Malformed { line, message };
    let mut next = |what: &str| {
        fields
            .next()
            .ok_or_else(|| malformed(format!("missing {what}")))
    };
    let i: usize = next("row id")?
        .parse()
        .map_err(|_| malformed("row id is not an integer".into()))?;
    let j: usize = next("column id")?
        .parse()
        .map_err(|_| malformed("column id is not an integer".into()))?;
    let v: f64 = next("count")?
        .parse()
        .map_err(|_| malformed("count is not a number".into()))?;
    if fields.next().is_some() {
        return Err(malformed("trailing fields after the triplet".into()));
    }
    if !(v >= 0.0) || !v.is_finite() {
        return Err(malformed(format!("count {v} is not a nonnegative real")));
    }
    Ok((i, j, v))
}

pub fn read_dense<R: BufRead>(
    reader: R,
    format: DenseFormat,
) -> Result<DenseCountMatrix, DataError> {
    match format {
        DenseFormat::Csv => read_csv(reader),
        DenseFormat::MatrixMarket => read_matrix_market(reader),
    }
}

pub fn load_dense(
    path: impl AsRef<Path>,
    format: DenseFormat,
) -> Result<DenseCountMatrix, DataError> {
    read_dense(BufReader::new(File::open(path)?), format)
}

pub fn write_dense_to<W: Write>(
    mut out: W,
    m: &DenseCountMatrix,
    format: DenseFormat,
) -> Result<(), DataError> {
    match format {
        DenseFormat::Csv => {
            for i in 0..m.rows() {
                let row: Vec<String> = m.row(i).iter().map(|v| format!("{v}")).collect();
                writeln!(out, "{}", row.join(","))?;
            }
        }
        DenseFormat::MatrixMarket => {
            writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
            let nnz = m.values().iter().filter(|&&v| v != 0.0).count();
            writeln!(out, "{} {} {}", m.rows(), m.cols(), nnz)?;
            for i in 0..m.rows() {
                for (j, &v) in m.row(i).iter().enumerate() {
                    if v != 0.0 {
                        writeln!(out, "{} {} {}", i + 1, j + 1, v)?;
                    }
                }
            }
        }
    }
    Ok(())
}

pub fn write_dense(
    path: impl AsRef<Path>,
    m: &DenseCountMatrix,
    format: DenseFormat,
) -> Result<(), DataError> {
    write_dense_to(BufWriter::new(File::create(path)?), m, format)
}

fn read_csv<R: BufRead>(reader: R) -> Result<DenseCountMatrix, DataError> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for (j, field) in text.split(',').enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| DataError::Malformed {
                line: idx + 1,
                message: format!("field {:?} is not a number", field.trim()),
            })?;
            if v < 0.0 {
                return Err(DataError::NegativeEntry {
                    row: rows.len(),
                    col: j,
                    value: v,
                });
            }
            row.push(v);
        }
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(DataError::Malformed {
                    line: idx + 1,
                    message: format!("expected {} fields, found {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(DataError::Malformed {
            line: 1,
            message: "no rows in input".into(),
        });
    }
    Ok(DenseCountMatrix::from_rows(&rows)?)
}

fn read_matrix_market<R: BufRead>(reader: R) -> Result<DenseCountMatrix, DataError> {
    let mut lines = reader.lines().enumerate();
    let (_, banner) = lines.next().ok_or(DataError::Malformed {
        line: 1,
        message: "empty input".into(),
    })?;
    let banner = banner?;
    let lowered = banner.to_lowercase();
    if !lowered.starts_with("%%matrixmarket") || !lowered.contains("coordinate") {
        return Err(DataError::Malformed {
            line: 1,
            message: "expected a MatrixMarket coordinate banner".into(),
        });
    }

    let mut size: Option<(usize, usize, usize, usize)> = None;
    let mut seen = 0usize;
    let mut matrix = DenseCountMatrix::zeros(0, 0);
    for (idx, line) in lines {
        let line = line?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('%') {
            continue;
        }
        match size {
            None => {
                let fields: Vec<&str> = text.split_whitespace().collect();
                let parsed = (|| {
                    if fields.len() != 3 {
                        return None;
                    }
                    Some((
                        fields[0].parse::<usize>().ok()?,
                        fields[1].parse::<usize>().ok()?,
                        fields[2].parse::<usize>().ok()?,
                    ))
                })();
                let (rows, cols, nnz) = parsed.ok_or_else(|| DataError::Malformed {
                    line: idx + 1,
                    message: "expected a `rows cols nonzeros` size line".into(),
                })?;
                matrix = DenseCountMatrix::zeros(rows, cols);
                size = Some((rows, cols, nnz, idx + 1));
            }
            Some((rows, cols, _, _)) => {
                let (i, j, v) = parse_triplet(text, idx + 1)?;
                if i == 0 || i > rows || j == 0 || j > cols {
                    return Err(DataError::EntryOutOfBounds {
                        line: idx + 1,
                        row: i,
                        col: j,
                        rows,
                        cols,
                    });
                }
                matrix.set(i - 1, j - 1, matrix.get(i - 1, j - 1) + v);
                seen += 1;
            }
        }
    }
    let (_, _, declared, size_line) = size.ok_or(DataError::Malformed {
        line: 1,
        message: "missing size line".into(),
    })?;
    if seen != declared {
        return Err(DataError::Malformed {
            line: size_line,
            message: format!("size line declares {declared} entries, file carries {seen}"),
        });
    }
    Ok(matrix)
}

/// Draw an i.i.d. Poisson matrix at the spec's rate, storing only the
/// nonzeros. Each row consumes its own child stream, so the result is
/// identical however the rows are scheduled across threads.
pub fn gen_poisson(spec: &SyntheticSpec) -> Result<SparseCountMatrix, DataError> {
    if !(spec.sparsity > 0.0 && spec.sparsity < 1.0) {
        return Err(DataError::InvalidSparsity(spec.sparsity));
    }
    let lambda = spec.rate();
    let root = RngStream::from_seed(spec.seed);
    let cols = spec.cols;
    let triplets: Vec<(usize, usize, f64)> = (0..spec.rows)
        .into_par_iter()
        .flat_map_iter(|i| {
            let mut rng = root.child("row", i as u64);
            (0..cols)
                .filter_map(|j| {
                    let count = rng.poisson(lambda);
                    (count > 0).then_some((i, j, count as f64))
                })
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(SparseCountMatrix::from_triplets(
        spec.rows, spec.cols, &triplets,
    )?)
}

/// Drop rows whose sum falls under the threshold, then drop columns of the
/// row-filtered matrix the same way. One pass each, no fixpoint iteration.
/// Returns the filtered matrix plus the kept row and column indices, so
/// `out[a][b] == v[rows[a]][cols[b]]`.
pub fn preprocess_min_sum(
    v: &CountMatrix,
    threshold: f64,
) -> Result<(CountMatrix, Vec<usize>, Vec<usize>), DataError> {
    if threshold < 0.0 {
        return Err(DataError::NegativeThreshold(threshold));
    }
    let row_sums = v.row_sums();
    let kept_rows: Vec<usize> = (0..v.rows())
        .filter(|&i| row_sums[i] >= threshold)
        .collect();
    if kept_rows.is_empty() {
        return Err(DataError::EmptyResult {
            what: "row",
            threshold,
        });
    }

    // column sums over the surviving rows only
    let mut col_sums = vec![0.0; v.cols()];
    for &i in &kept_rows {
        v.for_each_nonzero_in_row(i, |j, value| col_sums[j] += value);
    }
    let kept_cols: Vec<usize> = (0..v.cols())
        .filter(|&j| col_sums[j] >= threshold)
        .collect();
    if kept_cols.is_empty() {
        return Err(DataError::EmptyResult {
            what: "column",
            threshold,
        });
    }

    let mut col_map = vec![usize::MAX; v.cols()];
    for (b, &j) in kept_cols.iter().enumerate() {
        col_map[j] = b;
    }
    let filtered = match v {
        CountMatrix::Dense(_) => {
            let mut out = DenseCountMatrix::zeros(kept_rows.len(), kept_cols.len());
            for (a, &i) in kept_rows.iter().enumerate() {
                v.for_each_nonzero_in_row(i, |j, value| {
                    if col_map[j] != usize::MAX {
                        out.set(a, col_map[j], value);
                    }
                });
            }
            CountMatrix::Dense(out)
        }
        CountMatrix::Sparse(_) => {
            let mut triplets = Vec::new();
            for (a, &i) in kept_rows.iter().enumerate() {
                v.for_each_nonzero_in_row(i, |j, value| {
                    if col_map[j] != usize::MAX {
                        triplets.push((a, col_map[j], value));
                    }
                });
            }
            CountMatrix::Sparse(SparseCountMatrix::from_triplets(
                kept_rows.len(),
                kept_cols.len(),
                &triplets,
            )?)
        }
    };
    Ok((filtered, kept_rows, kept_cols))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Cursor;

    fn parse_bow(text: &str) -> Result<(SparseCountMatrix, Vec<String>), DataError> {
        read_bag_of_words(Cursor::new(text))
    }

    #[test]
    fn bag_of_words_header_and_triplets() {
        let (m, warnings) = parse_bow("2\n3\n2\n1 2 5\n2 3 1\n").unwrap();
        assert!(warnings.is_empty());
        assert_eq!((m.rows(), m.cols(), m.nnz()), (2, 3, 2));
        assert_eq!(m.to_dense().get(0, 1), 5.0);
        assert_eq!(m.to_dense().get(1, 2), 1.0);
    }

    #[test]
    fn empty_body_with_zero_declared_nonzeros_is_valid() {
        let (m, warnings) = parse_bow("2\n3\n0\n").unwrap();
        assert!(warnings.is_empty());
        assert_eq!((m.rows(), m.cols(), m.nnz()), (2, 3, 0));
    }

    #[test]
    fn duplicate_triplets_sum() {
        let (m, _) = parse_bow("1\n1\n2\n1 1 2\n1 1 2\n").unwrap();
        assert_eq!(m.to_dense().get(0, 0), 4.0);
    }

    #[test]
    fn malformed_line_reports_its_number() {
        let err = parse_bow("2\n2\n1\n1 not-a-count\n").unwrap_err();
        match err {
            DataError::Malformed { line, .. } => assert_eq!(line, 4),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn out_of_bounds_triplet_is_rejected_with_line() {
        let err = parse_bow("2\n2\n1\n3 1 4\n").unwrap_err();
        match err {
            DataError::EntryOutOfBounds { line, row, .. } => {
                assert_eq!(line, 4);
                assert_eq!(row, 3);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn nonzero_count_mismatch_warns_but_loads() {
        let (m, warnings) = parse_bow("2\n2\n5\n1 1 2\n").unwrap();
        assert_eq!(m.nnz(), 1);
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains('5'), "{}", warnings[0]);
    }

    #[test]
    fn bag_of_words_files_round_trip() {
        let m = SparseCountMatrix::from_triplets(3, 4, &[(0, 1, 5.0), (1, 3, 2.0), (2, 0, 7.0)])
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("counts.txt");
        write_bag_of_words(&path, &m).unwrap();
        let back = load_bag_of_words(&path).unwrap();
        assert_eq!(
            m.iter_triplets().collect::<Vec<_>>(),
            back.iter_triplets().collect::<Vec<_>>()
        );
    }

    #[test]
    fn csv_parses_a_plain_grid() {
        let m = read_dense(Cursor::new("1,2\n3,4\n"), DenseFormat::Csv).unwrap();
        assert_eq!(m.values(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn csv_negative_entry_reports_its_position() {
        let err = read_dense(Cursor::new("1,2\n3,-1\n"), DenseFormat::Csv).unwrap_err();
        match err {
            DataError::NegativeEntry { row, col, value } => {
                assert_eq!((row, col), (1, 1));
                assert_eq!(value, -1.0);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn csv_ragged_rows_are_rejected() {
        let err = read_dense(Cursor::new("1,2\n3\n"), DenseFormat::Csv).unwrap_err();
        assert!(matches!(err, DataError::Malformed { line: 2, .. }));
    }

    #[test]
    fn matrix_market_densifies_coordinates() {
        let text = "%%MatrixMarket matrix coordinate real general\n% comment\n2 3 1\n2 1 4.5\n";
        let m = read_dense(Cursor::new(text), DenseFormat::MatrixMarket).unwrap();
        assert_eq!((m.rows(), m.cols()), (2, 3));
        assert_eq!(m.get(1, 0), 4.5);
        assert_eq!(m.get(0, 0), 0.0);
    }

    #[test]
    fn matrix_market_rejects_wrong_banner_and_count() {
        let err = read_dense(Cursor::new("1,2\n"), DenseFormat::MatrixMarket).unwrap_err();
        assert!(matches!(err, DataError::Malformed { line: 1, .. }));
        let short = "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 3\n";
        let err = read_dense(Cursor::new(short), DenseFormat::MatrixMarket).unwrap_err();
        assert!(matches!(err, DataError::Malformed { line: 2, .. }));
    }

    #[test]
    fn dense_files_round_trip_in_both_formats() {
        let m = DenseCountMatrix::from_vec(2, 3, vec![1.0, 0.0, 2.0, 0.0, 5.0, 3.0]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        for format in [DenseFormat::Csv, DenseFormat::MatrixMarket] {
            let path = dir.path().join("grid");
            write_dense(&path, &m, format).unwrap();
            let back = load_dense(&path, format).unwrap();
            assert_eq!(m.values(), back.values(), "{format:?}");
        }
    }

    #[test]
    fn synthetic_rate_makes_nonzero_probability_equal_sparsity() {
        let spec = SyntheticSpec::new(1, 1, 0.9, 0).unwrap();
        assert!((spec.rate() - 2.302585092994046).abs() < 1e-12);
        assert!((1.0 - (-spec.rate()).exp() - 0.9).abs() < 1e-15);
    }

    #[test]
    fn generator_matches_its_rate_and_sparsity() {
        let spec = SyntheticSpec::new(1000, 1000, 0.10, 77).unwrap();
        let m = gen_poisson(&spec).unwrap();
        let samples = (spec.rows * spec.cols) as f64;
        let lambda = spec.rate();
        // mean of n*m i.i.d. Poisson draws, 3 standard errors
        let mean = m.iter_triplets().map(|(_, _, v)| v).sum::<f64>() / samples;
        let tolerance = 3.0 * (lambda / samples).sqrt();
        assert!((mean - lambda).abs() <= tolerance, "{mean} vs {lambda}");
        let fraction = m.nnz() as f64 / samples;
        assert!(
            (fraction - 0.10).abs() <= 0.003,
            "nonzero fraction {fraction}"
        );
    }

    #[test]
    fn generator_is_deterministic_per_seed() {
        let spec = SyntheticSpec::new(40, 30, 0.4, 5).unwrap();
        let a = gen_poisson(&spec).unwrap();
        let b = gen_poisson(&spec).unwrap();
        assert_eq!(
            a.iter_triplets().collect::<Vec<_>>(),
            b.iter_triplets().collect::<Vec<_>>()
        );
        let other = gen_poisson(&SyntheticSpec::new(40, 30, 0.4, 6).unwrap()).unwrap();
        assert_ne!(
            a.iter_triplets().collect::<Vec<_>>(),
            other.iter_triplets().collect::<Vec<_>>()
        );
    }

    #[test]
    fn sparsity_outside_the_open_interval_is_rejected() {
        assert!(SyntheticSpec::new(2, 2, 0.0, 0).is_err());
        assert!(SyntheticSpec::new(2, 2, 1.0, 0).is_err());
    }

    #[test]
    fn min_sum_filter_matches_hand_example() {
        let v = CountMatrix::Dense(
            DenseCountMatrix::from_vec(2, 2, vec![25.0, 0.0, 1.0, 0.0]).unwrap(),
        );
        let (out, rows, cols) = preprocess_min_sum(&v, 20.0).unwrap();
        assert_eq!(rows, vec![0]);
        assert_eq!(cols, vec![0]);
        assert_eq!(out.to_dense().values(), &[25.0]);
    }

    #[test]
    fn zero_threshold_is_the_identity() {
        let v = CountMatrix::Dense(
            DenseCountMatrix::from_vec(2, 3, vec![0.0, 1.0, 0.0, 2.0, 0.0, 3.0]).unwrap(),
        );
        let (out, rows, cols) = preprocess_min_sum(&v, 0.0).unwrap();
        assert_eq!(rows, vec![0, 1]);
        assert_eq!(cols, vec![0, 1, 2]);
        assert_eq!(out.to_dense().values(), v.to_dense().values());
    }

    #[test]
    fn removing_everything_is_an_error() {
        let v = CountMatrix::Dense(DenseCountMatrix::from_vec(1, 1, vec![3.0]).unwrap());
        let err = preprocess_min_sum(&v, 100.0).unwrap_err();
        assert!(matches!(err, DataError::EmptyResult { what: "row", .. }));
    }

    #[test]
    fn manifest_round_trips_and_checks_shape() {
        let m = CountMatrix::Sparse(
            SparseCountMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 1, 2.5)]).unwrap(),
        );
        let mut manifest = DatasetManifest::describe("toy", "toy.txt", FormatTag::BagOfWords, &m);
        manifest.preprocessing = Some(PreprocessRecord {
            threshold: 20.0,
            original_rows: 5,
            original_cols: 4,
        });
        assert!(manifest.matches(&m));
        assert!(!is_integral(&m));
        let json = serde_json::to_string(&manifest).unwrap();
        let back: DatasetManifest = serde_json::from_str(&json).unwrap();
        assert_eq!(manifest, back);
    }

    fn small_count_matrix() -> impl Strategy<Value = DenseCountMatrix> {
        (1usize..5, 1usize..5).prop_flat_map(|(r, c)| {
            proptest::collection::vec(0u32..40, r * c).prop_map(move |counts| {
                DenseCountMatrix::from_vec(r, c, counts.into_iter().map(f64::from).collect())
                    .unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn filtered_sums_meet_the_threshold_and_indices_compose(
            dense in small_count_matrix(),
            threshold in 0.0f64..60.0,
            sparse_storage in proptest::bool::ANY,
        ) {
            let v = if sparse_storage {
                CountMatrix::Dense(dense.clone()).to_sparse().into()
            } else {
                CountMatrix::Dense(dense.clone())
            };
            let Ok((out, rows, cols)) = preprocess_min_sum(&v, threshold) else {
                return Ok(());
            };
            // rows passed the bar before any column was dropped
            for &i in &rows {
                prop_assert!(dense.row(i).iter().sum::<f64>() >= threshold);
            }
            for sum in out.col_sums() {
                prop_assert!(sum >= threshold);
            }
            let out = out.to_dense();
            for (a, &i) in rows.iter().enumerate() {
                for (b, &j) in cols.iter().enumerate() {
                    prop_assert_eq!(out.get(a, b), dense.get(i, j));
                }
            }
        }

        #[test]
        fn triplet_files_round_trip_bit_exactly(
            dense in small_count_matrix(),
        ) {
            let m = CountMatrix::Dense(dense).to_sparse();
            let mut buffer = Vec::new();
            write_bag_of_words_to(&mut buffer, &m).unwrap();
            let (back, warnings) = read_bag_of_words(Cursor::new(buffer)).unwrap();
            prop_assert!(warnings.is_empty());
            prop_assert_eq!(
                m.iter_triplets().collect::<Vec<_>>(),
                back.iter_triplets().collect::<Vec<_>>()
            );
        }
    }
}
