//! Subjects, cohorts and their CSV storage.
//!
//! A cohort on disk is a manifest `id,label,sc,ft,fv` whose path columns are
//! relative to the manifest's directory. Each referenced file is a headerless
//! numeric CSV: `<id>_sc.csv` (N x N), `<id>_ft.csv` (N x d) and `<id>_fv.csv`
//! (1 x c). Floats are written with 9 significant digits.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{first_non_finite, Mat};

/// One subject's multimodal record.
#[derive(Clone, Debug, PartialEq)]
pub struct Subject {
    pub id: String,
    /// Structural connectivity, binary and symmetric with a zero diagonal.
    pub adjacency: Mat,
    /// Functional time-series features, one row per ROI.
    pub node_features: Mat,
    /// Precomputed MRI feature vector.
    pub feature_vector: Vec<f64>,
    pub label: usize,
}

impl Subject {
    pub fn dims(&self) -> (usize, usize, usize) {
        (
            self.adjacency.nrows(),
            self.node_features.ncols(),
            self.feature_vector.len(),
        )
    }
}

/// Checks every subject invariant against `(N, d, c)` and hands the subject back unchanged.
pub fn validate_subject(subject: Subject, dims: (usize, usize, usize)) -> Result<Subject> {
    check_subject(&subject, dims)?;
    Ok(subject)
}

pub fn check_subject(s: &Subject, (n, d, c): (usize, usize, usize)) -> Result<()> {
    let shape = |field: &str, expected: String, found: String| Error::Shape {
        field: field.to_string(),
        expected,
        found,
    };
    let a = &s.adjacency;
    if a.nrows() != n || a.ncols() != n {
        return Err(shape(
            "adjacency",
            format!("{n}x{n}"),
            format!("{}x{}", a.nrows(), a.ncols()),
        ));
    }
    if let Some((row, col)) = first_non_finite(a) {
        return Err(Error::NonFinite {
            field: "adjacency".into(),
            row,
            col,
        });
    }
    for i in 0..n {
        for j in 0..n {
            let v = a[(i, j)];
            if v != 0.0 && v != 1.0 {
                return Err(Error::NonBinary { row: i, col: j, value: v });
            }
        }
    }
    for i in 0..n {
        if a[(i, i)] != 0.0 {
            return Err(Error::NonZeroDiagonal { index: i });
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if a[(i, j)] != a[(j, i)] {
                return Err(Error::Asymmetric { row: i, col: j });
            }
        }
    }
    let x = &s.node_features;
    if x.nrows() != n || x.ncols() != d {
        return Err(shape(
            "node_features",
            format!("{n}x{d}"),
            format!("{}x{}", x.nrows(), x.ncols()),
        ));
    }
    if let Some((row, col)) = first_non_finite(x) {
        return Err(Error::NonFinite {
            field: "node_features".into(),
            row,
            col,
        });
    }
    if s.feature_vector.len() != c {
        return Err(shape(
            "feature_vector",
            c.to_string(),
            s.feature_vector.len().to_string(),
        ));
    }
    if let Some(col) = s.feature_vector.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            field: "feature_vector".into(),
            row: 0,
            col,
        });
    }
    if s.label > 1 {
        return Err(Error::Label(s.label));
    }
    Ok(())
}

pub fn one_hot(label: usize) -> Result<[f64; 2]> {
    match label {
        0 => Ok([1.0, 0.0]),
        1 => Ok([0.0, 1.0]),
        other => Err(Error::Label(other)),
    }
}

/// Ordered subjects sharing one set of dimensions, with both classes present.
#[derive(Clone, Debug, PartialEq)]
pub struct Cohort {
    pub subjects: Vec<Subject>,
    pub class_names: [String; 2],
    pub dims: (usize, usize, usize),
}

pub const DEFAULT_CLASS_NAMES: [&str; 2] = ["control", "patient"];

impl Cohort {
    pub fn new(subjects: Vec<Subject>) -> Result<Self> {
        Self::with_class_names(subjects, DEFAULT_CLASS_NAMES.map(String::from))
    }

    pub fn with_class_names(subjects: Vec<Subject>, class_names: [String; 2]) -> Result<Self> {
        let first = subjects
            .first()
            .ok_or_else(|| Error::InvalidArgument("cohort has no subjects".into()))?;
        let dims = first.dims();
        for s in &subjects {
            if s.dims() != dims {
                return Err(Error::InconsistentDims {
                    first: first.id.clone(),
                    first_dims: dims,
                    second: s.id.clone(),
                    second_dims: s.dims(),
                });
            }
            check_subject(s, dims)?;
        }
        for class in 0..2 {
            if !subjects.iter().any(|s| s.label == class) {
                return Err(Error::InvalidArgument(format!(
                    "cohort has no subject of class {class}"
                )));
            }
        }
        Ok(Self {
            subjects,
            class_names,
            dims,
        })
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.subjects.iter().map(|s| s.label).collect()
    }

    /// Sub-cohort by index, without re-checking class balance.
    pub fn select(&self, indices: &[usize]) -> Vec<Subject> {
        indices.iter().map(|&i| self.subjects[i].clone()).collect()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestRow {
    id: String,
    label: usize,
    sc: String,
    ft: String,
    fv: String,
}

/// Formats with 9 significant digits; integral values are written as integers.
pub fn format_sig9(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:.8e}")
    }
}

pub fn write_matrix_csv(path: &Path, m: &Mat) -> Result<()> {
    let mut out = String::with_capacity(m.len() * 16);
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&format_sig9(m[(i, j)]));
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_matrix_csv(path: &Path) -> Result<Mat> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let row = record
            .iter()
            .enumerate()
            .map(|(c, field)| {
                field.trim().parse::<f64>().map_err(|_| Error::Parse {
                    path: path.to_path_buf(),
                    message: format!("row {r}, column {c}: `{field}` is not a number"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some(r) = rows.iter().position(|row| row.len() != ncols) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            message: format!("row {r} has {} columns, expected {ncols}", rows[r].len()),
        });
    }
    Ok(Mat::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

/// Loads and validates every subject listed in a manifest, in manifest order.
pub fn load_cohort(manifest_path: &Path) -> Result<Cohort> {
    if !manifest_path.exists() {
        return Err(Error::MissingFile(manifest_path.to_path_buf()));
    }
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut reader = csv::Reader::from_path(manifest_path)?;
    let headers = reader.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["id", "label", "sc", "ft", "fv"] {
        return Err(Error::Parse {
            path: manifest_path.to_path_buf(),
            message: "header must be id,label,sc,ft,fv".into(),
        });
    }
    let mut subjects: Vec<Subject> = Vec::new();
    for row in reader.deserialize::<ManifestRow>() {
        let row = row.map_err(|e| Error::Parse {
            path: manifest_path.to_path_buf(),
            message: e.to_string(),
        })?;
        let adjacency = read_matrix_csv(&base.join(&row.sc))?;
        let node_features = read_matrix_csv(&base.join(&row.ft))?;
        let fv = read_matrix_csv(&base.join(&row.fv))?;
        if fv.nrows() != 1 {
            return Err(Error::Parse {
                path: base.join(&row.fv),
                message: format!("feature vector file must have one row, found {}", fv.nrows()),
            });
        }
        let subject = Subject {
            id: row.id,
            adjacency,
            node_features,
            feature_vector: fv.iter().copied().collect(),
            label: row.label,
        };
        if let Some(first) = subjects.first() {
            if first.dims() != subject.dims() {
                return Err(Error::InconsistentDims {
                    first: first.id.clone(),
                    first_dims: first.dims(),
                    second: subject.id.clone(),
                    second_dims: subject.dims(),
                });
            }
        }
        let dims = subject.dims();
        subjects.push(validate_subject(subject, dims)?);
    }
    Cohort::new(subjects)
}

/// Writes every subject's CSV files plus `manifest.csv` into `dir`; returns the manifest path.
pub fn save_cohort(cohort: &Cohort, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let manifest_path = dir.join("manifest.csv");
    let mut writer = csv::Writer::from_path(&manifest_path)?;
    for s in &cohort.subjects {
        let row = ManifestRow {
            id: s.id.clone(),
            label: s.label,
            sc: format!("{}_sc.csv", s.id),
            ft: format!("{}_ft.csv", s.id),
            fv: format!("{}_fv.csv", s.id),
        };
        write_matrix_csv(&dir.join(&row.sc), &s.adjacency)?;
        write_matrix_csv(&dir.join(&row.ft), &s.node_features)?;
        write_matrix_csv(
            &dir.join(&row.fv),
            &Mat::from_row_slice(1, s.feature_vector.len(), &s.feature_vector),
        )?;
        writer.serialize(&row)?;
    }
    writer.flush()?;
    Ok(manifest_path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn subject(n: usize, d: usize, c: usize) -> Subject {
        let mut a = Mat::zeros(n, n);
        for i in 0..n - 1 {
            a[(i, i + 1)] = 1.0;
            a[(i + 1, i)] = 1.0;
        }
        Subject {
            id: "s0".into(),
            adjacency: a,
            node_features: Mat::from_fn(n, d, |i, j| (i * d + j) as f64 * 0.01),
            feature_vector: (0..c).map(|k| k as f64).collect(),
            label: 0,
        }
    }

    #[test]
    fn full_size_subject_is_accepted() {
        let s = subject(90, 187, 128);
        let back = validate_subject(s.clone(), (90, 187, 128)).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn asymmetry_reported_at_upper_index() {
        let mut s = subject(4, 3, 2);
        s.adjacency = Mat::zeros(4, 4);
        s.adjacency[(0, 1)] = 1.0;
        match validate_subject(s, (4, 3, 2)) {
            Err(Error::Asymmetric { row: 0, col: 1 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_finite_feature_reported_with_position() {
        let mut s = subject(4, 3, 2);
        s.node_features[(2, 1)] = f64::NAN;
        match validate_subject(s, (4, 3, 2)) {
            Err(Error::NonFinite { field, row: 2, col: 1 }) => assert_eq!(field, "node_features"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_binary_is_not_coerced() {
        let mut s = subject(3, 2, 2);
        s.adjacency[(0, 1)] = 0.5;
        s.adjacency[(1, 0)] = 0.5;
        assert!(matches!(
            validate_subject(s, (3, 2, 2)),
            Err(Error::NonBinary { row: 0, col: 1, .. })
        ));
    }

    #[test]
    fn shape_errors_name_the_field() {
        let s = subject(4, 3, 2);
        let err = validate_subject(s, (4, 5, 2)).unwrap_err();
        assert!(err.to_string().contains("node_features"));
    }

    #[test]
    fn one_hot_encoding() {
        assert_eq!(one_hot(0).unwrap(), [1.0, 0.0]);
        assert_eq!(one_hot(1).unwrap(), [0.0, 1.0]);
        assert!(matches!(one_hot(2), Err(Error::Label(2))));
    }

    #[test]
    fn sig9_formatting() {
        assert_eq!(format_sig9(1.0), "1");
        assert_eq!(format_sig9(0.0), "0");
        assert_eq!(format_sig9(0.123456789123), "1.23456789e-1");
        let v: f64 = format_sig9(-12345.678912345).parse().unwrap();
        assert!((v + 12345.6789).abs() < 1e-4);
    }
}
