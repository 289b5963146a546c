//! File formats: tabular CSV (`x1..xp,y`), the matrix-regression JSON
//! container, the groups file, and the fixed-width float formatting used by
//! every report table.
//!
//! Data files round-trip exactly (shortest-representation floats); report
//! tables use 12 significant digits via [`fmt_sig12`].

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::Deserialize;

use crate::error::{GicError, Result};
use crate::model::GroupPartition;

fn data_err(path: &Path, message: impl Into<String>) -> GicError {
    GicError::DataFormat { path: path.display().to_string(), message: message.into() }
}

/// 12 significant digits, scientific: the one float format report tables use,
/// so reruns diff byte-identically.
pub fn fmt_sig12(v: f64) -> String {
    format!("{v:.11e}")
}

/// Read `x1..xp,y` CSV. Column names are checked literally; data cells must
/// be finite floats.
pub fn read_tabular_csv(path: &Path) -> Result<(Array2<f64>, Array1<f64>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| data_err(path, e.to_string()))?;
    let headers = rdr.headers().map_err(|e| data_err(path, e.to_string()))?.clone();
    if headers.len() < 2 {
        return Err(data_err(path, "need at least one x column and a y column"));
    }
    let p = headers.len() - 1;
    for (i, name) in headers.iter().take(p).enumerate() {
        let want = format!("x{}", i + 1);
        if name != want {
            return Err(data_err(
                path,
                format!("column {} must be named '{want}', found '{name}'", i + 1),
            ));
        }
    }
    if &headers[p] != "y" {
        return Err(data_err(
            path,
            format!("last column must be named 'y', found '{}'", &headers[p]),
        ));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (row_idx, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| data_err(path, e.to_string()))?;
        if record.len() != p + 1 {
            return Err(data_err(
                path,
                format!("row {} has {} cells, expected {}", row_idx + 2, record.len(), p + 1),
            ));
        }
        for (col, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                data_err(
                    path,
                    format!("row {}, column '{}': '{cell}' is not a number", row_idx + 2, &headers[col]),
                )
            })?;
            if col < p {
                xs.push(v);
            } else {
                ys.push(v);
            }
        }
    }
    if ys.is_empty() {
        return Err(data_err(path, "no data rows"));
    }
    let n = ys.len();
    let x = Array2::from_shape_vec((n, p), xs).expect("row-major cells")
        ;
    Ok((x, Array1::from_vec(ys)))
}

/// Write `x1..xp,y` CSV with shortest-round-trip floats (data files must
/// reload to the exact same values).
pub fn write_tabular_csv(path: &Path, x: &Array2<f64>, y: &Array1<f64>) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(GicError::InvalidShape(format!(
            "x has {} rows but y has {}",
            x.nrows(),
            y.len()
        )));
    }
    let mut w = BufWriter::new(File::create(path)?);
    for j in 0..x.ncols() {
        write!(w, "x{},", j + 1)?;
    }
    writeln!(w, "y")?;
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            write!(w, "{},", x[(i, j)])?;
        }
        writeln!(w, "{}", y[i])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MatrixContainer {
    p1: usize,
    p2: usize,
    #[serde(rename = "X")]
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
}

/// Read the matrix-regression container `{"p1", "p2", "X": [[row-major
/// flattened X_i]], "y": [...]}`.
pub fn read_matrix_json(path: &Path) -> Result<(Vec<Array2<f64>>, Array1<f64>)> {
    let file = File::open(path)?;
    let mut de = serde_json::Deserializer::from_reader(std::io::BufReader::new(file));
    let c: MatrixContainer = serde_path_to_error::deserialize(&mut de)
        .map_err(|e| data_err(path, e.to_string()))?;
    if c.p1 == 0 || c.p2 == 0 {
        return Err(data_err(path, "p1 and p2 must be positive"));
    }
    if c.x.len() != c.y.len() {
        return Err(data_err(
            path,
            format!("{} design matrices but {} responses", c.x.len(), c.y.len()),
        ));
    }
    let dim = c.p1 * c.p2;
    let mut xs = Vec::with_capacity(c.x.len());
    for (i, flat) in c.x.into_iter().enumerate() {
        if flat.len() != dim {
            return Err(data_err(
                path,
                format!("X[{i}] has {} entries, expected p1*p2 = {dim}", flat.len()),
            ));
        }
        xs.push(
            Array2::from_shape_vec((c.p1, c.p2), flat).expect("length checked"),
        );
    }
    Ok((xs, Array1::from_vec(c.y)))
}

/// Write the matrix-regression container (row-major flattening, exact floats).
pub fn write_matrix_json(path: &Path, xs: &[Array2<f64>], y: &Array1<f64>) -> Result<()> {
    if xs.len() != y.len() {
        return Err(GicError::InvalidShape(format!(
            "{} design matrices but {} responses",
            xs.len(),
            y.len()
        )));
    }
    if xs.is_empty() {
        return Err(GicError::InvalidArgument("empty matrix dataset".into()));
    }
    let (p1, p2) = xs[0].dim();
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{{")?;
    writeln!(w, "  \"p1\": {p1},")?;
    writeln!(w, "  \"p2\": {p2},")?;
    writeln!(w, "  \"X\": [")?;
    for (i, m) in xs.iter().enumerate() {
        let cells: Vec<String> = m.iter().map(|v| format!("{v}")).collect();
        let sep = if i + 1 < xs.len() { "," } else { "" };
        writeln!(w, "    [{}]{sep}", cells.join(", "))?;
    }
    writeln!(w, "  ],")?;
    let ys: Vec<String> = y.iter().map(|v| format!("{v}")).collect();
    writeln!(w, "  \"y\": [{}]", ys.join(", "))?;
    writeln!(w, "}}")?;
    w.flush()?;
    Ok(())
}

/// Read a groups file: a JSON array of groups, each a list of **1-based**
/// coordinate indices (matching the `x1..xp` column names). The groups must
/// partition `1..=p`.
pub fn read_groups_json(path: &Path, p: usize) -> Result<GroupPartition> {
    let text = std::fs::read_to_string(path)?;
    let raw: Vec<Vec<usize>> =
        serde_json::from_str(&text).map_err(|e| data_err(path, e.to_string()))?;
    let mut groups = Vec::with_capacity(raw.len());
    for (gi, group) in raw.into_iter().enumerate() {
        let mut zero_based = Vec::with_capacity(group.len());
        for idx in group {
            if idx == 0 || idx > p {
                return Err(data_err(
                    path,
                    format!(
                        "group {gi}: index {idx} out of range (indices are 1-based, 1..={p})"
                    ),
                ));
            }
            zero_based.push(idx - 1);
        }
        groups.push(zero_based);
    }
    let partition = GroupPartition::new(groups)
        .map_err(|e| data_err(path, format!("groups must partition 1..={p}: {e}")))?;
    if partition.dim() != p {
        return Err(data_err(
            path,
            format!("groups cover {} coordinates but the data has {p}", partition.dim()),
        ));
    }
    Ok(partition)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn tabular_csv_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let x = array![[0.1, -2.5e-17, 3.0], [f64::MIN_POSITIVE, 1.0 / 3.0, -1.0]];
        let y = array![1.25, -0.3333333333333333];
        write_tabular_csv(&path, &x, &y).unwrap();
        let (x2, y2) = read_tabular_csv(&path).unwrap();
        assert_eq!(x, x2);
        assert_eq!(y, y2);
    }

    #[test]
    fn tabular_csv_names_bad_headers_and_cells() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "x1,z2,y\n1,2,3\n").unwrap();
        let err = read_tabular_csv(&path).unwrap_err().to_string();
        assert!(err.contains("x2") && err.contains("z2"), "{err}");

        std::fs::write(&path, "x1,x2,y\n1,oops,3\n").unwrap();
        let err = read_tabular_csv(&path).unwrap_err().to_string();
        assert!(err.contains("oops") && err.contains("x2"), "{err}");

        std::fs::write(&path, "x1,x2,y\n").unwrap();
        assert!(read_tabular_csv(&path).is_err());

        std::fs::write(&path, "x1,x2,z\n1,2,3\n").unwrap();
        let err = read_tabular_csv(&path).unwrap_err().to_string();
        assert!(err.contains("'y'"), "{err}");
    }

    #[test]
    fn matrix_json_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let xs = vec![array![[1.0, 0.5], [0.25, -0.125]], array![[0.0, 1e-300], [7.0, 2.0]]];
        let y = array![0.75, -1.5];
        write_matrix_json(&path, &xs, &y).unwrap();
        let (xs2, y2) = read_matrix_json(&path).unwrap();
        assert_eq!(xs, xs2);
        assert_eq!(y, y2);
    }

    #[test]
    fn matrix_json_validates_shapes_and_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        std::fs::write(&path, r#"{"p1":2,"p2":2,"X":[[1,2,3]],"y":[1]}"#).unwrap();
        let err = read_matrix_json(&path).unwrap_err().to_string();
        assert!(err.contains("p1*p2"), "{err}");

        std::fs::write(&path, r#"{"p1":2,"p2":2,"X":[[1,2,3,4]],"y":[1,2]}"#).unwrap();
        assert!(read_matrix_json(&path).is_err());

        std::fs::write(&path, r#"{"p1":2,"p2":2,"X":[[1,2,3,4]],"y":[1],"extra":0}"#).unwrap();
        let err = read_matrix_json(&path).unwrap_err().to_string();
        assert!(err.contains("extra"), "{err}");
    }

    #[test]
    fn groups_file_is_one_based_and_must_partition() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.json");
        std::fs::write(&path, "[[1,2],[3]]").unwrap();
        let partition = read_groups_json(&path, 3).unwrap();
        assert_eq!(partition.groups(), &[vec![0, 1], vec![2]]);

        std::fs::write(&path, "[[0,1],[2]]").unwrap();
        let err = read_groups_json(&path, 3).unwrap_err().to_string();
        assert!(err.contains("1-based"), "{err}");

        std::fs::write(&path, "[[1,2]]").unwrap();
        assert!(read_groups_json(&path, 3).is_err());

        std::fs::write(&path, "[[1,2],[2,3]]").unwrap();
        assert!(read_groups_json(&path, 3).is_err());
    }

    #[test]
    fn report_floats_use_twelve_significant_digits() {
        assert_eq!(fmt_sig12(1.0), "1.00000000000e0");
        assert_eq!(fmt_sig12(0.1), "1.00000000000e-1");
        assert_eq!(fmt_sig12(-12345.6789), "-1.23456789000e4");
        assert_eq!(fmt_sig12(2.0 / 3.0), "6.66666666667e-1");
    }
}
