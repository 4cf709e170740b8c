use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::Dataset;
use crate::{Result, ScrError};

/// Loads a headed CSV with a `label` column; every other column is a feature.
/// Empty cells are read as 0.0. The modality tag is the file stem.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| ScrError::io(path, e))?;
    let tag = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_csv(file, tag)
}

pub fn read_csv<R: Read>(reader: R, modality_tag: impl Into<String>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();

    let header = match records.next() {
        Some(rec) => rec.map_err(|e| ingest(1, 0, e.to_string()))?,
        None => return Err(ingest(1, 0, "missing header row".into())),
    };
    let names: Vec<String> = header.iter().map(str::to_owned).collect();
    let label_col = names
        .iter()
        .position(|h| h == "label")
        .ok_or_else(|| ingest(1, 0, "no `label` column in header".into()))?;
    let feature_names: Vec<String> = names
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != label_col)
        .map(|(_, n)| n.clone())
        .collect();
    if feature_names.is_empty() {
        return Err(ingest(1, 0, "no feature columns".into()));
    }

    let width = names.len();
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (i, rec) in records.enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| ingest(line, 0, e.to_string()))?;
        if rec.len() != width {
            return Err(ingest(
                line,
                rec.len().min(width) + 1,
                format!("expected {width} fields, found {}", rec.len()),
            ));
        }
        for (j, cell) in rec.iter().enumerate() {
            let v = parse_cell(cell).map_err(|msg| ingest(line, j + 1, msg))?;
            if j == label_col {
                labels.push(v);
            } else {
                values.push(v);
            }
        }
    }
    if labels.is_empty() {
        return Err(ingest(2, 0, "no data rows".into()));
    }
    let features = Array2::from_shape_vec((labels.len(), feature_names.len()), values)
        .expect("row widths checked above");
    Dataset::new(features, labels, feature_names, modality_tag)
}

fn parse_cell(cell: &str) -> std::result::Result<f64, String> {
    if cell.is_empty() {
        return Ok(0.0);
    }
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(_) => Err(format!("non-finite value `{cell}`")),
        Err(_) => Err(format!("non-numeric value `{cell}`")),
    }
}

fn ingest(row: usize, column: usize, message: String) -> ScrError {
    ScrError::Ingest {
        row,
        column,
        message,
    }
}

/// Writes `label,<feature names…>` followed by one line per row. Values use the
/// shortest representation that parses back to the same `f64`.
pub fn write_csv_to<W: Write>(dataset: &Dataset, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let to_err = |e: csv::Error| ScrError::contract(format!("csv write failed: {e}"));
    let mut header = vec!["label".to_owned()];
    header.extend(dataset.feature_names().iter().cloned());
    wtr.write_record(&header).map_err(to_err)?;
    let mut row = Vec::with_capacity(header.len());
    for (i, feats) in dataset.features().rows().into_iter().enumerate() {
        row.clear();
        row.push(format!("{:?}", dataset.labels()[i]));
        row.extend(feats.iter().map(|v| format!("{v:?}")));
        wtr.write_record(&row).map_err(to_err)?;
    }
    wtr.flush().map_err(|e| ScrError::contract(format!("csv flush failed: {e}")))?;
    Ok(())
}

pub fn write_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| ScrError::io(path, e))?;
    write_csv_to(dataset, std::io::BufWriter::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Dataset> {
        read_csv(text.as_bytes(), "FA")
    }

    #[test]
    fn single_row_file() {
        let ds = parse("label,f1,f2\n1.0,2,3\n").unwrap();
        assert_eq!(ds.n_samples(), 1);
        assert_eq!(ds.n_features(), 2);
        assert_eq!(ds.labels(), &[1.0]);
        assert_eq!(ds.feature_names(), &["f1".to_string(), "f2".to_string()]);
    }

    #[test]
    fn empty_cell_becomes_zero() {
        let ds = parse("label,fa1,fa2\n0.5,0.4,0.3\n-1.2,,0.2\n2,0.1,1e-1\n").unwrap();
        assert_eq!(ds.features()[[1, 0]], 0.0);
        assert_eq!(ds.features()[[2, 1]], 0.1);
        assert_eq!(ds.n_samples(), 3);
    }

    #[test]
    fn label_column_may_be_anywhere() {
        let ds = parse("a,label,b\n1,9,2\n").unwrap();
        assert_eq!(ds.labels(), &[9.0]);
        assert_eq!(ds.features().row(0).to_vec(), vec![1.0, 2.0]);
    }

    #[test]
    fn constant_columns_load() {
        let ds = parse("label,c\n1,5\n2,5\n3,5\n").unwrap();
        assert!(ds.features().iter().all(|&v| v == 5.0));
    }

    #[test]
    fn errors_carry_location() {
        match parse("label,f1,f2\n1,2,3\n4,x,6\n") {
            Err(ScrError::Ingest { row, column, .. }) => assert_eq!((row, column), (3, 2)),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse("f1,f2\n1,2\n"), Err(ScrError::Ingest { row: 1, .. })));
        assert!(matches!(parse(""), Err(ScrError::Ingest { row: 1, .. })));
        assert!(matches!(parse("label,f\n1,2\n3\n"), Err(ScrError::Ingest { row: 3, .. })));
        assert!(matches!(parse("label,f\n1,inf\n"), Err(ScrError::Ingest { row: 2, column: 2, .. })));
        assert!(parse("label,f\n").is_err());
    }
}
