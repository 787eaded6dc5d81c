use std::path::Path;

use crate::datagen::{Dataset, Split};
use crate::error::{PcnnError, Result};
use crate::numerics::{Matrix, Rng};

/// Which header columns hold inputs, targets and (optionally) part labels.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ColumnSpec {
    pub inputs: Vec<String>,
    pub targets: Vec<String>,
    pub part: Option<String>,
}

impl ColumnSpec {
    /// `x*` columns as inputs, `y*` as targets, `part` if present.
    pub fn auto(headers: &[String]) -> ColumnSpec {
        let is_indexed = |h: &str, p: char| {
            h.strip_prefix(p)
                .is_some_and(|rest| !rest.is_empty() && rest.chars().all(|c| c.is_ascii_digit()))
        };
        ColumnSpec {
            inputs: headers.iter().filter(|h| is_indexed(h, 'x')).cloned().collect(),
            targets: headers.iter().filter(|h| is_indexed(h, 'y')).cloned().collect(),
            part: headers.iter().find(|h| *h == "part").cloned(),
        }
    }
}

/// How rows are assigned to the test split.
#[derive(Clone, Debug, PartialEq)]
pub enum SplitSpec {
    /// Every row is training data.
    AllTrain,
    /// The final `k` rows are test rows (chronological hold-out).
    LastK(usize),
    /// A seeded uniformly random fraction of rows is test.
    RandomFraction { fraction: f64, seed: u64 },
    /// A column holding `train` / `test`.
    Column(String),
}

fn column_index(headers: &[String], name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| PcnnError::MissingColumn(name.to_string()))
}

/// Reads a CSV file with a one-line header.
///
/// Row numbers in errors count data rows from 1 (the header is not counted).
pub fn load_csv(path: impl AsRef<Path>, columns: &ColumnSpec, split: &SplitSpec) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| PcnnError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(file);
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();

    if columns.inputs.is_empty() || columns.targets.is_empty() {
        return Err(PcnnError::InvalidArgument(
            "at least one input and one target column are required".into(),
        ));
    }
    let in_idx = columns
        .inputs
        .iter()
        .map(|c| column_index(&headers, c))
        .collect::<Result<Vec<_>>>()?;
    let out_idx = columns
        .targets
        .iter()
        .map(|c| column_index(&headers, c))
        .collect::<Result<Vec<_>>>()?;
    let part_idx = columns.part.as_deref().map(|c| column_index(&headers, c)).transpose()?;
    let split_idx = match split {
        SplitSpec::Column(c) => Some(column_index(&headers, c)?),
        _ => None,
    };

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut parts = Vec::new();
    let mut tags = Vec::new();
    let mut n = 0usize;
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let cell = |j: usize| -> Result<f64> {
            let raw = record.get(j).unwrap_or("");
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| PcnnError::BadCell {
                    row,
                    column: headers[j].clone(),
                    value: raw.to_string(),
                })
        };
        for &j in &in_idx {
            xs.push(cell(j)?);
        }
        for &j in &out_idx {
            ys.push(cell(j)?);
        }
        if let Some(j) = part_idx {
            let v = cell(j)?;
            if v < 0.0 || v.fract() != 0.0 {
                return Err(PcnnError::BadCell {
                    row,
                    column: headers[j].clone(),
                    value: record.get(j).unwrap_or("").to_string(),
                });
            }
            parts.push(v as usize);
        }
        if let Some(j) = split_idx {
            let raw = record.get(j).unwrap_or("");
            tags.push(match raw {
                "train" => Split::Train,
                "test" => Split::Test,
                _ => {
                    return Err(PcnnError::BadCell {
                        row,
                        column: headers[j].clone(),
                        value: raw.to_string(),
                    })
                }
            });
        }
        n += 1;
    }
    if n == 0 {
        return Err(PcnnError::EmptyDataset);
    }
    let inputs = Matrix::from_vec(n, in_idx.len(), xs)?;
    let targets = Matrix::from_vec(n, out_idx.len(), ys)?;
    let mut data = Dataset::new(inputs, targets)?;
    if part_idx.is_some() {
        data = data.with_part_labels(parts)?;
    }
    match split {
        SplitSpec::AllTrain => Ok(data),
        SplitSpec::LastK(k) => data.split_last(*k),
        SplitSpec::RandomFraction { fraction, seed } => data.split_random(*fraction, &mut Rng::new(*seed)),
        SplitSpec::Column(_) => data.with_split(tags),
    }
}

/// Reads a file in the layout written by [`write_dataset_csv`]: `x*` inputs,
/// `y*` targets, optional `part` and `split` columns.
pub fn read_dataset_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| PcnnError::io(path, e))?;
    let mut reader = csv::Reader::from_reader(file);
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let columns = ColumnSpec::auto(&headers);
    let split = if headers.iter().any(|h| h == "split") {
        SplitSpec::Column("split".into())
    } else {
        SplitSpec::AllTrain
    };
    load_csv(path, &columns, &split)
}

/// Reads only the `x*` columns of a CSV file (targets may be absent).
pub fn read_inputs_csv(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| PcnnError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let columns = ColumnSpec::auto(&headers).inputs;
    if columns.is_empty() {
        return Err(PcnnError::MissingColumn("x0".into()));
    }
    let idx = columns
        .iter()
        .map(|c| column_index(&headers, c))
        .collect::<Result<Vec<_>>>()?;
    let mut values = Vec::new();
    let mut rows = 0;
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        for (&i, name) in idx.iter().zip(&columns) {
            let cell = record.get(i).unwrap_or("");
            let v: f64 = cell.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| PcnnError::BadCell {
                row: r + 1,
                column: name.clone(),
                value: cell.to_string(),
            })?;
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(PcnnError::EmptyDataset);
    }
    Matrix::from_vec(rows, idx.len(), values)
}

pub fn write_dataset_csv(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..data.input_dim()).map(|i| format!("x{i}")).collect();
    header.extend((0..data.target_dim()).map(|i| format!("y{i}")));
    if data.part_labels().is_some() {
        header.push("part".into());
    }
    header.push("split".into());
    w.write_record(&header)?;
    for i in 0..data.len() {
        let mut rec: Vec<String> = data.inputs().row(i).iter().map(|v| v.to_string()).collect();
        rec.extend(data.targets().row(i).iter().map(|v| v.to_string()));
        if let Some(p) = data.part_labels() {
            rec.push(p[i].to_string());
        }
        rec.push(data.split_tags()[i].as_str().to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| PcnnError::io(path, e))?;
    Ok(())
}
