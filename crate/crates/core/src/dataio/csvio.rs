use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::ndcore::Matrix;

/// Which header columns hold the label, record id, subgroup tag and features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsvSchema {
    pub label: String,
    pub id: Option<String>,
    pub group: Option<String>,
    /// Feature columns in order; `None` takes every other column.
    pub features: Option<Vec<String>>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            label: "label".into(),
            id: Some("record_id".into()),
            group: Some("group".into()),
            features: None,
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset> {
    let file = std::fs::File::open(path.as_ref())?;
    read_csv(file, schema)
}

/// Parses comma-separated UTF-8 with a header row. Empty feature cells are
/// flagged as missing; labels must be 0 or 1.
pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let label_col = find(&schema.label)?;
    let id_col = schema.id.as_deref().map(find).transpose()?;
    let group_col = schema.group.as_deref().map(find).transpose()?;
    let feature_cols: Vec<usize> = match &schema.features {
        Some(names) => names.iter().map(|n| find(n)).collect::<Result<_>>()?,
        None => (0..header.len())
            .filter(|&c| c != label_col && Some(c) != id_col && Some(c) != group_col)
            .collect(),
    };
    let names: Vec<String> = feature_cols.iter().map(|&c| header[c].clone()).collect();

    let (mut data, mut mask, mut labels, mut ids, mut groups) = (vec![], vec![], vec![], vec![], vec![]);
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let line = record.position().map_or(row as u64 + 2, |p| p.line());
        let cell = |c: usize| record.get(c).unwrap_or("").trim();
        if record.len() != header.len() {
            return Err(Error::CsvLine {
                line,
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        let label: f64 = cell(label_col).parse().map_err(|_| Error::CsvLine {
            line,
            message: format!("label `{}` is not a number", cell(label_col)),
        })?;
        labels.push(match label {
            0.0 => 0u8,
            1.0 => 1u8,
            other => return Err(Error::NonBinaryLabel(other)),
        });
        for &c in &feature_cols {
            let raw = cell(c);
            if raw.is_empty() {
                data.push(0.0);
                mask.push(true);
                continue;
            }
            let v: f64 = raw.parse().map_err(|_| Error::CsvLine {
                line,
                message: format!("column `{}`: `{raw}` is not a number", header[c]),
            })?;
            if !v.is_finite() {
                return Err(Error::CsvLine {
                    line,
                    message: format!("column `{}`: non-finite value", header[c]),
                });
            }
            data.push(v);
            mask.push(false);
        }
        ids.push(id_col.map_or_else(|| row.to_string(), |c| cell(c).to_string()));
        groups.push(group_col.map_or_else(String::new, |c| cell(c).to_string()));
    }
    let n = labels.len();
    Dataset::new(Matrix::new(n, names.len(), data)?, labels, names, ids, groups)?.with_missing(mask)
}

/// Writes `record_id,group,<features>,label`. Missing cells are left empty.
pub fn write_csv_to<W: Write>(dataset: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["record_id".to_string(), "group".to_string()];
    header.extend(dataset.feature_names.iter().cloned());
    header.push("label".into());
    w.write_record(&header)?;
    for i in 0..dataset.len() {
        let mut row = vec![dataset.ids[i].clone(), dataset.groups[i].clone()];
        row.extend((0..dataset.n_features()).map(|j| dataset.value(i, j).map_or_else(String::new, |v| v.to_string())));
        row.push(dataset.labels[i].to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path.as_ref())?;
    write_csv_to(dataset, std::io::BufWriter::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{generate_synthetic, SyntheticSpec};

    #[test]
    fn round_trip_is_exact() {
        let spec = SyntheticSpec {
            n_train: 50,
            n_test: 0,
            n_ood: 0,
            missing_rate: 0.1,
            ..SyntheticSpec::default()
        };
        let original = generate_synthetic(&spec).unwrap().train;
        assert!(original.has_missing());
        let mut buf = Vec::new();
        write_csv_to(&original, &mut buf).unwrap();
        let back = read_csv(buf.as_slice(), &CsvSchema::default()).unwrap();
        assert_eq!(back, original);
    }

    #[test]
    fn missing_cell_is_flagged() {
        let text = "record_id,group,a,b,label\nx,g,1.5,,1\ny,g,2.5,3,0\n";
        let d = read_csv(text.as_bytes(), &CsvSchema::default()).unwrap();
        assert!(d.is_missing(0, 1));
        assert_eq!(d.value(0, 1), None);
        assert_eq!(d.value(1, 1), Some(3.0));
        assert_eq!(d.missing_count(), 1);
    }

    #[test]
    fn schema_mismatch_names_the_column() {
        let text = "record_id,group,a,outcome\nx,g,1,1\n";
        let err = read_csv(text.as_bytes(), &CsvSchema::default()).unwrap_err();
        assert!(matches!(&err, Error::MissingColumn(c) if c == "label"), "{err}");
        let schema = CsvSchema {
            label: "outcome".into(),
            features: Some(vec!["a".into(), "pulse".into()]),
            ..CsvSchema::default()
        };
        let err = read_csv(text.as_bytes(), &schema).unwrap_err();
        assert!(err.to_string().contains("pulse"));
    }

    #[test]
    fn malformed_rows_report_line_numbers() {
        let text = "record_id,group,a,label\nx,g,1,0\ny,g,abc,1\n";
        match read_csv(text.as_bytes(), &CsvSchema::default()).unwrap_err() {
            Error::CsvLine { line, message } => {
                assert_eq!(line, 3);
                assert!(message.contains("abc"));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn non_binary_label_is_rejected() {
        let text = "record_id,group,a,label\nx,g,1,2\n";
        assert!(matches!(
            read_csv(text.as_bytes(), &CsvSchema::default()),
            Err(Error::NonBinaryLabel(v)) if v == 2.0
        ));
    }

    #[test]
    fn schema_without_ids_numbers_rows() {
        let text = "a,b,label\n1,2,0\n3,4,1\n";
        let schema = CsvSchema {
            id: None,
            group: None,
            ..CsvSchema::default()
        };
        let d = read_csv(text.as_bytes(), &schema).unwrap();
        assert_eq!(d.ids, vec!["0", "1"]);
        assert_eq!(d.feature_names, vec!["a", "b"]);
    }
}
