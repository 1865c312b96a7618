//! Columnar datasets and their CSV layout.

use std::io::{Read, Write};

use thiserror::Error;

/// Canonical column names.
pub mod col {
    pub const X: &str = "X";
    pub const XEP: &str = "Xep";
    pub const C: &str = "C";
    pub const CEP: &str = "Cep";
    pub const V: &str = "V";
    pub const VEP: &str = "Vep";
    pub const Y: &str = "Y";
    pub const X_RC: &str = "X_RC";
    pub const C_RC: &str = "C_RC";
    pub const V_RC: &str = "V_RC";

    /// Order of the standard columns in CSV output.
    pub const STANDARD: [&str; 7] = [X, XEP, C, CEP, V, VEP, Y];
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("column `{name}` has {found} rows, expected {expected}")]
    LengthMismatch {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("column `{column}` row {row}: non-finite value")]
    NonFinite { column: String, row: usize },
    #[error("duplicate column `{0}`")]
    DuplicateColumn(String),
    #[error("row {row}, column `{column}`: cannot parse `{value}` as a number")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },
    #[error("{0}")]
    Schema(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Where a generated dataset came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub scenario: String,
    pub replication: u64,
    pub seed: u64,
}

/// Named real columns of equal length.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    columns: Vec<(String, Vec<f64>)>,
    n: usize,
    pub provenance: Option<Provenance>,
}

impl Dataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    /// Adds a column. The first column fixes the row count.
    pub fn insert(&mut self, name: &str, values: Vec<f64>) -> Result<(), DataError> {
        if self.has(name) {
            return Err(DataError::DuplicateColumn(name.to_string()));
        }
        if !self.columns.is_empty() && values.len() != self.n {
            return Err(DataError::LengthMismatch {
                name: name.to_string(),
                expected: self.n,
                found: values.len(),
            });
        }
        if let Some(row) = values.iter().position(|v| !v.is_finite()) {
            return Err(DataError::NonFinite {
                column: name.to_string(),
                row,
            });
        }
        if self.columns.is_empty() {
            self.n = values.len();
        }
        self.columns.push((name.to_string(), values));
        Ok(())
    }

    /// Builder form of [`Dataset::insert`].
    pub fn with(mut self, name: &str, values: Vec<f64>) -> Result<Self, DataError> {
        self.insert(name, values)?;
        Ok(self)
    }

    /// Replaces an existing column or adds a new one.
    pub fn set(&mut self, name: &str, values: Vec<f64>) -> Result<(), DataError> {
        if let Some(i) = self.columns.iter().position(|(c, _)| c == name) {
            let old = self.columns.remove(i);
            if let Err(e) = self.insert(name, values) {
                self.columns.insert(i, old);
                return Err(e);
            }
            let new = self.columns.pop().expect("just inserted");
            self.columns.insert(i, new);
            Ok(())
        } else {
            self.insert(name, values)
        }
    }

    pub fn has(&self, name: &str) -> bool {
        self.columns.iter().any(|(c, _)| c == name)
    }

    pub fn column(&self, name: &str) -> Result<&[f64], DataError> {
        self.columns
            .iter()
            .find(|(c, _)| c == name)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|(c, _)| c.as_str())
    }

    /// Rows `0..k` of every column.
    pub fn head(&self, k: usize) -> Dataset {
        let k = k.min(self.n);
        Dataset {
            columns: self
                .columns
                .iter()
                .map(|(c, v)| (c.clone(), v[..k].to_vec()))
                .collect(),
            n: k,
            provenance: self.provenance.clone(),
        }
    }

    /// Column names in output order: the standard columns first, then the rest
    /// in insertion order.
    fn output_order(&self) -> Vec<&str> {
        let mut order: Vec<&str> = col::STANDARD
            .iter()
            .copied()
            .filter(|c| self.has(c))
            .collect();
        order.extend(self.names().filter(|c| !col::STANDARD.contains(c)));
        order
    }

    /// Writes the dataset as CSV with full round-trip precision.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DataError> {
        let order = self.output_order();
        let cols: Vec<&[f64]> = order
            .iter()
            .map(|c| self.column(c).expect("listed"))
            .collect();
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&order)?;
        let mut record = Vec::with_capacity(cols.len());
        for i in 0..self.n {
            record.clear();
            record.extend(cols.iter().map(|c| c[i].to_string()));
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Dataset, DataError> {
        let mut r = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if headers.is_empty() {
            return Err(DataError::Schema("CSV has no header".into()));
        }
        let mut values: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
        for (row, record) in r.records().enumerate() {
            let record = record?;
            for (j, field) in record.iter().enumerate() {
                let v: f64 = field.parse().map_err(|_| DataError::Parse {
                    row: row + 1,
                    column: headers[j].clone(),
                    value: field.to_string(),
                })?;
                values[j].push(v);
            }
        }
        let mut d = Dataset::new();
        for (name, v) in headers.iter().zip(values) {
            d.insert(name, v)?;
        }
        Ok(d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_keeps_precision_and_order() {
        let d = Dataset::new()
            .with("Y", vec![0.1, 1.0 / 3.0])
            .unwrap()
            .with("extra", vec![1e-300, -2.5])
            .unwrap()
            .with("X", vec![8.0, 9.0])
            .unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("X,Y,extra\n"));
        let back = Dataset::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.column("Y").unwrap(), d.column("Y").unwrap());
        assert_eq!(back.column("extra").unwrap(), d.column("extra").unwrap());
    }

    #[test]
    fn rejects_ragged_and_non_finite_columns() {
        let mut d = Dataset::new().with("X", vec![1.0, 2.0]).unwrap();
        assert!(matches!(
            d.insert("Y", vec![1.0]),
            Err(DataError::LengthMismatch { .. })
        ));
        assert!(matches!(
            d.insert("Y", vec![1.0, f64::NAN]),
            Err(DataError::NonFinite { row: 1, .. })
        ));
        assert!(matches!(
            d.insert("X", vec![1.0, 2.0]),
            Err(DataError::DuplicateColumn(_))
        ));
    }

    #[test]
    fn missing_column_names_itself() {
        let d = Dataset::new().with("X", vec![1.0]).unwrap();
        let e = d.column("Xep").unwrap_err();
        assert_eq!(e.to_string(), "missing column `Xep`");
    }

    #[test]
    fn parse_errors_point_at_the_cell() {
        let e = Dataset::read_csv("X,Y\n1,2\n3,abc\n".as_bytes()).unwrap_err();
        assert!(matches!(e, DataError::Parse { row: 2, .. }), "{e}");
    }

    #[test]
    fn set_replaces_in_place() {
        let mut d = Dataset::new()
            .with("A", vec![1.0])
            .unwrap()
            .with("B", vec![2.0])
            .unwrap();
        d.set("A", vec![5.0]).unwrap();
        assert_eq!(d.names().collect::<Vec<_>>(), ["A", "B"]);
        assert_eq!(d.column("A").unwrap(), [5.0]);
    }
}
