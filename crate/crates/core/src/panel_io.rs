//! Small helpers shared by the derived-panel readers and writers.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    crate::market_data::create(path)?
        .write_all(text.as_bytes())
        .map_err(|e| Error::io(path, e))
}

/// All records of a CSV whose header must equal `columns`.
pub(crate) fn read_rows(path: &Path, columns: &[&str]) -> Result<Vec<csv::StringRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(std::io::BufReader::new(file));
    if reader.headers()?.iter().ne(columns.iter().copied()) {
        return Err(Error::Schema {
            file: path.display().to_string(),
            msg: format!("expected header {}", columns.join(",")),
        });
    }
    Ok(reader.records().collect::<std::result::Result<_, _>>()?)
}

pub(crate) fn field<T: std::str::FromStr>(path: &Path, row: usize, rec: &csv::StringRecord, i: usize) -> Result<T> {
    rec[i].parse().map_err(|_| Error::Parse {
        file: path.display().to_string(),
        row,
        msg: format!("cannot parse {:?} in column {}", &rec[i], i + 1),
    })
}
