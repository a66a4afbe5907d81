//! Stream generators, experiment harness and CSV output.

pub mod experiments;
pub mod streams;

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// First line of every CSV file written here.
pub const SCHEMA_LINE: &str = "# contmech-v1";

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "CONTMECH_OUT_DIR";

/// `explicit`, else `$CONTMECH_OUT_DIR`, else `./out`.
pub fn out_dir(explicit: Option<&Path>) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

/// Write the schema line, a header row and one row per record.
pub fn write_csv<W: Write, T: Serialize>(mut w: W, rows: &[T]) -> Result<()> {
    writeln!(w, "{SCHEMA_LINE}")?;
    let mut cw = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w);
    for row in rows {
        cw.serialize(row)?;
    }
    cw.flush()?;
    Ok(())
}

/// Schema line, then a free-form header and rows.
pub fn write_table<W: Write>(mut w: W, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    writeln!(w, "{SCHEMA_LINE}")?;
    let mut cw = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w);
    cw.write_record(header)?;
    for row in rows {
        cw.write_record(row)?;
    }
    cw.flush()?;
    Ok(())
}

pub fn write_csv_file<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_csv(f, rows)
}

/// Read rows back, insisting on the schema line.
pub fn read_csv<R: BufRead, T: DeserializeOwned>(mut r: R) -> Result<Vec<T>> {
    let mut first = String::new();
    r.read_line(&mut first)?;
    if first.trim_end() != SCHEMA_LINE {
        return Err(Error::Usage(format!(
            "expected `{SCHEMA_LINE}` as the first line, found `{}`",
            first.trim_end()
        )));
    }
    let mut cr = csv::Reader::from_reader(r);
    cr.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}
