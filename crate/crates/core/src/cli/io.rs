//! CSV ingestion and atomic output.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// A headed CSV table held as strings, with column lookup by name.
#[derive(Debug, Clone)]
pub struct Table {
    path: PathBuf,
    headers: HashMap<String, usize>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self> {
        let csv_err = |source| Error::Csv {
            path: path.to_path_buf(),
            source,
        };
        let file = fs::File::open(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(file);
        let headers = reader
            .headers()
            .map_err(csv_err)?
            .iter()
            .enumerate()
            .map(|(i, h)| (h.to_string(), i))
            .collect();
        let rows = reader
            .records()
            .map(|r| r.map(|rec| rec.iter().map(str::to_string).collect()))
            .collect::<std::result::Result<_, _>>()
            .map_err(csv_err)?;
        Ok(Self {
            path: path.to_path_buf(),
            headers,
            rows,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn has(&self, column: &str) -> bool {
        self.headers.contains_key(column)
    }

    fn index(&self, column: &str) -> Result<usize> {
        self.headers
            .get(column)
            .copied()
            .ok_or_else(|| Error::MissingColumn(format!("{column}` in `{}", self.path.display())))
    }

    pub fn strings(&self, column: &str) -> Result<Vec<String>> {
        let i = self.index(column)?;
        Ok(self.rows.iter().map(|r| r.get(i).cloned().unwrap_or_default()).collect())
    }

    /// Finite reals; every cell must be present.
    pub fn reals(&self, column: &str) -> Result<Vec<f64>> {
        self.optional_reals(column)?
            .into_iter()
            .enumerate()
            .map(|(row, v)| {
                v.ok_or_else(|| Error::Row {
                    row: row + 1,
                    column: column.to_string(),
                    message: "empty cell".into(),
                })
            })
            .collect()
    }

    /// Finite reals; empty cells read as `None`. Rows are numbered from 1,
    /// not counting the header.
    pub fn optional_reals(&self, column: &str) -> Result<Vec<Option<f64>>> {
        let i = self.index(column)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(row, r)| {
                let cell = r.get(i).map(String::as_str).unwrap_or("");
                if cell.is_empty() {
                    return Ok(None);
                }
                let err = |message: String| Error::Row {
                    row: row + 1,
                    column: column.to_string(),
                    message,
                };
                let v: f64 = cell.parse().map_err(|_| err(format!("`{cell}` is not a number")))?;
                if v.is_finite() {
                    Ok(Some(v))
                } else {
                    Err(err(format!("non-finite value `{cell}`")))
                }
            })
            .collect()
    }

    pub fn booleans(&self, column: &str) -> Result<Vec<bool>> {
        let i = self.index(column)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(row, r)| match r.get(i).map(|s| s.to_ascii_lowercase()).as_deref() {
                Some("1" | "true") => Ok(true),
                Some("0" | "false") => Ok(false),
                other => Err(Error::Row {
                    row: row + 1,
                    column: column.to_string(),
                    message: format!("expected 0/1/true/false, got `{}`", other.unwrap_or("")),
                }),
            })
            .collect()
    }
}

/// Write `bytes` to `path` through a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut tmp_name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, bytes).map_err(io_err)?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        io_err(e)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn table(text: &str) -> (tempfile::NamedTempFile, Table) {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        let t = Table::read(f.path()).unwrap();
        (f, t)
    }

    #[test]
    fn reads_named_columns() {
        let (_f, t) = table("a,b\n1.5,x\n-2,y\n");
        assert_eq!(t.len(), 2);
        assert_eq!(t.reals("a").unwrap(), vec![1.5, -2.0]);
        assert_eq!(t.strings("b").unwrap(), vec!["x", "y"]);
        assert!(matches!(t.reals("zz"), Err(Error::MissingColumn(_))));
    }

    #[test]
    fn non_finite_cells_name_row_and_column() {
        let (_f, t) = table("mu\n0.1\nNaN\n");
        let err = t.reals("mu").unwrap_err().to_string();
        assert!(err.contains("row 2") && err.contains("`mu`"), "{err}");
        let (_f, t) = table("mu\n0.1\nabc\n");
        assert!(t.reals("mu").is_err());
        let (_f, t) = table("mu,tag\n,a\n1,b\n");
        assert_eq!(t.optional_reals("mu").unwrap(), vec![None, Some(1.0)]);
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.json");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
