//! Report serialization: CSV curves, JSON summaries, plain-text tables.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::lab::ReportRow;

#[derive(Debug, thiserror::Error)]
pub enum WriteError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot serialize {path}: {msg}")]
    Encode { path: String, msg: String },
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> WriteError + '_ {
    move |source| WriteError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn ensure_dir(dir: &Path) -> Result<(), WriteError> {
    fs::create_dir_all(dir).map_err(io(dir))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), WriteError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| WriteError::Encode {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    text.push('\n');
    fs::write(path, text).map_err(io(path))
}

/// Rows with header `n,theorem,test_id,param,sup_error,hypothesis_ok`.
pub fn write_rows(path: &Path, rows: &[ReportRow]) -> Result<(), WriteError> {
    write_csv(path, rows)
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), WriteError> {
    let encode = |e: csv::Error| WriteError::Encode {
        path: path.display().to_string(),
        msg: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(encode)?;
    for r in rows {
        w.serialize(r).map_err(encode)?;
    }
    w.flush().map_err(io(path))
}

/// Left-aligned fixed-width table.
pub fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = Vec::new();
    let line = |out: &mut Vec<u8>, cells: &[String]| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        writeln!(out, "{}", parts.join("  ").trim_end()).expect("write to memory");
    };
    line(
        &mut out,
        &header.iter().map(|h| h.to_string()).collect::<Vec<_>>(),
    );
    for r in rows {
        line(&mut out, r);
    }
    String::from_utf8(out).expect("utf-8 table")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_header_and_nan() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.csv");
        let rows = vec![ReportRow {
            n: 2,
            theorem: "potential".into(),
            test_id: "one".into(),
            param: "G".into(),
            sup_error: f64::NAN,
            hypothesis_ok: false,
        }];
        write_rows(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "n,theorem,test_id,param,sup_error,hypothesis_ok\n2,potential,one,G,NaN,false\n"
        );
    }

    #[test]
    fn table_alignment() {
        let t = table(&["a", "bb"], &[vec!["xyz".into(), "1".into()]]);
        assert_eq!(t, "a    bb\nxyz  1\n");
    }
}
