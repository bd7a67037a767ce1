//! CSV and binary dataset files.
//!
//! CSV: a header `label,f0,f1,...,f{p-1}`, then one trial per row with the
//! label (`1` or `-1`) first. Values are written with Rust's shortest
//! round-tripping `f64` formatting.
//!
//! Binary (all little-endian):
//!
//! ```text
//! magic   b"IMSD"
//! version u32 = 1
//! n, p    u64, u64
//! c, t    u64, u64      (both 0 when there is no channel x time layout)
//! labels  n x i8
//! x       n*p x f64     row-major
//! ```

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use super::{Dataset, Layout};
use crate::error::{Error, Result};

pub const BINARY_MAGIC: &[u8; 4] = b"IMSD";
pub const BINARY_VERSION: u32 = 1;
const HEADER_LEN: u64 = 4 + 4 + 8 * 4;

fn dataset_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

pub fn save_csv(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    let mut header = String::from("label");
    for j in 0..d.p() {
        header.push_str(&format!(",f{j}"));
    }
    writeln!(w, "{header}").map_err(io)?;
    let mut line = String::new();
    for i in 0..d.n() {
        line.clear();
        line.push_str(&d.y()[i].to_string());
        for j in 0..d.p() {
            line.push(',');
            line.push_str(&d.x()[(i, j)].to_string());
        }
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.is_empty() || header.get(0) == Some("") {
        return Err(Error::Parse {
            line: 1,
            message: "missing header row".into(),
        });
    }
    if header.get(0) != Some("label") {
        return Err(Error::Parse {
            line: 1,
            message: format!("first column must be `label`, found {:?}", &header[0]),
        });
    }
    let p = header.len() - 1;
    let mut labels = Vec::new();
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |pos| pos.line());
        if record.len() != p + 1 {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", p + 1, record.len()),
            });
        }
        let label = match &record[0] {
            "1" | "+1" | "1.0" => 1i8,
            "-1" | "-1.0" => -1i8,
            other => {
                return Err(Error::Label {
                    line,
                    label: other.to_string(),
                })
            }
        };
        labels.push(label);
        for field in record.iter().skip(1) {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line,
                message: format!("not a number: {field:?}"),
            })?;
            values.push(v);
        }
    }
    if labels.is_empty() {
        return Err(Error::Parse {
            line: 2,
            message: "no data rows".into(),
        });
    }
    let x = DMatrix::from_row_slice(labels.len(), p, &values);
    Dataset::new(x, labels, None, dataset_name(path))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(1, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        kind => Error::Parse {
            line,
            message: format!("{kind:?}"),
        },
    }
}

pub fn save_binary(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    let (c, t) = d
        .layout()
        .map_or((0, 0), |l| (l.channels as u64, l.timepoints as u64));
    w.write_all(BINARY_MAGIC).map_err(io)?;
    w.write_all(&BINARY_VERSION.to_le_bytes()).map_err(io)?;
    for v in [d.n() as u64, d.p() as u64, c, t] {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    for &l in d.y() {
        w.write_all(&l.to_le_bytes()).map_err(io)?;
    }
    for i in 0..d.n() {
        for j in 0..d.p() {
            w.write_all(&d.x()[(i, j)].to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

pub fn load_binary(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let actual = bytes.len() as u64;
    if actual < 4 || &bytes[..4] != BINARY_MAGIC {
        return Err(Error::MagicMismatch);
    }
    if actual < HEADER_LEN {
        return Err(Error::TruncatedFile {
            expected: HEADER_LEN,
            actual,
        });
    }
    let u64_at = |off: usize| u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != BINARY_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let (n, p, c, t) = (u64_at(8), u64_at(16), u64_at(24), u64_at(32));
    let expected = n
        .checked_mul(p)
        .and_then(|np| np.checked_mul(8))
        .and_then(|b| b.checked_add(n))
        .and_then(|b| b.checked_add(HEADER_LEN))
        .ok_or(Error::TruncatedFile {
            expected: u64::MAX,
            actual,
        })?;
    if actual < expected {
        return Err(Error::TruncatedFile { expected, actual });
    }
    let (n, p) = (n as usize, p as usize);
    let body = &bytes[HEADER_LEN as usize..];
    let labels: Vec<i8> = body[..n].iter().map(|&b| b as i8).collect();
    if let Some((i, l)) = labels.iter().enumerate().find(|(_, &l)| l != 1 && l != -1) {
        return Err(Error::Label {
            line: i as u64,
            label: l.to_string(),
        });
    }
    let values: Vec<f64> = body[n..n + n * p * 8]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let layout = (c > 0 || t > 0).then_some(Layout {
        channels: c as usize,
        timepoints: t as usize,
    });
    let x = DMatrix::from_row_slice(n, p, &values);
    Dataset::new(x, labels, layout, dataset_name(path))
}
