//! File formats: numeric CSV with `#` metadata lines, and a raw binary array
//! with a fixed 32-byte header.
//!
//! Binary header layout (little endian):
//! `b"OXAR"` magic, `u8` dtype tag (1 = f64), `u8` rank (1..=3), two zero
//! bytes, then three `u64` extents (unused extents are 1).

use crate::error::{Error, Result};
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"OXAR";
pub const DTYPE_F64: u8 = 1;
pub const HEADER_LEN: usize = 32;

/// Writes `# key: value` lines, a header row, then numeric rows.
pub fn write_csv<P: AsRef<Path>>(
    path: P,
    meta: &[(String, String)],
    header: &[&str],
    rows: &[Vec<f64>],
) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    for (k, v) in meta {
        writeln!(f, "# {k}: {v}")?;
    }
    let mut w = csv::Writer::from_writer(f);
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        if r.len() != header.len() {
            return Err(Error::Domain(format!("row has {} fields, header has {}", r.len(), header.len())));
        }
        w.write_record(r.iter().map(|v| format_f64(*v))).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Shortest representation that round-trips exactly.
pub fn format_f64(v: f64) -> String {
    format!("{v:?}")
}

fn csv_err(e: csv::Error) -> Error {
    Error::Schema(format!("csv: {e}"))
}

/// Numeric CSV contents.
#[derive(Debug, Clone)]
pub struct Table {
    pub header: Vec<String>,
    pub meta: Vec<(String, String)>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let i = self
            .header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))?;
        Ok(self.rows.iter().map(|r| r[i]).collect())
    }
}

pub fn read_csv<P: AsRef<Path>>(path: P) -> Result<Table> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    let meta = text
        .lines()
        .filter_map(|l| l.strip_prefix("# "))
        .filter_map(|l| l.split_once(": "))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(|s| s.trim().to_string()).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let row = rec
            .iter()
            .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Schema(format!("bad number `{s}`: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(Table { header, meta, rows })
}

pub fn write_array<P: AsRef<Path>>(path: P, dims: &[usize], data: &[f64]) -> Result<()> {
    if dims.is_empty() || dims.len() > 3 {
        return Err(Error::Domain(format!("array rank must be 1..=3, got {}", dims.len())));
    }
    if dims.iter().product::<usize>() != data.len() {
        return Err(Error::Domain("array extents do not match data length".into()));
    }
    let mut h = [0u8; HEADER_LEN];
    h[..4].copy_from_slice(MAGIC);
    h[4] = DTYPE_F64;
    h[5] = dims.len() as u8;
    for i in 0..3 {
        let e = dims.get(i).copied().unwrap_or(1) as u64;
        h[8 + 8 * i..16 + 8 * i].copy_from_slice(&e.to_le_bytes());
    }
    let mut f = BufWriter::new(File::create(path)?);
    f.write_all(&h)?;
    for v in data {
        f.write_all(&v.to_le_bytes())?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_array<P: AsRef<Path>>(path: P) -> Result<(Vec<usize>, Vec<f64>)> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(Error::Schema("not an array file (bad magic)".into()));
    }
    if bytes[4] != DTYPE_F64 {
        return Err(Error::Schema(format!("unsupported dtype tag {}", bytes[4])));
    }
    let rank = bytes[5] as usize;
    if !(1..=3).contains(&rank) {
        return Err(Error::Schema(format!("bad rank {rank}")));
    }
    let dims: Vec<usize> = (0..rank)
        .map(|i| u64::from_le_bytes(bytes[8 + 8 * i..16 + 8 * i].try_into().expect("8 bytes")) as usize)
        .collect();
    let n: usize = dims.iter().product();
    if bytes.len() != HEADER_LEN + 8 * n {
        return Err(Error::Schema("array payload length does not match header".into()));
    }
    let data = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((dims, data))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn array_round_trip() {
        let dir = std::env::temp_dir().join(format!("oxar-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("a.bin");
        let data: Vec<f64> = (0..12).map(|i| i as f64 * 0.5 - 1.0).collect();
        write_array(&p, &[3, 4], &data).unwrap();
        assert_eq!(std::fs::metadata(&p).unwrap().len(), 32 + 96);
        let (d, v) = read_array(&p).unwrap();
        assert_eq!(d, vec![3, 4]);
        assert_eq!(v, data);
        let q = dir.join("t.csv");
        write_csv(&q, &[("z".into(), "2".into())], &["tau", "value"], &[vec![0.1, 1.0 / 3.0]]).unwrap();
        let t = read_csv(&q).unwrap();
        assert_eq!(t.meta[0].1, "2");
        assert_eq!(t.column("value").unwrap()[0], 1.0 / 3.0);
        std::fs::remove_dir_all(dir).ok();
    }
}
