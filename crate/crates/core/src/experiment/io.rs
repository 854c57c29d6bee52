use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Grid, PeriodicField};

/// First 16 bytes of every binary field file.
pub const FIELD_MAGIC: &[u8; 16] = b"MFGLAB-FIELD-V1\0";
const HEADER_LEN: usize = 16 + 3 * 8;

/// Writes `bytes` to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("{} has no file name", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn encode_field(field: &PeriodicField) -> Vec<u8> {
    let grid = field.grid();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * grid.len());
    out.extend_from_slice(FIELD_MAGIC);
    for v in [grid.dim(), grid.n(), grid.len()] {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    for v in field.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn read_u64(bytes: &[u8], offset: usize) -> u64 {
    u64::from_le_bytes(bytes[offset..offset + 8].try_into().expect("8 bytes"))
}

pub fn decode_field(bytes: &[u8]) -> Result<PeriodicField> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "truncated field file: header needs {HEADER_LEN} bytes, found {} (missing {} bytes)",
            bytes.len(),
            HEADER_LEN - bytes.len()
        )));
    }
    if &bytes[..16] != FIELD_MAGIC {
        return Err(Error::Format("bad magic at offset 0: not a field file".into()));
    }
    let (dim, n, count) = (read_u64(bytes, 16), read_u64(bytes, 24), read_u64(bytes, 32));
    let grid = Grid::new(dim as usize, n as usize)
        .map_err(|e| Error::Format(format!("bad header at offset 16: {e}")))?;
    if count != grid.len() as u64 {
        return Err(Error::Format(format!(
            "bad header at offset 32: count {count} does not match {dim}-D grid with n = {n}"
        )));
    }
    let need = HEADER_LEN + 8 * grid.len();
    if bytes.len() < need {
        return Err(Error::Format(format!(
            "truncated field file: expected {need} bytes, found {} (missing {} bytes)",
            bytes.len(),
            need - bytes.len()
        )));
    }
    if bytes.len() > need {
        return Err(Error::Format(format!("trailing data at offset {need}: {} extra bytes", bytes.len() - need)));
    }
    let values = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    PeriodicField::new(grid, values)
}

pub fn save_field(field: &PeriodicField, path: &Path) -> Result<()> {
    write_atomic(path, &encode_field(field))
}

pub fn load_field(path: &Path) -> Result<PeriodicField> {
    decode_field(&fs::read(path)?)
}

/// Loads a field for a run on a `dim`-dimensional grid.
pub fn load_field_expecting(path: &Path, dim: usize) -> Result<PeriodicField> {
    let f = load_field(path)?;
    if f.grid().dim() != dim {
        return Err(Error::Validation(format!(
            "{} holds a {}-D field, run expects {dim}-D",
            path.display(),
            f.grid().dim()
        )));
    }
    Ok(f)
}

/// Text form: a `# d n` comment line, then `index,x,y,value` rows.
pub fn save_field_csv(field: &PeriodicField, path: &Path) -> Result<()> {
    let grid = field.grid();
    let mut buf = format!("# {} {}\n", grid.dim(), grid.n()).into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(["index", "x", "y", "value"]).map_err(csv_error)?;
        for (i, v) in field.values().iter().enumerate() {
            let c = grid.coords(i);
            w.write_record([i.to_string(), c[0].to_string(), c[1].to_string(), v.to_string()])
                .map_err(csv_error)?;
        }
        w.flush()?;
    }
    write_atomic(path, &buf)
}

fn csv_error(e: csv::Error) -> Error {
    match e.position() {
        Some(p) => Error::Format(format!("csv line {}: {e}", p.line())),
        None => Error::Format(format!("csv: {e}")),
    }
}

pub fn load_field_csv(path: &Path) -> Result<PeriodicField> {
    let text = fs::read_to_string(path)?;
    let (first, rest) = text.split_once('\n').unwrap_or((&text, ""));
    let dims: Vec<usize> = first
        .trim_start_matches('#')
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::Format(format!("line 1: bad header {first:?}"))))
        .collect::<Result<_>>()?;
    let [dim, n] = dims[..] else {
        return Err(Error::Format(format!("line 1: header needs `# d n`, got {first:?}")));
    };
    let grid = Grid::new(dim, n).map_err(|e| Error::Format(format!("line 1: {e}")))?;
    let mut values = vec![f64::NAN; grid.len()];
    let mut seen = 0;
    let mut r = csv::Reader::from_reader(rest.as_bytes());
    for (row, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_error)?;
        let line = row + 3;
        let parse = |k: usize| -> Result<&str> {
            rec.get(k).ok_or_else(|| Error::Format(format!("line {line}: missing column {k}")))
        };
        let idx: usize = parse(0)?.parse().map_err(|_| Error::Format(format!("line {line}: bad index")))?;
        let v: f64 = parse(3)?.parse().map_err(|_| Error::Format(format!("line {line}: bad value")))?;
        if idx >= grid.len() {
            return Err(Error::Format(format!("line {line}: index {idx} out of range")));
        }
        values[idx] = v;
        seen += 1;
    }
    if seen != grid.len() {
        return Err(Error::Format(format!("expected {} rows, found {seen}", grid.len())));
    }
    PeriodicField::new(grid, values)
}
