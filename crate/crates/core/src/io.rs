//! File formats: sparse COO text, a little-endian dense binary container,
//! per-mode feature/label text files and the subject-partition grammar.
//!
//! All indices in text files are 1-based.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{DcotError, Result};
use crate::model::{FixedIndex, SliceGroup, SubjectPartition};
use crate::observation::ObservationSet;
use crate::tensor::{DenseMatrix, DenseTensor, Shape};

const DENSE_MAGIC: &[u8; 4] = b"DCOT";
const DENSE_VERSION: u32 = 1;

fn parse_err(line: usize, message: impl Into<String>) -> DcotError {
    DcotError::Parse { line, message: message.into() }
}

/// Reads `i_1 … i_N value` lines. A `# dims: I_1 … I_N` header fixes the
/// shape; without one the shape is the per-mode maximum index. Other `#`
/// lines and blank lines are ignored.
pub fn read_coo(reader: impl Read) -> Result<ObservationSet> {
    let mut dims: Option<Vec<usize>> = None;
    let mut entries: Vec<(Vec<usize>, f64, usize)> = Vec::new();
    let mut order: Option<usize> = None;
    for (k, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let lineno = k + 1;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        if let Some(comment) = text.strip_prefix('#') {
            if let Some(rest) = comment.trim().strip_prefix("dims:") {
                let d = rest
                    .split_whitespace()
                    .map(|t| t.parse::<usize>().map_err(|e| parse_err(lineno, format!("bad dimension {t:?}: {e}"))))
                    .collect::<Result<Vec<_>>>()?;
                if dims.replace(d).is_some() {
                    return Err(parse_err(lineno, "repeated dims header"));
                }
            }
            continue;
        }
        let fields: Vec<&str> = text.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()).collect();
        if fields.len() < 2 {
            return Err(parse_err(lineno, "expected indices followed by a value"));
        }
        let n = fields.len() - 1;
        match order {
            None => order = Some(n),
            Some(o) if o != n => return Err(parse_err(lineno, format!("{n} indices, earlier lines had {o}"))),
            _ => {}
        }
        let idx = fields[..n]
            .iter()
            .map(|t| match t.parse::<usize>() {
                Ok(0) => Err(parse_err(lineno, "indices are 1-based; found 0")),
                Ok(i) => Ok(i - 1),
                Err(e) => Err(parse_err(lineno, format!("bad index {t:?}: {e}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        let value = fields[n].parse::<f64>().map_err(|e| parse_err(lineno, format!("bad value {:?}: {e}", fields[n])))?;
        if !value.is_finite() {
            return Err(parse_err(lineno, format!("non-finite value {}", fields[n])));
        }
        entries.push((idx, value, lineno));
    }
    let dims = match (dims, order) {
        (Some(d), Some(o)) if d.len() != o => {
            return Err(parse_err(1, format!("header has {} dims, entries have {o} indices", d.len())))
        }
        (Some(d), _) => d,
        (None, Some(o)) => (0..o).map(|m| entries.iter().map(|e| e.0[m] + 1).max().unwrap_or(1)).collect(),
        (None, None) => return Err(parse_err(0, "no dims header and no entries")),
    };
    let shape = Shape::new(dims)?;
    let mut first_seen = HashMap::with_capacity(entries.len());
    let mut indices = Vec::with_capacity(entries.len());
    let mut values = Vec::with_capacity(entries.len());
    for (idx, value, lineno) in entries {
        let l = shape.linear_index(&idx).map_err(|e| parse_err(lineno, e.to_string()))?;
        if let Some(prev) = first_seen.insert(l, lineno) {
            return Err(parse_err(lineno, format!("duplicate index tuple, first given on line {prev}")));
        }
        indices.push(l);
        values.push(value);
    }
    ObservationSet::from_linear(shape, indices, values)
}

/// Writes a `# dims:` header and the entries in lexicographic index order,
/// values in shortest round-trip form.
pub fn write_coo(mut writer: impl Write, obs: &ObservationSet) -> Result<()> {
    let shape = obs.shape();
    let dims: Vec<String> = shape.dims().iter().map(|d| d.to_string()).collect();
    writeln!(writer, "# dims: {}", dims.join(" "))?;
    let mut entries: Vec<(Vec<usize>, f64)> = obs.entries().collect();
    entries.sort_by(|a, b| a.0.cmp(&b.0));
    for (idx, v) in entries {
        for i in idx {
            write!(writer, "{} ", i + 1)?;
        }
        writeln!(writer, "{v}")?;
    }
    Ok(())
}

pub fn write_dense(mut writer: impl Write, t: &DenseTensor) -> Result<()> {
    writer.write_all(DENSE_MAGIC)?;
    writer.write_all(&DENSE_VERSION.to_le_bytes())?;
    let ndim = u32::try_from(t.dims().len()).map_err(|_| DcotError::InvalidShape("too many modes".into()))?;
    writer.write_all(&ndim.to_le_bytes())?;
    for &d in t.dims() {
        writer.write_all(&(d as u64).to_le_bytes())?;
    }
    for &v in t.data() {
        writer.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_dense(mut reader: impl Read) -> Result<DenseTensor> {
    let bad = |m: &str| DcotError::InvalidShape(format!("dense file: {m}"));
    let mut magic = [0u8; 4];
    reader.read_exact(&mut magic)?;
    if &magic != DENSE_MAGIC {
        return Err(bad("missing DCOT magic"));
    }
    let mut word = [0u8; 4];
    reader.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != DENSE_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    reader.read_exact(&mut word)?;
    let ndim = u32::from_le_bytes(word) as usize;
    let mut dims = Vec::with_capacity(ndim);
    let mut long = [0u8; 8];
    for _ in 0..ndim {
        reader.read_exact(&mut long)?;
        dims.push(usize::try_from(u64::from_le_bytes(long)).map_err(|_| bad("dimension overflows"))?);
    }
    let shape = Shape::new(dims)?;
    let mut data = Vec::with_capacity(shape.numel());
    for _ in 0..shape.numel() {
        reader.read_exact(&mut long)?;
        data.push(f64::from_le_bytes(long));
    }
    if reader.read(&mut long)? != 0 {
        return Err(bad("trailing bytes"));
    }
    DenseTensor::new(shape, data)
}

pub fn matrix_to_tensor(m: &DenseMatrix) -> DenseTensor {
    let shape = Shape::new(vec![m.rows(), m.cols()]).expect("matrix dimensions are positive");
    DenseTensor::new(shape, m.data().to_vec()).expect("sizes agree")
}

pub fn tensor_to_matrix(t: &DenseTensor) -> Result<DenseMatrix> {
    match t.dims() {
        &[r, c] => DenseMatrix::new(r, c, t.data().to_vec()),
        d => Err(DcotError::DimensionMismatch(format!("expected a matrix, found dims {d:?}"))),
    }
}

pub fn save_dense(path: &Path, t: &DenseTensor) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_dense(&mut w, t)?;
    w.flush()?;
    Ok(())
}

pub fn load_dense(path: &Path) -> Result<DenseTensor> {
    read_dense(BufReader::new(File::open(path)?))
}

pub fn save_coo(path: &Path, obs: &ObservationSet) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_coo(&mut w, obs)?;
    w.flush()?;
    Ok(())
}

pub fn load_coo(path: &Path) -> Result<ObservationSet> {
    read_coo(File::open(path)?)
}

/// One feature vector per line, whitespace or comma separated.
pub fn read_features(reader: impl Read) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for (k, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let row = text
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>().map_err(|e| parse_err(k + 1, format!("bad feature {t:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first().map(|r: &Vec<f64>| r.len()) {
            if first != row.len() {
                return Err(parse_err(k + 1, format!("{} features, earlier rows had {first}", row.len())));
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_features(mut writer: impl Write, rows: &[Vec<f64>]) -> Result<()> {
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(writer, "{}", cells.join(" "))?;
    }
    Ok(())
}

/// One nonnegative integer label per line.
pub fn read_labels(reader: impl Read) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for (k, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        out.push(text.parse::<usize>().map_err(|e| parse_err(k + 1, format!("bad label {text:?}: {e}")))?);
    }
    Ok(out)
}

pub fn write_labels(mut writer: impl Write, labels: &[usize]) -> Result<()> {
    for l in labels {
        writeln!(writer, "{l}")?;
    }
    Ok(())
}

/// Parses `mode=M: [a,b,c], [d,e]@K=k, …` with 1-based mode, slice and
/// fixed indices. The optional `@K=k` restricts a group to index `k` of
/// core mode `K`. An empty string means no partition.
pub fn parse_partition(text: &str) -> Result<SubjectPartition> {
    let err = |m: String| DcotError::InvalidPartition(m);
    let text = text.trim();
    if text.is_empty() {
        return Ok(SubjectPartition::none());
    }
    let (head, body) = text.split_once(':').ok_or_else(|| err(format!("expected `mode=M: ...`, got {text:?}")))?;
    let mode = head
        .trim()
        .strip_prefix("mode")
        .and_then(|r| r.trim_start().strip_prefix('='))
        .ok_or_else(|| err(format!("expected `mode=M` before the colon, got {head:?}")))?
        .trim();
    let mode = one_based(mode, "mode")?;
    let mut groups = Vec::new();
    let mut rest = body.trim();
    while !rest.is_empty() {
        let inner_start = rest.strip_prefix('[').ok_or_else(|| err(format!("expected `[` at {rest:?}")))?;
        let (inner, after) = inner_start.split_once(']').ok_or_else(|| err("unclosed `[`".into()))?;
        let members = inner
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| one_based(t, "slice index"))
            .collect::<Result<Vec<_>>>()?;
        if members.is_empty() {
            return Err(err("empty group `[]`".into()));
        }
        let mut after = after.trim_start();
        let mut fixed = None;
        if let Some(q) = after.strip_prefix('@') {
            let end = q.find(',').unwrap_or(q.len());
            let (spec, tail) = q.split_at(end);
            let (m, i) = spec.split_once('=').ok_or_else(|| err(format!("expected `@mode=index`, got @{spec}")))?;
            fixed = Some(FixedIndex { mode: one_based(m.trim(), "fixed mode")?, index: one_based(i.trim(), "fixed index")? });
            after = tail.trim_start();
        }
        groups.push(SliceGroup { members, fixed });
        rest = match after.strip_prefix(',') {
            Some(r) => r.trim_start(),
            None if after.is_empty() => after,
            None => return Err(err(format!("expected `,` between groups at {after:?}"))),
        };
    }
    Ok(SubjectPartition::new(mode, groups))
}

fn one_based(t: &str, what: &str) -> Result<usize> {
    match t.parse::<usize>() {
        Ok(0) => Err(DcotError::InvalidPartition(format!("{what} is 1-based; found 0"))),
        Ok(v) => Ok(v - 1),
        Err(e) => Err(DcotError::InvalidPartition(format!("bad {what} {t:?}: {e}"))),
    }
}

/// Inverse of [`parse_partition`].
pub fn format_partition(p: &SubjectPartition) -> String {
    if p.is_empty() {
        return String::new();
    }
    let groups: Vec<String> = p
        .groups
        .iter()
        .map(|g| {
            let m: Vec<String> = g.members.iter().map(|v| (v + 1).to_string()).collect();
            match g.fixed {
                Some(f) => format!("[{}]@{}={}", m.join(","), f.mode + 1, f.index + 1),
                None => format!("[{}]", m.join(",")),
            }
        })
        .collect();
    format!("mode={}: {}", p.mode + 1, groups.join(", "))
}
