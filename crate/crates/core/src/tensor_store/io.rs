//! Instance directory format (1-based indices, comma separated, no header):
//!
//! * `meta.csv`: `S,M,T`
//! * `routing.csv`: `link,od` per one-entry (an optional third field must be 0 or 1)
//! * `linkloads.csv`: `M` lines of `T` values
//! * `mask.csv` (optional): `i,j` or `i,j,k`
//! * `truth.csv` (optional): `N` lines of `T` values, line `n` = OD index `n`

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use super::{RoutingMatrix, SparsityMask, TomographyInstance, TrafficTensor};
use crate::error::{Error, Result};
use crate::Real;

pub const META: &str = "meta.csv";
pub const ROUTING: &str = "routing.csv";
pub const LINK_LOADS: &str = "linkloads.csv";
pub const MASK: &str = "mask.csv";
pub const TRUTH: &str = "truth.csv";

fn read(dir: &Path, name: &str) -> Result<String> {
    let path = dir.join(name);
    if !path.exists() {
        return Err(Error::MissingFile(path));
    }
    fs::read_to_string(&path).map_err(|e| Error::io(path, e))
}

fn read_optional(dir: &Path, name: &str) -> Result<Option<String>> {
    let path = dir.join(name);
    if !path.exists() {
        return Ok(None);
    }
    fs::read_to_string(&path)
        .map(Some)
        .map_err(|e| Error::io(path, e))
}

/// Non-blank lines with their 1-based line numbers, split on commas.
fn records(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.split(',').map(str::trim).collect()))
}

fn parse_index(file: &str, line: usize, field: &str, upper: usize) -> Result<usize> {
    let v: usize = field
        .parse()
        .map_err(|_| Error::parse(file, line, format!("bad index {field:?}")))?;
    if v == 0 || v > upper {
        return Err(Error::parse(
            file,
            line,
            format!("index {v} outside 1..={upper}"),
        ));
    }
    Ok(v - 1)
}

fn parse_value<T: Real>(file: &str, line: usize, field: &str) -> Result<T> {
    let v: T = field
        .parse()
        .map_err(|_| Error::parse(file, line, format!("bad number {field:?}")))?;
    if !v.is_finite() {
        return Err(Error::parse(file, line, format!("non-finite value {field}")));
    }
    if v < T::zero() {
        return Err(Error::parse(file, line, format!("negative value {field}")));
    }
    Ok(v)
}

fn parse_table<T: Real>(file: &str, text: &str, rows: usize, cols: usize) -> Result<DMatrix<T>> {
    let mut table = DMatrix::zeros(rows, cols);
    let mut count = 0;
    for (line, fields) in records(text) {
        if count == rows {
            return Err(Error::Dimension(format!(
                "{file}:{line}: more than {rows} rows"
            )));
        }
        if fields.len() != cols {
            return Err(Error::Dimension(format!(
                "{file}:{line}: {} values, expected {cols}",
                fields.len()
            )));
        }
        for (k, f) in fields.iter().enumerate() {
            table[(count, k)] = parse_value(file, line, f)?;
        }
        count += 1;
    }
    if count != rows {
        return Err(Error::Dimension(format!(
            "{file}: {count} rows, expected {rows}"
        )));
    }
    Ok(table)
}

/// Reads and validates an instance directory.
pub fn load_instance<T: Real>(dir: impl AsRef<Path>) -> Result<TomographyInstance<T>> {
    let dir = dir.as_ref();

    let meta = read(dir, META)?;
    let (line, fields) = records(&meta)
        .next()
        .ok_or_else(|| Error::parse(META, 1, "empty file"))?;
    if fields.len() != 3 {
        return Err(Error::parse(META, line, "expected S,M,T"));
    }
    let dims: Vec<usize> = fields
        .iter()
        .map(|f| {
            f.parse::<usize>()
                .ok()
                .filter(|&v| v > 0)
                .ok_or_else(|| Error::parse(META, line, format!("bad dimension {f:?}")))
        })
        .collect::<Result<_>>()?;
    let (s, m, t) = (dims[0], dims[1], dims[2]);
    let n = s * s;

    let text = read(dir, ROUTING)?;
    let mut entries = Vec::new();
    for (line, fields) in records(&text) {
        if !(2..=3).contains(&fields.len()) {
            return Err(Error::parse(ROUTING, line, "expected link,od[,value]"));
        }
        let link = parse_index(ROUTING, line, fields[0], m)?;
        let od = parse_index(ROUTING, line, fields[1], n)?;
        match fields.get(2).copied() {
            None | Some("1") => entries.push((link, od)),
            Some("0") => {}
            Some(v) => {
                return Err(Error::parse(
                    ROUTING,
                    line,
                    format!("routing value {v} is not binary"),
                ))
            }
        }
    }
    let routing = RoutingMatrix::from_entries(m, s, entries)?;

    let text = read(dir, LINK_LOADS)?;
    let loads = parse_table(LINK_LOADS, &text, m, t)?;

    let mut mask = SparsityMask::empty(s);
    if let Some(text) = read_optional(dir, MASK)? {
        for (line, fields) in records(&text) {
            let i = parse_index(MASK, line, fields[0], s)?;
            let j = parse_index(MASK, line, fields.get(1).copied().unwrap_or(""), s)?;
            match fields.len() {
                2 => mask.insert_pair(i, j)?,
                3 => {
                    let k = parse_index(MASK, line, fields[2], t)?;
                    mask.insert_interval(i, j, k)?
                }
                _ => return Err(Error::parse(MASK, line, "expected i,j or i,j,k")),
            }
        }
    }

    let truth = match read_optional(dir, TRUTH)? {
        Some(text) => Some(TrafficTensor::from_od_matrix(
            s,
            &parse_table(TRUTH, &text, n, t)?,
        )?),
        None => None,
    };

    TomographyInstance::new(routing, loads, mask, truth)
}

/// Reads an `N x T` OD table (such as a recovered estimate) as a tensor.
pub fn load_traffic<T: Real>(path: impl AsRef<Path>, nodes: usize, intervals: usize) -> Result<TrafficTensor<T>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_name()
        .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
    let od = parse_table(&name, &text, nodes * nodes, intervals)?;
    TrafficTensor::from_od_matrix(nodes, &od)
}

/// Writes a tensor as an `N x T` OD table.
pub fn save_traffic<T: Real>(tensor: &TrafficTensor<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_table(&tensor.to_od_matrix())).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_table<T: Real>(table: &DMatrix<T>) -> String {
    let mut out = String::new();
    for row in table.row_iter() {
        let mut first = true;
        for v in row.iter() {
            if !first {
                out.push(',');
            }
            first = false;
            write!(out, "{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub(crate) fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Error::io(path, e))
}

/// Writes an instance directory; values use shortest round-trip formatting.
pub fn save_instance<T: Real>(instance: &TomographyInstance<T>, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    write_file(
        dir,
        META,
        &format!(
            "{},{},{}\n",
            instance.nodes(),
            instance.links(),
            instance.intervals()
        ),
    )?;

    let mut routing = String::new();
    for (m, n) in instance.routing().entries() {
        writeln!(routing, "{},{}", m + 1, n + 1).unwrap();
    }
    write_file(dir, ROUTING, &routing)?;
    write_file(dir, LINK_LOADS, &write_table(instance.link_loads()))?;

    let mask_path = dir.join(MASK);
    if instance.mask().is_empty() {
        if mask_path.exists() {
            fs::remove_file(&mask_path).map_err(|e| Error::io(&mask_path, e))?;
        }
    } else {
        let mut mask = String::new();
        for &(i, j) in instance.mask().zero_pairs() {
            writeln!(mask, "{},{}", i + 1, j + 1).unwrap();
        }
        for &(i, j, k) in instance.mask().per_interval() {
            writeln!(mask, "{},{},{}", i + 1, j + 1, k + 1).unwrap();
        }
        write_file(dir, MASK, &mask)?;
    }

    let truth_path = dir.join(TRUTH);
    match instance.truth() {
        Some(truth) => write_file(dir, TRUTH, &write_table(&truth.to_od_matrix()))?,
        None if truth_path.exists() => {
            fs::remove_file(&truth_path).map_err(|e| Error::io(&truth_path, e))?
        }
        None => {}
    }
    Ok(())
}
