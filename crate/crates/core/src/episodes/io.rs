//! Text formats for datasets, split assignments and label masks.
//!
//! ```text
//! IMPDATA v1
//! N D n_classes has_superclass
//! class_id [superclass_id] v_1 ... v_D      (N lines, ids one-based)
//!
//! SPLIT v1
//! class_id train|val|test
//!
//! MASK v1
//! point_index 0|1                           (zero-based index)
//! ```
//!
//! Floats are written with Rust's shortest round-trip formatting, so saving
//! a loaded canonical file reproduces it byte for byte.

use std::fmt::Write as _;
use std::path::Path;

use super::dataset::{Dataset, Split};
use crate::error::{Error, Result};

pub const DATA_TAG: &str = "IMPDATA v1";
pub const SPLIT_TAG: &str = "SPLIT v1";
pub const MASK_TAG: &str = "MASK v1";

fn header<'a>(lines: &mut impl Iterator<Item = (usize, &'a str)>, tag: &str) -> Result<()> {
    match lines.next() {
        Some((_, l)) if l.trim_end() == tag => Ok(()),
        Some((n, l)) => Err(Error::parse(n, format!("expected header {tag:?}, found {l:?}"))),
        None => Err(Error::parse(1, format!("empty file, expected header {tag:?}"))),
    }
}

fn numbered(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().map(|(i, l)| (i + 1, l))
}

fn parse_field<T: std::str::FromStr>(line: usize, what: &str, s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::parse(line, format!("invalid {what} {s:?}")))
}

fn parse_id(line: usize, what: &str, s: &str, limit: usize) -> Result<usize> {
    let v: usize = parse_field(line, what, s)?;
    if v == 0 || v > limit {
        return Err(Error::parse(line, format!("{what} {v} outside 1..={limit}")));
    }
    Ok(v - 1)
}

pub fn parse_dataset(text: &str) -> Result<Dataset> {
    let mut lines = numbered(text).filter(|(_, l)| !l.trim().is_empty());
    header(&mut lines, DATA_TAG)?;
    let (hn, hl) = lines
        .next()
        .ok_or_else(|| Error::parse(2, "missing size line"))?;
    let f: Vec<&str> = hl.split_whitespace().collect();
    if f.len() != 4 {
        return Err(Error::parse(hn, "size line must be `N D n_classes has_superclass`"));
    }
    let n: usize = parse_field(hn, "N", f[0])?;
    let d: usize = parse_field(hn, "D", f[1])?;
    let n_classes: usize = parse_field(hn, "n_classes", f[2])?;
    let has_super = match f[3] {
        "0" => false,
        "1" => true,
        other => return Err(Error::parse(hn, format!("has_superclass must be 0 or 1, got {other:?}"))),
    };
    if d == 0 {
        return Err(Error::parse(hn, "D must be positive"));
    }

    let mut points = Vec::with_capacity(n * d);
    let mut class_id = Vec::with_capacity(n);
    let mut superclass_id = Vec::new();
    let mut rows = 0usize;
    for (ln, l) in lines {
        rows += 1;
        if rows > n {
            continue;
        }
        let mut it = l.split_whitespace();
        let c = it.next().ok_or_else(|| Error::parse(ln, "empty row"))?;
        class_id.push(parse_id(ln, "class_id", c, n_classes)?);
        if has_super {
            let s = it
                .next()
                .ok_or_else(|| Error::parse(ln, "missing superclass_id"))?;
            superclass_id.push(parse_id(ln, "superclass_id", s, usize::MAX)?);
        }
        let before = points.len();
        for v in it {
            let x: f64 = parse_field(ln, "value", v)?;
            if !x.is_finite() {
                return Err(Error::parse(ln, format!("non-finite value {v:?}")));
            }
            points.push(x);
        }
        if points.len() - before != d {
            return Err(Error::parse(
                ln,
                format!("expected {d} values, found {}", points.len() - before),
            ));
        }
    }
    if rows != n {
        return Err(Error::parse(
            hn,
            format!("header declares N = {n} but the file has {rows} data rows"),
        ));
    }
    Dataset::new(d, points, class_id, has_super.then_some(superclass_id), n_classes)
        .map_err(|e| Error::parse(hn, e.to_string()))
}

pub fn format_dataset(ds: &Dataset) -> String {
    let mut out = String::new();
    let has_super = ds.has_superclass();
    writeln!(out, "{DATA_TAG}").unwrap();
    writeln!(out, "{} {} {} {}", ds.len(), ds.dim(), ds.n_classes(), has_super as u8).unwrap();
    for i in 0..ds.len() {
        write!(out, "{}", ds.class_of(i) + 1).unwrap();
        if let Some(sup) = ds.superclass_ids() {
            write!(out, " {}", sup[i] + 1).unwrap();
        }
        for v in ds.point(i) {
            write!(out, " {v:?}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn parse_splits(text: &str, ds: &mut Dataset) -> Result<()> {
    let mut lines = numbered(text).filter(|(_, l)| !l.trim().is_empty());
    header(&mut lines, SPLIT_TAG)?;
    let mut seen = vec![false; ds.n_classes()];
    for (ln, l) in lines {
        let f: Vec<&str> = l.split_whitespace().collect();
        if f.len() != 2 {
            return Err(Error::parse(ln, "expected `class_id split`"));
        }
        let c = parse_id(ln, "class_id", f[0], ds.n_classes())?;
        if seen[c] {
            return Err(Error::parse(ln, format!("class {} assigned twice", c + 1)));
        }
        seen[c] = true;
        let s: Split = f[1].parse().map_err(|e: Error| Error::parse(ln, e.to_string()))?;
        ds.set_split(c, s)?;
    }
    if let Some(c) = seen.iter().position(|s| !s) {
        return Err(Error::parse(0, format!("class {} has no split", c + 1)));
    }
    Ok(())
}

pub fn format_splits(ds: &Dataset) -> String {
    let mut out = format!("{SPLIT_TAG}\n");
    for (c, s) in ds.splits().iter().enumerate() {
        writeln!(out, "{} {}", c + 1, s.as_str()).unwrap();
    }
    out
}

pub fn parse_mask(text: &str, n_points: usize) -> Result<Vec<bool>> {
    let mut lines = numbered(text).filter(|(_, l)| !l.trim().is_empty());
    header(&mut lines, MASK_TAG)?;
    let mut mask: Vec<Option<bool>> = vec![None; n_points];
    for (ln, l) in lines {
        let f: Vec<&str> = l.split_whitespace().collect();
        if f.len() != 2 {
            return Err(Error::parse(ln, "expected `point_index 0|1`"));
        }
        let i: usize = parse_field(ln, "point_index", f[0])?;
        if i >= n_points {
            return Err(Error::parse(ln, format!("point_index {i} outside 0..{n_points}")));
        }
        let v = match f[1] {
            "0" => false,
            "1" => true,
            other => return Err(Error::parse(ln, format!("mask value must be 0 or 1, got {other:?}"))),
        };
        if mask[i].replace(v).is_some() {
            return Err(Error::parse(ln, format!("point {i} listed twice")));
        }
    }
    mask.into_iter()
        .enumerate()
        .map(|(i, m)| m.ok_or_else(|| Error::parse(0, format!("point {i} missing from mask"))))
        .collect()
}

pub fn format_mask(mask: &[bool]) -> String {
    let mut out = format!("{MASK_TAG}\n");
    for (i, m) in mask.iter().enumerate() {
        writeln!(out, "{i} {}", *m as u8).unwrap();
    }
    out
}

/// Reads a dataset file, plus optional split and mask files.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    parse_dataset(&std::fs::read_to_string(path)?)
}

pub fn load_splits(path: &Path, ds: &mut Dataset) -> Result<()> {
    parse_splits(&std::fs::read_to_string(path)?, ds)
}

pub fn load_mask(path: &Path, ds: &mut Dataset) -> Result<()> {
    let mask = parse_mask(&std::fs::read_to_string(path)?, ds.len())?;
    ds.set_label_mask(mask)
}

pub fn save_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    Ok(std::fs::write(path, format_dataset(ds))?)
}
