//! Binary grid files, heatmaps and text exports.
//!
//! `.fpgrid` layout: the 8-byte magic `FPGRID01`, a little-endian `u32`
//! header length `L`, `L` bytes of UTF-8 `key=value` lines (`dim`, `counts`,
//! `lower`, `upper`, `r`, `mass`, `provenance`, `sample_count`), then the node
//! values as little-endian `f64`, row-major with the last axis fastest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use tempfile::NamedTempFile;

use crate::config::{format_f64, format_vec};
use crate::error::{FpError, Result};
use crate::grid::{GridDensity, GridSpec, Provenance};
use crate::sparse::CsrMatrix;

pub const MAGIC: &[u8; 8] = b"FPGRID01";

/// Writes `bytes` to `path` through a temporary file in the same directory
/// and a rename, so readers never observe a partial file.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = NamedTempFile::new_in(dir).map_err(|e| FpError::io(dir, e))?;
    tmp.write_all(bytes)
        .map_err(|e| FpError::io(tmp.path(), e))?;
    tmp.as_file()
        .sync_all()
        .map_err(|e| FpError::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| FpError::io(path, e.error))?;
    Ok(())
}

fn grid_header(density: &GridDensity) -> String {
    let spec = &density.spec;
    let counts: Vec<String> = spec.counts().iter().map(|c| c.to_string()).collect();
    let mut h = String::new();
    let _ = writeln!(h, "dim={}", spec.dim());
    let _ = writeln!(h, "counts={}", counts.join(","));
    let _ = writeln!(h, "lower={}", format_vec(spec.lower()));
    let _ = writeln!(h, "upper={}", format_vec(spec.upper()));
    let _ = writeln!(h, "r={}", format_f64(spec.spacing()));
    let _ = writeln!(h, "mass={}", format_f64(density.mass));
    let _ = writeln!(h, "provenance={}", density.provenance);
    let _ = writeln!(h, "sample_count={}", density.sample_count);
    h
}

/// Serializes a density to `.fpgrid` bytes.
pub fn encode_grid(density: &GridDensity) -> Vec<u8> {
    let header = grid_header(density);
    let mut out = Vec::with_capacity(12 + header.len() + 8 * density.values.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for v in &density.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn format_err(msg: impl Into<String>) -> FpError {
    FpError::Format(msg.into())
}

fn header_floats(fields: &BTreeMap<&str, &str>, key: &str) -> Result<Vec<f64>> {
    let raw = fields
        .get(key)
        .ok_or_else(|| format_err(format!("header lacks {key}")))?;
    raw.split(',')
        .map(|p| {
            p.parse::<f64>()
                .map_err(|_| format_err(format!("bad {key} entry {p:?}")))
        })
        .collect()
}

fn header_scalar<T: std::str::FromStr>(fields: &BTreeMap<&str, &str>, key: &str) -> Result<T> {
    fields
        .get(key)
        .ok_or_else(|| format_err(format!("header lacks {key}")))?
        .parse::<T>()
        .map_err(|_| format_err(format!("bad {key} value")))
}

/// Parses `.fpgrid` bytes.
pub fn decode_grid(bytes: &[u8]) -> Result<GridDensity> {
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(format_err("bad magic"));
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let payload_start = 12usize
        .checked_add(header_len)
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| format_err("truncated header"))?;
    let header = std::str::from_utf8(&bytes[12..payload_start])
        .map_err(|_| format_err("header is not UTF-8"))?;
    let mut fields = BTreeMap::new();
    for line in header.lines().filter(|l| !l.is_empty()) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format_err(format!("bad header line {line:?}")))?;
        if fields.insert(k, v).is_some() {
            return Err(format_err(format!("duplicate header key {k}")));
        }
    }

    let dim: usize = header_scalar(&fields, "dim")?;
    let counts: Vec<usize> = fields
        .get("counts")
        .ok_or_else(|| format_err("header lacks counts"))?
        .split(',')
        .map(|c| {
            c.parse::<usize>()
                .map_err(|_| format_err("bad counts entry"))
        })
        .collect::<Result<_>>()?;
    let lower = header_floats(&fields, "lower")?;
    let upper = header_floats(&fields, "upper")?;
    let r: f64 = header_scalar(&fields, "r")?;
    let mass: f64 = header_scalar(&fields, "mass")?;
    let provenance: Provenance = fields
        .get("provenance")
        .ok_or_else(|| format_err("header lacks provenance"))?
        .parse()
        .map_err(|_| format_err("unknown provenance"))?;
    let sample_count: u64 = header_scalar(&fields, "sample_count")?;
    if counts.len() != dim || lower.len() != dim || upper.len() != dim {
        return Err(format_err("header vectors disagree with dim"));
    }
    let spec =
        GridSpec::new(lower, upper, r).map_err(|e| format_err(format!("bad geometry: {e}")))?;
    if spec.counts() != counts.as_slice() {
        return Err(format_err(format!(
            "header counts {counts:?} disagree with geometry {:?}",
            spec.counts()
        )));
    }

    let payload = &bytes[payload_start..];
    let expected = spec.len() * 8;
    if payload.len() < expected {
        return Err(format_err(format!(
            "truncated payload: {} bytes, expected {expected}",
            payload.len()
        )));
    }
    if payload.len() > expected {
        return Err(format_err(format!(
            "payload size mismatch: {} bytes, expected {expected}",
            payload.len()
        )));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    GridDensity::new(spec, values, provenance, sample_count, mass)
        .map_err(|e| format_err(e.to_string()))
}

pub fn write_grid(path: impl AsRef<Path>, density: &GridDensity) -> Result<()> {
    write_atomic(path, &encode_grid(density))
}

pub fn read_grid(path: impl AsRef<Path>) -> Result<GridDensity> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| FpError::io(path, e))?;
    decode_grid(&bytes)
}

/// Binary 16-bit PGM of a 2D grid: width is the first axis, height the second,
/// with the second axis pointing up. Values are scaled linearly so the minimum
/// maps to 0 and the maximum to 65535; a constant field is all zeros.
pub fn encode_pgm(density: &GridDensity) -> Result<Vec<u8>> {
    let spec = &density.spec;
    if spec.dim() != 2 {
        return Err(FpError::NotTwoDimensional(spec.dim()));
    }
    let (w, h) = (spec.counts()[0], spec.counts()[1]);
    let min = density.values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = density
        .values
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let span = max - min;
    let mut out = format!("P5\n{w} {h}\n65535\n").into_bytes();
    out.reserve(2 * w * h);
    for row in 0..h {
        let j = h - 1 - row;
        for i in 0..w {
            let v = density.values[i * h + j];
            let level = if span > 0.0 {
                ((v - min) / span * 65535.0).round() as u16
            } else {
                0
            };
            out.extend_from_slice(&level.to_be_bytes());
        }
    }
    Ok(out)
}

pub fn write_pgm(path: impl AsRef<Path>, density: &GridDensity) -> Result<()> {
    write_atomic(path, &encode_pgm(density)?)
}

const INDEX_NAMES: [&str; 3] = ["i", "j", "k"];
const COORD_NAMES: [&str; 3] = ["x", "y", "z"];

/// One row per node: indices, coordinates and value (`i,j,x,y,value` in 2D).
pub fn encode_csv(density: &GridDensity) -> String {
    let spec = &density.spec;
    let d = spec.dim();
    let name = |names: &[&str; 3], a: usize, prefix: &str| {
        if d <= 3 {
            names[a].to_string()
        } else {
            format!("{prefix}{a}")
        }
    };
    let mut header: Vec<String> = (0..d).map(|a| name(&INDEX_NAMES, a, "i")).collect();
    header.extend((0..d).map(|a| name(&COORD_NAMES, a, "x")));
    header.push("value".into());
    let mut s = header.join(",");
    s.push('\n');
    let mut idx = vec![0usize; d];
    let mut x = vec![0.0; d];
    for (k, v) in density.values.iter().enumerate() {
        spec.multi_index(k, &mut idx);
        spec.node_position(k, &mut x);
        for i in &idx {
            let _ = write!(s, "{i},");
        }
        for c in &x {
            let _ = write!(s, "{},", format_f64(*c));
        }
        let _ = writeln!(s, "{}", format_f64(*v));
    }
    s
}

pub fn write_csv(path: impl AsRef<Path>, density: &GridDensity) -> Result<()> {
    write_atomic(path, encode_csv(density).as_bytes())
}

/// Coordinate-format matrix dump (`rows cols nnz` line, then `i j value`).
pub fn write_matrix(path: impl AsRef<Path>, matrix: &CsrMatrix) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    matrix
        .write_coordinate(&mut buf)
        .map_err(|e| FpError::io(path, e))?;
    write_atomic(path, &buf)
}

/// One value per line at 17 significant digits.
pub fn write_vector(path: impl AsRef<Path>, values: &[f64]) -> Result<()> {
    let mut s = String::with_capacity(24 * values.len());
    for v in values {
        let _ = writeln!(s, "{}", format_f64(*v));
    }
    write_atomic(path, s.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> GridDensity {
        let spec = GridSpec::new(vec![0.0], vec![1.0], 0.25).unwrap();
        GridDensity::new(
            spec,
            vec![0.0, 0.25, 0.5, 0.75, 1.0],
            Provenance::Analytic,
            0,
            0.625,
        )
        .unwrap()
    }

    fn grid2(values: Vec<f64>, nx: usize, ny: usize) -> GridDensity {
        let spec =
            GridSpec::new(vec![0.0, 0.0], vec![(nx - 1) as f64, (ny - 1) as f64], 1.0).unwrap();
        GridDensity::new(spec, values, Provenance::Hybrid, 0, 1.0).unwrap()
    }

    #[test]
    fn encode_decode_is_identity() {
        let d = ramp();
        let bytes = encode_grid(&d);
        assert_eq!(decode_grid(&bytes).unwrap(), d);
    }

    #[test]
    fn three_node_file_size() {
        let spec = GridSpec::new(vec![0.0], vec![2.0], 1.0).unwrap();
        let d =
            GridDensity::new(spec, vec![1.0, 2.0, 3.0], Provenance::MonteCarlo, 9, 0.5).unwrap();
        let bytes = encode_grid(&d);
        let l = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        assert_eq!(bytes.len(), 12 + l + 24);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let bytes = encode_grid(&ramp());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_grid(&bad), Err(FpError::Format(m)) if m.contains("magic")));
        assert!(
            matches!(decode_grid(&bytes[..bytes.len() - 3]), Err(FpError::Format(m)) if m.contains("truncated"))
        );
        let mut long = bytes.clone();
        long.extend_from_slice(&[0; 8]);
        assert!(matches!(decode_grid(&long), Err(FpError::Format(m)) if m.contains("mismatch")));
    }

    #[test]
    fn pgm_two_by_one() {
        let img = encode_pgm(&grid2(vec![0.0, 1.0], 2, 1)).unwrap();
        let header = b"P5\n2 1\n65535\n";
        assert_eq!(&img[..header.len()], header);
        assert_eq!(&img[header.len()..], &[0, 0, 0xff, 0xff]);
    }

    #[test]
    fn pgm_constant_is_black_and_y_points_up() {
        let img = encode_pgm(&grid2(vec![3.0; 6], 3, 2)).unwrap();
        assert!(img[img.len() - 12..].iter().all(|&b| b == 0));
        // Node (0, 1) is the top-left pixel.
        let img = encode_pgm(&grid2(vec![0.0, 1.0, 0.0, 0.0], 2, 2)).unwrap();
        let px = &img[img.len() - 8..];
        assert_eq!(px, &[0xff, 0xff, 0, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn pgm_rejects_other_dimensions() {
        assert!(matches!(
            encode_pgm(&ramp()),
            Err(FpError::NotTwoDimensional(1))
        ));
    }

    #[test]
    fn csv_has_one_row_per_node() {
        let d = grid2(vec![0.0; 6], 3, 2);
        let csv = encode_csv(&d);
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "i,j,x,y,value");
        assert_eq!(lines.len(), 1 + 6);
        assert!(lines[2].starts_with("0,1,"));
    }

    #[test]
    fn atomic_write_replaces_target() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.fpgrid");
        write_grid(&path, &ramp()).unwrap();
        write_grid(&path, &ramp()).unwrap();
        assert_eq!(read_grid(&path).unwrap(), ramp());
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
