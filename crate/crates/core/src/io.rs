//! Field dumps and plotting exports.
//!
//! Binary layout: the ASCII line `WMFIELD v1 M=<M> comps=3\n`, followed by
//! `(M+1)^2` triples of little-endian `f64`, nodes in row-major order
//! (`x` fastest).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Grid2D, VecField};

const MAGIC: &str = "WMFIELD v1";

pub fn write_field<W: Write>(g: &Grid2D, f: &VecField, mut out: W) -> Result<()> {
    if f.len() != g.len() {
        return Err(Error::ShapeMismatch {
            expected: g.len(),
            found: f.len(),
        });
    }
    writeln!(out, "{MAGIC} M={} comps=3", g.cells())?;
    let mut buf = Vec::with_capacity(24 * f.len());
    for v in &f.values {
        for c in v {
            buf.extend_from_slice(&c.to_le_bytes());
        }
    }
    out.write_all(&buf)?;
    out.flush()?;
    Ok(())
}

/// Reads a dump, returning the grid it was written on and the field.
pub fn read_field<R: Read>(input: R) -> Result<(Grid2D, VecField)> {
    let mut input = BufReader::new(input);
    let mut header = String::new();
    input.read_line(&mut header)?;
    let header = header.trim_end_matches('\n');
    let rest = header
        .strip_prefix(MAGIC)
        .ok_or_else(|| Error::Format(format!("bad magic in header '{header}'")))?;
    let mut m = None;
    let mut comps = None;
    for tok in rest.split_whitespace() {
        match tok.split_once('=') {
            Some(("M", v)) => m = v.parse::<usize>().ok(),
            Some(("comps", v)) => comps = v.parse::<usize>().ok(),
            _ => return Err(Error::Format(format!("unexpected header token '{tok}'"))),
        }
    }
    let m = m.ok_or_else(|| Error::Format("header lacks M".into()))?;
    if comps != Some(3) {
        return Err(Error::Format("only comps=3 is supported".into()));
    }
    let g = Grid2D::new(m)?;
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() != 24 * g.len() {
        return Err(Error::Format(format!(
            "expected {} bytes of data, found {}",
            24 * g.len(),
            bytes.len()
        )));
    }
    let values = bytes
        .chunks_exact(24)
        .map(|c| {
            let x = |k: usize| f64::from_le_bytes(c[8 * k..8 * k + 8].try_into().unwrap());
            [x(0), x(1), x(2)]
        })
        .collect();
    let f = VecField::from_values(&g, values)?;
    Ok((g, f))
}

pub fn save_field(path: &Path, g: &Grid2D, f: &VecField) -> Result<()> {
    write_field(g, f, BufWriter::new(File::create(path)?))
}

pub fn load_field(path: &Path) -> Result<(Grid2D, VecField)> {
    read_field(File::open(path)?)
}

/// CSV with columns `x, y, u1, u2, u3`, one row per node.
pub fn write_field_csv<W: Write>(g: &Grid2D, f: &VecField, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "y", "u1", "u2", "u3"])?;
    let n = g.nodes();
    for j in 0..n {
        for i in 0..n {
            let (x, y) = g.point(i, j);
            let v = f[g.idx(i, j)];
            w.write_record([x, y, v[0], v[1], v[2]].map(|s| format!("{s:e}")))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// The checkpoint sidecar line `t=<time> tau=<tau>`.
pub fn sidecar_line(t: f64, tau: f64) -> String {
    format!("t={t:e} tau={tau:e}")
}

pub fn parse_sidecar(line: &str) -> Result<(f64, f64)> {
    let mut t = None;
    let mut tau = None;
    for tok in line.split_whitespace() {
        match tok.split_once('=') {
            Some(("t", v)) => t = v.parse().ok(),
            Some(("tau", v)) => tau = v.parse().ok(),
            _ => return Err(Error::Format(format!("unexpected sidecar token '{tok}'"))),
        }
    }
    match (t, tau) {
        (Some(t), Some(tau)) => Ok((t, tau)),
        _ => Err(Error::Format(format!("incomplete sidecar '{line}'"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_size() {
        let g = Grid2D::new(4).unwrap();
        let f = VecField::from_xy(&g, |x, y| [x, y, 1.0]);
        let mut buf = Vec::new();
        write_field(&g, &f, &mut buf).unwrap();
        let head = b"WMFIELD v1 M=4 comps=3\n";
        assert_eq!(&buf[..head.len()], head);
        assert_eq!(buf.len(), head.len() + 25 * 24);
        // first node is (-1/2, -1/2), second is (-1/4, -1/2)
        let x1 = f64::from_le_bytes(buf[head.len() + 24..head.len() + 32].try_into().unwrap());
        assert_eq!(x1, -0.25);
    }

    #[test]
    fn round_trip_exact() {
        let g = Grid2D::new(5).unwrap();
        let f = VecField::from_xy(&g, |x, y| [x.sin() / 3.0, (y * 7.0).exp(), 1e-300 * x]);
        let mut buf = Vec::new();
        write_field(&g, &f, &mut buf).unwrap();
        let (g2, f2) = read_field(&buf[..]).unwrap();
        assert_eq!(g2.cells(), 5);
        assert_eq!(f.values, f2.values);
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(read_field(&b"HELLO\n"[..]), Err(Error::Format(_))));
        assert!(matches!(
            read_field(&b"WMFIELD v1 M=2 comps=3\n\x00\x01"[..]),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            read_field(&b"WMFIELD v1 M=2 comps=2\n"[..]),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn csv_rows() {
        let g = Grid2D::new(2).unwrap();
        let f = VecField::constant(&g, [0.0, 0.0, 1.0]);
        let mut buf = Vec::new();
        write_field_csv(&g, &f, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = s.lines().collect();
        assert_eq!(lines[0], "x,y,u1,u2,u3");
        assert_eq!(lines.len(), 10);
        assert!(lines[1].starts_with("-5e-1,-5e-1,"));
    }

    #[test]
    fn sidecar() {
        let line = sidecar_line(0.125, 2f64.powi(-9));
        assert_eq!(parse_sidecar(&line).unwrap(), (0.125, 2f64.powi(-9)));
        assert!(parse_sidecar("t=1").is_err());
    }
}
