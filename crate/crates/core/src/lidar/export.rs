//! PCD and CSV writers for LiDAR scans.

use std::io::{self, BufRead, Write};

use super::LidarScan;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PcdEncoding {
    Ascii,
    /// Packed little-endian float32 records.
    Binary,
}

/// Writes `x y z` float32 fields as an unorganized PCD v0.7 cloud.
pub fn write_pcd<W: Write>(scan: &LidarScan, encoding: PcdEncoding, mut out: W) -> io::Result<()> {
    let n = scan.points.len();
    let data = match encoding {
        PcdEncoding::Ascii => "ascii",
        PcdEncoding::Binary => "binary",
    };
    write!(
        out,
        "# .PCD v0.7 - Point Cloud Data file format\nVERSION 0.7\nFIELDS x y z\nSIZE 4 4 4\nTYPE F F F\nCOUNT 1 1 1\n\
         WIDTH {n}\nHEIGHT 1\nVIEWPOINT 0 0 0 1 0 0 0\nPOINTS {n}\nDATA {data}\n"
    )?;
    match encoding {
        PcdEncoding::Ascii => {
            for p in &scan.points {
                let [x, y, z] = [p.position.x as f32, p.position.y as f32, p.position.z as f32];
                writeln!(out, "{x} {y} {z}")?;
            }
        }
        PcdEncoding::Binary => {
            let mut buf = Vec::with_capacity(n * 12);
            for p in &scan.points {
                for c in [p.position.x, p.position.y, p.position.z] {
                    buf.extend_from_slice(&(c as f32).to_le_bytes());
                }
            }
            out.write_all(&buf)?;
        }
    }
    out.flush()
}

/// Reads back the xyz points of a PCD file produced by [`write_pcd`].
pub fn read_pcd_points<R: BufRead>(mut input: R) -> io::Result<Vec<[f32; 3]>> {
    let invalid = |m: String| io::Error::new(io::ErrorKind::InvalidData, m);
    let mut points = None;
    let mut line = String::new();
    let encoding = loop {
        line.clear();
        if input.read_line(&mut line)? == 0 {
            return Err(invalid("missing DATA line".into()));
        }
        let mut words = line.split_whitespace();
        match words.next() {
            Some("POINTS") => {
                let n = words.next().and_then(|w| w.parse::<usize>().ok());
                points = Some(n.ok_or_else(|| invalid(format!("bad POINTS line {line:?}")))?);
            }
            Some("FIELDS") if words.by_ref().collect::<Vec<_>>() != ["x", "y", "z"] => {
                return Err(invalid(format!("unsupported fields {line:?}")));
            }
            Some("DATA") => break words.next().unwrap_or_default().to_string(),
            _ => {}
        }
    };
    let n = points.ok_or_else(|| invalid("missing POINTS line".into()))?;
    match encoding.as_str() {
        "ascii" => {
            let mut out = Vec::with_capacity(n);
            for line in input.lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let v: Vec<f32> = line
                    .split_whitespace()
                    .map(|w| w.parse().map_err(|_| invalid(format!("bad value in {line:?}"))))
                    .collect::<Result<_, _>>()?;
                if v.len() != 3 {
                    return Err(invalid(format!("expected 3 values, got {line:?}")));
                }
                out.push([v[0], v[1], v[2]]);
            }
            if out.len() != n {
                return Err(invalid(format!("POINTS {n} but {} rows", out.len())));
            }
            Ok(out)
        }
        "binary" => {
            let mut buf = vec![0u8; n * 12];
            input.read_exact(&mut buf)?;
            Ok(buf
                .chunks_exact(12)
                .map(|c| {
                    let f = |i: usize| f32::from_le_bytes(c[i * 4..i * 4 + 4].try_into().unwrap());
                    [f(0), f(1), f(2)]
                })
                .collect())
        }
        other => Err(invalid(format!("unsupported DATA encoding {other:?}"))),
    }
}

/// Writes `azimuth_index,channel,x,y,z,range` rows with a header line.
pub fn write_csv<W: Write>(scan: &LidarScan, mut out: W) -> io::Result<()> {
    writeln!(out, "azimuth_index,channel,x,y,z,range")?;
    for p in &scan.points {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            p.azimuth_index, p.channel, p.position.x, p.position.y, p.position.z, p.range
        )?;
    }
    out.flush()
}
