//! File formats: the field file (JSON manifest line plus CSV body), the
//! profile CSV, and JSON reports. Floats serialize with 17 significant
//! digits so round trips are exact; writes go through a temp file and a
//! rename.

use crate::error::{Error, Result};
use crate::field::MultiField;
use crate::frequency::FrequencyProfile;
use crate::grid::BranchedGrid;
use crate::trace::BoundaryTrace;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

/// Manifest line of a field file.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FieldManifest {
    pub version: u32,
    pub qbar: usize,
    pub q: usize,
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub rho: f64,
}

/// 17 significant digits: enough to reproduce any f64 exactly.
pub fn format_float(x: f64) -> String {
    if x == f64::INFINITY {
        "inf".to_string()
    } else if x == f64::NEG_INFINITY {
        "-inf".to_string()
    } else if x.is_nan() {
        "nan".to_string()
    } else {
        format!("{:.16e}", x)
    }
}

pub fn parse_float(s: &str) -> Result<f64> {
    match s {
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        "nan" => Ok(f64::NAN),
        _ => s
            .parse::<f64>()
            .map_err(|e| Error::Format(format!("bad float {s:?}: {e}"))),
    }
}

/// Writes `bytes` atomically (temp file in the same directory, then
/// rename).
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "out".into())
    ));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Field file: first line the JSON manifest, then a CSV header and one row
/// `k,m,v1..v{q·n}` per node in canonical order (center row first).
pub fn write_field(path: &Path, field: &MultiField) -> Result<()> {
    let grid = field.grid();
    let manifest = FieldManifest {
        version: 1,
        qbar: grid.qbar(),
        q: field.q(),
        n: field.dim(),
        k: grid.radial_count(),
        m: grid.angular_base(),
        rho: grid.rho(),
    };
    let mut buf = Vec::new();
    {
        let mut w = BufWriter::new(&mut buf);
        writeln!(w, "{}", serde_json::to_string(&manifest)?).map_err(Error::Io)?;
        write!(w, "k,m").map_err(Error::Io)?;
        for i in 0..field.q() * field.dim() {
            write!(w, ",v{}", i + 1).map_err(Error::Io)?;
        }
        writeln!(w).map_err(Error::Io)?;
        let mut row = |k: usize, m: usize| -> Result<()> {
            write!(w, "{k},{m}").map_err(Error::Io)?;
            for v in field.values_at(k, m) {
                write!(w, ",{}", format_float(*v)).map_err(Error::Io)?;
            }
            writeln!(w).map_err(Error::Io)?;
            Ok(())
        };
        row(0, 0)?;
        for k in 1..=grid.radial_count() {
            for m in 0..grid.angular_count() {
                row(k, m)?;
            }
        }
        w.flush().map_err(Error::Io)?;
    }
    atomic_write(path, &buf)
}

pub fn read_field(path: &Path) -> Result<MultiField> {
    let file = std::fs::File::open(path)?;
    let mut lines = std::io::BufReader::new(file).lines();
    let manifest_line = lines
        .next()
        .ok_or_else(|| Error::Format("empty field file".into()))??;
    let manifest: FieldManifest = serde_json::from_str(&manifest_line)?;
    if manifest.version != 1 {
        return Err(Error::Format(format!(
            "unsupported field file version {}",
            manifest.version
        )));
    }
    let grid = BranchedGrid::new(manifest.qbar, manifest.rho, manifest.k, manifest.m)?;
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("missing header row".into()))??;
    let expected_cols = 2 + manifest.q * manifest.n;
    if header.split(',').count() != expected_cols {
        return Err(Error::Format("header arity mismatch".into()));
    }
    let mut values = vec![0.0; grid.node_count() * manifest.q * manifest.n];
    let mut seen = vec![false; grid.node_count()];
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let k: usize = parts
            .next()
            .ok_or_else(|| Error::Format("missing k".into()))?
            .parse()
            .map_err(|e| Error::Format(format!("bad k: {e}")))?;
        let m: usize = parts
            .next()
            .ok_or_else(|| Error::Format("missing m".into()))?
            .parse()
            .map_err(|e| Error::Format(format!("bad m: {e}")))?;
        if k > manifest.k || (k > 0 && m >= grid.angular_count()) {
            return Err(Error::Format(format!("node ({k},{m}) out of range")));
        }
        let node = grid.node_index(k, m);
        let base = node * manifest.q * manifest.n;
        for i in 0..manifest.q * manifest.n {
            let tok = parts
                .next()
                .ok_or_else(|| Error::Format("row too short".into()))?;
            values[base + i] = parse_float(tok)?;
        }
        if parts.next().is_some() {
            return Err(Error::Format("row too long".into()));
        }
        seen[node] = true;
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::Format("field file misses nodes".into()));
    }
    MultiField::from_raw(grid, manifest.q, manifest.n, values)
}

/// profile.csv with the exact header `r,D,H,E,G,F,Lambda,I,K`; undefined
/// I and K serialize as `nan`.
pub fn profile_csv(profile: &FrequencyProfile) -> String {
    let mut out = String::from("r,D,H,E,G,F,Lambda,I,K\n");
    for row in &profile.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            format_float(row.r),
            format_float(row.d),
            format_float(row.h),
            format_float(row.e),
            format_float(row.g),
            format_float(row.f),
            format_float(row.lambda),
            format_float(row.i.unwrap_or(f64::NAN)),
            format_float(row.k_inv.unwrap_or(f64::NAN)),
        ));
    }
    out
}

pub fn write_profile_csv(path: &Path, profile: &FrequencyProfile) -> Result<()> {
    atomic_write(path, profile_csv(profile).as_bytes())
}

/// Serialized boundary trace (used in the blow-up report for f₀).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceFile {
    pub qbar: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub q: usize,
    pub n: usize,
    pub radius: f64,
    pub values: Vec<f64>,
}

impl TraceFile {
    pub fn from_trace(tr: &BoundaryTrace) -> Self {
        let mut values = Vec::with_capacity(tr.samples() * tr.q() * tr.dim());
        for m in 0..tr.samples() {
            values.extend_from_slice(tr.values_at(m));
        }
        Self {
            qbar: tr.qbar(),
            m: tr.angular_base(),
            q: tr.q(),
            n: tr.dim(),
            radius: tr.radius(),
            values,
        }
    }

    pub fn into_trace(self) -> Result<BoundaryTrace> {
        BoundaryTrace::new(self.qbar, self.m, self.q, self.n, self.radius, self.values)
    }
}

/// Pretty JSON with a trailing newline (stable field order, reproducible
/// bytes).
pub fn to_json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    atomic_write(path, &to_json_bytes(value)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{generate, GeneratorKind, GeneratorSpec, ModeSpec, PieceSpec};

    #[test]
    fn field_file_round_trip_is_bit_exact() {
        let grid = BranchedGrid::new(2, 1.25, 8, 8).unwrap();
        let spec = GeneratorSpec {
            n: 2,
            seed: 11,
            kind: GeneratorKind::RandomLipschitz {
                q: 3,
                l_max: 4,
                amplitude: 0.7,
                separation: 3.0,
            },
        };
        let f = generate(&spec, grid).unwrap();
        let dir = std::env::temp_dir().join("qbranch-io-test");
        let path = dir.join("field.qb");
        write_field(&path, &f).unwrap();
        let g = read_field(&path).unwrap();
        assert_eq!(f.raw_values(), g.raw_values());
        assert_eq!(f.q(), g.q());
        assert_eq!(f.grid(), g.grid());
        // identical bytes when re-written
        let bytes1 = std::fs::read(&path).unwrap();
        write_field(&path, &g).unwrap();
        let bytes2 = std::fs::read(&path).unwrap();
        assert_eq!(bytes1, bytes2);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn float_formatting_round_trips() {
        for x in [
            0.0,
            -0.0,
            1.0 / 3.0,
            std::f64::consts::PI,
            1.234567890123456e-300,
            -9.87e250,
            f64::INFINITY,
            f64::NEG_INFINITY,
        ] {
            let s = format_float(x);
            let y = parse_float(&s).unwrap();
            assert!(x == y || (x.is_nan() && y.is_nan()), "{x} -> {s} -> {y}");
        }
        assert!(parse_float("nan").unwrap().is_nan());
    }

    #[test]
    fn profile_csv_has_documented_header() {
        let grid = BranchedGrid::new(1, 1.0, 8, 8).unwrap();
        let spec = GeneratorSpec {
            n: 1,
            seed: 0,
            kind: GeneratorKind::Homogeneous {
                pieces: vec![PieceSpec {
                    q_j: 1,
                    offset: vec![],
                    modes: vec![ModeSpec {
                        l: 1,
                        a: vec![1.0],
                        b: vec![0.0],
                    }],
                }],
            },
        };
        let f = generate(&spec, grid).unwrap();
        let p = crate::frequency::profile(&f, 0.5, 1e-9);
        let csv = profile_csv(&p);
        assert!(csv.starts_with("r,D,H,E,G,F,Lambda,I,K\n"));
        assert_eq!(csv.lines().count(), 9);
    }

    #[test]
    fn malformed_field_files_are_rejected() {
        let dir = std::env::temp_dir().join("qbranch-io-bad");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.qb");
        std::fs::write(&path, b"{\"version\":1,\"qbar\":1,\"q\":1,\"n\":1,\"K\":8,\"M\":8,\"rho\":1.0}\nk,m,v1\n0,0,oops\n").unwrap();
        assert!(read_field(&path).is_err());
        std::fs::write(&path, b"not json\n").unwrap();
        assert!(read_field(&path).is_err());
        std::fs::remove_dir_all(&dir).ok();
    }
}
