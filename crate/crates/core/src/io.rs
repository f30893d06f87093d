//! File formats: PLY point clouds, trajectory text files, and flat
//! key=value configuration.
//!
//! PLY supports ascii and binary little-endian with double-precision
//! x, y, z properties; ascii output uses Rust's shortest round-trip float
//! formatting, so both forms are lossless for `f64` coordinates.

use crate::error::{Error, Result};
use crate::se3::Pose;
use nalgebra::{Quaternion, Rotation3, UnitQuaternion, Vector3};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

pub fn save_ply(path: &Path, points: &[Vector3<f64>], format: PlyFormat) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let format_line = match format {
        PlyFormat::Ascii => "format ascii 1.0",
        PlyFormat::BinaryLittleEndian => "format binary_little_endian 1.0",
    };
    write!(
        w,
        "ply\n{format_line}\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nend_header\n",
        points.len()
    )?;
    match format {
        PlyFormat::Ascii => {
            for p in points {
                writeln!(w, "{} {} {}", p.x, p.y, p.z)?;
            }
        }
        PlyFormat::BinaryLittleEndian => {
            for p in points {
                for v in [p.x, p.y, p.z] {
                    w.write_all(&v.to_le_bytes())?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_ply(path: &Path) -> Result<Vec<Vector3<f64>>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut line = String::new();
    let mut read_line = |r: &mut BufReader<File>| -> Result<String> {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(Error::Parse("unexpected end of PLY header".into()));
        }
        Ok(line.trim_end().to_string())
    };

    if read_line(&mut r)? != "ply" {
        return Err(Error::Parse("missing 'ply' magic line".into()));
    }
    let format = match read_line(&mut r)?.as_str() {
        "format ascii 1.0" => PlyFormat::Ascii,
        "format binary_little_endian 1.0" => PlyFormat::BinaryLittleEndian,
        other => return Err(Error::Parse(format!("unsupported PLY format '{other}'"))),
    };
    let mut count: Option<usize> = None;
    let mut properties: Vec<String> = Vec::new();
    loop {
        let l = read_line(&mut r)?;
        if l == "end_header" {
            break;
        }
        if let Some(rest) = l.strip_prefix("element vertex ") {
            count = Some(
                rest.trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad vertex count '{rest}'")))?,
            );
        } else if let Some(rest) = l.strip_prefix("element ") {
            return Err(Error::Parse(format!("unsupported element '{rest}'")));
        } else if let Some(rest) = l.strip_prefix("property ") {
            properties.push(rest.to_string());
        } else if l.starts_with("comment") || l.is_empty() {
            continue;
        } else {
            return Err(Error::Parse(format!("unexpected header line '{l}'")));
        }
    }
    if properties != ["double x", "double y", "double z"] {
        return Err(Error::Parse(format!(
            "expected properties double x/y/z, got {properties:?}"
        )));
    }
    let count = count.ok_or_else(|| Error::Parse("missing vertex element".into()))?;

    let mut points = Vec::with_capacity(count);
    match format {
        PlyFormat::Ascii => {
            let mut body = String::new();
            r.read_to_string(&mut body)?;
            let mut fields = body.split_ascii_whitespace();
            for i in 0..count {
                let mut coord = [0.0f64; 3];
                for c in &mut coord {
                    let tok = fields
                        .next()
                        .ok_or_else(|| Error::Parse(format!("vertex {i}: missing coordinate")))?;
                    *c = tok
                        .parse()
                        .map_err(|_| Error::Parse(format!("vertex {i}: bad float '{tok}'")))?;
                }
                points.push(Vector3::new(coord[0], coord[1], coord[2]));
            }
        }
        PlyFormat::BinaryLittleEndian => {
            let mut buf = vec![0u8; count * 24];
            r.read_exact(&mut buf)?;
            for i in 0..count {
                let at = |k: usize| {
                    let mut b = [0u8; 8];
                    b.copy_from_slice(&buf[i * 24 + k * 8..i * 24 + (k + 1) * 8]);
                    f64::from_le_bytes(b)
                };
                points.push(Vector3::new(at(0), at(1), at(2)));
            }
        }
    }
    Ok(points)
}

/// One trajectory line: "timestamp tx ty tz qx qy qz qw". The stored
/// quaternion is unit-norm; the loader renormalizes mild formatting drift
/// and rejects anything farther than 1e-3 from unit length.
#[derive(Debug, Clone, Copy)]
pub struct TrajectoryRecord {
    pub timestamp: f64,
    pub pose: Pose,
}

pub fn save_trajectory(path: &Path, records: &[TrajectoryRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for rec in records {
        let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(
            rec.pose.rotation,
        ));
        let t = rec.pose.translation;
        writeln!(
            w,
            "{} {} {} {} {} {} {} {}",
            rec.timestamp, t.x, t.y, t.z, q.i, q.j, q.k, q.w
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_trajectory(path: &Path) -> Result<Vec<TrajectoryRecord>> {
    let r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<f64> = trimmed
            .split_ascii_whitespace()
            .map(|tok| {
                tok.parse()
                    .map_err(|_| Error::Parse(format!("line {}: bad float '{tok}'", lineno + 1)))
            })
            .collect::<Result<_>>()?;
        if fields.len() != 8 {
            return Err(Error::Parse(format!(
                "line {}: expected 8 fields, got {}",
                lineno + 1,
                fields.len()
            )));
        }
        let q = Quaternion::new(fields[7], fields[4], fields[5], fields[6]);
        if (q.norm() - 1.0).abs() > 1e-3 {
            return Err(Error::Parse(format!(
                "line {}: quaternion norm {} is not unit",
                lineno + 1,
                q.norm()
            )));
        }
        let rotation = UnitQuaternion::from_quaternion(q)
            .to_rotation_matrix()
            .into_inner();
        out.push(TrajectoryRecord {
            timestamp: fields[0],
            pose: Pose::new(rotation, Vector3::new(fields[1], fields[2], fields[3])),
        });
    }
    Ok(out)
}

/// Flat "key = value" configuration: one pair per line, '#' comments,
/// keys returned in sorted order for deterministic iteration.
pub fn load_key_values(path: &Path) -> Result<BTreeMap<String, String>> {
    let r = BufReader::new(File::open(path)?);
    let mut out = BTreeMap::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let stripped = match line.split_once('#') {
            Some((before, _)) => before,
            None => &line,
        }
        .trim();
        if stripped.is_empty() {
            continue;
        }
        let (key, value) = stripped.split_once('=').ok_or_else(|| {
            Error::Parse(format!("line {}: expected key = value", lineno + 1))
        })?;
        let key = key.trim().to_string();
        if key.is_empty() {
            return Err(Error::Parse(format!("line {}: empty key", lineno + 1)));
        }
        out.insert(key, value.trim().to_string());
    }
    Ok(out)
}
