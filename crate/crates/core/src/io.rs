//! Checkpoint and export formats.
//!
//! Floats are written with 17 significant digits (`{:.16e}`), which
//! round-trips every `f64` exactly; JSON documents use the shortest
//! round-tripping representation.

use crate::bvp1d::{Profile1D, ScanRow};
use crate::error::{Error, Result};
use crate::eulerflow::FlowField;
use crate::nonlinearity::Mode;
use crate::strip2d::Field2D;
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

fn bad(path: &Path, reason: impl Into<String>) -> Error {
    Error::Checkpoint { path: path.display().to_string(), reason: reason.into() }
}

fn parse_f64(path: &Path, line: usize, s: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|e| bad(path, format!("line {line}: {e}")))
}

/// Writes `contents` atomically (temporary file then rename).
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_atomic(path, &s)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let s = fs::read_to_string(path)?;
    serde_json::from_str(&s).map_err(|e| bad(path, e.to_string()))
}

/// Sidecar metadata of a field checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldMeta {
    pub mode: Mode,
    pub lambda: f64,
    pub half_length: f64,
    /// Translation already applied to the coordinates.
    pub a: f64,
    pub x_min: f64,
    pub hx: f64,
    pub hy: f64,
    pub nx: usize,
    pub ny: usize,
    pub tol_residual: f64,
    pub tol_cont: f64,
}

/// Path of the sidecar for a field CSV: `field.csv` -> `field.meta.json`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta.json")
}

/// CSV `x1,x2,u` in storage order (columns of constant `x1`).
pub fn field_csv(u: &Field2D) -> String {
    let mut s = String::with_capacity(u.values().len() * 72 + 16);
    s.push_str("x1,x2,u\n");
    for i in 0..u.nx() {
        for j in 0..u.ny() {
            let _ = writeln!(s, "{:.16e},{:.16e},{:.16e}", u.x(i), u.y(j), u.at(i, j));
        }
    }
    s
}

pub fn write_field(path: &Path, u: &Field2D, meta: &FieldMeta) -> Result<()> {
    write_atomic(path, &field_csv(u))?;
    write_json(&sidecar_path(path), meta)
}

/// Reads a field checkpoint and checks it against its sidecar; the first and
/// last columns become the traces.
pub fn read_field(path: &Path) -> Result<(Field2D, FieldMeta)> {
    let meta: FieldMeta = read_json(&sidecar_path(path))?;
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next() != Some("x1,x2,u") {
        return Err(bad(path, "expected header `x1,x2,u`"));
    }
    let n = meta.nx * meta.ny;
    let mut values = Vec::with_capacity(n);
    for (k, line) in lines.enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 3 {
            return Err(bad(path, format!("line {}: expected 3 columns", k + 2)));
        }
        if k >= n {
            return Err(bad(path, "more rows than nx * ny"));
        }
        let (i, j) = (k / meta.ny, k % meta.ny);
        let x = parse_f64(path, k + 2, cols[0])?;
        let y = parse_f64(path, k + 2, cols[1])?;
        let want_x = meta.x_min + i as f64 * meta.hx;
        let want_y = j as f64 * meta.hy;
        if x != want_x || y != want_y {
            return Err(bad(path, format!("line {}: node ({x}, {y}) off the sidecar grid", k + 2)));
        }
        values.push(parse_f64(path, k + 2, cols[2])?);
    }
    if values.len() != n {
        return Err(bad(path, format!("expected {n} rows, found {}", values.len())));
    }
    let (ny, nx) = (meta.ny, meta.nx);
    let left = values[..ny].to_vec();
    let right = values[(nx - 1) * ny..].to_vec();
    let u = Field2D::new(meta.mode, meta.x_min, meta.hx, nx, ny, left, right, values)?;
    if u.hy() != meta.hy {
        return Err(bad(path, "hy disagrees with ny"));
    }
    Ok((u, meta))
}

/// CSV `t,psi`.
pub fn profile_csv(p: &Profile1D) -> String {
    let mut s = String::from("t,psi\n");
    for (j, v) in p.values().iter().enumerate() {
        let _ = writeln!(s, "{:.16e},{:.16e}", p.t(j), v);
    }
    s
}

pub fn read_profile_csv(path: &Path, mode: Mode) -> Result<Profile1D> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next() != Some("t,psi") {
        return Err(bad(path, "expected header `t,psi`"));
    }
    let mut values = Vec::new();
    for (k, line) in lines.enumerate() {
        let (_, v) = line.split_once(',').ok_or_else(|| bad(path, format!("line {}: expected 2 columns", k + 2)))?;
        values.push(parse_f64(path, k + 2, v)?);
    }
    Profile1D::new(mode, values)
}

/// CSV `k,lambda,m_lambda,basin_count,below,sup_norms`; sup-norms are `;`-separated.
pub fn scan_csv(rows: &[ScanRow]) -> String {
    let mut s = String::from("k,lambda,m_lambda,basin_count,below,sup_norms\n");
    for r in rows {
        let sups: Vec<String> = r.sup_norms.iter().map(|x| format!("{x:.16e}")).collect();
        let _ = writeln!(
            s,
            "{},{:.16e},{:.16e},{},{},{}",
            r.k,
            r.lambda,
            r.m_lambda,
            r.basin_count,
            r.below,
            sups.join(";")
        );
    }
    s
}

pub fn read_scan_csv(path: &Path) -> Result<Vec<ScanRow>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next() != Some("k,lambda,m_lambda,basin_count,below,sup_norms") {
        return Err(bad(path, "unexpected header"));
    }
    lines
        .enumerate()
        .map(|(n, line)| {
            let c: Vec<&str> = line.split(',').collect();
            if c.len() != 6 {
                return Err(bad(path, format!("line {}: expected 6 columns", n + 2)));
            }
            let int = |s: &str| s.parse::<i64>().map_err(|e| bad(path, format!("line {}: {e}", n + 2)));
            let sup_norms = if c[5].is_empty() {
                Vec::new()
            } else {
                c[5].split(';').map(|x| parse_f64(path, n + 2, x)).collect::<Result<_>>()?
            };
            Ok(ScanRow {
                k: int(c[0])? as i32,
                lambda: parse_f64(path, n + 2, c[1])?,
                m_lambda: parse_f64(path, n + 2, c[2])?,
                basin_count: int(c[3])? as usize,
                below: c[4].parse().map_err(|_| bad(path, format!("line {}: bad bool", n + 2)))?,
                sup_norms,
            })
        })
        .collect()
}

/// CSV `x1,x2,v1,v2,P` in storage order.
pub fn flow_csv(v: &FlowField) -> String {
    let mut s = String::with_capacity(v.v1.len() * 120 + 16);
    s.push_str("x1,x2,v1,v2,P\n");
    for i in 0..v.nx {
        for j in 0..v.ny {
            let k = i * v.ny + j;
            let _ = writeln!(
                s,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                v.x(i),
                v.y(j),
                v.v1[k],
                v.v2[k],
                v.p[k]
            );
        }
    }
    s
}

/// Reads a flow CSV back; the grid is recovered from the node coordinates.
pub fn read_flow_csv(path: &Path, end_margin: f64) -> Result<FlowField> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next() != Some("x1,x2,v1,v2,P") {
        return Err(bad(path, "expected header `x1,x2,v1,v2,P`"));
    }
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    let (mut v1, mut v2, mut p) = (Vec::new(), Vec::new(), Vec::new());
    for (n, line) in lines.enumerate() {
        let c: Vec<&str> = line.split(',').collect();
        if c.len() != 5 {
            return Err(bad(path, format!("line {}: expected 5 columns", n + 2)));
        }
        xs.push(parse_f64(path, n + 2, c[0])?);
        ys.push(parse_f64(path, n + 2, c[1])?);
        v1.push(parse_f64(path, n + 2, c[2])?);
        v2.push(parse_f64(path, n + 2, c[3])?);
        p.push(parse_f64(path, n + 2, c[4])?);
    }
    let ny = ys.iter().skip(1).position(|&y| y == 0.0).map(|k| k + 1).unwrap_or(ys.len());
    if ny < 3 || xs.len() % ny != 0 {
        return Err(bad(path, "rows do not form a rectangular grid"));
    }
    let nx = xs.len() / ny;
    if nx < 3 {
        return Err(bad(path, "need at least three columns"));
    }
    let hx = xs[ny] - xs[0];
    Ok(FlowField::from_parts(xs[0], hx, nx, ny, v1, v2, p, end_margin))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strip2d::seed_field;

    #[test]
    fn field_round_trip_is_bit_exact() {
        let phi = Profile1D::trivial(Mode::Ramp, 8);
        let phibar = Profile1D::from_fn(Mode::Ramp, 8, |t| t + (std::f64::consts::PI * t).sin() / 3.0);
        let u = seed_field(&phi, &phibar, 1.0, 0.25).unwrap().translated(0.1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field.csv");
        let meta = FieldMeta {
            mode: Mode::Ramp,
            lambda: 0.1,
            half_length: 1.0,
            a: 0.1,
            x_min: u.x_min(),
            hx: u.hx(),
            hy: u.hy(),
            nx: u.nx(),
            ny: u.ny(),
            tol_residual: 1e-8,
            tol_cont: 1e-4,
        };
        write_field(&path, &u, &meta).unwrap();
        let (back, meta2) = read_field(&path).unwrap();
        assert_eq!(back, u);
        assert_eq!(meta2, meta);
    }

    #[test]
    fn truncated_field_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        let u = crate::strip2d::uniform_field(&Profile1D::trivial(Mode::Zero, 4), 0.5, 0.25).unwrap();
        let meta = FieldMeta {
            mode: Mode::Zero,
            lambda: 0.0,
            half_length: 0.5,
            a: 0.0,
            x_min: u.x_min(),
            hx: u.hx(),
            hy: u.hy(),
            nx: u.nx(),
            ny: u.ny(),
            tol_residual: 1e-8,
            tol_cont: 1e-4,
        };
        write_field(&path, &u, &meta).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let cut: String = text.lines().take(5).map(|l| format!("{l}\n")).collect();
        std::fs::write(&path, cut).unwrap();
        assert!(matches!(read_field(&path), Err(Error::Checkpoint { .. })));
    }
}
