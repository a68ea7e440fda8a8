//! Trajectory text files, one pose per line:
//! `timestamp tx ty tz qx qy qz qw`. Lines starting with `#` are comments.
//! Numbers are written in shortest round-trip form.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use cloudiff_core::{Pose, Vector3};

use super::FormatError;

pub fn format_trajectory(poses: &[(f64, Pose)]) -> String {
    let mut out = String::from("# timestamp tx ty tz qx qy qz qw\n");
    for (t, p) in poses {
        let q = p.rotation.quaternion();
        let v = p.translation;
        let _ = writeln!(out, "{t} {} {} {} {} {} {} {}", v.x, v.y, v.z, q.i, q.j, q.k, q.w);
    }
    out
}

pub fn parse_trajectory(text: &str) -> Result<Vec<(f64, Pose)>, FormatError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: Vec<f64> = line
            .split_whitespace()
            .map(|w| w.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| FormatError::Invalid(format!("line {}: {e}", n + 1)))?;
        if v.len() != 8 || v.iter().any(|x| !x.is_finite()) {
            return Err(FormatError::Invalid(format!("line {}: expected 8 finite numbers", n + 1)));
        }
        if v[4..].iter().all(|x| *x == 0.0) {
            return Err(FormatError::Invalid(format!("line {}: zero quaternion", n + 1)));
        }
        out.push((v[0], Pose::from_wxyz(Vector3::new(v[1], v[2], v[3]), v[7], v[4], v[5], v[6])));
    }
    Ok(out)
}

pub fn write_trajectory(path: &Path, poses: &[(f64, Pose)]) -> Result<(), FormatError> {
    Ok(fs::write(path, format_trajectory(poses))?)
}

pub fn read_trajectory(path: &Path) -> Result<Vec<(f64, Pose)>, FormatError> {
    parse_trajectory(&fs::read_to_string(path)?)
}
