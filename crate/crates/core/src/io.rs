//! Trajectory CSV and polyline JSON export, their parsers, spectrum CSV and
//! the `key = value` configuration file format.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::model::Vec3;
use crate::quantization::SpectrumEntry;

pub const TRAJECTORY_COLUMNS: [&str; 17] = [
    "t", "x1", "x2", "x3", "p1", "p2", "p3", "s1", "s2", "s3", "r", "E", "Jx", "Jy", "Jz", "L2", "sL",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::Config(format!("unknown format '{other}' (expected csv or json)"))),
        }
    }
}

fn number(v: f64) -> String {
    format!("{v:.16e}")
}

fn comment_header(title: &str, config: &serde_json::Value) -> String {
    format!("# {title}\n# config: {config}\n")
}

/// One row per sample with the columns of [`TRAJECTORY_COLUMNS`]. The
/// resolved configuration is embedded as a `#` comment line.
pub fn trajectory_csv(trajectory: &Trajectory, config: &serde_json::Value) -> Result<String> {
    if trajectory.samples.is_empty() {
        return Err(Error::InvalidParameter("cannot export an empty trajectory".into()));
    }
    let mut out = comment_header("spincoulomb trajectory", config);
    out.push_str(&TRAJECTORY_COLUMNS.join(","));
    out.push('\n');
    for s in &trajectory.samples {
        let st = &s.state;
        let c = &s.conserved;
        let row = [
            st.t,
            st.x[0],
            st.x[1],
            st.x[2],
            st.p[0],
            st.p[1],
            st.p[2],
            st.s[0],
            st.s[1],
            st.s[2],
            st.x.norm(),
            c.energy,
            c.j[0],
            c.j[1],
            c.j[2],
            c.l2,
            c.sl,
        ];
        let line: Vec<String> = row.iter().map(|v| number(*v)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    Ok(out)
}

/// Parses trajectory CSV text into rows of 17 values, skipping comment
/// lines and the header row.
pub fn parse_trajectory_csv(text: &str) -> Result<Vec<[f64; 17]>> {
    let mut rows = Vec::new();
    let mut header_seen = false;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !header_seen {
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols != TRAJECTORY_COLUMNS {
                return Err(Error::Config(format!("line {}: unexpected header '{line}'", lineno + 1)));
            }
            header_seen = true;
            continue;
        }
        let values: Vec<f64> = line
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))
            })
            .collect::<Result<_>>()?;
        let row: [f64; 17] = values
            .try_into()
            .map_err(|v: Vec<f64>| Error::Config(format!("line {}: {} columns, expected 17", lineno + 1, v.len())))?;
        rows.push(row);
    }
    if !header_seen {
        return Err(Error::Config("missing header row".into()));
    }
    Ok(rows)
}

/// Positions only, for external 3-D plotting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    pub config: serde_json::Value,
    pub points: Vec<[f64; 3]>,
}

pub fn polyline(trajectory: &Trajectory, config: &serde_json::Value) -> Polyline {
    let points = trajectory
        .samples
        .iter()
        .map(|s| {
            let x: &Vec3 = &s.state.x;
            [x[0], x[1], x[2]]
        })
        .collect();
    Polyline {
        config: config.clone(),
        points,
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn opt(v: Option<f64>) -> String {
    v.map(number).unwrap_or_default()
}

pub const SPECTRUM_COLUMNS: [&str; 18] = [
    "n",
    "n_r",
    "l",
    "j",
    "m",
    "s",
    "e_bs_closed",
    "e_bs_solved",
    "e_sommerfeld",
    "e_fn",
    "e_dirac",
    "e_electron",
    "lamb_shift",
    "r_circ",
    "h_segment",
    "solved_minus_closed",
    "fn_minus_closed",
    "errors",
];

/// Spectrum table as CSV; empty cells mark columns that do not apply.
pub fn spectrum_csv(entries: &[SpectrumEntry], config: &serde_json::Value) -> String {
    let mut out = comment_header("spincoulomb spectrum", config);
    out.push_str(&SPECTRUM_COLUMNS.join(","));
    out.push('\n');
    for e in entries {
        let q = &e.qn;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},\"{}\"",
            e.n,
            q.n_r,
            q.ell,
            q.j,
            q.m,
            q.s,
            number(e.e_bs_closed),
            opt(e.e_bs_solved),
            number(e.e_sommerfeld),
            opt(e.e_fn),
            opt(e.e_dirac),
            opt(e.e_electron),
            opt(e.lamb_shift),
            opt(e.r_circ),
            opt(e.h_segment),
            opt(e.diffs.solved_minus_closed),
            opt(e.diffs.fn_minus_closed),
            e.errors.join("; ").replace('"', "'"),
        );
    }
    out
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() && !dir.exists() {
            return Err(Error::io(path, "parent directory does not exist"));
        }
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// `key = value` lines; `#` starts a comment, blank lines are ignored.
/// Keys are the long flag names without dashes, e.g. `toggle-p4 = off`.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got '{line}'", lineno + 1)))?;
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        if key.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", lineno + 1)));
        }
        if map.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key '{key}'", lineno + 1)));
        }
    }
    Ok(map)
}

pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_text(&text)
}
