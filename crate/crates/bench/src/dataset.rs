//! Trajectory dataset files.
//!
//! Binary layout: the 8-byte magic `CFODATA\0`, a little-endian `u64` header
//! length, the JSON header, then every state as a little-endian `f64` in
//! trajectory-major, time-major, component-minor order. Grids live in the
//! header. The JSON-only variant (`.json`) carries the states inline.

use std::io::{Read, Write};
use std::path::Path;

use cfo_core::systems::{GeneratorInfo, SystemTag, TrajectorySet};
use cfo_core::TimeGrid;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

pub const MAGIC: &[u8; 8] = b"CFODATA\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    system: SystemTag,
    state_dim: usize,
    raw_horizon: f64,
    n_trajectories: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    generator: Option<GeneratorInfo>,
    /// Set when all trajectories share one grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    shared_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    grids: Option<Vec<Vec<f64>>>,
    /// Only in JSON-only files.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    states: Option<Vec<Vec<Vec<f64>>>>,
}

fn header_of(set: &TrajectorySet, inline_states: bool) -> Header {
    let (shared_grid, grids) = match set.shared_grid() {
        Some(g) => (Some(g.times().to_vec()), None),
        None => (None, Some(set.grids.iter().map(|g| g.times().to_vec()).collect())),
    };
    Header {
        format_version: FORMAT_VERSION,
        system: set.system,
        state_dim: set.state_dim,
        raw_horizon: set.raw_horizon,
        n_trajectories: set.len(),
        generator: set.generator.clone(),
        shared_grid,
        grids,
        states: inline_states.then(|| {
            set.states
                .iter()
                .map(|s| s.rows().into_iter().map(|r| r.to_vec()).collect())
                .collect()
        }),
    }
}

/// Serializes to the binary container.
pub fn to_bytes(set: &TrajectorySet) -> Vec<u8> {
    let header = serde_json::to_vec(&header_of(set, false)).expect("header serializes");
    let n_values: usize = set.states.iter().map(|s| s.len()).sum();
    let mut out = Vec::with_capacity(16 + header.len() + 8 * n_values);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for s in &set.states {
        for v in s.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Serializes to the JSON-only form.
pub fn to_json(set: &TrajectorySet) -> String {
    serde_json::to_string(&header_of(set, true)).expect("header serializes")
}

fn rebuild(header: Header, flat: Option<Vec<f64>>, origin: &str) -> Result<TrajectorySet> {
    let bad = |reason: String| BenchError::format(origin, reason);
    if header.format_version != FORMAT_VERSION {
        return Err(bad(format!(
            "format version {} is not supported (expected {FORMAT_VERSION})",
            header.format_version
        )));
    }
    let n = header.n_trajectories;
    let grid_times: Vec<Vec<f64>> = match (header.shared_grid, header.grids) {
        (Some(g), None) => vec![g; n],
        (None, Some(gs)) if gs.len() == n => gs,
        _ => return Err(bad("header must hold either one shared grid or one grid per trajectory".into())),
    };
    let grids = grid_times
        .into_iter()
        .map(|t| TimeGrid::new(t, header.raw_horizon))
        .collect::<cfo_core::Result<Vec<_>>>()
        .map_err(|e| bad(e.to_string()))?;
    let d = header.state_dim;
    let mut states = Vec::with_capacity(n);
    match (flat, header.states) {
        (Some(flat), None) => {
            let expected: usize = grids.iter().map(|g| g.len() * d).sum();
            if flat.len() != expected {
                return Err(bad(format!("expected {expected} state values, found {}", flat.len())));
            }
            let mut offset = 0;
            for g in &grids {
                let len = g.len() * d;
                states.push(Array2::from_shape_vec((g.len(), d), flat[offset..offset + len].to_vec()).unwrap());
                offset += len;
            }
        }
        (None, Some(inline)) => {
            if inline.len() != n {
                return Err(bad("inline state count does not match trajectory count".into()));
            }
            for (k, (rows, g)) in inline.into_iter().zip(&grids).enumerate() {
                if rows.len() != g.len() || rows.iter().any(|r| r.len() != d) {
                    return Err(bad(format!("trajectory {k} has the wrong shape")));
                }
                states.push(Array2::from_shape_vec((g.len(), d), rows.concat()).unwrap());
            }
        }
        _ => return Err(bad("states must appear either inline or in the binary block".into())),
    }
    let mut set = TrajectorySet::new(header.system, grids, states).map_err(|e| bad(e.to_string()))?;
    if set.state_dim != d {
        return Err(bad("state dimension does not match the header".into()));
    }
    set.generator = header.generator;
    Ok(set)
}

pub fn from_bytes(bytes: &[u8], origin: &str) -> Result<TrajectorySet> {
    let bad = |reason: &str| BenchError::format(origin, reason);
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("not a trajectory dataset (bad magic)"));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = &bytes[16..];
    if body.len() < hlen {
        return Err(bad("truncated header"));
    }
    let header: Header = serde_json::from_slice(&body[..hlen]).map_err(|e| bad(&e.to_string()))?;
    let data = &body[hlen..];
    if !data.len().is_multiple_of(8) {
        return Err(bad("state block is not a whole number of f64 values"));
    }
    let flat = data
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    rebuild(header, Some(flat), origin)
}

pub fn from_json(text: &str, origin: &str) -> Result<TrajectorySet> {
    let header: Header = serde_json::from_str(text).map_err(|e| BenchError::format(origin, e.to_string()))?;
    rebuild(header, None, origin)
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "json")
}

/// Writes `set`, choosing the JSON-only form for `.json` paths.
pub fn save(set: &TrajectorySet, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
    }
    let bytes = if is_json(path) { to_json(set).into_bytes() } else { to_bytes(set) };
    let mut f = std::fs::File::create(path).map_err(|e| BenchError::io(path, e))?;
    f.write_all(&bytes).map_err(|e| BenchError::io(path, e))
}

pub fn load(path: &Path) -> Result<TrajectorySet> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| BenchError::io(path, e))?;
    let origin = path.display().to_string();
    if is_json(path) {
        let text = String::from_utf8(bytes).map_err(|e| BenchError::format(path, e.to_string()))?;
        from_json(&text, &origin)
    } else {
        from_bytes(&bytes, &origin)
    }
}
