//! Motion files (JSON) and trajectory files (plain text).
//!
//! Motion file:
//! ```text
//! {"version":1,"fps":30.0,"joint_count":22,
//!  "agents":[{"frames":[[[x,y,z], ...joints], ...frames]}, {...}]}
//! ```
//! Floats are written in shortest round-trip form, so save/load is lossless.
//!
//! Trajectory file: a header line `fps=<f> frames=<L>` followed by `L` lines
//! of `x z` (or `x y z`) in meters.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde_json::{json, Value};

use super::{MotionSequence, Trajectory, TwoAgentMotion, Vec3};
use crate::error::{Error, Result};

pub const MOTION_FORMAT_VERSION: u32 = 1;

fn parse_err(field: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::Parse {
        field: field.into(),
        reason: reason.into(),
    }
}

pub fn motion_to_json(x: &TwoAgentMotion) -> Value {
    let agent = |m: &MotionSequence| {
        let frames: Vec<Vec<Vec3>> = (0..m.frames()).map(|f| m.frame(f).to_vec()).collect();
        json!({ "frames": frames })
    };
    json!({
        "version": MOTION_FORMAT_VERSION,
        "fps": x.fps(),
        "joint_count": x.agent_a.joints(),
        "agents": [agent(&x.agent_a), agent(&x.agent_b)],
    })
}

pub fn motion_from_json(v: &Value) -> Result<TwoAgentMotion> {
    let obj = v.as_object().ok_or_else(|| parse_err("<root>", "expected an object"))?;
    let version = obj
        .get("version")
        .ok_or_else(|| parse_err("version", "missing"))?
        .as_u64()
        .ok_or_else(|| parse_err("version", "expected an unsigned integer"))?;
    if version != u64::from(MOTION_FORMAT_VERSION) {
        return Err(Error::Version {
            found: version as u32,
            expected: MOTION_FORMAT_VERSION,
        });
    }
    let fps = obj
        .get("fps")
        .ok_or_else(|| parse_err("fps", "missing"))?
        .as_f64()
        .ok_or_else(|| parse_err("fps", "expected a number"))?;
    let joints = obj
        .get("joint_count")
        .ok_or_else(|| parse_err("joint_count", "missing"))?
        .as_u64()
        .ok_or_else(|| parse_err("joint_count", "expected an unsigned integer"))? as usize;
    let agents = obj
        .get("agents")
        .ok_or_else(|| parse_err("agents", "missing"))?
        .as_array()
        .ok_or_else(|| parse_err("agents", "expected an array"))?;
    if agents.len() != 2 {
        return Err(parse_err("agents", format!("expected 2 agents, got {}", agents.len())));
    }
    let mut seqs = Vec::with_capacity(2);
    for (ai, agent) in agents.iter().enumerate() {
        let field = format!("agents[{ai}].frames");
        let frames = agent
            .get("frames")
            .and_then(Value::as_array)
            .ok_or_else(|| parse_err(&field, "missing or not an array"))?;
        let mut positions = Vec::with_capacity(frames.len() * joints);
        for (fi, frame) in frames.iter().enumerate() {
            let ff = format!("{field}[{fi}]");
            let frame = frame.as_array().ok_or_else(|| parse_err(&ff, "expected an array"))?;
            if frame.len() != joints {
                return Err(parse_err(
                    &ff,
                    format!("expected {joints} joints, got {}", frame.len()),
                ));
            }
            for (ji, p) in frame.iter().enumerate() {
                let pf = format!("{ff}[{ji}]");
                let p = p.as_array().ok_or_else(|| parse_err(&pf, "expected [x, y, z]"))?;
                if p.len() != 3 {
                    return Err(parse_err(&pf, "expected 3 coordinates"));
                }
                let mut v = [0.0; 3];
                for (c, slot) in v.iter_mut().enumerate() {
                    *slot = p[c].as_f64().ok_or_else(|| parse_err(&pf, "non-numeric coordinate"))?;
                }
                positions.push(v);
            }
        }
        let seq = MotionSequence::new(joints, fps, positions)
            .map_err(|e| parse_err(&field, e.to_string()))?;
        seqs.push(seq);
    }
    let b = seqs.pop().unwrap();
    let a = seqs.pop().unwrap();
    TwoAgentMotion::new(a, b)
}

pub fn save_motion(x: &TwoAgentMotion, path: &Path) -> Result<()> {
    let text = serde_json::to_string(&motion_to_json(x)).expect("motion serializes");
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_motion(path: &Path) -> Result<TwoAgentMotion> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| {
        parse_err(
            "<document>",
            format!("malformed JSON at line {} column {}: {e}", e.line(), e.column()),
        )
    })?;
    motion_from_json(&v)
}

pub fn trajectory_to_string(tr: &Trajectory) -> String {
    let mut out = format!("fps={} frames={}\n", tr.fps(), tr.len());
    for (i, p) in tr.points().iter().enumerate() {
        match tr.heights() {
            Some(h) => writeln!(out, "{} {} {}", p[0], h[i], p[1]),
            None => writeln!(out, "{} {}", p[0], p[1]),
        }
        .unwrap();
    }
    out
}

pub fn trajectory_from_str(text: &str) -> Result<Trajectory> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| parse_err("header", "empty file"))?;
    let mut fps = None;
    let mut frames = None;
    for tok in header.split_whitespace() {
        match tok.split_once('=') {
            Some(("fps", v)) => {
                fps = Some(v.parse::<f64>().map_err(|e| parse_err("fps", e.to_string()))?)
            }
            Some(("frames", v)) => {
                frames = Some(v.parse::<usize>().map_err(|e| parse_err("frames", e.to_string()))?)
            }
            _ => return Err(parse_err("header", format!("unexpected token `{tok}`"))),
        }
    }
    let fps = fps.ok_or_else(|| parse_err("fps", "missing from header"))?;
    let frames = frames.ok_or_else(|| parse_err("frames", "missing from header"))?;
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(frames);
    for (i, line) in lines.enumerate() {
        let row = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| parse_err(format!("line {}", i + 2), e.to_string()))?;
        rows.push(row);
    }
    if rows.len() != frames {
        return Err(parse_err(
            "frames",
            format!("header declares {frames} frames, file has {}", rows.len()),
        ));
    }
    let width = rows[0].len();
    if rows.iter().any(|r| r.len() != width) || !(width == 2 || width == 3) {
        return Err(parse_err("points", "every line must hold 2 (x z) or 3 (x y z) values"));
    }
    if width == 2 {
        Trajectory::planar(fps, rows.iter().map(|r| [r[0], r[1]]).collect())
    } else {
        Trajectory::with_height(fps, rows.iter().map(|r| [r[0], r[1], r[2]]).collect())
    }
}

pub fn save_trajectory(tr: &Trajectory, path: &Path) -> Result<()> {
    fs::write(path, trajectory_to_string(tr)).map_err(|e| Error::io(path, e))
}

pub fn load_trajectory(path: &Path) -> Result<Trajectory> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    trajectory_from_str(&text)
}
