//! Plain-text landmark files:
//!
//! ```text
//! version: 1
//! n_points: 3
//! {
//! 10.5 20
//! 30 40.25
//! 12 18
//! }
//! ```

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{AamError, Result};
use crate::geometry::Shape;

pub const LANDMARK_VERSION: u32 = 1;

/// Parses landmark text; `origin` names the source in errors.
pub fn parse_landmarks(text: &str, origin: &str) -> Result<Shape> {
    let err = |line: usize, message: String| AamError::Parse {
        path: origin.to_string(),
        line,
        message,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let mut header = |key: &str| -> Result<(usize, String)> {
        let (no, line) = lines.next().ok_or_else(|| err(0, format!("missing `{key}` line")))?;
        match line.split_once(':') {
            Some((k, v)) if k.trim() == key => Ok((no, v.trim().to_string())),
            _ => Err(err(no, format!("expected `{key}: ...`, found `{line}`"))),
        }
    };
    let (no, version) = header("version")?;
    if version != LANDMARK_VERSION.to_string() {
        return Err(err(no, format!("unsupported version `{version}`")));
    }
    let (no, count) = header("n_points")?;
    let declared: usize = count
        .parse()
        .map_err(|_| err(no, format!("bad point count `{count}`")))?;
    match lines.next() {
        Some((_, "{")) => {}
        Some((no, l)) => return Err(err(no, format!("expected `{{`, found `{l}`"))),
        None => return Err(err(0, "missing `{`".into())),
    }
    let mut points = Vec::with_capacity(declared);
    let mut closed = false;
    for (no, line) in lines.by_ref() {
        if line == "}" {
            closed = true;
            break;
        }
        let vals: Vec<&str> = line.split_whitespace().collect();
        let [x, y] = vals.as_slice() else {
            return Err(err(no, format!("expected `x y`, found `{line}`")));
        };
        let parse = |s: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(no, format!("bad coordinate `{s}`")))
        };
        points.push([parse(x)?, parse(y)?]);
    }
    if !closed {
        return Err(err(0, "missing closing `}`".into()));
    }
    if let Some((no, l)) = lines.next() {
        return Err(err(no, format!("unexpected content after `}}`: `{l}`")));
    }
    if points.len() != declared {
        return Err(err(
            0,
            format!("declared {declared} points but found {}", points.len()),
        ));
    }
    Shape::from_points(&points).map_err(|e| err(0, e.to_string()))
}

/// Formats `shape` with shortest round-trip float text.
pub fn format_landmarks(shape: &Shape) -> String {
    let mut out = format!("version: {LANDMARK_VERSION}\nn_points: {}\n{{\n", shape.n_points());
    for [x, y] in shape.points() {
        let _ = writeln!(out, "{x:?} {y:?}");
    }
    out.push_str("}\n");
    out
}

pub fn read_landmarks(path: &Path) -> Result<Shape> {
    let text = std::fs::read_to_string(path).map_err(|e| AamError::io(path, e))?;
    parse_landmarks(&text, &path.display().to_string())
}

pub fn write_landmarks(path: &Path, shape: &Shape) -> Result<()> {
    std::fs::write(path, format_landmarks(shape)).map_err(|e| AamError::io(path, e))
}
