//! Extended-XYZ text frames.
//!
//! ```text
//! 2
//! Lattice="5 0 0 0 5 0 0 0 5" Properties=species:S:1:pos:R:3:forces:R:3 energy=-0.1 pbc="T T T"
//! Ar 0.0 0.0 0.0 0.1 0.0 0.0
//! Ar 1.1 0.0 0.0 -0.1 0.0 0.0
//! ```
//!
//! Floats are written with 17 significant digits, which round-trips every
//! `f64` exactly. Header keys this module does not interpret are kept in
//! [`AtomicConfiguration::info`] and written back unchanged.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Matrix3;
use thiserror::Error;

use crate::frame::LabeledFrame;
use crate::geometry::{Cell, Vec3};
use crate::structure::AtomicConfiguration;

#[derive(Debug, Error)]
pub enum XyzError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn perr(line: usize, message: impl Into<String>) -> XyzError {
    XyzError::Parse { line, message: message.into() }
}

/// A decoded block: labeled when both energy and forces are present.
#[derive(Debug, Clone, PartialEq)]
pub enum Frame {
    Bare(AtomicConfiguration),
    Labeled(LabeledFrame),
}

impl Frame {
    pub fn config(&self) -> &AtomicConfiguration {
        match self {
            Frame::Bare(c) => c,
            Frame::Labeled(f) => &f.config,
        }
    }

    pub fn into_config(self) -> AtomicConfiguration {
        match self {
            Frame::Bare(c) => c,
            Frame::Labeled(f) => f.config,
        }
    }
}

impl From<AtomicConfiguration> for Frame {
    fn from(c: AtomicConfiguration) -> Self {
        Frame::Bare(c)
    }
}

impl From<LabeledFrame> for Frame {
    fn from(f: LabeledFrame) -> Self {
        Frame::Labeled(f)
    }
}

fn fmt_f(x: f64) -> String {
    format!("{x:.16e}")
}

fn quote(v: &str) -> String {
    if !v.is_empty() && !v.contains(|c: char| c.is_whitespace() || c == '"' || c == '=') {
        return v.to_string();
    }
    let mut s = String::from("\"");
    for c in v.chars() {
        if c == '"' || c == '\\' {
            s.push('\\');
        }
        s.push(c);
    }
    s.push('"');
    s
}

fn flag(b: bool) -> &'static str {
    if b {
        "T"
    } else {
        "F"
    }
}

/// Encodes one configuration, optionally with energy and forces.
pub fn encode_config(config: &AtomicConfiguration) -> String {
    encode_parts(config, None)
}

pub fn encode_labeled(frame: &LabeledFrame) -> String {
    encode_parts(&frame.config, Some(frame))
}

pub fn encode_frame(frame: &Frame) -> String {
    match frame {
        Frame::Bare(c) => encode_config(c),
        Frame::Labeled(f) => encode_labeled(f),
    }
}

fn encode_parts(c: &AtomicConfiguration, label: Option<&LabeledFrame>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{}", c.len());
    let mut header: Vec<String> = Vec::new();
    let h = c.cell.vectors();
    if c.cell.is_periodic() || h.iter().any(|&x| x != 0.0) {
        let vals: Vec<String> = (0..3)
            .flat_map(|r| (0..3).map(move |k| (r, k)))
            .map(|(r, k)| fmt_f(h[(r, k)]))
            .collect();
        header.push(format!("Lattice=\"{}\"", vals.join(" ")));
    }
    let mut props = String::from("species:S:1:pos:R:3");
    if c.velocities.is_some() {
        props.push_str(":vel:R:3");
    }
    if c.region_tags.is_some() {
        props.push_str(":region:S:1");
    }
    if label.is_some() {
        props.push_str(":forces:R:3");
    }
    header.push(format!("Properties={props}"));
    if let Some(f) = label {
        header.push(format!("energy={}", fmt_f(f.energy)));
    }
    let p = c.cell.periodic();
    header.push(format!("pbc=\"{} {} {}\"", flag(p[0]), flag(p[1]), flag(p[2])));
    if !c.structure_id.is_empty() {
        header.push(format!("structure_id={}", quote(&c.structure_id)));
    }
    if c.is_validation {
        header.push("is_validation=T".to_string());
    }
    if let Some(f) = label {
        header.push(format!("label_source={}", quote(&f.label_source)));
    }
    for (k, v) in &c.info {
        header.push(format!("{}={}", k, quote(v)));
    }
    let _ = writeln!(out, "{}", header.join(" "));
    for i in 0..c.len() {
        let r = &c.positions[i];
        let _ = write!(out, "{} {} {} {}", c.species[i], fmt_f(r.x), fmt_f(r.y), fmt_f(r.z));
        if let Some(v) = &c.velocities {
            let _ = write!(out, " {} {} {}", fmt_f(v[i].x), fmt_f(v[i].y), fmt_f(v[i].z));
        }
        if let Some(t) = &c.region_tags {
            let _ = write!(out, " {}", t[i]);
        }
        if let Some(f) = label {
            let g = &f.forces[i];
            let _ = write!(out, " {} {} {}", fmt_f(g.x), fmt_f(g.y), fmt_f(g.z));
        }
        out.push('\n');
    }
    out
}

/// Splits a header into `key=value` pairs, honoring double quotes and
/// backslash escapes. A bare key is read as the flag value `T`.
fn tokenize(line: &str, lineno: usize) -> Result<Vec<(String, String)>, XyzError> {
    let mut out = Vec::new();
    let mut chars = line.chars().peekable();
    loop {
        while chars.peek().is_some_and(|c| c.is_whitespace()) {
            chars.next();
        }
        if chars.peek().is_none() {
            break;
        }
        let mut key = String::new();
        while let Some(&c) = chars.peek() {
            if c == '=' || c.is_whitespace() {
                break;
            }
            key.push(c);
            chars.next();
        }
        if chars.peek() != Some(&'=') {
            out.push((key, "T".to_string()));
            continue;
        }
        chars.next();
        let mut value = String::new();
        if chars.peek() == Some(&'"') {
            chars.next();
            let mut closed = false;
            while let Some(c) = chars.next() {
                match c {
                    '\\' => {
                        if let Some(n) = chars.next() {
                            value.push(n);
                        }
                    }
                    '"' => {
                        closed = true;
                        break;
                    }
                    _ => value.push(c),
                }
            }
            if !closed {
                return Err(perr(lineno, format!("unterminated quote in value of `{key}`")));
            }
        } else {
            while let Some(&c) = chars.peek() {
                if c.is_whitespace() {
                    break;
                }
                value.push(c);
                chars.next();
            }
        }
        if key.is_empty() {
            return Err(perr(lineno, "empty header key"));
        }
        out.push((key, value));
    }
    Ok(out)
}

#[derive(Clone, Copy, PartialEq)]
enum Column {
    Species,
    Pos,
    Vel,
    Region,
    Forces,
}

fn parse_properties(spec: &str, lineno: usize) -> Result<Vec<Column>, XyzError> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() % 3 != 0 {
        return Err(perr(lineno, format!("malformed Properties `{spec}`")));
    }
    let mut cols = Vec::new();
    for t in parts.chunks(3) {
        let col = match (t[0], t[1], t[2]) {
            ("species", "S", "1") => Column::Species,
            ("pos", "R", "3") => Column::Pos,
            ("vel" | "velocities", "R", "3") => Column::Vel,
            ("region", "S", "1") => Column::Region,
            ("forces", "R", "3") => Column::Forces,
            _ => return Err(perr(lineno, format!("unsupported property `{}:{}:{}`", t[0], t[1], t[2]))),
        };
        if cols.contains(&col) {
            return Err(perr(lineno, format!("duplicate property `{}`", t[0])));
        }
        cols.push(col);
    }
    if !cols.contains(&Column::Species) || !cols.contains(&Column::Pos) {
        return Err(perr(lineno, "Properties must include species and pos"));
    }
    Ok(cols)
}

fn parse_f(s: &str, lineno: usize, what: &str) -> Result<f64, XyzError> {
    s.parse::<f64>().map_err(|_| perr(lineno, format!("non-numeric {what} `{s}`")))
}

fn parse_bool(s: &str, lineno: usize) -> Result<bool, XyzError> {
    match s {
        "T" | "True" | "true" | "1" => Ok(true),
        "F" | "False" | "false" | "0" => Ok(false),
        _ => Err(perr(lineno, format!("invalid boolean `{s}`"))),
    }
}

/// Decodes a single block. Line numbers in errors are 1-based within `text`.
pub fn decode_frame(text: &str) -> Result<Frame, XyzError> {
    let lines: Vec<&str> = text.lines().collect();
    let mut frames = decode_blocks(&lines, 0)?;
    match frames.len() {
        1 => Ok(frames.pop().unwrap()),
        0 => Err(perr(1, "no frame found")),
        n => Err(perr(1, format!("expected one frame, found {n}"))),
    }
}

/// Decodes every block of a concatenated file.
pub fn decode_frames(text: &str) -> Result<Vec<Frame>, XyzError> {
    let lines: Vec<&str> = text.lines().collect();
    decode_blocks(&lines, 0)
}

fn decode_blocks(lines: &[&str], offset: usize) -> Result<Vec<Frame>, XyzError> {
    let mut frames = Vec::new();
    let mut at = 0;
    while at < lines.len() {
        if lines[at].trim().is_empty() {
            at += 1;
            continue;
        }
        let (frame, used) = decode_one(&lines[at..], offset + at)?;
        frames.push(frame);
        at += used;
    }
    Ok(frames)
}

fn decode_one(lines: &[&str], offset: usize) -> Result<(Frame, usize), XyzError> {
    let count_line = offset + 1;
    let n: usize = lines[0]
        .trim()
        .parse()
        .map_err(|_| perr(count_line, format!("malformed atom count `{}`", lines[0].trim())))?;
    let header_line = offset + 2;
    let header = lines.get(1).ok_or_else(|| perr(header_line, "missing header line"))?;
    if lines.len() < n + 2 {
        return Err(perr(offset + lines.len() + 1, format!("expected {n} atom lines, found {}", lines.len() - 2)));
    }

    let mut lattice: Option<Matrix3<f64>> = None;
    let mut columns = vec![Column::Species, Column::Pos];
    let mut energy: Option<f64> = None;
    let mut pbc: Option<[bool; 3]> = None;
    let mut structure_id = String::new();
    let mut is_validation = false;
    let mut label_source = String::new();
    let mut info = std::collections::BTreeMap::new();
    for (k, v) in tokenize(header, header_line)? {
        match k.as_str() {
            "Lattice" => {
                let vals: Vec<f64> = v
                    .split_whitespace()
                    .map(|s| parse_f(s, header_line, "Lattice entry"))
                    .collect::<Result<_, _>>()?;
                if vals.len() != 9 {
                    return Err(perr(header_line, format!("Lattice needs 9 numbers, got {}", vals.len())));
                }
                lattice = Some(Matrix3::from_row_slice(&vals));
            }
            "Properties" => columns = parse_properties(&v, header_line)?,
            "energy" => energy = Some(parse_f(&v, header_line, "energy")?),
            "pbc" => {
                let flags: Vec<bool> =
                    v.split_whitespace().map(|s| parse_bool(s, header_line)).collect::<Result<_, _>>()?;
                if flags.len() != 3 {
                    return Err(perr(header_line, "pbc needs 3 flags"));
                }
                pbc = Some([flags[0], flags[1], flags[2]]);
            }
            "structure_id" => structure_id = v,
            "is_validation" => is_validation = parse_bool(&v, header_line)?,
            "label_source" => label_source = v,
            _ => {
                info.insert(k, v);
            }
        }
    }
    let periodic = pbc.unwrap_or(if lattice.is_some() { [true; 3] } else { [false; 3] });
    let cell = match lattice {
        Some(h) => Cell::new(h, periodic).map_err(|e| perr(header_line, e.to_string()))?,
        None if periodic.iter().any(|&p| p) => return Err(perr(header_line, "periodic frame without Lattice")),
        None => Cell::open(),
    };

    let width: usize = columns.iter().map(|c| if matches!(c, Column::Species | Column::Region) { 1 } else { 3 }).sum();
    let mut species = Vec::with_capacity(n);
    let mut positions = Vec::with_capacity(n);
    let mut vel = columns.contains(&Column::Vel).then(|| Vec::with_capacity(n));
    let mut tags = columns.contains(&Column::Region).then(|| Vec::with_capacity(n));
    let mut forces = columns.contains(&Column::Forces).then(|| Vec::with_capacity(n));
    for a in 0..n {
        let lineno = offset + 3 + a;
        let fields: Vec<&str> = lines[2 + a].split_whitespace().collect();
        if fields.len() != width {
            return Err(perr(lineno, format!("expected {width} columns, found {}", fields.len())));
        }
        let mut at = 0;
        for col in &columns {
            match col {
                Column::Species => {
                    species.push(fields[at].to_string());
                    at += 1;
                }
                Column::Region => {
                    tags.as_mut().unwrap().push(fields[at].to_string());
                    at += 1;
                }
                _ => {
                    let v = Vec3::new(
                        parse_f(fields[at], lineno, "coordinate")?,
                        parse_f(fields[at + 1], lineno, "coordinate")?,
                        parse_f(fields[at + 2], lineno, "coordinate")?,
                    );
                    at += 3;
                    match col {
                        Column::Pos => positions.push(v),
                        Column::Vel => vel.as_mut().unwrap().push(v),
                        Column::Forces => forces.as_mut().unwrap().push(v),
                        _ => unreachable!(),
                    }
                }
            }
        }
    }

    let mut config = AtomicConfiguration::new(cell, species, positions);
    config.velocities = vel;
    config.region_tags = tags;
    config.structure_id = structure_id;
    config.is_validation = is_validation;
    config.info = info;
    let frame = match (energy, forces) {
        (Some(e), Some(f)) => Frame::Labeled(
            LabeledFrame::new(config, e, f, label_source).map_err(|err| perr(header_line, err.to_string()))?,
        ),
        (energy, _) => {
            if let Some(e) = energy {
                config.info.insert("energy".into(), fmt_f(e));
            }
            Frame::Bare(config)
        }
    };
    Ok((frame, n + 2))
}

pub fn read_file(path: &Path) -> Result<Vec<Frame>, XyzError> {
    decode_frames(&std::fs::read_to_string(path)?)
}

pub fn write_file<'a>(path: &Path, frames: impl IntoIterator<Item = &'a Frame>) -> std::io::Result<()> {
    let mut text = String::new();
    for f in frames {
        text.push_str(&encode_frame(f));
    }
    std::fs::write(path, text)
}

pub fn write_configs(path: &Path, configs: &[AtomicConfiguration]) -> std::io::Result<()> {
    std::fs::write(path, configs.iter().map(encode_config).collect::<String>())
}

pub fn write_labeled(path: &Path, frames: &[LabeledFrame]) -> std::io::Result<()> {
    std::fs::write(path, frames.iter().map(encode_labeled).collect::<String>())
}

/// Reads a file whose frames must all be labeled.
pub fn read_labeled(path: &Path) -> Result<Vec<LabeledFrame>, XyzError> {
    let text = std::fs::read_to_string(path)?;
    let lines: Vec<&str> = text.lines().collect();
    let mut out = Vec::new();
    let mut at = 0;
    while at < lines.len() {
        if lines[at].trim().is_empty() {
            at += 1;
            continue;
        }
        let (frame, used) = decode_one(&lines[at..], at)?;
        match frame {
            Frame::Labeled(f) => out.push(f),
            Frame::Bare(_) => return Err(perr(at + 2, "frame lacks energy or forces")),
        }
        at += used;
    }
    Ok(out)
}
