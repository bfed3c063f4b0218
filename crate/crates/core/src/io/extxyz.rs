//! Extended XYZ: multi-frame text format carrying species, positions, an
//! optional lattice, per-frame key=value metadata and extra per-atom columns.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use indexmap::IndexMap;

use crate::elements::{atomic_number, symbol};
use crate::error::{Error, Result};
use crate::structure::{Mat3, Structure, Vec3};

/// An extra per-atom column group such as `forces:R:3`.
#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    /// `S`, `R`, `I` or `L`.
    pub kind: char,
    pub width: usize,
    /// `len × width` raw tokens, row-major.
    pub values: Vec<String>,
}

impl Column {
    pub fn reals(name: &str, rows: &[Vec3]) -> Column {
        Column {
            name: name.into(),
            kind: 'R',
            width: 3,
            values: rows.iter().flat_map(|v| v.iter().map(|x| format_float(*x)).collect::<Vec<_>>()).collect(),
        }
    }

    /// Parses an `R` column of width 3 back into vectors.
    pub fn as_vec3(&self) -> Result<Vec<Vec3>> {
        if self.kind != 'R' || self.width != 3 {
            return Err(Error::InvalidInput(format!("column {} is not R:3", self.name)));
        }
        self.values
            .chunks(3)
            .map(|c| {
                let p = |t: &String| t.parse::<f64>().map_err(|_| Error::InvalidInput(format!("bad real `{t}`")));
                Ok(Vec3::new(p(&c[0])?, p(&c[1])?, p(&c[2])?))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub structure: Structure,
    /// Other key=value pairs of the comment line, in file order.
    pub info: IndexMap<String, String>,
    pub columns: Vec<Column>,
}

impl Frame {
    pub fn new(structure: Structure) -> Frame {
        Frame { structure, info: IndexMap::new(), columns: Vec::new() }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Frame {
        self.info.insert(key.into(), value.to_string());
        self
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn info_f64(&self, key: &str) -> Option<f64> {
        self.info.get(key)?.parse().ok()
    }
}

/// Ten significant digits, plain notation where that is compact.
pub fn format_float(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.9e}");
    let (mant, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if (-5..10).contains(&exp) {
        let v: f64 = sci.parse().expect("round trip");
        trim(&format!("{:.*}", (9 - exp).max(0) as usize, v))
    } else {
        format!("{}e{exp}", trim(mant))
    }
}

fn perr(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

/// Splits `key=value key="quoted value" flag` into pairs; bare keys map to `T`.
fn parse_comment(text: &str, line: usize) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    let read_token = |i: &mut usize, stop_at_eq: bool| -> Result<String> {
        let mut s = String::new();
        if *i < chars.len() && chars[*i] == '"' {
            *i += 1;
            loop {
                if *i >= chars.len() {
                    return Err(perr(line, "unterminated quote in comment line"));
                }
                match chars[*i] {
                    '\\' if *i + 1 < chars.len() => {
                        s.push(chars[*i + 1]);
                        *i += 2;
                    }
                    '"' => {
                        *i += 1;
                        break;
                    }
                    c => {
                        s.push(c);
                        *i += 1;
                    }
                }
            }
        } else {
            while *i < chars.len() && !chars[*i].is_whitespace() && !(stop_at_eq && chars[*i] == '=') {
                s.push(chars[*i]);
                *i += 1;
            }
        }
        Ok(s)
    };
    while i < chars.len() {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        let key = read_token(&mut i, true)?;
        if key.is_empty() {
            return Err(perr(line, "empty key in comment line"));
        }
        if i < chars.len() && chars[i] == '=' {
            i += 1;
            let value = read_token(&mut i, false)?;
            out.push((key, value));
        } else {
            out.push((key, "T".into()));
        }
    }
    Ok(out)
}

fn quote(v: &str) -> String {
    let plain = !v.is_empty() && !v.chars().any(|c| c.is_whitespace() || c == '"' || c == '=' || c == '\\');
    if plain {
        v.to_string()
    } else {
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
}

fn parse_properties(spec: &str, line: usize) -> Result<Vec<(String, char, usize)>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if !parts.len().is_multiple_of(3) {
        return Err(perr(line, format!("Properties `{spec}` is not name:type:count triples")));
    }
    parts
        .chunks(3)
        .map(|c| {
            let kind = match c[1] {
                "S" | "R" | "I" | "L" => c[1].chars().next().expect("non-empty"),
                other => return Err(perr(line, format!("unknown property type `{other}`"))),
            };
            let width: usize = c[2]
                .parse()
                .ok()
                .filter(|&w| w > 0)
                .ok_or_else(|| perr(line, format!("bad column count `{}`", c[2])))?;
            Ok((c[0].to_string(), kind, width))
        })
        .collect()
}

fn parse_pbc(v: &str, line: usize) -> Result<bool> {
    let flags: Vec<bool> = v
        .split_whitespace()
        .map(|t| match t {
            "T" | "True" | "true" | "1" => Ok(true),
            "F" | "False" | "false" | "0" => Ok(false),
            _ => Err(perr(line, format!("bad pbc flag `{t}`"))),
        })
        .collect::<Result<_>>()?;
    match flags.as_slice() {
        [a, b, c] if a == b && b == c => Ok(*a),
        [_, _, _] => Err(Error::Unsupported("mixed periodic boundary conditions".into())),
        _ => Err(perr(line, "pbc needs three flags")),
    }
}

pub fn parse_extxyz(text: &str) -> Result<Vec<Frame>> {
    let lines: Vec<&str> = text.lines().collect();
    let mut frames = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        if lines[i].trim().is_empty() {
            i += 1;
            continue;
        }
        let count_line = i + 1;
        let n: usize = lines[i]
            .trim()
            .parse()
            .map_err(|_| perr(count_line, format!("expected an atom count, found `{}`", lines[i].trim())))?;
        if n == 0 {
            return Err(perr(count_line, "frame with zero atoms"));
        }
        let comment_line = i + 2;
        let comment = *lines.get(i + 1).ok_or_else(|| perr(comment_line, "missing comment line"))?;
        let mut cell = None;
        let mut pbc = None;
        let mut props = vec![("species".to_string(), 'S', 1), ("pos".to_string(), 'R', 3)];
        let mut info = IndexMap::new();
        for (k, v) in parse_comment(comment, comment_line)? {
            match k.as_str() {
                "Lattice" => {
                    let vals: Vec<f64> = v
                        .split_whitespace()
                        .map(|t| t.parse::<f64>().map_err(|_| perr(comment_line, format!("bad lattice value `{t}`"))))
                        .collect::<Result<_>>()?;
                    if vals.len() != 9 {
                        return Err(perr(comment_line, format!("Lattice needs 9 values, found {}", vals.len())));
                    }
                    cell = Some(Mat3::from_row_slice(&vals));
                }
                "Properties" => props = parse_properties(&v, comment_line)?,
                "pbc" => pbc = Some(parse_pbc(&v, comment_line)?),
                _ => {
                    info.insert(k, v);
                }
            }
        }
        if pbc == Some(false) {
            cell = None;
        }
        if pbc == Some(true) && cell.is_none() {
            return Err(perr(comment_line, "pbc is set but no Lattice is given"));
        }
        let species_col = props.iter().position(|p| p.0 == "species" && p.1 == 'S' && p.2 == 1);
        let pos_col = props.iter().position(|p| p.0 == "pos" && p.1 == 'R' && p.2 == 3);
        let (species_col, pos_col) = match (species_col, pos_col) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(perr(comment_line, "Properties must include species:S:1 and pos:R:3")),
        };
        let total: usize = props.iter().map(|p| p.2).sum();
        let mut species = Vec::with_capacity(n);
        let mut positions = Vec::with_capacity(n);
        let mut extra: Vec<Column> = props
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != species_col && *k != pos_col)
            .map(|(_, p)| Column { name: p.0.clone(), kind: p.1, width: p.2, values: Vec::with_capacity(n * p.2) })
            .collect();
        for a in 0..n {
            let ln = i + 3 + a;
            let row = lines
                .get(i + 2 + a)
                .ok_or_else(|| perr(ln, format!("expected {n} atom lines, file ended after {a}")))?;
            let toks: Vec<&str> = row.split_whitespace().collect();
            if toks.len() != total {
                return Err(perr(ln, format!("expected {total} columns, found {}", toks.len())));
            }
            let mut off = 0;
            let mut e = 0;
            for (k, p) in props.iter().enumerate() {
                let t = &toks[off..off + p.2];
                if k == species_col {
                    species.push(atomic_number(t[0]).map_err(|_| perr(ln, format!("unknown element `{}`", t[0])))?);
                } else if k == pos_col {
                    let v: Vec<f64> = t
                        .iter()
                        .map(|x| x.parse::<f64>().map_err(|_| perr(ln, format!("bad coordinate `{x}`"))))
                        .collect::<Result<_>>()?;
                    positions.push(Vec3::new(v[0], v[1], v[2]));
                } else {
                    extra[e].values.extend(t.iter().map(|s| s.to_string()));
                    e += 1;
                }
                off += p.2;
            }
        }
        let structure = Structure::new(species, positions, cell).map_err(|err| perr(count_line, err.to_string()))?;
        frames.push(Frame { structure, info, columns: extra });
        i += 2 + n;
    }
    Ok(frames)
}

pub fn format_extxyz(frames: &[Frame]) -> String {
    let mut out = String::new();
    for f in frames {
        let s = &f.structure;
        writeln!(out, "{}", s.len()).expect("string write");
        let mut comment = Vec::new();
        if let Some(c) = s.cell {
            let vals: Vec<String> = (0..3).flat_map(|r| (0..3).map(move |k| c[(r, k)])).map(format_float).collect();
            comment.push(format!("Lattice=\"{}\"", vals.join(" ")));
        }
        let mut props = String::from("species:S:1:pos:R:3");
        for c in &f.columns {
            write!(props, ":{}:{}:{}", c.name, c.kind, c.width).expect("string write");
        }
        comment.push(format!("Properties={props}"));
        for (k, v) in &f.info {
            comment.push(format!("{}={}", quote(k), quote(v)));
        }
        if s.pbc() {
            comment.push("pbc=\"T T T\"".into());
        }
        writeln!(out, "{}", comment.join(" ")).expect("string write");
        for a in 0..s.len() {
            let p = s.positions[a];
            let mut row = format!(
                "{:<2} {} {} {}",
                symbol(s.species[a]).unwrap_or("X"),
                format_float(p.x),
                format_float(p.y),
                format_float(p.z)
            );
            for c in &f.columns {
                for t in &c.values[a * c.width..(a + 1) * c.width] {
                    row.push(' ');
                    row.push_str(t);
                }
            }
            writeln!(out, "{row}").expect("string write");
        }
    }
    out
}

pub fn read_extxyz(path: &Path) -> Result<Vec<Frame>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    parse_extxyz(&text)
}

pub fn write_extxyz(path: &Path, frames: &[Frame]) -> Result<()> {
    for (k, f) in frames.iter().enumerate() {
        f.structure.validate()?;
        for c in &f.columns {
            if c.values.len() != c.width * f.structure.len() {
                return Err(Error::InvalidInput(format!("frame {k}: column {} has the wrong length", c.name)));
            }
        }
    }
    fs::write(path, format_extxyz(frames))?;
    Ok(())
}

/// Structures only, dropping metadata.
pub fn read_structures(path: &Path) -> Result<Vec<Structure>> {
    Ok(read_extxyz(path)?.into_iter().map(|f| f.structure).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str = "2\nLattice=\"3.5 0 0 0 3.5 0 0.5 0 4\" Properties=species:S:1:pos:R:3:forces:R:3 energy=-1.25 note=\"two words\" pbc=\"T T T\"\nC 0.0 0.0 0.0 0.1 0.2 0.3\nSi 1.75 1.75 2.0 -0.1 -0.2 -0.3\n";

    #[test]
    fn hand_written_frame_fields() {
        let f = &parse_extxyz(FIXTURE).unwrap()[0];
        let s = &f.structure;
        assert_eq!(s.species, vec![6, 14]);
        assert_eq!(s.positions[1], Vec3::new(1.75, 1.75, 2.0));
        assert_eq!(s.cell.unwrap(), Mat3::new(3.5, 0.0, 0.0, 0.0, 3.5, 0.0, 0.5, 0.0, 4.0));
        assert_eq!(f.info["energy"], "-1.25");
        assert_eq!(f.info["note"], "two words");
        assert_eq!(f.info.len(), 2);
        let forces = f.column("forces").unwrap().as_vec3().unwrap();
        assert_eq!(forces[1], Vec3::new(-0.1, -0.2, -0.3));
    }

    #[test]
    fn frame_without_lattice_is_molecular() {
        let f = parse_extxyz("1\nProperties=species:S:1:pos:R:3\nH 0 0 0\n").unwrap();
        assert!(!f[0].structure.pbc());
        let f = parse_extxyz("1\n\nH 0 0 0\n").unwrap();
        assert!(!f[0].structure.pbc());
    }

    #[test]
    fn round_trip_with_metadata() {
        let frames = parse_extxyz(FIXTURE).unwrap();
        let mut f = frames[0].clone().with("label", "a \"quoted\" value").with("empty", "");
        f.structure.positions[0] = Vec3::new(1.0 / 3.0, -2.0e-7, 12.345678901234);
        let text = format_extxyz(&[f.clone(), f.clone()]);
        let back = parse_extxyz(&text).unwrap();
        assert_eq!(back.len(), 2);
        for b in &back {
            assert_eq!(b.info, f.info);
            assert_eq!(b.columns, f.columns);
            assert_eq!(b.structure.species, f.structure.species);
            for (p, q) in b.structure.positions.iter().zip(&f.structure.positions) {
                assert!((p - q).amax() < 1e-8);
            }
        }
    }

    #[test]
    fn metadata_with_spaces_is_quoted() {
        let s = Structure::molecule(vec![1], vec![Vec3::zeros()]).unwrap();
        let text = format_extxyz(&[Frame::new(s).with("run name", "x y")]);
        assert_eq!(text.lines().nth(1).unwrap(), "Properties=species:S:1:pos:R:3 \"run name\"=\"x y\"");
    }

    #[test]
    fn empty_list_is_empty_file() {
        assert_eq!(format_extxyz(&[]), "");
        assert!(parse_extxyz("").unwrap().is_empty());
    }

    #[test]
    fn errors_carry_line_numbers() {
        let bad_count = "x\n\nH 0 0 0\n";
        assert!(matches!(parse_extxyz(bad_count), Err(Error::Parse { line: 1, .. })));
        let bad_lattice = "1\nLattice=\"1 0 0 0 1 0 0 0\"\nH 0 0 0\n";
        assert!(matches!(parse_extxyz(bad_lattice), Err(Error::Parse { line: 2, .. })));
        let bad_atom = "2\n\nH 0 0 0\nH 0 zero 0\n";
        assert!(matches!(parse_extxyz(bad_atom), Err(Error::Parse { line: 4, .. })));
        let short = "3\n\nH 0 0 0\n";
        assert!(matches!(parse_extxyz(short), Err(Error::Parse { line: 4, .. })));
        let second_frame = "1\n\nH 0 0 0\n1\n\nQq 0 0 0\n";
        assert!(matches!(parse_extxyz(second_frame), Err(Error::Parse { line: 6, .. })));
    }

    #[test]
    fn float_format_has_ten_significant_digits() {
        assert_eq!(format_float(0.0), "0");
        assert_eq!(format_float(1.0), "1");
        assert_eq!(format_float(-2.5), "-2.5");
        assert_eq!(format_float(1.0 / 3.0), "0.3333333333");
        assert_eq!(format_float(12345.678901234), "12345.6789");
        assert_eq!(format_float(1.5e-7), "1.5e-7");
        assert_eq!(format_float(6.02214076e23), "6.02214076e23");
        for x in [1.23456789012345, -1e-3, 987654321.123, 4.4e-12] {
            let y: f64 = format_float(x).parse().unwrap();
            assert!(((y - x) / x).abs() < 1e-9);
        }
    }
}
