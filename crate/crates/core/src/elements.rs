//! Chemical element symbols and atomic numbers.

use crate::error::{Error, Result};

const SYMBOLS: [&str; 118] = [
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S", "Cl", "Ar", "K", "Ca",
    "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As", "Se", "Br", "Kr", "Rb", "Sr", "Y",
    "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In", "Sn", "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce",
    "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir",
    "Pt", "Au", "Hg", "Tl", "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa", "U", "Np", "Pu", "Am", "Cm",
    "Bk", "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn", "Nh", "Fl", "Mc",
    "Lv", "Ts", "Og",
];

pub fn symbol(z: u8) -> Option<&'static str> {
    if (1..=118).contains(&z) {
        Some(SYMBOLS[z as usize - 1])
    } else {
        None
    }
}

/// Atomic number for an element symbol (case-insensitive), or a bare integer.
pub fn atomic_number(sym: &str) -> Result<u8> {
    let sym = sym.trim();
    if let Ok(z) = sym.parse::<u8>() {
        if (1..=118).contains(&z) {
            return Ok(z);
        }
    }
    SYMBOLS
        .iter()
        .position(|s| s.eq_ignore_ascii_case(sym))
        .map(|i| i as u8 + 1)
        .ok_or_else(|| Error::InvalidInput(format!("unknown element `{sym}`")))
}

/// Parses a composition such as `Li2S`, `C8`, `H2O` or `C:8,H:2`.
///
/// Counts of repeated symbols are accumulated; the result is sorted by atomic number.
pub fn parse_composition(text: &str) -> Result<Vec<(u8, usize)>> {
    let text = text.trim();
    if text.is_empty() {
        return Err(Error::InvalidInput("empty composition".into()));
    }
    let mut out: Vec<(u8, usize)> = Vec::new();
    let mut push = |z: u8, n: usize| {
        if let Some(e) = out.iter_mut().find(|e| e.0 == z) {
            e.1 += n;
        } else {
            out.push((z, n));
        }
    };
    if text.contains(':') {
        for part in text.split(',') {
            let (s, n) =
                part.split_once(':').ok_or_else(|| Error::InvalidInput(format!("bad composition term `{part}`")))?;
            let n: usize = n.trim().parse().map_err(|_| Error::InvalidInput(format!("bad count in `{part}`")))?;
            push(atomic_number(s)?, n);
        }
    } else {
        let chars: Vec<char> = text.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            if !chars[i].is_ascii_uppercase() {
                return Err(Error::InvalidInput(format!("bad composition `{text}`")));
            }
            let mut sym = chars[i].to_string();
            i += 1;
            while i < chars.len() && chars[i].is_ascii_lowercase() {
                sym.push(chars[i]);
                i += 1;
            }
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let n = if start == i { 1 } else { chars[start..i].iter().collect::<String>().parse().unwrap() };
            push(atomic_number(&sym)?, n);
        }
    }
    if out.iter().any(|e| e.1 == 0) {
        return Err(Error::InvalidInput("composition counts must be >= 1".into()));
    }
    out.sort_by_key(|e| e.0);
    Ok(out)
}

pub fn format_composition(comp: &[(u8, usize)]) -> String {
    comp.iter().map(|&(z, n)| format!("{}{}", symbol(z).unwrap_or("X"), n)).collect()
}

/// Element counts, written as a formula such as `Li2S` in configuration files.
#[derive(Debug, Clone, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Composition(pub Vec<(u8, usize)>);

impl Composition {
    pub fn n_atoms(&self) -> usize {
        self.0.iter().map(|e| e.1).sum()
    }

    /// Species list with each element repeated `units` times its count.
    pub fn species(&self, units: usize) -> Vec<u8> {
        self.0.iter().flat_map(|&(z, n)| std::iter::repeat_n(z, n * units)).collect()
    }
}

impl TryFrom<String> for Composition {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        parse_composition(&s).map(Composition)
    }
}

impl From<Composition> for String {
    fn from(c: Composition) -> String {
        format_composition(&c.0)
    }
}

impl std::str::FromStr for Composition {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        parse_composition(s).map(Composition)
    }
}
