//! Text format for field descriptions.
//!
//! A field file is a sequence of `key = value` lines; `#` starts a comment
//! and blank lines are ignored. Keys:
//!
//! ```text
//! characteristic = zero | finite
//! p              = 3
//! f              = 1
//! e              = 1
//! residue_poly   = 2,1            # low degree first, monic
//! eisenstein_coeffs = int:-2; int:0   # only when e > 1
//! precision      = 8
//! ```
//!
//! Each Eisenstein coefficient is either `int:<k>` (a signed integer) or
//! f digit lists joined by `|` (one per t1-power, base-p digits low first,
//! comma separated; an empty list is zero).

use std::collections::BTreeMap;

use super::{signed_digits, Char, FieldSpec};
use crate::error::Error;
use crate::Result;

/// Parse a field description from text.
pub fn parse_field_spec(text: &str) -> Result<FieldSpec> {
    let mut map: BTreeMap<String, String> = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Parse(format!(
                "line {}: expected `key = value`, got {line:?}",
                lineno + 1
            )));
        };
        let key = key.trim().to_string();
        if map.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(Error::Parse(format!("duplicate key {key:?}")));
        }
    }
    let get = |k: &str| -> Result<&String> {
        map.get(k)
            .ok_or_else(|| Error::Parse(format!("missing key {k:?}")))
    };
    for k in map.keys() {
        if !matches!(
            k.as_str(),
            "characteristic" | "p" | "f" | "e" | "residue_poly" | "eisenstein_coeffs" | "precision"
        ) {
            return Err(Error::Parse(format!("unknown key {k:?}")));
        }
    }
    let characteristic = match get("characteristic")?.as_str() {
        "zero" => Char::Zero,
        "finite" => Char::Finite,
        other => {
            return Err(Error::Parse(format!(
                "characteristic must be `zero` or `finite`, got {other:?}"
            )));
        }
    };
    let p: u32 = parse_num(get("p")?, "p")?;
    let f: usize = parse_num(get("f")?, "f")?;
    let e: usize = parse_num(get("e")?, "e")?;
    let precision: u32 = parse_num(get("precision")?, "precision")?;
    let residue_poly = parse_digit_list(get("residue_poly")?)?;
    let mut eisenstein = Vec::new();
    if let Some(raw) = map.get("eisenstein_coeffs") {
        if !raw.is_empty() {
            // Digit length for `int:` coefficients: enough for the carried
            // precision plus slack (the list denotes an exact integer).
            let m0 = (precision as usize).div_ceil(e.max(1)) + 2;
            for part in raw.split(';') {
                let part = part.trim();
                if let Some(rest) = part.strip_prefix("int:") {
                    let k: i64 = rest
                        .trim()
                        .parse()
                        .map_err(|_| Error::Parse(format!("bad integer {rest:?}")))?;
                    let mut lists = vec![signed_digits(k, p, m0)];
                    lists.resize(f, vec![]);
                    eisenstein.push(lists);
                } else {
                    let lists: Vec<Vec<u32>> = part
                        .split('|')
                        .map(|chunk| parse_digit_list(chunk.trim()))
                        .collect::<Result<_>>()?;
                    if lists.len() != f {
                        return Err(Error::Parse(format!(
                            "coefficient needs {f} digit lists, got {}",
                            lists.len()
                        )));
                    }
                    eisenstein.push(lists);
                }
            }
        }
    }
    Ok(FieldSpec {
        characteristic,
        p,
        f,
        e,
        residue_poly,
        eisenstein,
        precision,
    })
}

fn parse_num<T: std::str::FromStr>(s: &str, key: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::Parse(format!("bad value for {key}: {s:?}")))
}

fn parse_digit_list(s: &str) -> Result<Vec<u32>> {
    let s = s.trim();
    if s.is_empty() {
        return Ok(vec![]);
    }
    s.split(',')
        .map(|d| parse_num(d.trim(), "digit"))
        .collect()
}

fn digit_list_to_string(d: &[u32]) -> String {
    d.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// Serialize a field description in the file format.
pub fn field_spec_to_string(spec: &FieldSpec) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "characteristic = {}\n",
        match spec.characteristic {
            Char::Zero => "zero",
            Char::Finite => "finite",
        }
    ));
    out.push_str(&format!("p = {}\n", spec.p));
    out.push_str(&format!("f = {}\n", spec.f));
    out.push_str(&format!("e = {}\n", spec.e));
    out.push_str(&format!(
        "residue_poly = {}\n",
        digit_list_to_string(&spec.residue_poly)
    ));
    if !spec.eisenstein.is_empty() {
        let coeffs: Vec<String> = spec
            .eisenstein
            .iter()
            .map(|c| {
                c.iter()
                    .map(|d| digit_list_to_string(d))
                    .collect::<Vec<_>>()
                    .join(" | ")
            })
            .collect();
        out.push_str(&format!("eisenstein_coeffs = {}\n", coeffs.join(" ; ")));
    }
    out.push_str(&format!("precision = {}\n", spec.precision));
    out
}
