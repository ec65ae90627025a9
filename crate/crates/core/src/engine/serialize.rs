//! Deterministic text serialization of a finished construction.
//!
//! Write-only by design: the text is an artifact for inspection and
//! byte-for-byte comparison between runs, not an interchange format.
//! Levels are written as one record per chunk — a chunk stands for its
//! whole family of equal-radius balls, so the record count stays
//! proportional to the work done rather than to the (astronomically
//! large) ball count — followed by a certificate table with one line per
//! processed stage. Everything is emitted in canonical order with no
//! timestamps, pointers, or float formatting, so identical runs yield
//! identical bytes.

use std::fmt::Write as _;

use num_bigint::BigUint;

use super::chunks::Chunk;
use super::{CertKind, Engine};
use crate::field::{Ball, Char, Field};

/// Render the whole construction — field, functions, levels with their
/// chunk records, and the certificate table — as deterministic text.
pub fn tree_string(engine: &Engine) -> String {
    let mut out = String::new();
    let field = engine.field();
    writeln!(out, "tree-format 1").unwrap();
    writeln!(out, "{}", field_line(field)).unwrap();

    writeln!(out, "functions {}", engine.functions().len()).unwrap();
    for (i, f) in engine.functions().iter().enumerate() {
        writeln!(
            out,
            "function {} name={} kind={} n={} v={} orders={}",
            i,
            f.name(),
            match f.kind() {
                super::FunctionKind::Polynomial { .. } => "polynomial",
                super::FunctionKind::Smooth(_) => "smooth",
            },
            f.n(),
            f.v(),
            f.order_count()
        )
        .unwrap();
    }

    writeln!(out, "levels {}", engine.levels().len()).unwrap();
    for (j, level) in engine.levels().iter().enumerate() {
        writeln!(
            out,
            "level {} lambda={} chunks={} balls={}",
            j,
            level.lambda,
            level.chunks.len(),
            family_count(field, &level.chunks)
        )
        .unwrap();
        let parents: Option<&[Chunk]> = if j == 0 {
            None
        } else {
            Some(&engine.levels()[j - 1].chunks)
        };
        for (i, c) in level.chunks.iter().enumerate() {
            writeln!(
                out,
                "chunk {}.{} parent={} scale={} base={} free={}",
                j,
                i,
                parent_of(parents, c),
                c.scale,
                digits(field, &c.base, c.scale),
                free_sets(c)
            )
            .unwrap();
        }
    }

    writeln!(out, "certificates {}", engine.stages().len()).unwrap();
    for (i, rec) in engine.stages().iter().enumerate() {
        let mut line = format!(
            "cert {} ell={} k={} sigma={} j0={} mu={} nu={} lambda={} feasible={}",
            i,
            rec.item.ell,
            rec.item.k,
            rec.item
                .sigma
                .iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(","),
            rec.item.j0,
            rec.schedule.mu,
            rec.schedule.nu,
            rec.schedule.lambda,
            u8::from(rec.feasible),
        );
        match &rec.kind {
            CertKind::Vacuous => line.push_str(" kind=vacuous"),
            CertKind::Polynomial { a_exp, lower_bound_exp, delta_val, constant_path } => {
                write!(
                    line,
                    " kind=polynomial a={a_exp} lower={lower_bound_exp} delta={delta_val} constant={}",
                    u8::from(*constant_path)
                )
                .unwrap();
            }
            CertKind::Smooth { certificate } => {
                write!(
                    line,
                    " kind=smooth lower={} boxes={} bad={}/{} projections={}",
                    certificate.lower_bound_exp,
                    certificate.zero_box_count,
                    certificate.bad_nu_balls,
                    certificate.total_last_nu_balls,
                    certificate.project_calls
                )
                .unwrap();
            }
        }
        write!(line, " regions={}", regions(field, &rec.regions)).unwrap();
        writeln!(out, "{line}").unwrap();
    }
    writeln!(out, "end").unwrap();
    out
}

/// Write the rendered tree to any sink.
pub fn write_tree<W: std::io::Write>(engine: &Engine, out: &mut W) -> std::io::Result<()> {
    out.write_all(tree_string(engine).as_bytes())
}

/// The one-line field header shared by every artifact format.
pub fn field_line(field: &Field) -> String {
    let spec = field.spec();
    let mut line = format!(
        "field characteristic={} p={} f={} e={} precision={} residue={}",
        match spec.characteristic {
            Char::Zero => 0,
            Char::Finite => spec.p,
        },
        spec.p,
        spec.f,
        spec.e,
        spec.precision,
        join_u32(&spec.residue_poly),
    );
    if !spec.eisenstein.is_empty() {
        let groups: Vec<String> = spec
            .eisenstein
            .iter()
            .map(|coeff| {
                coeff
                    .iter()
                    .map(|digits| join_u32(digits))
                    .collect::<Vec<_>>()
                    .join("|")
            })
            .collect();
        write!(line, " eisenstein={}", groups.join(";")).unwrap();
    }
    line
}

fn join_u32(xs: &[u32]) -> String {
    xs.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(",")
}

/// Exact ball count of a chunk list: q to the number of free positions,
/// summed — never overflows, unlike the u128 working counter.
fn family_count(field: &Field, chunks: &[Chunk]) -> BigUint {
    let q = BigUint::from(field.q());
    let mut total = BigUint::from(0u32);
    for c in chunks {
        let free: usize = c.free.iter().map(|s| s.len()).sum();
        total += q.pow(free as u32);
    }
    total
}

/// Index of the coarser-level chunk containing this chunk's base, or
/// `?` if the refinement invariant is broken (never expected).
fn parent_of(parents: Option<&[Chunk]>, c: &Chunk) -> String {
    match parents {
        None => "-".into(),
        Some(level) => level
            .iter()
            .position(|p| p.contains_center(&c.base))
            .map_or_else(|| "?".into(), |i| i.to_string()),
    }
}

/// Packed base-q digits of each coordinate below the scale, low first:
/// coordinates joined by `|`, digits by `,`.
pub fn digits(field: &Field, xs: &[crate::field::Element], scale: u32) -> String {
    xs.iter()
        .map(|x| {
            (0..scale)
                .map(|u| Chunk::packed_digit(field, x, u).to_string())
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect::<Vec<_>>()
        .join("|")
}

/// Free positions of each coordinate, `|`-joined; `-` for none.
fn free_sets(c: &Chunk) -> String {
    c.free
        .iter()
        .map(|s| {
            if s.is_empty() {
                "-".to_string()
            } else {
                s.iter().map(|u| u.to_string()).collect::<Vec<_>>().join(",")
            }
        })
        .collect::<Vec<_>>()
        .join("|")
}

/// Region balls as center digits at their own radius, `;`-joined.
fn regions(field: &Field, balls: &[Ball]) -> String {
    if balls.is_empty() {
        return "-".into();
    }
    balls
        .iter()
        .map(|b| digits(field, &b.center, b.radius_exp))
        .collect::<Vec<_>>()
        .join(";")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{EngineConfig, FunctionEntry};
    use crate::field::FieldSpec;
    use crate::poly::IntPolynomial;

    fn ap3_tree(depth: usize) -> Engine {
        let k = Field::new(FieldSpec::zp(5, 60)).unwrap();
        let f = IntPolynomial::from_int_coeffs(
            &k,
            1,
            3,
            &[(vec![1, 0, 0], 1), (vec![0, 1, 0], -2), (vec![0, 0, 1], 1)],
        )
        .unwrap();
        let mut eng = Engine::new(
            &k,
            vec![FunctionEntry::polynomial("ap3", f).unwrap()],
            EngineConfig { nu_gap: 1, ..EngineConfig::default() },
        )
        .unwrap();
        assert_eq!(eng.run(depth).unwrap(), depth);
        eng
    }

    #[test]
    fn rendering_is_structured_and_complete() {
        let eng = ap3_tree(1);
        let text = tree_string(&eng);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "tree-format 1");
        assert!(lines[1].starts_with("field characteristic=0 p=5 f=1 e=1 precision=60"));
        assert!(text.contains("function 0 name=ap3 kind=polynomial n=1 v=3 orders=1"));
        assert_eq!(lines.last(), Some(&"end"));
        // One level line per level, one chunk line per chunk.
        let levels = eng.levels().len();
        assert_eq!(text.matches("\nlevel ").count(), levels);
        let chunk_lines = text.lines().filter(|l| l.starts_with("chunk ")).count();
        let chunk_total: usize = eng.levels().iter().map(|l| l.chunks.len()).sum();
        assert_eq!(chunk_lines, chunk_total);
        // The certificate table carries the stage's scales.
        let sched = eng.stages()[0].schedule;
        assert!(text.contains(&format!(
            "mu={} nu={} lambda={}",
            sched.mu, sched.nu, sched.lambda
        )));
        assert!(text.contains("kind=polynomial"));
        // Ball counts are exact: level 0 holds the five unit children.
        assert!(text.contains("level 0 lambda=1 chunks=1 balls=5"));
    }

    #[test]
    fn identical_runs_render_identical_bytes() {
        let a = tree_string(&ap3_tree(2));
        let b = tree_string(&ap3_tree(2));
        assert_eq!(a, b, "rerun must reproduce the artifact byte for byte");
    }

    #[test]
    fn parent_links_follow_the_refinement() {
        let eng = ap3_tree(2);
        let text = tree_string(&eng);
        // Every chunk below level 0 names a parent index, never `?`.
        for line in text.lines().filter(|l| l.starts_with("chunk ")) {
            let level: usize = line
                .strip_prefix("chunk ")
                .unwrap()
                .split('.')
                .next()
                .unwrap()
                .parse()
                .unwrap();
            let parent = line
                .split(" parent=")
                .nth(1)
                .unwrap()
                .split(' ')
                .next()
                .unwrap();
            if level == 0 {
                assert_eq!(parent, "-");
            } else {
                assert_ne!(parent, "?", "broken refinement link in: {line}");
                let idx: usize = parent.parse().unwrap();
                assert!(idx < eng.levels()[level - 1].chunks.len());
            }
        }
    }
}
