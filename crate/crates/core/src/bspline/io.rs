//! Text serialization of surfaces.
//!
//! ```text
//! bspline 1
//! degree <du> <dv>
//! knots_u <count> <k0> <k1> ...
//! knots_v <count> <k0> <k1> ...
//! control <rows> <cols>
//! <x> <y> <z>          (rows * cols lines, row-major)
//! ```
//!
//! Numbers carry 9 significant digits.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::BSplineSurface;
use crate::error::Location;
use crate::pointcloud::io::format_sig9;
use crate::{Error, Point3, Result};

pub const MAGIC: &str = "bspline 1";

pub fn to_text(s: &BSplineSurface) -> String {
    let mut out = String::new();
    let join = |v: &[f64]| v.iter().map(|&x| format_sig9(x)).collect::<Vec<_>>().join(" ");
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "degree {} {}", s.degree_u(), s.degree_v());
    let _ = writeln!(out, "knots_u {} {}", s.knots_u().len(), join(s.knots_u()));
    let _ = writeln!(out, "knots_v {} {}", s.knots_v().len(), join(s.knots_v()));
    let _ = writeln!(out, "control {} {}", s.rows(), s.cols());
    for p in s.control() {
        let _ = writeln!(out, "{} {} {}", format_sig9(p.x), format_sig9(p.y), format_sig9(p.z));
    }
    out
}

/// Parses the text format; `path` only labels errors.
pub fn parse(text: &str, path: &Path) -> Result<BSplineSurface> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let mut next = |what: &str| -> Result<(usize, Vec<&str>)> {
        loop {
            match lines.next() {
                Some((_, "")) => continue,
                Some((n, l)) => return Ok((n, l.split_whitespace().collect())),
                None => {
                    return Err(Error::parse(
                        path,
                        Location::Line(text.lines().count() + 1),
                        format!("unexpected end of file, expected {what}"),
                    ))
                }
            }
        }
    };
    let err = |n: usize, m: String| Error::parse(path, Location::Line(n), m);
    let num = |n: usize, t: &str| t.parse::<f64>().map_err(|_| err(n, format!("bad number {t:?}")));
    let int = |n: usize, t: &str| t.parse::<usize>().map_err(|_| err(n, format!("bad integer {t:?}")));

    let (n, magic) = next("header")?;
    if magic.join(" ") != MAGIC {
        return Err(err(n, format!("expected magic {MAGIC:?}")));
    }
    let (n, deg) = next("degree line")?;
    if deg.len() != 3 || deg[0] != "degree" {
        return Err(err(n, "expected 'degree <du> <dv>'".into()));
    }
    let (du, dv) = (int(n, deg[1])?, int(n, deg[2])?);
    let mut knots = Vec::new();
    for tag in ["knots_u", "knots_v"] {
        let (n, t) = next(tag)?;
        if t.len() < 2 || t[0] != tag {
            return Err(err(n, format!("expected '{tag} <count> ...'")));
        }
        let count = int(n, t[1])?;
        if t.len() != count + 2 {
            return Err(err(n, format!("{tag} declares {count} knots, found {}", t.len() - 2)));
        }
        knots.push(t[2..].iter().map(|x| num(n, x)).collect::<Result<Vec<f64>>>()?);
    }
    let (n, ctl) = next("control line")?;
    if ctl.len() != 3 || ctl[0] != "control" {
        return Err(err(n, "expected 'control <rows> <cols>'".into()));
    }
    let (rows, cols) = (int(n, ctl[1])?, int(n, ctl[2])?);
    let mut control = Vec::with_capacity(rows.saturating_mul(cols).min(1 << 24));
    for _ in 0..rows * cols {
        let (n, p) = next("control point")?;
        if p.len() != 3 {
            return Err(err(n, format!("expected 3 coordinates, found {}", p.len())));
        }
        control.push(Point3::new(num(n, p[0])?, num(n, p[1])?, num(n, p[2])?));
    }
    let kv = knots.pop().expect("two knot vectors");
    let ku = knots.pop().expect("two knot vectors");
    BSplineSurface::new(du, dv, ku, kv, rows, cols, control)
        .map_err(|e| Error::parse(path, Location::Line(1), e.to_string()))
}

pub fn write_surface(path: impl AsRef<Path>, s: &BSplineSurface) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, to_text(s)).map_err(|e| Error::io(path, e))
}

pub fn read_surface(path: impl AsRef<Path>) -> Result<BSplineSurface> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(&text, path)
}

/// The surface exactly as it reads back from its text form.
pub fn quantize(s: &BSplineSurface) -> BSplineSurface {
    parse(&to_text(s), Path::new("<memory>")).expect("own output always parses")
}
