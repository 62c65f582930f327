//! ASCII PLY and XYZ point-cloud files.
//!
//! PLY: only `format ascii 1.0` is supported. Vertex properties other than
//! `x y z red green blue` are skipped on read and never written. Elements
//! other than `vertex` are skipped. The frame id is kept in a
//! `comment frame_id <id>` header line.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud};

struct Element {
    name: String,
    count: usize,
    props: Vec<String>,
    has_list: bool,
}

pub fn parse_ply(text: &str) -> Result<PointCloud> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err(Error::parse(1, "missing `ply` magic")),
    }

    let mut elements: Vec<Element> = Vec::new();
    let mut frame_id = String::new();
    let mut saw_format = false;
    let mut header_done = false;
    for (n, line) in lines.by_ref() {
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("format") => {
                if tok.next() != Some("ascii") {
                    return Err(Error::parse(n, "only ascii PLY is supported"));
                }
                saw_format = true;
            }
            Some("comment") => {
                if let Some(rest) = line.strip_prefix("comment frame_id ") {
                    frame_id = rest.trim().to_string();
                }
            }
            Some("obj_info") | None => {}
            Some("element") => {
                let name = tok.next().ok_or_else(|| Error::parse(n, "element without name"))?;
                let count = tok
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| Error::parse(n, "element without valid count"))?;
                elements.push(Element { name: name.to_string(), count, props: Vec::new(), has_list: false });
            }
            Some("property") => {
                let el = elements.last_mut().ok_or_else(|| Error::parse(n, "property before element"))?;
                let kind = tok.next().ok_or_else(|| Error::parse(n, "property without type"))?;
                if kind == "list" {
                    el.has_list = true;
                    el.props.push(tok.nth(2).unwrap_or("").to_string());
                } else {
                    let name = tok.next().ok_or_else(|| Error::parse(n, "property without name"))?;
                    el.props.push(name.to_string());
                }
            }
            Some("end_header") => {
                header_done = true;
                break;
            }
            Some(other) => return Err(Error::parse(n, format!("unknown header keyword `{other}`"))),
        }
    }
    if !header_done {
        return Err(Error::parse(0, "missing end_header"));
    }
    if !saw_format {
        return Err(Error::parse(0, "missing format line"));
    }

    let mut points = Vec::new();
    for el in &elements {
        if el.name != "vertex" {
            for _ in 0..el.count {
                if lines.next().is_none() {
                    return Err(Error::parse(0, format!("truncated `{}` element", el.name)));
                }
            }
            continue;
        }
        if el.has_list {
            return Err(Error::parse(0, "list properties on vertices are not supported"));
        }
        let find = |name: &str| el.props.iter().position(|p| p == name);
        let (ix, iy, iz) = match (find("x"), find("y"), find("z")) {
            (Some(x), Some(y), Some(z)) => (x, y, z),
            _ => return Err(Error::parse(0, "vertex element lacks x/y/z")),
        };
        let rgb = match (find("red"), find("green"), find("blue")) {
            (Some(r), Some(g), Some(b)) => Some([r, g, b]),
            _ => None,
        };
        points.reserve(el.count);
        for _ in 0..el.count {
            let (n, line) = lines.next().ok_or_else(|| Error::parse(0, "truncated vertex data"))?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != el.props.len() {
                return Err(Error::parse(
                    n,
                    format!("expected {} values, found {}", el.props.len(), fields.len()),
                ));
            }
            let coord = |i: usize| -> Result<f64> {
                let v: f64 = fields[i].parse().map_err(|_| Error::parse(n, format!("bad number `{}`", fields[i])))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::parse(n, "non-finite coordinate"))
                }
            };
            let mut p = Point3::new(coord(ix)?, coord(iy)?, coord(iz)?);
            if let Some(idx) = rgb {
                let mut c = [0u8; 3];
                for (slot, &i) in c.iter_mut().zip(&idx) {
                    *slot = fields[i].parse().map_err(|_| Error::parse(n, format!("bad color `{}`", fields[i])))?;
                }
                p.color = Some(c);
            }
            points.push(p);
        }
    }
    Ok(PointCloud::new(points)?.with_frame_id(frame_id))
}

pub fn write_ply(cloud: &PointCloud) -> String {
    let colored = !cloud.is_empty() && cloud.iter().all(|p| p.color.is_some());
    let mut out = String::with_capacity(64 + cloud.len() * 40);
    out.push_str("ply\nformat ascii 1.0\n");
    if !cloud.frame_id().is_empty() {
        let _ = writeln!(out, "comment frame_id {}", cloud.frame_id());
    }
    let _ = writeln!(out, "element vertex {}", cloud.len());
    out.push_str("property float x\nproperty float y\nproperty float z\n");
    if colored {
        out.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    out.push_str("end_header\n");
    for p in cloud {
        let _ = write!(out, "{} {} {}", p.x, p.y, p.z);
        if let (true, Some([r, g, b])) = (colored, p.color) {
            let _ = write!(out, " {r} {g} {b}");
        }
        out.push('\n');
    }
    out
}

/// One `x y z` (or `x y z r g b`) record per line; `#` starts a comment.
pub fn parse_xyz(text: &str) -> Result<PointCloud> {
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 && fields.len() != 6 {
            return Err(Error::parse(n, format!("expected 3 or 6 values, found {}", fields.len())));
        }
        let mut xyz = [0.0f64; 3];
        for (v, f) in xyz.iter_mut().zip(&fields) {
            *v = f.parse().map_err(|_| Error::parse(n, format!("bad number `{f}`")))?;
            if !v.is_finite() {
                return Err(Error::parse(n, "non-finite coordinate"));
            }
        }
        let mut p = Point3::new(xyz[0], xyz[1], xyz[2]);
        if fields.len() == 6 {
            let mut c = [0u8; 3];
            for (slot, f) in c.iter_mut().zip(&fields[3..]) {
                *slot = f.parse().map_err(|_| Error::parse(n, format!("bad color `{f}`")))?;
            }
            p.color = Some(c);
        }
        points.push(p);
    }
    PointCloud::new(points)
}

pub fn write_xyz(cloud: &PointCloud) -> String {
    let mut out = String::with_capacity(cloud.len() * 40);
    for p in cloud {
        let _ = writeln!(out, "{} {} {}", p.x, p.y, p.z);
    }
    out
}

fn is_xyz(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("xyz") || e.eq_ignore_ascii_case("txt"))
}

/// Loads a `.ply` or `.xyz` file; errors carry the path.
pub fn load_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let read = || -> Result<PointCloud> {
        let text = fs::read_to_string(path)?;
        if is_xyz(path) {
            parse_xyz(&text)
        } else {
            parse_ply(&text)
        }
    };
    read().map_err(|e| e.at_path(path))
}

pub fn save_cloud(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    let path = path.as_ref();
    let text = if is_xyz(path) { write_xyz(cloud) } else { write_ply(cloud) };
    fs::write(path, text).map_err(|e| Error::from(e).at_path(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn skips_unknown_properties_and_elements() {
        let text = "ply\nformat ascii 1.0\ncomment made by hand\nelement vertex 2\n\
                    property float x\nproperty float y\nproperty float intensity\nproperty float z\n\
                    element face 1\nproperty list uchar int vertex_indices\nend_header\n\
                    1 2 0.5 3\n4 5 0.5 6\n3 0 1 1\n";
        let c = parse_ply(text).unwrap();
        assert_eq!(c.points(), &[Point3::new(1.0, 2.0, 3.0), Point3::new(4.0, 5.0, 6.0)]);
    }

    #[test]
    fn colors_and_frame_id_round_trip() {
        let c = PointCloud::new(vec![
            Point3::with_color(0.1, 0.2, 0.3, [1, 2, 3]),
            Point3::with_color(-1e-7, 5.0, 1.0 / 3.0, [255, 0, 9]),
        ])
        .unwrap()
        .with_frame_id("room_1");
        let text = write_ply(&c);
        assert!(text.contains("property uchar red"));
        assert_eq!(parse_ply(&text).unwrap(), c);
    }

    #[test]
    fn rejects_binary_and_truncated_files() {
        assert!(parse_ply("ply\nformat binary_little_endian 1.0\nend_header\n").is_err());
        let truncated = "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nend_header\n1 2 3\n";
        assert!(parse_ply(truncated).is_err());
        assert!(parse_ply("not a ply").is_err());
        let bad = "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nend_header\n1 nan 3\n";
        assert!(parse_ply(bad).is_err());
    }

    #[test]
    fn xyz_parsing() {
        let c = parse_xyz("# header\n1 2 3\n\n4 5 6 10 20 30\n").unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.points()[1].color, Some([10, 20, 30]));
        assert!(parse_xyz("1 2\n").is_err());
        let plain = PointCloud::from_xyz(&[[0.125, -3.5, 1e10]]).unwrap();
        assert_eq!(parse_xyz(&write_xyz(&plain)).unwrap(), plain);
    }
}
