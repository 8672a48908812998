//! Wavefront OBJ subset: `v`, `vt` and `f` records with `v/vt` indexing.
//! Polygons are fan-triangulated from their first corner.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::trimesh::{load_landmark_ids, TriMesh};

struct Parser<'a> {
    origin: &'a str,
}

impl Parser<'_> {
    fn err(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.origin.to_string(),
            line,
            message: message.into(),
        }
    }

    fn floats<const N: usize>(&self, toks: &[&str], line: usize, what: &str) -> Result<[f64; N]> {
        if toks.len() < N {
            return Err(self.err(line, format!("{what} record needs {N} numbers")));
        }
        let mut out = [0.0; N];
        for (o, t) in out.iter_mut().zip(toks) {
            *o = t
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| self.err(line, format!("`{t}` is not a finite number")))?;
        }
        Ok(out)
    }

    /// Resolves a 1-based (or negative, relative) OBJ index against `count` entries.
    fn index(&self, tok: &str, count: usize, line: usize, what: &str) -> Result<usize> {
        let raw: i64 = tok
            .parse()
            .map_err(|_| self.err(line, format!("`{tok}` is not a {what} index")))?;
        let idx = if raw > 0 {
            raw - 1
        } else if raw < 0 {
            count as i64 + raw
        } else {
            -1
        };
        if idx < 0 || idx as usize >= count {
            return Err(self.err(line, format!("{what} index {raw} out of range (have {count})")));
        }
        Ok(idx as usize)
    }
}

/// Parses OBJ text into a mesh without landmark ids. `origin` names the source
/// in error messages.
pub fn parse_obj(text: &str, origin: &str) -> Result<TriMesh> {
    let p = Parser { origin };
    let mut vertices = Vec::new();
    let mut vertex_lines = Vec::new();
    let mut texcoords = Vec::new();
    let mut corners: Vec<(usize, Vec<(usize, usize)>)> = Vec::new();

    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let content = raw.split('#').next().unwrap_or("");
        let toks: Vec<&str> = content.split_whitespace().collect();
        let Some((&kind, rest)) = toks.split_first() else { continue };
        match kind {
            "v" => {
                vertices.push(p.floats::<3>(rest, line, "v")?);
                vertex_lines.push(line);
            }
            "vt" => {
                let [u, v] = p.floats::<2>(rest, line, "vt")?;
                texcoords.push(([u, v], line));
            }
            "f" => {
                if rest.len() < 3 {
                    return Err(p.err(line, "face needs at least three corners"));
                }
                let mut poly = Vec::with_capacity(rest.len());
                for c in rest {
                    let mut parts = c.split('/');
                    let vi = p.index(parts.next().unwrap_or(""), vertices.len(), line, "vertex")?;
                    let ti = match parts.next() {
                        Some(t) if !t.is_empty() => p.index(t, texcoords.len(), line, "texture")?,
                        _ => return Err(p.err(line, format!("corner `{c}` has no texture index"))),
                    };
                    poly.push((vi, ti));
                }
                corners.push((line, poly));
            }
            "vn" | "o" | "g" | "s" | "usemtl" | "mtllib" | "l" | "p" => {}
            other => return Err(p.err(line, format!("unsupported record `{other}`"))),
        }
    }

    let mut uvs: Vec<Option<[f64; 2]>> = vec![None; vertices.len()];
    let mut faces = Vec::new();
    for (line, poly) in &corners {
        for &(vi, ti) in poly {
            let uv = texcoords[ti].0;
            match uvs[vi] {
                None => uvs[vi] = Some(uv),
                Some(prev) if prev != uv => {
                    return Err(p.err(
                        *line,
                        format!("vertex {} has conflicting texture coordinates", vi + 1),
                    ))
                }
                Some(_) => {}
            }
        }
        for k in 1..poly.len() - 1 {
            let f = [poly[0].0, poly[k].0, poly[k + 1].0];
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(p.err(*line, format!("degenerate face {:?}", f.map(|i| i + 1))));
            }
            faces.push(f);
        }
    }
    let uvs = uvs
        .into_iter()
        .enumerate()
        .map(|(i, uv)| uv.ok_or_else(|| p.err(vertex_lines[i], format!("vertex {} has no texture coordinate", i + 1))))
        .collect::<Result<Vec<_>>>()?;
    for (i, uv) in uvs.iter().enumerate() {
        if uv.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(p.err(vertex_lines[i], format!("texture coordinate of vertex {} outside [0, 1]", i + 1)));
        }
    }
    TriMesh::new(vertices, faces, uvs, Vec::new())
}

/// Loads an OBJ file and, when given, its landmark-index sidecar.
pub fn load_obj(path: &Path, landmarks: Option<&Path>) -> Result<TriMesh> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mesh = parse_obj(&text, &path.display().to_string())?;
    match landmarks {
        Some(l) => mesh.with_landmark_ids(load_landmark_ids(l)?),
        None => Ok(mesh),
    }
}

/// Writes one `vt` per vertex so `f` records use matching `i/i` pairs.
pub fn obj_string(mesh: &TriMesh) -> String {
    let mut s = String::new();
    for v in mesh.vertices() {
        let _ = writeln!(s, "v {} {} {}", v[0], v[1], v[2]);
    }
    for uv in mesh.uvs() {
        let _ = writeln!(s, "vt {} {}", uv[0], uv[1]);
    }
    for f in mesh.faces() {
        let [a, b, c] = f.map(|i| i + 1);
        let _ = writeln!(s, "f {a}/{a} {b}/{b} {c}/{c}");
    }
    s
}

pub fn save_obj(mesh: &TriMesh, path: &Path) -> Result<()> {
    crate::blob::ensure_parent(path)?;
    std::fs::write(path, obj_string(mesh)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const TRIANGLE: &str = "v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nvt 1 0\nvt 0 1\nf 1/1 2/2 3/3\n";

    #[test]
    fn single_triangle() {
        let m = parse_obj(TRIANGLE, "t.obj").unwrap();
        assert_eq!((m.num_vertices(), m.num_faces()), (3, 1));
    }

    #[test]
    fn quad_is_fan_triangulated_with_winding() {
        let text = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvt 0 0\nvt 1 0\nvt 1 1\nvt 0 1\nf 1/1 2/2 3/3 4/4\n";
        let m = parse_obj(text, "q.obj").unwrap();
        assert_eq!(m.faces(), &[[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let missing_uv = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n";
        assert!(matches!(parse_obj(missing_uv, "a").unwrap_err(), Error::Parse { line: 4, .. }));
        let out_of_range = "v 0 0 0\nvt 0 0\nf 1/1 2/1 3/1\n";
        assert!(matches!(parse_obj(out_of_range, "b").unwrap_err(), Error::Parse { line: 3, .. }));
        let bad_number = "v 0 zero 0\n";
        assert!(matches!(parse_obj(bad_number, "c").unwrap_err(), Error::Parse { line: 1, .. }));
        let degenerate = "v 0 0 0\nv 1 0 0\nvt 0 0\nf 1/1 2/1 1/1\n";
        assert!(matches!(parse_obj(degenerate, "d").unwrap_err(), Error::Parse { line: 4, .. }));
    }

    #[test]
    fn round_trip_is_structural_fixed_point() {
        let text = "# comment\nv 0.1 0.2 0.3\nv 1 0 -0.5\nv 0 1 2.25\nv 1 1 1\nvt 0.25 0.5\nvt 1 0\nvt 0 1\nvt 0.75 0.75\nf 1/1 2/2 4/4 3/3\n";
        let once = parse_obj(text, "r").unwrap();
        let twice = parse_obj(&obj_string(&once), "r2").unwrap();
        let thrice = parse_obj(&obj_string(&twice), "r3").unwrap();
        assert_eq!(once, twice);
        assert_eq!(twice, thrice);
    }
}
