use std::collections::HashSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::landmarks::NUM_LANDMARKS;

/// Triangle mesh with one texture coordinate per vertex and an optional set of
/// 68 landmark vertex indices.
#[derive(Clone, Debug, PartialEq)]
pub struct TriMesh {
    vertices: Vec<[f64; 3]>,
    faces: Vec<[usize; 3]>,
    uvs: Vec<[f64; 2]>,
    landmark_ids: Vec<usize>,
}

impl TriMesh {
    pub fn new(
        vertices: Vec<[f64; 3]>,
        faces: Vec<[usize; 3]>,
        uvs: Vec<[f64; 2]>,
        landmark_ids: Vec<usize>,
    ) -> Result<Self> {
        let n = vertices.len();
        if uvs.len() != n {
            return Err(Error::InvalidMesh(format!("{} uvs for {n} vertices", uvs.len())));
        }
        if let Some(i) = vertices.iter().position(|v| v.iter().any(|c| !c.is_finite())) {
            return Err(Error::InvalidMesh(format!("vertex {i} is not finite")));
        }
        if let Some(i) = uvs
            .iter()
            .position(|uv| uv.iter().any(|c| !(0.0..=1.0).contains(c)))
        {
            return Err(Error::InvalidMesh(format!("uv {i} outside [0, 1]")));
        }
        for (fi, f) in faces.iter().enumerate() {
            if f.iter().any(|&i| i >= n) {
                return Err(Error::InvalidMesh(format!("face {fi} indexes past {n} vertices")));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::InvalidMesh(format!("face {fi} repeats a vertex: {f:?}")));
            }
        }
        check_landmark_ids(&landmark_ids, n)?;
        Ok(Self {
            vertices,
            faces,
            uvs,
            landmark_ids,
        })
    }

    pub fn vertices(&self) -> &[[f64; 3]] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn uvs(&self) -> &[[f64; 2]] {
        &self.uvs
    }

    pub fn landmark_ids(&self) -> &[usize] {
        &self.landmark_ids
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    /// Same topology, uvs and landmark ids with new vertex positions.
    pub fn with_vertices(&self, vertices: Vec<[f64; 3]>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::InvalidMesh(format!(
                "{} positions for a mesh of {} vertices",
                vertices.len(),
                self.vertices.len()
            )));
        }
        if let Some(i) = vertices.iter().position(|v| v.iter().any(|c| !c.is_finite())) {
            return Err(Error::InvalidMesh(format!("vertex {i} is not finite")));
        }
        Ok(Self {
            vertices,
            ..self.clone()
        })
    }

    pub fn with_landmark_ids(mut self, ids: Vec<usize>) -> Result<Self> {
        check_landmark_ids(&ids, self.vertices.len())?;
        self.landmark_ids = ids;
        Ok(self)
    }

    pub fn centroid(&self) -> [f64; 3] {
        centroid(&self.vertices)
    }

    pub fn bbox_diagonal(&self) -> f64 {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for v in &self.vertices {
            for c in 0..3 {
                lo[c] = lo[c].min(v[c]);
                hi[c] = hi[c].max(v[c]);
            }
        }
        (0..3).map(|c| (hi[c] - lo[c]).powi(2)).sum::<f64>().sqrt()
    }

    /// Undirected edges `(a, b)` with `a < b`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut e: Vec<(usize, usize)> = self
            .faces
            .iter()
            .flat_map(|f| [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])])
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        e.sort_unstable();
        e.dedup();
        e
    }
}

pub fn centroid(vertices: &[[f64; 3]]) -> [f64; 3] {
    let mut c = [0.0; 3];
    for v in vertices {
        for k in 0..3 {
            c[k] += v[k];
        }
    }
    let n = vertices.len().max(1) as f64;
    c.map(|x| x / n)
}

fn check_landmark_ids(ids: &[usize], n: usize) -> Result<()> {
    if ids.is_empty() {
        return Ok(());
    }
    if ids.len() != NUM_LANDMARKS {
        return Err(Error::InvalidMesh(format!(
            "expected {NUM_LANDMARKS} landmark vertex ids, got {}",
            ids.len()
        )));
    }
    if let Some(&i) = ids.iter().find(|&&i| i >= n) {
        return Err(Error::InvalidMesh(format!("landmark vertex {i} out of range")));
    }
    let distinct: HashSet<usize> = ids.iter().copied().collect();
    if distinct.len() != ids.len() {
        return Err(Error::InvalidMesh("landmark vertex ids are not distinct".into()));
    }
    Ok(())
}

/// Reads whitespace-separated vertex indices, one landmark per entry.
pub fn load_landmark_ids(path: &Path) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut ids = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("");
        for tok in line.split_whitespace() {
            ids.push(tok.parse::<usize>().map_err(|_| Error::Parse {
                path: path.display().to_string(),
                line: ln + 1,
                message: format!("`{tok}` is not a vertex index"),
            })?);
        }
    }
    if ids.len() != NUM_LANDMARKS {
        return Err(Error::Format(format!(
            "{}: expected {NUM_LANDMARKS} landmark indices, found {}",
            path.display(),
            ids.len()
        )));
    }
    Ok(ids)
}

pub fn save_landmark_ids(ids: &[usize], path: &Path) -> Result<()> {
    crate::blob::ensure_parent(path)?;
    let text: String = ids.iter().map(|i| format!("{i}\n")).collect();
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tri() -> (Vec<[f64; 3]>, Vec<[f64; 2]>) {
        (
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
        )
    }

    #[test]
    fn rejects_degenerate_and_out_of_range_faces() {
        let (v, uv) = tri();
        assert!(TriMesh::new(v.clone(), vec![[0, 1, 1]], uv.clone(), vec![]).is_err());
        assert!(TriMesh::new(v.clone(), vec![[0, 1, 3]], uv.clone(), vec![]).is_err());
        assert!(TriMesh::new(v, vec![[0, 1, 2]], uv, vec![]).is_ok());
    }

    #[test]
    fn landmark_ids_must_be_distinct() {
        let n = 100;
        let v: Vec<[f64; 3]> = (0..n).map(|i| [i as f64, 0.0, 0.0]).collect();
        let uv = vec![[0.5, 0.5]; n];
        let mut ids: Vec<usize> = (0..68).collect();
        assert!(TriMesh::new(v.clone(), vec![], uv.clone(), ids.clone()).is_ok());
        ids[3] = 7;
        assert!(TriMesh::new(v, vec![], uv, ids).is_err());
    }
}
