use crate::mesh::trimesh::TriMesh;

/// Square sparse matrix in compressed sparse row form with sorted columns.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map_or(0.0, |k| vals[k])
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let (cols, vals) = self.row(i);
                cols.iter().zip(vals).map(|(&j, &a)| a * x[j]).sum()
            })
            .collect()
    }

    /// Product with an `n x 3` matrix stored as rows.
    pub fn mul_points(&self, x: &[[f64; 3]]) -> Vec<[f64; 3]> {
        (0..self.n)
            .map(|i| {
                let (cols, vals) = self.row(i);
                let mut acc = [0.0; 3];
                for (&j, &a) in cols.iter().zip(vals) {
                    for c in 0..3 {
                        acc[c] += a * x[j][c];
                    }
                }
                acc
            })
            .collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (i, row) in d.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            for (&j, &a) in cols.iter().zip(vals) {
                row[j] = a;
            }
        }
        d
    }
}

/// Uniform graph Laplacian `L = D - A` over the edges of the mesh faces.
pub fn graph_laplacian(mesh: &TriMesh) -> CsrMatrix {
    let n = mesh.num_vertices();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (a, b) in mesh.edges() {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    row_ptr.push(0);
    for (i, nbrs) in adj.iter_mut().enumerate() {
        nbrs.push(i);
        nbrs.sort_unstable();
        let degree = (nbrs.len() - 1) as f64;
        for &j in nbrs.iter() {
            col_idx.push(j);
            values.push(if j == i { degree } else { -1.0 });
        }
        row_ptr.push(col_idx.len());
    }
    CsrMatrix {
        n,
        row_ptr,
        col_idx,
        values,
    }
}
