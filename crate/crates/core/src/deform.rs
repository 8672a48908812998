//! Landmark-guided Laplacian deformation: moves mesh vertices so the projected
//! landmark vertices reach target landmarks while the delta coordinates stay
//! close to those of the original mesh.
//!
//! Energy: `sum_i |project(v[id_i]) - l_i| + alpha * |L v - L v_orig|_F`, both
//! norms unsquared.

use std::io::Write as _;
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::autodiff::{AdamConfig, ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::landmarks::LandmarkSet;
use crate::mesh::{graph_laplacian, Camera, CsrMatrix, Projection, TriMesh};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeformConfig {
    pub alpha: f64,
    pub lr: f64,
    pub iterations: usize,
    /// Stop once the energy gradient norm drops below this.
    pub grad_tol: f64,
    /// Consecutive energy increases treated as divergence.
    pub divergence_window: usize,
}

impl Default for DeformConfig {
    fn default() -> Self {
        Self {
            alpha: 1e7,
            lr: 0.01,
            iterations: 2000,
            grad_tol: 1e-8,
            divergence_window: 100,
        }
    }
}

impl DeformConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            v.push(format!("deform.alpha must be finite and >= 0, got {}", self.alpha));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            v.push(format!("deform.lr must be finite and > 0, got {}", self.lr));
        }
        if self.divergence_window == 0 {
            v.push("deform.divergence_window must be positive".into());
        }
        v
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    GradientTolerance,
    IterationCap,
}

#[derive(Clone, Debug)]
pub struct DeformResult {
    /// Lowest-energy iterate visited.
    pub vertices: Vec<[f64; 3]>,
    /// Energy of every visited iterate, starting with the input vertices.
    pub energy_log: Vec<f64>,
    pub best_iteration: usize,
    pub stop: StopReason,
}

impl DeformResult {
    pub fn initial_energy(&self) -> f64 {
        self.energy_log[0]
    }

    pub fn final_energy(&self) -> f64 {
        self.energy_log[self.best_iteration]
    }
}

fn check_targets(mesh: &TriMesh) -> Result<()> {
    if mesh.landmark_ids().is_empty() {
        return Err(Error::InvalidMesh("mesh has no landmark vertex ids".into()));
    }
    Ok(())
}

/// `sum_i |project(v[id_i]) - l_i|`.
pub fn loss_landmark(vertices: &[[f64; 3]], ids: &[usize], camera: &Camera, lz: &LandmarkSet) -> Result<f64> {
    let mut total = 0.0;
    for (i, &id) in ids.iter().enumerate() {
        let p = camera.project(&vertices[id])?;
        let t = lz.point(i);
        total += (p[0] - t[0]).hypot(p[1] - t[1]);
    }
    Ok(total)
}

fn delta_coordinates(vertices: &[[f64; 3]], v_orig: &[[f64; 3]], lap: &CsrMatrix) -> Vec<[f64; 3]> {
    let d: Vec<[f64; 3]> = vertices
        .iter()
        .zip(v_orig)
        .map(|(a, b)| [a[0] - b[0], a[1] - b[1], a[2] - b[2]])
        .collect();
    lap.mul_points(&d)
}

fn frobenius(m: &[[f64; 3]]) -> f64 {
    m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
}

/// `|L v - L v_orig|_F`.
pub fn loss_laplacian(vertices: &[[f64; 3]], v_orig: &[[f64; 3]], lap: &CsrMatrix) -> f64 {
    frobenius(&delta_coordinates(vertices, v_orig, lap))
}

/// Fixed data of one deformation problem.
pub struct DeformProblem<'a> {
    pub mesh: &'a TriMesh,
    pub laplacian: CsrMatrix,
    pub camera: Camera,
    pub targets: &'a LandmarkSet,
    pub alpha: f64,
}

impl<'a> DeformProblem<'a> {
    pub fn new(mesh: &'a TriMesh, targets: &'a LandmarkSet, proj: &Projection, alpha: f64) -> Result<Self> {
        check_targets(mesh)?;
        Ok(Self {
            mesh,
            laplacian: graph_laplacian(mesh),
            camera: proj.camera(mesh.centroid()),
            targets,
            alpha,
        })
    }

    pub fn energy(&self, v: &[[f64; 3]]) -> Result<f64> {
        let lm = loss_landmark(v, self.mesh.landmark_ids(), &self.camera, self.targets)?;
        Ok(lm + self.alpha * loss_laplacian(v, self.mesh.vertices(), &self.laplacian))
    }

    /// Energy and its gradient. Each norm contributes `x / |x|` times its
    /// Jacobian, and nothing where it vanishes.
    pub fn energy_and_gradient(&self, v: &[[f64; 3]]) -> Result<(f64, Vec<[f64; 3]>)> {
        let mut grad = vec![[0.0; 3]; v.len()];
        let mut energy = 0.0;
        for (i, &id) in self.mesh.landmark_ids().iter().enumerate() {
            let p = self.camera.project(&v[id])?;
            let t = self.targets.point(i);
            let r = [p[0] - t[0], p[1] - t[1]];
            let norm = r[0].hypot(r[1]);
            energy += norm;
            if norm > 0.0 {
                let j = self.camera.jacobian(&v[id])?;
                for c in 0..3 {
                    grad[id][c] += (j[0][c] * r[0] + j[1][c] * r[1]) / norm;
                }
            }
        }
        if self.alpha > 0.0 {
            let delta = delta_coordinates(v, self.mesh.vertices(), &self.laplacian);
            let norm = frobenius(&delta);
            energy += self.alpha * norm;
            if norm > 0.0 {
                // L is symmetric, so L^T delta = L delta.
                let back = self.laplacian.mul_points(&delta);
                let s = self.alpha / norm;
                for (g, b) in grad.iter_mut().zip(back) {
                    for c in 0..3 {
                        g[c] += s * b[c];
                    }
                }
            }
        }
        Ok((energy, grad))
    }
}

/// Minimizes the deformation energy with Adam starting from the mesh vertices
/// and returns the lowest-energy iterate.
pub fn deform(mesh: &TriMesh, lz: &LandmarkSet, proj: &Projection, cfg: &DeformConfig) -> Result<DeformResult> {
    let violations = cfg.violations();
    if !violations.is_empty() {
        return Err(Error::Config(violations));
    }
    let problem = DeformProblem::new(mesh, lz, proj, cfg.alpha)?;
    let n = mesh.num_vertices();
    let mut store = ParamStore::new();
    let flat: Vec<f64> = mesh.vertices().iter().flatten().copied().collect();
    store.insert("vertices", Tensor::new(vec![n, 3], flat)?);
    let adam = AdamConfig::with_lr(cfg.lr);
    let as_points = |t: &Tensor| -> Vec<[f64; 3]> { t.data().chunks(3).map(|c| [c[0], c[1], c[2]]).collect() };

    let mut log = Vec::with_capacity(cfg.iterations + 1);
    let mut best = (f64::INFINITY, 0, mesh.vertices().to_vec());
    let mut rising = 0;
    let mut stop = StopReason::IterationCap;
    for it in 0..=cfg.iterations {
        let v = as_points(store.get("vertices").expect("inserted"));
        let (e, g) = problem.energy_and_gradient(&v)?;
        if !e.is_finite() {
            return Err(Error::NonFinite(format!("deformation energy at iteration {it}")));
        }
        if let Some(&prev) = log.last() {
            rising = if e > prev { rising + 1 } else { 0 };
            if rising >= cfg.divergence_window {
                return Err(Error::Diverged {
                    iteration: it,
                    window: cfg.divergence_window,
                    energy: e,
                });
            }
        }
        log.push(e);
        if e < best.0 {
            best = (e, it, v);
        }
        let gnorm = g.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
        if gnorm < cfg.grad_tol {
            stop = StopReason::GradientTolerance;
            break;
        }
        if it == cfg.iterations {
            break;
        }
        store.set_grad("vertices", Tensor::new(vec![n, 3], g.into_iter().flatten().collect())?)?;
        store.adam_step(&adam)?;
    }
    Ok(DeformResult {
        vertices: best.2,
        energy_log: log,
        best_iteration: best.1,
        stop,
    })
}

/// Connected vertex sets of the edge graph; every vertex is its own set when
/// `coupled` is false.
fn components(mesh: &TriMesh, coupled: bool) -> Vec<Vec<usize>> {
    let n = mesh.num_vertices();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    if coupled {
        for (a, b) in mesh.edges() {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for v in 0..n {
        let r = find(&mut parent, v);
        groups.entry(r).or_default().push(v);
    }
    groups.into_values().collect()
}

/// Solves the squared-residual form of the energy,
/// `alpha |L (v - v_orig)|^2 + sum_i |A v[id_i] + b - l_i|^2`, for an affine
/// camera through dense normal equations. Directions the energy cannot see
/// (translations along the viewing axis, free components) are pinned to zero
/// change, so the result is the minimum-change minimizer.
pub fn solve_direct(mesh: &TriMesh, lz: &LandmarkSet, proj: &Projection, alpha: f64) -> Result<Vec<[f64; 3]>> {
    check_targets(mesh)?;
    if !proj.is_affine() {
        return Err(Error::InvalidProjection("direct solve needs an affine camera".into()));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::Config(vec![format!("alpha must be finite and >= 0, got {alpha}")]));
    }
    let n = mesh.num_vertices();
    let dim = 3 * n;
    let camera = proj.camera(mesh.centroid());
    let a = camera.jacobian(&[0.0; 3])?;
    let lap = graph_laplacian(mesh);
    let v0 = mesh.vertices();

    let mut h = DMatrix::<f64>::zeros(dim, dim);
    let mut rhs = DVector::<f64>::zeros(dim);
    if alpha > 0.0 {
        for k in 0..n {
            let (cols, vals) = lap.row(k);
            for (&i, &li) in cols.iter().zip(vals) {
                for (&j, &lj) in cols.iter().zip(vals) {
                    let w = alpha * li * lj;
                    for c in 0..3 {
                        h[(3 * i + c, 3 * j + c)] += w;
                    }
                }
            }
        }
    }
    let mut ata = [[0.0; 3]; 3];
    for (r, row) in ata.iter_mut().enumerate() {
        for (c, x) in row.iter_mut().enumerate() {
            *x = a[0][r] * a[0][c] + a[1][r] * a[1][c];
        }
    }
    for (i, &id) in mesh.landmark_ids().iter().enumerate() {
        let p = camera.project(&v0[id])?;
        let t = lz.point(i);
        let r = [t[0] - p[0], t[1] - p[1]];
        for rr in 0..3 {
            for cc in 0..3 {
                h[(3 * id + rr, 3 * id + cc)] += ata[rr][cc];
            }
            rhs[3 * id + rr] += a[0][rr] * r[0] + a[1][rr] * r[1];
        }
    }

    // Null directions: translation of a component along the viewing axis if it
    // holds a landmark, along every axis otherwise.
    let view = {
        let n = [
            a[0][1] * a[1][2] - a[0][2] * a[1][1],
            a[0][2] * a[1][0] - a[0][0] * a[1][2],
            a[0][0] * a[1][1] - a[0][1] * a[1][0],
        ];
        let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
        n.map(|x| x / len)
    };
    let is_landmark: std::collections::HashSet<usize> = mesh.landmark_ids().iter().copied().collect();
    let gauge = (0..dim).map(|i| h[(i, i)]).fold(0.0_f64, f64::max).max(1.0);
    for comp in components(mesh, alpha > 0.0) {
        let dirs: Vec<[f64; 3]> = if comp.iter().any(|v| is_landmark.contains(v)) {
            vec![view]
        } else {
            vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
        };
        let scale = 1.0 / comp.len() as f64;
        for d in dirs {
            for &i in &comp {
                for &j in &comp {
                    for r in 0..3 {
                        for c in 0..3 {
                            h[(3 * i + r, 3 * j + c)] += gauge * scale * d[r] * d[c];
                        }
                    }
                }
            }
        }
    }

    let chol = Cholesky::new(h).ok_or_else(|| {
        Error::RankDeficient("normal equations of the deformation system are not positive definite".into())
    })?;
    let d = chol.solve(&rhs);
    if d.iter().any(|x| !x.is_finite()) {
        return Err(Error::RankDeficient("direct solve produced non-finite values".into()));
    }
    Ok(v0
        .iter()
        .enumerate()
        .map(|(i, v)| [v[0] + d[3 * i], v[1] + d[3 * i + 1], v[2] + d[3 * i + 2]])
        .collect())
}

/// `iteration,energy` rows.
pub fn write_energy_csv(path: &Path, log: &[f64]) -> Result<()> {
    crate::blob::ensure_parent(path)?;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    let mut body = String::from("iteration,energy\n");
    for (i, e) in log.iter().enumerate() {
        body.push_str(&format!("{i},{e}\n"));
    }
    f.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))
}
