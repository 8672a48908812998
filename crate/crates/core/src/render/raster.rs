//! Z-buffered triangle rasterization and bilinear texture shading.
//!
//! Pixel `(row, col)` has its center at image-plane point `(col + 0.5, row + 0.5)`;
//! image-plane coordinates are the camera's projected coordinates.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::mesh::{Camera, Projection, TriMesh};
use crate::render::texture::TextureImage;
use crate::seed::Rng;

pub const MAX_AZIMUTH: f64 = 30.0;
pub const MAX_ELEVATION: f64 = 20.0;
pub const DEFAULT_BACKGROUND: f64 = 0.5;

/// Visible surface sample at one pixel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Fragment {
    pub face: usize,
    /// Perspective-correct barycentric coordinates in face vertex order.
    pub bary: [f64; 3],
    pub depth: f64,
}

/// Texel indices (`row * width + col`) and bilinear weights used by one pixel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Footprint {
    pub face: usize,
    pub bary: [f64; 3],
    pub texels: [usize; 4],
    pub weights: [f64; 4],
}

/// Visibility of a fixed geometry under one camera, independent of texture.
#[derive(Clone, Debug, PartialEq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub fragments: Vec<Option<Fragment>>,
}

impl Raster {
    pub fn covered(&self) -> usize {
        self.fragments.iter().filter(|f| f.is_some()).count()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderedView {
    pub image: TextureImage,
    /// Depth per pixel, `+inf` on background.
    pub depth: Vec<f64>,
    pub footprint: Vec<Option<Footprint>>,
    pub texture_width: usize,
    pub texture_height: usize,
}

/// `(b - a) x (p - a)`.
fn edge(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

/// Top-left rule for a positively oriented triangle: an edge owns the pixels
/// lying exactly on it when it is a left edge (going up) or a top edge
/// (horizontal, going right).
fn owns_boundary(a: [f64; 2], b: [f64; 2]) -> bool {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    dy < 0.0 || (dy == 0.0 && dx > 0.0)
}

fn inside(e: f64, owns: bool) -> bool {
    e > 0.0 || (e == 0.0 && owns)
}

/// Coverage test for the pixel center `p` against triangle `t`, independent of
/// winding. Returns screen-space barycentrics in the original vertex order.
pub fn cover(t: [[f64; 2]; 3], p: [f64; 2]) -> Option<[f64; 3]> {
    let area = edge(t[0], t[1], t[2]);
    if area == 0.0 {
        return None;
    }
    let order = if area > 0.0 { [0, 1, 2] } else { [0, 2, 1] };
    let q = order.map(|i| t[i]);
    let area = area.abs();
    let e = [edge(q[1], q[2], p), edge(q[2], q[0], p), edge(q[0], q[1], p)];
    let owns = [owns_boundary(q[1], q[2]), owns_boundary(q[2], q[0]), owns_boundary(q[0], q[1])];
    if !(0..3).all(|k| inside(e[k], owns[k])) {
        return None;
    }
    let mut bary = [0.0; 3];
    for k in 0..3 {
        bary[order[k]] = e[k] / area;
    }
    Some(bary)
}

pub fn rasterize(mesh: &TriMesh, camera: &Camera, width: usize, height: usize) -> Result<Raster> {
    if mesh.num_faces() == 0 {
        return Err(Error::InvalidMesh("mesh has no faces to render".into()));
    }
    if width == 0 || height == 0 {
        return Err(Error::Shape("render target must be non-empty".into()));
    }
    let mut screen = Vec::with_capacity(mesh.num_vertices());
    for v in mesh.vertices() {
        let (p, depth) = camera.project_depth(v)?;
        screen.push((p, depth, 1.0 / camera.w(v)?));
    }
    let mut fragments: Vec<Option<Fragment>> = vec![None; width * height];
    for (fi, f) in mesh.faces().iter().enumerate() {
        let s = f.map(|i| screen[i]);
        // Faces crossing behind a perspective camera are dropped.
        if s.iter().any(|v| v.2 <= 0.0) {
            continue;
        }
        let t = s.map(|v| v.0);
        let lo_x = t.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
        let hi_x = t.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
        let lo_y = t.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
        let hi_y = t.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max);
        let c0 = (lo_x - 0.5).ceil().max(0.0) as usize;
        let r0 = (lo_y - 0.5).ceil().max(0.0) as usize;
        if hi_x < 0.5 || hi_y < 0.5 {
            continue;
        }
        let c1 = ((hi_x - 0.5).floor() as usize).min(width - 1);
        let r1 = ((hi_y - 0.5).floor() as usize).min(height - 1);
        for row in r0..=r1 {
            for col in c0..=c1 {
                let p = [col as f64 + 0.5, row as f64 + 0.5];
                let Some(l) = cover(t, p) else { continue };
                let inv_w = [l[0] * s[0].2, l[1] * s[1].2, l[2] * s[2].2];
                let denom = inv_w[0] + inv_w[1] + inv_w[2];
                let bary = inv_w.map(|x| x / denom);
                let depth = if camera.is_affine() {
                    l[0] * s[0].1 + l[1] * s[1].1 + l[2] * s[2].1
                } else {
                    1.0 / denom
                };
                let slot = &mut fragments[row * width + col];
                if slot.is_none_or(|old| depth < old.depth) {
                    *slot = Some(Fragment { face: fi, bary, depth });
                }
            }
        }
    }
    Ok(Raster {
        width,
        height,
        fragments,
    })
}

/// Bilinear clamp-to-edge footprint of texture coordinate `uv`.
pub fn bilinear_footprint(uv: [f64; 2], tex_w: usize, tex_h: usize) -> ([usize; 4], [f64; 4]) {
    let x = uv[0] * tex_w as f64 - 0.5;
    let y = (1.0 - uv[1]) * tex_h as f64 - 0.5;
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let cx = |c: f64| c.clamp(0.0, (tex_w - 1) as f64) as usize;
    let cy = |r: f64| r.clamp(0.0, (tex_h - 1) as f64) as usize;
    let (c0, c1, rr0, rr1) = (cx(x0), cx(x0 + 1.0), cy(y0), cy(y0 + 1.0));
    (
        [rr0 * tex_w + c0, rr0 * tex_w + c1, rr1 * tex_w + c0, rr1 * tex_w + c1],
        [(1.0 - fy) * (1.0 - fx), (1.0 - fy) * fx, fy * (1.0 - fx), fy * fx],
    )
}

/// Colors the raster by sampling `texture`; uncovered pixels get `background`.
pub fn shade(raster: &Raster, mesh: &TriMesh, texture: &TextureImage, background: f64) -> RenderedView {
    let (tw, th) = (texture.width(), texture.height());
    let tex = texture.data();
    let n = raster.width * raster.height;
    let mut data = vec![background.clamp(0.0, 1.0); 3 * n];
    let mut depth = vec![f64::INFINITY; n];
    let mut footprint = vec![None; n];
    for (i, frag) in raster.fragments.iter().enumerate() {
        let Some(frag) = frag else { continue };
        let f = mesh.faces()[frag.face];
        let mut uv = [0.0; 2];
        for k in 0..3 {
            let t = mesh.uvs()[f[k]];
            uv[0] += frag.bary[k] * t[0];
            uv[1] += frag.bary[k] * t[1];
        }
        let (texels, weights) = bilinear_footprint(uv, tw, th);
        for ch in 0..3 {
            data[3 * i + ch] = (0..4).map(|k| weights[k] * tex[3 * texels[k] + ch]).sum::<f64>().clamp(0.0, 1.0);
        }
        depth[i] = frag.depth;
        footprint[i] = Some(Footprint {
            face: frag.face,
            bary: frag.bary,
            texels,
            weights,
        });
    }
    RenderedView {
        image: TextureImage::new(raster.width, raster.height, data).expect("convex combinations of [0, 1] values"),
        depth,
        footprint,
        texture_width: tw,
        texture_height: th,
    }
}

pub fn render(
    mesh: &TriMesh,
    texture: &TextureImage,
    proj: &Projection,
    size: (usize, usize),
    background: f64,
) -> Result<RenderedView> {
    let raster = rasterize(mesh, &proj.camera(mesh.centroid()), size.0, size.1)?;
    Ok(shade(&raster, mesh, texture, background))
}

/// Adjoint of [`shade`] with respect to the texture: scatters each pixel's
/// gradient into its footprint texels with the bilinear weights.
pub fn render_backward(view: &RenderedView, grad_image: &[f64]) -> Result<Vec<f64>> {
    if grad_image.len() != 3 * view.footprint.len() {
        return Err(Error::Shape(format!(
            "image gradient has {} values, view has {}",
            grad_image.len(),
            3 * view.footprint.len()
        )));
    }
    let mut grad = vec![0.0; 3 * view.texture_width * view.texture_height];
    for (i, fp) in view.footprint.iter().enumerate() {
        let Some(fp) = fp else { continue };
        for k in 0..4 {
            for ch in 0..3 {
                grad[3 * fp.texels[k] + ch] += fp.weights[k] * grad_image[3 * i + ch];
            }
        }
    }
    Ok(grad)
}

/// Uniform view angles in degrees: azimuth in `[-30, 30]`, elevation in `[-20, 20]`.
pub fn sample_view(rng: &mut Rng) -> (f64, f64) {
    sample_view_within(rng, MAX_AZIMUTH, MAX_ELEVATION)
}

/// Uniform view angles in `[-max_azimuth, max_azimuth] x [-max_elevation, max_elevation]`.
pub fn sample_view_within(rng: &mut Rng, max_azimuth: f64, max_elevation: f64) -> (f64, f64) {
    let az = rng.random_range(-max_azimuth..=max_azimuth);
    let el = rng.random_range(-max_elevation..=max_elevation);
    (az, el)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(size: f64) -> TriMesh {
        TriMesh::new(
            vec![[0.0, 0.0, 0.0], [size, 0.0, 0.0], [size, size, 0.0], [0.0, size, 0.0]],
            vec![[0, 1, 2], [0, 2, 3]],
            vec![[0.0, 1.0], [1.0, 1.0], [1.0, 0.0], [0.0, 0.0]],
            vec![],
        )
        .unwrap()
    }

    fn screen_camera() -> Projection {
        Projection::new([[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 0.0, 1.0]], 0.0, 0.0).unwrap()
    }

    #[test]
    fn screen_filling_quad_is_exactly_red() {
        let tex = TextureImage::filled(4, 4, [1.0, 0.0, 0.0]);
        let v = render(&quad(16.0), &tex, &screen_camera(), (16, 16), 0.5).unwrap();
        for r in 0..16 {
            for c in 0..16 {
                assert_eq!(v.image.pixel(r, c), [1.0, 0.0, 0.0]);
            }
        }
    }

    #[test]
    fn shared_edge_pixels_are_owned_once() {
        // Pixel centers on the diagonal of the quad lie exactly on the shared edge.
        let mesh = quad(8.0);
        let raster = rasterize(&mesh, &screen_camera().camera(mesh.centroid()), 8, 8).unwrap();
        assert_eq!(raster.covered(), 64);
        let t: Vec<[[f64; 2]; 3]> = mesh
            .faces()
            .iter()
            .map(|f| f.map(|i| [mesh.vertices()[i][0], mesh.vertices()[i][1]]))
            .collect();
        for r in 0..8 {
            for c in 0..8 {
                let p = [c as f64 + 0.5, r as f64 + 0.5];
                let hits = t.iter().filter(|tri| cover(**tri, p).is_some()).count();
                assert_eq!(hits, 1, "pixel ({r}, {c})");
            }
        }
    }

    #[test]
    fn texel_center_uv_reads_that_texel() {
        let (texels, weights) = bilinear_footprint([2.5 / 8.0, 1.0 - 5.5 / 8.0], 8, 8);
        assert_eq!(texels[0], 5 * 8 + 2);
        assert_eq!(weights[0], 1.0);
    }

    #[test]
    fn zero_image_gradient_gives_zero_texture_gradient() {
        let tex = TextureImage::filled(4, 4, [0.2, 0.4, 0.6]);
        let v = render(&quad(16.0), &tex, &screen_camera(), (16, 16), 0.5).unwrap();
        let g = render_backward(&v, &vec![0.0; 16 * 16 * 3]).unwrap();
        assert!(g.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn empty_mesh_is_an_error() {
        let m = TriMesh::new(vec![], vec![], vec![], vec![]).unwrap();
        let tex = TextureImage::filled(2, 2, [0.0; 3]);
        assert!(render(&m, &tex, &screen_camera(), (4, 4), 0.5).is_err());
    }
}
