//! Procedural stand-ins for real data: a parametric 68-point face, normal and
//! exaggerated landmark corpora, a face-like height-field mesh, and simple
//! content and style images.

use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::landmarks::{LandmarkSet, NUM_LANDMARKS};
use crate::mesh::{Projection, TriMesh};
use crate::render::TextureImage;
use crate::seed::{rng_for, Rng};

/// Side of the canvas the template face is laid out on, in pixels.
pub const CANVAS: f64 = 256.0;

/// Number of exaggeration modes in the synthetic art corpus.
pub const ART_MODES: usize = 2;

/// Multiplicative shape controls; all equal to 1 for the template face.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FaceShape {
    pub face_width: f64,
    pub jaw_length: f64,
    pub eye_scale: f64,
    pub eye_spacing: f64,
    pub mouth_width: f64,
    pub nose_length: f64,
    pub brow_height: f64,
}

impl Default for FaceShape {
    fn default() -> Self {
        Self {
            face_width: 1.0,
            jaw_length: 1.0,
            eye_scale: 1.0,
            eye_spacing: 1.0,
            mouth_width: 1.0,
            nose_length: 1.0,
            brow_height: 1.0,
        }
    }
}

impl FaceShape {
    /// Landmarks in iBUG order on the pixel canvas, image y pointing down.
    pub fn points(&self) -> Vec<[f64; 2]> {
        let (cx, cy) = (CANVAS / 2.0, CANVAS / 2.0);
        let mut p = Vec::with_capacity(NUM_LANDMARKS);
        // Jaw: left temple, around the chin, to the right temple.
        let (rx, ry) = (62.0 * self.face_width, 72.0 * self.jaw_length);
        for i in 0..17 {
            let a = (190.0 - 200.0 * i as f64 / 16.0).to_radians();
            let y = if a.sin() > 0.0 { ry * a.sin() } else { 62.0 * a.sin() };
            p.push([cx + rx * a.cos(), cy - 8.0 + y]);
        }
        let eye_dx = 26.0 * self.eye_spacing;
        let brow_y = cy - 20.0 - 18.0 * self.brow_height;
        for side in [-1.0, 1.0] {
            for i in 0..5 {
                let t = i as f64 / 4.0;
                let x = cx + side * eye_dx + (t - 0.5) * 44.0;
                p.push([x, brow_y - 6.0 * (PI * t).sin()]);
            }
        }
        let nose_len = 28.0 * self.nose_length;
        for i in 0..4 {
            p.push([cx, cy - 20.0 + nose_len * i as f64 / 3.0]);
        }
        let nostril_y = cy - 20.0 + nose_len + 7.0;
        for i in 0..5 {
            let t = i as f64 / 4.0 - 0.5;
            p.push([cx + 24.0 * t, nostril_y + 3.0 * (1.0 - 4.0 * t * t)]);
        }
        let (ew, eh) = (12.0 * self.eye_scale, 5.0 * self.eye_scale);
        for side in [-1.0, 1.0] {
            for k in 0..6 {
                let a = PI - k as f64 * PI / 3.0;
                p.push([cx + side * eye_dx + ew * a.cos(), cy - 20.0 - eh * a.sin()]);
            }
        }
        let my = cy + 38.0;
        for (n, hw, hh) in [(12, 22.0, 9.0), (8, 14.0, 4.0)] {
            for k in 0..n {
                let a = PI - k as f64 * 2.0 * PI / n as f64;
                p.push([cx + hw * self.mouth_width * a.cos(), my - hh * a.sin()]);
            }
        }
        debug_assert_eq!(p.len(), NUM_LANDMARKS);
        p
    }

    pub fn landmarks(&self) -> LandmarkSet {
        LandmarkSet::new(&self.points()).expect("template geometry is finite")
    }
}

/// The unperturbed template face.
pub fn face_template() -> LandmarkSet {
    FaceShape::default().landmarks()
}

fn jitter(shape: FaceShape, sd: f64, rng: &mut Rng) -> FaceShape {
    let n = Normal::new(1.0, sd).expect("positive sd");
    FaceShape {
        face_width: shape.face_width * n.sample(rng),
        jaw_length: shape.jaw_length * n.sample(rng),
        eye_scale: shape.eye_scale * n.sample(rng),
        eye_spacing: shape.eye_spacing * n.sample(rng),
        mouth_width: shape.mouth_width * n.sample(rng),
        nose_length: shape.nose_length * n.sample(rng),
        brow_height: shape.brow_height * n.sample(rng),
    }
}

/// Random similarity placement plus per-point noise, mimicking detector output.
fn place(points: &[[f64; 2]], rng: &mut Rng) -> LandmarkSet {
    let scale = rng.random_range(0.85..1.15);
    let rot = rng.random_range(-8.0_f64..8.0).to_radians();
    let (tx, ty) = (rng.random_range(-12.0..12.0), rng.random_range(-12.0..12.0));
    let noise = Normal::new(0.0, 0.6).expect("positive sd");
    let (s, c) = rot.sin_cos();
    let mid = CANVAS / 2.0;
    let out: Vec<[f64; 2]> = points
        .iter()
        .map(|p| {
            let (x, y) = (p[0] - mid, p[1] - mid);
            [
                mid + tx + scale * (c * x - s * y) + noise.sample(rng),
                mid + ty + scale * (s * x + c * y) + noise.sample(rng),
            ]
        })
        .collect();
    LandmarkSet::new(&out).expect("finite")
}

pub fn normal_face(rng: &mut Rng) -> LandmarkSet {
    place(&jitter(FaceShape::default(), 0.05, rng).points(), rng)
}

/// Shape of exaggeration mode `mode` before jitter.
pub fn art_mode(mode: usize) -> FaceShape {
    match mode % ART_MODES {
        0 => FaceShape {
            face_width: 1.1,
            jaw_length: 0.75,
            eye_scale: 1.8,
            mouth_width: 0.7,
            ..FaceShape::default()
        },
        _ => FaceShape {
            face_width: 0.85,
            jaw_length: 1.5,
            eye_scale: 0.8,
            mouth_width: 1.5,
            nose_length: 1.4,
            ..FaceShape::default()
        },
    }
}

pub fn art_face(mode: usize, rng: &mut Rng) -> LandmarkSet {
    place(&jitter(art_mode(mode), 0.05, rng).points(), rng)
}

pub fn normal_corpus(n: usize, seed: u64) -> Vec<LandmarkSet> {
    let mut rng = rng_for(seed, "normal-corpus");
    (0..n).map(|_| normal_face(&mut rng)).collect()
}

/// Art faces with their generating mode; modes alternate.
pub fn art_corpus(n: usize, seed: u64) -> Vec<(LandmarkSet, usize)> {
    let mut rng = rng_for(seed, "art-corpus");
    (0..n)
        .map(|i| {
            let mode = i % ART_MODES;
            (art_face(mode, &mut rng), mode)
        })
        .collect()
}

/// Half extents of the toy mesh in model units.
pub const TOY_RX: f64 = 80.0;
pub const TOY_RY: f64 = 100.0;
const TOY_SPACING: f64 = 7.0;

fn toy_height(x: f64, y: f64) -> f64 {
    let r = 1.0 - (x / (1.05 * TOY_RX)).powi(2) - (y / (1.05 * TOY_RY)).powi(2);
    45.0 * r.max(0.0).sqrt() + 12.0 * (-(x * x + (y + 5.0).powi(2)) / 200.0).exp()
}

/// Face-like height field over an ellipse, triangulated on a square grid, with
/// landmark vertices chosen nearest to the template landmarks.
pub fn toy_mesh() -> TriMesh {
    let nx = (2.0 * TOY_RX / TOY_SPACING).floor() as i64;
    let ny = (2.0 * TOY_RY / TOY_SPACING).floor() as i64;
    let inside = |i: i64, j: i64| {
        let x = -TOY_RX + i as f64 * TOY_SPACING;
        let y = -TOY_RY + j as f64 * TOY_SPACING;
        (x / TOY_RX).powi(2) + (y / TOY_RY).powi(2) <= 1.0
    };
    let mut id = std::collections::HashMap::new();
    let mut vertices = Vec::new();
    let mut uvs = Vec::new();
    let mut faces = Vec::new();
    let mut vid = |i: i64, j: i64, vertices: &mut Vec<[f64; 3]>, uvs: &mut Vec<[f64; 2]>| -> usize {
        *id.entry((i, j)).or_insert_with(|| {
            let x = -TOY_RX + i as f64 * TOY_SPACING;
            let y = -TOY_RY + j as f64 * TOY_SPACING;
            vertices.push([x, y, toy_height(x, y)]);
            uvs.push([
                ((x + TOY_RX) / (2.0 * TOY_RX)).clamp(0.0, 1.0),
                ((y + TOY_RY) / (2.0 * TOY_RY)).clamp(0.0, 1.0),
            ]);
            vertices.len() - 1
        })
    };
    for j in 0..ny {
        for i in 0..nx {
            if !(inside(i, j) && inside(i + 1, j) && inside(i, j + 1) && inside(i + 1, j + 1)) {
                continue;
            }
            let a = vid(i, j, &mut vertices, &mut uvs);
            let b = vid(i + 1, j, &mut vertices, &mut uvs);
            let c = vid(i + 1, j + 1, &mut vertices, &mut uvs);
            let d = vid(i, j + 1, &mut vertices, &mut uvs);
            // Counter-clockwise seen from +z.
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    let mut taken = vec![false; vertices.len()];
    let ids: Vec<usize> = face_template()
        .points()
        .iter()
        .map(|p| {
            let (x, y) = (p[0] - CANVAS / 2.0, CANVAS / 2.0 - p[1]);
            let best = (0..vertices.len())
                .filter(|&k| !taken[k])
                .min_by(|&a, &b| {
                    let da = (vertices[a][0] - x).powi(2) + (vertices[a][1] - y).powi(2);
                    let db = (vertices[b][0] - x).powi(2) + (vertices[b][1] - y).powi(2);
                    da.total_cmp(&db)
                })
                .expect("mesh has more vertices than landmarks");
            taken[best] = true;
            best
        })
        .collect();
    TriMesh::new(vertices, faces, uvs, ids).expect("toy mesh is valid")
}

/// Orthographic front view of the toy mesh filling an `image_size` square.
pub fn toy_projection(image_size: usize) -> Projection {
    let s = image_size as f64 / CANVAS;
    Projection::orthographic(s, image_size as f64 / 2.0, image_size as f64 / 2.0)
}

fn smoothstep(e0: f64, e1: f64, x: f64) -> f64 {
    let t = ((x - e0) / (e1 - e0)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Skin-toned texture with darker eyes and brows and a red mouth, laid out in
/// the toy mesh's uv space.
pub fn toy_texture(size: usize) -> TextureImage {
    let tpl = face_template();
    let to_uv = |p: [f64; 2]| {
        let (x, y) = (p[0] - CANVAS / 2.0, CANVAS / 2.0 - p[1]);
        [(x + TOY_RX) / (2.0 * TOY_RX), (y + TOY_RY) / (2.0 * TOY_RY)]
    };
    let blob = |c: [f64; 2], r: [f64; 2], u: f64, v: f64| {
        let d = ((u - c[0]) / r[0]).powi(2) + ((v - c[1]) / r[1]).powi(2);
        1.0 - smoothstep(0.6, 1.0, d)
    };
    let a = tpl.anchors().map(to_uv);
    let brows = [to_uv(tpl.point(19)), to_uv(tpl.point(24))];
    TextureImage::from_fn(size, size, |row, col| {
        let u = (col as f64 + 0.5) / size as f64;
        let v = 1.0 - (row as f64 + 0.5) / size as f64;
        let shade = 0.9 - 0.25 * ((u - 0.5).powi(2) + (v - 0.5).powi(2));
        let mut c = [0.93 * shade, 0.76 * shade, 0.64 * shade];
        let stripe = 0.03 * (40.0 * u).sin() * (30.0 * v).cos();
        for ch in &mut c {
            *ch += stripe;
        }
        let mix = |c: &mut [f64; 3], w: f64, target: [f64; 3]| {
            for k in 0..3 {
                c[k] = c[k] * (1.0 - w) + target[k] * w;
            }
        };
        for e in &a[..2] {
            mix(&mut c, blob(*e, [0.09, 0.03], u, v), [0.2, 0.15, 0.12]);
        }
        for b in &brows {
            mix(&mut c, blob([b[0], b[1] + 0.01], [0.14, 0.02], u, v), [0.35, 0.22, 0.12]);
        }
        mix(&mut c, blob(a[2], [0.14, 0.045], u, v), [0.75, 0.2, 0.22]);
        c.map(|x| x.clamp(0.0, 1.0))
    })
}

/// Painterly exemplar: diagonal strokes in a saturated blue and orange palette.
pub fn style_image(size: usize) -> TextureImage {
    TextureImage::from_fn(size, size, |row, col| {
        let (x, y) = (col as f64 / size as f64, row as f64 / size as f64);
        let stroke = (18.0 * (x + 0.6 * y) + 2.0 * (9.0 * y).sin()).sin();
        let band = (7.0 * (x - y)).cos();
        let t = 0.5 + 0.5 * stroke;
        let warm = [0.95, 0.55, 0.15];
        let cool = [0.1, 0.25, 0.7];
        let mut c = [0.0; 3];
        for k in 0..3 {
            c[k] = cool[k] * (1.0 - t) + warm[k] * t;
        }
        if band > 0.8 {
            c = [0.05, 0.05, 0.08];
        }
        c.map(|v| v.clamp(0.0, 1.0))
    })
}
