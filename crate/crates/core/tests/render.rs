mod common;

use common::{coverage_oracle, rng, uniform};
use face_sculpt::assets::{toy_mesh, toy_texture};
use face_sculpt::autodiff::{numeric_gradient, relative_error};
use face_sculpt::mesh::{Projection, TriMesh};
use face_sculpt::render::{
    contact_sheet, cover, rasterize, render, render_backward, sample_view, sample_view_within, TextureImage, MAX_AZIMUTH,
    MAX_ELEVATION,
};
use proptest::prelude::*;
use rand::Rng as _;

/// Front orthographic camera; pixel `(s x + cx, cy - s y)`, nearer means larger z.
fn ortho(s: f64, cx: f64, cy: f64) -> Projection {
    Projection::orthographic(s, cx, cy)
}

fn oracle_screen(mesh: &TriMesh, s: f64, cx: f64, cy: f64) -> Vec<([f64; 2], f64)> {
    mesh.vertices().iter().map(|v| ([s * v[0] + cx, cy - s * v[1]], -v[2])).collect()
}

/// `n` independent triangles with random corners and depths.
fn triangle_soup(n: usize, extent: f64, seed: u64) -> TriMesh {
    let mut r = rng(seed);
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for t in 0..n {
        for _ in 0..3 {
            let p = uniform(&mut r, 2, -0.2 * extent, 1.2 * extent);
            vertices.push([p[0], p[1], r.random_range(-10.0..10.0)]);
        }
        faces.push([3 * t, 3 * t + 1, 3 * t + 2]);
    }
    let uvs = (0..vertices.len()).map(|_| [r.random_range(0.0..1.0), r.random_range(0.0..1.0)]).collect();
    TriMesh::new(vertices, faces, uvs, vec![]).unwrap()
}

fn check_coverage(mesh: &TriMesh, s: f64, cx: f64, cy: f64, w: usize, h: usize) {
    let raster = rasterize(mesh, &ortho(s, cx, cy).camera(mesh.centroid()), w, h).unwrap();
    let want = coverage_oracle(&oracle_screen(mesh, s, cx, cy), mesh.faces(), w, h);
    let got: Vec<Option<usize>> = raster.fragments.iter().map(|f| f.map(|f| f.face)).collect();
    assert_eq!(got, want);
    assert!(raster.covered() > 0);
}

#[test]
fn coverage_matches_brute_force_on_random_scenes() {
    check_coverage(&triangle_soup(12, 32.0, 1), 1.0, 0.0, 32.0, 32, 32);
    check_coverage(&triangle_soup(40, 24.0, 2), 1.0, 0.0, 24.0, 24, 24);
    check_coverage(&triangle_soup(3, 60.0, 3), 1.0, -10.0, 40.0, 32, 32);
    check_coverage(&triangle_soup(25, 17.0, 4), 1.3, 0.0, 22.0, 23, 19);
}

#[test]
fn coverage_matches_brute_force_on_the_toy_mesh() {
    // Offset center keeps grid vertices off pixel centers.
    check_coverage(&toy_mesh(), 0.31, 32.123457, 31.876543, 64, 64);
}

#[test]
fn nearer_surface_occludes() {
    let vertices = vec![
        [0.0, 0.0, 1.0],
        [20.0, 0.0, 1.0],
        [0.0, 20.0, 1.0],
        [0.0, 0.0, 5.0],
        [20.0, 0.0, 5.0],
        [0.0, 20.0, 5.0],
    ];
    let uvs = vec![[0.0, 0.0]; 3].into_iter().chain(vec![[1.0, 1.0]; 3]).collect();
    let mesh = TriMesh::new(vertices, vec![[0, 1, 2], [3, 4, 5]], uvs, vec![]).unwrap();
    let raster = rasterize(&mesh, &ortho(1.0, 0.0, 20.0).camera(mesh.centroid()), 20, 20).unwrap();
    assert!(raster.covered() > 0);
    assert!(raster.fragments.iter().flatten().all(|f| f.face == 1));
}

#[test]
fn shared_edges_cover_each_pixel_center_once() {
    // Corners on pixel centers put many centers exactly on edges.
    let q = [[2.5, 2.5], [10.5, 2.5], [10.5, 9.5], [2.5, 9.5]];
    for (a, b) in [([0, 1, 2], [0, 2, 3]), ([0, 1, 3], [1, 2, 3])] {
        for row in 0..12 {
            for col in 0..12 {
                let p = [col as f64 + 0.5, row as f64 + 0.5];
                let hits = [a, b].iter().filter(|f| cover(f.map(|i| q[i]), p).is_some()).count();
                let interior = p[0] > 2.5 && p[0] < 10.5 && p[1] > 2.5 && p[1] < 9.5;
                if interior {
                    assert_eq!(hits, 1, "pixel {p:?}");
                } else {
                    assert!(hits <= 1);
                }
            }
        }
    }
}

fn random_texture(w: usize, h: usize, seed: u64) -> TextureImage {
    TextureImage::new(w, h, uniform(&mut rng(seed), 3 * w * h, 0.05, 0.95)).unwrap()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[test]
fn backward_is_the_adjoint_of_shading() {
    let mesh = toy_mesh();
    let proj = face_sculpt::assets::toy_projection(48).with_view(12.0, -7.0);
    for seed in 0..4 {
        let tex = random_texture(20, 20, seed);
        let view = render(&mesh, &tex, &proj, (48, 48), 0.0).unwrap();
        let g = uniform(&mut rng(100 + seed), view.image.data().len(), -1.0, 1.0);
        let lhs = dot(view.image.data(), &g);
        let rhs = dot(tex.data(), &render_backward(&view, &g).unwrap());
        assert!((lhs - rhs).abs() < 1e-6 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
    }
}

#[test]
fn texture_gradient_matches_finite_differences() {
    let mesh = toy_mesh();
    let proj = face_sculpt::assets::toy_projection(16);
    let tex = random_texture(8, 8, 5);
    let view = render(&mesh, &tex, &proj, (16, 16), 0.5).unwrap();
    let w = uniform(&mut rng(6), view.image.data().len(), -1.0, 1.0);
    let analytic = render_backward(&view, &w).unwrap();
    let coords: Vec<usize> = (0..tex.data().len()).collect();
    let numeric = numeric_gradient(
        |t| {
            let img = render(&mesh, &TextureImage::new(8, 8, t.to_vec())?, &proj, (16, 16), 0.5)?;
            Ok(dot(img.image.data(), &w))
        },
        tex.data(),
        &coords,
        1e-4,
    )
    .unwrap();
    let err = relative_error(&analytic, &numeric);
    assert!(err < 1e-4, "relative error {err:e}");
}

#[test]
fn single_pixel_gradient_lands_on_its_footprint() {
    let mesh = toy_mesh();
    let tex = toy_texture(32);
    let view = render(&mesh, &tex, &face_sculpt::assets::toy_projection(32), (32, 32), 0.5).unwrap();
    let (i, fp) = view.footprint.iter().enumerate().find_map(|(i, f)| f.map(|f| (i, f))).unwrap();
    let mut g = vec![0.0; view.image.data().len()];
    g[3 * i + 1] = 1.0;
    let back = render_backward(&view, &g).unwrap();
    let total: f64 = back.iter().sum();
    assert!((total - 1.0).abs() < 1e-12);
    for (k, v) in back.iter().enumerate() {
        if *v != 0.0 {
            assert_eq!(k % 3, 1);
            assert!(fp.texels.contains(&(k / 3)));
        }
    }
}

#[test]
fn background_fills_uncovered_pixels() {
    let mesh = toy_mesh();
    let view = render(&mesh, &toy_texture(16), &face_sculpt::assets::toy_projection(32), (32, 32), 0.25).unwrap();
    for (i, fp) in view.footprint.iter().enumerate() {
        if fp.is_none() {
            assert_eq!(&view.image.data()[3 * i..3 * i + 3], &[0.25; 3]);
            assert_eq!(view.depth[i], f64::INFINITY);
        }
    }
}

#[test]
fn rendering_is_deterministic() {
    let mesh = toy_mesh();
    let proj = face_sculpt::assets::toy_projection(64).with_view(-22.0, 13.0);
    let a = render(&mesh, &toy_texture(64), &proj, (64, 64), 0.5).unwrap();
    let b = render(&mesh, &toy_texture(64), &proj, (64, 64), 0.5).unwrap();
    assert_eq!(a, b);
}

#[test]
fn sampled_views_are_bounded_seeded_and_centered() {
    let mut r = rng(7);
    let n = 10_000;
    let views: Vec<(f64, f64)> = (0..n).map(|_| sample_view(&mut r)).collect();
    assert!(views.iter().all(|(a, e)| a.abs() <= MAX_AZIMUTH && e.abs() <= MAX_ELEVATION));
    let mean_a = views.iter().map(|v| v.0).sum::<f64>() / n as f64;
    let mean_e = views.iter().map(|v| v.1).sum::<f64>() / n as f64;
    // Uniform on [-m, m] has standard deviation m / sqrt(3).
    let sigma = |m: f64| m / 3f64.sqrt() / (n as f64).sqrt();
    assert!(mean_a.abs() < 3.0 * sigma(MAX_AZIMUTH));
    assert!(mean_e.abs() < 3.0 * sigma(MAX_ELEVATION));
    let again: Vec<(f64, f64)> = {
        let mut r = rng(7);
        (0..n).map(|_| sample_view(&mut r)).collect()
    };
    assert_eq!(views, again);
    assert_eq!(sample_view_within(&mut rng(8), 0.0, 0.0), (0.0, 0.0));
}

#[test]
fn png_round_trip_stays_within_half_a_level() {
    let tex = random_texture(9, 7, 9);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.png");
    tex.save_png(&path).unwrap();
    let back = TextureImage::load_png(&path).unwrap();
    assert_eq!((back.width(), back.height()), (9, 7));
    assert!(common::max_abs_diff(back.data(), tex.data()) <= 0.5 / 255.0 + 1e-12);
}

#[test]
fn contact_sheet_tiles_in_order() {
    let imgs: Vec<TextureImage> = (0..5).map(|k| TextureImage::filled(4, 3, [k as f64 / 5.0; 3])).collect();
    let sheet = contact_sheet(&imgs, 3).unwrap();
    assert_eq!((sheet.width(), sheet.height()), (12, 6));
    assert_eq!(sheet.pixel(0, 5), [0.2; 3]);
    assert_eq!(sheet.pixel(4, 5), [0.8; 3]);
    assert_eq!(sheet.pixel(4, 9), [1.0; 3]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn barycentrics_reconstruct_the_pixel_center(seed in 0u64..10_000) {
        let mesh = triangle_soup(6, 16.0, seed);
        let raster = rasterize(&mesh, &ortho(1.0, 0.0, 16.0).camera(mesh.centroid()), 16, 16).unwrap();
        let screen = oracle_screen(&mesh, 1.0, 0.0, 16.0);
        for (i, f) in raster.fragments.iter().enumerate() {
            let Some(f) = f else { continue };
            let face = mesh.faces()[f.face];
            prop_assert!((f.bary.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(f.bary.iter().all(|b| *b >= -1e-12));
            let p: Vec<f64> = (0..2).map(|c| (0..3).map(|k| f.bary[k] * screen[face[k]].0[c]).sum()).collect();
            prop_assert!((p[0] - ((i % 16) as f64 + 0.5)).abs() < 1e-9);
            prop_assert!((p[1] - ((i / 16) as f64 + 0.5)).abs() < 1e-9);
        }
    }
}
