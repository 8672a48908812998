//! Software rasterizer whose output is differentiable with respect to the
//! texture only.

pub mod raster;
pub mod texture;

pub use raster::{
    bilinear_footprint, cover, rasterize, render, render_backward, sample_view, sample_view_within, shade, Footprint, Fragment,
    Raster, RenderedView, DEFAULT_BACKGROUND, MAX_AZIMUTH, MAX_ELEVATION,
};
pub use texture::{contact_sheet, TextureImage};
