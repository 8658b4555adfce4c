//! Visibility (non-differentiable z-buffer), differentiable bilinear texture
//! sampling, and the flat renderer used to synthesize ground truth.

mod image;
mod raster;
mod texture;

pub use image::{Image, Mask};
pub use raster::{depth_epsilon, rasterize, render_silhouette, RasterBuffers};
pub use texture::{
    extract_texture, render_image, sample_bilinear, sample_bilinear_with_grad, sampling_mask,
    texel_visibility, TextureMap,
};

pub(crate) use raster::ScreenMesh;
pub(crate) use texture::sampling_mask_screen;
