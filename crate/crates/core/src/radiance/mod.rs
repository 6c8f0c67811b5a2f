//! Radiance modeling: positional encoding, the per-intersection MLP
//! (opacity from features only, color from features plus the view factor),
//! front-to-back compositing, hierarchy blending, and whole-image
//! rendering.

mod compositing;
mod encoding;
mod mlp;
mod render;

pub use compositing::{
    blend_hierarchies, blend_vals, composite, composite_vals, RadianceError,
};
pub use encoding::{encoded_len, positional_encode_vec};
pub use mlp::{MlpPreset, RadianceMlp};
pub use render::{render_image, RenderOutput};
