//! Architecture description, variant builder and the codec itself.

pub mod arch;
pub mod codec;
pub mod signal;
pub mod variant;

pub use arch::{
    base_latent_hw, default_base_architecture, Activation, ArchitectureSpec, InputShape, LayerKind, LayerSpec,
};
pub use codec::{layer_parameter_shapes, parameter_layout, Bandwidth, CodecModel};
pub use signal::{
    complex_to_feature, denormalize_pixels, normalize_pixels, power_normalize, reshape_to_complex, squared_norm,
};
pub use variant::{build_variant, VariantId};
