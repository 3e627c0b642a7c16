//! Prompt-to-scene compiler for spatial-relationship prompts.
//!
//! A prompt such as `"a cat to the left of a dog"` is parsed into relation
//! triples ([`prompt`]), solved into world coordinates ([`layout`]),
//! assembled into a renderable scene ([`scene`]) and ray-cast into an RGB
//! guidance image, a metric depth map and an object-ID mask ([`render`]).
//! The same ground truth drives edge maps and detection records
//! ([`guidance`]), yes/no spatial reasoning questions ([`revqa`]) and
//! VISOR-style spatial fidelity metrics ([`visor`]).

pub mod assets;
pub mod geom;
pub mod guidance;
pub mod imageio;
pub mod layout;
pub mod pipeline;
pub mod prompt;
pub mod render;
pub mod revqa;
pub mod rng;
pub mod scene;
pub mod visor;

pub use assets::{AssetCatalog, AssetError, AssetInstance, Mesh};
pub use layout::{JitterConfig, Layout, LayoutConfig};
pub use prompt::{Axis, Polarity, RelationKind, SpatialSpec, Triple};
pub use render::{FrameSet, RenderError};
pub use scene::SceneGraph;
