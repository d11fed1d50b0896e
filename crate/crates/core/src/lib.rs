//! Single-shot monocular depth estimation workbench for endoscope-like
//! scenes.
//!
//! Procedural hollow-organ scenes are rendered in two domains (pure diffuse
//! and textured/specular) with exact depth. A translator maps the textured
//! domain to the diffuse one, a depth network trained with a multi-scale
//! edge loss estimates depth, and an affine correction maps estimates to
//! metric depth. A classical shape-from-shading solver grounds the diffuse
//! shading model.

pub mod error;
pub mod eval;
pub mod exec;
pub mod geom;
pub mod imgio;
pub mod losses;
pub mod nets;
pub mod render;
pub mod scenegen;
pub mod sfs;

pub use error::{Error, Result};
pub use exec::Exec;
