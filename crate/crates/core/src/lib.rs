//! Interactive 3D volumetric segmentation engine.

pub mod cli;
pub mod editor;
pub mod error;
pub mod evalsim;
pub mod filter;
pub mod inference;
pub mod labelspace;
pub mod morphology;
pub mod nifti;
pub mod prompts;
pub mod registry;
pub mod service;
pub mod supervoxel;
pub mod volume;

pub use error::{Error, Result};
