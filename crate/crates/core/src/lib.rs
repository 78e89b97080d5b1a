//! Bridge distillation for low-resolution recognition of synthetic face
//! analogs.
//!
//! A large teacher is trained on a private high-resolution split, adapted to a
//! public split with a small adapter trained on classification plus softened
//! teacher targets, and then distilled into a tiny low-resolution student that
//! jointly classifies degraded faces and regresses the adapted features.

pub mod autodiff;
pub mod bench;
pub mod cli;
pub mod datagen;
pub mod distill;
pub mod error;
pub mod eval;
pub mod pipeline;
pub mod tensor;
pub mod zoo;

pub use error::{Error, Result};
pub use tensor::{DType, Element, Tensor};
