//! Deterministic synthetic face-analog data: procedural identities, the
//! private/public/target partition, low-resolution degradation and
//! verification pairs.

mod dataset;
mod degrade;
mod identity;
mod sample;
mod seed;
mod splits;

pub use dataset::{Dataset, DatasetConfig, Part, MANIFEST};
pub use degrade::{area_resample, degrade, gaussian_blur, upsample_bilinear, DegradeConfig};
pub use identity::{render_hr, synth_identities, IdentityParams, Wave, SEPARATION_MARGIN};
pub use sample::{stack_images, FaceSample, Lineage, Split};
pub use seed::derive_seed;
pub use splits::{disjoint, make_splits, verification_pairs, Pair, Splits};
