use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Private,
    Public,
    Target,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Private => "private",
            Split::Public => "public",
            Split::Target => "target",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "private" => Ok(Split::Private),
            "public" => Ok(Split::Public),
            "target" => Ok(Split::Target),
            _ => Err(invalid(format!("unknown split {s:?}"))),
        }
    }
}

/// Where a degraded sample came from.
#[derive(Clone, Debug, PartialEq)]
pub struct Lineage {
    /// Index of the source high-resolution sample within its identity.
    pub source: usize,
    /// Position within the degraded set of the source.
    pub copy: usize,
    pub jitter: (f64, f64),
    pub blur_sigma: f64,
    pub gain: f64,
}

impl fmt::Display for Lineage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "src={}:copy={}:dx={:.4}:dy={:.4}:blur={:.4}:gain={:.4}",
            self.source, self.copy, self.jitter.0, self.jitter.1, self.blur_sigma, self.gain
        )
    }
}

/// A grayscale `1×H×W` image in `[0, 1]` with its identity and split.
#[derive(Clone, Debug, PartialEq)]
pub struct FaceSample {
    pub image: Tensor<f32>,
    pub identity: usize,
    /// Sample index within its identity.
    pub index: usize,
    pub split: Split,
    pub resolution: usize,
    pub lineage: Option<Lineage>,
}

/// Stacks sample images into an `N×1×H×W` batch.
pub fn stack_images(samples: &[&FaceSample]) -> Result<Tensor<f32>> {
    let images: Vec<&Tensor<f32>> = samples.iter().map(|s| &s.image).collect();
    Tensor::stack(&images)
}
