use super::network::Network;
use super::spec::{InputKind, LayerSpec, ModelSpec};
use crate::error::{invalid, Result};

/// Input resolutions the student accepts.
pub const STUDENT_RESOLUTIONS: [usize; 4] = [96, 64, 32, 16];
/// Width of the student's mimicking layer and of the adapter output.
pub const MIMIC_DIM: usize = 128;
pub const ADAPTER_HIDDEN: usize = 512;
pub const DEFAULT_FEATURE_DIM: usize = 256;
pub const DEFAULT_HR: usize = 64;

/// Ten convolutions alternating 3×3 and 1×1 with batch norm, three max pools,
/// two residual skips, global average pooling, a hidden projection, the
/// mimicking projection and the identity head.
pub fn student_spec(p: usize, classes: usize, mimic_dim: usize) -> Result<ModelSpec> {
    if !STUDENT_RESOLUTIONS.contains(&p) {
        return Err(invalid(format!("student resolution {p} not in {STUDENT_RESOLUTIONS:?}")));
    }
    if classes == 0 || mimic_dim == 0 {
        return Err(invalid("student needs at least one class and a non-empty mimic layer"));
    }
    let layers = vec![
        LayerSpec::conv("conv1", 16, 3),
        LayerSpec::pool(),
        LayerSpec::conv("conv2", 24, 1),
        LayerSpec::conv("conv3", 24, 3),
        LayerSpec::conv("conv4", 24, 1).with_skip(2),
        LayerSpec::pool(),
        LayerSpec::conv("conv5", 48, 3),
        LayerSpec::conv("conv6", 48, 1),
        LayerSpec::conv("conv7", 48, 3).with_skip(6),
        LayerSpec::pool(),
        LayerSpec::conv("conv8", 96, 1),
        LayerSpec::conv("conv9", 96, 3),
        LayerSpec::conv("conv10", 128, 1),
        LayerSpec::gap(),
        LayerSpec::linear("fc1", 256, true),
        LayerSpec::linear("mimic", mimic_dim, false),
        LayerSpec::linear("identity", classes, false),
    ];
    let spec = ModelSpec {
        prefix: "student".into(),
        input: InputKind::Image { channels: 1 },
        feature_layer: layers.len() - 2,
        layers,
        default_resolution: p,
    };
    spec.shapes(p)?;
    Ok(spec)
}

pub fn build_student(p: usize, classes: usize, seed: u64) -> Result<Network<f32>> {
    Network::new(student_spec(p, classes, MIMIC_DIM)?, seed)
}

/// Student whose mimicking layer regresses `mimic_dim`-wide targets.
pub fn build_student_with_mimic(p: usize, classes: usize, mimic_dim: usize, seed: u64) -> Result<Network<f32>> {
    Network::new(student_spec(p, classes, mimic_dim)?, seed)
}

/// Two fully connected layers reducing teacher features to the mimic width,
/// followed by a classifier used only while the adapter trains.
pub fn adapter_spec(d_in: usize, classes: usize) -> Result<ModelSpec> {
    if d_in == 0 || classes == 0 {
        return Err(invalid("adapter needs a non-empty input and at least one class"));
    }
    Ok(ModelSpec {
        prefix: "adapter".into(),
        input: InputKind::Vector { dim: d_in },
        layers: vec![
            LayerSpec::linear("fc1", ADAPTER_HIDDEN, true),
            LayerSpec::linear("fc2", MIMIC_DIM, false),
            LayerSpec::linear("head", classes, false),
        ],
        feature_layer: 1,
        default_resolution: 0,
    })
}

pub fn build_adapter(d_in: usize, classes: usize, seed: u64) -> Result<Network<f32>> {
    Network::new(adapter_spec(d_in, classes)?, seed)
}

/// A single linear classifier over fixed features.
pub fn head_spec(prefix: &str, d_in: usize, classes: usize) -> Result<ModelSpec> {
    if d_in == 0 || classes == 0 {
        return Err(invalid("head needs a non-empty input and at least one class"));
    }
    Ok(ModelSpec {
        prefix: prefix.into(),
        input: InputKind::Vector { dim: d_in },
        layers: vec![LayerSpec::linear("fc", classes, false)],
        feature_layer: 0,
        default_resolution: 0,
    })
}

pub fn build_head(prefix: &str, d_in: usize, classes: usize, seed: u64) -> Result<Network<f32>> {
    Network::new(head_spec(prefix, d_in, classes)?, seed)
}

/// Over-parameterized high-resolution CNN: four conv + pool stages, a wide
/// hidden layer, the feature layer and a classifier over the training
/// identities. `scale` multiplies the conv widths.
pub fn teacher_spec(classes: usize, feature_dim: usize, hr: usize, scale: f64) -> Result<ModelSpec> {
    if classes == 0 || feature_dim == 0 {
        return Err(invalid("teacher needs at least one class and a non-empty feature layer"));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(invalid(format!("teacher width scale must be positive, got {scale}")));
    }
    if hr == 0 || !hr.is_multiple_of(16) {
        return Err(invalid(format!("teacher input size {hr} must be a positive multiple of 16")));
    }
    let w = |c: f64| ((c * scale).round() as usize).max(1);
    let layers = vec![
        LayerSpec::conv("conv1", w(24.0), 3),
        LayerSpec::pool(),
        LayerSpec::conv("conv2", w(48.0), 3),
        LayerSpec::pool(),
        LayerSpec::conv("conv3", w(96.0), 3),
        LayerSpec::pool(),
        LayerSpec::conv("conv4", w(128.0), 3),
        LayerSpec::pool(),
        LayerSpec::flatten(),
        LayerSpec::linear("fc1", 2048, true),
        LayerSpec::linear("features", feature_dim, false),
        LayerSpec::linear("softmax", classes, false),
    ];
    let spec = ModelSpec {
        prefix: "teacher".into(),
        input: InputKind::Image { channels: 1 },
        feature_layer: layers.len() - 2,
        layers,
        default_resolution: hr,
    };
    spec.shapes(hr)?;
    Ok(spec)
}

pub fn build_toy_teacher(classes: usize, feature_dim: usize, seed: u64) -> Result<Network<f32>> {
    Network::new(teacher_spec(classes, feature_dim, DEFAULT_HR, 1.0)?, seed)
}
