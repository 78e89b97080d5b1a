//! Model definitions: a declarative layer spec, the network interpreter
//! built from it, the concrete student, adapter and teacher architectures,
//! and binary checkpoints.

mod arch;
pub mod checkpoint;
mod network;
mod spec;
mod teacher;

pub use arch::{
    adapter_spec, build_adapter, build_head, build_student, build_student_with_mimic, build_toy_teacher, head_spec,
    student_spec, teacher_spec, ADAPTER_HIDDEN, DEFAULT_FEATURE_DIM, DEFAULT_HR, MIMIC_DIM, STUDENT_RESOLUTIONS,
};
pub use network::{Forward, Network};
pub use spec::{InputKind, LayerKind, LayerSpec, ModelSpec};
pub use teacher::{ensemble_features, finetune_head, FineTuned, TeacherHandle};
