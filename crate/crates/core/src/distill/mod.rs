//! Training stages: the adapter that moves teacher features onto the public
//! identities, and the low-resolution student trained against them.

mod adapter;
mod config;
mod fit;
mod report;
mod student;

pub use adapter::{
    adapter_objective, literal_soft_targets, make_soft_targets, train_adapter, AdapterConfig, Objective,
};
pub use config::{DistillConfig, Mode, SgdConfig, TeacherSet};
pub use fit::{accuracy, argmax_rows, count_hits, fit_classifier, run_epochs, sgd_update, StepStats};
pub use report::{EpochRecord, TrainReport};
pub use student::{pretrain_student, student_objective, train_student};
