use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};

/// Student supervision.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    /// Classification of degraded faces only.
    C,
    /// Regression onto adapted teacher features only.
    S,
    /// Classification plus regression onto raw teacher features.
    Dc,
    /// Classification plus regression onto adapted teacher features.
    Sc,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::C, Mode::S, Mode::Dc, Mode::Sc];

    pub fn classifies(self) -> bool {
        self != Mode::S
    }

    pub fn regresses(self) -> bool {
        self != Mode::C
    }

    /// Whether the regression target passes through the adapter.
    pub fn adapted(self) -> bool {
        matches!(self, Mode::S | Mode::Sc)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::C => "c",
            Mode::S => "s",
            Mode::Dc => "dc",
            Mode::Sc => "sc",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "c" => Ok(Mode::C),
            "s" => Ok(Mode::S),
            "dc" => Ok(Mode::Dc),
            "sc" => Ok(Mode::Sc),
            _ => Err(invalid(format!("unknown mode {s:?}; expected c, s, dc or sc"))),
        }
    }
}

/// Which teacher supervises: none, either single teacher, or both.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TeacherSet {
    O,
    V,
    C,
    E,
}

impl TeacherSet {
    pub const ALL: [TeacherSet; 4] = [TeacherSet::O, TeacherSet::V, TeacherSet::C, TeacherSet::E];

    /// Indices into the (V, C) teacher pair.
    pub fn members(self) -> &'static [usize] {
        match self {
            TeacherSet::O => &[],
            TeacherSet::V => &[0],
            TeacherSet::C => &[1],
            TeacherSet::E => &[0, 1],
        }
    }
}

impl fmt::Display for TeacherSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TeacherSet::O => "O",
            TeacherSet::V => "V",
            TeacherSet::C => "C",
            TeacherSet::E => "E",
        })
    }
}

impl FromStr for TeacherSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "O" | "o" => Ok(TeacherSet::O),
            "V" | "v" => Ok(TeacherSet::V),
            "C" | "c" => Ok(TeacherSet::C),
            "E" | "e" => Ok(TeacherSet::E),
            _ => Err(invalid(format!("unknown teacher set {s:?}; expected O, V, C or E"))),
        }
    }
}

/// Plain minibatch SGD settings.
#[derive(Clone, Debug, PartialEq)]
pub struct SgdConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(invalid(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.batch_size < 2 {
            return Err(invalid("batch size must be at least 2 (batch norm needs two samples)"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistillConfig {
    /// Weight of the softened-target term when training the adapter.
    pub lambda: f64,
    pub temperature: f64,
    /// Divide the teacher's softmax output by the temperature instead of
    /// its logits.
    pub literal_temperature: bool,
    pub mode: Mode,
    pub teacher_set: TeacherSet,
    pub resolution: usize,
    /// Student learning rate.
    pub lr: f64,
    /// Learning rate of the fine-tuned teacher head and the adapter.
    pub adapter_lr: f64,
    pub batch_size: usize,
    pub epochs_adapter: usize,
    pub epochs_pretrain: usize,
    pub epochs_main: usize,
    pub seed: u64,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            temperature: 4.0,
            literal_temperature: false,
            mode: Mode::Sc,
            teacher_set: TeacherSet::V,
            resolution: 16,
            lr: 0.001,
            adapter_lr: 0.01,
            batch_size: 32,
            epochs_adapter: 30,
            epochs_pretrain: 5,
            epochs_main: 10,
            seed: 0,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(invalid(format!("temperature must be positive, got {}", self.temperature)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(invalid(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        if self.mode.regresses() && self.teacher_set == TeacherSet::O {
            return Err(invalid(format!("mode {} needs a teacher; teacher set O has none", self.mode)));
        }
        self.sgd(0, 0).validate()?;
        self.adapter_sgd(0, 0).validate()
    }

    pub fn sgd(&self, epochs: usize, salt: u64) -> SgdConfig {
        SgdConfig {
            lr: self.lr,
            epochs,
            batch_size: self.batch_size,
            seed: crate::datagen::derive_seed(self.seed, &[salt]),
        }
    }

    pub fn adapter_sgd(&self, epochs: usize, salt: u64) -> SgdConfig {
        SgdConfig { lr: self.adapter_lr, ..self.sgd(epochs, salt) }
    }

    /// Grid naming: `S-<p>-<mode>-<teacher>`.
    pub fn model_name(&self) -> String {
        format!("S-{}-{}-{}", self.resolution, self.mode, self.teacher_set)
    }
}
