//! Dense tensors, reverse-mode gradients, parameters and optimizers.

mod gradcheck;
mod graph;
mod optim;
mod params;
mod schedule;
mod tensor;

pub use gradcheck::{check_gradients, GradCheckOptions, ParamCheck};
pub use graph::{Gradients, Graph, Var};
pub use optim::{optimizer_step, DecayMode, OptimizerKind, OptimizerState};
pub use params::{Component, GradientVector, ParamGrads, ParamId, Parameter, ParameterSet};
pub use schedule::{lr_multiplier, LrSchedule, ScheduleConfig};
pub use tensor::Tensor;
