//! Backward, step-by-step training of `(U_i, Z_i, Z̃_i)` from `t_{N-1}` down to
//! `t_0`, with the European linear driver, the American penalty driver, or
//! the linear driver plus reflection at the exercise value.

mod driver;
mod polish;
mod scheme;
mod train;

pub use driver::{driver_eval, step_target, DriverKind, DriverSpec};
pub use scheme::{
    solve, solve_american_penalty, solve_american_reflect, solve_european, solve_with_sampler,
    RunResult, Scheme, SolveResult,
};
pub use train::{
    train_step, NextStepValue, PathSource, Polish, Sampling, SchemeConfig, StepReport, TargetEvaluator,
    TerminalPayoff,
};
