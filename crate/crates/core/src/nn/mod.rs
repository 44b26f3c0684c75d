//! Small dense networks with sigmoid hidden layers, reverse-mode gradients
//! and Adam.

mod adam;
mod network;
mod step;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use network::{gradient_check, parameter_count, random_gradient_check, sigmoid, Activations, Dense, Network};
pub use step::{hidden_width, step_inputs, FeatureScaling, StepNetworks};
