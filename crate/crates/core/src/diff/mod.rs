//! Hand-written reverse-mode differentiation for the trainable models.
//!
//! Every model implements [`Differentiable`]: a forward pass that can retain
//! the intermediates it needs, and a backward pass that turns an output
//! gradient into parameter gradients plus the gradient with respect to the
//! input. There is no general tape; each model owns its own exact reverse pass.

mod adam;
mod check;
mod layers;
mod params;

pub use adam::{adam_step, AdamConfig, OptimizerState};
pub use check::{finite_diff_check, GradCheckReport, DEFAULT_FD_EPS};
pub use layers::{affine, affine_backward, Activation, Dense};
pub use params::{Grads, ParamId, ParamSet, ParamTensor};

use crate::error::{Error, Result};
use crate::numerics::RealMatrix;

/// Output of a forward pass, optionally carrying what backward needs.
#[derive(Debug, Clone)]
pub struct Forward<T> {
    pub output: RealMatrix,
    tape: Option<T>,
}

impl<T> Forward<T> {
    pub fn new(output: RealMatrix, tape: Option<T>) -> Self {
        Self { output, tape }
    }

    pub fn tape(&self) -> Result<&T> {
        self.tape
            .as_ref()
            .ok_or_else(|| Error::ContractViolation("backward called on a forward pass run without retention".into()))
    }

    pub fn has_tape(&self) -> bool {
        self.tape.is_some()
    }

    pub fn map_tape<U>(self, f: impl FnOnce(T) -> U) -> Forward<U> {
        Forward {
            output: self.output,
            tape: self.tape.map(f),
        }
    }
}

pub trait Differentiable {
    type Tape;

    fn params(&self) -> &ParamSet;
    fn params_mut(&mut self) -> &mut ParamSet;

    fn forward(&self, input: &RealMatrix, retain: bool) -> Result<Forward<Self::Tape>>;

    /// Adds parameter gradients into `grads` and returns the input gradient.
    fn backward(&self, fwd: &Forward<Self::Tape>, output_grad: &RealMatrix, grads: &mut Grads) -> Result<RealMatrix>;

    /// Runs [`Differentiable::backward`] and accumulates the result into the
    /// gradient buffers of the model's own parameters.
    fn backward_into_params(&mut self, fwd: &Forward<Self::Tape>, output_grad: &RealMatrix) -> Result<RealMatrix> {
        let mut grads = self.params().zero_grads();
        let dx = self.backward(fwd, output_grad, &mut grads)?;
        self.params_mut().accumulate(&grads, 1.0);
        Ok(dx)
    }
}
