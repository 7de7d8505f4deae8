use ndarray::{Array2, Axis};

use super::{Differentiable, Forward, Grads, ParamId, ParamSet};
use crate::error::{Error, Result};
use crate::numerics::{glorot_uniform, sigmoid, RealMatrix, RngStream};

/// `x·w + b` with `b` a `1 x m` row broadcast over the rows of `x`.
pub fn affine(x: &RealMatrix, w: &RealMatrix, b: &RealMatrix) -> RealMatrix {
    let mut y = x.dot(w);
    y += b;
    y
}

/// Reverse of [`affine`]: accumulates `dw`, `db` and returns `dx`.
pub fn affine_backward(
    x: &RealMatrix,
    w: &RealMatrix,
    dy: &RealMatrix,
    grads: &mut Grads,
    w_id: ParamId,
    b_id: ParamId,
) -> RealMatrix {
    *grads.get_mut(w_id) += &x.t().dot(dy);
    *grads.get_mut(b_id) += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
    dy.dot(&w.t())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Sigmoid,
    Tanh,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Identity => v,
            Activation::Sigmoid => sigmoid(v),
            Activation::Tanh => v.tanh(),
        }
    }

    /// Derivative expressed through the activation output `y`.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

/// Single fully connected layer `act(x·w + b)` over a batch of rows.
#[derive(Debug, Clone)]
pub struct Dense {
    params: ParamSet,
    w: ParamId,
    b: ParamId,
    activation: Activation,
}

impl Dense {
    pub fn new(inputs: usize, outputs: usize, activation: Activation, rng: &mut RngStream) -> Self {
        let mut params = ParamSet::new();
        let w = params
            .add("dense.w", glorot_uniform(inputs, outputs, inputs, outputs, rng))
            .expect("fresh set");
        let b = params.add("dense.b", Array2::zeros((1, outputs))).expect("fresh set");
        Self {
            params,
            w,
            b,
            activation,
        }
    }

    pub fn weight_id(&self) -> ParamId {
        self.w
    }

    pub fn bias_id(&self) -> ParamId {
        self.b
    }
}

impl Differentiable for Dense {
    type Tape = RealMatrix;

    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn forward(&self, input: &RealMatrix, retain: bool) -> Result<Forward<RealMatrix>> {
        let w = self.params.get(self.w);
        if input.ncols() != w.nrows() {
            return Err(Error::InvalidDimension(format!(
                "dense layer expects {} input columns, got {}",
                w.nrows(),
                input.ncols()
            )));
        }
        let act = self.activation;
        let y = affine(input, w, self.params.get(self.b)).mapv(|v| act.apply(v));
        Ok(Forward::new(y, retain.then(|| input.clone())))
    }

    fn backward(&self, fwd: &Forward<RealMatrix>, output_grad: &RealMatrix, grads: &mut Grads) -> Result<RealMatrix> {
        let x = fwd.tape()?;
        let act = self.activation;
        let mut dz = output_grad.clone();
        ndarray::Zip::from(&mut dz)
            .and(&fwd.output)
            .for_each(|d, &y| *d *= act.derivative_from_output(y));
        Ok(affine_backward(x, self.params.get(self.w), &dz, grads, self.w, self.b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::finite_diff_check;

    fn random_input(rows: usize, cols: usize, seed: u64) -> RealMatrix {
        let mut rng = RngStream::new(seed);
        Array2::from_shape_fn((rows, cols), |_| rng.normal())
    }

    #[test]
    fn linear_layer_gradcheck() {
        let mut layer = Dense::new(5, 3, Activation::Identity, &mut RngStream::new(1));
        let x = random_input(4, 5, 2);
        // the loss is exactly quadratic, so any step is truncation-free and a
        // wide one keeps output roundoff below the bound
        let r = finite_diff_check(&mut layer, &x, 1e-3).unwrap();
        assert!(r.max_relative_error < 1e-9, "{r:?}");
        let r = finite_diff_check(&mut layer, &x, 1e-6).unwrap();
        assert!(r.max_relative_error < 1e-4, "{r:?}");
    }

    #[test]
    fn sigmoid_layer_gradcheck() {
        let mut layer = Dense::new(6, 4, Activation::Sigmoid, &mut RngStream::new(3));
        let x = random_input(3, 6, 4);
        let r = finite_diff_check(&mut layer, &x, 1e-6).unwrap();
        assert!(r.max_relative_error < 1e-6, "{r:?}");
    }

    #[test]
    fn backward_without_retention_is_contract_violation() {
        let layer = Dense::new(2, 2, Activation::Tanh, &mut RngStream::new(5));
        let x = random_input(1, 2, 6);
        let fwd = layer.forward(&x, false).unwrap();
        let mut g = layer.params().zero_grads();
        let err = layer.backward(&fwd, &fwd.output, &mut g).unwrap_err();
        assert!(matches!(err, Error::ContractViolation(_)));
    }

    #[test]
    fn backward_is_linear_in_output_grad() {
        let layer = Dense::new(4, 3, Activation::Tanh, &mut RngStream::new(7));
        let x = random_input(2, 4, 8);
        let fwd = layer.forward(&x, true).unwrap();
        let g = random_input(2, 3, 9);
        let mut g1 = layer.params().zero_grads();
        let mut g2 = layer.params().zero_grads();
        let dx1 = layer.backward(&fwd, &g, &mut g1).unwrap();
        let dx2 = layer.backward(&fwd, &(&g * -2.5), &mut g2).unwrap();
        for (a, b) in dx1.iter().zip(dx2.iter()) {
            assert!((a * -2.5 - b).abs() < 1e-12);
        }
        for id in layer.params().ids() {
            for (a, b) in g1.get(id).iter().zip(g2.get(id).iter()) {
                assert!((a * -2.5 - b).abs() < 1e-12);
            }
        }
    }
}
