use crate::numerics::tensor::{Real, Tensor};

/// A named learnable tensor together with its gradient accumulator.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<S> {
    pub name: String,
    pub value: Tensor<S>,
    pub grad: Tensor<S>,
}

impl<S: Real> Param<S> {
    pub fn new(name: impl Into<String>, value: Tensor<S>) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(S::zero());
    }

    pub fn numel(&self) -> usize {
        self.value.len()
    }

    pub fn cast<T: Real>(&self) -> Param<T> {
        Param {
            name: self.name.clone(),
            value: self.value.cast(),
            grad: self.grad.cast(),
        }
    }
}

/// Anything that owns an ordered set of parameters.
///
/// The visiting order is stable and defines checkpoint layout and optimizer
/// state indexing.
pub trait HasParams<S: Real> {
    fn params(&self) -> Vec<&Param<S>>;
    fn params_mut(&mut self) -> Vec<&mut Param<S>>;

    fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    fn num_params(&self) -> usize {
        self.params().iter().map(|p| p.numel()).sum()
    }

    fn param_values(&self) -> Vec<Tensor<S>> {
        self.params().iter().map(|p| p.value.clone()).collect()
    }

    fn load_param_values(&mut self, values: &[Tensor<S>]) {
        let params = self.params_mut();
        assert_eq!(params.len(), values.len(), "parameter count mismatch");
        for (p, v) in params.into_iter().zip(values) {
            assert_eq!(p.value.shape(), v.shape(), "shape mismatch for {}", p.name);
            p.value = v.clone();
        }
    }
}

impl<S: Real> HasParams<S> for Vec<Param<S>> {
    fn params(&self) -> Vec<&Param<S>> {
        self.iter().collect()
    }
    fn params_mut(&mut self) -> Vec<&mut Param<S>> {
        self.iter_mut().collect()
    }
}
