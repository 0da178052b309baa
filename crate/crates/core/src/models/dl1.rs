use crate::error::{Error, Result};
use crate::operators::DerivativeOperator;
use crate::scalar::Real;

/// Absolute-derivative prior with energy `λ ‖A d‖₁ + ε ‖d‖₁`.
///
/// The normalizer has no closed form, so only the energy and MAP
/// estimation are available.
#[derive(Debug, Clone, PartialEq)]
pub struct Dl1Model<T> {
    op: DerivativeOperator,
    pub lambda: T,
    pub epsilon: T,
}

impl<T: Real> Dl1Model<T> {
    pub fn new(op: DerivativeOperator, lambda: T, epsilon: T) -> Result<Self> {
        if !(lambda >= T::zero()) || !(epsilon >= T::zero()) {
            return Err(Error::param("DL1 lambda and epsilon must be nonnegative"));
        }
        Ok(Self { op, lambda, epsilon })
    }

    pub fn patch(lambda: T, epsilon: T) -> Result<Self> {
        Self::new(DerivativeOperator::patch(), lambda, epsilon)
    }

    pub fn operator(&self) -> &DerivativeOperator {
        &self.op
    }

    pub fn energy(&self, d: &[T]) -> T {
        let tv: T = self.op.apply(d).into_iter().map(T::abs).sum();
        let l1: T = d.iter().map(|v| v.abs()).sum();
        self.lambda * tv + self.epsilon * l1
    }
}
