use crate::error::{Error, Result};

use super::{Matrix, Scalar};

/// Moment estimates and hyperparameters for one parameter matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Matrix<T>,
    pub v: Matrix<T>,
    pub t: u64,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    pub lr: T,
}

impl<T: Scalar> AdamState<T> {
    /// Zeroed moments with the usual defaults (β1 = 0.9, β2 = 0.999, ε = 1e-8).
    pub fn new(rows: usize, cols: usize, lr: T) -> Self {
        AdamState {
            m: Matrix::zeros(rows, cols),
            v: Matrix::zeros(rows, cols),
            t: 0,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
            lr,
        }
    }

    /// In-place bias-corrected Adam update of `param`.
    pub fn step(&mut self, param: &mut Matrix<T>, grad: &Matrix<T>) -> Result<()> {
        for other in [grad, &self.m, &self.v] {
            if other.shape() != param.shape() {
                return Err(Error::Shape {
                    op: "adam_step",
                    left: param.shape(),
                    right: other.shape(),
                });
            }
        }
        self.t += 1;
        let one = T::one();
        let t = self.t as i32;
        let bc1 = one - self.beta1.powi(t);
        let bc2 = one - self.beta2.powi(t);
        let m = self.m.as_mut_slice();
        let v = self.v.as_mut_slice();
        for (i, (p, &g)) in param
            .as_mut_slice()
            .iter_mut()
            .zip(grad.as_slice())
            .enumerate()
        {
            m[i] = self.beta1 * m[i] + (one - self.beta1) * g;
            v[i] = self.beta2 * v[i] + (one - self.beta2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            *p -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Functional form of [`AdamState::step`].
pub fn adam_step<T: Scalar>(
    param: &Matrix<T>,
    grad: &Matrix<T>,
    state: &AdamState<T>,
) -> Result<(Matrix<T>, AdamState<T>)> {
    let mut p = param.clone();
    let mut s = state.clone();
    s.step(&mut p, grad)?;
    Ok((p, s))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_param() {
        let p = Matrix::from_rows(&[[1.5, -2.0], [0.25, 3.0]]).unwrap();
        let g = Matrix::zeros(2, 2);
        let s = AdamState::new(2, 2, 0.1);
        let (p1, s1) = adam_step(&p, &g, &s).unwrap();
        assert_eq!(p1, p);
        assert_eq!(s1.t, 1);
        let (p2, s2) = adam_step(&p1, &g, &s1).unwrap();
        assert_eq!(p2, p);
        assert_eq!(s2.t, 2);
    }

    #[test]
    fn first_step_hand_evaluated() {
        // m = 0.1, v = 0.001; bias corrections give m_hat = v_hat = 1,
        // so the step is lr * 1 / (1 + 1e-8).
        let oracle = 1.0 - 0.1 * 1.0 / (1.0f64.sqrt() + 1e-8);
        let p = Matrix::filled(1, 1, 1.0f64);
        let g = Matrix::filled(1, 1, 1.0);
        let (p1, s1) = adam_step(&p, &g, &AdamState::new(1, 1, 0.1)).unwrap();
        assert!((p1.get(0, 0) - 0.9).abs() < 1e-6);
        assert!((p1.get(0, 0) - oracle).abs() < 1e-15);
        assert_eq!(s1.t, 1);
    }

    #[test]
    fn shape_mismatch() {
        let p = Matrix::<f64>::zeros(2, 2);
        let g = Matrix::zeros(2, 3);
        assert!(matches!(
            adam_step(&p, &g, &AdamState::new(2, 2, 0.1)),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn zero_lr_is_exact_noop() {
        let p = Matrix::from_rows(&[[0.3, -0.7]]).unwrap();
        let g = Matrix::from_rows(&[[5.0, -1.0]]).unwrap();
        let (p1, _) = adam_step(&p, &g, &AdamState::new(1, 2, 0.0)).unwrap();
        assert_eq!(p1, p);
    }
}
