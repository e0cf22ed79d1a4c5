use crate::error::{Error, Result};
use crate::nn::{Scalar, Tensor4};

fn check<T: Scalar>(pred: &Tensor4<T>, target: &Tensor4<T>) -> Result<()> {
    if pred.dims() != target.dims() {
        return Err(Error::Dimension(format!(
            "prediction {:?} vs target {:?}",
            pred.dims(),
            target.dims()
        )));
    }
    Ok(())
}

/// Mean squared error over every element of the batch, accumulated in f64.
pub fn mse_loss<T: Scalar>(pred: &Tensor4<T>, target: &Tensor4<T>) -> Result<f64> {
    check(pred, target)?;
    let sum: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let d = p.as_f64() - t.as_f64();
            d * d
        })
        .sum();
    Ok(sum / pred.len() as f64)
}

/// Gradient of [`mse_loss`] with respect to `pred`.
pub fn mse_loss_grad<T: Scalar>(pred: &Tensor4<T>, target: &Tensor4<T>) -> Result<Tensor4<T>> {
    check(pred, target)?;
    let k = 2.0 / pred.len() as f64;
    Ok(Tensor4::from_raw(
        pred.dims(),
        pred.data()
            .iter()
            .zip(target.data())
            .map(|(&p, &t)| T::of(k * (p.as_f64() - t.as_f64())))
            .collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_examples() {
        let t = Tensor4::<f64>::zeros([1, 1, 1, 2]);
        assert_eq!(mse_loss(&t, &t).unwrap(), 0.0);
        assert_eq!(mse_loss(&Tensor4::filled([1, 1, 1, 2], 1.0), &t).unwrap(), 1.0);
        let p = Tensor4::<f64>::new([1, 1, 1, 2], vec![0.0, 2.0]).unwrap();
        assert_eq!(mse_loss(&p, &t).unwrap(), 2.0);
        assert!(mse_loss(&p, &Tensor4::zeros([1, 1, 2, 1])).is_err());
    }

    #[test]
    fn derivative_of_square() {
        let x = Tensor4::<f64>::new([1, 1, 1, 1], vec![3.0]).unwrap();
        let g = mse_loss_grad(&x, &Tensor4::zeros([1, 1, 1, 1])).unwrap();
        assert_eq!(g.data(), &[6.0]);
    }
}
