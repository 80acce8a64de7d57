use super::{value_and_grad, Var};
use crate::error::Result;
use crate::scalar::Scalar;

/// A scalar program that can run on any [`Scalar`], so the same code path
/// serves finite differences and the tape.
pub trait ScalarFn {
    fn eval<S: Scalar>(&self, x: &[S]) -> S;
}

/// Largest discrepancy between the tape gradient and central differences,
/// relative to the largest gradient entry.
pub fn grad_check<F: ScalarFn>(f: &F, x: &[f64], h: f64) -> Result<f64> {
    let (_, g) = value_and_grad(x, |v: &[Var]| f.eval(v))?;
    let mut xp = x.to_vec();
    let mut fd = vec![0.0; x.len()];
    for i in 0..x.len() {
        xp[i] = x[i] + h;
        let fp = f.eval::<f64>(&xp);
        xp[i] = x[i] - h;
        let fm = f.eval::<f64>(&xp);
        xp[i] = x[i];
        fd[i] = (fp - fm) / (2.0 * h);
    }
    let scale = g.iter().chain(&fd).fold(0.0f64, |acc, v| acc.max(v.abs()));
    if scale == 0.0 {
        return Ok(0.0);
    }
    let err = g.iter().zip(&fd).fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
    Ok(err / scale)
}
