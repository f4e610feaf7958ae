use crate::error::{Error, Result};
use crate::numerics::{Graph, Tensor, Var};

/// Compares the reverse-mode gradient of a scalar graph against central
/// finite differences and returns `max_i |g_ad − g_fd| / (|g_fd| + 1e-12)`.
///
/// `build` receives a fresh graph and the leaf holding the point, and must
/// return a scalar node. It is called `2·n + 1` times.
pub fn grad_check<'a, F>(build: F, point: &Tensor, step: f64) -> Result<f64>
where
    F: Fn(&mut Graph<'a>, Var) -> Var,
{
    if !(step > 1e-7 && step < 1e-3) {
        return Err(Error::InvalidConfig(format!("finite-difference step {step} outside (1e-7, 1e-3)")));
    }
    let mut g = Graph::new();
    let x = g.variable(point.clone());
    let y = build(&mut g, x);
    if g.value(y).len() != 1 {
        return Err(Error::DimensionMismatch("grad_check needs a scalar output".into()));
    }
    let grads = g.backward(y);
    let ad: Vec<f64> = grads.get(x).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; point.len()]);

    let eval = |p: Tensor| -> f64 {
        let mut g = Graph::new();
        let x = g.constant(p);
        let y = build(&mut g, x);
        g.value(y).data()[0]
    };

    let mut worst: f64 = 0.0;
    for i in 0..point.len() {
        let mut plus = point.clone();
        plus.data_mut()[i] += step;
        let mut minus = point.clone();
        minus.data_mut()[i] -= step;
        let fd = (eval(plus) - eval(minus)) / (2.0 * step);
        if !fd.is_finite() || !ad[i].is_finite() {
            return Err(Error::NonFiniteGradient(i));
        }
        worst = worst.max((ad[i] - fd).abs() / (fd.abs() + 1e-12));
    }
    Ok(worst)
}
