//! Central finite-difference verification of analytic gradients.

use super::graph::{Graph, Var};
use super::param::{ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_EPS: f64 = 1e-4;

/// `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

fn scalar_of(g: &Graph<f64>, v: Var) -> Result<f64> {
    let t = g.value(v);
    if t.len() != 1 {
        return Err(Error::shape("grad_check", format!("function must return a scalar, got {:?}", t.shape())));
    }
    Ok(t.item())
}

/// Max relative error between the analytic gradient of `f` at `point` and
/// central differences over every coordinate.
pub fn grad_check<F>(f: F, point: &Tensor<f64>, eps: f64) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, Var) -> Result<Var>,
{
    let coords: Vec<usize> = (0..point.len()).collect();
    grad_check_coords(f, point, eps, &coords)
}

/// As [`grad_check`] restricted to the listed coordinates.
pub fn grad_check_coords<F>(f: F, point: &Tensor<f64>, eps: f64, coords: &[usize]) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, Var) -> Result<Var>,
{
    let mut g = Graph::new();
    let x = g.input_with_grad(point.clone());
    let y = f(&mut g, x)?;
    scalar_of(&g, y)?;
    let grads = g.backward(y)?;
    let zeros = Tensor::zeros(point.shape())?;
    let analytic = grads.wrt(x).unwrap_or(&zeros);

    let eval = |p: Tensor<f64>| -> Result<f64> {
        let mut g = Graph::inference();
        let x = g.input(p);
        let y = f(&mut g, x)?;
        scalar_of(&g, y)
    };
    let mut worst = 0.0f64;
    for &i in coords {
        let mut plus = point.clone();
        plus.data_mut()[i] += eps;
        let mut minus = point.clone();
        minus.data_mut()[i] -= eps;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * eps);
        worst = worst.max(relative_error(analytic.data()[i], numeric));
    }
    Ok(worst)
}

/// Finite-difference check with respect to selected parameter coordinates.
/// `f` builds the scalar objective from the store on the given graph.
pub fn grad_check_params<F>(f: F, store: &ParamStore<f64>, coords: &[(ParamId, usize)], eps: f64) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, &ParamStore<f64>) -> Result<Var>,
{
    let mut g = Graph::new();
    let y = f(&mut g, store)?;
    scalar_of(&g, y)?;
    let grads = g.backward(y)?;
    let mut analytic = ParamStore::new();
    for p in store.iter() {
        analytic.add(p.name.clone(), Tensor::zeros(p.value.shape())?, p.trainable)?;
    }
    grads.apply_to(&mut analytic)?;

    let eval = |s: &ParamStore<f64>| -> Result<f64> {
        let mut g = Graph::inference();
        let y = f(&mut g, s)?;
        scalar_of(&g, y)
    };
    let mut worst = 0.0f64;
    for &(id, i) in coords {
        let mut plus = store.clone();
        plus.get_mut(id).value.data_mut()[i] += eps;
        let mut minus = store.clone();
        minus.get_mut(id).value.data_mut()[i] -= eps;
        let numeric = (eval(&plus)? - eval(&minus)?) / (2.0 * eps);
        let a = analytic.get(id).grad.as_ref().map_or(0.0, |g| g.data()[i]);
        worst = worst.max(relative_error(a, numeric));
    }
    Ok(worst)
}
