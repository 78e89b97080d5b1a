//! Central-difference checks of the analytic gradients of a few composed
//! graphs in f64.

use bridge_distill::autodiff::{grad_check, Graph, DEFAULT_EPS};
use bridge_distill::tensor::{one_hot, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> bridge_distill::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut rand = |shape: &[usize]| Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0));
    let w = rand(&[4, 2, 3, 3])?;
    let b = rand(&[4])?;
    let fc = rand(&[3, 4])?;
    let target = one_hot::<f64>(&[0, 2], 3)?;

    let conv_net = |g: &mut Graph<f64>, x| {
        let (wv, bv, fv) = (g.input(w.clone()), g.input(b.clone()), g.input(fc.clone()));
        let zero = g.input(Tensor::zeros(&[3])?);
        let y = g.conv2d(x, wv, bv, 1, 1)?;
        let y = g.relu(y)?;
        let y = g.maxpool2d(y, 2, 2)?;
        let y = g.global_avg_pool(y)?;
        let y = g.linear(y, fv, zero)?;
        g.soft_cross_entropy(y, &target, 2.0)
    };
    let err = grad_check(conv_net, &rand(&[2, 2, 6, 6])?, DEFAULT_EPS)?;
    println!("conv -> relu -> pool -> gap -> linear -> soft CE: max relative error {err:.2e}");

    let sse = |g: &mut Graph<f64>, x| {
        let t = g.input(Tensor::full(&[3, 5], 0.25)?);
        let y = g.softmax_t(x, 3.0)?;
        g.sum_squared_error(y, t)
    };
    let err = grad_check(sse, &rand(&[3, 5])?, DEFAULT_EPS)?;
    println!("softmax(T=3) -> squared error: max relative error {err:.2e}");
    Ok(())
}
