use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::tensor::{one_hot, Tensor};

fn rand_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0)).unwrap()
}

fn leaf(g: &mut Graph<f64>, t: Tensor<f64>) -> Var {
    g.input_with_grad(t)
}

/// Direct nested-loop convolution.
fn conv_oracle(x: &Tensor<f64>, w: &Tensor<f64>, b: &[f64], stride: usize, pad: usize) -> Tensor<f64> {
    let (n, c, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (o, k) = (w.shape()[0], w.shape()[2]);
    let ho = (h + 2 * pad - k) / stride + 1;
    let wo = (wd + 2 * pad - k) / stride + 1;
    let mut out = vec![0.0; n * o * ho * wo];
    for bi in 0..n {
        for oc in 0..o {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut s = b[oc];
                    for ic in 0..c {
                        for ki in 0..k {
                            for kj in 0..k {
                                let iy = (oy * stride + ki) as isize - pad as isize;
                                let ix = (ox * stride + kj) as isize - pad as isize;
                                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < wd {
                                    s += x.data()[((bi * c + ic) * h + iy as usize) * wd + ix as usize]
                                        * w.data()[((oc * c + ic) * k + ki) * k + kj];
                                }
                            }
                        }
                    }
                    out[((bi * o + oc) * ho + oy) * wo + ox] = s;
                }
            }
        }
    }
    Tensor::new(vec![n, o, ho, wo], out).unwrap()
}

#[test]
fn conv_identity_kernel() {
    let mut g = Graph::<f32>::new();
    let x = g.input(Tensor::full(&[1, 1, 3, 3], 2.0).unwrap());
    let w = g.input(Tensor::full(&[1, 1, 1, 1], 1.0).unwrap());
    let b = g.input(Tensor::zeros(&[1]).unwrap());
    let y = g.conv2d(x, w, b, 1, 0).unwrap();
    assert_eq!(g.value(y), g.value(x));
}

#[test]
fn conv_window_sum() {
    let mut g = Graph::<f32>::new();
    let x = g.input(Tensor::full(&[1, 1, 4, 4], 1.0).unwrap());
    let w = g.input(Tensor::full(&[1, 1, 3, 3], 1.0).unwrap());
    let b = g.input(Tensor::zeros(&[1]).unwrap());
    let y = g.conv2d(x, w, b, 1, 0).unwrap();
    assert_eq!(g.value(y).shape(), &[1, 1, 2, 2]);
    assert!(g.value(y).data().iter().all(|&v| v == 9.0));
}

#[test]
fn conv_matches_nested_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (stride, pad, k) in [(1, 1, 3), (2, 1, 3), (1, 0, 3), (1, 0, 1), (2, 0, 1)] {
        let x = rand_tensor(&[2, 3, 8, 8], &mut rng);
        let w = rand_tensor(&[4, 3, k, k], &mut rng);
        let b = rand_tensor(&[4], &mut rng);
        let expected = conv_oracle(&x, &w, b.data(), stride, pad);

        let mut g = Graph::<f32>::new();
        let (xv, wv, bv) = (g.input(x.cast()), g.input(w.cast()), g.input(b.cast()));
        let y = g.conv2d(xv, wv, bv, stride, pad).unwrap();
        let diff = g.value(y).cast::<f64>().max_abs_diff(&expected).unwrap();
        assert!(diff < 1e-5, "stride {stride} pad {pad} k {k}: {diff}");

        let mut g = Graph::<f64>::new();
        let (xv, wv, bv) = (g.input(x), g.input(w), g.input(b));
        let y = g.conv2d(xv, wv, bv, stride, pad).unwrap();
        assert!(g.value(y).max_abs_diff(&expected).unwrap() < 1e-12);
    }
}

#[test]
fn conv_rejects_shape_mismatch() {
    let mut g = Graph::<f32>::new();
    let x = g.input(Tensor::zeros(&[1, 2, 4, 4]).unwrap());
    let w = g.input(Tensor::zeros(&[1, 3, 3, 3]).unwrap());
    let b = g.input(Tensor::zeros(&[1]).unwrap());
    let err = g.conv2d(x, w, b, 1, 1).unwrap_err().to_string();
    assert!(err.contains("channels"), "{err}");
    let w5 = g.input(Tensor::zeros(&[1, 2, 5, 5]).unwrap());
    assert!(g.conv2d(x, w5, b, 1, 0).is_err());
    let tiny = g.input(Tensor::zeros(&[1, 2, 2, 2]).unwrap());
    let w3 = g.input(Tensor::zeros(&[1, 2, 3, 3]).unwrap());
    assert!(g.conv2d(tiny, w3, b, 1, 0).is_err());
}

#[test]
fn maxpool_cases() {
    let mut g = Graph::<f64>::new();
    let c = g.input(Tensor::full(&[1, 1, 4, 6], 0.7).unwrap());
    let y = g.maxpool2d(c, 2, 2).unwrap();
    assert_eq!(g.value(y).shape(), &[1, 1, 2, 3]);
    assert!(g.value(y).data().iter().all(|&v| v == 0.7));

    let w = g.input(Tensor::new(vec![1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let y = g.maxpool2d(w, 2, 2).unwrap();
    assert_eq!(g.value(y).data(), &[4.0]);

    let odd = g.input(Tensor::zeros(&[1, 1, 5, 4]).unwrap());
    assert!(g.maxpool2d(odd, 2, 2).is_err());
}

#[test]
fn maxpool_matches_window_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = rand_tensor(&[1, 2, 8, 8], &mut rng);
    let mut g = Graph::<f64>::new();
    let xv = g.input(x.clone());
    let y = g.maxpool2d(xv, 2, 2).unwrap();
    for c in 0..2 {
        for oy in 0..4 {
            for ox in 0..4 {
                let mut m = f64::NEG_INFINITY;
                for i in 0..2 {
                    for j in 0..2 {
                        m = m.max(x.data()[(c * 8 + oy * 2 + i) * 8 + ox * 2 + j]);
                    }
                }
                assert_eq!(g.value(y).data()[(c * 4 + oy) * 4 + ox], m);
            }
        }
    }
}

#[test]
fn maxpool_tie_routes_to_first() {
    let mut g = Graph::<f64>::new();
    let x = leaf(&mut g, Tensor::full(&[1, 1, 2, 2], 1.0).unwrap());
    let y = g.maxpool2d(x, 2, 2).unwrap();
    let s = g.sum(y).unwrap();
    let grads = g.backward(s).unwrap();
    assert_eq!(grads.wrt(x).unwrap().data(), &[1.0, 0.0, 0.0, 0.0]);
}

#[test]
fn fully_connected_cases() {
    let mut g = Graph::<f64>::new();
    let x = g.input(Tensor::new(vec![1, 2], vec![1.0, 1.0]).unwrap());
    let w = g.input(Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let b = g.input(Tensor::new(vec![2], vec![0.5, -0.5]).unwrap());
    let y = g.linear(x, w, b).unwrap();
    assert_eq!(g.value(y).data(), &[3.5, 6.5]);

    let eye = g.input(Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap());
    let zero = g.input(Tensor::zeros(&[2]).unwrap());
    let y = g.linear(x, eye, zero).unwrap();
    assert_eq!(g.value(y), g.value(x));

    let bad = g.input(Tensor::zeros(&[2, 3]).unwrap());
    assert!(g.linear(x, bad, b).is_err());
}

#[test]
fn fully_connected_matches_triple_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = rand_tensor(&[4, 16], &mut rng);
    let w = rand_tensor(&[8, 16], &mut rng);
    let b = rand_tensor(&[8], &mut rng);
    let mut expected = vec![0.0; 32];
    for i in 0..4 {
        for o in 0..8 {
            let mut s = b.data()[o];
            for k in 0..16 {
                s += x.data()[i * 16 + k] * w.data()[o * 16 + k];
            }
            expected[i * 8 + o] = s;
        }
    }
    let mut g = Graph::<f32>::new();
    let (xv, wv, bv) = (g.input(x.cast()), g.input(w.cast()), g.input(b.cast()));
    let y = g.linear(xv, wv, bv).unwrap();
    for (a, e) in g.value(y).data().iter().zip(&expected) {
        assert!((*a as f64 - e).abs() < 1e-5);
    }
}

#[test]
fn relu_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut g = Graph::<f64>::new();
    let neg = g.input(Tensor::full(&[5], -0.3).unwrap());
    let y = g.relu(neg).unwrap();
    assert!(g.value(y).data().iter().all(|&v| v == 0.0));
    let pos = g.input(Tensor::full(&[5], 0.3).unwrap());
    let y = g.relu(pos).unwrap();
    assert_eq!(g.value(y), g.value(pos));
    let m = rand_tensor(&[64], &mut rng);
    let mv = g.input(m.clone());
    let y = g.relu(mv).unwrap();
    for (a, b) in g.value(y).data().iter().zip(m.data()) {
        assert_eq!(*a, b.max(0.0));
    }
}

fn bn_train(g: &mut Graph<f64>, x: Var, c: usize) -> Var {
    let gamma = g.input(Tensor::full(&[c], 1.0).unwrap());
    let beta = g.input(Tensor::zeros(&[c]).unwrap());
    let (mut rm, mut rv) = (vec![0.0; c], vec![1.0; c]);
    g.batchnorm(
        x,
        gamma,
        beta,
        BnMode::Train { running_mean: &mut rm, running_var: &mut rv, momentum: BN_MOMENTUM },
        BN_EPS,
    )
    .unwrap()
}

#[test]
fn batchnorm_cases() {
    let mut g = Graph::<f64>::new();
    let x = g.input(Tensor::full(&[4, 2, 3, 3], 5.0).unwrap());
    let y = bn_train(&mut g, x, 2);
    assert!(g.value(y).data().iter().all(|v| v.abs() < 1e-2));

    let x = g.input(Tensor::new(vec![2, 1], vec![-1.0, 1.0]).unwrap());
    let y = bn_train(&mut g, x, 1);
    let d = g.value(y).data();
    assert!((d[0] + 1.0).abs() < 1e-4 && (d[1] - 1.0).abs() < 1e-4);

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let xt = rand_tensor(&[3, 2, 2, 2], &mut rng);
    let x = g.input(xt.clone());
    let gamma = g.input(Tensor::full(&[2], 1.0).unwrap());
    let beta = g.input(Tensor::zeros(&[2]).unwrap());
    let (rm, rv) = (vec![0.0; 2], vec![1.0; 2]);
    let y = g
        .batchnorm(x, gamma, beta, BnMode::Infer { running_mean: &rm, running_var: &rv }, 0.0)
        .unwrap();
    assert!(g.value(y).max_abs_diff(&xt).unwrap() < 1e-15);

    let single = g.input(Tensor::zeros(&[1, 2]).unwrap());
    let (mut rm, mut rv) = (vec![0.0; 2], vec![1.0; 2]);
    let err = g.batchnorm(
        single,
        gamma,
        beta,
        BnMode::Train { running_mean: &mut rm, running_var: &mut rv, momentum: 0.9 },
        BN_EPS,
    );
    assert!(err.is_err());
}

#[test]
fn batchnorm_updates_running_stats() {
    let mut g = Graph::<f64>::new();
    let x = g.input(Tensor::new(vec![2, 1], vec![1.0, 3.0]).unwrap());
    let gamma = g.input(Tensor::full(&[1], 1.0).unwrap());
    let beta = g.input(Tensor::zeros(&[1]).unwrap());
    let (mut rm, mut rv) = (vec![0.0], vec![1.0]);
    g.batchnorm(x, gamma, beta, BnMode::Train { running_mean: &mut rm, running_var: &mut rv, momentum: 0.9 }, BN_EPS)
        .unwrap();
    assert!((rm[0] - 0.2).abs() < 1e-12);
    assert!((rv[0] - 1.0).abs() < 1e-12); // 0.9·1 + 0.1·1
}

#[test]
fn global_avg_pool_cases() {
    let mut g = Graph::<f64>::new();
    let c = g.input(Tensor::full(&[2, 3, 4, 5], 1.25).unwrap());
    let y = g.global_avg_pool(c).unwrap();
    assert_eq!(g.value(y).shape(), &[2, 3]);
    assert!(g.value(y).data().iter().all(|&v| (v - 1.25).abs() < 1e-15));
    let w = g.input(Tensor::new(vec![1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let y = g.global_avg_pool(w).unwrap();
    assert_eq!(g.value(y).data(), &[2.5]);

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let r = rand_tensor(&[2, 3, 3, 3], &mut rng);
    let rv = g.input(r.clone());
    let y = g.global_avg_pool(rv).unwrap();
    for (i, chunk) in r.data().chunks(9).enumerate() {
        let mean = chunk.iter().sum::<f64>() / 9.0;
        assert!((g.value(y).data()[i] - mean).abs() < 1e-14);
    }
}

#[test]
fn softmax_t_cases() {
    let t = |v: Vec<f64>| Tensor::new(vec![1, v.len()], v).unwrap();
    let p = softmax_t(&t(vec![0.0, 0.0]), 1.0).unwrap();
    assert_eq!(p.data(), &[0.5, 0.5]);
    let p = softmax_t(&t(vec![2f64.ln(), 0.0]), 1.0).unwrap();
    assert!((p.data()[0] - 2.0 / 3.0).abs() < 1e-15 && (p.data()[1] - 1.0 / 3.0).abs() < 1e-15);
    let p = softmax_t(&t(vec![5.0, 1.0, 0.0]), 1e6).unwrap();
    assert!(p.data().iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-5));
    assert!(softmax_t(&t(vec![1.0]), 0.0).is_err());
    assert!(softmax_t(&t(vec![1.0]), -2.0).is_err());
}

#[test]
fn soft_cross_entropy_cases() {
    let mut g = Graph::<f64>::new();
    let mut z = vec![0.0; 5];
    z[2] = 50.0;
    let logits = g.input(Tensor::new(vec![1, 5], z).unwrap());
    let l = g.soft_cross_entropy(logits, &one_hot(&[2], 5).unwrap(), 1.0).unwrap();
    assert!(g.value(l).item() < 1e-15);

    let u = g.input(Tensor::zeros(&[1, 4]).unwrap());
    let l = g.soft_cross_entropy(u, &one_hot(&[1], 4).unwrap(), 1.0).unwrap();
    assert!((g.value(l).item() - 4f64.ln()).abs() < 1e-12);
    assert!((g.value(l).item() - 1.386294).abs() < 1e-6);

    let bad = Tensor::new(vec![1, 4], vec![0.5, 0.2, 0.1, 0.1]).unwrap();
    assert!(g.soft_cross_entropy(u, &bad, 1.0).is_err());
    let wrong_k = one_hot(&[1], 3).unwrap();
    assert!(g.soft_cross_entropy(u, &wrong_k, 1.0).is_err());
}

fn random_distribution(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let mut t = Tensor::from_fn(&[rows, cols], |_| rng.random_range(0.01..1.0)).unwrap();
    for r in t.data_mut().chunks_mut(cols) {
        let s: f64 = r.iter().sum();
        r.iter_mut().for_each(|v| *v /= s);
    }
    t
}

#[test]
fn soft_cross_entropy_matches_direct_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for &temp in &[0.5, 1.0, 4.0] {
        let z = rand_tensor(&[6, 7], &mut rng);
        let q = random_distribution(6, 7, &mut rng);
        let mut expected = 0.0;
        for r in 0..6 {
            let row: Vec<f64> = z.row(r).iter().map(|v| v / temp).collect();
            let denom: f64 = row.iter().map(|v| v.exp()).sum();
            for (qk, zk) in q.row(r).iter().zip(&row) {
                expected -= qk * (zk.exp() / denom).ln();
            }
        }
        expected /= 6.0;
        let mut g = Graph::<f64>::new();
        let zv = g.input(z);
        let l = g.soft_cross_entropy(zv, &q, temp).unwrap();
        assert!((g.value(l).item() - expected).abs() < 1e-10);
    }
}

#[test]
fn sum_squared_error_cases() {
    let mut g = Graph::<f64>::new();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let a = rand_tensor(&[3, 5], &mut rng);
    let av = g.input(a.clone());
    let l = g.sum_squared_error(av, av).unwrap();
    assert_eq!(g.value(l).item(), 0.0);

    let z = g.input(Tensor::zeros(&[1, 128]).unwrap());
    let o = g.input(Tensor::full(&[1, 128], 1.0).unwrap());
    let l = g.sum_squared_error(z, o).unwrap();
    assert_eq!(g.value(l).item(), 128.0);

    let b = rand_tensor(&[3, 5], &mut rng);
    let bv = g.input(b.clone());
    let l = g.sum_squared_error(av, bv).unwrap();
    let expected: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / 3.0;
    assert!((g.value(l).item() - expected).abs() < 1e-14);
}

#[test]
fn backward_linearity_and_unreachable() {
    let mut store = ParamStore::<f64>::new();
    let used = store.add("used", Tensor::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap(), true).unwrap();
    let unused = store.add("unused", Tensor::full(&[2], 1.0).unwrap(), true).unwrap();
    let mut g = Graph::new();
    let u = g.param(&store, used);
    let _ = g.param(&store, unused);
    let s = g.sum(u).unwrap();
    let grads = g.backward(s).unwrap();
    grads.apply_to(&mut store).unwrap();
    assert_eq!(store.get(used).grad.as_ref().unwrap().data(), &[1.0, 1.0, 1.0]);
    let un = store.get(unused).grad.as_ref().map(|g| g.data().to_vec()).unwrap_or(vec![0.0; 2]);
    assert!(un.iter().all(|&v| v == 0.0));
}

#[test]
fn backward_rejects_non_scalar_and_inference_graph() {
    let mut g = Graph::<f64>::new();
    let x = leaf(&mut g, Tensor::zeros(&[2]).unwrap());
    assert!(g.backward(x).is_err());
    let mut gi = Graph::<f64>::inference();
    let x = gi.input(Tensor::zeros(&[1]).unwrap());
    assert!(gi.backward(x).is_err());
}

#[test]
fn non_finite_forward_is_an_error() {
    let mut g = Graph::<f64>::new();
    let x = g.input(Tensor::new(vec![1], vec![f64::INFINITY]).unwrap());
    assert!(matches!(g.relu(x), Err(crate::Error::NonFinite(_))));
}

#[test]
fn grad_check_linear_function() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let p = rand_tensor(&[7], &mut rng);
    let err = grad_check(|g, x| g.sum(x), &p, DEFAULT_EPS).unwrap();
    assert!(err < 1e-8, "{err}");
}

#[test]
fn grad_check_softmax_cross_entropy() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..10 {
        let z = rand_tensor(&[4, 6], &mut rng);
        let q = random_distribution(4, 6, &mut rng);
        let err = grad_check(|g, x| g.soft_cross_entropy(x, &q, 2.5), &z, DEFAULT_EPS).unwrap();
        assert!(err < 1e-6, "{err}");
    }
}

#[test]
fn grad_check_conv_relu_gap() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let w = rand_tensor(&[3, 2, 3, 3], &mut rng);
    let b = rand_tensor(&[3], &mut rng);
    for _ in 0..3 {
        let x = rand_tensor(&[2, 2, 5, 5], &mut rng);
        let err = grad_check(
            |g, x| {
                let (wv, bv) = (g.input(w.clone()), g.input(b.clone()));
                let y = g.conv2d(x, wv, bv, 1, 1)?;
                let y = g.relu(y)?;
                let y = g.global_avg_pool(y)?;
                g.sum(y)
            },
            &x,
            DEFAULT_EPS,
        )
        .unwrap();
        assert!(err < 1e-5, "{err}");
    }
}

#[test]
fn backward_is_bit_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let x = rand_tensor(&[3, 2, 6, 6], &mut rng);
    let w = rand_tensor(&[4, 2, 3, 3], &mut rng);
    let run = || {
        let mut g = Graph::<f64>::new();
        let xv = leaf(&mut g, x.clone());
        let wv = leaf(&mut g, w.clone());
        let b = g.input(Tensor::zeros(&[4]).unwrap());
        let y = g.conv2d(xv, wv, b, 1, 1).unwrap();
        let y = g.maxpool2d(y, 2, 2).unwrap();
        let y = g.sum(y).unwrap();
        let gr = g.backward(y).unwrap();
        (gr.wrt(xv).unwrap().clone(), gr.wrt(wv).unwrap().clone())
    };
    let (a1, b1) = run();
    let (a2, b2) = run();
    assert_eq!(a1.to_le_bytes(), a2.to_le_bytes());
    assert_eq!(b1.to_le_bytes(), b2.to_le_bytes());
}
