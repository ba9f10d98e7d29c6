use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::error::Error;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> NdArray {
    let n = shape.iter().product();
    NdArray::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn params(list: &[(&str, NdArray)]) -> ParamVector {
    let mut p = ParamVector::new();
    for (n, v) in list {
        p.push(*n, v.clone()).unwrap();
    }
    p
}

/// Weighted sum with fixed pseudo-random weights, so every output entry matters.
fn probe(g: &mut Graph, y: Var) -> crate::error::Result<Var> {
    let shape = g.shape(y).to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let w = g.constant(random(&shape, &mut rng))?;
    let p = g.mul(y, w)?;
    g.sum(p)
}

fn check(p: &ParamVector, f: impl Fn(&mut Graph, &[Var]) -> crate::error::Result<Var>) -> f64 {
    finite_difference_check(|g, v| { let y = f(g, v)?; probe(g, y) }, p, 1e-5, 400, 3).unwrap()
}

#[test]
fn square_of_three() {
    let p = params(&[("x", NdArray::scalar(3.0))]);
    let (v, grad) = value_and_gradient(|g, v| g.mul(v[0], v[0]), &p).unwrap();
    assert_eq!(v, 9.0);
    assert_eq!(grad.get("x").unwrap().item().unwrap(), 6.0);
}

#[test]
fn relu_clamps_negatives() {
    let mut g = Graph::new();
    let x = g.constant(NdArray::from_vec(vec![-1.0, 0.0, 2.0])).unwrap();
    let y = g.relu(x).unwrap();
    assert_eq!(g.value(y).data(), &[0.0, 0.0, 2.0]);
}

#[test]
fn dense_shape_rule() {
    let mut g = Graph::new();
    let w = g.constant(NdArray::zeros(&[2, 3])).unwrap();
    let x = g.constant(NdArray::from_vec(vec![1.0, 2.0, 3.0])).unwrap();
    let y = g.dense(x, w, None).unwrap();
    assert_eq!(g.shape(y), &[2]);
    let bad = g.constant(NdArray::zeros(&[2, 4])).unwrap();
    match g.dense(x, bad, None) {
        Err(Error::Shape { op, .. }) => assert_eq!(op, "dense"),
        other => panic!("expected shape error, got {:?}", other.map(|_| ())),
    }
}

#[test]
fn elementwise_shape_mismatch_names_op() {
    let mut g = Graph::new();
    let a = g.constant(NdArray::zeros(&[2])).unwrap();
    let b = g.constant(NdArray::zeros(&[3])).unwrap();
    let err = g.add(a, b).unwrap_err();
    assert!(matches!(err, Error::Shape { op: "add", .. }), "{err}");
}

#[test]
fn sum_tanh_dense_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let p = params(&[("w", random(&[4, 3], &mut rng)), ("x", random(&[3], &mut rng))]);
    let err = finite_difference_check(
        |g, v| {
            let y = g.dense(v[1], v[0], None)?;
            let t = g.tanh(y)?;
            g.sum(t)
        },
        &p,
        1e-4,
        100,
        0,
    )
    .unwrap();
    assert!(err < 1e-4, "relative error {err}");
}

#[test]
fn unused_segment_has_zero_gradient() {
    let p = params(&[("used", NdArray::from_vec(vec![1.0, 2.0])), ("unused", NdArray::from_vec(vec![5.0]))]);
    let grad = gradient(|g, v| { let s = g.square(v[0])?; g.sum(s) }, &p).unwrap();
    assert_eq!(grad.get("unused").unwrap().data(), &[0.0]);
    assert_eq!(grad.get("used").unwrap().data(), &[2.0, 4.0]);
}

#[test]
fn quadratic_check_is_exact() {
    let p = params(&[("x", NdArray::from_vec(vec![0.3, -0.7, 1.1]))]);
    let err = finite_difference_check(|g, v| { let s = g.square(v[0])?; g.sum(s) }, &p, 1e-3, 10, 0).unwrap();
    assert!(err < 1e-8, "{err}");
}

#[test]
fn two_layer_mlp_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let p = params(&[
        ("w1", random(&[8, 4], &mut rng)),
        ("b1", random(&[8], &mut rng)),
        ("w2", random(&[2, 8], &mut rng)),
        ("b2", random(&[2], &mut rng)),
    ]);
    let x = random(&[4, 16], &mut rng);
    let err = finite_difference_check(
        |g, v| {
            let xi = g.constant(x.clone())?;
            let h = g.dense(xi, v[0], Some(v[1]))?;
            let h = g.tanh(h)?;
            let y = g.dense(h, v[2], Some(v[3]))?;
            let s = g.square(y)?;
            g.mean(s)
        },
        &p,
        1e-4,
        200,
        0,
    )
    .unwrap();
    assert!(err < 1e-4, "{err}");
}

#[test]
fn zero_step_is_rejected() {
    let p = params(&[("x", NdArray::scalar(1.0))]);
    let r = finite_difference_check(|g, v| g.square(v[0]), &p, 0.0, 1, 0);
    assert!(matches!(r, Err(Error::Precondition(_))));
}

#[test]
fn non_scalar_loss_is_rejected() {
    let mut g = Graph::new();
    let x = g.param(NdArray::zeros(&[3])).unwrap();
    assert!(g.backward(x).is_err());
}

#[test]
fn non_finite_value_names_op() {
    let mut g = Graph::new();
    let a = g.param(NdArray::scalar(1.0)).unwrap();
    let z = g.constant(NdArray::scalar(0.0)).unwrap();
    let err = g.div(a, z).unwrap_err();
    assert!(matches!(err, Error::NonFinite { op: "div" }), "{err}");
}

#[test]
fn evaluation_is_pure() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let w = random(&[3, 2, 3, 3], &mut rng);
    let x = random(&[2, 6, 6], &mut rng);
    let run = || {
        let mut g = Graph::new();
        let wv = g.constant(w.clone()).unwrap();
        let xv = g.constant(x.clone()).unwrap();
        let y = g.conv(xv, wv, None).unwrap();
        let t = g.tanh(y).unwrap();
        g.value(t).clone()
    };
    let (a, b) = (run(), run());
    assert!(a.data().iter().zip(b.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
}

#[test]
fn gradient_is_linear_in_the_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let p = params(&[("x", random(&[5], &mut rng))]);
    let l1 = |g: &mut Graph, v: &[Var]| { let t = g.sin(v[0])?; g.sum(t) };
    let l2 = |g: &mut Graph, v: &[Var]| { let t = g.square(v[0])?; g.mean(t) };
    let (a, b) = (1.7, -0.4);
    let combo = gradient(
        |g, v| {
            let x = l1(g, v)?;
            let y = l2(g, v)?;
            let x = g.scale(x, a)?;
            let y = g.scale(y, b)?;
            g.add(x, y)
        },
        &p,
    )
    .unwrap();
    let g1 = gradient(l1, &p).unwrap().flatten();
    let g2 = gradient(l2, &p).unwrap().flatten();
    for ((c, x), y) in combo.flatten().iter().zip(g1).zip(g2) {
        assert!((c - (a * x + b * y)).abs() < 1e-14);
    }
}

// One finite-difference check per op on random inputs in [-1, 1].

#[test]
fn elementwise_ops_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let p = params(&[("a", random(&[3, 4], &mut rng)), ("b", random(&[3, 4], &mut rng))]);
    assert!(check(&p, |g, v| g.add(v[0], v[1])) < 1e-4);
    assert!(check(&p, |g, v| g.sub(v[0], v[1])) < 1e-4);
    assert!(check(&p, |g, v| g.mul(v[0], v[1])) < 1e-4);
    assert!(check(&p, |g, v| { let s = g.square(v[1])?; let d = g.offset(s, 0.5)?; g.div(v[0], d) }) < 1e-4);
    assert!(check(&p, |g, v| g.scale(v[0], -2.5)) < 1e-4);
    assert!(check(&p, |g, v| g.offset(v[0], 3.0)) < 1e-4);
    assert!(check(&p, |g, v| g.tanh(v[0])) < 1e-4);
    assert!(check(&p, |g, v| g.relu(v[0])) < 1e-4);
    assert!(check(&p, |g, v| g.sin(v[0])) < 1e-4);
    assert!(check(&p, |g, v| { let s = g.square(v[0])?; let s = g.offset(s, 0.2)?; g.sqrt(s) }) < 1e-4);
    assert!(check(&p, |g, v| g.square(v[0])) < 1e-4);
    assert!(check(&p, |g, v| g.sum(v[0])) < 1e-4);
    assert!(check(&p, |g, v| g.mean(v[0])) < 1e-4);
}

#[test]
fn structural_ops_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let p = params(&[("a", random(&[3, 4, 6], &mut rng)), ("b", random(&[2, 4, 6], &mut rng))]);
    assert!(check(&p, |g, v| g.concat(&[v[0], v[1]])) < 1e-4);
    assert!(check(&p, |g, v| g.slice(v[0], 1, 2)) < 1e-4);
    assert!(check(&p, |g, v| g.reshape(v[0], &[12, 6])) < 1e-4);
    assert!(check(&p, |g, v| g.channel_affine(v[0], &[0.5, -1.0, 2.0], &[0.1, 0.2, 0.3])) < 1e-4);
    assert!(check(&p, |g, v| g.avg_pool2(v[0])) < 1e-4);
    assert!(check(&p, |g, v| g.upsample2(v[1])) < 1e-4);
    for axis in 0..3 {
        assert!(check(&p, |g, v| g.diff(v[0], axis)) < 1e-4);
    }
}

#[test]
fn filter_gradients_both_boundaries() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let p = params(&[("a", random(&[2, 5, 7], &mut rng))]);
    let taps = Rc::new(vec![vec![0.2, 0.5, 0.3], vec![0.1, 0.2, 0.4, 0.2, 0.1]]);
    for boundary in [Boundary::Reflect, Boundary::Zero] {
        let t = taps.clone();
        assert!(check(&p, move |g, v| g.filter(v[0], 1, t.clone(), boundary)) < 1e-4);
    }
}

#[test]
fn dense_and_conv_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let p = params(&[
        ("x", random(&[3, 4, 6], &mut rng)),
        ("w", random(&[2, 3], &mut rng)),
        ("b", random(&[2], &mut rng)),
        ("k", random(&[2, 3, 3, 3], &mut rng)),
    ]);
    assert!(check(&p, |g, v| g.dense(v[0], v[1], Some(v[2]))) < 1e-4);
    assert!(check(&p, |g, v| g.conv(v[0], v[3], Some(v[2]))) < 1e-4);

    let p3 = params(&[("x", random(&[2, 4, 4, 4], &mut rng)), ("k", random(&[3, 2, 3, 3, 3], &mut rng))]);
    assert!(check(&p3, |g, v| g.conv(v[0], v[1], None)) < 1e-4);
    let p1 = params(&[("x", random(&[2, 4, 4], &mut rng)), ("k", random(&[3, 2, 1, 1], &mut rng))]);
    assert!(check(&p1, |g, v| g.conv(v[0], v[1], None)) < 1e-4);
}

#[test]
fn conv_matches_direct_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let x = random(&[2, 5, 4], &mut rng);
    let w = random(&[3, 2, 3, 3], &mut rng);
    let mut g = Graph::new();
    let (xv, wv) = (g.constant(x.clone()).unwrap(), g.constant(w.clone()).unwrap());
    let y = g.conv(xv, wv, None).unwrap();
    let y = g.value(y);
    for co in 0..3 {
        for i in 0..5 {
            for j in 0..4 {
                let mut s = 0.0;
                for ci in 0..2 {
                    for di in 0..3 {
                        for dj in 0..3 {
                            let (ii, jj) = (i as isize + di as isize - 1, j as isize + dj as isize - 1);
                            if (0..5).contains(&ii) && (0..4).contains(&jj) {
                                s += w.get(&[co, ci, di, dj]) * x.get(&[ci, ii as usize, jj as usize]);
                            }
                        }
                    }
                }
                assert!((y.get(&[co, i, j]) - s).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn warp_gradients_2d_and_3d() {
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    // interior, non-integer coordinates keep every sample away from cell edges
    let coords2 = NdArray::new(
        vec![2, 3, 4],
        (0..24).map(|_| 0.3 + 0.4 * rng.gen::<f64>() + rng.gen_range(0..4) as f64).collect(),
    )
    .unwrap();
    let p = params(&[("img", random(&[5, 5], &mut rng)), ("c", coords2)]);
    assert!(check(&p, |g, v| g.warp(v[0], v[1])) < 1e-4);

    let coords3 = NdArray::new(
        vec![3, 2, 2, 2],
        (0..24).map(|_| 0.3 + 0.4 * rng.gen::<f64>() + rng.gen_range(0..3) as f64).collect(),
    )
    .unwrap();
    let p = params(&[("img", random(&[4, 4, 4], &mut rng)), ("c", coords3)]);
    assert!(check(&p, |g, v| g.warp(v[0], v[1])) < 1e-4);
}
