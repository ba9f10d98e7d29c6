use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::diffcore::{Activation, NdArray, ParamVector};
use crate::ode_flow::Domain;

fn conv_config(grid: &[usize], activation: Activation, bias: bool) -> ModelConfig {
    ModelConfig::new(
        ArchConfig::GridConv { widths: [6, 8], activation, grid_shape: grid.to_vec(), bias },
        grid.len(),
    )
}

#[test]
fn fresh_mlp_is_near_zero() {
    let domain = Domain::unit(&[16, 12]).unwrap();
    for seed in 0..5 {
        let model = init_model(&ModelConfig::new(ArchConfig::default_mlp(), 2), seed).unwrap();
        let grid = domain.identity_grid();
        let m = domain.voxel_count();
        let mut pts = vec![0.0; m * 2];
        for p in 0..m {
            pts[2 * p] = grid.data()[p];
            pts[2 * p + 1] = grid.data()[m + p];
        }
        let v = model.mlp_velocity(&domain, &NdArray::new(vec![m, 2], pts).unwrap(), 0.0).unwrap();
        assert!(v.max_abs() <= INIT_VELOCITY_BOUND, "{}", v.max_abs());
        assert!(v.max_abs() > 0.0);
    }
}

#[test]
fn fresh_conv_is_near_zero_and_shape_preserving() {
    let domain = Domain::unit(&[16, 8]).unwrap();
    for act in [Activation::Tanh, Activation::Relu] {
        let model = init_model(&conv_config(&[16, 8], act, true), 3).unwrap();
        let v = model.conv_velocity(&domain, &domain.identity_grid(), 0.0).unwrap();
        assert_eq!(v.shape(), &[2, 16, 8]);
        assert!(v.max_abs() <= INIT_VELOCITY_BOUND, "{act:?}: {}", v.max_abs());
    }
    let d3 = Domain::unit(&[4, 6, 8]).unwrap();
    let model = init_model(&conv_config(&[4, 6, 8], Activation::Tanh, true), 3).unwrap();
    let v = model.conv_velocity(&d3, &d3.identity_grid(), 0.0).unwrap();
    assert_eq!(v.shape(), &[3, 4, 6, 8]);
    assert!(v.max_abs() <= INIT_VELOCITY_BOUND);
}

#[test]
fn mlp_is_pointwise() {
    let domain = Domain::unit(&[10, 10]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut model = init_model(&ModelConfig::new(ArchConfig::default_mlp(), 2), 1).unwrap();
    // push weights away from the near-zero init so outputs are not all tiny
    let mut p = model.params().clone();
    for (_, v) in p.segments_mut() {
        v.data_mut().iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
    }
    model = model.with_params(p).unwrap();
    let pts: Vec<[f64; 2]> = (0..20).map(|_| [rng.gen_range(0.0..9.0), rng.gen_range(0.0..9.0)]).collect();
    let flat = |ps: &[[f64; 2]]| NdArray::new(vec![ps.len(), 2], ps.iter().flatten().copied().collect()).unwrap();
    let out = model.mlp_velocity(&domain, &flat(&pts), 0.4).unwrap();
    let mut perm: Vec<usize> = (0..20).collect();
    perm.reverse();
    perm.swap(3, 11);
    let permuted: Vec<[f64; 2]> = perm.iter().map(|&i| pts[i]).collect();
    let out_p = model.mlp_velocity(&domain, &flat(&permuted), 0.4).unwrap();
    for (k, &i) in perm.iter().enumerate() {
        for a in 0..2 {
            assert_eq!(out_p.get(&[k, a]).to_bits(), out.get(&[i, a]).to_bits());
        }
    }
}

#[test]
fn single_hidden_unit_by_hand() {
    let domain = Domain::unit(&[5, 5]).unwrap();
    let mut config = ModelConfig::new(
        ArchConfig::PointwiseMlp { hidden: vec![1], activation: Activation::Tanh, bias: true },
        2,
    );
    config.time_encoding_dims = 2;
    let model = init_model(&config, 0).unwrap();
    let mut p = ParamVector::new();
    p.push("layer0.weight", NdArray::new(vec![1, 4], vec![0.5, -0.25, 0.1, 0.2]).unwrap()).unwrap();
    p.push("layer0.bias", NdArray::from_vec(vec![0.05])).unwrap();
    p.push("layer1.weight", NdArray::new(vec![2, 1], vec![2.0, -3.0]).unwrap()).unwrap();
    p.push("layer1.bias", NdArray::from_vec(vec![0.1, 0.2])).unwrap();
    let model = model.with_params(p).unwrap();
    let (x, y, t) = (1.0, 3.0, 0.25);
    let v = model.mlp_velocity(&domain, &NdArray::new(vec![1, 2], vec![x, y]).unwrap(), t).unwrap();
    // coordinates normalized to [-1, 1] over extent 5
    let (xn, yn) = (x / 2.0 - 1.0, y / 2.0 - 1.0);
    let pi = std::f64::consts::PI;
    let h = (0.5 * xn - 0.25 * yn + 0.1 * (pi * t).sin() + 0.2 * (pi * t).cos() + 0.05).tanh();
    assert!((v.get(&[0, 0]) - (2.0 * h + 0.1)).abs() < 1e-14);
    assert!((v.get(&[0, 1]) - (-3.0 * h + 0.2)).abs() < 1e-14);
}

#[test]
fn linear_conv_config_responds_linearly_to_the_grid() {
    let domain = Domain::unit(&[8, 8]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let model = init_model(&conv_config(&[8, 8], Activation::Identity, false), 4).unwrap();
    let grid = NdArray::new(vec![2, 8, 8], (0..128).map(|_| rng.gen_range(0.0..7.0)).collect()).unwrap();
    let doubled = grid.map(|v| 2.0 * v);
    let zero = NdArray::zeros(&[2, 8, 8]);
    let f = |g: &NdArray| model.conv_velocity(&domain, g, 0.3).unwrap();
    // the coordinate normalization offset and time channels add a grid-independent term
    let (base, one, two) = (f(&zero), f(&grid), f(&doubled));
    for i in 0..base.len() {
        let lin1 = one.data()[i] - base.data()[i];
        let lin2 = two.data()[i] - base.data()[i];
        assert!((lin2 - 2.0 * lin1).abs() < 1e-15, "{lin2} vs {lin1}");
    }
}

#[test]
fn seeding_is_deterministic() {
    let c = ModelConfig::new(ArchConfig::default_mlp(), 2);
    assert_eq!(init_model(&c, 7).unwrap(), init_model(&c, 7).unwrap());
    assert_ne!(init_model(&c, 7).unwrap().params(), init_model(&c, 8).unwrap().params());
}

#[test]
fn conv_param_count_ignores_grid_size() {
    let a = init_model(&conv_config(&[64, 64], Activation::Tanh, true), 0).unwrap();
    let b = init_model(&conv_config(&[128, 128], Activation::Tanh, true), 0).unwrap();
    assert_eq!(a.param_count(), b.param_count());
    assert_eq!(a.params().layout(), b.params().layout());
}

#[test]
fn odd_grid_rejected_at_construction() {
    assert!(init_model(&conv_config(&[15, 16], Activation::Tanh, true), 0).is_err());
}

#[test]
fn arch_mismatch_is_an_error() {
    let domain = Domain::unit(&[8, 8]).unwrap();
    let mlp = init_model(&ModelConfig::new(ArchConfig::default_mlp(), 2), 0).unwrap();
    assert!(mlp.conv_velocity(&domain, &domain.identity_grid(), 0.0).is_err());
    let conv = init_model(&conv_config(&[8, 8], Activation::Tanh, true), 0).unwrap();
    assert!(conv.mlp_velocity(&domain, &NdArray::zeros(&[3, 2]), 0.0).is_err());
    let bad = NdArray::new(vec![1, 2], vec![f64::NAN, 0.0]).unwrap();
    assert!(mlp.mlp_velocity(&domain, &bad, 0.0).is_err());
}

#[test]
fn checkpoint_round_trip() {
    let model = init_model(&conv_config(&[8, 8], Activation::Relu, true), 12).unwrap();
    let bytes = encode_model(&model).unwrap();
    assert_eq!(&bytes[..4], b"SQFM");
    let back = decode_model(&bytes).unwrap();
    assert_eq!(back, model);
    assert!(decode_model(&bytes[..bytes.len() - 3]).is_err());
}
