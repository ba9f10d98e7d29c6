use super::*;
use crate::diffcore::{NdArray, ParamVector};
use crate::error::Error;
use crate::objective::{DeformationField, ImageVolume, LabelMask, LossBreakdown};
use crate::ode_flow::{Domain, Trajectory};
use crate::phantoms::translated_pair;

fn breakdown(total: f64) -> LossBreakdown {
    LossBreakdown { total, sim: total, jdet: 0.0, mag: 0.0, smt: 0.0, boundary: 0.0 }
}

fn bowl_params() -> ParamVector {
    let mut p = ParamVector::new();
    p.push("theta", NdArray::from_vec(vec![0.0, 0.0, 0.0])).unwrap();
    p
}

fn bowl(target: &[f64]) -> impl FnMut(&ParamVector) -> crate::error::Result<(LossBreakdown, ParamVector)> + '_ {
    move |p: &ParamVector| {
        let theta = p.flatten();
        let loss: f64 = theta.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum();
        let grad: Vec<f64> = theta.iter().zip(target).map(|(a, b)| 2.0 * (a - b)).collect();
        Ok((breakdown(loss), p.with_flat(&grad)?))
    }
}

fn small_config(iterations: usize) -> RegistrationConfig {
    RegistrationConfig { iterations, ..Default::default() }
}

fn trajectory(domain: &Domain, fields: Vec<DeformationField>) -> Trajectory {
    let times = (1..=fields.len()).map(|i| i as f64).collect();
    Trajectory {
        domain: domain.clone(),
        times,
        steps_per_segment: vec![1; fields.len()],
        fields: fields.into_iter().map(DeformationField::into_mapping).collect(),
        intermediate_states: None,
    }
}

fn square_mask(domain: &Domain, lo: usize, hi: usize) -> LabelMask {
    let n = domain.shape()[1];
    let labels = (0..domain.voxel_count())
        .map(|p| {
            let (x, y) = (p / n, p % n);
            let inside = (lo..hi).contains(&x) && (lo..hi).contains(&y);
            if !inside {
                0
            } else if x < (lo + hi) / 2 {
                1
            } else {
                2
            }
        })
        .collect();
    LabelMask::new(domain.clone(), labels).unwrap()
}

fn interior_mean(field: &DeformationField, margin: usize) -> f64 {
    let n = field.domain().shape();
    let norms = field.displacement_norms();
    let mut sum = 0.0;
    let mut count = 0;
    for (p, v) in norms.iter().enumerate() {
        let (x, y) = (p / n[1], p % n[1]);
        if x >= margin && y >= margin && x + margin < n[0] && y + margin < n[1] {
            sum += v;
            count += 1;
        }
    }
    sum / count as f64
}

#[test]
fn quadratic_bowl_converges() {
    let target = [0.7, -1.3, 2.0];
    let out = optimize(bowl(&target), &bowl_params(), 200, 0.1, OptimizerKind::Adam).unwrap();
    assert_eq!(out.history.len(), 200);
    let final_loss: f64 = out.params.flatten().iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum();
    assert!(final_loss < 1e-6, "{final_loss}");
}

#[test]
fn sgd_bowl_converges() {
    let target = [0.5, 0.25, -1.0];
    let out = optimize(bowl(&target), &bowl_params(), 200, 0.1, OptimizerKind::Sgd).unwrap();
    assert!(out.history[out.best_iteration].total < 1e-12);
}

#[test]
fn best_iteration_holds_lowest_loss() {
    let target = [3.0, 3.0, 3.0];
    let out = optimize(bowl(&target), &bowl_params(), 50, 0.5, OptimizerKind::Adam).unwrap();
    let min = out.history.iter().map(|l| l.total).fold(f64::INFINITY, f64::min);
    assert_eq!(out.history[out.best_iteration].total, min);
}

#[test]
fn bad_learning_rate_rejected() {
    let target = [0.0; 3];
    for lr in [0.0, -1e-3, f64::NAN] {
        let err = optimize(bowl(&target), &bowl_params(), 10, lr, OptimizerKind::Adam).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
    }
    assert!(optimize(bowl(&target), &bowl_params(), 0, 0.1, OptimizerKind::Adam).is_err());
}

#[test]
fn non_finite_loss_reports_iteration() {
    let mut calls = 0;
    let f = |p: &ParamVector| {
        calls += 1;
        let total = if calls == 4 { f64::NAN } else { 1.0 };
        Ok((breakdown(total), p.zeros_like()))
    };
    let err = optimize(f, &bowl_params(), 10, 0.1, OptimizerKind::Adam).unwrap_err();
    assert!(matches!(err, Error::NonFiniteLoss { iteration: 3 }), "{err}");
}

#[test]
fn registration_is_deterministic() {
    let pair = translated_pair(16, [1.0, 0.0], 0.05, 4).unwrap();
    let cfg = small_config(15);
    let a = register_pair(&pair.frames[0], &pair.frames[1], &cfg).unwrap();
    let b = register_pair(&pair.frames[0], &pair.frames[1], &cfg).unwrap();
    let ta: Vec<f64> = a.loss_history.iter().map(|l| l.total).collect();
    let tb: Vec<f64> = b.loss_history.iter().map(|l| l.total).collect();
    assert_eq!(ta, tb);
    assert_eq!(a.trajectory.fields, b.trajectory.fields);
}

#[test]
fn history_and_checkpoint_times() {
    let pair = translated_pair(16, [1.0, 0.0], 0.0, 1).unwrap();
    let f = &pair.frames[1];
    let spec = SequenceSpec::new(pair.frames[0].clone(), vec![(f.clone(), 0.5), (f.clone(), 2.0)], None).unwrap();
    let r = register_sequence(&spec, &small_config(7)).unwrap();
    assert_eq!(r.loss_history.len(), 7);
    assert_eq!(r.trajectory.times, vec![0.5, 2.0]);
    assert_eq!(r.final_model.param_count(), r.final_model.params().total_count());
}

#[test]
fn self_registration_stays_at_identity() {
    let pair = translated_pair(32, [0.0, 0.0], 0.05, 2).unwrap();
    let r = register_pair(&pair.frames[0], &pair.frames[0], &small_config(60)).unwrap();
    let field = r.final_field().unwrap();
    assert!(field.mean_displacement() < 0.05, "{}", field.mean_displacement());
}

#[test]
fn identical_frames_keep_every_checkpoint_near_identity() {
    let pair = translated_pair(16, [0.0, 0.0], 0.05, 3).unwrap();
    let img = pair.frames[0].clone();
    let frames = vec![(img.clone(), 1.0), (img.clone(), 2.0), (img.clone(), 3.0)];
    let spec = SequenceSpec::new(img, frames, None).unwrap();
    let r = register_sequence(&spec, &small_config(40)).unwrap();
    for f in &r.trajectory.fields {
        let field = DeformationField::new(spec.domain().clone(), f.clone()).unwrap();
        assert!(field.mean_displacement() < 0.05);
    }
}

#[test]
fn mismatched_domains_rejected() {
    let a = translated_pair(16, [0.0, 0.0], 0.0, 0).unwrap();
    let b = translated_pair(20, [0.0, 0.0], 0.0, 0).unwrap();
    assert!(register_pair(&a.frames[0], &b.frames[0], &small_config(2)).is_err());
}

#[test]
fn inconsistent_times_rejected() {
    let p = translated_pair(16, [0.0, 0.0], 0.0, 0).unwrap();
    let img = p.frames[0].clone();
    for times in [[1.0, 1.0], [2.0, 1.0], [0.0, 1.0], [1.0, f64::NAN]] {
        let frames = vec![(img.clone(), times[0]), (img.clone(), times[1])];
        let spec = SequenceSpec::new(img.clone(), frames, None);
        let failed = spec.and_then(|s| register_sequence(&s, &small_config(2))).is_err();
        assert!(failed, "{times:?}");
    }
}

#[test]
fn pairwise_chain_uses_one_model_per_frame() {
    let p = translated_pair(16, [1.0, 0.0], 0.0, 0).unwrap();
    let img = p.frames[0].clone();
    let frames = vec![(p.frames[1].clone(), 1.0), (img.clone(), 2.0), (p.frames[1].clone(), 3.0)];
    let spec = SequenceSpec::new(img, frames, None).unwrap();
    let cfg = small_config(2);
    let seq = register_sequence(&spec, &cfg).unwrap();
    let chain = register_pairwise_chain(&spec, &cfg).unwrap();
    assert_eq!(chain.fields.len(), 3);
    assert_eq!(chain.total_param_count(), 3 * seq.final_model.param_count());
    let base = register_pairwise_to_baseline(&spec, &cfg).unwrap();
    assert_eq!(base.fields.len(), 3);
}

#[test]
fn config_rejects_unknown_keys() {
    assert!(RegistrationConfig::from_json(r#"{"iterations": 5}"#).is_ok());
    assert!(RegistrationConfig::from_json(r#"{"iteratoins": 5}"#).is_err());
    assert!(RegistrationConfig::from_json(r#"{"learning_rate": -1.0}"#).is_err());
}

#[test]
fn propagate_through_identity_is_exact() {
    let domain = Domain::unit(&[12, 12]).unwrap();
    let seg = square_mask(&domain, 3, 9);
    let traj = trajectory(&domain, vec![DeformationField::identity(&domain); 3]);
    for out in propagate_labels(&seg, &traj).unwrap() {
        assert_eq!(out, seg);
    }
    for out in propagate_binary_linear(&seg, 2, &traj).unwrap() {
        assert_eq!(out.select(2), seg.select(2));
    }
}

#[test]
fn propagate_through_translation_shifts_mask() {
    let domain = Domain::unit(&[16, 16]).unwrap();
    let seg = square_mask(&domain, 4, 10);
    let shifts = [[1.0, 0.0], [-2.0, 3.0]];
    let fields = shifts.iter().map(|s| DeformationField::translation(&domain, s).unwrap()).collect();
    let out = propagate_labels(&seg, &trajectory(&domain, fields)).unwrap();
    for (mask, s) in out.iter().zip(&shifts) {
        for x in 0..16 {
            for y in 0..16 {
                let sx = (x as f64 + s[0]).clamp(0.0, 15.0) as usize;
                let sy = (y as f64 + s[1]).clamp(0.0, 15.0) as usize;
                assert_eq!(mask.labels()[x * 16 + y], seg.labels()[sx * 16 + sy]);
            }
        }
        assert_eq!(mask.count(1) + mask.count(2), seg.count(1) + seg.count(2));
        assert!(mask.label_set().iter().all(|l| seg.label_set().contains(l)));
    }
}

#[test]
fn propagate_rejects_other_domain() {
    let domain = Domain::unit(&[12, 12]).unwrap();
    let other = Domain::unit(&[10, 12]).unwrap();
    let traj = trajectory(&other, vec![DeformationField::identity(&other)]);
    assert!(propagate_labels(&square_mask(&domain, 2, 6), &traj).is_err());
}

#[test]
fn compose_with_identity_is_unchanged() {
    let domain = Domain::unit(&[10, 10]).unwrap();
    let shrink: Vec<f64> = domain.identity_grid().data().iter().map(|v| 4.5 + 0.8 * (v - 4.5) + 0.3).collect();
    let f = DeformationField::new(domain.clone(), NdArray::new(domain.field_shape(), shrink).unwrap()).unwrap();
    let id = DeformationField::identity(&domain);
    let a = compose_pairwise(&[f.clone(), id.clone()]).unwrap();
    let b = compose_pairwise(&[id, f.clone()]).unwrap();
    assert!(a.mapping().max_abs_diff(f.mapping()) < 1e-12);
    assert!(b.mapping().max_abs_diff(f.mapping()) < 1e-12);
    assert!(compose_pairwise(&[]).is_err());
}

#[test]
fn translations_add_in_interior() {
    let domain = Domain::unit(&[12, 12]).unwrap();
    let a = DeformationField::translation(&domain, &[1.0, 0.0]).unwrap();
    let b = DeformationField::translation(&domain, &[0.0, 2.0]).unwrap();
    let c = compose_pairwise(&[a, b]).unwrap();
    let disp = c.displacement();
    let m = domain.voxel_count();
    for x in 0..10 {
        for y in 0..10 {
            let p = x * 12 + y;
            assert!((disp.data()[p] - 1.0).abs() < 1e-12);
            assert!((disp.data()[m + p] - 2.0).abs() < 1e-12);
        }
    }
}

#[test]
fn compose_with_numerical_inverse_is_near_identity() {
    let n = 24;
    let domain = Domain::unit(&[n, n]).unwrap();
    let c = (n as f64 - 1.0) / 2.0;
    let u = |x: f64, y: f64| {
        let g = 1.5 * (-((x - c).powi(2) + (y - c).powi(2)) / 40.0).exp();
        [g * (y - c) / 6.0, -g * (x - c) / 8.0]
    };
    let m = n * n;
    let mut fwd = vec![0.0; 2 * m];
    let mut inv = vec![0.0; 2 * m];
    for p in 0..m {
        let (x, y) = ((p / n) as f64, (p % n) as f64);
        let d = u(x, y);
        fwd[p] = x + d[0];
        fwd[m + p] = y + d[1];
        let mut q = [x, y];
        for _ in 0..100 {
            let d = u(q[0], q[1]);
            q = [x - d[0], y - d[1]];
        }
        inv[p] = q[0];
        inv[m + p] = q[1];
    }
    let fwd = DeformationField::new(domain.clone(), NdArray::new(domain.field_shape(), fwd).unwrap()).unwrap();
    let inv = DeformationField::new(domain.clone(), NdArray::new(domain.field_shape(), inv).unwrap()).unwrap();
    assert!(interior_mean(&fwd, 4) > 0.3);
    let composed = compose_pairwise(&[fwd, inv]).unwrap();
    let err = interior_mean(&composed, 4);
    assert!(err < 0.1, "{err}");
}

#[test]
fn image_volume_round_trip_through_spec() {
    let p = translated_pair(16, [0.0, 0.0], 0.0, 0).unwrap();
    let img: ImageVolume = p.frames[0].clone();
    let spec = SequenceSpec::new(img.clone(), vec![(img, 1.0)], None).unwrap();
    assert_eq!(spec.times(), vec![1.0]);
    assert!(spec.schedule(&RegistrationConfig::default()).is_ok());
}
