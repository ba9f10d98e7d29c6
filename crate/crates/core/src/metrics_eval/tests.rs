use super::*;
use crate::objective::{DeformationField, LabelMask};
use crate::ode_flow::Domain;

fn square(shape: &[usize], lo: [usize; 2], hi: [usize; 2]) -> Vec<bool> {
    let mut m = vec![false; shape[0] * shape[1]];
    for x in lo[0]..hi[0] {
        for y in lo[1]..hi[1] {
            m[x * shape[1] + y] = true;
        }
    }
    m
}

fn scaled_field(domain: &Domain, s: f64) -> DeformationField {
    let id = domain.identity_grid();
    DeformationField::new(domain.clone(), id.map(|v| s * v)).unwrap()
}

#[test]
fn dice_examples() {
    let shape = [20, 20];
    let a = square(&shape, [2, 2], [12, 12]);
    assert_eq!(dice_binary(&a, &a).unwrap(), 1.0);
    let far = square(&shape, [14, 14], [18, 18]);
    assert_eq!(dice_binary(&a, &far).unwrap(), 0.0);
    let shifted = square(&shape, [7, 2], [17, 12]);
    assert_eq!(dice_binary(&a, &shifted).unwrap(), 0.5);
    assert_eq!(dice_binary(&shifted, &a).unwrap(), 0.5);
    assert_eq!(dice_binary(&[false; 4], &[false; 4]).unwrap(), 1.0);
    let d = Domain::unit(&[4, 4]).unwrap();
    let e = Domain::unit(&[4, 5]).unwrap();
    let ma = LabelMask::new(d, vec![1; 16]).unwrap();
    let mb = LabelMask::new(e, vec![1; 20]).unwrap();
    assert!(dice(&ma, &mb, 1).is_err());
}

#[test]
fn contour_distance_examples() {
    let shape = [20, 20];
    let a = square(&shape, [5, 5], [15, 15]);
    assert_eq!(mean_contour_distance(&a, &a, &shape, &[1.0, 1.0]).unwrap(), 0.0);
    let b = square(&shape, [3, 3], [17, 17]);
    // inner to outer: every inner boundary voxel is 2 from the outer one
    assert_eq!(directed_contour_distance(&a, &b, &shape, &[1.0, 1.0]).unwrap(), 2.0);
    // outer to inner: 40 side voxels at 2, 4 corners at 2*sqrt(2), 8 next-to-corner at sqrt(5)
    let back = (40.0 * 2.0 + 4.0 * 8f64.sqrt() + 8.0 * 5f64.sqrt()) / 52.0;
    assert!((directed_contour_distance(&b, &a, &shape, &[1.0, 1.0]).unwrap() - back).abs() < 1e-12);
    let sym = mean_contour_distance(&a, &b, &shape, &[1.0, 1.0]).unwrap();
    assert!((sym - 0.5 * (2.0 + back)).abs() < 1e-12);
    let scaled = mean_contour_distance(&a, &b, &shape, &[1.8, 1.8]).unwrap();
    assert!((scaled - 1.8 * sym).abs() < 1e-12);
    assert!(mean_contour_distance(&a, &vec![false; 400], &shape, &[1.0, 1.0]).is_err());
}

#[test]
fn grid_edges_count_as_background() {
    let shape = [4, 4];
    let full = vec![true; 16];
    assert_eq!(boundary_voxels(&full, &shape).len(), 12);
}

#[test]
fn jacobian_metrics() {
    let domain = Domain::unit(&[10, 10]).unwrap();
    let all = vec![true; 100];
    let id = DeformationField::identity(&domain);
    assert_eq!(jac_volume_deviation(&id, &all).unwrap(), 0.0);
    assert_eq!(neg_jac_fraction(&id).unwrap(), 0.0);
    assert!((jac_volume_deviation(&scaled_field(&domain, 1.1), &all).unwrap() - 0.21).abs() < 1e-10);
    assert!((jac_volume_deviation(&scaled_field(&domain, 0.8), &all).unwrap() - 0.36).abs() < 1e-10);
    assert!(jac_volume_deviation(&id, &[false; 100]).is_err());
    let t = DeformationField::translation(&domain, &[0.7, -2.0]).unwrap();
    assert!(jac_volume_deviation(&t, &all).unwrap() < 1e-12);
}

#[test]
fn one_flipped_cell_in_a_hundred() {
    let domain = Domain::unit(&[10, 10]).unwrap();
    let mut m = domain.identity_grid();
    // swapping the x targets of (4, 5) and (6, 5) reverses d phi_x / dx at (5, 5) only
    m.set(&[0, 4, 5], 6.0);
    m.set(&[0, 6, 5], 4.0);
    let field = DeformationField::new(domain, m).unwrap();
    let det = crate::objective::jdet_grid(&field).unwrap();
    let flipped: Vec<usize> = (0..100).filter(|&i| det.data()[i] <= 0.0).collect();
    assert_eq!(flipped, vec![55]);
    assert_eq!(neg_jac_fraction(&field).unwrap(), 0.01);
}

#[test]
fn fit_examples() {
    let t = [0.0, 0.5, 1.0, 2.0];
    let f = volume_trajectory_fit(&[10.0, 9.85, 9.7, 9.4], &t).unwrap();
    assert!((f.r.abs() - 1.0).abs() < 1e-12);
    assert!(f.residual_variance < 1e-28);
    assert!((f.slope + 0.03).abs() < 1e-12);
    let c = volume_trajectory_fit(&[5.0; 4], &t).unwrap();
    assert_eq!((c.slope, c.r, c.degenerate), (0.0, 0.0, true));
    assert!(volume_trajectory_fit(&[1.0, 0.9], &[0.0, 1.0]).is_err());
}

#[test]
fn fit_matches_normal_equations() {
    let v = [1.0, 0.985, 0.97, 0.955, 0.94];
    let t = [0.0, 0.25, 0.5, 1.0, 2.0];
    // solve [n, sum t; sum t, sum t^2] [b; m] = [sum y; sum t y] by Cramer's rule
    let n = 5.0;
    let st: f64 = t.iter().sum();
    let stt: f64 = t.iter().map(|x| x * x).sum();
    let sy: f64 = v.iter().sum();
    let sty: f64 = t.iter().zip(&v).map(|(a, b)| a * b).sum();
    let det = n * stt - st * st;
    let m = (n * sty - st * sy) / det;
    let b = (stt * sy - st * sty) / det;
    let rss: f64 = t.iter().zip(&v).map(|(x, y)| (y - b - m * x).powi(2)).sum();
    let syy: f64 = v.iter().map(|y| (y - sy / n).powi(2)).sum();
    let r = -(1.0 - rss / syy).sqrt();
    let f = volume_trajectory_fit(&v, &t).unwrap();
    assert!((f.slope - m).abs() < 1e-12);
    assert!((f.intercept - b).abs() < 1e-12);
    assert!((f.residual_variance - rss / 3.0).abs() < 1e-14);
    assert!((f.r - r).abs() < 1e-10);
}

#[test]
fn fit_r_ignores_volume_scale() {
    let v = [3.0, 2.9, 2.95, 2.7, 2.6];
    let t = [0.0, 0.25, 0.5, 1.0, 2.0];
    let a = volume_trajectory_fit(&v, &t).unwrap();
    let b = volume_trajectory_fit(&v.map(|x| 7.5 * x), &t).unwrap();
    assert!((a.r - b.r).abs() < 1e-12);
    assert!((a.slope - b.slope).abs() < 1e-12);
}

#[test]
fn jacobian_volume_of_uniform_scaling() {
    let domain = Domain::unit(&[12, 12]).unwrap();
    let field = scaled_field(&domain, 1.05);
    let v = jacobian_volume(&field, &[true; 144], 100.0).unwrap();
    assert!((v - 100.0 / 1.1025).abs() < 1e-9);
}

#[test]
fn report_serialization() {
    let r = MetricsReport {
        dice: vec![(1, 0.9), (2, 0.8)],
        mcd: vec![(1, 1.5)],
        neg_jac_fraction: Some(0.0),
        volume_fit: Some(VolumeFit { slope: -0.03, intercept: 1.0, r: -0.99, residual_variance: 1e-5, degenerate: false }),
        ..Default::default()
    };
    let kv = r.to_kv();
    assert!(kv.contains("dice.1=0.9\n") && kv.contains("mcd.1=1.5\n") && kv.contains("fit.r=-0.99\n"));
    let row = r.csv_row();
    assert_eq!(row.split(',').count(), CSV_COLUMNS.len());
    let cells: Vec<&str> = row.split(',').collect();
    assert!((cells[0].parse::<f64>().unwrap() - 0.85).abs() < 1e-12);
    assert_eq!(&cells[1..5], &["1.5", "", "0", ""]);
    assert_eq!(cells[9], "false");
    assert_eq!(MetricsReport::csv_header().split(',').count(), CSV_COLUMNS.len());
}
