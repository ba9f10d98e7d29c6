use std::f64::consts::PI;

use rand::Rng;

use super::{build_field, check_noise, noisy_image, render, rng_for, smooth_step, PhantomSequence};
use crate::error::{Error, Result};
use crate::objective::LabelMask;
use crate::ode_flow::Domain;

/// Width of the tanh intensity edges, in voxels.
pub const EDGE_WIDTH: f64 = 2.0;

/// Relative intensity dip of the concentric rings inside the blob.
const RING_DEPTH: f64 = 0.5;

fn radius(x: &[f64], c: f64) -> f64 {
    x.iter().map(|v| (v - c).powi(2)).sum::<f64>().sqrt()
}

fn radial(x: &[f64], c: f64, factor: f64) -> Vec<f64> {
    x.iter().map(|v| c + (v - c) * factor).collect()
}

/// Solves `r (1 + s g(r)) = target` for `r` by bisection; the left side is
/// increasing for the maps used here.
pub(crate) fn invert_radial(target: f64, s: f64, g: impl Fn(f64) -> f64) -> f64 {
    let (mut lo, mut hi) = (0.0, target.max(1.0) * 4.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid * (1.0 + s * g(mid)) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// A 2-D ring (label 1) around a cavity (label 2) that contracts over
/// `frames` frames following a half cosine. Frame times are `0, 1, ...`.
pub fn contracting_annulus(size: usize, frames: usize, amplitude: f64, noise_sd: f64, seed: u64) -> Result<PhantomSequence> {
    if frames < 2 {
        return Err(Error::Precondition(format!("need at least 2 frames, got {frames}")));
    }
    if !(0.0..0.5).contains(&amplitude) {
        return Err(Error::Precondition(format!("amplitude must lie in [0, 0.5), got {amplitude}")));
    }
    if size < 16 {
        return Err(Error::Precondition(format!("annulus needs size >= 16, got {size}")));
    }
    check_noise(noise_sd)?;
    let domain = Domain::unit(&[size, size])?;
    let n = size as f64;
    let c = (n - 1.0) / 2.0;
    let (r_in, r_out) = (0.18 * n, 0.32 * n);
    let rho = r_out;
    let g = move |r: f64| (-r * r / (2.0 * rho * rho)).exp();
    // cavity 0.5, ring 1.0, background 0.0
    let intensity = move |r: f64| 0.5 + 0.5 * smooth_step(r - r_in) - smooth_step(r - r_out);
    let label = move |r: f64| if r < r_in { 2 } else if r < r_out { 1 } else { 0 };
    let mut rng = rng_for(seed);
    let mut seq = PhantomSequence { frames: vec![], true_fields: vec![], masks: vec![], physical_times: vec![], true_volumes: vec![] };
    for i in 0..frames {
        let phase = 0.5 * (1.0 - (PI * i as f64 / (frames - 1) as f64).cos());
        let s = amplitude * phase;
        let field = build_field(&domain, |x| radial(x, c, 1.0 + s * g(radius(x, c))))?;
        let values = render(&field, |y| intensity(radius(y, c)));
        let labels = render(&field, |y| label(radius(y, c)) as f64).into_iter().map(|v| v as u32).collect();
        let (a, b) = (invert_radial(r_in, s, g), invert_radial(r_out, s, g));
        seq.frames.push(noisy_image(&domain, values, noise_sd, &mut rng)?);
        seq.masks.push(LabelMask::new(domain.clone(), labels)?);
        seq.true_fields.push(field);
        seq.physical_times.push(i as f64);
        seq.true_volumes.push(PI * (b * b - a * a));
    }
    Ok(seq)
}

/// A smooth 2-D or 3-D blob (label 1) with concentric intensity rings whose
/// volume shrinks linearly in time, `V(t) = V0 (1 - annual_rate t)`, with
/// `times` in years starting at 0.
pub fn atrophying_blob(shape: &[usize], times: &[f64], annual_rate: f64, noise_sd: f64, seed: u64) -> Result<PhantomSequence> {
    if !(annual_rate > 0.0 && annual_rate < 0.2) {
        return Err(Error::Precondition(format!("annual_rate must lie in (0, 0.2), got {annual_rate}")));
    }
    if !(2..=3).contains(&shape.len()) {
        return Err(Error::Precondition(format!("blob phantom is 2-D or 3-D, got shape {shape:?}")));
    }
    if times.len() < 2 || times[0] != 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Precondition(format!("times must start at 0 and increase: {times:?}")));
    }
    if 1.0 - annual_rate * times[times.len() - 1] <= 0.0 {
        return Err(Error::Precondition("volume would vanish within the time span".into()));
    }
    check_noise(noise_sd)?;
    let min = *shape.iter().min().unwrap();
    if min < 16 || shape.iter().any(|&s| s != min) {
        return Err(Error::Precondition(format!("blob phantom needs a cubic grid of extent >= 16, got {shape:?}")));
    }
    let domain = Domain::unit(shape)?;
    let d = shape.len() as f64;
    let n = min as f64;
    let c = (n - 1.0) / 2.0;
    let r0 = 0.3 * n;
    let (plateau, taper) = (1.1 * r0, 0.15 * n);
    let ring_period = r0 / 3.0;
    let g = move |r: f64| {
        if r <= plateau {
            1.0
        } else if r < plateau + taper {
            0.5 * (1.0 + (PI * (r - plateau) / taper).cos())
        } else {
            0.0
        }
    };
    let unit_ball = if shape.len() == 2 { PI } else { 4.0 / 3.0 * PI };
    let v0 = unit_ball * r0.powf(d) * domain.voxel_volume();
    let mut rng = rng_for(seed);
    let mut seq = PhantomSequence { frames: vec![], true_fields: vec![], masks: vec![], physical_times: vec![], true_volumes: vec![] };
    for &t in times {
        let fraction = 1.0 - annual_rate * t;
        let beta = 1.0 / fraction.powf(1.0 / d) - 1.0;
        let field = build_field(&domain, |x| radial(x, c, 1.0 + beta * g(radius(x, c))))?;
        let values = render(&field, |y| {
            let r = radius(y, c);
            smooth_step(r0 - r) * (1.0 - RING_DEPTH * (0.5 - 0.5 * (2.0 * PI * r / ring_period).cos()))
        });
        let labels = render(&field, |y| f64::from(u8::from(radius(y, c) < r0))).into_iter().map(|v| v as u32).collect();
        seq.frames.push(noisy_image(&domain, values, noise_sd, &mut rng)?);
        seq.masks.push(LabelMask::new(domain.clone(), labels)?);
        seq.true_fields.push(field);
        seq.physical_times.push(t);
        seq.true_volumes.push(v0 * fraction);
    }
    Ok(seq)
}

/// A textured 2-D image and its copy translated so that the true field is
/// `Id + shift`. Label 1 is a disk around the image centre.
pub fn translated_pair(size: usize, shift: [f64; 2], noise_sd: f64, seed: u64) -> Result<PhantomSequence> {
    if size < 8 {
        return Err(Error::Precondition(format!("translated pair needs size >= 8, got {size}")));
    }
    if shift.iter().any(|s| !(s.abs() <= size as f64 / 4.0)) {
        return Err(Error::Precondition(format!("shift {shift:?} exceeds a quarter of the size {size}")));
    }
    check_noise(noise_sd)?;
    let domain = Domain::unit(&[size, size])?;
    let n = size as f64;
    let c = (n - 1.0) / 2.0;
    let mut rng = rng_for(seed);
    // (amplitude, centre, sigma) of the texture blobs
    let mut blobs = vec![(1.0, [c, c], n / 8.0)];
    for _ in 0..40 {
        let amp = rng.gen_range(0.3..0.8) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let centre = [rng.gen_range(0.0..n), rng.gen_range(0.0..n)];
        blobs.push((amp, centre, rng.gen_range(n / 24.0..n / 12.0)));
    }
    let waves: Vec<(f64, f64)> = (0..2).map(|_| (rng.gen_range(n / 5.0..n / 3.0), rng.gen_range(0.0..2.0 * PI))).collect();
    let hi = n - 1.0;
    // positions are clamped to the grid, matching the border rule of the warp
    let texture = move |y: &[f64]| -> f64 {
        let (u, v) = (y[0].clamp(0.0, hi), y[1].clamp(0.0, hi));
        let t: f64 = blobs
            .iter()
            .map(|(a, m, s)| a * (-((u - m[0]).powi(2) + (v - m[1]).powi(2)) / (2.0 * s * s)).exp())
            .sum();
        t + 0.3 * (2.0 * PI * u / waves[0].0 + waves[0].1).sin() * (2.0 * PI * v / waves[1].0 + waves[1].1).sin()
    };
    let r_mask = n / 6.0;
    let mut seq = PhantomSequence { frames: vec![], true_fields: vec![], masks: vec![], physical_times: vec![], true_volumes: vec![] };
    for (i, s) in [[0.0, 0.0], shift].iter().enumerate() {
        let field = build_field(&domain, |x| vec![x[0] + s[0], x[1] + s[1]])?;
        let values = render(&field, &texture);
        let labels = render(&field, |y| f64::from(u8::from(radius(y, c) < r_mask))).into_iter().map(|v| v as u32).collect();
        seq.frames.push(noisy_image(&domain, values, noise_sd, &mut rng)?);
        seq.masks.push(LabelMask::new(domain.clone(), labels)?);
        seq.true_fields.push(field);
        seq.physical_times.push(i as f64);
        seq.true_volumes.push(PI * r_mask * r_mask);
    }
    Ok(seq)
}
