use std::rc::Rc;

use super::ImageVolume;
use crate::diffcore::{Boundary, Graph, NdArray, Var};
use crate::error::{Error, Result};

/// Denominator floor inside the square root.
pub const NCC_EPS: f64 = 1e-5;

fn check_window(w: usize, shape: &[usize]) -> Result<()> {
    if w % 2 == 0 {
        return Err(Error::Precondition(format!("NCC window must be odd, got {w}")));
    }
    if shape.iter().any(|&n| w > n) {
        return Err(Error::Precondition(format!("NCC window {w} exceeds grid {shape:?}")));
    }
    Ok(())
}

/// Records the mean windowed NCC of two images of identical shape.
///
/// Window sums run over the in-domain part of each `w`-wide box, and the
/// local means divide by the in-domain voxel count.
pub fn ncc_var(g: &mut Graph, i: Var, j: Var, w: usize) -> Result<Var> {
    let shape = g.shape(i).to_vec();
    if g.shape(j) != shape.as_slice() {
        return Err(Error::shape("local_ncc", format!("{:?} vs {:?}", shape, g.shape(j))));
    }
    check_window(w, &shape)?;
    let taps = Rc::new(vec![vec![1.0; w]; shape.len()]);
    let mut counts = NdArray::full(&shape, 1.0).into_data();
    for a in 0..shape.len() {
        counts = crate::diffcore::kernels::filter_axis(&counts, &shape, a, &taps[a], Boundary::Zero);
    }
    let inv_n = g.constant(NdArray::new(shape.clone(), counts.iter().map(|c| 1.0 / c).collect())?)?;
    let boxed = |g: &mut Graph, x: Var| g.filter(x, 0, taps.clone(), Boundary::Zero);
    let ii = g.mul(i, i)?;
    let jj = g.mul(j, j)?;
    let ij = g.mul(i, j)?;
    let si = boxed(g, i)?;
    let sj = boxed(g, j)?;
    let sii = boxed(g, ii)?;
    let sjj = boxed(g, jj)?;
    let sij = boxed(g, ij)?;
    let centered = |g: &mut Graph, sxy: Var, sx: Var, sy: Var| -> Result<Var> {
        let p = g.mul(sx, sy)?;
        let p = g.mul(p, inv_n)?;
        g.sub(sxy, p)
    };
    let cross = centered(g, sij, si, sj)?;
    let var_i = centered(g, sii, si, si)?;
    let var_j = centered(g, sjj, sj, sj)?;
    let den = g.mul(var_i, var_j)?;
    let den = g.offset(den, NCC_EPS)?;
    let den = g.sqrt(den)?;
    let cc = g.div(cross, den)?;
    g.mean(cc)
}

/// Mean windowed normalized cross correlation of two images, in `[-1, 1]`.
pub fn local_ncc(i: &ImageVolume, j: &ImageVolume, w: usize) -> Result<f64> {
    i.domain().check_same(j.domain(), "local_ncc")?;
    let mut g = Graph::new();
    let a = g.constant(i.intensities().clone())?;
    let b = g.constant(j.intensities().clone())?;
    let v = ncc_var(&mut g, a, b, w)?;
    Ok(g.scalar(v))
}
