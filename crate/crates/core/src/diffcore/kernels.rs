//! Numeric kernels shared by the forward and backward passes of the graph ops.
//!
//! Everything here works on flat row-major slices; shapes are passed alongside.

/// Boundary rule for separable filters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Boundary {
    /// Mirror about the edge sample without repeating it (`c b | a b c`).
    Reflect,
    /// Samples outside the array contribute nothing.
    Zero,
}

#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub(crate) fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let j = i.rem_euclid(period);
    if j >= n as isize {
        (period - j) as usize
    } else {
        j as usize
    }
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let pre: usize = shape[..axis].iter().product();
    let post: usize = shape[axis + 1..].iter().product();
    (pre, shape[axis], post)
}

fn source_index(i: usize, k: usize, radius: usize, n: usize, boundary: Boundary) -> Option<usize> {
    let j = i as isize + k as isize - radius as isize;
    if j >= 0 && (j as usize) < n {
        return Some(j as usize);
    }
    match boundary {
        Boundary::Reflect => Some(reflect_index(j, n)),
        Boundary::Zero => None,
    }
}

/// `out[.., i, ..] = sum_k taps[k] * input[.., i + k - r, ..]` along `axis`.
pub fn filter_axis(input: &[f64], shape: &[usize], axis: usize, taps: &[f64], boundary: Boundary) -> Vec<f64> {
    let (pre, n, post) = split_axis(shape, axis);
    let radius = taps.len() / 2;
    let mut out = vec![0.0; input.len()];
    for p in 0..pre {
        for i in 0..n {
            let o = (p * n + i) * post;
            for (k, &t) in taps.iter().enumerate() {
                if let Some(j) = source_index(i, k, radius, n, boundary) {
                    let s = (p * n + j) * post;
                    axpy(t, &input[s..s + post], &mut out[o..o + post]);
                }
            }
        }
    }
    out
}

/// Adjoint of [`filter_axis`].
pub fn filter_axis_adjoint(grad: &[f64], shape: &[usize], axis: usize, taps: &[f64], boundary: Boundary) -> Vec<f64> {
    let (pre, n, post) = split_axis(shape, axis);
    let radius = taps.len() / 2;
    let mut out = vec![0.0; grad.len()];
    for p in 0..pre {
        for i in 0..n {
            let o = (p * n + i) * post;
            for (k, &t) in taps.iter().enumerate() {
                if let Some(j) = source_index(i, k, radius, n, boundary) {
                    let s = (p * n + j) * post;
                    let (src, dst) = (&grad[o..o + post], s);
                    for q in 0..post {
                        out[dst + q] += t * src[q];
                    }
                }
            }
        }
    }
    out
}

/// Finite difference along `axis`: central in the interior, one-sided on the two faces.
pub fn diff_axis(input: &[f64], shape: &[usize], axis: usize) -> Vec<f64> {
    let (pre, n, post) = split_axis(shape, axis);
    let mut out = vec![0.0; input.len()];
    for p in 0..pre {
        let base = p * n * post;
        let row = |i: usize| base + i * post;
        for q in 0..post {
            out[row(0) + q] = input[row(1) + q] - input[row(0) + q];
            out[row(n - 1) + q] = input[row(n - 1) + q] - input[row(n - 2) + q];
        }
        for i in 1..n - 1 {
            for q in 0..post {
                out[row(i) + q] = 0.5 * (input[row(i + 1) + q] - input[row(i - 1) + q]);
            }
        }
    }
    out
}

/// Adjoint of [`diff_axis`].
pub fn diff_axis_adjoint(grad: &[f64], shape: &[usize], axis: usize) -> Vec<f64> {
    let (pre, n, post) = split_axis(shape, axis);
    let mut out = vec![0.0; grad.len()];
    for p in 0..pre {
        let base = p * n * post;
        let row = |i: usize| base + i * post;
        for q in 0..post {
            let g0 = grad[row(0) + q];
            out[row(1) + q] += g0;
            out[row(0) + q] -= g0;
            let gn = grad[row(n - 1) + q];
            out[row(n - 1) + q] += gn;
            out[row(n - 2) + q] -= gn;
        }
        for i in 1..n - 1 {
            for q in 0..post {
                let g = 0.5 * grad[row(i) + q];
                out[row(i + 1) + q] += g;
                out[row(i - 1) + q] -= g;
            }
        }
    }
    out
}

/// `out[n, m] = b[n] + sum_k w[n, k] x[k, m]`.
pub fn dense(x: &[f64], k: usize, m: usize, w: &[f64], n: usize, b: Option<&[f64]>) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    for r in 0..n {
        let row = &mut out[r * m..(r + 1) * m];
        if let Some(b) = b {
            row.iter_mut().for_each(|v| *v = b[r]);
        }
        for c in 0..k {
            axpy(w[r * k + c], &x[c * m..(c + 1) * m], row);
        }
    }
    out
}

pub fn dense_grad_input(grad: &[f64], k: usize, m: usize, w: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * m];
    for r in 0..n {
        let g = &grad[r * m..(r + 1) * m];
        for c in 0..k {
            axpy(w[r * k + c], g, &mut out[c * m..(c + 1) * m]);
        }
    }
    out
}

pub fn dense_grad_weight(grad: &[f64], x: &[f64], k: usize, m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * k];
    for r in 0..n {
        let g = &grad[r * m..(r + 1) * m];
        for c in 0..k {
            out[r * k + c] = dot(g, &x[c * m..(c + 1) * m]);
        }
    }
    out
}

pub fn row_sums(grad: &[f64], n: usize, m: usize) -> Vec<f64> {
    (0..n).map(|r| grad[r * m..(r + 1) * m].iter().sum()).collect()
}

/// Contiguous runs `(out_offset, in_offset, len)` such that every spatial point `p`
/// covered satisfies `p` and `p + delta` inside `shape`.
pub(crate) fn shifted_runs(shape: &[usize], delta: &[isize]) -> Vec<(usize, usize, usize)> {
    let nd = shape.len();
    let mut lo = vec![0usize; nd];
    let mut hi = vec![0usize; nd];
    for a in 0..nd {
        let n = shape[a] as isize;
        let l = (-delta[a]).max(0);
        let h = (n - delta[a]).min(n);
        if h <= l {
            return Vec::new();
        }
        lo[a] = l as usize;
        hi[a] = h as usize;
    }
    let strides = super::array::strides_of(shape);
    let last = nd - 1;
    let len = hi[last] - lo[last];
    let mut runs = Vec::new();
    let mut idx: Vec<usize> = lo.clone();
    loop {
        let mut out_off = 0usize;
        let mut in_off = 0isize;
        for a in 0..nd {
            out_off += idx[a] * strides[a];
            in_off += (idx[a] as isize + delta[a]) * strides[a] as isize;
        }
        runs.push((out_off, in_off as usize, len));
        // advance outer axes
        let mut a = last;
        loop {
            if a == 0 {
                return runs;
            }
            a -= 1;
            idx[a] += 1;
            if idx[a] < hi[a] {
                break;
            }
            idx[a] = lo[a];
        }
    }
}

fn kernel_offsets(nd: usize, ksize: usize) -> Vec<Vec<isize>> {
    let r = (ksize / 2) as isize;
    let count = ksize.pow(nd as u32);
    (0..count)
        .map(|mut c| {
            let mut d = vec![0isize; nd];
            for a in (0..nd).rev() {
                d[a] = (c % ksize) as isize - r;
                c /= ksize;
            }
            d
        })
        .collect()
}

pub struct ConvShape<'a> {
    pub spatial: &'a [usize],
    pub cin: usize,
    pub cout: usize,
    pub ksize: usize,
}

impl ConvShape<'_> {
    fn plan(&self) -> Vec<Vec<(usize, usize, usize)>> {
        kernel_offsets(self.spatial.len(), self.ksize)
            .iter()
            .map(|d| shifted_runs(self.spatial, d))
            .collect()
    }
    fn taps(&self) -> usize {
        self.ksize.pow(self.spatial.len() as u32)
    }
}

/// Same-size convolution with zero padding, channel-first layout.
pub fn conv(x: &[f64], w: &[f64], b: Option<&[f64]>, s: &ConvShape) -> Vec<f64> {
    let m: usize = s.spatial.iter().product();
    let taps = s.taps();
    let plan = s.plan();
    let mut out = vec![0.0; s.cout * m];
    for co in 0..s.cout {
        let orow = &mut out[co * m..(co + 1) * m];
        if let Some(b) = b {
            orow.iter_mut().for_each(|v| *v = b[co]);
        }
        for ci in 0..s.cin {
            let xrow = &x[ci * m..(ci + 1) * m];
            for (t, runs) in plan.iter().enumerate() {
                let wv = w[(co * s.cin + ci) * taps + t];
                for &(o, i, len) in runs {
                    axpy(wv, &xrow[i..i + len], &mut orow[o..o + len]);
                }
            }
        }
    }
    out
}

pub fn conv_grad_input(grad: &[f64], w: &[f64], s: &ConvShape) -> Vec<f64> {
    let m: usize = s.spatial.iter().product();
    let taps = s.taps();
    let plan = s.plan();
    let mut out = vec![0.0; s.cin * m];
    for co in 0..s.cout {
        let grow = &grad[co * m..(co + 1) * m];
        for ci in 0..s.cin {
            let xrow = &mut out[ci * m..(ci + 1) * m];
            for (t, runs) in plan.iter().enumerate() {
                let wv = w[(co * s.cin + ci) * taps + t];
                for &(o, i, len) in runs {
                    axpy(wv, &grow[o..o + len], &mut xrow[i..i + len]);
                }
            }
        }
    }
    out
}

pub fn conv_grad_weight(grad: &[f64], x: &[f64], s: &ConvShape) -> Vec<f64> {
    let m: usize = s.spatial.iter().product();
    let taps = s.taps();
    let plan = s.plan();
    let mut out = vec![0.0; s.cout * s.cin * taps];
    for co in 0..s.cout {
        let grow = &grad[co * m..(co + 1) * m];
        for ci in 0..s.cin {
            let xrow = &x[ci * m..(ci + 1) * m];
            for (t, runs) in plan.iter().enumerate() {
                out[(co * s.cin + ci) * taps + t] =
                    runs.iter().map(|&(o, i, len)| dot(&grow[o..o + len], &xrow[i..i + len])).sum();
            }
        }
    }
    out
}

/// Maps each fine spatial offset to its coarse (halved) offset.
fn coarse_map(fine: &[usize]) -> Vec<usize> {
    let coarse: Vec<usize> = fine.iter().map(|n| n / 2).collect();
    let cstr = super::array::strides_of(&coarse);
    let mut map = Vec::with_capacity(fine.iter().product());
    super::array::for_each_index(fine, |idx| {
        map.push(idx.iter().zip(&cstr).map(|(i, s)| (i / 2) * s).sum());
    });
    map
}

/// Block mean over 2^d cells; `fine` must have even extents.
pub fn avg_pool2(x: &[f64], channels: usize, fine: &[usize]) -> Vec<f64> {
    let m: usize = fine.iter().product();
    let mc = m >> fine.len();
    let scale = 1.0 / (1usize << fine.len()) as f64;
    let map = coarse_map(fine);
    let mut out = vec![0.0; channels * mc];
    for c in 0..channels {
        for (p, &q) in map.iter().enumerate() {
            out[c * mc + q] += scale * x[c * m + p];
        }
    }
    out
}

pub fn avg_pool2_adjoint(grad: &[f64], channels: usize, fine: &[usize]) -> Vec<f64> {
    let m: usize = fine.iter().product();
    let mc = m >> fine.len();
    let scale = 1.0 / (1usize << fine.len()) as f64;
    let map = coarse_map(fine);
    let mut out = vec![0.0; channels * m];
    for c in 0..channels {
        for (p, &q) in map.iter().enumerate() {
            out[c * m + p] = scale * grad[c * mc + q];
        }
    }
    out
}

/// Nearest-neighbour upsampling by 2 per axis to the `fine` extents.
pub fn upsample2(x: &[f64], channels: usize, fine: &[usize]) -> Vec<f64> {
    let m: usize = fine.iter().product();
    let mc = m >> fine.len();
    let map = coarse_map(fine);
    let mut out = vec![0.0; channels * m];
    for c in 0..channels {
        for (p, &q) in map.iter().enumerate() {
            out[c * m + p] = x[c * mc + q];
        }
    }
    out
}

pub fn upsample2_adjoint(grad: &[f64], channels: usize, fine: &[usize]) -> Vec<f64> {
    let m: usize = fine.iter().product();
    let mc = m >> fine.len();
    let map = coarse_map(fine);
    let mut out = vec![0.0; channels * mc];
    for c in 0..channels {
        for (p, &q) in map.iter().enumerate() {
            out[c * mc + q] += grad[c * m + p];
        }
    }
    out
}

/// Per-axis lower corner, fraction and whether the coordinate was clamped.
#[derive(Clone, Copy)]
struct AxisSample {
    base: usize,
    frac: f64,
    inside: bool,
}

#[inline]
fn axis_sample(c: f64, n: usize) -> AxisSample {
    if n == 1 {
        return AxisSample { base: 0, frac: 0.0, inside: false };
    }
    let hi = (n - 1) as f64;
    let inside = (0.0..=hi).contains(&c);
    let cc = c.clamp(0.0, hi);
    let base = (cc.floor() as usize).min(n - 2);
    AxisSample { base, frac: cc - base as f64, inside }
}

/// Multilinear sampling of `image` (shape `ishape`) at `coords` (`[d, m]`, voxel units).
/// Coordinates outside the grid are clamped to the border.
pub fn warp_linear(image: &[f64], ishape: &[usize], coords: &[f64], m: usize) -> Vec<f64> {
    let nd = ishape.len();
    let strides = super::array::strides_of(ishape);
    let mut out = vec![0.0; m];
    let mut s = [AxisSample { base: 0, frac: 0.0, inside: true }; 4];
    for p in 0..m {
        for a in 0..nd {
            s[a] = axis_sample(coords[a * m + p], ishape[a]);
        }
        let mut v = 0.0;
        for corner in 0..(1usize << nd) {
            let mut wgt = 1.0;
            let mut off = 0;
            for a in 0..nd {
                let hi = (corner >> (nd - 1 - a)) & 1 == 1;
                let step = usize::from(hi && ishape[a] > 1);
                off += (s[a].base + step) * strides[a];
                wgt *= if hi { s[a].frac } else { 1.0 - s[a].frac };
            }
            v += wgt * image[off];
        }
        out[p] = v;
    }
    out
}

/// Gradients of [`warp_linear`] with respect to the coordinates and/or the image.
pub fn warp_linear_backward(
    image: &[f64],
    ishape: &[usize],
    coords: &[f64],
    m: usize,
    grad: &[f64],
    want_coords: bool,
    want_image: bool,
) -> (Option<Vec<f64>>, Option<Vec<f64>>) {
    let nd = ishape.len();
    let strides = super::array::strides_of(ishape);
    let mut gc = want_coords.then(|| vec![0.0; nd * m]);
    let mut gi = want_image.then(|| vec![0.0; image.len()]);
    let mut s = [AxisSample { base: 0, frac: 0.0, inside: true }; 4];
    for p in 0..m {
        let g = grad[p];
        if g == 0.0 {
            continue;
        }
        for a in 0..nd {
            s[a] = axis_sample(coords[a * m + p], ishape[a]);
        }
        let mut dcoord = [0.0f64; 4];
        for corner in 0..(1usize << nd) {
            let mut off = 0;
            let mut w = [0.0f64; 4];
            let mut sign = [0.0f64; 4];
            for a in 0..nd {
                let hi = (corner >> (nd - 1 - a)) & 1 == 1;
                let step = usize::from(hi && ishape[a] > 1);
                off += (s[a].base + step) * strides[a];
                w[a] = if hi { s[a].frac } else { 1.0 - s[a].frac };
                sign[a] = if hi { 1.0 } else { -1.0 };
            }
            let val = image[off];
            if let Some(gi) = gi.as_mut() {
                gi[off] += g * w[..nd].iter().product::<f64>();
            }
            if gc.is_some() {
                for a in 0..nd {
                    let mut prod = sign[a];
                    for b in 0..nd {
                        if b != a {
                            prod *= w[b];
                        }
                    }
                    dcoord[a] += prod * val;
                }
            }
        }
        if let Some(gc) = gc.as_mut() {
            for a in 0..nd {
                if s[a].inside {
                    gc[a * m + p] += g * dcoord[a];
                }
            }
        }
    }
    (gc, gi)
}

/// Nearest-neighbour sampling with border clamping (ties round half away from zero).
pub fn warp_nearest(image: &[f64], ishape: &[usize], coords: &[f64], m: usize) -> Vec<f64> {
    let nd = ishape.len();
    let strides = super::array::strides_of(ishape);
    (0..m)
        .map(|p| {
            let mut off = 0;
            for a in 0..nd {
                let hi = (ishape[a] - 1) as f64;
                let i = coords[a * m + p].clamp(0.0, hi).round() as usize;
                off += i * strides[a];
            }
            image[off]
        })
        .collect()
}
