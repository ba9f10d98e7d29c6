use crate::error::{Error, Result};

/// `[sin(2^k pi t), cos(2^k pi t)]` for `k = 0 .. dims / 2`.
pub fn positional_encode(t: f64, dims: usize) -> Result<Vec<f64>> {
    if dims < 2 || dims % 2 != 0 {
        return Err(Error::Config(format!("time encoding needs an even size >= 2, got {dims}")));
    }
    let mut out = Vec::with_capacity(dims);
    for k in 0..dims / 2 {
        let w = (1u64 << k) as f64 * std::f64::consts::PI * t;
        out.push(w.sin());
        out.push(w.cos());
    }
    Ok(out)
}
