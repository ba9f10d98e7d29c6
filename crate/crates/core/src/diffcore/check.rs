use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, Var};
use super::params::{value_and_gradient, ParamVector};
use crate::error::{Error, Result};

/// Maximum relative disagreement between the analytic gradient and central
/// differences over up to `max_coords` sampled coordinates.
///
/// The error for one coordinate is `|analytic - fd| / (|fd| + 1e-12)`.
pub fn finite_difference_check<F>(loss_fn: F, params: &ParamVector, h: f64, max_coords: usize, seed: u64) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    if !(h > 0.0) {
        return Err(Error::Precondition(format!("finite-difference step must be positive, got {h}")));
    }
    let (_, grad) = value_and_gradient(&loss_fn, params)?;
    let analytic = grad.flatten();
    let base = params.flatten();
    let n = base.len();
    let coords: Vec<usize> = if n <= max_coords {
        (0..n).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c = sample(&mut rng, n, max_coords).into_vec();
        c.sort_unstable();
        c
    };
    let eval = |flat: &[f64]| -> Result<f64> {
        let p = params.with_flat(flat)?;
        let mut g = Graph::new();
        let vars = p.bind(&mut g)?;
        let loss = loss_fn(&mut g, &vars)?;
        Ok(g.scalar(loss))
    };
    let mut worst = 0.0f64;
    let mut probe = base.clone();
    for i in coords {
        probe[i] = base[i] + h;
        let up = eval(&probe)?;
        probe[i] = base[i] - h;
        let down = eval(&probe)?;
        probe[i] = base[i];
        let fd = (up - down) / (2.0 * h);
        worst = worst.max((analytic[i] - fd).abs() / (fd.abs() + 1e-12));
    }
    Ok(worst)
}
