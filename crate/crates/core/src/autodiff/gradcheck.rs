use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::{ParamGrads, ParamId, ParameterSet};
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub step: f64,
    /// Coordinates checked per parameter tensor (all of them if smaller).
    /// Coordinates whose perturbation crosses a ReLU kink do not count.
    pub coords_per_param: usize,
    pub seed: u64,
    /// Norms below this count as zero when forming relative errors.
    pub floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-5,
            coords_per_param: 8,
            seed: 0,
            floor: 1e-8,
        }
    }
}

/// Finite-difference agreement for one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    /// `|g_ad - g_fd| / max(|g_ad|, |g_fd|)` over the checked coordinates.
    pub rel_error: f64,
    pub checked: usize,
    /// Coordinates whose perturbation crossed a ReLU kink.
    pub skipped: usize,
}

/// Compares `analytic` with central differences of `eval`, which returns the
/// loss and the ReLU sign pattern of a forward pass at the given parameters.
pub fn check_gradients<F>(
    params: &ParameterSet,
    analytic: &ParamGrads,
    ids: &[ParamId],
    opts: &GradCheckOptions,
    mut eval: F,
) -> Result<Vec<ParamCheck>>
where
    F: FnMut(&ParameterSet) -> Result<(f64, Vec<bool>)>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (_, base_pattern) = eval(params)?;
    let mut work = params.clone();
    let mut out = Vec::with_capacity(ids.len());
    for &id in ids {
        let n = params.value(id).len();
        // visiting order; kinked coordinates are replaced by later ones
        let mut coords: Vec<usize> = (0..n).collect();
        coords.shuffle(&mut rng);
        let mut diff2 = 0.0;
        let mut ad2 = 0.0;
        let mut fd2 = 0.0;
        let mut checked = 0;
        let mut skipped = 0;
        for &i in &coords {
            if checked == opts.coords_per_param {
                break;
            }
            let orig = params.value(id).data()[i];
            work.value_mut(id).data_mut()[i] = orig + opts.step;
            let (lp, pp) = eval(&work)?;
            work.value_mut(id).data_mut()[i] = orig - opts.step;
            let (lm, pm) = eval(&work)?;
            work.value_mut(id).data_mut()[i] = orig;
            if pp != base_pattern || pm != base_pattern {
                skipped += 1;
                continue;
            }
            let fd = (lp - lm) / (2.0 * opts.step);
            let ad = analytic.get(id)[i];
            diff2 += (fd - ad) * (fd - ad);
            ad2 += ad * ad;
            fd2 += fd * fd;
            checked += 1;
        }
        let scale = ad2.sqrt().max(fd2.sqrt());
        // both gradients vanish: report the absolute gap
        let rel_error = if scale < opts.floor { diff2.sqrt() } else { diff2.sqrt() / scale };
        out.push(ParamCheck {
            name: params.get(id).name.clone(),
            rel_error,
            checked,
            skipped,
        });
    }
    Ok(out)
}
