//! Central-difference verification of analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{ParamStore, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    pub epsilon: f64,
    /// Coordinates checked per parameter tensor; `None` checks all of them.
    pub max_coords_per_param: Option<usize>,
    /// Relative-error denominators are floored here, so coordinates whose
    /// true gradient is ~0 are compared on an absolute scale. Central
    /// differences only resolve gradients in steps of about
    /// `ulp(loss) / epsilon` (~1e-10 for losses near 5 at `epsilon` 1e-5),
    /// so the floor must sit well above that.
    pub denom_floor: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            epsilon: 1e-5,
            max_coords_per_param: None,
            denom_floor: 1e-5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: Option<String>,
    pub worst_coord: Option<usize>,
    pub analytic: f64,
    pub numeric: f64,
    pub coords_checked: usize,
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares the gradients returned by `loss_fn` against central differences
/// of its loss value. `loss_fn` returns the loss and one gradient tensor per
/// parameter in `store`. The store is restored before returning.
pub fn grad_check<F>(
    store: &mut ParamStore,
    mut loss_fn: F,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore) -> Result<(f64, Vec<Tensor>)>,
{
    let (base, analytic) = loss_fn(store)?;
    let (again, _) = loss_fn(store)?;
    if base.to_bits() != again.to_bits() {
        return Err(Error::Nondeterministic {
            first: base,
            second: again,
        });
    }
    if analytic.len() != store.len() {
        return Err(Error::shape(
            "grad_check",
            format!(
                "{} gradients for {} parameters",
                analytic.len(),
                store.len()
            ),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: None,
        worst_coord: None,
        analytic: 0.0,
        numeric: 0.0,
        coords_checked: 0,
    };
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let n = store.get(id).len();
        if analytic[id.index()].len() != n {
            return Err(Error::shape(
                "grad_check",
                format!("gradient for {} has the wrong size", store.name(id)),
            ));
        }
        let coords: Vec<usize> = match cfg.max_coords_per_param {
            Some(k) if k < n => {
                let mut c = sample(&mut rng, n, k).into_vec();
                c.sort_unstable();
                c
            }
            _ => (0..n).collect(),
        };
        for c in coords {
            let orig = store.get(id).data()[c];
            store.get_mut(id).data_mut()[c] = orig + cfg.epsilon;
            let plus = loss_fn(store).map(|r| r.0);
            store.get_mut(id).data_mut()[c] = orig - cfg.epsilon;
            let minus = loss_fn(store).map(|r| r.0);
            store.get_mut(id).data_mut()[c] = orig;
            let numeric = (plus? - minus?) / (2.0 * cfg.epsilon);
            let a = analytic[id.index()].data()[c];
            let err = relative_error(a, numeric, cfg.denom_floor);
            report.coords_checked += 1;
            if err.is_nan() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst_param = Some(store.name(id).to_string());
                report.worst_coord = Some(c);
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}
