//! Central finite-difference verification of analytic gradients.

use rand::rngs::StdRng;
use rand::seq::index::sample;
use rand::SeedableRng;

use crate::error::{NnError, Result};
use crate::params::{Gradients, ParamStore};

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    pub fd_eps: f64,
    pub tol: f64,
    /// Relative error denominators never drop below this, so coordinates
    /// whose true gradient is ~0 are compared absolutely.
    pub abs_floor: f64,
    /// Tensors larger than this are checked on a random subset of coordinates.
    pub max_coords_per_param: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            fd_eps: 1e-5,
            tol: 1e-4,
            abs_floor: 1e-6,
            max_coords_per_param: 24,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoordError {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Largest errors first (at most five).
    pub worst: Vec<CoordError>,
}

pub fn relative_error(analytic: f64, numeric: f64, abs_floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(abs_floor)
}

/// Compares `loss_fn`'s analytic gradients against central differences
/// `(f(w+e) - f(w-e)) / 2e`. `loss_fn` must be deterministic (no dropout).
/// Parameter values are restored before returning.
pub fn grad_check<F>(store: &mut ParamStore, mut loss_fn: F, cfg: &GradCheckConfig) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore) -> Result<(f64, Gradients)>,
{
    let (_, analytic) = loss_fn(store)?;
    let mut rng = StdRng::seed_from_u64(cfg.seed);
    let mut errors = Vec::new();
    let ids: Vec<_> = store.iter().map(|(id, _)| id).collect();
    for id in ids {
        let n = store.value(id).len();
        let coords: Vec<usize> = if n <= cfg.max_coords_per_param {
            (0..n).collect()
        } else {
            let mut c = sample(&mut rng, n, cfg.max_coords_per_param).into_vec();
            c.sort_unstable();
            c
        };
        for i in coords {
            let orig = store.value(id).data()[i];
            store.get_mut(id).value.data_mut()[i] = orig + cfg.fd_eps;
            let (fp, _) = loss_fn(store)?;
            store.get_mut(id).value.data_mut()[i] = orig - cfg.fd_eps;
            let (fm, _) = loss_fn(store)?;
            store.get_mut(id).value.data_mut()[i] = orig;
            let numeric = (fp - fm) / (2.0 * cfg.fd_eps);
            let a = analytic.get(id).map_or(0.0, |g| g.data()[i]);
            errors.push(CoordError {
                param: store.get(id).name.clone(),
                index: i,
                analytic: a,
                numeric,
                rel_error: relative_error(a, numeric, cfg.abs_floor),
            });
        }
    }
    errors.sort_by(|a, b| b.rel_error.total_cmp(&a.rel_error));
    let checked = errors.len();
    let max_rel_error = errors.first().map_or(0.0, |e| e.rel_error);
    errors.truncate(5);
    if !(max_rel_error <= cfg.tol) {
        let worst = errors
            .iter()
            .map(|e| {
                format!(
                    "{}[{}] analytic={:.6e} numeric={:.6e} rel={:.3e}",
                    e.param, e.index, e.analytic, e.numeric, e.rel_error
                )
            })
            .collect::<Vec<_>>()
            .join("; ");
        return Err(NnError::GradCheck {
            max_rel: max_rel_error,
            tol: cfg.tol,
            worst,
        });
    }
    Ok(GradCheckReport {
        max_rel_error,
        checked,
        worst: errors,
    })
}
