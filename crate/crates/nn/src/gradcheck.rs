//! Central finite-difference gradient checks.
//!
//! The numerical route only evaluates the loss; it never touches the tape,
//! so it is an independent check on [`crate::Graph::backward`].

use rand::seq::SliceRandom;
use rand::Rng;

use crate::graph::{Graph, Var};
use crate::params::{ParamId, ParamSet};
use crate::Result;

/// Outcome of comparing analytic against numerical derivatives.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    /// `(parameter name, flat index, analytic, numeric)` of the worst entry.
    pub worst: Option<(String, usize, f64, f64)>,
}

impl GradCheckReport {
    pub fn passes(&self, rel_tol: f64) -> bool {
        self.max_rel_error <= rel_tol
    }
}

/// Relative error with a floor so that entries whose true derivative is
/// (numerically) zero are judged against the loss scale instead.
pub fn relative_error(analytic: f64, numeric: f64, loss_scale: f64) -> f64 {
    let floor = 1e-6 * loss_scale.abs().max(1.0);
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Checks `d loss / d param` for the given parameters.
///
/// `build` records the loss on a fresh graph and returns the scalar node.
/// At most `max_entries` coordinates are probed (chosen at random with `rng`);
/// pass `usize::MAX` to probe everything.
pub fn check_params<F>(
    params: &ParamSet,
    ids: &[ParamId],
    build: F,
    step: f64,
    max_entries: usize,
    rng: &mut impl Rng,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &ParamSet) -> Result<Var>,
{
    let mut g = Graph::new();
    let loss = build(&mut g, params)?;
    let loss_value = g.value(loss).item();
    let grads = g.backward(loss)?;

    let mut coords: Vec<(ParamId, usize)> = ids
        .iter()
        .flat_map(|&id| (0..params.get(id).len()).map(move |i| (id, i)))
        .collect();
    if coords.len() > max_entries {
        coords.shuffle(rng);
        coords.truncate(max_entries);
    }

    let eval = |p: &ParamSet| -> Result<f64> {
        let mut g = Graph::new();
        let l = build(&mut g, p)?;
        Ok(g.value(l).item())
    };

    let mut probe = params.clone();
    let mut report = GradCheckReport {
        checked: 0,
        max_rel_error: 0.0,
        worst: None,
    };
    for (id, i) in coords {
        let original = probe.get(id).data()[i];
        probe.get_mut(id).data_mut()[i] = original + step;
        let plus = eval(&probe)?;
        probe.get_mut(id).data_mut()[i] = original - step;
        let minus = eval(&probe)?;
        probe.get_mut(id).data_mut()[i] = original;
        let numeric = (plus - minus) / (2.0 * step);
        let analytic = grads.param(id).map_or(0.0, |t| t.data()[i]);
        let err = relative_error(analytic, numeric, loss_value);
        report.checked += 1;
        if err > report.max_rel_error || report.worst.is_none() {
            report.max_rel_error = report.max_rel_error.max(err);
            if err >= report.max_rel_error {
                report.worst = Some((params.name(id).to_string(), i, analytic, numeric));
            }
        }
    }
    Ok(report)
}
