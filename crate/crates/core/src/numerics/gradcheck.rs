use crate::error::{Error, Result};
use crate::numerics::params::{ParamId, ParamStore};
use crate::numerics::tape::{Tape, Var};

/// Outcome of a central-difference gradient comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// `|a - n|₂ / max(|a|₂, |n|₂)` over all checked coordinates.
    pub vector_rel_err: f64,
    /// Largest per-coordinate relative error; dominated by finite-difference noise
    /// wherever the true gradient is near zero.
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    /// Coordinate with the largest relative error: (parameter, flat index, analytic, numeric).
    pub worst: Option<(ParamId, usize, f64, f64)>,
    pub coordinates: usize,
    pub pass: bool,
}

/// Relative error with the `max(|a|, |b|, 1e-12)` denominator.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

fn evaluate<F>(f: &F, store: &ParamStore) -> Result<f64>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    let mut tape = Tape::new();
    let out = f(&mut tape, store)?;
    Ok(tape.value(out).item())
}

/// Compares analytic gradients of `f` against central differences with step `h`.
///
/// `params` selects which parameters to perturb; an empty slice means all of them.
/// Passes iff the vector relative error is at most `tol`.
pub fn finite_diff_check<F>(f: F, store: &ParamStore, params: &[ParamId], h: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
{
    let all = params.is_empty();
    finite_diff_check_with(f, store, |id, _| all || params.contains(&id), h, tol)
}

/// As [`finite_diff_check`], perturbing only the coordinates `(parameter, flat index)`
/// accepted by `select`.
pub fn finite_diff_check_with<F, S>(f: F, store: &ParamStore, select: S, h: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &ParamStore) -> Result<Var>,
    S: Fn(ParamId, usize) -> bool,
{
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step h must be positive, got {h}")));
    }
    let base = evaluate(&f, store)?;
    let again = evaluate(&f, store)?;
    if base.to_bits() != again.to_bits() {
        return Err(Error::NonDeterministic(base, again));
    }

    let mut tape = Tape::new();
    let out = f(&mut tape, store)?;
    let grads = tape.gradients(out)?;

    let ids: Vec<ParamId> = store.ids().collect();
    let mut work = store.clone();
    let (mut diff2, mut a2, mut n2) = (0.0, 0.0, 0.0);
    let mut report = GradCheckReport {
        vector_rel_err: 0.0,
        max_rel_err: 0.0,
        max_abs_err: 0.0,
        worst: None,
        coordinates: 0,
        pass: true,
    };
    for id in ids {
        let n = store.value(id).len();
        for k in (0..n).filter(|&k| select(id, k)) {
            let orig = store.value(id).data()[k];
            work.value_mut(id).data_mut()[k] = orig + h;
            let plus = evaluate(&f, &work)?;
            work.value_mut(id).data_mut()[k] = orig - h;
            let minus = evaluate(&f, &work)?;
            work.value_mut(id).data_mut()[k] = orig;

            let numeric = (plus - minus) / (2.0 * h);
            let analytic = grads.get(id).map_or(0.0, |g| g.data()[k]);
            let rel = relative_error(analytic, numeric);
            let abs = (analytic - numeric).abs();
            diff2 += (analytic - numeric).powi(2);
            a2 += analytic * analytic;
            n2 += numeric * numeric;
            report.coordinates += 1;
            report.max_abs_err = report.max_abs_err.max(abs);
            if rel > report.max_rel_err || report.worst.is_none() {
                report.max_rel_err = report.max_rel_err.max(rel);
                report.worst = Some((id, k, analytic, numeric));
            }
        }
    }
    report.vector_rel_err = diff2.sqrt() / a2.sqrt().max(n2.sqrt()).max(1e-12);
    report.pass = report.vector_rel_err <= tol;
    Ok(report)
}
