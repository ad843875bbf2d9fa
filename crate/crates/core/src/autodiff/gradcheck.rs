use super::{ParamStore, Tape, TensorError, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckEntry {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    /// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
    pub rel_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tolerance
    }

    /// Entry with the largest relative error.
    pub fn worst(&self) -> Option<&GradCheckEntry> {
        self.entries.iter().max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compare reverse-mode gradients of every parameter scalar with central
/// differences of step `h`. `loss` records a scalar loss on a fresh tape.
/// Parameter values are restored and gradients left zeroed on return.
pub fn gradient_check<E, F>(
    params: &mut ParamStore<f64>,
    h: f64,
    tolerance: f64,
    mut loss: F,
) -> Result<GradCheckReport, E>
where
    E: From<TensorError>,
    F: FnMut(&mut Tape<f64>, &ParamStore<f64>) -> Result<Var, E>,
{
    params.zero_grad();
    let mut tape = Tape::new();
    let out = loss(&mut tape, params)?;
    tape.backward(out)?;
    params.accumulate_from(&tape);

    let mut eval = |params: &ParamStore<f64>| -> Result<f64, E> {
        let mut tape = Tape::new();
        let out = loss(&mut tape, params)?;
        Ok(tape.value(out).item())
    };

    let ids: Vec<_> = params.iter().map(|(id, _)| id).collect();
    let mut entries = Vec::new();
    for id in ids {
        let name = params.get(id).name.clone();
        for index in 0..params.value(id).len() {
            let analytic = params.grad(id).data()[index];
            let original = params.value(id).data()[index];
            params.get_mut(id).value.data_mut()[index] = original + h;
            let plus = eval(params)?;
            params.get_mut(id).value.data_mut()[index] = original - h;
            let minus = eval(params)?;
            params.get_mut(id).value.data_mut()[index] = original;
            let numeric = (plus - minus) / (2.0 * h);
            entries.push(GradCheckEntry {
                param: name.clone(),
                index,
                analytic,
                numeric,
                rel_error: relative_error(analytic, numeric),
            });
        }
    }
    params.zero_grad();
    let max_rel_error = entries.iter().map(|e| e.rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        entries,
        max_rel_error,
        tolerance,
    })
}
