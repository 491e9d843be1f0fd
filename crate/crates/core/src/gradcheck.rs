//! Central finite-difference gradient checking.
//!
//! These routines only evaluate forward values, so they are independent of
//! every backward rule they are used to check.

use crate::error::Result;
use crate::params::ParamStore;
use crate::tensor::{Tape, Tensor, Var};

pub const DEFAULT_STEP: f64 = 1e-5;

/// Below this magnitude gradients are compared on an absolute scale.
pub const RELATIVE_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_relative_error: f64,
    /// (input index, element index, analytic, numeric) of the worst element.
    pub worst: Option<(usize, usize, f64, f64)>,
}

impl GradCheckReport {
    fn record(&mut self, input: usize, elem: usize, analytic: f64, numeric: f64) {
        let err = relative_error(analytic, numeric);
        self.checked += 1;
        if self.worst.is_none() || err > self.max_relative_error {
            self.max_relative_error = err;
            self.worst = Some((input, elem, analytic, numeric));
        }
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_relative_error <= tolerance
    }
}

/// Checks the gradient of the scalar built by `build` with respect to every
/// element of every input.
pub fn check_op<F>(inputs: &[Tensor], step: f64, build: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.leaf(t)).collect();
        let out = build(&mut tape, &vars)?;
        Ok(tape.value(out)[0])
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t)).collect();
    let out = build(&mut tape, &vars)?;
    tape.backward(out)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(v, t)| {
            tape.grad(*v)
                .map(<[f64]>::to_vec)
                .unwrap_or_else(|| vec![0.0; t.numel()])
        })
        .collect();

    let mut work = inputs.to_vec();
    let mut report = GradCheckReport::default();
    for i in 0..work.len() {
        for e in 0..work[i].numel() {
            let orig = work[i].data()[e];
            work[i].data_mut()[e] = orig + step;
            let plus = eval(&work)?;
            work[i].data_mut()[e] = orig - step;
            let minus = eval(&work)?;
            work[i].data_mut()[e] = orig;
            report.record(i, e, analytic[i][e], (plus - minus) / (2.0 * step));
        }
    }
    Ok(report)
}

/// Numeric gradients of `loss` with respect to every trainable parameter.
pub fn numeric_param_grads<F>(store: &mut ParamStore, step: f64, mut loss: F) -> Result<Vec<Vec<f64>>>
where
    F: FnMut(&ParamStore) -> Result<f64>,
{
    let mut out = Vec::with_capacity(store.len());
    let ids: Vec<_> = store
        .iter()
        .enumerate()
        .map(|(i, p)| (i, p.trainable, p.tensor.numel()))
        .collect();
    for (i, trainable, n) in ids {
        let mut grads = vec![0.0; n];
        if trainable {
            for (e, g) in grads.iter_mut().enumerate() {
                let orig = param_value(store, i, e);
                set_param_value(store, i, e, orig + step);
                let plus = loss(store)?;
                set_param_value(store, i, e, orig - step);
                let minus = loss(store)?;
                set_param_value(store, i, e, orig);
                *g = (plus - minus) / (2.0 * step);
            }
        }
        out.push(grads);
    }
    Ok(out)
}

/// Compares analytic parameter gradients (from the store's gradient slots)
/// against numeric ones.
pub fn compare_param_grads(store: &ParamStore, numeric: &[Vec<f64>]) -> GradCheckReport {
    let mut report = GradCheckReport::default();
    for (i, (p, num)) in store.iter().zip(numeric).enumerate() {
        if !p.trainable {
            continue;
        }
        let zeros = vec![0.0; p.tensor.numel()];
        let analytic = p.tensor.grad().unwrap_or(&zeros);
        for (e, (&a, &n)) in analytic.iter().zip(num).enumerate() {
            report.record(i, e, a, n);
        }
    }
    report
}

fn param_value(store: &ParamStore, i: usize, e: usize) -> f64 {
    store.iter().nth(i).expect("parameter index").tensor.data()[e]
}

fn set_param_value(store: &mut ParamStore, i: usize, e: usize, v: f64) {
    store.iter_mut().nth(i).expect("parameter index").tensor.data_mut()[e] = v;
}
