use alloc::vec::Vec;
use core::fmt;

use super::{Tape, Tensor, Var};

/// Reported when the check itself cannot run, as opposed to failing.
#[derive(Debug, Clone, PartialEq)]
pub enum GradCheckError {
    /// The function produced a non-finite value or gradient.
    NonFinite { coordinate: usize },
    /// `f` did not return a scalar.
    NonScalarOutput,
}

impl fmt::Display for GradCheckError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GradCheckError::NonFinite { coordinate } => {
                write!(f, "non-finite value encountered at coordinate {}", coordinate)
            }
            GradCheckError::NonScalarOutput => write!(f, "function under test must be scalar"),
        }
    }
}

/// Compare the tape gradient of a scalar function against central finite
/// differences. Returns the max over coordinates of
/// `|analytic - numeric| / max(1, |analytic|)`.
///
/// `f` receives a fresh tape and the input as a trainable leaf and must
/// return a scalar recorded on that tape.
pub fn grad_check<F>(f: F, x: &Tensor, h: f64) -> Result<f64, GradCheckError>
where
    F: Fn(&mut Tape, Var) -> Var,
{
    // Analytic gradient.
    let analytic: Vec<f64> = {
        let mut tape = Tape::new();
        let mut input = x.clone();
        input.requires_grad = true;
        let v = tape.input(&input);
        let out = f(&mut tape, v);
        if tape.value(out).len() != 1 {
            return Err(GradCheckError::NonScalarOutput);
        }
        tape.backward(out).map_err(|_| GradCheckError::NonScalarOutput)?;
        match tape.grad(v) {
            Some(g) => g.to_vec(),
            None => alloc::vec![0.0; x.numel()],
        }
    };

    let eval = |data: &[f64]| -> f64 {
        let mut tape = Tape::new();
        let t = Tensor::new(x.shape.clone(), data.to_vec());
        let v = tape.input(&t);
        let out = f(&mut tape, v);
        tape.value(out)[0]
    };

    let mut worst = 0.0f64;
    let mut probe = x.data.clone();
    for i in 0..probe.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let fp = eval(&probe);
        probe[i] = orig - h;
        let fm = eval(&probe);
        probe[i] = orig;

        let numeric = (fp - fm) / (2.0 * h);
        let a = analytic[i];
        if !numeric.is_finite() || !a.is_finite() {
            return Err(GradCheckError::NonFinite { coordinate: i });
        }
        let denom = crate::fmath::abs(a).max(1.0);
        let rel = crate::fmath::abs(a - numeric) / denom;
        worst = worst.max(rel);
    }
    Ok(worst)
}
