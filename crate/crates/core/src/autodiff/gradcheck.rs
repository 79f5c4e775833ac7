use super::{Tape, Tensor, TensorError, Var};

/// Result of comparing analytic gradients against central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// `max |analytic - numeric| / max(1, |analytic|)` over all entries.
    pub max_rel_error: f64,
    /// `(parameter index, flat element index)` of the worst entry.
    pub worst: Option<(usize, usize)>,
    pub entries_checked: usize,
}

/// Central-difference gradient verification.
#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub epsilon: f64,
    /// Corrupt the analytic pass (negative control).
    pub inject_fault: bool,
}

impl Default for GradCheck {
    fn default() -> Self {
        Self {
            epsilon: 1e-5,
            inject_fault: false,
        }
    }
}

impl GradCheck {
    pub fn run<F>(&self, f: F, params: &[Tensor]) -> Result<GradCheckReport, TensorError>
    where
        F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>, TensorError>,
    {
        let analytic: Vec<Tensor> = {
            let tape = Tape::new();
            tape.set_fault_injection(self.inject_fault);
            let vars: Vec<Var<'_>> = params.iter().map(|p| tape.param(p.clone())).collect();
            let loss = f(&tape, &vars)?;
            let grads = tape.backward(loss)?;
            vars.iter().map(|&v| grads.wrt_or_zero(v)).collect()
        };

        let eval = |params: &[Tensor]| -> Result<f64, TensorError> {
            let tape = Tape::new();
            let vars: Vec<Var<'_>> = params.iter().map(|p| tape.constant(p.clone())).collect();
            Ok(f(&tape, &vars)?.item())
        };

        let mut work = params.to_vec();
        let mut report = GradCheckReport {
            max_rel_error: 0.0,
            worst: None,
            entries_checked: 0,
        };
        for (pi, grad) in analytic.iter().enumerate() {
            for ei in 0..params[pi].numel() {
                let x0 = params[pi].data()[ei];
                work[pi].data_mut()[ei] = x0 + self.epsilon;
                let up = eval(&work)?;
                work[pi].data_mut()[ei] = x0 - self.epsilon;
                let down = eval(&work)?;
                work[pi].data_mut()[ei] = x0;
                let numeric = (up - down) / (2.0 * self.epsilon);
                let a = grad.data()[ei];
                let rel = (a - numeric).abs() / a.abs().max(1.0);
                report.entries_checked += 1;
                if rel > report.max_rel_error || report.worst.is_none() {
                    report.max_rel_error = rel;
                    report.worst = Some((pi, ei));
                }
            }
        }
        Ok(report)
    }
}

/// Max relative error between reverse-mode and central-difference gradients
/// of `f` at `params`.
pub fn grad_check<F>(f: F, params: &[Tensor], epsilon: f64) -> Result<GradCheckReport, TensorError>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>, TensorError>,
{
    GradCheck {
        epsilon,
        inject_fault: false,
    }
    .run(f, params)
}
