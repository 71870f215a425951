use super::SolverError;

/// Time discretisation of a value path.
///
/// Output knots are spaced `horizon / steps` away from `T` and geometrically
/// graded towards it: in `tau = T - t` the gap never exceeds
/// `(tau + scale) / grading`, where `scale` is `lambda_min / l` for a finite
/// penalty and 0 for the principal solution (whose grid starts at
/// `tau = delta_cut`). Between knots the integrator takes substeps no larger
/// than `(tau + lambda_min / l) / substeps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub steps: usize,
    pub grading: f64,
    pub substeps: usize,
    /// Principal cut-off as a fraction of the horizon.
    pub delta_cut_fraction: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { steps: 4096, grading: 8.0, substeps: 48, delta_cut_fraction: 1e-3 }
    }
}

impl GridSpec {
    pub fn with_steps(steps: usize) -> Self {
        Self { steps, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if self.steps < 2 {
            return Err(SolverError::BadGrid(format!("steps = {} (need >= 2)", self.steps)));
        }
        if !(self.grading >= 1.0) {
            return Err(SolverError::BadGrid(format!("grading = {} (need >= 1)", self.grading)));
        }
        if self.substeps < 1 {
            return Err(SolverError::BadGrid("substeps = 0".into()));
        }
        if !(self.delta_cut_fraction > 0.0 && self.delta_cut_fraction < 1.0) {
            return Err(SolverError::BadGrid(format!(
                "delta_cut_fraction = {} (need 0 < f < 1)",
                self.delta_cut_fraction
            )));
        }
        Ok(())
    }

    pub fn delta_cut(&self, horizon: f64) -> f64 {
        self.delta_cut_fraction * horizon
    }

    /// Knots in `tau`, ascending from `tau_start` to `horizon`.
    pub(crate) fn tau_knots(&self, horizon: f64, tau_start: f64, scale: f64) -> Vec<f64> {
        let h_max = horizon / self.steps as f64;
        let mut out = vec![tau_start];
        let mut tau = tau_start;
        loop {
            let gap = h_max.min((tau + scale) / self.grading);
            let next = tau + gap;
            // avoid a sliver at the far end
            if next >= horizon - 0.25 * h_max {
                break;
            }
            out.push(next);
            tau = next;
        }
        out.push(horizon);
        out
    }
}
