use serde::{Deserialize, Serialize};

/// One objective observation along a run. `seconds` is the active clock
/// (walltime, or accumulated work units under the deterministic clock) with
/// objective evaluation excluded from the timed span; `work` is the
/// cumulative count of per-sample gradient evaluations either way.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRecord {
    pub seconds: f64,
    pub work: f64,
    pub round: u64,
    pub objective: f64,
    pub rel_error: Option<f64>,
}

/// Objective trajectory of one run, labeled by the solver that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trace {
    pub solver: String,
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn new(solver: impl Into<String>) -> Self {
        Trace {
            solver: solver.into(),
            records: Vec::new(),
        }
    }

    pub fn push(&mut self, seconds: f64, work: f64, round: u64, objective: f64) {
        self.records.push(TraceRecord {
            seconds,
            work,
            round,
            objective,
            rel_error: None,
        });
    }

    pub fn initial_objective(&self) -> Option<f64> {
        self.records.first().map(|r| r.objective)
    }

    pub fn final_objective(&self) -> Option<f64> {
        self.records.last().map(|r| r.objective)
    }

    pub fn final_rel_error(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.rel_error)
    }

    /// Fills `rel_error` on every record against a reference optimum, using
    /// the first record as the starting point. The first record's relative
    /// error is 1 by construction.
    pub fn fill_rel_errors(&mut self, reference: f64) -> Result<(), super::BenchError> {
        let f0 = self
            .records
            .first()
            .map(|r| r.objective)
            .ok_or(super::BenchError::EmptyTrace)?;
        let denom = (f0 - reference).abs();
        if denom == 0.0 || !denom.is_finite() {
            return Err(super::BenchError::DegenerateMetric {
                initial: f0,
                reference,
            });
        }
        for r in &mut self.records {
            r.rel_error = Some((r.objective - reference).abs() / denom);
        }
        Ok(())
    }

    /// Earliest cumulative work at which the relative error reached `target`.
    pub fn work_to_reach(&self, target: f64) -> Option<f64> {
        self.records
            .iter()
            .find(|r| r.rel_error.is_some_and(|e| e <= target))
            .map(|r| r.work)
    }

    /// True if any recorded objective is non-finite.
    pub fn diverged(&self) -> bool {
        self.records.iter().any(|r| !r.objective.is_finite())
    }
}

/// Relative optimality gap |f_t - f_star| / |f_0 - f_star|.
pub fn relative_error(f_t: f64, f_0: f64, f_star: f64) -> Result<f64, super::BenchError> {
    let denom = (f_0 - f_star).abs();
    if denom == 0.0 || !denom.is_finite() {
        return Err(super::BenchError::DegenerateMetric {
            initial: f_0,
            reference: f_star,
        });
    }
    Ok((f_t - f_star).abs() / denom)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_relative_error_is_one() {
        let mut t = Trace::new("mu");
        t.push(0.0, 0.0, 0, 10.0);
        t.push(1.0, 5.0, 1, 4.0);
        t.push(2.0, 10.0, 2, 2.5);
        t.fill_rel_errors(2.0).unwrap();
        assert_eq!(t.records[0].rel_error, Some(1.0));
        assert_eq!(t.records[1].rel_error, Some(0.25));
        assert_eq!(t.work_to_reach(0.25), Some(5.0));
    }

    #[test]
    fn starting_at_the_reference_is_degenerate() {
        let mut t = Trace::new("mu");
        t.push(0.0, 0.0, 0, 2.0);
        assert!(t.fill_rel_errors(2.0).is_err());
        assert!(relative_error(1.0, 2.0, 2.0).is_err());
    }
}
