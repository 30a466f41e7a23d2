use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Binary,
    Multiclass,
}

impl Task {
    pub fn accepts(self, n_classes: usize) -> bool {
        match self {
            Task::Binary => n_classes == 2,
            Task::Multiclass => n_classes > 2,
        }
    }
}

/// Targets and limits of one architecture search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Requirements {
    /// Validation accuracy at which the search stops.
    pub p_target: f64,
    /// Largest admissible trainable parameter count.
    pub lambda_params: usize,
    pub max_latency_ms: f64,
    /// Iteration limit.
    pub t_max: usize,
    pub task: Task,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RequirementsError {
    #[error("p_target {0} outside [0, 1]")]
    Target(f64),
    #[error("t_max must be at least 1")]
    Iterations,
    #[error("max_latency_ms {0} must be positive")]
    Latency(f64),
    #[error("lambda_params must be positive")]
    Params,
}

impl Default for Requirements {
    fn default() -> Self {
        Self { p_target: 0.95, lambda_params: 5_000_000, max_latency_ms: 10.0, t_max: 10, task: Task::Binary }
    }
}

impl Requirements {
    pub fn validate(&self) -> Result<(), RequirementsError> {
        if !(0.0..=1.0).contains(&self.p_target) {
            return Err(RequirementsError::Target(self.p_target));
        }
        if self.t_max == 0 {
            return Err(RequirementsError::Iterations);
        }
        if !(self.max_latency_ms > 0.0) {
            return Err(RequirementsError::Latency(self.max_latency_ms));
        }
        if self.lambda_params == 0 {
            return Err(RequirementsError::Params);
        }
        Ok(())
    }

    /// Prompt-ready summary.
    pub fn describe(&self) -> String {
        let task = match self.task {
            Task::Binary => "binary (stable / unstable)",
            Task::Multiclass => "multiclass",
        };
        format!(
            "- task: {task}\n- target validation accuracy: {:.4}\n- parameter limit: {}\n- single-sample latency limit: {} ms\n- iteration limit: {}",
            self.p_target, self.lambda_params, self.max_latency_ms, self.t_max
        )
    }
}
