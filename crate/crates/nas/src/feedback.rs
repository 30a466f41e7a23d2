use serde::{Deserialize, Serialize};
use tsa_llm::{render, Bindings};

use crate::history::{Record, Status};
use crate::requirements::Requirements;

/// Train/validation accuracy gap above which a candidate counts as overfitting.
pub const OVERFIT_GAP: f64 = 0.1;
/// Minority-class recall below which class imbalance is diagnosed.
pub const MINORITY_RECALL: f64 = 0.8;

/// Natural-language diagnosis of one evaluated candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feedback {
    pub analysis: String,
    pub recommendations: Vec<String>,
}

fn pct(v: f64) -> String {
    format!("{:.1}%", 100.0 * v)
}

fn class_label(names: &[String], c: usize) -> String {
    names.get(c).map_or_else(|| format!("class {c}"), |n| format!("{n} samples"))
}

impl Feedback {
    /// Feedback for a round in which no candidate reached evaluation.
    pub fn empty_round(reasons: &[String]) -> Self {
        let mut analysis = String::from("No candidate of this round passed validation, so nothing was trained.");
        for (i, r) in reasons.iter().enumerate() {
            analysis.push_str(&format!("\n{}. {r}", i + 1));
        }
        Self {
            analysis,
            recommendations: vec!["Propose designs that stay inside the search space and differ from every archived design".into()],
        }
    }

    pub fn satisfied(&self) -> bool {
        self.recommendations.is_empty()
    }

    /// Text of the performance-feedback prompt, without its task line.
    pub fn render(&self) -> String {
        let recs = if self.recommendations.is_empty() {
            "None.".to_string()
        } else {
            self.recommendations.iter().enumerate().map(|(i, r)| format!("{}. {r}", i + 1)).collect::<Vec<_>>().join("\n")
        };
        let mut b = Bindings::new();
        b.insert("analysis".into(), self.analysis.clone());
        b.insert("recommendations".into(), recs);
        let ex = render("perf_feedback", &b, &[]).expect("perf_feedback template binds analysis and recommendations");
        let text = ex.last_user();
        text.split_once("\n\n").map_or(text, |(_, rest)| rest).to_string()
    }
}

/// Deterministic mapping from a record's metrics to diagnoses and
/// recommendations. `class_names` labels the minority class when given.
pub fn feedback_report(record: &Record, req: &Requirements, class_names: &[String]) -> Feedback {
    let mut issues = Vec::new();
    let mut recs = Vec::new();
    let d = &record.descriptor;
    match record.status {
        Status::Rejected => {
            issues.push(format!(
                "The design has {} trainable parameters, above the limit of {}, and was not trained",
                record.params, req.lambda_params
            ));
            recs.push(format!("Reduce layer widths or depth to bring the parameter count below {}", req.lambda_params));
        }
        Status::Aborted => {
            issues.push(format!(
                "Training stopped on numerical failure: {}",
                record.note.as_deref().unwrap_or("non-finite values")
            ));
            recs.push(format!("Lower the learning rate below {} or enable batch normalization", d.optim.lr));
        }
        Status::Evaluated => {
            if let Some(train) = record.train_accuracy {
                if train - record.accuracy > OVERFIT_GAP {
                    issues.push(format!(
                        "Training accuracy ({}) is well above validation accuracy ({}), indicating overfitting",
                        pct(train),
                        pct(record.accuracy)
                    ));
                    let next = ((d.dropout + 0.1).min(0.5) * 10.0).round() / 10.0;
                    let wd = if d.optim.weight_decay > 0.0 { d.optim.weight_decay.max(1e-4) } else { 1e-4 };
                    recs.push(format!("Add Dropout layers (suggested dropout={next}) and L2 regularization (lambda={wd:e})"));
                }
            }
            if let Some(m) = &record.metrics {
                let support = m.support();
                let minority = (0..support.len())
                    .filter(|&c| support[c] > 0)
                    .min_by(|&a, &b| support[a].cmp(&support[b]).then(m.recall[a].total_cmp(&m.recall[b])));
                if let Some(c) = minority {
                    if m.recall[c] < MINORITY_RECALL {
                        issues.push(format!(
                            "Recall rate for {} is low ({}), potentially requiring enhanced learning for minority classes",
                            class_label(class_names, c),
                            pct(m.recall[c])
                        ));
                        recs.push("Use Focal Loss instead of cross-entropy loss, alpha=0.75, gamma=2.0".into());
                    }
                }
            }
            if record.latency_ms > req.max_latency_ms {
                issues.push(format!(
                    "Inference time is {:.2} ms, exceeding real-time application requirements (<{} ms)",
                    record.latency_ms, req.max_latency_ms
                ));
                recs.push("Reduce network depth or width to compress the model".into());
            }
            if record.params > req.lambda_params {
                issues.push(format!("The model has {} parameters, above the limit of {}", record.params, req.lambda_params));
                recs.push(format!("Reduce layer widths to bring the parameter count below {}", req.lambda_params));
            }
            if record.accuracy < req.p_target && recs.is_empty() {
                issues.push(format!("Validation accuracy is below the target of {}", pct(req.p_target)));
                recs.push("Increase model capacity with wider or deeper layers".into());
            }
        }
    }
    let head = format!(
        "The current model achieves {} accuracy on the validation set with {} parameters and {:.2} ms inference time",
        pct(record.accuracy),
        record.params,
        record.latency_ms
    );
    let analysis = if issues.is_empty() {
        format!("{head}. All requirements are satisfied.")
    } else {
        let list: Vec<String> = issues.iter().enumerate().map(|(i, s)| format!("{}. {s}", i + 1)).collect();
        format!("{head}, with the following issues:\n{}", list.join("\n"))
    };
    Feedback { analysis, recommendations: recs }
}
