//! Deterministic stand-in for the Strategist and Generator models, used by
//! the offline backend. It reads only what its prompt shows: the Strategist
//! parses the history table, the Generator parses the narrowed space.

use std::collections::HashSet;

use tsa_llm::{parse_single_block, render_block, task_of, ChatExchange, MockPolicy};
use tsa_nn::ARCHITECTURE_SCHEMA;

use crate::history::{parse_table, summarize};
use crate::roles::{Strategy, STRATEGY_SCHEMA};
use crate::space::{canonical_digest, Axis, Point, SearchSpace, SPACE_SCHEMA};

/// Local search around the best feasible design: the next round varies one
/// design choice of the incumbent (the ones named by the latest feedback
/// first) over values that have not been tried yet.
#[derive(Debug, Clone, Copy, Default)]
pub struct SearchPolicy;

impl MockPolicy for SearchPolicy {
    fn respond(&self, exchange: &ChatExchange) -> Option<String> {
        let text = exchange.last_user();
        match task_of(text)? {
            "strategist" => strategist_reply(text),
            "generator" => generator_reply(text),
            _ => None,
        }
    }
}

fn section<'t>(text: &'t str, start: &str, end: &str) -> &'t str {
    let Some(from) = text.find(start).map(|i| i + start.len()) else {
        return "";
    };
    let rest = &text[from..];
    &rest[..rest.find(end).unwrap_or(rest.len())]
}

/// Axes the feedback asks to change, in the order it asks.
fn preferred_axes(feedback: &str) -> Vec<Axis> {
    let mut out = Vec::new();
    if feedback.contains("Focal Loss") {
        out.push(Axis::Loss);
    }
    if feedback.contains("Dropout") {
        out.push(Axis::Dropout);
    }
    if feedback.contains("compress") || feedback.contains("Reduce layer widths") {
        out.extend([Axis::Hidden, Axis::Family, Axis::Attention]);
    }
    if feedback.contains("Lower the learning rate") {
        out.push(Axis::Lr);
    }
    if feedback.contains("Increase model capacity") {
        out.extend([Axis::Hidden, Axis::Family, Axis::Temporal, Axis::Spatial]);
    }
    let mut seen = HashSet::new();
    out.retain(|a| seen.insert(*a));
    out
}

struct View {
    space: SearchSpace,
    points: Vec<(Point, String)>,
}

impl View {
    fn index(&self, p: &[usize]) -> Option<usize> {
        self.points.iter().position(|(q, _)| q == p)
    }

    fn visited(&self, p: &[usize], seen: &HashSet<String>) -> bool {
        self.index(p).is_some_and(|i| seen.iter().any(|s| self.points[i].1.starts_with(s.as_str())))
    }

    /// Unvisited valid points on the line through `u` along `axis`, as menu indices.
    fn open_line(&self, u: &[usize], axis: Axis, seen: &HashSet<String>) -> Vec<usize> {
        (0..self.space.menu_len(axis))
            .filter(|&v| {
                let mut q = u.to_vec();
                q[axis as usize] = v;
                let q = self.space.canonical_point(&q);
                self.index(&q).is_some() && !self.visited(&q, seen)
            })
            .collect()
    }
}

fn strategist_reply(text: &str) -> Option<String> {
    let space: SearchSpace = parse_single_block(text, SPACE_SCHEMA).ok()?;
    let history = section(text, "History of evaluated architectures:", "Latest performance feedback:");
    let feedback = section(text, "Latest performance feedback:", "Reply with");
    let rows = parse_table(history);
    let seen: HashSet<String> = rows.iter().map(|r| r.digest_prefix.clone()).collect();
    let view = View {
        points: space.descriptors().map(|(p, d)| (p, canonical_digest(&d))).collect(),
        space,
    };
    let incumbent = rows
        .iter()
        .filter(|r| r.feasible)
        .fold(None, |best: Option<&crate::history::TableRow>, r| match best {
            Some(b) if b.accuracy >= r.accuracy => Some(b),
            _ => Some(r),
        })
        .and_then(|r| view.points.iter().find(|(_, d)| d.starts_with(&r.digest_prefix)).map(|(p, _)| (p.clone(), r.accuracy)));

    let mut axes = preferred_axes(feedback);
    for a in Axis::ALL {
        if !axes.contains(&a) {
            axes.push(a);
        }
    }
    let choice: Option<(Point, Axis, Vec<usize>)> = incumbent
        .as_ref()
        .and_then(|(b, _)| {
            axes.iter()
                .filter(|&&a| view.space.relevant(a, b) || a == Axis::Family)
                .map(|&a| (a, view.open_line(b, a, &seen)))
                .find(|(_, line)| !line.is_empty())
                .map(|(a, line)| (b.clone(), a, line))
        })
        .or_else(|| {
            let (u, _) = view.points.iter().find(|(p, _)| !view.visited(p, &seen))?;
            let (a, line) = Axis::ALL
                .iter()
                .map(|&a| (a, view.open_line(u, a, &seen)))
                .filter(|(a, _)| view.space.relevant(*a, u) || *a == Axis::Family)
                .fold(None, |best: Option<(Axis, Vec<usize>)>, (a, line)| match best {
                    Some((_, ref l)) if l.len() >= line.len() => best,
                    _ => Some((a, line)),
                })?;
            Some((u.clone(), a, line))
        });

    let (direction, narrow) = match choice {
        Some((u, axis, line)) => {
            let mut choices: Vec<Vec<usize>> = u.iter().map(|&i| vec![i]).collect();
            choices[axis as usize] = line.clone();
            let anchor = view.space.build(&u).map(|d| summarize(&d)).unwrap_or_default();
            let direction = match &incumbent {
                None => format!("Start from a baseline {anchor} and compare its {} options.", axis.name()),
                Some((_, acc)) => format!(
                    "The best feasible design so far reaches {acc:.4} validation accuracy ({anchor}). \
                     Keep it and vary {} over the untried options.",
                    axis.name()
                ),
            };
            (direction, view.space.narrowing(&choices))
        }
        None => {
            let fixed: Vec<Vec<usize>> = incumbent.as_ref().map_or_else(
                || view.points[0].0.iter().map(|&i| vec![i]).collect(),
                |(b, _)| b.iter().map(|&i| vec![i]).collect(),
            );
            ("Every design in the search space has been evaluated; keep the incumbent.".to_string(), view.space.narrowing(&fixed))
        }
    };
    let strategy = Strategy { direction: direction.clone(), narrow };
    Some(format!("{direction}\n\n{}", render_block(STRATEGY_SCHEMA, &strategy)))
}

fn generator_reply(text: &str) -> Option<String> {
    let space: SearchSpace = parse_single_block(text, SPACE_SCHEMA).ok()?;
    let count: usize = section(text, "Propose up to ", " candidates").trim().parse().ok()?;
    let mut out = String::new();
    for (i, (_, d)) in space.descriptors().take(count).enumerate() {
        out.push_str(&format!("Candidate {}: {}\n{}\n", i + 1, summarize(&d), render_block(ARCHITECTURE_SCHEMA, &d)));
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::History;
    use crate::requirements::Requirements;
    use crate::roles::{generator_step, strategist_step};
    use std::sync::Arc;
    use tsa_llm::MockBackend;
    use tsa_nn::{Family, LossSpec};

    fn twelve() -> SearchSpace {
        SearchSpace {
            families: vec![Family::Mlp],
            hidden: vec![vec![8], vec![16], vec![16, 8]],
            dropout: vec![0.0, 0.2],
            lr: vec![1e-3, 1e-2],
            loss: vec![LossSpec::WeightedCe],
            batch_size: vec![64],
            ..SearchSpace::desk()
        }
    }

    #[test]
    fn empty_history_gives_a_baseline_strategy() {
        let b = MockBackend::with_policy(Arc::new(SearchPolicy));
        let out = strategist_step(&b, &History::new(), &Requirements::default(), &SearchSpace::desk(), "none", 1, &mut Vec::new()).unwrap();
        assert!(out.strategy.direction.starts_with("Start from a baseline mlp"), "{}", out.strategy.direction);
        assert_eq!(out.space.families.len() * out.space.hidden.len(), 4);
        assert!(out.warnings.is_empty());
    }

    #[test]
    fn generator_enumerates_the_narrowed_space() {
        let b = MockBackend::with_policy(Arc::new(SearchPolicy));
        let mut log = Vec::new();
        let out = strategist_step(&b, &History::new(), &Requirements::default(), &twelve(), "", 1, &mut log).unwrap();
        let found = generator_step(&b, &out, 10, 1, &mut log).unwrap();
        let expect: Vec<_> = out.space.descriptors().map(|(_, d)| d).collect();
        assert_eq!(found, expect);
        assert_eq!(found.len(), 3);
    }

    #[test]
    fn feedback_moves_the_named_axis_first() {
        assert_eq!(preferred_axes("2. Use Focal Loss instead of cross-entropy loss\n1. Add Dropout layers")[..2], [Axis::Loss, Axis::Dropout]);
        assert!(preferred_axes("All requirements are satisfied.").is_empty());
    }
}
