//! Case summaries for prompts and the built-in retrieval corpus.

use tsa_core::grid::GridCase;
use tsa_llm::{DocKind, Document};

use crate::request::SCENARIO_FIELDS;

/// One-paragraph description listing every element id the model may use.
pub fn describe_case(case: &GridCase) -> String {
    let buses: Vec<String> = case.buses.iter().map(|b| b.id.to_string()).collect();
    let lines: Vec<String> = case
        .lines
        .iter()
        .enumerate()
        .filter(|(_, l)| l.in_service())
        .map(|(k, l)| format!("{k}:{}-{}", l.from, l.to))
        .collect();
    let gens: Vec<String> = case.generators.iter().enumerate().map(|(k, g)| format!("{k}@bus{}", g.bus)).collect();
    let load: f64 = case.buses.iter().map(|b| b.p_load).sum::<f64>() * case.sbase_mva;
    format!(
        "case {name}, {f0} Hz, {nb} buses with ids [{buses}], {nl} in-service lines as index:from-to [{lines}], \
         {ng} generators as index@bus [{gens}], total load {load:.1} MW",
        name = case.name,
        f0 = case.f0_hz,
        nb = case.buses.len(),
        buses = buses.join(", "),
        nl = lines.len(),
        lines = lines.join(", "),
        ng = gens.len(),
        gens = gens.join(", "),
    )
}

/// Reference documents covering the four corpus kinds.
pub fn builtin_corpus(case: &GridCase) -> Vec<Document> {
    let doc = |id: &str, kind: DocKind, text: String| Document { source_id: id.to_string(), kind, text };
    vec![
        doc(
            "user-guide/requests",
            DocKind::UserGuide,
            "Writing study requests. Name the fault type (three-phase, single line to ground, line trip or generator \
             trip), the location (bus ids for bus faults, line or generator indices for trips) and the clearing time \
             in milliseconds. A sweep varies the clearing time over a range such as 50 to 500 ms in fixed steps. A \
             dataset goal asks for a number of random scenarios within ranges of location, clearing time and load \
             level and a class balance target such as 0.5 stable to unstable."
                .into(),
        ),
        doc(
            "user-guide/system",
            DocKind::UserGuide,
            format!("System under study: {}.", describe_case(case)),
        ),
        doc(
            "case-study/bus16",
            DocKind::CaseStudy,
            "Case study, three-phase fault on the 39-bus system. Fault type: three-phase short circuit. Location: bus \
             16. Fault inception time: 1.0 second. Fault clearing time: 1.1 seconds. Fault impedance: resistance 0.01 \
             ohm and reactance 0.001 ohm. Load level: 1.0 times nominal. Expected outcome: the system remains stable \
             after clearing."
                .into(),
        ),
        doc(
            "case-study/renewables",
            DocKind::CaseStudy,
            "Case study, high renewable share. With 30 percent of synchronous generation replaced by converter-based \
             plants the system inertia drops and the frequency nadir after a generator trip deepens. Sweeping the \
             clearing time of bus faults near the converter plants shows a shorter critical clearing time than in the \
             base case."
                .into(),
        ),
        doc(
            "syntax/scenario-v1",
            DocKind::SyntaxManual,
            format!(
                "Scenario block syntax. Answer with a fenced block tagged scenario/v1 holding TOML with the fields:\n\
                 {SCENARIO_FIELDS}\nTimes are absolute seconds. Bus faults need both r_f and x_f. Unknown fields are rejected."
            ),
        ),
        doc(
            "knowledge/criteria",
            DocKind::GeneralKnowledge,
            "Transient stability criteria. Rotor angle stability is lost when the largest angle difference between \
             any two synchronous machines exceeds 180 degrees. Voltage stability is violated when a bus voltage stays \
             outside 0.8 to 1.2 per unit after the fault is cleared. Frequency stability is violated when the centre \
             of inertia frequency deviates from nominal by more than the allowed band. Longer clearing times, heavier \
             loading and faults close to large generators reduce the stability margin."
                .into(),
        ),
    ]
}
