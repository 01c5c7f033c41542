//! Rule-based offline provider. Recognizes each bundled prompt kind by its
//! role text and answers in the format the prompt asks for, derived only
//! from the prompt's final slots.

use sha2::{Digest, Sha256};

use super::{GenerationParams, TextProvider};
use crate::error::Result;
use crate::markers::{slot, Occurrence};
use crate::model::{Label, Triple};
use crate::sampler::parse_quantity;

const NO_FALLACY: &str =
    "Therefore, there are no fallacies, faulty reasoning, or incorrect conclusions present in this query and response.";
const FALLACY: &str = "Therefore, there is an incorrect conclusion in this query and response.";

#[derive(Debug, Clone)]
pub struct MockProvider {
    name: String,
}

impl Default for MockProvider {
    fn default() -> Self {
        Self::new("mock")
    }
}

impl MockProvider {
    pub fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
        }
    }

    /// Deterministic pseudo-label from the provider name and a text.
    fn coin(&self, text: &str) -> Label {
        let d = Sha256::digest(format!("{}\0{}", self.name, text).as_bytes());
        if d[0] & 1 == 0 {
            Label::Factual
        } else {
            Label::NonFactual
        }
    }
}

impl TextProvider for MockProvider {
    fn complete(&self, prompt: &str, _params: &GenerationParams) -> Result<String> {
        let last = |name: &str| slot(prompt, name, Occurrence::Last).unwrap_or("");
        let out = if prompt.contains("fallacy find task") {
            evidence_chain(last("Golden Label"), last("Response"), last("Evidence"))
        } else if prompt.contains("Fact Verdict Manager") {
            manager(last("Truth Guardian"), last("Truth Seeker"), last("Response"))
        } else if prompt.contains("\"fallacy finder\"") {
            let response = last("Response");
            judgment(self.coin(response), response)
        } else if prompt.contains("#Claim#") {
            let claim = last("Claim");
            judgment(self.coin(claim), claim)
        } else if prompt.contains("question generator") {
            format!("#Query#: Could you clarify whether {}?", sentence_core(last("Response")))
        } else if prompt.contains("#Knowledge#") {
            let triples = parse_knowledge(last("Knowledge"));
            if triples.is_empty() {
                None
            } else if prompt.contains("multi-hop") {
                Some(chain_qr(&triples))
            } else if prompt.contains("quantitative comparison") {
                comparison_qr(&triples)
            } else if prompt.contains("set operation") {
                setop_qr(&triples)
            } else {
                None
            }
            .unwrap_or_else(|| "I cannot determine this.".to_string())
        } else {
            "I cannot determine this.".to_string()
        };
        Ok(out)
    }

    fn identity(&self) -> &str {
        &self.name
    }
}

fn sentence_core(s: &str) -> &str {
    s.trim().trim_end_matches(['.', '!', '?'])
}

fn parse_knowledge(slot: &str) -> Vec<Triple> {
    serde_json::from_str::<Vec<Triple>>(&format!("[{slot}]")).unwrap_or_default()
}

fn fmt_number(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

fn perturb(tail: &str) -> String {
    if let Some((x, unit)) = parse_quantity(tail) {
        let bumped = fmt_number(x + 2.0);
        return if unit.is_empty() {
            bumped
        } else {
            format!("{bumped} {unit}")
        };
    }
    let words: Vec<&str> = tail.split_whitespace().collect();
    if words.len() > 1 {
        words.into_iter().rev().collect::<Vec<_>>().join(" ")
    } else {
        format!("{tail} II")
    }
}

fn qr(query: &str, correct: &str, incorrect: &str) -> String {
    format!("#Query#: {query}\n#Correct response#: {correct}\n#Incorrect response#: {incorrect}")
}

fn chain_qr(triples: &[Triple]) -> String {
    let start = triples[0].head();
    let mut subject = start.to_string();
    for t in triples {
        subject = format!("the {} of {}", t.relation(), subject);
    }
    let query = format!("Please tell me, what is {subject}?");
    let steps: Vec<String> = triples
        .iter()
        .map(|t| format!("the {} of {} is {}", t.relation(), t.head(), t.tail()))
        .collect();
    let last = triples.last().expect("non-empty");
    let mut wrong = steps.clone();
    *wrong.last_mut().expect("non-empty") = format!(
        "the {} of {} is {}",
        last.relation(),
        last.head(),
        perturb(last.tail())
    );
    let sentence = |parts: Vec<String>| {
        let mut s = parts.join(", and ");
        if let Some(c) = s.get(0..1) {
            s.replace_range(0..1, &c.to_uppercase());
        }
        s + "."
    };
    qr(&query, &sentence(steps), &sentence(wrong))
}

fn comparison_qr(triples: &[Triple]) -> Option<String> {
    let measured: Vec<(&Triple, f64)> = triples
        .iter()
        .filter_map(|t| parse_quantity(t.tail()).map(|(x, _)| (t, x)))
        .collect();
    if measured.len() < 2 {
        return None;
    }
    let rel = measured[0].0.relation();
    let names: Vec<&str> = measured.iter().map(|(t, _)| t.head()).collect();
    let (hi, _) = measured
        .iter()
        .copied()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty");
    let (lo, _) = measured
        .iter()
        .copied()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty");
    let values: Vec<String> = measured
        .iter()
        .map(|(t, _)| format!("{}'s {} is {}", t.head(), rel, t.tail()))
        .collect();
    let query = format!(
        "Could you kindly tell me which has the greatest {rel} among {}?",
        names.join(" and ")
    );
    let correct = format!("{} has the greatest {rel}. {}.", hi.head(), values.join(" while "));
    let incorrect = format!("{} has the greatest {rel}. {}.", lo.head(), values.join(" while "));
    Some(qr(&query, &correct, &incorrect))
}

fn setop_qr(triples: &[Triple]) -> Option<String> {
    let mut members: Vec<&str> = Vec::new();
    let mut constraints: Vec<(&str, &str)> = Vec::new();
    for t in triples {
        if !members.contains(&t.head()) {
            members.push(t.head());
        }
        if !constraints.contains(&(t.relation(), t.tail())) {
            constraints.push((t.relation(), t.tail()));
        }
    }
    if members.len() < 2 {
        return None;
    }
    let crit: Vec<String> = constraints
        .iter()
        .map(|(r, t)| format!("{r} {t}"))
        .collect();
    let query = format!(
        "Could you provide the names of all entities with {}?",
        crit.join(" and ")
    );
    let quoted: Vec<String> = members.iter().map(|m| format!("\"{m}\"")).collect();
    let correct = format!("The entities that meet the given criteria are {}.", quoted.join(" and "));
    let incorrect = format!("The only entity that meets the given criteria is {}.", quoted[0]);
    Some(qr(&query, &correct, &incorrect))
}

fn evidence_text(evidence: &str) -> String {
    let triples = parse_knowledge(evidence);
    if triples.is_empty() {
        evidence
            .trim()
            .trim_start_matches('[')
            .trim_end_matches(']')
            .trim()
            .trim_end_matches('.')
            .to_string()
    } else {
        triples
            .iter()
            .map(|t| format!("{} {} {}", t.head(), t.relation(), t.tail()))
            .collect::<Vec<_>>()
            .join("; ")
    }
}

fn evidence_chain(golden: &str, response: &str, evidence: &str) -> String {
    let factual = golden.trim().eq_ignore_ascii_case("FACTUAL");
    let label = if factual { Label::Factual } else { Label::NonFactual };
    let verdict = if factual { "correct" } else { "incorrect" };
    let close = if factual { NO_FALLACY } else { FALLACY };
    format!(
        "{}. The answer that {} is {verdict}. According to the evidence, {}. {close}",
        label.as_str(),
        sentence_core(response),
        evidence_text(evidence)
    )
}

fn judgment(label: Label, subject: &str) -> String {
    let (verdict, close) = match label {
        Label::Factual => ("correct", NO_FALLACY),
        Label::NonFactual => ("incorrect", FALLACY),
    };
    format!(
        "{}. The response that {} is {verdict}. {close}",
        label.as_str(),
        sentence_core(subject)
    )
}

fn manager(guardian: &str, seeker: &str, response: &str) -> String {
    use crate::metrics::extract_label;
    let g = extract_label(guardian).label();
    let s = extract_label(seeker).label();
    let label = match (g, s) {
        (_, Some(s)) => s,
        (Some(g), None) => g,
        (None, None) => return "Both opinions are inconclusive.".to_string(),
    };
    let basis = if g == Some(label) && s == Some(label) {
        "Both judges agree and the evidence does not contradict them."
    } else {
        "The Truth Seeker's opinion is supported by the returned evidence."
    };
    format!(
        "As the Fact Verdict Manager, after cross-referencing both opinions and the evidence, I have reached the following verdict: {}",
        judgment(label, response).replacen(". ", &format!(". {basis} "), 1)
    )
}
