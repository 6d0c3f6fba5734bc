//! Parsers for the summary agent's answer line and the in-loop verifier token.

use crate::domain::CandidateAnswer;
use crate::evaluation::LabelKind;

/// A parsed summary reply: the `ANSWER:` line plus any `ALT:` lines.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedAnswer {
    pub primary: CandidateAnswer,
    pub alternatives: Vec<CandidateAnswer>,
    /// Parse-boundary adjustments such as clamped confidences.
    pub warnings: Vec<String>,
}

fn strip_markup(line: &str) -> &str {
    line.trim()
        .trim_start_matches(['#', '>'])
        .trim()
        .trim_matches('*')
        .trim()
}

fn strip_prefix_ci<'a>(line: &'a str, prefix: &str) -> Option<&'a str> {
    let head = line.get(..prefix.len())?;
    head.eq_ignore_ascii_case(prefix).then(|| &line[prefix.len()..])
}

/// Parses `<label> | CONFIDENCE: <n>`. Confidence is clamped into `[0, 100]`.
fn parse_labeled(
    rest: &str,
    kind: LabelKind,
    rationale: &str,
    confidence_required: bool,
    warnings: &mut Vec<String>,
) -> Option<CandidateAnswer> {
    let (label, conf_part) = match rest.rsplit_once('|') {
        Some((l, c)) => (l, Some(c)),
        None => (rest, None),
    };
    let label = label.trim().trim_matches('*').trim();
    if label.is_empty() {
        return None;
    }
    let confidence = match conf_part {
        Some(c) => {
            let c = c.trim().trim_matches('*').trim();
            let value = strip_prefix_ci(c, "confidence")?;
            let value = value.trim_start().strip_prefix(':').unwrap_or(value);
            let value = value.trim().trim_matches('*').trim().trim_end_matches('%').trim();
            let parsed: f64 = value.parse().ok().filter(|v: &f64| v.is_finite())?;
            if !(0.0..=100.0).contains(&parsed) {
                let clamped = parsed.clamp(0.0, 100.0);
                warnings.push(format!("confidence {parsed} for {label:?} clamped to {clamped}"));
                clamped
            } else {
                parsed
            }
        }
        None if confidence_required => return None,
        None => {
            warnings.push(format!("alternative {label:?} has no confidence; using 0"));
            0.0
        }
    };
    CandidateAnswer::new(label, kind, confidence, rationale).ok()
}

/// Finds the last `ANSWER: <label> | CONFIDENCE: <n>` line. Everything that
/// is not an answer or `ALT:` line becomes the rationale.
pub fn parse_answer(text: &str, kind: LabelKind) -> Option<ParsedAnswer> {
    let mut rationale_lines = Vec::new();
    let mut answer_line = None;
    let mut alt_lines = Vec::new();
    for line in text.lines() {
        let clean = strip_markup(line);
        if let Some(rest) = strip_prefix_ci(clean, "answer:") {
            answer_line = Some(rest.to_string());
        } else if let Some(rest) = strip_prefix_ci(clean, "alt:") {
            alt_lines.push(rest.to_string());
        } else {
            rationale_lines.push(line);
        }
    }
    let rationale = rationale_lines.join("\n").trim().to_string();
    let mut warnings = Vec::new();
    let primary = parse_labeled(&answer_line?, kind, &rationale, true, &mut warnings)?;
    let alternatives = alt_lines
        .iter()
        .filter_map(|l| parse_labeled(l, kind, "", false, &mut warnings))
        .collect();
    Some(ParsedAnswer {
        primary,
        alternatives,
        warnings,
    })
}

/// In-loop verifier decision.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoopVerdict {
    pub accepted: bool,
    pub rationale: String,
}

/// Reads the first `VERDICT: ACCEPT|REJECT [- reason]` line. A rejection
/// without an inline reason takes the following lines as its rationale.
pub fn parse_loop_verdict(text: &str) -> Option<LoopVerdict> {
    let lines: Vec<&str> = text.lines().collect();
    for (i, line) in lines.iter().enumerate() {
        let clean = strip_markup(line);
        let Some(rest) = strip_prefix_ci(clean, "verdict:") else {
            continue;
        };
        let rest = rest.trim().trim_matches('*').trim();
        let word_end = rest.find(|c: char| !c.is_ascii_alphabetic()).unwrap_or(rest.len());
        let accepted = match rest[..word_end].to_ascii_uppercase().as_str() {
            "ACCEPT" => true,
            "REJECT" => false,
            _ => return None,
        };
        let mut rationale = rest[word_end..]
            .trim_start_matches(|c: char| c.is_whitespace() || "-—–:,.;*".contains(c))
            .trim()
            .to_string();
        if !accepted && rationale.is_empty() {
            rationale = lines[i + 1..].join("\n").trim().to_string();
        }
        return Some(LoopVerdict { accepted, rationale });
    }
    None
}
