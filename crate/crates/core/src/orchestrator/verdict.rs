//! Parser for the three-section verification reply.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::domain::{Assessment, VerifierVerdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VerdictSection {
    DiagnosisAssessment,
    FinalDiagnosis,
    Reasoning,
}

impl VerdictSection {
    pub const ALL: [VerdictSection; 3] = [
        VerdictSection::DiagnosisAssessment,
        VerdictSection::FinalDiagnosis,
        VerdictSection::Reasoning,
    ];

    pub fn header(self) -> &'static str {
        match self {
            VerdictSection::DiagnosisAssessment => "Diagnosis Assessment",
            VerdictSection::FinalDiagnosis => "Final Diagnosis",
            VerdictSection::Reasoning => "Reasoning",
        }
    }
}

impl fmt::Display for VerdictSection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.header())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("malformed verdict: section {section} {problem}")]
pub struct MalformedVerdict {
    pub section: VerdictSection,
    pub problem: String,
}

impl MalformedVerdict {
    fn missing(section: VerdictSection) -> Self {
        Self {
            section,
            problem: "is missing or empty".into(),
        }
    }
}

/// Header text with markdown emphasis and heading marks removed.
fn clean(line: &str) -> String {
    line.replace(['*', '_'], "").trim().trim_start_matches('#').trim().to_string()
}

/// If `line` opens a section, returns it with the same-line remainder.
fn section_start(line: &str) -> Option<(VerdictSection, String)> {
    let c = clean(line);
    for section in VerdictSection::ALL {
        let header = section.header();
        let Some(head) = c.get(..header.len()) else { continue };
        if !head.eq_ignore_ascii_case(header) {
            continue;
        }
        let rest = c[header.len()..].trim_start();
        if let Some(value) = rest.strip_prefix(':') {
            return Some((section, value.trim().to_string()));
        }
    }
    None
}

/// Splits a reply into `Diagnosis Assessment`, `Final Diagnosis` and
/// `Reasoning`. Headers are case-insensitive and may carry markdown markup;
/// the assessment must be exactly `Correct` or `Incorrect`. The first section
/// that is absent or empty is reported.
pub fn parse_verdict(text: &str) -> Result<VerifierVerdict, MalformedVerdict> {
    let lines: Vec<&str> = text.lines().collect();
    let mut bodies: [Option<Vec<String>>; 3] = [None, None, None];
    let mut current: Option<usize> = None;
    for line in &lines {
        if let Some((section, first)) = section_start(line) {
            let idx = VerdictSection::ALL.iter().position(|s| *s == section).unwrap_or(0);
            if bodies[idx].is_none() {
                bodies[idx] = Some(if first.is_empty() { Vec::new() } else { vec![first] });
                current = Some(idx);
                continue;
            }
            current = None;
            continue;
        }
        if let Some(idx) = current {
            if let Some(body) = bodies[idx].as_mut() {
                body.push(line.to_string());
            }
        }
    }
    let joined = |idx: usize| -> Option<String> {
        let body = bodies[idx].as_ref()?.join("\n");
        let body = body.trim().to_string();
        (!body.is_empty()).then_some(body)
    };
    let first_line = |idx: usize| -> Option<String> {
        bodies[idx]
            .as_ref()?
            .iter()
            .map(|l| clean(l))
            .find(|l| !l.is_empty())
    };

    let assessment_text =
        first_line(0).ok_or_else(|| MalformedVerdict::missing(VerdictSection::DiagnosisAssessment))?;
    let assessment = if assessment_text.eq_ignore_ascii_case("correct") {
        Assessment::Correct
    } else if assessment_text.eq_ignore_ascii_case("incorrect") {
        Assessment::Incorrect
    } else {
        return Err(MalformedVerdict {
            section: VerdictSection::DiagnosisAssessment,
            problem: format!("must be Correct or Incorrect, got {assessment_text:?}"),
        });
    };
    let final_diagnosis =
        first_line(1).ok_or_else(|| MalformedVerdict::missing(VerdictSection::FinalDiagnosis))?;
    let reasoning = joined(2).ok_or_else(|| MalformedVerdict::missing(VerdictSection::Reasoning))?;
    Ok(VerifierVerdict {
        assessment,
        final_diagnosis,
        reasoning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const WELL_FORMED: &str = "Diagnosis Assessment: Incorrect\nFinal Diagnosis: Distal arthrogryposis, type 10\nReasoning:\n- Contractures fit DA10.\n- Ptosis is atypical for the proposal.";

    #[test]
    fn parses_all_sections() {
        let v = parse_verdict(WELL_FORMED).unwrap();
        assert_eq!(v.assessment, Assessment::Incorrect);
        assert_eq!(v.final_diagnosis, "Distal arthrogryposis, type 10");
        assert_eq!(v.reasoning, "- Contractures fit DA10.\n- Ptosis is atypical for the proposal.");
    }

    #[test]
    fn tolerates_case_and_markdown() {
        let text = "## **diagnosis assessment:** CORRECT\n**Final Diagnosis:**\nKabuki syndrome\n\n### Reasoning:\nFits well.";
        let v = parse_verdict(text).unwrap();
        assert_eq!(v.assessment, Assessment::Correct);
        assert_eq!(v.final_diagnosis, "Kabuki syndrome");
        assert_eq!(v.reasoning, "Fits well.");
    }

    #[test]
    fn each_deleted_section_is_named() {
        let lines: Vec<&str> = WELL_FORMED.lines().collect();
        let without = |skip: &[usize]| {
            lines
                .iter()
                .enumerate()
                .filter(|(i, _)| !skip.contains(i))
                .map(|(_, l)| *l)
                .collect::<Vec<_>>()
                .join("\n")
        };
        assert_eq!(parse_verdict(&without(&[0])).unwrap_err().section, VerdictSection::DiagnosisAssessment);
        assert_eq!(parse_verdict(&without(&[1])).unwrap_err().section, VerdictSection::FinalDiagnosis);
        assert_eq!(parse_verdict(&without(&[2, 3, 4])).unwrap_err().section, VerdictSection::Reasoning);
        assert_eq!(parse_verdict("").unwrap_err().section, VerdictSection::DiagnosisAssessment);
    }

    #[test]
    fn assessment_token_is_strict() {
        let text = WELL_FORMED.replace("Incorrect", "Probably incorrect");
        let err = parse_verdict(&text).unwrap_err();
        assert_eq!(err.section, VerdictSection::DiagnosisAssessment);
        assert!(err.problem.contains("Probably incorrect"));
    }

    #[test]
    fn empty_reasoning_is_missing() {
        let text = "Diagnosis Assessment: Correct\nFinal Diagnosis: X\nReasoning:\n   ";
        assert_eq!(parse_verdict(text).unwrap_err().section, VerdictSection::Reasoning);
    }
}
