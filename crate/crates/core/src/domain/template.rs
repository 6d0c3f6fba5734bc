use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::DomainError;

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Literal(String),
    Placeholder(String),
}

/// A prompt with `{name}` placeholders. Literal braces are written `{{` and `}}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawTemplate", into = "RawTemplate")]
pub struct PromptTemplate {
    name: String,
    template_text: String,
    required_placeholders: BTreeSet<String>,
    segments: Vec<Segment>,
}

#[derive(Serialize, Deserialize)]
struct RawTemplate {
    name: String,
    template_text: String,
}

impl TryFrom<RawTemplate> for PromptTemplate {
    type Error = DomainError;
    fn try_from(raw: RawTemplate) -> Result<Self, Self::Error> {
        PromptTemplate::new(raw.name, raw.template_text)
    }
}

impl From<PromptTemplate> for RawTemplate {
    fn from(t: PromptTemplate) -> Self {
        RawTemplate {
            name: t.name,
            template_text: t.template_text,
        }
    }
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

fn parse_segments(name: &str, text: &str) -> Result<Vec<Segment>, DomainError> {
    let invalid = |offset: usize, reason: &str| DomainError::InvalidTemplate {
        name: name.to_string(),
        offset,
        reason: reason.to_string(),
    };

    let mut segments = Vec::new();
    let mut literal = String::new();
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        match c {
            '{' => {
                if matches!(chars.peek(), Some((_, '{'))) {
                    chars.next();
                    literal.push('{');
                    continue;
                }
                let mut ident = String::new();
                let mut closed = false;
                for (_, c) in chars.by_ref() {
                    if c == '}' {
                        closed = true;
                        break;
                    }
                    if !is_ident_char(c) {
                        return Err(invalid(i, "placeholder names may only contain [A-Za-z0-9_]"));
                    }
                    ident.push(c);
                }
                if !closed {
                    return Err(invalid(i, "unterminated placeholder"));
                }
                if ident.is_empty() {
                    return Err(invalid(i, "empty placeholder name"));
                }
                if !literal.is_empty() {
                    segments.push(Segment::Literal(std::mem::take(&mut literal)));
                }
                segments.push(Segment::Placeholder(ident));
            }
            '}' => {
                if matches!(chars.peek(), Some((_, '}'))) {
                    chars.next();
                    literal.push('}');
                } else {
                    return Err(invalid(i, "unmatched '}' (write '}}' for a literal brace)"));
                }
            }
            c => literal.push(c),
        }
    }
    if !literal.is_empty() {
        segments.push(Segment::Literal(literal));
    }
    Ok(segments)
}

impl PromptTemplate {
    /// Parses `template_text`; every placeholder it contains becomes required.
    pub fn new(name: impl Into<String>, template_text: impl Into<String>) -> Result<Self, DomainError> {
        let name = name.into();
        let template_text = template_text.into();
        let segments = parse_segments(&name, &template_text)?;
        let required_placeholders = segments
            .iter()
            .filter_map(|s| match s {
                Segment::Placeholder(p) => Some(p.clone()),
                Segment::Literal(_) => None,
            })
            .collect();
        Ok(Self {
            name,
            template_text,
            required_placeholders,
            segments,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn template_text(&self) -> &str {
        &self.template_text
    }

    pub fn required_placeholders(&self) -> &BTreeSet<String> {
        &self.required_placeholders
    }

    /// Substitutes every placeholder. Extra bindings are ignored.
    pub fn render(&self, bindings: &HashMap<&str, String>) -> Result<String, DomainError> {
        if let Some(missing) = self
            .required_placeholders
            .iter()
            .find(|p| !bindings.contains_key(p.as_str()))
        {
            return Err(DomainError::MissingPlaceholder(missing.clone()));
        }
        let mut out = String::with_capacity(self.template_text.len());
        for seg in &self.segments {
            match seg {
                Segment::Literal(s) => out.push_str(s),
                Segment::Placeholder(p) => out.push_str(&bindings[p.as_str()]),
            }
        }
        Ok(out)
    }
}

/// Free-function form of [`PromptTemplate::render`].
pub fn render_template(
    template: &PromptTemplate,
    bindings: &HashMap<&str, String>,
) -> Result<String, DomainError> {
    template.render(bindings)
}

/// Builds a binding map from `(name, value)` pairs.
pub fn bindings<'a, I, V>(pairs: I) -> HashMap<&'a str, String>
where
    I: IntoIterator<Item = (&'a str, V)>,
    V: Into<String>,
{
    pairs.into_iter().map(|(k, v)| (k, v.into())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::templates;

    #[test]
    fn diagnosis_template_renders_verbatim() {
        let t = templates::diagnosis();
        let out = t
            .render(&bindings([("phenotype_list", "short stature; seizures")]))
            .unwrap();
        assert_eq!(
            out,
            "Make diagnosis for this patient. Known phenotypes include: short stature; seizures. \
             Multiple local hospital evaluations failed to establish a definitive diagnosis."
        );
    }

    #[test]
    fn gene_template_prefix() {
        let out = templates::gene_prioritization()
            .render(&bindings([("phenotype_list", "hypotonia")]))
            .unwrap();
        assert!(out.starts_with("Consider you are a genetic counselor."));
        assert!(out.contains("The phenotype description of the patient is hypotonia."));
    }

    #[test]
    fn no_placeholders_is_identity() {
        let t = PromptTemplate::new("plain", "nothing to bind here").unwrap();
        assert!(t.required_placeholders().is_empty());
        assert_eq!(t.render(&HashMap::new()).unwrap(), "nothing to bind here");
    }

    #[test]
    fn missing_binding_is_reported_by_name() {
        let t = PromptTemplate::new("t", "a {x} b {y}").unwrap();
        assert_eq!(
            t.render(&bindings([("x", "1")])),
            Err(DomainError::MissingPlaceholder("y".into()))
        );
    }

    #[test]
    fn doubled_braces_are_literals() {
        let t = PromptTemplate::new("t", "{{json}} {v} }}").unwrap();
        assert_eq!(t.required_placeholders().len(), 1);
        assert_eq!(t.render(&bindings([("v", "ok")])).unwrap(), "{json} ok }");
    }

    #[test]
    fn malformed_templates_rejected() {
        for bad in ["{unterminated", "stray } brace", "{has space}", "{}"] {
            assert!(PromptTemplate::new("bad", bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn bound_values_are_not_reinterpreted() {
        let t = PromptTemplate::new("t", "[{v}]").unwrap();
        assert_eq!(t.render(&bindings([("v", "{other}")])).unwrap(), "[{other}]");
    }

    #[test]
    fn verification_template_has_appendix_placeholders() {
        let t = templates::error_detection();
        let names: Vec<_> = t.required_placeholders().iter().cloned().collect();
        assert_eq!(names, vec!["PHENOTYPE_LIST", "PROPOSED_DIAGNOSIS"]);
    }

    proptest::proptest! {
        #[test]
        fn rendering_is_pure(v in ".{0,40}") {
            let t = templates::diagnosis();
            let b = bindings([("phenotype_list", v)]);
            proptest::prop_assert_eq!(t.render(&b).unwrap(), t.render(&b).unwrap());
        }
    }
}
