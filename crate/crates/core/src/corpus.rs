//! Statement corpora: loading, saving, importing, and expansion into
//! variant prompts.
//!
//! Corpus files hold one flat JSON object per line. Lines starting with `#`
//! and blank lines are skipped.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CorpusError;
use crate::logic::{apply_rule, LogicalRule, NegationStyle, Variant};

pub const MEDICAL_SAMPLE: &str = include_str!("../data/medical_sample.jsonl");
pub const ENVIRONMENTAL_SAMPLE: &str = include_str!("../data/environmental_sample.jsonl");

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Domain {
    Medical,
    Environmental,
    Other(String),
}

impl Domain {
    pub fn as_str(&self) -> &str {
        match self {
            Domain::Medical => "medical",
            Domain::Environmental => "environmental",
            Domain::Other(name) => name,
        }
    }
}

impl From<&str> for Domain {
    fn from(s: &str) -> Self {
        match s {
            "medical" => Domain::Medical,
            "environmental" => Domain::Environmental,
            other => Domain::Other(other.to_string()),
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for Domain {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Domain {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Ok(Domain::from(s.as_str()))
    }
}

/// An accepted causal implication `antecedent => consequent`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Statement {
    pub id: String,
    pub domain: Domain,
    pub antecedent: String,
    pub consequent: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub antecedent_neg: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub consequent_neg: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl Statement {
    pub fn new(
        id: impl Into<String>,
        domain: Domain,
        antecedent: impl Into<String>,
        consequent: impl Into<String>,
    ) -> Self {
        Self {
            id: id.into(),
            domain,
            antecedent: antecedent.into(),
            consequent: consequent.into(),
            antecedent_neg: None,
            consequent_neg: None,
            source: None,
        }
    }
}

const REQUIRED: [&str; 4] = ["id", "domain", "antecedent", "consequent"];

/// Parse corpus text. `line` numbers in errors are 1-based.
pub fn parse_corpus(text: &str) -> Result<Vec<Statement>, CorpusError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let value: Value = serde_json::from_str(trimmed).map_err(|e| CorpusError::Parse {
            line,
            message: e.to_string(),
        })?;
        let obj = value.as_object().ok_or_else(|| CorpusError::Parse {
            line,
            message: "expected a JSON object".into(),
        })?;
        for field in REQUIRED {
            match obj.get(field) {
                None | Some(Value::Null) => return Err(CorpusError::MissingField { line, field }),
                Some(Value::String(s)) if s.trim().is_empty() => return Err(CorpusError::EmptyField { line, field }),
                _ => {}
            }
        }
        let statement: Statement = serde_json::from_value(value).map_err(|e| CorpusError::Parse {
            line,
            message: e.to_string(),
        })?;
        if !seen.insert(statement.id.clone()) {
            return Err(CorpusError::DuplicateId { line, id: statement.id });
        }
        out.push(statement);
    }
    Ok(out)
}

pub fn load_corpus(path: &Path) -> Result<Vec<Statement>, CorpusError> {
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_corpus(&text)
}

/// Serialize statements in the corpus line format. Comments are not kept.
pub fn corpus_to_string(statements: &[Statement]) -> String {
    let mut out = String::new();
    for s in statements {
        out.push_str(&serde_json::to_string(s).expect("statement serializes"));
        out.push('\n');
    }
    out
}

pub fn save_corpus(path: &Path, statements: &[Statement]) -> Result<(), CorpusError> {
    let write = || -> std::io::Result<()> {
        let mut file = fs::File::create(path)?;
        file.write_all(corpus_to_string(statements).as_bytes())?;
        file.sync_all()
    };
    write().map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

const SEPARATORS: [&str; 7] = ["$\\implies$", "\\implies", "⟹", "=>", "→", "->", " implies "];

fn split_implication(line: &str) -> Option<(&str, &str)> {
    SEPARATORS
        .iter()
        .find_map(|sep| line.find(sep).map(|at| (&line[..at], &line[at + sep.len()..])))
}

/// Convert plain "A implies B" lines into statements with ids
/// `{id_prefix}001`, `{id_prefix}002`, ... Blank and `#` lines are skipped;
/// a trailing period on the consequent is dropped.
pub fn import_plain_text(text: &str, domain: Domain, id_prefix: &str) -> Result<Vec<Statement>, CorpusError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (lhs, rhs) = split_implication(trimmed).ok_or_else(|| CorpusError::Parse {
            line,
            message: format!("no implication separator in `{trimmed}`"),
        })?;
        let antecedent = lhs.trim();
        let consequent = rhs.trim().trim_end_matches('.').trim_end();
        if antecedent.is_empty() {
            return Err(CorpusError::EmptyField {
                line,
                field: "antecedent",
            });
        }
        if consequent.is_empty() {
            return Err(CorpusError::EmptyField {
                line,
                field: "consequent",
            });
        }
        out.push(Statement::new(
            format!("{id_prefix}{:03}", out.len() + 1),
            domain.clone(),
            antecedent,
            consequent,
        ));
    }
    Ok(out)
}

/// Question template with `{lhs}` and `{rhs}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    text: String,
}

impl PromptTemplate {
    pub const DEFAULT_TEXT: &'static str =
        "Is the statement \"{lhs} implies {rhs}\" correct? Respond with exactly one word: TRUE or FALSE.";
    pub const BARE_TEXT: &'static str = "Is the statement \"{lhs} implies {rhs}\" correct?";

    pub fn new(text: impl Into<String>) -> Result<Self, CorpusError> {
        let text = text.into();
        for placeholder in ["{lhs}", "{rhs}"] {
            match text.matches(placeholder).count() {
                1 => {}
                0 => return Err(CorpusError::Template(format!("missing {placeholder}"))),
                _ => return Err(CorpusError::Template(format!("{placeholder} appears more than once"))),
            }
        }
        Ok(Self { text })
    }

    /// The question without an answer-format instruction.
    pub fn bare() -> Self {
        Self {
            text: Self::BARE_TEXT.to_string(),
        }
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn fill(&self, lhs: &str, rhs: &str) -> String {
        self.text.replace("{lhs}", lhs).replace("{rhs}", rhs)
    }
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self {
            text: Self::DEFAULT_TEXT.to_string(),
        }
    }
}

/// The exact question sent to a model for one (statement, rule) pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub statement_id: String,
    pub rule: LogicalRule,
    pub valid: bool,
    pub prompt_text: String,
}

pub fn render_prompt(variant: &Variant, template: &PromptTemplate) -> PromptRecord {
    PromptRecord {
        statement_id: variant.statement_id.clone(),
        rule: variant.rule,
        valid: variant.validity.is_valid(),
        prompt_text: template.fill(&variant.lhs_text, &variant.rhs_text),
    }
}

/// Every statement crossed with every rule, grouped by statement. Rules are
/// emitted in canonical order regardless of the order given.
pub fn expand_corpus(
    statements: &[Statement],
    rules: &[LogicalRule],
    negation_style: NegationStyle,
    template: &PromptTemplate,
) -> Result<Vec<PromptRecord>, CorpusError> {
    if rules.is_empty() {
        return Err(CorpusError::NoRules);
    }
    let mut ordered = rules.to_vec();
    ordered.sort_by_key(|r| r.index());
    ordered.dedup();

    let mut out = Vec::with_capacity(statements.len() * ordered.len());
    for statement in statements {
        for &rule in &ordered {
            let variant = apply_rule(statement, rule, negation_style)?;
            out.push(render_prompt(&variant, template));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::enumerate_rules;

    #[test]
    fn medical_sample_loads() {
        let s = parse_corpus(MEDICAL_SAMPLE).unwrap();
        assert_eq!(s.len(), 5);
        assert_eq!(s[0].antecedent, "Atherosclerosis");
        assert_eq!(s[0].domain, Domain::Medical);
        assert_eq!(parse_corpus(ENVIRONMENTAL_SAMPLE).unwrap().len(), 5);
    }

    #[test]
    fn empty_file_is_empty_corpus() {
        assert!(parse_corpus("").unwrap().is_empty());
        assert!(parse_corpus("# only a comment\n\n").unwrap().is_empty());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let text = "{\"id\":\"m001\",\"domain\":\"medical\",\"antecedent\":\"A\",\"consequent\":\"B\"}\n\
                    {\"id\":\"m001\",\"domain\":\"medical\",\"antecedent\":\"C\",\"consequent\":\"D\"}\n";
        match parse_corpus(text) {
            Err(CorpusError::DuplicateId { line, id }) => {
                assert_eq!(line, 2);
                assert_eq!(id, "m001");
            }
            other => panic!("expected DuplicateId, got {other:?}"),
        }
    }

    #[test]
    fn malformed_and_missing() {
        let err = parse_corpus("# c\n{not json\n").unwrap_err();
        assert!(matches!(err, CorpusError::Parse { line: 2, .. }), "{err:?}");
        let err = parse_corpus("{\"id\":\"a\",\"domain\":\"medical\",\"antecedent\":\"A\"}").unwrap_err();
        assert!(matches!(
            err,
            CorpusError::MissingField {
                line: 1,
                field: "consequent"
            }
        ));
        let err = parse_corpus("{\"id\":\"a\",\"domain\":\"x\",\"antecedent\":\"\",\"consequent\":\"B\"}").unwrap_err();
        assert!(matches!(
            err,
            CorpusError::EmptyField {
                field: "antecedent",
                ..
            }
        ));
        let err = parse_corpus("[1,2]").unwrap_err();
        assert!(matches!(err, CorpusError::Parse { line: 1, .. }));
    }

    #[test]
    fn other_domain_round_trips() {
        let text =
            "{\"id\":\"x1\",\"domain\":\"economics\",\"antecedent\":\"A\",\"consequent\":\"B\",\"source\":\"ref\"}\n";
        let s = parse_corpus(text).unwrap();
        assert_eq!(s[0].domain, Domain::Other("economics".into()));
        assert_eq!(corpus_to_string(&s), text);
    }

    #[test]
    fn default_template_prompt() {
        let s = Statement::new("t", Domain::Medical, "TBI", "PTSD");
        let v = apply_rule(&s, "nPnQ".parse().unwrap(), NegationStyle::PrefixNo).unwrap();
        let p = render_prompt(&v, &PromptTemplate::default());
        assert_eq!(
            p.prompt_text,
            "Is the statement \"no TBI implies no PTSD\" correct? Respond with exactly one word: TRUE or FALSE."
        );
        let v = apply_rule(&s, LogicalRule::AFFIRMATIVE, NegationStyle::PrefixNo).unwrap();
        assert!(render_prompt(&v, &PromptTemplate::default())
            .prompt_text
            .contains("\"TBI implies PTSD\""));
        let custom = PromptTemplate::new("Does \"{lhs} implies {rhs}\" hold?").unwrap();
        assert!(!render_prompt(&v, &custom).prompt_text.contains("Respond"));
        assert_eq!(
            render_prompt(&v, &PromptTemplate::bare()).prompt_text,
            "Is the statement \"TBI implies PTSD\" correct?"
        );
    }

    #[test]
    fn template_validation() {
        assert!(matches!(
            PromptTemplate::new("only {lhs}"),
            Err(CorpusError::Template(_))
        ));
        assert!(matches!(
            PromptTemplate::new("{lhs} {rhs} {rhs}"),
            Err(CorpusError::Template(_))
        ));
    }

    #[test]
    fn expansion_sizes() {
        let s = parse_corpus(MEDICAL_SAMPLE).unwrap();
        let t = PromptTemplate::default();
        let all = expand_corpus(&s, &enumerate_rules(), NegationStyle::PrefixNo, &t).unwrap();
        assert_eq!(all.len(), 40);
        assert_eq!(all.iter().filter(|r| r.valid).count(), 5);
        assert_eq!(all[0].statement_id, "m001");
        assert_eq!(all[7].rule.code(), "nQnP");
        assert_eq!(all[8].statement_id, "m002");

        let one = expand_corpus(&s[..1], &[LogicalRule::AFFIRMATIVE], NegationStyle::PrefixNo, &t).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(
            one[0].prompt_text,
            "Is the statement \"Atherosclerosis implies increased risk of heart attack\" correct? Respond with exactly one word: TRUE or FALSE."
        );
        assert!(matches!(
            expand_corpus(&s, &[], NegationStyle::PrefixNo, &t),
            Err(CorpusError::NoRules)
        ));
    }

    #[test]
    fn import_plain_lines() {
        let text = "Atherosclerosis $\\implies$ increased risk of heart attack.\n\
                    # skipped\n\
                    Smoking implies increased risk of lung cancer.\n\
                    Deforestation => reduced carbon sequestration\n";
        let s = import_plain_text(text, Domain::Medical, "m").unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s[0].id, "m001");
        assert_eq!(s[0].consequent, "increased risk of heart attack");
        assert_eq!(s[1].antecedent, "Smoking");
        assert_eq!(s[2].id, "m003");
        assert_eq!(s[2].consequent, "reduced carbon sequestration");

        let err = import_plain_text("A\nno separator", Domain::Medical, "m").unwrap_err();
        assert!(matches!(err, CorpusError::Parse { line: 1, .. }));
    }
}
