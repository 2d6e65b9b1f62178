//! The eight polarity arrangements of an implication `P => Q` and the
//! mechanical derivation of variants from a base statement.
//!
//! A rule is described by which original atom sits on the left of
//! "implies" and whether each side is negated. Codes follow the order
//! `PQ, PnQ, nPQ, nPnQ, QP, QnP, nQP, nQnP`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::Statement;
use crate::error::LogicError;

/// Which original atom appears on the left-hand side of "implies".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    P,
    Q,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Validity {
    Valid,
    Invalid,
}

impl Validity {
    pub fn is_valid(self) -> bool {
        matches!(self, Validity::Valid)
    }
}

/// One of the eight arrangements of `(P, Q)` with polarities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LogicalRule {
    pub antecedent_side: Side,
    pub lhs_negated: bool,
    pub rhs_negated: bool,
}

const CANONICAL: [LogicalRule; 8] = [
    LogicalRule::new(Side::P, false, false),
    LogicalRule::new(Side::P, false, true),
    LogicalRule::new(Side::P, true, false),
    LogicalRule::new(Side::P, true, true),
    LogicalRule::new(Side::Q, false, false),
    LogicalRule::new(Side::Q, false, true),
    LogicalRule::new(Side::Q, true, false),
    LogicalRule::new(Side::Q, true, true),
];

/// All eight rules in canonical order.
pub fn enumerate_rules() -> Vec<LogicalRule> {
    CANONICAL.to_vec()
}

impl LogicalRule {
    pub const fn new(antecedent_side: Side, lhs_negated: bool, rhs_negated: bool) -> Self {
        Self {
            antecedent_side,
            lhs_negated,
            rhs_negated,
        }
    }

    /// Modus ponens, the only rule scored as valid.
    pub const AFFIRMATIVE: LogicalRule = LogicalRule::new(Side::P, false, false);

    /// Position of this rule in the canonical order (0..8).
    pub fn index(self) -> usize {
        let side = match self.antecedent_side {
            Side::P => 0,
            Side::Q => 4,
        };
        side + 2 * usize::from(self.lhs_negated) + usize::from(self.rhs_negated)
    }

    /// Only `PQ` is valid. The contrapositive `nQnP` is deliberately scored
    /// invalid: the statements are causal, not material implications.
    pub fn validity(self) -> Validity {
        if self == Self::AFFIRMATIVE {
            Validity::Valid
        } else {
            Validity::Invalid
        }
    }

    fn atoms(self) -> (char, char) {
        match self.antecedent_side {
            Side::P => ('P', 'Q'),
            Side::Q => ('Q', 'P'),
        }
    }

    /// Stable short code such as `nPnQ`.
    pub fn code(self) -> String {
        let (l, r) = self.atoms();
        let mut s = String::with_capacity(4);
        if self.lhs_negated {
            s.push('n');
        }
        s.push(l);
        if self.rhs_negated {
            s.push('n');
        }
        s.push(r);
        s
    }

    /// ASCII display label, e.g. `~P=>~Q`.
    pub fn label(self) -> String {
        let (l, r) = self.atoms();
        format!(
            "{}{}=>{}{}",
            if self.lhs_negated { "~" } else { "" },
            l,
            if self.rhs_negated { "~" } else { "" },
            r
        )
    }
}

impl fmt::Display for LogicalRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.code())
    }
}

impl FromStr for LogicalRule {
    type Err = LogicError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CANONICAL
            .iter()
            .copied()
            .find(|r| r.code() == s)
            .ok_or_else(|| LogicError::UnknownRule(s.to_string()))
    }
}

impl Serialize for LogicalRule {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.code())
    }
}

impl<'de> Deserialize<'de> for LogicalRule {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Parse a comma-separated list of rule codes.
pub fn parse_rule_list(list: &str) -> Result<Vec<LogicalRule>, LogicError> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect()
}

/// Surface form used when a clause has no explicit negation override.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegationStyle {
    /// `no {clause}`, with the clause's first letter lowercased.
    #[default]
    PrefixNo,
    /// `not {clause}`.
    PrefixNot,
}

impl FromStr for NegationStyle {
    type Err = LogicError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "no" | "prefix_no" => Ok(Self::PrefixNo),
            "not" | "prefix_not" => Ok(Self::PrefixNot),
            other => Err(LogicError::UnknownNegationStyle(other.to_string())),
        }
    }
}

/// Lowercase the first character unless the leading word looks like an
/// acronym ("TBI", "CO2" stay as they are).
pub(crate) fn demote_initial(clause: &str) -> String {
    let mut chars = clause.chars();
    let Some(first) = chars.next() else {
        return String::new();
    };
    let first_word_rest: String = chars.clone().take_while(|c| !c.is_whitespace()).collect();
    if first_word_rest.chars().any(char::is_uppercase) {
        return clause.to_string();
    }
    first.to_lowercase().chain(chars).collect()
}

pub fn render_negation(
    clause: &str,
    style: NegationStyle,
    explicit_override: Option<&str>,
) -> Result<String, LogicError> {
    if clause.trim().is_empty() {
        return Err(LogicError::EmptyClause);
    }
    if let Some(text) = explicit_override {
        if text.trim().is_empty() {
            return Err(LogicError::EmptyClause);
        }
        return Ok(text.to_string());
    }
    Ok(match style {
        NegationStyle::PrefixNo => format!("no {}", demote_initial(clause)),
        NegationStyle::PrefixNot => format!("not {clause}"),
    })
}

/// A statement instantiated under one rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variant {
    pub statement_id: String,
    pub rule: LogicalRule,
    pub lhs_text: String,
    pub rhs_text: String,
    pub validity: Validity,
}

pub fn apply_rule(
    statement: &Statement,
    rule: LogicalRule,
    negation_style: NegationStyle,
) -> Result<Variant, LogicError> {
    if statement.antecedent.trim().is_empty() || statement.consequent.trim().is_empty() {
        return Err(LogicError::EmptyClause);
    }
    let p = (statement.antecedent.as_str(), statement.antecedent_neg.as_deref());
    let q = (statement.consequent.as_str(), statement.consequent_neg.as_deref());
    let (lhs, rhs) = match rule.antecedent_side {
        Side::P => (p, q),
        Side::Q => (q, p),
    };

    let lhs_text = if rule.lhs_negated {
        render_negation(lhs.0, negation_style, lhs.1)?
    } else {
        lhs.0.to_string()
    };
    let rhs_text = if rule.rhs_negated {
        render_negation(rhs.0, negation_style, rhs.1)?
    } else if rule.antecedent_side == Side::Q {
        // the antecedent is no longer sentence-initial
        demote_initial(rhs.0)
    } else {
        rhs.0.to_string()
    };

    if lhs_text.trim().is_empty() || rhs_text.trim().is_empty() {
        return Err(LogicError::EmptyClause);
    }
    Ok(Variant {
        statement_id: statement.id.clone(),
        rule,
        lhs_text,
        rhs_text,
        validity: rule.validity(),
    })
}

/// All eight variants of one statement, in canonical order.
pub fn all_variants(statement: &Statement, negation_style: NegationStyle) -> Result<Vec<Variant>, LogicError> {
    CANONICAL
        .iter()
        .map(|&rule| apply_rule(statement, rule, negation_style))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Domain;
    use std::collections::HashSet;

    fn tbi() -> Statement {
        Statement::new("t1", Domain::Medical, "TBI", "PTSD")
    }

    #[test]
    fn canonical_order_and_codes() {
        let codes: Vec<String> = enumerate_rules().into_iter().map(LogicalRule::code).collect();
        assert_eq!(codes, ["PQ", "PnQ", "nPQ", "nPnQ", "QP", "QnP", "nQP", "nQnP"]);
        for (i, r) in enumerate_rules().into_iter().enumerate() {
            assert_eq!(r.index(), i);
            assert_eq!(r.code().parse::<LogicalRule>().unwrap(), r);
        }
    }

    #[test]
    fn eight_distinct_rules_one_valid() {
        let rules = enumerate_rules();
        assert_eq!(rules.len(), 8);
        assert_eq!(rules.iter().collect::<HashSet<_>>().len(), 8);
        let valid: Vec<_> = rules.iter().filter(|r| r.validity().is_valid()).collect();
        assert_eq!(valid, [&LogicalRule::AFFIRMATIVE]);
        let contrapositive: LogicalRule = "nQnP".parse().unwrap();
        assert_eq!(contrapositive.validity(), Validity::Invalid);
    }

    #[test]
    fn labels() {
        let labels: Vec<String> = enumerate_rules().into_iter().map(LogicalRule::label).collect();
        assert_eq!(
            labels,
            ["P=>Q", "P=>~Q", "~P=>Q", "~P=>~Q", "Q=>P", "Q=>~P", "~Q=>P", "~Q=>~P"]
        );
    }

    #[test]
    fn unknown_rule_code() {
        assert!(matches!("PP".parse::<LogicalRule>(), Err(LogicError::UnknownRule(_))));
        assert_eq!(parse_rule_list("PQ, nPnQ").unwrap().len(), 2);
    }

    #[test]
    fn denying_the_antecedent() {
        let v = apply_rule(&tbi(), "nPnQ".parse().unwrap(), NegationStyle::PrefixNo).unwrap();
        assert_eq!(v.lhs_text, "no TBI");
        assert_eq!(v.rhs_text, "no PTSD");
        assert_eq!(v.validity, Validity::Invalid);
    }

    #[test]
    fn identity_rule() {
        let v = apply_rule(&tbi(), LogicalRule::AFFIRMATIVE, NegationStyle::PrefixNo).unwrap();
        assert_eq!((v.lhs_text.as_str(), v.rhs_text.as_str()), ("TBI", "PTSD"));
        assert_eq!(v.validity, Validity::Valid);
    }

    #[test]
    fn converse_of_smoking() {
        let s = Statement::new("m005", Domain::Medical, "Smoking", "increased risk of lung cancer");
        let v = apply_rule(&s, "QP".parse().unwrap(), NegationStyle::PrefixNo).unwrap();
        assert_eq!(v.lhs_text, "increased risk of lung cancer");
        assert_eq!(v.rhs_text, "smoking");
    }

    #[test]
    fn negation_rendering() {
        let no = NegationStyle::PrefixNo;
        assert_eq!(render_negation("TBI", no, None).unwrap(), "no TBI");
        assert_eq!(render_negation("Smoking", no, None).unwrap(), "no smoking");
        assert_eq!(
            render_negation("High blood pressure", no, Some("normal blood pressure")).unwrap(),
            "normal blood pressure"
        );
        assert_eq!(
            render_negation("Increased CO₂ concentration", no, None).unwrap(),
            "no increased CO₂ concentration"
        );
        assert_eq!(
            render_negation("Smoking", NegationStyle::PrefixNot, None).unwrap(),
            "not Smoking"
        );
        assert_eq!(render_negation("", no, None), Err(LogicError::EmptyClause));
        assert_eq!(render_negation("x", no, Some(" ")), Err(LogicError::EmptyClause));
    }

    #[test]
    fn overrides_are_used_per_side() {
        let mut s = Statement::new(
            "m002",
            Domain::Medical,
            "High blood pressure",
            "increased risk of stroke",
        );
        s.antecedent_neg = Some("normal blood pressure".into());
        let v = apply_rule(&s, "nQnP".parse().unwrap(), NegationStyle::PrefixNo).unwrap();
        assert_eq!(v.lhs_text, "no increased risk of stroke");
        assert_eq!(v.rhs_text, "normal blood pressure");
    }

    #[test]
    fn empty_clause_rejected() {
        let s = Statement::new("x", Domain::Medical, " ", "B");
        assert_eq!(
            apply_rule(&s, LogicalRule::AFFIRMATIVE, NegationStyle::PrefixNo),
            Err(LogicError::EmptyClause)
        );
    }
}
