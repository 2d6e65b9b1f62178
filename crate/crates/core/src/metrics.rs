//! Aggregation of judgments into per-rule TRUE fractions and the summed
//! error column, plus markdown/CSV rendering.
//!
//! The error for a rule is `sum over models of |target - fraction|`, where
//! the target is 1 for `PQ` and 0 for every other rule.

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;

use crate::error::MetricsError;
use crate::eval::{Judgment, VerdictCounts};
use crate::logic::{enumerate_rules, LogicalRule};

/// Expected TRUE fraction for a perfectly calibrated judge.
pub fn target(rule: LogicalRule) -> f64 {
    if rule.validity().is_valid() {
        1.0
    } else {
        0.0
    }
}

/// TRUE fractions indexed `[rule][model]`. `None` marks a cell with no
/// TRUE/FALSE verdicts.
#[derive(Debug, Clone, PartialEq)]
pub struct FractionMatrix {
    pub rules: Vec<LogicalRule>,
    pub models: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
}

impl FractionMatrix {
    pub fn from_rows(models: Vec<String>, rows: Vec<(LogicalRule, Vec<f64>)>) -> Self {
        let (rules, values) = rows
            .into_iter()
            .map(|(r, v)| (r, v.into_iter().map(Some).collect()))
            .unzip();
        Self { rules, models, values }
    }

    pub fn get(&self, rule: LogicalRule, model: &str) -> Option<f64> {
        let r = self.rules.iter().position(|&x| x == rule)?;
        let m = self.models.iter().position(|x| x == model)?;
        self.values[r][m]
    }
}

/// Verdict counts per (rule, model) with the derived fractions and errors.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub rules: Vec<LogicalRule>,
    pub models: Vec<String>,
    /// `[rule][model]`
    pub counts: Vec<Vec<VerdictCounts>>,
}

impl ResultTable {
    /// Aggregate a judgment log. Rules appear in canonical order; models in
    /// `model_order` when given (unlisted models follow, sorted), otherwise
    /// sorted by name. A repeated `(statement, rule, model)` key counts once.
    pub fn from_judgments(judgments: &[Judgment], model_order: Option<&[String]>) -> Result<Self, MetricsError> {
        if judgments.is_empty() {
            return Err(MetricsError::EmptyLog);
        }
        let present_rules: BTreeSet<usize> = judgments.iter().map(|j| j.rule.index()).collect();
        let rules: Vec<LogicalRule> = enumerate_rules()
            .into_iter()
            .filter(|r| present_rules.contains(&r.index()))
            .collect();

        let present_models: BTreeSet<&str> = judgments.iter().map(|j| j.model.as_str()).collect();
        let mut models: Vec<String> = Vec::new();
        if let Some(order) = model_order {
            models.extend(order.iter().filter(|m| present_models.contains(m.as_str())).cloned());
        }
        for m in &present_models {
            if !models.iter().any(|x| x == m) {
                models.push((*m).to_string());
            }
        }

        let mut counts = vec![vec![VerdictCounts::default(); models.len()]; rules.len()];
        let mut seen = HashSet::new();
        for j in judgments {
            if !seen.insert(j.key()) {
                continue;
            }
            let r = rules.iter().position(|&x| x == j.rule).expect("rule collected");
            let m = models.iter().position(|x| *x == j.model).expect("model collected");
            counts[r][m].add(j.verdict);
        }
        Ok(Self { rules, models, counts })
    }

    pub fn fractions(&self) -> FractionMatrix {
        FractionMatrix {
            rules: self.rules.clone(),
            models: self.models.clone(),
            values: self
                .counts
                .iter()
                .map(|row| row.iter().map(VerdictCounts::true_fraction).collect())
                .collect(),
        }
    }

    /// Per-rule error, `None` where some model's cell is undefined.
    pub fn errors(&self) -> Vec<Option<f64>> {
        let fractions = self.fractions();
        self.rules
            .iter()
            .zip(&fractions.values)
            .map(|(&rule, row)| row_error(rule, row))
            .collect()
    }

    pub fn unparseable_totals(&self) -> Vec<u64> {
        self.counts
            .iter()
            .map(|row| row.iter().map(|c| c.unparseable).sum())
            .collect()
    }
}

fn row_error(rule: LogicalRule, row: &[Option<f64>]) -> Option<f64> {
    let t = target(rule);
    row.iter().map(|f| f.map(|x| (t - x).abs())).sum()
}

pub fn compute_fractions(judgments: &[Judgment]) -> Result<FractionMatrix, MetricsError> {
    Ok(ResultTable::from_judgments(judgments, None)?.fractions())
}

pub fn compute_error_column(fractions: &FractionMatrix) -> Result<Vec<f64>, MetricsError> {
    fractions
        .rules
        .iter()
        .zip(&fractions.values)
        .map(|(&rule, row)| {
            if let Some(m) = row.iter().position(Option::is_none) {
                return Err(MetricsError::UndefinedCell {
                    rule: rule.code(),
                    model: fractions.models[m].clone(),
                });
            }
            Ok(row_error(rule, row).expect("all cells defined"))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Markdown,
    Csv,
}

impl std::str::FromStr for TableFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "markdown" | "md" => Ok(Self::Markdown),
            "csv" => Ok(Self::Csv),
            other => Err(format!("unknown table format `{other}`")),
        }
    }
}

/// Rule label with a leading `*` for invalid rules.
pub fn row_label(rule: LogicalRule) -> String {
    if rule.validity().is_valid() {
        rule.label()
    } else {
        format!("*{}", rule.label())
    }
}

fn fmt2(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".to_string(), |v| format!("{v:.2}"))
}

pub fn render_table(table: &ResultTable, format: TableFormat) -> String {
    match format {
        TableFormat::Markdown => render_markdown(table),
        TableFormat::Csv => render_csv(table),
    }
}

fn render_markdown(table: &ResultTable) -> String {
    let mut out = String::from("| Rule |");
    for m in &table.models {
        let _ = write!(out, " {m} |");
    }
    out.push_str(" Error | Unparseable |\n|:-----|");
    for _ in &table.models {
        out.push_str("-----:|");
    }
    out.push_str("-----:|-----:|\n");
    if table.models.is_empty() {
        return out;
    }
    let fractions = table.fractions();
    let errors = table.errors();
    let unparseable = table.unparseable_totals();
    for (i, &rule) in table.rules.iter().enumerate() {
        let _ = write!(out, "| {} |", row_label(rule));
        for f in &fractions.values[i] {
            let _ = write!(out, " {} |", fmt2(*f));
        }
        let _ = writeln!(out, " {} | {} |", fmt2(errors[i]), unparseable[i]);
    }
    out
}

fn render_csv(table: &ResultTable) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["rule".to_string(), "valid".to_string()];
    header.extend(table.models.iter().cloned());
    header.push("error".into());
    header.push("unparseable_total".into());
    writer.write_record(&header).expect("in-memory write");

    if !table.models.is_empty() {
        let fractions = table.fractions();
        let errors = table.errors();
        let unparseable = table.unparseable_totals();
        for (i, &rule) in table.rules.iter().enumerate() {
            let mut record = vec![rule.code(), rule.validity().is_valid().to_string()];
            record.extend(
                fractions.values[i]
                    .iter()
                    .map(|f| f.map(|v| v.to_string()).unwrap_or_default()),
            );
            record.push(errors[i].map(|v| v.to_string()).unwrap_or_default());
            record.push(unparseable[i].to_string());
            writer.write_record(&record).expect("in-memory write");
        }
    }
    String::from_utf8(writer.into_inner().expect("flush")).expect("utf-8")
}

/// Published fraction matrices for the two benchmark domains.
pub mod golden {
    use super::*;

    pub const MODELS: [&str; 4] = ["GPT-2 (774M)", "LLaMA 3 (8B)", "Gemma 3 (12B)", "Mistral (7B)"];

    /// Rule code, four model fractions, printed error.
    pub type Row = (&'static str, [f64; 4], f64);

    pub const MEDICAL: [Row; 8] = [
        ("PQ", [0.89, 0.96, 0.99, 0.98], 0.18),
        ("PnQ", [0.43, 0.10, 0.06, 0.12], 0.71),
        ("nPQ", [0.48, 0.43, 0.39, 0.41], 1.71),
        ("nPnQ", [0.67, 0.41, 0.43, 0.56], 2.17),
        ("QP", [0.64, 0.54, 0.59, 0.41], 2.18),
        ("QnP", [0.42, 0.32, 0.27, 0.29], 1.30),
        ("nQP", [0.34, 0.31, 0.30, 0.21], 1.16),
        ("nQnP", [0.63, 0.53, 0.59, 0.49], 2.14),
    ];

    pub const ENVIRONMENTAL: [Row; 8] = [
        ("PQ", [0.76, 0.94, 0.99, 0.97], 0.34),
        ("PnQ", [0.42, 0.15, 0.05, 0.11], 0.74),
        ("nPQ", [0.53, 0.56, 0.50, 0.52], 2.11),
        ("nPnQ", [0.64, 0.04, 0.05, 0.13], 0.86),
        ("QP", [0.65, 0.66, 0.62, 0.71], 2.54),
        ("QnP", [0.50, 0.29, 0.18, 0.38], 1.35),
        ("nQP", [0.51, 0.30, 0.22, 0.25], 1.28),
        ("nQnP", [0.67, 0.36, 0.26, 0.35], 1.64),
    ];

    /// Printed and recomputed errors further apart than this are flagged.
    pub const DISCREPANCY_TOLERANCE: f64 = 0.005;

    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    pub enum GoldenDomain {
        Medical,
        Environmental,
    }

    impl std::str::FromStr for GoldenDomain {
        type Err = String;

        fn from_str(s: &str) -> Result<Self, Self::Err> {
            match s {
                "medical" => Ok(Self::Medical),
                "environmental" => Ok(Self::Environmental),
                other => Err(format!("unknown golden domain `{other}`")),
            }
        }
    }

    impl GoldenDomain {
        pub fn rows(self) -> &'static [Row; 8] {
            match self {
                Self::Medical => &MEDICAL,
                Self::Environmental => &ENVIRONMENTAL,
            }
        }

        pub fn name(self) -> &'static str {
            match self {
                Self::Medical => "medical",
                Self::Environmental => "environmental",
            }
        }
    }

    pub fn matrix(domain: GoldenDomain) -> FractionMatrix {
        FractionMatrix::from_rows(
            MODELS.iter().map(|m| m.to_string()).collect(),
            domain
                .rows()
                .iter()
                .map(|(code, f, _)| (code.parse().expect("known code"), f.to_vec()))
                .collect(),
        )
    }

    #[derive(Debug, Clone, PartialEq)]
    pub struct GoldenRow {
        pub rule: LogicalRule,
        pub printed: f64,
        pub recomputed: f64,
    }

    impl GoldenRow {
        pub fn discrepant(&self) -> bool {
            (self.printed - self.recomputed).abs() > DISCREPANCY_TOLERANCE
        }
    }

    pub fn compare(domain: GoldenDomain) -> Vec<GoldenRow> {
        let recomputed = compute_error_column(&matrix(domain)).expect("published cells defined");
        domain
            .rows()
            .iter()
            .zip(recomputed)
            .map(|((code, _, printed), recomputed)| GoldenRow {
                rule: code.parse().expect("known code"),
                printed: *printed,
                recomputed,
            })
            .collect()
    }

    /// Markdown table of the published fractions next to the printed and
    /// recomputed error sums.
    pub fn report(domain: GoldenDomain) -> String {
        let rows = compare(domain);
        let mut out = format!("Published {} fractions\n\n| Rule |", domain.name());
        for m in MODELS {
            let _ = write!(out, " {m} |");
        }
        out.push_str(" Printed error | Recomputed error | Note |\n|:-----|");
        out.push_str(&"-----:|".repeat(MODELS.len() + 2));
        out.push_str(":-----|\n");
        for ((_, fractions, _), row) in domain.rows().iter().zip(&rows) {
            let _ = write!(out, "| {} |", row_label(row.rule));
            for f in fractions {
                let _ = write!(out, " {f:.2} |");
            }
            let note = if row.discrepant() {
                format!("printed differs by {:+.2}", row.printed - row.recomputed)
            } else {
                String::new()
            };
            let _ = writeln!(out, " {:.2} | {:.2} | {note} |", row.printed, row.recomputed);
        }
        out
    }
}
