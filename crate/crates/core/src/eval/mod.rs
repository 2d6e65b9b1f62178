//! Evaluation harness: sends variant prompts to model endpoints, parses the
//! verdicts and records them in a resumable run log.
//!
//! Work is distributed over at most `concurrency` worker threads. All
//! judgments flow through a single writer on the calling thread, so the log
//! is only ever appended to from one place.

mod client;
mod runlog;
pub mod stub;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::thread;

use crossbeam::channel;
use serde::{Deserialize, Serialize};

pub use self::client::{
    extract_content, query_model, ApiStyle, HttpTransport, ModelEndpoint, Reply, Transport, API_KEY_ENV,
    DEFAULT_SYSTEM_PROMPT,
};
pub use self::runlog::{log_to_string, parse_log, read_log, RunLog};

use crate::corpus::PromptRecord;
use crate::error::{EvalError, QueryError};
use crate::logic::LogicalRule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    True,
    False,
    Unparseable,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::True => "TRUE",
            Verdict::False => "FALSE",
            Verdict::Unparseable => "UNPARSEABLE",
        })
    }
}

/// Earliest standalone `true`/`false` token, case-insensitive.
pub fn parse_verdict(raw: &str) -> Verdict {
    raw.split(|c: char| !c.is_alphanumeric())
        .find_map(|token| {
            if token.eq_ignore_ascii_case("true") {
                Some(Verdict::True)
            } else if token.eq_ignore_ascii_case("false") {
                Some(Verdict::False)
            } else {
                None
            }
        })
        .unwrap_or(Verdict::Unparseable)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgment {
    pub statement_id: String,
    pub rule: LogicalRule,
    pub model: String,
    pub verdict: Verdict,
    pub raw_response: String,
    pub timestamp: String,
    pub attempts: u32,
}

impl Judgment {
    pub fn key(&self) -> JudgmentKey {
        (self.statement_id.clone(), self.rule, self.model.clone())
    }
}

/// `(statement_id, rule, model)`
pub type JudgmentKey = (String, LogicalRule, String);

fn now_timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct VerdictCounts {
    #[serde(rename = "true")]
    pub true_count: u64,
    #[serde(rename = "false")]
    pub false_count: u64,
    pub unparseable: u64,
}

impl VerdictCounts {
    pub fn add(&mut self, verdict: Verdict) {
        match verdict {
            Verdict::True => self.true_count += 1,
            Verdict::False => self.false_count += 1,
            Verdict::Unparseable => self.unparseable += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.true_count + self.false_count + self.unparseable
    }

    /// TRUE share among parseable verdicts; `None` when there are none.
    pub fn true_fraction(&self) -> Option<f64> {
        let decided = self.true_count + self.false_count;
        (decided > 0).then(|| self.true_count as f64 / decided as f64)
    }
}

/// Verdict counts per (model, rule), derived only from log contents.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub new_queries: usize,
    pub total_judgments: usize,
    pub counts: BTreeMap<String, BTreeMap<usize, (LogicalRule, VerdictCounts)>>,
}

impl RunSummary {
    pub fn from_judgments(judgments: &[Judgment], new_queries: usize) -> Self {
        let mut counts: BTreeMap<String, BTreeMap<usize, (LogicalRule, VerdictCounts)>> = BTreeMap::new();
        for j in judgments {
            counts
                .entry(j.model.clone())
                .or_default()
                .entry(j.rule.index())
                .or_insert((j.rule, VerdictCounts::default()))
                .1
                .add(j.verdict);
        }
        Self {
            new_queries,
            total_judgments: judgments.len(),
            counts,
        }
    }

    pub fn get(&self, model: &str, rule: LogicalRule) -> Option<VerdictCounts> {
        self.counts
            .get(model)
            .and_then(|m| m.get(&rule.index()))
            .map(|(_, c)| *c)
    }

    /// Equality ignoring how many queries this particular run made.
    pub fn same_results(&self, other: &RunSummary) -> bool {
        self.total_judgments == other.total_judgments && self.counts == other.counts
    }
}

impl fmt::Display for RunSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} new queries, {} judgments in log",
            self.new_queries, self.total_judgments
        )?;
        for (model, rules) in &self.counts {
            writeln!(f, "model {model}:")?;
            for (rule, c) in rules.values() {
                let frac = c
                    .true_fraction()
                    .map_or_else(|| "n/a".to_string(), |x| format!("{x:.2}"));
                writeln!(
                    f,
                    "  {:<5} TRUE {:>4}  FALSE {:>4}  UNPARSEABLE {:>4}  fraction {frac}",
                    rule.code(),
                    c.true_count,
                    c.false_count,
                    c.unparseable
                )?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EvalOptions<'a> {
    pub concurrency: usize,
    /// Workers stop picking up new items once this is set.
    pub cancel: Option<&'a AtomicBool>,
}

impl Default for EvalOptions<'_> {
    fn default() -> Self {
        Self {
            concurrency: 4,
            cancel: None,
        }
    }
}

pub fn validate_endpoints(endpoints: &[ModelEndpoint]) -> Result<(), EvalError> {
    let mut names = HashSet::new();
    for ep in endpoints {
        if !names.insert(ep.name.as_str()) {
            return Err(EvalError::Config(format!("duplicate endpoint name `{}`", ep.name)));
        }
        if ep.temperature.is_nan() || ep.temperature < 0.0 {
            return Err(EvalError::Config(format!(
                "endpoint `{}`: temperature must be >= 0",
                ep.name
            )));
        }
    }
    Ok(())
}

pub fn parse_endpoints(json: &str) -> Result<Vec<ModelEndpoint>, EvalError> {
    let endpoints: Vec<ModelEndpoint> = serde_json::from_str(json).map_err(|e| EvalError::Config(e.to_string()))?;
    validate_endpoints(&endpoints)?;
    Ok(endpoints)
}

fn judge(transport: &dyn Transport, endpoint: &ModelEndpoint, prompt: &PromptRecord) -> Judgment {
    let (verdict, raw_response, attempts) = match transport.query(endpoint, &prompt.prompt_text) {
        Ok(reply) => (parse_verdict(&reply.content), reply.content, reply.attempts),
        Err(e) => {
            let attempts = match &e {
                QueryError::Transport { attempts, .. } => *attempts,
                _ => 1,
            };
            (Verdict::Unparseable, format!("error: {e}"), attempts)
        }
    };
    Judgment {
        statement_id: prompt.statement_id.clone(),
        rule: prompt.rule,
        model: endpoint.name.clone(),
        verdict,
        raw_response,
        timestamp: now_timestamp(),
        attempts,
    }
}

/// Query every (prompt, endpoint) pair not already in the log at
/// `log_path`, appending judgments as they complete.
///
/// Per-item failures become UNPARSEABLE judgments carrying the error text.
/// Only log I/O failures abort the run.
pub fn run_evaluation(
    transport: &dyn Transport,
    prompts: &[PromptRecord],
    endpoints: &[ModelEndpoint],
    log_path: &Path,
    options: EvalOptions<'_>,
) -> Result<RunSummary, EvalError> {
    validate_endpoints(endpoints)?;
    let mut log = RunLog::open(log_path)?;
    let mut done: HashSet<JudgmentKey> = log.existing().iter().map(Judgment::key).collect();
    let mut all = log.existing().to_vec();

    let mut jobs = Vec::new();
    for prompt in prompts {
        for endpoint in endpoints {
            let key = (prompt.statement_id.clone(), prompt.rule, endpoint.name.clone());
            if done.insert(key) {
                jobs.push((prompt, endpoint));
            }
        }
    }

    let workers = options.concurrency.max(1).min(jobs.len());
    let stop = AtomicBool::new(false);
    let mut new_queries = 0;
    let mut failure = None;

    thread::scope(|scope| {
        let (job_tx, job_rx) = channel::unbounded();
        for job in &jobs {
            job_tx.send(*job).expect("receiver alive");
        }
        drop(job_tx);
        let (result_tx, result_rx) = channel::unbounded();

        for _ in 0..workers {
            let job_rx = job_rx.clone();
            let result_tx = result_tx.clone();
            let stop = &stop;
            scope.spawn(move || {
                while let Ok((prompt, endpoint)) = job_rx.recv() {
                    let cancelled = options.cancel.is_some_and(|c| c.load(Ordering::SeqCst));
                    if cancelled || stop.load(Ordering::SeqCst) {
                        break;
                    }
                    if result_tx.send(judge(transport, endpoint, prompt)).is_err() {
                        break;
                    }
                }
            });
        }
        drop(result_tx);

        for judgment in result_rx {
            if failure.is_some() {
                continue;
            }
            match log.append(&judgment) {
                Ok(()) => {
                    new_queries += 1;
                    all.push(judgment);
                }
                Err(e) => {
                    stop.store(true, Ordering::SeqCst);
                    failure = Some(e);
                }
            }
        }
    });

    if let Some(e) = failure {
        return Err(e);
    }
    log.sync()?;
    Ok(RunSummary::from_judgments(&all, new_queries))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdict_tokens() {
        assert_eq!(parse_verdict("TRUE"), Verdict::True);
        assert_eq!(parse_verdict("true."), Verdict::True);
        assert_eq!(
            parse_verdict("That is false, although some argue it is true."),
            Verdict::False
        );
        assert_eq!(parse_verdict("Cannot answer."), Verdict::Unparseable);
        assert_eq!(parse_verdict("untrue falsehood"), Verdict::Unparseable);
        assert_eq!(parse_verdict(""), Verdict::Unparseable);
        assert_eq!(parse_verdict("**False**"), Verdict::False);
    }

    #[test]
    fn judgment_wire_fields() {
        let j = Judgment {
            statement_id: "m001".into(),
            rule: "nPnQ".parse().unwrap(),
            model: "a".into(),
            verdict: Verdict::Unparseable,
            raw_response: "hm".into(),
            timestamp: "2026-01-01T00:00:00.000Z".into(),
            attempts: 2,
        };
        assert_eq!(
            serde_json::to_string(&j).unwrap(),
            r#"{"statement_id":"m001","rule":"nPnQ","model":"a","verdict":"UNPARSEABLE","raw_response":"hm","timestamp":"2026-01-01T00:00:00.000Z","attempts":2}"#
        );
    }

    #[test]
    fn endpoint_validation() {
        let a = ModelEndpoint::new("a", "http://x", "m");
        assert!(validate_endpoints(&[a.clone(), a.clone()]).is_err());
        let mut hot = a;
        hot.temperature = -0.1;
        assert!(validate_endpoints(&[hot]).is_err());
        assert!(parse_endpoints("{").is_err());
    }

    #[test]
    fn counts_fraction() {
        let mut c = VerdictCounts::default();
        assert_eq!(c.true_fraction(), None);
        c.add(Verdict::Unparseable);
        assert_eq!(c.true_fraction(), None);
        c.add(Verdict::True);
        c.add(Verdict::False);
        c.add(Verdict::False);
        assert!((c.true_fraction().unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(c.total(), 4);
    }
}
