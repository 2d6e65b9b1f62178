//! Two-arm distinguishability experiment: a dual-objective arm and an
//! affirmation-only arm (`lambda = 0`) trained from the same shared
//! initialization on the same dataset.

use std::fmt::Write as _;

use serde::Serialize;

use super::{synthesize_dataset, train_from, EpochRecord, ToyModelParams, TrainConfig};
use crate::error::TrainError;
use crate::exec::Execution;

pub const EXPERIMENT_CSV_HEADER: &str = "arm,lambda,seed,epoch,loss_pos,loss_neg,loss_dual,min_margin,mean_margin";

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Thresholds {
    /// Minimum margin the dual arm must reach.
    pub dual_min_margin: f64,
    /// Maximum margin the affirmation-only arm may reach.
    pub pos_max_margin: f64,
    /// Required gap between the two arms' minimum margins.
    pub gap: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            dual_min_margin: 0.8,
            pos_max_margin: 0.2,
            gap: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArmResult {
    pub arm: &'static str,
    pub lambda: f64,
    #[serde(skip)]
    pub params: ToyModelParams,
    pub trace: Vec<EpochRecord>,
}

impl ArmResult {
    pub fn final_record(&self) -> &EpochRecord {
        self.trace.last().expect("trace holds the initial record")
    }

    pub fn min_margin(&self) -> f64 {
        self.final_record().min_margin
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub seed: u64,
    /// Minimum margin at the shared initialization (0 by construction).
    pub initial_min_margin: f64,
    pub dual: ArmResult,
    pub pos: ArmResult,
}

impl ExperimentResult {
    pub fn gap(&self) -> f64 {
        self.dual.min_margin() - self.pos.min_margin()
    }

    /// The ordering property: the dual arm's minimum margin exceeds the
    /// affirmation-only arm's by at least `thresholds.gap`.
    pub fn separation_holds(&self, thresholds: &Thresholds) -> bool {
        self.gap() >= thresholds.gap
    }

    pub fn all_thresholds_hold(&self, thresholds: &Thresholds) -> bool {
        self.separation_holds(thresholds)
            && self.dual.min_margin() >= thresholds.dual_min_margin
            && self.pos.min_margin() <= thresholds.pos_max_margin
    }
}

/// Run both arms for `config.seed`. The dual arm uses `config.lambda`; both
/// arms always start from a shared negation initialization.
pub fn run_experiment(config: &TrainConfig) -> Result<ExperimentResult, TrainError> {
    config.validate()?;
    let dataset = synthesize_dataset(config.n_pairs, config.seed)?;
    let initial = ToyModelParams::init(config.n_pairs, config.embedding_dim, config.seed, true);

    let arms = [config.lambda, 0.0];
    let mut results = arms.iter().map(|&lambda| {
        let arm_config = TrainConfig {
            lambda,
            shared_negation_init: true,
            ..config.clone()
        };
        train_from(&dataset, &arm_config, initial.clone()).map(|out| (lambda, out))
    });
    let (dual_lambda, dual) = results.next().expect("two arms")?;
    let (pos_lambda, pos) = results.next().expect("two arms")?;

    Ok(ExperimentResult {
        seed: config.seed,
        initial_min_margin: dual.trace[0].min_margin,
        dual: ArmResult {
            arm: "dual",
            lambda: dual_lambda,
            params: dual.params,
            trace: dual.trace,
        },
        pos: ArmResult {
            arm: "pos",
            lambda: pos_lambda,
            params: pos.params,
            trace: pos.trace,
        },
    })
}

/// One experiment per seed. Seeds are independent, so they may run in
/// parallel; each arm's training loop stays single-threaded.
pub fn run_experiment_sweep(
    config: &TrainConfig,
    seeds: &[u64],
    execution: Execution,
) -> Result<Vec<ExperimentResult>, TrainError> {
    execution
        .map(seeds, |&seed| run_experiment(&TrainConfig { seed, ..config.clone() }))
        .into_iter()
        .collect()
}

pub fn render_experiment_csv(results: &[ExperimentResult]) -> String {
    let mut out = String::from(EXPERIMENT_CSV_HEADER);
    out.push('\n');
    for result in results {
        for arm in [&result.dual, &result.pos] {
            for r in &arm.trace {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{}",
                    arm.arm,
                    arm.lambda,
                    result.seed,
                    r.epoch,
                    r.loss_pos,
                    r.loss_neg,
                    r.loss_dual,
                    r.min_margin,
                    r.mean_margin
                );
            }
        }
    }
    out
}
