use std::collections::HashSet;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decoders::{
    beam_search, greedy_decode, rerank, sample_sequences, value_guided_beam_search, AlgorithmSpec, BeamConfig,
    Candidate, RerankBy, SampleMode, VgbsConfig,
};
use crate::error::{Error, Result};
use crate::harness::report::{Aggregate, Report, ReportEntry};
use crate::harness::Instance;
use crate::mcts::{decode_mcts, decode_mcts_with, SearchConfig, TreeSnapshot, ValueSource};
use crate::mdp::{DecodeState, TokenId};
use crate::models::{BudgetLedger, Evaluator, ModelSpec, PolicyValue};
use crate::oracle::{exact_argmax_likelihood, exact_argmax_metric};
use crate::scoring::{Metric, MetricSpec, Objective};
use crate::seeding::derive_seed;

/// An algorithm column in a sweep. The label defaults to the algorithm name
/// and must be unique within a run.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct AlgorithmRun {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(flatten)]
    pub spec: AlgorithmSpec,
}

impl AlgorithmRun {
    pub fn new(spec: AlgorithmSpec) -> Self {
        AlgorithmRun { label: None, spec }
    }

    pub fn labelled(label: impl Into<String>, spec: AlgorithmSpec) -> Self {
        AlgorithmRun {
            label: Some(label.into()),
            spec,
        }
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.spec.name().to_string())
    }
}

#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub metric: MetricSpec,
    pub algorithms: Vec<AlgorithmRun>,
    /// Each budget sets the algorithm's size parameter: beam width, pool
    /// size or simulation count. VGBS takes the smallest `k` with
    /// `k + k^2 >= budget`.
    pub budgets: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
}

impl RunConfig {
    fn validate(&self, metric: &dyn Metric) -> Result<()> {
        if self.algorithms.is_empty() {
            return Err(Error::Config("no algorithm selected".into()));
        }
        if self.budgets.is_empty() || self.budgets.contains(&0) {
            return Err(Error::Config(
                "budgets must be a non-empty list of positive integers".into(),
            ));
        }
        let mut labels = HashSet::new();
        for run in &self.algorithms {
            if !labels.insert(run.label()) {
                return Err(Error::Config(format!("duplicate algorithm label `{}`", run.label())));
            }
            if run.spec.uses_score() && metric.is_privileged() {
                return Err(Error::Config(format!(
                    "`{}` reranks by the metric, which is unavailable at decode time for privileged metric `{}`",
                    run.label(),
                    metric.name()
                )));
            }
            for &budget in &self.budgets {
                check_parameters(&run.spec, budget)?;
            }
        }
        Ok(())
    }
}

/// The size parameter an algorithm runs with under `budget`.
pub fn budget_parameter(spec: &AlgorithmSpec, budget: usize) -> usize {
    match spec {
        AlgorithmSpec::Greedy => 1,
        AlgorithmSpec::Vgbs { .. } => (1..).find(|k| k + k * k >= budget).unwrap_or(1),
        _ => budget,
    }
}

fn check_parameters(spec: &AlgorithmSpec, budget: usize) -> Result<()> {
    let p = budget_parameter(spec, budget);
    let checked = match spec {
        AlgorithmSpec::Greedy => Ok(()),
        AlgorithmSpec::Beam { theta, tau } => BeamConfig::new(p, *theta, *tau).map(|_| ()),
        AlgorithmSpec::Vgbs { alpha } => VgbsConfig::new(p, *alpha).map(|_| ()),
        AlgorithmSpec::Mcts(cfg) => cfg.validate(),
        AlgorithmSpec::SampleRerank { tau } | AlgorithmSpec::SampleRerankValue { tau } => {
            if *tau > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("tau must be positive, got {tau}")))
            }
        }
    };
    checked.map_err(|e| match e {
        Error::InvalidArgument(m) => Error::Config(m),
        other => other,
    })
}

/// Stable per-cell seed. The budget is deliberately left out, so sampling
/// pools at different budgets are nested prefixes of one stream.
pub fn cell_seed(global_seed: u64, instance_id: &str, algorithm: &str) -> u64 {
    derive_seed(global_seed, &[b"cell", instance_id.as_bytes(), algorithm.as_bytes()])
}

/// Decoded output of one cell together with its ledger counts.
#[derive(Clone, Debug)]
pub struct CellOutcome {
    pub candidate: Candidate,
    pub evaluations: u64,
    pub tokens_decoded: u64,
}

/// Runs one algorithm on one root state.
pub fn decode_instance(
    model: &dyn PolicyValue,
    root: &DecodeState,
    objective: &Objective,
    spec: &AlgorithmSpec,
    budget: usize,
    seed: u64,
) -> Result<CellOutcome> {
    let ledger = BudgetLedger::new();
    let eval = Evaluator::new(model, &ledger);
    let p = budget_parameter(spec, budget);
    let candidate = match spec {
        AlgorithmSpec::Greedy => greedy_decode(eval, root)?,
        AlgorithmSpec::Beam { theta, tau } => beam_search(eval, root, &BeamConfig::new(p, *theta, *tau)?)?,
        AlgorithmSpec::Vgbs { alpha } => value_guided_beam_search(eval, root, &VgbsConfig::new(p, *alpha)?)?,
        AlgorithmSpec::Mcts(cfg) => {
            let cfg = SearchConfig {
                num_simulations: p,
                ..*cfg
            };
            let objectives = [objective.clone()];
            let rollout = (cfg.value_source == ValueSource::Rollout).then_some(&objectives[..]);
            decode_mcts(eval, std::slice::from_ref(root), &cfg, rollout)?.remove(0)
        }
        AlgorithmSpec::SampleRerank { tau } => {
            let pool = sample_sequences(eval, root, p, SampleMode::Tempered(*tau), seed)?;
            rerank(&pool, RerankBy::Score(objective))?
        }
        AlgorithmSpec::SampleRerankValue { tau } => {
            let pool = sample_sequences(eval, root, p, SampleMode::Tempered(*tau), seed)?;
            rerank(&pool, RerankBy::Value(eval))?
        }
    };
    Ok(CellOutcome {
        candidate,
        evaluations: ledger.evaluations(),
        tokens_decoded: ledger.tokens_decoded(),
    })
}

struct Prepared {
    model: Arc<dyn PolicyValue>,
    root: DecodeState,
    objective: Objective,
}

fn prepare(cfg: &RunConfig, metric: &Arc<dyn Metric>, instance: &Instance) -> Result<Prepared> {
    let objective = Objective::new(Arc::clone(metric), instance.reference.clone()).map_err(|e| match e {
        Error::MissingReference { metric } => Error::Config(format!(
            "instance `{}` has no reference but metric `{metric}` needs one",
            instance.id
        )),
        other => other,
    })?;
    let model = cfg.model.build(objective.clone())?;
    let vocab = model.vocab();
    if let Some(bad) = instance.source.tokens().iter().find(|t| !vocab.contains(**t)) {
        return Err(Error::Config(format!(
            "instance `{}` has token {bad} outside the vocabulary of size {}",
            instance.id,
            vocab.size()
        )));
    }
    let root = model.root_state(instance.source.clone());
    Ok(Prepared { model, root, objective })
}

/// Decodes every instance under every (algorithm, budget) cell.
///
/// All configuration checks run before any decoding. Instances are decoded
/// in parallel; entries are ordered by instance id, then algorithm and
/// budget in configuration order.
pub fn run_experiment(cfg: &RunConfig, dataset: &[Instance]) -> Result<Report> {
    let metric = cfg.metric.build().map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate(metric.as_ref())?;
    let prepared: Vec<Prepared> = dataset
        .iter()
        .map(|inst| prepare(cfg, &metric, inst))
        .collect::<Result<_>>()?;

    let per_instance: Vec<Vec<ReportEntry>> = dataset
        .par_iter()
        .zip(prepared.par_iter())
        .map(|(inst, prep)| {
            let mut entries = Vec::new();
            for run in &cfg.algorithms {
                let label = run.label();
                let seed = cell_seed(cfg.seed, &inst.id, &label);
                for &budget in &cfg.budgets {
                    let out = decode_instance(
                        prep.model.as_ref(),
                        &prep.root,
                        &prep.objective,
                        &run.spec,
                        budget,
                        seed,
                    )?;
                    let score = prep.objective.reward(&out.candidate.state)?;
                    entries.push(ReportEntry {
                        instance: inst.id.clone(),
                        algorithm: label.clone(),
                        budget,
                        output: ids(out.candidate.output()),
                        score: score.value(),
                        log_likelihood: out.candidate.log_likelihood,
                        evaluations: out.evaluations,
                        tokens_decoded: out.tokens_decoded,
                        evaluations_per_token: per_token(out.evaluations, out.tokens_decoded),
                    });
                }
            }
            Ok(entries)
        })
        .collect::<Result<_>>()?;

    let mut entries: Vec<ReportEntry> = per_instance.into_iter().flatten().collect();
    // stable: keeps algorithm/budget order within an instance
    entries.sort_by(|a, b| a.instance.cmp(&b.instance));

    let mut aggregates = Vec::new();
    if !entries.is_empty() {
        for run in &cfg.algorithms {
            let label = run.label();
            for &budget in &cfg.budgets {
                let cell: Vec<&ReportEntry> = entries
                    .iter()
                    .filter(|e| e.algorithm == label && e.budget == budget)
                    .collect();
                let n = cell.len() as f64;
                aggregates.push(Aggregate {
                    algorithm: label.clone(),
                    budget,
                    instances: cell.len(),
                    mean_score: cell.iter().map(|e| e.score).sum::<f64>() / n,
                    mean_evaluations_per_token: cell.iter().map(|e| e.evaluations_per_token).sum::<f64>() / n,
                });
            }
        }
    }
    Ok(Report {
        algorithms: cfg.algorithms.iter().map(AlgorithmRun::label).collect(),
        budgets: cfg.budgets.clone(),
        entries,
        aggregates,
    })
}

fn ids(tokens: &[TokenId]) -> Vec<u32> {
    tokens.iter().map(|t| t.0).collect()
}

fn per_token(evaluations: u64, tokens: u64) -> f64 {
    if tokens == 0 {
        0.0
    } else {
        evaluations as f64 / tokens as f64
    }
}

/// Exact baselines for one instance.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct OracleEntry {
    pub instance: String,
    pub likelihood_argmax: Vec<u32>,
    pub likelihood_argmax_log_likelihood: f64,
    pub likelihood_argmax_score: f64,
    pub metric_argmax: Vec<u32>,
    pub metric_argmax_log_likelihood: f64,
    pub metric_argmax_score: f64,
}

pub fn run_oracle(model: &ModelSpec, metric: &MetricSpec, dataset: &[Instance]) -> Result<Vec<OracleEntry>> {
    let metric = metric.build().map_err(|e| Error::Config(e.to_string()))?;
    let cfg = RunConfig {
        model: model.clone(),
        metric: MetricSpec::Coverage,
        algorithms: Vec::new(),
        budgets: Vec::new(),
        seed: 0,
    };
    let mut out: Vec<OracleEntry> = dataset
        .iter()
        .map(|inst| {
            let prep = prepare(&cfg, &metric, inst)?;
            let likely = exact_argmax_likelihood(prep.model.as_ref(), &prep.root)?;
            let best = exact_argmax_metric(prep.model.as_ref(), &prep.root, &prep.objective)?;
            Ok(OracleEntry {
                instance: inst.id.clone(),
                likelihood_argmax: ids(likely.output()),
                likelihood_argmax_log_likelihood: likely.log_likelihood,
                likelihood_argmax_score: prep.objective.reward(&likely.state)?.value(),
                metric_argmax: ids(best.output()),
                metric_argmax_log_likelihood: best.log_likelihood,
                metric_argmax_score: best.score.map_or(0.0, |s| s.value()),
            })
        })
        .collect::<Result<_>>()?;
    out.sort_by(|a, b| a.instance.cmp(&b.instance));
    Ok(out)
}

/// Decodes `instance` with MCTS and returns the tree built at output
/// position `step` (0 = first token). Errors if decoding ends earlier.
pub fn search_tree(
    model: &ModelSpec,
    metric: &MetricSpec,
    instance: &Instance,
    search: &SearchConfig,
    step: usize,
) -> Result<TreeSnapshot> {
    let metric = metric.build().map_err(|e| Error::Config(e.to_string()))?;
    let cfg = RunConfig {
        model: model.clone(),
        metric: MetricSpec::Coverage,
        algorithms: Vec::new(),
        budgets: Vec::new(),
        seed: 0,
    };
    let prep = prepare(&cfg, &metric, instance)?;
    let ledger = BudgetLedger::new();
    let objectives = [prep.objective.clone()];
    let rollout = (search.value_source == ValueSource::Rollout).then_some(&objectives[..]);
    let mut position = 0;
    let mut captured = None;
    decode_mcts_with(
        Evaluator::new(prep.model.as_ref(), &ledger),
        std::slice::from_ref(&prep.root),
        search,
        rollout,
        |arena, _| {
            if position == step {
                captured = Some(arena.snapshot(0));
            }
            position += 1;
        },
    )?;
    captured.ok_or_else(|| {
        Error::Config(format!(
            "instance `{}` finished after {position} positions; no tree at step {step}",
            instance.id
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::Sequence;

    fn m0_spec() -> ModelSpec {
        ModelSpec {
            seed: 0,
            vocab_size: 3,
            max_len: 3,
            context_order: 0,
            value_noise: 0.0,
            fixed_prior: Some(vec![0.5, 0.3, 0.2]),
        }
    }

    fn occupancy() -> MetricSpec {
        MetricSpec::Occupancy { target: 0, horizon: 3 }
    }

    fn dataset(n: usize) -> Vec<Instance> {
        (0..n)
            .map(|i| Instance {
                id: format!("i{i}"),
                source: Sequence::from_ids(&[(i % 2) as u32, 1]),
                reference: Some(Sequence::from_ids(&[0, 0, 0])),
            })
            .collect()
    }

    #[test]
    fn vgbs_budget_mapping() {
        let vgbs = AlgorithmSpec::Vgbs { alpha: 0.5 };
        assert_eq!(budget_parameter(&vgbs, 1), 1);
        assert_eq!(budget_parameter(&vgbs, 2), 1);
        assert_eq!(budget_parameter(&vgbs, 3), 2);
        assert_eq!(budget_parameter(&vgbs, 50), 7);
        assert_eq!(budget_parameter(&AlgorithmSpec::Greedy, 50), 1);
    }

    #[test]
    fn empty_dataset_gives_empty_report() {
        let cfg = RunConfig {
            model: m0_spec(),
            metric: occupancy(),
            algorithms: vec![AlgorithmRun::new(AlgorithmSpec::Greedy)],
            budgets: vec![1],
            seed: 0,
        };
        let report = run_experiment(&cfg, &[]).unwrap();
        assert!(report.entries.is_empty());
        assert!(report.aggregates.is_empty());
    }

    #[test]
    fn greedy_and_normalized_beam_on_m0() {
        let cfg = RunConfig {
            model: m0_spec(),
            metric: occupancy(),
            algorithms: vec![
                AlgorithmRun::new(AlgorithmSpec::Greedy),
                AlgorithmRun::new(AlgorithmSpec::Beam { theta: 1.0, tau: 1.0 }),
            ],
            budgets: vec![8],
            seed: 3,
        };
        let report = run_experiment(&cfg, &dataset(4)).unwrap();
        assert_eq!(report.entries.len(), 8);
        let greedy = &report.aggregates[0];
        assert_eq!((greedy.algorithm.as_str(), greedy.mean_score), ("greedy", 1.0));
        assert_eq!(greedy.mean_evaluations_per_token, 1.0);
        assert_eq!(report.aggregates[1].mean_score, 1.0);
    }

    #[test]
    fn score_reranking_refused_for_privileged_metrics() {
        let cfg = RunConfig {
            model: m0_spec(),
            metric: MetricSpec::Bleu { max_n: 1 },
            algorithms: vec![AlgorithmRun::new(AlgorithmSpec::SampleRerank { tau: 1.0 })],
            budgets: vec![4],
            seed: 0,
        };
        assert!(matches!(run_experiment(&cfg, &dataset(2)), Err(Error::Config(_))));
        let value_based = RunConfig {
            algorithms: vec![AlgorithmRun::new(AlgorithmSpec::SampleRerankValue { tau: 1.0 })],
            ..cfg
        };
        assert!(run_experiment(&value_based, &dataset(2)).is_ok());
    }

    #[test]
    fn missing_reference_is_a_config_error() {
        let cfg = RunConfig {
            model: m0_spec(),
            metric: MetricSpec::Bleu { max_n: 1 },
            algorithms: vec![AlgorithmRun::new(AlgorithmSpec::Greedy)],
            budgets: vec![1],
            seed: 0,
        };
        let mut data = dataset(2);
        data[1].reference = None;
        assert!(matches!(run_experiment(&cfg, &data), Err(Error::Config(_))));
    }

    #[test]
    fn out_of_vocabulary_source_rejected() {
        let cfg = RunConfig {
            model: m0_spec(),
            metric: MetricSpec::Coverage,
            algorithms: vec![AlgorithmRun::new(AlgorithmSpec::Greedy)],
            budgets: vec![1],
            seed: 0,
        };
        let data = vec![Instance {
            id: "x".into(),
            source: Sequence::from_ids(&[7]),
            reference: None,
        }];
        assert!(matches!(run_experiment(&cfg, &data), Err(Error::Config(_))));
    }

    #[test]
    fn duplicate_labels_and_bad_budgets_rejected() {
        let base = RunConfig {
            model: m0_spec(),
            metric: occupancy(),
            algorithms: vec![
                AlgorithmRun::new(AlgorithmSpec::Greedy),
                AlgorithmRun::new(AlgorithmSpec::Greedy),
            ],
            budgets: vec![1],
            seed: 0,
        };
        assert!(matches!(run_experiment(&base, &dataset(1)), Err(Error::Config(_))));
        let zero = RunConfig {
            algorithms: vec![AlgorithmRun::new(AlgorithmSpec::Greedy)],
            budgets: vec![0],
            ..base
        };
        assert!(matches!(run_experiment(&zero, &dataset(1)), Err(Error::Config(_))));
    }

    #[test]
    fn entries_sorted_by_instance_id() {
        let cfg = RunConfig {
            model: m0_spec(),
            metric: occupancy(),
            algorithms: vec![AlgorithmRun::new(AlgorithmSpec::Greedy)],
            budgets: vec![1, 2],
            seed: 0,
        };
        let mut data = dataset(3);
        data.reverse();
        let report = run_experiment(&cfg, &data).unwrap();
        let ids: Vec<&str> = report.entries.iter().map(|e| e.instance.as_str()).collect();
        assert_eq!(ids, ["i0", "i0", "i1", "i1", "i2", "i2"]);
    }

    #[test]
    fn oracle_on_m0() {
        let out = run_oracle(&m0_spec(), &occupancy(), &dataset(1)).unwrap();
        assert!(out[0].likelihood_argmax.is_empty());
        assert_eq!(out[0].metric_argmax, vec![0, 0, 0]);
        assert_eq!(out[0].metric_argmax_score, 1.0);
    }

    #[test]
    fn tree_capture_positions() {
        let search = SearchConfig::new(3, 3);
        let snap = search_tree(&m0_spec(), &occupancy(), &dataset(1)[0], &search, 0).unwrap();
        assert_eq!(snap.nodes.len(), 4);
        assert!(search_tree(&m0_spec(), &occupancy(), &dataset(1)[0], &search, 10).is_err());
    }
}
