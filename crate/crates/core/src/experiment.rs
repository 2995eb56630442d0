//! Simulation study: tasks × methods × query budgets × seeds, scored by MSE to
//! the hidden target.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::candidates::chat::{
    conversation_hash, ChatEndpointConfig, ChatMessage, ChatProvider, HttpChatProvider,
    MockChatProvider, MockFixture,
};
use crate::candidates::prompt::{
    build_prompt, build_rerank_prompt, format_vector, CandidateRequest, SYSTEM_PROMPT,
};
use crate::candidates::{llm_candidates, llm_rerank, sample_perturbed, sample_uniform};
use crate::error::{Error, Result};
use crate::oracle::{default_tasks, oracle_rank, GroundTruthTask};
use crate::pipeline::{derive_seed, learn_from_ranking, rollout_candidates, LearnConfig};
use crate::task::{TaskVector, OMEGA_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Model candidates, oracle ranking, preference fit.
    Lgpl,
    /// Uniform random candidates, oracle ranking, preference fit.
    Pl,
    /// First model candidate, no preference learning.
    L2r,
    /// Model candidates ranked by the model itself, preference fit.
    Lpl,
    /// Perturbed-prior candidates, oracle ranking, preference fit.
    LgplPerturbed,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Lgpl,
        Method::Pl,
        Method::L2r,
        Method::Lpl,
        Method::LgplPerturbed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Lgpl => "lgpl",
            Method::Pl => "pl",
            Method::L2r => "l2r",
            Method::Lpl => "lpl",
            Method::LgplPerturbed => "lgpl_perturbed",
        }
    }

    pub fn needs_llm(self) -> bool {
        matches!(self, Method::Lgpl | Method::L2r | Method::Lpl)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

/// Where model completions come from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    pub endpoint: Option<ChatEndpointConfig>,
    pub mock_fixture: Option<PathBuf>,
    pub max_retries: u32,
}

/// A loaded completion source; hands out one provider per experiment cell.
#[derive(Debug, Clone)]
pub enum LlmSource {
    Mock(Arc<MockFixture>),
    Http(ChatEndpointConfig),
}

impl LlmSource {
    pub fn from_config(config: &LlmConfig) -> Result<Option<LlmSource>> {
        if let Some(path) = &config.mock_fixture {
            return Ok(Some(LlmSource::Mock(Arc::new(MockFixture::load(path)?))));
        }
        Ok(config.endpoint.clone().map(LlmSource::Http))
    }

    pub fn provider(&self) -> Result<Box<dyn ChatProvider>> {
        Ok(match self {
            LlmSource::Mock(f) => Box::new(MockChatProvider::new(f.clone())),
            LlmSource::Http(cfg) => Box::new(HttpChatProvider::new(cfg)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub tasks: Vec<GroundTruthTask>,
    pub methods: Vec<Method>,
    pub query_budgets: Vec<usize>,
    /// Replicates per cell.
    pub seeds: usize,
    pub base_seed: u64,
    /// Noise scale of the perturbed-prior source.
    pub perturb_sigma: f64,
    pub learn: LearnConfig,
    pub llm: LlmConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            tasks: default_tasks(),
            methods: vec![Method::LgplPerturbed, Method::Pl],
            query_budgets: vec![4, 8, 12],
            seeds: 5,
            base_seed: 0,
            perturb_sigma: 0.1,
            learn: LearnConfig::default(),
            llm: LlmConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds == 0 {
            return Err(Error::Config("seeds must be >= 1".into()));
        }
        if let Some(b) = self.query_budgets.iter().find(|&&b| b < 2) {
            return Err(Error::Config(format!("query budget {b} is below 2")));
        }
        if self.tasks.is_empty() || self.methods.is_empty() || self.query_budgets.is_empty() {
            return Err(Error::Config(
                "tasks, methods and budgets must be non-empty".into(),
            ));
        }
        for t in &self.tasks {
            t.validate(&self.learn.ranges)?;
        }
        self.learn.validate()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Ok(cfg)
    }
}

/// Mean of squared component differences over the five raw components.
pub fn mse(a: &TaskVector, b: &TaskVector) -> f64 {
    a.to_array()
        .iter()
        .zip(b.to_array())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / OMEGA_DIM as f64
}

/// Seed of one cell, independent of which other cells exist.
pub fn cell_seed(base: u64, task: &str, method: Method, budget: usize, replicate: usize) -> u64 {
    derive_seed(
        base,
        &format!("{task}|{}|{budget}|{replicate}", method.name()),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutcome {
    pub omega: TaskVector,
    pub candidates: Vec<TaskVector>,
}

/// Runs one method on one task with `budget` candidates.
pub fn run_method(
    method: Method,
    task: &GroundTruthTask,
    budget: usize,
    seed: u64,
    config: &ExperimentConfig,
    llm: Option<&LlmSource>,
) -> Result<MethodOutcome> {
    let learn = &config.learn;
    let provider = if method.needs_llm() {
        let source = llm.ok_or_else(|| {
            Error::Config(format!(
                "method {method} needs a model endpoint or a mock fixture"
            ))
        })?;
        Some(source.provider()?)
    } else {
        None
    };
    let retries = config.llm.max_retries;

    let candidates = match method {
        Method::Pl => sample_uniform(budget, &learn.ranges, derive_seed(seed, "candidates"))?,
        Method::LgplPerturbed => sample_perturbed(
            &task.omega_star,
            config.perturb_sigma,
            budget,
            &learn.ranges,
            derive_seed(seed, "candidates"),
        )?,
        Method::Lgpl | Method::L2r | Method::Lpl => {
            let mut request = CandidateRequest::new(task.instruction(), budget);
            request.ranges = learn.ranges;
            let provider = provider.as_deref().expect("provider resolved above");
            llm_candidates(&request, provider, retries)?.value
        }
    };

    if method == Method::L2r {
        return Ok(MethodOutcome {
            omega: candidates[0],
            candidates,
        });
    }

    let trajectories = rollout_candidates(&candidates, learn, derive_seed(seed, "rollouts"))?;
    let ranking = match method {
        Method::Lpl => {
            let provider = provider.as_deref().expect("provider resolved above");
            llm_rerank(
                &task.instruction(),
                &candidates,
                &learn.ranges,
                provider,
                retries,
            )?
        }
        _ => oracle_rank(&trajectories, task, &learn.weights)?,
    };
    let fit = learn_from_ranking(&candidates, &trajectories, &ranking, learn, seed)?;
    Ok(MethodOutcome {
        omega: fit.omega,
        candidates,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub task: String,
    pub method: Method,
    pub budget: usize,
    pub replicate: usize,
    pub seed: u64,
    pub learned_omega: Option<TaskVector>,
    pub mse: Option<f64>,
    pub error: Option<String>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub task: String,
    pub method: Method,
    pub budget: usize,
    pub n_seeds: usize,
    pub n_failed: usize,
    pub mse_mean: f64,
    /// Sample standard deviation; 0 with a single seed.
    pub mse_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultMetadata {
    /// How per-component squared errors are reduced.
    pub mse_reduction: String,
    pub base_seed: u64,
    pub seeds: usize,
    pub perturb_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub metadata: ResultMetadata,
    pub rows: Vec<CellResult>,
    pub aggregates: Vec<Aggregate>,
}

impl ExperimentResult {
    pub fn failed_cells(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }

    pub fn aggregate(&self, task: &str, method: Method, budget: usize) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.task == task && a.method == method && a.budget == budget)
    }

    /// Mean over tasks of each task's mean MSE.
    pub fn method_mean(&self, method: Method, budget: usize) -> Option<f64> {
        let xs: Vec<f64> = self
            .aggregates
            .iter()
            .filter(|a| a.method == method && a.budget == budget && a.n_seeds > a.n_failed)
            .map(|a| a.mse_mean)
            .collect();
        (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn aggregates_csv(&self) -> String {
        let mut out = String::from("task,method,budget,n_seeds,n_failed,mse_mean,mse_std\n");
        for a in &self.aggregates {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                a.task, a.method, a.budget, a.n_seeds, a.n_failed, a.mse_mean, a.mse_std
            ));
        }
        out
    }

    /// Writes `results.json` and `aggregates.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("results.json"), self.to_json()?)?;
        std::fs::write(dir.join("aggregates.csv"), self.aggregates_csv())?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(
            dir.join("results.json"),
        )?)?)
    }
}

fn aggregate(rows: &[CellResult]) -> Vec<Aggregate> {
    let mut groups: BTreeMap<(String, Method, usize), Vec<&CellResult>> = BTreeMap::new();
    for r in rows {
        groups
            .entry((r.task.clone(), r.method, r.budget))
            .or_default()
            .push(r);
    }
    groups
        .into_iter()
        .map(|((task, method, budget), cells)| {
            let ok: Vec<f64> = cells.iter().filter_map(|c| c.mse).collect();
            let n = ok.len() as f64;
            let mean = if ok.is_empty() {
                f64::NAN
            } else {
                ok.iter().sum::<f64>() / n
            };
            let std = if ok.len() > 1 {
                (ok.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            Aggregate {
                task,
                method,
                budget,
                n_seeds: cells.len(),
                n_failed: cells.len() - ok.len(),
                mse_mean: mean,
                mse_std: std,
            }
        })
        .collect()
}

/// Runs the full factorial sweep. Cell failures are recorded, not raised.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let llm = LlmSource::from_config(&config.llm)?;

    let mut cells = Vec::new();
    for task in &config.tasks {
        for &method in &config.methods {
            for &budget in &config.query_budgets {
                for rep in 0..config.seeds {
                    cells.push((task, method, budget, rep));
                }
            }
        }
    }

    let mut rows: Vec<CellResult> = cells
        .par_iter()
        .map(|&(task, method, budget, replicate)| {
            let seed = cell_seed(config.base_seed, &task.name, method, budget, replicate);
            let started = Instant::now();
            let outcome = run_method(method, task, budget, seed, config, llm.as_ref());
            let wall_time_s = started.elapsed().as_secs_f64();
            let (learned_omega, mse, error) = match outcome {
                Ok(o) => (Some(o.omega), Some(mse(&o.omega, &task.omega_star)), None),
                Err(e) => (None, None, Some(e.to_string())),
            };
            CellResult {
                task: task.name.clone(),
                method,
                budget,
                replicate,
                seed,
                learned_omega,
                mse,
                error,
                wall_time_s,
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        (&a.task, a.method, a.budget, a.replicate).cmp(&(&b.task, b.method, b.budget, b.replicate))
    });

    Ok(ExperimentResult {
        metadata: ResultMetadata {
            mse_reduction: "mean over the 5 task-vector components".into(),
            base_seed: config.base_seed,
            seeds: config.seeds,
            perturb_sigma: config.perturb_sigma,
        },
        aggregates: aggregate(&rows),
        rows,
    })
}

/// Builds a hash-keyed mock fixture answering every model call an experiment with
/// `config` will make, so LLM methods can run offline.
///
/// Candidate replies are drawn around each task's target with noise `sigma` and
/// softened gait weights; re-ranking replies order candidates by a noisy distance
/// to the target. This synthesizes a plausible model, it does not replay one.
pub fn synthesize_mock_fixture(config: &ExperimentConfig, sigma: f64) -> Result<MockFixture> {
    let ranges = config.learn.ranges;
    let mut fixture = MockFixture::default();
    for task in &config.tasks {
        for &budget in &config.query_budgets {
            let seed = derive_seed(config.base_seed, &format!("mock/{}/{budget}", task.name));
            let hard = sample_perturbed(&task.omega_star, sigma, budget, &ranges, seed)?;
            let soft: Vec<TaskVector> = hard
                .iter()
                .map(|c| {
                    let w = c.gait_weights.map(|g| 0.1 + 0.8 * g);
                    let round = |x: f64| (x * 100.0).round() / 100.0;
                    TaskVector::new(round(c.velocity), round(c.pitch), w.map(round))
                })
                .collect();

            let mut request = CandidateRequest::new(task.instruction(), budget);
            request.ranges = ranges;
            let messages = [
                ChatMessage::system(SYSTEM_PROMPT),
                ChatMessage::user(build_prompt(&request)),
            ];
            let body = soft.iter().map(format_vector).collect::<Vec<_>>().join(",");
            fixture.by_hash.insert(
                conversation_hash(&messages),
                format!(
                    "A {} walk suggests a few distinct interpretations; here are {budget} options.\n[{body}]",
                    task.name
                ),
            );

            // the model sees the clamped candidates it produced
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "rerank"));
            let noise = Normal::new(0.0, 0.05).expect("positive sd");
            let mut scored: Vec<(f64, usize)> = soft
                .iter()
                .enumerate()
                .map(|(i, c)| (mse(c, &task.omega_star) + noise.sample(&mut rng), i))
                .collect();
            scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let order: Vec<usize> = scored.into_iter().map(|(_, i)| i).collect();
            let clamped: Vec<TaskVector> = soft.iter().map(|c| c.clamped(&ranges)).collect();
            let messages = [
                ChatMessage::system(SYSTEM_PROMPT),
                ChatMessage::user(build_rerank_prompt(&task.instruction(), &clamped, &ranges)),
            ];
            fixture.by_hash.insert(
                conversation_hash(&messages),
                format!(
                    "Best first:\n{}",
                    serde_json::to_string(&order).expect("indices serialize")
                ),
            );
        }
    }
    Ok(fixture)
}
