//! Preference learning: rankings → pairwise comparisons → sub-segment dataset →
//! Bradley-Terry fit of the task vector.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gait::Trajectory;
use crate::reward::{gait_matches, trajectory_return, trajectory_return_grad, TimeStep};
use crate::task::{Ranges, RewardWeights, TaskVector, OMEGA_DIM};

/// Rankings are limited to fewer than ten items.
pub const MAX_RANKED: usize = 9;

pub const DEFAULT_SEGMENT_LEN: usize = 20;
pub const DEFAULT_COMPARISON_CAP: usize = 2000;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SegmentRef {
    pub trajectory_id: String,
    pub start: usize,
    pub length: usize,
}

impl std::fmt::Display for SegmentRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}[{}..{}]",
            self.trajectory_id,
            self.start,
            self.start + self.length
        )
    }
}

/// Which side of a comparison was preferred.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Label {
    First,
    Second,
}

impl Label {
    pub fn flipped(self) -> Label {
        match self {
            Label::First => Label::Second,
            Label::Second => Label::First,
        }
    }
}

impl TryFrom<u8> for Label {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, Self::Error> {
        match v {
            1 => Ok(Label::First),
            2 => Ok(Label::Second),
            other => Err(format!("label must be 1 or 2, got {other}")),
        }
    }
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        match l {
            Label::First => 1,
            Label::Second => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub first: SegmentRef,
    pub second: SegmentRef,
    pub label: Label,
}

impl Comparison {
    /// Same judgement with the two sides exchanged.
    pub fn swapped(&self) -> Comparison {
        Comparison {
            first: self.second.clone(),
            second: self.first.clone(),
            label: self.label.flipped(),
        }
    }
}

/// Comparisons plus the trajectories they reference.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PreferenceDataset {
    comparisons: Vec<Comparison>,
    trajectories: BTreeMap<String, Trajectory>,
}

impl PreferenceDataset {
    pub fn new(comparisons: Vec<Comparison>, trajectories: Vec<Trajectory>) -> Result<Self> {
        let trajectories = trajectories
            .into_iter()
            .map(|t| (t.id.clone(), t))
            .collect::<BTreeMap<_, _>>();
        Self::from_parts(comparisons, trajectories)
    }

    fn from_parts(
        comparisons: Vec<Comparison>,
        trajectories: BTreeMap<String, Trajectory>,
    ) -> Result<Self> {
        let ds = PreferenceDataset {
            comparisons,
            trajectories,
        };
        for c in &ds.comparisons {
            if c.first.trajectory_id == c.second.trajectory_id {
                return Err(Error::InvalidArgument(format!(
                    "comparison pits {} against its own trajectory",
                    c.first
                )));
            }
            ds.segment(&c.first)?;
            ds.segment(&c.second)?;
        }
        Ok(ds)
    }

    pub fn comparisons(&self) -> &[Comparison] {
        &self.comparisons
    }

    pub fn trajectories(&self) -> &BTreeMap<String, Trajectory> {
        &self.trajectories
    }

    pub fn len(&self) -> usize {
        self.comparisons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.comparisons.is_empty()
    }

    /// Resolves a segment reference to its steps.
    pub fn segment(&self, r: &SegmentRef) -> Result<&[TimeStep]> {
        let traj = self
            .trajectories
            .get(&r.trajectory_id)
            .ok_or_else(|| Error::DanglingSegment(r.to_string()))?;
        if r.length == 0 || r.start + r.length > traj.len() {
            return Err(Error::DanglingSegment(r.to_string()));
        }
        Ok(&traj.steps[r.start..r.start + r.length])
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Raw {
            comparisons: Vec<Comparison>,
            trajectories: BTreeMap<String, Trajectory>,
        }
        let raw: Raw = serde_json::from_str(s)?;
        for (key, t) in &raw.trajectories {
            if key != &t.id {
                return Err(Error::InvalidArgument(format!(
                    "trajectory keyed {key} carries id {}",
                    t.id
                )));
            }
        }
        Self::from_parts(raw.comparisons, raw.trajectories)
    }
}

/// All `n(n-1)/2` (preferred, unpreferred) pairs implied by a best-first ranking
/// of at most [`MAX_RANKED`] items.
pub fn ranking_to_pairs<T: Clone + Eq + std::hash::Hash + std::fmt::Debug>(
    ranking: &[T],
) -> Result<Vec<(T, T)>> {
    if ranking.len() > MAX_RANKED {
        return Err(Error::InvalidRanking(format!(
            "at most {MAX_RANKED} items can be ranked, got {}",
            ranking.len()
        )));
    }
    order_to_pairs(ranking)
}

/// [`ranking_to_pairs`] without the upper bound, for machine-generated orders.
pub fn order_to_pairs<T: Clone + Eq + std::hash::Hash + std::fmt::Debug>(
    ranking: &[T],
) -> Result<Vec<(T, T)>> {
    let n = ranking.len();
    if n < 2 {
        return Err(Error::InvalidRanking(format!(
            "need at least 2 items, got {n}"
        )));
    }
    let mut seen = HashSet::new();
    for id in ranking {
        if !seen.insert(id) {
            return Err(Error::InvalidRanking(format!("duplicate item {id:?}")));
        }
    }
    let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            pairs.push((ranking[i].clone(), ranking[j].clone()));
        }
    }
    Ok(pairs)
}

/// Checks that `ranking` is a permutation of `0..n`.
pub fn validate_permutation(ranking: &[usize], n: usize) -> Result<()> {
    if ranking.len() != n {
        return Err(Error::InvalidRanking(format!(
            "expected {n} entries, got {}",
            ranking.len()
        )));
    }
    let mut seen = vec![false; n];
    for &i in ranking {
        if i >= n {
            return Err(Error::InvalidRanking(format!(
                "index {i} out of range for {n} items"
            )));
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::InvalidRanking(format!("index {i} appears twice")));
        }
    }
    Ok(())
}

/// Expands trajectory-level preferences into sub-segment comparisons.
///
/// Each trajectory of length T contributes the `T - k` windows starting at
/// `0..T-k`. Every window of the preferred trajectory is paired with every window
/// of the other, preferred side first and labelled [`Label::First`]. When the
/// total exceeds `cap`, a seeded uniform subsample of exactly `cap` comparisons is
/// kept (in enumeration order).
pub fn expand_subsegments(
    pairs: &[(String, String)],
    trajectories: &[Trajectory],
    k: usize,
    cap: Option<usize>,
    seed: u64,
) -> Result<PreferenceDataset> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument(
            "no preference pairs to expand".into(),
        ));
    }
    if k == 0 {
        return Err(Error::InvalidArgument(
            "segment length k must be >= 1".into(),
        ));
    }
    let by_id: BTreeMap<&str, &Trajectory> =
        trajectories.iter().map(|t| (t.id.as_str(), t)).collect();
    let windows = |id: &str| -> Result<usize> {
        let t = by_id
            .get(id)
            .ok_or_else(|| Error::DanglingSegment(id.to_string()))?;
        if k >= t.len() {
            return Err(Error::SegmentTooLong { k, t: t.len() });
        }
        Ok(t.len() - k)
    };

    // (pair index, windows of preferred, windows of other, offset into the flat index)
    let mut blocks = Vec::with_capacity(pairs.len());
    let mut total = 0usize;
    for (p, (a, b)) in pairs.iter().enumerate() {
        if a == b {
            return Err(Error::InvalidArgument(format!(
                "pair compares {a} with itself"
            )));
        }
        let (wa, wb) = (windows(a)?, windows(b)?);
        blocks.push((p, wa, wb, total));
        total += wa * wb;
    }

    let chosen: Vec<usize> = match cap {
        Some(cap) if total > cap => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut picked = index::sample(&mut rng, total, cap).into_vec();
            picked.sort_unstable();
            picked
        }
        _ => (0..total).collect(),
    };

    let mut comparisons = Vec::with_capacity(chosen.len());
    let mut block = 0;
    for flat in chosen {
        while flat >= blocks[block].3 + blocks[block].1 * blocks[block].2 {
            block += 1;
        }
        let (p, _, wb, offset) = blocks[block];
        let local = flat - offset;
        let (i, j) = (local / wb, local % wb);
        let (a, b) = &pairs[p];
        comparisons.push(Comparison {
            first: SegmentRef {
                trajectory_id: a.clone(),
                start: i,
                length: k,
            },
            second: SegmentRef {
                trajectory_id: b.clone(),
                start: j,
                length: k,
            },
            label: Label::First,
        });
    }

    let used: HashSet<&str> = pairs
        .iter()
        .flat_map(|(a, b)| [a.as_str(), b.as_str()])
        .collect();
    let kept = trajectories
        .iter()
        .filter(|t| used.contains(t.id.as_str()))
        .cloned()
        .collect();
    PreferenceDataset::new(comparisons, kept)
}

/// `P[a ≻ b] = 1 / (1 + exp(R_b - R_a))`, evaluated without overflow.
pub fn bt_probability(return_a: f64, return_b: f64) -> f64 {
    logistic(return_a - return_b)
}

pub(crate) fn logistic(d: f64) -> f64 {
    if d >= 0.0 {
        1.0 / (1.0 + (-d).exp())
    } else {
        let e = d.exp();
        e / (1.0 + e)
    }
}

/// `-ln σ(d)`, stable for large |d|.
fn neg_log_logistic(d: f64) -> f64 {
    // softplus(-d)
    (-d).max(0.0) + (-d.abs()).exp().ln_1p()
}

fn nll(d: f64, label: Label) -> f64 {
    match label {
        Label::First => neg_log_logistic(d),
        Label::Second => neg_log_logistic(-d),
    }
}

fn y_first(label: Label) -> f64 {
    match label {
        Label::First => 1.0,
        Label::Second => 0.0,
    }
}

/// Mean Bradley-Terry negative log-likelihood of the observed labels.
pub fn bce_loss(
    dataset: &PreferenceDataset,
    omega: &TaskVector,
    weights: &RewardWeights,
) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut total = 0.0;
    for c in dataset.comparisons() {
        let r1 = trajectory_return(dataset.segment(&c.first)?, omega, weights)?;
        let r2 = trajectory_return(dataset.segment(&c.second)?, omega, weights)?;
        total += nll(r1 - r2, c.label);
    }
    Ok(total / dataset.len() as f64)
}

/// Exact gradient of [`bce_loss`] with respect to ω.
pub fn bce_loss_grad(
    dataset: &PreferenceDataset,
    omega: &TaskVector,
    weights: &RewardWeights,
) -> Result<[f64; OMEGA_DIM]> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut g = [0.0; OMEGA_DIM];
    for c in dataset.comparisons() {
        let s1 = dataset.segment(&c.first)?;
        let s2 = dataset.segment(&c.second)?;
        let d = trajectory_return(s1, omega, weights)? - trajectory_return(s2, omega, weights)?;
        let coeff = logistic(d) - y_first(c.label);
        let g1 = trajectory_return_grad(s1, omega, weights)?;
        let g2 = trajectory_return_grad(s2, omega, weights)?;
        for i in 0..OMEGA_DIM {
            g[i] += coeff * (g1[i] - g2[i]);
        }
    }
    let n = dataset.len() as f64;
    Ok(g.map(|x| x / n))
}

/// Sufficient statistics of a segment; the return is a quadratic in ω over these.
#[derive(Debug, Clone, Copy)]
struct SegmentStats {
    len: f64,
    sum_v: f64,
    sum_v2: f64,
    sum_rho: f64,
    sum_rho2: f64,
    sum_match: [f64; 3],
}

impl SegmentStats {
    fn of(steps: &[TimeStep]) -> Self {
        let mut s = SegmentStats {
            len: steps.len() as f64,
            sum_v: 0.0,
            sum_v2: 0.0,
            sum_rho: 0.0,
            sum_rho2: 0.0,
            sum_match: [0.0; 3],
        };
        for st in steps {
            s.sum_v += st.v;
            s.sum_v2 += st.v * st.v;
            s.sum_rho += st.rho;
            s.sum_rho2 += st.rho * st.rho;
            for (acc, m) in s.sum_match.iter_mut().zip(gait_matches(st)) {
                *acc += m;
            }
        }
        s
    }

    fn value(&self, omega: &TaskVector, w: &RewardWeights) -> f64 {
        let (v, p) = (omega.velocity, omega.pitch);
        let a = w.alphas();
        -a[0] * (self.len * v * v - 2.0 * v * self.sum_v + self.sum_v2)
            - a[1] * (self.len * p * p - 2.0 * p * self.sum_rho + self.sum_rho2)
            + (0..3)
                .map(|i| a[2 + i] * omega.gait_weights[i] * self.sum_match[i])
                .sum::<f64>()
    }

    fn grad(&self, omega: &TaskVector, w: &RewardWeights) -> [f64; OMEGA_DIM] {
        let a = w.alphas();
        [
            -2.0 * a[0] * (self.len * omega.velocity - self.sum_v),
            -2.0 * a[1] * (self.len * omega.pitch - self.sum_rho),
            a[2] * self.sum_match[0],
            a[3] * self.sum_match[1],
            a[4] * self.sum_match[2],
        ]
    }
}

/// Dataset reduced to per-segment statistics for fast repeated evaluation.
struct CompiledDataset {
    segments: Vec<SegmentStats>,
    // (first segment, second segment, y_first)
    pairs: Vec<(usize, usize, f64)>,
}

impl CompiledDataset {
    fn new(dataset: &PreferenceDataset) -> Result<Self> {
        fn intern<'a>(
            r: &'a SegmentRef,
            dataset: &PreferenceDataset,
            index: &mut HashMap<&'a SegmentRef, usize>,
            segments: &mut Vec<SegmentStats>,
        ) -> Result<usize> {
            if let Some(&i) = index.get(r) {
                return Ok(i);
            }
            segments.push(SegmentStats::of(dataset.segment(r)?));
            index.insert(r, segments.len() - 1);
            Ok(segments.len() - 1)
        }

        let mut index = HashMap::new();
        let mut segments = Vec::new();
        let mut pairs = Vec::with_capacity(dataset.len());
        for c in dataset.comparisons() {
            let a = intern(&c.first, dataset, &mut index, &mut segments)?;
            let b = intern(&c.second, dataset, &mut index, &mut segments)?;
            pairs.push((a, b, y_first(c.label)));
        }
        Ok(CompiledDataset { segments, pairs })
    }

    fn loss_and_grad(&self, omega: &TaskVector, w: &RewardWeights) -> (f64, [f64; OMEGA_DIM]) {
        let values: Vec<f64> = self.segments.iter().map(|s| s.value(omega, w)).collect();
        let grads: Vec<[f64; OMEGA_DIM]> = self.segments.iter().map(|s| s.grad(omega, w)).collect();
        let mut loss = 0.0;
        let mut g = [0.0; OMEGA_DIM];
        for &(a, b, y) in &self.pairs {
            let d = values[a] - values[b];
            loss += if y == 1.0 {
                neg_log_logistic(d)
            } else {
                neg_log_logistic(-d)
            };
            let coeff = logistic(d) - y;
            for i in 0..OMEGA_DIM {
                g[i] += coeff * (grads[a][i] - grads[b][i]);
            }
        }
        let n = self.pairs.len() as f64;
        (loss / n, g.map(|x| x / n))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub learning_rate: f64,
    pub iterations: usize,
    /// Starting point; callers normally pass the mean of the candidates.
    pub init: TaskVector,
    /// Comparison cap used when the dataset is expanded.
    pub comparison_cap: usize,
    pub seed: u64,
    pub ranges: Ranges,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            learning_rate: 0.05,
            iterations: 500,
            init: TaskVector::new(0.75, 0.0, [1.0 / 3.0; 3]),
            comparison_cap: DEFAULT_COMPARISON_CAP,
            seed: 0,
            ranges: Ranges::default(),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidArgument("iterations must be >= 1".into()));
        }
        if !self.init.is_finite() {
            return Err(Error::InvalidArgument("init must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Lowest-loss iterate.
    pub omega: TaskVector,
    pub loss: f64,
    pub best_iteration: usize,
    /// Loss at iterate 0 (the clamped init) through the last iterate.
    pub trace: Vec<f64>,
}

/// Full-batch projected gradient descent on [`bce_loss`].
pub fn fit(
    dataset: &PreferenceDataset,
    weights: &RewardWeights,
    config: &FitConfig,
) -> Result<FitResult> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let compiled = CompiledDataset::new(dataset)?;
    let mut omega = config.init.clamped(&config.ranges);
    let mut trace = Vec::with_capacity(config.iterations + 1);
    let mut best = (f64::INFINITY, omega, 0);

    for it in 0..=config.iterations {
        let (loss, grad) = compiled.loss_and_grad(&omega, weights);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged {
                iteration: it,
                loss,
            });
        }
        trace.push(loss);
        if loss < best.0 {
            best = (loss, omega, it);
        }
        if it == config.iterations {
            break;
        }
        let mut next = omega.to_array();
        for (x, g) in next.iter_mut().zip(grad) {
            *x -= config.learning_rate * g;
        }
        omega = TaskVector::from_array(next).clamped(&config.ranges);
    }

    Ok(FitResult {
        omega: best.1,
        loss: best.0,
        best_iteration: best.2,
        trace,
    })
}
