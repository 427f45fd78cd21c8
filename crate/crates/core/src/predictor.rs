//! Built-in deterministic predictive model: CART-style decision trees and
//! bagged ensembles, for classification and regression.
//!
//! Used by TSTR, the real-vs-fake discriminator, and the external-labeling
//! baseline. The [`FittedPredictor`] trait is the seam for plugging in an
//! external model instead.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;
use crate::table::{ColumnKind, Task, Value};

#[derive(Debug, Error)]
pub enum PredictError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("got {x} rows but {y} labels")]
    LengthMismatch { x: usize, y: usize },
    #[error("invalid predictor spec: {0}")]
    BadSpec(String),
    #[error("unknown predictor kind `{0}`")]
    UnknownKind(String),
    #[error("row {row}: expected a {expected} value in column {column}")]
    BadValue {
        row: usize,
        column: usize,
        expected: &'static str,
    },
    #[error("label {0} does not match the task")]
    BadLabel(usize),
}

/// Which predictor to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    DecisionTree,
    BaggedTrees,
}

impl PredictorKind {
    pub fn name(self) -> &'static str {
        match self {
            PredictorKind::DecisionTree => "decision_tree",
            PredictorKind::BaggedTrees => "bagged_trees",
        }
    }
}

impl fmt::Display for PredictorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PredictorKind {
    type Err = PredictError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "decision_tree" => Ok(PredictorKind::DecisionTree),
            "bagged_trees" => Ok(PredictorKind::BaggedTrees),
            other => Err(PredictError::UnknownKind(other.to_string())),
        }
    }
}

/// Registered predictor kind names.
pub fn predictor_names() -> Vec<&'static str> {
    vec!["decision_tree", "bagged_trees"]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictorSpec {
    pub kind: PredictorKind,
    pub max_depth: usize,
    pub n_trees: usize,
    pub seed: u64,
}

impl Default for PredictorSpec {
    fn default() -> Self {
        PredictorSpec {
            kind: PredictorKind::DecisionTree,
            max_depth: 6,
            n_trees: 20,
            seed: 0,
        }
    }
}

impl PredictorSpec {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// A fitted model; `predict_row` is pure and safe for concurrent callers.
pub trait FittedPredictor: Send + Sync {
    fn task(&self) -> Task;
    fn predict_row(&self, row: &[Value]) -> Value;
}

/// Fit the predictor named by `spec.kind`.
pub fn fit(
    spec: &PredictorSpec,
    rows: &[Vec<Value>],
    kinds: &[ColumnKind],
    labels: &[Value],
    task: Task,
) -> Result<Box<dyn FittedPredictor>, PredictError> {
    match spec.kind {
        PredictorKind::DecisionTree => Ok(Box::new(DecisionTree::fit(
            spec, rows, kinds, labels, task,
        )?)),
        PredictorKind::BaggedTrees => Ok(Box::new(BaggedTrees::fit(
            spec, rows, kinds, labels, task,
        )?)),
    }
}

/// Predict every row with a fitted model.
pub fn predict(model: &dyn FittedPredictor, rows: &[Vec<Value>]) -> Vec<Value> {
    rows.iter().map(|r| model.predict_row(r)).collect()
}

/// Fraction of rows where the prediction equals the label (classification).
pub fn accuracy(model: &dyn FittedPredictor, rows: &[Vec<Value>], labels: &[Value]) -> f64 {
    let hits = rows
        .iter()
        .zip(labels)
        .filter(|(r, y)| &model.predict_row(r) == *y)
        .count();
    hits as f64 / rows.len() as f64
}

/// Mean squared error of predictions (regression).
pub fn mse(model: &dyn FittedPredictor, rows: &[Vec<Value>], labels: &[Value]) -> f64 {
    let total: f64 = rows
        .iter()
        .zip(labels)
        .map(|(r, y)| {
            let p = model.predict_row(r).as_num().unwrap_or(f64::NAN);
            let t = y.as_num().unwrap_or(f64::NAN);
            (p - t) * (p - t)
        })
        .sum();
    total / rows.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
enum SplitRule {
    /// `value <= threshold` goes left.
    Threshold { feature: usize, threshold: f64 },
    /// `value == category` goes left; categories unseen at this node at fit
    /// time are routed to the majority branch.
    Category {
        feature: usize,
        category: String,
        observed: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf {
        value: LeafValue,
    },
    Inner {
        rule: SplitRule,
        majority_left: bool,
        left: usize,
        right: usize,
    },
}

/// Class index for classification, mean for regression.
#[derive(Debug, Clone, PartialEq)]
enum LeafValue {
    Class(usize),
    Mean(f64),
}

#[derive(Debug, Clone)]
enum Labels {
    Classes { of_row: Vec<usize>, names: Vec<String> },
    Reals(Vec<f64>),
}

/// A single CART tree with fixed deterministic tie-breaking: candidate
/// splits are scanned by (feature index, threshold/category in sort order)
/// and only strictly better scores replace the incumbent.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    task: Task,
    classes: Vec<String>,
    nodes: Vec<Node>,
}

fn encode_labels(labels: &[Value], task: Task) -> Result<Labels, PredictError> {
    match task {
        Task::Classification => {
            let mut names: Vec<String> = labels
                .iter()
                .enumerate()
                .map(|(i, v)| v.as_cat().map(str::to_string).ok_or(PredictError::BadLabel(i)))
                .collect::<Result<_, _>>()?;
            names.sort();
            names.dedup();
            let of_row = labels
                .iter()
                .map(|v| {
                    names
                        .iter()
                        .position(|n| n == v.as_cat().expect("checked above"))
                        .expect("every label is in the class list")
                })
                .collect();
            Ok(Labels::Classes { of_row, names })
        }
        Task::Regression => {
            let reals = labels
                .iter()
                .enumerate()
                .map(|(i, v)| v.as_num().ok_or(PredictError::BadLabel(i)))
                .collect::<Result<_, _>>()?;
            Ok(Labels::Reals(reals))
        }
    }
}

struct TreeBuilder<'a> {
    rows: &'a [Vec<Value>],
    kinds: &'a [ColumnKind],
    labels: &'a Labels,
    n_classes: usize,
    max_depth: usize,
    nodes: Vec<Node>,
}

impl TreeBuilder<'_> {
    fn impurity(&self, idx: &[usize]) -> f64 {
        match self.labels {
            Labels::Classes { of_row, .. } => {
                let mut counts = vec![0usize; self.n_classes];
                for &i in idx {
                    counts[of_row[i]] += 1;
                }
                gini(&counts, idx.len())
            }
            Labels::Reals(y) => {
                let (sum, sumsq) = idx
                    .iter()
                    .fold((0.0, 0.0), |(s, q), &i| (s + y[i], q + y[i] * y[i]));
                let n = idx.len() as f64;
                ((sumsq - sum * sum / n) / n).max(0.0)
            }
        }
    }

    fn leaf_value(&self, idx: &[usize]) -> LeafValue {
        match self.labels {
            Labels::Classes { of_row, .. } => {
                let mut counts = vec![0usize; self.n_classes];
                for &i in idx {
                    counts[of_row[i]] += 1;
                }
                // ties break toward the lowest class in sort order
                let mut best = 0;
                for (c, &n) in counts.iter().enumerate() {
                    if n > counts[best] {
                        best = c;
                    }
                }
                LeafValue::Class(best)
            }
            Labels::Reals(y) => {
                let sum: f64 = idx.iter().map(|&i| y[i]).sum();
                LeafValue::Mean(sum / idx.len() as f64)
            }
        }
    }

    fn weighted_impurity(&self, left: &[usize], right: &[usize]) -> f64 {
        let n = (left.len() + right.len()) as f64;
        (left.len() as f64 * self.impurity(left) + right.len() as f64 * self.impurity(right)) / n
    }

    fn best_split(&self, idx: &[usize]) -> Option<(SplitRule, Vec<usize>, Vec<usize>)> {
        let parent = self.impurity(idx);
        if parent <= 0.0 {
            return None;
        }
        let mut best: Option<(f64, SplitRule, Vec<usize>, Vec<usize>)> = None;
        for (feature, kind) in self.kinds.iter().enumerate() {
            match kind {
                ColumnKind::Continuous => {
                    let mut values: Vec<f64> = idx
                        .iter()
                        .map(|&i| self.rows[i][feature].as_num().expect("continuous column"))
                        .collect();
                    values.sort_by(f64::total_cmp);
                    values.dedup();
                    for pair in values.windows(2) {
                        let threshold = (pair[0] + pair[1]) / 2.0;
                        let (left, right): (Vec<usize>, Vec<usize>) =
                            idx.iter().partition(|&&i| {
                                self.rows[i][feature].as_num().expect("continuous") <= threshold
                            });
                        if left.is_empty() || right.is_empty() {
                            continue;
                        }
                        let score = self.weighted_impurity(&left, &right);
                        if best.as_ref().map_or(true, |b| score < b.0) {
                            best = Some((
                                score,
                                SplitRule::Threshold { feature, threshold },
                                left,
                                right,
                            ));
                        }
                    }
                }
                ColumnKind::Categorical => {
                    let mut categories: Vec<&str> = idx
                        .iter()
                        .map(|&i| self.rows[i][feature].as_cat().expect("categorical column"))
                        .collect();
                    categories.sort_unstable();
                    categories.dedup();
                    if categories.len() < 2 {
                        continue;
                    }
                    for category in &categories {
                        let (left, right): (Vec<usize>, Vec<usize>) =
                            idx.iter().partition(|&&i| {
                                self.rows[i][feature].as_cat().expect("categorical")
                                    == *category
                            });
                        if left.is_empty() || right.is_empty() {
                            continue;
                        }
                        let score = self.weighted_impurity(&left, &right);
                        if best.as_ref().map_or(true, |b| score < b.0) {
                            best = Some((
                                score,
                                SplitRule::Category {
                                    feature,
                                    category: category.to_string(),
                                    observed: categories.iter().map(|c| c.to_string()).collect(),
                                },
                                left,
                                right,
                            ));
                        }
                    }
                }
            }
        }
        match best {
            Some((score, rule, left, right)) if score < parent => Some((rule, left, right)),
            _ => None,
        }
    }

    fn build(&mut self, idx: &[usize], depth: usize) -> usize {
        if depth < self.max_depth && idx.len() >= 2 {
            if let Some((rule, left_idx, right_idx)) = self.best_split(idx) {
                let majority_left = left_idx.len() >= right_idx.len();
                let slot = self.nodes.len();
                // placeholder patched after children are built
                self.nodes.push(Node::Leaf {
                    value: LeafValue::Mean(0.0),
                });
                let left = self.build(&left_idx, depth + 1);
                let right = self.build(&right_idx, depth + 1);
                self.nodes[slot] = Node::Inner {
                    rule,
                    majority_left,
                    left,
                    right,
                };
                return slot;
            }
        }
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf {
            value: self.leaf_value(idx),
        });
        slot
    }
}

fn gini(counts: &[usize], n: usize) -> f64 {
    let n = n as f64;
    1.0 - counts
        .iter()
        .map(|&c| {
            let p = c as f64 / n;
            p * p
        })
        .sum::<f64>()
}

fn validate_inputs(
    rows: &[Vec<Value>],
    kinds: &[ColumnKind],
    labels: &[Value],
) -> Result<(), PredictError> {
    if rows.is_empty() {
        return Err(PredictError::EmptyTrainingSet);
    }
    if rows.len() != labels.len() {
        return Err(PredictError::LengthMismatch {
            x: rows.len(),
            y: labels.len(),
        });
    }
    for (r, row) in rows.iter().enumerate() {
        for (c, (value, kind)) in row.iter().zip(kinds).enumerate() {
            match (value, kind) {
                (Value::Num(_), ColumnKind::Continuous)
                | (Value::Cat(_), ColumnKind::Categorical) => {}
                (_, ColumnKind::Continuous) => {
                    return Err(PredictError::BadValue {
                        row: r,
                        column: c,
                        expected: "continuous",
                    })
                }
                (_, ColumnKind::Categorical) => {
                    return Err(PredictError::BadValue {
                        row: r,
                        column: c,
                        expected: "categorical",
                    })
                }
            }
        }
    }
    Ok(())
}

impl DecisionTree {
    pub fn fit(
        spec: &PredictorSpec,
        rows: &[Vec<Value>],
        kinds: &[ColumnKind],
        labels: &[Value],
        task: Task,
    ) -> Result<Self, PredictError> {
        if spec.max_depth == 0 {
            return Err(PredictError::BadSpec("max_depth must be >= 1".into()));
        }
        validate_inputs(rows, kinds, labels)?;
        let encoded = encode_labels(labels, task)?;
        let idx: Vec<usize> = (0..rows.len()).collect();
        Ok(Self::fit_encoded(spec, rows, kinds, &encoded, task, &idx))
    }

    fn fit_encoded(
        spec: &PredictorSpec,
        rows: &[Vec<Value>],
        kinds: &[ColumnKind],
        labels: &Labels,
        task: Task,
        idx: &[usize],
    ) -> Self {
        let (classes, n_classes) = match labels {
            Labels::Classes { names, .. } => (names.clone(), names.len()),
            Labels::Reals(_) => (Vec::new(), 0),
        };
        let mut builder = TreeBuilder {
            rows,
            kinds,
            labels,
            n_classes,
            max_depth: spec.max_depth,
            nodes: Vec::new(),
        };
        builder.build(idx, 0);
        DecisionTree {
            task,
            classes,
            nodes: builder.nodes,
        }
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    fn descend(&self, row: &[Value]) -> &LeafValue {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value } => return value,
                Node::Inner {
                    rule,
                    majority_left,
                    left,
                    right,
                } => {
                    let go_left = match rule {
                        SplitRule::Threshold { feature, threshold } => {
                            match row[*feature].as_num() {
                                Some(x) => x <= *threshold,
                                None => *majority_left,
                            }
                        }
                        SplitRule::Category {
                            feature,
                            category,
                            observed,
                        } => match row[*feature].as_cat() {
                            Some(c) if observed.iter().any(|o| o == c) => c == category,
                            _ => *majority_left,
                        },
                    };
                    at = if go_left { *left } else { *right };
                }
            }
        }
    }
}

impl FittedPredictor for DecisionTree {
    fn task(&self) -> Task {
        self.task
    }

    fn predict_row(&self, row: &[Value]) -> Value {
        match self.descend(row) {
            LeafValue::Class(c) => Value::Cat(self.classes[*c].clone()),
            LeafValue::Mean(m) => Value::Num(*m),
        }
    }
}

/// Bootstrap-aggregated decision trees; majority vote / mean prediction.
/// Bootstrap indices come from one seeded stream, drawn tree by tree.
#[derive(Debug, Clone, PartialEq)]
pub struct BaggedTrees {
    task: Task,
    classes: Vec<String>,
    trees: Vec<DecisionTree>,
}

impl BaggedTrees {
    pub fn fit(
        spec: &PredictorSpec,
        rows: &[Vec<Value>],
        kinds: &[ColumnKind],
        labels: &[Value],
        task: Task,
    ) -> Result<Self, PredictError> {
        if spec.max_depth == 0 || spec.n_trees == 0 {
            return Err(PredictError::BadSpec(
                "max_depth and n_trees must be >= 1".into(),
            ));
        }
        validate_inputs(rows, kinds, labels)?;
        let encoded = encode_labels(labels, task)?;
        let classes = match &encoded {
            Labels::Classes { names, .. } => names.clone(),
            Labels::Reals(_) => Vec::new(),
        };
        let mut rng = rng::substream(spec.seed, 0xba66, 0);
        let mut trees = Vec::with_capacity(spec.n_trees);
        for _ in 0..spec.n_trees {
            let idx: Vec<usize> = (0..rows.len())
                .map(|_| rng.random_range(0..rows.len()))
                .collect();
            trees.push(DecisionTree::fit_encoded(
                spec, rows, kinds, &encoded, task, &idx,
            ));
        }
        Ok(BaggedTrees {
            task,
            classes,
            trees,
        })
    }
}

impl FittedPredictor for BaggedTrees {
    fn task(&self) -> Task {
        self.task
    }

    fn predict_row(&self, row: &[Value]) -> Value {
        match self.task {
            Task::Classification => {
                let mut votes = vec![0usize; self.classes.len()];
                for tree in &self.trees {
                    if let LeafValue::Class(c) = tree.descend(row) {
                        votes[*c] += 1;
                    }
                }
                let mut best = 0;
                for (c, &v) in votes.iter().enumerate() {
                    if v > votes[best] {
                        best = c;
                    }
                }
                Value::Cat(self.classes[best].clone())
            }
            Task::Regression => {
                let sum: f64 = self
                    .trees
                    .iter()
                    .map(|t| match t.descend(row) {
                        LeafValue::Mean(m) => *m,
                        LeafValue::Class(_) => unreachable!("regression trees hold means"),
                    })
                    .sum();
                Value::Num(sum / self.trees.len() as f64)
            }
        }
    }
}
