//! Sentence codec: rows to "Name is value" sentences, permutation
//! strategies over cells, and parsing of generated text back into rows.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::table::{ColumnKind, Schema, Value, RESERVED_DELIMITERS};

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("value `{text}` for column `{column}` contains reserved delimiter `{delimiter}`")]
    ReservedDelimiter {
        column: String,
        text: String,
        delimiter: &'static str,
    },
    #[error("value for column `{0}` is empty")]
    EmptyValue(String),
    #[error("row has {got} values, schema expects {want}")]
    RowWidth { got: usize, want: usize },
    #[error("sentence has no target cell; a full sentence is required")]
    PartialSentence,
    #[error("sentence has more than one target cell")]
    DuplicateTarget,
    #[error("duplicate cell name `{0}` in sentence")]
    DuplicateCell(String),
    #[error("unknown permutation strategy `{0}`")]
    UnknownStrategy(String),
    #[error("fragment `{fragment}`: no ` is ` separator")]
    MissingIs { fragment: String },
    #[error("fragment `{fragment}`: unknown column `{name}`")]
    UnknownColumn { fragment: String, name: String },
    #[error("fragment `{fragment}`: column `{name}` appears more than once")]
    DuplicateColumn { fragment: String, name: String },
    #[error("fragment `{fragment}`: cannot parse `{text}` as a number for column `{name}`")]
    BadNumber {
        fragment: String,
        name: String,
        text: String,
    },
    #[error("condition pair names column `{0}` more than once")]
    DuplicateConditionName(String),
}

/// One "name is value" unit of a sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cell {
    pub name: String,
    pub value_text: String,
    pub is_target: bool,
}

impl Cell {
    pub fn render(&self) -> String {
        format!("{} is {}", self.name, self.value_text)
    }
}

/// An ordered list of cells covering all M features plus the target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    cells: Vec<Cell>,
}

impl Sentence {
    pub fn new(cells: Vec<Cell>) -> Result<Self, CodecError> {
        let targets = cells.iter().filter(|c| c.is_target).count();
        if targets > 1 {
            return Err(CodecError::DuplicateTarget);
        }
        for (i, c) in cells.iter().enumerate() {
            if cells[..i].iter().any(|o| o.name == c.name) {
                return Err(CodecError::DuplicateCell(c.name.clone()));
            }
        }
        Ok(Sentence { cells })
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn has_target(&self) -> bool {
        self.cells.iter().any(|c| c.is_target)
    }

    /// Joined text: `"X1 is v1, ..., Y is y"`.
    pub fn render(&self) -> String {
        self.cells
            .iter()
            .map(Cell::render)
            .collect::<Vec<_>>()
            .join(", ")
    }
}

fn check_value_text(column: &str, text: &str) -> Result<(), CodecError> {
    if text.is_empty() {
        return Err(CodecError::EmptyValue(column.to_string()));
    }
    for delim in RESERVED_DELIMITERS {
        if text.contains(delim) {
            return Err(CodecError::ReservedDelimiter {
                column: column.to_string(),
                text: text.to_string(),
                delimiter: delim,
            });
        }
    }
    Ok(())
}

/// Serialize a row (M features + target, target last) in schema order.
pub fn encode_row(row: &[Value], schema: &Schema) -> Result<Sentence, CodecError> {
    let m = schema.num_features();
    if row.len() != m + 1 {
        return Err(CodecError::RowWidth {
            got: row.len(),
            want: m + 1,
        });
    }
    let mut cells = Vec::with_capacity(m + 1);
    for (j, value) in row.iter().enumerate() {
        let (name, is_target) = if j < m {
            (schema.feature_names()[j].clone(), false)
        } else {
            (schema.target_name().to_string(), true)
        };
        let text = value.render();
        check_value_text(&name, &text)?;
        cells.push(Cell {
            name,
            value_text: text,
            is_target,
        });
    }
    Sentence::new(cells)
}

/// Cell-order strategies applied to full sentences before fine-tuning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PermutationKind {
    PermuteX,
    PermuteXy,
    Identity,
}

impl fmt::Display for PermutationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl PermutationKind {
    pub fn name(self) -> &'static str {
        match self {
            PermutationKind::PermuteX => "permute_x",
            PermutationKind::PermuteXy => "permute_xy",
            PermutationKind::Identity => "identity",
        }
    }
}

impl FromStr for PermutationKind {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        permutation(s).map(|p| p.kind())
    }
}

/// A cell-order strategy. Implementations preserve the cell multiset.
pub trait Permutation: Sync {
    fn kind(&self) -> PermutationKind;
    fn name(&self) -> &'static str {
        self.kind().name()
    }
    fn permute(&self, s: &Sentence, rng: &mut ChaCha8Rng) -> Result<Sentence, CodecError>;
}

/// Shuffle feature cells uniformly, pin the target cell at the end.
pub struct PermuteX;

/// Shuffle all cells, target included.
pub struct PermuteXy;

/// Leave the sentence unchanged.
pub struct IdentityOrder;

fn require_full(s: &Sentence) -> Result<(), CodecError> {
    if !s.has_target() {
        return Err(CodecError::PartialSentence);
    }
    Ok(())
}

impl Permutation for PermuteX {
    fn kind(&self) -> PermutationKind {
        PermutationKind::PermuteX
    }

    fn permute(&self, s: &Sentence, rng: &mut ChaCha8Rng) -> Result<Sentence, CodecError> {
        require_full(s)?;
        let mut features: Vec<Cell> = s.cells().iter().filter(|c| !c.is_target).cloned().collect();
        let target = s
            .cells()
            .iter()
            .find(|c| c.is_target)
            .cloned()
            .expect("target checked above");
        features.shuffle(rng);
        features.push(target);
        Sentence::new(features)
    }
}

impl Permutation for PermuteXy {
    fn kind(&self) -> PermutationKind {
        PermutationKind::PermuteXy
    }

    fn permute(&self, s: &Sentence, rng: &mut ChaCha8Rng) -> Result<Sentence, CodecError> {
        require_full(s)?;
        let mut cells = s.cells().to_vec();
        cells.shuffle(rng);
        Sentence::new(cells)
    }
}

impl Permutation for IdentityOrder {
    fn kind(&self) -> PermutationKind {
        PermutationKind::Identity
    }

    fn permute(&self, s: &Sentence, _rng: &mut ChaCha8Rng) -> Result<Sentence, CodecError> {
        require_full(s)?;
        Ok(s.clone())
    }
}

static PERMUTATIONS: [&dyn Permutation; 3] = [&PermuteX, &PermuteXy, &IdentityOrder];

/// Look up a permutation strategy by its registered name.
pub fn permutation(name: &str) -> Result<&'static dyn Permutation, CodecError> {
    PERMUTATIONS
        .iter()
        .copied()
        .find(|p| p.name() == name)
        .ok_or_else(|| CodecError::UnknownStrategy(name.to_string()))
}

/// Registered permutation strategy names.
pub fn permutation_names() -> Vec<&'static str> {
    PERMUTATIONS.iter().map(|p| p.name()).collect()
}

/// Resolve a [`PermutationKind`] to its strategy implementation.
pub fn permutation_for(kind: PermutationKind) -> &'static dyn Permutation {
    permutation(kind.name()).expect("all kinds are registered")
}

/// Apply a permutation strategy to a full sentence.
pub fn permute(
    s: &Sentence,
    strategy: PermutationKind,
    rng: &mut ChaCha8Rng,
) -> Result<Sentence, CodecError> {
    permutation_for(strategy).permute(s, rng)
}

/// Columns recovered from a decoded text, with unparsed ones left `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedRow {
    pub features: Vec<Option<Value>>,
    pub target: Option<Value>,
}

impl DecodedRow {
    pub fn empty(schema: &Schema) -> Self {
        DecodedRow {
            features: vec![None; schema.num_features()],
            target: None,
        }
    }

    /// Names of feature columns still missing.
    pub fn missing<'s>(&self, schema: &'s Schema) -> Vec<&'s str> {
        self.features
            .iter()
            .zip(schema.feature_names())
            .filter(|(v, _)| v.is_none())
            .map(|(_, n)| n.as_str())
            .collect()
    }

    pub fn features_complete(&self) -> bool {
        self.features.iter().all(Option::is_some)
    }
}

fn parse_value(
    kind: ColumnKind,
    text: &str,
    name: &str,
    fragment: &str,
) -> Result<Value, CodecError> {
    match kind {
        ColumnKind::Categorical => Ok(Value::Cat(text.to_string())),
        ColumnKind::Continuous => match text.parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(Value::Num(x)),
            _ => Err(CodecError::BadNumber {
                fragment: fragment.to_string(),
                name: name.to_string(),
                text: text.to_string(),
            }),
        },
    }
}

/// Parse generated text back into a (possibly partial) row.
///
/// The text is split on `", "`, each fragment on its first `" is "`.
/// Unknown or repeated column names and unparsable numbers are errors; a
/// fragment set covering only part of the schema is not.
pub fn decode_text(text: &str, schema: &Schema) -> Result<DecodedRow, CodecError> {
    let mut row = DecodedRow::empty(schema);
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Ok(row);
    }
    for fragment in trimmed.split(", ") {
        let (name, value_text) = fragment.split_once(" is ").ok_or_else(|| {
            CodecError::MissingIs {
                fragment: fragment.to_string(),
            }
        })?;
        let column = schema.column(name).map_err(|_| CodecError::UnknownColumn {
            fragment: fragment.to_string(),
            name: name.to_string(),
        })?;
        let value = parse_value(schema.kind_of(column), value_text, name, fragment)?;
        let slot = match column {
            Some(i) => &mut row.features[i],
            None => &mut row.target,
        };
        if slot.is_some() {
            return Err(CodecError::DuplicateColumn {
                fragment: fragment.to_string(),
                name: name.to_string(),
            });
        }
        *slot = Some(value);
    }
    Ok(row)
}

/// Build a sampling condition: `"name is value, "` fragments in the given
/// order, with a trailing `", "` so the model continues with a new cell.
pub fn make_condition(pairs: &[(&str, &Value)], schema: &Schema) -> Result<String, CodecError> {
    let mut out = String::new();
    let mut seen: Vec<&str> = Vec::new();
    for (name, value) in pairs {
        schema.column(name).map_err(|_| CodecError::UnknownColumn {
            fragment: format!("{name} is {}", value.render()),
            name: name.to_string(),
        })?;
        if seen.contains(name) {
            return Err(CodecError::DuplicateConditionName(name.to_string()));
        }
        seen.push(name);
        let text = value.render();
        check_value_text(name, &text)?;
        out.push_str(name);
        out.push_str(" is ");
        out.push_str(&text);
        out.push_str(", ");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::table::Task;
    use std::collections::HashSet;

    fn demo_schema() -> Schema {
        Schema::new(
            vec!["Age".into(), "Edu".into(), "Job".into()],
            vec![
                ColumnKind::Continuous,
                ColumnKind::Categorical,
                ColumnKind::Categorical,
            ],
            "Income".into(),
            Task::Classification,
        )
        .unwrap()
    }

    fn demo_row() -> Vec<Value> {
        vec![
            Value::Num(25.0),
            Value::Cat("Bachelor".into()),
            Value::Cat("Admin".into()),
            Value::Cat("Low".into()),
        ]
    }

    #[test]
    fn encode_worked_example() {
        let s = encode_row(&demo_row(), &demo_schema()).unwrap();
        assert_eq!(
            s.render(),
            "Age is 25, Edu is Bachelor, Job is Admin, Income is Low"
        );
        assert!(s.cells().last().unwrap().is_target);
    }

    #[test]
    fn encode_minimal_schema() {
        let schema = Schema::new(
            vec!["X".into()],
            vec![ColumnKind::Continuous],
            "Y".into(),
            Task::Regression,
        )
        .unwrap();
        let s = encode_row(&[Value::Num(0.0), Value::Num(1.0)], &schema).unwrap();
        assert_eq!(s.render(), "X is 0, Y is 1");
    }

    #[test]
    fn continuous_rendering_is_shortest_roundtrip() {
        let schema = Schema::new(
            vec!["W".into()],
            vec![ColumnKind::Continuous],
            "Y".into(),
            Task::Regression,
        )
        .unwrap();
        let s = encode_row(&[Value::Num(2.50), Value::Num(1.0)], &schema).unwrap();
        assert_eq!(s.cells()[0].render(), "W is 2.5");
    }

    #[test]
    fn encode_rejects_delimiter_value() {
        let mut row = demo_row();
        row[1] = Value::Cat("a, b".into());
        assert!(matches!(
            encode_row(&row, &demo_schema()),
            Err(CodecError::ReservedDelimiter { .. })
        ));
    }

    #[test]
    fn permute_x_keeps_target_last() {
        let schema = demo_schema();
        let s = encode_row(&demo_row(), &schema).unwrap();
        let mut rng = rng::stream(11);
        for _ in 0..200 {
            let p = permute(&s, PermutationKind::PermuteX, &mut rng).unwrap();
            assert!(p.cells().last().unwrap().is_target);
            let mut names: Vec<&str> = p.cells().iter().map(|c| c.name.as_str()).collect();
            names.sort();
            assert_eq!(names, vec!["Age", "Edu", "Income", "Job"]);
        }
    }

    #[test]
    fn permute_x_observes_all_feature_orders() {
        let schema = demo_schema();
        let s = encode_row(&demo_row(), &schema).unwrap();
        let mut rng = rng::stream(13);
        let mut orders = HashSet::new();
        for _ in 0..10_000 {
            let p = permute(&s, PermutationKind::PermuteX, &mut rng).unwrap();
            assert!(p.cells().last().unwrap().is_target);
            let order: Vec<String> = p.cells()[..3].iter().map(|c| c.name.clone()).collect();
            orders.insert(order);
        }
        assert_eq!(orders.len(), 6, "all 3! feature orders should appear");
    }

    #[test]
    fn permute_xy_target_position_is_uniform() {
        // chi-square over the M+1 = 4 target slots; crit(3 dof, p=0.001) = 16.266.
        let schema = demo_schema();
        let s = encode_row(&demo_row(), &schema).unwrap();
        let mut rng = rng::stream(17);
        let mut counts = [0usize; 4];
        let draws = 10_000;
        for _ in 0..draws {
            let p = permute(&s, PermutationKind::PermuteXy, &mut rng).unwrap();
            let pos = p.cells().iter().position(|c| c.is_target).unwrap();
            counts[pos] += 1;
        }
        let expected = draws as f64 / 4.0;
        let stat: f64 = counts
            .iter()
            .map(|&o| {
                let d = o as f64 - expected;
                d * d / expected
            })
            .sum();
        assert!(stat < 16.266, "chi-square stat {stat} too large: {counts:?}");
    }

    #[test]
    fn permute_single_feature_is_identity() {
        let schema = Schema::new(
            vec!["X".into()],
            vec![ColumnKind::Continuous],
            "Y".into(),
            Task::Regression,
        )
        .unwrap();
        let s = encode_row(&[Value::Num(3.0), Value::Num(1.0)], &schema).unwrap();
        let mut rng = rng::stream(19);
        let p = permute(&s, PermutationKind::PermuteX, &mut rng).unwrap();
        assert_eq!(p, s);
    }

    #[test]
    fn permute_rejects_partial_sentence() {
        let cells = vec![Cell {
            name: "Age".into(),
            value_text: "25".into(),
            is_target: false,
        }];
        let s = Sentence::new(cells).unwrap();
        let mut rng = rng::stream(23);
        assert!(matches!(
            permute(&s, PermutationKind::PermuteX, &mut rng),
            Err(CodecError::PartialSentence)
        ));
    }

    #[test]
    fn decode_round_trips_encode() {
        let schema = demo_schema();
        let row = demo_row();
        let s = encode_row(&row, &schema).unwrap();
        let decoded = decode_text(&s.render(), &schema).unwrap();
        assert_eq!(
            decoded.features,
            row[..3].iter().cloned().map(Some).collect::<Vec<_>>()
        );
        assert_eq!(decoded.target, Some(row[3].clone()));
    }

    #[test]
    fn decode_duplicate_column_errors() {
        let schema = demo_schema();
        let err = decode_text("Age is 25, Age is 30, Income is Low", &schema).unwrap_err();
        match err {
            CodecError::DuplicateColumn { name, .. } => assert_eq!(name, "Age"),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn decode_partial_reports_missing() {
        let schema = Schema::new(
            vec!["Age".into(), "Edu".into(), "Job".into(), "Hours".into()],
            vec![
                ColumnKind::Continuous,
                ColumnKind::Categorical,
                ColumnKind::Categorical,
                ColumnKind::Continuous,
            ],
            "Income".into(),
            Task::Classification,
        )
        .unwrap();
        let decoded = decode_text("Age is 25, Edu is Bachelor", &schema).unwrap();
        assert!(!decoded.features_complete());
        assert_eq!(decoded.missing(&schema), vec!["Job", "Hours"]);
        assert_eq!(decoded.target, None);
    }

    #[test]
    fn decode_rejects_malformed_fragments() {
        let schema = demo_schema();
        assert!(matches!(
            decode_text("Age 25", &schema),
            Err(CodecError::MissingIs { .. })
        ));
        assert!(matches!(
            decode_text("Nope is 1", &schema),
            Err(CodecError::UnknownColumn { .. })
        ));
        assert!(matches!(
            decode_text("Age is abc", &schema),
            Err(CodecError::BadNumber { .. })
        ));
    }

    #[test]
    fn condition_single_pair() {
        let schema = demo_schema();
        let c = make_condition(&[("Age", &Value::Num(40.0))], &schema).unwrap();
        assert_eq!(c, "Age is 40, ");
        let c = make_condition(&[("Income", &Value::Cat("Low".into()))], &schema).unwrap();
        assert_eq!(c, "Income is Low, ");
    }

    #[test]
    fn condition_full_prompt_in_schema_order() {
        let schema = demo_schema();
        let row = demo_row();
        let pairs: Vec<(&str, &Value)> = schema
            .feature_names()
            .iter()
            .map(String::as_str)
            .zip(row.iter())
            .collect();
        let c = make_condition(&pairs, &schema).unwrap();
        assert_eq!(c, "Age is 25, Edu is Bachelor, Job is Admin, ");
    }

    #[test]
    fn condition_rejects_duplicates_and_unknowns() {
        let schema = demo_schema();
        let v = Value::Num(1.0);
        assert!(make_condition(&[("Age", &v), ("Age", &v)], &schema).is_err());
        assert!(make_condition(&[("Nope", &v)], &schema).is_err());
    }

    #[test]
    fn registry_knows_all_strategies() {
        assert_eq!(
            permutation_names(),
            vec!["permute_x", "permute_xy", "identity"]
        );
        assert!(permutation("permute_x").is_ok());
        assert!(permutation("bogus").is_err());
        assert_eq!("permute_xy".parse::<PermutationKind>().unwrap(), PermutationKind::PermuteXy);
    }
}
