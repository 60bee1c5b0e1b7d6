//! Text formats: the network file, command-line evidence strings and
//! record datasets.
//!
//! A network file is TOML with one `[[variable]]` table per node:
//!
//! ```toml
//! [[variable]]
//! name = "Rain"
//! states = ["no", "yes"]
//! parents = ["Season"]
//! cpt = [
//!   0.8, 0.2,
//!   0.4, 0.6,
//! ]
//! ```
//!
//! `cpt` lists one row per parent configuration. Configurations are
//! enumerated mixed-radix over `parents` in the order written, last parent
//! varying fastest; within a row, entries follow `states`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::graph::{Dag, GraphError, NodeId};
use crate::model::{CategoricalBN, Evidence, ROW_SUM_TOLERANCE};

/// Rows may deviate from one by this much in a file; they are renormalized.
pub const FILE_ROW_SUM_TOLERANCE: f64 = 1e-6;
pub const MISSING: &str = "?";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Syntax,
    MissingField,
    WrongType,
    UnknownField,
    EmptyNetwork,
    InvalidName,
    DuplicateName,
    TooFewStates,
    InvalidState,
    DuplicateState,
    UnresolvedParent,
    DuplicateParent,
    Cycle,
    CptLength,
    ProbabilityRange,
    RowSum,
    MalformedEvidence,
    UnknownVariable,
    UnknownState,
    DuplicateEvidence,
    Csv,
    RaggedRow,
    DuplicateColumn,
    EmptyDataset,
}

impl ErrorKind {
    pub fn code(&self) -> &'static str {
        match self {
            ErrorKind::Syntax => "syntax",
            ErrorKind::MissingField => "missing_field",
            ErrorKind::WrongType => "wrong_type",
            ErrorKind::UnknownField => "unknown_field",
            ErrorKind::EmptyNetwork => "empty_network",
            ErrorKind::InvalidName => "invalid_name",
            ErrorKind::DuplicateName => "duplicate_name",
            ErrorKind::TooFewStates => "too_few_states",
            ErrorKind::InvalidState => "invalid_state",
            ErrorKind::DuplicateState => "duplicate_state",
            ErrorKind::UnresolvedParent => "unresolved_parent",
            ErrorKind::DuplicateParent => "duplicate_parent",
            ErrorKind::Cycle => "cycle",
            ErrorKind::CptLength => "cpt_length",
            ErrorKind::ProbabilityRange => "probability_range",
            ErrorKind::RowSum => "row_sum",
            ErrorKind::MalformedEvidence => "malformed_evidence",
            ErrorKind::UnknownVariable => "unknown_variable",
            ErrorKind::UnknownState => "unknown_state",
            ErrorKind::DuplicateEvidence => "duplicate_evidence",
            ErrorKind::Csv => "csv",
            ErrorKind::RaggedRow => "ragged_row",
            ErrorKind::DuplicateColumn => "duplicate_column",
            ErrorKind::EmptyDataset => "empty_dataset",
        }
    }
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// A defect in some input text. `line` and `column` are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FormatError {
    #[serde(rename = "error")]
    pub kind: ErrorKind,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub column: Option<usize>,
}

impl FormatError {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        FormatError {
            kind,
            message: message.into(),
            line: None,
            column: None,
        }
    }

    fn at(mut self, text: &str, span: Option<Range<usize>>) -> Self {
        if let Some(span) = span {
            let (line, column) = line_column(text, span.start);
            self.line = Some(line);
            self.column = Some(column);
        }
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plain struct serializes")
    }
}

impl fmt::Display for FormatError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, self.column) {
            (Some(l), Some(c)) => write!(f, "{}:{}: {}: {}", l, c, self.kind, self.message),
            _ => write!(f, "{}: {}", self.kind, self.message),
        }
    }
}

impl std::error::Error for FormatError {}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(text.len());
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |s| s.chars().count()) + 1;
    (line, column)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    #[serde(default)]
    variable: Vec<Spanned<RawVariable>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVariable {
    name: Spanned<String>,
    states: Spanned<Vec<Spanned<String>>>,
    #[serde(default)]
    parents: Vec<Spanned<String>>,
    cpt: Spanned<Vec<f64>>,
}

fn classify_toml_error(err: &toml::de::Error) -> ErrorKind {
    let msg = err.message();
    if msg.starts_with("missing field") {
        ErrorKind::MissingField
    } else if msg.starts_with("unknown field") {
        ErrorKind::UnknownField
    } else if msg.starts_with("invalid type") || msg.starts_with("invalid value") {
        ErrorKind::WrongType
    } else {
        ErrorKind::Syntax
    }
}

fn check_label(text: &str, what: &str) -> Result<(), String> {
    if text.is_empty() {
        return Err(format!("{what} is empty"));
    }
    if text.trim() != text {
        return Err(format!("{what} '{text}' has surrounding whitespace"));
    }
    if text == MISSING {
        return Err(format!("{what} '{MISSING}' is reserved for missing values"));
    }
    if let Some(c) = text.chars().find(|c| matches!(c, ',' | '=' | '\n' | '\r' | '"')) {
        return Err(format!("{what} '{text}' contains reserved character {c:?}"));
    }
    Ok(())
}

/// Parsed structure plus CPTs in model order, before CPT validation.
struct Parsed {
    bn: CategoricalBN,
    cpt_spans: Vec<Range<usize>>,
}

fn parse_structure(text: &str) -> Result<Parsed, FormatError> {
    let raw: RawFile = toml::from_str(text).map_err(|e| {
        FormatError::new(classify_toml_error(&e), e.message().to_string()).at(text, e.span())
    })?;
    if raw.variable.is_empty() {
        return Err(FormatError::new(ErrorKind::EmptyNetwork, "no [[variable]] entries"));
    }
    let vars: Vec<&RawVariable> = raw.variable.iter().map(|v| v.get_ref()).collect();
    let mut index: HashMap<&str, NodeId> = HashMap::new();
    for (i, v) in vars.iter().enumerate() {
        let name = v.name.get_ref();
        check_label(name, "variable name")
            .map_err(|m| FormatError::new(ErrorKind::InvalidName, m).at(text, Some(v.name.span())))?;
        if index.insert(name, i).is_some() {
            return Err(FormatError::new(ErrorKind::DuplicateName, format!("variable '{name}' is defined twice"))
                .at(text, Some(v.name.span())));
        }
        let states = v.states.get_ref();
        if states.len() < 2 {
            return Err(FormatError::new(
                ErrorKind::TooFewStates,
                format!("variable '{name}' has {} states, need at least 2", states.len()),
            )
            .at(text, Some(v.states.span())));
        }
        let mut seen = HashSet::new();
        for s in states {
            check_label(s.get_ref(), "state name").map_err(|m| {
                FormatError::new(ErrorKind::InvalidState, format!("variable '{name}': {m}")).at(text, Some(s.span()))
            })?;
            if !seen.insert(s.get_ref().as_str()) {
                return Err(FormatError::new(
                    ErrorKind::DuplicateState,
                    format!("variable '{name}' lists state '{}' twice", s.get_ref()),
                )
                .at(text, Some(s.span())));
            }
        }
    }
    let mut edges = Vec::new();
    let mut declared: Vec<Vec<NodeId>> = Vec::with_capacity(vars.len());
    for (i, v) in vars.iter().enumerate() {
        let mut ps = Vec::new();
        for p in &v.parents {
            let Some(&pid) = index.get(p.get_ref().as_str()) else {
                return Err(FormatError::new(
                    ErrorKind::UnresolvedParent,
                    format!("variable '{}' names unknown parent '{}'", v.name.get_ref(), p.get_ref()),
                )
                .at(text, Some(p.span())));
            };
            if ps.contains(&pid) {
                return Err(FormatError::new(
                    ErrorKind::DuplicateParent,
                    format!("variable '{}' lists parent '{}' twice", v.name.get_ref(), p.get_ref()),
                )
                .at(text, Some(p.span())));
            }
            ps.push(pid);
            edges.push((pid, i));
        }
        declared.push(ps);
    }
    let dag = Dag::new(vars.len(), &edges).map_err(|e| match e {
        GraphError::SelfLoop(v) => {
            let name = vars[v].name.get_ref();
            FormatError::new(ErrorKind::Cycle, format!("cycle: {name} -> {name}"))
        }
        GraphError::Cycle(cycle) => {
            let mut names: Vec<&str> = cycle.iter().map(|&v| vars[v].name.get_ref().as_str()).collect();
            names.push(names[0]);
            FormatError::new(ErrorKind::Cycle, format!("cycle: {}", names.join(" -> ")))
        }
        other => FormatError::new(ErrorKind::Syntax, other.to_string()),
    })?;

    let cards: Vec<usize> = vars.iter().map(|v| v.states.get_ref().len()).collect();
    let mut tables = Vec::with_capacity(vars.len());
    for (i, v) in vars.iter().enumerate() {
        let decl = &declared[i];
        let rows: usize = decl.iter().map(|&p| cards[p]).product();
        let cpt = v.cpt.get_ref();
        if cpt.len() != rows * cards[i] {
            return Err(FormatError::new(
                ErrorKind::CptLength,
                format!(
                    "variable '{}' needs {} CPT entries ({} rows of {}), got {}",
                    v.name.get_ref(),
                    rows * cards[i],
                    rows,
                    cards[i],
                    cpt.len()
                ),
            )
            .at(text, Some(v.cpt.span())));
        }
        tables.push(permute_rows(cpt, cards[i], decl, dag.parents(i), &cards));
    }
    let names = vars.iter().map(|v| v.name.get_ref().clone()).collect();
    let states = vars
        .iter()
        .map(|v| v.states.get_ref().iter().map(|s| s.get_ref().clone()).collect())
        .collect();
    let bn = CategoricalBN::new_unchecked(dag, names, states, tables)
        .map_err(|e| FormatError::new(ErrorKind::Syntax, e.to_string()))?;
    let cpt_spans = vars.iter().map(|v| v.cpt.span()).collect();
    Ok(Parsed { bn, cpt_spans })
}

/// Reorders CPT rows from parent order `from` to parent order `to` (both
/// mixed radix, last parent fastest).
fn permute_rows(table: &[f64], card: usize, from: &[NodeId], to: &[NodeId], cards: &[usize]) -> Vec<f64> {
    if from == to {
        return table.to_vec();
    }
    let rows = table.len() / card;
    let mut out = vec![0.0; table.len()];
    let mut state: HashMap<NodeId, usize> = HashMap::new();
    for r in 0..rows {
        let mut rem = r;
        for &p in to.iter().rev() {
            state.insert(p, rem % cards[p]);
            rem /= cards[p];
        }
        let src = from.iter().fold(0, |acc, p| acc * cards[*p] + state[p]);
        out[r * card..(r + 1) * card].copy_from_slice(&table[src * card..(src + 1) * card]);
    }
    out
}

/// CPT defects of a structurally sound file, one per bad entry or row.
fn cpt_issues(text: &str, parsed: &Parsed) -> Vec<FormatError> {
    let bn = &parsed.bn;
    let mut out = Vec::new();
    for v in bn.dag().nodes() {
        let cpt = bn.cpt(v);
        let span = Some(parsed.cpt_spans[v].clone());
        for r in 0..cpt.rows() {
            let row = cpt.row(r);
            let bad: Vec<f64> = row.iter().copied().filter(|p| !(0.0..=1.0).contains(p)).collect();
            if !bad.is_empty() {
                out.push(
                    FormatError::new(
                        ErrorKind::ProbabilityRange,
                        format!("variable '{}' row {r}: entries outside [0, 1]: {bad:?}", bn.name(v)),
                    )
                    .at(text, span.clone()),
                );
                continue;
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > FILE_ROW_SUM_TOLERANCE {
                out.push(
                    FormatError::new(
                        ErrorKind::RowSum,
                        format!("variable '{}' row {r} sums to {sum}", bn.name(v)),
                    )
                    .at(text, span.clone()),
                );
            }
        }
    }
    out
}

/// Every problem in a network file. Structural problems stop the scan, so
/// at most one of those is reported; CPT problems are all listed.
pub fn validate_network_text(text: &str) -> Vec<FormatError> {
    match parse_structure(text) {
        Err(e) => vec![e],
        Ok(parsed) => cpt_issues(text, &parsed),
    }
}

pub fn parse_network(text: &str) -> Result<CategoricalBN, FormatError> {
    let parsed = parse_structure(text)?;
    if let Some(e) = cpt_issues(text, &parsed).into_iter().next() {
        return Err(e);
    }
    let bn = parsed.bn;
    let tables = bn
        .dag()
        .nodes()
        .map(|v| {
            let cpt = bn.cpt(v);
            let mut table = cpt.table().to_vec();
            for row in table.chunks_mut(cpt.cardinality()) {
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                    row.iter_mut().for_each(|p| *p /= sum);
                }
            }
            table
        })
        .collect();
    CategoricalBN::new(bn.dag().clone(), bn.names().to_vec(), (0..bn.len()).map(|v| bn.states(v).to_vec()).collect(), tables)
        .map_err(|e| FormatError::new(ErrorKind::RowSum, e.to_string()))
}

fn quote(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

/// Canonical text: variables and parent lists sorted by name, probabilities
/// with 12 decimals. Structurally equal networks give identical text.
pub fn serialize_network(bn: &CategoricalBN) -> String {
    let mut order: Vec<NodeId> = bn.dag().nodes().collect();
    order.sort_by(|&a, &b| bn.name(a).cmp(bn.name(b)));
    let mut out = String::new();
    for (k, &v) in order.iter().enumerate() {
        if k > 0 {
            out.push('\n');
        }
        let mut parents: Vec<NodeId> = bn.dag().parents(v).to_vec();
        parents.sort_by(|&a, &b| bn.name(a).cmp(bn.name(b)));
        let list = |items: Vec<String>| items.join(", ");
        out.push_str("[[variable]]\n");
        out.push_str(&format!("name = {}\n", quote(bn.name(v))));
        out.push_str(&format!(
            "states = [{}]\n",
            list(bn.states(v).iter().map(|s| quote(s)).collect())
        ));
        out.push_str(&format!(
            "parents = [{}]\n",
            list(parents.iter().map(|&p| quote(bn.name(p))).collect())
        ));
        let model_order = bn.dag().parents(v);
        let cards: Vec<usize> = bn.cardinalities();
        let table = permute_rows(bn.cpt(v).table(), bn.cardinality(v), model_order, &parents, &cards);
        out.push_str("cpt = [\n");
        for row in table.chunks(bn.cardinality(v)) {
            let cells: Vec<String> = row.iter().map(|p| format!("{p:.12}")).collect();
            out.push_str(&format!("  {},\n", cells.join(", ")));
        }
        out.push_str("]\n");
    }
    out
}

/// `name=state,name=state,...`; whitespace around items is ignored and an
/// empty string is empty evidence.
pub fn parse_evidence(bn: &CategoricalBN, text: &str) -> Result<Evidence, FormatError> {
    let mut e = Evidence::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let Some((name, state)) = item.split_once('=') else {
            return Err(FormatError::new(ErrorKind::MalformedEvidence, format!("'{item}' is not name=state")));
        };
        let (name, state) = (name.trim(), state.trim());
        let v = bn
            .node_by_name(name)
            .ok_or_else(|| FormatError::new(ErrorKind::UnknownVariable, format!("no variable named '{name}'")))?;
        let s = bn.state_by_name(v, state).ok_or_else(|| {
            FormatError::new(ErrorKind::UnknownState, format!("variable '{name}' has no state '{state}'"))
        })?;
        if e.insert(v, s).is_some() {
            return Err(FormatError::new(ErrorKind::DuplicateEvidence, format!("'{name}' observed twice")));
        }
    }
    Ok(e)
}

pub fn format_evidence(bn: &CategoricalBN, e: &Evidence) -> String {
    e.iter()
        .map(|(v, s)| format!("{}={}", bn.name(v), bn.states(v)[s]))
        .collect::<Vec<_>>()
        .join(",")
}

/// Records over named variables; `None` marks a missing cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Option<String>>>,
}

impl Dataset {
    pub fn parse(text: &str) -> Result<Self, FormatError> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let columns: Vec<String> = reader
            .headers()
            .map_err(csv_error)?
            .iter()
            .map(str::to_string)
            .collect();
        if columns.is_empty() || columns.iter().all(String::is_empty) {
            return Err(FormatError::new(ErrorKind::EmptyDataset, "missing header row"));
        }
        let mut seen = HashSet::new();
        for c in &columns {
            if !seen.insert(c.as_str()) {
                return Err(FormatError::new(ErrorKind::DuplicateColumn, format!("column '{c}' appears twice"))
                    .with_line(1));
            }
        }
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(csv_error)?;
            rows.push(
                rec.iter()
                    .map(|cell| (cell != MISSING).then(|| cell.to_string()))
                    .collect(),
            );
        }
        Ok(Dataset { columns, rows })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.iter().map(|c| c.as_deref().unwrap_or(MISSING)))
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
    }

    /// Observed cells of row `r` keyed by column name, skipping `exclude`.
    pub fn observed(&self, r: usize, exclude: Option<usize>) -> BTreeMap<String, String> {
        self.rows[r]
            .iter()
            .enumerate()
            .filter(|(c, _)| Some(*c) != exclude)
            .filter_map(|(c, cell)| cell.as_ref().map(|s| (self.columns[c].clone(), s.clone())))
            .collect()
    }
}

impl FormatError {
    fn with_line(mut self, line: usize) -> Self {
        self.line = Some(line);
        self
    }
}

fn csv_error(e: csv::Error) -> FormatError {
    let line = e.position().map(|p| p.line() as usize);
    let kind = match e.kind() {
        csv::ErrorKind::UnequalLengths { .. } => ErrorKind::RaggedRow,
        _ => ErrorKind::Csv,
    };
    let mut err = FormatError::new(kind, e.to_string());
    err.line = line;
    err
}
