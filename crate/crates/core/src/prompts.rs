//! Prompt templates, placeholder binding and response extraction.
//!
//! The five templates ship as text files under `prompts/` and are compiled
//! in; [`PromptSet::from_dir`] swaps in edited copies at run time.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use log::{info, warn};
use thiserror::Error;

use crate::timeseries::FeatureMeta;

/// Stand-in text used wherever a context paragraph is absent.
pub const NO_CONTEXT: &str = "(none provided)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PromptId {
    Init,
    GeneratorSystem,
    ReflectionSystem,
    Crossover,
    ElitistMutation,
}

impl PromptId {
    pub const ALL: [PromptId; 5] = [
        PromptId::Init,
        PromptId::GeneratorSystem,
        PromptId::ReflectionSystem,
        PromptId::Crossover,
        PromptId::ElitistMutation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PromptId::Init => "init",
            PromptId::GeneratorSystem => "generator_system",
            PromptId::ReflectionSystem => "reflection_system",
            PromptId::Crossover => "crossover",
            PromptId::ElitistMutation => "elitist_mutation",
        }
    }

    /// Placeholders a template with this id may use.
    pub fn schema(self) -> &'static [&'static str] {
        match self {
            PromptId::Init => &[
                "task_description",
                "input_feature_list",
                "seed_function",
                "context_template",
                "func_name",
            ],
            PromptId::GeneratorSystem => &["task_description"],
            PromptId::ReflectionSystem => &[
                "task_description",
                "input_feature_list",
                "worse_rules",
                "worse_rules_physical_context",
                "better_rules",
                "better_rules_physical_context",
            ],
            PromptId::Crossover => &[
                "task_description",
                "input_feature_list",
                "worse_rules",
                "worse_rules_physical_context",
                "better_rules",
                "better_rules_physical_context",
                "reflection_comments",
                "reflection_context",
                "function_name",
            ],
            PromptId::ElitistMutation => &[
                "task_description",
                "input_feature_list",
                "reflection_comments",
                "reflection_context",
                "function_signature",
                "elitist_code",
                "function_name",
            ],
        }
    }

    fn builtin(self) -> &'static str {
        match self {
            PromptId::Init => include_str!("../prompts/init.txt"),
            PromptId::GeneratorSystem => include_str!("../prompts/generator_system.txt"),
            PromptId::ReflectionSystem => include_str!("../prompts/reflection_system.txt"),
            PromptId::Crossover => include_str!("../prompts/crossover.txt"),
            PromptId::ElitistMutation => include_str!("../prompts/elitist_mutation.txt"),
        }
    }
}

impl fmt::Display for PromptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PromptId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PromptId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| format!("unknown prompt id `{s}`"))
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PromptError {
    #[error("no binding for placeholder `{0}`")]
    MissingBinding(String),
    #[error("template `{id}` uses placeholder `{placeholder}` outside its schema")]
    UnknownPlaceholder { id: PromptId, placeholder: String },
    #[error("no fenced code block in response")]
    NoCodeBlock,
    #[error("reading template {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    id: PromptId,
    body: String,
}

/// A `{ident}` occurrence inside a template body.
struct Slot<'a> {
    start: usize,
    end: usize,
    name: &'a str,
}

fn slots(body: &str) -> Vec<Slot<'_>> {
    let bytes = body.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            let rest = &body[i + 1..];
            let len = rest
                .bytes()
                .take_while(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || *b == b'_')
                .count();
            if len > 0 && rest.as_bytes().get(len) == Some(&b'}') {
                out.push(Slot {
                    start: i,
                    end: i + len + 2,
                    name: &rest[..len],
                });
                i += len + 2;
                continue;
            }
        }
        i += 1;
    }
    out
}

impl PromptTemplate {
    pub fn new(id: PromptId, body: impl Into<String>) -> Result<Self, PromptError> {
        let body = body.into();
        let schema = id.schema();
        if let Some(slot) = slots(&body).into_iter().find(|s| !schema.contains(&s.name)) {
            return Err(PromptError::UnknownPlaceholder {
                id,
                placeholder: slot.name.to_string(),
            });
        }
        Ok(Self { id, body })
    }

    pub fn id(&self) -> PromptId {
        self.id
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    pub fn placeholders(&self) -> BTreeSet<&str> {
        slots(&self.body).into_iter().map(|s| s.name).collect()
    }

    /// Substitutes every placeholder once. Substituted text is not rescanned.
    pub fn render(&self, bindings: &BTreeMap<&str, String>) -> Result<String, PromptError> {
        let found = slots(&self.body);
        for key in bindings.keys() {
            if !found.iter().any(|s| s.name == *key) {
                warn!("binding `{key}` is not used by template `{}`", self.id);
            }
        }
        let mut out = String::with_capacity(self.body.len() * 2);
        let mut last = 0;
        for slot in found {
            let value = bindings
                .get(slot.name)
                .ok_or_else(|| PromptError::MissingBinding(slot.name.to_string()))?;
            out.push_str(&self.body[last..slot.start]);
            out.push_str(value);
            last = slot.end;
        }
        out.push_str(&self.body[last..]);
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptSet {
    templates: BTreeMap<PromptId, PromptTemplate>,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self::builtin()
    }
}

impl PromptSet {
    pub fn builtin() -> Self {
        let templates = PromptId::ALL
            .into_iter()
            .map(|id| (id, PromptTemplate::new(id, id.builtin()).expect("shipped template is valid")))
            .collect();
        Self { templates }
    }

    /// Loads `<id>.txt` files from `dir`; ids without a file keep the
    /// compiled-in template.
    pub fn from_dir(dir: impl AsRef<Path>) -> Result<Self, PromptError> {
        let mut set = Self::builtin();
        for id in PromptId::ALL {
            let path = dir.as_ref().join(format!("{}.txt", id.name()));
            if !path.exists() {
                continue;
            }
            let body = std::fs::read_to_string(&path).map_err(|e| PromptError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            info!("using prompt override {}", path.display());
            set.templates.insert(id, PromptTemplate::new(id, body)?);
        }
        Ok(set)
    }

    pub fn get(&self, id: PromptId) -> &PromptTemplate {
        &self.templates[&id]
    }

    pub fn render(&self, id: PromptId, bindings: &BTreeMap<&str, String>) -> Result<String, PromptError> {
        self.get(id).render(bindings)
    }
}

/// `- <name> (<unit>): <description>` per feature, descriptions on one line.
pub fn feature_list_text(metas: &[FeatureMeta]) -> String {
    metas
        .iter()
        .map(|m| {
            let desc = m.description.split_whitespace().collect::<Vec<_>>().join(" ");
            format!("- {} ({}): {}", m.name, m.unit, desc)
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Task statement bound to `{task_description}`: the objective plus a
/// compact reference for the rule language.
pub fn task_description(threshold: f64) -> String {
    format!(
        "Write a rule that scores every time step of a multivariate building sensor series. \
Rows whose score is strictly greater than {threshold} are flagged as anomalous. \
Rules are ranked by event-level F1 with point adjustment on labeled training data, so \
catching part of each fault episode matters more than covering it entirely, and false \
alarms on normal rows are costly.

Rules are written in a small rule DSL, not Python:
- A program is zero or more bindings `name = expr` (one per line) followed by `return expr`.
- `$feature` reads a feature column; plain identifiers refer to earlier bindings.
- Operators: + - * / (arithmetic), > < >= <= == != (comparison, yields a boolean series), and, or, not.
- Builtins: abs(x), clip(x, lo, hi), mean(x, w), std(x, w), rmin(x, w), rmax(x, w), lag(x, k), delta(x, k), ewma(x, a), zscore(x, w).
- Windows w and lags k are integer literals between 1 and 1024; a is a literal in (0, 1]. Windows are trailing.
- The result may be boolean (true = 1) or numeric. There are no loops, functions or imports."
    )
}

/// The peak-over-threshold baseline rule offered to the initial prompt.
pub fn seed_rule(metas: &[FeatureMeta]) -> String {
    use crate::timeseries::FeatureRole;
    let first = metas
        .iter()
        .find(|m| m.role == FeatureRole::Sensor)
        .or_else(|| metas.first())
        .map_or("value", |m| m.name.as_str());
    format!("return zscore(${first}, 60) > 3")
}

pub const SEED_CONTEXT: &str = "A sensor reading that departs by more than three rolling \
standard deviations from its recent hour of history indicates equipment or sensing behaviour \
outside normal operation.";

/// Fenced block rendering used for rule code in prompts and responses.
pub fn code_block(code: &str) -> String {
    format!("```rule\n{}\n```", code.trim())
}

pub fn context_block(context: &str) -> String {
    format!("```context\n{}\n```", context.trim())
}

/// Inverse of [`parse_response`] for well-formed pairs.
pub fn format_response(code: &str, context: &str) -> String {
    format!("{}\n{}", code_block(code), context_block(context))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedResponse {
    pub code: String,
    pub context: String,
}

struct Fence {
    info: String,
    body: String,
    /// Line index just past the closing fence.
    after: usize,
}

fn fences(lines: &[&str]) -> Vec<Fence> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        let open = lines[i].trim_start();
        if let Some(info) = open.strip_prefix("```") {
            let close = (i + 1..lines.len()).find(|&j| lines[j].trim() == "```");
            let end = close.unwrap_or(lines.len());
            out.push(Fence {
                info: info.trim().to_ascii_lowercase(),
                body: lines[i + 1..end].join("\n"),
                after: (end + 1).min(lines.len()),
            });
            i = end + 1;
        } else {
            i += 1;
        }
    }
    out
}

/// Extracts the rule and its physical-context paragraph from a completion.
///
/// The code is the first fenced block not labelled `context`. The context
/// is the first `context` block, else the first non-empty paragraph after
/// the code block.
pub fn parse_response(text: &str) -> Result<ParsedResponse, PromptError> {
    let lines: Vec<&str> = text.lines().collect();
    let blocks = fences(&lines);
    let code_block = blocks
        .iter()
        .find(|f| f.info != "context")
        .ok_or(PromptError::NoCodeBlock)?;
    let code = code_block.body.trim().to_string();
    if code.is_empty() {
        return Err(PromptError::NoCodeBlock);
    }
    let context = match blocks.iter().find(|f| f.info == "context") {
        Some(f) => f.body.trim().to_string(),
        None => first_paragraph(&lines[code_block.after..]),
    };
    let context = if context.is_empty() {
        warn!("response has no context paragraph");
        NO_CONTEXT.to_string()
    } else {
        context
    };
    Ok(ParsedResponse { code, context })
}

fn first_paragraph(lines: &[&str]) -> String {
    lines
        .iter()
        .skip_while(|l| l.trim().is_empty())
        .take_while(|l| !l.trim().is_empty())
        .map(|l| l.trim())
        .collect::<Vec<_>>()
        .join("\n")
}

/// Blank-line separated paragraphs, trimmed, empties dropped.
pub fn paragraphs(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur: Vec<&str> = Vec::new();
    for line in text.lines().chain(std::iter::once("")) {
        if line.trim().is_empty() {
            if !cur.is_empty() {
                out.push(cur.join("\n").trim().to_string());
                cur.clear();
            }
        } else {
            cur.push(line);
        }
    }
    out
}
