//! Parsers for the tagged blocks of the planning protocol. All parsers are
//! pure and look only at the first occurrence of their tag.

use serde::{Deserialize, Deserializer, Serialize};
use serde_json::Value;

use crate::error::LlmError;

/// Inner text of the first `<tag>...</tag>` pair, trimmed.
pub fn extract_tag(text: &str, tag: &str) -> Result<String, LlmError> {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let start = text.find(&open).ok_or_else(|| LlmError::TagMissing(tag.into()))? + open.len();
    let len = text[start..].find(&close).ok_or_else(|| LlmError::TagMissing(tag.into()))?;
    Ok(text[start..start + len].trim().to_string())
}

/// `<tag>\ncontent\n</tag>`, the shape the protocol asks models to emit.
pub fn wrap_tag(tag: &str, content: &str) -> String {
    format!("<{tag}>\n{content}\n</{tag}>")
}

/// True only for a stop_signal block reading TRUE (any case).
pub fn parse_stop(text: &str) -> bool {
    extract_tag(text, "stop_signal").is_ok_and(|s| s.eq_ignore_ascii_case("true"))
}

/// A bracketed (or parenthesized) integer list, or a bare integer.
pub fn parse_int_list(text: &str, tag: &str) -> Result<Vec<usize>, LlmError> {
    let body = extract_tag(text, tag)?;
    let format = |msg: String| LlmError::Format { tag: tag.into(), msg };
    let inner = match (body.chars().next(), body.chars().last()) {
        (Some('['), Some(']')) | (Some('('), Some(')')) => &body[1..body.len() - 1],
        _ => {
            return body.parse::<usize>().map(|n| vec![n]).map_err(|_| format(format!("not an integer list: {body:?}")));
        }
    };
    if inner.trim().is_empty() {
        return Ok(Vec::new());
    }
    inner
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|_| format(format!("not an integer: {:?}", p.trim()))))
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanStep {
    pub step_number: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_reaction: Option<String>,
    #[serde(default, deserialize_with = "text")]
    pub step_description: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SynthesisPlan {
    #[serde(default, deserialize_with = "text")]
    pub target_smiles: String,
    #[serde(default, deserialize_with = "text_list")]
    pub expandable_molecules: Vec<String>,
    #[serde(default, deserialize_with = "text")]
    pub user_constraint: String,
    #[serde(default)]
    pub previous_steps: Vec<PlanStep>,
    #[serde(default, deserialize_with = "text")]
    pub strategy_overview: String,
    #[serde(default, deserialize_with = "text")]
    pub step_estimate: String,
    pub next_steps: Vec<PlanStep>,
    #[serde(default, deserialize_with = "text")]
    pub additional_notes: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemStep {
    pub step_id: u32,
    #[serde(deserialize_with = "text")]
    pub feedback: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feedback {
    #[serde(deserialize_with = "text")]
    pub overall_feedback: String,
    #[serde(default)]
    pub problematic_steps: Vec<ProblemStep>,
}

impl Feedback {
    pub fn is_empty(&self) -> bool {
        self.overall_feedback.is_empty() && self.problematic_steps.is_empty()
    }
}

/// Accept any JSON scalar where prose is expected; models sometimes emit
/// numbers for "step_estimate".
fn text<'de, D: Deserializer<'de>>(d: D) -> Result<String, D::Error> {
    Ok(match Value::deserialize(d)? {
        Value::String(s) => s,
        Value::Null => String::new(),
        other => other.to_string(),
    })
}

/// The plan format shows "List of SMILES ..." as a string; accept a list,
/// a single string, or a comma/dot separated string.
fn text_list<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<String>, D::Error> {
    Ok(match Value::deserialize(d)? {
        Value::Array(items) => items
            .into_iter()
            .map(|v| match v {
                Value::String(s) => s,
                other => other.to_string(),
            })
            .collect(),
        Value::String(s) => s.split(',').map(|p| p.trim().to_string()).filter(|p| !p.is_empty()).collect(),
        Value::Null => Vec::new(),
        other => vec![other.to_string()],
    })
}

/// Drop `//` and `#` comments, bare `...` elisions and trailing commas
/// outside string literals.
fn relax_json(src: &str) -> String {
    let chars: Vec<char> = src.chars().collect();
    let mut out = String::with_capacity(src.len());
    let mut i = 0;
    let mut in_str = false;
    while i < chars.len() {
        let c = chars[i];
        if in_str {
            out.push(c);
            if c == '\\' && i + 1 < chars.len() {
                out.push(chars[i + 1]);
                i += 1;
            } else if c == '"' {
                in_str = false;
            }
            i += 1;
            continue;
        }
        match c {
            '"' => {
                in_str = true;
                out.push(c);
            }
            '/' if chars.get(i + 1) == Some(&'/') => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
                continue;
            }
            '#' => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
                continue;
            }
            '.' if chars.get(i + 1) == Some(&'.') && chars.get(i + 2) == Some(&'.') => {
                i += 3;
                continue;
            }
            _ => out.push(c),
        }
        i += 1;
    }
    strip_trailing_commas(&out)
}

fn strip_trailing_commas(src: &str) -> String {
    let chars: Vec<char> = src.chars().collect();
    let mut out = String::with_capacity(src.len());
    let mut in_str = false;
    for (i, &c) in chars.iter().enumerate() {
        if in_str {
            if c == '"' && !escaped(&chars, i) {
                in_str = false;
            }
        } else if c == '"' {
            in_str = true;
        } else if c == ',' {
            let next = chars[i + 1..].iter().find(|c| !c.is_whitespace());
            if matches!(next, Some('}') | Some(']') | None) {
                continue;
            }
        }
        out.push(c);
    }
    out
}

fn escaped(chars: &[char], i: usize) -> bool {
    let mut n = 0;
    let mut j = i;
    while j > 0 && chars[j - 1] == '\\' {
        n += 1;
        j -= 1;
    }
    n % 2 == 1
}

fn parse_json_block<T: for<'de> Deserialize<'de>>(text: &str, tag: &str) -> Result<T, LlmError> {
    let body = extract_tag(text, tag)?;
    serde_json::from_str(&relax_json(&body)).map_err(|e| LlmError::PlanParse { tag: tag.into(), msg: e.to_string() })
}

pub fn parse_plan(text: &str) -> Result<SynthesisPlan, LlmError> {
    let plan: SynthesisPlan = parse_json_block(text, "synthesis_plan")?;
    let numbers: Vec<u32> = plan.previous_steps.iter().chain(&plan.next_steps).map(|s| s.step_number).collect();
    if numbers.windows(2).any(|w| w[0] >= w[1]) {
        return Err(LlmError::PlanParse {
            tag: "synthesis_plan".into(),
            msg: format!("step numbers not increasing: {numbers:?}"),
        });
    }
    Ok(plan)
}

pub fn parse_feedback(text: &str) -> Result<Feedback, LlmError> {
    parse_json_block(text, "feedback")
}
