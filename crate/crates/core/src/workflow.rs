//! Pure workflow composition.
//!
//! A [`Workflow`] is a tree of pure steps, directive emitters, sequences,
//! branches and bounded iterations. No node can reach the world: user
//! functions see only values, and an emit leaf hands a directive to the
//! kernel and receives the outcome back as a value. Evaluation is
//! left-to-right, depth-first, and each emit leaf produces exactly one
//! submission.

use std::fmt;
use std::sync::Arc;

use serde_json::Value;

use crate::directive::{EffectKind, Params, Phase, Scalar, TrustLevel};
use crate::kernel::{ExecutionOutcome, Kernel};
use crate::provenance::Chain;

type StepFn = Arc<dyn Fn(&Value) -> Value + Send + Sync>;
type ParamsFn = Arc<dyn Fn(&Value) -> Params + Send + Sync>;
type PredicateFn = Arc<dyn Fn(&Value) -> bool + Send + Sync>;
type ListFn = Arc<dyn Fn(&Value) -> Vec<Value> + Send + Sync>;

#[derive(Clone)]
enum Node {
    Step {
        name: String,
        f: StepFn,
    },
    Emit {
        name: String,
        kind: EffectKind,
        trust: TrustLevel,
        phase: Phase,
        params: ParamsFn,
    },
    Seq(Box<Workflow>, Box<Workflow>),
    Branch {
        predicate: PredicateFn,
        then: Box<Workflow>,
        otherwise: Box<Workflow>,
    },
    Iterate {
        over: ListFn,
        body: Box<Workflow>,
    },
}

/// Immutable, shareable workflow tree. Step functions must be deterministic.
#[derive(Clone)]
pub struct Workflow {
    node: Node,
}

impl Workflow {
    pub fn step<F>(name: impl Into<String>, f: F) -> Self
    where
        F: Fn(&Value) -> Value + Send + Sync + 'static,
    {
        Workflow {
            node: Node::Step {
                name: name.into(),
                f: Arc::new(f),
            },
        }
    }

    /// Passes its input through unchanged.
    pub fn identity() -> Self {
        Self::step("identity", Value::clone)
    }

    /// Emits one directive of `kind` whose params are computed from the input.
    /// Evaluates to the handler's result, or `null` if nothing executed.
    pub fn emit<F>(
        name: impl Into<String>,
        kind: EffectKind,
        trust: TrustLevel,
        phase: Phase,
        params: F,
    ) -> Self
    where
        F: Fn(&Value) -> Params + Send + Sync + 'static,
    {
        Workflow {
            node: Node::Emit {
                name: name.into(),
                kind,
                trust,
                phase,
                params: Arc::new(params),
            },
        }
    }

    /// Left-fold of `seq_compose`; an empty list is the identity.
    pub fn seq_all(parts: impl IntoIterator<Item = Workflow>) -> Self {
        let mut parts: Vec<Workflow> = parts.into_iter().collect();
        let Some(last) = parts.pop() else {
            return Self::identity();
        };
        parts
            .into_iter()
            .rev()
            .fold(last, |acc, w| seq_compose(w, acc))
    }

    pub fn emit_count_bound(&self) -> Option<usize> {
        match &self.node {
            Node::Step { .. } => Some(0),
            Node::Emit { .. } => Some(1),
            Node::Seq(a, b) => Some(a.emit_count_bound()? + b.emit_count_bound()?),
            Node::Branch {
                then, otherwise, ..
            } => Some(then.emit_count_bound()?.max(otherwise.emit_count_bound()?)),
            Node::Iterate { .. } => None,
        }
    }
}

/// `left` then `right`, with `left`'s output as `right`'s input.
pub fn seq_compose(left: Workflow, right: Workflow) -> Workflow {
    Workflow {
        node: Node::Seq(Box::new(left), Box::new(right)),
    }
}

pub fn branch_compose<P>(predicate: P, then: Workflow, otherwise: Workflow) -> Workflow
where
    P: Fn(&Value) -> bool + Send + Sync + 'static,
{
    Workflow {
        node: Node::Branch {
            predicate: Arc::new(predicate),
            then: Box::new(then),
            otherwise: Box::new(otherwise),
        },
    }
}

/// Runs `body` once per element of the finite list `over(input)`, in order,
/// each time with the element as input. Evaluates to its own input.
pub fn iterate_compose<L>(over: L, body: Workflow) -> Workflow
where
    L: Fn(&Value) -> Vec<Value> + Send + Sync + 'static,
{
    Workflow {
        node: Node::Iterate {
            over: Arc::new(over),
            body: Box::new(body),
        },
    }
}

impl fmt::Debug for Workflow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.node {
            Node::Step { name, .. } => write!(f, "Step({name})"),
            Node::Emit {
                name,
                kind,
                trust,
                phase,
                ..
            } => write!(f, "Emit({name}: {kind} {trust:?} {phase:?})"),
            Node::Seq(a, b) => f.debug_tuple("Seq").field(a).field(b).finish(),
            Node::Branch {
                then, otherwise, ..
            } => f
                .debug_tuple("Branch")
                .field(then)
                .field(otherwise)
                .finish(),
            Node::Iterate { body, .. } => f.debug_tuple("Iterate").field(body).finish(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub output: Value,
    /// The kernel's chain after the run. For a fresh kernel its length
    /// equals `directives_issued`.
    pub chain: Chain,
    pub directives_issued: usize,
    pub outcomes: Vec<ExecutionOutcome>,
}

pub fn scalar_to_value(s: &Scalar) -> Value {
    match s {
        Scalar::Bool(b) => Value::Bool(*b),
        Scalar::Int(i) => Value::from(*i),
        Scalar::Str(s) => Value::String(s.clone()),
    }
}

struct Run<'k> {
    kernel: &'k Kernel,
    outcomes: Vec<ExecutionOutcome>,
}

impl Run<'_> {
    fn eval(&mut self, w: &Workflow, input: Value) -> Value {
        match &w.node {
            Node::Step { f, .. } => f(&input),
            Node::Emit {
                name,
                kind,
                trust,
                phase,
                params,
            } => {
                let outcome = self
                    .kernel
                    .issue(kind.clone(), params(&input), name, *trust, *phase);
                let value = outcome.result().map_or(Value::Null, scalar_to_value);
                self.outcomes.push(outcome);
                value
            }
            Node::Seq(a, b) => {
                let mid = self.eval(a, input);
                self.eval(b, mid)
            }
            Node::Branch {
                predicate,
                then,
                otherwise,
            } => {
                if predicate(&input) {
                    self.eval(then, input)
                } else {
                    self.eval(otherwise, input)
                }
            }
            Node::Iterate { over, body } => {
                for item in over(&input) {
                    self.eval(body, item);
                }
                input
            }
        }
    }
}

/// Evaluates `w` on `input`, submitting every emitted directive to `kernel`.
pub fn run(w: &Workflow, input: Value, kernel: &Kernel) -> RunResult {
    let mut r = Run {
        kernel,
        outcomes: Vec::new(),
    };
    let output = r.eval(w, input);
    RunResult {
        output,
        chain: kernel.chain_snapshot(),
        directives_issued: r.outcomes.len(),
        outcomes: r.outcomes,
    }
}
