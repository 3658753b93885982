//! Canonical text form of a [`ControllerStructure`].
//!
//! ```json
//! {
//!   "name": "PI",
//!   "output": 4,
//!   "nodes": [
//!     {"id": 0, "kind": "Signal", "children": [], "signal": "error"},
//!     {"id": 1, "kind": "Gain", "children": [0], "param_index": 0}
//!   ]
//! }
//! ```
//!
//! `const_value` carries the literal of `Const`, the accumulator limit of
//! `Integrator` and the initial gain of `AdaptiveGain`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::structure::{
    describe_violations, ControllerStructure, PrimitiveKind, PrimitiveNode, StructureLimits,
    Violation, DEFAULT_INTEGRATOR_LIMIT,
};

#[derive(Debug, Error, PartialEq)]
pub enum DocumentError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid structure:\n{}", describe_violations(.0))]
    Invalid(Vec<Violation>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDoc {
    pub id: usize,
    pub kind: String,
    #[serde(default)]
    pub children: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub const_value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signal: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureDoc {
    pub name: String,
    pub output: usize,
    pub nodes: Vec<NodeDoc>,
}

impl From<&ControllerStructure> for StructureDoc {
    fn from(s: &ControllerStructure) -> Self {
        let nodes = s
            .nodes
            .iter()
            .enumerate()
            .map(|(id, n)| {
                let mut doc = NodeDoc {
                    id,
                    kind: n.kind.name().to_string(),
                    children: n.children.clone(),
                    param_index: n.kind.param_index(),
                    const_value: None,
                    signal: None,
                };
                match &n.kind {
                    PrimitiveKind::Const(v) => doc.const_value = Some(*v),
                    PrimitiveKind::Integrator { limit } => doc.const_value = Some(*limit),
                    PrimitiveKind::AdaptiveGain { initial } => doc.const_value = Some(*initial),
                    PrimitiveKind::Signal(name) => doc.signal = Some(name.clone()),
                    _ => {}
                }
                doc
            })
            .collect();
        StructureDoc {
            name: s.name.clone(),
            output: s.output,
            nodes,
        }
    }
}

impl StructureDoc {
    /// Builds the in-memory structure without validating it. Document ids are
    /// remapped to list positions.
    pub fn into_structure(self) -> Result<ControllerStructure, Vec<Violation>> {
        let mut violations = Vec::new();
        let mut index_of: HashMap<usize, usize> = HashMap::new();
        for (pos, n) in self.nodes.iter().enumerate() {
            if index_of.insert(n.id, pos).is_some() {
                violations.push(Violation::DuplicateId { id: n.id });
            }
        }
        let missing = usize::MAX;
        let mut nodes = Vec::with_capacity(self.nodes.len());
        for (pos, n) in self.nodes.into_iter().enumerate() {
            if matches!(n.kind.as_str(), "Param" | "Gain") && n.param_index.is_none() {
                violations.push(Violation::MissingField {
                    node: n.id,
                    field: "param_index",
                });
            }
            let need_param = || n.param_index.unwrap_or(0);
            let kind = match n.kind.as_str() {
                "Const" => match n.const_value {
                    Some(v) => PrimitiveKind::Const(v),
                    None => {
                        violations.push(Violation::MissingField {
                            node: n.id,
                            field: "const_value",
                        });
                        PrimitiveKind::Const(0.0)
                    }
                },
                "Param" => PrimitiveKind::Param(need_param()),
                "Gain" => PrimitiveKind::Gain(need_param()),
                "Signal" => match &n.signal {
                    Some(s) => PrimitiveKind::Signal(s.clone()),
                    None => {
                        violations.push(Violation::MissingField {
                            node: n.id,
                            field: "signal",
                        });
                        PrimitiveKind::Signal(String::new())
                    }
                },
                "Add" => PrimitiveKind::Add,
                "Sub" => PrimitiveKind::Sub,
                "Mul" => PrimitiveKind::Mul,
                "SafeDiv" => PrimitiveKind::SafeDiv,
                "Neg" => PrimitiveKind::Neg,
                "Abs" => PrimitiveKind::Abs,
                "Sign" => PrimitiveKind::Sign,
                "Sat" => PrimitiveKind::Sat,
                "Integrator" => PrimitiveKind::Integrator {
                    limit: n.const_value.unwrap_or(DEFAULT_INTEGRATOR_LIMIT),
                },
                "FilteredDeriv" => PrimitiveKind::FilteredDeriv,
                "Min" => PrimitiveKind::Min,
                "Max" => PrimitiveKind::Max,
                "AdaptiveGain" => PrimitiveKind::AdaptiveGain {
                    initial: n.const_value.unwrap_or(0.0),
                },
                other => {
                    violations.push(Violation::UnknownPrimitive {
                        node: pos,
                        name: other.to_string(),
                    });
                    continue;
                }
            };
            let children = n
                .children
                .iter()
                .map(|c| match index_of.get(c) {
                    Some(&i) => i,
                    None => {
                        violations.push(Violation::ChildOutOfRange {
                            node: n.id,
                            child: *c,
                        });
                        missing
                    }
                })
                .collect();
            nodes.push(PrimitiveNode::new(kind, children));
        }
        let output = match index_of.get(&self.output) {
            Some(&i) => i,
            None => {
                violations.push(Violation::OutputOutOfRange {
                    output: self.output,
                    len: nodes.len(),
                });
                0
            }
        };
        if violations.is_empty() {
            Ok(ControllerStructure::new(self.name, nodes, output))
        } else {
            Err(violations)
        }
    }
}

/// Canonical, pretty-printed document text.
pub fn serialize(structure: &ControllerStructure) -> String {
    serde_json::to_string_pretty(&StructureDoc::from(structure))
        .expect("structure documents always serialize")
}

/// Parses and validates a structure document.
pub fn deserialize(text: &str) -> Result<ControllerStructure, DocumentError> {
    deserialize_with(text, StructureLimits::default())
}

pub fn deserialize_with(
    text: &str,
    limits: StructureLimits,
) -> Result<ControllerStructure, DocumentError> {
    let doc: StructureDoc = serde_json::from_str(text).map_err(|e| DocumentError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let structure = doc.into_structure().map_err(DocumentError::Invalid)?;
    structure.validate(limits).map_err(DocumentError::Invalid)?;
    Ok(structure)
}

/// Locates the first JSON object in free text that looks like a structure
/// document (has a `nodes` field) and returns its source slice.
pub fn find_structure_block(text: &str) -> Option<&str> {
    for (start, _) in text.match_indices('{') {
        let mut stream =
            serde_json::Deserializer::from_str(&text[start..]).into_iter::<serde_json::Value>();
        if let Some(Ok(value)) = stream.next() {
            if value.get("nodes").is_some() {
                let end = start + stream.byte_offset();
                return Some(&text[start..end]);
            }
        }
    }
    None
}
