//! Control-law structures: representation, validation, interpretation and
//! the canonical templates.

pub mod document;
pub mod edit;
pub mod interp;
pub mod params;
pub mod structure;
pub mod templates;

pub use document::{deserialize, find_structure_block, serialize, DocumentError, StructureDoc};
pub use interp::{eval_control, InterpError, Interpreter, InterpreterState, Signals};
pub use params::{default_space, Bound, ParamError, ParamSpace, ParamVector};
pub use structure::{
    ControllerStructure, PrimitiveKind, PrimitiveNode, StructureLimits, Violation, SIGNAL_NAMES,
};
pub use templates::{template, template_by_name, TemplateName};
