//! Graph construction and rewriting helpers.

use super::params::{Bound, ParamSpace};
use super::structure::{ControllerStructure, PrimitiveKind, PrimitiveNode};

/// Append-only builder; each call returns the new node's position.
#[derive(Debug, Default)]
pub struct Builder {
    nodes: Vec<PrimitiveNode>,
    bounds: Vec<Bound>,
}

impl Builder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Starts from an existing structure and its bounds.
    pub fn from_structure(structure: &ControllerStructure, space: &ParamSpace) -> Self {
        Self {
            nodes: structure.nodes.clone(),
            bounds: space.bounds().to_vec(),
        }
    }

    pub fn push(&mut self, kind: PrimitiveKind, children: Vec<usize>) -> usize {
        self.nodes.push(PrimitiveNode::new(kind, children));
        self.nodes.len() - 1
    }

    pub fn signal(&mut self, name: &str) -> usize {
        self.push(PrimitiveKind::Signal(name.to_string()), vec![])
    }

    pub fn constant(&mut self, v: f64) -> usize {
        self.push(PrimitiveKind::Const(v), vec![])
    }

    fn new_param_index(&mut self, bound: Bound) -> usize {
        self.bounds.push(bound);
        self.bounds.len() - 1
    }

    pub fn param(&mut self, bound: Bound) -> usize {
        let p = self.new_param_index(bound);
        self.push(PrimitiveKind::Param(p), vec![])
    }

    pub fn gain(&mut self, input: usize, bound: Bound) -> usize {
        let p = self.new_param_index(bound);
        self.push(PrimitiveKind::Gain(p), vec![input])
    }

    pub fn node_mut(&mut self, i: usize) -> &mut PrimitiveNode {
        &mut self.nodes[i]
    }

    pub fn nodes(&self) -> &[PrimitiveNode] {
        &self.nodes
    }

    pub fn bounds_mut(&mut self) -> &mut [Bound] {
        &mut self.bounds
    }

    /// Finishes and canonicalizes the structure.
    pub fn finish(self, name: &str, output: usize) -> (ControllerStructure, ParamSpace) {
        let raw = ControllerStructure::new(name, self.nodes, output);
        let space = ParamSpace::new(self.bounds).expect("builder bounds are well-formed");
        canonicalize(&raw, &space)
    }
}

/// Re-emits a structure in children-first DFS order from the output, drops
/// unreachable nodes, and renumbers parameters by first appearance. Bounds
/// follow their parameters. Requires an acyclic structure with in-range links.
pub fn canonicalize(
    structure: &ControllerStructure,
    space: &ParamSpace,
) -> (ControllerStructure, ParamSpace) {
    let n = structure.nodes.len();
    let mut new_index: Vec<Option<usize>> = vec![None; n];
    let mut emitted: Vec<PrimitiveNode> = Vec::new();
    let mut param_map: Vec<Option<usize>> = vec![None; space.dimension().max(max_param(structure))];
    let mut bounds: Vec<Bound> = Vec::new();

    let mut stack: Vec<(usize, usize)> = vec![(structure.output, 0)];
    while let Some(&mut (node, ref mut next)) = stack.last_mut() {
        if new_index[node].is_some() {
            stack.pop();
            continue;
        }
        if let Some(&child) = structure.nodes[node].children.get(*next) {
            *next += 1;
            if new_index[child].is_none() {
                stack.push((child, 0));
            }
            continue;
        }
        let src = &structure.nodes[node];
        let mut kind = src.kind.clone();
        if let Some(p) = kind.param_index() {
            let mapped = *param_map[p].get_or_insert_with(|| {
                bounds.push(
                    space
                        .bounds()
                        .get(p)
                        .copied()
                        .unwrap_or(Bound::new(0.0, 1.0)),
                );
                bounds.len() - 1
            });
            kind.set_param_index(mapped);
        }
        let children = src
            .children
            .iter()
            .map(|&c| new_index[c].expect("children emitted first"))
            .collect();
        emitted.push(PrimitiveNode::new(kind, children));
        new_index[node] = Some(emitted.len() - 1);
        stack.pop();
    }
    let output = emitted.len() - 1;
    (
        ControllerStructure::new(structure.name.clone(), emitted, output),
        ParamSpace::new(bounds).expect("bounds copied from a valid space"),
    )
}

fn max_param(s: &ControllerStructure) -> usize {
    s.nodes
        .iter()
        .filter_map(|n| n.kind.param_index())
        .map(|p| p + 1)
        .max()
        .unwrap_or(0)
}
