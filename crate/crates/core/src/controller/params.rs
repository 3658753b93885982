use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::structure::{ControllerStructure, PrimitiveKind};

#[derive(Debug, Error, PartialEq)]
pub enum ParamError {
    #[error("parameter {index} is not finite")]
    NonFinite { index: usize },
    #[error("bounds for parameter {index} are invalid: [{lower}, {upper}]")]
    BadBounds {
        index: usize,
        lower: f64,
        upper: f64,
    },
    #[error("expected d_θ={expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Continuous controller parameters θ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Result<Self, ParamError> {
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(ParamError::NonFinite { index });
        }
        Ok(Self(values))
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    pub lower: f64,
    pub upper: f64,
}

impl Bound {
    pub const fn new(lower: f64, upper: f64) -> Self {
        Self { lower, upper }
    }

    pub fn range(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lower && x <= self.upper
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lower, self.upper)
    }
}

/// Per-parameter box bounds Θ_S.
///
/// Degenerate bounds (`lower == upper`) are accepted so a dimension can be
/// pinned; inverted or non-finite bounds are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamSpace(Vec<Bound>);

impl ParamSpace {
    pub fn new(bounds: Vec<Bound>) -> Result<Self, ParamError> {
        for (index, b) in bounds.iter().enumerate() {
            if !(b.lower.is_finite() && b.upper.is_finite() && b.lower <= b.upper) {
                return Err(ParamError::BadBounds {
                    index,
                    lower: b.lower,
                    upper: b.upper,
                });
            }
        }
        Ok(Self(bounds))
    }

    pub fn bounds(&self) -> &[Bound] {
        &self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.0.len() && theta.iter().zip(&self.0).all(|(x, b)| b.contains(*x))
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.0.iter().map(|b| 0.5 * (b.lower + b.upper)).collect()
    }
}

/// Default bounds by the role a parameter plays in a structure.
pub mod defaults {
    use super::Bound;

    pub const GAIN: Bound = Bound::new(0.0, 100.0);
    pub const ADAPT_RATE: Bound = Bound::new(0.0, 500.0);
    pub const ADAPT_LEAK: Bound = Bound::new(0.0, 50.0);
    pub const SAT_WIDTH: Bound = Bound::new(1e-3, 10.0);
    pub const FILTER_SMOOTHING: Bound = Bound::new(0.01, 1.0);
    pub const DUTY_BIAS: Bound = Bound::new(0.02, 0.95);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRole {
    Gain,
    SatWidth,
    FilterSmoothing,
    AdaptRate,
    AdaptLeak,
    /// Additive offset on the duty path.
    Bias,
}

impl ParamRole {
    pub fn default_bound(self) -> Bound {
        match self {
            ParamRole::Gain => defaults::GAIN,
            ParamRole::SatWidth => defaults::SAT_WIDTH,
            ParamRole::FilterSmoothing => defaults::FILTER_SMOOTHING,
            ParamRole::AdaptRate => defaults::ADAPT_RATE,
            ParamRole::AdaptLeak => defaults::ADAPT_LEAK,
            ParamRole::Bias => defaults::DUTY_BIAS,
        }
    }
}

/// Role of each parameter index, taken from its first consumer in node order.
///
/// A `Param` leaf feeding a `Sat`/`FilteredDeriv`/`AdaptiveGain` parameter slot
/// takes that slot's role; a `Param` in an additive position (or as the output)
/// is a duty bias; a `Gain` node's parameter and any other use is a gain.
pub fn param_roles(structure: &ControllerStructure) -> Vec<ParamRole> {
    let dim = structure.param_dimension().unwrap_or(0);
    let mut roles: Vec<Option<ParamRole>> = vec![None; dim];
    let n = structure.nodes.len();
    // consumer lookup for Param leaves
    let mut leaf_role: Vec<Option<ParamRole>> = vec![None; n];
    for node in &structure.nodes {
        for (slot, &c) in node.children.iter().enumerate() {
            if c >= n || leaf_role[c].is_some() {
                continue;
            }
            let role = match (&node.kind, slot) {
                (PrimitiveKind::Sat, 1) => ParamRole::SatWidth,
                (PrimitiveKind::FilteredDeriv, 1) => ParamRole::FilterSmoothing,
                (PrimitiveKind::AdaptiveGain { .. }, 1) => ParamRole::AdaptRate,
                (PrimitiveKind::AdaptiveGain { .. }, 2) => ParamRole::AdaptLeak,
                (PrimitiveKind::Add | PrimitiveKind::Sub, _) => ParamRole::Bias,
                _ => ParamRole::Gain,
            };
            leaf_role[c] = Some(role);
        }
    }
    for (i, node) in structure.nodes.iter().enumerate() {
        let (idx, role) = match node.kind {
            PrimitiveKind::Gain(p) => (p, ParamRole::Gain),
            PrimitiveKind::Param(p) => (
                p,
                if i == structure.output {
                    ParamRole::Bias
                } else {
                    leaf_role[i].unwrap_or(ParamRole::Gain)
                },
            ),
            _ => continue,
        };
        if idx < dim && roles[idx].is_none() {
            roles[idx] = Some(role);
        }
    }
    roles
        .into_iter()
        .map(|r| r.unwrap_or(ParamRole::Gain))
        .collect()
}

/// Default search space derived from parameter roles.
pub fn default_space(structure: &ControllerStructure) -> ParamSpace {
    ParamSpace(
        param_roles(structure)
            .into_iter()
            .map(ParamRole::default_bound)
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite_theta() {
        assert_eq!(
            ParamVector::new(vec![1.0, f64::NAN]).unwrap_err(),
            ParamError::NonFinite { index: 1 }
        );
    }

    #[test]
    fn rejects_inverted_bounds() {
        assert!(ParamSpace::new(vec![Bound::new(1.0, 0.0)]).is_err());
        assert!(ParamSpace::new(vec![Bound::new(1.0, 1.0)]).is_ok());
    }
}
