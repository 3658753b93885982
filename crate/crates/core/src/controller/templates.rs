//! Canonical starting structures.
//!
//! Sliding surface shared by the SMC family: `s = c1 * (v_ref - v_c) - i_l`.
//! A positive `s` means the inductor current is below what the voltage error
//! asks for, so the switching term raises the duty.
//!
//! | name          | law                                              | θ                          |
//! |---------------|--------------------------------------------------|----------------------------|
//! | `ConstDuty`   | `d`                                              | `(d)`                      |
//! | `PI`          | `kp*e + ki*∫e`                                   | `(kp, ki)`                 |
//! | `PID`         | `kp*e + ki*∫e + kd*D_f(e)`                       | `(kp, ki, α, kd)`          |
//! | `SMC`         | `K*sign(s) + d_bias`                             | `(c1, K, d_bias)`          |
//! | `AdaptiveSMC` | `K_a*sat(s/φ) + d_bias`, `K_a' = γ|s| - σ K_a`   | `(c1, γ, σ, φ, d_bias)`    |

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use super::edit::Builder;
use super::params::{defaults, Bound, ParamSpace};
use super::structure::{ControllerStructure, PrimitiveKind, DEFAULT_INTEGRATOR_LIMIT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TemplateName {
    Pi,
    Pid,
    Smc,
    AdaptiveSmc,
    ConstDuty,
}

impl TemplateName {
    pub const ALL: [TemplateName; 5] = [
        TemplateName::Pi,
        TemplateName::Pid,
        TemplateName::Smc,
        TemplateName::AdaptiveSmc,
        TemplateName::ConstDuty,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateName::Pi => "PI",
            TemplateName::Pid => "PID",
            TemplateName::Smc => "SMC",
            TemplateName::AdaptiveSmc => "AdaptiveSMC",
            TemplateName::ConstDuty => "ConstDuty",
        }
    }
}

impl fmt::Display for TemplateName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("unknown template '{0}' (known: PI, PID, SMC, AdaptiveSMC, ConstDuty)")]
pub struct UnknownTemplate(pub String);

impl FromStr for TemplateName {
    type Err = UnknownTemplate;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TemplateName::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| UnknownTemplate(s.to_string()))
    }
}

/// Switching-gain bounds for the plain SMC, in duty units.
pub const SMC_SWITCH_GAIN: Bound = Bound::new(0.0, 0.5);

/// Starting value of an adaptive switching gain with no tuned predecessor.
pub const ADAPTIVE_GAIN_START: f64 = 0.25;

/// Builds `c1 * error - i_l`; returns the surface node.
pub(crate) fn sliding_surface(b: &mut Builder) -> usize {
    let e = b.signal("error");
    let c1 = b.gain(e, defaults::GAIN);
    let il = b.signal("i_l");
    b.push(PrimitiveKind::Sub, vec![c1, il])
}

pub fn template(name: TemplateName) -> (ControllerStructure, ParamSpace) {
    let mut b = Builder::new();
    let out = match name {
        TemplateName::ConstDuty => b.param(defaults::DUTY_BIAS),
        TemplateName::Pi => {
            let e = b.signal("error");
            let p = b.gain(e, defaults::GAIN);
            let int = b.push(
                PrimitiveKind::Integrator {
                    limit: DEFAULT_INTEGRATOR_LIMIT,
                },
                vec![e],
            );
            let i = b.gain(int, defaults::GAIN);
            b.push(PrimitiveKind::Add, vec![p, i])
        }
        TemplateName::Pid => {
            let e = b.signal("error");
            let p = b.gain(e, defaults::GAIN);
            let int = b.push(
                PrimitiveKind::Integrator {
                    limit: DEFAULT_INTEGRATOR_LIMIT,
                },
                vec![e],
            );
            let i = b.gain(int, defaults::GAIN);
            let pi = b.push(PrimitiveKind::Add, vec![p, i]);
            let alpha = b.param(defaults::FILTER_SMOOTHING);
            let fd = b.push(PrimitiveKind::FilteredDeriv, vec![e, alpha]);
            let d = b.gain(fd, defaults::GAIN);
            b.push(PrimitiveKind::Add, vec![pi, d])
        }
        TemplateName::Smc => {
            let s = sliding_surface(&mut b);
            let sw = b.push(PrimitiveKind::Sign, vec![s]);
            let k = b.gain(sw, SMC_SWITCH_GAIN);
            let bias = b.param(defaults::DUTY_BIAS);
            b.push(PrimitiveKind::Add, vec![k, bias])
        }
        TemplateName::AdaptiveSmc => {
            let s = sliding_surface(&mut b);
            let rate = b.param(defaults::ADAPT_RATE);
            let leak = b.param(defaults::ADAPT_LEAK);
            let k = b.push(
                PrimitiveKind::AdaptiveGain {
                    initial: ADAPTIVE_GAIN_START,
                },
                vec![s, rate, leak],
            );
            let width = b.param(defaults::SAT_WIDTH);
            let sat = b.push(PrimitiveKind::Sat, vec![s, width]);
            let sw = b.push(PrimitiveKind::Mul, vec![k, sat]);
            let bias = b.param(defaults::DUTY_BIAS);
            b.push(PrimitiveKind::Add, vec![sw, bias])
        }
    };
    b.finish(name.as_str(), out)
}

pub fn template_by_name(name: &str) -> Result<(ControllerStructure, ParamSpace), UnknownTemplate> {
    Ok(template(name.parse()?))
}
