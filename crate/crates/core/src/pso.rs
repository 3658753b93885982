//! Global-best particle swarm over a box-bounded parameter space.
//!
//! Random numbers come from a ChaCha stream keyed by `(seed, iteration,
//! particle)`, so results do not depend on how fitness evaluations are
//! scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{ParamSpace, ParamVector};

#[derive(Debug, Error, PartialEq)]
pub enum PsoError {
    #[error("search space has dimension {space} but fitness expects {fitness}")]
    DimensionMismatch { space: usize, fitness: usize },
    #[error("invalid PSO config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EarlyStop {
    pub patience: usize,
    /// Relative improvement of the global best needed within `patience` iterations.
    pub min_rel_improvement: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsoConfig {
    pub swarm_size: usize,
    pub max_iters: usize,
    pub inertia_start: f64,
    pub inertia_end: f64,
    pub cognitive_c1: f64,
    pub social_c2: f64,
    pub velocity_clamp_frac: f64,
    pub seed: u64,
    /// `patience = 0` disables early stopping.
    pub early_stop: Option<EarlyStop>,
    /// Fitness value substituted for failed or non-finite evaluations.
    pub failure_penalty: f64,
    pub parallel: bool,
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self {
            swarm_size: 30,
            max_iters: 60,
            inertia_start: 0.9,
            inertia_end: 0.4,
            cognitive_c1: 1.5,
            social_c2: 1.5,
            velocity_clamp_frac: 0.2,
            seed: 0,
            early_stop: Some(EarlyStop {
                patience: 10,
                min_rel_improvement: 1e-3,
            }),
            failure_penalty: 1e6,
            parallel: true,
        }
    }
}

impl PsoConfig {
    pub fn validate(&self) -> Result<(), PsoError> {
        let bad = |m: &str| Err(PsoError::Config(m.to_string()));
        if self.swarm_size < 2 {
            return bad("swarm_size must be at least 2");
        }
        if self.max_iters < 1 {
            return bad("max_iters must be at least 1");
        }
        let coefs = [
            self.inertia_start,
            self.inertia_end,
            self.cognitive_c1,
            self.social_c2,
        ];
        if coefs.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return bad("inertia and acceleration coefficients must be non-negative");
        }
        if !(self.velocity_clamp_frac > 0.0 && self.velocity_clamp_frac <= 1.0) {
            return bad("velocity_clamp_frac must be in (0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsoResult {
    pub best_theta: ParamVector,
    pub best_fitness: f64,
    /// Global best after initialization and after every iteration.
    pub history: Vec<f64>,
    pub evaluations: usize,
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{0}")]
pub struct FitnessError(pub String);

/// Objective minimized by the optimizer. Must be safe to call concurrently.
pub trait Fitness: Sync {
    fn evaluate(&self, theta: &[f64]) -> Result<f64, FitnessError>;

    /// Expected parameter dimension, when the objective knows it.
    fn dimension(&self) -> Option<usize> {
        None
    }
}

impl<F> Fitness for F
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    fn evaluate(&self, theta: &[f64]) -> Result<f64, FitnessError> {
        Ok(self(theta))
    }
}

/// Lower-level optimizer interface; PSO is the one implementation.
pub trait ParamOptimizer {
    fn optimize(&self, fitness: &dyn Fitness, space: &ParamSpace) -> Result<PsoResult, PsoError>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Pso {
    pub config: PsoConfig,
}

impl Pso {
    pub fn new(config: PsoConfig) -> Self {
        Self { config }
    }
}

impl ParamOptimizer for Pso {
    fn optimize(&self, fitness: &dyn Fitness, space: &ParamSpace) -> Result<PsoResult, PsoError> {
        optimize(fitness, space, &self.config)
    }
}

/// Mixes a session seed with a per-stage index.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ index)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream for one particle at one iteration.
pub fn particle_rng(seed: u64, iteration: usize, particle: usize) -> ChaCha8Rng {
    let key = splitmix64(splitmix64(splitmix64(seed) ^ iteration as u64) ^ particle as u64);
    ChaCha8Rng::seed_from_u64(key)
}

fn score(fitness: &dyn Fitness, theta: &[f64], penalty: f64) -> f64 {
    match fitness.evaluate(theta) {
        Ok(v) if v.is_finite() => v,
        _ => penalty,
    }
}

/// Order-preserving fitness fan-out. Failures map to `penalty`.
pub fn evaluate_swarm(
    particles: &[Vec<f64>],
    fitness: &dyn Fitness,
    penalty: f64,
    parallel: bool,
) -> Vec<f64> {
    if parallel {
        particles
            .par_iter()
            .map(|p| score(fitness, p, penalty))
            .collect()
    } else {
        particles
            .iter()
            .map(|p| score(fitness, p, penalty))
            .collect()
    }
}

/// Minimizes `fitness` over `space`, returning the best position ever seen.
pub fn optimize(
    fitness: &dyn Fitness,
    space: &ParamSpace,
    cfg: &PsoConfig,
) -> Result<PsoResult, PsoError> {
    optimize_from(fitness, space, cfg, None)
}

/// As [`optimize`], with particle 0 started at `start` (clamped to bounds)
/// when its length matches the space.
pub fn optimize_from(
    fitness: &dyn Fitness,
    space: &ParamSpace,
    cfg: &PsoConfig,
    start: Option<&[f64]>,
) -> Result<PsoResult, PsoError> {
    cfg.validate()?;
    let dim = space.dimension();
    if let Some(expected) = fitness.dimension() {
        if expected != dim {
            return Err(PsoError::DimensionMismatch {
                space: dim,
                fitness: expected,
            });
        }
    }
    if dim == 0 {
        let f = score(fitness, &[], cfg.failure_penalty);
        return Ok(PsoResult {
            best_theta: ParamVector::empty(),
            best_fitness: f,
            history: vec![f],
            evaluations: 1,
        });
    }

    let bounds = space.bounds();
    let vmax: Vec<f64> = bounds
        .iter()
        .map(|b| cfg.velocity_clamp_frac * b.range())
        .collect();
    let n = cfg.swarm_size;

    let mut pos: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut vel: Vec<Vec<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = particle_rng(cfg.seed, 0, i);
        let mut x = Vec::with_capacity(dim);
        let mut v = Vec::with_capacity(dim);
        for (b, &vm) in bounds.iter().zip(&vmax) {
            x.push(if b.range() > 0.0 {
                rng.random_range(b.lower..=b.upper)
            } else {
                b.lower
            });
            v.push(if vm > 0.0 {
                rng.random_range(-vm..=vm)
            } else {
                0.0
            });
        }
        pos.push(x);
        vel.push(v);
    }
    if let Some(start) = start.filter(|s| s.len() == dim) {
        pos[0] = start.iter().zip(bounds).map(|(x, b)| b.clamp(*x)).collect();
    }

    let mut fit = evaluate_swarm(&pos, fitness, cfg.failure_penalty, cfg.parallel);
    let mut evaluations = n;
    let mut pbest = pos.clone();
    let mut pbest_f = fit.clone();
    let mut g = argmin(&pbest_f);
    let mut gbest = pbest[g].clone();
    let mut gbest_f = pbest_f[g];
    let mut history = vec![gbest_f];

    for it in 1..=cfg.max_iters {
        let frac = if cfg.max_iters > 1 {
            (it - 1) as f64 / (cfg.max_iters - 1) as f64
        } else {
            0.0
        };
        let w = cfg.inertia_start + (cfg.inertia_end - cfg.inertia_start) * frac;
        for i in 0..n {
            let mut rng = particle_rng(cfg.seed, it, i);
            for d in 0..dim {
                let r1: f64 = rng.random();
                let r2: f64 = rng.random();
                let mut v = w * vel[i][d]
                    + cfg.cognitive_c1 * r1 * (pbest[i][d] - pos[i][d])
                    + cfg.social_c2 * r2 * (gbest[d] - pos[i][d]);
                v = v.clamp(-vmax[d], vmax[d]);
                vel[i][d] = v;
                pos[i][d] = bounds[d].clamp(pos[i][d] + v);
            }
        }
        fit = evaluate_swarm(&pos, fitness, cfg.failure_penalty, cfg.parallel);
        evaluations += n;
        for i in 0..n {
            if fit[i] < pbest_f[i] {
                pbest_f[i] = fit[i];
                pbest[i].clone_from(&pos[i]);
            }
        }
        g = argmin(&pbest_f);
        if pbest_f[g] < gbest_f {
            gbest_f = pbest_f[g];
            gbest.clone_from(&pbest[g]);
        }
        history.push(gbest_f);

        if let Some(es) = cfg.early_stop {
            if es.patience > 0 && history.len() > es.patience {
                let old = history[history.len() - 1 - es.patience];
                let rel = (old - gbest_f) / old.abs().max(f64::MIN_POSITIVE);
                if rel < es.min_rel_improvement {
                    break;
                }
            }
        }
    }

    Ok(PsoResult {
        best_theta: ParamVector::new(gbest).expect("positions are clamped to finite bounds"),
        best_fitness: gbest_f,
        history,
        evaluations,
    })
}

/// First index of the minimum.
fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x < v[best] {
            best = i;
        }
    }
    best
}
