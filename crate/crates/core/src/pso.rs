//! Global-best particle swarm optimization over real vectors.
//!
//! Each iteration draws fresh per-component uniform coefficients `r1`, `r2`
//! for every particle, moves the whole swarm synchronously
//!
//! ```text
//! u(t+1)  = IW * u(t) + A1 * r1 .* (pbest - x(t)) + A2 * r2 .* (gbest - x(t))
//! x(t+1)  = x(t) + u(t+1)
//! ```
//!
//! then evaluates the new positions and refreshes personal and global bests.
//! Velocities are clamped per component after the update; positions are not
//! bounded. All random draws happen before cost evaluation, so a run is fully
//! determined by `(config, dimension, cost)` whatever the execution strategy.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::par::Execution;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsoConfig {
    pub swarm_size: usize,
    pub max_iterations: usize,
    /// IW, held constant for the whole run.
    pub inertia_weight: f64,
    /// A1, attraction towards the particle's own best.
    pub cognitive: f64,
    /// A2, attraction towards the swarm's best.
    pub social: f64,
    /// Closed interval `[lo, hi]` for initial positions.
    pub init_range: [f64; 2],
    /// Absolute per-component velocity cap.
    pub velocity_clamp: f64,
    pub seed: u64,
    /// Stop once the global best cost is at or below this value. Off by
    /// default; when set, fewer than `max_iterations` steps may run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_threshold: Option<f64>,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for PsoConfig {
    fn default() -> Self {
        PsoConfig {
            swarm_size: 30,
            max_iterations: 100,
            inertia_weight: 0.729,
            cognitive: 1.49445,
            social: 1.49445,
            init_range: [-1.0, 1.0],
            velocity_clamp: 0.5,
            seed: 0,
            cost_threshold: None,
            execution: Execution::default(),
        }
    }
}

impl PsoConfig {
    pub fn new(swarm_size: usize, max_iterations: usize) -> Self {
        PsoConfig {
            swarm_size,
            max_iterations,
            ..Default::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.swarm_size < 2 {
            return bad(format!("swarm_size must be >= 2, got {}", self.swarm_size));
        }
        if self.max_iterations < 1 {
            return bad("max_iterations must be >= 1".into());
        }
        let [lo, hi] = self.init_range;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return bad(format!("init_range needs finite lo < hi, got [{lo}, {hi}]"));
        }
        if !(self.velocity_clamp.is_finite() && self.velocity_clamp > 0.0) {
            return bad(format!(
                "velocity_clamp must be > 0, got {}",
                self.velocity_clamp
            ));
        }
        if !self.inertia_weight.is_finite() {
            return bad("inertia_weight must be finite".into());
        }
        for (name, v) in [("cognitive", self.cognitive), ("social", self.social)] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} acceleration must be >= 0, got {v}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub best_position: Vec<f64>,
    pub best_cost: f64,
}

impl Particle {
    pub fn dimension(&self) -> usize {
        self.position.len()
    }
}

/// Full optimizer state, including the random stream, so cloning a state and
/// stepping both copies yields identical successors.
#[derive(Debug, Clone, PartialEq)]
pub struct SwarmState {
    pub particles: Vec<Particle>,
    pub global_best_position: Vec<f64>,
    pub global_best_cost: f64,
    pub iteration: usize,
    /// `(iteration, global_best_cost)`, one entry for initialization and one
    /// per step.
    pub cost_history: Vec<(usize, f64)>,
    /// Total cost evaluations so far.
    pub evaluations: usize,
    /// Evaluations that returned a non-finite value and were scored as +inf.
    pub non_finite_evaluations: usize,
    rng: ChaCha8Rng,
}

/// Result of a full optimization run.
#[derive(Debug, Clone, PartialEq)]
pub struct PsoOutcome {
    pub best_position: Vec<f64>,
    pub best_cost: f64,
    pub history: Vec<(usize, f64)>,
    pub evaluations: usize,
    pub non_finite_evaluations: usize,
}

fn evaluate_all<C>(exec: Execution, positions: &[&[f64]], cost: &C) -> Vec<f64>
where
    C: Fn(&[f64]) -> f64 + Sync,
{
    exec.map(positions.len(), |i| cost(positions[i]))
}

pub fn initialize_swarm<C>(config: &PsoConfig, dimension: usize, cost: &C) -> Result<SwarmState>
where
    C: Fn(&[f64]) -> f64 + Sync,
{
    config.validate()?;
    if dimension == 0 {
        return Err(Error::InvalidConfig("dimension must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let [lo, hi] = config.init_range;
    let vmax = config.velocity_clamp;

    let mut particles: Vec<Particle> = (0..config.swarm_size)
        .map(|_| {
            let position: Vec<f64> = (0..dimension).map(|_| rng.random_range(lo..=hi)).collect();
            let velocity: Vec<f64> = (0..dimension)
                .map(|_| rng.random_range(-vmax..=vmax))
                .collect();
            Particle {
                best_position: position.clone(),
                position,
                velocity,
                best_cost: f64::INFINITY,
            }
        })
        .collect();

    let positions: Vec<&[f64]> = particles.iter().map(|p| p.position.as_slice()).collect();
    let costs = evaluate_all(config.execution, &positions, cost);
    if let Some((particle, &value)) = costs.iter().enumerate().find(|(_, c)| !c.is_finite()) {
        return Err(Error::NonFiniteCost { particle, value });
    }

    let mut best = 0;
    for (i, (p, &c)) in particles.iter_mut().zip(&costs).enumerate() {
        p.best_cost = c;
        if c < costs[best] {
            best = i;
        }
    }

    Ok(SwarmState {
        global_best_position: particles[best].best_position.clone(),
        global_best_cost: costs[best],
        iteration: 0,
        cost_history: vec![(0, costs[best])],
        evaluations: config.swarm_size,
        non_finite_evaluations: 0,
        particles,
        rng,
    })
}

fn update_velocity_in_place(
    velocity: &mut [f64],
    position: &[f64],
    best_position: &[f64],
    global_best: &[f64],
    r1: &[f64],
    r2: &[f64],
    config: &PsoConfig,
) {
    let vmax = config.velocity_clamp;
    for k in 0..velocity.len() {
        let v = config.inertia_weight * velocity[k]
            + config.cognitive * r1[k] * (best_position[k] - position[k])
            + config.social * r2[k] * (global_best[k] - position[k]);
        velocity[k] = v.clamp(-vmax, vmax);
    }
}

/// New velocity for `particle`, clamped to `[-velocity_clamp, velocity_clamp]`
/// per component.
pub fn velocity_update(
    particle: &Particle,
    global_best: &[f64],
    config: &PsoConfig,
    r1: &[f64],
    r2: &[f64],
) -> Result<Vec<f64>> {
    let d = particle.dimension();
    check_len("velocity", d, particle.velocity.len())?;
    check_len("personal best", d, particle.best_position.len())?;
    check_len("global best", d, global_best.len())?;
    check_len("r1", d, r1.len())?;
    check_len("r2", d, r2.len())?;
    let mut velocity = particle.velocity.clone();
    update_velocity_in_place(
        &mut velocity,
        &particle.position,
        &particle.best_position,
        global_best,
        r1,
        r2,
        config,
    );
    Ok(velocity)
}

pub fn position_update(position: &[f64], velocity: &[f64]) -> Result<Vec<f64>> {
    check_len("velocity", position.len(), velocity.len())?;
    Ok(position.iter().zip(velocity).map(|(x, u)| x + u).collect())
}

impl SwarmState {
    pub fn dimension(&self) -> usize {
        self.global_best_position.len()
    }

    /// One synchronous iteration: move every particle, evaluate, refresh bests.
    pub fn step<C>(&mut self, config: &PsoConfig, cost: &C)
    where
        C: Fn(&[f64]) -> f64 + Sync,
    {
        let d = self.dimension();
        let mut r1 = vec![0.0; d];
        let mut r2 = vec![0.0; d];
        for p in &mut self.particles {
            r1.iter_mut().for_each(|r| *r = self.rng.random::<f64>());
            r2.iter_mut().for_each(|r| *r = self.rng.random::<f64>());
            update_velocity_in_place(
                &mut p.velocity,
                &p.position,
                &p.best_position,
                &self.global_best_position,
                &r1,
                &r2,
                config,
            );
            p.position
                .iter_mut()
                .zip(&p.velocity)
                .for_each(|(x, u)| *x += u);
        }

        let positions: Vec<&[f64]> = self
            .particles
            .iter()
            .map(|p| p.position.as_slice())
            .collect();
        let costs = evaluate_all(config.execution, &positions, cost);
        self.evaluations += costs.len();

        let mut improved = None;
        for (i, (p, &c)) in self.particles.iter_mut().zip(&costs).enumerate() {
            if !c.is_finite() {
                self.non_finite_evaluations += 1;
                continue;
            }
            if c < p.best_cost {
                p.best_cost = c;
                p.best_position.copy_from_slice(&p.position);
                if c < self.global_best_cost {
                    self.global_best_cost = c;
                    improved = Some(i);
                }
            }
        }
        if let Some(i) = improved {
            self.global_best_position
                .copy_from_slice(&self.particles[i].best_position);
        }

        self.iteration += 1;
        self.cost_history
            .push((self.iteration, self.global_best_cost));
    }

    pub fn into_outcome(self) -> PsoOutcome {
        PsoOutcome {
            best_position: self.global_best_position,
            best_cost: self.global_best_cost,
            history: self.cost_history,
            evaluations: self.evaluations,
            non_finite_evaluations: self.non_finite_evaluations,
        }
    }
}

/// Runs `max_iterations` steps after initialization and returns the global
/// best.
pub fn optimize<C>(config: &PsoConfig, dimension: usize, cost: &C) -> Result<PsoOutcome>
where
    C: Fn(&[f64]) -> f64 + Sync,
{
    optimize_observed(config, dimension, cost, |_| {})
}

/// [`optimize`], calling `observer` after initialization and after each step.
pub fn optimize_observed<C, O>(
    config: &PsoConfig,
    dimension: usize,
    cost: &C,
    mut observer: O,
) -> Result<PsoOutcome>
where
    C: Fn(&[f64]) -> f64 + Sync,
    O: FnMut(&SwarmState),
{
    let mut state = initialize_swarm(config, dimension, cost)?;
    observer(&state);
    let reached = |s: &SwarmState| {
        config
            .cost_threshold
            .is_some_and(|t| s.global_best_cost <= t)
    };
    while state.iteration < config.max_iterations && !reached(&state) {
        state.step(config, cost);
        observer(&state);
    }
    Ok(state.into_outcome())
}

/// Writes a convergence trace as `iteration,global_best_cost` lines under a
/// header.
pub fn write_trace<W: Write>(history: &[(usize, f64)], mut out: W) -> std::io::Result<()> {
    writeln!(out, "iteration,global_best_cost")?;
    for (it, c) in history {
        writeln!(out, "{it},{c}")?;
    }
    Ok(())
}
