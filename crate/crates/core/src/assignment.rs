//! Machine-to-task assignment MDP.
//!
//! A state holds every machine's health code, a detailed code
//! `τ̄ ∈ 0..=p` per task (0 inactive, larger codes are more demanding) and
//! every machine's current maintenance status. A decision maps each machine
//! to a task index in `1..=m` or to 0 (unassigned), never sending two
//! machines to the same task.

use std::cmp::Reverse;

use serde::{Deserialize, Serialize};

use crate::chain::TransitionMatrix;
use crate::codec::{factored_product, MixedRadix};
use crate::degradation::DegradationTable;
use crate::error::{Error, Result};
use crate::maintenance::{build_parallel, check_codes, health_transition, join_codes, MaintenanceEffect, INTENSITIES};
use crate::mdp::{MdpBuilder, MdpModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssignmentRewards {
    pub rho1: f64,
    pub rho2: f64,
    pub rho3: f64,
    pub rho4: f64,
    /// Health threshold above which assigning a machine is penalized.
    pub eta1: u8,
}

impl AssignmentRewards {
    pub fn case_study() -> Self {
        Self {
            rho1: 100.0,
            rho2: 0.5,
            rho3: 100.0,
            rho4: 2.0,
            eta1: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentConfig {
    pub machines: usize,
    pub tasks: usize,
    /// Working health levels `L`.
    pub health_levels: u8,
    /// Active task codes `p`; the task alphabet is `0..=p`.
    pub task_codes: u8,
    pub rewards: AssignmentRewards,
}

impl AssignmentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.machines == 0 || self.tasks == 0 {
            return Err(Error::Config(
                "assignment model needs at least one machine and one task".into(),
            ));
        }
        if self.health_levels == 0 || self.health_levels == u8::MAX {
            return Err(Error::Config(format!(
                "invalid health level count {}",
                self.health_levels
            )));
        }
        if self.task_codes == 0 || self.task_codes == u8::MAX {
            return Err(Error::Config(format!(
                "task code count p must be at least 1, got {}",
                self.task_codes
            )));
        }
        if self.tasks > usize::from(u8::MAX) {
            return Err(Error::Config("too many tasks".into()));
        }
        let r = &self.rewards;
        if let Some(v) = [r.rho1, r.rho2, r.rho3, r.rho4]
            .iter()
            .find(|v| !(**v > 0.0 && v.is_finite()))
        {
            return Err(Error::Config(format!("rho constants must be positive, got {v}")));
        }
        if r.eta1 < 1 || r.eta1 > self.failure_code() {
            return Err(Error::Config(format!(
                "eta1 must lie in 1..={}, got {}",
                self.failure_code(),
                r.eta1
            )));
        }
        Ok(())
    }

    pub fn failure_code(&self) -> u8 {
        self.health_levels + 1
    }

    fn codec(&self) -> Result<MixedRadix> {
        let n = self.machines;
        let mut radices = vec![usize::from(self.failure_code()); n];
        radices.extend(std::iter::repeat_n(usize::from(self.task_codes) + 1, self.tasks));
        radices.extend(std::iter::repeat_n(INTENSITIES, n));
        MixedRadix::new(radices)
    }
}

/// `(L+1)^n · (p+1)^m · 4^n`.
pub fn assignment_state_count(config: &AssignmentConfig) -> Result<usize> {
    config.validate()?;
    Ok(config.codec()?.size())
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssignmentState {
    pub lambda: Vec<u8>,
    pub tau_bar: Vec<u8>,
    pub d_status: Vec<u8>,
}

impl AssignmentState {
    pub fn validate(&self, config: &AssignmentConfig) -> Result<()> {
        check_codes("lambda", &self.lambda, config.machines, 1, config.failure_code())?;
        check_codes("tau_bar", &self.tau_bar, config.tasks, 0, config.task_codes)?;
        check_codes("d_status", &self.d_status, config.machines, 0, INTENSITIES as u8 - 1)
    }
}

pub fn encode_assignment_state(state: &AssignmentState, config: &AssignmentConfig) -> Result<usize> {
    state.validate(config)?;
    let digits: Vec<usize> = state
        .lambda
        .iter()
        .map(|&l| usize::from(l) - 1)
        .chain(state.tau_bar.iter().chain(&state.d_status).map(|&c| usize::from(c)))
        .collect();
    config.codec()?.encode(&digits)
}

pub fn decode_assignment_state(index: usize, config: &AssignmentConfig) -> Result<AssignmentState> {
    let digits = config.codec()?.decode(index)?;
    Ok(assignment_state_from_digits(&digits, config.machines))
}

fn assignment_state_from_digits(digits: &[usize], n: usize) -> AssignmentState {
    let m = digits.len() - 2 * n;
    AssignmentState {
        lambda: digits[..n].iter().map(|&d| d as u8 + 1).collect(),
        tau_bar: digits[n..n + m].iter().map(|&d| d as u8).collect(),
        d_status: digits[n + m..].iter().map(|&d| d as u8).collect(),
    }
}

/// Task index per machine; 0 leaves the machine unassigned.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AssignmentDecision(pub Vec<u8>);

impl AssignmentDecision {
    pub fn assigned(&self) -> usize {
        self.0.iter().filter(|&&a| a != 0).count()
    }

    pub fn label(&self) -> String {
        join_codes(&self.0)
    }

    pub fn is_distinct(&self) -> bool {
        let mut seen: Vec<u8> = self.0.iter().copied().filter(|&a| a != 0).collect();
        let total = seen.len();
        seen.sort_unstable();
        seen.dedup();
        seen.len() == total
    }
}

/// `m(m^(n-1) + n - 1) + 1`.
pub fn assignment_count_formula(machines: u32, tasks: u64) -> u64 {
    tasks * (tasks.pow(machines - 1) + u64::from(machines) - 1) + 1
}

/// Every distinct assignment, ordered so that more machines assigned come
/// first and, among those, higher task indices come first.
///
/// With the solver's lowest-index tie-break this makes the policy prefer
/// full assignments and higher-indexed tasks whenever values tie.
pub fn enumerate_assignments(machines: usize, tasks: usize) -> Result<Vec<AssignmentDecision>> {
    if machines == 0 || tasks == 0 || tasks > usize::from(u8::MAX) {
        return Err(Error::Config(format!(
            "cannot enumerate assignments for n = {machines}, m = {tasks}"
        )));
    }
    let codec = MixedRadix::new(vec![tasks + 1; machines])?;
    let mut out: Vec<AssignmentDecision> = (0..codec.size())
        .map(|i| {
            AssignmentDecision(
                codec
                    .decode(i)
                    .expect("in range")
                    .into_iter()
                    .map(|a| a as u8)
                    .collect(),
            )
        })
        .filter(AssignmentDecision::is_distinct)
        .collect();
    out.sort_by_key(|a| (machines - a.assigned(), Reverse(a.0.clone())));
    Ok(out)
}

fn penalized(lambda: u8, eta1: u8) -> bool {
    lambda > eta1
}

/// Task-completion term plus a penalty for every assigned machine whose
/// health code exceeds `eta1`.
pub fn assignment_reward(state: &AssignmentState, decision: &AssignmentDecision, config: &AssignmentConfig) -> f64 {
    let r = &config.rewards;
    let task_load: f64 = state.tau_bar.iter().map(|&t| f64::from(t)).sum();
    let weak_assigned = state
        .lambda
        .iter()
        .zip(&decision.0)
        .filter(|(&l, &a)| a != 0 && penalized(l, r.eta1))
        .count() as f64;
    r.rho1 * (-r.rho2 * task_load).exp() + r.rho3 * (-r.rho4 * weak_assigned).exp()
}

/// How task codes evolve inside the assignment model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum TaskDynamics {
    /// Every task follows the exogenous task chain regardless of the decision.
    Exogenous,
    /// A task assigned to an available machine (maintenance status below
    /// `unavailable_intensity`) is inactive next epoch; other tasks follow
    /// the chain.
    CompleteWhenServed { unavailable_intensity: u8 },
}

impl Default for TaskDynamics {
    fn default() -> Self {
        TaskDynamics::CompleteWhenServed {
            unavailable_intensity: 3,
        }
    }
}

impl TaskDynamics {
    /// Tasks (1-based) that are certain to complete under `decision`.
    pub fn served_tasks(&self, decision: &[u8], d_status: &[u8]) -> Vec<u8> {
        match *self {
            TaskDynamics::Exogenous => Vec::new(),
            TaskDynamics::CompleteWhenServed { unavailable_intensity } => decision
                .iter()
                .zip(d_status)
                .filter(|(&a, &d)| a != 0 && d < unavailable_intensity)
                .map(|(&a, _)| a)
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentTables {
    /// `P(λ' | λ, d_status)`, one matrix over codes `0..=L` per status flag.
    pub health_chains: Vec<TransitionMatrix>,
    /// `P(τ̄' | τ̄)` over `0..=p`.
    pub task_chain: TransitionMatrix,
    /// `P(d' | d)` for the maintenance-status flags.
    pub status_chain: TransitionMatrix,
    pub task_dynamics: TaskDynamics,
}

/// Health chain per maintenance-status flag, averaging the maintenance
/// model's health dynamics over a distribution of operating conditions.
pub fn marginal_health_chains(
    table: &DegradationTable,
    effect: &MaintenanceEffect,
    condition_weights: &[f64],
    levels: u8,
) -> Result<Vec<TransitionMatrix>> {
    let sum: f64 = condition_weights.iter().sum();
    if condition_weights.is_empty() || condition_weights.iter().any(|w| !(*w >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "condition weights must be a probability vector, got {condition_weights:?}"
        )));
    }
    let size = usize::from(levels) + 1;
    (0..INTENSITIES as u8)
        .map(|d| {
            let mut rows = vec![vec![0.0; size]; size];
            for (i, row) in rows.iter_mut().enumerate() {
                for (e, &w) in condition_weights.iter().enumerate() {
                    if w == 0.0 {
                        continue;
                    }
                    for (l, p) in health_transition(i as u8 + 1, e as u8 + 1, d, levels, table, effect)? {
                        row[usize::from(l) - 1] += w * p;
                    }
                }
            }
            TransitionMatrix::new(rows)
        })
        .collect()
}

impl AssignmentTables {
    pub fn validate(&self, config: &AssignmentConfig) -> Result<()> {
        if self.health_chains.len() != INTENSITIES {
            return Err(Error::Config(format!(
                "expected {INTENSITIES} health chains, got {}",
                self.health_chains.len()
            )));
        }
        for (d, chain) in self.health_chains.iter().enumerate() {
            chain.expect_size(&format!("health chain (d = {d})"), usize::from(config.failure_code()))?;
        }
        self.task_chain
            .expect_size("assignment task chain", usize::from(config.task_codes) + 1)?;
        self.status_chain.expect_size("status chain", INTENSITIES)
    }
}

#[derive(Debug, Clone)]
pub struct AssignmentModel {
    pub config: AssignmentConfig,
    pub tables: AssignmentTables,
    codec: MixedRadix,
    decisions: Vec<AssignmentDecision>,
}

impl AssignmentModel {
    pub fn new(config: AssignmentConfig, tables: AssignmentTables) -> Result<Self> {
        config.validate()?;
        tables.validate(&config)?;
        let codec = config.codec()?;
        let decisions = enumerate_assignments(config.machines, config.tasks)?;
        Ok(Self {
            config,
            tables,
            codec,
            decisions,
        })
    }

    pub fn state_count(&self) -> usize {
        self.codec.size()
    }

    pub fn decisions(&self) -> &[AssignmentDecision] {
        &self.decisions
    }

    pub fn encode(&self, state: &AssignmentState) -> Result<usize> {
        encode_assignment_state(state, &self.config)
    }

    pub fn decode(&self, index: usize) -> Result<AssignmentState> {
        Ok(assignment_state_from_digits(
            &self.codec.decode(index)?,
            self.config.machines,
        ))
    }

    pub fn reward(&self, state: &AssignmentState, decision: &AssignmentDecision) -> f64 {
        assignment_reward(state, decision, &self.config)
    }

    fn task_outcomes(&self, task: usize, code: u8, served: &[u8]) -> Result<Vec<(usize, f64)>> {
        if served.contains(&(task as u8 + 1)) {
            Ok(vec![(0, 1.0)])
        } else {
            self.tables.task_chain.outcomes(usize::from(code))
        }
    }

    fn factors(&self, state: &AssignmentState, decision: &AssignmentDecision) -> Result<Vec<Vec<(usize, f64)>>> {
        let t = &self.tables;
        let served = t.task_dynamics.served_tasks(&decision.0, &state.d_status);
        let mut factors = Vec::with_capacity(self.codec.radices().len());
        for (&lambda, &d) in state.lambda.iter().zip(&state.d_status) {
            factors.push(t.health_chains[usize::from(d)].outcomes(usize::from(lambda) - 1)?);
        }
        for (k, &code) in state.tau_bar.iter().enumerate() {
            factors.push(self.task_outcomes(k, code, &served)?);
        }
        for &d in &state.d_status {
            factors.push(t.status_chain.outcomes(usize::from(d))?);
        }
        Ok(factors)
    }

    pub fn successors(&self, state: &AssignmentState, decision: &AssignmentDecision) -> Result<Vec<(usize, f64)>> {
        state.validate(&self.config)?;
        self.check_decision(decision)?;
        Ok(factored_product(&self.codec, &self.factors(state, decision)?))
    }

    fn check_decision(&self, decision: &AssignmentDecision) -> Result<()> {
        check_codes("a", &decision.0, self.config.machines, 0, self.config.tasks as u8)?;
        if !decision.is_distinct() {
            return Err(Error::Config(format!(
                "assignment {} sends two machines to one task",
                decision.label()
            )));
        }
        Ok(())
    }

    /// Product of per-machine health, per-task and per-machine status factors.
    pub fn transition(
        &self,
        from: &AssignmentState,
        decision: &AssignmentDecision,
        to: &AssignmentState,
    ) -> Result<f64> {
        from.validate(&self.config)?;
        to.validate(&self.config)?;
        self.check_decision(decision)?;
        let t = &self.tables;
        let mut p = 1.0;
        for k in 0..self.config.machines {
            p *= t.health_chains[usize::from(from.d_status[k])]
                .prob(usize::from(from.lambda[k]) - 1, usize::from(to.lambda[k]) - 1)?;
        }
        let served = t.task_dynamics.served_tasks(&decision.0, &from.d_status);
        for (k, (&code, &next)) in from.tau_bar.iter().zip(&to.tau_bar).enumerate() {
            p *= self
                .task_outcomes(k, code, &served)?
                .iter()
                .find(|(c, _)| *c == usize::from(next))
                .map_or(0.0, |&(_, q)| q);
        }
        for (&d, &d_next) in from.d_status.iter().zip(&to.d_status) {
            p *= t.status_chain.prob(usize::from(d), usize::from(d_next))?;
        }
        Ok(p)
    }

    fn build_state(&self, index: usize, builder: &mut MdpBuilder) -> Result<()> {
        let state = self.decode(index)?;
        builder.begin_state();
        for (d, decision) in self.decisions.iter().enumerate() {
            let successors = factored_product(&self.codec, &self.factors(&state, decision)?);
            builder.add_decision(d, self.reward(&state, decision), &successors);
        }
        Ok(())
    }

    pub fn build(&self, discount: f64) -> Result<MdpModel> {
        build_parallel(self.state_count(), discount, |i, b| self.build_state(i, b))
    }
}
