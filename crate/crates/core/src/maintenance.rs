//! Machine-health and maintenance MDP.
//!
//! A state holds the operating condition `e ∈ 1..=M` and health code
//! `λ ∈ 1..=L+1` of every machine (`L+1` is failure) plus one priority flag
//! per task. A decision holds one maintenance intensity per machine:
//! 0 none, 1 non-intrusive, 2 partially intrusive, 3 fully intrusive.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::TransitionMatrix;
use crate::codec::{factored_product, MixedRadix};
use crate::degradation::DegradationTable;
use crate::error::{Error, Result};
use crate::mdp::{MdpBuilder, MdpModel};

/// Number of maintenance intensities per machine.
pub const INTENSITIES: usize = 4;

const BUILD_CHUNK: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaintenanceRewards {
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub r4: f64,
    pub r5: f64,
    pub r6: f64,
}

impl MaintenanceRewards {
    pub fn case_study() -> Self {
        Self {
            r1: 7.0,
            r2: 0.5,
            r3: 10.0,
            r4: 5.0,
            r5: 5.0,
            r6: 0.25,
        }
    }

    fn all(&self) -> [f64; 6] {
        [self.r1, self.r2, self.r3, self.r4, self.r5, self.r6]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaintenanceConfig {
    /// Machines `n`.
    pub machines: usize,
    /// Tasks `m`.
    pub tasks: usize,
    /// Operating conditions `M`.
    pub conditions: u8,
    /// Working health levels `L`.
    pub health_levels: u8,
    /// Size of the task-flag alphabet `{0, .., task_levels - 1}`.
    pub task_levels: u8,
    pub rewards: MaintenanceRewards,
    pub epoch_seconds: f64,
}

impl MaintenanceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.machines == 0 || self.conditions == 0 || self.health_levels == 0 || self.task_levels == 0 {
            return Err(Error::Config(
                "machines, operating conditions, health levels and task levels must be at least 1".into(),
            ));
        }
        if self.health_levels == u8::MAX {
            return Err(Error::Config("too many health levels".into()));
        }
        if let Some(r) = self.rewards.all().iter().find(|r| !(**r > 0.0 && r.is_finite())) {
            return Err(Error::Config(format!("reward constants must be positive, got {r}")));
        }
        if !(self.epoch_seconds > 0.0) {
            return Err(Error::Config(format!(
                "epoch_seconds must be positive, got {}",
                self.epoch_seconds
            )));
        }
        Ok(())
    }

    pub fn failure_code(&self) -> u8 {
        self.health_levels + 1
    }

    fn codec(&self) -> Result<MixedRadix> {
        let n = self.machines;
        let mut radices = vec![usize::from(self.conditions); n];
        radices.extend(std::iter::repeat_n(usize::from(self.failure_code()), n));
        radices.extend(std::iter::repeat_n(usize::from(self.task_levels), self.tasks));
        MixedRadix::new(radices)
    }
}

/// `M^n · (L+1)^n · T^m`, with `T` the task alphabet size.
pub fn state_count(config: &MaintenanceConfig) -> Result<usize> {
    config.validate()?;
    Ok(config.codec()?.size())
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaintenanceState {
    pub e: Vec<u8>,
    pub lambda: Vec<u8>,
    pub tau: Vec<u8>,
}

impl MaintenanceState {
    pub fn validate(&self, config: &MaintenanceConfig) -> Result<()> {
        check_codes("e", &self.e, config.machines, 1, config.conditions)?;
        check_codes("lambda", &self.lambda, config.machines, 1, config.failure_code())?;
        check_codes("tau", &self.tau, config.tasks, 0, config.task_levels - 1)
    }
}

pub(crate) fn check_codes(field: &str, codes: &[u8], len: usize, min: u8, max: u8) -> Result<()> {
    if codes.len() != len {
        return Err(Error::Length {
            field: field.into(),
            expected: len,
            actual: codes.len(),
        });
    }
    match codes.iter().find(|&&c| c < min || c > max) {
        Some(&c) => Err(Error::alphabet(field, c.into(), min.into(), max.into())),
        None => Ok(()),
    }
}

pub fn encode_state(state: &MaintenanceState, config: &MaintenanceConfig) -> Result<usize> {
    state.validate(config)?;
    let digits: Vec<usize> = state
        .e
        .iter()
        .chain(&state.lambda)
        .map(|&c| usize::from(c) - 1)
        .chain(state.tau.iter().map(|&t| usize::from(t)))
        .collect();
    config.codec()?.encode(&digits)
}

pub fn decode_state(index: usize, config: &MaintenanceConfig) -> Result<MaintenanceState> {
    let digits = config.codec()?.decode(index)?;
    Ok(state_from_digits(&digits, config.machines))
}

fn state_from_digits(digits: &[usize], n: usize) -> MaintenanceState {
    MaintenanceState {
        e: digits[..n].iter().map(|&d| d as u8 + 1).collect(),
        lambda: digits[n..2 * n].iter().map(|&d| d as u8 + 1).collect(),
        tau: digits[2 * n..].iter().map(|&d| d as u8).collect(),
    }
}

/// Per-machine maintenance intensities.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MaintenanceDecision(pub Vec<u8>);

impl MaintenanceDecision {
    pub fn label(&self) -> String {
        join_codes(&self.0)
    }

    pub fn validate(&self, config: &MaintenanceConfig) -> Result<()> {
        check_codes("d", &self.0, config.machines, 0, INTENSITIES as u8 - 1)
    }
}

pub(crate) fn join_codes(codes: &[u8]) -> String {
    codes.iter().map(u8::to_string).collect::<Vec<_>>().join(",")
}

/// All `4^n` decisions in lexicographic order; a decision's index is its
/// base-4 value.
pub fn enumerate_decisions(config: &MaintenanceConfig) -> Result<Vec<MaintenanceDecision>> {
    let codec = MixedRadix::new(vec![INTENSITIES; config.machines])?;
    (0..codec.size())
        .map(|i| {
            Ok(MaintenanceDecision(
                codec.decode(i)?.into_iter().map(|d| d as u8).collect(),
            ))
        })
        .collect()
}

pub fn decision_index(decision: &MaintenanceDecision, config: &MaintenanceConfig) -> Result<usize> {
    decision.validate(config)?;
    let digits: Vec<usize> = decision.0.iter().map(|&d| usize::from(d)).collect();
    MixedRadix::new(vec![INTENSITIES; config.machines])?.encode(&digits)
}

/// Three-term reward: health weighted by operating severity, maintenance
/// cost, and machines left running against active tasks.
pub fn maintenance_reward(state: &MaintenanceState, decision: &MaintenanceDecision, config: &MaintenanceConfig) -> f64 {
    let r = &config.rewards;
    let sum_e: f64 = state.e.iter().map(|&e| f64::from(e)).sum();
    let sum_lambda: f64 = state.lambda.iter().map(|&l| f64::from(l)).sum();
    let sum_d: f64 = decision.0.iter().map(|&d| f64::from(d)).sum();
    let idle_machines = decision.0.iter().filter(|&&d| d == 0).count() as f64;
    let active_tasks = state.tau.iter().filter(|&&t| t != 0).count() as f64;
    r.r1 * sum_e * (-r.r2 * sum_lambda).exp()
        + r.r3 * (-r.r4 * sum_d).exp()
        + r.r5 * (r.r6 * (idle_machines - active_tasks)).exp()
}

/// How each maintenance intensity acts on a machine's health.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaintenanceEffect {
    /// Multiplies the degradation probability under non-intrusive maintenance.
    pub suppress_factor_nonintrusive: f64,
    /// Probability that partially intrusive maintenance improves health by one level.
    pub improve_prob_partial: f64,
    /// Probability that fully intrusive maintenance restores health to 1.
    pub reset_prob_full: f64,
}

impl Default for MaintenanceEffect {
    fn default() -> Self {
        Self {
            suppress_factor_nonintrusive: 0.5,
            improve_prob_partial: 0.8,
            reset_prob_full: 1.0,
        }
    }
}

impl MaintenanceEffect {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("suppress_factor_nonintrusive", self.suppress_factor_nonintrusive),
            ("improve_prob_partial", self.improve_prob_partial),
            ("reset_prob_full", self.reset_prob_full),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

fn two_outcomes(stay: u8, other: u8, p_other: f64) -> Vec<(u8, f64)> {
    let mut out = Vec::with_capacity(2);
    if stay == other {
        out.push((stay, 1.0));
        return out;
    }
    if p_other < 1.0 {
        out.push((stay, 1.0 - p_other));
    }
    if p_other > 0.0 {
        out.push((other, p_other));
    }
    out.sort_by_key(|&(code, _)| code);
    out
}

/// Distribution of the next health code of one machine.
///
/// Without maintenance, or under non-intrusive maintenance, health degrades
/// by at most one level per epoch and failure (`levels + 1`) is absorbing.
/// Partially intrusive maintenance may improve health by one level and
/// fully intrusive maintenance may restore it to 1; neither degrades.
pub fn health_transition(
    lambda: u8,
    condition: u8,
    intensity: u8,
    levels: u8,
    table: &DegradationTable,
    effect: &MaintenanceEffect,
) -> Result<Vec<(u8, f64)>> {
    let failure = levels + 1;
    if lambda == 0 || lambda > failure {
        return Err(Error::alphabet("lambda", lambda.into(), 1, failure.into()));
    }
    Ok(match intensity {
        0 | 1 if lambda == failure => vec![(failure, 1.0)],
        0 => two_outcomes(lambda, lambda + 1, table.for_health(condition, lambda)?),
        1 => two_outcomes(
            lambda,
            lambda + 1,
            table.for_health(condition, lambda)? * effect.suppress_factor_nonintrusive,
        ),
        2 => two_outcomes(lambda, lambda.saturating_sub(1).max(1), effect.improve_prob_partial),
        3 => two_outcomes(lambda, 1, effect.reset_prob_full),
        other => return Err(Error::alphabet("d", other.into(), 0, 3)),
    })
}

/// Exogenous chains and health dynamics of the maintenance model.
#[derive(Debug, Clone, PartialEq)]
pub struct MaintenanceTables {
    /// `P(e' | e)` over codes `0..M` (condition minus one).
    pub condition_chain: TransitionMatrix,
    pub degradation: DegradationTable,
    pub effect: MaintenanceEffect,
    /// `P(τ' | τ)` over the task alphabet.
    pub task_chain: TransitionMatrix,
}

impl MaintenanceTables {
    pub fn validate(&self, config: &MaintenanceConfig) -> Result<()> {
        self.condition_chain
            .expect_size("condition chain", usize::from(config.conditions))?;
        self.task_chain
            .expect_size("maintenance task chain", usize::from(config.task_levels))?;
        self.degradation.require_complete(config.conditions)?;
        self.effect.validate()
    }
}

/// The assembled maintenance model: configuration, dynamics and codecs.
#[derive(Debug, Clone)]
pub struct MaintenanceModel {
    pub config: MaintenanceConfig,
    pub tables: MaintenanceTables,
    codec: MixedRadix,
    decisions: Vec<MaintenanceDecision>,
}

impl MaintenanceModel {
    pub fn new(config: MaintenanceConfig, tables: MaintenanceTables) -> Result<Self> {
        config.validate()?;
        tables.validate(&config)?;
        let codec = config.codec()?;
        let decisions = enumerate_decisions(&config)?;
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

    pub fn decisions(&self) -> &[MaintenanceDecision] {
        &self.decisions
    }

    pub fn encode(&self, state: &MaintenanceState) -> Result<usize> {
        encode_state(state, &self.config)
    }

    pub fn decode(&self, index: usize) -> Result<MaintenanceState> {
        Ok(state_from_digits(&self.codec.decode(index)?, self.config.machines))
    }

    pub fn reward(&self, state: &MaintenanceState, decision: &MaintenanceDecision) -> f64 {
        maintenance_reward(state, decision, &self.config)
    }

    /// Per-component next-code distributions in codec digit order.
    fn factors(&self, state: &MaintenanceState, decision: &MaintenanceDecision) -> Result<Vec<Vec<(usize, f64)>>> {
        let t = &self.tables;
        let mut factors = Vec::with_capacity(self.codec.radices().len());
        for &e in &state.e {
            factors.push(t.condition_chain.outcomes(usize::from(e) - 1)?);
        }
        for (k, &lambda) in state.lambda.iter().enumerate() {
            let dist = health_transition(
                lambda,
                state.e[k],
                decision.0[k],
                self.config.health_levels,
                &t.degradation,
                &t.effect,
            )?;
            factors.push(dist.into_iter().map(|(l, p)| (usize::from(l) - 1, p)).collect());
        }
        for &tau in &state.tau {
            factors.push(t.task_chain.outcomes(usize::from(tau))?);
        }
        Ok(factors)
    }

    /// Sparse successor distribution, ascending by state index.
    pub fn successors(&self, state: &MaintenanceState, decision: &MaintenanceDecision) -> Result<Vec<(usize, f64)>> {
        state.validate(&self.config)?;
        decision.validate(&self.config)?;
        Ok(factored_product(&self.codec, &self.factors(state, decision)?))
    }

    /// Probability of moving `from → to` under `decision`, as a product of
    /// per-machine condition and health factors and per-task factors.
    pub fn transition(
        &self,
        from: &MaintenanceState,
        decision: &MaintenanceDecision,
        to: &MaintenanceState,
    ) -> Result<f64> {
        from.validate(&self.config)?;
        to.validate(&self.config)?;
        decision.validate(&self.config)?;
        let t = &self.tables;
        let mut p = 1.0;
        for (&e, &e_next) in from.e.iter().zip(&to.e) {
            p *= t.condition_chain.prob(usize::from(e) - 1, usize::from(e_next) - 1)?;
        }
        for k in 0..self.config.machines {
            let dist = health_transition(
                from.lambda[k],
                from.e[k],
                decision.0[k],
                self.config.health_levels,
                &t.degradation,
                &t.effect,
            )?;
            p *= dist.iter().find(|(l, _)| *l == to.lambda[k]).map_or(0.0, |&(_, q)| q);
        }
        for (&tau, &tau_next) in from.tau.iter().zip(&to.tau) {
            p *= t.task_chain.prob(usize::from(tau), usize::from(tau_next))?;
        }
        Ok(p)
    }

    fn build_state(&self, index: usize, builder: &mut MdpBuilder) -> Result<()> {
        let state = self.decode(index)?;
        let mut factors = self.factors(&state, &self.decisions[0])?;
        let n = self.config.machines;
        builder.begin_state();
        for (d, decision) in self.decisions.iter().enumerate() {
            for k in 0..n {
                let dist = health_transition(
                    state.lambda[k],
                    state.e[k],
                    decision.0[k],
                    self.config.health_levels,
                    &self.tables.degradation,
                    &self.tables.effect,
                )?;
                factors[n + k] = dist.into_iter().map(|(l, p)| (usize::from(l) - 1, p)).collect();
            }
            let successors = factored_product(&self.codec, &factors);
            builder.add_decision(d, self.reward(&state, decision), &successors);
        }
        Ok(())
    }

    /// Materializes the full sparse MDP.
    pub fn build(&self, discount: f64) -> Result<MdpModel> {
        build_parallel(self.state_count(), discount, |i, b| self.build_state(i, b))
    }
}

/// Builds state rows in parallel chunks and concatenates them in order.
pub(crate) fn build_parallel<F>(num_states: usize, discount: f64, build_state: F) -> Result<MdpModel>
where
    F: Fn(usize, &mut MdpBuilder) -> Result<()> + Sync,
{
    let chunks: Vec<MdpBuilder> = (0..num_states.div_ceil(BUILD_CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut b = MdpBuilder::new();
            for i in c * BUILD_CHUNK..((c + 1) * BUILD_CHUNK).min(num_states) {
                build_state(i, &mut b)?;
            }
            Ok(b)
        })
        .collect::<Result<_>>()?;
    let mut builder = MdpBuilder::new();
    for chunk in chunks {
        builder.append(chunk);
    }
    builder.build(discount)
}
