//! Closed-loop execution of the two solved policies.
//!
//! Each epoch the assignment policy decides first (on the bridged
//! assignment state), then the maintenance policy. The plant advances on the
//! maintenance model's successor distribution, after which the coupling
//! rules apply: tasks served by available machines complete, and the
//! maintenance decision becomes next epoch's maintenance status.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assignment::{AssignmentDecision, AssignmentModel, AssignmentState};
use crate::error::{Error, Result};
use crate::maintenance::{check_codes, MaintenanceDecision, MaintenanceModel, MaintenanceState, INTENSITIES};
use crate::mdp::Policy;

/// Full plant state: the maintenance state plus maintenance-status flags.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimState {
    pub e: Vec<u8>,
    pub lambda: Vec<u8>,
    pub d_status: Vec<u8>,
    pub tau: Vec<u8>,
}

impl SimState {
    pub fn maintenance_state(&self) -> MaintenanceState {
        MaintenanceState {
            e: self.e.clone(),
            lambda: self.lambda.clone(),
            tau: self.tau.clone(),
        }
    }

    pub fn validate(&self, model: &MaintenanceModel) -> Result<()> {
        self.maintenance_state().validate(&model.config)?;
        check_codes(
            "d_status",
            &self.d_status,
            model.config.machines,
            0,
            INTENSITIES as u8 - 1,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Intervention {
    /// The override replaces the state produced by this epoch's decisions.
    pub at_epoch: usize,
    pub state: SimState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stepping {
    MaxLikelihood,
    Sampled { seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryConfig {
    pub initial: SimState,
    pub epochs: usize,
    pub interventions: Vec<Intervention>,
    pub stepping: Stepping,
}

impl TrajectoryConfig {
    pub fn validate(&self, model: &MaintenanceModel) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("trajectory needs at least one epoch".into()));
        }
        self.initial.validate(model)?;
        for iv in &self.interventions {
            if iv.at_epoch == 0 || iv.at_epoch > self.epochs {
                return Err(Error::Config(format!(
                    "intervention at epoch {} outside 1..={}",
                    iv.at_epoch, self.epochs
                )));
            }
            iv.state.validate(model)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingRules {
    /// A machine whose maintenance status is at least this is unavailable.
    pub unavailable_intensity: u8,
    /// Tasks assigned to available machines complete by the next epoch.
    pub complete_assigned_tasks: bool,
}

impl Default for CouplingRules {
    fn default() -> Self {
        Self {
            unavailable_intensity: 3,
            complete_assigned_tasks: true,
        }
    }
}

impl CouplingRules {
    pub fn available(&self, d_status: u8) -> bool {
        d_status < self.unavailable_intensity
    }
}

/// Maps maintenance task flags to assignment task codes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaskMap(pub Vec<u8>);

impl TaskMap {
    pub fn identity(levels: u8) -> Self {
        Self((0..levels).collect())
    }

    pub fn map(&self, tau: u8) -> Result<u8> {
        self.0
            .get(usize::from(tau))
            .copied()
            .ok_or_else(|| Error::Config(format!("task map has no entry for flag {tau}")))
    }
}

/// Assignment-model view of the plant: health copied, task flags mapped,
/// maintenance status taken from the last maintenance decision.
pub fn bridge_states(state: &MaintenanceState, last_decision: &[u8], tau_map: &TaskMap) -> Result<AssignmentState> {
    Ok(AssignmentState {
        lambda: state.lambda.clone(),
        tau_bar: state.tau.iter().map(|&t| tau_map.map(t)).collect::<Result<_>>()?,
        d_status: last_decision.to_vec(),
    })
}

/// Most probable successor; the lowest index wins ties.
pub fn max_likelihood_step(distribution: &[(usize, f64)]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &(s, p) in distribution {
        match best {
            Some((bs, bp)) if p < bp || (p == bp && s >= bs) => {}
            _ => best = Some((s, p)),
        }
    }
    best.map(|(s, _)| s).ok_or(Error::EmptyDistribution)
}

/// Inverse-CDF draw over the distribution in ascending index order.
pub fn sampled_step<R: Rng + ?Sized>(distribution: &[(usize, f64)], rng: &mut R) -> Result<usize> {
    if distribution.is_empty() {
        return Err(Error::EmptyDistribution);
    }
    let mut sorted = distribution.to_vec();
    sorted.sort_by_key(|&(s, _)| s);
    if let Some(&(s, p)) = sorted.iter().find(|(_, p)| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::MalformedDistribution(format!(
            "probability {p} for successor {s}"
        )));
    }
    let total: f64 = sorted.iter().map(|(_, p)| p).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::MalformedDistribution(format!("probabilities sum to {total}")));
    }
    let u: f64 = rng.random();
    let mut cumulative = 0.0;
    for &(s, p) in &sorted {
        cumulative += p;
        if u < cumulative {
            return Ok(s);
        }
    }
    Ok(sorted.iter().rev().find(|(_, p)| *p > 0.0).unwrap_or(&sorted[0]).0)
}

/// Returns the override carried by `intervention`, checked against the
/// model alphabets.
pub fn apply_intervention(
    _state: &SimState,
    intervention: &Intervention,
    model: &MaintenanceModel,
) -> Result<SimState> {
    intervention.state.validate(model)?;
    Ok(intervention.state.clone())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub state: SimState,
    pub assignment_state: AssignmentState,
    pub assignment: AssignmentDecision,
    pub maintenance: MaintenanceDecision,
    /// An intervention replaced the state that followed this epoch.
    pub intervention: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub records: Vec<EpochRecord>,
    /// State reached after the last decision.
    pub final_state: SimState,
}

impl TrajectoryLog {
    /// All states in order, including the final one.
    pub fn states(&self) -> impl Iterator<Item = &SimState> {
        self.records
            .iter()
            .map(|r| &r.state)
            .chain(std::iter::once(&self.final_state))
    }

    /// CSV with one row per epoch and a last row for the final state whose
    /// decision columns are empty.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let n = self.final_state.e.len();
        let m = self.final_state.tau.len();
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["epoch".to_string()];
        for (prefix, count) in [("e", n), ("lambda", n), ("tau", m), ("dstatus", n), ("a", n), ("d", n)] {
            header.extend((1..=count).map(|i| format!("{prefix}_{i}")));
        }
        header.push("intervention".into());
        w.write_record(&header)?;
        let state_fields = |s: &SimState| -> Vec<String> {
            s.e.iter()
                .chain(&s.lambda)
                .chain(&s.tau)
                .chain(&s.d_status)
                .map(u8::to_string)
                .collect()
        };
        for r in &self.records {
            let mut row = vec![r.epoch.to_string()];
            row.extend(state_fields(&r.state));
            row.extend(r.assignment.0.iter().chain(&r.maintenance.0).map(u8::to_string));
            row.push(u8::from(r.intervention).to_string());
            w.write_record(&row)?;
        }
        let mut row = vec![(self.records.len() + 1).to_string()];
        row.extend(state_fields(&self.final_state));
        row.extend(std::iter::repeat_n(String::new(), 2 * n));
        row.push("0".into());
        w.write_record(&row)?;
        w.flush().map_err(|e| Error::io("trajectory", e))?;
        Ok(())
    }
}

/// Policies and models needed to run a trajectory.
pub struct ClosedLoop<'a> {
    pub maintenance: &'a MaintenanceModel,
    pub maintenance_policy: &'a Policy,
    pub assignment: &'a AssignmentModel,
    pub assignment_policy: &'a Policy,
    pub coupling: CouplingRules,
    pub task_map: &'a TaskMap,
}

impl ClosedLoop<'_> {
    fn check_policies(&self) -> Result<()> {
        for (policy, states) in [
            (self.maintenance_policy, self.maintenance.state_count()),
            (self.assignment_policy, self.assignment.state_count()),
        ] {
            if policy.len() != states {
                return Err(Error::PolicyLength {
                    policy: policy.len(),
                    model: states,
                });
            }
        }
        Ok(())
    }

    fn lookup<'d, T>(policy: &Policy, state: usize, decisions: &'d [T]) -> Result<&'d T> {
        let d = policy.decision(state).ok_or(Error::StateOutOfRange {
            index: state,
            num_states: policy.len(),
        })?;
        decisions.get(d).ok_or(Error::UnknownDecision { state, decision: d })
    }

    /// Bridged assignment state and the decisions both policies take in
    /// `state`, assignment first.
    pub fn decide(&self, state: &SimState) -> Result<(AssignmentState, AssignmentDecision, MaintenanceDecision)> {
        let mstate = state.maintenance_state();
        let astate = bridge_states(&mstate, &state.d_status, self.task_map)?;
        let a = Self::lookup(
            self.assignment_policy,
            self.assignment.encode(&astate)?,
            self.assignment.decisions(),
        )?;
        let d = Self::lookup(
            self.maintenance_policy,
            self.maintenance.encode(&mstate)?,
            self.maintenance.decisions(),
        )?;
        Ok((astate, a.clone(), d.clone()))
    }

    pub fn run(&self, config: &TrajectoryConfig) -> Result<TrajectoryLog> {
        config.validate(self.maintenance)?;
        self.check_policies()?;
        let mut rng = match config.stepping {
            Stepping::Sampled { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
            Stepping::MaxLikelihood => None,
        };
        let mut state = config.initial.clone();
        let mut records = Vec::with_capacity(config.epochs);
        for epoch in 1..=config.epochs {
            let (assignment_state, assignment, maintenance) = self.decide(&state)?;

            let successors = self.maintenance.successors(&state.maintenance_state(), &maintenance)?;
            let next_index = match rng.as_mut() {
                Some(rng) => sampled_step(&successors, rng)?,
                None => max_likelihood_step(&successors)?,
            };
            let next = self.maintenance.decode(next_index)?;
            let mut next = SimState {
                e: next.e,
                lambda: next.lambda,
                d_status: maintenance.0.clone(),
                tau: next.tau,
            };
            if self.coupling.complete_assigned_tasks {
                for (&task, &status) in assignment.0.iter().zip(&state.d_status) {
                    if task != 0 && self.coupling.available(status) {
                        next.tau[usize::from(task) - 1] = 0;
                    }
                }
            }

            let mut intervened = false;
            for iv in config.interventions.iter().filter(|iv| iv.at_epoch == epoch) {
                next = apply_intervention(&next, iv, self.maintenance)?;
                intervened = true;
            }
            records.push(EpochRecord {
                epoch,
                state,
                assignment_state,
                assignment,
                maintenance,
                intervention: intervened,
            });
            state = next;
        }
        Ok(TrajectoryLog {
            records,
            final_state: state,
        })
    }
}

pub fn run_closed_loop(closed_loop: &ClosedLoop<'_>, config: &TrajectoryConfig) -> Result<TrajectoryLog> {
    closed_loop.run(config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn bridge_copies_and_maps() {
        let s = MaintenanceState {
            e: vec![3, 3],
            lambda: vec![3, 3],
            tau: vec![1, 2, 2],
        };
        let a = bridge_states(&s, &[0, 0], &TaskMap::identity(4)).unwrap();
        assert_eq!(
            a,
            AssignmentState {
                lambda: vec![3, 3],
                tau_bar: vec![1, 2, 2],
                d_status: vec![0, 0]
            }
        );
        let idle = MaintenanceState {
            tau: vec![0, 0, 0],
            ..s.clone()
        };
        assert_eq!(
            bridge_states(&idle, &[0, 0], &TaskMap::identity(4)).unwrap().tau_bar,
            vec![0, 0, 0]
        );
        let collapse = TaskMap(vec![0, 1, 1, 2]);
        assert_eq!(bridge_states(&s, &[3, 0], &collapse).unwrap().tau_bar, vec![1, 1, 1]);
        assert!(bridge_states(&s, &[0, 0], &TaskMap(vec![0, 1])).is_err());
    }

    #[test]
    fn max_likelihood_rules() {
        assert_eq!(max_likelihood_step(&[(4, 0.8), (9, 0.2)]).unwrap(), 4);
        assert_eq!(max_likelihood_step(&[(9, 0.5), (4, 0.5)]).unwrap(), 4);
        assert_eq!(max_likelihood_step(&[(2, 0.2), (7, 0.8)]).unwrap(), 7);
        assert!(matches!(max_likelihood_step(&[]), Err(Error::EmptyDistribution)));
    }

    #[test]
    fn sampled_point_mass_and_determinism() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            assert_eq!(sampled_step(&[(5, 1.0)], &mut rng).unwrap(), 5);
        }
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50)
                .map(|_| sampled_step(&[(1, 0.3), (2, 0.7)], &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(11), draw(11));
    }

    #[test]
    fn sampled_frequency() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let hits = (0..10_000)
            .filter(|_| sampled_step(&[(1, 0.8), (2, 0.2)], &mut rng).unwrap() == 1)
            .count();
        let freq = hits as f64 / 10_000.0;
        assert!((freq - 0.8).abs() < 0.02, "{freq}");
    }

    #[test]
    fn sampled_rejects_malformed() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(sampled_step(&[(1, 0.5), (2, 0.4)], &mut rng).is_err());
        assert!(sampled_step(&[(1, 1.5), (2, -0.5)], &mut rng).is_err());
        assert!(sampled_step(&[], &mut rng).is_err());
    }
}
