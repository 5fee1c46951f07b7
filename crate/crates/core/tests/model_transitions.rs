//! Built models compared entry by entry against joint transition
//! probabilities written out from the model definitions.

use maintplan::assignment::{
    enumerate_assignments, marginal_health_chains, AssignmentConfig, AssignmentModel, AssignmentRewards,
    AssignmentState, AssignmentTables, TaskDynamics,
};
use maintplan::chain::TransitionMatrix;
use maintplan::degradation::DegradationTable;
use maintplan::maintenance::{
    enumerate_decisions, MaintenanceConfig, MaintenanceEffect, MaintenanceModel, MaintenanceRewards, MaintenanceState,
    MaintenanceTables,
};
use maintplan::mdp::{validate_model, MdpModel};

const NEW: [f64; 2] = [0.1, 0.3];
const OLD: [f64; 2] = [0.25, 0.6];
const LEVELS: u8 = 4;

/// Probability of health `to` from `from` under condition `e` and
/// intensity `d`; classes split at level 3.
fn health(from: u8, to: u8, e: u8, d: u8) -> f64 {
    let failure = LEVELS + 1;
    let p = if from <= 3 {
        NEW[usize::from(e) - 1]
    } else {
        OLD[usize::from(e) - 1]
    };
    let step = |p: f64, next: u8| match to {
        t if t == from && next == from => 1.0,
        t if t == from => 1.0 - p,
        t if t == next => p,
        _ => 0.0,
    };
    match d {
        0 | 1 if from == failure => f64::from(u8::from(to == failure)),
        0 => step(p, from + 1),
        1 => step(p * 0.5, from + 1),
        2 => step(0.8, from.saturating_sub(1).max(1)),
        3 => step(1.0, 1),
        _ => unreachable!(),
    }
}

fn table() -> DegradationTable {
    DegradationTable::from_columns(&NEW, &OLD).unwrap()
}

fn condition_chain() -> TransitionMatrix {
    TransitionMatrix::new(vec![vec![0.7, 0.3], vec![0.4, 0.6]]).unwrap()
}

fn task_chain() -> TransitionMatrix {
    TransitionMatrix::new(vec![vec![0.9, 0.1, 0.0], vec![0.3, 0.6, 0.1], vec![0.2, 0.0, 0.8]]).unwrap()
}

fn assert_rows_match(mdp: &MdpModel, mut expected: impl FnMut(usize, usize, usize) -> f64) {
    let n = mdp.num_states();
    for s in 0..n {
        for row in mdp.rows(s) {
            let mut dense = vec![0.0; n];
            for (t, p) in row.distribution() {
                dense[t] = p;
            }
            for (t, &p) in dense.iter().enumerate() {
                let q = expected(s, row.decision, t);
                assert!(
                    (p - q).abs() <= 1e-12,
                    "state {s} decision {} -> {t}: {p} vs {q}",
                    row.decision
                );
            }
        }
    }
}

#[test]
fn maintenance_joint_transitions() {
    let config = MaintenanceConfig {
        machines: 2,
        tasks: 1,
        conditions: 2,
        health_levels: LEVELS,
        task_levels: 3,
        rewards: MaintenanceRewards::case_study(),
        epoch_seconds: 10.0,
    };
    let model = MaintenanceModel::new(
        config.clone(),
        MaintenanceTables {
            condition_chain: condition_chain(),
            degradation: table(),
            effect: MaintenanceEffect::default(),
            task_chain: task_chain(),
        },
    )
    .unwrap();
    assert_eq!(model.state_count(), 2 * 2 * 5 * 5 * 3);
    let decisions = enumerate_decisions(&config).unwrap();
    let states: Vec<MaintenanceState> = (0..model.state_count()).map(|i| model.decode(i).unwrap()).collect();
    let mdp = model.build(0.9).unwrap();
    assert!(validate_model(&mdp).is_empty());

    let conditions = condition_chain();
    let tasks = task_chain();
    assert_rows_match(&mdp, |s, d, t| {
        let (a, b, dec) = (&states[s], &states[t], &decisions[d].0);
        let mut p = 1.0;
        for (k, &d) in dec.iter().enumerate() {
            p *= conditions.rows()[usize::from(a.e[k]) - 1][usize::from(b.e[k]) - 1];
            p *= health(a.lambda[k], b.lambda[k], a.e[k], d);
        }
        p * tasks.rows()[usize::from(a.tau[0])][usize::from(b.tau[0])]
    });

    for (s, state) in states.iter().enumerate() {
        for (d, decision) in decisions.iter().enumerate() {
            for (t, to) in states.iter().enumerate() {
                let direct = model.transition(state, decision, to).unwrap();
                let built = mdp
                    .decision_row(s, d)
                    .unwrap()
                    .distribution()
                    .find(|&(x, _)| x == t)
                    .map_or(0.0, |(_, p)| p);
                assert!((direct - built).abs() <= 1e-12);
            }
        }
    }
}

fn assignment_model(dynamics: TaskDynamics) -> (AssignmentModel, [f64; 2]) {
    let weights = [0.4, 0.6];
    let config = AssignmentConfig {
        machines: 2,
        tasks: 1,
        health_levels: LEVELS,
        task_codes: 2,
        rewards: AssignmentRewards::case_study(),
    };
    let status = TransitionMatrix::new(vec![
        vec![1.0, 0.0, 0.0, 0.0],
        vec![0.5, 0.5, 0.0, 0.0],
        vec![1.0, 0.0, 0.0, 0.0],
        vec![0.2, 0.0, 0.0, 0.8],
    ])
    .unwrap();
    let model = AssignmentModel::new(
        config,
        AssignmentTables {
            health_chains: marginal_health_chains(&table(), &MaintenanceEffect::default(), &weights, LEVELS).unwrap(),
            task_chain: task_chain(),
            status_chain: status,
            task_dynamics: dynamics,
        },
    )
    .unwrap();
    (model, weights)
}

#[test]
fn assignment_joint_transitions() {
    for dynamics in [
        TaskDynamics::Exogenous,
        TaskDynamics::CompleteWhenServed {
            unavailable_intensity: 3,
        },
    ] {
        let (model, weights) = assignment_model(dynamics);
        assert_eq!(model.state_count(), 5 * 5 * 3 * 4 * 4);
        let decisions = enumerate_assignments(2, 1).unwrap();
        assert_eq!(decisions.len(), 3);
        let states: Vec<AssignmentState> = (0..model.state_count()).map(|i| model.decode(i).unwrap()).collect();
        let mdp = model.build(0.9).unwrap();
        assert!(validate_model(&mdp).is_empty());
        let tasks = task_chain();
        let status = model.tables.status_chain.clone();

        assert_rows_match(&mdp, |s, d, t| {
            let (a, b, dec) = (&states[s], &states[t], &decisions[d].0);
            let mut p = 1.0;
            for k in 0..2 {
                p *= (1..=2u8)
                    .map(|e| weights[usize::from(e) - 1] * health(a.lambda[k], b.lambda[k], e, a.d_status[k]))
                    .sum::<f64>();
                p *= status.rows()[usize::from(a.d_status[k])][usize::from(b.d_status[k])];
            }
            let served = (0..2).any(|k| dec[k] == 1 && a.d_status[k] < 3);
            let task = if matches!(dynamics, TaskDynamics::CompleteWhenServed { .. }) && served {
                f64::from(u8::from(b.tau_bar[0] == 0))
            } else {
                tasks.rows()[usize::from(a.tau_bar[0])][usize::from(b.tau_bar[0])]
            };
            p * task
        });
    }
}

#[test]
fn unavailable_machine_does_not_serve() {
    let (model, _) = assignment_model(TaskDynamics::CompleteWhenServed {
        unavailable_intensity: 3,
    });
    let from = AssignmentState {
        lambda: vec![1, 1],
        tau_bar: vec![2],
        d_status: vec![3, 0],
    };
    let to_done = AssignmentState {
        lambda: vec![1, 1],
        tau_bar: vec![0],
        d_status: vec![0, 0],
    };
    let by_down = maintplan::assignment::AssignmentDecision(vec![1, 0]);
    let by_up = maintplan::assignment::AssignmentDecision(vec![0, 1]);
    let p_down = model.transition(&from, &by_down, &to_done).unwrap();
    let p_up = model.transition(&from, &by_up, &to_done).unwrap();
    assert!(p_up > p_down);
    // Served: the task term is 1; unserved: the chain's 0.2.
    assert!((p_down / p_up - 0.2).abs() < 1e-12);
}
