//! Finite discounted MDPs with sparse transitions, solved by synchronous
//! (Jacobi) value iteration.
//!
//! Rows are stored in a compressed layout: every state owns a contiguous
//! run of decision rows, and every row owns a contiguous run of successors
//! kept in ascending state order. Backups sum successors in that order, so
//! results are bit-reproducible regardless of thread count.

use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Default sweep budget for [`value_iteration`].
pub const DEFAULT_MAX_ITERATIONS: usize = 10_000;

const STOCHASTIC_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct MdpModel {
    num_states: usize,
    discount: f64,
    state_rows: Vec<usize>,
    row_decision: Vec<usize>,
    row_reward: Vec<f64>,
    row_successors: Vec<usize>,
    succ_state: Vec<u32>,
    succ_prob: Vec<f64>,
}

/// One (state, decision) row of a model.
#[derive(Debug, Clone, Copy)]
pub struct DecisionRow<'a> {
    pub decision: usize,
    pub reward: f64,
    pub successors: &'a [u32],
    pub probabilities: &'a [f64],
}

impl DecisionRow<'_> {
    /// `Σ p(s') V(s')` summed in ascending successor order.
    #[inline]
    pub fn expectation(&self, values: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (&s, &p) in self.successors.iter().zip(self.probabilities) {
            acc += p * values[s as usize];
        }
        acc
    }

    pub fn distribution(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.successors
            .iter()
            .zip(self.probabilities)
            .map(|(&s, &p)| (s as usize, p))
    }
}

impl MdpModel {
    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    /// Total number of (state, decision) rows.
    pub fn num_rows(&self) -> usize {
        self.row_decision.len()
    }

    /// Total number of stored successor entries.
    pub fn num_transitions(&self) -> usize {
        self.succ_state.len()
    }

    fn row(&self, r: usize) -> DecisionRow<'_> {
        let span = self.row_successors[r]..self.row_successors[r + 1];
        DecisionRow {
            decision: self.row_decision[r],
            reward: self.row_reward[r],
            successors: &self.succ_state[span.clone()],
            probabilities: &self.succ_prob[span],
        }
    }

    pub fn rows(&self, state: usize) -> impl ExactSizeIterator<Item = DecisionRow<'_>> + '_ {
        (self.state_rows[state]..self.state_rows[state + 1]).map(move |r| self.row(r))
    }

    /// Decision indices available in `state`, in storage order.
    pub fn decisions(&self, state: usize) -> impl Iterator<Item = usize> + '_ {
        self.row_decision[self.state_rows[state]..self.state_rows[state + 1]]
            .iter()
            .copied()
    }

    pub fn decision_row(&self, state: usize, decision: usize) -> Result<DecisionRow<'_>> {
        self.check_state(state)?;
        self.rows(state)
            .find(|row| row.decision == decision)
            .ok_or(Error::UnknownDecision { state, decision })
    }

    fn check_state(&self, state: usize) -> Result<()> {
        if state >= self.num_states {
            Err(Error::StateOutOfRange {
                index: state,
                num_states: self.num_states,
            })
        } else {
            Ok(())
        }
    }
}

/// Incremental construction of an [`MdpModel`], one state at a time.
///
/// Fragments built independently (e.g. on separate threads over disjoint
/// state ranges) are concatenated in order with [`MdpBuilder::append`].
#[derive(Debug, Clone, Default)]
pub struct MdpBuilder {
    state_rows: Vec<usize>,
    row_decision: Vec<usize>,
    row_reward: Vec<f64>,
    row_successors: Vec<usize>,
    succ_state: Vec<u32>,
    succ_prob: Vec<f64>,
}

impl MdpBuilder {
    pub fn new() -> Self {
        Self {
            state_rows: vec![0],
            row_successors: vec![0],
            ..Default::default()
        }
    }

    /// Opens the next state; subsequent decisions attach to it.
    pub fn begin_state(&mut self) {
        self.state_rows.push(self.row_decision.len());
    }

    pub fn num_states(&self) -> usize {
        self.state_rows.len() - 1
    }

    /// Adds a decision row to the most recently opened state.
    ///
    /// Successors are stored as given; callers that need reproducible
    /// backups pass them in ascending order. Indices that do not fit the
    /// storage width are saturated and later reported by [`validate_model`].
    pub fn add_decision(&mut self, decision: usize, reward: f64, successors: &[(usize, f64)]) {
        assert!(self.num_states() > 0, "add_decision before begin_state");
        for &(s, p) in successors {
            self.succ_state.push(u32::try_from(s).unwrap_or(u32::MAX));
            self.succ_prob.push(p);
        }
        self.row_decision.push(decision);
        self.row_reward.push(reward);
        self.row_successors.push(self.succ_state.len());
        *self.state_rows.last_mut().unwrap() = self.row_decision.len();
    }

    pub fn append(&mut self, other: MdpBuilder) {
        let row_base = self.row_decision.len();
        let succ_base = self.succ_state.len();
        self.state_rows
            .extend(other.state_rows[1..].iter().map(|r| r + row_base));
        self.row_successors
            .extend(other.row_successors[1..].iter().map(|s| s + succ_base));
        self.row_decision.extend(other.row_decision);
        self.row_reward.extend(other.row_reward);
        self.succ_state.extend(other.succ_state);
        self.succ_prob.extend(other.succ_prob);
    }

    pub fn build(self, discount: f64) -> Result<MdpModel> {
        let num_states = self.num_states();
        if num_states > u32::MAX as usize {
            return Err(Error::Overflow(format!(
                "{num_states} states exceed the 32-bit successor index"
            )));
        }
        Ok(MdpModel {
            num_states,
            discount,
            state_rows: self.state_rows,
            row_decision: self.row_decision,
            row_reward: self.row_reward,
            row_successors: self.row_successors,
            succ_state: self.succ_state,
            succ_prob: self.succ_prob,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction(pub Vec<f64>);

impl ValueFunction {
    pub fn zeros(num_states: usize) -> Self {
        Self(vec![0.0; num_states])
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

    /// Largest componentwise absolute difference.
    pub fn sup_distance(&self, other: &ValueFunction) -> f64 {
        sup_distance(&self.0, &other.0)
    }
}

fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Decision index chosen in every state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Policy(pub Vec<usize>);

impl Policy {
    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn decision(&self, state: usize) -> Option<usize> {
        self.0.get(state).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    /// Sup-norm of the last successive value difference.
    pub final_residual: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ViolationKind {
    DiscountOutOfRange(f64),
    NoDecisions,
    DuplicateDecision,
    RowSum(f64),
    NegativeProbability(f64),
    NonFiniteProbability,
    NonPositiveReward(f64),
    SuccessorOutOfRange(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub state: Option<usize>,
    pub decision: Option<usize>,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.state, self.decision) {
            (Some(s), Some(d)) => write!(f, "state {s}, decision {d}: ")?,
            (Some(s), None) => write!(f, "state {s}: ")?,
            _ => write!(f, "model: ")?,
        }
        match &self.kind {
            ViolationKind::DiscountOutOfRange(g) => write!(f, "discount {g} not in [0, 1)"),
            ViolationKind::NoDecisions => write!(f, "no decisions"),
            ViolationKind::DuplicateDecision => write!(f, "decision listed more than once"),
            ViolationKind::RowSum(s) => write!(f, "transition row sums to {s}"),
            ViolationKind::NegativeProbability(p) => write!(f, "negative probability {p}"),
            ViolationKind::NonFiniteProbability => write!(f, "non-finite probability"),
            ViolationKind::NonPositiveReward(r) => write!(f, "reward {r} is not strictly positive"),
            ViolationKind::SuccessorOutOfRange(s) => write!(f, "successor {s} out of range"),
        }
    }
}

/// Checks every structural invariant; an empty result means the model is
/// solvable.
pub fn validate_model(model: &MdpModel) -> Vec<Violation> {
    let mut out = Vec::new();
    let gamma = model.discount;
    if !(0.0..1.0).contains(&gamma) {
        out.push(Violation {
            state: None,
            decision: None,
            kind: ViolationKind::DiscountOutOfRange(gamma),
        });
    }
    for state in 0..model.num_states {
        let rows = model.rows(state);
        if rows.len() == 0 {
            out.push(Violation {
                state: Some(state),
                decision: None,
                kind: ViolationKind::NoDecisions,
            });
            continue;
        }
        let mut seen: Vec<usize> = Vec::with_capacity(rows.len());
        for row in rows {
            let at = |kind| Violation {
                state: Some(state),
                decision: Some(row.decision),
                kind,
            };
            if seen.contains(&row.decision) {
                out.push(at(ViolationKind::DuplicateDecision));
            }
            seen.push(row.decision);
            if !(row.reward > 0.0 && row.reward.is_finite()) {
                out.push(at(ViolationKind::NonPositiveReward(row.reward)));
            }
            let mut sum = 0.0;
            let mut finite = true;
            for (s, p) in row.distribution() {
                if s >= model.num_states {
                    out.push(at(ViolationKind::SuccessorOutOfRange(s)));
                }
                if !p.is_finite() {
                    finite = false;
                } else if p < 0.0 {
                    out.push(at(ViolationKind::NegativeProbability(p)));
                }
                sum += p;
            }
            if !finite {
                out.push(at(ViolationKind::NonFiniteProbability));
            } else if (sum - 1.0).abs() > STOCHASTIC_TOLERANCE {
                out.push(at(ViolationKind::RowSum(sum)));
            }
        }
    }
    out
}

#[inline]
fn best_row(model: &MdpModel, values: &[f64], state: usize) -> (f64, usize) {
    let gamma = model.discount;
    let mut best = f64::NEG_INFINITY;
    let mut best_decision = usize::MAX;
    for row in model.rows(state) {
        let q = row.reward + gamma * row.expectation(values);
        if q > best || (q == best && row.decision < best_decision) {
            best = q;
            best_decision = row.decision;
        }
    }
    (best, best_decision)
}

/// Bellman optimality backup at one state: the best one-step lookahead
/// value and the decision attaining it (lowest decision index on ties).
pub fn bellman_backup(model: &MdpModel, values: &ValueFunction, state: usize) -> Result<(f64, usize)> {
    model.check_state(state)?;
    if values.len() != model.num_states {
        return Err(Error::Length {
            field: "values".into(),
            expected: model.num_states,
            actual: values.len(),
        });
    }
    if model.rows(state).len() == 0 {
        return Err(Error::InvalidModel(vec![Violation {
            state: Some(state),
            decision: None,
            kind: ViolationKind::NoDecisions,
        }]));
    }
    Ok(best_row(model, &values.0, state))
}

/// One synchronous sweep of the optimality operator. Reads only `values`;
/// each state's new value is written independently.
pub fn bellman_sweep(model: &MdpModel, values: &ValueFunction) -> ValueFunction {
    let v = &values.0;
    ValueFunction(
        (0..model.num_states)
            .into_par_iter()
            .with_min_len(256)
            .map(|s| best_row(model, v, s).0)
            .collect(),
    )
}

fn require_valid(model: &MdpModel) -> Result<()> {
    let violations = validate_model(model);
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidModel(violations))
    }
}

fn first_non_finite(values: &[f64]) -> Option<usize> {
    values.iter().position(|v| !v.is_finite())
}

/// Value iteration from the zero function until the sup-norm difference of
/// successive iterates drops below `tolerance`.
pub fn value_iteration(
    model: &MdpModel,
    tolerance: f64,
    max_iterations: usize,
) -> Result<(ValueFunction, SolveReport)> {
    if !(tolerance > 0.0) {
        return Err(Error::Config(format!("tolerance must be positive, got {tolerance}")));
    }
    require_valid(model)?;

    let mut values = ValueFunction::zeros(model.num_states);
    let mut report = SolveReport {
        iterations: 0,
        final_residual: f64::INFINITY,
        converged: false,
    };
    while report.iterations < max_iterations {
        let next = bellman_sweep(model, &values);
        report.iterations += 1;
        if let Some(state) = first_non_finite(&next.0) {
            return Err(Error::NonFinite {
                state,
                iteration: report.iterations,
            });
        }
        report.final_residual = next.sup_distance(&values);
        values = next;
        if report.final_residual < tolerance {
            report.converged = true;
            break;
        }
    }
    Ok((values, report))
}

/// Greedy policy with respect to `optimal_values`.
pub fn extract_policy(model: &MdpModel, optimal_values: &ValueFunction) -> Result<Policy> {
    if optimal_values.len() != model.num_states {
        return Err(Error::Length {
            field: "values".into(),
            expected: model.num_states,
            actual: optimal_values.len(),
        });
    }
    require_valid(model)?;
    let v = &optimal_values.0;
    Ok(Policy(
        (0..model.num_states)
            .into_par_iter()
            .with_min_len(256)
            .map(|s| best_row(model, v, s).1)
            .collect(),
    ))
}

/// Fixed point of the policy-restricted Bellman operator, by successive
/// approximation from zero.
pub fn evaluate_policy(model: &MdpModel, policy: &Policy, tolerance: f64) -> Result<ValueFunction> {
    if policy.len() != model.num_states {
        return Err(Error::PolicyLength {
            policy: policy.len(),
            model: model.num_states,
        });
    }
    let rows: Vec<DecisionRow<'_>> = policy
        .0
        .iter()
        .enumerate()
        .map(|(s, &d)| model.decision_row(s, d))
        .collect::<Result<_>>()?;
    let gamma = model.discount;
    let mut values = vec![0.0; model.num_states];
    for _ in 0..DEFAULT_MAX_ITERATIONS * 100 {
        let next: Vec<f64> = rows
            .par_iter()
            .with_min_len(256)
            .map(|row| row.reward + gamma * row.expectation(&values))
            .collect();
        let residual = sup_distance(&next, &values);
        values = next;
        if residual < tolerance {
            break;
        }
    }
    Ok(ValueFunction(values))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_state(reward: f64, gamma: f64) -> MdpModel {
        let mut b = MdpBuilder::new();
        b.begin_state();
        b.add_decision(0, reward, &[(0, 1.0)]);
        b.build(gamma).unwrap()
    }

    /// s0 --d0--> s1 (R=1), s1 absorbing (R=2).
    fn chain(gamma: f64) -> MdpModel {
        let mut b = MdpBuilder::new();
        b.begin_state();
        b.add_decision(0, 1.0, &[(1, 1.0)]);
        b.begin_state();
        b.add_decision(0, 2.0, &[(1, 1.0)]);
        b.build(gamma).unwrap()
    }

    fn two_rewards(gamma: f64) -> MdpModel {
        let mut b = MdpBuilder::new();
        b.begin_state();
        b.add_decision(0, 1.0, &[(0, 0.5), (1, 0.5)]);
        b.add_decision(1, 3.0, &[(1, 1.0)]);
        b.begin_state();
        b.add_decision(0, 5.0, &[(0, 1.0)]);
        b.add_decision(1, 4.0, &[(0, 1.0)]);
        b.build(gamma).unwrap()
    }

    #[test]
    fn backup_single_state() {
        let m = single_state(1.0, 0.5);
        let (v, d) = bellman_backup(&m, &ValueFunction::zeros(1), 0).unwrap();
        assert_eq!((v, d), (1.0, 0));
    }

    #[test]
    fn backup_without_discount_is_reward_argmax() {
        let m = two_rewards(0.0);
        let v = ValueFunction(vec![123.0, -7.0]);
        assert_eq!(bellman_backup(&m, &v, 0).unwrap(), (3.0, 1));
        assert_eq!(bellman_backup(&m, &v, 1).unwrap(), (5.0, 0));
    }

    #[test]
    fn backup_chain_hand_value() {
        let m = chain(0.9);
        let (v, d) = bellman_backup(&m, &ValueFunction(vec![0.0, 20.0]), 0).unwrap();
        assert!((v - 19.0).abs() < 1e-12);
        assert_eq!(d, 0);
    }

    #[test]
    fn backup_rejects_bad_state() {
        let m = chain(0.9);
        assert!(matches!(
            bellman_backup(&m, &ValueFunction::zeros(2), 2),
            Err(Error::StateOutOfRange { .. })
        ));
    }

    #[test]
    fn ties_pick_lowest_decision() {
        let mut b = MdpBuilder::new();
        b.begin_state();
        b.add_decision(2, 1.0, &[(0, 1.0)]);
        b.add_decision(1, 1.0, &[(0, 1.0)]);
        b.add_decision(3, 1.0, &[(0, 1.0)]);
        let m = b.build(0.5).unwrap();
        let (v, _) = value_iteration(&m, 1e-12, 1000).unwrap();
        assert_eq!(extract_policy(&m, &v).unwrap().0, vec![1]);
    }

    #[test]
    fn single_state_value() {
        let (v, report) = value_iteration(&single_state(1.0, 0.5), 1e-9, 10_000).unwrap();
        assert!(report.converged);
        assert!((v.0[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn chain_values() {
        let m = chain(0.9);
        let (v, report) = value_iteration(&m, 1e-9, DEFAULT_MAX_ITERATIONS).unwrap();
        assert!(report.converged);
        assert!(report.final_residual < 1e-9);
        assert!((v.0[1] - 20.0).abs() < 1e-7);
        assert!((v.0[0] - 19.0).abs() < 1e-7);
        assert_eq!(extract_policy(&m, &v).unwrap().0, vec![0, 0]);
    }

    #[test]
    fn undiscounted_values_are_reward_maxima() {
        let m = two_rewards(0.0);
        let (v, report) = value_iteration(&m, 1e-12, 10).unwrap();
        assert!(report.converged);
        assert_eq!(v.0, vec![3.0, 5.0]);
        assert_eq!(extract_policy(&m, &v).unwrap().0, vec![1, 0]);
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let (_, report) = value_iteration(&chain(0.9), 1e-12, 5).unwrap();
        assert!(!report.converged);
        assert_eq!(report.iterations, 5);
    }

    #[test]
    fn invalid_model_is_refused() {
        let mut b = MdpBuilder::new();
        b.begin_state();
        b.add_decision(0, 1.0, &[(0, 0.9)]);
        let m = b.build(0.5).unwrap();
        assert!(matches!(value_iteration(&m, 1e-6, 10), Err(Error::InvalidModel(_))));
    }

    #[test]
    fn overflowing_rewards_are_reported() {
        let m = single_state(f64::MAX, 0.9);
        assert!(matches!(value_iteration(&m, 1e-6, 100), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn validate_well_formed() {
        assert!(validate_model(&two_rewards(0.9)).is_empty());
    }

    #[test]
    fn validate_row_sum() {
        let mut b = MdpBuilder::new();
        b.begin_state();
        b.add_decision(0, 1.0, &[(0, 0.9)]);
        let v = validate_model(&b.build(0.5).unwrap());
        assert_eq!(v.len(), 1);
        assert!(matches!(v[0].kind, ViolationKind::RowSum(s) if (s - 0.9).abs() < 1e-12));
        assert_eq!((v[0].state, v[0].decision), (Some(0), Some(0)));
    }

    #[test]
    fn validate_zero_reward() {
        let mut b = MdpBuilder::new();
        b.begin_state();
        b.add_decision(0, 1.0, &[(0, 1.0)]);
        b.add_decision(1, 0.0, &[(0, 1.0)]);
        let v = validate_model(&b.build(0.5).unwrap());
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, ViolationKind::NonPositiveReward(0.0));
        assert_eq!(v[0].decision, Some(1));
    }

    #[test]
    fn validate_other_checks() {
        let mut b = MdpBuilder::new();
        b.begin_state();
        b.add_decision(0, 1.0, &[(3, 1.5), (0, -0.5)]);
        b.begin_state();
        let v = validate_model(&b.build(1.0).unwrap());
        let kinds: Vec<_> = v.into_iter().map(|v| v.kind).collect();
        assert_eq!(
            kinds,
            vec![
                ViolationKind::DiscountOutOfRange(1.0),
                ViolationKind::SuccessorOutOfRange(3),
                ViolationKind::NegativeProbability(-0.5),
                ViolationKind::NoDecisions,
            ]
        );
    }

    #[test]
    fn evaluate_single_state() {
        let m = single_state(3.0, 0.25);
        let v = evaluate_policy(&m, &Policy(vec![0]), 1e-12).unwrap();
        assert!((v.0[0] - 4.0).abs() < 1e-11);
    }

    #[test]
    fn evaluate_optimal_matches_optimal_values() {
        let m = two_rewards(0.8);
        let tol = 1e-8;
        let (v, _) = value_iteration(&m, tol, DEFAULT_MAX_ITERATIONS).unwrap();
        let p = extract_policy(&m, &v).unwrap();
        let vp = evaluate_policy(&m, &p, tol).unwrap();
        assert!(vp.sup_distance(&v) < 10.0 * tol);
    }

    #[test]
    fn evaluate_rejects_unknown_decision() {
        let m = chain(0.5);
        assert!(matches!(
            evaluate_policy(&m, &Policy(vec![0, 4]), 1e-9),
            Err(Error::UnknownDecision { state: 1, decision: 4 })
        ));
    }

    #[test]
    fn builder_fragments_concatenate() {
        let whole = two_rewards(0.9);
        let mut a = MdpBuilder::new();
        a.begin_state();
        a.add_decision(0, 1.0, &[(0, 0.5), (1, 0.5)]);
        a.add_decision(1, 3.0, &[(1, 1.0)]);
        let mut b = MdpBuilder::new();
        b.begin_state();
        b.add_decision(0, 5.0, &[(0, 1.0)]);
        b.add_decision(1, 4.0, &[(0, 1.0)]);
        a.append(b);
        assert_eq!(a.build(0.9).unwrap(), whole);
    }
}
